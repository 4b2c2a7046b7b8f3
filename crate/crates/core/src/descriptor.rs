//! Clip descriptor assembly: block division, spatial 1D LBP histograms of the
//! per-frame projections, temporal texture images with optional temporal
//! normalization, and circular LBP histograms over those images.

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{Frame, VideoClip};
use crate::encoding::{self, Histogram, LbpParams2D, Mask1D};
use crate::error::{Error, Result};
use crate::projection::{self, ProjectionSource, Region};
use crate::rpca::SparseDecomposition;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Plane {
    /// 1D LBP of horizontal projections, accumulated over frames.
    XYH,
    /// 1D LBP of vertical projections, accumulated over frames.
    XYV,
    /// 2D LBP of the image whose columns are vertical projections over time.
    XT,
    /// 2D LBP of the image whose columns are horizontal projections over time.
    YT,
}

impl Plane {
    pub const ALL: [Plane; 4] = [Plane::XYH, Plane::XYV, Plane::XT, Plane::YT];

    pub fn as_str(self) -> &'static str {
        match self {
            Plane::XYH => "XYH",
            Plane::XYV => "XYV",
            Plane::XT => "XT",
            Plane::YT => "YT",
        }
    }

    pub fn parse(s: &str) -> Option<Plane> {
        Plane::ALL.into_iter().find(|p| p.as_str() == s)
    }
}

impl fmt::Display for Plane {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DescriptorConfig {
    /// Block rows.
    pub blocks_m: usize,
    /// Block columns.
    pub blocks_n: usize,
    pub mask: Mask1D,
    pub neighbors: usize,
    pub radius: usize,
    /// Temporal normalization length; 0 keeps the clip length.
    pub temporal_length: usize,
    pub projection: ProjectionSource,
}

impl Default for DescriptorConfig {
    fn default() -> Self {
        DescriptorConfig {
            blocks_m: 7,
            blocks_n: 3,
            mask: Mask1D::new(9).unwrap(),
            neighbors: 8,
            radius: 3,
            temporal_length: 25,
            projection: ProjectionSource::Improved,
        }
    }
}

impl DescriptorConfig {
    pub fn lbp(&self) -> LbpParams2D {
        LbpParams2D {
            neighbors: self.neighbors,
            radius: self.radius,
        }
    }

    pub fn n_groups(&self) -> usize {
        self.blocks_m * self.blocks_n * 4
    }

    pub fn group_len(&self, plane: Plane) -> usize {
        match plane {
            Plane::XYH | Plane::XYV => self.mask.bins(),
            Plane::XT | Plane::YT => self.lbp().bins(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.blocks_m == 0 || self.blocks_n == 0 {
            return Err(Error::Config("block grid must be at least 1x1".into()));
        }
        self.lbp().validate()?;
        if self.temporal_length != 0 && self.temporal_length < self.lbp().min_side() {
            return Err(Error::Config(format!(
                "temporal_length must be 0 or at least {} for radius {}",
                self.lbp().min_side(),
                self.radius
            )));
        }
        Ok(())
    }

    /// Checks the config against a clip shape.
    pub fn validate_for(&self, width: usize, height: usize, frames: usize) -> Result<()> {
        self.validate()?;
        block_regions(width, height, self.blocks_m, self.blocks_n, self.mask)?;
        let min_side = self.lbp().min_side();
        let (bw, bh) = (width / self.blocks_n, height / self.blocks_m);
        if bw < min_side || bh < min_side {
            return Err(Error::Config(format!(
                "blocks of {bw}x{bh} are smaller than the LBP support {min_side}"
            )));
        }
        let usable = match self.projection {
            ProjectionSource::Difference => frames.saturating_sub(1),
            _ => frames,
        };
        if usable < 2 {
            return Err(Error::InvalidInput(format!(
                "clip has {frames} frames; temporal planes need at least 2"
            )));
        }
        if self.temporal_length == 0 && usable < min_side {
            return Err(Error::InvalidInput(format!(
                "clip has {usable} usable frames, fewer than the LBP support {min_side}; enable temporal normalization"
            )));
        }
        Ok(())
    }

    /// Short stable hash of every parameter that shapes a descriptor.
    pub fn fingerprint(&self) -> String {
        fingerprint_of(&self.canonical())
    }

    pub(crate) fn canonical(&self) -> String {
        format!(
            "blocks={}x{};W={};M={};R={};T={};source={}",
            self.blocks_m,
            self.blocks_n,
            self.mask.size(),
            self.neighbors,
            self.radius,
            self.temporal_length,
            self.projection.as_str()
        )
    }
}

pub(crate) fn fingerprint_of(text: &str) -> String {
    let digest = Sha256::digest(text.as_bytes());
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// Divides a frame into `m` rows by `n` columns of blocks in row-major order.
/// Remainder pixels go to the last block row and column.
pub fn block_regions(
    width: usize,
    height: usize,
    m: usize,
    n: usize,
    mask: Mask1D,
) -> Result<Vec<Region>> {
    if m == 0 || n == 0 {
        return Err(Error::Config("block grid must be at least 1x1".into()));
    }
    let (bw, bh) = (width / n, height / m);
    if bw < mask.size() || bh < mask.size() {
        return Err(Error::Config(format!(
            "a {width}x{height} frame split {m}x{n} gives {bw}x{bh} blocks, smaller than mask {}",
            mask.size()
        )));
    }
    let mut out = Vec::with_capacity(m * n);
    for i in 0..m {
        let (y1, y2) = (i * bh, if i + 1 == m { height } else { (i + 1) * bh });
        for j in 0..n {
            let (x1, x2) = (j * bw, if j + 1 == n { width } else { (j + 1) * bw });
            out.push(Region { x1, x2, y1, y2 });
        }
    }
    Ok(out)
}

/// Normalized `(f_XYH, f_XYV)` of a region: the 1D LBP histograms of each
/// frame's projections, summed over frames.
pub fn spatial_histograms(
    frames: &[Frame],
    region: Region,
    mask: Mask1D,
) -> Result<(Histogram, Histogram)> {
    let mut h_hist = Histogram::zeros(mask.bins());
    let mut v_hist = Histogram::zeros(mask.bins());
    for f in frames {
        let h = projection::horizontal_projection(f, region)?;
        let v = projection::vertical_projection(f, region)?;
        encoding::accumulate_1d(&mut h_hist, &h.values, mask)?;
        encoding::accumulate_1d(&mut v_hist, &v.values, mask)?;
    }
    Ok((h_hist.normalize(), v_hist.normalize()))
}

/// A space-by-time image: row = position along the projection, column = time.
#[derive(Debug, Clone, PartialEq)]
pub struct TemporalTextureImage {
    pub values: Frame,
    pub plane: Plane,
    pub block_index: usize,
}

impl TemporalTextureImage {
    pub fn time_len(&self) -> usize {
        self.values.width()
    }

    pub fn space_len(&self) -> usize {
        self.values.height()
    }
}

/// Stacks per-frame projections into a texture image: for `YT` column `t` is
/// `H_t`, for `XT` it is `V_t`.
pub fn temporal_texture(
    frames: &[Frame],
    region: Region,
    plane: Plane,
    block_index: usize,
) -> Result<TemporalTextureImage> {
    if frames.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "temporal texture needs at least 2 frames, got {}",
            frames.len()
        )));
    }
    let columns = frames
        .iter()
        .map(|f| match plane {
            Plane::YT => projection::horizontal_projection(f, region).map(|p| p.values),
            Plane::XT => projection::vertical_projection(f, region).map(|p| p.values),
            other => Err(Error::InvalidInput(format!(
                "{other} is not a temporal plane"
            ))),
        })
        .collect::<Result<Vec<_>>>()?;
    let rows = columns[0].len();
    let values = Frame::from_fn(columns.len(), rows, |t, s| columns[t][s]);
    Ok(TemporalTextureImage {
        values,
        plane,
        block_index,
    })
}

/// Resamples every row to `target` columns by linear interpolation, mapping
/// `[0, t - 1]` onto `[0, target - 1]`.
pub fn temporal_normalize(image: &TemporalTextureImage, target: usize) -> Result<TemporalTextureImage> {
    let src = image.time_len();
    if src < 2 {
        return Err(Error::InvalidInput(
            "temporal normalization needs at least 2 source columns".into(),
        ));
    }
    if target < 2 {
        return Err(Error::InvalidInput(format!(
            "temporal normalization length must be at least 2, got {target}"
        )));
    }
    let scale = (src - 1) as f64 / (target - 1) as f64;
    let taps: Vec<(usize, f64)> = (0..target)
        .map(|j| {
            let pos = j as f64 * scale;
            let left = (pos.floor() as usize).min(src - 2);
            (left, pos - left as f64)
        })
        .collect();
    let values = Frame::from_fn(target, image.space_len(), |j, s| {
        let (left, frac) = taps[j];
        let a = image.values.get(left, s);
        let b = image.values.get(left + 1, s);
        if frac == 0.0 {
            a
        } else if frac == 1.0 {
            b
        } else {
            a + (b - a) * frac
        }
    });
    Ok(TemporalTextureImage {
        values,
        plane: image.plane,
        block_index: image.block_index,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupFeature {
    pub block_index: usize,
    pub plane: Plane,
    pub histogram: Histogram,
}

/// Ordered group histograms of a clip: block-major, planes XYH, XYV, XT, YT.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipDescriptor {
    pub groups: Vec<GroupFeature>,
    pub fingerprint: String,
}

impl ClipDescriptor {
    pub fn n_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn group(&self, r: usize) -> &Histogram {
        &self.groups[r].histogram
    }

    /// Concatenation of all group histograms.
    pub fn flatten(&self) -> Vec<f64> {
        self.groups
            .iter()
            .flat_map(|g| g.histogram.bins.iter().copied())
            .collect()
    }
}

/// Descriptor of a clip from precomputed source frames (sparse parts, raw
/// frames or differences, per `cfg.projection`).
pub fn describe_frames(frames: &[Frame], cfg: &DescriptorConfig) -> Result<ClipDescriptor> {
    let first = frames
        .first()
        .ok_or_else(|| Error::InvalidInput("no frames to describe".into()))?;
    let (w, h) = (first.width(), first.height());
    let frames_for_check = match cfg.projection {
        ProjectionSource::Difference => frames.len() + 1,
        _ => frames.len(),
    };
    cfg.validate_for(w, h, frames_for_check)?;
    let regions = block_regions(w, h, cfg.blocks_m, cfg.blocks_n, cfg.mask)?;
    let lbp = cfg.lbp();
    let mut groups = Vec::with_capacity(cfg.n_groups());
    for (k, &region) in regions.iter().enumerate() {
        let (fh, fv) = spatial_histograms(frames, region, cfg.mask)
            .map_err(|e| e.context(format_args!("block {k} plane XYH/XYV")))?;
        groups.push(GroupFeature {
            block_index: k,
            plane: Plane::XYH,
            histogram: fh,
        });
        groups.push(GroupFeature {
            block_index: k,
            plane: Plane::XYV,
            histogram: fv,
        });
        for plane in [Plane::XT, Plane::YT] {
            let hist = temporal_histogram(frames, region, plane, k, cfg.temporal_length, lbp)
                .map_err(|e| e.context(format_args!("block {k} plane {plane}")))?;
            groups.push(GroupFeature {
                block_index: k,
                plane,
                histogram: hist,
            });
        }
    }
    Ok(ClipDescriptor {
        groups,
        fingerprint: cfg.fingerprint(),
    })
}

fn temporal_histogram(
    frames: &[Frame],
    region: Region,
    plane: Plane,
    block_index: usize,
    temporal_length: usize,
    lbp: LbpParams2D,
) -> Result<Histogram> {
    let mut image = temporal_texture(frames, region, plane, block_index)?;
    if temporal_length > 0 {
        image = temporal_normalize(&image, temporal_length)?;
    }
    Ok(encoding::lbp2d_histogram(&image.values, lbp)?.normalize())
}

/// Full descriptor of a clip. `decomposition` is required for improved
/// projections and ignored otherwise.
pub fn extract_descriptor(
    clip: &VideoClip,
    decomposition: Option<&SparseDecomposition>,
    cfg: &DescriptorConfig,
) -> Result<ClipDescriptor> {
    let frames = projection::source_frames(clip, decomposition, cfg.projection)
        .map_err(|e| e.context(&clip.clip_id))?;
    describe_frames(&frames, cfg).map_err(|e| e.context(&clip.clip_id))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn mask(w: usize) -> Mask1D {
        Mask1D::new(w).unwrap()
    }

    fn random_frames(n: usize, w: usize, h: usize, seed: u64) -> Vec<Frame> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| Frame::from_fn(w, h, |_, _| rng.random_range(-1.0..1.0)))
            .collect()
    }

    #[test]
    fn exact_block_division() {
        let r = block_regions(64, 64, 2, 2, mask(9)).unwrap();
        assert_eq!(r.len(), 4);
        assert!(r.iter().all(|b| b.width() == 32 && b.height() == 32));
        assert_eq!(r[1], Region { x1: 32, x2: 64, y1: 0, y2: 32 });
    }

    #[test]
    fn remainder_goes_to_last_block_row() {
        let r = block_regions(64, 65, 2, 2, mask(9)).unwrap();
        assert_eq!(r[0].height(), 32);
        assert_eq!(r[2].height(), 33);
        assert_eq!(r[3].height(), 33);
    }

    #[test]
    fn blocks_smaller_than_mask_are_rejected() {
        assert!(block_regions(16, 64, 1, 2, mask(9)).is_err());
    }

    proptest! {
        #[test]
        fn blocks_partition_the_frame(w in 9usize..80, h in 9usize..80, m in 1usize..5, n in 1usize..5) {
            prop_assume!(w / n >= 3 && h / m >= 3);
            let regions = block_regions(w, h, m, n, mask(3)).unwrap();
            let mut cover = vec![0u8; w * h];
            for r in &regions {
                for y in r.y1..r.y2 { for x in r.x1..r.x2 { cover[y * w + x] += 1; } }
            }
            prop_assert!(cover.iter().all(|&c| c == 1));
        }
    }

    #[test]
    fn zero_frames_give_constant_codes() {
        let frames = vec![Frame::filled(20, 20, 0.0); 10];
        let (fh, fv) = spatial_histograms(&frames, Region::full(20, 20), mask(9)).unwrap();
        assert_eq!(fh.bins[255], 1.0);
        assert_eq!(fv.bins[255], 1.0);
    }

    #[test]
    fn single_frame_spatial_histogram() {
        let frames = random_frames(1, 15, 12, 1);
        let region = Region::full(15, 12);
        let (fh, _) = spatial_histograms(&frames, region, mask(5)).unwrap();
        let h = projection::horizontal_projection(&frames[0], region).unwrap();
        let expected = encoding::onedlbp_histogram(&h.values, mask(5)).unwrap().normalize();
        assert_eq!(fh, expected);
    }

    #[test]
    fn spatial_accumulation_matches_per_frame_sum() {
        let frames = random_frames(7, 20, 18, 2);
        let region = Region::new(2, 19, 1, 17).unwrap();
        let (fh, fv) = spatial_histograms(&frames, region, mask(7)).unwrap();
        let mut h_sum = Histogram::zeros(64);
        let mut v_sum = Histogram::zeros(64);
        for f in &frames {
            let h = projection::horizontal_projection(f, region).unwrap();
            let v = projection::vertical_projection(f, region).unwrap();
            // naive per-position codes
            for c in 3..h.values.len() - 3 {
                h_sum.bins[encoding::onedlbp_code(&h.values, c, mask(7)).unwrap() as usize] += 1.0;
            }
            for c in 3..v.values.len() - 3 {
                v_sum.bins[encoding::onedlbp_code(&v.values, c, mask(7)).unwrap() as usize] += 1.0;
            }
        }
        assert_eq!(fh, h_sum.normalize());
        assert_eq!(fv, v_sum.normalize());
    }

    #[test]
    fn texture_shape_and_columns() {
        let frames = random_frames(12, 40, 30, 3);
        let region = Region::full(40, 30);
        let yt = temporal_texture(&frames, region, Plane::YT, 0).unwrap();
        assert_eq!((yt.space_len(), yt.time_len()), (30, 12));
        for (t, f) in frames.iter().enumerate() {
            let h = projection::horizontal_projection(f, region).unwrap();
            for (s, v) in h.values.iter().enumerate() {
                assert_eq!(yt.values.get(t, s), *v);
            }
        }
        let xt = temporal_texture(&frames, region, Plane::XT, 0).unwrap();
        assert_eq!((xt.space_len(), xt.time_len()), (40, 12));
        let zero = temporal_texture(&vec![Frame::filled(5, 5, 0.0); 3], Region::full(5, 5), Plane::YT, 0).unwrap();
        assert!(zero.values.as_slice().iter().all(|&v| v == 0.0));
        assert!(temporal_texture(&frames[..1], region, Plane::YT, 0).is_err());
        assert!(temporal_texture(&frames, region, Plane::XYH, 0).is_err());
    }

    fn texture(rows: Vec<Vec<f64>>) -> TemporalTextureImage {
        let (h, w) = (rows.len(), rows[0].len());
        TemporalTextureImage {
            values: Frame::from_fn(w, h, |x, y| rows[y][x]),
            plane: Plane::YT,
            block_index: 0,
        }
    }

    #[test]
    fn temporal_normalize_cases() {
        let ramp = temporal_normalize(&texture(vec![vec![0.0, 1.0]]), 3).unwrap();
        assert_eq!(ramp.values.as_slice(), &[0.0, 0.5, 1.0]);

        let frames = random_frames(1, 9, 4, 4);
        let img = TemporalTextureImage { values: frames[0].clone(), plane: Plane::XT, block_index: 2 };
        let same = temporal_normalize(&img, 9).unwrap();
        for (a, b) in same.values.as_slice().iter().zip(img.values.as_slice()) {
            assert!((a - b).abs() <= 1e-12);
        }
        assert_eq!(same.block_index, 2);

        let flat = temporal_normalize(&texture(vec![vec![2.5; 6]; 3]), 25).unwrap();
        assert_eq!((flat.space_len(), flat.time_len()), (3, 25));
        assert!(flat.values.as_slice().iter().all(|&v| v == 2.5));

        assert!(temporal_normalize(&texture(vec![vec![1.0]]), 5).is_err());
        assert!(temporal_normalize(&texture(vec![vec![1.0, 2.0]]), 1).is_err());
    }

    fn zero_clip(w: usize, h: usize, n: usize) -> (VideoClip, SparseDecomposition) {
        let clip = VideoClip::new("z", "s", 0, vec![Frame::filled(w, h, 80.0); n]).unwrap();
        let dec = SparseDecomposition {
            low_rank: nalgebra::DMatrix::from_element(w * h, n, 80.0),
            sparse: nalgebra::DMatrix::zeros(w * h, n),
            width: w,
            height: h,
            iterations: 0,
            residual: 0.0,
            converged: true,
        };
        (clip, dec)
    }

    #[test]
    fn single_block_zero_clip_descriptor() {
        let (clip, dec) = zero_clip(24, 24, 10);
        let cfg = DescriptorConfig {
            blocks_m: 1,
            blocks_n: 1,
            ..DescriptorConfig::default()
        };
        let d = extract_descriptor(&clip, Some(&dec), &cfg).unwrap();
        assert_eq!(d.n_groups(), 4);
        let planes: Vec<Plane> = d.groups.iter().map(|g| g.plane).collect();
        assert_eq!(planes, Plane::ALL);
        assert_eq!(d.group(0).bins[255], 1.0);
        assert_eq!(d.group(1).bins[255], 1.0);
        assert_eq!(d.group(2).bins[255], 1.0);
        assert_eq!(d.group(3).bins[255], 1.0);
    }

    #[test]
    fn descriptor_shape_and_determinism() {
        let frames = random_frames(14, 40, 42, 5);
        for (m, n, t) in [(2, 2, 0), (3, 1, 25), (1, 4, 9)] {
            let cfg = DescriptorConfig {
                blocks_m: m,
                blocks_n: n,
                mask: mask(7),
                temporal_length: t,
                ..DescriptorConfig::default()
            };
            let a = describe_frames(&frames, &cfg).unwrap();
            assert_eq!(a.n_groups(), m * n * 4);
            for (i, g) in a.groups.iter().enumerate() {
                assert_eq!(g.block_index, i / 4);
                assert_eq!(g.plane, Plane::ALL[i % 4]);
                assert_eq!(g.histogram.len(), cfg.group_len(g.plane));
                assert!(g.histogram.normalized);
                assert!((g.histogram.total() - 1.0).abs() < 1e-9);
            }
            assert_eq!(a, describe_frames(&frames, &cfg).unwrap());
        }
    }

    #[test]
    fn original_projection_path_uses_raw_frames() {
        let frames = random_frames(9, 30, 30, 6);
        let clip = VideoClip::new("c", "s", 0, frames.clone()).unwrap();
        let cfg = DescriptorConfig {
            blocks_m: 2,
            blocks_n: 2,
            projection: ProjectionSource::Original,
            ..DescriptorConfig::default()
        };
        let d = extract_descriptor(&clip, None, &cfg).unwrap();
        assert_eq!(d, describe_frames(&frames, &cfg).unwrap());
        let improved = DescriptorConfig { projection: ProjectionSource::Improved, ..cfg };
        assert!(extract_descriptor(&clip, None, &improved).is_err());
    }

    #[test]
    fn config_validation() {
        let short = DescriptorConfig { temporal_length: 5, ..DescriptorConfig::default() };
        assert!(short.validate().is_err());
        let cfg = DescriptorConfig { temporal_length: 0, blocks_m: 1, blocks_n: 1, ..DescriptorConfig::default() };
        assert!(cfg.validate_for(30, 30, 5).is_err());
        assert!(cfg.validate_for(30, 30, 7).is_ok());
        assert_ne!(cfg.fingerprint(), DescriptorConfig::default().fingerprint());
    }
}
