//! Binary pattern encoders: the 1D LBP over projection signals, the
//! circular 2D LBP over temporal texture images, and their histograms.
//!
//! Both encoders set a bit when a neighbour is greater than or equal to the
//! centre. For the 1D mask the leftmost neighbour is bit 0; for the circle,
//! sample 0 lies at angle 0 (positive x) and samples proceed
//! counter-clockwise as seen on screen, i.e. towards negative y.

use serde::{Deserialize, Serialize};

use crate::dataset::Frame;
use crate::error::{Error, Result};

/// Linearly symmetric 1D mask of odd size 3, 5, 7 or 9.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub struct Mask1D(usize);

impl Mask1D {
    pub fn new(size: usize) -> Result<Self> {
        if matches!(size, 3 | 5 | 7 | 9) {
            Ok(Mask1D(size))
        } else {
            Err(Error::Config(format!(
                "mask size must be one of 3, 5, 7, 9, got {size}"
            )))
        }
    }

    pub fn size(self) -> usize {
        self.0
    }

    pub fn half(self) -> usize {
        self.0 / 2
    }

    pub fn neighbors(self) -> usize {
        self.0 - 1
    }

    pub fn bins(self) -> usize {
        1 << self.neighbors()
    }
}

impl TryFrom<usize> for Mask1D {
    type Error = Error;
    fn try_from(v: usize) -> Result<Self> {
        Mask1D::new(v)
    }
}

impl From<Mask1D> for usize {
    fn from(m: Mask1D) -> usize {
        m.0
    }
}

/// Neighbour count and radius of the circular operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LbpParams2D {
    pub neighbors: usize,
    pub radius: usize,
}

impl LbpParams2D {
    pub fn new(neighbors: usize, radius: usize) -> Result<Self> {
        let p = LbpParams2D { neighbors, radius };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(4..=16).contains(&self.neighbors) {
            return Err(Error::Config(format!(
                "LBP neighbour count must be in 4..=16, got {}",
                self.neighbors
            )));
        }
        if self.radius == 0 {
            return Err(Error::Config("LBP radius must be at least 1".into()));
        }
        Ok(())
    }

    pub fn bins(&self) -> usize {
        1 << self.neighbors
    }

    /// Smallest image side with at least one valid centre.
    pub fn min_side(&self) -> usize {
        2 * self.radius + 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bins: Vec<f64>,
    pub normalized: bool,
}

impl Histogram {
    pub fn zeros(len: usize) -> Self {
        Histogram {
            bins: vec![0.0; len],
            normalized: false,
        }
    }

    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.bins.iter().sum()
    }

    pub fn add(&mut self, other: &Histogram) {
        assert_eq!(self.len(), other.len(), "histogram lengths differ");
        for (a, b) in self.bins.iter_mut().zip(&other.bins) {
            *a += b;
        }
    }

    /// Divides by the bin sum; an all-zero histogram stays zero.
    pub fn normalize(&self) -> Histogram {
        let total = self.total();
        let bins = if total > 0.0 {
            self.bins.iter().map(|b| b / total).collect()
        } else {
            self.bins.clone()
        };
        Histogram {
            bins,
            normalized: true,
        }
    }
}

/// 1D LBP code of `signal[center]` under `mask`.
pub fn onedlbp_code(signal: &[f64], center: usize, mask: Mask1D) -> Result<u32> {
    let h = mask.half();
    if center < h || center + h >= signal.len() {
        return Err(Error::InvalidInput(format!(
            "1D LBP centre {center} too close to the ends of a length-{} signal for mask {}",
            signal.len(),
            mask.size()
        )));
    }
    Ok(code_1d(&signal[center - h..=center + h]))
}

#[inline]
fn code_1d(window: &[f64]) -> u32 {
    let h = window.len() / 2;
    let c = window[h];
    let mut code = 0u32;
    let mut bit = 0;
    for (i, &v) in window.iter().enumerate() {
        if i == h {
            continue;
        }
        code |= u32::from(v >= c) << bit;
        bit += 1;
    }
    code
}

/// Raw (unnormalized) histogram of 1D LBP codes over every valid centre.
pub fn onedlbp_histogram(signal: &[f64], mask: Mask1D) -> Result<Histogram> {
    let mut hist = Histogram::zeros(mask.bins());
    accumulate_1d(&mut hist, signal, mask)?;
    Ok(hist)
}

pub(crate) fn accumulate_1d(hist: &mut Histogram, signal: &[f64], mask: Mask1D) -> Result<()> {
    if signal.len() < mask.size() {
        return Err(Error::InvalidInput(format!(
            "signal of length {} is shorter than mask {}",
            signal.len(),
            mask.size()
        )));
    }
    for window in signal.windows(mask.size()) {
        hist.bins[code_1d(window) as usize] += 1.0;
    }
    Ok(())
}

/// Offsets of the circle samples, snapped to the integer grid where the
/// trigonometry lands within rounding of it.
fn circle_offsets(params: LbpParams2D) -> Vec<(f64, f64)> {
    let r = params.radius as f64;
    (0..params.neighbors)
        .map(|m| {
            let angle = 2.0 * std::f64::consts::PI * m as f64 / params.neighbors as f64;
            let snap = |v: f64| {
                let rounded = v.round();
                if (v - rounded).abs() < 1e-9 {
                    rounded
                } else {
                    v
                }
            };
            (snap(r * angle.cos()), snap(-r * angle.sin()))
        })
        .collect()
}

/// Bilinear sample plan for one circle offset: the integer corner offset and
/// the four corner weights.
#[derive(Debug, Clone, Copy)]
struct Sample {
    dx: isize,
    dy: isize,
    w: [f64; 4],
}

fn sample_plan(params: LbpParams2D) -> Vec<Sample> {
    circle_offsets(params)
        .into_iter()
        .map(|(ox, oy)| {
            let (fx, fy) = (ox.floor(), oy.floor());
            let (tx, ty) = (ox - fx, oy - fy);
            Sample {
                dx: fx as isize,
                dy: fy as isize,
                w: [
                    (1.0 - tx) * (1.0 - ty),
                    tx * (1.0 - ty),
                    (1.0 - tx) * ty,
                    tx * ty,
                ],
            }
        })
        .collect()
}

/// Interpolated sample minus the centre value `c`. Interpolating the
/// differences keeps flat neighbourhoods exactly at zero.
#[inline]
fn sample_offset(img: &Frame, x: usize, y: usize, c: f64, s: &Sample) -> f64 {
    let x0 = (x as isize + s.dx) as usize;
    let y0 = (y as isize + s.dy) as usize;
    let mut v = s.w[0] * (img.get(x0, y0) - c);
    if s.w[1] != 0.0 {
        v += s.w[1] * (img.get(x0 + 1, y0) - c);
    }
    if s.w[2] != 0.0 {
        v += s.w[2] * (img.get(x0, y0 + 1) - c);
    }
    if s.w[3] != 0.0 {
        v += s.w[3] * (img.get(x0 + 1, y0 + 1) - c);
    }
    v
}

#[inline]
fn code_2d(img: &Frame, x: usize, y: usize, plan: &[Sample]) -> u32 {
    let c = img.get(x, y);
    plan.iter().enumerate().fold(0u32, |code, (m, s)| {
        code | (u32::from(sample_offset(img, x, y, c, s) >= 0.0) << m)
    })
}

/// Circular LBP code of `image` at `(x, y)`.
pub fn lbp2d_code(image: &Frame, x: usize, y: usize, params: LbpParams2D) -> Result<u32> {
    params.validate()?;
    let r = params.radius;
    if x < r || y < r || x + r >= image.width() || y + r >= image.height() {
        return Err(Error::InvalidInput(format!(
            "LBP centre ({x}, {y}) is within radius {r} of the border of a {}x{} image",
            image.width(),
            image.height()
        )));
    }
    Ok(code_2d(image, x, y, &sample_plan(params)))
}

/// Raw histogram of circular LBP codes over all interior centres.
pub fn lbp2d_histogram(image: &Frame, params: LbpParams2D) -> Result<Histogram> {
    params.validate()?;
    let r = params.radius;
    if image.width() < params.min_side() || image.height() < params.min_side() {
        return Err(Error::InvalidInput(format!(
            "a {}x{} image is too small for LBP radius {r}",
            image.width(),
            image.height()
        )));
    }
    let plan = sample_plan(params);
    let mut hist = Histogram::zeros(params.bins());
    for y in r..image.height() - r {
        for x in r..image.width() - r {
            hist.bins[code_2d(image, x, y, &plan) as usize] += 1.0;
        }
    }
    Ok(hist)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn mask_sizes() {
        assert!(Mask1D::new(4).is_err());
        assert!(Mask1D::new(11).is_err());
        assert_eq!(Mask1D::new(9).unwrap().bins(), 256);
    }

    #[test]
    fn constant_signal_sets_all_bits() {
        for w in [3, 5, 7, 9] {
            let m = Mask1D::new(w).unwrap();
            let s = vec![4.0; 12];
            assert_eq!(onedlbp_code(&s, w / 2, m).unwrap(), (1 << (w - 1)) - 1);
        }
    }

    #[test]
    fn bit_order_is_left_to_right() {
        let m = Mask1D::new(3).unwrap();
        assert_eq!(onedlbp_code(&[1.0, 2.0, 3.0], 1, m).unwrap(), 2);
        assert_eq!(onedlbp_code(&[3.0, 2.0, 1.0], 1, m).unwrap(), 1);
        assert!(onedlbp_code(&[1.0, 2.0, 3.0], 0, m).is_err());
        assert!(onedlbp_code(&[1.0, 2.0, 3.0], 2, m).is_err());
    }

    #[test]
    fn constant_signal_histogram() {
        let h = onedlbp_histogram(&[1.0; 20], Mask1D::new(9).unwrap()).unwrap();
        assert_eq!(h.bins[255], 12.0);
        assert_eq!(h.total(), 12.0);
        let h = onedlbp_histogram(&[0.0, 1.0, 2.0, 3.0, 4.0], Mask1D::new(5).unwrap()).unwrap();
        assert_eq!(h.total(), 1.0);
        assert!(onedlbp_histogram(&[0.0; 4], Mask1D::new(5).unwrap()).is_err());
    }

    #[test]
    fn constant_image_codes() {
        let img = Frame::filled(10, 10, 7.0);
        let p = LbpParams2D::new(8, 3).unwrap();
        assert_eq!(lbp2d_code(&img, 5, 5, p).unwrap(), 255);
        let h = lbp2d_histogram(&img, p).unwrap();
        assert_eq!(h.bins[255], 16.0);
        assert_eq!(h.total(), 16.0);
        assert_eq!(lbp2d_histogram(&Frame::filled(7, 7, 0.0), p).unwrap().total(), 1.0);
        assert!(lbp2d_histogram(&Frame::filled(6, 7, 0.0), p).is_err());
        assert!(lbp2d_code(&img, 2, 5, p).is_err());
    }

    #[test]
    fn bright_center_gives_zero_code() {
        let img = Frame::from_fn(3, 3, |x, y| if (x, y) == (1, 1) { 10.0 } else { 0.0 });
        assert_eq!(lbp2d_code(&img, 1, 1, LbpParams2D::new(8, 1).unwrap()).unwrap(), 0);
    }

    #[test]
    fn sample_zero_is_positive_x_then_counter_clockwise() {
        // only the pixel right of centre is bright: bit 0
        let lit = |px: (usize, usize)| {
            Frame::from_fn(3, 3, move |x, y| match (x, y) {
                (1, 1) => 0.5,
                p if p == px => 1.0,
                _ => 0.0,
            })
        };
        let p = LbpParams2D::new(4, 1).unwrap();
        assert_eq!(lbp2d_code(&lit((2, 1)), 1, 1, p).unwrap(), 0b0001);
        // pixel above centre: bit 1
        let img = lit((1, 0));
        assert_eq!(lbp2d_code(&img, 1, 1, p).unwrap(), 0b0010);
    }

    #[test]
    fn normalize_cases() {
        let h = Histogram { bins: vec![2.0, 2.0, 0.0, 0.0], normalized: false };
        assert_eq!(h.normalize().bins, vec![0.5, 0.5, 0.0, 0.0]);
        let z = Histogram::zeros(3).normalize();
        assert_eq!(z.bins, vec![0.0; 3]);
        assert!(z.normalized);
        let n = h.normalize();
        assert_eq!(n.normalize(), n);
    }

    proptest! {
        #[test]
        fn codes_stay_in_range(sig in prop::collection::vec(-5.0f64..5.0, 9..40), w in prop::sample::select(vec![3usize, 5, 7, 9])) {
            let m = Mask1D::new(w).unwrap();
            let h = onedlbp_histogram(&sig, m).unwrap();
            prop_assert_eq!(h.len(), m.bins());
            prop_assert_eq!(h.total(), (sig.len() - w + 1) as f64);
        }

        #[test]
        fn affine_maps_preserve_1d_codes(sig in prop::collection::vec(-5.0f64..5.0, 9..30), a in 0.1f64..10.0, b in -10.0f64..10.0) {
            let m = Mask1D::new(9).unwrap();
            let mapped: Vec<f64> = sig.iter().map(|v| a * v + b).collect();
            // compare on values where the affine map is exact enough to keep order
            for c in 4..sig.len() - 4 {
                let window = &sig[c - 4..=c + 4];
                let gaps_ok = window.iter().all(|v| v == &sig[c] || (v - sig[c]).abs() > 1e-9);
                if gaps_ok {
                    prop_assert_eq!(onedlbp_code(&sig, c, m).unwrap(), onedlbp_code(&mapped, c, m).unwrap());
                }
            }
        }

        #[test]
        fn lbp2d_histogram_counts_interior(w in 7usize..20, h in 7usize..20, r in 1usize..4, seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let img = Frame::from_fn(w, h, |_, _| rng.random_range(0.0..1.0));
            let p = LbpParams2D::new(8, r).unwrap();
            let hist = lbp2d_histogram(&img, p).unwrap();
            prop_assert_eq!(hist.total(), ((w - 2 * r) * (h - 2 * r)) as f64);
        }
    }
}
