//! Video clips, dataset indices, leave-one-subject-out splits and the
//! synthetic benchmark generator.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;

/// A real-valued matrix stored row-major, used for video frames, sparse
/// motion frames and temporal texture images alike.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Frame {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidInput(format!(
                "frame dimensions must be positive, got {width}x{height}"
            )));
        }
        if data.len() != width * height {
            return Err(Error::InvalidInput(format!(
                "frame of {width}x{height} needs {} values, got {}",
                width * height,
                data.len()
            )));
        }
        Ok(Frame {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        assert!(width > 0 && height > 0, "empty frame");
        Frame {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(width > 0 && height > 0, "empty frame");
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Frame {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: f64) {
        self.data[y * self.width + x] = value;
    }

    pub fn row(&self, y: usize) -> &[f64] {
        &self.data[y * self.width..(y + 1) * self.width]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn transpose(&self) -> Frame {
        Frame::from_fn(self.height, self.width, |x, y| self.get(y, x))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Frame {
        Frame {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}

/// An ordered sequence of equally sized grayscale frames of one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoClip {
    pub clip_id: String,
    pub subject_id: String,
    pub label: usize,
    frames: Vec<Frame>,
}

impl VideoClip {
    pub fn new(
        clip_id: impl Into<String>,
        subject_id: impl Into<String>,
        label: usize,
        frames: Vec<Frame>,
    ) -> Result<Self> {
        let clip_id = clip_id.into();
        let first = frames
            .first()
            .ok_or_else(|| Error::clip(&clip_id, "clip has no frames"))?;
        let (w, h) = (first.width(), first.height());
        if let Some((t, f)) = frames
            .iter()
            .enumerate()
            .find(|(_, f)| f.width() != w || f.height() != h)
        {
            return Err(Error::clip(
                &clip_id,
                format!(
                    "frame {t} is {}x{} but frame 0 is {w}x{h}",
                    f.width(),
                    f.height()
                ),
            ));
        }
        Ok(VideoClip {
            clip_id,
            subject_id: subject_id.into(),
            label,
            frames,
        })
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn width(&self) -> usize {
        self.frames[0].width()
    }

    pub fn height(&self) -> usize {
        self.frames[0].height()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub clip_id: String,
    /// Clip directory, relative to the index file unless absolute.
    pub path: PathBuf,
    pub subject: String,
    pub label: usize,
}

/// The list of clips in a dataset with their subjects and class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetIndex {
    pub entries: Vec<IndexEntry>,
    /// Class names indexed by dense label.
    pub class_names: Vec<String>,
    /// Directory that relative clip paths resolve against.
    pub root: PathBuf,
}

#[derive(Debug, Deserialize, Serialize)]
struct IndexRow {
    clip_id: String,
    path: String,
    subject: String,
    label: String,
}

const INDEX_HEADER: [&str; 4] = ["clip_id", "path", "subject", "label"];

impl DatasetIndex {
    pub fn new(entries: Vec<IndexEntry>, class_names: Vec<String>, root: PathBuf) -> Result<Self> {
        let mut seen = HashSet::new();
        for e in &entries {
            if !seen.insert(e.clip_id.as_str()) {
                return Err(Error::clip(&e.clip_id, "duplicate clip_id in index"));
            }
            if e.label >= class_names.len() {
                return Err(Error::clip(
                    &e.clip_id,
                    format!("label {} has no class name", e.label),
                ));
            }
        }
        let index = DatasetIndex {
            entries,
            class_names,
            root,
        };
        index.warn_if_thin();
        Ok(index)
    }

    /// Reads an index CSV with header `clip_id,path,subject,label`.
    ///
    /// Labels that all parse as integers keep their numeric order; otherwise
    /// class names are sorted and numbered from zero.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut reader = csv::ReaderBuilder::new().from_reader(text.as_bytes());
        let header = reader
            .headers()
            .map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?;
        if header.iter().collect::<Vec<_>>() != INDEX_HEADER {
            return Err(Error::InvalidInput(format!(
                "{}: expected header `{}`",
                path.display(),
                INDEX_HEADER.join(",")
            )));
        }
        let mut rows = Vec::new();
        for (line, row) in reader.deserialize::<IndexRow>().enumerate() {
            let row = row.map_err(|e| {
                Error::InvalidInput(format!("{}: row {}: {e}", path.display(), line + 2))
            })?;
            rows.push(row);
        }

        let numeric: Option<Vec<u64>> = rows.iter().map(|r| r.label.trim().parse().ok()).collect();
        let names: Vec<String> = match &numeric {
            Some(values) => {
                let set: BTreeSet<u64> = values.iter().copied().collect();
                set.into_iter().map(|v| v.to_string()).collect()
            }
            None => {
                let set: BTreeSet<&str> = rows.iter().map(|r| r.label.trim()).collect();
                set.into_iter().map(str::to_string).collect()
            }
        };
        let lookup: BTreeMap<&str, usize> = names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.as_str(), i))
            .collect();
        let entries = rows
            .iter()
            .map(|r| {
                let key = match &numeric {
                    Some(_) => r.label.trim().parse::<u64>().unwrap().to_string(),
                    None => r.label.trim().to_string(),
                };
                IndexEntry {
                    clip_id: r.clip_id.clone(),
                    path: PathBuf::from(&r.path),
                    subject: r.subject.clone(),
                    label: lookup[key.as_str()],
                }
            })
            .collect();
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        DatasetIndex::new(entries, names, root)
    }

    /// Writes the index CSV. Labels are written as class names when loading
    /// them back reproduces the same numbering, and as integers otherwise.
    pub fn save(&self, path: &Path) -> Result<()> {
        let by_name = self.class_names.windows(2).all(|w| w[0] < w[1])
            && self.class_names.iter().any(|n| n.trim().parse::<u64>().is_err())
            && self.class_names.iter().all(|n| n.trim() == n && !n.is_empty());
        let mut writer = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        for e in &self.entries {
            writer
                .serialize(IndexRow {
                    clip_id: e.clip_id.clone(),
                    path: e.path.to_string_lossy().into_owned(),
                    subject: e.subject.clone(),
                    label: if by_name {
                        self.class_names[e.label].clone()
                    } else {
                        e.label.to_string()
                    },
                })
                .map_err(|err| Error::InvalidInput(err.to_string()))?;
        }
        let bytes = writer
            .into_inner()
            .map_err(|err| Error::InvalidInput(err.to_string()))?;
        fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.label).collect()
    }

    pub fn clip_dir(&self, entry: &IndexEntry) -> PathBuf {
        if entry.path.is_absolute() {
            entry.path.clone()
        } else {
            self.root.join(&entry.path)
        }
    }

    /// Loads every clip, in index order.
    pub fn load_clips(&self) -> Result<Vec<VideoClip>> {
        par::try_map(&self.entries, |e| load_clip(&self.clip_dir(e), e))
    }

    fn warn_if_thin(&self) {
        let mut per_class: BTreeMap<usize, (usize, BTreeSet<&str>)> = BTreeMap::new();
        for e in &self.entries {
            let slot = per_class.entry(e.label).or_default();
            slot.0 += 1;
            slot.1.insert(&e.subject);
        }
        for (label, name) in self.class_names.iter().enumerate() {
            let (clips, subjects) = per_class
                .get(&label)
                .map(|(c, s)| (*c, s.len()))
                .unwrap_or((0, 0));
            if clips < 2 || subjects < 2 {
                log::warn!(
                    "class `{name}` has {clips} clips from {subjects} subjects; LOSO results for it are not meaningful"
                );
            }
        }
    }
}

const MANIFEST_NAME: &str = "frames.txt";

/// Loads the frames of one clip from a directory.
///
/// Frames are the `.pgm`/`.png` files in lexicographic filename order, unless
/// the directory holds a `frames.txt` manifest listing the files to use.
pub fn load_clip(dir: &Path, entry: &IndexEntry) -> Result<VideoClip> {
    let id = &entry.clip_id;
    if !dir.is_dir() {
        return Err(Error::clip(
            id,
            format!("directory {} does not exist", dir.display()),
        ));
    }
    let manifest = dir.join(MANIFEST_NAME);
    let files: Vec<PathBuf> = if manifest.is_file() {
        fs::read_to_string(&manifest)
            .map_err(|e| Error::io(&manifest, e))?
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(|l| dir.join(l))
            .collect()
    } else {
        let mut files: Vec<PathBuf> = fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.is_file()
                    && p.extension()
                        .and_then(|e| e.to_str())
                        .map(|e| matches!(e.to_ascii_lowercase().as_str(), "pgm" | "png"))
                        .unwrap_or(false)
            })
            .collect();
        files.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
        files
    };
    if files.is_empty() {
        return Err(Error::clip(id, "clip directory holds no frames"));
    }
    let frames = files
        .iter()
        .map(|f| read_frame(f).map_err(|e| Error::clip(id, e.to_string())))
        .collect::<Result<Vec<_>>>()?;
    VideoClip::new(id.clone(), entry.subject.clone(), entry.label, frames)
}

/// Decodes an image file to intensities in [0, 255]. Colour images are
/// reduced with the 0.299/0.587/0.114 luma weights.
pub fn read_frame(path: &Path) -> Result<Frame> {
    use image::DynamicImage;
    let img = image::open(path)
        .map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data: Vec<f64> = match img {
        DynamicImage::ImageLuma8(buf) => buf.into_raw().into_iter().map(f64::from).collect(),
        DynamicImage::ImageLuma16(buf) => buf
            .into_raw()
            .into_iter()
            .map(|v| f64::from(v) / 257.0)
            .collect(),
        other => other
            .to_rgb8()
            .pixels()
            .map(|p| 0.299 * f64::from(p[0]) + 0.587 * f64::from(p[1]) + 0.114 * f64::from(p[2]))
            .collect(),
    };
    Frame::new(w, h, data)
}

/// Writes a frame as binary PGM (P5, maxval 255), rounding and clamping.
pub fn write_pgm(path: &Path, frame: &Frame) -> Result<()> {
    let mut bytes = format!("P5\n{} {}\n255\n", frame.width(), frame.height()).into_bytes();
    bytes.extend(
        frame
            .as_slice()
            .iter()
            .map(|v| v.round().clamp(0.0, 255.0) as u8),
    );
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// One leave-one-subject-out fold, holding positions into the index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub subject: String,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// One split per distinct subject, in sorted subject order.
pub fn loso_splits(subjects: &[&str]) -> Result<Vec<Split>> {
    let distinct: BTreeSet<&str> = subjects.iter().copied().collect();
    if distinct.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "leave-one-subject-out needs at least 2 subjects, found {}",
            distinct.len()
        )));
    }
    Ok(distinct
        .into_iter()
        .map(|s| {
            let (test, train): (Vec<usize>, Vec<usize>) =
                (0..subjects.len()).partition(|&i| subjects[i] == s);
            Split {
                subject: s.to_string(),
                train,
                test,
            }
        })
        .collect())
}

impl DatasetIndex {
    pub fn loso_splits(&self) -> Result<Vec<Split>> {
        let subjects: Vec<&str> = self.entries.iter().map(|e| e.subject.as_str()).collect();
        loso_splits(&subjects)
    }
}

/// Parameters of the synthetic benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSpec {
    pub n_subjects: usize,
    pub n_classes: usize,
    pub clips_per_subject_per_class: usize,
    pub width: usize,
    pub height: usize,
    pub min_len: usize,
    pub max_len: usize,
    /// Standard deviation of additive white noise.
    pub noise_amplitude: f64,
    /// Peak intensity of the moving blob.
    pub motion_amplitude: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n_subjects: 6,
            n_classes: 3,
            clips_per_subject_per_class: 4,
            width: 64,
            height: 64,
            min_len: 12,
            max_len: 20,
            noise_amplitude: 2.0,
            motion_amplitude: 40.0,
            seed: 7,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.n_subjects == 0 || self.n_classes == 0 || self.clips_per_subject_per_class == 0 {
            return bad("synth counts must be at least 1");
        }
        if self.width < 16 || self.height < 16 {
            return bad("synth frames must be at least 16x16");
        }
        if self.min_len < 2 || self.max_len < self.min_len {
            return bad("synth clip length range must satisfy 2 <= min_len <= max_len");
        }
        if !(self.noise_amplitude >= 0.0) || !(self.motion_amplitude >= 0.0) {
            return bad("synth amplitudes must be nonnegative");
        }
        let static_case = self.noise_amplitude == 0.0 && self.motion_amplitude == 0.0;
        if !static_case && self.motion_amplitude <= self.noise_amplitude {
            return bad("motion_amplitude must exceed noise_amplitude");
        }
        Ok(())
    }
}

/// Facial regions (fractions of the frame: x0, x1, y0, y1) in which class
/// blobs move.
const REGIONS: [(&str, [f64; 4]); 5] = [
    ("brow", [0.15, 0.85, 0.10, 0.32]),
    ("eye_left", [0.10, 0.45, 0.33, 0.60]),
    ("eye_right", [0.55, 0.90, 0.33, 0.60]),
    ("mouth", [0.25, 0.75, 0.66, 0.90]),
    ("nose", [0.38, 0.62, 0.40, 0.68]),
];

/// The name and motion of one synthetic class.
struct ClassMotion {
    name: String,
    rect: [f64; 4],
    direction: (f64, f64),
}

fn class_motion(c: usize) -> ClassMotion {
    let (name, rect) = REGIONS[c % REGIONS.len()];
    let cycle = c / REGIONS.len();
    let angle = match c % 3 {
        0 => std::f64::consts::FRAC_PI_2,
        1 => 0.0,
        _ => std::f64::consts::FRAC_PI_4,
    } + cycle as f64 * 0.9;
    ClassMotion {
        name: if cycle == 0 {
            name.to_string()
        } else {
            format!("{name}_{cycle}")
        },
        rect,
        direction: (angle.cos(), angle.sin()),
    }
}

fn subject_background(spec: &SynthSpec, rng: &mut ChaCha8Rng) -> Frame {
    let (w, h) = (spec.width as f64, spec.height as f64);
    let base = rng.random_range(90.0..150.0);
    let bumps: Vec<(f64, f64, f64, f64)> = (0..6)
        .map(|_| {
            (
                rng.random_range(0.0..w),
                rng.random_range(0.0..h),
                rng.random_range(0.12..0.35) * w.min(h),
                rng.random_range(-35.0..35.0),
            )
        })
        .collect();
    let tilt = (rng.random_range(-0.4..0.4), rng.random_range(-0.4..0.4));
    Frame::from_fn(spec.width, spec.height, |x, y| {
        let (xf, yf) = (x as f64, y as f64);
        let mut v = base + tilt.0 * (xf - w / 2.0) + tilt.1 * (yf - h / 2.0);
        for &(cx, cy, s, a) in &bumps {
            let d2 = (xf - cx).powi(2) + (yf - cy).powi(2);
            v += a * (-d2 / (2.0 * s * s)).exp();
        }
        v
    })
}

fn synth_clip(
    spec: &SynthSpec,
    background: &Frame,
    motion: &ClassMotion,
    rng: &mut ChaCha8Rng,
) -> Vec<Frame> {
    let len = rng.random_range(spec.min_len..=spec.max_len);
    let (w, h) = (spec.width as f64, spec.height as f64);
    let [rx0, rx1, ry0, ry1] = motion.rect;
    let (rw, rh) = ((rx1 - rx0) * w, (ry1 - ry0) * h);
    let jitter_x = rng.random_range(-0.1..0.1) * rw;
    let jitter_y = rng.random_range(-0.1..0.1) * rh;
    let gain = rng.random_range(0.85..1.15);
    let sigma = 0.055 * w.min(h);
    let travel = 0.3 * rw.min(rh).max(sigma);
    let (dx, dy) = motion.direction;
    let cx0 = (rx0 + rx1) / 2.0 * w + jitter_x - dx * travel / 2.0;
    let cy0 = (ry0 + ry1) / 2.0 * h + jitter_y - dy * travel / 2.0;
    let noise = Normal::new(0.0, spec.noise_amplitude.max(f64::MIN_POSITIVE)).unwrap();

    (0..len)
        .map(|t| {
            let phase = t as f64 / (len - 1) as f64;
            let envelope = (std::f64::consts::PI * phase).sin();
            let amp = spec.motion_amplitude * gain * envelope;
            let (cx, cy) = (cx0 + dx * travel * phase, cy0 + dy * travel * phase);
            Frame::from_fn(spec.width, spec.height, |x, y| {
                let mut v = background.get(x, y);
                if amp != 0.0 {
                    let d2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
                    v += amp * (-d2 / (2.0 * sigma * sigma)).exp();
                }
                if spec.noise_amplitude > 0.0 {
                    v += noise.sample(rng);
                }
                v.round().clamp(0.0, 255.0)
            })
        })
        .collect()
}

/// Generates a deterministic dataset: each clip is a static subject
/// background plus a class-specific moving Gaussian blob plus white noise.
/// Intensities are rounded to integers so that the clips survive a PGM
/// round trip unchanged.
pub fn synthesize_dataset(spec: &SynthSpec) -> Result<(DatasetIndex, Vec<VideoClip>)> {
    spec.validate()?;
    let motions: Vec<ClassMotion> = (0..spec.n_classes).map(class_motion).collect();
    let mut entries = Vec::new();
    let mut clips = Vec::new();
    for s in 0..spec.n_subjects {
        let subject = format!("s{:02}", s + 1);
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ ((s as u64 + 1) << 32));
        let background = subject_background(spec, &mut rng);
        for (c, motion) in motions.iter().enumerate() {
            for k in 0..spec.clips_per_subject_per_class {
                let clip_id = format!("{subject}_{}_{k:02}", motion.name);
                let frames = synth_clip(spec, &background, motion, &mut rng);
                entries.push(IndexEntry {
                    clip_id: clip_id.clone(),
                    path: PathBuf::from(&clip_id),
                    subject: subject.clone(),
                    label: c,
                });
                clips.push(VideoClip::new(clip_id, subject.clone(), c, frames)?);
            }
        }
    }
    let names = motions.into_iter().map(|m| m.name).collect();
    let index = DatasetIndex::new(entries, names, PathBuf::new())?;
    Ok((index, clips))
}

/// Writes clips as PGM frame directories plus `index.csv` under `dir`, and
/// returns the index rooted there.
pub fn write_dataset(dir: &Path, index: &DatasetIndex, clips: &[VideoClip]) -> Result<DatasetIndex> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (entry, clip) in index.entries.iter().zip(clips) {
        let clip_dir = dir.join(&entry.path);
        fs::create_dir_all(&clip_dir).map_err(|e| Error::io(&clip_dir, e))?;
        for (t, frame) in clip.frames().iter().enumerate() {
            write_pgm(&clip_dir.join(format!("frame_{t:04}.pgm")), frame)?;
        }
    }
    let mut rooted = index.clone();
    rooted.root = dir.to_path_buf();
    rooted.save(&dir.join("index.csv"))?;
    Ok(rooted)
}
