//! Horizontal and vertical integral projections over rectangular regions.
//!
//! The horizontal projection averages each row segment of the region,
//! giving one value per `y`; the vertical projection averages each column
//! segment, giving one value per `x`. Applied to the sparse part of a
//! decomposition these are the improved projections; applied to the raw
//! frames they are the original ones.

use serde::{Deserialize, Serialize};

use crate::dataset::{Frame, VideoClip};
use crate::error::{Error, Result};
use crate::rpca::SparseDecomposition;

/// Pixel bounds `[x1, x2) x [y1, y2)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Region {
    pub x1: usize,
    pub x2: usize,
    pub y1: usize,
    pub y2: usize,
}

impl Region {
    pub fn new(x1: usize, x2: usize, y1: usize, y2: usize) -> Result<Self> {
        if x2 <= x1 || y2 <= y1 {
            return Err(Error::InvalidInput(format!(
                "empty region x[{x1},{x2}) y[{y1},{y2})"
            )));
        }
        Ok(Region { x1, x2, y1, y2 })
    }

    pub fn full(width: usize, height: usize) -> Self {
        Region {
            x1: 0,
            x2: width,
            y1: 0,
            y2: height,
        }
    }

    pub fn width(&self) -> usize {
        self.x2 - self.x1
    }

    pub fn height(&self) -> usize {
        self.y2 - self.y1
    }

    pub fn transpose(&self) -> Region {
        Region {
            x1: self.y1,
            x2: self.y2,
            y1: self.x1,
            y2: self.x2,
        }
    }

    pub fn check_within(&self, width: usize, height: usize) -> Result<()> {
        if self.x2 <= self.x1 || self.y2 <= self.y1 || self.x2 > width || self.y2 > height {
            return Err(Error::InvalidInput(format!(
                "region x[{},{}) y[{},{}) does not fit a {width}x{height} frame",
                self.x1, self.x2, self.y1, self.y2
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    /// One value per row (`y`), averaged over `x`.
    Horizontal,
    /// One value per column (`x`), averaged over `y`.
    Vertical,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionSignal {
    pub values: Vec<f64>,
    pub direction: Direction,
    pub region: Region,
    pub frame_index: usize,
}

pub fn horizontal_projection(m: &Frame, region: Region) -> Result<ProjectionSignal> {
    region.check_within(m.width(), m.height())?;
    let scale = 1.0 / region.width() as f64;
    let values = (region.y1..region.y2)
        .map(|y| m.row(y)[region.x1..region.x2].iter().sum::<f64>() * scale)
        .collect();
    Ok(ProjectionSignal {
        values,
        direction: Direction::Horizontal,
        region,
        frame_index: 0,
    })
}

pub fn vertical_projection(m: &Frame, region: Region) -> Result<ProjectionSignal> {
    region.check_within(m.width(), m.height())?;
    let mut sums = vec![0.0; region.width()];
    for y in region.y1..region.y2 {
        for (s, v) in sums.iter_mut().zip(&m.row(y)[region.x1..region.x2]) {
            *s += v;
        }
    }
    let scale = 1.0 / region.height() as f64;
    Ok(ProjectionSignal {
        values: sums.into_iter().map(|s| s * scale).collect(),
        direction: Direction::Vertical,
        region,
        frame_index: 0,
    })
}

pub fn project(m: &Frame, region: Region, direction: Direction) -> Result<ProjectionSignal> {
    match direction {
        Direction::Horizontal => horizontal_projection(m, region),
        Direction::Vertical => vertical_projection(m, region),
    }
}

/// Which frames the projections are taken over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProjectionSource {
    /// Sparse subtle-motion part `E_t` of the decomposition.
    #[default]
    Improved,
    /// Raw frames `I_t`.
    Original,
    /// Consecutive differences `I_{t+1} - I_t`.
    Difference,
}

impl ProjectionSource {
    pub fn needs_decomposition(self) -> bool {
        matches!(self, ProjectionSource::Improved)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ProjectionSource::Improved => "improved",
            ProjectionSource::Original => "original",
            ProjectionSource::Difference => "difference",
        }
    }
}

/// The per-frame matrices the projections of `source` are computed on.
pub fn source_frames(
    clip: &VideoClip,
    decomposition: Option<&SparseDecomposition>,
    source: ProjectionSource,
) -> Result<Vec<Frame>> {
    match source {
        ProjectionSource::Improved => {
            let dec = decomposition.ok_or_else(|| {
                Error::InvalidInput("improved projections need a decomposition".into())
            })?;
            if dec.width != clip.width() || dec.height != clip.height() || dec.n_frames() != clip.len()
            {
                return Err(Error::InvalidInput(format!(
                    "decomposition is {}x{}x{} but clip `{}` is {}x{}x{}",
                    dec.width,
                    dec.height,
                    dec.n_frames(),
                    clip.clip_id,
                    clip.width(),
                    clip.height(),
                    clip.len()
                )));
            }
            Ok(dec.sparse_frames())
        }
        ProjectionSource::Original => Ok(clip.frames().to_vec()),
        ProjectionSource::Difference => {
            if clip.len() < 2 {
                return Err(Error::InvalidInput(
                    "frame differences need at least 2 frames".into(),
                ));
            }
            Ok(clip
                .frames()
                .windows(2)
                .map(|w| {
                    Frame::new(
                        w[0].width(),
                        w[0].height(),
                        w[1].as_slice()
                            .iter()
                            .zip(w[0].as_slice())
                            .map(|(b, a)| b - a)
                            .collect(),
                    )
                    .expect("same size")
                })
                .collect())
        }
    }
}

/// Horizontal and vertical projections of every frame of `frames`.
pub fn frame_projections(
    frames: &[Frame],
    region: Region,
) -> Result<Vec<(ProjectionSignal, ProjectionSignal)>> {
    frames
        .iter()
        .enumerate()
        .map(|(t, f)| {
            let mut h = horizontal_projection(f, region)?;
            let mut v = vertical_projection(f, region)?;
            h.frame_index = t;
            v.frame_index = t;
            Ok((h, v))
        })
        .collect()
}

/// Per-frame `(H_t, V_t)` of the sparse part (or of the raw frames when
/// `improved` is false).
pub fn improved_projections(
    clip: &VideoClip,
    decomposition: &SparseDecomposition,
    region: Region,
    improved: bool,
) -> Result<Vec<(ProjectionSignal, ProjectionSignal)>> {
    let source = if improved {
        ProjectionSource::Improved
    } else {
        ProjectionSource::Original
    };
    frame_projections(&source_frames(clip, Some(decomposition), source)?, region)
}
