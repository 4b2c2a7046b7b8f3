//! Browser bindings: synthesize a clip, split it into still background and
//! subtle motion, and inspect its projections and LBP histograms.

use wasm_bindgen::prelude::*;

use mexp::dataset::{self, Frame, SynthSpec, VideoClip};
use mexp::descriptor::{self, Plane};
use mexp::encoding::{self, LbpParams2D, Mask1D};
use mexp::projection::{self, ProjectionSource, Region};
use mexp::rpca::{self, RpcaConfig, SparseDecomposition};

fn js(e: mexp::Error) -> JsError {
    JsError::new(&e.to_string())
}

fn source(improved: bool) -> ProjectionSource {
    if improved {
        ProjectionSource::Improved
    } else {
        ProjectionSource::Original
    }
}

#[wasm_bindgen]
pub struct Demo {
    clip: VideoClip,
    decomposition: SparseDecomposition,
    class_name: String,
}

#[wasm_bindgen]
impl Demo {
    /// Synthesizes one clip of class `class` (0..5) and decomposes it.
    #[wasm_bindgen(constructor)]
    pub fn new(class: usize, seed: u32, noise: f64, motion: f64) -> Result<Demo, JsError> {
        let spec = SynthSpec {
            n_subjects: 1,
            n_classes: class + 1,
            clips_per_subject_per_class: 1,
            width: 48,
            height: 48,
            min_len: 16,
            max_len: 16,
            noise_amplitude: noise,
            motion_amplitude: motion,
            seed: u64::from(seed),
        };
        let (index, mut clips) = dataset::synthesize_dataset(&spec).map_err(js)?;
        let clip = clips.pop().expect("one clip per class");
        let decomposition = rpca::decompose_clip(&clip, &RpcaConfig::default()).map_err(js)?;
        Ok(Demo {
            class_name: index.class_names[clip.label].clone(),
            clip,
            decomposition,
        })
    }

    pub fn width(&self) -> usize {
        self.clip.width()
    }

    pub fn height(&self) -> usize {
        self.clip.height()
    }

    pub fn frames(&self) -> usize {
        self.clip.len()
    }

    #[wasm_bindgen(js_name = className)]
    pub fn class_name(&self) -> String {
        self.class_name.clone()
    }

    #[wasm_bindgen(js_name = rpcaIterations)]
    pub fn rpca_iterations(&self) -> usize {
        self.decomposition.iterations
    }

    /// Pixels of frame `t` of `"original"`, `"low_rank"` or `"sparse"`,
    /// row-major.
    pub fn frame(&self, t: usize, part: &str) -> Result<Vec<f64>, JsError> {
        if t >= self.clip.len() {
            return Err(JsError::new("frame index out of range"));
        }
        let f = match part {
            "original" => self.clip.frames()[t].clone(),
            "low_rank" => self.decomposition.low_rank_frame(t),
            "sparse" => self.decomposition.sparse_frame(t),
            other => return Err(JsError::new(&format!("unknown part `{other}`"))),
        };
        Ok(f.into_vec())
    }

    fn source_frames(&self, improved: bool) -> Result<Vec<Frame>, JsError> {
        projection::source_frames(&self.clip, Some(&self.decomposition), source(improved)).map_err(js)
    }

    /// Horizontal (one value per row) or vertical (one per column)
    /// projection of frame `t`.
    pub fn projection(&self, t: usize, horizontal: bool, improved: bool) -> Result<Vec<f64>, JsError> {
        let frames = self.source_frames(improved)?;
        let f = frames.get(t).ok_or_else(|| JsError::new("frame index out of range"))?;
        let region = Region::full(f.width(), f.height());
        let p = if horizontal {
            projection::horizontal_projection(f, region)
        } else {
            projection::vertical_projection(f, region)
        };
        Ok(p.map_err(js)?.values)
    }

    /// Normalized 1D LBP histogram of one projection of frame `t`.
    #[wasm_bindgen(js_name = projectionHistogram)]
    pub fn projection_histogram(&self, t: usize, horizontal: bool, improved: bool, mask: usize) -> Result<Vec<f64>, JsError> {
        let signal = self.projection(t, horizontal, improved)?;
        let mask = Mask1D::new(mask).map_err(js)?;
        Ok(encoding::onedlbp_histogram(&signal, mask).map_err(js)?.normalize().bins)
    }

    /// Temporal texture image of the whole frame (`"XT"` or `"YT"`),
    /// row-major with time along the width, resampled to `length` columns
    /// when `length > 0`.
    #[wasm_bindgen(js_name = temporalTexture)]
    pub fn temporal_texture(&self, plane: &str, improved: bool, length: usize) -> Result<Texture, JsError> {
        let plane = match Plane::parse(plane) {
            Some(p @ (Plane::XT | Plane::YT)) => p,
            _ => return Err(JsError::new("plane must be XT or YT")),
        };
        let frames = self.source_frames(improved)?;
        let region = Region::full(self.clip.width(), self.clip.height());
        let mut image = descriptor::temporal_texture(&frames, region, plane, 0).map_err(js)?;
        if length > 0 {
            image = descriptor::temporal_normalize(&image, length).map_err(js)?;
        }
        Ok(Texture {
            width: image.values.width(),
            height: image.values.height(),
            values: image.values.into_vec(),
        })
    }

    /// Normalized circular LBP histogram of a temporal texture image.
    #[wasm_bindgen(js_name = textureHistogram)]
    pub fn texture_histogram(
        &self,
        plane: &str,
        improved: bool,
        length: usize,
        neighbors: usize,
        radius: usize,
    ) -> Result<Vec<f64>, JsError> {
        let t = self.temporal_texture(plane, improved, length)?;
        let image = Frame::new(t.width, t.height, t.values).map_err(js)?;
        let params = LbpParams2D::new(neighbors, radius).map_err(js)?;
        Ok(encoding::lbp2d_histogram(&image, params).map_err(js)?.normalize().bins)
    }
}

#[wasm_bindgen]
pub struct Texture {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

#[wasm_bindgen]
impl Texture {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> Vec<f64> {
        self.values.clone()
    }
}
