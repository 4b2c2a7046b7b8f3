//! Low-rank plus sparse decomposition of a clip by the inexact augmented
//! Lagrange multiplier method.
//!
//! The clip matrix `I` holds one vectorized frame per column. The solver
//! minimizes `||Q||_* + lambda * ||E||_1` subject to `I = Q + E`, alternating
//! a soft-threshold step on `E`, a singular value threshold step on `Q`, and a
//! multiplier/penalty update.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dataset::{Frame, VideoClip};
use crate::error::{Error, Result};

/// A clip as a `D x n` matrix, `D = width * height`, column `t` = frame `t`
/// in row-major pixel order.
#[derive(Debug, Clone, PartialEq)]
pub struct ClipMatrix {
    pub data: DMatrix<f64>,
    pub width: usize,
    pub height: usize,
}

impl ClipMatrix {
    pub fn from_frames(frames: &[Frame]) -> Result<Self> {
        let first = frames
            .first()
            .ok_or_else(|| Error::InvalidInput("clip matrix needs at least one frame".into()))?;
        let (w, h) = (first.width(), first.height());
        if frames.iter().any(|f| f.width() != w || f.height() != h) {
            return Err(Error::InvalidInput("frames differ in size".into()));
        }
        let data = DMatrix::from_fn(w * h, frames.len(), |i, t| frames[t].as_slice()[i]);
        Ok(ClipMatrix {
            data,
            width: w,
            height: h,
        })
    }

    pub fn from_clip(clip: &VideoClip) -> Result<Self> {
        Self::from_frames(clip.frames())
    }

    pub fn n_frames(&self) -> usize {
        self.data.ncols()
    }

    pub fn frame(&self, t: usize) -> Frame {
        column_frame(&self.data, t, self.width, self.height)
    }
}

fn column_frame(m: &DMatrix<f64>, t: usize, width: usize, height: usize) -> Frame {
    Frame::new(width, height, m.column(t).iter().copied().collect())
        .expect("column length matches frame size")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RpcaConfig {
    /// Weight of the l1 term; `None` resolves to `1 / sqrt(max(D, n))`.
    pub lambda: Option<f64>,
    /// Stop when `||I - Q - E||_F / ||I||_F` falls to this value.
    pub tol: f64,
    pub max_iter: usize,
    /// Initial penalty is `mu0_scale / sigma_1(I)`.
    pub mu0_scale: f64,
    /// Penalty growth factor per iteration.
    pub rho: f64,
    /// Penalty is capped at `mu0 * mu_max_factor`.
    pub mu_max_factor: f64,
    /// Start the multiplier at zero instead of the dual-feasible scaling of `I`.
    pub zero_init: bool,
}

impl Default for RpcaConfig {
    fn default() -> Self {
        RpcaConfig {
            lambda: None,
            tol: 1e-7,
            max_iter: 500,
            mu0_scale: 1.25,
            rho: 1.5,
            mu_max_factor: 1e7,
            zero_init: false,
        }
    }
}

impl RpcaConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(l) = self.lambda {
            if !(l > 0.0 && l.is_finite()) {
                return Err(Error::Config("rpca.lambda must be positive".into()));
            }
        }
        if !(self.tol > 0.0) {
            return Err(Error::Config("rpca.tol must be positive".into()));
        }
        if !(self.rho > 1.0) {
            return Err(Error::Config("rpca.rho must exceed 1".into()));
        }
        if !(self.mu0_scale > 0.0) || !(self.mu_max_factor >= 1.0) {
            return Err(Error::Config(
                "rpca.mu0_scale must be positive and rpca.mu_max_factor at least 1".into(),
            ));
        }
        if self.max_iter == 0 {
            return Err(Error::Config("rpca.max_iter must be at least 1".into()));
        }
        Ok(())
    }

    pub fn resolve_lambda(&self, rows: usize, cols: usize) -> f64 {
        self.lambda
            .unwrap_or_else(|| 1.0 / (rows.max(cols) as f64).sqrt())
    }
}

/// Result of a decomposition: `low_rank` is Q, `sparse` is E.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseDecomposition {
    pub low_rank: DMatrix<f64>,
    pub sparse: DMatrix<f64>,
    pub width: usize,
    pub height: usize,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

impl SparseDecomposition {
    pub fn n_frames(&self) -> usize {
        self.sparse.ncols()
    }

    /// Frame `t` of the sparse (subtle motion) part.
    pub fn sparse_frame(&self, t: usize) -> Frame {
        column_frame(&self.sparse, t, self.width, self.height)
    }

    pub fn low_rank_frame(&self, t: usize) -> Frame {
        column_frame(&self.low_rank, t, self.width, self.height)
    }

    pub fn sparse_frames(&self) -> Vec<Frame> {
        (0..self.n_frames()).map(|t| self.sparse_frame(t)).collect()
    }
}

/// Elementwise soft threshold `sign(x) * max(|x| - tau, 0)`.
pub fn shrink(x: &DMatrix<f64>, tau: f64) -> DMatrix<f64> {
    x.map(|v| soft(v, tau))
}

#[inline]
fn soft(v: f64, tau: f64) -> f64 {
    if v > tau {
        v - tau
    } else if v < -tau {
        v + tau
    } else {
        0.0
    }
}

fn check_finite(x: &DMatrix<f64>, what: &str) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numeric(format!("{what} contains non-finite values")))
    }
}

/// Singular value threshold `U * shrink(S, tau) * V^T`.
pub fn svt(x: &DMatrix<f64>, tau: f64) -> Result<DMatrix<f64>> {
    Ok(svt_with_rank(x, tau)?.0)
}

/// As [`svt`], also returning the number of singular values kept.
pub fn svt_with_rank(x: &DMatrix<f64>, tau: f64) -> Result<(DMatrix<f64>, usize)> {
    check_finite(x, "svt input")?;
    let (rows, cols) = x.shape();
    if rows == 0 || cols == 0 {
        return Ok((x.clone(), 0));
    }
    let svd = x.clone().svd(true, true);
    let u = svd.u.as_ref().ok_or_else(|| Error::Numeric("SVD failed".into()))?;
    let v_t = svd.v_t.as_ref().ok_or_else(|| Error::Numeric("SVD failed".into()))?;
    let kept: Vec<(usize, f64)> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter_map(|(i, &s)| (s > tau).then(|| (i, s - tau)))
        .collect();
    let mut out = DMatrix::zeros(rows, cols);
    for &(i, s) in &kept {
        out += (u.column(i) * s) * v_t.row(i);
    }
    Ok((out, kept.len()))
}

pub fn singular_values(x: &DMatrix<f64>) -> Result<Vec<f64>> {
    check_finite(x, "matrix")?;
    if x.is_empty() {
        return Ok(Vec::new());
    }
    let mut s: Vec<f64> = x.clone().singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    Ok(s)
}

/// Runs the inexact ALM solver on `input` (`D x n`, `n >= 2`).
///
/// A run that exhausts `max_iter` is returned with `converged = false`.
pub fn decompose(input: &ClipMatrix, cfg: &RpcaConfig) -> Result<SparseDecomposition> {
    cfg.validate()?;
    let i_mat = &input.data;
    let (d, n) = i_mat.shape();
    if n < 2 {
        return Err(Error::InvalidInput(format!(
            "decomposition needs at least 2 frames, got {n}"
        )));
    }
    check_finite(i_mat, "clip matrix")?;
    let lambda = cfg.resolve_lambda(d, n);
    let norm_i = i_mat.norm();
    let result = |q, e, iterations, residual, converged| SparseDecomposition {
        low_rank: q,
        sparse: e,
        width: input.width,
        height: input.height,
        iterations,
        residual,
        converged,
    };
    if norm_i == 0.0 {
        return Ok(result(
            DMatrix::zeros(d, n),
            DMatrix::zeros(d, n),
            0,
            0.0,
            true,
        ));
    }

    let sigma1 = singular_values(i_mat)?[0];
    let mut y = if cfg.zero_init {
        DMatrix::zeros(d, n)
    } else {
        let inf_norm = i_mat.amax() / lambda;
        i_mat / sigma1.max(inf_norm)
    };
    let mut mu = cfg.mu0_scale / sigma1;
    let mu_max = mu * cfg.mu_max_factor;

    let mut q = DMatrix::<f64>::zeros(d, n);
    let mut e = DMatrix::<f64>::zeros(d, n);
    let mut residual = f64::INFINITY;
    for iter in 1..=cfg.max_iter {
        let inv_mu = 1.0 / mu;
        e = shrink(&(i_mat - &q + &y * inv_mu), lambda * inv_mu);
        q = svt(&(i_mat - &e + &y * inv_mu), inv_mu)?;
        let z = i_mat - &q - &e;
        residual = z.norm() / norm_i;
        if !residual.is_finite() {
            return Err(Error::Numeric(format!(
                "decomposition diverged at iteration {iter}"
            )));
        }
        if residual <= cfg.tol {
            return Ok(result(q, e, iter, residual, true));
        }
        y += z * mu;
        mu = (mu * cfg.rho).min(mu_max);
    }
    log::warn!(
        "decomposition stopped after {} iterations with residual {residual:.3e}",
        cfg.max_iter
    );
    Ok(result(q, e, cfg.max_iter, residual, false))
}

/// Decomposes the frames of a clip.
pub fn decompose_clip(clip: &VideoClip, cfg: &RpcaConfig) -> Result<SparseDecomposition> {
    decompose(&ClipMatrix::from_clip(clip)?, cfg).map_err(|e| e.context(&clip.clip_id))
}

pub fn nuclear_norm(x: &DMatrix<f64>) -> Result<f64> {
    Ok(singular_values(x)?.iter().sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn shrink_definition_and_identity() {
        let x = DMatrix::from_row_slice(1, 3, &[5.0, -3.0, 0.5]);
        assert_eq!(shrink(&x, 1.0), DMatrix::from_row_slice(1, 3, &[4.0, -2.0, 0.0]));
        assert_eq!(shrink(&x, 0.0), x);
    }

    #[test]
    fn shrink_minimizes_scalar_objective() {
        // grid search over e of tau*|e| + (e - a)^2 / 2
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let a: f64 = rng.random_range(-5.0..5.0);
            let tau: f64 = rng.random_range(0.0..3.0);
            let obj = |e: f64| tau * e.abs() + 0.5 * (e - a).powi(2);
            let (mut best, mut best_val) = (0.0, f64::INFINITY);
            for k in -100_000..=100_000 {
                let e = k as f64 * 1e-4;
                let v = obj(e);
                if v < best_val {
                    best = e;
                    best_val = v;
                }
            }
            let s = soft(a, tau);
            assert!((s - best).abs() <= 1e-4, "a={a} tau={tau} shrink={s} grid={best}");
            assert!(obj(s) <= best_val + 1e-12);
        }
    }

    #[test]
    fn svt_identity_and_diagonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random_matrix(&mut rng, 7, 5);
        assert!((svt(&x, 0.0).unwrap() - &x).amax() < 1e-10);
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![3.0, 1.0]));
        let out = svt(&d, 2.0).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        assert!((out - expected).amax() < 1e-12);
    }

    #[test]
    fn svt_nuclear_norm_matches_shrunk_spectrum() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let x = random_matrix(&mut rng, 9, 6);
            let tau = rng.random_range(0.0..2.0);
            // independent route: eigenvalues of X^T X
            let gram = x.transpose() * &x;
            let expected: f64 = gram
                .symmetric_eigenvalues()
                .iter()
                .map(|&l| (l.max(0.0).sqrt() - tau).max(0.0))
                .sum();
            let got = nuclear_norm(&svt(&x, tau).unwrap()).unwrap();
            assert!((got - expected).abs() < 1e-9, "{got} vs {expected}");
        }
    }

    #[test]
    fn svt_rejects_non_finite() {
        let x = DMatrix::from_row_slice(1, 2, &[1.0, f64::NAN]);
        assert!(matches!(svt(&x, 1.0), Err(Error::Numeric(_))));
    }

    #[test]
    fn zero_input_gives_zero_parts() {
        let m = ClipMatrix {
            data: DMatrix::zeros(12, 4),
            width: 4,
            height: 3,
        };
        let dec = decompose(&m, &RpcaConfig::default()).unwrap();
        assert_eq!(dec.residual, 0.0);
        assert!(dec.low_rank.iter().chain(dec.sparse.iter()).all(|&v| v == 0.0));
    }

    #[test]
    fn rank_one_input_has_empty_sparse_part() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let u = random_matrix(&mut rng, 50, 1);
        let v = random_matrix(&mut rng, 1, 20);
        let data = &u * &v;
        let m = ClipMatrix {
            data: data.clone(),
            width: 10,
            height: 5,
        };
        let dec = decompose(&m, &RpcaConfig::default()).unwrap();
        assert!(dec.converged);
        assert!(dec.sparse.norm() / data.norm() <= 1e-4);
    }

    #[test]
    fn planted_low_rank_plus_sparse_is_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let l0 = random_matrix(&mut rng, 60, 2) * random_matrix(&mut rng, 2, 40);
        let peak = l0.amax();
        let mut s0 = DMatrix::zeros(60, 40);
        for v in s0.iter_mut() {
            if rng.random_bool(0.05) {
                *v = rng.random_range(-peak..peak);
            }
        }
        let m = ClipMatrix {
            data: &l0 + &s0,
            width: 6,
            height: 10,
        };
        let dec = decompose(&m, &RpcaConfig::default()).unwrap();
        assert!(dec.converged);
        assert!((&dec.low_rank - &l0).norm() / l0.norm() <= 1e-3);
        assert!((&m.data - &dec.low_rank - &dec.sparse).norm() / m.data.norm() <= 1e-7);
    }

    #[test]
    fn needs_two_frames_and_finite_input() {
        let m = ClipMatrix {
            data: DMatrix::from_element(4, 1, 1.0),
            width: 2,
            height: 2,
        };
        assert!(decompose(&m, &RpcaConfig::default()).is_err());
        let mut m = ClipMatrix {
            data: DMatrix::from_element(4, 3, 1.0),
            width: 2,
            height: 2,
        };
        m.data[(0, 0)] = f64::INFINITY;
        assert!(matches!(decompose(&m, &RpcaConfig::default()), Err(Error::Numeric(_))));
    }

    #[test]
    fn exhausted_iterations_are_flagged() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let m = ClipMatrix {
            data: random_matrix(&mut rng, 20, 8),
            width: 5,
            height: 4,
        };
        let cfg = RpcaConfig {
            max_iter: 2,
            ..RpcaConfig::default()
        };
        let dec = decompose(&m, &cfg).unwrap();
        assert!(!dec.converged);
        assert_eq!(dec.iterations, 2);
    }

    #[test]
    fn clip_matrix_columns_reshape_to_frames() {
        let frames: Vec<Frame> = (0..3)
            .map(|t| Frame::from_fn(4, 3, |x, y| (t * 100 + y * 4 + x) as f64))
            .collect();
        let m = ClipMatrix::from_frames(&frames).unwrap();
        assert_eq!(m.data.shape(), (12, 3));
        for (t, f) in frames.iter().enumerate() {
            assert_eq!(&m.frame(t), f);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn objective_not_worse_than_trivial_point(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let data = random_matrix(&mut rng, 15, 6);
            let lambda = 1.0 / 15f64.sqrt();
            let m = ClipMatrix { data: data.clone(), width: 5, height: 3 };
            let dec = decompose(&m, &RpcaConfig::default()).unwrap();
            let obj = nuclear_norm(&dec.low_rank).unwrap() + lambda * dec.sparse.abs().sum();
            let trivial = nuclear_norm(&data).unwrap();
            prop_assert!(obj <= trivial + 1e-8, "{} > {}", obj, trivial);
            if dec.converged {
                prop_assert!((&data - &dec.low_rank - &dec.sparse).norm() / data.norm() <= 1e-7);
            }
            let again = decompose(&m, &RpcaConfig::default()).unwrap();
            prop_assert_eq!(again, dec);
        }

        #[test]
        fn thresholds_are_non_expansive(seed in any::<u64>(), tau in 0.0f64..2.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_matrix(&mut rng, 6, 4);
            let b = random_matrix(&mut rng, 6, 4);
            let dist = (&a - &b).norm();
            prop_assert!((shrink(&a, tau) - shrink(&b, tau)).norm() <= dist + 1e-12);
            prop_assert!((svt(&a, tau).unwrap() - svt(&b, tau).unwrap()).norm() <= dist + 1e-10);
        }
    }
}
