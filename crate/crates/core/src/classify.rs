//! Chi-square kernel SVMs trained by sequential minimal optimization, combined
//! one-vs-one, with penalty (and optionally group count) chosen by stratified
//! three-fold cross validation.

use std::collections::BTreeSet;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::descriptor::ClipDescriptor;
use crate::error::{Error, Result};
use crate::selection::{self, chi_square_unchecked, DistanceTable, SelectionModel};

/// `exp(-chi2(x, y) / gamma)` over whole concatenated vectors.
pub fn chi_square_kernel(x: &[f64], y: &[f64], gamma: f64) -> Result<f64> {
    if !(gamma > 0.0) {
        return Err(Error::InvalidInput(format!("kernel gamma must be positive, got {gamma}")));
    }
    Ok((-selection::chi_square_slices(x, y)? / gamma).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GammaPolicy {
    Fixed(f64),
    /// Mean chi-square distance over the distinct training pairs.
    MeanDistance,
}

/// Soft-margin solver settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmParams {
    pub c: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl SvmParams {
    pub fn with_c(c: f64) -> Self {
        SvmParams {
            c,
            tol: 1e-3,
            max_iter: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmoSolution {
    pub alpha: Vec<f64>,
    /// Offset `b` of `f(x) = sum alpha_i y_i K(x_i, x) + b`.
    pub bias: f64,
    pub iterations: usize,
    pub converged: bool,
}

const TAU: f64 = 1e-12;

/// Solves the soft-margin dual for a precomputed kernel matrix and labels
/// in {-1, +1}, selecting the maximal-violating pair at each step.
pub fn smo(gram: &DMatrix<f64>, y: &[f64], params: &SvmParams) -> Result<SmoSolution> {
    let n = y.len();
    if gram.nrows() != n || gram.ncols() != n {
        return Err(Error::InvalidInput("kernel matrix does not match labels".into()));
    }
    if !(params.c > 0.0) {
        return Err(Error::InvalidInput(format!("penalty C must be positive, got {}", params.c)));
    }
    if !y.contains(&1.0) || !y.contains(&-1.0) {
        return Err(Error::InvalidInput("both classes need at least one sample".into()));
    }
    let c = params.c;
    let q = |i: usize, j: usize| y[i] * y[j] * gram[(i, j)];
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let mut iterations = 0;
    let mut converged = false;

    while iterations < params.max_iter {
        let (mut gmax, mut gmin) = (f64::NEG_INFINITY, f64::INFINITY);
        let (mut sel_i, mut sel_j) = (usize::MAX, usize::MAX);
        for t in 0..n {
            let v = -y[t] * grad[t];
            let up = if y[t] > 0.0 { alpha[t] < c } else { alpha[t] > 0.0 };
            let low = if y[t] > 0.0 { alpha[t] > 0.0 } else { alpha[t] < c };
            if up && v > gmax {
                gmax = v;
                sel_i = t;
            }
            if low && v < gmin {
                gmin = v;
                sel_j = t;
            }
        }
        if sel_i == usize::MAX || sel_j == usize::MAX || gmax - gmin <= params.tol {
            converged = true;
            break;
        }
        let (i, j) = (sel_i, sel_j);
        let (old_i, old_j) = (alpha[i], alpha[j]);
        if y[i] != y[j] {
            let quad = (q(i, i) + q(j, j) + 2.0 * q(i, j)).max(TAU);
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let quad = (q(i, i) + q(j, j) - 2.0 * q(i, j)).max(TAU);
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for k in 0..n {
            grad[k] += q(k, i) * di + q(k, j) * dj;
        }
        iterations += 1;
    }
    if !converged {
        log::warn!("SMO stopped after {iterations} updates without meeting tolerance");
    }

    // offset from free vectors, or the midpoint of the feasible interval
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut free, mut free_sum) = (0usize, 0.0);
    for t in 0..n {
        let yg = y[t] * grad[t];
        let at_upper = alpha[t] >= c;
        let at_lower = alpha[t] <= 0.0;
        if at_upper {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if at_lower {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free += 1;
            free_sum += yg;
        }
    }
    let rho = if free > 0 {
        free_sum / free as f64
    } else {
        (ub + lb) / 2.0
    };
    Ok(SmoSolution {
        alpha,
        bias: -rho,
        iterations,
        converged,
    })
}

/// One binary machine separating `classes.0` (positive) from `classes.1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseSvm {
    pub classes: (usize, usize),
    /// Group indices the machine reads, ascending.
    pub groups: Vec<usize>,
    pub gamma: f64,
    pub c: f64,
    /// Selected group histograms of each support vector, in `groups` order.
    pub support_vectors: Vec<Vec<Vec<f64>>>,
    /// `alpha_i * y_i` per support vector.
    pub coefficients: Vec<f64>,
    pub bias: f64,
    pub converged: bool,
    /// Training positions of the support vectors (not serialized).
    #[serde(skip)]
    pub(crate) members: Vec<usize>,
}

impl PairwiseSvm {
    /// Decision value for a descriptor; positive favours `classes.0`.
    pub fn decision(&self, descriptor: &ClipDescriptor) -> f64 {
        let mut f = 0.0;
        for (sv, &coef) in self.support_vectors.iter().zip(&self.coefficients) {
            let mut d = 0.0;
            for (bins, &r) in sv.iter().zip(&self.groups) {
                d += chi_square_unchecked(bins, &descriptor.groups[r].histogram.bins);
            }
            f += coef * (-d / self.gamma).exp();
        }
        f + self.bias
    }

    /// Decision value for sample `x` of a distance table; bit-identical to
    /// [`PairwiseSvm::decision`] on the same descriptor.
    pub fn decision_in(&self, table: &DistanceTable, x: usize) -> f64 {
        let mut f = 0.0;
        for (&m, &coef) in self.members.iter().zip(&self.coefficients) {
            f += coef * (-table.summed(m, x, &self.groups) / self.gamma).exp();
        }
        f + self.bias
    }
}

/// Mean chi-square distance over distinct pairs of `members`.
pub fn mean_distance(table: &DistanceTable, members: &[usize], groups: &[usize]) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    for (p, &i) in members.iter().enumerate() {
        for &j in &members[p + 1..] {
            sum += table.summed(i, j, groups);
            count += 1;
        }
    }
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

/// Trains the machine for `classes` on the training positions `members`.
/// Samples of other classes are ignored.
#[allow(clippy::too_many_arguments)]
pub fn train_pairwise(
    table: &DistanceTable,
    descriptors: &[ClipDescriptor],
    labels: &[usize],
    members: &[usize],
    classes: (usize, usize),
    groups: &[usize],
    params: &SvmParams,
    gamma: GammaPolicy,
) -> Result<PairwiseSvm> {
    let (a, b) = classes;
    let idx: Vec<usize> = members
        .iter()
        .copied()
        .filter(|&i| labels[i] == a || labels[i] == b)
        .collect();
    let y: Vec<f64> = idx.iter().map(|&i| if labels[i] == a { 1.0 } else { -1.0 }).collect();
    let gamma = match gamma {
        GammaPolicy::Fixed(g) => g,
        GammaPolicy::MeanDistance => {
            let m = mean_distance(table, &idx, groups);
            if m > 0.0 {
                m
            } else {
                1.0
            }
        }
    };
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::Config(format!("kernel gamma must be positive, got {gamma}")));
    }
    let n = idx.len();
    let mut gram = DMatrix::zeros(n, n);
    for u in 0..n {
        gram[(u, u)] = 1.0;
        for v in u + 1..n {
            let k = (-table.summed(idx[u], idx[v], groups) / gamma).exp();
            gram[(u, v)] = k;
            gram[(v, u)] = k;
        }
    }
    let sol = smo(&gram, &y, params)
        .map_err(|e| e.context(format_args!("classes ({a}, {b})")))?;
    let mut svm = PairwiseSvm {
        classes,
        groups: groups.to_vec(),
        gamma,
        c: params.c,
        support_vectors: Vec::new(),
        coefficients: Vec::new(),
        bias: sol.bias,
        converged: sol.converged,
        members: Vec::new(),
    };
    for (u, &alpha) in sol.alpha.iter().enumerate() {
        if alpha > 0.0 {
            let d = &descriptors[idx[u]];
            svm.support_vectors
                .push(groups.iter().map(|&r| d.groups[r].histogram.bins.clone()).collect());
            svm.coefficients.push(alpha * y[u]);
            svm.members.push(idx[u]);
        }
    }
    Ok(svm)
}

pub const MODEL_FORMAT: &str = "mexp-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MulticlassModel {
    pub format: String,
    pub version: u32,
    /// Descriptor configuration fingerprint the model expects.
    pub fingerprint: String,
    pub n_groups: usize,
    /// Class labels covered, ascending.
    pub classes: Vec<usize>,
    pub class_names: Vec<String>,
    /// Group count per pair when selection is on.
    pub selection_p: Option<usize>,
    pub machines: Vec<PairwiseSvm>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub label: usize,
    /// Votes per entry of `MulticlassModel::classes`.
    pub votes: Vec<usize>,
    /// Decision value per machine.
    pub decisions: Vec<f64>,
}

/// Training inputs shared across folds: descriptors of every clip, their
/// labels, and the distance table over all of them.
#[derive(Clone, Copy)]
pub struct TrainingData<'a> {
    pub table: &'a DistanceTable,
    pub descriptors: &'a [ClipDescriptor],
    pub labels: &'a [usize],
    pub class_names: &'a [String],
}

/// Classifier settings resolved for one training run.
#[derive(Debug, Clone, PartialEq)]
pub struct FitParams {
    pub svm: SvmParams,
    pub gamma: GammaPolicy,
    /// Groups kept per class pair; `None` uses every group.
    pub selection_p: Option<usize>,
}

fn classes_of(labels: &[usize], members: &[usize]) -> Vec<usize> {
    members
        .iter()
        .map(|&i| labels[i])
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

/// Trains the one-vs-one model on `members`.
pub fn train_multiclass(data: TrainingData<'_>, members: &[usize], params: &FitParams) -> Result<MulticlassModel> {
    let classes = classes_of(data.labels, members);
    if classes.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "training set has {} classes; need at least 2",
            classes.len()
        )));
    }
    let n_groups = data.table.n_groups();
    let selection: Option<SelectionModel> = params
        .selection_p
        .map(|p| selection::fit_selection(data.table, members, data.labels, &classes, p))
        .transpose()?;
    let all_groups: Vec<usize> = (0..n_groups).collect();
    let mut pairs = Vec::new();
    for (x, &a) in classes.iter().enumerate() {
        for &b in &classes[x + 1..] {
            pairs.push((a, b));
        }
    }
    let machines = crate::par::try_map(&pairs, |&(a, b)| {
        let groups = match &selection {
            Some(sel) => sel
                .for_pair(a, b)
                .map(|s| s.sorted_groups())
                .unwrap_or_else(|| all_groups.clone()),
            None => all_groups.clone(),
        };
        train_pairwise(
            data.table,
            data.descriptors,
            data.labels,
            members,
            (a, b),
            &groups,
            &params.svm,
            params.gamma,
        )
    })?;
    let fingerprint = data
        .descriptors
        .first()
        .map(|d| d.fingerprint.clone())
        .unwrap_or_default();
    Ok(MulticlassModel {
        format: MODEL_FORMAT.into(),
        version: MODEL_VERSION,
        fingerprint,
        n_groups,
        classes,
        class_names: data.class_names.to_vec(),
        selection_p: params.selection_p,
        machines,
    })
}

impl MulticlassModel {
    fn tally(&self, decisions: Vec<f64>) -> Prediction {
        let k = self.classes.len();
        let mut votes = vec![0usize; k];
        let mut strength = vec![0.0f64; k];
        for (m, &f) in self.machines.iter().zip(&decisions) {
            let winner = if f > 0.0 { m.classes.0 } else { m.classes.1 };
            let slot = self.classes.iter().position(|&c| c == winner).unwrap();
            votes[slot] += 1;
            strength[slot] += f.abs();
        }
        let best = (0..k)
            .max_by(|&p, &q| {
                votes[p]
                    .cmp(&votes[q])
                    .then(strength[p].total_cmp(&strength[q]))
                    .then(q.cmp(&p))
            })
            .unwrap();
        Prediction {
            label: self.classes[best],
            votes,
            decisions,
        }
    }

    pub fn predict(&self, descriptor: &ClipDescriptor) -> Result<Prediction> {
        if descriptor.fingerprint != self.fingerprint {
            return Err(Error::Config(format!(
                "descriptor fingerprint {} does not match model fingerprint {}",
                descriptor.fingerprint, self.fingerprint
            )));
        }
        if descriptor.n_groups() != self.n_groups {
            return Err(Error::InvalidInput(format!(
                "descriptor has {} groups, model expects {}",
                descriptor.n_groups(),
                self.n_groups
            )));
        }
        let decisions = self.machines.iter().map(|m| m.decision(descriptor)).collect();
        Ok(self.tally(decisions))
    }

    /// Prediction for sample `x` of the training table (used during cross
    /// validation); identical to [`MulticlassModel::predict`].
    pub fn predict_in(&self, table: &DistanceTable, x: usize) -> Prediction {
        let decisions = self.machines.iter().map(|m| m.decision_in(table, x)).collect();
        self.tally(decisions)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::InvalidInput(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: MulticlassModel =
            serde_json::from_str(text).map_err(|e| Error::InvalidInput(format!("model file: {e}")))?;
        if model.format != MODEL_FORMAT || model.version != MODEL_VERSION {
            return Err(Error::InvalidInput(format!(
                "unsupported model format {} v{}",
                model.format, model.version
            )));
        }
        Ok(model)
    }
}

/// Stratified fold assignment of `members` into `k` folds.
pub fn stratified_folds(labels: &[usize], members: &[usize], k: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![Vec::new(); k];
    let mut next = 0usize;
    for class in classes_of(labels, members) {
        let mut of_class: Vec<usize> = members.iter().copied().filter(|&i| labels[i] == class).collect();
        of_class.shuffle(&mut rng);
        for i in of_class {
            folds[next % k].push(i);
            next += 1;
        }
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    folds
}

const MAX_REFOLDS: u64 = 5;

/// Folds whose training complements each contain every class, retrying with
/// new seeds.
fn usable_folds(labels: &[usize], members: &[usize], k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    let classes = classes_of(labels, members);
    for attempt in 0..MAX_REFOLDS {
        let folds = stratified_folds(labels, members, k, seed.wrapping_add(attempt));
        let ok = folds.iter().all(|test| {
            let rest: Vec<usize> = members.iter().copied().filter(|i| !test.contains(i)).collect();
            !test.is_empty() && classes_of(labels, &rest) == classes
        });
        if ok {
            return Ok(folds);
        }
    }
    Err(Error::InvalidInput(format!(
        "could not build {k} folds in which every training part holds every class"
    )))
}

/// The `(P, C)` chosen by cross validation, with its mean accuracy.
#[derive(Debug, Clone, PartialEq)]
pub struct CvChoice {
    pub c: f64,
    pub p: Option<usize>,
    pub accuracy: f64,
}

/// Picks `C` from `c_grid` (and `P` from `p_grid` when given) by mean
/// stratified k-fold accuracy on `members`. Ties prefer larger `P`, then
/// smaller `C`.
pub fn cross_validate(
    data: TrainingData<'_>,
    members: &[usize],
    base: &FitParams,
    c_grid: &[f64],
    p_grid: Option<&[usize]>,
    folds: usize,
    seed: u64,
) -> Result<CvChoice> {
    if c_grid.is_empty() {
        return Err(Error::Config("penalty grid is empty".into()));
    }
    let mut grid_c: Vec<f64> = c_grid.to_vec();
    grid_c.sort_by(f64::total_cmp);
    let grid_p: Vec<Option<usize>> = match p_grid {
        Some(ps) => {
            let mut ps = ps.to_vec();
            ps.sort_unstable_by(|a, b| b.cmp(a));
            ps.dedup();
            ps.into_iter().map(Some).collect()
        }
        None => vec![base.selection_p],
    };
    if grid_c.len() == 1 && grid_p.len() == 1 {
        return Ok(CvChoice {
            c: grid_c[0],
            p: grid_p[0],
            accuracy: f64::NAN,
        });
    }
    let fold_sets = usable_folds(data.labels, members, folds, seed)?;
    let mut candidates = Vec::new();
    for &p in &grid_p {
        for &c in &grid_c {
            candidates.push((p, c));
        }
    }
    let scores = crate::par::try_map(&candidates, |&(p, c)| {
        let params = FitParams {
            svm: SvmParams { c, ..base.svm },
            gamma: base.gamma,
            selection_p: p,
        };
        let mut acc = 0.0;
        for test in &fold_sets {
            let train: Vec<usize> = members.iter().copied().filter(|i| !test.contains(i)).collect();
            let model = train_multiclass(data, &train, &params)?;
            let correct = test
                .iter()
                .filter(|&&x| model.predict_in(data.table, x).label == data.labels[x])
                .count();
            acc += correct as f64 / test.len() as f64;
        }
        Ok(acc / fold_sets.len() as f64)
    })?;
    // candidates run larger P first, smaller C first; keep the first maximum
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    Ok(CvChoice {
        c: candidates[best].1,
        p: candidates[best].0,
        accuracy: scores[best],
    })
}

/// Picks `C` from `c_grid` by stratified k-fold accuracy, ties to the smaller.
pub fn select_penalty(
    data: TrainingData<'_>,
    members: &[usize],
    base: &FitParams,
    c_grid: &[f64],
    folds: usize,
    seed: u64,
) -> Result<f64> {
    Ok(cross_validate(data, members, base, c_grid, None, folds, seed)?.c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::descriptor::{GroupFeature, Plane};
    use crate::encoding::Histogram;
    use rand::Rng;

    fn descriptor(groups: Vec<Vec<f64>>) -> ClipDescriptor {
        ClipDescriptor {
            groups: groups
                .into_iter()
                .enumerate()
                .map(|(k, bins)| GroupFeature {
                    block_index: k / 4,
                    plane: Plane::ALL[k % 4],
                    histogram: Histogram { bins, normalized: true },
                })
                .collect(),
            fingerprint: "fp".into(),
        }
    }

    fn random_hist(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
        let v: Vec<f64> = (0..len).map(|_| rng.random_range(0.0..1.0)).collect();
        let s: f64 = v.iter().sum();
        v.into_iter().map(|x| x / s).collect()
    }

    /// Clusters around class prototypes: class c puts extra mass in bin c.
    fn clustered(n_per_class: usize, classes: usize, spread: f64, seed: u64) -> (Vec<ClipDescriptor>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut descs = Vec::new();
        let mut labels = Vec::new();
        for c in 0..classes {
            for _ in 0..n_per_class {
                let groups = (0..2)
                    .map(|_| {
                        let mut h: Vec<f64> = (0..6).map(|_| spread * rng.random_range(0.0..1.0)).collect();
                        h[c] += 1.0;
                        let s: f64 = h.iter().sum();
                        h.into_iter().map(|x| x / s).collect()
                    })
                    .collect();
                descs.push(descriptor(groups));
                labels.push(c);
            }
        }
        (descs, labels)
    }

    #[test]
    fn kernel_basics() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_hist(&mut rng, 8);
        let y = random_hist(&mut rng, 8);
        assert_eq!(chi_square_kernel(&x, &x, 0.5).unwrap(), 1.0);
        assert_eq!(chi_square_kernel(&x, &y, 0.5).unwrap(), chi_square_kernel(&y, &x, 0.5).unwrap());
        assert!(chi_square_kernel(&x, &y, 0.5).unwrap() < 1.0);
        assert!(chi_square_kernel(&x, &[0.0], 0.5).is_err());
        assert!(chi_square_kernel(&x, &y, 0.0).is_err());
    }

    #[test]
    fn kernel_decreases_with_distance() {
        let base = [0.5, 0.5, 0.0];
        let mut last = f64::INFINITY;
        for t in [0.0, 0.1, 0.2, 0.4, 0.5] {
            let other = [0.5 - t, 0.5, t];
            let k = chi_square_kernel(&base, &other, 0.3).unwrap();
            assert!(k < last);
            last = k;
        }
    }

    #[test]
    fn gram_matrices_are_psd() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10 {
            let xs: Vec<Vec<f64>> = (0..10).map(|_| random_hist(&mut rng, 16)).collect();
            let gram = DMatrix::from_fn(10, 10, |i, j| chi_square_kernel(&xs[i], &xs[j], 0.7).unwrap());
            assert_eq!(gram, gram.transpose());
            assert!(gram.symmetric_eigenvalues().min() >= -1e-8);
        }
    }

    fn setup(descs: &[ClipDescriptor]) -> DistanceTable {
        DistanceTable::compute(descs).unwrap()
    }

    #[test]
    fn separated_clusters_train_perfectly() {
        let (descs, labels) = clustered(5, 2, 0.05, 3);
        // nearest-neighbour separability check first
        let table = setup(&descs);
        let all: Vec<usize> = (0..descs.len()).collect();
        for i in 0..descs.len() {
            let nn = (0..descs.len())
                .filter(|&j| j != i)
                .min_by(|&a, &b| table.summed(i, a, &[0, 1]).total_cmp(&table.summed(i, b, &[0, 1])))
                .unwrap();
            assert_eq!(labels[nn], labels[i]);
        }
        let svm = train_pairwise(&table, &descs, &labels, &all, (0, 1), &[0, 1], &SvmParams::with_c(10.0), GammaPolicy::MeanDistance).unwrap();
        assert!(svm.converged);
        for (i, d) in descs.iter().enumerate() {
            assert_eq!(svm.decision(d) > 0.0, labels[i] == 0);
            assert_eq!(svm.decision(d), svm.decision_in(&table, i));
        }
        assert!(svm.coefficients.iter().all(|a| a.abs() <= 10.0));
    }

    #[test]
    fn smo_satisfies_dual_constraints() {
        let (descs, labels) = clustered(8, 2, 1.5, 4);
        let table = setup(&descs);
        let all: Vec<usize> = (0..descs.len()).collect();
        let params = SvmParams::with_c(0.5);
        let svm = train_pairwise(&table, &descs, &labels, &all, (0, 1), &[0, 1], &params, GammaPolicy::MeanDistance).unwrap();
        let sum: f64 = svm.coefficients.iter().sum();
        assert!(sum.abs() < 1e-9);
        assert!(svm.coefficients.iter().all(|a| a.abs() <= 0.5 + 1e-12));
    }

    #[test]
    fn duplicated_training_set_keeps_decision_function() {
        let (descs, labels) = clustered(4, 2, 0.1, 5);
        let mut dup_descs = descs.clone();
        dup_descs.extend(descs.iter().cloned());
        let mut dup_labels = labels.clone();
        dup_labels.extend(labels.iter().copied());
        let params = SvmParams { c: 1e6, tol: 1e-12, max_iter: 1_000_000 };
        let gamma = GammaPolicy::Fixed(0.5);
        let t1 = setup(&descs);
        let t2 = setup(&dup_descs);
        let m1: Vec<usize> = (0..descs.len()).collect();
        let m2: Vec<usize> = (0..dup_descs.len()).collect();
        let a = train_pairwise(&t1, &descs, &labels, &m1, (0, 1), &[0, 1], &params, gamma).unwrap();
        let b = train_pairwise(&t2, &dup_descs, &dup_labels, &m2, (0, 1), &[0, 1], &params, gamma).unwrap();
        let (probe, _) = clustered(3, 2, 0.8, 6);
        for d in &probe {
            assert!((a.decision(d) - b.decision(d)).abs() < 1e-6, "{} vs {}", a.decision(d), b.decision(d));
        }
    }

    #[test]
    fn tiny_penalty_still_beats_chance() {
        let (descs, labels) = clustered(6, 2, 0.5, 7);
        let table = setup(&descs);
        let all: Vec<usize> = (0..descs.len()).collect();
        let svm = train_pairwise(&table, &descs, &labels, &all, (0, 1), &[0, 1], &SvmParams::with_c(1e-6), GammaPolicy::MeanDistance).unwrap();
        let spread = descs.iter().map(|d| (svm.decision(d) - svm.bias).abs()).fold(0.0, f64::max);
        assert!(spread < 1e-4);
        let correct = descs.iter().zip(&labels).filter(|(d, &l)| (svm.decision(d) > 0.0) == (l == 0)).count();
        assert!(correct * 2 >= descs.len());
    }

    fn data<'a>(table: &'a DistanceTable, descs: &'a [ClipDescriptor], labels: &'a [usize], names: &'a [String]) -> TrainingData<'a> {
        TrainingData { table, descriptors: descs, labels, class_names: names }
    }

    #[test]
    fn multiclass_votes_and_round_trip() {
        let (descs, labels) = clustered(6, 3, 0.3, 8);
        let table = setup(&descs);
        let names: Vec<String> = vec!["a".into(), "b".into(), "c".into()];
        let all: Vec<usize> = (0..descs.len()).collect();
        let params = FitParams { svm: SvmParams::with_c(1.0), gamma: GammaPolicy::MeanDistance, selection_p: None };
        let model = train_multiclass(data(&table, &descs, &labels, &names), &all, &params).unwrap();
        assert_eq!(model.machines.len(), 3);
        let restored = MulticlassModel::from_json(&model.to_json().unwrap()).unwrap();
        for (i, d) in descs.iter().enumerate() {
            let p = model.predict(d).unwrap();
            assert_eq!(p, model.predict_in(&table, i));
            // brute-force tally
            let mut votes = [0usize; 3];
            for m in &model.machines {
                let f = m.decision(d);
                votes[if f > 0.0 { m.classes.0 } else { m.classes.1 }] += 1;
            }
            assert_eq!(p.votes, votes.to_vec());
            let top = *votes.iter().max().unwrap();
            if votes.iter().filter(|&&v| v == top).count() == 1 {
                assert_eq!(votes[p.label], top);
            }
            assert_eq!(restored.predict(d).unwrap(), p);
        }
        let mut wrong = descs[0].clone();
        wrong.fingerprint = "other".into();
        assert!(matches!(model.predict(&wrong), Err(Error::Config(_))));
    }

    #[test]
    fn two_classes_follow_the_sign() {
        let (descs, labels) = clustered(5, 2, 0.6, 9);
        let table = setup(&descs);
        let names: Vec<String> = vec!["a".into(), "b".into()];
        let all: Vec<usize> = (0..descs.len()).collect();
        let params = FitParams { svm: SvmParams::with_c(1.0), gamma: GammaPolicy::MeanDistance, selection_p: None };
        let model = train_multiclass(data(&table, &descs, &labels, &names), &all, &params).unwrap();
        for d in &descs {
            let p = model.predict(d).unwrap();
            assert_eq!(p.label, if p.decisions[0] > 0.0 { 0 } else { 1 });
        }
    }

    #[test]
    fn tie_break_prefers_stronger_then_lower_label() {
        let model = MulticlassModel {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            fingerprint: String::new(),
            n_groups: 0,
            classes: vec![0, 1, 2],
            class_names: vec![],
            selection_p: None,
            machines: [(0, 1), (0, 2), (1, 2)]
                .iter()
                .map(|&classes| PairwiseSvm {
                    classes,
                    groups: vec![],
                    gamma: 1.0,
                    c: 1.0,
                    support_vectors: vec![],
                    coefficients: vec![],
                    bias: 0.0,
                    converged: true,
                    members: vec![],
                })
                .collect(),
        };
        // cyclic votes 0>1, 2>0, 1>2: one vote each
        let p = model.tally(vec![1.0, -3.0, 2.0]);
        assert_eq!(p.votes, vec![1, 1, 1]);
        assert_eq!(p.label, 2);
        let p = model.tally(vec![1.0, -1.0, 1.0]);
        assert_eq!(p.label, 0);
    }

    #[test]
    fn penalty_selection_rules() {
        let (descs, labels) = clustered(6, 3, 0.8, 10);
        let table = setup(&descs);
        let names: Vec<String> = vec!["a".into(), "b".into(), "c".into()];
        let all: Vec<usize> = (0..descs.len()).collect();
        let base = FitParams { svm: SvmParams::with_c(1.0), gamma: GammaPolicy::MeanDistance, selection_p: None };
        let d = data(&table, &descs, &labels, &names);
        assert_eq!(select_penalty(d, &all, &base, &[4.0], 3, 0).unwrap(), 4.0);
        // huge C values are all equivalent on separable data: smallest wins
        let (sep, sep_labels) = clustered(6, 3, 0.01, 11);
        let sep_table = setup(&sep);
        let ds = data(&sep_table, &sep, &sep_labels, &names);
        let c = select_penalty(ds, &all, &base, &[1e5, 1e4, 1e3], 3, 0).unwrap();
        assert_eq!(c, 1e3);
        let choice = cross_validate(d, &all, &base, &[1.0], Some(&[1, 2]), 3, 0).unwrap();
        assert!(choice.p.is_some());
    }

    #[test]
    fn folds_are_stratified_and_deterministic() {
        let labels: Vec<usize> = (0..18).map(|i| i % 3).collect();
        let members: Vec<usize> = (0..18).collect();
        let f = stratified_folds(&labels, &members, 3, 42);
        assert_eq!(f, stratified_folds(&labels, &members, 3, 42));
        for fold in &f {
            assert_eq!(fold.len(), 6);
            for c in 0..3 {
                assert_eq!(fold.iter().filter(|&&i| labels[i] == c).count(), 2);
            }
        }
        let lonely = [0, 0, 0, 1];
        assert!(usable_folds(&lonely, &[0, 1, 2, 3], 3, 0).is_err());
    }
}
