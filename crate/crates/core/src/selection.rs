//! Laplacian-score group selection.
//!
//! For a pair of classes, every unordered pair of distinct clips yields a
//! dissimilarity vector `g` holding one chi-square distance per group, labelled
//! +1 when both clips share a class and -1 otherwise. Same-label vectors are
//! linked by cosine similarity, and each group is scored by
//! `g~' L g~ / g~' D g~`; the groups with the smallest scores are kept.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::descriptor::ClipDescriptor;
use crate::encoding::Histogram;
use crate::error::{Error, Result};

/// Chi-square distance `sum (a - b)^2 / (a + b)`, skipping empty bins.
pub fn chi_square(h1: &Histogram, h2: &Histogram) -> Result<f64> {
    chi_square_slices(&h1.bins, &h2.bins)
}

pub fn chi_square_slices(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::InvalidInput(format!(
            "chi-square of histograms of length {} and {}",
            a.len(),
            b.len()
        )));
    }
    Ok(chi_square_unchecked(a, b))
}

#[inline]
pub(crate) fn chi_square_unchecked(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let s = x + y;
            if s == 0.0 {
                0.0
            } else {
                let d = x - y;
                d * d / s
            }
        })
        .sum()
}

/// Per-group chi-square distances between two descriptors.
pub fn group_distances(a: &ClipDescriptor, b: &ClipDescriptor) -> Result<Vec<f64>> {
    if a.n_groups() != b.n_groups() {
        return Err(Error::InvalidInput(format!(
            "descriptors have {} and {} groups",
            a.n_groups(),
            b.n_groups()
        )));
    }
    a.groups
        .iter()
        .zip(&b.groups)
        .map(|(x, y)| chi_square(&x.histogram, &y.histogram))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DissimilarityFeature {
    pub g: Vec<f64>,
    /// +1 for a same-class pair, -1 for a cross-class pair.
    pub label: i8,
    /// Positions of the two clips in the sample list.
    pub pair: (usize, usize),
}

/// Dissimilarity features for classes `a` and `b` from per-clip group
/// distances.
///
/// `labels[i]` is the class of sample `i`; samples of other classes are
/// skipped. `distance(i, j)` returns the group distance vector of samples `i`
/// and `j`. Pairs are unordered and distinct.
pub fn build_pairs_with<F>(labels: &[usize], a: usize, b: usize, mut distance: F) -> Result<Vec<DissimilarityFeature>>
where
    F: FnMut(usize, usize) -> Result<Vec<f64>>,
{
    let members: Vec<usize> = (0..labels.len())
        .filter(|&i| labels[i] == a || labels[i] == b)
        .collect();
    for class in [a, b] {
        let count = members.iter().filter(|&&i| labels[i] == class).count();
        if count < 2 {
            return Err(Error::InvalidInput(format!(
                "class {class} has {count} samples; pairwise selection needs at least 2"
            )));
        }
    }
    let mut out = Vec::with_capacity(members.len() * (members.len() - 1) / 2);
    for (p, &i) in members.iter().enumerate() {
        for &j in &members[p + 1..] {
            out.push(DissimilarityFeature {
                g: distance(i, j)?,
                label: if labels[i] == labels[j] { 1 } else { -1 },
                pair: (i, j),
            });
        }
    }
    Ok(out)
}

/// Dissimilarity features for classes `a` and `b` computed from descriptors.
pub fn build_pairs(
    descriptors: &[&ClipDescriptor],
    labels: &[usize],
    a: usize,
    b: usize,
) -> Result<Vec<DissimilarityFeature>> {
    if descriptors.len() != labels.len() {
        return Err(Error::InvalidInput("descriptor and label counts differ".into()));
    }
    build_pairs_with(labels, a, b, |i, j| group_distances(descriptors[i], descriptors[j]))
}

fn cosine(u: &[f64], v: &[f64]) -> f64 {
    let nu = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        // identical-descriptor limit
        return 1.0;
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    dot / (nu * nv)
}

/// Label-gated cosine similarity graph over the features.
pub fn weight_matrix(features: &[DissimilarityFeature]) -> DMatrix<f64> {
    let n = features.len();
    let mut w = DMatrix::zeros(n, n);
    for u in 0..n {
        for v in u..n {
            if features[u].label == features[v].label {
                let c = if u == v { 1.0 } else { cosine(&features[u].g, &features[v].g) };
                w[(u, v)] = c;
                w[(v, u)] = c;
            }
        }
    }
    w
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaplacianScores {
    /// One score per group; `+inf` for groups with no weighted variance.
    #[serde(with = "crate::serde_float::vec")]
    pub scores: Vec<f64>,
    pub classes: (usize, usize),
    pub n_pairs: usize,
}

/// A similarity graph prepared for scoring: weights, degrees and Laplacian.
pub struct Graph {
    degree: DVector<f64>,
    volume: f64,
    laplacian: DMatrix<f64>,
}

impl Graph {
    pub fn new(weights: DMatrix<f64>) -> Result<Self> {
        let n = weights.nrows();
        let degree = DVector::from_iterator(n, weights.row_iter().map(|r| r.sum()));
        let volume = degree.sum();
        if !(volume > 0.0) {
            return Err(Error::Numeric("similarity graph has no edges".into()));
        }
        let laplacian = DMatrix::from_diagonal(&degree) - weights;
        Ok(Graph {
            degree,
            volume,
            laplacian,
        })
    }

    /// Score of one feature dimension given its value on every node.
    pub fn score(&self, values: &[f64]) -> f64 {
        let g = DVector::from_column_slice(values);
        let mean = g.dot(&self.degree) / self.volume;
        let centered = g.add_scalar(-mean);
        let var = centered.component_mul(&centered).dot(&self.degree);
        let scale = g.component_mul(&g).dot(&self.degree);
        if var == 0.0 || var <= 1e-12 * scale {
            return f64::INFINITY;
        }
        centered.dot(&(&self.laplacian * &centered)) / var
    }
}

/// Laplacian score of every dimension of the features.
pub fn laplacian_scores(features: &[DissimilarityFeature], classes: (usize, usize)) -> Result<LaplacianScores> {
    let n = features.len();
    if n < 2 {
        return Err(Error::InvalidInput(format!(
            "Laplacian scores need at least 2 features, got {n}"
        )));
    }
    let dims = features[0].g.len();
    if features.iter().any(|f| f.g.len() != dims) {
        return Err(Error::InvalidInput("dissimilarity features differ in length".into()));
    }
    let w = weight_matrix(features);
    let graph = Graph::new(w)?;
    let scores = (0..dims)
        .map(|r| {
            let values: Vec<f64> = features.iter().map(|f| f.g[r]).collect();
            graph.score(&values)
        })
        .collect();
    Ok(LaplacianScores {
        scores,
        classes,
        n_pairs: n,
    })
}

/// Indices of the `p` smallest scores in ascending score order, ties to the
/// lower index.
pub fn select_groups(scores: &[f64], p: usize) -> Result<Vec<usize>> {
    if p == 0 || p > scores.len() {
        return Err(Error::Config(format!(
            "P must be in 1..={}, got {p}",
            scores.len()
        )));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| scores[i].total_cmp(&scores[j]).then(i.cmp(&j)));
    order.truncate(p);
    Ok(order)
}

/// Selected groups for one class pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSelection {
    pub classes: (usize, usize),
    /// Group indices in ascending score order.
    pub groups: Vec<usize>,
    #[serde(with = "crate::serde_float::vec")]
    pub scores: Vec<f64>,
}

impl PairSelection {
    /// Selected indices in ascending group order, as consumed by the kernel.
    pub fn sorted_groups(&self) -> Vec<usize> {
        let mut g = self.groups.clone();
        g.sort_unstable();
        g
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionModel {
    pub p: usize,
    pub pairs: Vec<PairSelection>,
}

/// Chi-square distance of every group for every pair of clips, computed
/// once and shared by selection, kernel training and prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceTable {
    n: usize,
    groups: usize,
    data: Vec<f64>,
}

impl DistanceTable {
    pub fn compute(descriptors: &[ClipDescriptor]) -> Result<Self> {
        let n = descriptors.len();
        let groups = descriptors.first().map_or(0, |d| d.n_groups());
        for d in descriptors {
            if d.n_groups() != groups {
                return Err(Error::InvalidInput("descriptors differ in group count".into()));
            }
            for (r, g) in d.groups.iter().enumerate() {
                if g.histogram.len() != descriptors[0].groups[r].histogram.len() {
                    return Err(Error::InvalidInput(format!(
                        "group {r} histograms differ in length"
                    )));
                }
            }
        }
        let rows: Vec<usize> = (0..n).collect();
        let upper = crate::par::map(&rows, |&i| {
            let mut row = Vec::with_capacity((n - i) * groups);
            for j in i..n {
                for r in 0..groups {
                    row.push(chi_square_unchecked(
                        &descriptors[i].groups[r].histogram.bins,
                        &descriptors[j].groups[r].histogram.bins,
                    ));
                }
            }
            row
        });
        let mut data = vec![0.0; n * n * groups];
        for (i, row) in upper.into_iter().enumerate() {
            for (k, chunk) in row.chunks(groups.max(1)).enumerate().take(n - i) {
                let j = i + k;
                data[(i * n + j) * groups..(i * n + j + 1) * groups].copy_from_slice(chunk);
                data[(j * n + i) * groups..(j * n + i + 1) * groups].copy_from_slice(chunk);
            }
        }
        Ok(DistanceTable { n, groups, data })
    }

    pub fn n_samples(&self) -> usize {
        self.n
    }

    pub fn n_groups(&self) -> usize {
        self.groups
    }

    /// Per-group distances of samples `i` and `j`.
    pub fn groups_of(&self, i: usize, j: usize) -> &[f64] {
        let start = (i * self.n + j) * self.groups;
        &self.data[start..start + self.groups]
    }

    /// Chi-square distance over the concatenation of `groups`, summed in the
    /// order given.
    pub fn summed(&self, i: usize, j: usize, groups: &[usize]) -> f64 {
        let g = self.groups_of(i, j);
        let mut d = 0.0;
        for &r in groups {
            d += g[r];
        }
        d
    }
}

/// Fits per-pair group selections on the samples `members` (positions into
/// `table`/`labels`) for every pair of `classes`.
///
/// A pair in which a class has fewer than two samples cannot be scored and
/// keeps all groups.
pub fn fit_selection(
    table: &DistanceTable,
    members: &[usize],
    labels: &[usize],
    classes: &[usize],
    p: usize,
) -> Result<SelectionModel> {
    let groups = table.n_groups();
    if p == 0 || p > groups {
        return Err(Error::Config(format!("P must be in 1..={groups}, got {p}")));
    }
    let local_labels: Vec<usize> = members.iter().map(|&i| labels[i]).collect();
    let mut pairs = Vec::new();
    for (x, &a) in classes.iter().enumerate() {
        for &b in &classes[x + 1..] {
            let features = build_pairs_with(&local_labels, a, b, |u, v| {
                Ok(table.groups_of(members[u], members[v]).to_vec())
            });
            let selection = match features {
                Ok(features) => {
                    let scores = laplacian_scores(&features, (a, b))?.scores;
                    PairSelection {
                        classes: (a, b),
                        groups: select_groups(&scores, p)?,
                        scores,
                    }
                }
                Err(Error::InvalidInput(msg)) => {
                    log::warn!("classes ({a}, {b}): {msg}; keeping all groups");
                    PairSelection {
                        classes: (a, b),
                        groups: (0..groups).collect(),
                        scores: vec![f64::NAN; groups],
                    }
                }
                Err(e) => return Err(e),
            };
            pairs.push(selection);
        }
    }
    Ok(SelectionModel { p, pairs })
}

impl SelectionModel {
    pub fn for_pair(&self, a: usize, b: usize) -> Option<&PairSelection> {
        self.pairs
            .iter()
            .find(|s| s.classes == (a, b) || s.classes == (b, a))
    }
}
