//! End-to-end runs: decomposition and descriptors per clip, then
//! leave-one-subject-out training and evaluation with metrics.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cache::{self, DescriptorCache};
use crate::classify::{self, FitParams, GammaPolicy, MulticlassModel, SvmParams, TrainingData};
use crate::dataset::{DatasetIndex, VideoClip};
use crate::descriptor::{self, ClipDescriptor, DescriptorConfig};
use crate::error::{Error, Result};
use crate::rpca::{self, RpcaConfig};
use crate::selection::{self, DistanceTable, SelectionModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SelectionConfig {
    pub enabled: bool,
    /// Groups kept per class pair; absent means chosen by cross validation.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<usize>,
    /// Candidate group counts for the automatic choice; absent means a
    /// quarter, half, three quarters and all of the groups.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_grid: Option<Vec<usize>>,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            enabled: false,
            p: None,
            p_grid: None,
        }
    }
}

impl SelectionConfig {
    /// Candidate group counts for `n_groups` groups.
    pub fn candidates(&self, n_groups: usize) -> Vec<usize> {
        if let Some(p) = self.p {
            return vec![p];
        }
        if let Some(grid) = &self.p_grid {
            return grid.clone();
        }
        let mut grid: Vec<usize> = [1, 2, 3, 4]
            .iter()
            .map(|&q| (n_groups * q / 4).max(1))
            .collect();
        grid.dedup();
        grid
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifierConfig {
    pub c_grid: Vec<f64>,
    /// Fixed kernel width; absent uses the mean training distance.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    pub tol: f64,
    pub max_iter: usize,
    /// Inner cross-validation folds.
    pub folds: usize,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            c_grid: (-5..=7).step_by(2).map(|e| 2f64.powi(e)).collect(),
            gamma: None,
            tol: 1e-3,
            max_iter: 1_000_000,
            folds: 3,
        }
    }
}

impl ClassifierConfig {
    pub fn gamma_policy(&self) -> GammaPolicy {
        match self.gamma {
            Some(g) => GammaPolicy::Fixed(g),
            None => GammaPolicy::MeanDistance,
        }
    }

    pub fn svm(&self, c: f64) -> SvmParams {
        SvmParams {
            c,
            tol: self.tol,
            max_iter: self.max_iter,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Dataset index CSV, or a directory holding `index.csv`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dataset: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cache_dir: Option<PathBuf>,
    pub seed: u64,
    /// Worker threads; 0 uses every core.
    pub jobs: usize,
    pub descriptor: DescriptorConfig,
    pub rpca: RpcaConfig,
    pub selection: SelectionConfig,
    pub classifier: ClassifierConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dataset: None,
            cache_dir: None,
            seed: 0,
            jobs: 0,
            descriptor: DescriptorConfig::default(),
            rpca: RpcaConfig::default(),
            selection: SelectionConfig::default(),
            classifier: ClassifierConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.descriptor.validate()?;
        self.rpca.validate()?;
        let c = &self.classifier;
        if c.c_grid.is_empty() || c.c_grid.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::Config("classifier.c_grid must hold positive values".into()));
        }
        if let Some(g) = c.gamma {
            if !(g > 0.0 && g.is_finite()) {
                return Err(Error::Config("classifier.gamma must be positive".into()));
            }
        }
        if !(c.tol > 0.0) || c.max_iter == 0 {
            return Err(Error::Config("classifier.tol and classifier.max_iter must be positive".into()));
        }
        if c.folds < 2 {
            return Err(Error::Config("classifier.folds must be at least 2".into()));
        }
        let groups = self.descriptor.n_groups();
        let s = &self.selection;
        if s.p.is_some() && s.p_grid.is_some() {
            return Err(Error::Config("selection.p and selection.p_grid are exclusive".into()));
        }
        if s.candidates(groups).iter().any(|&p| p == 0 || p > groups) || s.p_grid.as_ref().is_some_and(|g| g.is_empty()) {
            return Err(Error::Config(format!("selection.p must lie in 1..={groups}")));
        }
        Ok(())
    }

    /// Index path named by `dataset`.
    pub fn index_path(&self) -> Result<PathBuf> {
        let path = self
            .dataset
            .as_ref()
            .ok_or_else(|| Error::Config("dataset path is not set".into()))?;
        let path = if path.is_dir() { path.join("index.csv") } else { path.clone() };
        if !path.is_file() {
            return Err(Error::Config(format!("dataset index {} does not exist", path.display())));
        }
        Ok(path)
    }
}

/// Descriptors for a set of clips plus how many came from the cache.
#[derive(Debug, Clone)]
pub struct Described {
    pub descriptors: Vec<ClipDescriptor>,
    pub cache_hits: usize,
}

/// Cache key of a clip under the given settings.
pub fn cache_key(clip: &VideoClip, descriptor: &DescriptorConfig, rpca: &RpcaConfig) -> String {
    let mut settings = descriptor.canonical();
    if descriptor.projection.needs_decomposition() {
        settings.push(';');
        settings.push_str(&serde_json::to_string(rpca).expect("rpca config serializes"));
    }
    cache::hex(&sha2::Sha256::digest(
        format!("{}|{}", cache::clip_hash(clip), settings).as_bytes(),
    ))
}

use sha2::Digest as _;

/// Decomposes (when needed) and describes every clip, consulting `cache`.
pub fn describe_clips(
    clips: &[VideoClip],
    descriptor: &DescriptorConfig,
    rpca_cfg: &RpcaConfig,
    cache: Option<&DescriptorCache>,
) -> Result<Described> {
    descriptor.validate()?;
    rpca_cfg.validate()?;
    let fingerprint = descriptor.fingerprint();
    let results = crate::par::try_map(clips, |clip| {
        let key = cache.map(|_| cache_key(clip, descriptor, rpca_cfg));
        if let (Some(c), Some(k)) = (cache, &key) {
            if let Some(d) = c.get(k, &fingerprint) {
                return Ok((d, true));
            }
        }
        let dec = if descriptor.projection.needs_decomposition() {
            Some(rpca::decompose_clip(clip, rpca_cfg)?)
        } else {
            None
        };
        let d = descriptor::extract_descriptor(clip, dec.as_ref(), descriptor)?;
        if let (Some(c), Some(k)) = (cache, &key) {
            c.put(k, &clip.clip_id, &d)?;
        }
        Ok((d, false))
    })?;
    let cache_hits = results.iter().filter(|(_, hit)| *hit).count();
    Ok(Described {
        descriptors: results.into_iter().map(|(d, _)| d).collect(),
        cache_hits,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipPrediction {
    pub clip_id: String,
    pub subject: String,
    pub truth: usize,
    pub predicted: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldSummary {
    /// Held-out subject.
    pub subject: String,
    pub n_train: usize,
    pub n_test: usize,
    pub correct: usize,
    pub c: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<usize>,
    /// Per class pair selected groups, when selection is on.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub selection: Option<SelectionModel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub fingerprint: String,
    pub seed: u64,
    pub descriptor: DescriptorConfig,
    pub rpca: RpcaConfig,
    pub selection: SelectionConfig,
    pub classifier: ClassifierConfig,
    /// Interpretations of points the method description leaves open.
    pub decisions: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub class_names: Vec<String>,
    /// Rows are true classes, columns predictions.
    pub confusion: Vec<Vec<usize>>,
    pub recognition_rate: f64,
    #[serde(with = "crate::serde_float::vec")]
    pub per_class_recall: Vec<f64>,
    pub folds: Vec<FoldSummary>,
    pub predictions: Vec<ClipPrediction>,
    pub metadata: RunMetadata,
}

impl EvaluationReport {
    pub fn total(&self) -> usize {
        self.confusion.iter().flatten().sum()
    }

    pub fn correct(&self) -> usize {
        (0..self.confusion.len()).map(|k| self.confusion[k][k]).sum()
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::InvalidInput(e.to_string()))
    }
}

pub fn decisions() -> BTreeMap<String, String> {
    [
        ("pair_enumeration", "unordered distinct clip pairs; same-class pairs of either class labelled +1, cross-class pairs -1"),
        ("kernel", "exp(-chi2(x, y) / gamma) over the concatenated selected groups; gamma defaults to the mean training-pair chi2 of each machine"),
        ("lbp_threshold", "unit step: a bit is set when the neighbour is greater than or equal to the centre"),
        ("histograms", "every group histogram is normalized to unit sum"),
        ("selection_scope", "group selection is refit in every leave-one-subject-out fold from training clips only"),
        ("penalty_scope", "C (and P when automatic) is chosen in every fold by stratified inner cross validation; ties prefer larger P, then smaller C"),
        ("multiclass", "one-vs-one voting; ties broken by summed absolute decision values, then the lower label"),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v.to_string()))
    .collect()
}

/// Per-class recall and recognition rate from a confusion matrix.
fn rates(confusion: &[Vec<usize>]) -> (f64, Vec<f64>) {
    let total: usize = confusion.iter().flatten().sum();
    let correct: usize = (0..confusion.len()).map(|k| confusion[k][k]).sum();
    let recall = confusion
        .iter()
        .enumerate()
        .map(|(k, row)| {
            let n: usize = row.iter().sum();
            if n == 0 {
                f64::NAN
            } else {
                row[k] as f64 / n as f64
            }
        })
        .collect();
    let rate = if total == 0 { f64::NAN } else { correct as f64 / total as f64 };
    (rate, recall)
}

/// Classifier settings chosen for one training set.
#[derive(Debug, Clone, PartialEq)]
pub struct Fitted {
    pub model: MulticlassModel,
    pub c: f64,
    pub p: Option<usize>,
}

/// Chooses `C` (and `P`) by inner cross validation on `members`, then
/// trains on all of them.
pub fn fit(data: TrainingData<'_>, members: &[usize], config: &RunConfig, seed: u64) -> Result<Fitted> {
    let groups = data.table.n_groups();
    let base = FitParams {
        svm: config.classifier.svm(config.classifier.c_grid[0]),
        gamma: config.classifier.gamma_policy(),
        selection_p: None,
    };
    let p_grid = config.selection.enabled.then(|| config.selection.candidates(groups));
    let choice = classify::cross_validate(
        data,
        members,
        &base,
        &config.classifier.c_grid,
        p_grid.as_deref(),
        config.classifier.folds,
        seed,
    )?;
    let params = FitParams {
        svm: config.classifier.svm(choice.c),
        gamma: base.gamma,
        selection_p: choice.p,
    };
    Ok(Fitted {
        model: classify::train_multiclass(data, members, &params)?,
        c: choice.c,
        p: choice.p,
    })
}

/// Leave-one-subject-out evaluation over clips already loaded.
pub fn run_loso_on(clips: &[VideoClip], index: &DatasetIndex, config: &RunConfig) -> Result<EvaluationReport> {
    let cache = config.cache_dir.as_ref().map(DescriptorCache::new);
    let described = describe_clips(clips, &config.descriptor, &config.rpca, cache.as_ref())?;
    evaluate(clips, &described.descriptors, index, config)
}

/// Leave-one-subject-out evaluation on precomputed descriptors.
pub fn evaluate(
    clips: &[VideoClip],
    descriptors: &[ClipDescriptor],
    index: &DatasetIndex,
    config: &RunConfig,
) -> Result<EvaluationReport> {
    config.validate()?;
    if clips.len() != descriptors.len() {
        return Err(Error::InvalidInput("one descriptor per clip is required".into()));
    }
    let k = index.class_names.len();
    let labels: Vec<usize> = clips.iter().map(|c| c.label).collect();
    if labels.iter().any(|&l| l >= k) {
        return Err(Error::InvalidInput("clip label outside the class list".into()));
    }
    let subjects: Vec<&str> = clips.iter().map(|c| c.subject_id.as_str()).collect();
    let splits = crate::dataset::loso_splits(&subjects)?;
    let table = DistanceTable::compute(descriptors)?;
    let data = TrainingData {
        table: &table,
        descriptors,
        labels: &labels,
        class_names: &index.class_names,
    };
    let indexed: Vec<(usize, &crate::dataset::Split)> = splits.iter().enumerate().collect();
    let folds = crate::par::try_map(&indexed, |&(f, split)| {
        let fitted = fit(data, &split.train, config, config.seed.wrapping_add(f as u64))
            .map_err(|e| e.context(format_args!("fold {}", split.subject)))?;
        let mut preds = Vec::with_capacity(split.test.len());
        for &x in &split.test {
            let p = fitted.model.predict(&descriptors[x])?;
            preds.push(ClipPrediction {
                clip_id: clips[x].clip_id.clone(),
                subject: clips[x].subject_id.clone(),
                truth: labels[x],
                predicted: p.label,
            });
        }
        let selection = match fitted.p {
            Some(p) => {
                let classes = fitted.model.classes.clone();
                Some(selection::fit_selection(&table, &split.train, &labels, &classes, p)?)
            }
            None => None,
        };
        let summary = FoldSummary {
            subject: split.subject.clone(),
            n_train: split.train.len(),
            n_test: split.test.len(),
            correct: preds.iter().filter(|p| p.truth == p.predicted).count(),
            c: fitted.c,
            p: fitted.p,
            selection,
        };
        Ok((summary, preds))
    })?;
    let mut confusion = vec![vec![0usize; k]; k];
    let mut summaries = Vec::new();
    let mut predictions = Vec::new();
    for (summary, preds) in folds {
        for p in &preds {
            confusion[p.truth][p.predicted] += 1;
        }
        summaries.push(summary);
        predictions.extend(preds);
    }
    let (recognition_rate, per_class_recall) = rates(&confusion);
    Ok(EvaluationReport {
        class_names: index.class_names.clone(),
        confusion,
        recognition_rate,
        per_class_recall,
        folds: summaries,
        predictions,
        metadata: RunMetadata {
            fingerprint: config.descriptor.fingerprint(),
            seed: config.seed,
            descriptor: config.descriptor.clone(),
            rpca: config.rpca.clone(),
            selection: config.selection.clone(),
            classifier: config.classifier.clone(),
            decisions: decisions(),
        },
    })
}

/// Loads the dataset named by the config and evaluates it.
pub fn run_loso(config: &RunConfig) -> Result<EvaluationReport> {
    let index = DatasetIndex::load(&config.index_path()?)?;
    let clips = index.load_clips()?;
    run_loso_on(&clips, &index, config)
}

/// Writes `confusion.csv`, `summary.json` and `predictions.csv` into `dir`.
pub fn emit_report(report: &EvaluationReport, dir: &Path) -> Result<()> {
    if report.total() == 0 {
        return Err(Error::InvalidInput("report has no predictions".into()));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write = |name: &str, text: String| {
        let path = dir.join(name);
        fs::write(&path, text).map_err(|e| Error::io(&path, e))
    };
    write("confusion.csv", confusion_csv(report))?;
    write("summary.json", report.to_json()? + "\n")?;
    let mut preds = String::from("clip_id,subject,truth,predicted\n");
    for p in &report.predictions {
        preds.push_str(&format!(
            "{},{},{},{}\n",
            p.clip_id, p.subject, report.class_names[p.truth], report.class_names[p.predicted]
        ));
    }
    write("predictions.csv", preds)
}

/// Confusion matrix as CSV with class names heading rows (truth) and columns
/// (prediction).
pub fn confusion_csv(report: &EvaluationReport) -> String {
    let mut out = String::from("truth\\predicted");
    for name in &report.class_names {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for (name, row) in report.class_names.iter().zip(&report.confusion) {
        out.push_str(name);
        for v in row {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    out
}

/// Parses [`confusion_csv`] output into class names and counts.
pub fn parse_confusion_csv(text: &str) -> Result<(Vec<String>, Vec<Vec<usize>>)> {
    let bad = |m: &str| Error::InvalidInput(format!("confusion CSV: {m}"));
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| bad("empty"))?
        .split(',')
        .skip(1)
        .map(String::from)
        .collect();
    let mut rows = Vec::new();
    for (k, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != header.len() + 1 || header.get(k).map(String::as_str) != Some(fields[0]) {
            return Err(bad("row does not match header"));
        }
        rows.push(
            fields[1..]
                .iter()
                .map(|f| f.parse().map_err(|_| bad("bad count")))
                .collect::<Result<Vec<usize>>>()?,
        );
    }
    if rows.len() != header.len() {
        return Err(bad("matrix is not square"));
    }
    Ok((header, rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(confusion: Vec<Vec<usize>>) -> EvaluationReport {
        let (recognition_rate, per_class_recall) = rates(&confusion);
        let cfg = RunConfig::default();
        EvaluationReport {
            class_names: (0..confusion.len()).map(|k| format!("c{k}")).collect(),
            confusion,
            recognition_rate,
            per_class_recall,
            folds: vec![],
            predictions: vec![],
            metadata: RunMetadata {
                fingerprint: cfg.descriptor.fingerprint(),
                seed: 0,
                descriptor: cfg.descriptor,
                rpca: cfg.rpca,
                selection: cfg.selection,
                classifier: cfg.classifier,
                decisions: decisions(),
            },
        }
    }

    #[test]
    fn default_grids() {
        let c = ClassifierConfig::default();
        assert_eq!(c.c_grid, vec![1.0 / 32.0, 0.125, 0.5, 2.0, 8.0, 32.0, 128.0]);
        let s = SelectionConfig::default();
        assert_eq!(s.candidates(84), vec![21, 42, 63, 84]);
        assert_eq!(s.candidates(2), vec![1, 2]);
        assert_eq!(SelectionConfig { p: Some(5), ..s }.candidates(84), vec![5]);
    }

    #[test]
    fn validation() {
        assert!(RunConfig::default().validate().is_ok());
        let mut c = RunConfig::default();
        c.selection.p = Some(85);
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let mut c = RunConfig::default();
        c.classifier.c_grid = vec![];
        assert!(c.validate().is_err());
        let mut c = RunConfig::default();
        c.classifier.folds = 1;
        assert!(c.validate().is_err());
        assert!(matches!(RunConfig::default().index_path(), Err(Error::Config(_))));
    }

    #[test]
    fn confusion_round_trip_and_rates() {
        let r = report(vec![vec![3, 1, 0], vec![0, 4, 0], vec![1, 1, 2]]);
        assert_eq!(r.recognition_rate, 9.0 / 12.0);
        assert_eq!(r.per_class_recall, vec![0.75, 1.0, 0.5]);
        let csv = confusion_csv(&r);
        assert!(csv.starts_with("truth\\predicted,c0,c1,c2\nc0,3,1,0\n"));
        let (names, m) = parse_confusion_csv(&csv).unwrap();
        assert_eq!(names, r.class_names);
        assert_eq!(m, r.confusion);
    }

    #[test]
    fn empty_report_is_rejected() {
        let r = report(vec![vec![0, 0], vec![0, 0]]);
        let dir = tempfile::tempdir().unwrap();
        assert!(emit_report(&r, dir.path()).is_err());
        let r = report(vec![vec![1, 0], vec![0, 1]]);
        emit_report(&r, dir.path()).unwrap();
        let json = fs::read_to_string(dir.path().join("summary.json")).unwrap();
        let back: EvaluationReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
    }
}
