//! The `mexp` command-line tool.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::cache::{self, DescriptorCache};
use crate::classify::{MulticlassModel, TrainingData};
use crate::dataset::{self, DatasetIndex, SynthSpec, VideoClip};
use crate::error::{Error, Result};
use crate::pipeline::{self, RunConfig};
use crate::projection::ProjectionSource;
use crate::rpca;
use crate::selection::DistanceTable;

pub const CACHE_ENV: &str = "MEXP_CACHE_DIR";

#[derive(Debug, Parser)]
#[command(name = "mexp", version, about = "Micro-expression recognition toolkit")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory or file.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Use every group instead of per-pair selection.
    #[arg(long, global = true, conflicts_with = "p")]
    pub no_selection: bool,
    /// Groups kept per class pair; enables selection.
    #[arg(long, global = true)]
    pub p: Option<usize>,
    /// Project raw frames instead of the sparse motion component.
    #[arg(long, global = true)]
    pub original_projection: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the synthetic benchmark.
    Synth {
        /// Generator settings (TOML); defaults when omitted.
        #[arg(long)]
        spec: Option<PathBuf>,
    },
    /// Split every clip into low-rank and sparse parts.
    Decompose,
    /// Compute descriptors and write a feature file.
    Extract,
    /// Fit per-pair group selection on the whole dataset.
    Select,
    /// Train a model on the whole dataset.
    Train,
    /// Leave-one-subject-out evaluation.
    Loso,
    /// Predict clips of the configured dataset with a saved model.
    Predict {
        #[arg(long)]
        model: PathBuf,
    },
}

/// Reads a run configuration. Relative paths inside resolve against the
/// file's directory.
pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
    let mut config = parse_config_str(&text).map_err(|e| e.context(path.display()))?;
    let base = path.parent().unwrap_or(Path::new(""));
    for p in [&mut config.dataset, &mut config.cache_dir].into_iter().flatten() {
        if p.is_relative() {
            *p = base.join(&*p);
        }
    }
    Ok(config)
}

/// Parses and validates configuration text.
pub fn parse_config_str(text: &str) -> Result<RunConfig> {
    let config: RunConfig = toml::from_str(text).map_err(|e| toml_error(text, &e))?;
    config.validate()?;
    Ok(config)
}

/// Resolved configuration as TOML text.
pub fn emit_config(config: &RunConfig) -> Result<String> {
    toml::to_string(config).map_err(|e| Error::Config(e.to_string()))
}

fn toml_error(text: &str, e: &toml::de::Error) -> Error {
    let msg = e.message().trim().replace('\n', "; ");
    match e.span() {
        Some(span) => {
            let line = text[..span.start.min(text.len())].matches('\n').count() + 1;
            Error::Config(format!("line {line}: {msg}"))
        }
        None => Error::Config(msg),
    }
}

/// Applies command-line overrides and the cache-directory environment
/// variable.
fn apply_overrides(config: &mut RunConfig, g: &GlobalArgs) -> Result<()> {
    if let Some(seed) = g.seed {
        config.seed = seed;
    }
    if let Some(jobs) = g.jobs {
        config.jobs = jobs;
    }
    if g.no_selection {
        config.selection.enabled = false;
    }
    if let Some(p) = g.p {
        config.selection.enabled = true;
        config.selection.p = Some(p);
        config.selection.p_grid = None;
    }
    if g.original_projection {
        config.descriptor.projection = ProjectionSource::Original;
    }
    if let Some(dir) = std::env::var_os(CACHE_ENV) {
        config.cache_dir = Some(PathBuf::from(dir));
    }
    config.validate()
}

fn load_run_config(g: &GlobalArgs) -> Result<RunConfig> {
    let path = g
        .config
        .as_ref()
        .ok_or_else(|| Error::Config("--config is required".into()))?;
    let mut config = parse_config(path)?;
    apply_overrides(&mut config, g)?;
    Ok(config)
}

#[cfg(feature = "parallel")]
fn set_jobs(jobs: usize) {
    if jobs > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            log::warn!("could not size the thread pool: {e}");
        }
    }
}

#[cfg(not(feature = "parallel"))]
fn set_jobs(_jobs: usize) {}

struct Loaded {
    config: RunConfig,
    index: DatasetIndex,
    clips: Vec<VideoClip>,
    cache: DescriptorCache,
}

fn load(g: &GlobalArgs) -> Result<Loaded> {
    let config = load_run_config(g)?;
    set_jobs(config.jobs);
    let index_path = config.index_path()?;
    let index = DatasetIndex::load(&index_path)?;
    let clips = index.load_clips()?;
    let cache_dir = config
        .cache_dir
        .clone()
        .unwrap_or_else(|| index.root.join(".mexp-cache"));
    Ok(Loaded {
        config,
        index,
        clips,
        cache: DescriptorCache::new(cache_dir),
    })
}

fn out_dir(g: &GlobalArgs) -> Result<&Path> {
    g.out
        .as_deref()
        .ok_or_else(|| Error::Config("--out is required".into()))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Runs a parsed command, writing results to `out`.
pub fn run(cli: &Cli, out: &mut dyn std::io::Write) -> Result<()> {
    let g = &cli.global;
    let started = Instant::now();
    let say = |out: &mut dyn std::io::Write, line: String| {
        writeln!(out, "{line}").map_err(|e| Error::io("<stdout>", e))
    };
    match &cli.command {
        Command::Synth { spec } => {
            let mut synth = match spec {
                Some(path) => {
                    let text = fs::read_to_string(path)
                        .map_err(|e| Error::Config(format!("cannot read spec {}: {e}", path.display())))?;
                    toml::from_str::<SynthSpec>(&text)
                        .map_err(|e| toml_error(&text, &e).context(path.display()))?
                }
                None => SynthSpec::default(),
            };
            if let Some(seed) = g.seed {
                synth.seed = seed;
            }
            let dir = out_dir(g)?;
            let (index, clips) = dataset::synthesize_dataset(&synth)?;
            dataset::write_dataset(dir, &index, &clips)?;
            say(out, format!("clips={}", clips.len()))?;
            say(out, format!("index={}", dir.join("index.csv").display()))?;
        }
        Command::Decompose => {
            let l = load(g)?;
            let dir = out_dir(g)?;
            let fingerprint = l.config.descriptor.fingerprint();
            let results = crate::par::try_map(&l.clips, |clip| {
                let dec = rpca::decompose_clip(clip, &l.config.rpca)?;
                let mut text = cache::header(&fingerprint);
                text.push('\n');
                for (name, m) in [("sparse", &dec.sparse), ("low_rank", &dec.low_rank)] {
                    for t in 0..m.ncols() {
                        text.push_str(&format!("{},{t},{name}", clip.clip_id));
                        for v in m.column(t).iter() {
                            text.push_str(&format!(",{v}"));
                        }
                        text.push('\n');
                    }
                }
                write_file(&dir.join(format!("{}.rpca.csv", clip.clip_id)), &text)?;
                Ok((dec.iterations, dec.converged, dec.residual))
            })?;
            for (clip, (iterations, converged, residual)) in l.clips.iter().zip(results) {
                say(
                    out,
                    format!("{} iterations={iterations} converged={converged} residual={residual:.3e}", clip.clip_id),
                )?;
            }
        }
        Command::Extract => {
            let l = load(g)?;
            let described = pipeline::describe_clips(&l.clips, &l.config.descriptor, &l.config.rpca, Some(&l.cache))?;
            let items: Vec<(&str, &crate::descriptor::ClipDescriptor)> = l
                .clips
                .iter()
                .map(|c| c.clip_id.as_str())
                .zip(&described.descriptors)
                .collect();
            let text = cache::feature_file(&l.config.descriptor.fingerprint(), &items);
            let path = out_dir(g)?.join("features.csv");
            write_file(&path, &text)?;
            say(out, format!("cache_hits={}/{}", described.cache_hits, l.clips.len()))?;
            say(out, format!("features={}", path.display()))?;
            use sha2::Digest as _;
            say(out, format!("sha256={}", cache::hex(&sha2::Sha256::digest(text.as_bytes()))))?;
        }
        Command::Select | Command::Train => {
            let mut l = load(g)?;
            if matches!(cli.command, Command::Select) && !l.config.selection.enabled {
                l.config.selection.enabled = true;
            }
            let described = pipeline::describe_clips(&l.clips, &l.config.descriptor, &l.config.rpca, Some(&l.cache))?;
            let labels: Vec<usize> = l.clips.iter().map(|c| c.label).collect();
            let table = DistanceTable::compute(&described.descriptors)?;
            let data = TrainingData {
                table: &table,
                descriptors: &described.descriptors,
                labels: &labels,
                class_names: &l.index.class_names,
            };
            let members: Vec<usize> = (0..l.clips.len()).collect();
            let fitted = pipeline::fit(data, &members, &l.config, l.config.seed)?;
            let dir = out_dir(g)?;
            if matches!(cli.command, Command::Select) {
                let p = fitted.p.expect("selection is enabled");
                let classes = fitted.model.classes.clone();
                let sel = crate::selection::fit_selection(&table, &members, &labels, &classes, p)?;
                let json = serde_json::to_string_pretty(&sel).map_err(|e| Error::InvalidInput(e.to_string()))?;
                let path = dir.join("selection.json");
                write_file(&path, &(json + "\n"))?;
                say(out, format!("p={p}"))?;
                say(out, format!("selection={}", path.display()))?;
            } else {
                let path = dir.join("model.json");
                write_file(&path, &(fitted.model.to_json()? + "\n"))?;
                say(out, format!("c={}", fitted.c))?;
                if let Some(p) = fitted.p {
                    say(out, format!("p={p}"))?;
                }
                say(out, format!("model={}", path.display()))?;
            }
        }
        Command::Loso => {
            let l = load(g)?;
            let described = pipeline::describe_clips(&l.clips, &l.config.descriptor, &l.config.rpca, Some(&l.cache))?;
            let report = pipeline::evaluate(&l.clips, &described.descriptors, &l.index, &l.config)?;
            if let Some(dir) = &g.out {
                pipeline::emit_report(&report, dir)?;
                write_file(&dir.join("config.toml"), &emit_config(&l.config)?)?;
            }
            for f in &report.folds {
                let p = f.p.map(|p| format!(" p={p}")).unwrap_or_default();
                say(out, format!("fold subject={} correct={}/{} c={}{p}", f.subject, f.correct, f.n_test, f.c))?;
            }
            log::info!("loso finished in {:.1}s", started.elapsed().as_secs_f64());
            say(out, format!("accuracy={}", report.recognition_rate))?;
        }
        Command::Predict { model } => {
            let l = load(g)?;
            let text = fs::read_to_string(model).map_err(|e| Error::io(model, e))?;
            let model = MulticlassModel::from_json(&text)?;
            let described = pipeline::describe_clips(&l.clips, &l.config.descriptor, &l.config.rpca, Some(&l.cache))?;
            let mut csv = String::from("clip_id,predicted\n");
            let mut correct = 0;
            for (clip, d) in l.clips.iter().zip(&described.descriptors) {
                let p = model.predict(d)?;
                let name = model.class_names.get(p.label).cloned().unwrap_or_else(|| p.label.to_string());
                csv.push_str(&format!("{},{name}\n", clip.clip_id));
                correct += usize::from(p.label == clip.label);
            }
            match &g.out {
                Some(dir) => write_file(&dir.join("predictions.csv"), &csv)?,
                None => out.write_all(csv.as_bytes()).map_err(|e| Error::io("<stdout>", e))?,
            }
            say(out, format!("accuracy={}", correct as f64 / l.clips.len() as f64))?;
        }
    }
    Ok(())
}

/// Parses `args`, runs the command and returns the process exit code.
/// Failures print one line `error: <class>: <message>` to standard error.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let msg = e.kind().as_str().unwrap_or("invalid arguments");
            eprintln!("error: config: {msg}");
            return 2;
        }
    };
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    match run(&cli, &mut lock) {
        Ok(()) => 0,
        Err(e) => {
            let class = e.class();
            eprintln!("error: {}: {}", class.as_str(), e.to_string().replace('\n', "; "));
            class.exit_code()
        }
    }
}
