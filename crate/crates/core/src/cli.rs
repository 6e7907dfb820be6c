//! Command-line front end.
//!
//! Every run resolves its flags into a [`ResolvedRun`], writes it as
//! `resolved_config.json` and puts its outputs in `<out>/<command>-<hash>`,
//! where the hash covers the resolved config. Passing that file back through
//! `--config` replays the run bit for bit.
//!
//! Exit codes: 0 success, 1 domain error, 2 usage error. Failures print one
//! line to stderr: `error: <kind>: <message>`.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::{self, BaselineKind};
use crate::dataset::{
    load_csv, normalize, save_csv, ClassLabel, CsvSchema, Dataset, LabelSet, NormParams,
};
use crate::error::{Error, Result};
use crate::eval::{
    agreement_count, class_counts, predict_all, routing_table, run_cv, CvReport, Learner,
    DEFAULT_FOLDS, DEFAULT_REPEATS, NN_SEMI_SUPERVISED, NN_SUPERVISED,
};
use crate::mlp::{MlpConfig, MlpModel};
use crate::report::{self, ComparisonRow, FirstStep, NamedCounts, NamedRouting, RunReport};
use crate::rng::{derive_seed, stream};
use crate::selftrain::{
    bucketize, read_assignment_csv, run_selftrain, write_assignment_csv, BucketScheme,
    PolicySchedule, SelfTrainConfig,
};
use crate::synthgen::{generate, write_truth_csv, SynthConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_DOMAIN: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Environment variable capping worker threads.
pub const THREADS_ENV: &str = "SELFTRAIN_THREADS";
pub const RESOLVED_CONFIG: &str = "resolved_config.json";
pub const REPORT_JSON: &str = "report.json";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Domain(#[from] Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Domain(_) => EXIT_DOMAIN,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Domain(e) => e.kind(),
        }
    }

    /// `error: <kind>: <message>` on a single line.
    pub fn line(&self) -> String {
        let msg = self
            .to_string()
            .split_whitespace()
            .collect::<Vec<_>>()
            .join(" ");
        format!("error: {}: {}", self.kind(), msg)
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(
    name = "welllog-ssl",
    version,
    about = "Semi-supervised self-training for well-log classification"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic labelled set, unlabelled pool and truth sidecar.
    Gen(GenArgs),
    /// Cross-validate and fit the supervised network.
    Train(TrainArgs),
    /// Run the self-training loop over an unlabelled pool.
    Selftrain(SelftrainArgs),
    /// Cross-validate the baselines and compare their pool assignments.
    Compare(CompareArgs),
    /// Merge run directories and render every table and figure file.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Parent directory for run directories.
    #[arg(long, default_value = "runs")]
    pub out: PathBuf,
    /// Replay a resolved_config.json from an earlier run.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Labelled CSV (feature columns plus a `label` column).
    #[arg(long)]
    pub labeled: Option<PathBuf>,
    /// Unlabelled CSV; a `label` column, if present, is ignored.
    #[arg(long)]
    pub pool: Option<PathBuf>,
    /// Comma-separated class names in table order.
    #[arg(long, value_delimiter = ',')]
    pub labels: Option<Vec<String>>,
}

impl DataArgs {
    fn any(&self) -> bool {
        self.labeled.is_some() || self.pool.is_some() || self.labels.is_some()
    }
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Full generator config as JSON; overrides the shape flags below.
    #[arg(long)]
    pub synth: Option<PathBuf>,
    /// Minimum distance between class means in pooled standard deviations.
    #[arg(long)]
    pub separation: Option<f64>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub labeled_counts: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub pool_counts: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub labels: Option<Vec<String>>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Cross-validation folds.
    #[arg(long)]
    pub k: Option<usize>,
    /// Cross-validation repeats.
    #[arg(long)]
    pub repeats: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SelftrainArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Selection policy schedule as JSON.
    #[arg(long)]
    pub policy: Option<PathBuf>,
    #[arg(long)]
    pub max_steps: Option<usize>,
    /// Pool truth sidecar (`pool_index,label`); enables per-step pool accuracy.
    #[arg(long)]
    pub truth: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub repeats: Option<usize>,
    /// A selftrain run directory; supplies the reference assignment and the
    /// supervised network.
    #[arg(long)]
    pub reference: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Parent directory for the report directory.
    #[arg(long, default_value = "runs")]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Run directories to merge, later ones winning.
    pub runs: Vec<PathBuf>,
}

/// An input file pinned by content.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputFile {
    pub path: PathBuf,
    pub sha256: String,
}

impl InputFile {
    pub fn pin(path: &Path) -> Result<Self> {
        let path = fs::canonicalize(path).map_err(|e| Error::io(path, e))?;
        let sha256 = sha256_file(&path)?;
        Ok(InputFile { path, sha256 })
    }

    pub fn verify(&self) -> Result<()> {
        let now = sha256_file(&self.path)?;
        if now != self.sha256 {
            return Err(Error::InvalidConfig(format!(
                "{} changed since the config was resolved",
                self.path.display()
            )));
        }
        Ok(())
    }
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(format!("{:x}", Sha256::digest(&bytes)))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataInputs {
    pub labels: LabelSet,
    pub labeled: InputFile,
    pub pool: Option<InputFile>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReferenceInputs {
    pub assignment: InputFile,
    pub supervised_model: InputFile,
    pub norm: InputFile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "lowercase")]
pub enum ResolvedConfig {
    Gen {
        synth: SynthConfig,
    },
    Train {
        data: DataInputs,
        seed: u64,
        mlp: MlpConfig,
        k: usize,
        repeats: usize,
    },
    Selftrain {
        data: DataInputs,
        truth: Option<InputFile>,
        selftrain: SelfTrainConfig,
    },
    Compare {
        data: DataInputs,
        reference: Option<ReferenceInputs>,
        seed: u64,
        mlp: MlpConfig,
        baselines: Vec<BaselineKind>,
        k: usize,
        repeats: usize,
    },
    Report {
        runs: Vec<InputFile>,
    },
}

impl ResolvedConfig {
    pub fn command(&self) -> &'static str {
        match self {
            ResolvedConfig::Gen { .. } => "gen",
            ResolvedConfig::Train { .. } => "train",
            ResolvedConfig::Selftrain { .. } => "selftrain",
            ResolvedConfig::Compare { .. } => "compare",
            ResolvedConfig::Report { .. } => "report",
        }
    }

    fn inputs(&self) -> Vec<&InputFile> {
        fn data(d: &DataInputs) -> Vec<&InputFile> {
            std::iter::once(&d.labeled).chain(d.pool.as_ref()).collect()
        }
        match self {
            ResolvedConfig::Gen { .. } => vec![],
            ResolvedConfig::Train { data: d, .. } => data(d),
            ResolvedConfig::Selftrain { data: d, truth, .. } => {
                let mut v = data(d);
                v.extend(truth.as_ref());
                v
            }
            ResolvedConfig::Compare {
                data: d, reference, ..
            } => {
                let mut v = data(d);
                if let Some(r) = reference {
                    v.extend([&r.assignment, &r.supervised_model, &r.norm]);
                }
                v
            }
            ResolvedConfig::Report { runs } => runs.iter().collect(),
        }
    }
}

/// Complete reproducibility record of one invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedRun {
    pub tool: String,
    pub run: ResolvedConfig,
}

impl ResolvedRun {
    pub fn new(run: ResolvedConfig) -> Self {
        ResolvedRun {
            tool: format!("welllog-ssl {}", env!("CARGO_PKG_VERSION")),
            run,
        }
    }

    /// First 16 hex digits of the SHA-256 of the compact JSON form.
    pub fn hash(&self) -> Result<String> {
        let bytes = serde_json::to_vec(self)?;
        Ok(format!("{:x}", Sha256::digest(&bytes))[..16].to_string())
    }

    pub fn dir_name(&self) -> Result<String> {
        Ok(format!("{}-{}", self.run.command(), self.hash()?))
    }
}

/// Parses `args` (program name first), runs, and returns the exit code.
/// On success the run directory is printed to stdout.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = e.print();
                    EXIT_OK
                }
                _ => {
                    let text = e.to_string();
                    let first = text
                        .lines()
                        .find(|l| !l.trim().is_empty())
                        .unwrap_or("invalid arguments")
                        .trim_start_matches("error: ");
                    eprintln!("{}", CliError::Usage(first.to_string()).line());
                    EXIT_USAGE
                }
            };
        }
    };
    match execute(cli) {
        Ok(dir) => {
            println!("{}", dir.display());
            EXIT_OK
        }
        Err(e) => {
            eprintln!("{}", e.line());
            e.exit_code()
        }
    }
}

fn thread_cap() -> CliResult<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Some(n)),
            _ => Err(CliError::Usage(format!(
                "{THREADS_ENV} must be a positive integer, got {v:?}"
            ))),
        },
    }
}

/// Runs a parsed command inside a thread pool sized by `SELFTRAIN_THREADS`
/// and returns the run directory.
pub fn execute(cli: Cli) -> CliResult<PathBuf> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_cap()? {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start thread pool: {e}")))?;
    pool.install(|| {
        let (resolved, out) = resolve(cli.command)?;
        Ok(run_resolved(&resolved, &out)?)
    })
}

fn load_resolved(path: &Path, expected: &str) -> CliResult<ResolvedRun> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let r: ResolvedRun = serde_json::from_str(&text).map_err(Error::from)?;
    if r.run.command() != expected {
        return Err(CliError::Usage(format!(
            "config is for `{}`, not `{expected}`",
            r.run.command()
        )));
    }
    Ok(r)
}

fn no_overrides(config: &Option<PathBuf>, any_flag: bool) -> CliResult<()> {
    if config.is_some() && any_flag {
        return Err(CliError::Usage(
            "--config replays a run and cannot be combined with other inputs or overrides".into(),
        ));
    }
    Ok(())
}

fn parse_labels(names: Option<Vec<String>>) -> CliResult<LabelSet> {
    match names {
        None => Ok(LabelSet::dwio()),
        Some(n) => LabelSet::new(n).map_err(|e| CliError::Usage(format!("--labels: {e}"))),
    }
}

fn required<'a>(p: &'a Option<PathBuf>, flag: &str) -> CliResult<&'a Path> {
    p.as_deref()
        .ok_or_else(|| CliError::Usage(format!("{flag} is required")))
}

fn resolve_data(d: DataArgs, need_pool: bool) -> CliResult<DataInputs> {
    let labeled = InputFile::pin(required(&d.labeled, "--labeled")?)?;
    let pool = match &d.pool {
        Some(p) => Some(InputFile::pin(p)?),
        None if need_pool => return Err(CliError::Usage("--pool is required".into())),
        None => None,
    };
    Ok(DataInputs {
        labels: parse_labels(d.labels)?,
        labeled,
        pool,
    })
}

fn positive(v: Option<usize>, default: usize, flag: &str, min: usize) -> CliResult<usize> {
    let v = v.unwrap_or(default);
    if v < min {
        return Err(CliError::Usage(format!("{flag} must be >= {min}")));
    }
    Ok(v)
}

fn mlp_for(data: &DataInputs, epochs: Option<usize>) -> CliResult<MlpConfig> {
    let dim = load_labeled(data)?.dim();
    let mut mlp = MlpConfig::new(dim, data.labels.len());
    mlp.epochs = positive(epochs, mlp.epochs, "--epochs", 1)?;
    Ok(mlp)
}

/// Turns flags (or a replayed config) into a resolved run plus output parent.
pub fn resolve(command: Command) -> CliResult<(ResolvedRun, PathBuf)> {
    match command {
        Command::Gen(a) => {
            let any = a.synth.is_some()
                || a.separation.is_some()
                || a.dim.is_some()
                || a.labeled_counts.is_some()
                || a.pool_counts.is_some()
                || a.labels.is_some()
                || a.common.seed.is_some();
            no_overrides(&a.common.config, any)?;
            if let Some(c) = &a.common.config {
                return Ok((load_resolved(c, "gen")?, a.common.out));
            }
            let seed = a.common.seed.unwrap_or(0);
            let synth = match &a.synth {
                Some(p) => {
                    let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                    let mut s: SynthConfig = serde_json::from_str(&text).map_err(Error::from)?;
                    if let Some(seed) = a.common.seed {
                        s.seed = seed;
                    }
                    s
                }
                None => {
                    let labels = parse_labels(a.labels)?;
                    let c = labels.len();
                    let dim = a.dim.unwrap_or(17);
                    let separation = a.separation.unwrap_or(6.0);
                    let (lab, pool) = match (a.labeled_counts, a.pool_counts) {
                        (None, None) if c == 4 => (
                            crate::synthgen::WELL_LOG_LABELED.to_vec(),
                            crate::synthgen::WELL_LOG_POOL.to_vec(),
                        ),
                        (Some(l), Some(p)) => (l, p),
                        _ => {
                            return Err(CliError::Usage(
                                "--labeled-counts and --pool-counts must be given together".into(),
                            ))
                        }
                    };
                    SynthConfig::separated(dim, labels, &lab, &pool, separation, seed)
                        .map_err(|e| CliError::Usage(e.to_string()))?
                }
            };
            Ok((
                ResolvedRun::new(ResolvedConfig::Gen { synth }),
                a.common.out,
            ))
        }
        Command::Train(a) => {
            let any = a.data.any() || a.epochs.is_some() || a.k.is_some() || a.repeats.is_some();
            no_overrides(&a.common.config, any || a.common.seed.is_some())?;
            if let Some(c) = &a.common.config {
                return Ok((load_resolved(c, "train")?, a.common.out));
            }
            let data = resolve_data(a.data, false)?;
            let mlp = mlp_for(&data, a.epochs)?;
            let run = ResolvedConfig::Train {
                mlp,
                data,
                seed: a.common.seed.unwrap_or(0),
                k: positive(a.k, DEFAULT_FOLDS, "--k", 2)?,
                repeats: positive(a.repeats, DEFAULT_REPEATS, "--repeats", 1)?,
            };
            Ok((ResolvedRun::new(run), a.common.out))
        }
        Command::Selftrain(a) => {
            let any = a.data.any()
                || a.epochs.is_some()
                || a.policy.is_some()
                || a.max_steps.is_some()
                || a.truth.is_some();
            no_overrides(&a.common.config, any || a.common.seed.is_some())?;
            if let Some(c) = &a.common.config {
                return Ok((load_resolved(c, "selftrain")?, a.common.out));
            }
            let data = resolve_data(a.data, true)?;
            let mlp = mlp_for(&data, a.epochs)?;
            let mut st = SelfTrainConfig::new(mlp, &data.labels);
            st.seed = a.common.seed.unwrap_or(0);
            st.max_steps = positive(a.max_steps, st.max_steps, "--max-steps", 1)?;
            if let Some(p) = &a.policy {
                let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                st.schedule = PolicySchedule::from_json(&text)?;
                st.schedule.validate(data.labels.len())?;
            }
            let truth = a.truth.as_deref().map(InputFile::pin).transpose()?;
            let run = ResolvedConfig::Selftrain {
                data,
                truth,
                selftrain: st,
            };
            Ok((ResolvedRun::new(run), a.common.out))
        }
        Command::Compare(a) => {
            let any = a.data.any()
                || a.epochs.is_some()
                || a.k.is_some()
                || a.repeats.is_some()
                || a.reference.is_some();
            no_overrides(&a.common.config, any || a.common.seed.is_some())?;
            if let Some(c) = &a.common.config {
                return Ok((load_resolved(c, "compare")?, a.common.out));
            }
            let data = resolve_data(a.data, true)?;
            let mlp = mlp_for(&data, a.epochs)?;
            let reference = match &a.reference {
                Some(dir) => Some(ReferenceInputs {
                    assignment: InputFile::pin(&dir.join("assignment.csv"))?,
                    supervised_model: InputFile::pin(&dir.join("supervised_model.json"))?,
                    norm: InputFile::pin(&dir.join("norm.json"))?,
                }),
                None => None,
            };
            let run = ResolvedConfig::Compare {
                data,
                reference,
                seed: a.common.seed.unwrap_or(0),
                mlp,
                baselines: BaselineKind::all_defaults(),
                k: positive(a.k, DEFAULT_FOLDS, "--k", 2)?,
                repeats: positive(a.repeats, DEFAULT_REPEATS, "--repeats", 1)?,
            };
            Ok((ResolvedRun::new(run), a.common.out))
        }
        Command::Report(a) => {
            no_overrides(&a.config, !a.runs.is_empty())?;
            if let Some(c) = &a.config {
                return Ok((load_resolved(c, "report")?, a.out));
            }
            if a.runs.is_empty() {
                return Err(CliError::Usage(
                    "at least one run directory is required".into(),
                ));
            }
            let runs = a
                .runs
                .iter()
                .map(|d| InputFile::pin(&d.join(REPORT_JSON)))
                .collect::<Result<Vec<_>>>()?;
            Ok((ResolvedRun::new(ResolvedConfig::Report { runs }), a.out))
        }
    }
}

/// Executes a resolved run under `out`, returning its run directory.
pub fn run_resolved(resolved: &ResolvedRun, out: &Path) -> Result<PathBuf> {
    for input in resolved.run.inputs() {
        input.verify()?;
    }
    let dir = out.join(resolved.dir_name()?);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let cfg = serde_json::to_string_pretty(resolved)?;
    write(&dir.join(RESOLVED_CONFIG), cfg.as_bytes())?;
    match &resolved.run {
        ResolvedConfig::Gen { synth } => cmd_gen(synth, &dir)?,
        ResolvedConfig::Train {
            data,
            seed,
            mlp,
            k,
            repeats,
        } => cmd_train(data, *seed, mlp, *k, *repeats, &dir)?,
        ResolvedConfig::Selftrain {
            data,
            truth,
            selftrain,
        } => cmd_selftrain(data, truth.as_ref(), selftrain, &dir)?,
        ResolvedConfig::Compare {
            data,
            reference,
            seed,
            mlp,
            baselines,
            k,
            repeats,
        } => cmd_compare(
            data,
            reference.as_ref(),
            *seed,
            mlp,
            baselines,
            *k,
            *repeats,
            &dir,
        )?,
        ResolvedConfig::Report { runs } => cmd_report(runs, &dir)?,
    }
    Ok(dir)
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn write_with(path: &Path, f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    write(path, &buf)
}

fn cmd_gen(synth: &SynthConfig, dir: &Path) -> Result<()> {
    let data = generate(synth)?;
    save_csv(&data.labeled, dir.join("labeled.csv"))?;
    save_csv(&data.pool, dir.join("pool.csv"))?;
    write_with(&dir.join("truth.csv"), |b| {
        write_truth_csv(&data.truth, &synth.labels, b)
    })?;
    write(
        &dir.join("synth_config.json"),
        serde_json::to_string_pretty(synth)?.as_bytes(),
    )
}

fn schema(labels: &LabelSet, label_column: bool) -> CsvSchema {
    CsvSchema::new(None, label_column.then_some("label"), labels.clone())
}

fn load_labeled(d: &DataInputs) -> Result<Dataset> {
    let ds = load_csv(&d.labeled.path, &schema(&d.labels, true))?;
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    ds.require_labels()?;
    Ok(ds)
}

fn load_pool(path: &Path, labels: &LabelSet) -> Result<Dataset> {
    match load_csv(path, &schema(labels, true)) {
        Err(Error::MissingColumn(_)) => load_csv(path, &schema(labels, false)),
        other => other.map(|d| d.without_labels()),
    }
}

/// Labelled set and pool, min-max normalized over their union.
struct Loaded {
    labeled: Dataset,
    pool: Dataset,
    norm: NormParams,
}

fn load_data(d: &DataInputs) -> Result<Loaded> {
    let labeled = load_labeled(d)?;
    let pool = match &d.pool {
        Some(p) => load_pool(&p.path, &d.labels)?,
        None => labeled.empty_like(),
    };
    let (_, norm) = normalize(&labeled.concat(&pool)?)?;
    Ok(Loaded {
        labeled: norm.apply(&labeled)?,
        pool: norm.apply(&pool)?,
        norm,
    })
}

fn write_report(report: &RunReport, dir: &Path) -> Result<report::Rendered> {
    write(&dir.join(REPORT_JSON), report.to_json()?.as_bytes())?;
    report::render(report, dir)
}

/// table3 and table4 rows from the least accurate repeat's out-of-fold labels.
fn labeled_rows(
    cv: &CvReport,
    truth: &[ClassLabel],
    classes: usize,
) -> Result<(NamedCounts, NamedRouting)> {
    let worst = &cv.out_of_fold[cv.worst_repeat(truth)?];
    Ok((
        NamedCounts {
            classifier: cv.classifier.clone(),
            counts: class_counts(worst, classes),
        },
        NamedRouting {
            classifier: cv.classifier.clone(),
            table: routing_table(truth, worst, classes)?,
        },
    ))
}

fn add_cv(report: &mut RunReport, cv: CvReport, truth: &[ClassLabel]) -> Result<()> {
    let (counts, routing) = labeled_rows(&cv, truth, report.labels.len())?;
    report.labeled_counts.push(counts);
    report.routing.push(routing);
    report.cv.push(cv);
    Ok(())
}

fn cmd_train(
    data: &DataInputs,
    seed: u64,
    mlp: &MlpConfig,
    k: usize,
    repeats: usize,
    dir: &Path,
) -> Result<()> {
    let d = load_data(data)?;
    let truth = d.labeled.require_labels()?;
    let c = data.labels.len();
    let mut report = RunReport::new(data.labels.clone(), d.labeled.dim());
    report.expert_counts = Some(d.labeled.class_counts());

    let cv = run_cv(mlp, &d.labeled, k, repeats, seed)?;
    add_cv(&mut report, cv, &truth)?;

    let model = mlp.fit(&d.labeled, derive_seed(seed, stream::FINAL, 0))?;
    let posts = model.predict_proba_all(&d.labeled)?;
    report.buckets_labeled = Some(bucketize(&posts, c, &BucketScheme::standard()));

    write(&dir.join("model.json"), model.to_json()?.as_bytes())?;
    write(
        &dir.join("norm.json"),
        serde_json::to_string_pretty(&d.norm)?.as_bytes(),
    )?;
    write_report(&report, dir)?;
    Ok(())
}

fn read_truth(path: &Path, labels: &LabelSet, pool_len: usize) -> Result<Vec<ClassLabel>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(file);
    let mut truth: Vec<Option<ClassLabel>> = vec![None; pool_len];
    for rec in rdr.records() {
        let rec = rec?;
        let row = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != 2 {
            return Err(Error::RaggedRow {
                row,
                expected: 2,
                found: rec.len(),
            });
        }
        let idx: usize = rec[0].parse().map_err(|_| Error::NonNumeric {
            row,
            column: "pool_index".into(),
            value: rec[0].to_string(),
        })?;
        let label = labels.parse(&rec[1]).ok_or_else(|| Error::UnknownLabel {
            row,
            token: rec[1].to_string(),
        })?;
        if idx >= pool_len {
            return Err(Error::InvalidConfig(format!(
                "truth row {row}: pool index {idx} out of range"
            )));
        }
        truth[idx] = Some(label);
    }
    truth
        .into_iter()
        .enumerate()
        .map(|(i, t)| t.ok_or(Error::Unlabeled(i)))
        .collect()
}

fn with_labels(pool: &Dataset, labels: &[ClassLabel]) -> Result<Dataset> {
    let mut out = pool.empty_like();
    for (s, &l) in pool.samples().iter().zip(labels) {
        let mut s = s.clone();
        s.label = Some(l);
        out.push(s)?;
    }
    Ok(out)
}

fn cmd_selftrain(
    data: &DataInputs,
    truth: Option<&InputFile>,
    config: &SelfTrainConfig,
    dir: &Path,
) -> Result<()> {
    let d = load_data(data)?;
    let c = data.labels.len();
    let eval = match truth {
        Some(t) => Some(with_labels(
            &d.pool,
            &read_truth(&t.path, &data.labels, d.pool.len())?,
        )?),
        None => None,
    };
    let outcome = run_selftrain(&d.labeled, &d.pool, config, eval.as_ref())?;

    let scheme = BucketScheme::standard();
    let sup = &outcome.supervised_model;
    let mut report = RunReport::new(data.labels.clone(), d.labeled.dim());
    report.expert_counts = Some(d.labeled.class_counts());
    report.buckets_labeled = Some(bucketize(&sup.predict_proba_all(&d.labeled)?, c, &scheme));
    let pool_posts = sup.predict_proba_all(&d.pool)?;
    report.buckets_pool = Some(bucketize(&pool_posts, c, &scheme));
    let first = &outcome.trace.steps[0];
    report.first_step = Some(FirstStep {
        labeled_by_class: first.labeled_by_class.clone(),
        unlabeled: first.unlabeled,
        dim: d.labeled.dim(),
    });
    let semi = outcome.labels();
    let supervised: Vec<ClassLabel> = pool_posts.iter().map(|p| p.argmax()).collect();
    report.comparison = vec![
        ComparisonRow::new(
            NN_SUPERVISED,
            class_counts(&supervised, c),
            Some(agreement_count(&supervised, &semi)?),
        ),
        ComparisonRow::new(NN_SEMI_SUPERVISED, class_counts(&semi, c), Some(semi.len())),
    ];
    report.dynamics = Some(outcome.trace.clone());

    write(&dir.join("model.json"), outcome.model.to_json()?.as_bytes())?;
    write(
        &dir.join("supervised_model.json"),
        sup.to_json()?.as_bytes(),
    )?;
    write(
        &dir.join("norm.json"),
        serde_json::to_string_pretty(&d.norm)?.as_bytes(),
    )?;
    write_with(&dir.join("assignment.csv"), |b| {
        write_assignment_csv(&outcome.assignment, &data.labels, b)
    })?;
    write_report(&report, dir)?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_compare(
    data: &DataInputs,
    reference: Option<&ReferenceInputs>,
    seed: u64,
    mlp: &MlpConfig,
    kinds: &[BaselineKind],
    k: usize,
    repeats: usize,
    dir: &Path,
) -> Result<()> {
    let d = load_data(data)?;
    let truth = d.labeled.require_labels()?;
    let c = data.labels.len();
    let mut report = RunReport::new(data.labels.clone(), d.labeled.dim());
    report.expert_counts = Some(d.labeled.class_counts());

    let (semi, supervised) = match reference {
        Some(r) => {
            let norm_text =
                fs::read_to_string(&r.norm.path).map_err(|e| Error::io(&r.norm.path, e))?;
            let ref_norm: NormParams = serde_json::from_str(&norm_text)?;
            if ref_norm != d.norm {
                return Err(Error::InvalidConfig(
                    "reference run was normalized over different data".into(),
                ));
            }
            let assignment = read_assignment_csv(&r.assignment.path, &data.labels)?;
            if assignment.len() != d.pool.len() {
                return Err(Error::LengthMismatch {
                    left: assignment.len(),
                    right: d.pool.len(),
                });
            }
            let labels: Vec<ClassLabel> = assignment.iter().map(|a| a.label).collect();
            let path = &r.supervised_model.path;
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            (Some(labels), Some(MlpModel::from_json(&text)?))
        }
        None => (None, None),
    };
    let agree = |preds: &[ClassLabel]| -> Result<Option<usize>> {
        semi.as_deref()
            .map(|s| agreement_count(preds, s))
            .transpose()
    };

    for (i, kind) in kinds.iter().enumerate() {
        let cv = run_cv(
            kind,
            &d.labeled,
            k,
            repeats,
            derive_seed(seed, stream::RUN, i as u64),
        )?;
        add_cv(&mut report, cv, &truth)?;
        let model = baselines::fit(kind, &d.labeled, derive_seed(seed, stream::FINAL, i as u64))?;
        let preds = predict_all(&model, &d.pool)?;
        report.comparison.push(ComparisonRow::new(
            kind.name(),
            class_counts(&preds, c),
            agree(&preds)?,
        ));
    }

    let cv = run_cv(
        mlp,
        &d.labeled,
        k,
        repeats,
        derive_seed(seed, stream::RUN, kinds.len() as u64),
    )?;
    add_cv(&mut report, cv, &truth)?;
    let nn = match supervised {
        Some(m) => m,
        None => mlp.fit(
            &d.labeled,
            derive_seed(seed, stream::FINAL, kinds.len() as u64),
        )?,
    };
    let preds = predict_all(&nn, &d.pool)?;
    report.comparison.push(ComparisonRow::new(
        NN_SUPERVISED,
        class_counts(&preds, c),
        agree(&preds)?,
    ));
    if let Some(s) = &semi {
        report.comparison.push(ComparisonRow::new(
            NN_SEMI_SUPERVISED,
            class_counts(s, c),
            Some(s.len()),
        ));
    }
    write_report(&report, dir)?;
    Ok(())
}

fn cmd_report(runs: &[InputFile], dir: &Path) -> Result<()> {
    let mut merged: Option<RunReport> = None;
    for r in runs {
        let text = fs::read_to_string(&r.path).map_err(|e| Error::io(&r.path, e))?;
        let next = RunReport::from_json(&text)?;
        match &mut merged {
            None => merged = Some(next),
            Some(m) => m.merge(&next)?,
        }
    }
    let merged = merged.ok_or_else(|| Error::InvalidConfig("no runs to report".into()))?;
    let rendered = write_report(&merged, dir)?;
    if !rendered.missing.is_empty() {
        return Err(Error::MissingArtifacts(rendered.missing));
    }
    Ok(())
}
