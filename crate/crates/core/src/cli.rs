//! The `dtml` command line: a flat `key = value` run configuration, the five
//! subcommands and their artifacts.
//!
//! Exit codes are 0 on success, 1 when a check or a training run fails and 2
//! for usage, configuration and input errors.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::datasets::{
    gen_synthetic, load_feature_csv, Dataset, Domain, GroundTruth, PlaneRotation, SynthConfig,
};
use crate::eval::{evaluate_embedded, wcbc_histogram, write_histogram_csv, EmbeddedSet, Histogram};
use crate::metric::{
    pairwise_distances, weighted_batch_loss_and_grads, SourceTriplet, TargetDistancePair,
    TermWeights,
};
use crate::numerics::{grad_check, Gradients, Matrix, MlpNet};
use crate::trainer::{
    adapt_dtml, adapt_dtml_with_oracle, train_source, write_diagnostics_csv, write_loss_csv,
    TrainConfig,
};
use crate::{Error, Result};

/// Output and input locations of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct Paths {
    pub source_csv: PathBuf,
    pub target_csv: PathBuf,
    pub truth_csv: PathBuf,
    pub model_in: Option<PathBuf>,
    pub model_out: PathBuf,
    pub report_out: PathBuf,
    pub hist_out: PathBuf,
    pub diag_out: PathBuf,
    pub loss_out: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            source_csv: "source.csv".into(),
            target_csv: "target.csv".into(),
            truth_csv: "target_truth.csv".into(),
            model_in: None,
            model_out: "model.json".into(),
            report_out: "report.json".into(),
            hist_out: "histogram.csv".into(),
            diag_out: "diagnostics.csv".into(),
            loss_out: "loss.csv".into(),
        }
    }
}

/// Everything a command needs. `seed` drives both the generator and training.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub synth: SynthConfig,
    pub train: TrainConfig,
    pub far: Vec<f64>,
    pub hist_bins: usize,
    pub hist_range: (f64, f64),
    /// Include the source domain in the histogram written by `eval`.
    pub hist_source: bool,
    /// Let `adapt` read `truth_csv` to fill the oracle diagnostics columns.
    pub monitor_truth: bool,
    pub grad_instances: usize,
    pub paths: Paths,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            synth: SynthConfig::default(),
            train: TrainConfig::default(),
            far: vec![0.01],
            hist_bins: 40,
            hist_range: (0.0, 2.0),
            hist_source: true,
            monitor_truth: false,
            grad_instances: 20,
            paths: Paths::default(),
        }
    }
}

macro_rules! config_keys {
    ($($key:ident => $doc:literal),* $(,)?) => {
        /// Every configuration key with a one-line description, in the order
        /// used for provenance echoes.
        pub const CONFIG_KEYS: &[(&str, &str)] = &[$((stringify!($key), $doc)),*];

        /// Command-line overrides, one flag per configuration key.
        #[derive(Debug, Default, Clone, clap::Args)]
        pub struct Overrides {
            $(
                #[arg(long, value_name = "VALUE", global = true, help = $doc)]
                pub $key: Option<String>,
            )*
        }

        impl Overrides {
            fn pairs(&self) -> Vec<(&'static str, &str)> {
                let mut out = Vec::new();
                $(
                    if let Some(v) = &self.$key {
                        out.push((stringify!($key), v.as_str()));
                    }
                )*
                out
            }
        }
    };
}

config_keys! {
    seed => "run seed for data generation and training [42]",
    identities => "synthetic identities [20]",
    per_identity => "synthetic samples per identity and domain [30]",
    dim => "synthetic feature dimension [32]",
    intra_class_sigma => "spread of samples around their identity center [0.5]",
    inter_class_sigma => "spread of identity centers [1]",
    rotations => "target plane rotations as `i-j:degrees,...`, or `none` [0-1:30]",
    scale => "target isotropic scale [1.5]",
    translation => "target translation as comma-separated components, empty for zero []",
    noise_sigma => "extra Gaussian noise on target samples [0.05]",
    persons_per_batch => "identities per source batch (P) [5]",
    images_per_person => "samples per identity in a source batch (K) [20]",
    epochs => "training epochs [40]",
    alpha => "triplet margin shared by both loss terms [0.2]",
    lambda => "weight of the target term under ls+lt [1]",
    learning_rate => "SGD learning rate [0.01]",
    momentum => "SGD momentum [0.9]",
    scenario => "adaptation scenario: ls, lt or ls+lt [ls+lt]",
    hidden_dims => "hidden layer widths, comma-separated [64]",
    embedding_dim => "embedding dimension [16]",
    normalize_output => "unit-normalize embeddings [true]",
    stats_mode => "source statistics per `batch` or over the `whole` set [batch]",
    target_batch_size => "target samples per batch, or `auto` for P*K [auto]",
    far => "false accept rates for the TPR report, comma-separated [0.01]",
    hist_bins => "histogram bins [40]",
    hist_range => "histogram range as `lo:hi` [0:2]",
    hist_source => "add the source domain to the eval histogram [true]",
    monitor_truth => "let adapt read truth_csv for oracle diagnostics [false]",
    grad_instances => "random instances checked by grad-check [20]",
    source_csv => "labeled source features [source.csv]",
    target_csv => "target features [target.csv]",
    truth_csv => "target ground truth `id,label` [target_truth.csv]",
    model_in => "model to adapt or evaluate []",
    model_out => "model written by train-source and adapt [model.json]",
    report_out => "evaluation report JSON [report.json]",
    hist_out => "WC/BC histogram CSV [histogram.csv]",
    diag_out => "mining diagnostics CSV [diagnostics.csv]",
    loss_out => "per-epoch loss CSV [loss.csv]",
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse `{value}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim() {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected true or false, got `{value}`"))),
    }
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_num(key, s))
        .collect()
}

fn parse_rotations(value: &str) -> Result<Vec<PlaneRotation>> {
    if value.trim() == "none" {
        return Ok(Vec::new());
    }
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|item| {
            let bad = || Error::Config(format!("rotations: expected `i-j:degrees`, got `{item}`"));
            let (plane, deg) = item.split_once(':').ok_or_else(bad)?;
            let (i, j) = plane.split_once('-').ok_or_else(bad)?;
            Ok(PlaneRotation {
                axes: (parse_num("rotations", i)?, parse_num("rotations", j)?),
                degrees: parse_num("rotations", deg)?,
            })
        })
        .collect()
}

fn join<T: std::fmt::Display>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    /// Applies one `key = value` assignment. Unknown keys are rejected.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        let p = &mut self.paths;
        match key {
            "seed" => {
                let s = parse_num(key, value)?;
                self.synth.seed = s;
                self.train.seed = s;
            }
            "identities" => self.synth.identities = parse_num(key, value)?,
            "per_identity" => self.synth.per_identity = parse_num(key, value)?,
            "dim" => self.synth.dim = parse_num(key, value)?,
            "intra_class_sigma" => self.synth.intra_class_sigma = parse_num(key, value)?,
            "inter_class_sigma" => self.synth.inter_class_sigma = parse_num(key, value)?,
            "rotations" => self.synth.shift.rotations = parse_rotations(value)?,
            "scale" => self.synth.shift.scale = parse_num(key, value)?,
            "translation" => self.synth.shift.translation = parse_list(key, value)?,
            "noise_sigma" => self.synth.shift.noise_sigma = parse_num(key, value)?,
            "persons_per_batch" => self.train.persons_per_batch = parse_num(key, value)?,
            "images_per_person" => self.train.images_per_person = parse_num(key, value)?,
            "epochs" => self.train.epochs = parse_num(key, value)?,
            "alpha" => self.train.alpha = parse_num(key, value)?,
            "lambda" => self.train.lambda = parse_num(key, value)?,
            "learning_rate" => self.train.learning_rate = parse_num(key, value)?,
            "momentum" => self.train.momentum = parse_num(key, value)?,
            "scenario" => self.train.scenario = value.parse()?,
            "hidden_dims" => self.train.hidden_dims = parse_list(key, value)?,
            "embedding_dim" => self.train.embedding_dim = parse_num(key, value)?,
            "normalize_output" => self.train.normalize_output = parse_bool(key, value)?,
            "stats_mode" => self.train.stats_mode = value.parse()?,
            "target_batch_size" => {
                self.train.target_batch_size = match value {
                    "auto" => None,
                    v => Some(parse_num(key, v)?),
                }
            }
            "far" => self.far = parse_list(key, value)?,
            "hist_bins" => self.hist_bins = parse_num(key, value)?,
            "hist_range" => {
                let (lo, hi) = value
                    .split_once(':')
                    .ok_or_else(|| Error::Config(format!("hist_range: expected `lo:hi`, got `{value}`")))?;
                self.hist_range = (parse_num(key, lo)?, parse_num(key, hi)?);
            }
            "hist_source" => self.hist_source = parse_bool(key, value)?,
            "monitor_truth" => self.monitor_truth = parse_bool(key, value)?,
            "grad_instances" => self.grad_instances = parse_num(key, value)?,
            "source_csv" => p.source_csv = value.into(),
            "target_csv" => p.target_csv = value.into(),
            "truth_csv" => p.truth_csv = value.into(),
            "model_in" => p.model_in = (!value.is_empty()).then(|| value.into()),
            "model_out" => p.model_out = value.into(),
            "report_out" => p.report_out = value.into(),
            "hist_out" => p.hist_out = value.into(),
            "diag_out" => p.diag_out = value.into(),
            "loss_out" => p.loss_out = value.into(),
            _ => return Err(Error::Config(format!("unknown configuration key `{key}`"))),
        }
        Ok(())
    }

    /// Parses a configuration document: one `key = value` per line, `#`
    /// starts a comment line, blank lines are ignored, a key may appear once.
    pub fn parse_document(text: &str) -> Result<Vec<(String, String)>> {
        let mut out: Vec<(String, String)> = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected `key = value`, got `{line}`", n + 1))
            })?;
            let k = k.trim();
            if out.iter().any(|(seen, _)| seen == k) {
                return Err(Error::Config(format!("line {}: duplicate key `{k}`", n + 1)));
            }
            out.push((k.to_string(), v.trim().to_string()));
        }
        Ok(out)
    }

    /// Defaults, then the configuration document, then flag overrides.
    pub fn resolve<'a, I>(document: Option<&str>, overrides: I) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a str, &'a str)>,
    {
        let mut cfg = RunConfig::default();
        if let Some(text) = document {
            for (k, v) in Self::parse_document(text)? {
                cfg.set(&k, &v)?;
            }
        }
        for (k, v) in overrides {
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }

    /// The effective configuration, one entry per key of [`CONFIG_KEYS`].
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let s = &self.synth;
        let t = &self.train;
        let p = &self.paths;
        let path = |p: &Path| p.display().to_string();
        let rotations = if s.shift.rotations.is_empty() {
            "none".to_string()
        } else {
            s.shift
                .rotations
                .iter()
                .map(|r| format!("{}-{}:{}", r.axes.0, r.axes.1, r.degrees))
                .collect::<Vec<_>>()
                .join(",")
        };
        let out = vec![
            ("seed", t.seed.to_string()),
            ("identities", s.identities.to_string()),
            ("per_identity", s.per_identity.to_string()),
            ("dim", s.dim.to_string()),
            ("intra_class_sigma", s.intra_class_sigma.to_string()),
            ("inter_class_sigma", s.inter_class_sigma.to_string()),
            ("rotations", rotations),
            ("scale", s.shift.scale.to_string()),
            ("translation", join(&s.shift.translation)),
            ("noise_sigma", s.shift.noise_sigma.to_string()),
            ("persons_per_batch", t.persons_per_batch.to_string()),
            ("images_per_person", t.images_per_person.to_string()),
            ("epochs", t.epochs.to_string()),
            ("alpha", t.alpha.to_string()),
            ("lambda", t.lambda.to_string()),
            ("learning_rate", t.learning_rate.to_string()),
            ("momentum", t.momentum.to_string()),
            ("scenario", t.scenario.as_str().to_string()),
            ("hidden_dims", join(&t.hidden_dims)),
            ("embedding_dim", t.embedding_dim.to_string()),
            ("normalize_output", t.normalize_output.to_string()),
            ("stats_mode", t.stats_mode.as_str().to_string()),
            (
                "target_batch_size",
                t.target_batch_size.map_or("auto".into(), |v| v.to_string()),
            ),
            ("far", join(&self.far)),
            ("hist_bins", self.hist_bins.to_string()),
            ("hist_range", format!("{}:{}", self.hist_range.0, self.hist_range.1)),
            ("hist_source", self.hist_source.to_string()),
            ("monitor_truth", self.monitor_truth.to_string()),
            ("grad_instances", self.grad_instances.to_string()),
            ("source_csv", path(&p.source_csv)),
            ("target_csv", path(&p.target_csv)),
            ("truth_csv", path(&p.truth_csv)),
            ("model_in", p.model_in.as_deref().map(path).unwrap_or_default()),
            ("model_out", path(&p.model_out)),
            ("report_out", path(&p.report_out)),
            ("hist_out", path(&p.hist_out)),
            ("diag_out", path(&p.diag_out)),
            ("loss_out", path(&p.loss_out)),
        ];
        debug_assert_eq!(out.len(), CONFIG_KEYS.len());
        out
    }

    /// The effective configuration as a configuration document.
    pub fn to_document(&self) -> String {
        self.entries()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    /// Provenance lines for CSV comment headers.
    pub fn provenance(&self, command: &str) -> Vec<String> {
        std::iter::once(format!("dtml {command}"))
            .chain(self.entries().into_iter().map(|(k, v)| format!("{k} = {v}")))
            .collect()
    }

    fn model_in(&self) -> Result<&Path> {
        self.paths
            .model_in
            .as_deref()
            .ok_or_else(|| Error::Config("model_in is required for this command".into()))
    }

    fn validate_eval(&self) -> Result<()> {
        if self.far.is_empty() || self.far.iter().any(|f| !(*f > 0.0 && *f < 1.0)) {
            return Err(Error::Config("far values must lie in (0, 1)".into()));
        }
        if self.hist_bins == 0 {
            return Err(Error::Config("hist_bins must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Parser)]
#[command(name = "dtml", version, about = "Dual-triplet metric learning for unsupervised domain adaptation")]
struct Cli {
    /// Configuration document (`key = value` per line); flags override it.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(flatten)]
    overrides: Overrides,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write synthetic source, target and target ground-truth CSVs.
    GenSynth,
    /// Pretrain an embedding on the labeled source set.
    TrainSource,
    /// Adapt `model_in` to the unlabeled target set.
    Adapt,
    /// Evaluate `model_in` on the target set with its ground truth.
    Eval,
    /// Check the dual-loss gradients against central differences.
    GradCheck {
        /// Negates the analytic gradient to exercise the failure path.
        #[arg(long, hide = true)]
        inject_fault: bool,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::GenSynth => "gen-synth",
            Command::TrainSource => "train-source",
            Command::Adapt => "adapt",
            Command::Eval => "eval",
            Command::GradCheck { .. } => "grad-check",
        }
    }
}

/// How a command ended, mapped onto the process exit code.
#[derive(Debug)]
enum Failure {
    Check(String),
    Usage(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Misalignment { .. } | Error::NonFinite(_) | Error::DegenerateEmbedding => {
                Failure::Check(e.to_string())
            }
            other => Failure::Usage(other.to_string()),
        }
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the exit code. Results go to `out`, diagnostics to `err`.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = if e.use_stderr() {
                write!(err, "{}", e.render())
            } else {
                write!(out, "{}", e.render())
            };
            return code;
        }
    };
    match dispatch(&cli, out) {
        Ok(()) => 0,
        Err(Failure::Check(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            1
        }
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            2
        }
    }
}

fn dispatch(cli: &Cli, out: &mut dyn Write) -> std::result::Result<(), Failure> {
    let document = match &cli.config {
        Some(path) => Some(fs::read_to_string(path).map_err(|e| Error::io(path, e))?),
        None => None,
    };
    let cfg = RunConfig::resolve(document.as_deref(), cli.overrides.pairs())?;
    log::info!("dtml {} with seed {}", cli.command.name(), cfg.train.seed);
    match &cli.command {
        Command::GenSynth => cmd_gen_synth(&cfg, out)?,
        Command::TrainSource => cmd_train_source(&cfg, out)?,
        Command::Adapt => cmd_adapt(&cfg, out)?,
        Command::Eval => cmd_eval(&cfg, out)?,
        Command::GradCheck { inject_fault } => {
            let summary = grad_check_suite(cfg.grad_instances, cfg.train.seed, *inject_fault)?;
            writeln!(out, "max_rel_err={}", summary.max_rel_err).map_err(|e| Error::io("stdout", e))?;
            if !(summary.max_rel_err < GRAD_CHECK_TOLERANCE) {
                return Err(Failure::Check(format!(
                    "gradient check failed over {} instances: max relative error {} >= {}",
                    summary.instances, summary.max_rel_err, GRAD_CHECK_TOLERANCE
                )));
            }
        }
    }
    Ok(())
}

fn create_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
        }
        _ => Ok(()),
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    create_parent(path)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn say(out: &mut dyn Write, line: String) -> Result<()> {
    writeln!(out, "{line}").map_err(|e| Error::io("stdout", e))
}

/// Model JSON plus a `<model>.config` sidecar holding the effective run
/// configuration. The model document itself carries parameters only, so
/// runs that train the same parameters write the same bytes.
fn save_model(net: &MlpNet, cfg: &RunConfig, command: &str) -> Result<()> {
    let path = &cfg.paths.model_out;
    write_file(path, net.to_json().as_bytes())?;
    let mut doc = format!("# written by dtml {command}\n");
    doc.push_str(&cfg.to_document());
    write_file(&sidecar_path(path), doc.as_bytes())
}

/// `model.json` → `model.json.config`
pub fn sidecar_path(model: &Path) -> PathBuf {
    let mut s = model.as_os_str().to_owned();
    s.push(".config");
    PathBuf::from(s)
}

pub fn cmd_gen_synth(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    cfg.synth.validate()?;
    let data = gen_synthetic(&cfg.synth)?;
    let comments = cfg.provenance("gen-synth");
    let p = &cfg.paths;
    for path in [&p.source_csv, &p.target_csv, &p.truth_csv] {
        create_parent(path)?;
    }
    data.source.save_csv(&p.source_csv, &comments)?;
    data.target.save_csv(&p.target_csv, &comments)?;
    data.truth.save_csv(&p.truth_csv, &comments)?;
    say(
        out,
        format!(
            "wrote {} source and {} target samples to {}, {} and {}",
            data.source.len(),
            data.target.len(),
            p.source_csv.display(),
            p.target_csv.display(),
            p.truth_csv.display()
        ),
    )
}

fn load_source(cfg: &RunConfig) -> Result<Dataset> {
    let ds = load_feature_csv(&cfg.paths.source_csv, Domain::Source)?;
    if ds.is_empty() {
        return Err(Error::EmptyInput("source dataset"));
    }
    Ok(ds)
}

pub fn cmd_train_source(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    cfg.train.validate()?;
    let source = load_source(cfg)?;
    let run = train_source(&cfg.train, &source)?;
    save_model(&run.net, cfg, "train-source")?;
    let mut buf = Vec::new();
    write_loss_csv(&mut buf, &run.losses, &cfg.provenance("train-source"))
        .map_err(|e| Error::io(&cfg.paths.loss_out, e))?;
    write_file(&cfg.paths.loss_out, &buf)?;
    let last = run.losses.last().map_or(f64::NAN, |l| l.total_loss);
    say(
        out,
        format!(
            "trained {} epochs on {} samples, final loss {last}; model written to {}",
            cfg.train.epochs,
            source.len(),
            cfg.paths.model_out.display()
        ),
    )
}

pub fn cmd_adapt(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    cfg.train.validate()?;
    let source = load_source(cfg)?;
    // Labels in a target file are never used for training.
    let target = load_feature_csv(&cfg.paths.target_csv, Domain::Target)?.without_labels();
    let init = MlpNet::load(cfg.model_in()?)?;
    let run = if cfg.monitor_truth {
        let truth = GroundTruth::load_csv(&cfg.paths.truth_csv)?;
        adapt_dtml_with_oracle(&cfg.train, &source, &target, &init, &truth)?
    } else {
        adapt_dtml(&cfg.train, &source, &target, &init)?
    };
    for w in &run.warnings {
        log::warn!("{w}");
    }
    save_model(&run.net, cfg, "adapt")?;
    let comments = cfg.provenance("adapt");
    let mut diag = Vec::new();
    write_diagnostics_csv(&mut diag, &run.diagnostics, &comments)
        .map_err(|e| Error::io(&cfg.paths.diag_out, e))?;
    write_file(&cfg.paths.diag_out, &diag)?;
    let mut loss = Vec::new();
    write_loss_csv(&mut loss, &run.losses, &comments).map_err(|e| Error::io(&cfg.paths.loss_out, e))?;
    write_file(&cfg.paths.loss_out, &loss)?;
    let gap = run.diagnostics.last().map_or(f64::NAN, |d| d.alignment_gap);
    say(
        out,
        format!(
            "adapted under {} for {} epochs, final alignment gap {gap}; model written to {}",
            cfg.train.scenario.as_str(),
            cfg.train.epochs,
            cfg.paths.model_out.display()
        ),
    )
}

fn labeled_target(cfg: &RunConfig) -> Result<Dataset> {
    let target = load_feature_csv(&cfg.paths.target_csv, Domain::Target)?;
    if target.is_fully_labeled() && !target.is_empty() {
        return Ok(target);
    }
    target.with_truth(&GroundTruth::load_csv(&cfg.paths.truth_csv)?)
}

fn histogram_of(set: &EmbeddedSet, cfg: &RunConfig) -> Result<Histogram> {
    wcbc_histogram(&set.labeled_distances(), cfg.hist_bins, cfg.hist_range)
}

pub fn cmd_eval(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    cfg.validate_eval()?;
    let net = MlpNet::load(cfg.model_in()?)?;
    let target = EmbeddedSet::new(&net, &labeled_target(cfg)?)?;
    let mut report = evaluate_embedded(&target, &cfg.far)?;
    report.histogram_path = cfg.paths.hist_out.display().to_string();
    report.config = cfg
        .entries()
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();

    let target_hist = histogram_of(&target, cfg)?;
    let source_hist = if cfg.hist_source {
        Some(histogram_of(&EmbeddedSet::new(&net, &load_source(cfg)?)?, cfg)?)
    } else {
        None
    };
    let mut tables: Vec<(Domain, &Histogram)> = Vec::new();
    if let Some(h) = &source_hist {
        tables.push((Domain::Source, h));
    }
    tables.push((Domain::Target, &target_hist));
    let mut buf = Vec::new();
    write_histogram_csv(&mut buf, &tables, &cfg.provenance("eval"))
        .map_err(|e| Error::io(&cfg.paths.hist_out, e))?;
    write_file(&cfg.paths.hist_out, &buf)?;

    let mut json = serde_json::to_string_pretty(&report)?;
    json.push('\n');
    write_file(&cfg.paths.report_out, json.as_bytes())?;
    let tpr: Vec<String> = report
        .tpr_at_far
        .iter()
        .map(|p| format!("tpr@{}={}", p.far, p.tpr))
        .collect();
    say(
        out,
        format!("auc={} rank1={} {}", report.auc, report.rank1, tpr.join(" ")),
    )
}

/// Pass threshold of the gradient check.
pub const GRAD_CHECK_TOLERANCE: f64 = 1e-4;
/// Central-difference step.
pub const GRAD_CHECK_STEP: f64 = 1e-5;
/// Minimum distance of every hinge argument and ReLU pre-activation from its
/// kink, far larger than the step so that no probe crosses a kink.
const KINK_CLEARANCE: f64 = 1e-3;

/// Normalization is ill-conditioned for tiny raw outputs, so draws whose
/// raw embedding norm falls below this are skipped.
const MIN_RAW_NORM: f64 = 0.3;
/// The distance has curvature ~1/d, which inflates the central-difference
/// truncation error on small gradient components; embedded points closer
/// than this are skipped.
const MIN_SEPARATION: f64 = 0.1;

/// Result of [`grad_check_suite`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckSummary {
    pub instances: usize,
    pub params_checked: usize,
    pub max_rel_err: f64,
}

struct Instance {
    net: MlpNet,
    source: Vec<Vec<f64>>,
    target: Vec<Vec<f64>>,
    triplets: Vec<SourceTriplet>,
    pairs: Vec<TargetDistancePair>,
    alpha: f64,
    lambda: f64,
}

fn random_points(rng: &mut crate::Rng, n: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect()
}

fn clear_of_relu_kinks(net: &MlpNet, points: &[Vec<f64>]) -> Result<bool> {
    for x in points {
        let tape = match net.forward(x) {
            Ok((_, tape)) => tape,
            Err(Error::DegenerateEmbedding) => return Ok(false),
            Err(e) => return Err(e),
        };
        let hidden = &tape.pre_activations()[..net.layers().len() - 1];
        if hidden.iter().flatten().any(|z| z.abs() < KINK_CLEARANCE)
            || tape.raw_norm().is_some_and(|n| n < MIN_RAW_NORM)
        {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Draws a random net and batch whose full dual loss has at least one active
/// term of each kind and no hinge or ReLU kink near the evaluation point.
fn random_instance(rng: &mut crate::Rng) -> Result<Instance> {
    loop {
        let input = rng.random_range(2..=6);
        let depth = rng.random_range(1..=2);
        let mut dims = vec![input];
        dims.extend((0..depth).map(|_| rng.random_range(3..=8)));
        dims.push(rng.random_range(2..=5));
        // Normalized output, as trained. Without it distances are translation
        // invariant, the output bias gradient is exactly zero and the relative
        // error of two rounding residues says nothing about correctness.
        let net = MlpNet::init(&dims, true, rng)?;
        let (ns, nt) = (rng.random_range(6..=9), rng.random_range(6..=9));
        let source = random_points(rng, ns, input);
        let target = random_points(rng, nt, input);
        let alpha = rng.random_range(0.1..1.5);
        let lambda = rng.random_range(0.25..2.0);
        if !clear_of_relu_kinks(&net, &source)? || !clear_of_relu_kinks(&net, &target)? {
            continue;
        }
        // Dead units can collapse inputs onto one embedding, where the
        // distance is not differentiable; such draws are skipped.
        let (es, et) = match (
            net.embed_all(source.iter().map(Vec::as_slice)),
            net.embed_all(target.iter().map(Vec::as_slice)),
        ) {
            (Ok(es), Ok(et)) => (es, et),
            (Err(Error::DegenerateEmbedding), _) | (_, Err(Error::DegenerateEmbedding)) => continue,
            (Err(e), _) | (_, Err(e)) => return Err(e),
        };
        let (ds, dt) = (pairwise_distances(&es), pairwise_distances(&et));
        let separated = |d: &Matrix, n: usize| {
            (0..n).all(|i| (i + 1..n).all(|j| d.get(i, j) > MIN_SEPARATION))
        };
        if !separated(&ds, source.len()) || !separated(&dt, target.len()) {
            continue;
        }

        let labels: Vec<usize> = (0..source.len()).map(|i| i % 3).collect();
        let mut triplets = Vec::new();
        for a in 0..source.len() {
            for p in 0..source.len() {
                for n in 0..source.len() {
                    if a == p || labels[a] != labels[p] || labels[a] == labels[n] {
                        continue;
                    }
                    let arg = ds.get(a, p) - ds.get(a, n) + alpha;
                    if arg.abs() > KINK_CLEARANCE {
                        triplets.push(SourceTriplet {
                            anchor: a,
                            positive: p,
                            negative: n,
                        });
                    }
                }
            }
        }
        let mut all_pairs: Vec<(usize, usize)> = (0..target.len())
            .flat_map(|i| (i + 1..target.len()).map(move |j| (i, j)))
            .collect();
        all_pairs.shuffle(rng);
        let half = all_pairs.len() / 2;
        let pairs: Vec<TargetDistancePair> = all_pairs[..half]
            .iter()
            .zip(&all_pairs[half..])
            .filter(|(w, b)| (dt.get(w.0, w.1) - dt.get(b.0, b.1) + alpha).abs() > KINK_CLEARANCE)
            .map(|(&wc, &bc)| TargetDistancePair { wc, bc })
            .collect();

        let active_s = triplets
            .iter()
            .any(|t| ds.get(t.anchor, t.positive) - ds.get(t.anchor, t.negative) + alpha > 0.0);
        let active_t = pairs
            .iter()
            .any(|p| dt.get(p.wc.0, p.wc.1) - dt.get(p.bc.0, p.bc.1) + alpha > 0.0);
        if active_s && active_t {
            return Ok(Instance {
                net,
                source,
                target,
                triplets,
                pairs,
                alpha,
                lambda,
            });
        }
    }
}

/// Gradient check of the full dual-triplet loss over `instances` random
/// (net, batch) draws. `flip_sign` negates the analytic gradient, which must
/// make the check fail.
pub fn grad_check_suite(instances: usize, seed: u64, flip_sign: bool) -> Result<GradCheckSummary> {
    if instances == 0 {
        return Err(Error::Config("grad_instances must be positive".into()));
    }
    let mut rng = crate::seeded_rng(seed);
    let mut worst = 0.0f64;
    let mut params = 0;
    for _ in 0..instances {
        let inst = random_instance(&mut rng)?;
        let s: Vec<&[f64]> = inst.source.iter().map(Vec::as_slice).collect();
        let t: Vec<&[f64]> = inst.target.iter().map(Vec::as_slice).collect();
        let weights = TermWeights {
            source: 1.0,
            target: inst.lambda,
        };
        let loss = |n: &MlpNet| -> Result<(f64, Gradients)> {
            let (l, mut g) =
                weighted_batch_loss_and_grads(n, &s, &inst.triplets, &t, &inst.pairs, inst.alpha, weights)?;
            if flip_sign {
                g.scale(-1.0);
            }
            Ok((l.total, g))
        };
        worst = worst.max(grad_check(loss, &inst.net, GRAD_CHECK_STEP)?);
        params += inst.net.num_params();
    }
    Ok(GradCheckSummary {
        instances,
        params_checked: params,
        max_rel_err: worst,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trainer::{Scenario, StatsMode};

    #[test]
    fn defaults_round_trip_through_the_document() {
        let cfg = RunConfig::default();
        let back = RunConfig::resolve(Some(&cfg.to_document()), []).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn every_documented_key_is_settable_and_echoed() {
        let cfg = RunConfig::default();
        let keys: Vec<&str> = cfg.entries().iter().map(|(k, _)| *k).collect();
        let documented: Vec<&str> = CONFIG_KEYS.iter().map(|(k, _)| *k).collect();
        assert_eq!(keys, documented);
        for (k, v) in cfg.entries() {
            RunConfig::default().set(k, &v).unwrap();
        }
    }

    #[test]
    fn documented_defaults_match_the_real_ones() {
        for ((key, doc), (k, value)) in CONFIG_KEYS.iter().zip(RunConfig::default().entries()) {
            assert_eq!(*key, k);
            let shown = doc.rsplit_once('[').and_then(|(_, d)| d.strip_suffix(']')).unwrap();
            assert_eq!(shown, value, "{key}");
        }
    }

    #[test]
    fn unknown_and_duplicate_keys_rejected() {
        assert!(RunConfig::resolve(Some("bogus = 1"), []).is_err());
        assert!(RunConfig::resolve(Some("seed = 1\nseed = 2"), []).is_err());
        assert!(RunConfig::resolve(Some("seed 1"), []).is_err());
    }

    #[test]
    fn flags_override_the_document() {
        let cfg = RunConfig::resolve(Some("# c\n\nalpha = 0.5\nepochs = 3"), [("alpha", "0.7")]).unwrap();
        assert_eq!(cfg.train.alpha, 0.7);
        assert_eq!(cfg.train.epochs, 3);
    }

    #[test]
    fn structured_values_parse() {
        let mut cfg = RunConfig::default();
        cfg.set("rotations", "0-1:30, 2-5:-12.5").unwrap();
        assert_eq!(cfg.synth.shift.rotations.len(), 2);
        assert_eq!(cfg.synth.shift.rotations[1].axes, (2, 5));
        cfg.set("rotations", "none").unwrap();
        assert!(cfg.synth.shift.rotations.is_empty());
        cfg.set("hist_range", "0.5:1.5").unwrap();
        assert_eq!(cfg.hist_range, (0.5, 1.5));
        cfg.set("target_batch_size", "64").unwrap();
        assert_eq!(cfg.train.target_batch_size, Some(64));
        cfg.set("scenario", "lt").unwrap();
        assert_eq!(cfg.train.scenario, Scenario::Lt);
        cfg.set("stats_mode", "whole").unwrap();
        assert_eq!(cfg.train.stats_mode, StatsMode::WholeSet);
        assert!(cfg.set("rotations", "0:30").is_err());
        assert!(cfg.set("normalize_output", "yes").is_err());
    }

    #[test]
    fn seed_drives_generator_and_training() {
        let cfg = RunConfig::resolve(None, [("seed", "9")]).unwrap();
        assert_eq!((cfg.synth.seed, cfg.train.seed), (9, 9));
    }

    #[test]
    fn suite_passes_and_detects_sign_fault() {
        let ok = grad_check_suite(3, 1, false).unwrap();
        assert!(ok.max_rel_err < GRAD_CHECK_TOLERANCE, "{ok:?}");
        let bad = grad_check_suite(3, 1, true).unwrap();
        assert!(bad.max_rel_err > 0.5, "{bad:?}");
    }

    #[test]
    fn sidecar_sits_next_to_the_model() {
        assert_eq!(sidecar_path(Path::new("out/m.json")), PathBuf::from("out/m.json.config"));
    }
}
