//! P×K batch sampling, source pretraining and dual-triplet adaptation.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::seq::index;
use rand::Rng as _;

use crate::datasets::{Dataset, GroundTruth};
use crate::metric::{
    pairwise_distances, source_triplet_loss, weighted_batch_loss_and_grads, LossConfig,
    SourceTriplet, TermWeights,
};
use crate::mining::{
    constitute_target_pairs, distance_stats, labeled_pair_distances, mining_windows,
    pseudo_label, DistanceStats, PseudoLabeledPairs,
};
use crate::numerics::{Matrix, MlpNet, Sgd, SgdConfig};
use crate::{Error, Result};

/// Which terms of the dual loss drive adaptation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scenario {
    /// Source triplets only.
    Ls,
    /// Target pseudo-labeled triplets only (source still sets the windows).
    Lt,
    /// Both terms, `L_s + λ·L_t`.
    LsLt,
}

impl Scenario {
    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::Ls => "ls",
            Scenario::Lt => "lt",
            Scenario::LsLt => "ls+lt",
        }
    }

    fn weights(self, lambda: f64) -> TermWeights {
        match self {
            Scenario::Ls => TermWeights {
                source: 1.0,
                target: 0.0,
            },
            Scenario::Lt => TermWeights {
                source: 0.0,
                target: 1.0,
            },
            Scenario::LsLt => TermWeights {
                source: 1.0,
                target: lambda,
            },
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ls" => Ok(Scenario::Ls),
            "lt" => Ok(Scenario::Lt),
            "ls+lt" | "lslt" => Ok(Scenario::LsLt),
            other => Err(Error::Config(format!(
                "scenario must be one of ls, lt, ls+lt; got `{other}`"
            ))),
        }
    }
}

/// Where the per-batch mining statistics come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StatsMode {
    /// Each batch's own source distances.
    Batch,
    /// The whole source set, recomputed at the start of every epoch.
    WholeSet,
}

impl FromStr for StatsMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "batch" => Ok(StatsMode::Batch),
            "whole" | "whole_set" => Ok(StatsMode::WholeSet),
            other => Err(Error::Config(format!(
                "stats_mode must be batch or whole; got `{other}`"
            ))),
        }
    }
}

impl StatsMode {
    pub fn as_str(self) -> &'static str {
        match self {
            StatsMode::Batch => "batch",
            StatsMode::WholeSet => "whole",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub persons_per_batch: usize,
    pub images_per_person: usize,
    pub epochs: usize,
    pub alpha: f64,
    pub lambda: f64,
    pub learning_rate: f64,
    pub momentum: f64,
    pub seed: u64,
    pub scenario: Scenario,
    pub hidden_dims: Vec<usize>,
    pub embedding_dim: usize,
    pub normalize_output: bool,
    pub stats_mode: StatsMode,
    /// Defaults to `persons_per_batch · images_per_person`.
    pub target_batch_size: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            persons_per_batch: 5,
            images_per_person: 20,
            epochs: 40,
            alpha: 0.2,
            lambda: 1.0,
            learning_rate: 0.01,
            momentum: 0.9,
            seed: 42,
            scenario: Scenario::LsLt,
            hidden_dims: vec![64],
            embedding_dim: 16,
            normalize_output: true,
            stats_mode: StatsMode::Batch,
            target_batch_size: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.persons_per_batch < 2 {
            return Err(Error::Config(
                "persons_per_batch must be at least 2 (a triplet needs a negative)".into(),
            ));
        }
        if self.images_per_person < 2 {
            return Err(Error::Config(
                "images_per_person must be at least 2 (a triplet needs a positive)".into(),
            ));
        }
        if self.embedding_dim == 0 || self.hidden_dims.contains(&0) {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        if self.target_batch_size == Some(0) {
            return Err(Error::Config("target_batch_size must be positive".into()));
        }
        self.loss_config().validate()?;
        self.sgd_config().validate()
    }

    pub fn loss_config(&self) -> LossConfig {
        LossConfig {
            alpha: self.alpha,
            lambda: self.lambda,
        }
    }

    pub fn sgd_config(&self) -> SgdConfig {
        SgdConfig {
            learning_rate: self.learning_rate,
            momentum: self.momentum,
        }
    }

    pub fn batch_size(&self) -> usize {
        self.persons_per_batch * self.images_per_person
    }

    pub fn target_batch(&self) -> usize {
        self.target_batch_size.unwrap_or_else(|| self.batch_size())
    }

    /// Input dimension, hidden widths, embedding dimension.
    pub fn layer_dims(&self, input_dim: usize) -> Vec<usize> {
        std::iter::once(input_dim)
            .chain(self.hidden_dims.iter().copied())
            .chain(std::iter::once(self.embedding_dim))
            .collect()
    }
}

/// Sample indices of a P×K source batch and the class of each slot.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceBatch {
    pub indices: Vec<usize>,
    pub classes: Vec<usize>,
}

/// Per-identity index of a labeled dataset for repeated P×K sampling.
#[derive(Debug, Clone)]
pub struct SourceSampler {
    groups: Vec<Vec<usize>>,
}

impl SourceSampler {
    pub fn new(dataset: &Dataset) -> Result<Self> {
        let classes = dataset.class_indices()?;
        let mut groups = vec![Vec::new(); dataset.identities().len()];
        for (i, c) in classes.into_iter().enumerate() {
            groups[c].push(i);
        }
        Ok(SourceSampler { groups })
    }

    pub fn identities(&self) -> usize {
        self.groups.len()
    }

    /// `persons` distinct identities, `images` samples each. Identities with
    /// fewer than `images` samples are drawn with replacement.
    pub fn sample(
        &self,
        persons: usize,
        images: usize,
        rng: &mut crate::Rng,
    ) -> Result<SourceBatch> {
        if self.groups.len() < persons {
            return Err(Error::TooFewIdentities {
                needed: persons,
                available: self.groups.len(),
            });
        }
        let mut indices = Vec::with_capacity(persons * images);
        let mut classes = Vec::with_capacity(persons * images);
        for c in index::sample(rng, self.groups.len(), persons).into_iter() {
            let g = &self.groups[c];
            if g.len() >= images {
                indices.extend(index::sample(rng, g.len(), images).into_iter().map(|k| g[k]));
            } else {
                indices.extend((0..images).map(|_| g[rng.random_range(0..g.len())]));
            }
            classes.extend(std::iter::repeat_n(c, images));
        }
        Ok(SourceBatch { indices, classes })
    }
}

pub fn make_source_batch(
    dataset: &Dataset,
    cfg: &TrainConfig,
    rng: &mut crate::Rng,
) -> Result<SourceBatch> {
    SourceSampler::new(dataset)?.sample(cfg.persons_per_batch, cfg.images_per_person, rng)
}

/// `size` indices into a dataset of `len` samples: without replacement when
/// possible, otherwise with replacement.
pub fn make_target_batch(len: usize, size: usize, rng: &mut crate::Rng) -> Result<Vec<usize>> {
    if len == 0 {
        return Err(Error::EmptyInput("target dataset"));
    }
    Ok(if len >= size {
        index::sample(rng, len, size).into_vec()
    } else {
        (0..size).map(|_| rng.random_range(0..len)).collect()
    })
}

/// Batch-all mining: every `(a, p, n)` with a strictly positive hinge, in
/// lexicographic order.
pub fn mine_source_triplets<V: AsRef<[f64]>, L: PartialEq>(
    embeddings: &[V],
    labels: &[L],
    alpha: f64,
) -> Vec<SourceTriplet> {
    mine_source_triplets_from_distances(&pairwise_distances(embeddings), labels, alpha)
}

pub fn mine_source_triplets_from_distances<L: PartialEq>(
    dist: &Matrix,
    labels: &[L],
    alpha: f64,
) -> Vec<SourceTriplet> {
    let n = labels.len();
    let mut out = Vec::new();
    for a in 0..n {
        for p in 0..n {
            if p == a || labels[p] != labels[a] {
                continue;
            }
            let d_ap = dist.get(a, p);
            for (neg, l) in labels.iter().enumerate() {
                if *l == labels[a] {
                    continue;
                }
                if source_triplet_loss(d_ap, dist.get(a, neg), alpha) > 0.0 {
                    out.push(SourceTriplet {
                        anchor: a,
                        positive: p,
                        negative: neg,
                    });
                }
            }
        }
    }
    out
}

/// Mean batch losses of one epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochLoss {
    pub epoch: usize,
    /// `pretrain` for source training, otherwise the adaptation scenario.
    pub phase: String,
    pub source_loss: f64,
    pub target_loss: f64,
    pub total_loss: f64,
}

#[derive(Debug, Clone)]
pub struct SourceRun {
    pub net: MlpNet,
    pub losses: Vec<EpochLoss>,
}

fn batches_per_epoch(n: usize, batch: usize) -> usize {
    n.div_ceil(batch).max(1)
}

fn gather<'a>(ds: &'a Dataset, idx: &[usize]) -> Vec<&'a [f64]> {
    idx.iter().map(|&i| ds.features(i)).collect()
}

fn embed_rows(net: &MlpNet, rows: &[&[f64]]) -> Result<Vec<Vec<f64>>> {
    rows.iter().map(|x| net.embed(x)).collect()
}

/// Supervised source pretraining with the ordinary triplet loss.
pub fn train_source(cfg: &TrainConfig, source: &Dataset) -> Result<SourceRun> {
    cfg.validate()?;
    let sampler = SourceSampler::new(source)?;
    let mut rng = crate::seeded_rng(cfg.seed);
    let mut net = MlpNet::init(&cfg.layer_dims(source.dim()), cfg.normalize_output, &mut rng)?;
    let mut sgd = Sgd::new(cfg.sgd_config())?;
    let weights = Scenario::Ls.weights(cfg.lambda);
    let steps = batches_per_epoch(source.len(), cfg.batch_size());
    let mut losses = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        let mut sum = 0.0;
        for _ in 0..steps {
            let batch = sampler.sample(cfg.persons_per_batch, cfg.images_per_person, &mut rng)?;
            let rows = gather(source, &batch.indices);
            let emb = embed_rows(&net, &rows)?;
            let triplets = mine_source_triplets(&emb, &batch.classes, cfg.alpha);
            let (loss, grads) =
                weighted_batch_loss_and_grads(&net, &rows, &triplets, &[], &[], cfg.alpha, weights)?;
            sgd.step(&mut net, &grads)?;
            sum += loss.source;
        }
        let mean = sum / steps as f64;
        losses.push(EpochLoss {
            epoch,
            phase: "pretrain".into(),
            source_loss: mean,
            target_loss: 0.0,
            total_loss: mean,
        });
    }
    Ok(SourceRun { net, losses })
}

/// Where the target statistics in the diagnostics come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetStatsSource {
    /// Ground truth supplied for monitoring only.
    Oracle,
    /// Means of the pseudo-labeled distances.
    PseudoLabels,
}

/// Per-epoch mining diagnostics. Counts are summed over the epoch's
/// batches, statistics are averaged over them.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochDiagnostics {
    pub epoch: usize,
    pub batches: usize,
    pub zero_pair_batches: usize,
    pub n_wc_labeled: usize,
    pub n_bc_labeled: usize,
    /// Target terms after truncation to equal WC/BC counts.
    pub n_target_terms: usize,
    pub mu_wc_s: f64,
    pub sigma_wc_s: f64,
    pub mu_bc_s: f64,
    pub sigma_bc_s: f64,
    pub mu_wc_t: f64,
    pub mu_bc_t: f64,
    pub alignment_gap: f64,
    pub target_stats: TargetStatsSource,
    /// Fraction of pseudo-labeled pairs whose label agrees with the oracle.
    pub oracle_precision: Option<f64>,
    /// Oracle precision of the WC list alone.
    pub oracle_wc_precision: Option<f64>,
}

impl EpochDiagnostics {
    pub fn labeled_pairs(&self) -> usize {
        self.n_wc_labeled + self.n_bc_labeled
    }
}

#[derive(Debug, Clone)]
pub struct AdaptRun {
    pub net: MlpNet,
    pub losses: Vec<EpochLoss>,
    pub diagnostics: Vec<EpochDiagnostics>,
    pub warnings: Vec<String>,
}

/// Dual-triplet adaptation. Only the features of `target` are read.
pub fn adapt_dtml(
    cfg: &TrainConfig,
    source: &Dataset,
    target: &Dataset,
    init: &MlpNet,
) -> Result<AdaptRun> {
    adapt(cfg, source, target, init, None)
}

/// [`adapt_dtml`] with ground truth used only to fill the monitoring
/// columns of the diagnostics. Training is unaffected by `oracle`.
pub fn adapt_dtml_with_oracle(
    cfg: &TrainConfig,
    source: &Dataset,
    target: &Dataset,
    init: &MlpNet,
    oracle: &GroundTruth,
) -> Result<AdaptRun> {
    let classes = oracle_classes(target, oracle)?;
    adapt(cfg, source, target, init, Some(&classes))
}

fn oracle_classes(target: &Dataset, oracle: &GroundTruth) -> Result<Vec<usize>> {
    let mut names: Vec<&str> = oracle.entries().iter().map(|(_, l)| l.as_str()).collect();
    names.sort_unstable();
    names.dedup();
    target
        .samples()
        .iter()
        .map(|s| {
            oracle
                .label_of(&s.id)
                .map(|l| names.binary_search(&l).expect("label taken from oracle"))
                .ok_or_else(|| Error::Config(format!("oracle has no label for {}", s.id)))
        })
        .collect()
}

#[derive(Default)]
struct EpochAccumulator {
    batches: usize,
    zero_pair_batches: usize,
    n_wc: usize,
    n_bc: usize,
    terms: usize,
    src: [f64; 4],
    tgt: [f64; 2],
    tgt_batches: usize,
    correct: usize,
    wc_correct: usize,
}

impl EpochAccumulator {
    fn add_source(&mut self, s: &DistanceStats) {
        for (acc, v) in self
            .src
            .iter_mut()
            .zip([s.mu_wc, s.sigma_wc, s.mu_bc, s.sigma_bc])
        {
            *acc += v;
        }
    }

    fn finish(
        self,
        epoch: usize,
        oracle: bool,
    ) -> EpochDiagnostics {
        let b = self.batches as f64;
        let [mu_wc_s, sigma_wc_s, mu_bc_s, sigma_bc_s] = self.src.map(|v| v / b);
        let (mu_wc_t, mu_bc_t) = if self.tgt_batches > 0 {
            let t = self.tgt_batches as f64;
            (self.tgt[0] / t, self.tgt[1] / t)
        } else {
            (f64::NAN, f64::NAN)
        };
        let labeled = self.n_wc + self.n_bc;
        let ratio = |num: usize, den: usize| (oracle && den > 0).then(|| num as f64 / den as f64);
        EpochDiagnostics {
            epoch,
            batches: self.batches,
            zero_pair_batches: self.zero_pair_batches,
            n_wc_labeled: self.n_wc,
            n_bc_labeled: self.n_bc,
            n_target_terms: self.terms,
            mu_wc_s,
            sigma_wc_s,
            mu_bc_s,
            sigma_bc_s,
            mu_wc_t,
            mu_bc_t,
            alignment_gap: (mu_wc_s - mu_wc_t).abs() + (mu_bc_s - mu_bc_t).abs(),
            target_stats: if oracle {
                TargetStatsSource::Oracle
            } else {
                TargetStatsSource::PseudoLabels
            },
            oracle_precision: ratio(self.correct, labeled),
            oracle_wc_precision: ratio(self.wc_correct, self.n_wc),
        }
    }
}

fn whole_set_stats(net: &MlpNet, source: &Dataset, classes: &[usize]) -> Result<DistanceStats> {
    let rows: Vec<&[f64]> = (0..source.len()).map(|i| source.features(i)).collect();
    let emb = embed_rows(net, &rows)?;
    distance_stats(&labeled_pair_distances(&pairwise_distances(&emb), classes))
}

fn adapt(
    cfg: &TrainConfig,
    source: &Dataset,
    target: &Dataset,
    init: &MlpNet,
    oracle: Option<&[usize]>,
) -> Result<AdaptRun> {
    cfg.validate()?;
    if target.is_empty() {
        return Err(Error::EmptyInput("target dataset"));
    }
    if target.dim() != init.input_dim() || source.dim() != init.input_dim() {
        return Err(Error::DimensionMismatch {
            context: "dataset vs network input",
            expected: init.input_dim(),
            got: target.dim(),
        });
    }
    let sampler = SourceSampler::new(source)?;
    let source_classes = source.class_indices()?;
    let mut rng = crate::seeded_rng(cfg.seed);
    let mut net = init.clone();
    let mut sgd = Sgd::new(cfg.sgd_config())?;
    let weights = cfg.scenario.weights(cfg.lambda);
    let steps = batches_per_epoch(target.len(), cfg.batch_size());
    let tsize = cfg.target_batch();

    let mut losses = Vec::with_capacity(cfg.epochs);
    let mut diagnostics = Vec::with_capacity(cfg.epochs);
    let mut warnings = Vec::new();

    for epoch in 1..=cfg.epochs {
        let epoch_stats = match cfg.stats_mode {
            StatsMode::WholeSet => Some(whole_set_stats(&net, source, &source_classes)?),
            StatsMode::Batch => None,
        };
        let mut acc = EpochAccumulator::default();
        let mut loss_sum = [0.0f64; 3];

        for _ in 0..steps {
            let sb = sampler.sample(cfg.persons_per_batch, cfg.images_per_person, &mut rng)?;
            let tb = make_target_batch(target.len(), tsize, &mut rng)?;
            let s_rows = gather(source, &sb.indices);
            let t_rows = gather(target, &tb);
            let s_dist = pairwise_distances(&embed_rows(&net, &s_rows)?);
            let t_dist = pairwise_distances(&embed_rows(&net, &t_rows)?);

            let stats = match epoch_stats {
                Some(s) => s,
                None => distance_stats(&labeled_pair_distances(&s_dist, &sb.classes))?,
            };
            let windows = mining_windows(&stats);
            let labeled = pseudo_label(&t_dist, &windows);
            let pairs = constitute_target_pairs(&labeled, &mut rng);
            let triplets = mine_source_triplets_from_distances(&s_dist, &sb.classes, cfg.alpha);

            let (loss, grads) = weighted_batch_loss_and_grads(
                &net, &s_rows, &triplets, &t_rows, &pairs, cfg.alpha, weights,
            )?;
            sgd.step(&mut net, &grads)?;

            loss_sum[0] += loss.source;
            loss_sum[1] += loss.target;
            loss_sum[2] += loss.total;
            acc.batches += 1;
            acc.n_wc += labeled.wc.len();
            acc.n_bc += labeled.bc.len();
            acc.terms += pairs.len();
            if pairs.is_empty() {
                acc.zero_pair_batches += 1;
            }
            acc.add_source(&stats);
            monitor_target(&mut acc, &t_dist, &labeled, oracle.map(|o| (o, tb.as_slice())));
        }

        let n = steps as f64;
        losses.push(EpochLoss {
            epoch,
            phase: cfg.scenario.as_str().into(),
            source_loss: loss_sum[0] / n,
            target_loss: loss_sum[1] / n,
            total_loss: loss_sum[2] / n,
        });
        let diag = acc.finish(epoch, oracle.is_some());
        if diag.zero_pair_batches * 2 > diag.batches {
            let msg = format!(
                "epoch {epoch}: {} of {} batches produced no target pairs; \
                 the domains may be too misaligned for mutual supervision",
                diag.zero_pair_batches, diag.batches
            );
            log::warn!("{msg}");
            warnings.push(msg);
        }
        if cfg.scenario == Scenario::Lt && diag.zero_pair_batches == diag.batches {
            return Err(Error::Misalignment {
                epoch,
                batches: diag.batches,
            });
        }
        diagnostics.push(diag);
    }

    Ok(AdaptRun {
        net,
        losses,
        diagnostics,
        warnings,
    })
}

fn monitor_target(
    acc: &mut EpochAccumulator,
    t_dist: &Matrix,
    labeled: &PseudoLabeledPairs,
    oracle: Option<(&[usize], &[usize])>,
) {
    match oracle {
        Some((classes, batch)) => {
            let truth: Vec<usize> = batch.iter().map(|&i| classes[i]).collect();
            if let Ok(s) = distance_stats(&labeled_pair_distances(t_dist, &truth)) {
                acc.tgt[0] += s.mu_wc;
                acc.tgt[1] += s.mu_bc;
                acc.tgt_batches += 1;
            }
            let wc_ok = labeled
                .wc
                .iter()
                .filter(|p| truth[p.i] == truth[p.j])
                .count();
            let bc_ok = labeled
                .bc
                .iter()
                .filter(|p| truth[p.i] != truth[p.j])
                .count();
            acc.wc_correct += wc_ok;
            acc.correct += wc_ok + bc_ok;
        }
        None => {
            if !labeled.wc.is_empty() && !labeled.bc.is_empty() {
                let mean = |v: &[crate::mining::LabeledPair]| {
                    v.iter().map(|p| p.distance).sum::<f64>() / v.len() as f64
                };
                acc.tgt[0] += mean(&labeled.wc);
                acc.tgt[1] += mean(&labeled.bc);
                acc.tgt_batches += 1;
            }
        }
    }
}

fn write_comment_lines<W: Write>(out: &mut W, comments: &[String]) -> std::io::Result<()> {
    for c in comments {
        writeln!(out, "# {c}")?;
    }
    Ok(())
}

/// `epoch,n_wc_labeled,n_bc_labeled,mu_wc_s,sigma_wc_s,mu_bc_s,sigma_bc_s,mu_wc_t,mu_bc_t,alignment_gap`
pub fn write_diagnostics_csv<W: Write>(
    mut out: W,
    diags: &[EpochDiagnostics],
    comments: &[String],
) -> std::io::Result<()> {
    write_comment_lines(&mut out, comments)?;
    if let Some(d) = diags.first() {
        let src = match d.target_stats {
            TargetStatsSource::Oracle => "oracle ground truth (monitoring only)",
            TargetStatsSource::PseudoLabels => "pseudo-labeled pairs",
        };
        writeln!(out, "# mu_wc_t/mu_bc_t computed from {src}")?;
    }
    writeln!(
        out,
        "epoch,n_wc_labeled,n_bc_labeled,mu_wc_s,sigma_wc_s,mu_bc_s,sigma_bc_s,mu_wc_t,mu_bc_t,alignment_gap"
    )?;
    for d in diags {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            d.epoch,
            d.n_wc_labeled,
            d.n_bc_labeled,
            d.mu_wc_s,
            d.sigma_wc_s,
            d.mu_bc_s,
            d.sigma_bc_s,
            d.mu_wc_t,
            d.mu_bc_t,
            d.alignment_gap
        )?;
    }
    out.flush()
}

/// `epoch,scenario,source_loss,target_loss,total_loss`
pub fn write_loss_csv<W: Write>(
    mut out: W,
    losses: &[EpochLoss],
    comments: &[String],
) -> std::io::Result<()> {
    write_comment_lines(&mut out, comments)?;
    writeln!(out, "epoch,scenario,source_loss,target_loss,total_loss")?;
    for l in losses {
        writeln!(
            out,
            "{},{},{},{},{}",
            l.epoch, l.phase, l.source_loss, l.target_loss, l.total_loss
        )?;
    }
    out.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::{Domain, Sample};

    fn labeled(counts: &[usize]) -> Dataset {
        let mut samples = Vec::new();
        for (k, &c) in counts.iter().enumerate() {
            for j in 0..c {
                samples.push(Sample {
                    id: format!("{k}_{j}"),
                    label: Some(format!("id{k}")),
                    features: vec![k as f64, j as f64],
                });
            }
        }
        Dataset::new(Domain::Source, 2, samples).unwrap()
    }

    #[test]
    fn pk_batch_shape() {
        let ds = labeled(&[30; 8]);
        let cfg = TrainConfig::default();
        let b = make_source_batch(&ds, &cfg, &mut crate::seeded_rng(1)).unwrap();
        assert_eq!(b.indices.len(), 100);
        let mut ids = b.classes.clone();
        ids.dedup();
        assert_eq!(ids.len(), 5);
        for c in &ids {
            let members: Vec<usize> = b
                .indices
                .iter()
                .zip(&b.classes)
                .filter(|(_, k)| *k == c)
                .map(|(i, _)| *i)
                .collect();
            let mut uniq = members.clone();
            uniq.sort();
            uniq.dedup();
            assert_eq!(uniq.len(), 20, "sampled without replacement");
        }
    }

    #[test]
    fn tiny_dataset_batch_takes_everything() {
        let ds = labeled(&[2, 2]);
        let cfg = TrainConfig {
            persons_per_batch: 2,
            images_per_person: 2,
            ..TrainConfig::default()
        };
        let mut b = make_source_batch(&ds, &cfg, &mut crate::seeded_rng(4)).unwrap();
        b.indices.sort();
        assert_eq!(b.indices, vec![0, 1, 2, 3]);
    }

    #[test]
    fn small_identity_is_resampled() {
        let ds = labeled(&[3, 3, 3, 3, 3]);
        let b = make_source_batch(&ds, &TrainConfig::default(), &mut crate::seeded_rng(2)).unwrap();
        assert_eq!(b.indices.len(), 100);
        for c in 0..5 {
            let members: Vec<usize> = b
                .indices
                .iter()
                .zip(&b.classes)
                .filter(|(_, k)| **k == c)
                .map(|(i, _)| *i)
                .collect();
            assert_eq!(members.len(), 20);
            assert!(members.iter().all(|&i| i / 3 == c));
        }
    }

    #[test]
    fn too_few_identities() {
        let ds = labeled(&[5, 5, 5]);
        assert!(matches!(
            make_source_batch(&ds, &TrainConfig::default(), &mut crate::seeded_rng(0)),
            Err(Error::TooFewIdentities {
                needed: 5,
                available: 3
            })
        ));
    }

    #[test]
    fn target_batches() {
        let mut rng = crate::seeded_rng(6);
        let mut b = make_target_batch(600, 100, &mut rng).unwrap();
        b.sort();
        b.dedup();
        assert_eq!(b.len(), 100);
        let small = make_target_batch(30, 100, &mut rng).unwrap();
        assert_eq!(small.len(), 100);
        assert!(small.iter().all(|&i| i < 30));
        let seq = |seed| {
            let mut r = crate::seeded_rng(seed);
            (0..3)
                .map(|_| make_target_batch(600, 100, &mut r).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(seq(10), seq(10));
        assert!(make_target_batch(0, 5, &mut rng).is_err());
    }

    #[test]
    fn mining_single_identity_yields_nothing() {
        let emb = vec![vec![0.0], vec![0.0], vec![0.0]];
        assert!(mine_source_triplets(&emb, &[1, 1, 1], 0.2).is_empty());
    }

    #[test]
    fn mining_matches_exhaustive_enumeration() {
        // Positives far apart, negatives close: every margin is violated.
        let emb = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.1, 0.0], vec![0.9, 0.0]];
        let labels = [0, 1, 1, 0];
        let mined = mine_source_triplets(&emb, &labels, 0.2);
        let d = pairwise_distances(&emb);
        let mut oracle = Vec::new();
        for a in 0..4 {
            for p in 0..4 {
                for n in 0..4 {
                    if a != p
                        && labels[a] == labels[p]
                        && labels[n] != labels[a]
                        && d.get(a, p) - d.get(a, n) + 0.2 > 0.0
                    {
                        oracle.push(SourceTriplet {
                            anchor: a,
                            positive: p,
                            negative: n,
                        });
                    }
                }
            }
        }
        assert_eq!(mined, oracle);
        assert_eq!(mined.len(), 8);
    }

    #[test]
    fn mining_dead_zone() {
        let emb = vec![vec![0.0], vec![0.05], vec![5.0], vec![5.05]];
        assert!(mine_source_triplets(&emb, &[0, 0, 1, 1], 0.2).is_empty());
    }

    #[test]
    fn zero_epochs_returns_initialized_net() {
        let ds = labeled(&[4, 4, 4, 4, 4]);
        let cfg = TrainConfig {
            epochs: 0,
            hidden_dims: vec![3],
            embedding_dim: 2,
            ..TrainConfig::default()
        };
        let run = train_source(&cfg, &ds).unwrap();
        let expect = MlpNet::init(&[2, 3, 2], true, &mut crate::seeded_rng(cfg.seed)).unwrap();
        assert_eq!(run.net, expect);
        assert!(run.losses.is_empty());
    }

    #[test]
    fn scenario_parsing() {
        assert_eq!("ls+lt".parse::<Scenario>().unwrap(), Scenario::LsLt);
        assert_eq!("LS".parse::<Scenario>().unwrap(), Scenario::Ls);
        assert!("both".parse::<Scenario>().is_err());
        assert_eq!(Scenario::LsLt.to_string(), "ls+lt");
    }

    #[test]
    fn config_validation() {
        let ok = TrainConfig::default();
        assert!(ok.validate().is_ok());
        assert!(TrainConfig { persons_per_batch: 1, ..ok.clone() }.validate().is_err());
        assert!(TrainConfig { images_per_person: 1, ..ok.clone() }.validate().is_err());
        assert!(TrainConfig { alpha: 0.0, ..ok.clone() }.validate().is_err());
        assert!(TrainConfig { learning_rate: -1.0, ..ok }.validate().is_err());
    }
}
