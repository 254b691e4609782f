//! Verification and identification metrics, distance histograms, the
//! dissimilarity representation and the outer pair classifier.
//!
//! Scores throughout are distances: smaller means "more likely the same
//! identity".

use std::collections::BTreeMap;
use std::io::Write;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::datasets::{Dataset, Domain};
use crate::metric::pairwise_distances;
use crate::mining::{PairLabel, PseudoLabeledPairs};
use crate::numerics::{euclidean, Gradients, MlpNet, Sgd, SgdConfig};
use crate::{Error, Result};

/// Area under the ROC curve, `P(g < i) + ½·P(g = i)`, via midranks.
pub fn roc_auc(genuine: &[f64], impostor: &[f64]) -> Result<f64> {
    check_scores(genuine, impostor)?;
    let mut all: Vec<(f64, bool)> = genuine
        .iter()
        .map(|&v| (v, true))
        .chain(impostor.iter().map(|&v| (v, false)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));

    // Sum of impostor midranks (1-based).
    let mut impostor_rank_sum = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j < all.len() && all[j].0 == all[i].0 {
            j += 1;
        }
        let midrank = (i + 1 + j) as f64 / 2.0;
        let n_imp = all[i..j].iter().filter(|(_, g)| !g).count();
        impostor_rank_sum += midrank * n_imp as f64;
        i = j;
    }
    let (ng, ni) = (genuine.len() as f64, impostor.len() as f64);
    let u = impostor_rank_sum - ni * (ni + 1.0) / 2.0;
    Ok(u / (ng * ni))
}

fn check_scores(genuine: &[f64], impostor: &[f64]) -> Result<()> {
    if genuine.is_empty() {
        return Err(Error::EmptyInput("genuine distances"));
    }
    if impostor.is_empty() {
        return Err(Error::EmptyInput("impostor distances"));
    }
    if genuine.iter().chain(impostor).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("verification distances".into()));
    }
    Ok(())
}

/// Fraction of probes whose nearest gallery template (Euclidean; ties go to
/// the lowest gallery index) carries the probe's label.
pub fn rank1<L: PartialEq>(gallery: &[(L, Vec<f64>)], probes: &[(L, Vec<f64>)]) -> Result<f64> {
    if gallery.is_empty() {
        return Err(Error::EmptyInput("gallery"));
    }
    if probes.is_empty() {
        return Err(Error::EmptyInput("probes"));
    }
    let hits = probes
        .iter()
        .filter(|(label, x)| {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (g, (_, t)) in gallery.iter().enumerate() {
                let d = euclidean(x, t);
                if d < best_d {
                    best_d = d;
                    best = g;
                }
            }
            gallery[best].0 == *label
        })
        .count();
    Ok(hits as f64 / probes.len() as f64)
}

/// Threshold `t` is the largest distance with `#{impostor < t} ≤ far·n`;
/// returns `#{genuine < t} / n_genuine`.
pub fn tpr_at_far(genuine: &[f64], impostor: &[f64], far: f64) -> Result<f64> {
    check_scores(genuine, impostor)?;
    if !(far > 0.0 && far < 1.0) {
        return Err(Error::Config(format!("far must lie in (0, 1), got {far}")));
    }
    let mut imp = impostor.to_vec();
    imp.sort_by(f64::total_cmp);
    let allowed = (far * imp.len() as f64 + 1e-9).floor() as usize;
    let threshold = imp.get(allowed).copied().unwrap_or(f64::INFINITY);
    let accepted = genuine.iter().filter(|&&g| g < threshold).count();
    Ok(accepted as f64 / genuine.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub wc: usize,
    pub bc: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bins: Vec<HistogramBin>,
}

impl Histogram {
    pub fn totals(&self) -> (usize, usize) {
        self.bins
            .iter()
            .fold((0, 0), |(w, b), bin| (w + bin.wc, b + bin.bc))
    }
}

/// Fixed-width WC/BC histogram over `range`; values outside the range are
/// counted in the nearest edge bin.
pub fn wcbc_histogram(
    distances: &[(f64, PairLabel)],
    bins: usize,
    range: (f64, f64),
) -> Result<Histogram> {
    let (lo, hi) = range;
    if bins == 0 {
        return Err(Error::Config("histogram needs at least one bin".into()));
    }
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::Config(format!("invalid histogram range [{lo}, {hi}]")));
    }
    let width = (hi - lo) / bins as f64;
    let mut out: Vec<HistogramBin> = (0..bins)
        .map(|k| HistogramBin {
            lo: lo + k as f64 * width,
            hi: if k + 1 == bins { hi } else { lo + (k + 1) as f64 * width },
            wc: 0,
            bc: 0,
        })
        .collect();
    for &(d, label) in distances {
        let k = if d.is_nan() {
            continue;
        } else if d <= lo {
            0
        } else {
            (((d - lo) / width).floor() as usize).min(bins - 1)
        };
        match label {
            PairLabel::Within => out[k].wc += 1,
            PairLabel::Between => out[k].bc += 1,
        }
    }
    Ok(Histogram { bins: out })
}

/// `bin_lo,bin_hi,wc_count,bc_count,domain`
pub fn write_histogram_csv<W: Write>(
    mut out: W,
    histograms: &[(Domain, &Histogram)],
    comments: &[String],
) -> std::io::Result<()> {
    for c in comments {
        writeln!(out, "# {c}")?;
    }
    writeln!(out, "bin_lo,bin_hi,wc_count,bc_count,domain")?;
    for (domain, h) in histograms {
        for b in &h.bins {
            writeln!(out, "{},{},{},{},{}", b.lo, b.hi, b.wc, b.bc, domain)?;
        }
    }
    out.flush()
}

/// Componentwise `|x_query − x_template|`.
#[derive(Debug, Clone, PartialEq)]
pub struct DissimVector(Vec<f64>);

impl DissimVector {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

pub fn dissimilarity(query: &[f64], template: &[f64]) -> Result<DissimVector> {
    if query.len() != template.len() {
        return Err(Error::DimensionMismatch {
            context: "dissimilarity operands",
            expected: query.len(),
            got: template.len(),
        });
    }
    Ok(DissimVector(
        query.iter().zip(template).map(|(a, b)| (a - b).abs()).collect(),
    ))
}

/// Genuine (same label) and impostor distances over all unordered pairs.
pub fn genuine_impostor<V: AsRef<[f64]>, L: PartialEq>(
    embeddings: &[V],
    labels: &[L],
) -> (Vec<f64>, Vec<f64>) {
    let d = pairwise_distances(embeddings);
    let mut genuine = Vec::new();
    let mut impostor = Vec::new();
    for i in 0..labels.len() {
        for j in i + 1..labels.len() {
            if labels[i] == labels[j] {
                genuine.push(d.get(i, j));
            } else {
                impostor.push(d.get(i, j));
            }
        }
    }
    (genuine, impostor)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FarPoint {
    pub far: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub auc: f64,
    pub rank1: f64,
    pub tpr_at_far: Vec<FarPoint>,
    pub n_genuine: usize,
    pub n_impostor: usize,
    pub histogram_path: String,
    /// Effective run configuration, for provenance.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub config: BTreeMap<String, String>,
}

/// Embedded evaluation view of a labeled dataset.
#[derive(Debug, Clone)]
pub struct EmbeddedSet {
    pub embeddings: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
}

/// Class index and embedding of one sample.
pub type LabeledEmbedding = (usize, Vec<f64>);

impl EmbeddedSet {
    pub fn new(net: &MlpNet, dataset: &Dataset) -> Result<Self> {
        let labels = dataset.class_indices()?;
        let embeddings = dataset
            .samples()
            .iter()
            .map(|s| net.embed(&s.features))
            .collect::<Result<Vec<_>>>()?;
        Ok(EmbeddedSet { embeddings, labels })
    }

    pub fn genuine_impostor(&self) -> (Vec<f64>, Vec<f64>) {
        genuine_impostor(&self.embeddings, &self.labels)
    }

    pub fn labeled_distances(&self) -> Vec<(f64, PairLabel)> {
        crate::mining::labeled_pair_distances(&pairwise_distances(&self.embeddings), &self.labels)
    }

    /// Still-template split: the first sample of each identity is its
    /// gallery template, every other sample is a probe.
    pub fn gallery_and_probes(&self) -> (Vec<LabeledEmbedding>, Vec<LabeledEmbedding>) {
        let mut seen = std::collections::BTreeSet::new();
        let mut gallery = Vec::new();
        let mut probes = Vec::new();
        for (e, &l) in self.embeddings.iter().zip(&self.labels) {
            if seen.insert(l) {
                gallery.push((l, e.clone()));
            } else {
                probes.push((l, e.clone()));
            }
        }
        (gallery, probes)
    }
}

/// AUC, rank-1 and TPR at each FAR of `net` on a labeled dataset.
pub fn evaluate(net: &MlpNet, dataset: &Dataset, fars: &[f64]) -> Result<EvalReport> {
    let set = EmbeddedSet::new(net, dataset)?;
    evaluate_embedded(&set, fars)
}

pub fn evaluate_embedded(set: &EmbeddedSet, fars: &[f64]) -> Result<EvalReport> {
    let (genuine, impostor) = set.genuine_impostor();
    let (gallery, probes) = set.gallery_and_probes();
    let tpr_at = fars
        .iter()
        .map(|&far| {
            Ok(FarPoint {
                far,
                tpr: tpr_at_far(&genuine, &impostor, far)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport {
        auc: roc_auc(&genuine, &impostor)?,
        rank1: rank1(&gallery, &probes)?,
        tpr_at_far: tpr_at,
        n_genuine: genuine.len(),
        n_impostor: impostor.len(),
        histogram_path: String::new(),
        config: BTreeMap::new(),
    })
}

/// How a (query, template) embedding pair is fed to the outer classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairEncoding {
    /// `|x_q − x_t|`, same dimension as the embedding.
    Dissimilarity,
    /// `[x_q, x_t]`, twice the embedding dimension.
    Concat,
}

impl PairEncoding {
    pub fn encode(self, query: &[f64], template: &[f64]) -> Result<Vec<f64>> {
        match self {
            PairEncoding::Dissimilarity => dissimilarity(query, template).map(DissimVector::into_vec),
            PairEncoding::Concat => Ok(query.iter().chain(template).copied().collect()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OuterClassifierConfig {
    /// Defaults to the input width.
    pub hidden_dim: Option<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub seed: u64,
    pub encoding: PairEncoding,
}

impl Default for OuterClassifierConfig {
    fn default() -> Self {
        OuterClassifierConfig {
            hidden_dim: None,
            epochs: 200,
            batch_size: 32,
            learning_rate: 0.05,
            momentum: 0.9,
            seed: 42,
            encoding: PairEncoding::Dissimilarity,
        }
    }
}

/// Two-layer network with a logistic output; the score is the estimated
/// probability that a pair shares an identity.
#[derive(Debug, Clone)]
pub struct OuterClassifier {
    pub net: MlpNet,
    pub encoding: PairEncoding,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `−[y log σ(z) + (1−y) log(1−σ(z))]`, computed stably.
fn bce_with_logit(z: f64, same: bool) -> f64 {
    let softplus = if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    };
    if same {
        softplus - z
    } else {
        softplus
    }
}

impl OuterClassifier {
    pub fn logit(&self, features: &[f64]) -> Result<f64> {
        Ok(self.net.embed(features)?[0])
    }

    pub fn score_features(&self, features: &[f64]) -> Result<f64> {
        self.logit(features).map(sigmoid)
    }

    pub fn score(&self, query: &[f64], template: &[f64]) -> Result<f64> {
        self.score_features(&self.encoding.encode(query, template)?)
    }

    /// Fraction of examples classified correctly at the 0.5 threshold.
    pub fn accuracy(&self, examples: &[(Vec<f64>, bool)]) -> Result<f64> {
        let mut ok = 0usize;
        for (x, same) in examples {
            if (self.logit(x)? > 0.0) == *same {
                ok += 1;
            }
        }
        Ok(ok as f64 / examples.len().max(1) as f64)
    }

    /// Verification AUC over all pairs of an embedded labeled set, using
    /// `1 − score` as the distance.
    pub fn pair_auc(&self, set: &EmbeddedSet) -> Result<f64> {
        let mut genuine = Vec::new();
        let mut impostor = Vec::new();
        let n = set.labels.len();
        for i in 0..n {
            for j in i + 1..n {
                // -logit is a strictly increasing function of 1 − score and
                // does not saturate.
                let x = self.encoding.encode(&set.embeddings[i], &set.embeddings[j])?;
                let d = -self.logit(&x)?;
                if set.labels[i] == set.labels[j] {
                    genuine.push(d);
                } else {
                    impostor.push(d);
                }
            }
        }
        roc_auc(&genuine, &impostor)
    }
}

/// Trains the outer classifier with binary cross-entropy. `examples` are
/// already-encoded pairs with their (pseudo-)labels.
pub fn train_outer_classifier(
    examples: &[(Vec<f64>, bool)],
    cfg: &OuterClassifierConfig,
) -> Result<OuterClassifier> {
    let first = examples
        .first()
        .ok_or(Error::EmptyInput("outer classifier training pairs"))?;
    let dim = first.0.len();
    if examples.iter().any(|(x, _)| x.len() != dim) {
        return Err(Error::DimensionMismatch {
            context: "outer classifier input",
            expected: dim,
            got: examples.iter().find(|(x, _)| x.len() != dim).map_or(0, |e| e.0.len()),
        });
    }
    let positives = examples.iter().filter(|(_, y)| *y).count();
    if positives == 0 || positives == examples.len() {
        return Err(Error::SingleClass);
    }
    if cfg.batch_size == 0 {
        return Err(Error::Config("batch_size must be positive".into()));
    }
    let mut rng = crate::seeded_rng(cfg.seed);
    let hidden = cfg.hidden_dim.unwrap_or(dim);
    let mut net = MlpNet::init(&[dim, hidden, 1], false, &mut rng)?;
    let mut sgd = Sgd::new(SgdConfig {
        learning_rate: cfg.learning_rate,
        momentum: cfg.momentum,
    })?;
    let mut order: Vec<usize> = (0..examples.len()).collect();
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let mut grads = Gradients::zeros_for(&net);
            let scale = 1.0 / chunk.len() as f64;
            for &k in chunk {
                let (x, same) = &examples[k];
                let (z, tape) = net.forward(x)?;
                let y = if *same { 1.0 } else { 0.0 };
                net.accumulate_backward(&tape, &[(sigmoid(z[0]) - y) * scale], &mut grads)?;
            }
            sgd.step(&mut net, &grads)?;
        }
    }
    Ok(OuterClassifier {
        net,
        encoding: cfg.encoding,
    })
}

/// Mean cross-entropy of a classifier over examples.
pub fn outer_classifier_loss(clf: &OuterClassifier, examples: &[(Vec<f64>, bool)]) -> Result<f64> {
    let mut sum = 0.0;
    for (x, same) in examples {
        sum += bce_with_logit(clf.logit(x)?, *same);
    }
    Ok(sum / examples.len().max(1) as f64)
}

/// Training examples from pseudo-labeled target pairs: the WC and BC lists
/// are shuffled and truncated to equal length, then encoded.
pub fn pseudo_labeled_examples(
    embeddings: &[Vec<f64>],
    pairs: &PseudoLabeledPairs,
    encoding: PairEncoding,
    rng: &mut crate::Rng,
) -> Result<Vec<(Vec<f64>, bool)>> {
    let mut wc = pairs.wc.clone();
    let mut bc = pairs.bc.clone();
    wc.shuffle(rng);
    bc.shuffle(rng);
    let m = wc.len().min(bc.len());
    let mut out = Vec::with_capacity(2 * m);
    for (w, b) in wc.iter().zip(&bc).take(m) {
        out.push((encoding.encode(&embeddings[w.i], &embeddings[w.j])?, true));
        out.push((encoding.encode(&embeddings[b.i], &embeddings[b.j])?, false));
    }
    Ok(out)
}
