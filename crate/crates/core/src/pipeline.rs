//! The seeded synthetic benchmark: generate both domains, split identities,
//! pretrain on the source, adapt under each scenario and evaluate on
//! held-out target identities.

use std::collections::BTreeSet;

use crate::datasets::{gen_synthetic, split, Dataset, GroundTruth, SynthConfig, SyntheticDomains};
use crate::eval::{
    evaluate_embedded, pseudo_labeled_examples, roc_auc, train_outer_classifier, EmbeddedSet,
    EvalReport, OuterClassifierConfig,
};
use crate::metric::pairwise_distances;
use crate::mining::{distance_stats, mining_windows, pseudo_label, DistanceStats};
use crate::numerics::MlpNet;
use crate::trainer::{adapt_dtml_with_oracle, train_source, AdaptRun, Scenario, SourceRun, TrainConfig};
use crate::{Error, Result};

/// Which target samples the reported metrics are computed on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EvalProtocol {
    /// Identities are split once; the held-out fraction of identities is
    /// never seen during source training or target calibration.
    HeldOut { test_fraction: f64 },
    /// Metrics are computed on the calibration samples themselves.
    Transductive,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkConfig {
    pub synth: SynthConfig,
    /// `scenario` is overridden per entry of `scenarios`.
    pub train: TrainConfig,
    pub scenarios: Vec<Scenario>,
    pub protocol: EvalProtocol,
    pub fars: Vec<f64>,
    pub outer: OuterClassifierConfig,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        BenchmarkConfig {
            synth: SynthConfig::default(),
            train: TrainConfig::default(),
            scenarios: vec![Scenario::Ls, Scenario::Lt, Scenario::LsLt],
            protocol: EvalProtocol::HeldOut { test_fraction: 0.3 },
            fars: vec![0.01, 0.1],
            outer: OuterClassifierConfig::default(),
        }
    }
}

/// Benchmark data after the identity split. Target calibration samples are
/// unlabeled; their truth is kept apart for monitoring.
#[derive(Debug, Clone)]
pub struct BenchmarkData {
    pub synthetic: SyntheticDomains,
    pub source_train: Dataset,
    /// Labeled source samples of the held-out identities.
    pub source_val: Dataset,
    pub target_calib: Dataset,
    pub calib_truth: GroundTruth,
    /// Labeled target samples of the held-out identities.
    pub target_test: Dataset,
}

impl BenchmarkData {
    pub fn target_calib_labeled(&self) -> Result<Dataset> {
        self.target_calib.with_truth(&self.calib_truth)
    }
}

fn target_part(target: &Dataset, truth: &GroundTruth, ids: &BTreeSet<String>) -> Vec<usize> {
    target
        .samples()
        .iter()
        .enumerate()
        .filter(|(_, s)| truth.label_of(&s.id).is_some_and(|l| ids.contains(l)))
        .map(|(i, _)| i)
        .collect()
}

pub fn prepare(cfg: &BenchmarkConfig) -> Result<BenchmarkData> {
    let synthetic = gen_synthetic(&cfg.synth)?;
    let labeled_target = synthetic.target.with_truth(&synthetic.truth)?;
    let (source_train, source_val, calib_idx, test_idx) = match cfg.protocol {
        EvalProtocol::HeldOut { test_fraction } => {
            if !(test_fraction > 0.0 && test_fraction < 1.0) {
                return Err(Error::Config(format!(
                    "test_fraction must lie in (0, 1), got {test_fraction}"
                )));
            }
            let mut parts = split(
                &synthetic.source,
                &[1.0 - test_fraction, test_fraction],
                cfg.synth.seed,
            )?;
            let val = parts.pop().expect("two parts");
            let train = parts.pop().expect("two parts");
            let train_ids: BTreeSet<String> = train.identities().into_iter().collect();
            let val_ids: BTreeSet<String> = val.identities().into_iter().collect();
            (
                train,
                val,
                target_part(&synthetic.target, &synthetic.truth, &train_ids),
                target_part(&synthetic.target, &synthetic.truth, &val_ids),
            )
        }
        EvalProtocol::Transductive => {
            let all: Vec<usize> = (0..synthetic.target.len()).collect();
            (
                synthetic.source.clone(),
                synthetic.source.clone(),
                all.clone(),
                all,
            )
        }
    };
    let target_calib = synthetic.target.subset(&calib_idx);
    let calib_truth = GroundTruth::new(
        target_calib
            .samples()
            .iter()
            .map(|s| {
                let label = synthetic.truth.label_of(&s.id).expect("truth covers target");
                (s.id.clone(), label.to_string())
            })
            .collect(),
    )?;
    let target_test = labeled_target.subset(&test_idx);
    Ok(BenchmarkData {
        synthetic,
        source_train,
        source_val,
        target_calib,
        calib_truth,
        target_test,
    })
}

/// Ground-truth WC/BC statistics of the source and target under one net,
/// and their alignment gap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Alignment {
    pub source: DistanceStats,
    pub target: DistanceStats,
    pub gap: f64,
}

pub fn alignment(net: &MlpNet, source: &Dataset, target: &Dataset) -> Result<Alignment> {
    let stats = |ds: &Dataset| -> Result<DistanceStats> {
        let set = EmbeddedSet::new(net, ds)?;
        distance_stats(&set.labeled_distances())
    };
    let (s, t) = (stats(source)?, stats(target)?);
    Ok(Alignment {
        source: s,
        target: t,
        gap: (s.mu_wc - t.mu_wc).abs() + (s.mu_bc - t.mu_bc).abs(),
    })
}

#[derive(Debug, Clone)]
pub struct ScenarioOutcome {
    pub scenario: Scenario,
    pub run: AdaptRun,
    /// Metrics on the target test samples.
    pub report: EvalReport,
    /// Alignment between source training and labeled target calibration data.
    pub alignment: Alignment,
}

#[derive(Debug, Clone)]
pub struct BenchmarkOutcome {
    pub data: BenchmarkData,
    pub source: SourceRun,
    pub source_val_report: EvalReport,
    pub source_only_report: EvalReport,
    pub source_only_alignment: Alignment,
    pub scenarios: Vec<ScenarioOutcome>,
}

impl BenchmarkOutcome {
    pub fn scenario(&self, s: Scenario) -> Option<&ScenarioOutcome> {
        self.scenarios.iter().find(|o| o.scenario == s)
    }
}

pub fn run_benchmark(cfg: &BenchmarkConfig) -> Result<BenchmarkOutcome> {
    let data = prepare(cfg)?;
    let source = train_source(&cfg.train, &data.source_train)?;
    let report = |net: &MlpNet, ds: &Dataset| evaluate_embedded(&EmbeddedSet::new(net, ds)?, &cfg.fars);
    let calib_labeled = data.target_calib_labeled()?;

    let source_val_report = report(&source.net, &data.source_val)?;
    let source_only_report = report(&source.net, &data.target_test)?;
    let source_only_alignment = alignment(&source.net, &data.source_train, &calib_labeled)?;

    let mut scenarios = Vec::with_capacity(cfg.scenarios.len());
    for &scenario in &cfg.scenarios {
        let tc = TrainConfig {
            scenario,
            ..cfg.train.clone()
        };
        log::info!("adapting under scenario {}", scenario.as_str());
        let run = adapt_dtml_with_oracle(
            &tc,
            &data.source_train,
            &data.target_calib,
            &source.net,
            &data.calib_truth,
        )?;
        scenarios.push(ScenarioOutcome {
            scenario,
            report: report(&run.net, &data.target_test)?,
            alignment: alignment(&run.net, &data.source_train, &calib_labeled)?,
            run,
        });
    }
    Ok(BenchmarkOutcome {
        data,
        source,
        source_val_report,
        source_only_report,
        source_only_alignment,
        scenarios,
    })
}

/// Raw-distance vs outer-classifier verification AUC on the target test set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OuterComparison {
    pub raw_auc: f64,
    pub outer_auc: f64,
    pub training_pairs: usize,
    pub training_accuracy: f64,
}

/// Trains the outer classifier on pseudo-labeled pairs of the whole target
/// calibration set, using windows from the whole source training set.
pub fn outer_classifier_comparison(
    net: &MlpNet,
    data: &BenchmarkData,
    cfg: &OuterClassifierConfig,
) -> Result<OuterComparison> {
    let source = EmbeddedSet::new(net, &data.source_train)?;
    let windows = mining_windows(&distance_stats(&source.labeled_distances())?);
    let calib: Vec<Vec<f64>> = data
        .target_calib
        .samples()
        .iter()
        .map(|s| net.embed(&s.features))
        .collect::<Result<_>>()?;
    let labeled = pseudo_label(&pairwise_distances(&calib), &windows);
    let mut rng = crate::seeded_rng(cfg.seed);
    let examples = pseudo_labeled_examples(&calib, &labeled, cfg.encoding, &mut rng)?;
    let clf = train_outer_classifier(&examples, cfg)?;

    let test = EmbeddedSet::new(net, &data.target_test)?;
    let (genuine, impostor) = test.genuine_impostor();
    Ok(OuterComparison {
        raw_auc: roc_auc(&genuine, &impostor)?,
        outer_auc: clf.pair_auc(&test)?,
        training_pairs: examples.len(),
        training_accuracy: clf.accuracy(&examples)?,
    })
}
