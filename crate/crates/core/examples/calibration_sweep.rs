//! Runs the benchmark once per argument, each a comma-separated list of
//! `key=value` overrides, and prints one summary row per run.
//!
//!     cargo run --release --example calibration_sweep -- "" alpha=1 intra=1,trans planes=16,deg=90
//!
//! Row fields: held-out source AUC, source-only target AUC and alignment gap,
//! then per scenario the target AUC, gap (g), first-epoch pseudo-label
//! precision (p) and mean labeled pairs over the first/last five epochs (n).
use dtml::pipeline::{outer_classifier_comparison, run_benchmark, BenchmarkConfig, EvalProtocol};

fn configure(run: &str) -> BenchmarkConfig {
    let mut cfg = BenchmarkConfig::default();
    for kv in run.split(',').filter(|s| !s.is_empty()) {
        let (k, v) = kv.split_once('=').unwrap_or((kv, ""));
        let f = || v.parse::<f64>().expect("number");
        match k {
            "intra" => cfg.synth.intra_class_sigma = f(),
            "inter" => cfg.synth.inter_class_sigma = f(),
            "alpha" => cfg.train.alpha = f(),
            "lr" => cfg.train.learning_rate = f(),
            "epochs" => cfg.train.epochs = f() as usize,
            "emb" => cfg.train.embedding_dim = f() as usize,
            "hidden" => cfg.train.hidden_dims = vec![f() as usize],
            "norm" => cfg.train.normalize_output = f() != 0.0,
            "test" => cfg.protocol = EvalProtocol::HeldOut { test_fraction: f() },
            "trans" => cfg.protocol = EvalProtocol::Transductive,
            "whole" => cfg.train.stats_mode = dtml::trainer::StatsMode::WholeSet,
            "mom" => cfg.train.momentum = f(),
            "planes" => {
                cfg.synth.shift.rotations = (0..f() as usize)
                    .map(|k| dtml::datasets::PlaneRotation { axes: (2 * k, 2 * k + 1), degrees: 30.0 })
                    .collect()
            }
            "deg" => {
                for r in &mut cfg.synth.shift.rotations {
                    r.degrees = f();
                }
            }
            "scale" => cfg.synth.shift.scale = f(),
            "shiftx" => cfg.synth.shift.translation = vec![f(); cfg.synth.dim],
            "ohid" => cfg.outer.hidden_dim = Some(f() as usize),
            "oep" => cfg.outer.epochs = f() as usize,
            "olr" => cfg.outer.learning_rate = f(),
            "obs" => cfg.outer.batch_size = f() as usize,
            "concat" => cfg.outer.encoding = dtml::eval::PairEncoding::Concat,
            "noise" => cfg.synth.shift.noise_sigma = f(),
            "seed" => {
                cfg.synth.seed = f() as u64;
                cfg.train.seed = f() as u64;
            }
            _ => panic!("unknown key {k}"),
        }
    }
    cfg
}

fn main() -> dtml::Result<()> {
    for run in std::env::args().skip(1) {
        let cfg = configure(&run);
        let out = run_benchmark(&cfg)?;
        print!(
            "{run}: val {:.3} src {:.3} gap {:.3} |",
            out.source_val_report.auc, out.source_only_report.auc, out.source_only_alignment.gap
        );
        for s in &out.scenarios {
            let d = &s.run.diagnostics;
            let p0 = d[0].oracle_precision.unwrap_or(f64::NAN);
            let first: f64 = d[..5].iter().map(|x| x.labeled_pairs() as f64).sum::<f64>() / 5.0;
            let last: f64 = d[d.len() - 5..].iter().map(|x| x.labeled_pairs() as f64).sum::<f64>() / 5.0;
            print!(
                " {} {:.3} g{:.3} p{:.2} n{:.0}/{:.0} |",
                s.scenario.as_str(),
                s.report.auc,
                s.alignment.gap,
                p0,
                first,
                last,
            );
        }
        if let Some(best) = out.scenarios.last() {
            let c = outer_classifier_comparison(&best.run.net, &out.data, &cfg.outer)?;
            print!(" outer {:.3} vs raw {:.3}", c.outer_auc, c.raw_auc);
        }
        println!();
    }
    Ok(())
}
