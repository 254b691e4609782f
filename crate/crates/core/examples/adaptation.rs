//! Dual-triplet adaptation under one scenario with per-epoch diagnostics.
//!
//!     cargo run --release --example adaptation -- ls+lt

use dtml::eval::evaluate;
use dtml::pipeline::{prepare, BenchmarkConfig};
use dtml::trainer::{adapt_dtml_with_oracle, train_source, write_diagnostics_csv, TrainConfig};

fn main() -> dtml::Result<()> {
    let scenario = std::env::args().nth(1).unwrap_or_else(|| "ls+lt".into()).parse()?;
    let cfg = BenchmarkConfig::default();
    let data = prepare(&cfg)?;
    let source = train_source(&cfg.train, &data.source_train)?;

    let tc = TrainConfig { scenario, ..cfg.train.clone() };
    // The truth only fills the precision columns; training never sees it.
    let run = adapt_dtml_with_oracle(&tc, &data.source_train, &data.target_calib, &source.net, &data.calib_truth)?;
    for d in run.diagnostics.iter().step_by(8) {
        println!(
            "epoch {:2}  pairs {:5}  terms {:4}  gap {:.4}  precision {:.3}",
            d.epoch,
            d.labeled_pairs(),
            d.n_target_terms,
            d.alignment_gap,
            d.oracle_precision.unwrap_or(f64::NAN)
        );
    }
    let before = evaluate(&source.net, &data.target_test, &cfg.fars)?;
    let after = evaluate(&run.net, &data.target_test, &cfg.fars)?;
    println!("target auc {:.4} -> {:.4} under {}", before.auc, after.auc, tc.scenario.as_str());

    let mut csv = Vec::new();
    write_diagnostics_csv(&mut csv, &run.diagnostics[..2], &[]).expect("in-memory write");
    print!("{}", String::from_utf8_lossy(&csv));
    Ok(())
}
