//! Full seeded benchmark: source-only vs the three adaptation scenarios.
use dtml::pipeline::{outer_classifier_comparison, run_benchmark, BenchmarkConfig};

fn main() -> dtml::Result<()> {
    env_logger::init();
    let cfg = BenchmarkConfig::default();
    let t0 = std::time::Instant::now();
    let out = run_benchmark(&cfg)?;
    println!("source val auc {:.4}", out.source_val_report.auc);
    println!(
        "source-only target auc {:.4} rank1 {:.4} gap {:.4}",
        out.source_only_report.auc, out.source_only_report.rank1, out.source_only_alignment.gap
    );
    for s in &out.scenarios {
        let first = &s.run.diagnostics[0];
        println!(
            "{:6} auc {:.4} rank1 {:.4} gap {:.4} first-epoch precision {:?} pairs {}",
            s.scenario.as_str(),
            s.report.auc,
            s.report.rank1,
            s.alignment.gap,
            first.oracle_precision,
            first.labeled_pairs()
        );
    }
    if let Some(best) = out.scenario(dtml::trainer::Scenario::LsLt) {
        let cmp = outer_classifier_comparison(&best.run.net, &out.data, &cfg.outer)?;
        println!("outer classifier {cmp:?}");
    }
    println!("elapsed {:?}", t0.elapsed());
    Ok(())
}
