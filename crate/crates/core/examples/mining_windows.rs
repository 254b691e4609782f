//! Source distance statistics, the WC/BC mining windows they define, and the
//! quality of the target pairs those windows pseudo-label.

use dtml::eval::EmbeddedSet;
use dtml::metric::pairwise_distances;
use dtml::mining::{distance_stats, mining_windows, pseudo_label, DistanceStats};
use dtml::pipeline::{prepare, BenchmarkConfig};
use dtml::trainer::train_source;

fn main() -> dtml::Result<()> {
    let cfg = BenchmarkConfig::default();
    let data = prepare(&cfg)?;
    let net = train_source(&cfg.train, &data.source_train)?.net;

    let source = EmbeddedSet::new(&net, &data.source_train)?;
    let stats = distance_stats(&source.labeled_distances())?;
    let windows = mining_windows(&stats);
    println!("source: mu_wc {:.3} sigma_wc {:.3} mu_bc {:.3} sigma_bc {:.3}",
        stats.mu_wc, stats.sigma_wc, stats.mu_bc, stats.sigma_bc);
    println!("WC window {:?}", windows.wc.pieces());
    println!("BC window {:?}", windows.bc.pieces());
    if let Some(cut) = windows.overlap {
        println!("overlap [{:.3}, {:.3}] removed from both", cut.lo, cut.hi);
    }

    // A toy case where the windows overlap.
    let tight = DistanceStats { mu_wc: 1.0, sigma_wc: 0.5, mu_bc: 0.8, sigma_bc: 0.5, n_wc: 1, n_bc: 1 };
    let w = mining_windows(&tight);
    println!("overlapping stats -> WC {:?} BC {:?}", w.wc.pieces(), w.bc.pieces());

    // Pseudo-label every target calibration pair and score against truth.
    let calib = data.target_calib_labeled()?;
    let classes = calib.class_indices()?;
    let emb = EmbeddedSet::new(&net, &calib)?;
    let labeled = pseudo_label(&pairwise_distances(&emb.embeddings), &windows);
    let right_wc = labeled.wc.iter().filter(|p| classes[p.i] == classes[p.j]).count();
    let right_bc = labeled.bc.iter().filter(|p| classes[p.i] != classes[p.j]).count();
    let n = calib.len();
    println!(
        "{} of {} target pairs labeled: {} WC (precision {:.3}), {} BC (precision {:.3})",
        labeled.len(),
        n * (n - 1) / 2,
        labeled.wc.len(),
        right_wc as f64 / labeled.wc.len().max(1) as f64,
        labeled.bc.len(),
        right_bc as f64 / labeled.bc.len().max(1) as f64,
    );
    Ok(())
}
