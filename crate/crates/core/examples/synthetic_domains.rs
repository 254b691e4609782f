//! Generates the seeded two-domain benchmark and writes the three CSV files
//! into a directory (default: a fresh temporary one).
//!
//!     cargo run --example synthetic_domains -- out/

use std::path::PathBuf;

use dtml::datasets::{gen_synthetic, SynthConfig};

fn centroid(rows: &[Vec<f64>]) -> Vec<f64> {
    let mut c = vec![0.0; rows[0].len()];
    for r in rows {
        c.iter_mut().zip(r).for_each(|(a, b)| *a += b / rows.len() as f64);
    }
    c
}

fn main() -> dtml::Result<()> {
    let dir: PathBuf = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("dtml-synthetic"));
    std::fs::create_dir_all(&dir).map_err(|e| dtml::Error::io(&dir, e))?;

    let cfg = SynthConfig::default();
    let data = gen_synthetic(&cfg)?;
    println!(
        "{} identities x {} samples per domain, dim {}",
        cfg.identities, cfg.per_identity, cfg.dim
    );
    println!("shift: {:?}", cfg.shift);

    let norm = |rows: Vec<Vec<f64>>| -> f64 {
        rows.iter().map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt()).sum::<f64>() / rows.len() as f64
    };
    let src: Vec<Vec<f64>> = data.source.samples().iter().map(|s| s.features.clone()).collect();
    let tgt: Vec<Vec<f64>> = data.target.samples().iter().map(|s| s.features.clone()).collect();
    println!("mean sample norm: source {:.3}, target {:.3}", norm(src.clone()), norm(tgt.clone()));
    let (cs, ct) = (centroid(&src), centroid(&tgt));
    println!("centroid of source[0..2] {:.3?}, target[0..2] {:.3?}", &cs[..2], &ct[..2]);

    let note = vec![format!("seed = {}", cfg.seed)];
    data.source.save_csv(&dir.join("source.csv"), &note)?;
    data.target.save_csv(&dir.join("target.csv"), &note)?;
    data.truth.save_csv(&dir.join("target_truth.csv"), &note)?;
    println!("wrote source.csv, target.csv (unlabeled) and target_truth.csv to {}", dir.display());
    Ok(())
}
