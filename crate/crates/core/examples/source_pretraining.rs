//! Triplet-loss pretraining on the labeled source domain, evaluated on
//! held-out source identities and on the shifted target domain.

use dtml::eval::evaluate;
use dtml::pipeline::{prepare, BenchmarkConfig};
use dtml::trainer::train_source;

fn main() -> dtml::Result<()> {
    let cfg = BenchmarkConfig::default();
    let data = prepare(&cfg)?;
    let run = train_source(&cfg.train, &data.source_train)?;

    for l in run.losses.iter().step_by(5) {
        println!("epoch {:2}  loss {:.5}", l.epoch, l.total_loss);
    }
    let val = evaluate(&run.net, &data.source_val, &cfg.fars)?;
    let tgt = evaluate(&run.net, &data.target_test, &cfg.fars)?;
    println!("held-out source: auc {:.4}  rank1 {:.3}", val.auc, val.rank1);
    println!("target (source-only): auc {:.4}  rank1 {:.3}", tgt.auc, tgt.rank1);
    println!("layers {:?}, {} parameters", run.net.dims(), run.net.num_params());
    Ok(())
}
