//! ROC AUC, rank-1 and TPR at fixed FAR on toy scores, then the WC/BC
//! histogram of a trained embedding as CSV.

use dtml::datasets::Domain;
use dtml::eval::{rank1, roc_auc, tpr_at_far, wcbc_histogram, write_histogram_csv, EmbeddedSet};
use dtml::pipeline::{prepare, BenchmarkConfig};
use dtml::trainer::train_source;

fn main() -> dtml::Result<()> {
    // Distances: genuine pairs should be small, impostor pairs large.
    let genuine = [0.1, 0.2, 0.3, 0.9];
    let impostor = [0.5, 0.6, 0.7, 0.8, 1.0, 1.2];
    println!("auc {:.4}", roc_auc(&genuine, &impostor)?);
    println!("tpr@far=0.2 {:.3}", tpr_at_far(&genuine, &impostor, 0.2)?);

    let gallery = vec![("a", vec![0.0, 0.0]), ("b", vec![1.0, 0.0])];
    let probes = vec![("a", vec![0.1, 0.1]), ("b", vec![0.4, 0.0]), ("b", vec![0.9, 0.2])];
    println!("rank1 {:.3}", rank1(&gallery, &probes)?);

    let cfg = BenchmarkConfig { train: dtml::trainer::TrainConfig { epochs: 10, ..Default::default() }, ..Default::default() };
    let data = prepare(&cfg)?;
    let net = train_source(&cfg.train, &data.source_train)?.net;
    let source = wcbc_histogram(&EmbeddedSet::new(&net, &data.source_train)?.labeled_distances(), 10, (0.0, 2.0))?;
    let target = wcbc_histogram(&EmbeddedSet::new(&net, &data.target_test)?.labeled_distances(), 10, (0.0, 2.0))?;
    let mut out = std::io::stdout().lock();
    write_histogram_csv(&mut out, &[(Domain::Source, &source), (Domain::Target, &target)], &["10 epochs".into()])
        .map_err(|e| dtml::Error::io("stdout", e))?;
    Ok(())
}
