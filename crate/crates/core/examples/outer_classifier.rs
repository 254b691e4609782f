//! Dissimilarity vectors and the outer verification classifier trained on
//! pseudo-labeled target pairs, compared with raw embedding distance.

use dtml::eval::{dissimilarity, OuterClassifierConfig, PairEncoding};
use dtml::pipeline::{outer_classifier_comparison, prepare, BenchmarkConfig};
use dtml::trainer::{adapt_dtml, train_source};

fn main() -> dtml::Result<()> {
    let d = dissimilarity(&[0.2, -1.0, 3.0], &[0.5, -1.0, 1.0])?;
    println!("delta = {:?}", d.values());

    let cfg = BenchmarkConfig::default();
    let data = prepare(&cfg)?;
    let source = train_source(&cfg.train, &data.source_train)?;
    let adapted = adapt_dtml(&cfg.train, &data.source_train, &data.target_calib, &source.net)?;

    for encoding in [PairEncoding::Dissimilarity, PairEncoding::Concat] {
        let oc = OuterClassifierConfig { encoding, ..cfg.outer.clone() };
        let c = outer_classifier_comparison(&adapted.net, &data, &oc)?;
        println!(
            "{encoding:?}: {} training pairs (train acc {:.3}); test auc outer {:.4} vs raw distance {:.4}",
            c.training_pairs, c.training_accuracy, c.outer_auc, c.raw_auc
        );
    }
    Ok(())
}
