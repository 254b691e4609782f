//! Finite-difference check of the dual-triplet gradients, first on random
//! instances and then with a deliberately wrong gradient.

use dtml::cli::{grad_check_suite, GRAD_CHECK_TOLERANCE};

fn main() -> dtml::Result<()> {
    for seed in [1, 2, 3] {
        let s = grad_check_suite(20, seed, false)?;
        println!(
            "seed {seed}: {} instances, {} parameters, max relative error {:.2e} (tolerance {:.0e})",
            s.instances, s.params_checked, s.max_rel_err, GRAD_CHECK_TOLERANCE
        );
    }
    let bad = grad_check_suite(5, 1, true)?;
    println!("sign-flipped gradient: max relative error {:.3}", bad.max_rel_err);
    Ok(())
}
