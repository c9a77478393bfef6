//! Closed-form Gaussian K-L divergences for the two-dimensional example,
//! checked against Monte Carlo, plus marginalization and block joins.
//!
//! cargo run --release --example kl_divergence

use subset_ic::experiment::KlDemoDistributions;
use subset_ic::kl::{kl_gaussian, kl_monte_carlo, projection_inequality_check, symmetrized_kl};

fn main() -> subset_ic::Result<()> {
    let d = KlDemoDistributions::new();
    let pairs = [
        ("I(f, g)", &d.f, &d.g),
        ("I(f1, h)", &d.f1, &d.h),
        ("I(f, h')", &d.f, &d.h_prime),
    ];
    println!(
        "{:<10} {:>10} {:>10} {:>9}",
        "pair", "closed", "MC", "MC err"
    );
    for (i, (name, f, g)) in pairs.into_iter().enumerate() {
        let exact = kl_gaussian(f, g)?;
        let mc = kl_monte_carlo(f, g, 200_000, 17 + i as u64)?;
        println!(
            "{name:<10} {exact:>10.6} {:>10.6} {:>9.6}",
            mc.estimate, mc.std_error
        );
    }

    // g is the better description of f in the full space, even though h
    // matches f's first coordinate more closely than g does
    println!("symmetrized I(f, g) = {:.6}", symmetrized_kl(&d.f, &d.g)?);
    let (full, projected) = projection_inequality_check(&d.f, &d.h_prime, &[0])?;
    println!("projection onto z1: {full:.6} -> {projected:.6}");
    Ok(())
}
