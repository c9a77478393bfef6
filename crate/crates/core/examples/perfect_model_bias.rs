//! The interpolating model fits its own data perfectly but pays 2 d_C in
//! chi-squared on an independent replica.
//!
//! cargo run --release --example perfect_model_bias

use subset_ic::experiment::bias_check;

fn main() -> subset_ic::Result<()> {
    println!(
        "{:>3} {:>10} {:>8} {:>6}",
        "d_C", "mean chi2", "SE", "2 d_C"
    );
    for d_c in 1..=6 {
        let r = bias_check(d_c, 10_000, 99)?;
        println!(
            "{d_c:>3} {:>10.3} {:>8.3} {:>6}",
            r.mean_out_of_sample_chi2, r.std_error, r.expected
        );
    }
    Ok(())
}
