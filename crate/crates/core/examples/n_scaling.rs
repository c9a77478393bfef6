//! Grand averages of the intercept as the sample size grows.
//!
//! cargo run --release --example n_scaling

use subset_ic::averaging::n_scaling_study;
use subset_ic::config::ExperimentConfig;

fn main() -> subset_ic::Result<()> {
    let cfg = ExperimentConfig::default();
    let rows = n_scaling_study(&cfg)?;
    println!(
        "{:>6} {:<9} {:>8} {:>8} {:>8}",
        "N", "criterion", "a0", "err", "pull"
    );
    for r in &rows {
        let e = &r.estimate;
        let pull = (e.mean - cfg.intercept) / e.error();
        println!(
            "{:>6} {:<9} {:>8.4} {:>8.4} {:>8.2}",
            r.n_samples,
            e.criterion_kind.as_str(),
            e.mean,
            e.error(),
            pull
        );
    }
    Ok(())
}
