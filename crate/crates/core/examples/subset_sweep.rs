//! Fixed-N sweep over models f0, f1 and subsets t >= t_min, with weights and
//! grand averages under both criteria.
//!
//! cargo run --release --example subset_sweep [N]

use subset_ic::config::ExperimentConfig;
use subset_ic::criteria::CriterionKind;
use subset_ic::experiment::run_sweep_experiment;

fn main() -> subset_ic::Result<()> {
    let n = std::env::args()
        .nth(1)
        .map(|s| s.parse().expect("N must be an integer"))
        .unwrap_or(320);
    let cfg = ExperimentConfig {
        n_samples: n,
        ..ExperimentConfig::default()
    };
    let report = run_sweep_experiment(&cfg)?;

    println!(
        "{:<5} {:>5} {:>8} {:>8} {:>7} {:>10} {:>10}",
        "model", "t_min", "a0", "chi2", "Q", "w_sub", "w_perf"
    );
    for (i, c) in report.candidates.iter().enumerate() {
        let Some(f) = c.fitted() else {
            println!("{:<5} {:>5} failed", c.model_name, c.subset.label());
            continue;
        };
        println!(
            "{:<5} {:>5} {:>8.4} {:>8.2} {:>7.3} {:>10.2e} {:>10.2e}",
            c.model_name,
            c.subset.label(),
            f.fit.params[0],
            f.fit.chi2_kept,
            f.fit.q_value,
            report.w_subspace[i],
            report.w_perfect[i]
        );
    }
    for a in &report.averages {
        println!(
            "{:>8}: a0 = {:.4} +- {:.4} (stat {:.4}, spread {:.4})",
            a.criterion_kind.as_str(),
            a.mean,
            a.error(),
            a.stat_variance.sqrt(),
            a.spread_variance.sqrt()
        );
    }
    let t_sub = subset_ic::averaging::mean_t_min(&report.candidates, CriterionKind::Subspace)?;
    let t_perf = subset_ic::averaging::mean_t_min(&report.candidates, CriterionKind::Perfect)?;
    println!("weighted mean t_min: subspace {t_sub:.2}, perfect {t_perf:.2}");
    Ok(())
}
