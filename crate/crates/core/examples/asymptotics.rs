//! Large-N behaviour of the criteria: the true model's chi-squared settles at
//! d_K, while a wrong model's grows linearly in N and loses all weight.
//!
//! cargo run --release --example asymptotics

use subset_ic::averaging::{candidate_weights, sweep_summary};
use subset_ic::criteria::{aic_perfect, aic_subspace, CriterionKind};
use subset_ic::fitting::{fit, ModelSpec, PriorSpec};
use subset_ic::gaussdata::{generate_mock_data, summarize, CoordinateGrid, SubsetSpec};

fn main() -> subset_ic::Result<()> {
    let truth = |t: f64| 1.80 - 0.53 * (1.0 - t / 16.0);
    let grid = CoordinateGrid::integer_range(1, 15)?;
    let subsets: Vec<_> = (1..=12)
        .map(|t| SubsetSpec::from_t_min(&grid, t))
        .collect::<Result<_, _>>()?;
    let full = SubsetSpec::full(&grid);
    let fixed = ModelSpec::fixed("truth", truth);
    let models = [ModelSpec::constant(), ModelSpec::linear(16.0)];
    let priors = [
        PriorSpec::uniform(1, 0.0, 10.0)?,
        PriorSpec::uniform(2, 0.0, 10.0)?,
    ];

    println!(
        "{:>6} {:>10} {:>9} {:>9} {:>10} {:>12} {:>12}",
        "N", "chi2 true", "AIC_sub", "AIC_perf", "chi2 f0", "w(f0) sub", "w(f0) perf"
    );
    for (i, n) in [40, 160, 640, 2400, 9600].into_iter().enumerate() {
        let summary = summarize(&generate_mock_data(
            truth,
            &grid,
            0.0,
            1.0,
            n,
            500 + i as u64,
        )?)?;
        let t = fit(
            &summary,
            &grid,
            &full,
            &fixed,
            &PriorSpec::new(vec![], vec![])?,
        )?;
        let f0 = fit(&summary, &grid, &full, &models[0], &priors[0])?;
        let c = sweep_summary(&summary, &grid, &models, &priors, &subsets)?;
        let w_f0 = |kind| -> subset_ic::Result<f64> {
            let w = candidate_weights(&c, kind)?;
            Ok(c.iter()
                .zip(w)
                .filter(|(x, _)| x.model_name == "f0")
                .map(|(_, w)| w)
                .sum())
        };
        println!(
            "{n:>6} {:>10.2} {:>9.2} {:>9.2} {:>10.1} {:>12.2e} {:>12.2e}",
            t.chi2_kept,
            aic_subspace(t.chi2_kept, 0, t.d_kept, 0.0)?.value,
            aic_perfect(t.chi2_kept, 0, t.d_kept, 0.0)?.value,
            f0.chi2_kept,
            w_f0(CriterionKind::Subspace)?,
            w_f0(CriterionKind::Perfect)?
        );
    }
    Ok(())
}
