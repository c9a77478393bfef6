//! Posterior-mode fits of the constant and linear models to one data subset,
//! with Q-values and both information criteria.
//!
//! cargo run --release --example fit_models

use subset_ic::criteria::{aic_perfect, aic_subspace, ndof_form};
use subset_ic::fitting::{fit, ModelSpec, PriorSpec};
use subset_ic::gaussdata::{generate_mock_data, summarize, CoordinateGrid, SubsetSpec};

fn main() -> subset_ic::Result<()> {
    let truth = |t: f64| 1.80 - 0.53 * (1.0 - t / 16.0);
    let grid = CoordinateGrid::integer_range(1, 15)?;
    let summary = summarize(&generate_mock_data(truth, &grid, 0.0, 1.0, 320, 7)?)?;
    let subset = SubsetSpec::from_t_min(&grid, 4)?;

    for model in [ModelSpec::constant(), ModelSpec::linear(16.0)] {
        let prior = PriorSpec::uniform(model.n_params(), 0.0, 10.0)?;
        let r = fit(&summary, &grid, &subset, &model, &prior)?;
        let sub = aic_subspace(r.chi2_kept, r.k, r.d_kept, 0.0)?;
        let perf = aic_perfect(r.chi2_kept, r.k, r.d_kept, 0.0)?;
        println!(
            "{}: a0 = {:.4} +- {:.4}, chi2 = {:.2} ({} dof), Q = {:.3}, {} iterations",
            model.name(),
            r.params[0],
            r.param_error(0),
            r.chi2_kept,
            r.ndof().unwrap_or(0),
            r.q_value,
            r.n_iterations
        );
        println!(
            "    subspace {:.3} (dof form {:.3}), perfect {:.3} (dof form {:.3})",
            sub.value,
            ndof_form(&sub)?,
            perf.value,
            ndof_form(&perf)?
        );
    }
    Ok(())
}
