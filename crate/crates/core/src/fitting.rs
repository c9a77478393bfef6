//! Bayesian least-squares fits: the posterior mode of the prior-augmented
//! chi-squared, found with Levenberg-Marquardt.
//!
//! The augmented residual vector stacks the whitened data residuals
//! `L^{-1} (ybar_K - f(a))`, where `L L^T` is the kept standard-error
//! covariance, on top of the prior residuals `(a_j - mu_j) / w_j`. Its squared
//! norm is `chi2_aug`; the data block alone is `chi2_kept`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::gaussdata::{restrict, restrict_indices, CoordinateGrid, GaussianSummary, SubsetSpec};
use crate::statcore::{chi_squared, q_value, SpdMatrix};

pub type ModelFn = Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>;
pub type JacobianFn = Arc<dyn Fn(f64, &[f64]) -> Vec<f64> + Send + Sync>;

/// A parametric model `f(t; a)` with `n_params` parameters.
#[derive(Clone)]
pub struct ModelSpec {
    name: String,
    n_params: usize,
    eval: ModelFn,
    jacobian: Option<JacobianFn>,
}

impl fmt::Debug for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModelSpec")
            .field("name", &self.name)
            .field("n_params", &self.n_params)
            .field("analytic_jacobian", &self.jacobian.is_some())
            .finish()
    }
}

impl ModelSpec {
    pub fn new(
        name: impl Into<String>,
        n_params: usize,
        eval: impl Fn(f64, &[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            n_params,
            eval: Arc::new(eval),
            jacobian: None,
        }
    }

    pub fn with_jacobian(
        mut self,
        jac: impl Fn(f64, &[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        self.jacobian = Some(Arc::new(jac));
        self
    }

    /// `f_n(t) = sum_{j<=n} a_j (1 - t/pivot)^j`, named `f{n}`.
    pub fn polynomial(degree: usize, pivot: f64) -> Self {
        let k = degree + 1;
        Self::new(format!("f{degree}"), k, move |t, a| {
            let x = 1.0 - t / pivot;
            a.iter().rev().fold(0.0, |acc, c| acc * x + c)
        })
        .with_jacobian(move |t, _| {
            let x = 1.0 - t / pivot;
            std::iter::successors(Some(1.0), |p| Some(p * x))
                .take(k)
                .collect()
        })
    }

    /// Constant model `f0(t) = a0`.
    pub fn constant() -> Self {
        Self::polynomial(0, 16.0)
    }

    /// Linear model `f1(t) = a0 + a1 (1 - t/pivot)`.
    pub fn linear(pivot: f64) -> Self {
        Self::polynomial(1, pivot)
    }

    /// A model with no free parameters.
    pub fn fixed(name: impl Into<String>, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self::new(name, 0, move |t, _| f(t)).with_jacobian(|_, _| Vec::new())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn n_params(&self) -> usize {
        self.n_params
    }

    pub fn eval(&self, t: f64, params: &[f64]) -> f64 {
        (self.eval)(t, params)
    }

    pub fn has_analytic_jacobian(&self) -> bool {
        self.jacobian.is_some()
    }

    /// Gradient of `f(t; a)` in `a`; central differences when no analytic
    /// Jacobian was supplied.
    pub fn gradient(&self, t: f64, params: &[f64]) -> Vec<f64> {
        match &self.jacobian {
            Some(jac) => jac(t, params),
            None => self.finite_difference_gradient(t, params),
        }
    }

    pub fn finite_difference_gradient(&self, t: f64, params: &[f64]) -> Vec<f64> {
        let mut p = params.to_vec();
        (0..params.len())
            .map(|j| {
                let h = 1e-6 * params[j].abs().max(1.0);
                p[j] = params[j] + h;
                let up = self.eval(t, &p);
                p[j] = params[j] - h;
                let down = self.eval(t, &p);
                p[j] = params[j];
                (up - down) / (2.0 * h)
            })
            .collect()
    }

    /// Largest relative disagreement between the analytic Jacobian and
    /// central differences over the given points.
    pub fn jacobian_consistency(&self, points: &[(f64, Vec<f64>)]) -> f64 {
        points
            .iter()
            .flat_map(|(t, a)| {
                let analytic = self.gradient(*t, a);
                let numeric = self.finite_difference_gradient(*t, a);
                analytic
                    .into_iter()
                    .zip(numeric)
                    .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1.0))
                    .collect::<Vec<_>>()
            })
            .fold(0.0, f64::max)
    }
}

/// Independent Gaussian priors on each parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorSpec {
    means: Vec<f64>,
    widths: Vec<f64>,
}

impl PriorSpec {
    pub fn new(means: Vec<f64>, widths: Vec<f64>) -> Result<Self> {
        if means.len() != widths.len() {
            return Err(Error::param(format!(
                "{} prior means but {} widths",
                means.len(),
                widths.len()
            )));
        }
        if let Some(w) = widths.iter().find(|w| !w.is_finite() || **w <= 0.0) {
            return Err(Error::param(format!(
                "prior width must be positive, got {w}"
            )));
        }
        Ok(Self { means, widths })
    }

    /// Same mean and width for all `k` parameters.
    pub fn uniform(k: usize, mean: f64, width: f64) -> Result<Self> {
        Self::new(vec![mean; k], vec![width; k])
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn widths(&self) -> &[f64] {
        &self.widths
    }

    pub fn len(&self) -> usize {
        self.means.len()
    }

    pub fn is_empty(&self) -> bool {
        self.means.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub params: Vec<f64>,
    pub param_cov: SpdMatrix,
    /// Data-only chi-squared on the kept points at the posterior mode.
    pub chi2_kept: f64,
    /// Data plus prior chi-squared at the posterior mode.
    pub chi2_aug: f64,
    pub d_kept: usize,
    pub k: usize,
    pub q_value: f64,
    pub converged: bool,
    pub n_iterations: usize,
}

impl FitResult {
    pub fn ndof(&self) -> Option<usize> {
        self.d_kept.checked_sub(self.k).filter(|&n| n > 0)
    }

    /// Standard deviation of parameter `index`.
    pub fn param_error(&self, index: usize) -> f64 {
        self.param_cov.matrix()[(index, index)].sqrt()
    }
}

/// Levenberg-Marquardt settings.
#[derive(Debug, Clone, Copy)]
pub struct LmOptions {
    pub initial_damping: f64,
    pub damping_factor: f64,
    pub rel_chi2_tol: f64,
    pub gradient_tol: f64,
    /// Converged when every undamped Gauss-Newton step component satisfies
    /// `|step_j| <= step_tol * (|a_j| + step_tol)`.
    pub step_tol: f64,
    /// Damping above which a stalled step counts as convergence.
    pub stall_damping: f64,
    pub max_iterations: usize,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            initial_damping: 1e-3,
            damping_factor: 10.0,
            rel_chi2_tol: 1e-12,
            gradient_tol: 1e-14,
            step_tol: 1e-11,
            stall_damping: 1e6,
            max_iterations: 200,
        }
    }
}

/// Kept-data least-squares problem in whitened form.
struct Problem<'a> {
    model: &'a ModelSpec,
    prior: &'a PriorSpec,
    t: Vec<f64>,
    y: DVector<f64>,
    cov: SpdMatrix,
}

impl Problem<'_> {
    fn data_residual(&self, a: &[f64]) -> DVector<f64> {
        DVector::from_fn(self.t.len(), |i, _| {
            self.y[i] - self.model.eval(self.t[i], a)
        })
    }

    /// Augmented residual `r` and its Jacobian `dr/da`.
    fn residual_and_jacobian(&self, a: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
        let d = self.t.len();
        let k = a.len();
        let white = self.cov.whiten_vec(&self.data_residual(a));
        let mut model_jac = DMatrix::zeros(d, k);
        for (i, &t) in self.t.iter().enumerate() {
            for (j, g) in self.model.gradient(t, a).into_iter().enumerate() {
                model_jac[(i, j)] = -g;
            }
        }
        let white_jac = self.cov.whiten(&model_jac);
        let mut r = DVector::zeros(d + k);
        let mut jac = DMatrix::zeros(d + k, k);
        r.rows_mut(0, d).copy_from(&white);
        jac.view_mut((0, 0), (d, k)).copy_from(&white_jac);
        for j in 0..k {
            r[d + j] = (a[j] - self.prior.means[j]) / self.prior.widths[j];
            jac[(d + j, j)] = 1.0 / self.prior.widths[j];
        }
        (r, jac)
    }

    fn cost(&self, a: &[f64]) -> f64 {
        let data = self.cov.whiten_vec(&self.data_residual(a)).norm_squared();
        let prior: f64 = a
            .iter()
            .zip(self.prior.means.iter().zip(&self.prior.widths))
            .map(|(x, (m, w))| ((x - m) / w).powi(2))
            .sum();
        data + prior
    }
}

fn solve_spd(m: DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let spd =
        SpdMatrix::new(m).map_err(|e| Error::Numerical(format!("singular normal matrix: {e}")))?;
    Ok(spd.solve(b))
}

/// Posterior-mode fit of `model` to the kept points of `summary`.
///
/// `summary` covers the whole grid; it is restricted to `subset` here.
pub fn fit(
    summary: &GaussianSummary,
    grid: &CoordinateGrid,
    subset: &SubsetSpec,
    model: &ModelSpec,
    prior: &PriorSpec,
) -> Result<FitResult> {
    fit_with_options(summary, grid, subset, model, prior, &LmOptions::default())
}

pub fn fit_with_options(
    summary: &GaussianSummary,
    grid: &CoordinateGrid,
    subset: &SubsetSpec,
    model: &ModelSpec,
    prior: &PriorSpec,
    opts: &LmOptions,
) -> Result<FitResult> {
    if summary.dim() != grid.len() {
        return Err(Error::param(format!(
            "summary dimension {} does not match grid length {}",
            summary.dim(),
            grid.len()
        )));
    }
    subset.validate(grid.len())?;
    let k = model.n_params();
    if prior.len() != k {
        return Err(Error::param(format!(
            "model {} has {k} parameters but the prior has {}",
            model.name(),
            prior.len()
        )));
    }
    let kept = restrict(summary, subset)?;
    let problem = Problem {
        model,
        prior,
        t: subset
            .kept_indices()
            .iter()
            .map(|&i| grid.points()[i])
            .collect(),
        y: kept.mean().clone(),
        cov: kept.stderr_covariance(),
    };
    let d_kept = subset.d_kept();

    let mut a = prior.means().to_vec();
    let mut iterations = 0;
    let mut converged = k == 0;
    let mut cost = problem.cost(&a);
    let mut damping = opts.initial_damping;

    while !converged {
        if iterations >= opts.max_iterations {
            return Err(Error::Convergence {
                iterations,
                last: a,
            });
        }
        iterations += 1;
        let (r, jac) = problem.residual_and_jacobian(&a);
        let jtj = jac.transpose() * &jac;
        let grad = jac.transpose() * &r;
        // gradient of chi2 = |r|^2 is 2 J^T r
        if 2.0 * grad.amax() < opts.gradient_tol {
            converged = true;
            break;
        }
        let newton = solve_spd(jtj.clone(), &(-&grad))?;
        if newton
            .iter()
            .zip(&a)
            .all(|(s, x)| s.abs() <= opts.step_tol * (x.abs() + opts.step_tol))
        {
            converged = true;
            break;
        }
        let mut lhs = jtj.clone();
        for j in 0..k {
            lhs[(j, j)] += damping * jtj[(j, j)];
        }
        let step = solve_spd(lhs, &(-&grad))?;
        let trial: Vec<f64> = a.iter().zip(step.iter()).map(|(x, s)| x + s).collect();
        let trial_cost = problem.cost(&trial);
        let change = cost - trial_cost;
        // within rounding of the cost, a step is judged by the gradient instead
        let inconclusive = change.abs() <= 16.0 * f64::EPSILON * cost;
        let improves = change > 0.0
            || (inconclusive && {
                let (tr, tj) = problem.residual_and_jacobian(&trial);
                (tj.transpose() * tr).norm() < grad.norm()
            });
        if trial_cost.is_finite() && improves {
            a = trial;
            cost = trial_cost;
            damping = (damping / opts.damping_factor).max(1e-15);
        } else {
            damping *= opts.damping_factor;
        }
        // a rejected step with negligible change means the minimum is resolved
        // to machine precision along the damped direction
        if change <= 0.0
            && change.abs() <= opts.rel_chi2_tol * cost
            && damping >= opts.stall_damping
        {
            converged = true;
        }
    }

    let (_, jac) = problem.residual_and_jacobian(&a);
    let hessian = SpdMatrix::new(jac.transpose() * &jac)
        .map_err(|e| Error::Numerical(format!("singular Gauss-Newton Hessian: {e}")))?;
    let param_cov = SpdMatrix::new(hessian.inverse())?;
    let chi2_kept = chi_squared(&problem.data_residual(&a), &problem.cov)?;
    let q = match d_kept.checked_sub(k) {
        Some(ndof) if ndof > 0 => q_value(chi2_kept, ndof)?,
        _ => 1.0,
    };
    Ok(FitResult {
        params: a,
        param_cov,
        chi2_kept,
        chi2_aug: cost.max(chi2_kept),
        d_kept,
        k,
        q_value: q,
        converged,
        n_iterations: iterations,
    })
}

/// The interpolating "perfect" model on the cut points: one parameter per
/// cut point, set to the sample mean there, so its chi-squared vanishes.
pub fn perfect_model_fit(summary: &GaussianSummary, cut_indices: &[usize]) -> Result<FitResult> {
    if cut_indices.is_empty() {
        return Err(Error::param("perfect model needs at least one cut point"));
    }
    let cut = restrict_indices(summary, cut_indices)?;
    let d_cut = cut_indices.len();
    Ok(FitResult {
        params: cut.mean().iter().copied().collect(),
        param_cov: cut.stderr_covariance(),
        chi2_kept: 0.0,
        chi2_aug: 0.0,
        d_kept: d_cut,
        k: d_cut,
        q_value: 1.0,
        converged: true,
        n_iterations: 0,
    })
}

/// Chi-squared of fixed predictions against an independent summary.
pub fn out_of_sample_chi2(
    predictions: &[f64],
    replica: &GaussianSummary,
    indices: &[usize],
) -> Result<f64> {
    if predictions.len() != indices.len() {
        return Err(Error::param("one prediction per index is required"));
    }
    let r = restrict_indices(replica, indices)?;
    let resid = DVector::from_fn(indices.len(), |i, _| r.mean()[i] - predictions[i]);
    chi_squared(&resid, &r.stderr_covariance())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn grid() -> CoordinateGrid {
        CoordinateGrid::integer_range(1, 15).unwrap()
    }

    fn truth(t: f64) -> f64 {
        1.80 - 0.53 * (1.0 - t / 16.0)
    }

    /// Summary whose sample mean is exactly `mean_fn` on the grid.
    fn exact_summary(mean_fn: impl Fn(f64) -> f64, n: usize) -> GaussianSummary {
        let g = grid();
        let mean = DVector::from_iterator(g.len(), g.points().iter().map(|&t| mean_fn(t)));
        let var: Vec<f64> = g.points().iter().map(|&t| mean_fn(t).powi(2)).collect();
        GaussianSummary::new(mean, SpdMatrix::from_diagonal(&var).unwrap(), n).unwrap()
    }

    #[test]
    fn polynomial_models_evaluate() {
        let f1 = ModelSpec::linear(16.0);
        assert_eq!(f1.name(), "f1");
        assert_eq!(f1.n_params(), 2);
        assert_relative_eq!(f1.eval(8.0, &[1.8, -0.53]), truth(8.0), epsilon = 1e-15);
        assert_eq!(ModelSpec::constant().eval(3.0, &[2.5]), 2.5);
        let f2 = ModelSpec::polynomial(2, 10.0);
        assert_relative_eq!(f2.eval(5.0, &[1.0, 2.0, 4.0]), 1.0 + 2.0 * 0.5 + 4.0 * 0.25);
    }

    #[test]
    fn analytic_jacobians_match_finite_differences() {
        let pts: Vec<(f64, Vec<f64>)> = (0..20)
            .map(|i| {
                (
                    0.7 * i as f64,
                    vec![0.3 * i as f64 - 2.0, 1.0 - 0.1 * i as f64, 0.05 * i as f64],
                )
            })
            .collect();
        let f2 = ModelSpec::polynomial(2, 16.0);
        assert!(f2.jacobian_consistency(&pts) < 1e-6);
        let f1 = ModelSpec::linear(16.0);
        let p1: Vec<_> = pts.iter().map(|(t, a)| (*t, a[..2].to_vec())).collect();
        assert!(f1.jacobian_consistency(&p1) < 1e-6);
    }

    #[test]
    fn finite_difference_fallback_is_used() {
        let exp_model = ModelSpec::new("exp", 2, |t, a| a[0] * (-a[1] * t).exp());
        assert!(!exp_model.has_analytic_jacobian());
        let g = exp_model.gradient(1.0, &[2.0, 0.5]);
        assert_relative_eq!(g[0], (-0.5f64).exp(), epsilon = 1e-8);
        assert_relative_eq!(g[1], -2.0 * (-0.5f64).exp(), epsilon = 1e-8);
    }

    #[test]
    fn constant_model_recovers_flat_data() {
        let c = 1.7;
        let s = exact_summary(|_| c, 320);
        let g = grid();
        let f0 = ModelSpec::constant();
        let r = fit(
            &s,
            &g,
            &SubsetSpec::full(&g),
            &f0,
            &PriorSpec::uniform(1, 0.0, 10.0).unwrap(),
        )
        .unwrap();
        assert!(r.converged);
        // weighted mean shrunk towards the prior: (sum y/v) / (sum 1/v + 1/w^2)
        let v = c * c / 320.0;
        let expected = (15.0 * c / v) / (15.0 / v + 0.01);
        assert_relative_eq!(r.params[0], expected, max_relative = 1e-10);
        assert!((r.params[0] - c).abs() < 1e-4);
        assert_relative_eq!(
            r.chi2_kept,
            15.0 * (c - expected).powi(2) / v,
            max_relative = 1e-6
        );
    }

    #[test]
    fn linear_model_recovers_noiseless_truth() {
        let s = exact_summary(truth, 320);
        let g = grid();
        let r = fit(
            &s,
            &g,
            &SubsetSpec::full(&g),
            &ModelSpec::linear(16.0),
            &PriorSpec::uniform(2, 0.0, 1e6).unwrap(),
        )
        .unwrap();
        assert!((r.params[0] - 1.80).abs() < 1e-6);
        assert!((r.params[1] + 0.53).abs() < 1e-6);
        assert!(r.chi2_kept < 1e-10);
        assert!(r.chi2_aug >= r.chi2_kept);
        assert_relative_eq!(r.q_value, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn underdetermined_fit_is_regularised_by_prior() {
        // One kept point y at x = 1 - t/16 with stderr variance v, priors N(0, w^2):
        // minimise (y - a0 - a1 x)^2 / v + (a0^2 + a1^2) / w^2. Normal equations
        // solved by hand: a = y / (v/w^2 + 1 + x^2) * (1, x).
        let g = grid();
        let s = exact_summary(truth, 320);
        let subset = SubsetSpec::new(vec![14], 15).unwrap();
        let r = fit(
            &s,
            &g,
            &subset,
            &ModelSpec::linear(16.0),
            &PriorSpec::uniform(2, 0.0, 10.0).unwrap(),
        )
        .unwrap();
        let y = truth(15.0);
        let v = y * y / 320.0;
        let x = 1.0 - 15.0 / 16.0;
        let denom = v / 100.0 + 1.0 + x * x;
        assert_relative_eq!(r.params[0], y / denom, max_relative = 1e-9);
        assert_relative_eq!(r.params[1], y * x / denom, max_relative = 1e-9);
        // residual y (v/w^2) / denom is only the prior pull
        let resid = y * (v / 100.0) / denom;
        assert_relative_eq!(r.chi2_kept, resid * resid / v, max_relative = 1e-6);
        assert!(r.chi2_kept < 1e-5);
        assert_eq!(r.q_value, 1.0);
        assert_eq!(r.d_kept, 1);
        assert_eq!(r.ndof(), None);
    }

    #[test]
    fn fixed_model_has_no_iterations() {
        let g = grid();
        let s = exact_summary(truth, 100);
        let m = ModelSpec::fixed("truth", truth);
        let r = fit(
            &s,
            &g,
            &SubsetSpec::full(&g),
            &m,
            &PriorSpec::uniform(0, 0.0, 1.0).unwrap(),
        )
        .unwrap();
        assert_eq!(r.n_iterations, 0);
        assert_eq!(r.k, 0);
        assert!(r.chi2_kept < 1e-20);
        assert_eq!(r.param_cov.dim(), 0);
    }

    #[test]
    fn fit_argument_errors() {
        let g = grid();
        let s = exact_summary(truth, 100);
        let f1 = ModelSpec::linear(16.0);
        let wrong_prior = PriorSpec::uniform(1, 0.0, 10.0).unwrap();
        assert!(matches!(
            fit(&s, &g, &SubsetSpec::full(&g), &f1, &wrong_prior),
            Err(Error::Parameter(_))
        ));
        let bad_subset = SubsetSpec::new(vec![0, 20], 1).unwrap();
        assert!(fit(
            &s,
            &g,
            &bad_subset,
            &f1,
            &PriorSpec::uniform(2, 0.0, 10.0).unwrap()
        )
        .is_err());
        assert!(PriorSpec::new(vec![0.0], vec![0.0]).is_err());
        assert!(PriorSpec::new(vec![0.0], vec![1.0, 2.0]).is_err());
    }

    #[test]
    fn non_convergence_reports_last_iterate() {
        let g = grid();
        let s = exact_summary(truth, 100);
        let opts = LmOptions {
            max_iterations: 1,
            ..LmOptions::default()
        };
        let err = fit_with_options(
            &s,
            &g,
            &SubsetSpec::full(&g),
            &ModelSpec::linear(16.0),
            &PriorSpec::uniform(2, 0.0, 10.0).unwrap(),
            &opts,
        )
        .unwrap_err();
        match err {
            Error::Convergence { iterations, last } => {
                assert_eq!(iterations, 1);
                assert_eq!(last.len(), 2);
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn perfect_model_interpolates_cut_points() {
        let s = exact_summary(truth, 50);
        let r = perfect_model_fit(&s, &[0, 1, 2]).unwrap();
        assert_eq!(r.k, 3);
        assert_eq!(r.chi2_kept, 0.0);
        assert_eq!(r.params, vec![truth(1.0), truth(2.0), truth(3.0)]);
        assert!(matches!(
            perfect_model_fit(&s, &[]),
            Err(Error::Parameter(_))
        ));
        let chi2 = out_of_sample_chi2(&r.params, &s, &[0, 1, 2]).unwrap();
        assert_eq!(chi2, 0.0);
    }
}
