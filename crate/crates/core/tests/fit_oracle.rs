mod common;

use approx::assert_relative_eq;
use common::{gls_oracle, reference_truth, PIVOT};
use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use subset_ic::fitting::{fit, ModelSpec, PriorSpec};
use subset_ic::gaussdata::{
    generate_mock_data, rng_from_seed, summarize, CoordinateGrid, GaussianSummary, SubsetSpec,
};

fn random_case(seed: u64) -> (CoordinateGrid, GaussianSummary, SubsetSpec) {
    let mut rng = rng_from_seed(seed);
    let grid = CoordinateGrid::integer_range(1, 15).unwrap();
    let n = rng.random_range(40..2000);
    let data = generate_mock_data(
        reference_truth,
        &grid,
        0.0,
        rng.random_range(0.2..2.0),
        n,
        seed,
    )
    .unwrap();
    let subset = SubsetSpec::from_t_min(&grid, rng.random_range(1..=12)).unwrap();
    (grid, summarize(&data).unwrap(), subset)
}

#[test]
fn lm_matches_closed_form_gls() {
    for seed in 0..100u64 {
        let (grid, summary, subset) = random_case(seed);
        for degree in [0, 1] {
            let r = fit(
                &summary,
                &grid,
                &subset,
                &ModelSpec::polynomial(degree, PIVOT),
                &PriorSpec::uniform(degree + 1, 0.0, 10.0).unwrap(),
            )
            .unwrap();
            let oracle = gls_oracle(&summary, grid.points(), &subset, degree, 0.0, 10.0);
            for (a, b) in r.params.iter().zip(&oracle) {
                assert_relative_eq!(*a, *b, max_relative = 1e-8);
            }
        }
    }
}

#[test]
fn gradient_vanishes_at_the_optimum() {
    // finite differences of the prior-augmented chi2 around the fitted point
    for seed in 200..220u64 {
        let (grid, summary, subset) = random_case(seed);
        let model = ModelSpec::linear(PIVOT);
        let r = fit(
            &summary,
            &grid,
            &subset,
            &model,
            &PriorSpec::uniform(2, 0.0, 10.0).unwrap(),
        )
        .unwrap();
        let kept = subset_ic::gaussdata::restrict(&summary, &subset).unwrap();
        let cinv = kept
            .stderr_covariance()
            .matrix()
            .clone()
            .try_inverse()
            .unwrap();
        let ts: Vec<f64> = subset
            .kept_indices()
            .iter()
            .map(|&i| grid.points()[i])
            .collect();
        let cost = |a: &[f64]| {
            let r = DMatrix::from_fn(ts.len(), 1, |i, _| kept.mean()[i] - model.eval(ts[i], a));
            (r.transpose() * &cinv * &r)[(0, 0)] + a.iter().map(|x| x * x / 100.0).sum::<f64>()
        };
        let scale = r.params.iter().map(|p| p.abs()).fold(1.0, f64::max);
        for j in 0..2 {
            let h = 1e-6 * scale;
            let mut up = r.params.clone();
            let mut dn = r.params.clone();
            up[j] += h;
            dn[j] -= h;
            let g = (cost(&up) - cost(&dn)) / (2.0 * h);
            let curvature = (cost(&up) + cost(&dn) - 2.0 * cost(&r.params)) / (h * h);
            // gradient relative to curvature = distance to the true minimum
            assert!(
                (g / curvature).abs() < 1e-8 * scale,
                "seed {seed} j {j}: g {g} curvature {curvature}"
            );
        }
    }
}

#[test]
fn fit_is_invariant_under_reordering_of_kept_points() {
    let (grid, summary, subset) = random_case(7);
    let model = ModelSpec::linear(PIVOT);
    let prior = PriorSpec::uniform(2, 0.0, 10.0).unwrap();
    let base = fit(&summary, &grid, &subset, &model, &prior).unwrap();
    let mut rng = rng_from_seed(8);
    for _ in 0..10 {
        let mut kept = subset.kept_indices().to_vec();
        kept.shuffle(&mut rng);
        let shuffled = SubsetSpec::new(kept, subset.label()).unwrap();
        let r = fit(&summary, &grid, &shuffled, &model, &prior).unwrap();
        for (a, b) in r.params.iter().zip(&base.params) {
            assert_relative_eq!(*a, *b, max_relative = 1e-9);
        }
        assert_relative_eq!(r.chi2_kept, base.chi2_kept, max_relative = 1e-9);
    }
}

#[test]
fn widening_an_uninformative_prior_barely_moves_the_fit() {
    for seed in 300..320u64 {
        let (grid, summary, subset) = random_case(seed);
        let model = ModelSpec::linear(PIVOT);
        let narrow = fit(
            &summary,
            &grid,
            &subset,
            &model,
            &PriorSpec::uniform(2, 0.0, 10.0).unwrap(),
        )
        .unwrap();
        let wide = fit(
            &summary,
            &grid,
            &subset,
            &model,
            &PriorSpec::uniform(2, 0.0, 100.0).unwrap(),
        )
        .unwrap();
        for j in 0..2 {
            assert!(
                (narrow.params[j] - wide.params[j]).abs() < narrow.param_error(j),
                "seed {seed} param {j}"
            );
        }
    }
}
