//! Small dense SPD linear algebra and the special functions used by the
//! fitting and criteria code.
//!
//! Every quadratic form goes through a Cholesky solve; no explicit inverses
//! are formed except for the parameter covariance handed back to callers.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Relative tolerance for the symmetry check.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Smallest accepted squared Cholesky pivot relative to the matching diagonal
/// entry. Anything below is treated as rank deficient.
const PIVOT_TOL: f64 = 1e-12;

/// Symmetric positive-definite matrix with its Cholesky factor.
#[derive(Debug, Clone)]
pub struct SpdMatrix {
    matrix: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
}

impl SpdMatrix {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::param(format!(
                "matrix is {}x{}, expected square",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        let n = matrix.nrows();
        let scale = matrix.amax();
        if !matrix.iter().all(|x| x.is_finite()) {
            return Err(Error::Numerical("matrix has non-finite entries".into()));
        }
        for i in 0..n {
            for j in (i + 1)..n {
                let (a, b) = (matrix[(i, j)], matrix[(j, i)]);
                if (a - b).abs() > SYMMETRY_TOL * scale {
                    return Err(Error::Numerical(format!(
                        "matrix not symmetric at ({i},{j}): {a} vs {b}"
                    )));
                }
            }
        }
        let chol = Cholesky::new(matrix.clone())
            .ok_or_else(|| Error::Numerical(format!("{n}x{n} matrix is not positive definite")))?;
        let l = chol.l_dirty();
        for i in 0..n {
            let pivot = l[(i, i)];
            if pivot.is_nan() || pivot * pivot <= PIVOT_TOL * matrix[(i, i)].abs() {
                return Err(Error::Numerical(format!(
                    "matrix is singular to working precision (pivot {i} = {pivot:e}, diagonal {:e})",
                    matrix[(i, i)]
                )));
            }
        }
        Ok(Self { matrix, chol })
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    pub fn from_row_slice(dim: usize, entries: &[f64]) -> Result<Self> {
        if entries.len() != dim * dim {
            return Err(Error::param(format!(
                "{} entries cannot fill a {dim}x{dim} matrix",
                entries.len()
            )));
        }
        Self::new(DMatrix::from_row_slice(dim, dim, entries))
    }

    pub fn identity(dim: usize) -> Self {
        Self::new(DMatrix::identity(dim, dim)).expect("identity is SPD")
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.matrix
    }

    /// Lower Cholesky factor `L` with `M = L L^T`.
    pub fn cholesky_factor(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    /// Solves `M x = b`.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(b)
    }

    /// Applies `L^{-1}` to every column of `b`.
    pub fn whiten(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol
            .l_dirty()
            .solve_lower_triangular(b)
            .expect("Cholesky factor has a nonzero diagonal")
    }

    pub fn whiten_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol
            .l_dirty()
            .solve_lower_triangular(b)
            .expect("Cholesky factor has a nonzero diagonal")
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        let inv = self.chol.inverse();
        // symmetrize away roundoff so the result passes `SpdMatrix::new`
        (&inv + inv.transpose()) * 0.5
    }

    /// Principal submatrix on `indices`, in the order given.
    pub fn principal_submatrix(&self, indices: &[usize]) -> Result<Self> {
        let n = self.dim();
        if let Some(&bad) = indices.iter().find(|&&i| i >= n) {
            return Err(Error::param(format!(
                "index {bad} out of range for dimension {n}"
            )));
        }
        let m = DMatrix::from_fn(indices.len(), indices.len(), |i, j| {
            self.matrix[(indices[i], indices[j])]
        });
        Self::new(m)
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(&self.matrix * factor)
    }
}

/// `r^T M^{-1} r` via the Cholesky factor of `M`.
pub fn chi_squared(residual: &DVector<f64>, stderr_cov: &SpdMatrix) -> Result<f64> {
    if residual.len() != stderr_cov.dim() {
        return Err(Error::param(format!(
            "residual length {} does not match matrix dimension {}",
            residual.len(),
            stderr_cov.dim()
        )));
    }
    Ok(stderr_cov.whiten_vec(residual).norm_squared())
}

/// `ln det M = 2 sum ln L_ii`.
pub fn log_det(m: &SpdMatrix) -> f64 {
    let l = m.chol.l_dirty();
    2.0 * (0..m.dim()).map(|i| l[(i, i)].ln()).sum::<f64>()
}

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEF: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of the gamma function for `x > 0` (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = LANCZOS_COEF[0];
    for (i, c) in LANCZOS_COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

const GAMMA_EPS: f64 = 1e-15;
const GAMMA_MAX_ITER: usize = 10_000;

fn check_gamma_domain(s: f64, x: f64) -> Result<()> {
    if !s.is_finite() || s <= 0.0 {
        return Err(Error::param(format!(
            "incomplete gamma needs s > 0, got {s}"
        )));
    }
    if x.is_nan() || x < 0.0 {
        return Err(Error::param(format!(
            "incomplete gamma needs x >= 0, got {x}"
        )));
    }
    Ok(())
}

/// Lower series: P(s, x) = x^s e^-x / Gamma(s+1) * sum x^n / ((s+1)...(s+n)).
fn gamma_p_series(s: f64, x: f64) -> f64 {
    let mut term = 1.0 / s;
    let mut sum = term;
    let mut denom = s;
    for _ in 0..GAMMA_MAX_ITER {
        denom += 1.0;
        term *= x / denom;
        sum += term;
        if term.abs() < sum.abs() * GAMMA_EPS {
            break;
        }
    }
    (sum.ln() - x + s * x.ln() - ln_gamma(s)).exp()
}

/// Upper continued fraction for Q(s, x), modified Lentz.
fn gamma_q_fraction(s: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0 - s;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..GAMMA_MAX_ITER {
        let an = -(i as f64) * (i as f64 - s);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < GAMMA_EPS {
            break;
        }
    }
    (s * x.ln() - x - ln_gamma(s)).exp() * h
}

/// Upper regularized incomplete gamma function Q(s, x).
pub fn regularized_gamma_q(s: f64, x: f64) -> Result<f64> {
    check_gamma_domain(s, x)?;
    if x == 0.0 {
        return Ok(1.0);
    }
    if x.is_infinite() {
        return Ok(0.0);
    }
    let q = if x < s + 1.0 {
        1.0 - gamma_p_series(s, x)
    } else {
        gamma_q_fraction(s, x)
    };
    Ok(q.clamp(0.0, 1.0))
}

/// Lower regularized incomplete gamma function P(s, x) = 1 - Q(s, x).
pub fn regularized_gamma_p(s: f64, x: f64) -> Result<f64> {
    check_gamma_domain(s, x)?;
    if x == 0.0 {
        return Ok(0.0);
    }
    if x.is_infinite() {
        return Ok(1.0);
    }
    let p = if x < s + 1.0 {
        gamma_p_series(s, x)
    } else {
        1.0 - gamma_q_fraction(s, x)
    };
    Ok(p.clamp(0.0, 1.0))
}

/// Upper-tail chi-squared probability, `Q(ndof/2, chi2/2)`.
pub fn q_value(chi2: f64, ndof: usize) -> Result<f64> {
    if ndof == 0 {
        return Err(Error::param("q-value needs at least one degree of freedom"));
    }
    if chi2.is_nan() || chi2 < 0.0 {
        return Err(Error::param(format!("q-value needs chi2 >= 0, got {chi2}")));
    }
    regularized_gamma_q(ndof as f64 / 2.0, chi2 / 2.0)
}
