//! Ridge regression with a Gaussian likelihood and its per-observation
//! penalized score vectors.
//!
//! Predictor rows are augmented with a leading 1, so `theta[0]` is the
//! intercept. The penalty covers the whole of `theta`, intercept included.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{DriftError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedLinearModel {
    /// Intercept first, then one slope per predictor.
    pub theta: Vec<f64>,
    pub gamma: f64,
    pub n_train: usize,
}

/// Fit `theta` minimizing `Σ (y - x̃ᵀθ)² + γ‖θ‖²` via the normal equations.
pub fn fit_ridge(data: &Dataset, gamma: f64) -> Result<FittedLinearModel> {
    let dim = data.n_features() + 1;
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(DriftError::Input(format!("gamma must be finite and >= 0, got {gamma}")));
    }
    // Fewer rows than coefficients is only solvable with a penalty; the
    // solver reports that case as a degenerate design.
    if data.len() < 2 {
        return Err(DriftError::Input(format!("ridge fit needs at least 2 rows, got {}", data.len())));
    }
    data.ensure_finite()?;

    let mut gram = DMatrix::<f64>::zeros(dim, dim);
    let mut rhs = DVector::<f64>::zeros(dim);
    let mut xt = vec![1.0; dim];
    for (row, y) in data.iter() {
        xt[1..].copy_from_slice(row);
        for a in 0..dim {
            rhs[a] += xt[a] * y;
            for b in 0..=a {
                gram[(a, b)] += xt[a] * xt[b];
            }
        }
    }
    for a in 0..dim {
        gram[(a, a)] += gamma;
        for b in 0..a {
            gram[(b, a)] = gram[(a, b)];
        }
    }

    let theta = solve_spd(&gram, &rhs)?;
    if theta.iter().any(|v| !v.is_finite()) {
        return Err(DriftError::DegenerateDesign("non-finite coefficients".into()));
    }
    Ok(FittedLinearModel { theta: theta.iter().copied().collect(), gamma, n_train: data.len() })
}

/// Solve `a x = b` for symmetric positive definite `a`, with one round of
/// iterative refinement.
pub(crate) fn solve_spd(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let chol = a
        .clone()
        .cholesky()
        .ok_or_else(|| DriftError::DegenerateDesign("normal matrix is not positive definite".into()))?;
    let l = chol.l_dirty();
    let diag: Vec<f64> = (0..a.nrows()).map(|i| l[(i, i)]).collect();
    let max = diag.iter().cloned().fold(0.0, f64::max);
    let min = diag.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(min > 0.0) || (min / max).powi(2) < 1e-14 {
        return Err(DriftError::DegenerateDesign(format!(
            "normal matrix is numerically singular (pivot ratio {:.3e})",
            (min / max).powi(2)
        )));
    }
    let mut x = chol.solve(b);
    let resid = b - a * &x;
    x += chol.solve(&resid);
    Ok(x)
}

impl FittedLinearModel {
    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.theta[0] + self.theta[1..].iter().zip(x).map(|(t, v)| t * v).sum::<f64>()
    }

    /// `(y - x̃ᵀθ) x̃ - (γ / n_train) θ`.
    pub fn score(&self, x: &[f64], y: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.score_into(x, y, &mut out);
        out
    }

    pub fn score_into(&self, x: &[f64], y: f64, out: &mut [f64]) {
        debug_assert_eq!(x.len() + 1, self.dim());
        let resid = y - self.predict(x);
        let pen = self.gamma / self.n_train as f64;
        out[0] = resid - pen * self.theta[0];
        for ((o, xv), t) in out[1..].iter_mut().zip(x).zip(&self.theta[1..]) {
            *o = resid * xv - pen * t;
        }
    }
}

/// Free-function form of [`FittedLinearModel::score`].
pub fn score_linear(model: &FittedLinearModel, x: &[f64], y: f64) -> Vec<f64> {
    model.score(x, y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn line(points: &[(f64, f64)]) -> Dataset {
        let rows: Vec<Vec<f64>> = points.iter().map(|p| vec![p.0]).collect();
        Dataset::from_rows(&rows, points.iter().map(|p| p.1).collect()).unwrap()
    }

    fn mean_score(m: &FittedLinearModel, d: &Dataset) -> Vec<f64> {
        let mut acc = vec![0.0; m.dim()];
        for (x, y) in d.iter() {
            for (a, s) in acc.iter_mut().zip(m.score(x, y)) {
                *a += s;
            }
        }
        acc.iter().map(|a| a / d.len() as f64).collect()
    }

    #[test]
    fn noiseless_line_is_recovered() {
        let m = fit_ridge(&line(&[(1.0, 2.0), (2.0, 4.0), (3.0, 6.0)]), 0.0).unwrap();
        assert_abs_diff_eq!(m.theta[0], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(m.theta[1], 2.0, epsilon = 1e-12);
    }

    #[test]
    fn two_point_ridge_matches_hand_solution() {
        // [[2+2,1],[1,1+2]] θ = [2,1]  =>  θ = (5/11, 2/11)
        let m = fit_ridge(&line(&[(0.0, 1.0), (1.0, 1.0)]), 2.0).unwrap();
        assert_abs_diff_eq!(m.theta[0], 5.0 / 11.0, epsilon = 1e-14);
        assert_abs_diff_eq!(m.theta[1], 2.0 / 11.0, epsilon = 1e-14);
    }

    #[test]
    fn two_row_normal_equations() {
        // Exercise the solver directly on the two-observation system.
        let a = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let b = DVector::from_vec(vec![2.0, 1.0]);
        let x = solve_spd(&a, &b).unwrap();
        assert_abs_diff_eq!(x[0], 5.0 / 11.0, epsilon = 1e-15);
        assert_abs_diff_eq!(x[1], 2.0 / 11.0, epsilon = 1e-15);
    }

    #[test]
    fn singular_design_without_penalty_fails() {
        let d = line(&[(1.0, 1.0), (1.0, 2.0), (1.0, 3.0)]);
        assert!(matches!(fit_ridge(&d, 0.0), Err(DriftError::DegenerateDesign(_))));
        assert!(fit_ridge(&d, 0.5).is_ok());
    }

    #[test]
    fn rejects_bad_inputs() {
        let d = line(&[(1.0, 1.0), (2.0, 2.0), (3.0, 3.0)]);
        assert!(matches!(fit_ridge(&d, -1.0), Err(DriftError::Input(_))));
        assert!(matches!(fit_ridge(&d, f64::NAN), Err(DriftError::Input(_))));
        assert!(matches!(fit_ridge(&line(&[(1.0, 1.0)]), 0.1), Err(DriftError::Input(_))));
    }

    #[test]
    fn score_hand_value() {
        let m = FittedLinearModel { theta: vec![1.0, 2.0], gamma: 0.1, n_train: 10 };
        let s = m.score(&[0.5], 3.0);
        assert_abs_diff_eq!(s[0], 0.99, epsilon = 1e-15);
        assert_abs_diff_eq!(s[1], 0.48, epsilon = 1e-15);
    }

    #[test]
    fn zero_residual_without_penalty_gives_zero_score() {
        let m = FittedLinearModel { theta: vec![1.0, 2.0], gamma: 0.0, n_train: 10 };
        assert_eq!(m.score(&[0.5], 2.0), vec![0.0, 0.0]);
    }

    /// Brute-force least squares via the pseudo-inverse (SVD).
    fn pinv_fitted(d: &Dataset) -> Vec<f64> {
        let n = d.len();
        let p = d.n_features() + 1;
        let x = DMatrix::from_fn(n, p, |i, j| if j == 0 { 1.0 } else { d.row(i)[j - 1] });
        let y = DVector::from_column_slice(d.responses());
        let pinv = x.clone().pseudo_inverse(1e-12).unwrap();
        (&x * (pinv * y)).iter().copied().collect()
    }

    proptest! {
        #[test]
        fn stationarity_and_ols_projection(
            rows in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0, -20.0f64..20.0), 6..40),
            gamma in 0.0f64..5.0,
        ) {
            let xs: Vec<Vec<f64>> = rows.iter().map(|r| vec![r.0, r.1]).collect();
            let d = Dataset::from_rows(&xs, rows.iter().map(|r| r.2).collect()).unwrap();
            let m = fit_ridge(&d, gamma).unwrap();
            let norm = mean_score(&m, &d).iter().map(|v| v * v).sum::<f64>().sqrt();
            prop_assert!(norm <= 1e-8, "mean score norm {norm}");

            let ols = fit_ridge(&d, 0.0).unwrap();
            for (i, f) in pinv_fitted(&d).iter().enumerate() {
                prop_assert!((ols.predict(d.row(i)) - f).abs() <= 1e-8 * (1.0 + f.abs()));
            }
        }

        #[test]
        fn score_is_linear_in_response(x in -3.0f64..3.0, y1 in -50.0f64..50.0, y2 in -50.0f64..50.0) {
            let m = FittedLinearModel { theta: vec![0.3, -1.2], gamma: 0.7, n_train: 13 };
            let a = m.score(&[x], y1);
            let b = m.score(&[x], y2);
            prop_assert!((a[0] - b[0] - (y1 - y2)).abs() <= 1e-12 * (1.0 + y1.abs() + y2.abs()));
            prop_assert!((a[1] - b[1] - (y1 - y2) * x).abs() <= 1e-12 * (1.0 + (y1.abs() + y2.abs()) * x.abs()));
        }
    }
}
