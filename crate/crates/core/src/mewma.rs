//! MEWMA recursion, score moments and the Hotelling T² statistic.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{DriftError, Result};

/// Smoothed score vector after `i` observations.
#[derive(Debug, Clone, PartialEq)]
pub struct MewmaState {
    pub z: Vec<f64>,
    pub i: usize,
    pub lambda: f64,
}

impl MewmaState {
    pub fn new(dim: usize, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda < 1.0) {
            return Err(DriftError::Input(format!("lambda must lie in (0,1), got {lambda}")));
        }
        Ok(Self { z: vec![0.0; dim], i: 0, lambda })
    }

    /// `z ← λ s + (1 − λ) z`, `i ← i + 1`.
    pub fn update(&self, s: &[f64]) -> Result<MewmaState> {
        let mut next = self.clone();
        next.update_in_place(s)?;
        Ok(next)
    }

    pub fn update_in_place(&mut self, s: &[f64]) -> Result<()> {
        if s.len() != self.z.len() {
            return Err(DriftError::Dimension { expected: self.z.len(), got: s.len() });
        }
        ewma_step(&mut self.z, s, self.lambda);
        self.i += 1;
        Ok(())
    }
}

#[inline]
pub(crate) fn ewma_step(z: &mut [f64], s: &[f64], lambda: f64) {
    let keep = 1.0 - lambda;
    for (zv, sv) in z.iter_mut().zip(s) {
        *zv = lambda * sv + keep * *zv;
    }
}

/// Sample mean and population covariance of a set of score vectors, with the
/// ridge-regularized precision cached.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMoments {
    pub mean: Vec<f64>,
    pub cov: DMatrix<f64>,
    pub epsilon: f64,
    pub precision: DMatrix<f64>,
}

/// Tolerance on `precision · (cov + εI) − I`.
const INVERSE_TOL: f64 = 1e-8;

impl ScoreMoments {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Build from a known mean and covariance.
    pub fn from_parts(mean: Vec<f64>, cov: DMatrix<f64>, epsilon: f64) -> Result<Self> {
        let d = mean.len();
        if cov.nrows() != d || cov.ncols() != d {
            return Err(DriftError::Dimension { expected: d, got: cov.nrows() });
        }
        if !(epsilon >= 0.0 && epsilon.is_finite()) {
            return Err(DriftError::Input(format!("epsilon must be finite and >= 0, got {epsilon}")));
        }
        let precision = regularized_inverse(&cov, epsilon)?;
        Ok(Self { mean, cov, epsilon, precision })
    }

    /// Default ridge: `1e-8 · trace(cov) / d`.
    pub fn default_epsilon(cov: &DMatrix<f64>) -> f64 {
        1e-8 * cov.trace() / cov.nrows() as f64
    }
}

fn regularized_inverse(cov: &DMatrix<f64>, epsilon: f64) -> Result<DMatrix<f64>> {
    let d = cov.nrows();
    let reg = cov + DMatrix::<f64>::identity(d, d) * epsilon;
    let chol = reg
        .clone()
        .cholesky()
        .ok_or_else(|| DriftError::Conditioning(format!("cov + {epsilon:e}·I is not positive definite")))?;
    let precision = chol.inverse();
    let resid = (&precision * &reg - DMatrix::<f64>::identity(d, d)).amax();
    if !(resid <= INVERSE_TOL) {
        return Err(DriftError::Conditioning(format!(
            "inverse residual {resid:.3e} exceeds {INVERSE_TOL:e} at epsilon {epsilon:e}"
        )));
    }
    // Symmetrize away rounding so the quadratic form is exactly symmetric.
    Ok((&precision + precision.transpose()) * 0.5)
}

/// Mean and `1/n` covariance of `scores`; `epsilon = None` uses
/// [`ScoreMoments::default_epsilon`].
pub fn estimate_moments<S: AsRef<[f64]>>(scores: &[S], epsilon: Option<f64>) -> Result<ScoreMoments> {
    let (mean, cov) = mean_cov(scores)?;
    let eps = epsilon.unwrap_or_else(|| ScoreMoments::default_epsilon(&cov));
    ScoreMoments::from_parts(mean, cov, eps)
}

/// Mean and population covariance, without inversion.
pub fn mean_cov<S: AsRef<[f64]>>(scores: &[S]) -> Result<(Vec<f64>, DMatrix<f64>)> {
    if scores.len() < 2 {
        return Err(DriftError::Input(format!("need at least 2 score vectors, got {}", scores.len())));
    }
    let d = scores[0].as_ref().len();
    let n = scores.len() as f64;
    let mut mean = vec![0.0; d];
    for s in scores {
        let s = s.as_ref();
        if s.len() != d {
            return Err(DriftError::Dimension { expected: d, got: s.len() });
        }
        for (m, v) in mean.iter_mut().zip(s) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);

    let mut cov = DMatrix::<f64>::zeros(d, d);
    let mut dev = vec![0.0; d];
    for s in scores {
        for ((dv, v), m) in dev.iter_mut().zip(s.as_ref()).zip(&mean) {
            *dv = v - m;
        }
        for a in 0..d {
            for b in 0..=a {
                cov[(a, b)] += dev[a] * dev[b];
            }
        }
    }
    for a in 0..d {
        for b in 0..=a {
            cov[(a, b)] /= n;
            cov[(b, a)] = cov[(a, b)];
        }
    }
    Ok((mean, cov))
}

/// `(z/shrink − s̄)ᵀ (Σ̂ + εI)⁻¹ (z/shrink − s̄)`.
///
/// `shrink` is 1 for live monitoring and `√k` inside the inner bootstrap.
pub fn t2(z: &[f64], moments: &ScoreMoments, shrink: f64) -> f64 {
    debug_assert!(shrink > 0.0);
    debug_assert_eq!(z.len(), moments.dim());
    let d = z.len();
    let p = moments.precision.as_slice();
    let inv = 1.0 / shrink;
    let mut acc = 0.0;
    for a in 0..d {
        let da = z[a] * inv - moments.mean[a];
        // column-major storage; precision is symmetric so column a == row a
        let col = &p[a * d..(a + 1) * d];
        let mut row = 0.0;
        for b in 0..d {
            row += col[b] * (z[b] * inv - moments.mean[b]);
        }
        acc += da * row;
    }
    acc.max(0.0)
}

/// Serializable form: mean, row-major covariance and epsilon.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MomentsRecord {
    pub mean: Vec<f64>,
    pub cov: Vec<f64>,
    pub epsilon: f64,
}

impl From<&ScoreMoments> for MomentsRecord {
    fn from(m: &ScoreMoments) -> Self {
        let d = m.dim();
        let cov = (0..d * d).map(|k| m.cov[(k / d, k % d)]).collect();
        Self { mean: m.mean.clone(), cov, epsilon: m.epsilon }
    }
}

impl TryFrom<MomentsRecord> for ScoreMoments {
    type Error = DriftError;
    fn try_from(r: MomentsRecord) -> Result<Self> {
        let d = r.mean.len();
        if r.cov.len() != d * d {
            return Err(DriftError::Dimension { expected: d * d, got: r.cov.len() });
        }
        ScoreMoments::from_parts(r.mean, DMatrix::from_row_slice(d, d, &r.cov), r.epsilon)
    }
}
