//! Dense exact inference, the ground truth for every error metric.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::GaussianModel;

#[derive(Debug, Clone)]
pub struct ExactMarginals {
    pub m: DVector<f64>,
    pub sigma: DVector<f64>,
    /// Full covariance `J⁻¹`.
    pub cov: DMatrix<f64>,
    /// `log det J`, kept for the normalizer.
    pub log_det_j: f64,
}

pub fn exact_marginals(model: &GaussianModel) -> Result<ExactMarginals> {
    let chol = Cholesky::new(model.j().clone())
        .ok_or_else(|| Error::InvalidModel("J is not positive definite".into()))?;
    let m = chol.solve(model.h());
    let mut cov = chol.inverse();
    // Symmetrize away round-off from the triangular solves.
    let n = model.n();
    for a in 0..n {
        for b in (a + 1)..n {
            let v = 0.5 * (cov[(a, b)] + cov[(b, a)]);
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
    }
    let sigma = DVector::from_fn(n, |k, _| cov[(k, k)].sqrt());
    let log_det_j = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    Ok(ExactMarginals { m, sigma, cov, log_det_j })
}

impl ExactMarginals {
    /// `−log Z` for the unnormalized density `exp(hᵀx − ½xᵀJx)`:
    /// `−½hᵀJ⁻¹h − ½ log det(2π J⁻¹)`.
    pub fn neg_log_partition(&self, model: &GaussianModel) -> f64 {
        let n = model.n() as f64;
        let quad = model.h().dot(&self.m);
        -0.5 * quad - 0.5 * (n * (2.0 * std::f64::consts::PI).ln() - self.log_det_j)
    }

    /// Exact covariance of the pair `(a, b)`.
    pub fn pair_cov(&self, a: usize, b: usize) -> f64 {
        self.cov[(a, b)]
    }
}

/// Euclidean distance between approximate and exact standard deviations.
pub fn sigma_error(approx_sigma: &DVector<f64>, exact: &ExactMarginals) -> Result<f64> {
    if approx_sigma.len() != exact.sigma.len() {
        return Err(Error::LengthMismatch { expected: exact.sigma.len(), found: approx_sigma.len() });
    }
    Ok((approx_sigma - &exact.sigma).norm())
}
