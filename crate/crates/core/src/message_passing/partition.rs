use nalgebra::{DMatrix, DVector};

use crate::diagnostics::{SpectralResult, BOUNDARY_EPSILON};
use crate::error::{Error, Result};
use crate::model::NormalizedModel;

/// Split of the node potentials over the pair factors.
///
/// Pair factor `e = (i, j)` is `exp(−½γ_i x_i² + η_i x_i − ½γ_j x_j² + η_j x_j − R_ij x_i x_j)`
/// with `γ = gamma[e]`, `η = eta[e]` (index 0 for `i`, 1 for `j`). Node `k` keeps
/// `exp(−½a_k x_k² + b_k x_k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub gamma: Vec<[f64; 2]>,
    pub eta: Vec<[f64; 2]>,
    pub a: DVector<f64>,
    pub b: DVector<f64>,
}

impl Partition {
    /// Builds a partition from edge shares, assigning the residuals to the nodes.
    pub fn from_shares(model: &NormalizedModel, gamma: Vec<[f64; 2]>, eta: Vec<[f64; 2]>) -> Result<Self> {
        let n_edges = model.edges().len();
        for len in [gamma.len(), eta.len()] {
            if len != n_edges {
                return Err(Error::LengthMismatch { expected: n_edges, found: len });
            }
        }
        if gamma.iter().flatten().chain(eta.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(Error::Domain("partition shares must be finite".into()));
        }
        let mut a = DVector::from_element(model.n(), 1.0);
        let mut b = model.h().clone();
        for (e, &(i, j)) in model.edges().iter().enumerate() {
            a[i] -= gamma[e][0];
            a[j] -= gamma[e][1];
            b[i] -= eta[e][0];
            b[j] -= eta[e][1];
        }
        Ok(Self { gamma, eta, a, b })
    }

    /// Sums the quadratic and linear coefficients of all factors.
    pub fn reconstruct(&self, model: &NormalizedModel) -> (DMatrix<f64>, DVector<f64>) {
        let n = model.n();
        let mut j = DMatrix::from_diagonal(&self.a);
        let mut h = self.b.clone();
        for (e, &(a, b)) in model.edges().iter().enumerate() {
            j[(a, a)] += self.gamma[e][0];
            j[(b, b)] += self.gamma[e][1];
            j[(a, b)] += model.coupling(e);
            j[(b, a)] += model.coupling(e);
            h[a] += self.eta[e][0];
            h[b] += self.eta[e][1];
        }
        debug_assert_eq!(j.nrows(), n);
        (j, h)
    }

    /// Determinant `γ_iγ_j − R_ij²` of every pair factor's precision.
    pub fn pair_determinants(&self, model: &NormalizedModel) -> Vec<f64> {
        (0..model.edges().len())
            .map(|e| self.gamma[e][0] * self.gamma[e][1] - model.coupling(e).powi(2))
            .collect()
    }

    /// Every node factor and every pair factor is a proper Gaussian.
    pub fn is_normalizable(&self, model: &NormalizedModel) -> bool {
        self.a.iter().all(|&a| a > 0.0)
            && self.gamma.iter().all(|g| g[0] > 0.0 && g[1] > 0.0)
            && self.pair_determinants(model).iter().all(|&d| d > 0.0)
    }
}

fn even_linear_shares(model: &NormalizedModel) -> Vec<[f64; 2]> {
    let g = model.model();
    let h = model.h();
    model
        .edges()
        .iter()
        .map(|&(i, j)| [h[i] / g.degree(i) as f64, h[j] / g.degree(j) as f64])
        .collect()
}

/// Splits each node's unit diagonal and `h_i` evenly over its incident edges.
pub fn partition_symmetric(model: &NormalizedModel) -> Partition {
    let g = model.model();
    let gamma = model
        .edges()
        .iter()
        .map(|&(i, j)| [1.0 / g.degree(i) as f64, 1.0 / g.degree(j) as f64])
        .collect();
    let mut part = Partition::from_shares(model, gamma, even_linear_shares(model))
        .expect("shares are finite and sized by the edge list");
    // Sums of 1/deg need not round to exactly 1.
    for k in 0..model.n() {
        if g.degree(k) > 0 {
            part.a[k] = 0.0;
            part.b[k] = 0.0;
        }
    }
    part
}

/// Perron-vector partition with every factor proper; needs `λ_max(|R|) < 1`.
///
/// On each connected component with Perron pair `(λ, u)`, `c = (1 + 1/λ)/2` and
/// `γ_{i←(i,j)} = c|R_ij| u_j / u_i`, leaving `a_i = 1 − cλ > 0`.
pub fn partition_normalizable(model: &NormalizedModel, spectral: &SpectralResult) -> Result<Partition> {
    if !(spectral.lambda_max < 1.0 - BOUNDARY_EPSILON) {
        return Err(Error::NotPairwiseNormalizable { lambda_max: spectral.lambda_max });
    }
    let n = model.n();
    let mut c = vec![0.0; n];
    let mut u = vec![0.0; n];
    for comp in &spectral.components {
        for (k, &node) in comp.nodes.iter().enumerate() {
            u[node] = comp.u[k];
            c[node] = if comp.lambda > 0.0 { 0.5 * (1.0 + 1.0 / comp.lambda) } else { 1.0 };
        }
    }
    if model.edges().iter().any(|&(i, j)| !(u[i] > 0.0 && u[j] > 0.0)) {
        return Err(Error::Domain("Perron vector is not positive on an edge".into()));
    }
    let gamma = model
        .edges()
        .iter()
        .enumerate()
        .map(|(e, &(i, j))| {
            let r = model.coupling(e).abs();
            [c[i] * r * u[j] / u[i], c[j] * r * u[i] / u[j]]
        })
        .collect();
    let mut part = Partition::from_shares(model, gamma, even_linear_shares(model))?;
    for k in 0..n {
        if model.model().degree(k) > 0 {
            part.b[k] = 0.0;
        }
    }
    Ok(part)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::spectral;
    use crate::model::{make_k_regular, normalize, random_model, GaussianModel};

    fn check_reconstruction(model: &NormalizedModel, part: &Partition, tol: f64) {
        let (j, h) = part.reconstruct(model);
        assert!((j - model.j()).amax() <= tol);
        assert!((h - model.h()).amax() <= tol);
    }

    #[test]
    fn symmetric_on_regular_graph() {
        let model = normalize(&make_k_regular(8, 4, 0.27, DVector::from_element(8, 2.0)).unwrap()).unwrap();
        let part = partition_symmetric(&model);
        assert!(part.gamma.iter().flatten().all(|&g| g == 0.25));
        assert!(part.eta.iter().flatten().all(|&v| v == 0.5));
        assert!(part.a.iter().all(|&a| a == 0.0));
        check_reconstruction(&model, &part, 1e-15);
        assert!(!part.is_normalizable(&model));
    }

    #[test]
    fn symmetric_keeps_isolated_nodes() {
        let mut j = DMatrix::identity(3, 3);
        j[(0, 1)] = 0.3;
        j[(1, 0)] = 0.3;
        let model = normalize(&GaussianModel::new(DVector::from_vec(vec![1.0, 2.0, -3.0]), j).unwrap()).unwrap();
        let part = partition_symmetric(&model);
        assert_eq!(part.a[2], 1.0);
        assert_eq!(part.b[2], -3.0);
        check_reconstruction(&model, &part, 0.0);
    }

    #[test]
    fn normalizable_on_regular_graph() {
        let (k, r) = (4.0, 0.2);
        let model = normalize(&make_k_regular(8, 4, r, DVector::zeros(8)).unwrap()).unwrap();
        let spec = spectral(&model).unwrap();
        let part = partition_normalizable(&model, &spec).unwrap();
        let c = 0.5 * (1.0 + 1.0 / (k * r));
        for g in part.gamma.iter().flatten() {
            assert!((g - c * r).abs() < 1e-12);
        }
        for &a in part.a.iter() {
            assert!((a - (1.0 - c * k * r)).abs() < 1e-12);
        }
        for d in part.pair_determinants(&model) {
            assert!((d - (c * c - 1.0) * r * r).abs() < 1e-12);
        }
        assert!(part.is_normalizable(&model));
        check_reconstruction(&model, &part, 1e-14);
    }

    #[test]
    fn normalizable_on_random_models() {
        for seed in 0..30 {
            let model = normalize(&random_model(8, 0.5, 0.9, seed).unwrap()).unwrap();
            let part = partition_normalizable(&model, &spectral(&model).unwrap()).unwrap();
            assert!(part.is_normalizable(&model), "seed {seed}");
            check_reconstruction(&model, &part, 1e-14);
        }
    }

    #[test]
    fn normalizable_rejects_unbounded() {
        let model = normalize(&random_model(8, 0.5, 1.1, 0).unwrap()).unwrap();
        let err = partition_normalizable(&model, &spectral(&model).unwrap()).unwrap_err();
        assert!(matches!(err, Error::NotPairwiseNormalizable { .. }));
    }

    #[test]
    fn normalizable_per_component() {
        let mut j = DMatrix::identity(5, 5);
        for (a, b, v) in [(0, 1, 0.4), (1, 2, -0.3), (3, 4, 0.7)] {
            j[(a, b)] = v;
            j[(b, a)] = v;
        }
        let model = normalize(&GaussianModel::new(DVector::from_element(5, 1.0), j).unwrap()).unwrap();
        let part = partition_normalizable(&model, &spectral(&model).unwrap()).unwrap();
        assert!(part.is_normalizable(&model));
        check_reconstruction(&model, &part, 1e-14);
    }
}
