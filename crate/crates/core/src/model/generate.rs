use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{validate, Edge, GaussianModel};
use crate::error::{Error, Result};

/// Draws attempted by [`random_model`] before giving up.
pub const RANDOM_MODEL_RETRIES: usize = 1000;

/// Edges of the circulant `k`-regular graph on `n` nodes: node `i` connects to
/// `i ± 1, …, i ± k/2 (mod n)`, and for odd `k` also to `i + n/2`.
pub fn circulant_edges(n: usize, k: usize) -> Result<Vec<Edge>> {
    if k == 0 {
        return Ok(Vec::new());
    }
    if k >= n {
        return Err(Error::Infeasible(format!("degree {k} needs more than {n} nodes")));
    }
    if !(n * k).is_multiple_of(2) {
        return Err(Error::Infeasible(format!("n·K = {} is odd", n * k)));
    }
    let mut offsets: Vec<usize> = (1..=k / 2).collect();
    if k % 2 == 1 {
        // n is even here because n·k is even and k is odd.
        offsets.push(n / 2);
    }
    let mut edges = Vec::with_capacity(n * k / 2);
    for i in 0..n {
        for &o in &offsets {
            let j = (i + o) % n;
            edges.push(if i < j { (i, j) } else { (j, i) });
        }
    }
    edges.sort_unstable();
    edges.dedup();
    debug_assert_eq!(edges.len(), n * k / 2);
    Ok(edges)
}

/// Unit-diagonal model with `R_ij = r` on the circulant `k`-regular graph.
pub fn make_k_regular(n: usize, k: usize, r: f64, h: DVector<f64>) -> Result<GaussianModel> {
    if h.len() != n {
        return Err(Error::LengthMismatch { expected: n, found: h.len() });
    }
    let edges = circulant_edges(n, k)?;
    let mut j = DMatrix::identity(n, n);
    if r != 0.0 {
        for &(a, b) in &edges {
            j[(a, b)] = r;
            j[(b, a)] = r;
        }
    }
    let model = GaussianModel::from_raw(h, j, if r != 0.0 { edges } else { Vec::new() })?;
    validate(&model).into_result()?;
    Ok(model)
}

/// Supremum of `r > 0` for which `I + r·A` is positive definite, `A` being the
/// adjacency matrix of the circulant `k`-regular graph.
pub fn r_valid(n: usize, k: usize) -> Result<f64> {
    let edges = circulant_edges(n, k)?;
    let mut adj = DMatrix::zeros(n, n);
    for &(a, b) in &edges {
        adj[(a, b)] = 1.0;
        adj[(b, a)] = 1.0;
    }
    let lambda_min = SymmetricEigen::new(adj).eigenvalues.min();
    if lambda_min >= 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(-1.0 / lambda_min)
}

fn largest_abs_eigenvalue(r: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(r.abs()).eigenvalues.max()
}

fn assemble_scaled(
    n: usize,
    edges: &[Edge],
    weights: &[f64],
    target_lambda: f64,
    h: DVector<f64>,
) -> Option<GaussianModel> {
    let mut r = DMatrix::zeros(n, n);
    for (&(a, b), &w) in edges.iter().zip(weights) {
        r[(a, b)] = w;
        r[(b, a)] = w;
    }
    let lambda = largest_abs_eigenvalue(&r);
    if lambda <= 0.0 {
        return None;
    }
    let factor = target_lambda / lambda;
    let mut j = DMatrix::identity(n, n);
    for &(a, b) in edges {
        let v = r[(a, b)] * factor;
        j[(a, b)] = v;
        j[(b, a)] = v;
    }
    let model = GaussianModel::from_raw(h, j, edges.to_vec()).ok()?;
    validate(&model).is_valid().then_some(model)
}

fn random_tree_edges(rng: &mut ChaCha8Rng, n: usize) -> Vec<Edge> {
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let k = rng.random_range(0..=i);
        order.swap(i, k);
    }
    (1..n)
        .map(|k| {
            let parent = order[rng.random_range(0..k)];
            let child = order[k];
            if parent < child {
                (parent, child)
            } else {
                (child, parent)
            }
        })
        .collect()
}

fn random_weights(rng: &mut ChaCha8Rng, count: usize) -> Vec<f64> {
    (0..count)
        .map(|_| {
            let magnitude = rng.random_range(0.2..1.0);
            if rng.random_bool(0.5) {
                magnitude
            } else {
                -magnitude
            }
        })
        .collect()
}

fn random_h(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0))
}

/// Random connected unit-diagonal model with `λ_max(|R|) = target_lambda`.
///
/// The sparsity pattern is a random spanning tree plus every other pair with
/// probability `density`; weights have random signs and magnitudes in
/// `[0.2, 1)` before `R` is rescaled onto the target. Draws whose `J = I + R` is
/// not positive definite are discarded.
pub fn random_model(n: usize, density: f64, target_lambda: f64, seed: u64) -> Result<GaussianModel> {
    if n < 2 {
        return Err(Error::Infeasible("random models need at least two nodes".into()));
    }
    if !(density > 0.0 && density <= 1.0) {
        return Err(Error::Domain(format!("density must be in (0, 1], got {density}")));
    }
    if !(target_lambda > 0.0 && target_lambda.is_finite()) {
        return Err(Error::Domain(format!("target lambda must be positive, got {target_lambda}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..RANDOM_MODEL_RETRIES {
        let mut edges = random_tree_edges(&mut rng, n);
        for a in 0..n {
            for b in (a + 1)..n {
                if rng.random_bool(density) {
                    edges.push((a, b));
                }
            }
        }
        edges.sort_unstable();
        edges.dedup();
        let weights = random_weights(&mut rng, edges.len());
        let h = random_h(&mut rng, n);
        if let Some(model) = assemble_scaled(n, &edges, &weights, target_lambda, h) {
            return Ok(model);
        }
    }
    Err(Error::RetriesExhausted { seed, attempts: RANDOM_MODEL_RETRIES })
}

/// Random tree-structured unit-diagonal model with `λ_max(|R|) = target_lambda`.
///
/// On a tree `|R|` and `R` are similar, so the model is valid iff `target_lambda < 1`.
pub fn random_tree(n: usize, target_lambda: f64, seed: u64) -> Result<GaussianModel> {
    if n < 2 {
        return Err(Error::Infeasible("trees need at least two nodes".into()));
    }
    if !(target_lambda > 0.0 && target_lambda < 1.0) {
        return Err(Error::Domain(format!(
            "tree models are valid only for 0 < lambda < 1, got {target_lambda}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = random_tree_edges(&mut rng, n);
    edges.sort_unstable();
    let weights = random_weights(&mut rng, edges.len());
    let h = random_h(&mut rng, n);
    assemble_scaled(n, &edges, &weights, target_lambda, h)
        .ok_or(Error::RetriesExhausted { seed, attempts: 1 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn row_sums(model: &GaussianModel) -> Vec<f64> {
        let n = model.n();
        (0..n)
            .map(|i| (0..n).filter(|&j| j != i).map(|j| model.j()[(i, j)].abs()).sum())
            .collect()
    }

    #[test]
    fn circulant_is_regular() {
        for (n, k) in [(8, 4), (8, 2), (8, 3), (10, 5), (6, 5), (9, 4)] {
            let edges = circulant_edges(n, k).unwrap();
            assert_eq!(edges.len(), n * k / 2);
            let mut deg = vec![0; n];
            for (a, b) in edges {
                deg[a] += 1;
                deg[b] += 1;
            }
            assert!(deg.iter().all(|&d| d == k), "n={n} k={k} {deg:?}");
        }
    }

    #[test]
    fn infeasible_regular_graphs() {
        assert!(matches!(circulant_edges(7, 3), Err(Error::Infeasible(_))));
        assert!(matches!(circulant_edges(4, 4), Err(Error::Infeasible(_))));
    }

    #[test]
    fn k_regular_row_sums() {
        let model = make_k_regular(8, 4, 0.27, DVector::zeros(8)).unwrap();
        assert_eq!(model.edges().len(), 16);
        for s in row_sums(&model) {
            assert!((s - 4.0 * 0.27).abs() < 1e-15);
        }
    }

    #[test]
    fn k_zero_is_diagonal() {
        let model = make_k_regular(5, 0, 0.3, DVector::zeros(5)).unwrap();
        assert!(model.edges().is_empty());
        assert_eq!(model.j(), &DMatrix::identity(5, 5));
    }

    #[test]
    fn r_valid_matches_circulant_spectrum() {
        // Circulant eigenvalues: sum over offsets of 2cos(2πko/n).
        let n = 8;
        let lambda_min = (0..n)
            .map(|k| {
                let w = 2.0 * PI * k as f64 / n as f64;
                2.0 * w.cos() + 2.0 * (2.0 * w).cos()
            })
            .fold(f64::INFINITY, f64::min);
        let expected = -1.0 / lambda_min;
        assert!((r_valid(8, 4).unwrap() - expected).abs() < 1e-12);
        assert!((r_valid(8, 4).unwrap() - 0.5).abs() < 1e-12);
        assert!((r_valid(8, 2).unwrap() - 0.5).abs() < 1e-12);
        assert!((r_valid(10, 2).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn r_valid_is_the_supremum() {
        let rv = r_valid(8, 4).unwrap();
        assert!(make_k_regular(8, 4, rv * (1.0 - 1e-9), DVector::zeros(8)).is_ok());
        assert!(make_k_regular(8, 4, rv * (1.0 + 1e-9), DVector::zeros(8)).is_err());
    }

    #[test]
    fn fig1_model_validity_matches_adjacency_spectrum() {
        let r = 0.27;
        let edges = circulant_edges(8, 4).unwrap();
        let mut adj = DMatrix::zeros(8, 8);
        for (a, b) in edges {
            adj[(a, b)] = 1.0;
            adj[(b, a)] = 1.0;
        }
        let lmin = SymmetricEigen::new(adj).eigenvalues.min();
        assert!(1.0 + r * lmin > 0.0);
        assert!(make_k_regular(8, 4, r, DVector::zeros(8)).is_ok());
    }

    #[test]
    fn random_model_hits_target() {
        for (target, seed) in [(0.9, 1), (1.1, 2), (1.1, 7), (0.5, 3)] {
            let model = random_model(8, 0.5, target, seed).unwrap();
            let lambda = largest_abs_eigenvalue(&(model.j() - DMatrix::identity(8, 8)));
            assert!((lambda - target).abs() < 1e-10, "{lambda} vs {target}");
            assert!(validate(&model).is_valid());
            assert!(model.is_connected());
        }
    }

    #[test]
    fn random_model_is_deterministic() {
        let a = random_model(8, 0.4, 1.1, 42).unwrap();
        let b = random_model(8, 0.4, 1.1, 42).unwrap();
        assert_eq!(a, b);
        let c = random_model(8, 0.4, 1.1, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn random_model_reports_exhausted_retries() {
        // Dense positive couplings cannot reach lambda = 5 on 3 nodes with J PD.
        let err = random_model(3, 1.0, 5.0, 9).unwrap_err();
        assert!(matches!(err, Error::RetriesExhausted { seed: 9, .. }));
    }

    #[test]
    fn random_tree_is_a_valid_tree() {
        let model = random_tree(12, 0.95, 5).unwrap();
        assert_eq!(model.edges().len(), 11);
        assert!(model.is_connected());
        assert!(validate(&model).is_valid());
    }
}
