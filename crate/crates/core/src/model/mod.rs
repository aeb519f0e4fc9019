//! Gaussian Markov random fields in canonical form, `p(x) ∝ exp(hᵀx − ½xᵀJx)`.
//!
//! A [`GaussianModel`] owns the canonical parameters and the edge set implied by
//! the off-diagonal pattern of `J`. Every inference routine in the crate works on
//! the unit-diagonal form produced by [`normalize`], where `J = I + R`.

mod generate;
pub mod io;

pub use generate::{
    circulant_edges, make_k_regular, r_valid, random_model, random_tree, RANDOM_MODEL_RETRIES,
};

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};

/// Undirected edge `(i, j)` with `i < j`.
pub type Edge = (usize, usize);

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianModel {
    h: DVector<f64>,
    j: DMatrix<f64>,
    edges: Vec<Edge>,
    /// `adjacency[i]` lists `(neighbor, edge index)` in increasing neighbor order.
    adjacency: Vec<Vec<(usize, usize)>>,
}

impl GaussianModel {
    /// Builds a model and derives its edges from the nonzero off-diagonal pattern of `j`.
    ///
    /// Only shapes are checked here; use [`validate`] for symmetry and definiteness.
    pub fn new(h: DVector<f64>, j: DMatrix<f64>) -> Result<Self> {
        check_shapes(&h, &j)?;
        let edges = nonzero_pattern(&j);
        Ok(Self::assemble(h, j, edges))
    }

    /// Builds a model with an explicitly supplied edge list. The list is not
    /// checked against `j`; [`validate`] reports any inconsistency.
    pub fn from_raw(h: DVector<f64>, j: DMatrix<f64>, edges: Vec<Edge>) -> Result<Self> {
        check_shapes(&h, &j)?;
        let n = h.len();
        let mut edges: Vec<Edge> = edges
            .into_iter()
            .map(|(a, b)| if a < b { (a, b) } else { (b, a) })
            .collect();
        for &(a, b) in &edges {
            if a == b || b >= n {
                return Err(Error::InvalidModel(format!("bad edge ({a}, {b}) for n = {n}")));
            }
        }
        edges.sort_unstable();
        edges.dedup();
        Ok(Self::assemble(h, j, edges))
    }

    fn assemble(h: DVector<f64>, j: DMatrix<f64>, edges: Vec<Edge>) -> Self {
        let mut adjacency = vec![Vec::new(); h.len()];
        for (e, &(a, b)) in edges.iter().enumerate() {
            adjacency[a].push((b, e));
            adjacency[b].push((a, e));
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        Self { h, j, edges, adjacency }
    }

    pub fn n(&self) -> usize {
        self.h.len()
    }

    pub fn h(&self) -> &DVector<f64> {
        &self.h
    }

    pub fn j(&self) -> &DMatrix<f64> {
        &self.j
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn neighbors(&self, i: usize) -> &[(usize, usize)] {
        &self.adjacency[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adjacency[i].len()
    }

    pub fn edge_index(&self, a: usize, b: usize) -> Option<usize> {
        let key = if a < b { (a, b) } else { (b, a) };
        self.edges.binary_search(&key).ok()
    }

    /// Connected components as sorted node lists, ordered by smallest node.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let n = self.n();
        let mut label = vec![usize::MAX; n];
        let mut out = Vec::new();
        for start in 0..n {
            if label[start] != usize::MAX {
                continue;
            }
            let id = out.len();
            let mut stack = vec![start];
            let mut nodes = Vec::new();
            label[start] = id;
            while let Some(v) = stack.pop() {
                nodes.push(v);
                for &(w, _) in &self.adjacency[v] {
                    if label[w] == usize::MAX {
                        label[w] = id;
                        stack.push(w);
                    }
                }
            }
            nodes.sort_unstable();
            out.push(nodes);
        }
        out
    }

    pub fn is_connected(&self) -> bool {
        self.n() <= 1 || self.components().len() == 1
    }
}

fn check_shapes(h: &DVector<f64>, j: &DMatrix<f64>) -> Result<()> {
    if j.nrows() != j.ncols() {
        return Err(Error::InvalidModel(format!(
            "J must be square, got {}x{}",
            j.nrows(),
            j.ncols()
        )));
    }
    if j.nrows() != h.len() {
        return Err(Error::LengthMismatch { expected: j.nrows(), found: h.len() });
    }
    if h.iter().chain(j.iter()).any(|v| !v.is_finite()) {
        return Err(Error::InvalidModel("non-finite parameter".into()));
    }
    Ok(())
}

fn nonzero_pattern(j: &DMatrix<f64>) -> Vec<Edge> {
    let n = j.nrows();
    let mut edges = Vec::new();
    for a in 0..n {
        for b in (a + 1)..n {
            if j[(a, b)] != 0.0 || j[(b, a)] != 0.0 {
                edges.push((a, b));
            }
        }
    }
    edges
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    /// Largest `|J_ij − J_ji|`; zero for a valid model.
    pub symmetry_defect: f64,
    pub positive_definite: bool,
    pub edges_consistent: bool,
    pub issues: Vec<String>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.symmetry_defect == 0.0 && self.positive_definite && self.edges_consistent
    }

    pub fn into_result(self) -> Result<()> {
        if self.is_valid() {
            Ok(())
        } else {
            Err(Error::InvalidModel(self.issues.join("; ")))
        }
    }
}

pub fn validate(model: &GaussianModel) -> ValidationReport {
    let j = model.j();
    let n = model.n();
    let mut issues = Vec::new();

    let mut symmetry_defect: f64 = 0.0;
    for a in 0..n {
        for b in (a + 1)..n {
            symmetry_defect = symmetry_defect.max((j[(a, b)] - j[(b, a)]).abs());
        }
    }
    if symmetry_defect != 0.0 {
        issues.push(format!("J is not symmetric (max defect {symmetry_defect:e})"));
    }

    let positive_definite = Cholesky::new(j.clone()).is_some();
    if !positive_definite {
        issues.push("J is not positive definite".into());
    }

    let edges_consistent = nonzero_pattern(j) == model.edges();
    if !edges_consistent {
        issues.push("edge set does not match the off-diagonal pattern of J".into());
    }

    ValidationReport { symmetry_defect, positive_definite, edges_consistent, issues }
}

/// Unit-diagonal form of a model: `J' = D^{-1/2} J D^{-1/2} = I + R`, `h' = D^{-1/2} h`.
#[derive(Debug, Clone)]
pub struct NormalizedModel {
    base: GaussianModel,
    r: DMatrix<f64>,
    abs_r: DMatrix<f64>,
    scale: DVector<f64>,
}

pub fn normalize(model: &GaussianModel) -> Result<NormalizedModel> {
    let n = model.n();
    let j = model.j();
    if let Some(k) = (0..n).find(|&k| j[(k, k)] <= 0.0) {
        return Err(Error::InvalidModel(format!("non-positive diagonal entry J[{k},{k}]")));
    }
    validate(model).into_result()?;

    let scale = DVector::from_fn(n, |k, _| j[(k, k)].sqrt());
    let mut jn = DMatrix::from_fn(n, n, |a, b| j[(a, b)] / (scale[a] * scale[b]));
    for k in 0..n {
        jn[(k, k)] = 1.0;
    }
    // Keep the stored matrix exactly symmetric after rounding.
    for a in 0..n {
        for b in (a + 1)..n {
            jn[(b, a)] = jn[(a, b)];
        }
    }
    let hn = model.h().component_div(&scale);
    let base = GaussianModel::from_raw(hn, jn, model.edges().to_vec())?;
    Ok(NormalizedModel::from_unit_diagonal(base, scale))
}

impl NormalizedModel {
    fn from_unit_diagonal(base: GaussianModel, scale: DVector<f64>) -> Self {
        let n = base.n();
        let mut r = base.j().clone();
        for k in 0..n {
            r[(k, k)] = 0.0;
        }
        let abs_r = r.abs();
        Self { base, r, abs_r, scale }
    }

    /// The unit-diagonal model.
    pub fn model(&self) -> &GaussianModel {
        &self.base
    }

    pub fn n(&self) -> usize {
        self.base.n()
    }

    pub fn h(&self) -> &DVector<f64> {
        self.base.h()
    }

    pub fn j(&self) -> &DMatrix<f64> {
        self.base.j()
    }

    pub fn edges(&self) -> &[Edge] {
        self.base.edges()
    }

    /// Off-diagonal part `R = J' − I`.
    pub fn r(&self) -> &DMatrix<f64> {
        &self.r
    }

    /// Entrywise absolute value `|R|`.
    pub fn abs_r(&self) -> &DMatrix<f64> {
        &self.abs_r
    }

    /// `R_ij` for edge index `e`.
    pub fn coupling(&self, e: usize) -> f64 {
        let (a, b) = self.base.edges()[e];
        self.r[(a, b)]
    }

    /// `d_k = sqrt(J_kk)` of the original model.
    pub fn scale(&self) -> &DVector<f64> {
        &self.scale
    }

    /// Reconstructs the original model.
    pub fn denormalize(&self) -> GaussianModel {
        let n = self.n();
        let d = &self.scale;
        let j = DMatrix::from_fn(n, n, |a, b| self.base.j()[(a, b)] * d[a] * d[b]);
        let h = self.base.h().component_mul(d);
        GaussianModel::assemble(h, j, self.base.edges().to_vec())
    }

    /// Maps means, standard deviations and pair covariances of the normalized
    /// model back to the original coordinates.
    pub fn denormalize_moments(&self, moments: &crate::free_energy::Moments) -> crate::free_energy::Moments {
        let d = &self.scale;
        let m = moments.m.component_div(d);
        let sigma = moments.sigma.component_div(d);
        let sigma_pair = self
            .edges()
            .iter()
            .zip(&moments.sigma_pair)
            .map(|(&(a, b), s)| s / (d[a] * d[b]))
            .collect();
        crate::free_energy::Moments { m, sigma, sigma_pair }
    }
}

/// Per-edge fractional weights `α_ij > 0`, indexed like the model's edge list.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaAssignment {
    values: Vec<f64>,
}

impl AlphaAssignment {
    pub fn uniform(n_edges: usize, alpha: f64) -> Result<Self> {
        Self::from_values(vec![alpha; n_edges])
    }

    pub fn for_model(model: &NormalizedModel, alpha: f64) -> Result<Self> {
        Self::uniform(model.edges().len(), alpha)
    }

    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if let Some(a) = values.iter().find(|a| !(a.is_finite() && **a > 0.0)) {
            return Err(Error::Domain(format!("alpha must be positive and finite, got {a}")));
        }
        Ok(Self { values })
    }

    pub fn get(&self, e: usize) -> f64 {
        self.values[e]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub(crate) fn check_for(&self, model: &NormalizedModel) -> Result<()> {
        if self.values.len() != model.edges().len() {
            return Err(Error::LengthMismatch {
                expected: model.edges().len(),
                found: self.values.len(),
            });
        }
        Ok(())
    }
}
