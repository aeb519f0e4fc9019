//! Spectrum of `|R|` and the boundedness classification of the fractional
//! Bethe free energies it implies.
//!
//! `λ_max(|R|) < 1` (pairwise normalizable) gives energies bounded from below
//! for every α, `λ_max(|R|) > 1` gives energies unbounded from below for every
//! α, and at `λ_max(|R|) = 1` boundedness holds iff `½ Σ_i Σ_{j∈N(i)} 1/α_ij ≥ N`.

use nalgebra::DVector;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{AlphaAssignment, NormalizedModel};

/// Residual target of the power iteration.
pub const POWER_TOLERANCE: f64 = 1e-12;
pub const POWER_MAX_ITERATIONS: usize = 100_000;
/// Half-width of the band around `λ_max = 1` treated as the boundary case.
pub const BOUNDARY_EPSILON: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct ComponentSpectrum {
    pub nodes: Vec<usize>,
    pub lambda: f64,
    /// Unit Perron vector over `nodes`.
    pub u: DVector<f64>,
    pub iterations: usize,
    pub residual: f64,
}

#[derive(Debug, Clone)]
pub struct SpectralResult {
    pub lambda_max: f64,
    /// Unit Perron vector. On a disconnected model it is supported on the
    /// dominant component only.
    pub u_max: DVector<f64>,
    pub iterations: usize,
    pub residual: f64,
    pub connected: bool,
    pub components: Vec<ComponentSpectrum>,
}

fn component_spectrum(model: &NormalizedModel, nodes: Vec<usize>) -> Result<ComponentSpectrum> {
    let size = nodes.len();
    let abs_r = model.abs_r();
    let sub = nalgebra::DMatrix::from_fn(size, size, |a, b| abs_r[(nodes[a], nodes[b])]);
    if size == 1 {
        return Ok(ComponentSpectrum { nodes, lambda: 0.0, u: DVector::from_element(1, 1.0), iterations: 0, residual: 0.0 });
    }

    // Iterating on |R| + I keeps the Perron root strictly dominant in modulus
    // even on bipartite graphs, where −λ_max is also an eigenvalue of |R|.
    let mut u = DVector::from_element(size, 1.0 / (size as f64).sqrt());
    let mut residual = f64::INFINITY;
    for it in 1..=POWER_MAX_ITERATIONS {
        let ru = &sub * &u;
        let lambda = u.dot(&ru);
        residual = (&ru - &u * lambda).norm();
        if residual <= POWER_TOLERANCE * lambda.max(1.0) {
            return Ok(ComponentSpectrum { nodes, lambda, u, iterations: it, residual });
        }
        let next = ru + &u;
        u = &next / next.norm();
    }
    Err(Error::Convergence { iterations: POWER_MAX_ITERATIONS, residual })
}

/// Largest eigenvalue of `|R|` and its Perron vector by shifted power iteration,
/// computed per connected component.
pub fn spectral(model: &NormalizedModel) -> Result<SpectralResult> {
    let n = model.n();
    let comps = model.model().components();
    let connected = comps.len() <= 1;
    let components = comps
        .into_iter()
        .map(|nodes| component_spectrum(model, nodes))
        .collect::<Result<Vec<_>>>()?;

    let lambda_max = components.iter().map(|c| c.lambda).fold(0.0, f64::max);
    let iterations = components.iter().map(|c| c.iterations).max().unwrap_or(0);
    let residual = components.iter().map(|c| c.residual).fold(0.0, f64::max);

    let u_max = if lambda_max == 0.0 {
        DVector::from_element(n, 1.0 / (n as f64).sqrt())
    } else {
        let dominant = components
            .iter()
            .find(|c| c.lambda == lambda_max)
            .expect("maximum is attained");
        let mut u = DVector::zeros(n);
        for (k, &node) in dominant.nodes.iter().enumerate() {
            u[node] = dominant.u[k];
        }
        u
    };

    Ok(SpectralResult { lambda_max, u_max, iterations, residual, connected, components })
}

impl SpectralResult {
    /// `u_max` when it is entrywise positive; otherwise every component's
    /// Perron vector stacked and rescaled to unit length.
    pub fn positive_direction(&self) -> DVector<f64> {
        if self.u_max.iter().all(|&u| u > 0.0) {
            return self.u_max.clone();
        }
        let mut u = DVector::zeros(self.u_max.len());
        for comp in &self.components {
            for (k, &node) in comp.nodes.iter().enumerate() {
                u[node] = comp.u[k];
            }
        }
        let norm = u.norm();
        u / norm
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum BoundednessClass {
    Bounded,
    BoundaryBounded,
    BoundaryUnbounded,
    Unbounded,
}

impl BoundednessClass {
    pub fn is_bounded(self) -> bool {
        matches!(self, Self::Bounded | Self::BoundaryBounded)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundednessVerdict {
    pub class: BoundednessClass,
    pub lambda_max: f64,
    /// `½ Σ_i Σ_{j∈N(i)} 1/α_ij − N`, only decisive at `λ_max = 1`.
    pub boundary_margin: f64,
    pub pairwise_normalizable: bool,
    pub epsilon: f64,
}

/// `½ Σ_i Σ_{j∈N(i)} 1/α_ij − N`; each edge is seen from both endpoints.
pub fn boundary_margin(model: &NormalizedModel, alphas: &AlphaAssignment) -> Result<f64> {
    alphas.check_for(model)?;
    Ok(alphas.values().iter().map(|a| 1.0 / a).sum::<f64>() - model.n() as f64)
}

fn class_of(lambda: f64, margin: f64) -> BoundednessClass {
    if lambda < 1.0 - BOUNDARY_EPSILON {
        BoundednessClass::Bounded
    } else if lambda > 1.0 + BOUNDARY_EPSILON {
        BoundednessClass::Unbounded
    } else if margin >= 0.0 {
        BoundednessClass::BoundaryBounded
    } else {
        BoundednessClass::BoundaryUnbounded
    }
}

/// Classifies using a precomputed spectrum. Disconnected models are classified
/// per component and the worst verdict is reported.
pub fn classify_with(
    model: &NormalizedModel,
    alphas: &AlphaAssignment,
    spectrum: &SpectralResult,
) -> Result<BoundednessVerdict> {
    alphas.check_for(model)?;
    let mut comp_of = vec![0; model.n()];
    for (c, comp) in spectrum.components.iter().enumerate() {
        for &node in &comp.nodes {
            comp_of[node] = c;
        }
    }
    let mut inv_alpha = vec![0.0; spectrum.components.len()];
    for (e, &(i, _)) in model.edges().iter().enumerate() {
        inv_alpha[comp_of[i]] += 1.0 / alphas.get(e);
    }

    let (class, boundary_margin) = spectrum
        .components
        .iter()
        .zip(&inv_alpha)
        .map(|(comp, inv)| {
            let margin = inv - comp.nodes.len() as f64;
            (class_of(comp.lambda, margin), margin)
        })
        .max_by(|a, b| a.0.cmp(&b.0).then(b.1.total_cmp(&a.1)))
        .unwrap_or((BoundednessClass::Bounded, 0.0));

    Ok(BoundednessVerdict {
        class,
        lambda_max: spectrum.lambda_max,
        boundary_margin,
        pairwise_normalizable: spectrum.lambda_max < 1.0 - BOUNDARY_EPSILON,
        epsilon: BOUNDARY_EPSILON,
    })
}

pub fn classify(model: &NormalizedModel, alphas: &AlphaAssignment) -> Result<BoundednessVerdict> {
    let spectrum = spectral(model)?;
    classify_with(model, alphas, &spectrum)
}

/// Largest coupling `r` of a K-regular model for which the symmetric local
/// minimum exists: `1 / (2√(α(K − α)))`.
pub fn critical_r(k: usize, alpha: f64) -> Result<f64> {
    let k = k as f64;
    if !(alpha > 0.0 && alpha < k) {
        return Err(Error::Domain(format!("critical r needs 0 < alpha < K, got alpha = {alpha}, K = {k}")));
    }
    Ok(1.0 / (2.0 * (alpha * (k - alpha)).sqrt()))
}

/// Largest α for which a K-regular model with coupling `r` (`Kr ≥ 1`) keeps the
/// symmetric local minimum: `½K(1 − √(1 − 1/(Kr)²))`.
pub fn critical_alpha(k: usize, r: f64) -> Result<f64> {
    let kr = k as f64 * r.abs();
    if !(kr >= 1.0) {
        return Err(Error::Domain(format!("critical alpha needs K·r >= 1, got {kr}")));
    }
    Ok(0.5 * k as f64 * (1.0 - (1.0 - 1.0 / (kr * kr)).sqrt()))
}

/// `(K, |r|)` when every node has degree `K > 0` and every coupling has the
/// same magnitude.
pub fn detect_k_regular(model: &NormalizedModel) -> Option<(usize, f64)> {
    let graph = model.model();
    let k = graph.degree(0);
    if k == 0 || (0..model.n()).any(|i| graph.degree(i) != k) {
        return None;
    }
    let r = model.coupling(0).abs();
    let same = (0..model.edges().len()).all(|e| (model.coupling(e).abs() - r).abs() <= 1e-12 * r);
    same.then_some((k, r))
}

#[derive(Debug, Clone, Serialize)]
pub struct DiagnosticsReport {
    pub lambda_max: f64,
    pub u_max: Vec<f64>,
    pub verdict: BoundednessClass,
    pub boundary_margin: f64,
    pub pairwise_normalizable: bool,
    pub connected: bool,
    pub iterations: usize,
    pub residual: f64,
    pub alpha: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_regular: Option<KRegularInfo>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub critical_r: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub critical_alpha: Option<f64>,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct KRegularInfo {
    pub k: usize,
    pub r: f64,
}

/// Full report; the critical parameters are filled in for K-regular models
/// with uniform α when their formulas are defined.
pub fn diagnostics_report(model: &NormalizedModel, alphas: &AlphaAssignment) -> Result<DiagnosticsReport> {
    let spectrum = spectral(model)?;
    let verdict = classify_with(model, alphas, &spectrum)?;
    let k_regular = detect_k_regular(model).map(|(k, r)| KRegularInfo { k, r });
    let uniform_alpha = alphas
        .values()
        .first()
        .copied()
        .filter(|a| alphas.values().iter().all(|b| b == a));
    let (critical_r, critical_alpha) = match k_regular {
        Some(KRegularInfo { k, r }) => (
            uniform_alpha.and_then(|a| critical_r(k, a).ok()),
            critical_alpha(k, r).ok(),
        ),
        None => (None, None),
    };
    Ok(DiagnosticsReport {
        lambda_max: spectrum.lambda_max,
        u_max: spectrum.u_max.iter().copied().collect(),
        verdict: verdict.class,
        boundary_margin: verdict.boundary_margin,
        pairwise_normalizable: verdict.pairwise_normalizable,
        connected: spectrum.connected,
        iterations: spectrum.iterations,
        residual: spectrum.residual,
        alpha: alphas.values().to_vec(),
        k_regular,
        critical_r,
        critical_alpha,
    })
}
