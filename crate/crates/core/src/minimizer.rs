//! Direct minimization of the constrained fractional Bethe free energy.
//!
//! The mean is fixed at its stationary value `m* = J⁻¹h`; the standard
//! deviations are optimized by damped Newton in `s = log σ`, which removes the
//! positivity constraint. Indefinite Hessians are handled by flipping negative
//! eigenvalues, so negative curvature directions are followed downhill.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::diagnostics::SpectralResult;
use crate::error::{Error, Result};
use crate::exact::exact_marginals;
use crate::free_energy::{
    check_direction, constrained_moments, constrained_sigma_part, log_grid, mean_term, optimal_mean, sqrt1p_minus_one, FreeEnergyValue, Moments,
};
use crate::model::{AlphaAssignment, NormalizedModel};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct NewtonOptions {
    /// Convergence threshold on `‖∂F/∂s‖∞`.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Runs whose value falls below this are reported as diverged.
    pub value_floor: f64,
    pub armijo: f64,
    pub shrink: f64,
    pub max_halvings: usize,
    /// Cap on `‖Δs‖∞` per iteration.
    pub max_log_step: f64,
    pub trace: bool,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-9,
            max_iterations: 500,
            value_floor: -1e12,
            armijo: 1e-4,
            shrink: 0.5,
            max_halvings: 60,
            max_log_step: 2.0,
            trace: false,
        }
    }
}

impl NewtonOptions {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidOptions(what.to_string()));
        if !(self.tolerance > 0.0) {
            return bad("tolerance must be positive");
        }
        if self.max_iterations == 0 {
            return bad("max_iterations must be at least 1");
        }
        if !(self.armijo > 0.0 && self.armijo < 1.0) {
            return bad("armijo constant must be in (0, 1)");
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) {
            return bad("shrink factor must be in (0, 1)");
        }
        if !(self.max_log_step > 0.0) {
            return bad("max_log_step must be positive");
        }
        if self.value_floor.is_nan() {
            return bad("value_floor is NaN");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum MinimizeStatus {
    Converged,
    Diverged,
    /// Iteration budget spent, or the line search could not make progress.
    IterationCap,
    /// Cannot occur in log coordinates; kept for callers that match on it.
    DomainEscape,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct TraceEntry {
    pub iteration: usize,
    pub value: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone)]
pub struct MinimizeResult {
    pub status: MinimizeStatus,
    pub moments: Moments,
    pub value: FreeEnergyValue,
    pub iterations: usize,
    pub grad_norm: f64,
    pub trace: Option<Vec<TraceEntry>>,
}

/// Value, gradient and Hessian of the σ-part of `F^c_α` in `s = log σ`.
struct LogObjective<'a> {
    model: &'a NormalizedModel,
    alphas: &'a AlphaAssignment,
}

impl LogObjective<'_> {
    fn value(&self, s: &DVector<f64>) -> f64 {
        let sigma = s.map(f64::exp);
        if sigma.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return f64::NAN;
        }
        constrained_sigma_part(self.model, self.alphas, &sigma)
    }

    fn gradient_hessian(&self, s: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let n = s.len();
        let sigma = s.map(f64::exp);
        let mut grad = sigma.map(|v| v * v - 1.0);
        let mut hess = DMatrix::from_diagonal(&sigma.map(|v| 2.0 * v * v));
        for (e, &(i, j)) in self.model.edges().iter().enumerate() {
            let alpha = self.alphas.get(e);
            let x = 2.0 * alpha * self.model.coupling(e) * sigma[i] * sigma[j];
            let (sm1, big_s) = sqrt1p_minus_one(x);
            let w = sm1 / (2.0 * alpha);
            grad[i] -= w;
            grad[j] -= w;
            // d w / d s_i = x² / (2α S), written as (S − 1)(S + 1) / (2α S).
            let dw = sm1 * (big_s + 1.0) / (2.0 * alpha * big_s);
            hess[(i, i)] -= dw;
            hess[(j, j)] -= dw;
            hess[(i, j)] -= dw;
            hess[(j, i)] -= dw;
        }
        debug_assert_eq!(grad.len(), n);
        (grad, hess)
    }
}

fn newton_direction(grad: &DVector<f64>, hess: DMatrix<f64>) -> DVector<f64> {
    let eig = SymmetricEigen::new(hess);
    let scale = eig.eigenvalues.amax().max(1.0);
    let floor = 1e-10 * scale;
    let vt_g = eig.eigenvectors.transpose() * grad;
    let scaled = DVector::from_fn(vt_g.len(), |k, _| vt_g[k] / eig.eigenvalues[k].abs().max(floor));
    -(&eig.eigenvectors * scaled)
}

/// Minimizes `F^c_α(m, σ)` starting from `init_sigma`, with `m = J⁻¹h`.
pub fn newton_minimize(
    model: &NormalizedModel,
    alphas: &AlphaAssignment,
    init_sigma: &DVector<f64>,
    opts: &NewtonOptions,
) -> Result<MinimizeResult> {
    opts.validate()?;
    alphas.check_for(model)?;
    check_direction(init_sigma, model.n())?;
    let m = optimal_mean(model)?;
    let objective = LogObjective { model, alphas };

    let mut s = init_sigma.map(f64::ln);
    let mut value = objective.value(&s);
    let mut trace = opts.trace.then(Vec::new);
    let mut status = MinimizeStatus::IterationCap;
    let mut grad_norm;
    let mut iterations = 0;

    loop {
        let (grad, hess) = objective.gradient_hessian(&s);
        grad_norm = grad.amax();
        if let Some(t) = trace.as_mut() {
            t.push(TraceEntry { iteration: iterations, value, grad_norm });
        }
        if !value.is_finite() || value < opts.value_floor {
            status = MinimizeStatus::Diverged;
            break;
        }
        if grad_norm <= opts.tolerance {
            status = MinimizeStatus::Converged;
            break;
        }
        if iterations >= opts.max_iterations {
            break;
        }
        iterations += 1;

        let mut dir = newton_direction(&grad, hess);
        let longest = dir.amax();
        if longest > opts.max_log_step {
            dir *= opts.max_log_step / longest;
        }
        let slope = grad.dot(&dir);

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..=opts.max_halvings {
            let trial = &s + &dir * step;
            let trial_value = objective.value(&trial);
            if trial_value.is_finite() {
                let armijo = trial_value <= value + opts.armijo * step * slope;
                // Near a minimum the value stops resolving decrease; accept a
                // step that holds the value within round-off and shrinks the gradient.
                let stalled = trial_value <= value + 8.0 * f64::EPSILON * value.abs().max(1.0)
                    && objective.gradient_hessian(&trial).0.amax() < grad_norm;
                if armijo || stalled {
                    accepted = Some((trial, trial_value));
                    break;
                }
            } else if trial_value == f64::NEG_INFINITY {
                accepted = Some((trial, trial_value));
                break;
            }
            step *= opts.shrink;
        }
        match accepted {
            Some((trial, trial_value)) => {
                s = trial;
                value = trial_value;
            }
            None => break,
        }
    }

    let sigma = s.map(f64::exp);
    let full_value = FreeEnergyValue::exact(mean_term(model, &m) + value);
    let moments = constrained_moments(model, alphas, m, sigma);
    Ok(MinimizeResult { status, moments, value: full_value, iterations, grad_norm, trace })
}

#[derive(Debug, Clone)]
pub struct InitPoint {
    pub label: String,
    /// Scale along `u_max` for ray inits.
    pub t: Option<f64>,
    pub sigma: DVector<f64>,
}

/// Initial σ vectors: `t·u_max` for each `t`, the all-ones vector, and the exact σ.
pub fn make_inits(
    model: &NormalizedModel,
    spectral: &SpectralResult,
    t_values: &[f64],
) -> Result<Vec<InitPoint>> {
    if let Some(t) = t_values.iter().find(|t| !(t.is_finite() && **t > 0.0)) {
        return Err(Error::Domain(format!("init scale must be positive, got {t}")));
    }
    let u = spectral.positive_direction();
    let mut inits: Vec<InitPoint> = t_values
        .iter()
        .map(|&t| InitPoint { label: format!("t={t}"), t: Some(t), sigma: &u * t })
        .collect();
    inits.push(InitPoint { label: "unit".into(), t: None, sigma: DVector::from_element(model.n(), 1.0) });
    let exact = exact_marginals(model.model())?;
    inits.push(InitPoint { label: "exact".into(), t: None, sigma: exact.sigma });
    Ok(inits)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RayMinimum {
    pub t: f64,
    pub value: f64,
}

/// Grid resolution used by [`find_local_minimum_on_ray`] unless overridden.
pub const DEFAULT_RAY_POINTS: usize = 400;

/// Locates the first interior local minimum of `g(t) = F^c_α(J⁻¹h, t·direction)`
/// on a log grid over `t_range`, refined by golden-section search.
pub fn find_local_minimum_on_ray(
    model: &NormalizedModel,
    alphas: &AlphaAssignment,
    direction: &DVector<f64>,
    t_range: (f64, f64),
) -> Result<Option<RayMinimum>> {
    find_local_minimum_on_ray_with(model, alphas, direction, t_range, DEFAULT_RAY_POINTS)
}

pub fn find_local_minimum_on_ray_with(
    model: &NormalizedModel,
    alphas: &AlphaAssignment,
    direction: &DVector<f64>,
    t_range: (f64, f64),
    points: usize,
) -> Result<Option<RayMinimum>> {
    check_direction(direction, model.n())?;
    alphas.check_for(model)?;
    let (lo, hi) = t_range;
    if !(lo > 0.0 && hi > lo && points >= 3) {
        return Err(Error::Domain(format!("bad ray range ({lo}, {hi}) with {points} points")));
    }
    let m = optimal_mean(model)?;
    let mean_part = mean_term(model, &m);
    let g = |t: f64| mean_part + constrained_sigma_part(model, alphas, &(direction * t));

    let grid = log_grid(lo, hi, points);
    let values: Vec<f64> = grid.iter().map(|&t| g(t)).collect();
    let Some(k) = (1..points - 1).find(|&k| values[k] <= values[k - 1] && values[k] < values[k + 1]) else {
        return Ok(None);
    };

    // Golden-section on [t_{k-1}, t_{k+1}], which brackets the minimum.
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (grid[k - 1], grid[k + 1]);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut gc, mut gd) = (g(c), g(d));
    while b - a > 1e-10 {
        if gc < gd {
            b = d;
            d = c;
            gd = gc;
            c = b - inv_phi * (b - a);
            gc = g(c);
        } else {
            a = c;
            c = d;
            gc = gd;
            d = a + inv_phi * (b - a);
            gd = g(d);
        }
    }
    let t = 0.5 * (a + b);
    Ok(Some(RayMinimum { t, value: g(t) }))
}
