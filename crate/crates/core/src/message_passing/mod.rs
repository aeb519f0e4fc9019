//! Fractional Gaussian message passing: power expectation propagation with a
//! fully factorized Gaussian approximation.
//!
//! Each pair factor `e = (i, j)` is approximated by one Gaussian term per
//! endpoint; `MessageSet::lambda[e][0]` is the precision that factor `e` sends to
//! node `i`, `lambda[e][1]` the one it sends to `j`. An update for `e` removes the
//! `α_e`-fraction of the current approximation from both endpoint beliefs, tilts
//! the cavity with the factor raised to `α_e`, projects the tilted pair onto its
//! marginals and takes the `1/α_e` power of the ratio. At `α_e = 1` this is
//! Gaussian belief propagation.

mod partition;

pub use partition::{partition_normalizable, partition_symmetric, Partition};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::free_energy::{gradient_constrained, sigma_star, Moments};
use crate::model::{AlphaAssignment, NormalizedModel};

#[derive(Debug, Clone, PartialEq)]
pub struct MessageSet {
    /// Precision contributions, `[to i, to j]` per edge `(i, j)`.
    pub lambda: Vec<[f64; 2]>,
    /// Precision-mean contributions, laid out like `lambda`.
    pub nu: Vec<[f64; 2]>,
    pub iteration: usize,
}

impl MessageSet {
    pub fn constant(n_edges: usize, lambda: f64, nu: f64) -> Self {
        Self { lambda: vec![[lambda; 2]; n_edges], nu: vec![[nu; 2]; n_edges], iteration: 0 }
    }

    fn max_change(&self, other: &Self) -> f64 {
        let pairs = self.lambda.iter().zip(&other.lambda).chain(self.nu.iter().zip(&other.nu));
        pairs
            .flat_map(|(a, b)| [(a[0] - b[0]).abs(), (a[1] - b[1]).abs()])
            .fold(0.0, |acc, d| if d.is_nan() || acc.is_nan() { f64::NAN } else { acc.max(d) })
    }

    fn is_finite(&self) -> bool {
        self.lambda.iter().chain(&self.nu).flatten().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InitScheme {
    /// All messages `(0, 0)`; needs proper node factors.
    Unit,
    /// All messages `(λ₀, 0)` with `λ₀` large enough that every belief and
    /// every tilted pair is proper before the first update.
    SymmetricNormalizing,
}

/// Every node belief precision and every tilted pair precision at common message `lambda`.
fn common_message_is_proper(model: &NormalizedModel, alphas: &AlphaAssignment, part: &Partition, lambda: f64) -> bool {
    let g = model.model();
    let node_ok = (0..model.n()).all(|k| part.a[k] + g.degree(k) as f64 * lambda > 0.0);
    node_ok
        && model.edges().iter().enumerate().all(|(e, &(i, j))| {
            let alpha = alphas.get(e);
            let ci = part.a[i] + (g.degree(i) as f64 - alpha) * lambda + alpha * part.gamma[e][0];
            let cj = part.a[j] + (g.degree(j) as f64 - alpha) * lambda + alpha * part.gamma[e][1];
            let off = alpha * model.coupling(e);
            ci > 0.0 && cj > 0.0 && ci * cj > off * off
        })
}

/// Smallest common precision `λ₀` for [`InitScheme::SymmetricNormalizing`]: the
/// infimum of the proper region plus one. When some node has fewer edges than
/// its `α`, the region need not be an interval and the first proper value among
/// `1, ½, ¼, …` and `2, 4, …` is used.
pub fn symmetric_normalizing_lambda(
    model: &NormalizedModel,
    alphas: &AlphaAssignment,
    part: &Partition,
) -> Result<f64> {
    alphas.check_for(model)?;
    let proper = |l: f64| common_message_is_proper(model, alphas, part, l);
    let g = model.model();
    let monotone = model
        .edges()
        .iter()
        .enumerate()
        .all(|(e, &(i, j))| g.degree(i).min(g.degree(j)) as f64 >= alphas.get(e));

    if monotone {
        if proper(0.0) {
            return Ok(1.0);
        }
        let mut hi = 1.0;
        while !proper(hi) {
            hi *= 2.0;
            if hi > 1e300 {
                return Err(Error::Infeasible("no common message makes the beliefs proper".into()));
            }
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if proper(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        return Ok(hi + 1.0);
    }
    let down = (0..60).map(|k| 0.5f64.powi(k));
    let up = (1..60).map(|k| 2f64.powi(k));
    down.chain(up)
        .find(|&l| proper(l))
        .ok_or_else(|| Error::Infeasible("no common message makes the beliefs proper".into()))
}

pub fn init_messages(
    model: &NormalizedModel,
    alphas: &AlphaAssignment,
    part: &Partition,
    scheme: InitScheme,
) -> Result<MessageSet> {
    let n_edges = model.edges().len();
    if part.gamma.len() != n_edges {
        return Err(Error::LengthMismatch { expected: n_edges, found: part.gamma.len() });
    }
    match scheme {
        InitScheme::Unit => {
            if !part.is_normalizable(model) {
                return Err(Error::SchemeMismatch("unit messages need a normalizable partition".into()));
            }
            Ok(MessageSet::constant(n_edges, 0.0, 0.0))
        }
        InitScheme::SymmetricNormalizing => {
            let lambda = symmetric_normalizing_lambda(model, alphas, part)?;
            Ok(MessageSet::constant(n_edges, lambda, 0.0))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Schedule {
    /// All edges updated from the same beliefs, then committed together.
    #[default]
    Synchronous,
    /// Edges updated one at a time in edge-list order.
    RoundRobin,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct MpOptions {
    pub schedule: Schedule,
    pub damping: f64,
    pub tolerance: f64,
    pub max_sweeps: usize,
}

impl Default for MpOptions {
    fn default() -> Self {
        Self { schedule: Schedule::Synchronous, damping: 0.0, tolerance: 1e-10, max_sweeps: 10_000 }
    }
}

impl MpOptions {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.damping) {
            return Err(Error::InvalidOptions(format!("damping must be in [0, 1), got {}", self.damping)));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidOptions("tolerance must be positive".into()));
        }
        if self.max_sweeps == 0 {
            return Err(Error::InvalidOptions("max_sweeps must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum MpStatus {
    Converged,
    /// Sweep budget spent with the residual no longer shrinking.
    Oscillating,
    IterationCap,
    BeliefNotNormalizable,
}

#[derive(Debug, Clone)]
pub struct MpResult {
    pub status: MpStatus,
    /// Present when the final beliefs are proper.
    pub beliefs: Option<Moments>,
    pub messages: MessageSet,
    /// Largest message-parameter change in the last sweep.
    pub residual: f64,
    pub iterations: usize,
    pub residual_history: Vec<f64>,
}

fn node_beliefs(model: &NormalizedModel, part: &Partition, msgs: &MessageSet) -> (DVector<f64>, DVector<f64>) {
    let mut prec = part.a.clone();
    let mut lin = part.b.clone();
    for (e, &(i, j)) in model.edges().iter().enumerate() {
        prec[i] += msgs.lambda[e][0];
        prec[j] += msgs.lambda[e][1];
        lin[i] += msgs.nu[e][0];
        lin[j] += msgs.nu[e][1];
    }
    (prec, lin)
}

/// Tilted pair precision `[[c_i, αR], [αR, c_j]]` and linear term `(v_i, v_j)` of edge `e`.
#[inline]
fn tilted(
    model: &NormalizedModel,
    alphas: &AlphaAssignment,
    part: &Partition,
    msgs: &MessageSet,
    prec: &DVector<f64>,
    lin: &DVector<f64>,
    e: usize,
) -> ([f64; 2], [f64; 2], f64) {
    let (i, j) = model.edges()[e];
    let alpha = alphas.get(e);
    let c = [
        prec[i] - alpha * (msgs.lambda[e][0] - part.gamma[e][0]),
        prec[j] - alpha * (msgs.lambda[e][1] - part.gamma[e][1]),
    ];
    let v = [
        lin[i] - alpha * (msgs.nu[e][0] - part.eta[e][0]),
        lin[j] - alpha * (msgs.nu[e][1] - part.eta[e][1]),
    ];
    (c, v, alpha * model.coupling(e))
}

/// New undamped messages of edge `e`, or `None` when the tilted pair is improper.
///
/// Projecting the tilted pair gives marginal precision `c_i − (αR)²/c_j`; dividing
/// out the cavity and taking the `1/α` power leaves `γ_i − αR²/c_j`.
fn edge_update(
    model: &NormalizedModel,
    alphas: &AlphaAssignment,
    part: &Partition,
    msgs: &MessageSet,
    prec: &DVector<f64>,
    lin: &DVector<f64>,
    e: usize,
) -> Option<([f64; 2], [f64; 2])> {
    let (c, v, off) = tilted(model, alphas, part, msgs, prec, lin, e);
    if !(c[0] > 0.0 && c[1] > 0.0 && c[0] * c[1] > off * off) {
        return None;
    }
    let r = model.coupling(e);
    let lambda = [part.gamma[e][0] - off * r / c[1], part.gamma[e][1] - off * r / c[0]];
    let nu = [part.eta[e][0] - r * v[1] / c[1], part.eta[e][1] - r * v[0] / c[0]];
    Some((lambda, nu))
}

#[inline]
fn damp(update: [f64; 2], old: [f64; 2], d: f64) -> [f64; 2] {
    if d == 0.0 {
        update
    } else {
        [(1.0 - d) * update[0] + d * old[0], (1.0 - d) * update[1] + d * old[1]]
    }
}

enum SweepOutcome {
    Done(MessageSet),
    Improper,
}

fn sweep_synchronous(
    model: &NormalizedModel,
    alphas: &AlphaAssignment,
    part: &Partition,
    msgs: &MessageSet,
    damping: f64,
) -> SweepOutcome {
    let (prec, lin) = node_beliefs(model, part, msgs);
    let mut next = msgs.clone();
    for e in 0..model.edges().len() {
        let Some((lambda, nu)) = edge_update(model, alphas, part, msgs, &prec, &lin, e) else {
            return SweepOutcome::Improper;
        };
        next.lambda[e] = damp(lambda, msgs.lambda[e], damping);
        next.nu[e] = damp(nu, msgs.nu[e], damping);
    }
    SweepOutcome::Done(next)
}

fn sweep_round_robin(
    model: &NormalizedModel,
    alphas: &AlphaAssignment,
    part: &Partition,
    msgs: &MessageSet,
    damping: f64,
) -> SweepOutcome {
    let (mut prec, mut lin) = node_beliefs(model, part, msgs);
    let mut next = msgs.clone();
    for (e, &(i, j)) in model.edges().iter().enumerate() {
        let Some((lambda, nu)) = edge_update(model, alphas, part, &next, &prec, &lin, e) else {
            return SweepOutcome::Improper;
        };
        let lambda = damp(lambda, next.lambda[e], damping);
        let nu = damp(nu, next.nu[e], damping);
        prec[i] += lambda[0] - next.lambda[e][0];
        prec[j] += lambda[1] - next.lambda[e][1];
        lin[i] += nu[0] - next.nu[e][0];
        lin[j] += nu[1] - next.nu[e][1];
        next.lambda[e] = lambda;
        next.nu[e] = nu;
    }
    SweepOutcome::Done(next)
}

/// One sweep of the chosen schedule, without any convergence bookkeeping.
/// Returns `None` when some tilted pair is improper.
pub fn mp_sweep(
    model: &NormalizedModel,
    alphas: &AlphaAssignment,
    part: &Partition,
    msgs: &MessageSet,
    schedule: Schedule,
    damping: f64,
) -> Option<MessageSet> {
    let outcome = match schedule {
        Schedule::Synchronous => sweep_synchronous(model, alphas, part, msgs, damping),
        Schedule::RoundRobin => sweep_round_robin(model, alphas, part, msgs, damping),
    };
    match outcome {
        SweepOutcome::Done(mut next) => {
            next.iteration = msgs.iteration + 1;
            Some(next)
        }
        SweepOutcome::Improper => None,
    }
}

/// The residual trace shows no net decrease over its last stretch.
fn stalled(history: &[f64]) -> bool {
    let window = (history.len() / 4).clamp(1, 100);
    if history.len() < 2 * window {
        return false;
    }
    let tail = &history[history.len() - window..];
    let before = &history[history.len() - 2 * window..history.len() - window];
    let min = |s: &[f64]| s.iter().cloned().fold(f64::INFINITY, f64::min);
    tail.iter().all(|r| r.is_finite()) && min(tail) >= 0.5 * min(before)
}

pub fn mp_run(
    model: &NormalizedModel,
    alphas: &AlphaAssignment,
    part: &Partition,
    messages: MessageSet,
    opts: &MpOptions,
) -> Result<MpResult> {
    opts.validate()?;
    alphas.check_for(model)?;
    let n_edges = model.edges().len();
    for len in [part.gamma.len(), messages.lambda.len(), messages.nu.len()] {
        if len != n_edges {
            return Err(Error::LengthMismatch { expected: n_edges, found: len });
        }
    }

    let mut msgs = messages;
    let mut history = Vec::new();
    let mut residual = f64::INFINITY;
    let mut status = MpStatus::IterationCap;
    if n_edges == 0 {
        residual = 0.0;
        status = MpStatus::Converged;
    }
    while status == MpStatus::IterationCap && history.len() < opts.max_sweeps {
        let Some(next) = mp_sweep(model, alphas, part, &msgs, opts.schedule, opts.damping) else {
            status = MpStatus::BeliefNotNormalizable;
            break;
        };
        residual = next.max_change(&msgs);
        history.push(residual);
        msgs = next;
        if !msgs.is_finite() || residual.is_nan() {
            break;
        }
        let (prec, _) = node_beliefs(model, part, &msgs);
        if prec.iter().any(|&p| p <= 0.0) {
            status = MpStatus::BeliefNotNormalizable;
        } else if residual <= opts.tolerance {
            status = MpStatus::Converged;
        }
    }
    if status == MpStatus::IterationCap && msgs.is_finite() && stalled(&history) {
        status = MpStatus::Oscillating;
    }
    let beliefs = beliefs(model, alphas, part, &msgs).ok();
    Ok(MpResult { status, beliefs, iterations: history.len(), messages: msgs, residual, residual_history: history })
}

/// Node and pair beliefs: node precision `a_i + Σ λ`, pair beliefs from the tilted pair.
pub fn beliefs(
    model: &NormalizedModel,
    alphas: &AlphaAssignment,
    part: &Partition,
    msgs: &MessageSet,
) -> Result<Moments> {
    alphas.check_for(model)?;
    let (prec, lin) = node_beliefs(model, part, msgs);
    if let Some(k) = (0..model.n()).find(|&k| !(prec[k] > 0.0 && prec[k].is_finite())) {
        return Err(Error::Domain(format!("belief at node {k} has precision {}", prec[k])));
    }
    let m = lin.component_div(&prec);
    let sigma = prec.map(|p| p.sqrt().recip());
    let mut sigma_pair = Vec::with_capacity(model.edges().len());
    for e in 0..model.edges().len() {
        let (c, _, off) = tilted(model, alphas, part, msgs, &prec, &lin, e);
        let det = c[0] * c[1] - off * off;
        if !(c[0] > 0.0 && det > 0.0) {
            return Err(Error::Domain(format!("pair belief on edge {e} is not normalizable")));
        }
        sigma_pair.push(-off / det);
    }
    Ok(Moments { m, sigma, sigma_pair })
}

/// Residuals of the stationarity conditions of the fractional Bethe free energy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StationarityCheck {
    /// `‖Jm − h‖∞`.
    pub mean: f64,
    /// Largest gap between a pair covariance and its optimum at the node σ's.
    pub pair: f64,
    /// `‖∂F^c_α/∂σ‖∞`.
    pub sigma_gradient: f64,
}

pub fn check_stationarity(
    model: &NormalizedModel,
    alphas: &AlphaAssignment,
    moments: &Moments,
) -> Result<StationarityCheck> {
    let (grad_m, grad_sigma) = gradient_constrained(model, alphas, &moments.m, &moments.sigma)?;
    let pair = model
        .edges()
        .iter()
        .enumerate()
        .map(|(e, &(i, j))| {
            let opt = sigma_star(alphas.get(e), model.coupling(e), moments.sigma[i], moments.sigma[j]);
            (moments.sigma_pair[e] - opt).abs()
        })
        .fold(0.0, f64::max);
    Ok(StationarityCheck { mean: grad_m.amax(), pair, sigma_gradient: grad_sigma.amax() })
}
