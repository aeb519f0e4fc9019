use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;

use super::{cell, linear_grid, opt_cell, ExperimentConfig, GeneratorSpec, ModelSource, PartitionScheme, Table};
use crate::diagnostics::{
    classify_with, critical_alpha, critical_r, detect_k_regular, diagnostics_report, spectral, BoundednessClass,
    DiagnosticsReport, SpectralResult,
};
use crate::error::{Error, Result};
use crate::exact::{exact_marginals, sigma_error, ExactMarginals};
use crate::free_energy::{f_constrained, f_lower_bound, f_mean_field, optimal_mean, ray_scan};
use crate::message_passing::{
    init_messages, mp_run, partition_normalizable, partition_symmetric, InitScheme, MessageSet, MpOptions,
    MpResult, MpStatus, Partition,
};
use crate::minimizer::{
    find_local_minimum_on_ray, make_inits, newton_minimize, InitPoint, MinimizeResult, MinimizeStatus,
    NewtonOptions, RayMinimum,
};
use crate::model::{make_k_regular, normalize, r_valid, AlphaAssignment, GaussianModel, NormalizedModel};

pub fn cmd_diagnose(model: &GaussianModel, alpha: f64) -> Result<DiagnosticsReport> {
    let model = normalize(model)?;
    let alphas = AlphaAssignment::for_model(&model, alpha)?;
    diagnostics_report(&model, &alphas)
}

/// Partition and initial messages for the chosen scheme. `Auto` uses the
/// normalizable partition with unit messages when `λ_max(|R|) < 1` and the
/// symmetric partition with common normalizing messages otherwise.
pub fn mp_setup(
    model: &NormalizedModel,
    alphas: &AlphaAssignment,
    spectrum: &SpectralResult,
    scheme: PartitionScheme,
    init: Option<InitScheme>,
) -> Result<(Partition, MessageSet)> {
    let normalizable = match scheme {
        PartitionScheme::Auto => partition_normalizable(model, spectrum).is_ok(),
        PartitionScheme::Normalizable => true,
        PartitionScheme::Symmetric => false,
    };
    let (part, default_init) = if normalizable {
        (partition_normalizable(model, spectrum)?, InitScheme::Unit)
    } else {
        (partition_symmetric(model), InitScheme::SymmetricNormalizing)
    };
    let msgs = init_messages(model, alphas, &part, init.unwrap_or(default_init))?;
    Ok((part, msgs))
}

pub fn run_mp(
    model: &NormalizedModel,
    alphas: &AlphaAssignment,
    spectrum: &SpectralResult,
    scheme: PartitionScheme,
    init: Option<InitScheme>,
    opts: &MpOptions,
) -> Result<MpResult> {
    let (part, msgs) = mp_setup(model, alphas, spectrum, scheme, init)?;
    mp_run(model, alphas, &part, msgs, opts)
}

#[derive(Debug, Clone, Serialize)]
pub struct ComparisonRow {
    pub alpha: f64,
    pub r: Option<f64>,
    pub verdict: BoundednessClass,
    pub newton_status: MinimizeStatus,
    pub newton_value: Option<f64>,
    /// `None` when no initial messages could be formed.
    pub mp_status: Option<MpStatus>,
    pub mp_value: Option<f64>,
    pub newton_sigma_error: Option<f64>,
    pub mp_sigma_error: Option<f64>,
    /// Largest σ difference between the methods, when both converged.
    pub agreement_gap: Option<f64>,
    /// Exactly one of the two methods converged.
    pub disagreement: bool,
}

impl ComparisonRow {
    pub const HEADER: [&'static str; 11] = [
        "alpha",
        "r",
        "verdict",
        "newton_status",
        "newton_value",
        "mp_status",
        "mp_value",
        "newton_sigma_error",
        "mp_sigma_error",
        "agreement_gap",
        "disagreement",
    ];

    pub fn cells(&self) -> Vec<String> {
        vec![
            cell(self.alpha),
            opt_cell(self.r),
            format!("{:?}", self.verdict),
            format!("{:?}", self.newton_status),
            opt_cell(self.newton_value),
            self.mp_status.map(|s| format!("{s:?}")).unwrap_or_else(|| "InitInfeasible".into()),
            opt_cell(self.mp_value),
            opt_cell(self.newton_sigma_error),
            opt_cell(self.mp_sigma_error),
            opt_cell(self.agreement_gap),
            self.disagreement.to_string(),
        ]
    }

    pub fn table(rows: &[Self]) -> Table {
        let mut t = Table::new(Self::HEADER.to_vec());
        for row in rows {
            t.push(row.cells());
        }
        t
    }
}

/// Lowest-value converged run, or the first run when none converged.
fn best_newton(runs: &[MinimizeResult]) -> &MinimizeResult {
    runs.iter()
        .filter(|r| r.status == MinimizeStatus::Converged)
        .min_by(|a, b| a.value.value.total_cmp(&b.value.value))
        .unwrap_or(&runs[0])
}

struct Context<'a> {
    model: &'a NormalizedModel,
    spectrum: &'a SpectralResult,
    exact: &'a ExactMarginals,
    r: Option<f64>,
}

fn comparison_row(
    ctx: &Context<'_>,
    alphas: &AlphaAssignment,
    alpha: f64,
    newton_runs: &[MinimizeResult],
    mp: Option<MpResult>,
) -> Result<ComparisonRow> {
    let verdict = classify_with(ctx.model, alphas, ctx.spectrum)?.class;
    let newton = best_newton(newton_runs);
    let newton_ok = newton.status == MinimizeStatus::Converged;
    let newton_sigma = newton_ok.then_some(&newton.moments.sigma);
    let mp_status = mp.as_ref().map(|r| r.status);
    let mp_sigma = mp
        .as_ref()
        .filter(|r| r.status == MpStatus::Converged)
        .and_then(|r| r.beliefs.as_ref())
        .map(|b| b.sigma.clone());
    let m = optimal_mean(ctx.model)?;
    let mp_value = match &mp_sigma {
        Some(s) => Some(f_constrained(ctx.model, alphas, &m, s)?.value),
        None => None,
    };
    let err = |s: Option<&DVector<f64>>| s.map(|s| sigma_error(s, ctx.exact)).transpose();
    let agreement_gap = match (newton_sigma, &mp_sigma) {
        (Some(a), Some(b)) => Some((a - b).amax()),
        _ => None,
    };
    Ok(ComparisonRow {
        alpha,
        r: ctx.r,
        verdict,
        newton_status: newton.status,
        newton_value: newton_ok.then_some(newton.value.value),
        mp_status,
        mp_value,
        newton_sigma_error: err(newton_sigma)?,
        mp_sigma_error: err(mp_sigma.as_ref())?,
        agreement_gap,
        disagreement: newton_ok != mp_sigma.is_some(),
    })
}

fn mp_or_infeasible(
    model: &NormalizedModel,
    alphas: &AlphaAssignment,
    spectrum: &SpectralResult,
    scheme: PartitionScheme,
    init: Option<InitScheme>,
    opts: &MpOptions,
) -> Result<Option<MpResult>> {
    match run_mp(model, alphas, spectrum, scheme, init, opts) {
        Ok(r) => Ok(Some(r)),
        Err(Error::Infeasible(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Runs Newton (from σ = 1) and message passing at every α and compares both
/// with the exact marginals.
pub fn cmd_compare(
    model: &GaussianModel,
    alpha_grid: &[f64],
    newton: &NewtonOptions,
    mp: &MpOptions,
    scheme: PartitionScheme,
    init: Option<InitScheme>,
) -> Result<Vec<ComparisonRow>> {
    newton.validate()?;
    mp.validate()?;
    let model = normalize(model)?;
    let spectrum = spectral(&model)?;
    let exact = exact_marginals(model.model())?;
    let ctx = Context { model: &model, spectrum: &spectrum, exact: &exact, r: detect_k_regular(&model).map(|(_, r)| r) };
    let unit = DVector::from_element(model.n(), 1.0);
    alpha_grid
        .par_iter()
        .map(|&alpha| {
            let alphas = AlphaAssignment::for_model(&model, alpha)?;
            let runs = vec![newton_minimize(&model, &alphas, &unit, newton)?];
            let mp_res = mp_or_infeasible(&model, &alphas, &spectrum, scheme, init, mp)?;
            comparison_row(&ctx, &alphas, alpha, &runs, mp_res)
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct Fig1Row {
    /// `alpha` for the α sweep at fixed r, `r` for the r sweep at fixed α.
    pub panel: &'static str,
    pub alpha: f64,
    pub r: f64,
    /// False when `I + rA` is not positive definite; no curve is emitted then.
    pub valid: bool,
    pub local_minimum: Option<RayMinimum>,
    /// Whether the closed-form critical values predict a local minimum.
    pub predicted: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Fig1Summary {
    pub n: usize,
    pub k: usize,
    pub r: f64,
    pub fixed_alpha: f64,
    pub r_valid: f64,
    pub critical_alpha: Option<f64>,
    pub critical_r: Option<f64>,
    pub rows: Vec<Fig1Row>,
}

fn predicts_minimum(k: usize, alpha: f64, r: f64) -> bool {
    let kr = k as f64 * r;
    if kr < 1.0 {
        return true;
    }
    // Below α = K/2 the ray has a local minimum exactly while r < r_c(K, α).
    alpha < 0.5 * k as f64 && critical_r(k, alpha).map(|rc| r < rc).unwrap_or(false)
}

/// `F^c_α` along `t·1` for a K-regular model: an α sweep at the generator's r
/// and an r sweep at `fixed_alpha`. Writes `fig1_curves.csv` and `fig1_summary.csv`.
pub fn cmd_fig1(config: &ExperimentConfig) -> Result<Fig1Summary> {
    config.validate()?;
    let ModelSource::Generator(GeneratorSpec::KRegular { n, k, r, h }) = config.source else {
        return Err(Error::InvalidOptions("fig1 needs a kregular generator".into()));
    };
    let mut config = config.clone();
    if config.r_grid.is_empty() {
        let kf = k as f64;
        config.r_grid = linear_grid(0.8 / kf, 1.2 / kf, 11);
    }
    config.prepare_output()?;

    let rv = r_valid(n, k)?;
    let t_range = (config.t_grid[0], *config.t_grid.last().expect("nonempty"));
    let one = DVector::from_element(n, 1.0);
    let cases: Vec<(&'static str, f64, f64)> = config
        .alpha_grid
        .iter()
        .map(|&a| ("alpha", a, r))
        .chain(config.r_grid.iter().map(|&rr| ("r", config.fixed_alpha, rr)))
        .collect();

    let results: Vec<(Fig1Row, Vec<(f64, f64)>)> = cases
        .par_iter()
        .map(|&(panel, alpha, rr)| {
            let predicted = predicts_minimum(k, alpha, rr);
            let Ok(raw) = make_k_regular(n, k, rr, DVector::from_element(n, h)) else {
                let row = Fig1Row { panel, alpha, r: rr, valid: false, local_minimum: None, predicted };
                return Ok((row, Vec::new()));
            };
            let model = normalize(&raw)?;
            let alphas = AlphaAssignment::for_model(&model, alpha)?;
            let curve = ray_scan(&model, &alphas, &one, &config.t_grid)?;
            let local_minimum = find_local_minimum_on_ray(&model, &alphas, &one, t_range)?;
            Ok((Fig1Row { panel, alpha, r: rr, valid: true, local_minimum, predicted }, curve))
        })
        .collect::<Result<_>>()?;

    let mut curves = Table::new(vec!["panel", "alpha", "r", "t", "value"]);
    let mut summary = Table::new(vec![
        "panel",
        "alpha",
        "r",
        "kr",
        "valid",
        "local_min_t",
        "local_min_value",
        "predicted",
        "r_valid",
        "critical_alpha",
        "critical_r",
    ]);
    for (row, curve) in &results {
        for &(t, v) in curve {
            curves.push(vec![row.panel.into(), cell(row.alpha), cell(row.r), cell(t), cell(v)]);
        }
        summary.push(vec![
            row.panel.into(),
            cell(row.alpha),
            cell(row.r),
            cell(k as f64 * row.r),
            row.valid.to_string(),
            opt_cell(row.local_minimum.map(|m| m.t)),
            opt_cell(row.local_minimum.map(|m| m.value)),
            row.predicted.to_string(),
            cell(rv),
            opt_cell(critical_alpha(k, row.r).ok()),
            opt_cell(critical_r(k, row.alpha).ok()),
        ]);
    }
    curves.write(config.output_dir.join("fig1_curves.csv"))?;
    summary.write(config.output_dir.join("fig1_summary.csv"))?;

    Ok(Fig1Summary {
        n,
        k,
        r,
        fixed_alpha: config.fixed_alpha,
        r_valid: rv,
        critical_alpha: critical_alpha(k, r).ok(),
        critical_r: critical_r(k, config.fixed_alpha).ok(),
        rows: results.into_iter().map(|(row, _)| row).collect(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct Fig2AlphaSummary {
    pub alpha: f64,
    pub newton_converged: usize,
    pub newton_runs: usize,
    /// Spread of the converged Newton values.
    pub newton_spread: Option<f64>,
    pub comparison: ComparisonRow,
}

#[derive(Debug, Clone, Serialize)]
pub struct Fig2Summary {
    pub lambda_max: f64,
    pub pairwise_normalizable: bool,
    pub alphas: Vec<Fig2AlphaSummary>,
}

struct Fig2Cell {
    alpha: f64,
    runs: Vec<MinimizeResult>,
    row: ComparisonRow,
}

/// Free energies along `t·u_max`, Newton results per (α, init) and σ errors of
/// both methods per α. Writes `fig2_curves.csv`, `fig2_newton.csv` and
/// `fig2_errors.csv`; non-converged values are empty cells.
pub fn cmd_fig2(config: &ExperimentConfig) -> Result<Fig2Summary> {
    config.validate()?;
    config.prepare_output()?;
    let model = normalize(&config.source.load()?)?;
    let spectrum = spectral(&model)?;
    let exact = exact_marginals(model.model())?;
    let u = spectrum.positive_direction();
    let m = optimal_mean(&model)?;
    let n = model.n();

    let mut curves = Table::new(vec!["curve", "alpha", "t", "value"]);
    let bethe = AlphaAssignment::for_model(&model, 1.0)?;
    for &t in &config.t_grid {
        let sigma = &u * t;
        curves.push(vec!["mean_field".into(), String::new(), cell(t), cell(f_mean_field(&model, &m, &sigma)?.value)]);
        curves.push(vec!["bethe".into(), cell(1.0), cell(t), cell(f_constrained(&model, &bethe, &m, &sigma)?.value)]);
        curves.push(vec!["lower_bound".into(), String::new(), cell(t), cell(f_lower_bound(&model, &m, &sigma)?.value)]);
    }
    for &alpha in &config.alpha_grid {
        let alphas = AlphaAssignment::for_model(&model, alpha)?;
        for (t, v) in ray_scan(&model, &alphas, &u, &config.t_grid)? {
            curves.push(vec!["constrained".into(), cell(alpha), cell(t), cell(v)]);
        }
    }

    let inits: Vec<InitPoint> = make_inits(&model, &spectrum, &config.init_t)?;
    let ctx = Context { model: &model, spectrum: &spectrum, exact: &exact, r: None };
    let cells: Vec<Fig2Cell> = config
        .alpha_grid
        .par_iter()
        .map(|&alpha| {
            let alphas = AlphaAssignment::for_model(&model, alpha)?;
            let runs = inits
                .iter()
                .map(|init| newton_minimize(&model, &alphas, &init.sigma, &config.newton))
                .collect::<Result<Vec<_>>>()?;
            let mp_res = mp_or_infeasible(&model, &alphas, &spectrum, config.partition, config.init, &config.mp)?;
            let row = comparison_row(&ctx, &alphas, alpha, &runs, mp_res)?;
            Ok(Fig2Cell { alpha, runs, row })
        })
        .collect::<Result<_>>()?;

    let mut newton_table =
        Table::new(vec!["alpha", "init", "t", "status", "iterations", "value", "sigma_error"]);
    let mut summaries = Vec::new();
    for c in &cells {
        let mut converged = Vec::new();
        for (init, run) in inits.iter().zip(&c.runs) {
            let ok = run.status == MinimizeStatus::Converged;
            if ok {
                converged.push(run.value.value);
            }
            let err = if ok { Some(sigma_error(&run.moments.sigma, &exact)?) } else { None };
            newton_table.push(vec![
                cell(c.alpha),
                init.label.clone(),
                opt_cell(init.t),
                format!("{:?}", run.status),
                run.iterations.to_string(),
                opt_cell(ok.then_some(run.value.value)),
                opt_cell(err),
            ]);
        }
        let spread = (!converged.is_empty()).then(|| {
            let hi = converged.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lo = converged.iter().cloned().fold(f64::INFINITY, f64::min);
            hi - lo
        });
        summaries.push(Fig2AlphaSummary {
            alpha: c.alpha,
            newton_converged: converged.len(),
            newton_runs: c.runs.len(),
            newton_spread: spread,
            comparison: c.row.clone(),
        });
    }
    let rows: Vec<ComparisonRow> = cells.iter().map(|c| c.row.clone()).collect();

    curves.write(config.output_dir.join("fig2_curves.csv"))?;
    newton_table.write(config.output_dir.join("fig2_newton.csv"))?;
    ComparisonRow::table(&rows).write(config.output_dir.join("fig2_errors.csv"))?;
    debug_assert_eq!(u.len(), n);
    Ok(Fig2Summary {
        lambda_max: spectrum.lambda_max,
        pairwise_normalizable: spectrum.lambda_max < 1.0,
        alphas: summaries,
    })
}
