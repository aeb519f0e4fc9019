//! Mean-field, fractional Bethe and constrained fractional Bethe free energies
//! of a normalized Gaussian model, expressed in moment parameters.
//!
//! All energies share one additive constant: they are the exact Gaussian
//! evaluations of `−E_q[log p̃] − H(q)` with `p̃(x) = exp(hᵀx − ½xᵀJx)`, each node
//! entropy carrying its `½ log(2πe σ²)` and each pair mutual information being
//! `−½ log(1 − ρ²)`. Under this convention the sandwich
//! `F_MF ≥ F^c_α ≥ F_MF − ½σᵀ|R|σ` is a literal numeric inequality.

use nalgebra::{Cholesky, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{AlphaAssignment, NormalizedModel};

/// Pairs with `ρ² ≥ 1 − DOMAIN_GUARD` are rejected.
pub const DOMAIN_GUARD: f64 = 1e-14;

/// Variational parameters: node means, node standard deviations and one pair
/// covariance `σ_ij` per model edge.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub m: DVector<f64>,
    pub sigma: DVector<f64>,
    pub sigma_pair: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ConstantConvention {
    /// Additive constants fixed by exact Gaussian evaluation of the defining integrals.
    ExactGaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FreeEnergyValue {
    pub value: f64,
    pub constant_convention: ConstantConvention,
}

impl FreeEnergyValue {
    pub(crate) fn exact(value: f64) -> Self {
        Self { value, constant_convention: ConstantConvention::ExactGaussian }
    }
}

fn check_m_sigma(model: &NormalizedModel, m: &DVector<f64>, sigma: &DVector<f64>) -> Result<()> {
    let n = model.n();
    if m.len() != n {
        return Err(Error::LengthMismatch { expected: n, found: m.len() });
    }
    if sigma.len() != n {
        return Err(Error::LengthMismatch { expected: n, found: sigma.len() });
    }
    if let Some(s) = sigma.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
        return Err(Error::Domain(format!("sigma must be positive and finite, got {s}")));
    }
    Ok(())
}

/// `½mᵀJm − hᵀm`.
pub(crate) fn mean_term(model: &NormalizedModel, m: &DVector<f64>) -> f64 {
    0.5 * m.dot(&(model.j() * m)) - model.h().dot(m)
}

/// `½Σσ_k² − Σ log σ_k − ½N(1 + log 2π)`.
pub(crate) fn node_term(sigma: &DVector<f64>) -> f64 {
    let n = sigma.len() as f64;
    let c = 0.5 * n * (1.0 + (2.0 * std::f64::consts::PI).ln());
    sigma.iter().map(|&s| 0.5 * s * s - s.ln()).sum::<f64>() - c
}

/// `(√(1 + x²) − 1, √(1 + x²))` without cancellation or overflow.
#[inline]
pub(crate) fn sqrt1p_minus_one(x: f64) -> (f64, f64) {
    let s = 1f64.hypot(x);
    let sm1 = if x.abs() < 1.0 { x * x / (s + 1.0) } else { s - 1.0 };
    (sm1, s)
}

/// Constrained edge contribution `(1/2α)[log((S+1)/2) − (S − 1)]` with
/// `S = √(1 + (2αR σ_iσ_j)²)`; it is `R σ*_ij − (1/2α) log(1 − ρ*²)`.
#[inline]
pub(crate) fn constrained_edge_term(alpha: f64, r: f64, si: f64, sj: f64) -> f64 {
    let (sm1, _) = sqrt1p_minus_one(2.0 * alpha * r * si * sj);
    ((0.5 * sm1).ln_1p() - sm1) / (2.0 * alpha)
}

/// Mean-field free energy of a normalized model.
pub fn f_mean_field(
    model: &NormalizedModel,
    m: &DVector<f64>,
    sigma: &DVector<f64>,
) -> Result<FreeEnergyValue> {
    check_m_sigma(model, m, sigma)?;
    Ok(FreeEnergyValue::exact(mean_term(model, m) + node_term(sigma)))
}

/// Optimal pair covariance for fixed node standard deviations:
/// `σ*_ij = −sign(R)(√(1 + (2αRσ_iσ_j)²) − 1)/(2α|R|)`, evaluated in the
/// rationalized form `−2αR σ_i²σ_j² / (√(1 + x²) + 1)` which has no cancellation.
pub fn sigma_star(alpha: f64, r: f64, sigma_i: f64, sigma_j: f64) -> f64 {
    let a2 = sigma_i * sigma_i * sigma_j * sigma_j;
    let x = 2.0 * alpha * r * sigma_i * sigma_j;
    if x.abs() >= 1.0 {
        let (sm1, _) = sqrt1p_minus_one(x);
        return -r.signum() * sm1 / (2.0 * alpha * r.abs());
    }
    let (_, s) = sqrt1p_minus_one(x);
    -2.0 * alpha * r * a2 / (s + 1.0)
}

/// Fractional Bethe free energy in moment parameters. With every `α_ij = 1`
/// this is the Gaussian Bethe free energy.
pub fn f_fractional(
    model: &NormalizedModel,
    alphas: &AlphaAssignment,
    moments: &Moments,
) -> Result<FreeEnergyValue> {
    check_m_sigma(model, &moments.m, &moments.sigma)?;
    alphas.check_for(model)?;
    if moments.sigma_pair.len() != model.edges().len() {
        return Err(Error::LengthMismatch {
            expected: model.edges().len(),
            found: moments.sigma_pair.len(),
        });
    }
    let sigma = &moments.sigma;
    let mut edges = 0.0;
    for (e, &(i, j)) in model.edges().iter().enumerate() {
        let sij = moments.sigma_pair[e];
        let a = sigma[i] * sigma[j];
        let rho = sij / a;
        let rho2 = rho * rho;
        if !(rho2 < 1.0 - DOMAIN_GUARD) {
            return Err(Error::Domain(format!(
                "edge ({i}, {j}) has correlation^2 {rho2} at or beyond the boundary"
            )));
        }
        edges += model.coupling(e) * sij - (-rho2).ln_1p() / (2.0 * alphas.get(e));
    }
    Ok(FreeEnergyValue::exact(mean_term(model, &moments.m) + node_term(sigma) + edges))
}

/// Fractional Bethe free energy with every `σ_ij` replaced by its optimum `σ*_ij`.
pub fn f_constrained(
    model: &NormalizedModel,
    alphas: &AlphaAssignment,
    m: &DVector<f64>,
    sigma: &DVector<f64>,
) -> Result<FreeEnergyValue> {
    check_m_sigma(model, m, sigma)?;
    alphas.check_for(model)?;
    Ok(FreeEnergyValue::exact(mean_term(model, m) + constrained_sigma_part(model, alphas, sigma)))
}

/// The σ-dependent part of `f_constrained` (node terms plus edge terms).
pub(crate) fn constrained_sigma_part(
    model: &NormalizedModel,
    alphas: &AlphaAssignment,
    sigma: &DVector<f64>,
) -> f64 {
    let edges: f64 = model
        .edges()
        .iter()
        .enumerate()
        .map(|(e, &(i, j))| constrained_edge_term(alphas.get(e), model.coupling(e), sigma[i], sigma[j]))
        .sum();
    node_term(sigma) + edges
}

/// `F_MF − ½σᵀ|R|σ`, the α → ∞ limit and lower bound of every `F^c_α`.
pub fn f_lower_bound(
    model: &NormalizedModel,
    m: &DVector<f64>,
    sigma: &DVector<f64>,
) -> Result<FreeEnergyValue> {
    check_m_sigma(model, m, sigma)?;
    let coupling: f64 = model
        .edges()
        .iter()
        .enumerate()
        .map(|(e, &(i, j))| model.coupling(e).abs() * sigma[i] * sigma[j])
        .sum();
    Ok(FreeEnergyValue::exact(mean_term(model, m) + node_term(sigma) - coupling))
}

/// Moments with `σ_ij = σ*_ij(σ)` on every edge.
pub fn constrained_moments(
    model: &NormalizedModel,
    alphas: &AlphaAssignment,
    m: DVector<f64>,
    sigma: DVector<f64>,
) -> Moments {
    let sigma_pair = model
        .edges()
        .iter()
        .enumerate()
        .map(|(e, &(i, j))| sigma_star(alphas.get(e), model.coupling(e), sigma[i], sigma[j]))
        .collect();
    Moments { m, sigma, sigma_pair }
}

/// Analytic gradient of `f_constrained` with respect to `m` and `σ`.
///
/// `∂/∂σ_k = σ_k − 1/σ_k − Σ_{j∈N(k)} (S_kj − 1)/(2α_kj σ_k)`.
pub fn gradient_constrained(
    model: &NormalizedModel,
    alphas: &AlphaAssignment,
    m: &DVector<f64>,
    sigma: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>)> {
    check_m_sigma(model, m, sigma)?;
    alphas.check_for(model)?;
    let grad_m = model.j() * m - model.h();
    let mut grad_sigma = sigma.map(|s| s - 1.0 / s);
    for (e, &(i, j)) in model.edges().iter().enumerate() {
        let alpha = alphas.get(e);
        let (sm1, _) = sqrt1p_minus_one(2.0 * alpha * model.coupling(e) * sigma[i] * sigma[j]);
        let w = sm1 / (2.0 * alpha);
        grad_sigma[i] -= w / sigma[i];
        grad_sigma[j] -= w / sigma[j];
    }
    Ok((grad_m, grad_sigma))
}

/// `m* = J⁻¹h`.
pub fn optimal_mean(model: &NormalizedModel) -> Result<DVector<f64>> {
    let chol = Cholesky::new(model.j().clone())
        .ok_or_else(|| Error::InvalidModel("J is not positive definite".into()))?;
    Ok(chol.solve(model.h()))
}

pub(crate) fn check_direction(direction: &DVector<f64>, n: usize) -> Result<()> {
    if direction.len() != n {
        return Err(Error::LengthMismatch { expected: n, found: direction.len() });
    }
    if direction.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
        return Err(Error::Domain("ray direction must be entrywise positive".into()));
    }
    Ok(())
}

pub(crate) fn check_grid(t_grid: &[f64]) -> Result<()> {
    if t_grid.is_empty() {
        return Err(Error::Domain("empty t grid".into()));
    }
    if t_grid.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
        return Err(Error::Domain("t grid must be positive".into()));
    }
    if t_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Domain("t grid must be strictly increasing".into()));
    }
    Ok(())
}

/// `f_constrained` at `m = J⁻¹h`, `σ = t·direction` for every `t` in the grid.
pub fn ray_scan(
    model: &NormalizedModel,
    alphas: &AlphaAssignment,
    direction: &DVector<f64>,
    t_grid: &[f64],
) -> Result<Vec<(f64, f64)>> {
    check_direction(direction, model.n())?;
    check_grid(t_grid)?;
    alphas.check_for(model)?;
    let m = optimal_mean(model)?;
    t_grid
        .par_iter()
        .map(|&t| {
            let sigma = direction * t;
            f_constrained(model, alphas, &m, &sigma).map(|v| (t, v.value))
        })
        .collect()
}

/// `count` log-spaced points from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|k| {
            if k == 0 {
                lo
            } else if k == count - 1 {
                hi
            } else {
                (a + (b - a) * k as f64 / (count - 1) as f64).exp()
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_k_regular, normalize, random_model, GaussianModel};
    use nalgebra::{dmatrix, dvector, DMatrix};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn norm(model: &GaussianModel) -> NormalizedModel {
        normalize(model).unwrap()
    }

    fn random_point(rng: &mut ChaCha8Rng, n: usize) -> (DVector<f64>, DVector<f64>) {
        let m = DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0));
        let sigma = DVector::from_fn(n, |_, _| rng.random_range(0.2..3.0));
        (m, sigma)
    }

    #[test]
    fn mean_field_minimum_and_expansion() {
        let model = norm(&random_model(6, 0.6, 0.8, 11).unwrap());
        let m_star = optimal_mean(&model).unwrap();
        let one = DVector::from_element(6, 1.0);
        let f_star = f_mean_field(&model, &m_star, &one).unwrap().value;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let (m, sigma) = random_point(&mut rng, 6);
            let f = f_mean_field(&model, &m, &sigma).unwrap().value;
            let dm = &m - &m_star;
            let expected = 0.5 * dm.dot(&(model.j() * &dm))
                + sigma.iter().map(|&s| 0.5 * s * s - s.ln() - 0.5).sum::<f64>();
            assert!((f - f_star - expected).abs() < 1e-10 * (1.0 + f.abs()));
            assert!(f >= f_star);
        }
    }

    #[test]
    fn mean_field_stationary_at_known_minimizer() {
        let model = norm(&GaussianModel::new(DVector::zeros(3), DMatrix::identity(3, 3)).unwrap());
        let m = DVector::zeros(3);
        let one = DVector::from_element(3, 1.0);
        let f0 = f_mean_field(&model, &m, &one).unwrap().value;
        let h = 1e-5;
        for k in 0..3 {
            for sign in [-1.0, 1.0] {
                let mut s = one.clone();
                s[k] += sign * 1e-3;
                assert!(f_mean_field(&model, &m, &s).unwrap().value > f0);
                let mut mm = m.clone();
                mm[k] += sign * 1e-3;
                assert!(f_mean_field(&model, &mm, &one).unwrap().value > f0);
            }
            let mut sp = one.clone();
            sp[k] += h;
            let mut sn = one.clone();
            sn[k] -= h;
            let fd = (f_mean_field(&model, &m, &sp).unwrap().value
                - f_mean_field(&model, &m, &sn).unwrap().value)
                / (2.0 * h);
            assert!(fd.abs() < 1e-8);
        }
        assert!(f_mean_field(&model, &m, &dvector![1.0, 0.0, 1.0]).is_err());
    }

    #[test]
    fn sigma_star_hand_values() {
        assert_eq!(sigma_star(1.0, 0.0, 1.3, 0.7), 0.0);
        assert!((sigma_star(1.0, 2.0 / 3.0, 1.0, 1.0) + 0.5).abs() < 1e-15);
        assert!((sigma_star(1.0, -2.0 / 3.0, 1.0, 1.0) - 0.5).abs() < 1e-15);
        // Small couplings follow the series −αRσ_i²σ_j².
        let s = sigma_star(0.5, 1e-9, 2.0, 3.0);
        assert!((s + 0.5 * 1e-9 * 36.0).abs() < 1e-22);
    }

    #[test]
    fn sigma_star_is_stationary_for_edge_term() {
        // d/ds [R s − (1/2α) log(1 − s²/a²)] = R + s/(α(a² − s²)).
        let (alpha, r, si, sj) = (1.0, 2.0 / 3.0, 1.0, 1.0);
        let s = sigma_star(alpha, r, si, sj);
        let a2: f64 = si * si * sj * sj;
        let edge = |s: f64| r * s - (1.0 - s * s / a2).ln() / (2.0 * alpha);
        let h = 1e-6;
        assert!(((edge(s + h) - edge(s - h)) / (2.0 * h)).abs() < 1e-8);
    }

    #[test]
    fn sigma_star_strictly_inside() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let alpha = 10f64.powf(rng.random_range(-3.0..3.0));
            let r = rng.random_range(-2.0..2.0);
            let si = 10f64.powf(rng.random_range(-2.0..2.0));
            let sj = 10f64.powf(rng.random_range(-2.0..2.0));
            let s = sigma_star(alpha, r, si, sj);
            assert!(s.abs() < si * sj);
            assert!(s * r <= 0.0);
        }
    }

    #[test]
    fn zero_pair_covariance_reduces_to_mean_field() {
        let model = norm(&random_model(7, 0.5, 1.1, 2).unwrap());
        let alphas = AlphaAssignment::for_model(&model, 0.7).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let (m, sigma) = random_point(&mut rng, 7);
            let moments = Moments { m: m.clone(), sigma: sigma.clone(), sigma_pair: vec![0.0; model.edges().len()] };
            assert_eq!(
                f_fractional(&model, &alphas, &moments).unwrap().value,
                f_mean_field(&model, &m, &sigma).unwrap().value
            );
        }
    }

    #[test]
    fn fractional_rejects_boundary() {
        let model = norm(&GaussianModel::new(dvector![0.0, 0.0], dmatrix![1.0, 0.5; 0.5, 1.0]).unwrap());
        let alphas = AlphaAssignment::for_model(&model, 1.0).unwrap();
        let moments = Moments { m: dvector![0.0, 0.0], sigma: dvector![1.0, 2.0], sigma_pair: vec![2.0] };
        assert!(matches!(f_fractional(&model, &alphas, &moments), Err(Error::Domain(_))));
        let moments = Moments { sigma_pair: vec![-2.5], ..moments };
        assert!(f_fractional(&model, &alphas, &moments).is_err());
    }

    #[test]
    fn fractional_monotone_in_alpha_for_fixed_moments() {
        let model = norm(&random_model(6, 0.6, 0.9, 8).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let (m, sigma) = random_point(&mut rng, 6);
            let sigma_pair = model
                .edges()
                .iter()
                .map(|&(i, j)| rng.random_range(-0.9..0.9) * sigma[i] * sigma[j])
                .collect();
            let moments = Moments { m, sigma, sigma_pair };
            let mut prev = f64::INFINITY;
            for alpha in log_grid(1e-2, 1e2, 15) {
                let alphas = AlphaAssignment::for_model(&model, alpha).unwrap();
                let v = f_fractional(&model, &alphas, &moments).unwrap().value;
                assert!(v <= prev + 1e-12);
                prev = v;
            }
        }
    }

    #[test]
    fn bethe_on_tree_is_exact_free_energy() {
        let model = GaussianModel::new(dvector![0.7, -0.4], dmatrix![1.0, -0.6; -0.6, 1.0]).unwrap();
        let norm_model = norm(&model);
        let exact = crate::exact::exact_marginals(&model).unwrap();
        let moments = Moments {
            m: exact.m.clone(),
            sigma: exact.sigma.clone(),
            sigma_pair: vec![exact.pair_cov(0, 1)],
        };
        let alphas = AlphaAssignment::for_model(&norm_model, 1.0).unwrap();
        let fb = f_fractional(&norm_model, &alphas, &moments).unwrap().value;
        assert!((fb - exact.neg_log_partition(&model)).abs() < 1e-12);
    }

    #[test]
    fn constrained_matches_fractional_at_optimum() {
        let model = norm(&random_model(8, 0.5, 1.1, 4).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..200 {
            let alpha = 10f64.powf(rng.random_range(-2.0..2.0));
            let alphas = AlphaAssignment::for_model(&model, alpha).unwrap();
            let (m, sigma) = random_point(&mut rng, 8);
            let fc = f_constrained(&model, &alphas, &m, &sigma).unwrap().value;
            let moments = constrained_moments(&model, &alphas, m, sigma);
            let ff = f_fractional(&model, &alphas, &moments).unwrap().value;
            assert!((fc - ff).abs() < 1e-10 * (1.0 + fc.abs()), "{fc} {ff}");
        }
    }

    #[test]
    fn constrained_without_edges_is_mean_field() {
        let model = norm(&GaussianModel::new(dvector![1.0, 2.0], DMatrix::identity(2, 2)).unwrap());
        let alphas = AlphaAssignment::for_model(&model, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let (m, sigma) = random_point(&mut rng, 2);
            assert_eq!(
                f_constrained(&model, &alphas, &m, &sigma).unwrap().value,
                f_mean_field(&model, &m, &sigma).unwrap().value
            );
            let (_, g) = gradient_constrained(&model, &alphas, &m, &sigma).unwrap();
            for k in 0..2 {
                assert!((g[k] - (sigma[k] - 1.0 / sigma[k])).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn constrained_non_increasing_in_alpha() {
        let model = norm(&make_k_regular(8, 4, 0.27, DVector::from_element(8, 0.3)).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..50 {
            let (m, sigma) = random_point(&mut rng, 8);
            let mut prev = f64::INFINITY;
            for alpha in log_grid(1e-2, 1e2, 40) {
                let alphas = AlphaAssignment::for_model(&model, alpha).unwrap();
                let v = f_constrained(&model, &alphas, &m, &sigma).unwrap().value;
                assert!(v <= prev + 1e-12);
                prev = v;
            }
        }
    }

    #[test]
    fn limits_in_alpha() {
        let model = norm(&random_model(6, 0.6, 1.1, 21).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..20 {
            let (m, sigma) = random_point(&mut rng, 6);
            let mf = f_mean_field(&model, &m, &sigma).unwrap().value;
            let lb = f_lower_bound(&model, &m, &sigma).unwrap().value;
            // Gap to the lower bound shrinks like log(α)/α, gap to mean field like α.
            let big = |a: f64| {
                let al = AlphaAssignment::for_model(&model, a).unwrap();
                f_constrained(&model, &al, &m, &sigma).unwrap().value - lb
            };
            let small = |a: f64| {
                let al = AlphaAssignment::for_model(&model, a).unwrap();
                mf - f_constrained(&model, &al, &m, &sigma).unwrap().value
            };
            assert!(big(1e4) > 0.0 && big(1e4) < 1e-2);
            assert!(big(1e6) < big(1e4) / 50.0);
            assert!(small(1e-4) > 0.0);
            let ratio = small(1e-4) / small(1e-5);
            assert!((ratio - 10.0).abs() < 0.01, "ratio {ratio}");
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let model = norm(&random_model(7, 0.5, 1.1, 30).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for _ in 0..30 {
            let alphas = AlphaAssignment::for_model(&model, 10f64.powf(rng.random_range(-1.0..1.0))).unwrap();
            let (m, sigma) = random_point(&mut rng, 7);
            let (gm, gs) = gradient_constrained(&model, &alphas, &m, &sigma).unwrap();
            for k in 0..7 {
                let h = 1e-5 * (1.0 + sigma[k].abs());
                let mut sp = sigma.clone();
                sp[k] += h;
                let mut sn = sigma.clone();
                sn[k] -= h;
                let fd = (f_constrained(&model, &alphas, &m, &sp).unwrap().value
                    - f_constrained(&model, &alphas, &m, &sn).unwrap().value)
                    / (2.0 * h);
                assert!((fd - gs[k]).abs() <= 1e-6 * gs[k].abs().max(1.0));
                let mut mp = m.clone();
                mp[k] += h;
                let mut mn = m.clone();
                mn[k] -= h;
                let fd = (f_constrained(&model, &alphas, &mp, &sigma).unwrap().value
                    - f_constrained(&model, &alphas, &mn, &sigma).unwrap().value)
                    / (2.0 * h);
                assert!((fd - gm[k]).abs() <= 1e-6 * gm[k].abs().max(1.0));
            }
        }
    }

    #[test]
    fn ray_scan_direction_and_grid_checks() {
        let model = norm(&make_k_regular(8, 4, 0.2, DVector::zeros(8)).unwrap());
        let alphas = AlphaAssignment::for_model(&model, 1.0).unwrap();
        let one = DVector::from_element(8, 1.0);
        let mut bad = one.clone();
        bad[3] = 0.0;
        assert!(ray_scan(&model, &alphas, &bad, &[1.0]).is_err());
        assert!(ray_scan(&model, &alphas, &one, &[1.0, 0.5]).is_err());
        assert!(ray_scan(&model, &alphas, &one, &[]).is_err());
        let grid = log_grid(0.1, 1000.0, 50);
        let scan = ray_scan(&model, &alphas, &one, &grid).unwrap();
        assert_eq!(scan.len(), 50);
        assert!(scan.windows(2).all(|w| w[0].0 < w[1].0));
        // Bounded: eventually increasing.
        assert!(scan[49].1 > scan[40].1);
    }

    #[test]
    fn log_grid_endpoints() {
        let g = log_grid(1e-2, 1e2, 25);
        assert_eq!(g.len(), 25);
        assert_eq!(g[0], 1e-2);
        assert_eq!(g[24], 1e2);
        assert!((g[12] - 1.0).abs() < 1e-12);
    }
}
