//! Full counting statistics of the entropy increments of the probes.
//!
//! The moment generating function of −S along a probe sequence is
//! r_N(α) = ρ(L_{j1}^[α]*∘…∘L_{jN}^[α]*(1)); its large-time growth rate is the
//! spectral radius of the deformed period map.

mod exact;
mod moments;
mod rate;
mod sampler;

pub use exact::{exact_distribution, mgf_from_distribution, total_variation, FCSDistribution, BRANCH_BUDGET};
pub use moments::{covariance, moments_analytic, moments_fd, Moments};
pub use rate::{rate_function, rate_function_with, RateFunctionResult, RateOptions};
pub use sampler::{empirical_distribution, empirical_mgf, sample_batch, sample_trajectory, Step, TrajectoryRecord};

use crate::error::{Error, Result};
use crate::model::{self, RisModel};
use crate::qlinalg::{trace, Operator};
use crate::semigroup::{self, CompositeKind};

#[derive(Clone, Debug)]
pub struct CGFPoint {
    pub alpha: Vec<f64>,
    /// e^♯(α) = (1/τ♯) log r^♯(α).
    pub value: f64,
    pub radius: f64,
}

/// Exact finite-N MGF of −S along `sequence`, started in ρ₀.
pub fn mgf_finite(model: &RisModel, sequence: &[usize], alpha: &[f64], rho0: &Operator) -> Result<f64> {
    if alpha.len() != model.m() {
        return Err(Error::InvalidInput("alpha must have one entry per probe".into()));
    }
    let maps = (0..model.m())
        .map(|j| model::deformed_map(model, j, alpha[j]))
        .collect::<Result<Vec<_>>>()?;
    let mut rho = rho0.clone();
    for &j in sequence {
        if j >= model.m() {
            return Err(Error::Index { index: j, len: model.m() });
        }
        // Schrödinger side: the first probe of the sequence acts first
        rho = maps[j].apply(&rho);
    }
    Ok(trace(&rho).re)
}

/// r_n^♯(α) over n periods: the repeated period sequence for cyclic kinds, the
/// sequence average (the n-th power of the averaged deformed map) for random.
pub fn mgf_periods(model: &RisModel, kind: CompositeKind, alpha: &[f64], n: usize, rho0: &Operator) -> Result<f64> {
    if kind.is_cyclic() {
        let order = kind.order(model.m());
        let seq: Vec<usize> = (0..n).flat_map(|_| order.iter().copied()).collect();
        return mgf_finite(model, &seq, alpha, rho0);
    }
    let s = semigroup::composite_deformed(model, kind, alpha)?;
    let mut rho = rho0.clone();
    for _ in 0..n {
        rho = s.apply(&rho);
    }
    Ok(trace(&rho).re)
}

/// Spectral radius of the deformed period map.
pub fn deformed_radius(model: &RisModel, kind: CompositeKind, alpha: &[f64]) -> Result<f64> {
    let s = semigroup::composite_deformed(model, kind, alpha)?;
    if alpha.iter().all(|&a| a == 0.0) {
        return Ok(1.0);
    }
    match semigroup::spectral_data(&s) {
        Ok(sd) => Ok(sd.radius),
        Err(e) => {
            // power iteration can stall on a tiny gap; the dense radius is still
            // well defined when the Perron eigenvalue is isolated
            let dense = semigroup::dense_spectrum(&s);
            if dense.gap > semigroup::GAP_TOL && dense.radius > 0.0 {
                Ok(dense.radius)
            } else {
                Err(e)
            }
        }
    }
}

pub fn cgf(model: &RisModel, kind: CompositeKind, alpha: &[f64]) -> Result<CGFPoint> {
    let radius = deformed_radius(model, kind, alpha)?;
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::NonPrimitive(format!("deformed radius {radius} is not positive")));
    }
    Ok(CGFPoint {
        alpha: alpha.to_vec(),
        value: radius.ln() / kind.timescale(model),
        radius,
    })
}

/// Energy CGF ẽ(α) = e(α/β).
pub fn energy_cgf(model: &RisModel, kind: CompositeKind, alpha: &[f64]) -> Result<f64> {
    let scaled = scale_by_inverse_beta(model, alpha)?;
    Ok(cgf(model, kind, &scaled)?.value)
}

/// α_j/β_j componentwise.
pub fn scale_by_inverse_beta(model: &RisModel, alpha: &[f64]) -> Result<Vec<f64>> {
    model
        .probes
        .iter()
        .zip(alpha)
        .map(|(p, a)| {
            if p.beta == 0.0 {
                Err(Error::InvalidInput("energy statistics need nonzero beta".into()))
            } else {
                Ok(a / p.beta)
            }
        })
        .collect()
}

/// β^{-1} = (1/β_1, …, 1/β_M).
pub fn inverse_betas(model: &RisModel) -> Result<Vec<f64>> {
    scale_by_inverse_beta(model, &vec![1.0; model.m()])
}

/// Relative difference |a − b| / max(|a|, |b|).
pub fn rel_diff(a: f64, b: f64) -> f64 {
    let s = a.abs().max(b.abs());
    if s == 0.0 {
        0.0
    } else {
        (a - b).abs() / s
    }
}

#[derive(Clone, Debug)]
pub struct SymmetryReport {
    /// max |r^ra(1−α) − r^ra(α)| (relative).
    pub es_random: f64,
    /// max |r^cy(1−α) − r^rcy(α)| (relative).
    pub es_cyclic: f64,
    /// max |r^♯(α + λβ^{-1}) − r^♯(α)| over kinds and λ ∈ {0.3, −1.1} (relative).
    pub translation: f64,
    pub tri_residual: f64,
    pub ne_residual: f64,
}

pub const TRANSLATION_SHIFTS: [f64; 2] = [0.3, -1.1];

pub fn symmetry_checks(model: &RisModel, alpha_grid: &[Vec<f64>]) -> Result<SymmetryReport> {
    let m = model.m();
    let inv_beta = inverse_betas(model)?;
    let mut es_random: f64 = 0.0;
    let mut es_cyclic: f64 = 0.0;
    let mut translation: f64 = 0.0;
    for alpha in alpha_grid {
        let flipped: Vec<f64> = alpha.iter().map(|a| 1.0 - a).collect();
        let r = |kind, a: &[f64]| deformed_radius(model, kind, a);
        es_random = es_random.max(rel_diff(r(CompositeKind::Random, &flipped)?, r(CompositeKind::Random, alpha)?));
        es_cyclic = es_cyclic.max(rel_diff(
            r(CompositeKind::Cyclic, &flipped)?,
            r(CompositeKind::ReversedCyclic, alpha)?,
        ));
        for kind in CompositeKind::ALL {
            let base = r(kind, alpha)?;
            for lam in TRANSLATION_SHIFTS {
                let shifted: Vec<f64> = (0..m).map(|j| alpha[j] + lam * inv_beta[j]).collect();
                translation = translation.max(rel_diff(r(kind, &shifted)?, base));
            }
        }
    }
    let ne_residual = model::check_ne_model(model, model::NE_TOL)
        .map(|c| c.max_residual)
        .unwrap_or(f64::INFINITY);
    Ok(SymmetryReport {
        es_random,
        es_cyclic,
        translation,
        tri_residual: model::check_tri_conjugation(model),
        ne_residual,
    })
}

/// n×n grid over [lo, hi]² (M = 2) or the diagonal line otherwise.
pub fn alpha_grid(m: usize, n: usize, lo: f64, hi: f64) -> Vec<Vec<f64>> {
    let pts: Vec<f64> = (0..n)
        .map(|i| if n == 1 { lo } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 })
        .collect();
    if m == 2 {
        pts.iter().flat_map(|&a| pts.iter().map(move |&b| vec![a, b])).collect()
    } else {
        pts.iter().map(|&a| vec![a; m]).collect()
    }
}

#[cfg(test)]
mod tests;
