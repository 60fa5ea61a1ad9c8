//! Kinetic coefficients: finite differences of steady fluxes and the
//! Green-Kubo series, plus Onsager reciprocity residuals.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{self, RisModel};
use crate::qlinalg::{self, c, trace_prod, vectorize, Operator, Superoperator, C64};
use crate::semigroup::{self, CompositeKind, GAP_TOL};
use crate::thermo::{self, apply_duals};

pub const FD_STEP: f64 = 1e-4;
/// A truncated series stops once the propagated observable is this small.
pub const TRUNCATION_TOL: f64 = 1e-14;
pub const TRUNCATION_MAX_TERMS: usize = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    FiniteDifference,
    GreenKubo,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::FiniteDifference => "finite_difference",
            Method::GreenKubo => "green_kubo",
        }
    }
}

/// Green-Kubo bookkeeping: L = series + cross + diag(self_term).
#[derive(Clone, Debug)]
pub struct GkParts {
    pub series: Vec<Vec<f64>>,
    pub cross: Vec<Vec<f64>>,
    pub self_term: Vec<f64>,
    /// Series summed term by term instead of by the resolvent solve.
    pub series_truncated: Vec<Vec<f64>>,
    pub truncation_terms: usize,
    /// Σ_n ρ₊(L♯^{*n}(Φ_j^♯) Φ^♯_{k,rev}) times the period prefactor.
    pub series_condensed: Vec<Vec<f64>>,
}

#[derive(Clone, Debug)]
pub struct KineticMatrix {
    pub kind: CompositeKind,
    /// values[j][k] = L_jk.
    pub values: Vec<Vec<f64>>,
    pub method: Method,
    pub fd_step: Option<f64>,
    /// Richardson error estimate per entry (finite differences only).
    pub fd_error: Option<Vec<Vec<f64>>>,
    /// Plain central differences at step h and h/2 (finite differences only).
    pub fd_raw: Option<(Vec<Vec<f64>>, Vec<Vec<f64>>)>,
    pub gk_parts: Option<GkParts>,
}

fn steady_values(model: &RisModel, kind: CompositeKind, betas: &[f64]) -> Result<Vec<f64>> {
    Ok(thermo::steady_fluxes(&model.with_betas(betas)?, kind)?.steady_values)
}

/// L_jk = ∂_{ζ_k} ρ₊,ζ(Φ^♯_{j,ζ}) at ζ = 0 by Richardson-extrapolated
/// central differences with steps h and h/2.
pub fn kinetic_fd(model: &RisModel, kind: CompositeKind, step: f64) -> Result<KineticMatrix> {
    let m = model.m();
    let b0 = model.beta_ref;
    let columns: Vec<Result<(Vec<f64>, Vec<f64>)>> = (0..m)
        .into_par_iter()
        .map(|k| {
            let diff = |h: f64| -> Result<Vec<f64>> {
                // ζ_k = ±h ⇔ β_k = β_ref ∓ h
                let mut plus = vec![b0; m];
                plus[k] = b0 - h;
                let mut minus = vec![b0; m];
                minus[k] = b0 + h;
                let fp = steady_values(model, kind, &plus)?;
                let fm = steady_values(model, kind, &minus)?;
                Ok(fp.iter().zip(&fm).map(|(a, b)| (a - b) / (2.0 * h)).collect())
            };
            Ok((diff(step)?, diff(step / 2.0)?))
        })
        .collect();
    let mut values = vec![vec![0.0; m]; m];
    let mut err = vec![vec![0.0; m]; m];
    let mut d1 = vec![vec![0.0; m]; m];
    let mut d2 = vec![vec![0.0; m]; m];
    for (k, col) in columns.into_iter().enumerate() {
        let (a, b) = col?;
        for j in 0..m {
            let r = (4.0 * b[j] - a[j]) / 3.0;
            values[j][k] = r;
            err[j][k] = (r - b[j]).abs();
            d1[j][k] = a[j];
            d2[j][k] = b[j];
        }
    }
    Ok(KineticMatrix {
        kind,
        values,
        method: Method::FiniteDifference,
        fd_step: Some(step),
        fd_error: Some(err),
        fd_raw: Some((d1, d2)),
        gk_parts: None,
    })
}

/// Y with (Id − D + P⁰)Y = X − ρ(X)1, P⁰(Z) = ρ(Z)1; equals Σ_n D^n(X − ρ(X)1)
/// when D is a primitive unital map with invariant state ρ.
pub fn resolvent_solve(dual: &Superoperator, rho: &Operator, x: &Operator) -> Result<Operator> {
    let d = dual.dim;
    let n = d * d;
    let one = vectorize(&qlinalg::identity(d));
    let rho_t = vectorize(&rho.transpose());
    let p = &one * rho_t.transpose();
    let a = DMatrix::<C64>::identity(n, n) - &dual.matrix + p;
    let centered = x - qlinalg::identity(d) * trace_prod(rho, x);
    let b = vectorize(&centered);
    let y = a
        .clone()
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::SingularSystem("resolvent matrix is singular".into()))?;
    let resid = (&a * &y - &b).norm();
    if !resid.is_finite() || resid > 1e-8 * (1.0 + b.norm()) {
        return Err(Error::SingularSystem(format!("resolvent residual {resid:.3e}")));
    }
    Ok(qlinalg::devectorize(&y, d))
}

/// Σ_n D^n(X − ρ(X)1) summed until terms fall below `TRUNCATION_TOL`.
pub fn truncated_series(dual: &Superoperator, rho: &Operator, x: &Operator) -> Result<(Operator, usize)> {
    let d = dual.dim;
    let center = |y: Operator| {
        let shift = trace_prod(rho, &y);
        y - qlinalg::identity(d) * shift
    };
    let mut term = center(x.clone());
    let mut acc = term.clone();
    for n in 1..=TRUNCATION_MAX_TERMS {
        // re-centering keeps rounding in ρ from feeding the fixed-point direction
        term = center(dual.apply(&term));
        if qlinalg::max_abs(&term) < TRUNCATION_TOL {
            return Ok((acc, n));
        }
        acc += &term;
    }
    Err(Error::SingularSystem("truncated series did not converge".into()))
}

/// Equilibrium data shared by the Green-Kubo and moment formulas.
pub struct EquilibriumData {
    pub model: RisModel,
    pub kind: CompositeKind,
    pub rho: Operator,
    pub h_prime: Operator,
    pub duals: Vec<Superoperator>,
    pub composite_dual: Superoperator,
    pub order: Vec<usize>,
    pub phi: Vec<Operator>,
    pub phi_sharp: Vec<Operator>,
    pub phi_rev: Vec<Operator>,
    pub timescale: f64,
}

impl EquilibriumData {
    /// Built at ζ = 0 unless `at_model_temperatures` is set.
    pub fn new(model: &RisModel, kind: CompositeKind, at_model_temperatures: bool) -> Result<Self> {
        let h_prime = thermo::effective_hamiltonian(model)?.h_prime;
        let model = if at_model_temperatures {
            model.clone()
        } else {
            model.equilibrium()
        };
        let composite = semigroup::composite_map(&model, kind)?;
        let gap = semigroup::dense_spectrum(&composite).gap;
        if gap <= GAP_TOL {
            return Err(Error::SingularSystem(format!("spectral gap {gap:.3e} too small")));
        }
        let rho = semigroup::invariant_state(&composite)?;
        let duals = thermo::reduced_duals(&model)?;
        let phi = (0..model.m())
            .map(|j| thermo::flux_observable(&model, j))
            .collect::<Result<Vec<_>>>()?;
        let phi_sharp = (0..model.m())
            .map(|j| thermo::order_flux(&model, kind, j))
            .collect::<Result<Vec<_>>>()?;
        let phi_rev = (0..model.m())
            .map(|j| thermo::reversed_flux(&model, j))
            .collect::<Result<Vec<_>>>()?;
        Ok(EquilibriumData {
            kind,
            rho,
            h_prime,
            composite_dual: composite.dual(),
            order: kind.order(model.m()),
            timescale: kind.timescale(&model),
            duals,
            phi,
            phi_sharp,
            phi_rev,
            model,
        })
    }

    pub fn position(&self, j: usize) -> usize {
        self.order.iter().position(|&o| o == j).unwrap()
    }

    /// Prefactor of ∂_{ζ_k} of the period map: T for cyclic kinds, T·p_k for random.
    pub fn derivative_weight(&self, k: usize) -> f64 {
        let t = self.model.total_time();
        if self.kind.is_cyclic() {
            t
        } else {
            t * self.model.weights()[k]
        }
    }

    /// L*_{o(p(k)+1)}∘…∘L*_{o_last}(X) for cyclic kinds, X for random.
    pub fn after(&self, k: usize, x: &Operator) -> Operator {
        if !self.kind.is_cyclic() {
            return x.clone();
        }
        let p = self.position(k);
        apply_duals(&self.duals, &self.order, p + 1..self.order.len(), x)
    }

    pub fn expect(&self, x: &Operator) -> f64 {
        trace_prod(&self.rho, x).re
    }
}

/// Green-Kubo route at ζ = 0 (requires non-entanglement).
pub fn kinetic_gk(model: &RisModel, kind: CompositeKind) -> Result<KineticMatrix> {
    let eq = EquilibriumData::new(model, kind, false)?;
    let m = eq.model.m();
    let t = eq.model.total_time();
    let mut series = vec![vec![0.0; m]; m];
    let mut truncated = vec![vec![0.0; m]; m];
    let mut condensed = vec![vec![0.0; m]; m];
    let mut cross = vec![vec![0.0; m]; m];
    let mut terms = 0;
    let rev_sharp = (0..m)
        .map(|k| thermo::order_reversed_flux(&eq.model, kind, k))
        .collect::<Result<Vec<_>>>()?;
    for j in 0..m {
        let y = resolvent_solve(&eq.composite_dual, &eq.rho, &eq.phi_sharp[j])?;
        let (yt, n) = truncated_series(&eq.composite_dual, &eq.rho, &eq.phi_sharp[j])?;
        terms = terms.max(n);
        for k in 0..m {
            let w = eq.derivative_weight(k);
            series[j][k] = w * eq.expect(&(eq.after(k, &y) * &eq.phi_rev[k]));
            truncated[j][k] = w * eq.expect(&(eq.after(k, &yt) * &eq.phi_rev[k]));
            let pre = if kind.is_cyclic() { t } else { w };
            condensed[j][k] = pre * eq.expect(&(&y * &rev_sharp[k]));
            if kind.is_cyclic() {
                let (pj, pk) = (eq.position(j), eq.position(k));
                if pj > pk {
                    let x = apply_duals(&eq.duals, &eq.order, pk + 1..pj, &eq.phi[j]);
                    cross[j][k] = t * eq.expect(&(x * &eq.phi_rev[k]));
                }
            }
        }
    }
    let self_term = (0..m)
        .map(|j| {
            let d = thermo::dissipation(&eq.model, j, &eq.h_prime, &eq.h_prime)?;
            Ok(0.5 * eq.expect(&d))
        })
        .collect::<Result<Vec<f64>>>()?;
    let values = (0..m)
        .map(|j| {
            (0..m)
                .map(|k| series[j][k] + cross[j][k] + if j == k { self_term[j] } else { 0.0 })
                .collect()
        })
        .collect();
    Ok(KineticMatrix {
        kind,
        values,
        method: Method::GreenKubo,
        fd_step: None,
        fd_error: None,
        fd_raw: None,
        gk_parts: Some(GkParts {
            series,
            cross,
            self_term,
            series_truncated: truncated,
            truncation_terms: terms,
            series_condensed: condensed,
        }),
    })
}

#[derive(Clone, Debug)]
pub struct OnsagerReport {
    /// max |L^ra_jk − L^ra_kj|.
    pub ra_residual: f64,
    /// max |L^cy_jk − L^rcy_kj|.
    pub cy_rcy_residual: f64,
    /// max |L^cy_jk − L^cy_kj| (not expected to vanish for M ≥ 3).
    pub naive_cy_residual: f64,
    pub tri_residual: f64,
    pub tri_holds: bool,
    pub l_ra: Vec<Vec<f64>>,
    pub l_cy: Vec<Vec<f64>>,
    pub l_rcy: Vec<Vec<f64>>,
}

fn max_pair_residual(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let m = a.len();
    let mut r: f64 = 0.0;
    for j in 0..m {
        for k in 0..m {
            r = r.max((a[j][k] - b[k][j]).abs());
        }
    }
    r
}

/// Onsager residuals from the Green-Kubo route; the reversed-cyclic
/// coefficients come from the cyclic routine on the order-reversed model.
pub fn onsager_report(model: &RisModel) -> Result<OnsagerReport> {
    let tri_residual = model::check_tri_conjugation(model);
    let l_ra = kinetic_gk(model, CompositeKind::Random)?.values;
    let l_cy = kinetic_gk(model, CompositeKind::Cyclic)?.values;
    let m = model.m();
    let rev = kinetic_gk(&model.reversed_order(), CompositeKind::Cyclic)?.values;
    // probe j of the reversed model is probe m−1−j of the original
    let l_rcy: Vec<Vec<f64>> = (0..m)
        .map(|j| (0..m).map(|k| rev[m - 1 - j][m - 1 - k]).collect())
        .collect();
    Ok(OnsagerReport {
        ra_residual: max_pair_residual(&l_ra, &l_ra),
        cy_rcy_residual: max_pair_residual(&l_cy, &l_rcy),
        naive_cy_residual: max_pair_residual(&l_cy, &l_cy),
        tri_holds: tri_residual <= model::TRI_TOL,
        tri_residual,
        l_ra,
        l_cy,
        l_rcy,
    })
}

/// Entrywise agreement within max(abs_tol, rel_tol·|value|).
pub fn entries_agree(a: &[Vec<f64>], b: &[Vec<f64>], abs_tol: f64, rel_tol: f64) -> bool {
    a.iter().flatten().zip(b.iter().flatten()).all(|(x, y)| {
        let scale = x.abs().max(y.abs());
        (x - y).abs() <= abs_tol.max(rel_tol * scale)
    })
}

pub fn to_c(x: f64) -> C64 {
    c(x)
}
