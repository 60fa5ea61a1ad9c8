//! Composite dynamics, Perron-Frobenius data and primitivity.

use nalgebra::{DMatrix, DVector, Schur, SVD};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{self, RisModel};
use crate::qlinalg::{
    self, c, devectorize, hermitian_part, identity, trace, trace_prod, vectorize, Operator,
    Superoperator, C64,
};

pub const POWER_MAX_ITER: usize = 100_000;
pub const POWER_TOL: f64 = 1e-12;
/// Dense gap below which the peripheral spectrum is declared degenerate.
pub const GAP_TOL: f64 = 1e-10;
/// Relative rank tolerance of the Kraus-span primitivity test.
pub const PRIMITIVITY_RANK_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CompositeKind {
    Cyclic,
    ReversedCyclic,
    Random,
}

impl CompositeKind {
    pub const ALL: [CompositeKind; 3] = [
        CompositeKind::Cyclic,
        CompositeKind::ReversedCyclic,
        CompositeKind::Random,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            CompositeKind::Cyclic => "cyclic",
            CompositeKind::ReversedCyclic => "reversed_cyclic",
            CompositeKind::Random => "random",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "cyclic" => Some(CompositeKind::Cyclic),
            "reversed_cyclic" => Some(CompositeKind::ReversedCyclic),
            "random" => Some(CompositeKind::Random),
            _ => None,
        }
    }

    /// Order in which probes act within one period (first entry acts first).
    /// The random kind has no order; it returns the identity order.
    pub fn order(&self, m: usize) -> Vec<usize> {
        match self {
            CompositeKind::ReversedCyclic => (0..m).rev().collect(),
            _ => (0..m).collect(),
        }
    }

    /// τ_cy = T, τ_ra = mean interaction duration (T/M for the uniform law).
    pub fn timescale(&self, model: &RisModel) -> f64 {
        match self {
            CompositeKind::Random => model
                .weights()
                .iter()
                .zip(&model.probes)
                .map(|(p, pr)| p * pr.tau)
                .sum(),
            _ => model.total_time(),
        }
    }

    pub fn is_cyclic(&self) -> bool {
        !matches!(self, CompositeKind::Random)
    }
}

/// Period map for the given per-probe maps: L_{o_last}∘…∘L_{o_0}, or Σ p_j L_j.
pub fn combine(maps: &[Superoperator], kind: CompositeKind, weights: &[f64]) -> Result<Superoperator> {
    match kind {
        CompositeKind::Random => {
            let parts: Vec<(f64, &Superoperator)> = weights.iter().cloned().zip(maps.iter()).collect();
            Superoperator::weighted_sum(&parts)
        }
        _ => {
            let order = kind.order(maps.len());
            let mut acc = maps[order[0]].clone();
            for &j in &order[1..] {
                acc = maps[j].compose(&acc)?;
            }
            Ok(acc)
        }
    }
}

pub fn composite_map(model: &RisModel, kind: CompositeKind) -> Result<Superoperator> {
    let maps = (0..model.m())
        .map(|j| model::reduced_map(model, j))
        .collect::<Result<Vec<_>>>()?;
    combine(&maps, kind, &model.weights())?.verify_cptp(model::CPTP_TOL)
}

/// Schrödinger-side composite of the deformed maps; its dual is
/// L_1^[α]*∘…∘L_M^[α]* for the cyclic kind.
pub fn composite_deformed(model: &RisModel, kind: CompositeKind, alpha: &[f64]) -> Result<Superoperator> {
    if alpha.len() != model.m() {
        return Err(Error::InvalidInput(format!(
            "alpha has length {}, model has {} probes",
            alpha.len(),
            model.m()
        )));
    }
    let maps = (0..model.m())
        .map(|j| model::deformed_map(model, j, alpha[j]))
        .collect::<Result<Vec<_>>>()?;
    combine(&maps, kind, &model.weights())
}

#[derive(Clone, Debug)]
pub struct DenseSpectrum {
    /// Eigenvalues sorted by decreasing modulus.
    pub eigenvalues: Vec<C64>,
    pub radius: f64,
    /// radius − second largest modulus.
    pub gap: f64,
}

pub fn dense_spectrum(s: &Superoperator) -> DenseSpectrum {
    let mut ev: Vec<C64> = match Schur::new(s.matrix.clone()).eigenvalues() {
        Some(v) => v.iter().cloned().collect(),
        None => s.matrix.clone().eigenvalues().map(|v| v.iter().cloned().collect()).unwrap_or_default(),
    };
    ev.sort_by(|a, b| b.norm().total_cmp(&a.norm()));
    let radius = ev.first().map(|z| z.norm()).unwrap_or(0.0);
    let second = ev.get(1).map(|z| z.norm()).unwrap_or(0.0);
    DenseSpectrum {
        eigenvalues: ev,
        radius,
        gap: radius - second,
    }
}

#[derive(Clone, Debug)]
pub struct SpectralData {
    pub radius: f64,
    pub gap: f64,
    /// Positive definite, trace one.
    pub right: Operator,
    /// Positive definite, Tr(left·right) = 1.
    pub left: Operator,
    pub iterations: usize,
}

/// Dominant eigenvector of `m` by normalized power iteration from `start`.
fn power_iterate(m: &DMatrix<C64>, start: DVector<C64>, d: usize, max_iter: usize, tol: f64) -> Result<(DVector<C64>, usize)> {
    let norm_by_trace = |v: DVector<C64>| {
        let t = trace(&devectorize(&v, d));
        // positive eigenvectors have nonzero trace; fall back to the 2-norm
        if t.norm() > 1e-300 {
            v / t
        } else {
            let n = v.norm();
            v / c(n)
        }
    };
    let mut x = norm_by_trace(start);
    for it in 1..=max_iter {
        let y = norm_by_trace(m * &x);
        let diff = (&y - &x).norm() / y.norm().max(1e-300);
        x = y;
        if diff <= tol {
            return Ok((x, it));
        }
    }
    Err(Error::NonPrimitive(format!(
        "power iteration did not converge in {max_iter} iterations"
    )))
}

fn min_eigenvalue(a: &Operator) -> f64 {
    qlinalg::hermitian_spectral_decomposition_with(&hermitian_part(a), f64::INFINITY, 0.0)
        .map(|d| d.eigenvalues[0])
        .unwrap_or(f64::NEG_INFINITY)
}

pub fn spectral_data(s: &Superoperator) -> Result<SpectralData> {
    spectral_data_with(s, POWER_MAX_ITER, POWER_TOL, GAP_TOL)
}

pub fn spectral_data_with(s: &Superoperator, max_iter: usize, tol: f64, gap_tol: f64) -> Result<SpectralData> {
    let d = s.dim;
    let dense = dense_spectrum(s);
    let (rv, it_r) = power_iterate(&s.matrix, vectorize(&identity(d)), d, max_iter, tol)?;
    let dual = s.dual();
    let (lv, it_l) = power_iterate(&dual.matrix, vectorize(&(identity(d) / c(d as f64))), d, max_iter, tol)?;
    if dense.gap <= gap_tol {
        return Err(Error::NonPrimitive(format!(
            "degenerate peripheral spectrum (radius {:.6}, gap {:.3e})",
            dense.radius, dense.gap
        )));
    }
    let right = hermitian_part(&devectorize(&rv, d));
    let mut left = hermitian_part(&devectorize(&lv, d));
    let num = trace_prod(&left, &s.apply(&right));
    let den = trace_prod(&left, &right);
    let radius = (num / den).re;
    left /= c(den.re);
    if min_eigenvalue(&right) <= 0.0 || min_eigenvalue(&left) <= 0.0 {
        return Err(Error::NonPrimitive("Perron eigenvectors are not positive definite".into()));
    }
    if (radius - dense.radius).abs() > 1e-8 * dense.radius.max(1e-300) {
        return Err(Error::NonPrimitive(format!(
            "power-iteration radius {radius} disagrees with dense radius {}",
            dense.radius
        )));
    }
    Ok(SpectralData {
        radius,
        gap: dense.gap,
        right,
        left,
        iterations: it_r.max(it_l),
    })
}

/// Unique invariant state of a primitive CPTP map.
pub fn invariant_state(s: &Superoperator) -> Result<Operator> {
    Ok(spectral_data(s)?.right)
}

/// Kernel of (matrix − I) by SVD, normalized to trace one.
pub fn invariant_state_dense(s: &Superoperator) -> Result<Operator> {
    let n = s.dim * s.dim;
    let a = &s.matrix - DMatrix::<C64>::identity(n, n);
    let svd = SVD::new(a, false, true);
    let vt = svd.v_t.ok_or_else(|| Error::SingularSystem("SVD failed".into()))?;
    let (k, smin) = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(k, v)| (k, *v))
        .unwrap();
    if smin > 1e-8 {
        return Err(Error::NonPrimitive(format!("no fixed point (smallest singular value {smin:.3e})")));
    }
    let v = vt.row(k).adjoint();
    let rho = devectorize(&v, s.dim);
    let t = trace(&rho);
    Ok(hermitian_part(&(rho / t)))
}

pub fn is_primitive(s: &Superoperator) -> bool {
    is_primitive_with(s, PRIMITIVITY_RANK_TOL)
}

/// Orthonormal basis (as vectors) of the span of `vs`; residual norms at or
/// below `cutoff` count as linearly dependent.
fn orthonormal_span(vs: impl IntoIterator<Item = DVector<C64>>, cutoff: f64) -> Vec<DVector<C64>> {
    let mut basis: Vec<DVector<C64>> = Vec::new();
    for v in vs {
        let mut w = v;
        for _ in 0..2 {
            for b in &basis {
                let p = b.dotc(&w);
                w -= b * p;
            }
        }
        let n = w.norm();
        if n > cutoff {
            basis.push(w / c(n));
        }
    }
    basis
}

/// Span criterion: some product length n has span{V_{i1}…V_{in}} = B(H).
/// Iterates S_{n+1} = span{V_i X : X ∈ S_n}; stops at full span, or when the
/// sequence of subspaces revisits an earlier one (it is then periodic).
pub fn is_primitive_with(s: &Superoperator, tol: f64) -> bool {
    let d = s.dim;
    let full = d * d;
    let ks: Vec<Operator> = s
        .kraus_list()
        .into_iter()
        .filter(|(w, _)| *w > 0.0)
        .map(|(w, v)| v * c(w.sqrt()))
        .collect();
    if ks.is_empty() {
        return false;
    }
    let projector = |b: &[DVector<C64>]| {
        let mut p = DMatrix::<C64>::zeros(full, full);
        for v in b {
            p += v * v.adjoint();
        }
        p
    };
    // the largest Kraus norm sets the scale of every product step
    let scale = ks.iter().map(|k| k.norm()).fold(0.0, f64::max);
    let cutoff = tol * scale;
    let mut current = orthonormal_span(ks.iter().map(vectorize), cutoff);
    let mut seen: Vec<DMatrix<C64>> = Vec::new();
    // (d²)² steps bound any periodic orbit search far beyond what is needed
    for _ in 0..full * full + 1 {
        if current.len() == full {
            return true;
        }
        let p = projector(&current);
        if seen.iter().any(|q| (q - &p).iter().all(|z| z.norm() < 1e-8)) {
            return false;
        }
        seen.push(p);
        let next = ks.iter().flat_map(|k| current.iter().map(move |x| vectorize(&(k * devectorize(x, d)))));
        current = orthonormal_span(next.collect::<Vec<_>>(), cutoff);
        if current.is_empty() {
            return false;
        }
    }
    false
}

/// (1/N) Σ_n Tr(L_{j_{n−1}}∘…∘L_{j_1}(ρ₀) A(j_n)) along a seeded i.i.d. uniform sequence.
pub fn ergodic_average(model: &RisModel, observables: &[Operator], n_steps: usize, seed: u64, rho0: &Operator) -> Result<f64> {
    if observables.len() != model.m() {
        return Err(Error::InvalidInput("one observable per probe is required".into()));
    }
    let maps = (0..model.m())
        .map(|j| model::reduced_map(model, j))
        .collect::<Result<Vec<_>>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rho = rho0.clone();
    let mut acc = 0.0;
    for _ in 0..n_steps {
        let j = rng.gen_range(0..model.m());
        acc += trace_prod(&rho, &observables[j]).re;
        rho = maps[j].apply(&rho);
    }
    Ok(acc / n_steps as f64)
}
