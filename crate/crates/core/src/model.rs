//! Repeated interaction model: probe data, one-interaction maps and the
//! structural checks (KMS, ergodicity, time reversal, non-entanglement).

use crate::error::{Error, Result};
use crate::qlinalg::{
    self, c, frobenius, hermiticity_residual, identity, max_abs, partial_trace,
    propagator, tensor, HermitianDecomposition, Keep, Operator, Superoperator, C64,
};
use crate::semigroup::{self, CompositeKind};

/// Hermiticity tolerance for model matrices.
pub const MODEL_HERMITIAN_TOL: f64 = 1e-12;
/// Trace-preservation / Choi positivity tolerance for built maps.
pub const CPTP_TOL: f64 = 1e-10;
/// Residual below which the non-entanglement condition is taken to hold.
pub const NE_TOL: f64 = 1e-9;
/// Residual below which the basis-conjugation time reversal is accepted.
pub const TRI_TOL: f64 = 1e-12;
/// Equal-temperature offsets at which non-entanglement is sampled.
pub const NE_ZETA_GRID: [f64; 3] = [-0.5, 0.0, 0.5];

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeSpec {
    pub h_env: Operator,
    pub coupling: Operator,
    pub tau: f64,
    pub beta: f64,
}

#[derive(Clone, Debug)]
struct ProbeCache {
    u: Operator,
    env: HermitianDecomposition,
}

#[derive(Clone, Debug)]
pub struct RisModel {
    pub h_sys: Operator,
    pub probes: Vec<ProbeSpec>,
    pub beta_ref: f64,
    /// Non-uniform probe law for the random composite (extension; `None` = uniform).
    pub probe_weights: Option<Vec<f64>>,
    cache: Vec<ProbeCache>,
}

impl RisModel {
    pub fn new(h_sys: Operator, probes: Vec<ProbeSpec>, beta_ref: f64) -> Result<Self> {
        if probes.is_empty() {
            return Err(Error::InvalidInput("model needs at least one probe".into()));
        }
        if h_sys.nrows() != h_sys.ncols() || h_sys.nrows() == 0 {
            return Err(Error::Dimension("h_sys must be a nonempty square matrix".into()));
        }
        let r = hermiticity_residual(&h_sys);
        if r > MODEL_HERMITIAN_TOL {
            return Err(Error::NotHermitian { residual: r });
        }
        if !beta_ref.is_finite() {
            return Err(Error::InvalidInput("beta_ref must be finite".into()));
        }
        let ds = h_sys.nrows();
        let mut cache = Vec::with_capacity(probes.len());
        for (j, p) in probes.iter().enumerate() {
            let de = p.h_env.nrows();
            if p.h_env.ncols() != de || de == 0 {
                return Err(Error::Dimension(format!("probe {j}: h_env must be square")));
            }
            if p.coupling.nrows() != ds * de || p.coupling.ncols() != ds * de {
                return Err(Error::Dimension(format!(
                    "probe {j}: coupling is {}x{}, expected {}",
                    p.coupling.nrows(),
                    p.coupling.ncols(),
                    ds * de
                )));
            }
            for (m, name) in [(&p.h_env, "h_env"), (&p.coupling, "coupling")] {
                let r = hermiticity_residual(m);
                if r > MODEL_HERMITIAN_TOL {
                    return Err(Error::InvalidInput(format!(
                        "probe {j}: {name} is not Hermitian (residual {r:.3e})"
                    )));
                }
            }
            if !(p.tau > 0.0 && p.tau.is_finite()) {
                return Err(Error::InvalidInput(format!("probe {j}: tau must be positive")));
            }
            if !p.beta.is_finite() {
                return Err(Error::InvalidInput(format!("probe {j}: beta must be finite")));
            }
            let h = coupled(&h_sys, p);
            cache.push(ProbeCache {
                u: propagator(&h, p.tau)?,
                env: qlinalg::hermitian_spectral_decomposition(&p.h_env)?,
            });
        }
        Ok(RisModel {
            h_sys,
            probes,
            beta_ref,
            probe_weights: None,
            cache,
        })
    }

    pub fn with_probe_weights(mut self, p: Vec<f64>) -> Result<Self> {
        if p.len() != self.m() {
            return Err(Error::InvalidInput("probe weight vector has wrong length".into()));
        }
        let s: f64 = p.iter().sum();
        if p.iter().any(|&x| !(x >= 0.0)) || (s - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidInput("probe weights must be a probability vector".into()));
        }
        self.probe_weights = Some(p);
        Ok(self)
    }

    pub fn m(&self) -> usize {
        self.probes.len()
    }

    pub fn d_sys(&self) -> usize {
        self.h_sys.nrows()
    }

    pub fn d_env(&self, j: usize) -> usize {
        self.probes[j].h_env.nrows()
    }

    pub fn betas(&self) -> Vec<f64> {
        self.probes.iter().map(|p| p.beta).collect()
    }

    /// Thermal forces ζ_j = β_ref − β_j.
    pub fn zeta(&self) -> Vec<f64> {
        self.probes.iter().map(|p| self.beta_ref - p.beta).collect()
    }

    /// T = Σ τ_j.
    pub fn total_time(&self) -> f64 {
        self.probes.iter().map(|p| p.tau).sum()
    }

    /// Random-kind probe law (uniform unless overridden).
    pub fn weights(&self) -> Vec<f64> {
        self.probe_weights
            .clone()
            .unwrap_or_else(|| vec![1.0 / self.m() as f64; self.m()])
    }

    /// Same interactions, new inverse temperatures (propagators are reused).
    pub fn with_betas(&self, betas: &[f64]) -> Result<Self> {
        if betas.len() != self.m() {
            return Err(Error::InvalidInput("beta vector has wrong length".into()));
        }
        let mut out = self.clone();
        for (p, &b) in out.probes.iter_mut().zip(betas) {
            p.beta = b;
        }
        Ok(out)
    }

    /// All probes at β_ref − ζ.
    pub fn at_equal_offset(&self, zeta: f64) -> Self {
        self.with_betas(&vec![self.beta_ref - zeta; self.m()]).expect("length matches")
    }

    pub fn equilibrium(&self) -> Self {
        self.at_equal_offset(0.0)
    }

    /// Same model with the probe order reversed.
    pub fn reversed_order(&self) -> Self {
        let mut out = self.clone();
        out.probes.reverse();
        out.cache.reverse();
        if let Some(w) = out.probe_weights.as_mut() {
            w.reverse();
        }
        out
    }

    fn check_index(&self, j: usize) -> Result<()> {
        if j >= self.m() {
            return Err(Error::Index { index: j, len: self.m() });
        }
        Ok(())
    }

    /// U_j = e^{−iτ_j H_j}.
    pub fn propagator(&self, j: usize) -> &Operator {
        &self.cache[j].u
    }

    pub fn env_decomposition(&self, j: usize) -> &HermitianDecomposition {
        &self.cache[j].env
    }

    /// Gibbs weights of probe j in the H_E eigenbasis.
    pub fn env_probabilities(&self, j: usize) -> Vec<f64> {
        gibbs_probabilities(&self.cache[j].env.eigenvalues, self.probes[j].beta)
    }

    pub fn env_state(&self, j: usize) -> Operator {
        let p = self.env_probabilities(j);
        self.cache[j].env.apply_fn_indexed(|k| p[k])
    }

    /// ρ_E^a.
    pub fn env_state_pow(&self, j: usize, a: f64) -> Operator {
        let p = self.env_probabilities(j);
        self.cache[j].env.apply_fn_indexed(|k| p[k].powf(a))
    }

    /// Operators V_{kk'} = ⟨φ_{k'}|W|φ_k⟩ for W = U_j or U_j†, indexed [k][k'].
    pub fn kraus_blocks(&self, j: usize, reversed: bool) -> Vec<Vec<Operator>> {
        let ds = self.d_sys();
        let de = self.d_env(j);
        let u = if reversed {
            self.cache[j].u.adjoint()
        } else {
            self.cache[j].u.clone()
        };
        let lift = tensor(&identity(ds), &self.cache[j].env.eigenvectors);
        let w = lift.adjoint() * u * lift;
        (0..de)
            .map(|k| {
                (0..de)
                    .map(|kp| Operator::from_fn(ds, ds, |a, b| w[(a * de + kp, b * de + k)]))
                    .collect()
            })
            .collect()
    }
}

impl HermitianDecomposition {
    /// Σ_k f(k) |φ_k⟩⟨φ_k|.
    pub fn apply_fn_indexed(&self, f: impl Fn(usize) -> f64) -> Operator {
        let n = self.eigenvalues.len();
        let u = &self.eigenvectors;
        let d = Operator::from_diagonal(&nalgebra::DVector::from_iterator(n, (0..n).map(|k| c(f(k)))));
        u * d * u.adjoint()
    }
}

/// Normalized e^{−βλ_k}, shifted for overflow safety.
pub fn gibbs_probabilities(eigenvalues: &[f64], beta: f64) -> Vec<f64> {
    let shift = if beta >= 0.0 {
        eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
    } else {
        eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    };
    let w: Vec<f64> = eigenvalues.iter().map(|&l| (-beta * (l - shift)).exp()).collect();
    let z: f64 = w.iter().sum();
    w.into_iter().map(|x| x / z).collect()
}

fn coupled(h_sys: &Operator, p: &ProbeSpec) -> Operator {
    let ds = h_sys.nrows();
    let de = p.h_env.nrows();
    tensor(h_sys, &identity(de)) + tensor(&identity(ds), &p.h_env) + &p.coupling
}

/// H_j = H_S⊗1 + 1⊗H_E + V_j.
pub fn coupled_hamiltonian(model: &RisModel, j: usize) -> Result<Operator> {
    model.check_index(j)?;
    Ok(coupled(&model.h_sys, &model.probes[j]))
}

fn kraus_map(model: &RisModel, j: usize, reversed: bool, alpha: f64) -> Result<Superoperator> {
    model.check_index(j)?;
    let p = model.env_probabilities(j);
    let blocks = model.kraus_blocks(j, reversed);
    let mut ks = Vec::with_capacity(p.len() * p.len());
    for (k, row) in blocks.into_iter().enumerate() {
        for (kp, v) in row.into_iter().enumerate() {
            let w = if alpha == 0.0 {
                p[k]
            } else {
                p[kp].powf(alpha) * p[k].powf(1.0 - alpha)
            };
            ks.push((w, v));
        }
    }
    Superoperator::from_kraus(model.d_sys(), ks)
}

/// L_j(ρ) = Tr_E(U_j ρ⊗ρ_E U_j†), with Kraus list and verified CPTP flag.
pub fn reduced_map(model: &RisModel, j: usize) -> Result<Superoperator> {
    kraus_map(model, j, false, 0.0)?.verify_cptp(CPTP_TOL)
}

/// L_{j,rev}: as `reduced_map` with U_j replaced by U_j†.
pub fn reversed_map(model: &RisModel, j: usize) -> Result<Superoperator> {
    kraus_map(model, j, true, 0.0)?.verify_cptp(CPTP_TOL)
}

/// Schrödinger-side deformed map Y ↦ Tr_E((1⊗ρ_E^α) U (Y⊗ρ_E^{1−α}) U†),
/// whose dual is X ↦ Tr_E((1⊗ρ_E^{1−α}) U† (X⊗ρ_E^α) U).
pub fn deformed_map(model: &RisModel, j: usize, alpha_j: f64) -> Result<Superoperator> {
    let s = kraus_map(model, j, false, alpha_j)?;
    if alpha_j == 0.0 {
        return s.verify_cptp(CPTP_TOL);
    }
    Ok(s)
}

/// Builds L_j column by column from Tr_E(U (E_ab ⊗ ρ_E) U†), no Kraus list.
pub fn reduced_map_via_partial_trace(model: &RisModel, j: usize, reversed: bool) -> Result<Superoperator> {
    model.check_index(j)?;
    let ds = model.d_sys();
    let de = model.d_env(j);
    let u = if reversed {
        model.propagator(j).adjoint()
    } else {
        model.propagator(j).clone()
    };
    let rho_e = model.env_state(j);
    let mut m = nalgebra::DMatrix::zeros(ds * ds, ds * ds);
    for b in 0..ds {
        for a in 0..ds {
            let mut e = qlinalg::zeros(ds);
            e[(a, b)] = c(1.0);
            let out = partial_trace(&(&u * tensor(&e, &rho_e) * u.adjoint()), (ds, de), Keep::First)?;
            m.set_column(b * ds + a, &qlinalg::vectorize(&out));
        }
    }
    Superoperator::from_matrix(ds, m)
}

/// ‖U_j(ρ⊗ρ_E)U_j† − L_j(ρ)⊗ρ_E‖_F for each probe.
pub fn check_ne(model: &RisModel, rho: &Operator) -> Result<Vec<f64>> {
    let ds = model.d_sys();
    if rho.nrows() != ds || rho.ncols() != ds {
        return Err(Error::Dimension("check_ne: state has wrong dimension".into()));
    }
    (0..model.m())
        .map(|j| {
            let de = model.d_env(j);
            let u = model.propagator(j);
            let rho_e = model.env_state(j);
            let joint = u * tensor(rho, &rho_e) * u.adjoint();
            let reduced = partial_trace(&joint, (ds, de), Keep::First)?;
            Ok(frobenius(&(joint - tensor(&reduced, &rho_e))))
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct NeCheck {
    /// Per probe, max residual over the ζ grid.
    pub residuals: Vec<f64>,
    pub max_residual: f64,
    pub holds: bool,
}

/// Non-entanglement sampled at equal-temperature offsets, evaluated at the
/// invariant state of the equal-temperature random composite.
pub fn check_ne_model(model: &RisModel, tol: f64) -> Result<NeCheck> {
    let mut residuals = vec![0.0f64; model.m()];
    for &z in NE_ZETA_GRID.iter() {
        let eq = model.at_equal_offset(z);
        let rho = semigroup::invariant_state(&semigroup::composite_map(&eq, CompositeKind::Random)?)?;
        for (acc, r) in residuals.iter_mut().zip(check_ne(&eq, &rho)?) {
            *acc = acc.max(r);
        }
    }
    let max_residual = residuals.iter().cloned().fold(0.0, f64::max);
    Ok(NeCheck {
        residuals,
        max_residual,
        holds: max_residual <= tol,
    })
}

/// Max over H_S, H_{E_j}, V_j of ‖X − conj(X)‖ (entrywise max).
pub fn check_tri_conjugation(model: &RisModel) -> f64 {
    let mut r = max_abs(&(&model.h_sys - qlinalg::conj(&model.h_sys)));
    for p in &model.probes {
        r = r.max(max_abs(&(&p.h_env - qlinalg::conj(&p.h_env))));
        r = r.max(max_abs(&(&p.coupling - qlinalg::conj(&p.coupling))));
    }
    r
}

/// Annihilation operator on C²: a|1⟩ = |0⟩.
pub fn lowering() -> Operator {
    Operator::from_row_slice(2, 2, &[c(0.0), c(1.0), c(0.0), c(0.0)])
}

/// Two-level Jaynes-Cummings-type model: H_S = E a†a, H_E = E₀ b†b,
/// V_j = (λ_j/2)(a†⊗b + a⊗b†).
pub fn toy_model(e: f64, e0: f64, lambdas: &[f64], taus: &[f64], betas: &[f64], beta_ref: f64) -> Result<RisModel> {
    let m = lambdas.len();
    if m == 0 || taus.len() != m || betas.len() != m {
        return Err(Error::InvalidInput(format!(
            "toy model: lambdas ({}), taus ({}) and betas ({}) must have equal nonzero length",
            lambdas.len(),
            taus.len(),
            betas.len()
        )));
    }
    let a = lowering();
    let n = a.adjoint() * &a;
    let hop = tensor(&a.adjoint(), &a) + tensor(&a, &a.adjoint());
    let probes = (0..m)
        .map(|j| ProbeSpec {
            h_env: &n * c(e0),
            coupling: &hop * c(lambdas[j] / 2.0),
            tau: taus[j],
            beta: betas[j],
        })
        .collect();
    RisModel::new(&n * c(e), probes, beta_ref)
}

/// Rabi frequency sqrt((E − E₀)² + λ²) of the toy model.
pub fn toy_rabi_frequency(e: f64, e0: f64, lambda: f64) -> f64 {
    ((e - e0).powi(2) + lambda * lambda).sqrt()
}

#[derive(Clone, Debug)]
pub struct Flagged {
    pub holds: bool,
    pub value: f64,
}

#[derive(Clone, Debug)]
pub struct AssumptionReport {
    /// Probe states are Gibbs states by construction.
    pub kms: bool,
    /// Primitivity of the cyclic composite; `value` is its spectral gap.
    pub er_cy: Flagged,
    /// Primitivity of the random composite; `value` is its spectral gap.
    pub er_ra: Flagged,
    /// Basis-conjugation time reversal; `value` is the max residual.
    pub tri: Flagged,
    /// Non-entanglement; `value` is the max residual.
    pub ne: Flagged,
    pub ne_per_probe: Vec<f64>,
    /// Random composite uses a non-uniform probe law.
    pub extension_weights: bool,
}

impl AssumptionReport {
    pub fn all_hold(&self) -> bool {
        self.kms && self.er_cy.holds && self.er_ra.holds && self.tri.holds && self.ne.holds
    }
}

pub fn assumption_report(model: &RisModel, tri_tol: f64, ne_tol: f64) -> Result<AssumptionReport> {
    let er = |kind| -> Result<Flagged> {
        let s = semigroup::composite_map(model, kind)?;
        Ok(Flagged {
            holds: semigroup::is_primitive(&s),
            value: semigroup::dense_spectrum(&s).gap,
        })
    };
    let er_cy = er(CompositeKind::Cyclic)?;
    let er_ra = er(CompositeKind::Random)?;
    let tri_r = check_tri_conjugation(model);
    let (ne, ne_per_probe) = if er_ra.holds {
        let n = check_ne_model(model, ne_tol)?;
        (
            Flagged {
                holds: n.holds,
                value: n.max_residual,
            },
            n.residuals,
        )
    } else {
        (
            Flagged {
                holds: false,
                value: f64::INFINITY,
            },
            vec![f64::INFINITY; model.m()],
        )
    };
    Ok(AssumptionReport {
        kms: true,
        er_cy,
        er_ra,
        tri: Flagged {
            holds: tri_r <= tri_tol,
            value: tri_r,
        },
        ne,
        ne_per_probe,
        extension_weights: model.probe_weights.is_some(),
    })
}

/// Θ∘Φ∘Θ with Θ entrywise conjugation.
pub fn conjugate_map(s: &Superoperator) -> Superoperator {
    let mut out = s.clone();
    out.matrix = s.matrix.map(|z: C64| z.conj());
    out.kraus = s
        .kraus
        .as_ref()
        .map(|k| k.iter().map(|(w, v)| (*w, qlinalg::conj(v))).collect());
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qlinalg::{random_density, random_hermitian, random_matrix, trace};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn toy() -> RisModel {
        toy_model(1.0, 0.9, &[0.5, 0.7], &[1.0, 1.0], &[1.0, 2.0], 1.5).unwrap()
    }

    fn random_model(seed: u64, real: bool) -> RisModel {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let mut herm = |d| {
            if real {
                qlinalg::random_real_symmetric(&mut r, d)
            } else {
                random_hermitian(&mut r, d)
            }
        };
        let h_sys = herm(2);
        let probes = (0..2)
            .map(|j| ProbeSpec {
                h_env: herm(2),
                coupling: herm(4) * c(0.4),
                tau: 0.8 + 0.3 * j as f64,
                beta: 1.0 + j as f64,
            })
            .collect();
        RisModel::new(h_sys, probes, 1.2).unwrap()
    }

    #[test]
    fn decoupled_hamiltonian_spectrum() {
        let m = toy_model(1.0, 0.4, &[0.0], &[1.0], &[1.0], 1.0).unwrap();
        let h = coupled_hamiltonian(&m, 0).unwrap();
        let mut ev = qlinalg::hermitian_spectral_decomposition(&h).unwrap().eigenvalues;
        ev.sort_by(f64::total_cmp);
        let expect = [0.0, 0.4, 1.0, 1.4];
        for (a, b) in ev.iter().zip(expect) {
            assert!((a - b).abs() < 1e-14);
        }
        assert!(coupled_hamiltonian(&m, 1).is_err());
    }

    #[test]
    fn toy_hamiltonian_one_excitation_block() {
        let m = toy_model(1.0, 1.0, &[0.6], &[1.0], &[1.0], 1.0).unwrap();
        let h = coupled_hamiltonian(&m, 0).unwrap();
        // basis |s e⟩: |01⟩ = 1, |10⟩ = 2
        assert!((h[(1, 1)] - c(1.0)).norm() < 1e-15);
        assert!((h[(2, 2)] - c(1.0)).norm() < 1e-15);
        assert!((h[(1, 2)] - c(0.3)).norm() < 1e-15);
        assert!((h[(2, 1)] - c(0.3)).norm() < 1e-15);
        assert!((h[(3, 3)] - c(2.0)).norm() < 1e-15);
        assert!(h[(0, 3)].norm() == 0.0);
        let rm = random_model(3, false);
        assert!(hermiticity_residual(&coupled_hamiltonian(&rm, 1).unwrap()) < 1e-12);
    }

    #[test]
    fn decoupled_reduced_map_is_unitary_conjugation() {
        let m = toy_model(1.0, 0.4, &[0.0], &[0.7], &[1.0], 1.0).unwrap();
        let l = reduced_map(&m, 0).unwrap();
        let u = propagator(&m.h_sys, 0.7).unwrap();
        let lr = reversed_map(&m, 0).unwrap();
        let mut r = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..5 {
            let rho = random_density(&mut r, 2);
            assert!(max_abs(&(l.apply(&rho) - &u * &rho * u.adjoint())) < 1e-14);
            assert!(max_abs(&(lr.apply(&rho) - u.adjoint() * &rho * &u)) < 1e-14);
        }
    }

    #[test]
    fn reduced_map_trace_and_constructions() {
        let mut r = ChaCha8Rng::seed_from_u64(2);
        for model in [toy(), random_model(5, false)] {
            for j in 0..model.m() {
                let l = reduced_map(&model, j).unwrap();
                assert!(l.trace_preserving);
                let direct = reduced_map_via_partial_trace(&model, j, false).unwrap();
                let rev = reversed_map(&model, j).unwrap();
                let rev_direct = reduced_map_via_partial_trace(&model, j, true).unwrap();
                for _ in 0..20 {
                    let rho = random_density(&mut r, 2);
                    assert!((trace(&l.apply(&rho)) - trace(&rho)).norm() < 1e-12);
                    assert!(max_abs(&(l.apply(&rho) - direct.apply(&rho))) < 1e-10);
                    assert!(max_abs(&(rev.apply(&rho) - rev_direct.apply(&rho))) < 1e-10);
                }
            }
        }
    }

    #[test]
    fn double_reversal_recovers_map() {
        let model = random_model(9, false);
        let mut flipped = model.clone();
        for c in flipped.cache.iter_mut() {
            c.u = c.u.adjoint();
        }
        for j in 0..2 {
            let a = reduced_map(&model, j).unwrap();
            let b = reversed_map(&flipped, j).unwrap();
            assert!((a.matrix - b.matrix).iter().all(|z| z.norm() < 1e-12));
        }
    }

    #[test]
    fn reversal_is_conjugated_map_under_tri() {
        let mut r = ChaCha8Rng::seed_from_u64(4);
        let model = random_model(6, true);
        assert!(check_tri_conjugation(&model) <= TRI_TOL);
        for j in 0..2 {
            let rev = reversed_map(&model, j).unwrap();
            let theta = conjugate_map(&reduced_map(&model, j).unwrap());
            for _ in 0..10 {
                let rho = random_density(&mut r, 2);
                assert!(max_abs(&(rev.apply(&rho) - theta.apply(&rho))) < 1e-10);
            }
        }
    }

    #[test]
    fn deformed_map_cases() {
        let mut r = ChaCha8Rng::seed_from_u64(7);
        let model = toy();
        for j in 0..2 {
            let l0 = deformed_map(&model, j, 0.0).unwrap();
            assert_eq!(l0.matrix, reduced_map(&model, j).unwrap().matrix);

            // Θ∘L^[α]*∘Θ = L^[1−α] (Schrödinger side)
            for alpha in [1.0, 0.3, -0.7] {
                let lhs = conjugate_map(&deformed_map(&model, j, alpha).unwrap().dual());
                let rhs = deformed_map(&model, j, 1.0 - alpha).unwrap();
                assert!((lhs.matrix - rhs.matrix).iter().all(|z| z.norm() < 1e-10));
            }

            // direct partial-trace form of the dual
            let alpha = 0.37;
            let dual = deformed_map(&model, j, alpha).unwrap().dual();
            let u = model.propagator(j);
            let x = random_matrix(&mut r, 2);
            let lhs = tensor(&identity(2), &model.env_state_pow(j, 1.0 - alpha))
                * u.adjoint()
                * tensor(&x, &model.env_state_pow(j, alpha))
                * u;
            let direct = partial_trace(&lhs, (2, 2), Keep::First).unwrap();
            assert!(max_abs(&(dual.apply(&x) - direct)) < 1e-12);
        }
    }

    #[test]
    fn deformed_map_isospectral_form_under_ne() {
        let mut r = ChaCha8Rng::seed_from_u64(8);
        let model = toy();
        // toy effective Hamiltonian E₀ a†a
        let hp = lowering().adjoint() * lowering() * c(0.9);
        for j in 0..2 {
            let beta = model.probes[j].beta;
            let ldual = reduced_map(&model, j).unwrap().dual();
            for alpha in [0.4, -1.3] {
                let lad = deformed_map(&model, j, alpha).unwrap().dual();
                let e_plus = qlinalg::matrix_function(&(&hp * c(beta * alpha)), qlinalg::MatFn::Exp).unwrap();
                let e_minus = qlinalg::matrix_function(&(&hp * c(-beta * alpha)), qlinalg::MatFn::Exp).unwrap();
                for _ in 0..5 {
                    let x = random_matrix(&mut r, 2);
                    let rhs = ldual.apply(&(&x * &e_plus)) * &e_minus;
                    assert!(max_abs(&(lad.apply(&x) - rhs)) < 1e-9);
                }
            }
        }
    }

    #[test]
    fn kraus_operators_do_not_depend_on_beta() {
        let model = toy();
        let hot = model.with_betas(&[0.2, -0.4]).unwrap();
        for j in 0..2 {
            let a = reduced_map(&model, j).unwrap().kraus.unwrap();
            let b = reduced_map(&hot, j).unwrap().kraus.unwrap();
            for ((_, va), (_, vb)) in a.iter().zip(&b) {
                assert_eq!(va, vb);
            }
            assert!(a.iter().zip(&b).any(|((wa, _), (wb, _))| (wa - wb).abs() > 1e-3));
        }
    }

    #[test]
    fn ne_cases() {
        let model = toy();
        let check = check_ne_model(&model, NE_TOL).unwrap();
        assert!(check.max_residual <= 1e-10, "{:?}", check);
        // NE at the Gibbs state of E₀ a†a at the common probe temperature
        let eq = model.at_equal_offset(0.7);
        let rho = qlinalg::gibbs_state(&(lowering().adjoint() * lowering() * c(0.9)), eq.probes[0].beta).unwrap();
        assert!(check_ne(&eq, &rho).unwrap().iter().all(|&r| r <= 1e-10));
        let off = qlinalg::gibbs_state(&(lowering().adjoint() * lowering() * c(0.9)), 0.1).unwrap();
        assert!(check_ne(&eq, &off).unwrap().iter().all(|&r| r > 1e-3));

        let decoupled = toy_model(1.0, 0.4, &[0.0], &[1.0], &[1.0], 1.0).unwrap();
        let rho = qlinalg::gibbs_state(&decoupled.h_sys, 0.3).unwrap();
        assert!(check_ne(&decoupled, &rho).unwrap()[0] < 1e-15);

        let generic = random_model(12, false);
        let check = check_ne_model(&generic, NE_TOL).unwrap();
        assert!(check.max_residual > 1e-6 && !check.holds);
    }

    #[test]
    fn tri_cases() {
        assert_eq!(check_tri_conjugation(&toy()), 0.0);
        let mut model = toy();
        model.h_sys[(0, 1)] = C64::new(0.0, 0.25);
        model.h_sys[(1, 0)] = C64::new(0.0, -0.25);
        assert!((check_tri_conjugation(&model) - 0.5).abs() < 1e-15);
        assert!(check_tri_conjugation(&random_model(2, true)) <= TRI_TOL);
    }

    #[test]
    fn gauge_invariance_under_ne() {
        let mut r = ChaCha8Rng::seed_from_u64(13);
        let model = toy();
        let hp = lowering().adjoint() * lowering() * c(0.9);
        for j in 0..2 {
            let l = reduced_map(&model, j).unwrap();
            for t in [0.3, 1.7] {
                let g = propagator(&hp, t).unwrap();
                let rho = random_density(&mut r, 2);
                let lhs = l.apply(&(&g * &rho * g.adjoint()));
                let rhs = &g * l.apply(&rho) * g.adjoint();
                assert!(max_abs(&(lhs - rhs)) < 1e-9);
            }
        }
    }

    #[test]
    fn positivity_is_propagated() {
        let mut r = ChaCha8Rng::seed_from_u64(14);
        let model = random_model(15, false);
        for j in 0..2 {
            let l = reduced_map(&model, j).unwrap();
            let rho = random_density(&mut r, 2);
            let out = qlinalg::hermitian_spectral_decomposition(&qlinalg::hermitian_part(&l.apply(&rho))).unwrap();
            assert!(out.eigenvalues[0] > 0.0);
        }
    }

    #[test]
    fn model_validation() {
        assert!(toy_model(1.0, 0.9, &[0.5], &[1.0, 1.0], &[1.0], 1.0).is_err());
        assert!(toy_model(1.0, 0.9, &[0.5], &[0.0], &[1.0], 1.0).is_err());
        let model = toy();
        let mut probes = model.probes.clone();
        probes[0].coupling = identity(3);
        assert!(matches!(RisModel::new(model.h_sys.clone(), probes, 1.0), Err(Error::Dimension(_))));
        assert_eq!(model.zeta(), vec![0.5, -0.5]);
        assert_eq!(model.total_time(), 2.0);
    }
}
