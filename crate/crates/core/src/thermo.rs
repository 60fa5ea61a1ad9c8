//! Energy fluxes, effective Hamiltonian, entropy production and dissipation.

use crate::error::{Error, Result};
use crate::model::{self, RisModel};
use crate::qlinalg::{
    self, c, frobenius, identity, partial_trace_wrt_state, relative_entropy_floor, tensor,
    trace_prod, von_neumann_entropy, MatFn, Operator, Superoperator,
};
use crate::semigroup::{self, CompositeKind};

/// NE residual tolerated by `effective_hamiltonian`.
pub const EFFECTIVE_NE_TOL: f64 = 1e-8;
/// Eigenvalue floor for logarithms of transient states.
pub const ENTROPY_FLOOR: f64 = 1e-15;

/// Φ_j = −(1/T) Tr_{ρ_E}(U†(1⊗H_E)U − 1⊗H_E).
pub fn flux_observable(model: &RisModel, j: usize) -> Result<Operator> {
    energy_change(model, j, false).map(|x| x * c(-1.0 / model.total_time()))
}

/// Φ_{j,rev} = +(1/T) Tr_{ρ_E}(U(1⊗H_E)U† − 1⊗H_E).
pub fn reversed_flux(model: &RisModel, j: usize) -> Result<Operator> {
    energy_change(model, j, true).map(|x| x * c(1.0 / model.total_time()))
}

fn energy_change(model: &RisModel, j: usize, reversed: bool) -> Result<Operator> {
    model::coupled_hamiltonian(model, j)?;
    let ds = model.d_sys();
    let de = model.d_env(j);
    let he = tensor(&identity(ds), &model.probes[j].h_env);
    let u = model.propagator(j);
    let moved = if reversed {
        u * &he * u.adjoint()
    } else {
        u.adjoint() * &he * u
    };
    let x = partial_trace_wrt_state(&(moved - he), &model.env_state(j), (ds, de))?;
    Ok(qlinalg::hermitian_part(&x))
}

/// Position of probe j in the period order of `kind` (None for random).
fn position(kind: CompositeKind, m: usize, j: usize) -> Option<usize> {
    kind.is_cyclic().then(|| kind.order(m).iter().position(|&o| o == j).unwrap())
}

/// Applies duals L*_{o_a}∘…∘L*_{o_{b−1}} (o_a outermost) to x.
pub fn apply_duals(duals: &[Superoperator], order: &[usize], range: std::ops::Range<usize>, x: &Operator) -> Operator {
    let mut y = x.clone();
    for p in range.rev() {
        y = duals[order[p]].apply(&y);
    }
    y
}

/// Flux Φ_j^♯: Φ_j pulled back through the probes acting before j in the period.
pub fn order_flux(model: &RisModel, kind: CompositeKind, j: usize) -> Result<Operator> {
    let phi = flux_observable(model, j)?;
    match position(kind, model.m(), j) {
        None => Ok(phi),
        Some(p) => {
            let duals = reduced_duals(model)?;
            Ok(apply_duals(&duals, &kind.order(model.m()), 0..p, &phi))
        }
    }
}

/// Φ_j^cy = L_1*∘…∘L_{j−1}*(Φ_j).
pub fn cyclic_flux(model: &RisModel, j: usize) -> Result<Operator> {
    order_flux(model, CompositeKind::Cyclic, j)
}

/// Reversed flux pushed through the reversed maps of the probes acting after j:
/// for the cyclic order, L_{M,rev}*∘…∘L_{j+1,rev}*(Φ_{j,rev}).
pub fn order_reversed_flux(model: &RisModel, kind: CompositeKind, j: usize) -> Result<Operator> {
    let phi = reversed_flux(model, j)?;
    match position(kind, model.m(), j) {
        None => Ok(phi),
        Some(p) => {
            let order = kind.order(model.m());
            let mut y = phi;
            for &o in &order[p + 1..] {
                y = model::reversed_map(model, o)?.dual().apply(&y);
            }
            Ok(y)
        }
    }
}

pub fn cyclic_reversed_flux(model: &RisModel, j: usize) -> Result<Operator> {
    order_reversed_flux(model, CompositeKind::Cyclic, j)
}

pub fn reduced_duals(model: &RisModel) -> Result<Vec<Superoperator>> {
    (0..model.m()).map(|j| Ok(model::reduced_map(model, j)?.dual())).collect()
}

#[derive(Clone, Debug)]
pub struct EffectiveHamiltonian {
    /// Traceless part of −(1/β_ref) log ρ_{+,0}.
    pub h_prime: Operator,
    /// Tr(H_S')/d removed from `h_prime`.
    pub constant: f64,
    /// Per probe ‖U†(H'⊗1+1⊗H_E)U − (H'⊗1+1⊗H_E)‖_F.
    pub conservation_residuals: Vec<f64>,
    /// Equal-temperature invariant state ρ_{+,0}.
    pub equilibrium_state: Operator,
    /// ‖ρ_{+,0}^{cy} − ρ_{+,0}^{ra}‖ (max entry).
    pub cyclic_state_residual: f64,
    pub ne_residual: f64,
}

impl EffectiveHamiltonian {
    /// H_S' including the constant.
    pub fn full(&self) -> Operator {
        &self.h_prime + identity(self.h_prime.nrows()) * c(self.constant)
    }
}

pub fn effective_hamiltonian(model: &RisModel) -> Result<EffectiveHamiltonian> {
    effective_hamiltonian_with(model, EFFECTIVE_NE_TOL)
}

pub fn effective_hamiltonian_with(model: &RisModel, ne_tol: f64) -> Result<EffectiveHamiltonian> {
    if model.beta_ref == 0.0 {
        return Err(Error::InvalidInput("effective Hamiltonian needs beta_ref != 0".into()));
    }
    let eq = model.equilibrium();
    let rho = semigroup::invariant_state(&semigroup::composite_map(&eq, CompositeKind::Random)?)?;
    let rho_cy = semigroup::invariant_state(&semigroup::composite_map(&eq, CompositeKind::Cyclic)?)?;
    let ne_residual = model::check_ne(&eq, &rho)?.into_iter().fold(0.0, f64::max);
    if ne_residual > ne_tol {
        return Err(Error::NeViolated { residual: ne_residual });
    }
    let h = qlinalg::matrix_function(&rho, MatFn::Log)? * c(-1.0 / model.beta_ref);
    let d = model.d_sys();
    let constant = qlinalg::trace(&h).re / d as f64;
    let h_prime = qlinalg::hermitian_part(&(h - identity(d) * c(constant)));
    let conservation_residuals = (0..model.m())
        .map(|j| {
            let de = model.d_env(j);
            let k = tensor(&h_prime, &identity(de)) + tensor(&identity(d), &model.probes[j].h_env);
            let u = model.propagator(j);
            frobenius(&(u.adjoint() * &k * u - &k))
        })
        .collect();
    Ok(EffectiveHamiltonian {
        h_prime,
        constant,
        conservation_residuals,
        cyclic_state_residual: qlinalg::max_abs(&(&rho_cy - &rho)),
        equilibrium_state: rho,
        ne_residual,
    })
}

#[derive(Clone, Debug)]
pub struct FluxSet {
    pub kind: CompositeKind,
    /// Φ_j^♯ per probe.
    pub phi: Vec<Operator>,
    /// Reversed fluxes matching `phi`.
    pub phi_rev: Vec<Operator>,
    pub steady_state: Operator,
    /// ρ₊^♯(Φ_j^♯).
    pub steady_values: Vec<f64>,
    /// Σ_j steady_values.
    pub conservation_residual: f64,
    /// −Σ_j β_j steady_values[j].
    pub sigma_plus: f64,
}

pub fn steady_fluxes(model: &RisModel, kind: CompositeKind) -> Result<FluxSet> {
    let rho = semigroup::invariant_state(&semigroup::composite_map(model, kind)?)?;
    let phi = (0..model.m())
        .map(|j| order_flux(model, kind, j))
        .collect::<Result<Vec<_>>>()?;
    let phi_rev = (0..model.m())
        .map(|j| order_reversed_flux(model, kind, j))
        .collect::<Result<Vec<_>>>()?;
    let steady_values: Vec<f64> = phi.iter().map(|p| trace_prod(&rho, p).re).collect();
    let sigma_plus = -steady_values
        .iter()
        .zip(&model.probes)
        .map(|(v, p)| p.beta * v)
        .sum::<f64>();
    Ok(FluxSet {
        kind,
        conservation_residual: steady_values.iter().sum(),
        phi,
        phi_rev,
        steady_state: rho,
        steady_values,
        sigma_plus,
    })
}

#[derive(Clone, Debug)]
pub struct TransientReport {
    /// Per-step entropy production σ_n.
    pub sigma: Vec<f64>,
    /// Σ σ_n.
    pub total: f64,
    /// Ent(ρ_N) − Ent(ρ_0) − T Σ β_{j_n} Tr(ρ_{n−1}Φ_{j_n}).
    pub balance_rhs: f64,
    pub balance_residual: f64,
    pub final_state: Operator,
}

/// Entropy production along a probe sequence started from ρ₀.
pub fn transient_entropy_production(model: &RisModel, sequence: &[usize], rho0: &Operator) -> Result<TransientReport> {
    if sequence.is_empty() {
        return Err(Error::InvalidInput("empty probe sequence".into()));
    }
    let ds = model.d_sys();
    let t = model.total_time();
    let phis = (0..model.m())
        .map(|j| flux_observable(model, j))
        .collect::<Result<Vec<_>>>()?;
    let envs: Vec<Operator> = (0..model.m()).map(|j| model.env_state(j)).collect();
    let mut rho = rho0.clone();
    let mut sigma = Vec::with_capacity(sequence.len());
    let mut flux_term = 0.0;
    for &j in sequence {
        if j >= model.m() {
            return Err(Error::Index { index: j, len: model.m() });
        }
        let u = model.propagator(j);
        let joint = qlinalg::hermitian_part(&(u * tensor(&rho, &envs[j]) * u.adjoint()));
        let next = qlinalg::hermitian_part(&qlinalg::partial_trace(&joint, (ds, model.d_env(j)), qlinalg::Keep::First)?);
        let reference = tensor(&next, &envs[j]);
        sigma.push(relative_entropy_floor(&joint, &reference, Some(ENTROPY_FLOOR))?);
        flux_term += model.probes[j].beta * trace_prod(&rho, &phis[j]).re;
        rho = next;
    }
    let total: f64 = sigma.iter().sum();
    let balance_rhs = von_neumann_entropy(&rho)? - von_neumann_entropy(rho0)? - t * flux_term;
    Ok(TransientReport {
        balance_residual: (total - balance_rhs).abs(),
        sigma,
        total,
        balance_rhs,
        final_state: rho,
    })
}

/// D_j(X,Y) = (1/T)(L*(X†Y) − L*(X†)Y − X†L*(Y) + X†Y).
pub fn dissipation(model: &RisModel, j: usize, x: &Operator, y: &Operator) -> Result<Operator> {
    let l = model::reduced_map(model, j)?.dual();
    let xd = x.adjoint();
    let out = l.apply(&(&xd * y)) - l.apply(&xd) * y - &xd * l.apply(y) + &xd * y;
    Ok(out * c(1.0 / model.total_time()))
}

/// (1/T) Σ w_i [V_i, X]†[V_i, Y] over the Kraus list of L_j.
pub fn dissipation_kraus(model: &RisModel, j: usize, x: &Operator, y: &Operator) -> Result<Operator> {
    let l = model::reduced_map(model, j)?;
    let mut out = qlinalg::zeros(model.d_sys());
    for (w, v) in l.kraus_list() {
        let cx = &v * x - x * &v;
        let cy = &v * y - y * &v;
        out += cx.adjoint() * cy * c(w);
    }
    Ok(out * c(1.0 / model.total_time()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{lowering, toy_model};
    use crate::qlinalg::{max_abs, random_density, random_matrix};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toy(betas: &[f64]) -> RisModel {
        toy_model(1.0, 0.9, &[0.5, 0.7], &[1.0, 1.0], betas, 1.3).unwrap()
    }

    fn number() -> Operator {
        lowering().adjoint() * lowering()
    }

    #[test]
    fn decoupled_flux_vanishes() {
        let m = toy_model(1.0, 0.9, &[0.0, 0.0], &[1.0, 1.0], &[1.0, 2.0], 1.0).unwrap();
        for j in 0..2 {
            assert!(max_abs(&flux_observable(&m, j).unwrap()) < 1e-15);
        }
    }

    #[test]
    fn flux_is_effective_energy_variation() {
        let m = toy(&[1.0, 2.0]);
        let hp = effective_hamiltonian(&m).unwrap();
        for j in 0..2 {
            let l = model::reduced_map(&m, j).unwrap().dual();
            let h = hp.full();
            let expect = (l.apply(&h) - &h) * c(1.0 / m.total_time());
            assert!(max_abs(&(flux_observable(&m, j).unwrap() - expect)) < 1e-9);
        }
    }

    #[test]
    fn equilibrium_fluxes_vanish() {
        let m = toy(&[1.3, 1.3]);
        for kind in CompositeKind::ALL {
            let fs = steady_fluxes(&m, kind).unwrap();
            assert!(fs.steady_values.iter().all(|v| v.abs() < 1e-10));
            assert!(fs.sigma_plus.abs() < 1e-10);
        }
    }

    #[test]
    fn first_flux_is_plain_and_cyclic_flux_matches_full_space() {
        let m = toy_model(1.0, 0.9, &[0.5, 0.7, 0.9], &[1.0, 0.8, 1.2], &[1.0, 2.0, 0.7], 1.3).unwrap();
        assert_eq!(cyclic_flux(&m, 0).unwrap(), flux_observable(&m, 0).unwrap());
        // direct construction on S ⊗ E_1 ⊗ E_2 ⊗ E_3
        let ds = 2;
        let de = 2;
        let nenv = 3;
        let dim_env = de * de * de;
        let embed = |x: &Operator, slot: usize| -> Operator {
            // operator on S⊗E_slot lifted to the full space
            let mut out = Operator::zeros(ds * dim_env, ds * dim_env);
            let after = de.pow((nenv - 1 - slot) as u32);
            for r in 0..ds * dim_env {
                for s in 0..ds * dim_env {
                    let (rs, re) = (r / dim_env, r % dim_env);
                    let (ss, se) = (s / dim_env, s % dim_env);
                    let (rb, rk, ra) = (re / (de * after), (re / after) % de, re % after);
                    let (sb, sk, sa) = (se / (de * after), (se / after) % de, se % after);
                    if rb == sb && ra == sa {
                        out[(r, s)] = x[(rs * de + rk, ss * de + sk)];
                    }
                }
            }
            out
        };
        let mut u_cy = identity(ds * dim_env);
        for j in 0..3 {
            u_cy = embed(m.propagator(j), j) * u_cy;
        }
        let rho_env = tensor(&tensor(&m.env_state(0), &m.env_state(1)), &m.env_state(2));
        for j in 0..3 {
            let hej = embed(&tensor(&identity(ds), &m.probes[j].h_env), j);
            let x = u_cy.adjoint() * &hej * &u_cy - &hej;
            let direct = partial_trace_wrt_state(&x, &rho_env, (ds, dim_env)).unwrap() * c(-1.0 / m.total_time());
            assert!(max_abs(&(cyclic_flux(&m, j).unwrap() - direct)) < 1e-9, "j={j}");
        }
    }

    #[test]
    fn fluxes_are_odd_under_time_reversal() {
        let m = toy(&[1.0, 2.0]);
        for j in 0..2 {
            let phi = flux_observable(&m, j).unwrap();
            let rev = reversed_flux(&m, j).unwrap();
            assert!(max_abs(&(rev + qlinalg::conj(&phi))) < 1e-10);
        }
    }

    #[test]
    fn toy_effective_hamiltonian() {
        let m = toy(&[1.0, 2.0]);
        let eh = effective_hamiltonian(&m).unwrap();
        let expect = number() * c(0.9) - identity(2) * c(0.45);
        assert!(max_abs(&(&eh.h_prime - expect)) < 1e-9);
        assert!(eh.conservation_residuals.iter().all(|&r| r <= 1e-8));
        assert!(eh.cyclic_state_residual < 1e-9);
        let mut other = m.clone();
        other.beta_ref = 0.4;
        let eh2 = effective_hamiltonian(&other).unwrap();
        let diff = eh.full() - eh2.full();
        assert!(max_abs(&(&diff - identity(2) * diff[(0, 0)])) < 1e-9);
    }

    #[test]
    fn effective_hamiltonian_requires_ne() {
        let mut r = ChaCha8Rng::seed_from_u64(3);
        let probes = vec![model::ProbeSpec {
            h_env: qlinalg::random_hermitian(&mut r, 2),
            coupling: qlinalg::random_hermitian(&mut r, 4),
            tau: 1.0,
            beta: 1.0,
        }];
        let m = RisModel::new(qlinalg::random_hermitian(&mut r, 2), probes, 1.0).unwrap();
        assert!(matches!(effective_hamiltonian(&m), Err(Error::NeViolated { .. })));
    }

    #[test]
    fn laws_out_of_equilibrium() {
        let m = toy(&[1.0, 2.0]);
        for kind in CompositeKind::ALL {
            let fs = steady_fluxes(&m, kind).unwrap();
            assert!(fs.conservation_residual.abs() < 1e-9);
            assert!(fs.sigma_plus > 0.0);
        }
        let single = toy_model(1.0, 0.9, &[0.5], &[1.0], &[0.7], 1.0).unwrap();
        let fs = steady_fluxes(&single, CompositeKind::Cyclic).unwrap();
        assert!(fs.steady_values[0].abs() < 1e-10);
    }

    #[test]
    fn transient_balance() {
        let m = toy(&[1.0, 2.0]);
        let mut r = ChaCha8Rng::seed_from_u64(4);
        let rho0 = random_density(&mut r, 2);
        let seq: Vec<usize> = (0..200).map(|n| n % 2).collect();
        let rep = transient_entropy_production(&m, &seq, &rho0).unwrap();
        assert!(rep.balance_residual < 1e-8);
        assert!(rep.sigma.iter().all(|&s| s >= -1e-12));

        let eq = toy(&[1.3, 1.3]);
        let rho = qlinalg::gibbs_state(&(number() * c(0.9)), 1.3).unwrap();
        let rep = transient_entropy_production(&eq, &[0, 1, 1, 0], &rho).unwrap();
        assert!(rep.sigma.iter().all(|&s| s <= 1e-10));
    }

    #[test]
    fn dissipation_cases() {
        let m = toy(&[1.0, 2.0]);
        let mut r = ChaCha8Rng::seed_from_u64(5);
        for j in 0..2 {
            let id = identity(2);
            assert!(max_abs(&dissipation(&m, j, &id, &id).unwrap()) < 1e-14);
            for _ in 0..5 {
                let x = random_matrix(&mut r, 2);
                let y = random_matrix(&mut r, 2);
                let dxx = dissipation(&m, j, &x, &x).unwrap();
                let ev = qlinalg::hermitian_spectral_decomposition(&qlinalg::hermitian_part(&dxx)).unwrap();
                assert!(ev.eigenvalues[0] >= -1e-11);
                let a = dissipation(&m, j, &x, &y).unwrap();
                let b = dissipation_kraus(&m, j, &x, &y).unwrap();
                assert!(max_abs(&(a - b)) < 1e-10);
            }
        }
    }

    #[test]
    fn rho_adjoint_of_dual_is_reversed_dual() {
        let m = toy(&[1.3, 1.3]);
        let rho = qlinalg::gibbs_state(&(number() * c(0.9)), 1.3).unwrap();
        let mut r = ChaCha8Rng::seed_from_u64(6);
        for j in 0..2 {
            let l = model::reduced_map(&m, j).unwrap().dual();
            let lrev = model::reversed_map(&m, j).unwrap().dual();
            for _ in 0..5 {
                let a = random_matrix(&mut r, 2);
                let b = random_matrix(&mut r, 2);
                // ⟨A, L*(B)⟩_ρ = ⟨L_rev*(A), B⟩_ρ with ⟨A,B⟩_ρ = Tr(ρA†B)
                let lhs = trace_prod(&rho, &(a.adjoint() * l.apply(&b)));
                let rhs = trace_prod(&rho, &(lrev.apply(&a).adjoint() * &b));
                assert!((lhs - rhs).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn effective_hamiltonian_commutes_with_its_image() {
        let m = toy(&[1.0, 2.0]);
        let h = effective_hamiltonian(&m).unwrap().h_prime;
        for j in 0..2 {
            let lh = model::reduced_map(&m, j).unwrap().dual().apply(&h);
            assert!(max_abs(&(&lh * &h - &h * &lh)) < 1e-9);
        }
    }
}
