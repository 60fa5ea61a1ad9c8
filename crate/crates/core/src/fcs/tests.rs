use super::*;
use crate::model::toy_model;
use crate::qlinalg::{c, gibbs_state, identity, random_density, tensor, trace_prod};
use crate::thermo;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn toy(betas: &[f64]) -> RisModel {
    toy_model(1.0, 0.9, &[0.5, 0.7], &[1.0, 1.0], betas, 1.3).unwrap()
}

fn toy3() -> RisModel {
    toy_model(1.0, 0.9, &[0.5, 0.7, 0.9], &[1.0, 1.0, 1.0], &[1.0, 2.0, 1.5], 1.3).unwrap()
}

fn mixed() -> Operator {
    identity(2) * c(0.5)
}

#[test]
fn mgf_is_one_at_zero() {
    let m = toy(&[1.0, 2.0]);
    let v = mgf_finite(&m, &[0, 1, 1, 0], &[0.0, 0.0], &mixed()).unwrap();
    assert!((v - 1.0).abs() < 1e-13);
}

#[test]
fn exact_distribution_reproduces_mgf() {
    let m = toy(&[1.0, 2.0]);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let rho0 = random_density(&mut rng, 2);
    let seq = [0, 1, 1, 0, 1, 0];
    let dist = exact_distribution(&m, &seq, &rho0).unwrap();
    assert!((dist.total() - 1.0).abs() < 1e-12);
    for alpha in [[0.3, -0.2], [1.1, 0.4], [-0.7, 0.9]] {
        let a = mgf_from_distribution(&dist, &alpha);
        let b = mgf_finite(&m, &seq, &alpha, &rho0).unwrap();
        assert!(rel_diff(a, b) < 1e-10, "{a} vs {b}");
    }
}

#[test]
fn exact_mean_matches_energy_telescoping() {
    let m = toy(&[1.0, 2.0]);
    let rho0 = mixed();
    let seq = [1, 0, 0, 1, 0];
    let dist = exact_distribution(&m, &seq, &rho0).unwrap();
    let mut expected = [0.0; 2];
    let mut rho = rho0.clone();
    for &j in &seq {
        let he = m.probes[j].h_env.clone();
        let rho_e = m.env_state(j);
        let u = m.propagator(j);
        let joint = tensor(&rho, &rho_e);
        let lifted = tensor(&identity(2), &he);
        let de = trace_prod(&(u * &joint * u.adjoint()), &lifted).re - trace_prod(&rho_e, &he).re;
        expected[j] += m.probes[j].beta * de;
        rho = crate::model::reduced_map(&m, j).unwrap().apply(&rho);
    }
    let mean = dist.mean();
    for j in 0..2 {
        assert!((mean[j] - expected[j]).abs() < 1e-12, "{mean:?} vs {expected:?}");
    }
}

#[test]
fn branch_budget_is_enforced() {
    let m = toy(&[1.0, 2.0]);
    let seq = vec![0; 11];
    match exact_distribution(&m, &seq, &mixed()) {
        Err(Error::BranchBudget { .. }) => {}
        other => panic!("expected budget error, got {other:?}"),
    }
}

#[test]
fn cgf_vanishes_at_origin_and_is_convex_on_a_line() {
    let m = toy(&[1.0, 2.0]);
    for kind in CompositeKind::ALL {
        assert!(cgf(&m, kind, &[0.0, 0.0]).unwrap().value.abs() < 1e-14);
        let f = |t: f64| cgf(&m, kind, &[0.4 * t, -0.3 * t]).unwrap().value;
        for t in [-1.0, 0.0, 0.5, 1.5] {
            assert!(f(t - 0.1) + f(t + 0.1) - 2.0 * f(t) > -1e-12);
        }
    }
}

#[test]
fn cgf_is_the_growth_rate_of_the_finite_mgf() {
    let m = toy(&[1.0, 2.0]);
    let alpha = [0.3, -0.4];
    let e = cgf(&m, CompositeKind::Cyclic, &alpha).unwrap().value;
    let tau = CompositeKind::Cyclic.timescale(&m);
    let seq: Vec<usize> = (0..400).map(|n| n % 2).collect();
    let r = mgf_finite(&m, &seq, &alpha, &mixed()).unwrap();
    let rate = r.ln() / (200.0 * tau);
    assert!((rate - e).abs() < 1e-2, "{rate} vs {e}");
}

#[test]
fn entropic_and_translation_symmetries() {
    for betas in [[1.0, 2.0], [1.3, 1.3], [0.4, 2.5]] {
        let m = toy(&betas);
        let rep = symmetry_checks(&m, &alpha_grid(2, 4, -1.0, 2.0)).unwrap();
        assert!(rep.es_random < 1e-10, "{rep:?}");
        assert!(rep.es_cyclic < 1e-10, "{rep:?}");
        assert!(rep.translation < 1e-10, "{rep:?}");
    }
    let rep = symmetry_checks(&toy3(), &alpha_grid(3, 5, -1.0, 2.0)).unwrap();
    assert!(rep.es_random < 1e-10 && rep.es_cyclic < 1e-10 && rep.translation < 1e-10, "{rep:?}");
}

fn assert_moments_close(a: &Moments, b: &Moments) {
    for j in 0..a.first.len() {
        let tol = 1e-6_f64.max(1e-3 * a.first[j].abs());
        assert!((a.first[j] - b.first[j]).abs() < tol, "first {j}: {a:?} vs {b:?}");
        for k in 0..a.first.len() {
            let tol = 1e-6_f64.max(1e-3 * a.second[j][k].abs());
            assert!((a.second[j][k] - b.second[j][k]).abs() < tol, "second {j}{k}: {a:?} vs {b:?}");
        }
    }
}

#[test]
fn analytic_moments_match_finite_differences() {
    for m in [toy(&[1.0, 2.0]), toy(&[1.3, 1.3]), toy3()] {
        for kind in CompositeKind::ALL {
            let a = moments_analytic(&m, kind).unwrap();
            let f = moments_fd(&m, kind, 1e-3).unwrap();
            assert_moments_close(&a, &f);
        }
    }
}

#[test]
fn first_moment_is_the_steady_entropy_flux() {
    let m = toy(&[1.0, 2.0]);
    for kind in CompositeKind::ALL {
        let mo = moments_analytic(&m, kind).unwrap();
        let fl = thermo::steady_fluxes(&m, kind).unwrap();
        let tau = kind.timescale(&m);
        let sum: f64 = mo.first.iter().sum();
        assert!((sum + tau * fl.sigma_plus).abs() < 1e-12, "{sum} vs {}", fl.sigma_plus);
        for j in 0..2 {
            let w = if kind.is_cyclic() { m.total_time() } else { m.total_time() * m.weights()[j] };
            let expected = m.probes[j].beta * w * fl.steady_values[j];
            assert!((mo.first[j] - expected).abs() < 1e-12, "{:?} vs {expected}", mo.first);
        }
    }
}

#[test]
fn covariance_is_symmetric_psd_with_kernel() {
    let m = toy(&[1.0, 2.0]);
    for kind in CompositeKind::ALL {
        let d = covariance(&m, kind).unwrap();
        assert!((d[0][1] - d[1][0]).abs() < 1e-12);
        assert!(d[0][0] >= -1e-14 && d[1][1] >= -1e-14);
        // energy conservation at equal β: rows sum to zero
        assert!((d[0][0] + d[0][1]).abs() < 1e-10, "{d:?}");
    }
}

#[test]
fn rate_function_vanishes_at_the_mean() {
    let m = toy(&[1.0, 2.0]);
    let kind = CompositeKind::Random;
    let mo = moments_analytic(&m, kind).unwrap();
    let tau = kind.timescale(&m);
    // mean entropy rate of S is −∇e(0) = −∇r(0)/τ
    let mean: Vec<f64> = mo.first.iter().map(|x| -x / tau).collect();
    let res = rate_function(&m, kind, &mean).unwrap();
    assert!(res.value.abs() < 1e-9, "{res:?}");
    let off: Vec<f64> = mean.iter().map(|x| 1.5 * x).collect();
    let res = rate_function(&m, kind, &off).unwrap();
    assert!(res.value > 1e-6, "{res:?}");
    let bad = [mean[0] + 0.1, mean[1]];
    assert!(rate_function(&m, kind, &bad).unwrap().value.is_infinite());
}

#[test]
fn fluctuation_relation_for_random_kind() {
    let m = toy(&[1.0, 2.0]);
    let kind = CompositeKind::Random;
    let b = m.betas();
    for t in [-0.05, 0.02, 0.08] {
        // on the hyperplane Σ ς_j/β_j = 0
        let s = [t, -t * b[1] / b[0]];
        let neg = [-s[0], -s[1]];
        let ip = rate_function(&m, kind, &s).unwrap().value;
        let im = rate_function(&m, kind, &neg).unwrap().value;
        assert!((im - ip - (s[0] + s[1])).abs() < 1e-7, "{im} {ip} {s:?}");
    }
}

#[test]
fn sampler_is_reproducible_across_workers() {
    let m = toy(&[1.0, 2.0]);
    let a = sample_batch(&m, CompositeKind::Random, &mixed(), 12, 40, 7, 1).unwrap();
    let b = sample_batch(&m, CompositeKind::Random, &mixed(), 12, 40, 7, 3).unwrap();
    assert_eq!(a, b);
    let single = sample_trajectory(&m, CompositeKind::Random, &mixed(), 12, 7, 17).unwrap();
    assert_eq!(single, a[17]);
    for r in &a {
        for j in 0..2 {
            assert_eq!(r.cumulative_energy[j], -r.cumulative_entropy[j] / m.probes[j].beta);
        }
    }
}

#[test]
fn sampler_matches_exact_distribution() {
    let m = toy(&[1.0, 2.0]);
    let rho0 = gibbs_state(&(lowering_number() * c(0.9)), 1.3).unwrap();
    let n = 6;
    let recs = sample_batch(&m, CompositeKind::Cyclic, &rho0, n, 20_000, 11, 0).unwrap();
    let seq: Vec<usize> = (0..n).map(|i| i % 2).collect();
    let exact = exact_distribution(&m, &seq, &rho0).unwrap();
    let emp = empirical_distribution(&recs);
    let tv = total_variation(&exact, &emp);
    assert!(tv < 0.03, "tv {tv}");
}

fn lowering_number() -> Operator {
    let a = crate::model::lowering();
    a.adjoint() * a
}

#[test]
fn covariance_matches_kinetic_coefficients() {
    for m in [toy(&[1.0, 2.0]), toy3()] {
        let ons = crate::linres::onsager_report(&m).unwrap();
        let n = m.m();
        let d_ra = covariance(&m, CompositeKind::Random).unwrap();
        let d_cy = covariance(&m, CompositeKind::Cyclic).unwrap();
        for j in 0..n {
            for k in 0..n {
                let a = 2.0 * ons.l_ra[j][k];
                assert!((d_ra[j][k] - a).abs() <= 1e-6_f64.max(1e-3 * a.abs()), "{d_ra:?} {:?}", ons.l_ra);
                let b = ons.l_cy[j][k] + ons.l_rcy[j][k];
                assert!((d_cy[j][k] - b).abs() <= 1e-6_f64.max(1e-3 * b.abs()), "{d_cy:?} {b}");
            }
        }
    }
}

#[test]
fn covariance_is_the_hessian_of_the_energy_cgf() {
    let m = toy(&[1.3, 1.3]);
    let kind = CompositeKind::Cyclic;
    let d = covariance(&m, kind).unwrap();
    let h = 1e-3;
    let e = |a: f64, b: f64| energy_cgf(&m, kind, &[a, b]).unwrap();
    let d01 = (e(h, h) - e(h, -h) - e(-h, h) + e(-h, -h)) / (4.0 * h * h);
    let d00 = (e(h, 0.0) - 2.0 * e(0.0, 0.0) + e(-h, 0.0)) / (h * h);
    assert!((d01 - d[0][1]).abs() < 1e-6, "{d01} {:?}", d);
    assert!((d00 - d[0][0]).abs() < 1e-6, "{d00} {:?}", d);
}

#[test]
fn single_step_mgf_by_hand() {
    // one interaction, two-level probe: four (s, s') branches
    let m = toy(&[1.0, 2.0]);
    let rho0 = gibbs_state(&lowering_number(), 0.4).unwrap();
    let j = 1;
    let p = m.env_probabilities(j);
    let blocks = m.kraus_blocks(j, false);
    let lam = &m.env_decomposition(j).eigenvalues;
    let beta = m.probes[j].beta;
    for a in [-0.8, 0.3, 1.7] {
        let mut by_hand = 0.0;
        for k in 0..2 {
            for kp in 0..2 {
                let v = &blocks[k][kp];
                let pr = p[k] * crate::qlinalg::trace(&(v * &rho0 * v.adjoint())).re;
                by_hand += pr * (-a * beta * (lam[kp] - lam[k])).exp();
            }
        }
        let alpha = [0.0, a];
        let exact = mgf_finite(&m, &[j], &alpha, &rho0).unwrap();
        assert!((exact - by_hand).abs() < 1e-12, "{exact} vs {by_hand}");
    }
}

#[test]
fn decoupled_probes_give_zero_increments() {
    let m = toy_model(1.0, 0.9, &[0.0, 0.0], &[1.0, 1.0], &[1.0, 2.0], 1.3).unwrap();
    let recs = sample_batch(&m, CompositeKind::Random, &mixed(), 15, 50, 2, 0).unwrap();
    for r in &recs {
        assert!(r.steps.iter().all(|s| s.s == s.s_prime));
        assert!(r.cumulative_entropy.iter().all(|&x| x == 0.0));
    }
}

#[test]
fn recorded_outcomes_lie_in_the_probe_spectrum() {
    let m = toy(&[1.0, 2.0]);
    let recs = sample_batch(&m, CompositeKind::Cyclic, &mixed(), 10, 30, 5, 0).unwrap();
    for r in &recs {
        for st in &r.steps {
            let spec = &m.env_decomposition(st.probe).eigenvalues;
            let beta = m.probes[st.probe].beta;
            for x in [st.s, st.s_prime] {
                assert!(spec.iter().any(|l| (beta * l - x).abs() < 1e-9));
            }
        }
    }
}

#[test]
fn energy_cgf_is_the_rescaled_entropy_cgf() {
    let m = toy(&[1.0, 2.0]);
    for kind in CompositeKind::ALL {
        let a = [0.7, -0.2];
        let lhs = energy_cgf(&m, kind, &a).unwrap();
        let rhs = cgf(&m, kind, &[a[0] / 1.0, a[1] / 2.0]).unwrap().value;
        assert!((lhs - rhs).abs() < 1e-12);
        // translation along 1 for the energy CGF
        let shifted = energy_cgf(&m, kind, &[a[0] + 0.6, a[1] + 0.6]).unwrap();
        assert!((shifted - lhs).abs() < 1e-10, "{shifted} vs {lhs}");
    }
}

#[test]
fn evans_searles_fails_without_time_reversal_invariance() {
    use crate::model::ProbeSpec;
    use crate::qlinalg::random_hermitian;
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let h_sys = random_hermitian(&mut rng, 2);
    let probes = (0..2)
        .map(|j| ProbeSpec {
            h_env: random_hermitian(&mut rng, 2),
            coupling: random_hermitian(&mut rng, 4) * c(0.6),
            tau: 1.0,
            beta: [1.0, 2.0][j],
        })
        .collect();
    let m = RisModel::new(h_sys, probes, 1.3).unwrap();
    assert!(crate::model::check_tri_conjugation(&m) > 1e-6);
    let grid = [vec![0.3, -0.4], vec![1.2, 0.5]];
    let r = |kind, a: &[f64]| deformed_radius(&m, kind, a).unwrap();
    let es = grid
        .iter()
        .map(|a| {
            let f: Vec<f64> = a.iter().map(|x| 1.0 - x).collect();
            rel_diff(r(CompositeKind::Random, &f), r(CompositeKind::Random, a))
        })
        .fold(0.0, f64::max);
    assert!(es > 1e-4, "{es}");
}

#[test]
fn rate_function_is_convex_on_the_hyperplane() {
    let m = toy(&[1.0, 2.0]);
    let kind = CompositeKind::Random;
    let b = m.betas();
    let i = |t: f64| rate_function(&m, kind, &[t, -t * b[1] / b[0]]).unwrap().value;
    let (x, y) = (-0.04, 0.06);
    assert!(i(0.5 * (x + y)) <= 0.5 * (i(x) + i(y)) + 1e-8);
}
