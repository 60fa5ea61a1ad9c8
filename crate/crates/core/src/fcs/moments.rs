use crate::error::{Error, Result};
use crate::linres::{self, to_c, EquilibriumData};
use crate::model::RisModel;
use crate::qlinalg::{identity, Operator};
use crate::semigroup::{self, CompositeKind};
use crate::thermo::apply_duals;

/// Derivatives of r^♯(α) at α = 0.
#[derive(Clone, Debug)]
pub struct Moments {
    pub kind: CompositeKind,
    pub first: Vec<f64>,
    pub second: Vec<Vec<f64>>,
}

struct Derivs<'a> {
    eq: &'a EquilibriumData,
    betas: Vec<f64>,
}

impl Derivs<'_> {
    fn before(&self, j: usize, x: &Operator) -> Operator {
        if !self.eq.kind.is_cyclic() {
            return x.clone();
        }
        apply_duals(&self.eq.duals, &self.eq.order, 0..self.eq.position(j), x)
    }

    fn weight(&self, j: usize) -> f64 {
        if self.eq.kind.is_cyclic() {
            1.0
        } else {
            self.eq.model.weights()[j]
        }
    }

    /// L_j*(XH') − L_j*(X)H'.
    fn delta(&self, j: usize, x: &Operator) -> Operator {
        let h = &self.eq.h_prime;
        let l = &self.eq.duals[j];
        l.apply(&(x * h)) - l.apply(x) * h
    }

    /// ∂_{α_j} of the deformed period dual at α = 0.
    fn d1(&self, j: usize, x: &Operator) -> Operator {
        let inner = self.eq.after(j, x);
        self.before(j, &self.delta(j, &inner)) * to_c(self.betas[j] * self.weight(j))
    }

    /// ∂_{α_j}∂_{α_k} of the deformed period dual applied to 1.
    fn d2_one(&self, j: usize, k: usize) -> Operator {
        let d = self.eq.model.d_sys();
        let one = identity(d);
        let h = &self.eq.h_prime;
        let bb = to_c(self.betas[j] * self.betas[k]);
        if j == k {
            let l = &self.eq.duals[j];
            let lh = l.apply(h);
            let e = l.apply(&(h * h)) - &lh * h - h * &lh + h * h;
            return self.before(j, &e) * bb * to_c(self.weight(j));
        }
        if !self.eq.kind.is_cyclic() {
            return Operator::zeros(d, d);
        }
        let (a, b) = if self.eq.position(j) < self.eq.position(k) { (j, k) } else { (k, j) };
        let (pa, pb) = (self.eq.position(a), self.eq.position(b));
        let inner = self.delta(b, &one);
        let between = apply_duals(&self.eq.duals, &self.eq.order, pa + 1..pb, &inner);
        self.before(a, &self.delta(a, &between)) * bb
    }
}

/// Closed-form first and second derivatives of r^♯ at α = 0, at the model's
/// temperatures. Requires non-entanglement.
pub fn moments_analytic(model: &RisModel, kind: CompositeKind) -> Result<Moments> {
    let eq = EquilibriumData::new(model, kind, true)?;
    let m = model.m();
    let dv = Derivs { eq: &eq, betas: model.betas() };
    let one = identity(model.d_sys());
    let first: Vec<f64> = (0..m).map(|j| eq.expect(&dv.d1(j, &one))).collect();
    let resolved = (0..m)
        .map(|k| linres::resolvent_solve(&eq.composite_dual, &eq.rho, &dv.d1(k, &one)))
        .collect::<Result<Vec<_>>>()?;
    let mut second = vec![vec![0.0; m]; m];
    for j in 0..m {
        for k in j..m {
            let v = eq.expect(&dv.d2_one(j, k))
                + eq.expect(&dv.d1(j, &resolved[k]))
                + eq.expect(&dv.d1(k, &resolved[j]));
            second[j][k] = v;
            second[k][j] = v;
        }
    }
    Ok(Moments { kind, first, second })
}

/// Finite-difference derivatives of the dense Perron radius, with Richardson
/// extrapolation. Independent of the closed form.
pub fn moments_fd(model: &RisModel, kind: CompositeKind, step: f64) -> Result<Moments> {
    let m = model.m();
    let r = |a: &[f64]| -> Result<f64> {
        let s = semigroup::composite_deformed(model, kind, a)?;
        Ok(semigroup::dense_spectrum(&s).radius)
    };
    let at = |pairs: &[(usize, f64)]| -> Result<f64> {
        let mut a = vec![0.0; m];
        for &(i, v) in pairs {
            a[i] += v;
        }
        r(&a)
    };
    let r0 = r(&vec![0.0; m])?;
    let first_h = |j: usize, h: f64| -> Result<f64> { Ok((at(&[(j, h)])? - at(&[(j, -h)])?) / (2.0 * h)) };
    let second_h = |j: usize, k: usize, h: f64| -> Result<f64> {
        if j == k {
            Ok((at(&[(j, h)])? - 2.0 * r0 + at(&[(j, -h)])?) / (h * h))
        } else {
            Ok((at(&[(j, h), (k, h)])? - at(&[(j, h), (k, -h)])? - at(&[(j, -h), (k, h)])? + at(&[(j, -h), (k, -h)])?)
                / (4.0 * h * h))
        }
    };
    let rich = |f: &dyn Fn(f64) -> Result<f64>| -> Result<f64> { Ok((4.0 * f(step / 2.0)? - f(step)?) / 3.0) };
    let first = (0..m).map(|j| rich(&|h| first_h(j, h))).collect::<Result<Vec<_>>>()?;
    let mut second = vec![vec![0.0; m]; m];
    for j in 0..m {
        for k in j..m {
            let v = rich(&|h| second_h(j, k, h))?;
            second[j][k] = v;
            second[k][j] = v;
        }
    }
    Ok(Moments { kind, first, second })
}

/// Entropic covariance at equilibrium: D_jk = τ♯⁻¹ (r_jk − r_j r_k)/(β_j β_k).
pub fn covariance(model: &RisModel, kind: CompositeKind) -> Result<Vec<Vec<f64>>> {
    let eq_model = model.equilibrium();
    if eq_model.beta_ref == 0.0 {
        return Err(Error::InvalidInput("covariance needs beta_ref != 0".into()));
    }
    let mo = moments_analytic(&eq_model, kind)?;
    let tau = kind.timescale(&eq_model);
    let b = eq_model.betas();
    let m = model.m();
    Ok((0..m)
        .map(|j| {
            (0..m)
                .map(|k| (mo.second[j][k] - mo.first[j] * mo.first[k]) / (b[j] * b[k] * tau))
                .collect()
        })
        .collect())
}
