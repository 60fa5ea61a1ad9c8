use nalgebra::{DMatrix, DVector};

use super::{cgf, inverse_betas};
use crate::error::{Error, Result};
use crate::model::{self, RisModel};
use crate::semigroup::CompositeKind;

#[derive(Clone, Debug)]
pub struct RateOptions {
    pub max_iter: usize,
    pub grad_tol: f64,
    /// Below this gradient norm a failed line search counts as converged (noise floor).
    pub stagnation_tol: f64,
    pub fd_step: f64,
    /// ‖α‖ beyond which the supremum is declared infinite.
    pub divergence_radius: f64,
    pub hyperplane_tol: f64,
    /// Skips the non-entanglement check when set.
    pub ne: Option<bool>,
}

impl Default for RateOptions {
    fn default() -> Self {
        RateOptions {
            max_iter: 500,
            grad_tol: 1e-9,
            stagnation_tol: 1e-6,
            fd_step: 1e-4,
            divergence_radius: 1e3,
            hyperplane_tol: 1e-10,
            ne: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct RateFunctionResult {
    pub sigma: Vec<f64>,
    /// +∞ off the hyperplane under non-entanglement or when the supremum diverges.
    pub value: f64,
    pub argmax_alpha: Option<Vec<f64>>,
    pub iterations: usize,
    pub grad_norm: f64,
    pub ne: bool,
    pub on_hyperplane: bool,
    pub diverged: bool,
}

pub fn rate_function(model: &RisModel, kind: CompositeKind, sigma: &[f64]) -> Result<RateFunctionResult> {
    rate_function_with(model, kind, sigma, &RateOptions::default())
}

/// I^♯(ς) = sup_α (α·ς − e^♯(−α)) by gradient ascent with Armijo backtracking
/// and Barzilai-Borwein steps. Under non-entanglement the search runs on the
/// quotient by β^{-1}.
pub fn rate_function_with(
    model: &RisModel,
    kind: CompositeKind,
    sigma: &[f64],
    opts: &RateOptions,
) -> Result<RateFunctionResult> {
    let m = model.m();
    if sigma.len() != m {
        return Err(Error::InvalidInput(format!("sigma has length {}, expected {m}", sigma.len())));
    }
    let ne = match opts.ne {
        Some(v) => v,
        None => model::check_ne_model(model, model::NE_TOL)?.holds,
    };
    let inv_beta = inverse_betas(model)?;
    let pairing: f64 = sigma.iter().zip(&inv_beta).map(|(s, b)| s * b).sum();
    let on_hyperplane = pairing.abs() <= opts.hyperplane_tol;
    let mut out = RateFunctionResult {
        sigma: sigma.to_vec(),
        value: f64::INFINITY,
        argmax_alpha: None,
        iterations: 0,
        grad_norm: f64::NAN,
        ne,
        on_hyperplane,
        diverged: false,
    };
    if ne && !on_hyperplane {
        return Ok(out);
    }
    let basis = if ne { complement_basis(&inv_beta) } else { DMatrix::identity(m, m) };
    let sig = DVector::from_column_slice(sigma);
    let objective = |theta: &DVector<f64>| -> Result<f64> {
        let alpha = &basis * theta;
        let neg: Vec<f64> = alpha.iter().map(|a| -a).collect();
        Ok(alpha.dot(&sig) - cgf(model, kind, &neg)?.value)
    };
    let gradient = |theta: &DVector<f64>| -> Result<DVector<f64>> {
        let n = theta.len();
        let mut g = DVector::zeros(n);
        for i in 0..n {
            let central = |h: f64| -> Result<f64> {
                let mut p = theta.clone();
                let mut q = theta.clone();
                p[i] += h;
                q[i] -= h;
                Ok((objective(&p)? - objective(&q)?) / (2.0 * h))
            };
            let h = opts.fd_step;
            g[i] = (4.0 * central(h / 2.0)? - central(h)?) / 3.0;
        }
        Ok(g)
    };

    let mut theta = DVector::zeros(basis.ncols());
    let mut f = objective(&theta)?;
    let mut g = gradient(&theta)?;
    let mut step = 1.0;
    for it in 0..opts.max_iter {
        out.iterations = it;
        out.grad_norm = g.norm();
        if out.grad_norm <= opts.grad_tol {
            break;
        }
        let g2 = g.norm_squared();
        let mut t = step;
        let mut accepted = None;
        for _ in 0..80 {
            let cand = &theta + &g * t;
            if (&basis * &cand).norm() > opts.divergence_radius {
                out.diverged = true;
                return Ok(out);
            }
            if let Ok(fc) = objective(&cand) {
                if fc >= f + 1e-4 * t * g2 {
                    accepted = Some((cand, fc));
                    break;
                }
            }
            t *= 0.5;
        }
        let Some((next, fnext)) = accepted else {
            if out.grad_norm <= opts.stagnation_tol {
                break;
            }
            return Err(Error::Optimizer(format!(
                "line search failed at iteration {it}, gradient norm {:.3e}, alpha {:?}",
                out.grad_norm,
                (&basis * &theta).as_slice()
            )));
        };
        let gnext = gradient(&next)?;
        let s = &next - &theta;
        let y = &gnext - &g;
        let sy = s.dot(&y).abs();
        step = if sy > 0.0 { s.norm_squared() / sy } else { 1.0 };
        theta = next;
        f = fnext;
        g = gnext;
        if it + 1 == opts.max_iter && g.norm() > opts.stagnation_tol {
            return Err(Error::Optimizer(format!(
                "no convergence in {} iterations, gradient norm {:.3e}",
                opts.max_iter,
                g.norm()
            )));
        }
    }
    let alpha = &basis * &theta;
    out.value = f;
    out.argmax_alpha = Some(alpha.iter().copied().collect());
    Ok(out)
}

/// Orthonormal basis of the orthogonal complement of v (columns).
fn complement_basis(v: &[f64]) -> DMatrix<f64> {
    let m = v.len();
    let u = DVector::from_column_slice(v).normalize();
    let mut cols: Vec<DVector<f64>> = Vec::with_capacity(m - 1);
    for i in 0..m {
        if cols.len() == m - 1 {
            break;
        }
        let mut e = DVector::zeros(m);
        e[i] = 1.0;
        e -= &u * u.dot(&e);
        for c in &cols {
            e -= c * c.dot(&e);
        }
        let n = e.norm();
        if n > 1e-8 {
            cols.push(e / n);
        }
    }
    DMatrix::from_columns(&cols)
}
