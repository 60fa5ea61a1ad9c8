//! Dense complex linear algebra for small Hilbert spaces.
//!
//! Operators are `DMatrix<Complex64>`. Superoperators act on d×d operators and
//! are stored as d²×d² matrices on column-stacked vectors (nalgebra storage is
//! column-major, so `vec(X)` is just the raw slice), optionally with a weighted
//! Kraus list X ↦ Σ w_i V_i X V_i†.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type Operator = DMatrix<C64>;

/// Maximum |A − A†| entry accepted as Hermitian.
pub const HERMITIAN_TOL: f64 = 1e-10;
/// Eigenvalues closer than this are grouped into one spectral projector.
pub const CLUSTER_TOL: f64 = 1e-9;
/// Eigenvalues below this are treated as zero for log / negative powers.
pub const SINGULAR_TOL: f64 = 1e-14;
/// Minimum eigenvalue for the second argument of the relative entropy.
pub const FAITHFUL_TOL: f64 = 1e-12;
/// Choi eigenvalues below this are dropped when extracting Kraus operators.
pub const CHOI_DROP_TOL: f64 = 1e-11;
/// Kraus lists longer than this are not carried through compositions.
pub const MAX_KRAUS: usize = 4096;

pub fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

pub fn identity(d: usize) -> Operator {
    Operator::identity(d, d)
}

pub fn zeros(d: usize) -> Operator {
    Operator::zeros(d, d)
}

pub fn trace(a: &Operator) -> C64 {
    a.trace()
}

/// Tr(A B) without forming the product.
pub fn trace_prod(a: &Operator, b: &Operator) -> C64 {
    let n = a.nrows();
    let mut s = C64::new(0.0, 0.0);
    for i in 0..n {
        for k in 0..n {
            s += a[(i, k)] * b[(k, i)];
        }
    }
    s
}

/// Max entry of |A − A†|.
pub fn hermiticity_residual(a: &Operator) -> f64 {
    let n = a.nrows();
    let mut r: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            r = r.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    r
}

pub fn hermitian_part(a: &Operator) -> Operator {
    (a + a.adjoint()) * c(0.5)
}

pub fn frobenius(a: &Operator) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn max_abs(a: &Operator) -> f64 {
    a.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Entrywise complex conjugation (the basis time-reversal Θ).
pub fn conj(a: &Operator) -> Operator {
    a.map(|z| z.conj())
}

fn check_square(a: &Operator, what: &str) -> Result<usize> {
    if a.nrows() != a.ncols() {
        return Err(Error::Dimension(format!(
            "{what}: expected square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    Ok(a.nrows())
}

fn check_hermitian(a: &Operator, tol: f64) -> Result<()> {
    check_square(a, "hermitian input")?;
    let r = hermiticity_residual(a);
    if r > tol {
        return Err(Error::NotHermitian { residual: r });
    }
    Ok(())
}

/// Kronecker product, system factor first.
pub fn tensor(a: &Operator, b: &Operator) -> Operator {
    a.kronecker(b)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Keep {
    First,
    Second,
}

pub fn partial_trace(x: &Operator, dims: (usize, usize), keep: Keep) -> Result<Operator> {
    let (d1, d2) = dims;
    if x.nrows() != d1 * d2 || x.ncols() != d1 * d2 {
        return Err(Error::Dimension(format!(
            "partial_trace: operator is {}x{}, dims {}x{}",
            x.nrows(),
            x.ncols(),
            d1,
            d2
        )));
    }
    Ok(match keep {
        Keep::First => Operator::from_fn(d1, d1, |i, j| {
            (0..d2).map(|k| x[(i * d2 + k, j * d2 + k)]).sum()
        }),
        Keep::Second => Operator::from_fn(d2, d2, |k, l| {
            (0..d1).map(|i| x[(i * d2 + k, i * d2 + l)]).sum()
        }),
    })
}

/// A₁ = Tr₂((1⊗ρ₂)A), so that Tr(ρ₁⊗ρ₂ A) = Tr(ρ₁ A₁).
pub fn partial_trace_wrt_state(a: &Operator, rho2: &Operator, dims: (usize, usize)) -> Result<Operator> {
    let (d1, d2) = dims;
    if rho2.nrows() != d2 || rho2.ncols() != d2 {
        return Err(Error::Dimension(format!(
            "partial_trace_wrt_state: state is {}x{}, expected {d2}",
            rho2.nrows(),
            rho2.ncols()
        )));
    }
    if a.nrows() != d1 * d2 || a.ncols() != d1 * d2 {
        return Err(Error::Dimension(format!(
            "partial_trace_wrt_state: operator is {}x{}, dims {}x{}",
            a.nrows(),
            a.ncols(),
            d1,
            d2
        )));
    }
    let lifted = tensor(&identity(d1), rho2) * a;
    partial_trace(&lifted, dims, Keep::First)
}

/// Spectral data of a Hermitian matrix, eigenvalues ascending.
#[derive(Clone, Debug)]
pub struct HermitianDecomposition {
    pub eigenvalues: Vec<f64>,
    /// Columns are the eigenvectors, in the order of `eigenvalues`.
    pub eigenvectors: Operator,
    /// (eigenvalue, orthogonal projector), one per cluster.
    pub projectors: Vec<(f64, Operator)>,
    /// Cluster index of each eigenvalue.
    pub cluster_of: Vec<usize>,
}

impl HermitianDecomposition {
    pub fn reconstruct(&self) -> Operator {
        let n = self.eigenvectors.nrows();
        let mut h = zeros(n);
        for (l, p) in &self.projectors {
            h += p * c(*l);
        }
        h
    }

    pub fn apply_fn(&self, f: impl Fn(f64) -> f64) -> Operator {
        let u = &self.eigenvectors;
        let d = DMatrix::from_diagonal(&DVector::from_iterator(
            self.eigenvalues.len(),
            self.eigenvalues.iter().map(|&l| c(f(l))),
        ));
        u * d * u.adjoint()
    }

    pub fn apply_fn_complex(&self, f: impl Fn(f64) -> C64) -> Operator {
        let u = &self.eigenvectors;
        let d = DMatrix::from_diagonal(&DVector::from_iterator(
            self.eigenvalues.len(),
            self.eigenvalues.iter().map(|&l| f(l)),
        ));
        u * d * u.adjoint()
    }
}

pub fn hermitian_spectral_decomposition(h: &Operator) -> Result<HermitianDecomposition> {
    hermitian_spectral_decomposition_with(h, HERMITIAN_TOL, CLUSTER_TOL)
}

pub fn hermitian_spectral_decomposition_with(
    h: &Operator,
    herm_tol: f64,
    cluster_tol: f64,
) -> Result<HermitianDecomposition> {
    check_hermitian(h, herm_tol)?;
    let n = h.nrows();
    let eig = SymmetricEigen::new(hermitian_part(h));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let eigenvalues: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let eigenvectors = Operator::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);

    let mut projectors: Vec<(f64, Operator)> = Vec::new();
    let mut cluster_of = vec![0; n];
    let mut members: Vec<Vec<usize>> = Vec::new();
    for k in 0..n {
        if k > 0 && eigenvalues[k] - eigenvalues[k - 1] <= cluster_tol {
            members.last_mut().unwrap().push(k);
        } else {
            members.push(vec![k]);
        }
        cluster_of[k] = members.len() - 1;
    }
    for m in &members {
        let mean = m.iter().map(|&k| eigenvalues[k]).sum::<f64>() / m.len() as f64;
        let mut p = zeros(n);
        for &k in m {
            let v = eigenvectors.column(k);
            p += v * v.adjoint();
        }
        projectors.push((mean, p));
    }
    Ok(HermitianDecomposition {
        eigenvalues,
        eigenvectors,
        projectors,
        cluster_of,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MatFn {
    Exp,
    Log,
    Pow(f64),
}

pub fn matrix_function(h: &Operator, f: MatFn) -> Result<Operator> {
    let dec = hermitian_spectral_decomposition(h)?;
    let needs_positive = matches!(f, MatFn::Log) || matches!(f, MatFn::Pow(p) if p < 0.0);
    if needs_positive {
        if let Some(&bad) = dec.eigenvalues.iter().find(|&&l| l <= SINGULAR_TOL) {
            return Err(Error::Singular { eigenvalue: bad });
        }
    }
    Ok(match f {
        MatFn::Exp => dec.apply_fn(f64::exp),
        MatFn::Log => dec.apply_fn(f64::ln),
        // 0^0 = 1 so that ρ^0 = I even for rank-deficient ρ
        MatFn::Pow(p) => dec.apply_fn(|l| if p == 0.0 { 1.0 } else { l.max(0.0).powf(p) }),
    })
}

/// e^{−βh}/Tr e^{−βh}, with the spectrum shifted by its minimum first.
pub fn gibbs_state(h: &Operator, beta: f64) -> Result<Operator> {
    let dec = hermitian_spectral_decomposition(h)?;
    let lmin = dec.eigenvalues[0];
    let lmax = *dec.eigenvalues.last().unwrap();
    let shift = if beta >= 0.0 { lmin } else { lmax };
    let z: f64 = dec.eigenvalues.iter().map(|&l| (-beta * (l - shift)).exp()).sum();
    Ok(dec.apply_fn(|l| (-beta * (l - shift)).exp() / z))
}

/// e^{−iτh}.
pub fn propagator(h: &Operator, tau: f64) -> Result<Operator> {
    let dec = hermitian_spectral_decomposition(h)?;
    Ok(dec.apply_fn_complex(|l| C64::from_polar(1.0, -tau * l)))
}

pub fn vectorize(x: &Operator) -> DVector<C64> {
    DVector::from_column_slice(x.as_slice())
}

pub fn devectorize(v: &DVector<C64>, d: usize) -> Operator {
    Operator::from_column_slice(d, d, v.as_slice())
}

/// Linear map on d×d operators.
#[derive(Clone, Debug)]
pub struct Superoperator {
    pub dim: usize,
    pub matrix: DMatrix<C64>,
    pub kraus: Option<Vec<(f64, Operator)>>,
    pub trace_preserving: bool,
}

/// Matrix of X ↦ Σ w V X V†.
pub fn kraus_matrix(dim: usize, kraus: &[(f64, Operator)]) -> DMatrix<C64> {
    let mut m = DMatrix::zeros(dim * dim, dim * dim);
    for (w, v) in kraus {
        m += conj(v).kronecker(v) * c(*w);
    }
    m
}

impl Superoperator {
    pub fn from_matrix(dim: usize, matrix: DMatrix<C64>) -> Result<Self> {
        if matrix.nrows() != dim * dim || matrix.ncols() != dim * dim {
            return Err(Error::Dimension(format!(
                "superoperator matrix is {}x{}, expected {}",
                matrix.nrows(),
                matrix.ncols(),
                dim * dim
            )));
        }
        Ok(Superoperator {
            dim,
            matrix,
            kraus: None,
            trace_preserving: false,
        })
    }

    pub fn from_kraus(dim: usize, kraus: Vec<(f64, Operator)>) -> Result<Self> {
        for (w, v) in &kraus {
            if v.nrows() != dim || v.ncols() != dim {
                return Err(Error::Dimension(format!(
                    "Kraus operator is {}x{}, expected {dim}",
                    v.nrows(),
                    v.ncols()
                )));
            }
            if *w < 0.0 || !w.is_finite() {
                return Err(Error::InvalidInput(format!("Kraus weight {w} is not a nonnegative number")));
            }
        }
        let matrix = kraus_matrix(dim, &kraus);
        Ok(Superoperator {
            dim,
            matrix,
            kraus: Some(kraus),
            trace_preserving: false,
        })
    }

    pub fn identity(dim: usize) -> Self {
        Superoperator {
            dim,
            matrix: DMatrix::identity(dim * dim, dim * dim),
            kraus: Some(vec![(1.0, identity(dim))]),
            trace_preserving: true,
        }
    }

    /// X ↦ U X U†.
    pub fn conjugation(u: &Operator) -> Self {
        let d = u.nrows();
        let mut s = Self::from_kraus(d, vec![(1.0, u.clone())]).expect("square unitary");
        s.trace_preserving = true;
        s
    }

    pub fn apply(&self, x: &Operator) -> Operator {
        devectorize(&(&self.matrix * vectorize(x)), self.dim)
    }

    /// Direct Kraus application, when a Kraus list is present.
    pub fn apply_kraus(&self, x: &Operator) -> Option<Operator> {
        self.kraus.as_ref().map(|k| {
            let mut y = zeros(self.dim);
            for (w, v) in k {
                y += v * x * v.adjoint() * c(*w);
            }
            y
        })
    }

    /// self ∘ other.
    pub fn compose(&self, other: &Superoperator) -> Result<Self> {
        if self.dim != other.dim {
            return Err(Error::Dimension(format!(
                "compose: dims {} and {}",
                self.dim, other.dim
            )));
        }
        let kraus = match (&self.kraus, &other.kraus) {
            (Some(a), Some(b)) if a.len() * b.len() <= MAX_KRAUS => {
                let mut out = Vec::with_capacity(a.len() * b.len());
                for (wa, va) in a {
                    for (wb, vb) in b {
                        out.push((wa * wb, va * vb));
                    }
                }
                Some(out)
            }
            _ => None,
        };
        Ok(Superoperator {
            dim: self.dim,
            matrix: &self.matrix * &other.matrix,
            kraus,
            trace_preserving: self.trace_preserving && other.trace_preserving,
        })
    }

    /// Adjoint for the pairing Tr(Φ(ρ)A) = Tr(ρΦ*(A)).
    pub fn dual(&self) -> Self {
        let d = self.dim;
        // K Mᵀ K with K the commutation matrix vec(X) ↦ vec(Xᵀ)
        let m = &self.matrix;
        let swap = |p: usize| (p % d) * d + p / d;
        let matrix = DMatrix::from_fn(d * d, d * d, |p, q| m[(swap(q), swap(p))]);
        let kraus = self
            .kraus
            .as_ref()
            .map(|k| k.iter().map(|(w, v)| (*w, v.adjoint())).collect());
        Superoperator {
            dim: d,
            matrix,
            kraus,
            trace_preserving: false,
        }
    }

    /// Σ p_i S_i.
    pub fn weighted_sum(parts: &[(f64, &Superoperator)]) -> Result<Self> {
        let dim = parts
            .first()
            .ok_or_else(|| Error::InvalidInput("empty superoperator sum".into()))?
            .1
            .dim;
        let mut matrix = DMatrix::zeros(dim * dim, dim * dim);
        let mut kraus = Some(Vec::new());
        let mut tp = true;
        let mut wsum = 0.0;
        for (p, s) in parts {
            if s.dim != dim {
                return Err(Error::Dimension("weighted_sum: mismatched dims".into()));
            }
            matrix += &s.matrix * c(*p);
            kraus = match (kraus, &s.kraus) {
                (Some(mut acc), Some(k)) if *p >= 0.0 => {
                    acc.extend(k.iter().map(|(w, v)| (w * p, v.clone())));
                    Some(acc)
                }
                _ => None,
            };
            tp &= s.trace_preserving;
            wsum += p;
        }
        Ok(Superoperator {
            dim,
            matrix,
            kraus,
            trace_preserving: tp && (wsum - 1.0).abs() < 1e-14,
        })
    }

    /// ‖Φ*(1) − 1‖ (max entry).
    pub fn tp_residual(&self) -> f64 {
        max_abs(&(self.dual().apply(&identity(self.dim)) - identity(self.dim)))
    }

    /// Choi matrix Σ_ij E_ij ⊗ Φ(E_ij).
    pub fn choi(&self) -> Operator {
        let d = self.dim;
        let m = &self.matrix;
        Operator::from_fn(d * d, d * d, |r, s| {
            let (i, a) = (r / d, r % d);
            let (j, b) = (s / d, s % d);
            m[(b * d + a, j * d + i)]
        })
    }

    pub fn choi_min_eigenvalue(&self) -> f64 {
        let ch = hermitian_part(&self.choi());
        SymmetricEigen::new(ch).eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Kraus list, extracted from the Choi matrix when not stored.
    pub fn kraus_list(&self) -> Vec<(f64, Operator)> {
        if let Some(k) = &self.kraus {
            return k.clone();
        }
        let d = self.dim;
        let eig = SymmetricEigen::new(hermitian_part(&self.choi()));
        let mut out = Vec::new();
        for (k, &l) in eig.eigenvalues.iter().enumerate() {
            if l > CHOI_DROP_TOL {
                let v = eig.eigenvectors.column(k).into_owned();
                out.push((l, devectorize(&v, d)));
            }
        }
        out
    }

    /// Sets the trace-preserving flag after checking it.
    pub fn verify_cptp(mut self, tol: f64) -> Result<Self> {
        let tp = self.tp_residual();
        if tp > tol {
            return Err(Error::NotCptp(format!("trace-preservation residual {tp:.3e}")));
        }
        let cm = self.choi_min_eigenvalue();
        if cm < -tol {
            return Err(Error::NotCptp(format!("Choi minimum eigenvalue {cm:.3e}")));
        }
        self.trace_preserving = true;
        Ok(self)
    }
}

fn entropy_terms(rho: &Operator) -> Result<(HermitianDecomposition, f64)> {
    let dec = hermitian_spectral_decomposition(rho)?;
    let s = dec
        .eigenvalues
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.ln())
        .sum();
    Ok((dec, s))
}

/// −Tr ρ log ρ with 0 log 0 = 0.
pub fn von_neumann_entropy(rho: &Operator) -> Result<f64> {
    Ok(entropy_terms(rho)?.1)
}

/// Tr ρ(log ρ − log ν); ν must be faithful.
pub fn relative_entropy(rho: &Operator, nu: &Operator) -> Result<f64> {
    relative_entropy_floor(rho, nu, None)
}

/// Relative entropy where eigenvalues of ν below `floor` are raised to it
/// instead of raising an error (for numerically rank-deficient transients).
pub fn relative_entropy_floor(rho: &Operator, nu: &Operator, floor: Option<f64>) -> Result<f64> {
    let (_, s_rho) = entropy_terms(rho)?;
    let dn = hermitian_spectral_decomposition(nu)?;
    let min = dn.eigenvalues[0];
    let log_nu = match floor {
        None => {
            if min <= FAITHFUL_TOL {
                return Err(Error::NotFaithful { min_eigenvalue: min });
            }
            dn.apply_fn(f64::ln)
        }
        Some(f) => dn.apply_fn(|l| l.max(f).ln()),
    };
    Ok(-s_rho - trace_prod(rho, &log_nu).re)
}

/// Max entry error of state invariants: (hermiticity, |Tr − 1|, −min eigenvalue).
pub fn density_residuals(rho: &Operator) -> Result<(f64, f64, f64)> {
    check_square(rho, "density matrix")?;
    let h = hermiticity_residual(rho);
    let t = (trace(rho) - c(1.0)).norm();
    let min = SymmetricEigen::new(hermitian_part(rho))
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    Ok((h, t, (-min).max(0.0)))
}

pub fn is_density_matrix(rho: &Operator, tol: f64) -> bool {
    matches!(density_residuals(rho), Ok((h, t, m)) if h <= tol && t <= tol && m <= tol)
}

pub fn random_matrix<R: Rng + ?Sized>(rng: &mut R, d: usize) -> Operator {
    Operator::from_fn(d, d, |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
}

pub fn random_hermitian<R: Rng + ?Sized>(rng: &mut R, d: usize) -> Operator {
    hermitian_part(&random_matrix(rng, d))
}

/// Real symmetric matrix with entries in [−1, 1].
pub fn random_real_symmetric<R: Rng + ?Sized>(rng: &mut R, d: usize) -> Operator {
    let a = Operator::from_fn(d, d, |_, _| c(rng.gen_range(-1.0..1.0)));
    hermitian_part(&a)
}

/// Faithful random state A A† / Tr, with A Ginibre-like.
pub fn random_density<R: Rng + ?Sized>(rng: &mut R, d: usize) -> Operator {
    let a = random_matrix(rng, d);
    let p = &a * a.adjoint() + identity(d) * c(1e-3);
    let t = trace(&p);
    p / t
}
