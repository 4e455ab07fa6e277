//! Dense complex linear algebra: Kronecker products, LU solves, the matrix
//! exponential by scaling and squaring, and the action of an exponential on
//! a vector.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use num_complex::Complex;
use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::scalar::{cr, Real};

pub type CMatrix<T> = Array2<Complex<T>>;
pub type CVector<T> = Array1<Complex<T>>;

pub fn identity<T: Real>(n: usize) -> CMatrix<T> {
    Array2::from_diag_elem(n, Complex::one())
}

pub fn scale<T: Real>(a: &CMatrix<T>, s: Complex<T>) -> CMatrix<T> {
    a.mapv(|x| x * s)
}

/// Conjugate transpose.
pub fn dagger<T: Real>(a: &CMatrix<T>) -> CMatrix<T> {
    a.t().mapv(|x| x.conj())
}

/// Kronecker product `a ⊗ b`.
pub fn kron<T: Real>(a: &CMatrix<T>, b: &CMatrix<T>) -> CMatrix<T> {
    let (ar, ac) = a.dim();
    let (br, bc) = b.dim();
    let mut out = Array2::zeros((ar * br, ac * bc));
    for ((i, j), &aij) in a.indexed_iter() {
        if aij.is_zero() {
            continue;
        }
        for ((k, l), &bkl) in b.indexed_iter() {
            out[[i * br + k, j * bc + l]] = aij * bkl;
        }
    }
    out
}

/// Induced 1-norm (maximum absolute column sum).
pub fn norm1<T: Real>(a: &CMatrix<T>) -> T {
    a.axis_iter(Axis(1))
        .map(|col| col.iter().map(|z| z.norm()).sum::<T>())
        .fold(T::zero(), T::max)
}

pub fn norm_inf_vec<T: Real>(v: ArrayView1<'_, Complex<T>>) -> T {
    v.iter().map(|z| z.norm()).fold(T::zero(), T::max)
}

// max(|re| + |im|): within √2 of the modulus and free of hypot calls.
fn cheap_norm<T: Real>(v: ArrayView1<'_, Complex<T>>) -> T {
    v.iter().map(|z| z.re.abs() + z.im.abs()).fold(T::zero(), T::max)
}

pub fn max_abs_diff<T: Real>(a: &CMatrix<T>, b: &CMatrix<T>) -> T {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (*x - *y).norm())
        .fold(T::zero(), T::max)
}

pub fn all_finite<T: Real>(a: &CMatrix<T>) -> bool {
    a.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Solves `a · x = b` by LU decomposition with partial pivoting.
pub fn solve<T: Real>(a: &CMatrix<T>, b: &CMatrix<T>) -> Result<CMatrix<T>> {
    let n = a.nrows();
    if a.ncols() != n || b.nrows() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: b.nrows(),
        });
    }
    let mut lu = a.clone();
    let mut x = b.clone();
    let m = x.ncols();
    for k in 0..n {
        let (piv, pmax) = (k..n)
            .map(|i| (i, lu[[i, k]].norm()))
            .fold((k, -T::one()), |acc, v| if v.1 > acc.1 { v } else { acc });
        if pmax <= T::zero() || !pmax.is_finite() {
            return Err(Error::Numerical("singular matrix in LU solve".into()));
        }
        if piv != k {
            for j in 0..n {
                lu.swap([k, j], [piv, j]);
            }
            for j in 0..m {
                x.swap([k, j], [piv, j]);
            }
        }
        let inv: Complex<T> = cr(T::one()) / lu[[k, k]];
        for i in (k + 1)..n {
            let f: Complex<T> = lu[[i, k]] * inv;
            if f.is_zero() {
                continue;
            }
            lu[[i, k]] = f;
            for j in (k + 1)..n {
                let u = lu[[k, j]];
                lu[[i, j]] -= f * u;
            }
            for j in 0..m {
                let u = x[[k, j]];
                x[[i, j]] -= f * u;
            }
        }
    }
    for k in (0..n).rev() {
        let inv: Complex<T> = cr(T::one()) / lu[[k, k]];
        for j in 0..m {
            let mut acc = x[[k, j]];
            for l in (k + 1)..n {
                acc -= lu[[k, l]] * x[[l, j]];
            }
            x[[k, j]] = acc * inv;
        }
    }
    Ok(x)
}

const PADE3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const PADE5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const PADE7: [f64; 8] = [
    17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0,
];
const PADE9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
// Backward-error thresholds for double precision; the Padé remainder stays
// below unit roundoff for ‖A‖₁ under these bounds.
const THETA: [(usize, f64); 4] = [
    (3, 1.495585217958292e-2),
    (5, 2.539398330063230e-1),
    (7, 9.504178996162932e-1),
    (9, 2.097847961257068e0),
];
const THETA13: f64 = 5.371920351148152;

fn lin_comb<T: Real>(terms: &[(f64, &CMatrix<T>)]) -> CMatrix<T> {
    let mut out = Array2::zeros(terms[0].1.raw_dim());
    for &(coef, m) in terms {
        let c = cr(T::lit(coef));
        out.zip_mut_with(m, |o, &x| *o += x * c);
    }
    out
}

fn add_diag<T: Real>(a: &mut CMatrix<T>, v: T) {
    for i in 0..a.nrows() {
        a[[i, i]] += cr(v);
    }
}

fn pade_low<T: Real>(a: &CMatrix<T>, b: &[f64]) -> (CMatrix<T>, CMatrix<T>) {
    // Even powers A^0, A^2, A^4, ...
    let a2 = a.dot(a);
    let mut powers = vec![identity::<T>(a.nrows())];
    while powers.len() * 2 < b.len() {
        let next = powers.last().unwrap().dot(&a2);
        powers.push(next);
    }
    let mut u_inner: CMatrix<T> = Array2::zeros(a.raw_dim());
    let mut v: CMatrix<T> = Array2::zeros(a.raw_dim());
    for (k, p) in powers.iter().enumerate() {
        let (ce, co) = (cr(T::lit(b[2 * k])), cr(T::lit(b[2 * k + 1])));
        v.zip_mut_with(p, |o, &x| *o += x * ce);
        u_inner.zip_mut_with(p, |o, &x| *o += x * co);
    }
    (a.dot(&u_inner), v)
}

fn pade13<T: Real>(a: &CMatrix<T>) -> (CMatrix<T>, CMatrix<T>) {
    let b = &PADE13;
    let a2 = a.dot(a);
    let a4 = a2.dot(&a2);
    let a6 = a4.dot(&a2);
    let mut u_hi = lin_comb(&[(b[13], &a6), (b[11], &a4), (b[9], &a2)]);
    u_hi = a6.dot(&u_hi);
    let mut u_inner = lin_comb(&[(1.0, &u_hi), (b[7], &a6), (b[5], &a4), (b[3], &a2)]);
    add_diag(&mut u_inner, T::lit(b[1]));
    let u = a.dot(&u_inner);
    let v_hi = a6.dot(&lin_comb(&[(b[12], &a6), (b[10], &a4), (b[8], &a2)]));
    let mut v = lin_comb(&[(1.0, &v_hi), (b[6], &a6), (b[4], &a4), (b[2], &a2)]);
    add_diag(&mut v, T::lit(b[0]));
    (u, v)
}

/// Matrix exponential by scaling and squaring with a diagonal Padé kernel of
/// degree 3, 5, 7, 9 or 13 chosen from the 1-norm of `a`.
pub fn expm<T: Real>(a: &CMatrix<T>) -> Result<CMatrix<T>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::InvalidDimension(format!(
            "expm of non-square {}x{} matrix",
            n,
            a.ncols()
        )));
    }
    if !all_finite(a) {
        return Err(Error::Numerical("non-finite entry in matrix exponential input".into()));
    }
    let norm = norm1(a).as_f64();
    let finish = |u: CMatrix<T>, v: CMatrix<T>| solve(&(&v - &u), &(&v + &u));

    for &(m, theta) in THETA.iter() {
        if norm <= theta {
            let coeffs: &[f64] = match m {
                3 => &PADE3,
                5 => &PADE5,
                7 => &PADE7,
                _ => &PADE9,
            };
            let (u, v) = pade_low(a, coeffs);
            return finish(u, v);
        }
    }
    let s = if norm > THETA13 {
        (norm / THETA13).log2().ceil().max(0.0) as i32
    } else {
        0
    };
    let scaled = scale(a, cr(T::lit(2f64.powi(-s))));
    let (u, v) = pade13(&scaled);
    let mut x = finish(u, v)?;
    for _ in 0..s {
        x = x.dot(&x);
    }
    if !all_finite(&x) {
        return Err(Error::Numerical("matrix exponential overflowed".into()));
    }
    Ok(x)
}

/// A linear operator that can be applied to vectors; used by [`expm_action`].
pub trait LinearOperator<T: Real> {
    fn dim(&self) -> usize;
    /// Upper bound on the induced 1-norm.
    fn norm1_bound(&self) -> T;
    fn apply(&self, x: &CVector<T>) -> CVector<T>;
}

impl<T: Real> LinearOperator<T> for CMatrix<T> {
    fn dim(&self) -> usize {
        self.nrows()
    }
    fn norm1_bound(&self) -> T {
        norm1(self)
    }
    fn apply(&self, x: &CVector<T>) -> CVector<T> {
        self.dot(x)
    }
}

/// Compressed-row complex matrix. Liouvillians of ladder models are mostly
/// zeros, so actions on vectors are much cheaper in this form.
#[derive(Debug, Clone)]
pub struct SparseMatrix<T> {
    dim: usize,
    row_start: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<Complex<T>>,
    norm1: T,
}

impl<T: Real> SparseMatrix<T> {
    /// Keeps the exactly nonzero entries of a square matrix.
    pub fn from_dense(m: &CMatrix<T>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::InvalidDimension(format!("{}x{} is not square", m.nrows(), m.ncols())));
        }
        let dim = m.nrows();
        let mut row_start = Vec::with_capacity(dim + 1);
        let (mut cols, mut vals) = (Vec::new(), Vec::new());
        row_start.push(0);
        for row in m.rows() {
            for (j, &z) in row.iter().enumerate() {
                if z != Complex::zero() {
                    cols.push(j);
                    vals.push(z);
                }
            }
            row_start.push(cols.len());
        }
        Ok(Self { dim, row_start, cols, vals, norm1: norm1(m) })
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn transpose(&self) -> Self {
        let mut dense = Array2::zeros((self.dim, self.dim));
        for i in 0..self.dim {
            for k in self.row_start[i]..self.row_start[i + 1] {
                dense[[self.cols[k], i]] = self.vals[k];
            }
        }
        Self::from_dense(&dense).expect("square by construction")
    }

    fn apply_into(&self, x: ArrayView1<'_, Complex<T>>, out: &mut [Complex<T>]) {
        for (i, o) in out.iter_mut().enumerate() {
            let mut acc = Complex::zero();
            for k in self.row_start[i]..self.row_start[i + 1] {
                acc += self.vals[k] * x[self.cols[k]];
            }
            *o = acc;
        }
    }
}

impl<T: Real> LinearOperator<T> for SparseMatrix<T> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn norm1_bound(&self) -> T {
        self.norm1
    }
    fn apply(&self, x: &CVector<T>) -> CVector<T> {
        let mut out = vec![Complex::zero(); self.dim];
        self.apply_into(x.view(), &mut out);
        Array1::from(out)
    }
}

/// Block operator `[[a, b], [0, a]]`. Its exponential carries the Fréchet
/// derivative of `exp` at `a` in direction `b` in the upper-right block.
pub struct FrechetBlock<'a, A: ?Sized, B: ?Sized> {
    pub a: &'a A,
    pub b: &'a B,
}

impl<T: Real, A, B> LinearOperator<T> for FrechetBlock<'_, A, B>
where
    A: LinearOperator<T> + ?Sized,
    B: LinearOperator<T> + ?Sized,
{
    fn dim(&self) -> usize {
        2 * self.a.dim()
    }
    fn norm1_bound(&self) -> T {
        self.a.norm1_bound() + self.b.norm1_bound()
    }
    fn apply(&self, x: &CVector<T>) -> CVector<T> {
        let d = self.a.dim();
        let top = x.slice(ndarray::s![..d]).to_owned();
        let bottom = x.slice(ndarray::s![d..]).to_owned();
        let upper = self.a.apply(&top) + self.b.apply(&bottom);
        let lower = self.a.apply(&bottom);
        let mut out = Array1::zeros(2 * d);
        out.slice_mut(ndarray::s![..d]).assign(&upper);
        out.slice_mut(ndarray::s![d..]).assign(&lower);
        out
    }
}

// Taylor substeps are limited to ‖A·h‖₁ ≤ 4, so the largest series term is
// about 4⁴/4! ≈ 10 and cancellation costs at most one digit.
const ACTION_SUBSTEP_NORM: f64 = 4.0;
const ACTION_MAX_TERMS: usize = 80;

/// Computes `exp(t·A)·v` by a truncated Taylor series on `s` substeps,
/// without forming the exponential.
pub fn expm_action<T: Real, Op: LinearOperator<T> + ?Sized>(
    op: &Op,
    v: &CVector<T>,
    t: T,
) -> Result<CVector<T>> {
    if v.len() != op.dim() {
        return Err(Error::DimensionMismatch {
            expected: op.dim(),
            actual: v.len(),
        });
    }
    let norm = (op.norm1_bound() * t.abs()).as_f64();
    if !norm.is_finite() {
        return Err(Error::Numerical("non-finite operator norm".into()));
    }
    let steps = ((norm / ACTION_SUBSTEP_NORM).ceil() as usize).max(1);
    let h = t / T::lit(steps as f64);
    let tol = T::epsilon() * T::lit(0.5);
    let mut x = v.clone();
    for _ in 0..steps {
        let mut term = x.clone();
        let mut acc = x.clone();
        let mut small_in_a_row = 0;
        let mut converged = false;
        for k in 1..=ACTION_MAX_TERMS {
            let factor = cr(h / T::lit(k as f64));
            term = op.apply(&term);
            term.mapv_inplace(|z| z * factor);
            acc += &term;
            let tn = cheap_norm(term.view());
            let an = cheap_norm(acc.view());
            if tn <= tol * an || tn.is_zero() {
                small_in_a_row += 1;
                if small_in_a_row == 2 {
                    converged = true;
                    break;
                }
            } else {
                small_in_a_row = 0;
            }
        }
        if !converged {
            return Err(Error::Numerical("Taylor series for exp action did not converge".into()));
        }
        x = acc;
    }
    if x.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Numerical("non-finite result in exp action".into()));
    }
    Ok(x)
}
