//! Ladder-system Hamiltonians, Lindblad channels, Liouvillian superoperators
//! and exact piecewise-constant propagation of density matrices.
//!
//! Density matrices are vectorized by stacking columns, so that
//! `vec(A ρ B) = (Bᵀ ⊗ A) vec(ρ)` and `vec(ρ)[i + j·n] = ρ[i, j]`.
//! Levels are numbered from 1 (ground) to n (highest) in the public API.
//! ħ = 1 throughout.

use ndarray::{Array1, Array2};
use num_complex::Complex;
use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, CVector};
use crate::scalar::{c, cr, Real};

pub type ComplexMatrix<T> = CMatrix<T>;

/// The physical system: an n-level ladder with nearest-neighbour coupling.
#[derive(Debug, Clone, PartialEq)]
pub struct LadderModel<T> {
    energies: Vec<T>,
    gamma_max: T,
    dephasing_rate: T,
    decay_rate: T,
}

impl<T: Real> LadderModel<T> {
    pub fn new(energies: Vec<T>, gamma_max: T, dephasing_rate: T, decay_rate: T) -> Result<Self> {
        if energies.len() < 2 {
            return Err(Error::InvalidDimension(format!(
                "ladder needs at least 2 levels, got {}",
                energies.len()
            )));
        }
        if energies.iter().any(|e| !e.is_finite()) {
            return Err(Error::Domain("energies must be finite".into()));
        }
        for (name, v) in [
            ("gamma_max", gamma_max),
            ("dephasing_rate", dephasing_rate),
            ("decay_rate", decay_rate),
        ] {
            if !v.is_finite() || v < T::zero() {
                return Err(Error::Domain(format!("{name} must be finite and non-negative, got {v}")));
            }
        }
        Ok(Self {
            energies,
            gamma_max,
            dephasing_rate,
            decay_rate,
        })
    }

    /// Equally spaced levels `E_i = i`, closed system.
    pub fn regular(n: usize, gamma_max: T) -> Result<Self> {
        Self::new((1..=n).map(|i| T::lit(i as f64)).collect(), gamma_max, T::zero(), T::zero())
    }

    pub fn with_dephasing(self, rate: T) -> Result<Self> {
        Self::new(self.energies, self.gamma_max, rate, self.decay_rate)
    }

    pub fn with_decay(self, rate: T) -> Result<Self> {
        Self::new(self.energies, self.gamma_max, self.dephasing_rate, rate)
    }

    pub fn n(&self) -> usize {
        self.energies.len()
    }

    pub fn energies(&self) -> &[T] {
        &self.energies
    }

    pub fn gamma_max(&self) -> T {
        self.gamma_max
    }

    pub fn dephasing_rate(&self) -> T {
        self.dephasing_rate
    }

    pub fn decay_rate(&self) -> T {
        self.decay_rate
    }

    /// Whether energies are non-decreasing. Unsorted and degenerate spectra are
    /// accepted; this is informational only.
    pub fn is_sorted(&self) -> bool {
        self.energies.windows(2).all(|w| w[0] <= w[1])
    }

    pub fn is_closed(&self) -> bool {
        self.dephasing_rate.is_zero() && self.decay_rate.is_zero()
    }
}

/// Drift Hamiltonian `H₀ = Σ E_i |i⟩⟨i|`.
pub fn build_drift<T: Real>(model: &LadderModel<T>) -> ComplexMatrix<T> {
    Array2::from_diag(&Array1::from_iter(model.energies().iter().map(|&e| cr(e))))
}

/// Unit-amplitude control Hamiltonian `Σ (|i⟩⟨i+1| + |i+1⟩⟨i|)`.
pub fn build_coupling<T: Real>(n: usize) -> Result<ComplexMatrix<T>> {
    if n < 2 {
        return Err(Error::InvalidDimension(format!("coupling needs n >= 2, got {n}")));
    }
    let mut h = Array2::zeros((n, n));
    for i in 0..n - 1 {
        h[[i, i + 1]] = Complex::one();
        h[[i + 1, i]] = Complex::one();
    }
    Ok(h)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelKind {
    Dephasing,
    Decay,
}

/// A Lindblad jump operator with its rate.
#[derive(Debug, Clone)]
pub struct Channel<T> {
    pub op: ComplexMatrix<T>,
    pub rate: T,
    pub kind: ChannelKind,
}

/// Dephasing projectors `|k⟩⟨k|` (k = 1..n) and decay operators `|1⟩⟨k|`
/// (k = 2..n); a family is omitted entirely when its rate is zero.
pub fn build_channels<T: Real>(model: &LadderModel<T>) -> Vec<Channel<T>> {
    let n = model.n();
    let mut out = Vec::new();
    if model.dephasing_rate() > T::zero() {
        for k in 0..n {
            let mut op = Array2::zeros((n, n));
            op[[k, k]] = Complex::one();
            out.push(Channel {
                op,
                rate: model.dephasing_rate(),
                kind: ChannelKind::Dephasing,
            });
        }
    }
    if model.decay_rate() > T::zero() {
        for k in 1..n {
            let mut op = Array2::zeros((n, n));
            op[[0, k]] = Complex::one();
            out.push(Channel {
                op,
                rate: model.decay_rate(),
                kind: ChannelKind::Decay,
            });
        }
    }
    out
}

/// Matrix of a linear map on column-vectorized n×n matrices.
#[derive(Debug, Clone)]
pub struct Superoperator<T>(ComplexMatrix<T>);

impl<T: Real> Superoperator<T> {
    pub fn from_matrix(m: ComplexMatrix<T>) -> Result<Self> {
        let d = m.nrows();
        let n = (d as f64).sqrt().round() as usize;
        if m.ncols() != d || n * n != d {
            return Err(Error::InvalidDimension(format!(
                "superoperator must be n²×n², got {}x{}",
                d,
                m.ncols()
            )));
        }
        if !linalg::all_finite(&m) {
            return Err(Error::Numerical("non-finite superoperator entry".into()));
        }
        Ok(Self(m))
    }

    pub fn matrix(&self) -> &ComplexMatrix<T> {
        &self.0
    }

    /// Hilbert-space dimension n (the matrix is n²×n²).
    pub fn hilbert_dim(&self) -> usize {
        (self.0.nrows() as f64).sqrt().round() as usize
    }

    pub fn apply(&self, rho: &DensityMatrix<T>) -> Result<ComplexMatrix<T>> {
        if rho.dim() != self.hilbert_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.hilbert_dim(),
                actual: rho.dim(),
            });
        }
        Ok(devec(&self.0.dot(&rho.to_vec()), rho.dim()))
    }

    /// `exp(L·dt)`.
    pub fn exponentiate(&self, dt: T, gamma_value: T) -> Result<Propagator<T>> {
        if !(dt > T::zero()) || !dt.is_finite() {
            return Err(Error::Domain(format!("time slice must be positive, got {dt}")));
        }
        let op = linalg::expm(&linalg::scale(&self.0, cr(dt)))?;
        Ok(Propagator {
            op,
            dt,
            gamma_value,
        })
    }
}

fn commutator_super<T: Real>(h: &ComplexMatrix<T>) -> ComplexMatrix<T> {
    // −i(I ⊗ H − Hᵀ ⊗ I)
    let n = h.nrows();
    let id = linalg::identity::<T>(n);
    let ht = h.t().to_owned();
    let m = &linalg::kron(&id, h) - &linalg::kron(&ht, &id);
    linalg::scale(&m, c(T::zero(), -T::one()))
}

fn dissipator_super<T: Real>(channels: &[Channel<T>], n: usize) -> ComplexMatrix<T> {
    let id = linalg::identity::<T>(n);
    let mut out = Array2::zeros((n * n, n * n));
    for ch in channels {
        let a = &ch.op;
        let ada = linalg::dagger(a).dot(a);
        let jump = linalg::kron(&a.mapv(|z| z.conj()), a);
        let left = linalg::kron(&id, &ada);
        let right = linalg::kron(&ada.t().to_owned(), &id);
        let rate = cr(ch.rate);
        let half = cr(T::lit(0.5));
        out.zip_mut_with(&jump, |o, &x| *o += rate * x);
        out.zip_mut_with(&left, |o, &x| *o -= rate * half * x);
        out.zip_mut_with(&right, |o, &x| *o -= rate * half * x);
    }
    out
}

/// Liouvillian split as `L(γ) = drift + γ·control`, where `drift` carries H₀
/// and all dissipators and `control` is `−i[H_c, ·]`.
#[derive(Debug, Clone)]
pub struct LiouvillianParts<T> {
    pub drift: Superoperator<T>,
    pub control: Superoperator<T>,
}

impl<T: Real> LiouvillianParts<T> {
    pub fn new(model: &LadderModel<T>) -> Result<Self> {
        let n = model.n();
        let mut drift = commutator_super(&build_drift(model));
        drift += &dissipator_super(&build_channels(model), n);
        let control = commutator_super(&build_coupling::<T>(n)?);
        Ok(Self {
            drift: Superoperator::from_matrix(drift)?,
            control: Superoperator::from_matrix(control)?,
        })
    }

    pub fn at(&self, gamma_value: T) -> Superoperator<T> {
        let g = cr(gamma_value);
        let mut m = self.drift.0.clone();
        m.zip_mut_with(&self.control.0, |o, &x| *o += g * x);
        Superoperator(m)
    }
}

/// Superoperator of the full Lindblad right-hand side at a fixed coupling.
pub fn build_liouvillian<T: Real>(model: &LadderModel<T>, gamma_value: T) -> Result<Superoperator<T>> {
    check_gamma(model, gamma_value)?;
    Ok(LiouvillianParts::new(model)?.at(gamma_value))
}

pub(crate) fn check_gamma<T: Real>(model: &LadderModel<T>, gamma_value: T) -> Result<()> {
    if !(gamma_value >= T::zero() && gamma_value <= model.gamma_max()) {
        return Err(Error::Domain(format!(
            "coupling {gamma_value} outside [0, {}]",
            model.gamma_max()
        )));
    }
    Ok(())
}

/// Dissipative part `Σ Γ_k (A ρ A† − ½{A†A, ρ})` evaluated in matrix form.
pub fn dissipator<T: Real>(model: &LadderModel<T>, rho: &ComplexMatrix<T>) -> ComplexMatrix<T> {
    let mut out = Array2::zeros(rho.raw_dim());
    for ch in build_channels(model) {
        let a = &ch.op;
        let ad = linalg::dagger(a);
        let ada = ad.dot(a);
        let term = &a.dot(rho).dot(&ad) - &linalg::scale(&(&ada.dot(rho) + &rho.dot(&ada)), cr(T::lit(0.5)));
        out.zip_mut_with(&term, |o, &x| *o += cr(ch.rate) * x);
    }
    out
}

/// Exact evolution over one time slice at a fixed coupling.
#[derive(Debug, Clone)]
pub struct Propagator<T> {
    pub op: ComplexMatrix<T>,
    pub dt: T,
    pub gamma_value: T,
}

impl<T: Real> Propagator<T> {
    pub fn identity(n: usize) -> Self {
        Self {
            op: linalg::identity(n * n),
            dt: T::zero(),
            gamma_value: T::zero(),
        }
    }

    pub fn hilbert_dim(&self) -> usize {
        (self.op.nrows() as f64).sqrt().round() as usize
    }

    /// Builds `exp(L(γ)·dt)` for `model`.
    pub fn build(model: &LadderModel<T>, gamma_value: T, dt: T) -> Result<Self> {
        build_liouvillian(model, gamma_value)?.exponentiate(dt, gamma_value)
    }
}

/// Exponentiates a superoperator over `dt`.
pub fn exponentiate<T: Real>(l: &Superoperator<T>, dt: T) -> Result<Propagator<T>> {
    l.exponentiate(dt, T::nan())
}

/// Applies one slice and re-Hermitizes to absorb roundoff.
pub fn propagate<T: Real>(rho: &DensityMatrix<T>, p: &Propagator<T>) -> Result<DensityMatrix<T>> {
    if rho.dim() != p.hilbert_dim() {
        return Err(Error::DimensionMismatch {
            expected: p.hilbert_dim(),
            actual: rho.dim(),
        });
    }
    let v = p.op.dot(&rho.to_vec());
    Ok(DensityMatrix::from_vec_hermitized(&v, rho.dim()))
}

/// The off/on slice propagators of a bang-bang protocol.
#[derive(Debug, Clone)]
pub struct PropagatorPair<T> {
    pub off: Propagator<T>,
    pub on: Propagator<T>,
}

impl<T: Real> PropagatorPair<T> {
    pub fn new(model: &LadderModel<T>, dt: T) -> Result<Self> {
        let parts = LiouvillianParts::new(model)?;
        Ok(Self {
            off: parts.at(T::zero()).exponentiate(dt, T::zero())?,
            on: parts.at(model.gamma_max()).exponentiate(dt, model.gamma_max())?,
        })
    }

    pub fn get(&self, on: bool) -> &Propagator<T> {
        if on {
            &self.on
        } else {
            &self.off
        }
    }
}

/// Column-stacking vectorization.
pub fn vec_of<T: Real>(m: &ComplexMatrix<T>) -> CVector<T> {
    let n = m.nrows();
    Array1::from_shape_fn(n * n, |p| m[[p % n, p / n]])
}

pub fn devec<T: Real>(v: &CVector<T>, n: usize) -> ComplexMatrix<T> {
    Array2::from_shape_fn((n, n), |(i, j)| v[i + j * n])
}

/// Hermitian, unit-trace, positive semidefinite n×n state.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix<T>(ComplexMatrix<T>);

impl<T: Real> DensityMatrix<T> {
    /// `|level⟩⟨level|` with 1-based `level`.
    pub fn pure(n: usize, level: usize) -> Result<Self> {
        if n < 1 {
            return Err(Error::InvalidDimension("empty density matrix".into()));
        }
        if level == 0 || level > n {
            return Err(Error::IndexOutOfRange { index: level, max: n });
        }
        let mut m = Array2::zeros((n, n));
        m[[level - 1, level - 1]] = Complex::one();
        Ok(Self(m))
    }

    pub fn from_state_vector(psi: &CVector<T>) -> Result<Self> {
        let norm: T = psi.iter().map(|z| z.norm_sqr()).sum();
        if (norm - T::one()).abs() > T::tolerance(1e-9) {
            return Err(Error::InvalidState(format!("state vector norm² {norm} != 1")));
        }
        let n = psi.len();
        Ok(Self(Array2::from_shape_fn((n, n), |(i, j)| psi[i] * psi[j].conj())))
    }

    pub fn maximally_mixed(n: usize) -> Self {
        Self(Array2::from_diag_elem(n, cr(T::one() / T::lit(n as f64))))
    }

    /// Validates Hermiticity (1e-10), unit trace (1e-9) and positivity (−1e-8).
    pub fn from_matrix(m: ComplexMatrix<T>) -> Result<Self> {
        if m.nrows() != m.ncols() || m.nrows() == 0 {
            return Err(Error::InvalidDimension(format!("{}x{} density matrix", m.nrows(), m.ncols())));
        }
        let rho = Self(m);
        rho.validate()?;
        Ok(rho)
    }

    /// Rebuilds from a column-stacked vector, replacing ρ by (ρ + ρ†)/2.
    pub fn from_vec_hermitized(v: &CVector<T>, n: usize) -> Self {
        let half = T::lit(0.5);
        Self(Array2::from_shape_fn((n, n), |(i, j)| {
            (v[i + j * n] + v[j + i * n].conj()) * half
        }))
    }

    pub fn validate(&self) -> Result<()> {
        if !linalg::all_finite(&self.0) {
            return Err(Error::InvalidState("non-finite entry".into()));
        }
        let herm = self.hermiticity_error();
        if herm > T::tolerance(1e-10) {
            return Err(Error::InvalidState(format!("not Hermitian (max |ρ−ρ†| = {herm})")));
        }
        let tr = self.trace();
        if (tr.re - T::one()).abs() > T::tolerance(1e-9) {
            return Err(Error::InvalidState(format!("trace {} != 1", tr.re)));
        }
        let min_eig = self.min_eigenvalue();
        if min_eig < -1e-8_f64.max(T::epsilon().as_f64() * 1e3) {
            return Err(Error::InvalidState(format!("negative eigenvalue {min_eig}")));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &ComplexMatrix<T> {
        &self.0
    }

    pub fn into_matrix(self) -> ComplexMatrix<T> {
        self.0
    }

    pub fn to_vec(&self) -> CVector<T> {
        vec_of(&self.0)
    }

    pub fn trace(&self) -> Complex<T> {
        self.0.diag().iter().fold(Complex::zero(), |a, &b| a + b)
    }

    /// `Tr ρ²`.
    pub fn purity(&self) -> T {
        self.0.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn hermiticity_error(&self) -> T {
        linalg::max_abs_diff(&self.0, &linalg::dagger(&self.0))
    }

    /// Smallest eigenvalue, via the real symmetric embedding `[[Re, −Im], [Im, Re]]`.
    pub fn min_eigenvalue(&self) -> f64 {
        let n = self.dim();
        let herm = |i: usize, j: usize| {
            let z = (self.0[[i, j]] + self.0[[j, i]].conj()) * T::lit(0.5);
            (z.re.as_f64(), z.im.as_f64())
        };
        let emb = nalgebra::DMatrix::<f64>::from_fn(2 * n, 2 * n, |r, s| {
            let (i, j) = (r % n, s % n);
            let (re, im) = herm(i, j);
            match (r < n, s < n) {
                (true, true) | (false, false) => re,
                (true, false) => -im,
                (false, true) => im,
            }
        });
        emb.symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Population of a 1-based level.
    pub fn population(&self, level: usize) -> Result<T> {
        if level == 0 || level > self.dim() {
            return Err(Error::IndexOutOfRange {
                index: level,
                max: self.dim(),
            });
        }
        Ok(self.0[[level - 1, level - 1]].re)
    }
}

/// Fidelity with the target level, `⟨target|ρ|target⟩`.
pub fn fidelity<T: Real>(rho: &DensityMatrix<T>, target_level: usize) -> Result<T> {
    rho.population(target_level)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_density(n: usize, rng: &mut ChaCha8Rng) -> DensityMatrix<f64> {
        let g = Array2::from_shape_fn((n, n), |_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        let m = g.dot(&linalg::dagger(&g));
        let tr = m.diag().iter().map(|z| z.re).sum::<f64>();
        DensityMatrix::from_matrix(m.mapv(|z| z / tr)).unwrap()
    }

    #[test]
    fn drift_is_diagonal_of_energies() {
        let m = LadderModel::regular(4, 0.8).unwrap();
        let h = build_drift(&m);
        for i in 0..4 {
            for j in 0..4 {
                let want = if i == j { (i + 1) as f64 } else { 0.0 };
                assert_eq!(h[[i, j]], cr(want));
            }
        }
        let e = vec![0.40252154, 0.68846289, 0.8557115, 0.25471114];
        let m = LadderModel::new(e.clone(), 0.8, 0.0, 0.0).unwrap();
        assert!(!m.is_sorted());
        let h = build_drift(&m);
        for i in 0..4 {
            assert_eq!(h[[i, i]].re, e[i]);
        }
        let m = LadderModel::new(vec![0.0, 0.0], 0.1, 0.0, 0.0).unwrap();
        assert!(build_drift(&m).iter().all(|z| z.is_zero()));
    }

    #[test]
    fn coupling_structure() {
        let h2 = build_coupling::<f64>(2).unwrap();
        assert_eq!(h2[[0, 1]], cr(1.0));
        assert_eq!(h2[[1, 0]], cr(1.0));
        assert!(h2[[0, 0]].is_zero() && h2[[1, 1]].is_zero());
        let h3 = build_coupling::<f64>(3).unwrap();
        assert!(h3.diag().iter().all(|z| z.is_zero()));
        assert_eq!(h3[[1, 2]], cr(1.0));
        assert!(h3[[0, 2]].is_zero());
        let h4 = build_coupling::<f64>(4).unwrap();
        assert_eq!(h4.iter().filter(|z| !z.is_zero()).count(), 6);
        assert_eq!(h4, linalg::dagger(&h4));
        assert!(matches!(build_coupling::<f64>(1), Err(Error::InvalidDimension(_))));
    }

    #[test]
    fn channel_lists() {
        let closed = LadderModel::regular(3, 1.0).unwrap();
        assert!(build_channels(&closed).is_empty());

        let deph = LadderModel::regular(2, 1.0).unwrap().with_dephasing(0.01).unwrap();
        let ch = build_channels(&deph);
        assert_eq!(ch.len(), 2);
        assert!(ch.iter().all(|c| c.rate == 0.01 && c.kind == ChannelKind::Dephasing));
        assert_eq!(ch[0].op[[0, 0]], cr(1.0));
        assert_eq!(ch[1].op[[1, 1]], cr(1.0));

        let decay = LadderModel::regular(3, 1.0).unwrap().with_decay(0.01).unwrap();
        let ch = build_channels(&decay);
        assert_eq!(ch.len(), 2);
        assert_eq!(ch[0].op[[0, 1]], cr(1.0));
        assert_eq!(ch[1].op[[0, 2]], cr(1.0));
        assert!(ch.iter().all(|c| c.op.iter().filter(|z| !z.is_zero()).count() == 1));
    }

    #[test]
    fn model_validation() {
        assert!(LadderModel::<f64>::new(vec![1.0], 0.1, 0.0, 0.0).is_err());
        assert!(LadderModel::new(vec![1.0, 2.0], -0.1, 0.0, 0.0).is_err());
        assert!(LadderModel::new(vec![1.0, f64::NAN], 0.1, 0.0, 0.0).is_err());
        assert!(LadderModel::new(vec![1.0, 2.0], 0.1, 0.0, -1.0).is_err());
        let degenerate = LadderModel::new(vec![1.0, 2.0, 2.0, 3.0], 0.8, 0.0, 0.0).unwrap();
        assert!(degenerate.is_sorted());
    }

    #[test]
    fn liouvillian_rejects_out_of_range_coupling() {
        let m = LadderModel::regular(2, 0.1).unwrap();
        assert!(matches!(build_liouvillian(&m, 0.2), Err(Error::Domain(_))));
        assert!(matches!(build_liouvillian(&m, -0.01), Err(Error::Domain(_))));
        assert!(build_liouvillian(&m, 0.1).is_ok());
    }

    #[test]
    fn diagonal_states_stationary_under_closed_drift() {
        let m = LadderModel::regular(4, 0.5).unwrap();
        let l = build_liouvillian(&m, 0.0).unwrap();
        let rho = DensityMatrix::from_matrix(Array2::from_diag(&Array1::from(vec![
            cr(0.1),
            cr(0.2),
            cr(0.3),
            cr(0.4),
        ])))
        .unwrap();
        let d = l.apply(&rho).unwrap();
        assert!(d.iter().all(|z| z.norm() < 1e-15));
    }

    #[test]
    fn liouvillian_is_traceless_and_matches_matrix_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = LadderModel::new(vec![0.3, 1.1, 1.7], 0.9, 0.04, 0.02).unwrap();
        let h = &build_drift(&m) + &linalg::scale(&build_coupling(3).unwrap(), cr(0.6));
        let l = build_liouvillian(&m, 0.6).unwrap();
        for _ in 0..20 {
            let rho = random_density(3, &mut rng);
            let d = l.apply(&rho).unwrap();
            let tr: Complex<f64> = d.diag().iter().sum();
            assert!(tr.norm() < 1e-14);
            let r = rho.matrix();
            let comm = &h.dot(r) - &r.dot(&h);
            let direct = &linalg::scale(&comm, c(0.0, -1.0)) + &dissipator(&m, r);
            assert!(linalg::max_abs_diff(&d, &direct) < 1e-14);
        }
    }

    #[test]
    fn two_level_dephasing_coherence_decay() {
        // ρ₁₂(t) = ρ₁₂(0)·exp((−Γ_d + iΔE)t), from integrating the 2x2 equation by hand.
        let gd = 0.01;
        let m = LadderModel::new(vec![1.0, 2.5], 0.1, gd, 0.0).unwrap();
        let plus = DensityMatrix::from_matrix(Array2::from_elem((2, 2), cr(0.5))).unwrap();
        for &t in &[0.5, 3.0, 17.0] {
            let p = Propagator::build(&m, 0.0, t).unwrap();
            let rho = propagate(&plus, &p).unwrap();
            let want = cr(0.5) * (c(-gd, 1.5) * t).exp();
            assert!((rho.matrix()[[0, 1]] - want).norm() < 1e-12, "t={t}");
        }
    }

    #[test]
    fn semigroup_and_identity() {
        let m = LadderModel::regular(3, 0.7).unwrap().with_decay(0.05).unwrap().with_dephasing(0.02).unwrap();
        let l = build_liouvillian(&m, 0.7).unwrap();
        let p1 = exponentiate(&l, 0.5).unwrap();
        let p2 = exponentiate(&l, 1.0).unwrap();
        assert!(linalg::max_abs_diff(&p1.op.dot(&p1.op), &p2.op) < 1e-10);
        let zero = Superoperator::from_matrix(Array2::zeros((9, 9))).unwrap();
        let id = exponentiate(&zero, 0.5).unwrap();
        assert!(linalg::max_abs_diff(&id.op, &linalg::identity(9)) < 1e-15);
        assert!(matches!(exponentiate(&l, 0.0), Err(Error::Domain(_))));
    }

    #[test]
    fn identity_propagator_keeps_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let rho = random_density(4, &mut rng);
        let out = propagate(&rho, &Propagator::identity(4)).unwrap();
        assert!(linalg::max_abs_diff(out.matrix(), rho.matrix()) < 1e-16);
        assert!(matches!(
            propagate(&rho, &Propagator::identity(3)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn top_level_decays_exponentially() {
        let gl = 0.01;
        let m = LadderModel::regular(4, 0.8).unwrap().with_decay(gl).unwrap();
        let p = Propagator::build(&m, 0.0, 0.5).unwrap();
        let mut rho = DensityMatrix::pure(4, 4).unwrap();
        for k in 1..=100 {
            rho = propagate(&rho, &p).unwrap();
            let t = 0.5 * k as f64;
            assert!((rho.population(4).unwrap() - (-gl * t).exp()).abs() < 1e-12);
        }
    }

    #[test]
    fn detuned_rabi_maximum() {
        // Max of ρ₂₂ under constant drive is γ²/(γ² + (ΔE/2)²).
        let m = LadderModel::regular(2, 0.1).unwrap();
        let p = Propagator::build(&m, 0.1, 0.01).unwrap();
        let mut rho = DensityMatrix::pure(2, 1).unwrap();
        let mut best: f64 = 0.0;
        for _ in 0..2000 {
            rho = propagate(&rho, &p).unwrap();
            best = best.max(fidelity(&rho, 2).unwrap());
        }
        assert!((best - 0.01 / 0.26).abs() < 1e-6, "{best}");
    }

    #[test]
    fn fidelity_values_and_errors() {
        let g = DensityMatrix::<f64>::pure(4, 1).unwrap();
        assert_eq!(fidelity(&g, 4).unwrap(), 0.0);
        let top = DensityMatrix::<f64>::pure(4, 4).unwrap();
        assert_eq!(fidelity(&top, 4).unwrap(), 1.0);
        let mixed = DensityMatrix::<f64>::maximally_mixed(4);
        assert!((fidelity(&mixed, 4).unwrap() - 0.25).abs() < 1e-15);
        assert!(matches!(fidelity(&mixed, 5), Err(Error::IndexOutOfRange { .. })));
        assert!(matches!(fidelity(&mixed, 0), Err(Error::IndexOutOfRange { .. })));
    }

    #[test]
    fn density_validation() {
        let mut m = Array2::<Complex<f64>>::zeros((2, 2));
        m[[0, 0]] = cr(1.0);
        m[[0, 1]] = c(0.1, 0.0);
        assert!(DensityMatrix::from_matrix(m.clone()).is_err()); // not Hermitian
        m[[1, 0]] = c(0.1, 0.0);
        assert!(DensityMatrix::from_matrix(m.clone()).is_err()); // not PSD
        let bad_trace = Array2::from_diag_elem(2, cr(0.6));
        assert!(DensityMatrix::from_matrix(bad_trace).is_err());
        assert!(DensityMatrix::from_matrix(Array2::from_diag_elem(2, cr(0.5))).is_ok());
    }

    #[test]
    fn works_in_single_precision() {
        let m = LadderModel::<f32>::regular(3, 0.5).unwrap().with_dephasing(0.01).unwrap();
        let pair = PropagatorPair::new(&m, 0.5).unwrap();
        let mut rho = DensityMatrix::<f32>::pure(3, 1).unwrap();
        for k in 0..40 {
            rho = propagate(&rho, pair.get(k % 3 == 0)).unwrap();
        }
        assert!((rho.trace().re - 1.0).abs() < 1e-4);
        assert!(rho.min_eigenvalue() > -1e-4);
    }
}
