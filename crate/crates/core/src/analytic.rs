//! Closed-form two-level evolution under `H = −(ω/2)σ_z + γσ_x` and the
//! switching indicator `Im(−a b*)` of the greedy sign rule.
//!
//! Basis `{|0⟩, |1⟩}` maps onto ladder levels 1 and 2 with `ω = E₂ − E₁`; the
//! two Hamiltonians differ by a multiple of the identity, which only adds a
//! global phase.

use ndarray::{arr2, Array1};
use num_complex::Complex;

use crate::error::{Error, Result};
use crate::linalg::CMatrix;
use crate::lindblad::{DensityMatrix, LadderModel};
use crate::protocol::Action;
use crate::scalar::{c, Real};

/// Bloch angles of `|ψ₀⟩ = cos(polar/2)|0⟩ + e^{i·phase} sin(polar/2)|1⟩`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlochAngles<T> {
    pub polar: T,
    pub phase: T,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoLevelParams<T> {
    pub omega: T,
    pub gamma: T,
    pub initial: BlochAngles<T>,
}

impl<T: Real> TwoLevelParams<T> {
    pub fn new(omega: T, gamma: T, initial: BlochAngles<T>) -> Self {
        Self { omega, gamma, initial }
    }

    /// Two-level parameters of a 2-level ladder at coupling `gamma`.
    pub fn from_ladder(model: &LadderModel<T>, gamma: T, initial: BlochAngles<T>) -> Result<Self> {
        if model.n() != 2 {
            return Err(Error::InvalidDimension(format!(
                "closed form needs a 2-level model, got n = {}",
                model.n()
            )));
        }
        Ok(Self::new(model.energies()[1] - model.energies()[0], gamma, initial))
    }

    /// Mixing angle with `tan θ = 2γ/ω`.
    pub fn theta(&self) -> T {
        (T::lit(2.0) * self.gamma).atan2(self.omega)
    }

    /// `E₊ = √(ω²/4 + γ²)`; the eigenvalues are `±E₊`.
    pub fn energy(&self) -> T {
        (self.omega * self.omega / T::lit(4.0) + self.gamma * self.gamma).sqrt()
    }

    /// Amplitudes `(a₀, b₀)` of the initial state.
    pub fn initial_amplitudes(&self) -> (Complex<T>, Complex<T>) {
        let half = self.initial.polar / T::lit(2.0);
        let a = c(half.cos(), T::zero());
        let b = Complex::from_polar(half.sin(), self.initial.phase);
        (a, b)
    }

    pub fn initial_state(&self) -> Array1<Complex<T>> {
        let (a, b) = self.initial_amplitudes();
        Array1::from(vec![a, b])
    }
}

/// `U(t) = exp(−iHt)` written out in the eigenbasis of `H`.
pub fn two_level_propagator<T: Real>(params: &TwoLevelParams<T>, t: T) -> Result<CMatrix<T>> {
    if !(t >= T::zero()) {
        return Err(Error::Domain(format!("evolution time must be non-negative, got {t}")));
    }
    let e = params.energy();
    let theta = params.theta();
    let (s2, c2) = ((theta / T::lit(2.0)).sin().powi(2), (theta / T::lit(2.0)).cos().powi(2));
    let plus = Complex::from_polar(T::one(), -e * t); // e^{−iE₊t}
    let minus = Complex::from_polar(T::one(), e * t); // e^{−iE₋t}, E₋ = −E₊
    let off = (plus - minus) * (theta.sin() / T::lit(2.0));
    Ok(arr2(&[
        [minus * c2 + plus * s2, off],
        [off, minus * s2 + plus * c2],
    ]))
}

/// `Im(−a b*)`; negative values call for the coupling to be on.
pub fn switch_indicator<T: Real>(a: Complex<T>, b: Complex<T>) -> Result<T> {
    let norm = a.norm_sqr() + b.norm_sqr();
    if (norm - T::one()).abs() > T::tolerance(1e-9) {
        return Err(Error::InvalidState(format!("|a|² + |b|² = {norm}, expected 1")));
    }
    Ok((-(a * b.conj())).im)
}

/// Indicator read off a two-level density matrix (`a b* = ρ₀₁`). Also valid for
/// mixed states, where it is the coherence-weighted average.
pub fn switch_indicator_of_state<T: Real>(rho: &DensityMatrix<T>) -> Result<T> {
    if rho.dim() != 2 {
        return Err(Error::InvalidDimension(format!("expected 2x2 state, got {}", rho.dim())));
    }
    Ok(-rho.matrix()[[0, 1]].im)
}

/// Greedy sign rule: coupling on while `Im(−a b*) < 0`.
pub fn sign_rule_action<T: Real>(indicator: T) -> Action {
    if indicator < T::zero() {
        Action::On
    } else {
        Action::Off
    }
}

/// Closed-form `Im(−a_τ b_τ*)` after holding the coupling for a time `tau`
/// from the initial state.
pub fn switch_time_residual<T: Real>(params: &TwoLevelParams<T>, tau: T) -> Result<T> {
    if !(tau >= T::zero()) {
        return Err(Error::Domain(format!("tau must be non-negative, got {tau}")));
    }
    let e_minus = -params.energy();
    let theta = params.theta();
    let BlochAngles { polar, phase } = params.initial;
    let arg = T::lit(2.0) * e_minus * tau;
    let coeff = theta.cos() * polar.sin() * phase.cos() + theta.sin() * polar.cos();
    Ok((arg.sin() * coeff + polar.sin() * phase.sin() * arg.cos()) / T::lit(2.0))
}

/// Bisection for a sign change of [`switch_time_residual`] on `[lo, hi]`.
/// Returns `None` if the endpoints do not bracket a root.
pub fn find_switch_time<T: Real>(params: &TwoLevelParams<T>, lo: T, hi: T, tol: T) -> Result<Option<T>> {
    let (mut lo, mut hi) = (lo, hi);
    let mut f_lo = switch_time_residual(params, lo)?;
    let f_hi = switch_time_residual(params, hi)?;
    if f_lo == T::zero() {
        return Ok(Some(lo));
    }
    if f_hi == T::zero() {
        return Ok(Some(hi));
    }
    if f_lo.signum() == f_hi.signum() {
        return Ok(None);
    }
    while hi - lo > tol {
        let mid = (lo + hi) / T::lit(2.0);
        let f_mid = switch_time_residual(params, mid)?;
        if f_mid == T::zero() {
            return Ok(Some(mid));
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    Ok(Some((lo + hi) / T::lit(2.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{dagger, identity, max_abs_diff};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2};

    fn params(omega: f64, gamma: f64, polar: f64, phase: f64) -> TwoLevelParams<f64> {
        TwoLevelParams::new(omega, gamma, BlochAngles { polar, phase })
    }

    #[test]
    fn free_evolution_is_diagonal_phase() {
        let p = params(1.3, 0.0, 0.0, 0.0);
        let u = two_level_propagator(&p, 2.0).unwrap();
        assert!((u[[0, 0]] - Complex::from_polar(1.0, 1.3)).norm() < 1e-14);
        assert!((u[[1, 1]] - Complex::from_polar(1.0, -1.3)).norm() < 1e-14);
        assert!(u[[0, 1]].norm() < 1e-15);
    }

    #[test]
    fn identity_at_zero_and_group_law() {
        let p = params(1.0, 0.4, 0.3, 0.2);
        let u0 = two_level_propagator(&p, 0.0).unwrap();
        assert!(max_abs_diff(&u0, &identity(2)) < 1e-15);
        let a = two_level_propagator(&p, 0.8).unwrap();
        let b = two_level_propagator(&p, 1.7).unwrap();
        let ab = two_level_propagator(&p, 2.5).unwrap();
        assert!(max_abs_diff(&a.dot(&b), &ab) < 1e-12);
        assert!(two_level_propagator(&p, -1.0).is_err());
    }

    #[test]
    fn unitary_for_random_parameters() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let p = params(rng.gen_range(0.1..3.0), rng.gen_range(0.0..2.0), 0.0, 0.0);
            let u = two_level_propagator(&p, rng.gen_range(0.0..50.0)).unwrap();
            assert!(max_abs_diff(&dagger(&u).dot(&u), &identity(2)) < 1e-12);
        }
    }

    #[test]
    fn indicator_examples() {
        assert_eq!(switch_indicator(c(1.0, 0.0), c(0.0, 0.0)).unwrap(), 0.0);
        let r = switch_indicator(c(FRAC_1_SQRT_2, 0.0), c(FRAC_1_SQRT_2, 0.0)).unwrap();
        assert!(r.abs() < 1e-16);
        // polar = φ = π/2: a = 1/√2, b = i/√2, so −a b* = i/2.
        let p = params(1.0, 0.1, FRAC_PI_2, FRAC_PI_2);
        let (a, b) = p.initial_amplitudes();
        assert!((switch_indicator(a, b).unwrap() - 0.5).abs() < 1e-15);
        assert!(switch_indicator(c(1.0, 0.0), c(1.0, 0.0)).is_err());
    }

    #[test]
    fn residual_at_zero_matches_initial_indicator() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..50 {
            let p = params(rng.gen_range(0.2..2.0), rng.gen_range(0.0..1.0), rng.gen_range(0.0..3.1), rng.gen_range(0.0..6.2));
            let (a, b) = p.initial_amplitudes();
            let r0 = switch_time_residual(&p, 0.0).unwrap();
            assert!((r0 - switch_indicator(a, b).unwrap()).abs() < 1e-14);
        }
    }

    #[test]
    fn residual_matches_propagated_indicator() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let p = params(rng.gen_range(0.2..2.0), rng.gen_range(0.0..1.0), rng.gen_range(0.0..3.1), rng.gen_range(0.0..6.2));
            let psi0 = p.initial_state();
            for k in 0..=200 {
                let tau = 0.1 * k as f64;
                let psi = two_level_propagator(&p, tau).unwrap().dot(&psi0);
                let direct = switch_indicator(psi[0], psi[1]).unwrap();
                let closed = switch_time_residual(&p, tau).unwrap();
                assert!((direct - closed).abs() < 1e-10, "tau {tau}: {direct} vs {closed}");
            }
        }
    }

    #[test]
    fn bisection_finds_bracketed_root() {
        let p = params(1.0, 0.3, 1.0, 0.4);
        let mut found = 0;
        for k in 0..40 {
            let (lo, hi) = (0.5 * k as f64, 0.5 * (k + 1) as f64);
            if let Some(root) = find_switch_time(&p, lo, hi, 1e-12).unwrap() {
                found += 1;
                assert!(root >= lo && root <= hi);
                let eps = 1e-10;
                let left = switch_time_residual(&p, (root - eps).max(0.0)).unwrap();
                let right = switch_time_residual(&p, root + eps).unwrap();
                assert!(left.signum() != right.signum() || switch_time_residual(&p, root).unwrap().abs() < 1e-12);
            }
        }
        assert!(found > 0);
        assert!(find_switch_time(&p, 0.0, 1e-3, 1e-12).unwrap().is_none());
    }
}
