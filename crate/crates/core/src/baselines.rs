//! Non-learning optimizers: one-step greedy control, GRAPE over continuous
//! amplitudes and brute-force search over short bang-bang protocols.

use ndarray::Array1;
use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{run_binary, run_protocol, EnvConfig, Trajectory};
use crate::error::{Error, Result};
use crate::linalg::{expm_action, CVector, FrechetBlock, LinearOperator, SparseMatrix};
use crate::lindblad::{
    build_coupling, dissipator, fidelity, propagate, DensityMatrix, LadderModel, LiouvillianParts, PropagatorPair,
};
use crate::parallel;
use crate::protocol::{Action, Protocol};
use crate::scalar::{cr, Real};

/// `(C, D)` of the Lyapunov switching law for `f = ⟨n|ρ|n⟩`:
/// `ḟ = C + γ·D`, with `C` the dissipative drift of `f` and `D` its growth
/// rate per unit coupling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LyapunovIndicators<T> {
    pub c: T,
    pub d: T,
}

pub fn lyapunov_indicators<T: Real>(
    rho: &DensityMatrix<T>,
    model: &LadderModel<T>,
    target_level: usize,
) -> Result<LyapunovIndicators<T>> {
    let n = model.n();
    if rho.dim() != n {
        return Err(Error::DimensionMismatch { expected: n, actual: rho.dim() });
    }
    if target_level == 0 || target_level > n {
        return Err(Error::IndexOutOfRange { index: target_level, max: n });
    }
    let k = target_level - 1;
    let m = rho.matrix();
    let c = dissipator(model, m)[[k, k]];
    // D = −i ([H_c, ρ])_kk; H_c is the real symmetric ladder.
    let hc = build_coupling::<T>(n)?;
    let comm_kk = hc.row(k).dot(&m.column(k)) - m.row(k).dot(&hc.column(k));
    let d = comm_kk * Complex::new(T::zero(), -T::one());
    let tol = T::tolerance(1e-10);
    if c.im.abs() > tol || d.im.abs() > tol {
        return Err(Error::Numerical(format!("indicators not real: C = {c}, D = {d}")));
    }
    Ok(LyapunovIndicators { c: c.re, d: d.re })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GreedyMode {
    /// Propagate both actions one slice and keep the better; ties go to off.
    Lookahead,
    /// Coupling on iff `D > 0`.
    Lyapunov,
}

/// Fidelities after one slice with the coupling off and on.
pub fn lookahead_fidelities<T: Real>(
    rho: &DensityMatrix<T>,
    pair: &PropagatorPair<T>,
    target_level: usize,
) -> Result<(T, T)> {
    let off = fidelity(&propagate(rho, &pair.off)?, target_level)?;
    let on = fidelity(&propagate(rho, &pair.on)?, target_level)?;
    Ok((off, on))
}

pub fn greedy_step<T: Real>(
    rho: &DensityMatrix<T>,
    config: &EnvConfig<T>,
    pair: &PropagatorPair<T>,
    mode: GreedyMode,
) -> Result<Action> {
    match mode {
        GreedyMode::Lookahead => {
            let (off, on) = lookahead_fidelities(rho, pair, config.target_level)?;
            Ok(if on > off { Action::On } else { Action::Off })
        }
        GreedyMode::Lyapunov => {
            let ind = lyapunov_indicators(rho, &config.model, config.target_level)?;
            Ok(if ind.d > T::zero() { Action::On } else { Action::Off })
        }
    }
}

#[derive(Debug, Clone)]
pub struct GreedyRun<T> {
    pub protocol: Protocol<T>,
    pub actions: Vec<Action>,
    pub trajectory: Trajectory<T>,
}

pub fn run_greedy<T: Real>(config: &EnvConfig<T>, mode: GreedyMode) -> Result<GreedyRun<T>> {
    config.validate()?;
    let pair = config.propagators()?;
    let mut rho = config.initial_state();
    let mut actions = Vec::with_capacity(config.steps);
    for _ in 0..config.steps {
        let a = greedy_step(&rho, config, &pair, mode)?;
        rho = propagate(&rho, pair.get(a.is_on()))?;
        actions.push(a);
    }
    let trajectory = run_binary(config, &pair, &actions)?;
    Ok(GreedyRun {
        protocol: Protocol::bang_bang(&actions, config.model.gamma_max()),
        actions,
        trajectory,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientMode {
    Adjoint,
    FiniteDifference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GrapeConfig {
    pub max_iterations: usize,
    /// Trial step is `step_size · γ_max / ‖∇F‖_∞`, halved until F improves.
    pub step_size: f64,
    /// Total starts: all-off, all-on, then uniform random ones.
    pub restarts: usize,
    pub gradient_mode: GradientMode,
    /// Stop once F gained less than this over `window` iterations.
    pub convergence_tol: f64,
    pub window: usize,
}

impl Default for GrapeConfig {
    fn default() -> Self {
        Self {
            max_iterations: 300,
            step_size: 0.5,
            restarts: 8,
            gradient_mode: GradientMode::Adjoint,
            convergence_tol: 1e-9,
            window: 25,
        }
    }
}

impl GrapeConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, reason: &str| {
            Err(Error::Config { key: key.into(), reason: reason.into() })
        };
        if self.max_iterations == 0 {
            return bad("max_iterations", "must be positive");
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return bad("step_size", "must be positive");
        }
        if self.restarts == 0 {
            return bad("restarts", "must be positive");
        }
        if !(self.convergence_tol > 0.0) {
            return bad("convergence_tol", "must be positive");
        }
        if self.window == 0 {
            return bad("window", "must be positive");
        }
        Ok(())
    }
}

/// `drift + g·control` applied without forming the sum.
struct Affine<'a, T> {
    drift: &'a SparseMatrix<T>,
    control: &'a SparseMatrix<T>,
    g: T,
}

impl<T: Real> LinearOperator<T> for Affine<'_, T> {
    fn dim(&self) -> usize {
        self.drift.dim()
    }
    fn norm1_bound(&self) -> T {
        self.drift.norm1_bound() + self.g.abs() * self.control.norm1_bound()
    }
    fn apply(&self, x: &CVector<T>) -> CVector<T> {
        let mut y = self.drift.apply(x);
        if !self.g.is_zero() {
            let g = cr(self.g);
            y.zip_mut_with(&self.control.apply(x), |o, &z| *o += g * z);
        }
        y
    }
}

/// Sparse vectorized dynamics of one GRAPE instance.
pub struct GrapeProblem<T> {
    drift: SparseMatrix<T>,
    control: SparseMatrix<T>,
    drift_t: SparseMatrix<T>,
    control_t: SparseMatrix<T>,
    rho0: CVector<T>,
    target_index: usize,
    dt: T,
    steps: usize,
    gamma_max: T,
}

impl<T: Real> GrapeProblem<T> {
    pub fn new(config: &EnvConfig<T>) -> Result<Self> {
        config.validate()?;
        let parts = LiouvillianParts::new(&config.model)?;
        let drift = SparseMatrix::from_dense(parts.drift.matrix())?;
        let control = SparseMatrix::from_dense(parts.control.matrix())?;
        let n = config.model.n();
        let k = config.target_level - 1;
        Ok(Self {
            drift_t: drift.transpose(),
            control_t: control.transpose(),
            drift,
            control,
            rho0: config.initial_state().to_vec(),
            target_index: k + k * n,
            dt: config.dt,
            steps: config.steps,
            gamma_max: config.model.gamma_max(),
        })
    }

    fn check(&self, amps: &[T]) -> Result<()> {
        if amps.len() != self.steps {
            return Err(Error::DimensionMismatch { expected: self.steps, actual: amps.len() });
        }
        Ok(())
    }

    fn slice(&self, g: T) -> Affine<'_, T> {
        Affine { drift: &self.drift, control: &self.control, g }
    }

    pub fn fidelity(&self, amps: &[T]) -> Result<T> {
        self.check(amps)?;
        let mut v = self.rho0.clone();
        for &g in amps {
            v = expm_action(&self.slice(g), &v, self.dt)?;
        }
        Ok(v[self.target_index].re)
    }

    /// Terminal fidelity and `∂F/∂γ_i` for every slice by the adjoint method.
    pub fn value_and_gradient(&self, amps: &[T]) -> Result<(T, Vec<T>)> {
        self.check(amps)?;
        let dim = self.rho0.len();
        // Forward: the block action yields both D_i ρ_{i−1} and ρ_i.
        let mut rho = self.rho0.clone();
        let mut sens = Vec::with_capacity(self.steps);
        for &g in amps {
            let a = self.slice(g);
            let block = FrechetBlock { a: &a, b: &self.control };
            let mut x = Array1::zeros(2 * dim);
            x.slice_mut(ndarray::s![dim..]).assign(&rho);
            let y = expm_action(&block, &x, self.dt)?;
            sens.push(y.slice(ndarray::s![..dim]).to_owned());
            rho = y.slice(ndarray::s![dim..]).to_owned();
        }
        let value = rho[self.target_index].re;
        // Backward: λ_N = e_k, λ_{i−1} = exp(L_iᵀ δt) λ_i.
        let mut lambda: CVector<T> = Array1::zeros(dim);
        lambda[self.target_index] = cr(T::one());
        let mut grad = vec![T::zero(); self.steps];
        for i in (0..self.steps).rev() {
            grad[i] = lambda.dot(&sens[i]).re;
            if i > 0 {
                let at = Affine { drift: &self.drift_t, control: &self.control_t, g: amps[i] };
                lambda = expm_action(&at, &lambda, self.dt)?;
            }
        }
        Ok((value, grad))
    }
}

/// Adjoint gradient of the terminal fidelity with respect to each amplitude.
pub fn grape_gradient<T: Real>(protocol: &Protocol<T>, config: &EnvConfig<T>) -> Result<Vec<T>> {
    protocol.validate(config.steps, config.model.gamma_max())?;
    Ok(GrapeProblem::new(config)?.value_and_gradient(&protocol.amplitudes)?.1)
}

pub const FD_STEP: f64 = 1e-6;

/// Finite-difference gradient through dense propagation: central differences
/// inside the box, one-sided at `0` and `γ_max`.
pub fn grape_gradient_fd<T: Real>(protocol: &Protocol<T>, config: &EnvConfig<T>) -> Result<Vec<T>> {
    let gmax = config.model.gamma_max();
    protocol.validate(config.steps, gmax)?;
    let h = T::lit(FD_STEP);
    let eval = |amps: &[T]| -> Result<T> {
        Ok(run_protocol(config, &Protocol::continuous(amps.to_vec()))?.final_fidelity())
    };
    let base = eval(&protocol.amplitudes)?;
    let mut grad = Vec::with_capacity(protocol.len());
    let mut amps = protocol.amplitudes.clone();
    for i in 0..amps.len() {
        let g0 = amps[i];
        let up = g0 + h <= gmax;
        let down = g0 - h >= T::zero();
        let d = if up && down {
            amps[i] = g0 + h;
            let fp = eval(&amps)?;
            amps[i] = g0 - h;
            let fm = eval(&amps)?;
            (fp - fm) / (h + h)
        } else if up {
            amps[i] = g0 + h;
            (eval(&amps)? - base) / h
        } else if down {
            amps[i] = g0 - h;
            (base - eval(&amps)?) / h
        } else {
            return Err(Error::Domain(format!("box [0, {gmax}] narrower than the difference step")));
        };
        amps[i] = g0;
        grad.push(d);
    }
    Ok(grad)
}

#[derive(Debug, Clone)]
pub struct GrapeResult<T> {
    pub protocol: Protocol<T>,
    pub fidelity: T,
    pub iterations: usize,
    /// Final fidelity reached from each start, in start order.
    pub start_fidelities: Vec<T>,
}

/// Zeroes gradient components that would leave the box.
fn project<T: Real>(amps: &[T], grad: &mut [T], gmax: T) {
    for (g, &a) in grad.iter_mut().zip(amps) {
        if (a <= T::zero() && *g < T::zero()) || (a >= gmax && *g > T::zero()) {
            *g = T::zero();
        }
    }
}

/// Projected gradient ascent from one start. Returns `(amps, F, iterations)`.
pub fn grape_ascend<T: Real>(
    problem: &GrapeProblem<T>,
    config: &EnvConfig<T>,
    grape: &GrapeConfig,
    start: Vec<T>,
) -> Result<(Vec<T>, T, usize)> {
    let gmax = problem.gamma_max;
    let mut amps = start;
    let value_grad = |amps: &[T]| -> Result<(T, Vec<T>)> {
        match grape.gradient_mode {
            GradientMode::Adjoint => problem.value_and_gradient(amps),
            GradientMode::FiniteDifference => {
                let p = Protocol::continuous(amps.to_vec());
                Ok((problem.fidelity(amps)?, grape_gradient_fd(&p, config)?))
            }
        }
    };
    let (mut f, mut grad) = value_grad(&amps)?;
    let mut history = vec![f];
    let mut it = 0;
    while it < grape.max_iterations {
        if !f.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Divergence { iteration: it, detail: format!("non-finite fidelity or gradient (F = {f})") });
        }
        project(&amps, &mut grad, gmax);
        let gnorm = grad.iter().fold(T::zero(), |m, g| m.max(g.abs()));
        if gnorm.is_zero() {
            break;
        }
        let mut step = T::lit(grape.step_size) * gmax / gnorm;
        let mut accepted = None;
        for _ in 0..40 {
            let cand: Vec<T> = amps
                .iter()
                .zip(&grad)
                .map(|(&a, &g)| (a + step * g).max(T::zero()).min(gmax))
                .collect();
            let fc = problem.fidelity(&cand)?;
            if !fc.is_finite() {
                return Err(Error::Divergence { iteration: it, detail: "non-finite trial fidelity".into() });
            }
            if fc > f {
                accepted = Some(cand);
                break;
            }
            step /= T::lit(2.0);
        }
        let Some(cand) = accepted else { break };
        amps = cand;
        (f, grad) = value_grad(&amps)?;
        it += 1;
        history.push(f);
        if it >= grape.window && f - history[it - grape.window] < T::lit(grape.convergence_tol) {
            break;
        }
    }
    Ok((amps, f, it))
}

/// Starting amplitudes: all-off, all-on, then uniform draws from `[0, γ_max]`.
pub fn grape_starts<T: Real>(steps: usize, gmax: T, restarts: usize, seed: u64) -> Vec<Vec<T>> {
    (0..restarts)
        .map(|r| match r {
            0 => vec![T::zero(); steps],
            1 => vec![gmax; steps],
            _ => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(r as u64);
                (0..steps).map(|_| gmax * T::lit(rng.gen::<f64>())).collect()
            }
        })
        .collect()
}

pub fn grape_optimize<T: Real>(config: &EnvConfig<T>, grape: &GrapeConfig, seed: u64) -> Result<GrapeResult<T>> {
    grape.validate()?;
    let problem = GrapeProblem::new(config)?;
    let starts = grape_starts(config.steps, config.model.gamma_max(), grape.restarts, seed);
    let runs = parallel::map_indexed(starts.len(), |r| grape_ascend(&problem, config, grape, starts[r].clone()));
    let runs: Vec<_> = runs.into_iter().collect::<Result<_>>()?;
    let mut best = 0;
    for (i, r) in runs.iter().enumerate() {
        if r.1 > runs[best].1 {
            best = i;
        }
    }
    let start_fidelities = runs.iter().map(|r| r.1).collect();
    let iterations = runs.iter().map(|r| r.2).sum();
    let protocol = Protocol::continuous(runs[best].0.clone());
    // Report the fidelity of the dense playback so records replay exactly.
    let fidelity = run_protocol(config, &protocol)?.final_fidelity();
    Ok(GrapeResult { protocol, fidelity, iterations, start_fidelities })
}

pub const EXHAUSTIVE_MAX_N: usize = 16;

#[derive(Debug, Clone)]
pub struct ExhaustiveResult<T> {
    pub actions: Vec<Action>,
    pub protocol: Protocol<T>,
    pub fidelity: T,
}

fn dfs<T: Real>(
    rho: &DensityMatrix<T>,
    depth: usize,
    prefix: &mut Vec<Action>,
    pair: &PropagatorPair<T>,
    config: &EnvConfig<T>,
    best: &mut Option<(T, Vec<Action>)>,
) -> Result<()> {
    if depth == config.steps {
        let f = fidelity(rho, config.target_level)?;
        if best.as_ref().is_none_or(|(b, _)| f > *b) {
            *best = Some((f, prefix.clone()));
        }
        return Ok(());
    }
    for a in [Action::Off, Action::On] {
        let next = propagate(rho, pair.get(a.is_on()))?;
        prefix.push(a);
        dfs(&next, depth + 1, prefix, pair, config, best)?;
        prefix.pop();
    }
    Ok(())
}

/// Best of all `2^N` bang-bang protocols; ties go to the lexicographically
/// smallest (off before on). Fidelities are bit-identical to [`run_binary`].
pub fn exhaustive_search<T: Real>(config: &EnvConfig<T>, max_n: usize) -> Result<ExhaustiveResult<T>> {
    config.validate()?;
    let limit = max_n.min(EXHAUSTIVE_MAX_N);
    if config.steps > limit {
        return Err(Error::Config {
            key: "N".into(),
            reason: format!("exhaustive search refuses N = {} > {limit}", config.steps),
        });
    }
    let pair = config.propagators()?;
    // Fan out over fixed-length prefixes, then merge in lexicographic order.
    let split = config.steps.min(4);
    let subtrees = parallel::map_indexed(1 << split, |code| -> Result<Option<(T, Vec<Action>)>> {
        let mut prefix: Vec<Action> = (0..split)
            .map(|b| if code >> (split - 1 - b) & 1 == 1 { Action::On } else { Action::Off })
            .collect();
        let mut rho = config.initial_state();
        for a in &prefix {
            rho = propagate(&rho, pair.get(a.is_on()))?;
        }
        let mut best = None;
        dfs(&rho, split, &mut prefix, &pair, config, &mut best)?;
        Ok(best)
    });
    let mut best: Option<(T, Vec<Action>)> = None;
    for sub in subtrees {
        if let Some((f, acts)) = sub? {
            if best.as_ref().is_none_or(|(b, _)| f > *b) {
                best = Some((f, acts));
            }
        }
    }
    let (fidelity, actions) = best.expect("at least one protocol");
    Ok(ExhaustiveResult {
        protocol: Protocol::bang_bang(&actions, config.model.gamma_max()),
        actions,
        fidelity,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lindblad::Propagator;
    use crate::scalar::c;

    fn cfg(n: usize, gamma: f64, steps: usize) -> EnvConfig<f64> {
        EnvConfig::new(LadderModel::regular(n, gamma).unwrap(), steps, 0.5).unwrap()
    }

    #[test]
    fn closed_system_has_no_dissipative_drift() {
        let m = LadderModel::regular(3, 0.5).unwrap();
        let psi = Array1::from(vec![c(0.6, 0.0), c(0.0, 0.48), c(0.64, 0.0)]);
        let rho = DensityMatrix::from_state_vector(&psi).unwrap();
        assert_eq!(lyapunov_indicators(&rho, &m, 3).unwrap().c, 0.0);
        let diag = DensityMatrix::maximally_mixed(3);
        let ind = lyapunov_indicators(&diag, &m.clone().with_decay(0.04).unwrap(), 3).unwrap();
        assert_eq!(ind.d, 0.0);
        assert!(ind.c < 0.0);
    }

    #[test]
    fn d_is_growth_rate_per_unit_coupling() {
        // Oracle: difference quotient of the one-step fidelity gain.
        let m = LadderModel::regular(3, 0.5).unwrap().with_dephasing(0.01).unwrap();
        let psi = Array1::from(vec![c(0.6, 0.0), c(0.0, 0.48), c(0.3, (1.0f64 - 0.36 - 0.2304 - 0.09).sqrt())]);
        let rho = DensityMatrix::from_state_vector(&psi).unwrap();
        let ind = lyapunov_indicators(&rho, &m, 3).unwrap();
        let (h, g) = (1e-4, 0.5);
        let f = |gamma: f64| fidelity(&propagate(&rho, &Propagator::build(&m, gamma, h).unwrap()).unwrap(), 3).unwrap();
        let rate_on = (f(g) - f(0.0)) / (g * h);
        assert!((rate_on - ind.d).abs() < 1e-3, "{rate_on} vs {}", ind.d);
        let rate_off = (f(0.0) - rho.population(3).unwrap()) / h;
        assert!((rate_off - ind.c).abs() < 1e-3, "{rate_off} vs {}", ind.c);
    }

    #[test]
    fn two_level_d_tracks_the_switch_indicator() {
        let m = LadderModel::regular(2, 0.1).unwrap();
        for k in 0..12 {
            let phi = 0.5 * k as f64;
            let s = std::f64::consts::FRAC_1_SQRT_2;
            let psi = Array1::from(vec![c(s, 0.0), Complex::from_polar(s, phi)]);
            let rho = DensityMatrix::from_state_vector(&psi).unwrap();
            let ind = crate::analytic::switch_indicator(psi[0], psi[1]).unwrap();
            let d = lyapunov_indicators(&rho, &m, 2).unwrap().d;
            assert!((d + 2.0 * ind).abs() < 1e-14);
        }
    }

    #[test]
    fn lookahead_prefers_coupling_from_ground_state() {
        let config = cfg(2, 0.1, 5);
        let pair = config.propagators().unwrap();
        let rho = config.initial_state();
        let (off, on) = lookahead_fidelities(&rho, &pair, 2).unwrap();
        assert_eq!(off, 0.0);
        assert!(on > 0.0);
        assert_eq!(greedy_step(&rho, &config, &pair, GreedyMode::Lookahead).unwrap(), Action::On);
        // Eigenstate of the drift: neither action helps, tie goes to off.
        let top = DensityMatrix::pure(2, 2).unwrap();
        let act = greedy_step(&top, &config, &pair, GreedyMode::Lookahead).unwrap();
        let (off, on) = lookahead_fidelities(&top, &pair, 2).unwrap();
        assert_eq!(act, if on > off { Action::On } else { Action::Off });
    }

    #[test]
    fn greedy_without_coupling_is_flat() {
        let config = cfg(3, 0.0, 10);
        for mode in [GreedyMode::Lookahead, GreedyMode::Lyapunov] {
            let run = run_greedy(&config, mode).unwrap();
            assert!(run.trajectory.fidelities.iter().all(|&f| f == 0.0));
        }
    }

    #[test]
    fn greedy_choices_are_one_step_optimal_and_repeatable() {
        let config = cfg(3, 0.6, 20);
        let run = run_greedy(&config, GreedyMode::Lookahead).unwrap();
        let again = run_greedy(&config, GreedyMode::Lookahead).unwrap();
        assert_eq!(run.actions, again.actions);
        let pair = config.propagators().unwrap();
        let mut rho = config.initial_state();
        for a in &run.actions {
            let (off, on) = lookahead_fidelities(&rho, &pair, 3).unwrap();
            let chosen = if a.is_on() { on } else { off };
            assert_eq!(chosen, off.max(on));
            rho = propagate(&rho, pair.get(a.is_on())).unwrap();
        }
    }

    #[test]
    fn adjoint_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let model = LadderModel::regular(4, 0.8).unwrap().with_dephasing(0.005).unwrap();
        let config = EnvConfig::new(model, 8, 0.5).unwrap();
        let amps: Vec<f64> = (0..8).map(|_| rng.gen_range(0.05..0.75)).collect();
        let p = Protocol::continuous(amps);
        let adj = grape_gradient(&p, &config).unwrap();
        let fd = grape_gradient_fd(&p, &config).unwrap();
        let scale = fd.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        for (a, f) in adj.iter().zip(&fd) {
            assert!((a - f).abs() <= 1e-4 * scale, "{a} vs {f}");
        }
    }

    #[test]
    fn gradient_vanishes_for_vanishing_slice() {
        let model = LadderModel::regular(3, 0.5).unwrap();
        let config = EnvConfig::new(model, 4, 1e-6).unwrap();
        let g = grape_gradient(&Protocol::continuous(vec![0.2; 4]), &config).unwrap();
        assert!(g.iter().all(|x: &f64| x.abs() < 1e-5));
    }

    #[test]
    fn grape_stays_in_box_and_is_stationary_at_optimum() {
        let config = cfg(2, 0.4, 8);
        let grape = GrapeConfig { restarts: 3, max_iterations: 60, ..Default::default() };
        let res = grape_optimize(&config, &grape, 3).unwrap();
        assert!(res.protocol.amplitudes.iter().all(|&a| (0.0..=0.4).contains(&a)));
        let problem = GrapeProblem::new(&config).unwrap();
        let (amps, f, _) = grape_ascend(&problem, &config, &grape, res.protocol.amplitudes.clone()).unwrap();
        let f0 = problem.fidelity(&res.protocol.amplitudes).unwrap();
        assert!(f - f0 < 1e-6);
        assert!(amps.iter().all(|&a| (0.0..=0.4).contains(&a)));
    }

    #[test]
    fn exhaustive_single_slice() {
        let config = cfg(2, 0.3, 1);
        let res = exhaustive_search(&config, 16).unwrap();
        let pair = config.propagators().unwrap();
        let (off, on) = lookahead_fidelities(&config.initial_state(), &pair, 2).unwrap();
        assert_eq!(res.actions, vec![if on > off { Action::On } else { Action::Off }]);
        assert!(exhaustive_search(&cfg(2, 0.3, 17), 16).is_err());
    }

    #[test]
    fn exhaustive_dominates_greedy_and_matches_playback() {
        let config = cfg(3, 0.7, 10);
        let ex = exhaustive_search(&config, 16).unwrap();
        let gr = run_greedy(&config, GreedyMode::Lookahead).unwrap();
        assert!(ex.fidelity >= gr.trajectory.final_fidelity());
        let replay = run_protocol(&config, &ex.protocol).unwrap().final_fidelity();
        assert_eq!(replay, ex.fidelity);
        // Lexicographic tie-break: no smaller protocol reaches the same value.
        let pair = config.propagators().unwrap();
        let code: usize = ex.actions.iter().fold(0, |acc, a| acc * 2 + a.index());
        for smaller in 0..code {
            let acts: Vec<Action> = (0..10)
                .map(|b| if smaller >> (9 - b) & 1 == 1 { Action::On } else { Action::Off })
                .collect();
            assert!(run_binary(&config, &pair, &acts).unwrap().final_fidelity() < ex.fidelity);
        }
    }
}
