//! Episodic decision process over the ladder system: full density-matrix
//! observations, binary coupling actions and fidelity-difference rewards.

use std::collections::hash_map::Entry;
use std::collections::HashMap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::lindblad::{fidelity, propagate, DensityMatrix, LadderModel, Propagator, PropagatorPair};
use crate::protocol::{Action, Protocol, ProtocolMode};
use crate::scalar::{c, Real};

/// Slice duration used for every task unless overridden.
pub const DEFAULT_DT: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct EnvConfig<T> {
    pub model: LadderModel<T>,
    pub steps: usize,
    pub dt: T,
    /// 1-based level whose population is the fidelity.
    pub target_level: usize,
    /// 1-based level the system starts in.
    pub initial_level: usize,
}

impl<T: Real> EnvConfig<T> {
    /// Starts in level 1 and targets level n.
    pub fn new(model: LadderModel<T>, steps: usize, dt: T) -> Result<Self> {
        let n = model.n();
        let cfg = Self {
            model,
            steps,
            dt,
            target_level: n,
            initial_level: 1,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_levels(mut self, initial_level: usize, target_level: usize) -> Result<Self> {
        self.initial_level = initial_level;
        self.target_level = target_level;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.model.n();
        if self.steps == 0 {
            return Err(Error::Domain("episode needs at least one step".into()));
        }
        if !(self.dt > T::zero()) || !self.dt.is_finite() {
            return Err(Error::Domain(format!("time slice must be positive, got {}", self.dt)));
        }
        for level in [self.target_level, self.initial_level] {
            if level == 0 || level > n {
                return Err(Error::IndexOutOfRange { index: level, max: n });
            }
        }
        Ok(())
    }

    pub fn total_time(&self) -> T {
        self.dt * T::lit(self.steps as f64)
    }

    pub fn initial_state(&self) -> DensityMatrix<T> {
        DensityMatrix::pure(self.model.n(), self.initial_level).expect("validated level")
    }

    pub fn propagators(&self) -> Result<PropagatorPair<T>> {
        PropagatorPair::new(&self.model, self.dt)
    }
}

/// Real and imaginary parts of every ρ entry in row-major order (length 2n²).
#[derive(Debug, Clone, PartialEq)]
pub struct Observation<T>(pub Vec<T>);

impl<T> Observation<T> {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }
}

pub fn encode_state<T: Real>(rho: &DensityMatrix<T>) -> Observation<T> {
    let m = rho.matrix();
    let mut out = Vec::with_capacity(2 * m.len());
    for z in m.iter() {
        out.push(z.re);
        out.push(z.im);
    }
    Observation(out)
}

/// Inverse of [`encode_state`]; validates the reconstructed matrix.
pub fn decode_state<T: Real>(obs: &Observation<T>) -> Result<DensityMatrix<T>> {
    let n = ((obs.len() / 2) as f64).sqrt().round() as usize;
    if 2 * n * n != obs.len() || n == 0 {
        return Err(Error::InvalidDimension(format!("observation length {} is not 2n²", obs.len())));
    }
    let m = ndarray::Array2::from_shape_fn((n, n), |(i, j)| {
        let k = 2 * (i * n + j);
        c(obs.0[k], obs.0[k + 1])
    });
    DensityMatrix::from_matrix(m)
}

#[derive(Debug, Clone)]
pub struct StepResult<T> {
    pub observation: Observation<T>,
    pub reward: T,
    pub done: bool,
    pub fidelity: T,
}

/// One environment instance. Owns its state; shares read-only propagators.
#[derive(Debug, Clone)]
pub struct ControlEnv<T> {
    config: EnvConfig<T>,
    propagators: Arc<PropagatorPair<T>>,
    rho: DensityMatrix<T>,
    steps_taken: usize,
    seed: u64,
}

impl<T: Real> ControlEnv<T> {
    pub fn new(config: EnvConfig<T>) -> Result<Self> {
        let props = Arc::new(config.propagators()?);
        Self::with_propagators(config, props)
    }

    pub fn with_propagators(config: EnvConfig<T>, propagators: Arc<PropagatorPair<T>>) -> Result<Self> {
        config.validate()?;
        if propagators.on.hilbert_dim() != config.model.n() {
            return Err(Error::DimensionMismatch {
                expected: config.model.n(),
                actual: propagators.on.hilbert_dim(),
            });
        }
        let rho = config.initial_state();
        Ok(Self {
            config,
            propagators,
            rho,
            steps_taken: 0,
            seed: 0,
        })
    }

    /// Restores the initial pure state. Evolution is deterministic; the seed is
    /// only recorded.
    pub fn reset(&mut self, seed: u64) -> Observation<T> {
        self.rho = self.config.initial_state();
        self.steps_taken = 0;
        self.seed = seed;
        encode_state(&self.rho)
    }

    pub fn step(&mut self, action: Action) -> Result<StepResult<T>> {
        if self.is_done() {
            return Err(Error::Protocol(format!(
                "episode finished after {} steps; call reset",
                self.config.steps
            )));
        }
        let before = self.fidelity();
        self.rho = propagate(&self.rho, self.propagators.get(action.is_on()))?;
        self.steps_taken += 1;
        let after = self.fidelity();
        Ok(StepResult {
            observation: encode_state(&self.rho),
            reward: after - before,
            done: self.is_done(),
            fidelity: after,
        })
    }

    pub fn fidelity(&self) -> T {
        fidelity(&self.rho, self.config.target_level).expect("validated target")
    }

    pub fn observation(&self) -> Observation<T> {
        encode_state(&self.rho)
    }

    pub fn state(&self) -> &DensityMatrix<T> {
        &self.rho
    }

    pub fn is_done(&self) -> bool {
        self.steps_taken >= self.config.steps
    }

    pub fn steps_taken(&self) -> usize {
        self.steps_taken
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn config(&self) -> &EnvConfig<T> {
        &self.config
    }

    pub fn propagators(&self) -> &Arc<PropagatorPair<T>> {
        &self.propagators
    }
}

/// Fidelity after each slice of a played-back protocol.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T> {
    /// `fidelities[k]` is the fidelity after k slices; length N + 1.
    pub fidelities: Vec<T>,
    pub final_state: DensityMatrix<T>,
}

impl<T: Real> Trajectory<T> {
    pub fn final_fidelity(&self) -> T {
        *self.fidelities.last().expect("trajectory has the initial point")
    }
}

/// Plays a protocol back from the initial state.
pub fn run_protocol<T: Real>(config: &EnvConfig<T>, protocol: &Protocol<T>) -> Result<Trajectory<T>> {
    config.validate()?;
    protocol.validate(config.steps, config.model.gamma_max())?;
    match protocol.mode {
        ProtocolMode::Binary => {
            let pair = config.propagators()?;
            run_binary(config, &pair, &protocol.actions().expect("binary protocol"))
        }
        ProtocolMode::Continuous => {
            let mut cache: HashMap<u64, Propagator<T>> = HashMap::new();
            let mut rho = config.initial_state();
            let mut fids = vec![fidelity(&rho, config.target_level)?];
            for &a in &protocol.amplitudes {
                let key = a.as_f64().to_bits();
                let p = match cache.entry(key) {
                    Entry::Occupied(e) => e.into_mut(),
                    Entry::Vacant(e) => e.insert(Propagator::build(&config.model, a, config.dt)?),
                };
                rho = propagate(&rho, p)?;
                fids.push(fidelity(&rho, config.target_level)?);
            }
            Ok(Trajectory { fidelities: fids, final_state: rho })
        }
    }
}

/// Bang-bang playback with prebuilt propagators.
pub fn run_binary<T: Real>(
    config: &EnvConfig<T>,
    pair: &PropagatorPair<T>,
    actions: &[Action],
) -> Result<Trajectory<T>> {
    if actions.len() != config.steps {
        return Err(Error::DimensionMismatch {
            expected: config.steps,
            actual: actions.len(),
        });
    }
    let mut rho = config.initial_state();
    let mut fids = Vec::with_capacity(actions.len() + 1);
    fids.push(fidelity(&rho, config.target_level)?);
    for a in actions {
        rho = propagate(&rho, pair.get(a.is_on()))?;
        fids.push(fidelity(&rho, config.target_level)?);
    }
    Ok(Trajectory { fidelities: fids, final_state: rho })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn two_level(steps: usize) -> EnvConfig<f64> {
        EnvConfig::new(LadderModel::regular(2, 0.1).unwrap(), steps, 0.5).unwrap()
    }

    #[test]
    fn reset_encodes_ground_state() {
        let mut env = ControlEnv::new(two_level(4)).unwrap();
        let obs = env.reset(7);
        assert_eq!(obs.0, vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(env.fidelity(), 0.0);
        assert_eq!(env.seed(), 7);

        let cfg4 = EnvConfig::new(LadderModel::regular(4, 0.8).unwrap(), 3, 0.5).unwrap();
        let mut env4 = ControlEnv::new(cfg4).unwrap();
        assert_eq!(env4.reset(0).len(), 32);
    }

    #[test]
    fn encoding_of_mixed_state_and_inverse() {
        let rho = DensityMatrix::<f64>::maximally_mixed(2);
        let obs = encode_state(&rho);
        assert_eq!(obs.0, vec![0.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.5, 0.0]);
        assert_eq!(decode_state(&obs).unwrap(), rho);
        assert!(decode_state(&Observation(vec![0.0; 7])).is_err());
    }

    #[test]
    fn drift_only_step_gives_zero_reward() {
        let mut env = ControlEnv::new(two_level(3)).unwrap();
        env.reset(0);
        let r = env.step(Action::Off).unwrap();
        assert!(r.reward.abs() < 1e-15);
        assert!(!r.done);
    }

    #[test]
    fn single_on_step_matches_rabi_formula() {
        // ρ₂₂(t) = γ²/Ω² · sin²(Ω t) with Ω = √(γ² + (ΔE/2)²).
        let mut env = ControlEnv::new(two_level(1)).unwrap();
        env.reset(0);
        let r = env.step(Action::On).unwrap();
        let (g, d): (f64, f64) = (0.1, 0.5);
        let om = (g * g + d * d).sqrt();
        let want = g * g / (om * om) * (om * 0.5).sin().powi(2);
        assert!((r.reward - want).abs() < 1e-12, "{} vs {}", r.reward, want);
        assert!((r.reward - 0.002446).abs() < 1e-5);
        assert!(r.done);
    }

    #[test]
    fn stepping_finished_episode_is_an_error() {
        let mut env = ControlEnv::new(two_level(2)).unwrap();
        env.reset(0);
        env.step(Action::On).unwrap();
        assert!(env.step(Action::On).unwrap().done);
        assert!(matches!(env.step(Action::Off), Err(Error::Protocol(_))));
        env.reset(1);
        assert!(env.step(Action::Off).is_ok());
    }

    #[test]
    fn config_validation() {
        let m = LadderModel::regular(3, 1.0).unwrap();
        assert!(EnvConfig::new(m.clone(), 0, 0.5).is_err());
        assert!(EnvConfig::new(m.clone(), 5, 0.0).is_err());
        assert!(EnvConfig::new(m.clone(), 5, 0.5).unwrap().with_levels(1, 4).is_err());
        let cfg = EnvConfig::new(m, 5, 0.5).unwrap();
        assert_eq!(cfg.target_level, 3);
        assert_eq!(cfg.initial_level, 1);
        assert_eq!(cfg.total_time(), 2.5);
    }

    #[test]
    fn flat_trajectory_for_all_off() {
        let cfg = EnvConfig::new(LadderModel::regular(3, 0.8).unwrap(), 10, 0.5).unwrap();
        let p = Protocol::bang_bang(&[Action::Off; 10], 0.8);
        let tr = run_protocol(&cfg, &p).unwrap();
        assert_eq!(tr.fidelities.len(), 11);
        assert!(tr.fidelities.iter().all(|f: &f64| f.abs() < 1e-15));
    }

    #[test]
    fn protocol_errors() {
        let cfg = two_level(3);
        let short = Protocol::bang_bang(&[Action::On; 2], 0.1);
        assert!(matches!(run_protocol(&cfg, &short), Err(Error::DimensionMismatch { .. })));
        let big = Protocol::continuous(vec![0.05, 0.2, 0.0]);
        assert!(matches!(run_protocol(&cfg, &big), Err(Error::Domain(_))));
    }

    #[test]
    fn continuous_playback_agrees_with_binary_on_binary_values() {
        let cfg: EnvConfig<f64> = EnvConfig::new(
            LadderModel::regular(3, 0.7).unwrap().with_dephasing(0.01).unwrap(),
            8,
            0.5,
        )
        .unwrap();
        let acts = [1, 1, 0, 1, 0, 0, 1, 1].map(|a: usize| Action::try_from(a).unwrap());
        let bin = run_protocol(&cfg, &Protocol::bang_bang(&acts, 0.7)).unwrap();
        let amps = acts.iter().map(|a| if a.is_on() { 0.7 } else { 0.0 }).collect();
        let cont = run_protocol(&cfg, &Protocol::continuous(amps)).unwrap();
        for (a, b) in bin.fidelities.iter().zip(&cont.fidelities) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn rewards_telescope_and_observations_bounded(bits in proptest::collection::vec(0usize..2, 12),
                                                      deph in 0.0f64..0.02, decay in 0.0f64..0.02) {
            let model = LadderModel::regular(3, 0.9).unwrap().with_dephasing(deph).unwrap().with_decay(decay).unwrap();
            let cfg = EnvConfig::new(model, bits.len(), 0.5).unwrap();
            let mut env = ControlEnv::new(cfg.clone()).unwrap();
            let obs0 = env.reset(0);
            prop_assert!(obs0.0.iter().all(|x| x.abs() <= 1.0));
            let f0 = env.fidelity();
            let mut total = 0.0f64;
            let mut steps = 0;
            let actions: Vec<Action> = bits.iter().map(|&b| Action::try_from(b).unwrap()).collect();
            for &a in &actions {
                let r = env.step(a).unwrap();
                steps += 1;
                total += r.reward;
                prop_assert_eq!(r.done, steps == bits.len());
                prop_assert!(r.observation.0.iter().all(|x| x.abs() <= 1.0 + 1e-12));
            }
            prop_assert!((total - (env.fidelity() - f0)).abs() < 1e-14);
            let tr = run_protocol(&cfg, &Protocol::bang_bang(&actions, 0.9)).unwrap();
            prop_assert_eq!(tr.final_fidelity(), env.fidelity());
        }
    }
}
