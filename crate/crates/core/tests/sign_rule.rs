//! The two-level sign rule compared slice by slice with lookahead greedy,
//! along the greedy trajectory from the ground state.
//!
//! Only the approach phase (target population ≤ 0.95) is scored: at the target
//! pole the indicator |Im(−ab*)| ≤ |a||b| vanishes and both rules chatter on
//! second-order effects.

use qctrl::analytic::{sign_rule_action, switch_indicator_of_state};
use qctrl::baselines::{greedy_step, GreedyMode};
use qctrl::env::EnvConfig;
use qctrl::lindblad::{fidelity, propagate, LadderModel};

struct Slice {
    agree: bool,
    indicator: f64,
    approach: bool,
}

fn greedy_trace(gamma: f64, dt: f64) -> Vec<Slice> {
    let steps = (55.0 / dt).round() as usize;
    let cfg = EnvConfig::new(LadderModel::regular(2, gamma).unwrap(), steps, dt).unwrap();
    let pair = cfg.propagators().unwrap();
    let mut rho = cfg.initial_state();
    let mut out = Vec::with_capacity(steps);
    for _ in 0..steps {
        let indicator = switch_indicator_of_state(&rho).unwrap();
        let greedy = greedy_step(&rho, &cfg, &pair, GreedyMode::Lookahead).unwrap();
        out.push(Slice {
            agree: greedy == sign_rule_action(indicator),
            indicator,
            approach: fidelity(&rho, 2).unwrap() <= 0.95,
        });
        rho = propagate(&rho, pair.get(greedy.is_on())).unwrap();
    }
    out
}

fn agreement(trace: &[Slice]) -> f64 {
    let scored: Vec<&Slice> = trace.iter().filter(|s| s.approach).collect();
    scored.iter().filter(|s| s.agree).count() as f64 / scored.len() as f64
}

#[test]
fn sign_rule_matches_greedy_on_fine_slices() {
    for gamma in [0.05, 0.1, 0.2] {
        for dt in [0.05, 0.1] {
            let rate = agreement(&greedy_trace(gamma, dt));
            assert!(rate >= 0.95, "γ {gamma}, dt {dt}: agreement {rate:.3}");
        }
    }
}

#[test]
fn disagreements_sit_next_to_indicator_roots() {
    for gamma in [0.05, 0.1, 0.2] {
        for dt in [0.05, 0.1, 0.25, 0.5] {
            let trace = greedy_trace(gamma, dt);
            for (k, s) in trace.iter().enumerate() {
                if !s.approach || s.agree {
                    continue;
                }
                let window = &trace[k.saturating_sub(1)..(k + 2).min(trace.len())];
                let lo = window.iter().map(|w| w.indicator).fold(f64::INFINITY, f64::min);
                let hi = window.iter().map(|w| w.indicator).fold(f64::NEG_INFINITY, f64::max);
                assert!(lo <= 0.0 && 0.0 <= hi, "γ {gamma}, dt {dt}: mismatch at slice {k} away from a root");
            }
        }
    }
}

#[test]
fn coarse_slices_still_mostly_agree() {
    // Two-level task at the default slice length.
    let rate = agreement(&greedy_trace(0.1, 0.5));
    assert!(rate >= 0.9, "agreement {rate:.3}");
}
