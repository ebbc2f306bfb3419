//! The overfitting-aware proportion scheduler.
//!
//! α follows a tanh ramp over epochs, damped by 0.1 except when the
//! early-stopping counter just grew — rising validation loss signals
//! overfitting, and the full proportion of manipulated data is let
//! through to inject more diverse samples.

use crate::{CoreError, Result};

/// Scheduler inputs: the epoch ramp position and the early-stopping
/// counters it compares.
#[derive(Debug, Clone)]
pub struct SchedulerState {
    pub epoch: u64,
    pub tau: f64,
    /// Epochs since the last validation improvement.
    pub c_es: u64,
    /// The counter value seen by the previous call.
    pub c_les: u64,
}

impl SchedulerState {
    pub fn new(tau: f64) -> Self {
        Self {
            epoch: 0,
            tau,
            c_es: 0,
            c_les: 0,
        }
    }

    /// Record an epoch's validation outcome: reset on a new best, count
    /// otherwise.
    pub fn observe_validation(&mut self, improved: bool) {
        if improved {
            self.c_es = 0;
        } else {
            self.c_es += 1;
        }
    }
}

/// α = min(tanh(E/τ) + 0.01, 1.0) × R, with R = 1 when the counter grew
/// since the last call and 0.1 otherwise. Updates the remembered counter.
pub fn schedule_alpha(state: &mut SchedulerState) -> Result<f64> {
    if state.tau <= 0.0 {
        return Err(CoreError::Config(format!(
            "scheduler tau must be > 0, got {}",
            state.tau
        )));
    }
    let r_penalty = if state.c_es > state.c_les { 1.0 } else { 0.1 };
    state.c_les = state.c_es;
    let ramp = ((state.epoch as f64 / state.tau).tanh() + 0.01).min(1.0);
    Ok(ramp * r_penalty)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn epoch_zero_with_flat_counters() {
        let mut s = SchedulerState::new(5.0);
        assert_abs_diff_eq!(schedule_alpha(&mut s).unwrap(), 0.001, epsilon = 1e-15);
    }

    #[test]
    fn saturated_ramp_with_growing_counter() {
        let mut s = SchedulerState::new(5.0);
        s.epoch = 500;
        s.c_es = 3;
        s.c_les = 2;
        assert_abs_diff_eq!(schedule_alpha(&mut s).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn epoch_equals_tau_no_damping() {
        let mut s = SchedulerState::new(7.0);
        s.epoch = 7;
        s.c_es = 1;
        s.c_les = 0;
        let expect = (1.0f64).tanh() + 0.01;
        assert_abs_diff_eq!(schedule_alpha(&mut s).unwrap(), expect, epsilon = 1e-12);
        // ≈ 0.7716
        assert!((schedule_alpha(&mut SchedulerState {
            epoch: 7,
            tau: 7.0,
            c_es: 1,
            c_les: 0
        })
        .unwrap()
            - 0.7716)
            .abs()
            < 1e-4);
    }

    #[test]
    fn counter_is_remembered_between_calls() {
        let mut s = SchedulerState::new(5.0);
        s.epoch = 100;
        s.c_es = 1;
        // first call: counter grew from 0 → no damping
        assert_abs_diff_eq!(schedule_alpha(&mut s).unwrap(), 1.0, epsilon = 1e-12);
        // second call with the same counter: damped
        assert_abs_diff_eq!(schedule_alpha(&mut s).unwrap(), 0.1, epsilon = 1e-12);
    }

    #[test]
    fn alpha_is_monotone_while_penalty_constant_and_bounded() {
        let mut last = 0.0;
        for e in 0..200 {
            let mut s = SchedulerState::new(14.0);
            s.epoch = e;
            let a = schedule_alpha(&mut s).unwrap();
            assert!(a > 0.0 && a <= 1.0);
            assert!(a + 1e-15 >= last, "α dropped at epoch {e}");
            last = a;
        }
    }

    #[test]
    fn counter_observation_semantics() {
        let mut s = SchedulerState::new(5.0);
        s.observe_validation(false);
        s.observe_validation(false);
        assert_eq!(s.c_es, 2);
        s.observe_validation(true);
        assert_eq!(s.c_es, 0);
    }

    #[test]
    fn non_positive_tau_is_an_error() {
        let mut s = SchedulerState::new(0.0);
        assert!(schedule_alpha(&mut s).is_err());
    }
}
