//! Error-driven synchronization interval controller.
//!
//! Given the change in ensemble error `d = err_t - err_{t-1}`:
//! grow the interval by `step_up` when `d < theta1`, shrink it to
//! `max(1, interval - step_down)` when `d > theta2`, otherwise keep it;
//! then clamp into `[i_min, i_max]`.
//!
//! `step_up` / `step_down` correspond to the step sizes usually written
//! alpha / beta; they are renamed to avoid clashing with learner weights.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SchedulerParams {
    pub theta1: f64,
    pub theta2: f64,
    pub step_up: u32,
    pub step_down: u32,
    pub i_min: u32,
    pub i_max: u32,
}

impl Default for SchedulerParams {
    fn default() -> Self {
        SchedulerParams {
            theta1: 0.0,
            theta2: 0.005,
            step_up: 1,
            step_down: 2,
            i_min: 1,
            i_max: 16,
        }
    }
}

impl SchedulerParams {
    /// Same bounds and steps with both thresholds disabled, so the interval
    /// never moves.
    pub fn frozen(self) -> Self {
        SchedulerParams {
            theta1: f64::NEG_INFINITY,
            theta2: f64::INFINITY,
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.theta1.is_nan() || self.theta2.is_nan() {
            return Err(Error::Config("scheduler thresholds must not be NaN".into()));
        }
        if self.theta1 > self.theta2 {
            return Err(Error::Config(format!(
                "scheduler.theta1 ({}) must not exceed scheduler.theta2 ({})",
                self.theta1, self.theta2
            )));
        }
        if self.step_up == 0 || self.step_down == 0 {
            return Err(Error::Config(
                "scheduler.step_up and scheduler.step_down must be positive".into(),
            ));
        }
        if self.i_min == 0 || self.i_min > self.i_max {
            return Err(Error::Config(format!(
                "scheduler bounds must satisfy 1 <= i_min <= i_max, got i_min={} i_max={}",
                self.i_min, self.i_max
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchedulerState {
    pub interval: u32,
    pub last_error: Option<f64>,
}

impl SchedulerState {
    pub fn new(initial_interval: u32, params: &SchedulerParams) -> Self {
        SchedulerState {
            interval: initial_interval.clamp(params.i_min, params.i_max),
            last_error: None,
        }
    }
}

/// Which case of the rule fired.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Adjustment {
    Initialized,
    Grow,
    Shrink,
    Hold,
}

pub fn next_interval(
    state: SchedulerState,
    params: &SchedulerParams,
    epsilon_t: f64,
) -> SchedulerState {
    step(state, params, epsilon_t).0
}

pub fn step(
    state: SchedulerState,
    params: &SchedulerParams,
    epsilon_t: f64,
) -> (SchedulerState, Adjustment) {
    let Some(last) = state.last_error else {
        return (
            SchedulerState {
                interval: state.interval,
                last_error: Some(epsilon_t),
            },
            Adjustment::Initialized,
        );
    };
    let delta = epsilon_t - last;
    let (raw, adj) = if delta < params.theta1 {
        (
            state.interval.saturating_add(params.step_up),
            Adjustment::Grow,
        )
    } else if delta > params.theta2 {
        (
            state.interval.saturating_sub(params.step_down).max(1),
            Adjustment::Shrink,
        )
    } else {
        (state.interval, Adjustment::Hold)
    };
    (
        SchedulerState {
            interval: raw.clamp(params.i_min, params.i_max),
            last_error: Some(epsilon_t),
        },
        adj,
    )
}
