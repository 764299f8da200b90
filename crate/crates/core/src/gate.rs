//! Per-joint trigger gate: a joint plays once its velocity has stayed at or
//! above the threshold for at least the debounce time, and stops when it drops
//! below (optionally after a release debounce).
//!
//! Durations are measured in stream time, not sample counts, so the machine
//! behaves the same under jittery sampling.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::telemetry::{JointId, TelemetryError, TelemetryFrame};

/// Default trigger threshold in rad/s.
pub const DEFAULT_THRESHOLD: f64 = 0.05;
/// Default sustain time before a trigger, in seconds.
pub const DEFAULT_DEBOUNCE: f64 = 0.04;

/// Slack for elapsed-time comparisons. Stream timestamps such as `k / 250.0`
/// do not subtract exactly, and a 40 ms window must not miss by an ulp.
pub const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GateError {
    #[error("non-finite velocity {0}")]
    NonFinite(f64),
    #[error("sample at t={current} does not follow t={previous}")]
    NotIncreasing { previous: f64, current: f64 },
    #[error("invalid gate config: {0}")]
    Config(String),
    #[error(transparent)]
    Stream(#[from] TelemetryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateConfig {
    pub threshold: f64,
    pub debounce: f64,
    pub release_debounce: f64,
}

impl Default for GateConfig {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_THRESHOLD,
            debounce: DEFAULT_DEBOUNCE,
            release_debounce: 0.0,
        }
    }
}

impl GateConfig {
    pub fn new(threshold: f64, debounce: f64, release_debounce: f64) -> Result<Self, GateError> {
        let cfg = Self {
            threshold,
            debounce,
            release_debounce,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), GateError> {
        if !(self.threshold.is_finite() && self.threshold > 0.0) {
            return Err(GateError::Config(format!(
                "threshold must be > 0, got {}",
                self.threshold
            )));
        }
        if !(self.debounce.is_finite() && self.debounce >= 0.0) {
            return Err(GateError::Config(format!(
                "debounce must be >= 0, got {}",
                self.debounce
            )));
        }
        if !(self.release_debounce.is_finite() && self.release_debounce >= 0.0) {
            return Err(GateError::Config(format!(
                "release_debounce must be >= 0, got {}",
                self.release_debounce
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Phase {
    Idle,
    Pending {
        entered_at: f64,
    },
    /// `below_since` tracks a pending release while `release_debounce > 0`.
    Active {
        below_since: Option<f64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateState {
    pub phase: Phase,
    pub last_transition: f64,
    last_t: Option<f64>,
}

impl Default for GateState {
    fn default() -> Self {
        Self {
            phase: Phase::Idle,
            last_transition: 0.0,
            last_t: None,
        }
    }
}

impl GateState {
    pub fn is_active(&self) -> bool {
        matches!(self.phase, Phase::Active { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GateEventKind {
    Trigger,
    Release,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateEvent {
    pub joint: JointId,
    pub kind: GateEventKind,
    pub t: f64,
}

/// Advance one joint's gate by a sample taken at `t`.
pub fn gate_step(
    state: GateState,
    velocity: f64,
    t: f64,
    cfg: &GateConfig,
) -> Result<(GateState, Option<GateEventKind>), GateError> {
    if !velocity.is_finite() {
        return Err(GateError::NonFinite(velocity));
    }
    if let Some(previous) = state.last_t {
        if t <= previous {
            return Err(GateError::NotIncreasing {
                previous,
                current: t,
            });
        }
    }
    let above = velocity >= cfg.threshold;
    let mut next = GateState {
        last_t: Some(t),
        ..state
    };
    let mut event = None;

    match state.phase {
        Phase::Idle if above => {
            next.phase = Phase::Pending { entered_at: t };
            next.last_transition = t;
            // a zero debounce triggers on the entering sample
            if cfg.debounce <= TIME_EPS {
                next.phase = Phase::Active { below_since: None };
                event = Some(GateEventKind::Trigger);
            }
        }
        Phase::Idle => {}
        Phase::Pending { entered_at } if above => {
            if t - entered_at + TIME_EPS >= cfg.debounce {
                next.phase = Phase::Active { below_since: None };
                next.last_transition = t;
                event = Some(GateEventKind::Trigger);
            }
        }
        Phase::Pending { .. } => {
            next.phase = Phase::Idle;
            next.last_transition = t;
        }
        Phase::Active { .. } if above => {
            next.phase = Phase::Active { below_since: None };
        }
        Phase::Active { below_since } => {
            let since = below_since.unwrap_or(t);
            if t - since + TIME_EPS >= cfg.release_debounce {
                next.phase = Phase::Idle;
                next.last_transition = t;
                event = Some(GateEventKind::Release);
            } else {
                next.phase = Phase::Active {
                    below_since: Some(since),
                };
            }
        }
    }
    Ok((next, event))
}

/// Gates for all joints, each with its own config and state.
#[derive(Debug, Clone)]
pub struct GateBank {
    configs: [GateConfig; JointId::COUNT],
    states: [GateState; JointId::COUNT],
    enabled: [bool; JointId::COUNT],
}

impl Default for GateBank {
    fn default() -> Self {
        Self::uniform(GateConfig::default())
    }
}

impl GateBank {
    pub fn uniform(cfg: GateConfig) -> Self {
        Self {
            configs: [cfg; JointId::COUNT],
            states: [GateState::default(); JointId::COUNT],
            enabled: [true; JointId::COUNT],
        }
    }

    pub fn set_config(&mut self, joint: JointId, cfg: GateConfig) {
        self.configs[joint.index()] = cfg;
    }

    pub fn config(&self, joint: JointId) -> &GateConfig {
        &self.configs[joint.index()]
    }

    /// Restrict gating to `joints`; samples for other joints are ignored.
    pub fn only(mut self, joints: impl IntoIterator<Item = JointId>) -> Self {
        self.enabled = [false; JointId::COUNT];
        for j in joints {
            self.enabled[j.index()] = true;
        }
        self
    }

    pub fn state(&self, joint: JointId) -> &GateState {
        &self.states[joint.index()]
    }

    /// Feed one frame; joints absent from the frame are not stepped.
    pub fn push(&mut self, frame: &TelemetryFrame) -> Result<Vec<GateEvent>, GateError> {
        let mut events = Vec::new();
        for (&joint, &v) in &frame.velocities {
            let i = joint.index();
            if !self.enabled[i] {
                continue;
            }
            let (state, kind) = gate_step(self.states[i], v, frame.t, &self.configs[i])?;
            self.states[i] = state;
            if let Some(kind) = kind {
                events.push(GateEvent {
                    joint,
                    kind,
                    t: frame.t,
                });
            }
        }
        Ok(events)
    }

    /// Joints currently sounding.
    pub fn active_joints(&self) -> impl Iterator<Item = JointId> + '_ {
        JointId::ALL
            .into_iter()
            .filter(|j| self.states[j.index()].is_active())
    }
}

/// Run the gates over a whole frame sequence. Events come out in time order,
/// joints in canonical order within a frame.
pub fn gate_run<'a, I>(frames: I, bank: &GateBank) -> Result<Vec<GateEvent>, GateError>
where
    I: IntoIterator<Item = &'a TelemetryFrame>,
{
    let mut bank = bank.clone();
    let mut events = Vec::new();
    for frame in frames {
        events.extend(bank.push(frame)?);
    }
    Ok(events)
}

/// Like [`gate_run`] but over a fallible stream.
pub fn gate_run_stream<I>(frames: I, bank: &GateBank) -> Result<Vec<GateEvent>, GateError>
where
    I: IntoIterator<Item = Result<TelemetryFrame, TelemetryError>>,
{
    let mut bank = bank.clone();
    let mut events = Vec::new();
    for frame in frames {
        events.extend(bank.push(&frame?)?);
    }
    Ok(events)
}
