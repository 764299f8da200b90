//! Movement-decoupled triggering: onsets from a seeded Poisson process per
//! joint, each held for a uniformly drawn duration.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use super::SoundscapeError;
use crate::gate::{GateEvent, GateEventKind};
use crate::telemetry::JointId;

pub const DEFAULT_RATE: f64 = 0.5;
pub const DEFAULT_HOLD: (f64, f64) = (0.5, 3.0);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomConfig {
    pub seed: u64,
    /// Onsets per second per joint. Joints missing here use `default_rate`.
    pub rates: BTreeMap<JointId, f64>,
    pub default_rate: f64,
    /// Range the hold time before release is drawn from, seconds.
    pub hold_range: (f64, f64),
}

impl Default for RandomConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            rates: BTreeMap::new(),
            default_rate: DEFAULT_RATE,
            hold_range: DEFAULT_HOLD,
        }
    }
}

impl RandomConfig {
    pub fn rate(&self, joint: JointId) -> f64 {
        self.rates.get(&joint).copied().unwrap_or(self.default_rate)
    }

    pub fn validate(&self) -> Result<(), SoundscapeError> {
        let bad_rate = |r: f64| !(r.is_finite() && r > 0.0);
        if bad_rate(self.default_rate) || self.rates.values().any(|r| bad_rate(*r)) {
            return Err(SoundscapeError::Random("rates must be > 0".into()));
        }
        let (lo, hi) = self.hold_range;
        if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo <= hi) {
            return Err(SoundscapeError::Random(format!(
                "invalid hold range [{lo}, {hi}]"
            )));
        }
        Ok(())
    }
}

/// Trigger/release schedule over `[0, duration)` for `joints`.
///
/// Each joint draws from its own ChaCha stream, so adding or removing one
/// joint leaves the others' schedules unchanged. A hold that would overlap the
/// next onset is cut at that onset (release and retrigger at the same time),
/// so onsets stay a true Poisson process.
pub fn random_schedule(
    duration: f64,
    joints: impl IntoIterator<Item = JointId>,
    cfg: &RandomConfig,
) -> Result<Vec<GateEvent>, SoundscapeError> {
    if !(duration.is_finite() && duration > 0.0) {
        return Err(SoundscapeError::Random(format!(
            "duration must be > 0, got {duration}"
        )));
    }
    cfg.validate()?;
    let (lo, hi) = cfg.hold_range;
    let mut events = Vec::new();
    for joint in joints {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(joint.index() as u64 + 1);
        let gaps = Exp::new(cfg.rate(joint)).map_err(|e| SoundscapeError::Random(e.to_string()))?;
        let mut onsets = Vec::new();
        let mut t = 0.0;
        loop {
            t += gaps.sample(&mut rng);
            if t >= duration {
                break;
            }
            let hold = if lo == hi {
                lo
            } else {
                rng.random_range(lo..hi)
            };
            onsets.push((t, hold));
        }
        for (i, &(on, hold)) in onsets.iter().enumerate() {
            let mut off = on + hold;
            if let Some(&(next, _)) = onsets.get(i + 1) {
                off = off.min(next);
            }
            events.push(GateEvent {
                joint,
                kind: GateEventKind::Trigger,
                t: on,
            });
            events.push(GateEvent {
                joint,
                kind: GateEventKind::Release,
                t: off,
            });
        }
    }
    events.sort_by(|a, b| {
        a.t.total_cmp(&b.t)
            .then(a.joint.cmp(&b.joint))
            .then((a.kind == GateEventKind::Trigger).cmp(&(b.kind == GateEventKind::Trigger)))
    });
    Ok(events)
}

/// Trigger rate per joint observed in a gate event list over `duration`.
/// Joints that never triggered are left out.
pub fn empirical_rates(events: &[GateEvent], duration: f64) -> BTreeMap<JointId, f64> {
    let mut counts: BTreeMap<JointId, u32> = BTreeMap::new();
    for e in events.iter().filter(|e| e.kind == GateEventKind::Trigger) {
        *counts.entry(e.joint).or_default() += 1;
    }
    counts
        .into_iter()
        .map(|(j, c)| (j, f64::from(c) / duration))
        .collect()
}

/// JSON-lines form of a schedule, one event per line.
pub fn schedule_to_jsonl(events: &[GateEvent]) -> String {
    let mut s = String::new();
    for e in events {
        s.push_str(&serde_json::to_string(e).expect("gate events serialize"));
        s.push('\n');
    }
    s
}
