//! Synthetic telemetry: the dance, navigate and wipe task presets, and
//! seeded pulse trains for exercising the gate.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gate::DEFAULT_THRESHOLD;
use crate::telemetry::{JointId, StreamHeader, TelemetryFrame, DEFAULT_SAMPLE_RATE_HZ};

pub const DEFAULT_JITTER: f64 = 0.005;
pub const DEFAULT_RAMP: f64 = 0.25;

const BUILTIN: [(&str, &str); 3] = [
    ("dance", include_str!("../presets/dance.json")),
    ("navigate", include_str!("../presets/navigate.json")),
    ("wipe", include_str!("../presets/wipe.json")),
];

#[derive(Debug, Error)]
pub enum SimError {
    #[error("unknown preset `{0}` (built-in: dance, navigate, wipe)")]
    UnknownPreset(String),
    #[error("preset {name}: {reason}")]
    Invalid { name: String, reason: String },
    #[error("preset file: {0}")]
    Io(String),
    #[error("pulse stats: {0}")]
    Stats(String),
}

fn one() -> f64 {
    1.0
}

fn default_ramp() -> f64 {
    DEFAULT_RAMP
}

fn default_angle() -> f64 {
    80.0
}

/// Trapezoidal velocity bout: ramp up, plateau at `amplitude`, ramp down.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segment {
    pub start: f64,
    pub end: f64,
    /// rad/s
    pub amplitude: f64,
    #[serde(default = "default_ramp")]
    pub ramp: f64,
    /// Sign of rotation, used only for the angle track.
    #[serde(default = "one")]
    pub direction: f64,
}

impl Segment {
    pub fn velocity(&self, t: f64) -> f64 {
        if t < self.start || t >= self.end {
            return 0.0;
        }
        let ramp = self.ramp.min((self.end - self.start) / 2.0);
        if ramp <= 0.0 {
            return self.amplitude;
        }
        let edge = (t - self.start).min(self.end - t);
        self.amplitude * (edge / ramp).min(1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointProfile {
    #[serde(default)]
    pub segments: Vec<Segment>,
    /// Degrees at t = 0.
    #[serde(default = "default_angle")]
    pub start_angle: f64,
}

impl JointProfile {
    pub fn velocity(&self, t: f64) -> f64 {
        self.segments.iter().map(|s| s.velocity(t)).sum()
    }

    fn segment_at(&self, t: f64) -> Option<&Segment> {
        self.segments.iter().find(|s| t >= s.start && t < s.end)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskPreset {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub duration: f64,
    pub seed: u64,
    /// Peak of the uniform jitter added inside motion segments, rad/s.
    #[serde(default)]
    pub jitter: f64,
    pub joints: BTreeMap<JointId, JointProfile>,
}

impl TaskPreset {
    pub fn builtin(name: &str) -> Result<Self, SimError> {
        let (_, text) = BUILTIN
            .iter()
            .find(|(n, _)| *n == name)
            .ok_or_else(|| SimError::UnknownPreset(name.to_string()))?;
        Self::from_json(text)
    }

    pub fn builtin_names() -> impl Iterator<Item = &'static str> {
        BUILTIN.iter().map(|(n, _)| *n)
    }

    pub fn from_json(text: &str) -> Result<Self, SimError> {
        let p: TaskPreset = serde_json::from_str(text).map_err(|e| SimError::Invalid {
            name: "<json>".into(),
            reason: e.to_string(),
        })?;
        p.validate()?;
        Ok(p)
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SimError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// A built-in name or a path to a preset file.
    pub fn resolve(name_or_path: &str) -> Result<Self, SimError> {
        match Self::builtin(name_or_path) {
            Err(SimError::UnknownPreset(_)) if Path::new(name_or_path).is_file() => {
                Self::load(Path::new(name_or_path))
            }
            other => other,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |reason: String| {
            Err(SimError::Invalid {
                name: self.name.clone(),
                reason,
            })
        };
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return bad(format!("duration must be > 0, got {}", self.duration));
        }
        if !(0.0..DEFAULT_THRESHOLD).contains(&self.jitter) {
            return bad(format!(
                "jitter {} must be in [0, {DEFAULT_THRESHOLD})",
                self.jitter
            ));
        }
        for (joint, profile) in &self.joints {
            let mut segs: Vec<&Segment> = profile.segments.iter().collect();
            segs.sort_by(|a, b| a.start.total_cmp(&b.start));
            for s in &segs {
                if !(s.start.is_finite() && s.end.is_finite() && s.start >= 0.0 && s.end > s.start)
                {
                    return bad(format!(
                        "{joint}: segment [{}, {}) is empty or negative",
                        s.start, s.end
                    ));
                }
                if !(s.amplitude.is_finite() && s.amplitude >= 0.0) {
                    return bad(format!("{joint}: amplitude {} must be >= 0", s.amplitude));
                }
                if !(s.ramp.is_finite() && s.ramp >= 0.0) {
                    return bad(format!("{joint}: ramp {} must be >= 0", s.ramp));
                }
            }
            if let Some(w) = segs.windows(2).find(|w| w[1].start < w[0].end) {
                return bad(format!(
                    "{joint}: segments at {} and {} overlap",
                    w[0].start, w[1].start
                ));
            }
        }
        Ok(())
    }

    pub fn header(&self, rate: f64) -> StreamHeader {
        StreamHeader {
            sample_rate_hz: rate,
            joints_present: self.joints.keys().copied().collect(),
        }
    }
}

/// Sample a preset at `rate` Hz over `[0, duration)`.
///
/// Jitter is drawn only inside motion segments, so idle joints read exactly
/// zero. Angles integrate the noiseless profile.
pub fn generate(preset: &TaskPreset, rate: f64) -> Vec<TelemetryFrame> {
    assert!(rate > 0.0, "rate must be positive");
    let n = (preset.duration * rate).round() as usize;
    let dt = 1.0 / rate;
    let mut rng = ChaCha8Rng::seed_from_u64(preset.seed);
    let mut angles: BTreeMap<JointId, f64> = preset
        .joints
        .iter()
        .map(|(j, p)| (*j, p.start_angle))
        .collect();
    let mut frames = Vec::with_capacity(n);
    for i in 0..n {
        let t = i as f64 * dt;
        let mut frame = TelemetryFrame::new(t);
        for (&joint, profile) in &preset.joints {
            let clean = profile.velocity(t);
            let v = match profile.segment_at(t) {
                Some(_) if preset.jitter > 0.0 => {
                    (clean + rng.random_range(-preset.jitter..=preset.jitter)).max(0.0)
                }
                _ => clean,
            };
            let angle = angles[&joint];
            frame = frame.with(joint, v).with_angle(joint, angle);
            let dir = profile.segment_at(t).map_or(1.0, |s| s.direction.signum());
            angles.insert(
                joint,
                angle + dir * clean * dt * 180.0 / std::f64::consts::PI,
            );
        }
        frames.push(frame);
    }
    frames
}

pub fn generate_default(preset: &TaskPreset) -> Vec<TelemetryFrame> {
    generate(preset, DEFAULT_SAMPLE_RATE_HZ)
}

/// Shape of random pulse trains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseStats {
    /// Pulses per second per joint.
    pub rate: f64,
    /// rad/s, uniform in `[lo, hi]`.
    pub amplitude: (f64, f64),
    /// Seconds from first to last above-zero sample, uniform in `[lo, hi]`.
    pub width: (f64, f64),
    /// Quiet time between pulses.
    pub min_gap: f64,
    pub sample_rate: f64,
}

impl Default for PulseStats {
    fn default() -> Self {
        Self {
            rate: 1.0,
            amplitude: (0.02, 0.3),
            width: (0.0, 0.12),
            min_gap: 0.02,
            sample_rate: DEFAULT_SAMPLE_RATE_HZ,
        }
    }
}

impl PulseStats {
    pub fn validate(&self) -> Result<(), SimError> {
        let range_ok =
            |(lo, hi): (f64, f64)| lo.is_finite() && hi.is_finite() && 0.0 <= lo && lo <= hi;
        if !(self.rate.is_finite() && self.rate > 0.0) {
            return Err(SimError::Stats(format!(
                "rate must be > 0, got {}",
                self.rate
            )));
        }
        if !range_ok(self.amplitude) || !range_ok(self.width) {
            return Err(SimError::Stats(
                "amplitude and width need 0 <= lo <= hi".into(),
            ));
        }
        if !(self.min_gap.is_finite() && self.min_gap >= 0.0 && self.sample_rate > 0.0) {
            return Err(SimError::Stats(
                "min_gap >= 0 and sample_rate > 0 required".into(),
            ));
        }
        Ok(())
    }
}

fn draw(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

/// Seeded square pulse trains on the sample grid.
///
/// A pulse of width `w` covers `floor(w * rate) + 1` samples, so its
/// above-zero span is exactly `floor(w * rate) / rate <= w`. At least one
/// zero sample (and `min_gap`) separates pulses. Every frame carries every
/// listed joint.
pub fn random_pulses(
    joints: &[JointId],
    duration: f64,
    stats: &PulseStats,
    seed: u64,
) -> Result<Vec<TelemetryFrame>, SimError> {
    stats.validate()?;
    let rate = stats.sample_rate;
    let n = (duration * rate).round().max(0.0) as usize;
    let mut tracks: Vec<Vec<f64>> = Vec::new();
    let gaps = Exp::new(stats.rate).map_err(|e| SimError::Stats(e.to_string()))?;
    let min_gap = ((stats.min_gap * rate).ceil() as usize).max(1);
    for joint in joints {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(joint.index() as u64 + 1);
        let mut track = vec![0.0; n];
        let mut k = 0usize;
        loop {
            k += (gaps.sample(&mut rng) * rate).round() as usize;
            if k >= n {
                break;
            }
            let amp = draw(&mut rng, stats.amplitude);
            let width = draw(&mut rng, stats.width);
            let m = (width * rate + 1e-9).floor() as usize + 1;
            let end = (k + m).min(n);
            track[k..end].fill(amp);
            k = end + min_gap;
        }
        tracks.push(track);
    }
    Ok((0..n)
        .map(|i| {
            let mut f = TelemetryFrame::new(i as f64 / rate);
            for (joint, track) in joints.iter().zip(&tracks) {
                f = f.with(*joint, track[i]);
            }
            f
        })
        .collect())
}
