//! Joint vocabulary and JSON-lines telemetry ingestion.
//!
//! A telemetry stream is a sequence of UTF-8 lines. The first line may be a
//! header, every other line is a frame:
//!
//! ```text
//! {"header":{"sample_rate_hz":250,"joints":["torso","wrist"]}}
//! {"t":0.004,"joints":{"torso":0.12,"wrist":-0.03}}
//! ```
//!
//! Velocities are stored as magnitudes. A joint missing from a frame means
//! "no new sample", not zero.

mod source;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

pub use source::{open_source, FrameReader, TelemetrySource};

/// Default nominal telemetry rate in Hz.
pub const DEFAULT_SAMPLE_RATE_HZ: f64 = 250.0;

/// Default envelope tick in seconds.
pub const DEFAULT_TICK_S: f64 = 0.04;

/// One of the eight sonified channels, in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JointId {
    Base,
    Torso,
    Shoulder,
    Elbow,
    Hand,
    Wrist,
    Gripper,
    Head,
}

impl JointId {
    pub const COUNT: usize = 8;

    pub const ALL: [JointId; JointId::COUNT] = [
        JointId::Base,
        JointId::Torso,
        JointId::Shoulder,
        JointId::Elbow,
        JointId::Hand,
        JointId::Wrist,
        JointId::Gripper,
        JointId::Head,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            JointId::Base => "base",
            JointId::Torso => "torso",
            JointId::Shoulder => "shoulder",
            JointId::Elbow => "elbow",
            JointId::Hand => "hand",
            JointId::Wrist => "wrist",
            JointId::Gripper => "gripper",
            JointId::Head => "head",
        }
    }
}

impl fmt::Display for JointId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for JointId {
    type Err = TelemetryError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        JointId::ALL
            .iter()
            .copied()
            .find(|j| j.name() == s)
            .ok_or_else(|| TelemetryError::UnknownJoint(s.to_string()))
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TelemetryError {
    #[error("malformed record: field `{field}`: {reason}")]
    Parse { field: String, reason: String },
    #[error("unknown joint `{0}`")]
    UnknownJoint(String),
    #[error("timestamp {0} is out of range (must be finite and >= 0)")]
    Range(f64),
    #[error("out-of-order timestamp: {current} follows {previous}")]
    OutOfOrder { previous: f64, current: f64 },
    #[error("no telemetry received for {0:.3} s")]
    IdleTimeout(f64),
    #[error("telemetry i/o: {0}")]
    Io(String),
    #[error("header must be the first record")]
    LateHeader,
    #[error("invalid header: {0}")]
    Header(String),
}

impl TelemetryError {
    fn parse(field: &str, reason: impl Into<String>) -> Self {
        TelemetryError::Parse {
            field: field.to_string(),
            reason: reason.into(),
        }
    }
}

/// Stream metadata carried by the optional first record.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamHeader {
    pub sample_rate_hz: f64,
    pub joints_present: Vec<JointId>,
}

impl Default for StreamHeader {
    fn default() -> Self {
        Self {
            sample_rate_hz: DEFAULT_SAMPLE_RATE_HZ,
            joints_present: JointId::ALL.to_vec(),
        }
    }
}

impl StreamHeader {
    pub fn new(sample_rate_hz: f64, joints_present: Vec<JointId>) -> Result<Self, TelemetryError> {
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(TelemetryError::Header(format!(
                "sample_rate_hz must be > 0, got {sample_rate_hz}"
            )));
        }
        if joints_present.is_empty() {
            return Err(TelemetryError::Header("joints list is empty".into()));
        }
        Ok(Self {
            sample_rate_hz,
            joints_present,
        })
    }

    pub fn to_line(&self) -> String {
        let joints: Vec<&str> = self.joints_present.iter().map(|j| j.name()).collect();
        serde_json::json!({"header": {"sample_rate_hz": self.sample_rate_hz, "joints": joints}})
            .to_string()
    }
}

/// A timestamped set of joint velocity magnitudes (rad/s), optionally with
/// joint angles (degrees) for the position-to-note mode.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TelemetryFrame {
    pub t: f64,
    pub velocities: BTreeMap<JointId, f64>,
    pub angles: BTreeMap<JointId, f64>,
}

impl TelemetryFrame {
    pub fn new(t: f64) -> Self {
        Self {
            t,
            ..Default::default()
        }
    }

    /// Builder-style velocity insert; stores the magnitude.
    pub fn with(mut self, joint: JointId, velocity: f64) -> Self {
        self.velocities.insert(joint, velocity.abs());
        self
    }

    pub fn with_angle(mut self, joint: JointId, degrees: f64) -> Self {
        self.angles.insert(joint, degrees);
        self
    }

    pub fn velocity(&self, joint: JointId) -> Option<f64> {
        self.velocities.get(&joint).copied()
    }

    /// Canonical JSON-lines form: keys in canonical joint order, no whitespace.
    pub fn to_line(&self) -> String {
        let mut line = format!(
            "{{\"t\":{},\"joints\":{}",
            Value::from(self.t),
            joint_object(&self.velocities)
        );
        if !self.angles.is_empty() {
            line.push_str(",\"angles\":");
            line.push_str(&joint_object(&self.angles));
        }
        line.push('}');
        line
    }
}

// serde_json's Map sorts keys alphabetically, so the canonical joint order is
// written by hand.
fn joint_object(values: &BTreeMap<JointId, f64>) -> String {
    let body: Vec<String> = values
        .iter()
        .map(|(j, v)| format!("\"{}\":{}", j.name(), Value::from(*v)))
        .collect();
    format!("{{{}}}", body.join(","))
}

/// A parsed telemetry line.
#[derive(Debug, Clone, PartialEq)]
pub enum Record {
    Header(StreamHeader),
    Frame(TelemetryFrame),
}

/// Parse one frame record. Headers are rejected here; use [`parse_record`]
/// when a header may appear.
pub fn parse_frame(line: &str) -> Result<TelemetryFrame, TelemetryError> {
    match parse_record(line)? {
        Record::Frame(f) => Ok(f),
        Record::Header(_) => Err(TelemetryError::LateHeader),
    }
}

pub fn parse_record(line: &str) -> Result<Record, TelemetryError> {
    let value: Value = serde_json::from_str(line.trim())
        .map_err(|e| TelemetryError::parse("<record>", e.to_string()))?;
    let obj = value
        .as_object()
        .ok_or_else(|| TelemetryError::parse("<record>", "expected a JSON object"))?;

    if let Some(header) = obj.get("header") {
        return parse_header(header).map(Record::Header);
    }

    for key in obj.keys() {
        if !matches!(key.as_str(), "t" | "joints" | "angles") {
            return Err(TelemetryError::parse(key, "unexpected field"));
        }
    }

    let t = obj
        .get("t")
        .ok_or_else(|| TelemetryError::parse("t", "missing"))?
        .as_f64()
        .ok_or_else(|| TelemetryError::parse("t", "expected a number"))?;
    if !(t.is_finite() && t >= 0.0) {
        return Err(TelemetryError::Range(t));
    }

    let joints = obj
        .get("joints")
        .ok_or_else(|| TelemetryError::parse("joints", "missing"))?;
    let velocities = parse_joint_map("joints", joints, true)?;
    let angles = match obj.get("angles") {
        Some(v) => parse_joint_map("angles", v, false)?,
        None => BTreeMap::new(),
    };

    Ok(Record::Frame(TelemetryFrame {
        t,
        velocities,
        angles,
    }))
}

fn parse_joint_map(
    field: &str,
    value: &Value,
    magnitude: bool,
) -> Result<BTreeMap<JointId, f64>, TelemetryError> {
    let obj = value
        .as_object()
        .ok_or_else(|| TelemetryError::parse(field, "expected an object"))?;
    let mut out = BTreeMap::new();
    for (key, v) in obj {
        let joint: JointId = key.parse()?;
        let x = v.as_f64().filter(|x| x.is_finite()).ok_or_else(|| {
            TelemetryError::parse(&format!("{field}.{key}"), "expected a finite number")
        })?;
        out.insert(joint, if magnitude { x.abs() } else { x });
    }
    Ok(out)
}

fn parse_header(value: &Value) -> Result<StreamHeader, TelemetryError> {
    let obj = value
        .as_object()
        .ok_or_else(|| TelemetryError::parse("header", "expected an object"))?;
    let rate = match obj.get("sample_rate_hz") {
        Some(v) => v
            .as_f64()
            .ok_or_else(|| TelemetryError::parse("header.sample_rate_hz", "expected a number"))?,
        None => DEFAULT_SAMPLE_RATE_HZ,
    };
    let joints = match obj.get("joints") {
        Some(Value::Array(items)) => items
            .iter()
            .map(|v| {
                v.as_str()
                    .ok_or_else(|| TelemetryError::parse("header.joints", "expected strings"))
                    .and_then(JointId::from_str)
            })
            .collect::<Result<Vec<_>, _>>()?,
        Some(_) => return Err(TelemetryError::parse("header.joints", "expected an array")),
        None => JointId::ALL.to_vec(),
    };
    StreamHeader::new(rate, joints)
}

/// Enforces strictly increasing timestamps across a frame sequence.
#[derive(Debug, Default, Clone)]
pub struct OrderCheck {
    last: Option<f64>,
}

impl OrderCheck {
    pub fn check(&mut self, t: f64) -> Result<(), TelemetryError> {
        if let Some(prev) = self.last {
            if t <= prev {
                return Err(TelemetryError::OutOfOrder {
                    previous: prev,
                    current: t,
                });
            }
        }
        self.last = Some(t);
        Ok(())
    }
}

/// Per-joint velocities held at a tick boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct TickSample {
    pub t: f64,
    pub velocities: [f64; JointId::COUNT],
}

impl TickSample {
    pub fn velocity(&self, joint: JointId) -> f64 {
        self.velocities[joint.index()]
    }
}

/// Zero-order hold of frame velocities onto the grid `k * tick`, from 0 up to
/// the last frame time. Joints with no sample yet read as 0.
pub fn resample_to_ticks(frames: &[TelemetryFrame], tick: f64) -> Vec<TickSample> {
    assert!(tick > 0.0, "tick must be positive");
    let Some(last) = frames.last() else {
        return Vec::new();
    };
    let mut held = [0.0; JointId::COUNT];
    let mut out = Vec::new();
    let mut next = 0usize;
    let mut k = 0u64;
    loop {
        let boundary = k as f64 * tick;
        if boundary > last.t + 1e-9 {
            break;
        }
        while next < frames.len() && frames[next].t <= boundary + 1e-9 {
            for (j, v) in &frames[next].velocities {
                held[j.index()] = *v;
            }
            next += 1;
        }
        out.push(TickSample {
            t: boundary,
            velocities: held,
        });
        k += 1;
    }
    out
}

/// Serialize frames (with an optional header) to JSON-lines text.
pub fn to_jsonl(header: Option<&StreamHeader>, frames: &[TelemetryFrame]) -> String {
    let mut s = String::new();
    if let Some(h) = header {
        s.push_str(&h.to_line());
        s.push('\n');
    }
    for f in frames {
        s.push_str(&f.to_line());
        s.push('\n');
    }
    s
}
