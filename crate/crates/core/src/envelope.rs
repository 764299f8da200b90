//! Per-joint volume with rectangular attack and linear, tick-quantized fade.
//!
//! Volume is kept as an integer count of tenths of a percent, so a 4 % step
//! from 100 % lands exactly on 96 % and renders are bit-reproducible.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::telemetry::{JointId, DEFAULT_TICK_S};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvelopeError {
    #[error("percent {0} outside [0, 100]")]
    Range(f64),
    #[error("fade rate {0} must be in (0, 100] and a multiple of 0.1")]
    Rate(f64),
    #[error("tick must be > 0, got {0}")]
    Tick(f64),
    #[error("invalid volume anchors: {0}")]
    Anchors(String),
}

/// Volume level in tenths of a percent, `0..=1000`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Volume(u16);

impl Volume {
    pub const SILENT: Volume = Volume(0);
    pub const FULL: Volume = Volume(1000);

    pub fn from_tenths(tenths: u16) -> Self {
        Volume(tenths.min(1000))
    }

    pub fn tenths(self) -> u16 {
        self.0
    }

    pub fn percent(self) -> f64 {
        f64::from(self.0) / 10.0
    }

    pub fn is_silent(self) -> bool {
        self.0 == 0
    }
}

impl fmt::Display for Volume {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}%", self.0 / 10, self.0 % 10)
    }
}

/// Linear fade: `rate` percentage points removed every `tick` seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FadeClass {
    rate_tenths: u16,
    tick: f64,
}

impl FadeClass {
    pub const FAST: f64 = 4.0;
    pub const MEDIUM: f64 = 3.0;
    pub const SLOW: f64 = 1.5;

    pub fn new(rate_percent: f64, tick: f64) -> Result<Self, EnvelopeError> {
        if !(tick.is_finite() && tick > 0.0) {
            return Err(EnvelopeError::Tick(tick));
        }
        let scaled = rate_percent * 10.0;
        let tenths = scaled.round();
        if !(rate_percent.is_finite() && rate_percent > 0.0 && rate_percent <= 100.0)
            || (scaled - tenths).abs() > 1e-6
            || tenths < 1.0
        {
            return Err(EnvelopeError::Rate(rate_percent));
        }
        Ok(Self {
            rate_tenths: tenths as u16,
            tick,
        })
    }

    pub fn with_rate(rate_percent: f64) -> Result<Self, EnvelopeError> {
        Self::new(rate_percent, DEFAULT_TICK_S)
    }

    pub fn rate_percent(&self) -> f64 {
        f64::from(self.rate_tenths) / 10.0
    }

    pub fn rate_tenths(&self) -> u16 {
        self.rate_tenths
    }

    pub fn tick(&self) -> f64 {
        self.tick
    }

    /// Ticks from full volume to silence.
    pub fn ticks_to_silence(&self) -> u32 {
        u32::from(1000u16.div_ceil(self.rate_tenths))
    }
}

/// Seconds from full volume to silence after release.
pub fn fade_duration(fade: &FadeClass) -> f64 {
    f64::from(fade.ticks_to_silence()) * fade.tick
}

/// Default fade rate per joint: hand and head slow, wrist medium, the rest fast.
pub fn default_fade_rate(joint: JointId) -> f64 {
    match joint {
        JointId::Hand | JointId::Head => FadeClass::SLOW,
        JointId::Wrist => FadeClass::MEDIUM,
        _ => FadeClass::FAST,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Envelope {
    pub volume: Volume,
    pub fade: FadeClass,
    pub gate_active: bool,
}

impl Envelope {
    pub fn new(fade: FadeClass) -> Self {
        Self {
            volume: Volume::SILENT,
            fade,
            gate_active: false,
        }
    }

    pub fn trigger(&mut self) {
        self.gate_active = true;
        self.volume = Volume::FULL;
    }

    pub fn release(&mut self) {
        self.gate_active = false;
    }

    /// One tick: an active gate pins full volume, otherwise fade by one step.
    pub fn tick(self) -> Self {
        let volume = if self.gate_active {
            Volume::FULL
        } else {
            Volume(self.volume.0.saturating_sub(self.fade.rate_tenths))
        };
        Self { volume, ..self }
    }
}

pub fn envelope_tick(env: Envelope) -> Envelope {
    env.tick()
}

/// Speaker calibration points: `low_percent` plays at `low_db`, `high_percent`
/// at `high_db`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VolumeAnchors {
    pub low_percent: f64,
    pub low_db: f64,
    pub high_percent: f64,
    pub high_db: f64,
}

impl Default for VolumeAnchors {
    fn default() -> Self {
        Self {
            low_percent: 10.0,
            low_db: 65.0,
            high_percent: 100.0,
            high_db: 80.0,
        }
    }
}

impl VolumeAnchors {
    pub fn validate(&self) -> Result<(), EnvelopeError> {
        let finite = [
            self.low_percent,
            self.low_db,
            self.high_percent,
            self.high_db,
        ]
        .iter()
        .all(|x| x.is_finite());
        if !finite {
            return Err(EnvelopeError::Anchors("non-finite value".into()));
        }
        if !(self.low_percent > 0.0
            && self.low_percent < self.high_percent
            && self.high_percent <= 100.0)
        {
            return Err(EnvelopeError::Anchors(format!(
                "need 0 < low_percent < high_percent <= 100, got {} / {}",
                self.low_percent, self.high_percent
            )));
        }
        if self.low_db >= self.high_db {
            return Err(EnvelopeError::Anchors(format!(
                "need low_db < high_db, got {} / {}",
                self.low_db, self.high_db
            )));
        }
        Ok(())
    }
}

/// Sound level for a speaker percent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SplLevel {
    Db(f64),
    /// Below the lowest calibrated percent; no SPL is defined there.
    BelowCalibration,
}

fn check_percent(p: f64) -> Result<(), EnvelopeError> {
    if (0.0..=100.0).contains(&p) {
        Ok(())
    } else {
        Err(EnvelopeError::Range(p))
    }
}

fn interpolate_db(p: f64, a: &VolumeAnchors) -> f64 {
    a.low_db + (p - a.low_percent) * (a.high_db - a.low_db) / (a.high_percent - a.low_percent)
}

pub fn percent_to_db(p: f64, anchors: &VolumeAnchors) -> Result<SplLevel, EnvelopeError> {
    check_percent(p)?;
    if p < anchors.low_percent {
        return Ok(SplLevel::BelowCalibration);
    }
    Ok(SplLevel::Db(interpolate_db(p, anchors)))
}

/// Linear amplitude for a speaker percent, 1.0 at `high_percent`. Below the
/// calibrated range the gain ramps linearly down to 0 at 0 %.
pub fn percent_to_gain(p: f64, anchors: &VolumeAnchors) -> Result<f64, EnvelopeError> {
    check_percent(p)?;
    let db_gain = |p: f64| 10f64.powf((interpolate_db(p, anchors) - anchors.high_db) / 20.0);
    if p >= anchors.low_percent {
        Ok(db_gain(p))
    } else {
        Ok(db_gain(anchors.low_percent) * p / anchors.low_percent)
    }
}

/// Joint volume scaled by the global master percent.
pub fn effective_percent(volume: Volume, master_percent: f64) -> f64 {
    volume.percent() * master_percent / 100.0
}

/// Precomputed gain for every volume step at a given master level.
#[derive(Debug, Clone)]
pub struct GainTable {
    gains: Vec<f32>,
}

impl GainTable {
    pub fn new(anchors: &VolumeAnchors, master_percent: f64) -> Result<Self, EnvelopeError> {
        check_percent(master_percent)?;
        anchors.validate()?;
        let gains = (0..=1000u16)
            .map(|t| {
                percent_to_gain(effective_percent(Volume(t), master_percent), anchors)
                    .map(|g| g as f32)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { gains })
    }

    pub fn gain(&self, volume: Volume) -> f32 {
        self.gains[usize::from(volume.0)]
    }
}
