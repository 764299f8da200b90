//! Application config: one JSON file covering soundscape, gate, fade, volume
//! and render settings, plus command-line overrides.
//!
//! ```json
//! {
//!   "mode": "orchestral",
//!   "joints": {"torso": {"sample": "synth:bass", "pitch": "D2", "fade": "4.0"}},
//!   "random": {"seed": 42, "rates": {"torso": 0.5}},
//!   "gate": {"threshold_rad_s": 0.05, "debounce_s": 0.04, "per_joint": {"head": {"threshold_rad_s": 0.08}}},
//!   "fade": {"tick_s": 0.04, "per_joint": {"hand": {"rate_percent": 1.5}}},
//!   "volume": {"master_percent": 100, "anchors": {"low_percent": 10, "low_db": 65, "high_percent": 100, "high_db": 80}},
//!   "render": {"sample_rate": 44100, "headroom": 0.353}
//! }
//! ```
//!
//! A `joints` table replaces the mode's default assignments. Entries may
//! leave out `sample` or `pitch` when the mode's default table has that joint.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::envelope::{default_fade_rate, VolumeAnchors};
use crate::gate::{GateBank, GateConfig};
use crate::midibridge::SignalRegistry;
use crate::render::RenderConfig;
use crate::soundscape::{JointSound, Mode, RandomConfig, SampleSpec, ScaleMap, SoundscapeConfig};
use crate::telemetry::JointId;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {reason}")]
    Io { path: String, reason: String },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

fn invalid(e: impl std::fmt::Display) -> ConfigError {
    ConfigError::Invalid(e.to_string())
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum Number {
    Num(f64),
    Text(String),
}

impl Number {
    fn value(&self, what: &str) -> Result<f64, ConfigError> {
        match self {
            Number::Num(x) => Ok(*x),
            Number::Text(s) => s
                .trim()
                .trim_end_matches('%')
                .parse()
                .map_err(|_| ConfigError::Invalid(format!("{what}: `{s}` is not a number"))),
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SoundEntry {
    sample: Option<String>,
    pitch: Option<String>,
    fade: Option<Number>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RandomFile {
    seed: Option<u64>,
    #[serde(default)]
    rates: BTreeMap<JointId, f64>,
    default_rate: Option<f64>,
    hold_range: Option<(f64, f64)>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct GateEntry {
    threshold_rad_s: Option<f64>,
    debounce_s: Option<f64>,
    release_debounce_s: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct GateFile {
    threshold_rad_s: Option<f64>,
    debounce_s: Option<f64>,
    release_debounce_s: Option<f64>,
    #[serde(default)]
    per_joint: BTreeMap<JointId, GateEntry>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct FadeEntry {
    rate_percent: Number,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FadeFile {
    tick_s: Option<f64>,
    #[serde(default)]
    per_joint: BTreeMap<JointId, FadeEntry>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct VolumeFile {
    master_percent: Option<f64>,
    anchors: Option<VolumeAnchors>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RenderFile {
    sample_rate: Option<u32>,
    headroom: Option<f32>,
    duration: Option<f64>,
    block_frames: Option<usize>,
    buffer_seconds: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    mode: Option<Mode>,
    joints: Option<BTreeMap<JointId, SoundEntry>>,
    #[serde(default)]
    signals: BTreeMap<String, SoundEntry>,
    random: Option<RandomFile>,
    scale: Option<ScaleMap>,
    inertia_rank: Option<Vec<JointId>>,
    gate: Option<GateFile>,
    fade: Option<FadeFile>,
    volume: Option<VolumeFile>,
    render: Option<RenderFile>,
}

/// Command-line values that beat the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub mode: Option<Mode>,
    pub seed: Option<u64>,
    pub threshold: Option<f64>,
    pub debounce: Option<f64>,
    pub tick: Option<f64>,
    pub master_percent: Option<f64>,
    pub sample_rate: Option<u32>,
    pub headroom: Option<f32>,
    pub duration: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AppConfig {
    pub soundscape: SoundscapeConfig,
    pub gate: GateConfig,
    pub gate_per_joint: BTreeMap<JointId, GateConfig>,
    pub render: RenderConfig,
    /// The file this came from, if any.
    pub source: Option<PathBuf>,
}

impl Default for AppConfig {
    fn default() -> Self {
        Self::for_mode(Mode::Orchestral)
    }
}

fn gate_from(base: GateConfig, e: &GateEntry) -> GateConfig {
    GateConfig {
        threshold: e.threshold_rad_s.unwrap_or(base.threshold),
        debounce: e.debounce_s.unwrap_or(base.debounce),
        release_debounce: e.release_debounce_s.unwrap_or(base.release_debounce),
    }
}

impl AppConfig {
    pub fn for_mode(mode: Mode) -> Self {
        Self {
            soundscape: SoundscapeConfig::for_mode(mode),
            gate: GateConfig::default(),
            gate_per_joint: BTreeMap::new(),
            render: RenderConfig::default(),
            source: None,
        }
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::load_with(path, &Overrides::default())
    }

    pub fn load_with(path: &Path, o: &Overrides) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        let mut cfg = Self::parse(&text, path.parent().map(Path::to_path_buf), o)?;
        cfg.source = Some(path.to_path_buf());
        Ok(cfg)
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        Self::parse(text, None, &Overrides::default())
    }

    /// Build from file text (may be empty for pure defaults) and overrides.
    pub fn parse(
        text: &str,
        base_dir: Option<PathBuf>,
        o: &Overrides,
    ) -> Result<Self, ConfigError> {
        let file: FileConfig = if text.trim().is_empty() {
            FileConfig::default()
        } else {
            serde_json::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?
        };
        let mode = o.mode.or(file.mode).unwrap_or_default();
        let defaults = SoundscapeConfig::for_mode(mode);
        let mut sc = SoundscapeConfig {
            base_dir,
            ..defaults.clone()
        };

        if let Some(joints) = &file.joints {
            sc.joints = BTreeMap::new();
            for (j, entry) in joints {
                let sound = sound_from(
                    j.name(),
                    entry,
                    defaults.joints.get(j),
                    default_fade_rate(*j),
                )?;
                sc.joints.insert(*j, sound);
            }
        }
        for (name, entry) in &file.signals {
            if name.parse::<JointId>().is_ok() {
                return Err(ConfigError::Invalid(format!(
                    "signal `{name}` shadows a joint; list it under joints"
                )));
            }
            let sound = sound_from(name, entry, None, 4.0)?;
            sc.signals.insert(name.clone(), sound);
        }
        if let Some(r) = &file.random {
            sc.random = RandomConfig {
                seed: r.seed.unwrap_or(0),
                rates: r.rates.clone(),
                default_rate: r.default_rate.unwrap_or(sc.random.default_rate),
                hold_range: r.hold_range.unwrap_or(sc.random.hold_range),
            };
        }
        if let Some(seed) = o.seed {
            sc.random.seed = seed;
        }
        if let Some(scale) = file.scale {
            sc.scale = scale;
        }
        if let Some(rank) = file.inertia_rank {
            sc.inertia_rank = rank;
        }

        let mut render = RenderConfig::default();
        let fade = file.fade.unwrap_or_default();
        if let Some(tick) = o.tick.or(fade.tick_s) {
            render.tick = tick;
        }
        for (j, e) in &fade.per_joint {
            let rate = e.rate_percent.value(&format!("fade.per_joint.{j}"))?;
            let sound = sc.joints.get_mut(j).ok_or_else(|| {
                ConfigError::Invalid(format!("fade.per_joint names {j}, which has no sound"))
            })?;
            sound.fade_rate = rate;
        }
        let volume = file.volume.unwrap_or_default();
        if let Some(m) = o.master_percent.or(volume.master_percent) {
            render.master_percent = m;
        }
        if let Some(a) = volume.anchors {
            render.anchors = a;
        }
        let rf = file.render.unwrap_or_default();
        render.sample_rate = o
            .sample_rate
            .or(rf.sample_rate)
            .unwrap_or(render.sample_rate);
        render.headroom = o.headroom.or(rf.headroom).unwrap_or(render.headroom);
        render.duration = o.duration.or(rf.duration);
        render.block_frames = rf.block_frames.unwrap_or(render.block_frames);
        render.buffer_seconds = rf.buffer_seconds.unwrap_or(render.buffer_seconds);

        let gf = file.gate.unwrap_or_default();
        let all = GateEntry {
            threshold_rad_s: gf.threshold_rad_s,
            debounce_s: gf.debounce_s,
            release_debounce_s: gf.release_debounce_s,
        };
        let mut gate = gate_from(GateConfig::default(), &all);
        gate.threshold = o.threshold.unwrap_or(gate.threshold);
        gate.debounce = o.debounce.unwrap_or(gate.debounce);
        let mut gate_per_joint = BTreeMap::new();
        for (j, e) in &gf.per_joint {
            if !sc.joints.contains_key(j) {
                return Err(ConfigError::Invalid(format!(
                    "gate.per_joint names {j}, which has no sound"
                )));
            }
            gate_per_joint.insert(*j, gate_from(gate, e));
        }
        if let Some(j) = sc.random.rates.keys().find(|j| !sc.joints.contains_key(j)) {
            return Err(ConfigError::Invalid(format!(
                "random.rates names {j}, which has no sound"
            )));
        }

        Ok(Self {
            soundscape: sc,
            gate,
            gate_per_joint,
            render,
            source: None,
        })
    }

    pub fn mode(&self) -> Mode {
        self.soundscape.mode
    }

    pub fn gate_bank(&self) -> GateBank {
        let mut bank = GateBank::uniform(self.gate);
        for (j, g) in &self.gate_per_joint {
            bank.set_config(*j, *g);
        }
        bank.only(self.soundscape.joints.keys().copied())
    }

    /// Check everything; soft issues come back as warnings.
    pub fn validate(&self) -> Result<Vec<String>, ConfigError> {
        self.gate.validate().map_err(invalid)?;
        for (j, g) in &self.gate_per_joint {
            g.validate()
                .map_err(|e| ConfigError::Invalid(format!("gate for {j}: {e}")))?;
        }
        self.render.validate().map_err(invalid)?;
        let warnings = self
            .soundscape
            .validate(self.render.tick)
            .map_err(invalid)?;
        SignalRegistry::from_soundscape(&self.soundscape).map_err(invalid)?;
        Ok(warnings)
    }

    /// Every value in force, as JSON.
    pub fn effective(&self) -> Value {
        let sound = |s: &JointSound| {
            json!({
                "sample": s.sample.to_string(),
                "pitch": s.pitch.to_string(),
                "fade": s.fade_rate,
            })
        };
        let gate = |g: &GateConfig| {
            json!({
                "threshold_rad_s": g.threshold,
                "debounce_s": g.debounce,
                "release_debounce_s": g.release_debounce,
            })
        };
        let sc = &self.soundscape;
        let r = &self.render;
        json!({
            "mode": sc.mode.name(),
            "joints": sc.joints.iter().map(|(j, s)| (j.name().to_string(), sound(s))).collect::<serde_json::Map<_, _>>(),
            "signals": sc.signals.iter().map(|(n, s)| (n.clone(), sound(s))).collect::<serde_json::Map<_, _>>(),
            "random": sc.random,
            "scale": sc.scale,
            "inertia_rank": sc.inertia_rank,
            "gate": {
                "threshold_rad_s": self.gate.threshold,
                "debounce_s": self.gate.debounce,
                "release_debounce_s": self.gate.release_debounce,
                "per_joint": self.gate_per_joint.iter().map(|(j, g)| (j.name().to_string(), gate(g))).collect::<serde_json::Map<_, _>>(),
            },
            "fade": {"tick_s": r.tick},
            "volume": {"master_percent": r.master_percent, "anchors": r.anchors},
            "render": {
                "sample_rate": r.sample_rate,
                "headroom": r.headroom.to_string().parse::<f64>().unwrap_or(f64::NAN),
                "duration": r.duration,
                "block_frames": r.block_frames,
                "buffer_seconds": r.buffer_seconds,
            },
        })
    }

    /// SHA-256 of the effective config, hex.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(&self.effective()).expect("json values serialize");
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}

fn sound_from(
    who: &str,
    e: &SoundEntry,
    default: Option<&JointSound>,
    default_fade: f64,
) -> Result<JointSound, ConfigError> {
    let sample: SampleSpec = match (&e.sample, default) {
        (Some(s), _) => s
            .parse()
            .map_err(|err| ConfigError::Invalid(format!("{who}: {err}")))?,
        (None, Some(d)) => d.sample.clone(),
        (None, None) => return Err(ConfigError::Invalid(format!("{who}: no sample given"))),
    };
    let pitch = match (&e.pitch, default) {
        (Some(p), _) => p
            .parse()
            .map_err(|err| ConfigError::Invalid(format!("{who}: {err}")))?,
        (None, Some(d)) => d.pitch,
        (None, None) => return Err(ConfigError::Invalid(format!("{who}: no pitch given"))),
    };
    let fade_rate = match &e.fade {
        Some(n) => n.value(&format!("{who}.fade"))?,
        None => default.map_or(default_fade, |d| d.fade_rate),
    };
    Ok(JointSound {
        sample,
        pitch,
        fade_rate,
    })
}
