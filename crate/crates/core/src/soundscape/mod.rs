//! Joint-to-sound assignment: sample banks, pitch tables, the position-to-note
//! mode, and movement-decoupled random triggering.

mod bank;
mod pitch;
mod random;
pub mod synth;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::envelope::{default_fade_rate, EnvelopeError, FadeClass};
use crate::telemetry::JointId;

pub use bank::{
    load_bank, read_wav_mono, resample_linear, synth_buffer, SampleBank, SampleBuffer, SampleSpec,
};
pub use pitch::{
    angle_to_note, legacy_note_events, note_to_frequency, LegacyTracker, NativePitchTable, Note,
    NoteEvent, PitchClass, ScaleMap, MAJOR,
};
pub use random::{
    empirical_rates, random_schedule, schedule_to_jsonl, RandomConfig, DEFAULT_HOLD, DEFAULT_RATE,
};
pub use synth::Instrument;

/// Recommended range of simultaneous joint/sound pairings.
pub const RECOMMENDED_PAIRINGS: std::ops::RangeInclusive<usize> = 5..=7;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SoundscapeError {
    #[error("invalid note name `{0}`")]
    NoteName(String),
    #[error("octave {0} outside [0, 8]")]
    Octave(i32),
    #[error("invalid scale map: {0}")]
    Scale(String),
    #[error("synth: {0}")]
    Synth(String),
    #[error("soundscape has no joint assignments")]
    EmptyConfig,
    #[error("sample for {joint} not found: {path}")]
    MissingFile { joint: JointId, path: String },
    #[error("unreadable audio {path}: {reason}")]
    Format { path: String, reason: String },
    #[error("random schedule: {0}")]
    Random(String),
    #[error("unknown mode `{0}`")]
    Mode(String),
    #[error("fade for {who}: {source}")]
    Fade { who: String, source: EnvelopeError },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Orchestral,
    Robotic,
    LegacyNote,
    Random,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Orchestral => "orchestral",
            Mode::Robotic => "robotic",
            Mode::LegacyNote => "legacy_note",
            Mode::Random => "random",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = SoundscapeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.replace('-', "_").as_str() {
            "orchestral" => Ok(Mode::Orchestral),
            "robotic" => Ok(Mode::Robotic),
            "legacy_note" | "legacy" => Ok(Mode::LegacyNote),
            "random" => Ok(Mode::Random),
            _ => Err(SoundscapeError::Mode(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointSound {
    pub sample: SampleSpec,
    pub pitch: Note,
    /// Percentage points per tick.
    pub fade_rate: f64,
}

impl JointSound {
    pub fn synth(inst: Instrument, pitch: &str, fade_rate: f64) -> Self {
        Self {
            sample: SampleSpec::Synth(inst),
            pitch: pitch.parse().expect("static note name"),
            fade_rate,
        }
    }

    pub fn fade(&self, tick: f64) -> Result<FadeClass, EnvelopeError> {
        FadeClass::new(self.fade_rate, tick)
    }
}

/// Default orchestral pairing in the key of D. Pitch rises as joint inertia
/// falls (torso lowest, gripper highest).
pub fn orchestral_defaults() -> BTreeMap<JointId, JointSound> {
    use Instrument::*;
    let table = [
        (JointId::Torso, Bass, "D2"),
        (JointId::Base, Strings, "A2"),
        (JointId::Shoulder, Strings, "D3"),
        (JointId::Elbow, Piano, "F#3"),
        (JointId::Head, Brass, "A3"),
        (JointId::Wrist, Woodwind, "D4"),
        (JointId::Hand, Bells, "A4"),
        (JointId::Gripper, Triangle, "D5"),
    ];
    table
        .into_iter()
        .map(|(j, inst, pitch)| (j, JointSound::synth(inst, pitch, default_fade_rate(j))))
        .collect()
}

/// Machine-like tones at the pitches of the robot's own hardware.
pub fn robotic_defaults() -> BTreeMap<JointId, JointSound> {
    let table = NativePitchTable::default();
    JointId::ALL
        .into_iter()
        .map(|j| {
            let sound = JointSound {
                sample: SampleSpec::Synth(Instrument::Motor),
                pitch: table.note_for(j),
                fade_rate: default_fade_rate(j),
            };
            (j, sound)
        })
        .collect()
}

/// Piano on torso and shoulder, both walking the same C major map.
pub fn legacy_defaults() -> BTreeMap<JointId, JointSound> {
    [JointId::Torso, JointId::Shoulder]
        .into_iter()
        .map(|j| {
            (
                j,
                JointSound::synth(Instrument::Piano, "C4", default_fade_rate(j)),
            )
        })
        .collect()
}

/// Joints from most to least inertia.
pub const DEFAULT_INERTIA_RANK: [JointId; JointId::COUNT] = [
    JointId::Torso,
    JointId::Base,
    JointId::Shoulder,
    JointId::Elbow,
    JointId::Head,
    JointId::Wrist,
    JointId::Hand,
    JointId::Gripper,
];

#[derive(Debug, Clone, PartialEq)]
pub struct SoundscapeConfig {
    pub mode: Mode,
    pub joints: BTreeMap<JointId, JointSound>,
    /// Named non-joint signals; they only occupy MIDI channels.
    pub signals: BTreeMap<String, JointSound>,
    pub random: RandomConfig,
    pub scale: ScaleMap,
    pub inertia_rank: Vec<JointId>,
    /// Base for relative sample paths.
    pub base_dir: Option<PathBuf>,
}

impl SoundscapeConfig {
    pub fn for_mode(mode: Mode) -> Self {
        let joints = match mode {
            Mode::Orchestral | Mode::Random => orchestral_defaults(),
            Mode::Robotic => robotic_defaults(),
            Mode::LegacyNote => legacy_defaults(),
        };
        Self {
            mode,
            joints,
            signals: BTreeMap::new(),
            random: RandomConfig::default(),
            scale: ScaleMap::default(),
            inertia_rank: DEFAULT_INERTIA_RANK.to_vec(),
            base_dir: None,
        }
    }

    pub fn resolve_path(&self, path: &Path) -> PathBuf {
        match &self.base_dir {
            Some(dir) if path.is_relative() => dir.join(path),
            _ => path.to_path_buf(),
        }
    }

    /// Every assignment, joints first, as (name, sound).
    pub fn assignments(&self) -> impl Iterator<Item = (String, &JointSound)> {
        self.joints
            .iter()
            .map(|(j, s)| (j.name().to_string(), s))
            .chain(self.signals.iter().map(|(n, s)| (n.clone(), s)))
    }

    pub fn pairing_count(&self) -> usize {
        self.joints.len() + self.signals.len()
    }

    /// Scale maps for the position-to-note mode, one per assigned joint.
    pub fn scale_maps(&self) -> BTreeMap<JointId, ScaleMap> {
        self.joints
            .keys()
            .map(|j| (*j, self.scale.clone()))
            .collect()
    }

    /// Pairs `(heavier, lighter)` where the heavier joint is pitched above the
    /// lighter one.
    pub fn inertia_order_violations(&self) -> Vec<(JointId, JointId)> {
        let ranked: Vec<(JointId, Note)> = self
            .inertia_rank
            .iter()
            .filter_map(|j| self.joints.get(j).map(|s| (*j, s.pitch)))
            .collect();
        let mut out = Vec::new();
        for (i, (heavy, hp)) in ranked.iter().enumerate() {
            for (light, lp) in &ranked[i + 1..] {
                if hp > lp {
                    out.push((*heavy, *light));
                }
            }
        }
        out
    }

    /// Hard errors fail; soft issues come back as warnings.
    pub fn validate(&self, tick: f64) -> Result<Vec<String>, SoundscapeError> {
        if self.joints.is_empty() {
            return Err(SoundscapeError::EmptyConfig);
        }
        for (who, sound) in self.assignments() {
            sound
                .fade(tick)
                .map_err(|source| SoundscapeError::Fade { who, source })?;
        }
        self.scale.validate()?;
        if self.mode == Mode::Random {
            self.random.validate()?;
        }
        let mut warnings = Vec::new();
        let n = self.pairing_count();
        if !RECOMMENDED_PAIRINGS.contains(&n) {
            warnings.push(format!(
                "{n} joint/sound pairings configured; 5 to 7 pairings are recommended"
            ));
        }
        if matches!(self.mode, Mode::Orchestral | Mode::Random) {
            for (heavy, light) in self.inertia_order_violations() {
                warnings.push(format!(
                    "{heavy} is pitched above lighter joint {light}; heavier joints usually sound lower"
                ));
            }
        }
        for name in self.signals.keys() {
            warnings.push(format!(
                "signal `{name}` has no telemetry channel; it is only used by the MIDI bridge"
            ));
        }
        Ok(warnings)
    }
}

impl Default for SoundscapeConfig {
    fn default() -> Self {
        Self::for_mode(Mode::Orchestral)
    }
}
