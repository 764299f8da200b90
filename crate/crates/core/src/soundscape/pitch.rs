//! Note names, equal temperament, and the angle-to-scale-degree walk used by
//! the position-to-note mode.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::SoundscapeError;
use crate::telemetry::{JointId, TelemetryFrame};

const SHARP_NAMES: [&str; 12] = [
    "C", "C#", "D", "D#", "E", "F", "F#", "G", "G#", "A", "A#", "B",
];

/// A chromatic pitch class, 0 = C.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PitchClass(u8);

impl PitchClass {
    pub fn new(semitone: u8) -> Self {
        PitchClass(semitone % 12)
    }

    pub fn semitone(self) -> u8 {
        self.0
    }
}

impl fmt::Display for PitchClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(SHARP_NAMES[usize::from(self.0)])
    }
}

impl FromStr for PitchClass {
    type Err = SoundscapeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || SoundscapeError::NoteName(s.to_string());
        let mut chars = s.chars();
        let letter = chars.next().ok_or_else(bad)?.to_ascii_uppercase();
        let base: i32 = match letter {
            'C' => 0,
            'D' => 2,
            'E' => 4,
            'F' => 5,
            'G' => 7,
            'A' => 9,
            'B' => 11,
            _ => return Err(bad()),
        };
        let accidental: i32 = match chars.as_str() {
            "" => 0,
            "#" | "♯" => 1,
            "b" | "♭" => -1,
            _ => return Err(bad()),
        };
        Ok(PitchClass((base + accidental).rem_euclid(12) as u8))
    }
}

/// A note as a MIDI key number; C4 = 60, A4 = 69.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Note(u8);

impl Note {
    pub const MIN_OCTAVE: i32 = 0;
    pub const MAX_OCTAVE: i32 = 8;

    pub fn from_midi(midi: u8) -> Self {
        Note(midi.min(127))
    }

    pub fn new(class: PitchClass, octave: i32) -> Result<Self, SoundscapeError> {
        if !(Self::MIN_OCTAVE..=Self::MAX_OCTAVE).contains(&octave) {
            return Err(SoundscapeError::Octave(octave));
        }
        let midi = 12 * (octave + 1) + i32::from(class.0);
        Ok(Note(midi as u8))
    }

    pub fn midi(self) -> u8 {
        self.0
    }

    pub fn class(self) -> PitchClass {
        PitchClass(self.0 % 12)
    }

    pub fn octave(self) -> i32 {
        i32::from(self.0) / 12 - 1
    }

    /// Equal temperament, A4 = 440 Hz.
    pub fn frequency(self) -> f64 {
        440.0 * 2f64.powf((f64::from(self.0) - 69.0) / 12.0)
    }
}

impl fmt::Display for Note {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.class(), self.octave())
    }
}

impl FromStr for Note {
    type Err = SoundscapeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let split = s
            .find(|c: char| c.is_ascii_digit() || c == '-')
            .ok_or_else(|| SoundscapeError::NoteName(s.to_string()))?;
        let (name, octave) = s.split_at(split);
        let class: PitchClass = name.parse()?;
        let octave: i32 = octave
            .parse()
            .map_err(|_| SoundscapeError::NoteName(s.to_string()))?;
        Note::new(class, octave)
    }
}

impl Serialize for Note {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Note {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

pub fn note_to_frequency(note: &str) -> Result<f64, SoundscapeError> {
    Ok(note.parse::<Note>()?.frequency())
}

/// Pitches heard from the robot's own hardware.
#[derive(Debug, Clone, PartialEq)]
pub struct NativePitchTable {
    pub entries: Vec<(&'static str, PitchClass)>,
    pub octave: i32,
}

impl Default for NativePitchTable {
    fn default() -> Self {
        let pc = |s: &str| s.parse::<PitchClass>().expect("static note name");
        Self {
            entries: vec![
                ("spinning_sensor", pc("B")),
                ("base_fans", pc("E")),
                ("shoulder", pc("C#")),
                ("gripper", pc("G")),
                ("head_tilt", pc("C#")),
                ("base_wheels", pc("A")),
            ],
            octave: 3,
        }
    }
}

impl NativePitchTable {
    pub fn get(&self, component: &str) -> Option<Note> {
        self.entries
            .iter()
            .find(|(name, _)| *name == component)
            .and_then(|(_, pc)| Note::new(*pc, self.octave).ok())
    }

    /// The hardware component whose pitch a joint borrows in the robotic bank.
    pub fn component_for(joint: JointId) -> &'static str {
        match joint {
            JointId::Base => "base_wheels",
            JointId::Shoulder => "shoulder",
            JointId::Gripper | JointId::Hand => "gripper",
            JointId::Head => "head_tilt",
            JointId::Torso | JointId::Elbow | JointId::Wrist => "base_fans",
        }
    }

    pub fn note_for(&self, joint: JointId) -> Note {
        self.get(Self::component_for(joint))
            .expect("every joint maps to a table entry")
    }
}

/// Maps joint angles onto degrees of a scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScaleMap {
    pub root: Note,
    /// Semitone offsets of the scale degrees within one octave, ascending from 0.
    pub pattern: Vec<u8>,
    pub reference_angle: f64,
    /// Degrees of joint rotation per scale step.
    pub resolution: f64,
}

pub const MAJOR: [u8; 7] = [0, 2, 4, 5, 7, 9, 11];

impl Default for ScaleMap {
    fn default() -> Self {
        Self {
            root: Note(60),
            pattern: MAJOR.to_vec(),
            reference_angle: 80.0,
            resolution: 10.0,
        }
    }
}

impl ScaleMap {
    pub fn validate(&self) -> Result<(), SoundscapeError> {
        if !(self.resolution.is_finite() && self.resolution > 0.0) {
            return Err(SoundscapeError::Scale(format!(
                "resolution must be > 0, got {}",
                self.resolution
            )));
        }
        if !self.reference_angle.is_finite() {
            return Err(SoundscapeError::Scale(
                "reference_angle must be finite".into(),
            ));
        }
        if self.pattern.first() != Some(&0) {
            return Err(SoundscapeError::Scale("pattern must start at 0".into()));
        }
        if !self.pattern.windows(2).all(|w| w[0] < w[1]) || self.pattern.iter().any(|s| *s >= 12) {
            return Err(SoundscapeError::Scale(
                "pattern must ascend within one octave".into(),
            ));
        }
        Ok(())
    }

    /// Scale step for an angle; a new step begins at every whole multiple of
    /// `resolution` away from the reference angle.
    pub fn step(&self, angle: f64) -> i64 {
        ((angle - self.reference_angle) / self.resolution).floor() as i64
    }

    /// MIDI number of scale degree `step` above (or below) the root.
    pub fn degree_midi(&self, step: i64) -> i64 {
        let len = self.pattern.len() as i64;
        let octave = step.div_euclid(len);
        let idx = step.rem_euclid(len) as usize;
        i64::from(self.root.midi()) + 12 * octave + i64::from(self.pattern[idx])
    }
}

/// Note for a joint angle in degrees. Notes past the MIDI range clamp to it.
pub fn angle_to_note(angle: f64, map: &ScaleMap) -> Note {
    Note(map.degree_midi(map.step(angle)).clamp(0, 127) as u8)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NoteEvent {
    pub t: f64,
    pub joint: JointId,
    pub note: Note,
}

/// Emits a note whenever a joint's quantized scale step changes. The first
/// angle seen for each joint always emits.
pub fn legacy_note_events<'a, I>(frames: I, maps: &BTreeMap<JointId, ScaleMap>) -> Vec<NoteEvent>
where
    I: IntoIterator<Item = &'a TelemetryFrame>,
{
    let mut tracker = LegacyTracker::new(maps.clone());
    frames.into_iter().flat_map(|f| tracker.push(f)).collect()
}

/// Incremental form of [`legacy_note_events`].
#[derive(Debug, Clone)]
pub struct LegacyTracker {
    maps: BTreeMap<JointId, ScaleMap>,
    last_step: [Option<i64>; JointId::COUNT],
}

impl LegacyTracker {
    pub fn new(maps: BTreeMap<JointId, ScaleMap>) -> Self {
        Self {
            maps,
            last_step: [None; JointId::COUNT],
        }
    }

    pub fn push(&mut self, frame: &TelemetryFrame) -> Vec<NoteEvent> {
        let mut out = Vec::new();
        for (&joint, &angle) in &frame.angles {
            let Some(map) = self.maps.get(&joint) else {
                continue;
            };
            let step = map.step(angle);
            let slot = &mut self.last_step[joint.index()];
            if *slot != Some(step) {
                *slot = Some(step);
                out.push(NoteEvent {
                    t: frame.t,
                    joint,
                    note: angle_to_note(angle, map),
                });
            }
        }
        out
    }
}
