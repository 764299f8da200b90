//! Off-robot flow: gate events become MIDI notes for an external synthesizer,
//! either as a Standard MIDI File or as a live line-delimited JSON stream.
//!
//! A release does not end the note right away. The NoteOff is pushed back by
//! the joint's fade duration so the external tail matches the on-robot fade.

mod live;
mod smf;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::envelope::fade_duration;
use crate::gate::{GateEvent, GateEventKind};
use crate::soundscape::{NoteEvent, SoundscapeConfig};
use crate::telemetry::JointId;

pub use live::{LiveMidiWriter, WireEvent};
pub use smf::{read_smf, read_smf_bytes, smf_bytes, write_smf, SMF_DIVISION, TICKS_PER_SECOND};

/// Signals an external workstation can take at once.
pub const MAX_SIGNALS: usize = 16;
/// Fixed NoteOn velocity.
pub const NOTE_VELOCITY: u8 = 100;

#[derive(Debug, Error)]
pub enum MidiError {
    #[error("signal capacity of {MAX_SIGNALS} exceeded registering `{0}`")]
    Capacity(String),
    #[error("signal `{0}` is already registered")]
    Conflict(String),
    #[error("signal `{0}` is not registered")]
    Unmapped(String),
    #[error("no sound assigned to `{0}`")]
    NoSound(String),
    #[error("events out of order: {current} after {previous}")]
    Ordering { previous: f64, current: f64 },
    #[error("invalid MIDI event: {0}")]
    Invalid(String),
    #[error("malformed MIDI file: {0}")]
    Malformed(String),
    #[error("midi i/o: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MidiKind {
    NoteOn,
    NoteOff,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MidiEvent {
    pub t: f64,
    pub kind: MidiKind,
    pub channel: u8,
    pub pitch: u8,
    pub velocity: u8,
}

impl MidiEvent {
    pub fn validate(&self) -> Result<(), MidiError> {
        if !(self.t.is_finite() && self.t >= 0.0) {
            return Err(MidiError::Invalid(format!("time {}", self.t)));
        }
        if self.channel > 15 || self.pitch > 127 || self.velocity > 127 {
            return Err(MidiError::Invalid(format!("{self:?}")));
        }
        Ok(())
    }
}

/// Name-to-channel table with at most [`MAX_SIGNALS`] entries.
#[derive(Debug, Clone, Default)]
pub struct SignalRegistry {
    slots: [Option<String>; MAX_SIGNALS],
}

impl SignalRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Assign the lowest free channel.
    pub fn register(&mut self, name: &str) -> Result<u8, MidiError> {
        if self.channel(name).is_some() {
            return Err(MidiError::Conflict(name.to_string()));
        }
        let free = self
            .slots
            .iter()
            .position(Option::is_none)
            .ok_or_else(|| MidiError::Capacity(name.to_string()))?;
        self.slots[free] = Some(name.to_string());
        Ok(free as u8)
    }

    pub fn unregister(&mut self, name: &str) -> Option<u8> {
        let ch = self.channel(name)?;
        self.slots[usize::from(ch)] = None;
        Some(ch)
    }

    pub fn channel(&self, name: &str) -> Option<u8> {
        self.slots
            .iter()
            .position(|s| s.as_deref() == Some(name))
            .map(|i| i as u8)
    }

    pub fn len(&self) -> usize {
        self.slots.iter().flatten().count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn entries(&self) -> impl Iterator<Item = (u8, &str)> {
        self.slots
            .iter()
            .enumerate()
            .filter_map(|(i, s)| s.as_deref().map(|n| (i as u8, n)))
    }

    /// Register every assignment of a soundscape, joints in canonical order.
    pub fn from_soundscape(cfg: &SoundscapeConfig) -> Result<Self, MidiError> {
        let mut reg = Self::new();
        for (name, _) in cfg.assignments() {
            reg.register(&name)?;
        }
        Ok(reg)
    }
}

pub fn register_signal(registry: &mut SignalRegistry, name: &str) -> Result<u8, MidiError> {
    registry.register(name)
}

fn sort_events(events: &mut [MidiEvent]) {
    events.sort_by(|a, b| {
        a.t.total_cmp(&b.t)
            .then((a.kind == MidiKind::NoteOn).cmp(&(b.kind == MidiKind::NoteOn)))
            .then(a.channel.cmp(&b.channel))
            .then(a.pitch.cmp(&b.pitch))
    });
}

/// Convert gate events to notes. A joint still sounding at the end is treated
/// as released at `end_t` (or its last event when `None`).
pub fn events_to_midi(
    gate_events: &[GateEvent],
    registry: &SignalRegistry,
    cfg: &SoundscapeConfig,
    tick: f64,
    end_t: Option<f64>,
) -> Result<Vec<MidiEvent>, MidiError> {
    struct Voice {
        channel: u8,
        pitch: u8,
        tail: f64,
        /// A NoteOn is out without its NoteOff.
        on: bool,
        off_at: Option<f64>,
    }
    let mut voices: BTreeMap<JointId, Voice> = BTreeMap::new();
    let mut out = Vec::new();
    let mut last_t = 0.0f64;

    for ev in gate_events {
        last_t = last_t.max(ev.t);
        if !voices.contains_key(&ev.joint) {
            let name = ev.joint.name();
            let channel = registry
                .channel(name)
                .ok_or_else(|| MidiError::Unmapped(name.to_string()))?;
            let sound = cfg
                .joints
                .get(&ev.joint)
                .ok_or_else(|| MidiError::NoSound(name.to_string()))?;
            let fade = sound
                .fade(tick)
                .map_err(|e| MidiError::Invalid(format!("{name}: {e}")))?;
            voices.insert(
                ev.joint,
                Voice {
                    channel,
                    pitch: sound.pitch.midi(),
                    tail: fade_duration(&fade),
                    on: false,
                    off_at: None,
                },
            );
        }
        let voice = voices.get_mut(&ev.joint).expect("inserted above");
        let note = |kind, t, velocity| MidiEvent {
            t,
            kind,
            channel: voice.channel,
            pitch: voice.pitch,
            velocity,
        };
        match ev.kind {
            GateEventKind::Trigger => {
                if voice.on {
                    // a retrigger inside the tail cuts it short
                    let off = voice.off_at.map_or(ev.t, |off| off.min(ev.t));
                    out.push(note(MidiKind::NoteOff, off, 0));
                }
                out.push(note(MidiKind::NoteOn, ev.t, NOTE_VELOCITY));
                voice.on = true;
                voice.off_at = None;
            }
            GateEventKind::Release => {
                voice.off_at = Some(ev.t + voice.tail);
            }
        }
    }

    let end = end_t.unwrap_or(last_t).max(last_t);
    for voice in voices.values().filter(|v| v.on) {
        out.push(MidiEvent {
            t: voice.off_at.unwrap_or(end + voice.tail),
            kind: MidiKind::NoteOff,
            channel: voice.channel,
            pitch: voice.pitch,
            velocity: 0,
        });
    }
    sort_events(&mut out);
    Ok(out)
}

/// Notes for the position-to-note mode: each note sounds until the joint's
/// next note (or `end_t`), then fades like a released gate.
pub fn notes_to_midi(
    notes: &[NoteEvent],
    registry: &SignalRegistry,
    cfg: &SoundscapeConfig,
    tick: f64,
    end_t: Option<f64>,
) -> Result<Vec<MidiEvent>, MidiError> {
    let mut out = Vec::new();
    let mut open: BTreeMap<JointId, MidiEvent> = BTreeMap::new();
    let mut tails: BTreeMap<JointId, f64> = BTreeMap::new();
    let mut last_t = 0.0f64;
    for n in notes {
        last_t = last_t.max(n.t);
        let name = n.joint.name();
        let channel = registry
            .channel(name)
            .ok_or_else(|| MidiError::Unmapped(name.to_string()))?;
        if !tails.contains_key(&n.joint) {
            let sound = cfg
                .joints
                .get(&n.joint)
                .ok_or_else(|| MidiError::NoSound(name.to_string()))?;
            let fade = sound
                .fade(tick)
                .map_err(|e| MidiError::Invalid(format!("{name}: {e}")))?;
            tails.insert(n.joint, fade_duration(&fade));
        }
        if let Some(prev) = open.remove(&n.joint) {
            out.push(MidiEvent {
                t: n.t,
                kind: MidiKind::NoteOff,
                velocity: 0,
                ..prev
            });
        }
        let on = MidiEvent {
            t: n.t,
            kind: MidiKind::NoteOn,
            channel,
            pitch: n.note.midi(),
            velocity: NOTE_VELOCITY,
        };
        out.push(on);
        open.insert(n.joint, on);
    }
    let end = end_t.unwrap_or(last_t).max(last_t);
    for (joint, on) in open {
        out.push(MidiEvent {
            t: end + tails[&joint],
            kind: MidiKind::NoteOff,
            velocity: 0,
            ..on
        });
    }
    sort_events(&mut out);
    Ok(out)
}

#[derive(Debug, Clone)]
struct LiveVoice {
    channel: u8,
    pitch: u8,
    tail: f64,
    on: bool,
    off_at: Option<f64>,
}

/// Incremental MIDI conversion for live output. Events come out as soon as
/// they are final; delayed NoteOffs are released by [`advance`](Self::advance).
/// The concatenated output equals [`events_to_midi`] (or [`notes_to_midi`])
/// over the same input.
#[derive(Debug, Clone)]
pub struct LiveBridge {
    registry: SignalRegistry,
    cfg: SoundscapeConfig,
    tick: f64,
    voices: BTreeMap<JointId, LiveVoice>,
    last_t: f64,
}

impl LiveBridge {
    pub fn new(registry: SignalRegistry, cfg: SoundscapeConfig, tick: f64) -> Self {
        Self {
            registry,
            cfg,
            tick,
            voices: BTreeMap::new(),
            last_t: 0.0,
        }
    }

    fn voice(&mut self, joint: JointId) -> Result<&mut LiveVoice, MidiError> {
        if !self.voices.contains_key(&joint) {
            let name = joint.name();
            let channel = self
                .registry
                .channel(name)
                .ok_or_else(|| MidiError::Unmapped(name.to_string()))?;
            let sound = self
                .cfg
                .joints
                .get(&joint)
                .ok_or_else(|| MidiError::NoSound(name.to_string()))?;
            let fade = sound
                .fade(self.tick)
                .map_err(|e| MidiError::Invalid(format!("{name}: {e}")))?;
            self.voices.insert(
                joint,
                LiveVoice {
                    channel,
                    pitch: sound.pitch.midi(),
                    tail: fade_duration(&fade),
                    on: false,
                    off_at: None,
                },
            );
        }
        Ok(self.voices.get_mut(&joint).expect("inserted above"))
    }

    fn check_order(&mut self, t: f64) -> Result<(), MidiError> {
        if t < self.last_t {
            return Err(MidiError::Ordering {
                previous: self.last_t,
                current: t,
            });
        }
        self.last_t = t;
        Ok(())
    }

    /// NoteOffs due at or before `t`.
    pub fn advance(&mut self, t: f64) -> Vec<MidiEvent> {
        let mut out = Vec::new();
        for v in self.voices.values_mut() {
            if let Some(off) = v.off_at.filter(|off| v.on && *off <= t) {
                out.push(MidiEvent {
                    t: off,
                    kind: MidiKind::NoteOff,
                    channel: v.channel,
                    pitch: v.pitch,
                    velocity: 0,
                });
                v.on = false;
                v.off_at = None;
            }
        }
        sort_events(&mut out);
        out
    }

    pub fn push(&mut self, ev: &GateEvent) -> Result<Vec<MidiEvent>, MidiError> {
        self.check_order(ev.t)?;
        let mut out = self.advance(ev.t);
        let v = self.voice(ev.joint)?;
        match ev.kind {
            GateEventKind::Trigger => {
                if v.on {
                    out.push(MidiEvent {
                        t: ev.t,
                        kind: MidiKind::NoteOff,
                        channel: v.channel,
                        pitch: v.pitch,
                        velocity: 0,
                    });
                }
                out.push(MidiEvent {
                    t: ev.t,
                    kind: MidiKind::NoteOn,
                    channel: v.channel,
                    pitch: v.pitch,
                    velocity: NOTE_VELOCITY,
                });
                v.on = true;
                v.off_at = None;
            }
            GateEventKind::Release => v.off_at = Some(ev.t + v.tail),
        }
        Ok(out)
    }

    /// A position-to-note strike: the joint's previous note ends now.
    pub fn push_note(&mut self, n: &NoteEvent) -> Result<Vec<MidiEvent>, MidiError> {
        self.check_order(n.t)?;
        let mut out = self.advance(n.t);
        let v = self.voice(n.joint)?;
        if v.on {
            out.push(MidiEvent {
                t: n.t,
                kind: MidiKind::NoteOff,
                channel: v.channel,
                pitch: v.pitch,
                velocity: 0,
            });
        }
        v.pitch = n.note.midi();
        v.on = true;
        v.off_at = None;
        out.push(MidiEvent {
            t: n.t,
            kind: MidiKind::NoteOn,
            channel: v.channel,
            pitch: v.pitch,
            velocity: NOTE_VELOCITY,
        });
        Ok(out)
    }

    /// Close every open note, releasing held ones at `end_t`.
    pub fn finish(&mut self, end_t: f64) -> Vec<MidiEvent> {
        let end = end_t.max(self.last_t);
        let mut out = Vec::new();
        for v in self.voices.values_mut().filter(|v| v.on) {
            out.push(MidiEvent {
                t: v.off_at.unwrap_or(end + v.tail),
                kind: MidiKind::NoteOff,
                channel: v.channel,
                pitch: v.pitch,
                velocity: 0,
            });
            v.on = false;
            v.off_at = None;
        }
        sort_events(&mut out);
        out
    }
}

/// Channels in use and whether every NoteOn is matched by a later NoteOff
/// on the same channel and pitch.
pub fn check_balance(events: &[MidiEvent]) -> Result<usize, String> {
    let mut open: BTreeMap<(u8, u8), bool> = BTreeMap::new();
    let mut channels = std::collections::BTreeSet::new();
    let mut prev = f64::NEG_INFINITY;
    for e in events {
        if e.t < prev {
            return Err(format!("time goes backwards at {}", e.t));
        }
        prev = e.t;
        channels.insert(e.channel);
        let slot = open.entry((e.channel, e.pitch)).or_insert(false);
        match (e.kind, *slot) {
            (MidiKind::NoteOn, false) => *slot = true,
            (MidiKind::NoteOff, true) => *slot = false,
            (kind, _) => {
                return Err(format!(
                    "unbalanced {kind:?} ch {} pitch {} at {}",
                    e.channel, e.pitch, e.t
                ))
            }
        }
    }
    if let Some(((ch, p), _)) = open.iter().find(|(_, on)| **on) {
        return Err(format!("note ch {ch} pitch {p} never released"));
    }
    Ok(channels.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::soundscape::{Instrument, JointSound, Mode};

    fn ev(joint: JointId, kind: GateEventKind, t: f64) -> GateEvent {
        GateEvent { joint, kind, t }
    }

    fn setup() -> (SignalRegistry, SoundscapeConfig) {
        let cfg = SoundscapeConfig::for_mode(Mode::Orchestral);
        (SignalRegistry::from_soundscape(&cfg).unwrap(), cfg)
    }

    #[test]
    fn sequential_channels() {
        let (reg, _) = setup();
        for (i, j) in JointId::ALL.iter().enumerate() {
            assert_eq!(reg.channel(j.name()), Some(i as u8));
        }
    }

    #[test]
    fn seventeenth_signal_rejected() {
        let mut reg = SignalRegistry::new();
        for i in 0..16 {
            assert_eq!(
                register_signal(&mut reg, &format!("s{i}")).unwrap(),
                i as u8
            );
        }
        assert!(matches!(
            register_signal(&mut reg, "s16"),
            Err(MidiError::Capacity(_))
        ));
    }

    #[test]
    fn duplicate_rejected_and_lowest_free_reused() {
        let mut reg = SignalRegistry::new();
        reg.register("torso").unwrap();
        reg.register("head").unwrap();
        assert!(matches!(reg.register("torso"), Err(MidiError::Conflict(_))));
        reg.unregister("torso");
        assert_eq!(reg.register("wrist").unwrap(), 0);
    }

    #[test]
    fn note_off_waits_for_fade() {
        let (reg, cfg) = setup();
        let events = [
            ev(JointId::Torso, GateEventKind::Trigger, 1.04),
            ev(JointId::Torso, GateEventKind::Release, 2.0),
        ];
        let midi = events_to_midi(&events, &reg, &cfg, 0.04, None).unwrap();
        assert_eq!(midi.len(), 2);
        assert_eq!(midi[0].kind, MidiKind::NoteOn);
        assert_eq!(midi[0].t, 1.04);
        assert_eq!(midi[0].pitch, 38); // D2
        assert_eq!(midi[0].velocity, 100);
        assert_eq!(midi[1].kind, MidiKind::NoteOff);
        assert!((midi[1].t - 3.0).abs() < 1e-12);
    }

    #[test]
    fn empty_in_empty_out() {
        let (reg, cfg) = setup();
        assert!(events_to_midi(&[], &reg, &cfg, 0.04, None)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn overlapping_joints_use_separate_channels() {
        let (reg, cfg) = setup();
        let events = [
            ev(JointId::Torso, GateEventKind::Trigger, 0.5),
            ev(JointId::Head, GateEventKind::Trigger, 0.7),
            ev(JointId::Torso, GateEventKind::Release, 1.0),
            ev(JointId::Torso, GateEventKind::Trigger, 1.5), // inside the torso tail
            ev(JointId::Head, GateEventKind::Release, 2.0),
            ev(JointId::Torso, GateEventKind::Release, 2.5),
        ];
        let midi = events_to_midi(&events, &reg, &cfg, 0.04, None).unwrap();
        assert_eq!(check_balance(&midi), Ok(2));
        let torso_ch = reg.channel("torso").unwrap();
        let torso: Vec<_> = midi
            .iter()
            .filter(|e| e.channel == torso_ch)
            .map(|e| (e.kind, e.t))
            .collect();
        assert_eq!(
            torso,
            vec![
                (MidiKind::NoteOn, 0.5),
                (MidiKind::NoteOff, 1.5),
                (MidiKind::NoteOn, 1.5),
                (MidiKind::NoteOff, 3.5),
            ]
        );
    }

    #[test]
    fn dangling_trigger_closed_at_end() {
        let (reg, cfg) = setup();
        let midi = events_to_midi(
            &[ev(JointId::Hand, GateEventKind::Trigger, 1.0)],
            &reg,
            &cfg,
            0.04,
            Some(5.0),
        )
        .unwrap();
        assert_eq!(midi.len(), 2);
        assert!((midi[1].t - (5.0 + 2.68)).abs() < 1e-9);
    }

    #[test]
    fn unregistered_joint_is_mapping_error() {
        let (_, cfg) = setup();
        let reg = SignalRegistry::new();
        let err = events_to_midi(
            &[ev(JointId::Hand, GateEventKind::Trigger, 1.0)],
            &reg,
            &cfg,
            0.04,
            None,
        );
        assert!(matches!(err, Err(MidiError::Unmapped(_))));
    }

    #[test]
    fn extra_signals_count_toward_capacity() {
        let mut cfg = SoundscapeConfig::default();
        for i in 0..9 {
            cfg.signals.insert(
                format!("aux{i}"),
                JointSound::synth(Instrument::Sine, "C4", 4.0),
            );
        }
        assert!(matches!(
            SignalRegistry::from_soundscape(&cfg),
            Err(MidiError::Capacity(_))
        ));
    }

    #[test]
    fn legacy_notes_balance() {
        let cfg = SoundscapeConfig::for_mode(Mode::LegacyNote);
        let reg = SignalRegistry::from_soundscape(&cfg).unwrap();
        let n = |t, s: &str| NoteEvent {
            t,
            joint: JointId::Torso,
            note: s.parse().unwrap(),
        };
        let midi = notes_to_midi(
            &[n(0.0, "C4"), n(1.0, "D4"), n(2.0, "E4")],
            &reg,
            &cfg,
            0.04,
            Some(3.0),
        )
        .unwrap();
        assert_eq!(midi.len(), 6);
        assert_eq!(check_balance(&midi), Ok(1));
        assert!((midi[5].t - 4.0).abs() < 1e-9);
    }

    #[test]
    fn live_bridge_matches_batch() {
        let (reg, cfg) = setup();
        let g = |j, kind, t| GateEvent { joint: j, kind, t };
        let events = [
            g(JointId::Torso, GateEventKind::Trigger, 1.04),
            g(JointId::Head, GateEventKind::Trigger, 1.2),
            g(JointId::Torso, GateEventKind::Release, 2.0),
            g(JointId::Torso, GateEventKind::Trigger, 2.5),
            g(JointId::Head, GateEventKind::Release, 3.0),
            g(JointId::Torso, GateEventKind::Release, 3.1),
            g(JointId::Torso, GateEventKind::Trigger, 9.0),
        ];
        let batch = events_to_midi(&events, &reg, &cfg, 0.04, Some(10.0)).unwrap();
        let mut live = LiveBridge::new(reg, cfg, 0.04);
        let mut out = Vec::new();
        for e in &events {
            out.extend(live.push(e).unwrap());
        }
        out.extend(live.finish(10.0));
        sort_events(&mut out);
        assert_eq!(out, batch);
    }

    #[test]
    fn live_notes_match_batch() {
        let cfg = SoundscapeConfig::for_mode(Mode::LegacyNote);
        let reg = SignalRegistry::from_soundscape(&cfg).unwrap();
        let n = |t, j, s: &str| NoteEvent {
            t,
            joint: j,
            note: s.parse().unwrap(),
        };
        let notes = [
            n(0.0, JointId::Torso, "C4"),
            n(0.5, JointId::Shoulder, "E4"),
            n(1.0, JointId::Torso, "D4"),
        ];
        let batch = notes_to_midi(&notes, &reg, &cfg, 0.04, Some(3.0)).unwrap();
        let mut live = LiveBridge::new(reg, cfg, 0.04);
        let mut out = Vec::new();
        for x in &notes {
            out.extend(live.push_note(x).unwrap());
        }
        out.extend(live.finish(3.0));
        sort_events(&mut out);
        assert_eq!(out, batch);
    }
}
