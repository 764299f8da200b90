//! The on-robot flow: gate events drive looping samples through linear
//! fade-outs into mono PCM, either offline or block by block.

mod mixer;
mod stream;
mod wav;

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::envelope::{default_fade_rate, EnvelopeError, FadeClass, GainTable, VolumeAnchors};
use crate::gate::{GateBank, GateError, GateEvent, GateEventKind};
use crate::soundscape::{
    load_bank, random_schedule, synth_buffer, LegacyTracker, Mode, NoteEvent, SampleBank,
    SampleBuffer, SampleSpec, SoundscapeConfig, SoundscapeError,
};
use crate::telemetry::{JointId, TelemetryError, TelemetryFrame, DEFAULT_TICK_S};

pub use mixer::{Cue, CueAction, Mixer};
pub use stream::{
    render_stream, Block, BlockSink, CollectSink, Paced, PcmSink, StreamOptions, StreamReport,
    TriggerLatency,
};
pub use wav::{sample_to_i16, wav_bytes, write_wav};

pub const SAMPLE_RATES: [u32; 3] = [22050, 44100, 48000];
pub const DEFAULT_HEADROOM: f32 = 0.353;
pub const DEFAULT_BLOCK_FRAMES: usize = 441;
pub const DEFAULT_BUFFER_S: f64 = 0.1;
/// Random-mode schedule length when streaming without a fixed duration.
pub const RANDOM_STREAM_HORIZON_S: f64 = 3600.0;

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Soundscape(#[from] SoundscapeError),
    #[error(transparent)]
    Envelope(#[from] EnvelopeError),
    #[error(transparent)]
    Gate(#[from] GateError),
    #[error(transparent)]
    Telemetry(#[from] TelemetryError),
    #[error("i/o: {0}")]
    Io(String),
    #[error("sink overrun: {dropped} of {blocks} blocks dropped")]
    Overrun { dropped: u64, blocks: u64 },
}

impl RenderError {
    /// Process exit code for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            RenderError::Config(_) | RenderError::Soundscape(_) | RenderError::Envelope(_) => 2,
            RenderError::Gate(GateError::Config(_)) => 2,
            RenderError::Overrun { .. } => 4,
            _ => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderConfig {
    pub sample_rate: u32,
    pub headroom: f32,
    /// Envelope tick in seconds.
    pub tick: f64,
    pub master_percent: f64,
    pub anchors: VolumeAnchors,
    /// Fixed length in seconds; `None` renders until the stream ends.
    pub duration: Option<f64>,
    pub block_frames: usize,
    /// Sink queue length in seconds of audio.
    pub buffer_seconds: f64,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self {
            sample_rate: 44100,
            headroom: DEFAULT_HEADROOM,
            tick: DEFAULT_TICK_S,
            master_percent: 100.0,
            anchors: VolumeAnchors::default(),
            duration: None,
            block_frames: DEFAULT_BLOCK_FRAMES,
            buffer_seconds: DEFAULT_BUFFER_S,
        }
    }
}

impl RenderConfig {
    pub fn validate(&self) -> Result<(), RenderError> {
        let bad = |m: String| Err(RenderError::Config(m));
        if !SAMPLE_RATES.contains(&self.sample_rate) {
            return bad(format!(
                "sample_rate {} not one of {SAMPLE_RATES:?}",
                self.sample_rate
            ));
        }
        if !(self.headroom > 0.0 && self.headroom <= 1.0) {
            return bad(format!("headroom {} outside (0, 1]", self.headroom));
        }
        if let Some(d) = self.duration {
            if !(d.is_finite() && d > 0.0) {
                return bad(format!("duration must be > 0, got {d}"));
            }
        }
        if self.block_frames == 0 {
            return bad("block_frames must be > 0".into());
        }
        if !(self.buffer_seconds.is_finite() && self.buffer_seconds > 0.0) {
            return bad(format!(
                "buffer_seconds must be > 0, got {}",
                self.buffer_seconds
            ));
        }
        if self.tick_samples() == 0 {
            return bad(format!("tick {} s is shorter than one sample", self.tick));
        }
        self.anchors.validate()?;
        GainTable::new(&self.anchors, self.master_percent)?;
        Ok(())
    }

    pub fn tick_samples(&self) -> u64 {
        (self.tick * f64::from(self.sample_rate)).round() as u64
    }

    /// Output sample index of stream time `t`.
    pub fn sample_at(&self, t: f64) -> u64 {
        (t * f64::from(self.sample_rate)).round().max(0.0) as u64
    }

    pub fn block_seconds(&self) -> f64 {
        self.block_frames as f64 / f64::from(self.sample_rate)
    }

    /// Blocks the sink queue holds, at least one.
    pub fn queue_blocks(&self) -> usize {
        ((self.buffer_seconds / self.block_seconds()).round() as usize).max(1)
    }
}

/// Soundscape, loaded samples, and gates: everything a render needs besides
/// telemetry and output format.
#[derive(Debug, Clone)]
pub struct Scape {
    pub config: SoundscapeConfig,
    pub bank: SampleBank,
    pub gates: GateBank,
}

impl Scape {
    /// Load or synthesize the bank for `config`; gates cover the assigned joints.
    pub fn load(
        config: SoundscapeConfig,
        gates: GateBank,
        sample_rate: u32,
    ) -> Result<Self, RenderError> {
        let bank = load_bank(&config, sample_rate)?;
        Self::with_bank(config, bank, gates)
    }

    pub fn with_bank(
        config: SoundscapeConfig,
        bank: SampleBank,
        gates: GateBank,
    ) -> Result<Self, RenderError> {
        if let Some(j) = config.joints.keys().find(|j| bank.get(**j).is_none()) {
            return Err(RenderError::Config(format!(
                "no sample loaded for gated joint {j}"
            )));
        }
        if let Some(j) = bank.joints().find(|j| !config.joints.contains_key(j)) {
            return Err(RenderError::Config(format!(
                "sample loaded for unassigned joint {j}"
            )));
        }
        let gates = gates.only(config.joints.keys().copied());
        Ok(Self {
            config,
            bank,
            gates,
        })
    }

    fn fades(&self, tick: f64) -> Result<[FadeClass; JointId::COUNT], RenderError> {
        let mut out = [FadeClass::new(default_fade_rate(JointId::Base), tick)?; JointId::COUNT];
        for j in JointId::ALL {
            out[j.index()] = match self.config.joints.get(&j) {
                Some(s) => s.fade(tick).map_err(|source| SoundscapeError::Fade {
                    who: j.name().into(),
                    source,
                })?,
                None => FadeClass::new(default_fade_rate(j), tick)?,
            };
        }
        Ok(out)
    }
}

/// Per-mode translation from telemetry to gate events and sample choices.
#[derive(Debug)]
enum Source {
    Gate(GateBank),
    Legacy {
        tracker: LegacyTracker,
        cache: BTreeMap<(JointId, u8), Arc<SampleBuffer>>,
    },
    Random {
        schedule: Vec<GateEvent>,
        next: usize,
    },
}

/// Incremental render state shared by the offline and streaming paths.
#[derive(Debug)]
pub struct Pipeline {
    scape: Scape,
    cfg: RenderConfig,
    source: Source,
    mixer: Mixer,
    active: [bool; JointId::COUNT],
    events: Vec<GateEvent>,
    notes: Vec<NoteEvent>,
    last_t: Option<f64>,
}

impl Pipeline {
    /// `horizon` bounds the random-mode schedule when no duration is set.
    pub fn new(scape: Scape, cfg: RenderConfig, horizon: Option<f64>) -> Result<Self, RenderError> {
        cfg.validate()?;
        if scape.bank.sample_rate != cfg.sample_rate {
            return Err(RenderError::Config(format!(
                "bank is at {} Hz, render at {} Hz",
                scape.bank.sample_rate, cfg.sample_rate
            )));
        }
        let source = match scape.config.mode {
            Mode::Orchestral | Mode::Robotic => Source::Gate(scape.gates.clone()),
            Mode::LegacyNote => Source::Legacy {
                tracker: LegacyTracker::new(scape.config.scale_maps()),
                cache: BTreeMap::new(),
            },
            Mode::Random => {
                let len = cfg.duration.or(horizon).unwrap_or(RANDOM_STREAM_HORIZON_S);
                let schedule = random_schedule(
                    len,
                    scape.config.joints.keys().copied(),
                    &scape.config.random,
                )?;
                Source::Random { schedule, next: 0 }
            }
        };
        let gains = GainTable::new(&cfg.anchors, cfg.master_percent)?;
        let mixer = Mixer::new(
            scape.fades(cfg.tick)?,
            gains,
            cfg.headroom,
            cfg.tick_samples(),
        );
        Ok(Self {
            scape,
            cfg,
            source,
            mixer,
            active: [false; JointId::COUNT],
            events: Vec::new(),
            notes: Vec::new(),
            last_t: None,
        })
    }

    pub fn config(&self) -> &RenderConfig {
        &self.cfg
    }

    /// Gate events so far, including end-of-stream releases after [`finish`](Self::finish).
    pub fn events(&self) -> &[GateEvent] {
        &self.events
    }

    /// Notes struck so far in position-to-note mode.
    pub fn notes(&self) -> &[NoteEvent] {
        &self.notes
    }

    pub fn position(&self) -> u64 {
        self.mixer.position()
    }

    fn past_end(&self, t: f64) -> bool {
        self.cfg.duration.is_some_and(|d| t > d)
    }

    fn cue(&mut self, e: GateEvent, buffer: Option<Arc<SampleBuffer>>) {
        let action = match e.kind {
            GateEventKind::Trigger => {
                let buffer = buffer
                    .or_else(|| self.scape.bank.get(e.joint).cloned())
                    .expect("scape covers every gated joint");
                CueAction::Trigger(buffer)
            }
            GateEventKind::Release => CueAction::Release,
        };
        self.active[e.joint.index()] = e.kind == GateEventKind::Trigger;
        self.mixer.schedule(Cue {
            sample: self.cfg.sample_at(e.t),
            joint: e.joint,
            action,
        });
        self.events.push(e);
    }

    fn drain_random(&mut self, until: f64, inclusive: bool) {
        let mut due = Vec::new();
        if let Source::Random { schedule, next } = &mut self.source {
            while let Some(e) = schedule.get(*next) {
                if e.t > until || (!inclusive && e.t == until) {
                    break;
                }
                due.push(*e);
                *next += 1;
            }
        }
        for e in due {
            self.cue(e, None);
        }
    }

    /// Feed one frame. Frames past a fixed duration are ignored.
    pub fn push(&mut self, frame: &TelemetryFrame) -> Result<(), RenderError> {
        if self.past_end(frame.t) {
            return Ok(());
        }
        if let Some(prev) = self.last_t {
            if frame.t <= prev {
                return Err(TelemetryError::OutOfOrder {
                    previous: prev,
                    current: frame.t,
                }
                .into());
            }
        }
        self.last_t = Some(frame.t);
        match &mut self.source {
            Source::Gate(bank) => {
                for e in bank.push(frame)? {
                    self.cue(e, None);
                }
            }
            Source::Legacy { tracker, cache } => {
                let mut struck = Vec::new();
                for n in tracker.push(frame) {
                    let sound = &self.scape.config.joints[&n.joint];
                    let buffer = match &sound.sample {
                        SampleSpec::Synth(inst) => match cache.get(&(n.joint, n.note.midi())) {
                            Some(b) => b.clone(),
                            None => {
                                let b =
                                    Arc::new(synth_buffer(*inst, n.note, self.cfg.sample_rate)?);
                                cache.insert((n.joint, n.note.midi()), b.clone());
                                b
                            }
                        },
                        SampleSpec::File(_) => self
                            .scape
                            .bank
                            .get(n.joint)
                            .expect("bank covers joints")
                            .clone(),
                    };
                    struck.push((n, buffer));
                }
                for (n, buffer) in struck {
                    let (joint, t) = (n.joint, n.t);
                    self.cue(
                        GateEvent {
                            joint,
                            kind: GateEventKind::Trigger,
                            t,
                        },
                        Some(buffer),
                    );
                    self.cue(
                        GateEvent {
                            joint,
                            kind: GateEventKind::Release,
                            t,
                        },
                        None,
                    );
                    self.notes.push(n);
                }
            }
            Source::Random { .. } => self.drain_random(frame.t, true),
        }
        Ok(())
    }

    /// Samples whose inputs are final: no later frame can cue before this.
    pub fn ready(&self) -> u64 {
        self.last_t.map_or(0, |t| self.cfg.sample_at(t))
    }

    /// Close the stream: release open gates and return the total length in
    /// samples, which runs until the last fade reaches zero.
    pub fn finish(&mut self) -> u64 {
        let end_t = self.cfg.duration.or(self.last_t);
        let Some(end_t) = end_t else {
            return self.mixer.position();
        };
        self.drain_random(end_t, false);
        for j in JointId::ALL {
            if self.active[j.index()] {
                self.cue(
                    GateEvent {
                        joint: j,
                        kind: GateEventKind::Release,
                        t: end_t,
                    },
                    None,
                );
            }
        }
        let end = self.cfg.sample_at(end_t).max(self.mixer.position());
        let silent = self.mixer.silent_from().expect("every gate released");
        end.max(silent)
    }

    pub fn render(&mut self, out: &mut [f32]) {
        self.mixer.render(out);
    }
}

/// Mixed mono audio with the events that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderBuffer {
    pub sample_rate: u32,
    pub samples: Vec<f32>,
}

impl RenderBuffer {
    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate)
    }

    pub fn peak(&self) -> f32 {
        self.samples.iter().fold(0.0f32, |m, s| m.max(s.abs()))
    }

    /// Samples sitting at full scale after the clamp.
    pub fn clipped(&self) -> usize {
        self.samples.iter().filter(|s| s.abs() >= 1.0).count()
    }

    pub fn to_i16(&self) -> Vec<i16> {
        self.samples.iter().map(|s| sample_to_i16(*s)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderOutput {
    pub buffer: RenderBuffer,
    pub events: Vec<GateEvent>,
    pub notes: Vec<NoteEvent>,
}

impl RenderOutput {
    pub fn triggers_per_joint(&self) -> BTreeMap<JointId, usize> {
        triggers_per_joint(&self.events)
    }
}

pub fn triggers_per_joint(events: &[GateEvent]) -> BTreeMap<JointId, usize> {
    let mut out = BTreeMap::new();
    for e in events.iter().filter(|e| e.kind == GateEventKind::Trigger) {
        *out.entry(e.joint).or_default() += 1;
    }
    out
}

/// Render a whole recording at once.
pub fn render_offline(
    frames: &[TelemetryFrame],
    scape: &Scape,
    cfg: &RenderConfig,
) -> Result<RenderOutput, RenderError> {
    let horizon = frames.last().map(|f| f.t);
    if scape.config.mode == Mode::Random
        && cfg.duration.is_none()
        && horizon.is_none_or(|t| t <= 0.0)
    {
        return Err(RenderError::Config(
            "random mode needs a duration or telemetry to time it".into(),
        ));
    }
    let mut p = Pipeline::new(scape.clone(), cfg.clone(), horizon)?;
    for f in frames {
        p.push(f)?;
    }
    let len = p.finish();
    let mut samples = vec![0.0; len as usize];
    p.render(&mut samples);
    Ok(RenderOutput {
        buffer: RenderBuffer {
            sample_rate: cfg.sample_rate,
            samples,
        },
        events: p.events,
        notes: p.notes,
    })
}
