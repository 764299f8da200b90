//! Sample-accurate voice mixer.
//!
//! Each joint owns one voice: a looping buffer, an envelope, and a fade clock.
//! The fade clock starts at release, so volume drops by one step every tick
//! after the release sample and gain is constant between steps.

use std::collections::VecDeque;
use std::sync::Arc;

use crate::envelope::{Envelope, FadeClass, GainTable, Volume};
use crate::soundscape::SampleBuffer;
use crate::telemetry::JointId;

#[derive(Debug, Clone)]
pub enum CueAction {
    Trigger(Arc<SampleBuffer>),
    Release,
}

/// A voice change at an absolute output sample.
#[derive(Debug, Clone)]
pub struct Cue {
    pub sample: u64,
    pub joint: JointId,
    pub action: CueAction,
}

#[derive(Debug, Clone)]
struct Voice {
    buffer: Option<Arc<SampleBuffer>>,
    phase: usize,
    env: Envelope,
    next_tick: Option<u64>,
}

impl Voice {
    fn sounding(&self) -> bool {
        !self.env.volume.is_silent() && self.buffer.is_some()
    }
}

#[derive(Debug, Clone)]
pub struct Mixer {
    voices: Vec<Voice>,
    gains: GainTable,
    headroom: f32,
    tick_samples: u64,
    position: u64,
    pending: VecDeque<Cue>,
}

impl Mixer {
    pub fn new(
        fades: [FadeClass; JointId::COUNT],
        gains: GainTable,
        headroom: f32,
        tick_samples: u64,
    ) -> Self {
        assert!(tick_samples > 0);
        let voices = fades
            .iter()
            .map(|f| Voice {
                buffer: None,
                phase: 0,
                env: Envelope::new(*f),
                next_tick: None,
            })
            .collect();
        Self {
            voices,
            gains,
            headroom,
            tick_samples,
            position: 0,
            pending: VecDeque::new(),
        }
    }

    /// Samples rendered so far.
    pub fn position(&self) -> u64 {
        self.position
    }

    /// Queue a cue. Cues must arrive in sample order and not in the past.
    pub fn schedule(&mut self, cue: Cue) {
        debug_assert!(cue.sample >= self.position, "cue in the past");
        debug_assert!(self.pending.back().is_none_or(|c| c.sample <= cue.sample));
        self.pending.push_back(cue);
    }

    pub fn volume(&self, joint: JointId) -> Volume {
        self.voices[joint.index()].env.volume
    }

    pub fn is_active(&self, joint: JointId) -> bool {
        self.voices[joint.index()].env.gate_active
    }

    /// First sample at which every voice is silent, assuming no cues beyond
    /// those already queued. `None` while any gate is left open.
    pub fn silent_from(&self) -> Option<u64> {
        let mut sim = self.clone();
        if let Some(last) = sim.pending.back().map(|c| c.sample) {
            let mut out = vec![0.0; (last - sim.position) as usize];
            sim.render(&mut out);
        }
        sim.prepare();
        let mut end = sim.position;
        for v in sim.voices.iter().filter(|v| v.sounding()) {
            if v.env.gate_active {
                return None;
            }
            let steps = u64::from(v.env.volume.tenths().div_ceil(v.env.fade.rate_tenths()));
            let next = v.next_tick.expect("released voice has a fade clock");
            end = end.max(next + (steps - 1) * self.tick_samples);
        }
        Some(end)
    }

    /// Apply cues and fade ticks due at the current sample. Idempotent.
    fn prepare(&mut self) {
        let n = self.position;
        while self.pending.front().is_some_and(|c| c.sample <= n) {
            let cue = self.pending.pop_front().expect("checked");
            self.apply(cue);
        }
        for v in self.voices.iter_mut() {
            if v.next_tick == Some(n) {
                v.env = v.env.tick();
                v.next_tick = if v.env.volume.is_silent() {
                    None
                } else {
                    Some(n + self.tick_samples)
                };
            }
        }
    }

    fn apply(&mut self, cue: Cue) {
        let ticks = self.tick_samples;
        let v = &mut self.voices[cue.joint.index()];
        match cue.action {
            CueAction::Trigger(buffer) => {
                let same = v.buffer.as_ref().is_some_and(|b| Arc::ptr_eq(b, &buffer));
                if !same || v.env.volume.is_silent() {
                    v.phase = 0;
                }
                v.buffer = Some(buffer);
                v.env.trigger();
                v.next_tick = None;
            }
            CueAction::Release => {
                if v.env.gate_active {
                    v.env.release();
                    v.next_tick = Some(cue.sample + ticks);
                }
            }
        }
    }

    /// Render the next `out.len()` samples.
    pub fn render(&mut self, out: &mut [f32]) {
        for slot in out.iter_mut() {
            self.prepare();
            let mut acc = 0.0f32;
            for v in self.voices.iter_mut().filter(|v| v.sounding()) {
                let buf = v.buffer.as_ref().expect("sounding voice has a buffer");
                acc += self.gains.gain(v.env.volume) * buf.samples[v.phase];
                v.phase += 1;
                if v.phase == buf.samples.len() {
                    v.phase = 0;
                }
            }
            *slot = (self.headroom * acc).clamp(-1.0, 1.0);
            self.position += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envelope::VolumeAnchors;

    fn dc_buffer(level: f32) -> Arc<SampleBuffer> {
        Arc::new(SampleBuffer {
            samples: vec![level; 100].into(),
            fundamental_hz: None,
        })
    }

    fn mixer(rate: f64) -> Mixer {
        let fade = FadeClass::with_rate(rate).unwrap();
        Mixer::new(
            [fade; JointId::COUNT],
            GainTable::new(&VolumeAnchors::default(), 100.0).unwrap(),
            1.0,
            10,
        )
    }

    #[test]
    fn silent_without_cues() {
        let mut m = mixer(4.0);
        let mut out = vec![1.0; 64];
        m.render(&mut out);
        assert!(out.iter().all(|s| *s == 0.0));
        assert_eq!(m.silent_from(), Some(64));
    }

    #[test]
    fn onset_and_staircase_fade() {
        let mut m = mixer(50.0);
        let buf = dc_buffer(0.5);
        m.schedule(Cue {
            sample: 5,
            joint: JointId::Torso,
            action: CueAction::Trigger(buf),
        });
        m.schedule(Cue {
            sample: 20,
            joint: JointId::Torso,
            action: CueAction::Release,
        });
        assert_eq!(m.silent_from(), Some(40));
        let mut out = vec![0.0; 50];
        m.render(&mut out);
        assert!(out[..5].iter().all(|s| *s == 0.0));
        assert!(out[5..30].iter().all(|s| *s == 0.5));
        let half = GainTable::new(&VolumeAnchors::default(), 100.0)
            .unwrap()
            .gain(Volume::from_tenths(500))
            * 0.5;
        assert!(out[30..40].iter().all(|s| *s == half));
        assert!(out[40..].iter().all(|s| *s == 0.0));
    }

    #[test]
    fn open_gate_never_silent() {
        let mut m = mixer(4.0);
        m.schedule(Cue {
            sample: 0,
            joint: JointId::Head,
            action: CueAction::Trigger(dc_buffer(0.1)),
        });
        assert_eq!(m.silent_from(), None);
    }

    #[test]
    fn clamps_full_scale_sum() {
        let mut m = mixer(4.0);
        for j in JointId::ALL {
            m.schedule(Cue {
                sample: 0,
                joint: j,
                action: CueAction::Trigger(dc_buffer(1.0)),
            });
        }
        let mut out = vec![0.0; 4];
        m.render(&mut out);
        assert!(out.iter().all(|s| *s == 1.0));
    }
}
