//! Deterministic loopable tones standing in for recorded instrument samples.
//!
//! Every partial is snapped to a whole number of cycles per loop, so a buffer
//! repeats without a seam. Struck instruments restart their decay each loop
//! from a short fade-in at zero amplitude.

use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::SoundscapeError;

/// Length of a synthesized loop in seconds.
pub const LOOP_SECONDS: f64 = 2.0;
/// Peak level synthesized buffers are normalized to.
pub const PEAK: f32 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Waveform {
    /// Sum of sine partials.
    Sine,
    /// Triangle wave under a repeating exponential decay.
    TriangleDecay,
    /// Low-passed noise under a repeating exponential decay.
    NoiseBurst,
}

/// Named synthesis recipes, one per instrument family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Instrument {
    Strings,
    Bass,
    Piano,
    Bells,
    Woodwind,
    Triangle,
    Brass,
    Motor,
    Sine,
    Noise,
}

impl Instrument {
    pub const ALL: [Instrument; 10] = [
        Instrument::Strings,
        Instrument::Bass,
        Instrument::Piano,
        Instrument::Bells,
        Instrument::Woodwind,
        Instrument::Triangle,
        Instrument::Brass,
        Instrument::Motor,
        Instrument::Sine,
        Instrument::Noise,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Instrument::Strings => "strings",
            Instrument::Bass => "bass",
            Instrument::Piano => "piano",
            Instrument::Bells => "bells",
            Instrument::Woodwind => "woodwind",
            Instrument::Triangle => "triangle",
            Instrument::Brass => "brass",
            Instrument::Motor => "motor",
            Instrument::Sine => "sine",
            Instrument::Noise => "noise",
        }
    }

    pub fn recipe(self) -> Recipe {
        // (frequency ratio, amplitude)
        let harmonics = |n: usize, amp: fn(f64) -> f64| -> Vec<(f64, f64)> {
            (1..=n).map(|h| (h as f64, amp(h as f64))).collect()
        };
        match self {
            // sawtooth-like stack, doubled a little sharp for a chorus shimmer
            Instrument::Strings => Recipe {
                waveform: Waveform::Sine,
                partials: harmonics(8, |h| 1.0 / h),
                detune_ratio: Some(1.003),
                decay_per_s: 0.0,
                noise_mix: 0.0,
            },
            Instrument::Bass => Recipe {
                waveform: Waveform::Sine,
                partials: vec![(1.0, 1.0), (2.0, 0.35), (3.0, 0.1)],
                detune_ratio: None,
                decay_per_s: 2.5,
                noise_mix: 0.0,
            },
            Instrument::Piano => Recipe {
                waveform: Waveform::Sine,
                partials: harmonics(6, |h| h.powf(-1.5)),
                detune_ratio: None,
                decay_per_s: 3.0,
                noise_mix: 0.0,
            },
            Instrument::Bells => Recipe {
                waveform: Waveform::Sine,
                partials: vec![(1.0, 1.0), (2.76, 0.5), (5.40, 0.25), (8.93, 0.12)],
                detune_ratio: None,
                decay_per_s: 4.0,
                noise_mix: 0.0,
            },
            // odd harmonics, sustained
            Instrument::Woodwind => Recipe {
                waveform: Waveform::Sine,
                partials: vec![(1.0, 1.0), (3.0, 0.2), (5.0, 0.06)],
                detune_ratio: None,
                decay_per_s: 0.0,
                noise_mix: 0.03,
            },
            Instrument::Triangle => Recipe {
                waveform: Waveform::TriangleDecay,
                partials: vec![(1.0, 1.0)],
                detune_ratio: None,
                decay_per_s: 5.0,
                noise_mix: 0.0,
            },
            Instrument::Brass => Recipe {
                waveform: Waveform::Sine,
                partials: vec![
                    (1.0, 0.6),
                    (2.0, 1.0),
                    (3.0, 0.8),
                    (4.0, 0.5),
                    (5.0, 0.3),
                    (6.0, 0.15),
                ],
                detune_ratio: None,
                decay_per_s: 6.0,
                noise_mix: 0.0,
            },
            Instrument::Motor => Recipe {
                waveform: Waveform::Sine,
                partials: vec![(1.0, 1.0), (2.0, 0.5), (4.0, 0.25)],
                detune_ratio: None,
                decay_per_s: 0.0,
                noise_mix: 0.25,
            },
            Instrument::Sine => Recipe {
                waveform: Waveform::Sine,
                partials: vec![(1.0, 1.0)],
                detune_ratio: None,
                decay_per_s: 0.0,
                noise_mix: 0.0,
            },
            Instrument::Noise => Recipe {
                waveform: Waveform::NoiseBurst,
                partials: Vec::new(),
                detune_ratio: None,
                decay_per_s: 6.0,
                noise_mix: 1.0,
            },
        }
    }
}

impl fmt::Display for Instrument {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Instrument {
    type Err = SoundscapeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Instrument::ALL
            .into_iter()
            .find(|i| i.name() == s)
            .ok_or_else(|| SoundscapeError::Synth(format!("unknown instrument `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Recipe {
    pub waveform: Waveform,
    pub partials: Vec<(f64, f64)>,
    pub detune_ratio: Option<f64>,
    /// Exponential decay rate restarted every loop; 0 means sustained.
    pub decay_per_s: f64,
    /// Fraction of low-passed noise mixed in.
    pub noise_mix: f64,
}

/// A synthesized loop and the fundamental it was actually tuned to.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthLoop {
    pub samples: Vec<f32>,
    pub fundamental_hz: f64,
}

/// Whole cycles of `freq` that fit in `len` samples, at least one.
fn cycles(freq: f64, len: usize, sample_rate: u32) -> f64 {
    (freq * len as f64 / f64::from(sample_rate))
        .round()
        .max(1.0)
}

pub fn synthesize(
    instrument: Instrument,
    freq: f64,
    sample_rate: u32,
) -> Result<SynthLoop, SoundscapeError> {
    if !(freq.is_finite() && freq > 0.0) {
        return Err(SoundscapeError::Synth(format!(
            "frequency must be > 0, got {freq}"
        )));
    }
    let recipe = instrument.recipe();
    let len = (LOOP_SECONDS * f64::from(sample_rate)).round() as usize;
    let n = len as f64;
    let sr = f64::from(sample_rate);
    let nyquist = sr / 2.0;
    let base_cycles = cycles(freq, len, sample_rate);
    let fundamental_hz = base_cycles * sr / n;

    let mut buf = vec![0.0f64; len];
    let mut add_partial = |ratio: f64, amp: f64| {
        let k = cycles(freq * ratio, len, sample_rate);
        if k * sr / n >= nyquist {
            return;
        }
        for (i, s) in buf.iter_mut().enumerate() {
            let phase = k * i as f64 / n;
            let x = match recipe.waveform {
                Waveform::TriangleDecay => triangle(phase),
                _ => (TAU * phase).sin(),
            };
            *s += amp * x;
        }
    };
    for &(ratio, amp) in &recipe.partials {
        add_partial(ratio, amp);
        if let Some(detune) = recipe.detune_ratio {
            add_partial(ratio * detune, amp * 0.7);
        }
    }

    if recipe.noise_mix > 0.0 {
        add_noise(&mut buf, recipe.noise_mix, freq, sr, instrument);
    }

    if recipe.decay_per_s > 0.0 {
        let attack = (0.005 * sr).max(1.0);
        for (i, s) in buf.iter_mut().enumerate() {
            let t = i as f64 / sr;
            let ramp = (i as f64 / attack).min(1.0);
            *s *= ramp * (-recipe.decay_per_s * t).exp();
        }
    }

    let peak = buf.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    let scale = if peak > 0.0 {
        f64::from(PEAK) / peak
    } else {
        0.0
    };
    Ok(SynthLoop {
        samples: buf.iter().map(|s| (s * scale) as f32).collect(),
        fundamental_hz,
    })
}

// Triangle wave starting at 0 and rising, period 1 in `phase`.
fn triangle(phase: f64) -> f64 {
    let p = phase.fract();
    if p < 0.25 {
        4.0 * p
    } else if p < 0.75 {
        2.0 - 4.0 * p
    } else {
        4.0 * p - 4.0
    }
}

fn add_noise(buf: &mut [f64], mix: f64, freq: f64, sr: f64, instrument: Instrument) {
    // seed from the instrument and pitch so every bank build is identical
    let seed = (instrument as u64) << 32 ^ freq.to_bits();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cutoff = (freq * 4.0).min(sr / 4.0);
    let alpha = 1.0 - (-TAU * cutoff / sr).exp();
    let n = buf.len();
    let fade = (n / 20).max(1);
    let mut y = 0.0;
    let raw: Vec<f64> = (0..n + fade)
        .map(|_| {
            y += alpha * (rng.random_range(-1.0..1.0) - y);
            y
        })
        .collect();
    // the head blends in the continuation past the end, so the last sample
    // flows into the first
    let noise: Vec<f64> = (0..n)
        .map(|i| {
            if i < fade {
                let w = i as f64 / fade as f64;
                raw[i] * w + raw[n + i] * (1.0 - w)
            } else {
                raw[i]
            }
        })
        .collect();
    let peak = noise.iter().fold(0.0f64, |m, s| m.max(s.abs())).max(1e-12);
    for (s, x) in buf.iter_mut().zip(noise) {
        *s += mix * x / peak;
    }
}
