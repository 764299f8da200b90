use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use super::synth::{synthesize, Instrument};
use super::{Note, SoundscapeConfig, SoundscapeError};
use crate::telemetry::JointId;

/// Where a joint's sound comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum SampleSpec {
    File(PathBuf),
    Synth(Instrument),
}

impl FromStr for SampleSpec {
    type Err = SoundscapeError;

    /// `synth:<instrument>`, `file:<path>`, or a bare path.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Some(name) = s.strip_prefix("synth:") {
            return Ok(SampleSpec::Synth(name.parse()?));
        }
        let path = s.strip_prefix("file:").unwrap_or(s);
        if path.is_empty() {
            return Err(SoundscapeError::Synth("empty sample spec".into()));
        }
        Ok(SampleSpec::File(PathBuf::from(path)))
    }
}

impl fmt::Display for SampleSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SampleSpec::File(p) => write!(f, "file:{}", p.display()),
            SampleSpec::Synth(i) => write!(f, "synth:{i}"),
        }
    }
}

/// A mono loop at the render sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBuffer {
    pub samples: Arc<[f32]>,
    /// The tuned fundamental for synthesized loops.
    pub fundamental_hz: Option<f64>,
}

impl SampleBuffer {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Per-joint loops, immutable once loaded.
#[derive(Debug, Clone)]
pub struct SampleBank {
    pub sample_rate: u32,
    buffers: BTreeMap<JointId, Arc<SampleBuffer>>,
}

impl SampleBank {
    pub fn from_buffers(sample_rate: u32, buffers: BTreeMap<JointId, Arc<SampleBuffer>>) -> Self {
        Self {
            sample_rate,
            buffers,
        }
    }

    pub fn get(&self, joint: JointId) -> Option<&Arc<SampleBuffer>> {
        self.buffers.get(&joint)
    }

    pub fn joints(&self) -> impl Iterator<Item = JointId> + '_ {
        self.buffers.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.buffers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buffers.is_empty()
    }
}

/// Load or synthesize one loop per assigned joint.
pub fn load_bank(cfg: &SoundscapeConfig, sample_rate: u32) -> Result<SampleBank, SoundscapeError> {
    if cfg.joints.is_empty() {
        return Err(SoundscapeError::EmptyConfig);
    }
    let mut buffers = BTreeMap::new();
    for (&joint, sound) in &cfg.joints {
        let buffer = match &sound.sample {
            SampleSpec::Synth(inst) => synth_buffer(*inst, sound.pitch, sample_rate)?,
            SampleSpec::File(path) => {
                let path = cfg.resolve_path(path);
                if !path.is_file() {
                    return Err(SoundscapeError::MissingFile {
                        joint,
                        path: path.display().to_string(),
                    });
                }
                SampleBuffer {
                    samples: read_wav_mono(&path, sample_rate)?.into(),
                    fundamental_hz: None,
                }
            }
        };
        buffers.insert(joint, Arc::new(buffer));
    }
    Ok(SampleBank::from_buffers(sample_rate, buffers))
}

pub fn synth_buffer(
    inst: Instrument,
    note: Note,
    sample_rate: u32,
) -> Result<SampleBuffer, SoundscapeError> {
    let l = synthesize(inst, note.frequency(), sample_rate)?;
    Ok(SampleBuffer {
        samples: l.samples.into(),
        fundamental_hz: Some(l.fundamental_hz),
    })
}

/// Read a PCM WAV file, downmix to mono, and resample linearly to `sample_rate`.
pub fn read_wav_mono(path: &Path, sample_rate: u32) -> Result<Vec<f32>, SoundscapeError> {
    let format_err = |msg: String| SoundscapeError::Format {
        path: path.display().to_string(),
        reason: msg,
    };
    let mut reader = hound::WavReader::open(path).map_err(|e| format_err(e.to_string()))?;
    let spec = reader.spec();
    let channels = usize::from(spec.channels.max(1));
    let interleaved: Vec<f32> = match spec.sample_format {
        hound::SampleFormat::Float => reader
            .samples::<f32>()
            .collect::<Result<_, _>>()
            .map_err(|e| format_err(e.to_string()))?,
        hound::SampleFormat::Int => {
            let scale = (1u64 << (spec.bits_per_sample - 1)) as f32;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f32 / scale))
                .collect::<Result<_, _>>()
                .map_err(|e| format_err(e.to_string()))?
        }
    };
    if interleaved.is_empty() {
        return Err(format_err("no audio frames".into()));
    }
    let mono: Vec<f32> = interleaved
        .chunks(channels)
        .map(|c| c.iter().sum::<f32>() / c.len() as f32)
        .collect();
    Ok(resample_linear(&mono, spec.sample_rate, sample_rate))
}

pub fn resample_linear(input: &[f32], from: u32, to: u32) -> Vec<f32> {
    if from == to || input.len() < 2 {
        return input.to_vec();
    }
    let ratio = f64::from(from) / f64::from(to);
    let out_len = ((input.len() as f64) / ratio).round().max(1.0) as usize;
    (0..out_len)
        .map(|i| {
            let pos = i as f64 * ratio;
            let k = pos.floor() as usize;
            let frac = (pos - k as f64) as f32;
            let a = input[k.min(input.len() - 1)];
            let b = input[(k + 1).min(input.len() - 1)];
            a + (b - a) * frac
        })
        .collect()
}
