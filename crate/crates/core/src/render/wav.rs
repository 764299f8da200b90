use std::io::{Cursor, Seek, Write};
use std::path::Path;

use hound::{SampleFormat, WavSpec, WavWriter};

use super::{RenderBuffer, RenderError};

/// Float to 16-bit by truncation toward zero. 1.0 maps to 32767, -1.0 to -32768.
pub fn sample_to_i16(s: f32) -> i16 {
    let s = s.clamp(-1.0, 1.0);
    if s >= 0.0 {
        (s * 32767.0) as i16
    } else {
        (s * 32768.0) as i16
    }
}

fn write_to<W: Write + Seek>(buffer: &RenderBuffer, w: W) -> Result<(), RenderError> {
    if let Some(i) = buffer.samples.iter().position(|s| !s.is_finite()) {
        return Err(RenderError::Config(format!("sample {i} is not finite")));
    }
    let spec = WavSpec {
        channels: 1,
        sample_rate: buffer.sample_rate,
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let io = |e: hound::Error| RenderError::Io(e.to_string());
    let mut writer = WavWriter::new(w, spec).map_err(io)?;
    let mut i16s = writer.get_i16_writer(buffer.samples.len() as u32);
    for s in &buffer.samples {
        i16s.write_sample(sample_to_i16(*s));
    }
    i16s.flush().map_err(io)?;
    writer.finalize().map_err(io)
}

/// 16-bit mono WAV file.
pub fn write_wav(buffer: &RenderBuffer, path: &Path) -> Result<(), RenderError> {
    let file = std::fs::File::create(path)
        .map_err(|e| RenderError::Io(format!("{}: {e}", path.display())))?;
    write_to(buffer, std::io::BufWriter::new(file))
}

pub fn wav_bytes(buffer: &RenderBuffer) -> Result<Vec<u8>, RenderError> {
    let mut cur = Cursor::new(Vec::new());
    write_to(buffer, &mut cur)?;
    Ok(cur.into_inner())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conversion_extremes() {
        assert_eq!(sample_to_i16(1.0), 32767);
        assert_eq!(sample_to_i16(-1.0), -32768);
        assert_eq!(sample_to_i16(0.0), 0);
        assert_eq!(sample_to_i16(0.99999), 32766);
        assert_eq!(sample_to_i16(-0.5), -16384);
    }

    #[test]
    fn one_second_of_silence() {
        let buf = RenderBuffer {
            sample_rate: 44100,
            samples: vec![0.0; 44100],
        };
        let bytes = wav_bytes(&buf).unwrap();
        let data = bytes.windows(4).position(|w| w == b"data").unwrap();
        let len = u32::from_le_bytes(bytes[data + 4..data + 8].try_into().unwrap());
        assert_eq!(len, 88200);
        assert_eq!(bytes.len(), data + 8 + 88200);
        assert_eq!(&bytes[..4], b"RIFF");
    }

    #[test]
    fn non_finite_rejected() {
        let buf = RenderBuffer {
            sample_rate: 44100,
            samples: vec![f32::NAN],
        };
        assert!(wav_bytes(&buf).is_err());
    }
}
