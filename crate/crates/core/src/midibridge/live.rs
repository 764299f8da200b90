use std::io::{self, BufWriter, Write};
use std::net::TcpStream;

use serde::{Deserialize, Serialize};

use super::{MidiError, MidiEvent, MidiKind};

/// One line of the live event stream:
/// `{"t":1.04,"kind":"on","ch":0,"pitch":38,"vel":100}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WireEvent {
    pub t: f64,
    pub kind: WireKind,
    pub ch: u8,
    pub pitch: u8,
    pub vel: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WireKind {
    On,
    Off,
}

impl From<&MidiEvent> for WireEvent {
    fn from(e: &MidiEvent) -> Self {
        WireEvent {
            t: e.t,
            kind: match e.kind {
                MidiKind::NoteOn => WireKind::On,
                MidiKind::NoteOff => WireKind::Off,
            },
            ch: e.channel,
            pitch: e.pitch,
            vel: e.velocity,
        }
    }
}

impl From<WireEvent> for MidiEvent {
    fn from(w: WireEvent) -> Self {
        MidiEvent {
            t: w.t,
            kind: match w.kind {
                WireKind::On => MidiKind::NoteOn,
                WireKind::Off => MidiKind::NoteOff,
            },
            channel: w.ch,
            pitch: w.pitch,
            velocity: w.vel,
        }
    }
}

/// Writes MIDI events as JSON lines to any sink, usually a TCP socket.
pub struct LiveMidiWriter<W: Write> {
    out: BufWriter<W>,
}

impl LiveMidiWriter<TcpStream> {
    pub fn connect(addr: &str) -> io::Result<Self> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        Ok(Self::new(stream))
    }
}

impl<W: Write> LiveMidiWriter<W> {
    pub fn new(inner: W) -> Self {
        Self {
            out: BufWriter::new(inner),
        }
    }

    /// Write one event and flush it out.
    pub fn send(&mut self, e: &MidiEvent) -> Result<(), MidiError> {
        e.validate()?;
        let line = serde_json::to_string(&WireEvent::from(e))
            .map_err(|e| MidiError::Invalid(e.to_string()))?;
        self.out.write_all(line.as_bytes())?;
        self.out.write_all(b"\n")?;
        self.out.flush()?;
        Ok(())
    }

    pub fn into_inner(self) -> Result<W, MidiError> {
        self.out
            .into_inner()
            .map_err(|e| MidiError::Io(e.into_error()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wire_format() {
        let e = MidiEvent {
            t: 1.04,
            kind: MidiKind::NoteOn,
            channel: 0,
            pitch: 38,
            velocity: 100,
        };
        let mut w = LiveMidiWriter::new(Vec::new());
        w.send(&e).unwrap();
        let text = String::from_utf8(w.into_inner().unwrap()).unwrap();
        assert_eq!(
            text,
            "{\"t\":1.04,\"kind\":\"on\",\"ch\":0,\"pitch\":38,\"vel\":100}\n"
        );
        let back: WireEvent = serde_json::from_str(text.trim()).unwrap();
        assert_eq!(MidiEvent::from(back), e);
    }
}
