//! Standard MIDI File, format 0, fixed tempo.

use std::fs;
use std::path::Path;

use super::{MidiError, MidiEvent, MidiKind};

/// Pulses per quarter note.
pub const SMF_DIVISION: u16 = 480;
/// Microseconds per quarter note (120 BPM).
const TEMPO_US: u32 = 500_000;
/// Ticks per second at 480 PPQ and 120 BPM.
pub const TICKS_PER_SECOND: f64 = 960.0;

fn push_vlq(buf: &mut Vec<u8>, mut v: u32) {
    let mut stack = [0u8; 5];
    let mut n = 0;
    loop {
        stack[n] = (v & 0x7f) as u8;
        n += 1;
        v >>= 7;
        if v == 0 {
            break;
        }
    }
    for i in (0..n).rev() {
        buf.push(if i > 0 { stack[i] | 0x80 } else { stack[i] });
    }
}

/// Encode time-ordered events.
pub fn smf_bytes(events: &[MidiEvent]) -> Result<Vec<u8>, MidiError> {
    let mut track = Vec::new();
    // tempo meta at time 0
    track.extend([0x00, 0xff, 0x51, 0x03]);
    track.extend(&TEMPO_US.to_be_bytes()[1..]);

    let mut prev_t = 0.0f64;
    let mut prev_tick = 0u64;
    for e in events {
        e.validate()?;
        if e.t < prev_t {
            return Err(MidiError::Ordering {
                previous: prev_t,
                current: e.t,
            });
        }
        prev_t = e.t;
        let tick = (e.t * TICKS_PER_SECOND).round() as u64;
        let delta = u32::try_from(tick - prev_tick)
            .ok()
            .filter(|d| *d < 1 << 28)
            .ok_or_else(|| MidiError::Invalid(format!("delta too large at {}", e.t)))?;
        push_vlq(&mut track, delta);
        prev_tick = tick;
        let status = match e.kind {
            MidiKind::NoteOn => 0x90,
            MidiKind::NoteOff => 0x80,
        } | e.channel;
        track.extend([status, e.pitch, e.velocity]);
    }
    track.extend([0x00, 0xff, 0x2f, 0x00]);

    let mut out = Vec::with_capacity(track.len() + 22);
    out.extend(b"MThd");
    out.extend(6u32.to_be_bytes());
    out.extend(0u16.to_be_bytes()); // format 0
    out.extend(1u16.to_be_bytes()); // one track
    out.extend(SMF_DIVISION.to_be_bytes());
    out.extend(b"MTrk");
    out.extend((track.len() as u32).to_be_bytes());
    out.extend(track);
    Ok(out)
}

pub fn write_smf(events: &[MidiEvent], path: &Path) -> Result<(), MidiError> {
    let bytes = smf_bytes(events)?;
    fs::write(path, bytes)?;
    Ok(())
}

pub fn read_smf(path: &Path) -> Result<Vec<MidiEvent>, MidiError> {
    read_smf_bytes(&fs::read(path)?)
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], MidiError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|e| *e <= self.data.len())
            .ok_or_else(|| MidiError::Malformed(format!("truncated at byte {}", self.pos)))?;
        let s = &self.data[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, MidiError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, MidiError> {
        let b = self.take(2)?;
        Ok(u16::from_be_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32, MidiError> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn vlq(&mut self) -> Result<u32, MidiError> {
        let mut v = 0u32;
        for _ in 0..4 {
            let b = self.u8()?;
            v = (v << 7) | u32::from(b & 0x7f);
            if b & 0x80 == 0 {
                return Ok(v);
            }
        }
        Err(MidiError::Malformed(
            "variable-length quantity over 4 bytes".into(),
        ))
    }

    fn done(&self) -> bool {
        self.pos >= self.data.len()
    }
}

/// Decode note events from a format 0 or 1 file with ticks-per-quarter
/// division. Tempo changes are honoured; NoteOn with velocity 0 reads as
/// NoteOff. Other messages are skipped.
pub fn read_smf_bytes(data: &[u8]) -> Result<Vec<MidiEvent>, MidiError> {
    let mut c = Cursor { data, pos: 0 };
    if c.take(4)? != b"MThd" {
        return Err(MidiError::Malformed("missing MThd".into()));
    }
    let header_len = c.u32()? as usize;
    if header_len < 6 {
        return Err(MidiError::Malformed("short header".into()));
    }
    let format = c.u16()?;
    let ntracks = c.u16()?;
    let division = c.u16()?;
    c.take(header_len - 6)?;
    if format > 1 {
        return Err(MidiError::Malformed(format!("unsupported format {format}")));
    }
    if division & 0x8000 != 0 || division == 0 {
        return Err(MidiError::Malformed("SMPTE division unsupported".into()));
    }

    // (tick, order, kind) where kind is either a note or a tempo change
    enum Item {
        Note(MidiKind, u8, u8, u8),
        Tempo(u32),
    }
    let mut items: Vec<(u64, usize, Item)> = Vec::new();
    let mut seq = 0usize;
    for _ in 0..ntracks {
        if c.done() {
            break;
        }
        let id = c.take(4)?;
        let len = c.u32()? as usize;
        let body = c.take(len)?;
        if id != b"MTrk" {
            continue;
        }
        let mut t = Cursor { data: body, pos: 0 };
        let mut tick = 0u64;
        let mut running: Option<u8> = None;
        while !t.done() {
            tick += u64::from(t.vlq()?);
            let mut status = t.u8()?;
            let first_data = if status < 0x80 {
                let rs = running
                    .ok_or_else(|| MidiError::Malformed("data byte without status".into()))?;
                let d = status;
                status = rs;
                Some(d)
            } else {
                None
            };
            match status {
                0xff => {
                    let kind = t.u8()?;
                    let len = t.vlq()? as usize;
                    let payload = t.take(len)?;
                    if kind == 0x51 && len == 3 {
                        let us = u32::from_be_bytes([0, payload[0], payload[1], payload[2]]);
                        items.push((tick, seq, Item::Tempo(us)));
                        seq += 1;
                    }
                    if kind == 0x2f {
                        break;
                    }
                }
                0xf0 | 0xf7 => {
                    let len = t.vlq()? as usize;
                    t.take(len)?;
                }
                0x80..=0xef => {
                    running = Some(status);
                    let d1 = match first_data {
                        Some(d) => d,
                        None => t.u8()?,
                    };
                    let hi = status & 0xf0;
                    let d2 = if matches!(hi, 0xc0 | 0xd0) {
                        0
                    } else {
                        t.u8()?
                    };
                    let ch = status & 0x0f;
                    let note = match hi {
                        0x90 if d2 > 0 => Some(MidiKind::NoteOn),
                        0x90 | 0x80 => Some(MidiKind::NoteOff),
                        _ => None,
                    };
                    if let Some(kind) = note {
                        items.push((tick, seq, Item::Note(kind, ch, d1, d2)));
                        seq += 1;
                    }
                }
                other => {
                    return Err(MidiError::Malformed(format!(
                        "unexpected status {other:#x}"
                    )))
                }
            }
        }
    }
    items.sort_by_key(|(tick, seq, _)| (*tick, *seq));

    let mut out = Vec::new();
    let mut tempo = f64::from(TEMPO_US);
    let mut seconds = 0.0;
    let mut last_tick = 0u64;
    for (tick, _, item) in items {
        seconds += (tick - last_tick) as f64 * tempo / 1e6 / f64::from(division);
        last_tick = tick;
        match item {
            Item::Tempo(us) => tempo = f64::from(us),
            Item::Note(kind, channel, pitch, velocity) => out.push(MidiEvent {
                t: seconds,
                kind,
                channel,
                pitch,
                velocity: if kind == MidiKind::NoteOff {
                    0
                } else {
                    velocity
                },
            }),
        }
    }
    Ok(out)
}
