//! Standard MIDI File reader (formats 0 and 1).

use super::ir::{MidiFileIR, MidiMessage, SmfFormat};
use super::MidiError;

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(data: &'a [u8]) -> Self {
        Reader { data, pos: 0 }
    }

    fn remaining(&self) -> usize {
        self.data.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], MidiError> {
        if self.remaining() < n {
            return Err(MidiError::Malformed(format!(
                "unexpected end of data at byte {} (wanted {n} more)",
                self.pos
            )));
        }
        let out = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8, MidiError> {
        Ok(self.take(1)?[0])
    }

    fn peek(&self) -> Result<u8, MidiError> {
        self.data
            .get(self.pos)
            .copied()
            .ok_or_else(|| MidiError::Malformed(format!("unexpected end of data at byte {}", self.pos)))
    }

    fn u32(&mut self) -> Result<u32, MidiError> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    /// Variable-length quantity, at most four bytes.
    fn vlq(&mut self) -> Result<u32, MidiError> {
        let mut value = 0u32;
        for _ in 0..4 {
            let b = self.u8()?;
            value = (value << 7) | u32::from(b & 0x7f);
            if b & 0x80 == 0 {
                return Ok(value);
            }
        }
        Err(MidiError::Malformed(format!("variable-length quantity too long at byte {}", self.pos)))
    }
}

/// Parses an SMF byte stream into absolute-tick messages.
///
/// Running status and delta times are resolved, and note-on messages with
/// velocity 0 are normalized to note-off.
pub fn parse_midi(bytes: &[u8]) -> Result<MidiFileIR, MidiError> {
    let mut r = Reader::new(bytes);
    if r.take(4).map_err(|_| MidiError::Malformed("missing MThd header".into()))? != b"MThd" {
        return Err(MidiError::Malformed("missing MThd header".into()));
    }
    let header_len = r.u32()? as usize;
    if header_len < 6 {
        return Err(MidiError::Malformed(format!("header chunk length {header_len} < 6")));
    }
    let header = r.take(header_len)?;
    let format = u16::from_be_bytes([header[0], header[1]]);
    let n_chunks = u16::from_be_bytes([header[2], header[3]]);
    let division = u16::from_be_bytes([header[4], header[5]]);
    let format = match format {
        0 => SmfFormat::SingleTrack,
        1 => SmfFormat::MultiTrack,
        2 => return Err(MidiError::UnsupportedFormat(2)),
        other => return Err(MidiError::Malformed(format!("unknown SMF format {other}"))),
    };
    if division & 0x8000 != 0 {
        return Err(MidiError::UnsupportedDivision);
    }
    if division == 0 {
        return Err(MidiError::Malformed("zero ticks per beat".into()));
    }

    let mut track_chunks = Vec::with_capacity(n_chunks as usize);
    while track_chunks.len() < n_chunks as usize {
        if r.remaining() == 0 {
            // Some writers overstate the chunk count; keep what is there.
            break;
        }
        let id = r.take(4)?;
        let len = r.u32()? as usize;
        if len > r.remaining() {
            return Err(MidiError::Malformed(format!(
                "chunk length {len} exceeds remaining {} bytes",
                r.remaining()
            )));
        }
        let body = r.take(len)?;
        if id == b"MTrk" {
            track_chunks.push(parse_track(body)?);
        }
    }
    if track_chunks.is_empty() {
        return Err(MidiError::Malformed("no track chunks".into()));
    }
    if format == SmfFormat::SingleTrack && track_chunks.len() != 1 {
        return Err(MidiError::Malformed(format!(
            "format 0 file with {} track chunks",
            track_chunks.len()
        )));
    }
    Ok(MidiFileIR { format, ticks_per_beat: division, track_chunks })
}

fn parse_track(body: &[u8]) -> Result<Vec<MidiMessage>, MidiError> {
    let mut r = Reader::new(body);
    let mut tick = 0u64;
    let mut running: Option<u8> = None;
    let mut out = Vec::new();
    while r.remaining() > 0 {
        tick += u64::from(r.vlq()?);
        let status = if r.peek()? & 0x80 != 0 {
            r.u8()?
        } else {
            running.ok_or_else(|| MidiError::Malformed("data byte without running status".into()))?
        };
        match status {
            0xff => {
                running = None;
                let kind = r.u8()?;
                let len = r.vlq()? as usize;
                let data = r.take(len)?;
                match kind {
                    0x2f => {
                        out.push(MidiMessage::EndOfTrack { tick });
                        break;
                    }
                    0x51 if len == 3 => out.push(MidiMessage::Tempo {
                        tick,
                        micros_per_beat: u32::from_be_bytes([0, data[0], data[1], data[2]]),
                    }),
                    0x58 if len >= 2 => out.push(MidiMessage::TimeSignature {
                        tick,
                        numerator: data[0],
                        denominator_pow2: data[1],
                    }),
                    _ => out.push(MidiMessage::Other { tick }),
                }
            }
            0xf0 | 0xf7 => {
                running = None;
                let len = r.vlq()? as usize;
                r.take(len)?;
                out.push(MidiMessage::Other { tick });
            }
            0x80..=0xef => {
                running = Some(status);
                let channel = status & 0x0f;
                let data = |r: &mut Reader<'_>| -> Result<u8, MidiError> {
                    let b = r.u8()?;
                    if b & 0x80 != 0 {
                        return Err(MidiError::Malformed(format!("status byte {b:#x} where data expected")));
                    }
                    Ok(b)
                };
                match status & 0xf0 {
                    0x80 => {
                        let pitch = data(&mut r)?;
                        data(&mut r)?;
                        out.push(MidiMessage::NoteOff { tick, channel, pitch });
                    }
                    0x90 => {
                        let pitch = data(&mut r)?;
                        let velocity = data(&mut r)?;
                        out.push(if velocity == 0 {
                            MidiMessage::NoteOff { tick, channel, pitch }
                        } else {
                            MidiMessage::NoteOn { tick, channel, pitch, velocity }
                        });
                    }
                    0xc0 => {
                        let program = data(&mut r)?;
                        out.push(MidiMessage::ProgramChange { tick, channel, program });
                    }
                    0xd0 => {
                        data(&mut r)?;
                        out.push(MidiMessage::Other { tick });
                    }
                    _ => {
                        data(&mut r)?;
                        data(&mut r)?;
                        out.push(MidiMessage::Other { tick });
                    }
                }
            }
            other => {
                return Err(MidiError::Malformed(format!("unexpected status byte {other:#x} in track chunk")));
            }
        }
    }
    Ok(out)
}
