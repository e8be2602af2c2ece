use super::ir::{MidiFileIR, MidiMessage, RawNote, RawTrack};
use super::MidiError;
use crate::piece::{Bar, NoteEvent, QuantizedTrack};
use crate::{BAR_LEN, SUBDIVISIONS_PER_BEAT};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BarSpan {
    pub start_tick: u64,
    pub len_ticks: u64,
    /// True for complete 4/4 bars.
    pub quadruple: bool,
}

impl BarSpan {
    pub fn end_tick(&self) -> u64 {
        self.start_tick + self.len_ticks
    }
}

/// Bar layout of a file derived from its time-signature messages.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BarMap {
    bars: Vec<BarSpan>,
    /// For each bar, its index among the 4/4 bars (if 4/4).
    compact: Vec<Option<usize>>,
}

impl BarMap {
    pub fn new(bars: Vec<BarSpan>) -> Self {
        let mut next = 0;
        let compact = bars
            .iter()
            .map(|b| {
                b.quadruple.then(|| {
                    next += 1;
                    next - 1
                })
            })
            .collect();
        BarMap { bars, compact }
    }

    /// `n` consecutive 4/4 bars.
    pub fn uniform(ticks_per_beat: u16, n: usize) -> Self {
        let len = u64::from(ticks_per_beat) * 4;
        BarMap::new(
            (0..n)
                .map(|i| BarSpan { start_tick: i as u64 * len, len_ticks: len, quadruple: true })
                .collect(),
        )
    }

    /// Lays bars out from tick 0 until `end_tick` is covered. Meter defaults
    /// to 4/4; a time signature that lands mid-bar cuts that bar short, and
    /// the cut bar is never 4/4.
    pub fn from_ir(ir: &MidiFileIR, end_tick: u64) -> Self {
        let tpb = u64::from(ir.ticks_per_beat);
        let mut sigs: Vec<(u64, u8, u8)> = ir
            .track_chunks
            .iter()
            .flatten()
            .filter_map(|m| match *m {
                MidiMessage::TimeSignature { tick, numerator, denominator_pow2 } => {
                    Some((tick, numerator, denominator_pow2))
                }
                _ => None,
            })
            .collect();
        sigs.sort_by_key(|s| s.0);

        let bar_len = |num: u8, pow2: u8| -> u64 {
            let den = 1u64.checked_shl(u32::from(pow2)).unwrap_or(u64::MAX);
            (u64::from(num) * tpb * 4 / den).max(1)
        };
        let mut current = (4u8, 2u8);
        let mut next_sig = 0;
        let mut start = 0u64;
        let mut bars = Vec::new();
        while start < end_tick {
            while next_sig < sigs.len() && sigs[next_sig].0 <= start {
                current = (sigs[next_sig].1, sigs[next_sig].2);
                next_sig += 1;
            }
            let mut len = bar_len(current.0, current.1);
            let mut quadruple = current == (4, 2);
            if let Some(&(tick, ..)) = sigs.get(next_sig) {
                if tick < start + len {
                    len = tick - start;
                    quadruple = false;
                }
            }
            bars.push(BarSpan { start_tick: start, len_ticks: len, quadruple });
            start += len;
        }
        BarMap::new(bars)
    }

    pub fn bars(&self) -> &[BarSpan] {
        &self.bars
    }

    pub fn quadruple_count(&self) -> usize {
        self.bars.iter().filter(|b| b.quadruple).count()
    }

    /// Index of the bar containing `tick`, if inside the map.
    pub fn bar_at(&self, tick: u64) -> Option<usize> {
        let i = self.bars.partition_point(|b| b.start_tick <= tick);
        (i > 0 && tick < self.bars[i - 1].end_tick()).then(|| i - 1)
    }

    fn is_quadruple(&self, bar: usize) -> bool {
        self.bars.get(bar).is_some_and(|b| b.quadruple)
    }
}

/// `round(num / den)` with halves rounded up, for nonnegative values.
fn round_half_up(num: u64, den: u64) -> u64 {
    (2 * num + den) / (2 * den)
}

/// Drops notes starting outside 4/4 bars and clips notes at the end of the
/// run of consecutive 4/4 bars they start in.
pub fn restrict_to_quadruple(raw: &RawTrack, map: &BarMap) -> RawTrack {
    let notes = raw
        .notes
        .iter()
        .filter_map(|n| {
            let bar = map.bar_at(n.onset_tick)?;
            if !map.is_quadruple(bar) {
                return None;
            }
            let mut run_end = bar;
            while map.is_quadruple(run_end + 1) {
                run_end += 1;
            }
            let limit = map.bars[run_end].end_tick();
            Some(RawNote { offset_tick: n.offset_tick.min(limit), ..*n })
        })
        .collect();
    RawTrack { notes, ..raw.clone() }
}

/// Snaps a track onto the 12-per-beat grid of the map's 4/4 bars.
///
/// Bars are indexed among the 4/4 bars only. Positions round half up; a note
/// collapsing to zero length gets one subdivision. Overlapping notes of equal
/// pitch are truncated at the later onset, and notes crossing bar lines are
/// split into per-bar segments.
pub fn quantize(raw: &RawTrack, ticks_per_beat: u16, map: &BarMap) -> Result<QuantizedTrack, MidiError> {
    let tpb = u64::from(ticks_per_beat);
    let sub = u64::from(SUBDIVISIONS_PER_BEAT);
    let bar_len = u64::from(BAR_LEN);

    // Absolute grid position of `tick`, which lies in bar `bar` or at its end.
    let grid = |bar: usize, tick: u64| -> u64 {
        let span = map.bars[bar];
        let compact = map.compact[bar].expect("4/4 bar") as u64;
        compact * bar_len + round_half_up((tick - span.start_tick) * sub, tpb).min(bar_len)
    };

    let mut notes: Vec<(u8, u64, u64)> = Vec::with_capacity(raw.notes.len());
    for n in &raw.notes {
        let first = map.bar_at(n.onset_tick).ok_or(MidiError::OutsideBarMap(n.onset_tick))?;
        let last = map
            .bar_at(n.offset_tick.saturating_sub(1).max(n.onset_tick))
            .ok_or(MidiError::OutsideBarMap(n.offset_tick))?;
        if let Some(bad) = (first..=last).find(|&b| !map.is_quadruple(b)) {
            return Err(MidiError::NonQuadrupleMeter { bar: bad });
        }
        let mut onset = grid(first, n.onset_tick);
        // Rounding onto the bar line is only allowed when the next bar
        // continues the 4/4 grid.
        if onset % bar_len == 0 && onset > grid(first, map.bars[first].start_tick) && !map.is_quadruple(first + 1) {
            onset -= 1;
        }
        let mut offset = grid(last, n.offset_tick.min(map.bars[last].end_tick()));
        if offset <= onset {
            offset = onset + 1;
        }
        notes.push((n.pitch, onset, offset));
    }

    // Retrigger: the earlier of two overlapping equal-pitch notes ends where
    // the later one starts; identical onsets merge.
    notes.sort_unstable();
    let mut merged: Vec<(u8, u64, u64)> = Vec::with_capacity(notes.len());
    for n in notes {
        match merged.last_mut() {
            Some(prev) if prev.0 == n.0 && prev.1 == n.1 => prev.2 = prev.2.max(n.2),
            Some(prev) if prev.0 == n.0 && n.1 < prev.2 => {
                prev.2 = n.1;
                merged.push(n);
            }
            _ => merged.push(n),
        }
    }

    let needed = merged.iter().map(|n| n.2.div_ceil(bar_len) as usize).max().unwrap_or(0);
    let mut bars = vec![Vec::new(); needed.max(map.quadruple_count())];
    for (pitch, onset, offset) in merged {
        let mut start = onset;
        while start < offset {
            let bar = start / bar_len;
            let end = offset.min((bar + 1) * bar_len);
            bars[bar as usize].push(NoteEvent::new(
                pitch,
                (start - bar * bar_len) as u8,
                (end - bar * bar_len) as u8,
            ));
            start = end;
        }
    }
    Ok(QuantizedTrack::new(raw.instrument, bars.into_iter().map(Bar::new).collect()))
}
