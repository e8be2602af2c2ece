//! Token-level automaton for the continuation being generated.
//!
//! The state starts right after the fixed context and only ever permits
//! tokens that keep the whole sequence valid and finishable.

use std::collections::BTreeSet;

use crate::codec::BarCursor;
use crate::piece::Instrument;
use crate::vocab::{Token, TokenId};
use crate::{BAR_LEN, VOCAB_SIZE};

/// Constraints on one new track.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackSlot {
    pub allowed: BTreeSet<Instrument>,
    pub density: Option<u8>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    TrackStart,
    Instrument,
    Density,
    BarOrTrackEnd,
    InBar,
    FillStart,
    InFill,
    Done,
}

#[derive(Debug, Clone)]
enum Target {
    Tracks { slots: Vec<TrackSlot>, max_bars: usize },
    Fills { count: usize },
}

#[derive(Debug, Clone)]
pub struct GrammarState {
    phase: Phase,
    target: Target,
    cursor: BarCursor,
    /// Bars every track must have; fixed by the first track when the base is empty.
    n_bars: Option<usize>,
    bars_in_track: usize,
    /// New TRACK_END or FILL_END tokens so far.
    completed: usize,
}

impl GrammarState {
    /// After a MultiTrack context (which ends in PIECE_START or TRACK_END).
    pub fn for_tracks(slots: Vec<TrackSlot>, n_bars: Option<usize>, max_bars: usize) -> Self {
        let phase = if slots.is_empty() { Phase::Done } else { Phase::TrackStart };
        GrammarState {
            phase,
            target: Target::Tracks { slots, max_bars: max_bars.max(1) },
            cursor: BarCursor::default(),
            n_bars,
            bars_in_track: 0,
            completed: 0,
        }
    }

    /// After a BarFill context with `count` placeholders.
    pub fn for_fills(count: usize) -> Self {
        GrammarState {
            phase: if count == 0 { Phase::Done } else { Phase::FillStart },
            target: Target::Fills { count },
            cursor: BarCursor::default(),
            n_bars: None,
            bars_in_track: 0,
            completed: 0,
        }
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn is_done(&self) -> bool {
        self.phase == Phase::Done
    }

    /// New TRACK_END (track mode) or FILL_END (fill mode) tokens emitted.
    pub fn completed(&self) -> usize {
        self.completed
    }

    pub fn n_bars(&self) -> Option<usize> {
        self.n_bars
    }

    fn slot(&self) -> Option<&TrackSlot> {
        match &self.target {
            Target::Tracks { slots, .. } => slots.get(self.completed),
            Target::Fills { .. } => None,
        }
    }

    pub fn allows(&self, token: Token) -> bool {
        match (self.phase, token) {
            (Phase::TrackStart, Token::TrackStart) => true,
            (Phase::Instrument, Token::Instrument(i)) => self.slot().is_some_and(|s| s.allowed.contains(&i)),
            (Phase::Density, Token::Density(d)) => self.slot().is_some_and(|s| s.density.is_none_or(|f| f == d)),
            (Phase::BarOrTrackEnd, Token::BarStart) => {
                let limit = match (&self.target, self.n_bars) {
                    (_, Some(n)) => n,
                    (Target::Tracks { max_bars, .. }, None) => *max_bars,
                    (Target::Fills { .. }, None) => 0,
                };
                self.bars_in_track < limit
            }
            (Phase::BarOrTrackEnd, Token::TrackEnd) => match self.n_bars {
                Some(n) => self.bars_in_track == n,
                None => self.bars_in_track >= 1,
            },
            (Phase::FillStart, Token::FillStart) => true,
            (Phase::InBar, Token::BarEnd) | (Phase::InFill, Token::FillEnd) => self.cursor.can_end(),
            (Phase::InBar | Phase::InFill, Token::NoteOn(p)) => self.cursor.can_open(p),
            (Phase::InBar | Phase::InFill, Token::NoteOff(p)) => self.cursor.can_close(p),
            (Phase::InBar | Phase::InFill, Token::TimeShift(n)) => self.cursor.can_shift(n),
            _ => false,
        }
    }

    /// Boolean mask over the vocabulary.
    pub fn mask(&self) -> Vec<bool> {
        let mut m = vec![false; VOCAB_SIZE];
        match self.phase {
            Phase::InBar | Phase::InFill => {
                for p in 0..128u8 {
                    m[Token::NoteOn(p).id() as usize] = self.cursor.can_open(p);
                    m[Token::NoteOff(p).id() as usize] = self.cursor.can_close(p);
                }
                for n in 1..=BAR_LEN {
                    m[Token::TimeShift(n).id() as usize] = self.cursor.can_shift(n);
                }
                let end = if self.phase == Phase::InBar { Token::BarEnd } else { Token::FillEnd };
                m[end.id() as usize] = self.cursor.can_end();
            }
            Phase::Done => {}
            _ => {
                for t in Token::all() {
                    m[t.id() as usize] = self.allows(t);
                }
            }
        }
        m
    }

    /// Advances by a token the mask permits; anything else is a bug in the caller.
    pub fn advance(&mut self, token: Token) -> Result<(), String> {
        if !self.allows(token) {
            return Err(format!("{token} is not permitted in phase {:?}", self.phase));
        }
        match token {
            Token::TrackStart => self.phase = Phase::Instrument,
            Token::Instrument(_) => self.phase = Phase::Density,
            Token::Density(_) => {
                self.bars_in_track = 0;
                self.phase = Phase::BarOrTrackEnd;
            }
            Token::BarStart => {
                self.cursor = BarCursor::default();
                self.phase = Phase::InBar;
            }
            Token::FillStart => {
                self.cursor = BarCursor::default();
                self.phase = Phase::InFill;
            }
            Token::BarEnd => {
                self.bars_in_track += 1;
                self.phase = Phase::BarOrTrackEnd;
            }
            Token::TrackEnd => {
                self.n_bars.get_or_insert(self.bars_in_track);
                self.completed += 1;
                let Target::Tracks { slots, .. } = &self.target else { unreachable!("allowed") };
                self.phase = if self.completed == slots.len() { Phase::Done } else { Phase::TrackStart };
            }
            Token::FillEnd => {
                self.completed += 1;
                let Target::Fills { count } = self.target else { unreachable!("allowed") };
                self.phase = if self.completed == count { Phase::Done } else { Phase::FillStart };
            }
            Token::NoteOn(_) | Token::NoteOff(_) | Token::TimeShift(_) => {
                self.cursor.apply(token).map_err(str::to_string)?;
            }
            _ => unreachable!("allows() rejects other tokens"),
        }
        Ok(())
    }

    pub fn advance_id(&mut self, id: TokenId) -> Result<(), String> {
        let token = Token::from_id(id).ok_or_else(|| format!("token id {id} outside the vocabulary"))?;
        self.advance(token)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn slot(i: u8) -> TrackSlot {
        TrackSlot { allowed: [Instrument::Program(i)].into(), density: Some(4) }
    }

    #[test]
    fn track_header_is_constrained() {
        let mut g = GrammarState::for_tracks(vec![slot(30)], Some(2), 16);
        let allowed = |g: &GrammarState| -> Vec<Token> { Token::all().filter(|t| g.mask()[t.id() as usize]).collect() };
        assert_eq!(allowed(&g), vec![Token::TrackStart]);
        g.advance(Token::TrackStart).unwrap();
        assert_eq!(allowed(&g), vec![Token::Instrument(Instrument::Program(30))]);
        g.advance(Token::Instrument(Instrument::Program(30))).unwrap();
        assert_eq!(allowed(&g), vec![Token::Density(4)]);
        g.advance(Token::Density(4)).unwrap();
        assert_eq!(allowed(&g), vec![Token::BarStart]);
    }

    #[test]
    fn bar_count_is_enforced() {
        let mut g = GrammarState::for_tracks(vec![slot(0), slot(1)], None, 3);
        for t in [Token::TrackStart, Token::Instrument(Instrument::Program(0)), Token::Density(4)] {
            g.advance(t).unwrap();
        }
        assert!(!g.allows(Token::TrackEnd));
        for _ in 0..3 {
            g.advance(Token::BarStart).unwrap();
            assert!(!g.allows(Token::BarEnd));
            g.advance(Token::TimeShift(48)).unwrap();
            assert!(g.mask()[Token::BarEnd.id() as usize]);
            g.advance(Token::BarEnd).unwrap();
        }
        assert!(!g.allows(Token::BarStart));
        g.advance(Token::TrackEnd).unwrap();
        assert_eq!(g.n_bars(), Some(3));
        assert_eq!(g.completed(), 1);
        assert!(!g.is_done());
    }

    #[test]
    fn fill_mode_counts_fills() {
        let mut g = GrammarState::for_fills(1);
        assert!(g.allows(Token::FillStart) && !g.allows(Token::TrackStart));
        g.advance(Token::FillStart).unwrap();
        g.advance(Token::NoteOn(60)).unwrap();
        assert!(!g.allows(Token::NoteOff(60)));
        g.advance(Token::TimeShift(48)).unwrap();
        assert!(!g.allows(Token::TimeShift(1)));
        assert!(g.allows(Token::NoteOff(60)) && g.allows(Token::FillEnd) && !g.allows(Token::BarEnd));
        g.advance(Token::FillEnd).unwrap();
        assert!(g.is_done());
        assert!(g.mask().iter().all(|&m| !m));
    }
}
