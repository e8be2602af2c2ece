//! MultiTrack and BarFill encodings of a [`Piece`].
//!
//! A MultiTrack sequence is
//!
//! ```text
//! PIECE_START
//!   (TRACK_START INSTRUMENT DENSITY_LEVEL (BAR_START event* BAR_END)+ TRACK_END)+
//! ```
//!
//! where each bar's `TIME_SHIFT`s add up to exactly 48. A BarFill sequence
//! replaces selected bars by `FILL_PLACEHOLDER` and appends their bodies,
//! in traversal order, as `FILL_START event* FILL_END` after the last track.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::piece::{Bar, Instrument, NoteEvent, Piece, PieceError, QuantizedTrack};
use crate::vocab::{Token, TokenId};
use crate::{BAR_LEN, DENSITY_LEVELS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SequenceKind {
    MultiTrack,
    BarFill,
}

impl fmt::Display for SequenceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SequenceKind::MultiTrack => "multitrack",
            SequenceKind::BarFill => "barfill",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TokenSequence {
    pub kind: SequenceKind,
    pub tokens: Vec<Token>,
}

impl TokenSequence {
    pub fn new(kind: SequenceKind, tokens: Vec<Token>) -> Self {
        TokenSequence { kind, tokens }
    }

    /// Infers the kind from the presence of fill tokens.
    pub fn from_tokens(tokens: Vec<Token>) -> Self {
        let fill = tokens
            .iter()
            .any(|t| matches!(t, Token::FillPlaceholder | Token::FillStart | Token::FillEnd));
        let kind = if fill { SequenceKind::BarFill } else { SequenceKind::MultiTrack };
        TokenSequence { kind, tokens }
    }

    pub fn from_ids(kind: SequenceKind, ids: &[TokenId]) -> Result<Self, CodecError> {
        let tokens = ids
            .iter()
            .enumerate()
            .map(|(i, &id)| {
                Token::from_id(id).ok_or(CodecError::InvalidSequence {
                    position: i,
                    reason: format!("unknown token id {id}"),
                })
            })
            .collect::<Result<_, _>>()?;
        Ok(TokenSequence { kind, tokens })
    }

    pub fn ids(&self) -> Vec<TokenId> {
        self.tokens.iter().map(|t| t.id()).collect()
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Whitespace-separated mnemonics; each track and fill on its own line.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for t in &self.tokens {
            out.push_str(&t.to_string());
            out.push(if matches!(t, Token::PieceStart | Token::TrackEnd | Token::FillEnd) { '\n' } else { ' ' });
        }
        if out.ends_with(' ') {
            out.pop();
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, CodecError> {
        let tokens = text
            .split_whitespace()
            .enumerate()
            .map(|(i, word)| {
                word.parse::<Token>()
                    .map_err(|e| CodecError::InvalidSequence { position: i, reason: e.to_string() })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(TokenSequence::from_tokens(tokens))
    }

    pub fn to_json(&self) -> SequenceJson {
        SequenceJson { version: SEQUENCE_JSON_VERSION, kind: self.kind, ids: self.ids() }
    }
}

pub const SEQUENCE_JSON_VERSION: u32 = 1;

/// JSON container for a sequence: `{"version": 1, "kind": "multitrack", "ids": [...]}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SequenceJson {
    pub version: u32,
    pub kind: SequenceKind,
    pub ids: Vec<TokenId>,
}

impl TryFrom<SequenceJson> for TokenSequence {
    type Error = CodecError;

    fn try_from(value: SequenceJson) -> Result<Self, Self::Error> {
        if value.version != SEQUENCE_JSON_VERSION {
            return Err(CodecError::InvalidSequence {
                position: 0,
                reason: format!("unsupported sequence version {}", value.version),
            });
        }
        TokenSequence::from_ids(value.kind, &value.ids)
    }
}

/// Bars chosen for inpainting, as `(track, bar)` pairs.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BarSelection(pub BTreeSet<(usize, usize)>);

impl BarSelection {
    pub fn new(cells: impl IntoIterator<Item = (usize, usize)>) -> Self {
        BarSelection(cells.into_iter().collect())
    }

    pub fn contains(&self, track: usize, bar: usize) -> bool {
        self.0.contains(&(track, bar))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.0.iter().copied()
    }

    pub fn check(&self, piece: &Piece) -> Result<(), CodecError> {
        match self.iter().find(|&(t, b)| t >= piece.n_tracks() || b >= piece.n_bars()) {
            Some((track, bar)) => Err(CodecError::InvalidSelection { track, bar }),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CodecError {
    #[error("invalid piece: {0}")]
    InvalidPiece(#[from] PieceError),
    #[error("expected {expected} density levels, got {found}")]
    DensityCount { expected: usize, found: usize },
    #[error("density level {0} out of range 0-9")]
    InvalidDensity(u8),
    #[error("selected bar ({track}, {bar}) is outside the piece")]
    InvalidSelection { track: usize, bar: usize },
    #[error("{placeholders} fill placeholders but {fills} fill groups")]
    FillCountMismatch { placeholders: usize, fills: usize },
    #[error("invalid sequence at token {position}: {reason}")]
    InvalidSequence { position: usize, reason: String },
}

/// Time and open-note state inside one bar (or fill) body.
///
/// Shared by validation, decoding and the generation grammar so that all
/// three agree on what a legal bar interior is.
#[derive(Debug, Clone)]
pub struct BarCursor {
    time: u8,
    /// Onset of each currently sounding pitch.
    open: [Option<u8>; 128],
    events: Vec<NoteEvent>,
}

impl Default for BarCursor {
    fn default() -> Self {
        BarCursor { time: 0, open: [None; 128], events: Vec::new() }
    }
}

impl BarCursor {
    pub fn time(&self) -> u8 {
        self.time
    }

    pub fn is_open(&self, pitch: u8) -> bool {
        self.open[pitch as usize].is_some()
    }

    /// Whether `NOTE_OFF(pitch)` is legal now.
    pub fn can_close(&self, pitch: u8) -> bool {
        self.open[pitch as usize].is_some_and(|onset| onset < self.time)
    }

    pub fn can_open(&self, pitch: u8) -> bool {
        self.time < BAR_LEN && self.open[pitch as usize].is_none()
    }

    pub fn can_shift(&self, n: u8) -> bool {
        n >= 1 && self.time + n <= BAR_LEN
    }

    pub fn can_end(&self) -> bool {
        self.time == BAR_LEN
    }

    /// Applies an in-bar event token, or explains why it is illegal.
    pub fn apply(&mut self, token: Token) -> Result<(), &'static str> {
        match token {
            Token::NoteOn(p) => {
                if self.time >= BAR_LEN {
                    return Err("NOTE_ON at bar end");
                }
                if self.is_open(p) {
                    return Err("NOTE_ON for an already sounding pitch");
                }
                self.open[p as usize] = Some(self.time);
            }
            Token::NoteOff(p) => match self.open[p as usize] {
                None => return Err("unmatched NOTE_OFF"),
                Some(onset) if onset >= self.time => return Err("zero-length note"),
                Some(onset) => {
                    self.events.push(NoteEvent::new(p, onset, self.time));
                    self.open[p as usize] = None;
                }
            },
            Token::TimeShift(n) => {
                if !self.can_shift(n) {
                    return Err("bar overfull");
                }
                self.time += n;
            }
            _ => return Err("structural token inside a bar"),
        }
        Ok(())
    }

    /// Closes the bar; notes still sounding end at 48.
    pub fn finish(mut self) -> Result<Bar, &'static str> {
        if self.time != BAR_LEN {
            return Err("bar underfull");
        }
        for (pitch, onset) in self.open.iter().enumerate() {
            if let Some(onset) = *onset {
                self.events.push(NoteEvent::new(pitch as u8, onset, BAR_LEN));
            }
        }
        Ok(Bar::new(self.events))
    }
}

fn check_densities(piece: &Piece, densities: &[u8]) -> Result<(), CodecError> {
    if densities.len() != piece.n_tracks() {
        return Err(CodecError::DensityCount { expected: piece.n_tracks(), found: densities.len() });
    }
    if let Some(&d) = densities.iter().find(|&&d| d >= DENSITY_LEVELS) {
        return Err(CodecError::InvalidDensity(d));
    }
    Ok(())
}

/// Emits a bar body (without delimiters) in canonical order: at each time
/// step all NOTE_OFFs then all NOTE_ONs, each by ascending pitch, followed
/// by one TIME_SHIFT to the next change; the last shift pads to 48.
pub fn encode_bar_body(bar: &Bar, out: &mut Vec<Token>) {
    // (time, 0 = off / 1 = on, pitch)
    let mut changes: Vec<(u8, u8, u8)> = Vec::with_capacity(bar.events.len() * 2);
    for e in &bar.events {
        changes.push((e.onset, 1, e.pitch));
        changes.push((e.offset, 0, e.pitch));
    }
    changes.sort_unstable();
    let mut cursor = 0u8;
    for (time, kind, pitch) in changes {
        if time > cursor {
            out.push(Token::TimeShift(time - cursor));
            cursor = time;
        }
        out.push(if kind == 0 { Token::NoteOff(pitch) } else { Token::NoteOn(pitch) });
    }
    if cursor < BAR_LEN {
        out.push(Token::TimeShift(BAR_LEN - cursor));
    }
}

fn encode_track_header(track: &QuantizedTrack, density: u8, out: &mut Vec<Token>) {
    out.push(Token::TrackStart);
    out.push(Token::Instrument(track.instrument));
    out.push(Token::Density(density));
}

/// Encodes a piece (possibly without tracks) in the MultiTrack form.
pub fn encode_multitrack(piece: &Piece, densities: &[u8]) -> Result<TokenSequence, CodecError> {
    Ok(TokenSequence { kind: SequenceKind::MultiTrack, ..encode_barfill(piece, &BarSelection::default(), densities)? })
}

/// Encodes a piece in the BarFill form. With an empty selection the tokens
/// equal the MultiTrack encoding.
pub fn encode_barfill(piece: &Piece, selection: &BarSelection, densities: &[u8]) -> Result<TokenSequence, CodecError> {
    piece.check()?;
    check_densities(piece, densities)?;
    selection.check(piece)?;
    let mut out = vec![Token::PieceStart];
    let mut fills = Vec::new();
    for (t, (track, &density)) in piece.tracks().iter().zip(densities).enumerate() {
        encode_track_header(track, density, &mut out);
        for (b, bar) in track.bars.iter().enumerate() {
            if selection.contains(t, b) {
                out.push(Token::FillPlaceholder);
                fills.push(bar);
            } else {
                out.push(Token::BarStart);
                encode_bar_body(bar, &mut out);
                out.push(Token::BarEnd);
            }
        }
        out.push(Token::TrackEnd);
    }
    for bar in fills {
        out.push(Token::FillStart);
        encode_bar_body(bar, &mut out);
        out.push(Token::FillEnd);
    }
    Ok(TokenSequence { kind: SequenceKind::BarFill, tokens: out })
}

/// Moves each fill body back into its placeholder.
pub fn reinsert_fills(seq: &TokenSequence) -> Result<TokenSequence, CodecError> {
    let tokens = &seq.tokens;
    let split = tokens.iter().rposition(|t| *t == Token::TrackEnd).map_or(tokens.len(), |i| i + 1);
    let (body, suffix) = tokens.split_at(split);

    let mut fills: Vec<&[Token]> = Vec::new();
    let mut i = 0;
    while i < suffix.len() {
        let pos = body.len() + i;
        if suffix[i] != Token::FillStart {
            return Err(CodecError::InvalidSequence { position: pos, reason: "expected FILL_START".into() });
        }
        let len = suffix[i + 1..].iter().position(|t| *t == Token::FillEnd).ok_or(
            CodecError::InvalidSequence { position: pos, reason: "FILL_START without FILL_END".into() },
        )?;
        fills.push(&suffix[i + 1..i + 1 + len]);
        i += len + 2;
    }
    let placeholders = body.iter().filter(|t| **t == Token::FillPlaceholder).count();
    if placeholders != fills.len() {
        return Err(CodecError::FillCountMismatch { placeholders, fills: fills.len() });
    }
    let mut fills = fills.into_iter();
    let mut out = Vec::with_capacity(tokens.len() + placeholders);
    for &t in body {
        if t == Token::FillPlaceholder {
            out.push(Token::BarStart);
            out.extend_from_slice(fills.next().expect("counted"));
            out.push(Token::BarEnd);
        } else {
            out.push(t);
        }
    }
    Ok(TokenSequence { kind: SequenceKind::MultiTrack, tokens: out })
}

/// A grammar violation found by [`validate`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub position: usize,
    pub reason: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "token {}: {}", self.position, self.reason)
    }
}

struct WalkTrack {
    instrument: Instrument,
    density: u8,
    /// `None` for a placeholder.
    bars: Vec<Option<Bar>>,
}

#[derive(Default)]
struct Walk {
    violations: Vec<Violation>,
    tracks: Vec<WalkTrack>,
    fills: Vec<Bar>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Expect {
    PieceStart,
    TrackStart,
    Instrument,
    Density,
    BarOrTrackEnd,
    InBar,
    InFill,
    Suffix,
}

fn walk(seq: &TokenSequence) -> Walk {
    let mut w = Walk::default();
    let mut state = Expect::PieceStart;
    let mut cursor = BarCursor::default();
    let mut bar_start = 0;
    let barfill = seq.kind == SequenceKind::BarFill;
    let violate = |w: &mut Walk, position: usize, reason: &str| {
        w.violations.push(Violation { position, reason: reason.to_string() });
    };

    for (pos, &tok) in seq.tokens.iter().enumerate() {
        if !barfill && matches!(tok, Token::FillPlaceholder | Token::FillStart | Token::FillEnd) {
            violate(&mut w, pos, "fill token in a multitrack sequence");
            continue;
        }
        match (state, tok) {
            (Expect::PieceStart, Token::PieceStart) => state = Expect::TrackStart,
            (Expect::TrackStart, Token::TrackStart) => state = Expect::Instrument,
            (Expect::Instrument, Token::Instrument(instrument)) => {
                w.tracks.push(WalkTrack { instrument, density: 0, bars: Vec::new() });
                state = Expect::Density;
            }
            (Expect::Density, Token::Density(d)) => {
                w.tracks.last_mut().expect("track").density = d;
                state = Expect::BarOrTrackEnd;
            }
            (Expect::BarOrTrackEnd, Token::BarStart) => {
                cursor = BarCursor::default();
                bar_start = pos;
                state = Expect::InBar;
            }
            (Expect::BarOrTrackEnd, Token::FillPlaceholder) => {
                w.tracks.last_mut().expect("track").bars.push(None);
            }
            (Expect::BarOrTrackEnd, Token::TrackEnd) => {
                if w.tracks.last().expect("track").bars.is_empty() {
                    violate(&mut w, pos, "track without bars");
                }
                state = Expect::TrackStart;
            }
            (Expect::InBar, Token::BarEnd) | (Expect::InFill, Token::FillEnd) => {
                let bar = match std::mem::take(&mut cursor).finish() {
                    Ok(bar) => bar,
                    Err(reason) => {
                        violate(&mut w, pos, reason);
                        Bar::default()
                    }
                };
                if state == Expect::InBar {
                    w.tracks.last_mut().expect("track").bars.push(Some(bar));
                    state = Expect::BarOrTrackEnd;
                } else {
                    w.fills.push(bar);
                    state = Expect::Suffix;
                }
            }
            (Expect::InBar | Expect::InFill, Token::NoteOn(_) | Token::NoteOff(_) | Token::TimeShift(_)) => {
                if let Err(reason) = cursor.apply(tok) {
                    violate(&mut w, pos, reason);
                }
            }
            (Expect::TrackStart | Expect::Suffix, Token::FillStart) if !w.tracks.is_empty() => {
                cursor = BarCursor::default();
                bar_start = pos;
                state = Expect::InFill;
            }
            (state, tok) => {
                let reason = match state {
                    Expect::PieceStart => "expected PIECE_START".to_string(),
                    Expect::TrackStart => format!("unexpected {tok} between tracks"),
                    Expect::Instrument => format!("expected INSTRUMENT, found {tok}"),
                    Expect::Density => format!("expected DENSITY_LEVEL, found {tok}"),
                    Expect::BarOrTrackEnd => format!("expected bar or TRACK_END, found {tok}"),
                    Expect::InBar | Expect::InFill => format!("unexpected {tok} inside a bar"),
                    Expect::Suffix => format!("expected FILL_START, found {tok}"),
                };
                violate(&mut w, pos, &reason);
            }
        }
    }

    let end = seq.tokens.len();
    match state {
        Expect::TrackStart | Expect::Suffix => {}
        Expect::InBar | Expect::InFill => violate(&mut w, bar_start, "unterminated bar"),
        _ => violate(&mut w, end, "sequence ends inside a track"),
    }
    if w.tracks.is_empty() {
        violate(&mut w, end, "no tracks");
    }
    if let Some(first) = w.tracks.first() {
        let n = first.bars.len();
        if w.tracks.iter().any(|t| t.bars.len() != n) {
            violate(&mut w, end, "tracks have unequal bar counts");
        }
    }
    let placeholders = w.tracks.iter().flat_map(|t| &t.bars).filter(|b| b.is_none()).count();
    if placeholders != w.fills.len() {
        let reason = format!("{placeholders} placeholders but {} fills", w.fills.len());
        violate(&mut w, end, &reason);
    }
    w
}

/// Checks a sequence against the grammar; an empty result means valid.
pub fn validate(seq: &TokenSequence) -> Vec<Violation> {
    walk(seq).violations
}

/// Decodes a MultiTrack sequence into a piece and per-track density levels.
pub fn decode(seq: &TokenSequence) -> Result<(Piece, Vec<u8>), CodecError> {
    if seq.kind != SequenceKind::MultiTrack {
        return Err(CodecError::InvalidSequence { position: 0, reason: "decode expects a multitrack sequence".into() });
    }
    let w = walk(seq);
    if let Some(v) = w.violations.into_iter().next() {
        return Err(CodecError::InvalidSequence { position: v.position, reason: v.reason });
    }
    let densities = w.tracks.iter().map(|t| t.density).collect();
    let tracks = w
        .tracks
        .into_iter()
        .map(|t| QuantizedTrack::new(t.instrument, t.bars.into_iter().map(|b| b.expect("multitrack")).collect()))
        .collect();
    Ok((Piece::new(tracks)?, densities))
}

/// Decodes either form; BarFill sequences have their fills reinserted first.
pub fn decode_any(seq: &TokenSequence) -> Result<(Piece, Vec<u8>), CodecError> {
    match seq.kind {
        SequenceKind::MultiTrack => decode(seq),
        SequenceKind::BarFill => decode(&reinsert_fills(seq)?),
    }
}
