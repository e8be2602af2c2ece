//! The token alphabet and its stable integer ids.
//!
//! | ids       | tokens                              |
//! |-----------|-------------------------------------|
//! | 0..=7     | structural (see [`Token`])          |
//! | 8..=136   | `INSTRUMENT` programs 0–127, `DRUM` |
//! | 137..=146 | `DENSITY_LEVEL` 0–9                 |
//! | 147..=274 | `NOTE_ON` pitches 0–127             |
//! | 275..=402 | `NOTE_OFF` pitches 0–127            |
//! | 403..=450 | `TIME_SHIFT` 1–48                   |

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use sha2::{Digest, Sha256};

use crate::piece::Instrument;
use crate::{BAR_LEN, DENSITY_LEVELS};

pub type TokenId = u16;

pub const VOCAB_SIZE: usize = 451;

const INSTRUMENT_BASE: u16 = 8;
const DENSITY_BASE: u16 = INSTRUMENT_BASE + Instrument::COUNT as u16;
const NOTE_ON_BASE: u16 = DENSITY_BASE + DENSITY_LEVELS as u16;
const NOTE_OFF_BASE: u16 = NOTE_ON_BASE + 128;
const TIME_SHIFT_BASE: u16 = NOTE_OFF_BASE + 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Token {
    PieceStart,
    TrackStart,
    TrackEnd,
    BarStart,
    BarEnd,
    FillPlaceholder,
    FillStart,
    FillEnd,
    Instrument(Instrument),
    Density(u8),
    NoteOn(u8),
    NoteOff(u8),
    /// Advance time by 1–48 subdivisions.
    TimeShift(u8),
}

impl Token {
    pub fn id(self) -> TokenId {
        match self {
            Token::PieceStart => 0,
            Token::TrackStart => 1,
            Token::TrackEnd => 2,
            Token::BarStart => 3,
            Token::BarEnd => 4,
            Token::FillPlaceholder => 5,
            Token::FillStart => 6,
            Token::FillEnd => 7,
            Token::Instrument(i) => INSTRUMENT_BASE + i.index() as u16,
            Token::Density(d) => {
                debug_assert!(d < DENSITY_LEVELS);
                DENSITY_BASE + u16::from(d)
            }
            Token::NoteOn(p) => {
                debug_assert!(p < 128);
                NOTE_ON_BASE + u16::from(p)
            }
            Token::NoteOff(p) => {
                debug_assert!(p < 128);
                NOTE_OFF_BASE + u16::from(p)
            }
            Token::TimeShift(n) => {
                debug_assert!((1..=BAR_LEN).contains(&n));
                TIME_SHIFT_BASE + u16::from(n) - 1
            }
        }
    }

    pub fn from_id(id: TokenId) -> Option<Token> {
        Some(match id {
            0 => Token::PieceStart,
            1 => Token::TrackStart,
            2 => Token::TrackEnd,
            3 => Token::BarStart,
            4 => Token::BarEnd,
            5 => Token::FillPlaceholder,
            6 => Token::FillStart,
            7 => Token::FillEnd,
            id if id < DENSITY_BASE => Token::Instrument(Instrument::from_index((id - INSTRUMENT_BASE) as usize)?),
            id if id < NOTE_ON_BASE => Token::Density((id - DENSITY_BASE) as u8),
            id if id < NOTE_OFF_BASE => Token::NoteOn((id - NOTE_ON_BASE) as u8),
            id if id < TIME_SHIFT_BASE => Token::NoteOff((id - NOTE_OFF_BASE) as u8),
            id if (id as usize) < VOCAB_SIZE => Token::TimeShift((id - TIME_SHIFT_BASE + 1) as u8),
            _ => return None,
        })
    }

    /// Every token in id order.
    pub fn all() -> impl Iterator<Item = Token> {
        (0..VOCAB_SIZE as TokenId).map(|id| Token::from_id(id).expect("id in range"))
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Token::PieceStart => f.write_str("PIECE_START"),
            Token::TrackStart => f.write_str("TRACK_START"),
            Token::TrackEnd => f.write_str("TRACK_END"),
            Token::BarStart => f.write_str("BAR_START"),
            Token::BarEnd => f.write_str("BAR_END"),
            Token::FillPlaceholder => f.write_str("FILL_PLACEHOLDER"),
            Token::FillStart => f.write_str("FILL_START"),
            Token::FillEnd => f.write_str("FILL_END"),
            Token::Instrument(i) => write!(f, "INSTRUMENT:{i}"),
            Token::Density(d) => write!(f, "DENSITY_LEVEL:{d}"),
            Token::NoteOn(p) => write!(f, "NOTE_ON:{p}"),
            Token::NoteOff(p) => write!(f, "NOTE_OFF:{p}"),
            Token::TimeShift(n) => write!(f, "TIME_SHIFT:{n}"),
        }
    }
}

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
#[error("unknown token mnemonic `{0}`")]
pub struct UnknownToken(pub String);

impl FromStr for Token {
    type Err = UnknownToken;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || UnknownToken(s.to_string());
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s, None),
        };
        let num = |lo: u8, hi: u8| -> Result<u8, UnknownToken> {
            let v: u8 = arg.ok_or_else(err)?.parse().map_err(|_| err())?;
            if (lo..=hi).contains(&v) {
                Ok(v)
            } else {
                Err(err())
            }
        };
        let token = match (name, arg) {
            ("PIECE_START", None) => Token::PieceStart,
            ("TRACK_START", None) => Token::TrackStart,
            ("TRACK_END", None) => Token::TrackEnd,
            ("BAR_START", None) => Token::BarStart,
            ("BAR_END", None) => Token::BarEnd,
            ("FILL_PLACEHOLDER", None) => Token::FillPlaceholder,
            ("FILL_START", None) => Token::FillStart,
            ("FILL_END", None) => Token::FillEnd,
            ("INSTRUMENT", Some(a)) => Token::Instrument(a.parse().map_err(|_| err())?),
            ("DENSITY_LEVEL", Some(_)) => Token::Density(num(0, DENSITY_LEVELS - 1)?),
            ("NOTE_ON", Some(_)) => Token::NoteOn(num(0, 127)?),
            ("NOTE_OFF", Some(_)) => Token::NoteOff(num(0, 127)?),
            ("TIME_SHIFT", Some(_)) => Token::TimeShift(num(1, BAR_LEN)?),
            _ => return Err(err()),
        };
        Ok(token)
    }
}

/// The vocabulary table, one mnemonic per id.
pub fn vocabulary_table() -> Vec<String> {
    Token::all().map(|t| t.to_string()).collect()
}

/// Short hex digest of the vocabulary table; stamped into artifacts so that
/// files built against a different alphabet are rejected.
pub fn vocab_hash() -> &'static str {
    static HASH: OnceLock<String> = OnceLock::new();
    HASH.get_or_init(|| {
        let digest = Sha256::digest(vocabulary_table().join("\n").as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn vocabulary_size_by_category() {
        let mut counts = [0usize; 6];
        for t in Token::all() {
            let slot = match t {
                Token::NoteOn(_) => 0,
                Token::NoteOff(_) => 1,
                Token::TimeShift(_) => 2,
                Token::Instrument(_) => 3,
                Token::Density(_) => 4,
                _ => 5,
            };
            counts[slot] += 1;
        }
        assert_eq!(counts, [128, 128, 48, 129, 10, 8]);
        assert_eq!(counts.iter().sum::<usize>(), VOCAB_SIZE);
    }

    #[test]
    fn ids_are_a_bijection() {
        let mut seen = HashSet::new();
        for id in 0..VOCAB_SIZE as TokenId {
            let t = Token::from_id(id).unwrap();
            assert_eq!(t.id(), id);
            assert!(seen.insert(t));
        }
        assert_eq!(Token::from_id(VOCAB_SIZE as TokenId), None);
    }

    #[test]
    fn mnemonics_round_trip() {
        for t in Token::all() {
            assert_eq!(t.to_string().parse::<Token>().unwrap(), t);
        }
        assert!("TIME_SHIFT:0".parse::<Token>().is_err());
        assert!("TIME_SHIFT:49".parse::<Token>().is_err());
        assert!("NOTE_ON".parse::<Token>().is_err());
        assert!("BAR_END:3".parse::<Token>().is_err());
        assert_eq!("INSTRUMENT:DRUM".parse::<Token>().unwrap(), Token::Instrument(Instrument::Drum));
    }

    #[test]
    fn hash_is_stable() {
        assert_eq!(vocab_hash().len(), 16);
        assert_eq!(vocab_hash(), vocab_hash());
        assert_eq!(vocabulary_table()[0], "PIECE_START");
        assert_eq!(vocabulary_table()[450], "TIME_SHIFT:48");
    }
}
