//! Multi-track symbolic music as token sequences.
//!
//! The crate is organised as a pipeline:
//!
//! - [`midi`] parses Standard MIDI Files, splits them into per
//!   (instrument, channel, chunk) tracks and quantizes them onto a
//!   48-subdivision 4/4 bar grid.
//! - [`vocab`] and [`codec`] define the 451-token alphabet and the
//!   MultiTrack / BarFill encodings of a [`Piece`].
//! - [`density`] bins tracks into ten per-instrument note-density levels.
//! - [`dataset`] turns a corpus into windowed, shuffled training sequences.
//! - [`model`] holds the next-token predictors: a small decoder-only
//!   transformer trained from scratch and an n-gram reference model.
//! - [`generate`] drives any predictor under a grammar mask to inpaint
//!   tracks or bars with hard instrument and density constraints.

pub mod codec;
pub mod dataset;
pub mod density;
pub mod generate;
pub mod midi;
pub mod model;
pub mod piece;
pub mod synth;
pub mod vocab;

pub use codec::{BarSelection, SequenceKind, TokenSequence};
pub use density::DensityTable;
pub use piece::{Bar, Instrument, NoteEvent, Piece, QuantizedTrack};
pub use vocab::{Token, TokenId, VOCAB_SIZE};

/// Subdivisions per beat on the quantization grid.
pub const SUBDIVISIONS_PER_BEAT: u32 = 12;
/// Beats per bar; only 4/4 bars are representable.
pub const BEATS_PER_BAR: u32 = 4;
/// Length of a bar in grid subdivisions.
pub const BAR_LEN: u8 = 48;
/// Number of note-density levels.
pub const DENSITY_LEVELS: u8 = 10;
