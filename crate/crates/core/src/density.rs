//! Per-instrument note-density levels.
//!
//! For every instrument the corpus distribution of note onsets per bar is
//! summarised by its nine deciles; a track's level is the number of deciles
//! strictly below its mean onsets per bar.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::piece::{Instrument, Piece, QuantizedTrack};
use crate::DENSITY_LEVELS;

pub const DENSITY_TABLE_VERSION: u32 = 1;

/// Number of decile boundaries per instrument.
pub const BOUNDARIES: usize = DENSITY_LEVELS as usize - 1;

/// Onset-per-bar counts, per instrument, as count → multiplicity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OnsetCounts {
    per_instrument: Vec<BTreeMap<u32, u64>>,
}

impl Default for OnsetCounts {
    fn default() -> Self {
        OnsetCounts { per_instrument: vec![BTreeMap::new(); Instrument::COUNT] }
    }
}

impl OnsetCounts {
    pub fn add_track(&mut self, track: &QuantizedTrack) {
        let hist = &mut self.per_instrument[track.instrument.index()];
        for bar in &track.bars {
            *hist.entry(bar.onsets() as u32).or_insert(0) += 1;
        }
    }

    pub fn add_piece(&mut self, piece: &Piece) {
        for t in piece.tracks() {
            self.add_track(t);
        }
    }

    pub fn add(&mut self, instrument: Instrument, count: u32) {
        *self.per_instrument[instrument.index()].entry(count).or_insert(0) += 1;
    }

    /// Associative merge, for sharded accumulation.
    pub fn merge(mut self, other: OnsetCounts) -> OnsetCounts {
        for (mine, theirs) in self.per_instrument.iter_mut().zip(other.per_instrument) {
            for (count, n) in theirs {
                *mine.entry(count).or_insert(0) += n;
            }
        }
        self
    }

    /// The multiset for one instrument, sorted ascending.
    pub fn sorted(&self, instrument: Instrument) -> Vec<u32> {
        self.per_instrument[instrument.index()]
            .iter()
            .flat_map(|(&c, &n)| std::iter::repeat_n(c, n as usize))
            .collect()
    }

    pub fn total(&self, instrument: Instrument) -> u64 {
        self.per_instrument[instrument.index()].values().sum()
    }
}

/// Counts onsets per bar over a corpus; every bar of every track contributes
/// one count, empty bars included.
pub fn accumulate<'a>(corpus: impl IntoIterator<Item = &'a Piece>) -> OnsetCounts {
    let mut counts = OnsetCounts::default();
    for piece in corpus {
        counts.add_piece(piece);
    }
    counts
}

/// Nearest-rank quantile of a histogram: the smallest value whose cumulative
/// count reaches `ceil(q * n)`.
fn nearest_rank(hist: &BTreeMap<u32, u64>, total: u64, numerator: u64, denominator: u64) -> f64 {
    let rank = (numerator * total).div_ceil(denominator).max(1);
    let mut seen = 0;
    for (&value, &n) in hist {
        seen += n;
        if seen >= rank {
            return f64::from(value);
        }
    }
    0.0
}

#[derive(Debug, Error)]
pub enum DensityError {
    #[error("density table io: {0}")]
    Io(#[from] std::io::Error),
    #[error("density table json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported density table version {0}")]
    Version(u32),
    #[error("density table entry `{0}` is invalid")]
    Entry(String),
}

/// Decile boundaries of onsets per bar for all 129 instruments.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityTable {
    boundaries: Vec<[f64; BOUNDARIES]>,
}

impl Default for DensityTable {
    fn default() -> Self {
        DensityTable { boundaries: vec![[0.0; BOUNDARIES]; Instrument::COUNT] }
    }
}

#[derive(Serialize, Deserialize)]
struct DensityTableJson {
    version: u32,
    instruments: BTreeMap<String, [f64; BOUNDARIES]>,
}

impl DensityTable {
    /// Boundary `j` (1..=9) is the nearest-rank quantile at `j / 10`.
    /// Instruments without data get all-zero boundaries.
    pub fn build(counts: &OnsetCounts) -> DensityTable {
        let boundaries = counts
            .per_instrument
            .iter()
            .map(|hist| {
                let total: u64 = hist.values().sum();
                let mut b = [0.0; BOUNDARIES];
                if total > 0 {
                    for (j, slot) in b.iter_mut().enumerate() {
                        *slot = nearest_rank(hist, total, j as u64 + 1, u64::from(DENSITY_LEVELS));
                    }
                }
                b
            })
            .collect();
        DensityTable { boundaries }
    }

    pub fn boundaries(&self, instrument: Instrument) -> &[f64; BOUNDARIES] {
        &self.boundaries[instrument.index()]
    }

    /// Number of boundaries strictly below `mean`.
    pub fn level_for(&self, instrument: Instrument, mean: f64) -> u8 {
        self.boundaries(instrument).iter().filter(|&&b| b < mean).count() as u8
    }

    pub fn density_level(&self, track: &QuantizedTrack) -> u8 {
        self.level_for(track.instrument, track.mean_onsets_per_bar())
    }

    pub fn levels(&self, piece: &Piece) -> Vec<u8> {
        piece.tracks().iter().map(|t| self.density_level(t)).collect()
    }

    /// JSON form: `{"version": 1, "instruments": {"0": [..9..], ..., "drum": [..9..]}}`.
    pub fn to_json(&self) -> String {
        let instruments = Instrument::all()
            .map(|i| (i.to_string().to_lowercase(), self.boundaries[i.index()]))
            .collect();
        serde_json::to_string_pretty(&DensityTableJson { version: DENSITY_TABLE_VERSION, instruments })
            .expect("serializable")
    }

    pub fn from_json(text: &str) -> Result<DensityTable, DensityError> {
        let parsed: DensityTableJson = serde_json::from_str(text)?;
        if parsed.version != DENSITY_TABLE_VERSION {
            return Err(DensityError::Version(parsed.version));
        }
        let mut table = DensityTable::default();
        for (key, bounds) in parsed.instruments {
            let instrument: Instrument = key.parse().map_err(|_| DensityError::Entry(key.clone()))?;
            if bounds.windows(2).any(|w| w[0] > w[1]) || bounds.iter().any(|b| !b.is_finite()) {
                return Err(DensityError::Entry(key));
            }
            table.boundaries[instrument.index()] = bounds;
        }
        Ok(table)
    }

    pub fn save(&self, path: &Path) -> Result<(), DensityError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<DensityTable, DensityError> {
        DensityTable::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::piece::{Bar, NoteEvent};

    fn bar_with(n: usize) -> Bar {
        Bar::new((0..n).map(|i| NoteEvent::new(40 + i as u8, 0, 1)).collect())
    }

    fn track(instrument: Instrument, counts: &[usize]) -> QuantizedTrack {
        QuantizedTrack::new(instrument, counts.iter().map(|&n| bar_with(n)).collect())
    }

    fn table_from(values: &[u32]) -> DensityTable {
        let mut counts = OnsetCounts::default();
        for &v in values {
            counts.add(Instrument::Program(0), v);
        }
        DensityTable::build(&counts)
    }

    #[test]
    fn counts_every_bar_including_empty() {
        let piece = Piece::new(vec![track(Instrument::Program(3), &[2, 0, 5])]).unwrap();
        let counts = accumulate([&piece]);
        assert_eq!(counts.sorted(Instrument::Program(3)), vec![0, 2, 5]);
    }

    #[test]
    fn same_instrument_merges() {
        let piece = Piece::new(vec![track(Instrument::Drum, &[1, 4]), track(Instrument::Drum, &[3, 3])]).unwrap();
        assert_eq!(accumulate([&piece]).sorted(Instrument::Drum), vec![1, 3, 3, 4]);
    }

    #[test]
    fn empty_corpus_gives_zero_table() {
        let table = DensityTable::build(&accumulate(std::iter::empty()));
        assert_eq!(table, DensityTable::default());
    }

    #[test]
    fn deciles_of_one_to_ten() {
        let t = table_from(&[1, 2, 3, 4, 5, 6, 7, 8, 9, 10]);
        assert_eq!(t.boundaries(Instrument::Program(0)), &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0]);
    }

    #[test]
    fn constant_distribution() {
        let t = table_from(&[4; 17]);
        assert_eq!(t.boundaries(Instrument::Program(0)), &[4.0; 9]);
        assert_eq!(t.boundaries(Instrument::Program(1)), &[0.0; 9]);
    }

    #[test]
    fn level_edges() {
        let t = table_from(&[1, 2, 3, 4, 5, 6, 7, 8, 9, 10]);
        let i = Instrument::Program(0);
        assert_eq!(t.level_for(i, 0.5), 0);
        assert_eq!(t.level_for(i, 1.0), 0);
        assert_eq!(t.level_for(i, 1.5), 1);
        assert_eq!(t.level_for(i, 5.0), 4);
        assert_eq!(t.level_for(i, 9.0), 8);
        assert_eq!(t.level_for(i, 12.0), 9);
    }

    #[test]
    fn tie_rule_matches_brute_force_scan() {
        let t = table_from(&[0, 0, 1, 1, 1, 2, 3, 5, 5, 8, 13, 13]);
        let bounds = t.boundaries(Instrument::Program(0));
        for tenths in 0..150 {
            let mean = f64::from(tenths) / 10.0;
            // lowest bin whose upper boundary is >= mean
            let mut expected = 9;
            for (j, &b) in bounds.iter().enumerate() {
                if mean <= b {
                    expected = j as u8;
                    break;
                }
            }
            assert_eq!(t.level_for(Instrument::Program(0), mean), expected, "mean {mean}");
        }
    }

    #[test]
    fn json_round_trip() {
        let mut counts = OnsetCounts::default();
        for v in [3, 1, 4, 1, 5, 9, 2, 6] {
            counts.add(Instrument::Drum, v);
            counts.add(Instrument::Program(33), v * 2);
        }
        let table = DensityTable::build(&counts);
        let json = table.to_json();
        assert!(json.contains("\"drum\""));
        assert_eq!(DensityTable::from_json(&json).unwrap(), table);
        assert!(DensityTable::from_json(r#"{"version": 2, "instruments": {}}"#).is_err());
        assert!(DensityTable::from_json(r#"{"version": 1, "instruments": {"0": [3,2,1,1,1,1,1,1,1]}}"#).is_err());
    }
}
