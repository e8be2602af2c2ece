//! Training sequences from a corpus of pieces.
//!
//! Each example is an `n_bars` window with at most `max_tracks` tracks in a
//! random order, encoded as MultiTrack or (with random bars masked) as
//! BarFill. Sequences longer than `max_len` are dropped.

use std::io::{Read, Write};
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{encode_barfill, encode_multitrack, BarSelection, CodecError, SequenceKind, TokenSequence};
use crate::density::DensityTable;
use crate::piece::Piece;
use crate::vocab::{vocab_hash, TokenId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BuildConfig {
    pub n_bars: usize,
    pub max_tracks: usize,
    pub max_len: usize,
    pub mode: SequenceKind,
    /// Probability of masking each (track, bar) cell in BarFill mode.
    pub mask_rate: f64,
    pub windows_per_piece: usize,
    pub seed: u64,
}

impl Default for BuildConfig {
    fn default() -> Self {
        BuildConfig::four_bar(SequenceKind::MultiTrack)
    }
}

impl BuildConfig {
    /// 4-bar windows with up to 12 tracks.
    pub fn four_bar(mode: SequenceKind) -> Self {
        BuildConfig { n_bars: 4, max_tracks: 12, max_len: 2048, mode, mask_rate: 0.2, windows_per_piece: 4, seed: 0 }
    }

    /// 8-bar windows with up to 6 tracks.
    pub fn eight_bar(mode: SequenceKind) -> Self {
        BuildConfig { n_bars: 8, max_tracks: 6, ..BuildConfig::four_bar(mode) }
    }

    pub fn check(&self) -> Result<(), DatasetError> {
        if self.n_bars == 0 || self.max_tracks == 0 || self.max_len == 0 {
            return Err(DatasetError::Config("n_bars, max_tracks and max_len must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.mask_rate) {
            return Err(DatasetError::Config(format!("mask_rate {} outside [0, 1]", self.mask_rate)));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("piece has {found} bars, window needs {needed}")]
    TooShort { found: usize, needed: usize },
    #[error("invalid build config: {0}")]
    Config(String),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error("dataset io: {0}")]
    Io(#[from] std::io::Error),
    #[error("dataset format: {0}")]
    Format(String),
}

/// Random contiguous window with a random subset and order of tracks.
pub fn sample_window<R: Rng>(piece: &Piece, cfg: &BuildConfig, rng: &mut R) -> Result<Piece, DatasetError> {
    if piece.n_bars() < cfg.n_bars || piece.is_empty() {
        return Err(DatasetError::TooShort { found: piece.n_bars(), needed: cfg.n_bars });
    }
    let start = rng.random_range(0..=piece.n_bars() - cfg.n_bars);
    let mut order: Vec<usize> = (0..piece.n_tracks()).collect();
    order.shuffle(rng);
    order.truncate(cfg.max_tracks);
    Ok(piece.bar_window(start, cfg.n_bars).select_tracks(&order))
}

/// Masks each cell independently with `mask_rate`, re-drawing once when the
/// draw is empty or covers every bar. If the second draw is still degenerate
/// one cell is adjusted so that at least one bar is masked (for a nonzero
/// rate) and at least one bar stays as context.
pub fn draw_selection<R: Rng>(n_tracks: usize, n_bars: usize, mask_rate: f64, rng: &mut R) -> BarSelection {
    let cells: Vec<(usize, usize)> = (0..n_tracks).flat_map(|t| (0..n_bars).map(move |b| (t, b))).collect();
    let total = cells.len();
    let draw = |rng: &mut R| BarSelection::new(cells.iter().copied().filter(|_| rng.random_bool(mask_rate)));
    let degenerate = |s: &BarSelection| s.is_empty() || s.len() == total;
    let mut selection = draw(rng);
    if degenerate(&selection) {
        selection = draw(rng);
    }
    if total >= 2 && selection.len() == total {
        let keep = *cells.choose(rng).expect("nonempty");
        selection.0.remove(&keep);
    } else if total >= 2 && selection.is_empty() && mask_rate > 0.0 {
        selection.0.insert(*cells.choose(rng).expect("nonempty"));
    }
    selection
}

pub fn make_example<R: Rng>(
    window: &Piece,
    cfg: &BuildConfig,
    table: &DensityTable,
    rng: &mut R,
) -> Result<TokenSequence, DatasetError> {
    let densities = table.levels(window);
    Ok(match cfg.mode {
        SequenceKind::MultiTrack => encode_multitrack(window, &densities)?,
        SequenceKind::BarFill => {
            let selection = draw_selection(window.n_tracks(), window.n_bars(), cfg.mask_rate, rng);
            encode_barfill(window, &selection, &densities)?
        }
    })
}

/// Per-shard generator: shard `i` always gets stream `i` of the seed.
pub fn shard_rng(seed: u64, shard: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(shard);
    rng
}

/// Examples for a whole corpus, `windows_per_piece` per piece. Pieces are
/// processed in parallel; output order follows corpus order. Pieces shorter
/// than the window are skipped and counted.
pub fn build_examples(
    corpus: &[Piece],
    cfg: &BuildConfig,
    table: &DensityTable,
) -> Result<(Vec<TokenSequence>, usize), DatasetError> {
    cfg.check()?;
    let per_piece: Vec<Option<Vec<TokenSequence>>> = corpus
        .par_iter()
        .enumerate()
        .map(|(i, piece)| {
            if piece.n_bars() < cfg.n_bars || piece.is_empty() {
                return Ok(None);
            }
            let mut rng = shard_rng(cfg.seed, i as u64);
            (0..cfg.windows_per_piece)
                .map(|_| {
                    let window = sample_window(piece, cfg, &mut rng)?;
                    make_example(&window, cfg, table, &mut rng)
                })
                .collect::<Result<Vec<_>, _>>()
                .map(Some)
        })
        .collect::<Result<_, DatasetError>>()?;
    let skipped = per_piece.iter().filter(|p| p.is_none()).count();
    Ok((per_piece.into_iter().flatten().flatten().collect(), skipped))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PackStats {
    pub total: usize,
    pub kept: usize,
    pub dropped: usize,
    pub kept_fraction: f64,
    pub max_len: usize,
}

/// Splits sequences into those within `max_len` and a drop count.
pub fn filter_by_length(
    examples: impl IntoIterator<Item = TokenSequence>,
    max_len: usize,
) -> (Vec<TokenSequence>, PackStats) {
    let mut kept = Vec::new();
    let mut total = 0;
    for seq in examples {
        total += 1;
        if seq.len() <= max_len {
            kept.push(seq);
        }
    }
    let stats = PackStats {
        total,
        kept: kept.len(),
        dropped: total - kept.len(),
        kept_fraction: if total == 0 { 1.0 } else { kept.len() as f64 / total as f64 },
        max_len,
    };
    (kept, stats)
}

const DATASET_MAGIC: &[u8; 8] = b"TFDSET01";
pub const DATASET_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub version: u32,
    pub vocab_hash: String,
    pub max_len: usize,
    pub kind: SequenceKind,
    pub n_sequences: usize,
}

/// A packed dataset file.
///
/// Layout (little endian): the magic `TFDSET01`; a `u32` header length and
/// the JSON [`DatasetHeader`]; `n_sequences` `u64` record offsets relative to
/// the first record; then records of a `u32` token count followed by `u16` ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub header: DatasetHeader,
    pub sequences: Vec<Vec<TokenId>>,
}

impl Dataset {
    pub fn new(kind: SequenceKind, max_len: usize, sequences: &[TokenSequence]) -> Dataset {
        Dataset {
            header: DatasetHeader {
                version: DATASET_VERSION,
                vocab_hash: vocab_hash().to_string(),
                max_len,
                kind,
                n_sequences: sequences.len(),
            },
            sequences: sequences.iter().map(TokenSequence::ids).collect(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&self.header).expect("serializable");
        let mut out = DATASET_MAGIC.to_vec();
        out.extend((header.len() as u32).to_le_bytes());
        out.extend(header);
        let mut offset = 0u64;
        for s in &self.sequences {
            out.extend(offset.to_le_bytes());
            offset += 4 + 2 * s.len() as u64;
        }
        for s in &self.sequences {
            out.extend((s.len() as u32).to_le_bytes());
            for id in s {
                out.extend(id.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Dataset, DatasetError> {
        let mut r = bytes;
        let mut magic = [0u8; 8];
        let fmt = |m: &str| DatasetError::Format(m.to_string());
        r.read_exact(&mut magic).map_err(|_| fmt("truncated magic"))?;
        if &magic != DATASET_MAGIC {
            return Err(fmt("bad magic"));
        }
        let mut len = [0u8; 4];
        r.read_exact(&mut len).map_err(|_| fmt("truncated header"))?;
        let len = u32::from_le_bytes(len) as usize;
        if r.len() < len {
            return Err(fmt("truncated header"));
        }
        let header: DatasetHeader = serde_json::from_slice(&r[..len]).map_err(|e| fmt(&e.to_string()))?;
        r = &r[len..];
        if header.version != DATASET_VERSION {
            return Err(fmt(&format!("unsupported version {}", header.version)));
        }
        if header.vocab_hash != vocab_hash() {
            return Err(fmt("dataset was built with a different vocabulary"));
        }
        let index_len = header.n_sequences.checked_mul(8).ok_or_else(|| fmt("bad count"))?;
        if r.len() < index_len {
            return Err(fmt("truncated index"));
        }
        let (index, records) = r.split_at(index_len);
        let mut sequences = Vec::with_capacity(header.n_sequences);
        for chunk in index.chunks_exact(8) {
            let offset = u64::from_le_bytes(chunk.try_into().expect("8 bytes")) as usize;
            let rec = records.get(offset..offset + 4).ok_or_else(|| fmt("record offset out of range"))?;
            let n = u32::from_le_bytes(rec.try_into().expect("4 bytes")) as usize;
            let body = records.get(offset + 4..offset + 4 + 2 * n).ok_or_else(|| fmt("truncated record"))?;
            sequences.push(body.chunks_exact(2).map(|b| u16::from_le_bytes([b[0], b[1]])).collect());
        }
        Ok(Dataset { header, sequences })
    }

    pub fn save(&self, path: &Path) -> Result<(), DatasetError> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Dataset, DatasetError> {
        Dataset::from_bytes(&std::fs::read(path)?)
    }

    pub fn token_sequences(&self) -> Result<Vec<TokenSequence>, DatasetError> {
        self.sequences
            .iter()
            .map(|ids| TokenSequence::from_ids(self.header.kind, ids).map_err(DatasetError::from))
            .collect()
    }
}

/// Length distribution of a set of sequences: bucketed histogram plus the
/// fraction fitting in `budget` tokens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthStats {
    pub count: usize,
    pub budget: usize,
    pub within_budget: usize,
    pub within_budget_fraction: f64,
    pub min: usize,
    pub max: usize,
    pub mean: f64,
    pub bucket_width: usize,
    /// `(bucket start, count)` for non-empty buckets.
    pub histogram: Vec<(usize, usize)>,
}

pub fn length_stats(lengths: &[usize], budget: usize, bucket_width: usize) -> LengthStats {
    let bucket_width = bucket_width.max(1);
    let within = lengths.iter().filter(|&&l| l <= budget).count();
    let mut hist = std::collections::BTreeMap::new();
    for &l in lengths {
        *hist.entry(l / bucket_width * bucket_width).or_insert(0usize) += 1;
    }
    LengthStats {
        count: lengths.len(),
        budget,
        within_budget: within,
        within_budget_fraction: if lengths.is_empty() { 1.0 } else { within as f64 / lengths.len() as f64 },
        min: lengths.iter().copied().min().unwrap_or(0),
        max: lengths.iter().copied().max().unwrap_or(0),
        mean: if lengths.is_empty() { 0.0 } else { lengths.iter().sum::<usize>() as f64 / lengths.len() as f64 },
        bucket_width,
        histogram: hist.into_iter().collect(),
    }
}
