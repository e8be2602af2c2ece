//! Token-length statistics of a corpus.

use serde::{Deserialize, Serialize};
use trackfill_core::codec::encode_multitrack;
use trackfill_core::dataset::{build_examples, filter_by_length, length_stats, BuildConfig, DatasetError, LengthStats, PackStats};
use trackfill_core::{DensityTable, Piece};

/// Window lengths of the fixed-track-count segment census.
pub const SEGMENT_BARS: [usize; 3] = [4, 8, 16];

pub const REFERENCE_NOTE: &str = "The published Lakh MIDI figures (99.8% of 10-track 4-bar, 86.8% of 10-track 8-bar and \
38.8% of 10-track 16-bar segments within 2048 tokens) are quoted for reference only and are not asserted; \
the fractions above describe this corpus.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentCensus {
    pub n_bars: usize,
    pub max_tracks: usize,
    pub segments: usize,
    pub within_budget: usize,
    pub fraction: f64,
}

/// Every contiguous `n_bars` window of every long-enough piece, keeping the
/// first `max_tracks` tracks, measured as a MultiTrack encoding.
pub fn segment_census(pieces: &[Piece], n_bars: usize, max_tracks: usize, budget: usize) -> SegmentCensus {
    let mut segments = 0;
    let mut within = 0;
    for p in pieces.iter().filter(|p| p.n_bars() >= n_bars && !p.is_empty()) {
        let keep: Vec<usize> = (0..p.n_tracks().min(max_tracks)).collect();
        let tracks = p.select_tracks(&keep);
        for start in 0..=p.n_bars() - n_bars {
            let w = tracks.bar_window(start, n_bars);
            let len = encode_multitrack(&w, &vec![0; w.n_tracks()]).expect("valid window").len();
            segments += 1;
            within += usize::from(len <= budget);
        }
    }
    let fraction = if segments == 0 { 0.0 } else { within as f64 / segments as f64 };
    SegmentCensus { n_bars, max_tracks, segments, within_budget: within, fraction }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub files: usize,
    pub pieces: usize,
    pub failed: usize,
    pub skipped_short: usize,
    pub build: BuildConfig,
    pub pack: PackStats,
    pub lengths: LengthStats,
    pub segments: Vec<SegmentCensus>,
    pub note: String,
}

/// Builds examples exactly as `dataset-build` would with `build`, so the
/// kept fraction matches its `stats.json`.
pub fn corpus_stats(
    pieces: &[Piece],
    files: usize,
    failed: usize,
    build: &BuildConfig,
    segment_tracks: usize,
    bucket_width: usize,
) -> Result<StatsReport, DatasetError> {
    // Density levels do not change sequence lengths.
    let (examples, skipped_short) = build_examples(pieces, build, &DensityTable::default())?;
    let lengths: Vec<usize> = examples.iter().map(|s| s.len()).collect();
    let (_, pack) = filter_by_length(examples, build.max_len);
    Ok(StatsReport {
        files,
        pieces: pieces.len(),
        failed,
        skipped_short,
        build: build.clone(),
        pack,
        lengths: length_stats(&lengths, build.max_len, bucket_width),
        segments: SEGMENT_BARS.iter().map(|&n| segment_census(pieces, n, segment_tracks, build.max_len)).collect(),
        note: REFERENCE_NOTE.to_string(),
    })
}

impl StatsReport {
    pub fn kept_line(&self) -> String {
        format!(
            "kept fraction (<= {} tokens): {:.4} ({} of {})",
            self.pack.max_len, self.pack.kept_fraction, self.pack.kept, self.pack.total
        )
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let b = &self.build;
        out += &format!(
            "corpus: {} files, {} pieces imported, {} failed, {} shorter than {} bars\n",
            self.files, self.pieces, self.failed, self.skipped_short, b.n_bars
        );
        out += &format!(
            "examples: {}-bar windows, <= {} tracks, {:?} mode, {} per piece, seed {}\n",
            b.n_bars, b.max_tracks, b.mode, b.windows_per_piece, b.seed
        );
        out += &self.kept_line();
        out.push('\n');
        let l = &self.lengths;
        out += &format!("lengths: min {} mean {:.1} max {}\n", l.min, l.mean, l.max);
        out += &format!("histogram (bucket width {}):\n", l.bucket_width);
        let peak = l.histogram.iter().map(|&(_, n)| n).max().unwrap_or(1).max(1);
        for &(start, n) in &l.histogram {
            let bar = "#".repeat((n * 40).div_ceil(peak));
            out += &format!("  {:>6}-{:<6} {:>6} {}\n", start, start + l.bucket_width - 1, n, bar);
        }
        out += "token budget by segment length:\n";
        for s in &self.segments {
            out += &format!(
                "  {:>2}-bar, <= {} tracks: {:.4} ({} of {} segments)\n",
                s.n_bars, s.max_tracks, s.fraction, s.within_budget, s.segments
            );
        }
        out += "note: ";
        out += &self.note;
        out.push('\n');
        out
    }
}
