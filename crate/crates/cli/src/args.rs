use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use trackfill_core::dataset::BuildConfig;
use trackfill_core::{BarSelection, Instrument, SequenceKind};

/// Multi-track MIDI tokenization, training and constrained inpainting.
///
/// Exit codes: 0 success, 1 usage error, 2 data error (unreadable or invalid
/// input files), 3 model error (checkpoint, training or generation failure).
#[derive(Debug, Parser)]
#[command(name = "trackfill", version, max_term_width = 100)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert a MIDI file to tokens (text mnemonics or JSON).
    Tokenize(TokenizeArgs),
    /// Convert tokens back to MIDI (or a pianoroll JSON on stdout).
    Detokenize(DetokenizeArgs),
    /// Token-length histogram and token-budget fractions of a corpus.
    Stats(StatsArgs),
    /// Build the per-instrument density table of a corpus.
    DensityBuild(DensityBuildArgs),
    /// Build a training dataset file and its stats.json.
    DatasetBuild(DatasetBuildArgs),
    /// Train a model on a dataset file; writes a checkpoint and loss.csv.
    Train(TrainArgs),
    /// Inpaint tracks or bars of a MIDI file (or generate from scratch).
    Generate(GenerateArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TokenFormat {
    Text,
    Json,
}

#[derive(Debug, Args)]
pub struct TokenizeArgs {
    /// Input MIDI file.
    pub input: PathBuf,
    /// Output file (stdout when omitted).
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = TokenFormat::Text)]
    pub format: TokenFormat,
    /// Density table for the DENSITY_LEVEL tokens (all-zero boundaries when omitted).
    #[arg(long)]
    pub density_table: Option<PathBuf>,
    /// Emit a BarFill sequence with these bars masked, as `track:bar` pairs.
    #[arg(long, value_delimiter = ',', value_parser = parse_cell)]
    pub select: Vec<(usize, usize)>,
}

#[derive(Debug, Args)]
pub struct DetokenizeArgs {
    /// Token text or JSON; `-` or omitted reads stdin.
    pub input: Option<PathBuf>,
    /// Output MIDI file; without it the pianoroll JSON goes to stdout.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Multitrack,
    Barfill,
}

impl From<Mode> for SequenceKind {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Multitrack => SequenceKind::MultiTrack,
            Mode::Barfill => SequenceKind::BarFill,
        }
    }
}

/// Window and packing options shared by `dataset-build` and `stats`.
#[derive(Debug, Clone, Args)]
pub struct BuildArgs {
    /// Bars per window (4 or 8 in the standard setups).
    #[arg(long, default_value_t = 4)]
    pub bars: usize,
    /// Track cap per window (default 12 for 4 bars, 6 otherwise).
    #[arg(long)]
    pub max_tracks: Option<usize>,
    /// Longest sequence kept, in tokens.
    #[arg(long, default_value_t = 2048)]
    pub max_len: usize,
    #[arg(long, value_enum, default_value_t = Mode::Multitrack)]
    pub mode: Mode,
    /// Per-cell masking probability in barfill mode.
    #[arg(long, default_value_t = 0.2)]
    pub mask_rate: f64,
    #[arg(long, default_value_t = 4)]
    pub windows_per_piece: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl BuildArgs {
    pub fn config(&self) -> BuildConfig {
        BuildConfig {
            n_bars: self.bars,
            max_tracks: self.max_tracks.unwrap_or(if self.bars <= 4 { 12 } else { 6 }),
            max_len: self.max_len,
            mode: self.mode.into(),
            mask_rate: self.mask_rate,
            windows_per_piece: self.windows_per_piece,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    /// Directory searched recursively for .mid/.midi files.
    pub corpus: PathBuf,
    #[command(flatten)]
    pub build: BuildArgs,
    /// Track cap of the segment census.
    #[arg(long, default_value_t = 10)]
    pub segment_tracks: usize,
    /// Histogram bucket width in tokens.
    #[arg(long, default_value_t = 256)]
    pub bucket: usize,
    /// Also write the report as JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DensityBuildArgs {
    pub corpus: PathBuf,
    #[arg(short, long, default_value = "density.json")]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct DatasetBuildArgs {
    pub corpus: PathBuf,
    /// Output directory for dataset.bin and stats.json.
    #[arg(short, long)]
    pub output: PathBuf,
    #[arg(long)]
    pub density_table: Option<PathBuf>,
    #[command(flatten)]
    pub build: BuildArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelKind {
    Transformer,
    Ngram,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset file written by `dataset-build`.
    pub dataset: PathBuf,
    /// Output directory (model.ckpt or model.ngram.json, plus loss.csv).
    #[arg(short, long)]
    pub output: PathBuf,
    #[arg(long, value_enum, default_value_t = ModelKind::Transformer)]
    pub kind: ModelKind,
    /// Model configuration JSON; flags below override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub heads: Option<usize>,
    #[arg(long)]
    pub embed_dim: Option<usize>,
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub ff_dim: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Stop once the corpus loss drops below this value.
    #[arg(long)]
    pub target_loss: Option<f64>,
    /// Steps between full-corpus evaluations (0 disables).
    #[arg(long, default_value_t = 0)]
    pub eval_every: usize,
    /// Context length of the n-gram model.
    #[arg(long, default_value_t = 5)]
    pub order: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GenMode {
    /// Add new tracks.
    Track,
    /// Regenerate selected bars.
    Bar,
    /// Regenerate every track in turn.
    Resample,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Input MIDI file; omit to generate from scratch.
    pub input: Option<PathBuf>,
    #[arg(short, long)]
    pub output: PathBuf,
    /// Checkpoint or n-gram JSON; a uniform-random predictor when omitted.
    #[arg(long, env = "TRACKFILL_MODEL")]
    pub model: Option<PathBuf>,
    #[arg(long, env = "TRACKFILL_DENSITY")]
    pub density_table: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = GenMode::Track)]
    pub mode: GenMode,
    /// Number of new tracks (track mode).
    #[arg(long, default_value_t = 1)]
    pub n: usize,
    /// Allowed instruments of every new track: programs 0-127 or `drum`.
    #[arg(long, value_delimiter = ',', value_parser = parse_instrument)]
    pub instruments: Vec<Instrument>,
    /// Density level 0-9 of every new track.
    #[arg(long)]
    pub density: Option<u8>,
    /// Bar cap when generating from scratch.
    #[arg(long)]
    pub max_bars: Option<usize>,
    /// Bars to regenerate (bar mode), as `track:bar` pairs.
    #[arg(long, value_delimiter = ',', value_parser = parse_cell)]
    pub select: Vec<(usize, usize)>,
    /// Rounds (resample mode).
    #[arg(long, default_value_t = 1)]
    pub rounds: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1.0)]
    pub temperature: f64,
    #[arg(long, default_value_t = 1.0)]
    pub top_p: f64,
    /// Token budget (default: twice the model window).
    #[arg(long)]
    pub max_steps: Option<usize>,
}

impl GenerateArgs {
    pub fn selection(&self) -> BarSelection {
        BarSelection::new(self.select.iter().copied())
    }
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, env = "TRACKFILL_BIND", default_value = "127.0.0.1:8080")]
    pub bind: String,
    /// Checkpoint or n-gram JSON; without it generation answers 409.
    #[arg(long, env = "TRACKFILL_MODEL")]
    pub model: Option<PathBuf>,
    #[arg(long, env = "TRACKFILL_DENSITY")]
    pub density_table: Option<PathBuf>,
    /// Piece store directory; in-memory when omitted.
    #[arg(long, env = "TRACKFILL_DATA_DIR")]
    pub data_dir: Option<PathBuf>,
}

pub fn parse_cell(s: &str) -> Result<(usize, usize), String> {
    let (t, b) = s.split_once(':').ok_or_else(|| format!("`{s}` is not a track:bar pair"))?;
    let num = |x: &str| x.trim().parse::<usize>().map_err(|_| format!("`{x}` is not a non-negative integer"));
    Ok((num(t)?, num(b)?))
}

pub fn parse_instrument(s: &str) -> Result<Instrument, String> {
    s.trim().parse()
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn definitions_are_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn cells_and_instruments_parse() {
        assert_eq!(parse_cell("2:13"), Ok((2, 13)));
        assert!(parse_cell("2-13").is_err());
        assert!(parse_cell("a:1").is_err());
        assert_eq!(parse_instrument("drum"), Ok(Instrument::Drum));
        assert_eq!(parse_instrument("30"), Ok(Instrument::Program(30)));
        assert!(parse_instrument("128").is_err());
    }
}
