//! Subcommand implementations.

use std::fmt::Display;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use anyhow::{anyhow, Context};
use trackfill_core::codec::{decode_any, encode_barfill, encode_multitrack, SequenceJson};
use trackfill_core::dataset::{build_examples, filter_by_length, length_stats, Dataset};
use trackfill_core::density::accumulate;
use trackfill_core::generate::{generate, GenerationMode, GenerationRequest, SamplerParams, TrackRequest};
use trackfill_core::midi::{piece_from_midi, piece_to_midi};
use trackfill_core::model::{
    load_predictor, save_checkpoint, train, ModelConfig, NGramModel, SequencePredictor, TrainOptions, UniformPredictor,
};
use trackfill_core::{BarSelection, DensityTable, Piece, TokenSequence};

use crate::args::*;
use crate::corpus::load_corpus;
use crate::pianoroll::PianoRoll;
use crate::report::corpus_stats;
use crate::service::{self, AppState};
use crate::store::Store;

/// Process exit status classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitKind {
    Usage = 1,
    Data = 2,
    Model = 3,
}

#[derive(Debug)]
pub struct CliError {
    pub kind: ExitKind,
    pub error: anyhow::Error,
}

impl Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:#}", self.error)
    }
}

pub type CliResult<T = ()> = Result<T, CliError>;

trait Classify<T> {
    fn kind(self, kind: ExitKind) -> CliResult<T>;
    fn data(self) -> CliResult<T>;
    fn model(self) -> CliResult<T>;
    fn usage(self) -> CliResult<T>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn kind(self, kind: ExitKind) -> CliResult<T> {
        self.map_err(|e| CliError { kind, error: e.into() })
    }
    fn data(self) -> CliResult<T> {
        self.kind(ExitKind::Data)
    }
    fn model(self) -> CliResult<T> {
        self.kind(ExitKind::Model)
    }
    fn usage(self) -> CliResult<T> {
        self.kind(ExitKind::Usage)
    }
}

pub fn run(cli: Cli) -> CliResult {
    match cli.command {
        Command::Tokenize(a) => tokenize(a),
        Command::Detokenize(a) => detokenize(a),
        Command::Stats(a) => stats(a),
        Command::DensityBuild(a) => density_build(a),
        Command::DatasetBuild(a) => dataset_build(a),
        Command::Train(a) => train_cmd(a),
        Command::Generate(a) => generate_cmd(a),
        Command::Serve(a) => serve(a),
    }
}

fn read_piece(path: &Path) -> CliResult<Piece> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display())).data()?;
    piece_from_midi(&bytes).with_context(|| format!("importing {}", path.display())).data()
}

fn density_table(path: Option<&Path>) -> CliResult<DensityTable> {
    match path {
        Some(p) => DensityTable::load(p).with_context(|| format!("loading density table {}", p.display())).data(),
        None => Ok(DensityTable::default()),
    }
}

fn write_output(path: Option<&Path>, bytes: &[u8]) -> CliResult {
    match path {
        Some(p) => std::fs::write(p, bytes).with_context(|| format!("writing {}", p.display())).data(),
        None => std::io::stdout().write_all(bytes).context("writing stdout").data(),
    }
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> CliResult {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    write_output(Some(path), text.as_bytes())
}

fn load_pieces(dir: &Path) -> CliResult<crate::corpus::Corpus> {
    let corpus = load_corpus(dir).with_context(|| format!("reading corpus {}", dir.display())).data()?;
    for (path, err) in &corpus.failed {
        tracing::warn!(file = %path.display(), "skipped: {err}");
    }
    if corpus.pieces.is_empty() {
        return Err(anyhow!("no usable MIDI files under {}", dir.display())).data();
    }
    Ok(corpus)
}

fn tokenize(a: TokenizeArgs) -> CliResult {
    let piece = read_piece(&a.input)?;
    let levels = density_table(a.density_table.as_deref())?.levels(&piece);
    let sel = BarSelection::new(a.select.iter().copied());
    let seq = if sel.is_empty() { encode_multitrack(&piece, &levels) } else { encode_barfill(&piece, &sel, &levels) };
    let seq = seq.context("encoding").usage()?;
    let mut text = match a.format {
        TokenFormat::Text => seq.to_text(),
        TokenFormat::Json => serde_json::to_string_pretty(&seq.to_json()).expect("serializable"),
    };
    text.push('\n');
    write_output(a.output.as_deref(), text.as_bytes())
}

fn read_tokens(input: Option<&Path>) -> CliResult<TokenSequence> {
    let mut text = String::new();
    match input {
        Some(p) if p != Path::new("-") => {
            text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display())).data()?;
        }
        _ => {
            std::io::stdin().read_to_string(&mut text).context("reading stdin").data()?;
        }
    }
    if text.trim_start().starts_with('{') {
        let json: SequenceJson = serde_json::from_str(&text).context("parsing token JSON").data()?;
        TokenSequence::try_from(json).context("parsing token JSON").data()
    } else {
        TokenSequence::from_text(&text).context("parsing token text").data()
    }
}

fn detokenize(a: DetokenizeArgs) -> CliResult {
    let seq = read_tokens(a.input.as_deref())?;
    let (piece, levels) = decode_any(&seq).context("decoding tokens").data()?;
    match &a.output {
        Some(out) => write_output(Some(out), &piece_to_midi(&piece)),
        None => {
            let roll = PianoRoll::from_piece(&piece, &levels).data()?;
            let mut text = serde_json::to_string_pretty(&roll).expect("serializable");
            text.push('\n');
            write_output(None, text.as_bytes())
        }
    }
}

fn stats(a: StatsArgs) -> CliResult {
    let cfg = a.build.config();
    cfg.check().usage()?;
    let corpus = load_pieces(&a.corpus)?;
    let report =
        corpus_stats(&corpus.just_pieces(), corpus.files(), corpus.failed.len(), &cfg, a.segment_tracks, a.bucket).data()?;
    print!("{}", report.render());
    if let Some(p) = &a.json {
        write_json(p, &report)?;
    }
    Ok(())
}

fn density_build(a: DensityBuildArgs) -> CliResult {
    let corpus = load_pieces(&a.corpus)?;
    let pieces = corpus.just_pieces();
    let table = DensityTable::build(&accumulate(&pieces));
    table.save(&a.output).with_context(|| format!("writing {}", a.output.display())).data()?;
    println!("density table from {} pieces written to {}", pieces.len(), a.output.display());
    Ok(())
}

#[derive(serde::Serialize)]
struct DatasetStats {
    files: usize,
    pieces: usize,
    failed: usize,
    skipped_short: usize,
    build: trackfill_core::dataset::BuildConfig,
    pack: trackfill_core::dataset::PackStats,
    lengths: trackfill_core::dataset::LengthStats,
}

fn dataset_build(a: DatasetBuildArgs) -> CliResult {
    let cfg = a.build.config();
    cfg.check().usage()?;
    let table = density_table(a.density_table.as_deref())?;
    let corpus = load_pieces(&a.corpus)?;
    let pieces = corpus.just_pieces();
    let (examples, skipped_short) = build_examples(&pieces, &cfg, &table).data()?;
    let lengths: Vec<usize> = examples.iter().map(|s| s.len()).collect();
    let (kept, pack) = filter_by_length(examples, cfg.max_len);
    std::fs::create_dir_all(&a.output).with_context(|| format!("creating {}", a.output.display())).data()?;
    let dataset = Dataset::new(cfg.mode, cfg.max_len, &kept);
    dataset.save(&a.output.join("dataset.bin")).context("writing dataset").data()?;
    let stats = DatasetStats {
        files: corpus.files(),
        pieces: pieces.len(),
        failed: corpus.failed.len(),
        skipped_short,
        build: cfg.clone(),
        pack: pack.clone(),
        lengths: length_stats(&lengths, cfg.max_len, 256),
    };
    write_json(&a.output.join("stats.json"), &stats)?;
    println!(
        "{} sequences written to {} (kept fraction {:.4}, {} dropped)",
        pack.kept,
        a.output.join("dataset.bin").display(),
        pack.kept_fraction,
        pack.dropped
    );
    Ok(())
}

fn model_config(a: &TrainArgs) -> CliResult<ModelConfig> {
    let mut cfg = match &a.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display())).usage()?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display())).usage()?
        }
        None => ModelConfig::default(),
    };
    macro_rules! set {
        ($($field:ident <- $flag:ident),*) => { $(if let Some(v) = a.$flag { cfg.$field = v; })* };
    }
    set!(layers <- layers, heads <- heads, embed_dim <- embed_dim, window <- window, ff_dim <- ff_dim,
         learning_rate <- lr, batch <- batch, steps <- steps, seed <- seed);
    cfg.check().usage()?;
    Ok(cfg)
}

fn train_cmd(a: TrainArgs) -> CliResult {
    let dataset = Dataset::load(&a.dataset).with_context(|| format!("loading {}", a.dataset.display())).data()?;
    std::fs::create_dir_all(&a.output).with_context(|| format!("creating {}", a.output.display())).data()?;
    match a.kind {
        ModelKind::Ngram => {
            let m = NGramModel::fit(a.order, NGramModel::DEFAULT_ALPHA, dataset.sequences.iter().map(Vec::as_slice))
                .model()?;
            let path = a.output.join("model.ngram.json");
            write_output(Some(&path), m.to_json().as_bytes())?;
            println!("{} fitted on {} sequences, written to {}", m.name(), dataset.sequences.len(), path.display());
        }
        ModelKind::Transformer => {
            let cfg = model_config(&a)?;
            let opts = TrainOptions { eval_every: a.eval_every, target_loss: a.target_loss };
            let (model, report) = train(&cfg, &dataset.sequences, &opts, |step, loss| {
                if step % 50 == 0 {
                    tracing::info!(step, loss, "training");
                }
            })
            .model()?;
            let ckpt = a.output.join("model.ckpt");
            save_checkpoint(&model, &ckpt).model()?;
            write_output(Some(&a.output.join("loss.csv")), report.to_csv().as_bytes())?;
            println!(
                "{} steps, final loss {:.4}; checkpoint {}",
                report.steps,
                report.losses.last().copied().unwrap_or(f64::NAN),
                ckpt.display()
            );
        }
    }
    Ok(())
}

fn predictor(path: Option<&Path>) -> CliResult<Arc<dyn SequencePredictor>> {
    match path {
        Some(p) => {
            let m = load_predictor(p).with_context(|| format!("loading model {}", p.display())).model()?;
            Ok(Arc::from(m))
        }
        None => {
            tracing::warn!("no model given; sampling from a uniform-random predictor");
            Ok(Arc::new(UniformPredictor::default()))
        }
    }
}

fn generate_cmd(a: GenerateArgs) -> CliResult {
    let table = density_table(a.density_table.as_deref())?;
    let (base, levels) = match &a.input {
        Some(p) => {
            let piece = read_piece(p)?;
            let levels = table.levels(&piece);
            (piece, levels)
        }
        None => (Piece::empty(), Vec::new()),
    };
    let mode = match a.mode {
        GenMode::Track => {
            let allowed = (!a.instruments.is_empty()).then(|| a.instruments.clone());
            let req = TrackRequest { allowed_instruments: allowed, density: a.density };
            GenerationMode::TrackInpaint { tracks: vec![req; a.n], max_bars: a.max_bars }
        }
        GenMode::Bar => GenerationMode::BarInpaint { selection: a.selection() },
        GenMode::Resample => GenerationMode::Resample { rounds: a.rounds },
    };
    let sampler = SamplerParams { temperature: a.temperature, top_p: a.top_p, max_steps: a.max_steps, seed: a.seed };
    let request = GenerationRequest { mode, sampler };
    let model = predictor(a.model.as_deref())?;
    let g = generate(model.as_ref(), &base, &levels, &request).map_err(|e| {
        use trackfill_core::generate::GenerateError as G;
        let kind = match e {
            G::InvalidRequest(_) | G::InvalidSelection(_) => ExitKind::Usage,
            G::Codec(_) | G::Piece(_) => ExitKind::Data,
            _ => ExitKind::Model,
        };
        CliError { kind, error: e.into() }
    })?;
    write_output(Some(&a.output), &piece_to_midi(&g.piece))?;
    println!(
        "{} tracks x {} bars written to {} ({} new tokens, seed {})",
        g.piece.n_tracks(),
        g.piece.n_bars(),
        a.output.display(),
        g.new_tokens().len(),
        a.seed
    );
    Ok(())
}

fn serve(a: ServeArgs) -> CliResult {
    let store = match &a.data_dir {
        Some(d) => Store::open(d).with_context(|| format!("opening store {}", d.display())).data()?,
        None => Store::in_memory(),
    };
    let mut state = AppState::new(store);
    if let Some(p) = &a.density_table {
        state = state.with_density(density_table(Some(p))?);
    }
    if a.model.is_some() {
        state = state.with_predictor(predictor(a.model.as_deref())?);
    } else {
        tracing::warn!("no model loaded; generation requests will answer 409");
    }
    let rt = tokio::runtime::Runtime::new().context("starting runtime").data()?;
    rt.block_on(service::serve(state, &a.bind)).with_context(|| format!("serving on {}", a.bind)).usage()
}
