//! Regenerates the bundled corpus: `cargo run -p trackfill-cli --example make_corpus [DIR]`.

use std::path::PathBuf;

use trackfill_cli::corpus::{bundled_corpus_dir, write_bundled_corpus, BUNDLED_FILES, BUNDLED_SEED};

fn main() -> std::io::Result<()> {
    let dir = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(bundled_corpus_dir);
    let files = write_bundled_corpus(&dir, BUNDLED_SEED, BUNDLED_FILES)?;
    println!("{} files written to {}", files.len(), dir.display());
    Ok(())
}
