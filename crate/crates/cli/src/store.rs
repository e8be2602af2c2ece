//! Content-addressed, append-only piece store.
//!
//! A record's id is derived from its pianoroll, so storing the same piece
//! twice yields the same id and never rewrites the first record. Records live
//! in memory and, when a data directory is given, as `pieces/<id>.json`.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::pianoroll::PianoRoll;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PieceRecord {
    pub id: String,
    pub pianoroll: PianoRoll,
    /// Seconds since the Unix epoch.
    pub created_at: u64,
    /// Uploaded file name, if any.
    pub source: Option<String>,
    /// The record this one was generated from.
    pub parent: Option<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("store io: {0}")]
    Io(#[from] std::io::Error),
    #[error("corrupt record {path}: {reason}")]
    Corrupt { path: PathBuf, reason: String },
}

pub fn content_id(roll: &PianoRoll) -> String {
    let bytes = serde_json::to_vec(roll).expect("pianoroll serializes");
    let digest = Sha256::digest(&bytes);
    digest[..16].iter().map(|b| format!("{b:02x}")).collect()
}

fn is_id(s: &str) -> bool {
    s.len() == 32 && s.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b))
}

#[derive(Debug, Default)]
pub struct Store {
    dir: Option<PathBuf>,
    records: RwLock<HashMap<String, Arc<PieceRecord>>>,
    // Serializes inserts so a record is written once.
    write: Mutex<()>,
}

impl Store {
    pub fn in_memory() -> Self {
        Store::default()
    }

    /// Opens (creating if needed) a store under `dir`, loading existing records.
    pub fn open(dir: &Path) -> Result<Self, StoreError> {
        let pieces = dir.join("pieces");
        std::fs::create_dir_all(&pieces)?;
        let mut records = HashMap::new();
        for entry in std::fs::read_dir(&pieces)? {
            let path = entry?.path();
            if path.extension().is_none_or(|e| e != "json") {
                continue;
            }
            let text = std::fs::read_to_string(&path)?;
            let rec: PieceRecord = serde_json::from_str(&text)
                .map_err(|e| StoreError::Corrupt { path: path.clone(), reason: e.to_string() })?;
            if content_id(&rec.pianoroll) != rec.id {
                return Err(StoreError::Corrupt { path, reason: "id does not match content".into() });
            }
            records.insert(rec.id.clone(), Arc::new(rec));
        }
        Ok(Store { dir: Some(dir.to_path_buf()), records: RwLock::new(records), write: Mutex::new(()) })
    }

    pub fn len(&self) -> usize {
        self.records.read().expect("store lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, id: &str) -> Option<Arc<PieceRecord>> {
        if !is_id(id) {
            return None;
        }
        self.records.read().expect("store lock").get(id).cloned()
    }

    /// Stores a pianoroll, returning the existing record if the content is
    /// already present.
    pub fn insert(
        &self,
        pianoroll: PianoRoll,
        source: Option<String>,
        parent: Option<String>,
    ) -> Result<Arc<PieceRecord>, StoreError> {
        let id = content_id(&pianoroll);
        let _guard = self.write.lock().expect("store lock");
        if let Some(existing) = self.get(&id) {
            return Ok(existing);
        }
        let created_at = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
        let rec = Arc::new(PieceRecord { id: id.clone(), pianoroll, created_at, source, parent });
        if let Some(dir) = &self.dir {
            let path = dir.join("pieces").join(format!("{id}.json"));
            let tmp = path.with_extension("json.tmp");
            std::fs::write(&tmp, serde_json::to_vec_pretty(&*rec).expect("record serializes"))?;
            std::fs::rename(&tmp, &path)?;
        }
        self.records.write().expect("store lock").insert(id, rec.clone());
        Ok(rec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use trackfill_core::{Bar, Instrument, NoteEvent, Piece, QuantizedTrack};

    fn roll(pitch: u8) -> PianoRoll {
        let p = Piece::new(vec![QuantizedTrack::new(Instrument::Program(1), vec![Bar::new(vec![NoteEvent::new(pitch, 0, 4)])])])
            .unwrap();
        PianoRoll::from_piece(&p, &[2]).unwrap()
    }

    #[test]
    fn same_content_same_record() {
        let s = Store::in_memory();
        let a = s.insert(roll(60), Some("a.mid".into()), None).unwrap();
        let b = s.insert(roll(60), Some("b.mid".into()), None).unwrap();
        assert_eq!(a.id, b.id);
        assert_eq!(b.source.as_deref(), Some("a.mid"));
        let c = s.insert(roll(61), None, Some(a.id.clone())).unwrap();
        assert_ne!(a.id, c.id);
        assert_eq!(s.len(), 2);
        assert!(s.get("nope").is_none());
    }

    #[test]
    fn records_persist() {
        let dir = tempfile::tempdir().unwrap();
        let id = Store::open(dir.path()).unwrap().insert(roll(64), None, None).unwrap().id.clone();
        let reopened = Store::open(dir.path()).unwrap();
        assert_eq!(reopened.get(&id).unwrap().pianoroll, roll(64));

        std::fs::write(dir.path().join("pieces").join(format!("{id}.json")), b"{}").unwrap();
        assert!(matches!(Store::open(dir.path()), Err(StoreError::Corrupt { .. })));
    }
}
