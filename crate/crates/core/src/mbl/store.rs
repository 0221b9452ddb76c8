//! Persistent memo of query results.
//!
//! The backing file is append-only text, one record per line:
//! `identity<TAB>query<TAB>mask`, where `mask` is the hit/miss bitmask
//! (`1` = hit) or `-` for a query with no profiled ops. Later records for
//! the same key win.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use crate::cache::{outcome_mask, Outcome};

use super::MblError;

pub const STORE_FILE: &str = "queries.tsv";

type Key = (String, String);

#[derive(Debug)]
pub struct QueryStore {
    path: Option<PathBuf>,
    entries: RwLock<HashMap<Key, Vec<Outcome>>>,
    writer: Mutex<Option<File>>,
}

fn store_err(key: &str, source: std::io::Error) -> MblError {
    MblError::Store {
        key: key.to_string(),
        source,
    }
}

fn decode_mask(mask: &str) -> Option<Vec<Outcome>> {
    if mask == "-" {
        return Some(Vec::new());
    }
    mask.chars()
        .map(|c| match c {
            '1' => Some(Outcome::Hit),
            '0' => Some(Outcome::Miss),
            _ => None,
        })
        .collect()
}

impl QueryStore {
    /// A store that lives only as long as the process.
    pub fn in_memory() -> QueryStore {
        QueryStore {
            path: None,
            entries: RwLock::default(),
            writer: Mutex::new(None),
        }
    }

    /// Opens (creating if needed) the store in directory `dir`.
    pub fn open(dir: &Path) -> Result<QueryStore, MblError> {
        let path = dir.join(STORE_FILE);
        let shown = path.display().to_string();
        fs::create_dir_all(dir).map_err(|e| store_err(&shown, e))?;
        let mut entries = HashMap::new();
        if path.exists() {
            let file = File::open(&path).map_err(|e| store_err(&shown, e))?;
            for (lineno, line) in BufReader::new(file).lines().enumerate() {
                let line = line.map_err(|e| store_err(&shown, e))?;
                if line.is_empty() {
                    continue;
                }
                let mut fields = line.split('\t');
                let record = match (fields.next(), fields.next(), fields.next(), fields.next()) {
                    (Some(id), Some(q), Some(mask), None) => {
                        decode_mask(mask).map(|o| ((id.to_string(), q.to_string()), o))
                    }
                    _ => None,
                };
                let Some((key, outcomes)) = record else {
                    return Err(MblError::CorruptStore {
                        path: shown,
                        line: lineno + 1,
                    });
                };
                entries.insert(key, outcomes);
            }
        }
        let writer = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| store_err(&shown, e))?;
        Ok(QueryStore {
            path: Some(path),
            entries: RwLock::new(entries),
            writer: Mutex::new(Some(writer)),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn get(&self, identity: &str, query: &str) -> Option<Vec<Outcome>> {
        self.entries
            .read()
            .expect("store lock poisoned")
            .get(&(identity.to_string(), query.to_string()))
            .cloned()
    }

    pub fn put(&self, identity: &str, query: &str, outcomes: &[Outcome]) -> Result<(), MblError> {
        let key = format!("{identity}\t{query}");
        if identity.contains(['\t', '\n']) || query.contains(['\t', '\n']) {
            return Err(store_err(
                &key,
                std::io::Error::new(
                    std::io::ErrorKind::InvalidInput,
                    "key contains a tab or newline",
                ),
            ));
        }
        let mut writer = self.writer.lock().expect("store lock poisoned");
        if let Some(file) = writer.as_mut() {
            let mask = if outcomes.is_empty() {
                "-".to_string()
            } else {
                outcome_mask(outcomes)
            };
            writeln!(file, "{key}\t{mask}").map_err(|e| store_err(&key, e))?;
            file.flush().map_err(|e| store_err(&key, e))?;
        }
        self.entries
            .write()
            .expect("store lock poisoned")
            .insert((identity.to_string(), query.to_string()), outcomes.to_vec());
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("store lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All keys, sorted.
    pub fn keys(&self) -> Vec<(String, String)> {
        let mut keys: Vec<_> = self
            .entries
            .read()
            .expect("store lock poisoned")
            .keys()
            .cloned()
            .collect();
        keys.sort();
        keys
    }
}
