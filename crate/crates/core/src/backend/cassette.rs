use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{Backend, BackendError, Completion, CompletionRequest};

/// One recorded exchange, stored one per line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CassetteEntry {
    pub hash: String,
    pub model: String,
    pub response: String,
    pub attempts: u32,
}

/// Wraps a live backend and appends every successful exchange to a cassette.
pub struct RecordingBackend<B> {
    inner: B,
    path: PathBuf,
    file: Mutex<File>,
}

impl<B: Backend> RecordingBackend<B> {
    pub fn create(inner: B, path: &Path) -> std::io::Result<Self> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self {
            inner,
            path: path.to_path_buf(),
            file: Mutex::new(file),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

impl<B: Backend> Backend for RecordingBackend<B> {
    fn complete(&self, request: &CompletionRequest) -> Result<Completion, BackendError> {
        let completion = self.inner.complete(request)?;
        let entry = CassetteEntry {
            hash: request.request_hash(),
            model: request.model.clone(),
            response: completion.text.clone(),
            attempts: completion.attempts,
        };
        let line = serde_json::to_string(&entry).expect("entries serialize");
        let mut f = self.file.lock().expect("cassette lock");
        writeln!(f, "{line}").map_err(|e| BackendError::Protocol {
            reason: format!("cannot append to cassette {}: {e}", self.path.display()),
        })?;
        Ok(completion)
    }

    fn identity(&self) -> String {
        format!("record:{}", self.inner.identity())
    }
}

/// Answers only from a recorded cassette; anything unrecorded is a miss.
#[derive(Debug, Clone)]
pub struct ReplayBackend {
    name: String,
    entries: HashMap<String, CassetteEntry>,
}

impl ReplayBackend {
    pub fn open(path: &Path) -> std::io::Result<Self> {
        let file = File::open(path)?;
        let mut entries = Vec::new();
        for line in BufReader::new(file).lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            entries.push(
                serde_json::from_str(&line)
                    .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?,
            );
        }
        Ok(Self::from_entries(format!("cassette:{}", path.display()), entries))
    }

    /// The first recording of a request wins.
    pub fn from_entries(name: impl Into<String>, entries: Vec<CassetteEntry>) -> Self {
        let mut map = HashMap::new();
        for e in entries {
            map.entry(e.hash.clone()).or_insert(e);
        }
        Self {
            name: name.into(),
            entries: map,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl Backend for ReplayBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<Completion, BackendError> {
        let hash = request.request_hash();
        self.entries
            .get(&hash)
            .map(|e| Completion {
                text: e.response.clone(),
                attempts: e.attempts,
            })
            .ok_or(BackendError::CassetteMiss { hash })
    }

    fn identity(&self) -> String {
        self.name.clone()
    }
}
