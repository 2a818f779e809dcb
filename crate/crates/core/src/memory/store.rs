use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use serde::Serialize;

use super::{cosine, is_valid_embedding, MemoryError, MemoryKind, MemoryRecord, EMB_DIM};
use crate::hashing::json_digest;

/// Restricts which records a query looks at. Empty fields match everything.
#[derive(Debug, Clone, Default)]
pub struct RecordFilter {
    pub rooms: Vec<String>,
    pub kinds: Vec<MemoryKind>,
}

impl RecordFilter {
    pub fn room(room: impl Into<String>) -> Self {
        Self {
            rooms: vec![room.into()],
            kinds: Vec::new(),
        }
    }

    pub fn with_kind(mut self, kind: MemoryKind) -> Self {
        self.kinds.push(kind);
        self
    }

    fn matches(&self, record: &MemoryRecord) -> bool {
        (self.rooms.is_empty() || self.rooms.iter().any(|r| *r == record.room_id))
            && (self.kinds.is_empty() || self.kinds.contains(&record.kind))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoredMemory {
    pub record: MemoryRecord,
    pub score: f64,
}

/// Insertion-ordered record table shared by both adapters.
#[derive(Debug, Default)]
pub struct MemoryIndex {
    records: Vec<MemoryRecord>,
    by_id: HashMap<String, usize>,
}

#[derive(Clone, Copy)]
struct Ranked {
    score: f64,
    created_at: i64,
    seq: usize,
}

impl Ranked {
    // higher is better: score, then newer, then later insertion
    fn cmp_rank(&self, other: &Self) -> Ordering {
        self.score
            .total_cmp(&other.score)
            .then(self.created_at.cmp(&other.created_at))
            .then(self.seq.cmp(&other.seq))
    }
}

impl PartialEq for Ranked {
    fn eq(&self, other: &Self) -> bool {
        self.cmp_rank(other) == Ordering::Equal
    }
}
impl Eq for Ranked {}
impl PartialOrd for Ranked {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Ranked {
    fn cmp(&self, other: &Self) -> Ordering {
        self.cmp_rank(other)
    }
}

impl MemoryIndex {
    pub fn insert(&mut self, record: MemoryRecord) -> Result<(), MemoryError> {
        self.check(&record)?;
        self.by_id.insert(record.id.clone(), self.records.len());
        self.records.push(record);
        Ok(())
    }

    fn check(&self, record: &MemoryRecord) -> Result<(), MemoryError> {
        if self.by_id.contains_key(&record.id) {
            return Err(MemoryError::DuplicateId(record.id.clone()));
        }
        if !is_valid_embedding(&record.embedding) {
            return Err(MemoryError::InvalidEmbedding {
                expected: EMB_DIM,
                len: record.embedding.len(),
            });
        }
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&MemoryRecord> {
        self.by_id.get(id).map(|&i| &self.records[i])
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[MemoryRecord] {
        &self.records
    }

    /// Up to `k` newest MESSAGE records of the room, oldest first.
    pub fn recent(&self, room_id: &str, k: usize) -> Vec<MemoryRecord> {
        self.newest(&RecordFilter::room(room_id).with_kind(MemoryKind::Message), k)
    }

    /// Up to `k` newest records matching `filter`, oldest first. Equal
    /// timestamps keep insertion order.
    pub fn newest(&self, filter: &RecordFilter, k: usize) -> Vec<MemoryRecord> {
        let mut hits: Vec<&MemoryRecord> =
            self.records.iter().filter(|r| filter.matches(r)).collect();
        hits.sort_by_key(|r| r.created_at);
        let skip = hits.len().saturating_sub(k);
        hits.into_iter().skip(skip).cloned().collect()
    }

    /// Exact top-`k` by cosine similarity with a bounded min-heap.
    pub fn search(
        &self,
        query: &[f32],
        k: usize,
        min_similarity: f64,
        filter: &RecordFilter,
    ) -> Vec<ScoredMemory> {
        if k == 0 || query.iter().all(|x| *x == 0.0) {
            return Vec::new();
        }
        let mut heap: BinaryHeap<Reverse<Ranked>> = BinaryHeap::with_capacity(k + 1);
        for (seq, record) in self.records.iter().enumerate() {
            if !filter.matches(record) {
                continue;
            }
            let score = cosine(query, &record.embedding);
            if score < min_similarity {
                continue;
            }
            let ranked = Ranked {
                score,
                created_at: record.created_at,
                seq,
            };
            if heap.len() < k {
                heap.push(Reverse(ranked));
            } else if let Some(Reverse(worst)) = heap.peek() {
                if ranked > *worst {
                    heap.pop();
                    heap.push(Reverse(ranked));
                }
            }
        }
        let mut best: Vec<Ranked> = heap.into_iter().map(|Reverse(r)| r).collect();
        best.sort_by(|a, b| b.cmp(a));
        best.into_iter()
            .map(|r| ScoredMemory {
                record: self.records[r.seq].clone(),
                score: r.score,
            })
            .collect()
    }

    pub fn list(&self, filter: &RecordFilter) -> Vec<MemoryRecord> {
        self.records
            .iter()
            .filter(|r| filter.matches(r))
            .cloned()
            .collect()
    }

    pub fn digest(&self) -> String {
        json_digest(&self.records)
    }
}

/// Storage seam for memory records. Reads may run concurrently; writes are
/// serialized by the adapter.
pub trait MemoryAdapter: Send + Sync {
    fn name(&self) -> &'static str;
    fn store(&self, record: MemoryRecord) -> Result<(), MemoryError>;
    fn get(&self, id: &str) -> Option<MemoryRecord>;
    fn recent(&self, room_id: &str, k: usize) -> Vec<MemoryRecord>;
    fn newest(&self, filter: &RecordFilter, k: usize) -> Vec<MemoryRecord>;
    fn search_similar(
        &self,
        query: &[f32],
        k: usize,
        min_similarity: f64,
        filter: &RecordFilter,
    ) -> Vec<ScoredMemory>;
    fn list(&self, filter: &RecordFilter) -> Vec<MemoryRecord>;
    fn count(&self) -> usize;
    fn digest(&self) -> String;
    fn flush(&self) -> Result<(), MemoryError> {
        Ok(())
    }
}

#[derive(Debug, Default)]
pub struct InMemoryAdapter {
    index: RwLock<MemoryIndex>,
}

impl InMemoryAdapter {
    pub fn new() -> Self {
        Self::default()
    }
}

macro_rules! read_methods {
    () => {
        fn get(&self, id: &str) -> Option<MemoryRecord> {
            self.index.read().unwrap().get(id).cloned()
        }

        fn recent(&self, room_id: &str, k: usize) -> Vec<MemoryRecord> {
            self.index.read().unwrap().recent(room_id, k)
        }

        fn newest(&self, filter: &RecordFilter, k: usize) -> Vec<MemoryRecord> {
            self.index.read().unwrap().newest(filter, k)
        }

        fn search_similar(
            &self,
            query: &[f32],
            k: usize,
            min_similarity: f64,
            filter: &RecordFilter,
        ) -> Vec<ScoredMemory> {
            self.index
                .read()
                .unwrap()
                .search(query, k, min_similarity, filter)
        }

        fn list(&self, filter: &RecordFilter) -> Vec<MemoryRecord> {
            self.index.read().unwrap().list(filter)
        }

        fn count(&self) -> usize {
            self.index.read().unwrap().len()
        }

        fn digest(&self) -> String {
            self.index.read().unwrap().digest()
        }
    };
}

impl MemoryAdapter for InMemoryAdapter {
    fn name(&self) -> &'static str {
        "memory"
    }

    fn store(&self, record: MemoryRecord) -> Result<(), MemoryError> {
        self.index.write().unwrap().insert(record)
    }

    read_methods!();
}

/// Append-only newline-delimited JSON log. The index is rebuilt by a full
/// scan on open.
#[derive(Debug)]
pub struct FileAdapter {
    path: PathBuf,
    index: RwLock<MemoryIndex>,
    file: Mutex<File>,
}

impl FileAdapter {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, MemoryError> {
        let path = path.as_ref().to_path_buf();
        let open_err = |e: std::io::Error| {
            MemoryError::AdapterOpenFailure(format!("{}: {e}", path.display()))
        };
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(open_err)?;
        }
        let mut index = MemoryIndex::default();
        if path.exists() {
            let reader = BufReader::new(File::open(&path).map_err(open_err)?);
            for (lineno, line) in reader.lines().enumerate() {
                let line = line.map_err(open_err)?;
                if line.trim().is_empty() {
                    continue;
                }
                let record: MemoryRecord = serde_json::from_str(&line).map_err(|e| {
                    MemoryError::AdapterOpenFailure(format!(
                        "{}:{}: {e}",
                        path.display(),
                        lineno + 1
                    ))
                })?;
                index
                    .insert(record)
                    .map_err(|e| MemoryError::AdapterOpenFailure(e.to_string()))?;
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(open_err)?;
        Ok(Self {
            path,
            index: RwLock::new(index),
            file: Mutex::new(file),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

impl MemoryAdapter for FileAdapter {
    fn name(&self) -> &'static str {
        "file"
    }

    fn store(&self, record: MemoryRecord) -> Result<(), MemoryError> {
        let mut index = self.index.write().unwrap();
        index.check(&record)?;
        let mut line = serde_json::to_string(&record)
            .map_err(|e| MemoryError::AdapterWriteFailure(e.to_string()))?;
        line.push('\n');
        {
            let mut file = self.file.lock().unwrap();
            file.write_all(line.as_bytes())
                .and_then(|_| file.flush())
                .map_err(|e| MemoryError::AdapterWriteFailure(e.to_string()))?;
        }
        index.insert(record)
    }

    fn flush(&self) -> Result<(), MemoryError> {
        self.file
            .lock()
            .unwrap()
            .sync_all()
            .map_err(|e| MemoryError::AdapterWriteFailure(e.to_string()))
    }

    read_methods!();
}

/// Opens the adapter named by `kind` ("memory" or "file").
pub fn open_adapter(
    kind: &str,
    file_path: Option<&Path>,
) -> Result<Box<dyn MemoryAdapter>, MemoryError> {
    match kind {
        "memory" => Ok(Box::new(InMemoryAdapter::new())),
        "file" => {
            let path = file_path.ok_or_else(|| {
                MemoryError::AdapterOpenFailure("file adapter requires MEMORY_FILE".into())
            })?;
            Ok(Box::new(FileAdapter::open(path)?))
        }
        other => Err(MemoryError::AdapterOpenFailure(format!(
            "unknown database adapter `{other}`"
        ))),
    }
}
