//! Frame manifest (JSON Lines) and `EMB1` embedding file handling.
//!
//! `EMB1` layout, all integers little-endian:
//!
//! ```text
//! "EMB1" | u32 row count | u32 dim | rows...
//! row := u16 id length | id bytes (UTF-8) | dim x f32
//! ```

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{Map, Value};

use crate::label::Label;

const MAGIC: &[u8; 4] = b"EMB1";
const HEADER_LEN: usize = 12;

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: malformed JSON: {message}")]
    MalformedJson { line: usize, message: String },
    #[error("line {line}: missing required field `{field}`")]
    MissingField { line: usize, field: &'static str },
    #[error("line {line}: field `{field}`: {message}")]
    InvalidField {
        line: usize,
        field: &'static str,
        message: String,
    },
    #[error("line {line}: timestamp must be an integer number of epoch seconds")]
    MalformedTimestamp { line: usize },
    #[error("duplicate frame id {0:?}")]
    DuplicateFrameId(String),
    #[error("line {line}: timestamps for participant {participant:?} go backwards")]
    NonMonotonicTimestamps { participant: String, line: usize },
    #[error("embedding file does not start with \"EMB1\"")]
    BadMagic,
    #[error("embedding dimension must be positive")]
    ZeroDim,
    #[error("embedding dimension mismatch: expected {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },
    #[error("embedding file is truncated")]
    TruncatedFile,
    #[error("embedding file has {0} trailing bytes after the last row")]
    TrailingBytes(usize),
    #[error("embedding row {row}: frame id is not valid UTF-8")]
    InvalidFrameId { row: usize },
    #[error("embedding row {row}: frame id longer than 65535 bytes")]
    FrameIdTooLong { row: usize },
    #[error("embedding row {row}: non-finite value")]
    NonFiniteValue { row: usize },
    #[error("embedding for frame {0:?} is the zero vector")]
    ZeroVector(String),
    #[error("no embedding for frame {0:?}")]
    EmbeddingMissing(String),
    #[error("embedding for {0:?} has no matching manifest frame")]
    OrphanEmbedding(String),
}

impl IngestError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        IngestError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// One egocentric image as listed in the manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord {
    pub frame_id: String,
    pub participant_id: String,
    /// Epoch seconds.
    pub timestamp: i64,
    pub image_path: String,
    /// Ground-truth caption, when annotated.
    pub annotation: Option<String>,
    pub label: Option<Label>,
    /// Keys this version does not interpret; written back unchanged.
    pub extra: BTreeMap<String, Value>,
}

impl FrameRecord {
    pub fn new(
        frame_id: impl Into<String>,
        participant_id: impl Into<String>,
        timestamp: i64,
        image_path: impl Into<String>,
    ) -> Self {
        FrameRecord {
            frame_id: frame_id.into(),
            participant_id: participant_id.into(),
            timestamp,
            image_path: image_path.into(),
            annotation: None,
            label: None,
            extra: BTreeMap::new(),
        }
    }

    pub fn with_label(mut self, label: Label) -> Self {
        self.label = Some(label);
        self
    }

    pub fn with_annotation(mut self, annotation: impl Into<String>) -> Self {
        self.annotation = Some(annotation.into());
        self
    }

    pub fn to_json(&self) -> Value {
        let mut obj: Map<String, Value> = self.extra.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
        obj.insert("frame_id".into(), self.frame_id.clone().into());
        obj.insert("participant_id".into(), self.participant_id.clone().into());
        obj.insert("timestamp".into(), self.timestamp.into());
        obj.insert("image_path".into(), self.image_path.clone().into());
        if let Some(a) = &self.annotation {
            obj.insert("annotation".into(), a.clone().into());
        }
        if let Some(l) = self.label {
            obj.insert("label".into(), l.as_str().into());
        }
        Value::Object(obj)
    }

    fn from_json(line: usize, value: Value) -> Result<Self, IngestError> {
        let Value::Object(mut obj) = value else {
            return Err(IngestError::MalformedJson {
                line,
                message: "expected a JSON object".into(),
            });
        };
        let mut take_str = |field: &'static str| -> Result<String, IngestError> {
            match obj.remove(field) {
                None | Some(Value::Null) => Err(IngestError::MissingField { line, field }),
                Some(Value::String(s)) if !s.is_empty() => Ok(s),
                Some(_) => Err(IngestError::InvalidField {
                    line,
                    field,
                    message: "expected a non-empty string".into(),
                }),
            }
        };
        let frame_id = take_str("frame_id")?;
        let participant_id = take_str("participant_id")?;
        let image_path = take_str("image_path")?;
        let timestamp = match obj.remove("timestamp") {
            None | Some(Value::Null) => {
                return Err(IngestError::MissingField {
                    line,
                    field: "timestamp",
                })
            }
            Some(Value::Number(n)) => n.as_i64().ok_or(IngestError::MalformedTimestamp { line })?,
            Some(_) => return Err(IngestError::MalformedTimestamp { line }),
        };
        let annotation = match obj.remove("annotation") {
            None | Some(Value::Null) => None,
            Some(Value::String(s)) => Some(s),
            Some(_) => {
                return Err(IngestError::InvalidField {
                    line,
                    field: "annotation",
                    message: "expected a string".into(),
                })
            }
        };
        let label = match obj.remove("label") {
            None | Some(Value::Null) => None,
            Some(Value::String(s)) => Some(s.parse::<Label>().map_err(|message| IngestError::InvalidField {
                line,
                field: "label",
                message,
            })?),
            Some(_) => {
                return Err(IngestError::InvalidField {
                    line,
                    field: "label",
                    message: "expected one of TV, Smartphone, Computer, NonScreen".into(),
                })
            }
        };
        Ok(FrameRecord {
            frame_id,
            participant_id,
            timestamp,
            image_path,
            annotation,
            label,
            extra: obj.into_iter().collect(),
        })
    }
}

/// Parses manifest text. Records are returned in file order.
pub fn parse_manifest_str(text: &str) -> Result<Vec<FrameRecord>, IngestError> {
    let mut frames = Vec::new();
    let mut seen = HashSet::new();
    let mut last_ts: HashMap<String, i64> = HashMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(raw).map_err(|e| IngestError::MalformedJson {
            line,
            message: e.to_string(),
        })?;
        let rec = FrameRecord::from_json(line, value)?;
        if !seen.insert(rec.frame_id.clone()) {
            return Err(IngestError::DuplicateFrameId(rec.frame_id));
        }
        if let Some(prev) = last_ts.insert(rec.participant_id.clone(), rec.timestamp) {
            if rec.timestamp < prev {
                return Err(IngestError::NonMonotonicTimestamps {
                    participant: rec.participant_id,
                    line,
                });
            }
        }
        frames.push(rec);
    }
    Ok(frames)
}

pub fn parse_manifest(path: &Path) -> Result<Vec<FrameRecord>, IngestError> {
    let text = fs::read_to_string(path).map_err(|e| IngestError::io(path, e))?;
    parse_manifest_str(&text)
}

pub fn serialize_manifest(frames: &[FrameRecord]) -> String {
    let mut out = String::new();
    for f in frames {
        out.push_str(&f.to_json().to_string());
        out.push('\n');
    }
    out
}

pub fn write_manifest(path: &Path, frames: &[FrameRecord]) -> Result<(), IngestError> {
    fs::write(path, serialize_manifest(frames)).map_err(|e| IngestError::io(path, e))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRow {
    pub frame_id: String,
    pub vector: Vec<f32>,
}

/// Row-per-frame embedding vectors of a fixed dimension.
///
/// Every row is finite and nonzero; [`EmbeddingMatrix::push`] enforces it.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    dim: usize,
    rows: Vec<EmbeddingRow>,
}

impl EmbeddingMatrix {
    pub fn new(dim: usize) -> Result<Self, IngestError> {
        if dim == 0 {
            return Err(IngestError::ZeroDim);
        }
        Ok(EmbeddingMatrix { dim, rows: Vec::new() })
    }

    pub fn push(&mut self, frame_id: impl Into<String>, vector: Vec<f32>) -> Result<(), IngestError> {
        let frame_id = frame_id.into();
        if vector.len() != self.dim {
            return Err(IngestError::DimMismatch {
                expected: self.dim,
                found: vector.len(),
            });
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(IngestError::NonFiniteValue { row: self.rows.len() });
        }
        if vector.iter().all(|&v| v == 0.0) {
            return Err(IngestError::ZeroVector(frame_id));
        }
        self.rows.push(EmbeddingRow { frame_id, vector });
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> &[EmbeddingRow] {
        &self.rows
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, IngestError> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.rows.len() * (2 + 16 + 4 * self.dim));
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.rows.len() as u32).to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        for (row, r) in self.rows.iter().enumerate() {
            let id = r.frame_id.as_bytes();
            let len = u16::try_from(id.len()).map_err(|_| IngestError::FrameIdTooLong { row })?;
            out.extend_from_slice(&len.to_le_bytes());
            out.extend_from_slice(id);
            for v in &r.vector {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, IngestError> {
        if bytes.len() < 4 || &bytes[..4] != MAGIC {
            return Err(IngestError::BadMagic);
        }
        let mut cur = Cursor { bytes, pos: 4 };
        let count = cur.u32()? as usize;
        let dim = cur.u32()? as usize;
        let mut m = EmbeddingMatrix::new(dim)?;
        let mut seen = HashSet::new();
        for row in 0..count {
            let len = cur.u16()? as usize;
            let id = std::str::from_utf8(cur.take(len)?)
                .map_err(|_| IngestError::InvalidFrameId { row })?
                .to_owned();
            let raw = cur.take(dim.checked_mul(4).ok_or(IngestError::TruncatedFile)?)?;
            let vector: Vec<f32> = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            if !seen.insert(id.clone()) {
                return Err(IngestError::DuplicateFrameId(id));
            }
            m.push(id, vector)?;
        }
        let rest = bytes.len() - cur.pos;
        if rest != 0 {
            return Err(IngestError::TrailingBytes(rest));
        }
        Ok(m)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], IngestError> {
        let end = self.pos.checked_add(n).ok_or(IngestError::TruncatedFile)?;
        let s = self.bytes.get(self.pos..end).ok_or(IngestError::TruncatedFile)?;
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16, IngestError> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32, IngestError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

pub fn load_embeddings(path: &Path) -> Result<EmbeddingMatrix, IngestError> {
    let bytes = fs::read(path).map_err(|e| IngestError::io(path, e))?;
    EmbeddingMatrix::from_bytes(&bytes)
}

pub fn write_embeddings(path: &Path, m: &EmbeddingMatrix) -> Result<(), IngestError> {
    fs::write(path, m.to_bytes()?).map_err(|e| IngestError::io(path, e))
}

/// Manifest frames joined with their embeddings.
///
/// Frames are sorted by `(participant_id, timestamp, frame_id)` and embedding
/// row `i` belongs to frame `i`.
#[derive(Debug, Clone)]
pub struct Dataset {
    frames: Vec<FrameRecord>,
    embeddings: EmbeddingMatrix,
    index: HashMap<String, usize>,
}

impl Dataset {
    pub fn frames(&self) -> &[FrameRecord] {
        &self.frames
    }

    pub fn embeddings(&self) -> &EmbeddingMatrix {
        &self.embeddings
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn position(&self, frame_id: &str) -> Option<usize> {
        self.index.get(frame_id).copied()
    }

    pub fn frame(&self, frame_id: &str) -> Option<&FrameRecord> {
        self.position(frame_id).map(|i| &self.frames[i])
    }

    pub fn vector(&self, i: usize) -> &[f32] {
        &self.embeddings.rows[i].vector
    }
}

pub fn validate_dataset(mut frames: Vec<FrameRecord>, embeddings: EmbeddingMatrix) -> Result<Dataset, IngestError> {
    frames.sort_by(|a, b| {
        (&a.participant_id, a.timestamp, &a.frame_id).cmp(&(&b.participant_id, b.timestamp, &b.frame_id))
    });
    for w in frames.windows(2) {
        if w[0].frame_id == w[1].frame_id {
            return Err(IngestError::DuplicateFrameId(w[0].frame_id.clone()));
        }
    }
    let dim = embeddings.dim;
    let mut by_id: HashMap<String, Vec<f32>> = HashMap::with_capacity(embeddings.rows.len());
    for r in embeddings.rows {
        if by_id.contains_key(&r.frame_id) {
            return Err(IngestError::DuplicateFrameId(r.frame_id));
        }
        by_id.insert(r.frame_id, r.vector);
    }
    // Check frame-side gaps before orphans so the reported id is stable.
    if let Some(f) = frames.iter().find(|f| !by_id.contains_key(&f.frame_id)) {
        return Err(IngestError::EmbeddingMissing(f.frame_id.clone()));
    }
    if by_id.len() > frames.len() {
        let known: HashSet<&str> = frames.iter().map(|f| f.frame_id.as_str()).collect();
        let orphan = by_id
            .keys()
            .filter(|k| !known.contains(k.as_str()))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .next()
            .cloned()
            .unwrap_or_default();
        return Err(IngestError::OrphanEmbedding(orphan));
    }
    let mut rows = Vec::with_capacity(frames.len());
    let mut index = HashMap::with_capacity(frames.len());
    for (i, f) in frames.iter().enumerate() {
        let vector = by_id.remove(&f.frame_id).expect("checked above");
        rows.push(EmbeddingRow {
            frame_id: f.frame_id.clone(),
            vector,
        });
        index.insert(f.frame_id.clone(), i);
    }
    Ok(Dataset {
        frames,
        embeddings: EmbeddingMatrix { dim, rows },
        index,
    })
}

pub fn load_dataset(manifest: &Path, embeddings: &Path) -> Result<Dataset, IngestError> {
    let frames = parse_manifest(manifest)?;
    let m = load_embeddings(embeddings)?;
    validate_dataset(frames, m)
}
