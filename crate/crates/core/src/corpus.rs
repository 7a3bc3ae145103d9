//! Dialogue corpora, precomputed utterance embeddings, manifest checks and
//! synthetic corpus generation.
//!
//! On disk a corpus is a directory holding `meta.json` (class count and label
//! names) plus one line-delimited JSON file per split (`train.jsonl`,
//! `dev.jsonl`, `test.jsonl`). Each line is one dialogue:
//!
//! ```text
//! {"id":"d1","utterances":[{"speaker":"A","text":"hi","label":4}],"edges":[[0,1,"QAP"]]}
//! ```
//!
//! Embeddings are a raw little-endian `f32` file of concatenated rows plus a
//! JSON manifest naming the dialogue each block of rows belongs to.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::de::{self, SeqAccess, Visitor};
use serde::ser::SerializeSeq;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::autodiff::Matrix;

/// MELD emotion classes in canonical index order.
pub const MELD_LABELS: [&str; 7] = [
    "anger", "disgust", "sadness", "joy", "neutral", "surprise", "fear",
];

pub const META_FILE: &str = "meta.json";
pub const EMBEDDINGS_BIN: &str = "embeddings.bin";
pub const EMBEDDINGS_MANIFEST: &str = "embeddings.json";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}:{line}: dialogue {dialogue}: edge src must precede tgt (got {src} -> {tgt})")]
    EdgeOrder {
        path: PathBuf,
        line: usize,
        dialogue: String,
        src: usize,
        tgt: usize,
    },
    #[error("{path}:{line}: dialogue {dialogue}: edge ({src}, {tgt}) out of range for {n} utterances")]
    EdgeRange {
        path: PathBuf,
        line: usize,
        dialogue: String,
        src: usize,
        tgt: usize,
        n: usize,
    },
    #[error("{path}:{line}: dialogue {dialogue}: label {label} out of range for {num_classes} classes")]
    LabelRange {
        path: PathBuf,
        line: usize,
        dialogue: String,
        label: usize,
        num_classes: usize,
    },
    #[error("{path}:{line}: dialogue {dialogue} has no utterances")]
    EmptyDialogue {
        path: PathBuf,
        line: usize,
        dialogue: String,
    },
    #[error("duplicate dialogue id {0}")]
    DuplicateId(String),
    #[error("embedding size mismatch: {0}")]
    SizeMismatch(String),
    #[error("non-finite embedding value in dialogue {dialogue}, row {row}, column {col}")]
    NonFiniteEmbedding {
        dialogue: String,
        row: usize,
        col: usize,
    },
    #[error("no embeddings for dialogue {0}")]
    MissingDialogue(String),
    #[error("embedding coverage: {0}")]
    Coverage(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, CorpusError>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Utterance {
    pub index: usize,
    pub speaker: String,
    pub text: Option<String>,
    pub label: usize,
}

/// Directed discourse link from an earlier utterance to a later one.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Edge {
    pub src: usize,
    pub tgt: usize,
    pub relation: Option<String>,
}

impl Serialize for Edge {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let len = if self.relation.is_some() { 3 } else { 2 };
        let mut seq = serializer.serialize_seq(Some(len))?;
        seq.serialize_element(&self.src)?;
        seq.serialize_element(&self.tgt)?;
        if let Some(r) = &self.relation {
            seq.serialize_element(r)?;
        }
        seq.end()
    }
}

impl<'de> Deserialize<'de> for Edge {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        struct EdgeVisitor;

        impl<'de> Visitor<'de> for EdgeVisitor {
            type Value = Edge;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("an edge [src, tgt] or [src, tgt, relation]")
            }

            fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> std::result::Result<Edge, A::Error> {
                let src = seq
                    .next_element()?
                    .ok_or_else(|| de::Error::invalid_length(0, &self))?;
                let tgt = seq
                    .next_element()?
                    .ok_or_else(|| de::Error::invalid_length(1, &self))?;
                let relation: Option<Option<String>> = seq.next_element()?;
                if seq.next_element::<de::IgnoredAny>()?.is_some() {
                    return Err(de::Error::invalid_length(4, &self));
                }
                Ok(Edge {
                    src,
                    tgt,
                    relation: relation.flatten(),
                })
            }
        }

        deserializer.deserialize_seq(EdgeVisitor)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dialogue {
    pub id: String,
    pub utterances: Vec<Utterance>,
    pub edges: Vec<Edge>,
}

impl Dialogue {
    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.utterances.iter().map(|u| u.label).collect()
    }

    /// `(src, tgt)` pairs with relation types dropped.
    pub fn edge_pairs(&self) -> Vec<(usize, usize)> {
        self.edges.iter().map(|e| (e.src, e.tgt)).collect()
    }
}

#[derive(Serialize, Deserialize)]
struct UtteranceRecord {
    speaker: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    text: Option<String>,
    label: usize,
}

#[derive(Serialize, Deserialize)]
struct DialogueRecord {
    id: String,
    utterances: Vec<UtteranceRecord>,
    #[serde(default)]
    edges: Vec<Edge>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Dev, Split::Test];

    pub fn file_name(self) -> &'static str {
        match self {
            Split::Train => "train.jsonl",
            Split::Dev => "dev.jsonl",
            Split::Test => "test.jsonl",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split {other:?} (expected train, dev or test)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusMeta {
    pub num_classes: usize,
    pub label_names: Vec<String>,
}

impl Default for CorpusMeta {
    fn default() -> Self {
        Self {
            num_classes: MELD_LABELS.len(),
            label_names: MELD_LABELS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Corpus {
    pub train: Vec<Dialogue>,
    pub dev: Vec<Dialogue>,
    pub test: Vec<Dialogue>,
    pub num_classes: usize,
    pub label_names: Vec<String>,
}

impl Corpus {
    pub fn split(&self, split: Split) -> &[Dialogue] {
        match split {
            Split::Train => &self.train,
            Split::Dev => &self.dev,
            Split::Test => &self.test,
        }
    }

    pub fn split_mut(&mut self, split: Split) -> &mut Vec<Dialogue> {
        match split {
            Split::Train => &mut self.train,
            Split::Dev => &mut self.dev,
            Split::Test => &mut self.test,
        }
    }

    pub fn dialogues(&self) -> impl Iterator<Item = &Dialogue> {
        self.train.iter().chain(&self.dev).chain(&self.test)
    }

    pub fn meta(&self) -> CorpusMeta {
        CorpusMeta {
            num_classes: self.num_classes,
            label_names: self.label_names.clone(),
        }
    }

    pub fn label_name(&self, label: usize) -> &str {
        self.label_names.get(label).map(String::as_str).unwrap_or("?")
    }
}

/// Parse one dialogue line, enforcing the per-dialogue invariants.
/// Repeated `(src, tgt)` pairs collapse to the first occurrence.
pub fn parse_dialogue(line: &str, num_classes: usize, path: &Path, line_no: usize) -> Result<Dialogue> {
    let record: DialogueRecord = serde_json::from_str(line).map_err(|e| CorpusError::Parse {
        path: path.to_path_buf(),
        line: line_no,
        message: e.to_string(),
    })?;
    let n = record.utterances.len();
    if n == 0 {
        return Err(CorpusError::EmptyDialogue {
            path: path.to_path_buf(),
            line: line_no,
            dialogue: record.id,
        });
    }
    let mut utterances = Vec::with_capacity(n);
    for (index, u) in record.utterances.into_iter().enumerate() {
        if u.label >= num_classes {
            return Err(CorpusError::LabelRange {
                path: path.to_path_buf(),
                line: line_no,
                dialogue: record.id,
                label: u.label,
                num_classes,
            });
        }
        utterances.push(Utterance {
            index,
            speaker: u.speaker,
            text: u.text,
            label: u.label,
        });
    }
    let mut seen = HashSet::new();
    let mut edges = Vec::with_capacity(record.edges.len());
    for e in record.edges {
        if e.src >= e.tgt {
            return Err(CorpusError::EdgeOrder {
                path: path.to_path_buf(),
                line: line_no,
                dialogue: record.id,
                src: e.src,
                tgt: e.tgt,
            });
        }
        if e.tgt >= n {
            return Err(CorpusError::EdgeRange {
                path: path.to_path_buf(),
                line: line_no,
                dialogue: record.id,
                src: e.src,
                tgt: e.tgt,
                n,
            });
        }
        if seen.insert((e.src, e.tgt)) {
            edges.push(e);
        }
    }
    Ok(Dialogue {
        id: record.id,
        utterances,
        edges,
    })
}

/// Serialize a dialogue as one JSON line (no trailing newline).
pub fn dialogue_to_line(d: &Dialogue) -> String {
    let record = DialogueRecord {
        id: d.id.clone(),
        utterances: d
            .utterances
            .iter()
            .map(|u| UtteranceRecord {
                speaker: u.speaker.clone(),
                text: u.text.clone(),
                label: u.label,
            })
            .collect(),
        edges: d.edges.clone(),
    };
    serde_json::to_string(&record).expect("dialogue records always serialize")
}

/// Read a line-delimited dialogue file. Blank lines are skipped.
pub fn load_dialogues(path: &Path, num_classes: usize) -> Result<Vec<Dialogue>> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(parse_dialogue(&line, num_classes, path, i + 1)?);
    }
    Ok(out)
}

pub fn write_dialogues(path: &Path, dialogues: &[Dialogue]) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    for d in dialogues {
        writeln!(w, "{}", dialogue_to_line(d)).map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

fn check_unique_ids(corpus: &Corpus) -> Result<()> {
    let mut ids = HashSet::new();
    for d in corpus.dialogues() {
        if !ids.insert(d.id.as_str()) {
            return Err(CorpusError::DuplicateId(d.id.clone()));
        }
    }
    Ok(())
}

/// Load a corpus.
///
/// A directory is read as `meta.json` plus `train/dev/test.jsonl` (missing
/// split files are empty splits; a missing `meta.json` means the seven MELD
/// classes). A single file is loaded as the train split under MELD labels.
pub fn load_corpus(path: &Path) -> Result<Corpus> {
    let meta_path = path.join(META_FILE);
    let (meta, files): (CorpusMeta, Vec<(Split, PathBuf)>) = if path.is_dir() {
        let meta = if meta_path.exists() {
            let text = fs::read_to_string(&meta_path).map_err(io_err(&meta_path))?;
            let meta: CorpusMeta = serde_json::from_str(&text).map_err(|e| CorpusError::Parse {
                path: meta_path.clone(),
                line: e.line(),
                message: e.to_string(),
            })?;
            if meta.num_classes == 0 || meta.label_names.len() != meta.num_classes {
                return Err(CorpusError::InvalidConfig(format!(
                    "{}: num_classes {} with {} label names",
                    meta_path.display(),
                    meta.num_classes,
                    meta.label_names.len()
                )));
            }
            meta
        } else {
            CorpusMeta::default()
        };
        let files = Split::ALL
            .iter()
            .map(|&s| (s, path.join(s.file_name())))
            .filter(|(_, p)| p.exists())
            .collect();
        (meta, files)
    } else {
        (CorpusMeta::default(), vec![(Split::Train, path.to_path_buf())])
    };

    let mut corpus = Corpus {
        train: Vec::new(),
        dev: Vec::new(),
        test: Vec::new(),
        num_classes: meta.num_classes,
        label_names: meta.label_names,
    };
    if files.is_empty() {
        return Err(CorpusError::Io {
            path: path.to_path_buf(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "no split files found"),
        });
    }
    for (split, file) in files {
        *corpus.split_mut(split) = load_dialogues(&file, corpus.num_classes)?;
    }
    check_unique_ids(&corpus)?;
    Ok(corpus)
}

/// Write a corpus directory in the layout read by [`load_corpus`].
pub fn write_corpus(dir: &Path, corpus: &Corpus) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let meta_path = dir.join(META_FILE);
    let meta = serde_json::to_string_pretty(&corpus.meta()).expect("meta serializes");
    fs::write(&meta_path, meta + "\n").map_err(io_err(&meta_path))?;
    for split in Split::ALL {
        write_dialogues(&dir.join(split.file_name()), corpus.split(split))?;
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub dialogue_id: String,
    pub rows: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbeddingManifest {
    pub dim: usize,
    pub dtype: String,
    /// Total row count; checked against `order` when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rows: Option<usize>,
    pub order: Vec<ManifestEntry>,
}

/// Utterance embeddings keyed by dialogue id, widened to `f64`.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingStore {
    dim: usize,
    order: Vec<String>,
    blocks: HashMap<String, (usize, usize)>,
    data: Vec<f64>,
}

impl EmbeddingStore {
    /// Build from per-dialogue row blocks, each `rows x dim`.
    pub fn from_blocks(dim: usize, blocks: Vec<(String, Matrix)>) -> Result<Self> {
        let mut store = Self {
            dim,
            order: Vec::new(),
            blocks: HashMap::new(),
            data: Vec::new(),
        };
        for (id, m) in blocks {
            if m.cols() != dim {
                return Err(CorpusError::SizeMismatch(format!(
                    "dialogue {id} has width {}, expected {dim}",
                    m.cols()
                )));
            }
            for r in 0..m.rows() {
                for (c, v) in m.row(r).iter().enumerate() {
                    if !v.is_finite() {
                        return Err(CorpusError::NonFiniteEmbedding {
                            dialogue: id,
                            row: r,
                            col: c,
                        });
                    }
                }
            }
            if store.blocks.contains_key(&id) {
                return Err(CorpusError::DuplicateId(id));
            }
            let row_offset = store.data.len() / dim.max(1);
            store.blocks.insert(id.clone(), (row_offset, m.rows()));
            store.order.push(id);
            store.data.extend_from_slice(m.data());
        }
        Ok(store)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn total_rows(&self) -> usize {
        self.blocks.values().map(|(_, r)| r).sum()
    }

    pub fn dialogue_ids(&self) -> &[String] {
        &self.order
    }

    pub fn contains(&self, id: &str) -> bool {
        self.blocks.contains_key(id)
    }

    /// Flat row-major slice of a dialogue's rows.
    pub fn rows(&self, id: &str) -> Result<&[f64]> {
        let &(offset, rows) = self
            .blocks
            .get(id)
            .ok_or_else(|| CorpusError::MissingDialogue(id.to_string()))?;
        Ok(&self.data[offset * self.dim..(offset + rows) * self.dim])
    }

    /// The dialogue's embeddings as an `n x dim` matrix.
    pub fn matrix(&self, id: &str) -> Result<Matrix> {
        let rows = self.rows(id)?;
        Ok(Matrix::from_vec(rows.len() / self.dim.max(1), self.dim, rows.to_vec())
            .expect("block length is a multiple of dim"))
    }

    pub fn manifest(&self) -> EmbeddingManifest {
        EmbeddingManifest {
            dim: self.dim,
            dtype: "f32".into(),
            rows: Some(self.total_rows()),
            order: self
                .order
                .iter()
                .map(|id| ManifestEntry {
                    dialogue_id: id.clone(),
                    rows: self.blocks[id].1,
                })
                .collect(),
        }
    }

    /// Every utterance has exactly one row and every stored block belongs to
    /// a corpus dialogue.
    pub fn check_coverage(&self, corpus: &Corpus) -> Result<()> {
        let mut seen = 0;
        for d in corpus.dialogues() {
            let &(_, rows) = self
                .blocks
                .get(&d.id)
                .ok_or_else(|| CorpusError::MissingDialogue(d.id.clone()))?;
            if rows != d.len() {
                return Err(CorpusError::Coverage(format!(
                    "dialogue {} has {} utterances but {} embedding rows",
                    d.id,
                    d.len(),
                    rows
                )));
            }
            seen += 1;
        }
        if seen != self.blocks.len() {
            let ids: HashSet<&str> = corpus.dialogues().map(|d| d.id.as_str()).collect();
            let extra: Vec<&String> = self.order.iter().filter(|id| !ids.contains(id.as_str())).collect();
            return Err(CorpusError::Coverage(format!(
                "embeddings for dialogues not in the corpus: {extra:?}"
            )));
        }
        Ok(())
    }
}

/// Read a manifest and its binary file of little-endian `f32` rows.
pub fn load_embeddings(bin_path: &Path, manifest_path: &Path) -> Result<EmbeddingStore> {
    let text = fs::read_to_string(manifest_path).map_err(io_err(manifest_path))?;
    let manifest: EmbeddingManifest = serde_json::from_str(&text).map_err(|e| CorpusError::Parse {
        path: manifest_path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })?;
    if manifest.dtype != "f32" {
        return Err(CorpusError::InvalidConfig(format!(
            "unsupported embedding dtype {:?}",
            manifest.dtype
        )));
    }
    if manifest.dim == 0 {
        return Err(CorpusError::InvalidConfig("embedding dim must be positive".into()));
    }
    let listed: usize = manifest.order.iter().map(|e| e.rows).sum();
    if let Some(rows) = manifest.rows {
        if rows != listed {
            return Err(CorpusError::SizeMismatch(format!(
                "manifest declares {rows} rows but its order lists {listed}"
            )));
        }
    }
    let bytes = fs::read(bin_path).map_err(io_err(bin_path))?;
    let expected = listed * manifest.dim * 4;
    if bytes.len() != expected {
        return Err(CorpusError::SizeMismatch(format!(
            "{} is {} bytes, manifest implies {} rows x {} dims x 4 = {expected}",
            bin_path.display(),
            bytes.len(),
            listed,
            manifest.dim
        )));
    }
    let dim = manifest.dim;
    let mut blocks = Vec::with_capacity(manifest.order.len());
    let mut cursor = bytes.chunks_exact(4);
    for entry in manifest.order {
        let mut data = Vec::with_capacity(entry.rows * dim);
        for r in 0..entry.rows {
            for c in 0..dim {
                let chunk = cursor.next().expect("length checked above");
                let v = f32::from_le_bytes(chunk.try_into().unwrap());
                if !v.is_finite() {
                    return Err(CorpusError::NonFiniteEmbedding {
                        dialogue: entry.dialogue_id,
                        row: r,
                        col: c,
                    });
                }
                data.push(f64::from(v));
            }
        }
        let m = Matrix::from_vec(entry.rows, dim, data).expect("sized above");
        blocks.push((entry.dialogue_id, m));
    }
    EmbeddingStore::from_blocks(dim, blocks)
}

/// Write the store as `f32` rows plus manifest. Values narrow to `f32`.
pub fn write_embeddings(store: &EmbeddingStore, bin_path: &Path, manifest_path: &Path) -> Result<()> {
    let mut bytes = Vec::with_capacity(store.data.len() * 4);
    for id in &store.order {
        for v in store.rows(id)? {
            bytes.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    fs::write(bin_path, bytes).map_err(io_err(bin_path))?;
    let manifest = serde_json::to_string_pretty(&store.manifest()).expect("manifest serializes");
    fs::write(manifest_path, manifest + "\n").map_err(io_err(manifest_path))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub dev: usize,
    pub test: usize,
}

impl SplitCounts {
    pub fn get(&self, split: Split) -> usize {
        match split {
            Split::Train => self.train,
            Split::Dev => self.dev,
            Split::Test => self.test,
        }
    }

    fn delta(&self, expected: &SplitCounts) -> [i64; 3] {
        Split::ALL.map(|s| self.get(s) as i64 - expected.get(s) as i64)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpectedCounts {
    pub dialogues: SplitCounts,
    pub utterances: SplitCounts,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Language {
    French,
    Greek,
    Spanish,
    Polish,
}

impl Language {
    pub const ALL: [Language; 4] = [
        Language::French,
        Language::Greek,
        Language::Spanish,
        Language::Polish,
    ];

    /// Published M-MELD split sizes.
    pub fn expected_counts(self) -> ExpectedCounts {
        let (d, u) = match self {
            Language::French => ((633, 97, 224), (6537, 964, 2198)),
            Language::Greek => ((870, 103, 240), (9003, 1062, 2366)),
            Language::Spanish => ((769, 111, 268), (7890, 1064, 2546)),
            Language::Polish => ((858, 96, 235), (8928, 989, 2324)),
        };
        ExpectedCounts {
            dialogues: SplitCounts {
                train: d.0,
                dev: d.1,
                test: d.2,
            },
            utterances: SplitCounts {
                train: u.0,
                dev: u.1,
                test: u.2,
            },
        }
    }
}

impl FromStr for Language {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "french" | "fr" => Ok(Language::French),
            "greek" | "el" => Ok(Language::Greek),
            "spanish" | "es" => Ok(Language::Spanish),
            "polish" | "pl" => Ok(Language::Polish),
            other => Err(format!("unknown M-MELD language {other:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestReport {
    pub dialogues: SplitCounts,
    pub utterances: SplitCounts,
    pub label_histogram: Vec<usize>,
    pub expected: ExpectedCounts,
    /// actual − expected, in train/dev/test order.
    pub dialogue_delta: [i64; 3],
    pub utterance_delta: [i64; 3],
    pub pass: bool,
}

impl fmt::Display for ManifestReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<12}{:>10}{:>10}{:>8}", "count", "actual", "expected", "delta")?;
        for (i, split) in Split::ALL.iter().enumerate() {
            writeln!(
                f,
                "{:<12}{:>10}{:>10}{:>8}",
                format!("{split} dlg"),
                self.dialogues.get(*split),
                self.expected.dialogues.get(*split),
                self.dialogue_delta[i]
            )?;
        }
        for (i, split) in Split::ALL.iter().enumerate() {
            writeln!(
                f,
                "{:<12}{:>10}{:>10}{:>8}",
                format!("{split} utt"),
                self.utterances.get(*split),
                self.expected.utterances.get(*split),
                self.utterance_delta[i]
            )?;
        }
        writeln!(f, "labels      {:?}", self.label_histogram)?;
        write!(f, "result      {}", if self.pass { "PASS" } else { "FAIL" })
    }
}

/// Compare per-split dialogue and utterance counts against `expected`.
pub fn validate_manifest(corpus: &Corpus, expected: &ExpectedCounts) -> ManifestReport {
    let count = |f: &dyn Fn(&[Dialogue]) -> usize| SplitCounts {
        train: f(&corpus.train),
        dev: f(&corpus.dev),
        test: f(&corpus.test),
    };
    let dialogues = count(&|s| s.len());
    let utterances = count(&|s| s.iter().map(Dialogue::len).sum());
    let mut label_histogram = vec![0; corpus.num_classes];
    for d in corpus.dialogues() {
        for u in &d.utterances {
            label_histogram[u.label] += 1;
        }
    }
    let dialogue_delta = dialogues.delta(&expected.dialogues);
    let utterance_delta = utterances.delta(&expected.utterances);
    let pass = dialogue_delta.iter().chain(&utterance_delta).all(|&d| d == 0);
    ManifestReport {
        dialogues,
        utterances,
        label_histogram,
        expected: *expected,
        dialogue_delta,
        utterance_delta,
        pass,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SyntheticTask {
    /// Labels depend on the utterance's own embedding.
    Local,
    /// Labels depend on the embedding of the utterance's discourse predecessor.
    Discourse,
}

impl FromStr for SyntheticTask {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "local" => Ok(SyntheticTask::Local),
            "discourse" => Ok(SyntheticTask::Discourse),
            other => Err(format!("unknown synthetic task {other:?} (expected local or discourse)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    /// Train dialogues.
    pub n_dialogues: usize,
    pub dev_dialogues: usize,
    pub test_dialogues: usize,
    /// Inclusive utterance-count range.
    pub len_range: (usize, usize),
    pub dim: usize,
    pub num_classes: usize,
    pub task: SyntheticTask,
    /// Discourse task: chance that an utterance after the first opens a new
    /// thread instead of replying to an earlier opener.
    pub opener_probability: f64,
    /// Local task: chance that an utterance after the first gets an edge.
    pub edge_probability: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_dialogues: 20,
            dev_dialogues: 0,
            test_dialogues: 0,
            len_range: (4, 8),
            dim: 16,
            num_classes: 3,
            task: SyntheticTask::Local,
            opener_probability: 0.3,
            edge_probability: 0.7,
        }
    }
}

impl SyntheticConfig {
    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CorpusError::InvalidConfig(m));
        if self.dim < 2 {
            return bad(format!("dim must be at least 2, got {}", self.dim));
        }
        if self.num_classes < 2 {
            return bad(format!("num_classes must be at least 2, got {}", self.num_classes));
        }
        let (lo, hi) = self.len_range;
        if lo < 2 || hi < lo {
            return bad(format!("len_range must satisfy 2 <= min <= max, got [{lo}, {hi}]"));
        }
        for (name, p) in [
            ("opener_probability", self.opener_probability),
            ("edge_probability", self.edge_probability),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} must lie in [0, 1], got {p}"));
            }
        }
        Ok(())
    }
}

/// Labelling rule of a synthetic corpus: `argmax_k projection[k] · e`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticRule {
    pub num_classes: usize,
    pub dim: usize,
    /// Row-major `num_classes x dim`.
    pub projection: Vec<f64>,
}

impl SyntheticRule {
    pub fn apply(&self, embedding: &[f64]) -> usize {
        let mut best = 0;
        let mut best_score = f64::NEG_INFINITY;
        for k in 0..self.num_classes {
            let row = &self.projection[k * self.dim..(k + 1) * self.dim];
            let score: f64 = row.iter().zip(embedding).map(|(a, b)| a * b).sum();
            if score > best_score {
                best = k;
                best_score = score;
            }
        }
        best
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticCorpus {
    pub corpus: Corpus,
    pub embeddings: EmbeddingStore,
    pub rule: SyntheticRule,
}

fn gaussian_f32(rng: &mut ChaCha8Rng) -> f64 {
    // Rounded through f32 so the on-disk format is lossless.
    let x: f64 = rng.sample(StandardNormal);
    f64::from(x as f32)
}

/// Generate a seeded synthetic corpus and its embeddings.
///
/// For [`SyntheticTask::Discourse`] each dialogue is a set of threads: the
/// first utterance and, with `opener_probability`, any later one open a
/// thread and carry the rule applied to their own embedding; every other
/// utterance gets exactly one edge from a uniformly sampled earlier opener
/// and carries the rule applied to that opener's embedding.
pub fn generate_synthetic(cfg: &SyntheticConfig, seed: u64) -> Result<SyntheticCorpus> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let projection: Vec<f64> = (0..cfg.num_classes * cfg.dim)
        .map(|_| rng.sample(StandardNormal))
        .collect();
    let rule = SyntheticRule {
        num_classes: cfg.num_classes,
        dim: cfg.dim,
        projection,
    };

    let mut corpus = Corpus {
        train: Vec::new(),
        dev: Vec::new(),
        test: Vec::new(),
        num_classes: cfg.num_classes,
        label_names: (0..cfg.num_classes).map(|k| format!("class{k}")).collect(),
    };
    let mut blocks = Vec::new();
    let speakers = ["A", "B", "C"];
    for (split, count) in [
        (Split::Train, cfg.n_dialogues),
        (Split::Dev, cfg.dev_dialogues),
        (Split::Test, cfg.test_dialogues),
    ] {
        for k in 0..count {
            let id = format!("syn-{split}-{k:04}");
            let n = rng.gen_range(cfg.len_range.0..=cfg.len_range.1);
            let emb: Vec<f64> = (0..n * cfg.dim).map(|_| gaussian_f32(&mut rng)).collect();
            let row = |i: usize| &emb[i * cfg.dim..(i + 1) * cfg.dim];
            let mut edges = Vec::new();
            let mut labels = Vec::with_capacity(n);
            match cfg.task {
                SyntheticTask::Local => {
                    for i in 0..n {
                        labels.push(rule.apply(row(i)));
                        if i > 0 && rng.gen_bool(cfg.edge_probability) {
                            let src = rng.gen_range(0..i);
                            edges.push(Edge {
                                src,
                                tgt: i,
                                relation: None,
                            });
                        }
                    }
                }
                SyntheticTask::Discourse => {
                    let mut openers = vec![0];
                    labels.push(rule.apply(row(0)));
                    for i in 1..n {
                        if rng.gen_bool(cfg.opener_probability) {
                            openers.push(i);
                            labels.push(rule.apply(row(i)));
                        } else {
                            let src = *openers.choose(&mut rng).expect("first utterance opens");
                            edges.push(Edge {
                                src,
                                tgt: i,
                                relation: Some("reply".into()),
                            });
                            labels.push(rule.apply(row(src)));
                        }
                    }
                }
            }
            let utterances = labels
                .into_iter()
                .enumerate()
                .map(|(index, label)| Utterance {
                    index,
                    speaker: speakers[index % speakers.len()].to_string(),
                    text: None,
                    label,
                })
                .collect();
            corpus.split_mut(split).push(Dialogue {
                id: id.clone(),
                utterances,
                edges,
            });
            blocks.push((id, Matrix::from_vec(n, cfg.dim, emb).expect("sized")));
        }
    }
    let embeddings = EmbeddingStore::from_blocks(cfg.dim, blocks)?;
    Ok(SyntheticCorpus {
        corpus,
        embeddings,
        rule,
    })
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticAudit {
    pub checked: usize,
    pub violations: Vec<String>,
}

impl SyntheticAudit {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Re-apply the generating rule to every utterance. Utterances with a
/// predecessor must carry the rule of their (single) predecessor's embedding
/// in the discourse task; all others carry the rule of their own.
pub fn audit_synthetic(
    corpus: &Corpus,
    embeddings: &EmbeddingStore,
    rule: &SyntheticRule,
    task: SyntheticTask,
) -> Result<SyntheticAudit> {
    let mut audit = SyntheticAudit::default();
    let dim = embeddings.dim();
    for d in corpus.dialogues() {
        let rows = embeddings.rows(&d.id)?;
        let row = |i: usize| &rows[i * dim..(i + 1) * dim];
        let mut preds: Vec<Vec<usize>> = vec![Vec::new(); d.len()];
        for e in &d.edges {
            preds[e.tgt].push(e.src);
        }
        for u in &d.utterances {
            let source = match (task, preds[u.index].as_slice()) {
                (SyntheticTask::Discourse, [p]) => *p,
                (SyntheticTask::Discourse, []) | (SyntheticTask::Local, _) => u.index,
                (SyntheticTask::Discourse, many) => {
                    audit
                        .violations
                        .push(format!("{}[{}]: {} predecessors", d.id, u.index, many.len()));
                    continue;
                }
            };
            audit.checked += 1;
            let want = rule.apply(row(source));
            if want != u.label {
                audit.violations.push(format!(
                    "{}[{}]: label {} but rule gives {}",
                    d.id, u.index, u.label, want
                ));
            }
        }
    }
    Ok(audit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    const THREE: &str = r#"{"id":"d1","utterances":[{"speaker":"A","label":0},{"speaker":"B","text":"ok","label":4},{"speaker":"A","label":4}],"edges":[[0,1],[1,2,"QAP"]]}"#;

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn loads_single_dialogue_file() {
        let dir = tempdir().unwrap();
        let p = write(dir.path(), "one.jsonl", &format!("{THREE}\n"));
        let c = load_corpus(&p).unwrap();
        assert_eq!(c.train.len(), 1);
        let d = &c.train[0];
        assert_eq!(d.len(), 3);
        assert_eq!(d.labels(), vec![0, 4, 4]);
        assert_eq!(d.edge_pairs(), vec![(0, 1), (1, 2)]);
        assert_eq!(d.edges[1].relation.as_deref(), Some("QAP"));
        assert_eq!(d.utterances[1].text.as_deref(), Some("ok"));
        assert_eq!(d.utterances[2].index, 2);
    }

    #[test]
    fn rejects_backward_edge() {
        let dir = tempdir().unwrap();
        let line = THREE.replace("[1,2,\"QAP\"]", "[2,1]");
        let p = write(dir.path(), "bad.jsonl", &line);
        let err = load_corpus(&p).unwrap_err();
        assert!(err.to_string().contains("edge src must precede tgt"), "{err}");
    }

    #[test]
    fn rejects_out_of_range_label_and_edge() {
        let dir = tempdir().unwrap();
        let p = write(dir.path(), "l.jsonl", &THREE.replace("\"label\":0", "\"label\":7"));
        assert!(matches!(load_corpus(&p), Err(CorpusError::LabelRange { label: 7, .. })));
        let p = write(dir.path(), "e.jsonl", &THREE.replace("[0,1]", "[0,3]"));
        assert!(matches!(load_corpus(&p), Err(CorpusError::EdgeRange { tgt: 3, .. })));
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let dir = tempdir().unwrap();
        let p = write(dir.path(), "m.jsonl", &format!("{THREE}\n{{\"id\": 3\n"));
        match load_corpus(&p) {
            Err(CorpusError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_ids_across_splits() {
        let dir = tempdir().unwrap();
        write(dir.path(), "train.jsonl", THREE);
        write(dir.path(), "test.jsonl", THREE);
        assert!(matches!(load_corpus(dir.path()), Err(CorpusError::DuplicateId(id)) if id == "d1"));
    }

    #[test]
    fn duplicate_pairs_collapse() {
        let line = THREE.replace("[0,1]", "[0,1],[0,1,\"Elab\"]");
        let d = parse_dialogue(&line, 7, Path::new("x"), 1).unwrap();
        assert_eq!(d.edge_pairs(), vec![(0, 1), (1, 2)]);
        assert_eq!(d.edges[0].relation, None);
    }

    #[test]
    fn serialize_reproduces_line() {
        let d = parse_dialogue(THREE, 7, Path::new("x"), 1).unwrap();
        let a: serde_json::Value = serde_json::from_str(THREE).unwrap();
        let b: serde_json::Value = serde_json::from_str(&dialogue_to_line(&d)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn embeddings_round_trip_bit_exact() {
        let dir = tempdir().unwrap();
        let values = [1.5f32, -0.25, 3.0e-7, 42.0, 0.1, -0.2, 1.0e10, -7.75];
        let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
        assert_eq!(bytes.len(), 32);
        let bin = dir.path().join("e.bin");
        fs::write(&bin, &bytes).unwrap();
        let man = write(
            dir.path(),
            "e.json",
            r#"{"dim":4,"dtype":"f32","rows":2,"order":[{"dialogue_id":"d","rows":2}]}"#,
        );
        let store = load_embeddings(&bin, &man).unwrap();
        let rows = store.rows("d").unwrap();
        for (a, b) in rows.iter().zip(values) {
            assert_eq!(*a, f64::from(b));
        }
        assert!(matches!(store.rows("nope"), Err(CorpusError::MissingDialogue(_))));

        fs::write(&bin, &bytes[..28]).unwrap();
        let err = load_embeddings(&bin, &man).unwrap_err();
        assert!(err.to_string().contains("size mismatch"), "{err}");
    }

    #[test]
    fn embeddings_reject_non_finite_with_coordinates() {
        let dir = tempdir().unwrap();
        let mut values = [0.0f32; 8];
        values[6] = f32::NAN;
        let bin = dir.path().join("e.bin");
        fs::write(&bin, values.iter().flat_map(|v| v.to_le_bytes()).collect::<Vec<_>>()).unwrap();
        let man = write(
            dir.path(),
            "e.json",
            r#"{"dim":4,"dtype":"f32","order":[{"dialogue_id":"d","rows":2}]}"#,
        );
        match load_embeddings(&bin, &man) {
            Err(CorpusError::NonFiniteEmbedding { dialogue, row, col }) => {
                assert_eq!((dialogue.as_str(), row, col), ("d", 1, 2));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn full_scale_dim_is_accepted() {
        let dir = tempdir().unwrap();
        let bin = dir.path().join("e.bin");
        fs::write(&bin, vec![0u8; 1024 * 4]).unwrap();
        let man = write(
            dir.path(),
            "e.json",
            r#"{"dim":1024,"dtype":"f32","order":[{"dialogue_id":"d","rows":1}]}"#,
        );
        assert_eq!(load_embeddings(&bin, &man).unwrap().dim(), 1024);
    }

    #[test]
    fn manifest_report_counts_and_deltas() {
        let s = generate_synthetic(
            &SyntheticConfig {
                n_dialogues: 5,
                dev_dialogues: 2,
                test_dialogues: 3,
                ..Default::default()
            },
            1,
        )
        .unwrap();
        let mut c = s.corpus;
        let utt = |d: &[Dialogue]| d.iter().map(Dialogue::len).sum::<usize>();
        let expected = ExpectedCounts {
            dialogues: SplitCounts { train: 5, dev: 2, test: 3 },
            utterances: SplitCounts {
                train: utt(&c.train),
                dev: utt(&c.dev),
                test: utt(&c.test),
            },
        };
        let r = validate_manifest(&c, &expected);
        assert!(r.pass);
        assert_eq!(r.label_histogram.iter().sum::<usize>(), expected.utterances.train + expected.utterances.dev + expected.utterances.test);

        let removed = c.dev.pop().unwrap();
        let r = validate_manifest(&c, &expected);
        assert!(!r.pass);
        assert_eq!(r.dialogue_delta, [0, -1, 0]);
        assert_eq!(r.utterance_delta, [0, -(removed.len() as i64), 0]);
    }

    #[test]
    fn table_counts() {
        let fr = Language::French.expected_counts();
        assert_eq!((fr.dialogues.train, fr.dialogues.dev, fr.dialogues.test), (633, 97, 224));
        assert_eq!((fr.utterances.train, fr.utterances.dev, fr.utterances.test), (6537, 964, 2198));
        let el = Language::Greek.expected_counts();
        assert_eq!((el.dialogues.train, el.dialogues.dev, el.dialogues.test), (870, 103, 240));
        let total_dialogues: usize = Language::ALL
            .iter()
            .map(|l| {
                let c = l.expected_counts().dialogues;
                c.train + c.dev + c.test
            })
            .sum();
        let total_utterances: usize = Language::ALL
            .iter()
            .map(|l| {
                let c = l.expected_counts().utterances;
                c.train + c.dev + c.test
            })
            .sum();
        assert_eq!((total_dialogues, total_utterances), (4504, 45871));
    }

    #[test]
    fn synthetic_config_echo_and_determinism() {
        let cfg = SyntheticConfig::default();
        let a = generate_synthetic(&cfg, 9).unwrap();
        let b = generate_synthetic(&cfg, 9).unwrap();
        assert_eq!(a.corpus, b.corpus);
        assert_eq!(a.embeddings, b.embeddings);
        assert_eq!(a.corpus.train.len(), 20);
        assert!(a.corpus.train.iter().all(|d| (4..=8).contains(&d.len())));
        let c = generate_synthetic(&cfg, 10).unwrap();
        assert_ne!(a.corpus, c.corpus);
    }

    #[test]
    fn synthetic_rejects_bad_config() {
        for cfg in [
            SyntheticConfig { dim: 1, ..Default::default() },
            SyntheticConfig { num_classes: 1, ..Default::default() },
            SyntheticConfig { len_range: (1, 3), ..Default::default() },
            SyntheticConfig { len_range: (5, 4), ..Default::default() },
        ] {
            assert!(matches!(generate_synthetic(&cfg, 0), Err(CorpusError::InvalidConfig(_))));
        }
    }

    #[test]
    fn synthetic_discourse_rule_audit() {
        let cfg = SyntheticConfig {
            task: SyntheticTask::Discourse,
            n_dialogues: 30,
            dev_dialogues: 5,
            ..Default::default()
        };
        let s = generate_synthetic(&cfg, 3).unwrap();
        let audit = audit_synthetic(&s.corpus, &s.embeddings, &s.rule, SyntheticTask::Discourse).unwrap();
        assert!(audit.passed(), "{:?}", audit.violations);
        assert_eq!(audit.checked, s.corpus.dialogues().map(Dialogue::len).sum::<usize>());
        // replies must not simply copy their own rule: the local audit fails
        let local = audit_synthetic(&s.corpus, &s.embeddings, &s.rule, SyntheticTask::Local).unwrap();
        assert!(!local.passed());
        s.embeddings.check_coverage(&s.corpus).unwrap();
    }

    #[test]
    fn coverage_detects_mismatch() {
        let s = generate_synthetic(&SyntheticConfig::default(), 2).unwrap();
        let mut c = s.corpus.clone();
        c.train.pop();
        assert!(matches!(s.embeddings.check_coverage(&c), Err(CorpusError::Coverage(_))));
        let mut c = s.corpus;
        c.train[0].utterances.pop();
        assert!(matches!(s.embeddings.check_coverage(&c), Err(CorpusError::Coverage(_))));
    }
}
