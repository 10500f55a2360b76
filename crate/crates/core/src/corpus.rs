//! Records, corpus ingestion, binary-unigram featurization and embedding
//! tables.
//!
//! Corpus files are UTF-8 JSON lines with the keys `id`, `label`, `source`
//! and an optional `text`. Provenance is positional: `source_names[0]` maps
//! to `z = 0` and `source_names[1]` to `z = 1`.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampler::CellCounts;

/// Feature payload of a single record.
#[derive(Debug, Clone, PartialEq)]
pub enum Features {
    /// Dense real vector, e.g. a pooled sentence embedding.
    Dense(Vec<f64>),
    /// Sorted, de-duplicated column indices whose value is 1.
    Binary(Vec<u32>),
}

impl Features {
    /// Inner product with a weight vector of the feature dimension.
    pub fn dot(&self, weights: &[f64]) -> f64 {
        match self {
            Features::Dense(values) => values.iter().zip(weights).map(|(x, w)| x * w).sum(),
            Features::Binary(columns) => columns.iter().map(|&c| weights[c as usize]).sum(),
        }
    }

    /// `out += scale * x`
    pub fn add_scaled_to(&self, scale: f64, out: &mut [f64]) {
        match self {
            Features::Dense(values) => {
                for (o, x) in out.iter_mut().zip(values) {
                    *o += scale * x;
                }
            }
            Features::Binary(columns) => {
                for &c in columns {
                    out[c as usize] += scale;
                }
            }
        }
    }

    /// Checks that the row fits a feature space of dimension `dim`.
    pub fn check_dim(&self, dim: usize) -> Result<()> {
        match self {
            Features::Dense(values) => {
                if values.len() != dim {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        got: values.len(),
                    });
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite("features"));
                }
            }
            Features::Binary(columns) => {
                if let Some(&max) = columns.iter().max() {
                    if max as usize >= dim {
                        return Err(Error::DimensionMismatch {
                            expected: dim,
                            got: max as usize + 1,
                        });
                    }
                }
            }
        }
        Ok(())
    }
}

/// One text unit with its label `y` and provenance `z`.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub id: String,
    pub text: Option<String>,
    pub y: u8,
    pub z: u8,
    pub features: Option<Features>,
}

impl Record {
    pub fn new(id: impl Into<String>, text: Option<String>, y: u8, z: u8) -> Result<Self> {
        if y > 1 {
            return Err(Error::InvalidArgument(format!(
                "label must be 0 or 1, got {y}"
            )));
        }
        if z > 1 {
            return Err(Error::InvalidArgument(format!(
                "provenance must be 0 or 1, got {z}"
            )));
        }
        Ok(Record {
            id: id.into(),
            text,
            y,
            z,
            features: None,
        })
    }
}

/// Records from exactly two sources.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    records: Vec<Record>,
    source_names: [String; 2],
}

impl Corpus {
    /// Builds a corpus, rejecting duplicate ids and out-of-range labels.
    pub fn new(records: Vec<Record>, source_names: [String; 2]) -> Result<Self> {
        let mut seen = HashSet::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            if r.y > 1 || r.z > 1 {
                return Err(Error::InvalidArgument(format!(
                    "record {:?} has y = {}, z = {}",
                    r.id, r.y, r.z
                )));
            }
            if !seen.insert(r.id.as_str()) {
                return Err(Error::DuplicateId {
                    id: r.id.clone(),
                    line: i + 1,
                });
            }
        }
        Ok(Corpus {
            records,
            source_names,
        })
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn source_names(&self) -> &[String; 2] {
        &self.source_names
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Number of records in each `(y, z)` cell.
    pub fn cell_counts(&self) -> CellCounts {
        let mut counts = CellCounts::default();
        for r in &self.records {
            counts.add(r.y, r.z, 1);
        }
        counts
    }

    /// Every record carries text or features.
    pub fn validate(&self) -> Result<()> {
        match self
            .records
            .iter()
            .find(|r| r.text.is_none() && r.features.is_none())
        {
            Some(r) => Err(Error::EmptyRecord(r.id.clone())),
            None => Ok(()),
        }
    }

    /// True when every record has a dense feature vector attached.
    pub fn has_embeddings(&self) -> bool {
        !self.records.is_empty()
            && self
                .records
                .iter()
                .all(|r| matches!(r.features, Some(Features::Dense(_))))
    }
}

#[derive(Deserialize)]
struct RawRecord {
    id: Option<String>,
    text: Option<String>,
    label: Option<i64>,
    source: Option<String>,
}

#[derive(Serialize)]
struct OutRecord<'a> {
    id: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    text: Option<&'a str>,
    label: u8,
    source: &'a str,
}

/// Reads a JSON-lines corpus file. Blank lines are skipped; line numbers in
/// errors are 1-based.
pub fn load_corpus(path: impl AsRef<Path>, source_names: [String; 2]) -> Result<Corpus> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_corpus(BufReader::new(file), source_names).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

/// Parses corpus lines from any reader.
pub fn parse_corpus(reader: impl BufRead, source_names: [String; 2]) -> Result<Corpus> {
    let mut records = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::io("<corpus>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let missing = |key: &str| Error::Parse {
            line: line_no,
            message: format!("missing key {key:?}"),
        };
        let id = raw.id.ok_or_else(|| missing("id"))?;
        let label = raw.label.ok_or_else(|| missing("label"))?;
        let source = raw.source.ok_or_else(|| missing("source"))?;
        let y = match label {
            0 => 0,
            1 => 1,
            other => {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("label must be 0 or 1, got {other}"),
                })
            }
        };
        let z = match source_names.iter().position(|s| *s == source) {
            Some(z) => z as u8,
            None => {
                return Err(Error::UnknownSource {
                    line: line_no,
                    source_name: source,
                    expected: source_names.clone(),
                })
            }
        };
        if seen.insert(id.clone(), line_no).is_some() {
            return Err(Error::DuplicateId { id, line: line_no });
        }
        records.push(Record {
            id,
            text: raw.text,
            y,
            z,
            features: None,
        });
    }
    Corpus::new(records, source_names)
}

/// Writes a corpus in the JSON-lines corpus format.
pub fn write_corpus(corpus: &Corpus, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for r in corpus.records() {
        let line = serde_json::to_string(&OutRecord {
            id: &r.id,
            text: r.text.as_deref(),
            label: r.y,
            source: &corpus.source_names[r.z as usize],
        })?;
        writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Lowercases and splits on maximal runs of non-alphanumeric characters.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Column layout of a design matrix.
#[derive(Debug, Clone, PartialEq)]
pub enum FeatureSpace {
    /// Binary presence of vocabulary terms; indices are `0..len` in
    /// lexicographic term order.
    Unigram { vocabulary: BTreeMap<String, usize> },
    /// Dense vectors of a fixed dimension.
    Embedding { dim: usize },
}

impl FeatureSpace {
    pub fn dim(&self) -> usize {
        match self {
            FeatureSpace::Unigram { vocabulary } => vocabulary.len(),
            FeatureSpace::Embedding { dim } => *dim,
        }
    }

    pub fn vocabulary(&self) -> Option<&BTreeMap<String, usize>> {
        match self {
            FeatureSpace::Unigram { vocabulary } => Some(vocabulary),
            FeatureSpace::Embedding { .. } => None,
        }
    }
}

/// Builds a unigram vocabulary of terms with document frequency `>= min_df`.
pub fn build_vocabulary<'a, I>(records: I, min_df: usize) -> Result<FeatureSpace>
where
    I: IntoIterator<Item = &'a Record>,
{
    if min_df == 0 {
        return Err(Error::InvalidArgument("min_df must be positive".into()));
    }
    let mut df: BTreeMap<String, usize> = BTreeMap::new();
    for r in records {
        let text = r
            .text
            .as_deref()
            .ok_or_else(|| Error::MissingText(r.id.clone()))?;
        let terms: BTreeSet<String> = tokenize(text).into_iter().collect();
        for t in terms {
            *df.entry(t).or_default() += 1;
        }
    }
    let vocabulary: BTreeMap<String, usize> = df
        .into_iter()
        .filter(|&(_, n)| n >= min_df)
        .enumerate()
        .map(|(i, (t, _))| (t, i))
        .collect();
    if vocabulary.is_empty() {
        return Err(Error::EmptyVocabulary { min_df });
    }
    Ok(FeatureSpace::Unigram { vocabulary })
}

/// Sorted set of vocabulary columns present in the record's text.
/// Out-of-vocabulary terms are dropped.
pub fn featurize_unigram(record: &Record, space: &FeatureSpace) -> Result<Vec<u32>> {
    let vocabulary = space.vocabulary().ok_or_else(|| {
        Error::InvalidArgument("unigram featurization needs a unigram feature space".into())
    })?;
    let text = record
        .text
        .as_deref()
        .ok_or_else(|| Error::MissingText(record.id.clone()))?;
    let columns: BTreeSet<u32> = tokenize(text)
        .iter()
        .filter_map(|t| vocabulary.get(t).map(|&i| i as u32))
        .collect();
    Ok(columns.into_iter().collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pooling {
    Mean,
    Native,
}

/// Precomputed text vectors keyed by record id.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub dim: usize,
    pub pooling: Pooling,
    pub model: String,
    pub rows: BTreeMap<String, Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct TableHeader {
    dim: usize,
    pooling: Pooling,
    #[serde(default)]
    model: String,
}

#[derive(Serialize, Deserialize)]
struct TableRow {
    id: String,
    vector: Vec<f64>,
}

impl EmbeddingTable {
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::parse(BufReader::new(file))
    }

    pub fn parse(reader: impl BufRead) -> Result<Self> {
        let mut lines = reader.lines().enumerate();
        let header = loop {
            match lines.next() {
                Some((i, line)) => {
                    let line = line.map_err(|e| Error::io("<embeddings>", e))?;
                    if line.trim().is_empty() {
                        continue;
                    }
                    let h: TableHeader = serde_json::from_str(&line).map_err(|e| Error::Parse {
                        line: i + 1,
                        message: format!("embedding header: {e}"),
                    })?;
                    break h;
                }
                None => return Err(Error::Embedding("missing header line".into())),
            }
        };
        if header.dim == 0 {
            return Err(Error::Embedding("dim must be positive".into()));
        }
        let mut rows = BTreeMap::new();
        for (i, line) in lines {
            let line_no = i + 1;
            let line = line.map_err(|e| Error::io("<embeddings>", e))?;
            if line.trim().is_empty() {
                continue;
            }
            let row: TableRow = serde_json::from_str(&line).map_err(|e| Error::Parse {
                line: line_no,
                message: e.to_string(),
            })?;
            if row.vector.len() != header.dim {
                return Err(Error::Embedding(format!(
                    "line {line_no}: id {:?} has length {}, header dim is {}",
                    row.id,
                    row.vector.len(),
                    header.dim
                )));
            }
            if row.vector.iter().any(|v| !v.is_finite()) {
                return Err(Error::Embedding(format!(
                    "line {line_no}: id {:?} has a non-finite component",
                    row.id
                )));
            }
            if rows.insert(row.id.clone(), row.vector).is_some() {
                return Err(Error::Embedding(format!(
                    "line {line_no}: duplicate id {:?}",
                    row.id
                )));
            }
        }
        Ok(EmbeddingTable {
            dim: header.dim,
            pooling: header.pooling,
            model: header.model,
            rows,
        })
    }

    /// Writes the table; components use shortest round-trip decimal form.
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        let header = serde_json::to_string(&TableHeader {
            dim: self.dim,
            pooling: self.pooling,
            model: self.model.clone(),
        })?;
        writeln!(out, "{header}").map_err(|e| Error::io(path, e))?;
        for (id, vector) in &self.rows {
            let line = serde_json::to_string(&TableRow {
                id: id.clone(),
                vector: vector.clone(),
            })?;
            writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
        }
        out.flush().map_err(|e| Error::io(path, e))
    }

    /// Returns a copy of `corpus` where every record carries its dense vector.
    pub fn attach(&self, corpus: &Corpus) -> Result<Corpus> {
        let missing: Vec<String> = corpus
            .records()
            .iter()
            .filter(|r| !self.rows.contains_key(&r.id))
            .map(|r| r.id.clone())
            .collect();
        if !missing.is_empty() {
            return Err(Error::MissingEmbeddings(missing));
        }
        let records = corpus
            .records()
            .iter()
            .map(|r| Record {
                features: Some(Features::Dense(self.rows[&r.id].clone())),
                ..r.clone()
            })
            .collect();
        Ok(Corpus {
            records,
            source_names: corpus.source_names.clone(),
        })
    }
}

/// Reads the embedding table at `path` and attaches it to `corpus`.
pub fn attach_embeddings(corpus: &Corpus, path: impl AsRef<Path>) -> Result<Corpus> {
    EmbeddingTable::read(path)?.attach(corpus)
}
