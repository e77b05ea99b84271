//! Documents, word embeddings, document features and cross-validation folds.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ndjson;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Sentence {
    /// 1-based position in the document.
    pub index: usize,
    pub nouns: Vec<String>,
    pub text: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Document {
    pub id: String,
    /// 0-based class index, see [`LabelMap`].
    pub label: Option<usize>,
    pub sentences: Vec<Sentence>,
}

impl Document {
    /// Builds a document from per-sentence noun lists, numbering sentences from 1.
    pub fn from_nouns<I, S>(id: impl Into<String>, label: Option<usize>, sentences: I) -> Self
    where
        I: IntoIterator<Item = Vec<S>>,
        S: Into<String>,
    {
        let sentences = sentences
            .into_iter()
            .enumerate()
            .map(|(i, nouns)| Sentence {
                index: i + 1,
                nouns: nouns.into_iter().map(Into::into).collect(),
                text: None,
            })
            .collect();
        Document {
            id: id.into(),
            label,
            sentences,
        }
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    /// Whitespace-delimited word count of the sentence texts. Sentences
    /// without text contribute their noun count instead.
    pub fn word_count(&self) -> usize {
        self.sentences
            .iter()
            .map(|s| match &s.text {
                Some(t) => t.split_whitespace().count(),
                None => s.nouns.len(),
            })
            .sum()
    }
}

/// Mapping between 0-based class indices and the label strings found in a corpus file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelMap {
    names: Vec<String>,
}

impl LabelMap {
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Result<Self> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        let mut seen = HashSet::new();
        for n in &names {
            if !seen.insert(n.as_str()) {
                return Err(Error::Validation(format!("label {n:?} listed twice")));
            }
        }
        Ok(LabelMap { names })
    }

    /// Infers a map from the raw labels of a corpus.
    ///
    /// When every label is a non-negative integer the integer is the class
    /// index (classes `0..=max`). Otherwise labels are sorted lexicographically
    /// and numbered in that order.
    pub fn infer<'a>(raw: impl IntoIterator<Item = &'a str>) -> Self {
        let distinct: std::collections::BTreeSet<&str> = raw.into_iter().collect();
        let numeric: Option<Vec<usize>> = distinct.iter().map(|s| parse_class_index(s)).collect();
        match numeric {
            Some(values) if !values.is_empty() => {
                let max = values.into_iter().max().unwrap_or(0);
                LabelMap {
                    names: (0..=max).map(|i| i.to_string()).collect(),
                }
            }
            _ => LabelMap {
                names: distinct.into_iter().map(str::to_owned).collect(),
            },
        }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.names.iter().position(|n| n == label)
    }

    pub fn name(&self, index: usize) -> Option<&str> {
        self.names.get(index).map(String::as_str)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

fn parse_class_index(s: &str) -> Option<usize> {
    if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    if s.len() > 1 && s.starts_with('0') {
        return None;
    }
    s.parse().ok()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub documents: Vec<Document>,
    pub labels: LabelMap,
}

impl Corpus {
    pub fn class_count(&self) -> usize {
        self.labels.len()
    }

    pub fn ids(&self) -> Vec<String> {
        self.documents.iter().map(|d| d.id.clone()).collect()
    }

    pub fn get(&self, id: &str) -> Option<&Document> {
        self.documents.iter().find(|d| d.id == id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum RawLabel {
    Int(i64),
    Str(String),
}

impl RawLabel {
    fn as_string(&self) -> String {
        match self {
            RawLabel::Int(i) => i.to_string(),
            RawLabel::Str(s) => s.clone(),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct SentenceRecord {
    #[serde(default)]
    nouns: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    text: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct DocumentRecord {
    id: String,
    #[serde(default)]
    label: Option<RawLabel>,
    sentences: Vec<SentenceRecord>,
}

/// Loads a corpus file, inferring the label map with [`LabelMap::infer`].
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus> {
    load_corpus_inner(path.as_ref(), None)
}

/// Loads a corpus file with an explicit label order. Labels outside `labels` are an error.
pub fn load_corpus_with_labels(path: impl AsRef<Path>, labels: &LabelMap) -> Result<Corpus> {
    load_corpus_inner(path.as_ref(), Some(labels))
}

fn load_corpus_inner(path: &Path, labels: Option<&LabelMap>) -> Result<Corpus> {
    let records: Vec<(usize, DocumentRecord)> = ndjson::read_records(path)?;

    let map = match labels {
        Some(m) => m.clone(),
        None => {
            let raw: Vec<String> = records
                .iter()
                .filter_map(|(_, r)| r.label.as_ref().map(RawLabel::as_string))
                .collect();
            LabelMap::infer(raw.iter().map(String::as_str))
        }
    };

    let mut seen = HashSet::new();
    let mut documents = Vec::with_capacity(records.len());
    for (line, rec) in records {
        if rec.id.is_empty() {
            return Err(Error::parse(path, line, "empty document id"));
        }
        if !seen.insert(rec.id.clone()) {
            return Err(Error::DuplicateId(rec.id));
        }
        let label = match &rec.label {
            None => None,
            Some(raw) => {
                let s = raw.as_string();
                Some(
                    map.index_of(&s)
                        .ok_or_else(|| Error::parse(path, line, format!("unknown label {s:?}")))?,
                )
            }
        };
        let sentences = rec
            .sentences
            .into_iter()
            .enumerate()
            .map(|(i, s)| Sentence {
                index: i + 1,
                nouns: s.nouns,
                text: s.text,
            })
            .collect();
        documents.push(Document {
            id: rec.id,
            label,
            sentences,
        });
    }
    Ok(Corpus {
        documents,
        labels: map,
    })
}

/// Writes documents in the corpus line format, labels spelled with `labels`.
pub fn write_corpus<W: Write>(mut out: W, documents: &[Document], labels: &LabelMap) -> Result<()> {
    for doc in documents {
        let label = match doc.label {
            None => None,
            Some(i) => Some(RawLabel::Str(
                labels
                    .name(i)
                    .ok_or_else(|| Error::Validation(format!("class index {i} has no label name")))?
                    .to_owned(),
            )),
        };
        let rec = DocumentRecord {
            id: doc.id.clone(),
            label,
            sentences: doc
                .sentences
                .iter()
                .map(|s| SentenceRecord {
                    nouns: s.nouns.clone(),
                    text: s.text.clone(),
                })
                .collect(),
        };
        ndjson::write_record(&mut out, &rec)?;
    }
    Ok(())
}

/// Word vectors keyed by token.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dimension: usize,
    entries: HashMap<String, Vec<f64>>,
}

impl EmbeddingTable {
    pub fn new(dimension: usize) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::Validation(
                "embedding dimension must be positive".into(),
            ));
        }
        Ok(EmbeddingTable {
            dimension,
            entries: HashMap::new(),
        })
    }

    /// Inserts a vector. An existing entry for the token is kept.
    pub fn insert(&mut self, token: impl Into<String>, vector: Vec<f64>) -> Result<()> {
        if vector.len() != self.dimension {
            return Err(Error::Shape(format!(
                "embedding has {} components, table dimension is {}",
                vector.len(),
                self.dimension
            )));
        }
        self.entries.entry(token.into()).or_insert(vector);
        Ok(())
    }

    pub fn from_entries<S: Into<String>>(
        entries: impl IntoIterator<Item = (S, Vec<f64>)>,
    ) -> Result<Self> {
        let mut iter = entries.into_iter().peekable();
        let dim = iter
            .peek()
            .map(|(_, v)| v.len())
            .ok_or_else(|| Error::Validation("no embedding entries".into()))?;
        let mut table = EmbeddingTable::new(dim)?;
        for (tok, v) in iter {
            table.insert(tok, v)?;
        }
        Ok(table)
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Exact-token lookup; `None` for tokens not in the table.
    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.entries.get(token).map(Vec::as_slice)
    }

    /// Writes `token f1 ... fD` lines sorted by token.
    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        let mut tokens: Vec<&String> = self.entries.keys().collect();
        tokens.sort();
        for token in tokens {
            let mut line = token.clone();
            for v in &self.entries[token] {
                line.push(' ');
                line.push_str(&v.to_string());
            }
            line.push('\n');
            out.write_all(line.as_bytes())
                .map_err(|e| Error::io("<output>", e))?;
        }
        Ok(())
    }
}

/// Loads a whitespace-separated `token f1 ... fD` embedding file. The
/// dimension is taken from the first non-blank line.
pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingTable> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut table: Option<EmbeddingTable> = None;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let lineno = i + 1;
        let mut fields = line.split_whitespace();
        let Some(token) = fields.next() else {
            continue;
        };
        let vector = fields
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| Error::parse(path, lineno, format!("non-numeric component {f:?}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if vector.iter().any(|x| !x.is_finite()) {
            return Err(Error::parse(path, lineno, "non-finite component"));
        }
        let table = match &mut table {
            Some(t) => t,
            None => {
                if vector.is_empty() {
                    return Err(Error::parse(
                        path,
                        lineno,
                        "embedding line has no components",
                    ));
                }
                table.insert(EmbeddingTable::new(vector.len())?)
            }
        };
        if vector.len() != table.dimension {
            return Err(Error::parse(
                path,
                lineno,
                format!(
                    "dimension mismatch: expected {} components, found {}",
                    table.dimension,
                    vector.len()
                ),
            ));
        }
        table.insert(token, vector)?;
    }
    table.ok_or_else(|| Error::Validation(format!("{}: no embeddings", path.display())))
}

/// Dense per-document feature vectors (document node features).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    dimension: usize,
    rows: HashMap<String, Vec<f64>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct FeatureRecord {
    id: String,
    feature: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(dimension: usize) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::Validation(
                "feature dimension must be positive".into(),
            ));
        }
        Ok(FeatureMatrix {
            dimension,
            rows: HashMap::new(),
        })
    }

    pub fn insert(&mut self, id: impl Into<String>, row: Vec<f64>) -> Result<()> {
        let id = id.into();
        if row.len() != self.dimension {
            return Err(Error::Shape(format!(
                "feature row {id:?} has {} components, expected {}",
                row.len(),
                self.dimension
            )));
        }
        if row.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("feature row"));
        }
        if self.rows.contains_key(&id) {
            return Err(Error::DuplicateId(id));
        }
        self.rows.insert(id, row);
        Ok(())
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&[f64]> {
        self.rows.get(id).map(Vec::as_slice)
    }

    /// Fails with the first id (in the given order) that has no row.
    pub fn check_covers<'a>(&self, ids: impl IntoIterator<Item = &'a str>) -> Result<()> {
        for id in ids {
            if !self.rows.contains_key(id) {
                return Err(Error::Validation(format!(
                    "no feature row for document {id:?}"
                )));
            }
        }
        Ok(())
    }

    /// Writes rows sorted by id.
    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        let sorted: BTreeMap<&String, &Vec<f64>> = self.rows.iter().collect();
        for (id, row) in sorted {
            ndjson::write_record(
                &mut out,
                &FeatureRecord {
                    id: id.clone(),
                    feature: row.clone(),
                },
            )?;
        }
        Ok(())
    }
}

pub fn load_features(path: impl AsRef<Path>) -> Result<FeatureMatrix> {
    let path = path.as_ref();
    let records: Vec<(usize, FeatureRecord)> = ndjson::read_records(path)?;
    let Some((_, first)) = records.first() else {
        return Err(Error::Validation(format!(
            "{}: no feature rows",
            path.display()
        )));
    };
    let mut matrix = FeatureMatrix::new(first.feature.len())
        .map_err(|e| Error::parse(path, records[0].0, e.to_string()))?;
    for (line, rec) in records {
        matrix.insert(rec.id, rec.feature).map_err(|e| match e {
            Error::DuplicateId(id) => Error::DuplicateId(id),
            other => Error::parse(path, line, other.to_string()),
        })?;
    }
    Ok(matrix)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train: Vec<String>,
    pub test: Vec<String>,
}

/// Cross-validation split of a set of document ids.
///
/// Ids are shuffled with `ChaCha8Rng::seed_from_u64(seed)` followed by a
/// Fisher–Yates shuffle (`rand::seq::SliceRandom::shuffle`). The shuffled
/// list is cut into `k` contiguous test sets, the first `n % k` of which get
/// one extra id. Training ids keep the caller's order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub folds: Vec<Fold>,
    pub seed: u64,
}

#[derive(Serialize)]
struct FoldRecord<'a> {
    fold: usize,
    seed: u64,
    train: &'a [String],
    test: &'a [String],
}

impl FoldPlan {
    pub fn len(&self) -> usize {
        self.folds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.folds.is_empty()
    }

    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        for (i, f) in self.folds.iter().enumerate() {
            ndjson::write_record(
                &mut out,
                &FoldRecord {
                    fold: i,
                    seed: self.seed,
                    train: &f.train,
                    test: &f.test,
                },
            )?;
        }
        Ok(())
    }
}

fn check_fold_args(ids: &[String], folds: usize) -> Result<()> {
    if folds < 2 {
        return Err(Error::Validation(format!(
            "need at least 2 folds, got {folds}"
        )));
    }
    if folds > ids.len() {
        return Err(Error::Validation(format!(
            "{folds} folds requested for {} documents",
            ids.len()
        )));
    }
    let mut seen = HashSet::new();
    for id in ids {
        if !seen.insert(id) {
            return Err(Error::DuplicateId(id.clone()));
        }
    }
    Ok(())
}

fn plan_from_test_sets(ids: &[String], tests: Vec<Vec<String>>, seed: u64) -> FoldPlan {
    let folds = tests
        .into_iter()
        .map(|test| {
            let held: HashSet<&String> = test.iter().collect();
            let train = ids
                .iter()
                .filter(|id| !held.contains(id))
                .cloned()
                .collect();
            Fold { train, test }
        })
        .collect();
    FoldPlan { folds, seed }
}

/// Unstratified shuffled k-fold split.
pub fn make_folds(ids: &[String], folds: usize, seed: u64) -> Result<FoldPlan> {
    check_fold_args(ids, folds)?;
    let mut shuffled = ids.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    shuffled.shuffle(&mut rng);

    let base = shuffled.len() / folds;
    let extra = shuffled.len() % folds;
    let mut tests = Vec::with_capacity(folds);
    let mut rest = shuffled.as_slice();
    for f in 0..folds {
        let size = base + usize::from(f < extra);
        let (head, tail) = rest.split_at(size);
        tests.push(head.to_vec());
        rest = tail;
    }
    Ok(plan_from_test_sets(ids, tests, seed))
}

/// Label-stratified k-fold split: each class is shuffled separately (classes
/// in ascending order, one RNG stream) and the concatenation is dealt to folds
/// round-robin.
pub fn make_stratified_folds(
    ids: &[String],
    labels: &[usize],
    folds: usize,
    seed: u64,
) -> Result<FoldPlan> {
    check_fold_args(ids, folds)?;
    if labels.len() != ids.len() {
        return Err(Error::Shape(format!(
            "{} labels for {} ids",
            labels.len(),
            ids.len()
        )));
    }
    let mut by_class: BTreeMap<usize, Vec<String>> = BTreeMap::new();
    for (id, &l) in ids.iter().zip(labels) {
        by_class.entry(l).or_default().push(id.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tests = vec![Vec::new(); folds];
    let mut t = 0;
    for members in by_class.values_mut() {
        members.shuffle(&mut rng);
        for id in members.drain(..) {
            tests[t % folds].push(id);
            t += 1;
        }
    }
    Ok(plan_from_test_sets(ids, tests, seed))
}
