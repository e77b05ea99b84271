//! Directed sentence graphs built from noun embedding similarity.
//!
//! Sentences `u < v` are joined by the edge `u -> v` when the most similar
//! pair of nouns across them has cosine similarity strictly above the
//! threshold. Nouns are lowercased before lookup; nouns missing from the
//! embedding table, and zero vectors, are skipped.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::corpus::{Document, EmbeddingTable, Sentence};
use crate::{Error, Result};

/// Threshold `delta` in `(0, 1]`; an edge needs similarity `> delta`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct SimilarityThreshold(f64);

impl SimilarityThreshold {
    pub const DEFAULT: SimilarityThreshold = SimilarityThreshold(0.65);

    pub fn new(delta: f64) -> Result<Self> {
        if delta > 0.0 && delta <= 1.0 {
            Ok(SimilarityThreshold(delta))
        } else {
            Err(Error::Validation(format!(
                "similarity threshold must lie in (0, 1], got {delta}"
            )))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl Default for SimilarityThreshold {
    fn default() -> Self {
        Self::DEFAULT
    }
}

impl TryFrom<f64> for SimilarityThreshold {
    type Error = Error;
    fn try_from(v: f64) -> Result<Self> {
        Self::new(v)
    }
}

impl From<SimilarityThreshold> for f64 {
    fn from(t: SimilarityThreshold) -> f64 {
        t.0
    }
}

/// Forward-edge graph over sentences `1..=n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SentenceGraph {
    n: usize,
    edges: BTreeSet<(usize, usize)>,
}

impl SentenceGraph {
    pub fn empty(n: usize) -> Self {
        SentenceGraph {
            n,
            edges: BTreeSet::new(),
        }
    }

    /// Builds a graph from 1-based edges; every edge must satisfy `1 <= u < v <= n`.
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut g = SentenceGraph::empty(n);
        for (u, v) in edges {
            g.add_edge(u, v)?;
        }
        Ok(g)
    }

    pub fn add_edge(&mut self, u: usize, v: usize) -> Result<()> {
        if u == 0 || v > self.n || u >= v {
            return Err(Error::Validation(format!(
                "edge ({u}, {v}) is not a forward edge over 1..={}",
                self.n
            )));
        }
        self.edges.insert((u, v));
        Ok(())
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.edges.contains(&(u, v))
    }

    /// Dense 0-based adjacency, `adj[u][v]` for the edge `u+1 -> v+1`.
    pub fn adjacency(&self) -> Vec<Vec<bool>> {
        let mut adj = vec![vec![false; self.n]; self.n];
        for &(u, v) in &self.edges {
            adj[u - 1][v - 1] = true;
        }
        adj
    }
}

/// Cache record: `{"id": ..., "n": ..., "edges": [[u, v], ...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceGraphRecord {
    pub id: String,
    pub n: usize,
    pub edges: Vec<[usize; 2]>,
}

impl SentenceGraphRecord {
    pub fn new(id: impl Into<String>, graph: &SentenceGraph) -> Self {
        SentenceGraphRecord {
            id: id.into(),
            n: graph.n,
            edges: graph.edges().map(|(u, v)| [u, v]).collect(),
        }
    }

    pub fn to_graph(&self) -> Result<SentenceGraph> {
        SentenceGraph::from_edges(self.n, self.edges.iter().map(|e| (e[0], e[1])))
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn cosine(a: &[f64], na: f64, b: &[f64], nb: f64) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    dot / (na * nb)
}

/// Embedding vectors (with their norms) of a sentence's scorable nouns.
fn scorable<'t>(sentence: &Sentence, table: &'t EmbeddingTable) -> Vec<(&'t [f64], f64)> {
    sentence
        .nouns
        .iter()
        .filter_map(|noun| table.get(&noun.to_lowercase()))
        .map(|v| (v, norm(v)))
        .filter(|&(_, n)| n > 0.0)
        .collect()
}

fn max_similarity(a: &[(&[f64], f64)], b: &[(&[f64], f64)]) -> Option<f64> {
    let mut best: Option<f64> = None;
    for &(va, na) in a {
        for &(vb, nb) in b {
            let s = cosine(va, na, vb, nb);
            best = Some(best.map_or(s, |m| m.max(s)));
        }
    }
    best
}

/// Highest cosine similarity over all noun pairs drawn from the two
/// sentences, or `None` when no pair can be scored.
pub fn max_noun_similarity(su: &Sentence, sv: &Sentence, table: &EmbeddingTable) -> Option<f64> {
    max_similarity(&scorable(su, table), &scorable(sv, table))
}

pub fn build_sentence_graph(
    doc: &Document,
    table: &EmbeddingTable,
    delta: SimilarityThreshold,
) -> Result<SentenceGraph> {
    if doc.sentences.is_empty() {
        return Err(Error::Validation(format!(
            "document {:?} has no sentences",
            doc.id
        )));
    }
    let vectors: Vec<_> = doc.sentences.iter().map(|s| scorable(s, table)).collect();
    let n = vectors.len();
    let mut graph = SentenceGraph::empty(n);
    for u in 0..n {
        for v in u + 1..n {
            if let Some(score) = max_similarity(&vectors[u], &vectors[v]) {
                if score > delta.value() {
                    graph.edges.insert((u + 1, v + 1));
                }
            }
        }
    }
    Ok(graph)
}
