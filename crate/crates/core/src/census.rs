//! k-node subgraph census of sentence graphs.
//!
//! Induced k-node subgraphs are identified up to directed-graph isomorphism
//! by a [`Signature`]: the k×k adjacency matrix, read row-major as a bit
//! string with cell (0, 0) as the most significant bit, minimized over all
//! k! node relabelings.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use itertools::Itertools;
use serde::{Deserialize, Serialize};

use crate::sentgraph::SentenceGraph;
use crate::{Error, Result};

pub const MAX_K: usize = 6;

/// Canonical isomorphism-class identifier of a small directed graph.
///
/// Serialized as `"k:hex"`, the hex digits zero-padded to `ceil(k*k/4)`, so
/// string order agrees with the derived `Ord`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Signature {
    k: u8,
    code: u64,
}

impl Signature {
    pub fn k(&self) -> usize {
        self.k as usize
    }

    /// The minimized adjacency bit string as an integer.
    pub fn code(&self) -> u64 {
        self.code
    }

    /// Edges of the canonical representative, 1-based.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let k = self.k();
        (0..k * k)
            .filter(|&p| self.code >> (k * k - 1 - p) & 1 == 1)
            .map(|p| (p / k + 1, p % k + 1))
            .collect()
    }

    pub fn edge_count(&self) -> usize {
        self.code.count_ones() as usize
    }
}

impl fmt::Display for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let k = self.k();
        let width = (k * k).div_ceil(4).max(1);
        write!(f, "{}:{:0width$x}", k, self.code, width = width)
    }
}

impl FromStr for Signature {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Validation(format!("malformed signature {s:?}"));
        let (k, hex) = s.split_once(':').ok_or_else(bad)?;
        let k: usize = k.parse().map_err(|_| bad())?;
        if !(1..=MAX_K).contains(&k) {
            return Err(Error::UnsupportedSize(k));
        }
        let code = u64::from_str_radix(hex, 16).map_err(|_| bad())?;
        if k * k < 64 && code >> (k * k) != 0 {
            return Err(bad());
        }
        Ok(Signature { k: k as u8, code })
    }
}

impl Serialize for Signature {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Signature {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

fn permutations(k: usize) -> &'static [Vec<u8>] {
    static TABLES: OnceLock<Vec<Vec<Vec<u8>>>> = OnceLock::new();
    let tables = TABLES.get_or_init(|| {
        (0..=MAX_K)
            .map(|k| (0..k as u8).permutations(k).collect())
            .collect()
    });
    &tables[k]
}

/// Minimum adjacency code over all relabelings; edges are 0-based.
fn canonical_code(k: usize, edges: &[(u8, u8)]) -> u64 {
    let top = k * k - 1;
    permutations(k)
        .iter()
        .map(|p| {
            edges.iter().fold(0u64, |acc, &(u, v)| {
                acc | 1u64 << (top - (p[u as usize] as usize * k + p[v as usize] as usize))
            })
        })
        .min()
        .unwrap_or(0)
}

/// Canonical signature of the directed graph with nodes `1..=k` and the given edges.
pub fn canonical_signature(k: usize, edges: &[(usize, usize)]) -> Result<Signature> {
    if k > MAX_K {
        return Err(Error::UnsupportedSize(k));
    }
    if k == 0 {
        return Err(Error::Validation("subgraph needs at least one node".into()));
    }
    let mut local = Vec::with_capacity(edges.len());
    for &(u, v) in edges {
        if u == 0 || v == 0 || u > k || v > k {
            return Err(Error::Validation(format!(
                "edge ({u}, {v}) outside 1..={k}"
            )));
        }
        if u == v {
            return Err(Error::Validation(format!("self-loop at node {u}")));
        }
        local.push(((u - 1) as u8, (v - 1) as u8));
    }
    Ok(Signature {
        k: k as u8,
        code: canonical_code(k, &local),
    })
}

/// Number of isomorphism classes among all forward-edge graphs on `k` ordered nodes.
pub fn count_dag_classes(k: usize) -> Result<usize> {
    if k > MAX_K {
        return Err(Error::UnsupportedSize(k));
    }
    let mut canon = Canonicalizer::new(k)?;
    let pairs = k * k.saturating_sub(1) / 2;
    let classes: std::collections::HashSet<Signature> = (0..1u32 << pairs)
        .map(|mask| canon.signature(mask))
        .collect();
    Ok(classes.len())
}

/// Memoizes signatures of forward-edge k-node graphs keyed by their pair mask.
///
/// Pair `(a, b)` with `a < b` owns bit `index(a, b)` in lexicographic pair order.
#[derive(Debug)]
struct Canonicalizer {
    k: usize,
    pairs: Vec<(u8, u8)>,
    memo: HashMap<u32, Signature>,
}

impl Canonicalizer {
    fn new(k: usize) -> Result<Self> {
        if !(1..=MAX_K).contains(&k) {
            return Err(Error::UnsupportedSize(k));
        }
        let pairs = (0..k as u8).tuple_combinations().collect();
        Ok(Canonicalizer {
            k,
            pairs,
            memo: HashMap::new(),
        })
    }

    fn signature(&mut self, mask: u32) -> Signature {
        let (k, pairs) = (self.k, &self.pairs);
        *self.memo.entry(mask).or_insert_with(|| {
            let edges: Vec<(u8, u8)> = pairs
                .iter()
                .enumerate()
                .filter(|(i, _)| mask >> i & 1 == 1)
                .map(|(_, &e)| e)
                .collect();
            Signature {
                k: k as u8,
                code: canonical_code(k, &edges),
            }
        })
    }

    /// Pair mask of the subgraph induced by `nodes` (0-based, ascending).
    fn induced_mask(&self, adj: &[Vec<bool>], nodes: &[usize]) -> u32 {
        self.pairs
            .iter()
            .enumerate()
            .filter(|(_, &(a, b))| adj[nodes[a as usize]][nodes[b as usize]])
            .fold(0, |m, (i, _)| m | 1 << i)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum CensusMode {
    /// Strided windows of `w` consecutive sentences, stride `w - k + 1`,
    /// every k-combination inside each window.
    #[default]
    AlgorithmFaithful,
    /// Every k-subset whose index span (max - min) is at most `w`, counted once.
    Exhaustive,
}

impl fmt::Display for CensusMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CensusMode::AlgorithmFaithful => "algorithm-faithful",
            CensusMode::Exhaustive => "exhaustive",
        })
    }
}

impl FromStr for CensusMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "algorithm-faithful" | "faithful" => Ok(CensusMode::AlgorithmFaithful),
            "exhaustive" => Ok(CensusMode::Exhaustive),
            _ => Err(Error::Validation(format!("unknown census mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CensusConfig {
    k: usize,
    w: usize,
    mode: CensusMode,
}

impl CensusConfig {
    pub fn new(k: usize, w: usize, mode: CensusMode) -> Result<Self> {
        if k > MAX_K {
            return Err(Error::UnsupportedSize(k));
        }
        if k < 2 {
            return Err(Error::Validation(format!(
                "subgraph size must be >= 2, got {k}"
            )));
        }
        if w < k {
            return Err(Error::Validation(format!(
                "window w={w} is smaller than k={k}"
            )));
        }
        Ok(CensusConfig { k, w, mode })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn w(&self) -> usize {
        self.w
    }

    pub fn mode(&self) -> CensusMode {
        self.mode
    }
}

impl Default for CensusConfig {
    fn default() -> Self {
        CensusConfig {
            k: 4,
            w: 8,
            mode: CensusMode::AlgorithmFaithful,
        }
    }
}

/// Frequencies of k-node subgraph classes in one document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubgraphSet {
    k: usize,
    counts: BTreeMap<Signature, u64>,
}

impl SubgraphSet {
    pub fn new(k: usize) -> Self {
        SubgraphSet {
            k,
            counts: BTreeMap::new(),
        }
    }

    pub fn from_counts(
        k: usize,
        counts: impl IntoIterator<Item = (Signature, u64)>,
    ) -> Result<Self> {
        let mut set = SubgraphSet::new(k);
        for (sig, c) in counts {
            if sig.k() != k {
                return Err(Error::Validation(format!(
                    "signature {sig} does not have k={k}"
                )));
            }
            if c > 0 {
                *set.counts.entry(sig).or_insert(0) += c;
            }
        }
        Ok(set)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn get(&self, sig: &Signature) -> u64 {
        self.counts.get(sig).copied().unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Signature, u64)> {
        self.counts.iter().map(|(s, &c)| (s, c))
    }

    pub fn signatures(&self) -> impl Iterator<Item = &Signature> {
        self.counts.keys()
    }

    fn add(&mut self, sig: Signature) {
        *self.counts.entry(sig).or_insert(0) += 1;
    }
}

/// Cache record: `{"id": ..., "k": ..., "counts": {"k:hex": n, ...}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgraphSetRecord {
    pub id: String,
    pub k: usize,
    pub counts: BTreeMap<Signature, u64>,
}

impl SubgraphSetRecord {
    pub fn new(id: impl Into<String>, set: &SubgraphSet) -> Self {
        SubgraphSetRecord {
            id: id.into(),
            k: set.k,
            counts: set.counts.clone(),
        }
    }

    pub fn to_set(&self) -> Result<SubgraphSet> {
        SubgraphSet::from_counts(self.k, self.counts.iter().map(|(s, &c)| (*s, c)))
    }
}

/// Counts induced k-node subgraphs of `graph` according to `cfg`.
pub fn mine_subgraphs(graph: &SentenceGraph, cfg: &CensusConfig) -> SubgraphSet {
    let (k, w, n) = (cfg.k, cfg.w, graph.node_count());
    let mut set = SubgraphSet::new(k);
    if n < k {
        return set;
    }
    let adj = graph.adjacency();
    let mut canon = Canonicalizer::new(k).expect("validated by CensusConfig");
    let mut combo = Vec::with_capacity(k);

    match cfg.mode {
        CensusMode::AlgorithmFaithful => {
            let mut start = 0;
            while start < n - k + 1 {
                let end = (start + w).min(n);
                for nodes in (start..end).combinations(k) {
                    set.add(canon.signature(canon.induced_mask(&adj, &nodes)));
                }
                start += w - k + 1;
            }
        }
        CensusMode::Exhaustive => {
            for first in 0..n {
                let last = (first + w).min(n - 1);
                for rest in (first + 1..=last).combinations(k - 1) {
                    combo.clear();
                    combo.push(first);
                    combo.extend(rest);
                    set.add(canon.signature(canon.induced_mask(&adj, &combo)));
                }
            }
        }
    }
    set
}
