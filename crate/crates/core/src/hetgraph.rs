//! The corpus-level doc–subgraph graph and its normalized propagation matrix.
//!
//! Nodes are the `N` training documents followed by the `M` subgraph types.
//! A document links to each subgraph type it contains with weight
//! `(f_ij / sum_j' f_ij') * ln(N / df_j)`. Two subgraph types that co-occur in
//! some document are linked by their PMI over documents, clipped at zero.
//! Zero weights are not stored as edges.

use std::collections::{BTreeMap, HashMap};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::census::{Signature, SubgraphSet};
use crate::{Error, Result};

/// Subgraph types of a training corpus with document and co-document frequencies.
#[derive(Debug, Clone, PartialEq)]
pub struct SubgraphVocabulary {
    k: usize,
    signatures: Vec<Signature>,
    index: HashMap<Signature, usize>,
    doc_freq: Vec<usize>,
    co_doc_freq: BTreeMap<(usize, usize), usize>,
    n_docs: usize,
}

impl SubgraphVocabulary {
    pub fn len(&self) -> usize {
        self.signatures.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signatures.is_empty()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Training corpus size `N`.
    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    pub fn signatures(&self) -> &[Signature] {
        &self.signatures
    }

    pub fn position(&self, sig: &Signature) -> Option<usize> {
        self.index.get(sig).copied()
    }

    pub fn doc_freq(&self, j: usize) -> usize {
        self.doc_freq[j]
    }

    /// Number of documents containing both types; 0 when they never co-occur.
    pub fn co_doc_freq(&self, j: usize, j2: usize) -> usize {
        let key = if j < j2 { (j, j2) } else { (j2, j) };
        self.co_doc_freq.get(&key).copied().unwrap_or(0)
    }

    /// Co-occurring pairs `(j, j2)` with `j < j2` and their co-document frequency.
    pub fn co_occurring(&self) -> impl Iterator<Item = ((usize, usize), usize)> + '_ {
        self.co_doc_freq.iter().map(|(&p, &c)| (p, c))
    }
}

/// Builds the vocabulary of every subgraph type present in at least one training document.
/// Types are ordered by signature.
pub fn build_vocabulary(sets: &[SubgraphSet]) -> Result<SubgraphVocabulary> {
    let k = sets.first().map_or(0, SubgraphSet::k);
    if let Some(bad) = sets.iter().find(|s| s.k() != k) {
        return Err(Error::Validation(format!(
            "subgraph sets mix k={k} and k={}",
            bad.k()
        )));
    }
    let mut df: BTreeMap<Signature, usize> = BTreeMap::new();
    for set in sets {
        for sig in set.signatures() {
            *df.entry(*sig).or_insert(0) += 1;
        }
    }
    let signatures: Vec<Signature> = df.keys().copied().collect();
    let index: HashMap<Signature, usize> = signatures
        .iter()
        .enumerate()
        .map(|(i, s)| (*s, i))
        .collect();
    let doc_freq = df.into_values().collect();

    let mut co_doc_freq = BTreeMap::new();
    for set in sets {
        let present: Vec<usize> = set.signatures().map(|s| index[s]).collect();
        for (a, &j) in present.iter().enumerate() {
            for &j2 in &present[a + 1..] {
                let key = if j < j2 { (j, j2) } else { (j2, j) };
                *co_doc_freq.entry(key).or_insert(0) += 1;
            }
        }
    }

    Ok(SubgraphVocabulary {
        k,
        signatures,
        index,
        doc_freq,
        co_doc_freq,
        n_docs: sets.len(),
    })
}

/// Normalized frequency times inverse document frequency (natural log).
pub fn doc_subgraph_weight(count: u64, total: u64, doc_freq: usize, n_docs: usize) -> f64 {
    (count as f64 / total as f64) * (n_docs as f64 / doc_freq as f64).ln()
}

/// Pointwise mutual information of two subgraph types over documents, clipped at 0.
pub fn pmi_weight(doc_freq_a: usize, doc_freq_b: usize, co_doc_freq: usize, n_docs: usize) -> f64 {
    let n = n_docs as f64;
    let joint = co_doc_freq as f64 / n;
    let pa = doc_freq_a as f64 / n;
    let pb = doc_freq_b as f64 / n;
    (joint / (pa * pb)).ln().max(0.0)
}

/// Edge-type switches for ablations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeFlags {
    /// Document–subgraph edges (EDS).
    pub doc_subgraph: bool,
    /// Subgraph–subgraph edges (ESS).
    pub subgraph_subgraph: bool,
}

impl Default for EdgeFlags {
    fn default() -> Self {
        EdgeFlags {
            doc_subgraph: true,
            subgraph_subgraph: true,
        }
    }
}

/// Symmetric, non-negative weighted adjacency over documents then subgraph types.
#[derive(Debug, Clone, PartialEq)]
pub struct HeteroGraph {
    n_docs: usize,
    n_subgraphs: usize,
    flags: EdgeFlags,
    adjacency: Array2<f64>,
}

impl HeteroGraph {
    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    pub fn n_subgraphs(&self) -> usize {
        self.n_subgraphs
    }

    pub fn order(&self) -> usize {
        self.n_docs + self.n_subgraphs
    }

    pub fn flags(&self) -> EdgeFlags {
        self.flags
    }

    pub fn adjacency(&self) -> &Array2<f64> {
        &self.adjacency
    }

    /// Node index of subgraph type `j`.
    pub fn subgraph_node(&self, j: usize) -> usize {
        self.n_docs + j
    }

    /// Nonzero entries `(i, j, weight)` in row-major order (both triangles).
    pub fn to_coo(&self) -> Vec<(usize, usize, f64)> {
        self.adjacency
            .indexed_iter()
            .filter(|(_, &w)| w != 0.0)
            .map(|((i, j), &w)| (i, j, w))
            .collect()
    }

    pub fn dump(&self, vocab: &SubgraphVocabulary) -> GraphDump {
        GraphDump {
            n_docs: self.n_docs,
            n_subgraphs: self.n_subgraphs,
            signatures: vocab.signatures().iter().map(ToString::to_string).collect(),
            edges: self
                .to_coo()
                .into_iter()
                .filter(|&(i, j, _)| i < j)
                .collect(),
        }
    }
}

/// Inspection format: `{"N", "M", "signatures", "edges": [[i, j, w], ...]}` with `i < j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphDump {
    #[serde(rename = "N")]
    pub n_docs: usize,
    #[serde(rename = "M")]
    pub n_subgraphs: usize,
    pub signatures: Vec<String>,
    pub edges: Vec<(usize, usize, f64)>,
}

/// Doc–subgraph weights of one document against a frozen vocabulary.
/// Types missing from the vocabulary are left out of the normalizing total.
fn document_weights(vocab: &SubgraphVocabulary, set: &SubgraphSet) -> Vec<(usize, f64)> {
    let known: Vec<(usize, u64)> = set
        .iter()
        .filter_map(|(sig, c)| vocab.position(sig).map(|j| (j, c)))
        .collect();
    let total: u64 = known.iter().map(|&(_, c)| c).sum();
    known
        .into_iter()
        .map(|(j, c)| {
            (
                j,
                doc_subgraph_weight(c, total, vocab.doc_freq(j), vocab.n_docs()),
            )
        })
        .filter(|&(_, w)| w != 0.0)
        .collect()
}

pub fn build_hetero_graph(
    vocab: &SubgraphVocabulary,
    sets: &[SubgraphSet],
    flags: EdgeFlags,
) -> Result<HeteroGraph> {
    if sets.len() != vocab.n_docs() {
        return Err(Error::Shape(format!(
            "vocabulary built from {} documents, got {} subgraph sets",
            vocab.n_docs(),
            sets.len()
        )));
    }
    let n = sets.len();
    let m = vocab.len();
    let mut a = Array2::zeros((n + m, n + m));

    if flags.doc_subgraph {
        for (i, set) in sets.iter().enumerate() {
            for (j, w) in document_weights(vocab, set) {
                a[[i, n + j]] = w;
                a[[n + j, i]] = w;
            }
        }
    }
    if flags.subgraph_subgraph {
        for ((j, j2), codf) in vocab.co_occurring() {
            let w = pmi_weight(vocab.doc_freq(j), vocab.doc_freq(j2), codf, n);
            if w != 0.0 {
                a[[n + j, n + j2]] = w;
                a[[n + j2, n + j]] = w;
            }
        }
    }
    Ok(HeteroGraph {
        n_docs: n,
        n_subgraphs: m,
        flags,
        adjacency: a,
    })
}

/// Returns a copy of `graph` with one extra document node at index `N`
/// (subgraph nodes shift to `N+1..`). Weights use the training-corpus
/// `N` and document frequencies; subgraph–subgraph edges are unchanged.
pub fn attach_document(
    graph: &HeteroGraph,
    vocab: &SubgraphVocabulary,
    set: &SubgraphSet,
) -> Result<HeteroGraph> {
    if vocab.len() != graph.n_subgraphs || vocab.n_docs() != graph.n_docs {
        return Err(Error::Shape("vocabulary does not match graph".into()));
    }
    if !vocab.is_empty() && set.k() != vocab.k() {
        return Err(Error::Validation(format!(
            "document subgraphs have k={}, vocabulary has k={}",
            set.k(),
            vocab.k()
        )));
    }
    let n = graph.n_docs;
    let m = graph.n_subgraphs;
    let shift = |i: usize| if i < n { i } else { i + 1 };

    let mut a = Array2::zeros((n + m + 1, n + m + 1));
    for ((i, j), &w) in graph.adjacency.indexed_iter() {
        if w != 0.0 {
            a[[shift(i), shift(j)]] = w;
        }
    }
    if graph.flags.doc_subgraph {
        for (j, w) in document_weights(vocab, set) {
            a[[n, n + 1 + j]] = w;
            a[[n + 1 + j, n]] = w;
        }
    }
    Ok(HeteroGraph {
        n_docs: n + 1,
        n_subgraphs: m,
        flags: graph.flags,
        adjacency: a,
    })
}

/// `D^-1/2 (A + I) D^-1/2` with `D` the row sums of `A + I`.
#[derive(Debug, Clone, PartialEq)]
pub struct PropagationMatrix(Array2<f64>);

impl PropagationMatrix {
    pub fn as_array(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn into_array(self) -> Array2<f64> {
        self.0
    }

    pub fn order(&self) -> usize {
        self.0.nrows()
    }
}

pub fn normalize(graph: &HeteroGraph) -> PropagationMatrix {
    normalize_adjacency(&graph.adjacency)
}

/// Dense normalization of a square non-negative adjacency matrix.
pub fn normalize_adjacency(adjacency: &Array2<f64>) -> PropagationMatrix {
    let order = adjacency.nrows();
    let mut tilde = adjacency.clone();
    for i in 0..order {
        tilde[[i, i]] += 1.0;
    }
    let degree: Vec<f64> = (0..order)
        .map(|i| {
            let mut s = 0.0;
            for j in 0..order {
                let v = tilde[[i, j]];
                if v != 0.0 {
                    s += v;
                }
            }
            s
        })
        .collect();
    let mut out = tilde;
    for ((i, j), v) in out.indexed_iter_mut() {
        if *v != 0.0 {
            *v /= (degree[i] * degree[j]).sqrt();
        }
    }
    PropagationMatrix(out)
}

/// Coordinate-list normalization for sparse adjacencies. `entries` must be
/// sorted by `(row, col)` without duplicates; the result matches
/// [`normalize_adjacency`] on the equivalent dense matrix exactly.
pub fn normalize_coo(order: usize, entries: &[(usize, usize, f64)]) -> Result<PropagationMatrix> {
    if entries
        .windows(2)
        .any(|w| (w[0].0, w[0].1) >= (w[1].0, w[1].1))
    {
        return Err(Error::Validation(
            "coordinate entries must be sorted and unique".into(),
        ));
    }
    if entries.iter().any(|&(i, j, _)| i >= order || j >= order) {
        return Err(Error::Shape(format!(
            "coordinate entry outside order {order}"
        )));
    }
    // A + I as sorted triplets
    let mut tilde: Vec<(usize, usize, f64)> = Vec::with_capacity(entries.len() + order);
    let mut it = entries.iter().peekable();
    for i in 0..order {
        let mut diag_done = false;
        while let Some(&&(r, c, w)) = it.peek() {
            if r != i {
                break;
            }
            if !diag_done && c >= i {
                if c == i {
                    tilde.push((i, i, w + 1.0));
                    it.next();
                    diag_done = true;
                    continue;
                }
                tilde.push((i, i, 1.0));
                diag_done = true;
            }
            tilde.push((r, c, w));
            it.next();
        }
        if !diag_done {
            tilde.push((i, i, 1.0));
        }
    }
    let mut degree = vec![0.0; order];
    for &(i, _, w) in &tilde {
        if w != 0.0 {
            degree[i] += w;
        }
    }
    let mut out = Array2::zeros((order, order));
    for (i, j, w) in tilde {
        if w != 0.0 {
            out[[i, j]] = w / (degree[i] * degree[j]).sqrt();
        }
    }
    Ok(PropagationMatrix(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::census::canonical_signature;
    use ndarray::array;

    fn g1() -> Signature {
        canonical_signature(3, &[]).unwrap()
    }

    fn g2() -> Signature {
        canonical_signature(3, &[(1, 2)]).unwrap()
    }

    fn set(counts: &[(Signature, u64)]) -> SubgraphSet {
        SubgraphSet::from_counts(3, counts.iter().copied()).unwrap()
    }

    #[test]
    fn vocabulary_tallies() {
        let sets = [set(&[(g1(), 2), (g2(), 2)]), set(&[(g1(), 1)])];
        let v = build_vocabulary(&sets).unwrap();
        assert_eq!(v.len(), 2);
        let (j1, j2) = (v.position(&g1()).unwrap(), v.position(&g2()).unwrap());
        assert_eq!(v.doc_freq(j1), 2);
        assert_eq!(v.doc_freq(j2), 1);
        assert_eq!(v.co_doc_freq(j1, j2), 1);
        assert_eq!(v.co_doc_freq(j2, j1), 1);
    }

    #[test]
    fn empty_and_single_type_vocabularies() {
        let v = build_vocabulary(&[SubgraphSet::new(3)]).unwrap();
        assert_eq!(v.len(), 0);
        let sets = vec![set(&[(g1(), 1)]); 3];
        let v = build_vocabulary(&sets).unwrap();
        assert_eq!(v.len(), 1);
        assert_eq!(v.doc_freq(0), 3);
        assert_eq!(v.co_occurring().count(), 0);
    }

    #[test]
    fn mixed_k_rejected() {
        let sets = [SubgraphSet::new(3), SubgraphSet::new(4)];
        assert!(matches!(build_vocabulary(&sets), Err(Error::Validation(_))));
    }

    #[test]
    fn weight_hand_cases() {
        assert!((doc_subgraph_weight(2, 4, 1, 2) - 0.5 * 2f64.ln()).abs() < 1e-12);
        assert!((doc_subgraph_weight(2, 4, 1, 2) - 0.346574).abs() < 1e-6);
        assert_eq!(doc_subgraph_weight(2, 4, 2, 2), 0.0);
        assert_eq!(doc_subgraph_weight(3, 3, 1, 1), 0.0);
        assert!((pmi_weight(3, 2, 2, 4) - (4.0f64 / 3.0).ln()).abs() < 1e-12);
        assert_eq!(pmi_weight(2, 2, 1, 4), 0.0);
        assert_eq!(pmi_weight(3, 3, 2, 4), 0.0);
    }

    #[test]
    fn no_flags_gives_zero_matrix() {
        let sets = [set(&[(g1(), 2), (g2(), 2)]), set(&[(g1(), 1)])];
        let v = build_vocabulary(&sets).unwrap();
        let flags = EdgeFlags {
            doc_subgraph: false,
            subgraph_subgraph: false,
        };
        let g = build_hetero_graph(&v, &sets, flags).unwrap();
        assert_eq!(g.order(), 4);
        assert!(g.adjacency().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn two_document_graph_entries() {
        let sets = [set(&[(g1(), 2), (g2(), 2)]), set(&[(g1(), 1)])];
        let v = build_vocabulary(&sets).unwrap();
        let g = build_hetero_graph(&v, &sets, EdgeFlags::default()).unwrap();
        let a = g.adjacency();
        let j2 = 2 + v.position(&g2()).unwrap();
        let j1 = 2 + v.position(&g1()).unwrap();
        // doc0 - g2: (2/4) ln(2/1); doc*-g1: ln(2/2) = 0; pmi(g1,g2) = ln(0.5/(1*0.5)) = 0
        let mut expected = Array2::<f64>::zeros((4, 4));
        expected[[0, j2]] = 0.5 * 2f64.ln();
        expected[[j2, 0]] = 0.5 * 2f64.ln();
        assert_eq!(a, &expected);
        assert_eq!(a[[0, j1]], 0.0);
        assert_eq!(a, &a.t().to_owned());
    }

    #[test]
    fn normalize_hand_cases() {
        let p = normalize_adjacency(&Array2::zeros((2, 2)));
        assert_eq!(p.as_array(), &Array2::<f64>::eye(2));
        let p = normalize_adjacency(&array![[0.0, 1.0], [1.0, 0.0]]);
        assert_eq!(p.as_array(), &array![[0.5, 0.5], [0.5, 0.5]]);
        let p = normalize_adjacency(&array![[0.0, 3.0], [3.0, 0.0]]);
        assert_eq!(p.as_array(), &array![[0.25, 0.75], [0.75, 0.25]]);
    }

    #[test]
    fn coo_matches_dense() {
        let a = array![
            [0.0, 0.3, 0.0, 1.7],
            [0.3, 0.0, 0.2, 0.0],
            [0.0, 0.2, 0.5, 0.0],
            [1.7, 0.0, 0.0, 0.0]
        ];
        let coo: Vec<_> = a
            .indexed_iter()
            .filter(|(_, &w)| w != 0.0)
            .map(|((i, j), &w)| (i, j, w))
            .collect();
        assert_eq!(normalize_coo(4, &coo).unwrap(), normalize_adjacency(&a));
        assert!(normalize_coo(4, &[(1, 0, 1.0), (0, 1, 1.0)]).is_err());
    }

    #[test]
    fn attach_hand_case() {
        let unseen = canonical_signature(3, &[(1, 2), (2, 3)]).unwrap();
        let sets = [set(&[(g1(), 1)]), set(&[(g2(), 1)])];
        let v = build_vocabulary(&sets).unwrap();
        let g = build_hetero_graph(&v, &sets, EdgeFlags::default()).unwrap();
        let test = set(&[(g1(), 2), (unseen, 2)]);
        let big = attach_document(&g, &v, &test).unwrap();
        assert_eq!(big.n_docs(), 3);
        let j1 = 3 + v.position(&g1()).unwrap();
        assert!((big.adjacency()[[2, j1]] - 2f64.ln()).abs() < 1e-12);
        assert!((big.adjacency()[[2, j1]] - std::f64::consts::LN_2).abs() < 1e-12);
        assert_eq!(
            big.adjacency().row(2).iter().filter(|&&x| x != 0.0).count(),
            1
        );
    }

    #[test]
    fn attach_empty_set_is_isolated() {
        let sets = [set(&[(g1(), 1)]), set(&[(g2(), 1)])];
        let v = build_vocabulary(&sets).unwrap();
        let g = build_hetero_graph(&v, &sets, EdgeFlags::default()).unwrap();
        let big = attach_document(&g, &v, &SubgraphSet::new(3)).unwrap();
        assert!(big.adjacency().row(2).iter().all(|&x| x == 0.0));
        let p = normalize(&big);
        let mut e = ndarray::Array1::zeros(big.order());
        e[2] = 1.0;
        assert_eq!(p.as_array().row(2), e);
    }

    #[test]
    fn attach_preserves_training_block() {
        let sets = [
            set(&[(g1(), 3), (g2(), 1)]),
            set(&[(g2(), 2)]),
            set(&[(g1(), 1)]),
        ];
        let v = build_vocabulary(&sets).unwrap();
        let g = build_hetero_graph(&v, &sets, EdgeFlags::default()).unwrap();
        let big = attach_document(&g, &v, &set(&[(g1(), 1), (g2(), 1)])).unwrap();
        let n = g.n_docs();
        let shift = |i: usize| if i < n { i } else { i + 1 };
        for ((i, j), &w) in g.adjacency().indexed_iter() {
            assert_eq!(w.to_bits(), big.adjacency()[[shift(i), shift(j)]].to_bits());
        }
    }

    #[test]
    fn dump_lists_upper_triangle() {
        let sets = [set(&[(g1(), 2), (g2(), 2)]), set(&[(g1(), 1)])];
        let v = build_vocabulary(&sets).unwrap();
        let g = build_hetero_graph(&v, &sets, EdgeFlags::default()).unwrap();
        let d = g.dump(&v);
        assert_eq!((d.n_docs, d.n_subgraphs), (2, 2));
        assert_eq!(d.edges.len(), 1);
        let json = serde_json::to_value(&d).unwrap();
        assert!(json.get("N").is_some() && json.get("M").is_some());
    }
}
