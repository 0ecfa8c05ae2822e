//! Corpus loading, vectorization, per-slice tree building and linking of
//! adjacent trees.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cluster;
use crate::dcm::{DcmParams, Suff};
use crate::error::{Error, Result};
use crate::model::{DocPair, Document, DocumentStore, Source, TermCounts, TopicPair, TopicTree, TreeMapping, Vocabulary};
use crate::vecmath;

pub const DEFAULT_WINDOW_SECS: i64 = 7 * 86_400;

/// A corpus line before vectorization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawDocument {
    pub id: String,
    pub timestamp: i64,
    pub source: Source,
    pub title: String,
    pub text: String,
}

impl RawDocument {
    pub fn into_document(self, vector: TermCounts) -> Document {
        Document { id: self.id, timestamp: self.timestamp, source: self.source, title: self.title, text: self.text, vector }
    }
}

impl From<Document> for RawDocument {
    fn from(d: Document) -> Self {
        Self { id: d.id, timestamp: d.timestamp, source: d.source, title: d.title, text: d.text }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusSlice {
    pub time_index: usize,
    pub documents: Vec<Document>,
}

/// Reads a JSONL corpus and buckets it into `window_secs` slices.
pub fn load_corpus(path: &Path, window_secs: i64) -> Result<Vec<CorpusSlice>> {
    let file = std::fs::File::open(path)?;
    let docs = parse_corpus(std::io::BufReader::new(file))?;
    slice_documents(docs, window_secs)
}

pub fn parse_corpus<R: BufRead>(reader: R) -> Result<Vec<RawDocument>> {
    let mut docs = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let doc: RawDocument =
            serde_json::from_str(&line).map_err(|e| Error::Parse { line: i + 1, message: e.to_string() })?;
        docs.push(doc);
    }
    Ok(docs)
}

/// Buckets documents by `(timestamp − earliest) / window_secs`, dropping empty
/// buckets and renumbering the rest consecutively.
pub fn slice_documents(docs: Vec<RawDocument>, window_secs: i64) -> Result<Vec<CorpusSlice>> {
    if window_secs <= 0 {
        return Err(Error::BadParams(format!("window of {window_secs} seconds")));
    }
    let mut seen = HashSet::new();
    for d in &docs {
        if !seen.insert(d.id.clone()) {
            return Err(Error::DuplicateId(d.id.clone()));
        }
    }
    let Some(start) = docs.iter().map(|d| d.timestamp).min() else {
        return Ok(Vec::new());
    };
    let mut buckets: BTreeMap<i64, Vec<RawDocument>> = BTreeMap::new();
    for d in docs {
        buckets.entry((d.timestamp - start) / window_secs).or_default().push(d);
    }
    Ok(buckets
        .into_values()
        .enumerate()
        .map(|(t, mut ds)| {
            ds.sort_by(|a, b| a.timestamp.cmp(&b.timestamp).then_with(|| a.id.cmp(&b.id)));
            CorpusSlice { time_index: t, documents: ds.into_iter().map(|d| d.into_document(TermCounts::new())).collect() }
        })
        .collect())
}

const STOPWORDS: &[&str] = &[
    "about", "above", "after", "again", "against", "all", "also", "amp", "and", "any", "are", "because", "been",
    "before", "being", "below", "between", "both", "but", "can", "com", "could", "did", "does", "doing", "down",
    "during", "each", "few", "for", "from", "further", "had", "has", "have", "having", "her", "here", "hers",
    "herself", "him", "himself", "his", "how", "http", "https", "into", "its", "itself", "just", "more", "most",
    "not", "now", "off", "once", "only", "other", "our", "ours", "ourselves", "out", "over", "own", "same", "she",
    "should", "some", "such", "than", "that", "the", "their", "theirs", "them", "themselves", "then", "there",
    "these", "they", "this", "those", "through", "too", "under", "until", "very", "was", "were", "what", "when",
    "where", "which", "while", "who", "whom", "why", "will", "with", "would", "www", "you", "your", "yours",
    "yourself", "yourselves",
];

pub fn is_stopword(token: &str) -> bool {
    STOPWORDS.binary_search(&token).is_ok()
}

/// Lowercased alphanumeric runs.
pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()).map(|t| t.to_lowercase())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VocabParams {
    pub min_df: usize,
    pub min_len: usize,
}

impl Default for VocabParams {
    fn default() -> Self {
        Self { min_df: 2, min_len: 3 }
    }
}

fn vocabulary_candidate(token: &str, params: &VocabParams) -> bool {
    token.chars().count() >= params.min_len && !is_stopword(token)
}

/// Counts every in-vocabulary token of `text`.
pub fn count_terms(vocab: &Vocabulary, text: &str) -> TermCounts {
    TermCounts::from_pairs(tokenize(text).filter_map(|t| vocab.lookup(&t)).map(|j| (j, 1)))
}

fn doc_text(d: &Document) -> String {
    format!("{} {}", d.title, d.text)
}

/// Builds the vocabulary from document frequencies over all slices and
/// returns slices with count vectors. Documents left without any
/// in-vocabulary term are dropped, as are slices left empty.
pub fn vectorize(slices: &[CorpusSlice], params: &VocabParams) -> Result<(Vocabulary, Vec<CorpusSlice>)> {
    let mut df: BTreeMap<String, usize> = BTreeMap::new();
    for d in slices.iter().flat_map(|s| &s.documents) {
        let text = doc_text(d);
        let uniq: BTreeSet<String> = tokenize(&text).filter(|t| vocabulary_candidate(t, params)).collect();
        for t in uniq {
            *df.entry(t).or_insert(0) += 1;
        }
    }
    let terms: Vec<String> = df.into_iter().filter(|(_, n)| *n >= params.min_df.max(1)).map(|(t, _)| t).collect();
    let vocab = Vocabulary::new(terms)?;
    let mut out = Vec::new();
    for s in slices {
        let docs: Vec<Document> = s
            .documents
            .iter()
            .map(|d| Document { vector: count_terms(&vocab, &doc_text(d)), ..d.clone() })
            .filter(|d| !d.vector.is_empty())
            .collect();
        if !docs.is_empty() {
            out.push(CorpusSlice { time_index: out.len(), documents: docs });
        }
    }
    Ok((vocab, out))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BuildParams {
    /// Leaf cluster count; `None` means `ceil(sqrt(n))`.
    pub micro_k: Option<usize>,
    pub max_children: usize,
    /// Leaf clusters smaller than this are folded into their nearest cluster.
    pub min_subtree_docs: usize,
    pub seed: u64,
    pub kmeans_iters: usize,
    /// Relative slack on the formation log-odds when deciding whether a
    /// partner joins an existing parent instead of forming a new level.
    pub absorb_tolerance: f64,
}

impl Default for BuildParams {
    fn default() -> Self {
        Self { micro_k: None, max_children: 8, min_subtree_docs: 2, seed: 0, kmeans_iters: 50, absorb_tolerance: 0.25 }
    }
}

impl BuildParams {
    pub fn check(&self) -> Result<()> {
        if self.micro_k == Some(0) {
            return Err(Error::BadParams("micro_k must be at least 1".into()));
        }
        if self.max_children < 2 {
            return Err(Error::BadParams("max_children must be at least 2".into()));
        }
        if !(self.absorb_tolerance >= 0.0 && self.absorb_tolerance.is_finite()) {
            return Err(Error::BadParams("absorb_tolerance must be finite and non-negative".into()));
        }
        Ok(())
    }
}

struct Cluster {
    docs: Vec<String>,
    suff: Suff,
    log_f: f64,
    children: Vec<usize>,
    /// Log-odds of the join that created this node; `None` for leaves.
    formed: Option<f64>,
}

fn log_odds(a: &Cluster, b: &Cluster, dcm: &DcmParams) -> f64 {
    let mut u = a.suff.clone();
    u.add(&b.suff);
    u.log_marginal(dcm) - a.log_f - b.log_f
}

/// Micro-clusters documents with spherical k-means, then greedily joins the
/// pair of current roots with the highest DCM log-odds until one remains.
/// A join absorbs `b` into an existing parent `a` when `b` scores about as
/// well against one of `a`'s children as the join that formed `a`; two
/// parents whose children all pair up that well collapse into one.
pub fn build_tree(
    time_index: usize,
    docs: &[&Document],
    store: &DocumentStore,
    dcm: &DcmParams,
    params: &BuildParams,
) -> Result<TopicTree> {
    params.check()?;
    if docs.is_empty() {
        return Err(Error::BadParams("cannot build a tree from an empty slice".into()));
    }
    let dim = store.dim();
    let points: Vec<Vec<f64>> = docs.iter().map(|d| vecmath::dense_unit(&d.vector, dim)).collect();
    let k = params.micro_k.unwrap_or_else(|| (docs.len() as f64).sqrt().ceil() as usize);
    let clustering = cluster::spherical_kmeans(&points, k, params.seed ^ time_index as u64, params.kmeans_iters);
    let mut groups = clustering.members();

    // Fold undersized leaves into the most similar remaining cluster.
    if groups.len() > 1 && params.min_subtree_docs > 1 {
        loop {
            let Some(small) = (0..groups.len()).find(|&g| groups[g].len() < params.min_subtree_docs) else {
                break;
            };
            if groups.len() == 1 {
                break;
            }
            let cen = |g: &Vec<usize>| vecmath::unit_mean(g.iter().map(|&i| points[i].as_slice()), dim);
            let c_small = cen(&groups[small]);
            let target = (0..groups.len())
                .filter(|&g| g != small)
                .max_by(|&a, &b| {
                    vecmath::dot(&c_small, &cen(&groups[a]))
                        .total_cmp(&vecmath::dot(&c_small, &cen(&groups[b])))
                        .then(b.cmp(&a))
                })
                .expect("another group");
            let moved = std::mem::take(&mut groups[small]);
            groups[target].extend(moved);
            groups.remove(small);
        }
    }

    let mut nodes: Vec<Cluster> = Vec::new();
    for g in &groups {
        let mut ids: Vec<String> = g.iter().map(|&i| docs[i].id.clone()).collect();
        ids.sort();
        let suff = Suff::from_docs(g.iter().map(|&i| &docs[i].vector), dcm)?;
        let log_f = suff.log_marginal(dcm);
        nodes.push(Cluster { docs: ids, suff, log_f, children: Vec::new(), formed: None });
    }
    let mut roots: Vec<usize> = (0..nodes.len()).collect();
    let mut pair_cache: HashMap<(usize, usize), f64> = HashMap::new();
    while roots.len() > 1 {
        let mut best: Option<(f64, usize, usize)> = None;
        for x in 0..roots.len() {
            for y in (x + 1)..roots.len() {
                let (a, b) = (roots[x], roots[y]);
                let s = *pair_cache.entry((a, b)).or_insert_with(|| log_odds(&nodes[a], &nodes[b], dcm));
                if best.map_or(true, |(bs, _, _)| s > bs) {
                    best = Some((s, a, b));
                }
            }
        }
        let (score, a, b) = best.expect("at least two roots");
        let slack = |formed: f64| formed - params.absorb_tolerance * formed.abs();
        let absorb_gain = |host: usize, guest: usize| -> Option<f64> {
            let h = &nodes[host];
            let formed = h.formed?;
            if h.children.len() >= params.max_children {
                return None;
            }
            let m = h
                .children
                .iter()
                .map(|&c| log_odds(&nodes[c], &nodes[guest], dcm))
                .fold(f64::NEG_INFINITY, f64::max);
            (m >= slack(formed)).then_some(m)
        };
        let collapses = || -> bool {
            let (x, y) = (&nodes[a], &nodes[b]);
            let (Some(fx), Some(fy)) = (x.formed, y.formed) else {
                return false;
            };
            if x.children.len() + y.children.len() > params.max_children {
                return false;
            }
            let floor = slack(fx.min(fy));
            x.children.iter().all(|&c| y.children.iter().all(|&d| log_odds(&nodes[c], &nodes[d], dcm) >= floor))
        };
        let mut merged_suff = nodes[a].suff.clone();
        merged_suff.add(&nodes[b].suff);
        let mut merged_docs: Vec<String> = nodes[a].docs.iter().chain(&nodes[b].docs).cloned().collect();
        merged_docs.sort();
        let log_f = merged_suff.log_marginal(dcm);
        let (children, formed) = if collapses() {
            let ch = nodes[a].children.iter().chain(&nodes[b].children).copied().collect();
            (ch, nodes[a].formed.zip(nodes[b].formed).map(|(x, y)| x.min(y)))
        } else {
            let choice = match (absorb_gain(a, b), absorb_gain(b, a)) {
                (Some(ga), Some(gb)) => Some(if ga >= gb { (a, b) } else { (b, a) }),
                (Some(_), None) => Some((a, b)),
                (None, Some(_)) => Some((b, a)),
                (None, None) => None,
            };
            match choice {
                Some((host, guest)) => {
                    let mut ch = nodes[host].children.clone();
                    ch.push(guest);
                    (ch, nodes[host].formed)
                }
                None => (vec![a, b], Some(score)),
            }
        };
        let new = nodes.len();
        nodes.push(Cluster { docs: merged_docs, suff: merged_suff, log_f, children, formed });
        roots.retain(|&r| r != a && r != b);
        roots.push(new);
    }

    // Convert to a shape: absorbed hosts are replaced by the new node, so only
    // nodes reachable from the final root are kept.
    let root = roots[0];
    let mut index = HashMap::new();
    let mut order = vec![root];
    let mut i = 0;
    while i < order.len() {
        let v = order[i];
        let mut ch = nodes[v].children.clone();
        ch.sort_by(|&x, &y| nodes[x].docs[0].cmp(&nodes[y].docs[0]));
        order.extend(ch);
        i += 1;
    }
    for (k, &v) in order.iter().enumerate() {
        index.insert(v, k);
    }
    let mut children = vec![Vec::new(); order.len()];
    let mut leaf_docs = vec![Vec::new(); order.len()];
    for (k, &v) in order.iter().enumerate() {
        let mut ch = nodes[v].children.clone();
        ch.sort_by(|&x, &y| nodes[x].docs[0].cmp(&nodes[y].docs[0]));
        children[k] = ch.iter().map(|c| index[c]).collect();
        if ch.is_empty() {
            leaf_docs[k] = nodes[v].docs.clone();
        }
    }
    TopicTree::from_shape(time_index, &children, &leaf_docs, store)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LinkParams {
    pub link_threshold: f64,
}

impl Default for LinkParams {
    fn default() -> Self {
        Self { link_threshold: 0.3 }
    }
}

fn sparse_unit(v: &TermCounts) -> Vec<(u32, f64)> {
    let n = (v.iter().map(|(_, c)| (c as f64).powi(2)).sum::<f64>()).sqrt();
    v.iter().map(|(j, c)| (j, c as f64 / n)).collect()
}

fn sparse_dot(a: &[(u32, f64)], b: &[(u32, f64)]) -> f64 {
    let (mut i, mut k, mut s) = (0, 0, 0.0);
    while i < a.len() && k < b.len() {
        match a[i].0.cmp(&b[k].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => k += 1,
            std::cmp::Ordering::Equal => {
                s += a[i].1 * b[k].1;
                i += 1;
                k += 1;
            }
        }
    }
    s
}

/// Document pairs (top-1 neighbour at the next slice above the threshold) and
/// the topic pairs they induce, weighted by `count / sqrt(|D_r| |D_s|)`.
pub fn link_trees(a: &TopicTree, b: &TopicTree, store: &DocumentStore, params: &LinkParams) -> TreeMapping {
    let unit = |t: &TopicTree| -> Vec<(String, Vec<(u32, f64)>)> {
        t.root()
            .doc_ids
            .iter()
            .filter_map(|d| store.get(d).map(|doc| (d.clone(), sparse_unit(&doc.vector))))
            .collect()
    };
    let da = unit(a);
    let db = unit(b);
    let mut doc_pairs = Vec::new();
    for (ida, va) in &da {
        let mut best: Option<(f64, &String)> = None;
        for (idb, vb) in &db {
            let c = sparse_dot(va, vb);
            if best.map_or(true, |(bc, _)| c > bc) {
                best = Some((c, idb));
            }
        }
        if let Some((c, idb)) = best {
            if c >= params.link_threshold {
                doc_pairs.push(DocPair { from: ida.clone(), to: idb.clone(), cosine: c.clamp(0.0, 1.0) });
            }
        }
    }
    let mut counts: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for p in &doc_pairs {
        let (Some(la), Some(lb)) = (a.leaf_of_doc(&p.from), b.leaf_of_doc(&p.to)) else { continue };
        let ra: Vec<usize> = std::iter::once(la).chain(a.ancestors(la)).collect();
        let rb: Vec<usize> = std::iter::once(lb).chain(b.ancestors(lb)).collect();
        for &r in &ra {
            for &s in &rb {
                *counts.entry((r, s)).or_insert(0) += 1;
            }
        }
    }
    let mut topic_pairs: Vec<TopicPair> = counts
        .into_iter()
        .map(|((r, s), n)| {
            let nr = a.node(r).doc_ids.len() as f64;
            let ns = b.node(s).doc_ids.len() as f64;
            TopicPair {
                from: a.node(r).id.clone(),
                to: b.node(s).id.clone(),
                weight: (n as f64 / (nr * ns).sqrt()).min(1.0),
            }
        })
        .filter(|p| p.weight > 0.0)
        .collect();
    topic_pairs.sort_by(|x, y| x.from.cmp(&y.from).then_with(|| x.to.cmp(&y.to)));
    TreeMapping { from_time: a.time_index(), to_time: b.time_index(), topic_pairs, doc_pairs }
}

/// Output of the full ingest pipeline.
#[derive(Clone, Debug)]
pub struct Corpus {
    pub vocabulary: Vocabulary,
    pub store: DocumentStore,
    pub slices: Vec<CorpusSlice>,
    pub trees: Vec<TopicTree>,
    pub mappings: Vec<TreeMapping>,
}

/// Vectorizes, builds one tree per slice and links consecutive trees.
pub fn build_corpus(
    slices: &[CorpusSlice],
    vocab_params: &VocabParams,
    build: &BuildParams,
    link: &LinkParams,
    dcm_alpha: f64,
) -> Result<Corpus> {
    let (vocabulary, slices) = vectorize(slices, vocab_params)?;
    let mut store = DocumentStore::new(vocabulary.size());
    for d in slices.iter().flat_map(|s| &s.documents) {
        store.insert(d.clone())?;
    }
    let dcm = DcmParams::symmetric(vocabulary.size(), dcm_alpha)?;
    let mut trees = Vec::with_capacity(slices.len());
    for s in &slices {
        let docs: Vec<&Document> = s.documents.iter().collect();
        trees.push(build_tree(s.time_index, &docs, &store, &dcm, build)?);
    }
    let mappings = trees.windows(2).map(|w| link_trees(&w[0], &w[1], &store, link)).collect();
    Ok(Corpus { vocabulary, store, slices, trees, mappings })
}
