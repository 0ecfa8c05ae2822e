//! Seeded synthetic data: random topic trees, tree sequences, drifting text
//! corpora and tree replication for scaling runs.

use std::collections::BTreeSet;

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::Rng;

use crate::ingest::{self, LinkParams, RawDocument};
use crate::model::{
    DocPair, Document, DocumentStore, Source, TermCounts, TopicNode, TopicPair, TopicTree, TreeDraft, TreeMapping,
};

#[derive(Clone, Debug)]
pub struct TreeShape {
    pub nodes: usize,
    pub max_children: usize,
    pub dim: usize,
    pub docs: usize,
    pub doc_len: (usize, usize),
    pub time_index: usize,
    /// Weight of fresh noise when deriving a child topic from its parent.
    pub mix: f64,
}

impl Default for TreeShape {
    fn default() -> Self {
        Self { nodes: 15, max_children: 3, dim: 20, docs: 50, doc_len: (8, 24), time_index: 0, mix: 0.6 }
    }
}

/// Random child lists rooted at 0 with at most `nodes` nodes. Leaves are
/// split into two children, internal nodes gain one more.
pub fn random_shape<R: Rng>(rng: &mut R, nodes: usize, max_children: usize) -> Vec<Vec<usize>> {
    let mut children: Vec<Vec<usize>> = vec![Vec::new()];
    let max_children = max_children.max(2);
    let mut stalls = 0;
    while children.len() < nodes && stalls < 64 {
        let v = rng.gen_range(0..children.len());
        let add = if children[v].is_empty() { 2 } else { 1 };
        if children[v].len() + add > max_children || children.len() + add > nodes {
            stalls += 1;
            continue;
        }
        for _ in 0..add {
            let next = children.len();
            children[v].push(next);
            children.push(Vec::new());
        }
    }
    children
}

/// Random child lists with exactly `internal` internal nodes.
pub fn shape_with_internal<R: Rng>(rng: &mut R, internal: usize, max_children: usize) -> Vec<Vec<usize>> {
    let mut children: Vec<Vec<usize>> = vec![Vec::new()];
    let max_children = max_children.max(2);
    let mut count = 0;
    let mut leaves = vec![0usize];
    while count < internal.max(1) {
        let li = rng.gen_range(0..leaves.len());
        let v = leaves.swap_remove(li);
        let k = rng.gen_range(2..=max_children);
        for _ in 0..k {
            let c = children.len();
            children[v].push(c);
            children.push(Vec::new());
            leaves.push(c);
        }
        count += 1;
    }
    if internal == 0 {
        return vec![Vec::new()];
    }
    children
}

fn random_topic<R: Rng>(rng: &mut R, dim: usize) -> Vec<f64> {
    let mut w: Vec<f64> = (0..dim).map(|_| rng.gen::<f64>().powi(6)).collect();
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= s);
    w
}

fn mix_topic<R: Rng>(rng: &mut R, base: &[f64], mix: f64) -> Vec<f64> {
    let noise = random_topic(rng, base.len());
    base.iter().zip(&noise).map(|(a, b)| (1.0 - mix) * a + mix * b).collect()
}

fn sample_counts<R: Rng>(rng: &mut R, topic: &[f64], len: usize) -> TermCounts {
    let dist = WeightedIndex::new(topic).expect("positive topic weights");
    TermCounts::from_pairs((0..len.max(1)).map(|_| (dist.sample(rng) as u32, 1)))
}

/// Populates a shape with topic-perturbed documents and builds the tree.
/// Documents are inserted into `store` with ids `{prefix}{k}`.
pub fn populate<R: Rng>(
    rng: &mut R,
    children: &[Vec<usize>],
    shape: &TreeShape,
    base_topics: &[Vec<f64>],
    prefix: &str,
    store: &mut DocumentStore,
) -> TopicTree {
    let n = children.len();
    let mut topics = vec![Vec::new(); n];
    topics[0] = match base_topics.choose(rng) {
        Some(b) => mix_topic(rng, b, 0.2),
        None => random_topic(rng, shape.dim),
    };
    for v in 0..n {
        for &c in &children[v] {
            let base = match base_topics.choose(rng) {
                Some(b) => {
                    let parent = topics[v].clone();
                    parent.iter().zip(b).map(|(p, q)| 0.5 * p + 0.5 * q).collect()
                }
                None => topics[v].clone(),
            };
            topics[c] = mix_topic(rng, &base, shape.mix);
        }
    }
    let leaves: Vec<usize> = (0..n).filter(|&v| children[v].is_empty()).collect();
    let total = shape.docs.max(leaves.len());
    let mut leaf_docs = vec![Vec::new(); n];
    for k in 0..total {
        let leaf = if k < leaves.len() { leaves[k] } else { leaves[rng.gen_range(0..leaves.len())] };
        let id = format!("{prefix}{k}");
        let len = rng.gen_range(shape.doc_len.0..=shape.doc_len.1.max(shape.doc_len.0));
        store
            .insert(Document {
                id: id.clone(),
                timestamp: shape.time_index as i64,
                source: if k % 3 == 0 { Source::News } else { Source::Tweet },
                title: String::new(),
                text: String::new(),
                vector: sample_counts(rng, &topics[leaf], len),
            })
            .expect("fresh synthetic id");
        leaf_docs[leaf].push(id);
    }
    TopicTree::from_shape(shape.time_index, children, &leaf_docs, store).expect("synthetic tree is valid")
}

/// A random tree of at most `shape.nodes` nodes over its own store.
pub fn random_tree<R: Rng>(rng: &mut R, shape: &TreeShape) -> (TopicTree, DocumentStore) {
    let mut store = DocumentStore::new(shape.dim);
    let children = random_shape(rng, shape.nodes, shape.max_children);
    let tree = populate(rng, &children, shape, &[], &format!("d{}_", shape.time_index), &mut store);
    (tree, store)
}

/// Consecutive trees sharing one store, linked by document similarity.
#[derive(Clone, Debug)]
pub struct Sequence {
    pub store: DocumentStore,
    pub trees: Vec<TopicTree>,
    pub mappings: Vec<TreeMapping>,
}

pub fn random_sequence<R: Rng>(rng: &mut R, len: usize, shape: &TreeShape, link: &LinkParams) -> Sequence {
    let mut store = DocumentStore::new(shape.dim);
    let base: Vec<Vec<f64>> = (0..4).map(|_| random_topic(rng, shape.dim)).collect();
    let mut trees = Vec::with_capacity(len);
    for t in 0..len {
        let children = random_shape(rng, shape.nodes, shape.max_children);
        let s = TreeShape { time_index: t, ..shape.clone() };
        trees.push(populate(rng, &children, &s, &base, &format!("d{t}_"), &mut store));
    }
    let mappings = trees.windows(2).map(|w| ingest::link_trees(&w[0], &w[1], &store, link)).collect();
    Sequence { store, trees, mappings }
}

/// Parameters of a drifting multi-topic text corpus.
#[derive(Clone, Debug)]
pub struct DriftParams {
    pub slices: usize,
    pub topics: usize,
    pub subtopics: usize,
    pub docs_per_subtopic: usize,
    pub shared_words: usize,
    pub sub_words: usize,
    /// Subtopic words replaced by fresh ones at every slice.
    pub drift_words: usize,
    pub doc_len: (usize, usize),
    pub start: i64,
    pub window_secs: i64,
}

impl Default for DriftParams {
    fn default() -> Self {
        Self {
            slices: 5,
            topics: 4,
            subtopics: 3,
            docs_per_subtopic: 8,
            shared_words: 10,
            sub_words: 8,
            drift_words: 2,
            doc_len: (10, 20),
            start: 1_600_000_000,
            window_secs: 7 * 86_400,
        }
    }
}

pub fn term(j: usize) -> String {
    format!("term{j:04}")
}

const FILLER: [&str; 6] = ["the", "and", "of", "to", "is", "a"];

/// Documents whose topics keep a shared core vocabulary while subtopic
/// vocabularies drift slice by slice.
pub fn drifting_corpus<R: Rng>(rng: &mut R, p: &DriftParams) -> Vec<RawDocument> {
    let mut next_word = 0usize;
    let mut fresh = |n: usize| -> Vec<usize> {
        let v: Vec<usize> = (next_word..next_word + n).collect();
        next_word += n;
        v
    };
    let shared: Vec<Vec<usize>> = (0..p.topics).map(|_| fresh(p.shared_words)).collect();
    let mut subs: Vec<Vec<Vec<usize>>> =
        (0..p.topics).map(|_| (0..p.subtopics).map(|_| fresh(p.sub_words)).collect()).collect();
    let mut docs = Vec::new();
    for t in 0..p.slices {
        if t > 0 {
            for topic in subs.iter_mut() {
                for words in topic.iter_mut() {
                    let k = p.drift_words.min(words.len());
                    let new = fresh(k);
                    words.drain(0..k);
                    words.extend(new);
                }
            }
        }
        for k in 0..p.topics {
            for q in 0..p.subtopics {
                for i in 0..p.docs_per_subtopic {
                    let len = rng.gen_range(p.doc_len.0..=p.doc_len.1);
                    let words: Vec<String> = (0..len)
                        .map(|_| {
                            let r: f64 = rng.gen();
                            if r < 0.45 {
                                term(*shared[k].choose(rng).expect("shared words"))
                            } else if r < 0.9 {
                                term(*subs[k][q].choose(rng).expect("subtopic words"))
                            } else {
                                FILLER.choose(rng).expect("filler").to_string()
                            }
                        })
                        .collect();
                    let offset = rng.gen_range(0..p.window_secs - 1);
                    docs.push(RawDocument {
                        id: format!("s{t}-k{k}-q{q}-{i}"),
                        timestamp: p.start + t as i64 * p.window_secs + offset,
                        source: if i % 4 == 0 { Source::News } else { Source::Tweet },
                        title: words.iter().take(3).cloned().collect::<Vec<_>>().join(" "),
                        text: words.join(" "),
                    });
                }
            }
        }
    }
    docs.shuffle(rng);
    docs.sort_by_key(|d| d.timestamp);
    docs
}

fn copy_id(id: &str, k: usize) -> String {
    if k == 0 {
        id.to_string()
    } else {
        format!("{id}#{k}")
    }
}

/// Merges `copies` copies of `tree` under the first copy's root, so the
/// internal node count is exactly `copies` times the original. Returns the
/// tree and the copied documents (copies 1..).
pub fn replicate_tree(tree: &TopicTree, store: &DocumentStore, copies: usize) -> (TopicTree, Vec<Document>) {
    let copies = copies.max(1);
    let mut docs = Vec::new();
    for k in 1..copies {
        for d in &tree.root().doc_ids {
            let mut doc = store.get(d).expect("tree documents are stored").clone();
            doc.id = copy_id(d, k);
            docs.push(doc);
        }
    }
    let root_id = tree.root().id.clone();
    let mut nodes = Vec::with_capacity(tree.len() * copies);
    for k in 0..copies {
        for (i, n) in tree.nodes().iter().enumerate() {
            if k == 0 && i == 0 {
                continue;
            }
            nodes.push(TopicNode {
                id: copy_id(&n.id, k),
                children: n.children.iter().map(|c| copy_id(c, k)).collect(),
                doc_ids: n.doc_ids.iter().map(|d| copy_id(d, k)).collect(),
                centroid: n.centroid.clone(),
                depth: n.depth + usize::from(k > 0),
            });
        }
    }
    let src_root = tree.root();
    let mut root_children = src_root.children.clone();
    let mut root_docs: BTreeSet<String> = src_root.doc_ids.clone();
    for k in 1..copies {
        root_children.push(copy_id(&root_id, k));
        root_docs.extend(src_root.doc_ids.iter().map(|d| copy_id(d, k)));
    }
    nodes.insert(
        0,
        TopicNode {
            id: root_id.clone(),
            children: root_children,
            doc_ids: root_docs,
            centroid: src_root.centroid.clone(),
            depth: 0,
        },
    );
    let draft = TreeDraft { time_index: tree.time_index(), root: root_id, nodes };
    (TopicTree::new(draft).expect("replicated tree is valid"), docs)
}

/// Copies every pair once per tree copy, matching [`replicate_tree`] ids.
pub fn replicate_mapping(mapping: &TreeMapping, copies: usize) -> TreeMapping {
    let copies = copies.max(1);
    let mut out = TreeMapping::empty(mapping.from_time);
    out.to_time = mapping.to_time;
    for k in 0..copies {
        out.topic_pairs.extend(mapping.topic_pairs.iter().map(|p| TopicPair {
            from: copy_id(&p.from, k),
            to: copy_id(&p.to, k),
            weight: p.weight,
        }));
        out.doc_pairs.extend(mapping.doc_pairs.iter().map(|p| DocPair {
            from: copy_id(&p.from, k),
            to: copy_id(&p.to, k),
            cosine: p.cosine,
        }));
    }
    out
}
