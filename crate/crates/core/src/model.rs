//! Core domain types: documents, topic trees, tree cuts, focus sets and the
//! mappings that link adjacent trees.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vecmath;

/// Norm tolerance for node centroids.
pub const CENTROID_NORM_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    News,
    Tweet,
}

/// Sparse term-count vector, sorted by term index with no zero entries.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "BTreeMap<u32, u32>", into = "BTreeMap<u32, u32>")]
pub struct TermCounts(Vec<(u32, u32)>);

impl TermCounts {
    pub fn new() -> Self {
        Self(Vec::new())
    }

    /// Builds from arbitrary `(index, count)` pairs; duplicates are summed and
    /// zero counts dropped.
    pub fn from_pairs<I: IntoIterator<Item = (u32, u32)>>(pairs: I) -> Self {
        let mut map = BTreeMap::new();
        for (j, c) in pairs {
            *map.entry(j).or_insert(0u32) += c;
        }
        map.into()
    }

    /// Builds from a dense count slice.
    pub fn from_dense(counts: &[u32]) -> Self {
        Self(
            counts
                .iter()
                .enumerate()
                .filter(|(_, &c)| c > 0)
                .map(|(j, &c)| (j as u32, c))
                .collect(),
        )
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.0.iter().copied()
    }

    pub fn get(&self, term: u32) -> u32 {
        self.0
            .binary_search_by_key(&term, |&(j, _)| j)
            .map(|p| self.0[p].1)
            .unwrap_or(0)
    }

    pub fn nnz(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.0.iter().map(|&(_, c)| c as u64).sum()
    }

    pub fn max_index(&self) -> Option<u32> {
        self.0.last().map(|&(j, _)| j)
    }

    pub fn as_slice(&self) -> &[(u32, u32)] {
        &self.0
    }
}

impl From<BTreeMap<u32, u32>> for TermCounts {
    fn from(map: BTreeMap<u32, u32>) -> Self {
        Self(map.into_iter().filter(|&(_, c)| c > 0).collect())
    }
}

impl From<TermCounts> for BTreeMap<u32, u32> {
    fn from(tc: TermCounts) -> Self {
        tc.0.into_iter().collect()
    }
}

/// A timestamped text item with its term-count vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub timestamp: i64,
    pub source: Source,
    pub title: String,
    pub text: String,
    #[serde(default)]
    pub vector: TermCounts,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    terms: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocabulary {
    pub fn new(terms: Vec<String>) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::EmptyVocabulary);
        }
        let mut index = HashMap::with_capacity(terms.len());
        for (j, t) in terms.iter().enumerate() {
            if index.insert(t.clone(), j as u32).is_some() {
                return Err(Error::BadParams(format!("duplicate vocabulary term {t:?}")));
            }
        }
        Ok(Self { terms, index })
    }

    pub fn size(&self) -> usize {
        self.terms.len()
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn term(&self, j: u32) -> Option<&str> {
        self.terms.get(j as usize).map(String::as_str)
    }

    pub fn lookup(&self, term: &str) -> Option<u32> {
        self.index.get(term).copied()
    }
}

impl Serialize for Vocabulary {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.terms.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Vocabulary {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let terms = Vec::<String>::deserialize(d)?;
        Vocabulary::new(terms).map_err(serde::de::Error::custom)
    }
}

/// Documents addressable by id, all sharing one vocabulary dimension.
#[derive(Clone, Debug, Default)]
pub struct DocumentStore {
    dim: usize,
    docs: Vec<Document>,
    index: HashMap<String, usize>,
}

impl DocumentStore {
    pub fn new(dim: usize) -> Self {
        Self { dim, docs: Vec::new(), index: HashMap::new() }
    }

    pub fn from_documents(dim: usize, docs: Vec<Document>) -> Result<Self> {
        let mut store = Self::new(dim);
        for d in docs {
            store.insert(d)?;
        }
        Ok(store)
    }

    pub fn insert(&mut self, doc: Document) -> Result<()> {
        if self.index.contains_key(&doc.id) {
            return Err(Error::DuplicateId(doc.id));
        }
        if let Some(j) = doc.vector.max_index() {
            if j as usize >= self.dim {
                return Err(Error::Domain(format!(
                    "document {} has term index {j} outside vocabulary of size {}",
                    doc.id, self.dim
                )));
            }
        }
        self.index.insert(doc.id.clone(), self.docs.len());
        self.docs.push(doc);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, id: &str) -> Option<&Document> {
        self.index.get(id).map(|&i| &self.docs[i])
    }

    pub fn require(&self, id: &str) -> Result<&Document> {
        self.get(id).ok_or_else(|| Error::UnknownDocument(id.to_string()))
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Document> {
        self.docs.iter()
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    /// L2-normalized sum of the documents' count vectors.
    pub fn centroid<'a, I>(&self, ids: I) -> Result<Vec<f64>>
    where
        I: IntoIterator<Item = &'a String>,
    {
        let mut acc = vec![0.0; self.dim];
        for id in ids {
            vecmath::add_counts(&mut acc, &self.require(id)?.vector);
        }
        vecmath::normalize(&mut acc);
        Ok(acc)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopicNode {
    pub id: String,
    pub children: Vec<String>,
    pub doc_ids: BTreeSet<String>,
    pub centroid: Vec<f64>,
    pub depth: usize,
}

/// Unvalidated tree contents. Convert with [`TopicTree::new`].
#[derive(Clone, Debug)]
pub struct TreeDraft {
    pub time_index: usize,
    pub root: String,
    pub nodes: Vec<TopicNode>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ViolationKind {
    DuplicateId,
    MissingRoot,
    UnknownChild,
    MultiParent,
    RootHasParent,
    Cycle,
    Unreachable,
    DocUnion,
    DocOverlap,
    Depth,
    CentroidNorm,
}

impl ViolationKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ViolationKind::DuplicateId => "duplicate-id",
            ViolationKind::MissingRoot => "missing-root",
            ViolationKind::UnknownChild => "unknown-child",
            ViolationKind::MultiParent => "multi-parent",
            ViolationKind::RootHasParent => "root-has-parent",
            ViolationKind::Cycle => "cycle",
            ViolationKind::Unreachable => "unreachable",
            ViolationKind::DocUnion => "doc-union",
            ViolationKind::DocOverlap => "doc-overlap",
            ViolationKind::Depth => "depth",
            ViolationKind::CentroidNorm => "centroid-norm",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    pub kind: ViolationKind,
    pub node: String,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has(&self, kind: ViolationKind) -> bool {
        self.violations.iter().any(|v| v.kind == kind)
    }

    fn push(&mut self, kind: ViolationKind, node: &str, detail: impl Into<String>) {
        self.violations.push(Violation { kind, node: node.to_string(), detail: detail.into() });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .violations
            .iter()
            .map(|v| format!("{} at {}: {}", v.kind.as_str(), v.node, v.detail))
            .collect();
        write!(f, "{}", parts.join("; "))
    }
}

/// Lists every violated structural invariant of a draft tree.
pub fn validate_tree(draft: &TreeDraft) -> ValidationReport {
    let mut report = ValidationReport::default();
    let mut by_id: HashMap<&str, &TopicNode> = HashMap::new();
    for n in &draft.nodes {
        if by_id.insert(n.id.as_str(), n).is_some() {
            report.push(ViolationKind::DuplicateId, &n.id, "node id appears more than once");
        }
    }
    let Some(root) = by_id.get(draft.root.as_str()).copied() else {
        report.push(ViolationKind::MissingRoot, &draft.root, "root id not among nodes");
        return report;
    };

    let mut parents: HashMap<&str, Vec<&str>> = HashMap::new();
    for n in &draft.nodes {
        for c in &n.children {
            if !by_id.contains_key(c.as_str()) {
                report.push(ViolationKind::UnknownChild, &n.id, format!("child {c} does not exist"));
            }
            parents.entry(c.as_str()).or_default().push(n.id.as_str());
        }
    }
    let mut multi: Vec<_> = parents.iter().filter(|(_, ps)| ps.len() > 1).collect();
    multi.sort();
    for (c, ps) in multi {
        report.push(ViolationKind::MultiParent, c, format!("listed as child of {}", ps.join(", ")));
    }
    if let Some(ps) = parents.get(root.id.as_str()) {
        report.push(ViolationKind::RootHasParent, &root.id, format!("root is a child of {}", ps.join(", ")));
    }

    // Iterative DFS with colouring for cycle detection; also checks depth.
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        Open,
        Done,
    }
    let mut mark: HashMap<&str, Mark> = HashMap::new();
    let mut stack: Vec<(&TopicNode, usize, usize)> = vec![(root, 0, 0)];
    mark.insert(root.id.as_str(), Mark::Open);
    if root.depth != 0 {
        report.push(ViolationKind::Depth, &root.id, format!("depth {} but is root", root.depth));
    }
    while let Some(top) = stack.last_mut() {
        let (node, next, depth) = (top.0, top.1, top.2);
        if next == node.children.len() {
            mark.insert(node.id.as_str(), Mark::Done);
            stack.pop();
            continue;
        }
        top.1 += 1;
        let cid = node.children[next].as_str();
        let Some(child) = by_id.get(cid).copied() else { continue };
        match mark.get(cid) {
            Some(Mark::Open) => {
                report.push(ViolationKind::Cycle, cid, format!("reached again from {}", node.id));
            }
            Some(Mark::Done) => {}
            None => {
                if child.depth != depth + 1 {
                    report.push(
                        ViolationKind::Depth,
                        cid,
                        format!("depth {} but expected {}", child.depth, depth + 1),
                    );
                }
                mark.insert(cid, Mark::Open);
                stack.push((child, 0, depth + 1));
            }
        }
    }
    for n in &draft.nodes {
        if !mark.contains_key(n.id.as_str()) {
            report.push(ViolationKind::Unreachable, &n.id, "not reachable from root");
        }
    }

    for n in &draft.nodes {
        if n.children.is_empty() {
            continue;
        }
        let mut union = BTreeSet::new();
        let mut overlap = false;
        for c in &n.children {
            if let Some(child) = by_id.get(c.as_str()) {
                for d in &child.doc_ids {
                    if !union.insert(d) {
                        overlap = true;
                    }
                }
            }
        }
        if overlap {
            report.push(ViolationKind::DocOverlap, &n.id, "children share documents");
        }
        if union.len() != n.doc_ids.len() || union.iter().any(|d| !n.doc_ids.contains(*d)) {
            report.push(ViolationKind::DocUnion, &n.id, "doc_ids differ from the union of children's doc_ids");
        }
    }

    for n in &draft.nodes {
        if !n.doc_ids.is_empty() {
            let norm = vecmath::norm(&n.centroid);
            if (norm - 1.0).abs() > CENTROID_NORM_TOL {
                report.push(ViolationKind::CentroidNorm, &n.id, format!("centroid norm {norm}"));
            }
        }
    }
    report
}

/// A validated multi-branch topic tree. Nodes are stored in preorder with
/// children in their stored order, so index 0 is always the root.
#[derive(Clone, Debug)]
pub struct TopicTree {
    time_index: usize,
    nodes: Vec<TopicNode>,
    index: HashMap<String, usize>,
    parent: Vec<Option<usize>>,
    children: Vec<Vec<usize>>,
    doc_leaf: HashMap<String, usize>,
}

impl TopicTree {
    pub fn new(draft: TreeDraft) -> Result<Self> {
        let report = validate_tree(&draft);
        if !report.is_valid() {
            return Err(Error::InvalidTree(report));
        }
        let TreeDraft { time_index, root, nodes } = draft;
        let mut by_id: HashMap<String, TopicNode> = nodes.into_iter().map(|n| (n.id.clone(), n)).collect();

        let mut ordered: Vec<TopicNode> = Vec::with_capacity(by_id.len());
        let mut parent = Vec::with_capacity(by_id.len());
        let mut stack: Vec<(String, Option<usize>)> = vec![(root, None)];
        while let Some((id, p)) = stack.pop() {
            let node = by_id.remove(&id).expect("validated");
            for c in node.children.iter().rev() {
                stack.push((c.clone(), Some(ordered.len())));
            }
            parent.push(p);
            ordered.push(node);
        }
        let index: HashMap<String, usize> = ordered.iter().enumerate().map(|(i, n)| (n.id.clone(), i)).collect();
        let children: Vec<Vec<usize>> =
            ordered.iter().map(|n| n.children.iter().map(|c| index[c]).collect()).collect();
        let mut doc_leaf = HashMap::new();
        for (i, n) in ordered.iter().enumerate() {
            if children[i].is_empty() {
                for d in &n.doc_ids {
                    doc_leaf.insert(d.clone(), i);
                }
            }
        }
        Ok(Self { time_index, nodes: ordered, index, parent, children, doc_leaf })
    }

    /// Builds a tree from its file representation, computing centroids and
    /// depths from `store`.
    pub fn from_file(file: &TreeFile, store: &DocumentStore) -> Result<Self> {
        let mut roots = file.nodes.iter().filter(|n| n.parent.is_none());
        let root = roots
            .next()
            .ok_or_else(|| Error::BadParams("tree file has no root".into()))?
            .id
            .clone();
        if let Some(extra) = roots.next() {
            return Err(Error::BadParams(format!("tree file has a second root {}", extra.id)));
        }
        let mut children: HashMap<&str, Vec<String>> = HashMap::new();
        for n in &file.nodes {
            if let Some(p) = &n.parent {
                children.entry(p.as_str()).or_default().push(n.id.clone());
            }
        }
        let parent_of: HashMap<&str, &str> =
            file.nodes.iter().filter_map(|n| n.parent.as_deref().map(|p| (n.id.as_str(), p))).collect();
        let mut nodes = Vec::with_capacity(file.nodes.len());
        for n in &file.nodes {
            let mut depth = 0;
            let mut cur = n.id.as_str();
            while let Some(p) = parent_of.get(cur) {
                depth += 1;
                cur = p;
                if depth > file.nodes.len() {
                    break;
                }
            }
            nodes.push(TopicNode {
                id: n.id.clone(),
                children: children.remove(n.id.as_str()).unwrap_or_default(),
                doc_ids: n.doc_ids.iter().cloned().collect(),
                centroid: store.centroid(&n.doc_ids)?,
                depth,
            });
        }
        Self::new(TreeDraft { time_index: file.time_index, root, nodes })
    }

    /// Builds a tree from a child-list shape rooted at index 0, assigning
    /// canonical path ids. `leaf_docs[i]` holds the documents of shape node
    /// `i` when it is a leaf; internal nodes take the union of their children.
    pub fn from_shape(
        time_index: usize,
        children: &[Vec<usize>],
        leaf_docs: &[Vec<String>],
        store: &DocumentStore,
    ) -> Result<Self> {
        let n = children.len();
        let mut ids = vec![String::new(); n];
        let mut order = Vec::with_capacity(n);
        let mut stack: Vec<(usize, Vec<usize>)> = vec![(0, Vec::new())];
        while let Some((v, path)) = stack.pop() {
            ids[v] = canonical_id(time_index, &path);
            order.push(v);
            for (k, &c) in children[v].iter().enumerate().rev() {
                let mut p = path.clone();
                p.push(k);
                stack.push((c, p));
            }
        }
        if order.len() != n {
            return Err(Error::BadParams("shape is not a single rooted tree".into()));
        }
        let mut docs: Vec<Vec<String>> = vec![Vec::new(); n];
        for &v in order.iter().rev() {
            if children[v].is_empty() {
                docs[v] = leaf_docs.get(v).cloned().unwrap_or_default();
            } else {
                let mut all: Vec<String> = children[v].iter().flat_map(|&c| docs[c].iter().cloned()).collect();
                all.sort();
                docs[v] = all;
            }
        }
        let mut parent = vec![None; n];
        for (v, cs) in children.iter().enumerate() {
            for &c in cs {
                parent[c] = Some(v);
            }
        }
        let file = TreeFile {
            time_index,
            vocabulary_ref: String::new(),
            nodes: order
                .iter()
                .map(|&v| NodeRecord {
                    id: ids[v].clone(),
                    parent: parent[v].map(|p| ids[p].clone()),
                    doc_ids: std::mem::take(&mut docs[v]),
                })
                .collect(),
        };
        Self::from_file(&file, store)
    }

    pub fn to_file(&self, vocabulary_ref: &str) -> TreeFile {
        TreeFile {
            time_index: self.time_index,
            vocabulary_ref: vocabulary_ref.to_string(),
            nodes: self
                .nodes
                .iter()
                .enumerate()
                .map(|(i, n)| NodeRecord {
                    id: n.id.clone(),
                    parent: self.parent[i].map(|p| self.nodes[p].id.clone()),
                    doc_ids: n.doc_ids.iter().cloned().collect(),
                })
                .collect(),
        }
    }

    pub fn to_draft(&self) -> TreeDraft {
        TreeDraft { time_index: self.time_index, root: self.nodes[0].id.clone(), nodes: self.nodes.clone() }
    }

    pub fn time_index(&self) -> usize {
        self.time_index
    }

    pub fn root(&self) -> &TopicNode {
        &self.nodes[0]
    }

    pub fn doc_total(&self) -> usize {
        self.nodes[0].doc_ids.len()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn nodes(&self) -> &[TopicNode] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> &TopicNode {
        &self.nodes[i]
    }

    pub fn get(&self, id: &str) -> Option<&TopicNode> {
        self.index.get(id).map(|&i| &self.nodes[i])
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn require_index(&self, id: &str) -> Result<usize> {
        self.index_of(id).ok_or_else(|| Error::UnknownNode(id.to_string()))
    }

    pub fn parent(&self, i: usize) -> Option<usize> {
        self.parent[i]
    }

    pub fn children(&self, i: usize) -> &[usize] {
        &self.children[i]
    }

    pub fn is_leaf(&self, i: usize) -> bool {
        self.children[i].is_empty()
    }

    pub fn leaf_of_doc(&self, doc: &str) -> Option<usize> {
        self.doc_leaf.get(doc).copied()
    }

    pub fn internal_count(&self) -> usize {
        self.children.iter().filter(|c| !c.is_empty()).count()
    }

    pub fn dim(&self) -> usize {
        self.nodes[0].centroid.len()
    }

    /// Ancestors of `i` from its parent up to the root.
    pub fn ancestors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        std::iter::successors(self.parent[i], move |&p| self.parent[p])
    }

    /// `true` when `a` is a strict ancestor of `b`.
    pub fn is_ancestor(&self, a: usize, b: usize) -> bool {
        self.ancestors(b).any(|x| x == a)
    }

    /// Number of edges on the path between two nodes.
    pub fn path_distance(&self, a: usize, b: usize) -> usize {
        let da = self.nodes[a].depth;
        let db = self.nodes[b].depth;
        let (mut x, mut y) = (a, b);
        let (mut dx, mut dy) = (da, db);
        while dx > dy {
            x = self.parent[x].expect("depth > 0");
            dx -= 1;
        }
        while dy > dx {
            y = self.parent[y].expect("depth > 0");
            dy -= 1;
        }
        while x != y {
            x = self.parent[x].expect("common ancestor");
            y = self.parent[y].expect("common ancestor");
            dx -= 1;
        }
        da + db - 2 * dx
    }

    pub fn validate(&self) -> ValidationReport {
        validate_tree(&self.to_draft())
    }
}

/// Canonical node id `t{time}:r` followed by `.{child position}` per level.
pub fn canonical_id(time_index: usize, path: &[usize]) -> String {
    let mut id = format!("t{time_index}:r");
    for k in path {
        id.push('.');
        id.push_str(&k.to_string());
    }
    id
}

/// On-disk node record: `{id, parent, doc_ids}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub id: String,
    pub parent: Option<String>,
    pub doc_ids: Vec<String>,
}

/// On-disk tree: `{time_index, vocabulary_ref, nodes}`. Children order is the
/// order in which nodes appear in `nodes`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeFile {
    pub time_index: usize,
    pub vocabulary_ref: String,
    pub nodes: Vec<NodeRecord>,
}

/// A valid tree cut and its derived 0/1 labels.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeCut {
    pub time_index: usize,
    pub cut_nodes: BTreeSet<String>,
    pub labels: BTreeMap<String, u8>,
}

impl TreeCut {
    /// Builds from node indices already known to form a valid cut.
    pub fn from_indices(tree: &TopicTree, indices: &[usize]) -> Self {
        let labels = label_vector(tree, indices);
        Self {
            time_index: tree.time_index(),
            cut_nodes: indices.iter().map(|&i| tree.node(i).id.clone()).collect(),
            labels: tree.nodes().iter().zip(&labels).map(|(n, &l)| (n.id.clone(), l)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.cut_nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cut_nodes.is_empty()
    }

    pub fn label(&self, id: &str) -> Option<u8> {
        self.labels.get(id).copied()
    }

    /// Cut node indices in ascending (preorder) order.
    pub fn indices(&self, tree: &TopicTree) -> Result<Vec<usize>> {
        let mut v = self.cut_nodes.iter().map(|id| tree.require_index(id)).collect::<Result<Vec<_>>>()?;
        v.sort_unstable();
        Ok(v)
    }

    /// Whether the cut contains `id`.
    pub fn contains(&self, id: &str) -> bool {
        self.cut_nodes.contains(id)
    }
}

/// Labels per node index: 1 for strict ancestors of cut nodes, else 0.
pub fn label_vector(tree: &TopicTree, cut: &[usize]) -> Vec<u8> {
    let mut labels = vec![0u8; tree.len()];
    for &c in cut {
        for a in tree.ancestors(c) {
            if labels[a] == 1 {
                break;
            }
            labels[a] = 1;
        }
    }
    labels
}

/// Checks that every root-leaf path contains exactly one of `cut`.
pub fn check_cut(tree: &TopicTree, cut: &[usize]) -> Result<()> {
    let mut in_cut = vec![false; tree.len()];
    for &c in cut {
        if c >= tree.len() {
            return Err(Error::InvalidCut(format!("node index {c} out of range")));
        }
        in_cut[c] = true;
    }
    for leaf in (0..tree.len()).filter(|&i| tree.is_leaf(i)) {
        let hits = std::iter::once(leaf).chain(tree.ancestors(leaf)).filter(|&v| in_cut[v]).count();
        if hits != 1 {
            return Err(Error::InvalidCut(format!(
                "path to leaf {} contains {hits} cut nodes",
                tree.node(leaf).id
            )));
        }
    }
    Ok(())
}

pub fn make_cut(tree: &TopicTree, cut_nodes: &BTreeSet<String>) -> Result<TreeCut> {
    let mut idx = Vec::with_capacity(cut_nodes.len());
    for id in cut_nodes {
        idx.push(tree.index_of(id).ok_or_else(|| Error::InvalidCut(format!("{id} is not a node of the tree")))?);
    }
    idx.sort_unstable();
    check_cut(tree, &idx)?;
    Ok(TreeCut::from_indices(tree, &idx))
}

/// Number of valid cuts, saturating at `u128::MAX`.
pub fn count_cuts(tree: &TopicTree) -> u128 {
    let mut counts = vec![1u128; tree.len()];
    // Preorder: children always come after parents, so walk backwards.
    for i in (0..tree.len()).rev() {
        if !tree.is_leaf(i) {
            let prod = tree.children(i).iter().fold(1u128, |acc, &c| acc.saturating_mul(counts[c]));
            counts[i] = prod.saturating_add(1);
        }
    }
    counts[0]
}

/// Lazy depth-first enumeration of every cut as sorted node indices.
///
/// Each node is either "cut here" or "expanded"; advancing works like an
/// odometer over the children of expanded nodes, last child fastest.
pub struct CutIter<'a> {
    tree: &'a TopicTree,
    expanded: Vec<bool>,
    started: bool,
    done: bool,
}

impl<'a> CutIter<'a> {
    fn advance(&mut self, v: usize) -> bool {
        if !self.expanded[v] {
            if self.tree.is_leaf(v) {
                return false;
            }
            self.expanded[v] = true;
            for &c in self.tree.children(v) {
                self.expanded[c] = false;
            }
            return true;
        }
        let kids = self.tree.children(v);
        for k in (0..kids.len()).rev() {
            if self.advance(kids[k]) {
                for &c in &kids[k + 1..] {
                    self.expanded[c] = false;
                }
                return true;
            }
        }
        false
    }

    fn current(&self) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![0usize];
        while let Some(v) = stack.pop() {
            if self.expanded[v] {
                stack.extend(self.tree.children(v).iter().rev());
            } else {
                out.push(v);
            }
        }
        out.sort_unstable();
        out
    }
}

impl Iterator for CutIter<'_> {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.done {
            return None;
        }
        if self.started && !self.advance(0) {
            self.done = true;
            return None;
        }
        self.started = true;
        Some(self.current())
    }
}

pub fn enumerate_cut_indices(tree: &TopicTree, limit: u128) -> Result<CutIter<'_>> {
    let count = count_cuts(tree);
    if count > limit {
        return Err(Error::LimitExceeded { count, limit });
    }
    Ok(CutIter { tree, expanded: vec![false; tree.len()], started: false, done: false })
}

pub fn enumerate_cuts(tree: &TopicTree, limit: u128) -> Result<impl Iterator<Item = TreeCut> + '_> {
    Ok(enumerate_cut_indices(tree, limit)?.map(move |c| TreeCut::from_indices(tree, &c)))
}

/// Reference to a node in a specific time slice.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeRef {
    pub time_index: usize,
    pub node_id: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Focus {
    pub node: NodeRef,
    pub doc_ids: BTreeSet<String>,
}

/// The user's focus nodes with their document sets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FocusSet {
    foci: Vec<Focus>,
}

impl FocusSet {
    pub fn new(foci: Vec<Focus>) -> Result<Self> {
        if foci.is_empty() {
            return Err(Error::BadParams("focus set must contain at least one node".into()));
        }
        if let Some(f) = foci.iter().find(|f| f.doc_ids.is_empty()) {
            return Err(Error::BadParams(format!("focus {} has no documents", f.node.node_id)));
        }
        Ok(Self { foci })
    }

    /// Builds foci from node references resolved against `trees`.
    pub fn from_refs(refs: &[NodeRef], trees: &[TopicTree]) -> Result<Self> {
        let mut foci = Vec::with_capacity(refs.len());
        for r in refs {
            let tree = trees
                .iter()
                .find(|t| t.time_index() == r.time_index)
                .ok_or_else(|| Error::UnknownNode(format!("t{}/{}", r.time_index, r.node_id)))?;
            let node = tree.get(&r.node_id).ok_or_else(|| Error::UnknownNode(r.node_id.clone()))?;
            foci.push(Focus { node: r.clone(), doc_ids: node.doc_ids.clone() });
        }
        Self::new(foci)
    }

    pub fn foci(&self) -> &[Focus] {
        &self.foci
    }

    pub fn m(&self) -> usize {
        self.foci.len()
    }
}

/// Weighted correspondence between a node at `from_time` and one at `to_time`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "(String, String, f64)", into = "(String, String, f64)")]
pub struct TopicPair {
    pub from: String,
    pub to: String,
    pub weight: f64,
}

impl From<(String, String, f64)> for TopicPair {
    fn from((from, to, weight): (String, String, f64)) -> Self {
        Self { from, to, weight }
    }
}

impl From<TopicPair> for (String, String, f64) {
    fn from(p: TopicPair) -> Self {
        (p.from, p.to, p.weight)
    }
}

/// A document at `from_time` paired with its most similar document at `to_time`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "(String, String, f64)", into = "(String, String, f64)")]
pub struct DocPair {
    pub from: String,
    pub to: String,
    pub cosine: f64,
}

impl From<(String, String, f64)> for DocPair {
    fn from((from, to, cosine): (String, String, f64)) -> Self {
        Self { from, to, cosine }
    }
}

impl From<DocPair> for (String, String, f64) {
    fn from(p: DocPair) -> Self {
        (p.from, p.to, p.cosine)
    }
}

/// Topic and document pairs between consecutive trees.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeMapping {
    pub from_time: usize,
    pub to_time: usize,
    pub topic_pairs: Vec<TopicPair>,
    pub doc_pairs: Vec<DocPair>,
}

impl TreeMapping {
    pub fn empty(from_time: usize) -> Self {
        Self { from_time, to_time: from_time + 1, topic_pairs: Vec::new(), doc_pairs: Vec::new() }
    }

    /// Checks the consecutive-time and `[0, 1]` range invariants.
    pub fn check(&self) -> Result<()> {
        if self.to_time != self.from_time + 1 {
            return Err(Error::BadParams(format!(
                "mapping times {} -> {} are not consecutive",
                self.from_time, self.to_time
            )));
        }
        let bad_w = self.topic_pairs.iter().find(|p| !(0.0..=1.0).contains(&p.weight));
        if let Some(p) = bad_w {
            return Err(Error::BadParams(format!("topic pair weight {} outside [0,1]", p.weight)));
        }
        let bad_c = self.doc_pairs.iter().find(|p| !(0.0..=1.0).contains(&p.cosine));
        if let Some(p) = bad_c {
            return Err(Error::BadParams(format!("doc pair cosine {} outside [0,1]", p.cosine)));
        }
        Ok(())
    }

    /// Identity mapping between two copies of the same tree shape.
    pub fn identity(from: &TopicTree, to: &TopicTree) -> Self {
        let topic_pairs = from
            .nodes()
            .iter()
            .zip(to.nodes())
            .map(|(a, b)| TopicPair { from: a.id.clone(), to: b.id.clone(), weight: 1.0 })
            .collect();
        Self { from_time: from.time_index(), to_time: to.time_index(), topic_pairs, doc_pairs: Vec::new() }
    }
}
