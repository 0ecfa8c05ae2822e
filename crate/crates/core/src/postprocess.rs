//! Display grouping of sibling cut nodes by adaptive-window mean-shift, and
//! automatic focus selection.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DocumentStore, FocusSet, TopicTree, TreeCut};
use crate::vecmath::{cosine_distance, dot, unit_mean};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PostParams {
    pub gamma: f64,
    /// Largest window, in cosine-distance units.
    pub w_max: f64,
    pub meanshift_iters: usize,
    pub converge_tol: f64,
    pub focus_bandwidth: f64,
}

impl Default for PostParams {
    fn default() -> Self {
        Self { gamma: 0.6, w_max: 0.8, meanshift_iters: 50, converge_tol: 1e-4, focus_bandwidth: 0.5 }
    }
}

impl PostParams {
    pub fn check(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::BadParams(format!("gamma must lie in (0, 1), got {}", self.gamma)));
        }
        if !(self.w_max > 0.0) {
            return Err(Error::BadParams(format!("w_max must be > 0, got {}", self.w_max)));
        }
        if !(self.focus_bandwidth >= 0.0) {
            return Err(Error::BadParams(format!("focus_bandwidth must be >= 0, got {}", self.focus_bandwidth)));
        }
        Ok(())
    }
}

/// Sibling cut nodes shown as one stripe. The id is the smallest member id.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DisplayGroup {
    pub id: String,
    pub member_cut_nodes: BTreeSet<String>,
    /// Unit mean of the member centroids.
    pub center: Vec<f64>,
    pub carried_from: Option<String>,
}

/// Serialized form appended to cut output.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupRecord {
    pub members: Vec<String>,
    pub carried_from: Option<String>,
}

impl From<&DisplayGroup> for GroupRecord {
    fn from(g: &DisplayGroup) -> Self {
        Self { members: g.member_cut_nodes.iter().cloned().collect(), carried_from: g.carried_from.clone() }
    }
}

/// Maximum cosine similarity of `v` to any focus centroid; 0 without foci.
pub fn focus_similarity(v: &[f64], focus: &[Vec<f64>]) -> f64 {
    focus.iter().map(|f| dot(v, f)).fold(0.0, f64::max)
}

/// Window from a focus similarity: 0 at or above `gamma`, growing linearly
/// to `w_max` at similarity 0.
pub fn window_for_similarity(s: f64, params: &PostParams) -> f64 {
    if s >= params.gamma {
        0.0
    } else {
        (params.gamma - s) * params.w_max / params.gamma
    }
}

/// Adaptive window of a center given by its documents.
pub fn window_size(center_docs: &BTreeSet<String>, focus_docs: &[BTreeSet<String>], store: &DocumentStore, params: &PostParams) -> Result<f64> {
    let c = store.centroid(center_docs)?;
    let f = focus_docs.iter().map(|d| store.centroid(d)).collect::<Result<Vec<_>>>()?;
    Ok(window_for_similarity(focus_similarity(&c, &f), params))
}

/// Unit centroid of each focus document set.
pub fn focus_centroids(foci: &FocusSet, store: &DocumentStore) -> Result<Vec<Vec<f64>>> {
    foci.foci().iter().map(|f| store.centroid(&f.doc_ids)).collect()
}

struct Mode {
    center: Vec<f64>,
    window: f64,
    support: usize,
    /// Position of the seed in the seed list.
    seed: usize,
}

fn within<'a>(points: &'a [&'a [f64]], c: &'a [f64], w: f64) -> impl Iterator<Item = &'a [f64]> + 'a {
    points.iter().copied().filter(move |p| cosine_distance(p, c) <= w + 1e-12)
}

/// Flat-kernel mean-shift from each seed. Returns the surviving modes in
/// priority order (support, then seed order); a mode is dropped when it lies
/// within the window of a higher-priority mode.
fn mean_shift(
    points: &[&[f64]],
    seeds: &[Vec<f64>],
    window: &dyn Fn(&[f64]) -> f64,
    iters: usize,
    tol: f64,
) -> Vec<Mode> {
    let dim = points.first().map_or(0, |p| p.len());
    let mut modes = Vec::new();
    for (s, seed) in seeds.iter().enumerate() {
        let mut c = seed.clone();
        let mut alive = true;
        for _ in 0..iters.max(1) {
            let w = window(&c);
            let inside: Vec<&[f64]> = within(points, &c, w).collect();
            if inside.is_empty() {
                alive = false;
                break;
            }
            let next = unit_mean(inside, dim);
            let moved = cosine_distance(&next, &c);
            c = next;
            if moved < tol {
                break;
            }
        }
        if !alive {
            continue;
        }
        let w = window(&c);
        let support = within(points, &c, w).count();
        if support > 0 {
            modes.push(Mode { center: c, window: w, support, seed: s });
        }
    }
    modes.sort_by(|a, b| b.support.cmp(&a.support).then(a.seed.cmp(&b.seed)));
    let mut kept: Vec<Mode> = Vec::new();
    let mut merged_seeds: Vec<Vec<usize>> = Vec::new();
    for m in modes {
        match kept.iter().position(|k| cosine_distance(&k.center, &m.center) <= k.window.min(m.window) + 1e-12) {
            Some(i) => merged_seeds[i].push(m.seed),
            None => {
                merged_seeds.push(vec![m.seed]);
                kept.push(m);
            }
        }
    }
    // Report the earliest seed that reached each mode.
    for (k, seeds) in kept.iter_mut().zip(merged_seeds) {
        k.seed = seeds.into_iter().min().expect("nonempty");
    }
    kept
}

/// Index of the nearest mode; ties go to the earlier mode.
fn nearest_mode(p: &[f64], modes: &[Mode]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, m) in modes.iter().enumerate() {
        let d = cosine_distance(p, &m.center);
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

/// Groups the cut nodes of each sibling set. Nodes whose focus similarity
/// reaches `gamma` stay alone; the rest are clustered by mean-shift seeded
/// with the previous step's group centers followed by the nodes themselves.
pub fn group_cut_nodes(
    tree: &TopicTree,
    cut: &TreeCut,
    focus: &[Vec<f64>],
    prev_groups: Option<&[DisplayGroup]>,
    params: &PostParams,
) -> Result<Vec<DisplayGroup>> {
    params.check()?;
    let indices = cut.indices(tree)?;
    let dim = tree.dim();
    let window = |c: &[f64]| window_for_similarity(focus_similarity(c, focus), params);
    let prev = prev_groups.unwrap_or(&[]);

    // Sibling sets keyed by parent; the root alone forms its own set.
    let mut sets: Vec<(Option<usize>, Vec<usize>)> = Vec::new();
    for &v in &indices {
        let p = tree.parent(v);
        match sets.iter_mut().find(|(q, _)| *q == p) {
            Some((_, members)) => members.push(v),
            None => sets.push((p, vec![v])),
        }
    }

    let mut groups = Vec::new();
    let make = |members: Vec<usize>, carried: Option<String>| {
        let ids: BTreeSet<String> = members.iter().map(|&v| tree.node(v).id.clone()).collect();
        let center = unit_mean(members.iter().map(|&v| tree.node(v).centroid.as_slice()), dim);
        DisplayGroup { id: ids.iter().next().expect("nonempty").clone(), member_cut_nodes: ids, center, carried_from: carried }
    };
    for (_, mut members) in sets {
        members.sort_by(|&a, &b| tree.node(a).id.cmp(&tree.node(b).id));
        let (frozen, free): (Vec<usize>, Vec<usize>) =
            members.into_iter().partition(|&v| window(&tree.node(v).centroid) == 0.0);
        for v in frozen {
            groups.push(make(vec![v], None));
        }
        if free.is_empty() {
            continue;
        }
        let points: Vec<&[f64]> = free.iter().map(|&v| tree.node(v).centroid.as_slice()).collect();
        let seeds: Vec<Vec<f64>> =
            prev.iter().map(|g| g.center.clone()).chain(points.iter().map(|p| p.to_vec())).collect();
        let modes = mean_shift(&points, &seeds, &window, params.meanshift_iters, params.converge_tol);
        let mut parts: Vec<Vec<usize>> = vec![Vec::new(); modes.len()];
        for (i, p) in points.iter().enumerate() {
            parts[nearest_mode(p, &modes)].push(free[i]);
        }
        for (mode, part) in modes.iter().zip(parts) {
            if part.is_empty() {
                continue;
            }
            let carried = (mode.seed < prev.len()).then(|| prev[mode.seed].id.clone());
            groups.push(make(part, carried));
        }
    }
    groups.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(groups)
}

/// One representative first-level node per mean-shift cluster of the
/// first-level centroids: the member closest to the cluster mean.
pub fn auto_focus(tree: &TopicTree, params: &PostParams) -> Vec<String> {
    let mut kids: Vec<usize> = tree.children(0).to_vec();
    if kids.is_empty() {
        return vec![tree.root().id.clone()];
    }
    kids.sort_by(|&a, &b| tree.node(a).id.cmp(&tree.node(b).id));
    let points: Vec<&[f64]> = kids.iter().map(|&v| tree.node(v).centroid.as_slice()).collect();
    let seeds: Vec<Vec<f64>> = points.iter().map(|p| p.to_vec()).collect();
    let bw = params.focus_bandwidth;
    let modes = mean_shift(&points, &seeds, &|_| bw, params.meanshift_iters, params.converge_tol);
    let mut parts: Vec<Vec<usize>> = vec![Vec::new(); modes.len()];
    for (i, p) in points.iter().enumerate() {
        parts[nearest_mode(p, &modes)].push(i);
    }
    let mut out = Vec::new();
    for part in parts.into_iter().filter(|p| !p.is_empty()) {
        let mean = unit_mean(part.iter().map(|&i| points[i]), tree.dim());
        // `part` is in id order, so the first minimum is the lexicographic tie-break.
        let mut best = part[0];
        let mut best_d = f64::INFINITY;
        for &i in &part {
            let d = cosine_distance(points[i], &mean);
            if d < best_d - 1e-12 {
                best_d = d;
                best = i;
            }
        }
        out.push(tree.node(kids[best]).id.clone());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_cut, Document, Source, TermCounts, TopicTree};

    fn store_with(vectors: &[(&str, &[u32])]) -> DocumentStore {
        let dim = vectors[0].1.len();
        let mut store = DocumentStore::new(dim);
        for (id, v) in vectors {
            store
                .insert(Document {
                    id: id.to_string(),
                    timestamp: 0,
                    source: Source::News,
                    title: String::new(),
                    text: String::new(),
                    vector: TermCounts::from_dense(v),
                })
                .unwrap();
        }
        store
    }

    /// Root with one leaf per document.
    fn flat_tree(store: &DocumentStore, docs: &[&str]) -> TopicTree {
        let children: Vec<Vec<usize>> =
            std::iter::once((1..=docs.len()).collect()).chain(docs.iter().map(|_| Vec::new())).collect();
        let leaf_docs: Vec<Vec<String>> =
            std::iter::once(Vec::new()).chain(docs.iter().map(|d| vec![d.to_string()])).collect();
        TopicTree::from_shape(0, &children, &leaf_docs, store).unwrap()
    }

    fn leaves(tree: &TopicTree) -> TreeCut {
        let ids: BTreeSet<String> = tree.children(0).iter().map(|&c| tree.node(c).id.clone()).collect();
        make_cut(tree, &ids).unwrap()
    }

    #[test]
    fn window_cases() {
        let p = PostParams::default();
        assert_eq!(window_for_similarity(0.7, &p), 0.0);
        assert!((window_for_similarity(0.3, &p) - 0.4).abs() < 1e-12);
        assert_eq!(window_for_similarity(0.0, &p), p.w_max);
        let store = store_with(&[("a", &[1, 0]), ("b", &[0, 1]), ("c", &[1, 1])]);
        let a: BTreeSet<String> = ["a".to_string()].into();
        let b: BTreeSet<String> = ["b".to_string()].into();
        let c: BTreeSet<String> = ["c".to_string()].into();
        assert_eq!(window_size(&a, &[b.clone()], &store, &p).unwrap(), p.w_max);
        // max over foci: identical focus wins
        assert_eq!(window_size(&a, &[b, a.clone()], &store, &p).unwrap(), 0.0);
        assert!((window_size(&c, &[a], &store, &p).unwrap() - 0.0).abs() < 1e-12);
    }

    #[test]
    fn identical_siblings_form_one_group() {
        let store = store_with(&[("a", &[1, 0, 0]), ("b", &[1, 0, 0]), ("c", &[1, 0, 0]), ("f", &[0, 0, 1])]);
        let tree = flat_tree(&store, &["a", "b", "c"]);
        let focus = vec![store.centroid(&["f".to_string()]).unwrap()];
        let groups = group_cut_nodes(&tree, &leaves(&tree), &focus, None, &PostParams::default()).unwrap();
        assert_eq!(groups.len(), 1);
        assert_eq!(groups[0].member_cut_nodes.len(), 3);
    }

    #[test]
    fn focus_related_node_stays_alone() {
        let store = store_with(&[("a", &[1, 0, 0]), ("b", &[1, 0, 0]), ("c", &[1, 0, 0]), ("f", &[1, 0, 0])]);
        let tree = flat_tree(&store, &["a", "b", "c"]);
        let focus = vec![store.centroid(&["f".to_string()]).unwrap()];
        let groups = group_cut_nodes(&tree, &leaves(&tree), &focus, None, &PostParams::default()).unwrap();
        assert_eq!(groups.len(), 3);
        assert!(groups.iter().all(|g| g.member_cut_nodes.len() == 1));
    }

    #[test]
    fn separated_pairs_form_two_groups() {
        // Two tight pairs about 0.9 apart in cosine distance.
        let store = store_with(&[
            ("a1", &[10, 1, 0, 0]),
            ("a2", &[10, 0, 1, 0]),
            ("b1", &[1, 10, 0, 10]),
            ("b2", &[1, 10, 1, 10]),
        ]);
        let tree = flat_tree(&store, &["a1", "a2", "b1", "b2"]);
        let n = |i: usize| tree.node(tree.children(0)[i]).centroid.clone();
        let gap = cosine_distance(&n(0), &n(2));
        assert!(gap > 0.85 && gap < 0.95, "{gap}");
        let p = PostParams { w_max: 0.4, ..Default::default() };
        // No focus: every window is w_max.
        let groups = group_cut_nodes(&tree, &leaves(&tree), &[], None, &p).unwrap();
        let sets: Vec<Vec<&str>> = groups.iter().map(|g| g.member_cut_nodes.iter().map(String::as_str).collect()).collect();
        assert_eq!(sets.len(), 2);
        let names = |ix: [usize; 2]| ix.map(|i| tree.node(tree.children(0)[i]).id.as_str()).to_vec();
        assert!(sets.contains(&names([0, 1])) && sets.contains(&names([2, 3])), "{sets:?}");
    }

    #[test]
    fn carry_over_reproduces_previous_groups() {
        let store = store_with(&[("a1", &[5, 1, 0]), ("a2", &[5, 0, 1]), ("b1", &[0, 5, 1]), ("f", &[0, 0, 1])]);
        let tree = flat_tree(&store, &["a1", "a2", "b1"]);
        let focus = vec![store.centroid(&["f".to_string()]).unwrap()];
        let p = PostParams::default();
        let cut = leaves(&tree);
        let first = group_cut_nodes(&tree, &cut, &focus, None, &p).unwrap();
        let second = group_cut_nodes(&tree, &cut, &focus, Some(&first), &p).unwrap();
        let members = |g: &[DisplayGroup]| g.iter().map(|g| g.member_cut_nodes.clone()).collect::<Vec<_>>();
        assert_eq!(members(&first), members(&second));
        assert!(second.iter().all(|g| g.carried_from.is_some()));
    }

    #[test]
    fn root_cut_is_one_group() {
        let store = store_with(&[("a", &[1, 0]), ("b", &[0, 1])]);
        let tree = flat_tree(&store, &["a", "b"]);
        let cut = TreeCut::from_indices(&tree, &[0]);
        let groups = group_cut_nodes(&tree, &cut, &[], None, &PostParams::default()).unwrap();
        assert_eq!(groups.len(), 1);
        assert_eq!(groups[0].id, tree.root().id);
        let rec = GroupRecord::from(&groups[0]);
        assert_eq!(serde_json::to_string(&rec).unwrap(), format!("{{\"members\":[\"{}\"],\"carried_from\":null}}", tree.root().id));
    }

    #[test]
    fn auto_focus_cases() {
        let p = PostParams::default();
        let store = store_with(&[("a", &[1, 0])]);
        let one = flat_tree(&store, &["a"]);
        assert_eq!(auto_focus(&one, &p), vec![one.node(1).id.clone()]);

        let store = store_with(&[("a", &[1, 0]), ("b", &[1, 0]), ("c", &[1, 0])]);
        let same = flat_tree(&store, &["a", "b", "c"]);
        assert_eq!(auto_focus(&same, &p).len(), 1);

        // Four orthogonal directions, two nodes each, slightly perturbed.
        let mut docs: Vec<(String, Vec<u32>)> = Vec::new();
        for k in 0..4 {
            for j in 0..2 {
                let mut v = vec![0u32; 8];
                v[k] = 10;
                v[4 + (k + j) % 4] = 1;
                docs.push((format!("d{k}{j}"), v));
            }
        }
        let pairs: Vec<(&str, &[u32])> = docs.iter().map(|(i, v)| (i.as_str(), v.as_slice())).collect();
        let store = store_with(&pairs);
        let ids: Vec<&str> = docs.iter().map(|(i, _)| i.as_str()).collect();
        let tree = flat_tree(&store, &ids);
        let foci = auto_focus(&tree, &p);
        assert_eq!(foci.len(), 4);
        let topic = |id: &str| {
            let v = &tree.get(id).unwrap().centroid;
            (0..4).max_by(|&a, &b| v[a].total_cmp(&v[b])).unwrap()
        };
        let covered: BTreeSet<usize> = foci.iter().map(|f| topic(f)).collect();
        assert_eq!(covered.len(), 4);
    }
}
