//! One analyst session: the growing tree sequence, its streaming cuts,
//! interaction overrides and the sedimentation state.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use topicflow::dcm::DcmParams;
use topicflow::ingest::{self, CorpusSlice, RawDocument};
use topicflow::layout::{self, LayoutScene, LayoutStep, RegionKind, Viewport};
use topicflow::model::{make_cut, Document, DocumentStore, FocusSet, NodeRef, TermCounts, TopicTree, TreeCut, TreeMapping, Vocabulary};
use topicflow::postprocess::{self, DisplayGroup, GroupRecord};
use topicflow::sediment::{cluster_batch, SedimentState, TopicCentroid};
use topicflow::treecut::{self, CutProblem, CutRecord, CutScore};
use topicflow::vecmath;

use crate::config::{FocusRequest, SessionConfig};
use crate::error::{ErrorCode, ServiceError, ServiceResult};
use crate::events::{LayoutNotice, ServerEvent};

/// Events produced by an operation, in emission order.
pub type Sink<'a> = &'a mut dyn FnMut(ServerEvent);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub time_index: usize,
    pub accepted: usize,
    /// Documents without any in-vocabulary term.
    pub dropped: Vec<String>,
    pub cut: CutRecord,
    pub ticks: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FocusSummary {
    pub foci: Vec<NodeRef>,
    pub changed: Vec<bool>,
}

/// A step's displayed cut.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CutView {
    pub time_index: usize,
    pub cut_nodes: Vec<String>,
    pub overridden: bool,
    pub groups: Vec<GroupRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchHit {
    pub time_index: usize,
    pub node_id: String,
    pub score: f64,
    pub doc_count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DocMatch {
    pub doc_id: String,
    pub time_index: usize,
    pub region: RegionKind,
    pub cosine: f64,
}

/// Nearest documents per display region. `stack_archive` merges the
/// stack and archive regions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DocLinks {
    pub doc_id: String,
    pub streaming: Vec<DocMatch>,
    pub river: Vec<DocMatch>,
    pub stack_archive: Vec<DocMatch>,
}

#[derive(Clone, Debug, PartialEq)]
struct Override {
    cut: TreeCut,
    groups: Vec<DisplayGroup>,
}

#[derive(Clone)]
pub struct Session {
    id: String,
    config: SessionConfig,
    vocabulary: Option<Vocabulary>,
    dcm: Option<DcmParams>,
    store: DocumentStore,
    /// Document ids of each ingested batch.
    batches: Vec<Vec<String>>,
    last_timestamp: Option<i64>,
    trees: Vec<TopicTree>,
    mappings: Vec<TreeMapping>,
    cuts: Vec<(TreeCut, CutScore)>,
    groups: Vec<Vec<DisplayGroup>>,
    overrides: BTreeMap<usize, Override>,
    focus: FocusRequest,
    foci: Option<FocusSet>,
    focus_vectors: Vec<Vec<f64>>,
    sediment: SedimentState,
    layout_version: u64,
    layout_cache: BTreeMap<(u64, u64), String>,
}

fn sparse_unit(v: &TermCounts) -> Vec<(u32, f64)> {
    let n = v.iter().map(|(_, c)| f64::from(c).powi(2)).sum::<f64>().sqrt();
    v.iter().map(|(j, c)| (j, f64::from(c) / n)).collect()
}

/// Cosine of two unit vectors, clamped against rounding.
fn sparse_dense_dot(a: &[(u32, f64)], b: &[f64]) -> f64 {
    a.iter().map(|&(j, x)| x * b[j as usize]).sum::<f64>().clamp(-1.0, 1.0)
}

fn doc_text(title: &str, text: &str) -> String {
    format!("{title} {text}")
}

impl Session {
    pub fn new(id: String, config: SessionConfig) -> ServiceResult<Self> {
        config.validate()?;
        let vocabulary = config.vocabulary.clone().map(Vocabulary::new).transpose()?;
        let dim = vocabulary.as_ref().map_or(0, Vocabulary::size);
        let dcm = if dim > 0 { Some(DcmParams::symmetric(dim, config.alpha)?) } else { None };
        let entry_x = config.viewport.width;
        Ok(Self {
            id,
            focus: config.focus.clone(),
            config,
            vocabulary,
            dcm,
            store: DocumentStore::new(dim),
            batches: Vec::new(),
            last_timestamp: None,
            trees: Vec::new(),
            mappings: Vec::new(),
            cuts: Vec::new(),
            groups: Vec::new(),
            overrides: BTreeMap::new(),
            foci: None,
            focus_vectors: Vec::new(),
            sediment: SedimentState::new(Vec::new(), entry_x),
            layout_version: 0,
            layout_cache: BTreeMap::new(),
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn trees(&self) -> &[TopicTree] {
        &self.trees
    }

    pub fn mappings(&self) -> &[TreeMapping] {
        &self.mappings
    }

    pub fn store(&self) -> &DocumentStore {
        &self.store
    }

    pub fn sediment(&self) -> &SedimentState {
        &self.sediment
    }

    pub fn foci(&self) -> Option<&FocusSet> {
        self.foci.as_ref()
    }

    /// Model cuts as computed by the optimizer, with their groups.
    pub fn cut_records(&self) -> Vec<CutRecord> {
        self.cuts.iter().zip(&self.groups).map(|((c, s), g)| CutRecord::new(c, *s).with_groups(g)).collect()
    }

    fn display(&self, t: usize) -> (&TreeCut, &[DisplayGroup]) {
        match self.overrides.get(&t) {
            Some(o) => (&o.cut, &o.groups),
            None => (&self.cuts[t].0, &self.groups[t]),
        }
    }

    pub fn cut_view(&self, t: usize) -> ServiceResult<CutView> {
        self.check_step(t)?;
        let (cut, groups) = self.display(t);
        Ok(CutView {
            time_index: t,
            cut_nodes: cut.cut_nodes.iter().cloned().collect(),
            overridden: self.overrides.contains_key(&t),
            groups: groups.iter().map(Into::into).collect(),
        })
    }

    fn check_step(&self, t: usize) -> ServiceResult<()> {
        if t >= self.trees.len() {
            return Err(ServiceError::new(ErrorCode::UnknownNode, format!("no time step {t}")));
        }
        Ok(())
    }

    fn notice(&mut self, reason: &str, affected: Vec<usize>, sink: Sink<'_>) {
        self.layout_version += 1;
        self.layout_cache.clear();
        sink(ServerEvent::Layout(LayoutNotice {
            version: self.layout_version,
            reason: reason.into(),
            steps: self.trees.len(),
            affected,
        }));
    }

    /// Vectorizes the batch against the session vocabulary, creating the
    /// vocabulary from this batch if none exists yet.
    fn vectorize(&mut self, raw: Vec<RawDocument>) -> ServiceResult<(Vec<Document>, Vec<String>)> {
        if self.vocabulary.is_none() {
            let slice = CorpusSlice {
                time_index: 0,
                documents: raw.iter().cloned().map(|d| d.into_document(TermCounts::new())).collect(),
            };
            let (vocab, _) = ingest::vectorize(&[slice], &self.config.vocab)?;
            self.dcm = Some(DcmParams::symmetric(vocab.size(), self.config.alpha)?);
            self.store = DocumentStore::new(vocab.size());
            self.vocabulary = Some(vocab);
        }
        let vocab = self.vocabulary.as_ref().expect("vocabulary set above");
        let mut docs = Vec::new();
        let mut dropped = Vec::new();
        for d in raw {
            let v = ingest::count_terms(vocab, &doc_text(&d.title, &d.text));
            if v.is_empty() {
                dropped.push(d.id);
            } else {
                docs.push(d.into_document(v));
            }
        }
        Ok((docs, dropped))
    }

    fn resolve_focus(&self) -> ServiceResult<Option<FocusSet>> {
        let refs = match &self.focus {
            FocusRequest::Auto => match self.trees.first() {
                None => return Ok(None),
                Some(t0) => postprocess::auto_focus(t0, &self.config.post)
                    .into_iter()
                    .map(|node_id| NodeRef { time_index: t0.time_index(), node_id })
                    .collect::<Vec<_>>(),
            },
            FocusRequest::Nodes(refs) => refs.clone(),
        };
        if self.trees.is_empty() {
            return Ok(None);
        }
        Ok(Some(FocusSet::from_refs(&refs, &self.trees)?))
    }

    fn solve(&self, t: usize, prev: Option<&TreeCut>, foci: &FocusSet) -> ServiceResult<(TreeCut, CutScore)> {
        let problem = CutProblem {
            tree: &self.trees[t],
            prev: prev.map(|c| (c, &self.mappings[t - 1])),
            foci,
            store: &self.store,
            dcm: self.dcm.as_ref().expect("vocabulary exists once a tree does"),
            params: &self.config.cut,
        };
        Ok(treecut::solve_stream(&problem)?)
    }

    fn group(&self, t: usize, cut: &TreeCut, prev: Option<&[DisplayGroup]>) -> ServiceResult<Vec<DisplayGroup>> {
        Ok(postprocess::group_cut_nodes(&self.trees[t], cut, &self.focus_vectors, prev, &self.config.post)?)
    }

    /// Appends one slice. Earlier cuts are never touched.
    pub fn ingest_batch(&mut self, raw: Vec<RawDocument>, sink: Sink<'_>) -> ServiceResult<IngestSummary> {
        if raw.is_empty() {
            return Err(ServiceError::new(ErrorCode::EmptyBatch, "batch has no documents"));
        }
        let mut ids = BTreeSet::new();
        for d in &raw {
            if !ids.insert(d.id.as_str()) || self.store.contains(&d.id) {
                return Err(ServiceError::new(ErrorCode::DuplicateDocument, format!("document {} already exists", d.id)));
            }
        }
        let earliest = raw.iter().map(|d| d.timestamp).min().expect("non-empty batch");
        let latest = raw.iter().map(|d| d.timestamp).max().expect("non-empty batch");
        if let Some(last) = self.last_timestamp {
            if earliest < last {
                return Err(ServiceError::new(
                    ErrorCode::OutOfOrderBatch,
                    format!("batch starts at {earliest}, before the latest ingested timestamp {last}"),
                ));
            }
        }
        // Work on a copy so a failing ingest leaves the session untouched.
        let mut next = self.clone();
        let (mut docs, dropped) = next.vectorize(raw)?;
        if docs.is_empty() {
            return Err(ServiceError::new(ErrorCode::EmptyBatch, "no document has an in-vocabulary term"));
        }
        docs.sort_by(|a, b| a.timestamp.cmp(&b.timestamp).then_with(|| a.id.cmp(&b.id)));
        for d in &docs {
            next.store.insert(d.clone())?;
        }
        let t = next.trees.len();
        let refs: Vec<&Document> = docs.iter().collect();
        let tree = ingest::build_tree(t, &refs, &next.store, next.dcm.as_ref().expect("set by vectorize"), &next.config.build)?;
        if let Some(prev) = next.trees.last() {
            next.mappings.push(ingest::link_trees(prev, &tree, &next.store, &next.config.link));
        }
        next.trees.push(tree);
        if next.foci.is_none() {
            next.foci = next.resolve_focus()?;
            next.focus_vectors = postprocess::focus_centroids(next.foci.as_ref().expect("a tree exists"), &next.store)?;
        }
        let foci = next.foci.clone().expect("resolved above");
        let (cut, score) = next.solve(t, next.cuts.last().map(|c| &c.0), &foci)?;
        let groups = next.group(t, &cut, next.groups.last().map(Vec::as_slice))?;
        next.cuts.push((cut, score));
        next.groups.push(groups);
        next.batches.push(docs.iter().map(|d| d.id.clone()).collect());
        next.last_timestamp = Some(latest);
        *self = next;

        // The new step's bars are published only after its documents settle.
        let viewport = self.config.viewport;
        let scene = self.render(viewport).ok();
        let ticks = self.sediment_batch(&docs, scene.as_ref(), t, sink)?;
        self.notice("ingest", vec![t], sink);
        if let Some(scene) = scene {
            self.layout_cache.insert(Self::key(viewport), scene.to_json()?);
        }
        let record = self.cut_records().pop().expect("cut pushed above");
        Ok(IngestSummary { time_index: t, accepted: docs.len(), dropped, cut: record, ticks })
    }

    fn sediment_batch(&mut self, docs: &[Document], scene: Option<&LayoutScene>, t: usize, sink: Sink<'_>) -> ServiceResult<usize> {
        let entry_x = self.config.viewport.width;
        self.sediment.set_bands(scene.map(LayoutScene::bands).unwrap_or_default(), entry_x);
        let (_, groups) = self.display(t);
        let topics: Vec<TopicCentroid> =
            groups.iter().map(|g| TopicCentroid { group: g.id.clone(), center: g.center.clone() }).collect();
        let refs: Vec<&Document> = docs.iter().collect();
        let seed = self.config.seed ^ (t as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
        let tokens = cluster_batch(&refs, self.store.dim(), &topics, &self.config.sediment, seed)?;
        self.sediment.enter(tokens, seed);
        let mut ticks = 0;
        loop {
            let snap = self.sediment.tick(&self.config.sediment);
            sink(ServerEvent::Tick(snap));
            ticks += 1;
            if self.sediment.is_idle() || ticks >= self.config.tick_cap {
                break;
            }
        }
        Ok(ticks)
    }

    fn key(v: Viewport) -> (u64, u64) {
        (v.width.to_bits(), v.height.to_bits())
    }

    fn render(&self, viewport: Viewport) -> ServiceResult<LayoutScene> {
        if self.trees.is_empty() {
            return Err(ServiceError::new(ErrorCode::EmptySession, "session has no time steps yet"));
        }
        let steps: Vec<LayoutStep<'_>> = (0..self.trees.len())
            .map(|t| {
                let (cut, groups) = self.display(t);
                LayoutStep { tree: &self.trees[t], cut, groups }
            })
            .collect();
        Ok(layout::build_scene(&steps, &self.mappings, &self.store, &self.config.layout, viewport, true)?)
    }

    /// Scene JSON for `viewport`, cached until the next change.
    pub fn layout(&mut self, viewport: Viewport) -> ServiceResult<String> {
        if let Some(s) = self.layout_cache.get(&Self::key(viewport)) {
            return Ok(s.clone());
        }
        let json = self.render(viewport)?.to_json()?;
        self.layout_cache.insert(Self::key(viewport), json.clone());
        Ok(json)
    }

    /// Re-runs the streaming recurrence from the first step with new foci
    /// and drops every interaction override.
    pub fn set_focus(&mut self, request: FocusRequest, sink: Sink<'_>) -> ServiceResult<FocusSummary> {
        let mut next = self.clone();
        next.focus = request;
        next.foci = next.resolve_focus()?;
        let Some(foci) = next.foci.clone() else {
            *self = next;
            return Ok(FocusSummary { foci: Vec::new(), changed: Vec::new() });
        };
        next.focus_vectors = postprocess::focus_centroids(&foci, &next.store)?;
        let mut cuts: Vec<(TreeCut, CutScore)> = Vec::with_capacity(next.trees.len());
        let mut groups: Vec<Vec<DisplayGroup>> = Vec::with_capacity(next.trees.len());
        for t in 0..next.trees.len() {
            let c = next.solve(t, cuts.last().map(|c| &c.0), &foci)?;
            let g = next.group(t, &c.0, groups.last().map(Vec::as_slice))?;
            cuts.push(c);
            groups.push(g);
        }
        let changed: Vec<bool> = (0..cuts.len())
            .map(|t| cuts[t].0 != next.cuts[t].0 || groups[t] != next.groups[t] || next.overrides.contains_key(&t))
            .collect();
        next.cuts = cuts;
        next.groups = groups;
        next.overrides.clear();
        *self = next;
        let affected: Vec<usize> = changed.iter().enumerate().filter(|(_, &c)| c).map(|(t, _)| t).collect();
        if !affected.is_empty() {
            let scene = self.render(self.config.viewport).ok();
            self.sediment
                .set_bands(scene.as_ref().map(LayoutScene::bands).unwrap_or_default(), self.config.viewport.width);
            self.notice("focus", affected, sink);
        }
        Ok(FocusSummary { foci: foci.foci().iter().map(|f| f.node.clone()).collect(), changed })
    }

    fn apply_override(&mut self, t: usize, nodes: BTreeSet<String>, reason: &str, sink: Sink<'_>) -> ServiceResult<CutView> {
        let cut = make_cut(&self.trees[t], &nodes)?;
        if cut == self.cuts[t].0 {
            self.overrides.remove(&t);
        } else {
            let prev = (t > 0).then(|| self.display(t - 1).1.to_vec());
            let groups = self.group(t, &cut, prev.as_deref())?;
            self.overrides.insert(t, Override { cut, groups });
        }
        self.notice(reason, vec![t], sink);
        self.cut_view(t)
    }

    /// Replaces a cut node by its children in the displayed cut of step `t`.
    pub fn split_topic(&mut self, t: usize, node: &str, sink: Sink<'_>) -> ServiceResult<CutView> {
        self.check_step(t)?;
        let tree = &self.trees[t];
        let v = tree.index_of(node).ok_or_else(|| ServiceError::new(ErrorCode::UnknownNode, node.to_string()))?;
        let (cut, _) = self.display(t);
        if !cut.contains(node) {
            return Err(ServiceError::new(ErrorCode::NotInCut, format!("{node} is not in the cut of step {t}")));
        }
        if tree.is_leaf(v) {
            return Err(ServiceError::new(ErrorCode::LeafSplit, format!("{node} is a leaf")));
        }
        let mut nodes = cut.cut_nodes.clone();
        nodes.remove(node);
        nodes.extend(tree.children(v).iter().map(|&c| tree.node(c).id.clone()));
        self.apply_override(t, nodes, "split", sink)
    }

    /// Collapses the children of `parent` back into it. When `members` is
    /// given it must name exactly those children.
    pub fn merge_topic(
        &mut self,
        t: usize,
        parent: &str,
        members: Option<&[String]>,
        sink: Sink<'_>,
    ) -> ServiceResult<CutView> {
        self.check_step(t)?;
        let tree = &self.trees[t];
        let v = tree.index_of(parent).ok_or_else(|| ServiceError::new(ErrorCode::UnknownNode, parent.to_string()))?;
        let children: BTreeSet<String> = tree.children(v).iter().map(|&c| tree.node(c).id.clone()).collect();
        let (cut, _) = self.display(t);
        let complete = !children.is_empty() && children.iter().all(|c| cut.contains(c));
        let named = members.map_or(true, |m| m.iter().cloned().collect::<BTreeSet<_>>() == children);
        if !complete || !named {
            return Err(ServiceError::new(
                ErrorCode::NotSiblingGroup,
                format!("the children of {parent} are not a complete sibling group of the cut at step {t}"),
            ));
        }
        let mut nodes: BTreeSet<String> = cut.cut_nodes.difference(&children).cloned().collect();
        nodes.insert(parent.to_string());
        self.apply_override(t, nodes, "merge", sink)
    }

    /// Nodes of every step ranked by cosine between the query vector and
    /// their centroids; ties go to the earlier step, then the smaller id.
    pub fn search(&self, query: &str, limit: usize) -> ServiceResult<Vec<SearchHit>> {
        let empty = || ServiceError::new(ErrorCode::EmptyQueryVector, format!("no term of {query:?} is in the vocabulary"));
        let vocab = self.vocabulary.as_ref().ok_or_else(empty)?;
        let q = ingest::count_terms(vocab, query);
        if q.is_empty() {
            return Err(empty());
        }
        let qv = sparse_unit(&q);
        let mut hits: Vec<SearchHit> = self
            .trees
            .iter()
            .flat_map(|tree| {
                tree.nodes().iter().map(|n| SearchHit {
                    time_index: tree.time_index(),
                    node_id: n.id.clone(),
                    score: sparse_dense_dot(&qv, &n.centroid),
                    doc_count: n.doc_ids.len(),
                })
            })
            .collect();
        hits.sort_by(|a, b| {
            b.score.total_cmp(&a.score).then(a.time_index.cmp(&b.time_index)).then_with(|| a.node_id.cmp(&b.node_id))
        });
        hits.truncate(limit);
        Ok(hits)
    }

    /// Top-`j` cosine neighbours of a document in each region. The newest
    /// batch is the streaming region; older river steps form the river.
    pub fn doc_links(&self, doc_id: &str, j: usize, viewport_width: f64) -> ServiceResult<DocLinks> {
        let doc = self.store.get(doc_id).ok_or_else(|| ServiceError::new(ErrorCode::UnknownDocument, doc_id.to_string()))?;
        let mut out = DocLinks { doc_id: doc_id.into(), streaming: Vec::new(), river: Vec::new(), stack_archive: Vec::new() };
        let n = self.trees.len();
        let regions = layout::partition_regions(n, n - 1, &self.config.layout, viewport_width)?;
        let q = vecmath::dense_unit(&doc.vector, self.store.dim());
        for (t, batch) in self.batches.iter().enumerate() {
            let region = if t + 1 == n {
                RegionKind::Streaming
            } else {
                regions.kind_of_step(t).expect("every step has a region")
            };
            let list = match region {
                RegionKind::Streaming => &mut out.streaming,
                RegionKind::River => &mut out.river,
                RegionKind::Stack | RegionKind::Archive => &mut out.stack_archive,
            };
            for id in batch.iter().filter(|id| id.as_str() != doc_id) {
                let other = self.store.require(id)?;
                let cosine = sparse_dense_dot(&sparse_unit(&other.vector), &q);
                list.push(DocMatch { doc_id: id.clone(), time_index: t, region, cosine });
            }
        }
        for list in [&mut out.streaming, &mut out.river, &mut out.stack_archive] {
            list.sort_by(|a, b| b.cosine.total_cmp(&a.cosine).then_with(|| a.doc_id.cmp(&b.doc_id)));
            list.truncate(j);
        }
        Ok(out)
    }
}
