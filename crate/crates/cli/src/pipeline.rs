//! Batch versions of the streaming steps.

use topicflow::dcm::DcmParams;
use topicflow::metrics::{doi_baseline_cut, DoiParams, DoiValues};
use topicflow::model::{DocumentStore, FocusSet, NodeRef, TopicTree, TreeCut, TreeMapping};
use topicflow::postprocess::{auto_focus, focus_centroids, group_cut_nodes, DisplayGroup, PostParams};
use topicflow::treecut::{solve_stream, CutParams, CutProblem, CutScore};

use crate::CliError;

/// Parses `auto` or comma-separated `TIME/NODE` references. A bare node id
/// refers to the first tree that contains it.
pub fn parse_focus(spec: &str, trees: &[TopicTree], post: &PostParams) -> Result<Vec<NodeRef>, CliError> {
    let first = trees.first().ok_or_else(|| CliError::Input("no trees".into()))?;
    if spec.trim() == "auto" {
        return Ok(auto_focus(first, post)
            .into_iter()
            .map(|node_id| NodeRef { time_index: first.time_index(), node_id })
            .collect());
    }
    let mut refs = Vec::new();
    for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let r = match part.split_once('/') {
            Some((t, node)) => {
                let time_index = t.parse().map_err(|_| CliError::Input(format!("bad time index in {part:?}")))?;
                NodeRef { time_index, node_id: node.to_string() }
            }
            None => {
                let tree = trees
                    .iter()
                    .find(|t| t.get(part).is_some())
                    .ok_or_else(|| CliError::Input(format!("no tree has a node {part:?}")))?;
                NodeRef { time_index: tree.time_index(), node_id: part.to_string() }
            }
        };
        refs.push(r);
    }
    if refs.is_empty() {
        return Err(CliError::Input("empty focus list".into()));
    }
    Ok(refs)
}

pub struct StreamStep {
    pub cut: TreeCut,
    pub score: CutScore,
    pub groups: Vec<DisplayGroup>,
}

/// Runs the streaming recurrence over a whole sequence: each step sees only
/// the previous step's cut and groups.
pub fn stream_cuts(
    trees: &[TopicTree],
    mappings: &[TreeMapping],
    foci: &FocusSet,
    store: &DocumentStore,
    dcm: &DcmParams,
    cut: &CutParams,
    post: &PostParams,
) -> Result<Vec<StreamStep>, CliError> {
    let focus_vectors = focus_centroids(foci, store)?;
    let mut out: Vec<StreamStep> = Vec::with_capacity(trees.len());
    for (t, tree) in trees.iter().enumerate() {
        let prev = out.last();
        let problem = CutProblem {
            tree,
            prev: prev.map(|p| (&p.cut, &mappings[t - 1])),
            foci,
            store,
            dcm,
            params: cut,
        };
        let (c, score) = solve_stream(&problem)?;
        let groups = group_cut_nodes(tree, &c, &focus_vectors, prev.map(|p| p.groups.as_slice()), post)?;
        out.push(StreamStep { cut: c, score, groups });
    }
    Ok(out)
}

/// Degree-of-interest baseline cuts, carrying interest forward in time.
pub fn doi_cuts(
    trees: &[TopicTree],
    mappings: &[TreeMapping],
    focus_vectors: &[Vec<f64>],
    doi: &DoiParams,
    cut: &CutParams,
) -> Result<Vec<TreeCut>, CliError> {
    let mut values: Option<DoiValues> = None;
    let mut cuts = Vec::with_capacity(trees.len());
    for (t, tree) in trees.iter().enumerate() {
        let prev = values.as_ref().map(|v| (v, &mappings[t - 1]));
        let (c, v) = doi_baseline_cut(tree, prev, focus_vectors, doi, cut)?;
        cuts.push(c);
        values = Some(v);
    }
    Ok(cuts)
}
