//! On-disk formats shared by the subcommands.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use topicflow::dcm::DcmParams;
use topicflow::ingest::Corpus;
use topicflow::model::{make_cut, Document, DocumentStore, NodeRef, TopicTree, TreeCut, TreeFile, TreeMapping, Vocabulary};
use topicflow::postprocess::{DisplayGroup, GroupRecord};
use topicflow::treecut::CutRecord;
use topicflow::vecmath::unit_mean;

use crate::CliError;

pub const TREES_FILE: &str = "trees.json";
pub const CUTS_FILE: &str = "cuts.json";

/// `trees.json`: everything a cut or layout run needs.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TreeBundle {
    pub alpha: f64,
    pub vocabulary: Vocabulary,
    pub documents: Vec<Document>,
    pub trees: Vec<TreeFile>,
    pub mappings: Vec<TreeMapping>,
}

/// `cuts.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CutsFile {
    pub foci: Vec<NodeRef>,
    pub solver: String,
    pub cuts: Vec<CutRecord>,
}

/// A bundle with its trees rebuilt against the document store.
pub struct Loaded {
    pub alpha: f64,
    pub vocabulary: Vocabulary,
    pub store: DocumentStore,
    pub trees: Vec<TopicTree>,
    pub mappings: Vec<TreeMapping>,
}

impl Loaded {
    pub fn dcm(&self) -> Result<DcmParams, CliError> {
        Ok(DcmParams::symmetric(self.store.dim(), self.alpha)?)
    }
}

impl TreeBundle {
    pub fn from_corpus(corpus: &Corpus, alpha: f64) -> Self {
        let mut documents: Vec<Document> =
            corpus.slices.iter().flat_map(|s| s.documents.iter().cloned()).collect();
        documents.sort_by(|a, b| a.id.cmp(&b.id));
        Self {
            alpha,
            vocabulary: corpus.vocabulary.clone(),
            documents,
            trees: corpus.trees.iter().map(|t| t.to_file(TREES_FILE)).collect(),
            mappings: corpus.mappings.clone(),
        }
    }

    pub fn load(self) -> Result<Loaded, CliError> {
        let mut store = DocumentStore::new(self.vocabulary.size());
        for d in self.documents {
            store.insert(d)?;
        }
        let trees = self.trees.iter().map(|f| TopicTree::from_file(f, &store)).collect::<Result<Vec<_>, _>>()?;
        if self.mappings.len() + 1 != trees.len().max(1) {
            return Err(CliError::Input(format!("{} trees but {} mappings", trees.len(), self.mappings.len())));
        }
        Ok(Loaded { alpha: self.alpha, vocabulary: self.vocabulary, store, trees, mappings: self.mappings })
    }
}

impl CutsFile {
    /// Cuts validated against `trees`.
    pub fn tree_cuts(&self, trees: &[TopicTree]) -> Result<Vec<TreeCut>, CliError> {
        if self.cuts.len() != trees.len() {
            return Err(CliError::Input(format!("{} cuts for {} trees", self.cuts.len(), trees.len())));
        }
        self.cuts
            .iter()
            .zip(trees)
            .map(|(c, t)| Ok(make_cut(t, &c.cut_nodes.iter().cloned().collect())?))
            .collect()
    }
}

/// Rebuilds display groups from their records; centers are the unit mean of
/// the member centroids.
pub fn groups_from_records(tree: &TopicTree, records: &[GroupRecord]) -> Result<Vec<DisplayGroup>, CliError> {
    records
        .iter()
        .map(|r| {
            let members: BTreeSet<String> = r.members.iter().cloned().collect();
            let mut centroids = Vec::with_capacity(members.len());
            for id in &members {
                let node = tree.get(id).ok_or_else(|| CliError::Input(format!("group member {id} is not in the tree")))?;
                centroids.push(node.centroid.as_slice());
            }
            let id = members.first().cloned().ok_or_else(|| CliError::Input("empty display group".into()))?;
            Ok(DisplayGroup {
                id,
                center: unit_mean(centroids, tree.dim()),
                member_cut_nodes: members,
                carried_from: r.carried_from.clone(),
            })
        })
        .collect()
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Io(path.display().to_string(), e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

pub fn write_text(dir: &Path, name: &str, text: &str) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Io(dir.display().to_string(), e))?;
    let path = dir.join(name);
    fs::write(&path, text).map_err(|e| CliError::Io(path.display().to_string(), e))
}

pub fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Input(e.to_string()))?;
    text.push('\n');
    write_text(dir, name, &text)
}
