use serde::{Deserialize, Serialize};

use topicflow::dcm::DcmParams;
use topicflow::ingest::{BuildParams, LinkParams, VocabParams};
use topicflow::layout::{LayoutParams, Viewport};
use topicflow::model::NodeRef;
use topicflow::postprocess::PostParams;
use topicflow::sediment::SedimentParams;
use topicflow::treecut::CutParams;

use crate::error::{ErrorCode, ServiceError, ServiceResult};

/// Focus choice: automatic first-level clustering of the first tree, or
/// explicit node references.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "FocusWire", into = "FocusWire")]
pub enum FocusRequest {
    #[default]
    Auto,
    Nodes(Vec<NodeRef>),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum FocusWire {
    Word(String),
    List(Vec<NodeRef>),
    Object { nodes: Vec<NodeRef> },
}

impl TryFrom<FocusWire> for FocusRequest {
    type Error = String;

    fn try_from(w: FocusWire) -> Result<Self, String> {
        match w {
            FocusWire::Word(s) if s == "auto" => Ok(Self::Auto),
            FocusWire::Word(s) => Err(format!("focus must be \"auto\" or a node list, got {s:?}")),
            FocusWire::List(nodes) | FocusWire::Object { nodes } if nodes.is_empty() => {
                Err("focus node list is empty".into())
            }
            FocusWire::List(nodes) | FocusWire::Object { nodes } => Ok(Self::Nodes(nodes)),
        }
    }
}

impl From<FocusRequest> for FocusWire {
    fn from(f: FocusRequest) -> Self {
        match f {
            FocusRequest::Auto => Self::Word("auto".into()),
            FocusRequest::Nodes(nodes) => Self::Object { nodes },
        }
    }
}

/// Every parameter bundle of a session. Missing fields take defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionConfig {
    pub seed: u64,
    /// Symmetric Dirichlet parameter.
    pub alpha: f64,
    pub cut: CutParams,
    pub post: PostParams,
    pub build: BuildParams,
    pub link: LinkParams,
    pub vocab: VocabParams,
    pub layout: LayoutParams,
    pub sediment: SedimentParams,
    /// Viewport used for sedimentation bands and document-link regions.
    pub viewport: Viewport,
    /// Fixed vocabulary; when absent it is built from the first batch.
    pub vocabulary: Option<Vec<String>>,
    pub focus: FocusRequest,
    /// Matches per region returned by document links.
    pub doc_links: usize,
    /// Upper bound on sedimentation ticks run per batch.
    pub tick_cap: usize,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            alpha: 0.01,
            cut: CutParams::default(),
            post: PostParams::default(),
            build: BuildParams::default(),
            link: LinkParams::default(),
            vocab: VocabParams::default(),
            layout: LayoutParams::default(),
            sediment: SedimentParams::default(),
            viewport: Viewport::default(),
            vocabulary: None,
            focus: FocusRequest::Auto,
            doc_links: 5,
            tick_cap: 2000,
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> ServiceResult<()> {
        let bad = |e: topicflow::Error| ServiceError::new(ErrorCode::BadConfig, e.to_string());
        DcmParams::symmetric(1, self.alpha).map_err(bad)?;
        self.cut.check().map_err(bad)?;
        self.post.check().map_err(bad)?;
        self.build.check().map_err(bad)?;
        self.layout.check().map_err(bad)?;
        self.sediment.check().map_err(bad)?;
        if !(0.0..=1.0).contains(&self.link.link_threshold) {
            return Err(ServiceError::new(ErrorCode::BadConfig, "link_threshold must lie in [0, 1]"));
        }
        if !(self.viewport.width > 0.0 && self.viewport.height > 0.0) {
            return Err(ServiceError::new(ErrorCode::BadConfig, "viewport must be positive"));
        }
        if self.tick_cap == 0 {
            return Err(ServiceError::new(ErrorCode::BadConfig, "tick_cap must be >= 1"));
        }
        if let Some(v) = &self.vocabulary {
            topicflow::model::Vocabulary::new(v.clone()).map_err(bad)?;
        }
        Ok(())
    }
}
