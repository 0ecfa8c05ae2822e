//! Session-scoped API over the topicflow pipeline: batch ingest with
//! streaming cuts, focus changes, split/merge overrides, search, document
//! links, layout snapshots and an ordered event stream.

pub mod config;
pub mod error;
pub mod events;
pub mod http;
pub mod session;

pub use config::{FocusRequest, SessionConfig};
pub use error::{ErrorCode, ServiceError, ServiceResult};
pub use events::{EventLog, LayoutNotice, ServerEvent};
pub use http::{router, serve, AppState};
pub use session::Session;
