//! Per-session event log. Every subscriber reads the same append-only
//! sequence, so fan-out is identical by construction.

use std::sync::RwLock;

use serde::{Deserialize, Serialize};
use tokio::sync::watch;

use topicflow::sediment::TickSnapshot;

/// Notice that the scene changed; clients refetch the layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayoutNotice {
    /// Increments on every invalidation.
    pub version: u64,
    pub reason: String,
    pub steps: usize,
    /// Time steps whose cut or groups changed.
    pub affected: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", content = "data", rename_all = "lowercase")]
pub enum ServerEvent {
    Tick(TickSnapshot),
    Layout(LayoutNotice),
}

impl ServerEvent {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Tick(_) => "tick",
            Self::Layout(_) => "layout",
        }
    }

    pub fn data_json(&self) -> String {
        let r = match self {
            Self::Tick(t) => serde_json::to_string(t),
            Self::Layout(l) => serde_json::to_string(l),
        };
        r.expect("event payloads serialize")
    }
}

pub struct EventLog {
    events: RwLock<Vec<ServerEvent>>,
    len: watch::Sender<usize>,
}

impl Default for EventLog {
    fn default() -> Self {
        Self { events: RwLock::new(Vec::new()), len: watch::Sender::new(0) }
    }
}

impl EventLog {
    pub fn push(&self, e: ServerEvent) {
        let n = {
            let mut ev = self.events.write().expect("event log poisoned");
            ev.push(e);
            ev.len()
        };
        self.len.send_replace(n);
    }

    pub fn len(&self) -> usize {
        self.events.read().expect("event log poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, i: usize) -> Option<ServerEvent> {
        self.events.read().expect("event log poisoned").get(i).cloned()
    }

    pub fn since(&self, i: usize) -> Vec<ServerEvent> {
        let ev = self.events.read().expect("event log poisoned");
        ev.get(i..).map(<[ServerEvent]>::to_vec).unwrap_or_default()
    }

    /// Receiver woken whenever the log grows.
    pub fn subscribe(&self) -> watch::Receiver<usize> {
        self.len.subscribe()
    }
}
