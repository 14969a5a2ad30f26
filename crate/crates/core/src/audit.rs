//! Optional read instrumentation for class attribute rows and embeddings.
//!
//! Stores that carry an [`AccessAudit`] record every row they hand out, which
//! lets a run prove after the fact which data it touched and when.

use std::sync::{Arc, Mutex};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Access {
    AttributeRow { class_id: u32 },
    EmbeddingRow { row: usize, class_id: u32 },
    /// A caller-inserted marker separating phases of a run.
    Phase(String),
}

#[derive(Debug, Default)]
pub struct AccessAudit {
    events: Mutex<Vec<Access>>,
}

impl AccessAudit {
    pub fn new() -> Arc<Self> {
        Arc::new(Self::default())
    }

    pub fn record(&self, access: Access) {
        self.events.lock().expect("audit lock poisoned").push(access);
    }

    pub fn mark(&self, phase: impl Into<String>) {
        self.record(Access::Phase(phase.into()));
    }

    pub fn events(&self) -> Vec<Access> {
        self.events.lock().expect("audit lock poisoned").clone()
    }

    /// Events recorded before the first `Phase(phase)` marker (all events if
    /// the marker never occurs).
    pub fn events_before(&self, phase: &str) -> Vec<Access> {
        self.events()
            .into_iter()
            .take_while(|e| !matches!(e, Access::Phase(p) if p == phase))
            .collect()
    }
}

pub(crate) fn record(audit: &Option<Arc<AccessAudit>>, access: impl FnOnce() -> Access) {
    if let Some(a) = audit {
        a.record(access());
    }
}
