//! Patch extraction, function replacement, validation and the repair loops.

mod apply;
mod context;
mod engine;
mod extract;

use thiserror::Error;

pub use apply::{apply_patch, reindent, splice, validate_patch, PatchedWorkspace, ValidationReport};
pub use context::{bic_info, buggy_function_source, build_context, BicInfo};
pub use engine::{
    feedback_messages, message_log_name, patch_file_name, repair_bug, repair_conversational,
    repair_from_store, repair_zero_shot, trace_file_name, CallRecord, FinalOutcome, RepairConfig, RepairOutput,
    RepairTrace,
};
pub use extract::{extract_patch, locate_function, Extraction, PatchCandidate};

use crate::adapter::AdapterError;
use crate::gateway::GatewayError;
use crate::prompt::PromptError;

#[derive(Debug, Error)]
pub enum RepairError {
    #[error("lines {start}..={end} are outside {file} ({lines} lines)")]
    SpanOutOfRange {
        file: String,
        start: u32,
        end: u32,
        lines: usize,
    },
    #[error("{0} does not exist in the workspace")]
    FileMissing(String),
    #[error("{0}")]
    Io(String),
    #[error(transparent)]
    Adapter(#[from] AdapterError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

impl RepairError {
    pub fn is_fatal(&self) -> bool {
        matches!(self, RepairError::Gateway(e) if e.is_fatal())
    }
}
