//! Pretraining corpora, multitask instruction records, edit pairs,
//! similarity-grouped contexts and corpus deduplication.

mod corpus;
mod edit;
mod group;

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use corpus::{
    build_caption_records, build_completion_records, build_instruction_dataset, build_spcc_corpus,
    build_text2cad_records, completion_cut, sample_quota, CorpusBuild, DatasetOptions, InstructionBuild,
    DEFAULT_COMPLETION_RANGE,
};
pub use edit::{
    build_edit_records, remove_component, select_removable_component, Judge, Removal,
};
pub use group::{
    doc_id, embed_docs, group_contexts, ByteTokenEstimator, Context, EmbeddedDoc, EmbeddingClient,
    Grouping, OfflineImageEmbedder, TokenEstimator, DEFAULT_NEIGHBORS, DEFAULT_WINDOW,
};

use crate::annotate::{AnnotateError, ClientError};
use crate::cad::{canonical_hash, CadModel};
use crate::codec::{parse, CodecError, END_MARKER};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthError {
    #[error("no removable component: {0}")]
    NotRemovable(String),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Annotate(#[from] AnnotateError),
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error("invalid record: {0}")]
    InvalidRecord(String),
    #[error("configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Task {
    Text2CAD,
    Caption,
    Completion,
    Addition,
    AdditionStar,
    Deletion,
    DeletionStar,
}

impl Task {
    pub const ALL: [Task; 7] = [
        Task::Text2CAD,
        Task::Caption,
        Task::Completion,
        Task::Addition,
        Task::AdditionStar,
        Task::Deletion,
        Task::DeletionStar,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Task::Text2CAD => "Text2CAD",
            Task::Caption => "Caption",
            Task::Completion => "Completion",
            Task::Addition => "Addition",
            Task::AdditionStar => "AdditionStar",
            Task::Deletion => "Deletion",
            Task::DeletionStar => "DeletionStar",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.name().eq_ignore_ascii_case(s))
    }
}

/// One training example. The task instruction lives in `meta["instruction"]`
/// so that `input` and `output` are plain artifacts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstructionRecord {
    pub task: Task,
    pub input: String,
    pub output: String,
    pub source_id: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub meta: BTreeMap<String, String>,
}

impl InstructionRecord {
    pub fn new(task: Task, input: String, output: String, source_id: &str, instruction: &str) -> Self {
        let mut meta = BTreeMap::new();
        meta.insert("instruction".to_string(), instruction.to_string());
        Self {
            task,
            input,
            output,
            source_id: source_id.to_string(),
            meta,
        }
    }

    pub fn with_meta(mut self, key: &str, value: impl ToString) -> Self {
        self.meta.insert(key.to_string(), value.to_string());
        self
    }
}

fn annotation_lines(text: &str) -> usize {
    text.lines()
        .filter(|l| l.trim_start().starts_with('#') && l.trim() != END_MARKER)
        .count()
}

fn check_code_only(text: &str, what: &str) -> Result<(), SynthError> {
    parse(text).map_err(|e| SynthError::InvalidRecord(format!("{what}: {e}")))?;
    if annotation_lines(text) > 0 {
        return Err(SynthError::InvalidRecord(format!("{what} carries annotations")));
    }
    Ok(())
}

fn check_spcc(text: &str, what: &str) -> Result<(), SynthError> {
    parse(text)
        .map(|_| ())
        .map_err(|e| SynthError::InvalidRecord(format!("{what}: {e}")))
}

/// Task-specific shape checks.
pub fn validate_record(r: &InstructionRecord) -> Result<(), SynthError> {
    if r.input.trim().is_empty() || r.output.trim().is_empty() {
        return Err(SynthError::InvalidRecord("empty input or output".into()));
    }
    if r.source_id.is_empty() {
        return Err(SynthError::InvalidRecord("missing source id".into()));
    }
    match r.task {
        Task::Text2CAD => check_spcc(&r.output, "output"),
        Task::Caption => {
            check_code_only(&r.input, "input")?;
            if r.output.contains('\n') {
                return Err(SynthError::InvalidRecord("caption spans several lines".into()));
            }
            Ok(())
        }
        Task::Completion => {
            if !(r.output.starts_with(&r.input) && r.input.len() < r.output.len()) {
                return Err(SynthError::InvalidRecord("input is not a strict prefix of output".into()));
            }
            if !r.input.ends_with('\n') {
                return Err(SynthError::InvalidRecord("prefix does not end at a line boundary".into()));
            }
            check_spcc(&r.output, "output")
        }
        Task::Addition | Task::Deletion => {
            check_code_only(&r.input, "input")?;
            check_code_only(&r.output, "output")
        }
        Task::AdditionStar | Task::DeletionStar => {
            check_spcc(&r.input, "input")?;
            check_spcc(&r.output, "output")
        }
    }
}

pub fn records_jsonl(records: &[InstructionRecord]) -> String {
    crate::annotate::to_jsonl(records)
}

/// Outcome of [`dedup_corpus`]: survivors in input order and the reason
/// each other model was dropped.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Dedup {
    pub kept: Vec<CadModel>,
    pub removed: Vec<(String, String)>,
}

/// A single pair with at most one loop of at most four curves, e.g. a
/// plain box or cylinder.
pub fn is_trivial(model: &CadModel) -> bool {
    model.pairs.len() <= 1 && model.loop_count() <= 1 && model.curve_count() <= 4
}

/// Drops trivial models and exact duplicates by canonical hash; the first
/// occurrence survives.
pub fn dedup_corpus(models: Vec<CadModel>) -> Dedup {
    let mut seen = HashSet::new();
    let mut out = Dedup::default();
    for m in models {
        if is_trivial(&m) {
            out.removed.push((m.id.clone(), "trivial".into()));
        } else if !seen.insert(canonical_hash(&m)) {
            out.removed.push((m.id.clone(), "duplicate".into()));
        } else {
            out.kept.push(m);
        }
    }
    out
}
