//! Evaluation metrics over point clouds, command sequences and captions.

mod cloud;
mod report;
mod sequence;
mod text;

use thiserror::Error;

pub use cloud::{chamfer, chamfer_matrix, jsd, mmd_cov, MmdCov, DEFAULT_JSD_GRID, KDTREE_THRESHOLD};
pub use report::{
    evaluate, load_eval_dir, EvalBatch, EvalItem, MetricValues, MetricsReport, Pairing, ReportOptions,
};
pub use sequence::{
    acc_cmd_param, acc_total, command_stream, exact_match, novel_score, Accuracy, Command, CommandKind,
    Novelty, Param, DEFAULT_PARAM_TOLERANCE,
};
pub use text::{bleu, rouge_l, text_metrics, tokenize, TextScores};

use crate::cad::CadModel;
use crate::geometry::check_text_buildable;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("empty {0}")]
    Empty(&'static str),
    #[error("inputs mix fractions and percentages: {0:?}")]
    MixedScale(Vec<f64>),
    #[error("aligned pairing needs equal lengths ({generated} generated, {reference} reference)")]
    Misaligned { generated: usize, reference: usize },
    #[error("{0}")]
    Io(String),
}

/// Share of texts that parse, validate and realize a non-empty solid.
pub fn success_ratio<S: AsRef<str> + Sync>(texts: &[S], resolution: usize) -> Option<f64> {
    use rayon::prelude::*;
    if texts.is_empty() {
        return None;
    }
    let ok = texts
        .par_iter()
        .filter(|t| check_text_buildable(t.as_ref(), resolution).ok)
        .count();
    Some(ok as f64 / texts.len() as f64)
}

/// Same as [`success_ratio`] for already-structured models.
pub fn model_success_ratio(models: &[CadModel], resolution: usize) -> Option<f64> {
    use rayon::prelude::*;
    if models.is_empty() {
        return None;
    }
    let ok = models
        .par_iter()
        .filter(|m| crate::geometry::check_buildable(m, resolution).ok)
        .count();
    Some(ok as f64 / models.len() as f64)
}
