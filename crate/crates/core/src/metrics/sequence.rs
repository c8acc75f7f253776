//! Sequence-level metrics: command/parameter accuracy, ACC_T, exact match
//! and novelty.

use std::collections::HashSet;

use serde::Serialize;

use super::MetricsError;
use crate::cad::{canonical_hash, CadModel, Curve, SCALE_MAX_MICROS};

pub const DEFAULT_PARAM_TOLERANCE: i64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CommandKind {
    LoopStart,
    Line,
    Arc,
    Circle,
    Extrude,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Param {
    /// Quantized value compared within a tolerance.
    Level(i64),
    /// Categorical value compared exactly.
    Choice(i64),
}

impl Param {
    fn matches(self, other: Param, tol: i64) -> bool {
        match (self, other) {
            (Param::Level(a), Param::Level(b)) => (a - b).abs() <= tol,
            (Param::Choice(a), Param::Choice(b)) => a == b,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Command {
    pub kind: CommandKind,
    pub params: Vec<Param>,
}

/// Scale on the same 256-level lattice as the other parameters.
fn scale_level(micros: i64) -> i64 {
    (micros as f64 * 255.0 / SCALE_MAX_MICROS as f64).round() as i64
}

/// Flattened command stream: a start marker per loop, one command per curve
/// and one per extrusion.
pub fn command_stream(model: &CadModel) -> Vec<Command> {
    use Param::{Choice, Level};
    let mut out = Vec::with_capacity(model.command_count());
    for pair in &model.pairs {
        for lp in &pair.sketch.loops {
            out.push(Command {
                kind: CommandKind::LoopStart,
                params: Vec::new(),
            });
            for c in &lp.curves {
                out.push(match *c {
                    Curve::Line { end } => Command {
                        kind: CommandKind::Line,
                        params: vec![Level(end.x.into()), Level(end.y.into())],
                    },
                    Curve::Arc { end, sweep, ccw } => Command {
                        kind: CommandKind::Arc,
                        params: vec![
                            Level(end.x.into()),
                            Level(end.y.into()),
                            Level(sweep.into()),
                            Choice(ccw.into()),
                        ],
                    },
                    Curve::Circle { center, radius } => Command {
                        kind: CommandKind::Circle,
                        params: vec![
                            Level(center.x.into()),
                            Level(center.y.into()),
                            Level(radius.into()),
                        ],
                    },
                });
            }
        }
        let e = &pair.extrude;
        let mut params: Vec<Param> = e.angles.iter().chain(&e.origin).map(|&v| Level(v.into())).collect();
        params.extend([
            Level(scale_level(e.scale.micros())),
            Level(e.dist1.into()),
            Level(e.dist2.into()),
            Choice(e.op as i64),
            Choice(e.extent as i64),
        ]);
        out.push(Command {
            kind: CommandKind::Extrude,
            params,
        });
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Accuracy {
    pub acc_cmd: f64,
    pub acc_param: f64,
}

/// Position-wise command accuracy over the longer stream, and parameter
/// accuracy over all ground-truth parameters, counting only positions whose
/// command types agree.
pub fn acc_cmd_param(pred: &CadModel, gt: &CadModel, tol: i64) -> Accuracy {
    let (p, g) = (command_stream(pred), command_stream(gt));
    let longest = p.len().max(g.len());
    if longest == 0 {
        return Accuracy {
            acc_cmd: 1.0,
            acc_param: 1.0,
        };
    }
    let mut cmd_hits = 0usize;
    let mut param_hits = 0usize;
    for (a, b) in p.iter().zip(&g) {
        if a.kind == b.kind {
            cmd_hits += 1;
            param_hits += a
                .params
                .iter()
                .zip(&b.params)
                .filter(|(x, y)| x.matches(**y, tol))
                .count();
        }
    }
    let gt_params: usize = g.iter().map(|c| c.params.len()).sum();
    let acc_cmd = cmd_hits as f64 / longest as f64;
    Accuracy {
        acc_cmd,
        acc_param: if gt_params == 0 {
            acc_cmd
        } else {
            param_hits as f64 / gt_params as f64
        },
    }
}

/// ½((ACC_cmd + ACC_param)/2 + S_R), on fractions or on percentages.
pub fn acc_total(acc_cmd: f64, acc_param: f64, s_r: f64) -> Result<f64, MetricsError> {
    let values = [acc_cmd, acc_param, s_r];
    let fractions = values.iter().all(|v| (0.0..=1.0).contains(v));
    let percents = values.iter().all(|v| *v > 1.0 && *v <= 100.0);
    if !(fractions || percents) {
        return Err(MetricsError::MixedScale(values.to_vec()));
    }
    Ok(0.5 * ((acc_cmd + acc_param) / 2.0 + s_r))
}

pub fn exact_match(pred: &CadModel, gt: &CadModel) -> bool {
    canonical_hash(pred) == canonical_hash(gt)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Novelty {
    pub score: f64,
    /// Set when there was nothing to score.
    pub vacuous: bool,
}

/// Share of generated models whose canonical hash is not in the training set.
pub fn novel_score(generated: &[CadModel], training_hashes: &HashSet<String>) -> Novelty {
    if generated.is_empty() {
        log::warn!("novelty of an empty generated set is reported as 0");
        return Novelty {
            score: 0.0,
            vacuous: true,
        };
    }
    let novel = generated
        .iter()
        .filter(|m| !training_hashes.contains(&canonical_hash(m)))
        .count();
    Novelty {
        score: novel as f64 / generated.len() as f64,
        vacuous: false,
    }
}
