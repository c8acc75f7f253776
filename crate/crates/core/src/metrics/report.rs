//! Batch evaluation producing the full metrics report.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cloud::{chamfer, jsd, mmd_cov, DEFAULT_JSD_GRID};
use super::sequence::{acc_cmd_param, acc_total, exact_match, novel_score, DEFAULT_PARAM_TOLERANCE};
use super::text::text_metrics;
use super::MetricsError;
use crate::cad::CadModel;
use crate::codec;
use crate::geometry::{
    check_buildable, evaluate_model, read_cloud, sample_surface_points, CloudFormat, PointCloud,
    DEFAULT_RESOLUTION, DEFAULT_SAMPLE_COUNT,
};

/// One generated or reference sample. Any field may be missing.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalItem {
    pub id: String,
    #[serde(default)]
    pub model: Option<CadModel>,
    /// CAD code or SPCC text; parsed when `model` is absent.
    #[serde(default)]
    pub code: Option<String>,
    #[serde(default)]
    pub cloud: Option<PointCloud>,
    #[serde(default)]
    pub captions: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pairing {
    Aligned,
    Unaligned,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalBatch {
    pub generated: Vec<EvalItem>,
    pub reference: Vec<EvalItem>,
    pub pairing: Pairing,
}

impl EvalBatch {
    pub fn new(generated: Vec<EvalItem>, reference: Vec<EvalItem>, pairing: Pairing) -> Result<Self, MetricsError> {
        if pairing == Pairing::Aligned && generated.len() != reference.len() {
            return Err(MetricsError::Misaligned {
                generated: generated.len(),
                reference: reference.len(),
            });
        }
        Ok(Self {
            generated,
            reference,
            pairing,
        })
    }
}

#[derive(Debug, Clone)]
pub struct ReportOptions {
    pub tolerance: i64,
    pub jsd_grid: usize,
    pub resolution: usize,
    pub points: usize,
    pub seed: u64,
    pub training_hashes: Option<HashSet<String>>,
}

impl Default for ReportOptions {
    fn default() -> Self {
        Self {
            tolerance: DEFAULT_PARAM_TOLERANCE,
            jsd_grid: DEFAULT_JSD_GRID,
            resolution: DEFAULT_RESOLUTION,
            points: DEFAULT_SAMPLE_COUNT,
            seed: 0,
            training_hashes: None,
        }
    }
}

/// Every metric under its table name; `None` when the inputs do not
/// support it.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricValues {
    #[serde(rename = "COV")]
    pub cov: Option<f64>,
    #[serde(rename = "MMD")]
    pub mmd: Option<f64>,
    #[serde(rename = "JSD")]
    pub jsd: Option<f64>,
    #[serde(rename = "SR")]
    pub sr: Option<f64>,
    #[serde(rename = "Novel")]
    pub novel: Option<f64>,
    #[serde(rename = "ACC_cmd")]
    pub acc_cmd: Option<f64>,
    #[serde(rename = "ACC_param")]
    pub acc_param: Option<f64>,
    #[serde(rename = "ACC_T")]
    pub acc_t: Option<f64>,
    #[serde(rename = "MCD")]
    pub mcd: Option<f64>,
    #[serde(rename = "EM")]
    pub em: Option<f64>,
    #[serde(rename = "BLEU1")]
    pub bleu1: Option<f64>,
    #[serde(rename = "BLEU4")]
    pub bleu4: Option<f64>,
    #[serde(rename = "ROUGE_L")]
    pub rouge_l: Option<f64>,
}

impl MetricValues {
    /// Table scaling: every metric is reported ×100.
    pub fn scaled(&self) -> Self {
        let s = |v: Option<f64>| v.map(|x| x * 100.0);
        Self {
            cov: s(self.cov),
            mmd: s(self.mmd),
            jsd: s(self.jsd),
            sr: s(self.sr),
            novel: s(self.novel),
            acc_cmd: s(self.acc_cmd),
            acc_param: s(self.acc_param),
            acc_t: s(self.acc_t),
            mcd: s(self.mcd),
            em: s(self.em),
            bleu1: s(self.bleu1),
            bleu4: s(self.bleu4),
            rouge_l: s(self.rouge_l),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    #[serde(flatten)]
    pub scaled: MetricValues,
    pub raw: MetricValues,
    pub counts: BTreeMap<String, usize>,
    pub warnings: Vec<String>,
}

impl MetricsReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

struct Resolved {
    /// `None` when the item carries no model or code at all.
    model: Option<Result<CadModel, String>>,
    buildable: bool,
    cloud: Option<PointCloud>,
}

fn resolve(item: &EvalItem, opts: &ReportOptions) -> Resolved {
    let model = match (&item.model, &item.code) {
        (Some(m), _) => Some(Ok(m.clone())),
        (None, Some(text)) => Some(codec::parse(text).map(|d| d.model).map_err(|e| e.to_string())),
        (None, None) => None,
    };
    let built = match &model {
        Some(Ok(m)) => check_buildable(m, opts.resolution).ok,
        _ => false,
    };
    let cloud = item.cloud.clone().or_else(|| match &model {
        Some(Ok(m)) if built => {
            sample_surface_points(&evaluate_model(m, opts.resolution), opts.points, opts.seed).ok()
        }
        _ => None,
    });
    Resolved {
        model,
        buildable: built,
        cloud,
    }
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}

pub fn evaluate(batch: &EvalBatch, opts: &ReportOptions) -> Result<MetricsReport, MetricsError> {
    let gen: Vec<Resolved> = batch.generated.par_iter().map(|i| resolve(i, opts)).collect();
    let refs: Vec<Resolved> = batch.reference.par_iter().map(|i| resolve(i, opts)).collect();
    let mut raw = MetricValues::default();
    let mut warnings = Vec::new();

    let attempted: Vec<&Resolved> = gen.iter().filter(|r| r.model.is_some()).collect();
    if !attempted.is_empty() {
        raw.sr = Some(attempted.iter().filter(|r| r.buildable).count() as f64 / attempted.len() as f64);
    }
    let failures = gen
        .iter()
        .zip(&batch.generated)
        .filter_map(|(r, item)| match &r.model {
            Some(Err(e)) => Some(format!("{}: {e}", item.id)),
            _ => None,
        });
    warnings.extend(failures);

    let gen_clouds: Vec<PointCloud> = gen.iter().filter_map(|r| r.cloud.clone()).collect();
    let ref_clouds: Vec<PointCloud> = refs.iter().filter_map(|r| r.cloud.clone()).collect();
    if !gen_clouds.is_empty() && !ref_clouds.is_empty() {
        let mc = mmd_cov(&gen_clouds, &ref_clouds)?;
        raw.mmd = Some(mc.mmd);
        raw.cov = Some(mc.cov);
        raw.jsd = Some(jsd(&gen_clouds, &ref_clouds, opts.jsd_grid)?);
    } else {
        warnings.push("no point clouds on one side; COV, MMD and JSD skipped".into());
    }

    if let Some(train) = &opts.training_hashes {
        let models: Vec<CadModel> = gen
            .iter()
            .filter_map(|r| match &r.model {
                Some(Ok(m)) if r.buildable => Some(m.clone()),
                _ => None,
            })
            .collect();
        let nov = novel_score(&models, train);
        if nov.vacuous {
            warnings.push("no valid generated models; Novel reported as 0".into());
        }
        raw.novel = Some(nov.score);
    }

    if batch.pairing == Pairing::Aligned {
        let pairs: Vec<(&Resolved, &Resolved)> = gen.iter().zip(&refs).collect();
        let mut accs = Vec::new();
        let mut ems = Vec::new();
        let mut cds = Vec::new();
        let mut texts = Vec::new();
        for ((g, r), (gi, ri)) in pairs.iter().zip(batch.generated.iter().zip(&batch.reference)) {
            if let Some(Ok(gt)) = &r.model {
                match &g.model {
                    Some(Ok(pred)) => {
                        accs.push(acc_cmd_param(pred, gt, opts.tolerance));
                        ems.push(if exact_match(pred, gt) { 1.0 } else { 0.0 });
                    }
                    Some(Err(_)) => {
                        accs.push(super::Accuracy {
                            acc_cmd: 0.0,
                            acc_param: 0.0,
                        });
                        ems.push(0.0);
                    }
                    None => {}
                }
            }
            if let (Some(a), Some(b)) = (&g.cloud, &r.cloud) {
                cds.push(chamfer(a, b)?);
            }
            if let (Some(pred), false) = (gi.captions.first(), ri.captions.is_empty()) {
                let refs: Vec<&str> = ri.captions.iter().map(String::as_str).collect();
                texts.push(text_metrics(pred, &refs));
            }
        }
        raw.acc_cmd = mean(&accs.iter().map(|a| a.acc_cmd).collect::<Vec<_>>());
        raw.acc_param = mean(&accs.iter().map(|a| a.acc_param).collect::<Vec<_>>());
        raw.em = mean(&ems);
        raw.mcd = median(&mut cds);
        raw.bleu1 = mean(&texts.iter().map(|t| t.bleu1).collect::<Vec<_>>());
        raw.bleu4 = mean(&texts.iter().map(|t| t.bleu4).collect::<Vec<_>>());
        raw.rouge_l = mean(&texts.iter().map(|t| t.rouge_l).collect::<Vec<_>>());
        if let (Some(c), Some(p), Some(s)) = (raw.acc_cmd, raw.acc_param, raw.sr) {
            raw.acc_t = Some(acc_total(c, p, s)?);
        }
    }

    let counts = BTreeMap::from([
        ("generated".to_string(), batch.generated.len()),
        ("reference".to_string(), batch.reference.len()),
        ("generated_clouds".to_string(), gen_clouds.len()),
        ("reference_clouds".to_string(), ref_clouds.len()),
    ]);
    Ok(MetricsReport {
        scaled: raw.scaled(),
        raw,
        counts,
        warnings,
    })
}

const CODE_EXTENSIONS: [&str; 4] = ["py", "spcc", "cad", "txt"];

/// Reads a directory of samples grouped by file stem: `.json` models, code
/// files (`.py`, `.spcc`, `.cad`, `.txt`), `.xyz` clouds and `.caption`
/// files with one caption per line. Items are sorted by stem.
pub fn load_eval_dir(dir: &Path) -> Result<Vec<EvalItem>, MetricsError> {
    let io = |e: std::io::Error| MetricsError::Io(format!("{}: {e}", dir.display()));
    let mut items: BTreeMap<String, EvalItem> = BTreeMap::new();
    for entry in fs::read_dir(dir).map_err(io)? {
        let path = entry.map_err(io)?.path();
        let (Some(stem), Some(ext)) = (
            path.file_stem().and_then(|s| s.to_str()),
            path.extension().and_then(|s| s.to_str()),
        ) else {
            continue;
        };
        let item = items.entry(stem.to_string()).or_insert_with(|| EvalItem {
            id: stem.to_string(),
            ..EvalItem::default()
        });
        let read = || fs::read_to_string(&path).map_err(|e| MetricsError::Io(format!("{}: {e}", path.display())));
        match ext {
            "json" => {
                let text = read()?;
                match CadModel::from_json(&text) {
                    Ok(mut m) => {
                        if m.id.is_empty() {
                            m.id = stem.to_string();
                        }
                        item.model = Some(m);
                    }
                    // Kept as text so the failure counts against S_R.
                    Err(_) => item.code = Some(text),
                }
            }
            "xyz" => {
                let f = fs::File::open(&path).map_err(|e| MetricsError::Io(format!("{}: {e}", path.display())))?;
                item.cloud = Some(
                    read_cloud(f, CloudFormat::Xyz).map_err(|e| MetricsError::Io(format!("{}: {e}", path.display())))?,
                );
            }
            "caption" => {
                item.captions = read()?.lines().filter(|l| !l.trim().is_empty()).map(str::to_string).collect();
            }
            e if CODE_EXTENSIONS.contains(&e) => item.code = Some(read()?),
            _ => {}
        }
    }
    Ok(items.into_values().collect())
}
