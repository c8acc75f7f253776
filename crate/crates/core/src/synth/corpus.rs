//! Annotated corpora and the Text2CAD, Caption and Completion records, plus
//! assembly of the full multitask dataset.

use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::edit::{build_edit_records, select_removable_component, Judge};
use super::{validate_record, InstructionRecord, SynthError, Task};
use crate::annotate::AnnotationRecord;
use crate::cad::CadModel;
use crate::codec::{DocMode, SpccDocument};

pub const DEFAULT_COMPLETION_RANGE: (f64, f64) = (0.30, 0.50);

const TEXT2CAD_INSTRUCTION: &str = "Generate the SPCC code of the CAD model described below.";
const CAPTION_INSTRUCTION: &str = "Describe the CAD model defined by the following code.";
const COMPLETION_INSTRUCTION: &str = "Complete the following partial SPCC code.";

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CorpusBuild {
    pub docs: Vec<SpccDocument>,
    /// `(model id, reason)` for every model left out.
    pub skipped: Vec<(String, String)>,
}

impl CorpusBuild {
    /// The fully annotated document of each model, one per model.
    pub fn tilde_docs(&self) -> impl Iterator<Item = &SpccDocument> {
        self.docs.iter().filter(|d| d.mode == DocMode::Tilde)
    }
}

/// Two documents (abstract plus detailed, and abstract only) per
/// multi-component model and one per single-component model, in id order.
pub fn build_spcc_corpus(models: &[CadModel], annotations: &[AnnotationRecord]) -> CorpusBuild {
    let by_id: HashMap<&str, &AnnotationRecord> = annotations.iter().map(|a| (a.id.as_str(), a)).collect();
    let mut sorted: Vec<&CadModel> = models.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    let mut out = CorpusBuild::default();
    for model in sorted {
        let Some(record) = by_id.get(model.id.as_str()) else {
            log::warn!("{}: no annotations, skipped", model.id);
            out.skipped.push((model.id.clone(), "missing annotations".into()));
            continue;
        };
        let tilde = SpccDocument::from_parts(
            model.clone(),
            record.spans.clone(),
            record.annotations.clone(),
            DocMode::Tilde,
        );
        match tilde {
            Ok(doc) => {
                if doc.component_count() > 1 {
                    let dot = doc.with_mode(DocMode::Dot).expect("dot is a subset of tilde");
                    out.docs.push(doc);
                    out.docs.push(dot);
                } else {
                    out.docs.push(doc);
                }
            }
            Err(e) => {
                log::warn!("{}: {e}, skipped", model.id);
                out.skipped.push((model.id.clone(), e.to_string()));
            }
        }
    }
    out
}

/// Byte offset of the prefix cut for a document of `text` at drawn ratio
/// `r`: the line boundary nearest `r`, kept inside `range` at line
/// granularity. `None` when no line count in range leaves a strict prefix.
pub fn completion_cut(text: &str, r: f64, range: (f64, f64)) -> Option<usize> {
    let ends: Vec<usize> = text.match_indices('\n').map(|(i, _)| i + 1).collect();
    let lines = ends.len() + usize::from(!text.ends_with('\n') && !text.is_empty());
    let n = lines as f64;
    let lo = (range.0 * n - 1e-9).ceil().max(1.0) as usize;
    let hi = ((range.1 * n + 1e-9).floor() as usize).min(lines.saturating_sub(1));
    if lo > hi {
        return None;
    }
    let k = ((r * n).round() as usize).clamp(lo, hi);
    Some(ends[k - 1])
}

/// Prefix-to-document records: each input is the document cut at a line
/// boundary near a seeded ratio drawn uniformly from `range`.
pub fn build_completion_records(
    docs: &[&SpccDocument],
    range: (f64, f64),
    seed: u64,
) -> Result<Vec<InstructionRecord>, SynthError> {
    if !(0.0 < range.0 && range.0 <= range.1 && range.1 < 1.0) {
        return Err(SynthError::Config(format!("completion range {range:?} must lie inside (0, 1)")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(docs.len());
    for doc in docs {
        let r = rng.random_range(range.0..=range.1);
        let text = doc.to_text();
        let Some(cut) = completion_cut(&text, r, range) else {
            log::warn!("{}: too short for a completion record", doc.model.id);
            continue;
        };
        let prefix_lines = text[..cut].lines().count();
        let lines = text.lines().count();
        out.push(
            InstructionRecord::new(Task::Completion, text[..cut].to_string(), text, &doc.model.id, COMPLETION_INSTRUCTION)
                .with_meta("prefix_lines", prefix_lines)
                .with_meta("lines", lines),
        );
    }
    Ok(out)
}

fn abstract_text(doc: &SpccDocument) -> Option<&str> {
    match &doc.annotations.global {
        Some(g) => Some(&g.abstract_text),
        None => doc.annotations.components.first().map(|c| c.description.as_str()),
    }
}

/// Description-to-SPCC records from a fully annotated document: the
/// abstract description targets the abstract-only document and the
/// detailed description the full one.
pub fn build_text2cad_records(doc: &SpccDocument) -> Result<Vec<InstructionRecord>, SynthError> {
    let full = doc.with_mode(DocMode::Tilde)?;
    let id = &doc.model.id;
    let mut out = Vec::new();
    match &full.annotations.global {
        Some(g) => {
            out.push(
                InstructionRecord::new(
                    Task::Text2CAD,
                    g.abstract_text.clone(),
                    full.with_mode(DocMode::Dot)?.to_text(),
                    id,
                    TEXT2CAD_INSTRUCTION,
                )
                .with_meta("level", "abstract"),
            );
            if let Some(d) = &g.detailed {
                out.push(
                    InstructionRecord::new(Task::Text2CAD, d.clone(), full.to_text(), id, TEXT2CAD_INSTRUCTION)
                        .with_meta("level", "detailed"),
                );
            }
        }
        None => {
            if let Some(c) = full.annotations.components.first() {
                out.push(
                    InstructionRecord::new(
                        Task::Text2CAD,
                        c.description.clone(),
                        full.to_text(),
                        id,
                        TEXT2CAD_INSTRUCTION,
                    )
                    .with_meta("level", "component"),
                );
            }
        }
    }
    Ok(out)
}

/// Plain code to its abstract description.
pub fn build_caption_records(doc: &SpccDocument) -> Result<Vec<InstructionRecord>, SynthError> {
    let Some(caption) = abstract_text(doc) else {
        return Ok(Vec::new());
    };
    let code = doc.with_mode(DocMode::CodeOnly)?.to_text();
    Ok(vec![InstructionRecord::new(
        Task::Caption,
        code,
        caption.to_string(),
        &doc.model.id,
        CAPTION_INSTRUCTION,
    )])
}

/// Keeps at most `quota` records per task, chosen by a seeded draw; order
/// within each task is preserved.
pub fn sample_quota(records: Vec<InstructionRecord>, quota: usize, seed: u64) -> Vec<InstructionRecord> {
    let mut by_task: BTreeMap<Task, Vec<InstructionRecord>> = BTreeMap::new();
    for r in records {
        by_task.entry(r.task).or_default().push(r);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for (_, mut list) in by_task {
        if list.len() > quota {
            let mut keep = rand::seq::index::sample(&mut rng, list.len(), quota).into_vec();
            keep.sort_unstable();
            let mut slots: Vec<Option<InstructionRecord>> = list.into_iter().map(Some).collect();
            list = keep.into_iter().map(|i| slots[i].take().expect("distinct indices")).collect();
        }
        out.extend(list);
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetOptions {
    pub completion_range: (f64, f64),
    pub seed: u64,
    /// Records kept per task; `None` keeps everything.
    pub quota: Option<usize>,
}

impl Default for DatasetOptions {
    fn default() -> Self {
        Self {
            completion_range: DEFAULT_COMPLETION_RANGE,
            seed: 0,
            quota: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct InstructionBuild {
    pub records: Vec<InstructionRecord>,
    /// `(model id, reason)` for models without edit records or without any
    /// records at all.
    pub excluded: Vec<(String, String)>,
    pub counts: BTreeMap<Task, usize>,
}

/// All seven tasks over the annotated models, validated, in task order.
pub fn build_instruction_dataset(
    models: &[CadModel],
    annotations: &[AnnotationRecord],
    judge: Judge<'_>,
    opts: &DatasetOptions,
) -> Result<InstructionBuild, SynthError> {
    let corpus = build_spcc_corpus(models, annotations);
    let docs: Vec<&SpccDocument> = corpus.tilde_docs().collect();
    let mut out = InstructionBuild {
        excluded: corpus.skipped.clone(),
        ..InstructionBuild::default()
    };
    let mut records = Vec::new();
    for doc in &docs {
        records.extend(build_text2cad_records(doc)?);
        records.extend(build_caption_records(doc)?);
    }
    records.extend(build_completion_records(&docs, opts.completion_range, opts.seed)?);
    let edits: Vec<_> = docs
        .par_iter()
        .filter(|d| d.component_count() > 1)
        .map(|d| {
            let r = select_removable_component(d, judge).and_then(|removal| build_edit_records(d, &removal));
            (d.model.id.clone(), r)
        })
        .collect();
    for (id, result) in edits {
        match result {
            Ok(four) => records.extend(four),
            Err(e @ (SynthError::NotRemovable(_) | SynthError::Annotate(_) | SynthError::Client(_))) => {
                log::info!("{id}: no edit records ({e})");
                out.excluded.push((id, e.to_string()));
            }
            Err(e) => return Err(e),
        }
    }
    records.sort_by_key(|r| r.task);
    if let Some(q) = opts.quota {
        records = sample_quota(records, q, opts.seed);
    }
    for r in &records {
        validate_record(r).map_err(|e| SynthError::InvalidRecord(format!("{} {}: {e}", r.task.name(), r.source_id)))?;
        *out.counts.entry(r.task).or_default() += 1;
    }
    out.records = records;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn record(model: &CadModel) -> AnnotationRecord {
        let spans: Vec<_> = crate::segment::segment(model, 3).into_iter().map(|c| c.pairs).collect();
        let mut annotations = fixtures::annotations_for(model, spans.len());
        if spans.len() == 1 {
            annotations.global = None;
        }
        AnnotationRecord {
            id: model.id.clone(),
            spans,
            annotations,
        }
    }

    #[test]
    fn corpus_counts() {
        let models = vec![fixtures::three_part_model("a"), fixtures::plate_with_hole("b"), fixtures::unit_cube("c")];
        let ann = vec![record(&models[0]), record(&models[1])];
        let c = build_spcc_corpus(&models, &ann);
        assert_eq!(c.docs.len(), 3);
        assert_eq!(c.skipped, vec![("c".to_string(), "missing annotations".to_string())]);
        let (tilde, dot) = (c.docs[0].to_text(), c.docs[1].to_text());
        assert!(tilde.contains("# Details:") && !dot.contains("# Details:"));
        assert!(c.docs.iter().all(|d| d.to_text().ends_with("# End of code\n")));
    }

    #[test]
    fn completion_cut_snaps_to_lines() {
        let text: String = (0..100).map(|i| format!("line {i}\n")).collect();
        let cut = completion_cut(&text, 0.4, DEFAULT_COMPLETION_RANGE).unwrap();
        assert_eq!(text[..cut].lines().count(), 40);
        let cut = completion_cut(&text, 0.3049, DEFAULT_COMPLETION_RANGE).unwrap();
        assert_eq!(text[..cut].lines().count(), 30);
        // Five lines: only two lines lie in [0.3, 0.5].
        let short = "a\nb\nc\nd\ne\n";
        assert_eq!(completion_cut(short, 0.3, DEFAULT_COMPLETION_RANGE), Some(4));
        assert_eq!(completion_cut("a\nb\nc\n", 0.4, DEFAULT_COMPLETION_RANGE), Some(2));
        assert_eq!(completion_cut("a\n", 0.4, DEFAULT_COMPLETION_RANGE), None);
    }

    #[test]
    fn completion_is_seeded_prefix() {
        let models: Vec<_> = (0..20).map(fixtures::synthetic_part).collect();
        let ann: Vec<_> = models.iter().map(record).collect();
        let corpus = build_spcc_corpus(&models, &ann);
        let docs: Vec<_> = corpus.tilde_docs().collect();
        let a = build_completion_records(&docs, DEFAULT_COMPLETION_RANGE, 7).unwrap();
        let b = build_completion_records(&docs, DEFAULT_COMPLETION_RANGE, 7).unwrap();
        assert_eq!(a, b);
        for r in &a {
            assert!(r.output.starts_with(&r.input) && r.input.len() < r.output.len());
            let ratio = r.input.lines().count() as f64 / r.output.lines().count() as f64;
            assert!((0.3..=0.5).contains(&ratio), "{ratio}");
        }
        assert!(build_completion_records(&docs, (0.0, 0.5), 0).is_err());
    }

    #[test]
    fn quota_per_task() {
        let recs: Vec<_> = (0..10)
            .map(|i| InstructionRecord::new(if i < 7 { Task::Caption } else { Task::Completion }, "x".into(), "y".into(), &i.to_string(), ""))
            .collect();
        let kept = sample_quota(recs.clone(), 3, 1);
        assert_eq!(kept.iter().filter(|r| r.task == Task::Caption).count(), 3);
        assert_eq!(kept.iter().filter(|r| r.task == Task::Completion).count(), 3);
        assert_eq!(kept, sample_quota(recs, 3, 1));
    }

    #[test]
    fn dataset_has_every_task() {
        let models: Vec<_> = (0..12).map(fixtures::synthetic_part).collect();
        let ann: Vec<_> = models.iter().map(record).collect();
        let build = build_instruction_dataset(&models, &ann, Judge::Heuristic, &DatasetOptions::default()).unwrap();
        for t in Task::ALL {
            assert!(build.counts.get(&t).copied().unwrap_or(0) > 0, "{t:?}");
        }
        let capped = build_instruction_dataset(
            &models,
            &ann,
            Judge::Heuristic,
            &DatasetOptions {
                quota: Some(2),
                ..DatasetOptions::default()
            },
        )
        .unwrap();
        assert!(capped.counts.values().all(|&c| c <= 2));
    }
}
