//! Two-stage hierarchical annotation of models through a chat-with-images
//! service: one description per component, then a global abstract,
//! detailed description and component names.

mod client;
mod prompt;

use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use client::{
    CallCounts, ClientError, ContentPart, Message, OfflineVlmClient, RetryPolicy, Retrying,
    ScriptedVlmClient, VlmClient, VlmRequest, VlmResponse,
};
pub use prompt::{
    build_judge_request, build_stage1_request, build_stage2_request, complexity_level,
    parse_judge_response, parse_stage1_response, parse_stage2_response, ExampleBank, Exemplar,
    JudgeReply, Stage1Extras, Stage2Reply, DEFAULT_COMPLEXITY_THRESHOLDS, JUDGE_PROMPT, LEVELS,
    PROMPT1, PROMPT2_DESCRIPTIONS, PROMPT2_INTRO, PROMPT2_TASK,
};

use crate::cad::{canonical_hash, CadModel};
use crate::codec::{Annotations, ComponentAnnotation, GlobalAnnotation};
use crate::geometry::{render_sketch, GeometryError, RenderOptions, Scene};
use crate::segment::{segment, DEFAULT_THRESHOLD};

pub const DEFAULT_JOBS: usize = 8;
pub const DEFAULT_MODEL_NAME: &str = "gpt-4o";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnnotateError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("structure: {0}")]
    Structural(String),
    #[error("unparseable reply ({message})")]
    Parse { message: String, raw: String },
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error("render: {0}")]
    Render(#[from] GeometryError),
}

#[derive(Debug, Clone)]
pub struct AnnotateOptions {
    pub model_name: String,
    pub thresholds: [usize; 4],
    pub render: RenderOptions,
    pub retry: RetryPolicy,
    /// Extra attempts after an unparseable reply.
    pub reasks: usize,
    /// Requests in flight across the whole corpus.
    pub jobs: usize,
}

impl Default for AnnotateOptions {
    fn default() -> Self {
        Self {
            model_name: DEFAULT_MODEL_NAME.into(),
            thresholds: DEFAULT_COMPLEXITY_THRESHOLDS,
            render: RenderOptions::default(),
            retry: RetryPolicy::default(),
            reasks: 1,
            jobs: DEFAULT_JOBS,
        }
    }
}

/// One request/reply round trip, kept for audit. Images are logged by
/// SHA-256 digest of their base64 payload.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exchange {
    pub model_id: String,
    pub stage: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub component: Option<usize>,
    pub attempt: usize,
    pub prompt: String,
    pub images: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub response: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuarantineRecord {
    pub model_id: String,
    pub reason: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub raw: Option<String>,
}

impl QuarantineRecord {
    fn new(model_id: &str, error: &AnnotateError) -> Self {
        Self {
            model_id: model_id.to_string(),
            reason: error.to_string(),
            raw: match error {
                AnnotateError::Parse { raw, .. } => Some(raw.clone()),
                _ => None,
            },
        }
    }
}

/// Annotations of one model together with the component partition they
/// describe.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub id: String,
    pub spans: Vec<Range<usize>>,
    pub annotations: Annotations,
}

/// Stable 64-bit key derived from the model's canonical hash.
pub fn model_key(model: &CadModel) -> u64 {
    u64::from_str_radix(&canonical_hash(model)[..16], 16).expect("hex digest")
}

fn image_digests(request: &VlmRequest) -> Vec<String> {
    request
        .images()
        .iter()
        .map(|b64| hex::encode(Sha256::digest(b64.as_bytes())))
        .collect()
}

/// Sends `request`, parsing the reply; an unparseable reply is asked again
/// up to `reasks` times.
fn ask<T>(
    client: &dyn VlmClient,
    request: &VlmRequest,
    reasks: usize,
    template: &Exchange,
    log: &mut Vec<Exchange>,
    parse: impl Fn(&str) -> Result<T, AnnotateError>,
) -> Result<T, AnnotateError> {
    let images = image_digests(request);
    let prompt = request.text();
    let mut attempt = 0;
    loop {
        let mut entry = Exchange {
            attempt,
            prompt: prompt.clone(),
            images: images.clone(),
            ..template.clone()
        };
        let reply = client.complete(request);
        match &reply {
            Ok(text) => entry.response = Some(text.clone()),
            Err(e) => entry.error = Some(e.to_string()),
        }
        log.push(entry);
        match parse(&reply?) {
            Err(e @ AnnotateError::Parse { .. }) if attempt < reasks => {
                log::warn!("{}: {e}; asking again", template.model_id);
                attempt += 1;
            }
            other => return other,
        }
    }
}

/// Annotates one model. Exchanges are appended to `log` whether or not the
/// model succeeds.
pub fn annotate_model(
    model: &CadModel,
    client: &dyn VlmClient,
    bank: &ExampleBank,
    opts: &AnnotateOptions,
    log: &mut Vec<Exchange>,
) -> Result<AnnotationRecord, AnnotateError> {
    let level = complexity_level(model, &opts.thresholds)?;
    let key = model_key(model);
    let components = segment(model, DEFAULT_THRESHOLD);
    let scene = Scene::with_components(model, components.clone(), opts.render)?;
    let retrying = Retrying::new(client, opts.retry);
    let base = Exchange {
        model_id: model.id.clone(),
        stage: String::new(),
        component: None,
        attempt: 0,
        prompt: String::new(),
        images: Vec::new(),
        response: None,
        error: None,
    };

    let stage1: Vec<(Result<String, AnnotateError>, Vec<Exchange>)> = components
        .par_iter()
        .enumerate()
        .map(|(i, component)| {
            let mut local = Vec::new();
            let result = (|| {
                let sketch = render_sketch(&component.representative.sketch, opts.render.size).to_png();
                let view = scene.component_view(i)?.to_png();
                let request = build_stage1_request(
                    &opts.model_name,
                    &Stage1Extras::of(component),
                    bank.pick(level, 1, key.wrapping_add(i as u64)),
                    &sketch,
                    &view,
                );
                let template = Exchange {
                    stage: "stage1".into(),
                    component: Some(i),
                    ..base.clone()
                };
                ask(&retrying, &request, opts.reasks, &template, &mut local, parse_stage1_response)
            })();
            (result, local)
        })
        .collect();
    let mut descriptions = Vec::with_capacity(stage1.len());
    let mut first_error = None;
    for (result, exchanges) in stage1 {
        log.extend(exchanges);
        match result {
            Ok(d) => descriptions.push(d),
            Err(e) => {
                first_error.get_or_insert(e);
            }
        }
    }
    if let Some(e) = first_error {
        return Err(e);
    }

    let spans = components.iter().map(|c| c.pairs.clone()).collect();
    if components.len() == 1 {
        return Ok(AnnotationRecord {
            id: model.id.clone(),
            spans,
            annotations: Annotations {
                global: None,
                components: vec![ComponentAnnotation::new(None, &descriptions[0])],
            },
        });
    }

    let full = scene.full_view().to_png();
    let outlines = (0..components.len())
        .map(|i| scene.outline_view(i).map(|img| img.to_png()))
        .collect::<Result<Vec<_>, _>>()?;
    let request = build_stage2_request(
        &opts.model_name,
        &descriptions,
        &full,
        &outlines,
        bank.pick(level, 2, key),
    )?;
    let template = Exchange {
        stage: "stage2".into(),
        ..base
    };
    let n = components.len();
    let reply = ask(&retrying, &request, opts.reasks, &template, log, |t| {
        parse_stage2_response(t, n)
    })?;
    Ok(AnnotationRecord {
        id: model.id.clone(),
        spans,
        annotations: Annotations {
            global: Some(GlobalAnnotation::new(&reply.abstract_text, Some(&reply.detailed))),
            components: reply
                .names
                .iter()
                .zip(&descriptions)
                .map(|(name, d)| ComponentAnnotation::new(Some(name), d))
                .collect(),
        },
    })
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusAnnotation {
    pub annotated: Vec<AnnotationRecord>,
    pub quarantine: Vec<QuarantineRecord>,
    pub exchanges: Vec<Exchange>,
}

impl CorpusAnnotation {
    pub fn exchanges_jsonl(&self) -> String {
        to_jsonl(&self.exchanges)
    }

    pub fn annotations_jsonl(&self) -> String {
        to_jsonl(&self.annotated)
    }

    pub fn quarantine_jsonl(&self) -> String {
        to_jsonl(&self.quarantine)
    }
}

pub fn to_jsonl<T: Serialize>(items: &[T]) -> String {
    items
        .iter()
        .map(|x| serde_json::to_string(x).expect("record serializes") + "\n")
        .collect()
}

/// Reads the `AnnotationRecord` lines written by [`CorpusAnnotation::annotations_jsonl`].
pub fn read_annotations_jsonl(text: &str) -> Result<Vec<AnnotationRecord>, AnnotateError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map_err(|e| AnnotateError::Config(format!("annotations line {}: {e}", i + 1)))
        })
        .collect()
}

/// Annotates every model on a pool of `opts.jobs` workers. A failing model
/// is quarantined and the rest continue; output order follows input order.
pub fn annotate_corpus(
    models: &[CadModel],
    client: &dyn VlmClient,
    bank: &ExampleBank,
    opts: &AnnotateOptions,
) -> Result<CorpusAnnotation, AnnotateError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs.max(1))
        .build()
        .map_err(|e| AnnotateError::Config(e.to_string()))?;
    let results: Vec<_> = pool.install(|| {
        models
            .par_iter()
            .map(|m| {
                let mut log = Vec::new();
                let result = annotate_model(m, client, bank, opts, &mut log);
                (m.id.as_str(), result, log)
            })
            .collect()
    });
    let mut out = CorpusAnnotation::default();
    for (id, result, log) in results {
        out.exchanges.extend(log);
        match result {
            Ok(record) => out.annotated.push(record),
            Err(e) => {
                log::warn!("quarantined {id}: {e}");
                out.quarantine.push(QuarantineRecord::new(id, &e));
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{DocMode, SpccDocument};
    use crate::fixtures;
    use std::time::Duration;

    fn opts() -> AnnotateOptions {
        AnnotateOptions {
            render: RenderOptions {
                size: 96,
                resolution: 24,
                ..RenderOptions::default()
            },
            retry: RetryPolicy {
                base_delay: Duration::ZERO,
                ..RetryPolicy::default()
            },
            jobs: 2,
            ..AnnotateOptions::default()
        }
    }

    #[test]
    fn single_component_skips_stage2() {
        let client = OfflineVlmClient::new();
        let mut log = Vec::new();
        let rec = annotate_model(&fixtures::unit_cube("c"), &client, &ExampleBank::builtin(), &opts(), &mut log)
            .unwrap();
        assert!(rec.annotations.global.is_none());
        assert_eq!(rec.annotations.components.len(), 1);
        assert_eq!(client.calls.snapshot(), (1, 0, 0));
        assert_eq!(log.len(), 1);
        assert_eq!(log[0].images.len(), 2);
        assert!(rec.annotations.components[0].description.contains("upwards"));
    }

    #[test]
    fn multi_component_counts() {
        let client = OfflineVlmClient::new();
        let model = fixtures::three_part_model("t");
        let mut log = Vec::new();
        let rec = annotate_model(&model, &client, &ExampleBank::builtin(), &opts(), &mut log).unwrap();
        assert_eq!(client.calls.snapshot(), (3, 1, 0));
        assert_eq!(rec.annotations.components.len(), 3);
        assert!(rec.annotations.global.as_ref().unwrap().detailed.is_some());
        assert_eq!(rec.annotations.components[2].name.as_deref(), Some("Module 3"));
        for e in &log {
            assert_eq!(e.prompt.matches("Example 1:").count(), 1);
            assert_eq!(e.prompt.matches("Example 2:").count(), 1);
        }
        assert_eq!(log.last().unwrap().images.len(), 4);
        let doc = SpccDocument::from_parts(model, rec.spans, rec.annotations, DocMode::Tilde).unwrap();
        assert_eq!(doc.component_count(), 3);
    }

    #[test]
    fn stage1_newlines_are_sanitized() {
        let client = ScriptedVlmClient::new([Ok("A plate\n\nwith  a hole".to_string())]);
        let mut log = Vec::new();
        let rec = annotate_model(&fixtures::unit_cube("c"), &client, &ExampleBank::builtin(), &opts(), &mut log)
            .unwrap();
        assert_eq!(rec.annotations.components[0].description, "A plate with a hole");
    }

    #[test]
    fn malformed_twice_is_quarantined() {
        let models = vec![fixtures::plate_with_cut_hole("bad"), fixtures::unit_cube("good")];
        // Stage 1 of "bad" succeeds (two components), both stage-2 replies are malformed.
        let client = ScriptedVlmClient::new([
            Ok("first".to_string()),
            Ok("second".to_string()),
            Ok("only one line".to_string()),
            Ok("still\ntwo".to_string()),
        ]);
        let o = AnnotateOptions { jobs: 1, ..opts() };
        let out = annotate_corpus(&models, &client, &ExampleBank::builtin(), &o).unwrap();
        assert_eq!(out.quarantine.len(), 1);
        assert_eq!(out.quarantine[0].model_id, "bad");
        assert_eq!(out.quarantine[0].raw.as_deref(), Some("still\ntwo"));
        assert_eq!(out.annotated.len(), 1);
        assert_eq!(out.annotated[0].id, "good");
        assert_eq!(client.calls.snapshot(), (3, 2, 0));
    }

    #[test]
    fn client_failure_is_quarantined() {
        let failures = (0..4).map(|_| Err(ClientError::Http { status: 503, body: "down".into() }));
        let client = ScriptedVlmClient::new(failures);
        let out = annotate_corpus(&[fixtures::unit_cube("c")], &client, &ExampleBank::builtin(), &opts()).unwrap();
        assert_eq!(out.quarantine.len(), 1);
        assert!(out.quarantine[0].reason.contains("503"));
        assert_eq!(out.exchanges.len(), 1);
    }

    #[test]
    fn corpus_output_is_deterministic() {
        let models: Vec<_> = (0..6).map(|i| fixtures::three_part_model(&format!("m{i}"))).collect();
        let run = || {
            annotate_corpus(&models, &OfflineVlmClient::new(), &ExampleBank::builtin(), &opts()).unwrap()
        };
        let (a, b) = (run(), run());
        assert_eq!(a, b);
        assert_eq!(a.annotated.len(), 6);
        let back = read_annotations_jsonl(&a.annotations_jsonl()).unwrap();
        assert_eq!(back, a.annotated);
    }
}
