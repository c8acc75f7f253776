//! Subcommand implementations. Each returns the number of failed items.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;
use std::time::Duration;

use anyhow::{bail, Context as _, Result};
use serde::Serialize;
use serde_json::json;
use spcc_core::annotate::{
    annotate_corpus, read_annotations_jsonl, AnnotateOptions, AnnotationRecord, ExampleBank,
    OfflineVlmClient, VlmClient,
};
use spcc_core::codec::{DocMode, SpccDocument};
use spcc_core::geometry::{
    check_buildable, evaluate_model, render_sketch, sample_surface_points, write_cloud, CloudFormat,
    RenderOptions, Scene,
};
use spcc_core::metrics::{evaluate, load_eval_dir, EvalBatch, Pairing, ReportOptions};
use spcc_core::segment::{extrusion_direction_label, segment as segment_model, DEFAULT_DIRECTION_TOLERANCE_DEG};
use spcc_core::synth::{
    build_instruction_dataset, build_spcc_corpus, dedup_corpus, doc_id, embed_docs, group_contexts,
    records_jsonl, ByteTokenEstimator, DatasetOptions, EmbeddingClient, Judge, OfflineImageEmbedder, Task,
};
use spcc_core::{canonical_hash, print_code};

use crate::io::{create_dir, list_inputs, load, load_models, stem, write_output, Loaded, CODE_EXTENSIONS};
use crate::remote::{HttpEmbeddingClient, HttpVlmClient};
use crate::{
    AnnotateArgs, ClientKind, ConvertArgs, CorpusArgs, DedupArgs, EmbedKind, Format, GroupArgs, InstructionArgs,
    JudgeKind, MetricsArgs, Mode, RenderArgs, SampleArgs, SegmentArgs, ServiceArgs, ValidateArgs,
};

/// Bad invocation: missing inputs or inconsistent flags. Exits with 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn require(path: &Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(usage(format!("{} does not exist", path.display())))
    }
}

fn pretty(value: &impl Serialize) -> String {
    serde_json::to_string_pretty(value).expect("serializable") + "\n"
}

fn one_based(k: usize, count: usize, what: &str) -> Result<usize> {
    if k == 0 || k > count {
        return Err(usage(format!("{what} {k} out of range 1..={count}")));
    }
    Ok(k - 1)
}

fn load_one(path: &Path) -> Result<Loaded> {
    require(path)?;
    load(path)
}

fn annotations_for(path: &Path) -> Result<Vec<AnnotationRecord>> {
    require(path)?;
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(read_annotations_jsonl(&text)?)
}

pub fn convert(a: ConvertArgs) -> Result<usize> {
    let loaded = load_one(&a.input)?;
    let text = match a.to {
        Format::Json => loaded.model().to_json() + "\n",
        Format::Code => print_code(loaded.model())?,
        Format::Spcc => {
            let mode = match a.mode {
                Mode::Tilde => DocMode::Tilde,
                Mode::Dot => DocMode::Dot,
            };
            let doc = match (&a.annotations, loaded) {
                (Some(path), l) => {
                    let model = l.into_model();
                    let records = annotations_for(path)?;
                    let rec = records
                        .into_iter()
                        .find(|r| r.id == model.id)
                        .with_context(|| format!("no annotations for {}", model.id))?;
                    SpccDocument::from_parts(model, rec.spans, rec.annotations, mode)?
                }
                (None, Loaded::Document(d)) if d.mode != DocMode::CodeOnly => d.with_mode(mode)?,
                (None, _) => return Err(usage("SPCC output needs --annotations or an annotated input")),
            };
            doc.to_text()
        }
    };
    write_output(a.output.as_deref(), &text)?;
    Ok(0)
}

#[derive(Serialize)]
struct ValidationItem {
    id: String,
    ok: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    reason: Option<String>,
}

pub fn validate(a: ValidateArgs) -> Result<usize> {
    require(&a.input)?;
    let files = list_inputs(&a.input, crate::io::is_model_file)?;
    if files.is_empty() {
        return Err(usage(format!("no model files in {}", a.input.display())));
    }
    let items: Vec<ValidationItem> = {
        use rayon::prelude::*;
        files
            .par_iter()
            .map(|f| {
                let b = match load(f) {
                    Ok(l) => check_buildable(l.model(), a.resolution),
                    Err(e) => spcc_core::geometry::Buildability {
                        ok: false,
                        reason: Some(format!("{e:#}")),
                    },
                };
                ValidationItem {
                    id: stem(f),
                    ok: b.ok,
                    reason: b.reason,
                }
            })
            .collect()
    };
    let ok = items.iter().filter(|i| i.ok).count();
    let report = json!({
        "total": items.len(),
        "ok": ok,
        "SR": ok as f64 / items.len() as f64,
        "items": items,
    });
    write_output(a.output.as_deref(), &pretty(&report))?;
    Ok(items.len() - ok)
}

pub fn segment(a: SegmentArgs) -> Result<usize> {
    let loaded = load_one(&a.input)?;
    let comps: Vec<_> = segment_model(loaded.model(), a.threshold)
        .iter()
        .enumerate()
        .map(|(i, c)| {
            json!({
                "component": i + 1,
                "pairs": [c.pairs.start, c.pairs.end],
                "multiplicity": c.multiplicity,
                "op": c.op().name(),
                "direction": extrusion_direction_label(&c.representative, DEFAULT_DIRECTION_TOLERANCE_DEG),
            })
        })
        .collect();
    print!("{}", pretty(&comps));
    Ok(0)
}

pub fn render(a: RenderArgs) -> Result<usize> {
    let loaded = load_one(&a.input)?;
    let model = loaded.model();
    let opts = RenderOptions {
        size: a.size,
        resolution: a.resolution,
        ..RenderOptions::default()
    };
    let img = if let Some(k) = a.sketch {
        let i = one_based(k, model.pairs.len(), "pair")?;
        render_sketch(&model.pairs[i].sketch, a.size)
    } else {
        let scene = Scene::new(model, opts)?;
        match (a.highlight, a.component) {
            (Some(k), _) => scene.outline_view(one_based(k, scene.components().len(), "component")?)?,
            (None, Some(k)) => scene.component_view(one_based(k, scene.components().len(), "component")?)?,
            (None, None) => scene.full_view(),
        }
    };
    img.save_png(&a.output)
        .with_context(|| format!("writing {}", a.output.display()))?;
    Ok(0)
}

pub fn sample(a: SampleArgs) -> Result<usize> {
    let loaded = load_one(&a.input)?;
    let solid = evaluate_model(loaded.model(), a.resolution);
    let cloud = sample_surface_points(&solid, a.points, a.seed)?;
    let format = if a.binary { CloudFormat::Binary } else { CloudFormat::Xyz };
    let mut buf = Vec::new();
    write_cloud(&mut buf, &cloud, format)?;
    match &a.output {
        Some(p) => fs::write(p, buf).with_context(|| format!("writing {}", p.display()))?,
        None => std::io::Write::write_all(&mut std::io::stdout(), &buf)?,
    }
    Ok(0)
}

pub fn metrics(a: MetricsArgs) -> Result<usize> {
    require(&a.gen)?;
    require(&a.reference)?;
    let training_hashes = match &a.train {
        Some(dir) => {
            require(dir)?;
            let (models, failed) = load_models(dir)?;
            for (f, e) in &failed {
                log::warn!("training set: {f}: {e}");
            }
            Some(models.iter().map(canonical_hash).collect::<HashSet<_>>())
        }
        None => None,
    };
    let pairing = if a.aligned { Pairing::Aligned } else { Pairing::Unaligned };
    let batch = EvalBatch::new(load_eval_dir(&a.gen)?, load_eval_dir(&a.reference)?, pairing)
        .map_err(|e| usage(e.to_string()))?;
    let opts = ReportOptions {
        tolerance: a.tolerance,
        jsd_grid: a.jsd_grid,
        resolution: a.resolution,
        points: a.points,
        seed: a.seed,
        training_hashes,
    };
    let report = evaluate(&batch, &opts)?;
    write_output(a.output.as_deref(), &(report.to_json() + "\n"))?;
    Ok(0)
}

fn annotate_options(s: &ServiceArgs, jobs: usize) -> Result<(AnnotateOptions, ExampleBank)> {
    let thresholds: [usize; 4] = s
        .thresholds
        .clone()
        .try_into()
        .map_err(|_| usage("--thresholds takes four values"))?;
    let bank = match &s.bank {
        Some(p) => {
            require(p)?;
            ExampleBank::from_jsonl(&fs::read_to_string(p)?)?
        }
        None => ExampleBank::builtin(),
    };
    let opts = AnnotateOptions {
        model_name: s.vlm_model.clone(),
        thresholds,
        render: RenderOptions {
            size: s.size,
            resolution: s.resolution,
            ..RenderOptions::default()
        },
        jobs,
        ..AnnotateOptions::default()
    };
    Ok((opts, bank))
}

fn remote_vlm(timeout: u64) -> Result<HttpVlmClient> {
    HttpVlmClient::from_env(Duration::from_secs(timeout)).map_err(|e| usage(e.to_string()))
}

pub fn annotate(a: AnnotateArgs, jobs: usize) -> Result<usize> {
    require(&a.input)?;
    let (opts, bank) = annotate_options(&a.service, jobs)?;
    let client: Box<dyn VlmClient> = match a.client {
        ClientKind::Remote => Box::new(remote_vlm(a.service.timeout)?),
        ClientKind::Offline => Box::new(OfflineVlmClient::new()),
    };
    let (models, failed) = load_models(&a.input)?;
    for (f, e) in &failed {
        log::warn!("{f}: {e}");
    }
    let out = annotate_corpus(&models, client.as_ref(), &bank, &opts)?;
    create_dir(&a.out)?;
    fs::write(a.out.join("annotations.jsonl"), out.annotations_jsonl())?;
    fs::write(a.out.join("exchanges.jsonl"), out.exchanges_jsonl())?;
    fs::write(a.out.join("quarantine.jsonl"), out.quarantine_jsonl())?;
    eprintln!(
        "annotated {} model(s), quarantined {}, unreadable {}",
        out.annotated.len(),
        out.quarantine.len(),
        failed.len()
    );
    Ok(out.quarantine.len() + failed.len())
}

pub fn synth_corpus(a: CorpusArgs) -> Result<usize> {
    require(&a.input)?;
    let records = annotations_for(&a.annotations)?;
    let (models, failed) = load_models(&a.input)?;
    let corpus = build_spcc_corpus(&models, &records);
    create_dir(&a.out)?;
    let mut docs = Vec::new();
    for d in &corpus.docs {
        let id = doc_id(d);
        let file = format!("{id}.spcc");
        fs::write(a.out.join(&file), d.to_text())?;
        docs.push(json!({ "doc_id": id, "model_id": d.model.id, "mode": d.mode, "file": file }));
    }
    let manifest = json!({
        "documents": docs,
        "skipped": corpus.skipped.iter().chain(&failed).map(|(id, why)| json!({"id": id, "reason": why})).collect::<Vec<_>>(),
    });
    fs::write(a.out.join("manifest.json"), pretty(&manifest))?;
    eprintln!("wrote {} document(s), skipped {}", corpus.docs.len(), corpus.skipped.len() + failed.len());
    Ok(corpus.skipped.len() + failed.len())
}

pub fn synth_instructions(a: InstructionArgs, jobs: usize) -> Result<usize> {
    require(&a.input)?;
    let (lo, hi) = match a.completion_range[..] {
        [lo, hi] => (lo, hi),
        _ => return Err(usage("--completion-range takes two values")),
    };
    let (opts, bank) = annotate_options(&a.service, jobs)?;
    let (models, failed) = load_models(&a.input)?;
    for (f, e) in &failed {
        log::warn!("{f}: {e}");
    }
    let mut failures = failed.len();
    let records: Vec<AnnotationRecord> = match &a.annotations {
        Some(p) => annotations_for(p)?,
        None => {
            let out = annotate_corpus(&models, &OfflineVlmClient::new(), &bank, &opts)?;
            failures += out.quarantine.len();
            out.annotated
        }
    };
    let remote;
    let judge = match a.judge {
        JudgeKind::Heuristic => Judge::Heuristic,
        JudgeKind::Vlm => {
            remote = remote_vlm(a.service.timeout)?;
            Judge::Vlm {
                client: &remote,
                opts: &opts,
            }
        }
    };
    let build = build_instruction_dataset(
        &models,
        &records,
        judge,
        &DatasetOptions {
            completion_range: (lo, hi),
            seed: a.seed,
            quota: a.quota,
        },
    )
    .map_err(|e| match e {
        spcc_core::synth::SynthError::Config(m) => usage(m),
        other => other.into(),
    })?;
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    fs::write(&a.out, records_jsonl(&build.records)).with_context(|| format!("writing {}", a.out.display()))?;
    let counts: BTreeMap<&str, usize> = Task::ALL
        .iter()
        .map(|t| (t.name(), build.counts.get(t).copied().unwrap_or(0)))
        .collect();
    let summary = json!({
        "records": build.records.len(),
        "counts": counts,
        "excluded": build.excluded.iter().map(|(id, why)| json!({"id": id, "reason": why})).collect::<Vec<_>>(),
    });
    print!("{}", pretty(&summary));
    Ok(failures)
}

pub fn group(a: GroupArgs) -> Result<usize> {
    require(&a.input)?;
    if a.window == 0 || a.neighbors == 0 {
        bail!(usage("--window and --neighbors must be positive"));
    }
    let files = list_inputs(&a.input, |p| {
        p.extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| CODE_EXTENSIONS.contains(&e))
    })?;
    let mut docs = Vec::new();
    let mut failed: Vec<(String, String)> = Vec::new();
    for f in &files {
        match load(f) {
            Ok(Loaded::Document(mut d)) => {
                // Corpus files are named `<model id>.<layer>`.
                for layer in [".tilde", ".dot", ".code"] {
                    if let Some(id) = d.model.id.strip_suffix(layer) {
                        d.model.id = id.to_string();
                        break;
                    }
                }
                docs.push(d)
            }
            Ok(Loaded::Model(_)) => unreachable!("only text files are listed"),
            Err(e) => failed.push((stem(f), format!("{e:#}"))),
        }
    }
    let embedder: Box<dyn EmbeddingClient> = match a.embed {
        EmbedKind::Offline => Box::new(OfflineImageEmbedder::default()),
        EmbedKind::Remote => Box::new(
            HttpEmbeddingClient::from_env(Duration::from_secs(a.timeout)).map_err(|e| usage(e.to_string()))?,
        ),
    };
    let render = RenderOptions {
        size: a.size,
        resolution: a.resolution,
        ..RenderOptions::default()
    };
    let (embedded, not_embedded) = embed_docs(&docs, embedder.as_ref(), &ByteTokenEstimator, render);
    failed.extend(not_embedded);
    let grouping = group_contexts(&embedded, a.window, a.neighbors);
    let texts: BTreeMap<String, String> = docs.iter().map(|d| (doc_id(d), d.to_text())).collect();
    create_dir(&a.out)?;
    let mut contexts = Vec::new();
    for (i, c) in grouping.contexts.iter().enumerate() {
        let file = format!("context_{i:05}.txt");
        let body: String = c.doc_ids.iter().map(|id| texts[id].as_str()).collect::<Vec<_>>().join("\n");
        fs::write(a.out.join(&file), body)?;
        contexts.push(json!({ "file": file, "doc_ids": c.doc_ids, "token_count": c.token_count }));
    }
    let manifest = json!({
        "window": a.window,
        "neighbors": a.neighbors,
        "contexts": contexts,
        "warnings": grouping.warnings,
        "failed": failed.iter().map(|(id, why)| json!({"id": id, "reason": why})).collect::<Vec<_>>(),
    });
    fs::write(a.out.join("manifest.json"), pretty(&manifest))?;
    eprintln!("packed {} document(s) into {} context(s)", embedded.len(), grouping.contexts.len());
    Ok(failed.len())
}

pub fn dedup(a: DedupArgs) -> Result<usize> {
    require(&a.input)?;
    let (models, failed) = load_models(&a.input)?;
    let out = dedup_corpus(models);
    create_dir(&a.out)?;
    for m in &out.kept {
        fs::write(a.out.join(format!("{}.json", m.id)), m.to_json() + "\n")?;
    }
    let summary = json!({
        "kept": out.kept.len(),
        "removed": out.removed.iter().map(|(id, why)| json!({"id": id, "reason": why})).collect::<Vec<_>>(),
        "unreadable": failed.iter().map(|(f, why)| json!({"file": f, "reason": why})).collect::<Vec<_>>(),
    });
    print!("{}", pretty(&summary));
    Ok(failed.len())
}
