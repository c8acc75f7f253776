use std::fs;
use std::path::Path;
use std::process::{Command, Output};
use std::time::Instant;

use spcc_core::annotate::read_annotations_jsonl;
use spcc_core::fixtures;
use spcc_core::synth::{validate_record, InstructionRecord, Task};
use spcc_core::CadModel;
use tempfile::TempDir;

fn spcc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spcc"))
        .args(args)
        .env_remove("SPCC_VLM_URL")
        .env_remove("SPCC_EMBED_URL")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn write_models(dir: &Path, models: &[CadModel]) {
    fs::create_dir_all(dir).unwrap();
    for m in models {
        fs::write(dir.join(format!("{}.json", m.id)), m.to_json()).unwrap();
    }
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn convert_json_to_code_and_spcc() {
    let tmp = TempDir::new().unwrap();
    let model = fixtures::three_part_model("t");
    write_models(tmp.path(), std::slice::from_ref(&model));
    let file = tmp.path().join("t.json");

    let code = spcc(&["convert", p(&file), "--to", "code"]);
    assert!(code.status.success());
    assert_eq!(stdout(&code), spcc_core::print_code(&model).unwrap());

    let no_ann = spcc(&["convert", p(&file), "--to", "spcc"]);
    assert_eq!(no_ann.status.code(), Some(2));

    let ann_dir = tmp.path().join("ann");
    assert!(spcc(&["annotate", p(tmp.path()), "--out", p(&ann_dir), "--client", "offline"]).status.success());
    let out = spcc(&[
        "convert",
        p(&file),
        "--to",
        "spcc",
        "--annotations",
        p(&ann_dir.join("annotations.jsonl")),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert!(text.starts_with("# Description of the CAD model:"));
    let back = spcc_core::parse(&text).unwrap();
    assert_eq!(back.model.pairs, model.pairs);

    let spcc_file = tmp.path().join("t.spcc");
    fs::write(&spcc_file, &text).unwrap();
    let json = spcc(&["convert", p(&spcc_file), "--to", "json"]);
    assert_eq!(CadModel::from_json(&stdout(&json)).unwrap().pairs, model.pairs);
}

#[test]
fn validate_reports_success_ratio() {
    let tmp = TempDir::new().unwrap();
    write_models(
        tmp.path(),
        &[fixtures::unit_cube("a"), fixtures::plate_with_hole("b"), fixtures::three_part_model("c")],
    );
    fs::write(tmp.path().join("d.py"), "sketch1 = Sketch()\nloop1 = Loop(\n# End of code\n").unwrap();
    let out = spcc(&["validate", p(tmp.path()), "--resolution", "32"]);
    assert!(out.status.success());
    let report: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(report["SR"], 0.75);
    assert_eq!(report["total"], 4);

    let strict = spcc(&["--strict", "validate", p(tmp.path()), "--resolution", "32"]);
    assert_eq!(strict.status.code(), Some(1));
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(spcc(&["validate", "/definitely/not/here"]).status.code(), Some(2));
    assert_eq!(spcc(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(spcc(&["convert"]).status.code(), Some(2));
    let tmp = TempDir::new().unwrap();
    write_models(tmp.path(), &[fixtures::three_part_model("t")]);
    // The remote client needs SPCC_VLM_URL.
    let out = spcc(&["annotate", p(tmp.path()), "--out", p(&tmp.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("SPCC_VLM_URL"));
}

#[test]
fn metrics_report_has_every_key() {
    let tmp = TempDir::new().unwrap();
    let (gen, reference) = (tmp.path().join("gen"), tmp.path().join("ref"));
    let models = fixtures::synthetic_corpus(4, 10);
    write_models(&gen, &models);
    write_models(&reference, &models);
    let out = spcc(&[
        "metrics", "--gen", p(&gen), "--ref", p(&reference), "--aligned", "--resolution", "24", "--points", "200",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    for key in ["COV", "MMD", "JSD", "SR", "Novel", "ACC_cmd", "ACC_param", "ACC_T", "MCD", "EM", "BLEU1", "BLEU4", "ROUGE_L"] {
        assert!(report.get(key).is_some(), "missing {key}: {report}");
    }
    assert_eq!(report["EM"], 100.0);
}

#[test]
fn segment_render_sample() {
    let tmp = TempDir::new().unwrap();
    write_models(tmp.path(), &[fixtures::plate_with_cut_hole("p")]);
    let file = tmp.path().join("p.json");
    let seg: serde_json::Value = serde_json::from_str(&stdout(&spcc(&["segment", p(&file)]))).unwrap();
    assert_eq!(seg.as_array().unwrap().len(), 2);
    assert_eq!(seg[1]["op"], "Cut");

    let png = tmp.path().join("p.png");
    let out = spcc(&["render", p(&file), "-o", p(&png), "--highlight", "2", "--size", "96", "--resolution", "24"]);
    assert!(out.status.success());
    assert_eq!(&fs::read(&png).unwrap()[1..4], b"PNG");
    assert_eq!(spcc(&["render", p(&file), "-o", p(&png), "--highlight", "3"]).status.code(), Some(2));

    let a = stdout(&spcc(&["sample", p(&file), "--points", "50", "--seed", "3", "--resolution", "24"]));
    let b = stdout(&spcc(&["sample", p(&file), "--points", "50", "--seed", "3", "--resolution", "24"]));
    assert_eq!(a, b);
    assert_eq!(a.lines().count(), 50);
}

#[test]
fn corpus_group_and_dedup() {
    let tmp = TempDir::new().unwrap();
    let models_dir = tmp.path().join("models");
    let mut models = fixtures::synthetic_corpus(12, 200);
    let mut twin = models[0].clone();
    twin.id = "twin".into();
    models.push(twin);
    models.push(fixtures::unit_cube("cube"));
    write_models(&models_dir, &models);

    let dd = tmp.path().join("dedup");
    let out = spcc(&["dedup", p(&models_dir), "--out", p(&dd)]);
    let summary: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    let removed: Vec<_> = summary["removed"].as_array().unwrap().iter().map(|r| r["id"].as_str().unwrap()).collect();
    assert!(removed.contains(&"twin") && removed.contains(&"cube"));

    let ann = tmp.path().join("ann");
    assert!(spcc(&["annotate", p(&dd), "--out", p(&ann), "--client", "offline", "--size", "96", "--resolution", "24"])
        .status
        .success());
    let records = read_annotations_jsonl(&fs::read_to_string(ann.join("annotations.jsonl")).unwrap()).unwrap();
    assert!(!records.is_empty());
    assert!(!fs::read_to_string(ann.join("exchanges.jsonl")).unwrap().is_empty());

    let corpus = tmp.path().join("corpus");
    assert!(spcc(&["synth", "corpus", p(&dd), "--annotations", p(&ann.join("annotations.jsonl")), "--out", p(&corpus)])
        .status
        .success());
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(corpus.join("manifest.json")).unwrap()).unwrap();
    let doc_count = manifest["documents"].as_array().unwrap().len();

    let ctx = tmp.path().join("ctx");
    let out = spcc(&["group", p(&corpus), "--out", p(&ctx), "--size", "64", "--resolution", "16"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(ctx.join("manifest.json")).unwrap()).unwrap();
    let mut ids: Vec<String> = manifest["contexts"]
        .as_array()
        .unwrap()
        .iter()
        .flat_map(|c| c["doc_ids"].as_array().unwrap().iter().map(|d| d.as_str().unwrap().to_string()))
        .collect();
    assert_eq!(ids.len(), doc_count);
    ids.sort();
    ids.dedup();
    assert_eq!(ids.len(), doc_count);
    for c in manifest["contexts"].as_array().unwrap() {
        assert!(c["token_count"].as_u64().unwrap() <= 2048);
    }
}

#[test]
fn offline_pipeline_run() {
    let tmp = TempDir::new().unwrap();
    let models_dir = tmp.path().join("models");
    write_models(&models_dir, &fixtures::synthetic_corpus(100, 0));
    let out_file = tmp.path().join("instructions.jsonl");
    let start = Instant::now();
    let out = spcc(&["synth", "instructions", p(&models_dir), "--out", p(&out_file)]);
    let elapsed = start.elapsed();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(elapsed.as_secs_f64() < 60.0, "took {elapsed:?}");
    let text = fs::read_to_string(&out_file).unwrap();
    let mut seen = std::collections::BTreeSet::new();
    for line in text.lines() {
        let raw: serde_json::Value = serde_json::from_str(line).unwrap();
        for key in ["task", "input", "output", "source_id"] {
            assert!(raw.get(key).is_some(), "missing {key}");
        }
        let r: InstructionRecord = serde_json::from_str(line).unwrap();
        validate_record(&r).unwrap();
        seen.insert(r.task);
    }
    assert_eq!(seen.len(), Task::ALL.len());

    let again = tmp.path().join("again.jsonl");
    assert!(spcc(&["synth", "instructions", p(&models_dir), "--out", p(&again)]).status.success());
    assert_eq!(fs::read(&out_file).unwrap(), fs::read(&again).unwrap());
}
