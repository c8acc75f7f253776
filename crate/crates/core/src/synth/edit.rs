//! Removable-component selection and the four edit records per model.

use serde::Serialize;

use super::{InstructionRecord, SynthError, Task};
use crate::annotate::{build_judge_request, parse_judge_response, AnnotateError, AnnotateOptions, Retrying, VlmClient};
use crate::cad::{BooleanOp, CadModel};
use crate::codec::{Annotations, DocMode, SpccDocument};
use crate::geometry::{check_buildable, Scene};
use crate::segment::Component;

/// Grid used to confirm that a remainder model still builds.
const CHECK_RESOLUTION: usize = 32;

/// Who decides which component can be deleted.
#[derive(Clone, Copy)]
pub enum Judge<'a> {
    /// The last component whose removal leaves a buildable model.
    Heuristic,
    /// Ask the annotation service with the rendered views.
    Vlm {
        client: &'a dyn VlmClient,
        opts: &'a AnnotateOptions,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Removal {
    pub index: usize,
    pub justification: String,
    pub deletion: String,
    pub addition: String,
}

/// `doc` without component `k`: its pairs, span and header are dropped and
/// later spans shift down.
pub fn remove_component(doc: &SpccDocument, k: usize) -> Result<SpccDocument, SynthError> {
    let span = doc
        .spans
        .get(k)
        .cloned()
        .ok_or_else(|| SynthError::NotRemovable(format!("component {} does not exist", k + 1)))?;
    let mut pairs = doc.model.pairs.clone();
    pairs.drain(span.clone());
    let width = span.len();
    let spans = doc
        .spans
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != k)
        .map(|(i, s)| if i < k { s.clone() } else { s.start - width..s.end - width })
        .collect();
    let mut components = doc.annotations.components.clone();
    if k < components.len() {
        components.remove(k);
    }
    let annotations = Annotations {
        global: doc.annotations.global.clone(),
        components,
    };
    Ok(SpccDocument::from_parts(
        CadModel::new(doc.model.id.clone(), pairs),
        spans,
        annotations,
        doc.mode,
    )?)
}

fn removal_is_valid(doc: &SpccDocument, k: usize) -> bool {
    if doc.spans.len() < 2 || k >= doc.spans.len() {
        return false;
    }
    let span = &doc.spans[k];
    let rest: Vec<_> = doc
        .model
        .pairs
        .iter()
        .enumerate()
        .filter(|(i, _)| !span.contains(i))
        .map(|(_, p)| p.clone())
        .collect();
    rest.first().is_some_and(|p| p.extrude.op == BooleanOp::NewBody)
        && check_buildable(&CadModel::new(doc.model.id.clone(), rest), CHECK_RESOLUTION).ok
}

fn label(doc: &SpccDocument, k: usize) -> String {
    doc.annotations
        .components
        .get(k)
        .and_then(|c| c.name.clone())
        .map(|n| format!("\"{n}\" component"))
        .unwrap_or_else(|| format!("component {}", k + 1))
}

fn heuristic_removal(doc: &SpccDocument, k: usize) -> Removal {
    let what = label(doc, k);
    let addition = match doc.annotations.components.get(k) {
        Some(c) => format!(
            "Add the {what} to the CAD model: {}",
            c.description.trim_end_matches('.')
        ) + ".",
        None => format!("Add the {what} back to the CAD model."),
    };
    Removal {
        index: k,
        justification: format!(
            "Removing the {what} leaves a model that still starts with a new body and builds a non-empty solid."
        ),
        deletion: format!("Delete the {what} from the CAD model."),
        addition,
    }
}

fn components_of(doc: &SpccDocument) -> Vec<Component> {
    doc.spans
        .iter()
        .map(|s| Component {
            pairs: s.clone(),
            multiplicity: s.len(),
            representative: doc.model.pairs[s.start].clone(),
        })
        .collect()
}

fn ask_judge(
    doc: &SpccDocument,
    client: &dyn VlmClient,
    opts: &AnnotateOptions,
) -> Result<Removal, SynthError> {
    let scene = Scene::with_components(&doc.model, components_of(doc), opts.render)
        .map_err(AnnotateError::from)?;
    let n = doc.spans.len();
    let descriptions: Vec<String> = (0..n)
        .map(|i| {
            doc.annotations
                .components
                .get(i)
                .map(|c| c.description.clone())
                .unwrap_or_else(|| format!("Component {}.", i + 1))
        })
        .collect();
    let outlines = (0..n)
        .map(|i| scene.outline_view(i).map(|img| img.to_png()))
        .collect::<Result<Vec<_>, _>>()
        .map_err(AnnotateError::from)?;
    let request = build_judge_request(&opts.model_name, &descriptions, &scene.full_view().to_png(), &outlines)?;
    let client = Retrying::new(client, opts.retry);
    let mut attempt = 0;
    let reply = loop {
        let text = client.complete(&request)?;
        match parse_judge_response(&text, n) {
            Err(AnnotateError::Parse { message, .. }) if attempt < opts.reasks => {
                log::warn!("{}: judge reply unusable ({message}); asking again", doc.model.id);
                attempt += 1;
            }
            other => break other?,
        }
    };
    Ok(Removal {
        index: reply.index,
        justification: reply.justification,
        deletion: reply.deletion,
        addition: reply.addition,
    })
}

/// Picks a component whose deletion leaves a buildable model that still
/// starts with a new body, with paired deletion and addition instructions.
pub fn select_removable_component(doc: &SpccDocument, judge: Judge<'_>) -> Result<Removal, SynthError> {
    if doc.spans.len() < 2 {
        return Err(SynthError::NotRemovable("model has a single component".into()));
    }
    match judge {
        Judge::Heuristic => (0..doc.spans.len())
            .rev()
            .find(|&k| removal_is_valid(doc, k))
            .map(|k| heuristic_removal(doc, k))
            .ok_or_else(|| SynthError::NotRemovable("every deletion breaks the model".into())),
        Judge::Vlm { client, opts } => {
            let removal = ask_judge(doc, client, opts)?;
            if removal_is_valid(doc, removal.index) {
                Ok(removal)
            } else {
                Err(SynthError::NotRemovable(format!(
                    "judge proposed component {}, whose deletion breaks the model",
                    removal.index + 1
                )))
            }
        }
    }
}

/// Deletion and Addition on plain code, and their starred variants on the
/// fully annotated document.
pub fn build_edit_records(doc: &SpccDocument, removal: &Removal) -> Result<[InstructionRecord; 4], SynthError> {
    let full = doc.with_mode(DocMode::Tilde)?;
    let reduced = remove_component(&full, removal.index)?;
    let code = full.with_mode(DocMode::CodeOnly)?.to_text();
    let reduced_code = reduced.with_mode(DocMode::CodeOnly)?.to_text();
    let (spcc, reduced_spcc) = (full.to_text(), reduced.to_text());
    let id = doc.model.id.as_str();
    let k = removal.index + 1;
    Ok([
        InstructionRecord::new(Task::Deletion, code.clone(), reduced_code.clone(), id, &removal.deletion)
            .with_meta("component", k),
        InstructionRecord::new(Task::Addition, reduced_code, code, id, &removal.addition).with_meta("component", k),
        InstructionRecord::new(Task::DeletionStar, spcc.clone(), reduced_spcc.clone(), id, &removal.deletion)
            .with_meta("component", k),
        InstructionRecord::new(Task::AdditionStar, reduced_spcc, spcc, id, &removal.addition)
            .with_meta("component", k),
    ])
}
