//! Similarity-grouped pretraining contexts: image embeddings, a k-nearest
//! neighbour cosine graph, greedy traversal and window packing.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::SynthError;
use crate::annotate::ClientError;
use crate::codec::{DocMode, SpccDocument};
use crate::geometry::{RenderOptions, Scene};

pub const DEFAULT_WINDOW: usize = 2048;
pub const DEFAULT_NEIGHBORS: usize = 10;

pub trait TokenEstimator: Send + Sync {
    fn count(&self, text: &str) -> usize;
}

/// Four bytes per token, rounded up.
#[derive(Debug, Clone, Copy, Default)]
pub struct ByteTokenEstimator;

impl TokenEstimator for ByteTokenEstimator {
    fn count(&self, text: &str) -> usize {
        text.len().div_ceil(4)
    }
}

/// Image embedding service: PNG bytes in, vector out.
pub trait EmbeddingClient: Send + Sync {
    fn embed(&self, png: &[u8]) -> Result<Vec<f64>, ClientError>;
}

/// Deterministic local embedder: ink coverage on a coarse grid.
#[derive(Debug, Clone, Copy)]
pub struct OfflineImageEmbedder {
    pub grid: u32,
}

impl Default for OfflineImageEmbedder {
    fn default() -> Self {
        Self { grid: 16 }
    }
}

impl EmbeddingClient for OfflineImageEmbedder {
    fn embed(&self, png: &[u8]) -> Result<Vec<f64>, ClientError> {
        let img = image::load_from_memory(png)
            .map_err(|e| ClientError::Protocol(format!("not an image: {e}")))?
            .to_luma8();
        let g = self.grid.max(1);
        let (w, h) = img.dimensions();
        let mut cells = vec![0.0; (g * g) as usize];
        for (x, y, p) in img.enumerate_pixels() {
            let (cx, cy) = (x * g / w.max(1), y * g / h.max(1));
            cells[(cy * g + cx) as usize] += 1.0 - f64::from(p[0]) / 255.0;
        }
        Ok(cells)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddedDoc {
    pub doc_id: String,
    /// Unit length.
    pub embedding: Vec<f64>,
    pub token_count: usize,
}

impl EmbeddedDoc {
    /// Normalizes `raw` to unit length.
    pub fn new(doc_id: impl Into<String>, raw: Vec<f64>, token_count: usize) -> Result<Self, SynthError> {
        let doc_id = doc_id.into();
        let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !norm.is_finite() || norm == 0.0 {
            return Err(SynthError::Config(format!("{doc_id}: embedding has no direction")));
        }
        if token_count == 0 {
            return Err(SynthError::Config(format!("{doc_id}: empty document")));
        }
        Ok(Self {
            doc_id,
            embedding: raw.into_iter().map(|x| x / norm).collect(),
            token_count,
        })
    }
}

/// Identifier of a corpus document: model id plus annotation layer.
pub fn doc_id(doc: &SpccDocument) -> String {
    let layer = match doc.mode {
        DocMode::Tilde => "tilde",
        DocMode::Dot => "dot",
        DocMode::CodeOnly => "code",
    };
    format!("{}.{layer}", doc.model.id)
}

/// Embeds each document by the full render of its model; documents that
/// share a model id share one embedding call. Documents that cannot be
/// embedded are returned with the reason.
pub fn embed_docs(
    docs: &[SpccDocument],
    client: &dyn EmbeddingClient,
    estimator: &dyn TokenEstimator,
    render: RenderOptions,
) -> (Vec<EmbeddedDoc>, Vec<(String, String)>) {
    let mut models: Vec<&SpccDocument> = Vec::new();
    let mut seen = HashMap::new();
    for d in docs {
        seen.entry(d.model.id.as_str()).or_insert_with(|| {
            models.push(d);
            models.len() - 1
        });
    }
    let vectors: Vec<Result<Vec<f64>, String>> = models
        .par_iter()
        .map(|d| {
            let scene = Scene::new(&d.model, render).map_err(|e| e.to_string())?;
            client.embed(&scene.full_view().to_png()).map_err(|e| e.to_string())
        })
        .collect();
    let mut embedded = Vec::new();
    let mut failed = Vec::new();
    for d in docs {
        let id = doc_id(d);
        let result = match &vectors[seen[d.model.id.as_str()]] {
            Ok(v) => EmbeddedDoc::new(id.clone(), v.clone(), estimator.count(&d.to_text())).map_err(|e| e.to_string()),
            Err(e) => Err(e.clone()),
        };
        match result {
            Ok(e) => embedded.push(e),
            Err(reason) => {
                log::warn!("{id}: not embedded ({reason})");
                failed.push((id, reason));
            }
        }
    }
    (embedded, failed)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Context {
    /// Positions in the input slice.
    pub members: Vec<usize>,
    pub doc_ids: Vec<String>,
    pub token_count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grouping {
    /// Traversal order over input positions.
    pub order: Vec<usize>,
    pub contexts: Vec<Context>,
    pub warnings: Vec<String>,
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Most similar first; ties go to the lower index.
fn by_similarity(a: (usize, f64), b: (usize, f64)) -> std::cmp::Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}

/// Orders documents by greedy traversal of the `k`-nearest-neighbour cosine
/// graph and packs the order into contexts of at most `window` tokens.
/// Traversal starts at the first document and always moves to the most
/// similar unvisited neighbour, or to the most similar unvisited document
/// overall once the neighbours are used up.
pub fn group_contexts(docs: &[EmbeddedDoc], window: usize, k: usize) -> Grouping {
    let n = docs.len();
    let knn: Vec<Vec<usize>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut sims: Vec<(usize, f64)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| (j, cosine(&docs[i].embedding, &docs[j].embedding)))
                .collect();
            sims.sort_by(|&a, &b| by_similarity(a, b));
            sims.truncate(k);
            sims.into_iter().map(|(j, _)| j).collect()
        })
        .collect();

    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut current = if n > 0 { Some(0) } else { None };
    while let Some(c) = current {
        visited[c] = true;
        order.push(c);
        current = knn[c].iter().copied().find(|&j| !visited[j]).or_else(|| {
            (0..n)
                .filter(|&j| !visited[j])
                .map(|j| (j, cosine(&docs[c].embedding, &docs[j].embedding)))
                .min_by(|&a, &b| by_similarity(a, b))
                .map(|(j, _)| j)
        });
    }

    let mut contexts: Vec<Context> = Vec::new();
    let mut warnings = Vec::new();
    let mut open: Option<Context> = None;
    for &i in &order {
        let t = docs[i].token_count;
        if t > window {
            warnings.push(format!(
                "{} has {t} tokens, more than the window of {window}; placed alone",
                docs[i].doc_id
            ));
            contexts.extend(open.take());
            contexts.push(Context {
                members: vec![i],
                doc_ids: vec![docs[i].doc_id.clone()],
                token_count: t,
            });
            continue;
        }
        if open.as_ref().is_some_and(|c| c.token_count + t > window) {
            contexts.extend(open.take());
        }
        let c = open.get_or_insert_with(|| Context {
            members: Vec::new(),
            doc_ids: Vec::new(),
            token_count: 0,
        });
        c.members.push(i);
        c.doc_ids.push(docs[i].doc_id.clone());
        c.token_count += t;
    }
    contexts.extend(open);
    Grouping {
        order,
        contexts,
        warnings,
    }
}
