//! Caption similarity: BLEU-1/4 and ROUGE-L F1 on case-folded whitespace
//! tokens.

use std::collections::HashMap;

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TextScores {
    pub bleu1: f64,
    pub bleu4: f64,
    pub rouge_l: f64,
}

pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_lowercase).collect()
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    for w in tokens.windows(n) {
        *counts.entry(w).or_insert(0) += 1;
    }
    counts
}

/// Sentence BLEU with uniform weights up to `max_n`, clipped counts against
/// all references and the closest-reference brevity penalty. Any zero
/// n-gram precision gives 0.
pub fn bleu(pred: &[String], refs: &[Vec<String>], max_n: usize) -> f64 {
    if pred.is_empty() || refs.is_empty() {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for n in 1..=max_n {
        let candidate = ngram_counts(pred, n);
        let total: usize = candidate.values().sum();
        if total == 0 {
            return 0.0;
        }
        let ref_counts: Vec<_> = refs.iter().map(|r| ngram_counts(r, n)).collect();
        let clipped: usize = candidate
            .iter()
            .map(|(g, &c)| {
                let max_ref = ref_counts.iter().map(|rc| rc.get(g).copied().unwrap_or(0)).max().unwrap_or(0);
                c.min(max_ref)
            })
            .sum();
        if clipped == 0 {
            return 0.0;
        }
        log_sum += (clipped as f64 / total as f64).ln();
    }
    let c = pred.len();
    let r = refs
        .iter()
        .map(Vec::len)
        .min_by_key(|&len| (len.abs_diff(c), len))
        .unwrap();
    let bp = if c > r { 1.0 } else { (1.0 - r as f64 / c as f64).exp() };
    bp * (log_sum / max_n as f64).exp()
}

fn lcs(a: &[String], b: &[String]) -> usize {
    let mut row = vec![0usize; b.len() + 1];
    for x in a {
        let mut diag = 0;
        for (j, y) in b.iter().enumerate() {
            let above = row[j + 1];
            row[j + 1] = if x == y { diag + 1 } else { above.max(row[j]) };
            diag = above;
        }
    }
    row[b.len()]
}

/// ROUGE-L F1, best over references.
pub fn rouge_l(pred: &[String], refs: &[Vec<String>]) -> f64 {
    refs.iter()
        .map(|r| {
            let l = lcs(pred, r) as f64;
            if l == 0.0 {
                return 0.0;
            }
            let (p, rec) = (l / pred.len() as f64, l / r.len() as f64);
            2.0 * p * rec / (p + rec)
        })
        .fold(0.0, f64::max)
}

pub fn text_metrics(pred: &str, refs: &[&str]) -> TextScores {
    let p = tokenize(pred);
    let r: Vec<_> = refs.iter().map(|s| tokenize(s)).collect();
    TextScores {
        bleu1: bleu(&p, &r, 1),
        bleu4: bleu(&p, &r, 4),
        rouge_l: rouge_l(&p, &r),
    }
}
