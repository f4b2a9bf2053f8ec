//! Attention-chain explanations.
//!
//! A length-`l` explanation is a chain of subgraph rows `p1 → … → pl → target`
//! in which each row's tail is the next row's head. It is scored as
//! `ω_l · C¹[p2, p1] · … · C^{l-1}[pl, p(l-1)] · C^l[n, pl]`.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{forward, ForwardTrace, ModelConfig, Norm, Parameters};
use crate::rules::count_supports;
use crate::store::{Triple, TripleStore, Vocab};
use crate::subgraph::{build_subgraph, Mode, NeighborSubgraph, SubgraphOptions};

#[derive(Debug, Clone, PartialEq)]
pub struct Explanation {
    pub target: Triple,
    /// Chain triples in subgraph orientation, from `h¹` towards the target head.
    pub path: Vec<Triple>,
    pub alpha: f64,
}

impl Explanation {
    pub fn len(&self) -> usize {
        self.path.len()
    }

    pub fn is_empty(&self) -> bool {
        self.path.is_empty()
    }

    /// True when the chain starts at the target's tail.
    pub fn closed(&self) -> bool {
        self.path.first().is_some_and(|t| t.head == self.target.tail)
    }

    pub fn check_chain(&self) -> Result<()> {
        let Some(last) = self.path.last() else {
            return Err(Error::MalformedChain("empty path".into()));
        };
        if let Some(w) = self.path.windows(2).find(|w| w[0].tail != w[1].head) {
            return Err(Error::MalformedChain(format!("{} does not lead into {}", w[0], w[1])));
        }
        if last.tail != self.target.head {
            return Err(Error::MalformedChain(format!(
                "{last} does not end at the head of {}",
                self.target
            )));
        }
        Ok(())
    }
}

/// Every adjacency-realized chain of length `1..=m` with its α.
pub fn enumerate_explanations(g: &NeighborSubgraph, trace: &ForwardTrace, config: &ModelConfig) -> Result<Vec<Explanation>> {
    let m = trace.layers();
    if trace.attention.iter().any(|layer| layer.len() != g.len()) || m != config.layers {
        return Err(Error::Dimension("trace does not belong to this subgraph and config".into()));
    }
    let weights = config.weights();
    let n = g.target_index();
    let target = g.target();
    let mut out = Vec::new();
    // rows[0] is the row attended by the target; deeper rows follow.
    let mut rows = Vec::with_capacity(m);
    for l in 1..=m {
        walk(trace, g, n, l - 1, weights[l - 1], &mut rows, &mut |rows, alpha| {
            out.push(Explanation {
                target,
                path: rows.iter().rev().map(|&i| g.triples[i]).collect(),
                alpha,
            });
        });
    }
    Ok(out)
}

fn walk(
    trace: &ForwardTrace,
    g: &NeighborSubgraph,
    row: usize,
    layer: usize,
    weight: f64,
    rows: &mut Vec<usize>,
    emit: &mut dyn FnMut(&[usize], f64),
) {
    for &(j, c) in &trace.attention[layer][row] {
        let w = weight * c;
        if w == 0.0 {
            continue;
        }
        rows.push(j as usize);
        if layer == 0 {
            emit(rows, w);
        } else {
            walk(trace, g, j as usize, layer - 1, w, rows, emit);
        }
        rows.pop();
    }
}

fn rank_order(a: &Explanation, b: &Explanation) -> Ordering {
    b.alpha
        .total_cmp(&a.alpha)
        .then(a.len().cmp(&b.len()))
        .then_with(|| a.path.cmp(&b.path))
}

/// The `k` highest-α explanations; ties go to shorter, then lexicographically smaller paths.
pub fn top_k_explanations(mut candidates: Vec<Explanation>, k: usize) -> Vec<Explanation> {
    candidates.sort_by(rank_order);
    candidates.truncate(k);
    candidates
}

/// Builds the target's subgraph, runs the model and returns the top `k` explanations.
pub fn explain(store: &TripleStore, target: &Triple, params: &Parameters, config: &ModelConfig, k: usize) -> Result<Vec<Explanation>> {
    params.check_ids(target)?;
    let g = build_subgraph(store, target, &config.subgraph_options(), Mode::Inference)?;
    let trace = forward(&g, params, config)?;
    Ok(top_k_explanations(enumerate_explanations(&g, &trace, config)?, k))
}

/// Length-1 explanations from raw TransE embeddings over a depth-1 subgraph.
pub fn transe_explanations(store: &TripleStore, target: &Triple, params: &Parameters, norm: Norm, neighbor_cap: usize, k: usize) -> Result<Vec<Explanation>> {
    let config = ModelConfig {
        dim: params.dim,
        layers: 1,
        omega: vec![1.0],
        norm,
        max_depth: 1,
        neighbor_cap,
        sample_seed: SubgraphOptions::default().seed,
    };
    explain(store, target, params, &config, k)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredExplanation {
    pub explanation: Explanation,
    pub support: usize,
}

/// Top-k explanations of `target` with their support counts.
pub fn explain_with_support(
    store: &TripleStore,
    target: &Triple,
    params: &Parameters,
    config: &ModelConfig,
    k: usize,
) -> Result<Vec<ScoredExplanation>> {
    explain(store, target, params, config, k)?
        .into_iter()
        .map(|e| {
            let support = count_supports(&e, store)?;
            Ok(ScoredExplanation {
                explanation: e,
                support,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExplanationReport {
    pub recall: f64,
    /// Absent when no test triple has a valid explanation.
    pub avg_support: Option<f64>,
    pub k: usize,
    pub n_test: usize,
}

/// Recall and AvgSupport from per-triple scored explanations.
pub fn summarize(per_triple: &[Vec<ScoredExplanation>], k: usize) -> Result<ExplanationReport> {
    if per_triple.is_empty() {
        return Err(Error::Empty("test triples"));
    }
    let mut explained = 0usize;
    let mut total_support = 0usize;
    for list in per_triple {
        let s: usize = list.iter().take(k).filter(|e| e.support >= 1).map(|e| e.support).sum();
        if s > 0 {
            explained += 1;
            total_support += s;
        }
    }
    Ok(ExplanationReport {
        recall: explained as f64 / per_triple.len() as f64,
        avg_support: (explained > 0).then(|| total_support as f64 / explained as f64),
        k,
        n_test: per_triple.len(),
    })
}

/// Explains every test triple (in parallel) and summarizes Recall and AvgSupport.
pub fn explanation_report(
    test: &[Triple],
    params: &Parameters,
    config: &ModelConfig,
    store: &TripleStore,
    k: usize,
) -> Result<(ExplanationReport, Vec<Vec<ScoredExplanation>>)> {
    if k < 1 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    if test.is_empty() {
        return Err(Error::Empty("test triples"));
    }
    let all: Vec<Vec<ScoredExplanation>> = test
        .par_iter()
        .map(|t| explain_with_support(store, t, params, config, k))
        .collect::<Result<_>>()?;
    Ok((summarize(&all, k)?, all))
}

/// One line of the explanation output file, with canonical surface names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationRecord {
    pub target: [String; 3],
    pub path: Vec<[String; 3]>,
    pub length: usize,
    pub alpha: f64,
    pub support: usize,
}

fn surface(vocab: &Vocab, t: Triple) -> [String; 3] {
    let (h, r, t) = vocab.render(&crate::store::canonicalize(vocab, t));
    [h, r, t]
}

impl ExplanationRecord {
    pub fn new(e: &ScoredExplanation, vocab: &Vocab) -> Self {
        ExplanationRecord {
            target: surface(vocab, e.explanation.target),
            path: e.explanation.path.iter().map(|&t| surface(vocab, t)).collect(),
            length: e.explanation.len(),
            alpha: e.explanation.alpha,
            support: e.support,
        }
    }
}

/// JSON lines for every explanation, in input order.
pub fn to_jsonl(per_triple: &[Vec<ScoredExplanation>], vocab: &Vocab) -> String {
    let mut out = String::new();
    for e in per_triple.iter().flatten() {
        out.push_str(&serde_json::to_string(&ExplanationRecord::new(e, vocab)).expect("serializable"));
        out.push('\n');
    }
    out
}
