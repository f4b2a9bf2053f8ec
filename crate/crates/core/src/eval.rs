//! Tail ranking and partial link prediction metrics.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{forward, transe_score, ModelConfig, Norm, Parameters, QueryForward};
use crate::store::{EntityId, RelationId, Split, Triple, TripleStore, Vocab};
use crate::subgraph::{build_subgraph, Mode, QueryBase};

pub const HITS_AT: [usize; 4] = [1, 3, 5, 10];

/// How candidate triples are scored.
#[derive(Debug, Clone, Copy)]
pub enum Scorer<'a> {
    Attention {
        params: &'a Parameters,
        config: &'a ModelConfig,
    },
    Transe {
        params: &'a Parameters,
        norm: Norm,
    },
}

impl<'a> Scorer<'a> {
    pub fn params(&self) -> &'a Parameters {
        match self {
            Scorer::Attention { params, .. } | Scorer::Transe { params, .. } => params,
        }
    }

    /// Fails unless the parameters fit the vocabulary.
    pub fn check(&self, vocab: &Vocab) -> Result<()> {
        let p = self.params();
        if p.n_entities != vocab.n_entities() || p.n_relations != vocab.n_canonical_relations() {
            return Err(Error::Dimension(format!(
                "parameters cover {} entities / {} relations, store has {} / {}",
                p.n_entities,
                p.n_relations,
                vocab.n_entities(),
                vocab.n_canonical_relations()
            )));
        }
        if let Scorer::Attention { config, .. } = self {
            config.validate()?;
            if config.dim != p.dim {
                return Err(Error::Dimension(format!(
                    "config dimension {} but parameters have {}",
                    config.dim, p.dim
                )));
            }
        }
        Ok(())
    }

    /// Scores `(head, relation, e)` for every entity `e`, indexed by entity id.
    pub fn tail_scores(&self, store: &TripleStore, head: EntityId, relation: RelationId) -> Result<Vec<f64>> {
        let n = store.n_entities();
        match *self {
            Scorer::Transe { params, norm } => Ok((0..n as u32)
                .map(|e| transe_score(&Triple::new(head, relation, EntityId(e)), params, norm))
                .collect()),
            Scorer::Attention { params, config } => {
                let opts = config.subgraph_options();
                let base = QueryBase::new(store, head, relation, &opts)?;
                let fast = QueryForward::new(&base, params, config)?;
                (0..n as u32)
                    .map(EntityId)
                    .map(|e| {
                        if base.is_shared(e) {
                            Ok(fast.score(params.entity(e)))
                        } else {
                            let g = build_subgraph(store, &Triple::new(head, relation, e), &opts, Mode::Inference)?;
                            Ok(forward(&g, params, config)?.score)
                        }
                    })
                    .collect()
            }
        }
    }

    /// Score of a single triple.
    pub fn score(&self, store: &TripleStore, t: &Triple) -> Result<f64> {
        match *self {
            Scorer::Transe { params, norm } => Ok(transe_score(t, params, norm)),
            Scorer::Attention { params, config } => {
                let g = build_subgraph(store, t, &config.subgraph_options(), Mode::Inference)?;
                Ok(forward(&g, params, config)?.score)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RankResult {
    pub triple: Triple,
    pub raw_rank: usize,
    pub filtered_rank: usize,
}

/// Pessimistic raw and filtered ranks of `scores[truth]`; lower scores rank higher.
///
/// Candidates for which `known` holds are skipped by the filtered rank.
pub fn ranks_from_scores(scores: &[f64], truth: usize, known: impl Fn(usize) -> bool) -> Result<(usize, usize)> {
    let s = scores[truth];
    if !s.is_finite() {
        return Err(Error::NonFinite(format!("score of candidate {truth}")));
    }
    let mut raw = 1;
    let mut filtered = 1;
    for (e, &x) in scores.iter().enumerate() {
        if e != truth && x <= s {
            raw += 1;
            if !known(e) {
                filtered += 1;
            }
        }
    }
    Ok((raw, filtered))
}

/// Ranks the true tail of `test` among all entities.
pub fn rank_tail(scorer: &Scorer, store: &TripleStore, test: &Triple, filter: &HashSet<Triple>) -> Result<RankResult> {
    scorer.params().check_ids(test)?;
    let scores = scorer.tail_scores(store, test.head, test.relation)?;
    let (raw_rank, filtered_rank) = ranks_from_scores(&scores, test.tail.index(), |e| {
        filter.contains(&Triple::new(test.head, test.relation, EntityId(e as u32)))
    })?;
    Ok(RankResult {
        triple: *test,
        raw_rank,
        filtered_rank,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Setting {
    Raw,
    Filter,
}

impl Setting {
    pub fn name(self) -> &'static str {
        match self {
            Setting::Raw => "raw",
            Setting::Filter => "filter",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    pub setting: Setting,
    pub n_test: usize,
    pub mrr: f64,
    pub hits: BTreeMap<usize, f64>,
}

/// MRR and Hit@k over plain ranks.
pub fn metrics_from_ranks(ranks: &[usize], setting: Setting) -> Result<MetricReport> {
    if ranks.is_empty() {
        return Err(Error::Empty("ranks"));
    }
    let n = ranks.len() as f64;
    let mrr = ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / n;
    let hits = HITS_AT
        .iter()
        .map(|&k| (k, ranks.iter().filter(|&&r| r <= k).count() as f64 / n))
        .collect();
    Ok(MetricReport {
        setting,
        n_test: ranks.len(),
        mrr,
        hits,
    })
}

pub fn compute_metrics(ranks: &[RankResult], setting: Setting) -> Result<MetricReport> {
    let plain: Vec<usize> = ranks
        .iter()
        .map(|r| match setting {
            Setting::Raw => r.raw_rank,
            Setting::Filter => r.filtered_rank,
        })
        .collect();
    metrics_from_ranks(&plain, setting)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct PlpOptions {
    /// Also rank heads, as tails of `(t, r~inv, ?)`.
    pub head_side: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlpReport {
    pub raw: MetricReport,
    pub filter: MetricReport,
    pub ranks: Vec<RankResult>,
}

/// Train, valid and test triples plus, on an augmented store, their inverses.
pub fn filter_set(split: &Split) -> HashSet<Triple> {
    let mut known = split.known_triples();
    if split.train.is_augmented() {
        let extra: Vec<Triple> = known.iter().filter_map(|t| split.train.inverse_of(t)).collect();
        known.extend(extra);
    }
    known
}

/// Ranks every query in parallel, keeping input order.
pub fn rank_all(scorer: &Scorer, store: &TripleStore, queries: &[Triple], filter: &HashSet<Triple>) -> Result<Vec<RankResult>> {
    queries
        .par_iter()
        .map(|t| rank_tail(scorer, store, t, filter))
        .collect()
}

/// Filtered MRR of `triples`, the early-stopping signal.
pub fn filtered_mrr(scorer: &Scorer, split: &Split, triples: &[Triple]) -> Result<f64> {
    let ranks = rank_all(scorer, &split.train, triples, &filter_set(split))?;
    Ok(compute_metrics(&ranks, Setting::Filter)?.mrr)
}

/// Partial link prediction over the test set of an augmented split.
pub fn run_plp(split: &Split, scorer: &Scorer, opts: PlpOptions) -> Result<PlpReport> {
    scorer.check(split.train.vocab())?;
    let mut queries = split.test.clone();
    if opts.head_side {
        if !split.train.is_augmented() {
            return Err(Error::Config("head-side ranking needs inverse augmentation".into()));
        }
        queries.extend(split.test.iter().filter_map(|t| split.train.inverse_of(t)));
    }
    let ranks = rank_all(scorer, &split.train, &queries, &filter_set(split))?;
    Ok(PlpReport {
        raw: compute_metrics(&ranks, Setting::Raw)?,
        filter: compute_metrics(&ranks, Setting::Filter)?,
        ranks,
    })
}

impl PlpReport {
    /// `metric<TAB>setting<TAB>value` lines.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for m in [&self.raw, &self.filter] {
            let _ = writeln!(out, "n_test\t{}\t{}", m.setting.name(), m.n_test);
            let _ = writeln!(out, "mrr\t{}\t{:.6}", m.setting.name(), m.mrr);
            for (k, v) in &m.hits {
                let _ = writeln!(out, "hit@{k}\t{}\t{v:.6}", m.setting.name());
            }
        }
        out
    }

    /// One row per setting with the usual link-prediction columns.
    pub fn to_table(&self, method: &str) -> String {
        let mut out = String::from("method\tsetting\tMRR\tHit@10\tHit@5\tHit@3\tHit@1\n");
        for m in [&self.raw, &self.filter] {
            let _ = writeln!(
                out,
                "{method}\t{}\t{:.4}\t{:.4}\t{:.4}\t{:.4}\t{:.4}",
                m.setting.name(),
                m.mrr,
                m.hits[&10],
                m.hits[&5],
                m.hits[&3],
                m.hits[&1]
            );
        }
        out
    }

    /// Per-query ranks with surface names.
    pub fn ranks_tsv(&self, vocab: &Vocab) -> String {
        let mut out = String::from("head\trelation\ttail\traw_rank\tfiltered_rank\n");
        for r in &self.ranks {
            let (h, rel, t) = vocab.render(&r.triple);
            let _ = writeln!(out, "{h}\t{rel}\t{t}\t{}\t{}", r.raw_rank, r.filtered_rank);
        }
        out
    }
}
