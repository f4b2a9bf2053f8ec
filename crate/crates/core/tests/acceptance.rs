//! Acceptance criteria, one PASS/FAIL line each. Run with
//! `cargo test --release --test acceptance`.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use xkgat::config::RunConfig;
use xkgat::eval::{compute_metrics, rank_tail, ranks_from_scores, run_plp, PlpOptions, RankResult, Scorer, Setting};
use xkgat::explain::{enumerate_explanations, explanation_report, Explanation};
use xkgat::model::{forward, gradients, margin_loss, transe_score, ModelConfig, Norm, Parameters};
use xkgat::rules::{
    apply_rules, count_supports, explanation_to_rule, generalize, head_coverage, mine_rules, Atom, Rule, RuleThresholds, Term,
};
use xkgat::store::{split_dataset, EntityId, RelationId, SplitOptions, Triple, TripleStore, Vocab};
use xkgat::subgraph::{build_subgraph, Mode, NeighborSubgraph};
use xkgat::synth::{generate_synthetic, target_relations, SynthConfig};
use xkgat::train::{train, TrainConfig};

const FD_FIXTURES: usize = 100;
const FD_STEP: f64 = 1e-4;
const FD_REL_TOL: f64 = 1e-3;
const FD_MIN_MAGNITUDE: f64 = 1e-8;
const FD_MAX_ROWS: usize = 10;
const FD_MAX_DIM: usize = 8;
const FD_SECONDS: f64 = 60.0;
/// L1 residual coordinates this close to zero make the score non-differentiable
/// within one finite-difference step.
const FD_KINK_MARGIN: f64 = 1e-3;

const ROW_SUM_TOL: f64 = 1e-6;
const MASS_TOL: f64 = 1e-5;
const ATTENTION_MAX_ROWS: usize = 6;
const ATTENTION_FIXTURES: usize = 300;
const MASS_FIXTURES_MIN: usize = 50;

const TRANSE_DRAWS: usize = 1000;
const TRANSE_TOL: f64 = 1e-12;

const MRR_TOL: f64 = 1e-9;
const RANK_PROPERTY_RUNS: usize = 2000;

const JOIN_STORES: usize = 50;
const JOIN_MAX_TRIPLES: usize = 10_000;
const JOIN_SECONDS: f64 = 300.0;

const PLANTED_HIT1_MIN: f64 = 0.5;
const PLANTED_RECALL_MIN: f64 = 0.9;
const PLANTED_RULES_MIN: usize = 8;
const PLANTED_HC_MIN: f64 = 0.9;
const PLANTED_SECONDS: f64 = 600.0;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn store_from(rows: &[(String, String, String)]) -> TripleStore {
    let mut v = Vocab::new();
    let ts: Vec<Triple> = rows
        .iter()
        .map(|(h, r, t)| {
            let h = v.intern_entity(h);
            let r = v.intern_relation(r).unwrap();
            let t = v.intern_entity(t);
            Triple::new(h, r, t)
        })
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    TripleStore::from_parts(v, ts)
}

fn random_rows(rng: &mut ChaCha8Rng, n_entities: usize, n_relations: usize, n_triples: usize) -> Vec<(String, String, String)> {
    (0..n_triples)
        .map(|_| {
            (
                format!("e{}", rng.gen_range(0..n_entities)),
                format!("r{}", rng.gen_range(0..n_relations)),
                format!("e{}", rng.gen_range(0..n_entities)),
            )
        })
        .collect()
}

fn random_omega(rng: &mut ChaCha8Rng, m: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..m).map(|_| rng.gen_range(0.1..1.0)).collect();
    let s: f64 = raw.iter().sum();
    raw.iter().map(|x| x / s).collect()
}

fn params_for(store: &TripleStore, dim: usize, seed: u64) -> Parameters {
    Parameters::init(store.n_entities(), store.vocab().n_canonical_relations(), dim, seed)
}

fn residual(g: &NeighborSubgraph, p: &Parameters, c: &ModelConfig) -> Vec<f64> {
    let t = g.target();
    let tr = forward(g, p, c).unwrap();
    let r = p.relation(t.relation);
    (0..p.dim).map(|x| tr.head_repr[x] + r[x] - p.entity(t.tail)[x]).collect()
}

fn table(p: &mut Parameters, which: usize) -> &mut Vec<f64> {
    if which == 0 {
        &mut p.entity
    } else {
        &mut p.relation
    }
}

fn gradient_fidelity() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut fixtures = 0;
    let mut checked = 0usize;
    let mut worst = 0.0f64;
    let mut failures = 0usize;
    let mut layer_counts = [0usize; 2];
    while fixtures < FD_FIXTURES {
        let n_e = rng.gen_range(3..7);
        let n_t = rng.gen_range(2..8);
        let n_r = rng.gen_range(1..4);
        let mut store = store_from(&random_rows(&mut rng, n_e, n_r, n_t));
        if rng.gen_bool(0.5) {
            store = store.augment_inverses().unwrap();
        }
        let canonical: Vec<Triple> = store.triples().copied().filter(|t| !store.vocab().relation(t.relation).is_inverse).collect();
        let target = *canonical.choose(&mut rng).unwrap();
        let neg_tail = EntityId(rng.gen_range(0..store.n_entities() as u32));
        if neg_tail == target.tail {
            continue;
        }
        let neg = Triple::new(target.head, target.relation, neg_tail);
        let m = rng.gen_range(1..3);
        let config = ModelConfig {
            dim: rng.gen_range(1..=FD_MAX_DIM),
            layers: m,
            omega: random_omega(&mut rng, m),
            norm: if rng.gen_bool(0.5) { Norm::L1 } else { Norm::L2 },
            max_depth: m,
            neighbor_cap: 1000,
            sample_seed: 0,
        };
        let opts = config.subgraph_options();
        let gp = build_subgraph(&store, &target, &opts, Mode::Training).unwrap();
        let gn = build_subgraph(&store, &neg, &opts, Mode::Inference).unwrap();
        if gp.len() > FD_MAX_ROWS || gn.len() > FD_MAX_ROWS {
            continue;
        }
        let mut p = params_for(&store, config.dim, rng.gen());
        if config.norm == Norm::L1 {
            let near_kink = [&gp, &gn]
                .iter()
                .any(|g| residual(g, &p, &config).iter().any(|x| x.abs() < FD_KINK_MARGIN));
            if near_kink {
                continue;
            }
        }
        // Hinge active, loss exactly 1 at the unperturbed point.
        let gamma = forward(&gn, &p, &config).unwrap().score - forward(&gp, &p, &config).unwrap().score + 1.0;
        let batch = vec![(gp, gn)];
        let loss = |p: &Parameters| -> f64 {
            batch
                .iter()
                .map(|(a, b)| margin_loss(forward(a, p, &config).unwrap().score, forward(b, p, &config).unwrap().score, gamma))
                .sum()
        };
        let (_, grads) = gradients(&batch, &p, &config, gamma).unwrap();
        for which in 0..2 {
            let len = if which == 0 { p.entity.len() } else { p.relation.len() };
            for i in 0..len {
                let analytic = if which == 0 { grads.entity[i] } else { grads.relation[i] };
                let orig = table(&mut p, which)[i];
                table(&mut p, which)[i] = orig + FD_STEP;
                let up = loss(&p);
                table(&mut p, which)[i] = orig - FD_STEP;
                let down = loss(&p);
                table(&mut p, which)[i] = orig;
                let fd = (up - down) / (2.0 * FD_STEP);
                if fd.abs() > FD_MIN_MAGNITUDE {
                    checked += 1;
                    let rel = (analytic - fd).abs() / fd.abs();
                    worst = worst.max(rel);
                    if rel >= FD_REL_TOL {
                        failures += 1;
                    }
                }
            }
        }
        layer_counts[m - 1] += 1;
        fixtures += 1;
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        failures == 0 && secs < FD_SECONDS,
        format!(
            "{fixtures} fixtures (m=1: {}, m=2: {}), {checked} coordinates, worst relative error {worst:.2e}, {failures} over {FD_REL_TOL:e}, {secs:.1}s",
            layer_counts[0], layer_counts[1]
        ),
    )
}

/// Rows whose attention is used by some chain of at most `m` hops into the target.
fn rows_used_by_chains(g: &NeighborSubgraph, m: usize) -> HashSet<usize> {
    let mut used = HashSet::from([g.target_index()]);
    let mut frontier = vec![g.target_index()];
    for _ in 1..m {
        let mut next = Vec::new();
        for &i in &frontier {
            for &j in &g.adjacency[i] {
                if used.insert(j as usize) {
                    next.push(j as usize);
                }
            }
        }
        frontier = next;
    }
    used
}

fn attention_invariants() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let (mut fixtures, mut rows, mut mass_fixtures) = (0, 0, 0);
    let mut worst_row: f64 = 0.0;
    let mut worst_mass: f64 = 0.0;
    let mut off_support = 0;
    while fixtures < ATTENTION_FIXTURES || mass_fixtures < MASS_FIXTURES_MIN {
        let (n_e, n_r, n_t) = (rng.gen_range(2..6), rng.gen_range(1..3), rng.gen_range(2..7));
        let store = store_from(&random_rows(&mut rng, n_e, n_r, n_t));
        let target = *store.triples().collect::<Vec<_>>().choose(&mut rng).unwrap();
        let m = rng.gen_range(1..3);
        let config = ModelConfig {
            dim: rng.gen_range(1..6),
            layers: m,
            omega: random_omega(&mut rng, m),
            norm: Norm::L2,
            max_depth: m,
            neighbor_cap: 1000,
            sample_seed: 0,
        };
        let g = build_subgraph(&store, &target, &config.subgraph_options(), Mode::Inference).unwrap();
        if g.len() > ATTENTION_MAX_ROWS {
            continue;
        }
        let p = params_for(&store, config.dim, rng.gen());
        let trace = forward(&g, &p, &config).unwrap();
        for layer in &trace.attention {
            for (i, row) in layer.iter().enumerate() {
                if g.adjacency[i].is_empty() {
                    if !row.is_empty() {
                        off_support += 1;
                    }
                    continue;
                }
                rows += 1;
                let sum: f64 = row.iter().map(|(_, c)| c).sum();
                worst_row = worst_row.max((sum - 1.0).abs());
                off_support += row.iter().filter(|(j, _)| !g.is_adjacent(i, *j as usize)).count();
            }
        }
        let fallback_free = rows_used_by_chains(&g, m).iter().all(|&i| !g.adjacency[i].is_empty());
        if fallback_free {
            let total: f64 = enumerate_explanations(&g, &trace, &config).unwrap().iter().map(|e| e.alpha).sum();
            worst_mass = worst_mass.max((total - 1.0).abs());
            mass_fixtures += 1;
        }
        fixtures += 1;
    }
    outcome(
        worst_row <= ROW_SUM_TOL && worst_mass <= MASS_TOL && off_support == 0,
        format!(
            "{fixtures} fixtures, {rows} rows: max |row sum - 1| {worst_row:.1e}, {off_support} off-adjacency weights; {mass_fixtures} fallback-free: max |sum alpha - 1| {worst_mass:.1e}"
        ),
    )
}

fn transe_degeneration() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut worst: f64 = 0.0;
    let mut nonisolated = 0;
    for draw in 0..TRANSE_DRAWS {
        let rows = vec![("h".to_string(), "r".to_string(), "t".to_string()), ("x".into(), "q".into(), "y".into())];
        let mut store = store_from(&rows);
        if draw % 2 == 0 {
            store = store.augment_inverses().unwrap();
        }
        let target = store.vocab().lookup("h", "r", "t").unwrap();
        let m = rng.gen_range(1..4);
        let config = ModelConfig {
            dim: rng.gen_range(1..16),
            layers: m,
            omega: random_omega(&mut rng, m),
            norm: if rng.gen_bool(0.5) { Norm::L1 } else { Norm::L2 },
            max_depth: m,
            neighbor_cap: 1000,
            sample_seed: 0,
        };
        let g = build_subgraph(&store, &target, &config.subgraph_options(), Mode::Training).unwrap();
        if g.len() != 1 {
            nonisolated += 1;
        }
        let mut p = params_for(&store, config.dim, rng.gen());
        let scale = rng.gen_range(0.01..100.0);
        p.entity.iter_mut().chain(p.relation.iter_mut()).for_each(|x| *x *= scale);
        let model = forward(&g, &p, &config).unwrap().score;
        worst = worst.max((model - transe_score(&target, &p, config.norm)).abs());
    }
    outcome(
        worst < TRANSE_TOL && nonisolated == 0,
        format!("{TRANSE_DRAWS} draws, max |model - TransE| {worst:.1e}"),
    )
}

fn metric_oracle() -> Outcome {
    let t = Triple::new(EntityId(0), RelationId(0), EntityId(1));
    let ranks: Vec<RankResult> = [1, 2, 4]
        .iter()
        .map(|&r| RankResult {
            triple: t,
            raw_rank: r,
            filtered_rank: r,
        })
        .collect();
    let m = compute_metrics(&ranks, Setting::Filter).unwrap();
    let fixture_ok = (m.mrr - 0.583333).abs() <= 1e-6
        && (m.mrr - (1.0 + 0.5 + 0.25) / 3.0).abs() <= MRR_TOL
        && m.hits[&1] == 1.0 / 3.0
        && m.hits[&3] == 2.0 / 3.0;

    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut violations = 0;
    for _ in 0..RANK_PROPERTY_RUNS {
        let n = rng.gen_range(1..40);
        let scores: Vec<f64> = (0..n).map(|_| (rng.gen_range(0..10) as f64) * 0.5).collect();
        let known: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.3)).collect();
        let truth = rng.gen_range(0..n);
        let (raw, filtered) = ranks_from_scores(&scores, truth, |e| known[e]).unwrap();
        if filtered > raw || filtered < 1 {
            violations += 1;
        }
    }
    let mut tails = 0;
    for seed in 0..40u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let store = store_from(&random_rows(&mut rng, 12, 3, 40)).augment_inverses().unwrap();
        let triples: Vec<Triple> = store.triples().copied().collect();
        let filter: HashSet<Triple> = triples.iter().copied().collect();
        let p = params_for(&store, 4, seed);
        let config = ModelConfig {
            dim: 4,
            ..ModelConfig::default()
        };
        for scorer in [
            Scorer::Attention { params: &p, config: &config },
            Scorer::Transe { params: &p, norm: Norm::L1 },
        ] {
            for t in triples.choose_multiple(&mut rng, 5) {
                let r = rank_tail(&scorer, &store, t, &filter).unwrap();
                tails += 1;
                if r.filtered_rank > r.raw_rank {
                    violations += 1;
                }
            }
        }
    }
    outcome(
        fixture_ok && violations == 0,
        format!(
            "[1,2,4]: MRR {:.9}, Hit@1 {:.6}, Hit@3 {:.6}; filtered > raw in {violations} of {} property runs",
            m.mrr,
            m.hits[&1],
            m.hits[&3],
            RANK_PROPERTY_RUNS + tails
        ),
    )
}

/// Every assignment of `n` variables over `n_entities` entities.
fn for_each_binding(n: usize, n_entities: usize, f: &mut dyn FnMut(&[EntityId])) {
    let mut b = vec![EntityId(0); n];
    loop {
        f(&b);
        let mut i = 0;
        loop {
            if i == n {
                return;
            }
            b[i].0 += 1;
            if (b[i].0 as usize) < n_entities {
                break;
            }
            b[i].0 = 0;
            i += 1;
        }
    }
}

fn ground(a: &Atom, b: &[EntityId]) -> Triple {
    let term = |t: Term| match t {
        Term::Var(v) => b[v as usize - 1],
        Term::Const(e) => e,
    };
    Triple::new(term(a.subject), a.relation, term(a.object))
}

struct Oracle<'a> {
    facts: HashSet<Triple>,
    n_entities: usize,
    store: &'a TripleStore,
}

impl Oracle<'_> {
    fn holds(&self, a: &Atom, b: &[EntityId]) -> bool {
        self.facts.contains(&ground(a, b))
    }

    fn supports(&self, rule: &Rule, own: &[EntityId]) -> usize {
        let mut n = 0;
        for_each_binding(rule.n_vars(), self.n_entities, &mut |b| {
            if b != own && self.holds(&rule.head, b) && rule.body.iter().all(|a| self.holds(a, b)) {
                n += 1;
            }
        });
        n
    }

    /// (support, head size) over distinct head bindings.
    fn coverage(&self, rule: &Rule) -> (usize, usize) {
        let head_vars = rule.head_vars();
        let mut heads = BTreeSet::new();
        let mut supported = BTreeSet::new();
        for_each_binding(rule.n_vars(), self.n_entities, &mut |b| {
            if self.holds(&rule.head, b) {
                let key: Vec<EntityId> = head_vars.iter().map(|&v| b[v as usize - 1]).collect();
                if rule.body.iter().all(|a| self.holds(a, b)) {
                    supported.insert(key.clone());
                }
                heads.insert(key);
            }
        });
        (supported.len(), heads.len())
    }

    fn inferred(&self, rules: &[Rule]) -> Vec<Triple> {
        let mut out = BTreeSet::new();
        for rule in rules {
            for_each_binding(rule.n_vars(), self.n_entities, &mut |b| {
                if rule.body.iter().all(|a| self.holds(a, b)) {
                    let h = ground(&rule.head, b);
                    if !self.store.contains(&h) {
                        out.insert(h);
                    }
                }
            });
        }
        out.into_iter().collect()
    }
}

fn random_chain(store: &TripleStore, by_tail: &HashMap<EntityId, Vec<Triple>>, rng: &mut ChaCha8Rng) -> Option<Explanation> {
    let triples: Vec<Triple> = store.triples().copied().collect();
    let target = *triples.choose(rng)?;
    let inverse = store.inverse_of(&target);
    let len = rng.gen_range(1..3);
    let mut path = Vec::new();
    let mut at = target.head;
    for _ in 0..len {
        let options: Vec<Triple> = by_tail
            .get(&at)?
            .iter()
            .copied()
            .filter(|t| *t != target && Some(*t) != inverse)
            .collect();
        let step = *options.choose(rng)?;
        path.push(step);
        at = step.head;
    }
    path.reverse();
    Some(Explanation { target, path, alpha: 1.0 })
}

fn random_rule(store: &TripleStore, rng: &mut ChaCha8Rng) -> Rule {
    let n_rel = store.vocab().n_canonical_relations() as u32;
    let n_e = store.n_entities() as u32;
    let term = |rng: &mut ChaCha8Rng, vars: u32| {
        if rng.gen_bool(0.8) {
            Term::Var(rng.gen_range(1..=vars))
        } else {
            Term::Const(EntityId(rng.gen_range(0..n_e)))
        }
    };
    let head_object = if rng.gen_bool(0.5) { Term::Var(2) } else { Term::Const(EntityId(rng.gen_range(0..n_e))) };
    let head = Atom::new(Term::Var(1), RelationId(rng.gen_range(0..n_rel)), head_object);
    let body = (0..rng.gen_range(1..3))
        .map(|_| {
            let s = term(rng, 3);
            let o = term(rng, 3);
            Atom::new(s, RelationId(rng.gen_range(0..n_rel)), o)
        })
        .collect();
    Rule::new(head, body)
}

fn brute_force_equivalence() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let (mut supports, mut coverages, mut inference_sets, mut mismatches) = (0, 0, 0, 0);
    let mut largest = 0;
    for s in 0..JOIN_STORES {
        let (n_e, n_r, n_t) = if s == 0 {
            (60, 3, JOIN_MAX_TRIPLES / 2)
        } else {
            let n_e = rng.gen_range(6..36);
            (n_e, rng.gen_range(1..5), rng.gen_range(10..=(n_e * n_e).min(1500)))
        };
        let store = store_from(&random_rows(&mut rng, n_e, n_r, n_t)).augment_inverses().unwrap();
        assert!(store.len() <= JOIN_MAX_TRIPLES);
        largest = largest.max(store.len());
        let oracle = Oracle {
            facts: store.triples().copied().collect(),
            n_entities: store.n_entities(),
            store: &store,
        };
        let mut by_tail: HashMap<EntityId, Vec<Triple>> = HashMap::new();
        for t in store.triples() {
            by_tail.entry(t.tail).or_default().push(*t);
        }
        let mut rules = Vec::new();
        for _ in 0..8 {
            let Some(e) = random_chain(&store, &by_tail, &mut rng) else { continue };
            let (rule, own) = generalize(&e, store.vocab()).unwrap();
            let (head, body) = rule.instantiate(&own);
            let consistent = head == store.canonicalize(e.target) && body == e.path.iter().map(|t| store.canonicalize(*t)).collect::<Vec<_>>();
            supports += 1;
            if !consistent || count_supports(&e, &store).unwrap() != oracle.supports(&rule, &own) {
                mismatches += 1;
            }
            rules.push(rule);
        }
        for _ in 0..8 {
            rules.push(random_rule(&store, &mut rng));
        }
        for rule in &rules {
            let c = head_coverage(rule, &store);
            let (support, head_size) = oracle.coverage(rule);
            let hc = if head_size == 0 { 0.0 } else { support as f64 / head_size as f64 };
            coverages += 1;
            if (c.support, c.head_size) != (support, head_size) || c.hc != hc {
                mismatches += 1;
            }
        }
        let bound: Vec<Rule> = rules.into_iter().filter(|r| r.check_bound().is_ok()).collect();
        inference_sets += 1;
        if apply_rules(&bound, &store).unwrap() != oracle.inferred(&bound) {
            mismatches += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        mismatches == 0 && secs < JOIN_SECONDS,
        format!(
            "{JOIN_STORES} stores (largest {largest} triples): {supports} support counts, {coverages} coverages, {inference_sets} inference sets, {mismatches} mismatches, {secs:.1}s"
        ),
    )
}

fn planted_recovery() -> Outcome {
    let start = Instant::now();
    let (store, planted) = generate_synthetic(&SynthConfig::default()).unwrap();
    let split = split_dataset(&store, &target_relations(&planted), SplitOptions::default())
        .unwrap()
        .augmented()
        .unwrap();
    let model = ModelConfig {
        dim: 32,
        layers: 2,
        neighbor_cap: 10,
        ..ModelConfig::default()
    };
    let cfg = TrainConfig {
        learning_rate: 0.01,
        max_epochs: 5,
        ..TrainConfig::default()
    };
    let untrained = params_for(&split.train, model.dim, cfg.seed);
    let control = run_plp(&split, &Scorer::Attention { params: &untrained, config: &model }, PlpOptions::default()).unwrap();
    let params = train(&split, &model, &cfg, &mut |_| {}).unwrap().params;
    let trained = run_plp(&split, &Scorer::Attention { params: &params, config: &model }, PlpOptions::default()).unwrap();
    let (hit1, control_hit1) = (trained.filter.hits[&1], control.filter.hits[&1]);

    let (report, _) = explanation_report(&split.test, &params, &model, &split.train, 3).unwrap();
    let mut triples: Vec<Triple> = split
        .train
        .triples()
        .filter(|t| split.target_relations.contains(&t.relation))
        .copied()
        .collect();
    triples.extend(&split.test);
    let mining = mine_rules(&triples, &split.train, &params, &model, 3, &RuleThresholds::default()).unwrap();
    let recovered = planted
        .iter()
        .filter(|p| {
            let want = Rule::from_planted(p);
            mining.high_quality.iter().any(|m| m.rule == want && m.stats.hc >= PLANTED_HC_MIN)
        })
        .count();
    let secs = start.elapsed().as_secs_f64();
    outcome(
        hit1 > control_hit1
            && hit1 > PLANTED_HIT1_MIN
            && report.recall >= PLANTED_RECALL_MIN
            && recovered >= PLANTED_RULES_MIN
            && secs < PLANTED_SECONDS,
        format!(
            "filtered Hit@1 {hit1:.3} (untrained {control_hit1:.3}), recall@3 {:.3}, {recovered}/{} planted rules recovered, {secs:.1}s",
            report.recall,
            planted.len()
        ),
    )
}

fn table4_shapes() -> Outcome {
    let rows = |r: &[(&str, &str, &str)]| -> Vec<(String, String, String)> {
        r.iter().map(|(h, r, t)| (h.to_string(), r.to_string(), t.to_string())).collect()
    };
    let assoc = store_from(&rows(&[
        ("Item1", "SleeveStyle", "Normal"),
        ("Item1", "suitableFor", "Middle Age"),
    ]))
    .augment_inverses()
    .unwrap();
    let v = assoc.vocab();
    let e = Explanation {
        target: v.lookup("Item1", "suitableFor", "Middle Age").unwrap(),
        path: vec![v.lookup("Normal", "SleeveStyle~inv", "Item1").unwrap()],
        alpha: 1.0,
    };
    let got_assoc = explanation_to_rule(&e, v).unwrap();
    let want_assoc = Rule::new(
        Atom::new(Term::Var(1), v.relation_id("suitableFor").unwrap(), Term::Const(v.entity_id("Middle Age").unwrap())),
        vec![Atom::new(Term::Var(1), v.relation_id("SleeveStyle").unwrap(), Term::Const(v.entity_id("Normal").unwrap()))],
    );

    let path = store_from(&rows(&[("Item3", "titleInclude", "Tianzi"), ("Item3", "bransIs", "Tianzi")]))
        .augment_inverses()
        .unwrap();
    let v2 = path.vocab();
    let e2 = Explanation {
        target: v2.lookup("Item3", "bransIs", "Tianzi").unwrap(),
        path: vec![v2.lookup("Tianzi", "titleInclude~inv", "Item3").unwrap()],
        alpha: 1.0,
    };
    let got_path = explanation_to_rule(&e2, v2).unwrap();
    let want_path = Rule::new(
        Atom::new(Term::Var(1), v2.relation_id("bransIs").unwrap(), Term::Var(2)),
        vec![Atom::new(Term::Var(1), v2.relation_id("titleInclude").unwrap(), Term::Var(2))],
    );
    outcome(
        got_assoc == want_assoc && got_path == want_path,
        format!("{}  |  {}", got_assoc.display(v), got_path.display(v2)),
    )
}

fn default_config_fidelity() -> Outcome {
    let c = RunConfig::default();
    let checks = [
        ("d", c.model.dim as f64, 100.0),
        ("batch", c.train.batch_size as f64, 100.0),
        ("gamma", c.train.gamma, 2.0),
        ("lr", c.train.learning_rate, 1e-4),
        ("epochs", c.train.max_epochs as f64, 5.0),
        ("depth", c.model.max_depth as f64, 2.0),
        ("cap", c.model.neighbor_cap as f64, 1000.0),
        ("k", c.explain.k as f64, 3.0),
        ("theta", c.rules.theta as f64, 5.0),
        ("hc", c.rules.hc_min, 0.7),
        ("support", c.rules.support_min as f64, 20.0),
    ];
    let wrong: Vec<&str> = checks.iter().filter(|(_, got, want)| got != want).map(|c| c.0).collect();
    let parsed = RunConfig::from_toml("").map(|p| p == c).unwrap_or(false);
    outcome(
        wrong.is_empty() && parsed,
        if wrong.is_empty() {
            format!("{} defaults match", checks.len())
        } else {
            format!("wrong defaults: {}", wrong.join(", "))
        },
    )
}

fn run_cli(args: &[&str]) -> i32 {
    xkgat::cli::run(std::iter::once("xkgat").chain(args.iter().copied()))
}

fn pipeline(dir: &Path, workers: &str) -> bool {
    let d = |p: &str| dir.join(p).to_string_lossy().into_owned();
    let cfg = d("run.toml");
    fs::create_dir_all(dir).unwrap();
    fs::write(&cfg, "seed = 11\n[model]\ndim = 16\nneighbor_cap = 10\n[train]\nlearning_rate = 0.01\nmax_epochs = 2\n").unwrap();
    let common = ["--config", cfg.as_str(), "--workers", workers];
    let steps: Vec<Vec<String>> = vec![
        vec!["synth".into(), "--out".into(), d("data")],
        vec!["train".into(), "--data".into(), d("data"), "--out".into(), d("run")],
        vec!["explain".into(), "--data".into(), d("data"), "--checkpoint".into(), d("run/checkpoint"), "--out".into(), d("run")],
        vec!["mine".into(), "--data".into(), d("data"), "--checkpoint".into(), d("run/checkpoint"), "--out".into(), d("run")],
    ];
    steps.iter().all(|s| {
        let mut args: Vec<&str> = s.iter().map(String::as_str).collect();
        args.extend(common);
        run_cli(&args) == 0
    })
}

fn reproducibility() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    if !pipeline(&a, "4") || !pipeline(&b, "1") {
        return outcome(false, "pipeline failed");
    }
    let files = [
        "data/train.tsv",
        "run/checkpoint/checkpoint.toml",
        "run/checkpoint/entity.f64",
        "run/checkpoint/relation.f64",
        "run/checkpoint/entities.txt",
        "run/checkpoint/relations.txt",
        "run/explanations.jsonl",
        "run/rules.tsv",
        "run/high_quality.tsv",
    ];
    let differing: Vec<&str> = files
        .iter()
        .filter(|f| fs::read(a.join(f)).ok() != fs::read(b.join(f)).ok() || fs::read(a.join(f)).map_or(true, |x| x.is_empty()))
        .copied()
        .collect();
    outcome(
        differing.is_empty(),
        if differing.is_empty() {
            format!("{} artifacts byte-identical across two runs (4 and 1 workers)", files.len())
        } else {
            format!("differing or empty: {}", differing.join(", "))
        },
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("gradient fidelity", gradient_fidelity),
        ("attention invariants", attention_invariants),
        ("TransE degeneration", transe_degeneration),
        ("metric oracle", metric_oracle),
        ("brute-force join equivalence", brute_force_equivalence),
        ("planted-rule recovery", planted_recovery),
        ("rule shapes from worked explanations", table4_shapes),
        ("default-config fidelity", default_config_fidelity),
        ("reproducibility", reproducibility),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let o = check();
        println!("{} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        if !o.pass {
            failed += 1;
        }
    }
    println!("{} of {} criteria pass", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
