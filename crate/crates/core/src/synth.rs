//! Synthetic knowledge graphs with planted rules.
//!
//! Entities are split into *values* (each relation owns a disjoint block of
//! `values_per_relation` values) and *subjects*. Every planted rule gets its
//! own disjoint block of subjects. Each of those subjects carries the rule's
//! head triple; a `confidence` fraction of them also carries the body, the rest
//! carry a different body value. Head coverage of a planted rule is therefore
//! `round(confidence * subjects_per_rule) / subjects_per_rule`.
//!
//! Noise triples only use relations that never appear in a rule head, and
//! never touch a `(subject, body relation)` pair owned by a rule.

use std::collections::{BTreeSet, HashSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::store::{EntityId, RelationId, Triple, TripleStore, Vocab};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlantKind {
    /// `(X, head, c) <= (X, body, c')`
    Association,
    /// `(X, head, Y) <= (X, body, Y)`
    Path,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantSpec {
    pub kind: PlantKind,
    pub head_relation: usize,
    pub body_relation: usize,
    #[serde(default = "one")]
    pub confidence: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_entities: usize,
    pub n_relations: usize,
    pub values_per_relation: usize,
    pub subjects_per_rule: usize,
    pub noise_triples: usize,
    pub seed: u64,
    pub rules: Vec<PlantSpec>,
}

impl Default for SynthConfig {
    /// Roughly 2000 entities, 20 relations and 10 planted rules.
    fn default() -> Self {
        let mut rules = Vec::new();
        for k in 0..10 {
            rules.push(PlantSpec {
                kind: if k < 7 {
                    PlantKind::Association
                } else {
                    PlantKind::Path
                },
                head_relation: k,
                body_relation: 10 + k,
                confidence: 1.0,
            });
        }
        SynthConfig {
            n_entities: 2000,
            n_relations: 20,
            values_per_relation: 8,
            subjects_per_rule: 100,
            noise_triples: 3000,
            seed: 7,
            rules,
        }
    }
}

/// A planted rule expressed over store ids.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedRule {
    pub kind: PlantKind,
    pub head_relation: RelationId,
    pub body_relation: RelationId,
    /// Head object for association rules.
    pub head_constant: Option<EntityId>,
    /// Body object for association rules.
    pub body_constant: Option<EntityId>,
    pub confidence: f64,
    pub subjects: Vec<EntityId>,
}

pub fn relation_name(i: usize) -> String {
    format!("rel{i}")
}

fn validate(cfg: &SynthConfig) -> Result<()> {
    if cfg.n_entities == 0 || cfg.n_relations == 0 || cfg.values_per_relation == 0 {
        return Err(Error::Config("entity, relation and value counts must be positive".into()));
    }
    let n_values = cfg.n_relations * cfg.values_per_relation;
    if n_values >= cfg.n_entities {
        return Err(Error::Config(format!(
            "{} entities cannot hold {} values plus subjects",
            cfg.n_entities, n_values
        )));
    }
    let n_subjects = cfg.n_entities - n_values;
    if cfg.rules.len() * cfg.subjects_per_rule > n_subjects {
        return Err(Error::Config(format!(
            "{} rules x {} subjects exceed the {} available subjects",
            cfg.rules.len(),
            cfg.subjects_per_rule,
            n_subjects
        )));
    }
    let heads: HashSet<usize> = cfg.rules.iter().map(|r| r.head_relation).collect();
    let mut seen = HashSet::new();
    for (i, r) in cfg.rules.iter().enumerate() {
        if r.head_relation >= cfg.n_relations || r.body_relation >= cfg.n_relations {
            return Err(Error::Config(format!("rule {i} references an undeclared relation")));
        }
        if r.head_relation == r.body_relation {
            return Err(Error::Config(format!("rule {i} uses the same relation as head and body")));
        }
        if heads.contains(&r.body_relation) {
            return Err(Error::Config(format!(
                "rule {i}: body relation rel{} is the head of another rule",
                r.body_relation
            )));
        }
        if !(0.0..=1.0).contains(&r.confidence) {
            return Err(Error::Config(format!("rule {i}: confidence outside [0, 1]")));
        }
        if r.kind == PlantKind::Path && r.confidence < 1.0 && cfg.values_per_relation < 2 {
            return Err(Error::Config(format!(
                "rule {i}: partial confidence needs at least two values per relation"
            )));
        }
        if !seen.insert((r.kind, r.head_relation, r.body_relation)) && r.kind == PlantKind::Path {
            return Err(Error::Config(format!("rule {i} duplicates an earlier path rule")));
        }
    }
    for kind in [PlantKind::Association, PlantKind::Path] {
        let mixed = cfg
            .rules
            .iter()
            .filter(|r| r.kind != kind)
            .any(|r| cfg.rules.iter().any(|o| o.kind == kind && o.head_relation == r.head_relation));
        if mixed {
            return Err(Error::Config(
                "a relation cannot head both association and path rules".into(),
            ));
        }
    }
    let assoc_per_head = |h: usize| {
        cfg.rules
            .iter()
            .filter(|r| r.kind == PlantKind::Association && r.head_relation == h)
            .count()
    };
    for r in &cfg.rules {
        if assoc_per_head(r.head_relation) > cfg.values_per_relation {
            return Err(Error::Config(format!(
                "more association rules on rel{} than it has values",
                r.head_relation
            )));
        }
    }
    Ok(())
}

/// Generates a KG in which every planted rule holds with its configured head coverage.
pub fn generate_synthetic(cfg: &SynthConfig) -> Result<(TripleStore, Vec<PlantedRule>)> {
    validate(cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let vpr = cfg.values_per_relation;
    let mut vocab = Vocab::new();
    let relations: Vec<RelationId> = (0..cfg.n_relations)
        .map(|i| vocab.intern_relation(&relation_name(i)))
        .collect::<Result<_>>()?;
    let values: Vec<Vec<EntityId>> = (0..cfg.n_relations)
        .map(|r| {
            (0..vpr)
                .map(|j| vocab.intern_entity(&format!("val{r}_{j}")))
                .collect()
        })
        .collect();
    let n_subjects = cfg.n_entities - cfg.n_relations * vpr;
    let subjects: Vec<EntityId> = (0..n_subjects)
        .map(|i| vocab.intern_entity(&format!("item{i}")))
        .collect();

    let mut order = subjects.clone();
    order.shuffle(&mut rng);
    let mut chunks = order.chunks(cfg.subjects_per_rule.max(1));

    let mut triples: Vec<Triple> = Vec::new();
    let mut owned: HashSet<(EntityId, usize)> = HashSet::new();
    let mut used_head_constants: HashSet<(usize, EntityId)> = HashSet::new();
    let mut used_body_constants: HashSet<(usize, EntityId)> = HashSet::new();
    let mut planted = Vec::new();

    for spec in &cfg.rules {
        let block: Vec<EntityId> = if cfg.subjects_per_rule == 0 {
            Vec::new()
        } else {
            chunks.next().map(<[EntityId]>::to_vec).unwrap_or_default()
        };
        let rh = relations[spec.head_relation];
        let rb = relations[spec.body_relation];
        let n_body = (spec.confidence * block.len() as f64).round() as usize;
        let head_dom = &values[spec.head_relation];
        let body_dom = &values[spec.body_relation];
        let (head_constant, body_constant) = match spec.kind {
            PlantKind::Association => {
                let c = pick_unused(&mut rng, head_dom, spec.head_relation, &mut used_head_constants);
                let cb = pick_unused(&mut rng, body_dom, spec.body_relation, &mut used_body_constants);
                (Some(c), Some(cb))
            }
            PlantKind::Path => (None, None),
        };
        for (i, &x) in block.iter().enumerate() {
            owned.insert((x, spec.body_relation));
            let has_body = i < n_body;
            match spec.kind {
                PlantKind::Association => {
                    let (c, cb) = (head_constant.unwrap(), body_constant.unwrap());
                    triples.push(Triple::new(x, rh, c));
                    if has_body {
                        triples.push(Triple::new(x, rb, cb));
                    } else if let Some(v) = pick_other(&mut rng, body_dom, cb) {
                        triples.push(Triple::new(x, rb, v));
                    }
                }
                PlantKind::Path => {
                    let y = body_dom[rng.gen_range(0..body_dom.len())];
                    triples.push(Triple::new(x, rh, y));
                    if has_body {
                        triples.push(Triple::new(x, rb, y));
                    } else if let Some(v) = pick_other(&mut rng, body_dom, y) {
                        triples.push(Triple::new(x, rb, v));
                    }
                }
            }
        }
        planted.push(PlantedRule {
            kind: spec.kind,
            head_relation: rh,
            body_relation: rb,
            head_constant,
            body_constant,
            confidence: spec.confidence,
            subjects: block,
        });
    }

    let heads: BTreeSet<usize> = cfg.rules.iter().map(|r| r.head_relation).collect();
    let noise_relations: Vec<usize> = (0..cfg.n_relations).filter(|r| !heads.contains(r)).collect();
    if cfg.noise_triples > 0 && noise_relations.is_empty() {
        return Err(Error::Config("noise requested but every relation heads a rule".into()));
    }
    let mut present: HashSet<Triple> = triples.iter().copied().collect();
    let mut added = 0;
    let mut attempts = 0;
    while added < cfg.noise_triples && attempts < cfg.noise_triples * 50 {
        attempts += 1;
        let x = subjects[rng.gen_range(0..subjects.len())];
        let r = noise_relations[rng.gen_range(0..noise_relations.len())];
        if owned.contains(&(x, r)) {
            continue;
        }
        let v = values[r][rng.gen_range(0..vpr)];
        let t = Triple::new(x, relations[r], v);
        if present.insert(t) {
            triples.push(t);
            added += 1;
        }
    }
    Ok((TripleStore::from_parts(vocab, triples), planted))
}

fn pick_unused(
    rng: &mut ChaCha8Rng,
    domain: &[EntityId],
    relation: usize,
    used: &mut HashSet<(usize, EntityId)>,
) -> EntityId {
    let free: Vec<EntityId> = domain
        .iter()
        .copied()
        .filter(|v| !used.contains(&(relation, *v)))
        .collect();
    let pool = if free.is_empty() { domain.to_vec() } else { free };
    let v = pool[rng.gen_range(0..pool.len())];
    used.insert((relation, v));
    v
}

fn pick_other(rng: &mut ChaCha8Rng, domain: &[EntityId], not: EntityId) -> Option<EntityId> {
    let others: Vec<EntityId> = domain.iter().copied().filter(|v| *v != not).collect();
    if others.is_empty() {
        None
    } else {
        Some(others[rng.gen_range(0..others.len())])
    }
}

/// Relations that head a planted rule; the natural target set for splits.
pub fn target_relations(planted: &[PlantedRule]) -> BTreeSet<RelationId> {
    planted.iter().map(|p| p.head_relation).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(kind: PlantKind, confidence: f64) -> SynthConfig {
        SynthConfig {
            n_entities: 300,
            n_relations: 4,
            values_per_relation: 5,
            subjects_per_rule: 100,
            noise_triples: 200,
            seed: 5,
            rules: vec![PlantSpec {
                kind,
                head_relation: 0,
                body_relation: 1,
                confidence,
            }],
        }
    }

    /// Head coverage by a direct scan, independent of the rule miner.
    fn scan_hc(store: &TripleStore, p: &PlantedRule) -> f64 {
        let heads: Vec<&Triple> = store
            .with_relation(p.head_relation)
            .iter()
            .filter(|t| p.head_constant.is_none_or(|c| t.tail == c))
            .collect();
        let supported = heads
            .iter()
            .filter(|t| {
                let obj = p.body_constant.unwrap_or(t.tail);
                store.contains(&Triple::new(t.head, p.body_relation, obj))
            })
            .count();
        supported as f64 / heads.len() as f64
    }

    #[test]
    fn confidence_one_plants_every_head() {
        let (store, planted) = generate_synthetic(&single(PlantKind::Association, 1.0)).unwrap();
        let p = &planted[0];
        assert_eq!(p.subjects.len(), 100);
        let c = p.head_constant.unwrap();
        for &x in &p.subjects {
            assert!(store.contains(&Triple::new(x, p.head_relation, c)));
        }
        assert_eq!(scan_hc(&store, p), 1.0);
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = single(PlantKind::Association, 0.5);
        let (a, _) = generate_synthetic(&cfg).unwrap();
        let (b, _) = generate_synthetic(&cfg).unwrap();
        let ta: Vec<_> = a.triples().copied().collect();
        let tb: Vec<_> = b.triples().copied().collect();
        assert_eq!(ta, tb);
    }

    #[test]
    fn head_coverage_matches_confidence() {
        for kind in [PlantKind::Association, PlantKind::Path] {
            for conf in [0.3, 0.5, 0.77, 1.0] {
                let (store, planted) = generate_synthetic(&single(kind, conf)).unwrap();
                let hc = scan_hc(&store, &planted[0]);
                assert!((hc - conf).abs() <= 0.01 + 1e-12, "{kind:?} conf {conf}: hc {hc}");
            }
        }
    }

    #[test]
    fn contradictory_specs_rejected() {
        let mut cfg = single(PlantKind::Association, 1.0);
        cfg.rules[0].body_relation = 0;
        assert!(generate_synthetic(&cfg).is_err());

        let mut cfg = single(PlantKind::Association, 1.0);
        cfg.rules.push(PlantSpec {
            kind: PlantKind::Association,
            head_relation: 1,
            body_relation: 2,
            confidence: 1.0,
        });
        cfg.n_entities = 400;
        assert!(generate_synthetic(&cfg).is_err(), "chained rules");

        let mut cfg = single(PlantKind::Association, 1.0);
        cfg.rules[0].head_relation = 9;
        assert!(generate_synthetic(&cfg).is_err());

        let mut cfg = single(PlantKind::Path, 1.0);
        cfg.rules.push(PlantSpec {
            kind: PlantKind::Association,
            head_relation: 0,
            body_relation: 2,
            confidence: 1.0,
        });
        cfg.n_entities = 400;
        assert!(generate_synthetic(&cfg).is_err(), "mixed kinds on one head");
    }

    #[test]
    fn default_config_shape() {
        let (store, planted) = generate_synthetic(&SynthConfig::default()).unwrap();
        assert_eq!(planted.len(), 10);
        assert_eq!(store.n_relations(), 20);
        assert_eq!(store.n_entities(), 2000);
    }
}
