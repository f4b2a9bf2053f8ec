//! Rules generalized from explanations: grounding search, head coverage,
//! filtering and forward application.
//!
//! Atoms always use canonical relations. Variables are numbered from 1 in order
//! of first appearance (head subject, head object, then body atoms left to
//! right), so structurally equal rules compare equal.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;

use indexmap::IndexMap;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::explain::{explain, Explanation};
use crate::model::{ModelConfig, Parameters};
use crate::store::{EntityId, RelationId, Triple, TripleStore, Vocab};
use crate::synth::{PlantKind, PlantedRule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    Var(u32),
    Const(EntityId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Atom {
    pub subject: Term,
    pub relation: RelationId,
    pub object: Term,
}

impl Atom {
    pub fn new(subject: Term, relation: RelationId, object: Term) -> Self {
        Atom {
            subject,
            relation,
            object,
        }
    }

    /// Rewrites an inverse-relation atom into canonical direction.
    fn canonical(self, vocab: &Vocab) -> Atom {
        let info = vocab.relation(self.relation);
        if info.is_inverse {
            Atom::new(self.object, info.canonical, self.subject)
        } else {
            self
        }
    }

    fn terms(&self) -> [Term; 2] {
        [self.subject, self.object]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RuleKind {
    Association,
    Path,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Rule {
    pub head: Atom,
    pub body: Vec<Atom>,
}

/// Entity bound to each variable; index `v - 1` holds variable `v`.
pub type Binding = Vec<EntityId>;

impl Rule {
    /// Builds a rule with canonically renumbered variables.
    pub fn new(head: Atom, body: Vec<Atom>) -> Rule {
        let mut rule = Rule { head, body };
        rule.renumber();
        rule
    }

    fn atoms(&self) -> impl Iterator<Item = &Atom> {
        std::iter::once(&self.head).chain(&self.body)
    }

    fn renumber(&mut self) -> HashMap<u32, u32> {
        let mut map = HashMap::new();
        let order: Vec<u32> = self
            .atoms()
            .flat_map(Atom::terms)
            .filter_map(|t| match t {
                Term::Var(v) => Some(v),
                Term::Const(_) => None,
            })
            .collect();
        for v in order {
            let next = map.len() as u32 + 1;
            map.entry(v).or_insert(next);
        }
        let rename = |t: &mut Term| {
            if let Term::Var(v) = t {
                *v = map[v];
            }
        };
        for a in std::iter::once(&mut self.head).chain(self.body.iter_mut()) {
            rename(&mut a.subject);
            rename(&mut a.object);
        }
        map
    }

    /// Path rules have a variable head object; association rules a constant one.
    pub fn kind(&self) -> RuleKind {
        match self.head.object {
            Term::Var(_) => RuleKind::Path,
            Term::Const(_) => RuleKind::Association,
        }
    }

    pub fn n_vars(&self) -> usize {
        self.atoms()
            .flat_map(Atom::terms)
            .filter_map(|t| match t {
                Term::Var(v) => Some(v as usize),
                Term::Const(_) => None,
            })
            .max()
            .unwrap_or(0)
    }

    fn vars_of<'a>(atoms: impl Iterator<Item = &'a Atom>) -> BTreeSet<u32> {
        atoms
            .flat_map(Atom::terms)
            .filter_map(|t| match t {
                Term::Var(v) => Some(v),
                Term::Const(_) => None,
            })
            .collect()
    }

    pub fn head_vars(&self) -> BTreeSet<u32> {
        Self::vars_of(std::iter::once(&self.head))
    }

    pub fn body_vars(&self) -> BTreeSet<u32> {
        Self::vars_of(self.body.iter())
    }

    /// Fails when a head variable does not occur in the body.
    pub fn check_bound(&self) -> Result<()> {
        let body = self.body_vars();
        if let Some(v) = self.head_vars().iter().find(|v| !body.contains(v)) {
            return Err(Error::UnboundHeadVariable(format!("?V{v}")));
        }
        Ok(())
    }

    /// Head triple and body triples under `binding`.
    pub fn instantiate(&self, binding: &[EntityId]) -> (Triple, Vec<Triple>) {
        let ground = |a: &Atom| {
            let term = |t: Term| match t {
                Term::Var(v) => binding[v as usize - 1],
                Term::Const(e) => e,
            };
            Triple::new(term(a.subject), a.relation, term(a.object))
        };
        (ground(&self.head), self.body.iter().map(ground).collect())
    }

    /// Text form `(s, r, o) <= (s, r, o) & ...` with `?Vn` variables.
    pub fn display(&self, vocab: &Vocab) -> String {
        let term = |t: Term| match t {
            Term::Var(v) => format!("?V{v}"),
            Term::Const(e) => vocab.entity_name(e).to_owned(),
        };
        let atom = |a: &Atom| format!("({}, {}, {})", term(a.subject), vocab.relation_name(a.relation), term(a.object));
        let body: Vec<String> = self.body.iter().map(atom).collect();
        format!("{} <= {}", atom(&self.head), body.join(" & "))
    }

    /// Parses the text form written by [`Rule::display`].
    pub fn parse(text: &str, vocab: &Vocab) -> Result<Rule> {
        let malformed = |why: &str| Error::Malformed(format!("rule {text:?}: {why}"));
        let (head, body) = text.split_once(" <= ").ok_or_else(|| malformed("missing ' <= '"))?;
        let term = |s: &str| -> Result<Term> {
            if let Some(n) = s.strip_prefix("?V") {
                let v: u32 = n.parse().map_err(|_| malformed("bad variable"))?;
                if v == 0 {
                    return Err(malformed("variables start at ?V1"));
                }
                Ok(Term::Var(v))
            } else {
                vocab.entity_id(s).map(Term::Const).ok_or_else(|| Error::Unknown {
                    kind: "entity",
                    name: s.to_owned(),
                })
            }
        };
        let atom = |s: &str| -> Result<Atom> {
            let inner = s
                .trim()
                .strip_prefix('(')
                .and_then(|s| s.strip_suffix(')'))
                .ok_or_else(|| malformed("atom must be parenthesized"))?;
            let parts: Vec<&str> = inner.split(", ").collect();
            if parts.len() != 3 {
                return Err(malformed("atom must have three terms"));
            }
            let relation = vocab.relation_id(parts[1]).ok_or_else(|| Error::Unknown {
                kind: "relation",
                name: parts[1].to_owned(),
            })?;
            if vocab.relation(relation).is_inverse {
                return Err(malformed("rules use canonical relations"));
            }
            Ok(Atom::new(term(parts[0])?, relation, term(parts[2])?))
        };
        let body: Vec<Atom> = body.split(" & ").map(atom).collect::<Result<_>>()?;
        if body.is_empty() {
            return Err(malformed("empty body"));
        }
        Ok(Rule::new(atom(head)?, body))
    }

    /// The rule a planted pattern is expected to produce.
    pub fn from_planted(p: &PlantedRule) -> Rule {
        match p.kind {
            PlantKind::Association => Rule::new(
                Atom::new(Term::Var(1), p.head_relation, Term::Const(p.head_constant.expect("constant"))),
                vec![Atom::new(Term::Var(1), p.body_relation, Term::Const(p.body_constant.expect("constant")))],
            ),
            PlantKind::Path => Rule::new(
                Atom::new(Term::Var(1), p.head_relation, Term::Var(2)),
                vec![Atom::new(Term::Var(1), p.body_relation, Term::Var(2))],
            ),
        }
    }
}

/// Generalizes an explanation into its rule and the explanation's own binding.
///
/// Chain entities `e0 = h¹, e1, …, el = head(target)` are assigned by position:
/// `e1..el` become variables. `e0` and the head object share a variable when
/// the explanation is closed and stay constants otherwise.
pub fn generalize(expl: &Explanation, vocab: &Vocab) -> Result<(Rule, Binding)> {
    expl.check_chain()?;
    let l = expl.path.len();
    let mut entities = vec![expl.path[0].head];
    entities.extend(expl.path.iter().map(|t| t.tail));
    let closed = expl.closed();
    // Provisional variable ids are positions; position 0 uses id l + 1.
    let term_at = |i: usize| -> Term {
        if i > 0 {
            Term::Var(i as u32)
        } else if closed {
            Term::Var(l as u32 + 1)
        } else {
            Term::Const(entities[0])
        }
    };
    let head_object = if closed {
        term_at(0)
    } else {
        Term::Const(expl.target.tail)
    };
    let head = Atom::new(term_at(l), expl.target.relation, head_object).canonical(vocab);
    let body: Vec<Atom> = (0..l)
        .map(|i| Atom::new(term_at(i), expl.path[i].relation, term_at(i + 1)).canonical(vocab))
        .collect();
    let mut rule = Rule { head, body };
    let map = rule.renumber();
    let mut binding = vec![EntityId(0); map.len()];
    for (&provisional, &v) in &map {
        let pos = if provisional as usize == l + 1 { 0 } else { provisional as usize };
        binding[v as usize - 1] = entities[pos];
    }
    Ok((rule, binding))
}

pub fn explanation_to_rule(expl: &Explanation, vocab: &Vocab) -> Result<Rule> {
    Ok(generalize(expl, vocab)?.0)
}

/// Distinct rules with their generation counts, in first-seen order.
pub fn aggregate_rules(rules: impl IntoIterator<Item = Rule>) -> IndexMap<Rule, usize> {
    let mut out = IndexMap::new();
    for r in rules {
        *out.entry(r).or_insert(0) += 1;
    }
    out
}

/// Backtracking join over `atoms`, calling `visit` on each complete solution.
/// `visit` returns false to stop the search; the return value reports whether
/// the search ran to completion.
fn search(
    atoms: &[Atom],
    done: &mut [bool],
    binding: &mut [Option<EntityId>],
    store: &TripleStore,
    visit: &mut dyn FnMut(&[Option<EntityId>]) -> bool,
) -> bool {
    let value = |t: Term, b: &[Option<EntityId>]| match t {
        Term::Const(e) => Some(e),
        Term::Var(v) => b[v as usize - 1],
    };
    let next = (0..atoms.len()).filter(|&i| !done[i]).max_by_key(|&i| {
        let a = atoms[i];
        // Prefer the atom with the most bound terms; ties go to the earliest.
        (
            value(a.subject, binding).is_some() as u8 + value(a.object, binding).is_some() as u8,
            std::cmp::Reverse(i),
        )
    });
    let Some(i) = next else {
        return visit(binding);
    };
    let a = atoms[i];
    done[i] = true;
    let mut keep_going = true;
    let mut try_pair = |s: EntityId, o: EntityId, binding: &mut [Option<EntityId>], done: &mut [bool]| -> bool {
        let mut set = Vec::with_capacity(2);
        for (t, e) in [(a.subject, s), (a.object, o)] {
            match t {
                Term::Const(c) if c != e => {
                    for v in set.drain(..) {
                        binding[v] = None;
                    }
                    return true;
                }
                Term::Const(_) => {}
                Term::Var(v) => {
                    let slot = v as usize - 1;
                    match binding[slot] {
                        Some(b) if b != e => {
                            for v in set.drain(..) {
                                binding[v] = None;
                            }
                            return true;
                        }
                        Some(_) => {}
                        None => {
                            binding[slot] = Some(e);
                            set.push(slot);
                        }
                    }
                }
            }
        }
        let go = search(atoms, done, binding, store, visit);
        for v in set {
            binding[v] = None;
        }
        go
    };
    match (value(a.subject, binding), value(a.object, binding)) {
        (Some(s), Some(o)) => {
            if store.contains(&Triple::new(s, a.relation, o)) {
                keep_going = try_pair(s, o, binding, done);
            }
        }
        (Some(s), None) => {
            for &o in store.tails(s, a.relation) {
                if !try_pair(s, o, binding, done) {
                    keep_going = false;
                    break;
                }
            }
        }
        (None, Some(o)) => {
            for &s in store.heads(a.relation, o) {
                if !try_pair(s, o, binding, done) {
                    keep_going = false;
                    break;
                }
            }
        }
        (None, None) => {
            for t in store.with_relation(a.relation) {
                if !try_pair(t.head, t.tail, binding, done) {
                    keep_going = false;
                    break;
                }
            }
        }
    }
    done[i] = false;
    keep_going
}

fn solve(atoms: &[Atom], n_vars: usize, fixed: &[(u32, EntityId)], store: &TripleStore, visit: &mut dyn FnMut(&[Option<EntityId>]) -> bool) {
    let mut binding = vec![None; n_vars];
    for &(v, e) in fixed {
        binding[v as usize - 1] = Some(e);
    }
    let mut done = vec![false; atoms.len()];
    search(atoms, &mut done, &mut binding, store, visit);
}

fn all_atoms(rule: &Rule) -> Vec<Atom> {
    rule.atoms().copied().collect()
}

/// Number of bindings under which the head and every body atom are in `store`.
pub fn count_groundings(rule: &Rule, store: &TripleStore) -> usize {
    let mut n = 0;
    solve(&all_atoms(rule), rule.n_vars(), &[], store, &mut |_| {
        n += 1;
        true
    });
    n
}

/// Groundings of the explanation's rule other than the explanation's own binding.
pub fn count_supports(expl: &Explanation, store: &TripleStore) -> Result<usize> {
    let (rule, own) = generalize(expl, store.vocab())?;
    let mut n = 0;
    solve(&all_atoms(&rule), rule.n_vars(), &[], store, &mut |b| {
        if !b.iter().zip(&own).all(|(x, y)| *x == Some(*y)) {
            n += 1;
        }
        true
    });
    Ok(n)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Coverage {
    pub hc: f64,
    pub support: usize,
    pub head_size: usize,
}

/// Head coverage: head bindings whose body is satisfiable, over all head bindings.
pub fn head_coverage(rule: &Rule, store: &TripleStore) -> Coverage {
    let n_vars = rule.n_vars();
    let head_vars: Vec<u32> = rule.head_vars().into_iter().collect();
    let mut heads = Vec::new();
    solve(&[rule.head], n_vars, &[], store, &mut |b| {
        heads.push(head_vars.iter().map(|&v| (v, b[v as usize - 1].expect("bound"))).collect::<Vec<_>>());
        true
    });
    let head_size = heads.len();
    let support = heads
        .iter()
        .filter(|fixed| {
            let mut found = false;
            solve(&rule.body, n_vars, fixed, store, &mut |_| {
                found = true;
                false
            });
            found
        })
        .count();
    let hc = if head_size == 0 { 0.0 } else { support as f64 / head_size as f64 };
    Coverage { hc, support, head_size }
}

/// Head triples implied by `rule` that are not yet in `store`.
pub fn infer(rule: &Rule, store: &TripleStore) -> Result<BTreeSet<Triple>> {
    rule.check_bound()?;
    let mut out = BTreeSet::new();
    solve(&rule.body, rule.n_vars(), &[], store, &mut |b| {
        let full: Binding = b.iter().map(|e| e.unwrap_or(EntityId(u32::MAX))).collect();
        let (head, _) = rule.instantiate(&full);
        if !store.contains(&head) {
            out.insert(head);
        }
        true
    });
    Ok(out)
}

/// Novel triples implied by any of `rules`, deduplicated and sorted by ids.
pub fn apply_rules<'a>(rules: impl IntoIterator<Item = &'a Rule>, store: &TripleStore) -> Result<Vec<Triple>> {
    let rules: Vec<&Rule> = rules.into_iter().collect();
    let sets: Vec<BTreeSet<Triple>> = rules.par_iter().map(|r| infer(r, store)).collect::<Result<_>>()?;
    let all: BTreeSet<Triple> = sets.into_iter().flatten().collect();
    Ok(all.into_iter().collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RuleStats {
    pub generation_count: usize,
    pub hc: f64,
    pub support: usize,
    pub head_size: usize,
    pub inferred: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinedRule {
    pub rule: Rule,
    pub stats: RuleStats,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RuleThresholds {
    pub theta: usize,
    pub hc_min: f64,
    pub support_min: usize,
}

impl Default for RuleThresholds {
    fn default() -> Self {
        RuleThresholds {
            theta: 5,
            hc_min: 0.7,
            support_min: 20,
        }
    }
}

impl RuleThresholds {
    pub fn is_quality(&self, s: &RuleStats) -> bool {
        s.generation_count >= self.theta
    }

    pub fn is_high_quality(&self, s: &RuleStats) -> bool {
        self.is_quality(s) && s.hc > self.hc_min && s.support >= self.support_min
    }
}

/// Splits mined rules into the quality and high-quality sets.
pub fn filter_rules(rules: &[MinedRule], t: &RuleThresholds) -> (Vec<MinedRule>, Vec<MinedRule>) {
    let quality: Vec<MinedRule> = rules.iter().filter(|r| t.is_quality(&r.stats)).cloned().collect();
    let high = quality.iter().filter(|r| t.is_high_quality(&r.stats)).cloned().collect();
    (quality, high)
}

/// Measures every rule generated at least `min_count` times.
///
/// The output is sorted by generation count (descending), then by rule.
pub fn measure_rules(counts: &IndexMap<Rule, usize>, store: &TripleStore, min_count: usize) -> Result<Vec<MinedRule>> {
    let chosen: Vec<(&Rule, usize)> = counts.iter().filter(|(_, &c)| c >= min_count).map(|(r, &c)| (r, c)).collect();
    let mut out: Vec<MinedRule> = chosen
        .par_iter()
        .map(|&(rule, generation_count)| {
            let cov = head_coverage(rule, store);
            let inferred = infer(rule, store)?.len();
            Ok(MinedRule {
                rule: rule.clone(),
                stats: RuleStats {
                    generation_count,
                    hc: cov.hc,
                    support: cov.support,
                    head_size: cov.head_size,
                    inferred,
                },
            })
        })
        .collect::<Result<_>>()?;
    out.sort_by(|a, b| b.stats.generation_count.cmp(&a.stats.generation_count).then_with(|| a.rule.cmp(&b.rule)));
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mining {
    /// Distinct rules generated, before any filtering.
    pub n_generated: usize,
    /// Rules generated at least `theta` times, with their stats.
    pub quality: Vec<MinedRule>,
    pub high_quality: Vec<MinedRule>,
}

/// Explains each triple, generalizes the top-`k` explanations into rules and
/// measures the quality rules against `store`.
pub fn mine_rules(
    triples: &[Triple],
    store: &TripleStore,
    params: &Parameters,
    config: &ModelConfig,
    k: usize,
    thresholds: &RuleThresholds,
) -> Result<Mining> {
    let per_triple: Vec<Vec<Rule>> = triples
        .par_iter()
        .map(|t| {
            explain(store, t, params, config, k)?
                .iter()
                .map(|e| explanation_to_rule(e, store.vocab()))
                .collect()
        })
        .collect::<Result<_>>()?;
    let counts = aggregate_rules(per_triple.into_iter().flatten());
    let quality = measure_rules(&counts, store, thresholds.theta)?;
    let high_quality = quality.iter().filter(|r| thresholds.is_high_quality(&r.stats)).cloned().collect();
    Ok(Mining {
        n_generated: counts.len(),
        quality,
        high_quality,
    })
}

pub const RULE_FILE_HEADER: &str = "# rule\tgeneration_count\thc\tsupport\tinferred";

/// Rule file text: a header comment, then one rule per line with its stats.
pub fn format_rules(rules: &[MinedRule], vocab: &Vocab) -> String {
    let mut out = format!("{RULE_FILE_HEADER}\n");
    for r in rules {
        let s = &r.stats;
        let _ = writeln!(
            out,
            "{}\t{}\t{:.6}\t{}\t{}",
            r.rule.display(vocab),
            s.generation_count,
            s.hc,
            s.support,
            s.inferred
        );
    }
    out
}

/// Reads the rules of a rule file, ignoring stats columns and `#` lines.
pub fn parse_rules(text: &str, vocab: &Vocab) -> Result<Vec<Rule>> {
    text.lines()
        .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
        .map(|l| Rule::parse(l.split('\t').next().unwrap_or(""), vocab))
        .collect()
}
