//! Neighbor subgraphs around a target triple.
//!
//! A one-degree neighbor of `(e1, r, e2)` is any triple `(e', r', e1)` whose
//! tail is `e1`. The subgraph `N` is grown breadth-first from the target's head
//! up to `max_depth` degrees, rows are stored deepest level first, and the
//! target is always the last row. Adjacency is kept sparse: `adjacency[i]`
//! lists every `j != i` with `tail(N_j) == head(N_i)`, sorted ascending.

use std::collections::{HashMap, HashSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::store::{EntityId, RelationId, Triple, TripleStore};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SubgraphOptions {
    pub max_depth: usize,
    pub neighbor_cap: usize,
    pub seed: u64,
}

impl Default for SubgraphOptions {
    fn default() -> Self {
        SubgraphOptions {
            max_depth: 2,
            neighbor_cap: 1000,
            seed: 0,
        }
    }
}

/// Whether the target must already be a known fact.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Training,
    Inference,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeighborSubgraph {
    pub triples: Vec<Triple>,
    /// `0` for the target, `d` for a d-degree neighbor.
    pub depth: Vec<u8>,
    pub adjacency: Vec<Vec<u32>>,
}

impl NeighborSubgraph {
    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn target_index(&self) -> usize {
        self.triples.len() - 1
    }

    pub fn target(&self) -> Triple {
        self.triples[self.target_index()]
    }

    pub fn is_adjacent(&self, i: usize, j: usize) -> bool {
        self.adjacency[i].binary_search(&(j as u32)).is_ok()
    }

    /// `Σ_j A_ij` for every row.
    pub fn row_degrees(&self) -> Vec<usize> {
        self.adjacency.iter().map(Vec::len).collect()
    }

    /// The dense 0/1 adjacency matrix.
    pub fn dense_adjacency(&self) -> Vec<Vec<u8>> {
        let n = self.len();
        let mut a = vec![vec![0u8; n]; n];
        for (i, row) in self.adjacency.iter().enumerate() {
            for &j in row {
                a[i][j as usize] = 1;
            }
        }
        a
    }

    /// Assembles a subgraph from explicit rows, computing adjacency.
    pub fn from_rows(triples: Vec<Triple>, depth: Vec<u8>) -> Self {
        let adjacency = adjacency_of(&triples);
        NeighborSubgraph {
            triples,
            depth,
            adjacency,
        }
    }
}

/// Adjacency per the one-degree relation: `j` is listed for `i` iff `tail(j) == head(i)`, `j != i`.
pub fn adjacency_of(triples: &[Triple]) -> Vec<Vec<u32>> {
    let mut by_tail: HashMap<EntityId, Vec<u32>> = HashMap::new();
    for (j, t) in triples.iter().enumerate() {
        by_tail.entry(t.tail).or_default().push(j as u32);
    }
    triples
        .iter()
        .enumerate()
        .map(|(i, t)| {
            by_tail
                .get(&t.head)
                .map(|js| js.iter().copied().filter(|&j| j as usize != i).collect())
                .unwrap_or_default()
        })
        .collect()
}

fn leakage(store: &TripleStore, target: &Triple) -> [Option<Triple>; 2] {
    [Some(*target), store.inverse_of(target)]
}

/// Triples whose tail is the target's head, minus the target and its inverse.
pub fn one_degree_neighbors(store: &TripleStore, target: &Triple) -> Vec<Triple> {
    let leak = leakage(store, target);
    store
        .with_tail(target.head)
        .iter()
        .filter(|t| !leak.contains(&Some(**t)))
        .copied()
        .collect()
}

fn entity_rng(seed: u64, entity: EntityId) -> ChaCha8Rng {
    // Distinct stream per (seed, entity).
    let mixed = seed ^ (entity.0 as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    ChaCha8Rng::seed_from_u64(mixed)
}

/// Candidates for expanding `entity`, capped by a seeded sample that keeps store order.
fn expansion(store: &TripleStore, entity: EntityId, leak: &[Option<Triple>], opts: &SubgraphOptions) -> Vec<Triple> {
    let candidates: Vec<Triple> = store
        .with_tail(entity)
        .iter()
        .filter(|t| !leak.contains(&Some(**t)))
        .copied()
        .collect();
    if candidates.len() <= opts.neighbor_cap {
        return candidates;
    }
    let mut rng = entity_rng(opts.seed, entity);
    let mut picked = rand::seq::index::sample(&mut rng, candidates.len(), opts.neighbor_cap).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| candidates[i]).collect()
}

/// Breadth-first levels around `root`, excluding `leak`. Level `d-1` holds depth-`d` rows.
fn grow(store: &TripleStore, root: EntityId, leak: &[Option<Triple>], opts: &SubgraphOptions) -> Vec<Vec<Triple>> {
    let mut seen: HashSet<Triple> = leak.iter().flatten().copied().collect();
    let mut expanded: HashSet<EntityId> = HashSet::new();
    let mut levels: Vec<Vec<Triple>> = Vec::new();
    let mut frontier = vec![root];
    for _ in 0..opts.max_depth {
        let mut level = Vec::new();
        for &e in &frontier {
            if !expanded.insert(e) {
                continue;
            }
            for t in expansion(store, e, leak, opts) {
                if seen.insert(t) {
                    level.push(t);
                }
            }
        }
        if level.is_empty() {
            break;
        }
        frontier = level.iter().map(|t| t.head).collect();
        levels.push(level);
    }
    levels
}

fn validate(opts: &SubgraphOptions) -> Result<()> {
    if opts.max_depth < 1 || opts.neighbor_cap < 1 {
        return Err(Error::Config("max_depth and neighbor_cap must be at least 1".into()));
    }
    Ok(())
}

/// Builds the neighbor subgraph `N` for `target`, with the target as the last row.
pub fn build_subgraph(store: &TripleStore, target: &Triple, opts: &SubgraphOptions, mode: Mode) -> Result<NeighborSubgraph> {
    validate(opts)?;
    if mode == Mode::Training && !store.contains(target) {
        return Err(Error::TargetNotInStore(target.to_string()));
    }
    let leak = leakage(store, target);
    let levels = grow(store, target.head, &leak, opts);
    let mut triples = Vec::new();
    let mut depth = Vec::new();
    for (d, level) in levels.iter().enumerate().rev() {
        triples.extend_from_slice(level);
        depth.extend(std::iter::repeat_n((d + 1) as u8, level.len()));
    }
    triples.push(*target);
    depth.push(0);
    Ok(NeighborSubgraph::from_rows(triples, depth))
}

/// The part of every `(head, relation, ?)` subgraph that does not depend on the tail.
///
/// For a candidate tail `e` with [`QueryBase::is_shared`] true, the subgraph of
/// `(head, relation, e)` is exactly `rows ++ [(head, relation, e)]`, and no base
/// row is adjacent to the target row.
#[derive(Debug, Clone)]
pub struct QueryBase {
    pub head: EntityId,
    pub relation: RelationId,
    pub rows: Vec<Triple>,
    pub depth: Vec<u8>,
    pub adjacency: Vec<Vec<u32>>,
    /// Base rows whose tail is `head`; the target row's neighbors.
    pub target_neighbors: Vec<u32>,
    special: HashSet<EntityId>,
}

impl QueryBase {
    pub fn new(store: &TripleStore, head: EntityId, relation: RelationId, opts: &SubgraphOptions) -> Result<QueryBase> {
        validate(opts)?;
        let levels = grow(store, head, &[], opts);
        let mut rows = Vec::new();
        let mut depth = Vec::new();
        for (d, level) in levels.iter().enumerate().rev() {
            rows.extend_from_slice(level);
            depth.extend(std::iter::repeat_n((d + 1) as u8, level.len()));
        }
        let adjacency = adjacency_of(&rows);
        let target_neighbors = rows
            .iter()
            .enumerate()
            .filter(|(_, t)| t.tail == head)
            .map(|(j, _)| j as u32)
            .collect();
        // Tails whose subgraph differs from the base: heads of base rows (adjacent
        // to the target row, or expanded), the head itself, and tails whose inverse
        // triple sits among the head's raw neighbors.
        let mut special: HashSet<EntityId> = rows.iter().map(|t| t.head).collect();
        special.insert(head);
        let inverse = store.vocab().relation(relation).inverse;
        for t in store.with_tail(head) {
            if Some(t.relation) == inverse || (t.relation == relation && t.head == head) {
                special.insert(t.head);
            }
        }
        Ok(QueryBase {
            head,
            relation,
            rows,
            depth,
            adjacency,
            target_neighbors,
            special,
        })
    }

    /// True when `(head, relation, tail)` has the shared base as its neighbor set.
    pub fn is_shared(&self, tail: EntityId) -> bool {
        !self.special.contains(&tail)
    }

    /// The full subgraph for a shared-base candidate.
    pub fn subgraph_for(&self, tail: EntityId) -> NeighborSubgraph {
        let mut triples = self.rows.clone();
        triples.push(Triple::new(self.head, self.relation, tail));
        let mut depth = self.depth.clone();
        depth.push(0);
        NeighborSubgraph::from_rows(triples, depth)
    }
}
