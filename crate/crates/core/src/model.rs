//! Embeddings, the attention layer and its analytic backward pass.
//!
//! Matrices are row-major `Vec<f64>` with `dim` columns. Relation ids follow the
//! layout produced by inverse augmentation: ids `0..n` are canonical and id
//! `n + i` is the inverse of `i`, looked up as the negated row `i`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::store::{EntityId, RelationId, Triple};
use crate::subgraph::{NeighborSubgraph, SubgraphOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Norm {
    L1,
    L2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub dim: usize,
    pub layers: usize,
    /// Per-layer weights; empty means uniform `1/layers`.
    pub omega: Vec<f64>,
    pub norm: Norm,
    pub max_depth: usize,
    pub neighbor_cap: usize,
    /// Seed for the neighbor-cap sample.
    pub sample_seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            dim: 100,
            layers: 2,
            omega: Vec::new(),
            norm: Norm::L1,
            max_depth: 2,
            neighbor_cap: 1000,
            sample_seed: 0,
        }
    }
}

impl ModelConfig {
    /// Resolved layer weights.
    pub fn weights(&self) -> Vec<f64> {
        if self.omega.is_empty() {
            vec![1.0 / self.layers as f64; self.layers]
        } else {
            self.omega.clone()
        }
    }

    pub fn subgraph_options(&self) -> SubgraphOptions {
        SubgraphOptions {
            max_depth: self.max_depth,
            neighbor_cap: self.neighbor_cap,
            seed: self.sample_seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers < 1 {
            return Err(Error::Config("at least one layer is required".into()));
        }
        if self.dim < 1 {
            return Err(Error::Config("dimension must be positive".into()));
        }
        if self.max_depth < self.layers {
            return Err(Error::Config(format!(
                "max_depth {} is smaller than the layer count {}",
                self.max_depth, self.layers
            )));
        }
        if self.neighbor_cap < 1 {
            return Err(Error::Config("neighbor_cap must be at least 1".into()));
        }
        let w = self.weights();
        if w.len() != self.layers {
            return Err(Error::Config(format!(
                "{} layer weights given for {} layers",
                w.len(),
                self.layers
            )));
        }
        if w.iter().any(|x| !(*x >= 0.0)) {
            return Err(Error::Config("layer weights must be nonnegative".into()));
        }
        let sum: f64 = w.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("layer weights sum to {sum}, expected 1")));
        }
        Ok(())
    }
}

/// Entity and canonical-relation embedding tables.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameters {
    pub dim: usize,
    pub n_entities: usize,
    pub n_relations: usize,
    pub entity: Vec<f64>,
    pub relation: Vec<f64>,
}

impl Parameters {
    pub fn zeros(n_entities: usize, n_relations: usize, dim: usize) -> Self {
        Parameters {
            dim,
            n_entities,
            n_relations,
            entity: vec![0.0; n_entities * dim],
            relation: vec![0.0; n_relations * dim],
        }
    }

    /// Every value i.i.d. uniform on `[-6/√d, 6/√d]`.
    pub fn init(n_entities: usize, n_relations: usize, dim: usize, seed: u64) -> Self {
        let bound = 6.0 / (dim as f64).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = Self::zeros(n_entities, n_relations, dim);
        for x in p.entity.iter_mut().chain(p.relation.iter_mut()) {
            *x = rng.gen_range(-bound..=bound);
        }
        p
    }

    pub fn entity(&self, e: EntityId) -> &[f64] {
        let d = self.dim;
        &self.entity[e.index() * d..(e.index() + 1) * d]
    }

    /// Table row and sign for a (possibly inverse) relation.
    pub fn relation_slot(&self, r: RelationId) -> (usize, f64) {
        let i = r.index();
        if i < self.n_relations {
            (i, 1.0)
        } else {
            debug_assert!(i < 2 * self.n_relations, "relation id {i} out of range");
            (i - self.n_relations, -1.0)
        }
    }

    /// Writes `lookup(r)` into `out`; inverse relations come back negated.
    pub fn relation_into(&self, r: RelationId, out: &mut [f64]) {
        let (row, sign) = self.relation_slot(r);
        let src = &self.relation[row * self.dim..(row + 1) * self.dim];
        if sign > 0.0 {
            out.copy_from_slice(src);
        } else {
            for (o, s) in out.iter_mut().zip(src) {
                *o = -s;
            }
        }
    }

    pub fn relation(&self, r: RelationId) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        self.relation_into(r, &mut v);
        v
    }

    pub fn check_ids(&self, t: &Triple) -> Result<()> {
        if t.head.index() >= self.n_entities
            || t.tail.index() >= self.n_entities
            || t.relation.index() >= 2 * self.n_relations
        {
            return Err(Error::Dimension(format!(
                "triple {t} is outside the parameter tables ({} entities, {} relations)",
                self.n_entities, self.n_relations
            )));
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.entity.iter().chain(&self.relation).all(|x| x.is_finite())
    }
}

/// `‖s_h + r − t‖` under the chosen norm.
pub fn score(s_h: &[f64], r: &[f64], t: &[f64], norm: Norm) -> f64 {
    let it = s_h.iter().zip(r).zip(t).map(|((a, b), c)| (a + b) - c);
    match norm {
        Norm::L1 => it.map(f64::abs).sum(),
        Norm::L2 => it.map(|x| x * x).sum::<f64>().sqrt(),
    }
}

/// `max(0, pos + γ − neg)`
pub fn margin_loss(pos: f64, neg: f64, gamma: f64) -> f64 {
    (pos + gamma - neg).max(0.0)
}

/// Plain TransE plausibility `‖h + r − t‖`.
pub fn transe_score(t: &Triple, params: &Parameters, norm: Norm) -> f64 {
    let r = params.relation(t.relation);
    score(params.entity(t.head), &r, params.entity(t.tail), norm)
}

/// Attention weights of one row, aligned with its adjacency list.
pub type AttentionRow = Vec<(u32, f64)>;

fn check_finite(xs: &[f64], what: &str) -> Result<()> {
    if xs.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.to_owned()))
    }
}

/// One output row of the basic layer.
///
/// `shared_tail` is the full `S^t = H + R` matrix, `shared_head_i` is
/// `T_i − R_i`. For a row without neighbors the output is `head_i` unchanged.
fn layer_row(
    neighbors: &[u32],
    head_i: &[f64],
    shared_head_i: &[f64],
    shared_tail: &[f64],
    dim: usize,
    out: &mut [f64],
) -> AttentionRow {
    if neighbors.is_empty() {
        out.copy_from_slice(head_i);
        return Vec::new();
    }
    let sims: Vec<f64> = neighbors
        .iter()
        .map(|&j| {
            let st = &shared_tail[j as usize * dim..(j as usize + 1) * dim];
            dot(shared_head_i, st)
        })
        .collect();
    let max = sims.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = sims.iter().map(|c| (c - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    out.fill(0.0);
    let mut row = Vec::with_capacity(neighbors.len());
    for (&j, e) in neighbors.iter().zip(&exps) {
        let w = e / total;
        let st = &shared_tail[j as usize * dim..(j as usize + 1) * dim];
        for (o, s) in out.iter_mut().zip(st) {
            *o += w * s;
        }
        row.push((j, w));
    }
    row
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// `S⁺ = softmax_A((T − R)(H + R)ᵀ) (H + R)` with identity fallback for rows without neighbors.
///
/// Returns `S⁺` (`n × dim`) and the sparse attention rows of `Cⁿ`.
pub fn basic_layer(
    adjacency: &[Vec<u32>],
    heads: &[f64],
    relations: &[f64],
    tails: &[f64],
    dim: usize,
) -> Result<(Vec<f64>, Vec<AttentionRow>)> {
    let n = adjacency.len();
    if heads.len() != n * dim || relations.len() != n * dim || tails.len() != n * dim {
        return Err(Error::Dimension(format!(
            "layer inputs must be {n} x {dim} matrices"
        )));
    }
    check_finite(heads, "layer head matrix")?;
    check_finite(relations, "layer relation matrix")?;
    check_finite(tails, "layer tail matrix")?;
    let shared_tail = add(heads, relations);
    let shared_head = sub(tails, relations);
    let mut out = vec![0.0; n * dim];
    let mut attention = Vec::with_capacity(n);
    for i in 0..n {
        let rows = i * dim..(i + 1) * dim;
        attention.push(layer_row(
            &adjacency[i],
            &heads[rows.clone()],
            &shared_head[rows.clone()],
            &shared_tail,
            dim,
            &mut out[rows],
        ));
    }
    Ok((out, attention))
}

/// Everything the forward pass computed for one subgraph.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    /// `C^k` for each layer, sparse by row.
    pub attention: Vec<Vec<AttentionRow>>,
    /// `S^k` for each layer, `n × dim`.
    pub outputs: Vec<Vec<f64>>,
    /// Final head representation `s^h`.
    pub head_repr: Vec<f64>,
    pub score: f64,
    /// Rows without neighbors.
    pub fallback: Vec<bool>,
    pub dim: usize,
}

impl ForwardTrace {
    pub fn layers(&self) -> usize {
        self.attention.len()
    }

    /// `C^k_ij` for 0-based layer `k`; zero off the adjacency.
    pub fn weight(&self, k: usize, i: usize, j: usize) -> f64 {
        let row = &self.attention[k][i];
        match row.binary_search_by_key(&(j as u32), |(c, _)| *c) {
            Ok(p) => row[p].1,
            Err(_) => 0.0,
        }
    }

    pub fn dense_attention(&self, k: usize) -> Vec<Vec<f64>> {
        let n = self.attention[k].len();
        let mut m = vec![vec![0.0; n]; n];
        for (i, row) in self.attention[k].iter().enumerate() {
            for &(j, w) in row {
                m[i][j as usize] = w;
            }
        }
        m
    }

    pub fn output_row(&self, k: usize, i: usize) -> &[f64] {
        &self.outputs[k][i * self.dim..(i + 1) * self.dim]
    }
}

struct Gathered {
    heads: Vec<f64>,
    relations: Vec<f64>,
    tails: Vec<f64>,
}

fn gather(g: &NeighborSubgraph, params: &Parameters) -> Gathered {
    let d = params.dim;
    let n = g.len();
    let mut heads = vec![0.0; n * d];
    let mut relations = vec![0.0; n * d];
    let mut tails = vec![0.0; n * d];
    for (i, t) in g.triples.iter().enumerate() {
        heads[i * d..(i + 1) * d].copy_from_slice(params.entity(t.head));
        params.relation_into(t.relation, &mut relations[i * d..(i + 1) * d]);
        tails[i * d..(i + 1) * d].copy_from_slice(params.entity(t.tail));
    }
    Gathered {
        heads,
        relations,
        tails,
    }
}

fn combine(outputs: &[Vec<f64>], weights: &[f64], row: usize, dim: usize) -> Vec<f64> {
    let mut s = vec![0.0; dim];
    for (w, out) in weights.iter().zip(outputs) {
        for (acc, x) in s.iter_mut().zip(&out[row * dim..(row + 1) * dim]) {
            *acc += w * x;
        }
    }
    s
}

/// Runs the stacked layers over `g` and scores its target.
pub fn forward(g: &NeighborSubgraph, params: &Parameters, config: &ModelConfig) -> Result<ForwardTrace> {
    if g.is_empty() {
        return Err(Error::Empty("subgraph"));
    }
    if config.layers < 1 {
        return Err(Error::Config("at least one layer is required".into()));
    }
    if params.dim != config.dim {
        return Err(Error::Dimension(format!(
            "parameters have dimension {}, config expects {}",
            params.dim, config.dim
        )));
    }
    for t in &g.triples {
        params.check_ids(t)?;
    }
    let d = params.dim;
    let weights = config.weights();
    let Gathered {
        heads,
        relations,
        tails,
    } = gather(g, params);
    let mut attention = Vec::with_capacity(config.layers);
    let mut outputs: Vec<Vec<f64>> = Vec::with_capacity(config.layers);
    for k in 0..config.layers {
        let input = if k == 0 { &heads } else { &outputs[k - 1] };
        let (out, att) = basic_layer(&g.adjacency, input, &relations, &tails, d)?;
        attention.push(att);
        outputs.push(out);
    }
    let n = g.target_index();
    let head_repr = combine(&outputs, &weights, n, d);
    let s = score(&head_repr, &relations[n * d..(n + 1) * d], &tails[n * d..(n + 1) * d], config.norm);
    if !s.is_finite() {
        return Err(Error::NonFinite(format!("score of {}", g.target())));
    }
    Ok(ForwardTrace {
        attention,
        outputs,
        head_repr,
        score: s,
        fallback: g.adjacency.iter().map(Vec::is_empty).collect(),
        dim: d,
    })
}


/// Layer outputs over the tail-independent rows of a `(head, relation, ?)` query.
///
/// Scoring a candidate only needs the target row of each layer. The row
/// arithmetic is shared with [`forward`], so scores agree bit for bit with a
/// full forward pass over [`QueryBase::subgraph_for`](crate::subgraph::QueryBase::subgraph_for).
#[derive(Debug, Clone)]
pub struct QueryForward {
    /// `S^t` of every layer over the base rows.
    shared_tail: Vec<Vec<f64>>,
    head: Vec<f64>,
    query_relation: Vec<f64>,
    target_neighbors: Vec<u32>,
    weights: Vec<f64>,
    norm: Norm,
    dim: usize,
}

impl QueryForward {
    pub fn new(base: &crate::subgraph::QueryBase, params: &Parameters, config: &ModelConfig) -> Result<Self> {
        let d = params.dim;
        let g = NeighborSubgraph {
            triples: base.rows.clone(),
            depth: base.depth.clone(),
            adjacency: base.adjacency.clone(),
        };
        for t in &g.triples {
            params.check_ids(t)?;
        }
        let Gathered {
            heads,
            relations,
            tails,
        } = gather(&g, params);
        let mut shared_tail = Vec::with_capacity(config.layers);
        let mut input = heads;
        for _ in 0..config.layers {
            shared_tail.push(add(&input, &relations));
            let (out, _) = basic_layer(&g.adjacency, &input, &relations, &tails, d)?;
            input = out;
        }
        Ok(QueryForward {
            shared_tail,
            head: params.entity(base.head).to_vec(),
            query_relation: params.relation(base.relation),
            target_neighbors: base.target_neighbors.clone(),
            weights: config.weights(),
            norm: config.norm,
            dim: d,
        })
    }

    /// Score of `(head, relation, tail)` given the tail's embedding.
    pub fn score(&self, tail: &[f64]) -> f64 {
        let d = self.dim;
        let shared_head = sub(tail, &self.query_relation);
        let mut prev = self.head.clone();
        let mut row = vec![0.0; d];
        let mut head_repr = vec![0.0; d];
        for (k, w) in self.weights.iter().enumerate() {
            layer_row(&self.target_neighbors, &prev, &shared_head, &self.shared_tail[k], d, &mut row);
            for (acc, x) in head_repr.iter_mut().zip(&row) {
                *acc += w * x;
            }
            prev.copy_from_slice(&row);
        }
        score(&head_repr, &self.query_relation, tail, self.norm)
    }
}

/// Dense gradient buffers shaped like [`Parameters`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub dim: usize,
    pub entity: Vec<f64>,
    pub relation: Vec<f64>,
}

impl Gradients {
    pub fn zeros_like(p: &Parameters) -> Self {
        Gradients {
            dim: p.dim,
            entity: vec![0.0; p.entity.len()],
            relation: vec![0.0; p.relation.len()],
        }
    }

    fn add_entity(&mut self, e: EntityId, v: &[f64]) {
        let d = self.dim;
        for (g, x) in self.entity[e.index() * d..(e.index() + 1) * d].iter_mut().zip(v) {
            *g += x;
        }
    }

    /// Adds `v` to the gradient of `lookup(r)`; inverse lookups flow negated to their canonical row.
    fn add_relation(&mut self, r: RelationId, v: &[f64], n_relations: usize) {
        let d = self.dim;
        let (row, sign) = if r.index() < n_relations {
            (r.index(), 1.0)
        } else {
            (r.index() - n_relations, -1.0)
        };
        for (g, x) in self.relation[row * d..(row + 1) * d].iter_mut().zip(v) {
            *g += sign * x;
        }
    }

    pub fn is_zero(&self) -> bool {
        self.entity.iter().chain(&self.relation).all(|x| *x == 0.0)
    }
}

/// Gradient of `coef · score` for one subgraph, per gathered row.
#[derive(Debug, Clone)]
pub struct SubgraphGrad {
    triples: Vec<Triple>,
    d_heads: Vec<f64>,
    d_relations: Vec<f64>,
    d_tails: Vec<f64>,
}

impl SubgraphGrad {
    pub fn scatter_into(&self, g: &mut Gradients, n_relations: usize) {
        let d = g.dim;
        for (i, t) in self.triples.iter().enumerate() {
            let rows = i * d..(i + 1) * d;
            g.add_entity(t.head, &self.d_heads[rows.clone()]);
            g.add_relation(t.relation, &self.d_relations[rows.clone()], n_relations);
            g.add_entity(t.tail, &self.d_tails[rows]);
        }
    }
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Subgradient of the norm at `v`; zero where a coordinate (L1) or the vector (L2) is zero.
fn norm_gradient(v: &[f64], norm: Norm) -> Vec<f64> {
    match norm {
        Norm::L1 => v
            .iter()
            .map(|x| if *x > 0.0 { 1.0 } else if *x < 0.0 { -1.0 } else { 0.0 })
            .collect(),
        Norm::L2 => {
            let len = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if len == 0.0 {
                vec![0.0; v.len()]
            } else {
                v.iter().map(|x| x / len).collect()
            }
        }
    }
}

/// Back-propagates `coef · score` through the score, the layer weights and every layer.
pub fn backward(
    g: &NeighborSubgraph,
    trace: &ForwardTrace,
    params: &Parameters,
    config: &ModelConfig,
    coef: f64,
) -> Result<SubgraphGrad> {
    let d = params.dim;
    let n = g.len();
    let target = g.target_index();
    let weights = config.weights();
    let Gathered {
        heads,
        relations,
        tails,
    } = gather(g, params);
    let mut d_relations = vec![0.0; n * d];
    let mut d_tails = vec![0.0; n * d];

    let row = |m: &[f64], i: usize| -> std::ops::Range<usize> {
        debug_assert!(m.len() >= (i + 1) * d);
        i * d..(i + 1) * d
    };
    let t_rows = row(&heads, target);
    let residual: Vec<f64> = trace
        .head_repr
        .iter()
        .zip(&relations[t_rows.clone()])
        .zip(&tails[t_rows.clone()])
        .map(|((a, b), c)| (a + b) - c)
        .collect();
    let ds_h: Vec<f64> = norm_gradient(&residual, config.norm)
        .into_iter()
        .map(|x| coef * x)
        .collect();
    axpy(&mut d_relations[t_rows.clone()], 1.0, &ds_h);
    axpy(&mut d_tails[t_rows.clone()], -1.0, &ds_h);

    let shared_head = sub(&tails, &relations);
    let mut d_out = vec![0.0; n * d];
    for k in (0..trace.layers()).rev() {
        axpy(&mut d_out[t_rows.clone()], weights[k], &ds_h);
        let input = if k == 0 { &heads } else { &trace.outputs[k - 1] };
        let shared_tail = add(input, &relations);
        let mut d_input = vec![0.0; n * d];
        let mut d_st = vec![0.0; n * d];
        let mut d_sh = vec![0.0; n * d];
        for i in 0..n {
            let ri = row(&d_out, i);
            let d_s = &d_out[ri.clone()];
            if d_s.iter().all(|x| *x == 0.0) {
                continue;
            }
            let att = &trace.attention[k][i];
            if att.is_empty() {
                axpy(&mut d_input[ri], 1.0, d_s);
                continue;
            }
            let dps: Vec<f64> = att
                .iter()
                .map(|&(j, _)| dot(d_s, &shared_tail[row(&shared_tail, j as usize)]))
                .collect();
            let mean: f64 = att.iter().zip(&dps).map(|((_, p), dp)| p * dp).sum();
            for (&(j, p), dp) in att.iter().zip(&dps) {
                let rj = row(&shared_tail, j as usize);
                axpy(&mut d_st[rj.clone()], p, d_s);
                let dc = p * (dp - mean);
                axpy(&mut d_sh[ri.clone()], dc, &shared_tail[rj.clone()]);
                axpy(&mut d_st[rj], dc, &shared_head[ri.clone()]);
            }
        }
        // S^t = H + R, S^h = T − R
        for x in 0..n * d {
            d_input[x] += d_st[x];
            d_relations[x] += d_st[x] - d_sh[x];
            d_tails[x] += d_sh[x];
        }
        d_out = d_input;
    }
    let grad = SubgraphGrad {
        triples: g.triples.clone(),
        d_heads: d_out,
        d_relations,
        d_tails,
    };
    for (i, t) in g.triples.iter().enumerate() {
        let r = i * d..(i + 1) * d;
        let finite = grad.d_heads[r.clone()]
            .iter()
            .chain(&grad.d_relations[r.clone()])
            .chain(&grad.d_tails[r])
            .all(|x| x.is_finite());
        if !finite {
            return Err(Error::NonFinite(format!(
                "gradient at row {i} {t} of subgraph for {}",
                g.target()
            )));
        }
    }
    Ok(grad)
}

/// Hinge loss and gradient contributions of one positive/negative pair.
pub fn pair_gradient(
    pos: &NeighborSubgraph,
    neg: &NeighborSubgraph,
    params: &Parameters,
    config: &ModelConfig,
    gamma: f64,
) -> Result<(f64, Vec<SubgraphGrad>)> {
    let tp = forward(pos, params, config)?;
    let tn = forward(neg, params, config)?;
    let loss = margin_loss(tp.score, tn.score, gamma);
    if loss > 0.0 {
        Ok((
            loss,
            vec![
                backward(pos, &tp, params, config, 1.0)?,
                backward(neg, &tn, params, config, -1.0)?,
            ],
        ))
    } else {
        Ok((loss, Vec::new()))
    }
}

/// Summed margin loss over `batch` and its gradient. Pairs are processed in
/// parallel and reduced in batch order, so the result does not depend on the
/// thread count.
pub fn gradients(
    batch: &[(NeighborSubgraph, NeighborSubgraph)],
    params: &Parameters,
    config: &ModelConfig,
    gamma: f64,
) -> Result<(f64, Gradients)> {
    use rayon::prelude::*;
    if batch.is_empty() {
        return Err(Error::Empty("batch"));
    }
    let parts: Vec<(f64, Vec<SubgraphGrad>)> = batch
        .par_iter()
        .map(|(p, n)| pair_gradient(p, n, params, config, gamma))
        .collect::<Result<_>>()?;
    let mut grads = Gradients::zeros_like(params);
    let mut loss = 0.0;
    for (l, gs) in &parts {
        loss += l;
        for g in gs {
            g.scatter_into(&mut grads, params.n_relations);
        }
    }
    Ok((loss, grads))
}

/// Summed TransE margin loss over `(positive, negative)` pairs and its gradient.
pub fn transe_gradients(batch: &[(Triple, Triple)], params: &Parameters, norm: Norm, gamma: f64) -> Result<(f64, Gradients)> {
    if batch.is_empty() {
        return Err(Error::Empty("batch"));
    }
    let mut grads = Gradients::zeros_like(params);
    let mut loss = 0.0;
    for (pos, neg) in batch {
        params.check_ids(pos)?;
        params.check_ids(neg)?;
        let l = margin_loss(transe_score(pos, params, norm), transe_score(neg, params, norm), gamma);
        loss += l;
        if l <= 0.0 {
            continue;
        }
        for (t, coef) in [(pos, 1.0), (neg, -1.0)] {
            let r = params.relation(t.relation);
            let v: Vec<f64> = params
                .entity(t.head)
                .iter()
                .zip(&r)
                .zip(params.entity(t.tail))
                .map(|((a, b), c)| (a + b) - c)
                .collect();
            let gv: Vec<f64> = norm_gradient(&v, norm).into_iter().map(|x| coef * x).collect();
            grads.add_entity(t.head, &gv);
            grads.add_relation(t.relation, &gv, params.n_relations);
            let neg_gv: Vec<f64> = gv.iter().map(|x| -x).collect();
            grads.add_entity(t.tail, &neg_gv);
        }
    }
    if !grads.entity.iter().chain(&grads.relation).all(|x| x.is_finite()) {
        return Err(Error::NonFinite("TransE gradient".into()));
    }
    Ok((loss, grads))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Head,
    Tail,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NegativeSample {
    pub corrupted: Triple,
    pub side: Side,
}

/// Replaces the head or the tail (each with probability 1/2) by a different, uniformly drawn entity.
pub fn sample_negative<R: Rng + ?Sized>(t: &Triple, n_entities: usize, rng: &mut R) -> NegativeSample {
    assert!(n_entities >= 2, "negative sampling needs at least two entities");
    let side = if rng.gen_bool(0.5) { Side::Head } else { Side::Tail };
    let original = match side {
        Side::Head => t.head,
        Side::Tail => t.tail,
    };
    let mut e = rng.gen_range(0..n_entities as u32 - 1);
    if e >= original.0 {
        e += 1;
    }
    let mut corrupted = *t;
    match side {
        Side::Head => corrupted.head = EntityId(e),
        Side::Tail => corrupted.tail = EntityId(e),
    }
    NegativeSample { corrupted, side }
}
