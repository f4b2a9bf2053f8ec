//! Mini-batch training with Adam and early stopping on validation MRR.

use std::path::PathBuf;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::error::{Error, Result};
use crate::eval::{filtered_mrr, Scorer};
use crate::model::{gradients, sample_negative, transe_gradients, Gradients, ModelConfig, Norm, Parameters};
use crate::store::{Split, Triple, TripleStore};
use crate::subgraph::{build_subgraph, Mode};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "path")]
pub enum Init {
    Uniform,
    FromCheckpoint(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub gamma: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub init: Init,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub early_stopping: bool,
    /// Redraw negatives that happen to be training triples.
    pub filter_negatives: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 100,
            learning_rate: 1e-4,
            gamma: 2.0,
            max_epochs: 5,
            patience: 2,
            seed: 0,
            init: Init::Uniform,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            early_stopping: true,
            filter_negatives: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 1 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if !(self.gamma > 0.0) {
            return Err(Error::Config("gamma must be positive".into()));
        }
        if self.patience < 1 {
            return Err(Error::Config("patience must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.epsilon > 0.0) {
            return Err(Error::Config("Adam needs beta1, beta2 in [0, 1) and epsilon > 0".into()));
        }
        Ok(())
    }
}

/// Adam moments, shaped like [`Parameters`].
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub m_entity: Vec<f64>,
    pub v_entity: Vec<f64>,
    pub m_relation: Vec<f64>,
    pub v_relation: Vec<f64>,
    pub step: u64,
}

impl OptimizerState {
    pub fn new(p: &Parameters) -> Self {
        OptimizerState {
            m_entity: vec![0.0; p.entity.len()],
            v_entity: vec![0.0; p.entity.len()],
            m_relation: vec![0.0; p.relation.len()],
            v_relation: vec![0.0; p.relation.len()],
            step: 0,
        }
    }
}

fn adam_table(theta: &[f64], g: &[f64], m: &mut [f64], v: &mut [f64], cfg: &TrainConfig, step: u64) -> Result<Vec<f64>> {
    let c1 = 1.0 - cfg.beta1.powi(step as i32);
    let c2 = 1.0 - cfg.beta2.powi(step as i32);
    let mut out = Vec::with_capacity(theta.len());
    for i in 0..theta.len() {
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
        let x = theta[i] - cfg.learning_rate * (m[i] / c1) / ((v[i] / c2).sqrt() + cfg.epsilon);
        if !x.is_finite() {
            return Err(Error::NonFinite(format!("Adam update of coordinate {i}")));
        }
        out.push(x);
    }
    Ok(out)
}

/// One bias-corrected Adam update. Inverse relations share their canonical row,
/// so only canonical rows exist to be updated.
pub fn adam_step(params: &mut Parameters, grads: &Gradients, state: &mut OptimizerState, cfg: &TrainConfig) -> Result<()> {
    if grads.entity.len() != params.entity.len() || grads.relation.len() != params.relation.len() {
        return Err(Error::Dimension("gradient shape differs from parameters".into()));
    }
    let step = state.step + 1;
    let entity = adam_table(&params.entity, &grads.entity, &mut state.m_entity, &mut state.v_entity, cfg, step)?;
    let relation = adam_table(
        &params.relation,
        &grads.relation,
        &mut state.m_relation,
        &mut state.v_relation,
        cfg,
        step,
    )?;
    params.entity = entity;
    params.relation = relation;
    state.step = step;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_loss: f64,
    pub valid_mrr: Option<f64>,
    /// Wall-clock time; the only nondeterministic field.
    pub seconds: f64,
}

pub const LOG_HEADER: &str = "epoch,mean_loss,valid_mrr,seconds";

impl EpochRecord {
    pub fn log_line(&self) -> String {
        let mrr = self.valid_mrr.map(|m| format!("{m:.6}")).unwrap_or_default();
        format!("{},{:.6},{},{:.3}", self.epoch, self.mean_loss, mrr, self.seconds)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters with the best validation MRR (the last ones without validation).
    pub params: Parameters,
    /// 0 when the initialization is returned.
    pub best_epoch: usize,
    pub best_valid_mrr: Option<f64>,
    pub history: Vec<EpochRecord>,
}

/// Resolves `cfg.init` into starting parameters.
pub fn initial_parameters(split: &Split, dim: usize, cfg: &TrainConfig) -> Result<Parameters> {
    let vocab = split.train.vocab();
    match &cfg.init {
        Init::Uniform => Ok(Parameters::init(vocab.n_entities(), vocab.n_canonical_relations(), dim, cfg.seed)),
        Init::FromCheckpoint(path) => {
            let ck = Checkpoint::load(path)?;
            ck.check_vocab(vocab)?;
            ck.check_dim(dim)?;
            Ok(ck.params)
        }
    }
}

fn negatives(positives: &[Triple], store: &TripleStore, filter: bool, rng: &mut ChaCha8Rng) -> Vec<Triple> {
    positives
        .iter()
        .map(|t| {
            let mut neg = sample_negative(t, store.n_entities(), rng).corrupted;
            if filter {
                for _ in 0..100 {
                    if !store.contains(&neg) {
                        break;
                    }
                    neg = sample_negative(t, store.n_entities(), rng).corrupted;
                }
            }
            neg
        })
        .collect()
}

#[derive(Clone, Copy)]
enum ModelKind<'m> {
    Attention(&'m ModelConfig),
    Transe(Norm),
}

impl<'m> ModelKind<'m> {
    fn scorer<'p>(self, params: &'p Parameters) -> Scorer<'p>
    where
        'm: 'p,
    {
        match self {
            ModelKind::Attention(config) => Scorer::Attention { params, config },
            ModelKind::Transe(norm) => Scorer::Transe { params, norm },
        }
    }
}

fn fit(
    split: &Split,
    mut params: Parameters,
    cfg: &TrainConfig,
    step: &dyn Fn(&[(Triple, Triple)], &Parameters) -> Result<(f64, Gradients)>,
    kind: ModelKind,
    on_epoch: &mut dyn FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if !split.train.is_augmented() {
        return Err(Error::Config("training expects an inverse-augmented store".into()));
    }
    if split.train.is_empty() {
        return Err(Error::Empty("training set"));
    }
    if split.train.n_entities() < 2 {
        return Err(Error::Config("negative sampling needs at least two entities".into()));
    }
    if cfg.early_stopping && cfg.max_epochs > 0 && split.valid.is_empty() {
        return Err(Error::Empty("validation set (early stopping is enabled)"));
    }
    let validate = !split.valid.is_empty();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut state = OptimizerState::new(&params);
    let mut order: Vec<Triple> = split.train.triples().copied().collect();
    let mut best = TrainOutcome {
        params: params.clone(),
        best_epoch: 0,
        best_valid_mrr: None,
        history: Vec::new(),
    };
    let mut stale = 0;
    for epoch in 1..=cfg.max_epochs {
        let started = Instant::now();
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let negs = negatives(batch, &split.train, cfg.filter_negatives, &mut rng);
            let pairs: Vec<(Triple, Triple)> = batch.iter().copied().zip(negs).collect();
            let (loss, grads) = step(&pairs, &params)?;
            adam_step(&mut params, &grads, &mut state, cfg)?;
            total += loss;
        }
        let valid_mrr = if validate {
            Some(filtered_mrr(&kind.scorer(&params), split, &split.valid)?)
        } else {
            None
        };
        let record = EpochRecord {
            epoch,
            mean_loss: total / order.len() as f64,
            valid_mrr,
            seconds: started.elapsed().as_secs_f64(),
        };
        on_epoch(&record);
        best.history.push(record);
        match (valid_mrr, best.best_valid_mrr) {
            (Some(now), Some(before)) if now <= before => stale += 1,
            (Some(now), _) => {
                stale = 0;
                best.best_valid_mrr = Some(now);
                best.best_epoch = epoch;
                best.params = params.clone();
            }
            (None, _) => {
                best.best_epoch = epoch;
                best.params = params.clone();
            }
        }
        if cfg.early_stopping && stale >= cfg.patience {
            break;
        }
    }
    Ok(best)
}

/// Trains the attention model on an augmented split.
pub fn train(
    split: &Split,
    model: &ModelConfig,
    cfg: &TrainConfig,
    on_epoch: &mut dyn FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    model.validate()?;
    let init = initial_parameters(split, model.dim, cfg)?;
    train_from(split, model, cfg, init, on_epoch)
}

/// Like [`train`], starting from explicit parameters.
pub fn train_from(
    split: &Split,
    model: &ModelConfig,
    cfg: &TrainConfig,
    init: Parameters,
    on_epoch: &mut dyn FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    model.validate()?;
    Scorer::Attention { params: &init, config: model }.check(split.train.vocab())?;
    let opts = model.subgraph_options();
    let store = &split.train;
    let step = |pairs: &[(Triple, Triple)], p: &Parameters| {
        let batch = pairs
            .par_iter()
            .map(|(pos, neg)| {
                Ok((
                    build_subgraph(store, pos, &opts, Mode::Training)?,
                    build_subgraph(store, neg, &opts, Mode::Inference)?,
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        gradients(&batch, p, model, cfg.gamma)
    };
    fit(split, init, cfg, &step, ModelKind::Attention(model), on_epoch)
}

/// Trains plain TransE with the same loss, negatives and stopping rule.
pub fn pretrain_transe(
    split: &Split,
    dim: usize,
    norm: Norm,
    cfg: &TrainConfig,
    on_epoch: &mut dyn FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    if dim < 1 {
        return Err(Error::Config("dimension must be positive".into()));
    }
    let init = initial_parameters(split, dim, cfg)?;
    let step = |pairs: &[(Triple, Triple)], p: &Parameters| transe_gradients(pairs, p, norm, cfg.gamma);
    fit(split, init, cfg, &step, ModelKind::Transe(norm), on_epoch)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Gradients, Parameters};

    #[test]
    fn zero_gradient_only_advances_the_step() {
        let mut p = Parameters::init(3, 2, 4, 0);
        let before = p.clone();
        let g = Gradients::zeros_like(&p);
        let mut s = OptimizerState::new(&p);
        adam_step(&mut p, &g, &mut s, &TrainConfig::default()).unwrap();
        assert_eq!(p, before);
        assert_eq!(s.step, 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = Parameters::zeros(1, 1, 1);
        let mut g = Gradients::zeros_like(&p);
        g.entity[0] = 1.0;
        let mut s = OptimizerState::new(&p);
        let cfg = TrainConfig::default();
        adam_step(&mut p, &g, &mut s, &cfg).unwrap();
        // m̂ = v̂ = 1, so the step is lr / (1 + ε).
        assert!((p.entity[0] + cfg.learning_rate / (1.0 + cfg.epsilon)).abs() < 1e-18);
        assert!((p.entity[0] + cfg.learning_rate).abs() <= cfg.learning_rate * cfg.epsilon);
        assert_eq!(p.relation[0], 0.0);
    }

    #[test]
    fn non_finite_gradient_is_rejected() {
        let mut p = Parameters::zeros(1, 1, 1);
        let mut g = Gradients::zeros_like(&p);
        g.relation[0] = f64::NAN;
        let mut s = OptimizerState::new(&p);
        assert!(adam_step(&mut p, &g, &mut s, &TrainConfig::default()).is_err());
        assert_eq!(s.step, 0);
    }

    #[test]
    fn config_defaults_and_validation() {
        let c = TrainConfig::default();
        assert_eq!((c.batch_size, c.learning_rate, c.gamma, c.max_epochs), (100, 1e-4, 2.0, 5));
        assert_eq!((c.beta1, c.beta2, c.epsilon), (0.9, 0.999, 1e-8));
        assert!(c.validate().is_ok());
        assert!(TrainConfig { patience: 0, ..c.clone() }.validate().is_err());
        assert!(TrainConfig { batch_size: 0, ..c }.validate().is_err());
    }
}
