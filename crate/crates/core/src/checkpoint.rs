//! On-disk checkpoints.
//!
//! A checkpoint is a directory holding `checkpoint.toml` (metadata and model
//! config), `entity.f64` and `relation.f64` (little-endian `f64`, row-major) and
//! the intern tables `entities.txt` / `relations.txt`. Every file is written
//! through a temporary file and a rename.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelConfig, Parameters};
use crate::store::{write_atomic, Vocab};

pub const FORMAT: &str = "xkgat-checkpoint-1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckpointKind {
    Attention,
    Transe,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Meta {
    format: String,
    kind: CheckpointKind,
    dim: usize,
    n_entities: usize,
    n_relations: usize,
    seed: u64,
    iteration: usize,
    entity_table: String,
    relation_table: String,
    entities: String,
    relations: String,
    model: ModelConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub kind: CheckpointKind,
    pub params: Parameters,
    pub model: ModelConfig,
    pub seed: u64,
    /// Epoch the parameters were taken from; 0 for the initialization.
    pub iteration: usize,
    pub entities: Vec<String>,
    /// Canonical relation names in id order.
    pub relations: Vec<String>,
}

fn f64_bytes(xs: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(xs.len() * 8);
    for x in xs {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

fn read_f64s(path: &Path, expected: usize) -> Result<Vec<f64>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() != expected * 8 {
        return Err(Error::Dimension(format!(
            "{} holds {} bytes, expected {}",
            path.display(),
            bytes.len(),
            expected * 8
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}

fn lines(names: &[String]) -> Vec<u8> {
    let mut s = String::new();
    for n in names {
        s.push_str(n);
        s.push('\n');
    }
    s.into_bytes()
}

impl Checkpoint {
    pub fn new(kind: CheckpointKind, params: Parameters, model: ModelConfig, vocab: &Vocab, seed: u64, iteration: usize) -> Self {
        Checkpoint {
            kind,
            params,
            model,
            seed,
            iteration,
            entities: vocab.entity_names().map(str::to_owned).collect(),
            relations: vocab.canonical_relation_names().map(str::to_owned).collect(),
        }
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let meta = Meta {
            format: FORMAT.into(),
            kind: self.kind,
            dim: self.params.dim,
            n_entities: self.params.n_entities,
            n_relations: self.params.n_relations,
            seed: self.seed,
            iteration: self.iteration,
            entity_table: "entity.f64".into(),
            relation_table: "relation.f64".into(),
            entities: "entities.txt".into(),
            relations: "relations.txt".into(),
            model: self.model.clone(),
        };
        write_atomic(&dir.join(&meta.entity_table), &f64_bytes(&self.params.entity))?;
        write_atomic(&dir.join(&meta.relation_table), &f64_bytes(&self.params.relation))?;
        write_atomic(&dir.join(&meta.entities), &lines(&self.entities))?;
        write_atomic(&dir.join(&meta.relations), &lines(&self.relations))?;
        let text = toml::to_string(&meta).map_err(|e| Error::Config(e.to_string()))?;
        write_atomic(&dir.join("checkpoint.toml"), text.as_bytes())
    }

    pub fn load(dir: &Path) -> Result<Checkpoint> {
        let meta_path = dir.join("checkpoint.toml");
        let text = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
        let meta: Meta = toml::from_str(&text).map_err(|e| Error::Malformed(format!("{}: {e}", meta_path.display())))?;
        if meta.format != FORMAT {
            return Err(Error::Malformed(format!("unknown checkpoint format {:?}", meta.format)));
        }
        let entity = read_f64s(&dir.join(&meta.entity_table), meta.n_entities * meta.dim)?;
        let relation = read_f64s(&dir.join(&meta.relation_table), meta.n_relations * meta.dim)?;
        let read_names = |name: &str| -> Result<Vec<String>> {
            let p = dir.join(name);
            let s = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
            Ok(s.lines().map(str::to_owned).collect())
        };
        let entities = read_names(&meta.entities)?;
        let relations = read_names(&meta.relations)?;
        if entities.len() != meta.n_entities || relations.len() != meta.n_relations {
            return Err(Error::Dimension("intern tables disagree with the checkpoint counts".into()));
        }
        Ok(Checkpoint {
            kind: meta.kind,
            params: Parameters {
                dim: meta.dim,
                n_entities: meta.n_entities,
                n_relations: meta.n_relations,
                entity,
                relation,
            },
            model: meta.model,
            seed: meta.seed,
            iteration: meta.iteration,
            entities,
            relations,
        })
    }

    /// Fails unless the checkpoint was trained over exactly this vocabulary.
    pub fn check_vocab(&self, vocab: &Vocab) -> Result<()> {
        if self.params.n_entities != vocab.n_entities() || self.params.n_relations != vocab.n_canonical_relations() {
            return Err(Error::Dimension(format!(
                "checkpoint has {} entities / {} relations, data has {} / {}",
                self.params.n_entities,
                self.params.n_relations,
                vocab.n_entities(),
                vocab.n_canonical_relations()
            )));
        }
        let same_entities = self.entities.iter().map(String::as_str).eq(vocab.entity_names());
        let same_relations = self
            .relations
            .iter()
            .map(String::as_str)
            .eq(vocab.canonical_relation_names());
        if !same_entities || !same_relations {
            return Err(Error::Dimension("checkpoint intern tables differ from the data".into()));
        }
        Ok(())
    }

    /// Fails unless the embedding dimension is `dim`.
    pub fn check_dim(&self, dim: usize) -> Result<()> {
        if self.params.dim != dim {
            return Err(Error::Dimension(format!(
                "checkpoint dimension {} but {} requested",
                self.params.dim, dim
            )));
        }
        Ok(())
    }
}
