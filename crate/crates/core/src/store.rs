//! Triple storage: interning, indexes, inverse augmentation and dataset splits.
//!
//! A [`TripleStore`] is immutable once built. Every constructor goes through
//! [`TripleStore::from_parts`], which rebuilds the indexes from the triple set,
//! so the indexes can never drift from the triples they describe.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use indexmap::IndexSet;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Suffix reserved for the surface name of inverse relations.
pub const INVERSE_SUFFIX: &str = "~inv";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
pub struct EntityId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
pub struct RelationId(pub u32);

impl EntityId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl RelationId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// A `(head, relation, tail)` fact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
pub struct Triple {
    pub head: EntityId,
    pub relation: RelationId,
    pub tail: EntityId,
}

impl Triple {
    pub fn new(head: EntityId, relation: RelationId, tail: EntityId) -> Self {
        Triple {
            head,
            relation,
            tail,
        }
    }
}

impl fmt::Display for Triple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.head.0, self.relation.0, self.tail.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelationInfo {
    pub name: String,
    /// The canonical member of the `{r, r⁻¹}` pair.
    pub canonical: RelationId,
    /// `None` until the store has been augmented with inverses.
    pub inverse: Option<RelationId>,
    pub is_inverse: bool,
}

/// Intern tables shared by every split of one dataset.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocab {
    entities: IndexSet<String>,
    relation_names: IndexSet<String>,
    relations: Vec<RelationInfo>,
}

impl Vocab {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn intern_entity(&mut self, name: &str) -> EntityId {
        if let Some(i) = self.entities.get_index_of(name) {
            return EntityId(i as u32);
        }
        let (i, _) = self.entities.insert_full(name.to_owned());
        EntityId(i as u32)
    }

    /// Interns a canonical relation. Names carrying the inverse suffix are rejected.
    pub fn intern_relation(&mut self, name: &str) -> Result<RelationId> {
        if name.ends_with(INVERSE_SUFFIX) {
            return Err(Error::ReservedName(name.to_owned()));
        }
        if let Some(i) = self.relation_names.get_index_of(name) {
            return Ok(RelationId(i as u32));
        }
        let id = RelationId(self.relations.len() as u32);
        self.relation_names.insert(name.to_owned());
        self.relations.push(RelationInfo {
            name: name.to_owned(),
            canonical: id,
            inverse: None,
            is_inverse: false,
        });
        Ok(id)
    }

    pub fn entity_id(&self, name: &str) -> Option<EntityId> {
        self.entities.get_index_of(name).map(|i| EntityId(i as u32))
    }

    pub fn relation_id(&self, name: &str) -> Option<RelationId> {
        self.relation_names
            .get_index_of(name)
            .map(|i| RelationId(i as u32))
    }

    pub fn entity_name(&self, id: EntityId) -> &str {
        &self.entities[id.index()]
    }

    pub fn relation_name(&self, id: RelationId) -> &str {
        &self.relations[id.index()].name
    }

    pub fn relation(&self, id: RelationId) -> &RelationInfo {
        &self.relations[id.index()]
    }

    pub fn n_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn n_relations(&self) -> usize {
        self.relations.len()
    }

    /// Number of relations that are not inverses. Canonical ids are `0..n`.
    pub fn n_canonical_relations(&self) -> usize {
        self.relations.iter().filter(|r| !r.is_inverse).count()
    }

    pub fn is_augmented(&self) -> bool {
        self.relations.iter().any(|r| r.is_inverse)
    }

    pub fn entity_names(&self) -> impl Iterator<Item = &str> {
        self.entities.iter().map(String::as_str)
    }

    /// Names of canonical relations, in id order.
    pub fn canonical_relation_names(&self) -> impl Iterator<Item = &str> {
        self.relations
            .iter()
            .filter(|r| !r.is_inverse)
            .map(|r| r.name.as_str())
    }

    /// Adds `r⁻¹` for every canonical relation, appended after the canonical ids.
    fn augmented(&self) -> Result<Vocab> {
        if self.is_augmented() {
            return Err(Error::AlreadyAugmented);
        }
        let mut out = self.clone();
        let n = self.relations.len() as u32;
        for i in 0..n {
            let inv = RelationId(n + i);
            let name = format!("{}{}", self.relations[i as usize].name, INVERSE_SUFFIX);
            out.relation_names.insert(name.clone());
            out.relations[i as usize].inverse = Some(inv);
            out.relations.push(RelationInfo {
                name,
                canonical: RelationId(i),
                inverse: Some(RelationId(i)),
                is_inverse: true,
            });
        }
        Ok(out)
    }

    /// Renders a triple with surface names.
    pub fn render(&self, t: &Triple) -> (String, String, String) {
        (
            self.entity_name(t.head).to_owned(),
            self.relation_name(t.relation).to_owned(),
            self.entity_name(t.tail).to_owned(),
        )
    }

    /// Looks up a triple given by surface names.
    pub fn lookup(&self, head: &str, relation: &str, tail: &str) -> Result<Triple> {
        let h = self.entity_id(head).ok_or_else(|| Error::Unknown {
            kind: "entity",
            name: head.to_owned(),
        })?;
        let r = self.relation_id(relation).ok_or_else(|| Error::Unknown {
            kind: "relation",
            name: relation.to_owned(),
        })?;
        let t = self.entity_id(tail).ok_or_else(|| Error::Unknown {
            kind: "entity",
            name: tail.to_owned(),
        })?;
        Ok(Triple::new(h, r, t))
    }
}

/// An immutable, indexed set of triples over a [`Vocab`].
#[derive(Debug, Clone)]
pub struct TripleStore {
    vocab: Vocab,
    triples: IndexSet<Triple>,
    by_head: HashMap<EntityId, Vec<Triple>>,
    by_tail: HashMap<EntityId, Vec<Triple>>,
    by_head_relation: HashMap<(EntityId, RelationId), Vec<EntityId>>,
    by_relation_tail: HashMap<(RelationId, EntityId), Vec<EntityId>>,
    by_relation: HashMap<RelationId, Vec<Triple>>,
}

impl TripleStore {
    /// Builds a store and its indexes. Duplicate triples collapse.
    pub fn from_parts(vocab: Vocab, triples: impl IntoIterator<Item = Triple>) -> Self {
        let triples: IndexSet<Triple> = triples.into_iter().collect();
        let mut by_head: HashMap<EntityId, Vec<Triple>> = HashMap::new();
        let mut by_tail: HashMap<EntityId, Vec<Triple>> = HashMap::new();
        let mut by_head_relation: HashMap<(EntityId, RelationId), Vec<EntityId>> = HashMap::new();
        let mut by_relation_tail: HashMap<(RelationId, EntityId), Vec<EntityId>> = HashMap::new();
        let mut by_relation: HashMap<RelationId, Vec<Triple>> = HashMap::new();
        for t in &triples {
            debug_assert!(t.head.index() < vocab.n_entities());
            debug_assert!(t.tail.index() < vocab.n_entities());
            debug_assert!(t.relation.index() < vocab.n_relations());
            by_head.entry(t.head).or_default().push(*t);
            by_tail.entry(t.tail).or_default().push(*t);
            by_head_relation
                .entry((t.head, t.relation))
                .or_default()
                .push(t.tail);
            by_relation_tail
                .entry((t.relation, t.tail))
                .or_default()
                .push(t.head);
            by_relation.entry(t.relation).or_default().push(*t);
        }
        TripleStore {
            vocab,
            triples,
            by_head,
            by_tail,
            by_head_relation,
            by_relation_tail,
            by_relation,
        }
    }

    pub fn empty(vocab: Vocab) -> Self {
        Self::from_parts(vocab, std::iter::empty())
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn n_entities(&self) -> usize {
        self.vocab.n_entities()
    }

    pub fn n_relations(&self) -> usize {
        self.vocab.n_relations()
    }

    pub fn contains(&self, t: &Triple) -> bool {
        self.triples.contains(t)
    }

    /// Triples in first-inserted order.
    pub fn triples(&self) -> impl ExactSizeIterator<Item = &Triple> {
        self.triples.iter()
    }

    pub fn with_head(&self, e: EntityId) -> &[Triple] {
        self.by_head.get(&e).map_or(&[], Vec::as_slice)
    }

    pub fn with_tail(&self, e: EntityId) -> &[Triple] {
        self.by_tail.get(&e).map_or(&[], Vec::as_slice)
    }

    pub fn tails(&self, head: EntityId, relation: RelationId) -> &[EntityId] {
        self.by_head_relation
            .get(&(head, relation))
            .map_or(&[], Vec::as_slice)
    }

    pub fn heads(&self, relation: RelationId, tail: EntityId) -> &[EntityId] {
        self.by_relation_tail
            .get(&(relation, tail))
            .map_or(&[], Vec::as_slice)
    }

    pub fn with_relation(&self, r: RelationId) -> &[Triple] {
        self.by_relation.get(&r).map_or(&[], Vec::as_slice)
    }

    pub fn is_augmented(&self) -> bool {
        self.vocab.is_augmented()
    }

    /// Returns the store with `(t, r⁻¹, h)` added for every `(h, r, t)`.
    pub fn augment_inverses(&self) -> Result<TripleStore> {
        let vocab = self.vocab.augmented()?;
        let mut all: Vec<Triple> = self.triples.iter().copied().collect();
        for t in &self.triples {
            let inv = vocab.relation(t.relation).inverse.expect("augmented");
            all.push(Triple::new(t.tail, inv, t.head));
        }
        Ok(TripleStore::from_parts(vocab, all))
    }

    /// Inverse of a triple, `(t, r⁻¹, h)`. Requires an augmented vocabulary.
    pub fn inverse_of(&self, t: &Triple) -> Option<Triple> {
        self.vocab
            .relation(t.relation)
            .inverse
            .map(|inv| Triple::new(t.tail, inv, t.head))
    }

    /// Unrolls an inverse triple into its canonical surface direction.
    pub fn canonicalize(&self, t: Triple) -> Triple {
        canonicalize(&self.vocab, t)
    }

    /// Same triple set over a different (compatible) vocabulary.
    pub fn with_vocab(&self, vocab: Vocab) -> TripleStore {
        TripleStore::from_parts(vocab, self.triples.iter().copied())
    }

    /// Writes the canonical triples as TSV, in store order.
    pub fn write_tsv(&self, path: &Path) -> Result<()> {
        let canonical: Vec<Triple> = self
            .triples
            .iter()
            .filter(|t| !self.vocab.relation(t.relation).is_inverse)
            .copied()
            .collect();
        write_triples(path, &self.vocab, &canonical)
    }
}

/// `(b, r⁻¹, a)` becomes `(a, r, b)`; canonical triples are returned unchanged.
pub fn canonicalize(vocab: &Vocab, t: Triple) -> Triple {
    let info = vocab.relation(t.relation);
    if info.is_inverse {
        Triple::new(t.tail, info.canonical, t.head)
    } else {
        t
    }
}

/// Reads a TSV triple file into `vocab`, returning the distinct triples in file order.
pub fn read_triples_into(vocab: &mut Vocab, path: &Path) -> Result<Vec<Triple>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut seen = IndexSet::new();
    for (i, line) in text.split('\n').enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::Parse {
                path: path.to_owned(),
                line: i + 1,
                message: format!("expected 3 tab-separated fields, found {}", fields.len()),
            });
        }
        if fields.iter().any(|f| f.is_empty()) {
            return Err(Error::Parse {
                path: path.to_owned(),
                line: i + 1,
                message: "empty field".into(),
            });
        }
        let h = vocab.intern_entity(fields[0]);
        let r = vocab.intern_relation(fields[1]).map_err(|e| Error::Parse {
            path: path.to_owned(),
            line: i + 1,
            message: e.to_string(),
        })?;
        let t = vocab.intern_entity(fields[2]);
        seen.insert(Triple::new(h, r, t));
    }
    Ok(seen.into_iter().collect())
}

/// Loads a `head<TAB>relation<TAB>tail` file.
pub fn load_triples(path: &Path) -> Result<TripleStore> {
    let mut vocab = Vocab::new();
    let triples = read_triples_into(&mut vocab, path)?;
    if triples.is_empty() {
        return Err(Error::EmptyFile(path.to_owned()));
    }
    Ok(TripleStore::from_parts(vocab, triples))
}

pub fn write_triples(path: &Path, vocab: &Vocab, triples: &[Triple]) -> Result<()> {
    let mut out = String::new();
    for t in triples {
        let (h, r, tl) = vocab.render(t);
        out.push_str(&h);
        out.push('\t');
        out.push_str(&r);
        out.push('\t');
        out.push_str(&tl);
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

/// Reads one relation name per line.
pub fn read_relation_list(vocab: &Vocab, path: &Path) -> Result<BTreeSet<RelationId>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(|name| {
            vocab.relation_id(name).ok_or_else(|| Error::Unknown {
                kind: "relation",
                name: name.to_owned(),
            })
        })
        .collect()
}

pub fn write_relation_list(path: &Path, vocab: &Vocab, relations: &BTreeSet<RelationId>) -> Result<()> {
    let mut out = String::new();
    for r in relations {
        out.push_str(vocab.relation_name(*r));
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

/// Writes via a temporary sibling file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|e| e.to_str()).unwrap_or("")
    ));
    {
        let f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        let mut w = BufWriter::new(f);
        w.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
        let f = w.into_inner().map_err(|e| Error::io(&tmp, e.into_error()))?;
        f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Which non-target triples stay in the training set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    /// Every remaining triple is used for training.
    All,
    /// Only the remaining target-relation triples are used for training.
    Part,
}

#[derive(Debug, Clone)]
pub struct Split {
    pub train: TripleStore,
    pub valid: Vec<Triple>,
    pub test: Vec<Triple>,
    pub target_relations: BTreeSet<RelationId>,
}

#[derive(Debug, Clone, Copy)]
pub struct SplitOptions {
    pub test_fraction: f64,
    pub valid_fraction: f64,
    pub seed: u64,
    pub regime: Regime,
}

impl Default for SplitOptions {
    fn default() -> Self {
        SplitOptions {
            test_fraction: 0.2,
            valid_fraction: 0.05,
            seed: 0,
            regime: Regime::All,
        }
    }
}

/// Holds out a fraction of each target relation's triples for testing.
///
/// Sampling is stratified per target relation; the validation set is then
/// carved from the remaining target-relation triples.
pub fn split_dataset(store: &TripleStore, targets: &BTreeSet<RelationId>, opts: SplitOptions) -> Result<Split> {
    if !(opts.test_fraction > 0.0 && opts.test_fraction < 1.0) {
        return Err(Error::Config(format!(
            "test_fraction must lie in (0, 1), got {}",
            opts.test_fraction
        )));
    }
    if !(0.0..1.0).contains(&opts.valid_fraction) {
        return Err(Error::Config(format!(
            "valid_fraction must lie in [0, 1), got {}",
            opts.valid_fraction
        )));
    }
    if store.is_augmented() {
        return Err(Error::Config("split the store before inverse augmentation".into()));
    }
    let vocab = store.vocab();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut test = BTreeSet::new();
    let mut remaining_targets = Vec::new();
    for &r in targets {
        if r.index() >= vocab.n_relations() {
            return Err(Error::Unknown {
                kind: "relation",
                name: r.0.to_string(),
            });
        }
        let mut rows: Vec<Triple> = store.with_relation(r).to_vec();
        if rows.len() < 2 {
            return Err(Error::TooFewTriples(vocab.relation_name(r).to_owned()));
        }
        rows.shuffle(&mut rng);
        let n_test = ((opts.test_fraction * rows.len() as f64).round() as usize).clamp(1, rows.len() - 1);
        test.extend(rows[..n_test].iter().copied());
        remaining_targets.extend(rows[n_test..].iter().copied());
    }
    // Keep store order for the remaining target triples before carving valid.
    let remaining_set: BTreeSet<Triple> = remaining_targets.iter().copied().collect();
    let mut carve: Vec<Triple> = store
        .triples()
        .filter(|t| remaining_set.contains(t))
        .copied()
        .collect();
    carve.shuffle(&mut rng);
    let n_valid = (opts.valid_fraction * carve.len() as f64).round() as usize;
    let valid: BTreeSet<Triple> = carve[..n_valid.min(carve.len())].iter().copied().collect();

    let train: Vec<Triple> = store
        .triples()
        .filter(|t| !test.contains(*t) && !valid.contains(*t))
        .filter(|t| opts.regime == Regime::All || targets.contains(&t.relation))
        .copied()
        .collect();
    let in_order = |set: &BTreeSet<Triple>| -> Vec<Triple> {
        store.triples().filter(|t| set.contains(*t)).copied().collect()
    };
    Ok(Split {
        train: TripleStore::from_parts(vocab.clone(), train),
        valid: in_order(&valid),
        test: in_order(&test),
        target_relations: targets.clone(),
    })
}

/// Loads a pre-split dataset, interning train, then valid, then test.
pub fn load_split(train: &Path, valid: Option<&Path>, test: &Path, targets: &Path) -> Result<Split> {
    let mut vocab = Vocab::new();
    let train_rows = read_triples_into(&mut vocab, train)?;
    if train_rows.is_empty() {
        return Err(Error::EmptyFile(train.to_owned()));
    }
    let valid_rows = match valid {
        Some(p) => read_triples_into(&mut vocab, p)?,
        None => Vec::new(),
    };
    let test_rows = read_triples_into(&mut vocab, test)?;
    let target_relations = read_relation_list(&vocab, targets)?;
    Ok(Split {
        train: TripleStore::from_parts(vocab, train_rows),
        valid: valid_rows,
        test: test_rows,
        target_relations,
    })
}

impl Split {
    pub fn write(&self, dir: &Path) -> Result<()> {
        let vocab = self.train.vocab();
        self.train.write_tsv(&dir.join("train.tsv"))?;
        write_triples(&dir.join("valid.tsv"), vocab, &self.valid)?;
        write_triples(&dir.join("test.tsv"), vocab, &self.test)?;
        write_relation_list(&dir.join("targets.txt"), vocab, &self.target_relations)
    }

    /// Augments the training store with inverses; valid/test ids are unchanged.
    pub fn augmented(&self) -> Result<Split> {
        Ok(Split {
            train: self.train.augment_inverses()?,
            valid: self.valid.clone(),
            test: self.test.clone(),
            target_relations: self.target_relations.clone(),
        })
    }

    /// Every known triple (train, valid and test), used as the ranking filter.
    pub fn known_triples(&self) -> std::collections::HashSet<Triple> {
        self.train
            .triples()
            .chain(self.valid.iter())
            .chain(self.test.iter())
            .copied()
            .collect()
    }
}
