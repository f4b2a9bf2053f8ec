//! The `xkgat` command line.
//!
//! Exit status is 0 on success, 1 on usage errors and 2 on data or config errors.

use std::collections::{BTreeMap, BTreeSet};
use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use clap::{Parser, Subcommand};
use rayon::prelude::*;

use crate::checkpoint::{Checkpoint, CheckpointKind};
use crate::config::{require_exists, RunConfig};
use crate::error::{Error, Result};
use crate::eval::{filter_set, run_plp, PlpOptions, Scorer};
use crate::explain::{explanation_report, summarize, to_jsonl, transe_explanations, ScoredExplanation};
use crate::review::{self, PredictionRecord, ReviewState, Source};
use crate::rules::{apply_rules, count_supports, format_rules, mine_rules, parse_rules, Rule};
use crate::store::{load_split, load_triples, split_dataset, write_atomic, write_triples, EntityId, Split, Triple};
use crate::synth::{generate_synthetic, target_relations};
use crate::train::{pretrain_transe, train, EpochRecord, Init, TrainOutcome, LOG_HEADER};

#[derive(Debug, Parser)]
#[command(name = "xkgat", version, about = "Explainable knowledge graph attention")]
pub struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Directory receiving every output file.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    /// Seed for all randomness.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; defaults to the available cores.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic graph with planted rules and split it.
    Synth,
    /// Split a triple file into train, valid and test sets.
    Split {
        #[arg(long)]
        triples: Option<PathBuf>,
        /// One target relation name per line.
        #[arg(long)]
        targets: Option<PathBuf>,
    },
    /// Train the attention model, or TransE with --transe.
    Train {
        /// Directory holding train.tsv, valid.tsv, test.tsv and targets.txt.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        transe: bool,
        /// Start from the embeddings of this checkpoint.
        #[arg(long)]
        init: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        learning_rate: Option<f64>,
        #[arg(long)]
        dim: Option<usize>,
    },
    /// Tail prediction metrics on the test set.
    Eval {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Also rank heads.
        #[arg(long)]
        head_side: bool,
    },
    /// Top-k attention-chain explanations for test triples or a given triple file.
    Explain {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        triples: Option<PathBuf>,
        #[arg(long)]
        k: Option<usize>,
    },
    /// Mine rules from explanations of the target-relation triples.
    Mine {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        k: Option<usize>,
    },
    /// Apply rules and, with a checkpoint, write a scored review queue.
    Infer {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        rules: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Serve the review API and static UI.
    Serve {
        #[arg(long)]
        predictions: Option<PathBuf>,
        #[arg(long)]
        explanations: Option<PathBuf>,
        /// Decision log; defaults to decisions.jsonl under --out.
        #[arg(long)]
        log: Option<PathBuf>,
        #[arg(long)]
        addr: Option<String>,
        #[arg(long = "static")]
        static_dir: Option<PathBuf>,
    },
}

/// Parses `argv`, runs the subcommand and returns the exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.workers.unwrap_or(0)).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    match pool.install(|| execute(&cli)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => {
            require_exists(p, "config")?;
            RunConfig::load(p)?
        }
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.set_seed(seed);
    }
    Ok(cfg)
}

fn pick(flag: &Option<PathBuf>, configured: &Option<PathBuf>, what: &str) -> Result<PathBuf> {
    let p = flag
        .clone()
        .or_else(|| configured.clone())
        .ok_or_else(|| Error::Config(format!("no {what} given")))?;
    require_exists(&p, what)?;
    Ok(p)
}

/// Loads a split directory and augments it with inverse relations.
pub fn load_data(dir: &Path) -> Result<Split> {
    let file = |name: &str| -> Result<PathBuf> {
        let p = dir.join(name);
        require_exists(&p, "data file")?;
        Ok(p)
    };
    let valid = dir.join("valid.tsv");
    load_split(
        &file("train.tsv")?,
        valid.exists().then_some(valid.as_path()),
        &file("test.tsv")?,
        &file("targets.txt")?,
    )?
    .augmented()
}

fn write(out: &Path, name: &str, text: &str) -> Result<()> {
    write_atomic(&out.join(name), text.as_bytes())
}

fn execute(cli: &Cli) -> Result<()> {
    let mut cfg = load_config(cli)?;
    let out = cli.out.as_path();
    match &cli.command {
        Command::Synth => {
            cfg.validate()?;
            let (store, planted) = generate_synthetic(&cfg.synth)?;
            let split = split_dataset(&store, &target_relations(&planted), cfg.split.options())?;
            split.write(out)?;
            store.write_tsv(&out.join("all.tsv"))?;
            let mut text = String::new();
            for p in &planted {
                let _ = writeln!(text, "{}", Rule::from_planted(p).display(store.vocab()));
            }
            write(out, "planted.txt", &text)?;
            eprintln!(
                "{} entities, {} triples; {} train / {} valid / {} test",
                store.n_entities(),
                store.len(),
                split.train.len(),
                split.valid.len(),
                split.test.len()
            );
        }
        Command::Split { triples, targets } => {
            cfg.validate()?;
            let triples = pick(triples, &cfg.paths.triples, "triple file")?;
            let targets = pick(targets, &cfg.paths.targets, "target-relation file")?;
            let store = load_triples(&triples)?;
            let targets = crate::store::read_relation_list(store.vocab(), &targets)?;
            let split = split_dataset(&store, &targets, cfg.split.options())?;
            split.write(out)?;
        }
        Command::Train {
            data,
            transe,
            init,
            epochs,
            learning_rate,
            dim,
        } => {
            if let Some(p) = init {
                cfg.train.init = Init::FromCheckpoint(p.clone());
            }
            if let Some(e) = epochs {
                cfg.train.max_epochs = *e;
            }
            if let Some(lr) = learning_rate {
                cfg.train.learning_rate = *lr;
            }
            if let Some(d) = dim {
                cfg.model.dim = *d;
            }
            cfg.validate()?;
            let split = load_data(&pick(data, &cfg.paths.data, "data directory")?)?;
            let mut log = format!("{LOG_HEADER}\n");
            let mut on_epoch = |r: &EpochRecord| {
                eprintln!("{}", r.log_line());
                log.push_str(&r.log_line());
                log.push('\n');
            };
            let (kind, outcome): (CheckpointKind, TrainOutcome) = if *transe {
                let o = pretrain_transe(&split, cfg.model.dim, cfg.model.norm, &cfg.train, &mut on_epoch)?;
                (CheckpointKind::Transe, o)
            } else {
                (CheckpointKind::Attention, train(&split, &cfg.model, &cfg.train, &mut on_epoch)?)
            };
            let ck = Checkpoint::new(
                kind,
                outcome.params,
                cfg.model.clone(),
                split.train.vocab(),
                cfg.train.seed,
                outcome.best_epoch,
            );
            ck.save(&out.join("checkpoint"))?;
            write(out, "train.log", &log)?;
        }
        Command::Eval {
            data,
            checkpoint,
            head_side,
        } => {
            let ck = load_checkpoint(checkpoint, &cfg)?;
            let split = load_data(&pick(data, &cfg.paths.data, "data directory")?)?;
            ck.check_vocab(split.train.vocab())?;
            let opts = PlpOptions {
                head_side: *head_side || cfg.eval.head_side,
            };
            let report = run_plp(&split, &scorer(&ck), opts)?;
            let method = match ck.kind {
                CheckpointKind::Attention => "xkgat",
                CheckpointKind::Transe => "transe",
            };
            write(out, "metrics.txt", &report.to_text())?;
            write(out, "metrics.tsv", &report.to_table(method))?;
            write(out, "ranks.tsv", &report.ranks_tsv(split.train.vocab()))?;
            eprint!("{}", report.to_table(method));
        }
        Command::Explain {
            data,
            checkpoint,
            triples,
            k,
        } => {
            let k = k.unwrap_or(cfg.explain.k);
            cfg.explain.k = k;
            cfg.validate()?;
            let ck = load_checkpoint(checkpoint, &cfg)?;
            let split = load_data(&pick(data, &cfg.paths.data, "data directory")?)?;
            ck.check_vocab(split.train.vocab())?;
            let targets = match triples {
                Some(p) => {
                    require_exists(p, "triple file")?;
                    read_known_triples(p, &split)?
                }
                None => split.test.clone(),
            };
            let per_triple = explain_all(&ck, &split, &targets, k)?;
            let report = summarize(&per_triple, k)?;
            write(out, "explanations.jsonl", &to_jsonl(&per_triple, split.train.vocab()))?;
            let avg = report.avg_support.map(|a| format!("{a:.6}")).unwrap_or_else(|| "NA".into());
            write(
                out,
                "explanation_report.txt",
                &format!("k\t{}\nn_test\t{}\nrecall\t{:.6}\navg_support\t{avg}\n", k, report.n_test, report.recall),
            )?;
        }
        Command::Mine { data, checkpoint, k } => {
            let k = k.unwrap_or(cfg.explain.k);
            cfg.explain.k = k;
            cfg.validate()?;
            let ck = load_checkpoint(checkpoint, &cfg)?;
            if ck.kind != CheckpointKind::Attention {
                return Err(Error::Config("mining needs an attention checkpoint".into()));
            }
            let split = load_data(&pick(data, &cfg.paths.data, "data directory")?)?;
            ck.check_vocab(split.train.vocab())?;
            let triples = mining_triples(&split);
            let mining = mine_rules(&triples, &split.train, &ck.params, &ck.model, k, &cfg.rules)?;
            let vocab = split.train.vocab();
            write(out, "rules.tsv", &format_rules(&mining.quality, vocab))?;
            write(out, "high_quality.tsv", &format_rules(&mining.high_quality, vocab))?;
            write(
                out,
                "mining.txt",
                &format!(
                    "explained\t{}\ngenerated\t{}\nquality\t{}\nhigh_quality\t{}\n",
                    triples.len(),
                    mining.n_generated,
                    mining.quality.len(),
                    mining.high_quality.len()
                ),
            )?;
        }
        Command::Infer {
            data,
            rules,
            checkpoint,
        } => {
            cfg.validate()?;
            let split = load_data(&pick(data, &cfg.paths.data, "data directory")?)?;
            let rules_path = pick(rules, &cfg.paths.rules, "rule file")?;
            let text = fs::read_to_string(&rules_path).map_err(|e| Error::io(&rules_path, e))?;
            let rules = parse_rules(&text, split.train.vocab())?;
            let store = &split.train;
            let inferred: Vec<Triple> = apply_rules(&rules, store)?
                .into_iter()
                .map(|t| store.canonicalize(t))
                .filter(|t| !store.contains(t))
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect();
            write_triples(&out.join("inferred.tsv"), store.vocab(), &inferred)?;
            let ck = match checkpoint.as_ref().or(cfg.paths.checkpoint.as_ref()) {
                Some(_) => Some(load_checkpoint(checkpoint, &cfg)?),
                None => None,
            };
            if let Some(ck) = ck {
                ck.check_vocab(store.vocab())?;
                let queue = review_queue(&ck, &split, &inferred, cfg.infer.model_top)?;
                let mut lines = String::new();
                for (t, score, source) in &queue {
                    let (head, relation, tail) = store.vocab().render(t);
                    let rec = PredictionRecord {
                        head,
                        relation,
                        tail,
                        score: *score,
                        source: *source,
                    };
                    lines.push_str(&serde_json::to_string(&rec).expect("serializable"));
                    lines.push('\n');
                }
                write(out, "predictions.jsonl", &lines)?;
                let targets: Vec<Triple> = queue.iter().map(|q| q.0).collect();
                let per_triple = explain_all(&ck, &split, &targets, cfg.explain.k)?;
                write(out, "explanations.jsonl", &to_jsonl(&per_triple, store.vocab()))?;
            }
        }
        Command::Serve {
            predictions,
            explanations,
            log,
            addr,
            static_dir,
        } => {
            let predictions = pick(predictions, &cfg.paths.predictions, "predictions file")?;
            let explanations = match explanations.as_ref().or(cfg.paths.explanations.as_ref()) {
                Some(p) => {
                    require_exists(p, "explanations file")?;
                    Some(p.clone())
                }
                None => None,
            };
            let static_dir = match static_dir.as_ref().or(cfg.paths.static_dir.as_ref()) {
                Some(p) => {
                    require_exists(p, "static directory")?;
                    Some(p.clone())
                }
                None => None,
            };
            let log = log
                .clone()
                .or_else(|| cfg.paths.decision_log.clone())
                .unwrap_or_else(|| out.join("decisions.jsonl"));
            if let Some(dir) = log.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            }
            let queue = review::load_queue(&predictions, explanations.as_deref())?;
            let state = Arc::new(Mutex::new(ReviewState::open(queue, &log)?));
            let addr = addr.clone().unwrap_or(cfg.serve.addr.clone());
            let rt = tokio::runtime::Runtime::new().map_err(|e| Error::io("tokio runtime", e))?;
            eprintln!("serving on http://{addr}");
            rt.block_on(review::serve(state, &addr, static_dir.as_deref()))?;
        }
    }
    Ok(())
}

fn load_checkpoint(flag: &Option<PathBuf>, cfg: &RunConfig) -> Result<Checkpoint> {
    Checkpoint::load(&pick(flag, &cfg.paths.checkpoint, "checkpoint")?)
}

fn scorer(ck: &Checkpoint) -> Scorer<'_> {
    match ck.kind {
        CheckpointKind::Attention => Scorer::Attention {
            params: &ck.params,
            config: &ck.model,
        },
        CheckpointKind::Transe => Scorer::Transe {
            params: &ck.params,
            norm: ck.model.norm,
        },
    }
}

/// Reads a triple file whose names must all exist in the split's vocabulary.
fn read_known_triples(path: &Path, split: &Split) -> Result<Vec<Triple>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.is_empty())
        .enumerate()
        .map(|(i, line)| {
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 3 {
                return Err(Error::Parse {
                    path: path.to_owned(),
                    line: i + 1,
                    message: format!("expected 3 tab-separated fields, found {}", f.len()),
                });
            }
            split.train.vocab().lookup(f[0], f[1], f[2])
        })
        .collect()
}

fn explain_all(ck: &Checkpoint, split: &Split, targets: &[Triple], k: usize) -> Result<Vec<Vec<ScoredExplanation>>> {
    if targets.is_empty() {
        return Ok(Vec::new());
    }
    let store = &split.train;
    match ck.kind {
        CheckpointKind::Attention => {
            Ok(explanation_report(targets, &ck.params, &ck.model, store, k)?.1)
        }
        CheckpointKind::Transe => targets
            .par_iter()
            .map(|t| {
                transe_explanations(store, t, &ck.params, ck.model.norm, ck.model.neighbor_cap, k)?
                    .into_iter()
                    .map(|e| {
                        let support = count_supports(&e, store)?;
                        Ok(ScoredExplanation {
                            explanation: e,
                            support,
                        })
                    })
                    .collect()
            })
            .collect(),
    }
}

/// Training target-relation triples (canonical direction) followed by the test triples.
pub fn mining_triples(split: &Split) -> Vec<Triple> {
    let mut out: Vec<Triple> = split
        .train
        .triples()
        .filter(|t| split.target_relations.contains(&t.relation))
        .copied()
        .collect();
    out.extend(&split.test);
    out
}

/// Rule-inferred triples plus the model's best unknown tails for each test query,
/// scored by the model and ordered by score.
fn review_queue(ck: &Checkpoint, split: &Split, inferred: &[Triple], top: usize) -> Result<Vec<(Triple, f64, Source)>> {
    let store = &split.train;
    let scorer = scorer(ck);
    let known = filter_set(split);
    let mut by_triple: BTreeMap<Triple, (f64, Source)> = BTreeMap::new();
    let rule_scores: Vec<f64> = inferred.par_iter().map(|t| scorer.score(store, t)).collect::<Result<_>>()?;
    for (t, s) in inferred.iter().zip(rule_scores) {
        by_triple.insert(*t, (s, Source::Rule));
    }
    if top > 0 {
        let queries: BTreeSet<(EntityId, crate::store::RelationId)> = split.test.iter().map(|t| (t.head, t.relation)).collect();
        let queries: Vec<_> = queries.into_iter().collect();
        let proposals: Vec<Vec<(Triple, f64)>> = queries
            .par_iter()
            .map(|&(h, r)| {
                let scores = scorer.tail_scores(store, h, r)?;
                let mut cands: Vec<(Triple, f64)> = scores
                    .into_iter()
                    .enumerate()
                    .map(|(e, s)| (Triple::new(h, r, EntityId(e as u32)), s))
                    .filter(|(t, s)| s.is_finite() && !known.contains(t))
                    .collect();
                cands.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
                cands.truncate(top);
                Ok(cands)
            })
            .collect::<Result<_>>()?;
        for (t, s) in proposals.into_iter().flatten() {
            by_triple.entry(t).or_insert((s, Source::Model));
        }
    }
    let mut out: Vec<(Triple, f64, Source)> = by_triple.into_iter().map(|(t, (s, src))| (t, s, src)).collect();
    out.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    Ok(out)
}
