//! End to end on a planted graph: train, explain the held-out triples, mine
//! rules from explanations of every target-relation triple, and check which
//! planted rules come back as high-quality rules.
//!
//! cargo run --release --example rule_mining

use xkgat::explain::explanation_report;
use xkgat::model::ModelConfig;
use xkgat::rules::{mine_rules, Rule, RuleThresholds};
use xkgat::store::{split_dataset, SplitOptions};
use xkgat::synth::{generate_synthetic, target_relations, SynthConfig};
use xkgat::train::{train, TrainConfig};

fn main() -> xkgat::Result<()> {
    let (store, planted) = generate_synthetic(&SynthConfig::default())?;
    let split = split_dataset(&store, &target_relations(&planted), SplitOptions::default())?.augmented()?;
    let model = ModelConfig {
        dim: 32,
        neighbor_cap: 10,
        ..ModelConfig::default()
    };
    let cfg = TrainConfig {
        learning_rate: 0.01,
        ..TrainConfig::default()
    };
    let params = train(&split, &model, &cfg, &mut |_| {})?.params;
    let vocab = split.train.vocab();

    let (report, _) = explanation_report(&split.test, &params, &model, &split.train, 3)?;
    println!("explanation recall@3 {:.3}, avg support {:?}", report.recall, report.avg_support);

    let mut targets: Vec<_> = split
        .train
        .triples()
        .filter(|t| split.target_relations.contains(&t.relation))
        .copied()
        .collect();
    targets.extend(&split.test);
    let mining = mine_rules(&targets, &split.train, &params, &model, 3, &RuleThresholds::default())?;
    println!(
        "{} rules generated, {} quality, {} high quality",
        mining.n_generated,
        mining.quality.len(),
        mining.high_quality.len()
    );
    for p in &planted {
        let want = Rule::from_planted(p);
        let found = mining.high_quality.iter().find(|m| m.rule == want);
        match found {
            Some(m) => println!("recovered  {}  hc {:.3} support {}", want.display(vocab), m.stats.hc, m.stats.support),
            None => println!("missing    {}", want.display(vocab)),
        }
    }
    Ok(())
}
