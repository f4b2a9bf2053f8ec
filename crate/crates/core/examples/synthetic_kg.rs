//! Generate a synthetic graph with planted rules, split it and check that
//! every planted rule holds with its configured head coverage.
//!
//! cargo run --release --example synthetic_kg

use xkgat::rules::{head_coverage, Rule};
use xkgat::store::{split_dataset, SplitOptions};
use xkgat::synth::{generate_synthetic, target_relations, SynthConfig};

fn main() -> xkgat::Result<()> {
    let cfg = SynthConfig::default();
    let (kg, planted) = generate_synthetic(&cfg)?;
    println!("{} entities, {} relations, {} triples", kg.n_entities(), kg.n_relations(), kg.len());
    for p in &planted {
        let rule = Rule::from_planted(p);
        let c = head_coverage(&rule, &kg);
        println!("{:<50} hc {:.2} ({}/{})", rule.display(kg.vocab()), c.hc, c.support, c.head_size);
    }
    let split = split_dataset(&kg, &target_relations(&planted), SplitOptions::default())?;
    println!(
        "split: {} train, {} valid, {} test over {} target relations",
        split.train.len(),
        split.valid.len(),
        split.test.len(),
        split.target_relations.len()
    );
    Ok(())
}
