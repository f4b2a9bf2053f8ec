//! Explain held-out triples with attention chains and compare against
//! one-hop explanations read off raw TransE embeddings.
//!
//! cargo run --release --example explanations

use xkgat::explain::{explain_with_support, transe_explanations};
use xkgat::model::{ModelConfig, Norm};
use xkgat::rules::{count_supports, explanation_to_rule};
use xkgat::store::{split_dataset, SplitOptions, Triple, Vocab};
use xkgat::synth::{generate_synthetic, target_relations, SynthConfig};
use xkgat::train::{pretrain_transe, train, TrainConfig};

fn show(v: &Vocab, t: &Triple) -> String {
    let (h, r, tl) = v.render(t);
    format!("({h}, {r}, {tl})")
}

fn main() -> xkgat::Result<()> {
    let (kg, planted) = generate_synthetic(&SynthConfig::default())?;
    let split = split_dataset(&kg, &target_relations(&planted), SplitOptions::default())?.augmented()?;
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
    let transe = pretrain_transe(&split, model.dim, Norm::L1, &cfg, &mut |_| {})?.params;
    let store = &split.train;
    let v = store.vocab();

    for target in split.test.iter().step_by(40) {
        println!("{}", show(v, target));
        for e in explain_with_support(store, target, &params, &model, 3)? {
            let path: Vec<String> = e.explanation.path.iter().map(|t| show(v, t)).collect();
            let rule = explanation_to_rule(&e.explanation, v)?;
            println!(
                "  alpha {:.3} support {:>3}  {}  =>  {}",
                e.explanation.alpha,
                e.support,
                path.join(" -> "),
                rule.display(v)
            );
        }
        for e in transe_explanations(store, target, &transe, Norm::L1, model.neighbor_cap, 1)? {
            println!("  transe {:.3} support {:>3}  {}", e.alpha, count_supports(&e, store)?, show(v, &e.path[0]));
        }
    }
    Ok(())
}
