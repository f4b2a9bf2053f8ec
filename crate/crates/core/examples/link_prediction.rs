//! Train the attention model on a planted synthetic graph and report
//! filtered link-prediction metrics against an untrained control.
//!
//! cargo run --release --example link_prediction

use xkgat::eval::{run_plp, PlpOptions, Scorer};
use xkgat::model::{ModelConfig, Parameters};
use xkgat::store::{split_dataset, SplitOptions};
use xkgat::synth::{generate_synthetic, target_relations, SynthConfig};
use xkgat::train::{train, TrainConfig, LOG_HEADER};

fn main() -> xkgat::Result<()> {
    let (store, planted) = generate_synthetic(&SynthConfig::default())?;
    let split = split_dataset(&store, &target_relations(&planted), SplitOptions::default())?.augmented()?;
    println!(
        "{} train triples, {} valid, {} test",
        split.train.len(),
        split.valid.len(),
        split.test.len()
    );

    let model = ModelConfig {
        dim: 32,
        neighbor_cap: 10,
        ..ModelConfig::default()
    };
    let cfg = TrainConfig {
        learning_rate: 0.01,
        ..TrainConfig::default()
    };

    let vocab = split.train.vocab();
    let untrained = Parameters::init(vocab.n_entities(), vocab.n_canonical_relations(), model.dim, cfg.seed);
    let control = run_plp(&split, &Scorer::Attention { params: &untrained, config: &model }, PlpOptions::default())?;

    println!("{LOG_HEADER}");
    let outcome = train(&split, &model, &cfg, &mut |r| println!("{}", r.log_line()))?;
    let report = run_plp(
        &split,
        &Scorer::Attention {
            params: &outcome.params,
            config: &model,
        },
        PlpOptions::default(),
    )?;

    print!("{}", control.to_table("untrained"));
    print!("{}", report.to_table("trained").lines().skip(1).map(|l| format!("{l}\n")).collect::<String>());
    Ok(())
}
