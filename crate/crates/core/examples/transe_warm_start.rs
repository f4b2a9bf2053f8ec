//! Pre-train TransE, evaluate it, then start attention training from its embeddings.
//!
//! cargo run --release --example transe_warm_start

use xkgat::eval::{run_plp, PlpOptions, Scorer};
use xkgat::model::{ModelConfig, Norm};
use xkgat::store::{split_dataset, SplitOptions};
use xkgat::synth::{generate_synthetic, target_relations, SynthConfig};
use xkgat::train::{pretrain_transe, train_from, TrainConfig};

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

    let transe = pretrain_transe(&split, model.dim, Norm::L1, &cfg, &mut |_| {})?;
    let report = run_plp(
        &split,
        &Scorer::Transe {
            params: &transe.params,
            norm: Norm::L1,
        },
        PlpOptions::default(),
    )?;
    print!("{}", report.to_table("transe"));

    let warm = train_from(&split, &model, &cfg, transe.params, &mut |r| eprintln!("{}", r.log_line()))?;
    let report = run_plp(
        &split,
        &Scorer::Attention {
            params: &warm.params,
            config: &model,
        },
        PlpOptions::default(),
    )?;
    print!("{}", report.to_table("warm-started").lines().skip(1).map(|l| format!("{l}\n")).collect::<String>());
    Ok(())
}
