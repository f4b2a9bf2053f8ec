//! Print the default run configuration as TOML, then load an override file.
//!
//! cargo run --example run_config

use xkgat::config::RunConfig;

fn main() -> xkgat::Result<()> {
    print!("{}", RunConfig::default().to_toml());
    let cfg = RunConfig::from_toml("seed = 5\n[model]\ndim = 32\n[train]\nlearning_rate = 0.01\n")?;
    cfg.validate()?;
    println!(
        "\noverride: dim {} lr {} seeds train/split/synth {}/{}/{}",
        cfg.model.dim, cfg.train.learning_rate, cfg.train.seed, cfg.split.seed, cfg.synth.seed
    );
    Ok(())
}
