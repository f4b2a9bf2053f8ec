//! Compare the analytic gradient of the margin loss with central finite differences.
//!
//! cargo run --release --example gradient_check

use xkgat::model::{forward, gradients, margin_loss, ModelConfig, Norm, Parameters};
use xkgat::store::{Triple, TripleStore, Vocab};
use xkgat::subgraph::{build_subgraph, Mode};

fn main() -> xkgat::Result<()> {
    let mut v = Vocab::new();
    let mut triples = Vec::new();
    for (h, r, t) in [("c", "p", "b"), ("b", "q", "a"), ("d", "s", "a"), ("c", "s", "d"), ("a", "r", "t")] {
        let h = v.intern_entity(h);
        let r = v.intern_relation(r)?;
        let t = v.intern_entity(t);
        triples.push(Triple::new(h, r, t));
    }
    let kg = TripleStore::from_parts(v, triples).augment_inverses()?;
    let config = ModelConfig {
        dim: 4,
        omega: vec![0.4, 0.6],
        norm: Norm::L2,
        ..ModelConfig::default()
    };
    let pos = kg.vocab().lookup("a", "r", "t")?;
    let neg = kg.vocab().lookup("a", "r", "c")?;
    let opts = config.subgraph_options();
    let batch = vec![(
        build_subgraph(&kg, &pos, &opts, Mode::Training)?,
        build_subgraph(&kg, &neg, &opts, Mode::Inference)?,
    )];
    let mut p = Parameters::init(kg.n_entities(), kg.vocab().n_canonical_relations(), config.dim, 3);
    let gamma = 10.0;
    let loss = |p: &Parameters| -> xkgat::Result<f64> {
        let (a, b) = &batch[0];
        Ok(margin_loss(forward(a, p, &config)?.score, forward(b, p, &config)?.score, gamma))
    };
    let (value, grads) = gradients(&batch, &p, &config, gamma)?;
    println!("loss {value:.6}");

    let h = 1e-4;
    let mut worst: f64 = 0.0;
    for i in 0..p.entity.len() {
        let orig = p.entity[i];
        p.entity[i] = orig + h;
        let up = loss(&p)?;
        p.entity[i] = orig - h;
        let down = loss(&p)?;
        p.entity[i] = orig;
        let fd = (up - down) / (2.0 * h);
        if fd.abs() > 1e-8 {
            worst = worst.max((grads.entity[i] - fd).abs() / fd.abs());
        }
    }
    println!("worst relative error over entity coordinates: {worst:.2e}");
    Ok(())
}
