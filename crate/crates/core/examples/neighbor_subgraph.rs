//! Build the neighbor subgraph of a target triple and print its rows and adjacency.
//!
//! cargo run --example neighbor_subgraph

use xkgat::store::{Triple, TripleStore, Vocab};
use xkgat::subgraph::{build_subgraph, Mode, SubgraphOptions};

fn main() -> xkgat::Result<()> {
    let mut v = Vocab::new();
    let rows = [
        ("Shop", "sells", "Item1"),
        ("Item1", "titleInclude", "Tianzi"),
        ("Item1", "color", "Red"),
        ("Item2", "brandIs", "Tianzi"),
        ("Item2", "titleInclude", "Tianzi"),
        ("Item1", "brandIs", "Tianzi"),
    ];
    let mut triples = Vec::new();
    for (h, r, t) in rows {
        let h = v.intern_entity(h);
        let r = v.intern_relation(r)?;
        let t = v.intern_entity(t);
        triples.push(Triple::new(h, r, t));
    }
    let kg = TripleStore::from_parts(v, triples).augment_inverses()?;
    let target = kg.vocab().lookup("Item1", "brandIs", "Tianzi")?;

    let g = build_subgraph(&kg, &target, &SubgraphOptions::default(), Mode::Training)?;
    println!("{} rows, target last", g.len());
    for (i, t) in g.triples.iter().enumerate() {
        let (h, r, tl) = kg.vocab().render(t);
        println!("  {i:>2} depth {} ({h}, {r}, {tl}) attends {:?}", g.depth[i], g.adjacency[i]);
    }

    // A candidate that is not a known fact can only be scored in inference mode.
    let candidate = kg.vocab().lookup("Item1", "brandIs", "Red")?;
    let err = build_subgraph(&kg, &candidate, &SubgraphOptions::default(), Mode::Training).unwrap_err();
    println!("training mode: {err}");
    let g = build_subgraph(&kg, &candidate, &SubgraphOptions::default(), Mode::Inference)?;
    println!("inference mode: {} rows", g.len());
    Ok(())
}
