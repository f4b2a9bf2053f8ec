//! Load a triple file, add inverse relations and query the indexes.
//!
//! cargo run --example knowledge_graph

use xkgat::store::load_triples;

fn main() -> xkgat::Result<()> {
    let dir = tempfile::tempdir().map_err(|e| xkgat::Error::Config(e.to_string()))?;
    let path = dir.path().join("kg.tsv");
    std::fs::write(
        &path,
        "Item1\tbrandIs\tTianzi\nItem1\ttitleInclude\tTianzi\nItem2\ttitleInclude\tTianzi\nItem2\tcolor\tRed\n",
    )
    .map_err(|e| xkgat::Error::Config(e.to_string()))?;

    let store = load_triples(&path)?;
    let kg = store.augment_inverses()?;
    let v = kg.vocab();
    println!(
        "{} entities, {} relations ({} with inverses), {} triples after augmentation",
        kg.n_entities(),
        v.n_canonical_relations(),
        kg.n_relations(),
        kg.len()
    );

    let tianzi = v.entity_id("Tianzi").expect("interned");
    println!("triples into Tianzi:");
    for t in kg.with_tail(tianzi) {
        let (h, r, tl) = v.render(t);
        println!("  ({h}, {r}, {tl})");
    }
    let title_inv = v.relation_id("titleInclude~inv").expect("augmented");
    let titled: Vec<&str> = kg.tails(tianzi, title_inv).iter().map(|&e| v.entity_name(e)).collect();
    println!("titles mentioning Tianzi: {titled:?}");

    let t = v.lookup("Tianzi", "brandIs~inv", "Item1")?;
    let (h, r, tl) = v.render(&kg.canonicalize(t));
    println!("canonical form of (Tianzi, brandIs~inv, Item1): ({h}, {r}, {tl})");
    Ok(())
}
