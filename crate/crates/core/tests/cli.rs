use std::fs;
use std::path::Path;

use xkgat::cli::run;
use xkgat::store::load_triples;

fn xkgat(args: &[&str]) -> i32 {
    run(std::iter::once("xkgat").chain(args.iter().copied()))
}

const SMALL: &str = "\
seed = 4

[synth]
n_entities = 500
subjects_per_rule = 20
noise_triples = 400

[model]
dim = 8
neighbor_cap = 10

[train]
learning_rate = 0.01
max_epochs = 2
";

fn s(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(xkgat(&["bogus"]), 1);
    assert_eq!(xkgat(&[]), 1);
    assert_eq!(xkgat(&["train", "--no-such-flag"]), 1);
    assert_eq!(xkgat(&["--help"]), 0);
}

#[test]
fn data_and_config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = s(dir.path());
    assert_eq!(xkgat(&["eval", "--checkpoint", "/definitely/missing", "--out", &out]), 2);
    assert_eq!(xkgat(&["train", "--out", &out]), 2);
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "[model]\ndimension = 3\n").unwrap();
    assert_eq!(xkgat(&["synth", "--config", &s(&bad), "--out", &out]), 2);
    fs::write(&bad, "[explain]\nk = 0\n").unwrap();
    assert_eq!(xkgat(&["synth", "--config", &s(&bad), "--out", &out]), 2);
    assert_eq!(xkgat(&["synth", "--config", "/missing.toml", "--out", &out]), 2);
}

#[test]
fn pipeline_smoke_run() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let cfg = root.join("run.toml");
    fs::write(&cfg, SMALL).unwrap();
    let (cfg, data, run_dir) = (s(&cfg), s(&root.join("data")), s(&root.join("run")));
    let ck = s(&root.join("run/checkpoint"));

    assert_eq!(xkgat(&["synth", "--config", &cfg, "--out", &data]), 0);
    for f in ["train.tsv", "valid.tsv", "test.tsv", "targets.txt", "all.tsv", "planted.txt"] {
        assert!(root.join("data").join(f).exists(), "{f}");
    }
    assert_eq!(xkgat(&["train", "--config", &cfg, "--data", &data, "--out", &run_dir]), 0);
    let log = fs::read_to_string(root.join("run/train.log")).unwrap();
    assert_eq!(log.lines().next(), Some("epoch,mean_loss,valid_mrr,seconds"));
    assert_eq!(log.lines().count(), 3);

    assert_eq!(xkgat(&["eval", "--config", &cfg, "--data", &data, "--checkpoint", &ck, "--out", &run_dir]), 0);
    let metrics = fs::read_to_string(root.join("run/metrics.txt")).unwrap();
    assert!(metrics.lines().any(|l| l.starts_with("mrr\tfilter\t")));
    assert!(metrics.lines().any(|l| l.starts_with("hit@10\traw\t")));

    assert_eq!(xkgat(&["explain", "--config", &cfg, "--data", &data, "--checkpoint", &ck, "--out", &run_dir]), 0);
    let first = fs::read_to_string(root.join("run/explanations.jsonl")).unwrap();
    let record: serde_json::Value = serde_json::from_str(first.lines().next().unwrap()).unwrap();
    assert!(record["alpha"].as_f64().unwrap() > 0.0);

    assert_eq!(xkgat(&["mine", "--config", &cfg, "--data", &data, "--checkpoint", &ck, "--out", &run_dir]), 0);
    let rules = s(&root.join("run/rules.tsv"));
    assert!(fs::read_to_string(&rules).unwrap().starts_with("# rule\t"));

    let infer_dir = s(&root.join("infer"));
    assert_eq!(
        xkgat(&["infer", "--config", &cfg, "--data", &data, "--rules", &rules, "--checkpoint", &ck, "--out", &infer_dir]),
        0
    );
    let predictions = fs::read_to_string(root.join("infer/predictions.jsonl")).unwrap();
    assert!(!predictions.is_empty());
    let queue = xkgat::review::load_queue(&root.join("infer/predictions.jsonl"), Some(&root.join("infer/explanations.jsonl"))).unwrap();
    assert!(!queue.is_empty());
}

#[test]
fn transe_checkpoints_evaluate_and_explain() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let cfg = root.join("run.toml");
    fs::write(&cfg, SMALL).unwrap();
    let (cfg, data, run_dir) = (s(&cfg), s(&root.join("data")), s(&root.join("transe")));
    let ck = s(&root.join("transe/checkpoint"));
    assert_eq!(xkgat(&["synth", "--config", &cfg, "--out", &data]), 0);
    assert_eq!(xkgat(&["train", "--transe", "--config", &cfg, "--data", &data, "--out", &run_dir]), 0);
    assert_eq!(xkgat(&["eval", "--config", &cfg, "--data", &data, "--checkpoint", &ck, "--out", &run_dir]), 0);
    assert!(fs::read_to_string(root.join("transe/metrics.tsv")).unwrap().contains("transe\tfilter"));
    assert_eq!(xkgat(&["explain", "--config", &cfg, "--data", &data, "--checkpoint", &ck, "--out", &run_dir]), 0);
    // Attention training starting from the TransE embeddings.
    let warm = s(&root.join("warm"));
    assert_eq!(xkgat(&["train", "--config", &cfg, "--data", &data, "--init", &ck, "--out", &warm]), 0);
    assert_eq!(xkgat(&["mine", "--config", &cfg, "--data", &data, "--checkpoint", &ck, "--out", &run_dir]), 2);
}

#[test]
fn split_subcommand_and_seed_flag() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let mut triples = String::new();
    for i in 0..60 {
        triples.push_str(&format!("item{i}\tbrandIs\tbrand{}\n", i % 4));
        triples.push_str(&format!("item{i}\tcolor\tc{}\n", i % 3));
    }
    fs::write(root.join("kg.tsv"), &triples).unwrap();
    fs::write(root.join("targets.txt"), "brandIs\n").unwrap();
    let split = |seed: &str, out: &str| {
        xkgat(&[
            "split",
            "--triples",
            &s(&root.join("kg.tsv")),
            "--targets",
            &s(&root.join("targets.txt")),
            "--seed",
            seed,
            "--out",
            &s(&root.join(out)),
        ])
    };
    assert_eq!(split("1", "a"), 0);
    assert_eq!(split("1", "b"), 0);
    assert_eq!(split("2", "c"), 0);
    let test = |d: &str| fs::read(root.join(d).join("test.tsv")).unwrap();
    assert_eq!(test("a"), test("b"));
    assert_ne!(test("a"), test("c"));
    assert_eq!(load_triples(&root.join("a/test.tsv")).unwrap().len(), 12);
    assert_eq!(fs::read_to_string(root.join("a/targets.txt")).unwrap(), "brandIs\n");
}

#[test]
fn infer_without_checkpoint_writes_only_inferred_triples() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let data = root.join("data");
    fs::create_dir_all(&data).unwrap();
    fs::write(data.join("train.tsv"), "a\tp\tb\nb\tq\tc\nx\tp\ty\n").unwrap();
    fs::write(data.join("test.tsv"), "a\tq\tc\n").unwrap();
    fs::write(data.join("targets.txt"), "q\n").unwrap();
    fs::write(root.join("rules.tsv"), "# rule\n(?V1, q, y) <= (?V1, p, y)\n(?V1, r, ?V2) <= (?V1, p, ?V2)\n").unwrap();
    let out = root.join("out");
    assert_eq!(
        xkgat(&["infer", "--data", &s(&data), "--rules", &s(&root.join("rules.tsv")), "--out", &s(&out)]),
        2,
        "unknown relation r"
    );
    fs::write(root.join("rules.tsv"), "(?V1, q, y) <= (?V1, p, y)\n(?V1, q, ?V2) <= (?V1, p, ?V2)\n").unwrap();
    assert_eq!(
        xkgat(&["infer", "--data", &s(&data), "--rules", &s(&root.join("rules.tsv")), "--out", &s(&out)]),
        0
    );
    assert_eq!(fs::read_to_string(out.join("inferred.tsv")).unwrap(), "a\tq\tb\nx\tq\ty\n");
    assert!(!out.join("predictions.jsonl").exists());
}
