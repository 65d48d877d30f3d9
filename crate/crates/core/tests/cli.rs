use std::fs;
use std::path::Path;
use std::process::Command;

use embstab::cli;
use embstab::funcsim::{write_instance_labels, write_output, LabelVector, OutputMatrix};

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

fn run(args: &[&str]) -> Run {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let argv = std::iter::once("embstab").chain(args.iter().copied());
    let code = cli::run(argv, &mut out, &mut err);
    Run { code, stdout: String::from_utf8(out).unwrap(), stderr: String::from_utf8(err).unwrap() }
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn one_float(r: &Run) -> f64 {
    assert_eq!(r.code, 0, "{}", r.stderr);
    r.stdout.trim().parse().unwrap()
}

fn gen_graph(dir: &Path) -> (String, String) {
    let (edges, labels) = (dir.join("g.edges"), dir.join("g.labels"));
    let r = run(&[
        "gen", "--sbm", "25,25", "--p-in", "0.3", "--p-out", "0.02", "--seed", "4", "--edges", p(&edges), "--labels",
        p(&labels),
    ]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    (p(&edges).to_string(), p(&labels).to_string())
}

#[test]
fn pipeline_from_graph_to_measures() {
    let dir = tempfile::tempdir().unwrap();
    let (edges, labels) = gen_graph(dir.path());
    let emb = |name: &str, seed: &str| {
        let out = dir.path().join(name);
        let r = run(&[
            "embed", "--method", "node2vec", "--edges", &edges, "--dim", "8", "--seed", seed, "--walks-per-node", "4",
            "--walk-length", "20", "--out", p(&out),
        ]);
        assert_eq!(r.code, 0, "{}", r.stderr);
        out
    };
    let (a, a_again, b) = (emb("a.emb", "1"), emb("a2.emb", "1"), emb("b.emb", "2"));
    assert_eq!(fs::read(&a).unwrap(), fs::read(&a_again).unwrap());

    for m in ["aligned_cos", "dist_corr", "knn_jaccard", "second_cos"] {
        let same = one_float(&run(&["repsim", "--measure", m, p(&a), p(&a)]));
        assert!((same - 1.0).abs() < 1e-9, "{m} self {same}");
        let other = one_float(&run(&["repsim", "--measure", m, "--k", "5", p(&a), p(&b)]));
        assert!(other < 1.0 && other > -1.0, "{m} {other}");
    }

    let classify = |emb: &Path, out: &str| {
        let out = dir.path().join(out);
        let eval = dir.path().join("eval.labels");
        let r = run(&[
            "classify", "--emb", p(emb), "--labels", &labels, "--l2-grid", "0.1,1,10", "--out", p(&out),
            "--eval-labels", p(&eval), "--model", p(&dir.path().join("m.lrm")),
        ]);
        assert_eq!(r.code, 0, "{}", r.stderr);
        (out, eval)
    };
    let (oa, eval) = classify(&a, "a.out");
    let (ob, _) = classify(&b, "b.out");
    assert_eq!(one_float(&run(&["funcsim", "--measure", "jsd", p(&oa), p(&oa)])), 0.0);
    let d = one_float(&run(&["funcsim", "--measure", "disagreement", p(&oa), p(&ob)]));
    assert!((0.0..=1.0).contains(&d));
    let acc = one_float(&run(&["funcsim", "--measure", "accuracy", p(&oa), "--labels", p(&eval)]));
    assert!(acc > 0.5, "accuracy {acc}");
    let core = one_float(&run(&["funcsim", "--measure", "stable_core", p(&oa), p(&ob), p(&oa)]));
    assert!(core <= 1.0 - d + 1e-15);
    assert!(dir.path().join("m.lrm").is_file());
}

#[test]
fn spectral_embedding_is_seed_free() {
    let dir = tempfile::tempdir().unwrap();
    let (edges, _) = gen_graph(dir.path());
    let a = dir.path().join("a.emb");
    let b = dir.path().join("b.emb");
    for (out, seed) in [(&a, "1"), (&b, "99")] {
        let r = run(&["embed", "--method", "spectral", "--edges", &edges, "--dim", "4", "--seed", seed, "--out", p(out)]);
        assert_eq!(r.code, 0, "{}", r.stderr);
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert!(fs::read_to_string(&a).unwrap().starts_with("EMB1 50 4\n"));
}

#[test]
fn jsd_of_disjoint_rows_is_ln2() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.out"), dir.path().join("b.out"));
    write_output(&OutputMatrix::from_rows(&[vec![1.0, 0.0]]).unwrap(), &a).unwrap();
    write_output(&OutputMatrix::from_rows(&[vec![0.0, 1.0]]).unwrap(), &b).unwrap();
    let v = one_float(&run(&["funcsim", "--measure", "jsd", p(&a), p(&b)]));
    assert!((v - std::f64::consts::LN_2).abs() < 1e-9);
    assert!(run(&["funcsim", "--measure", "jsd", p(&a), p(&b)]).stdout.starts_with("0.693147"));
    let bits = one_float(&run(&["funcsim", "--measure", "jsd", "--log-base", "2", p(&a), p(&b)]));
    assert!((bits - 1.0).abs() < 1e-9);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let (a, y) = (dir.path().join("a.out"), dir.path().join("y.labels"));
    write_output(&OutputMatrix::from_rows(&[vec![0.9, 0.1], vec![0.2, 0.8]]).unwrap(), &a).unwrap();
    write_instance_labels(&LabelVector::new(vec![0, 1]), &y).unwrap();

    assert_eq!(run(&["--help"]).code, 0);
    assert!(run(&["--version"]).stdout.contains(env!("CARGO_PKG_VERSION")));
    assert_eq!(run(&["frobnicate"]).code, 1);
    assert_eq!(run(&["repsim", "--bogus-flag"]).code, 1);
    let unknown = run(&["funcsim", "--measure", "nope", p(&a), p(&a)]);
    assert_eq!(unknown.code, 1);
    assert_eq!(run(&["funcsim", "--measure", "aligned_cos", p(&a), p(&a)]).code, 1);
    assert_eq!(run(&["funcsim", "--measure", "norm_disagreement", p(&a), p(&a)]).code, 1);

    let missing = run(&["repsim", "--measure", "dist_corr", "/no/such.emb", "/no/such.emb"]);
    assert_eq!(missing.code, 2);
    let junk = dir.path().join("junk.emb");
    fs::write(&junk, "EMB1 2 2\n0 1 2\n1 3\n").unwrap();
    let malformed = run(&["repsim", "--measure", "dist_corr", p(&junk), p(&junk)]);
    assert_eq!(malformed.code, 2);
    assert!(malformed.stderr.contains(":3:"), "{}", malformed.stderr);

    let degenerate = run(&["funcsim", "--measure", "norm_disagreement", "--labels", p(&y), p(&a), p(&a)]);
    assert_eq!(degenerate.code, 3);
    assert!(degenerate.stderr.contains("norm_disagreement"));

    let flat = dir.path().join("flat.emb");
    fs::write(&flat, "EMB1 3 2\n0 1 1\n1 1 1\n2 1 1\n").unwrap();
    let zero_cov = run(&["repsim", "--measure", "dist_corr", p(&flat), p(&flat)]);
    assert_eq!(zero_cov.code, 3);
    assert!(zero_cov.stderr.contains("dist_corr"));
}

#[test]
fn sweep_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sweep.json");
    fs::write(
        &cfg,
        r#"{"dataset": {"name": "toy", "sbm": {"block_sizes": [20, 20], "p_in": 0.4, "p_out": 0.02, "seed": 1}},
            "method": "spectral", "dims": [2, 4], "runs_per_dim": 3, "l2_grid": [1.0],
            "output": {"path": "report.json", "format": "json"}}"#,
    )
    .unwrap();
    let r = run(&["sweep", "--config", p(&cfg)]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let report = embstab::harness::read_report_json(dir.path().join("report.json")).unwrap();
    assert_eq!(report.rows.len(), 2 * embstab::Measure::ALL.len());

    let csv = dir.path().join("report.csv");
    let r = run(&["sweep", "--config", p(&cfg), "--format", "csv", "--out", p(&csv), "--workers", "2"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert_eq!(fs::read_to_string(&csv).unwrap(), embstab::harness::report_to_csv(&report));

    fs::write(&cfg, r#"{"dataset": {"name": "toy"}, "method": "spectral", "dims": []}"#).unwrap();
    assert_eq!(run(&["sweep", "--config", p(&cfg)]).code, 1);
}

#[test]
fn binary_reads_workers_from_environment() {
    let exe = env!("CARGO_BIN_EXE_embstab");
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.out"), dir.path().join("b.out"));
    write_output(&OutputMatrix::from_rows(&[vec![0.9, 0.1], vec![0.2, 0.8]]).unwrap(), &a).unwrap();
    write_output(&OutputMatrix::from_rows(&[vec![0.4, 0.6], vec![0.2, 0.8]]).unwrap(), &b).unwrap();
    let out = Command::new(exe)
        .args(["funcsim", "--measure", "disagreement", p(&a), p(&b)])
        .env("EMBSTAB_WORKERS", "3")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "0.5");

    let out = Command::new(exe)
        .args(["funcsim", "--measure", "disagreement", p(&a), p(&b)])
        .env("EMBSTAB_WORKERS", "0")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));

    let out = Command::new(exe).arg("--nope").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}
