use std::fs;
use std::path::Path;

use embstab::embed::{write_embedding, EmbeddingMatrix};
use embstab::funcsim::{self, write_instance_labels, write_output, LabelVector, OutputMatrix};
use embstab::harness::{self, MethodSpec, OptimumFlag, SweepConfig};
use embstab::measure::Measure;
use embstab::repsim;

fn wobble(n: usize, d: usize, run: usize) -> EmbeddingMatrix {
    let values = (0..n * d).map(|i| ((i * 31 + 7) % 17) as f64 + 0.05 * ((i + run * 13) as f64).sin()).collect();
    EmbeddingMatrix::new(n, d, values).unwrap()
}

fn output_for(run: usize) -> OutputMatrix {
    let rows: Vec<Vec<f64>> = (0..6)
        .map(|i| if (i + run) % 4 == 0 { vec![0.3, 0.7] } else { vec![0.8, 0.2] })
        .collect();
    OutputMatrix::from_rows(&rows).unwrap()
}

fn write_external(dir: &Path, dims: &[usize], runs: usize) {
    let method = MethodSpec::External { dir: dir.to_path_buf(), name: "ext".into(), labels: None };
    for &d in dims {
        for run in 0..runs {
            write_embedding(&wobble(12, d, run), harness::external_file(&method, d, run, "emb").unwrap()).unwrap();
            write_output(&output_for(run), harness::external_file(&method, d, run, "out").unwrap()).unwrap();
        }
    }
    write_instance_labels(&LabelVector::new(vec![0; 6]), dir.join("eval.labels")).unwrap();
}

fn external_config(dir: &Path, extra: &str) -> SweepConfig {
    let text = format!(
        r#"{{
            "dataset": {{"name": "files"}},
            "method": {{"external": {{"dir": "{}", "name": "ext", "labels": "{}"}}}},
            "dims": [2, 3],
            "runs_per_dim": 3,
            "knn_k": 3
            {extra}
        }}"#,
        dir.display(),
        dir.join("eval.labels").display()
    );
    SweepConfig::from_json_str(&text).unwrap()
}

#[test]
fn external_sweep_matches_direct_computation() {
    let dir = tempfile::tempdir().unwrap();
    write_external(dir.path(), &[2, 3], 3);
    let report = harness::run_sweep(&external_config(dir.path(), "")).unwrap();
    assert_eq!(report.rows.len(), 2 * Measure::ALL.len());
    assert!(report.rows.iter().all(|r| r.method == "ext" && r.dataset == "files"));

    let pairs = [(0, 1), (0, 2), (1, 2)];
    let zs: Vec<_> = (0..3).map(|r| wobble(12, 3, r)).collect();
    let outs: Vec<_> = (0..3).map(output_for).collect();
    let mean = |f: &dyn Fn(usize, usize) -> f64| pairs.iter().map(|&(i, j)| f(i, j)).sum::<f64>() / 3.0;

    let row = report.find(3, Measure::DistCorr).unwrap();
    let want = mean(&|i, j| repsim::distance_correlation(&zs[i], &zs[j]).unwrap());
    assert!((row.mean.unwrap() - want).abs() < 1e-12);
    assert_eq!(row.n, 3);

    let row = report.find(3, Measure::Disagreement).unwrap();
    let want = mean(&|i, j| funcsim::disagreement(&outs[i], &outs[j]).unwrap());
    assert!((row.mean.unwrap() - want).abs() < 1e-15);

    let row = report.find(3, Measure::StableCore).unwrap();
    let refs: Vec<&OutputMatrix> = outs.iter().collect();
    assert_eq!(row.mean.unwrap(), funcsim::stable_core(&refs).unwrap());
    assert_eq!(row.n, 1);

    let row = report.find(2, Measure::Accuracy).unwrap();
    assert_eq!(row.n, 3);
    let accs: Vec<f64> = (0..3).map(|r| 1.0 - funcsim::error_rate(&outs[r], &LabelVector::new(vec![0; 6])).unwrap()).collect();
    assert!((row.mean.unwrap() - accs.iter().sum::<f64>() / 3.0).abs() < 1e-15);
    assert!(report.rows.iter().all(|r| r.elapsed_seconds == 0.0));
}

#[test]
fn spilling_does_not_change_the_report() {
    let dir = tempfile::tempdir().unwrap();
    write_external(dir.path(), &[2, 3], 3);
    let spill = dir.path().join("spill");
    fs::create_dir(&spill).unwrap();
    let in_memory = harness::run_sweep(&external_config(dir.path(), "")).unwrap();
    let spilled =
        harness::run_sweep(&external_config(dir.path(), &format!(r#", "spill_dir": "{}""#, spill.display()))).unwrap();
    assert_eq!(harness::report_to_csv(&in_memory), harness::report_to_csv(&spilled));
    assert!(fs::read_dir(&spill).unwrap().count() > 0);
}

#[test]
fn missing_external_file_fails_up_front() {
    let dir = tempfile::tempdir().unwrap();
    write_external(dir.path(), &[2], 3);
    let err = harness::run_sweep(&external_config(dir.path(), "")).unwrap_err();
    assert!(err.to_string().contains("ext_d3_s0.emb"), "{err}");
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn malformed_file_becomes_error_rows() {
    let dir = tempfile::tempdir().unwrap();
    write_external(dir.path(), &[2, 3], 3);
    fs::write(dir.path().join("ext_d3_s1.emb"), "EMB1 12 3\n0 1 2\n").unwrap();
    let report = harness::run_sweep(&external_config(dir.path(), "")).unwrap();
    for r in report.rows.iter().filter(|r| r.dim == 3) {
        assert!(r.mean.is_none() && r.std.is_none() && r.n == 0, "{r:?}");
        assert!(r.error.is_some());
    }
    let ok = report.rows.iter().filter(|r| r.dim == 2 && r.mean.is_some()).count();
    assert!(ok >= Measure::ALL.len() - 1);
    let csv = harness::report_to_csv(&report);
    assert!(csv.lines().any(|l| l.starts_with("files,ext,3,aligned_cos,,,0,")));
}

#[test]
fn timing_is_opt_in() {
    let dir = tempfile::tempdir().unwrap();
    write_external(dir.path(), &[2, 3], 3);
    let report = harness::run_sweep(&external_config(dir.path(), r#", "record_timing": true"#)).unwrap();
    assert!(report.rows.iter().any(|r| r.elapsed_seconds > 0.0));
}

#[test]
fn json_report_round_trips_through_a_file() {
    let dir = tempfile::tempdir().unwrap();
    write_external(dir.path(), &[2, 3], 3);
    let report = harness::run_sweep(&external_config(dir.path(), "")).unwrap();
    let path = dir.path().join("report.json");
    harness::emit_report(&report, harness::ReportFormat::Json, &path).unwrap();
    let back = harness::read_report_json(&path).unwrap();
    assert_eq!(back, report);
    assert!(back.rows.iter().any(|r| r.optimal_flag == OptimumFlag::Optimal));
}

#[test]
fn relative_paths_resolve_against_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    fs::create_dir(&data).unwrap();
    write_external(&data, &[2], 3);
    let cfg = dir.path().join("sweep.json");
    fs::write(
        &cfg,
        r#"{"dataset": {"name": "rel"},
            "method": {"external": {"dir": "data", "name": "ext", "labels": "data/eval.labels"}},
            "dims": [2], "runs_per_dim": 3, "knn_k": 2}"#,
    )
    .unwrap();
    let config = SweepConfig::from_json_file(&cfg).unwrap();
    let report = harness::run_sweep(&config).unwrap();
    assert!(report.rows.iter().all(|r| r.error.is_none() || r.measure == Measure::NormDisagreement));
}
