use std::fs;
use std::process::Command;

use mice_core::bench::{
    parse_methods, run_experiment, score_field_dump, timing_report, write_outputs, write_results_csv, ExperimentConfig,
    FieldScenario,
};
use mice_core::testbed::ObjectiveName;
use mice_core::Criterion;

fn small(methods: &str) -> ExperimentConfig {
    let mut c = ExperimentConfig::new(ObjectiveName::Oscillatory4d, parse_methods(methods).unwrap()).with_budget(8);
    c.replicates = 2;
    c.validation_size = 100;
    c.mle_budget = 64;
    c.lhd_pool = 5;
    c
}

#[test]
fn one_replicate_one_checkpoint_gives_one_row() {
    let mut c = small("random-20");
    c.replicates = 1;
    c.checkpoints = vec![3];
    let r = run_experiment(&c).unwrap();
    assert_eq!(r.rows.len(), 1);
    assert_eq!((r.rows[0].n, r.rows[0].replicate), (3, 0));
    assert!(r.rows[0].metrics.rmspe >= 0.0);
}

#[test]
fn results_are_byte_identical_across_runs() {
    let c = small("mice-20,alm-30,random-20,lhd-maximin");
    let write = || {
        let mut buf = Vec::new();
        write_results_csv(&run_experiment(&c).unwrap(), &mut buf).unwrap();
        buf
    };
    let a = write();
    assert_eq!(a, write());
    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with("method,replicate,n,rmspe,rmspe_normalized,max_abs_error\n"));
}

#[test]
fn arms_share_initial_designs() {
    let r = run_experiment(&small("alm-20,mice-20")).unwrap();
    let first = |m: &str, rep: usize| {
        let run = r.runs.iter().find(|a| a.method == m && a.replicate == rep).unwrap();
        run.record.final_design.inputs().select(&[0, 1])
    };
    assert_eq!(first("alm-20", 0), first("mice-20", 0));
    assert_ne!(first("alm-20", 0), first("alm-20", 1));
}

#[test]
fn timing_buckets_add_up() {
    let r = run_experiment(&small("alm-20")).unwrap();
    for row in timing_report(&r.runs, 1, 100) {
        assert!((row.t_mle_ms + row.t_cand_ms + row.t_select_ms - row.t_total_ms).abs() < 1e-9);
        assert_eq!(row.runs, 2);
    }
}

#[test]
fn output_files_are_written() {
    let dir = tempfile::tempdir().unwrap();
    let r = run_experiment(&small("mice-20")).unwrap();
    write_outputs(&r, 4, dir.path()).unwrap();
    for f in ["results.csv", "summary.csv", "failures.csv", "timing.csv", "trajectory.csv", "trajectory.jsonl"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let jsonl = fs::read_to_string(dir.path().join("trajectory.jsonl")).unwrap();
    let first: serde_json::Value = serde_json::from_str(jsonl.lines().next().unwrap()).unwrap();
    assert_eq!(first["method"], "mice-20");
}

#[test]
fn grid_score_field_is_symmetric() {
    // The two design points are mirror images under a half turn about the centre.
    let sheet = score_field_dump(FieldScenario::Grid7, Criterion::Mi, 1e-8, 1.0).unwrap();
    let c = &sheet.candidates;
    for (j, x) in c.iter().enumerate() {
        let k = c.position_of(&[1.0 - x[0], 1.0 - x[1]]).unwrap();
        let (a, b) = (sheet.raw_scores[j], sheet.raw_scores[k]);
        assert!((a - b).abs() <= 1e-6 * a.abs().max(b.abs()), "{x:?}: {a} vs {b}");
    }
}

#[test]
fn invalid_configs_are_rejected() {
    let mut c = small("alm-20");
    c.checkpoints = vec![100];
    assert!(run_experiment(&c).is_err());
    c = small("alm-20");
    c.replicates = 0;
    assert!(run_experiment(&c).is_err());
    assert!(parse_methods("").is_err());
    assert!(parse_methods("foo-20").is_err());
}

fn mice() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mice"))
}

#[test]
fn cli_runs_and_writes_results() {
    let dir = tempfile::tempdir().unwrap();
    let out = mice()
        .args(["--objective", "branin", "--methods", "alm-441,random-441", "--replicates", "1", "--budget", "6"])
        .args(["--validate-size", "50", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let results = fs::read_to_string(dir.path().join("results.csv")).unwrap();
    assert!(results.contains("alm-441,0,5,"));
}

#[test]
fn cli_config_file_and_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.conf");
    fs::write(&cfg, "objective = grf2d\nmethods = mi-121\nreplicates = 3\nbudget = 6\n").unwrap();
    let out = mice().arg("--config").arg(&cfg).args(["--replicates", "1", "--out"]).arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let results = fs::read_to_string(dir.path().join("results.csv")).unwrap();
    assert!(results.lines().skip(1).all(|l| l.starts_with("mi-121,0,")));
}

#[test]
fn cli_config_errors_exit_with_2() {
    for args in [
        vec!["--objective", "volna"],
        vec!["--objective", "branin", "--methods", "alm"],
        vec!["--objective", "branin", "--replicates", "0"],
        vec!["--score-field", "grid9"],
    ] {
        let out = mice().args(&args).arg("--out").arg(std::env::temp_dir().join("mice-cli-err")).output().unwrap();
        assert_eq!(out.status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn cli_score_field_mode() {
    let dir = tempfile::tempdir().unwrap();
    let out = mice()
        .args(["--score-field", "grid7-cluster", "--criterion", "mice", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let csv = fs::read_to_string(dir.path().join("score_field_grid7-cluster_mice.csv")).unwrap();
    // 49 grid points plus the clustered one; the design points lie off the grid.
    assert_eq!(csv.lines().count(), 1 + 50);
}
