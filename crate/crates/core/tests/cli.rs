use std::fs;
use std::path::Path;
use std::process::Command;

const SMALL: &[&str] = &["--identities", "8", "--per-identity", "20", "--dim", "8", "--epochs", "4"];

struct Outcome {
    code: i32,
    stdout: String,
    stderr: String,
}

fn dtml(dir: &Path, args: &[&str]) -> Outcome {
    let out = Command::new(env!("CARGO_BIN_EXE_dtml"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs");
    Outcome {
        code: out.status.code().expect("exit code"),
        stdout: String::from_utf8_lossy(&out.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
    }
}

fn ok(dir: &Path, cmd: &str, extra: &[&str]) -> Outcome {
    let mut args = vec![cmd];
    args.extend_from_slice(SMALL);
    args.extend_from_slice(extra);
    let o = dtml(dir, &args);
    assert_eq!(o.code, 0, "dtml {args:?} failed: {}", o.stderr);
    o
}

/// gen-synth, train-source, adapt and eval with default file names.
fn pipeline(dir: &Path) {
    ok(dir, "gen-synth", &[]);
    ok(dir, "train-source", &["--model-out", "source.json"]);
    ok(dir, "adapt", &["--model-in", "source.json", "--model-out", "adapted.json"]);
    ok(dir, "eval", &["--model-in", "adapted.json", "--far", "0.01,0.1"]);
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    fs::read(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

#[test]
fn gen_synth_writes_three_csvs_with_provenance() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), "gen-synth", &["--seed", "7"]);
    for name in ["source.csv", "target.csv", "target_truth.csv"] {
        let text = String::from_utf8(read(dir.path(), name)).unwrap();
        assert!(text.starts_with("# dtml gen-synth\n"), "{name}");
        assert!(text.contains("# seed = 7\n"), "{name}");
        assert!(text.contains("# identities = 8\n"), "{name}");
    }
    let target = String::from_utf8(read(dir.path(), "target.csv")).unwrap();
    let header = target.lines().find(|l| !l.starts_with('#')).unwrap();
    assert!(header.starts_with("id,label,"), "{header}");
    let row = target.lines().filter(|l| !l.starts_with('#')).nth(1).unwrap();
    assert!(row.split(',').nth(1) == Some(""), "target rows carry no label: {row}");
}

#[test]
fn degenerate_generator_configs_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(dtml(dir.path(), &["gen-synth", "--identities", "1"]).code, 2);
    assert_eq!(dtml(dir.path(), &["gen-synth", "--per-identity", "1"]).code, 2);
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    assert_eq!(dtml(p, &["no-such-command"]).code, 2);
    assert_eq!(dtml(p, &["gen-synth", "--no-such-flag", "1"]).code, 2);
    assert_eq!(dtml(p, &["gen-synth", "--alpha", "abc"]).code, 2);
    assert_eq!(dtml(p, &["train-source", "--source-csv", "missing.csv"]).code, 2);
    fs::write(p.join("bad.cfg"), "alpha = 0.2\nbogus_key = 1\n").unwrap();
    let o = dtml(p, &["--config", "bad.cfg", "gen-synth"]);
    assert_eq!(o.code, 2);
    assert!(o.stderr.contains("bogus_key"), "{}", o.stderr);
    ok(p, "gen-synth", &[]);
    assert_eq!(dtml(p, &["adapt"]).code, 2, "adapt needs model_in");
    assert_eq!(dtml(p, &["--help"]).code, 0);
}

#[test]
fn config_file_values_are_overridden_by_flags_and_echoed() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    fs::write(p.join("run.cfg"), "# a run\nalpha = 0.3\nepochs = 2\nidentities = 6\n").unwrap();
    let o = dtml(p, &["--config", "run.cfg", "gen-synth", "--identities", "7", "--per-identity", "10"]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    let text = String::from_utf8(read(p, "source.csv")).unwrap();
    assert!(text.contains("# identities = 7\n"));
    assert!(text.contains("# alpha = 0.3\n"));
    assert!(text.contains("# epochs = 2\n"));
}

#[test]
fn artifacts_are_written_and_report_carries_far_and_config() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    pipeline(p);
    for name in [
        "source.json",
        "source.json.config",
        "adapted.json",
        "adapted.json.config",
        "loss.csv",
        "diagnostics.csv",
        "report.json",
        "histogram.csv",
    ] {
        assert!(p.join(name).exists(), "{name} missing");
    }
    let report: serde_json::Value = serde_json::from_slice(&read(p, "report.json")).unwrap();
    let fars: Vec<f64> = report["tpr_at_far"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e["far"].as_f64().unwrap())
        .collect();
    assert_eq!(fars, [0.01, 0.1]);
    let auc = report["auc"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&auc));
    assert_eq!(report["config"]["model_in"], "adapted.json");
    assert_eq!(report["histogram_path"], "histogram.csv");

    let diag = String::from_utf8(read(p, "diagnostics.csv")).unwrap();
    let header = diag.lines().find(|l| !l.starts_with('#')).unwrap();
    assert_eq!(
        header,
        "epoch,n_wc_labeled,n_bc_labeled,mu_wc_s,sigma_wc_s,mu_bc_s,sigma_bc_s,mu_wc_t,mu_bc_t,alignment_gap"
    );
    assert_eq!(diag.lines().filter(|l| !l.starts_with('#')).count(), 1 + 4);
    let loss = String::from_utf8(read(p, "loss.csv")).unwrap();
    assert!(loss.lines().any(|l| l == "epoch,scenario,source_loss,target_loss,total_loss"));
    let hist = String::from_utf8(read(p, "histogram.csv")).unwrap();
    assert!(hist.lines().any(|l| l == "bin_lo,bin_hi,wc_count,bc_count,domain"));
    assert!(hist.lines().any(|l| l.ends_with(",source")) && hist.lines().any(|l| l.ends_with(",target")));
}

#[test]
fn sidecar_is_a_valid_config_reproducing_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    ok(p, "gen-synth", &[]);
    ok(p, "train-source", &["--model-out", "a.json", "--alpha", "0.25"]);
    let first = read(p, "a.json");
    let o = dtml(p, &["--config", "a.json.config", "train-source", "--model-out", "b.json"]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    assert!(first == read(p, "b.json"));
}

#[test]
fn reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    pipeline(a.path());
    pipeline(b.path());
    for name in [
        "source.csv",
        "target.csv",
        "target_truth.csv",
        "source.json",
        "adapted.json",
        "diagnostics.csv",
        "loss.csv",
        "report.json",
        "histogram.csv",
    ] {
        assert!(read(a.path(), name) == read(b.path(), name), "{name} differs");
    }
}

#[test]
fn zero_lambda_matches_source_only_scenario_byte_for_byte() {
    // A wide margin keeps target hinges active, so λ=1 must differ.
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    ok(p, "gen-synth", &[]);
    ok(p, "train-source", &["--model-out", "source.json"]);
    let adapt = |scenario: &str, lambda: &str, out: &str| {
        let args = ["--model-in", "source.json", "--alpha", "1.5", "--scenario", scenario, "--lambda", lambda, "--model-out", out];
        ok(p, "adapt", &args);
    };
    adapt("ls", "1", "ls.json");
    adapt("ls+lt", "0", "l0.json");
    adapt("ls+lt", "1", "l1.json");
    assert!(read(p, "ls.json") == read(p, "l0.json"), "λ=0 differs from ls");
    assert!(read(p, "ls.json") != read(p, "l1.json"), "target term had no effect");
}

#[test]
fn target_only_adaptation_under_extreme_shift_reports_misalignment() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let far = ["40"; 8].join(",");
    ok(p, "gen-synth", &["--translation", &far]);
    ok(p, "train-source", &["--model-out", "source.json"]);
    let mut args = vec!["adapt"];
    args.extend_from_slice(SMALL);
    args.extend_from_slice(&["--translation", &far, "--model-in", "source.json", "--scenario", "lt"]);
    let o = dtml(p, &args);
    assert_eq!(o.code, 1, "{}", o.stderr);
    assert!(o.stderr.contains("misaligned"), "{}", o.stderr);
}

#[test]
fn grad_check_passes_and_an_injected_fault_fails() {
    let dir = tempfile::tempdir().unwrap();
    let o = dtml(dir.path(), &["grad-check"]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    let v: f64 = o.stdout.trim().strip_prefix("max_rel_err=").unwrap().parse().unwrap();
    assert!(v < 1e-4);
    let o = dtml(dir.path(), &["grad-check", "--inject-fault"]);
    assert_eq!(o.code, 1);
    assert!(o.stdout.starts_with("max_rel_err="));
}

#[test]
fn adapt_never_reads_target_labels() {
    // Same features with and without a label column must adapt identically.
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    pipeline(p);
    let target = String::from_utf8(read(p, "target.csv")).unwrap();
    let truth = String::from_utf8(read(p, "target_truth.csv")).unwrap();
    let labels: std::collections::HashMap<&str, &str> = truth
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .filter_map(|l| l.split_once(','))
        .collect();
    let labeled: String = target
        .lines()
        .filter(|l| !l.starts_with('#'))
        .enumerate()
        .map(|(n, l)| {
            if n == 0 {
                return format!("{l}\n");
            }
            let (id, rest) = l.split_once(',').unwrap();
            format!("{id},{}{}\n", labels[id], &rest[rest.find(',').unwrap()..])
        })
        .collect();
    fs::write(p.join("labeled_target.csv"), labeled).unwrap();
    ok(
        p,
        "adapt",
        &["--model-in", "source.json", "--target-csv", "labeled_target.csv", "--model-out", "from_labeled.json"],
    );
    assert!(read(p, "adapted.json") == read(p, "from_labeled.json"));
}
