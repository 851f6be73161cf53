use std::path::Path;
use std::process::{Command, Output};

fn asne(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_asne"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

const QUICK: &[&str] = &["--repeats", "2", "--iterations", "5", "--ants", "8", "--epochs", "2"];

fn quick_run(dir: &Path, out: &str, extra: &[&str]) -> Output {
    let mut args = vec!["run", "--output", out];
    args.extend_from_slice(QUICK);
    args.extend_from_slice(extra);
    asne(dir, &args)
}

#[test]
fn synth_writes_a_csv() {
    let dir = tempfile::tempdir().unwrap();
    let o = asne(dir.path(), &["synth", "--kind", "mackey_glass_like", "--length", "64", "--width", "3", "--out", "mg.csv"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(dir.path().join("mg.csv")).unwrap();
    assert_eq!(text.lines().next(), Some("d0,d1,y"));
    assert_eq!(text.lines().count(), 65);
}

#[test]
fn run_writes_outputs_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    for out in ["a", "b"] {
        let o = quick_run(dir.path(), out, &[]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["summary.json", "config.toml", "fitness.dat", "plot.gp", "repeat_00/log.csv", "repeat_01/best_genome.json"] {
        assert!(dir.path().join("a").join(f).exists(), "{f}");
    }
    let read = |p: &str| std::fs::read(dir.path().join(p)).unwrap();
    assert_eq!(read("a/summary.json"), read("b/summary.json"));
    assert_eq!(read("a/repeat_01/log.csv"), read("b/repeat_01/log.csv"));
}

#[test]
fn explorer_only_runs_have_no_recurrent_edges() {
    let dir = tempfile::tempdir().unwrap();
    let o = quick_run(dir.path(), "exp", &["--species", "exp"]);
    assert_eq!(code(&o), 0);
    let summary: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("exp/summary.json")).unwrap()).unwrap();
    for r in summary["per_repeat"].as_array().unwrap() {
        assert_eq!(r["rec_edges"], 0);
    }
}

#[test]
fn config_file_with_overrides() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::create_dir(dir.path().join("data")).unwrap();
    assert_eq!(code(&asne(dir.path(), &["synth", "--length", "80", "--out", "data/s.csv"])), 0);
    std::fs::write(
        dir.path().join("data/exp.toml"),
        "name = \"from_file\"\nrepeats = 1\n[evolution]\nmax_iteration = 4\n[data]\nsource = \"csv\"\npath = \"s.csv\"\ntarget = \"y\"\n",
    )
    .unwrap();
    let o = asne(dir.path(), &["run", "--config", "data/exp.toml", "--ants", "6", "--output", "cfg"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let stored = std::fs::read_to_string(dir.path().join("cfg/config.toml")).unwrap();
    assert!(stored.contains("name = \"from_file\""));
    assert!(stored.contains("ants = 6"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&asne(dir.path(), &["run", "--phi", "sometimes"])), 2);
    assert_eq!(code(&asne(dir.path(), &["run", "--ants", "0"])), 2);
    assert_eq!(code(&asne(dir.path(), &["run", "--config", "absent.toml"])), 2);
    std::fs::write(dir.path().join("bad.csv"), "a,b\n1,x\n2,3\n").unwrap();
    assert_eq!(code(&asne(dir.path(), &["run", "--csv", "bad.csv", "--target", "b", "--iterations", "2"])), 3);
    assert_eq!(code(&asne(dir.path(), &["run", "--csv", "missing.csv", "--target", "b"])), 3);
}

#[test]
fn a_broken_repeat_is_a_partial_failure() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&quick_run(dir.path(), "p", &[])), 0);
    std::fs::write(dir.path().join("p/repeat_01/checkpoint.json"), "{ not json").unwrap();
    let o = quick_run(dir.path(), "p", &["--resume"]);
    assert_eq!(code(&o), 4);
    assert!(String::from_utf8_lossy(&o.stderr).contains("repeat 1 failed"));
    let summary: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("p/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["failed"].as_array().unwrap().len(), 1);
    assert_eq!(summary["per_repeat"].as_array().unwrap().len(), 1);
}

#[test]
fn resume_of_a_finished_run_changes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&quick_run(dir.path(), "r", &[])), 0);
    let before = std::fs::read(dir.path().join("r/summary.json")).unwrap();
    assert_eq!(code(&quick_run(dir.path(), "r", &["--resume"])), 0);
    assert_eq!(std::fs::read(dir.path().join("r/summary.json")).unwrap(), before);
}

#[test]
fn grid_rank_and_inspect() {
    let dir = tempfile::tempdir().unwrap();
    let o = asne(dir.path(), &["grid", "--out", "grid"]);
    assert_eq!(code(&o), 0);
    assert_eq!(std::fs::read_dir(dir.path().join("grid")).unwrap().count(), 1920);

    assert_eq!(code(&quick_run(dir.path(), "runs/one", &["--phi", "off"])), 0);
    assert_eq!(code(&quick_run(dir.path(), "runs/two", &["--reward", "l1", "--gamma", "0.25"])), 0);
    let o = asne(dir.path(), &["rank", "runs", "--top", "1,2", "--out", "table.csv"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let table = std::fs::read_to_string(dir.path().join("table.csv")).unwrap();
    let mut lines = table.lines();
    assert_eq!(
        lines.next(),
        Some("heuristic,top1_mean,top1_median,top1_best,top2_mean,top2_median,top2_best")
    );
    let ants = table.lines().find(|l| l.starts_with("ants_8")).unwrap();
    assert!(ants.ends_with(",2(0),2(0),2(0)"), "{ants}");

    for file in ["runs/one/repeat_00/best_genome.json", "runs/one/repeat_00/checkpoint.json"] {
        let o = asne(dir.path(), &["inspect", file]);
        assert_eq!(code(&o), 0);
        assert!(String::from_utf8_lossy(&o.stdout).contains("recurrent edges"));
    }
    let o = asne(dir.path(), &["inspect", "runs/one/summary.json"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn csv_flag_sets_the_input_width() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&asne(dir.path(), &["synth", "--width", "3", "--length", "60", "--out", "w3.csv"])), 0);
    let o = quick_run(dir.path(), "w3", &["--csv", "w3.csv", "--target", "y"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let stored = std::fs::read_to_string(dir.path().join("w3/config.toml")).unwrap();
    assert!(stored.contains("input_width = 2"));
}
