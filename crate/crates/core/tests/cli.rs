use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_postrate"))
}

fn config(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn small_config(dir: &Path) -> PathBuf {
    let path = dir.join("small.toml");
    std::fs::write(
        &path,
        r#"
[truth]
kind = "sparse"
margin = 0.1
levels = [0.2, 0.8, 0.2]

[prior]
k_model = 3
within = "uniform"

[run]
n_grid = [200, 400, 800]
draws = 10
replicates = 2
u = 0.5
t = 1.0
seed = 7
"#,
    )
    .unwrap();
    path
}

#[test]
fn rate_study_replays_byte_identically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let outs: Vec<Vec<u8>> = ["a.csv", "b.csv"]
        .iter()
        .map(|name| {
            let out = dir.path().join(name);
            let o = run(&["rate-study", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
            assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
            std::fs::read(out).unwrap()
        })
        .collect();
    assert_eq!(outs[0], outs[1]);
    let text = String::from_utf8(outs[0].clone()).unwrap();
    assert!(text.starts_with("# postrate rate-study v1\n"));
    // header + 3 n × 2 replicates
    assert_eq!(text.lines().count(), 2 + 6);

    let reseeded = dir.path().join("c.csv");
    let o = run(&[
        "rate-study",
        "--config",
        cfg.to_str().unwrap(),
        "--seed",
        "8",
        "--out",
        reseeded.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    assert_ne!(std::fs::read(reseeded).unwrap(), outs[0]);
}

#[test]
fn plots_are_written_next_to_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("study.csv");
    let o = run(&["rate-study", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--plot"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for suffix in ["rate", "exceedance"] {
        let svg = std::fs::read_to_string(dir.path().join(format!("study_{suffix}.svg"))).unwrap();
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains("class=\"series\""));
    }
}

#[test]
fn invalid_config_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[truth]\nkind = \"sparse\"\nlevels = [1.5]\nmargin = 0.1\n[run]\nn_grid = [100]\n").unwrap();
    let o = run(&["rate-study", "--config", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));

    std::fs::write(&bad, "[truth]\nkind = \"sparse\"\nbogus = 1\n").unwrap();
    assert_eq!(run(&["bound", "--config", bad.to_str().unwrap()]).status.code(), Some(1));

    assert_eq!(run(&["rate-study"]).status.code(), Some(1));
    assert_eq!(run(&["bound", "--config", "/nonexistent.toml"]).status.code(), Some(1));
    assert_eq!(run(&["bound", "--variant", "prop9"]).status.code(), Some(1));
    assert_eq!(run(&["divergence", "--p", "0.5,0.6", "--q", "0.5,0.5"]).status.code(), Some(1));
}

#[test]
fn divergence_output() {
    let o = run(&["divergence", "--p", "0.2,0.8", "--q", "0.5,0.5", "--t", "-0.5,kl,1"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    let rows: Vec<(String, f64)> = text
        .lines()
        .skip(2)
        .map(|l| {
            let (t, v) = l.split_once(',').unwrap();
            (t.to_string(), v.parse().unwrap())
        })
        .collect();
    let hell = (0.2f64.sqrt() - 0.5f64.sqrt()).powi(2) + (0.8f64.sqrt() - 0.5f64.sqrt()).powi(2);
    let kl = 0.2 * (0.4f64).ln() + 0.8 * (1.6f64).ln();
    let chi = 0.09 / 0.5 * 2.0;
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[1].0, "kl");
    for ((_, got), want) in rows.iter().zip([hell, kl, chi]) {
        assert!((got - want).abs() < 1e-14, "{got} vs {want}");
    }
}

#[test]
fn bound_variant_selection() {
    let cfg = config("sparse.toml");
    let o = run(&["bound", "--config", cfg.to_str().unwrap(), "--variant", "remark10", "--variant", "prop3"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    let variants: std::collections::BTreeSet<&str> =
        text.lines().skip(2).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(variants.into_iter().collect::<Vec<_>>(), ["prop3", "remark10"]);
    // 7 n values × 2 variants
    assert_eq!(text.lines().count(), 2 + 14);
}

#[test]
fn complexity_and_simulate_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    for cmd in ["complexity", "simulate"] {
        let o = run(&[cmd, "--config", cfg.to_str().unwrap()]);
        assert!(o.status.success(), "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(String::from_utf8(o.stdout).unwrap().starts_with(&format!("# postrate {cmd} v1")));
    }
}

#[test]
fn verify_prop2_reports_all_holding() {
    let o = run(&["verify-prop2", "--count", "20", "--seed", "3"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text.lines().filter(|l| l.ends_with(",true")).count(), 20, "{text}");
}
