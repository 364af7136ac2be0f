use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn esm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_esm"))
        .args(args)
        .env_remove("ESM_OUT_DIR")
        .output()
        .unwrap()
}

fn default_config() -> String {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/default.toml");
    fs::read_to_string(path).unwrap()
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("config.toml");
    fs::write(&path, text).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn run_total_matches_slot_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &default_config());
    let out = dir.path().join("out");
    let o = esm(&["run", "--config", s(&cfg), "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    let horizon = summary["horizon"].as_u64().unwrap() as usize;
    let csv = fs::read_to_string(out.join("slots.csv")).unwrap();
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = |name: &str| header.iter().position(|h| *h == name).unwrap();
    let (price, e, q, d, s_r, delay, regime) = (
        col("price"),
        col("E"),
        col("Q"),
        col("D"),
        col("S_r"),
        col("delay"),
        col("regime"),
    );

    let (mut purchase, mut entries, mut usage, mut delay_sum) = (0.0, 0.0, 0.0, 0.0);
    for line in lines.take(horizon) {
        let f: Vec<&str> = line.split(',').collect();
        let x = |i: usize| f[i].parse::<f64>().unwrap();
        purchase += x(e) * x(price);
        if f[regime] != "idle" {
            entries += 1.0;
        }
        usage += (x(q) + x(s_r) - x(d)).abs();
        if !f[delay].is_empty() {
            delay_sum += x(delay);
        }
    }
    let n = horizon as f64;
    let d_max: f64 = 18.0;
    let total = purchase / n
        + entries * 0.001 / n
        + 0.2 * (usage / n).powi(2)
        + (delay_sum / n).powi(2) / (d_max * d_max);
    let reported = summary["total"].as_f64().unwrap();
    assert!((total - reported).abs() < 1e-12, "{total} vs {reported}");
}

#[test]
fn missing_key_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let text = default_config().replace("b_max = 3.0\n", "");
    let cfg = write_config(dir.path(), &text);
    let o = esm(&["run", "--config", s(&cfg), "--out", s(dir.path())]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("b_max"));
}

#[test]
fn seed_changes_trace_not_schema() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &default_config());
    let trace = |seed: &str, sub: &str| {
        let out = dir.path().join(sub);
        let o = esm(&[
            "gen-trace",
            "--config",
            s(&cfg),
            "--seed",
            seed,
            "--out",
            s(&out),
        ]);
        assert!(o.status.success());
        fs::read_to_string(out.join("trace.csv")).unwrap()
    };
    let a = trace("1", "a");
    let b = trace("2", "b");
    let again = trace("1", "c");
    assert_eq!(a, again);
    assert_ne!(a, b);
    assert_eq!(a.lines().next(), b.lines().next());
    assert_eq!(a.lines().count(), b.lines().count());
}

#[test]
fn sweep_is_reproducible_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let text = default_config()
        .replace("replications = 20", "replications = 3")
        .replace("horizon = 288", "horizon = 96")
        + "\n[experiment.sweep]\nd_max = [6.0, 12.0]\n";
    let cfg = write_config(dir.path(), &text);
    let sweep = |workers: &str, sub: &str| {
        let out = dir.path().join(sub);
        let o = esm(&[
            "sweep",
            "--config",
            s(&cfg),
            "--workers",
            workers,
            "--out",
            s(&out),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        (
            fs::read(out.join("sweep.csv")).unwrap(),
            fs::read(out.join("sweep_means.csv")).unwrap(),
        )
    };
    let one = sweep("1", "one");
    let four = sweep("4", "four");
    assert_eq!(one, four);
    let rows = String::from_utf8(one.0).unwrap();
    assert_eq!(rows.lines().count(), 1 + 2 * 3 * 3);
}

#[test]
fn verify_flags_negated_delay_objective() {
    let dir = tempfile::tempdir().unwrap();
    let text = default_config()
        .replace(
            "z0_mode = \"shifted\"",
            "z0_mode = \"shifted\"\nfault = \"negate_omega_o\"",
        )
        .replace("equivalence_cases = 1000", "equivalence_cases = 200");
    let cfg = write_config(dir.path(), &text);
    let o = esm(&["verify", "--config", s(&cfg), "--out", s(dir.path())]);
    assert!(!o.status.success());
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("FAIL subproblem_equivalence"), "{stdout}");
}

#[test]
fn verify_reports_battery_violation_above_v_max() {
    let dir = tempfile::tempdir().unwrap();
    let text = default_config().replace("# v = 10.0", "v = 60.0 #");
    let cfg = write_config(dir.path(), &text);
    let o = esm(&["verify", "--config", s(&cfg), "--out", s(dir.path())]);
    assert!(!o.status.success());
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("FAIL battery_bounds"), "{stdout}");
}
