use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn blotto(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_blotto")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn scenario(dir: &Path, file: &str, devices: usize, defenders: &str, extra: &str) -> String {
    let text = format!(
        "name = small\ndevices = {devices}\ndefense_budget = 6\nattack_budget = 2\nquant_levels = 4\n\
         defender = {defenders}\nhorizon = 30\nseeds = 0..2\nhotboot_runs = 2\nhotboot_slots = 30\n\
         filters1 = 2\nfilters2 = 2\nhidden = 8\n{extra}"
    );
    let path = dir.join(file);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn column(csv: &str, row: usize, name: &str) -> String {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let i = header.iter().position(|h| *h == name).unwrap();
    lines.nth(row).unwrap().split(',').nth(i).unwrap().to_string()
}

#[test]
fn ne_analyze_asymmetric_point() {
    let o = blotto(&["ne-analyze", "--regime", "asym", "--sm", "600", "--sn", "150", "--d", "20"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let p: f64 = column(&stdout(&o), 0, "expected_protection").parse().unwrap();
    assert!((p - 0.75).abs() < 1e-9);
}

#[test]
fn ne_analyze_symmetric_point() {
    let o = blotto(&["ne-analyze", "--regime", "sym", "--sm", "6", "--sn", "6", "--b", "1,1,1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let p: f64 = column(&stdout(&o), 0, "expected_protection").parse().unwrap();
    assert!(p.abs() < 1e-12);
}

#[test]
fn ne_analyze_rejects_outside_regime() {
    let o = blotto(&["ne-analyze", "--regime", "asym", "--sm", "16", "--sn", "4", "--d", "3"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("asymmetric regime inapplicable"), "{}", stderr(&o));
    assert!(stdout(&o).is_empty());
}

#[test]
fn ne_analyze_sweeps_and_pmfs() {
    let o = blotto(&["ne-analyze", "--regime", "asym", "--sm", "600,900,1200", "--sn", "150", "--d", "20,80"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).lines().count(), 1 + 6);
    let o = blotto(&["ne-analyze", "--regime", "asym", "--sm", "9", "--sn", "6", "--d", "3", "--pmf"]);
    let text = stdout(&o);
    let defender_mass: f64 = text
        .lines()
        .skip(1)
        .filter(|l| l.contains(",defender,0,"))
        .map(|l| l.rsplit(',').next().unwrap().parse::<f64>().unwrap())
        .sum();
    assert!((defender_mass - 1.0).abs() < 1e-12);
}

#[test]
fn simulate_writes_every_file() {
    let dir = tempfile::tempdir().unwrap();
    let file = scenario(dir.path(), "s.txt", 3, "q,hotboot-dqn", "");
    let out = dir.path().join("out");
    let o = blotto(&["simulate", &file, "--out-dir", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let mut names: Vec<String> = fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(
        names,
        [
            "small-hotboot-dqn.mean.csv",
            "small-hotboot-dqn.plot.csv",
            "small-hotboot-dqn.seed0.csv",
            "small-hotboot-dqn.seed1.csv",
            "small-q.mean.csv",
            "small-q.plot.csv",
            "small-q.seed0.csv",
            "small-q.seed1.csv",
            "small.summary.csv",
        ]
    );
    let seed = fs::read_to_string(out.join("small-q.seed0.csv")).unwrap();
    assert!(seed.starts_with("slot,R,uD\n"));
    assert_eq!(seed.lines().count(), 31);
}

#[test]
fn zero_horizon_writes_headers() {
    let dir = tempfile::tempdir().unwrap();
    let file = scenario(dir.path(), "s.txt", 3, "q,hotboot-dqn", "");
    let out = dir.path().join("out");
    let o = blotto(&[
        "simulate",
        &file,
        "--horizon",
        "0",
        "--defenders",
        "random",
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fs::read_to_string(out.join("small.seed0.csv")).unwrap(), "slot,R,uD\n");
}

#[test]
fn hotboot_then_simulate_checks_the_game() {
    let dir = tempfile::tempdir().unwrap();
    let three = scenario(dir.path(), "three.txt", 3, "q,hotboot-dqn", "");
    let four = scenario(dir.path(), "four.txt", 4, "q,hotboot-dqn", "");
    let warm = dir.path().join("warm.bin");
    let warm = warm.to_str().unwrap();
    let o = blotto(&["hotboot", &three, "--out", warm]);
    assert!(o.status.success(), "{}", stderr(&o));

    let ok = dir.path().join("ok");
    let o = blotto(&["simulate", &three, "--warm", warm, "--out-dir", ok.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));

    let bad = dir.path().join("bad");
    let o = blotto(&["simulate", &four, "--warm", warm, "--out-dir", bad.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("config hash mismatch"), "{}", stderr(&o));
    assert!(!bad.exists());
}

#[test]
fn hotboot_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let file = scenario(dir.path(), "s.txt", 3, "hotboot-phc", "");
    let a = dir.path().join("a.tables");
    let b = dir.path().join("b.tables");
    for p in [&a, &b] {
        let o = blotto(&["hotboot", &file, "--out", p.to_str().unwrap(), "--seed", "7"]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn parse_errors_name_the_line_and_write_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let file = scenario(dir.path(), "s.txt", 3, "q,hotboot-dqn", "colour = blue\n");
    let out = dir.path().join("out");
    let o = blotto(&["simulate", &file, "--out-dir", out.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("line 14"), "{}", stderr(&o));
    assert!(!out.exists());
}

#[test]
fn sweep_rows_and_failures() {
    let dir = tempfile::tempdir().unwrap();
    let file = scenario(dir.path(), "s.txt", 3, "ne-marginal,random", "");
    let out = dir.path().join("out");
    let o = blotto(&[
        "sweep",
        &file,
        "--axis",
        "devices",
        "--values",
        "2,3,4",
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("small.sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 3 * 2);
    assert_eq!(column(&csv, 4, "value"), "4");

    let bad = dir.path().join("bad");
    let o = blotto(&[
        "sweep",
        &file,
        "--axis",
        "defense_budget",
        "--values",
        "6,0",
        "--out-dir",
        bad.to_str().unwrap(),
    ]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("defense_budget=0"), "{}", stderr(&o));
    assert!(!bad.exists());
}

#[test]
fn unknown_preset_fails() {
    let o = blotto(&["simulate", "--preset", "fig9"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("fig4-reduced"));
}
