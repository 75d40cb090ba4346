//! The `kktcont` binary end to end: exit codes, output layout and the
//! output-directory override.

use std::path::Path;
use std::process::{Command, Output};

const RUN: &str = r#"
problem = "quad2d"
start = { named = "u+-" }
fix = { kappa_g1 = 8.0, kappa_g2 = 0.0 }
release = ["mu_psi1", "nu_psi1"]
direction = "-mu_psi1"
events = [{ kind = "fold", watch = "mu_psi1" }]
bounds = [{ name = "mu_psi1", lo = 0.0, hi = 1.5 }]
"#;

fn kktcont(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kktcont"))
        .args(args)
        .current_dir(dir)
        .env_remove("KKTCONT_OUT")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn run_list_and_plot() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.toml"), RUN).unwrap();
    let o = kktcont(dir.path(), &["run", "run.toml"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(dir.path().join("branch.csv").exists());
    assert!(dir.path().join("branch.1.csv").exists());

    let o = kktcont(dir.path(), &["list"]);
    assert_eq!(o.status.code(), Some(0));
    let labels = stdout(&o);
    assert!(labels.lines().any(|l| l.starts_with("1.FP.")), "{labels}");
    assert!(labels.lines().any(|l| l.starts_with("1.MX.")), "{labels}");

    let o = kktcont(
        dir.path(),
        &["plot", "--x", "x", "--y", "y", "-o", "b.svg", "branch.csv"],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let svg = std::fs::read_to_string(dir.path().join("b.svg")).unwrap();
    assert!(
        svg.starts_with("<svg") && svg.contains("class=\"FP\"") && svg.contains("class=\"MX\"")
    );
}

#[test]
fn restart_from_a_stored_fold() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.toml"), RUN).unwrap();
    kktcont(dir.path(), &["run", "run.toml"]);
    let fp = stdout(&kktcont(dir.path(), &["list"]))
        .lines()
        .find(|l| l.starts_with("1.FP."))
        .expect("a fold")
        .to_string();
    let cfg = format!(
        "problem = \"quad2d\"\nstart = {{ restart = \"{fp}\" }}\nfix = {{ kappa_g1 = 8.0, kappa_g2 = 0.0 }}\nrelease = [\"mu_psi1\", \"nu_psi1\"]\ndirection = \"+mu_psi1\"\nsteps = {{ max_steps = 5 }}\n"
    );
    std::fs::write(dir.path().join("again.toml"), cfg).unwrap();
    let o = kktcont(dir.path(), &["run", "again.toml"]);
    assert!(matches!(o.status.code(), Some(0 | 4)), "{}", stderr(&o));
    assert!(dir.path().join("branch.2.csv").exists());
}

#[test]
fn output_directory_override() {
    let dir = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.toml"), RUN).unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_kktcont"))
        .args(["run", "run.toml"])
        .current_dir(dir.path())
        .env("KKTCONT_OUT", out.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(out.path().join("branch.1.csv").exists());
    assert!(!dir.path().join("branch.1.csv").exists());
}

#[test]
fn schedule_preset() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("s.toml"),
        "problem = \"quad2d\"\nschedule = \"u++\"\n",
    )
    .unwrap();
    let o = kktcont(dir.path(), &["schedule", "s.toml"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(
        text.contains("stages: 3") && text.contains("kkt: pass"),
        "{text}"
    );
    assert!(dir.path().join("summary.csv").exists());
}

#[test]
fn info_prints_dimensions() {
    let dir = tempfile::tempdir().unwrap();
    let o = kktcont(dir.path(), &["info", "doedel"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(
        text.lines()
            .any(|l| l.split_whitespace().collect::<Vec<_>>() == ["d", "3"]),
        "{text}"
    );
    assert!(
        text.lines()
            .any(|l| l.split_whitespace().collect::<Vec<_>>() == ["q", "1"]),
        "{text}"
    );
}

#[test]
fn usage_errors_exit_64_and_name_the_culprit() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("bad.toml"),
        RUN.replace("kappa_g2", "kappa_g7"),
    )
    .unwrap();
    let o = kktcont(dir.path(), &["run", "bad.toml"]);
    assert_eq!(o.status.code(), Some(64));
    assert!(stderr(&o).contains("kappa_g7"), "{}", stderr(&o));

    let o = kktcont(dir.path(), &["info", "nope"]);
    assert_eq!(o.status.code(), Some(64));
    assert!(stderr(&o).contains("nope"));

    let o = kktcont(dir.path(), &["frobnicate"]);
    assert_eq!(o.status.code(), Some(64));
}

#[test]
fn missing_restart_exits_66() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("r.toml"),
        "problem = \"quad2d\"\nstart = { restart = \"9.FP.3\" }\nrelease = [\"mu_psi1\", \"nu_psi1\"]\n",
    )
    .unwrap();
    let o = kktcont(dir.path(), &["run", "r.toml"]);
    assert_eq!(o.status.code(), Some(66), "{}", stderr(&o));
}
