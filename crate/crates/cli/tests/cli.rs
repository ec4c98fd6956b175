use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"
[env]
family = "cartpole"

[wr2l]
epsilon = 0.0
outer_iters = 3

[wr2l.ppo]
hidden = [8]
n_transitions = 200
epochs = 2

[wr2l.hessian]
n_samples = 200
bucket_pairs = 50

[eval]
episodes_per_point = 2
max_episode_len = 200
axes = [{ name = "pole_length", values = [0.5, 1.0, 2.0] }]

[io]
seed = 3
"#;

fn wr2l(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wr2l"))
        .args(args)
        .arg("--out")
        .arg(out)
        .arg("--jobs")
        .arg("1")
        .output()
        .expect("binary runs")
}

fn selftest(extra: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wr2l"))
        .args(["--jobs", "1", "selftest", "--quick"])
        .args(extra)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn train_then_eval() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "run.toml", SMALL);
    let out = dir.path().join("run");
    let o = wr2l(&["train", "--config", &cfg], &out);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["train_report.csv", "policy.ckpt", "phi.toml", "config.resolved.toml", "train_report.meta.toml"] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    let report = fs::read_to_string(out.join("train_report.csv")).unwrap();
    assert!(report.starts_with("k,phi_pole_length,return_mean,constraint,entropy,seconds\n"));
    assert_eq!(report.lines().count(), 4);
    // Training at zero radius never needs a Hessian.
    assert!(!out.join("hessian.bin").exists());

    let ckpt = out.join("policy.ckpt");
    let ckpt = ckpt.to_str().unwrap();
    let e1 = dir.path().join("e1");
    let e2 = dir.path().join("e2");
    assert!(wr2l(&["eval", "--config", &cfg, "--checkpoint", ckpt], &e1).status.success());
    assert!(wr2l(&["eval", "--config", &cfg, "--checkpoint", ckpt], &e2).status.success());
    let a = fs::read_to_string(e1.join("eval.csv")).unwrap();
    assert_eq!(a, fs::read_to_string(e2.join("eval.csv")).unwrap());
    assert!(a.starts_with("param:pole_length,return_mean,return_std,n_episodes\n"));
    assert_eq!(a.lines().count(), 4);
    let meta = fs::read_to_string(e1.join("eval.meta.toml")).unwrap();
    assert!(meta.contains("policy.ckpt#") && meta.contains("seed = 3"), "{meta}");

    let bad = dir.path().join("bad.ckpt");
    fs::write(&bad, b"WR2LPOLI garbage").unwrap();
    let o = wr2l(&["eval", "--config", &cfg, "--checkpoint", bad.to_str().unwrap()], &e1);
    assert_eq!(o.status.code(), Some(1));
    let missing = dir.path().join("none.ckpt");
    let o = wr2l(&["eval", "--config", &cfg, "--checkpoint", missing.to_str().unwrap()], &e1);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn seed_flag_overrides_file_and_is_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "run.toml", &SMALL.replace("outer_iters = 3", "outer_iters = 1"));
    let out = dir.path().join("run");
    let o = wr2l(&["train", "--config", &cfg, "--seed", "7"], &out);
    assert!(o.status.success(), "{}", stderr(&o));
    let meta = fs::read_to_string(out.join("train_report.meta.toml")).unwrap();
    assert!(meta.contains("seed = 7"), "{meta}");
    let resolved = fs::read_to_string(out.join("config.resolved.toml")).unwrap();
    assert!(resolved.contains("seed = 7"), "{resolved}");
}

#[test]
fn configuration_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let no_eps = write_config(dir.path(), "a.toml", "[env]\nfamily = \"cartpole\"\n[wr2l]\nouter_iters = 3\n");
    let o = wr2l(&["train", "--config", &no_eps], &out);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("epsilon"), "{}", stderr(&o));

    let unknown = write_config(dir.path(), "b.toml", "[env]\nfamily = \"cartpole\"\nspeed = 1\n");
    let o = wr2l(&["train", "--config", &unknown], &out);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("speed"));

    let o = wr2l(&["train", "--config", "/nonexistent/run.toml"], &out);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn hessian_cache_is_reproducible_and_checked() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "run.toml", SMALL);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let o = wr2l(&["estimate-hessian", "--config", &cfg], &a);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("eigenvalues"));
    assert!(wr2l(&["estimate-hessian", "--config", &cfg], &b).status.success());
    let bytes = fs::read(a.join("hessian.bin")).unwrap();
    assert_eq!(bytes, fs::read(b.join("hessian.bin")).unwrap());
    assert!(a.join("bucket.csv").exists());

    // Training with a damaged cache stops with a checksum error.
    let mut damaged = bytes.clone();
    damaged[bytes.len() / 2] ^= 0x10;
    let cache = dir.path().join("h.bin");
    fs::write(&cache, &damaged).unwrap();
    let text = SMALL
        .replace("epsilon = 0.0", "epsilon = 0.01")
        .replace("outer_iters = 3", "outer_iters = 1")
        .replace("seed = 3", &format!("seed = 3\nhessian_cache = {:?}", cache.to_str().unwrap()));
    let robust = write_config(dir.path(), "robust.toml", &text);
    let o = wr2l(&["train", "--config", &robust], &dir.path().join("c"));
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("checksum"), "{}", stderr(&o));
    assert!(stderr(&o).contains("re-estimate"), "{}", stderr(&o));
}

#[test]
fn selftest_passes_and_catches_a_sign_flip() {
    let o = selftest(&[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    let o = selftest(&["--mutate-closed-form"]);
    assert!(!o.status.success());
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.lines().any(|l| l.starts_with("closed-form KKT") && l.contains("FAIL")), "{stdout}");
}
