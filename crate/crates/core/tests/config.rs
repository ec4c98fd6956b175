use wr2l::config::RunConfig;
use wr2l::envs::{EnvFamily, EnvSettings, QuadSpec};
use wr2l::harness::{AxisSpec, GridSpec};
use wr2l::robust::{SolveMethod, Wr2lConfig};
use wr2l::Error;

#[test]
fn parse_serialize_parse_is_identity() {
    let text = r#"
[env]
family = "pendulum"
phi0 = [1.2, 0.8]
noise_std = 0.01

[wr2l]
epsilon = 0.05
outer_iters = 7
reset_inner = true
solver = { method = "conjugate_gradient", tol = 1e-10, max_iters = 50 }

[wr2l.gradient]
sigma = 0.1
n_samples = 8

[wr2l.ppo]
hidden = [32, 32]
entropy_stop_threshold = -1.0

[eval]
episodes_per_point = 3
deterministic = true
axes = [{ name = "length", values = [0.5, 1.0] }, { name = "mass", range = [0.5, 2.0, 4] }]

[io]
seed = 11
out_dir = "runs/p"
"#;
    let a = RunConfig::from_toml_str(text).unwrap();
    assert_eq!(a.wr2l().unwrap().epsilon, 0.05);
    assert_eq!(
        a.wr2l().unwrap().solver,
        SolveMethod::ConjugateGradient { tol: 1e-10, max_iters: 50 }
    );
    assert_eq!(a.io.seed, 11);
    let b = RunConfig::from_toml_str(&a.to_toml_string().unwrap()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn programmatic_config_round_trips() {
    let mut cfg = RunConfig::new(EnvSettings::new(EnvFamily::QuadTestbed).with_quad(QuadSpec::default()));
    cfg.wr2l = Some(Wr2lConfig::new(0.3));
    cfg.eval = Some(GridSpec {
        axes: vec![AxisSpec { name: "phi_0".into(), values: None, range: Some((0.0, 1.0, 3)) }],
        ..GridSpec::default()
    });
    let back = RunConfig::from_toml_str(&cfg.to_toml_string().unwrap()).unwrap();
    assert_eq!(back, cfg);
}

#[test]
fn errors_name_the_section_or_field() {
    let neg = RunConfig::from_toml_str("[env]\nfamily = \"cartpole\"\n[wr2l]\nepsilon = -0.1\n").unwrap_err();
    assert!(matches!(&neg, Error::Config(m) if m.contains("[wr2l]") && m.contains("epsilon")), "{neg}");
    let family = RunConfig::from_toml_str("[env]\nfamily = \"acrobot\"\n").unwrap_err();
    assert!(family.to_string().contains("acrobot"), "{family}");
    let missing = RunConfig::from_toml_str("[env]\nfamily = \"cartpole\"\n").unwrap();
    assert!(missing.wr2l().is_err());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "[env]\nfamily = 3\n").unwrap();
    let e = RunConfig::load(&path).unwrap_err();
    assert!(e.to_string().contains("bad.toml"), "{e}");
}
