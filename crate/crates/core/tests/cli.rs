use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn cli(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_shared-rep")).args(args).current_dir(cwd).output().unwrap()
}

const EXPERIMENT: &str = r#"
d = 12
k = 2
M = 30
partition = { kind = "equal", n = 10 }
estimators = ["replica", "multigroup:2", "mom"]
repetitions = 3
master_seed = 4
transfer = { n_new = 25 }
"#;

#[test]
fn generate_estimate_transfer_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    fs::write(p.join("exp.toml"), EXPERIMENT).unwrap();

    let out = cli(&["generate", "--config", "exp.toml", "--out-dir", "gen"], p);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(p.join("gen/ground_truth.json").exists());
    let header = fs::read_to_string(p.join("gen/data/client_00029.csv")).unwrap();
    assert!(header.starts_with("x_1,x_2,x_3,x_4,x_5,x_6,x_7,x_8,x_9,x_10,x_11,x_12,y\n"));
    assert_eq!(header.lines().count(), 11);

    let out = cli(
        &["estimate", "--data", "gen/data", "--k", "2", "--truth", "gen/ground_truth.json", "--out-dir", "est"],
        p,
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    let err: f64 = stdout.lines().find_map(|l| l.strip_prefix("sin_theta_error=")).unwrap().parse().unwrap();
    assert!((0.0..=1.0).contains(&err));
    let estimate = fs::read_to_string(p.join("est/estimate.csv")).unwrap();
    assert!(estimate.starts_with("# {\"estimator\":\"replica\""));
    assert_eq!(estimate.lines().count(), 13);

    // The estimate on the exported repetition-0 data matches the sweep's first row.
    let out = cli(&["sweep", "--config", "exp.toml", "--out-dir", "sw"], p);
    assert!(out.status.success());
    let sweep = fs::read_to_string(p.join("sw/sweep.csv")).unwrap();
    let first = sweep.lines().nth(2).unwrap();
    assert_eq!(first.split(',').nth(3).unwrap().parse::<f64>().unwrap(), err);

    for extra in [&[][..], &["--epsilon", "2.0", "--seed", "3"][..]] {
        let mut args = vec!["transfer", "--estimate", "est/estimate.csv", "--client", "gen/data/client_00000.csv"];
        args.extend_from_slice(extra);
        args.extend_from_slice(&["--out-dir", "tr"]);
        let out = cli(&args, p);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(p.join("tr/transfer.json")).unwrap()).unwrap();
        assert_eq!(json["theta_hat"].as_array().unwrap().len(), 12);
        assert_eq!(json["privacy"].is_null(), extra.is_empty());
    }
}

#[test]
fn sweep_and_plot() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    fs::write(p.join("exp.toml"), EXPERIMENT).unwrap();
    let a = cli(&["sweep", "--config", "exp.toml", "--parallelism", "1", "--out-dir", "a"], p);
    let b = cli(&["sweep", "--config", "exp.toml", "--parallelism", "3", "--out-dir", "b"], p);
    assert!(a.status.success() && b.status.success());
    let sa = fs::read(p.join("a/sweep.csv")).unwrap();
    assert_eq!(sa, fs::read(p.join("b/sweep.csv")).unwrap());
    let text = String::from_utf8(sa).unwrap();
    assert_eq!(text.lines().next().unwrap(), "# shared-rep sweep v1");
    assert_eq!(
        text.lines().nth(1).unwrap(),
        "config_hash,estimator,seed,sin_theta_error,transfer_error,lambda1,lambdak,wallclock_ms"
    );
    // 3 repetitions × (3 estimators + independent baseline).
    assert_eq!(text.lines().count(), 2 + 12);

    let out = cli(&["plot", "--input", "a", "--recipe", "fig5_style", "--svg", "--out-dir", "plots"], p);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for name in ["fig5_style_replica.csv", "fig5_style_multigroup_2.csv", "fig5_style_independent.csv", "fig5_style.svg"] {
        assert!(p.join("plots").join(name).exists(), "{name}");
    }
    let series = fs::read_to_string(p.join("plots/fig5_style_mom.csv")).unwrap();
    assert!(series.starts_with("x,median,q25,q75,mean\n30,"));
}

#[test]
fn seed_flag_overrides_master_seed() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    fs::write(p.join("exp.toml"), EXPERIMENT).unwrap();
    cli(&["sweep", "--config", "exp.toml", "--out-dir", "a"], p);
    cli(&["sweep", "--config", "exp.toml", "--seed", "9", "--out-dir", "b"], p);
    assert_ne!(fs::read(p.join("a/sweep.csv")).unwrap(), fs::read(p.join("b/sweep.csv")).unwrap());
}

#[test]
fn phase_subcommand() {
    let dir = tempfile::tempdir().unwrap();
    let out = cli(&["phase", "--beta", "0.3", "--gamma", "1.7", "--delta", "0.5"], dir.path());
    assert!(out.status.success());
    assert_eq!(String::from_utf8(out.stdout).unwrap().trim(), "region III: consistent estimation impossible");
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    // Configuration errors exit with 2.
    assert_eq!(cli(&["sweep"], p).status.code(), Some(2));
    assert_eq!(cli(&["sweep", "--profile", "huge"], p).status.code(), Some(2));
    fs::write(p.join("bad.toml"), EXPERIMENT.replace("\"mom\"", "\"erm\"")).unwrap();
    assert_eq!(cli(&["sweep", "--config", "bad.toml"], p).status.code(), Some(2));
    assert_eq!(cli(&["phase", "--beta", "0", "--gamma", "1", "--delta", "1"], p).status.code(), Some(2));
    fs::create_dir(p.join("in")).unwrap();
    fs::write(p.join("in/sweep.csv"), "# shared-rep sweep v1\n").unwrap();
    fs::write(p.join("in/configs.csv"), "config_hash,d,k,M,N\n").unwrap();
    assert_eq!(cli(&["plot", "--input", "in", "--recipe", "fig9_style"], p).status.code(), Some(2));

    // Numeric failures exit with 3.
    fs::write(p.join("nan.csv"), "x_1,x_2,y\n1,NaN,1\n2,0,1\n0,1,2\n").unwrap();
    fs::write(p.join("est.csv"), "# {\"estimator\":\"replica\",\"seed\":null,\"config_hash\":null,\"d\":2,\"k\":1}\n1\n0\n")
        .unwrap();
    let out = cli(&["transfer", "--estimate", "est.csv", "--client", "nan.csv"], p);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn shipped_configs_run() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in fs::read_dir(&root).unwrap() {
        let path = entry.unwrap().path();
        let text = fs::read_to_string(&path).unwrap();
        let grid = shared_rep::harness::ConfigGrid::from_toml_any(&text).unwrap();
        assert!(!grid.expand().unwrap().is_empty(), "{}", path.display());
        n += 1;
    }
    assert!(n >= 5);
    let dir = tempfile::tempdir().unwrap();
    let cfg = root.join("private_transfer.toml");
    let out = cli(&["sweep", "--config", cfg.to_str().unwrap(), "--out-dir", "."], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
