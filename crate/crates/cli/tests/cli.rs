use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use classforget_cli::config::RunConfig;
use classforget_cli::{EXIT_CHECKPOINT, EXIT_CONFIG, EXIT_DATA, EXIT_GATES, EXIT_MASK};
use classforget_core::eval::MetricsReport;
use classforget_core::model::load_checkpoint;
use classforget_core::relevance::RelevanceMask;

const TINY: &str = r#"
seed = 5
out_dir = "out"
[data.synthetic]
train_per_class = 6
test_per_class = 3
[subset]
fraction = 0.5
[train]
epochs = 1
batch_size = 16
[unlearn]
epochs = 2
batch_size = 8
"#;

fn setup(extra: &str) -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "run.toml", "", extra);
    (dir, cfg)
}

/// `top` goes before the first table header, `extra` after the last.
fn write_config(dir: &Path, name: &str, top: &str, extra: &str) -> PathBuf {
    let cfg = dir.join(name);
    std::fs::write(&cfg, format!("{top}{TINY}{extra}")).unwrap();
    cfg
}

fn run(cfg: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_classforget"))
        .args(args)
        .arg("--config")
        .arg(cfg)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn ok(o: Output) -> String {
    assert_eq!(code(&o), 0, "stderr: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

#[test]
fn pipeline_end_to_end() {
    let (dir, cfg) = setup("");
    let out = dir.path().join("out");
    ok(run(&cfg, &["train-original"]));
    let hash = RunConfig::load(&cfg).unwrap().hash();
    let original = load_checkpoint(&out.join("original.ckpt")).unwrap();
    assert_eq!(original.meta["config_hash"], hash);
    assert_eq!(original.meta["seed"], "5");

    let summary = ok(run(&cfg, &["identify"]));
    assert!(summary.contains("conv1.weight"));
    let mask = RelevanceMask::load(&out.join("mask.txt")).unwrap();
    assert!(mask.count() > 0 && mask.count() < mask.total());
    assert_eq!(mask.header.meta["config_hash"], hash);

    ok(run(&cfg, &["unlearn"]));
    let report = MetricsReport::load(&out.join("reports/ERwP.json")).unwrap();
    assert_eq!(report.per_epoch.len(), 3);
    assert_eq!(report.meta["config_hash"], hash);
    assert!(out.join("erwp_curve.svg").exists() && out.join("erwp_losses.csv").exists());
    let svg = std::fs::read_to_string(out.join("erwp_curve.svg")).unwrap();
    assert!(svg.contains(&hash));

    let e = run(&cfg, &["evaluate"]);
    assert!(code(&e) == 0 || code(&e) == EXIT_GATES);

    let table = ok(run(&cfg, &["baselines"]));
    let rows: Vec<&str> = table.lines().filter(|l| !l.starts_with("--") && !l.starts_with("method")).collect();
    assert_eq!(rows.len(), 2, "{table}");

    let cfg_wd = write_config(dir.path(), "wd.toml", "baselines = [\"WD\"]\n", "");
    let table = ok(run(&cfg_wd, &["baselines"]));
    let rows: Vec<&str> = table.lines().filter(|l| !l.starts_with("--") && !l.starts_with("method")).collect();
    assert_eq!(rows.len(), 3, "{table}");
    assert!(rows[1].starts_with("WD"));
    let again = ok(run(&cfg_wd, &["report"]));
    assert_eq!(again, table);
}

#[test]
fn original_checkpoint_fails_the_gates() {
    let (dir, cfg) = setup("");
    ok(run(&cfg, &["train-original"]));
    let original = dir.path().join("out/original.ckpt");
    let o = run(&cfg, &["evaluate", "--checkpoint", original.to_str().unwrap()]);
    assert_eq!(code(&o), EXIT_GATES);
    let report = MetricsReport::from_json(&String::from_utf8(o.stdout).unwrap()).unwrap();
    let gates = report.gates.unwrap();
    assert!(gates.ca_ne && !gates.fpa_e);
}

#[test]
fn error_classes_map_to_exit_codes() {
    let (dir, cfg) = setup("");
    ok(run(&cfg, &["train-original"]));
    let out = dir.path().join("out");

    let corrupt = dir.path().join("bad.ckpt");
    let mut bytes = std::fs::read(out.join("original.ckpt")).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0xff;
    std::fs::write(&corrupt, bytes).unwrap();
    let o = run(&cfg, &["evaluate", "--checkpoint", corrupt.to_str().unwrap()]);
    assert_eq!(code(&o), EXIT_CHECKPOINT);

    let o = run(&cfg, &["unlearn", "--mask", dir.path().join("none.txt").to_str().unwrap()]);
    assert_eq!(code(&o), EXIT_MASK);

    let (_d, bad) = setup("[gates]\nbeat = 3\n");
    assert_eq!(code(&run(&bad, &["identify"])), EXIT_CONFIG);

    let (_d, missing) = setup("[data]\ndir = \"nowhere\"\n");
    assert_eq!(code(&run(&missing, &["train-original"])), EXIT_DATA);
}

#[test]
fn identify_is_deterministic_and_handles_no_excluded_classes() {
    let (dir, cfg) = setup("");
    ok(run(&cfg, &["train-original"]));
    let a = dir.path().join("a.txt");
    let b = dir.path().join("b.txt");
    ok(run(&cfg, &["identify", "--mask", a.to_str().unwrap()]));
    ok(run(&cfg, &["identify", "--mask", b.to_str().unwrap()]));
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

    let none_in_place = write_config(dir.path(), "none.toml", "", "[partition]\nexcluded = []\n");
    let e = dir.path().join("empty.txt");
    let o = Command::new(env!("CARGO_BIN_EXE_classforget"))
        .args(["identify", "--config"])
        .arg(&none_in_place)
        .arg("--mask")
        .arg(&e)
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stderr).contains("excludes no classes"));
    assert_eq!(RelevanceMask::load(&e).unwrap().count(), 0);
}

#[test]
fn zero_epochs_returns_the_input_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let zero = dir.path().join("zero.toml");
    std::fs::write(&zero, TINY.replace("epochs = 2", "epochs = 0")).unwrap();
    ok(run(&zero, &["train-original"]));
    ok(run(&zero, &["identify"]));
    ok(run(&zero, &["unlearn"]));
    let out = dir.path().join("out");
    let a = load_checkpoint(&out.join("original.ckpt")).unwrap();
    let b = load_checkpoint(&out.join("erwp.ckpt")).unwrap();
    assert_eq!(a.params(), b.params());
}

#[test]
fn seed_override_changes_the_recorded_hash() {
    let (dir, cfg) = setup("");
    ok(run(&cfg, &["train-original", "--seed-override", "9"]));
    let net = load_checkpoint(&dir.path().join("out/original.ckpt")).unwrap();
    assert_eq!(net.meta["seed"], "9");
    assert_eq!(net.meta["config_hash"], RunConfig::load(&cfg).unwrap().with_seed(9).hash());
}

#[test]
fn shipped_desk_config_parses() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/desk.toml");
    let cfg = RunConfig::load(&path).unwrap();
    assert_eq!(cfg.baselines.len(), 9);
    assert_eq!((cfg.unlearn.beta, cfg.unlearn.kappa, cfg.unlearn.epochs), (10.0, 2.0, 10));
    assert_eq!(cfg.partition.build(10).unwrap().excluded().len(), 2);
    assert_eq!(cfg.subset.fraction, Some(0.1));
}
