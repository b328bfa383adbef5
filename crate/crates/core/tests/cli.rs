use std::fs;
use std::path::Path;

use dadp_core::cli::main_with_args;

fn smoke_config(out: &Path) -> String {
    format!(
        r#"seed = 5
output_dir = "{}"

[env]
env = "Push1D"
grid_per_axis = 2
episodes_per_domain = 10
episode_len = 56
ood_domains = 2

[encoder]
epochs = 2
hidden = [16]
head_hidden = [16]
probe_lags = ["1", "4", "16", "32", "inf"]

[policy]
variants = ["Null", "Full"]
steps = 3
hidden = [16]
iterations = 20
batch_size = 16

[eval]
episodes_per_domain = 1
episode_len = 24
seeds = 2
lambdas = [0.0, 0.5]
"#,
        out.display()
    )
}

fn run(cfg: &Path, verb: &str) -> i32 {
    main_with_args(["dadp", "--config", cfg.to_str().unwrap(), verb])
}

fn pipeline(root: &Path) -> std::path::PathBuf {
    let out = root.join("out");
    let cfg = root.join("exp.toml");
    fs::write(&cfg, smoke_config(&out)).unwrap();
    for verb in ["gen-data", "train-encoder", "probe", "train-policy", "eval", "sweep", "report"] {
        assert_eq!(run(&cfg, verb), 0, "{verb} failed");
    }
    out
}

fn listing(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    v.sort();
    v
}

#[test]
fn full_pipeline_is_byte_identical_on_rerun() {
    let dir = tempfile::tempdir().unwrap();
    let out_a = pipeline(dir.path());
    let la = listing(&out_a);
    fs::remove_dir_all(&out_a).unwrap();
    let lb = listing(&pipeline(dir.path()));
    assert_eq!(la.len(), lb.len());
    let names: Vec<_> = la.iter().map(|(n, _)| n.as_str()).collect();
    for expected in ["dataset.bin", "encoder_s0.ckpt", "policy_Full_s1.ckpt", "probe.csv", "eval_summary.csv", "report.txt"] {
        assert!(names.contains(&expected), "missing {expected}");
    }
    for ((na, ba), (nb, bb)) in la.iter().zip(&lb) {
        assert_eq!(na, nb);
        assert_eq!(ba, bb, "{na} differs between reruns");
    }

    let probe = fs::read_to_string(out_a.join("probe.csv")).unwrap();
    let lags: Vec<_> = probe.lines().skip(2).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(lags, ["1", "4", "16", "32", "inf"]);
}

#[test]
fn invalid_config_exits_2_and_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, smoke_config(&out).replace("grid_per_axis = 2", "grid_per_axis = 0")).unwrap();
    assert_eq!(run(&cfg, "gen-data"), 2);
    assert!(!out.exists());
    assert_eq!(main_with_args(["dadp", "gen-data"]), 2);
    assert_eq!(main_with_args(["dadp", "no-such-verb"]), 2);
}

#[test]
fn downstream_stage_without_upstream_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = dir.path().join("exp.toml");
    fs::write(&cfg, smoke_config(&out)).unwrap();
    assert_eq!(run(&cfg, "train-encoder"), 3);
    assert_eq!(run(&cfg, "gen-data"), 0);
    // a different seed changes the lineage of everything downstream
    let args = ["dadp", "--config", cfg.to_str().unwrap(), "--seed", "6", "train-encoder"];
    assert_eq!(main_with_args(args), 3);
    fs::write(out.join("dataset.bin"), b"tampered").unwrap();
    assert_eq!(run(&cfg, "train-encoder"), 3);
}

#[test]
fn report_on_empty_directory_fails() {
    let dir = tempfile::tempdir().unwrap();
    let code = main_with_args(["dadp", "report", dir.path().to_str().unwrap()]);
    assert_eq!(code, 3);
}

#[test]
fn shipped_configs_are_valid() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for name in ["push1d.toml", "smoke.toml"] {
        dadp_core::config::ExperimentConfig::load(&root.join(name)).unwrap();
    }
}
