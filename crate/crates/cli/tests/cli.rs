//! End-to-end runs of the `dualstream` binary and the experiment APIs at
//! toy sizes.

use std::path::{Path, PathBuf};
use std::process::Command;

use dualstream_cli::experiments::{attack, fairfight, lambda_sweep, mnist, scaling, stats};
use dualstream_cli::settings::Settings;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_dualstream"));
    c.current_dir(workspace_root());
    c
}

fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn run_ok(args: &[&str]) -> String {
    let out = bin().args(args).output().unwrap();
    assert!(
        out.status.success(),
        "{args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn read(p: &Path) -> Vec<u8> {
    std::fs::read(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

fn csv_rows(p: &Path) -> usize {
    csv::Reader::from_path(p).unwrap().records().count()
}

const TINY_MNIST: &[&str] = &["--limit", "600", "--set", "epochs=2", "--set", "capacities=8x4"];

#[test]
fn mnist_bench_row_count_and_determinism() {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        let mut args = vec!["mnist-bench", "--seeds", "5,6", "--set", "methods=POLY_DREG,RELU_SN", "--out"];
        args.push(d.path().to_str().unwrap());
        args.extend_from_slice(TINY_MNIST);
        run_ok(&args);
    }
    let (a, b) = (dirs[0].path(), dirs[1].path());
    assert_eq!(csv_rows(&a.join("results.csv")), 4);
    for f in ["results.csv", "results_jacobian.csv", "runs.csv", "curves.csv", "paired_tests.json"] {
        assert_eq!(read(&a.join(f)), read(&b.join(f)), "{f} differs between reruns");
    }
    let header = std::fs::read_to_string(a.join("results.csv")).unwrap();
    assert!(header.starts_with("method,h1,h2,seed,acc,ig_mean,ig_p95,ig_p99,ig_max,tail_ratio,status\n"));
    let manifest: serde_json::Value = serde_json::from_slice(&read(&a.join("manifest.json"))).unwrap();
    assert_eq!(manifest["experiment"], "mnist-bench");
    assert_eq!(manifest["precision"], 64);
    assert_eq!(manifest["seeds"], serde_json::json!([5, 6]));
    assert!(manifest["wall_clock_seconds"].as_f64().unwrap() >= 0.0);
    assert!(a.join("models/POLY_DREG_8x4_5.json").exists());
}

#[test]
fn lambda_sweep_is_sorted_and_byte_identical() {
    let mk = |d: &Path| {
        run_ok(&[
            "lambda-sweep",
            "--seeds",
            "2,1",
            "--set",
            "families=sparse,piecewise",
            "--set",
            "lambdas=0.01,0",
            "--set",
            "n=256",
            "--set",
            "epochs=3",
            "--out",
            d.to_str().unwrap(),
        ])
    };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    mk(a.path());
    mk(b.path());
    for f in ["lambda_sweep.csv", "plateau.csv"] {
        assert_eq!(read(&a.path().join(f)), read(&b.path().join(f)));
    }
    let mut r = csv::Reader::from_path(a.path().join("lambda_sweep.csv")).unwrap();
    let keys: Vec<(String, f64, u64)> = r
        .deserialize::<lambda_sweep::SweepRow>()
        .map(|row| {
            let row = row.unwrap();
            (row.family, row.lambda, row.seed)
        })
        .collect();
    assert_eq!(keys.len(), 8);
    let mut sorted = keys.clone();
    sorted.sort_by(|x, y| x.0.cmp(&y.0).then(x.1.total_cmp(&y.1)).then(x.2.cmp(&y.2)));
    assert_eq!(keys, sorted);
    assert_eq!(keys[0], ("piecewise".into(), 0.0, 1));
}

#[test]
fn lambda_grid_default() {
    let cfg = lambda_sweep::LambdaConfig::read(&Settings::default()).unwrap();
    assert_eq!(cfg.lambdas.len(), 7);
    for l in [0.0, 1e-4, 3e-4, 1e-3, 3e-3, 1e-2] {
        assert!(cfg.lambdas.contains(&l));
    }
    assert!(cfg.lambdas.iter().any(|l| (l - 10f64.powf(-2.5)).abs() < 1e-15));
}

#[test]
fn config_file_then_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# tiny run\nseeds = 9\nn = 200\nd_grid = 4\nh_grid = 2,3\nepochs = 2\n").unwrap();
    let out = dir.path().join("out");
    run_ok(&[
        "scaling-sweep",
        "--config",
        cfg.to_str().unwrap(),
        "--seeds",
        "3,4",
        "--out",
        out.to_str().unwrap(),
    ]);
    let mut r = csv::Reader::from_path(out.join("scaling.csv")).unwrap();
    let rows: Vec<scaling::ScalingRow> = r.deserialize().map(Result::unwrap).collect();
    // (D=4, H=2, H=3) × 2 models × 2 seeds from the flag, not the file.
    assert_eq!(rows.len(), 12);
    for axis_point in [("D", 4), ("H", 2), ("H", 3)] {
        for model in ["CR", "MLP"] {
            let n = rows
                .iter()
                .filter(|r| (r.axis.as_str(), r.value) == axis_point && r.model == model)
                .count();
            assert_eq!(n, 2);
        }
    }
    assert!(rows.iter().all(|r| r.seed == 3 || r.seed == 4));
}

#[test]
fn unknown_keys_and_bad_values_fail() {
    let out = bin().args(["ordinal", "--set", "epoch=3"]).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("epoch"));
    let out = bin().args(["fairfight", "--precision", "16"]).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("precision"));
    let out = bin().args(["attack"]).output().unwrap();
    assert!(String::from_utf8_lossy(&out.stderr).contains("model="));
}

#[test]
fn fairfight_unreachable_budget_lists_widths() {
    let mut s = Settings::default();
    s.set("cr_budget", "5").unwrap();
    let cfg = fairfight::FairfightConfig::read(&s).unwrap();
    let e = fairfight::run(&cfg, None).err().unwrap().to_string();
    assert!(e.contains("nearest widths"), "{e}");
}

#[test]
fn fairfight_reports_exact_params() {
    let mut s = Settings::default();
    for (k, v) in [("families", "smooth"), ("n", "200"), ("epochs", "1"), ("seeds", "1"), ("mlp_budgets", "3300")] {
        s.set(k, v).unwrap();
    }
    let o = fairfight::run(&fairfight::FairfightConfig::read(&s).unwrap(), None).unwrap();
    let params: Vec<(String, usize)> = o.summary.iter().map(|r| (r.model.clone(), r.params)).collect();
    assert_eq!(
        params,
        vec![
            ("CR_DREG(3.3k)".to_string(), 3301),
            ("CR_BASE(3.3k)".to_string(), 3301),
            ("MLP(3.3k)".to_string(), 3301)
        ]
    );
}

#[test]
fn train_attack_stats_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let model_dir = dir.path().join("model");
    let mut args = vec!["train", "--set", "hidden=8,4", "--out", model_dir.to_str().unwrap()];
    args.extend_from_slice(&TINY_MNIST[..4]);
    let summary = run_ok(&args);
    assert!(summary.contains("accuracy"), "{summary}");

    let att = dir.path().join("att");
    let model = format!("model={}", model_dir.join("model.json").display());
    run_ok(&[
        "attack", "--set", &model, "--limit", "600", "--set", "max_samples=50", "--out", att.to_str().unwrap(),
    ]);
    let mut r = csv::Reader::from_path(att.join("robustness.csv")).unwrap();
    let rows: Vec<dualstream::robust::RobustRow> = r.deserialize().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 4 + 10);
    for kind in ["gaussian_noise", "impulse_noise"] {
        for sev in 1..=5 {
            let n = rows.iter().filter(|r| r.probe == kind && r.param == sev as f64).count();
            assert_eq!(n, 1, "{kind} {sev}");
        }
    }
    let pgd: Vec<f64> = rows.iter().filter(|r| r.probe == "pgd").map(|r| r.accuracy).collect();
    // Clean accuracy on the same rows.
    let net = dualstream::polynet::PolyNetwork::<f64>::load(&model_dir.join("model.json")).unwrap();
    let mut cfg = attack::AttackSettings::new(model_dir.join("model.json"));
    cfg.source.limit = Some(600);
    cfg.source.images = workspace_root().join(&cfg.source.images);
    cfg.source.labels = workspace_root().join(&cfg.source.labels);
    let test = cfg.source.load().unwrap().test.select(&(0..50).collect::<Vec<_>>());
    let labels = mnist::class_labels(&test.targets).unwrap();
    let clean = dualstream::robust::accuracy(&net, &test.to_train_data::<f64>().x, &labels).unwrap();
    assert_eq!(pgd[0], clean);

    // Paired tests over a hand-written results file.
    let results = dir.path().join("results.csv");
    let mut text = String::from("method,h1,h2,seed,acc,ig_mean,ig_p95,ig_p99,ig_max,tail_ratio,status\n");
    for (seed, base, dreg) in [(1, 12.0, 9.0), (2, 14.0, 9.5), (3, 13.0, 10.0), (4, 15.0, 9.0), (5, 11.0, 9.1), (6, 16.0, 8.0)] {
        text += &format!("POLY_BASE,32,16,{seed},0.9,1,2,3,4,{base},completed\n");
        text += &format!("POLY_DREG,32,16,{seed},0.9,1,2,3,4,{dreg},completed\n");
    }
    std::fs::write(&results, text).unwrap();
    let cfg = stats::StatsConfig {
        input: results.clone(),
        treatment: Some("POLY_DREG".parse().unwrap()),
        control: Some("POLY_BASE".parse().unwrap()),
        metrics: vec!["tail_ratio".into()],
    };
    let cmp = stats::run(&cfg, Some(dir.path())).unwrap();
    assert_eq!(cmp.len(), 1);
    assert_eq!(cmp[0].n_pairs, 6);
    let wil = cmp[0].tests[1].as_ref().unwrap();
    assert_eq!(wil.p_value, 0.03125);
    let printed = run_ok(&["stats", "--set", &format!("input={}", results.display())]);
    assert!(printed.contains("POLY_DREG vs POLY_BASE on tail_ratio"), "{printed}");
}
