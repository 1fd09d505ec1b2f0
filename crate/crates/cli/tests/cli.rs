use std::path::Path;
use std::process::{Command, Output};

fn classdisc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_classdisc"))
        .args(args)
        .env_remove("CLASSDISC_WORKERS")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn synthetic(n_classes: usize, held_out: &[usize]) -> serde_json::Value {
    serde_json::json!({
        "data": {"source": "synthetic", "n_classes": n_classes, "dim": 6, "separation": 8.0, "per_class_n": 40, "seed": 1},
        "split": {"held_out_classes": held_out},
        "net": {"hidden_dims": [16]},
        "kmeans": {"k": 3, "restarts": 2},
        "epochs_initial": 3,
    })
}

fn write_config(dir: &Path, name: &str, cfg: &serde_json::Value) -> String {
    let path = dir.join(name);
    std::fs::write(&path, cfg.to_string()).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn discover_writes_outputs_and_reruns_identically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "exp.json", &synthetic(5, &[3, 4]));
    let run1 = dir.path().join("d1");
    let out = classdisc(&["discover", "--config", &cfg, "--mode", "dynamic", "--out", run1.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    for f in ["report.json", "curves.csv", "clusters.csv"] {
        assert!(run1.join(f).is_file(), "{f} missing");
    }
    let curves = std::fs::read_to_string(run1.join("curves.csv")).unwrap();
    assert!(curves.starts_with("round,dra,mean_cluster_accuracy,ood_pool_size,train_loss\n"), "{curves}");
    assert_eq!(curves.lines().count(), 1 + 3);

    let report = run1.join("report.json");
    let out = classdisc(&["validate", "--config", report.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));

    let run2 = dir.path().join("d2");
    let out = classdisc(&["discover", "--config", report.to_str().unwrap(), "--out", run2.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(std::fs::read(run2.join("curves.csv")).unwrap(), curves.as_bytes());
}

#[test]
fn static_mode_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "exp.json", &synthetic(4, &[3]));
    let run = dir.path().join("s");
    let out = classdisc(&["discover", "--config", &cfg, "--mode", "static", "--out", run.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(run.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["mode"], "static");
    assert!(report["final_dra"].as_f64().unwrap() > 0.9);
}

#[test]
fn missing_dataset_is_input_error_naming_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = serde_json::json!({
        "data": {"source": "idx", "images": "/nonexistent/images", "labels": "/nonexistent/labels"},
        "split": {"held_out_classes": [1]},
    });
    let cfg = write_config(dir.path(), "exp.json", &cfg);
    let out = classdisc(&["discover", "--config", &cfg, "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("data.images"), "{}", stderr(&out));
}

fn csv_config(dir: &Path, first: &str) -> String {
    let mut rows = String::from("a,b,label\n");
    for i in 0..30 {
        let a = if i == 0 { first.to_owned() } else { format!("{}e307", 1 + i % 9) };
        rows.push_str(&format!("{a},-{}e307,{}\n", 1 + i % 7, i % 3));
    }
    let csv = dir.join("d.csv");
    std::fs::write(&csv, rows).unwrap();
    let cfg = serde_json::json!({
        "data": {"source": "csv", "path": csv},
        "split": {"held_out_classes": [2]},
        "kmeans": {"k": 2},
    });
    write_config(dir, "exp.json", &cfg)
}

#[test]
fn numerical_failure_is_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("o");
    // finite inputs whose products overflow inside the network
    let cfg = csv_config(dir.path(), "9e307");
    let out = classdisc(&["discover", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));

    let cfg = csv_config(dir.path(), "NaN");
    let out = classdisc(&["discover", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(code(&out), 1, "{}", stderr(&out));
    assert!(stderr(&out).contains("line 2"), "{}", stderr(&out));
}

#[test]
fn validate_cases() {
    let dir = tempfile::tempdir().unwrap();
    let good = write_config(dir.path(), "good.json", &synthetic(4, &[3]));
    assert_eq!(code(&classdisc(&["validate", "--config", &good])), 0);

    let mut big_k = synthetic(4, &[3]);
    big_k["kmeans"]["k"] = 41.into();
    let out = classdisc(&["validate", "--config", &write_config(dir.path(), "k.json", &big_k)]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("kmeans.k"), "{}", stderr(&out));

    let mut q = synthetic(4, &[3]);
    q["ood_mode"] = serde_json::json!({"mode": "detector", "quantile": 1.5});
    assert_eq!(code(&classdisc(&["validate", "--config", &write_config(dir.path(), "q.json", &q)])), 1);

    let mut typo = synthetic(4, &[3]);
    typo["kmeans"]["restart"] = 3.into();
    let out = classdisc(&["validate", "--config", &write_config(dir.path(), "t.json", &typo)]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("restart"), "{}", stderr(&out));

    assert_eq!(code(&classdisc(&["validate", "--config", "/nonexistent.json"])), 1);
    assert_eq!(code(&classdisc(&["validate"])), 1);
}

#[test]
fn classcount_defaults_and_duplicates() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "exp.json", &synthetic(8, &[6, 7]));
    let out_dir = dir.path().join("cc");
    let out = classdisc(&["classcount", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let table = std::fs::read_to_string(out_dir.join("classcount.csv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0], "class_count,cluster_accuracy,dra");
    let counts: Vec<&str> = lines[1..].iter().map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(counts, ["2", "3", "4", "5"]);

    let out = classdisc(&[
        "classcount",
        "--config",
        &cfg,
        "--counts",
        "3,2,3",
        "--eval-held-out",
        "6,7",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stderr(&out).contains("warning"), "{}", stderr(&out));
    let table = std::fs::read_to_string(out_dir.join("classcount.csv")).unwrap();
    assert_eq!(table.lines().count(), 3);

    let out = classdisc(&["classcount", "--config", &cfg, "--counts", "9", "--out", out_dir.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
}

#[test]
fn bad_worker_count_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "exp.json", &synthetic(4, &[3]));
    let out = Command::new(env!("CARGO_BIN_EXE_classdisc"))
        .args(["validate", "--config", &cfg])
        .env("CLASSDISC_WORKERS", "zero")
        .output()
        .unwrap();
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("CLASSDISC_WORKERS"));
    let out = Command::new(env!("CARGO_BIN_EXE_classdisc"))
        .args(["validate", "--config", &cfg])
        .env("CLASSDISC_WORKERS", "2")
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
}

#[test]
fn shipped_configs_validate() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../..");
    let mnist_present = root.join("data/mnist/train-images-idx3-ubyte").is_file();
    for entry in std::fs::read_dir(root.join("configs")).unwrap() {
        let path = entry.unwrap().path();
        let name = path.file_name().unwrap().to_str().unwrap().to_owned();
        if name.starts_with("mnist") && !mnist_present {
            continue;
        }
        let out = Command::new(env!("CARGO_BIN_EXE_classdisc"))
            .args(["validate", "--config", path.to_str().unwrap()])
            .current_dir(&root)
            .output()
            .unwrap();
        assert_eq!(code(&out), 0, "{name}: {}", stderr(&out));
    }
}
