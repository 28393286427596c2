//! End-to-end tests of the `mmv` binary: exit codes, formats, determinism.

use std::path::Path;
use std::process::{Command, Output};

fn mmv(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mmv"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, content: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, content).unwrap();
    path.to_string_lossy().into_owned()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

#[test]
fn pdf_scalar_values() {
    let dir = tempfile::tempdir().unwrap();
    let spd = write(
        dir.path(),
        "f.json",
        r#"{"m":1,"kind":"spd","items":[{"rows":1,"data":[[1.0]]}]}"#,
    );
    // scalar beta II at F = 1 with a0 = a = 1 is 1/4
    let out = mmv(&[
        "pdf", &spd, "--family", "beta2", "--shape", "1,2,2", "--params", "a0=1,a=1",
    ]);
    assert_eq!(code(&out), 0, "{out:?}");
    let lp: f64 = stdout(&out).trim().parse().unwrap();
    assert!((lp - 0.25f64.ln()).abs() < 1e-12);

    // t at 0 with unit shapes is the standard Cauchy at 0
    let block = write(
        dir.path(),
        "t.json",
        r#"{"m":1,"kind":"block","items":[{"rows":1,"data":[[0.0]]}]}"#,
    );
    let out = mmv(&["pdf", &block, "--family", "t", "--shape", "1,1,1"]);
    assert_eq!(code(&out), 0, "{out:?}");
    let lp: f64 = stdout(&out).trim().parse().unwrap();
    assert!((lp + std::f64::consts::PI.ln()).abs() < 1e-12);
}

#[test]
fn pdf_batch_has_one_line_per_item() {
    let dir = tempfile::tempdir().unwrap();
    let items: Vec<String> = (1..=100)
        .map(|i| format!(r#"{{"rows":1,"data":[[{}.0]]}}"#, i))
        .collect();
    let spd = write(
        dir.path(),
        "batch.json",
        &format!(r#"{{"m":1,"kind":"spd","items":[{}]}}"#, items.join(",")),
    );
    let out = mmv(&["pdf", &spd, "--family", "beta2", "--shape", "1,2,2"]);
    assert_eq!(code(&out), 0);
    assert_eq!(stdout(&out).lines().count(), 100);
}

#[test]
fn pdf_domain_violation_prints_neg_inf_with_warning() {
    let dir = tempfile::tempdir().unwrap();
    let spd = write(
        dir.path(),
        "u.json",
        r#"{"m":1,"kind":"spd","items":[{"rows":1,"data":[[1.5]]}]}"#,
    );
    let out = mmv(&["pdf", &spd, "--family", "beta1", "--shape", "1,2,2"]);
    assert_eq!(code(&out), 0);
    assert_eq!(stdout(&out).trim(), "-inf");
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning"));
}

#[test]
fn pdf_seventeen_significant_digits_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let spd = write(
        dir.path(),
        "f.json",
        r#"{"m":1,"kind":"spd","items":[{"rows":1,"data":[[0.731]]}]}"#,
    );
    let out = mmv(&["pdf", &spd, "--family", "beta2", "--shape", "1,3,4"]);
    let text = stdout(&out);
    let printed = text.trim();
    let parsed: f64 = printed.parse().unwrap();
    // value reproduces through text exactly
    assert_eq!(format!("{parsed:.16e}"), printed);
}

#[test]
fn malformed_json_exits_2_with_location() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(
        dir.path(),
        "bad.json",
        "{\"m\": 1, \"kind\": \"spd\",\n  broken",
    );
    let out = mmv(&["fit", &bad, "--model", "dependent"]);
    assert_eq!(code(&out), 2);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line") && err.contains("column"), "{err}");
}

#[test]
fn usage_errors_exit_1() {
    let out = mmv(&[
        "pdf",
        "nofile.json",
        "--family",
        "not-a-family",
        "--shape",
        "1,1",
    ]);
    assert_eq!(code(&out), 1);

    let out = mmv(&[
        "sample", "--family", "beta2", "--shape", "1,4,4", "--kernel", "bessel", "--n", "1",
    ]);
    assert_eq!(code(&out), 1);

    let out = mmv(&["verify"]);
    assert_eq!(code(&out), 1);
}

#[test]
fn missing_file_exits_2() {
    let out = mmv(&["fit", "/definitely/not/here.json", "--model", "dependent"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn sample_is_deterministic_and_seed_sensitive() {
    let a = mmv(&[
        "sample",
        "--family",
        "wishart-t",
        "--shape",
        "2,4,3",
        "--n",
        "5",
        "--seed",
        "11",
    ]);
    let b = mmv(&[
        "sample",
        "--family",
        "wishart-t",
        "--shape",
        "2,4,3",
        "--n",
        "5",
        "--seed",
        "11",
    ]);
    let c = mmv(&[
        "sample",
        "--family",
        "wishart-t",
        "--shape",
        "2,4,3",
        "--n",
        "5",
        "--seed",
        "12",
    ]);
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);
    assert_ne!(a.stdout, c.stdout);
    assert_eq!(stdout(&a).lines().count(), 5);
}

#[test]
fn sample_pdf_pipeline_evaluates_tuples() {
    let dir = tempfile::tempdir().unwrap();
    let draws = dir.path().join("draws.jsonl");
    let out = mmv(&[
        "sample",
        "--family",
        "tri-wtp2",
        "--shape",
        "1,2,1,1",
        "--n",
        "7",
        "--seed",
        "3",
        "--out",
        draws.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{out:?}");
    let out = mmv(&[
        "pdf",
        draws.to_str().unwrap(),
        "--family",
        "tri-wtp2",
        "--shape",
        "1,2,1,1",
        "--kernel",
        "gaussian",
    ]);
    assert_eq!(code(&out), 0, "{out:?}");
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 7);
    assert!(lines.iter().all(|l| l.parse::<f64>().unwrap().is_finite()));
}

#[test]
fn fit_k1_models_agree() {
    let dir = tempfile::tempdir().unwrap();
    let spd = write(
        dir.path(),
        "one.json",
        r#"{"m":1,"kind":"spd","items":[{"rows":1,"data":[[1.0]]}]}"#,
    );
    let dep_out = dir.path().join("dep.json");
    let ind_out = dir.path().join("ind.json");
    let d = mmv(&[
        "fit",
        &spd,
        "--model",
        "dependent",
        "--seed-a0",
        "1.5",
        "--seed-a",
        "1.5",
        "--out",
        dep_out.to_str().unwrap(),
    ]);
    let i = mmv(&[
        "fit",
        &spd,
        "--model",
        "independent",
        "--seed-a0",
        "1.5",
        "--seed-a",
        "1.5",
        "--out",
        ind_out.to_str().unwrap(),
    ]);
    assert_eq!(code(&d), 0, "{d:?}");
    assert_eq!(code(&i), 0, "{i:?}");
    let dep: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&dep_out).unwrap()).unwrap();
    let ind: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&ind_out).unwrap()).unwrap();
    let da0 = dep["a0"].as_f64().unwrap();
    let ia0 = ind["a0"].as_f64().unwrap();
    let da = dep["a"].as_f64().unwrap();
    let ia = ind["a"].as_f64().unwrap();
    assert!((da0 - ia0).abs() < 1e-6 && (da - ia).abs() < 1e-6);
    assert!(dep["converged"].as_bool().unwrap());
}

#[test]
fn fit_recovers_synthetic_scalars_through_the_pipeline() {
    // mmv sample produces k=1 beta II marginals = independent scalar beta II
    // observations; the independent fit must recover the generating shapes.
    let dir = tempfile::tempdir().unwrap();
    let draws_path = dir.path().join("draws.jsonl");
    let out = mmv(&[
        "sample",
        "--family",
        "beta2",
        "--shape",
        "1,6,4",
        "--n",
        "500",
        "--seed",
        "99",
        "--out",
        draws_path.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    // convert the draw stream into an SPD collection
    let text = std::fs::read_to_string(&draws_path).unwrap();
    let items: Vec<String> = text
        .lines()
        .map(|line| {
            let v: serde_json::Value = serde_json::from_str(line).unwrap();
            let x = v["items"][0][0][0].as_f64().unwrap();
            format!(r#"{{"rows":1,"data":[[{x}]]}}"#)
        })
        .collect();
    let coll = write(
        dir.path(),
        "obs.json",
        &format!(r#"{{"m":1,"kind":"spd","items":[{}]}}"#, items.join(",")),
    );
    let fit_out = dir.path().join("fit.json");
    let out = mmv(&[
        "fit",
        &coll,
        "--model",
        "independent",
        "--out",
        fit_out.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{out:?}");
    let fit: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&fit_out).unwrap()).unwrap();
    let a0 = fit["a0"].as_f64().unwrap();
    let a = fit["a"].as_f64().unwrap();
    // generating shapes: a0 = 3, a = 2
    assert!((a0 - 3.0).abs() / 3.0 < 0.15, "a0 {a0}");
    assert!((a - 2.0).abs() / 2.0 < 0.15, "a {a}");
}

#[test]
fn gram_reduces_blocks_with_and_without_anchor() {
    let dir = tempfile::tempdir().unwrap();
    // 30 blocks of 22x3, deterministic entries
    let mut items = Vec::new();
    for b in 0..30 {
        let rows: Vec<String> = (0..22)
            .map(|i| {
                let vals: Vec<String> = (0..3)
                    .map(|j| {
                        let v = ((b * 577 + i * 31 + j * 7) % 97) as f64 / 97.0 - 0.5;
                        format!("{v}")
                    })
                    .collect();
                format!("[{}]", vals.join(","))
            })
            .collect();
        items.push(format!(r#"{{"rows":22,"data":[{}]}}"#, rows.join(",")));
    }
    let blocks = write(
        dir.path(),
        "blocks.json",
        &format!(r#"{{"m":3,"kind":"block","items":[{}]}}"#, items.join(",")),
    );

    let plain = mmv(&["gram", &blocks]);
    assert_eq!(code(&plain), 0);
    let coll: serde_json::Value = serde_json::from_str(&stdout(&plain)).unwrap();
    assert_eq!(coll["items"].as_array().unwrap().len(), 30);
    assert_eq!(coll["kind"], "spd");

    let anchored = mmv(&["gram", &blocks, "--anchor-index", "0"]);
    assert_eq!(code(&anchored), 0);
    let coll: serde_json::Value = serde_json::from_str(&stdout(&anchored)).unwrap();
    assert_eq!(coll["items"].as_array().unwrap().len(), 29);

    // rank-deficient anchor: zero block
    let zero_rows: Vec<String> = (0..22).map(|_| "[0.0,0.0,0.0]".into()).collect();
    let mut bad_items = vec![format!(r#"{{"rows":22,"data":[{}]}}"#, zero_rows.join(","))];
    bad_items.extend(items.iter().take(3).cloned());
    let bad = write(
        dir.path(),
        "bad.json",
        &format!(
            r#"{{"m":3,"kind":"block","items":[{}]}}"#,
            bad_items.join(",")
        ),
    );
    let out = mmv(&["gram", &bad, "--anchor-index", "0"]);
    assert_eq!(code(&out), 3);
}

#[test]
fn gram_scalar_matches_decompose_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let blocks = write(
        dir.path(),
        "b.json",
        r#"{"m":1,"kind":"block","items":[{"rows":2,"data":[[1.0],[1.0]]},{"rows":1,"data":[[1.0]]}]}"#,
    );
    let out = mmv(&["gram", &blocks, "--anchor-index", "0"]);
    assert_eq!(code(&out), 0);
    let coll: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    let f = coll["items"][0]["data"][0][0].as_f64().unwrap();
    // anchor Gram is 2; companion Gram is 1; F = 1/2
    assert!((f - 0.5).abs() < 1e-12);
}

#[test]
fn transform_round_trip_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let blocks = write(
        dir.path(),
        "t.json",
        r#"{"m":2,"kind":"block","items":[{"rows":3,"data":[[0.4,-0.2],[1.1,0.3],[-0.5,0.8]]}]}"#,
    );
    let fwd_path = dir.path().join("r.json");
    let fwd = mmv(&[
        "transform",
        &blocks,
        "--name",
        "t-to-r",
        "--out",
        fwd_path.to_str().unwrap(),
    ]);
    assert_eq!(code(&fwd), 0);
    let back = mmv(&["transform", fwd_path.to_str().unwrap(), "--name", "r-to-t"]);
    assert_eq!(code(&back), 0);
    let coll: serde_json::Value = serde_json::from_str(&stdout(&back)).unwrap();
    let orig: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&blocks).unwrap()).unwrap();
    for i in 0..3 {
        for j in 0..2 {
            let a = coll["items"][0]["data"][i][j].as_f64().unwrap();
            let b = orig["items"][0]["data"][i][j].as_f64().unwrap();
            assert!((a - b).abs() < 1e-10);
        }
    }
    // forward and backward log-Jacobians cancel
    let fwd_json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&fwd_path).unwrap()).unwrap();
    let lj_fwd = fwd_json["log_jac"][0].as_f64().unwrap();
    let lj_back = coll["log_jac"][0].as_f64().unwrap();
    assert!((lj_fwd + lj_back).abs() < 1e-9);
}

#[test]
fn transform_rejects_out_of_domain_input() {
    let dir = tempfile::tempdir().unwrap();
    let blocks = write(
        dir.path(),
        "r.json",
        r#"{"m":1,"kind":"block","items":[{"rows":1,"data":[[1.5]]}]}"#,
    );
    let out = mmv(&["transform", &blocks, "--name", "r-to-t"]);
    assert_eq!(code(&out), 3);
}

#[test]
fn verify_single_check_and_unknown_name() {
    let out = mmv(&["verify", "--check", "bimatrix-identity"]);
    assert_eq!(code(&out), 0, "{out:?}");
    let rep: serde_json::Value = serde_json::from_str(stdout(&out).trim()).unwrap();
    assert_eq!(rep["name"], "bimatrix-identity");
    assert_eq!(rep["passed"], true);

    let out = mmv(&["verify", "--check", "no-such-check"]);
    assert_eq!(code(&out), 1);
}

#[test]
fn verify_list_names_registry() {
    let out = mmv(&["verify", "--list"]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    for expected in [
        "norm-quad-beta2-k1",
        "jac-fd-invert-spd",
        "pushforward-t-pearson2",
        "sampler-density-t",
        "kernel-invariance-beta2",
    ] {
        assert!(text.lines().any(|l| l == expected), "missing {expected}");
    }
}

#[test]
fn mmv_threads_env_does_not_change_output() {
    let base = mmv(&[
        "sample", "--family", "beta1", "--shape", "1,3,2", "--n", "64", "--seed", "5",
    ]);
    let single = Command::new(env!("CARGO_BIN_EXE_mmv"))
        .args([
            "sample", "--family", "beta1", "--shape", "1,3,2", "--n", "64", "--seed", "5",
        ])
        .env("MMV_THREADS", "1")
        .output()
        .unwrap();
    assert_eq!(base.stdout, single.stdout);
}

#[test]
fn pdf_rejects_kernel_for_kernel_free_families() {
    let dir = tempfile::tempdir().unwrap();
    let spd = write(
        dir.path(),
        "f.json",
        r#"{"m":1,"kind":"spd","items":[{"rows":1,"data":[[1.0]]}]}"#,
    );
    let out = mmv(&["pdf", &spd, "--family", "beta2", "--shape", "1,2,2", "--kernel", "gaussian"]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("kernel-free"));
}
