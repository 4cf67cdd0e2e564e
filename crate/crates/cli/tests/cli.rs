mod common;

use std::process::Command;

use common::{dgh, run_pipeline, tiny_config, tree, write_config};
use dgh_core::io::{write_groom, write_png16};
use dgh_core::{Groom, Image, Point3};
use serde_json::Value;

fn binary(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_dgh"))
        .args(args)
        .output()
        .unwrap();
    (
        out.status.code().unwrap(),
        String::from_utf8(out.stdout).unwrap(),
    )
}

#[test]
fn bad_arguments_exit_2() {
    assert_eq!(binary(&["no-such-command"]).0, 2);
    assert_eq!(binary(&["simulate", "--seed", "minus-one"]).0, 2);
    assert_eq!(binary(&["simulate", "--set", "no_equals_sign"]).0, 2);
    assert_eq!(binary(&["eval", "--pred", "a.png"]).0, 2);
    let out = Command::new(env!("CARGO_BIN_EXE_dgh"))
        .arg("selftest")
        .env("DGH_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_file_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let (code, stdout) = binary(&[
        "eval",
        "--pred",
        "/no/such.dghs",
        "--gt",
        "/no/such.dghs",
        "--out",
        out,
    ]);
    assert_eq!(code, 1);
    let v: Value = serde_json::from_str(stdout.trim()).unwrap();
    assert_eq!(v["error"]["kind"], "io");
    // Stages that need earlier outputs fail the same way.
    let (code, v) = dgh(&["train-coarse", "--out", out]);
    assert_eq!(code, 1);
    assert_eq!(v["error"]["kind"], "io");
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let (code, v) = dgh(&[
        "selftest",
        "--set",
        "dynamics.coarse_train.stepz=3",
        "--out",
        out,
    ]);
    assert_eq!(code, 1);
    assert_eq!(v["error"]["kind"], "config");
    let cfg = write_config(
        dir.path(),
        &serde_json::json!({ "gsplat": { "colour": 1 } }),
    );
    let (code, v) = dgh(&["selftest", "--config", cfg.to_str().unwrap(), "--out", out]);
    assert_eq!((code, v["error"]["kind"].as_str()), (1, Some("config")));
}

#[test]
fn overrides_apply_in_order_after_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &serde_json::json!({ "dynamics": { "coarse_train": { "steps": 9 } } }),
    );
    let parse = |set: &[&str]| {
        let sets: Vec<_> = set
            .iter()
            .map(|s| dgh_cli::config::parse_override(s).unwrap())
            .collect();
        dgh_cli::resolve(Some(&cfg), &sets, Some(4)).unwrap()
    };
    let c = parse(&[]);
    assert_eq!((c.dynamics.coarse_train.steps, c.seed), (9, 4));
    assert_eq!(
        c.dynamics.fine_train,
        dgh_cli::PipelineConfig::default().dynamics.fine_train
    );
    let c = parse(&[
        "dynamics.coarse_train.steps=3",
        "dynamics.coarse_train.steps=5",
        "gsplat.appearance.blend=off",
    ]);
    assert_eq!(c.dynamics.coarse_train.steps, 5);
    assert_eq!(c.gsplat.appearance.blend, dgh_splat::BlendStage::Off);
}

#[test]
fn default_config_round_trips() {
    let c = dgh_cli::PipelineConfig::default();
    let s = serde_json::to_string(&c).unwrap();
    assert_eq!(
        serde_json::from_str::<dgh_cli::PipelineConfig>(&s).unwrap(),
        c
    );
}

#[test]
fn eval_on_identical_inputs_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let g = Groom::from_points(
        3,
        (0..6)
            .map(|i| Point3::new(0.01 * i as f64, 0.0, -0.02 * i as f64))
            .collect(),
    )
    .unwrap();
    let gp = dir.path().join("a.dghs");
    write_groom(&gp, &g).unwrap();
    let (code, v) = dgh(&[
        "eval",
        "--pred",
        gp.to_str().unwrap(),
        "--gt",
        gp.to_str().unwrap(),
        "--out",
        out,
    ]);
    assert_eq!(code, 0, "{v}");
    assert_eq!(v["mean"]["chamfer"], 0.0);
    let ip = dir.path().join("a.png");
    write_png16(&Image::filled(8, 8, [0.2, 0.4, 0.6]), &ip).unwrap();
    let (code, v) = dgh(&[
        "eval",
        "--pred",
        ip.to_str().unwrap(),
        "--gt",
        ip.to_str().unwrap(),
        "--out",
        out,
    ]);
    assert_eq!(code, 0, "{v}");
    assert_eq!(v["mean"]["psnr"], 99.0);
    assert_eq!(v["mean"]["ssim"], 1.0);
}

#[test]
fn selftest_passes() {
    let dir = tempfile::tempdir().unwrap();
    let (code, stdout) = binary(&["selftest", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code, 0, "{stdout}");
    assert_eq!(stdout.lines().count(), 1);
    let v: Value = serde_json::from_str(stdout.trim()).unwrap();
    assert_eq!(v["ok"], true);
}

#[test]
fn tiny_pipeline_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &tiny_config());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run_pipeline(&cfg, &a, 5);
    run_pipeline(&cfg, &b, 5);
    let (ta, tb) = (tree(&a), tree(&b));
    let names: Vec<&str> = ta.iter().map(|(n, _)| n.as_str()).collect();
    for want in [
        "canonical.dghs",
        "coarse.dghp",
        "fine.dghp",
        "appearance.dghp",
        "metrics.json",
        "infer/seq_00/manifest.json",
    ] {
        assert!(names.contains(&want), "{want} missing from {names:?}");
    }
    assert!(names.iter().any(|n| n.starts_with("render/seq_00/pred/")));
    assert_eq!(ta.len(), tb.len());
    for ((na, ba), (nb, bb)) in ta.iter().zip(&tb) {
        assert_eq!(na, nb);
        assert!(ba == bb, "{na} differs");
    }
    // A different seed changes the trained models.
    let c = dir.path().join("c");
    run_pipeline(&cfg, &c, 6);
    assert_ne!(
        std::fs::read(a.join("coarse.dghp")).unwrap(),
        std::fs::read(c.join("coarse.dghp")).unwrap()
    );
}

#[test]
fn voxelize_writes_hair_and_body_volumes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &tiny_config());
    let out = dir.path().join("w");
    let (c, o) = (cfg.to_str().unwrap(), out.to_str().unwrap());
    assert_eq!(dgh(&["simulate", "--config", c, "--out", o]).0, 0);
    let (code, v) = dgh(&["voxelize", "--config", c, "--out", o, "--body"]);
    assert_eq!(code, 0, "{v}");
    let hair = dgh_core::io::read_volume(&out.join("canonical.dghv")).unwrap();
    let body = dgh_core::io::read_volume(&out.join("body.dghv")).unwrap();
    assert_eq!(hair.spec().resolution, [16; 3]);
    assert!(hair.data().iter().all(|&d| d >= 0.0));
    assert!(body.data().iter().any(|&d| d < 0.0));
}
