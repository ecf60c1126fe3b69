//! Command-line integration tests: argument/config validation, artifact
//! refusal semantics, reproducible generation, and a miniature end-to-end
//! pipeline through every verb.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_aerojepa")
}

fn run(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().expect("spawn CLI")
}

fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "command failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write(path: &Path, text: &str) {
    std::fs::write(path, text).unwrap();
}

/// Per-verb configuration files for a miniature pipeline (each command
/// rejects keys it does not own, so every stage gets its own file).
fn stage_cfg(root: &Path, verb: &str) -> PathBuf {
    let r = root.display();
    let dataset = format!("dataset.path = {r}/dataset\n");
    let checkpoint = format!("checkpoint.path = {r}/train/checkpoint.ajpa\n");
    let latents = format!("latents.path = {r}/latents/latents.ajpa\n");
    let probes = format!("probes.path = {r}/probes/probes.ajpa\n");
    let body = match verb {
        "train" => format!(
            "{dataset}\
             model.num_tokens = 4\n\
             model.token_dim = 8\n\
             model.encoder_depth = 1\n\
             model.predictor_depth = 1\n\
             model.decoder_depth = 1\n\
             model.neighborhood = 2\n\
             model.fourier_bands = 2\n\
             model.tokenizer_k = 4\n\
             model.tokenizer_hidden = 8\n\
             model.decoder_hidden = 8\n\
             model.cond_dim = 4\n\
             train.epochs = 2\n\
             train.batch_size = 2\n\
             train.n_context = 24\n\
             train.n_target = 12\n\
             train.n_query = 12\n\
             train.n_projections = 4\n\
             train.decoder_epochs = 0\n"
        ),
        "eval" => format!("{dataset}{checkpoint}eval.n_context = 24\n"),
        "latents" => format!(
            "{dataset}{checkpoint}latents.n_context = 24\nlatents.n_target = 12\n"
        ),
        "probe" => latents.clone(),
        "walk" => format!(
            "{dataset}{checkpoint}{latents}{probes}walk.n_context = 24\nwalk.steps = 3\n"
        ),
        "interp" => format!(
            "{dataset}{checkpoint}interp.n_context = 24\ninterp.steps = 3\ninterp.case_b = 4\n"
        ),
        "optimize" => format!(
            "{dataset}{checkpoint}{latents}{probes}optimize.n_context = 24\noptimize.restarts = 2\n"
        ),
        other => panic!("no config template for {other}"),
    };
    let path = root.join(format!("{verb}.cfg"));
    write(&path, &body);
    path
}

fn gen_cfg(root: &Path) -> PathBuf {
    let cfg = root.join("gen.cfg");
    write(&cfg, "gen.designs = 12\ngen.alphas = 3\ngen.resolution = 64\n");
    cfg
}

#[test]
fn gen_writes_a_manifest_and_refuses_to_overwrite() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("dataset");
    let cfg = gen_cfg(tmp.path());
    let cfg = cfg.to_str().unwrap();
    let first = run(&["gen", "--config", cfg, "--seed", "1", "--out", out.to_str().unwrap()]);
    assert_ok(&first);
    let manifest = std::fs::read_to_string(out.join("manifest.csv")).unwrap();
    assert_eq!(manifest.lines().count(), 1 + 36, "header plus 12 x 3 cases");
    // run log echoes command and seed
    let log = std::fs::read_to_string(out.join("run_log.txt")).unwrap();
    assert!(log.contains("command = gen") && log.contains("seed = 1"), "{log}");
    // refusal without --force, success with it
    let again = run(&["gen", "--config", cfg, "--seed", "1", "--out", out.to_str().unwrap()]);
    assert!(!again.status.success());
    assert!(stderr(&again).contains("--force"), "{}", stderr(&again));
    let forced = run(&[
        "gen", "--config", cfg, "--seed", "1", "--out", out.to_str().unwrap(), "--force",
    ]);
    assert_ok(&forced);
}

#[test]
fn regeneration_with_the_same_seed_is_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = gen_cfg(tmp.path());
    let cfg = cfg.to_str().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_ok(&run(&["gen", "--config", cfg, "--seed", "9", "--out", a.to_str().unwrap()]));
    assert_ok(&run(&["gen", "--config", cfg, "--seed", "9", "--out", b.to_str().unwrap()]));
    let mut names: Vec<_> = std::fs::read_dir(&a)
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    assert!(names.iter().any(|n| n.to_string_lossy().ends_with(".ajpa")));
    for name in names {
        let fa = std::fs::read(a.join(&name)).unwrap();
        let fb = std::fs::read(b.join(&name)).unwrap();
        assert_eq!(fa, fb, "{name:?} differs between identical runs");
    }
}

#[test]
fn unknown_config_keys_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.cfg");
    write(&cfg, "gen.designs = 5\ntrain.epochs = 3\n");
    // train.epochs is not a gen key
    let out = run(&[
        "gen",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        tmp.path().join("d").to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("unknown config key"), "{}", stderr(&out));
}

#[test]
fn missing_artifacts_name_the_producing_command() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("paths.cfg");
    write(
        &cfg,
        &format!(
            "dataset.path = {0}/nope\ncheckpoint.path = {0}/nope.ajpa\n",
            tmp.path().display()
        ),
    );
    let eval = run(&[
        "eval",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        tmp.path().join("eval").to_str().unwrap(),
    ]);
    assert!(!eval.status.success());
    assert!(stderr(&eval).contains("gen"), "{}", stderr(&eval));
}

#[test]
fn end_to_end_pipeline_produces_every_artifact() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let gen = gen_cfg(root);
    assert_ok(&run(&[
        "gen",
        "--config",
        gen.to_str().unwrap(),
        "--seed",
        "3",
        "--out",
        root.join("dataset").to_str().unwrap(),
    ]));
    let stage = |verb: &str, out: &str| {
        let cfg = stage_cfg(root, verb);
        let r = run(&[
            "--seed",
            "3",
            verb,
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            root.join(out).to_str().unwrap(),
        ]);
        assert_ok(&r);
        assert!(
            root.join(out).join("run_log.txt").exists(),
            "{verb} wrote no run log"
        );
        r
    };
    stage("train", "train");
    assert!(root.join("train/checkpoint.ajpa").exists());
    assert!(root.join("train/history.csv").exists());
    assert!(root.join("train/loss.svg").exists());

    let eval = stage("eval", "eval");
    let text = String::from_utf8_lossy(&eval.stdout).into_owned();
    assert!(text.contains("rel_l2"), "{text}");
    assert!(root.join("eval/metrics.csv").exists());

    stage("latents", "latents");
    assert!(root.join("latents/latents.ajpa").exists());

    let probe = stage("probe", "probes");
    let text = String::from_utf8_lossy(&probe.stdout).into_owned();
    assert!(text.contains("cv_r2") && text.contains("lambda"), "{text}");
    assert!(root.join("probes/probe_report.csv").exists());

    stage("walk", "walk");
    assert!(root.join("walk/walk.csv").exists());
    assert!(root.join("walk/walk.svg").exists());

    stage("interp", "interp");
    assert!(root.join("interp/interp.csv").exists());

    let opt = stage("optimize", "optimize");
    let text = String::from_utf8_lossy(&opt.stdout).into_owned();
    assert!(text.contains("recipe"), "{text}");
    assert!(root.join("optimize/restarts.csv").exists());
    assert!(root.join("optimize/envelope.svg").exists());
    assert!(root.join("optimize/optimum.csv").exists());
}

#[test]
fn training_twice_with_one_seed_gives_identical_checkpoints() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let gen = gen_cfg(root);
    assert_ok(&run(&[
        "gen",
        "--config",
        gen.to_str().unwrap(),
        "--seed",
        "5",
        "--out",
        root.join("dataset").to_str().unwrap(),
    ]));
    let cfg = stage_cfg(root, "train");
    for out in ["t1", "t2"] {
        assert_ok(&run(&[
            "train",
            "--config",
            cfg.to_str().unwrap(),
            "--seed",
            "5",
            "--out",
            root.join(out).to_str().unwrap(),
        ]));
    }
    let a = std::fs::read(root.join("t1/checkpoint.ajpa")).unwrap();
    let b = std::fs::read(root.join("t2/checkpoint.ajpa")).unwrap();
    assert_eq!(a, b, "checkpoints from identical (config, seed) differ");
}
