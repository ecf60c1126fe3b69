//! Command-line pipeline: dataset generation, training, evaluation, linear
//! probing, latent walks and interpolation, and constrained latent design
//! optimization.

mod config;
mod probeser;

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use aerojepa::geometry::fps;
use aerojepa::latent_lab::{
    concept_walk, decode_walk, interpolate_token_sets, lift_pooled, ConceptVector,
};
use aerojepa::losses::{LossWeights, SigregMode, Workflow};
use aerojepa::model::{AeroJepaModel, ModelConfig};
use aerojepa::optimize::{mean_context_tokens, solve, LatentOptProblem};
use aerojepa::probes::fit_suites;
use aerojepa::synthgen::{make_dataset, Dataset, Split};
use aerojepa::training::{
    evaluate, extract_latents, train, LatentKind, LatentTable, TrainConfig, METRIC_NAMES,
};
use aerojepa::io;

use config::Config;

#[derive(Parser)]
#[command(name = "aerojepa", about = "Predictive-latent aerodynamic surrogate pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Flat dotted-key config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Global random seed (overrides the config's `seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overwrite an existing output directory.
    #[arg(long, global = true)]
    force: bool,
    /// Scale preset for model and training defaults.
    #[arg(long, global = true, value_enum)]
    preset: Option<Preset>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Preset {
    Desk,
    Paper,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic potential-flow dataset.
    Gen,
    /// Train the surrogate on a generated dataset.
    Train,
    /// Evaluate a checkpoint on a dataset split.
    Eval,
    /// Extract pooled latents for every case.
    Latents,
    /// Fit ridge probe suites from a latent table.
    Probe,
    /// Walk the train-mean latent along concept directions and decode.
    Walk,
    /// Interpolate between two cases in latent space and decode.
    Interp,
    /// Constrained latent-space design optimization.
    Optimize,
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

const COMMON_KEYS: [&str; 2] = ["seed", "dataset.path"];
const MODEL_KEYS: [&str; 13] = [
    "model.num_tokens",
    "model.token_dim",
    "model.encoder_depth",
    "model.predictor_depth",
    "model.decoder_depth",
    "model.num_heads",
    "model.neighborhood",
    "model.fourier_bands",
    "model.tokenizer_k",
    "model.tokenizer_hidden",
    "model.decoder_hidden",
    "model.cond_dim",
    "model.use_sdf",
];
const TRAIN_KEYS: [&str; 16] = [
    "train.epochs",
    "train.batch_size",
    "train.n_context",
    "train.n_target",
    "train.n_query",
    "train.workflow",
    "train.decoder_epochs",
    "train.lambda_lat",
    "train.lambda_rec",
    "train.lambda_sig",
    "train.sigreg_mode",
    "train.n_projections",
    "train.base_lr",
    "train.warmup_frac",
    "train.weight_decay",
    "train.clip_threshold",
];

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => Config::from_file(p)?,
        None => Config::empty(),
    };
    if let Some(s) = cli.seed {
        cfg.set("seed", s.to_string());
    }
    let seed = cfg.get_u64("seed", 0)?;
    let preset = cli.preset.unwrap_or(Preset::Desk);
    match cli.command {
        Command::Gen => cmd_gen(&cfg, seed, &cli, preset),
        Command::Train => cmd_train(&cfg, seed, &cli, preset),
        Command::Eval => cmd_eval(&cfg, seed, &cli, preset),
        Command::Latents => cmd_latents(&cfg, seed, &cli, preset),
        Command::Probe => cmd_probe(&cfg, seed, &cli, preset),
        Command::Walk => cmd_walk(&cfg, seed, &cli, preset),
        Command::Interp => cmd_interp(&cfg, seed, &cli, preset),
        Command::Optimize => cmd_optimize(&cfg, seed, &cli, preset),
    }
}

fn out_dir(cli: &Cli, default: &str) -> PathBuf {
    cli.out.clone().unwrap_or_else(|| PathBuf::from(default))
}

/// Refuses existing output paths without --force; creates the directory.
fn prepare_out(dir: &Path, force: bool) -> Result<()> {
    if dir.exists() {
        if !force {
            bail!(
                "output path {} exists; pass --force to overwrite",
                dir.display()
            );
        }
        std::fs::remove_dir_all(dir)
            .with_context(|| format!("clearing {}", dir.display()))?;
    }
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(())
}

fn write_run_log(dir: &Path, command: &str, cfg: &Config, seed: u64) -> Result<()> {
    let text = format!("command = {command}\nseed = {seed}\n{}", cfg.echo());
    std::fs::write(dir.join("run_log.txt"), text)?;
    Ok(())
}

fn model_config(cfg: &Config, preset: Preset) -> Result<ModelConfig> {
    let base = match preset {
        Preset::Desk => ModelConfig::desk(),
        Preset::Paper => ModelConfig::paper_hilift(),
    };
    let mut c = base.clone();
    c.num_tokens = cfg.get_usize("model.num_tokens", base.num_tokens)?;
    c.token_dim = cfg.get_usize("model.token_dim", base.token_dim)?;
    c.encoder_depth = cfg.get_usize("model.encoder_depth", base.encoder_depth)?;
    c.predictor_depth = cfg.get_usize("model.predictor_depth", base.predictor_depth)?;
    c.decoder_depth = cfg.get_usize("model.decoder_depth", base.decoder_depth)?;
    c.num_heads = cfg.get_usize("model.num_heads", base.num_heads)?;
    c.neighborhood = cfg.get_usize("model.neighborhood", base.neighborhood)?;
    c.fourier_bands = cfg.get_usize("model.fourier_bands", base.fourier_bands)?;
    c.tokenizer_k = cfg.get_usize("model.tokenizer_k", base.tokenizer_k)?;
    c.tokenizer_hidden = cfg.get_usize("model.tokenizer_hidden", base.tokenizer_hidden)?;
    c.decoder_hidden = cfg.get_usize("model.decoder_hidden", base.decoder_hidden)?;
    c.cond_dim = cfg.get_usize("model.cond_dim", base.cond_dim)?;
    c.use_sdf = cfg.get_bool("model.use_sdf", base.use_sdf)?;
    Ok(c)
}

fn train_config(cfg: &Config, preset: Preset, seed: u64) -> Result<TrainConfig> {
    let mut t = TrainConfig::desk();
    if preset == Preset::Paper {
        t.epochs = 100;
        t.batch_size = 4;
        t.n_context = 8192;
        t.n_target = 8192;
        t.n_query = 8192;
    }
    t.epochs = cfg.get_usize("train.epochs", t.epochs)?;
    t.batch_size = cfg.get_usize("train.batch_size", t.batch_size)?;
    t.n_context = cfg.get_usize("train.n_context", t.n_context)?;
    t.n_target = cfg.get_usize("train.n_target", t.n_target)?;
    t.n_query = cfg.get_usize("train.n_query", t.n_query)?;
    t.decoder_epochs = cfg.get_usize("train.decoder_epochs", t.decoder_epochs)?;
    t.weights = LossWeights {
        lambda_lat: cfg.get_f64("train.lambda_lat", 1.0)?,
        lambda_rec: cfg.get_f64("train.lambda_rec", 1.0)?,
        lambda_sig: cfg.get_f64("train.lambda_sig", 0.01)?,
        workflow: match cfg.get_str("train.workflow", "coupled").as_str() {
            "coupled" => Workflow::Coupled,
            "decoupled" => Workflow::Decoupled,
            other => bail!("train.workflow = `{other}` (expected coupled|decoupled)"),
        },
    };
    t.sigreg_mode = match cfg.get_str("train.sigreg_mode", "pooled").as_str() {
        "pooled" => SigregMode::Pooled,
        "token" => SigregMode::TokenLevel,
        other => bail!("train.sigreg_mode = `{other}` (expected pooled|token)"),
    };
    t.n_projections = cfg.get_usize("train.n_projections", 64)?;
    t.optimizer.base_lr = cfg.get_f64("train.base_lr", t.optimizer.base_lr)?;
    t.optimizer.warmup_frac = cfg.get_f64("train.warmup_frac", t.optimizer.warmup_frac)?;
    t.optimizer.weight_decay = cfg.get_f64("train.weight_decay", t.optimizer.weight_decay)?;
    t.optimizer.clip_threshold =
        cfg.get_f64("train.clip_threshold", t.optimizer.clip_threshold)?;
    t.seed = seed;
    Ok(t)
}

fn load_dataset_checked(cfg: &Config) -> Result<Dataset> {
    let path = PathBuf::from(cfg.get_str("dataset.path", "artifacts/dataset"));
    if !path.join("manifest.csv").exists() {
        bail!(
            "no dataset at {}; produce one with `aerojepa gen --out {}`",
            path.display(),
            path.display()
        );
    }
    Ok(io::load_dataset(&path)?)
}

fn load_checkpoint_checked(cfg: &Config) -> Result<AeroJepaModel<f64>> {
    let path = PathBuf::from(cfg.get_str("checkpoint.path", "artifacts/train/checkpoint.ajpa"));
    if !path.exists() {
        bail!(
            "no checkpoint at {}; produce one with `aerojepa train`",
            path.display()
        );
    }
    Ok(io::load_checkpoint(&path)?)
}

fn load_latents_checked(cfg: &Config) -> Result<LatentTable> {
    let path = PathBuf::from(cfg.get_str("latents.path", "artifacts/latents/latents.ajpa"));
    if !path.exists() {
        bail!(
            "no latent table at {}; produce one with `aerojepa latents`",
            path.display()
        );
    }
    Ok(LatentTable::from_arrays(&io::read_arrays(&path)?)?)
}

fn load_probes_checked(cfg: &Config) -> Result<aerojepa::probes::SuiteReport> {
    let path = PathBuf::from(cfg.get_str("probes.path", "artifacts/probes/probes.ajpa"));
    if !path.exists() {
        bail!(
            "no probe suites at {}; produce them with `aerojepa probe`",
            path.display()
        );
    }
    probeser::suites_from_arrays(&io::read_arrays(&path)?)
}

// ---------------------------------------------------------------------------

fn cmd_gen(cfg: &Config, seed: u64, cli: &Cli, _preset: Preset) -> Result<()> {
    let known: Vec<&str> = ["seed", "gen.designs", "gen.alphas", "gen.resolution",
        "gen.train_frac", "gen.val_frac", "gen.test_frac"].to_vec();
    cfg.check_known(&known)?;
    let designs = cfg.get_usize("gen.designs", 50)?;
    let alphas = cfg.get_usize("gen.alphas", 4)?;
    let resolution = cfg.get_usize("gen.resolution", 512)?;
    let split = (
        cfg.get_f64("gen.train_frac", 0.8)?,
        cfg.get_f64("gen.val_frac", 0.1)?,
        cfg.get_f64("gen.test_frac", 0.1)?,
    );
    let out = out_dir(cli, "artifacts/dataset");
    let dataset = make_dataset(designs, alphas, split, resolution, seed)?;
    io::save_dataset(&out, &dataset, cli.force)?;
    write_run_log(&out, "gen", cfg, seed)?;
    println!(
        "wrote {} cases ({} designs x {} alphas) to {}",
        dataset.entries.len(),
        designs,
        alphas,
        out.display()
    );
    Ok(())
}

fn cmd_train(cfg: &Config, seed: u64, cli: &Cli, preset: Preset) -> Result<()> {
    let mut known: Vec<&str> = COMMON_KEYS.to_vec();
    known.extend(MODEL_KEYS);
    known.extend(TRAIN_KEYS);
    cfg.check_known(&known)?;
    let dataset = load_dataset_checked(cfg)?;
    let mc = model_config(cfg, preset)?;
    let tc = train_config(cfg, preset, seed)?;
    let out = out_dir(cli, "artifacts/train");
    prepare_out(&out, cli.force)?;
    let mut model = AeroJepaModel::<f64>::new(mc, seed)?;
    let result = train(&mut model, &dataset, &tc)?;
    io::save_checkpoint(&out.join("checkpoint.ajpa"), &model)?;
    let mut rows: Vec<Vec<String>> = Vec::new();
    for (stage, h) in [("main", &result.history), ("decoder", &result.decoder_history)] {
        for e in h {
            rows.push(vec![
                stage.to_string(),
                e.epoch.to_string(),
                e.total.to_string(),
                e.lat.to_string(),
                e.rec.to_string(),
                e.sig.to_string(),
            ]);
        }
    }
    io::write_csv(
        &out.join("history.csv"),
        &["stage", "epoch", "total", "lat", "rec", "sig"],
        &rows,
    )?;
    let series: Vec<(String, Vec<(f64, f64)>)> = vec![
        (
            "total".into(),
            result
                .history
                .iter()
                .map(|e| (e.epoch as f64, e.total))
                .collect(),
        ),
        (
            "rec".into(),
            result
                .history
                .iter()
                .map(|e| (e.epoch as f64, e.rec))
                .collect(),
        ),
    ];
    io::write_line_svg(&out.join("loss.svg"), "training loss", &series)?;
    write_run_log(&out, "train", cfg, seed)?;
    if result.diverged {
        println!("training diverged; checkpoint holds the last finite epoch");
    }
    let last = result.history.last();
    println!(
        "trained {} epochs; final total loss {}; checkpoint at {}",
        result.history.len(),
        last.map_or(f64::NAN, |e| e.total),
        out.join("checkpoint.ajpa").display()
    );
    Ok(())
}

fn cmd_eval(cfg: &Config, seed: u64, cli: &Cli, _preset: Preset) -> Result<()> {
    let mut known: Vec<&str> = COMMON_KEYS.to_vec();
    known.extend(["checkpoint.path", "eval.split", "eval.chunk", "eval.n_context"]);
    cfg.check_known(&known)?;
    let dataset = load_dataset_checked(cfg)?;
    let model = load_checkpoint_checked(cfg)?;
    let split = match cfg.get_str("eval.split", "test").as_str() {
        "train" => Split::Train,
        "val" => Split::Val,
        "test" => Split::Test,
        other => bail!("eval.split = `{other}`"),
    };
    let chunk = cfg.get_usize("eval.chunk", 0)?;
    let n_context = cfg.get_usize("eval.n_context", 256)?;
    let out = out_dir(cli, "artifacts/eval");
    prepare_out(&out, cli.force)?;
    let (report, _stats) = evaluate(
        &model,
        &dataset,
        split,
        n_context,
        if chunk == 0 { None } else { Some(chunk) },
    )?;
    let mut rows = Vec::new();
    println!("field metrics over {} {} cases (mean +- std):", report.n_cases, split.tag());
    for (c, ch) in report.channels.iter().enumerate() {
        for (m, &(mean, std)) in ch.iter().enumerate() {
            println!("  channel {c} {:>16}: {mean:.6} +- {std:.6}", METRIC_NAMES[m]);
            rows.push(vec![
                c.to_string(),
                METRIC_NAMES[m].to_string(),
                mean.to_string(),
                std.to_string(),
            ]);
        }
    }
    io::write_csv(&out.join("metrics.csv"), &["channel", "metric", "mean", "std"], &rows)?;
    write_run_log(&out, "eval", cfg, seed)?;
    Ok(())
}

fn cmd_latents(cfg: &Config, seed: u64, cli: &Cli, _preset: Preset) -> Result<()> {
    let mut known: Vec<&str> = COMMON_KEYS.to_vec();
    known.extend(["checkpoint.path", "latents.n_context", "latents.n_target"]);
    cfg.check_known(&known)?;
    let dataset = load_dataset_checked(cfg)?;
    let model = load_checkpoint_checked(cfg)?;
    let n_context = cfg.get_usize("latents.n_context", 256)?;
    let n_target = cfg.get_usize("latents.n_target", 256)?;
    let out = out_dir(cli, "artifacts/latents");
    prepare_out(&out, cli.force)?;
    let table = extract_latents(&model, &dataset, n_context, n_target)?;
    io::write_arrays(&out.join("latents.ajpa"), &table.to_arrays())?;
    write_run_log(&out, "latents", cfg, seed)?;
    println!(
        "wrote {} latent rows (dim {}) to {}",
        table.rows.len(),
        table.dim,
        out.join("latents.ajpa").display()
    );
    Ok(())
}

fn cmd_probe(cfg: &Config, seed: u64, cli: &Cli, _preset: Preset) -> Result<()> {
    let known: Vec<&str> = vec!["seed", "latents.path"];
    cfg.check_known(&known)?;
    let table = load_latents_checked(cfg)?;
    let out = out_dir(cli, "artifacts/probes");
    prepare_out(&out, cli.force)?;
    let report = fit_suites(&table, seed)?;
    io::write_arrays(&out.join("probes.ajpa"), &probeser::suites_to_arrays(&report))?;
    let mut rows = Vec::new();
    println!("probe suites (cv_r2 / held-out r2 / lambda):");
    for suite in report.suites() {
        for p in &suite.probes {
            println!(
                "  {:?} -> {:>9}: cv_r2={:.4} held_out={:.4} lambda={:e} reliable={}",
                suite.family, p.target, p.model.cv_r2, p.held_out_r2, p.model.lambda_selected,
                p.reliable
            );
            rows.push(vec![
                format!("{:?}", suite.family),
                p.target.clone(),
                p.model.lambda_selected.to_string(),
                p.model.cv_r2.to_string(),
                p.held_out_r2.to_string(),
                p.reliable.to_string(),
            ]);
        }
    }
    io::write_csv(
        &out.join("probe_report.csv"),
        &["family", "target", "lambda", "cv_r2", "held_out_r2", "reliable"],
        &rows,
    )?;
    write_run_log(&out, "probe", cfg, seed)?;
    Ok(())
}

fn cmd_walk(cfg: &Config, seed: u64, cli: &Cli, _preset: Preset) -> Result<()> {
    let mut known: Vec<&str> = COMMON_KEYS.to_vec();
    known.extend([
        "checkpoint.path",
        "latents.path",
        "probes.path",
        "walk.gamma_max",
        "walk.steps",
        "walk.alpha",
        "walk.n_context",
    ]);
    cfg.check_known(&known)?;
    let dataset = load_dataset_checked(cfg)?;
    let model = load_checkpoint_checked(cfg)?;
    let table = load_latents_checked(cfg)?;
    let report = load_probes_checked(cfg)?;
    let gamma_max = cfg.get_f64("walk.gamma_max", 3.0)?;
    let steps = cfg.get_usize("walk.steps", 13)?.max(2);
    let alpha = cfg.get_f64("walk.alpha", 0.1)?;
    let n_context = cfg.get_usize("walk.n_context", 256)?;
    let out = out_dir(cli, "artifacts/walk");
    prepare_out(&out, cli.force)?;

    let anchor = mean_context_tokens(&model, &dataset, n_context)?;
    let train_rows: Vec<&aerojepa::training::LatentRow> =
        table.split_rows(Split::Train).collect();
    let z_ctx = table.matrix(&train_rows, LatentKind::Context);
    let mut mu = vec![0.0; table.dim];
    for r in 0..z_ctx.rows() {
        for c in 0..table.dim {
            mu[c] += z_ctx.at(r, c) / z_ctx.rows() as f64;
        }
    }
    let gammas: Vec<f64> = (0..steps)
        .map(|i| -gamma_max + 2.0 * gamma_max * i as f64 / (steps - 1) as f64)
        .collect();
    let queries = aerojepa::geometry::PointCloud::from_coords(
        dataset.entries[0].case.geometry.coords().clone(),
    )?;
    let mut rows = Vec::new();
    let mut series = Vec::new();
    for entry in &report.context_design.probes {
        let v = ConceptVector::from_weights(&entry.model.w, &entry.target)?;
        let path_z = concept_walk(&mu, &v, &gammas)?;
        let path: Vec<_> = path_z
            .iter()
            .map(|z| lift_pooled(&anchor, z))
            .collect::<aerojepa::Result<_>>()?;
        let walked = decode_walk(&model, &path, &[alpha, 0.0], &queries, alpha)?;
        let mut cl_curve = Vec::new();
        for ((g, z), step) in gammas.iter().zip(&path_z).zip(&walked) {
            let mut row = vec![entry.target.clone(), g.to_string()];
            for probe in &report.context_design.probes {
                row.push(probe.model.predict(z)?.to_string());
            }
            row.push(step.cl.to_string());
            row.push(step.cd.to_string());
            rows.push(row);
            cl_curve.push((*g, step.cl));
        }
        series.push((format!("cl along {}", entry.target), cl_curve));
    }
    let mut header = vec!["walked".to_string(), "gamma".to_string()];
    for probe in &report.context_design.probes {
        header.push(format!("{}_hat", probe.target));
    }
    header.push("cl".into());
    header.push("cd".into());
    let header_refs: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
    io::write_csv(&out.join("walk.csv"), &header_refs, &rows)?;
    io::write_line_svg(&out.join("walk.svg"), "decoded C_L along concept walks", &series)?;
    write_run_log(&out, "walk", cfg, seed)?;
    println!(
        "walked {} concept directions x {} steps; traces at {}",
        report.context_design.probes.len(),
        steps,
        out.join("walk.csv").display()
    );
    Ok(())
}

fn cmd_interp(cfg: &Config, seed: u64, cli: &Cli, _preset: Preset) -> Result<()> {
    let mut known: Vec<&str> = COMMON_KEYS.to_vec();
    known.extend([
        "checkpoint.path",
        "interp.case_a",
        "interp.case_b",
        "interp.steps",
        "interp.n_context",
    ]);
    cfg.check_known(&known)?;
    let dataset = load_dataset_checked(cfg)?;
    let model = load_checkpoint_checked(cfg)?;
    let case_a = cfg.get_usize("interp.case_a", 0)?;
    let case_b = cfg.get_usize("interp.case_b", 1)?;
    let steps = cfg.get_usize("interp.steps", 11)?.max(2);
    let n_context = cfg.get_usize("interp.n_context", 256)?;
    let out = out_dir(cli, "artifacts/interp");
    prepare_out(&out, cli.force)?;
    let find = |id: usize| {
        dataset
            .entries
            .iter()
            .find(|e| e.case_id == id)
            .with_context(|| format!("case id {id} not in dataset"))
    };
    let ea = find(case_a)?;
    let eb = find(case_b)?;
    let encode = |e: &aerojepa::synthgen::DatasetEntry| -> Result<_> {
        let g = &e.case.geometry;
        let sub = g.subset(&fps(g, n_context.min(g.len()), 0)?)?;
        Ok(model.encode_context_values(&sub)?)
    };
    let ta = encode(ea)?;
    let tb = encode(eb)?;
    let alphas: Vec<f64> = (0..steps)
        .map(|i| i as f64 / (steps - 1) as f64)
        .collect();
    let path = interpolate_token_sets(&ta, &tb, &alphas)?;
    let queries =
        aerojepa::geometry::PointCloud::from_coords(ea.case.geometry.coords().clone())?;
    let mut rows = Vec::new();
    let mut curve = Vec::new();
    for (t, ctx) in alphas.iter().zip(&path) {
        // conditions interpolated alongside the context latent
        let cond_alpha =
            (1.0 - t) * ea.case.conditions.alpha + t * eb.case.conditions.alpha;
        let step = &decode_walk(&model, std::slice::from_ref(ctx), &[cond_alpha, 0.0], &queries, cond_alpha)?[0];
        rows.push(vec![
            t.to_string(),
            cond_alpha.to_string(),
            step.cl.to_string(),
            step.cd.to_string(),
        ]);
        curve.push((*t, step.cl));
    }
    io::write_csv(
        &out.join("interp.csv"),
        &["t", "alpha", "cl", "cd"],
        &rows,
    )?;
    io::write_line_svg(
        &out.join("interp.svg"),
        &format!("decoded C_L, case {case_a} -> case {case_b} (context latents)"),
        &[("cl".to_string(), curve)],
    )?;
    write_run_log(&out, "interp", cfg, seed)?;
    println!(
        "interpolated case {case_a} -> {case_b} in {steps} steps; trace at {}",
        out.join("interp.csv").display()
    );
    Ok(())
}

fn cmd_optimize(cfg: &Config, seed: u64, cli: &Cli, _preset: Preset) -> Result<()> {
    let mut known: Vec<&str> = COMMON_KEYS.to_vec();
    known.extend([
        "checkpoint.path",
        "latents.path",
        "probes.path",
        "optimize.restarts",
        "optimize.alpha",
        "optimize.mach",
        "optimize.tau",
        "optimize.n_context",
    ]);
    cfg.check_known(&known)?;
    let dataset = load_dataset_checked(cfg)?;
    let model = load_checkpoint_checked(cfg)?;
    let table = load_latents_checked(cfg)?;
    let report = load_probes_checked(cfg)?;
    let restarts = cfg.get_usize("optimize.restarts", 8)?;
    let alpha = cfg.get_f64("optimize.alpha", 0.1)?;
    let mach = cfg.get_f64("optimize.mach", 0.0)?;
    let tau = cfg.get_f64("optimize.tau", 0.0)?;
    let n_context = cfg.get_usize("optimize.n_context", 256)?;
    let out = out_dir(cli, "artifacts/optimize");
    prepare_out(&out, cli.force)?;
    let anchor = mean_context_tokens(&model, &dataset, n_context)?;
    let problem = LatentOptProblem::new(
        &model,
        anchor,
        &report,
        &table,
        Some([alpha, mach]),
        if tau > 0.0 { Some(tau) } else { None },
    )?;
    let result = solve(&problem, &table, restarts, seed)?;
    println!("design recipe per restart (thickness, camber, C_L, C_D, L/D, feasible):");
    let mut rows = Vec::new();
    for (i, t) in result.restarts.iter().enumerate() {
        let x = problem.decode_design(&t.z)?;
        let (th, ca) = (x.first().copied().unwrap_or(f64::NAN), x.get(1).copied().unwrap_or(f64::NAN));
        println!(
            "  restart {i}: {th:.4} {ca:.4} {:.4} {:.4} {:.2} {}",
            t.cl,
            t.cd,
            t.cl / t.cd,
            t.feasible
        );
        rows.push(vec![
            i.to_string(),
            th.to_string(),
            ca.to_string(),
            t.cl.to_string(),
            t.cd.to_string(),
            (t.cl / t.cd).to_string(),
            t.feasible.to_string(),
            t.kkt_residual.to_string(),
        ]);
    }
    io::write_csv(
        &out.join("restarts.csv"),
        &["restart", "thickness", "camber", "cl", "cd", "ld", "feasible", "kkt_residual"],
        &rows,
    )?;
    let envelope: Vec<(f64, f64)> = table
        .split_rows(Split::Train)
        .map(|r| (r.cd, r.cl))
        .collect();
    io::write_csv(
        &out.join("envelope.csv"),
        &["cd", "cl"],
        &envelope
            .iter()
            .map(|(cd, cl)| vec![cd.to_string(), cl.to_string()])
            .collect::<Vec<_>>(),
    )?;
    io::write_scatter_svg(
        &out.join("envelope.svg"),
        "train envelope (C_D, C_L) and optimum",
        &[
            ("train".to_string(), envelope),
            ("optimum".to_string(), vec![(result.cd, result.cl)]),
        ],
    )?;
    io::write_csv(
        &out.join("optimum.csv"),
        &["thickness", "camber", "cl", "cd", "ld", "retrieved_case", "retrieved_distance"],
        &[vec![
            result.x_star.first().copied().unwrap_or(f64::NAN).to_string(),
            result.x_star.get(1).copied().unwrap_or(f64::NAN).to_string(),
            result.cl.to_string(),
            result.cd.to_string(),
            result.ld.to_string(),
            result.retrieved_case.to_string(),
            result.retrieved_distance.to_string(),
        ]],
    )?;
    write_run_log(&out, "optimize", cfg, seed)?;
    println!(
        "optimum: L/D = {:.3} (C_L {:.4}, C_D {:.4}); {} of {} restarts in the best neighborhood; nearest case {} at distance {:.4}",
        result.ld,
        result.cl,
        result.cd,
        result.neighborhood_count,
        restarts,
        result.retrieved_case,
        result.retrieved_distance
    );
    Ok(())
}
