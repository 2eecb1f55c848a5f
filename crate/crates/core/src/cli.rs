//! The `vaelf` command-line tool.
//!
//! Every command reads a [`RunConfig`], applies flag overrides, computes its
//! results in memory and only then writes files, each accompanied by a
//! `<command>.summary.json` echoing the effective configuration.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use crate::checkpoint::{self, FORMAT_VERSION};
use crate::config::RunConfig;
use crate::data::{generate_synthetic_with, EntrySplit, HdiTensor, Position};
use crate::dataset::{self, write_file, write_json};
use crate::error::{Error, Result};
use crate::eval::{self, MetricReport, Scale};
use crate::gradcheck::{self, GradCheckOptions, GradCheckReport};
use crate::lfa::{self, FactorMatrices};
use crate::trainer::{self, EpochRecord};
use crate::vae::VaeParams;

pub const VAE_NAME: &str = "vae-lf";
pub const LFA_NAME: &str = "mf-lfa";
pub const MEAN_NAME: &str = "mean";
pub const ORACLE_NAME: &str = "oracle";

#[derive(Debug, Parser)]
#[command(name = "vaelf", version, about = "VAE imputation for incomplete load-monitoring tensors")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct GlobalArgs {
    /// JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (overrides `out_dir`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Report metrics and write imputations in physical units.
    #[arg(long, global = true)]
    pub raw: bool,
    #[arg(long, global = true)]
    pub seed_data: Option<u64>,
    #[arg(long, global = true)]
    pub seed_split: Option<u64>,
    #[arg(long, global = true)]
    pub seed_model: Option<u64>,
    /// Known-entry fraction (overrides `density`).
    #[arg(long, global = true)]
    pub density: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelKind {
    Vae,
    Lfa,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic dataset (channel CSVs + manifest).
    GenSynth,
    /// Mask a dataset down to the configured density.
    Mask,
    /// Train a model and write its best checkpoint and epoch log.
    Train {
        #[arg(long, value_enum, default_value = "vae")]
        model: ModelKind,
    },
    /// Impute every missing entry with a trained VAE.
    Impute {
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Score checkpoints on the held-out test split.
    Eval {
        #[arg(long)]
        vae: Option<PathBuf>,
        #[arg(long)]
        lfa: Option<PathBuf>,
        /// Include the per-channel mean imputer.
        #[arg(long)]
        mean: bool,
        /// Include a predictor that returns the ground truth.
        #[arg(long)]
        oracle: bool,
    },
    /// Train VAE, factorization and mean baselines on one split and compare.
    Compare,
    /// Check analytic gradients against finite differences.
    GradCheck {
        #[arg(long)]
        configs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, hide = true)]
        corrupt_gradient: bool,
    },
}

/// Loads the config file (or defaults) and applies flag overrides.
pub fn resolve_config(global: &GlobalArgs) -> Result<RunConfig> {
    let mut cfg = match &global.config {
        Some(path) => RunConfig::from_path(path)?,
        None => RunConfig::default(),
    };
    if let Some(out) = &global.out {
        cfg.out_dir = out.clone();
    }
    if let Some(s) = global.seed_data {
        cfg.seeds.data = s;
    }
    if let Some(s) = global.seed_split {
        cfg.seeds.split = s;
    }
    if let Some(s) = global.seed_model {
        cfg.seeds.model = s;
    }
    if let Some(d) = global.density {
        cfg.density = d;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Runs one command. `Ok(false)` means the command ran but its check failed.
pub fn run(cli: &Cli) -> Result<bool> {
    let cfg = resolve_config(&cli.global)?;
    let scale = if cli.global.raw { Scale::Raw } else { Scale::Normalized };
    match &cli.command {
        Command::GenSynth => cmd_gen_synth(&cfg).map(|_| true),
        Command::Mask => cmd_mask(&cfg).map(|_| true),
        Command::Train { model } => cmd_train(&cfg, *model, scale).map(|_| true),
        Command::Impute { checkpoint } => cmd_impute(&cfg, checkpoint, scale).map(|_| true),
        Command::Eval {
            vae,
            lfa,
            mean,
            oracle,
        } => {
            let sel = EvalSelection {
                vae: vae.clone(),
                lfa: lfa.clone(),
                mean: *mean,
                oracle: *oracle,
            };
            cmd_eval(&cfg, &sel, scale).map(|_| true)
        }
        Command::Compare => cmd_compare(&cfg, scale).map(|_| true),
        Command::GradCheck {
            configs,
            seed,
            corrupt_gradient,
        } => {
            let opts = GradCheckOptions {
                configs: configs.unwrap_or(cfg.grad_check.configs),
                seed: seed.unwrap_or(cfg.grad_check.seed),
                corrupt: *corrupt_gradient,
            };
            let report = cmd_grad_check(&opts)?;
            print!("{}", format_grad_check(&report));
            Ok(report.passed)
        }
    }
}

fn summary_path(cfg: &RunConfig, command: &str) -> PathBuf {
    cfg.out_dir.join(format!("{command}.summary.json"))
}

fn write_summary(cfg: &RunConfig, command: &str, extra: serde_json::Value) -> Result<()> {
    let mut value = json!({
        "format_version": FORMAT_VERSION,
        "command": command,
        "config": cfg,
    });
    if let (Some(obj), serde_json::Value::Object(more)) = (value.as_object_mut(), extra) {
        obj.extend(more);
    }
    write_json(&summary_path(cfg, command), &value)
}

/// Raw tensor from the configured source, before any masking.
pub fn load_source(cfg: &RunConfig) -> Result<HdiTensor> {
    if let Some(path) = &cfg.manifest {
        return dataset::load_manifest(path).map(|(_, t)| t);
    }
    let syn = cfg.synthetic_or_default().expect("validated config has a source");
    generate_synthetic_with(&syn.profiles(), syn.n_days, syn.m_slots, cfg.seeds.data)
}

/// Source tensor masked to the configured density (a no-op at density 1).
pub fn load_masked(cfg: &RunConfig) -> Result<HdiTensor> {
    let t = load_source(cfg)?;
    if cfg.density < 1.0 {
        t.apply_sparsity(cfg.density, cfg.mask_seed())
    } else {
        Ok(t)
    }
}

/// Normalized tensor and its train/valid/test split.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub tensor: HdiTensor,
    pub split: EntrySplit,
    pub label: String,
}

pub fn prepare(cfg: &RunConfig) -> Result<Prepared> {
    let tensor = load_masked(cfg)?.normalize()?;
    let split = tensor.split_entries(cfg.seeds.split)?;
    Ok(Prepared {
        tensor,
        split,
        label: dataset_label(cfg),
    })
}

pub fn dataset_label(cfg: &RunConfig) -> String {
    if let Some(l) = &cfg.dataset_label {
        return l.clone();
    }
    let source = match &cfg.manifest {
        Some(p) => p
            .parent()
            .and_then(|d| d.file_name())
            .map_or_else(|| "manifest".to_string(), |n| n.to_string_lossy().into_owned()),
        None => "synthetic".to_string(),
    };
    format!("{source}@{}", cfg.density)
}

pub fn cmd_gen_synth(cfg: &RunConfig) -> Result<PathBuf> {
    let syn = cfg
        .synthetic_or_default()
        .ok_or_else(|| Error::Config("synthetic: gen-synth needs a synthetic dataset block".into()))?;
    let t = generate_synthetic_with(&syn.profiles(), syn.n_days, syn.m_slots, cfg.seeds.data)?;
    let manifest = dataset::write_dataset(&cfg.out_dir.join("data"), &t, None, Some(cfg.seeds.data))?;
    write_summary(
        cfg,
        "gen-synth",
        json!({ "manifest": manifest, "shape": [t.k(), t.n_days(), t.m_slots()], "observed": t.observed_count() }),
    )?;
    println!(
        "generated {} x {} x {} tensor, |Λ| = {} -> {}",
        t.k(),
        t.n_days(),
        t.m_slots(),
        t.observed_count(),
        manifest.display()
    );
    Ok(manifest)
}

pub fn cmd_mask(cfg: &RunConfig) -> Result<PathBuf> {
    let t = load_masked(cfg)?;
    let manifest = dataset::write_dataset(
        &cfg.out_dir.join("masked"),
        &t,
        Some(cfg.density),
        Some(cfg.mask_seed()),
    )?;
    write_summary(
        cfg,
        "mask",
        json!({ "manifest": manifest, "observed": t.observed_count(), "cells": t.len() }),
    )?;
    println!(
        "masked to density {}: |Λ| = {} of {} -> {}",
        cfg.density,
        t.observed_count(),
        t.len(),
        manifest.display()
    );
    Ok(manifest)
}

pub const EPOCH_CSV_HEADER: &str = "epoch,train_loss,valid_rmse,valid_mae,wall_ms";

pub fn epochs_csv(records: &[EpochRecord], with_wall_time: bool) -> String {
    let mut out = String::from(EPOCH_CSV_HEADER);
    out.push('\n');
    for r in records {
        let wall = if with_wall_time { r.wall_ms } else { 0 };
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.epoch, r.train_loss, r.valid_rmse, r.valid_mae, wall
        );
    }
    out
}

/// Predictions on Ω from a VAE whose encoder sees every observed entry
/// except Ω itself.
pub fn vae_test_predictions(p: &VaeParams, prep: &Prepared, positions: &[Position]) -> Result<Vec<f64>> {
    let visible = prep.tensor.without(&prep.split.test)?;
    trainer::predict_at(p, &visible, positions)
}

pub fn evaluate_vae(p: &VaeParams, prep: &Prepared, scale: Scale) -> Result<MetricReport> {
    eval::evaluate_model(VAE_NAME, &prep.label, &prep.tensor, &prep.split, scale, |ps| {
        vae_test_predictions(p, prep, ps)
    })
}

pub fn evaluate_lfa(f: &FactorMatrices, prep: &Prepared, scale: Scale) -> Result<MetricReport> {
    eval::evaluate_model(LFA_NAME, &prep.label, &prep.tensor, &prep.split, scale, |ps| {
        lfa::lfa_predict(f, ps)
    })
}

pub fn evaluate_mean(prep: &Prepared, scale: Scale) -> Result<MetricReport> {
    eval::evaluate_model(MEAN_NAME, &prep.label, &prep.tensor, &prep.split, scale, |ps| {
        lfa::mean_impute(&prep.tensor, &prep.split, ps)
    })
}

pub fn evaluate_oracle(prep: &Prepared, scale: Scale) -> Result<MetricReport> {
    eval::evaluate_model(ORACLE_NAME, &prep.label, &prep.tensor, &prep.split, scale, |ps| {
        Ok(ps.iter().map(|&p| prep.tensor.get(p).unwrap_or(0.0)).collect())
    })
}

pub fn cmd_train(cfg: &RunConfig, model: ModelKind, scale: Scale) -> Result<()> {
    let prep = prepare(cfg)?;
    match model {
        ModelKind::Vae => {
            let outcome = trainer::train(&prep.tensor, &prep.split, &cfg.train_config())?;
            let report = evaluate_vae(&outcome.params, &prep, scale)?;
            let ckpt = checkpoint::encode_vae(&outcome.params, &outcome.adam, cfg.seeds.model)?;
            let best = outcome.best_record();
            let ckpt_path = cfg.out_dir.join("vae.ckpt");
            write_file(&ckpt_path, &ckpt)?;
            write_file(
                &cfg.out_dir.join("epochs.csv"),
                epochs_csv(&outcome.records, cfg.record_wall_time).as_bytes(),
            )?;
            write_summary(
                cfg,
                "train",
                json!({
                    "model": VAE_NAME,
                    "checkpoint": ckpt_path,
                    "epochs_run": outcome.records.len(),
                    "best_epoch": outcome.best_epoch,
                    "best_valid_rmse": best.valid_rmse,
                    "best_valid_mae": best.valid_mae,
                    "test": report,
                }),
            )?;
            println!(
                "{VAE_NAME}: best epoch {} of {}, valid RMSE {:.6}, test RMSE {:.6} MAE {:.6} ({})",
                outcome.best_epoch,
                outcome.records.len(),
                best.valid_rmse,
                report.rmse,
                report.mae,
                scale.as_str()
            );
        }
        ModelKind::Lfa => {
            let outcome = lfa::lfa_train(&prep.tensor, &prep.split, &cfg.lfa_config())?;
            let report = evaluate_lfa(&outcome.factors, &prep, scale)?;
            let ckpt = checkpoint::encode_lfa(&outcome.factors)?;
            let ckpt_path = cfg.out_dir.join("lfa.ckpt");
            let mut log = String::from("epoch,train_rmse,valid_rmse\n");
            for r in &outcome.records {
                let _ = writeln!(log, "{},{},{}", r.epoch, r.train_rmse, r.valid_rmse);
            }
            write_file(&ckpt_path, &ckpt)?;
            write_file(&cfg.out_dir.join("lfa_epochs.csv"), log.as_bytes())?;
            write_summary(
                cfg,
                "train",
                json!({
                    "model": LFA_NAME,
                    "checkpoint": ckpt_path,
                    "epochs_run": outcome.records.len(),
                    "best_epoch": outcome.best_epoch,
                    "test": report,
                }),
            )?;
            println!(
                "{LFA_NAME}: best epoch {} of {}, test RMSE {:.6} MAE {:.6} ({})",
                outcome.best_epoch,
                outcome.records.len(),
                report.rmse,
                report.mae,
                scale.as_str()
            );
        }
    }
    Ok(())
}

pub const IMPUTE_CSV_HEADER: &str = "channel,day,slot,value";

pub fn cmd_impute(cfg: &RunConfig, ckpt: &Path, scale: Scale) -> Result<PathBuf> {
    let tensor = load_masked(cfg)?.normalize()?;
    let model = checkpoint::load_vae(ckpt)?;
    let mut preds = trainer::impute(&model.params, &tensor)?;
    if scale == Scale::Raw {
        preds = tensor.denormalize(&preds)?;
    }
    let mut out = String::from(IMPUTE_CSV_HEADER);
    out.push('\n');
    for (p, v) in &preds {
        let _ = writeln!(out, "{},{},{},{}", p.channel, p.day, p.slot, v);
    }
    let path = cfg.out_dir.join("imputed.csv");
    write_file(&path, out.as_bytes())?;
    write_summary(
        cfg,
        "impute",
        json!({ "checkpoint": ckpt, "output": path, "rows": preds.len(), "scale": scale }),
    )?;
    println!("imputed {} entries ({}) -> {}", preds.len(), scale.as_str(), path.display());
    Ok(path)
}

#[derive(Debug, Clone, Default)]
pub struct EvalSelection {
    pub vae: Option<PathBuf>,
    pub lfa: Option<PathBuf>,
    pub mean: bool,
    pub oracle: bool,
}

fn check_same_omega(reports: &[MetricReport]) -> Result<()> {
    if let Some(first) = reports.first() {
        if let Some(r) = reports.iter().find(|r| r.omega_hash != first.omega_hash) {
            return Err(Error::InvalidArgument(format!(
                "{} and {} were scored on different test sets",
                first.model_name, r.model_name
            )));
        }
    }
    Ok(())
}

fn write_reports(cfg: &RunConfig, stem: &str, reports: &[MetricReport]) -> Result<PathBuf> {
    for r in reports {
        write_json(&cfg.out_dir.join(format!("{stem}_{}.json", r.model_name)), r)?;
    }
    let path = cfg.out_dir.join(format!("{stem}.csv"));
    write_file(&path, eval::reports_csv(reports).as_bytes())?;
    Ok(path)
}

pub fn cmd_eval(cfg: &RunConfig, sel: &EvalSelection, scale: Scale) -> Result<Vec<MetricReport>> {
    if sel.vae.is_none() && sel.lfa.is_none() && !sel.mean && !sel.oracle {
        return Err(Error::InvalidArgument(
            "nothing to evaluate: pass --vae, --lfa, --mean or --oracle".into(),
        ));
    }
    let prep = prepare(cfg)?;
    let mut reports = Vec::new();
    if let Some(path) = &sel.vae {
        let ckpt = checkpoint::load_vae(path)?;
        reports.push(evaluate_vae(&ckpt.params, &prep, scale)?);
    }
    if let Some(path) = &sel.lfa {
        let f = checkpoint::load_lfa(path)?;
        if (f.k, f.n_days, f.m_slots) != (prep.tensor.k(), prep.tensor.n_days(), prep.tensor.m_slots()) {
            return Err(Error::DimensionMismatch(format!(
                "factor checkpoint is {} x {} x {}, dataset is {} x {} x {}",
                f.k,
                f.n_days,
                f.m_slots,
                prep.tensor.k(),
                prep.tensor.n_days(),
                prep.tensor.m_slots()
            )));
        }
        reports.push(evaluate_lfa(&f, &prep, scale)?);
    }
    if sel.mean {
        reports.push(evaluate_mean(&prep, scale)?);
    }
    if sel.oracle {
        reports.push(evaluate_oracle(&prep, scale)?);
    }
    check_same_omega(&reports)?;
    reports.sort_by(|a, b| a.model_name.cmp(&b.model_name));
    let csv = write_reports(cfg, "eval", &reports)?;
    write_summary(cfg, "eval", json!({ "report": csv, "models": reports }))?;
    print!("{}", eval::reports_csv(&reports));
    Ok(reports)
}

#[derive(Debug, Clone, Serialize)]
pub struct Comparison {
    pub reports: Vec<MetricReport>,
    pub improvements: Vec<eval::Improvement>,
}

/// Improvements of the VAE row over every other row.
pub fn comparison(reports: Vec<MetricReport>) -> Result<Comparison> {
    let vae = reports
        .iter()
        .find(|r| r.model_name == VAE_NAME)
        .ok_or_else(|| Error::InvalidArgument(format!("no {VAE_NAME} report to compare")))?;
    let others: Vec<MetricReport> = reports
        .iter()
        .filter(|r| r.model_name != VAE_NAME)
        .cloned()
        .collect();
    let improvements = eval::improvements(vae, &others);
    let mut reports = reports;
    reports.sort_by(|a, b| a.model_name.cmp(&b.model_name));
    Ok(Comparison {
        reports,
        improvements,
    })
}

pub fn cmd_compare(cfg: &RunConfig, scale: Scale) -> Result<Comparison> {
    let prep = prepare(cfg)?;
    let vae = trainer::train(&prep.tensor, &prep.split, &cfg.train_config())?;
    let mf = lfa::lfa_train(&prep.tensor, &prep.split, &cfg.lfa_config())?;
    let reports = vec![
        evaluate_vae(&vae.params, &prep, scale)?,
        evaluate_lfa(&mf.factors, &prep, scale)?,
        evaluate_mean(&prep, scale)?,
    ];
    check_same_omega(&reports)?;
    let cmp = comparison(reports)?;

    let vae_ckpt = checkpoint::encode_vae(&vae.params, &vae.adam, cfg.seeds.model)?;
    let lfa_ckpt = checkpoint::encode_lfa(&mf.factors)?;
    write_file(&cfg.out_dir.join("vae.ckpt"), &vae_ckpt)?;
    write_file(&cfg.out_dir.join("lfa.ckpt"), &lfa_ckpt)?;
    write_file(
        &cfg.out_dir.join("epochs.csv"),
        epochs_csv(&vae.records, cfg.record_wall_time).as_bytes(),
    )?;
    let csv = write_reports(cfg, "compare", &cmp.reports)?;
    write_file(
        &cfg.out_dir.join("compare_improvements.csv"),
        eval::improvements_csv(&cmp.improvements).as_bytes(),
    )?;
    write_summary(
        cfg,
        "compare",
        json!({
            "report": csv,
            "vae_best_epoch": vae.best_epoch,
            "lfa_best_epoch": mf.best_epoch,
            "comparison": cmp,
        }),
    )?;
    print!("{}", eval::reports_csv(&cmp.reports));
    print!("{}", eval::improvements_csv(&cmp.improvements));
    Ok(cmp)
}

pub fn cmd_grad_check(opts: &GradCheckOptions) -> Result<GradCheckReport> {
    gradcheck::run(opts)
}

pub fn format_grad_check(r: &GradCheckReport) -> String {
    let mut out = format!(
        "gradient check: {} configurations ({} redrawn near kinks), h = {:e}, tolerance {:e}\n",
        r.configs,
        r.resampled,
        gradcheck::FD_STEP,
        gradcheck::REL_TOL
    );
    for b in &r.blocks {
        let _ = writeln!(
            out,
            "  {:<3} max rel error {:.3e}, max abs diff {:.3e} over {} coordinates",
            b.block, b.max_rel_error, b.max_abs_diff, b.coordinates
        );
    }
    let _ = writeln!(out, "{}", if r.passed { "PASS" } else { "FAIL" });
    out
}
