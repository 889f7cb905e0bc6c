//! Implementations behind the `calrank` subcommands.
//!
//! Each command resolves its settings through [`crate::config`], does its work
//! through the library crate, and writes outputs atomically. Dataset
//! directories hold two files: `dataset.json` (catalog + dense-id sequences)
//! and `remap.json` (raw-token lookup tables). Existing outputs are never
//! clobbered unless `--force` is passed.

use std::fs;
use std::path::{Path, PathBuf};

use calrank_core::backbone::{load_checkpoint, save_checkpoint, train, CheckpointEcho};
use calrank_core::calibration::{drift_csv, drift_profile};
use calrank_core::corpus::{
    generate_synthetic, leave_one_out_split, load_catalog, load_interactions, Dataset,
    SplitDataset,
};
use calrank_core::evaluate::{evaluate, lambda_sweep, sweep_csv};
use calrank_core::rerank::{recommendations_tsv, rerank_all, ScheduleMode};
use calrank_core::write_atomic;

use crate::config::{
    resolve_calibration, resolve_path, resolve_rerank, resolve_synthetic, resolve_training,
    FileConfig,
};
use crate::{
    usage, CmdResult, DriftArgs, EvaluateArgs, GenerateArgs, PrepareArgs, RerankArgs, SweepArgs,
    TrainArgs,
};

const DATASET_FILE: &str = "dataset.json";
const REMAP_FILE: &str = "remap.json";

// ---------------------------------------------------------------------------
// Shared plumbing
// ---------------------------------------------------------------------------

fn refuse_overwrite(paths: &[&Path], force: bool) -> CmdResult<()> {
    if force {
        return Ok(());
    }
    for path in paths {
        if path.exists() {
            return Err(usage(format!(
                "{} already exists (pass --force to overwrite)",
                path.display()
            )));
        }
    }
    Ok(())
}

fn ensure_parent(path: &Path) -> CmdResult<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(calrank_core::Error::from)?;
        }
    }
    Ok(())
}

fn write_dataset_dir(dir: &Path, data: &Dataset, force: bool) -> CmdResult<()> {
    let dataset_path = dir.join(DATASET_FILE);
    let remap_path = dir.join(REMAP_FILE);
    refuse_overwrite(&[&dataset_path, &remap_path], force)?;
    fs::create_dir_all(dir).map_err(calrank_core::Error::from)?;
    data.save(&dataset_path)?;
    let remap = serde_json::to_string_pretty(&data.remap_tables())
        .map_err(calrank_core::Error::from)?;
    write_atomic(&remap_path, &(remap + "\n"))?;
    Ok(())
}

fn load_split(dir: &Path) -> CmdResult<SplitDataset> {
    Ok(leave_one_out_split(Dataset::load(&dir.join(DATASET_FILE))?))
}

/// Write CSV/TSV to `out` when given, otherwise print it to stdout.
fn emit(out: Option<PathBuf>, text: &str, force: bool) -> CmdResult<()> {
    match out {
        Some(path) => {
            refuse_overwrite(&[&path], force)?;
            ensure_parent(&path)?;
            write_atomic(&path, text)?;
            eprintln!("wrote {}", path.display());
            Ok(())
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

pub fn generate(file: &FileConfig, args: GenerateArgs) -> CmdResult<()> {
    let cfg = resolve_synthetic(file, &args.synthetic)?;
    let out = resolve_path(args.out, file.out.as_ref(), "out")?;
    let data = generate_synthetic(&cfg)?;
    write_dataset_dir(&out, &data, args.force)?;
    let interactions: usize = data.sequences.iter().map(|s| s.items.len()).sum();
    eprintln!(
        "generated {} users / {} items / {} categories ({interactions} interactions) -> {}",
        data.num_users(),
        data.catalog.num_items(),
        data.catalog.num_categories(),
        out.display()
    );
    Ok(())
}

pub fn prepare(file: &FileConfig, args: PrepareArgs) -> CmdResult<()> {
    let interactions =
        resolve_path(args.interactions, file.interactions.as_ref(), "interactions")?;
    let catalog_path = resolve_path(args.catalog, file.catalog.as_ref(), "catalog")?;
    let out = resolve_path(args.out, file.out.as_ref(), "out")?;
    let catalog = load_catalog(&catalog_path)?;
    let data = load_interactions(&interactions, catalog)?;
    write_dataset_dir(&out, &data, args.force)?;
    eprintln!(
        "prepared {} users / {} items -> {}",
        data.num_users(),
        data.catalog.num_items(),
        out.display()
    );
    Ok(())
}

pub fn train_model(file: &FileConfig, args: TrainArgs) -> CmdResult<()> {
    let data_dir = resolve_path(args.data, file.data.as_ref(), "data")?;
    let out = resolve_path(args.out, file.out.as_ref(), "out")?;
    refuse_overwrite(&[&out], args.force)?;
    let tcfg = resolve_training(file, &args.training);
    let ccfg = resolve_calibration(file, &args.calibration, None);
    let split = load_split(&data_dir)?;
    let result = train(&split, &tcfg, &ccfg)?;
    for loss in &result.epoch_losses {
        eprintln!(
            "epoch {:>4}/{}  combined {:.6}  rank {:.6}  calibration {:.6}",
            loss.epoch + 1,
            tcfg.epochs,
            loss.combined,
            loss.rank,
            loss.calibration
        );
    }
    let echo = CheckpointEcho {
        gamma: tcfg.gamma,
        alpha: ccfg.alpha,
        beta: ccfg.beta,
        seed: tcfg.seed,
    };
    ensure_parent(&out)?;
    save_checkpoint(&result.params, &echo, &out)?;
    eprintln!("checkpoint -> {}", out.display());
    Ok(())
}

pub fn rerank_users(file: &FileConfig, args: RerankArgs) -> CmdResult<()> {
    let data_dir = resolve_path(args.data, file.data.as_ref(), "data")?;
    let ckpt = resolve_path(args.checkpoint, file.checkpoint.as_ref(), "checkpoint")?;
    let out = resolve_path(args.out, file.out.as_ref(), "out")?;
    refuse_overwrite(&[&out], args.force)?;
    let (params, echo) = load_checkpoint(&ckpt)?;
    let ccfg = resolve_calibration(file, &args.calibration, Some(&echo));
    let rcfg = resolve_rerank(file, &args.rerank);
    let split = load_split(&data_dir)?;
    let lists = rerank_all(&params, &split, &rcfg, &ccfg)?;
    let tsv = recommendations_tsv(&lists, &split.train);
    ensure_parent(&out)?;
    write_atomic(&out, &tsv)?;
    eprintln!("{} slates -> {}", lists.len(), out.display());
    Ok(())
}

pub fn evaluate_model(file: &FileConfig, args: EvaluateArgs) -> CmdResult<()> {
    let data_dir = resolve_path(args.data, file.data.as_ref(), "data")?;
    let ckpt = resolve_path(args.checkpoint, file.checkpoint.as_ref(), "checkpoint")?;
    let (params, echo) = load_checkpoint(&ckpt)?;
    let ccfg = resolve_calibration(file, &args.calibration, Some(&echo));
    let rcfg = resolve_rerank(file, &args.rerank);
    let split = load_split(&data_dir)?;
    let report = evaluate(&params, &split, &rcfg, &ccfg)?;
    emit(args.out.or_else(|| file.out.clone()), &sweep_csv(std::slice::from_ref(&report)), args.force)
}

pub fn sweep(file: &FileConfig, args: SweepArgs) -> CmdResult<()> {
    let data_dir = resolve_path(args.data, file.data.as_ref(), "data")?;
    let ckpt = resolve_path(args.checkpoint, file.checkpoint.as_ref(), "checkpoint")?;
    let (params, echo) = load_checkpoint(&ckpt)?;
    let ccfg = resolve_calibration(file, &args.calibration, Some(&echo));
    let rcfg = resolve_rerank(file, &args.rerank);
    let split = load_split(&data_dir)?;
    let lambdas = if args.lambdas.is_empty() {
        vec![0.0, 0.3, 0.5, 0.7, 0.9]
    } else {
        args.lambdas
    };
    let schedules = if args.schedules.is_empty() {
        vec![ScheduleMode::Prioritized, ScheduleMode::Uniform]
    } else {
        args.schedules
    };
    let reports = lambda_sweep(&params, &split, &lambdas, &schedules, &rcfg, &ccfg)?;
    emit(args.out.or_else(|| file.out.clone()), &sweep_csv(&reports), args.force)
}

pub fn drift(file: &FileConfig, args: DriftArgs) -> CmdResult<()> {
    let data_dir = resolve_path(args.data, file.data.as_ref(), "data")?;
    let ccfg = resolve_calibration(file, &args.calibration, None);
    let data = Dataset::load(&data_dir.join(DATASET_FILE))?;
    let window = args.window.unwrap_or(20);
    let intervals = if args.intervals.is_empty() {
        vec![20, 40, 60, 80, 100]
    } else {
        args.intervals
    };
    let points = drift_profile(&data, window, &intervals, &ccfg)?;
    emit(args.out.or_else(|| file.out.clone()), &drift_csv(&points), args.force)
}
