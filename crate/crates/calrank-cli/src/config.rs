//! Layered run configuration.
//!
//! Every setting resolves through the same precedence chain:
//!
//! ```text
//! command-line flag  >  config-file value  >  checkpoint echo  >  built-in default
//! ```
//!
//! (the checkpoint layer exists only for `alpha`/`beta`, so commands that
//! consume a trained model default to its training-time calibration). The
//! config file is JSON with one optional section per concern plus optional
//! input/output paths; unknown keys anywhere are rejected rather than
//! ignored, since a typoed key silently falling back to a default is the
//! worst possible outcome for a reproducibility tool.

use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use serde::Deserialize;

use calrank_core::backbone::{CheckpointEcho, LossMode, TrainingConfig};
use calrank_core::calibration::{CalibrationConfig, CalibrationMetric};
use calrank_core::corpus::SyntheticConfig;
use calrank_core::rerank::{CandidatePool, RerankConfig, ScheduleMode};

use crate::{usage, CmdResult};

// ---------------------------------------------------------------------------
// File layer
// ---------------------------------------------------------------------------

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FileConfig {
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub interactions: Option<PathBuf>,
    pub catalog: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub calibration: CalibrationSection,
    pub training: TrainingSection,
    pub rerank: RerankSection,
    pub synthetic: SyntheticSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrationSection {
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub metric: Option<CalibrationMetric>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingSection {
    pub learning_rate: Option<f64>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub gamma: Option<f64>,
    pub dim: Option<usize>,
    pub rho: Option<f64>,
    pub max_seq_len: Option<usize>,
    pub init_scale: Option<f64>,
    pub seed: Option<u64>,
    pub loss_mode: Option<LossMode>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RerankSection {
    pub lambda: Option<f64>,
    pub k: Option<usize>,
    pub schedule: Option<ScheduleMode>,
    pub candidate_pool: Option<CandidatePool>,
    pub exclude_train_items: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticSection {
    pub users: Option<usize>,
    pub items: Option<usize>,
    pub categories: Option<usize>,
    pub mean_length: Option<f64>,
    pub drift_rate: Option<f64>,
    pub concentration: Option<f64>,
    pub seed: Option<u64>,
}

impl FileConfig {
    /// Load the config file, or an empty layer if no path was given.
    pub fn load(path: Option<&Path>) -> CmdResult<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = fs::read_to_string(path)
            .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| usage(format!("bad config {}: {e}", path.display())))
    }
}

// ---------------------------------------------------------------------------
// Flag layer
// ---------------------------------------------------------------------------

#[derive(Debug, Default, Args)]
pub struct CalibrationOpts {
    /// Recency decay base in (0, 1]
    #[arg(long, value_name = "A")]
    pub alpha: Option<f64>,
    /// Smoothing mass pulled from the target, in [0, 1)
    #[arg(long, value_name = "B")]
    pub beta: Option<f64>,
    /// History target: sequential or static
    #[arg(long, value_name = "MODE")]
    pub metric: Option<CalibrationMetric>,
}

#[derive(Debug, Default, Args)]
pub struct TrainingOpts {
    #[arg(long, value_name = "LR")]
    pub learning_rate: Option<f64>,
    #[arg(long, value_name = "N")]
    pub epochs: Option<usize>,
    #[arg(long, value_name = "N")]
    pub batch_size: Option<usize>,
    /// Weight of the calibration-margin loss term
    #[arg(long, value_name = "G")]
    pub gamma: Option<f64>,
    /// Embedding dimension
    #[arg(long, value_name = "D")]
    pub dim: Option<usize>,
    /// State pooling decay in (0, 1]
    #[arg(long, value_name = "R")]
    pub rho: Option<f64>,
    /// Longest prefix pooled into the user state
    #[arg(long, value_name = "N")]
    pub max_seq_len: Option<usize>,
    #[arg(long, value_name = "S")]
    pub init_scale: Option<f64>,
    /// Training RNG seed (init, shuffles, negative samples)
    #[arg(long, value_name = "SEED")]
    pub seed: Option<u64>,
    /// combined, bpr_only, or cdbpr_only
    #[arg(long, value_name = "MODE")]
    pub loss_mode: Option<LossMode>,
}

#[derive(Debug, Default, Args)]
pub struct RerankOpts {
    /// Trade-off strength in [0, 1]; 0 is pure relevance
    #[arg(long, value_name = "L")]
    pub lambda: Option<f64>,
    /// Slate length
    #[arg(long, value_name = "K")]
    pub k: Option<usize>,
    /// prioritized, uniform, reverse, or none
    #[arg(long, value_name = "MODE")]
    pub schedule: Option<ScheduleMode>,
    /// full_catalog or top_n:<n>
    #[arg(long, value_name = "POOL")]
    pub candidate_pool: Option<CandidatePool>,
    /// Drop the user's own training items from the pool (true/false)
    #[arg(long, value_name = "BOOL")]
    pub exclude_train_items: Option<bool>,
}

#[derive(Debug, Default, Args)]
pub struct SyntheticOpts {
    #[arg(long, value_name = "N")]
    pub users: Option<usize>,
    #[arg(long, value_name = "N")]
    pub items: Option<usize>,
    #[arg(long, value_name = "N")]
    pub categories: Option<usize>,
    /// Mean Poisson sequence length (clamped to >= 3)
    #[arg(long, value_name = "M")]
    pub mean_length: Option<f64>,
    /// Per-interaction preference mixing rate in [0, 1]
    #[arg(long, value_name = "R")]
    pub drift_rate: Option<f64>,
    /// Dirichlet concentration of preference draws (> 0)
    #[arg(long, value_name = "C")]
    pub concentration: Option<f64>,
    /// Generator seed
    #[arg(long, value_name = "SEED")]
    pub seed: Option<u64>,
}

// ---------------------------------------------------------------------------
// Resolution
// ---------------------------------------------------------------------------

fn pick<T: Copy>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

/// Calibration settings; `echo` supplies the checkpoint layer when present.
pub fn resolve_calibration(
    file: &FileConfig,
    opts: &CalibrationOpts,
    echo: Option<&CheckpointEcho>,
) -> CalibrationConfig {
    let base = CalibrationConfig::default();
    CalibrationConfig {
        alpha: pick(opts.alpha, file.calibration.alpha, echo.map_or(base.alpha, |e| e.alpha)),
        beta: pick(opts.beta, file.calibration.beta, echo.map_or(base.beta, |e| e.beta)),
        metric: pick(opts.metric, file.calibration.metric, base.metric),
    }
}

pub fn resolve_training(file: &FileConfig, opts: &TrainingOpts) -> TrainingConfig {
    let base = TrainingConfig::default();
    let s = &file.training;
    TrainingConfig {
        learning_rate: pick(opts.learning_rate, s.learning_rate, base.learning_rate),
        epochs: pick(opts.epochs, s.epochs, base.epochs),
        batch_size: pick(opts.batch_size, s.batch_size, base.batch_size),
        gamma: pick(opts.gamma, s.gamma, base.gamma),
        dim: pick(opts.dim, s.dim, base.dim),
        rho: pick(opts.rho, s.rho, base.rho),
        max_seq_len: pick(opts.max_seq_len, s.max_seq_len, base.max_seq_len),
        init_scale: pick(opts.init_scale, s.init_scale, base.init_scale),
        seed: pick(opts.seed, s.seed, base.seed),
        loss_mode: pick(opts.loss_mode, s.loss_mode, base.loss_mode),
    }
}

pub fn resolve_rerank(file: &FileConfig, opts: &RerankOpts) -> RerankConfig {
    let base = RerankConfig::default();
    let s = &file.rerank;
    RerankConfig {
        lambda: pick(opts.lambda, s.lambda, base.lambda),
        k: pick(opts.k, s.k, base.k),
        schedule: pick(opts.schedule, s.schedule, base.schedule),
        candidate_pool: pick(opts.candidate_pool, s.candidate_pool, base.candidate_pool),
        exclude_train_items: pick(
            opts.exclude_train_items,
            s.exclude_train_items,
            base.exclude_train_items,
        ),
    }
}

/// Synthetic generation requires explicit sizes; the rest have defaults.
pub fn resolve_synthetic(file: &FileConfig, opts: &SyntheticOpts) -> CmdResult<SyntheticConfig> {
    let s = &file.synthetic;
    let require = |flag: Option<usize>, file: Option<usize>, name: &str| {
        flag.or(file)
            .ok_or_else(|| usage(format!("synthetic {name} missing (flag or config file)")))
    };
    Ok(SyntheticConfig {
        users: require(opts.users, s.users, "users")?,
        items: require(opts.items, s.items, "items")?,
        categories: require(opts.categories, s.categories, "categories")?,
        mean_length: pick(opts.mean_length, s.mean_length, 40.0),
        drift_rate: pick(opts.drift_rate, s.drift_rate, 0.2),
        concentration: pick(opts.concentration, s.concentration, 1.0),
        seed: pick(opts.seed, s.seed, 42),
    })
}

/// First present path wins: flag, then config file.
pub fn resolve_path(
    flag: Option<PathBuf>,
    file: Option<&PathBuf>,
    name: &str,
) -> CmdResult<PathBuf> {
    flag.or_else(|| file.cloned())
        .ok_or_else(|| usage(format!("--{name} missing (flag or config file)")))
}

// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;

    /// A config file that moves every key off its default.
    const FULL: &str = r#"{
        "data": "prepared",
        "out": "result",
        "calibration": {"alpha": 0.8, "beta": 0.05, "metric": "static"},
        "training": {
            "learning_rate": 0.01, "epochs": 7, "batch_size": 32,
            "gamma": 0.4, "dim": 12, "rho": 0.6, "max_seq_len": 9,
            "init_scale": 0.2, "seed": 99, "loss_mode": "cdbpr_only"
        },
        "rerank": {
            "lambda": 0.9, "k": 5, "schedule": "reverse",
            "candidate_pool": {"top_n": 64}, "exclude_train_items": false
        },
        "synthetic": {
            "users": 10, "items": 30, "categories": 3, "mean_length": 8.0,
            "drift_rate": 0.5, "concentration": 0.7, "seed": 4
        }
    }"#;

    fn full_config() -> FileConfig {
        serde_json::from_str(FULL).unwrap()
    }

    #[test]
    fn defaults_apply_when_nothing_is_set() {
        let file = FileConfig::default();
        assert_eq!(
            resolve_calibration(&file, &CalibrationOpts::default(), None),
            CalibrationConfig::default()
        );
        assert_eq!(
            resolve_training(&file, &TrainingOpts::default()),
            TrainingConfig::default()
        );
        assert_eq!(
            resolve_rerank(&file, &RerankOpts::default()),
            RerankConfig::default()
        );
    }

    #[test]
    fn file_values_override_defaults_for_every_key() {
        let file = full_config();
        let calib = resolve_calibration(&file, &CalibrationOpts::default(), None);
        assert_eq!(calib.alpha, 0.8);
        assert_eq!(calib.beta, 0.05);
        assert_eq!(calib.metric, CalibrationMetric::Static);

        let train = resolve_training(&file, &TrainingOpts::default());
        assert_eq!(train.learning_rate, 0.01);
        assert_eq!(train.epochs, 7);
        assert_eq!(train.batch_size, 32);
        assert_eq!(train.gamma, 0.4);
        assert_eq!(train.dim, 12);
        assert_eq!(train.rho, 0.6);
        assert_eq!(train.max_seq_len, 9);
        assert_eq!(train.init_scale, 0.2);
        assert_eq!(train.seed, 99);
        assert_eq!(train.loss_mode, LossMode::CdbprOnly);

        let rerank = resolve_rerank(&file, &RerankOpts::default());
        assert_eq!(rerank.lambda, 0.9);
        assert_eq!(rerank.k, 5);
        assert_eq!(rerank.schedule, ScheduleMode::Reverse);
        assert_eq!(rerank.candidate_pool, CandidatePool::TopN(64));
        assert!(!rerank.exclude_train_items);

        let synth = resolve_synthetic(&file, &SyntheticOpts::default()).unwrap();
        assert_eq!(synth.users, 10);
        assert_eq!(synth.items, 30);
        assert_eq!(synth.categories, 3);
        assert_eq!(synth.mean_length, 8.0);
        assert_eq!(synth.drift_rate, 0.5);
        assert_eq!(synth.concentration, 0.7);
        assert_eq!(synth.seed, 4);
    }

    #[test]
    fn flags_override_file_values_for_every_key() {
        let file = full_config();
        let calib = resolve_calibration(
            &file,
            &CalibrationOpts {
                alpha: Some(0.95),
                beta: Some(0.02),
                metric: Some(CalibrationMetric::Sequential),
            },
            None,
        );
        assert_eq!(calib.alpha, 0.95);
        assert_eq!(calib.beta, 0.02);
        assert_eq!(calib.metric, CalibrationMetric::Sequential);

        let train = resolve_training(
            &file,
            &TrainingOpts {
                learning_rate: Some(0.5),
                epochs: Some(1),
                batch_size: Some(8),
                gamma: Some(0.0),
                dim: Some(2),
                rho: Some(1.0),
                max_seq_len: Some(3),
                init_scale: Some(0.01),
                seed: Some(1),
                loss_mode: Some(LossMode::BprOnly),
            },
        );
        assert_eq!(train.learning_rate, 0.5);
        assert_eq!(train.epochs, 1);
        assert_eq!(train.batch_size, 8);
        assert_eq!(train.gamma, 0.0);
        assert_eq!(train.dim, 2);
        assert_eq!(train.rho, 1.0);
        assert_eq!(train.max_seq_len, 3);
        assert_eq!(train.init_scale, 0.01);
        assert_eq!(train.seed, 1);
        assert_eq!(train.loss_mode, LossMode::BprOnly);

        let rerank = resolve_rerank(
            &file,
            &RerankOpts {
                lambda: Some(0.1),
                k: Some(20),
                schedule: Some(ScheduleMode::None),
                candidate_pool: Some(CandidatePool::FullCatalog),
                exclude_train_items: Some(true),
            },
        );
        assert_eq!(rerank.lambda, 0.1);
        assert_eq!(rerank.k, 20);
        assert_eq!(rerank.schedule, ScheduleMode::None);
        assert_eq!(rerank.candidate_pool, CandidatePool::FullCatalog);
        assert!(rerank.exclude_train_items);

        let synth = resolve_synthetic(
            &file,
            &SyntheticOpts {
                users: Some(1),
                items: Some(2),
                categories: Some(1),
                mean_length: Some(3.0),
                drift_rate: Some(0.0),
                concentration: Some(2.0),
                seed: Some(8),
            },
        )
        .unwrap();
        assert_eq!(
            (synth.users, synth.items, synth.categories),
            (1, 2, 1)
        );
        assert_eq!(synth.mean_length, 3.0);
        assert_eq!(synth.drift_rate, 0.0);
        assert_eq!(synth.concentration, 2.0);
        assert_eq!(synth.seed, 8);
    }

    #[test]
    fn checkpoint_echo_sits_between_file_and_defaults() {
        let echo = CheckpointEcho { gamma: 0.1, alpha: 0.77, beta: 0.033, seed: 5 };
        // Nothing else set: echo wins over the built-in default.
        let calib =
            resolve_calibration(&FileConfig::default(), &CalibrationOpts::default(), Some(&echo));
        assert_eq!(calib.alpha, 0.77);
        assert_eq!(calib.beta, 0.033);

        // File value beats the echo.
        let calib = resolve_calibration(&full_config(), &CalibrationOpts::default(), Some(&echo));
        assert_eq!(calib.alpha, 0.8);

        // Flag beats both.
        let calib = resolve_calibration(
            &full_config(),
            &CalibrationOpts { alpha: Some(0.5), ..Default::default() },
            Some(&echo),
        );
        assert_eq!(calib.alpha, 0.5);
    }

    #[test]
    fn synthetic_sizes_are_required() {
        let err = resolve_synthetic(&FileConfig::default(), &SyntheticOpts::default())
            .unwrap_err();
        assert_eq!(err.code, 2);
        assert!(err.message.contains("users"));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        for bad in [
            r#"{"trainig": {}}"#,
            r#"{"training": {"epocs": 3}}"#,
            r#"{"rerank": {"lamda": 0.5}}"#,
        ] {
            assert!(
                serde_json::from_str::<FileConfig>(bad).is_err(),
                "{bad} should be rejected"
            );
        }
    }

    #[test]
    fn paths_resolve_flag_first() {
        let file = full_config();
        let p = resolve_path(Some(PathBuf::from("flagged")), file.data.as_ref(), "data").unwrap();
        assert_eq!(p, PathBuf::from("flagged"));
        let p = resolve_path(None, file.data.as_ref(), "data").unwrap();
        assert_eq!(p, PathBuf::from("prepared"));
        let err = resolve_path(None, None, "data").unwrap_err();
        assert_eq!(err.code, 2);
    }
}
