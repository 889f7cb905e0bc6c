//! Calibrated sequential recommendation at desk scale.
//!
//! A recommender that only chases accuracy tends to hand every user the same
//! handful of popular categories, even when their own history says otherwise.
//! This crate measures that mismatch and corrects it at ranking time:
//!
//! - [`corpus`] — TSV/JSON ingestion, leave-one-out splits, and a synthetic
//!   generator whose users drift between category preferences over time.
//! - [`calibration`] — category distributions over histories and slates,
//!   KL-based miscalibration with recency weighting, and drift profiling.
//! - [`backbone`] — a small sequential scoring model (recency-pooled item
//!   embeddings) trained with a pairwise objective that can subtract each
//!   item's miscalibration cost from its rank margin.
//! - [`rerank`] — greedy slate construction trading relevance against the
//!   marginal miscalibration of each candidate, with a position-dependent
//!   weight schedule.
//! - [`evaluate`] — hit rate, nDCG, mean miscalibration, and the
//!   accuracy/calibration sweep over trade-off strengths.
//!
//! Everything downstream of a seed is deterministic: given the same inputs
//! and configuration, training produces byte-identical checkpoints and
//! reranking byte-identical slates, with or without the `parallel` feature.
//!
//! # Example
//!
//! ```
//! use calrank_core::calibration::CalibrationConfig;
//! use calrank_core::corpus::{self, SyntheticConfig};
//! use calrank_core::{backbone, evaluate, rerank};
//!
//! let data = corpus::generate_synthetic(&SyntheticConfig {
//!     users: 40,
//!     items: 30,
//!     categories: 4,
//!     mean_length: 12.0,
//!     drift_rate: 0.1,
//!     concentration: 1.0,
//!     seed: 7,
//! })?;
//! let split = corpus::leave_one_out_split(data);
//!
//! let calib = CalibrationConfig::default();
//! let train_cfg = backbone::TrainingConfig { epochs: 2, dim: 8, ..Default::default() };
//! let trained = backbone::train(&split, &train_cfg, &calib)?;
//!
//! let rerank_cfg = rerank::RerankConfig { lambda: 0.5, ..Default::default() };
//! let report = evaluate::evaluate(&trained.params, &split, &rerank_cfg, &calib)?;
//! assert!(report.hr >= 0.0 && report.hr <= 1.0);
//! # Ok::<(), calrank_core::Error>(())
//! ```

pub mod backbone;
pub mod calibration;
pub mod corpus;
pub mod evaluate;
pub mod rerank;

mod error;
mod par;

pub use error::{Error, Result};

use std::fs;
use std::io::Write as _;
use std::path::Path;

/// Write `contents` to `path` atomically: stage into a sibling temp file,
/// then rename over the destination so readers never observe a torn write.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let tmp = path.with_extension(match path.extension() {
        Some(ext) => format!("{}.tmp", ext.to_string_lossy()),
        None => "tmp".to_string(),
    });
    let mut file = fs::File::create(&tmp)?;
    file.write_all(contents.as_bytes())?;
    file.sync_all()?;
    drop(file);
    fs::rename(&tmp, path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn write_atomic_replaces_existing_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.tsv");
        write_atomic(&path, "first\n").unwrap();
        write_atomic(&path, "second\n").unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "second\n");
        // No stray staging file left behind.
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
