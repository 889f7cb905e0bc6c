//! Slate quality metrics and the accuracy/calibration trade-off sweep.
//!
//! Accuracy is leave-one-out: each test user has exactly one held-out target,
//! so HR@K is containment and nDCG@K reduces to `1 / log2(rank + 1)` at the
//! target's position. Miscalibration is always reported against the
//! *sequential* (recency-weighted) history target, regardless of which target
//! the slates were optimized for — a static-target run is still judged by how
//! well it matches where the user's tastes currently are.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::backbone::ModelParams;
use crate::calibration::{
    history_distribution, sequential_miscalibration, CalibrationConfig, CalibrationMetric,
};
use crate::corpus::{Catalog, SplitDataset};
use crate::rerank::{rerank_all, RecommendationList, RerankConfig, ScheduleMode};
use crate::{Error, Result};

/// Metrics of one (schedule, lambda) evaluation cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schedule: ScheduleMode,
    /// Which history target the slates were *built* against.
    pub metric: CalibrationMetric,
    pub lambda: f64,
    pub k: usize,
    pub hr: f64,
    pub ndcg: f64,
    /// Mean sequential miscalibration of the slates.
    pub mean_skl: f64,
    /// Users contributing to the means.
    pub users: usize,
}

fn check_domains(
    lists: &BTreeMap<u32, RecommendationList>,
    truth: &BTreeMap<u32, u32>,
) -> Result<()> {
    if truth.is_empty() {
        return Err(Error::EmptyInput("no users to evaluate"));
    }
    for user in truth.keys() {
        if !lists.contains_key(user) {
            return Err(Error::Validation(format!("user {user} has no slate")));
        }
    }
    Ok(())
}

/// Fraction of users whose held-out item appears anywhere in their slate.
pub fn hit_rate(
    lists: &BTreeMap<u32, RecommendationList>,
    truth: &BTreeMap<u32, u32>,
) -> Result<f64> {
    check_domains(lists, truth)?;
    let hits = truth
        .iter()
        .filter(|(user, target)| lists[user].items.contains(target))
        .count();
    Ok(hits as f64 / truth.len() as f64)
}

/// Mean `1 / log2(rank + 1)` of the held-out item (0 when missed). With a
/// single relevant item the ideal DCG is 1, so this is already normalized.
pub fn ndcg(
    lists: &BTreeMap<u32, RecommendationList>,
    truth: &BTreeMap<u32, u32>,
) -> Result<f64> {
    check_domains(lists, truth)?;
    let sum: f64 = truth
        .iter()
        .map(|(user, target)| {
            match lists[user].items.iter().position(|item| item == target) {
                Some(idx) => 1.0 / ((idx + 2) as f64).log2(),
                None => 0.0,
            }
        })
        .sum();
    Ok(sum / truth.len() as f64)
}

/// Mean miscalibration of the slates against each user's sequential history
/// target. `histories` must cover every slate user; `config.metric` is
/// overridden to sequential for the target, while its `alpha` and `beta`
/// apply as usual.
pub fn mean_sequential_miscalibration(
    lists: &BTreeMap<u32, RecommendationList>,
    histories: &BTreeMap<u32, Vec<u32>>,
    catalog: &Catalog,
    config: &CalibrationConfig,
) -> Result<f64> {
    if lists.is_empty() {
        return Err(Error::EmptyInput("no slates to evaluate"));
    }
    let seq_config = config.sequentialized();
    let mut sum = 0.0;
    for (user, list) in lists {
        let history = histories
            .get(user)
            .ok_or_else(|| Error::Validation(format!("user {user} has no history")))?;
        let target = history_distribution(history, catalog, &seq_config)?;
        sum += sequential_miscalibration(&target, &list.items, catalog, &seq_config)?;
    }
    Ok(sum / lists.len() as f64)
}

/// Rerank every test user under one configuration and report HR, nDCG, and
/// mean sequential miscalibration at the slate length `rcfg.k`.
pub fn evaluate(
    params: &ModelParams,
    split: &SplitDataset,
    rcfg: &RerankConfig,
    ccfg: &CalibrationConfig,
) -> Result<EvalReport> {
    let lists = rerank_all(params, split, rcfg, ccfg)?;
    let histories = split.test_prefixes();
    Ok(EvalReport {
        schedule: rcfg.schedule,
        metric: ccfg.metric,
        lambda: rcfg.lambda,
        k: rcfg.k,
        hr: hit_rate(&lists, &split.test)?,
        ndcg: ndcg(&lists, &split.test)?,
        mean_skl: mean_sequential_miscalibration(
            &lists,
            &histories,
            &split.train.catalog,
            ccfg,
        )?,
        users: split.test.len(),
    })
}

/// Evaluate the full `schedules x lambdas` grid (schedule-major order),
/// holding everything else in `rcfg`/`ccfg` fixed.
pub fn lambda_sweep(
    params: &ModelParams,
    split: &SplitDataset,
    lambdas: &[f64],
    schedules: &[ScheduleMode],
    rcfg: &RerankConfig,
    ccfg: &CalibrationConfig,
) -> Result<Vec<EvalReport>> {
    if lambdas.is_empty() || schedules.is_empty() {
        return Err(Error::EmptyInput("sweep needs at least one lambda and one schedule"));
    }
    let mut reports = Vec::with_capacity(lambdas.len() * schedules.len());
    for &schedule in schedules {
        for &lambda in lambdas {
            let cell = RerankConfig { lambda, schedule, ..*rcfg };
            reports.push(evaluate(params, split, &cell, ccfg)?);
        }
    }
    Ok(reports)
}

/// Render reports as `schedule,metric,lambda,k,hr,ndcg,mean_skl,users` CSV.
#[must_use]
pub fn sweep_csv(reports: &[EvalReport]) -> String {
    let mut out = String::from("schedule,metric,lambda,k,hr,ndcg,mean_skl,users\n");
    for r in reports {
        let metric = match r.metric {
            CalibrationMetric::Sequential => "sequential",
            CalibrationMetric::Static => "static",
        };
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.schedule, metric, r.lambda, r.k, r.hr, r.ndcg, r.mean_skl, r.users
        ));
    }
    out
}

// ---------------------------------------------------------------------------
