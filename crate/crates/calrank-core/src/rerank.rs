//! Greedy slate construction trading relevance against miscalibration.
//!
//! Position `k` (1-based) of the slate picks, from the remaining candidates,
//! the item maximizing
//!
//! ```text
//! (1 - w_k) * score(i)  -  w_k * Δ_i
//! ```
//!
//! where `Δ_i` is the change in slate miscalibration from appending `i` (an
//! `O(C)` query against [`GreedyCalibrationState`]) and `w_k` follows the
//! configured [`ScheduleMode`]:
//!
//! | mode          | `w_k`            | effect                              |
//! |---------------|------------------|-------------------------------------|
//! | `prioritized` | `lambda^(1/k)`   | relevance first, calibration later  |
//! | `uniform`     | `lambda`         | constant trade-off                  |
//! | `reverse`     | `lambda^k`       | calibration first (ablation)        |
//! | `none`        | `0`              | plain top-K by score                |
//!
//! With `lambda = 0` every schedule collapses to top-K ranking. Ties are
//! broken by higher raw score, then by lower item id, so slates are
//! deterministic for any candidate-pool iteration order.

use std::collections::BTreeMap;
use std::collections::HashSet;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::backbone::{score, user_state, ModelParams};
use crate::calibration::{
    history_distribution, CalibrationConfig, GreedyCalibrationState,
};
use crate::corpus::{Catalog, Dataset, SplitDataset};
use crate::par::ordered_map;
use crate::{Error, Result};

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// Position-dependence of the relevance/calibration trade-off.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleMode {
    /// `w_k = lambda^(1/k)`: small at the top of the list, approaching 1 down
    /// the tail, so head positions stay relevance-driven.
    Prioritized,
    /// `w_k = lambda` at every position.
    Uniform,
    /// `w_k = lambda^k`: strongest at the top (the deliberately-backwards
    /// ablation).
    Reverse,
    /// `w_k = 0`: ignore calibration entirely.
    None,
}

impl ScheduleMode {
    #[must_use]
    pub fn as_str(self) -> &'static str {
        match self {
            ScheduleMode::Prioritized => "prioritized",
            ScheduleMode::Uniform => "uniform",
            ScheduleMode::Reverse => "reverse",
            ScheduleMode::None => "none",
        }
    }
}

impl std::fmt::Display for ScheduleMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScheduleMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "prioritized" => Ok(ScheduleMode::Prioritized),
            "uniform" => Ok(ScheduleMode::Uniform),
            "reverse" => Ok(ScheduleMode::Reverse),
            "none" => Ok(ScheduleMode::None),
            other => Err(Error::Config(format!(
                "unknown schedule {other:?} (expected prioritized, uniform, reverse, or none)"
            ))),
        }
    }
}

/// Which items compete for slate positions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidatePool {
    /// Every catalog item (minus exclusions).
    FullCatalog,
    /// Only the `n` highest-scoring items (minus exclusions), ties broken by
    /// lower item id.
    TopN(usize),
}

impl std::fmt::Display for CandidatePool {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CandidatePool::FullCatalog => f.write_str("full_catalog"),
            CandidatePool::TopN(n) => write!(f, "top_n:{n}"),
        }
    }
}

impl FromStr for CandidatePool {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "full_catalog" {
            return Ok(CandidatePool::FullCatalog);
        }
        if let Some(n) = s.strip_prefix("top_n:") {
            let n: usize = n.parse().map_err(|_| {
                Error::Config(format!("bad candidate pool size in {s:?}"))
            })?;
            return Ok(CandidatePool::TopN(n));
        }
        Err(Error::Config(format!(
            "unknown candidate pool {s:?} (expected full_catalog or top_n:<n>)"
        )))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RerankConfig {
    /// Trade-off strength in `[0, 1]`; `0` is pure relevance.
    pub lambda: f64,
    /// Slate length (lists may come up shorter if the pool runs out).
    pub k: usize,
    pub schedule: ScheduleMode,
    pub candidate_pool: CandidatePool,
    /// Drop the user's own training items from the pool.
    pub exclude_train_items: bool,
}

impl Default for RerankConfig {
    fn default() -> Self {
        Self {
            lambda: 0.5,
            k: 10,
            schedule: ScheduleMode::Prioritized,
            candidate_pool: CandidatePool::FullCatalog,
            exclude_train_items: true,
        }
    }
}

impl RerankConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.lambda.is_finite() || !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::Config(format!(
                "lambda must lie in [0, 1], got {}",
                self.lambda
            )));
        }
        if self.k == 0 {
            return Err(Error::Config("slate length k must be positive".to_string()));
        }
        if let CandidatePool::TopN(0) = self.candidate_pool {
            return Err(Error::Config("candidate pool size must be positive".to_string()));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Schedule
// ---------------------------------------------------------------------------

/// Calibration weight at slate position `k` (1-based).
#[must_use]
pub fn schedule_weight(lambda: f64, k: usize, mode: ScheduleMode) -> f64 {
    debug_assert!(k >= 1, "slate positions are 1-based");
    match mode {
        ScheduleMode::Prioritized => lambda.powf(1.0 / k as f64),
        ScheduleMode::Uniform => lambda,
        ScheduleMode::Reverse => lambda.powi(k as i32),
        ScheduleMode::None => 0.0,
    }
}

// ---------------------------------------------------------------------------
// Reranking
// ---------------------------------------------------------------------------

/// One user's slate, with the selection-time decomposition of each pick:
/// the greedy objective at position `k` was
/// `relevance_terms[k] - delta_terms[k]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendationList {
    pub user: u32,
    /// Slate items, best position first.
    pub items: Vec<u32>,
    /// Raw model scores of the slate items.
    pub scores: Vec<f64>,
    /// `(1 - w_k) * score` at selection time.
    pub relevance_terms: Vec<f64>,
    /// `w_k * Δ miscalibration` at selection time.
    pub delta_terms: Vec<f64>,
}

/// Build one user's slate from their interaction prefix.
///
/// The miscalibration target is the prefix's [`history_distribution`] under
/// `ccfg` (sequential or static); candidates are scored once against the
/// pooled user state and then picked greedily. Requires a non-empty prefix.
pub fn rerank(
    params: &ModelParams,
    user: u32,
    prefix: &[u32],
    catalog: &Catalog,
    rcfg: &RerankConfig,
    ccfg: &CalibrationConfig,
) -> Result<RecommendationList> {
    rcfg.validate()?;
    ccfg.validate()?;
    if prefix.is_empty() {
        return Err(Error::EmptyInput("rerank needs a non-empty prefix"));
    }

    let state = user_state(params, prefix)?;
    let excluded: HashSet<u32> = if rcfg.exclude_train_items {
        prefix.iter().copied().collect()
    } else {
        HashSet::new()
    };

    // (item, score), ascending item id.
    let mut candidates: Vec<(u32, f64)> = (0..params.num_items() as u32)
        .filter(|item| !excluded.contains(item))
        .map(|item| (item, score(params, &state, item)))
        .collect();
    if let CandidatePool::TopN(n) = rcfg.candidate_pool {
        candidates.sort_unstable_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        candidates.truncate(n);
    }
    if candidates.is_empty() {
        return Err(Error::EmptyInput("candidate pool is empty"));
    }

    let target = history_distribution(prefix, catalog, ccfg)?;
    let mut slate_state = GreedyCalibrationState::new(target, ccfg);

    let len = rcfg.k.min(candidates.len());
    let mut list = RecommendationList {
        user,
        items: Vec::with_capacity(len),
        scores: Vec::with_capacity(len),
        relevance_terms: Vec::with_capacity(len),
        delta_terms: Vec::with_capacity(len),
    };
    for k in 1..=len {
        let w = schedule_weight(rcfg.lambda, k, rcfg.schedule);
        let mut best: Option<(usize, f64, f64, f64)> = None; // (idx, obj, score, delta)
        for (idx, &(item, item_score)) in candidates.iter().enumerate() {
            let delta = slate_state.delta_miscalibration(item, catalog);
            let objective = (1.0 - w) * item_score - w * delta;
            let better = match best {
                None => true,
                Some((best_idx, best_obj, best_score, _)) => {
                    objective > best_obj
                        || (objective == best_obj
                            && (item_score > best_score
                                || (item_score == best_score
                                    && item < candidates[best_idx].0)))
                }
            };
            if better {
                best = Some((idx, objective, item_score, delta));
            }
        }
        let (idx, _, item_score, delta) = best.expect("non-empty candidate pool");
        let (item, _) = candidates.swap_remove(idx);
        slate_state.push(item, catalog);
        if !slate_state.miscalibration().is_finite() {
            return Err(Error::Numeric(
                "slate miscalibration diverged; use beta > 0".to_string(),
            ));
        }
        list.items.push(item);
        list.scores.push(item_score);
        list.relevance_terms.push((1.0 - w) * item_score);
        list.delta_terms.push(w * delta);
    }
    Ok(list)
}

/// Slates for every test user of a split, keyed by user id.
///
/// Each user's prefix is their training sequence plus the held-out validation
/// item — everything that chronologically precedes the test target. Users are
/// independent, so slates build in parallel under the `parallel` feature;
/// output is identical either way.
pub fn rerank_all(
    params: &ModelParams,
    split: &SplitDataset,
    rcfg: &RerankConfig,
    ccfg: &CalibrationConfig,
) -> Result<BTreeMap<u32, RecommendationList>> {
    let prefixes: Vec<(u32, Vec<u32>)> = split.test_prefixes().into_iter().collect();
    let catalog = &split.train.catalog;
    let lists: Vec<Result<RecommendationList>> = ordered_map(&prefixes, |(user, prefix)| {
        rerank(params, *user, prefix, catalog, rcfg, ccfg)
    });
    let mut out = BTreeMap::new();
    for list in lists {
        let list = list?;
        out.insert(list.user, list);
    }
    Ok(out)
}

/// Render slates as TSV in the dataset's raw vocabulary:
/// `user_id  rank  item_id  score  relevance_term  delta_term`.
#[must_use]
pub fn recommendations_tsv(lists: &BTreeMap<u32, RecommendationList>, data: &Dataset) -> String {
    let mut out = String::from("user_id\trank\titem_id\tscore\trelevance_term\tdelta_term\n");
    for list in lists.values() {
        for (rank, &item) in list.items.iter().enumerate() {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\n",
                data.user_token(list.user),
                rank + 1,
                data.catalog.item_token(item),
                list.scores[rank],
                list.relevance_terms[rank],
                list.delta_terms[rank],
            ));
        }
    }
    out
}

// ---------------------------------------------------------------------------
