//! Category distributions and miscalibration measures.
//!
//! A user's history induces a distribution over categories; so does any
//! recommendation slate. Miscalibration is the KL divergence between the two,
//! and everything here exists to compute it precisely and cheaply:
//!
//! | Quantity             | Definition                                           |
//! |----------------------|------------------------------------------------------|
//! | item distribution    | uniform over the item's categories                   |
//! | history distribution | decay-weighted mean of item distributions, weight `alpha^(T-t)` |
//! | list distribution    | plain mean of item distributions                     |
//! | smoothing            | `(1-beta) * q + beta * p` to keep KL finite          |
//! | miscalibration       | `KL(history ‖ smoothed list)`, `0` for empty lists   |
//!
//! With the *sequential* metric, `alpha < 1` down-weights old interactions so
//! the target tracks where the user's tastes are now; the *static* metric
//! fixes the decay base at exactly `1`, reproducing the classic unweighted
//! target. [`GreedyCalibrationState`] supports slate construction with `O(C)`
//! marginal-miscalibration queries instead of recomputing from scratch, and
//! [`drift_profile`] quantifies how fast preferences move by comparing
//! category windows at increasing separations.

use serde::{Deserialize, Serialize};

use crate::corpus::{Catalog, Dataset};
use crate::par::ordered_map;
use crate::{Error, Result};

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// Which history weighting the miscalibration target uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationMetric {
    /// Recency-decayed target: interaction `t` of `T` weighs `alpha^(T-t)`.
    Sequential,
    /// Unweighted target; the decay base is treated as exactly `1`.
    Static,
}

impl std::fmt::Display for CalibrationMetric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CalibrationMetric::Sequential => "sequential",
            CalibrationMetric::Static => "static",
        })
    }
}

impl std::str::FromStr for CalibrationMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sequential" => Ok(CalibrationMetric::Sequential),
            "static" => Ok(CalibrationMetric::Static),
            other => Err(Error::Config(format!(
                "unknown metric {other:?} (expected sequential or static)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationConfig {
    /// Recency decay base, in `(0, 1]`. Ignored under [`CalibrationMetric::Static`].
    pub alpha: f64,
    /// Smoothing mass pulled from the target distribution, in `[0, 1)`.
    pub beta: f64,
    pub metric: CalibrationMetric,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self { alpha: 0.9, beta: 0.01, metric: CalibrationMetric::Sequential }
    }
}

impl CalibrationConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.alpha.is_finite() || self.alpha <= 0.0 || self.alpha > 1.0 {
            return Err(Error::Config(format!(
                "alpha must lie in (0, 1], got {}",
                self.alpha
            )));
        }
        if !self.beta.is_finite() || !(0.0..1.0).contains(&self.beta) {
            return Err(Error::Config(format!(
                "beta must lie in [0, 1), got {}",
                self.beta
            )));
        }
        Ok(())
    }

    /// Same parameters with the metric forced to [`CalibrationMetric::Sequential`].
    #[must_use]
    pub fn sequentialized(&self) -> Self {
        Self { metric: CalibrationMetric::Sequential, ..*self }
    }

    /// Effective decay base: `alpha` when sequential, exactly `1` when static.
    #[must_use]
    fn decay_base(&self) -> f64 {
        match self.metric {
            CalibrationMetric::Sequential => self.alpha,
            CalibrationMetric::Static => 1.0,
        }
    }
}

// ---------------------------------------------------------------------------
// Distributions
// ---------------------------------------------------------------------------

/// A probability distribution over the catalog's categories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryDistribution(Vec<f64>);

impl CategoryDistribution {
    /// Validate and wrap: entries must be finite, non-negative, and sum to 1
    /// within `1e-9`.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::EmptyInput("distribution over zero categories"));
        }
        let mut sum = 0.0;
        for &p in &probs {
            if !p.is_finite() || p < 0.0 {
                return Err(Error::Numeric(format!("bad probability {p}")));
            }
            sum += p;
        }
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Numeric(format!("probabilities sum to {sum}, not 1")));
        }
        Ok(Self(probs))
    }

    /// Wrap values already known to form a distribution.
    fn from_normalized(probs: Vec<f64>) -> Self {
        Self(probs)
    }

    #[must_use]
    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    #[must_use]
    pub fn len(&self) -> usize {
        self.0.len()
    }

    #[must_use]
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Uniform distribution over the categories of `item`: an item tagged with
/// `m` categories contributes `1/m` to each.
pub fn item_distribution(catalog: &Catalog, item: u32) -> Result<CategoryDistribution> {
    let cats = catalog.categories_of(item)?;
    let mut probs = vec![0.0; catalog.num_categories()];
    let w = 1.0 / cats.len() as f64;
    for &c in cats {
        probs[c as usize] = w;
    }
    Ok(CategoryDistribution::from_normalized(probs))
}

/// Accumulate `weight / |cats|` onto each of the item's categories.
#[inline]
fn add_item_mass(mass: &mut [f64], catalog: &Catalog, item: u32, weight: f64) {
    let cats = catalog.cats(item);
    let w = weight / cats.len() as f64;
    for &c in cats {
        mass[c as usize] += w;
    }
}

/// Decay-weighted category distribution of an interaction history.
///
/// Interaction `t` (1-based, `T` total) carries weight `base^(T-t)`, so the
/// most recent item always weighs 1 and older items fade geometrically. The
/// static metric sets the base to exactly 1, which recovers plain frequencies.
pub fn history_distribution(
    items: &[u32],
    catalog: &Catalog,
    config: &CalibrationConfig,
) -> Result<CategoryDistribution> {
    if items.is_empty() {
        return Err(Error::EmptyInput("history distribution of an empty sequence"));
    }
    let base = config.decay_base();
    let mut mass = vec![0.0; catalog.num_categories()];
    let mut denom = 0.0;
    let last = items.len() - 1;
    for (t, &item) in items.iter().enumerate() {
        let weight = base.powi((last - t) as i32);
        denom += weight;
        add_item_mass(&mut mass, catalog, item, weight);
    }
    for m in mass.iter_mut() {
        *m /= denom;
    }
    Ok(CategoryDistribution::from_normalized(mass))
}

/// Unweighted mean of the items' category distributions.
pub fn list_distribution(items: &[u32], catalog: &Catalog) -> Result<CategoryDistribution> {
    if items.is_empty() {
        return Err(Error::EmptyInput("list distribution of an empty list"));
    }
    let mut mass = vec![0.0; catalog.num_categories()];
    for &item in items {
        add_item_mass(&mut mass, catalog, item, 1.0);
    }
    let n = items.len() as f64;
    for m in mass.iter_mut() {
        *m /= n;
    }
    Ok(CategoryDistribution::from_normalized(mass))
}

/// Mix `beta` of the target `p` into `q`: wherever `p` has mass, the result
/// does too, so `KL(p ‖ smooth(q, p, beta))` stays finite for `beta > 0`.
#[must_use]
pub fn smooth(q: &CategoryDistribution, p: &CategoryDistribution, beta: f64) -> CategoryDistribution {
    assert_eq!(q.len(), p.len(), "distribution lengths differ");
    let probs = q
        .probs()
        .iter()
        .zip(p.probs())
        .map(|(&qc, &pc)| (1.0 - beta) * qc + beta * pc)
        .collect();
    CategoryDistribution::from_normalized(probs)
}

/// `KL(p ‖ q) = Σ_c p_c ln(p_c / q_c)`, with the convention that categories
/// where `p_c = 0` contribute nothing regardless of `q_c`.
///
/// Errors with [`Error::Divergence`] if `p` puts mass on a category where `q`
/// has none. The result is clamped to `0` from below: true KL is non-negative
/// and near-identical arguments can otherwise round to `-1e-17`.
pub fn kl_divergence(p: &CategoryDistribution, q: &CategoryDistribution) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::Validation(format!(
            "KL over mismatched supports ({} vs {} categories)",
            p.len(),
            q.len()
        )));
    }
    let mut sum = 0.0;
    for (c, (&pc, &qc)) in p.probs().iter().zip(q.probs()).enumerate() {
        if pc > 0.0 {
            if qc <= 0.0 {
                return Err(Error::Divergence { category: c });
            }
            sum += pc * (pc / qc).ln();
        }
    }
    Ok(sum.max(0.0))
}

/// Miscalibration of `list` against a target distribution:
/// `KL(target ‖ smooth(list_distribution, target, beta))`.
///
/// The empty list is defined to have miscalibration `0`, which anchors greedy
/// slate construction.
pub fn sequential_miscalibration(
    target: &CategoryDistribution,
    list: &[u32],
    catalog: &Catalog,
    config: &CalibrationConfig,
) -> Result<f64> {
    if list.is_empty() {
        return Ok(0.0);
    }
    let q = list_distribution(list, catalog)?;
    kl_divergence(target, &smooth(&q, target, config.beta))
}

// ---------------------------------------------------------------------------
// Incremental slate state
// ---------------------------------------------------------------------------

/// Miscalibration bookkeeping for a slate under construction.
///
/// Holds the un-normalized category mass of the items pushed so far, so the
/// change in miscalibration from appending any candidate is a single `O(C)`
/// pass — the greedy step over a pool of `n` candidates costs `O(nC)` instead
/// of `O(nkC)`. Pushing items in list order reproduces, bit for bit, what
/// [`sequential_miscalibration`] computes on the explicit list.
#[derive(Debug, Clone)]
pub struct GreedyCalibrationState {
    target: CategoryDistribution,
    beta: f64,
    mass: Vec<f64>,
    len: usize,
    current: f64,
}

impl GreedyCalibrationState {
    #[must_use]
    pub fn new(target: CategoryDistribution, config: &CalibrationConfig) -> Self {
        let mass = vec![0.0; target.len()];
        Self { target, beta: config.beta, mass, len: 0, current: 0.0 }
    }

    #[must_use]
    pub fn len(&self) -> usize {
        self.len
    }

    #[must_use]
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Miscalibration of the slate built so far (`0` while empty).
    #[must_use]
    pub fn miscalibration(&self) -> f64 {
        self.current
    }

    /// KL term of the hypothetical slate `current ∪ {candidate}` given its
    /// un-normalized mass. Divergence (only possible when `beta == 0`) shows
    /// up as `+inf` rather than an error so greedy comparison stays total.
    fn skl_with(&self, candidate_cats: &[u32], len: usize) -> f64 {
        let w = 1.0 / candidate_cats.len() as f64;
        let n = len as f64;
        let mut sum = 0.0;
        for (c, (&m, &t)) in self.mass.iter().zip(self.target.probs()).enumerate() {
            let mut mc = m;
            if candidate_cats.contains(&(c as u32)) {
                mc += w;
            }
            let q = mc / n;
            let qs = (1.0 - self.beta) * q + self.beta * t;
            if t > 0.0 {
                sum += t * (t / qs).ln();
            }
        }
        sum.max(0.0)
    }

    /// Change in miscalibration from appending `candidate` to the slate.
    #[must_use]
    pub fn delta_miscalibration(&self, candidate: u32, catalog: &Catalog) -> f64 {
        self.skl_with(catalog.cats(candidate), self.len + 1) - self.current
    }

    /// Append `item` to the slate and refresh the cached miscalibration.
    pub fn push(&mut self, item: u32, catalog: &Catalog) {
        self.current = self.skl_with(catalog.cats(item), self.len + 1);
        add_item_mass(&mut self.mass, catalog, item, 1.0);
        self.len += 1;
    }
}

// ---------------------------------------------------------------------------
// Drift profiling
// ---------------------------------------------------------------------------

/// Mean KL between category windows separated by `interval` interactions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftPoint {
    pub interval: usize,
    pub mean_kl: f64,
    /// Number of (user, anchor) samples averaged.
    pub count: usize,
}

/// How quickly do users' category preferences move?
///
/// For every user, every interval in `intervals`, and every anchor position
/// where both fit, this compares the unweighted category distribution of the
/// `window` interactions starting at the anchor against the window starting
/// `interval` later (the later window smoothed toward the earlier with
/// `config.beta`). Stationary preferences give a flat profile at the sampling
/// noise floor; drifting preferences make the mean KL grow with the interval.
///
/// Intervals that fit no sequence are omitted from the result.
pub fn drift_profile(
    dataset: &Dataset,
    window: usize,
    intervals: &[usize],
    config: &CalibrationConfig,
) -> Result<Vec<DriftPoint>> {
    if window == 0 {
        return Err(Error::Config("drift window must be positive".to_string()));
    }
    if intervals.is_empty() {
        return Err(Error::EmptyInput("no drift intervals requested"));
    }
    if let Some(&bad) = intervals.iter().find(|&&i| i == 0) {
        return Err(Error::Config(format!("drift interval must be positive, got {bad}")));
    }
    config.validate()?;

    let catalog = &dataset.catalog;
    // Per user, per interval: (sum of KL, sample count). Users are
    // independent, so map in parallel and reduce sequentially in user order.
    let per_user: Vec<Result<Vec<(f64, usize)>>> = ordered_map(&dataset.sequences, |seq| {
        let items = &seq.items;
        let mut acc = vec![(0.0, 0usize); intervals.len()];
        for (slot, &interval) in intervals.iter().enumerate() {
            if items.len() < window + interval {
                continue;
            }
            for anchor in 0..=(items.len() - window - interval) {
                let early = list_distribution(&items[anchor..anchor + window], catalog)?;
                let late = list_distribution(
                    &items[anchor + interval..anchor + interval + window],
                    catalog,
                )?;
                let kl = kl_divergence(&early, &smooth(&late, &early, config.beta))?;
                acc[slot].0 += kl;
                acc[slot].1 += 1;
            }
        }
        Ok(acc)
    });

    let mut totals = vec![(0.0, 0usize); intervals.len()];
    for user_acc in per_user {
        for (slot, (sum, count)) in user_acc?.into_iter().enumerate() {
            totals[slot].0 += sum;
            totals[slot].1 += count;
        }
    }

    Ok(intervals
        .iter()
        .zip(totals)
        .filter(|&(_, (_, count))| count > 0)
        .map(|(&interval, (sum, count))| DriftPoint {
            interval,
            mean_kl: sum / count as f64,
            count,
        })
        .collect())
}

/// Render drift points as `interval,mean_kl,count` CSV.
#[must_use]
pub fn drift_csv(points: &[DriftPoint]) -> String {
    let mut out = String::from("interval,mean_kl,count\n");
    for p in points {
        out.push_str(&format!("{},{},{}\n", p.interval, p.mean_kl, p.count));
    }
    out
}

// ---------------------------------------------------------------------------
