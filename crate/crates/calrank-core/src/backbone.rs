//! Sequential scoring backbone and its pairwise training loop.
//!
//! The model is deliberately small and fully differentiable by hand: a user
//! state is a recency-weighted mean of the prefix's item embeddings,
//!
//! ```text
//! h = Σ_τ w_τ · e_{s_τ},   w_τ = ρ^(T-τ) / Σ_τ' ρ^(T-τ'),
//! ```
//!
//! and an item's relevance is `score(i) = h · e_i + bias_i`. Training is
//! plain SGD over pairwise steps: for each (user, step) the consumed item is
//! the positive, a uniform non-interacted item the negative, and the loss
//!
//! ```text
//! L = L_rank + gamma · L_cal
//! L_rank = softplus(-(r_pos - r_neg))
//! L_cal  = softplus(-(r_pos - r_neg - margin_gap))
//! ```
//!
//! where `margin_gap = KL(hist ‖ smoothed pos) - KL(hist ‖ smoothed neg)`
//! measures how much worse the positive fits the user's category history than
//! the negative. The gap contains no model parameters, so it is precomputed
//! per step; its effect is to demand a larger score margin from items that
//! would miscalibrate the list. Gradients flow into the positive/negative
//! embeddings and biases *and* back through `h` into every prefix embedding.
//!
//! Everything is driven by one seeded RNG (init draws first, then per-epoch
//! shuffles and negative samples), so a (data, config) pair fixes the trained
//! parameters exactly.

use std::collections::HashMap;
use std::collections::HashSet;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::calibration::{
    history_distribution, item_distribution, kl_divergence, smooth, CalibrationConfig,
    CategoryDistribution,
};
use crate::corpus::{Catalog, SplitDataset};
use crate::par::ordered_map;
use crate::{write_atomic, Error, Result};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

/// Item embeddings, item biases, and the pooling decay.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    dim: usize,
    rho: f64,
    /// Row-major `num_items x dim`.
    embeddings: Vec<f64>,
    bias: Vec<f64>,
}

impl ModelParams {
    /// Fresh parameters with entries drawn uniformly from
    /// `[-init_scale, init_scale)`, consuming draws from `rng` in row-major
    /// embedding order followed by bias order.
    pub fn init(num_items: usize, config: &TrainingConfig, rng: &mut impl Rng) -> Self {
        let s = config.init_scale;
        let embeddings = (0..num_items * config.dim)
            .map(|_| rng.random_range(-s..s))
            .collect();
        let bias = (0..num_items).map(|_| rng.random_range(-s..s)).collect();
        Self { dim: config.dim, rho: config.rho, embeddings, bias }
    }

    #[must_use]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[must_use]
    pub fn rho(&self) -> f64 {
        self.rho
    }

    #[must_use]
    pub fn num_items(&self) -> usize {
        self.bias.len()
    }

    #[must_use]
    pub fn embedding(&self, item: u32) -> &[f64] {
        let start = item as usize * self.dim;
        &self.embeddings[start..start + self.dim]
    }

    pub fn embedding_mut(&mut self, item: u32) -> &mut [f64] {
        let start = item as usize * self.dim;
        &mut self.embeddings[start..start + self.dim]
    }

    #[must_use]
    pub fn bias(&self, item: u32) -> f64 {
        self.bias[item as usize]
    }

    pub fn bias_mut(&mut self, item: u32) -> &mut f64 {
        &mut self.bias[item as usize]
    }
}

/// Normalized pooling weights for a prefix of `len` items: position `τ`
/// (0-based) weighs `rho^(len-1-τ)`, so the most recent item always weighs
/// most and the weights sum to 1.
fn pooling_weights(rho: f64, len: usize) -> Vec<f64> {
    let mut weights: Vec<f64> = (0..len).map(|t| rho.powi((len - 1 - t) as i32)).collect();
    let denom: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= denom;
    }
    weights
}

/// Pooled user state for a non-empty interaction prefix.
pub fn user_state(params: &ModelParams, prefix: &[u32]) -> Result<Vec<f64>> {
    if prefix.is_empty() {
        return Err(Error::EmptyInput("user state of an empty prefix"));
    }
    Ok(state_or_zero(params, prefix))
}

/// Like [`user_state`], but an empty prefix pools to the zero vector (used
/// for the first training step, where only biases carry signal).
fn state_or_zero(params: &ModelParams, prefix: &[u32]) -> Vec<f64> {
    let mut h = vec![0.0; params.dim];
    if prefix.is_empty() {
        return h;
    }
    let weights = pooling_weights(params.rho, prefix.len());
    for (&item, &w) in prefix.iter().zip(&weights) {
        for (hd, &ed) in h.iter_mut().zip(params.embedding(item)) {
            *hd += w * ed;
        }
    }
    h
}

/// Relevance of `item` for a pooled state: `h · e_item + bias_item`.
#[must_use]
pub fn score(params: &ModelParams, state: &[f64], item: u32) -> f64 {
    let mut dot = 0.0;
    for (&hd, &ed) in state.iter().zip(params.embedding(item)) {
        dot += hd * ed;
    }
    dot + params.bias(item)
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// Which loss terms train the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossMode {
    /// `L_rank + gamma * L_cal`.
    Combined,
    /// Ranking term only (ignores `gamma`).
    BprOnly,
    /// Calibration-margin term only, still scaled by `gamma`.
    CdbprOnly,
}

impl std::str::FromStr for LossMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "combined" => Ok(LossMode::Combined),
            "bpr_only" => Ok(LossMode::BprOnly),
            "cdbpr_only" => Ok(LossMode::CdbprOnly),
            other => Err(Error::Config(format!(
                "unknown loss mode {other:?} (expected combined, bpr_only, or cdbpr_only)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Weight of the calibration-margin loss term.
    pub gamma: f64,
    pub dim: usize,
    /// Pooling decay in `(0, 1]`; `1` pools the prefix uniformly.
    pub rho: f64,
    /// Longest prefix pooled into the user state.
    pub max_seq_len: usize,
    pub init_scale: f64,
    pub seed: u64,
    pub loss_mode: LossMode,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            epochs: 100,
            batch_size: 128,
            gamma: 0.1,
            dim: 50,
            rho: 0.8,
            max_seq_len: 50,
            init_scale: 0.1,
            seed: 42,
            loss_mode: LossMode::Combined,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return Err(Error::Config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".to_string()));
        }
        if !self.gamma.is_finite() || self.gamma < 0.0 {
            return Err(Error::Config(format!(
                "gamma must be non-negative, got {}",
                self.gamma
            )));
        }
        if self.dim == 0 {
            return Err(Error::Config("dim must be positive".to_string()));
        }
        if !self.rho.is_finite() || self.rho <= 0.0 || self.rho > 1.0 {
            return Err(Error::Config(format!("rho must lie in (0, 1], got {}", self.rho)));
        }
        if self.max_seq_len == 0 {
            return Err(Error::Config("max_seq_len must be positive".to_string()));
        }
        if !self.init_scale.is_finite() || self.init_scale <= 0.0 {
            return Err(Error::Config(format!(
                "init_scale must be positive, got {}",
                self.init_scale
            )));
        }
        Ok(())
    }

    /// Coefficients `(rank, calibration)` applied to the two loss terms.
    #[must_use]
    fn coefficients(&self) -> (f64, f64) {
        match self.loss_mode {
            LossMode::Combined => (1.0, self.gamma),
            LossMode::BprOnly => (1.0, 0.0),
            LossMode::CdbprOnly => (0.0, self.gamma),
        }
    }
}

// ---------------------------------------------------------------------------
// Loss and gradients
// ---------------------------------------------------------------------------

/// One pairwise training instance. `step` indexes the positive within the
/// user's training sequence (0-based), so the state prefix is `items[..step]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPair {
    pub user: u32,
    pub step: usize,
    pub positive: u32,
    pub negative: u32,
    /// `KL(hist ‖ smoothed pos) - KL(hist ‖ smoothed neg)`; zero at step 0.
    pub margin_gap: f64,
}

/// Parameter-free calibration margin of a positive/negative pair given the
/// history distribution up to (excluding) the positive. Each item's category
/// distribution is smoothed toward the history with `beta` before the KL, so
/// the gap stays finite whenever `beta > 0`.
pub fn pair_margin_gap(
    history: &CategoryDistribution,
    positive: u32,
    negative: u32,
    catalog: &Catalog,
    beta: f64,
) -> Result<f64> {
    let kl_of = |item: u32| -> Result<f64> {
        let p = item_distribution(catalog, item)?;
        kl_divergence(history, &smooth(&p, history, beta))
    };
    Ok(kl_of(positive)? - kl_of(negative)?)
}

/// `ln(1 + e^x)` without overflow.
#[inline]
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Logistic function without overflow.
#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Raw `(rank, calibration)` losses of one pair, before mode coefficients.
pub fn pair_losses(params: &ModelParams, pair: &TrainingPair, prefix: &[u32]) -> (f64, f64) {
    let state = state_or_zero(params, prefix);
    let z = score(params, &state, pair.positive) - score(params, &state, pair.negative);
    (softplus(-z), softplus(-(z - pair.margin_gap)))
}

/// Summed sparse gradients of a batch.
#[derive(Debug, Clone)]
pub struct BatchGradients {
    dim: usize,
    embeddings: HashMap<u32, Vec<f64>>,
    bias: HashMap<u32, f64>,
}

impl BatchGradients {
    fn new(dim: usize) -> Self {
        Self { dim, embeddings: HashMap::new(), bias: HashMap::new() }
    }

    #[must_use]
    pub fn embedding_grad(&self, item: u32) -> Option<&[f64]> {
        self.embeddings.get(&item).map(Vec::as_slice)
    }

    #[must_use]
    pub fn bias_grad(&self, item: u32) -> f64 {
        self.bias.get(&item).copied().unwrap_or(0.0)
    }

    /// Items with any non-structurally-zero gradient, ascending.
    #[must_use]
    pub fn touched_items(&self) -> Vec<u32> {
        let mut items: Vec<u32> = self
            .embeddings
            .keys()
            .chain(self.bias.keys())
            .copied()
            .collect();
        items.sort_unstable();
        items.dedup();
        items
    }

    fn add_embedding(&mut self, item: u32, scale: f64, vector: &[f64]) {
        let entry = self
            .embeddings
            .entry(item)
            .or_insert_with(|| vec![0.0; self.dim]);
        for (g, &v) in entry.iter_mut().zip(vector) {
            *g += scale * v;
        }
    }

    fn add_bias(&mut self, item: u32, value: f64) {
        *self.bias.entry(item).or_insert(0.0) += value;
    }
}

/// Summed loss and gradients over a batch of pairs. `prefixes[i]` must be the
/// (possibly truncated) interaction prefix backing `pairs[i]`'s user state.
///
/// The loss is `A * L_rank + B * L_cal` summed over pairs with `(A, B)` from
/// the config's [`LossMode`]; gradients cover the positive and negative item
/// embeddings/biases and, through the pooled state, every prefix embedding.
/// When `B` is zero (including `gamma = 0`) the calibration term contributes
/// nothing, bit for bit.
pub fn loss_and_gradients(
    params: &ModelParams,
    pairs: &[TrainingPair],
    prefixes: &[&[u32]],
    config: &TrainingConfig,
) -> Result<(f64, BatchGradients)> {
    let (loss_sums, grads) = batch_pass(params, pairs, prefixes, config)?;
    let (a, b) = config.coefficients();
    Ok((a * loss_sums.0 + b * loss_sums.1, grads))
}

/// Shared batch pass returning (summed rank loss, summed calibration loss)
/// before coefficients, plus coefficient-weighted gradients.
fn batch_pass(
    params: &ModelParams,
    pairs: &[TrainingPair],
    prefixes: &[&[u32]],
    config: &TrainingConfig,
) -> Result<((f64, f64), BatchGradients)> {
    if pairs.len() != prefixes.len() {
        return Err(Error::Validation(format!(
            "{} pairs but {} prefixes",
            pairs.len(),
            prefixes.len()
        )));
    }
    let (a, b) = config.coefficients();
    let mut grads = BatchGradients::new(params.dim);
    let mut rank_sum = 0.0;
    let mut cal_sum = 0.0;

    let mut diff = vec![0.0; params.dim];
    for (pair, &prefix) in pairs.iter().zip(prefixes) {
        let state = state_or_zero(params, prefix);
        let z = score(params, &state, pair.positive) - score(params, &state, pair.negative);
        let z_cal = z - pair.margin_gap;
        rank_sum += softplus(-z);
        cal_sum += softplus(-z_cal);

        // d/dz of the weighted loss; both terms share dz/dθ.
        let g = -(a * sigmoid(-z) + b * sigmoid(-z_cal));
        if g == 0.0 {
            continue;
        }

        grads.add_embedding(pair.positive, g, &state);
        grads.add_embedding(pair.negative, -g, &state);
        grads.add_bias(pair.positive, g);
        grads.add_bias(pair.negative, -g);

        if !prefix.is_empty() {
            // Chain rule through h: dz/de_{s_τ} = w_τ (e_pos - e_neg).
            for ((d, &ep), &en) in diff
                .iter_mut()
                .zip(params.embedding(pair.positive))
                .zip(params.embedding(pair.negative))
            {
                *d = ep - en;
            }
            let weights = pooling_weights(params.rho, prefix.len());
            for (&item, &w) in prefix.iter().zip(&weights) {
                grads.add_embedding(item, g * w, &diff);
            }
        }
    }

    Ok(((rank_sum, cal_sum), grads))
}

/// One SGD step: `θ -= lr * g` for every touched parameter, then verify the
/// touched parameters stayed finite.
pub fn apply_gradients(params: &mut ModelParams, grads: &BatchGradients, lr: f64) -> Result<()> {
    for (&item, grad) in &grads.embeddings {
        let emb = params.embedding_mut(item);
        for (e, &g) in emb.iter_mut().zip(grad) {
            *e -= lr * g;
        }
    }
    for (&item, &g) in &grads.bias {
        params.bias[item as usize] -= lr * g;
    }
    for &item in grads.embeddings.keys() {
        if params.embedding(item).iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "embedding of item {item} became non-finite"
            )));
        }
    }
    for &item in grads.bias.keys() {
        if !params.bias(item).is_finite() {
            return Err(Error::Numeric(format!("bias of item {item} became non-finite")));
        }
    }
    Ok(())
}

/// Uniform negative sample outside the user's interacted set. The caller
/// must guarantee at least one item is free.
pub fn sample_negative(rng: &mut impl Rng, user_items: &HashSet<u32>, num_items: usize) -> u32 {
    loop {
        let candidate = rng.random_range(0..num_items as u32);
        if !user_items.contains(&candidate) {
            return candidate;
        }
    }
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

/// Mean per-pair losses of one epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    /// Mode-weighted total: `A * rank + B * calibration`.
    pub combined: f64,
    pub rank: f64,
    pub calibration: f64,
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    pub params: ModelParams,
    pub epoch_losses: Vec<EpochLoss>,
}

/// Margin-gap ingredients cached per user: the history distribution after
/// each prefix and the positive's KL term at each step.
struct MarginCache {
    /// `hist[t]` = history distribution of `items[..t]`; `None` at `t = 0`.
    hist: Vec<Option<CategoryDistribution>>,
    /// `kl_pos[t]` = `KL(hist[t] ‖ smoothed items[t])`; zero at `t = 0`.
    kl_pos: Vec<f64>,
}

fn build_margin_cache(
    items: &[u32],
    catalog: &Catalog,
    calib: &CalibrationConfig,
) -> Result<MarginCache> {
    let mut hist = Vec::with_capacity(items.len());
    let mut kl_pos = Vec::with_capacity(items.len());
    hist.push(None);
    kl_pos.push(0.0);
    for t in 1..items.len() {
        let h = history_distribution(&items[..t], catalog, calib)?;
        let p = item_distribution(catalog, items[t])?;
        kl_pos.push(kl_divergence(&h, &smooth(&p, &h, calib.beta))?);
        hist.push(Some(h));
    }
    Ok(MarginCache { hist, kl_pos })
}

/// Train the backbone on the split's training sequences.
///
/// Deterministic: seeding, initialization, per-epoch shuffles, and negative
/// draws all consume one ChaCha stream in a fixed order, and batch gradients
/// are applied sequentially. Margin ingredients are precomputed per user
/// (in parallel when the `parallel` feature is on) since they are
/// parameter-free; negatives are resampled every epoch, so only the
/// negative's KL term is computed inside the loop.
pub fn train(
    split: &SplitDataset,
    config: &TrainingConfig,
    calib: &CalibrationConfig,
) -> Result<TrainResult> {
    config.validate()?;
    calib.validate()?;
    let data = &split.train;
    let catalog = &data.catalog;
    let num_items = catalog.num_items();
    let (a, b) = config.coefficients();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = ModelParams::init(num_items, config, &mut rng);

    let interacted: Vec<HashSet<u32>> = data
        .sequences
        .iter()
        .map(|seq| seq.items.iter().copied().collect())
        .collect();
    for (user, set) in interacted.iter().enumerate() {
        if set.len() >= num_items {
            return Err(Error::Validation(format!(
                "user {} interacted with the whole catalog; no negatives available",
                data.user_token(user as u32)
            )));
        }
    }

    // Margin ingredients are only needed when the calibration term is live.
    let margins: Option<Vec<MarginCache>> = if b > 0.0 {
        let built: Vec<Result<MarginCache>> = ordered_map(&data.sequences, |seq| {
            build_margin_cache(&seq.items, catalog, calib)
        });
        Some(built.into_iter().collect::<Result<Vec<_>>>()?)
    } else {
        None
    };

    // One pair per (user, step), in a fixed base order.
    let universe: Vec<(u32, usize)> = data
        .sequences
        .iter()
        .flat_map(|seq| (0..seq.items.len()).map(move |t| (seq.user, t)))
        .collect();
    let mut order: Vec<usize> = (0..universe.len()).collect();

    let mut epoch_losses = Vec::with_capacity(config.epochs);
    let mut pairs: Vec<TrainingPair> = Vec::with_capacity(config.batch_size);
    let mut prefixes: Vec<&[u32]> = Vec::with_capacity(config.batch_size);

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut rank_sum = 0.0;
        let mut cal_sum = 0.0;

        for chunk in order.chunks(config.batch_size) {
            pairs.clear();
            prefixes.clear();
            for &idx in chunk {
                let (user, step) = universe[idx];
                let items = &data.sequences[user as usize].items;
                let positive = items[step];
                let negative = sample_negative(&mut rng, &interacted[user as usize], num_items);
                let margin_gap = match (&margins, step) {
                    (Some(caches), t) if t > 0 => {
                        let cache = &caches[user as usize];
                        let hist = cache.hist[t].as_ref().expect("t > 0");
                        let p = item_distribution(catalog, negative)?;
                        let kl_neg = kl_divergence(hist, &smooth(&p, hist, calib.beta))?;
                        cache.kl_pos[t] - kl_neg
                    }
                    _ => 0.0,
                };
                pairs.push(TrainingPair { user, step, positive, negative, margin_gap });
                prefixes.push(&items[step.saturating_sub(config.max_seq_len)..step]);
            }

            let (sums, grads) = batch_pass(&params, &pairs, &prefixes, config)?;
            rank_sum += sums.0;
            cal_sum += sums.1;
            apply_gradients(&mut params, &grads, config.learning_rate)?;
        }

        let n = universe.len() as f64;
        let rank = rank_sum / n;
        let calibration = cal_sum / n;
        epoch_losses.push(EpochLoss {
            epoch,
            combined: a * rank + b * calibration,
            rank,
            calibration,
        });
    }

    Ok(TrainResult { params, epoch_losses })
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

/// Training-time settings carried inside a checkpoint so downstream commands
/// can default to them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CheckpointEcho {
    pub gamma: f64,
    pub alpha: f64,
    pub beta: f64,
    pub seed: u64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointFile {
    format_version: u32,
    dim: usize,
    num_items: usize,
    rho: f64,
    gamma: f64,
    alpha: f64,
    beta: f64,
    seed: u64,
    item_bias: Vec<f64>,
    item_embeddings: Vec<Vec<f64>>,
}

/// Serialize parameters to pretty-printed JSON (atomic replace). Identical
/// parameters produce byte-identical files.
pub fn save_checkpoint(params: &ModelParams, echo: &CheckpointEcho, path: &Path) -> Result<()> {
    let file = CheckpointFile {
        format_version: CHECKPOINT_FORMAT_VERSION,
        dim: params.dim,
        num_items: params.num_items(),
        rho: params.rho,
        gamma: echo.gamma,
        alpha: echo.alpha,
        beta: echo.beta,
        seed: echo.seed,
        item_bias: params.bias.clone(),
        item_embeddings: params
            .bias
            .iter()
            .enumerate()
            .map(|(i, _)| params.embedding(i as u32).to_vec())
            .collect(),
    };
    let mut json = serde_json::to_string_pretty(&file)?;
    json.push('\n');
    write_atomic(path, &json)
}

/// Load a checkpoint, rejecting newer format versions and malformed shapes.
pub fn load_checkpoint(path: &Path) -> Result<(ModelParams, CheckpointEcho)> {
    let text = fs::read_to_string(path)?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    let version = value
        .get("format_version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| Error::Validation("checkpoint lacks a format_version".to_string()))?;
    if version != u64::from(CHECKPOINT_FORMAT_VERSION) {
        return Err(Error::UnsupportedVersion {
            found: version as u32,
            supported: CHECKPOINT_FORMAT_VERSION,
        });
    }
    let file: CheckpointFile = serde_json::from_value(value)?;

    if file.dim == 0 {
        return Err(Error::Validation("checkpoint dim must be positive".to_string()));
    }
    if !(file.rho.is_finite() && file.rho > 0.0 && file.rho <= 1.0) {
        return Err(Error::Validation(format!("checkpoint rho {} out of (0, 1]", file.rho)));
    }
    if file.item_bias.len() != file.num_items || file.item_embeddings.len() != file.num_items {
        return Err(Error::Validation(format!(
            "checkpoint claims {} items but carries {} biases and {} embedding rows",
            file.num_items,
            file.item_bias.len(),
            file.item_embeddings.len()
        )));
    }
    let mut embeddings = Vec::with_capacity(file.num_items * file.dim);
    for (i, row) in file.item_embeddings.iter().enumerate() {
        if row.len() != file.dim {
            return Err(Error::Validation(format!(
                "embedding row {i} has {} entries, expected {}",
                row.len(),
                file.dim
            )));
        }
        embeddings.extend_from_slice(row);
    }
    if embeddings.iter().chain(&file.item_bias).any(|v| !v.is_finite()) {
        return Err(Error::Numeric("checkpoint contains non-finite values".to_string()));
    }

    Ok((
        ModelParams { dim: file.dim, rho: file.rho, embeddings, bias: file.item_bias },
        CheckpointEcho {
            gamma: file.gamma,
            alpha: file.alpha,
            beta: file.beta,
            seed: file.seed,
        },
    ))
}

// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{self, SyntheticConfig};

    fn tiny_config() -> TrainingConfig {
        TrainingConfig {
            learning_rate: 0.05,
            epochs: 5,
            batch_size: 16,
            gamma: 0.1,
            dim: 8,
            rho: 0.8,
            max_seq_len: 20,
            init_scale: 0.1,
            seed: 7,
            loss_mode: LossMode::Combined,
        }
    }

    fn tiny_split() -> SplitDataset {
        let data = corpus::generate_synthetic(&SyntheticConfig {
            users: 30,
            items: 25,
            categories: 5,
            mean_length: 10.0,
            drift_rate: 0.2,
            concentration: 0.8,
            seed: 11,
        })
        .unwrap();
        corpus::leave_one_out_split(data)
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let config = tiny_config();
        let mut rng_a = ChaCha8Rng::seed_from_u64(1);
        let mut rng_b = ChaCha8Rng::seed_from_u64(1);
        let a = ModelParams::init(10, &config, &mut rng_a);
        let b = ModelParams::init(10, &config, &mut rng_b);
        assert_eq!(a, b);
        assert!(a.embeddings.iter().chain(&a.bias).all(|v| v.abs() <= 0.1));
        assert_eq!(a.embeddings.len(), 80);
    }

    #[test]
    fn user_state_weights_decay_geometrically() {
        // dim 1, rho 0.5: prefix [a, b] pools to (0.5 e_a + e_b) / 1.5.
        let mut params = ModelParams {
            dim: 1,
            rho: 0.5,
            embeddings: vec![3.0, 9.0],
            bias: vec![0.0, 0.0],
        };
        let h = user_state(&params, &[0, 1]).unwrap();
        assert!((h[0] - (0.5 * 3.0 + 9.0) / 1.5).abs() < 1e-12);

        // rho = 1 pools uniformly.
        params.rho = 1.0;
        let h = user_state(&params, &[0, 1]).unwrap();
        assert!((h[0] - 6.0).abs() < 1e-12);

        assert!(matches!(user_state(&params, &[]), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn score_is_dot_plus_bias() {
        let params = ModelParams {
            dim: 2,
            rho: 0.8,
            embeddings: vec![1.0, 2.0, -1.0, 0.5],
            bias: vec![0.25, -0.5],
        };
        assert!((score(&params, &[2.0, 3.0], 0) - (2.0 + 6.0 + 0.25)).abs() < 1e-12);
        assert!((score(&params, &[2.0, 3.0], 1) - (-2.0 + 1.5 - 0.5)).abs() < 1e-12);
    }

    #[test]
    fn zero_margin_makes_both_loss_terms_identical() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let params = ModelParams::init(6, &tiny_config(), &mut rng);
        let pair = TrainingPair { user: 0, step: 2, positive: 1, negative: 4, margin_gap: 0.0 };
        let (rank, cal) = pair_losses(&params, &pair, &[0, 3]);
        assert_eq!(rank, cal);
    }

    #[test]
    fn margin_gap_sign_tracks_calibration_fit() {
        let catalog = Catalog::new(
            vec![vec![0], vec![1]],
            vec!["0".into(), "1".into()],
            vec!["A".into(), "B".into()],
        )
        .unwrap();
        let hist = CategoryDistribution::new(vec![0.9, 0.1]).unwrap();
        // Positive matches the dominant category, negative does not: the
        // positive's KL is smaller, so the gap is negative (an easier margin).
        let gap = pair_margin_gap(&hist, 0, 1, &catalog, 0.01).unwrap();
        assert!(gap < 0.0);
        // Swapped roles flip the sign exactly.
        let flipped = pair_margin_gap(&hist, 1, 0, &catalog, 0.01).unwrap();
        assert_eq!(gap, -flipped);
        // Identical items: zero exactly.
        assert_eq!(pair_margin_gap(&hist, 1, 1, &catalog, 0.01).unwrap(), 0.0);
    }

    /// Central finite differences over every parameter the analytic gradient
    /// claims to touch, plus biases/embeddings of uninvolved items (which
    /// must stay untouched).
    #[test]
    fn gradients_match_finite_differences() {
        let config = TrainingConfig { dim: 3, gamma: 0.3, ..tiny_config() };
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let params = ModelParams::init(8, &config, &mut rng);
        let pairs = vec![
            TrainingPair { user: 0, step: 3, positive: 2, negative: 6, margin_gap: 0.4 },
            TrainingPair { user: 1, step: 0, positive: 5, negative: 0, margin_gap: 0.0 },
            // Positive also appears in its own prefix.
            TrainingPair { user: 2, step: 2, positive: 1, negative: 7, margin_gap: -0.2 },
        ];
        let prefix_data: Vec<Vec<u32>> = vec![vec![0, 1, 2], vec![], vec![1, 3]];
        let prefixes: Vec<&[u32]> = prefix_data.iter().map(Vec::as_slice).collect();

        let (_, grads) = loss_and_gradients(&params, &pairs, &prefixes, &config).unwrap();
        let loss_of = |p: &ModelParams| {
            loss_and_gradients(p, &pairs, &prefixes, &config).unwrap().0
        };

        let h = 1e-5;
        for item in 0..8u32 {
            for d in 0..config.dim {
                let mut plus = params.clone();
                plus.embedding_mut(item)[d] += h;
                let mut minus = params.clone();
                minus.embedding_mut(item)[d] -= h;
                let numeric = (loss_of(&plus) - loss_of(&minus)) / (2.0 * h);
                let analytic = grads.embedding_grad(item).map_or(0.0, |g| g[d]);
                let err = (numeric - analytic).abs();
                let tol = 1e-4 * analytic.abs().max(1.0);
                assert!(err < tol, "emb item {item} dim {d}: {analytic} vs {numeric}");
            }
            let mut plus = params.clone();
            *plus.bias_mut(item) += h;
            let mut minus = params.clone();
            *minus.bias_mut(item) -= h;
            let numeric = (loss_of(&plus) - loss_of(&minus)) / (2.0 * h);
            let analytic = grads.bias_grad(item);
            assert!(
                (numeric - analytic).abs() < 1e-4 * analytic.abs().max(1.0),
                "bias item {item}: {analytic} vs {numeric}"
            );
        }
    }

    #[test]
    fn sample_negative_avoids_interacted_items() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let used: HashSet<u32> = [0, 2, 4, 6, 8].into_iter().collect();
        for _ in 0..200 {
            let neg = sample_negative(&mut rng, &used, 10);
            assert!(!used.contains(&neg));
        }
    }

    #[test]
    fn training_reduces_loss_and_is_deterministic() {
        let split = tiny_split();
        let config = TrainingConfig { epochs: 15, ..tiny_config() };
        let calib = CalibrationConfig::default();

        let a = train(&split, &config, &calib).unwrap();
        let b = train(&split, &config, &calib).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.epoch_losses, b.epoch_losses);

        assert_eq!(a.epoch_losses.len(), 15);
        let first = a.epoch_losses.first().unwrap().combined;
        let last = a.epoch_losses.last().unwrap().combined;
        assert!(last < first, "loss did not improve: {first} -> {last}");
        assert!(a.epoch_losses.iter().all(|e| e.combined.is_finite()));
    }

    #[test]
    fn zero_gamma_equals_rank_only_training_bit_for_bit() {
        let split = tiny_split();
        let calib = CalibrationConfig::default();
        let zero_gamma = TrainingConfig { gamma: 0.0, epochs: 4, ..tiny_config() };
        let rank_only = TrainingConfig {
            loss_mode: LossMode::BprOnly,
            epochs: 4,
            ..tiny_config()
        };
        let a = train(&split, &zero_gamma, &calib).unwrap();
        let b = train(&split, &rank_only, &calib).unwrap();
        assert_eq!(a.params, b.params);
    }

    #[test]
    fn checkpoint_round_trips_bit_for_bit() {
        let split = tiny_split();
        let result = train(&split, &tiny_config(), &CalibrationConfig::default()).unwrap();
        let echo = CheckpointEcho { gamma: 0.1, alpha: 0.9, beta: 0.01, seed: 7 };

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        save_checkpoint(&result.params, &echo, &path).unwrap();
        let (loaded, loaded_echo) = load_checkpoint(&path).unwrap();
        assert_eq!(loaded, result.params);
        assert_eq!(loaded_echo, echo);

        // Saving the loaded params again must reproduce the bytes.
        let path2 = dir.path().join("model2.json");
        save_checkpoint(&loaded, &loaded_echo, &path2).unwrap();
        assert_eq!(
            fs::read_to_string(&path).unwrap(),
            fs::read_to_string(&path2).unwrap()
        );
    }

    #[test]
    fn checkpoint_version_and_shape_are_enforced() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");

        fs::write(&path, r#"{"format_version": 2}"#).unwrap();
        assert!(matches!(
            load_checkpoint(&path),
            Err(Error::UnsupportedVersion { found: 2, supported: 1 })
        ));

        fs::write(
            &path,
            r#"{"format_version": 1, "dim": 2, "num_items": 2, "rho": 0.8,
               "gamma": 0.1, "alpha": 0.9, "beta": 0.01, "seed": 1,
               "item_bias": [0.0], "item_embeddings": [[0.0, 0.0]]}"#,
        )
        .unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::Validation(_))));
    }

    #[test]
    fn config_validation_rejects_out_of_range_values() {
        let ok = tiny_config();
        ok.validate().unwrap();
        for bad in [
            TrainingConfig { learning_rate: 0.0, ..ok },
            TrainingConfig { batch_size: 0, ..ok },
            TrainingConfig { gamma: -0.1, ..ok },
            TrainingConfig { dim: 0, ..ok },
            TrainingConfig { rho: 0.0, ..ok },
            TrainingConfig { rho: 1.1, ..ok },
            TrainingConfig { max_seq_len: 0, ..ok },
            TrainingConfig { init_scale: 0.0, ..ok },
        ] {
            assert!(matches!(bad.validate(), Err(Error::Config(_))), "{bad:?}");
        }
    }
}
