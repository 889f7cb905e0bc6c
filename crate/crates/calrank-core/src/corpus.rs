//! Datasets: catalog + interaction ingestion, leave-one-out splits, and a
//! synthetic generator with drifting category preferences.
//!
//! External identifiers stay strings; everything internal runs on dense ids
//! (`u32`) assigned in order of first appearance. The mapping back to raw
//! tokens travels with the [`Dataset`] so outputs can be written in the
//! caller's vocabulary.
//!
//! # Input formats
//!
//! Interactions are tab-separated `user_id \t item_id \t timestamp` rows;
//! user and item tokens and the timestamp must parse as integers. The catalog
//! is `item_id \t cat1,cat2,...` with at least one category per item.
//! Malformed rows are rejected with their 1-based line number rather than
//! skipped: silently dropping data shifts every downstream statistic.

use std::collections::hash_map::Entry;
use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Poisson};
use serde::{Deserialize, Serialize};

use crate::{write_atomic, Error, Result};

// ---------------------------------------------------------------------------
// Catalog
// ---------------------------------------------------------------------------

/// Item → category assignments over dense ids.
///
/// Invariants (checked by [`Catalog::new`]): every item has at least one
/// category, no item lists the same category twice, and every category id
/// referenced is below `num_categories`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Catalog {
    categories_of: Vec<Vec<u32>>,
    item_tokens: Vec<String>,
    category_tokens: Vec<String>,
}

impl Catalog {
    pub fn new(
        categories_of: Vec<Vec<u32>>,
        item_tokens: Vec<String>,
        category_tokens: Vec<String>,
    ) -> Result<Self> {
        if categories_of.is_empty() {
            return Err(Error::EmptyInput("catalog has no items"));
        }
        if item_tokens.len() != categories_of.len() {
            return Err(Error::Validation(format!(
                "catalog has {} items but {} item tokens",
                categories_of.len(),
                item_tokens.len()
            )));
        }
        let num_categories = category_tokens.len();
        for (item, cats) in categories_of.iter().enumerate() {
            if cats.is_empty() {
                return Err(Error::Validation(format!(
                    "item {} has no categories",
                    item_tokens[item]
                )));
            }
            let mut seen = HashSet::with_capacity(cats.len());
            for &c in cats {
                if c as usize >= num_categories {
                    return Err(Error::Validation(format!(
                        "item {} references category id {} (only {} known)",
                        item_tokens[item], c, num_categories
                    )));
                }
                if !seen.insert(c) {
                    return Err(Error::Validation(format!(
                        "item {} lists category {} twice",
                        item_tokens[item], category_tokens[c as usize]
                    )));
                }
            }
        }
        Ok(Self { categories_of, item_tokens, category_tokens })
    }

    #[must_use]
    pub fn num_items(&self) -> usize {
        self.categories_of.len()
    }

    #[must_use]
    pub fn num_categories(&self) -> usize {
        self.category_tokens.len()
    }

    /// Category ids of `item`, or an error for out-of-range ids.
    pub fn categories_of(&self, item: u32) -> Result<&[u32]> {
        self.categories_of
            .get(item as usize)
            .map(Vec::as_slice)
            .ok_or(Error::UnknownItem { item, num_items: self.num_items() })
    }

    /// Unchecked lookup for hot paths operating on validated ids.
    #[inline]
    #[must_use]
    pub(crate) fn cats(&self, item: u32) -> &[u32] {
        &self.categories_of[item as usize]
    }

    #[must_use]
    pub fn item_token(&self, item: u32) -> &str {
        &self.item_tokens[item as usize]
    }

    #[must_use]
    pub fn category_token(&self, category: u32) -> &str {
        &self.category_tokens[category as usize]
    }
}

// ---------------------------------------------------------------------------
// Interactions
// ---------------------------------------------------------------------------

/// One user's chronological item sequence (dense ids).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionSequence {
    pub user: u32,
    pub items: Vec<u32>,
}

/// A catalog plus one sequence per user, with raw-token side tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub catalog: Catalog,
    pub sequences: Vec<InteractionSequence>,
    user_tokens: Vec<String>,
}

/// Raw-token → dense-id tables, serialized alongside prepared datasets so
/// downstream outputs can be joined back to the original identifiers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemapTables {
    pub users: BTreeMap<String, u32>,
    pub items: BTreeMap<String, u32>,
    pub categories: BTreeMap<String, u32>,
}

impl Dataset {
    pub fn new(
        catalog: Catalog,
        sequences: Vec<InteractionSequence>,
        user_tokens: Vec<String>,
    ) -> Result<Self> {
        let dataset = Self { catalog, sequences, user_tokens };
        dataset.validate()?;
        Ok(dataset)
    }

    fn validate(&self) -> Result<()> {
        if self.sequences.is_empty() {
            return Err(Error::EmptyInput("dataset has no users"));
        }
        if self.user_tokens.len() != self.sequences.len() {
            return Err(Error::Validation(format!(
                "{} sequences but {} user tokens",
                self.sequences.len(),
                self.user_tokens.len()
            )));
        }
        let num_items = self.catalog.num_items();
        for (idx, seq) in self.sequences.iter().enumerate() {
            if seq.user as usize != idx {
                return Err(Error::Validation(format!(
                    "sequence {} carries user id {} (ids must be dense and ordered)",
                    idx, seq.user
                )));
            }
            if seq.items.is_empty() {
                return Err(Error::Validation(format!(
                    "user {} has an empty sequence",
                    self.user_tokens[idx]
                )));
            }
            for &item in &seq.items {
                if item as usize >= num_items {
                    return Err(Error::UnknownItem { item, num_items });
                }
            }
        }
        Ok(())
    }

    #[must_use]
    pub fn num_users(&self) -> usize {
        self.sequences.len()
    }

    #[must_use]
    pub fn user_token(&self, user: u32) -> &str {
        &self.user_tokens[user as usize]
    }

    #[must_use]
    pub fn remap_tables(&self) -> RemapTables {
        let users = self
            .user_tokens
            .iter()
            .enumerate()
            .map(|(id, tok)| (tok.clone(), id as u32))
            .collect();
        let items = self
            .catalog
            .item_tokens
            .iter()
            .enumerate()
            .map(|(id, tok)| (tok.clone(), id as u32))
            .collect();
        let categories = self
            .catalog
            .category_tokens
            .iter()
            .enumerate()
            .map(|(id, tok)| (tok.clone(), id as u32))
            .collect();
        RemapTables { users, items, categories }
    }

    /// Serialize to pretty-printed JSON at `path` (atomic replace).
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut json = serde_json::to_string_pretty(self)?;
        json.push('\n');
        write_atomic(path, &json)
    }

    /// Load a dataset written by [`Dataset::save`], re-checking invariants.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let dataset: Dataset = serde_json::from_str(&text)?;
        dataset.validate()?;
        Ok(dataset)
    }
}

// ---------------------------------------------------------------------------
// Loading
// ---------------------------------------------------------------------------

fn integer_token(field: &str, what: &str, line: usize) -> Result<()> {
    if field.parse::<i64>().is_ok() {
        Ok(())
    } else {
        Err(Error::Parse {
            line,
            message: format!("{what} {field:?} is not an integer"),
        })
    }
}

/// Parse a `item_id \t cat1,cat2` catalog file. Dense item and category ids
/// follow first appearance order.
pub fn load_catalog(path: &Path) -> Result<Catalog> {
    let text = fs::read_to_string(path)?;
    let mut categories_of: Vec<Vec<u32>> = Vec::new();
    let mut item_tokens: Vec<String> = Vec::new();
    let mut item_ids: HashMap<String, u32> = HashMap::new();
    let mut category_tokens: Vec<String> = Vec::new();
    let mut category_ids: HashMap<String, u32> = HashMap::new();

    for (idx, raw_line) in text.lines().enumerate() {
        let line = idx + 1;
        let row = raw_line.trim_end_matches('\r');
        let fields: Vec<&str> = row.split('\t').collect();
        if fields.len() != 2 {
            return Err(Error::Parse {
                line,
                message: format!("expected 2 tab-separated fields, found {}", fields.len()),
            });
        }
        integer_token(fields[0], "item id", line)?;
        if item_ids.contains_key(fields[0]) {
            return Err(Error::Parse {
                line,
                message: format!("duplicate catalog entry for item {:?}", fields[0]),
            });
        }

        let mut cats = Vec::new();
        for token in fields[1].split(',') {
            if token.is_empty() {
                return Err(Error::Parse {
                    line,
                    message: "empty category name".to_string(),
                });
            }
            let id = match category_ids.entry(token.to_string()) {
                Entry::Occupied(e) => *e.get(),
                Entry::Vacant(e) => {
                    let id = category_tokens.len() as u32;
                    category_tokens.push(token.to_string());
                    *e.insert(id)
                }
            };
            if cats.contains(&id) {
                return Err(Error::Parse {
                    line,
                    message: format!("item {:?} lists category {token:?} twice", fields[0]),
                });
            }
            cats.push(id);
        }

        item_ids.insert(fields[0].to_string(), item_tokens.len() as u32);
        item_tokens.push(fields[0].to_string());
        categories_of.push(cats);
    }

    Catalog::new(categories_of, item_tokens, category_tokens)
}

/// Parse a `user_id \t item_id \t timestamp` interactions file against an
/// already-loaded catalog.
///
/// Rows are grouped per user and stably sorted by timestamp, so equal
/// timestamps keep file order. Dense user ids follow first appearance.
pub fn load_interactions(path: &Path, catalog: Catalog) -> Result<Dataset> {
    let text = fs::read_to_string(path)?;
    let item_ids: HashMap<&str, u32> = catalog
        .item_tokens
        .iter()
        .enumerate()
        .map(|(id, tok)| (tok.as_str(), id as u32))
        .collect();

    let mut user_tokens: Vec<String> = Vec::new();
    let mut user_ids: HashMap<String, u32> = HashMap::new();
    // Per user: (timestamp, arrival index, item).
    let mut rows: Vec<Vec<(i64, usize, u32)>> = Vec::new();

    for (idx, raw_line) in text.lines().enumerate() {
        let line = idx + 1;
        let row = raw_line.trim_end_matches('\r');
        let fields: Vec<&str> = row.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::Parse {
                line,
                message: format!("expected 3 tab-separated fields, found {}", fields.len()),
            });
        }
        integer_token(fields[0], "user id", line)?;
        integer_token(fields[1], "item id", line)?;
        let timestamp: i64 = fields[2].parse().map_err(|_| Error::Parse {
            line,
            message: format!("timestamp {:?} is not an integer", fields[2]),
        })?;

        let &item = item_ids
            .get(fields[1])
            .ok_or_else(|| Error::UnknownRawItem { item: fields[1].to_string(), line })?;

        let user = match user_ids.entry(fields[0].to_string()) {
            Entry::Occupied(e) => *e.get(),
            Entry::Vacant(e) => {
                let id = user_tokens.len() as u32;
                user_tokens.push(fields[0].to_string());
                rows.push(Vec::new());
                *e.insert(id)
            }
        };
        let arrival = rows[user as usize].len();
        rows[user as usize].push((timestamp, arrival, item));
    }

    if rows.is_empty() {
        return Err(Error::EmptyInput("interactions file has no rows"));
    }

    let sequences = rows
        .into_iter()
        .enumerate()
        .map(|(user, mut entries)| {
            entries.sort_by_key(|&(ts, arrival, _)| (ts, arrival));
            InteractionSequence {
                user: user as u32,
                items: entries.into_iter().map(|(_, _, item)| item).collect(),
            }
        })
        .collect();

    Dataset::new(catalog, sequences, user_tokens)
}

// ---------------------------------------------------------------------------
// Splitting
// ---------------------------------------------------------------------------

/// Leave-one-out split: per user the last item becomes the test target and
/// the second-to-last the validation target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitDataset {
    /// Training sequences (last two items removed where the split applies).
    pub train: Dataset,
    /// user → held-out validation item.
    pub validation: BTreeMap<u32, u32>,
    /// user → held-out test item.
    pub test: BTreeMap<u32, u32>,
}

impl SplitDataset {
    /// Per test user: training items plus the held-out validation item —
    /// everything that chronologically precedes the test target. This is the
    /// prefix test-time prediction conditions on.
    #[must_use]
    pub fn test_prefixes(&self) -> BTreeMap<u32, Vec<u32>> {
        self.test
            .keys()
            .map(|&user| {
                let mut prefix = self.train.sequences[user as usize].items.clone();
                prefix.push(self.validation[&user]);
                (user, prefix)
            })
            .collect()
    }
}

/// Split each sequence leave-one-out style. Users with fewer than three
/// interactions keep their full sequence for training and appear in neither
/// target map.
#[must_use]
pub fn leave_one_out_split(mut dataset: Dataset) -> SplitDataset {
    let mut validation = BTreeMap::new();
    let mut test = BTreeMap::new();
    for seq in &mut dataset.sequences {
        if seq.items.len() >= 3 {
            let test_item = seq.items.pop().expect("len >= 3");
            let val_item = seq.items.pop().expect("len >= 2");
            validation.insert(seq.user, val_item);
            test.insert(seq.user, test_item);
        }
    }
    SplitDataset { train: dataset, validation, test }
}

// ---------------------------------------------------------------------------
// Synthetic data
// ---------------------------------------------------------------------------

/// Parameters for [`generate_synthetic`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticConfig {
    pub users: usize,
    pub items: usize,
    pub categories: usize,
    /// Mean sequence length (Poisson; realized lengths clamp to >= 3).
    pub mean_length: f64,
    /// Per-interaction mixing rate toward a freshly drawn preference, in
    /// `[0, 1]`. Zero freezes each user's preferences for the whole sequence.
    pub drift_rate: f64,
    /// Symmetric Dirichlet concentration for preference draws (> 0). Small
    /// values produce users locked onto one or two categories.
    pub concentration: f64,
    pub seed: u64,
}

impl SyntheticConfig {
    fn validate(&self) -> Result<()> {
        if self.users == 0 || self.items == 0 || self.categories == 0 {
            return Err(Error::Config(
                "synthetic users, items, and categories must be positive".to_string(),
            ));
        }
        if self.items < self.categories {
            return Err(Error::Config(format!(
                "need at least one item per category ({} items < {} categories)",
                self.items, self.categories
            )));
        }
        if !self.mean_length.is_finite() || self.mean_length <= 0.0 {
            return Err(Error::Config(format!(
                "mean_length must be positive and finite, got {}",
                self.mean_length
            )));
        }
        if !(0.0..=1.0).contains(&self.drift_rate) {
            return Err(Error::Config(format!(
                "drift_rate must lie in [0, 1], got {}",
                self.drift_rate
            )));
        }
        if !self.concentration.is_finite() || self.concentration <= 0.0 {
            return Err(Error::Config(format!(
                "concentration must be positive and finite, got {}",
                self.concentration
            )));
        }
        Ok(())
    }
}

/// Draw a symmetric Dirichlet sample by normalizing Gamma draws.
fn dirichlet(rng: &mut ChaCha8Rng, gamma: &Gamma<f64>, k: usize, out: &mut Vec<f64>) {
    out.clear();
    let mut sum = 0.0;
    for _ in 0..k {
        let g = gamma.sample(rng);
        sum += g;
        out.push(g);
    }
    if sum > 0.0 {
        for v in out.iter_mut() {
            *v /= sum;
        }
    } else {
        // All draws underflowed (possible for tiny concentrations).
        out.iter_mut().for_each(|v| *v = 1.0 / k as f64);
    }
}

fn sample_index(rng: &mut ChaCha8Rng, weights: &[f64]) -> usize {
    let mut r: f64 = rng.random();
    for (idx, &w) in weights.iter().enumerate() {
        r -= w;
        if r < 0.0 {
            return idx;
        }
    }
    weights.len() - 1
}

/// Generate a dataset of users whose category preferences drift over time.
///
/// Items are spread round-robin over categories (item `i` belongs to category
/// `i % categories` only). Each user starts from a Dirichlet-drawn preference
/// vector over categories; each interaction samples a category from the
/// current preferences and an item uniformly within it, then mixes the
/// preferences with a fresh Dirichlet draw at `drift_rate`. Identical configs
/// produce identical datasets, bit for bit.
pub fn generate_synthetic(config: &SyntheticConfig) -> Result<Dataset> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let gamma = Gamma::new(config.concentration, 1.0)
        .map_err(|e| Error::Config(format!("bad concentration: {e}")))?;
    let poisson = Poisson::new(config.mean_length)
        .map_err(|e| Error::Config(format!("bad mean_length: {e}")))?;

    let categories_of: Vec<Vec<u32>> = (0..config.items)
        .map(|i| vec![(i % config.categories) as u32])
        .collect();
    let items_in: Vec<Vec<u32>> = (0..config.categories)
        .map(|c| {
            (c..config.items)
                .step_by(config.categories)
                .map(|i| i as u32)
                .collect()
        })
        .collect();
    let catalog = Catalog::new(
        categories_of,
        (0..config.items).map(|i| i.to_string()).collect(),
        (0..config.categories).map(|c| format!("c{c}")).collect(),
    )?;

    let mut preference = Vec::with_capacity(config.categories);
    let mut fresh = Vec::with_capacity(config.categories);
    let mut sequences = Vec::with_capacity(config.users);
    for user in 0..config.users {
        dirichlet(&mut rng, &gamma, config.categories, &mut preference);
        let length = (poisson.sample(&mut rng) as usize).max(3);
        let mut items = Vec::with_capacity(length);
        for _ in 0..length {
            let category = sample_index(&mut rng, &preference);
            let pool = &items_in[category];
            items.push(pool[rng.random_range(0..pool.len())]);
            if config.drift_rate > 0.0 {
                dirichlet(&mut rng, &gamma, config.categories, &mut fresh);
                let keep = 1.0 - config.drift_rate;
                let mut sum = 0.0;
                for (p, f) in preference.iter_mut().zip(&fresh) {
                    *p = keep * *p + config.drift_rate * f;
                    sum += *p;
                }
                // Mixing preserves the simplex up to rounding; renormalize so
                // long sequences cannot accumulate drift away from sum 1.
                for p in preference.iter_mut() {
                    *p /= sum;
                }
            }
        }
        sequences.push(InteractionSequence { user: user as u32, items });
    }

    Dataset::new(
        catalog,
        sequences,
        (0..config.users).map(|u| u.to_string()).collect(),
    )
}

// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_file(dir: &tempfile::TempDir, name: &str, contents: &str) -> std::path::PathBuf {
        let path = dir.path().join(name);
        let mut f = fs::File::create(&path).unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        path
    }

    fn small_catalog() -> Catalog {
        Catalog::new(
            vec![vec![0], vec![0, 1], vec![1]],
            vec!["10".into(), "11".into(), "12".into()],
            vec!["A".into(), "B".into()],
        )
        .unwrap()
    }

    #[test]
    fn catalog_ids_follow_first_appearance() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(&dir, "catalog.tsv", "7\tB,A\n3\tA\n9\tC,B\n");
        let catalog = load_catalog(&path).unwrap();
        assert_eq!(catalog.num_items(), 3);
        assert_eq!(catalog.num_categories(), 3);
        // Item 7 appeared first, so it owns dense id 0; same for category B.
        assert_eq!(catalog.item_token(0), "7");
        assert_eq!(catalog.category_token(0), "B");
        assert_eq!(catalog.categories_of(0).unwrap(), &[0, 1]);
        assert_eq!(catalog.categories_of(2).unwrap(), &[2, 0]);
    }

    #[test]
    fn catalog_rejects_malformed_rows() {
        let dir = tempfile::tempdir().unwrap();
        for (contents, expect_line) in [
            ("7\tA\n8\n", 2),            // missing category column
            ("7\tA\tB\n", 1),            // too many columns
            ("x\tA\n", 1),               // non-integer item token
            ("7\tA\n7\tB\n", 2),         // duplicate item
            ("7\tA,,B\n", 1),            // empty category name
            ("7\tA,A\n", 1),             // repeated category
        ] {
            let path = write_file(&dir, "catalog.tsv", contents);
            match load_catalog(&path) {
                Err(Error::Parse { line, .. }) => assert_eq!(line, expect_line, "{contents:?}"),
                other => panic!("expected parse error for {contents:?}, got {other:?}"),
            }
        }
    }

    #[test]
    fn catalog_rejects_empty_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(&dir, "catalog.tsv", "");
        assert!(matches!(load_catalog(&path), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn interactions_group_and_sort_by_timestamp() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(
            &dir,
            "inter.tsv",
            "5\t11\t30\n8\t10\t10\n5\t10\t10\n5\t12\t20\n8\t12\t5\n",
        );
        let data = load_interactions(&path, small_catalog()).unwrap();
        assert_eq!(data.num_users(), 2);
        // User "5" appeared first: dense id 0, items sorted by timestamp.
        assert_eq!(data.user_token(0), "5");
        assert_eq!(data.sequences[0].items, vec![0, 2, 1]);
        assert_eq!(data.sequences[1].items, vec![2, 0]);
    }

    #[test]
    fn interactions_equal_timestamps_keep_file_order() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(&dir, "inter.tsv", "5\t12\t7\n5\t10\t7\n5\t11\t7\n");
        let data = load_interactions(&path, small_catalog()).unwrap();
        assert_eq!(data.sequences[0].items, vec![2, 0, 1]);
    }

    #[test]
    fn interactions_reject_bad_rows() {
        let dir = tempfile::tempdir().unwrap();
        for contents in ["5\t10\n", "u1\t10\t5\n", "5\tabc\t5\n", "5\t10\t2.5\n"] {
            let path = write_file(&dir, "inter.tsv", contents);
            match load_interactions(&path, small_catalog()) {
                Err(Error::Parse { line, .. }) => assert_eq!(line, 1, "{contents:?}"),
                other => panic!("expected parse error for {contents:?}, got {other:?}"),
            }
        }
    }

    #[test]
    fn interactions_reject_unknown_item() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(&dir, "inter.tsv", "5\t10\t1\n5\t99\t2\n");
        match load_interactions(&path, small_catalog()) {
            Err(Error::UnknownRawItem { item, line }) => {
                assert_eq!(item, "99");
                assert_eq!(line, 2);
            }
            other => panic!("expected unknown-item error, got {other:?}"),
        }
    }

    #[test]
    fn interactions_reject_empty_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(&dir, "inter.tsv", "");
        assert!(matches!(
            load_interactions(&path, small_catalog()),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn split_holds_out_last_two_items() {
        let catalog = small_catalog();
        let data = Dataset::new(
            catalog,
            vec![
                InteractionSequence { user: 0, items: vec![0, 1, 2, 0] },
                InteractionSequence { user: 1, items: vec![2, 1] },
                InteractionSequence { user: 2, items: vec![1, 0, 2] },
            ],
            vec!["a".into(), "b".into(), "c".into()],
        )
        .unwrap();
        let split = leave_one_out_split(data);

        assert_eq!(split.train.sequences[0].items, vec![0, 1]);
        assert_eq!(split.validation[&0], 2);
        assert_eq!(split.test[&0], 0);

        // Two interactions: kept whole, absent from both target maps.
        assert_eq!(split.train.sequences[1].items, vec![2, 1]);
        assert!(!split.validation.contains_key(&1));
        assert!(!split.test.contains_key(&1));

        assert_eq!(split.train.sequences[2].items, vec![1]);
        assert_eq!(split.validation[&2], 0);
        assert_eq!(split.test[&2], 2);

        // Test-time prefixes append the validation item to the train prefix.
        let prefixes = split.test_prefixes();
        assert_eq!(prefixes.len(), 2);
        assert_eq!(prefixes[&0], vec![0, 1, 2]);
        assert_eq!(prefixes[&2], vec![1, 0]);
    }

    #[test]
    fn synthetic_is_deterministic_and_well_formed() {
        let config = SyntheticConfig {
            users: 25,
            items: 40,
            categories: 5,
            mean_length: 10.0,
            drift_rate: 0.3,
            concentration: 0.8,
            seed: 99,
        };
        let a = generate_synthetic(&config).unwrap();
        let b = generate_synthetic(&config).unwrap();
        assert_eq!(a, b);

        assert_eq!(a.num_users(), 25);
        assert_eq!(a.catalog.num_items(), 40);
        assert_eq!(a.catalog.num_categories(), 5);
        for seq in &a.sequences {
            assert!(seq.items.len() >= 3);
            for &item in &seq.items {
                assert!((item as usize) < 40);
                assert_eq!(a.catalog.cats(item), &[item % 5]);
            }
        }

        let other = generate_synthetic(&SyntheticConfig { seed: 100, ..config }).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn synthetic_rejects_bad_configs() {
        let base = SyntheticConfig {
            users: 10,
            items: 20,
            categories: 4,
            mean_length: 8.0,
            drift_rate: 0.1,
            concentration: 1.0,
            seed: 1,
        };
        for bad in [
            SyntheticConfig { users: 0, ..base.clone() },
            SyntheticConfig { categories: 21, ..base.clone() },
            SyntheticConfig { mean_length: 0.0, ..base.clone() },
            SyntheticConfig { drift_rate: 1.5, ..base.clone() },
            SyntheticConfig { concentration: -1.0, ..base.clone() },
        ] {
            assert!(matches!(generate_synthetic(&bad), Err(Error::Config(_))), "{bad:?}");
        }
    }

    #[test]
    fn dataset_round_trips_through_json() {
        let config = SyntheticConfig {
            users: 8,
            items: 12,
            categories: 3,
            mean_length: 6.0,
            drift_rate: 0.2,
            concentration: 1.0,
            seed: 3,
        };
        let data = generate_synthetic(&config).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("dataset.json");
        data.save(&path).unwrap();
        let loaded = Dataset::load(&path).unwrap();
        assert_eq!(data, loaded);
    }

    #[test]
    fn remap_tables_cover_all_tokens() {
        let dir = tempfile::tempdir().unwrap();
        let cat = write_file(&dir, "catalog.tsv", "7\tB,A\n3\tA\n");
        let inter = write_file(&dir, "inter.tsv", "20\t3\t1\n10\t7\t2\n");
        let data = load_interactions(&inter, load_catalog(&cat).unwrap()).unwrap();
        let remap = data.remap_tables();
        assert_eq!(remap.users["20"], 0);
        assert_eq!(remap.users["10"], 1);
        assert_eq!(remap.items["7"], 0);
        assert_eq!(remap.items["3"], 1);
        assert_eq!(remap.categories["B"], 0);
        assert_eq!(remap.categories["A"], 1);
    }
}
