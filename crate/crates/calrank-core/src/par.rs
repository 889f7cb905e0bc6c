//! Data-parallel map with a sequential fallback.
//!
//! The hot loops in this crate are independent per user (reranking, drift
//! sampling, margin precomputation), so they parallelize as a plain indexed
//! map. Results are collected in input order and all reductions happen
//! sequentially afterwards, which keeps floating-point output bit-identical
//! whether or not the `parallel` feature is enabled.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Map `f` over `items`, preserving order.
#[cfg(feature = "parallel")]
pub(crate) fn ordered_map<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    items.par_iter().map(f).collect()
}

/// Map `f` over `items`, preserving order.
#[cfg(not(feature = "parallel"))]
pub(crate) fn ordered_map<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    F: Fn(&T) -> U,
{
    items.iter().map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ordered_map_preserves_input_order() {
        let xs: Vec<u64> = (0..1000).collect();
        let ys = ordered_map(&xs, |x| x * 2);
        assert_eq!(ys, (0..1000).map(|x| x * 2).collect::<Vec<_>>());
    }
}
