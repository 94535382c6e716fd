//! Data-parallel map with a sequential fallback.
//!
//! Every parallel task derives its own random stream from the run seed, so
//! `Parallel` and `Sequential` produce bit-identical results; the switch only
//! changes wall-clock time.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parallelism {
    Sequential,
    #[default]
    Parallel,
}

impl Parallelism {
    /// `Parallel` only when the crate is built with the `parallel` feature.
    pub fn effective(self) -> Parallelism {
        if cfg!(feature = "parallel") {
            self
        } else {
            Parallelism::Sequential
        }
    }
}

/// Maps `f` over `items`, preserving order.
pub fn map<T, R, F>(par: Parallelism, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync + Send,
{
    match par.effective() {
        Parallelism::Sequential => items.iter().enumerate().map(|(i, t)| f(i, t)).collect(),
        Parallelism::Parallel => parallel_map(items, f),
    }
}

/// Like [`map`] but over owned items that the closure may mutate.
pub fn map_mut<T, R, F>(par: Parallelism, items: &mut [T], f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(usize, &mut T) -> R + Sync + Send,
{
    match par.effective() {
        Parallelism::Sequential => items.iter_mut().enumerate().map(|(i, t)| f(i, t)).collect(),
        Parallelism::Parallel => parallel_map_mut(items, f),
    }
}

#[cfg(feature = "parallel")]
fn parallel_map<T: Sync, R: Send, F: Fn(usize, &T) -> R + Sync + Send>(items: &[T], f: F) -> Vec<R> {
    use rayon::prelude::*;
    items.par_iter().enumerate().map(|(i, t)| f(i, t)).collect()
}

#[cfg(not(feature = "parallel"))]
fn parallel_map<T: Sync, R: Send, F: Fn(usize, &T) -> R + Sync + Send>(items: &[T], f: F) -> Vec<R> {
    items.iter().enumerate().map(|(i, t)| f(i, t)).collect()
}

#[cfg(feature = "parallel")]
fn parallel_map_mut<T: Send, R: Send, F: Fn(usize, &mut T) -> R + Sync + Send>(items: &mut [T], f: F) -> Vec<R> {
    use rayon::prelude::*;
    items.par_iter_mut().enumerate().map(|(i, t)| f(i, t)).collect()
}

#[cfg(not(feature = "parallel"))]
fn parallel_map_mut<T: Send, R: Send, F: Fn(usize, &mut T) -> R + Sync + Send>(items: &mut [T], f: F) -> Vec<R> {
    items.iter_mut().enumerate().map(|(i, t)| f(i, t)).collect()
}

/// SplitMix64-style mixing of a base seed with stream identifiers.
pub fn derive_seed(base: u64, stream: &[u64]) -> u64 {
    let mut z = base ^ 0x9E37_79B9_7F4A_7C15;
    for s in stream {
        z = z.wrapping_add(s.wrapping_mul(0xBF58_476D_1CE4_E5B9)).wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
    }
    z
}
