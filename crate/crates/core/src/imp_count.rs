//! Counting of intermodulation products that land on each subcarrier.
//!
//! A third-order product `f_i + f_j - f_k` lands on subcarrier `s` when
//! `i + j - k = s`. Triples with `k = i` or `k = j` collapse to first order
//! and are excluded. `(i, j)` are counted as ordered pairs.

use crate::error::{domain, Result};
use serde::Serialize;
use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

pub const MAX_SUBCARRIERS: usize = 8192;
pub const MAX_BRUTEFORCE_SUBCARRIERS: usize = 32;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ImpProfile {
    pub n_s: usize,
    /// φ(3, s) for s = 1..=N_S, stored at index s - 1.
    pub phi3: Vec<u64>,
    /// Σ_s φ(3, s).
    pub phi: u64,
}

/// Third-order counts for every subcarrier in O(N_S²).
pub fn count_third_order(n_s: usize) -> Result<ImpProfile> {
    if n_s == 0 || n_s > MAX_SUBCARRIERS {
        return domain(format!("N_S must be in 1..={MAX_SUBCARRIERS}, got {n_s}"));
    }
    // pair_sums[t] = #{(i, j) in [1, N]² : i + j = t}
    let mut pair_sums = vec![0u64; 2 * n_s + 1];
    for i in 1..=n_s {
        for j in 1..=n_s {
            pair_sums[i + j] += 1;
        }
    }
    let phi3: Vec<u64> = (1..=n_s)
        .map(|s| {
            let landing: u64 = (1..=n_s).map(|k| pair_sums[s + k]).sum();
            // for each k, remove (i, j) = (k, s) and (s, k); they coincide when k = s
            landing - (2 * n_s as u64 - 1)
        })
        .collect();
    let phi = phi3.iter().sum();
    Ok(ImpProfile { n_s, phi3, phi })
}

/// Shared cache of third-order profiles keyed by N_S.
pub fn cached_third_order(n_s: usize) -> Result<Arc<ImpProfile>> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<ImpProfile>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(p) = cache.lock().expect("profile cache poisoned").get(&n_s) {
        return Ok(Arc::clone(p));
    }
    let profile = Arc::new(count_third_order(n_s)?);
    cache
        .lock()
        .expect("profile cache poisoned")
        .insert(n_s, Arc::clone(&profile));
    Ok(profile)
}

/// Exhaustive per-subcarrier counts of δ-order products built from
/// `(δ+1)/2` added and `(δ-1)/2` subtracted tones, no subtracted tone equal
/// to an added one. Test oracle only.
pub fn count_odd_order_bruteforce(n_s: usize, delta: usize) -> Result<Vec<u64>> {
    if !matches!(delta, 3 | 5 | 7) {
        return domain(format!("delta must be 3, 5 or 7, got {delta}"));
    }
    if n_s == 0 || n_s > MAX_BRUTEFORCE_SUBCARRIERS {
        return domain(format!("N_S must be in 1..={MAX_BRUTEFORCE_SUBCARRIERS}, got {n_s}"));
    }
    let plus = delta.div_ceil(2);
    let minus = (delta - 1) / 2;
    let mut counts = vec![0u64; n_s];
    let mut pos = vec![0usize; plus];
    let mut neg = vec![0usize; minus];
    enumerate_plus(n_s, &mut pos, 0, &mut neg, &mut counts);
    Ok(counts)
}

fn enumerate_plus(n: usize, pos: &mut [usize], depth: usize, neg: &mut [usize], counts: &mut [u64]) {
    if depth == pos.len() {
        enumerate_minus(n, pos, neg, 0, counts);
        return;
    }
    for v in 1..=n {
        pos[depth] = v;
        enumerate_plus(n, pos, depth + 1, neg, counts);
    }
}

fn enumerate_minus(n: usize, pos: &[usize], neg: &mut [usize], depth: usize, counts: &mut [u64]) {
    if depth == neg.len() {
        let total = pos.iter().sum::<usize>() as i64 - neg.iter().sum::<usize>() as i64;
        if total >= 1 && total <= n as i64 {
            counts[total as usize - 1] += 1;
        }
        return;
    }
    for v in 1..=n {
        if pos.contains(&v) {
            continue;
        }
        neg[depth] = v;
        enumerate_minus(n, pos, neg, depth + 1, counts);
    }
}
