// SPDX-License-Identifier: MIT OR Apache-2.0

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::{rng, Error, Result};

/// Below this sample size p-values come from permutations.
pub const T_APPROX_MIN_N: usize = 30;
/// Up to this size every permutation is enumerated.
pub const EXACT_PERMUTATION_MAX_N: usize = 7;
pub const PERMUTATION_DRAWS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PValueMethod {
    TApprox,
    Permutation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult {
    /// `None` when either input has no rank variance.
    pub rho: Option<f64>,
    pub p_value: Option<f64>,
    pub n: usize,
    pub method: PValueMethod,
}

/// 1-based ranks with ties sharing their average rank.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Pearson correlation, `None` when either side is constant.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

fn next_permutation(p: &mut [usize]) -> bool {
    let Some(i) = (1..p.len()).rev().find(|&i| p[i - 1] < p[i]) else {
        return false;
    };
    let j = (i..p.len()).rev().find(|&j| p[j] > p[i - 1]).expect("successor exists");
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

/// Spearman rank correlation with a two-sided p-value.
///
/// For `n >= 30` the p-value uses the t approximation with `n - 2` degrees
/// of freedom. Smaller samples use a permutation test on the ranks: all
/// `n!` orderings up to `n = 7`, otherwise 10,000 seeded draws with the
/// `(count + 1) / (draws + 1)` estimate.
pub fn spearman(xs: &[f64], ys: &[f64], seed: u64) -> Result<CorrelationResult> {
    if xs.len() != ys.len() {
        return Err(Error::invalid(format!("spearman inputs differ in length ({} vs {})", xs.len(), ys.len())));
    }
    let n = xs.len();
    if n < 3 {
        return Err(Error::invalid(format!("spearman needs at least 3 pairs, got {n}")));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(Error::invalid("spearman inputs must be finite"));
    }
    let method = if n >= T_APPROX_MIN_N {
        PValueMethod::TApprox
    } else {
        PValueMethod::Permutation
    };
    let (rx, ry) = (average_ranks(xs), average_ranks(ys));
    let Some(rho) = pearson(&rx, &ry) else {
        return Ok(CorrelationResult {
            rho: None,
            p_value: None,
            n,
            method,
        });
    };
    let p = match method {
        PValueMethod::TApprox => {
            if rho.abs() >= 1.0 {
                0.0
            } else {
                let df = (n - 2) as f64;
                let t = rho * (df / (1.0 - rho * rho)).sqrt();
                let dist = StudentsT::new(0.0, 1.0, df).expect("valid t distribution");
                (2.0 * (1.0 - dist.cdf(t.abs()))).clamp(0.0, 1.0)
            }
        }
        PValueMethod::Permutation => {
            let observed = rho.abs() - 1e-12;
            let extreme = |perm: &[usize]| {
                let shuffled: Vec<f64> = perm.iter().map(|&i| ry[i]).collect();
                pearson(&rx, &shuffled).is_some_and(|r| r.abs() >= observed)
            };
            if n <= EXACT_PERMUTATION_MAX_N {
                let mut perm: Vec<usize> = (0..n).collect();
                let (mut hits, mut total) = (0usize, 0usize);
                loop {
                    total += 1;
                    hits += extreme(&perm) as usize;
                    if !next_permutation(&mut perm) {
                        break;
                    }
                }
                hits as f64 / total as f64
            } else {
                let mut rng = rng::stream(seed, "permutation-test");
                let mut perm: Vec<usize> = (0..n).collect();
                let mut hits = 0usize;
                for _ in 0..PERMUTATION_DRAWS {
                    perm.shuffle(&mut rng);
                    hits += extreme(&perm) as usize;
                }
                (hits + 1) as f64 / (PERMUTATION_DRAWS + 1) as f64
            }
        }
    };
    Ok(CorrelationResult {
        rho: Some(rho),
        p_value: Some(p),
        n,
        method,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranks_average_ties() {
        assert_eq!(average_ranks(&[10.0, 20.0, 20.0, 5.0]), vec![2.0, 3.5, 3.5, 1.0]);
    }

    #[test]
    fn exhaustive_p_for_perfect_order_of_five() {
        // Only the identity and the reversal reach |rho| = 1: 2 / 120.
        let r = spearman(&[1.0, 2.0, 3.0, 4.0, 5.0], &[2.0, 4.0, 6.0, 8.0, 10.0], 0).unwrap();
        assert_eq!(r.rho, Some(1.0));
        assert!((r.p_value.unwrap() - 2.0 / 120.0).abs() < 1e-15);
    }

    #[test]
    fn constant_input_is_undefined() {
        let r = spearman(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0], 0).unwrap();
        assert_eq!((r.rho, r.p_value), (None, None));
    }

    #[test]
    fn short_or_mismatched_inputs_rejected() {
        assert!(spearman(&[1.0, 2.0], &[1.0, 2.0], 0).is_err());
        assert!(spearman(&[1.0, 2.0, 3.0], &[1.0, 2.0], 0).is_err());
    }
}
