//! Shared numeric primitives: normal distribution helpers, moments, and
//! deterministic seed derivation.

use std::f64::consts::{PI, SQRT_2};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Standard normal CDF, accurate to a few ulps.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}

/// Standard normal survival function 1 − Φ(x), computed without cancellation.
pub fn normal_sf(x: f64) -> f64 {
    0.5 * libm::erfc(x / SQRT_2)
}

/// Standard normal density.
pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Standard normal quantile. `p` must lie strictly inside (0, 1).
pub fn normal_quantile(p: f64) -> f64 {
    assert!(
        p > 0.0 && p < 1.0,
        "normal_quantile requires p in (0, 1), got {p}"
    );
    let mut x = quantile_guess(p);
    // Halley refinement against the erfc-based CDF; the tail that stays
    // far from 1 is used so the residual keeps full absolute precision.
    for _ in 0..2 {
        let d = normal_pdf(x);
        if d <= 0.0 {
            break;
        }
        let err = if x <= 0.0 {
            normal_cdf(x) - p
        } else {
            (1.0 - p) - normal_sf(x)
        };
        let u = err / d;
        x -= u / (1.0 + 0.5 * x * u);
    }
    x
}

/// Rational approximation of the normal quantile (relative error ~1e-9),
/// used as the seed for Halley refinement.
fn quantile_guess(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969683028665376e1,
        2.209460984245205e2,
        -2.759285104469687e2,
        1.383577518672690e2,
        -3.066479806614716e1,
        2.506628277459239,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e1,
        1.615858368580409e2,
        -1.556989798598866e2,
        6.680131188771972e1,
        -1.328068155288572e1,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-3,
        -3.223964580411365e-1,
        -2.400758277161838,
        -2.549732539343734,
        4.374664141464968,
        2.938163982698783,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-3,
        3.224671290700398e-1,
        2.445134137142996,
        3.754408661907416,
    ];
    const P_LOW: f64 = 0.02425;
    let tail = |q: f64| {
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    if p < P_LOW {
        tail((-2.0 * p.ln()).sqrt())
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -tail((-2.0 * (1.0 - p).ln()).sqrt())
    }
}

/// Two-sided p-value of a z-statistic.
pub fn two_sided_p(z: f64) -> f64 {
    (2.0 * normal_sf(z.abs())).min(1.0)
}

/// Critical value z_{1−α/2}.
pub fn z_crit(alpha: f64) -> f64 {
    normal_quantile(1.0 - alpha / 2.0)
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Variance with denominator n. Exactly zero for constant input.
pub fn population_variance(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    if xs.iter().all(|&x| x == xs[0]) {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64
}

/// Variance with denominator n−1; zero when fewer than two observations.
/// Exactly zero for constant input.
pub fn sample_variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    if xs.iter().all(|&x| x == xs[0]) {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

pub fn sample_sd(xs: &[f64]) -> f64 {
    sample_variance(xs).sqrt()
}

/// Mean of `xs` under weights `ws`. Panics if lengths differ.
pub fn weighted_mean(xs: &[f64], ws: &[f64]) -> f64 {
    assert_eq!(xs.len(), ws.len(), "weighted_mean length mismatch");
    let wsum: f64 = ws.iter().sum();
    if wsum == 0.0 {
        return f64::NAN;
    }
    xs.iter().zip(ws).map(|(x, w)| x * w).sum::<f64>() / wsum
}

pub fn expit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// SplitMix64 finalizer; a bijection on u64 used to decorrelate derived seeds.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from a parent seed and a context word. For a fixed
/// parent, distinct words give distinct children.
pub fn mix(seed: u64, word: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ word)
}

/// FNV-1a hash of a label; stable across platforms.
pub fn label_hash(s: &str) -> u64 {
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    for b in s.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

/// Deterministic RNG stream for a derived seed.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// Context words that keep independent randomized stages on disjoint streams.
pub(crate) const CTX_SPLIT: u64 = 0x5350_4C49; // four-way split shuffles
pub(crate) const CTX_BOOT_DETECT: u64 = 0x4244_4554; // detection-half bootstrap
pub(crate) const CTX_BOOT_MITIGATE: u64 = 0x424D_4954; // mitigation-half bootstrap
pub(crate) const CTX_ROW: u64 = 0x5349_4D52; // simulated row covariate/arm stream
pub(crate) const CTX_EPS: u64 = 0x5349_4D45; // simulated prediction-noise stream
pub(crate) const CTX_DRAW: u64 = 0x4452_4157; // population subsampling
pub(crate) const CTX_FOLD: u64 = 0x464F_4C44; // cross-validation folds
pub(crate) const CTX_NOISE: u64 = 0x4E4F_4953; // targeting noise grid

/// Integer allocation of `total` across buckets proportional to `quotas`:
/// floors first, then largest fractional remainders (ties to the lower index),
/// never exceeding per-bucket capacities. Panics if capacities cannot absorb
/// `total`.
pub(crate) fn largest_remainder(quotas: &[f64], total: usize, caps: &[usize]) -> Vec<usize> {
    assert_eq!(quotas.len(), caps.len());
    assert!(caps.iter().sum::<usize>() >= total, "capacity shortfall");
    let mut alloc: Vec<usize> = quotas
        .iter()
        .zip(caps)
        .map(|(q, &c)| (q.floor().max(0.0) as usize).min(c))
        .collect();
    let mut assigned: usize = alloc.iter().sum();
    if assigned > total {
        // Floating-point drift can overshoot by a unit; trim from the end.
        for a in alloc.iter_mut().rev() {
            if assigned == total {
                break;
            }
            let cut = (*a).min(assigned - total);
            *a -= cut;
            assigned -= cut;
        }
    }
    let mut order: Vec<usize> = (0..quotas.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    while assigned < total {
        let before = assigned;
        for &idx in &order {
            if assigned == total {
                break;
            }
            if alloc[idx] < caps[idx] {
                alloc[idx] += 1;
                assigned += 1;
            }
        }
        assert!(assigned > before, "allocation stalled");
    }
    alloc
}
