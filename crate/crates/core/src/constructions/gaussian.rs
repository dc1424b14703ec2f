//! Gaussian precision construction with a slowly vanishing experimentation
//! sequence.
//!
//! With reward 1 iff `|theta - a| <= 1` and a normal belief of precision `rho`,
//! the best one-shot action is the belief mean, and the myopic value is
//! `u(rho) = P(|N(0, 1/rho)| <= 1) = 2 Phi(sqrt(rho)) - 1 = erf(sqrt(rho / 2))`.
//!
//! Given gaps `eps_1 > eps_2 > ...`, the signal precisions `rho_n` are chosen
//! so that `u(rho_1 + ... + rho_n) = eps_1 + ... + eps_n`. Stage `n`'s
//! prescribed action is then exactly `eps_n`-suboptimal, so `N(eps_n) = n`.

use serde::{Deserialize, Serialize};

use crate::error::{precondition, Error, Result};

/// Residual target of the bisection inverse of [`gaussian_ubar`].
pub const INVERSION_TOL: f64 = 1e-12;

/// Lower bound on consecutive ratios `eps_n / eps_{n-1}`.
pub const SLOW_DECAY_RATIO: f64 = 2.0 / 3.0;

pub fn gaussian_ubar(rho: f64) -> Result<f64> {
    if !(rho > 0.0) || rho.is_nan() {
        return Err(precondition("rho", "rho > 0", rho));
    }
    Ok(libm::erf((rho / 2.0).sqrt()))
}

/// Smallest-residual `rho >= lower` with `gaussian_ubar(rho) = target`.
pub fn invert_ubar(target: f64, lower: f64) -> Result<f64> {
    if !(target > 0.0 && target < 1.0) {
        return Err(precondition(
            "cumulative epsilon",
            "0 < sum < 1 (the myopic value never reaches 1)",
            target,
        ));
    }
    let u = |r: f64| if r > 0.0 { libm::erf((r / 2.0).sqrt()) } else { 0.0 };
    let mut lo = lower.max(0.0);
    if u(lo) > target {
        return Err(Error::Check(format!(
            "target {target} lies below u({lo}); targets must increase"
        )));
    }
    let mut hi = lo.max(1.0);
    while u(hi) < target {
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(Error::NoConvergence(format!("bracketing u^-1({target})")));
        }
    }
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if u(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let best = if (u(lo) - target).abs() <= (u(hi) - target).abs() && lo > 0.0 {
        lo
    } else {
        hi
    };
    let residual = (u(best) - target).abs();
    if residual >= INVERSION_TOL {
        return Err(Error::NoConvergence(format!("u^-1({target}): residual {residual:e}")));
    }
    Ok(best)
}

/// `1 / (n ln^2 n)`, defined for `n >= 2`.
fn profile(n: f64) -> f64 {
    let l = n.ln();
    1.0 / (n * l * l)
}

/// `sum_{n >= from} 1 / (n ln^2 n)`: direct summation up to `1e6`, then
/// Euler-Maclaurin on the remainder.
fn profile_tail_sum(from: usize) -> f64 {
    const M: usize = 1_000_000;
    let from = from.max(2);
    let direct: f64 = if from < M {
        (from..M).rev().map(|n| profile(n as f64)).sum()
    } else {
        0.0
    };
    let m = from.max(M) as f64;
    let lm = m.ln();
    let integral = 1.0 / lm;
    let derivative = -(lm + 2.0) / (m * m * lm * lm * lm);
    direct + integral + profile(m) / 2.0 - derivative / 12.0
}

/// First index from which the profile's consecutive ratio stays above 2/3.
pub fn slow_decay_onset() -> usize {
    (3..)
        .find(|&n| profile((n + 1) as f64) / profile(n as f64) > SLOW_DECAY_RATIO)
        .expect("profile ratio tends to 1")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsilonSequence {
    /// `eps_1 .. eps_{n_max}`.
    pub values: Vec<f64>,
    /// Sum of the infinite sequence.
    pub target_sum: f64,
    /// First index following the `1 / (n ln^2 n)` profile.
    pub onset: usize,
    /// Geometric ratio used for indices below `onset`.
    pub head_ratio: f64,
}

/// Sequence with the `1 / (n ln^2 n)` profile from `onset` on and a
/// geometric head below it, scaled so the infinite sum is `target_sum`.
/// The head ratio equals the profile's own ratio at the junction.
pub fn epsilon_sequence(n_max: usize, target_sum: f64, onset: usize) -> Result<EpsilonSequence> {
    if n_max < 3 {
        return Err(precondition("n_max", "n_max >= 3", n_max));
    }
    if !(target_sum > 0.5 && target_sum < 1.0) {
        return Err(precondition("target_sum", "1/2 < target_sum < 1", target_sum));
    }
    if onset < 3 {
        return Err(precondition(
            "onset",
            "onset >= 3 (the profile is undefined at n = 1)",
            onset,
        ));
    }
    let head_ratio = profile(onset as f64) / profile((onset + 1) as f64);
    let raw = |n: usize| {
        if n >= onset {
            profile(n as f64)
        } else {
            profile(onset as f64) * head_ratio.powi((onset - n) as i32)
        }
    };
    let head: f64 = (1..onset).map(raw).sum();
    let scale = target_sum / (head + profile_tail_sum(onset));
    Ok(EpsilonSequence {
        values: (1..=n_max).map(|n| scale * raw(n)).collect(),
        target_sum,
        onset,
        head_ratio,
    })
}

/// [`epsilon_sequence`] with the onset at [`slow_decay_onset`].
pub fn default_epsilon_sequence(n_max: usize, target_sum: f64) -> Result<EpsilonSequence> {
    epsilon_sequence(n_max, target_sum, slow_decay_onset())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceChecks {
    pub positive: bool,
    pub strictly_decreasing: bool,
    /// `target_sum` in (1/2, 1) and the prefix sum stays below it.
    pub sum_in_range: bool,
    pub prefix_sum: f64,
    /// `min_n eps_n / eps_{n-1}` over the prefix.
    pub min_ratio: f64,
    pub slow_decay: bool,
    pub max_residual: f64,
    pub recursion_ok: bool,
}

impl SequenceChecks {
    pub fn all_ok(&self) -> bool {
        self.positive && self.strictly_decreasing && self.sum_in_range && self.slow_decay && self.recursion_ok
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianConstruction {
    pub n_max: usize,
    pub eps_seq: Vec<f64>,
    /// `rho_1` is the prior precision, `rho_n` (n >= 2) the precision of the n-th signal noise.
    pub rho_seq: Vec<f64>,
    /// `eps_1 + ... + eps_n`.
    pub eps_partial: Vec<f64>,
    /// `rho_1 + ... + rho_n`.
    pub precision_partial: Vec<f64>,
    pub partial_sum: f64,
    pub target_sum: f64,
    pub checks: SequenceChecks,
}

/// Residual bound for `|u(sum rho) - sum eps|`.
pub const RECURSION_TOL: f64 = 1e-10;

pub fn solve_rho_sequence(seq: &EpsilonSequence) -> Result<GaussianConstruction> {
    let eps = &seq.values;
    if eps.is_empty() {
        return Err(precondition("eps_seq", "non-empty", 0));
    }
    let positive = eps.iter().all(|e| *e > 0.0);
    let strictly_decreasing = eps.windows(2).all(|w| w[1] < w[0]);
    if !positive || !strictly_decreasing {
        return Err(Error::Check(
            "epsilon sequence must be positive and strictly decreasing".into(),
        ));
    }

    let mut eps_partial = Vec::with_capacity(eps.len());
    let mut acc = 0.0;
    for e in eps {
        acc += e;
        eps_partial.push(acc);
    }

    let mut rho_seq = Vec::with_capacity(eps.len());
    let mut precision_partial = Vec::with_capacity(eps.len());
    let mut prev = 0.0;
    let mut total = 0.0;
    for target in &eps_partial {
        let level = invert_ubar(*target, prev)?;
        let rho = level - prev;
        if !(rho > 0.0) {
            return Err(Error::Check(format!(
                "non-positive precision increment at sum {target}"
            )));
        }
        rho_seq.push(rho);
        total += rho;
        precision_partial.push(total);
        prev = level;
    }

    let mut max_residual: f64 = 0.0;
    for (r, s) in precision_partial.iter().zip(&eps_partial) {
        max_residual = max_residual.max((gaussian_ubar(*r)? - s).abs());
    }
    let partial_sum = *eps_partial.last().unwrap();
    let min_ratio = eps.windows(2).map(|w| w[1] / w[0]).fold(f64::INFINITY, f64::min);
    let checks = SequenceChecks {
        positive,
        strictly_decreasing,
        sum_in_range: seq.target_sum > 0.5 && seq.target_sum < 1.0 && partial_sum < seq.target_sum,
        prefix_sum: partial_sum,
        min_ratio,
        slow_decay: min_ratio > SLOW_DECAY_RATIO,
        max_residual,
        recursion_ok: max_residual < RECURSION_TOL,
    };
    Ok(GaussianConstruction {
        n_max: eps.len(),
        eps_seq: eps.clone(),
        rho_seq,
        eps_partial,
        precision_partial,
        partial_sum,
        target_sum: seq.target_sum,
        checks,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationCheck {
    pub k: usize,
    pub delta: f64,
    /// Bracket on the discounted reward of staying on the prescribed path from stage `k`.
    pub continuation_lower: f64,
    pub continuation_upper: f64,
    /// Reward of deviating at stage `k`: `eps_1 + ... + eps_k` forever.
    pub stopping: f64,
    /// `continuation_lower > stopping`.
    pub ok: bool,
}

/// Compares `(1 - delta) sum_{n >= k} delta^(n-k) S_{n-1}` with `S_k`, where
/// `S_j = eps_1 + ... + eps_j`. Terms past `n_max` are bracketed by
/// `S_{n_max}` and `target_sum`.
pub fn prop2_deviation_check(g: &GaussianConstruction, k: usize, delta: f64) -> Result<DeviationCheck> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(precondition("delta", "0 < delta < 1", delta));
    }
    if k < 1 || k >= g.n_max {
        return Err(precondition("k", format!("1 <= k <= n_max - 1 = {}", g.n_max - 1), k));
    }
    let s = |j: usize| if j == 0 { 0.0 } else { g.eps_partial[j - 1] };
    let mut weight = 1.0;
    let mut finite = 0.0;
    for n in k..=g.n_max {
        finite += weight * s(n - 1);
        weight *= delta;
        if weight == 0.0 {
            break;
        }
    }
    // `weight` is now delta^(n_max + 1 - k), the mass of the tail.
    let finite = (1.0 - delta) * finite;
    let continuation_lower = finite + weight * s(g.n_max);
    let continuation_upper = finite + weight * g.target_sum;
    let stopping = s(k);
    Ok(DeviationCheck {
        k,
        delta,
        continuation_lower,
        continuation_upper,
        stopping,
        ok: continuation_lower > stopping,
    })
}

/// `n * eps_n^alpha` for `n = 1 .. n_max`.
pub fn n_epsilon_alpha_curve(g: &GaussianConstruction, alpha: f64) -> Result<Vec<f64>> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(precondition("alpha", "0 < alpha < 1", alpha));
    }
    Ok(g.eps_seq
        .iter()
        .enumerate()
        .map(|(i, e)| (i + 1) as f64 * e.powf(alpha))
        .collect())
}

/// Number of prescribed stages whose gap is at least `eps`.
pub fn n_of_epsilon(g: &GaussianConstruction, eps: f64) -> usize {
    g.eps_seq.iter().filter(|e| **e >= eps).count()
}

/// `ln n` beyond which `n * eps_n^alpha` increases on the profile:
/// `d/d(ln n) [(1 - alpha) ln n - 2 alpha ln ln n] > 0`.
pub fn curve_growth_onset_log(alpha: f64) -> f64 {
    2.0 * alpha / (1.0 - alpha)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ubar_limits() {
        assert!(gaussian_ubar(1e-12).unwrap() < 1e-6);
        assert!(gaussian_ubar(1e6).unwrap() >= 1.0 - 1e-9);
        assert!(gaussian_ubar(0.0).is_err());
        assert!(gaussian_ubar(-1.0).is_err());
        let mut last = 0.0;
        for i in -40..=40 {
            let u = gaussian_ubar(10f64.powf(i as f64 / 10.0)).unwrap();
            assert!(u > last || (u == 1.0 && last == 1.0), "{u} after {last}");
            last = u;
        }
    }

    #[test]
    fn inversion() {
        for t in [1e-6, 0.1, 0.5, 0.9, 0.999] {
            let r = invert_ubar(t, 0.0).unwrap();
            assert!((gaussian_ubar(r).unwrap() - t).abs() < INVERSION_TOL);
        }
        assert!(invert_ubar(1.0, 0.0).is_err());
        assert!(invert_ubar(0.0, 0.0).is_err());
    }

    #[test]
    fn onset_is_where_ratio_clears_two_thirds() {
        let n0 = slow_decay_onset();
        assert_eq!(n0, 5);
        assert!(profile(5.0) / profile(4.0) < SLOW_DECAY_RATIO);
    }

    #[test]
    fn sequence_shape() {
        let seq = default_epsilon_sequence(2000, 0.75).unwrap();
        let v = &seq.values;
        assert!(v.windows(2).all(|w| w[1] < w[0]));
        assert!(v.windows(2).all(|w| w[1] / w[0] > SLOW_DECAY_RATIO));
        let mut s = 0.0;
        for e in v {
            s += e;
            assert!(s < 0.75);
        }
        // Consecutive ratios approach 1.
        let r = |i: usize| v[i] / v[i - 1];
        assert!(r(1999) > r(100) && r(100) > r(10));
        assert!(1.0 - r(1999) < 1e-3);
    }

    #[test]
    fn infinite_sum_matches_target() {
        // Prefix plus the analytic tail of the profile recovers the target.
        let seq = default_epsilon_sequence(50_000, 0.8).unwrap();
        let scale = seq.values[49_999] / profile(50_000.0);
        let prefix: f64 = seq.values.iter().sum();
        let total = prefix + scale * profile_tail_sum(50_001);
        assert!((total - 0.8).abs() < 1e-12, "{total}");
    }

    #[test]
    fn sequence_preconditions() {
        assert!(default_epsilon_sequence(2, 0.75).is_err());
        assert!(default_epsilon_sequence(10, 0.5).is_err());
        assert!(default_epsilon_sequence(10, 1.0).is_err());
        assert!(epsilon_sequence(10, 0.7, 2).is_err());
        // An onset of 3 keeps the sequence decreasing but breaks the 2/3 ratio at 4/3.
        let seq = epsilon_sequence(100, 0.7, 3).unwrap();
        let g = solve_rho_sequence(&seq).unwrap();
        assert!(g.checks.strictly_decreasing);
        assert!(!g.checks.slow_decay);
    }

    #[test]
    fn stages_counted_exactly() {
        let g = solve_rho_sequence(&default_epsilon_sequence(500, 0.75).unwrap()).unwrap();
        for n in [1, 2, 7, 100, 500] {
            assert_eq!(n_of_epsilon(&g, g.eps_seq[n - 1]), n);
        }
    }

    #[test]
    fn rho_recursion() {
        let g = solve_rho_sequence(&default_epsilon_sequence(1000, 0.75).unwrap()).unwrap();
        assert!(g.checks.all_ok(), "{:?}", g.checks);
        assert!(g.rho_seq.iter().all(|r| *r > 0.0));
        assert!(g.precision_partial.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn infeasible_cumulative_sum() {
        let seq = EpsilonSequence {
            values: vec![0.6, 0.5],
            target_sum: 0.9,
            onset: 3,
            head_ratio: 1.2,
        };
        assert!(matches!(solve_rho_sequence(&seq), Err(Error::Precondition { .. })));
    }

    #[test]
    fn deviation_depends_on_patience() {
        let g = solve_rho_sequence(&default_epsilon_sequence(2000, 0.75).unwrap()).unwrap();
        let d = prop2_deviation_check(&g, 1, 0.7).unwrap();
        assert!(d.ok && d.continuation_lower <= d.continuation_upper);
        let d = prop2_deviation_check(&g, 1, 0.999).unwrap();
        assert!(d.ok);
        for k in 1..5 {
            assert!(!prop2_deviation_check(&g, k, 0.1).unwrap().ok);
        }
        assert!(prop2_deviation_check(&g, 2000, 0.8).is_err());
        assert!(prop2_deviation_check(&g, 0, 0.8).is_err());
    }

    #[test]
    fn curve_growth() {
        let g = solve_rho_sequence(&default_epsilon_sequence(10_000, 0.75).unwrap()).unwrap();
        let c = n_epsilon_alpha_curve(&g, 0.5).unwrap();
        assert!(c[9..].windows(2).all(|w| w[1] > w[0]));
        assert!(n_epsilon_alpha_curve(&g, 1.0).is_err());
        // For alpha = 0.9 growth starts only once ln n > 18.
        assert!((curve_growth_onset_log(0.9) - 18.0).abs() < 1e-12);
        let c = n_epsilon_alpha_curve(&g, 0.9).unwrap();
        assert!(c[9_999] < c[99]);
        // At alpha = 0.99 the onset is ln n = 198: within 1e4 stages the curve
        // is still far below its first value.
        let c = n_epsilon_alpha_curve(&g, 0.99).unwrap();
        assert!((curve_growth_onset_log(0.99) - 198.0).abs() < 1e-9);
        assert!(c[9_999] < c[0]);
    }

    #[test]
    fn beta_proxy_needs_ln_n_above_twenty() {
        // eps_n n^beta is proportional to n^(beta - 1) / ln^2 n on the profile,
        // with log-derivative (beta - 1) - 2 / ln n: it rises only past ln n = 20.
        let g = solve_rho_sequence(&default_epsilon_sequence(10_000, 0.75).unwrap()).unwrap();
        let f = |n: usize| g.eps_seq[n - 1] * (n as f64).powf(1.1);
        assert!(f(10_000) < f(1_000) && f(1_000) < f(100));
        let d = |ln_n: f64| 0.1 - 2.0 / ln_n;
        assert!(d(19.9) < 0.0 && d(20.1) > 0.0);
    }
}
