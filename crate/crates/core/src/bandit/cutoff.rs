//! Value iteration on the log-odds lattice.
//!
//! With `pi(z)` the type-1 probability at log-odds `z`, the normalized value
//! satisfies
//!
//! ```text
//! V(z) = max{ 0, (1 - delta)(2 pi(z) - 1) + delta * sum_o q_o(z) V(z + step_o alpha) }
//! ```
//!
//! where `q_o(z) = pi(z) p1_o + (1 - pi(z)) p0_o`. Stopping (safe forever) is
//! worth 0. The lattice is cut at `|j| <= K_max`: below it the value is 0,
//! above it the pull-forever value `2 pi - 1`.

use serde::{Deserialize, Serialize};

use super::{logistic, BanditSpec, Outcome};
use crate::error::{Error, Result};

/// Sup-norm residual at which value iteration stops.
pub const VI_TOL: f64 = 1e-12;
const MAX_SWEEPS: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutoffResult {
    pub kstar: i64,
    /// `values[i]` is `V` at lattice index `j = i + lattice_span.0`.
    pub values: Vec<f64>,
    pub lattice_span: (i64, i64),
    pub k_max: i64,
    pub iterations: usize,
    pub residual: f64,
    /// Sup-norm change of each sweep.
    pub residual_history: Vec<f64>,
    /// Cut-off found on the lattice with `2 K_max`, when that check ran.
    pub kstar_doubled: Option<i64>,
}

impl CutoffResult {
    /// Value at log-odds `j alpha`, if `j` is on the lattice.
    pub fn value_at(&self, j: i64) -> Option<f64> {
        let (lo, hi) = self.lattice_span;
        (lo..=hi).contains(&j).then(|| self.values[(j - lo) as usize])
    }
}

/// `4 (1 + 2 ln 2 / alpha + 2 (1 - p0_a) / (p0_a (1 - delta)))`.
pub fn cutoff_bound(spec: &BanditSpec) -> f64 {
    let p = spec.p0a();
    4.0 * (1.0 + 2.0 * std::f64::consts::LN_2 / spec.alpha + 2.0 * (1.0 - p) / (p * (1.0 - spec.delta)))
}

/// `2 ceil(cutoff_bound) + 8`.
pub fn default_k_max(spec: &BanditSpec) -> i64 {
    2 * cutoff_bound(spec).ceil() as i64 + 8
}

enum Next {
    Index(usize),
    Fixed(f64),
}

pub(crate) struct LatticeValues {
    pub values: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
    pub residual_history: Vec<f64>,
}

pub(crate) fn value_iteration(spec: &BanditSpec, k_max: i64) -> Result<LatticeValues> {
    let n = (2 * k_max + 1) as usize;
    let alpha = spec.alpha;
    let pull_forever = |j: i64| 2.0 * logistic(j as f64 * alpha) - 1.0;

    let mut flow = Vec::with_capacity(n);
    let mut moves: Vec<[(f64, Next); 3]> = Vec::with_capacity(n);
    for i in 0..n {
        let j = i as i64 - k_max;
        let pi = logistic(j as f64 * alpha);
        flow.push((1.0 - spec.delta) * (2.0 * pi - 1.0));
        moves.push(Outcome::ALL.map(|o| {
            let k = o.index();
            let q = pi * spec.p1[k] + (1.0 - pi) * spec.p0[k];
            let t = j + o.step();
            let next = if t < -k_max {
                Next::Fixed(0.0)
            } else if t > k_max {
                Next::Fixed(pull_forever(t))
            } else {
                Next::Index((t + k_max) as usize)
            };
            (q, next)
        }));
    }

    let mut v: Vec<f64> = (0..n).map(|i| pull_forever(i as i64 - k_max).max(0.0)).collect();
    let mut next = vec![0.0; n];
    let mut history = Vec::new();
    for sweep in 1..=MAX_SWEEPS {
        let mut residual: f64 = 0.0;
        for i in 0..n {
            let mut cont = 0.0;
            for (q, t) in &moves[i] {
                cont += q * match t {
                    Next::Index(ix) => v[*ix],
                    Next::Fixed(x) => *x,
                };
            }
            let x = (flow[i] + spec.delta * cont).max(0.0);
            residual = residual.max((x - v[i]).abs());
            next[i] = x;
        }
        std::mem::swap(&mut v, &mut next);
        history.push(residual);
        if residual < VI_TOL {
            return Ok(LatticeValues {
                values: v,
                iterations: sweep,
                residual,
                residual_history: history,
            });
        }
    }
    Err(Error::NoConvergence(format!("value iteration with K_max = {k_max}")))
}

/// Solves on a fixed lattice without the doubling check.
pub fn solve_cutoff_with(spec: &BanditSpec, k_max: i64) -> Result<CutoffResult> {
    spec.validate()?;
    if k_max < 3 {
        return Err(Error::TruncationTooTight { kstar: 0, k_max });
    }
    let lv = value_iteration(spec, k_max)?;
    let at = |k: i64| lv.values[(k_max - k) as usize];
    let kstar = (0..=k_max)
        .find(|&k| at(k) == 0.0)
        .ok_or(Error::TruncationTooTight { kstar: k_max, k_max })?;
    if kstar >= k_max - 2 {
        return Err(Error::TruncationTooTight { kstar, k_max });
    }
    if let Some(k) = (kstar..=k_max).find(|&k| at(k) != 0.0) {
        return Err(Error::NotThreshold {
            kstar,
            level: k,
            value: at(k),
        });
    }
    Ok(CutoffResult {
        kstar,
        values: lv.values,
        lattice_span: (-k_max, k_max),
        k_max,
        iterations: lv.iterations,
        residual: lv.residual,
        residual_history: lv.residual_history,
        kstar_doubled: None,
    })
}

/// Solves with `K_max = default_k_max(spec)` and confirms the cut-off on a
/// lattice twice as wide.
pub fn solve_cutoff(spec: &BanditSpec) -> Result<CutoffResult> {
    let k_max = default_k_max(spec);
    let mut result = solve_cutoff_with(spec, k_max)?;
    let doubled = solve_cutoff_with(spec, 2 * k_max)?;
    if doubled.kstar != result.kstar {
        return Err(Error::TruncationSensitive {
            kstar: result.kstar,
            kstar_doubled: doubled.kstar,
        });
    }
    result.kstar_doubled = Some(doubled.kstar);
    Ok(result)
}
