//! Seeded Monte Carlo play of a decision rule.
//!
//! Stage protocol: the automaton state reached after the previous actions
//! emits an observation drawn for the true parameter, the belief is updated,
//! the rule picks an action, the stage is assessed, and the automaton moves.
//!
//! Replication `i` of a batch seeded with `master` uses a `ChaCha8Rng` seeded
//! (via `SeedableRng::seed_from_u64`) with [`replication_seed`]`(master, i)`,
//! so any single replication can be replayed with [`simulate`]. Batches are
//! reduced in replication order with [`crate::stats::pairwise_sum`], which makes reports
//! independent of the worker count.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::belief::{gap_parts, myopic_best_of, theorem_bound, update_into, StageAssessment};
use crate::error::{Error, Result};
use crate::model::{Belief, DecisionProblem, PROB_TOL};
use crate::stats::mean_and_se;

/// Default hard cap on the number of stages per trajectory.
pub const DEFAULT_CAP: usize = 100_000;

/// What a rule sees when choosing the stage-`stage` action.
#[derive(Debug, Clone, Copy)]
pub struct StageView<'a> {
    /// 1-based stage index.
    pub stage: usize,
    /// Posterior after this stage's observation.
    pub belief: &'a [f64],
    /// Automaton state that emitted this stage's observation.
    pub kstate: usize,
    pub observation: usize,
    /// `(observation, action)` for every earlier stage.
    pub history: &'a [(usize, usize)],
}

/// Deterministic map from histories to actions.
pub trait DecisionRule: Sync {
    fn name(&self) -> &str;

    fn choose(&self, problem: &DecisionProblem, view: &StageView<'_>) -> usize;

    /// Claim that `action` will be repeated forever and the kernel is silent
    /// from the next stage on. The engine checks the claim with
    /// [`check_absorption`] and fails the run if it does not hold.
    fn declares_absorption(&self, _problem: &DecisionProblem, _view: &StageView<'_>, _action: usize) -> bool {
        false
    }
}

/// Plays the myopically optimal action (first maximizer) every stage.
#[derive(Debug, Clone, Copy, Default)]
pub struct MyopicRule;

impl DecisionRule for MyopicRule {
    fn name(&self) -> &str {
        "myopic"
    }

    fn choose(&self, problem: &DecisionProblem, view: &StageView<'_>) -> usize {
        myopic_best_of(problem, view.belief).0
    }

    fn declares_absorption(&self, problem: &DecisionProblem, view: &StageView<'_>, action: usize) -> bool {
        let gap = gap_parts(problem, view.belief, action).2;
        check_absorption(problem, view.belief, view.kstate, action, gap).is_ok()
    }
}

/// Conditions under which repeating `action` from state `kstate` freezes the
/// belief and every later gap equals `gap`, which must be zero.
pub fn check_absorption(
    p: &DecisionProblem,
    weights: &[f64],
    kstate: usize,
    action: usize,
    gap: f64,
) -> std::result::Result<(), String> {
    let next = p.next_state(kstate, action);
    if p.next_state(next, action) != next {
        return Err(format!(
            "state `{}` is not closed under action `{}`",
            p.kernel.states[next], p.actions[action]
        ));
    }
    let mut support = weights.iter().enumerate().filter(|(_, w)| **w > 0.0).map(|(t, _)| t);
    if let Some(first) = support.next() {
        let reference = p.emission(next, first);
        for t in support {
            let row = p.emission(next, t);
            if row.iter().zip(reference).any(|(a, b)| (a - b).abs() > PROB_TOL) {
                return Err(format!(
                    "state `{}` is informative about `{}`",
                    p.kernel.states[next], p.params.labels[t]
                ));
            }
        }
    }
    if gap != 0.0 {
        return Err(format!("the frozen gap {gap} is not zero"));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub observation: usize,
    pub action: usize,
    pub assessment: StageAssessment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub drawn_parameter: usize,
    pub stages: Vec<StageRecord>,
    /// The cap was reached before the rule absorbed.
    pub truncated: bool,
}

impl Trajectory {
    pub fn total_gap(&self) -> f64 {
        self.stages.iter().map(|s| s.assessment.gap).sum()
    }
}

/// Seed of replication `index` in a batch seeded with `master`: the
/// `(index + 1)`-th output of a SplitMix64 stream started at `master`.
pub fn replication_seed(master: u64, index: u64) -> u64 {
    let mut z = master.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub(crate) fn rng_for(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Inverse-CDF draw; rounding shortfall in the cumulative sum falls on the
/// last positive entry.
pub(crate) fn sample_index(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last = 0;
    for (i, q) in probs.iter().enumerate() {
        if *q > 0.0 {
            acc += q;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}

struct Scratch {
    belief: Vec<f64>,
    next: Vec<f64>,
    history: Vec<(usize, usize)>,
}

struct Outcome {
    stages: usize,
    truncated: bool,
}

/// Per-stage callback payload.
struct StageEvent<'a> {
    observation: usize,
    action: usize,
    belief: &'a [f64],
    myopic: f64,
    chosen: f64,
    gap: f64,
}

fn drive<R: Rng>(
    p: &DecisionProblem,
    rule: &dyn DecisionRule,
    theta: usize,
    rng: &mut R,
    cap: usize,
    scratch: &mut Scratch,
    mut on_stage: impl FnMut(StageEvent<'_>),
) -> Result<Outcome> {
    scratch.belief.clear();
    scratch.belief.extend_from_slice(&p.params.prior);
    scratch.history.clear();
    let mut kstate = p.kernel.start;

    for stage in 1..=cap {
        let obs = sample_index(p.emission(kstate, theta), rng.random::<f64>());
        update_into(p, &scratch.belief, kstate, obs, &mut scratch.next)?;
        std::mem::swap(&mut scratch.belief, &mut scratch.next);

        let view = StageView {
            stage,
            belief: &scratch.belief,
            kstate,
            observation: obs,
            history: &scratch.history,
        };
        let action = rule.choose(p, &view);
        if action >= p.num_actions() {
            return Err(Error::Check(format!(
                "rule `{}` chose action index {action} at stage {stage}",
                rule.name()
            )));
        }
        let (myopic, chosen, gap) = gap_parts(p, &scratch.belief, action);
        on_stage(StageEvent {
            observation: obs,
            action,
            belief: &scratch.belief,
            myopic,
            chosen,
            gap,
        });

        if rule.declares_absorption(p, &view, action) {
            return match check_absorption(p, &scratch.belief, kstate, action, gap) {
                Ok(()) => Ok(Outcome {
                    stages: stage,
                    truncated: false,
                }),
                Err(reason) => Err(Error::AbsorptionRejected {
                    rule: rule.name().to_string(),
                    stage,
                    reason,
                }),
            };
        }
        scratch.history.push((obs, action));
        kstate = p.next_state(kstate, action);
    }
    Ok(Outcome {
        stages: cap,
        truncated: true,
    })
}

fn scratch_for(p: &DecisionProblem) -> Scratch {
    Scratch {
        belief: Vec::with_capacity(p.num_params()),
        next: Vec::with_capacity(p.num_params()),
        history: Vec::new(),
    }
}

fn run_recorded<R: Rng>(
    p: &DecisionProblem,
    rule: &dyn DecisionRule,
    theta: usize,
    rng: &mut R,
    cap: usize,
) -> Result<Trajectory> {
    let mut stages = Vec::new();
    let mut scratch = scratch_for(p);
    let out = drive(p, rule, theta, rng, cap, &mut scratch, |ev| {
        stages.push(StageRecord {
            observation: ev.observation,
            action: ev.action,
            assessment: StageAssessment {
                belief: Belief::from_raw(ev.belief.to_vec()),
                myopic_value: ev.myopic,
                chosen_value: ev.chosen,
                gap: ev.gap,
            },
        })
    })?;
    Ok(Trajectory {
        drawn_parameter: theta,
        stages,
        truncated: out.truncated,
    })
}

fn check_cap(cap: usize) -> Result<()> {
    if cap == 0 {
        return Err(Error::InvalidConfig("cap must be at least 1".into()));
    }
    Ok(())
}

/// One trajectory with the parameter drawn from the prior.
pub fn simulate(p: &DecisionProblem, rule: &dyn DecisionRule, seed: u64, cap: usize) -> Result<Trajectory> {
    p.ensure_valid()?;
    check_cap(cap)?;
    let mut rng = rng_for(seed);
    let theta = sample_index(&p.params.prior, rng.random::<f64>());
    run_recorded(p, rule, theta, &mut rng, cap)
}

/// One trajectory with the true parameter fixed to `theta`.
pub fn simulate_given(
    p: &DecisionProblem,
    rule: &dyn DecisionRule,
    theta: usize,
    seed: u64,
    cap: usize,
) -> Result<Trajectory> {
    p.ensure_valid()?;
    check_cap(cap)?;
    if theta >= p.num_params() {
        return Err(Error::InvalidConfig(format!("parameter index {theta} out of range")));
    }
    run_recorded(p, rule, theta, &mut rng_for(seed), cap)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub runs: usize,
    pub master_seed: u64,
    pub cap: usize,
    pub eps_grid: Vec<f64>,
    /// Worker threads; results do not depend on it.
    pub workers: usize,
}

impl SimConfig {
    pub fn new(runs: usize, master_seed: u64) -> Self {
        Self {
            runs,
            master_seed,
            cap: DEFAULT_CAP,
            eps_grid: Vec::new(),
            workers: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.runs < 2 {
            return Err(Error::InvalidConfig("runs must be at least 2".into()));
        }
        check_cap(self.cap)?;
        if self.workers == 0 {
            return Err(Error::InvalidConfig("workers must be at least 1".into()));
        }
        if let Some(e) = self.eps_grid.iter().find(|e| !(e.is_finite() && **e > 0.0)) {
            return Err(Error::InvalidConfig(format!("epsilon {e} must be positive")));
        }
        Ok(())
    }
}

/// Runs `f(0..n)` on a pool of `workers` threads, collecting in index order.
pub(crate) fn par_collect<T, F>(workers: usize, n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    if workers <= 1 {
        return (0..n).map(f).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    pool.install(|| (0..n).into_par_iter().map(f).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run_id: usize,
    pub drawn_parameter: usize,
    pub total_gap: f64,
    pub stages: usize,
    pub truncated: bool,
    /// `N(eps)` for each entry of the (sorted) epsilon grid.
    pub n_epsilon: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsilonCount {
    pub epsilon: f64,
    pub mean_count: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentationReport {
    pub rule: String,
    pub runs: usize,
    pub master_seed: u64,
    pub cap: usize,
    pub mean_total_gap: f64,
    pub std_error: f64,
    pub mean_stages: f64,
    pub stages_std_error: f64,
    pub n_epsilon_curve: Vec<EpsilonCount>,
    pub bound: f64,
    pub truncation_rate: f64,
    #[serde(skip)]
    pub per_run: Vec<RunSummary>,
}

/// Runs `config.runs` independent replications and aggregates the totals.
pub fn estimate_total_experimentation(
    p: &DecisionProblem,
    rule: &dyn DecisionRule,
    config: &SimConfig,
) -> Result<ExperimentationReport> {
    p.ensure_valid()?;
    config.validate()?;
    let mut grid = config.eps_grid.clone();
    grid.sort_by(f64::total_cmp);
    grid.dedup();

    let per_run = par_collect(config.workers, config.runs, |i| {
        let mut rng = rng_for(replication_seed(config.master_seed, i as u64));
        let theta = sample_index(&p.params.prior, rng.random::<f64>());
        let mut scratch = scratch_for(p);
        let mut total = 0.0;
        let mut counts = vec![0u64; grid.len()];
        let out = drive(p, rule, theta, &mut rng, config.cap, &mut scratch, |ev| {
            total += ev.gap;
            for (c, e) in counts.iter_mut().zip(&grid) {
                if ev.gap >= *e {
                    *c += 1;
                }
            }
        })?;
        Ok(RunSummary {
            run_id: i,
            drawn_parameter: theta,
            total_gap: total,
            stages: out.stages,
            truncated: out.truncated,
            n_epsilon: counts,
        })
    })?;

    let totals: Vec<f64> = per_run.iter().map(|r| r.total_gap).collect();
    let (mean_total_gap, std_error) = mean_and_se(&totals);
    let stages: Vec<f64> = per_run.iter().map(|r| r.stages as f64).collect();
    let (mean_stages, stages_std_error) = mean_and_se(&stages);
    let n_epsilon_curve = grid
        .iter()
        .enumerate()
        .map(|(j, e)| {
            let xs: Vec<f64> = per_run.iter().map(|r| r.n_epsilon[j] as f64).collect();
            let (mean_count, std_error) = mean_and_se(&xs);
            EpsilonCount {
                epsilon: *e,
                mean_count,
                std_error,
            }
        })
        .collect();
    let truncated = per_run.iter().filter(|r| r.truncated).count();

    Ok(ExperimentationReport {
        rule: rule.name().to_string(),
        runs: config.runs,
        master_seed: config.master_seed,
        cap: config.cap,
        mean_total_gap,
        std_error,
        mean_stages,
        stages_std_error,
        n_epsilon_curve,
        bound: theorem_bound(p),
        truncation_rate: truncated as f64 / config.runs as f64,
        per_run,
    })
}

/// Outcome of comparing a report with the bound on expected total experimentation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremVerdict {
    pub pass: bool,
    pub mean_total_gap: f64,
    pub std_error: f64,
    pub bound: f64,
    /// `bound - mean_total_gap`.
    pub slack: f64,
    /// Some runs hit the cap, so the mean may underestimate the infinite sum.
    pub truncation_caveat: bool,
    pub claim: String,
}

pub const THEOREM_CLAIM: &str = "E[sum_n Delta_n] <= (E[u_max] - E[u_min]) * delta / (1 - delta)";

/// PASS iff `mean_total_gap <= bound + 3 * std_error`.
pub fn verify_theorem(report: &ExperimentationReport) -> TheoremVerdict {
    TheoremVerdict {
        pass: report.mean_total_gap <= report.bound + 3.0 * report.std_error,
        mean_total_gap: report.mean_total_gap,
        std_error: report.std_error,
        bound: report.bound,
        slack: report.bound - report.mean_total_gap,
        truncation_caveat: report.truncation_rate > 0.0,
        claim: THEOREM_CLAIM.to_string(),
    }
}

/// Column layout of the per-run CSV.
pub const RUNS_CSV_COLUMNS: [&str; 4] = ["run_id", "total_gap", "stages", "truncated"];

pub fn write_runs_csv<W: Write>(report: &ExperimentationReport, out: W) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RUNS_CSV_COLUMNS)?;
    for r in &report.per_run {
        w.write_record([
            r.run_id.to_string(),
            r.total_gap.to_string(),
            r.stages.to_string(),
            r.truncated.to_string(),
        ])?;
    }
    w.flush()
}
