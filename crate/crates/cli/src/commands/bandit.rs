use std::collections::BTreeMap;

use anyhow::Result;
use serde::Serialize;

use expbound_core::bandit::checks::IDENTITY_CLAIM;
use expbound_core::bandit::{
    build_bandit, cutoff_bound, expected_visits, path_identity_check, solve_cutoff, theorem_consistency, BanditSpec,
    ConsistencyReport, CutoffResult, PathIdentity, VisitReport,
};
use expbound_core::sim::{replication_seed, SimConfig};
use expbound_core::Error as CoreError;

use crate::config::{pick, BanditArgs, Defaults, FileConfig};
use crate::output::{csv_writer, num, write_json, write_text, Envelope, CSV_VERSION, REPORT_SCHEMA};
use crate::Status;

pub const BOUND_CLAIM: &str = "k* <= 4 (1 + 2 ln 2 / alpha + 2 (1 - p0_a) / (p0_a (1 - delta)))";

pub const RUNS_CSV_COLUMNS: [&str; 11] = [
    "alpha",
    "delta",
    "p0a",
    "run_id",
    "seed",
    "drawn_parameter",
    "stages",
    "truncated",
    "lhs",
    "rhs",
    "residual",
];

pub const GRID_CSV_COLUMNS: [&str; 12] = [
    "alpha",
    "delta",
    "p0a",
    "status",
    "kstar",
    "bound",
    "slack",
    "k_max",
    "kstar_doubled",
    "epsilon_sum",
    "max_identity_residual",
    "pass",
];

/// Monte Carlo sizes shared by every cell.
#[derive(Debug, Clone, Serialize)]
pub struct BanditSettings {
    pub rb: f64,
    pub master_seed: u64,
    /// Trajectories (and cap) for the theorem estimate.
    pub runs: usize,
    pub cap: usize,
    pub paths: usize,
    pub visit_runs: usize,
    pub visit_cap: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct IdentitySummary {
    pub claim: &'static str,
    pub paths: usize,
    pub cap: usize,
    pub max_residual: f64,
    pub all_ok: bool,
    pub truncated: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct CellReport {
    pub alpha: f64,
    pub delta: f64,
    pub p0a: f64,
    pub spec: BanditSpec,
    pub cutoff: CutoffResult,
    pub bound: f64,
    pub bound_claim: &'static str,
    pub slack: f64,
    pub kstar_within_bound: bool,
    /// Absent when `kstar = 0` (no level above the cut-off).
    pub visits: Option<VisitReport>,
    pub identity: IdentitySummary,
    pub consistency: ConsistencyReport,
    pub pass: bool,
    #[serde(skip)]
    pub paths: Vec<PathIdentity>,
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum Cell {
    Solved(Box<CellReport>),
    Infeasible {
        alpha: f64,
        delta: f64,
        p0a: f64,
        reason: String,
    },
}

impl Cell {
    pub fn coords(&self) -> (f64, f64, f64) {
        match self {
            Cell::Solved(c) => (c.alpha, c.delta, c.p0a),
            Cell::Infeasible { alpha, delta, p0a, .. } => (*alpha, *delta, *p0a),
        }
    }
}

pub fn solve_cell(spec: BanditSpec, p0a: f64, s: &BanditSettings, workers: usize) -> Result<CellReport> {
    let cutoff = solve_cutoff(&spec)?;
    let kstar = cutoff.kstar;
    let bound = cutoff_bound(&spec);

    let visits = if kstar >= 1 {
        let cfg = SimConfig {
            runs: s.visit_runs,
            master_seed: s.master_seed,
            cap: s.visit_cap,
            eps_grid: Vec::new(),
            workers,
        };
        Some(expected_visits(&spec, kstar, &cfg)?)
    } else {
        None
    };

    let paths = (0..s.paths)
        .map(|i| path_identity_check(&spec, kstar, replication_seed(s.master_seed, i as u64), s.cap))
        .collect::<expbound_core::Result<Vec<_>>>()?;
    let identity = IdentitySummary {
        claim: IDENTITY_CLAIM,
        paths: paths.len(),
        cap: s.cap,
        max_residual: paths.iter().map(|p| p.residual).fold(0.0, f64::max),
        all_ok: paths.iter().all(PathIdentity::ok),
        truncated: paths.iter().filter(|p| p.truncated).count(),
    };

    let cfg = SimConfig {
        runs: s.runs,
        master_seed: s.master_seed,
        cap: s.cap,
        eps_grid: Vec::new(),
        workers,
    };
    let consistency = theorem_consistency(&spec, kstar, &cfg)?;

    let kstar_within_bound = kstar as f64 <= bound;
    let visits_ok = visits.as_ref().is_none_or(|v| v.all_above_floor && v.all_agree);
    let pass = kstar_within_bound && identity.all_ok && consistency.pass && visits_ok;
    Ok(CellReport {
        alpha: spec.alpha,
        delta: spec.delta,
        p0a,
        bound,
        bound_claim: BOUND_CLAIM,
        slack: bound - kstar as f64,
        kstar_within_bound,
        spec,
        cutoff,
        visits,
        identity,
        consistency,
        pass,
        paths,
    })
}

fn cell(alpha: f64, delta: f64, p0a: f64, s: &BanditSettings, workers: usize) -> Result<Cell> {
    match build_bandit(alpha, p0a, s.rb, delta) {
        Ok(spec) => Ok(Cell::Solved(Box::new(solve_cell(spec, p0a, s, workers)?))),
        Err(e @ CoreError::InfeasibleBandit { .. }) => Ok(Cell::Infeasible {
            alpha,
            delta,
            p0a,
            reason: e.to_string(),
        }),
        Err(e) => Err(e.into()),
    }
}

/// `kstar` non-decreasing in `delta` for each `(alpha, p0a)`.
#[derive(Debug, Clone, Serialize)]
pub struct Monotonicity {
    pub alpha: f64,
    pub p0a: f64,
    pub deltas: Vec<f64>,
    pub kstars: Vec<i64>,
    pub non_decreasing: bool,
}

pub fn monotonicity(cells: &[Cell]) -> Vec<Monotonicity> {
    let mut slices: BTreeMap<(u64, u64), Vec<(f64, i64)>> = BTreeMap::new();
    for c in cells {
        if let Cell::Solved(r) = c {
            slices
                .entry((r.alpha.to_bits(), r.p0a.to_bits()))
                .or_default()
                .push((r.delta, r.cutoff.kstar));
        }
    }
    slices
        .into_iter()
        .map(|((a, p), mut v)| {
            v.sort_by(|x, y| x.0.total_cmp(&y.0));
            Monotonicity {
                alpha: f64::from_bits(a),
                p0a: f64::from_bits(p),
                non_decreasing: v.windows(2).all(|w| w[0].1 <= w[1].1),
                deltas: v.iter().map(|x| x.0).collect(),
                kstars: v.iter().map(|x| x.1).collect(),
            }
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct GridReport {
    pub settings: BanditSettings,
    pub alpha_grid: Vec<f64>,
    pub delta_grid: Vec<f64>,
    pub p0a_grid: Vec<f64>,
    pub solved: usize,
    pub infeasible: usize,
    pub cells: Vec<Cell>,
    pub monotonicity: Vec<Monotonicity>,
    pub pass: bool,
}

pub fn run_grid(
    alphas: &[f64],
    deltas: &[f64],
    p0as: &[f64],
    s: &BanditSettings,
    workers: usize,
) -> Result<GridReport> {
    let mut cells = Vec::new();
    for &alpha in alphas {
        for &p0a in p0as {
            for &delta in deltas {
                cells.push(cell(alpha, delta, p0a, s, workers)?);
            }
        }
    }
    let mono = monotonicity(&cells);
    let solved = cells.iter().filter(|c| matches!(c, Cell::Solved(_))).count();
    let pass = cells.iter().all(|c| match c {
        Cell::Solved(r) => r.pass,
        Cell::Infeasible { .. } => true,
    }) && mono.iter().all(|m| m.non_decreasing);
    Ok(GridReport {
        settings: s.clone(),
        alpha_grid: alphas.to_vec(),
        delta_grid: deltas.to_vec(),
        p0a_grid: p0as.to_vec(),
        solved,
        infeasible: cells.len() - solved,
        cells,
        monotonicity: mono,
        pass,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SingleReport {
    pub settings: BanditSettings,
    #[serde(flatten)]
    pub cell: CellReport,
}

fn write_paths(path: &std::path::Path, cells: &[&CellReport]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(RUNS_CSV_COLUMNS)?;
    for c in cells {
        for (i, p) in c.paths.iter().enumerate() {
            w.write_record([
                num(c.alpha),
                num(c.delta),
                num(c.p0a),
                i.to_string(),
                p.seed.to_string(),
                p.drawn_parameter.to_string(),
                p.stages.to_string(),
                p.truncated.to_string(),
                num(p.lhs),
                num(p.rhs),
                num(p.residual),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn print_cell(c: &CellReport) {
    println!(
        "bandit alpha={} p0a={} delta={}: kstar={} bound={:.3} identity_max={:.2e} consistency={} -> {}",
        c.alpha,
        c.p0a,
        c.delta,
        c.cutoff.kstar,
        c.bound,
        c.identity.max_residual,
        c.consistency.pass,
        if c.pass { "PASS" } else { "FAIL" }
    );
}

pub fn run(args: &BanditArgs) -> Result<Status> {
    let file = FileConfig::load(args.common.config.as_deref())?;
    let out = args.common.resolve(
        &file,
        Defaults {
            name: "bandit",
            runs: 2_000,
            cap: 2_000,
        },
    );
    let settings = BanditSettings {
        rb: pick(&args.rb, &file.rb, 0.0),
        master_seed: out.seed,
        runs: out.runs,
        cap: out.cap,
        paths: pick(&args.paths, &file.paths, 1_000),
        visit_runs: pick(&args.visit_runs, &file.visit_runs, 10_000),
        visit_cap: pick(&args.visit_cap, &file.visit_cap, expbound_core::sim::DEFAULT_CAP),
    };
    if settings.paths == 0 {
        anyhow::bail!("paths must be at least 1");
    }
    let grid = args.grid || file.grid.unwrap_or(false);
    let csv_columns = BTreeMap::from([("runs.csv", &RUNS_CSV_COLUMNS[..]), ("grid.csv", &GRID_CSV_COLUMNS[..])]);

    if grid {
        let alphas = pick(&args.alpha_grid, &file.alpha_grid, vec![0.5, 1.0, 2.0]);
        let deltas = pick(&args.delta_grid, &file.delta_grid, vec![0.5, 0.8, 0.9]);
        let p0as = pick(&args.p0a_grid, &file.p0a_grid, vec![0.2, 0.3, 0.4]);
        let report = run_grid(&alphas, &deltas, &p0as, &settings, out.workers)?;

        let solved: Vec<&CellReport> = report
            .cells
            .iter()
            .filter_map(|c| match c {
                Cell::Solved(r) => Some(&**r),
                Cell::Infeasible { .. } => None,
            })
            .collect();
        write_paths(&out.path("runs.csv"), &solved)?;
        let mut w = csv_writer(&out.path("grid.csv"))?;
        w.write_record(GRID_CSV_COLUMNS)?;
        for c in &report.cells {
            let (a, d, p) = c.coords();
            let row = match c {
                Cell::Solved(r) => [
                    "solved".to_string(),
                    r.cutoff.kstar.to_string(),
                    num(r.bound),
                    num(r.slack),
                    r.cutoff.k_max.to_string(),
                    r.cutoff.kstar_doubled.map(|k| k.to_string()).unwrap_or_default(),
                    num(r.consistency.epsilon_sum),
                    num(r.identity.max_residual),
                    r.pass.to_string(),
                ],
                Cell::Infeasible { .. } => {
                    let mut row: [String; 9] = Default::default();
                    row[0] = "infeasible".into();
                    row[8] = "true".into();
                    row
                }
            };
            w.write_record([num(a), num(d), num(p)].into_iter().chain(row))?;
        }
        w.flush()?;
        write_json(
            &out.path("report.json"),
            &Envelope {
                schema_version: REPORT_SCHEMA,
                command: "bandit",
                csv_version: CSV_VERSION,
                csv_columns,
                body: &report,
            },
        )?;
        for c in &report.cells {
            match c {
                Cell::Solved(r) => print_cell(r),
                Cell::Infeasible {
                    alpha,
                    delta,
                    p0a,
                    reason,
                } => {
                    println!("bandit alpha={alpha} p0a={p0a} delta={delta}: infeasible ({reason})")
                }
            }
        }
        for m in &report.monotonicity {
            if !m.non_decreasing {
                println!(
                    "kstar decreases in delta at alpha={} p0a={}: {:?}",
                    m.alpha, m.p0a, m.kstars
                );
            }
        }
        println!(
            "bandit grid: {} solved, {} infeasible -> {}",
            report.solved,
            report.infeasible,
            if report.pass { "PASS" } else { "FAIL" }
        );
        return Ok(Status::from_pass(report.pass));
    }

    let alpha = pick(&args.alpha, &file.alpha, 1.0);
    let p0a = pick(&args.p0a, &file.p0a, 0.2);
    let delta = pick(&args.delta, &file.delta, 0.8);
    if !(0.0..1.0).contains(&delta) {
        anyhow::bail!("delta = {delta} must satisfy 0 <= delta < 1");
    }
    let spec = build_bandit(alpha, p0a, settings.rb, delta)?;
    write_text(&out.path("problem.json"), &spec.to_problem().to_json())?;
    let cell = solve_cell(spec, p0a, &settings, out.workers)?;
    write_paths(&out.path("runs.csv"), &[&cell])?;
    print_cell(&cell);
    let pass = cell.pass;
    write_json(
        &out.path("report.json"),
        &Envelope {
            schema_version: REPORT_SCHEMA,
            command: "bandit",
            csv_version: CSV_VERSION,
            csv_columns: BTreeMap::from([("runs.csv", &RUNS_CSV_COLUMNS[..])]),
            body: &SingleReport { settings, cell },
        },
    )?;
    Ok(Status::from_pass(pass))
}
