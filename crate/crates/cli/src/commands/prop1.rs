use std::collections::BTreeMap;

use anyhow::Result;
use serde::Serialize;

use expbound_core::belief::theorem_bound;
use expbound_core::constructions::{build_prop1, prop1_exact_total, prop1_value};
use expbound_core::sim::{
    estimate_total_experimentation, verify_theorem, write_runs_csv, ExperimentationReport, SimConfig, TheoremVerdict,
    RUNS_CSV_COLUMNS,
};

use crate::config::{pick, Defaults, FileConfig, Prop1Args};
use crate::output::{create, write_json, write_text, Envelope, CSV_VERSION, REPORT_SCHEMA};
use crate::Status;

pub const VALUE_CLAIM: &str = "A = c delta + (1 - c) delta A, so A = 1/m";
pub const TOTAL_CLAIM: &str = "E[sum_n Delta_n] = (1/m) / c = (m - 1)/m * delta / (1 - delta)";

#[derive(Debug, Clone, Serialize)]
pub struct Prop1Params {
    pub m: usize,
    pub delta: f64,
    pub runs: usize,
    pub master_seed: u64,
    pub cap: usize,
    pub eps_grid: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Agreement {
    pub exact: f64,
    pub estimate: f64,
    pub difference: f64,
    /// `3 * std_error`.
    pub tolerance: f64,
    pub ok: bool,
}

impl Agreement {
    pub fn new(exact: f64, estimate: f64, std_error: f64) -> Self {
        let difference = estimate - exact;
        Self {
            exact,
            estimate,
            difference,
            tolerance: 3.0 * std_error,
            ok: difference.abs() <= 3.0 * std_error,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Prop1Report {
    pub parameters: Prop1Params,
    pub revelation_probability: f64,
    pub value: f64,
    pub value_claim: &'static str,
    pub exact_total: f64,
    pub exact_total_claim: &'static str,
    pub theorem_bound: f64,
    /// `exact_total / theorem_bound`.
    pub tightness_ratio: f64,
    /// `(m - 1) / m`.
    pub expected_ratio: f64,
    pub experimentation: ExperimentationReport,
    pub verdict: TheoremVerdict,
    pub total_agreement: Agreement,
    /// Probing stages (each with gap `1/m`) against their mean `1/c`.
    pub probing_agreement: Agreement,
    pub pass: bool,
}

pub fn compute(params: &Prop1Params, workers: usize) -> Result<Prop1Report> {
    let fam = build_prop1(params.m, params.delta)?;
    let value = prop1_value(&fam)?;
    let exact_total = prop1_exact_total(&fam);
    let bound = theorem_bound(&fam.problem);

    let config = SimConfig {
        runs: params.runs,
        master_seed: params.master_seed,
        cap: params.cap,
        eps_grid: params.eps_grid.clone(),
        workers,
    };
    let experimentation = estimate_total_experimentation(&fam.problem, &fam.rule, &config)?;
    let verdict = verify_theorem(&experimentation);
    let total_agreement = Agreement::new(exact_total, experimentation.mean_total_gap, experimentation.std_error);
    // Every stage but the last probes.
    let probing_agreement = Agreement::new(
        1.0 / fam.c,
        experimentation.mean_stages - 1.0,
        experimentation.stages_std_error,
    );
    let pass = verdict.pass && total_agreement.ok;
    Ok(Prop1Report {
        parameters: params.clone(),
        revelation_probability: fam.c,
        value,
        value_claim: VALUE_CLAIM,
        exact_total,
        exact_total_claim: TOTAL_CLAIM,
        theorem_bound: bound,
        tightness_ratio: exact_total / bound,
        expected_ratio: (fam.m as f64 - 1.0) / fam.m as f64,
        experimentation,
        verdict,
        total_agreement,
        probing_agreement,
        pass,
    })
}

pub fn run(args: &Prop1Args) -> Result<Status> {
    let file = FileConfig::load(args.common.config.as_deref())?;
    let out = args.common.resolve(
        &file,
        Defaults {
            name: "prop1",
            runs: 100_000,
            cap: expbound_core::sim::DEFAULT_CAP,
        },
    );
    let params = Prop1Params {
        m: pick(&args.m, &file.m, 3),
        delta: pick(&args.delta, &file.delta, 0.6),
        runs: out.runs,
        master_seed: out.seed,
        cap: out.cap,
        eps_grid: pick(&args.eps_grid, &file.eps_grid, vec![0.1]),
    };
    let report = compute(&params, out.workers)?;

    write_text(
        &out.path("problem.json"),
        &build_prop1(params.m, params.delta)?.problem.to_json(),
    )?;
    write_runs_csv(&report.experimentation, create(&out.path("runs.csv"))?)?;
    write_json(
        &out.path("report.json"),
        &Envelope {
            schema_version: REPORT_SCHEMA,
            command: "prop1",
            csv_version: CSV_VERSION,
            csv_columns: BTreeMap::from([("runs.csv", &RUNS_CSV_COLUMNS[..])]),
            body: &report,
        },
    )?;
    println!(
        "prop1 m={} delta={}: c={:.6} value={:.12} exact_total={:.6} bound={:.6} ratio={:.6} mc={:.6}±{:.6} -> {}",
        params.m,
        params.delta,
        report.revelation_probability,
        report.value,
        report.exact_total,
        report.theorem_bound,
        report.tightness_ratio,
        report.experimentation.mean_total_gap,
        report.experimentation.std_error,
        if report.pass { "PASS" } else { "FAIL" }
    );
    Ok(Status::from_pass(report.pass))
}
