use std::collections::BTreeMap;

use anyhow::{bail, Context, Result};
use serde::Serialize;

use expbound_core::bandit::CutoffRule;
use expbound_core::constructions::RevelationRule;
use expbound_core::model::DecisionProblem;
use expbound_core::sim::{
    estimate_total_experimentation, verify_theorem, write_runs_csv, DecisionRule, ExperimentationReport, MyopicRule,
    SimConfig, TheoremVerdict, DEFAULT_CAP, RUNS_CSV_COLUMNS,
};

use crate::config::{pick, Defaults, FileConfig, RuleKind, SimulateArgs};
use crate::output::{create, write_json, Envelope, CSV_VERSION, REPORT_SCHEMA};
use crate::Status;

#[derive(Debug, Clone, Serialize)]
pub struct SimulateReport {
    pub problem: String,
    pub rule: RuleKind,
    pub kstar: Option<i64>,
    pub alpha: Option<f64>,
    pub discount: f64,
    pub experimentation: ExperimentationReport,
    pub verdict: TheoremVerdict,
    pub pass: bool,
}

pub fn make_rule(
    p: &DecisionProblem,
    kind: RuleKind,
    kstar: Option<i64>,
    alpha: Option<f64>,
) -> Result<Box<dyn DecisionRule>> {
    Ok(match kind {
        RuleKind::Myopic => Box::new(MyopicRule),
        RuleKind::Prop1 => Box::new(RevelationRule::for_problem(p)?),
        RuleKind::Cutoff => {
            let (Some(k), Some(a)) = (kstar, alpha) else {
                bail!("--rule cutoff needs --kstar and --alpha");
            };
            if !(a > 0.0) {
                bail!("alpha = {a} must be positive");
            }
            Box::new(CutoffRule::for_problem(p, k, a)?)
        }
    })
}

pub fn run(args: &SimulateArgs) -> Result<Status> {
    let file = FileConfig::load(args.common.config.as_deref())?;
    let out = args.common.resolve(
        &file,
        Defaults {
            name: "simulate",
            runs: 10_000,
            cap: DEFAULT_CAP,
        },
    );
    let Some(path) = args.problem.clone().or(file.problem.clone()) else {
        bail!("--problem is required");
    };
    let kind = pick(&args.rule, &file.rule, RuleKind::Myopic);
    let kstar = args.kstar.or(file.kstar);
    let alpha = args.alpha.or(file.alpha);
    let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let problem = DecisionProblem::from_json(&text)?;
    let rule = make_rule(&problem, kind, kstar, alpha)?;

    let config = SimConfig {
        runs: out.runs,
        master_seed: out.seed,
        cap: out.cap,
        eps_grid: pick(&args.eps_grid, &file.eps_grid, Vec::new()),
        workers: out.workers,
    };
    let experimentation = estimate_total_experimentation(&problem, rule.as_ref(), &config)?;
    let verdict = verify_theorem(&experimentation);
    let report = SimulateReport {
        problem: path.display().to_string(),
        rule: kind,
        kstar,
        alpha,
        discount: problem.discount,
        pass: verdict.pass,
        experimentation,
        verdict,
    };
    write_runs_csv(&report.experimentation, create(&out.path("runs.csv"))?)?;
    write_json(
        &out.path("report.json"),
        &Envelope {
            schema_version: REPORT_SCHEMA,
            command: "simulate",
            csv_version: CSV_VERSION,
            csv_columns: BTreeMap::from([("runs.csv", &RUNS_CSV_COLUMNS[..])]),
            body: &report,
        },
    )?;
    println!(
        "simulate {}: mean={:.6}±{:.6} bound={:.6} truncation={:.4} -> {}",
        report.experimentation.rule,
        report.experimentation.mean_total_gap,
        report.experimentation.std_error,
        report.verdict.bound,
        report.experimentation.truncation_rate,
        if report.pass { "PASS" } else { "FAIL" }
    );
    Ok(Status::from_pass(report.pass))
}
