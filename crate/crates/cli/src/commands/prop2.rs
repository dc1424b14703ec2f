use std::collections::BTreeMap;

use anyhow::Result;
use serde::Serialize;

use expbound_core::constructions::gaussian::{curve_growth_onset_log, n_of_epsilon, slow_decay_onset};
use expbound_core::constructions::{
    epsilon_sequence, n_epsilon_alpha_curve, prop2_deviation_check, solve_rho_sequence, DeviationCheck, SequenceChecks,
};

use crate::config::{pick, Defaults, FileConfig, Prop2Args};
use crate::output::{csv_writer, num, write_json, Envelope, CSV_VERSION, REPORT_SCHEMA};
use crate::Status;

pub const RECURSION_CLAIM: &str = "u(rho_1 + ... + rho_n) = eps_1 + ... + eps_n";
pub const DEVIATION_CLAIM: &str =
    "(1 - delta) sum_{n >= k} delta^(n-k) (eps_1 + ... + eps_{n-1}) > eps_1 + ... + eps_k";
pub const CURVE_CLAIM: &str = "eps^alpha N(eps) -> infinity as eps -> 0, for every alpha < 1";
/// Patience threshold under which the prescribed sequence need not be optimal.
pub const DELTA_THRESHOLD: f64 = 2.0 / 3.0;
/// First index of the curve monotonicity window.
pub const CURVE_FROM: usize = 100;

pub const SEQUENCE_CSV_COLUMNS: [&str; 5] = ["n", "eps", "rho", "eps_partial", "precision_partial"];

#[derive(Debug, Clone, Serialize)]
pub struct Prop2Params {
    pub delta: f64,
    pub n_max: usize,
    pub target_sum: f64,
    pub onset: usize,
    pub alphas: Vec<f64>,
    pub k_dev: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct CurveReport {
    pub alpha: f64,
    pub first: f64,
    pub at_from: f64,
    pub last: f64,
    /// `n eps_n^alpha` strictly increasing on `[CURVE_FROM, n_max]`.
    pub increasing_from_100: bool,
    pub first_decrease_after_100: Option<usize>,
    /// On the `1/(n ln^2 n)` profile the curve increases once `ln n > 2 alpha / (1 - alpha)`.
    pub growth_onset_n: f64,
    /// Strictly increasing from `max(CURVE_FROM, growth_onset_n)` on; `None`
    /// when that index lies beyond `n_max`.
    pub increasing_beyond_onset: Option<bool>,
    /// `N(eps_n) = n` on about 200 indices spread over the prefix.
    pub n_epsilon_exact: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct DeviationSummary {
    pub claim: &'static str,
    pub all_ok: bool,
    pub first_failure: Option<usize>,
    pub checks: Vec<DeviationCheck>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Prop2Report {
    pub parameters: Prop2Params,
    pub hypothesis_delta_above_two_thirds: bool,
    pub head_ratio: f64,
    pub partial_sum: f64,
    pub recursion_claim: &'static str,
    pub checks: SequenceChecks,
    pub deviation: DeviationSummary,
    pub curve_claim: &'static str,
    pub curves: Vec<CurveReport>,
    pub pass: bool,
    #[serde(skip)]
    pub rows: Vec<[f64; 4]>,
}

fn strictly_increasing_from(curve: &[f64], from: usize) -> (bool, Option<usize>) {
    let start = from.max(1) - 1;
    let bad = (start + 1..curve.len()).find(|&i| !(curve[i] > curve[i - 1]));
    (bad.is_none(), bad.map(|i| i + 1))
}

pub fn compute(params: &Prop2Params) -> Result<Prop2Report> {
    let seq = epsilon_sequence(params.n_max, params.target_sum, params.onset)?;
    let g = solve_rho_sequence(&seq)?;
    let k_dev = params.k_dev.min(g.n_max - 1);
    let checks: Vec<DeviationCheck> = (1..=k_dev)
        .map(|k| prop2_deviation_check(&g, k, params.delta))
        .collect::<expbound_core::Result<_>>()?;
    let first_failure = checks.iter().find(|c| !c.ok).map(|c| c.k);

    let stride = (g.n_max / 200).max(1);
    let n_epsilon_exact = (1..=g.n_max)
        .step_by(stride)
        .chain([g.n_max])
        .all(|n| n_of_epsilon(&g, g.eps_seq[n - 1]) == n);
    let curves = params
        .alphas
        .iter()
        .map(|&alpha| {
            let curve = n_epsilon_alpha_curve(&g, alpha)?;
            let (increasing_from_100, first_decrease_after_100) = strictly_increasing_from(&curve, CURVE_FROM);
            let growth_onset_n = curve_growth_onset_log(alpha).exp();
            let onset_index = (growth_onset_n.ceil() as usize).max(CURVE_FROM);
            let increasing_beyond_onset =
                (onset_index < curve.len()).then(|| strictly_increasing_from(&curve, onset_index).0);
            Ok(CurveReport {
                alpha,
                first: curve[0],
                at_from: curve[CURVE_FROM.min(curve.len()) - 1],
                last: *curve.last().unwrap(),
                increasing_from_100,
                first_decrease_after_100,
                growth_onset_n,
                increasing_beyond_onset,
                n_epsilon_exact,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let pass = g.checks.all_ok()
        && first_failure.is_none()
        && curves
            .iter()
            .all(|c| c.n_epsilon_exact && c.increasing_beyond_onset.unwrap_or(true));
    let rows = (0..g.n_max)
        .map(|i| [g.eps_seq[i], g.rho_seq[i], g.eps_partial[i], g.precision_partial[i]])
        .collect();
    Ok(Prop2Report {
        parameters: params.clone(),
        hypothesis_delta_above_two_thirds: params.delta > DELTA_THRESHOLD,
        head_ratio: seq.head_ratio,
        partial_sum: g.partial_sum,
        recursion_claim: RECURSION_CLAIM,
        checks: g.checks.clone(),
        deviation: DeviationSummary {
            claim: DEVIATION_CLAIM,
            all_ok: first_failure.is_none(),
            first_failure,
            checks,
        },
        curve_claim: CURVE_CLAIM,
        curves,
        pass,
        rows,
    })
}

pub fn run(args: &Prop2Args) -> Result<Status> {
    let file = FileConfig::load(args.common.config.as_deref())?;
    let out = args.common.resolve(
        &file,
        Defaults {
            name: "prop2",
            runs: 0,
            cap: 0,
        },
    );
    let params = Prop2Params {
        delta: pick(&args.delta, &file.delta, 0.75),
        n_max: pick(&args.n_max, &file.n_max, 10_000),
        target_sum: pick(&args.target_sum, &file.target_sum, 0.75),
        onset: pick(&args.onset, &file.onset, slow_decay_onset()),
        alphas: pick(&args.alphas, &file.alphas, vec![0.5, 0.9]),
        k_dev: pick(&args.k_dev, &file.k_dev, 50),
    };
    if !(params.delta > 0.0 && params.delta < 1.0) {
        anyhow::bail!("delta = {} must lie in (0, 1)", params.delta);
    }
    let report = compute(&params)?;

    let mut w = csv_writer(&out.path("sequence.csv"))?;
    w.write_record(SEQUENCE_CSV_COLUMNS)?;
    for (i, r) in report.rows.iter().enumerate() {
        w.write_record([(i + 1).to_string(), num(r[0]), num(r[1]), num(r[2]), num(r[3])])?;
    }
    w.flush()?;
    write_json(
        &out.path("report.json"),
        &Envelope {
            schema_version: REPORT_SCHEMA,
            command: "prop2",
            csv_version: CSV_VERSION,
            csv_columns: BTreeMap::from([("sequence.csv", &SEQUENCE_CSV_COLUMNS[..])]),
            body: &report,
        },
    )?;

    println!(
        "prop2 delta={} n_max={}: residual={:.3e} min_ratio={:.6} deviation={} curves={} -> {}",
        params.delta,
        params.n_max,
        report.checks.max_residual,
        report.checks.min_ratio,
        match report.deviation.first_failure {
            None => "ok".to_string(),
            Some(k) => format!("fails at k={k}"),
        },
        report
            .curves
            .iter()
            .map(|c| format!(
                "alpha {}: from-100 {} beyond-onset {:?}",
                c.alpha, c.increasing_from_100, c.increasing_beyond_onset
            ))
            .collect::<Vec<_>>()
            .join("; "),
        if report.pass { "PASS" } else { "FAIL" }
    );
    if !report.hypothesis_delta_above_two_thirds {
        eprintln!(
            "delta = {} does not exceed 2/3: the construction's hypothesis is not met",
            params.delta
        );
        return Ok(Status::HypothesisUnmet);
    }
    Ok(Status::from_pass(report.pass))
}
