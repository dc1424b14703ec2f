use anyhow::{bail, Context, Result};
use serde_json::Value;

use expbound_core::sim::{verify_theorem, ExperimentationReport};

use crate::config::{FileConfig, VerifyArgs};
use crate::Status;

/// Accepts a `simulate` or `prop1` report (the estimate sits under
/// `experimentation`) or a bare experimentation report.
pub fn load_report(text: &str) -> Result<ExperimentationReport> {
    let v: Value = serde_json::from_str(text).context("report is not JSON")?;
    let inner = v.get("experimentation").cloned().unwrap_or(v);
    serde_json::from_value(inner).context("no experimentation report found")
}

pub fn run(args: &VerifyArgs) -> Result<Status> {
    let file = FileConfig::load(args.common.config.as_deref())?;
    let Some(path) = args.report.clone().or(file.report.clone()) else {
        bail!("--report is required");
    };
    let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let report = load_report(&text)?;
    let verdict = verify_theorem(&report);
    println!("{}", serde_json::to_string_pretty(&verdict)?);
    Ok(Status::from_pass(verdict.pass))
}
