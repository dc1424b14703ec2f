//! `expbound` command-line driver.
//!
//! Exit codes: 0 all checks pass, 1 usage or configuration error, 2 a
//! hypothesis of the claim being checked is not met, 3 a check failed.

// `!(x > 0.0)` style checks deliberately reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod output;

use std::ffi::OsString;

use clap::Parser;

use config::{Cli, Command};

/// Verdict of a subcommand that ran to completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass,
    HypothesisUnmet,
    CheckFailed,
}

impl Status {
    pub fn code(self) -> i32 {
        match self {
            Status::Pass => 0,
            Status::HypothesisUnmet => 2,
            Status::CheckFailed => 3,
        }
    }

    pub fn from_pass(pass: bool) -> Self {
        if pass {
            Status::Pass
        } else {
            Status::CheckFailed
        }
    }
}

/// Exit code for an error: bad input is 1, anything the library flags as an
/// internal inconsistency is 3.
pub fn error_code(err: &anyhow::Error) -> i32 {
    use expbound_core::Error as E;
    match err.downcast_ref::<E>() {
        Some(
            E::AbsorptionRejected { .. }
            | E::ImpossibleObservation { .. }
            | E::TruncationTooTight { .. }
            | E::TruncationSensitive { .. }
            | E::NotThreshold { .. }
            | E::NoConvergence(_)
            | E::Check(_),
        ) => 3,
        _ => 1,
    }
}

pub fn dispatch(cmd: Command) -> anyhow::Result<Status> {
    match cmd {
        Command::Prop1(a) => commands::prop1::run(&a),
        Command::Prop2(a) => commands::prop2::run(&a),
        Command::Bandit(a) => commands::bandit::run(&a),
        Command::Simulate(a) => commands::simulate::run(&a),
        Command::Verify(a) => commands::verify::run(&a),
    }
}

/// Parses `args` (program name first), runs the subcommand and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(status) => status.code(),
        Err(err) => {
            eprintln!("error: {err:#}");
            error_code(&err)
        }
    }
}
