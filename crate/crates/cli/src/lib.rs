//! Command-line front end for the `weyl-semigroup` estimators and checks.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use serde_json::json;

use crate::commands::Outcome;
use crate::config::RunConfig;
use crate::error::CliError;

/// Full JSON document of a run: resolved config, result and tool metadata.
pub fn document(cfg: &RunConfig, outcome: &Outcome) -> serde_json::Value {
    json!({
        "config": cfg,
        "result": outcome.result,
        "metadata": { "tool": env!("CARGO_PKG_NAME"), "version": env!("CARGO_PKG_VERSION") },
    })
}

/// Output files of one run.
pub struct Rendered {
    pub json: Vec<u8>,
    pub csv: Option<Vec<u8>>,
    pub violation: bool,
}

/// Runs `cfg` and renders the JSON document and CSV table.
pub fn run_to_bytes(cfg: &RunConfig) -> Result<Rendered, CliError> {
    let outcome = commands::run(cfg)?;
    let json = output::to_json(&document(cfg, &outcome))?;
    let csv = outcome.table.as_ref().map(|t| t.to_bytes()).transpose()?;
    Ok(Rendered { json, csv, violation: outcome.violation })
}
