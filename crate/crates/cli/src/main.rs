use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use phasebench_core::campaign::{
    cmd_corrections, cmd_reference_files, cmd_simulate, cmd_table1, render_corrections, render_table1, render_table4,
    LoadedCampaign, Overrides, PointOutcome, RunOptions, CONNECTION_BLOCK_SPARAMS,
};
use phasebench_core::dut::QuadratureSpec;

#[derive(Parser)]
#[command(name = "phasebench", version, about = "Virtual bench for characterizing 360° phase detectors")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Recompute the null-depth table (combiner maximum, minimum and ratio).
    Table1 {
        #[arg(long)]
        json: bool,
    },
    /// Generator corrections from connection-block S-parameters.
    Corrections {
        /// S-parameter file; the bundled measured block when omitted.
        file: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Run a simulated campaign.
    Simulate {
        config: PathBuf,
        /// Output directory (overrides the config).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// SA reference line below P_SUM, dB.
        #[arg(long)]
        line_offset_db: Option<f64>,
        #[arg(long)]
        beta_max: Option<f64>,
        /// Do not apply the connection-block corrections.
        #[arg(long)]
        skip_netcal: bool,
        /// Worker threads (0 = one per core, 1 = sequential).
        #[arg(long, default_value_t = 0)]
        threads: usize,
        /// Print the JSON report instead of the summary table.
        #[arg(long)]
        json: bool,
    },
    /// Reference a recorded I×I / Q×I curve pair offline.
    Reference {
        curves: PathBuf,
        refs: PathBuf,
        #[arg(long, default_value_t = 40.0)]
        beta_max: f64,
        #[arg(long, default_value_t = phasebench_core::curve_ref::DEFAULT_OVERSAMPLE)]
        oversample: usize,
        /// Reject curves whose length differs from this.
        #[arg(long)]
        expected_len: Option<usize>,
    },
}

fn run(cli: Cli) -> Result<bool> {
    match cli.cmd {
        Cmd::Table1 { json } => {
            let rows = cmd_table1()?;
            if json {
                println!("{}", serde_json::to_string_pretty(&rows)?);
            } else {
                print!("{}", render_table1(&rows));
            }
        }
        Cmd::Corrections { file, json } => {
            let text = match &file {
                Some(p) => std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
                None => CONNECTION_BLOCK_SPARAMS.to_string(),
            };
            let rows = cmd_corrections(&text)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&rows)?);
            } else {
                print!("{}", render_corrections(&rows));
            }
        }
        Cmd::Simulate { config, out, seed, line_offset_db, beta_max, skip_netcal, threads, json } => {
            let overrides = Overrides { line_offset_db, beta_max, skip_netcal, seed, out };
            let loaded = LoadedCampaign::load(&config, &overrides)?;
            let report = cmd_simulate(&loaded, &RunOptions { threads })?;
            if json {
                print!("{}", report.to_json()?);
            } else {
                print!("{}", render_table4(&report.table));
                for p in &report.points {
                    if let PointOutcome::Failed { frequency_ghz, kind, error } = p {
                        eprintln!("{frequency_ghz} GHz failed ({kind}): {error}");
                    }
                }
            }
            return Ok(report.all_ok());
        }
        Cmd::Reference { curves, refs, beta_max, oversample, expected_len } => {
            let spec = QuadratureSpec::new(beta_max).map_err(anyhow::Error::msg)?;
            let report = cmd_reference_files(&curves, &refs, oversample, spec, expected_len)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
