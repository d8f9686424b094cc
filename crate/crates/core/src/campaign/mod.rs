//! Campaign orchestration: per-frequency runs, the curve-referencing pipeline,
//! reports and their files.

mod config;
pub mod io;
mod parallel;
mod report;
pub mod svg;
mod tables;

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bench::Bench;
use crate::curve_ref::{iq_phase_shift, reference_curve, AnchorSolution, CurveRefError, ReferencedCurve};
use crate::dut::{quadrature_check, DetectorMode, DutError, QuadratureSpec, Verdict};
use crate::netcal::{compute_corrections, find_row, NetcalError, SParamSet};
use crate::procedure::{DetectorCurve, ProcedureError, ProcedureReport};

pub use config::{CampaignConfig, DutSection, LoadedCampaign, NetcalSection, OutputSection, Overrides, RandomSection};
pub use io::RefVolts;
pub use parallel::map_points;
pub use report::{
    render_table4, CampaignReport, MeasurementRecord, PointOutcome, Provenance, ReferenceReport, Table4Row,
};
pub use tables::{
    cmd_corrections, cmd_table1, level_delta, parse_null_depth_table, render_corrections, render_table1,
    round_one_decimal, CorrectionRow, NullDepthCase, NullDepthRow, CONNECTION_BLOCK_SPARAMS, DTHETA_FLAG_DEG,
    NULL_DEPTH_TABLE,
};

#[derive(Debug, Error)]
pub enum CampaignError {
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Netcal(#[from] NetcalError),
    #[error(transparent)]
    Dut(#[from] DutError),
    #[error(transparent)]
    Procedure(#[from] ProcedureError),
    #[error(transparent)]
    CurveRef(#[from] CurveRefError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CampaignError {
    /// Short machine-readable category used in per-point status entries.
    pub fn kind(&self) -> &'static str {
        match self {
            CampaignError::Config(_) => "config",
            CampaignError::Io { .. } => "io",
            CampaignError::Parse { .. } => "parse",
            CampaignError::Netcal(_) => "netcal",
            CampaignError::Dut(_) => "dut",
            CampaignError::Procedure(ProcedureError::NullNotFound { .. }) => "null_not_found",
            CampaignError::Procedure(ProcedureError::Timeout { .. }) => "timeout",
            CampaignError::Procedure(ProcedureError::RetriesExhausted(_)) => "retries_exhausted",
            CampaignError::Procedure(_) => "procedure",
            CampaignError::CurveRef(_) => "referencing",
            CampaignError::Json(_) => "json",
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CampaignError + '_ {
    move |source| CampaignError::Io { path: path.display().to_string(), source }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveSummary {
    pub mode: DetectorMode,
    /// Beat period in oversampled samples.
    pub period_samples: f64,
    pub anchor: AnchorSolution,
}

/// Output of the referencing pipeline for one I×I / Q×I pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferencingResult {
    pub curve_i: CurveSummary,
    pub curve_q: CurveSummary,
    pub shift_deg: f64,
    pub verdict: Verdict,
}

/// Oversample, anchor and restore both curves, then measure the I/Q shift and judge it.
pub fn reference_pair(
    volts_i: &[f64],
    volts_q: &[f64],
    refs: &RefVolts,
    oversample: usize,
    spec: QuadratureSpec,
) -> Result<(ReferencingResult, ReferencedCurve, ReferencedCurve), CurveRefError> {
    let run = |mode, volts: &[f64]| {
        let (v180, v90) = refs.pair(mode);
        let (curve, pv) = reference_curve(mode, volts, v180, v90, oversample)?;
        let summary = CurveSummary { mode, period_samples: pv.period, anchor: curve.anchor.clone() };
        Ok::<_, CurveRefError>((curve, summary))
    };
    let (ci, si) = run(DetectorMode::IxI, volts_i)?;
    let (cq, sq) = run(DetectorMode::QxI, volts_q)?;
    let shift_deg = iq_phase_shift(&ci, &cq)?;
    let result = ReferencingResult { curve_i: si, curve_q: sq, shift_deg, verdict: quadrature_check(shift_deg, spec) };
    Ok((result, ci, cq))
}

/// Everything produced at one frequency, including data not kept in the report.
#[derive(Clone, Debug)]
pub struct PointRun {
    pub record: MeasurementRecord,
    pub procedure: ProcedureReport,
    pub referenced: [ReferencedCurve; 2],
}

/// Network and DUT for `f`; a missing S-parameter row is tolerated only when
/// corrections are skipped, in which case the connection block is taken as ideal.
fn point_setup(cfg: &CampaignConfig, sparams: Option<&[SParamSet]>, f: f64) -> Result<SParamSet, CampaignError> {
    match sparams {
        None => Ok(SParamSet::identity(f)),
        Some(rows) => match find_row(rows, f) {
            Ok(sp) => Ok(*sp),
            Err(_) if cfg.procedure.skip_network_corrections => Ok(SParamSet::identity(f)),
            Err(e) => Err(e.into()),
        },
    }
}

/// Runs the procedure and the referencing pipeline at `frequencies_ghz[index]`.
pub fn run_frequency(
    cfg: &CampaignConfig,
    sparams: Option<&[SParamSet]>,
    index: usize,
) -> Result<PointRun, CampaignError> {
    let f = cfg.frequencies_ghz[index];
    let sp = point_setup(cfg, sparams, f)?;
    let dut = *cfg.dut_model().point(f)?;

    let mut bench_cfg = cfg.bench.clone();
    if cfg.random.initial_offset {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(index as u64);
        bench_cfg.drift.initial_offset = rng.gen_range(0.0..360.0);
    }
    let mut bench = Bench::new(bench_cfg, sp, dut).map_err(ProcedureError::from)?;
    let corr = compute_corrections(&sp);
    let report = crate::procedure::run_point(&mut bench, &corr, &cfg.procedure)?;

    let refs = RefVolts::from(&report.refs);
    let (referencing, ci, cq) =
        reference_pair(&report.curve_i.volts, &report.curve_q.volts, &refs, cfg.oversample, cfg.quadrature_spec()?)?;
    let record = MeasurementRecord {
        frequency_ghz: f,
        null: report.null.clone(),
        refs,
        retries: report.retries,
        error_budget_deg: report.error_budget_deg,
        corrections: report.corrections,
        corrections_applied: report.corrections_applied,
        vac: report.vac,
        clipped: report.curve_i.clipped || report.curve_q.clipped,
        attempts: report.attempts.clone(),
        finished_at_s: report.finished_at_s,
        referencing,
        ground_truth_shift_deg: dut.hybrid_shift_deg,
    };
    Ok(PointRun { record, procedure: report, referenced: [ci, cq] })
}

/// Options that affect how, not what, a campaign computes.
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Worker threads; 0 picks the rayon default, 1 runs sequentially.
    pub threads: usize,
}

fn file_stem(f: f64) -> String {
    format!("{f}ghz")
}

/// Runs every frequency (failures are isolated per point) and, when an output
/// directory is configured, writes the report, curves, references and plots.
pub fn cmd_simulate(loaded: &LoadedCampaign, opts: &RunOptions) -> Result<CampaignReport, CampaignError> {
    let cfg = &loaded.config;
    cfg.validate()?;
    let indices: Vec<usize> = (0..cfg.frequencies_ghz.len()).collect();
    let runs = map_points(&indices, opts.threads, |&i| run_frequency(cfg, loaded.sparams.as_deref(), i));

    let report = CampaignReport::new(loaded, &runs);
    if let Some(dir) = &cfg.output.dir {
        write_outputs(dir, cfg, &report, &runs)?;
    }
    Ok(report)
}

fn write_file(path: PathBuf, text: &str) -> Result<(), CampaignError> {
    std::fs::write(&path, text).map_err(io_err(&path))
}

fn write_outputs(
    dir: &Path,
    cfg: &CampaignConfig,
    report: &CampaignReport,
    runs: &[Result<PointRun, CampaignError>],
) -> Result<(), CampaignError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    write_file(dir.join("report.json"), &report.to_json()?)?;
    write_file(dir.join("table.txt"), &render_table4(&report.table))?;
    for run in runs.iter().flatten() {
        let stem = file_stem(run.record.frequency_ghz);
        let p = &run.procedure;
        write_file(dir.join(format!("curves_{stem}.csv")), &io::write_curves(&[&p.curve_i, &p.curve_q]))?;
        write_file(dir.join(format!("refs_{stem}.txt")), &io::write_refs(run.record.frequency_ghz, &run.record.refs))?;
        if cfg.output.plots {
            let [ci, cq] = &run.referenced;
            let title = format!("Referenced detector curves at {} GHz", run.record.frequency_ghz);
            write_file(dir.join(format!("curves_{stem}.svg")), &svg::plot_referenced(&title, &[(ci, "#1f77b4"), (cq, "#d62728")]))?;
        }
    }
    Ok(())
}

fn pick_curve(curves: &[DetectorCurve], mode: DetectorMode) -> Result<&DetectorCurve, CampaignError> {
    let found: Vec<_> = curves.iter().filter(|c| c.mode == mode).collect();
    match found.as_slice() {
        [c] => Ok(c),
        [] => Err(CampaignError::Parse { line: 0, msg: format!("no {mode} curve") }),
        _ => Err(CampaignError::Parse { line: 0, msg: format!("more than one {mode} curve") }),
    }
}

/// Offline referencing of a recorded curve pair.
///
/// `expected_len`, when given, is the buffer length the recording must have.
pub fn cmd_reference(
    curves_csv: &str,
    refs_text: &str,
    oversample: usize,
    spec: QuadratureSpec,
    expected_len: Option<usize>,
) -> Result<ReferenceReport, CampaignError> {
    let curves = io::parse_curves(curves_csv)?;
    let refs = io::parse_refs(refs_text)?;
    let ci = pick_curve(&curves, DetectorMode::IxI)?;
    let cq = pick_curve(&curves, DetectorMode::QxI)?;
    for c in [ci, cq] {
        if let Some(n) = expected_len {
            if c.volts.len() != n {
                return Err(CampaignError::Config(format!("{} curve has {} samples, expected {n}", c.mode, c.volts.len())));
            }
        }
        let periods = c.periods_spanned();
        if !(periods >= 1.0) {
            return Err(CampaignError::Config(format!(
                "{} curve spans {periods:.3} beat periods; at least one is needed",
                c.mode
            )));
        }
    }
    let (referencing, _, _) = reference_pair(&ci.volts, &cq.volts, &refs, oversample, spec)?;
    Ok(ReferenceReport { frequency_ghz: ci.frequency_ghz, refs, referencing })
}

/// [`cmd_reference`] on files.
pub fn cmd_reference_files(
    curves_csv: &Path,
    refs_file: &Path,
    oversample: usize,
    spec: QuadratureSpec,
    expected_len: Option<usize>,
) -> Result<ReferenceReport, CampaignError> {
    let c = std::fs::read_to_string(curves_csv).map_err(io_err(curves_csv))?;
    let r = std::fs::read_to_string(refs_file).map_err(io_err(refs_file))?;
    cmd_reference(&c, &r, oversample, spec, expected_len)
}
