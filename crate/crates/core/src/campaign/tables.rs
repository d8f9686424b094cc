//! Recomputation of the published null-depth and correction tables.

use std::fmt::Write as _;

use serde::Serialize;

use super::CampaignError;
use crate::netcal::{compute_corrections, parse_sparams_annotated, CorrectionSet, PublishedCorrection};
use crate::phasor::{combiner_output, null_ratio_db, DeviationPair, Level};

pub const NULL_DEPTH_TABLE: &str = include_str!("../../data/null_depth_table.txt");
pub const CONNECTION_BLOCK_SPARAMS: &str = include_str!("../../data/connection_block_sparams.txt");

/// Largest |computed − published| Δθ_Sc accepted without a flag, degrees.
pub const DTHETA_FLAG_DEG: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct NullDepthCase {
    pub case: u32,
    pub a_dbm: f64,
    pub s_db: f64,
    pub dtheta_deg: f64,
    pub sa_max: Level,
    pub sa_min: Level,
    pub r: Level,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NullDepthRow {
    pub published: NullDepthCase,
    pub sa_max: Level,
    pub sa_min: Level,
    pub r: Level,
}

fn parse_level(s: &str) -> Option<Level> {
    match s {
        "-inf" => Some(Level::NegInfinity),
        _ => s.parse().ok().filter(|v: &f64| v.is_finite()).map(Level::Finite),
    }
}

pub fn parse_null_depth_table(text: &str) -> Result<Vec<NullDepthCase>, CampaignError> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let l = raw.split('#').next().unwrap_or("").trim();
        if l.is_empty() {
            continue;
        }
        let f: Vec<&str> = l.split_whitespace().collect();
        let bad = |m: &str| CampaignError::Parse { line, msg: m.to_string() };
        if f.len() != 7 {
            return Err(bad("expected 7 columns"));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad("bad number"));
        let lvl = |s: &str| parse_level(s).ok_or_else(|| bad("bad level"));
        out.push(NullDepthCase {
            case: f[0].parse().map_err(|_| bad("bad case number"))?,
            a_dbm: num(f[1])?,
            s_db: num(f[2])?,
            dtheta_deg: num(f[3])?,
            sa_max: lvl(f[4])?,
            sa_min: lvl(f[5])?,
            r: lvl(f[6])?,
        });
    }
    Ok(out)
}

/// Difference of two levels; `Some(0)` when both are −∞, `None` when only one is.
pub fn level_delta(a: Level, b: Level) -> Option<f64> {
    match (a, b) {
        (Level::NegInfinity, Level::NegInfinity) => Some(0.0),
        (Level::Finite(x), Level::Finite(y)) => Some(x - y),
        _ => None,
    }
}

pub fn cmd_table1() -> Result<Vec<NullDepthRow>, CampaignError> {
    parse_null_depth_table(NULL_DEPTH_TABLE)?
        .into_iter()
        .map(|c| {
            let dev = DeviationPair::new(c.s_db, c.dtheta_deg).map_err(|e| CampaignError::Config(e.to_string()))?;
            Ok(NullDepthRow {
                published: c,
                sa_max: combiner_output(c.a_dbm, dev, 0.0).power_dbm(),
                sa_min: combiner_output(c.a_dbm, dev, 180.0).power_dbm(),
                r: null_ratio_db(c.a_dbm, dev),
            })
        })
        .collect()
}

fn delta_text(a: Level, b: Level) -> String {
    match level_delta(a, b) {
        Some(d) => format!("{:+.3}", d + 0.0),
        None => "n/a".into(),
    }
}

pub fn render_table1(rows: &[NullDepthRow]) -> String {
    let mut s = String::from(
        "case  a(dBm)  s(dB)  dθs(°)    SA_max  (pub)   Δ       SA_min  (pub)   Δ       r       (pub)   Δ\n",
    );
    for r in rows {
        let p = &r.published;
        let _ = writeln!(
            s,
            "{:<4}  {:>6}  {:>5}  {:>6}  {:>7.2} {:>7.2} {:<7} {:>7.2} {:>7.2} {:<7} {:>7.2} {:>7.2} {:<7}",
            p.case,
            p.a_dbm,
            p.s_db,
            p.dtheta_deg,
            r.sa_max,
            p.sa_max,
            delta_text(r.sa_max, p.sa_max),
            r.sa_min,
            p.sa_min,
            delta_text(r.sa_min, p.sa_min),
            r.r,
            p.r,
            delta_text(r.r, p.r),
        );
    }
    s
}

/// Rounds to one decimal with ties to even, applied to the decimal value as printed
/// in the source table (−1.85 → −1.8).
pub fn round_one_decimal(x: f64) -> f64 {
    let scaled: f64 = format!("{:.6}", x * 10.0).parse().unwrap_or(x * 10.0);
    scaled.round_ties_even() / 10.0 + 0.0
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CorrectionRow {
    pub corrections: CorrectionSet,
    /// ΔP rounded to one decimal, as tabulated alongside the measurements.
    pub dp_rounded: f64,
    pub published: Option<PublishedCorrection>,
    /// Computed Δθ_Sc differs from the published column by more than [`DTHETA_FLAG_DEG`].
    pub flagged: bool,
}

pub fn cmd_corrections(sparams_text: &str) -> Result<Vec<CorrectionRow>, CampaignError> {
    Ok(parse_sparams_annotated(sparams_text)?
        .into_iter()
        .map(|(sp, published)| {
            let c = compute_corrections(&sp);
            let flagged = published.is_some_and(|p| (c.dtheta_sc - p.dtheta_sc).abs() > DTHETA_FLAG_DEG);
            CorrectionRow { corrections: c, dp_rounded: round_one_decimal(c.dp), published, flagged }
        })
        .collect())
}

pub fn render_corrections(rows: &[CorrectionRow]) -> String {
    let mut s = String::from("f(GHz)  ΔP_Mc(dB)  Δθ_Sc(°)  ΔP(dB)  ΔP(1dp)  pub ΔP_Mc  pub Δθ_Sc  flag\n");
    for r in rows {
        let c = &r.corrections;
        let (pm, pt) = match r.published {
            Some(p) => (format!("{:>9.3}", p.dp_mc), format!("{:>9.3}", p.dtheta_sc)),
            None => (format!("{:>9}", "-"), format!("{:>9}", "-")),
        };
        let _ = writeln!(
            s,
            "{:<6}  {:>9.3}  {:>8.3}  {:>6.2}  {:>7.1}  {pm}  {pt}  {}",
            c.frequency_ghz,
            c.dp_mc,
            c.dtheta_sc,
            c.dp,
            r.dp_rounded,
            if r.flagged { "MISMATCH" } else { "" }
        );
    }
    s
}
