//! Curve CSV and reference-voltage files.
//!
//! Curve CSV: `#`-prefixed `key=value` headers followed by one `sample_index,code,volts`
//! table per detector product; a `# mode=` header starts each table.
//!
//! ```text
//! # freq_ghz=5
//! # sample_rate_hz=2800
//! # beat_hz=11
//! # mode=IxI
//! sample_index,code,volts
//! 0,318,1.5542521994134897
//! ...
//! # mode=QxI
//! sample_index,code,volts
//! ...
//! ```
//!
//! Reference file: four `name = volts` lines (`vi_180`, `vi_90`, `vq_90`, `vq_180`),
//! `#` comments allowed. Floats are written in shortest round-trip form.

use std::fmt::Write as _;

use super::CampaignError;
use crate::dut::DetectorMode;
use crate::procedure::{DetectorCurve, ReferenceVoltages};

/// The four anchor voltages without acquisition metadata.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RefVolts {
    pub vi_180: f64,
    pub vi_90: f64,
    pub vq_90: f64,
    pub vq_180: f64,
}

impl RefVolts {
    pub fn pair(&self, mode: DetectorMode) -> (f64, f64) {
        match mode {
            DetectorMode::IxI => (self.vi_180, self.vi_90),
            DetectorMode::QxI => (self.vq_180, self.vq_90),
        }
    }
}

impl From<&ReferenceVoltages> for RefVolts {
    fn from(r: &ReferenceVoltages) -> Self {
        RefVolts { vi_180: r.vi_180, vi_90: r.vi_90, vq_90: r.vq_90, vq_180: r.vq_180 }
    }
}

pub fn write_curves(curves: &[&DetectorCurve]) -> String {
    let mut out = String::new();
    if let Some(c) = curves.first() {
        let _ = writeln!(out, "# freq_ghz={}", c.frequency_ghz);
        let _ = writeln!(out, "# sample_rate_hz={}", c.sample_rate_hz);
        let _ = writeln!(out, "# beat_hz={}", c.beat_hz);
    }
    for c in curves {
        let _ = writeln!(out, "# mode={}", c.mode);
        out.push_str("sample_index,code,volts\n");
        for (i, (code, v)) in c.codes.iter().zip(&c.volts).enumerate() {
            let _ = writeln!(out, "{i},{code},{v}");
        }
    }
    out
}

fn parse_err(line: usize, msg: impl Into<String>) -> CampaignError {
    CampaignError::Parse { line, msg: msg.into() }
}

/// Parses a curve CSV. Missing rate/beat headers default to the bench defaults.
pub fn parse_curves(text: &str) -> Result<Vec<DetectorCurve>, CampaignError> {
    let mut freq = f64::NAN;
    let mut rate = crate::bench::AdcConfig::default().sample_rate_hz;
    let mut beat = 11.0;
    let mut curves: Vec<DetectorCurve> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let l = raw.trim();
        if l.is_empty() {
            continue;
        }
        if let Some(h) = l.strip_prefix('#') {
            let Some((k, v)) = h.split_once('=') else { continue };
            let (k, v) = (k.trim(), v.trim());
            let num = || v.parse::<f64>().map_err(|_| parse_err(line, format!("bad number {v:?} for {k}")));
            match k {
                "freq_ghz" => freq = num()?,
                "sample_rate_hz" => rate = num()?,
                "beat_hz" => beat = num()?,
                "mode" => curves.push(DetectorCurve {
                    mode: v.parse().map_err(|e: String| parse_err(line, e))?,
                    frequency_ghz: freq,
                    beat_hz: beat,
                    sample_rate_hz: rate,
                    codes: Vec::new(),
                    volts: Vec::new(),
                    clipped: false,
                }),
                _ => {}
            }
            continue;
        }
        if l.starts_with("sample_index") {
            continue;
        }
        let cur = curves.last_mut().ok_or_else(|| parse_err(line, "data before any '# mode=' header"))?;
        let f: Vec<&str> = l.split(',').map(str::trim).collect();
        if f.len() != 3 {
            return Err(parse_err(line, format!("expected 3 columns, found {}", f.len())));
        }
        let index: usize = f[0].parse().map_err(|_| parse_err(line, "bad sample_index"))?;
        if index != cur.volts.len() {
            return Err(parse_err(line, format!("sample_index {index} out of sequence")));
        }
        cur.codes.push(f[1].parse().map_err(|_| parse_err(line, "bad code"))?);
        let v: f64 = f[2].parse().map_err(|_| parse_err(line, "bad volts"))?;
        if !v.is_finite() {
            return Err(parse_err(line, "non-finite volts"));
        }
        cur.volts.push(v);
    }
    if curves.is_empty() {
        return Err(parse_err(0, "no curves"));
    }
    Ok(curves)
}

pub fn write_refs(freq_ghz: f64, r: &RefVolts) -> String {
    format!(
        "# freq_ghz={freq_ghz}\nvi_180 = {}\nvi_90 = {}\nvq_90 = {}\nvq_180 = {}\n",
        r.vi_180, r.vi_90, r.vq_90, r.vq_180
    )
}

pub fn parse_refs(text: &str) -> Result<RefVolts, CampaignError> {
    let mut vals = [None; 4];
    const NAMES: [&str; 4] = ["vi_180", "vi_90", "vq_90", "vq_180"];
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let l = raw.split('#').next().unwrap_or("").trim();
        if l.is_empty() {
            continue;
        }
        let (k, v) = l
            .split_once('=')
            .or_else(|| l.split_once(char::is_whitespace))
            .ok_or_else(|| parse_err(line, "expected 'name = volts'"))?;
        let slot = NAMES
            .iter()
            .position(|n| *n == k.trim())
            .ok_or_else(|| parse_err(line, format!("unknown reference {:?}", k.trim())))?;
        let v: f64 = v.trim().parse().map_err(|_| parse_err(line, format!("bad number {:?}", v.trim())))?;
        if vals[slot].replace(v).is_some() {
            return Err(parse_err(line, format!("{} given twice", NAMES[slot])));
        }
    }
    match vals {
        [Some(vi_180), Some(vi_90), Some(vq_90), Some(vq_180)] => Ok(RefVolts { vi_180, vi_90, vq_90, vq_180 }),
        _ => {
            let missing: Vec<_> = NAMES.iter().zip(vals).filter(|(_, v)| v.is_none()).map(|(n, _)| *n).collect();
            Err(parse_err(0, format!("missing {}", missing.join(", "))))
        }
    }
}
