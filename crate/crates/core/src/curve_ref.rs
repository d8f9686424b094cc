//! Curve referencing: turn a beat-swept detector buffer plus the two reference
//! voltages of its product into a curve on the absolute θ_M axis.
//!
//! 1. oversample the buffer (windowed sinc);
//! 2. estimate the beat period and the acquisition phase of every sample;
//! 3. pick the reference voltage closest to the curve middle, find where the curve
//!    crosses it, and keep the crossing whose neighbour (±90° towards the other
//!    anchor) best matches where the curve crosses the other reference voltage;
//! 4. relabel the acquisition phases as θ_M.
//!
//! The I/Q phase shift is then the difference of the fundamental phases of the two
//! referenced curves.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dut::DetectorMode;
use crate::phasor::{angular_distance, wrap_360};

pub const DEFAULT_OVERSAMPLE: usize = 4;
/// Discriminants closer than this are a tie.
pub const DEFAULT_TIE_DEG: f64 = 1.0;
/// Minimum normalized autocorrelation accepted as a period.
pub const PERIODICITY_THRESHOLD: f64 = 0.5;
/// Smallest fundamental amplitude, in volts, that still defines a phase.
pub const MIN_FUNDAMENTAL_V: f64 = 1e-6;

const SINC_HALF_WIDTH: usize = 16;
const EDGE_FIT_LEN: usize = 16;
/// Crossings closer than this (in degrees) are one crossing seen through quantization steps.
const CROSSING_CLUSTER_DEG: f64 = 3.0;

#[derive(Debug, Error, PartialEq)]
pub enum CurveRefError {
    #[error("no periodicity found (best normalized autocorrelation {0:.3})")]
    NoPeriodicity(f64),
    #[error("reference voltage {v_ref:.4} V (y = {y}) never crosses the curve")]
    NoCrossing { y: u16, v_ref: f64 },
    #[error("anchor ambiguous: discriminants {0:.3}° and {1:.3}° tie")]
    AmbiguityUnresolved(f64, f64),
    #[error("fundamental amplitude {0:.3e} V too small to define a phase")]
    DegenerateCurve(f64),
    #[error("curve too short: {0} samples")]
    TooShort(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseVector {
    /// Beat period in (oversampled) samples.
    pub period: f64,
    /// Acquisition phase of every sample, degrees; 0 at the first sample.
    pub phases: Vec<f64>,
}

impl PhaseVector {
    pub fn from_period(period: f64, len: usize) -> Self {
        PhaseVector { period, phases: (0..len).map(|i| 360.0 * i as f64 / period).collect() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnchorSolution {
    /// θ_M of the anchor, 90 or 180.
    pub y: u16,
    /// Acquisition phase at which the curve is at θ_M = y.
    pub theta_ref_y: f64,
    pub v_ref_y: f64,
    /// Direction from this anchor to the other one on the acquisition axis.
    pub slope: i8,
    /// Every crossing of `v_ref_y` in the first period, and the discriminant of each.
    pub candidates: Vec<f64>,
    pub discriminants: Vec<f64>,
    /// Crossings of the other reference voltage (or the nearest extreme if it has none).
    pub other_crossings: Vec<f64>,
    /// Curve middle value `(max + min) / 2`.
    pub v_dm: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferencedCurve {
    pub mode: DetectorMode,
    /// θ_M of every retained sample, degrees on `[0, 360)`.
    pub theta_m_axis: Vec<f64>,
    pub volts: Vec<f64>,
    pub anchor: AnchorSolution,
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Least-squares quadratic through `ys` at abscissae 0..len, evaluated at `t`.
fn quad_fit_eval(ys: &[f64], t: f64) -> f64 {
    // normal equations for a + b·x + c·x² on centred abscissae
    let m = ys.len() as f64;
    let xc = (m - 1.0) / 2.0;
    let (mut s2, mut s4, mut sy, mut sxy, mut sx2y) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (i, &y) in ys.iter().enumerate() {
        let x = i as f64 - xc;
        s2 += x * x;
        s4 += x * x * x * x;
        sy += y;
        sxy += x * y;
        sx2y += x * x * y;
    }
    let b = sxy / s2;
    // a·m + c·s2 = sy ; a·s2 + c·s4 = sx2y
    let det = m * s4 - s2 * s2;
    let a = (sy * s4 - s2 * sx2y) / det;
    let c = (m * sx2y - s2 * sy) / det;
    let x = t - xc;
    a + b * x + c * x * x
}

/// Band-limited interpolation by `factor`. Original samples are kept at every
/// `factor`-th position; the ends are extended by a local quadratic fit so the kernel
/// has support there.
pub fn oversample(samples: &[f64], factor: usize) -> Vec<f64> {
    let n = samples.len();
    if factor <= 1 || n < 3 {
        return samples.to_vec();
    }
    let pad = SINC_HALF_WIDTH + 1;
    let fit = EDGE_FIT_LEN.min(n);
    let head = &samples[..fit];
    let tail = &samples[n - fit..];
    let mut ext = Vec::with_capacity(n + 2 * pad);
    for k in (1..=pad).rev() {
        ext.push(quad_fit_eval(head, -(k as f64)));
    }
    ext.extend_from_slice(samples);
    for k in 1..=pad {
        ext.push(quad_fit_eval(tail, (fit - 1 + k) as f64));
    }

    let a = SINC_HALF_WIDTH as f64;
    let mut out = Vec::with_capacity(n * factor);
    for j in 0..n * factor {
        if j % factor == 0 {
            out.push(samples[j / factor]);
            continue;
        }
        let x = j as f64 / factor as f64;
        let i0 = x.floor() as i64;
        let (mut acc, mut wsum) = (0.0, 0.0);
        for k in (i0 - SINC_HALF_WIDTH as i64 + 1)..=(i0 + SINC_HALF_WIDTH as i64) {
            let d = x - k as f64;
            // Lanczos window
            let w = sinc(d) * sinc(d / a);
            acc += w * ext[(k + pad as i64) as usize];
            wsum += w;
        }
        out.push(acc / wsum);
    }
    out
}

/// Linear interpolation of `x` at fractional index `pos` (clamped to the ends).
fn lerp_at(x: &[f64], pos: f64) -> f64 {
    let last = x.len() - 1;
    if pos <= 0.0 {
        return x[0];
    }
    if pos >= last as f64 {
        return x[last];
    }
    let i = pos.floor() as usize;
    let f = pos - i as f64;
    x[i] + f * (x[i + 1] - x[i])
}

fn extremes(x: &[f64]) -> (f64, f64) {
    x.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

/// Fractional beat period of `samples` and the matching phase vector.
///
/// The period is the first major peak of the normalized square difference function
/// (after it first goes negative), refined by a parabola through the peak and then by
/// minimizing the mean squared difference between the signal and its shifted copy.
pub fn estimate_period(samples: &[f64]) -> Result<PhaseVector, CurveRefError> {
    let n = samples.len();
    if n < 8 {
        return Err(CurveRefError::TooShort(n));
    }
    let (lo, hi) = extremes(samples);
    if !(hi - lo > 1e-12) {
        return Err(CurveRefError::NoPeriodicity(0.0));
    }
    let mid = (hi + lo) / 2.0;
    let x: Vec<f64> = samples.iter().map(|v| v - mid).collect();

    let min_overlap = (n / 20).max(4);
    let max_lag = n - min_overlap;
    let nsdf: Vec<f64> = (0..=max_lag)
        .map(|tau| {
            let (mut r, mut m) = (0.0, 0.0);
            for j in 0..n - tau {
                r += x[j] * x[j + tau];
                m += x[j] * x[j] + x[j + tau] * x[j + tau];
            }
            if m > 0.0 {
                2.0 * r / m
            } else {
                0.0
            }
        })
        .collect();

    let first_neg = nsdf.iter().position(|&v| v < 0.0).ok_or(CurveRefError::NoPeriodicity(0.0))?;
    let (peak, &best) = nsdf[first_neg..]
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, v)| (i + first_neg, v))
        .ok_or(CurveRefError::NoPeriodicity(0.0))?;
    if best < PERIODICITY_THRESHOLD {
        return Err(CurveRefError::NoPeriodicity(best));
    }
    let mut tau = peak as f64;
    if peak > 0 && peak < max_lag {
        let (a, b, c) = (nsdf[peak - 1], nsdf[peak], nsdf[peak + 1]);
        let den = a - 2.0 * b + c;
        if den.abs() > 1e-15 {
            tau += (0.5 * (a - c) / den).clamp(-1.0, 1.0);
        }
    }

    let msd = |t: f64| -> f64 {
        let count = ((n - 1) as f64 - t).floor();
        if count < min_overlap as f64 {
            return f64::INFINITY;
        }
        let count = count as usize + 1;
        let s: f64 = (0..count).map(|j| (x[j] - lerp_at(&x, j as f64 + t)).powi(2)).sum();
        s / count as f64
    };
    let refined = crate::procedure::golden_min(msd, tau - 1.0, tau + 1.0, 1e-6);
    let period = if msd(refined) <= msd(tau) { refined } else { tau };
    Ok(PhaseVector::from_period(period, n))
}

/// Phases in `[0, 360)` where the curve crosses `level`, by linear interpolation,
/// with crossings closer than a few degrees merged.
fn crossings(samples: &[f64], pv: &PhaseVector, level: f64) -> Vec<f64> {
    let mut raw = Vec::new();
    for i in 0..samples.len().saturating_sub(1) {
        let (p0, p1) = (pv.phases[i], pv.phases[i + 1]);
        if p0 >= 360.0 {
            break;
        }
        let (a, b) = (samples[i] - level, samples[i + 1] - level);
        if a == 0.0 {
            raw.push(p0);
        } else if a * b < 0.0 {
            let p = p0 + (p1 - p0) * a / (a - b);
            if p < 360.0 {
                raw.push(p);
            }
        }
    }
    // cluster along the circle
    let mut groups: Vec<Vec<f64>> = Vec::new();
    for p in raw {
        match groups.last_mut() {
            Some(g) if p - g[g.len() - 1] <= CROSSING_CLUSTER_DEG => g.push(p),
            _ => groups.push(vec![p]),
        }
    }
    if groups.len() > 1 {
        let first = groups[0][0];
        let last_group = &groups[groups.len() - 1];
        if first + 360.0 - last_group[last_group.len() - 1] <= CROSSING_CLUSTER_DEG {
            let tail = groups.pop().unwrap();
            let head = std::mem::take(&mut groups[0]);
            groups[0] = tail.into_iter().chain(head.into_iter().map(|p| p + 360.0)).collect();
        }
    }
    groups
        .into_iter()
        .map(|g| wrap_360(g.iter().sum::<f64>() / g.len() as f64))
        .collect()
}

/// Acquisition phase of the extreme (within the first period) closest in value to `level`.
fn nearest_extreme(samples: &[f64], pv: &PhaseVector, level: f64) -> f64 {
    let within: Vec<usize> = (0..samples.len()).filter(|&i| pv.phases[i] < 360.0).collect();
    let (lo, hi) = extremes(&within.iter().map(|&i| samples[i]).collect::<Vec<_>>());
    let target_max = (hi - level).abs() <= (level - lo).abs();
    let pick = within
        .iter()
        .copied()
        .max_by(|&a, &b| {
            let (va, vb) = if target_max { (samples[a], samples[b]) } else { (-samples[a], -samples[b]) };
            va.total_cmp(&vb)
        })
        .unwrap_or(0);
    pv.phases[pick]
}

pub fn resolve_anchor(
    samples: &[f64],
    pv: &PhaseVector,
    vx_180: f64,
    vx_90: f64,
) -> Result<AnchorSolution, CurveRefError> {
    resolve_anchor_with(samples, pv, vx_180, vx_90, DEFAULT_TIE_DEG)
}

/// Resolves which crossing of the middle-most reference voltage is the anchor.
pub fn resolve_anchor_with(
    samples: &[f64],
    pv: &PhaseVector,
    vx_180: f64,
    vx_90: f64,
    tie_deg: f64,
) -> Result<AnchorSolution, CurveRefError> {
    let (lo, hi) = extremes(samples);
    let v_dm = (hi + lo) / 2.0;
    let (y, v_ref_y, v_o, slope) = if (vx_180 - v_dm).abs() <= (vx_90 - v_dm).abs() {
        (180u16, vx_180, vx_90, -1i8)
    } else {
        (90u16, vx_90, vx_180, 1i8)
    };

    let candidates = crossings(samples, pv, v_ref_y);
    if candidates.is_empty() {
        return Err(CurveRefError::NoCrossing { y, v_ref: v_ref_y });
    }
    let mut other_crossings = crossings(samples, pv, v_o);
    if other_crossings.is_empty() {
        other_crossings.push(nearest_extreme(samples, pv, v_o));
    }
    let discriminants: Vec<f64> = candidates
        .iter()
        .map(|&c| {
            let oth = c + slope as f64 * 90.0;
            other_crossings.iter().map(|&o| angular_distance(oth, o)).fold(f64::INFINITY, f64::min)
        })
        .collect();

    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| discriminants[a].total_cmp(&discriminants[b]));
    let best = order[0];
    if let Some(&second) = order.get(1) {
        if discriminants[second] - discriminants[best] < tie_deg {
            return Err(CurveRefError::AmbiguityUnresolved(discriminants[best], discriminants[second]));
        }
    }
    Ok(AnchorSolution {
        y,
        theta_ref_y: candidates[best],
        v_ref_y,
        slope,
        candidates,
        discriminants,
        other_crossings,
        v_dm,
    })
}

/// Relabels the first period of acquisition phases as θ_M; sample values are untouched.
pub fn restore_curve(
    mode: DetectorMode,
    samples: &[f64],
    pv: &PhaseVector,
    anchor: &AnchorSolution,
) -> ReferencedCurve {
    let mut theta_m_axis = Vec::new();
    let mut volts = Vec::new();
    for (&v, &p) in samples.iter().zip(&pv.phases) {
        if p >= 360.0 {
            break;
        }
        theta_m_axis.push(wrap_360(p - anchor.theta_ref_y + anchor.y as f64));
        volts.push(v);
    }
    ReferencedCurve { mode, theta_m_axis, volts, anchor: anchor.clone() }
}

/// Fundamental-component phase (degrees) and amplitude of a curve that covers exactly one
/// period: `v ≈ c + A·cos(θ - φ)`. The gap from the last sample back to the first closes
/// the period.
pub fn fundamental(theta_deg: &[f64], volts: &[f64]) -> (f64, f64) {
    let n = theta_deg.len();
    let mut acc = Complex64::new(0.0, 0.0);
    let mut total = 0.0;
    for k in 0..n {
        let j = (k + 1) % n;
        let w = wrap_360(theta_deg[j] - theta_deg[k]).to_radians();
        let w = if n == 1 { 2.0 * PI } else { w };
        let fk = volts[k] * Complex64::from_polar(1.0, -theta_deg[k].to_radians());
        let fj = volts[j] * Complex64::from_polar(1.0, -theta_deg[j].to_radians());
        acc += (fk + fj) * (w / 2.0);
        total += w;
    }
    // ∫ (c + A cos(θ - φ)) e^{-iθ} dθ over a period = π·A·e^{-iφ}
    let amp = acc.norm() * 2.0 / total.max(f64::MIN_POSITIVE);
    (wrap_360(-acc.arg().to_degrees()), amp)
}

/// `θ_Q×I - θ_I×I` on `[0, 360)`: +90 for a detector in quadrature.
pub fn iq_phase_shift(curve_i: &ReferencedCurve, curve_q: &ReferencedCurve) -> Result<f64, CurveRefError> {
    let (phi_i, amp_i) = fundamental(&curve_i.theta_m_axis, &curve_i.volts);
    let (phi_q, amp_q) = fundamental(&curve_q.theta_m_axis, &curve_q.volts);
    for amp in [amp_i, amp_q] {
        if !(amp >= MIN_FUNDAMENTAL_V) {
            return Err(CurveRefError::DegenerateCurve(amp));
        }
    }
    Ok(wrap_360(phi_q - phi_i))
}

/// Oversample, estimate the period, anchor and restore one curve.
pub fn reference_curve(
    mode: DetectorMode,
    volts: &[f64],
    vx_180: f64,
    vx_90: f64,
    factor: usize,
) -> Result<(ReferencedCurve, PhaseVector), CurveRefError> {
    let over = oversample(volts, factor);
    let pv = estimate_period(&over)?;
    let anchor = resolve_anchor(&over, &pv, vx_180, vx_90)?;
    Ok((restore_curve(mode, &over, &pv, &anchor), pv))
}
