//! Step-response and vibration metrics over simulation traces: 10-90% rise
//! time, overshoot, steady-state error, steady-state standard deviations,
//! and damped natural frequency from zero crossings.
//!
//! Conventions the source material leaves open are fixed here and
//! configurable: rise time is 10-90%, the steady-state window is the final
//! quarter of each segment, and standard deviations are population (not
//! sample) statistics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::SimTrace;

/// Fraction of each segment treated as the steady-state window.
pub const DEFAULT_SS_FRACTION: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Axis {
    Pitch,
    Yaw,
}

impl Axis {
    pub fn reference<'a>(&self, trace: &'a SimTrace) -> &'a [f64] {
        match self {
            Axis::Pitch => &trace.r_pitch,
            Axis::Yaw => &trace.r_yaw,
        }
    }

    pub fn response<'a>(&self, trace: &'a SimTrace) -> &'a [f64] {
        match self {
            Axis::Pitch => &trace.theta,
            Axis::Yaw => &trace.psi,
        }
    }
}

impl std::fmt::Display for Axis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Axis::Pitch => write!(f, "pitch"),
            Axis::Yaw => write!(f, "yaw"),
        }
    }
}

/// One reference transition: sample range `[start, end)` over which the
/// post-transition reference holds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub start: usize,
    pub end: usize,
    pub r_before: f64,
    pub r_after: f64,
}

impl Segment {
    pub fn step_magnitude(&self) -> f64 {
        self.r_after - self.r_before
    }

    /// Sample range of the steady-state window (final fraction of the
    /// segment).
    pub fn steady_window(&self, fraction: f64) -> (usize, usize) {
        let len = self.end - self.start;
        let w = ((len as f64) * fraction).ceil() as usize;
        (self.end - w.clamp(1, len), self.end)
    }
}

/// Split a piecewise-constant reference into per-transition segments. A
/// constant reference yields no segments.
pub fn segment_steps(reference: &[f64]) -> Vec<Segment> {
    let mut transitions = Vec::new();
    for k in 1..reference.len() {
        if reference[k] != reference[k - 1] {
            transitions.push(k);
        }
    }
    let mut segments = Vec::new();
    for (i, &start) in transitions.iter().enumerate() {
        let end = transitions.get(i + 1).copied().unwrap_or(reference.len());
        segments.push(Segment {
            start,
            end,
            r_before: reference[start - 1],
            r_after: reference[start],
        });
    }
    segments
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    /// 10-90% rise time (s); `None` when the response never reaches the 90%
    /// threshold.
    pub rise_time: Option<f64>,
    /// Peak excursion past the settled value, percent of step magnitude.
    pub overshoot: f64,
    /// Residual tracking error over the steady-state window, percent of
    /// step magnitude.
    pub sse: f64,
}

/// 10-90% rise time with linear interpolation of the threshold crossings.
pub fn rise_time(t: &[f64], y: &[f64], seg: &Segment) -> Result<Option<f64>> {
    let mag = seg.step_magnitude();
    if mag == 0.0 {
        return Err(Error::Metrics("zero step magnitude".into()));
    }
    let lo = seg.r_before + 0.1 * mag;
    let hi = seg.r_before + 0.9 * mag;
    let crossing = |level: f64| -> Option<f64> {
        for k in seg.start..seg.end.min(y.len()).saturating_sub(1) {
            let (a, b) = (y[k], y[k + 1]);
            let (passed_a, passed_b) = if mag > 0.0 {
                (a >= level, b >= level)
            } else {
                (a <= level, b <= level)
            };
            if passed_a {
                return Some(t[k]);
            }
            if passed_b {
                let frac = (level - a) / (b - a);
                return Some(t[k] + frac * (t[k + 1] - t[k]));
            }
        }
        None
    };
    let t_lo = crossing(lo);
    let t_hi = crossing(hi);
    match (t_lo, t_hi) {
        (Some(a), Some(b)) => Ok(Some((b - a).max(0.0))),
        _ => Ok(None),
    }
}

/// `max(0, (peak - settled) / |step|) * 100`, with the settled value taken
/// as the steady-state-window mean.
pub fn overshoot(y: &[f64], seg: &Segment, ss_fraction: f64) -> Result<f64> {
    let mag = seg.step_magnitude();
    if mag == 0.0 {
        return Err(Error::Metrics("zero step magnitude".into()));
    }
    let (ws, we) = seg.steady_window(ss_fraction);
    let settled = mean(&y[ws..we]);
    let sign = mag.signum();
    let peak = y[seg.start..seg.end]
        .iter()
        .map(|&v| (v - settled) * sign)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok((peak.max(0.0) / mag.abs()) * 100.0)
}

/// `|mean(y over window) - r_after| / |step| * 100`.
pub fn steady_state_error(y: &[f64], seg: &Segment, ss_fraction: f64) -> Result<f64> {
    let mag = seg.step_magnitude();
    if mag == 0.0 {
        return Err(Error::Metrics("zero step magnitude".into()));
    }
    let (ws, we) = seg.steady_window(ss_fraction);
    Ok(((mean(&y[ws..we]) - seg.r_after).abs() / mag.abs()) * 100.0)
}

/// Population standard deviation of a signal window.
pub fn steady_state_sd(window: &[f64]) -> Result<f64> {
    if window.len() < 2 {
        return Err(Error::Metrics("steady-state window too short".into()));
    }
    let m = mean(window);
    let var = window.iter().map(|&v| (v - m).powi(2)).sum::<f64>() / window.len() as f64;
    Ok(var.sqrt())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Damped natural frequency from zero crossings of an oscillatory trace:
/// `pi / (mean half-period)`, with the crossing instants linearly
/// interpolated.
pub fn natural_frequency(t: &[f64], y: &[f64]) -> Result<f64> {
    let mut crossings = Vec::new();
    for k in 1..y.len() {
        if y[k - 1] == 0.0 {
            continue;
        }
        if y[k - 1].signum() != y[k].signum() {
            let frac = y[k - 1] / (y[k - 1] - y[k]);
            crossings.push(t[k - 1] + frac * (t[k] - t[k - 1]));
        }
    }
    if crossings.len() < 3 {
        return Err(Error::Metrics(format!(
            "need at least 3 zero crossings for frequency estimation, found {}",
            crossings.len()
        )));
    }
    let half_periods: Vec<f64> = crossings.windows(2).map(|w| w[1] - w[0]).collect();
    let mean_half = mean(&half_periods);
    Ok(std::f64::consts::PI / mean_half)
}

/// Step metrics for every segment of one axis.
pub fn step_metrics(
    trace: &SimTrace,
    axis: Axis,
    ss_fraction: f64,
) -> Result<Vec<(Segment, StepMetrics)>> {
    let r = axis.reference(trace);
    let y = axis.response(trace);
    segment_steps(r)
        .into_iter()
        .map(|seg| {
            let metrics = StepMetrics {
                rise_time: rise_time(&trace.t, y, &seg)?,
                overshoot: overshoot(y, &seg, ss_fraction)?,
                sse: steady_state_error(y, &seg, ss_fraction)?,
            };
            Ok((seg, metrics))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VibrationMetrics {
    pub pitch_sd_deg: f64,
    pub yaw_sd_deg: f64,
    pub u0_sd_v: f64,
    pub u1_sd_v: f64,
}

/// Steady-state standard deviations of the angles and commanded voltages
/// over a segment's steady window.
pub fn vibration_metrics(
    trace: &SimTrace,
    seg: &Segment,
    ss_fraction: f64,
) -> Result<VibrationMetrics> {
    let (ws, we) = seg.steady_window(ss_fraction);
    let u0: Vec<f64> = trace.u_cmd[ws..we].iter().map(|u| u[0]).collect();
    let u1: Vec<f64> = trace.u_cmd[ws..we].iter().map(|u| u[1]).collect();
    Ok(VibrationMetrics {
        pitch_sd_deg: steady_state_sd(&trace.theta[ws..we])?.to_degrees(),
        yaw_sd_deg: steady_state_sd(&trace.psi[ws..we])?.to_degrees(),
        u0_sd_v: steady_state_sd(&u0)?,
        u1_sd_v: steady_state_sd(&u1)?,
    })
}
