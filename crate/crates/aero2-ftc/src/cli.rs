//! Command-line entry points: scenario execution with CSV trace and metrics
//! emission, built-in presets, and healthy-vs-faulty trace comparison.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{self, Axis, DEFAULT_SS_FRACTION};
use crate::sim::{run_scenario, FaultEvent, ScenarioConfig, SimTrace};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG_ERROR: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;

/// Environment variable consulted for the output directory when `--out` is
/// absent.
pub const OUT_DIR_ENV: &str = "AERO_FTC_OUT";

/// Trace CSV column order. Angles are degrees at the CSV boundary.
pub const TRACE_COLUMNS: [&str; 19] = [
    "t",
    "r_pitch_deg",
    "r_yaw_deg",
    "pitch_deg",
    "yaw_deg",
    "pitch_rate",
    "yaw_rate",
    "u0_lqr",
    "u1_lqr",
    "u0_cmd",
    "u1_cmd",
    "u0_eff",
    "u1_eff",
    "gamma0_true",
    "gamma1_true",
    "gamma0_est",
    "gamma1_est",
    "sat0",
    "sat1",
];

/// Batch run description: named scenarios, each backed by a config file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub scenarios: BTreeMap<String, PathBuf>,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default)]
pub struct RunFlags {
    pub out_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub no_estimator: bool,
    pub no_accommodation: bool,
}

fn apply_flags(cfg: &mut ScenarioConfig, flags: &RunFlags) {
    if let Some(seed) = flags.seed {
        cfg.sim.seed = seed;
    }
    if flags.no_estimator {
        cfg.estimator.enabled = false;
    }
    if flags.no_accommodation {
        cfg.accommodation.enabled = false;
    }
}

/// Built-in scenarios. `fig7` is the fault-accommodation demonstration:
/// gamma = [0.7, 0.7] injected mid-run with accommodation enabled.
pub fn preset(name: &str) -> Result<ScenarioConfig> {
    match name {
        "healthy" => Ok(ScenarioConfig::default()),
        "fig7" => {
            let mut cfg = ScenarioConfig::default();
            cfg.sim.duration_s = 120.0;
            cfg.faults = vec![FaultEvent {
                time_s: 40.0,
                gamma: Some([0.7, 0.7]),
                preset: None,
            }];
            Ok(cfg)
        }
        other => Err(Error::Config(format!(
            "unknown preset `{other}` (available: healthy, fig7)"
        ))),
    }
}

fn parse_config(path: &Path) -> Result<ScenarioConfig> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut de = serde_json::Deserializer::from_str(&text);
    let cfg: ScenarioConfig = serde_path_to_error::deserialize(&mut de)
        .map_err(|e| Error::Config(format!("{}: key `{}`: {}", path.display(), e.path(), e.inner())))?;
    cfg.validate()?;
    Ok(cfg)
}

fn resolve_out_dir(flag: Option<&Path>) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."))
}

/// Serialize a trace to CSV. Numbers use shortest-round-trip formatting, so
/// a re-parsed trace reproduces every column exactly.
pub fn write_trace_csv<W: Write>(trace: &SimTrace, w: W) -> Result<W> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(TRACE_COLUMNS)
        .map_err(|e| Error::Config(format!("csv write: {e}")))?;
    for k in 0..trace.len() {
        let row = [
            trace.t[k],
            trace.r_pitch[k].to_degrees(),
            trace.r_yaw[k].to_degrees(),
            trace.theta[k].to_degrees(),
            trace.psi[k].to_degrees(),
            trace.theta_dot[k],
            trace.psi_dot[k],
            trace.u_lqr[k][0],
            trace.u_lqr[k][1],
            trace.u_cmd[k][0],
            trace.u_cmd[k][1],
            trace.u_eff[k][0],
            trace.u_eff[k][1],
            trace.gamma_true[k][0],
            trace.gamma_true[k][1],
            trace.gamma_est_raw[k][0],
            trace.gamma_est_raw[k][1],
            if trace.saturated[k][0] { 1.0 } else { 0.0 },
            if trace.saturated[k][1] { 1.0 } else { 0.0 },
        ];
        let rec: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        wtr.write_record(&rec)
            .map_err(|e| Error::Config(format!("csv write: {e}")))?;
    }
    wtr.into_inner()
        .map_err(|e| Error::Config(format!("csv flush: {e}")))
}

/// Parse a trace CSV written by [`write_trace_csv`].
pub fn read_trace_csv<R: std::io::Read>(r: R) -> Result<SimTrace> {
    let mut rdr = csv::Reader::from_reader(r);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Config(format!("csv read: {e}")))?
        .clone();
    if headers.iter().ne(TRACE_COLUMNS) {
        return Err(Error::Config("unexpected trace CSV columns".into()));
    }
    let mut trace = SimTrace::default();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Config(format!("csv read: {e}")))?;
        let f = |i: usize| -> Result<f64> {
            rec.get(i)
                .ok_or_else(|| Error::Config("short csv record".into()))?
                .parse()
                .map_err(|e| Error::Config(format!("csv field {i}: {e}")))
        };
        trace.t.push(f(0)?);
        trace.r_pitch.push(f(1)?.to_radians());
        trace.r_yaw.push(f(2)?.to_radians());
        trace.theta.push(f(3)?.to_radians());
        trace.psi.push(f(4)?.to_radians());
        trace.theta_dot.push(f(5)?);
        trace.psi_dot.push(f(6)?);
        trace.u_lqr.push([f(7)?, f(8)?]);
        trace.u_cmd.push([f(9)?, f(10)?]);
        trace.u_eff.push([f(11)?, f(12)?]);
        trace.gamma_true.push([f(13)?, f(14)?]);
        let raw = [f(15)?, f(16)?];
        trace.gamma_est_raw.push(raw);
        trace
            .gamma_est_clamped
            .push([raw[0].clamp(0.0, 1.0), raw[1].clamp(0.0, 1.0)]);
        trace.saturated.push([f(17)? != 0.0, f(18)? != 0.0]);
    }
    Ok(trace)
}

/// Per-axis, per-segment metrics rows for the metrics CSV and reports.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsRow {
    pub axis: String,
    pub segment: usize,
    pub t_start: f64,
    pub step_deg: f64,
    pub rise_time_s: Option<f64>,
    pub overshoot_pct: f64,
    pub sse_pct: f64,
    pub angle_sd_deg: f64,
    pub u0_sd_v: f64,
    pub u1_sd_v: f64,
}

pub fn compute_metrics(trace: &SimTrace) -> Result<Vec<MetricsRow>> {
    let mut rows = Vec::new();
    for axis in [Axis::Pitch, Axis::Yaw] {
        // segments truncated by the end of the run are too short to analyze
        let usable: Vec<_> = metrics::segment_steps(axis.reference(trace))
            .into_iter()
            .filter(|seg| seg.end - seg.start >= 16)
            .collect();
        for (i, seg) in usable.into_iter().enumerate() {
            let y = axis.response(trace);
            let sm = metrics::StepMetrics {
                rise_time: metrics::rise_time(&trace.t, y, &seg)?,
                overshoot: metrics::overshoot(y, &seg, DEFAULT_SS_FRACTION)?,
                sse: metrics::steady_state_error(y, &seg, DEFAULT_SS_FRACTION)?,
            };
            let vib = metrics::vibration_metrics(trace, &seg, DEFAULT_SS_FRACTION)?;
            rows.push(MetricsRow {
                axis: axis.to_string(),
                segment: i,
                t_start: trace.t[seg.start],
                step_deg: seg.step_magnitude().to_degrees(),
                rise_time_s: sm.rise_time,
                overshoot_pct: sm.overshoot,
                sse_pct: sm.sse,
                angle_sd_deg: match axis {
                    Axis::Pitch => vib.pitch_sd_deg,
                    Axis::Yaw => vib.yaw_sd_deg,
                },
                u0_sd_v: vib.u0_sd_v,
                u1_sd_v: vib.u1_sd_v,
            });
        }
    }
    Ok(rows)
}

fn write_metrics_csv(rows: &[MetricsRow], path: &Path) -> Result<()> {
    let mut wtr = csv::Writer::from_path(path)
        .map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))?;
    for row in rows {
        wtr.serialize(row)
            .map_err(|e| Error::Config(format!("csv write: {e}")))?;
    }
    wtr.flush()
        .map_err(|e| Error::Config(format!("csv flush: {e}")))?;
    Ok(())
}

fn run_one(name: &str, cfg: &ScenarioConfig, out_dir: &Path) -> Result<()> {
    let trace = run_scenario(cfg)?;
    fs::create_dir_all(out_dir)
        .map_err(|e| Error::Config(format!("cannot create {}: {e}", out_dir.display())))?;

    let trace_path = out_dir.join(format!("{name}_trace.csv"));
    let file = fs::File::create(&trace_path)
        .map_err(|e| Error::Config(format!("cannot write {}: {e}", trace_path.display())))?;
    write_trace_csv(&trace, file)?;

    let rows = compute_metrics(&trace)?;
    write_metrics_csv(&rows, &out_dir.join(format!("{name}_metrics.csv")))?;
    println!(
        "{name}: {} samples -> {} and {}_metrics.csv",
        trace.len(),
        trace_path.display(),
        name
    );
    Ok(())
}

/// `run` command: execute a scenario from a config file, a manifest of
/// scenarios, or a named preset.
pub fn cmd_run(
    config: Option<&Path>,
    preset_name: Option<&str>,
    flags: &RunFlags,
) -> Result<()> {
    let out_dir = resolve_out_dir(flags.out_dir.as_deref());
    match (config, preset_name) {
        (Some(path), None) => {
            // a manifest file carries a top-level `scenarios` key
            let text = fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
            let manifest: Option<RunManifest> = serde_json::from_str::<serde_json::Value>(&text)
                .ok()
                .filter(|v| v.get("scenarios").is_some())
                .and_then(|v| serde_json::from_value(v).ok());
            if let Some(manifest) = manifest {
                let out_dir = flags
                    .out_dir
                    .clone()
                    .or(manifest.out_dir)
                    .unwrap_or(out_dir);
                let base = path.parent().unwrap_or(Path::new("."));
                for (name, cfg_path) in &manifest.scenarios {
                    let resolved = if cfg_path.is_relative() {
                        base.join(cfg_path)
                    } else {
                        cfg_path.clone()
                    };
                    let mut cfg = parse_config(&resolved)?;
                    if let Some(seed) = manifest.seed {
                        cfg.sim.seed = seed;
                    }
                    apply_flags(&mut cfg, flags);
                    run_one(name, &cfg, &out_dir)?;
                }
                Ok(())
            } else {
                let mut cfg = parse_config(path)?;
                apply_flags(&mut cfg, flags);
                let name = path
                    .file_stem()
                    .and_then(|s| s.to_str())
                    .unwrap_or("scenario");
                run_one(name, &cfg, &out_dir)
            }
        }
        (None, Some(name)) => {
            let mut cfg = preset(name)?;
            apply_flags(&mut cfg, flags);
            run_one(name, &cfg, &out_dir)
        }
        _ => Err(Error::Config(
            "exactly one of --config or --preset is required".into(),
        )),
    }
}

/// Signed metric deltas, candidate minus baseline, matched by axis and
/// segment index.
#[derive(Debug, Clone, Serialize)]
pub struct CompareRow {
    pub axis: String,
    pub segment: usize,
    pub rise_time_delta_s: Option<f64>,
    pub overshoot_delta_pct: f64,
    pub sse_delta_pct: f64,
    pub angle_sd_delta_deg: f64,
}

pub fn compare_traces(baseline: &SimTrace, candidate: &SimTrace) -> Result<Vec<CompareRow>> {
    if baseline.t.len() != candidate.t.len()
        || baseline
            .t
            .iter()
            .zip(&candidate.t)
            .any(|(a, b)| (a - b).abs() > 1e-12)
    {
        return Err(Error::Config(
            "traces have mismatched time grids; compare requires equal T_s and duration".into(),
        ));
    }
    let base = compute_metrics(baseline)?;
    let cand = compute_metrics(candidate)?;
    if base.len() != cand.len() {
        return Err(Error::Config(
            "traces have different reference segmentation".into(),
        ));
    }
    Ok(base
        .iter()
        .zip(&cand)
        .map(|(b, c)| CompareRow {
            axis: b.axis.clone(),
            segment: b.segment,
            rise_time_delta_s: match (b.rise_time_s, c.rise_time_s) {
                (Some(x), Some(y)) => Some(y - x),
                _ => None,
            },
            overshoot_delta_pct: c.overshoot_pct - b.overshoot_pct,
            sse_delta_pct: c.sse_pct - b.sse_pct,
            angle_sd_delta_deg: c.angle_sd_deg - b.angle_sd_deg,
        })
        .collect())
}

/// `compare` command: side-by-side metric deltas between two trace CSVs.
pub fn cmd_compare(baseline_path: &Path, candidate_path: &Path) -> Result<()> {
    let open = |p: &Path| -> Result<SimTrace> {
        let file = fs::File::open(p)
            .map_err(|e| Error::Config(format!("cannot open {}: {e}", p.display())))?;
        read_trace_csv(file)
    };
    let baseline = open(baseline_path)?;
    let candidate = open(candidate_path)?;
    let rows = compare_traces(&baseline, &candidate)?;
    println!("axis   seg  d_rise(s)   d_overshoot(%)  d_sse(%)    d_angle_sd(deg)");
    for r in &rows {
        println!(
            "{:<6} {:<4} {:<11} {:<15.6} {:<11.6} {:.6}",
            r.axis,
            r.segment,
            r.rise_time_delta_s
                .map(|v| format!("{v:.4}"))
                .unwrap_or_else(|| "n/a".into()),
            r.overshoot_delta_pct,
            r.sse_delta_pct,
            r.angle_sd_delta_deg,
        );
    }
    Ok(())
}

/// Map an error to the process exit code contract.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::InvalidParameter(_) => EXIT_CONFIG_ERROR,
        Error::Diverged { .. } => EXIT_DIVERGED,
        _ => EXIT_FAILURE,
    }
}
