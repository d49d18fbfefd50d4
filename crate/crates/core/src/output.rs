//! Trajectory CSV and JSON summaries.
//!
//! Numbers in the CSV use 17 significant digits in scientific notation so
//! that identical runs produce identical bytes.

use std::io::{self, Write};

use serde::Serialize;

use crate::sim::{RunOutcome, Scenario, TrajectoryRecord};

/// Column names for a plant of order `n` with `n0` unmodeled states.
pub fn csv_header(n: usize, n0: usize) -> Vec<String> {
    let mut cols = vec!["t".to_string()];
    cols.extend((1..=n).map(|i| format!("x{i}")));
    cols.extend((1..=n0).map(|i| format!("xi{i}")));
    cols.push("r".into());
    cols.extend((1..=n).map(|i| format!("z{i}")));
    cols.extend((1..n).map(|i| format!("w{i}")));
    cols.push("u".into());
    cols.extend((1..n).map(|i| format!("alpha{i}")));
    cols.extend((1..n).map(|i| format!("alpha_c{i}")));
    cols.extend(["sigma1", "sigma2", "rho", "e"].map(String::from));
    cols.extend((1..=n).map(|i| format!("theta_hat{i}")));
    cols.extend((1..n).map(|i| format!("gamma_hat{i}")));
    cols
}

fn fmt_num(v: f64) -> String {
    format!("{v:.16e}")
}

fn record_row(r: &TrajectoryRecord) -> String {
    let mut vals = vec![r.t];
    vals.extend(&r.x);
    vals.extend(&r.xi);
    vals.push(r.r);
    vals.extend(&r.z);
    vals.extend(&r.w);
    vals.push(r.u);
    vals.extend(&r.alpha);
    vals.extend(&r.alpha_c);
    vals.extend([r.sigma1, r.sigma2, r.rho, r.e]);
    vals.extend(&r.theta_hat);
    vals.extend(&r.gamma_hat);
    vals.into_iter().map(fmt_num).collect::<Vec<_>>().join(",")
}

pub fn write_csv(out: &mut impl Write, n: usize, n0: usize, records: &[TrajectoryRecord]) -> io::Result<()> {
    writeln!(out, "{}", csv_header(n, n0).join(","))?;
    for r in records {
        out.write_all(record_row(r).as_bytes())?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Contents of `metrics.json`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsFile {
    pub status: String,
    pub energy: Option<f64>,
    #[serde(rename = "e_at_T")]
    pub e_at_t: Option<f64>,
    pub max_funnel_ratio: Option<f64>,
    pub final_error: Option<f64>,
    pub max_abs_u: Option<f64>,
    pub sigma_bar: f64,
    #[serde(rename = "T")]
    pub prescribed_time: f64,
    pub dt: f64,
    pub horizon: f64,
}

impl MetricsFile {
    pub fn new(scenario: &Scenario, outcome: &RunOutcome) -> Self {
        let m = outcome.metrics.as_ref();
        Self {
            status: outcome.status.name().to_string(),
            energy: m.map(|m| m.energy),
            e_at_t: m.and_then(|m| m.e_at_t),
            max_funnel_ratio: m.map(|m| m.max_funnel_ratio),
            final_error: m.map(|m| m.final_error),
            max_abs_u: m.map(|m| m.max_abs_u),
            sigma_bar: scenario.gains.sigma_bar,
            prescribed_time: scenario.gains.horizon,
            dt: scenario.sim.dt,
            horizon: scenario.sim.horizon,
        }
    }
}

/// One line of `sweep_summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepEntry {
    pub value: f64,
    pub status: String,
    pub energy: Option<f64>,
    #[serde(rename = "e_at_T")]
    pub e_at_t: Option<f64>,
    pub max_funnel_ratio: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub dir: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepSummary {
    pub param: String,
    pub entries: Vec<SweepEntry>,
}
