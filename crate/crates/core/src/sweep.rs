//! Rate measurements over a grid of inputs.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::Serialize;

use crate::batch::map_parallel;
use crate::compiler::{Assignment, CompiledProgram, InputValue};
use crate::presets::{naive_inversion, Preset};
use crate::rate::estimate_rate_series;
use crate::sim::{simulate_network, OutputGrid, SimConfig};
use crate::verify::{verify_program, Analysis};

/// Axes `name=v1,v2,...` separated by `;`. The empty string is the empty grid.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct Grid {
    pub axes: Vec<(String, Vec<f64>)>,
}

impl FromStr for Grid {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let mut axes: Vec<(String, Vec<f64>)> = Vec::new();
        for part in s.split(';').map(str::trim).filter(|p| !p.is_empty()) {
            let (name, values) = part.split_once('=').ok_or_else(|| format!("axis `{part}` needs `name=values`"))?;
            let name = name.trim();
            if name.is_empty() || axes.iter().any(|(n, _)| n == name) {
                return Err(format!("bad or repeated axis name `{name}`"));
            }
            let values = values
                .split(',')
                .map(str::trim)
                .filter(|v| !v.is_empty())
                .map(|v| v.parse::<f64>().map_err(|_| format!("bad value `{v}` on axis `{name}`")))
                .collect::<Result<Vec<_>, _>>()?;
            axes.push((name.to_string(), values));
        }
        Ok(Grid { axes })
    }
}

impl Grid {
    /// Cartesian product, first axis varying slowest.
    pub fn points(&self) -> Vec<Vec<(String, f64)>> {
        if self.axes.is_empty() {
            return Vec::new();
        }
        let mut out: Vec<Vec<(String, f64)>> = vec![Vec::new()];
        for (name, values) in &self.axes {
            out = out
                .into_iter()
                .flat_map(|p| {
                    values.iter().map(move |v| {
                        let mut q = p.clone();
                        q.push((name.clone(), *v));
                        q
                    })
                })
                .collect();
        }
        out
    }
}

pub enum SweepSubject<'a> {
    Program { expression: &'a str, program: &'a CompiledProgram },
    Preset(Preset),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub point: Vec<(String, f64)>,
    pub target: Option<f64>,
    pub rho_hat: Option<f64>,
    pub bound: Option<f64>,
    pub final_abs_error: Option<f64>,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepSummary {
    pub count: usize,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    /// `(max - min) / mean`.
    pub relative_spread: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepTable {
    pub axes: Vec<String>,
    pub rows: Vec<SweepRow>,
    pub summary: Option<SweepSummary>,
}

fn summarize(rows: &[SweepRow]) -> Option<SweepSummary> {
    let rhos: Vec<f64> = rows.iter().filter_map(|r| r.rho_hat).filter(|r| r.is_finite()).collect();
    if rhos.is_empty() {
        return None;
    }
    let mean = rhos.iter().sum::<f64>() / rhos.len() as f64;
    let min = rhos.iter().copied().fold(f64::INFINITY, f64::min);
    let max = rhos.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Some(SweepSummary { count: rhos.len(), mean, min, max, relative_spread: (max - min) / mean })
}

fn run_point(subject: &SweepSubject<'_>, point: &[(String, f64)], cfg: &SimConfig, analysis: &Analysis) -> SweepRow {
    let mut row = SweepRow {
        point: point.to_vec(),
        target: None,
        rho_hat: None,
        bound: None,
        final_abs_error: None,
        status: String::new(),
    };
    match subject {
        SweepSubject::Program { expression, program } => {
            let asg: Assignment = point.iter().map(|(k, v)| (k.clone(), InputValue::Value(*v))).collect();
            match verify_program(program, expression, &asg, cfg, analysis) {
                Ok(v) => {
                    let r = v.report;
                    row.target = Some(r.target_value);
                    row.rho_hat = r.estimate.as_ref().map(|e| e.rho_hat);
                    row.bound = Some(r.predicted.value);
                    row.final_abs_error = r.final_abs_error;
                    row.status = match r.estimate_error {
                        Some(e) if r.estimate.is_none() => format!("{:?}: {e}", r.outcome),
                        _ => format!("{:?}", r.outcome),
                    };
                }
                Err(e) => row.status = format!("error: {e}"),
            }
        }
        SweepSubject::Preset(Preset::NaiveInversion) => {
            let a = match point {
                [(name, a)] if name == "a" && *a > 0.0 => *a,
                _ => {
                    row.status = "error: naive-inversion takes one positive axis `a`".into();
                    return row;
                }
            };
            let mut cfg = cfg.clone();
            if cfg.output_grid == OutputGrid::Accepted {
                cfg.output_grid = OutputGrid::Fixed(analysis.sample_dt / cfg.sigma);
            }
            let target = 1.0 / a;
            row.target = Some(target);
            row.bound = Some(a);
            match simulate_network(&naive_inversion(), &[a, 0.0], &cfg) {
                Ok(tr) => {
                    let x = tr.series("X").unwrap_or_default();
                    row.final_abs_error = x.last().map(|v| (v - target).abs());
                    match estimate_rate_series(&tr.times, &x, target, &analysis.rate) {
                        Ok(e) => {
                            row.rho_hat = Some(e.rho_hat);
                            row.status = tr.termination.to_string();
                        }
                        Err(e) => row.status = format!("error: {e}"),
                    }
                }
                Err(e) => row.status = format!("error: {e}"),
            }
        }
    }
    row
}

/// Runs every grid point; a failing point is recorded in its row.
pub fn run_sweep(subject: &SweepSubject<'_>, grid: &Grid, cfg: &SimConfig, analysis: &Analysis, jobs: Option<usize>) -> SweepTable {
    let points = grid.points();
    let rows = map_parallel(&points, jobs, |p| run_point(subject, p, cfg, analysis));
    let summary = summarize(&rows);
    SweepTable { axes: grid.axes.iter().map(|(n, _)| n.clone()).collect(), rows, summary }
}

impl SweepTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let opt = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
        let mut header: Vec<String> = self.axes.clone();
        header.extend(["target", "rho_hat", "bound", "final_abs_error", "status"].map(String::from));
        writeln!(out, "{}", header.join(",")).unwrap();
        for r in &self.rows {
            let mut cells: Vec<String> = r.point.iter().map(|(_, v)| v.to_string()).collect();
            cells.extend([opt(r.target), opt(r.rho_hat), opt(r.bound), opt(r.final_abs_error)]);
            cells.push(format!("\"{}\"", r.status.replace('"', "'")));
            writeln!(out, "{}", cells.join(",")).unwrap();
        }
        if let Some(s) = &self.summary {
            writeln!(
                out,
                "# summary n={} mean={} min={} max={} relative_spread={}",
                s.count, s.mean, s.min, s.max, s.relative_spread
            )
            .unwrap();
        }
        out
    }
}
