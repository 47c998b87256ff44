//! Empirical convergence rates, digit times and the lemma bound calculus.

use serde::Serialize;
use thiserror::Error;

use crate::forcing::{ForcedForm, ForcedSystemSpec};
use crate::gates::{serialize_rate, SpeedBound};
use crate::sim::{Termination, Trajectory};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RateError {
    #[error("trajectory did not complete: {0}")]
    Incomplete(String),
    #[error("no species `{0}` in trajectory")]
    UnknownSpecies(String),
    #[error("target {0} is not finite")]
    BadTarget(f64),
    #[error("only {got} samples in fit window [{t_lo}, {t_hi}]; horizon too short")]
    TooFewSamples { got: usize, t_lo: f64, t_hi: f64 },
    #[error("error never fell below 1e-{n}; final error {final_error:e}")]
    NotConverged { n: u32, final_error: f64 },
    #[error("domain error: {0}")]
    Domain(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateOptions {
    pub err_floor: f64,
    pub err_ceil: f64,
    pub min_samples: usize,
}

impl Default for RateOptions {
    fn default() -> Self {
        RateOptions { err_floor: 1e-9, err_ceil: 1e-2, min_samples: 8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateEstimate {
    /// Infinite when the error is below the floor from the start.
    #[serde(serialize_with = "serialize_rate")]
    pub rho_hat: f64,
    pub fit_window: (f64, f64),
    pub r_squared: f64,
    pub samples_used: usize,
}

fn usable(traj: &Trajectory, species: &[&str]) -> Result<(), RateError> {
    match &traj.termination {
        Termination::Completed => Ok(()),
        Termination::Blowup { species: s, .. } if !species.contains(&s.as_str()) => Ok(()),
        other => Err(RateError::Incomplete(other.to_string())),
    }
}

fn column(traj: &Trajectory, species: &str) -> Result<Vec<f64>, RateError> {
    traj.series(species).ok_or_else(|| RateError::UnknownSpecies(species.to_string()))
}

/// Least-squares slope of `ln|x - target|` over the window where the error
/// has settled below `err_ceil` and not yet reached `err_floor`.
pub fn estimate_rate_series(times: &[f64], values: &[f64], target: f64, opts: &RateOptions) -> Result<RateEstimate, RateError> {
    if !target.is_finite() {
        return Err(RateError::BadTarget(target));
    }
    let err: Vec<f64> = values.iter().map(|v| (v - target).abs()).collect();
    let (t0, t_end) = match (times.first(), times.last()) {
        (Some(a), Some(b)) => (*a, *b),
        _ => return Err(RateError::TooFewSamples { got: 0, t_lo: 0.0, t_hi: 0.0 }),
    };
    let skip = t0 + 0.01 * (t_end - t0);
    if times.iter().zip(&err).filter(|(t, _)| **t >= skip).all(|(_, e)| *e < opts.err_floor) {
        return Ok(RateEstimate { rho_hat: f64::INFINITY, fit_window: (skip, t_end), r_squared: 1.0, samples_used: 0 });
    }
    let lo = err.iter().rposition(|e| !(*e <= opts.err_ceil)).map_or(0, |i| i + 1);
    let hi = (lo..err.len()).find(|&i| err[i] < opts.err_floor).unwrap_or(err.len());
    let pts: Vec<(f64, f64)> = (lo..hi).filter(|&i| err[i] > 0.0).map(|i| (times[i], err[i].ln())).collect();
    let (t_lo, t_hi) = (
        times.get(lo).copied().unwrap_or(t_end),
        times.get(hi.saturating_sub(1)).copied().unwrap_or(t_end),
    );
    if pts.len() < opts.min_samples {
        return Err(RateError::TooFewSamples { got: pts.len(), t_lo, t_hi });
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (t, y) in &pts {
        sxx += (t - mt).powi(2);
        sxy += (t - mt) * (y - my);
        syy += (y - my).powi(2);
    }
    let slope = sxy / sxx;
    let r_squared = if syy > 0.0 { (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0) } else { 1.0 };
    Ok(RateEstimate { rho_hat: -slope, fit_window: (t_lo, t_hi), r_squared, samples_used: pts.len() })
}

pub fn estimate_rate(traj: &Trajectory, species: &str, target: f64) -> Result<RateEstimate, RateError> {
    estimate_rate_with(traj, species, target, &RateOptions::default())
}

pub fn estimate_rate_with(traj: &Trajectory, species: &str, target: f64, opts: &RateOptions) -> Result<RateEstimate, RateError> {
    usable(traj, &[species])?;
    estimate_rate_series(&traj.times, &column(traj, species)?, target, opts)
}

/// Rate of `positive - negative` toward `target`.
pub fn estimate_rate_dual(traj: &Trajectory, positive: &str, negative: &str, target: f64, opts: &RateOptions) -> Result<RateEstimate, RateError> {
    usable(traj, &[positive, negative])?;
    let (p, n) = (column(traj, positive)?, column(traj, negative)?);
    let psi: Vec<f64> = p.iter().zip(&n).map(|(a, b)| a - b).collect();
    estimate_rate_series(&traj.times, &psi, target, opts)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DigitTime {
    pub n: u32,
    pub t_n: f64,
}

/// First time after which the error stays below `10^-n`, interpolated
/// log-linearly inside the crossing step.
pub fn digits_time_series(times: &[f64], values: &[f64], target: f64, n: u32) -> Result<DigitTime, RateError> {
    if !target.is_finite() {
        return Err(RateError::BadTarget(target));
    }
    let thr = 10f64.powi(-(n as i32));
    let err: Vec<f64> = values.iter().map(|v| (v - target).abs()).collect();
    let last = match err.last() {
        Some(e) => *e,
        None => return Err(RateError::NotConverged { n, final_error: f64::NAN }),
    };
    if !(last < thr) {
        return Err(RateError::NotConverged { n, final_error: last });
    }
    let i = match err.iter().rposition(|e| !(*e < thr)) {
        None => return Ok(DigitTime { n, t_n: 0.0 }),
        Some(i) => i,
    };
    let (t0, t1, e0, e1) = (times[i], times[i + 1], err[i], err[i + 1]);
    let frac = if e1 > 0.0 && e0 > 0.0 {
        (thr.ln() - e0.ln()) / (e1.ln() - e0.ln())
    } else {
        (e0 - thr) / (e0 - e1)
    };
    Ok(DigitTime { n, t_n: t0 + frac.clamp(0.0, 1.0) * (t1 - t0) })
}

pub fn digits_time(traj: &Trajectory, species: &str, target: f64, n: u32) -> Result<DigitTime, RateError> {
    usable(traj, &[species])?;
    digits_time_series(&traj.times, &column(traj, species)?, target, n)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "verdict", content = "details", rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail(String),
}

impl Verdict {
    pub fn passed(&self) -> bool {
        *self == Verdict::Pass
    }
}

pub const DEFAULT_SLACK: f64 = 0.15;

/// Passes iff `rho_hat >= (1 - slack) * bound`.
pub fn check_speed(est: &RateEstimate, bound: &SpeedBound, slack: f64) -> Verdict {
    let need = (1.0 - slack) * bound.value;
    if est.rho_hat.is_infinite() && est.rho_hat > 0.0 || est.rho_hat >= need {
        Verdict::Pass
    } else {
        Verdict::Fail(format!(
            "rho_hat {:.4} < (1 - {slack}) * {} = {need:.4} [{}]",
            est.rho_hat, bound.value, bound.case_tag
        ))
    }
}

/// One application of a rate lemma.
#[derive(Debug, Clone, PartialEq)]
pub enum BoundOp {
    /// `alpha * g`
    ScalarProduct { rate: f64 },
    Sum { rates: [f64; 2] },
    Product { rates: [f64; 2], limits: [f64; 2] },
    /// `1 / g`, defined for a nonzero limit.
    Reciprocal { rate: f64, limit: f64 },
    /// `g^(1/m)` for a non-negative limit.
    Root { m: u32, rate: f64, limit: f64 },
    /// `dx/dt = g1 - g2 x`
    System1 { rates: [f64; 2], limits: [f64; 2] },
    /// `dx/dt = x (g1 - g2 x^m)` with both limits positive.
    System2 { m: u32, rates: [f64; 2], limits: [f64; 2] },
    /// `dx/dt = x (g1 - g2 x^m)` with `g1* < 0 < g2*`.
    Test2 { rates: [f64; 2], limits: [f64; 2] },
    /// `dx/dt = x (1 - g x^m)` with `g -> 0`: growth exponent, not a rate.
    TestGrowth { m: u32, rate: f64 },
}

impl BoundOp {
    pub fn bound(&self) -> Result<SpeedBound, RateError> {
        let positive = |r: f64| if r > 0.0 { Ok(r) } else { Err(RateError::Domain(format!("rate {r} is not positive"))) };
        Ok(match *self {
            BoundOp::ScalarProduct { rate } => SpeedBound::new(positive(rate)?, "scalar product: rho"),
            BoundOp::Sum { rates: [a, b] } => SpeedBound::new(positive(a)?.min(positive(b)?), "sum: min(rho1, rho2)"),
            BoundOp::Product { rates: [a, b], limits: [la, lb] } => {
                let (a, b) = (positive(a)?, positive(b)?);
                match (la == 0.0, lb == 0.0) {
                    (false, false) => SpeedBound::new(a.min(b), "product, both limits nonzero: min(rho1, rho2)"),
                    (true, false) => SpeedBound::new(a, "product, g1*=0: rho1"),
                    (false, true) => SpeedBound::new(b, "product, g2*=0: rho2"),
                    (true, true) => SpeedBound::new(a + b, "product, both limits zero: rho1 + rho2"),
                }
            }
            BoundOp::Reciprocal { rate, limit } => {
                if limit == 0.0 || !limit.is_finite() {
                    return Err(RateError::Domain("reciprocal of a function with zero limit".into()));
                }
                SpeedBound::new(positive(rate)?, "reciprocal: rho")
            }
            BoundOp::Root { m, rate, limit } => {
                if m < 1 || limit < 0.0 {
                    return Err(RateError::Domain(format!("root m={m} of limit {limit}")));
                }
                let r = positive(rate)?;
                if limit > 0.0 {
                    SpeedBound::new(r, "root, g*>0: rho")
                } else {
                    SpeedBound::new(r / f64::from(m), format!("root, g*=0: rho/{m}"))
                }
            }
            BoundOp::System1 { rates: [a, b], limits: [_, l2] } => {
                if !(l2 > 0.0) {
                    return Err(RateError::Domain(format!("linear system needs g2* > 0, got {l2}")));
                }
                SpeedBound::new(positive(a)?.min(positive(b)?).min(l2), "linear: min(rho1, rho2, g2*)")
            }
            BoundOp::System2 { m, rates: [a, b], limits: [l1, l2] } => {
                if !(l1 > 0.0 && l2 > 0.0) || m < 1 {
                    return Err(RateError::Domain(format!("power system needs g1*, g2* > 0, got {l1}, {l2}")));
                }
                let v = positive(a)?.min(positive(b)?).min(f64::from(m) * l1);
                SpeedBound::new(v, "power: min(rho1, rho2, m g1*)")
            }
            BoundOp::Test2 { rates: [a, _], limits: [l1, l2] } => {
                if !(l1 < 0.0 && l2 > 0.0) {
                    return Err(RateError::Domain(format!("decay system needs g1* < 0 < g2*, got {l1}, {l2}")));
                }
                SpeedBound::new(positive(a)?.min(-l1), "decay to zero: min(rho1, -g1*)")
            }
            BoundOp::TestGrowth { m, rate } => {
                if m < 1 {
                    return Err(RateError::Domain("growth system needs m >= 1".into()));
                }
                SpeedBound::new((positive(rate)? / f64::from(m)).min(1.0), "growth exponent: min(rho/m, 1)")
            }
        })
    }
}

/// The smallest bound over a list of lemma applications.
pub fn bound_calculus(ops: &[BoundOp]) -> Result<SpeedBound, RateError> {
    let mut out = SpeedBound::unbounded();
    let mut tags = Vec::new();
    for op in ops {
        let b = op.bound()?;
        if b.value < out.value {
            out.value = b.value;
        }
        tags.push(b.case_tag);
    }
    if !tags.is_empty() {
        out.case_tag = tags.join("; ");
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LemmaFamily {
    System1,
    System2,
    Test2,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LemmaPrediction {
    pub family: LemmaFamily,
    /// `None` for the growth lemma.
    pub limit: Option<f64>,
    pub bound: SpeedBound,
}

/// Picks the lemma whose hypotheses `spec` satisfies.
pub fn lemma_prediction(spec: &ForcedSystemSpec) -> Result<LemmaPrediction, RateError> {
    let (l1, l2) = (spec.g1.limit(), spec.g2.limit());
    let rates = [spec.g1.rate(), spec.g2.rate()];
    let limits = [l1, l2];
    match spec.form {
        ForcedForm::Linear => {
            let bound = BoundOp::System1 { rates, limits }.bound()?;
            Ok(LemmaPrediction { family: LemmaFamily::System1, limit: Some(l1 / l2), bound })
        }
        ForcedForm::Power if l1 > 0.0 && l2 > 0.0 => {
            let bound = BoundOp::System2 { m: spec.m, rates, limits }.bound()?;
            let limit = (l1 / l2).powf(1.0 / f64::from(spec.m));
            Ok(LemmaPrediction { family: LemmaFamily::System2, limit: Some(limit), bound })
        }
        ForcedForm::Power if l1 < 0.0 && l2 > 0.0 => {
            let bound = BoundOp::Test2 { rates, limits }.bound()?;
            Ok(LemmaPrediction { family: LemmaFamily::Test2, limit: Some(0.0), bound })
        }
        ForcedForm::Power if spec.g1.terms.is_empty() && l1 == 1.0 && l2 == 0.0 => {
            let bound = BoundOp::TestGrowth { m: spec.m, rate: rates[1] }.bound()?;
            Ok(LemmaPrediction { family: LemmaFamily::Test, limit: None, bound })
        }
        ForcedForm::Power => Err(RateError::Domain(format!(
            "no lemma covers g1* = {l1}, g2* = {l2} (need both positive, g1* < 0 < g2*, or g1 = 1 with g2* = 0)"
        ))),
    }
}

/// Smallest `ln x(t) / t` over the last `fraction` of the horizon.
pub fn growth_exponent(traj: &Trajectory, species: &str, fraction: f64) -> Result<f64, RateError> {
    let x = column(traj, species)?;
    let t_end = traj.final_time();
    let start = t_end * (1.0 - fraction);
    Ok(traj
        .times
        .iter()
        .zip(&x)
        .filter(|(t, _)| **t >= start && **t > 0.0)
        .map(|(t, v)| v.ln() / t)
        .fold(f64::INFINITY, f64::min))
}
