//! Compile, simulate and analyze in one pass.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use crate::compiler::{compile, Assignment, CompileError, CompiledProgram, InputValue, Mode, Signal, Target};
use crate::forcing::{simulate_forced, ForcedSystemSpec};
use crate::gates::SpeedBound;
use crate::rate::{
    check_speed, digits_time_series, estimate_rate_series, estimate_rate_with, growth_exponent, lemma_prediction,
    LemmaFamily, LemmaPrediction, RateEstimate, RateOptions, Verdict, DEFAULT_SLACK,
};
use crate::sim::{simulate, OutputGrid, SimConfig, SimError, Termination, Trajectory};

/// Settings shared by every verification.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Analysis {
    pub slack: f64,
    /// Requested accuracy is `10^-digits`.
    pub digits: u32,
    pub rate: RateOptions,
    /// Sampling step used for analysis when the config asks for accepted steps.
    pub sample_dt: f64,
}

impl Default for Analysis {
    fn default() -> Self {
        Analysis { slack: DEFAULT_SLACK, digits: 6, rate: RateOptions::default(), sample_dt: 0.05 }
    }
}

/// Horizon used by `verify` when none is given.
pub const VERIFY_T_END: f64 = 40.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Pass,
    Blowup,
    NotConverged,
    SpeedFail,
}

impl Outcome {
    pub fn exit_code(self) -> i32 {
        match self {
            Outcome::Pass => 0,
            Outcome::Blowup => 3,
            Outcome::NotConverged => 4,
            Outcome::SpeedFail => 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub expression: String,
    pub mode: Mode,
    pub inputs: BTreeMap<String, InputValue>,
    pub output: Signal,
    pub target: Target,
    pub target_value: f64,
    pub final_value: Option<f64>,
    pub final_output: Option<Target>,
    pub final_abs_error: Option<f64>,
    pub estimate: Option<RateEstimate>,
    pub estimate_error: Option<String>,
    pub predicted: SpeedBound,
    pub digit_time: Option<crate::rate::DigitTime>,
    pub termination: Termination,
    pub verdict: Verdict,
    pub outcome: Outcome,
}

impl VerifyReport {
    pub fn exit_code(&self) -> i32 {
        self.outcome.exit_code()
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let opt = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{v:.12}"));
        writeln!(s, "expression   {} ({})", self.expression, self.mode).unwrap();
        writeln!(s, "output       {}", self.output).unwrap();
        writeln!(s, "target       {:.12}", self.target_value).unwrap();
        writeln!(s, "final value  {}", opt(self.final_value)).unwrap();
        writeln!(s, "final error  {}", self.final_abs_error.map_or("n/a".into(), |e| format!("{e:.3e}"))).unwrap();
        match (&self.estimate, &self.estimate_error) {
            (Some(e), _) => writeln!(
                s,
                "rho_hat      {:.4} (window [{:.2}, {:.2}], r^2 {:.5}, {} samples)",
                e.rho_hat, e.fit_window.0, e.fit_window.1, e.r_squared, e.samples_used
            )
            .unwrap(),
            (None, Some(msg)) => writeln!(s, "rho_hat      n/a ({msg})").unwrap(),
            _ => writeln!(s, "rho_hat      n/a").unwrap(),
        }
        writeln!(s, "predicted    >= {} [{}]", self.predicted.value, self.predicted.case_tag).unwrap();
        if let Some(d) = &self.digit_time {
            writeln!(s, "T_{}          {:.4}", d.n, d.t_n).unwrap();
        }
        writeln!(s, "termination  {}", self.termination).unwrap();
        let verdict = match &self.verdict {
            Verdict::Pass => "pass".to_string(),
            Verdict::Fail(d) => format!("fail: {d}"),
        };
        writeln!(s, "speed check  {verdict}").unwrap();
        writeln!(s, "outcome      {:?} (exit {})", self.outcome, self.exit_code()).unwrap();
        s
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum VerifyError {
    #[error(transparent)]
    Compile(#[from] CompileError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Report plus the trajectory it was computed from.
#[derive(Debug, Clone)]
pub struct Verified {
    pub report: VerifyReport,
    pub trajectory: Trajectory,
}

fn sampled(cfg: &SimConfig, dt: f64) -> SimConfig {
    let mut cfg = cfg.clone();
    if cfg.output_grid == OutputGrid::Accepted {
        cfg.output_grid = OutputGrid::Fixed(dt / cfg.sigma);
    }
    cfg
}

/// Output values over time: the species itself, or `p - n` for a wire.
pub fn output_series(traj: &Trajectory, output: &Signal) -> Option<Vec<f64>> {
    match output {
        Signal::Scalar(s) => traj.series(s),
        Signal::Wire(w) => {
            let (p, n) = (traj.series(&w.positive)?, traj.series(&w.negative)?);
            Some(p.iter().zip(&n).map(|(a, b)| a - b).collect())
        }
    }
}

/// Verifies a compiled program on one input assignment.
pub fn verify_program(
    program: &CompiledProgram,
    expression: &str,
    inputs: &Assignment,
    cfg: &SimConfig,
    analysis: &Analysis,
) -> Result<Verified, VerifyError> {
    let target = program.target(inputs)?;
    let mut predicted = program.predicted_bound(inputs)?;
    if cfg.sigma != 1.0 {
        predicted = SpeedBound::new(predicted.value * cfg.sigma, format!("{} x sigma {}", predicted.case_tag, cfg.sigma));
    }
    let cfg = sampled(cfg, analysis.sample_dt);
    let traj = simulate(program, inputs, &cfg)?;
    let output = program.circuit.output.clone();
    let series = output_series(&traj, &output).unwrap_or_default();
    let target_value = target.value();
    let final_value = series.last().copied();
    let final_output = match &output {
        Signal::Scalar(s) => traj.final_value(s).map(Target::Scalar),
        Signal::Wire(w) => match (traj.final_value(&w.positive), traj.final_value(&w.negative)) {
            (Some(p), Some(n)) => Some(Target::Pair(p, n)),
            _ => None,
        },
    };
    let final_abs_error = final_value.map(|v| (v - target_value).abs());
    let accuracy = 10f64.powi(-(analysis.digits as i32));

    let output_blew_up = matches!(&traj.termination, Termination::Blowup { species, .. } if output.species().contains(&species.as_str()));
    let (estimate, estimate_error) = if output_blew_up || matches!(traj.termination, Termination::StiffFailure { .. }) {
        (None, Some(format!("trajectory ended with {}", traj.termination)))
    } else {
        match estimate_rate_series(&traj.times, &series, target_value, &analysis.rate) {
            Ok(e) => (Some(e), None),
            Err(e) => (None, Some(e.to_string())),
        }
    };
    let digit_time = digits_time_series(&traj.times, &series, target_value, analysis.digits).ok();
    let verdict = match &estimate {
        Some(e) => check_speed(e, &predicted, analysis.slack),
        None => Verdict::Fail(estimate_error.clone().unwrap_or_default()),
    };
    let outcome = match &traj.termination {
        Termination::Blowup { .. } => Outcome::Blowup,
        Termination::StiffFailure { .. } => Outcome::NotConverged,
        Termination::Completed if !final_abs_error.is_some_and(|e| e <= accuracy) => Outcome::NotConverged,
        Termination::Completed if !verdict.passed() => Outcome::SpeedFail,
        Termination::Completed => Outcome::Pass,
    };
    let report = VerifyReport {
        expression: expression.to_string(),
        mode: program.circuit.mode,
        inputs: inputs.clone(),
        output,
        target,
        target_value,
        final_value,
        final_output,
        final_abs_error,
        estimate,
        estimate_error,
        predicted,
        digit_time,
        termination: traj.termination.clone(),
        verdict,
        outcome,
    };
    Ok(Verified { report, trajectory: traj })
}

/// Parses, compiles and verifies `expression`.
pub fn verify(expression: &str, mode: Mode, inputs: &Assignment, cfg: &SimConfig, analysis: &Analysis) -> Result<Verified, VerifyError> {
    let program = compile(expression, mode)?;
    verify_program(&program, expression, inputs, cfg, analysis)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LemmaOutcome {
    pub prediction: LemmaPrediction,
    pub estimate: Option<RateEstimate>,
    /// Smallest `ln x(t) / t` over the final third, growth lemma only.
    pub growth: Option<f64>,
    pub final_value: f64,
    pub termination: Termination,
    pub verdict: Verdict,
}

/// Margin allowed below the predicted growth exponent.
pub const GROWTH_MARGIN: f64 = 0.1;

/// Simulates one forced scenario and compares it with its lemma.
pub fn run_lemma(spec: &ForcedSystemSpec, cfg: &SimConfig, analysis: &Analysis) -> Result<(LemmaOutcome, Trajectory), VerifyError> {
    let prediction = lemma_prediction(spec).map_err(|e| SimError::Config(e.to_string()))?;
    let cfg = sampled(cfg, analysis.sample_dt);
    let traj = simulate_forced(spec, &cfg)?;
    let final_value = traj.final_value("x").unwrap_or(f64::NAN);
    let (estimate, growth, verdict) = if prediction.family == LemmaFamily::Test {
        let g = growth_exponent(&traj, "x", 1.0 / 3.0).unwrap_or(f64::NAN);
        let need = prediction.bound.value - GROWTH_MARGIN;
        let verdict = if !traj.completed() {
            Verdict::Fail(format!("trajectory ended with {}", traj.termination))
        } else if g >= need {
            Verdict::Pass
        } else {
            Verdict::Fail(format!("ln x / t = {g:.4} < {need:.4}"))
        };
        (None, Some(g), verdict)
    } else {
        let limit = prediction.limit.unwrap_or(f64::NAN);
        match estimate_rate_with(&traj, "x", limit, &analysis.rate) {
            Ok(e) => {
                let v = check_speed(&e, &prediction.bound, analysis.slack);
                (Some(e), None, v)
            }
            Err(e) => (None, None, Verdict::Fail(e.to_string())),
        }
    };
    let outcome = LemmaOutcome { prediction, estimate, growth, final_value, termination: traj.termination.clone(), verdict };
    Ok((outcome, traj))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forcing::{ForcedForm, ForcingFunction};

    fn asg(pairs: &[(&str, f64)]) -> Assignment {
        pairs.iter().map(|(k, v)| (k.to_string(), InputValue::Value(*v))).collect()
    }

    #[test]
    fn sqrt_of_reciprocal_passes() {
        let cfg = SimConfig::default().with_t_end(30.0);
        let v = verify("sqrt(1/(a+b))", Mode::NonNegative, &asg(&[("a", 2.0), ("b", 3.0)]), &cfg, &Analysis::default()).unwrap();
        let r = &v.report;
        assert!((r.target_value - 0.2f64.sqrt()).abs() < 1e-15);
        assert_eq!(r.predicted.value, 1.0);
        assert_eq!(r.outcome, Outcome::Pass, "{}", r.summary());
    }

    #[test]
    fn root_of_zero_halves_speed() {
        let cfg = SimConfig::default().with_t_end(VERIFY_T_END).with_blowup(1e30);
        let v = verify("sqrt(abs(a-b))", Mode::NonNegative, &asg(&[("a", 4.0), ("b", 4.0)]), &cfg, &Analysis::default()).unwrap();
        let r = &v.report;
        assert_eq!(r.target_value, 0.0);
        assert_eq!(r.predicted.value, 0.5);
        let rho = r.estimate.as_ref().unwrap().rho_hat;
        assert!((0.42..=0.6).contains(&rho), "{}", r.summary());
        assert_eq!(r.outcome, Outcome::Pass, "{}", r.summary());
    }

    #[test]
    fn rectified_subtraction_of_equal_inputs_exits_three() {
        let cfg = SimConfig::default().with_t_end(VERIFY_T_END);
        let v = verify("rsub(a,b)", Mode::NonNegative, &asg(&[("a", 1.0), ("b", 1.0)]), &cfg, &Analysis::default()).unwrap();
        assert_eq!(v.report.exit_code(), 3);
        assert!(matches!(&v.report.termination, Termination::Blowup { species, .. } if species == "Y0"));
        assert!(v.report.final_value.unwrap() < 1e-6);
    }

    #[test]
    fn short_horizon_is_not_converged() {
        let cfg = SimConfig::default().with_t_end(3.0);
        let v = verify("a+b", Mode::NonNegative, &asg(&[("a", 1.0), ("b", 2.0)]), &cfg, &Analysis::default()).unwrap();
        assert_eq!(v.report.exit_code(), 4);
    }

    #[test]
    fn real_mode_report_uses_difference() {
        let cfg = SimConfig::default().with_t_end(VERIFY_T_END);
        let v = verify("a*b", Mode::Real, &asg(&[("a", -3.0), ("b", 2.0)]), &cfg, &Analysis::default()).unwrap();
        assert_eq!(v.report.target, Target::Pair(0.0, 6.0));
        assert!((v.report.final_value.unwrap() + 6.0).abs() < 1e-8);
        assert_eq!(v.report.outcome, Outcome::Pass, "{}", v.report.summary());
    }

    #[test]
    fn lemma_examples() {
        let cfg = SimConfig::default().with_t_end(40.0);
        let linear = ForcedSystemSpec {
            form: ForcedForm::Linear,
            m: 1,
            g1: "2+exp(-3*t)".parse().unwrap(),
            g2: ForcingFunction::constant(1.0),
            x0: 0.0,
        };
        let (o, _) = run_lemma(&linear, &cfg, &Analysis::default()).unwrap();
        assert_eq!(o.prediction.bound.value, 1.0);
        assert!(o.estimate.unwrap().rho_hat >= 0.85);
        assert!(o.verdict.passed());

        let decay = ForcedSystemSpec {
            form: ForcedForm::Power,
            m: 1,
            g1: "-1+exp(-2*t)".parse().unwrap(),
            g2: ForcingFunction::constant(1.0),
            x0: 1.0,
        };
        let (o, _) = run_lemma(&decay, &cfg, &Analysis::default()).unwrap();
        assert_eq!(o.prediction.limit, Some(0.0));
        assert!(o.verdict.passed(), "{o:?}");

        let growth = ForcedSystemSpec {
            form: ForcedForm::Power,
            m: 2,
            g1: ForcingFunction::constant(1.0),
            g2: "exp(-1*t)".parse().unwrap(),
            x0: 1.0,
        };
        let (o, _) = run_lemma(&growth, &cfg.clone().with_blowup(1e300), &Analysis::default()).unwrap();
        assert!(o.verdict.passed(), "{o:?}");
    }

    #[test]
    fn time_change_scales_the_bound() {
        let cfg = SimConfig { sigma: 2.0, ..SimConfig::default() }.with_t_end(20.0);
        let v = verify("a*b", Mode::NonNegative, &asg(&[("a", 2.0), ("b", 3.0)]), &cfg, &Analysis::default()).unwrap();
        assert_eq!(v.report.predicted.value, 2.0);
        assert_eq!(v.report.outcome, Outcome::Pass, "{}", v.report.summary());
    }
}
