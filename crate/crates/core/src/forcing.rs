//! Forcing functions `c0 + Σ c·t^k·exp(-r·t)` and the scalar non-autonomous
//! systems they drive.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::sim::{integrate, OdeSystem, SimConfig, SimError, Trajectory};

#[derive(Debug, Clone, PartialEq, Error)]
#[error("forcing function: {0}")]
pub struct ForcingError(pub String);

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ForcingTerm {
    pub coeff: f64,
    pub power: u32,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ForcingFunction {
    pub constant: f64,
    pub terms: Vec<ForcingTerm>,
}

impl ForcingFunction {
    pub fn constant(c: f64) -> Self {
        ForcingFunction { constant: c, terms: Vec::new() }
    }

    /// `c0 + c·exp(-r·t)`.
    pub fn exponential(c0: f64, c: f64, r: f64) -> Self {
        ForcingFunction { constant: c0, terms: vec![ForcingTerm { coeff: c, power: 0, rate: r }] }
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.terms.iter().fold(self.constant, |acc, term| {
            acc + term.coeff * t.powi(term.power as i32) * (-term.rate * t).exp()
        })
    }

    pub fn limit(&self) -> f64 {
        self.constant
    }

    /// Slowest decay rate among the non-vanishing terms; infinite for a
    /// constant.
    pub fn rate(&self) -> f64 {
        self.terms.iter().filter(|t| t.coeff != 0.0).map(|t| t.rate).fold(f64::INFINITY, f64::min)
    }
}

impl fmt::Display for ForcingFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.constant)?;
        for t in &self.terms {
            let sign = if t.coeff < 0.0 { '-' } else { '+' };
            write!(f, " {sign} {}*", t.coeff.abs())?;
            if t.power > 0 {
                write!(f, "t^{}*", t.power)?;
            }
            write!(f, "exp(-{}*t)", t.rate)?;
        }
        Ok(())
    }
}

struct Scanner<'a> {
    s: &'a [u8],
    pos: usize,
}

impl Scanner<'_> {
    fn skip_ws(&mut self) {
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.s.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: u8) -> Result<(), ForcingError> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.fail(format!("expected `{}`", c as char)))
        }
    }

    fn eat_word(&mut self, w: &str) -> bool {
        self.skip_ws();
        if self.s[self.pos..].starts_with(w.as_bytes()) {
            self.pos += w.len();
            true
        } else {
            false
        }
    }

    fn fail(&self, msg: impl Into<String>) -> ForcingError {
        ForcingError(format!("{} at offset {}", msg.into(), self.pos))
    }

    fn number(&mut self) -> Result<f64, ForcingError> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.s.len() {
            let c = self.s[self.pos];
            let exp_sign = (c == b'-' || c == b'+') && self.pos > start && matches!(self.s[self.pos - 1], b'e' | b'E');
            if c.is_ascii_digit() || c == b'.' || c == b'e' || c == b'E' || exp_sign {
                self.pos += 1;
            } else {
                break;
            }
        }
        let text = std::str::from_utf8(&self.s[start..self.pos]).unwrap_or("");
        text.parse().map_err(|_| ForcingError(format!("bad number `{text}` at offset {start}")))
    }

    /// `exp(-r*t)`, `exp(-t)` or `exp(-r t)`; returns `r`.
    fn exponential(&mut self) -> Result<f64, ForcingError> {
        self.expect(b'(')?;
        self.expect(b'-')?;
        let r = if self.peek() == Some(b't') { 1.0 } else { self.number()? };
        self.eat(b'*');
        if !self.eat(b't') {
            return Err(self.fail("expected `t` in exponent"));
        }
        self.expect(b')')?;
        if !(r > 0.0 && r.is_finite()) {
            return Err(self.fail(format!("decay rate {r} must be positive")));
        }
        Ok(r)
    }
}

impl FromStr for ForcingFunction {
    type Err = ForcingError;

    fn from_str(text: &str) -> Result<Self, ForcingError> {
        let mut sc = Scanner { s: text.as_bytes(), pos: 0 };
        let mut out = ForcingFunction::constant(0.0);
        let mut first = true;
        loop {
            let sign = if sc.eat(b'-') {
                -1.0
            } else if sc.eat(b'+') || first {
                1.0
            } else if sc.peek().is_none() {
                break;
            } else {
                return Err(sc.fail("expected `+` or `-`"));
            };
            first = false;
            let (mut coeff, mut power, mut rate) = (sign, 0u32, None);
            loop {
                match sc.peek() {
                    Some(c) if c.is_ascii_digit() || c == b'.' => coeff *= sc.number()?,
                    Some(b't') => {
                        sc.pos += 1;
                        if sc.eat(b'^') {
                            let k = sc.number()?;
                            if k < 0.0 || k.fract() != 0.0 || k > 64.0 {
                                return Err(sc.fail(format!("power {k} must be a small non-negative integer")));
                            }
                            power += k as u32;
                        } else {
                            power += 1;
                        }
                    }
                    Some(b'e') if sc.eat_word("exp") => {
                        let r = sc.exponential()?;
                        rate = Some(rate.unwrap_or(0.0) + r);
                    }
                    _ => return Err(sc.fail("expected a number, `t` or `exp(...)`")),
                }
                if !sc.eat(b'*') {
                    break;
                }
            }
            match rate {
                Some(rate) => out.terms.push(ForcingTerm { coeff, power, rate }),
                None if power == 0 => out.constant += coeff,
                None => return Err(sc.fail("a power of t needs a decaying exponential factor")),
            }
        }
        if first {
            return Err(ForcingError("empty forcing function".into()));
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ForcedForm {
    /// `dx/dt = g1 - g2·x`
    Linear,
    /// `dx/dt = x·(g1 - g2·x^m)`
    Power,
}

impl FromStr for ForcedForm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "linear" => Ok(ForcedForm::Linear),
            "power" => Ok(ForcedForm::Power),
            other => Err(format!("unknown form `{other}` (expected linear or power)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ForcedSystemSpec {
    pub form: ForcedForm,
    pub m: u32,
    pub g1: ForcingFunction,
    pub g2: ForcingFunction,
    pub x0: f64,
}

impl ForcedSystemSpec {
    pub fn validate(&self) -> Result<(), SimError> {
        if !self.x0.is_finite() {
            return Err(SimError::Config(format!("x0 = {}", self.x0)));
        }
        if self.form == ForcedForm::Power {
            if self.m < 1 {
                return Err(SimError::Config("power form needs m >= 1".into()));
            }
            if !(self.x0 > 0.0) {
                return Err(SimError::Config(format!("power form needs x0 > 0, got {}", self.x0)));
            }
        }
        Ok(())
    }
}

impl OdeSystem for ForcedSystemSpec {
    fn dim(&self) -> usize {
        1
    }

    fn rhs(&self, t: f64, x: &[f64], dx: &mut [f64]) {
        let (g1, g2) = (self.g1.eval(t), self.g2.eval(t));
        dx[0] = match self.form {
            ForcedForm::Linear => g1 - g2 * x[0],
            ForcedForm::Power => x[0] * (g1 - g2 * x[0].powi(self.m as i32)),
        };
    }
}

/// Integrates a forced scalar system; the trajectory's single species is `x`.
pub fn simulate_forced(spec: &ForcedSystemSpec, cfg: &SimConfig) -> Result<Trajectory, SimError> {
    spec.validate()?;
    integrate(spec, &[spec.x0], vec!["x".to_string()], cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{closed_form_reference, ClosedForm};

    #[test]
    fn parses_documented_form() {
        let f: ForcingFunction = "2 + 1*exp(-3*t) + 0.5*t^1*exp(-1*t)".parse().unwrap();
        assert_eq!(f.constant, 2.0);
        assert_eq!(f.terms, vec![
            ForcingTerm { coeff: 1.0, power: 0, rate: 3.0 },
            ForcingTerm { coeff: 0.5, power: 1, rate: 1.0 },
        ]);
        assert_eq!(f.limit(), 2.0);
        assert_eq!(f.rate(), 1.0);
        let t = 0.7f64;
        assert!((f.eval(t) - (2.0 + (-3.0 * t).exp() + 0.5 * t * (-t).exp())).abs() < 1e-15);
    }

    #[test]
    fn parses_short_forms() {
        let f: ForcingFunction = "-1+exp(-2*t)".parse().unwrap();
        assert_eq!((f.limit(), f.rate()), (-1.0, 2.0));
        let f: ForcingFunction = "4".parse().unwrap();
        assert_eq!(f.rate(), f64::INFINITY);
        let f: ForcingFunction = "exp(-t) - 2*t*exp(-0.5*t)".parse().unwrap();
        assert_eq!(f.terms[1], ForcingTerm { coeff: -2.0, power: 1, rate: 0.5 });
        let f: ForcingFunction = "1e-3*exp(-2*t)".parse().unwrap();
        assert_eq!(f.terms[0].coeff, 1e-3);
    }

    #[test]
    fn rejects_non_decaying_terms() {
        for bad in ["", "t", "exp(2*t)", "exp(-0*t)", "1 +", "2 3", "exp(-t", "t^-1*exp(-t)"] {
            assert!(bad.parse::<ForcingFunction>().is_err(), "{bad}");
        }
    }

    #[test]
    fn display_round_trips() {
        let f: ForcingFunction = "2 - 1.5*exp(-3*t) + 0.5*t^2*exp(-1*t)".parse().unwrap();
        assert_eq!(f.to_string().parse::<ForcingFunction>().unwrap(), f);
    }

    #[test]
    fn linear_form_integrating_factor() {
        let spec = ForcedSystemSpec {
            form: ForcedForm::Linear,
            m: 1,
            g1: "2 + exp(-3*t)".parse().unwrap(),
            g2: ForcingFunction::constant(1.0),
            x0: 0.0,
        };
        let tr = simulate_forced(&spec, &SimConfig::default().with_grid(0.5)).unwrap();
        for (t, x) in tr.times.iter().zip(&tr.states) {
            let exact = 2.0 * (1.0 - (-t).exp()) + 0.5 * ((-t).exp() - (-3.0 * t).exp());
            assert!((x[0] - exact).abs() < 1e-9);
        }
    }

    #[test]
    fn power_form_is_inversion() {
        let spec = ForcedSystemSpec {
            form: ForcedForm::Power,
            m: 1,
            g1: ForcingFunction::constant(1.0),
            g2: ForcingFunction::constant(2.0),
            x0: 1.0,
        };
        let tr = simulate_forced(&spec, &SimConfig::default().with_grid(0.5)).unwrap();
        for (t, x) in tr.times.iter().zip(&tr.states) {
            let exact = closed_form_reference(ClosedForm::DesignedInversion { a: 2.0, x0: 1.0 }, *t);
            assert!((x[0] - exact).abs() < 1e-9);
        }
        assert!((tr.final_value("x").unwrap() - 0.5).abs() < 1e-8);
    }

    #[test]
    fn power_form_needs_positive_start() {
        let spec = ForcedSystemSpec {
            form: ForcedForm::Power,
            m: 1,
            g1: ForcingFunction::constant(1.0),
            g2: ForcingFunction::constant(1.0),
            x0: 0.0,
        };
        assert!(simulate_forced(&spec, &SimConfig::default()).is_err());
    }
}
