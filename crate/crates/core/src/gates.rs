//! The eight elementary gates: their reaction fragments, target maps and
//! speed lower bounds.
//!
//! Every gate reads its inputs catalytically (an input species appears with
//! the same coefficient on both sides of every reaction), so a species can
//! feed any number of gates without being consumed. Rate constants are 1.

use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::crn::{CrnError, ReactionNetwork, Role};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GateError {
    #[error("{kind} expects {expected} input(s), got {got}")]
    Arity { kind: String, expected: usize, got: usize },
    #[error("root index must be at least 2, got {0}")]
    BadRootIndex(u32),
    #[error("{0}")]
    Domain(String),
    #[error(transparent)]
    Network(#[from] CrnError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "m")]
pub enum GateKind {
    Identification,
    Inversion,
    MthRoot(u32),
    Addition,
    Multiplication,
    AbsoluteDifference,
    RectifiedSubtraction,
    PartialRealInversion,
}

impl GateKind {
    pub fn root(m: u32) -> Result<GateKind, GateError> {
        if m < 2 {
            return Err(GateError::BadRootIndex(m));
        }
        Ok(GateKind::MthRoot(m))
    }

    /// All eight kinds, with the square root standing in for the root family.
    pub fn catalogue() -> [GateKind; 8] {
        [
            GateKind::Identification,
            GateKind::Inversion,
            GateKind::MthRoot(2),
            GateKind::Addition,
            GateKind::Multiplication,
            GateKind::AbsoluteDifference,
            GateKind::RectifiedSubtraction,
            GateKind::PartialRealInversion,
        ]
    }

    pub fn arity(self) -> usize {
        match self {
            GateKind::Identification | GateKind::Inversion | GateKind::MthRoot(_) => 1,
            _ => 2,
        }
    }

    /// Gates whose output equation is multiplicative in the output (and in
    /// `Y`, where present) need strictly positive initial values.
    pub fn needs_positive_init(self) -> bool {
        !matches!(self, GateKind::Identification | GateKind::Addition | GateKind::Multiplication)
    }

    pub fn has_intermediate(self) -> bool {
        matches!(
            self,
            GateKind::MthRoot(_)
                | GateKind::AbsoluteDifference
                | GateKind::RectifiedSubtraction
                | GateKind::PartialRealInversion
        )
    }

    pub fn name(self) -> String {
        match self {
            GateKind::Identification => "identification".into(),
            GateKind::Inversion => "inversion".into(),
            GateKind::MthRoot(m) => format!("root{m}"),
            GateKind::Addition => "addition".into(),
            GateKind::Multiplication => "multiplication".into(),
            GateKind::AbsoluteDifference => "absolute_difference".into(),
            GateKind::RectifiedSubtraction => "rectified_subtraction".into(),
            GateKind::PartialRealInversion => "partial_real_inversion".into(),
        }
    }
}

impl fmt::Display for GateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

/// Hands out gate indices; gate `n` owns species `X{n}` and `Y{n}`.
#[derive(Debug, Clone, Default)]
pub struct Namer {
    next: usize,
}

impl Namer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn starting_at(next: usize) -> Self {
        Namer { next }
    }

    pub fn fresh(&mut self) -> usize {
        let n = self.next;
        self.next += 1;
        n
    }
}

pub fn output_name(index: usize) -> String {
    format!("X{index}")
}

pub fn intermediate_name(index: usize) -> String {
    format!("Y{index}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct GateInstance {
    pub kind: GateKind,
    pub index: usize,
    pub inputs: Vec<String>,
    pub output: String,
    pub intermediates: Vec<String>,
    pub fragment: ReactionNetwork,
}

impl GateInstance {
    /// Output and intermediate species that must start strictly positive.
    pub fn positive_init_species(&self) -> Vec<String> {
        if !self.kind.needs_positive_init() {
            return Vec::new();
        }
        self.intermediates.iter().chain(std::iter::once(&self.output)).cloned().collect()
    }

    /// Species owned by this gate (intermediates, then output).
    pub fn owned_species(&self) -> impl Iterator<Item = &String> {
        self.intermediates.iter().chain(std::iter::once(&self.output))
    }
}

/// Builds the reaction fragment of `kind` reading `inputs`.
pub fn gate_network(kind: GateKind, inputs: &[&str], namer: &mut Namer) -> Result<GateInstance, GateError> {
    if inputs.len() != kind.arity() {
        return Err(GateError::Arity { kind: kind.name(), expected: kind.arity(), got: inputs.len() });
    }
    if let GateKind::MthRoot(m) = kind {
        if m < 2 {
            return Err(GateError::BadRootIndex(m));
        }
        if m + 1 > 255 {
            return Err(GateError::Network(CrnError::CoefficientTooLarge(u64::from(m) + 1)));
        }
    }
    let index = namer.fresh();
    let x = output_name(index);
    let y = intermediate_name(index);
    let x = x.as_str();
    let y = y.as_str();

    let mut net = ReactionNetwork::new();
    for name in inputs {
        net.ensure(name, Role::Input)?;
    }
    if kind.has_intermediate() {
        net.declare(y, Role::Intermediate)?;
    }
    net.declare(x, Role::Output)?;

    let mut rx = |lhs: &[(&str, u8)], rhs: &[(&str, u8)]| net.add_named(lhs, rhs, 1.0, Role::Intermediate);
    match kind {
        GateKind::Identification => {
            let a = inputs[0];
            rx(&[(a, 1)], &[(a, 1), (x, 1)])?;
            rx(&[(x, 1)], &[])?;
        }
        GateKind::Inversion => {
            let a = inputs[0];
            rx(&[(x, 1)], &[(x, 2)])?;
            rx(&[(a, 1), (x, 2)], &[(a, 1), (x, 1)])?;
        }
        GateKind::MthRoot(m) => {
            let a = inputs[0];
            let m = m as u8;
            rx(&[(y, 1)], &[(y, 2)])?;
            rx(&[(a, 1), (y, m + 1)], &[(a, 1), (y, m)])?;
            rx(&[(x, 1)], &[(x, 2)])?;
            rx(&[(y, 1), (x, 2)], &[(y, 1), (x, 1)])?;
        }
        GateKind::Addition => {
            let (a, b) = (inputs[0], inputs[1]);
            rx(&[(a, 1)], &[(a, 1), (x, 1)])?;
            rx(&[(b, 1)], &[(b, 1), (x, 1)])?;
            rx(&[(x, 1)], &[])?;
        }
        GateKind::Multiplication => {
            let (a, b) = (inputs[0], inputs[1]);
            rx(&[(a, 1), (b, 1)], &[(a, 1), (b, 1), (x, 1)])?;
            rx(&[(x, 1)], &[])?;
        }
        GateKind::AbsoluteDifference => {
            let (a, b) = (inputs[0], inputs[1]);
            square_difference_clock(&mut rx, a, b, y)?;
            rx(&[(x, 1)], &[(x, 2)])?;
            rx(&[(y, 1), (x, 2)], &[(y, 1), (x, 1)])?;
        }
        GateKind::RectifiedSubtraction => {
            let (a, b) = (inputs[0], inputs[1]);
            square_difference_clock(&mut rx, a, b, y)?;
            rx(&[(a, 1), (y, 1), (x, 1)], &[(a, 1), (y, 1), (x, 2)])?;
            rx(&[(b, 1), (y, 1), (x, 1)], &[(b, 1), (y, 1)])?;
            rx(&[(y, 1), (x, 2)], &[(y, 1), (x, 1)])?;
        }
        GateKind::PartialRealInversion => {
            let (ap, an) = (inputs[0], inputs[1]);
            rx(&[(y, 1)], &[(y, 2)])?;
            rx(&[(ap, 1), (y, 2)], &[(ap, 1), (y, 1)])?;
            rx(&[(an, 1), (y, 2)], &[(an, 1), (y, 1)])?;
            rx(&[(ap, 1), (y, 1), (x, 1)], &[(ap, 1), (y, 1), (x, 2)])?;
            rx(&[(an, 1), (y, 1), (x, 1)], &[(an, 1), (y, 1)])?;
            rx(&[(ap, 2), (y, 1), (x, 2)], &[(ap, 2), (y, 1), (x, 1)])?;
        }
    }

    Ok(GateInstance {
        kind,
        index,
        inputs: inputs.iter().map(|s| s.to_string()).collect(),
        output: x.to_string(),
        intermediates: if kind.has_intermediate() { vec![y.to_string()] } else { Vec::new() },
        fragment: net,
    })
}

// y' = y (1 - (a - b)^2 y^2)
fn square_difference_clock<F>(rx: &mut F, a: &str, b: &str, y: &str) -> Result<(), CrnError>
where
    F: FnMut(&[(&str, u8)], &[(&str, u8)]) -> Result<(), CrnError>,
{
    rx(&[(y, 1)], &[(y, 2)])?;
    rx(&[(a, 2), (y, 3)], &[(a, 2), (y, 2)])?;
    rx(&[(b, 2), (y, 3)], &[(b, 2), (y, 2)])?;
    rx(&[(a, 1), (b, 1), (y, 3)], &[(a, 1), (b, 1), (y, 5)])
}

fn check_arity(kind: GateKind, got: usize) -> Result<(), GateError> {
    if got != kind.arity() {
        return Err(GateError::Arity { kind: kind.name(), expected: kind.arity(), got });
    }
    Ok(())
}

fn check_inputs(kind: GateKind, values: &[f64]) -> Result<(), GateError> {
    check_arity(kind, values.len())?;
    if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(GateError::Domain(format!("{kind}: input limit {v} is not a non-negative real")));
    }
    match kind {
        GateKind::Inversion if values[0] == 0.0 => Err(GateError::Domain("inversion: input limit is 0".into())),
        GateKind::PartialRealInversion => match (values[0] > 0.0, values[1] > 0.0) {
            (true, false) | (false, true) => Ok(()),
            _ => Err(GateError::Domain(format!(
                "partial_real_inversion: exactly one rail must be positive, got ({}, {})",
                values[0], values[1]
            ))),
        },
        GateKind::MthRoot(m) if m < 2 => Err(GateError::BadRootIndex(m)),
        _ => Ok(()),
    }
}

/// The limit the gate's output converges to when its inputs converge to
/// `values`.
pub fn gate_target(kind: GateKind, values: &[f64]) -> Result<f64, GateError> {
    check_inputs(kind, values)?;
    let a = values[0];
    Ok(match kind {
        GateKind::Identification => a,
        GateKind::Inversion => 1.0 / a,
        GateKind::MthRoot(m) => a.powf(1.0 / f64::from(m)),
        GateKind::Addition => a + values[1],
        GateKind::Multiplication => a * values[1],
        GateKind::AbsoluteDifference => (a - values[1]).abs(),
        GateKind::RectifiedSubtraction => (a - values[1]).max(0.0),
        GateKind::PartialRealInversion => {
            if a > 0.0 {
                1.0 / a
            } else {
                0.0
            }
        }
    })
}

/// A lower bound on a rate of convergence. `f64::INFINITY` stands for an
/// input that never moves.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpeedBound {
    #[serde(serialize_with = "serialize_rate")]
    pub value: f64,
    pub case_tag: String,
}

pub(crate) fn serialize_rate<S: serde::Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    if v.is_infinite() {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*v)
    }
}

impl SpeedBound {
    pub fn new(value: f64, case_tag: impl Into<String>) -> Self {
        SpeedBound { value, case_tag: case_tag.into() }
    }

    pub fn unbounded() -> Self {
        SpeedBound::new(f64::INFINITY, "constant input")
    }
}

/// Lower bound on the output's rate of convergence given the inputs' rates
/// and limits.
pub fn gate_speed_bound(kind: GateKind, rates: &[f64], limits: &[f64]) -> Result<SpeedBound, GateError> {
    check_arity(kind, rates.len())?;
    check_inputs(kind, limits)?;
    if let Some(r) = rates.iter().find(|r| r.is_nan() || **r <= 0.0) {
        return Err(GateError::Domain(format!("{kind}: input rate {r} is not positive")));
    }
    let ra = rates[0];
    let slowest = rates.iter().copied().fold(f64::INFINITY, f64::min);
    let bound = match kind {
        GateKind::MthRoot(m) if limits[0] == 0.0 => {
            SpeedBound::new((ra / f64::from(m)).min(1.0), format!("root of zero: min(rho_a/{m}, 1)"))
        }
        GateKind::Multiplication => {
            let rb = rates[1];
            let (za, zb) = (limits[0] == 0.0, limits[1] == 0.0);
            match (za, zb) {
                (false, false) => SpeedBound::new(ra.min(rb).min(1.0), "a*!=0, b*!=0: min(rho_a, rho_b, 1)"),
                (true, false) => SpeedBound::new(ra.min(1.0), "a*=0, b*!=0: min(rho_a, 1)"),
                (false, true) => SpeedBound::new(rb.min(1.0), "a*!=0, b*=0: min(rho_b, 1)"),
                (true, true) => SpeedBound::new((ra + rb).min(1.0), "a*=0, b*=0: min(rho_a + rho_b, 1)"),
            }
        }
        _ if kind.arity() == 1 => SpeedBound::new(slowest.min(1.0), "min(rho_a, 1)"),
        _ => SpeedBound::new(slowest.min(1.0), "min(rho_a, rho_b, 1)"),
    };
    Ok(bound)
}

/// Mass-action ODE of each gate as it would be written by hand, over the
/// fragment's species order. Used to cross-check [`gate_network`].
pub fn displayed_ode(gate: &GateInstance) -> crate::crn::PolynomialField {
    use num_bigint::BigInt;
    use num_rational::BigRational;

    let names = gate.fragment.species_names();
    let d = names.len();
    let idx = |n: &str| names.iter().position(|s| s == n).expect("species in fragment");
    let q = |n: i64| BigRational::from_integer(BigInt::from(n));
    // monomial helper: product of (species, power)
    let mono = |c: i64, factors: &[(&str, u32)]| {
        let mut e = vec![0u32; d];
        for &(s, p) in factors {
            e[idx(s)] += p;
        }
        (q(c), e)
    };
    let mut terms: Vec<Vec<(BigRational, Vec<u32>)>> = vec![Vec::new(); d];
    let x = gate.output.as_str();
    let y = gate.intermediates.first().map(String::as_str).unwrap_or("");
    let a = gate.inputs[0].as_str();
    let b = gate.inputs.get(1).map(String::as_str).unwrap_or("");
    match gate.kind {
        // x' = a - x
        GateKind::Identification => terms[idx(x)] = vec![mono(1, &[(a, 1)]), mono(-1, &[(x, 1)])],
        // x' = x (1 - a x)
        GateKind::Inversion => terms[idx(x)] = vec![mono(1, &[(x, 1)]), mono(-1, &[(a, 1), (x, 2)])],
        // y' = y (1 - a y^m), x' = x (1 - y x)
        GateKind::MthRoot(m) => {
            terms[idx(y)] = vec![mono(1, &[(y, 1)]), mono(-1, &[(a, 1), (y, m + 1)])];
            terms[idx(x)] = vec![mono(1, &[(x, 1)]), mono(-1, &[(y, 1), (x, 2)])];
        }
        // x' = a + b - x
        GateKind::Addition => terms[idx(x)] = vec![mono(1, &[(a, 1)]), mono(1, &[(b, 1)]), mono(-1, &[(x, 1)])],
        // x' = a b - x
        GateKind::Multiplication => terms[idx(x)] = vec![mono(1, &[(a, 1), (b, 1)]), mono(-1, &[(x, 1)])],
        // y' = y - (a^2 - 2ab + b^2) y^3
        GateKind::AbsoluteDifference | GateKind::RectifiedSubtraction => {
            terms[idx(y)] = vec![
                mono(1, &[(y, 1)]),
                mono(-1, &[(a, 2), (y, 3)]),
                mono(2, &[(a, 1), (b, 1), (y, 3)]),
                mono(-1, &[(b, 2), (y, 3)]),
            ];
            terms[idx(x)] = if gate.kind == GateKind::AbsoluteDifference {
                // x' = x (1 - y x)
                vec![mono(1, &[(x, 1)]), mono(-1, &[(y, 1), (x, 2)])]
            } else {
                // x' = y x (a - b - x)
                vec![mono(1, &[(y, 1), (x, 1), (a, 1)]), mono(-1, &[(y, 1), (x, 1), (b, 1)]), mono(-1, &[(y, 1), (x, 2)])]
            };
        }
        // y' = y (1 - (ap + an) y), x' = y x (ap (1 - ap x) - an)
        GateKind::PartialRealInversion => {
            terms[idx(y)] = vec![mono(1, &[(y, 1)]), mono(-1, &[(a, 1), (y, 2)]), mono(-1, &[(b, 1), (y, 2)])];
            terms[idx(x)] = vec![
                mono(1, &[(y, 1), (x, 1), (a, 1)]),
                mono(-1, &[(y, 1), (x, 2), (a, 2)]),
                mono(-1, &[(y, 1), (x, 1), (b, 1)]),
            ];
        }
    }
    crate::crn::PolynomialField::from_terms(names, terms)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crn::derive_ode;
    use crate::text::print_network;

    fn build(kind: GateKind, inputs: &[&str]) -> GateInstance {
        gate_network(kind, inputs, &mut Namer::new()).unwrap()
    }

    #[test]
    fn addition_fragment() {
        let g = build(GateKind::Addition, &["A", "B"]);
        assert_eq!(
            print_network(&g.fragment),
            "species: A[input], B[input], X0[output]\nA -> A + X0 ; k=1\nB -> B + X0 ; k=1\nX0 -> 0 ; k=1\n"
        );
    }

    #[test]
    fn square_root_fragment() {
        let g = build(GateKind::MthRoot(2), &["A"]);
        assert_eq!(
            print_network(&g.fragment),
            "species: A[input], Y0[intermediate], X0[output]\n\
             Y0 -> 2Y0 ; k=1\nA + 3Y0 -> A + 2Y0 ; k=1\nX0 -> 2X0 ; k=1\nY0 + 2X0 -> Y0 + X0 ; k=1\n"
        );
    }

    #[test]
    fn rectified_subtraction_fragment() {
        let g = build(GateKind::RectifiedSubtraction, &["A", "B"]);
        let text = print_network(&g.fragment);
        assert_eq!(g.fragment.reactions().len(), 7);
        assert!(text.contains("A + B + 3Y0 -> A + B + 5Y0 ; k=1"));
        assert!(text.contains("B + Y0 + X0 -> B + Y0 ; k=1"));
    }

    #[test]
    fn every_fragment_matches_displayed_ode() {
        for kind in GateKind::catalogue().into_iter().chain([GateKind::MthRoot(3), GateKind::MthRoot(5)]) {
            let inputs: &[&str] = if kind.arity() == 1 { &["A"] } else { &["A", "B"] };
            let g = build(kind, inputs);
            assert_eq!(derive_ode(&g.fragment), displayed_ode(&g), "{kind}");
        }
    }

    #[test]
    fn arity_and_root_checks() {
        assert!(matches!(gate_network(GateKind::Addition, &["A"], &mut Namer::new()), Err(GateError::Arity { .. })));
        assert!(matches!(GateKind::root(1), Err(GateError::BadRootIndex(1))));
    }

    #[test]
    fn targets() {
        assert_eq!(gate_target(GateKind::Inversion, &[2.0]).unwrap(), 0.5);
        assert_eq!(gate_target(GateKind::RectifiedSubtraction, &[3.0, 5.0]).unwrap(), 0.0);
        assert_eq!(gate_target(GateKind::PartialRealInversion, &[0.0, 3.0]).unwrap(), 0.0);
        assert_eq!(gate_target(GateKind::MthRoot(2), &[0.0]).unwrap(), 0.0);
        assert!(gate_target(GateKind::Inversion, &[0.0]).is_err());
        assert!(gate_target(GateKind::PartialRealInversion, &[0.0, 0.0]).is_err());
        assert!(gate_target(GateKind::PartialRealInversion, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn speed_bounds() {
        let b = gate_speed_bound(GateKind::Multiplication, &[2.0, 0.5], &[1.0, 1.0]).unwrap();
        assert_eq!(b.value, 0.5);
        let b = gate_speed_bound(GateKind::MthRoot(3), &[1.2], &[0.0]).unwrap();
        assert!((b.value - 0.4).abs() < 1e-15);
        let inf = f64::INFINITY;
        assert_eq!(gate_speed_bound(GateKind::Addition, &[inf, inf], &[1.0, 2.0]).unwrap().value, 1.0);
        assert_eq!(gate_speed_bound(GateKind::Multiplication, &[0.25, 0.5], &[0.0, 0.0]).unwrap().value, 0.75);
        assert_eq!(gate_speed_bound(GateKind::Multiplication, &[0.25, 0.5], &[0.0, 3.0]).unwrap().value, 0.25);
        assert!(gate_speed_bound(GateKind::Inversion, &[1.0], &[0.0]).is_err());
    }

    #[test]
    fn positive_init_species() {
        let g = build(GateKind::AbsoluteDifference, &["A", "B"]);
        assert_eq!(g.positive_init_species(), vec!["Y0".to_string(), "X0".to_string()]);
        assert!(build(GateKind::Addition, &["A", "B"]).positive_init_species().is_empty());
    }
}
