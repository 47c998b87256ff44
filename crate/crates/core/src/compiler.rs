//! Lowering of expressions to gate circuits and flattening of circuits into
//! a single reaction network.
//!
//! In non-negative mode every value is one species. In real mode variables
//! are dual-rail wires `(p, n)` representing `p - n`; non-negative constants
//! stay single species and are paired with a pinned zero when they meet a
//! wire.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::crn::{derive_ode, CrnError, PolynomialField, ReactionNetwork, Role};
use crate::expr::{parse_expression, Expr, SyntaxError};
use crate::gates::{gate_network, gate_speed_bound, gate_target, GateError, GateInstance, GateKind, Namer, SpeedBound};
use crate::text::print_network;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CompileError {
    #[error(transparent)]
    Syntax(#[from] SyntaxError),
    #[error("mode error: {0}")]
    Mode(String),
    #[error(transparent)]
    Gate(#[from] GateError),
    #[error("domain error at gate {gate}: {message}")]
    Domain { gate: String, message: String },
    #[error("input error: {0}")]
    Input(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl From<CrnError> for CompileError {
    fn from(e: CrnError) -> Self {
        CompileError::Internal(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[serde(rename = "nonneg")]
    NonNegative,
    Real,
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "nonneg" => Ok(Mode::NonNegative),
            "real" => Ok(Mode::Real),
            other => Err(format!("unknown mode `{other}` (expected nonneg or real)")),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::NonNegative => "nonneg",
            Mode::Real => "real",
        })
    }
}

/// Two species whose difference is the represented real.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct DualRailWire {
    pub positive: String,
    pub negative: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
#[serde(untagged)]
pub enum Signal {
    Scalar(String),
    Wire(DualRailWire),
}

impl Signal {
    pub fn species(&self) -> Vec<&str> {
        match self {
            Signal::Scalar(s) => vec![s],
            Signal::Wire(w) => vec![&w.positive, &w.negative],
        }
    }
}

impl fmt::Display for Signal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Signal::Scalar(s) => write!(f, "{s}"),
            Signal::Wire(w) => write!(f, "({}, {})", w.positive, w.negative),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InputBinding {
    pub var: String,
    pub signal: Signal,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstantBinding {
    pub species: String,
    pub value: f64,
}

/// Gates in topological order plus the wiring of inputs, constants and the
/// output.
#[derive(Debug, Clone, PartialEq)]
pub struct Circuit {
    pub mode: Mode,
    pub gates: Vec<GateInstance>,
    pub inputs: Vec<InputBinding>,
    pub constants: Vec<ConstantBinding>,
    pub output: Signal,
}

/// A value supplied for a circuit variable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(untagged)]
pub enum InputValue {
    /// A number. In real mode it is split into its positive and negative parts.
    Value(f64),
    /// Explicit `(positive, negative)` rails, real mode only.
    Pair(f64, f64),
}

pub type Assignment = BTreeMap<String, InputValue>;

/// Canonical dual-rail encoding: `(a, 0)` for `a > 0`, else `(0, -a)`.
pub fn dual_rail(a: f64) -> (f64, f64) {
    if a > 0.0 {
        (a, 0.0)
    } else {
        (0.0, -a)
    }
}

/// Limit of the output signal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Target {
    Scalar(f64),
    Pair(f64, f64),
}

impl Target {
    /// The represented real (`p - n` for a pair).
    pub fn value(self) -> f64 {
        match self {
            Target::Scalar(v) => v,
            Target::Pair(p, n) => p - n,
        }
    }
}

fn is_reserved(name: &str) -> bool {
    let mut chars = name.chars();
    matches!(chars.next(), Some('X' | 'Y' | 'K')) && {
        let rest: String = chars.collect();
        !rest.is_empty() && rest.bytes().all(|b| b.is_ascii_digit())
    }
}

/// Incremental circuit construction. Used by the expression lowering and
/// directly for hand-wired circuits.
#[derive(Debug)]
pub struct CircuitBuilder {
    mode: Mode,
    namer: Namer,
    gates: Vec<GateInstance>,
    inputs: Vec<InputBinding>,
    constants: Vec<ConstantBinding>,
    used: HashSet<String>,
    const_index: HashMap<u64, String>,
    gate_outputs: HashSet<String>,
}

impl CircuitBuilder {
    pub fn new(mode: Mode) -> Self {
        CircuitBuilder {
            mode,
            namer: Namer::new(),
            gates: Vec::new(),
            inputs: Vec::new(),
            constants: Vec::new(),
            used: HashSet::new(),
            const_index: HashMap::new(),
            gate_outputs: HashSet::new(),
        }
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    fn input_base(&self, var: &str) -> String {
        let upper = var.to_uppercase();
        let taken = |n: &str| self.used.contains(n) || self.used.contains(&format!("{n}_p"));
        if !is_reserved(&upper) && !taken(&upper) {
            upper
        } else {
            let mut name = format!("V_{var}");
            while taken(&name) {
                name.push('_');
            }
            name
        }
    }

    fn binding(&self, var: &str) -> Option<&Signal> {
        self.inputs.iter().find(|b| b.var == var).map(|b| &b.signal)
    }

    pub fn scalar_input(&mut self, var: &str) -> Result<String, CompileError> {
        match self.binding(var) {
            Some(Signal::Scalar(s)) => return Ok(s.clone()),
            Some(Signal::Wire(_)) => return Err(CompileError::Internal(format!("`{var}` already bound as a wire"))),
            None => {}
        }
        let name = self.input_base(var);
        self.used.insert(name.clone());
        self.inputs.push(InputBinding { var: var.to_string(), signal: Signal::Scalar(name.clone()) });
        Ok(name)
    }

    pub fn wire_input(&mut self, var: &str) -> Result<DualRailWire, CompileError> {
        match self.binding(var) {
            Some(Signal::Wire(w)) => return Ok(w.clone()),
            Some(Signal::Scalar(_)) => return Err(CompileError::Internal(format!("`{var}` already bound as a scalar"))),
            None => {}
        }
        let base = self.input_base(var);
        let wire = DualRailWire { positive: format!("{base}_p"), negative: format!("{base}_n") };
        self.used.insert(base);
        self.used.insert(wire.positive.clone());
        self.used.insert(wire.negative.clone());
        self.inputs.push(InputBinding { var: var.to_string(), signal: Signal::Wire(wire.clone()) });
        Ok(wire)
    }

    /// A species pinned at `value`; equal constants share one species.
    pub fn constant(&mut self, value: f64) -> Result<String, CompileError> {
        if !(value.is_finite() && value >= 0.0) {
            return Err(CompileError::Mode(format!("constant {value} is not a non-negative real")));
        }
        let value = if value == 0.0 { 0.0 } else { value };
        if let Some(s) = self.const_index.get(&value.to_bits()) {
            return Ok(s.clone());
        }
        let name = format!("K{}", self.constants.len());
        self.used.insert(name.clone());
        self.const_index.insert(value.to_bits(), name.clone());
        self.constants.push(ConstantBinding { species: name.clone(), value });
        Ok(name)
    }

    pub fn gate(&mut self, kind: GateKind, inputs: &[&str]) -> Result<String, CompileError> {
        let g = gate_network(kind, inputs, &mut self.namer)?;
        for s in g.owned_species() {
            if !self.used.insert(s.clone()) {
                return Err(CompileError::Internal(format!("species name collision on `{s}`")));
            }
        }
        let out = g.output.clone();
        self.gate_outputs.insert(out.clone());
        self.gates.push(g);
        Ok(out)
    }

    /// `a / b` as inversion of `b` followed by multiplication.
    pub fn divide(&mut self, a: &str, b: &str) -> Result<String, CompileError> {
        let z = self.gate(GateKind::Inversion, &[b])?;
        self.gate(GateKind::Multiplication, &[a, &z])
    }

    /// `max(a, b) = ((a + |a - b|) + b) * 1/2`.
    pub fn maximum(&mut self, a: &str, b: &str) -> Result<String, CompileError> {
        let d = self.gate(GateKind::AbsoluteDifference, &[a, b])?;
        let s1 = self.gate(GateKind::Addition, &[a, &d])?;
        let s2 = self.gate(GateKind::Addition, &[&s1, b])?;
        let half = self.constant(0.5)?;
        self.gate(GateKind::Multiplication, &[&s2, &half])
    }

    /// `a - b` of two non-negative species as `(a ∸ b, b ∸ a)`.
    pub fn subtract(&mut self, a: &str, b: &str) -> Result<DualRailWire, CompileError> {
        let p = self.gate(GateKind::RectifiedSubtraction, &[a, b])?;
        let n = self.gate(GateKind::RectifiedSubtraction, &[b, a])?;
        Ok(DualRailWire { positive: p, negative: n })
    }

    /// Brings a wire to canonical form with two rectified subtractions.
    pub fn normalize(&mut self, w: &DualRailWire) -> Result<DualRailWire, CompileError> {
        self.subtract(&w.positive, &w.negative)
    }

    pub fn promote(&mut self, scalar: &str) -> Result<DualRailWire, CompileError> {
        let zero = self.constant(0.0)?;
        Ok(DualRailWire { positive: scalar.to_string(), negative: zero })
    }

    pub fn real_add(&mut self, a: &DualRailWire, b: &DualRailWire) -> Result<DualRailWire, CompileError> {
        let p = self.gate(GateKind::Addition, &[&a.positive, &b.positive])?;
        let n = self.gate(GateKind::Addition, &[&a.negative, &b.negative])?;
        self.normalize(&DualRailWire { positive: p, negative: n })
    }

    /// `(a_p + b_n, a_n + b_p)` then normalization.
    pub fn real_sub(&mut self, a: &DualRailWire, b: &DualRailWire) -> Result<DualRailWire, CompileError> {
        let p = self.gate(GateKind::Addition, &[&a.positive, &b.negative])?;
        let n = self.gate(GateKind::Addition, &[&a.negative, &b.positive])?;
        self.normalize(&DualRailWire { positive: p, negative: n })
    }

    /// Swaps the rails through two identifications.
    pub fn real_neg(&mut self, a: &DualRailWire) -> Result<DualRailWire, CompileError> {
        let p = self.gate(GateKind::Identification, &[&a.negative])?;
        let n = self.gate(GateKind::Identification, &[&a.positive])?;
        Ok(DualRailWire { positive: p, negative: n })
    }

    /// `(a_p b_p + a_n b_n, a_p b_n + a_n b_p)`; canonical inputs give a
    /// canonical output, so no normalization follows.
    pub fn real_mul(&mut self, a: &DualRailWire, b: &DualRailWire) -> Result<DualRailWire, CompileError> {
        let pp = self.gate(GateKind::Multiplication, &[&a.positive, &b.positive])?;
        let nn = self.gate(GateKind::Multiplication, &[&a.negative, &b.negative])?;
        let pn = self.gate(GateKind::Multiplication, &[&a.positive, &b.negative])?;
        let np = self.gate(GateKind::Multiplication, &[&a.negative, &b.positive])?;
        let p = self.gate(GateKind::Addition, &[&pp, &nn])?;
        let n = self.gate(GateKind::Addition, &[&pn, &np])?;
        Ok(DualRailWire { positive: p, negative: n })
    }

    /// Two partial real inversions with the rails crossed.
    pub fn real_inv(&mut self, a: &DualRailWire) -> Result<DualRailWire, CompileError> {
        let p = self.gate(GateKind::PartialRealInversion, &[&a.positive, &a.negative])?;
        let n = self.gate(GateKind::PartialRealInversion, &[&a.negative, &a.positive])?;
        Ok(DualRailWire { positive: p, negative: n })
    }

    pub fn real_div(&mut self, a: &DualRailWire, b: &DualRailWire) -> Result<DualRailWire, CompileError> {
        let inv = self.real_inv(b)?;
        self.real_mul(a, &inv)
    }

    /// Completes the circuit. An output that is not produced by a gate is
    /// routed through identification gates so it gets a dedicated species.
    pub fn finish(mut self, output: Signal) -> Result<Circuit, CompileError> {
        let output = match output {
            Signal::Scalar(s) if !self.gate_outputs.contains(&s) => Signal::Scalar(self.gate(GateKind::Identification, &[&s])?),
            Signal::Wire(w) if !(self.gate_outputs.contains(&w.positive) && self.gate_outputs.contains(&w.negative)) => {
                let p = self.gate(GateKind::Identification, &[&w.positive])?;
                let n = self.gate(GateKind::Identification, &[&w.negative])?;
                Signal::Wire(DualRailWire { positive: p, negative: n })
            }
            other => other,
        };
        Ok(Circuit { mode: self.mode, gates: self.gates, inputs: self.inputs, constants: self.constants, output })
    }
}

#[derive(Debug, Clone)]
enum Value {
    Scalar(String),
    Wire(DualRailWire),
}

struct Lowering {
    b: CircuitBuilder,
    memo: HashMap<String, Value>,
}

impl Lowering {
    fn wire(&mut self, v: Value) -> Result<DualRailWire, CompileError> {
        match v {
            Value::Wire(w) => Ok(w),
            Value::Scalar(s) => self.b.promote(&s),
        }
    }

    fn lower(&mut self, e: &Expr) -> Result<Value, CompileError> {
        let key = e.to_string();
        if let Some(v) = self.memo.get(&key) {
            return Ok(v.clone());
        }
        let v = self.lower_uncached(e)?;
        self.memo.insert(key, v.clone());
        Ok(v)
    }

    fn lower_uncached(&mut self, e: &Expr) -> Result<Value, CompileError> {
        let mode = self.b.mode;
        match e {
            Expr::Const(c) if *c >= 0.0 => Ok(Value::Scalar(self.b.constant(*c)?)),
            Expr::Const(c) => match mode {
                Mode::Real => {
                    let zero = self.b.constant(0.0)?;
                    let mag = self.b.constant(-c)?;
                    Ok(Value::Wire(DualRailWire { positive: zero, negative: mag }))
                }
                Mode::NonNegative => Err(CompileError::Mode(format!("negative constant {c} in non-negative mode"))),
            },
            Expr::Var(v) => match mode {
                Mode::NonNegative => Ok(Value::Scalar(self.b.scalar_input(v)?)),
                Mode::Real => Ok(Value::Wire(self.b.wire_input(v)?)),
            },
            Expr::Add(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) | Expr::Sub(a, b) => {
                let (va, vb) = (self.lower(a)?, self.lower(b)?);
                match (va, vb) {
                    (Value::Scalar(x), Value::Scalar(y)) => {
                        let out = match e {
                            Expr::Add(..) => self.b.gate(GateKind::Addition, &[&x, &y])?,
                            Expr::Mul(..) => self.b.gate(GateKind::Multiplication, &[&x, &y])?,
                            Expr::Div(..) => self.b.divide(&x, &y)?,
                            _ => match mode {
                                Mode::Real => return Ok(Value::Wire(self.b.subtract(&x, &y)?)),
                                Mode::NonNegative => {
                                    return Err(CompileError::Mode(
                                        "subtraction produces a real; use --mode real, abs(a - b) or rsub(a, b)".into(),
                                    ))
                                }
                            },
                        };
                        Ok(Value::Scalar(out))
                    }
                    (va, vb) => {
                        let (wa, wb) = (self.wire(va)?, self.wire(vb)?);
                        let w = match e {
                            Expr::Add(..) => self.b.real_add(&wa, &wb)?,
                            Expr::Mul(..) => self.b.real_mul(&wa, &wb)?,
                            Expr::Div(..) => self.b.real_div(&wa, &wb)?,
                            _ => self.b.real_sub(&wa, &wb)?,
                        };
                        Ok(Value::Wire(w))
                    }
                }
            }
            Expr::Neg(a) => {
                if mode == Mode::NonNegative {
                    return Err(CompileError::Mode("negation produces a real; use --mode real".into()));
                }
                let va = self.lower(a)?;
                let w = self.wire(va)?;
                Ok(Value::Wire(self.b.real_neg(&w)?))
            }
            Expr::Inv(a) => match self.lower(a)? {
                Value::Scalar(x) => Ok(Value::Scalar(self.b.gate(GateKind::Inversion, &[&x])?)),
                Value::Wire(w) => Ok(Value::Wire(self.b.real_inv(&w)?)),
            },
            Expr::Root(m, a) => {
                let kind = GateKind::root(*m)?;
                let x = self.scalar_operand(a, "root")?;
                Ok(Value::Scalar(self.b.gate(kind, &[&x])?))
            }
            Expr::AbsDiff(a, b) | Expr::RectSub(a, b) | Expr::Max(a, b) => {
                let what = match e {
                    Expr::AbsDiff(..) => "abs",
                    Expr::RectSub(..) => "rsub",
                    _ => "max",
                };
                let x = self.scalar_operand(a, what)?;
                let y = self.scalar_operand(b, what)?;
                let out = match e {
                    Expr::AbsDiff(..) => self.b.gate(GateKind::AbsoluteDifference, &[&x, &y])?,
                    Expr::RectSub(..) => self.b.gate(GateKind::RectifiedSubtraction, &[&x, &y])?,
                    _ => self.b.maximum(&x, &y)?,
                };
                Ok(Value::Scalar(out))
            }
        }
    }

    fn scalar_operand(&mut self, e: &Expr, op: &str) -> Result<String, CompileError> {
        match self.lower(e)? {
            Value::Scalar(s) => Ok(s),
            Value::Wire(_) => Err(CompileError::Mode(format!(
                "{op} needs non-negative operands, but `{e}` is a dual-rail real"
            ))),
        }
    }
}

/// Lowers `e` to a gate circuit.
pub fn lower_to_circuit(e: &Expr, mode: Mode) -> Result<Circuit, CompileError> {
    let mut l = Lowering { b: CircuitBuilder::new(mode), memo: HashMap::new() };
    let out = match l.lower(e)? {
        Value::Scalar(s) => Signal::Scalar(s),
        Value::Wire(w) => Signal::Wire(w),
    };
    l.b.finish(out)
}

impl Circuit {
    /// Species values of every input and constant under `asg`.
    pub fn input_values(&self, asg: &Assignment) -> Result<Vec<(String, f64)>, CompileError> {
        for var in asg.keys() {
            if !self.inputs.iter().any(|b| &b.var == var) {
                return Err(CompileError::Input(format!("`{var}` is not a variable of the expression")));
            }
        }
        let mut out = Vec::new();
        for b in &self.inputs {
            let v = asg.get(&b.var).ok_or_else(|| CompileError::Input(format!("no value for `{}`", b.var)))?;
            let check = |x: f64| {
                if x.is_finite() && x >= 0.0 {
                    Ok(x)
                } else {
                    Err(CompileError::Input(format!("`{}`: concentration {x} must be a non-negative real", b.var)))
                }
            };
            match (&b.signal, v) {
                (Signal::Scalar(s), InputValue::Value(x)) => out.push((s.clone(), check(*x)?)),
                (Signal::Scalar(_), InputValue::Pair(..)) => {
                    return Err(CompileError::Input(format!("`{}` is non-negative; dual-rail pairs need --mode real", b.var)))
                }
                (Signal::Wire(w), InputValue::Value(x)) => {
                    if !x.is_finite() {
                        return Err(CompileError::Input(format!("`{}`: {x} is not finite", b.var)));
                    }
                    let (p, n) = dual_rail(*x);
                    out.push((w.positive.clone(), p));
                    out.push((w.negative.clone(), n));
                }
                (Signal::Wire(w), InputValue::Pair(p, n)) => {
                    out.push((w.positive.clone(), check(*p)?));
                    out.push((w.negative.clone(), check(*n)?));
                }
            }
        }
        out.extend(self.constants.iter().map(|c| (c.species.clone(), c.value)));
        Ok(out)
    }

    /// Limit of every species, by composing gate targets.
    pub fn limits(&self, asg: &Assignment) -> Result<HashMap<String, f64>, CompileError> {
        let mut lim: HashMap<String, f64> = self.input_values(asg)?.into_iter().collect();
        for g in &self.gates {
            let vals = self.gate_input_values(g, &lim)?;
            let t = gate_target(g.kind, &vals).map_err(|e| domain(g, e))?;
            lim.insert(g.output.clone(), t);
        }
        Ok(lim)
    }

    fn gate_input_values(&self, g: &GateInstance, map: &HashMap<String, f64>) -> Result<Vec<f64>, CompileError> {
        g.inputs
            .iter()
            .map(|s| {
                map.get(s)
                    .copied()
                    .ok_or_else(|| CompileError::Internal(format!("gate {} reads `{s}` before it is defined", g.output)))
            })
            .collect()
    }

    /// Exact limit of the output signal.
    pub fn target(&self, asg: &Assignment) -> Result<Target, CompileError> {
        let lim = self.limits(asg)?;
        Ok(match &self.output {
            Signal::Scalar(s) => Target::Scalar(lim[s]),
            Signal::Wire(w) => Target::Pair(lim[&w.positive], lim[&w.negative]),
        })
    }

    /// Speed bound of every gate output, propagated in list order from
    /// inputs that never move.
    pub fn gate_bounds(&self, asg: &Assignment) -> Result<Vec<SpeedBound>, CompileError> {
        let lim = self.limits(asg)?;
        let mut rates: HashMap<String, f64> =
            self.input_values(asg)?.into_iter().map(|(s, _)| (s, f64::INFINITY)).collect();
        let mut out = Vec::with_capacity(self.gates.len());
        for g in &self.gates {
            let r = self.gate_input_values(g, &rates)?;
            let l = self.gate_input_values(g, &lim)?;
            let b = gate_speed_bound(g.kind, &r, &l).map_err(|e| domain(g, e))?;
            rates.insert(g.output.clone(), b.value);
            out.push(b);
        }
        Ok(out)
    }

    /// Predicted lower bound on the output's speed.
    pub fn predict_speed(&self, asg: &Assignment) -> Result<SpeedBound, CompileError> {
        let bounds = self.gate_bounds(asg)?;
        let by_output: HashMap<&str, (&GateInstance, &SpeedBound)> =
            self.gates.iter().zip(&bounds).map(|(g, b)| (g.output.as_str(), (g, b))).collect();
        let value = self
            .output
            .species()
            .iter()
            .map(|s| by_output.get(s).map(|(_, b)| b.value).unwrap_or(f64::INFINITY))
            .fold(f64::INFINITY, f64::min);
        let roots: Vec<String> = self
            .gates
            .iter()
            .zip(&bounds)
            .filter(|(_, b)| b.case_tag.starts_with("root of zero"))
            .map(|(g, _)| format!("{} ({})", g.output, g.kind))
            .collect();
        let tag = if roots.is_empty() {
            "no root of zero: min over gates of 1".to_string()
        } else {
            format!("root of zero at {}", roots.join(", "))
        };
        Ok(SpeedBound::new(value, tag))
    }
}

fn domain(g: &GateInstance, e: GateError) -> CompileError {
    match e {
        GateError::Domain(message) => CompileError::Domain { gate: format!("{} ({})", g.output, g.kind), message },
        other => CompileError::Gate(other),
    }
}

/// A circuit flattened into one network, ready to simulate.
#[derive(Debug, Clone)]
pub struct CompiledProgram {
    pub network: ReactionNetwork,
    pub circuit: Circuit,
    pub required_positive_inits: Vec<String>,
    field: PolynomialField,
}

/// Takes the union of all gate fragments.
pub fn flatten(c: &Circuit) -> Result<CompiledProgram, CompileError> {
    let mut net = ReactionNetwork::new();
    for b in &c.inputs {
        for s in b.signal.species() {
            net.declare(s, Role::Input)?;
        }
    }
    for k in &c.constants {
        net.declare(&k.species, Role::Input)?;
    }
    let mut required = Vec::new();
    for g in &c.gates {
        for s in g.owned_species() {
            if net.index_of(s).is_some() {
                return Err(CompileError::Internal(format!("species `{s}` defined twice")));
            }
        }
        net.merge(&g.fragment)?;
        for s in g.owned_species() {
            net.set_role(s, Role::Intermediate)?;
        }
        required.extend(g.positive_init_species());
    }
    for s in c.output.species() {
        net.set_role(s, Role::Output)?;
    }
    let field = derive_ode(&net);
    Ok(CompiledProgram { network: net, circuit: c.clone(), required_positive_inits: required, field })
}

/// Parse, lower and flatten in one step.
pub fn compile(text: &str, mode: Mode) -> Result<CompiledProgram, CompileError> {
    let e = parse_expression(text)?;
    flatten(&lower_to_circuit(&e, mode)?)
}

impl CompiledProgram {
    pub fn field(&self) -> &PolynomialField {
        &self.field
    }

    pub fn target(&self, asg: &Assignment) -> Result<Target, CompileError> {
        self.circuit.target(asg)
    }

    pub fn predicted_bound(&self, asg: &Assignment) -> Result<SpeedBound, CompileError> {
        self.circuit.predict_speed(asg)
    }

    /// Initial concentrations in network species order: assigned values on
    /// inputs, `positive_init` on species that must start positive, 0 on the
    /// rest.
    pub fn initial_state(&self, asg: &Assignment, positive_init: f64) -> Result<Vec<f64>, CompileError> {
        let mut x = vec![0.0; self.network.species().len()];
        for (s, v) in self.circuit.input_values(asg)? {
            let i = self.network.index_of(&s).ok_or_else(|| CompileError::Internal(format!("no species `{s}`")))?;
            x[i] = v;
        }
        for s in &self.required_positive_inits {
            if let Some(i) = self.network.index_of(s) {
                x[i] = positive_init;
            }
        }
        Ok(x)
    }

    /// Bindings header followed by the network in canonical text form.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for b in &self.circuit.inputs {
            writeln!(out, "input {} -> {}", b.var, b.signal).unwrap();
        }
        for k in &self.circuit.constants {
            writeln!(out, "const {} = {}", k.species, k.value).unwrap();
        }
        writeln!(out, "output -> {}", self.circuit.output).unwrap();
        writeln!(out, "init+ : {}", self.required_positive_inits.join(", ")).unwrap();
        out.push_str(&print_network(&self.network));
        out
    }
}
