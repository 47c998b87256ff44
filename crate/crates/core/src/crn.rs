//! Species, complexes, reactions and networks, plus the mass-action
//! polynomial vector field they induce.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors raised while building or querying a network.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum CrnError {
    #[error("invalid species name `{0}`")]
    InvalidName(String),
    #[error("species `{0}` declared twice")]
    DuplicateSpecies(String),
    #[error("unknown species `{0}`")]
    UnknownSpecies(String),
    #[error("rate constant must be positive and finite, got {0}")]
    BadRate(f64),
    #[error("reaction has identical reactant and product complexes")]
    NullReaction,
    #[error("stoichiometric coefficient {0} exceeds 255")]
    CoefficientTooLarge(u64),
    #[error("state is missing species `{0}`")]
    MissingState(String),
}

/// How a species participates in a computation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Input,
    Output,
    Intermediate,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Input => "input",
            Role::Output => "output",
            Role::Intermediate => "intermediate",
        }
    }
}

impl std::str::FromStr for Role {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        match s {
            "input" => Ok(Role::Input),
            "output" => Ok(Role::Output),
            "intermediate" => Ok(Role::Intermediate),
            _ => Err(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Species {
    pub name: String,
    pub role: Role,
}

/// `true` if `name` matches `[A-Za-z][A-Za-z0-9_]*`.
pub fn is_valid_name(name: &str) -> bool {
    let mut chars = name.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// A non-negative integer combination of species, keyed by species index.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Complex {
    coeffs: BTreeMap<usize, u8>,
}

impl Complex {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds `coeff` copies of species `idx`; coefficients accumulate.
    pub fn add(&mut self, idx: usize, coeff: u8) -> Result<(), CrnError> {
        if coeff == 0 {
            return Ok(());
        }
        let entry = self.coeffs.entry(idx).or_insert(0);
        let sum = u64::from(*entry) + u64::from(coeff);
        *entry = u8::try_from(sum).map_err(|_| CrnError::CoefficientTooLarge(sum))?;
        Ok(())
    }

    pub fn coeff(&self, idx: usize) -> u8 {
        self.coeffs.get(&idx).copied().unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, u8)> + '_ {
        self.coeffs.iter().map(|(&i, &c)| (i, c))
    }

    fn remap(&self, map: &[usize]) -> Complex {
        Complex {
            coeffs: self.coeffs.iter().map(|(&i, &c)| (map[i], c)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reaction {
    pub reactant: Complex,
    pub product: Complex,
    pub rate: f64,
}

/// A list of species in declaration order and the reactions among them.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReactionNetwork {
    species: Vec<Species>,
    reactions: Vec<Reaction>,
    index: HashMap<String, usize>,
}

impl ReactionNetwork {
    pub fn new() -> Self {
        Self::default()
    }

    /// Declares a new species. Fails on an invalid or duplicate name.
    pub fn declare(&mut self, name: &str, role: Role) -> Result<usize, CrnError> {
        if !is_valid_name(name) {
            return Err(CrnError::InvalidName(name.to_string()));
        }
        if self.index.contains_key(name) {
            return Err(CrnError::DuplicateSpecies(name.to_string()));
        }
        let idx = self.species.len();
        self.species.push(Species { name: name.to_string(), role });
        self.index.insert(name.to_string(), idx);
        Ok(idx)
    }

    /// Returns the index of `name`, declaring it with `role` on first use.
    pub fn ensure(&mut self, name: &str, role: Role) -> Result<usize, CrnError> {
        match self.index.get(name) {
            Some(&i) => Ok(i),
            None => self.declare(name, role),
        }
    }

    pub fn set_role(&mut self, name: &str, role: Role) -> Result<(), CrnError> {
        let idx = self.index_of(name).ok_or_else(|| CrnError::UnknownSpecies(name.to_string()))?;
        self.species[idx].role = role;
        Ok(())
    }

    pub fn add_reaction(&mut self, reactant: Complex, product: Complex, rate: f64) -> Result<(), CrnError> {
        if !(rate.is_finite() && rate > 0.0) {
            return Err(CrnError::BadRate(rate));
        }
        if reactant == product {
            return Err(CrnError::NullReaction);
        }
        for (i, _) in reactant.iter().chain(product.iter()) {
            if i >= self.species.len() {
                return Err(CrnError::UnknownSpecies(format!("#{i}")));
            }
        }
        self.reactions.push(Reaction { reactant, product, rate });
        Ok(())
    }

    /// Adds a reaction given as `(name, coefficient)` lists. Unknown species
    /// are declared with `default_role`.
    pub fn add_named(
        &mut self,
        reactant: &[(&str, u8)],
        product: &[(&str, u8)],
        rate: f64,
        default_role: Role,
    ) -> Result<(), CrnError> {
        let mut lhs = Complex::new();
        for &(name, c) in reactant {
            let i = self.ensure(name, default_role)?;
            lhs.add(i, c)?;
        }
        let mut rhs = Complex::new();
        for &(name, c) in product {
            let i = self.ensure(name, default_role)?;
            rhs.add(i, c)?;
        }
        self.add_reaction(lhs, rhs, rate)
    }

    pub fn species(&self) -> &[Species] {
        &self.species
    }

    pub fn reactions(&self) -> &[Reaction] {
        &self.reactions
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn species_names(&self) -> Vec<String> {
        self.species.iter().map(|s| s.name.clone()).collect()
    }

    /// Copies in every species and reaction of `other`. Species shared by
    /// name are merged; the existing role wins.
    pub fn merge(&mut self, other: &ReactionNetwork) -> Result<(), CrnError> {
        let map = other
            .species
            .iter()
            .map(|s| self.ensure(&s.name, s.role))
            .collect::<Result<Vec<_>, _>>()?;
        for r in &other.reactions {
            self.add_reaction(r.reactant.remap(&map), r.product.remap(&map), r.rate)?;
        }
        Ok(())
    }

    /// The same network with every rate constant multiplied by `sigma`.
    pub fn scaled(&self, sigma: f64) -> Result<ReactionNetwork, CrnError> {
        let mut out = self.clone();
        for r in &mut out.reactions {
            r.rate *= sigma;
            if !(r.rate.is_finite() && r.rate > 0.0) {
                return Err(CrnError::BadRate(r.rate));
            }
        }
        Ok(out)
    }
}

/// One term `coeff * Π x_j^{e_j}` of a polynomial over the network species.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Monomial {
    pub coeff: BigRational,
    pub exponents: Vec<u32>,
}

impl Monomial {
    pub fn degree_in(&self, idx: usize) -> u32 {
        self.exponents.get(idx).copied().unwrap_or(0)
    }
}

/// Per-species polynomial right-hand side in canonical form: like monomials
/// combined, zero terms dropped, monomials sorted lexicographically by
/// exponent vector over the species order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolynomialField {
    species: Vec<String>,
    components: Vec<Vec<Monomial>>,
}

impl PolynomialField {
    /// Builds a canonical field from arbitrary (possibly repeated or zero)
    /// terms per species.
    pub fn from_terms(species: Vec<String>, terms: Vec<Vec<(BigRational, Vec<u32>)>>) -> Self {
        let d = species.len();
        let components = terms
            .into_iter()
            .map(|list| {
                let mut acc: BTreeMap<Vec<u32>, BigRational> = BTreeMap::new();
                for (c, mut e) in list {
                    e.resize(d, 0);
                    *acc.entry(e).or_insert_with(BigRational::zero) += c;
                }
                acc.into_iter()
                    .filter(|(_, c)| !c.is_zero())
                    .map(|(exponents, coeff)| Monomial { coeff, exponents })
                    .collect()
            })
            .collect();
        PolynomialField { species, components }
    }

    pub fn species(&self) -> &[String] {
        &self.species
    }

    pub fn component(&self, idx: usize) -> &[Monomial] {
        &self.components[idx]
    }

    pub fn component_of(&self, name: &str) -> Option<&[Monomial]> {
        self.species.iter().position(|s| s == name).map(|i| self.component(i))
    }

    pub fn dim(&self) -> usize {
        self.species.len()
    }

    /// Coefficient-wise sum of two fields over the same species list.
    pub fn add(&self, other: &PolynomialField) -> Option<PolynomialField> {
        if self.species != other.species {
            return None;
        }
        let terms = self
            .components
            .iter()
            .zip(&other.components)
            .map(|(a, b)| {
                a.iter()
                    .chain(b.iter())
                    .map(|m| (m.coeff.clone(), m.exponents.clone()))
                    .collect()
            })
            .collect();
        Some(PolynomialField::from_terms(self.species.clone(), terms))
    }

    /// Floating-point evaluator for repeated evaluation during integration.
    pub fn compile(&self) -> CompiledField {
        let components = self
            .components
            .iter()
            .map(|monos| {
                monos
                    .iter()
                    .map(|m| CompiledMonomial {
                        coeff: m.coeff.to_f64().unwrap_or(f64::NAN),
                        factors: m
                            .exponents
                            .iter()
                            .enumerate()
                            .filter(|(_, &e)| e > 0)
                            .map(|(j, &e)| (j, e as i32))
                            .collect(),
                    })
                    .collect()
            })
            .collect();
        CompiledField { components }
    }
}

impl fmt::Display for PolynomialField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, name) in self.species.iter().enumerate() {
            write!(f, "d{name}/dt = ")?;
            let monos = &self.components[i];
            if monos.is_empty() {
                write!(f, "0")?;
            }
            for (k, m) in monos.iter().enumerate() {
                let neg = m.coeff.is_negative();
                let mag = m.coeff.abs();
                match (k, neg) {
                    (0, true) => write!(f, "-")?,
                    (0, false) => {}
                    (_, true) => write!(f, " - ")?,
                    (_, false) => write!(f, " + ")?,
                }
                let vars: Vec<String> = m
                    .exponents
                    .iter()
                    .enumerate()
                    .filter(|(_, &e)| e > 0)
                    .map(|(j, &e)| {
                        if e == 1 {
                            self.species[j].clone()
                        } else {
                            format!("{}^{}", self.species[j], e)
                        }
                    })
                    .collect();
                let one = mag == BigRational::from_integer(BigInt::from(1));
                if vars.is_empty() {
                    write!(f, "{mag}")?;
                } else if one {
                    write!(f, "{}", vars.join("*"))?;
                } else {
                    write!(f, "{mag}*{}", vars.join("*"))?;
                }
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct CompiledMonomial {
    coeff: f64,
    factors: Vec<(usize, i32)>,
}

/// Floating-point form of a [`PolynomialField`].
#[derive(Debug, Clone)]
pub struct CompiledField {
    components: Vec<Vec<CompiledMonomial>>,
}

impl CompiledField {
    pub fn dim(&self) -> usize {
        self.components.len()
    }

    /// Writes `f(x)` into `out`. `0^0` evaluates to 1.
    ///
    /// Terms are summed with Neumaier compensation: clock species such as
    /// `dy/dt = y - a^2 y^3 - b^2 y^3 + 2ab y^3` cancel exactly at `a = b`,
    /// and naive summation would drop the small `y` once `y^3` dominates.
    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        for (o, monos) in out.iter_mut().zip(&self.components) {
            let (mut sum, mut comp) = (0.0f64, 0.0f64);
            for m in monos {
                let mut term = m.coeff;
                for &(j, e) in &m.factors {
                    term *= if e == 1 { x[j] } else { x[j].powi(e) };
                }
                let t = sum + term;
                comp += if sum.abs() >= term.abs() { (sum - t) + term } else { (term - t) + sum };
                sum = t;
            }
            *o = sum + comp;
        }
    }

    /// `true` if component `idx` is the zero polynomial.
    pub fn is_zero_component(&self, idx: usize) -> bool {
        self.components[idx].is_empty()
    }
}

fn rational_from_f64(x: f64) -> BigRational {
    BigRational::from_float(x).expect("rate constants are finite")
}

/// Mass-action ODE of `net`: for each species `i`,
/// `f_i(x) = Σ k (ν'_i − ν_i) Π x_j^{ν_j}` with exact rational coefficients.
pub fn derive_ode(net: &ReactionNetwork) -> PolynomialField {
    let d = net.species.len();
    let mut terms: Vec<Vec<(BigRational, Vec<u32>)>> = vec![Vec::new(); d];
    for r in &net.reactions {
        let mut exps = vec![0u32; d];
        for (j, c) in r.reactant.iter() {
            exps[j] = u32::from(c);
        }
        let k = rational_from_f64(r.rate);
        for (i, slot) in terms.iter_mut().enumerate() {
            let delta = i64::from(r.product.coeff(i)) - i64::from(r.reactant.coeff(i));
            if delta != 0 {
                slot.push((&k * BigRational::from_integer(BigInt::from(delta)), exps.clone()));
            }
        }
    }
    PolynomialField::from_terms(net.species_names(), terms)
}

/// A negative monomial in `f_i` that does not contain `x_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub species: String,
    pub monomial: Monomial,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Admissibility {
    pub violations: Vec<Violation>,
}

impl Admissibility {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks that every negative monomial of `f_i` contains `x_i`, the
/// condition under which a polynomial field is realizable by mass action.
pub fn check_admissible(field: &PolynomialField) -> Admissibility {
    let violations = field
        .components
        .iter()
        .enumerate()
        .flat_map(|(i, monos)| {
            monos
                .iter()
                .filter(move |m| m.coeff.is_negative() && m.degree_in(i) == 0)
                .map(move |m| Violation { species: field.species[i].clone(), monomial: m.clone() })
        })
        .collect();
    Admissibility { violations }
}

/// Evaluates the field at a named state.
pub fn evaluate_field(
    field: &PolynomialField,
    state: &HashMap<String, f64>,
) -> Result<HashMap<String, f64>, CrnError> {
    let x = field
        .species
        .iter()
        .map(|s| state.get(s).copied().ok_or_else(|| CrnError::MissingState(s.clone())))
        .collect::<Result<Vec<_>, _>>()?;
    let mut out = vec![0.0; x.len()];
    field.compile().eval_into(&x, &mut out);
    Ok(field.species.iter().cloned().zip(out).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(n: i64) -> BigRational {
        BigRational::from_integer(BigInt::from(n))
    }

    fn net(spec: &[(&[(&str, u8)], &[(&str, u8)])]) -> ReactionNetwork {
        let mut n = ReactionNetwork::new();
        for (lhs, rhs) in spec {
            n.add_named(lhs, rhs, 1.0, Role::Intermediate).unwrap();
        }
        n
    }

    #[test]
    fn dimerization_example() {
        let n = net(&[
            (&[("X1", 1), ("X2", 1)], &[("X3", 1)]),
            (&[("X3", 1)], &[("X1", 1), ("X2", 1)]),
            (&[("X3", 2)], &[]),
        ]);
        let f = derive_ode(&n);
        let expected = PolynomialField::from_terms(
            n.species_names(),
            vec![
                vec![(r(-1), vec![1, 1, 0]), (r(1), vec![0, 0, 1])],
                vec![(r(-1), vec![1, 1, 0]), (r(1), vec![0, 0, 1])],
                vec![(r(1), vec![1, 1, 0]), (r(-1), vec![0, 0, 1]), (r(-2), vec![0, 0, 2])],
            ],
        );
        assert_eq!(f, expected);
    }

    #[test]
    fn empty_network_gives_zero_field() {
        let mut n = ReactionNetwork::new();
        n.declare("A", Role::Input).unwrap();
        n.declare("X", Role::Output).unwrap();
        let f = derive_ode(&n);
        assert!(f.component(0).is_empty() && f.component(1).is_empty());
    }

    #[test]
    fn addition_field() {
        let n = net(&[
            (&[("A", 1)], &[("A", 1), ("X", 1)]),
            (&[("B", 1)], &[("B", 1), ("X", 1)]),
            (&[("X", 1)], &[]),
        ]);
        let f = derive_ode(&n);
        assert!(f.component_of("A").unwrap().is_empty());
        assert!(f.component_of("B").unwrap().is_empty());
        let expected = PolynomialField::from_terms(
            n.species_names(),
            vec![vec![], vec![(r(1), vec![1, 0, 0]), (r(1), vec![0, 0, 1]), (r(-1), vec![0, 1, 0])], vec![]],
        );
        assert_eq!(f.component(1), expected.component(1));
        let state: HashMap<_, _> = [("A", 1.0), ("B", 2.0), ("X", 0.0)]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect();
        assert_eq!(evaluate_field(&f, &state).unwrap()["X"], 3.0);
    }

    #[test]
    fn inversion_field_evaluation() {
        let n = net(&[(&[("X", 1)], &[("X", 2)]), (&[("A", 1), ("X", 2)], &[("A", 1), ("X", 1)])]);
        let f = derive_ode(&n);
        let at = |a: f64, x: f64| {
            let s: HashMap<_, _> = [("A".to_string(), a), ("X".to_string(), x)].into_iter().collect();
            evaluate_field(&f, &s).unwrap()["X"]
        };
        assert_eq!(at(2.0, 0.5), 0.0);
        assert_eq!(at(2.0, 1.0), -1.0);
        assert!(check_admissible(&f).is_ok());
    }

    #[test]
    fn admissibility() {
        let names = vec!["A".to_string(), "X".to_string()];
        // x' = 1 - a x
        let naive = PolynomialField::from_terms(names.clone(), vec![vec![], vec![(r(1), vec![0, 0]), (r(-1), vec![1, 1])]]);
        assert!(check_admissible(&naive).is_ok());
        // x' = -1
        let bad = PolynomialField::from_terms(names, vec![vec![], vec![(r(-1), vec![0, 0])]]);
        let v = check_admissible(&bad);
        assert_eq!(v.violations.len(), 1);
        assert_eq!(v.violations[0].species, "X");
    }

    #[test]
    fn missing_state_is_an_error() {
        let n = net(&[(&[("X", 1)], &[])]);
        let f = derive_ode(&n);
        assert_eq!(evaluate_field(&f, &HashMap::new()), Err(CrnError::MissingState("X".into())));
    }

    #[test]
    fn invalid_reactions_rejected() {
        let mut n = ReactionNetwork::new();
        assert!(matches!(n.add_named(&[("X", 1)], &[("X", 1)], 1.0, Role::Intermediate), Err(CrnError::NullReaction)));
        assert!(matches!(n.add_named(&[("X", 1)], &[], 0.0, Role::Intermediate), Err(CrnError::BadRate(_))));
        assert!(matches!(n.declare("9x", Role::Input), Err(CrnError::InvalidName(_))));
        let mut c = Complex::new();
        c.add(0, 200).unwrap();
        assert!(matches!(c.add(0, 100), Err(CrnError::CoefficientTooLarge(300))));
    }

    #[test]
    fn zero_to_the_zero_is_one() {
        let n = net(&[(&[], &[("X", 1)])]);
        let f = derive_ode(&n);
        let s: HashMap<_, _> = [("X".to_string(), 0.0)].into_iter().collect();
        assert_eq!(evaluate_field(&f, &s).unwrap()["X"], 1.0);
    }
}
