//! Line-oriented text format for reaction networks.
//!
//! ```text
//! # comment
//! species: A[input], X[output], Y[intermediate]
//! 2A + 3Y -> 2A + 2Y ; k=1
//! X -> 0 ; k=1
//! ```
//!
//! Without a `species:` header, species are declared on first use with the
//! intermediate role. [`print_network`] always emits the header, and
//! `print_network(parse_network(s))` is the identity on its own output.

use std::fmt::Write as _;

use thiserror::Error;

use crate::crn::{Complex, CrnError, ReactionNetwork, Role};

#[derive(Debug, Clone, PartialEq, Error)]
#[error("line {line}: {message}")]
pub struct TextError {
    pub line: usize,
    pub message: String,
}

fn err(line: usize, message: impl Into<String>) -> TextError {
    TextError { line, message: message.into() }
}

fn crn_err(line: usize, e: CrnError) -> TextError {
    err(line, e.to_string())
}

pub fn parse_network(text: &str) -> Result<ReactionNetwork, TextError> {
    let mut net = ReactionNetwork::new();
    let mut header_seen = false;
    let mut saw_reaction = false;
    for (lineno, raw) in text.lines().enumerate() {
        let line_no = lineno + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("species:") {
            if header_seen || saw_reaction {
                return Err(err(line_no, "species header must come first and appear once"));
            }
            header_seen = true;
            for item in rest.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                let (name, role) = parse_declaration(item).ok_or_else(|| err(line_no, format!("bad species declaration `{item}`")))?;
                net.declare(name, role).map_err(|e| crn_err(line_no, e))?;
            }
            continue;
        }
        saw_reaction = true;
        let (body, rate) = match line.split_once(';') {
            Some((body, tail)) => (body, parse_rate(tail.trim()).ok_or_else(|| err(line_no, format!("bad rate `{}`", tail.trim())))?),
            None => (line, 1.0),
        };
        let (lhs, rhs) = body.split_once("->").ok_or_else(|| err(line_no, "expected `->`"))?;
        let reactant = parse_complex(&mut net, lhs, header_seen, line_no)?;
        let product = parse_complex(&mut net, rhs, header_seen, line_no)?;
        net.add_reaction(reactant, product, rate).map_err(|e| crn_err(line_no, e))?;
    }
    Ok(net)
}

fn parse_declaration(item: &str) -> Option<(&str, Role)> {
    match item.split_once('[') {
        Some((name, rest)) => {
            let role = rest.strip_suffix(']')?.trim().parse().ok()?;
            Some((name.trim(), role))
        }
        None => Some((item, Role::Intermediate)),
    }
}

fn parse_rate(s: &str) -> Option<f64> {
    let v = s.strip_prefix("k")?.trim_start().strip_prefix('=')?.trim();
    v.parse().ok()
}

fn parse_complex(net: &mut ReactionNetwork, s: &str, strict: bool, line: usize) -> Result<Complex, TextError> {
    let s = s.trim();
    let mut c = Complex::new();
    if s == "0" {
        return Ok(c);
    }
    for term in s.split('+').map(str::trim) {
        if term.is_empty() {
            return Err(err(line, "empty term in complex"));
        }
        let split = term.find(|ch: char| !ch.is_ascii_digit()).unwrap_or(term.len());
        let (digits, name) = term.split_at(split);
        let name = name.trim();
        let coeff: u64 = if digits.is_empty() { 1 } else { digits.parse().map_err(|_| err(line, format!("bad coefficient in `{term}`")))? };
        let coeff = u8::try_from(coeff).map_err(|_| crn_err(line, CrnError::CoefficientTooLarge(coeff)))?;
        if coeff == 0 {
            return Err(err(line, format!("zero coefficient in `{term}`")));
        }
        let idx = if strict {
            net.index_of(name).ok_or_else(|| err(line, format!("species `{name}` not declared in header")))?
        } else {
            net.ensure(name, Role::Intermediate).map_err(|e| crn_err(line, e))?
        };
        c.add(idx, coeff).map_err(|e| crn_err(line, e))?;
    }
    Ok(c)
}

pub fn format_complex(net: &ReactionNetwork, c: &Complex) -> String {
    if c.is_empty() {
        return "0".to_string();
    }
    c.iter()
        .map(|(i, k)| {
            let name = &net.species()[i].name;
            if k == 1 {
                name.clone()
            } else {
                format!("{k}{name}")
            }
        })
        .collect::<Vec<_>>()
        .join(" + ")
}

/// Canonical text: header line then one reaction per line.
pub fn print_network(net: &ReactionNetwork) -> String {
    let mut out = String::new();
    let decls: Vec<String> = net.species().iter().map(|s| format!("{}[{}]", s.name, s.role.as_str())).collect();
    writeln!(out, "species: {}", decls.join(", ")).unwrap();
    for r in net.reactions() {
        writeln!(out, "{} -> {} ; k={}", format_complex(net, &r.reactant), format_complex(net, &r.product), r.rate).unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_example_line() {
        let net = parse_network("2A + 3Y -> 2A + 2Y ; k=1\n").unwrap();
        assert_eq!(net.species().len(), 2);
        let r = &net.reactions()[0];
        assert_eq!(r.reactant.coeff(0), 2);
        assert_eq!(r.reactant.coeff(1), 3);
        assert_eq!(r.product.coeff(1), 2);
    }

    #[test]
    fn header_roles_and_comments() {
        let text = "# inversion\nspecies: A[input], X[output]\n\nX -> 2X ; k=1\nA + 2X -> A + X # catalytic\n";
        let net = parse_network(text).unwrap();
        assert_eq!(net.species()[0].role, Role::Input);
        assert_eq!(net.species()[1].role, Role::Output);
        assert_eq!(net.reactions()[1].rate, 1.0);
        let printed = print_network(&net);
        assert_eq!(printed, "species: A[input], X[output]\nX -> 2X ; k=1\nA + 2X -> A + X ; k=1\n");
        assert_eq!(print_network(&parse_network(&printed).unwrap()), printed);
    }

    #[test]
    fn undeclared_species_with_header_is_error() {
        let e = parse_network("species: A[input]\nA -> A + X\n").unwrap_err();
        assert_eq!(e.line, 2);
    }

    #[test]
    fn zero_complex_and_rates() {
        let net = parse_network("X -> 0 ; k=0.5\n0 -> X\n").unwrap();
        assert!(net.reactions()[0].product.is_empty());
        assert_eq!(net.reactions()[0].rate, 0.5);
        assert!(net.reactions()[1].reactant.is_empty());
        assert!(parse_network("X -> 0 ; k=-1\n").is_err());
        assert!(parse_network("X -> X\n").is_err());
        assert!(parse_network("300X -> 0\n").is_err());
    }
}
