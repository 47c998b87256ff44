//! Networks that are not produced by the compiler but serve as baselines.

use crate::crn::{ReactionNetwork, Role};

/// `0 -> X`, `A + X -> A`: the reciprocal of `a` with `dx/dt = 1 - a x`,
/// which converges at speed `a` instead of 1.
pub fn naive_inversion() -> ReactionNetwork {
    let mut net = ReactionNetwork::new();
    net.declare("A", Role::Input).expect("fresh network");
    net.declare("X", Role::Output).expect("fresh network");
    net.add_named(&[], &[("X", 1)], 1.0, Role::Intermediate).expect("valid reaction");
    net.add_named(&[("A", 1), ("X", 1)], &[("A", 1)], 1.0, Role::Intermediate).expect("valid reaction");
    net
}

/// Named baselines accepted by the sweep command.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    NaiveInversion,
}

impl std::str::FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "naive-inversion" => Ok(Preset::NaiveInversion),
            other => Err(format!("unknown preset `{other}` (available: naive-inversion)")),
        }
    }
}
