//! Compiles arithmetic expressions into mass-action chemical reaction
//! networks built from eight elementary gates, integrates the resulting
//! polynomial ODEs and checks that the output converges at the predicted,
//! input-independent speed.
//!
//! ```
//! use crncalc::{compile, simulate, Assignment, InputValue, Mode, SimConfig};
//!
//! let program = compile("1/a", Mode::NonNegative).unwrap();
//! let inputs: Assignment = [("a".to_string(), InputValue::Value(4.0))].into();
//! let traj = simulate(&program, &inputs, &SimConfig::default()).unwrap();
//! assert!((traj.final_value("X0").unwrap() - 0.25).abs() < 1e-6);
//! ```

pub mod batch;
pub mod compiler;
pub mod crn;
pub mod expr;
pub mod forcing;
pub mod gates;
pub mod presets;
pub mod rate;
pub mod sim;
pub mod sweep;
pub mod text;
pub mod verify;

pub use compiler::{compile, flatten, lower_to_circuit, Assignment, Circuit, CompileError, CompiledProgram, InputValue, Mode, Signal, Target};
pub use crn::{check_admissible, derive_ode, PolynomialField, ReactionNetwork, Role};
pub use expr::{parse_expression, Expr};
pub use forcing::{simulate_forced, ForcedForm, ForcedSystemSpec, ForcingFunction};
pub use gates::{gate_network, GateKind, SpeedBound};
pub use rate::{bound_calculus, check_speed, digits_time, estimate_rate, RateEstimate};
pub use sim::{closed_form_reference, simulate, simulate_network, ClosedForm, SimConfig, Termination, Trajectory};
pub use text::{parse_network, print_network};
pub use verify::{verify, Analysis, Outcome, VerifyReport};
