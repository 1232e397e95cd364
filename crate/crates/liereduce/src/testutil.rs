//! Shared fixtures for unit tests: the mixed-order two-variable system with
//! its three-generator solvable algebra, used across module test suites.

use crate::expr::{EqualityConfig, Rational};
use crate::jet::{load_problem, OdeSystem, VectorField};
use crate::parser::parse_problem;

pub const MIXED_PROBLEM: &str = r#"
independent t
dependent x order 2
dependent y order 3

equation diff(x, t, 2) = x_1^2 / x
equation diff(y, t, 3) = exp(-t) * x_1 / x - y

generator Z1 = x * d/dx
generator Z2 = x * d/dx + exp(-t) * d/dy
generator Z3 = d/dt + x * ln(x) * d/dx

box x in [1/2, 2]
"#;

pub fn mixed_problem() -> (OdeSystem, Vec<VectorField>) {
    let p = parse_problem(MIXED_PROBLEM).unwrap();
    load_problem(&p).unwrap()
}

pub fn mixed_config() -> EqualityConfig {
    let mut c = EqualityConfig::default();
    c.boxes.insert(
        "x".into(),
        (
            Rational::new(1.into(), 2.into()),
            Rational::from_integer(2.into()),
        ),
    );
    c
}
