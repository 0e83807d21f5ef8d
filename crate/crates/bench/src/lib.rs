//! Shared fixtures for the solver benchmarks.

use asyncdual::constants::{constants_for, ConstantsTable, PhiDenominator};
use asyncdual::harness::generators::ieee14_instance;
use asyncdual::oracle::{solve_reference, ReferenceSolution};
use asyncdual::Problem;

pub struct Fixture {
    pub problem: Problem,
    pub reference: ReferenceSolution,
    pub table: ConstantsTable,
}

/// The 14-bus instance with its reference solution and constants.
pub fn ieee14_fixture() -> Fixture {
    let problem = ieee14_instance().expect("bundled instance builds").problem;
    let reference = solve_reference(&problem).expect("reference converges");
    let table = constants_for(&problem, PhiDenominator::Owner).expect("constants");
    Fixture { problem, reference, table }
}
