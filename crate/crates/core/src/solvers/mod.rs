//! Reference solvers: stabilized Poisson and time-dependent Maxwell.

pub mod bessel;
pub mod maxwell;
pub mod poisson;

pub use bessel::BesselMode;
pub use maxwell::{maxwell_leapfrog_step, suzuki_yoshida4, MaxwellOperators, MaxwellState};
pub use poisson::{solve_poisson, LinearSolver, PoissonProblem, PoissonSolution};
