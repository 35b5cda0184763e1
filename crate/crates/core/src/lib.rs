//! Discrete-time stochastic optimal control with bilinear Gaussian noise.
//!
//! The quadratic part of the optimal cost comes from the stochastic Riccati
//! equations ([`riccati`]), solved by repeated deterministic DARE solves on a
//! lifted cost. Higher-degree Taylor terms of the cost and feedback follow
//! degree by degree ([`expansion`]) and are checked against the dynamic
//! programming equations and by Monte Carlo ([`simulate`]).

pub mod error;
pub mod expansion;
pub mod linalg;
pub mod model;
pub mod par;
pub mod poly;
pub mod riccati;
pub mod simulate;

pub use error::{Error, Result};
pub use expansion::{expand_finite, expand_infinite, FiniteHorizonExpansion, PolicyExpansion};
pub use model::{parse_problem, LqgbProblem, NonlinearModel, Problem, TimeVaryingModel};
pub use par::Execution;
pub use poly::{MultiPoly, PolyVector, VarCounts};
pub use riccati::{solve_dare, solve_sdare, solve_sdrde, DareSolution, SdareSolution, SdrdeSolution};
pub use simulate::{compare_policies, simulate, Feedback, SimConfig, SimResult};
