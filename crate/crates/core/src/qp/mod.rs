//! In-house quadratic programming solvers.

mod boxqp;
mod dual;

pub use boxqp::{solve_box_qp, BoxQpOptions, BoxQpResult};
pub use dual::{solve_qp, QpProblem, QpSolution};
