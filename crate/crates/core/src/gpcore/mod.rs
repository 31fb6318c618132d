//! Geometric programming: posynomial algebra over named positive variables,
//! matrix-constraint flattening and a log-domain interior-point solver.

mod logsumexp;
mod posy;
mod presolve;
mod program;
mod solver;

pub use logsumexp::{LocalEval, LogSumExp};
pub use posy::{divide_through, evaluate, Monomial, MonomialTerm, PosyMatrix, Posynomial, VarId, VarTable};
pub use program::{flatten, GeometricProgram};
pub use solver::{solve, GpSolution, GpStatus, SolverConfig};
