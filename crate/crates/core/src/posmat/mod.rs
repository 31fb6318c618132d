//! Dense matrices and the nonnegative / Metzler toolkit: Kronecker products,
//! direct sums, LU solves, matrix exponentials and the Perron-based spectral
//! abscissa.

mod expm;
mod kron;
mod lu;
mod mat;
mod perron;

pub use expm::expm;
pub use kron::{block_diag, dirsum, gkron, gkron_with, kron};
pub use lu::{Lu, MAX_CONDITION};
pub use mat::{Mat, MetzlerMat, NonnegMat};
pub use perron::{is_irreducible, perron_root, spectral_abscissa, strongly_connected_components, PERRON_TOL};
