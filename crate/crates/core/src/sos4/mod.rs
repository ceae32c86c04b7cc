//! Degree-4 sum-of-squares machinery over the hypercube with the balance
//! constraint `Σ x_i = 0`.
//!
//! Fixing `x_n = 1` leaves multilinear polynomials in `m = n - 1` variables.
//! Functionals on them are vectors over subsets of `[m]` of size at most 4,
//! and every matrix arising in the construction lies in the 55-dimensional
//! algebra of matrices constant on `(|S|, |T|, |S ∩ T|)` orbits, which
//! block-diagonalizes into blocks of orders 5, 4, 3, 2 and 1.

pub mod algebra;
pub mod basis;
pub mod functional;
pub mod pseudoexp;

pub use algebra::{
    algebra_pseudoinverse, algebra_to_matrix, block_diagonalize, constraint_a, constraint_a_dense, matrix_to_algebra,
    projector, AlgebraElement, BlockSpectrum, Projector, ProjectorMode,
};
pub use basis::SubsetBasis;
pub use functional::{
    apply_constraint, evaluate, moment_matrix, noise_cov, psi0, reduce_noise, validate_pseudoexp, Functional,
    MomentMatrix, NoiseCov, ValidationReport,
};
pub use pseudoexp::{
    build_pseudoexp, default_epsilon, sigma_x_blocks, sigma_x_matrix, sos_lower_bound, Schedule, SigmaXBlocks,
    SosBound, SosContext,
};
