//! Dense element-level solves and the sparse SPD skeleton solver.

pub mod dense;
pub mod sparse;

pub use dense::{cholesky, dense_solve, DenseMatrix, Lu};
pub use sparse::{assemble_condensed, ElementContribution, SkeletonDof, SkeletonSolution, SparseSpd};
