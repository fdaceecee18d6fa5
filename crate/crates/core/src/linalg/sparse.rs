//! Assembly and solution of the condensed skeleton system.

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Mat, Side};

use super::dense::DenseMatrix;
use crate::error::{Error, Result};

/// Relative residual accepted from a direct solve.
pub const DIRECT_RESIDUAL_TOLERANCE: f64 = 1e-10;

/// Global meaning of one row/column of an element Schur complement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SkeletonDof {
    /// Unknown with this global index.
    Free(usize),
    /// Prescribed (Dirichlet) value, eliminated into the right-hand side.
    Fixed(f64),
}

/// Element Schur complement and load mapped to skeleton DOFs.
#[derive(Debug, Clone)]
pub struct ElementContribution {
    pub dofs: Vec<SkeletonDof>,
    pub matrix: DenseMatrix,
    pub load: Vec<f64>,
}

/// Symmetric sparse matrix in compressed-column form (both triangles
/// stored) with its right-hand side.
#[derive(Debug, Clone)]
pub struct SparseSpd {
    n: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
    pub rhs: Vec<f64>,
    /// Number of constrained DOF entries eliminated during assembly.
    pub n_constrained: usize,
}

/// Outcome of a skeleton solve.
#[derive(Debug, Clone)]
pub struct SkeletonSolution {
    pub x: Vec<f64>,
    /// `||b - A x|| / (||A|| ||x|| + ||b||)` in the max norm.
    pub residual: f64,
    pub iterations: usize,
}

/// Sum element contributions into the global condensed system.
pub fn assemble_condensed(n_free: usize, contributions: &[ElementContribution]) -> Result<SparseSpd> {
    let mut triplets: Vec<(usize, usize, f64)> = Vec::new();
    let mut rhs = vec![0.0; n_free];
    let mut n_constrained = 0;
    for (e, c) in contributions.iter().enumerate() {
        let m = c.dofs.len();
        if c.matrix.nrows() != m || c.matrix.ncols() != m || c.load.len() != m {
            return Err(Error::Dimension(format!(
                "element {e}: {} dofs, {}x{} matrix, load of length {}",
                m,
                c.matrix.nrows(),
                c.matrix.ncols(),
                c.load.len()
            )));
        }
        for (i, di) in c.dofs.iter().enumerate() {
            let SkeletonDof::Free(gi) = *di else {
                n_constrained += 1;
                continue;
            };
            if gi >= n_free {
                return Err(Error::Dimension(format!(
                    "element {e}: dof {gi} out of range {n_free}"
                )));
            }
            rhs[gi] += c.load[i];
            for (j, dj) in c.dofs.iter().enumerate() {
                match *dj {
                    SkeletonDof::Free(gj) => triplets.push((gi, gj, c.matrix[(i, j)])),
                    SkeletonDof::Fixed(v) => rhs[gi] -= c.matrix[(i, j)] * v,
                }
            }
        }
    }
    Ok(SparseSpd::from_triplets(n_free, triplets, rhs, n_constrained))
}

impl SparseSpd {
    /// Build from (row, col, value) triplets; duplicates are summed in input
    /// order.
    pub fn from_triplets(
        n: usize,
        mut triplets: Vec<(usize, usize, f64)>,
        rhs: Vec<f64>,
        n_constrained: usize,
    ) -> Self {
        // Stable sort keeps summation order deterministic.
        triplets.sort_by_key(|&(i, j, _)| (j, i));
        let mut col_ptr = vec![0usize; n + 1];
        let mut row_idx = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in triplets {
            if last == Some((i, j)) {
                *values.last_mut().expect("nonempty") += v;
            } else {
                row_idx.push(i);
                values.push(v);
                col_ptr[j + 1] += 1;
                last = Some((i, j));
            }
        }
        for j in 0..n {
            col_ptr[j + 1] += col_ptr[j];
        }
        SparseSpd {
            n,
            col_ptr,
            row_idx,
            values,
            rhs,
            n_constrained,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let rows = &self.row_idx[self.col_ptr[j]..self.col_ptr[j + 1]];
        match rows.binary_search(&i) {
            Ok(p) => self.values[self.col_ptr[j] + p],
            Err(_) => 0.0,
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `max |A - A^T| / max |A|`
    pub fn symmetry_defect(&self) -> f64 {
        let mut d: f64 = 0.0;
        for j in 0..self.n {
            for p in self.col_ptr[j]..self.col_ptr[j + 1] {
                let i = self.row_idx[p];
                d = d.max((self.values[p] - self.get(j, i)).abs());
            }
        }
        let s = self.max_abs();
        if s == 0.0 {
            0.0
        } else {
            d / s
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for j in 0..self.n {
            let xj = x[j];
            for p in self.col_ptr[j]..self.col_ptr[j + 1] {
                y[self.row_idx[p]] += self.values[p] * xj;
            }
        }
        y
    }

    pub fn to_dense(&self) -> DenseMatrix {
        DenseMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }

    fn relative_residual(&self, x: &[f64], b: &[f64]) -> f64 {
        let ax = self.matvec(x);
        let r = ax.iter().zip(b).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        let nx = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let nb = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let denom = self.max_abs() * nx + nb;
        if denom == 0.0 {
            0.0
        } else {
            r / denom
        }
    }

    fn factor(&self) -> Result<faer::sparse::linalg::solvers::Llt<usize, f64>> {
        let lower: Vec<Triplet<usize, usize, f64>> = (0..self.n)
            .flat_map(|j| {
                (self.col_ptr[j]..self.col_ptr[j + 1])
                    .filter(move |&p| self.row_idx[p] >= j)
                    .map(move |p| Triplet::new(self.row_idx[p], j, self.values[p]))
            })
            .collect();
        let a = SparseColMat::<usize, f64>::try_new_from_triplets(self.n, self.n, &lower).map_err(|e| {
            Error::Solver {
                message: format!("matrix construction: {e:?}"),
                residual: f64::NAN,
            }
        })?;
        a.sp_cholesky(Side::Lower).map_err(|e| Error::Solver {
            message: format!("Cholesky factorization: {e}"),
            residual: f64::NAN,
        })
    }

    /// Succeeds iff a sparse Cholesky factorization exists.
    pub fn cholesky_certificate(&self) -> Result<()> {
        if self.n == 0 {
            return Ok(());
        }
        self.factor().map(|_| ())
    }

    /// Sparse Cholesky solve with up to two steps of iterative refinement.
    pub fn solve(&self) -> Result<SkeletonSolution> {
        if self.n == 0 {
            return Ok(SkeletonSolution {
                x: Vec::new(),
                residual: 0.0,
                iterations: 0,
            });
        }
        let llt = self.factor()?;
        let mut sol = Mat::<f64>::from_fn(self.n, 1, |i, _| self.rhs[i]);
        llt.solve_in_place(sol.as_mut());
        let mut x: Vec<f64> = (0..self.n).map(|i| sol[(i, 0)]).collect();
        let mut residual = self.relative_residual(&x, &self.rhs);
        let mut steps = 0;
        while residual > 1e-14 && steps < 2 {
            let ax = self.matvec(&x);
            let mut r = Mat::<f64>::from_fn(self.n, 1, |i, _| self.rhs[i] - ax[i]);
            llt.solve_in_place(r.as_mut());
            for (i, xi) in x.iter_mut().enumerate() {
                *xi += r[(i, 0)];
            }
            residual = self.relative_residual(&x, &self.rhs);
            steps += 1;
        }
        if !(residual <= DIRECT_RESIDUAL_TOLERANCE) {
            return Err(Error::Solver {
                message: "direct solve did not reach tolerance".into(),
                residual,
            });
        }
        Ok(SkeletonSolution {
            x,
            residual,
            iterations: steps,
        })
    }

    /// Jacobi-preconditioned conjugate gradients. Stops when
    /// `||r||_2 <= tol ||b||_2` or after `20 n` iterations.
    pub fn solve_cg(&self, tol: f64) -> Result<SkeletonSolution> {
        let n = self.n;
        let b = &self.rhs;
        let bnorm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut x = vec![0.0; n];
        if n == 0 || bnorm == 0.0 {
            return Ok(SkeletonSolution {
                x,
                residual: 0.0,
                iterations: 0,
            });
        }
        let diag = self.diagonal();
        if let Some(i) = diag.iter().position(|&d| !(d > 0.0)) {
            return Err(Error::Solver {
                message: format!("non-positive diagonal entry at {i}"),
                residual: 1.0,
            });
        }
        let mut r = b.clone();
        let mut z: Vec<f64> = r.iter().zip(&diag).map(|(r, d)| r / d).collect();
        let mut p = z.clone();
        let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let max_iter = 20 * n;
        for it in 1..=max_iter {
            let ap = self.matvec(&p);
            let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
            if !(pap > 0.0) {
                return Err(Error::Solver {
                    message: "matrix is not positive definite".into(),
                    residual: r.iter().map(|v| v * v).sum::<f64>().sqrt() / bnorm,
                });
            }
            let alpha = rz / pap;
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            let rnorm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            if rnorm <= tol * bnorm {
                return Ok(SkeletonSolution {
                    residual: rnorm / bnorm,
                    x,
                    iterations: it,
                });
            }
            for i in 0..n {
                z[i] = r[i] / diag[i];
            }
            let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
        Err(Error::Solver {
            message: format!("conjugate gradients did not converge in {max_iter} iterations"),
            residual: r.iter().map(|v| v * v).sum::<f64>().sqrt() / bnorm,
        })
    }
}
