//! Mixed HDG (LDG-H): unknowns `sigma_h in P_k(K)^2`, `u_h in P_k(K)` and
//! facet traces `u^_h in P_k(F)`. On each element
//!
//! ```text
//! (a^-1 sigma, tau)_K + (u, div tau)_K - <u^, tau . n>
//!     + (sigma, grad v)_K - <sigma . n - alpha (u - u^), v - v^>
//! ```
//!
//! The cell unknowns `(sigma, u)` are eliminated per element.

use crate::basis::dim_p;
use crate::error::{Error, Result};
use crate::exec;
use crate::linalg::{assemble_condensed, DenseMatrix, ElementContribution, Lu, SkeletonDof, SparseSpd};
use crate::mesh::Mesh;
use crate::problem::ProblemSpec;
use crate::skeleton::{derivative_moments, facet_ops, FacetOps, NormalFlux, SkeletonSpace};

/// Choice of `alpha` on each (element, facet) pair.
#[derive(Debug, Clone, PartialEq)]
pub enum MixedStabilization {
    /// `alpha = a` on every facet.
    Uniform,
    /// `alpha = a` on one facet per element (the newest facet), zero on the
    /// other two.
    SingleFacet,
    /// Explicit values per element and local facet.
    Custom(Vec<[f64; 3]>),
}

/// `alpha` per element and local facet. Every value must be nonnegative and
/// at least one per element positive.
pub fn stabilization_mixed(mesh: &Mesh, mode: &MixedStabilization) -> Result<Vec<[f64; 3]>> {
    let alpha: Vec<[f64; 3]> = match mode {
        MixedStabilization::Uniform => (0..mesh.num_elements()).map(|e| [mesh.coefficient(e); 3]).collect(),
        MixedStabilization::SingleFacet => (0..mesh.num_elements())
            .map(|e| {
                let mut a = [0.0; 3];
                a[mesh.newest_facet(e)] = mesh.coefficient(e);
                a
            })
            .collect(),
        MixedStabilization::Custom(v) => {
            if v.len() != mesh.num_elements() {
                return Err(Error::Config(format!(
                    "{} stabilization triples for {} elements",
                    v.len(),
                    mesh.num_elements()
                )));
            }
            v.clone()
        }
    };
    for (e, a) in alpha.iter().enumerate() {
        if a.iter().any(|&x| !(x >= 0.0 && x.is_finite())) {
            return Err(Error::Config(format!("negative or non-finite stabilization on element {e}")));
        }
        if a.iter().all(|&x| x == 0.0) {
            return Err(Error::ZeroStabilization { element: e });
        }
    }
    Ok(alpha)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixedOptions {
    pub k: usize,
    pub stabilization: MixedStabilization,
}

impl MixedOptions {
    pub fn new(k: usize, stabilization: MixedStabilization) -> Self {
        MixedOptions { k, stabilization }
    }
}

/// Element blocks: cell unknowns ordered `(sigma_x, sigma_y, u)`, facet
/// unknowns by local facet, then Legendre index.
#[derive(Debug, Clone)]
pub struct MixedBlocks {
    pub b_xx: DenseMatrix,
    pub b_xl: DenseMatrix,
    pub b_lx: DenseMatrix,
    pub b_ll: DenseMatrix,
    pub load: Vec<f64>,
}

fn all_facet_ops(mesh: &Mesh, e: usize, k: usize) -> Result<[FacetOps; 3]> {
    Ok([facet_ops(mesh, e, 0, k, k)?, facet_ops(mesh, e, 1, k, k)?, facet_ops(mesh, e, 2, k, k)?])
}

/// Element matrices of the mixed form; `load` holds `(f, phi_i)_K`.
pub fn local_matrices_mixed(mesh: &Mesh, e: usize, k: usize, alpha: [f64; 3], load: &[f64]) -> Result<MixedBlocks> {
    let n = dim_p(k);
    let nf = k + 1;
    let a = mesh.coefficient(e);
    let det = mesh.element_map(e).det;
    let d = derivative_moments(mesh, e, k, k)?;
    let ops = all_facet_ops(mesh, e, k)?;
    let mut b_xx = DenseMatrix::zeros(3 * n, 3 * n);
    let mut b_xl = DenseMatrix::zeros(3 * n, 3 * nf);
    let mut b_lx = DenseMatrix::zeros(3 * nf, 3 * n);
    let mut b_ll = DenseMatrix::zeros(3 * nf, 3 * nf);
    for i in 0..2 * n {
        b_xx[(i, i)] = det / a;
    }
    for c in 0..2 {
        for i in 0..n {
            for m in 0..n {
                // (u_m, d_c phi_i) in the tau rows, -(d_c sigma_m, v_i) in the v rows
                b_xx[(c * n + i, 2 * n + m)] = d[c][(m, i)];
                b_xx[(2 * n + i, c * n + m)] = -d[c][(i, m)];
            }
        }
    }
    for (j, op) in ops.iter().enumerate() {
        let (len, al) = (op.length, alpha[j]);
        for i in 0..n {
            for m in 0..n {
                let s: f64 = (0..nf).map(|l| op.trace[(l, i)] * op.trace[(l, m)]).sum();
                b_xx[(2 * n + i, 2 * n + m)] += al * len * s;
            }
            for l in 0..nf {
                let t = len * op.trace[(l, i)];
                let col = j * nf + l;
                for c in 0..2 {
                    b_xl[(c * n + i, col)] = -op.normal[c] * t;
                    b_lx[(col, c * n + i)] = op.normal[c] * t;
                }
                b_xl[(2 * n + i, col)] = -al * t;
                b_lx[(col, 2 * n + i)] = -al * t;
            }
        }
        for l in 0..nf {
            b_ll[(j * nf + l, j * nf + l)] = al * len;
        }
    }
    let mut f = vec![0.0; 3 * n];
    f[2 * n..].copy_from_slice(&load[..n]);
    Ok(MixedBlocks {
        b_xx,
        b_xl,
        b_lx,
        b_ll,
        load: f,
    })
}

/// Solution of the mixed scheme on one mesh.
#[derive(Debug, Clone)]
pub struct MixedSolution {
    pub k: usize,
    pub mesh: Mesh,
    /// `(sigma_x, sigma_y)` coefficients per element, `2 dim P_k` values.
    pub sigma: Vec<Vec<f64>>,
    pub u: Vec<Vec<f64>>,
    /// Trace coefficients per facet (global orientation).
    pub trace: Vec<Vec<f64>>,
    pub alpha: Vec<[f64; 3]>,
    pub stabilization: MixedStabilization,
    /// `(f, phi_i)_K` per element for `i < dim P_k`.
    pub loads: Vec<Vec<f64>>,
    pub n_skeleton: usize,
    pub residual: f64,
}

impl MixedSolution {
    /// `dim Sigma_h + dim V_h + dim M^0_h`.
    pub fn ndof_total(&self) -> usize {
        3 * self.mesh.num_elements() * dim_p(self.k) + self.n_skeleton
    }

    /// The facet carrying the stabilization in single-facet mode.
    pub fn stabilized_facet(&self, e: usize) -> usize {
        self.mesh.newest_facet(e)
    }
}

struct Condensed {
    x: DenseMatrix,
    y: Vec<f64>,
    contribution: ElementContribution,
}

fn condense(blocks: &MixedBlocks, dofs: Vec<SkeletonDof>) -> Result<Condensed> {
    let lu = Lu::factor(&blocks.b_xx)?;
    let x = lu.solve_matrix(&blocks.b_xl);
    let y = lu.solve(&blocks.load);
    let bx = blocks.b_lx.matmul(&x);
    let mut s = blocks.b_ll.clone();
    let m = s.nrows();
    for i in 0..m {
        for j in 0..m {
            s[(i, j)] -= bx[(i, j)];
        }
    }
    let asym = s.asymmetry();
    if asym > 1e-10 {
        return Err(Error::Dimension(format!("element Schur complement asymmetric ({asym:e})")));
    }
    s.symmetrize();
    let load: Vec<f64> = blocks.b_lx.matvec(&y).iter().map(|v| -v).collect();
    Ok(Condensed {
        x,
        y,
        contribution: ElementContribution {
            dofs,
            matrix: s,
            load,
        },
    })
}

struct Prepared {
    space: SkeletonSpace,
    alpha: Vec<[f64; 3]>,
    loads: Vec<Vec<f64>>,
    condensed: Vec<Condensed>,
    system: SparseSpd,
}

fn prepare(problem: &ProblemSpec, opts: &MixedOptions) -> Result<Prepared> {
    let mesh = &problem.mesh;
    let alpha = stabilization_mixed(mesh, &opts.stabilization)?;
    let space = SkeletonSpace::new(problem, opts.k)?;
    let loads = problem.element_loads(mesh, opts.k)?;
    let condensed = exec::try_map(mesh.num_elements(), |e| {
        let blocks = local_matrices_mixed(mesh, e, opts.k, alpha[e], &loads[e])?;
        condense(&blocks, space.element_dofs(mesh, e)).map_err(|err| err.at_element(e))
    })?;
    let contributions: Vec<ElementContribution> = condensed.iter().map(|c| c.contribution.clone()).collect();
    let system = assemble_condensed(space.num_free(), &contributions)?;
    Ok(Prepared {
        space,
        alpha,
        loads,
        condensed,
        system,
    })
}

/// The condensed skeleton system, for inspection (symmetry, definiteness).
pub fn condensed_system_mixed(problem: &ProblemSpec, opts: &MixedOptions) -> Result<SparseSpd> {
    Ok(prepare(problem, opts)?.system)
}

pub fn solve_mixed(problem: &ProblemSpec, opts: &MixedOptions) -> Result<MixedSolution> {
    let prep = prepare(problem, opts)?;
    let mesh = &problem.mesh;
    let n = dim_p(opts.k);
    let sol = prep.system.solve()?;
    let trace: Vec<Vec<f64>> = (0..mesh.num_facets())
        .map(|f| prep.space.facet_values(f, &sol.x))
        .collect();
    let cells = exec::map(mesh.num_elements(), |e| {
        let c = &prep.condensed[e];
        let lam: Vec<f64> = mesh
            .element_facets(e)
            .iter()
            .flat_map(|&f| trace[f].iter().copied())
            .collect();
        let xl = c.x.matvec(&lam);
        let v: Vec<f64> = c.y.iter().zip(&xl).map(|(y, x)| y - x).collect();
        (v[..2 * n].to_vec(), v[2 * n..].to_vec())
    });
    let (sigma, u) = cells.into_iter().unzip();
    Ok(MixedSolution {
        k: opts.k,
        mesh: mesh.clone(),
        sigma,
        u,
        trace,
        alpha: prep.alpha,
        stabilization: opts.stabilization.clone(),
        loads: prep.loads,
        n_skeleton: prep.space.num_free(),
        residual: sol.residual,
    })
}

/// `sigma^ . n = sigma_h . n - alpha (u_h - u^_h)` on every element facet,
/// in `P_k(F)`.
pub fn numerical_flux_mixed(sol: &MixedSolution) -> Result<NormalFlux> {
    let mesh = &sol.mesh;
    let k = sol.k;
    let n = dim_p(k);
    let values = exec::try_map(mesh.num_elements(), |e| {
        let ops = all_facet_ops(mesh, e, k)?;
        let facets = mesh.element_facets(e);
        let mut out: [Vec<f64>; 3] = Default::default();
        for (j, op) in ops.iter().enumerate() {
            let sx = op.trace.matvec(&sol.sigma[e][..n]);
            let sy = op.trace.matvec(&sol.sigma[e][n..]);
            let tr = op.trace.matvec(&sol.u[e]);
            let lam = &sol.trace[facets[j]];
            out[j] = (0..=k)
                .map(|l| op.normal[0] * sx[l] + op.normal[1] * sy[l] - sol.alpha[e][j] * (tr[l] - lam[l]))
                .collect();
        }
        Ok(out)
    })?;
    Ok(NormalFlux { degree: k, values })
}

/// Jump terms per element: `h_K sum_F alpha <u_h - u^_h, u_h - u^_h>_F` over
/// all facets, and the same sum restricted to facets other than the
/// single-facet choice.
pub fn jump_mixed(sol: &MixedSolution) -> Result<(Vec<f64>, Vec<f64>)> {
    let mesh = &sol.mesh;
    let per = exec::try_map(mesh.num_elements(), |e| {
        let ops = all_facet_ops(mesh, e, sol.k)?;
        let h = mesh.element_geometry(e).diameter;
        let facets = mesh.element_facets(e);
        let star = sol.stabilized_facet(e);
        let (mut all, mut off) = (0.0, 0.0);
        for (j, op) in ops.iter().enumerate() {
            let tr = op.trace.matvec(&sol.u[e]);
            let d2: f64 = tr.iter().zip(&sol.trace[facets[j]]).map(|(a, b)| (a - b).powi(2)).sum();
            let v = h * sol.alpha[e][j] * op.length * d2;
            all += v;
            if j != star {
                off += v;
            }
        }
        Ok((all, off))
    })?;
    Ok(per.into_iter().unzip())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skeleton::check_conservation;
    use std::sync::Arc;

    #[test]
    fn uniform_and_single_facet_values() {
        let m = Mesh::unit_square().with_coefficient(vec![3.0; 8]).unwrap();
        let u = stabilization_mixed(&m, &MixedStabilization::Uniform).unwrap();
        assert!(u.iter().flatten().all(|&a| a == 3.0));
        let s = stabilization_mixed(&m, &MixedStabilization::SingleFacet).unwrap();
        for (e, a) in s.iter().enumerate() {
            assert_eq!(a.iter().filter(|&&x| x > 0.0).count(), 1);
            assert_eq!(a[m.newest_facet(e)], 3.0);
        }
    }

    #[test]
    fn single_facet_on_reference_triangle_is_hypotenuse() {
        let m = Mesh::new(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], vec![[0, 1, 2]], &Default::default()).unwrap();
        let s = stabilization_mixed(&m, &MixedStabilization::SingleFacet).unwrap();
        assert_eq!(s[0], [1.0, 0.0, 0.0]);
    }

    #[test]
    fn zero_stabilization_rejected() {
        let m = Mesh::unit_square();
        let mut v = vec![[1.0, 0.0, 0.0]; 8];
        v[4] = [0.0; 3];
        assert!(matches!(
            stabilization_mixed(&m, &MixedStabilization::Custom(v)),
            Err(Error::ZeroStabilization { element: 4 })
        ));
    }

    #[test]
    fn unstabilized_element_block_is_singular() {
        let m = Mesh::unit_square();
        for k in 1..=3 {
            let b = local_matrices_mixed(&m, 0, k, [0.0; 3], &vec![0.0; dim_p(k)]).unwrap();
            assert!(matches!(Lu::factor(&b.b_xx), Err(Error::Singular { .. })));
        }
    }

    #[test]
    fn constants_give_zero_form() {
        let m = Mesh::unit_square();
        let k = 0;
        let b = local_matrices_mixed(&m, 2, k, [1.0, 1.0, 1.0], &[0.0]).unwrap();
        let phi0 = crate::basis::cell_basis(0).poly(0).eval(0.0, 0.0);
        let x = [0.0, 0.0, 1.0 / phi0];
        let lam = [1.0, 1.0, 1.0];
        // B((0, 1, 1), (0, 1, 1))
        let bxx = b.b_xx.matvec(&x);
        let bxl = b.b_xl.matvec(&lam);
        let blx = b.b_lx.matvec(&x);
        let bll = b.b_ll.matvec(&lam);
        let v: f64 = (0..3).map(|i| x[i] * (bxx[i] + bxl[i])).sum::<f64>()
            + (0..3).map(|i| lam[i] * (blx[i] + bll[i])).sum::<f64>();
        assert!(v.abs() < 1e-14);
    }

    #[test]
    fn homogeneous_problem_has_zero_solution() {
        let p = ProblemSpec::new("zero", Mesh::unit_square(), Arc::new(|_| 0.0));
        let sol = solve_mixed(&p, &MixedOptions::new(1, MixedStabilization::Uniform)).unwrap();
        assert!(sol.sigma.iter().chain(&sol.u).chain(&sol.trace).flatten().all(|v| *v == 0.0));
    }

    #[test]
    fn skeleton_system_is_spd() {
        let p = ProblemSpec::lshape();
        for k in 0..=3 {
            for mode in [MixedStabilization::Uniform, MixedStabilization::SingleFacet] {
                let s = condensed_system_mixed(&p, &MixedOptions::new(k, mode.clone())).unwrap();
                assert!(s.symmetry_defect() < 1e-10);
                s.cholesky_certificate().unwrap_or_else(|e| panic!("k={k} {mode:?}: {e}"));
            }
        }
    }

    #[test]
    fn flux_is_conservative_and_single_valued() {
        let p = ProblemSpec::square_smooth();
        for k in 0..=3 {
            for mode in [MixedStabilization::Uniform, MixedStabilization::SingleFacet] {
                let sol = solve_mixed(&p, &MixedOptions::new(k, mode.clone())).unwrap();
                let flux = numerical_flux_mixed(&sol).unwrap();
                let rep = check_conservation(&p.mesh, &flux, &sol.loads);
                assert!(rep.max_relative_residual() < 1e-10, "k={k} {mode:?}");
                assert!(rep.max_jump < 1e-9, "k={k} {mode:?}: {}", rep.max_jump);
                let (_, off) = jump_mixed(&sol).unwrap();
                if mode == MixedStabilization::SingleFacet {
                    assert!(off.iter().all(|&v| v == 0.0));
                }
            }
        }
    }

    #[test]
    fn affine_solution_is_reproduced() {
        let g = |x: [f64; 2]| 1.0 + 2.0 * x[0] - 3.0 * x[1];
        let p = ProblemSpec::new("affine", Mesh::unit_square(), Arc::new(|_| 0.0)).with_dirichlet(Arc::new(g));
        for mode in [MixedStabilization::Uniform, MixedStabilization::SingleFacet] {
            let sol = solve_mixed(&p, &MixedOptions::new(1, mode)).unwrap();
            let basis = crate::basis::cell_basis(1);
            for e in 0..p.mesh.num_elements() {
                let map = p.mesh.element_map(e);
                let xi = [0.3, 0.3];
                let v = crate::basis::eval_cell(&basis, &sol.u[e], xi);
                assert!((v - g(map.to_physical(xi))).abs() < 1e-9);
                let sx = crate::basis::eval_cell(&basis, &sol.sigma[e][..3], xi);
                let sy = crate::basis::eval_cell(&basis, &sol.sigma[e][3..], xi);
                assert!((sx - 2.0).abs() < 1e-9 && (sy + 3.0).abs() < 1e-9);
            }
        }
    }
}
