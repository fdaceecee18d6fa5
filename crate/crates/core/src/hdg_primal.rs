//! Primal HDG: the hybridized symmetric interior penalty scheme with unknowns
//! `u_h in P_k(K)` and facet traces `u^_h in P_{k-delta}(F)`.
//!
//! On each element the bilinear form is
//!
//! ```text
//! (a grad u, grad v)_K - <a grad u . n, v - v^> - <a grad v . n, u - u^>
//!     + <alpha (P_M u - u^), P_M v - v^>
//! ```
//!
//! with `P_M` the L2 projection onto the facet space. Cell unknowns are
//! eliminated element by element and only the facet system is solved.

use crate::basis::dim_p;
use crate::error::{Error, Result};
use crate::exec;
use crate::linalg::{assemble_condensed, DenseMatrix, ElementContribution, Lu, SkeletonDof, SparseSpd};
use crate::mesh::Mesh;
use crate::problem::ProblemSpec;
use crate::skeleton::{facet_ops, stiffness, NormalFlux, SkeletonSpace};

/// Choice of the penalty `alpha` on each (element, facet) pair.
#[derive(Debug, Clone, PartialEq)]
pub enum PrimalStabilization {
    /// `alpha = a gamma / |F| * sum_F' |F'|^2 / |K|`, well posed for
    /// `gamma > k (k + 1) / 2`.
    Lemma { gamma: f64 },
    /// `alpha = 10 k^2 a / |F|`.
    Scaled,
    /// Explicit values per element and local facet.
    Custom(Vec<[f64; 3]>),
}

/// Smallest admissible `gamma` (exclusive) for degree `k`.
pub fn gamma_threshold(k: usize) -> f64 {
    (k * (k + 1)) as f64 / 2.0
}

/// Penalty of [`PrimalStabilization::Lemma`] on every element.
pub fn stabilization_primal(mesh: &Mesh, k: usize, gamma: f64) -> Result<Vec<[f64; 3]>> {
    let threshold = gamma_threshold(k);
    if !(gamma > threshold) {
        return Err(Error::Stabilization {
            gamma,
            threshold,
            degree: k,
        });
    }
    Ok((0..mesh.num_elements())
        .map(|e| {
            let g = mesh.element_geometry(e);
            let s: f64 = g.facets.iter().map(|f| f.length * f.length).sum::<f64>() / g.area;
            let a = mesh.coefficient(e);
            g.facets.map(|f| a * gamma / f.length * s)
        })
        .collect())
}

/// Penalty of [`PrimalStabilization::Scaled`] on every element.
pub fn scaled_stabilization(mesh: &Mesh, k: usize) -> Vec<[f64; 3]> {
    let c = 10.0 * (k * k) as f64;
    (0..mesh.num_elements())
        .map(|e| {
            let a = mesh.coefficient(e);
            mesh.element_geometry(e).facets.map(|f| c * a / f.length)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrimalOptions {
    pub k: usize,
    /// 0 for facet degree `k`, 1 for facet degree `k - 1`.
    pub delta: usize,
    pub stabilization: PrimalStabilization,
}

impl PrimalOptions {
    pub fn new(k: usize) -> Self {
        PrimalOptions {
            k,
            delta: 0,
            stabilization: PrimalStabilization::Scaled,
        }
    }

    pub fn facet_degree(&self) -> usize {
        self.k - self.delta
    }

    fn validate(&self) -> Result<()> {
        if self.k < 1 {
            return Err(Error::Config("primal scheme needs k >= 1".into()));
        }
        if self.delta > 1 {
            return Err(Error::Config(format!("delta must be 0 or 1, got {}", self.delta)));
        }
        Ok(())
    }

    fn alpha(&self, mesh: &Mesh) -> Result<Vec<[f64; 3]>> {
        match &self.stabilization {
            PrimalStabilization::Lemma { gamma } => stabilization_primal(mesh, self.k, *gamma),
            PrimalStabilization::Scaled => Ok(scaled_stabilization(mesh, self.k)),
            PrimalStabilization::Custom(v) if v.len() == mesh.num_elements() => Ok(v.clone()),
            PrimalStabilization::Custom(v) => Err(Error::Config(format!(
                "{} penalty triples for {} elements",
                v.len(),
                mesh.num_elements()
            ))),
        }
    }
}

/// Element blocks over `(u, u^)`: the facet unknowns are ordered by local
/// facet, then Legendre index.
#[derive(Debug, Clone)]
pub struct PrimalBlocks {
    pub a_uu: DenseMatrix,
    pub a_ul: DenseMatrix,
    pub a_ll: DenseMatrix,
    pub load: Vec<f64>,
}

/// Element matrices of the primal form; `load` holds `(f, phi_i)_K`.
pub fn local_matrices_primal(
    mesh: &Mesh,
    e: usize,
    k: usize,
    delta: usize,
    alpha: [f64; 3],
    load: &[f64],
) -> Result<PrimalBlocks> {
    let n = dim_p(k);
    let p = k - delta;
    let nf = p + 1;
    let a = mesh.coefficient(e);
    let mut a_uu = stiffness(mesh, e, k)?;
    for i in 0..n {
        for v in a_uu.row_mut(i).iter_mut() {
            *v *= a;
        }
    }
    let mut a_ul = DenseMatrix::zeros(n, 3 * nf);
    let mut a_ll = DenseMatrix::zeros(3 * nf, 3 * nf);
    for (j, &al) in alpha.iter().enumerate() {
        let ops = facet_ops(mesh, e, j, k, p)?;
        let len = ops.length;
        // normal-derivative moments <a grad phi_m . n, phi_i>_F need the full
        // trace, so use a facet space rich enough to hold phi_i exactly
        let full = facet_ops(mesh, e, j, k, k)?;
        for i in 0..n {
            for m in 0..n {
                let mut g_im = 0.0;
                let mut g_mi = 0.0;
                let mut pen = 0.0;
                for l in 0..=k {
                    g_im += full.trace[(l, i)] * full.normal_grad[(l, m)];
                    g_mi += full.trace[(l, m)] * full.normal_grad[(l, i)];
                }
                for l in 0..nf {
                    pen += ops.trace[(l, i)] * ops.trace[(l, m)];
                }
                a_uu[(i, m)] += len * (al * pen - a * (g_im + g_mi));
            }
            for l in 0..nf {
                a_ul[(i, j * nf + l)] = len * (a * ops.normal_grad[(l, i)] - al * ops.trace[(l, i)]);
            }
        }
        for l in 0..nf {
            a_ll[(j * nf + l, j * nf + l)] = al * len;
        }
    }
    Ok(PrimalBlocks {
        a_uu,
        a_ul,
        a_ll,
        load: load[..n].to_vec(),
    })
}

/// Solution of the primal scheme on one mesh.
#[derive(Debug, Clone)]
pub struct PrimalSolution {
    pub k: usize,
    pub delta: usize,
    pub mesh: Mesh,
    /// Cell coefficients per element.
    pub u: Vec<Vec<f64>>,
    /// Trace coefficients per facet (global orientation).
    pub trace: Vec<Vec<f64>>,
    pub alpha: Vec<[f64; 3]>,
    pub gamma: Option<f64>,
    /// `(f, phi_i)_K` per element for `i < dim P_k`.
    pub loads: Vec<Vec<f64>>,
    pub n_skeleton: usize,
    /// Relative residual of the skeleton solve.
    pub residual: f64,
}

impl PrimalSolution {
    pub fn facet_degree(&self) -> usize {
        self.k - self.delta
    }

    /// `dim V_h + dim M^0_h`.
    pub fn ndof_total(&self) -> usize {
        self.mesh.num_elements() * dim_p(self.k) + self.n_skeleton
    }

    /// Trace coefficients of element `e`, ordered by local facet.
    pub fn element_trace(&self, e: usize) -> Vec<f64> {
        self.mesh
            .element_facets(e)
            .iter()
            .flat_map(|&f| self.trace[f].iter().copied())
            .collect()
    }
}

struct Condensed {
    /// `A_uu^{-1} A_ul`
    x: DenseMatrix,
    /// `A_uu^{-1} b`
    y: Vec<f64>,
    contribution: ElementContribution,
}

fn condense(blocks: &PrimalBlocks, dofs: Vec<SkeletonDof>) -> Result<Condensed> {
    let lu = Lu::factor(&blocks.a_uu)?;
    let x = lu.solve_matrix(&blocks.a_ul);
    let y = lu.solve(&blocks.load);
    let mut s = blocks.a_ll.clone();
    let ax = blocks.a_ul.transpose().matmul(&x);
    let m = s.nrows();
    for i in 0..m {
        for j in 0..m {
            s[(i, j)] -= ax[(i, j)];
        }
    }
    let asym = s.asymmetry();
    if asym > 1e-10 {
        return Err(Error::Dimension(format!("element Schur complement asymmetric ({asym:e})")));
    }
    s.symmetrize();
    let load: Vec<f64> = blocks.a_ul.matvec_t(&y).iter().map(|v| -v).collect();
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

fn prepare(problem: &ProblemSpec, opts: &PrimalOptions) -> Result<Prepared> {
    opts.validate()?;
    let mesh = &problem.mesh;
    let alpha = opts.alpha(mesh)?;
    let space = SkeletonSpace::new(problem, opts.facet_degree())?;
    let loads = problem.element_loads(mesh, opts.k)?;
    let condensed = exec::try_map(mesh.num_elements(), |e| {
        let blocks = local_matrices_primal(mesh, e, opts.k, opts.delta, alpha[e], &loads[e])?;
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
pub fn condensed_system_primal(problem: &ProblemSpec, opts: &PrimalOptions) -> Result<SparseSpd> {
    Ok(prepare(problem, opts)?.system)
}

pub fn solve_primal(problem: &ProblemSpec, opts: &PrimalOptions) -> Result<PrimalSolution> {
    let prep = prepare(problem, opts)?;
    let mesh = &problem.mesh;
    let sol = prep.system.solve()?;
    let trace: Vec<Vec<f64>> = (0..mesh.num_facets())
        .map(|f| prep.space.facet_values(f, &sol.x))
        .collect();
    let u = exec::map(mesh.num_elements(), |e| {
        let c = &prep.condensed[e];
        let lam: Vec<f64> = mesh
            .element_facets(e)
            .iter()
            .flat_map(|&f| trace[f].iter().copied())
            .collect();
        let xl = c.x.matvec(&lam);
        c.y.iter().zip(&xl).map(|(y, x)| y - x).collect()
    });
    Ok(PrimalSolution {
        k: opts.k,
        delta: opts.delta,
        mesh: mesh.clone(),
        u,
        trace,
        alpha: prep.alpha,
        gamma: match opts.stabilization {
            PrimalStabilization::Lemma { gamma } => Some(gamma),
            _ => None,
        },
        loads: prep.loads,
        n_skeleton: prep.space.num_free(),
        residual: sol.residual,
    })
}

/// `sigma^ . n = a grad u_h . n - alpha (P_M u_h - u^_h)` on every element
/// facet, in `P_{k-delta}(F)`.
pub fn numerical_flux_primal(sol: &PrimalSolution) -> Result<NormalFlux> {
    let mesh = &sol.mesh;
    let p = sol.facet_degree();
    let values = exec::try_map(mesh.num_elements(), |e| {
        let a = mesh.coefficient(e);
        let facets = mesh.element_facets(e);
        let mut out: [Vec<f64>; 3] = Default::default();
        for j in 0..3 {
            let ops = facet_ops(mesh, e, j, sol.k, p)?;
            let dn = ops.normal_grad.matvec(&sol.u[e]);
            let tr = ops.trace.matvec(&sol.u[e]);
            let lam = &sol.trace[facets[j]];
            out[j] = (0..=p)
                .map(|l| a * dn[l] - sol.alpha[e][j] * (tr[l] - lam[l]))
                .collect();
        }
        Ok(out)
    })?;
    Ok(NormalFlux { degree: p, values })
}

/// Penalty jump `sum_F alpha <P_M u_h - u^_h, P_M u_h - u^_h>_F` per element.
pub fn jump_primal(sol: &PrimalSolution) -> Result<Vec<f64>> {
    let mesh = &sol.mesh;
    exec::try_map(mesh.num_elements(), |e| {
        let facets = mesh.element_facets(e);
        let mut s = 0.0;
        for j in 0..3 {
            let ops = facet_ops(mesh, e, j, sol.k, sol.facet_degree())?;
            let tr = ops.trace.matvec(&sol.u[e]);
            let d2: f64 = tr.iter().zip(&sol.trace[facets[j]]).map(|(a, b)| (a - b).powi(2)).sum();
            s += sol.alpha[e][j] * ops.length * d2;
        }
        Ok(s)
    })
}
