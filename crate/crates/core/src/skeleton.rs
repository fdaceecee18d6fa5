//! Facet unknowns shared by both schemes, element operators that couple cell
//! and facet polynomials, and numerical normal fluxes.
//!
//! A facet polynomial is stored as coefficients of the orthonormal Legendre
//! basis in the facet's global parameter (running from its lower to its
//! higher vertex index), so both adjacent elements read the same values.

use crate::basis::{cell_basis, dim_p, facet_table, project_facet_with, FacetBasis};
use crate::error::Result;
use crate::linalg::{DenseMatrix, SkeletonDof};
use crate::mesh::Mesh;
use crate::problem::ProblemSpec;

/// Discrete trace space `P_p(F)` on every facet, with Dirichlet facets fixed
/// to the projection of the boundary data.
#[derive(Debug, Clone)]
pub struct SkeletonSpace {
    pub degree: usize,
    /// First free index of each interior facet.
    offsets: Vec<Option<usize>>,
    /// Projected Dirichlet data on each boundary facet.
    boundary: Vec<Option<Vec<f64>>>,
    n_free: usize,
}

impl SkeletonSpace {
    pub fn new(problem: &ProblemSpec, degree: usize) -> Result<SkeletonSpace> {
        let mesh = &problem.mesh;
        let nf = degree + 1;
        let mut offsets = vec![None; mesh.num_facets()];
        let mut n_free = 0;
        for (f, facet) in mesh.facets().iter().enumerate() {
            if !facet.is_boundary() {
                offsets[f] = Some(n_free);
                n_free += nf;
            }
        }
        let boundary = crate::exec::try_map(mesh.num_facets(), |f| {
            let facet = mesh.facet(f);
            match facet.boundary_tag {
                None => Ok(None),
                Some(tag) => {
                    let g = problem.dirichlet(tag);
                    let [a, b] = facet.vertices.map(|v| mesh.vertices()[v]);
                    project_facet_with(|x| g(x), degree, a, b, 2 * degree + 10).map(Some)
                }
            }
        })?;
        Ok(SkeletonSpace {
            degree,
            offsets,
            boundary,
            n_free,
        })
    }

    /// Dimension of `P_p(F)`.
    pub fn facet_dim(&self) -> usize {
        self.degree + 1
    }

    pub fn num_free(&self) -> usize {
        self.n_free
    }

    /// Skeleton DOFs of element `e`, ordered by local facet, then Legendre
    /// index.
    pub fn element_dofs(&self, mesh: &Mesh, e: usize) -> Vec<SkeletonDof> {
        let nf = self.facet_dim();
        let mut dofs = Vec::with_capacity(3 * nf);
        for f in mesh.element_facets(e) {
            match (self.offsets[f], &self.boundary[f]) {
                (Some(o), _) => dofs.extend((0..nf).map(|l| SkeletonDof::Free(o + l))),
                (None, Some(g)) => dofs.extend(g.iter().map(|&v| SkeletonDof::Fixed(v))),
                (None, None) => unreachable!("facet is neither interior nor boundary"),
            }
        }
        dofs
    }

    /// Facet coefficients given the free solution vector.
    pub fn facet_values(&self, f: usize, x: &[f64]) -> Vec<f64> {
        match (self.offsets[f], &self.boundary[f]) {
            (Some(o), _) => x[o..o + self.facet_dim()].to_vec(),
            (None, Some(g)) => g.clone(),
            (None, None) => unreachable!("facet is neither interior nor boundary"),
        }
    }
}

/// Couplings between `P_k(K)` and `P_p(F)` on local facet `j`, in the
/// global facet parameter.
#[derive(Debug, Clone)]
pub struct FacetOps {
    pub length: f64,
    pub normal: [f64; 2],
    /// `trace[(l, i)] = int_0^1 L_l phi_i ds`, i.e. the Legendre coefficients
    /// of the trace of `phi_i`.
    pub trace: DenseMatrix,
    /// `normal_grad[(l, i)] = int_0^1 L_l (grad phi_i . n) ds`.
    pub normal_grad: DenseMatrix,
}

pub fn facet_ops(mesh: &Mesh, e: usize, j: usize, k: usize, p: usize) -> Result<FacetOps> {
    let geo = mesh.element_geometry(e).facets[j];
    let map = mesh.element_map(e);
    let table = facet_table(k, k + p + 2, j)?;
    let lb = FacetBasis::new(p);
    let n = dim_p(k);
    let mut trace = DenseMatrix::zeros(p + 1, n);
    let mut normal_grad = DenseMatrix::zeros(p + 1, n);
    let mut l = vec![0.0; p + 1];
    for (q, (&t, &w)) in table.params.iter().zip(&table.weights).enumerate() {
        let s = if geo.flipped { 1.0 - t } else { t };
        lb.eval(s, &mut l);
        let vals = table.tab.value(q);
        let grads = table.tab.grad(q);
        for i in 0..n {
            let g = map.grad(grads[i]);
            let dn = g[0] * geo.normal[0] + g[1] * geo.normal[1];
            for (lj, &ll) in l.iter().enumerate() {
                trace[(lj, i)] += w * ll * vals[i];
                normal_grad[(lj, i)] += w * ll * dn;
            }
        }
    }
    Ok(FacetOps {
        length: geo.length,
        normal: geo.normal,
        trace,
        normal_grad,
    })
}

/// `int_K grad phi_i . grad phi_j` on element `e` for `P_k`.
pub fn stiffness(mesh: &Mesh, e: usize, k: usize) -> Result<DenseMatrix> {
    let map = mesh.element_map(e);
    let table = crate::basis::cell_table(k, 2 * k)?;
    let n = dim_p(k);
    let mut a = DenseMatrix::zeros(n, n);
    let mut g = vec![[0.0; 2]; n];
    for (q, &w) in table.rule.weights.iter().enumerate() {
        for (gi, r) in g.iter_mut().zip(table.tab.grad(q)) {
            *gi = map.grad(*r);
        }
        let wq = w * map.det;
        for i in 0..n {
            for m in 0..=i {
                let v = wq * (g[i][0] * g[m][0] + g[i][1] * g[m][1]);
                a[(i, m)] += v;
                if m != i {
                    a[(m, i)] += v;
                }
            }
        }
    }
    Ok(a)
}

/// `d[c][(i, m)] = int_K phi_i d_c phi_m` for test degree `kt` and trial
/// degree `km`.
pub fn derivative_moments(mesh: &Mesh, e: usize, kt: usize, km: usize) -> Result<[DenseMatrix; 2]> {
    let map = mesh.element_map(e);
    let kk = kt.max(km);
    let table = crate::basis::cell_table(kk, kt + km)?;
    let (nt, nm) = (dim_p(kt), dim_p(km));
    let mut d = [DenseMatrix::zeros(nt, nm), DenseMatrix::zeros(nt, nm)];
    for (q, &w) in table.rule.weights.iter().enumerate() {
        let vals = table.tab.value(q);
        let grads = table.tab.grad(q);
        let wq = w * map.det;
        for m in 0..nm {
            let g = map.grad(grads[m]);
            for i in 0..nt {
                d[0][(i, m)] += wq * vals[i] * g[0];
                d[1][(i, m)] += wq * vals[i] * g[1];
            }
        }
    }
    Ok(d)
}

/// Normal component of a numerical flux on every (element, local facet)
/// pair, oriented by that element's outward normal, as Legendre
/// coefficients in the global facet parameter.
#[derive(Debug, Clone)]
pub struct NormalFlux {
    pub degree: usize,
    pub values: Vec<[Vec<f64>; 3]>,
}

impl NormalFlux {
    pub fn zeros(nelems: usize, degree: usize) -> Self {
        NormalFlux {
            degree,
            values: vec![[vec![0.0; degree + 1], vec![0.0; degree + 1], vec![0.0; degree + 1]]; nelems],
        }
    }
}

/// Per-element conservation residuals and the worst interior-facet jump.
#[derive(Debug, Clone)]
pub struct ConservationReport {
    /// `(f, 1)_K + <flux . n, 1>_dK`.
    pub residuals: Vec<f64>,
    /// `|(f, 1)_K| + sum_F |F| ||flux||_F`, the natural size of each residual.
    pub scales: Vec<f64>,
    /// `max_F ||[[flux]]||_F / ||{flux}||_F` over interior facets, with the
    /// denominator floored at `1e-3` times its largest value.
    pub max_jump: f64,
}

impl ConservationReport {
    pub fn max_relative_residual(&self) -> f64 {
        self.residuals
            .iter()
            .zip(&self.scales)
            .map(|(r, s)| if *s > 0.0 { r.abs() / s } else { r.abs() })
            .fold(0.0, f64::max)
    }
}

/// Check local conservation and single-valuedness of a normal flux. `loads`
/// holds `(f, phi_i)_K` per element; only the first entry is used.
pub fn check_conservation(mesh: &Mesh, flux: &NormalFlux, loads: &[Vec<f64>]) -> ConservationReport {
    let phi0 = cell_basis(0).poly(0).eval(0.0, 0.0);
    let mut residuals = Vec::with_capacity(mesh.num_elements());
    let mut scales = Vec::with_capacity(mesh.num_elements());
    for e in 0..mesh.num_elements() {
        let geo = mesh.element_geometry(e);
        let f1 = loads[e][0] / phi0;
        let mut r = f1;
        let mut s = f1.abs();
        for j in 0..3 {
            let c = &flux.values[e][j];
            r += geo.facets[j].length * c[0];
            s += geo.facets[j].length * c.iter().map(|v| v * v).sum::<f64>().sqrt();
        }
        residuals.push(r);
        scales.push(s);
    }
    let mut pairs = Vec::new();
    for f in mesh.facets() {
        let Some(right) = f.right else { continue };
        let a = &flux.values[f.left.element][f.left.local];
        let b = &flux.values[right.element][right.local];
        // outward normals are opposite, so a single-valued flux has a = -b
        let jump: f64 = a.iter().zip(b).map(|(x, y)| (x + y).powi(2)).sum::<f64>().sqrt();
        let mean: f64 = a.iter().zip(b).map(|(x, y)| (0.5 * (x - y)).powi(2)).sum::<f64>().sqrt();
        pairs.push((jump, mean));
    }
    // Facets carrying almost no flux are measured against the largest one.
    let floor = 1e-3 * pairs.iter().map(|p| p.1).fold(0.0, f64::max);
    let max_jump = pairs
        .iter()
        .map(|&(j, m)| if m.max(floor) > 0.0 { j / m.max(floor) } else { j })
        .fold(0.0, f64::max);
    ConservationReport {
        residuals,
        scales,
        max_jump,
    }
}
