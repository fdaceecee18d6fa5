//! Reference computations that share no code with the element routines of
//! the library: Golub-Welsch quadrature, bilinear forms evaluated pointwise
//! on physical elements, and monolithic dense solves of the uncondensed
//! systems.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use hdg_core::basis::{cell_basis, dim_p, FacetBasis};
use hdg_core::hdg_mixed::{local_matrices_mixed, stabilization_mixed, MixedOptions};
use hdg_core::hdg_primal::{local_matrices_primal, PrimalOptions, PrimalStabilization};
use hdg_core::hdg_primal::{scaled_stabilization, stabilization_primal};
use hdg_core::linalg::SkeletonDof;
use hdg_core::mesh::Mesh;
use hdg_core::problem::ProblemSpec;
use hdg_core::skeleton::SkeletonSpace;

/// Gauss-Legendre rule on `[0, 1]` from the eigen-decomposition of the
/// Jacobi matrix.
pub fn gauss01(n: usize) -> Vec<(f64, f64)> {
    let mut j = DMatrix::<f64>::zeros(n, n);
    for i in 1..n {
        let b = i as f64 / ((4 * i * i - 1) as f64).sqrt();
        j[(i, i - 1)] = b;
        j[(i - 1, i)] = b;
    }
    let eig = SymmetricEigen::new(j);
    let mut rule: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let v = eig.eigenvectors[(0, i)];
            (0.5 * (eig.eigenvalues[i] + 1.0), v * v)
        })
        .collect();
    rule.sort_by(|a, b| a.0.total_cmp(&b.0));
    rule
}

/// Collapsed tensor rule on a physical triangle: `(point, weight)`.
pub fn triangle_rule(v: [[f64; 2]; 3], n: usize) -> Vec<([f64; 2], f64)> {
    let g = gauss01(n);
    let area2 = ((v[1][0] - v[0][0]) * (v[2][1] - v[0][1]) - (v[2][0] - v[0][0]) * (v[1][1] - v[0][1])).abs();
    let mut out = Vec::with_capacity(n * n);
    for &(s, ws) in &g {
        for &(t, wt) in &g {
            let (l1, l2) = (s * (1.0 - t), s * t);
            let l0 = 1.0 - l1 - l2;
            let x = [
                l0 * v[0][0] + l1 * v[1][0] + l2 * v[2][0],
                l0 * v[0][1] + l1 * v[1][1] + l2 * v[2][1],
            ];
            out.push((x, ws * wt * s * area2));
        }
    }
    out
}

/// Point evaluation of a cell expansion and its physical gradient.
pub struct CellField<'a> {
    pub mesh: &'a Mesh,
    pub e: usize,
    pub k: usize,
}

impl CellField<'_> {
    pub fn value(&self, c: &[f64], x: [f64; 2]) -> f64 {
        let b = cell_basis(self.k);
        let mut v = vec![0.0; b.dim()];
        b.eval(self.mesh.element_map(self.e).to_reference(x), &mut v);
        v.iter().zip(c).map(|(a, b)| a * b).sum()
    }

    pub fn grad(&self, c: &[f64], x: [f64; 2]) -> [f64; 2] {
        let map = self.mesh.element_map(self.e);
        let b = cell_basis(self.k);
        let mut g = vec![[0.0; 2]; b.dim()];
        b.eval_grad(map.to_reference(x), &mut g);
        let v = self.mesh.element_vertices(self.e);
        let (a, bb, cc, d) = (v[1][0] - v[0][0], v[2][0] - v[0][0], v[1][1] - v[0][1], v[2][1] - v[0][1]);
        let det = a * d - bb * cc;
        let mut r = [0.0; 2];
        for (gi, ci) in g.iter().zip(c) {
            r[0] += ci * (d * gi[0] - cc * gi[1]) / det;
            r[1] += ci * (-bb * gi[0] + a * gi[1]) / det;
        }
        r
    }
}

/// A facet of element `e` seen from outside the library: physical
/// endpoints, outward normal, length, and the global parameter map.
pub struct PhysFacet {
    pub a: [f64; 2],
    pub b: [f64; 2],
    pub normal: [f64; 2],
    pub length: f64,
    /// Global parameter start point (lower vertex index).
    pub origin: [f64; 2],
}

pub fn phys_facet(mesh: &Mesh, e: usize, j: usize) -> PhysFacet {
    let v = mesh.element_vertices(e);
    let (a, b, c) = (v[(j + 1) % 3], v[(j + 2) % 3], v[j]);
    let length = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
    let mut normal = [(b[1] - a[1]) / length, -(b[0] - a[0]) / length];
    let mid = [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])];
    if normal[0] * (c[0] - mid[0]) + normal[1] * (c[1] - mid[1]) > 0.0 {
        normal = [-normal[0], -normal[1]];
    }
    let f = mesh.facet(mesh.element_facets(e)[j]);
    let origin = mesh.vertices()[f.vertices[0]];
    PhysFacet {
        a,
        b,
        normal,
        length,
        origin,
    }
}

impl PhysFacet {
    /// Points, weights (physical) and global parameters.
    pub fn rule(&self, n: usize) -> Vec<([f64; 2], f64, f64)> {
        gauss01(n)
            .into_iter()
            .map(|(t, w)| {
                let x = [self.a[0] + t * (self.b[0] - self.a[0]), self.a[1] + t * (self.b[1] - self.a[1])];
                let s = ((x[0] - self.origin[0]).powi(2) + (x[1] - self.origin[1]).powi(2)).sqrt() / self.length;
                (x, w * self.length, s)
            })
            .collect()
    }
}

fn facet_value(c: &[f64], s: f64) -> f64 {
    FacetBasis::new(c.len() - 1).values(s).iter().zip(c).map(|(a, b)| a * b).sum()
}

/// `L2` projection onto `P_p(F)` of a function along the facet, as a
/// function of the global parameter.
fn project_on_facet(f: &PhysFacet, p: usize, g: impl Fn([f64; 2]) -> f64) -> Vec<f64> {
    let lb = FacetBasis::new(p);
    let mut c = vec![0.0; p + 1];
    for (x, w, s) in f.rule(20) {
        let gx = g(x);
        for (cl, l) in c.iter_mut().zip(lb.values(s)) {
            *cl += w / f.length * gx * l;
        }
    }
    c
}

/// Primal local form `B((u, u^), (v, v^))` by direct quadrature. Facet
/// functions are per local facet, in the global parameter.
#[allow(clippy::too_many_arguments)]
pub fn primal_form(
    mesh: &Mesh,
    e: usize,
    k: usize,
    p: usize,
    alpha: [f64; 3],
    (u, uh): (&[f64], &[Vec<f64>; 3]),
    (v, vh): (&[f64], &[Vec<f64>; 3]),
) -> (f64, f64) {
    let a = mesh.coefficient(e);
    let cf = CellField { mesh, e, k };
    let mut terms = [0.0; 4];
    for (x, w) in triangle_rule(mesh.element_vertices(e), k + 3) {
        let (gu, gv) = (cf.grad(u, x), cf.grad(v, x));
        terms[0] += w * a * (gu[0] * gv[0] + gu[1] * gv[1]);
    }
    for j in 0..3 {
        let f = phys_facet(mesh, e, j);
        let pu = project_on_facet(&f, p, |x| cf.value(u, x));
        let pv = project_on_facet(&f, p, |x| cf.value(v, x));
        for (x, w, s) in f.rule(k + 3) {
            let (gu, gv) = (cf.grad(u, x), cf.grad(v, x));
            let dnu = a * (gu[0] * f.normal[0] + gu[1] * f.normal[1]);
            let dnv = a * (gv[0] * f.normal[0] + gv[1] * f.normal[1]);
            let (uu, vv) = (cf.value(u, x), cf.value(v, x));
            let (uhs, vhs) = (facet_value(&uh[j], s), facet_value(&vh[j], s));
            terms[1] -= w * dnu * (vv - vhs);
            terms[2] -= w * dnv * (uu - uhs);
            terms[3] += w * alpha[j] * (facet_value(&pu, s) - uhs) * (facet_value(&pv, s) - vhs);
        }
    }
    (terms.iter().sum(), terms.iter().map(|t| t.abs()).sum())
}

/// Mixed local form
/// `(a^-1 s, t) + (u, div t) - <u^, t.n> - (div s, v) + <alpha (u - u^), v>
///  + <s.n - alpha (u - u^), v^>` by direct quadrature.
pub fn mixed_form(
    mesh: &Mesh,
    e: usize,
    k: usize,
    alpha: [f64; 3],
    (s, u, uh): (&[f64], &[f64], &[Vec<f64>; 3]),
    (t, v, vh): (&[f64], &[f64], &[Vec<f64>; 3]),
) -> (f64, f64) {
    let n = dim_p(k);
    let a = mesh.coefficient(e);
    let cf = CellField { mesh, e, k };
    let vec_at = |c: &[f64], x| [cf.value(&c[..n], x), cf.value(&c[n..], x)];
    let div_at = |c: &[f64], x| cf.grad(&c[..n], x)[0] + cf.grad(&c[n..], x)[1];
    let mut terms = [0.0; 6];
    for (x, w) in triangle_rule(mesh.element_vertices(e), k + 3) {
        let (sx, tx) = (vec_at(s, x), vec_at(t, x));
        terms[0] += w / a * (sx[0] * tx[0] + sx[1] * tx[1]);
        terms[1] += w * cf.value(u, x) * div_at(t, x);
        terms[3] -= w * div_at(s, x) * cf.value(v, x);
    }
    for j in 0..3 {
        let f = phys_facet(mesh, e, j);
        for (x, w, p) in f.rule(k + 3) {
            let (sx, tx) = (vec_at(s, x), vec_at(t, x));
            let sn = sx[0] * f.normal[0] + sx[1] * f.normal[1];
            let tn = tx[0] * f.normal[0] + tx[1] * f.normal[1];
            let (uhs, vhs) = (facet_value(&uh[j], p), facet_value(&vh[j], p));
            let jump = cf.value(u, x) - uhs;
            terms[2] -= w * uhs * tn;
            terms[4] += w * alpha[j] * jump * cf.value(v, x);
            terms[5] += w * (sn - alpha[j] * jump) * vhs;
        }
    }
    (terms.iter().sum(), terms.iter().map(|t| t.abs()).sum())
}

fn primal_alpha(mesh: &Mesh, opts: &PrimalOptions) -> Vec<[f64; 3]> {
    match &opts.stabilization {
        PrimalStabilization::Lemma { gamma } => stabilization_primal(mesh, opts.k, *gamma).unwrap(),
        PrimalStabilization::Scaled => scaled_stabilization(mesh, opts.k),
        PrimalStabilization::Custom(v) => v.clone(),
    }
}

/// Dense system over all cell unknowns followed by the free skeleton
/// unknowns, assembled element by element from `blocks(e) = (matrix over
/// [cell, facet], cell load)`.
fn monolithic(
    problem: &ProblemSpec,
    space: &SkeletonSpace,
    ncell: usize,
    blocks: impl Fn(usize) -> (DMatrix<f64>, Vec<f64>),
) -> DVector<f64> {
    let mesh = &problem.mesh;
    let ne = mesh.num_elements();
    let dim = ne * ncell + space.num_free();
    let mut a = DMatrix::<f64>::zeros(dim, dim);
    let mut rhs = DVector::<f64>::zeros(dim);
    for e in 0..ne {
        let (m, load) = blocks(e);
        let dofs = space.element_dofs(mesh, e);
        // Global row/column of each local index, or the fixed value.
        let map: Vec<Result<usize, f64>> = (0..ncell)
            .map(|i| Ok(e * ncell + i))
            .chain(dofs.iter().map(|d| match d {
                SkeletonDof::Free(g) => Ok(ne * ncell + g),
                SkeletonDof::Fixed(v) => Err(*v),
            }))
            .collect();
        for (i, ri) in map.iter().enumerate() {
            let Ok(r) = ri else { continue };
            if i < ncell {
                rhs[*r] += load[i];
            }
            for (j, cj) in map.iter().enumerate() {
                match cj {
                    Ok(c) => a[(*r, *c)] += m[(i, j)],
                    Err(val) => rhs[*r] -= m[(i, j)] * val,
                }
            }
        }
    }
    a.lu().solve(&rhs).expect("monolithic system is singular")
}

fn to_dmatrix(rows: usize, cols: usize, f: impl Fn(usize, usize) -> f64) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, f)
}

/// Monolithic primal solve: cell coefficients and trace coefficients per
/// facet.
pub fn monolithic_primal(problem: &ProblemSpec, opts: &PrimalOptions) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let mesh = &problem.mesh;
    let k = opts.k;
    let n = dim_p(k);
    let space = SkeletonSpace::new(problem, k - opts.delta).unwrap();
    let loads = problem.element_loads(mesh, k).unwrap();
    let alpha = primal_alpha(mesh, opts);
    let x = monolithic(problem, &space, n, |e| {
        let b = local_matrices_primal(mesh, e, k, opts.delta, alpha[e], &loads[e]).unwrap();
        let nl = b.a_ll.nrows();
        let m = to_dmatrix(n + nl, n + nl, |i, j| match (i < n, j < n) {
            (true, true) => b.a_uu[(i, j)],
            (true, false) => b.a_ul[(i, j - n)],
            (false, true) => b.a_ul[(j, i - n)],
            (false, false) => b.a_ll[(i - n, j - n)],
        });
        (m, b.load.clone())
    });
    split(problem, &space, n, &x)
}

/// Monolithic mixed solve: `(sigma, u)` coefficients per element and trace
/// coefficients per facet.
pub fn monolithic_mixed(problem: &ProblemSpec, opts: &MixedOptions) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let mesh = &problem.mesh;
    let k = opts.k;
    let n = 3 * dim_p(k);
    let space = SkeletonSpace::new(problem, k).unwrap();
    let loads = problem.element_loads(mesh, k).unwrap();
    let alpha = stabilization_mixed(mesh, &opts.stabilization).unwrap();
    let x = monolithic(problem, &space, n, |e| {
        let b = local_matrices_mixed(mesh, e, k, alpha[e], &loads[e]).unwrap();
        let nl = b.b_ll.nrows();
        let m = to_dmatrix(n + nl, n + nl, |i, j| match (i < n, j < n) {
            (true, true) => b.b_xx[(i, j)],
            (true, false) => b.b_xl[(i, j - n)],
            (false, true) => b.b_lx[(i - n, j)],
            (false, false) => b.b_ll[(i - n, j - n)],
        });
        (m, b.load.clone())
    });
    split(problem, &space, n, &x)
}

fn split(problem: &ProblemSpec, space: &SkeletonSpace, n: usize, x: &DVector<f64>) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let ne = problem.mesh.num_elements();
    let cells = (0..ne).map(|e| x.rows(e * n, n).iter().copied().collect()).collect();
    let free: Vec<f64> = x.rows(ne * n, space.num_free()).iter().copied().collect();
    let traces = (0..problem.mesh.num_facets()).map(|f| space.facet_values(f, &free)).collect();
    (cells, traces)
}
