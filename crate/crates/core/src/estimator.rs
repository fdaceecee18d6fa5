//! Guaranteed a posteriori error estimators and reference error evaluation.
//!
//! For both schemes the element indicator is `eta_K^2 = eta_CF,K^2 +
//! eta_NC,K^2`: `eta_CF` measures the distance between the discrete flux and
//! an equilibrated `H(div)` flux (plus a data oscillation term), `eta_NC` the
//! distance between the discrete field and the gradient of a continuous
//! potential. The stabilization jump is reported separately.

use std::f64::consts::PI;

use crate::basis::{cell_basis, cell_table, dim_p, CellBasis, ElementMap, VectorCellBasis};
use crate::error::{Error, Result};
use crate::exec;
use crate::hdg_mixed::{jump_mixed, MixedSolution};
use crate::hdg_primal::{jump_primal, PrimalSolution};
use crate::mesh::Mesh;
use crate::postprocess::{
    average_potential, equilibrated_flux_mixed, equilibrated_flux_primal, local_potential_mixed,
    verify_equilibration, EquilibratedFlux, EquilibrationReport,
};
use crate::problem::{ExactSolution, ProblemSpec};

/// Quadrature degree of the reference error integrals.
pub const ERROR_QUADRATURE_DEGREE: usize = 25;
/// Levels of red refinement applied to sub-triangles touching a singular
/// point of the exact solution.
pub const SINGULAR_REFINEMENT_LEVELS: usize = 4;

/// Per-element estimator contributions and their global sums.
#[derive(Debug, Clone)]
pub struct ErrorEstimate {
    pub eta_cf: Vec<f64>,
    pub eta_nc: Vec<f64>,
    /// Stabilization jump term, squared.
    pub jump: Vec<f64>,
    /// Jump restricted to facets that carry no stabilization in single-facet
    /// mode (mixed scheme only), squared.
    pub off_facet_jump: Option<Vec<f64>>,
    pub osc: Vec<f64>,
    pub flux: EquilibratedFlux,
    /// Continuous potential, cell coefficients of degree `potential_degree`.
    pub potential: Vec<Vec<f64>>,
    pub potential_degree: usize,
    pub equilibration: EquilibrationReport,
}

impl ErrorEstimate {
    /// `eta_K^2` per element.
    pub fn indicators(&self) -> Vec<f64> {
        self.eta_cf.iter().zip(&self.eta_nc).map(|(a, b)| a * a + b * b).collect()
    }

    pub fn eta(&self) -> f64 {
        self.indicators().iter().sum::<f64>().sqrt()
    }

    pub fn eta_cf_total(&self) -> f64 {
        self.eta_cf.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn eta_nc_total(&self) -> f64 {
        self.eta_nc.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn eta_jump(&self) -> f64 {
        self.jump.iter().sum::<f64>().sqrt()
    }

    /// `eta` with the jump term added.
    pub fn eta_hdg(&self) -> f64 {
        (self.eta().powi(2) + self.jump.iter().sum::<f64>()).sqrt()
    }
}

/// `a^{-1/2} h_K ||f - Pi_m f||_K`, where `loads[e][i] = (f, phi_i)_K` for at
/// least `dim P_m` entries.
pub fn oscillation(problem: &ProblemSpec, loads: &[Vec<f64>], m: usize) -> Result<Vec<f64>> {
    let mesh = &problem.mesh;
    let n = dim_p(m);
    let table = cell_table(m, 2 * m + 10)?;
    Ok(exec::map(mesh.num_elements(), |e| {
        let map = mesh.element_map(e);
        let mut s = 0.0;
        for (q, (xi, w)) in table.rule.iter().enumerate() {
            let proj: f64 = table.tab.value(q).iter().zip(&loads[e][..n]).map(|(p, b)| p * b).sum::<f64>() / map.det;
            s += w * map.det * ((problem.f)(map.to_physical(xi)) - proj).powi(2);
        }
        let h = mesh.element_geometry(e).diameter;
        h * (s / mesh.coefficient(e)).sqrt()
    }))
}

fn grad_at(basis: &CellBasis, map: &ElementMap, c: &[f64], xi: [f64; 2]) -> [f64; 2] {
    let mut g = vec![[0.0; 2]; basis.dim()];
    basis.eval_grad(xi, &mut g);
    let mut r = [0.0; 2];
    for (gi, ci) in g.iter().zip(c) {
        r[0] += ci * gi[0];
        r[1] += ci * gi[1];
    }
    map.grad(r)
}

/// `||field||_K^2` with the degree-`qdeg` rule.
fn norm2(map: &ElementMap, qdeg: usize, field: impl Fn([f64; 2]) -> [f64; 2]) -> Result<f64> {
    let table = cell_table(0, qdeg)?;
    Ok(table
        .rule
        .iter()
        .map(|(xi, w)| {
            let v = field(xi);
            w * map.det * (v[0] * v[0] + v[1] * v[1])
        })
        .sum())
}

pub fn estimate_primal(problem: &ProblemSpec, sol: &PrimalSolution) -> Result<ErrorEstimate> {
    let mesh = &problem.mesh;
    let k = sol.k;
    let flux = equilibrated_flux_primal(sol)?;
    let potential = average_potential(problem, &sol.u, k, k)?;
    let osc = oscillation(problem, &sol.loads, k - 1)?;
    let basis = cell_basis(k);
    let vb = VectorCellBasis::new(k);
    let parts = exec::try_map(mesh.num_elements(), |e| {
        let map = mesh.element_map(e);
        let a = mesh.coefficient(e);
        let cf = norm2(&map, 2 * k, |xi| {
            let s = vb.eval(&flux.coeffs[e], xi);
            let g = grad_at(&basis, &map, &sol.u[e], xi);
            [s[0] - a * g[0], s[1] - a * g[1]]
        })?;
        let diff: Vec<f64> = sol.u[e].iter().zip(&potential[e]).map(|(x, y)| x - y).collect();
        let nc = norm2(&map, 2 * k, |xi| grad_at(&basis, &map, &diff, xi))?;
        Ok(((cf / a).sqrt() + osc[e] / PI, (a * nc).sqrt()))
    })?;
    let (eta_cf, eta_nc) = parts.into_iter().unzip();
    let equilibration = verify_equilibration(mesh, &flux, &sol.loads)?;
    Ok(ErrorEstimate {
        eta_cf,
        eta_nc,
        jump: jump_primal(sol)?,
        off_facet_jump: None,
        osc,
        flux,
        potential,
        potential_degree: k,
        equilibration,
    })
}

pub fn estimate_mixed(problem: &ProblemSpec, sol: &MixedSolution) -> Result<ErrorEstimate> {
    let mesh = &problem.mesh;
    let k = sol.k;
    let flux = equilibrated_flux_mixed(sol)?;
    let local = local_potential_mixed(sol)?;
    let potential = average_potential(problem, &local, k + 1, k + 1)?;
    let osc = oscillation(problem, &sol.loads, k)?;
    let pb = cell_basis(k + 1);
    let sb = VectorCellBasis::new(k);
    let fb = VectorCellBasis::new(k + 1);
    let parts = exec::try_map(mesh.num_elements(), |e| {
        let map = mesh.element_map(e);
        let a = mesh.coefficient(e);
        let cf = norm2(&map, 2 * k + 2, |xi| {
            let s = fb.eval(&flux.coeffs[e], xi);
            let t = sb.eval(&sol.sigma[e], xi);
            [s[0] - t[0], s[1] - t[1]]
        })?;
        let nc = norm2(&map, 2 * k + 2, |xi| {
            let t = sb.eval(&sol.sigma[e], xi);
            let g = grad_at(&pb, &map, &potential[e], xi);
            [t[0] - a * g[0], t[1] - a * g[1]]
        })?;
        Ok(((cf / a).sqrt() + osc[e] / PI, (nc / a).sqrt()))
    })?;
    let (eta_cf, eta_nc) = parts.into_iter().unzip();
    let (jump, off) = jump_mixed(sol)?;
    let equilibration = verify_equilibration(mesh, &flux, &sol.loads)?;
    Ok(ErrorEstimate {
        eta_cf,
        eta_nc,
        jump,
        off_facet_jump: Some(off),
        osc,
        flux,
        potential,
        potential_degree: k + 1,
        equilibration,
    })
}

/// Squared error per element and its total.
#[derive(Debug, Clone)]
pub struct TrueError {
    pub per_element: Vec<f64>,
    pub total: f64,
}

fn touches(tri: &[[f64; 2]; 3], p: [f64; 2]) -> bool {
    let d = |a: [f64; 2], b: [f64; 2], c: [f64; 2]| (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
    let area = d(tri[0], tri[1], tri[2]).abs();
    let tol = 1e-12 * area;
    let s = [d(tri[0], tri[1], p), d(tri[1], tri[2], p), d(tri[2], tri[0], p)];
    s.iter().all(|&v| v >= -tol) || s.iter().all(|&v| v <= tol)
}

/// `int_T g` over a physical triangle, red-refined near `singular` points.
fn integrate(tri: [[f64; 2]; 3], g: &dyn Fn([f64; 2]) -> f64, singular: &[[f64; 2]], level: usize) -> Result<f64> {
    if level < SINGULAR_REFINEMENT_LEVELS && singular.iter().any(|&p| touches(&tri, p)) {
        let mid = |a: [f64; 2], b: [f64; 2]| [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])];
        let (m01, m12, m20) = (mid(tri[0], tri[1]), mid(tri[1], tri[2]), mid(tri[2], tri[0]));
        let children = [
            [tri[0], m01, m20],
            [m01, tri[1], m12],
            [m20, m12, tri[2]],
            [m12, m20, m01],
        ];
        let mut s = 0.0;
        for c in children {
            s += integrate(c, g, singular, level + 1)?;
        }
        return Ok(s);
    }
    let map = ElementMap::new(tri);
    let rule = crate::basis::cached_rule(crate::basis::Domain::Triangle, ERROR_QUADRATURE_DEGREE)?;
    Ok(rule.iter().map(|(xi, w)| w * map.det.abs() * g(map.to_physical(xi))).sum())
}

fn exact_of(problem: &ProblemSpec) -> Result<&ExactSolution> {
    problem.exact.as_ref().ok_or(Error::MissingExactSolution)
}

fn true_error_with(
    problem: &ProblemSpec,
    integrand: impl Fn(usize, &ElementMap, [f64; 2]) -> f64 + Sync + Send,
) -> Result<TrueError> {
    let exact = exact_of(problem)?;
    let mesh = &problem.mesh;
    let per_element = exec::try_map(mesh.num_elements(), |e| {
        let map = mesh.element_map(e);
        let g = |x: [f64; 2]| integrand(e, &map, x);
        integrate(mesh.element_vertices(e), &g, &exact.singular_points, 0)
    })?;
    let total = per_element.iter().sum::<f64>().sqrt();
    Ok(TrueError { per_element, total })
}

/// `||a^{1/2} grad_h (u - u_h)||`.
pub fn true_error_primal(problem: &ProblemSpec, sol: &PrimalSolution) -> Result<TrueError> {
    let exact = exact_of(problem)?;
    let basis = cell_basis(sol.k);
    true_error_with(problem, |e, map, x| {
        let g = (exact.grad)(x);
        let gh = grad_at(&basis, map, &sol.u[e], map.to_reference(x));
        problem.mesh.coefficient(e) * ((g[0] - gh[0]).powi(2) + (g[1] - gh[1]).powi(2))
    })
}

/// `||a^{-1/2} (a grad u - sigma_h)||`.
pub fn true_error_mixed(problem: &ProblemSpec, sol: &MixedSolution) -> Result<TrueError> {
    let exact = exact_of(problem)?;
    let vb = VectorCellBasis::new(sol.k);
    true_error_with(problem, |e, map, x| {
        let a = problem.mesh.coefficient(e);
        let g = (exact.grad)(x);
        let s = vb.eval(&sol.sigma[e], map.to_reference(x));
        ((a * g[0] - s[0]).powi(2) + (a * g[1] - s[1]).powi(2)) / a
    })
}

/// Element size `h_K` per element.
pub fn element_sizes(mesh: &Mesh) -> Vec<f64> {
    (0..mesh.num_elements()).map(|e| mesh.element_geometry(e).diameter).collect()
}
