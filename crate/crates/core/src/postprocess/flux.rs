//! Element-by-element construction of `sigma* in P_m(K)^2` with prescribed
//! normal moments, divergence and divergence-free bubble moments.

use crate::basis::{cell_basis, cell_table, dim_p, divfree_bubble_basis, facet_table, DivFreeBubble, ElementMap, VectorCellBasis};
use crate::error::{Error, Result};
use crate::exec;
use crate::hdg_mixed::{numerical_flux_mixed, MixedSolution};
use crate::hdg_primal::{numerical_flux_primal, PrimalSolution};
use crate::linalg::{DenseMatrix, Lu};
use crate::mesh::Mesh;
use crate::skeleton::{derivative_moments, facet_ops, NormalFlux};

/// Piecewise `P_m(K)^2` flux; `coeffs[e]` holds the x components followed by
/// the y components in the cell basis.
#[derive(Debug, Clone)]
pub struct EquilibratedFlux {
    pub degree: usize,
    pub coeffs: Vec<Vec<f64>>,
}

impl EquilibratedFlux {
    /// Value at reference point `xi` of element `e`.
    pub fn eval(&self, e: usize, xi: [f64; 2]) -> [f64; 2] {
        VectorCellBasis::new(self.degree).eval(&self.coeffs[e], xi)
    }
}

/// `(field, tau_j)_K` for every bubble `tau_j`.
fn bubble_moments(map: &ElementMap, m: usize, bubbles: &[DivFreeBubble], field: impl Fn([f64; 2]) -> [f64; 2]) -> Result<Vec<f64>> {
    let table = cell_table(0, 2 * m)?;
    Ok(bubbles
        .iter()
        .map(|b| {
            table
                .rule
                .iter()
                .map(|(xi, w)| {
                    let (s, t) = (field(xi), b.value(xi));
                    w * map.det * (s[0] * t[0] + s[1] * t[1])
                })
                .sum()
        })
        .collect())
}

/// Local system on element `e`. `flux` carries the facet normal moments (its
/// degree may be below `m`), `loads[i] = (f, phi_i)_K` for `i < dim P_{m-1}`.
fn equilibrate_element(
    mesh: &Mesh,
    e: usize,
    m: usize,
    flux: &[Vec<f64>; 3],
    loads: &[f64],
    field: impl Fn([f64; 2]) -> [f64; 2],
) -> Result<Vec<f64>> {
    let n = dim_p(m);
    let map = mesh.element_map(e);
    let mut a = DenseMatrix::zeros(2 * n, 2 * n);
    let mut rhs = vec![0.0; 2 * n];
    let mut row = 0;
    for (j, c) in flux.iter().enumerate() {
        let op = facet_ops(mesh, e, j, m, m)?;
        for l in 0..=m {
            for i in 0..n {
                a[(row, i)] = op.normal[0] * op.trace[(l, i)];
                a[(row, n + i)] = op.normal[1] * op.trace[(l, i)];
            }
            rhs[row] = c.get(l).copied().unwrap_or(0.0);
            row += 1;
        }
    }
    let nd = dim_p(m - 1);
    let d = derivative_moments(mesh, e, m - 1, m)?;
    for i in 1..nd {
        for col in 0..n {
            a[(row, col)] = d[0][(i, col)];
            a[(row, n + col)] = d[1][(i, col)];
        }
        rhs[row] = -loads[i];
        row += 1;
    }
    let bubbles = divfree_bubble_basis(m, &map);
    let targets = bubble_moments(&map, m, &bubbles, field)?;
    let table = cell_table(m, 2 * m)?;
    for (b, t) in bubbles.iter().zip(targets) {
        for (q, (xi, w)) in table.rule.iter().enumerate() {
            let v = b.value(xi);
            for (i, phi) in table.tab.value(q).iter().enumerate() {
                a[(row, i)] += w * map.det * phi * v[0];
                a[(row, n + i)] += w * map.det * phi * v[1];
            }
        }
        rhs[row] = t;
        row += 1;
    }
    if row != 2 * n {
        return Err(Error::Dimension(format!("equilibration system has {row} rows for {} unknowns", 2 * n)));
    }
    for r in 0..2 * n {
        let s = a.row(r).iter().fold(0.0f64, |x, v| x.max(v.abs()));
        if s > 0.0 {
            a.row_mut(r).iter_mut().for_each(|v| *v /= s);
            rhs[r] /= s;
        }
    }
    Ok(Lu::factor(&a)?.solve(&rhs))
}

fn check_degree(m: usize) -> Result<()> {
    if m == 0 {
        return Err(Error::Config("equilibrated flux needs degree at least 1".into()));
    }
    Ok(())
}

/// Equilibrated flux of degree `k` from a primal solution.
pub fn equilibrated_flux_primal(sol: &PrimalSolution) -> Result<EquilibratedFlux> {
    let m = sol.k;
    check_degree(m)?;
    let flux = numerical_flux_primal(sol)?;
    let mesh = &sol.mesh;
    let basis = cell_basis(sol.k);
    let coeffs = exec::try_map(mesh.num_elements(), |e| {
        let map = mesh.element_map(e);
        let a = mesh.coefficient(e);
        let u = &sol.u[e];
        let field = |xi: [f64; 2]| {
            let mut g = vec![[0.0; 2]; basis.dim()];
            basis.eval_grad(xi, &mut g);
            let mut r = [0.0; 2];
            for (gi, c) in g.iter().zip(u) {
                r[0] += c * gi[0];
                r[1] += c * gi[1];
            }
            let p = map.grad(r);
            [a * p[0], a * p[1]]
        };
        equilibrate_element(mesh, e, m, &flux.values[e], &sol.loads[e], field).map_err(|err| err.at_element(e))
    })?;
    Ok(EquilibratedFlux { degree: m, coeffs })
}

/// Equilibrated flux of degree `k + 1` from a mixed solution.
pub fn equilibrated_flux_mixed(sol: &MixedSolution) -> Result<EquilibratedFlux> {
    let m = sol.k + 1;
    let flux = numerical_flux_mixed(sol)?;
    let mesh = &sol.mesh;
    let vb = VectorCellBasis::new(sol.k);
    let coeffs = exec::try_map(mesh.num_elements(), |e| {
        let s = &sol.sigma[e];
        equilibrate_element(mesh, e, m, &flux.values[e], &sol.loads[e], |xi| vb.eval(s, xi)).map_err(|err| err.at_element(e))
    })?;
    Ok(EquilibratedFlux { degree: m, coeffs })
}

/// How far a flux is from `div sigma = -Pi f` and from normal continuity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquilibrationReport {
    /// `max_K ||div sigma + Pi_{m-1} f||_K / max(||Pi_{m-1} f||_K, floor)`.
    pub divergence: f64,
    /// `max_F ||[[sigma . n]]||_F / max(||sigma . n||_F, floor)` over interior
    /// facets, sampled at Gauss points from both sides.
    pub normal_jump: f64,
}

impl EquilibrationReport {
    pub fn max(&self) -> f64 {
        self.divergence.max(self.normal_jump)
    }
}

/// Check `sigma` against the element loads `(f, phi_i)_K` (`i < dim
/// P_{m-1}`) by direct evaluation. Denominators are floored at `1e-3` of
/// their largest value so that elements and facets carrying almost nothing
/// are not measured against their own roundoff.
pub fn verify_equilibration(mesh: &Mesh, sigma: &EquilibratedFlux, loads: &[Vec<f64>]) -> Result<EquilibrationReport> {
    let m = sigma.degree;
    check_degree(m)?;
    let nd = dim_p(m - 1);
    let vb = VectorCellBasis::new(m);
    let table = cell_table(m - 1, 2 * m)?;
    let div = exec::map(mesh.num_elements(), |e| {
        let map = mesh.element_map(e);
        let mut moments = vec![0.0; nd];
        for (q, (xi, w)) in table.rule.iter().enumerate() {
            let dv = vb.divergence(&map, &sigma.coeffs[e], xi);
            for (mi, phi) in moments.iter_mut().zip(table.tab.value(q)) {
                *mi += w * map.det * dv * phi;
            }
        }
        // Physical mass is det * I, so norms carry a factor 1/sqrt(det).
        let s = 1.0 / map.det.sqrt();
        let res: f64 = moments.iter().zip(&loads[e]).map(|(d, b)| (d + b).powi(2)).sum::<f64>().sqrt();
        let size: f64 = loads[e][..nd].iter().map(|b| b * b).sum::<f64>().sqrt();
        (res * s, size * s)
    });
    let floor = 1e-3 * div.iter().map(|d| d.1).fold(0.0, f64::max);
    let divergence = div
        .iter()
        .map(|&(r, s)| if s.max(floor) > 0.0 { r / s.max(floor) } else { r })
        .fold(0.0, f64::max);

    let interior: Vec<usize> = (0..mesh.num_facets()).filter(|&f| !mesh.facet(f).is_boundary()).collect();
    let jumps = exec::try_map(interior.len(), |i| {
        let f = mesh.facet(interior[i]);
        let right = f.right.expect("interior facet");
        let sides = [f.left, right];
        let lt = facet_table(0, 2 * m + 2, f.left.local)?;
        let geo = mesh.element_geometry(f.left.element).facets[f.left.local];
        let (mut jump, mut size) = (0.0, 0.0);
        for (&t, &w) in lt.params.iter().zip(&lt.weights) {
            let x = mesh.element_map(f.left.element).to_physical(crate::basis::facet_point(f.left.local, t));
            let vals = sides.map(|s| {
                let map = mesh.element_map(s.element);
                let v = sigma.eval(s.element, map.to_reference(x));
                v[0] * geo.normal[0] + v[1] * geo.normal[1]
            });
            jump += w * (vals[0] - vals[1]).powi(2);
            size += w * vals[0].powi(2);
        }
        Ok((jump.sqrt(), size.sqrt()))
    })?;
    let floor = 1e-3 * jumps.iter().map(|d| d.1).fold(0.0, f64::max);
    let normal_jump = jumps
        .iter()
        .map(|&(r, s)| if s.max(floor) > 0.0 { r / s.max(floor) } else { r })
        .fold(0.0, f64::max);
    Ok(EquilibrationReport {
        divergence,
        normal_jump,
    })
}

/// Normal moments of `sigma` on every element facet, as a [`NormalFlux`] of
/// degree `m`.
pub fn normal_moments(mesh: &Mesh, sigma: &EquilibratedFlux) -> Result<NormalFlux> {
    let m = sigma.degree;
    let n = dim_p(m);
    let values = exec::try_map(mesh.num_elements(), |e| {
        let mut out: [Vec<f64>; 3] = Default::default();
        for (j, o) in out.iter_mut().enumerate() {
            let op = facet_ops(mesh, e, j, m, m)?;
            let sx = op.trace.matvec(&sigma.coeffs[e][..n]);
            let sy = op.trace.matvec(&sigma.coeffs[e][n..]);
            *o = sx.iter().zip(&sy).map(|(x, y)| op.normal[0] * x + op.normal[1] * y).collect();
        }
        Ok(out)
    })?;
    Ok(NormalFlux { degree: m, values })
}
