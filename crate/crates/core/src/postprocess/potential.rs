//! Continuous potentials: nodal averaging into the Lagrange space `S_m` and
//! the local `P_{k+1}` reconstruction of the mixed scheme.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use crate::basis::{cell_basis, dim_p, eval_cell};
use crate::error::{Error, Result};
use crate::exec;
use crate::hdg_mixed::MixedSolution;
use crate::linalg::{DenseMatrix, Lu};
use crate::mesh::Mesh;
use crate::problem::ProblemSpec;
use crate::skeleton::{derivative_moments, stiffness};

/// Reference lattice `(a/m, b/m)` and the inverse of its Vandermonde matrix
/// in the cell basis.
struct Lattice {
    nodes: Vec<(usize, usize)>,
    lu: Lu,
}

fn lattice(m: usize) -> Result<Arc<Lattice>> {
    type Cache = Mutex<HashMap<usize, Arc<Lattice>>>;
    static CACHE: OnceLock<Cache> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(l) = cache.lock().expect("lattice cache poisoned").get(&m) {
        return Ok(l.clone());
    }
    let nodes: Vec<(usize, usize)> = (0..=m).flat_map(|b| (0..=m - b).map(move |a| (a, b))).collect();
    let basis = cell_basis(m);
    let mut v = DenseMatrix::zeros(nodes.len(), nodes.len());
    let mut row = vec![0.0; basis.dim()];
    for (r, &(a, b)) in nodes.iter().enumerate() {
        basis.eval(ref_point(m, a, b), &mut row);
        v.row_mut(r).copy_from_slice(&row);
    }
    let l = Arc::new(Lattice { nodes, lu: Lu::factor(&v)? });
    cache.lock().expect("lattice cache poisoned").insert(m, l.clone());
    Ok(l)
}

fn ref_point(m: usize, a: usize, b: usize) -> [f64; 2] {
    [a as f64 / m as f64, b as f64 / m as f64]
}

/// Global numbering of the continuous piecewise `P_m` Lagrange space:
/// vertices first, then `m - 1` nodes per facet in the facet's global
/// direction, then the interior nodes of each element.
#[derive(Debug, Clone)]
pub struct LagrangeSpace {
    pub degree: usize,
    /// Global node of each local lattice node, per element.
    pub element_nodes: Vec<Vec<usize>>,
    /// Physical coordinates of each global node.
    pub coords: Vec<[f64; 2]>,
    /// Boundary tag of each node lying on the boundary.
    pub boundary: Vec<Option<u32>>,
}

impl LagrangeSpace {
    pub fn new(mesh: &Mesh, m: usize) -> Result<LagrangeSpace> {
        if m == 0 {
            return Err(Error::Config("Lagrange space needs degree at least 1".into()));
        }
        let lat = lattice(m)?;
        let nv = mesh.num_vertices();
        let n_int = dim_p(m).saturating_sub(3 * m);
        let interior0 = nv + mesh.num_facets() * (m - 1);
        let total = interior0 + mesh.num_elements() * n_int;
        let mut coords = vec![[0.0; 2]; total];
        let mut boundary = vec![None; total];
        for (f, facet) in mesh.facets().iter().enumerate() {
            let Some(tag) = facet.boundary_tag else { continue };
            for v in facet.vertices {
                boundary[v].get_or_insert(tag);
            }
            for pos in 1..m {
                boundary[nv + f * (m - 1) + pos - 1] = Some(tag);
            }
        }
        let mut element_nodes = Vec::with_capacity(mesh.num_elements());
        for e in 0..mesh.num_elements() {
            let tri = mesh.triangles()[e];
            let geo = mesh.element_geometry(e);
            let map = mesh.element_map(e);
            let mut next_interior = interior0 + e * n_int;
            let ids: Vec<usize> = lat
                .nodes
                .iter()
                .map(|&(a, b)| {
                    let c = m - a - b;
                    let id = match (a, b, c) {
                        (0, 0, _) => tri[0],
                        (_, 0, 0) => tri[1],
                        (0, _, 0) => tri[2],
                        _ => {
                            let (j, t) = if c == 0 {
                                (0, b)
                            } else if a == 0 {
                                (1, m - b)
                            } else if b == 0 {
                                (2, a)
                            } else {
                                let id = next_interior;
                                next_interior += 1;
                                coords[id] = map.to_physical(ref_point(m, a, b));
                                return id;
                            };
                            let pos = if geo.facets[j].flipped { m - t } else { t };
                            nv + geo.facets[j].facet * (m - 1) + pos - 1
                        }
                    };
                    coords[id] = map.to_physical(ref_point(m, a, b));
                    id
                })
                .collect();
            element_nodes.push(ids);
        }
        Ok(LagrangeSpace {
            degree: m,
            element_nodes,
            coords,
            boundary,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.coords.len()
    }

    /// Cell-basis coefficients of the element restrictions of the nodal
    /// function `values`.
    pub fn element_coefficients(&self, values: &[f64]) -> Result<Vec<Vec<f64>>> {
        let lat = lattice(self.degree)?;
        Ok(exec::map(self.element_nodes.len(), |e| {
            let v: Vec<f64> = self.element_nodes[e].iter().map(|&i| values[i]).collect();
            lat.lu.solve(&v)
        }))
    }
}

/// Average the broken `P_kk` field `u` (cell coefficients per element) at the
/// nodes of `S_m`, impose the Dirichlet data of `problem` at boundary nodes,
/// and return the result in the cell basis of degree `m`.
pub fn average_potential(problem: &ProblemSpec, u: &[Vec<f64>], kk: usize, m: usize) -> Result<Vec<Vec<f64>>> {
    let mesh = &problem.mesh;
    let space = LagrangeSpace::new(mesh, m)?;
    let lat = lattice(m)?;
    let basis = cell_basis(kk);
    let mut sum = vec![0.0; space.num_nodes()];
    let mut count = vec![0u32; space.num_nodes()];
    for (e, ids) in space.element_nodes.iter().enumerate() {
        for (&(a, b), &id) in lat.nodes.iter().zip(ids) {
            sum[id] += eval_cell(&basis, &u[e], ref_point(m, a, b));
            count[id] += 1;
        }
    }
    let values: Vec<f64> = (0..space.num_nodes())
        .map(|i| match space.boundary[i] {
            Some(tag) => problem.dirichlet(tag)(space.coords[i]),
            None => sum[i] / count[i] as f64,
        })
        .collect();
    space.element_coefficients(&values)
}

/// Local `P_{k+1}` potential of the mixed scheme: `(a grad u*, grad v)_K =
/// (sigma_h, grad v)_K` for `v` of zero mean, with the mean of `u_h`.
pub fn local_potential_mixed(sol: &MixedSolution) -> Result<Vec<Vec<f64>>> {
    let mesh = &sol.mesh;
    let k = sol.k;
    let (n, nk) = (dim_p(k + 1), dim_p(k));
    exec::try_map(mesh.num_elements(), |e| {
        let a = mesh.coefficient(e);
        let st = stiffness(mesh, e, k + 1)?;
        let d = derivative_moments(mesh, e, k, k + 1)?;
        let mut lhs = DenseMatrix::zeros(n - 1, n - 1);
        let mut rhs = vec![0.0; n - 1];
        for i in 1..n {
            for j in 1..n {
                lhs[(i - 1, j - 1)] = a * st[(i, j)];
            }
            rhs[i - 1] = (0..nk)
                .map(|q| sol.sigma[e][q] * d[0][(q, i)] + sol.sigma[e][nk + q] * d[1][(q, i)])
                .sum();
        }
        let c = Lu::factor(&lhs).map_err(|err| err.at_element(e))?.solve(&rhs);
        let mut out = Vec::with_capacity(n);
        out.push(sol.u[e][0]);
        out.extend(c);
        Ok(out)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::project_cell;
    use crate::hdg_mixed::{solve_mixed, MixedOptions, MixedStabilization};
    use crate::hdg_primal::{solve_primal, PrimalOptions};
    use std::sync::Arc;

    #[test]
    fn node_counts() {
        let mesh = Mesh::unit_square();
        for m in 1..=4 {
            let s = LagrangeSpace::new(&mesh, m).unwrap();
            assert_eq!(s.num_nodes(), (2 * m + 1) * (2 * m + 1));
            assert!(s.element_nodes.iter().flatten().all(|&i| i < s.num_nodes()));
        }
    }

    #[test]
    fn shared_nodes_have_one_position() {
        let mesh = crate::mesh::refine(&Mesh::lshape(), &[0, 5]).unwrap();
        let s = LagrangeSpace::new(&mesh, 3).unwrap();
        let lat = lattice(3).unwrap();
        for (e, ids) in s.element_nodes.iter().enumerate() {
            let map = mesh.element_map(e);
            for (&(a, b), &id) in lat.nodes.iter().zip(ids) {
                let x = map.to_physical(ref_point(3, a, b));
                assert!((x[0] - s.coords[id][0]).abs() < 1e-14 && (x[1] - s.coords[id][1]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn continuous_polynomials_are_kept() {
        let u = |x: [f64; 2]| x[0] * x[0] - 2.0 * x[0] * x[1] + 0.5 * x[1].powi(3);
        let p = ProblemSpec::new("poly", Mesh::lshape(), Arc::new(|_| 0.0)).with_dirichlet(Arc::new(u));
        let coeffs: Vec<Vec<f64>> = (0..p.mesh.num_elements())
            .map(|e| project_cell(u, 3, &p.mesh.element_map(e)).unwrap())
            .collect();
        let avg = average_potential(&p, &coeffs, 3, 3).unwrap();
        for (a, b) in avg.iter().flatten().zip(coeffs.iter().flatten()) {
            assert!((a - b).abs() < 1e-11);
        }
    }

    #[test]
    fn averaged_potential_is_continuous() {
        let p = ProblemSpec::square_smooth();
        let sol = solve_primal(&p, &PrimalOptions::new(2)).unwrap();
        let us = average_potential(&p, &sol.u, 2, 2).unwrap();
        let basis = cell_basis(2);
        for f in p.mesh.facets() {
            let Some(r) = f.right else { continue };
            for s in [0.1, 0.5, 0.77] {
                let x = p.mesh.facet_point(p.mesh.element_facets(f.left.element)[f.left.local], s);
                let v = [f.left.element, r.element]
                    .map(|e| eval_cell(&basis, &us[e], p.mesh.element_map(e).to_reference(x)));
                assert!((v[0] - v[1]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn mixed_local_potential_reproduces_affine() {
        let g = |x: [f64; 2]| 1.0 + 2.0 * x[0] - 3.0 * x[1];
        let p = ProblemSpec::new("affine", Mesh::unit_square(), Arc::new(|_| 0.0)).with_dirichlet(Arc::new(g));
        let sol = solve_mixed(&p, &MixedOptions::new(1, MixedStabilization::Uniform)).unwrap();
        let us = local_potential_mixed(&sol).unwrap();
        let basis = cell_basis(2);
        for (e, c) in us.iter().enumerate() {
            let xi = [0.25, 0.4];
            let x = p.mesh.element_map(e).to_physical(xi);
            assert!((eval_cell(&basis, c, xi) - g(x)).abs() < 1e-9);
        }
    }
}
