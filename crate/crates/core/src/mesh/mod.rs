//! Conforming triangular meshes with facet topology and newest-vertex
//! bisection.
//!
//! Local conventions: triangle vertices are stored counter-clockwise; local
//! facet `j` is the edge opposite local vertex `j` and runs from vertex
//! `j + 1` to vertex `j + 2` (mod 3). Global facets are oriented from their
//! lower to their higher vertex index, which fixes the parametrization of
//! facet polynomials shared by the two adjacent elements.

mod io;
mod refine;

use std::collections::{BTreeMap, HashMap};

pub use self::io::{read_mesh_json, write_svg, write_vtu, MeshFile};
pub use self::refine::refine;
use crate::basis::ElementMap;
use crate::error::{Error, Result};

/// Boundary tags keyed by the sorted vertex pair of the edge.
pub type BoundaryTags = BTreeMap<[usize; 2], u32>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FacetSide {
    pub element: usize,
    pub local: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Facet {
    /// Sorted vertex indices; the facet parameter runs from `vertices[0]`.
    pub vertices: [usize; 2],
    pub left: FacetSide,
    pub right: Option<FacetSide>,
    pub boundary_tag: Option<u32>,
}

impl Facet {
    pub fn is_boundary(&self) -> bool {
        self.right.is_none()
    }

    pub fn sides(&self) -> impl Iterator<Item = FacetSide> + '_ {
        std::iter::once(self.left).chain(self.right)
    }
}

/// Length and outward unit normal of one local facet of an element.
#[derive(Debug, Clone, Copy)]
pub struct FacetGeometry {
    pub facet: usize,
    pub length: f64,
    pub normal: [f64; 2],
    /// The local direction (vertex `j+1` to `j+2`) opposes the global one.
    pub flipped: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct ElementGeometry {
    /// Longest edge.
    pub diameter: f64,
    pub area: f64,
    pub facets: [FacetGeometry; 3],
}

#[derive(Debug, Clone)]
pub struct Mesh {
    vertices: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    facets: Vec<Facet>,
    element_facets: Vec<[usize; 3]>,
    refinement_edge: Vec<u8>,
    newest_facet: Vec<u8>,
    generation: Vec<u32>,
    parent: Vec<Option<usize>>,
    coefficient: Vec<f64>,
}

/// Per-element bookkeeping carried through refinement.
pub(crate) struct ElementTags {
    pub refinement_edge: Vec<u8>,
    pub newest_facet: Vec<u8>,
    pub generation: Vec<u32>,
    pub parent: Vec<Option<usize>>,
    pub coefficient: Vec<f64>,
}

fn signed_area(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt()
}

fn key(a: usize, b: usize) -> [usize; 2] {
    if a < b {
        [a, b]
    } else {
        [b, a]
    }
}

impl Mesh {
    /// Build a mesh from a conforming triangulation. Clockwise triangles are
    /// reoriented; untagged boundary edges get tag 0. Every element starts
    /// with coefficient 1 and refinement edge = longest edge.
    pub fn new(vertices: Vec<[f64; 2]>, triangles: Vec<[usize; 3]>, tags: &BoundaryTags) -> Result<Mesh> {
        let nv = vertices.len();
        let mut tris = triangles;
        for (e, t) in tris.iter_mut().enumerate() {
            for &v in t.iter() {
                if v >= nv {
                    return Err(Error::InvalidVertex {
                        element: e,
                        vertex: v,
                        nvertices: nv,
                    });
                }
            }
            let area = signed_area(vertices[t[0]], vertices[t[1]], vertices[t[2]]);
            let scale = dist(vertices[t[0]], vertices[t[1]])
                .max(dist(vertices[t[1]], vertices[t[2]]))
                .max(dist(vertices[t[2]], vertices[t[0]]));
            if !(area.abs() > 1e-14 * scale * scale) {
                return Err(Error::DegenerateTriangle { element: e, area });
            }
            if area < 0.0 {
                t.swap(1, 2);
            }
        }
        let n = tris.len();
        let refinement_edge = tris
            .iter()
            .map(|t| longest_edge(&vertices, t))
            .collect::<Vec<_>>();
        let element_tags = ElementTags {
            newest_facet: refinement_edge.clone(),
            refinement_edge,
            generation: vec![0; n],
            parent: vec![None; n],
            coefficient: vec![1.0; n],
        };
        let mesh = Mesh::assemble(vertices, tris, tags, element_tags)?;
        mesh.check_conforming()?;
        Ok(mesh)
    }

    pub(crate) fn assemble(
        vertices: Vec<[f64; 2]>,
        triangles: Vec<[usize; 3]>,
        tags: &BoundaryTags,
        element_tags: ElementTags,
    ) -> Result<Mesh> {
        let mut facets: Vec<Facet> = Vec::with_capacity(triangles.len() * 2);
        let mut lookup: HashMap<[usize; 2], usize> = HashMap::with_capacity(triangles.len() * 2);
        let mut element_facets = Vec::with_capacity(triangles.len());
        for (e, t) in triangles.iter().enumerate() {
            let mut ef = [0usize; 3];
            for (j, slot) in ef.iter_mut().enumerate() {
                let k = key(t[(j + 1) % 3], t[(j + 2) % 3]);
                let side = FacetSide { element: e, local: j };
                match lookup.get(&k) {
                    Some(&f) => {
                        if facets[f].right.is_some() {
                            return Err(Error::NonManifoldEdge { a: k[0], b: k[1] });
                        }
                        facets[f].right = Some(side);
                        facets[f].boundary_tag = None;
                        *slot = f;
                    }
                    None => {
                        let f = facets.len();
                        lookup.insert(k, f);
                        facets.push(Facet {
                            vertices: k,
                            left: side,
                            right: None,
                            boundary_tag: Some(tags.get(&k).copied().unwrap_or(0)),
                        });
                        *slot = f;
                    }
                }
            }
            element_facets.push(ef);
        }
        Ok(Mesh {
            vertices,
            triangles,
            facets,
            element_facets,
            refinement_edge: element_tags.refinement_edge,
            newest_facet: element_tags.newest_facet,
            generation: element_tags.generation,
            parent: element_tags.parent,
            coefficient: element_tags.coefficient,
        })
    }

    fn check_conforming(&self) -> Result<()> {
        // A hanging node shows up as a vertex strictly inside a one-sided edge.
        let mut order: Vec<usize> = (0..self.vertices.len()).collect();
        order.sort_by(|&a, &b| self.vertices[a][0].total_cmp(&self.vertices[b][0]));
        let xs: Vec<f64> = order.iter().map(|&v| self.vertices[v][0]).collect();
        for f in self.facets.iter().filter(|f| f.is_boundary()) {
            let (a, b) = (self.vertices[f.vertices[0]], self.vertices[f.vertices[1]]);
            let len2 = (b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2);
            let tol = 1e-10 * len2.sqrt();
            let lo = xs.partition_point(|&x| x < a[0].min(b[0]) - tol);
            let hi = xs.partition_point(|&x| x <= a[0].max(b[0]) + tol);
            for &v in &order[lo..hi] {
                if v == f.vertices[0] || v == f.vertices[1] {
                    continue;
                }
                let p = self.vertices[v];
                let cross = (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
                if cross.abs() > 1e-10 * len2 {
                    continue;
                }
                let t = ((p[0] - a[0]) * (b[0] - a[0]) + (p[1] - a[1]) * (b[1] - a[1])) / len2;
                if t > 1e-10 && t < 1.0 - 1e-10 {
                    return Err(Error::NonConforming {
                        element: f.left.element,
                        vertex: v,
                        a: f.vertices[0],
                        b: f.vertices[1],
                    });
                }
            }
        }
        Ok(())
    }

    /// Replace the per-element diffusion coefficient.
    pub fn with_coefficient(mut self, coefficient: Vec<f64>) -> Result<Mesh> {
        if coefficient.len() != self.num_elements() {
            return Err(Error::Config(format!(
                "{} coefficient values for {} elements",
                coefficient.len(),
                self.num_elements()
            )));
        }
        if let Some(e) = coefficient.iter().position(|&a| !(a > 0.0 && a.is_finite())) {
            return Err(Error::Config(format!(
                "coefficient on element {e} is {}, must be positive",
                coefficient[e]
            )));
        }
        self.coefficient = coefficient;
        Ok(self)
    }

    /// Set the coefficient from a function of the element centroid.
    pub fn with_coefficient_fn(self, a: impl Fn([f64; 2]) -> f64) -> Result<Mesh> {
        let c = (0..self.num_elements()).map(|e| a(self.centroid(e))).collect();
        self.with_coefficient(c)
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_elements(&self) -> usize {
        self.triangles.len()
    }

    pub fn num_facets(&self) -> usize {
        self.facets.len()
    }

    pub fn num_interior_facets(&self) -> usize {
        self.facets.iter().filter(|f| !f.is_boundary()).count()
    }

    pub fn num_boundary_facets(&self) -> usize {
        self.facets.iter().filter(|f| f.is_boundary()).count()
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn facets(&self) -> &[Facet] {
        &self.facets
    }

    pub fn facet(&self, f: usize) -> &Facet {
        &self.facets[f]
    }

    pub fn element_facets(&self, e: usize) -> [usize; 3] {
        self.element_facets[e]
    }

    pub fn refinement_edge(&self, e: usize) -> usize {
        self.refinement_edge[e] as usize
    }

    /// Local index of the facet most recently created by bisection (the
    /// bisector), or the longest facet for unrefined input elements.
    pub fn newest_facet(&self, e: usize) -> usize {
        self.newest_facet[e] as usize
    }

    pub fn generation(&self, e: usize) -> u32 {
        self.generation[e]
    }

    /// Element of the previous mesh this element was created from.
    pub fn parent(&self, e: usize) -> Option<usize> {
        self.parent[e]
    }

    pub fn coefficient(&self, e: usize) -> f64 {
        self.coefficient[e]
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficient
    }

    pub fn element_vertices(&self, e: usize) -> [[f64; 2]; 3] {
        let t = self.triangles[e];
        [self.vertices[t[0]], self.vertices[t[1]], self.vertices[t[2]]]
    }

    pub fn element_map(&self, e: usize) -> ElementMap {
        ElementMap::new(self.element_vertices(e))
    }

    pub fn centroid(&self, e: usize) -> [f64; 2] {
        let v = self.element_vertices(e);
        [(v[0][0] + v[1][0] + v[2][0]) / 3.0, (v[0][1] + v[1][1] + v[2][1]) / 3.0]
    }

    pub fn signed_area(&self, e: usize) -> f64 {
        let v = self.element_vertices(e);
        signed_area(v[0], v[1], v[2])
    }

    pub fn element_geometry(&self, e: usize) -> ElementGeometry {
        let t = self.triangles[e];
        let v = self.element_vertices(e);
        let mut facets = [FacetGeometry {
            facet: 0,
            length: 0.0,
            normal: [0.0; 2],
            flipped: false,
        }; 3];
        let mut diameter: f64 = 0.0;
        for (j, fg) in facets.iter_mut().enumerate() {
            let (a, b) = (v[(j + 1) % 3], v[(j + 2) % 3]);
            let length = dist(a, b);
            diameter = diameter.max(length);
            let f = self.element_facets[e][j];
            *fg = FacetGeometry {
                facet: f,
                length,
                normal: [(b[1] - a[1]) / length, -(b[0] - a[0]) / length],
                flipped: self.facets[f].vertices[0] != t[(j + 1) % 3],
            };
        }
        ElementGeometry {
            diameter,
            area: signed_area(v[0], v[1], v[2]),
            facets,
        }
    }

    /// Coordinates of the point at global parameter `s` on facet `f`.
    pub fn facet_point(&self, f: usize, s: f64) -> [f64; 2] {
        let [a, b] = self.facets[f].vertices.map(|v| self.vertices[v]);
        [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])]
    }

    pub fn facet_length(&self, f: usize) -> f64 {
        let [a, b] = self.facets[f].vertices.map(|v| self.vertices[v]);
        dist(a, b)
    }

    /// Smallest interior angle over all elements, in radians.
    pub fn min_angle(&self) -> f64 {
        (0..self.num_elements())
            .map(|e| {
                let v = self.element_vertices(e);
                (0..3)
                    .map(|i| {
                        let (p, q, r) = (v[i], v[(i + 1) % 3], v[(i + 2) % 3]);
                        let u = [q[0] - p[0], q[1] - p[1]];
                        let w = [r[0] - p[0], r[1] - p[1]];
                        let c = (u[0] * w[0] + u[1] * w[1]) / (dist(p, q) * dist(p, r));
                        c.clamp(-1.0, 1.0).acos()
                    })
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Boundary tags in the form accepted by [`Mesh::new`].
    pub fn boundary_tags(&self) -> BoundaryTags {
        self.facets
            .iter()
            .filter_map(|f| f.boundary_tag.map(|t| (f.vertices, t)))
            .collect()
    }

    /// Structured `nx x ny` grid of the rectangle `[x0, x1] x [y0, y1]`, each
    /// cell split along its `(i, j) -> (i + 1, j + 1)` diagonal.
    pub fn rectangle(nx: usize, ny: usize, x0: f64, x1: f64, y0: f64, y1: f64) -> Result<Mesh> {
        let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
        for j in 0..=ny {
            for i in 0..=nx {
                vertices.push([
                    x0 + (x1 - x0) * i as f64 / nx as f64,
                    y0 + (y1 - y0) * j as f64 / ny as f64,
                ]);
            }
        }
        let id = |i: usize, j: usize| j * (nx + 1) + i;
        let mut triangles = Vec::with_capacity(2 * nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                triangles.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
                triangles.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
            }
        }
        Mesh::new(vertices, triangles, &BoundaryTags::new())
    }

    /// Unit square split into a 2x2 grid of diagonal-split cells (8 elements).
    pub fn unit_square() -> Mesh {
        Mesh::rectangle(2, 2, 0.0, 1.0, 0.0, 1.0).expect("valid structured mesh")
    }

    /// L-shaped domain `(-1,1)x(0,1) U (-1,0)x(-1,0]`: three unit squares,
    /// each cut by both diagonals into four triangles (12 elements).
    pub fn lshape() -> Mesh {
        let mut vertices = vec![
            [-1.0, -1.0],
            [0.0, -1.0],
            [-1.0, 0.0],
            [0.0, 0.0],
            [1.0, 0.0],
            [-1.0, 1.0],
            [0.0, 1.0],
            [1.0, 1.0],
        ];
        let squares = [[0usize, 1, 3, 2], [2, 3, 6, 5], [3, 4, 7, 6]];
        let mut triangles = Vec::new();
        for sq in squares {
            let c = [
                sq.iter().map(|&v| vertices[v][0]).sum::<f64>() / 4.0,
                sq.iter().map(|&v| vertices[v][1]).sum::<f64>() / 4.0,
            ];
            let ci = vertices.len();
            vertices.push(c);
            for i in 0..4 {
                triangles.push([ci, sq[i], sq[(i + 1) % 4]]);
            }
        }
        Mesh::new(vertices, triangles, &BoundaryTags::new()).expect("valid L-shaped mesh")
    }
}

fn longest_edge(vertices: &[[f64; 2]], t: &[usize; 3]) -> u8 {
    let mut best = 0usize;
    let mut best_len = -1.0;
    for j in 0..3 {
        let len = dist(vertices[t[(j + 1) % 3]], vertices[t[(j + 2) % 3]]);
        let tie = (len - best_len).abs() <= 1e-12 * len.max(best_len);
        if (len > best_len && !tie) || (tie && t[j] < t[best]) {
            best = j;
            best_len = len;
        }
    }
    best as u8
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference_triangle() -> Mesh {
        Mesh::new(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], vec![[0, 1, 2]], &BoundaryTags::new()).unwrap()
    }

    pub(crate) fn check_invariants(m: &Mesh) {
        for e in 0..m.num_elements() {
            assert!(m.signed_area(e) > 0.0, "element {e} not positively oriented");
            for (j, &f) in m.element_facets(e).iter().enumerate() {
                let facet = m.facet(f);
                assert!(facet.sides().any(|s| s.element == e && s.local == j));
            }
        }
        for (fi, f) in m.facets().iter().enumerate() {
            if let Some(r) = f.right {
                let gl = m.element_geometry(f.left.element).facets[f.left.local];
                let gr = m.element_geometry(r.element).facets[r.local];
                assert!((gl.normal[0] + gr.normal[0]).abs() < 1e-14);
                assert!((gl.normal[1] + gr.normal[1]).abs() < 1e-14);
                assert_ne!(gl.flipped, gr.flipped, "facet {fi}");
                assert!(f.boundary_tag.is_none());
            } else {
                assert!(f.boundary_tag.is_some());
            }
        }
        m.check_conforming().unwrap();
    }

    #[test]
    fn single_triangle_topology() {
        let m = reference_triangle();
        assert_eq!(m.num_elements(), 1);
        assert_eq!(m.num_boundary_facets(), 3);
        assert_eq!(m.num_interior_facets(), 0);
        check_invariants(&m);
    }

    #[test]
    fn square_with_one_diagonal() {
        let m = Mesh::rectangle(1, 1, 0.0, 1.0, 0.0, 1.0).unwrap();
        assert_eq!(m.num_elements(), 2);
        assert_eq!(m.num_interior_facets(), 1);
        assert_eq!(m.num_boundary_facets(), 4);
        check_invariants(&m);
    }

    #[test]
    fn lshape_counts_and_euler() {
        let m = Mesh::lshape();
        assert_eq!(m.num_elements(), 12);
        check_invariants(&m);
        let euler = m.num_vertices() as i64 - m.num_facets() as i64 + m.num_elements() as i64;
        assert_eq!(euler, 1);
        let area: f64 = (0..12).map(|e| m.signed_area(e)).sum();
        assert!((area - 3.0).abs() < 1e-14);
    }

    #[test]
    fn reference_geometry() {
        let g = reference_triangle().element_geometry(0);
        assert!((g.diameter - 2f64.sqrt()).abs() < 1e-15);
        assert!((g.area - 0.5).abs() < 1e-15);
        let mut lens: Vec<f64> = g.facets.iter().map(|f| f.length).collect();
        lens.sort_by(f64::total_cmp);
        assert!((lens[0] - 1.0).abs() < 1e-15 && (lens[1] - 1.0).abs() < 1e-15);
        assert!((lens[2] - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn equilateral_geometry_and_closed_polygon() {
        let h = 3f64.sqrt() / 2.0;
        let m = Mesh::new(vec![[0.0, 0.0], [1.0, 0.0], [0.5, h]], vec![[0, 1, 2]], &BoundaryTags::new()).unwrap();
        let g = m.element_geometry(0);
        assert!((g.area - 3f64.sqrt() / 4.0).abs() < 1e-15);
        let mut s = [0.0, 0.0];
        for f in g.facets {
            assert!((f.length - 1.0).abs() < 1e-15);
            let nn = f.normal[0].hypot(f.normal[1]);
            assert!((nn - 1.0).abs() < 1e-15);
            s[0] += f.length * f.normal[0];
            s[1] += f.length * f.normal[1];
        }
        assert!(s[0].abs() < 1e-15 && s[1].abs() < 1e-15);
    }

    #[test]
    fn clockwise_input_is_reoriented() {
        let m = Mesh::new(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], vec![[0, 2, 1]], &BoundaryTags::new()).unwrap();
        assert!(m.signed_area(0) > 0.0);
    }

    #[test]
    fn degenerate_triangle_rejected() {
        let r = Mesh::new(vec![[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]], vec![[0, 1, 2]], &BoundaryTags::new());
        assert!(matches!(r, Err(Error::DegenerateTriangle { element: 0, .. })));
    }

    #[test]
    fn hanging_node_rejected() {
        // Big triangle below the x-axis, two small ones above sharing the midpoint.
        let v = vec![[0.0, 0.0], [2.0, 0.0], [1.0, -1.0], [1.0, 0.0], [1.0, 1.0]];
        let t = vec![[0, 2, 1], [0, 3, 4], [3, 1, 4]];
        match Mesh::new(v, t, &BoundaryTags::new()) {
            Err(Error::NonConforming { vertex, a, b, .. }) => {
                assert_eq!(vertex, 3);
                assert_eq!([a, b], [0, 1]);
            }
            other => panic!("expected rejection, got {other:?}"),
        }
    }

    #[test]
    fn invalid_index_rejected() {
        let r = Mesh::new(vec![[0.0, 0.0], [1.0, 0.0]], vec![[0, 1, 5]], &BoundaryTags::new());
        assert!(matches!(r, Err(Error::InvalidVertex { vertex: 5, .. })));
    }

    #[test]
    fn initial_refinement_edge_is_longest() {
        let m = reference_triangle();
        // hypotenuse is opposite vertex 0
        assert_eq!(m.refinement_edge(0), 0);
        let sq = Mesh::unit_square();
        for e in 0..sq.num_elements() {
            let g = sq.element_geometry(e);
            let r = sq.refinement_edge(e);
            assert!((g.facets[r].length - g.diameter).abs() < 1e-14);
        }
    }

    #[test]
    fn coefficient_validation() {
        let m = Mesh::unit_square();
        assert!(m.clone().with_coefficient(vec![1.0; 3]).is_err());
        assert!(m.clone().with_coefficient(vec![-1.0; 8]).is_err());
        let m = m.with_coefficient_fn(|x| if x[0] < 0.5 { 1.0 } else { 4.0 }).unwrap();
        assert!(m.coefficients().iter().all(|&a| a == 1.0 || a == 4.0));
    }
}
