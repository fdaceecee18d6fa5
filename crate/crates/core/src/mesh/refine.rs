use std::collections::HashMap;

use super::{key, BoundaryTags, ElementTags, Mesh};
use crate::error::{Error, Result};

/// Newest-vertex bisection of the marked elements plus the closure needed to
/// keep the mesh conforming. Each element's refinement edge is the edge
/// opposite its newest vertex; an edge is split exactly when some element
/// containing it must be refined, and a split edge forces the refinement
/// edge of every element containing it to be split too.
///
/// Children record their parent element in the input mesh and inherit its
/// coefficient. Vertex numbering is deterministic: new midpoints are appended
/// in increasing facet order.
pub fn refine(mesh: &Mesh, marked: &[usize]) -> Result<Mesh> {
    let ne = mesh.num_elements();
    let mut split = vec![false; mesh.num_facets()];
    let mut queue = Vec::new();
    for &e in marked {
        if e >= ne {
            return Err(Error::InvalidElement { index: e, nelems: ne });
        }
        queue.push(e);
    }
    let mut seeded = vec![false; ne];
    for &e in &queue {
        seeded[e] = true;
    }
    while let Some(e) = queue.pop() {
        let ef = mesh.element_facets(e);
        let r = ef[mesh.refinement_edge(e)];
        let needs = seeded[e] || ef.iter().any(|&f| split[f]);
        if needs && !split[r] {
            split[r] = true;
            for s in mesh.facet(r).sides() {
                if s.element != e {
                    queue.push(s.element);
                }
            }
        }
    }

    let mut vertices = mesh.vertices().to_vec();
    let mut midpoints: HashMap<[usize; 2], usize> = HashMap::new();
    for (f, _) in split.iter().enumerate().filter(|(_, &s)| s) {
        let [a, b] = mesh.facet(f).vertices;
        let (pa, pb) = (vertices[a], vertices[b]);
        midpoints.insert([a, b], vertices.len());
        vertices.push([0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])]);
    }

    let mut out = Refined::default();
    for e in 0..ne {
        let child = Child {
            vertices: mesh.triangles()[e],
            refinement_edge: mesh.refinement_edge(e),
            newest_facet: mesh.newest_facet(e),
            generation: mesh.generation(e),
        };
        out.bisect(child, e, mesh.coefficient(e), &midpoints);
    }

    let mut tags = BoundaryTags::new();
    for f in mesh.facets().iter() {
        if let Some(t) = f.boundary_tag {
            match midpoints.get(&f.vertices) {
                Some(&m) => {
                    tags.insert(key(f.vertices[0], m), t);
                    tags.insert(key(m, f.vertices[1]), t);
                }
                None => {
                    tags.insert(f.vertices, t);
                }
            }
        }
    }
    Mesh::assemble(vertices, out.triangles, &tags, out.tags)
}

#[derive(Clone, Copy)]
struct Child {
    vertices: [usize; 3],
    refinement_edge: usize,
    newest_facet: usize,
    generation: u32,
}

struct Refined {
    triangles: Vec<[usize; 3]>,
    tags: ElementTags,
}

impl Default for Refined {
    fn default() -> Self {
        Refined {
            triangles: Vec::new(),
            tags: ElementTags {
                refinement_edge: Vec::new(),
                newest_facet: Vec::new(),
                generation: Vec::new(),
                parent: Vec::new(),
                coefficient: Vec::new(),
            },
        }
    }
}

impl Refined {
    fn bisect(&mut self, t: Child, parent: usize, coefficient: f64, midpoints: &HashMap<[usize; 2], usize>) {
        let r = t.refinement_edge;
        let (a, b, c) = (t.vertices[r], t.vertices[(r + 1) % 3], t.vertices[(r + 2) % 3]);
        match midpoints.get(&key(b, c)) {
            None => {
                self.triangles.push(t.vertices);
                self.tags.refinement_edge.push(t.refinement_edge as u8);
                self.tags.newest_facet.push(t.newest_facet as u8);
                self.tags.generation.push(t.generation);
                self.tags.parent.push(Some(parent));
                self.tags.coefficient.push(coefficient);
            }
            Some(&m) => {
                let g = t.generation + 1;
                let first = Child {
                    vertices: [a, b, m],
                    refinement_edge: 2,
                    newest_facet: 1,
                    generation: g,
                };
                let second = Child {
                    vertices: [a, m, c],
                    refinement_edge: 1,
                    newest_facet: 2,
                    generation: g,
                };
                self.bisect(first, parent, coefficient, midpoints);
                self.bisect(second, parent, coefficient, midpoints);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::tests::check_invariants;

    fn reference_triangle() -> Mesh {
        Mesh::new(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], vec![[0, 1, 2]], &BoundaryTags::new()).unwrap()
    }

    fn total_area(m: &Mesh) -> f64 {
        (0..m.num_elements()).map(|e| m.signed_area(e)).sum()
    }

    #[test]
    fn single_bisection_of_reference_triangle() {
        let m = refine(&reference_triangle(), &[0]).unwrap();
        assert_eq!(m.num_elements(), 2);
        assert_eq!(m.num_vertices(), 4);
        assert_eq!(m.vertices()[3], [0.5, 0.5]);
        for e in 0..2 {
            assert!((m.signed_area(e) - 0.25).abs() < 1e-15);
            assert_eq!(m.generation(e), 1);
            assert_eq!(m.parent(e), Some(0));
        }
        check_invariants(&m);
    }

    #[test]
    fn two_rounds_give_four_similar_triangles() {
        let m0 = reference_triangle();
        let m1 = refine(&m0, &[0, 0]).unwrap();
        let m2 = refine(&m1, &[0, 1]).unwrap();
        assert_eq!(m2.num_elements(), 4);
        assert!((total_area(&m2) - 0.5).abs() < 1e-15);
        // bisection of a right isosceles triangle reproduces its shape
        assert!((m2.min_angle() - m0.min_angle()).abs() < 1e-12);
        check_invariants(&m2);
    }

    #[test]
    fn closure_keeps_square_conforming() {
        let m = Mesh::unit_square();
        let r = refine(&m, &[0]).unwrap();
        check_invariants(&r);
        assert!(r.num_elements() > m.num_elements() + 1);
        assert!((total_area(&r) - 1.0).abs() < 1e-14);
        assert_eq!(r.boundary_tags().len(), r.num_boundary_facets());
    }

    #[test]
    fn uniform_refinement_counts() {
        let mut m = Mesh::unit_square();
        for level in 1..=4 {
            let all: Vec<usize> = (0..m.num_elements()).collect();
            m = refine(&m, &all).unwrap();
            check_invariants(&m);
            assert_eq!(m.num_elements(), 8 * 2usize.pow(level));
        }
    }

    #[test]
    fn repeated_corner_refinement_keeps_min_angle() {
        let mut m = Mesh::lshape();
        let initial = m.min_angle();
        for _ in 0..12 {
            let near: Vec<usize> = (0..m.num_elements())
                .filter(|&e| m.element_vertices(e).iter().any(|v| v[0] == 0.0 && v[1] == 0.0))
                .collect();
            m = refine(&m, &near).unwrap();
            check_invariants(&m);
            assert!(m.min_angle() >= initial - 1e-12);
            assert!((total_area(&m) - 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn invalid_mark_is_an_error() {
        assert!(matches!(
            refine(&reference_triangle(), &[3]),
            Err(Error::InvalidElement { index: 3, nelems: 1 })
        ));
    }

    #[test]
    fn coefficient_is_inherited() {
        let m = Mesh::unit_square()
            .with_coefficient_fn(|x| if x[0] < 0.5 { 1.0 } else { 7.0 })
            .unwrap();
        let r = refine(&m, &[0, 5]).unwrap();
        for e in 0..r.num_elements() {
            let p = r.parent(e).unwrap();
            assert_eq!(r.coefficient(e), m.coefficient(p));
            let c = r.centroid(e);
            assert_eq!(r.coefficient(e), if c[0] < 0.5 { 1.0 } else { 7.0 });
        }
    }

    #[test]
    fn newest_facet_is_the_bisector() {
        let m = refine(&reference_triangle(), &[0]).unwrap();
        for e in 0..2 {
            let f = m.element_facets(e)[m.newest_facet(e)];
            let [a, b] = m.facet(f).vertices;
            assert_eq!([a, b], [0, 3]);
        }
    }
}
