//! Polynomial bases, quadrature, and L2 projections on triangles and facets.
//!
//! Cell functions are expanded in an orthonormal Dubiner basis on the
//! reference triangle `(0,0), (1,0), (0,1)`. The basis is hierarchical: the
//! first `dim P_m` members span `P_m` for every `m <= k`. Because elements are
//! affine images of the reference triangle, the physical mass matrix of an
//! element `K` is `2|K|` times the identity.
//!
//! Facet functions are expanded in orthonormal Legendre polynomials of the
//! arc-length parameter `s in [0, 1]`, so the facet mass matrix is `|F|` times
//! the identity.

pub mod poly;
pub mod quadrature;

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use self::poly::{jacobi_coefficients, legendre, Poly2};
pub use self::quadrature::{cached_rule, quadrature_rule, Domain, QuadratureRule};
use crate::error::Result;

/// `dim P_k` on a triangle.
pub const fn dim_p(k: usize) -> usize {
    (k + 1) * (k + 2) / 2
}

/// Orthonormal scalar basis of `P_k` on the reference triangle.
#[derive(Debug, Clone)]
pub struct CellBasis {
    degree: usize,
    polys: Vec<Poly2>,
    dx: Vec<Poly2>,
    dy: Vec<Poly2>,
}

/// Values and reference gradients of a basis at a point set, stored
/// point-major: entry `q * n + i` is basis function `i` at point `q`.
#[derive(Debug, Clone)]
pub struct Tabulation {
    pub n: usize,
    pub values: Vec<f64>,
    pub grads: Vec<[f64; 2]>,
}

impl Tabulation {
    #[inline]
    pub fn value(&self, q: usize) -> &[f64] {
        &self.values[q * self.n..(q + 1) * self.n]
    }

    #[inline]
    pub fn grad(&self, q: usize) -> &[[f64; 2]] {
        &self.grads[q * self.n..(q + 1) * self.n]
    }
}

impl CellBasis {
    pub fn new(degree: usize) -> Self {
        let mut polys = Vec::with_capacity(dim_p(degree));
        // s = 2x + y - 1 and t = 1 - y; P_p(s / t) t^p is a polynomial.
        let s = Poly2::affine(-1.0, 2.0, 1.0);
        let t = Poly2::affine(1.0, 0.0, -1.0);
        let b = Poly2::affine(-1.0, 0.0, 2.0);
        for n in 0..=degree {
            for q in 0..=n {
                let p = n - q;
                let leg = jacobi_coefficients(p, 0.0, 0.0);
                let mut head = Poly2::constant(0.0);
                for (j, &c) in leg.iter().enumerate() {
                    if c != 0.0 {
                        let term = &s.pow(j) * &t.pow(p - j);
                        head = &head + &term.scale(c);
                    }
                }
                let jac = jacobi_coefficients(q, 2.0 * p as f64 + 1.0, 0.0);
                let tail = Poly2::compose_univariate(&jac, &b);
                polys.push(&head * &tail);
            }
        }
        // Normalize on the reference triangle (orthogonality is analytic).
        let rule = quadrature_rule(Domain::Triangle, 2 * degree).expect("degree within range");
        for p in polys.iter_mut() {
            let norm2: f64 = rule.iter().map(|(x, w)| w * p.eval(x[0], x[1]).powi(2)).sum();
            *p = p.scale(1.0 / norm2.sqrt());
        }
        let dx = polys.iter().map(Poly2::dx).collect();
        let dy = polys.iter().map(Poly2::dy).collect();
        CellBasis {
            degree,
            polys,
            dx,
            dy,
        }
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn dim(&self) -> usize {
        self.polys.len()
    }

    pub fn poly(&self, i: usize) -> &Poly2 {
        &self.polys[i]
    }

    pub fn eval(&self, xi: [f64; 2], out: &mut [f64]) {
        for (o, p) in out.iter_mut().zip(&self.polys) {
            *o = p.eval(xi[0], xi[1]);
        }
    }

    /// Gradients with respect to reference coordinates.
    pub fn eval_grad(&self, xi: [f64; 2], out: &mut [[f64; 2]]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = [self.dx[i].eval(xi[0], xi[1]), self.dy[i].eval(xi[0], xi[1])];
        }
    }

    pub fn tabulate(&self, points: &[[f64; 2]]) -> Tabulation {
        let n = self.dim();
        let mut values = vec![0.0; points.len() * n];
        let mut grads = vec![[0.0; 2]; points.len() * n];
        for (q, &xi) in points.iter().enumerate() {
            self.eval(xi, &mut values[q * n..(q + 1) * n]);
            self.eval_grad(xi, &mut grads[q * n..(q + 1) * n]);
        }
        Tabulation { n, values, grads }
    }
}

/// Shared, lazily built cell bases.
pub fn cell_basis(k: usize) -> Arc<CellBasis> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<CellBasis>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().expect("basis cache poisoned");
    guard
        .entry(k)
        .or_insert_with(|| Arc::new(CellBasis::new(k)))
        .clone()
}

/// A cell basis tabulated at the points of a triangle rule.
#[derive(Debug)]
pub struct CellTable {
    pub rule: Arc<QuadratureRule>,
    pub tab: Tabulation,
}

/// Shared tabulation of `P_k` at the degree-`qdeg` triangle rule.
pub fn cell_table(k: usize, qdeg: usize) -> Result<Arc<CellTable>> {
    type Cache = Mutex<HashMap<(usize, usize), Arc<CellTable>>>;
    static CACHE: OnceLock<Cache> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(t) = cache.lock().expect("table cache poisoned").get(&(k, qdeg)) {
        return Ok(t.clone());
    }
    let rule = cached_rule(Domain::Triangle, qdeg)?;
    let tab = cell_basis(k).tabulate(&rule.points);
    let table = Arc::new(CellTable { rule, tab });
    cache
        .lock()
        .expect("table cache poisoned")
        .insert((k, qdeg), table.clone());
    Ok(table)
}

/// A cell basis tabulated along one local facet of the reference triangle.
/// `params[q]` is the local facet parameter of point `q`.
#[derive(Debug)]
pub struct FacetTable {
    pub params: Vec<f64>,
    pub weights: Vec<f64>,
    pub points: Vec<[f64; 2]>,
    pub tab: Tabulation,
}

/// Shared tabulation of `P_k` at the degree-`qdeg` segment rule mapped onto
/// local facet `j`. Weights sum to 1 (multiply by `|F|`).
pub fn facet_table(k: usize, qdeg: usize, j: usize) -> Result<Arc<FacetTable>> {
    type Cache = Mutex<HashMap<(usize, usize, usize), Arc<FacetTable>>>;
    static CACHE: OnceLock<Cache> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(t) = cache.lock().expect("table cache poisoned").get(&(k, qdeg, j)) {
        return Ok(t.clone());
    }
    let rule = cached_rule(Domain::Segment, qdeg)?;
    let params: Vec<f64> = rule.points.iter().map(|p| p[0]).collect();
    let points: Vec<[f64; 2]> = params.iter().map(|&t| facet_point(j, t)).collect();
    let tab = cell_basis(k).tabulate(&points);
    let table = Arc::new(FacetTable {
        params,
        weights: rule.weights.clone(),
        points,
        tab,
    });
    cache
        .lock()
        .expect("table cache poisoned")
        .insert((k, qdeg, j), table.clone());
    Ok(table)
}

/// Orthonormal Legendre basis of `P_m` on `[0, 1]`.
#[derive(Debug, Clone, Copy)]
pub struct FacetBasis {
    pub degree: usize,
}

impl FacetBasis {
    pub fn new(degree: usize) -> Self {
        FacetBasis { degree }
    }

    pub fn dim(&self) -> usize {
        self.degree + 1
    }

    pub fn eval(&self, s: f64, out: &mut [f64]) {
        let x = 2.0 * s - 1.0;
        for (j, o) in out.iter_mut().enumerate().take(self.dim()) {
            *o = (2.0 * j as f64 + 1.0).sqrt() * legendre(j, x).0;
        }
    }

    pub fn values(&self, s: f64) -> Vec<f64> {
        let mut v = vec![0.0; self.dim()];
        self.eval(s, &mut v);
        v
    }
}

/// Basis of `P_k(K)^2`: member `i < n` is `(phi_i, 0)`, member `n + i` is
/// `(0, phi_i)`.
#[derive(Debug, Clone)]
pub struct VectorCellBasis {
    pub scalar: Arc<CellBasis>,
}

impl VectorCellBasis {
    pub fn new(k: usize) -> Self {
        VectorCellBasis {
            scalar: cell_basis(k),
        }
    }

    pub fn dim(&self) -> usize {
        2 * self.scalar.dim()
    }

    /// Evaluate `sum c_i psi_i` at a reference point.
    pub fn eval(&self, coeffs: &[f64], xi: [f64; 2]) -> [f64; 2] {
        let n = self.scalar.dim();
        let mut v = vec![0.0; n];
        self.scalar.eval(xi, &mut v);
        let x: f64 = v.iter().zip(&coeffs[..n]).map(|(a, b)| a * b).sum();
        let y: f64 = v.iter().zip(&coeffs[n..2 * n]).map(|(a, b)| a * b).sum();
        [x, y]
    }

    /// Physical divergence of `sum c_i psi_i` at a reference point.
    pub fn divergence(&self, map: &ElementMap, coeffs: &[f64], xi: [f64; 2]) -> f64 {
        let n = self.scalar.dim();
        let mut g = vec![[0.0; 2]; n];
        self.scalar.eval_grad(xi, &mut g);
        let mut div = 0.0;
        for i in 0..n {
            let gp = map.grad(g[i]);
            div += coeffs[i] * gp[0] + coeffs[n + i] * gp[1];
        }
        div
    }
}

/// Affine map from the reference triangle onto a physical triangle.
#[derive(Debug, Clone, Copy)]
pub struct ElementMap {
    pub origin: [f64; 2],
    /// Columns are `x1 - x0` and `x2 - x0`.
    pub jac: [[f64; 2]; 2],
    /// `J^{-T}`, maps reference gradients to physical gradients.
    pub inv_t: [[f64; 2]; 2],
    /// `det J = 2 |K|`.
    pub det: f64,
}

impl ElementMap {
    pub fn new(v: [[f64; 2]; 3]) -> Self {
        let jac = [
            [v[1][0] - v[0][0], v[2][0] - v[0][0]],
            [v[1][1] - v[0][1], v[2][1] - v[0][1]],
        ];
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        // J^{-1} = [[d, -b], [-c, a]] / det; J^{-T} is its transpose.
        let inv_t = [
            [jac[1][1] / det, -jac[1][0] / det],
            [-jac[0][1] / det, jac[0][0] / det],
        ];
        ElementMap {
            origin: v[0],
            jac,
            inv_t,
            det,
        }
    }

    pub fn area(&self) -> f64 {
        0.5 * self.det.abs()
    }

    #[inline]
    pub fn to_physical(&self, xi: [f64; 2]) -> [f64; 2] {
        [
            self.origin[0] + self.jac[0][0] * xi[0] + self.jac[0][1] * xi[1],
            self.origin[1] + self.jac[1][0] * xi[0] + self.jac[1][1] * xi[1],
        ]
    }

    #[inline]
    pub fn to_reference(&self, x: [f64; 2]) -> [f64; 2] {
        let d = [x[0] - self.origin[0], x[1] - self.origin[1]];
        // J^{-1} d = (J^{-T})^T d
        [
            self.inv_t[0][0] * d[0] + self.inv_t[1][0] * d[1],
            self.inv_t[0][1] * d[0] + self.inv_t[1][1] * d[1],
        ]
    }

    #[inline]
    pub fn grad(&self, g: [f64; 2]) -> [f64; 2] {
        [
            self.inv_t[0][0] * g[0] + self.inv_t[0][1] * g[1],
            self.inv_t[1][0] * g[0] + self.inv_t[1][1] * g[1],
        ]
    }
}

/// Reference coordinates of the point at parameter `t` along local facet
/// `j` of the reference triangle. Facet `j` is opposite vertex `j` and runs
/// from vertex `j + 1` to vertex `j + 2` (indices mod 3).
#[inline]
pub fn facet_point(j: usize, t: f64) -> [f64; 2] {
    match j {
        0 => [1.0 - t, t],
        1 => [0.0, 1.0 - t],
        _ => [t, 0.0],
    }
}

/// L2 projection of `f` onto `P_k(K)`, returned as coefficients in the
/// orthonormal cell basis.
pub fn project_cell<F>(f: F, k: usize, map: &ElementMap) -> Result<Vec<f64>>
where
    F: Fn([f64; 2]) -> f64,
{
    project_cell_with(f, k, map, 2 * k + 4)
}

/// [`project_cell`] with an explicit quadrature degree.
pub fn project_cell_with<F>(f: F, k: usize, map: &ElementMap, qdeg: usize) -> Result<Vec<f64>>
where
    F: Fn([f64; 2]) -> f64,
{
    let basis = cell_basis(k);
    let rule = cached_rule(Domain::Triangle, qdeg)?;
    let n = basis.dim();
    let mut v = vec![0.0; n];
    let mut c = vec![0.0; n];
    for (xi, w) in rule.iter() {
        basis.eval(xi, &mut v);
        let fx = f(map.to_physical(xi));
        for (ci, vi) in c.iter_mut().zip(&v) {
            *ci += w * fx * vi;
        }
    }
    // Reference orthonormality: coefficient = (f, phi_i)_ref.
    Ok(c)
}

/// Evaluate a cell expansion at a reference point.
pub fn eval_cell(basis: &CellBasis, coeffs: &[f64], xi: [f64; 2]) -> f64 {
    let mut v = vec![0.0; basis.dim()];
    basis.eval(xi, &mut v);
    v.iter().zip(coeffs).map(|(a, b)| a * b).sum()
}

/// L2 projection of `g` onto `P_m(F)` for the segment `a -> b`, as
/// coefficients of the orthonormal Legendre basis in the parameter running
/// from `a` to `b`.
pub fn project_facet<G>(g: G, m: usize, a: [f64; 2], b: [f64; 2]) -> Result<Vec<f64>>
where
    G: Fn([f64; 2]) -> f64,
{
    project_facet_with(g, m, a, b, 2 * m + 4)
}

pub fn project_facet_with<G>(g: G, m: usize, a: [f64; 2], b: [f64; 2], qdeg: usize) -> Result<Vec<f64>>
where
    G: Fn([f64; 2]) -> f64,
{
    let basis = FacetBasis::new(m);
    let rule = cached_rule(Domain::Segment, qdeg)?;
    let mut l = vec![0.0; basis.dim()];
    let mut c = vec![0.0; basis.dim()];
    for (p, w) in rule.iter() {
        let s = p[0];
        basis.eval(s, &mut l);
        let x = [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])];
        let gx = g(x);
        for (cj, lj) in c.iter_mut().zip(&l) {
            *cj += w * gx * lj;
        }
    }
    Ok(c)
}

/// A member of the divergence-free bubble space, stored as the physical
/// vector components expressed as polynomials of the reference coordinates.
#[derive(Debug, Clone)]
pub struct DivFreeBubble {
    pub components: [Poly2; 2],
}

impl DivFreeBubble {
    pub fn value(&self, xi: [f64; 2]) -> [f64; 2] {
        [
            self.components[0].eval(xi[0], xi[1]),
            self.components[1].eval(xi[0], xi[1]),
        ]
    }

    pub fn divergence(&self, map: &ElementMap, xi: [f64; 2]) -> f64 {
        let gx = map.grad([
            self.components[0].dx().eval(xi[0], xi[1]),
            self.components[0].dy().eval(xi[0], xi[1]),
        ]);
        let gy = map.grad([
            self.components[1].dx().eval(xi[0], xi[1]),
            self.components[1].dy().eval(xi[0], xi[1]),
        ]);
        gx[0] + gy[1]
    }
}

/// Basis of `{tau in P_k(K)^2 : div tau = 0, tau . n = 0 on dK}`, built as
/// rotated gradients of `b_K p` with `b_K` the cubic bubble and `p in
/// P_{k-2}`. Each member has unit L2 norm on `K`. Empty for `k < 2`.
pub fn divfree_bubble_basis(k: usize, map: &ElementMap) -> Vec<DivFreeBubble> {
    if k < 2 {
        return Vec::new();
    }
    let bubble = &(&Poly2::x() * &Poly2::y()) * &Poly2::affine(1.0, -1.0, -1.0);
    let inner = cell_basis(k - 2);
    let rule = quadrature_rule(Domain::Triangle, 2 * k).expect("degree within range");
    (0..inner.dim())
        .map(|i| {
            let stream = &bubble * inner.poly(i);
            let (sx, sy) = (stream.dx(), stream.dy());
            // grad_x psi = J^{-T} grad_xi psi; curl psi = (d_y psi, -d_x psi).
            let dpsi_dx = &sx.scale(map.inv_t[0][0]) + &sy.scale(map.inv_t[0][1]);
            let dpsi_dy = &sx.scale(map.inv_t[1][0]) + &sy.scale(map.inv_t[1][1]);
            let comps = [dpsi_dy, dpsi_dx.scale(-1.0)];
            let norm2: f64 = rule
                .iter()
                .map(|(xi, w)| {
                    let a = comps[0].eval(xi[0], xi[1]);
                    let b = comps[1].eval(xi[0], xi[1]);
                    w * map.det.abs() * (a * a + b * b)
                })
                .sum();
            let s = 1.0 / norm2.sqrt();
            DivFreeBubble {
                components: [comps[0].scale(s), comps[1].scale(s)],
            }
        })
        .collect()
}
