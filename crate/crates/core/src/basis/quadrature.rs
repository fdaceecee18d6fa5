//! Gauss-Legendre rules on the unit segment and collapsed (Duffy) product
//! rules on the reference triangle `{(x, y) : x, y >= 0, x + y <= 1}`.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use super::poly::legendre;
use crate::error::{Error, Result};

/// Highest exactness degree served by [`quadrature_rule`].
pub const MAX_DEGREE: usize = 80;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    /// `[0, 1]`, measure 1.
    Segment,
    /// Reference triangle, measure 1/2.
    Triangle,
}

/// Quadrature points in reference coordinates. Segment rules store the
/// parameter in `points[i][0]` and leave the second coordinate at zero.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pub domain: Domain,
    pub degree: usize,
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = ([f64; 2], f64)> + '_ {
        self.points.iter().copied().zip(self.weights.iter().copied())
    }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Tricomi initial guess, then Newton.
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre(n, z);
            let dz = p / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre(n, z);
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    (x, w)
}

/// Rule on `domain` integrating every polynomial of total degree `degree`
/// exactly. All weights are positive.
pub fn quadrature_rule(domain: Domain, degree: usize) -> Result<QuadratureRule> {
    if degree > MAX_DEGREE {
        return Err(Error::QuadratureDegree {
            requested: degree,
            max: MAX_DEGREE,
        });
    }
    match domain {
        Domain::Segment => {
            let n = degree / 2 + 1;
            let (x, w) = gauss_legendre(n);
            Ok(QuadratureRule {
                domain,
                degree,
                points: x.iter().map(|&t| [(t + 1.0) / 2.0, 0.0]).collect(),
                weights: w.iter().map(|&wi| wi / 2.0).collect(),
            })
        }
        Domain::Triangle => {
            // x = u (1 - v), y = v, Jacobian (1 - v): degree + 1 in v.
            let n = (degree + 2).div_ceil(2);
            let (x, w) = gauss_legendre(n);
            let mut points = Vec::with_capacity(n * n);
            let mut weights = Vec::with_capacity(n * n);
            for (xv, wv) in x.iter().zip(&w) {
                let v = (xv + 1.0) / 2.0;
                for (xu, wu) in x.iter().zip(&w) {
                    let u = (xu + 1.0) / 2.0;
                    points.push([u * (1.0 - v), v]);
                    weights.push(wu * wv / 4.0 * (1.0 - v));
                }
            }
            Ok(QuadratureRule {
                domain,
                degree,
                points,
                weights,
            })
        }
    }
}

/// Shared copy of [`quadrature_rule`], built once per `(domain, degree)`.
pub fn cached_rule(domain: Domain, degree: usize) -> Result<Arc<QuadratureRule>> {
    type Cache = Mutex<HashMap<(bool, usize), Arc<QuadratureRule>>>;
    static CACHE: OnceLock<Cache> = OnceLock::new();
    let key = (domain == Domain::Triangle, degree);
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(r) = cache.lock().expect("quadrature cache poisoned").get(&key) {
        return Ok(r.clone());
    }
    let rule = Arc::new(quadrature_rule(domain, degree)?);
    cache
        .lock()
        .expect("quadrature cache poisoned")
        .insert(key, rule.clone());
    Ok(rule)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn factorial(n: u32) -> f64 {
        (1..=n).map(f64::from).product()
    }

    #[test]
    fn linear_moments() {
        let q = quadrature_rule(Domain::Triangle, 1).unwrap();
        assert!((q.weights.iter().sum::<f64>() - 0.5).abs() < 1e-15);
        let ix: f64 = q.iter().map(|(p, w)| w * p[0]).sum();
        assert!((ix - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn quadratic_moment() {
        let q = quadrature_rule(Domain::Triangle, 2).unwrap();
        let ixx: f64 = q.iter().map(|(p, w)| w * p[0] * p[0]).sum();
        assert!((ixx - 1.0 / 12.0).abs() < 1e-14);
    }

    #[test]
    fn triangle_monomials_exact() {
        // int_T x^a y^b = a! b! / (a + b + 2)!
        for deg in [0usize, 3, 8, 15, 25, 30] {
            let q = quadrature_rule(Domain::Triangle, deg).unwrap();
            assert!(q.weights.iter().all(|&w| w > 0.0));
            for a in 0..=deg as u32 {
                for b in 0..=(deg as u32 - a) {
                    let exact = factorial(a) * factorial(b) / factorial(a + b + 2);
                    let got: f64 = q
                        .iter()
                        .map(|(p, w)| w * p[0].powi(a as i32) * p[1].powi(b as i32))
                        .sum();
                    assert!(
                        ((got - exact) / exact).abs() < 1e-13,
                        "deg {deg} x^{a} y^{b}: {got} vs {exact}"
                    );
                }
            }
        }
    }

    #[test]
    fn segment_gauss_exactness() {
        for k in 0..12usize {
            let q = quadrature_rule(Domain::Segment, 2 * k + 1).unwrap();
            assert_eq!(q.len(), k + 1);
            let got: f64 = q.iter().map(|(p, w)| w * p[0].powi(2 * k as i32 + 1)).sum();
            let exact = 1.0 / (2.0 * k as f64 + 2.0);
            assert!((got - exact).abs() < 1e-14);
            let total: f64 = q.weights.iter().sum();
            assert!((total - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn degree_limit_is_an_error() {
        assert!(matches!(
            quadrature_rule(Domain::Triangle, MAX_DEGREE + 1),
            Err(Error::QuadratureDegree { .. })
        ));
    }
}
