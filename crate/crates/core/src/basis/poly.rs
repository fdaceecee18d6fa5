//! Dense bivariate polynomials in monomial form.
//!
//! Used to build the cell bases symbolically, so that values and gradients are
//! exact polynomial evaluations with no collapsed-coordinate singularity.

use std::ops::{Add, Mul, Sub};

/// `sum c[i][j] x^i y^j` with `i + j <= degree`.
#[derive(Debug, Clone, PartialEq)]
pub struct Poly2 {
    degree: usize,
    // c[i * (degree + 1) + j]
    coeffs: Vec<f64>,
}

impl Poly2 {
    pub fn zero(degree: usize) -> Self {
        Poly2 {
            degree,
            coeffs: vec![0.0; (degree + 1) * (degree + 1)],
        }
    }

    pub fn constant(c: f64) -> Self {
        let mut p = Poly2::zero(0);
        p.coeffs[0] = c;
        p
    }

    pub fn x() -> Self {
        let mut p = Poly2::zero(1);
        p.set(1, 0, 1.0);
        p
    }

    pub fn y() -> Self {
        let mut p = Poly2::zero(1);
        p.set(0, 1, 1.0);
        p
    }

    /// `c0 + cx x + cy y`
    pub fn affine(c0: f64, cx: f64, cy: f64) -> Self {
        let mut p = Poly2::zero(1);
        p.set(0, 0, c0);
        p.set(1, 0, cx);
        p.set(0, 1, cy);
        p
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        i * (self.degree + 1) + j
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i + j > self.degree {
            0.0
        } else {
            self.coeffs[self.idx(i, j)]
        }
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        assert!(i + j <= self.degree, "monomial outside declared degree");
        let k = self.idx(i, j);
        self.coeffs[k] = v;
    }

    fn with_degree(&self, degree: usize) -> Self {
        let mut p = Poly2::zero(degree);
        for i in 0..=self.degree.min(degree) {
            for j in 0..=(self.degree - i).min(degree - i) {
                p.set(i, j, self.get(i, j));
            }
        }
        p
    }

    pub fn scale(&self, s: f64) -> Self {
        Poly2 {
            degree: self.degree,
            coeffs: self.coeffs.iter().map(|c| c * s).collect(),
        }
    }

    pub fn pow(&self, n: usize) -> Self {
        (0..n).fold(Poly2::constant(1.0), |acc, _| &acc * self)
    }

    pub fn dx(&self) -> Self {
        let deg = self.degree.saturating_sub(1);
        let mut p = Poly2::zero(deg);
        for i in 1..=self.degree {
            for j in 0..=(self.degree - i) {
                p.set(i - 1, j, i as f64 * self.get(i, j));
            }
        }
        p
    }

    pub fn dy(&self) -> Self {
        let deg = self.degree.saturating_sub(1);
        let mut p = Poly2::zero(deg);
        for i in 0..self.degree {
            for j in 1..=(self.degree - i) {
                p.set(i, j - 1, j as f64 * self.get(i, j));
            }
        }
        p
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        // Horner in x over Horner-in-y coefficients.
        let mut acc = 0.0;
        for i in (0..=self.degree).rev() {
            let mut row = 0.0;
            for j in (0..=(self.degree - i)).rev() {
                row = row * y + self.coeffs[self.idx(i, j)];
            }
            acc = acc * x + row;
        }
        acc
    }

    /// Compose a univariate polynomial (coefficients in ascending order) with
    /// this polynomial: `sum_n c[n] self^n`.
    pub fn compose_univariate(c: &[f64], inner: &Poly2) -> Poly2 {
        let mut result = Poly2::constant(0.0);
        let mut power = Poly2::constant(1.0);
        for (n, &cn) in c.iter().enumerate() {
            if n > 0 {
                power = &power * inner;
            }
            if cn != 0.0 {
                result = &result + &power.scale(cn);
            }
        }
        result
    }
}

impl<'a> Add<&'a Poly2> for &'a Poly2 {
    type Output = Poly2;
    fn add(self, rhs: &Poly2) -> Poly2 {
        let deg = self.degree.max(rhs.degree);
        let mut p = self.with_degree(deg);
        for i in 0..=rhs.degree {
            for j in 0..=(rhs.degree - i) {
                let k = p.idx(i, j);
                p.coeffs[k] += rhs.get(i, j);
            }
        }
        p
    }
}

impl<'a> Sub<&'a Poly2> for &'a Poly2 {
    type Output = Poly2;
    fn sub(self, rhs: &Poly2) -> Poly2 {
        self + &rhs.scale(-1.0)
    }
}

impl<'a> Mul<&'a Poly2> for &'a Poly2 {
    type Output = Poly2;
    fn mul(self, rhs: &Poly2) -> Poly2 {
        let mut p = Poly2::zero(self.degree + rhs.degree);
        for i in 0..=self.degree {
            for j in 0..=(self.degree - i) {
                let a = self.get(i, j);
                if a == 0.0 {
                    continue;
                }
                for k in 0..=rhs.degree {
                    for l in 0..=(rhs.degree - k) {
                        let idx = p.idx(i + k, j + l);
                        p.coeffs[idx] += a * rhs.get(k, l);
                    }
                }
            }
        }
        p
    }
}

/// Coefficients (ascending powers) of the Jacobi polynomial `P_n^{(alpha, beta)}`.
pub fn jacobi_coefficients(n: usize, alpha: f64, beta: f64) -> Vec<f64> {
    let mut p0 = vec![1.0];
    if n == 0 {
        return p0;
    }
    let mut p1 = vec![(alpha - beta) / 2.0, (alpha + beta + 2.0) / 2.0];
    for m in 2..=n {
        let m_f = m as f64;
        let s = 2.0 * m_f + alpha + beta;
        let a = 2.0 * m_f * (m_f + alpha + beta) * (s - 2.0);
        let b = (s - 1.0) * s * (s - 2.0);
        let c = (s - 1.0) * (alpha * alpha - beta * beta);
        let d = 2.0 * (m_f + alpha - 1.0) * (m_f + beta - 1.0) * s;
        let mut next = vec![0.0; m + 1];
        for (i, &v) in p1.iter().enumerate() {
            next[i + 1] += b * v / a;
            next[i] += c * v / a;
        }
        for (i, &v) in p0.iter().enumerate() {
            next[i] -= d * v / a;
        }
        p0 = p1;
        p1 = next;
    }
    p1
}

/// Legendre polynomial `P_n` and its derivative at `x`.
pub fn legendre(n: usize, x: f64) -> (f64, f64) {
    if n == 0 {
        return (1.0, 0.0);
    }
    let (mut p0, mut p1) = (1.0, x);
    for m in 2..=n {
        let m_f = m as f64;
        let p2 = ((2.0 * m_f - 1.0) * x * p1 - (m_f - 1.0) * p0) / m_f;
        p0 = p1;
        p1 = p2;
    }
    let dp = if (x * x - 1.0).abs() < 1e-14 {
        let nf = n as f64;
        x.powi(n as i32 + 1) * nf * (nf + 1.0) / 2.0
    } else {
        n as f64 * (x * p1 - p0) / (x * x - 1.0)
    };
    (p1, dp)
}
