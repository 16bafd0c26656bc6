//! Truncated multivariate Taylor series in three variables.
//!
//! A [`Series`] holds the Taylor coefficients of a function of `(t, u, v)`
//! around a base point, up to total degree [`MAX_ORDER`]. Arithmetic is
//! exact up to roundoff on the retained coefficients, so composing closed-form
//! immersions with the Blaschke construction yields analytic derivatives of
//! every intermediate field (metric, normal, Christoffels) without finite
//! differences.
//!
//! Every series carries the order up to which its coefficients are valid.
//! Differentiation lowers it by one; binary operations take the minimum.

use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};
use std::sync::OnceLock;

pub const NVARS: usize = 3;
pub const MAX_ORDER: usize = 4;
/// Number of monomials of degree <= 4 in three variables.
pub const NCOEF: usize = 35;

pub type MultiIndex = [u8; NVARS];

struct Tables {
    exps: Vec<MultiIndex>,
    degree: Vec<u8>,
    lookup: [[[u8; MAX_ORDER + 1]; MAX_ORDER + 1]; MAX_ORDER + 1],
    /// (i, j, k) with exps[i] + exps[j] = exps[k], sorted by degree of k.
    products: Vec<(u8, u8, u8)>,
}

fn tables() -> &'static Tables {
    static TABLES: OnceLock<Tables> = OnceLock::new();
    TABLES.get_or_init(|| {
        let mut exps = Vec::with_capacity(NCOEF);
        for d in 0..=MAX_ORDER as u8 {
            for a in (0..=d).rev() {
                for b in (0..=d - a).rev() {
                    exps.push([a, b, d - a - b]);
                }
            }
        }
        debug_assert_eq!(exps.len(), NCOEF);
        let degree: Vec<u8> = exps.iter().map(|e| e[0] + e[1] + e[2]).collect();
        let mut lookup = [[[u8::MAX; MAX_ORDER + 1]; MAX_ORDER + 1]; MAX_ORDER + 1];
        for (i, e) in exps.iter().enumerate() {
            lookup[e[0] as usize][e[1] as usize][e[2] as usize] = i as u8;
        }
        let mut products = Vec::new();
        for (i, a) in exps.iter().enumerate() {
            for (j, b) in exps.iter().enumerate() {
                let s = [a[0] + b[0], a[1] + b[1], a[2] + b[2]];
                if (s[0] + s[1] + s[2]) as usize <= MAX_ORDER {
                    let k = lookup[s[0] as usize][s[1] as usize][s[2] as usize];
                    products.push((i as u8, j as u8, k));
                }
            }
        }
        products.sort_by_key(|&(_, _, k)| degree[k as usize]);
        Tables {
            exps,
            degree,
            lookup,
            products,
        }
    })
}

/// Position of a multi-index in the coefficient array, if its degree is <= 4.
pub fn index_of(alpha: MultiIndex) -> Option<usize> {
    if alpha.iter().map(|&a| a as usize).sum::<usize>() > MAX_ORDER {
        return None;
    }
    Some(tables().lookup[alpha[0] as usize][alpha[1] as usize][alpha[2] as usize] as usize)
}

/// All multi-indices of total degree <= `order`, graded by degree.
pub fn multi_indices(order: usize) -> impl Iterator<Item = MultiIndex> {
    let t = tables();
    t.exps
        .iter()
        .zip(t.degree.iter())
        .filter(move |(_, &d)| d as usize <= order)
        .map(|(e, _)| *e)
}

fn factorial(n: u8) -> f64 {
    (1..=n as u32).map(f64::from).product()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Series {
    c: [f64; NCOEF],
    order: u8,
}

impl Series {
    pub fn constant(value: f64, order: usize) -> Self {
        let mut c = [0.0; NCOEF];
        c[0] = value;
        Series {
            c,
            order: order.min(MAX_ORDER) as u8,
        }
    }

    /// The coordinate function `x_i` expanded around `value`.
    pub fn var(i: usize, value: f64, order: usize) -> Self {
        let mut s = Self::constant(value, order);
        if order >= 1 {
            let mut e = [0u8; NVARS];
            e[i] = 1;
            s.c[index_of(e).unwrap()] = 1.0;
        }
        s
    }

    /// Series with the given Taylor coefficients (graded order), truncated
    /// to `order`.
    pub fn from_coeffs(c: [f64; NCOEF], order: usize) -> Self {
        Series {
            c,
            order: order as u8,
        }
        .truncate(order)
    }

    pub fn zero(order: usize) -> Self {
        Self::constant(0.0, order)
    }

    pub fn order(&self) -> usize {
        self.order as usize
    }

    pub fn value(&self) -> f64 {
        self.c[0]
    }

    pub fn coeff(&self, alpha: MultiIndex) -> f64 {
        index_of(alpha).map_or(0.0, |i| self.c[i])
    }

    /// The partial derivative `∂^alpha` at the base point.
    pub fn partial(&self, alpha: MultiIndex) -> f64 {
        let f: f64 = alpha.iter().map(|&a| factorial(a)).product();
        f * self.coeff(alpha)
    }

    pub fn truncate(mut self, order: usize) -> Self {
        let order = order.min(self.order as usize);
        let t = tables();
        for (k, d) in t.degree.iter().enumerate() {
            if *d as usize > order {
                self.c[k] = 0.0;
            }
        }
        self.order = order as u8;
        self
    }

    /// Partial derivative with respect to variable `i`, valid to one order less.
    pub fn d(&self, i: usize) -> Self {
        assert!(self.order >= 1, "cannot differentiate an order-0 series");
        let t = tables();
        let order = self.order as usize - 1;
        let mut c = [0.0; NCOEF];
        for (k, e) in t.exps.iter().enumerate() {
            if t.degree[k] as usize > order {
                break;
            }
            let mut up = *e;
            up[i] += 1;
            let src = index_of(up).unwrap();
            c[k] = (e[i] as f64 + 1.0) * self.c[src];
        }
        Series {
            c,
            order: order as u8,
        }
    }

    /// Evaluates `g(self)` given the derivatives `g^(k)(a0)`, k = 0..=order,
    /// at the constant term `a0`.
    pub fn compose(&self, derivs: &[f64]) -> Self {
        let order = self.order as usize;
        let mut delta = *self;
        delta.c[0] = 0.0;
        let mut out = Self::constant(derivs[0], order);
        let mut power = Self::constant(1.0, order);
        let mut fact = 1.0;
        for (k, dk) in derivs.iter().enumerate().take(order + 1).skip(1) {
            power *= delta;
            fact *= k as f64;
            out += power * (dk / fact);
        }
        out
    }

    pub fn exp(&self) -> Self {
        let e = self.c[0].exp();
        self.compose(&[e; MAX_ORDER + 1])
    }

    pub fn ln(&self) -> Self {
        let a = self.c[0];
        let mut d = [a.ln(), 0.0, 0.0, 0.0, 0.0];
        // d^k/da^k ln a = (-1)^(k-1) (k-1)! / a^k
        let mut f = 1.0;
        for k in 1..=MAX_ORDER {
            d[k] = f / a.powi(k as i32);
            f *= -(k as f64);
        }
        self.compose(&d)
    }

    pub fn powf(&self, p: f64) -> Self {
        let a = self.c[0];
        let mut d = [0.0; MAX_ORDER + 1];
        let mut coef = 1.0;
        for (k, dk) in d.iter_mut().enumerate() {
            *dk = coef * a.powf(p - k as f64);
            coef *= p - k as f64;
        }
        self.compose(&d)
    }

    pub fn sqrt(&self) -> Self {
        self.powf(0.5)
    }

    pub fn recip(&self) -> Self {
        let a = self.c[0];
        let mut d = [0.0; MAX_ORDER + 1];
        let mut coef = 1.0;
        for (k, dk) in d.iter_mut().enumerate() {
            *dk = coef / a.powi(k as i32 + 1);
            coef *= -(k as f64 + 1.0);
        }
        self.compose(&d)
    }

    pub fn sin(&self) -> Self {
        let (s, c) = self.c[0].sin_cos();
        self.compose(&[s, c, -s, -c, s])
    }

    pub fn cos(&self) -> Self {
        let (s, c) = self.c[0].sin_cos();
        self.compose(&[c, -s, -c, s, c])
    }

    pub fn sinh(&self) -> Self {
        let (s, c) = (self.c[0].sinh(), self.c[0].cosh());
        self.compose(&[s, c, s, c, s])
    }

    pub fn cosh(&self) -> Self {
        let (s, c) = (self.c[0].sinh(), self.c[0].cosh());
        self.compose(&[c, s, c, s, c])
    }

    pub fn square(&self) -> Self {
        *self * *self
    }

    pub fn scale(mut self, k: f64) -> Self {
        self.c.iter_mut().for_each(|x| *x *= k);
        self
    }
}

impl Add for Series {
    type Output = Series;
    fn add(self, rhs: Series) -> Series {
        let order = self.order.min(rhs.order) as usize;
        let mut c = [0.0; NCOEF];
        for k in 0..NCOEF {
            c[k] = self.c[k] + rhs.c[k];
        }
        Series {
            c,
            order: order as u8,
        }
        .truncate(order)
    }
}

impl Sub for Series {
    type Output = Series;
    fn sub(self, rhs: Series) -> Series {
        self + (-rhs)
    }
}

impl Neg for Series {
    type Output = Series;
    fn neg(self) -> Series {
        self.scale(-1.0)
    }
}

impl Mul for Series {
    type Output = Series;
    fn mul(self, rhs: Series) -> Series {
        let order = self.order.min(rhs.order);
        let t = tables();
        let mut c = [0.0; NCOEF];
        for &(i, j, k) in &t.products {
            if t.degree[k as usize] > order {
                break;
            }
            c[k as usize] += self.c[i as usize] * rhs.c[j as usize];
        }
        Series { c, order }
    }
}

impl Div for Series {
    type Output = Series;
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn div(self, rhs: Series) -> Series {
        self * rhs.recip()
    }
}

impl Add<f64> for Series {
    type Output = Series;
    fn add(mut self, rhs: f64) -> Series {
        self.c[0] += rhs;
        self
    }
}

impl Sub<f64> for Series {
    type Output = Series;
    fn sub(mut self, rhs: f64) -> Series {
        self.c[0] -= rhs;
        self
    }
}

impl Mul<f64> for Series {
    type Output = Series;
    fn mul(self, rhs: f64) -> Series {
        self.scale(rhs)
    }
}

impl Mul<Series> for f64 {
    type Output = Series;
    fn mul(self, rhs: Series) -> Series {
        rhs.scale(self)
    }
}

impl AddAssign for Series {
    fn add_assign(&mut self, rhs: Series) {
        *self = *self + rhs;
    }
}

impl SubAssign for Series {
    fn sub_assign(&mut self, rhs: Series) {
        *self = *self - rhs;
    }
}

impl MulAssign for Series {
    fn mul_assign(&mut self, rhs: Series) {
        *self = *self * rhs;
    }
}

/// Determinant of a square matrix of series (n <= 4), by cofactor expansion.
pub fn det(m: &[Vec<Series>]) -> Series {
    let n = m.len();
    match n {
        0 => Series::constant(1.0, MAX_ORDER),
        1 => m[0][0],
        2 => m[0][0] * m[1][1] - m[0][1] * m[1][0],
        _ => {
            let mut acc: Option<Series> = None;
            for col in 0..n {
                let minor: Vec<Vec<Series>> = m[1..]
                    .iter()
                    .map(|row| {
                        row.iter()
                            .enumerate()
                            .filter(|&(j, _)| j != col)
                            .map(|(_, x)| *x)
                            .collect()
                    })
                    .collect();
                let term = m[0][col] * det(&minor);
                acc = Some(match acc {
                    None => term,
                    Some(a) if col % 2 == 0 => a + term,
                    Some(a) => a - term,
                });
            }
            acc.unwrap()
        }
    }
}

/// Inverse of a symmetric-or-not square matrix of series via the adjugate.
pub fn inverse(m: &[Vec<Series>]) -> Vec<Vec<Series>> {
    let n = m.len();
    let d_inv = det(m).recip();
    let mut out = vec![vec![Series::zero(MAX_ORDER); n]; n];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, x) in row.iter_mut().enumerate() {
            // cofactor of (j, i)
            let minor: Vec<Vec<Series>> = m
                .iter()
                .enumerate()
                .filter(|&(r, _)| r != j)
                .map(|(_, r)| {
                    r.iter()
                        .enumerate()
                        .filter(|&(c, _)| c != i)
                        .map(|(_, x)| *x)
                        .collect()
                })
                .collect();
            let cof = if n == 1 {
                Series::constant(1.0, MAX_ORDER)
            } else {
                det(&minor)
            };
            let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
            *x = cof * d_inv * sign;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + b.abs())
    }

    #[test]
    fn index_table_is_graded() {
        assert_eq!(index_of([0, 0, 0]), Some(0));
        assert_eq!(multi_indices(1).count(), 4);
        assert_eq!(multi_indices(4).count(), NCOEF);
        assert_eq!(index_of([3, 1, 1]), None);
    }

    #[test]
    fn product_matches_polynomial_derivatives() {
        // f = t^2 u + exp(v) at (0.3, -0.2, 0.5)
        let (t0, u0, v0) = (0.3, -0.2, 0.5);
        let t = Series::var(0, t0, 4);
        let u = Series::var(1, u0, 4);
        let v = Series::var(2, v0, 4);
        let f = t * t * u + v.exp();
        assert!(close(f.value(), t0 * t0 * u0 + v0.exp(), 1e-15));
        assert!(close(f.partial([1, 0, 0]), 2.0 * t0 * u0, 1e-14));
        assert!(close(f.partial([2, 1, 0]), 2.0, 1e-14));
        assert!(close(f.partial([0, 0, 4]), v0.exp(), 1e-13));
        assert_eq!(f.partial([3, 0, 0]), 0.0);
    }

    #[test]
    fn elementary_functions_match_known_derivatives() {
        let x0 = 0.7;
        let x = Series::var(0, x0, 4);
        let s = x.sin();
        assert!(close(s.partial([3, 0, 0]), -x0.cos(), 1e-13));
        let l = x.ln();
        assert!(close(l.partial([2, 0, 0]), -1.0 / (x0 * x0), 1e-13));
        let p = x.powf(-0.2);
        // d^2/dx^2 x^-0.2 = 0.24 x^-2.2
        assert!(close(p.partial([2, 0, 0]), 0.24 * x0.powf(-2.2), 1e-13));
        let r = (x * x + 1.0).recip() * (x * x + 1.0);
        assert!(close(r.value(), 1.0, 1e-15));
        for alpha in multi_indices(4).skip(1) {
            assert!(r.coeff(alpha).abs() < 1e-13);
        }
        let ch = x.cosh();
        assert!(close(ch.partial([4, 0, 0]), x0.cosh(), 1e-12));
    }

    #[test]
    fn derivative_lowers_order() {
        let x = Series::var(1, 2.0, 4);
        let y = (x * x * x).d(1);
        assert_eq!(y.order(), 3);
        assert!(close(y.value(), 12.0, 1e-15));
        assert!(close(y.partial([0, 1, 0]), 12.0, 1e-15));
        let z = y * Series::var(0, 1.0, 4);
        assert_eq!(z.order(), 3);
    }

    #[test]
    fn determinant_and_inverse_of_series_matrix() {
        let t = Series::var(0, 0.1, 2);
        let one = Series::constant(1.0, 2);
        let m = vec![
            vec![one + t, t, Series::zero(2)],
            vec![t, one * 2.0, t * t],
            vec![Series::zero(2), t * t, one * 3.0 + t],
        ];
        let inv = inverse(&m);
        for i in 0..3 {
            for j in 0..3 {
                let mut acc = Series::zero(2);
                for k in 0..3 {
                    acc += m[i][k] * inv[k][j];
                }
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((acc.value() - expected).abs() < 1e-14);
                assert!(acc.coeff([1, 0, 0]).abs() < 1e-13);
                assert!(acc.coeff([2, 0, 0]).abs() < 1e-13);
            }
        }
    }
}
