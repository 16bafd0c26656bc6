//! Test-side oracles, independent of the library's Taylor-series pipeline:
//! the affine metric, affine normal, difference tensor and shape operator of
//! an n-dimensional parametrized hypersurface, all from plain finite
//! differences of the position map.

#![allow(dead_code)]

pub mod strata;

use nalgebra::{DMatrix, DVector};

pub type Map<'a> = &'a dyn Fn(&[f64]) -> Vec<f64>;

fn shifted(x: &[f64], i: usize, s: f64) -> Vec<f64> {
    let mut y = x.to_vec();
    y[i] += s;
    y
}

fn axpy(acc: &mut [f64], w: f64, v: &[f64]) {
    for (a, b) in acc.iter_mut().zip(v) {
        *a += w * b;
    }
}

/// Fourth-order central first derivative of a vector function.
pub fn d1(f: &dyn Fn(&[f64]) -> Vec<f64>, x: &[f64], i: usize, e: f64) -> Vec<f64> {
    let mut out = vec![0.0; f(x).len()];
    for (s, w) in [(-2.0, 1.0), (-1.0, -8.0), (1.0, 8.0), (2.0, -1.0)] {
        axpy(&mut out, w / (12.0 * e), &f(&shifted(x, i, s * e)));
    }
    out
}

/// Fourth-order central second derivative `∂_i ∂_j f`.
pub fn d2(f: &dyn Fn(&[f64]) -> Vec<f64>, x: &[f64], i: usize, j: usize, e: f64) -> Vec<f64> {
    if i == j {
        let mut out = vec![0.0; f(x).len()];
        for (s, w) in [
            (-2.0, -1.0),
            (-1.0, 16.0),
            (0.0, -30.0),
            (1.0, 16.0),
            (2.0, -1.0),
        ] {
            axpy(&mut out, w / (12.0 * e * e), &f(&shifted(x, i, s * e)));
        }
        out
    } else {
        d1(&|y: &[f64]| d1(f, y, j, e), x, i, e)
    }
}

/// Everything the oracle reconstructs at one point.
pub struct Oracle {
    pub n: usize,
    pub h: DMatrix<f64>,
    pub xi: DVector<f64>,
    /// `k[m][(i, j)] = K^m_ij`.
    pub k: Vec<DMatrix<f64>>,
    /// Coordinate matrix of the shape operator, `S ∂_i = Σ_m s[(m, i)] ∂_m`.
    pub s: DMatrix<f64>,
}

const INNER: f64 = 1e-3;
const OUTER: f64 = 1e-2;

fn det_with(cols: &[Vec<f64>], last: &[f64]) -> f64 {
    let d = last.len();
    DMatrix::from_fn(d, d, |r, c| if c + 1 < d { cols[c][r] } else { last[r] }).determinant()
}

/// Positive definite affine metric at `x`.
fn metric(f: Map, x: &[f64]) -> DMatrix<f64> {
    let n = x.len();
    let first: Vec<Vec<f64>> = (0..n).map(|i| d1(f, x, i, INNER)).collect();
    let g = DMatrix::from_fn(n, n, |i, j| det_with(&first, &d2(f, x, i, j, INNER)));
    let g = if g.clone().cholesky().is_some() {
        g
    } else {
        -g
    };
    let det = g.determinant();
    assert!(det > 0.0, "oracle: affine metric not definite");
    g * det.powf(-1.0 / (n as f64 + 2.0))
}

/// Levi-Civita symbols `lc[k][(i, j)]` from FD of the metric.
fn levi_civita(f: Map, x: &[f64], h: &DMatrix<f64>) -> Vec<DMatrix<f64>> {
    let n = x.len();
    let flat = |y: &[f64]| metric(f, y).as_slice().to_vec();
    let dh: Vec<DMatrix<f64>> = (0..n)
        .map(|l| DMatrix::from_column_slice(n, n, &d1(&flat, x, l, OUTER)))
        .collect();
    let hi = h.clone().try_inverse().unwrap();
    (0..n)
        .map(|k| {
            DMatrix::from_fn(n, n, |i, j| {
                (0..n)
                    .map(|l| 0.5 * hi[(k, l)] * (dh[i][(j, l)] + dh[j][(i, l)] - dh[l][(i, j)]))
                    .sum()
            })
        })
        .collect()
}

/// Affine normal `ξ = Δ_h F / n`.
pub fn affine_normal(f: Map, x: &[f64]) -> DVector<f64> {
    let n = x.len();
    let h = metric(f, x);
    let hi = h.clone().try_inverse().unwrap();
    let lc = levi_civita(f, x, &h);
    let first: Vec<Vec<f64>> = (0..n).map(|i| d1(f, x, i, INNER)).collect();
    let mut xi = DVector::zeros(n + 1);
    for i in 0..n {
        for j in 0..n {
            let mut v = DVector::from_vec(d2(f, x, i, j, INNER));
            for k in 0..n {
                v -= DVector::from_vec(first[k].clone()) * lc[k][(i, j)];
            }
            xi += v * hi[(i, j)];
        }
    }
    xi / n as f64
}

pub fn oracle(f: Map, x: &[f64]) -> Oracle {
    let n = x.len();
    let h = metric(f, x);
    let lc = levi_civita(f, x, &h);
    let xi = affine_normal(f, x);
    let first: Vec<Vec<f64>> = (0..n).map(|i| d1(f, x, i, INNER)).collect();
    let frame = DMatrix::from_fn(n + 1, n + 1, |r, c| if c < n { first[c][r] } else { xi[r] });
    let lu = frame.lu();
    let mut k = vec![DMatrix::zeros(n, n); n];
    for i in 0..n {
        for j in 0..n {
            let sol = lu.solve(&DVector::from_vec(d2(f, x, i, j, INNER))).unwrap();
            for m in 0..n {
                k[m][(i, j)] = sol[m] - lc[m][(i, j)];
            }
        }
    }
    let xi_fn = |y: &[f64]| affine_normal(f, y).as_slice().to_vec();
    let mut s = DMatrix::zeros(n, n);
    for i in 0..n {
        let sol = lu
            .solve(&DVector::from_vec(d1(&xi_fn, x, i, OUTER)))
            .unwrap();
        for m in 0..n {
            s[(m, i)] = -sol[m];
        }
    }
    Oracle { n, h, xi, k, s }
}

impl Oracle {
    /// `|K|²_h = h^{ii'} h^{jj'} h_{mm'} K^m_ij K^m'_i'j'`.
    pub fn k_norm2(&self) -> f64 {
        let n = self.n;
        let hi = self.h.clone().try_inverse().unwrap();
        let mut s = 0.0;
        for i in 0..n {
            for ii in 0..n {
                for j in 0..n {
                    for jj in 0..n {
                        for m in 0..n {
                            for mm in 0..n {
                                s += hi[(i, ii)]
                                    * hi[(j, jj)]
                                    * self.h[(m, mm)]
                                    * self.k[m][(i, j)]
                                    * self.k[mm][(ii, jj)];
                            }
                        }
                    }
                }
            }
        }
        s
    }

    /// Eigenvalues of the shape operator, ascending.
    pub fn shape_eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = self
            .s
            .clone()
            .complex_eigenvalues()
            .iter()
            .map(|z| z.re)
            .collect();
        ev.sort_by(f64::total_cmp);
        ev
    }
}
