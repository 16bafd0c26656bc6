//! Blaschke structure of a parametrized hypersurface `F: U ⊂ ℝ³ → ℝ⁴`.
//!
//! The pipeline works on truncated Taylor series: from a 4-jet of `F` it
//! builds the affine metric `h` as a 2-jet, the Levi-Civita connection and
//! the affine normal `ξ = (1/n) Δ_h F` as 1-jets, and reads `Dξ` at the base
//! point. Pointwise data (induced connection, shape operator, cubic form) are
//! then solved from the linear relations
//!
//! ```text
//! F_ij  = Γ^k_ij F_k + h_ij ξ
//! ∂_i ξ = -S^k_i F_k
//! ```
//!
//! and expressed in an `h`-orthonormal frame.

use nalgebra::{Matrix3, Matrix4, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::catalog::SurfaceSpec;
use crate::cubic::{CubicTensor, ShapeMatrix};
use crate::error::{GeomError, Result};
use crate::fd::stencil_weights;
use crate::series::{self, MultiIndex, Series, MAX_ORDER, NCOEF};
use crate::symmetry::mat3_rows;

/// Taylor jet of `F` at a parameter point.
#[derive(Clone, Debug)]
pub struct Jet {
    pub point: [f64; 3],
    pub order: usize,
    pub comps: [Series; 4],
    /// Step used when the jet came from finite differences.
    pub fd_step: Option<f64>,
}

fn unit(alpha: usize) -> MultiIndex {
    let mut a = [0u8; 3];
    a[alpha] = 1;
    a
}

impl Jet {
    pub fn value(&self) -> [f64; 4] {
        self.comps.map(|s| s.value())
    }

    pub fn partial(&self, alpha: MultiIndex) -> [f64; 4] {
        self.comps.map(|s| s.partial(alpha))
    }

    pub fn first(&self) -> [[f64; 4]; 3] {
        [0, 1, 2].map(|i| self.partial(unit(i)))
    }

    pub fn second(&self, i: usize, j: usize) -> [f64; 4] {
        let mut a = unit(i);
        a[j] += 1;
        self.partial(a)
    }
}

fn check_order(order: usize) -> Result<()> {
    if order > MAX_ORDER {
        return Err(GeomError::InvalidOrder(order));
    }
    Ok(())
}

fn check_immersion(first: &[[f64; 4]; 3]) -> Result<()> {
    let m = nalgebra::Matrix4x3::from_fn(|r, c| first[c][r]);
    let sv = m.singular_values();
    let (smax, smin) = (sv.max(), sv.min());
    if !(smin > 1e-10 * smax.max(1e-300)) {
        return Err(GeomError::NotImmersion);
    }
    Ok(())
}

/// Analytic jet of `F` at `point` up to `order` (at most 4).
pub fn jet(surface: &SurfaceSpec, point: [f64; 3], order: usize) -> Result<Jet> {
    check_order(order)?;
    if !surface.domain.contains(point) {
        return Err(GeomError::OutsideDomain(point[0], point[1], point[2]));
    }
    let vars = [0, 1, 2].map(|i| Series::var(i, point[i], order.max(1)));
    let comps = surface
        .eval(vars[0], vars[1], vars[2])
        .map(|s| s.truncate(order.max(1)));
    let j = Jet {
        point,
        order,
        comps,
        fd_step: None,
    };
    check_immersion(&j.first())?;
    Ok(Jet {
        comps: comps.map(|s| s.truncate(order)),
        ..j
    })
}

/// Jet of `F` from tensor-product central stencils on offsets `-2..=2` with
/// step `step`.
pub fn jet_fd(surface: &SurfaceSpec, point: [f64; 3], order: usize, step: f64) -> Result<Jet> {
    check_order(order)?;
    for k in 0..3 {
        for s in [-2.0, 2.0] {
            let mut q = point;
            q[k] += s * step;
            if !surface.domain.contains(q) {
                return Err(GeomError::StencilOutsideDomain(q[0], q[1], q[2]));
            }
        }
    }
    if !surface.domain.contains(point) {
        return Err(GeomError::OutsideDomain(point[0], point[1], point[2]));
    }
    let mut coeffs = [[0.0; NCOEF]; 4];
    for alpha in series::multi_indices(order) {
        let w = alpha.map(|a| stencil_weights(a as usize));
        let mut acc = [0.0; 4];
        for a in 0..5 {
            if w[0][a] == 0.0 {
                continue;
            }
            for b in 0..5 {
                if w[1][b] == 0.0 {
                    continue;
                }
                for c in 0..5 {
                    if w[2][c] == 0.0 {
                        continue;
                    }
                    let q = [
                        point[0] + (a as f64 - 2.0) * step,
                        point[1] + (b as f64 - 2.0) * step,
                        point[2] + (c as f64 - 2.0) * step,
                    ];
                    let x = surface.position(q);
                    let wt = w[0][a] * w[1][b] * w[2][c];
                    for k in 0..4 {
                        acc[k] += wt * x[k];
                    }
                }
            }
        }
        let deg: i32 = alpha.iter().map(|&a| a as i32).sum();
        let fact: f64 = alpha
            .iter()
            .map(|&a| (1..=a as u32).product::<u32>() as f64)
            .product();
        let idx = series::index_of(alpha).unwrap();
        for k in 0..4 {
            coeffs[k][idx] = acc[k] / step.powi(deg) / fact;
        }
    }
    let comps = coeffs.map(|c| Series::from_coeffs(c, order));
    let j = Jet {
        point,
        order,
        comps,
        fd_step: Some(step),
    };
    if order >= 1 {
        check_immersion(&j.first())?;
    }
    Ok(j)
}

fn det4(cols: [[f64; 4]; 4]) -> f64 {
    Matrix4::from_fn(|r, c| cols[c][r]).determinant()
}

/// Output of the split of `D²F` along a tentative transversal.
#[derive(Clone, Debug)]
pub struct TentativeSplit {
    /// `christoffel[k][i][j] = Γ̃^k_ij`.
    pub christoffel: [[[f64; 3]; 3]; 3],
    pub g: Matrix3<f64>,
    /// Transversal scaled to `det(F_1, F_2, F_3, ξ̃) = 1`.
    pub transversal: [f64; 4],
}

/// Coordinate axis of ℝ⁴ farthest from the tangent space (ties resolved in
/// the order e4, e3, e2, e1).
pub fn default_transversal(first: &[[f64; 4]; 3]) -> [f64; 4] {
    let m = nalgebra::Matrix4x3::from_fn(|r, c| first[c][r]);
    let qr = m.qr();
    let q = qr.q();
    let mut best = (3usize, -1.0);
    for k in [3usize, 2, 1, 0] {
        let e = Vector4::ith(k, 1.0);
        let proj = q * (q.transpose() * e);
        let res = (e - proj).norm();
        if res > best.1 + 1e-12 {
            best = (k, res);
        }
    }
    let mut t = [0.0; 4];
    t[best.0] = 1.0;
    t
}

/// Solves `F_ij = Γ̃^k_ij F_k + G_ij ξ̃` for a tentative transversal (the
/// default axis when `transversal` is `None`).
pub fn tentative_split(jet: &Jet, transversal: Option<[f64; 4]>) -> Result<TentativeSplit> {
    if jet.order < 2 {
        return Err(GeomError::InvalidOrder(jet.order));
    }
    let first = jet.first();
    check_immersion(&first)?;
    let mut xi = transversal.unwrap_or_else(|| default_transversal(&first));
    let mut vol = det4([first[0], first[1], first[2], xi]);
    let scale: f64 = first.iter().map(|v| Vector4::from(*v).norm()).product();
    if vol.abs() <= 1e-12 * scale {
        // tangent transversal: fall back to the default choice
        xi = default_transversal(&first);
        vol = det4([first[0], first[1], first[2], xi]);
    }
    let xi = xi.map(|x| x / vol);
    let m = Matrix4::from_fn(|r, c| if c < 3 { first[c][r] } else { xi[r] });
    let lu = m.lu();
    let mut christoffel = [[[0.0; 3]; 3]; 3];
    let mut g = Matrix3::zeros();
    for i in 0..3 {
        for j in i..3 {
            let rhs = Vector4::from(jet.second(i, j));
            let x = lu.solve(&rhs).ok_or(GeomError::NotImmersion)?;
            for k in 0..3 {
                christoffel[k][i][j] = x[k];
                christoffel[k][j][i] = x[k];
            }
            g[(i, j)] = x[3];
            g[(j, i)] = x[3];
        }
    }
    Ok(TentativeSplit {
        christoffel,
        g,
        transversal: xi,
    })
}

/// `h = ε |det G|^{-1/5} G` with `ε = ±1` making `h` positive definite.
/// Returns `(h, ε)`.
pub fn affine_metric(g: &Matrix3<f64>) -> Result<(Matrix3<f64>, f64)> {
    let d = g.determinant();
    let scale = g.abs().max().powi(3).max(1e-300);
    if d.abs() <= 1e-14 * scale || !d.is_finite() {
        return Err(GeomError::Degenerate(d));
    }
    let ev = g.symmetric_eigen().eigenvalues;
    let eps = if ev.iter().all(|&x| x > 0.0) {
        1.0
    } else if ev.iter().all(|&x| x < 0.0) {
        -1.0
    } else {
        return Err(GeomError::Indefinite);
    };
    Ok((g * (eps * d.abs().powf(-1.0 / 5.0)), eps))
}

/// Gram–Schmidt of the columns of `basis` with respect to `h`, in order.
pub fn orthonormalize(h: &Matrix3<f64>, basis: &Matrix3<f64>) -> Result<Matrix3<f64>> {
    let mut out = Matrix3::zeros();
    for a in 0..3 {
        let mut v: Vector3<f64> = basis.column(a).into_owned();
        for _ in 0..2 {
            for b in 0..a {
                let e: Vector3<f64> = out.column(b).into_owned();
                v -= e * (e.dot(&(h * v)));
            }
        }
        let n2 = v.dot(&(h * v));
        if !(n2 > 0.0) {
            return Err(GeomError::Indefinite);
        }
        out.set_column(a, &(v / n2.sqrt()));
    }
    Ok(out)
}

/// Blaschke data of an `n`-dimensional hypersurface carried as series.
#[derive(Clone, Debug)]
pub struct SeriesBlaschke {
    pub n: usize,
    pub h: Vec<Vec<Series>>,
    pub h_inv: Vec<Vec<Series>>,
    /// `lc[k][i][j] = Γ̂^k_ij`.
    pub lc: Vec<Vec<Vec<Series>>>,
    pub xi: Vec<Series>,
    pub orientation: f64,
}

/// Metric, Levi-Civita connection and affine normal of the hypersurface
/// `f: ℝⁿ → ℝⁿ⁺¹` (`n` = 2 or 3) given as series in the first `n` variables.
pub fn blaschke_series(n: usize, f: &[Series]) -> Result<SeriesBlaschke> {
    assert_eq!(f.len(), n + 1);
    let first: Vec<Vec<Series>> = (0..n).map(|i| f.iter().map(|c| c.d(i)).collect()).collect();
    let second: Vec<Vec<Vec<Series>>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| first[i].iter().map(|c| c.d(j)).collect())
                .collect()
        })
        .collect();
    let mut g = vec![vec![Series::zero(MAX_ORDER); n]; n];
    for i in 0..n {
        for j in i..n {
            let mut rows: Vec<Vec<Series>> = first.clone();
            rows.push(second[i][j].clone());
            let d = series::det(&rows);
            g[i][j] = d;
            g[j][i] = d;
        }
    }
    let g0 = nalgebra::DMatrix::from_fn(n, n, |i, j| g[i][j].value());
    let scale = g0.abs().max().powi(n as i32).max(1e-300);
    let det0 = g0.determinant();
    if det0.abs() <= 1e-14 * scale || !det0.is_finite() {
        return Err(GeomError::Degenerate(det0));
    }
    let ev = g0.symmetric_eigen().eigenvalues;
    let eps = if ev.iter().all(|&x| x > 0.0) {
        1.0
    } else if ev.iter().all(|&x| x < 0.0) {
        -1.0
    } else {
        return Err(GeomError::Indefinite);
    };
    let det_abs = series::det(&g) * det0.signum();
    let factor = det_abs.powf(-1.0 / (n as f64 + 2.0)) * eps;
    let h: Vec<Vec<Series>> = g
        .iter()
        .map(|row| row.iter().map(|x| *x * factor).collect())
        .collect();
    let h_inv = series::inverse(&h);
    let dh: Vec<Vec<Vec<Series>>> = (0..n)
        .map(|l| {
            (0..n)
                .map(|i| (0..n).map(|j| h[i][j].d(l)).collect())
                .collect()
        })
        .collect();
    let mut lc = vec![vec![vec![Series::zero(MAX_ORDER); n]; n]; n];
    for k in 0..n {
        for i in 0..n {
            for j in i..n {
                let mut acc = Series::zero(MAX_ORDER);
                for l in 0..n {
                    acc += h_inv[k][l] * (dh[i][j][l] + dh[j][i][l] - dh[l][i][j]);
                }
                let v = acc * 0.5;
                lc[k][i][j] = v;
                lc[k][j][i] = v;
            }
        }
    }
    let mut xi = vec![Series::zero(MAX_ORDER); n + 1];
    for i in 0..n {
        for j in 0..n {
            for (c, x) in xi.iter_mut().enumerate() {
                let mut lap = second[i][j][c];
                for k in 0..n {
                    lap -= lc[k][i][j] * first[k][c];
                }
                *x += h_inv[i][j] * lap;
            }
        }
    }
    let xi: Vec<Series> = xi.into_iter().map(|x| x * (1.0 / n as f64)).collect();
    Ok(SeriesBlaschke {
        n,
        h,
        h_inv,
        lc,
        xi,
        orientation: eps,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// `max_b |Σ_a C_aab|`.
    pub apolarity: f64,
    /// `|det(F_1, F_2, F_3, ξ) - ε √det h| / √det h`.
    pub volume: f64,
    /// Largest transversal component of `∂_i ξ`.
    pub tangency: f64,
    /// `max |g_ij - h_ij|` for the metric recovered from the true split.
    pub metric_mismatch: f64,
    pub cubic_asymmetry: f64,
    pub shape_asymmetry: f64,
}

/// Full Blaschke apparatus at one point.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PointApparatus {
    pub point: [f64; 3],
    pub position: [f64; 4],
    pub tangents: [[f64; 4]; 3],
    pub xi: [f64; 4],
    /// Sign `ε` with `det(F_1, F_2, F_3, ξ) = ε √det h`.
    pub orientation: f64,
    #[serde(with = "mat3_rows")]
    pub h: Matrix3<f64>,
    /// `dh[l][i][j] = ∂_l h_ij`.
    pub dh: [[[f64; 3]; 3]; 3],
    /// `christoffel[k][i][j] = Γ^k_ij` of the induced connection.
    pub christoffel: [[[f64; 3]; 3]; 3],
    /// Levi-Civita connection of `h`, same layout.
    pub levi_civita: [[[f64; 3]; 3]; 3],
    /// `S ∂_i = Σ_k shape_coord[(k, i)] ∂_k`.
    #[serde(with = "mat3_rows")]
    pub shape_coord: Matrix3<f64>,
    /// Columns: coordinates of the orthonormal frame.
    #[serde(with = "mat3_rows")]
    pub frame_coeffs: Matrix3<f64>,
    pub frame: [[f64; 4]; 3],
    pub cubic: CubicTensor,
    #[serde(with = "mat3_rows")]
    pub shape: ShapeMatrix,
    pub diagnostics: Diagnostics,
}

impl PointApparatus {
    /// Coordinate components `K^k_ij` of the difference tensor.
    pub fn difference_tensor(&self) -> [[[f64; 3]; 3]; 3] {
        let mut k = [[[0.0; 3]; 3]; 3];
        for a in 0..3 {
            for i in 0..3 {
                for j in 0..3 {
                    k[a][i][j] = self.christoffel[a][i][j] - self.levi_civita[a][i][j];
                }
            }
        }
        k
    }

    /// `Kc_ijl = h_lk K^k_ij`.
    pub fn lowered_difference(&self) -> [[[f64; 3]; 3]; 3] {
        let k = self.difference_tensor();
        let mut out = [[[0.0; 3]; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                for l in 0..3 {
                    out[i][j][l] = (0..3).map(|m| self.h[(l, m)] * k[m][i][j]).sum();
                }
            }
        }
        out
    }
}

/// Tangency tolerance for `Dξ`, relative to `max(1, |∂ξ|)`.
pub const TANGENCY_TOL: f64 = 1e-6;

fn series_vars(point: [f64; 3]) -> [Series; 3] {
    [0, 1, 2].map(|i| Series::var(i, point[i], MAX_ORDER))
}

/// Affine normal of the surface at `point`.
pub fn blaschke_normal(surface: &SurfaceSpec, point: [f64; 3]) -> Result<[f64; 4]> {
    Ok(apparatus(surface, point)?.xi)
}

/// Blaschke apparatus of the surface at `point`.
pub fn apparatus(surface: &SurfaceSpec, point: [f64; 3]) -> Result<PointApparatus> {
    let j = jet(surface, point, MAX_ORDER)?;
    apparatus_from_series(point, &j.comps)
}

/// Same as [`apparatus`] for a map given directly by its series.
pub fn apparatus_from_series(point: [f64; 3], comps: &[Series; 4]) -> Result<PointApparatus> {
    let tangents = [0, 1, 2].map(|i| comps.map(|s| s.d(i).value()));
    check_immersion(&tangents)?;
    let bl = blaschke_series(3, comps)?;
    let position = comps.map(|s| s.value());
    let seconds: [[[f64; 4]; 3]; 3] =
        std::array::from_fn(|i| std::array::from_fn(|j| comps.map(|s| s.d(i).d(j).value())));
    let xi: [f64; 4] = std::array::from_fn(|c| bl.xi[c].value());
    let dxi: [[f64; 4]; 3] =
        std::array::from_fn(|i| std::array::from_fn(|c| bl.xi[c].d(i).value()));
    let h = Matrix3::from_fn(|i, j| bl.h[i][j].value());
    let dh: [[[f64; 3]; 3]; 3] = std::array::from_fn(|l| {
        std::array::from_fn(|i| std::array::from_fn(|jj| bl.h[i][jj].d(l).value()))
    });
    let levi_civita: [[[f64; 3]; 3]; 3] = std::array::from_fn(|k| {
        std::array::from_fn(|i| std::array::from_fn(|jj| bl.lc[k][i][jj].value()))
    });

    let m = Matrix4::from_fn(|r, c| if c < 3 { tangents[c][r] } else { xi[r] });
    let lu = m.lu();
    let mut christoffel = [[[0.0; 3]; 3]; 3];
    let mut g = Matrix3::zeros();
    for i in 0..3 {
        for jj in 0..3 {
            let x = lu
                .solve(&Vector4::from(seconds[i][jj]))
                .ok_or(GeomError::NotImmersion)?;
            for k in 0..3 {
                christoffel[k][i][jj] = x[k];
            }
            g[(i, jj)] = x[3];
        }
    }
    let mut shape_coord = Matrix3::zeros();
    let mut tangency: f64 = 0.0;
    let dxi_scale = dxi.iter().flatten().fold(1.0f64, |a, x| a.max(x.abs()));
    for i in 0..3 {
        let x = lu
            .solve(&Vector4::from(dxi[i]))
            .ok_or(GeomError::NotImmersion)?;
        for k in 0..3 {
            shape_coord[(k, i)] = -x[k];
        }
        tangency = tangency.max(x[3].abs() / dxi_scale);
    }
    if tangency > TANGENCY_TOL {
        return Err(GeomError::InconsistentNormal(tangency));
    }

    let vol = m.determinant();
    let sqrt_det = h.determinant().sqrt();
    let volume = (vol - bl.orientation * sqrt_det).abs() / sqrt_det;

    let p = orthonormalize(&h, &Matrix3::identity())?;
    let frame: [[f64; 4]; 3] = std::array::from_fn(|a| {
        std::array::from_fn(|c| (0..3).map(|i| p[(i, a)] * tangents[i][c]).sum())
    });

    let mut kc = [[[0.0; 3]; 3]; 3];
    for i in 0..3 {
        for jj in 0..3 {
            for l in 0..3 {
                kc[i][jj][l] = (0..3)
                    .map(|mm| h[(l, mm)] * (christoffel[mm][i][jj] - levi_civita[mm][i][jj]))
                    .sum();
            }
        }
    }
    let mut c = [[[0.0; 3]; 3]; 3];
    for a in 0..3 {
        for b in 0..3 {
            for cc in 0..3 {
                let mut s = 0.0;
                for i in 0..3 {
                    for jj in 0..3 {
                        for l in 0..3 {
                            s += p[(i, a)] * p[(jj, b)] * p[(l, cc)] * kc[i][jj][l];
                        }
                    }
                }
                c[a][b][cc] = s;
            }
        }
    }
    let raw = CubicTensor(c);
    let cubic_asymmetry = raw.asymmetry();
    let cubic = raw.symmetrized();
    let shape_raw = p.transpose() * h * shape_coord * p;
    let shape_asymmetry = (shape_raw - shape_raw.transpose()).abs().max();
    let shape = (shape_raw + shape_raw.transpose()) * 0.5;
    let apolarity = cubic.traces().iter().fold(0.0f64, |a, t| a.max(t.abs()));
    let metric_mismatch = (g - h).abs().max();

    Ok(PointApparatus {
        point,
        position,
        tangents,
        xi,
        orientation: bl.orientation,
        h,
        dh,
        christoffel,
        levi_civita,
        shape_coord,
        frame_coeffs: p,
        frame,
        cubic,
        shape,
        diagnostics: Diagnostics {
            apolarity,
            volume,
            tangency,
            metric_mismatch,
            cubic_asymmetry,
            shape_asymmetry,
        },
    })
}

/// Apparatus of a map given as a closure on series arguments, for surfaces
/// outside the catalog.
pub fn apparatus_of<F>(f: F, point: [f64; 3]) -> Result<PointApparatus>
where
    F: Fn(Series, Series, Series) -> [Series; 4],
{
    let v = series_vars(point);
    apparatus_from_series(point, &f(v[0], v[1], v[2]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{self, PrimitiveName};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn close4(a: [f64; 4], b: [f64; 4], tol: f64) -> bool {
        a.iter().zip(&b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn z2z2_first_jet() {
        let s = catalog::make_z2z2();
        let j = jet(&s, [0.0; 3], 1).unwrap();
        assert_eq!(j.value(), [1.0, 1.0, 0.0, 0.0]);
        let f = j.first();
        assert_eq!(f[0], [1.0, -1.0, 0.0, 0.0]);
        assert_eq!(f[1], [0.0, 0.0, 0.0, 2.0]);
        assert_eq!(f[2], [0.0, 0.0, 2.0, 0.0]);
    }

    #[test]
    fn paraboloid_second_jet() {
        let s = catalog::quadric(PrimitiveName::ParaboloidGraph3).unwrap();
        let j = jet(&s, [0.0; 3], 2).unwrap();
        for i in 0..3 {
            let mut e = [0.0; 4];
            e[i] = 1.0;
            assert_eq!(j.first()[i], e);
            assert_eq!(j.second(i, i), [0.0, 0.0, 0.0, 1.0]);
        }
        assert_eq!(j.second(0, 1), [0.0; 4]);
    }

    #[test]
    fn jet_errors() {
        let s = catalog::make_z2z2();
        assert!(matches!(
            jet(&s, [2.0, 0.0, 0.0], 2),
            Err(GeomError::OutsideDomain(..))
        ));
        assert!(matches!(
            jet(&s, [0.0; 3], 5),
            Err(GeomError::InvalidOrder(5))
        ));
        let r = apparatus_of(|t, u, _v| [t, t, u, u * u], [0.0; 3]);
        assert!(matches!(r, Err(GeomError::NotImmersion)));
    }

    #[test]
    fn fd_jet_matches_analytic() {
        let s = catalog::default_surface("proper_warped:unit_sphere2").unwrap();
        let p = [0.7, 0.1, -0.2];
        let a = jet(&s, p, 3).unwrap();
        let f = jet_fd(&s, p, 3, 1e-3).unwrap();
        assert_eq!(f.fd_step, Some(1e-3));
        for alpha in series::multi_indices(2) {
            let (x, y) = (a.partial(alpha), f.partial(alpha));
            for k in 0..4 {
                assert!(
                    (x[k] - y[k]).abs() <= 1e-6 * (1.0 + x[k].abs()),
                    "{alpha:?} {x:?} {y:?}"
                );
            }
        }
    }

    #[test]
    fn tentative_split_on_paraboloid() {
        let s = catalog::quadric(PrimitiveName::ParaboloidGraph3).unwrap();
        let j = jet(&s, [0.0; 3], 2).unwrap();
        let t = tentative_split(&j, Some([0.0, 0.0, 0.0, 1.0])).unwrap();
        assert!((t.g - Matrix3::identity()).abs().max() < 1e-15);
        assert!(t
            .christoffel
            .iter()
            .flatten()
            .flatten()
            .all(|x| x.abs() < 1e-15));
    }

    #[test]
    fn tentative_split_on_z2z2() {
        let s = catalog::make_z2z2();
        let j = jet(&s, [0.0; 3], 2).unwrap();
        let t = tentative_split(&j, Some([1.0, 1.0, 0.0, 0.0])).unwrap();
        // F_tt is parallel to the transversal, so G_tt = 1 after unit-volume scaling
        let g = t.g;
        let f = j.first();
        let vol = det4([f[0], f[1], f[2], [1.0, 1.0, 0.0, 0.0]]);
        assert!((g[(0, 0)] - vol).abs() < 1e-14);
        assert!(g[(0, 1)].abs() < 1e-14 && g[(0, 2)].abs() < 1e-14 && g[(1, 2)].abs() < 1e-14);
        assert!(g.determinant().abs() > 1e-3);
        let t2 = tentative_split(&j, None).unwrap();
        assert!((t2.g - g).abs().max() <= 1e-12 * g.abs().max());
    }

    #[test]
    fn repeated_tangent_is_rejected() {
        let r = apparatus_of(|t, u, v| [t + u, t + u, v, t * t + v * v], [0.0; 3]);
        assert!(matches!(r, Err(GeomError::NotImmersion)));
    }

    #[test]
    fn affine_metric_scaling() {
        let (h, e) = affine_metric(&Matrix3::identity()).unwrap();
        assert_eq!((h, e), (Matrix3::identity(), 1.0));
        let (h, _) = affine_metric(&(Matrix3::identity() * 16.0)).unwrap();
        // det = 16^3, so h = 16^(-3/5) * 16 = 16^(2/5)
        assert!((h[(0, 0)] - 16f64.powf(0.4)).abs() < 1e-13);
        let (h, e) = affine_metric(&(Matrix3::identity() * -2.0)).unwrap();
        assert_eq!(e, -1.0);
        assert!(h[(1, 1)] > 0.0);
        let indefinite = Matrix3::from_diagonal(&Vector3::new(1.0, -1.0, 1.0));
        assert!(matches!(
            affine_metric(&indefinite),
            Err(GeomError::Indefinite)
        ));
        assert!(matches!(
            affine_metric(&Matrix3::zeros()),
            Err(GeomError::Degenerate(_))
        ));
    }

    #[test]
    fn transversal_independence_on_catalog() {
        for id in catalog::CATALOG_IDS {
            let s = catalog::default_surface(id).unwrap();
            let p = s.domain.center();
            let j = jet(&s, p, 2).unwrap();
            let a = tentative_split(&j, None).unwrap();
            let b = tentative_split(&j, Some([0.3, -0.2, 0.9, 0.4])).unwrap();
            let (ha, _) = affine_metric(&a.g).unwrap();
            let (hb, _) = affine_metric(&b.g).unwrap();
            assert!((ha - hb).abs().max() <= 1e-9 * ha.abs().max(), "{id}");
        }
    }

    #[test]
    fn orthonormalize_examples() {
        let f = orthonormalize(&Matrix3::identity(), &Matrix3::identity()).unwrap();
        assert_eq!(f, Matrix3::identity());
        let h = Matrix3::from_diagonal(&Vector3::new(4.0, 1.0, 1.0));
        let f = orthonormalize(&h, &Matrix3::identity()).unwrap();
        assert_eq!(f.column(0).into_owned(), Vector3::new(0.5, 0.0, 0.0));
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let a = Matrix3::from_fn(|_, _| rng.gen_range(-1.0..1.0));
            let h = a * a.transpose() + Matrix3::identity() * 0.1;
            let b = Matrix3::from_fn(|_, _| rng.gen_range(-1.0..1.0)) + Matrix3::identity() * 2.0;
            let f = orthonormalize(&h, &b).unwrap();
            assert!((f.transpose() * h * f - Matrix3::identity()).abs().max() < 1e-12);
        }
    }

    #[test]
    fn unit_sphere_normal_is_minus_position() {
        let s = catalog::quadric(PrimitiveName::UnitSphere3).unwrap();
        for p in [[0.0, 0.0, 0.0], [0.3, -0.4, 0.5], [-0.5, 0.2, 0.1]] {
            let a = apparatus(&s, p).unwrap();
            assert!(close4(a.xi, a.position.map(|x| -x), 1e-12), "{:?}", a.xi);
            assert!(a.cubic.norm() < 1e-10);
            assert!((a.shape - Matrix3::identity()).abs().max() < 1e-10);
        }
    }

    #[test]
    fn paraboloid_normal_is_vertical() {
        let s = catalog::quadric(PrimitiveName::ParaboloidGraph3).unwrap();
        for p in [[0.0, 0.0, 0.0], [0.7, -0.2, 0.4]] {
            let a = apparatus(&s, p).unwrap();
            assert!(close4(a.xi, [0.0, 0.0, 0.0, 1.0], 1e-12), "{:?}", a.xi);
            assert!(a.cubic.norm() < 1e-12);
            assert!(a.shape.abs().max() < 1e-12);
        }
    }

    #[test]
    fn z2z2_diagnostics_and_rank_one_shape() {
        let s = catalog::make_z2z2();
        let a = apparatus(&s, [0.2, -0.5, 0.7]).unwrap();
        let d = a.diagnostics;
        assert!(
            d.volume < 1e-8 && d.apolarity < 1e-10 && d.tangency < 1e-10,
            "{d:?}"
        );
        assert!(
            d.metric_mismatch < 1e-10 && d.shape_asymmetry < 1e-10 && d.cubic_asymmetry < 1e-10
        );
        let ev = a.shape.symmetric_eigen().eigenvalues;
        let mut ev: Vec<f64> = ev.iter().copied().collect();
        ev.sort_by(|x, y| x.abs().total_cmp(&y.abs()));
        assert!(
            ev[0].abs() < 1e-9 && ev[1].abs() < 1e-9 && ev[2].abs() > 0.1,
            "{ev:?}"
        );
    }

    #[test]
    fn frame_is_h_orthonormal_and_oriented() {
        let s = catalog::default_surface("proper_warped:hyperbolic_xyz").unwrap();
        let a = apparatus(&s, s.domain.center()).unwrap();
        let p = a.frame_coeffs;
        assert!((p.transpose() * a.h * p - Matrix3::identity()).abs().max() < 1e-12);
        let v = det4([a.frame[0], a.frame[1], a.frame[2], a.xi]);
        assert!((v - a.orientation).abs() < 1e-9, "{v}");
    }
}
