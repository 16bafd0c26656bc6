//! Residual suites for the fundamental equations, adapted frames of the
//! rotationally symmetric classes, warped-structure diagnostics and grid
//! scans.
//!
//! Point identities are checked against [`POINT_TOL`]. Anything that needs a
//! derivative of a computed field goes through central differences with one
//! Richardson step and is checked against a budget that widens per layer:
//! [`FD_TOL`] for one layer, [`STRUCTURE_TOL`] for two.

use std::collections::BTreeMap;

use nalgebra::{Matrix3, Matrix4, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::affine_core::{apparatus, PointApparatus};
use crate::catalog::SurfaceSpec;
use crate::cubic::{p, q, r3, rotation_about, Rotation};
use crate::error::{GeomError, Result};
use crate::fd::simpson_cumulative;
use crate::symmetry::{stabilizer_pair, symmetry_residual, Group, SymmetryReport, DEFAULT_TOL};

pub const POINT_TOL: f64 = 1e-8;
pub const FD_TOL: f64 = 1e-5;
pub const STRUCTURE_TOL: f64 = 1e-4;
/// Step of the innermost finite-difference layer.
pub const FD_STEP: f64 = 1e-3;

type T3 = [[[f64; 3]; 3]; 3];
type T4 = [[[[f64; 3]; 3]; 3]; 3];

/// One named check. `value` is the raw max-norm residual divided by `scale`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualRecord {
    pub name: String,
    pub value: f64,
    pub scale: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl ResidualRecord {
    pub fn new(name: &str, raw: f64, scale: f64, tolerance: f64) -> Self {
        let value = raw / scale;
        // NaN must not pass
        let pass = value <= tolerance;
        ResidualRecord {
            name: name.to_string(),
            value,
            scale,
            tolerance,
            pass,
        }
    }
}

/// Running max of `|lhs - rhs|` together with the magnitudes involved.
#[derive(Default)]
struct Acc {
    raw: f64,
    size: f64,
}

impl Acc {
    fn push(&mut self, lhs: f64, rhs: f64) {
        self.raw = self.raw.max((lhs - rhs).abs());
        self.size = self.size.max(lhs.abs()).max(rhs.abs());
    }

    fn record(&self, name: &str, tol: f64) -> ResidualRecord {
        ResidualRecord::new(name, self.raw, self.size.max(1.0), tol)
    }
}

fn check_stencil(surface: &SurfaceSpec, x: [f64; 3]) -> Result<()> {
    if surface.domain.contains(x) {
        Ok(())
    } else {
        Err(GeomError::StencilOutsideDomain(x[0], x[1], x[2]))
    }
}

/// Richardson-extrapolated derivative of `eval` at `base` along `dir`.
fn directional<F>(
    surface: &SurfaceSpec,
    base: [f64; 3],
    dir: [f64; 3],
    step: f64,
    eval: F,
) -> Result<Vec<f64>>
where
    F: Fn([f64; 3]) -> Result<Vec<f64>>,
{
    let at = |s: f64| -> [f64; 3] { std::array::from_fn(|i| base[i] + s * dir[i]) };
    let offsets = [-step, -0.5 * step, 0.5 * step, step];
    for &s in &offsets {
        check_stencil(surface, at(s))?;
    }
    let v: Vec<Vec<f64>> = offsets
        .iter()
        .map(|&s| eval(at(s)))
        .collect::<Result<_>>()?;
    Ok((0..v[0].len())
        .map(|k| {
            let d_h = (v[3][k] - v[0][k]) / (2.0 * step);
            let d_h2 = (v[2][k] - v[1][k]) / step;
            (4.0 * d_h2 - d_h) / 3.0
        })
        .collect())
}

fn axis_derivatives<F>(
    surface: &SurfaceSpec,
    base: [f64; 3],
    step: f64,
    eval: F,
) -> Result<[Vec<f64>; 3]>
where
    F: Fn([f64; 3]) -> Result<Vec<f64>> + Copy,
{
    let d0 = directional(surface, base, [1.0, 0.0, 0.0], step, eval)?;
    let d1 = directional(surface, base, [0.0, 1.0, 0.0], step, eval)?;
    let d2 = directional(surface, base, [0.0, 0.0, 1.0], step, eval)?;
    Ok([d0, d1, d2])
}

fn flatten3(t: &T3, out: &mut Vec<f64>) {
    out.extend(t.iter().flatten().flatten());
}

fn unflatten3(v: &[f64]) -> T3 {
    std::array::from_fn(|a| std::array::from_fn(|b| std::array::from_fn(|c| v[9 * a + 3 * b + c])))
}

/// `C_ijk = -2 h(K(∂_i, ∂_j), ∂_k)` in coordinates.
fn coord_cubic(app: &PointApparatus) -> T3 {
    let kc = app.lowered_difference();
    std::array::from_fn(|i| std::array::from_fn(|j| std::array::from_fn(|k| -2.0 * kc[i][j][k])))
}

fn field_vector(app: &PointApparatus) -> Vec<f64> {
    let mut v = Vec::with_capacity(90);
    flatten3(&app.christoffel, &mut v);
    flatten3(&app.levi_civita, &mut v);
    for k in 0..3 {
        for i in 0..3 {
            v.push(app.shape_coord[(k, i)]);
        }
    }
    flatten3(&coord_cubic(app), &mut v);
    v
}

/// Derivatives `∂_l` of the fields entering the fundamental equations.
#[derive(Clone, Debug)]
pub struct FieldDerivatives {
    /// `christoffel[l][k][i][j] = ∂_l Γ^k_ij`.
    pub christoffel: T4,
    pub levi_civita: T4,
    /// `shape[l][k][i] = ∂_l S^k_i`.
    pub shape: [[[f64; 3]; 3]; 3],
    /// `cubic[l][i][j][k] = ∂_l C_ijk`.
    pub cubic: T4,
}

pub fn field_derivatives(
    surface: &SurfaceSpec,
    point: [f64; 3],
    step: f64,
) -> Result<FieldDerivatives> {
    let d = axis_derivatives(surface, point, step, |x| {
        Ok(field_vector(&apparatus(surface, x)?))
    })?;
    Ok(FieldDerivatives {
        christoffel: std::array::from_fn(|l| unflatten3(&d[l][0..27])),
        levi_civita: std::array::from_fn(|l| unflatten3(&d[l][27..54])),
        shape: std::array::from_fn(|l| {
            std::array::from_fn(|k| std::array::from_fn(|i| d[l][54 + 3 * k + i]))
        }),
        cubic: std::array::from_fn(|l| unflatten3(&d[l][63..90])),
    })
}

/// Apparatus component targeted by a fault.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Component {
    Metric,
    MetricDerivative,
    Christoffel,
    LeviCivita,
    Shape,
    Normal,
}

impl Component {
    pub const ALL: [Component; 6] = [
        Component::Metric,
        Component::MetricDerivative,
        Component::Christoffel,
        Component::LeviCivita,
        Component::Shape,
        Component::Normal,
    ];
}

/// Additive corruption of one entry of the center apparatus. Unused trailing
/// indices are ignored (two for matrices, three for the normal). A metric
/// component is the mirrored pair `h_ab = h_ba`, so the corrupted metric is
/// still a symmetric form.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fault {
    pub component: Component,
    pub index: [usize; 3],
    pub delta: f64,
}

impl Fault {
    pub fn apply(&self, app: &mut PointApparatus) {
        let [a, b, c] = self.index;
        match self.component {
            Component::Metric => {
                app.h[(a, b)] += self.delta;
                if a != b {
                    app.h[(b, a)] += self.delta;
                }
            }
            Component::MetricDerivative => app.dh[a][b][c] += self.delta,
            Component::Christoffel => app.christoffel[a][b][c] += self.delta,
            Component::LeviCivita => app.levi_civita[a][b][c] += self.delta,
            Component::Shape => app.shape_coord[(a, b)] += self.delta,
            Component::Normal => app.xi[a] += self.delta,
        }
    }
}

pub const FUNDAMENTAL_CHECKS: [&str; 9] = [
    "gauss",
    "codazzi_metric",
    "codazzi_cubic",
    "codazzi_shape",
    "shape_symmetry",
    "gauss_levi_civita",
    "cubic_consistency",
    "apolarity",
    "volume",
];

/// Residuals of the fundamental equations from center data and neighbor
/// derivatives.
pub fn fundamental_residuals(app: &PointApparatus, d: &FieldDerivatives) -> Vec<ResidualRecord> {
    let h = &app.h;
    let g = &app.christoffel;
    let lc = &app.levi_civita;
    let s = &app.shape_coord;
    let k = app.difference_tensor();
    let c = coord_cubic(app);
    // hs[x][y] = h(S∂_x, ∂_y)
    let hs: [[f64; 3]; 3] = std::array::from_fn(|x| {
        std::array::from_fn(|y| (0..3).map(|m| s[(m, x)] * h[(m, y)]).sum())
    });
    let delta = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };

    let mut gauss = Acc::default();
    let mut gauss_hat = Acc::default();
    let mut codazzi_s = Acc::default();
    for i in 0..3 {
        for j in 0..3 {
            for kk in 0..3 {
                for l in 0..3 {
                    let mut r = d.christoffel[i][l][j][kk] - d.christoffel[j][l][i][kk];
                    let mut rh = d.levi_civita[i][l][j][kk] - d.levi_civita[j][l][i][kk];
                    let mut comm = 0.0;
                    for m in 0..3 {
                        r += g[m][j][kk] * g[l][i][m] - g[m][i][kk] * g[l][j][m];
                        rh += lc[m][j][kk] * lc[l][i][m] - lc[m][i][kk] * lc[l][j][m];
                        comm += k[m][j][kk] * k[l][i][m] - k[m][i][kk] * k[l][j][m];
                    }
                    let gauss_rhs = h[(j, kk)] * s[(l, i)] - h[(i, kk)] * s[(l, j)];
                    gauss.push(r, gauss_rhs);
                    let hat_rhs = 0.5
                        * (gauss_rhs + hs[j][kk] * delta(l, i) - hs[i][kk] * delta(l, j))
                        - comm;
                    gauss_hat.push(rh, hat_rhs);
                }
            }
            for l in 0..3 {
                let cov = |x: usize, y: usize| {
                    let mut v = d.shape[x][l][y];
                    for m in 0..3 {
                        v += g[l][x][m] * s[(m, y)] - s[(l, m)] * g[m][x][y];
                    }
                    v
                };
                codazzi_s.push(cov(i, j), cov(j, i));
            }
        }
    }

    let cov_c = |x: usize, y: usize, z: usize, w: usize| {
        let mut v = d.cubic[x][y][z][w];
        for m in 0..3 {
            v -= lc[m][x][y] * c[m][z][w] + lc[m][x][z] * c[y][m][w] + lc[m][x][w] * c[y][z][m];
        }
        v
    };
    let mut codazzi_c = Acc::default();
    for x in 0..3 {
        for y in 0..3 {
            for z in 0..3 {
                for w in 0..3 {
                    let lhs = cov_c(x, y, z, w) - cov_c(y, x, z, w);
                    let rhs = h[(x, z)] * hs[y][w] - h[(y, z)] * hs[x][w] + hs[y][z] * h[(x, w)]
                        - hs[x][z] * h[(y, w)];
                    codazzi_c.push(lhs, rhs);
                }
            }
        }
    }

    // nabla_h[i][j][k] = (∇_i h)(∂_j, ∂_k)
    let nabla_h: T3 = std::array::from_fn(|i| {
        std::array::from_fn(|j| {
            std::array::from_fn(|kk| {
                app.dh[i][j][kk]
                    - (0..3)
                        .map(|m| g[m][i][j] * h[(m, kk)] + g[m][i][kk] * h[(j, m)])
                        .sum::<f64>()
            })
        })
    });
    let mut symmetry = Acc::default();
    let mut consistency = Acc::default();
    let mut codazzi_h = Acc::default();
    for i in 0..3 {
        for j in 0..3 {
            symmetry.push(hs[i][j], hs[j][i]);
            for kk in 0..3 {
                consistency.push(nabla_h[i][j][kk], c[i][j][kk]);
                codazzi_h.push(nabla_h[i][j][kk], nabla_h[j][i][kk]);
            }
        }
    }

    let mut apolar = Acc::default();
    let h_inv = h
        .try_inverse()
        .unwrap_or_else(|| Matrix3::from_element(f64::NAN));
    for l in 0..3 {
        let mut tr = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                tr += h_inv[(i, j)] * k[l][i][j];
                apolar.size = apolar.size.max(k[l][i][j].abs());
            }
        }
        apolar.push(tr, 0.0);
    }

    let m = Matrix4::from_fn(|r, col| {
        if col < 3 {
            app.tangents[col][r]
        } else {
            app.xi[r]
        }
    });
    let sqrt_det = h.determinant().sqrt();
    let volume = ResidualRecord::new(
        "volume",
        (m.determinant() - app.orientation * sqrt_det).abs(),
        sqrt_det,
        POINT_TOL,
    );

    vec![
        gauss.record("gauss", FD_TOL),
        codazzi_h.record("codazzi_metric", POINT_TOL),
        codazzi_c.record("codazzi_cubic", FD_TOL),
        codazzi_s.record("codazzi_shape", FD_TOL),
        symmetry.record("shape_symmetry", POINT_TOL),
        gauss_hat.record("gauss_levi_civita", FD_TOL),
        consistency.record("cubic_consistency", POINT_TOL),
        apolar.record("apolarity", POINT_TOL),
        volume,
    ]
}

/// Fundamental-equation residuals at `point`.
pub fn check_fundamental(surface: &SurfaceSpec, point: [f64; 3]) -> Result<Vec<ResidualRecord>> {
    check_fundamental_with(surface, point, None)
}

/// Same, with an optional fault injected into the center data only; the
/// neighbor stencil stays clean.
pub fn check_fundamental_with(
    surface: &SurfaceSpec,
    point: [f64; 3],
    fault: Option<&Fault>,
) -> Result<Vec<ResidualRecord>> {
    if !surface.domain.contains(point) {
        return Err(GeomError::OutsideDomain(point[0], point[1], point[2]));
    }
    let mut app = apparatus(surface, point)?;
    let d = field_derivatives(surface, point, FD_STEP)?;
    if let Some(f) = fault {
        f.apply(&mut app);
    }
    Ok(fundamental_residuals(&app, &d))
}

/// Rotations of the normal form that the canonical frame can jump between.
enum Gauge {
    AboutE1,
    Finite(Vec<Rotation>),
}

fn closure(gens: &[Rotation]) -> Vec<Rotation> {
    let mut out = vec![Rotation::identity()];
    let mut i = 0;
    while i < out.len() {
        for g in gens {
            let cand = out[i] * g;
            if out.iter().all(|r| (r - cand).abs().max() > 1e-9) {
                out.push(cand);
            }
        }
        i += 1;
    }
    out
}

fn gauge(group: Group) -> Result<Gauge> {
    match group {
        Group::SO2 => Ok(Gauge::AboutE1),
        Group::Z3 => Ok(Gauge::Finite(closure(&[r3(0), p(0)]))),
        Group::Z2xZ2 => Ok(Gauge::Finite(closure(&[p(0), p(1), q()]))),
        other => Err(GeomError::NoAdaptedFrame(other.name().to_string())),
    }
}

/// Coordinates (columns) of the canonical frame of `report` at `app`.
fn canonical_frame(app: &PointApparatus, report: &SymmetryReport) -> Matrix3<f64> {
    app.frame_coeffs * report.rotation
}

/// Re-gauges `e` to lie closest to `target`.
fn align(e: &Matrix3<f64>, target: &Matrix3<f64>, gauge: &Gauge) -> Matrix3<f64> {
    match gauge {
        Gauge::AboutE1 => {
            let m = target.transpose() * e;
            let theta = (m[(1, 2)] - m[(2, 1)]).atan2(m[(1, 1)] + m[(2, 2)]);
            e * rotation_about(&Vector3::x(), theta)
        }
        Gauge::Finite(elems) => elems
            .iter()
            .map(|g| e * g)
            .min_by(|a, b| (a - target).norm().total_cmp(&(b - target).norm()))
            .expect("gauge set is nonempty"),
    }
}

/// Canonical frame adapted to the pointwise symmetry, with connection
/// coefficients `connection[i][j][k] = φ_ij^k`, where `∇̂_{e_i} e_j = φ_ij^k e_k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdaptedFrame {
    pub point: [f64; 3],
    pub group: Group,
    /// Columns are the coordinates of `e_1, e_2, e_3`.
    #[serde(with = "crate::symmetry::mat3_rows")]
    pub frame_coeffs: Matrix3<f64>,
    pub frame: [[f64; 4]; 3],
    pub connection: T3,
    pub lambda: f64,
    pub mu: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    /// `φ_21^2`.
    pub eta: f64,
    /// `h(∂_t, e_1)`, the rate of h-arclength along `e_1` per unit `t`.
    pub dt_e1: f64,
}

impl AdaptedFrame {
    pub fn phi(&self, i: usize, j: usize, k: usize) -> f64 {
        self.connection[i - 1][j - 1][k - 1]
    }

    /// `max |φ_ij^k + φ_ik^j|`.
    pub fn antisymmetry_defect(&self) -> f64 {
        let mut m: f64 = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    m = m.max((self.connection[i][j][k] + self.connection[i][k][j]).abs());
                }
            }
        }
        m
    }

    /// Deviation from the connection pattern of the rotational classes:
    /// `φ_11^2 = φ_11^3 = φ_21^3 = φ_31^2 = 0`, `φ_21^2 = φ_31^3`, and in the
    /// Z3 class additionally `φ_12^3 = 0`.
    pub fn rotational_pattern_defect(&self) -> f64 {
        let mut v = [
            self.phi(1, 1, 2),
            self.phi(1, 1, 3),
            self.phi(2, 1, 3),
            self.phi(3, 1, 2),
            self.phi(2, 1, 2) - self.phi(3, 1, 3),
        ]
        .iter()
        .fold(0.0f64, |m, x| m.max(x.abs()));
        if self.group == Group::Z3 {
            v = v.max(self.phi(1, 2, 3).abs());
        }
        v
    }

    /// `(α, β, γ) = (φ_13^2, φ_32^1, φ_21^3)`.
    pub fn z2z2_angles(&self) -> (f64, f64, f64) {
        (self.phi(1, 3, 2), self.phi(3, 2, 1), self.phi(2, 1, 3))
    }

    /// Largest `|φ_ij^k|` over index triples that are not a permutation of
    /// `(1, 2, 3)`.
    pub fn z2z2_pattern_defect(&self) -> f64 {
        let mut m: f64 = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    if i == j || j == k || i == k {
                        m = m.max(self.connection[i][j][k].abs());
                    }
                }
            }
        }
        m
    }
}

fn classified(
    surface: &SurfaceSpec,
    x: [f64; 3],
    tol: f64,
) -> Result<(PointApparatus, SymmetryReport)> {
    let app = apparatus(surface, x)?;
    let report = stabilizer_pair(&app.cubic, &app.shape, tol)?;
    Ok((app, report))
}

/// Adapted frame at the point of `app`; the frame field is differentiated over
/// a parameter stencil of `surface`, gauge-aligned to the center frame.
pub fn adapted_frame(
    surface: &SurfaceSpec,
    app: &PointApparatus,
    report: &SymmetryReport,
) -> Result<AdaptedFrame> {
    adapted_frame_with(surface, app, report, DEFAULT_TOL, FD_STEP)
}

pub fn adapted_frame_with(
    surface: &SurfaceSpec,
    app: &PointApparatus,
    report: &SymmetryReport,
    tol: f64,
    step: f64,
) -> Result<AdaptedFrame> {
    let gauge = gauge(report.group)?;
    let e0 = canonical_frame(app, report);
    let dframe = axis_derivatives(surface, app.point, step, |x| {
        let (an, rn) = classified(surface, x, tol)?;
        if rn.group != report.group {
            return Err(GeomError::UnstableClassification {
                tol,
                reason: format!(
                    "group changes from {} to {} inside the stencil",
                    report.group, rn.group
                ),
            });
        }
        let e = align(&canonical_frame(&an, &rn), &e0, &gauge);
        Ok(e.iter().copied().collect())
    })?;
    // de[l][(m, j)] = ∂_l E_mj, nalgebra storage is column-major
    let de: [Matrix3<f64>; 3] = std::array::from_fn(|l| Matrix3::from_column_slice(&dframe[l]));
    let he = app.h * e0;
    let lc = &app.levi_civita;
    let connection: T3 = std::array::from_fn(|i| {
        std::array::from_fn(|j| {
            std::array::from_fn(|k| {
                let mut s = 0.0;
                for l in 0..3 {
                    for m in 0..3 {
                        let mut cov = de[l][(m, j)];
                        for n in 0..3 {
                            cov += lc[m][l][n] * e0[(n, j)];
                        }
                        s += e0[(l, i)] * cov * he[(m, k)];
                    }
                }
                s
            })
        })
    });
    let frame = std::array::from_fn(|a| {
        std::array::from_fn(|cc| (0..3).map(|i| e0[(i, a)] * app.tangents[i][cc]).sum())
    });
    let pr = &report.params;
    Ok(AdaptedFrame {
        point: app.point,
        group: report.group,
        frame_coeffs: e0,
        frame,
        connection,
        lambda: pr.lambda,
        mu: pr.mu,
        a: pr.a,
        b: pr.b,
        c: pr.c,
        eta: connection[1][0][1],
        dt_e1: he[(0, 0)],
    })
}

/// Classifies and builds the adapted frame at `point`.
pub fn adapted_frame_at(surface: &SurfaceSpec, point: [f64; 3]) -> Result<AdaptedFrame> {
    let (app, report) = classified(surface, point, DEFAULT_TOL)?;
    adapted_frame(surface, &app, &report)
}

/// A line of constant `(u, v)` sampled at `count` equispaced `t` values.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TLine {
    pub u: f64,
    pub v: f64,
    pub t: [f64; 2],
    pub count: usize,
}

impl TLine {
    /// Line through the domain center, inset by `margin` at both ends.
    pub fn centered(surface: &SurfaceSpec, count: usize, margin: f64) -> Self {
        let c = surface.domain.center();
        let [lo, hi] = surface.domain.0[0];
        TLine {
            u: c[1],
            v: c[2],
            t: [lo + margin, hi - margin],
            count,
        }
    }

    pub fn points(&self) -> Vec<[f64; 3]> {
        axis_values(self.t[0], self.t[1], self.count)
            .into_iter()
            .map(|t| [t, self.u, self.v])
            .collect()
    }
}

/// Scalar fields on the line and their frame derivatives.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineSample {
    pub t: f64,
    pub lambda: f64,
    pub mu: f64,
    pub a: f64,
    pub b: f64,
    pub eta: f64,
    /// `e_1` derivatives of `(λ, μ, a, b, η)`.
    pub d1: [f64; 5],
    /// Largest `e_2`/`e_3` derivative of `(λ, a, b, η)`.
    pub transverse: f64,
    pub dt_e1: f64,
    /// `e^{2f}(b - λ² + 2μ² + η²)` with `f(t_0) = 0`.
    pub curvature: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StructureCheck {
    pub line: TLine,
    pub samples: Vec<LineSample>,
    pub records: Vec<ResidualRecord>,
}

fn field_values(f: &AdaptedFrame) -> Vec<f64> {
    vec![f.lambda, f.mu, f.a, f.b, f.eta]
}

/// Structure-equation residuals along a `t` line of a surface with SO(2) or Z3
/// symmetry: the `e_1` transport equations of `b`, `η`, `λ`, `μ`, constancy
/// in the `e_2, e_3` directions, and `t`-independence of the Gauss curvature
/// of the fiber.
pub fn check_structure(surface: &SurfaceSpec, line: &TLine) -> Result<StructureCheck> {
    let outer = 4.0 * FD_STEP;
    let pts = line.points();
    let samples_raw: Vec<(AdaptedFrame, [Vec<f64>; 3])> = pts
        .par_iter()
        .map(|&x| {
            let f0 = adapted_frame_at(surface, x)?;
            if !matches!(f0.group, Group::SO2 | Group::Z3) {
                return Err(GeomError::NoAdaptedFrame(f0.group.name().to_string()));
            }
            let dirs: [Vec<f64>; 3] = [0, 1, 2]
                .map(|k| {
                    let dir = [
                        f0.frame_coeffs[(0, k)],
                        f0.frame_coeffs[(1, k)],
                        f0.frame_coeffs[(2, k)],
                    ];
                    directional(surface, x, dir, outer, |y| {
                        Ok(field_values(&adapted_frame_at(surface, y)?))
                    })
                })
                .into_iter()
                .collect::<Result<Vec<_>>>()?
                .try_into()
                .expect("three directions");
            Ok((f0, dirs))
        })
        .collect::<Result<_>>()?;

    let dt = if line.count > 1 {
        (line.t[1] - line.t[0]) / (line.count - 1) as f64
    } else {
        0.0
    };
    let rate: Vec<f64> = samples_raw.iter().map(|(f, _)| f.eta * f.dt_e1).collect();
    let warp = if line.count % 2 == 1 {
        simpson_cumulative(&rate, dt)
    } else {
        trapezoid_cumulative(&rate, dt)
    };

    let mut ode_b = Acc::default();
    let mut ode_eta = Acc::default();
    let mut ode_lambda = Acc::default();
    let mut ode_mu = Acc::default();
    let mut transverse = Acc::default();
    let mut samples = Vec::with_capacity(pts.len());
    for (idx, (f, d)) in samples_raw.iter().enumerate() {
        let (l, m, a, b, e) = (f.lambda, f.mu, f.a, f.b, f.eta);
        let d1 = [d[0][0], d[0][1], d[0][2], d[0][3], d[0][4]];
        ode_b.push(d1[3], (l - e) * (b - a));
        ode_eta.push(d1[4], -e * e - 3.0 * l * l - 0.5 * (a + b));
        ode_lambda.push(d1[0], -4.0 * l * e - 0.5 * (a - b));
        ode_mu.push(d1[1], -m * e);
        let mut tr: f64 = 0.0;
        for dd in &d[1..] {
            for &k in &[0usize, 2, 3, 4] {
                tr = tr.max(dd[k].abs());
                transverse.push(dd[k], 0.0);
            }
        }
        transverse.size = transverse
            .size
            .max(l.abs())
            .max(a.abs())
            .max(b.abs())
            .max(e.abs());
        samples.push(LineSample {
            t: pts[idx][0],
            lambda: l,
            mu: m,
            a,
            b,
            eta: e,
            d1,
            transverse: tr,
            dt_e1: f.dt_e1,
            curvature: (2.0 * warp[idx]).exp() * (b - l * l + 2.0 * m * m + e * e),
        });
    }

    let curv: Vec<f64> = samples.iter().map(|s| s.curvature).collect();
    let n = curv.len() as f64;
    let mean = curv.iter().sum::<f64>() / n;
    let sd = (curv.iter().map(|k| (k - mean).powi(2)).sum::<f64>() / n).sqrt();
    // a flat fiber has mean zero; fall back to the size of the summands
    let size = samples
        .iter()
        .map(|s| s.b.abs() + s.lambda * s.lambda + 2.0 * s.mu * s.mu + s.eta * s.eta)
        .fold(0.0f64, f64::max);
    let curvature_scale = if mean.abs() > 1e-3 * size {
        mean.abs()
    } else {
        size.max(f64::MIN_POSITIVE)
    };

    let records = vec![
        ode_b.record("ode_b", STRUCTURE_TOL),
        ode_eta.record("ode_eta", STRUCTURE_TOL),
        ode_lambda.record("ode_lambda", STRUCTURE_TOL),
        ode_mu.record("ode_mu", STRUCTURE_TOL),
        transverse.record("transverse_constancy", STRUCTURE_TOL),
        ResidualRecord::new(
            "fiber_curvature_t_independence",
            sd,
            curvature_scale,
            STRUCTURE_TOL,
        ),
    ];
    Ok(StructureCheck {
        line: *line,
        samples,
        records,
    })
}

fn trapezoid_cumulative(values: &[f64], h: f64) -> Vec<f64> {
    let mut out = vec![0.0; values.len()];
    for i in 1..values.len() {
        out[i] = out[i - 1] + 0.5 * h * (values[i - 1] + values[i]);
    }
    out
}

/// Which branch of the `ν = b + η² - λ²` alternative a surface falls in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum WarpedLabel {
    NuNonzero,
    NuZeroLambdaNeqEta,
    NuZeroLambdaEqEta,
    DichotomyViolated,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WarpedCase {
    pub label: WarpedLabel,
    pub nu_max: f64,
    pub nu_min: f64,
    /// `max |λ - η|` over the grid.
    pub lambda_eta_max: f64,
    /// Largest `|b| + λ² + η²`, the scale `ν` is compared against.
    pub scale: f64,
    pub points: usize,
}

/// `ν` counts as zero below this multiple of its natural scale.
pub const NU_ZERO_TOL: f64 = 1e-6;

/// Evaluates `ν` over the grid. Identically zero means `max|ν| ≤ NU_ZERO_TOL`
/// (relative); nowhere zero means `min|ν|` at least a hundred times that.
/// Anything in between contradicts the dichotomy and is flagged.
pub fn warped_case(surface: &SurfaceSpec, grid: &Grid) -> Result<WarpedCase> {
    let frames: Vec<AdaptedFrame> = grid
        .points()
        .par_iter()
        .map(|&x| adapted_frame_at(surface, x))
        .collect::<Result<_>>()?;
    let mut nu_max: f64 = 0.0;
    let mut nu_min = f64::INFINITY;
    let mut le: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for f in &frames {
        if !matches!(f.group, Group::SO2 | Group::Z3) {
            return Err(GeomError::NoAdaptedFrame(f.group.name().to_string()));
        }
        let nu = (f.b + f.eta * f.eta - f.lambda * f.lambda).abs();
        nu_max = nu_max.max(nu);
        nu_min = nu_min.min(nu);
        le = le.max((f.lambda - f.eta).abs());
        scale = scale.max(f.b.abs() + f.lambda * f.lambda + f.eta * f.eta);
    }
    let zero = NU_ZERO_TOL * scale.max(1.0);
    let label = if nu_max <= zero {
        if le <= zero {
            WarpedLabel::NuZeroLambdaEqEta
        } else {
            WarpedLabel::NuZeroLambdaNeqEta
        }
    } else if nu_min >= 100.0 * zero {
        WarpedLabel::NuNonzero
    } else {
        WarpedLabel::DichotomyViolated
    };
    Ok(WarpedCase {
        label,
        nu_max,
        nu_min,
        lambda_eta_max: le,
        scale,
        points: frames.len(),
    })
}

/// Equispaced values; a single count yields `start`.
pub fn axis_values(start: f64, stop: f64, count: usize) -> Vec<f64> {
    match count {
        0 => vec![],
        1 => vec![start],
        n => (0..n)
            .map(|i| start + (stop - start) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub start: f64,
    pub stop: f64,
    pub count: usize,
}

/// Tensor-product lattice in `(t, u, v)`, iterated with `v` fastest.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub t: Axis,
    pub u: Axis,
    pub v: Axis,
}

impl Grid {
    /// `count` points per axis spanning the domain inset by `margin`.
    pub fn over(surface: &SurfaceSpec, count: usize, margin: f64) -> Self {
        let ax = |k: usize| {
            let [lo, hi] = surface.domain.0[k];
            Axis {
                start: lo + margin,
                stop: hi - margin,
                count,
            }
        };
        Grid {
            t: ax(0),
            u: ax(1),
            v: ax(2),
        }
    }

    pub fn points(&self) -> Vec<[f64; 3]> {
        let ts = axis_values(self.t.start, self.t.stop, self.t.count);
        let us = axis_values(self.u.start, self.u.stop, self.u.count);
        let vs = axis_values(self.v.start, self.v.stop, self.v.count);
        let mut out = Vec::with_capacity(ts.len() * us.len() * vs.len());
        for &t in &ts {
            for &u in &us {
                for &v in &vs {
                    out.push([t, u, v]);
                }
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanOptions {
    pub tol: f64,
    /// Compute fundamental-equation residuals where the stencil fits.
    pub residuals: bool,
    /// Compute adapted-frame fields for the SO(2), Z3 and Z2xZ2 classes.
    pub frames: bool,
}

impl Default for ScanOptions {
    fn default() -> Self {
        ScanOptions {
            tol: DEFAULT_TOL,
            residuals: true,
            frames: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameFields {
    pub lambda: f64,
    pub mu: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub eta: f64,
    pub pattern_defect: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointResult {
    pub point: [f64; 3],
    pub report: Option<SymmetryReport>,
    pub symmetry_residual: Option<f64>,
    pub residuals: Vec<ResidualRecord>,
    pub fields: Option<FrameFields>,
    /// Why some part of the point's analysis is missing.
    pub notes: Vec<String>,
    /// The point could not be classified at all.
    pub error: Option<String>,
}

impl PointResult {
    pub fn passes(&self) -> bool {
        self.error.is_none() && self.residuals.iter().all(|r| r.pass)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldStats {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    /// `(max - min) / max(1e-300, max |value|)`.
    pub relative_spread: f64,
}

impl FieldStats {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let size = min.abs().max(max.abs()).max(1e-300);
        Some(FieldStats {
            min,
            max,
            mean,
            relative_spread: (max - min) / size,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanSummary {
    pub points: usize,
    pub histogram: BTreeMap<String, usize>,
    pub errors: usize,
    pub ambiguous: usize,
    pub worst_residuals: BTreeMap<String, f64>,
    pub failed_checks: usize,
    pub worst_symmetry_residual: f64,
    pub fields: BTreeMap<String, FieldStats>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridScan {
    pub surface: String,
    pub grid: Grid,
    pub points: Vec<PointResult>,
    pub summary: ScanSummary,
}

/// Full per-point analysis; failures are recorded, never propagated.
pub fn analyze_point(surface: &SurfaceSpec, x: [f64; 3], opts: &ScanOptions) -> PointResult {
    let mut out = PointResult {
        point: x,
        report: None,
        symmetry_residual: None,
        residuals: vec![],
        fields: None,
        notes: vec![],
        error: None,
    };
    if !surface.domain.contains(x) {
        out.error = Some(GeomError::OutsideDomain(x[0], x[1], x[2]).to_string());
        return out;
    }
    let (app, report) = match classified(surface, x, opts.tol) {
        Ok(v) => v,
        Err(e) => {
            out.error = Some(e.to_string());
            return out;
        }
    };
    out.symmetry_residual = Some(symmetry_residual(&report, &app.cubic, &app.shape).max);
    if opts.residuals {
        match field_derivatives(surface, x, FD_STEP) {
            Ok(d) => out.residuals = fundamental_residuals(&app, &d),
            Err(e) => out.notes.push(format!("residuals skipped: {e}")),
        }
    }
    if opts.frames && matches!(report.group, Group::SO2 | Group::Z3 | Group::Z2xZ2) {
        match adapted_frame_with(surface, &app, &report, opts.tol, FD_STEP) {
            Ok(f) => {
                let pattern_defect = if f.group == Group::Z2xZ2 {
                    f.z2z2_pattern_defect()
                } else {
                    f.rotational_pattern_defect()
                };
                out.fields = Some(FrameFields {
                    lambda: f.lambda,
                    mu: f.mu,
                    a: f.a,
                    b: f.b,
                    c: f.c,
                    eta: f.eta,
                    pattern_defect,
                })
            }
            Err(e) => out.notes.push(format!("adapted frame skipped: {e}")),
        }
    }
    out.report = Some(report);
    out
}

pub fn summarize(points: &[PointResult]) -> ScanSummary {
    let mut histogram = BTreeMap::new();
    let mut worst_residuals: BTreeMap<String, f64> = BTreeMap::new();
    let mut errors = 0;
    let mut ambiguous = 0;
    let mut failed_checks = 0;
    let mut worst_symmetry_residual: f64 = 0.0;
    let mut cols: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for p in points {
        if p.error.is_some() {
            errors += 1;
        }
        if let Some(r) = &p.report {
            *histogram.entry(r.group.name().to_string()).or_insert(0) += 1;
            if r.ambiguous {
                ambiguous += 1;
            }
        }
        if let Some(s) = p.symmetry_residual {
            worst_symmetry_residual = worst_symmetry_residual.max(s);
        }
        for rec in &p.residuals {
            let w = worst_residuals.entry(rec.name.clone()).or_insert(0.0);
            *w = w.max(rec.value);
            if !rec.pass {
                failed_checks += 1;
            }
        }
        if let Some(f) = &p.fields {
            for (k, v) in [
                ("lambda", f.lambda),
                ("mu", f.mu),
                ("a", f.a),
                ("b", f.b),
                ("c", f.c),
                ("eta", f.eta),
            ] {
                cols.entry(k.to_string()).or_default().push(v);
            }
        }
    }
    let fields = cols
        .into_iter()
        .filter_map(|(k, v)| FieldStats::of(&v).map(|s| (k, s)))
        .collect();
    ScanSummary {
        points: points.len(),
        histogram,
        errors,
        ambiguous,
        worst_residuals,
        failed_checks,
        worst_symmetry_residual,
        fields,
    }
}

/// Thread pool honoring `AFFSYM_THREADS`; unset or invalid means rayon's
/// default.
pub fn thread_pool() -> rayon::ThreadPool {
    let n = std::env::var("AFFSYM_THREADS")
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .unwrap_or(0);
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .expect("thread pool")
}

/// Per-point analysis over the grid. Output order is the grid order whatever
/// the thread count.
pub fn scan(surface: &SurfaceSpec, grid: &Grid, opts: &ScanOptions) -> GridScan {
    let pts = grid.points();
    let points: Vec<PointResult> = thread_pool().install(|| {
        pts.par_iter()
            .map(|&x| analyze_point(surface, x, opts))
            .collect()
    });
    let summary = summarize(&points);
    GridScan {
        surface: surface.id.clone(),
        grid: *grid,
        points,
        summary,
    }
}
