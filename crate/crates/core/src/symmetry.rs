//! Stabilizers of a pair `(C, S)` inside SO(3) and rotations to normal form.
//!
//! The cubic is split first by the eigenstructure of the contraction
//! `T = C·C`; the shape operator then decides which subgroup of the cubic's
//! stabilizer survives. Every decision is taken on norm-scaled quantities,
//! while parameters and margins are reported in raw units.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;

use nalgebra::{Matrix2, Matrix3, UnitQuaternion, Vector2, Vector3};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cubic::{
    complete_basis, conjugate_unchecked, cubic_eval, p, q, r3, rotation_about, t23, t_operator,
    t_tetra, CubicTensor, Rotation, ShapeMatrix,
};
use crate::error::{GeomError, Result};

pub const DEFAULT_TOL: f64 = 1e-7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Group {
    SO3,
    Z2xSO2,
    SO2,
    A4,
    S3,
    Z2xZ2,
    Z3,
    Z2,
    #[serde(rename = "TRIVIAL")]
    Trivial,
}

impl Group {
    pub const ALL: [Group; 9] = [
        Group::SO3,
        Group::Z2xSO2,
        Group::SO2,
        Group::A4,
        Group::S3,
        Group::Z2xZ2,
        Group::Z3,
        Group::Z2,
        Group::Trivial,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Group::SO3 => "SO3",
            Group::Z2xSO2 => "Z2xSO2",
            Group::SO2 => "SO2",
            Group::A4 => "A4",
            Group::S3 => "S3",
            Group::Z2xZ2 => "Z2xZ2",
            Group::Z3 => "Z3",
            Group::Z2 => "Z2",
            Group::Trivial => "TRIVIAL",
        }
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Orbit type of a harmonic cubic. `None` marks cubics without a nontrivial
/// rotational symmetry.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CubicLabel {
    Zero,
    RotSo2,
    TetraA4,
    TriS3,
    Z2Generic,
    Z3Generic,
    None,
}

pub(crate) mod mat3_rows {
    use nalgebra::Matrix3;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &Matrix3<f64>, s: S) -> Result<S::Ok, S::Error> {
        let rows: [[f64; 3]; 3] = std::array::from_fn(|i| std::array::from_fn(|j| m[(i, j)]));
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Matrix3<f64>, D::Error> {
        let rows = <[[f64; 3]; 3]>::deserialize(d)?;
        Ok(Matrix3::from_fn(|i, j| rows[i][j]))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CubicClass {
    pub label: CubicLabel,
    pub lambda: f64,
    pub mu: f64,
    /// Columns are the normal-form basis in the input frame.
    #[serde(with = "mat3_rows")]
    pub rotation: Rotation,
    /// Largest deviation of the rotated, norm-scaled cubic from its normal form.
    pub form_residual: f64,
    pub ambiguous: bool,
    pub margins: BTreeMap<String, f64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub lambda: f64,
    pub mu: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymmetryReport {
    pub group: Group,
    pub cubic_label: CubicLabel,
    /// `conjugate(C, S, rotation)` is the normal form of `group`.
    #[serde(with = "mat3_rows")]
    pub rotation: Rotation,
    pub params: Params,
    pub margins: BTreeMap<String, f64>,
    /// Some deciding quantity fell within a factor ten above the tolerance.
    pub ambiguous: bool,
    pub form_residual: f64,
}

struct Decisions {
    tol: f64,
    ambiguous: bool,
}

impl Decisions {
    fn new(tol: f64) -> Self {
        Decisions {
            tol,
            ambiguous: false,
        }
    }

    /// `true` when `q` counts as zero.
    fn zero(&mut self, q: f64) -> bool {
        let q = q.abs();
        if q > self.tol && q <= 10.0 * self.tol {
            self.ambiguous = true;
        }
        q <= self.tol
    }
}

fn fib_sphere(n: usize) -> Vec<Vector3<f64>> {
    let golden = PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let y = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = (1.0 - y * y).sqrt();
            let th = golden * i as f64;
            Vector3::new(r * th.cos(), y, r * th.sin())
        })
        .collect()
}

/// Maximizes `cubic_eval(C, ·)` on the unit sphere: projected gradient ascent
/// from a fixed set of starts, polished by Riemannian Newton steps.
pub fn maximize_on_sphere(c: &CubicTensor) -> (Vector3<f64>, f64) {
    let scale = c.norm().max(1e-300);
    let step = 0.2 / scale;
    let mut best = (Vector3::x(), f64::NEG_INFINITY);
    for start in fib_sphere(32) {
        let mut v = start;
        for _ in 0..300 {
            let g = c.contract2(&v, &v) * 3.0;
            let gt = g - v * v.dot(&g);
            if gt.norm() < 1e-6 * scale {
                break;
            }
            v = (v + gt * step).normalize();
        }
        for _ in 0..8 {
            let b = complete_basis(&v);
            let (u, w) = (b.column(1).into_owned(), b.column(2).into_owned());
            let g = c.contract2(&v, &v) * 3.0;
            let grad = Vector2::new(g.dot(&u), g.dot(&w));
            let m = c.contract1(&v) * 6.0;
            let fv = cubic_eval(c, &v);
            let h = Matrix2::new(
                u.dot(&(m * u)) - 3.0 * fv,
                u.dot(&(m * w)),
                w.dot(&(m * u)),
                w.dot(&(m * w)) - 3.0 * fv,
            );
            let Some(delta) = h.lu().solve(&(-grad)) else {
                break;
            };
            let cand = (v + u * delta[0] + w * delta[1]).normalize();
            if cubic_eval(c, &cand) + 1e-15 * scale < fv {
                break;
            }
            v = cand;
            if delta.norm() < 1e-15 {
                break;
            }
        }
        let fv = cubic_eval(c, &v);
        if fv > best.1 {
            best = (v, fv);
        }
    }
    best
}

fn plane_angle(nu1: f64, nu2: f64) -> f64 {
    nu2.atan2(nu1).rem_euclid(2.0 * PI) / 3.0
}

/// Frame with `e1 = axis` (sign fixed by `f(e1) ≥ 0`) and the in-plane angle
/// solving `sin 3θ ν1 = cos 3θ ν2`, `cos 3θ ν1 + sin 3θ ν2 ≥ 0`.
fn rotational_frame(c: &CubicTensor, axis: &Vector3<f64>) -> (f64, f64, Rotation) {
    let mut e1 = axis.normalize();
    if cubic_eval(c, &e1) < 0.0 {
        e1 = -e1;
    }
    let b = complete_basis(&e1);
    let (u2, u3) = (b.column(1).into_owned(), b.column(2).into_owned());
    let nu1 = cubic_eval(c, &u2);
    let nu2 = c.contract2(&u2, &u2).dot(&u3);
    let th = plane_angle(nu1, nu2);
    let e2 = u2 * th.cos() + u3 * th.sin();
    let e3 = -u2 * th.sin() + u3 * th.cos();
    (
        cubic_eval(c, &e1) / 2.0,
        nu1.hypot(nu2),
        Matrix3::from_columns(&[e1, e2, e3]),
    )
}

fn trigonal_frame(c: &CubicTensor, kernel: &Vector3<f64>) -> (f64, Rotation) {
    let mut e3 = kernel.normalize();
    let imax = e3.iamax();
    if e3[imax] < 0.0 {
        e3 = -e3;
    }
    let b = complete_basis(&e3);
    let (u1, u2) = (b.column(1).into_owned(), b.column(2).into_owned());
    let nu1 = cubic_eval(c, &u1);
    let nu2 = c.contract2(&u1, &u1).dot(&u2);
    let th = plane_angle(nu1, nu2);
    let e1 = u1 * th.cos() + u2 * th.sin();
    let e2 = -u1 * th.sin() + u2 * th.cos();
    (nu1.hypot(nu2), Matrix3::from_columns(&[e1, e2, e3]))
}

fn half_turn(axis: &Vector3<f64>) -> Rotation {
    let n = axis.normalize();
    n * n.transpose() * 2.0 - Matrix3::identity()
}

fn binary_frame(c: &CubicTensor, e1: &Vector3<f64>) -> (f64, f64, Rotation) {
    let mut e1 = e1.normalize();
    if cubic_eval(c, &e1) < 0.0 {
        e1 = -e1;
    }
    let b = complete_basis(&e1);
    let (u2, u3) = (b.column(1).into_owned(), b.column(2).into_owned());
    let m = c.contract1(&e1);
    let pp = 0.5 * (u2.dot(&(m * u2)) - u3.dot(&(m * u3)));
    let qq = u2.dot(&(m * u3));
    let th = 0.5 * (qq.atan2(pp) - 0.5 * PI);
    let e2 = u2 * th.cos() + u3 * th.sin();
    let e3 = -u2 * th.sin() + u3 * th.cos();
    (
        cubic_eval(c, &e1) / 2.0,
        pp.hypot(qq),
        Matrix3::from_columns(&[e1, e2, e3]),
    )
}

fn sorted_eigen(m: &Matrix3<f64>) -> ([f64; 3], [Vector3<f64>; 3]) {
    let e = m.symmetric_eigen();
    let mut idx = [0usize, 1, 2];
    idx.sort_by(|&a, &b| e.eigenvalues[a].total_cmp(&e.eigenvalues[b]));
    (
        idx.map(|i| e.eigenvalues[i]),
        idx.map(|i| e.eigenvectors.column(i).into_owned()),
    )
}

fn form_residual(c_unit: &CubicTensor, r: &Rotation, canonical: &CubicTensor) -> f64 {
    let (cc, _) = conjugate_unchecked(c_unit, &Matrix3::zeros(), r);
    cc.max_abs_diff(canonical)
}

fn ensure_right_handed(mut r: Rotation) -> Rotation {
    if r.determinant() < 0.0 {
        let c = -r.column(2);
        r.set_column(2, &c);
    }
    r
}

/// Orbit type of `C` under SO(3) with a rotation to its normal form.
pub fn classify_cubic(c: &CubicTensor, tol: f64) -> Result<CubicClass> {
    if c.0.iter().flatten().flatten().any(|x| !x.is_finite()) {
        return Err(GeomError::UnstableClassification {
            tol,
            reason: "non-finite cubic".into(),
        });
    }
    let mut dec = Decisions::new(tol);
    let mut margins = BTreeMap::new();
    let norm = c.norm();
    margins.insert("c_norm".to_string(), norm);
    if dec.zero(norm) || norm <= 1e-9 {
        return Ok(CubicClass {
            label: CubicLabel::Zero,
            lambda: 0.0,
            mu: 0.0,
            rotation: Matrix3::identity(),
            form_residual: norm,
            ambiguous: dec.ambiguous,
            margins,
        });
    }
    let cu = c.scaled(1.0 / norm);
    let (ev, vecs) = sorted_eigen(&t_operator(&cu));
    let spread = ev[2] - ev[0];
    let low = ev[1] - ev[0];
    let high = ev[2] - ev[1];
    margins.insert("t_spread".into(), spread);
    margins.insert("t_min".into(), ev[0]);
    margins.insert("t_gap_low".into(), low);
    margins.insert("t_gap_high".into(), high);

    let none = |rotation: Rotation, residual: f64, margins, ambiguous| CubicClass {
        label: CubicLabel::None,
        lambda: 0.0,
        mu: 0.0,
        rotation,
        form_residual: residual,
        ambiguous,
        margins,
    };

    let (label, lam, mu, rot, residual) = if dec.zero(spread) {
        let (axis, _) = maximize_on_sphere(&cu);
        let (l1, _, rz3) = rotational_frame(&cu, &axis);
        let rot = rz3 * t_tetra().transpose();
        let lam = 3f64.sqrt() * l1;
        let res = form_residual(&cu, &rot, &CubicTensor::tetrahedral(lam));
        if res > tol {
            if res <= 1e3 * tol {
                return Err(GeomError::UnstableClassification {
                    tol,
                    reason: format!("isotropic T but tetrahedral residual {res:.3e}"),
                });
            }
            return Ok(none(Matrix3::identity(), res, margins, dec.ambiguous));
        }
        (CubicLabel::TetraA4, lam, 0.0, rot, res)
    } else if dec.zero(ev[0]) {
        let (lam, rot) = trigonal_frame(&cu, &vecs[0]);
        let res = form_residual(&cu, &rot, &CubicTensor::trigonal(lam));
        if res > tol {
            return Ok(none(rot, res, margins, dec.ambiguous));
        }
        (CubicLabel::TriS3, lam, 0.0, rot, res)
    } else if dec.zero(low) || dec.zero(high) {
        let simple = if low <= tol { vecs[2] } else { vecs[0] };
        let (lam, mu, rot) = rotational_frame(&cu, &simple);
        margins.insert(
            "mu_minus_sqrt2_lambda".into(),
            (mu - 2f64.sqrt() * lam) * norm,
        );
        let (label, mu) = if dec.zero(mu) {
            (CubicLabel::RotSo2, 0.0)
        } else {
            (CubicLabel::Z3Generic, mu)
        };
        let res = form_residual(&cu, &rot, &CubicTensor::rotational(lam, mu));
        if res > tol {
            return Ok(none(rot, res, margins, dec.ambiguous));
        }
        (label, lam, mu, rot, res)
    } else {
        let mut best: Option<(f64, Vector3<f64>)> = None;
        for v in &vecs {
            let (cc, _) = conjugate_unchecked(&cu, &Matrix3::zeros(), &half_turn(v));
            let r = cc.max_abs_diff(&cu);
            if best.is_none_or(|(b, _)| r < b) {
                best = Some((r, *v));
            }
        }
        let (r, axis) = best.unwrap();
        margins.insert("half_turn_residual".into(), r);
        if !dec.zero(r) {
            let rot = ensure_right_handed(Matrix3::from_columns(&vecs));
            return Ok(none(rot, r, margins, dec.ambiguous));
        }
        let (lam, mu, rot) = binary_frame(&cu, &axis);
        margins.insert("lambda_minus_mu".into(), (lam - mu) * norm);
        let res = form_residual(&cu, &rot, &CubicTensor::binary(lam, mu));
        if res > tol {
            return Ok(none(rot, res, margins, dec.ambiguous));
        }
        (CubicLabel::Z2Generic, lam, mu, rot, res)
    };
    Ok(CubicClass {
        label,
        lambda: lam * norm,
        mu: mu * norm,
        rotation: rot,
        form_residual: residual,
        ambiguous: dec.ambiguous,
        margins,
    })
}

fn commutator(g: &Rotation, s: &Matrix3<f64>) -> f64 {
    (g * s - s * g).abs().max()
}

/// Normal-form pair of a group with the given parameters.
pub fn canonical_pair(group: Group, p: &Params) -> (CubicTensor, ShapeMatrix) {
    let diag = |a: f64, b: f64, c: f64| Matrix3::from_diagonal(&Vector3::new(a, b, c));
    match group {
        Group::SO3 => (CubicTensor::zero(), diag(p.a, p.a, p.a)),
        Group::Z2xSO2 => (CubicTensor::zero(), diag(p.a, p.b, p.b)),
        Group::SO2 => (CubicTensor::rotational(p.lambda, 0.0), diag(p.a, p.b, p.b)),
        Group::A4 => (CubicTensor::tetrahedral(p.lambda), diag(p.a, p.a, p.a)),
        Group::S3 => (CubicTensor::trigonal(p.lambda), diag(p.a, p.a, p.b)),
        Group::Z2xZ2 => (CubicTensor::tetrahedral(p.lambda), diag(p.a, p.b, p.c)),
        Group::Z3 => (CubicTensor::rotational(p.lambda, p.mu), diag(p.a, p.b, p.b)),
        Group::Z2 | Group::Trivial => (
            CubicTensor::binary(p.lambda, p.mu),
            Matrix3::new(p.a, 0.0, 0.0, 0.0, p.b, p.d, 0.0, p.d, p.c),
        ),
    }
}

/// Index of the cyclic shift putting the diagonal `(x, y, z)` in canonical
/// order: a lone distinct value first, otherwise the largest first.
fn cyclic_order(dg: [f64; 3], dec: &mut Decisions) -> usize {
    let eq = [
        dec.zero(dg[1] - dg[2]),
        dec.zero(dg[2] - dg[0]),
        dec.zero(dg[0] - dg[1]),
    ];
    if eq.iter().filter(|&&e| e).count() == 1 {
        // eq[k] means the two entries other than k agree
        return eq.iter().position(|&e| e).unwrap();
    }
    (0..3)
        .max_by(|&i, &j| dg[i].total_cmp(&dg[j]).then(j.cmp(&i)))
        .unwrap()
}

/// Stabilizer of `(C, S)` in SO(3), with the rotation to the matching
/// normal form, its parameters and the margins that decided it.
pub fn stabilizer_pair(c: &CubicTensor, s: &ShapeMatrix, tol: f64) -> Result<SymmetryReport> {
    let s_norm = s.norm();
    let asym = (s - s.transpose()).abs().max();
    if asym > tol * s_norm.max(1.0) || !asym.is_finite() {
        return Err(GeomError::AsymmetricShape(asym));
    }
    let s = (s + s.transpose()) * 0.5;
    let cls = classify_cubic(c, tol)?;
    let mut dec = Decisions::new(tol);
    dec.ambiguous = cls.ambiguous;
    let mut margins = cls.margins.clone();
    let su = if s_norm > 1e-9 { s / s_norm } else { s };
    let r0 = cls.rotation;
    let sc = r0.transpose() * su * r0;
    let id = Matrix3::identity();
    let lam = cls.lambda;

    let (group, m, mut params) = match cls.label {
        CubicLabel::Zero => {
            let e = su.symmetric_eigen();
            let mut idx = [0usize, 1, 2];
            idx.sort_by(|&a, &b| e.eigenvalues[b].total_cmp(&e.eigenvalues[a]));
            let d = idx.map(|i| e.eigenvalues[i]);
            let v = idx.map(|i| e.eigenvectors.column(i).into_owned());
            margins.insert("a_minus_b".into(), (d[0] - d[1]) * s_norm);
            margins.insert("b_minus_c".into(), (d[1] - d[2]) * s_norm);
            let top = dec.zero(d[0] - d[1]);
            let bottom = dec.zero(d[1] - d[2]);
            if top && bottom {
                (Group::SO3, id, Params::default())
            } else if top {
                (Group::Z2xSO2, complete_basis(&v[2]), Params::default())
            } else if bottom {
                (Group::Z2xSO2, complete_basis(&v[0]), Params::default())
            } else {
                (
                    Group::Z2xZ2,
                    ensure_right_handed(Matrix3::from_columns(&v)),
                    Params::default(),
                )
            }
        }
        CubicLabel::RotSo2 => {
            let off = sc[(0, 1)].abs().max(sc[(0, 2)].abs());
            let aniso = (0.5 * (sc[(1, 1)] - sc[(2, 2)])).hypot(sc[(1, 2)]);
            margins.insert("s_axial_offdiag".into(), off * s_norm);
            margins.insert("s_plane_anisotropy".into(), aniso * s_norm);
            if !dec.zero(off) {
                (
                    Group::Trivial,
                    id,
                    Params {
                        lambda: lam,
                        ..Default::default()
                    },
                )
            } else if dec.zero(aniso) {
                (
                    Group::SO2,
                    id,
                    Params {
                        lambda: lam,
                        ..Default::default()
                    },
                )
            } else {
                let psi = 0.5 * (2.0 * sc[(1, 2)]).atan2(sc[(1, 1)] - sc[(2, 2)]);
                (
                    Group::Z2,
                    rotation_about(&Vector3::x(), psi),
                    Params {
                        lambda: lam,
                        ..Default::default()
                    },
                )
            }
        }
        CubicLabel::TetraA4 => {
            let iso = (sc - id * (sc.trace() / 3.0)).abs().max();
            let off = sc[(0, 1)].abs().max(sc[(0, 2)].abs()).max(sc[(1, 2)].abs());
            margins.insert("s_anisotropy".into(), iso * s_norm);
            margins.insert("s_offdiag".into(), off * s_norm);
            let threefold = [
                (Vector3::new(1.0, 1.0, 1.0), id),
                (Vector3::new(1.0, -1.0, -1.0), p(0)),
                (Vector3::new(-1.0, 1.0, -1.0), p(1)),
                (Vector3::new(-1.0, -1.0, 1.0), p(2)),
            ];
            let tri_hits: Vec<(f64, Rotation)> = threefold
                .iter()
                .map(|(n, pm)| (commutator(&rotation_about(n, 2.0 * PI / 3.0), &sc), *pm))
                .collect();
            let two_hits: Vec<f64> = (0..3).map(|i| commutator(&p(i), &sc)).collect();
            if dec.zero(iso) {
                (
                    Group::A4,
                    id,
                    Params {
                        lambda: lam,
                        ..Default::default()
                    },
                )
            } else if dec.zero(off) {
                let dg = [sc[(0, 0)], sc[(1, 1)], sc[(2, 2)]];
                let k = cyclic_order(dg, &mut dec);
                let qk = (0..k).fold(id, |acc, _| acc * q());
                (
                    Group::Z2xZ2,
                    qk,
                    Params {
                        lambda: lam,
                        ..Default::default()
                    },
                )
            } else if let Some((_, pm)) = tri_hits.iter().copied().find(|(r, _)| dec.zero(*r)) {
                let l1 = lam / 3f64.sqrt();
                (
                    Group::Z3,
                    pm * t_tetra(),
                    Params {
                        lambda: l1,
                        mu: 2f64.sqrt() * l1,
                        ..Default::default()
                    },
                )
            } else if let Some(i) = (0..3).find(|&i| dec.zero(two_hits[i])) {
                let qi = (0..i).fold(id, |acc, _| acc * q());
                let s1 = qi.transpose() * sc * qi;
                let m = if s1[(1, 2)] < 0.0 { qi * p(1) } else { qi };
                (
                    Group::Z2,
                    m,
                    Params {
                        lambda: 0.0,
                        mu: lam,
                        ..Default::default()
                    },
                )
            } else {
                (
                    Group::Trivial,
                    id,
                    Params {
                        lambda: lam,
                        ..Default::default()
                    },
                )
            }
        }
        CubicLabel::TriS3 => {
            let rr = r3(2);
            let c3 = commutator(&rr, &sc);
            margins.insert("s_threefold_commutator".into(), c3 * s_norm);
            if dec.zero(c3) {
                (
                    Group::S3,
                    id,
                    Params {
                        lambda: lam,
                        ..Default::default()
                    },
                )
            } else {
                let hit = (0..3).find(|&k| {
                    let ang = 2.0 * PI * k as f64 / 3.0;
                    dec.zero(commutator(
                        &half_turn(&Vector3::new(ang.cos(), ang.sin(), 0.0)),
                        &sc,
                    ))
                });
                match hit {
                    Some(k) => {
                        let rk = (0..k).fold(id, |acc, _| acc * rr);
                        (
                            Group::Z2,
                            rk * t23(),
                            Params {
                                lambda: lam / 2.0,
                                mu: lam / 2.0,
                                ..Default::default()
                            },
                        )
                    }
                    None => (
                        Group::Trivial,
                        id,
                        Params {
                            lambda: lam,
                            ..Default::default()
                        },
                    ),
                }
            }
        }
        CubicLabel::Z3Generic => {
            let c3 = commutator(&r3(0), &sc);
            margins.insert("s_threefold_commutator".into(), c3 * s_norm);
            let g = if dec.zero(c3) {
                Group::Z3
            } else {
                Group::Trivial
            };
            (
                g,
                id,
                Params {
                    lambda: lam,
                    mu: cls.mu,
                    ..Default::default()
                },
            )
        }
        CubicLabel::Z2Generic => {
            let c2 = commutator(&p(0), &sc);
            margins.insert("s_halfturn_commutator".into(), c2 * s_norm);
            let g = if dec.zero(c2) {
                Group::Z2
            } else {
                Group::Trivial
            };
            (
                g,
                id,
                Params {
                    lambda: lam,
                    mu: cls.mu,
                    ..Default::default()
                },
            )
        }
        CubicLabel::None => (Group::Trivial, id, Params::default()),
    };

    let rotation = r0 * m;
    let sf = rotation.transpose() * s * rotation;
    params.a = sf[(0, 0)];
    params.b = sf[(1, 1)];
    params.c = sf[(2, 2)];
    params.d = sf[(1, 2)];
    match group {
        Group::SO3 | Group::A4 => {
            let a = sf.trace() / 3.0;
            params.a = a;
            params.b = a;
            params.c = a;
        }
        Group::Z2xSO2 | Group::SO2 | Group::Z3 => {
            let b = 0.5 * (sf[(1, 1)] + sf[(2, 2)]);
            params.b = b;
            params.c = b;
            params.d = 0.0;
        }
        Group::S3 => {
            let a = 0.5 * (sf[(0, 0)] + sf[(1, 1)]);
            params.a = a;
            params.b = sf[(2, 2)];
            params.c = sf[(2, 2)];
            params.d = 0.0;
        }
        Group::Z2xZ2 => params.d = 0.0,
        Group::Z2 | Group::Trivial => {}
    }
    if matches!(group, Group::Z3 | Group::SO2 | Group::Z2xSO2) {
        margins.insert("a_minus_b".into(), params.a - params.b);
    }
    if group == Group::Z3 {
        margins.insert(
            "mu_minus_sqrt2_lambda".into(),
            params.mu - 2f64.sqrt() * params.lambda,
        );
    }
    if group == Group::Z2 {
        margins.insert("lambda_minus_mu".into(), params.lambda - params.mu);
        margins.insert("d".into(), params.d);
        margins.insert("b_minus_c".into(), params.b - params.c);
    }

    let form_residual = if group == Group::Trivial {
        cls.form_residual
    } else {
        let (cc, ss) = canonical_pair(group, &params);
        let (c1, s1) = conjugate_unchecked(c, &s, &rotation);
        let scale = c.norm().max(s_norm).max(1.0);
        c1.max_abs_diff(&cc).max((s1 - ss).abs().max()) / scale
    };

    Ok(SymmetryReport {
        group,
        cubic_label: cls.label,
        rotation,
        params,
        margins,
        ambiguous: dec.ambiguous,
        form_residual,
    })
}

/// Uniformly distributed rotation.
pub fn random_rotation<R: Rng>(rng: &mut R) -> Rotation {
    let n: [f64; 4] = std::array::from_fn(|_| {
        // Box-Muller
        let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
        let u2: f64 = rng.gen();
        (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
    });
    let qn = nalgebra::Quaternion::new(n[0], n[1], n[2], n[3]);
    UnitQuaternion::from_quaternion(qn)
        .to_rotation_matrix()
        .into_inner()
}

/// Generators (in normal-form coordinates) of the group, with names.
/// Continuous factors are sampled.
pub fn generators(group: Group) -> Vec<(String, Rotation)> {
    let about_x = |ang: f64| rotation_about(&Vector3::x(), ang);
    let sampled_x = || [0.37, 1.3, 2.2, 3.9, 5.1].map(|a| (format!("rot_e1({a})"), about_x(a)));
    match group {
        Group::SO3 => {
            let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
            (0..10)
                .map(|k| (format!("random_{k}"), random_rotation(&mut rng)))
                .collect()
        }
        Group::Z2xSO2 => {
            let mut v: Vec<_> = sampled_x().into();
            v.push(("P2".into(), p(1)));
            v
        }
        Group::SO2 => sampled_x().into(),
        Group::A4 => vec![("P1".into(), p(0)), ("P2".into(), p(1)), ("Q".into(), q())],
        Group::S3 => vec![("P1".into(), p(0)), ("R3".into(), r3(2))],
        Group::Z2xZ2 => vec![("P1".into(), p(0)), ("P2".into(), p(1))],
        Group::Z3 => vec![("R1".into(), r3(0))],
        Group::Z2 => vec![("P1".into(), p(0))],
        Group::Trivial => vec![],
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymmetryResidual {
    pub group: Group,
    /// `(generator, residual)`, residuals scaled by `max(1, |C|, |S|)`.
    pub per_generator: Vec<(String, f64)>,
    pub max: f64,
}

/// Residual of `(C, S)` under each generator of the reported group, with the
/// generators carried to the input frame as `R g Rᵀ`.
pub fn symmetry_residual(
    report: &SymmetryReport,
    c: &CubicTensor,
    s: &ShapeMatrix,
) -> SymmetryResidual {
    let scale = c.norm().max(s.norm()).max(1.0);
    let r = report.rotation;
    let per_generator: Vec<(String, f64)> = generators(report.group)
        .into_iter()
        .map(|(name, g)| {
            let gg = r * g * r.transpose();
            let (c1, s1) = conjugate_unchecked(c, s, &gg);
            (name, c1.max_abs_diff(c).max((s1 - s).abs().max()) / scale)
        })
        .collect();
    let max = per_generator.iter().map(|(_, v)| *v).fold(0.0, f64::max);
    SymmetryResidual {
        group: report.group,
        per_generator,
        max,
    }
}

/// Residual of `(C, S)` under a single rotation given in normal-form
/// coordinates of `report`.
pub fn residual_under(
    report: &SymmetryReport,
    c: &CubicTensor,
    s: &ShapeMatrix,
    g: &Rotation,
) -> f64 {
    let scale = c.norm().max(s.norm()).max(1.0);
    let gg = report.rotation * g * report.rotation.transpose();
    let (c1, s1) = conjugate_unchecked(c, s, &gg);
    c1.max_abs_diff(c).max((s1 - s).abs().max()) / scale
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cubic::{check_rotation, conjugate};

    fn diag(a: f64, b: f64, c: f64) -> Matrix3<f64> {
        Matrix3::from_diagonal(&Vector3::new(a, b, c))
    }

    #[test]
    fn zero_cubic_branches() {
        let z = CubicTensor::zero();
        let r = stabilizer_pair(&z, &diag(3.0, 1.0, 1.0), DEFAULT_TOL).unwrap();
        assert_eq!(r.group, Group::Z2xSO2);
        assert!((r.params.a - 3.0).abs() < 1e-12 && (r.params.b - 1.0).abs() < 1e-12);
        let r = stabilizer_pair(&z, &(Matrix3::identity() * 2.0), DEFAULT_TOL).unwrap();
        assert_eq!(r.group, Group::SO3);
        let r = stabilizer_pair(&z, &diag(1.0, 3.0, 2.0), DEFAULT_TOL).unwrap();
        assert_eq!(r.group, Group::Z2xZ2);
        assert_eq!((r.params.a, r.params.b, r.params.c), (3.0, 2.0, 1.0));
    }

    #[test]
    fn tetrahedral_with_diagonal_shape() {
        let r = stabilizer_pair(
            &CubicTensor::tetrahedral(1.0),
            &diag(1.0, 2.0, 3.0),
            DEFAULT_TOL,
        )
        .unwrap();
        assert_eq!(r.group, Group::Z2xZ2);
        assert!((r.params.lambda - 1.0).abs() < 1e-9);
        assert!((r.params.a - 3.0).abs() < 1e-9);
        check_rotation(&r.rotation, 1e-10).unwrap();
    }

    #[test]
    fn z3_boundary_with_scalar_shape_is_a4() {
        let c = CubicTensor::rotational(1.0, 2f64.sqrt());
        let r = stabilizer_pair(&c, &(Matrix3::identity() * 0.7), DEFAULT_TOL).unwrap();
        assert_eq!(r.group, Group::A4);
        assert!((r.params.lambda - 3f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn z3_example_and_residuals() {
        let c = CubicTensor::rotational(1.0, 1.0);
        let s = diag(1.0, 2.0, 2.0);
        let cls = classify_cubic(&c, DEFAULT_TOL).unwrap();
        assert_eq!(cls.label, CubicLabel::Z3Generic);
        assert!((cls.rotation - Matrix3::identity()).abs().max() < 1e-12);
        let r = stabilizer_pair(&c, &s, DEFAULT_TOL).unwrap();
        assert_eq!(r.group, Group::Z3);
        let res = symmetry_residual(&r, &c, &s);
        assert!(res.max < 1e-12);
        assert!(residual_under(&r, &c, &s, &p(0)) > 0.1);
    }

    #[test]
    fn trigonal_boundary_from_binary() {
        let c = CubicTensor::binary(0.8, 0.8);
        let cls = classify_cubic(&c, DEFAULT_TOL).unwrap();
        assert_eq!(cls.label, CubicLabel::TriS3);
        assert!((cls.lambda - 1.6).abs() < 1e-12);
        let (c1, _) = conjugate(&c, &Matrix3::zeros(), &cls.rotation).unwrap();
        assert!(c1.max_abs_diff(&CubicTensor::trigonal(1.6)) < 1e-12);
    }

    #[test]
    fn generic_cubic_has_no_symmetry() {
        let mut c = CubicTensor::binary(0.7, 0.2);
        c.set_sym(1, 1, 2, 0.3);
        c.set_sym(2, 2, 2, -0.3);
        c.set_sym(0, 0, 1, 0.1);
        c.set_sym(1, 1, 1, -0.05);
        c.set_sym(1, 2, 2, -0.05);
        let cls = classify_cubic(&c, DEFAULT_TOL).unwrap();
        assert_eq!(cls.label, CubicLabel::None);
        let r = stabilizer_pair(&c, &Matrix3::identity(), DEFAULT_TOL).unwrap();
        assert_eq!(r.group, Group::Trivial);
    }

    #[test]
    fn rejects_asymmetric_shape() {
        let mut s = Matrix3::identity();
        s[(0, 1)] = 0.1;
        assert!(matches!(
            stabilizer_pair(&CubicTensor::zero(), &s, DEFAULT_TOL),
            Err(GeomError::AsymmetricShape(_))
        ));
    }

    #[test]
    fn sphere_maximum_of_tetrahedral_cubic() {
        let (v, f) = maximize_on_sphere(&CubicTensor::tetrahedral(1.0));
        assert!((f - 2.0 / 3f64.sqrt()).abs() < 1e-12);
        assert!((v[0] * v[1] * v[2] - 1.0 / 27f64.sqrt()).abs() < 1e-10);
    }

    #[test]
    fn random_rotations_are_rotations() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            check_rotation(&random_rotation(&mut rng), 1e-12).unwrap();
        }
    }
}
