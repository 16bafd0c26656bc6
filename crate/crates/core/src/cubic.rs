//! Totally symmetric cubic forms on a 3-dimensional Euclidean space, the
//! shape operator, and the rotations used to compare them.
//!
//! Index convention: `C[i][j][k] = h(K(e_i, e_j), e_k)`, so the entries of
//! the matrix `K_{e_i}` are `C[i][·][·]` and the cubic polynomial is
//! `f(v) = Σ C_ijk v_i v_j v_k`.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{GeomError, Result};

pub type ShapeMatrix = Matrix3<f64>;
pub type Rotation = Matrix3<f64>;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CubicTensor(pub [[[f64; 3]; 3]; 3]);

impl Default for CubicTensor {
    fn default() -> Self {
        CubicTensor::zero()
    }
}

const PERMS: [[usize; 3]; 6] = [
    [0, 1, 2],
    [0, 2, 1],
    [1, 0, 2],
    [1, 2, 0],
    [2, 0, 1],
    [2, 1, 0],
];

impl CubicTensor {
    pub fn zero() -> Self {
        CubicTensor([[[0.0; 3]; 3]; 3])
    }

    /// Sets `C_ijk` and all its permutations.
    pub fn set_sym(&mut self, i: usize, j: usize, k: usize, value: f64) {
        let idx = [i, j, k];
        for p in PERMS {
            self.0[idx[p[0]]][idx[p[1]]][idx[p[2]]] = value;
        }
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.0[i][j][k]
    }

    /// Average over the six index permutations.
    pub fn symmetrized(&self) -> Self {
        let mut out = CubicTensor::zero();
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    let idx = [i, j, k];
                    let s: f64 = PERMS
                        .iter()
                        .map(|p| self.0[idx[p[0]]][idx[p[1]]][idx[p[2]]])
                        .sum();
                    out.0[i][j][k] = s / 6.0;
                }
            }
        }
        out
    }

    /// Largest deviation from total symmetry.
    pub fn asymmetry(&self) -> f64 {
        self.max_abs_diff(&self.symmetrized())
    }

    pub fn norm(&self) -> f64 {
        self.0
            .iter()
            .flatten()
            .flatten()
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.0
            .iter()
            .flatten()
            .flatten()
            .fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        let mut m: f64 = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    m = m.max((self.0[i][j][k] - other.0[i][j][k]).abs());
                }
            }
        }
        m
    }

    pub fn scaled(&self, s: f64) -> Self {
        CubicTensor(self.0.map(|a| a.map(|b| b.map(|x| x * s))))
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = *self;
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    out.0[i][j][k] += other.0[i][j][k];
                }
            }
        }
        out
    }

    /// Traces `Σ_a C_aab` for b = 0, 1, 2.
    pub fn traces(&self) -> [f64; 3] {
        [0, 1, 2].map(|b| (0..3).map(|a| self.0[a][a][b]).sum())
    }

    /// `C(u, v, ·)`.
    pub fn contract2(&self, u: &Vector3<f64>, v: &Vector3<f64>) -> Vector3<f64> {
        let mut out = Vector3::zeros();
        for i in 0..3 {
            for j in 0..3 {
                let w = u[i] * v[j];
                if w != 0.0 {
                    for k in 0..3 {
                        out[k] += w * self.0[i][j][k];
                    }
                }
            }
        }
        out
    }

    /// The symmetric matrix `C(u, ·, ·)`.
    pub fn contract1(&self, u: &Vector3<f64>) -> Matrix3<f64> {
        Matrix3::from_fn(|j, k| (0..3).map(|i| u[i] * self.0[i][j][k]).sum())
    }

    /// `f(x, y, z) = λ(2x³ - 3xy² - 3xz²) + μ(y³ - 3yz²)`.
    pub fn rotational(lambda: f64, mu: f64) -> Self {
        let mut c = CubicTensor::zero();
        c.set_sym(0, 0, 0, 2.0 * lambda);
        c.set_sym(0, 1, 1, -lambda);
        c.set_sym(0, 2, 2, -lambda);
        c.set_sym(1, 1, 1, mu);
        c.set_sym(1, 2, 2, -mu);
        c
    }

    /// `f = 6λxyz`.
    pub fn tetrahedral(lambda: f64) -> Self {
        let mut c = CubicTensor::zero();
        c.set_sym(0, 1, 2, lambda);
        c
    }

    /// `f = λ(x³ - 3xy²)`.
    pub fn trigonal(lambda: f64) -> Self {
        let mut c = CubicTensor::zero();
        c.set_sym(0, 0, 0, lambda);
        c.set_sym(0, 1, 1, -lambda);
        c
    }

    /// `f = λ(2x³ - 3xy² - 3xz²) + 6μxyz`.
    pub fn binary(lambda: f64, mu: f64) -> Self {
        let mut c = CubicTensor::rotational(lambda, 0.0);
        c.set_sym(0, 1, 2, mu);
        c
    }
}

/// `Σ C_ijk v_i v_j v_k`.
pub fn cubic_eval(c: &CubicTensor, v: &Vector3<f64>) -> f64 {
    c.contract2(v, v).dot(v)
}

/// `T_il = Σ_jk C_ijk C_ljk`.
pub fn t_operator(c: &CubicTensor) -> Matrix3<f64> {
    Matrix3::from_fn(|i, l| {
        let mut s = 0.0;
        for j in 0..3 {
            for k in 0..3 {
                s += c.0[i][j][k] * c.0[l][j][k];
            }
        }
        s
    })
}

pub fn orthogonality_defect(r: &Rotation) -> f64 {
    (r.transpose() * r - Matrix3::identity()).abs().max()
}

pub fn check_rotation(r: &Rotation, tol: f64) -> Result<()> {
    let defect = orthogonality_defect(r).max((r.determinant() - 1.0).abs());
    if defect > tol || !defect.is_finite() {
        return Err(GeomError::NotRotation(defect));
    }
    Ok(())
}

/// Tensor transform without the rotation check.
pub fn conjugate_unchecked(
    c: &CubicTensor,
    s: &ShapeMatrix,
    r: &Rotation,
) -> (CubicTensor, ShapeMatrix) {
    let mut tmp1 = [[[0.0; 3]; 3]; 3];
    for p in 0..3 {
        for q in 0..3 {
            for k in 0..3 {
                tmp1[p][q][k] = (0..3).map(|rr| r[(rr, k)] * c.0[p][q][rr]).sum();
            }
        }
    }
    let mut tmp2 = [[[0.0; 3]; 3]; 3];
    for p in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                tmp2[p][j][k] = (0..3).map(|q| r[(q, j)] * tmp1[p][q][k]).sum();
            }
        }
    }
    let mut out = [[[0.0; 3]; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                out[i][j][k] = (0..3).map(|p| r[(p, i)] * tmp2[p][j][k]).sum();
            }
        }
    }
    (CubicTensor(out), r.transpose() * s * r)
}

/// `C'_ijk = Σ R_pi R_qj R_rk C_pqr`, `S' = Rᵀ S R`: the components of
/// `(C, S)` in the basis given by the columns of `R`.
pub fn conjugate(
    c: &CubicTensor,
    s: &ShapeMatrix,
    r: &Rotation,
) -> Result<(CubicTensor, ShapeMatrix)> {
    check_rotation(r, 1e-10)?;
    Ok(conjugate_unchecked(c, s, r))
}

pub fn rotation_about(axis: &Vector3<f64>, angle: f64) -> Rotation {
    let n = axis.normalize();
    let k = Matrix3::new(0.0, -n[2], n[1], n[2], 0.0, -n[0], -n[1], n[0], 0.0);
    Matrix3::identity() + k * angle.sin() + k * k * (1.0 - angle.cos())
}

/// Rotation by π about `e_i`.
pub fn p(i: usize) -> Rotation {
    let mut m = -Matrix3::identity();
    m[(i, i)] = 1.0;
    m
}

/// Rotation by 2π/3 about `e_i`.
pub fn r3(i: usize) -> Rotation {
    rotation_about(&Vector3::ith(i, 1.0), 2.0 * std::f64::consts::PI / 3.0)
}

/// Rotation by 2π/3 about the line `x = y = z` (cyclic permutation
/// `e1 -> e2 -> e3`).
pub fn q() -> Rotation {
    Matrix3::new(0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0)
}

/// Basis change turning `λ(x³ - 3xy²)` into the binary form with `λ = μ`.
pub fn t23() -> Rotation {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    Matrix3::new(1.0, 0.0, 0.0, 0.0, s, -s, 0.0, s, s)
}

/// Basis change taking the tetrahedral frame to one with `e1` on the
/// 3-fold axis `(1, 1, 1)/√3`.
pub fn t_tetra() -> Rotation {
    let a = 1.0 / 3f64.sqrt();
    let b = 2.0 / 6f64.sqrt();
    let c = 1.0 / 6f64.sqrt();
    let d = std::f64::consts::FRAC_1_SQRT_2;
    Matrix3::new(a, b, 0.0, a, -c, d, a, -c, -d)
}

/// Completes a unit vector to a right-handed orthonormal basis (columns).
pub fn complete_basis(e1: &Vector3<f64>) -> Rotation {
    let n = e1.normalize();
    let pick = if n[0].abs() < 0.6 {
        Vector3::x()
    } else if n[1].abs() < 0.6 {
        Vector3::y()
    } else {
        Vector3::z()
    };
    let u = (pick - n * n.dot(&pick)).normalize();
    let w = n.cross(&u);
    Matrix3::from_columns(&[n, u, w])
}

/// Nearest rotation to `m` (polar factor).
pub fn nearest_rotation(m: &Matrix3<f64>) -> Rotation {
    let svd = m.svd(true, true);
    let u = svd.u.unwrap();
    let vt = svd.v_t.unwrap();
    let mut d = Matrix3::identity();
    if (u * vt).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    u * d * vt
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn cubic_eval_on_normal_forms() {
        let v = Vector3::new(1.0, 0.0, 0.0);
        assert!(close(
            cubic_eval(&CubicTensor::rotational(1.0, 0.0), &v),
            2.0
        ));
        assert!(close(
            cubic_eval(&CubicTensor::tetrahedral(1.0), &Vector3::new(1.0, 1.0, 1.0)),
            6.0
        ));
        assert_eq!(
            cubic_eval(&CubicTensor::binary(0.3, 0.7), &Vector3::zeros()),
            0.0
        );
        // λ(x³ - 3xy²) at (1, 2, 5) = -11λ
        assert!(close(
            cubic_eval(&CubicTensor::trigonal(2.0), &Vector3::new(1.0, 2.0, 5.0)),
            -22.0
        ));
    }

    #[test]
    fn normal_forms_are_apolar() {
        for c in [
            CubicTensor::rotational(1.3, 0.4),
            CubicTensor::tetrahedral(0.8),
            CubicTensor::trigonal(2.0),
            CubicTensor::binary(0.5, 1.5),
        ] {
            assert!(c.traces().iter().all(|t| t.abs() < 1e-14));
            assert!(c.asymmetry() < 1e-15);
        }
    }

    #[test]
    fn t_operator_examples() {
        let t = t_operator(&CubicTensor::rotational(1.0, 1.0));
        let want = Matrix3::from_diagonal(&Vector3::new(6.0, 4.0, 4.0));
        assert!((t - want).abs().max() < 1e-14);
        let t = t_operator(&CubicTensor::trigonal(1.0));
        assert!(
            (t - Matrix3::from_diagonal(&Vector3::new(2.0, 2.0, 0.0)))
                .abs()
                .max()
                < 1e-14
        );
        assert_eq!(t_operator(&CubicTensor::zero()), Matrix3::zeros());
        let t = t_operator(&CubicTensor::tetrahedral(1.5));
        assert!((t - Matrix3::identity() * 4.5).abs().max() < 1e-14);
        let (l, m) = (0.7, 0.3);
        let t = t_operator(&CubicTensor::binary(l, m));
        let e = t.symmetric_eigen();
        let mut ev: Vec<f64> = e.eigenvalues.iter().copied().collect();
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut want = [
            6.0 * l * l + 2.0 * m * m,
            2.0 * (l + m) * (l + m),
            2.0 * (l - m) * (l - m),
        ];
        want.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for k in 0..3 {
            assert!((ev[k] - want[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn generators_and_relations() {
        let id = Matrix3::identity();
        for i in 0..3 {
            assert!((p(i) * p(i) - id).abs().max() < 1e-12);
            let r = r3(i);
            assert!((r * r * r - id).abs().max() < 1e-12);
        }
        assert!((q() * q() * q() - id).abs().max() < 1e-12);
        assert!((q() * Vector3::x() - Vector3::y()).norm() < 1e-15);
        for m in [t23(), t_tetra(), q()] {
            check_rotation(&m, 1e-12).unwrap();
        }
    }

    #[test]
    fn conjugation_identity_and_invariance() {
        let c = CubicTensor::rotational(1.0, 0.6);
        let s = Matrix3::from_diagonal(&Vector3::new(1.0, 2.0, 2.0));
        let (c1, s1) = conjugate(&c, &s, &Matrix3::identity()).unwrap();
        assert_eq!(c1, c);
        assert_eq!(s1, s);
        let (c2, s2) = conjugate(&c, &s, &r3(0)).unwrap();
        assert!(c2.max_abs_diff(&c) < 1e-12);
        assert!((s2 - s).abs().max() < 1e-12);
        // P1 reverses the sign of the μ part.
        let (c3, _) = conjugate(&c, &s, &p(0)).unwrap();
        assert!(c3.max_abs_diff(&CubicTensor::rotational(1.0, -0.6)) < 1e-12);
    }

    #[test]
    fn conjugation_matches_polynomial_pullback() {
        let c = CubicTensor::binary(0.4, 1.1);
        let r = rotation_about(&Vector3::new(0.3, -1.0, 0.5), 0.9);
        let (c1, _) = conjugate(&c, &Matrix3::zeros(), &r).unwrap();
        let v = Vector3::new(0.2, 0.7, -0.4);
        assert!((cubic_eval(&c1, &v) - cubic_eval(&c, &(r * v))).abs() < 1e-12);
    }

    #[test]
    fn transformation_2_3_maps_trigonal_to_binary() {
        let (c, _) = conjugate(&CubicTensor::trigonal(2.0), &Matrix3::zeros(), &t23()).unwrap();
        assert!(c.max_abs_diff(&CubicTensor::binary(1.0, 1.0)) < 1e-12);
    }

    #[test]
    fn tetrahedral_frame_change() {
        let lam = 1.2;
        let (c, _) = conjugate(
            &CubicTensor::tetrahedral(lam),
            &Matrix3::zeros(),
            &t_tetra(),
        )
        .unwrap();
        let l1 = lam / 3f64.sqrt();
        let want = CubicTensor::rotational(l1, 2f64.sqrt() * l1);
        assert!(c.max_abs_diff(&want) < 1e-12);
    }

    #[test]
    fn rejects_non_rotation() {
        let m = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0));
        assert!(matches!(
            conjugate(&CubicTensor::zero(), &m, &m),
            Err(GeomError::NotRotation(_))
        ));
    }

    #[test]
    fn completion_is_right_handed() {
        for v in [
            Vector3::x(),
            Vector3::new(0.1, 0.9, -0.3),
            Vector3::new(-1.0, -1.0, -1.0),
        ] {
            let b = complete_basis(&v);
            check_rotation(&b, 1e-12).unwrap();
            assert!((b.column(0) - v.normalize()).norm() < 1e-14);
        }
    }
}
