//! Closed-form hypersurfaces realizing the classified pointwise symmetries.
//!
//! Every surface is evaluated on [`Series`] arguments, so jets of any order up
//! to four come out of the same closed form. Warped constructions compose a
//! two-dimensional affine sphere with a plane curve.

use serde::{Deserialize, Serialize};

use crate::affine_core;
use crate::error::{GeomError, Result};
use crate::series::Series;
use crate::symmetry::Group;

/// Axis-aligned parameter box `[lo, hi]` per coordinate `(t, u, v)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Domain(pub [[f64; 2]; 3]);

impl Domain {
    pub fn contains(&self, p: [f64; 3]) -> bool {
        p.iter()
            .zip(self.0.iter())
            .all(|(x, [lo, hi])| *x >= *lo && *x <= *hi)
    }

    pub fn center(&self) -> [f64; 3] {
        self.0.map(|[lo, hi]| 0.5 * (lo + hi))
    }
}

/// Curve basis `{1, t, t^2, t^3, e^t, e^-t, cosh t, sinh t}`.
pub const CURVE_BASIS: [&str; 8] = [
    "1", "t", "t^2", "t^3", "exp(t)", "exp(-t)", "cosh(t)", "sinh(t)",
];

/// Plane curve `γ = (γ1, γ2)` given by coefficients in [`CURVE_BASIS`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveSpec {
    pub gamma1: [f64; 8],
    pub gamma2: [f64; 8],
    pub domain: [f64; 2],
}

fn basis_combination(coeffs: &[f64; 8], t: Series) -> Series {
    let order = t.order();
    let mut acc = Series::constant(coeffs[0], order);
    let terms = [
        (1, t),
        (2, t * t),
        (3, t * t * t),
        (4, t.exp()),
        (5, (-t).exp()),
        (6, t.cosh()),
        (7, t.sinh()),
    ];
    for (k, term) in terms {
        if coeffs[k] != 0.0 {
            acc += term * coeffs[k];
        }
    }
    acc
}

impl CurveSpec {
    pub fn new(gamma1: [f64; 8], gamma2: [f64; 8], domain: [f64; 2]) -> Self {
        CurveSpec {
            gamma1,
            gamma2,
            domain,
        }
    }

    pub fn eval(&self, t: Series) -> (Series, Series) {
        (
            basis_combination(&self.gamma1, t),
            basis_combination(&self.gamma2, t),
        )
    }

    /// `[γ1, γ1', γ1'', γ1''']` and the same for `γ2` at `t`.
    pub fn derivatives(&self, t: f64) -> [[f64; 4]; 2] {
        let s = Series::var(0, t, 4);
        let (g1, g2) = self.eval(s);
        let pick = |g: Series| [0u8, 1, 2, 3].map(|k| g.partial([k, 0, 0]));
        [pick(g1), pick(g2)]
    }

    /// `γ(t) = (cosh t, sinh t + 2)` on `[0.2, 1.2]`.
    pub fn default_proper() -> Self {
        let mut g1 = [0.0; 8];
        let mut g2 = [0.0; 8];
        g1[6] = 1.0;
        g2[0] = 2.0;
        g2[7] = 1.0;
        CurveSpec::new(g1, g2, [0.2, 1.2])
    }

    /// `γ(t) = (cosh t, 2 - sinh t)` on `[0.2, 1.2]`, the mirror of
    /// [`CurveSpec::default_proper`] with the opposite definiteness sign.
    pub fn default_proper_hyperbolic() -> Self {
        let mut g1 = [0.0; 8];
        let mut g2 = [0.0; 8];
        g1[6] = 1.0;
        g2[0] = 2.0;
        g2[7] = -1.0;
        CurveSpec::new(g1, g2, [0.2, 1.2])
    }

    /// `γ(t) = (t + 2, t^2)` on `[0.5, 1.5]`.
    pub fn default_improper() -> Self {
        let mut g1 = [0.0; 8];
        let mut g2 = [0.0; 8];
        g1[0] = 2.0;
        g1[1] = 1.0;
        g2[2] = 1.0;
        CurveSpec::new(g1, g2, [0.5, 1.5])
    }

    /// `γ(t) = (t + 2, t^3)` on `[0.5, 1.5]`. With `γ2` quadratic in `γ1` the
    /// translation family degenerates to a quadric, so the cubic is used.
    pub fn default_translation() -> Self {
        let mut g1 = [0.0; 8];
        let mut g2 = [0.0; 8];
        g1[0] = 2.0;
        g1[1] = 1.0;
        g2[3] = 1.0;
        CurveSpec::new(g1, g2, [0.5, 1.5])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SphereKind {
    ProperElliptic,
    ProperHyperbolic,
    ImproperGraph,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SphereName {
    UnitSphere2,
    HyperbolicXyz,
    EllipticParaboloid,
}

/// Two-dimensional affine sphere: a proper immersion `φ(u, v)` into ℝ³ or
/// the graph function `f(u, v)` of an improper one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SphereSpec {
    pub name: SphereName,
    pub kind: SphereKind,
    /// Uniform scale applied to the closed form (`xyz = scale^3` for the
    /// hyperbolic sphere).
    pub scale: f64,
    pub mean_curvature_normalized: bool,
    pub is_quadric: bool,
}

impl SphereSpec {
    /// Proper spheres: `φ(u, v)`.
    pub fn phi(&self, u: Series, v: Series) -> [Series; 3] {
        let s = self.scale;
        match self.name {
            SphereName::UnitSphere2 => {
                let cu = u.cos();
                [cu * v.cos() * s, cu * v.sin() * s, u.sin() * s]
            }
            SphereName::HyperbolicXyz => [u.exp() * s, v.exp() * s, (-(u + v)).exp() * s],
            SphereName::EllipticParaboloid => [u, v, self.graph(u, v)],
        }
    }

    /// Improper spheres: the graph function `f(u, v)`.
    pub fn graph(&self, u: Series, v: Series) -> Series {
        (u * u + v * v) * 0.5
    }

    pub fn uv_domain(&self) -> [[f64; 2]; 2] {
        match self.name {
            SphereName::UnitSphere2 => [[-0.5, 0.5], [-0.5, 0.5]],
            SphereName::HyperbolicXyz => [[-0.5, 0.5], [-0.5, 0.5]],
            SphereName::EllipticParaboloid => [[-0.5, 0.5], [-0.5, 0.5]],
        }
    }
}

/// Blaschke data of a two-dimensional sphere at `(u, v)`:
/// `(affine normal, position, affine mean curvature estimate)`.
pub fn sphere_blaschke(sphere: &SphereSpec, u: f64, v: f64) -> Result<([f64; 3], [f64; 3], f64)> {
    let su = Series::var(0, u, 4);
    let sv = Series::var(1, v, 4);
    let phi = sphere.phi(su, sv);
    let data = affine_core::blaschke_series(2, &phi)?;
    let xi: Vec<f64> = data.xi.iter().map(|s| s.value()).collect();
    let pos: Vec<f64> = phi.iter().map(|s| s.value()).collect();
    // For a proper sphere centred at the origin, ξ = -H φ.
    let num: f64 = xi.iter().zip(&pos).map(|(a, b)| a * b).sum();
    let den: f64 = pos.iter().map(|b| b * b).sum();
    Ok(([xi[0], xi[1], xi[2]], [pos[0], pos[1], pos[2]], -num / den))
}

fn hyperbolic_xyz() -> SphereSpec {
    let unit = SphereSpec {
        name: SphereName::HyperbolicXyz,
        kind: SphereKind::ProperHyperbolic,
        scale: 1.0,
        mean_curvature_normalized: false,
        is_quadric: false,
    };
    // Affine mean curvature scales as s^(-3/2) under x -> s x.
    let (_, _, h1) = sphere_blaschke(&unit, 0.0, 0.0).expect("xyz = 1 is a definite affine sphere");
    SphereSpec {
        scale: h1.abs().powf(2.0 / 3.0),
        mean_curvature_normalized: true,
        ..unit
    }
}

pub fn sphere(name: SphereName) -> SphereSpec {
    match name {
        SphereName::UnitSphere2 => SphereSpec {
            name,
            kind: SphereKind::ProperElliptic,
            scale: 1.0,
            mean_curvature_normalized: true,
            is_quadric: true,
        },
        SphereName::HyperbolicXyz => hyperbolic_xyz(),
        SphereName::EllipticParaboloid => SphereSpec {
            name,
            kind: SphereKind::ImproperGraph,
            scale: 1.0,
            mean_curvature_normalized: true,
            is_quadric: true,
        },
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum SurfaceKind {
    Z2Z2,
    UnitSphere3,
    ParaboloidGraph3,
    ProperWarped {
        sphere: SphereSpec,
        curve: CurveSpec,
    },
    ImproperWarped {
        sphere: SphereSpec,
        curve: CurveSpec,
        translation_only: bool,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurfaceSpec {
    pub id: String,
    pub kind: SurfaceKind,
    pub domain: Domain,
    pub expected_group: Option<Group>,
}

impl SurfaceSpec {
    /// `F(t, u, v)` on series arguments.
    pub fn eval(&self, t: Series, u: Series, v: Series) -> [Series; 4] {
        match &self.kind {
            SurfaceKind::Z2Z2 => [
                t.exp() + v * v * 2.0,
                (-t).exp() + u * u * 2.0,
                v * 2.0,
                u * 2.0,
            ],
            SurfaceKind::UnitSphere3 => {
                let ct = t.cos();
                let cu = u.cos();
                [ct * cu * v.cos(), ct * cu * v.sin(), ct * u.sin(), t.sin()]
            }
            SurfaceKind::ParaboloidGraph3 => [t, u, v, (t * t + u * u + v * v) * 0.5],
            SurfaceKind::ProperWarped { sphere, curve } => {
                let (g1, g2) = curve.eval(t);
                let phi = sphere.phi(u, v);
                [g1, g2 * phi[0], g2 * phi[1], g2 * phi[2]]
            }
            SurfaceKind::ImproperWarped {
                sphere,
                curve,
                translation_only,
            } => {
                let (g1, g2) = curve.eval(t);
                let f = sphere.graph(u, v);
                if *translation_only {
                    [u, v, f + g2, g1]
                } else {
                    [g1 * u, g1 * v, g1 * f + g2, g1]
                }
            }
        }
    }

    pub fn position(&self, p: [f64; 3]) -> [f64; 4] {
        let f = self.eval(
            Series::constant(p[0], 0),
            Series::constant(p[1], 0),
            Series::constant(p[2], 0),
        );
        f.map(|s| s.value())
    }

    pub fn curve(&self) -> Option<&CurveSpec> {
        match &self.kind {
            SurfaceKind::ProperWarped { curve, .. } | SurfaceKind::ImproperWarped { curve, .. } => {
                Some(curve)
            }
            _ => None,
        }
    }
}

pub fn make_z2z2() -> SurfaceSpec {
    SurfaceSpec {
        id: "z2z2".into(),
        kind: SurfaceKind::Z2Z2,
        domain: Domain([[-1.0, 1.0]; 3]),
        expected_group: Some(Group::Z2xZ2),
    }
}

/// Names accepted by [`primitive`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrimitiveName {
    UnitSphere2,
    HyperbolicXyz,
    EllipticParaboloid,
    UnitSphere3,
    ParaboloidGraph3,
}

impl std::str::FromStr for PrimitiveName {
    type Err = GeomError;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "unit_sphere2" => PrimitiveName::UnitSphere2,
            "hyperbolic_xyz" => PrimitiveName::HyperbolicXyz,
            "elliptic_paraboloid" => PrimitiveName::EllipticParaboloid,
            "unit_sphere3" => PrimitiveName::UnitSphere3,
            "paraboloid_graph3" => PrimitiveName::ParaboloidGraph3,
            other => return Err(GeomError::UnknownName(other.to_string())),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Primitive {
    Sphere(SphereSpec),
    Surface(SurfaceSpec),
}

pub fn primitive(name: PrimitiveName) -> Primitive {
    match name {
        PrimitiveName::UnitSphere2 => Primitive::Sphere(sphere(SphereName::UnitSphere2)),
        PrimitiveName::HyperbolicXyz => Primitive::Sphere(sphere(SphereName::HyperbolicXyz)),
        PrimitiveName::EllipticParaboloid => {
            Primitive::Sphere(sphere(SphereName::EllipticParaboloid))
        }
        PrimitiveName::UnitSphere3 => Primitive::Surface(SurfaceSpec {
            id: "unit_sphere3".into(),
            kind: SurfaceKind::UnitSphere3,
            domain: Domain([[-1.2, 1.2]; 3]),
            expected_group: Some(Group::SO3),
        }),
        PrimitiveName::ParaboloidGraph3 => Primitive::Surface(SurfaceSpec {
            id: "paraboloid_graph3".into(),
            kind: SurfaceKind::ParaboloidGraph3,
            domain: Domain([[-1.0, 1.0]; 3]),
            expected_group: Some(Group::SO3),
        }),
    }
}

/// Convenience accessor for the two test quadrics.
pub fn quadric(name: PrimitiveName) -> Result<SurfaceSpec> {
    match primitive(name) {
        Primitive::Surface(s) => Ok(s),
        Primitive::Sphere(_) => Err(GeomError::UnknownName(format!(
            "{name:?} is not a 3-surface"
        ))),
    }
}

fn warped_domain(sphere: &SphereSpec, curve: &CurveSpec) -> Domain {
    let uv = sphere.uv_domain();
    Domain([curve.domain, uv[0], uv[1]])
}

/// `F(t, u, v) = (γ1(t), γ2(t) φ(u, v))` over a proper affine sphere.
pub fn make_proper_warped(sphere: &SphereSpec, curve: &CurveSpec) -> Result<SurfaceSpec> {
    if sphere.kind == SphereKind::ImproperGraph {
        return Err(GeomError::Definiteness(
            "proper warped product needs a proper sphere".into(),
        ));
    }
    let spec = SurfaceSpec {
        id: format!("proper_warped:{}", sphere_id(sphere.name)),
        kind: SurfaceKind::ProperWarped {
            sphere: sphere.clone(),
            curve: curve.clone(),
        },
        domain: warped_domain(sphere, curve),
        expected_group: Some(if sphere.is_quadric {
            Group::SO2
        } else {
            Group::Z3
        }),
    };
    validate_definiteness(&spec).into_result()?;
    Ok(spec)
}

/// `F = (γ1 u, γ1 v, γ1 f + γ2, γ1)`, or with `translation_only`
/// `F = (u, v, f + γ2, γ1)`, over an improper affine sphere graph.
pub fn make_improper_warped(
    sphere: &SphereSpec,
    curve: &CurveSpec,
    translation_only: bool,
) -> Result<SurfaceSpec> {
    if sphere.kind != SphereKind::ImproperGraph {
        return Err(GeomError::Definiteness(
            "improper warped product needs an improper sphere".into(),
        ));
    }
    let prefix = if translation_only {
        "translation_warped"
    } else {
        "improper_warped"
    };
    let spec = SurfaceSpec {
        id: format!("{prefix}:{}", sphere_id(sphere.name)),
        kind: SurfaceKind::ImproperWarped {
            sphere: sphere.clone(),
            curve: curve.clone(),
            translation_only,
        },
        domain: warped_domain(sphere, curve),
        expected_group: Some(if sphere.is_quadric {
            Group::SO2
        } else {
            Group::Z3
        }),
    };
    validate_definiteness(&spec).into_result()?;
    Ok(spec)
}

pub fn sphere_id(name: SphereName) -> &'static str {
    match name {
        SphereName::UnitSphere2 => "unit_sphere2",
        SphereName::HyperbolicXyz => "hyperbolic_xyz",
        SphereName::EllipticParaboloid => "elliptic_paraboloid",
    }
}

/// Outcome of evaluating a family's definiteness expression on a t-grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignReport {
    pub condition: String,
    /// Sign the expression must have (+1 or -1); 0 when nothing is required.
    pub required_sign: i8,
    pub min_abs: f64,
    pub consistent: bool,
    /// First grid parameter where the expression has the wrong sign or vanishes.
    pub violation_at: Option<f64>,
    /// First grid parameter where the sign differs from its predecessor's.
    pub sign_change_at: Option<f64>,
}

impl SignReport {
    pub fn passes(&self) -> bool {
        self.consistent && self.violation_at.is_none()
    }

    fn into_result(self) -> Result<()> {
        if self.passes() {
            Ok(())
        } else {
            Err(GeomError::Definiteness(format!(
                "{} must be {} (fails at t = {:?})",
                self.condition,
                if self.required_sign > 0 { "> 0" } else { "< 0" },
                self.violation_at
            )))
        }
    }
}

const SIGN_GRID: usize = 201;

/// Evaluates the sign condition of the family on a uniform t-grid of the
/// curve domain (201 samples).
pub fn validate_definiteness(spec: &SurfaceSpec) -> SignReport {
    let (curve, condition, required, expr): (&CurveSpec, &str, i8, fn(&[[f64; 4]; 2]) -> f64) =
        match &spec.kind {
            SurfaceKind::Z2Z2 | SurfaceKind::UnitSphere3 | SurfaceKind::ParaboloidGraph3 => {
                return SignReport {
                    condition: "closed-form quadric or homogeneous model".into(),
                    required_sign: 0,
                    min_abs: 1.0,
                    consistent: true,
                    violation_at: None,
                    sign_change_at: None,
                }
            }
            SurfaceKind::ProperWarped { sphere, curve } => {
                let required = if sphere.kind == SphereKind::ProperElliptic {
                    -1
                } else {
                    1
                };
                (
                    curve,
                    "g1*g1'*(g2''g1' - g1''g2') with g2 != 0",
                    required,
                    |d| {
                        let gate = if d[1][0] == 0.0 { 0.0 } else { 1.0 };
                        gate * d[0][0] * d[0][1] * (d[1][2] * d[0][1] - d[0][2] * d[1][1])
                    },
                )
            }
            SurfaceKind::ImproperWarped {
                curve,
                translation_only: false,
                ..
            } => (curve, "g1*g1'*(g2''g1' - g1''g2')", 1, |d| {
                d[0][0] * d[0][1] * (d[1][2] * d[0][1] - d[0][2] * d[1][1])
            }),
            SurfaceKind::ImproperWarped {
                curve,
                translation_only: true,
                ..
            } => (curve, "g1'*(g2''g1' - g1''g2')", 1, |d| {
                d[0][1] * (d[1][2] * d[0][1] - d[0][2] * d[1][1])
            }),
        };
    sign_scan(curve, condition, required, expr)
}

pub fn sign_scan(
    curve: &CurveSpec,
    condition: &str,
    required: i8,
    expr: fn(&[[f64; 4]; 2]) -> f64,
) -> SignReport {
    let [lo, hi] = curve.domain;
    let mut min_abs = f64::INFINITY;
    let mut first_sign = 0.0;
    let mut consistent = true;
    let mut violation_at = None;
    let mut sign_change_at = None;
    let mut prev_sign = 0.0;
    for k in 0..SIGN_GRID {
        let t = lo + (hi - lo) * k as f64 / (SIGN_GRID - 1) as f64;
        let val = expr(&curve.derivatives(t));
        min_abs = min_abs.min(val.abs());
        let s = if val > 0.0 {
            1.0
        } else if val < 0.0 {
            -1.0
        } else {
            0.0
        };
        if k == 0 {
            first_sign = s;
        }
        if s != first_sign || s == 0.0 {
            consistent = false;
        }
        let wrong = s == 0.0 || (required != 0 && s != required as f64);
        if wrong && violation_at.is_none() {
            violation_at = Some(t);
        }
        if k > 0 && s != prev_sign && sign_change_at.is_none() {
            sign_change_at = Some(t);
        }
        prev_sign = s;
    }
    SignReport {
        condition: condition.to_string(),
        required_sign: required,
        min_abs,
        consistent,
        violation_at,
        sign_change_at,
    }
}

/// Default instances of every catalog family, keyed by their CLI ids.
pub fn default_surface(id: &str) -> Result<SurfaceSpec> {
    match id {
        "z2z2" => Ok(make_z2z2()),
        "unit_sphere3" => quadric(PrimitiveName::UnitSphere3),
        "paraboloid_graph3" => quadric(PrimitiveName::ParaboloidGraph3),
        "proper_warped:unit_sphere2" => make_proper_warped(
            &sphere(SphereName::UnitSphere2),
            &CurveSpec::default_proper(),
        ),
        "proper_warped:hyperbolic_xyz" => make_proper_warped(
            &sphere(SphereName::HyperbolicXyz),
            &CurveSpec::default_proper_hyperbolic(),
        ),
        "improper_warped:elliptic_paraboloid" => make_improper_warped(
            &sphere(SphereName::EllipticParaboloid),
            &CurveSpec::default_improper(),
            false,
        ),
        "translation_warped:elliptic_paraboloid" => make_improper_warped(
            &sphere(SphereName::EllipticParaboloid),
            &CurveSpec::default_translation(),
            true,
        ),
        other => Err(GeomError::UnknownName(other.to_string())),
    }
}

pub const CATALOG_IDS: [&str; 7] = [
    "z2z2",
    "unit_sphere3",
    "paraboloid_graph3",
    "proper_warped:unit_sphere2",
    "proper_warped:hyperbolic_xyz",
    "improper_warped:elliptic_paraboloid",
    "translation_warped:elliptic_paraboloid",
];
