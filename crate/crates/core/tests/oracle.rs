//! The Taylor-series pipeline against the plain finite-difference oracle.

mod common;

use affsym::affine_core::apparatus;
use affsym::catalog::{default_surface, sphere, SphereKind, SphereName, SurfaceSpec, CATALOG_IDS};
use affsym::series::Series;
use affsym::symmetry::{stabilizer_pair, Group, DEFAULT_TOL};
use common::{affine_normal, oracle};
use nalgebra::Vector3;

fn position_map(s: &SurfaceSpec) -> impl Fn(&[f64]) -> Vec<f64> + '_ {
    move |x: &[f64]| s.position([x[0], x[1], x[2]]).to_vec()
}

fn sample_points(s: &SurfaceSpec) -> Vec<[f64; 3]> {
    let c = s.domain.center();
    let w = s.domain.0.map(|[lo, hi]| 0.3 * (hi - lo));
    vec![
        c,
        [c[0] + w[0], c[1] - w[1], c[2] + 0.5 * w[2]],
        [c[0] - w[0], c[1] + 0.7 * w[1], c[2] - w[2]],
    ]
}

#[test]
fn metric_and_normal_match_oracle_on_catalog() {
    for id in CATALOG_IDS {
        let s = default_surface(id).unwrap();
        let f = position_map(&s);
        for x in sample_points(&s) {
            let app = apparatus(&s, x).unwrap();
            let o = oracle(&f, &x);
            let dh = (0..3)
                .flat_map(|i| (0..3).map(move |j| (i, j)))
                .map(|(i, j)| (app.h[(i, j)] - o.h[(i, j)]).abs());
            let scale = o.h.amax().max(1.0);
            assert!(dh.fold(0.0, f64::max) < 1e-7 * scale, "{id} h at {x:?}");
            let dxi = (0..4)
                .map(|c| (app.xi[c] - o.xi[c]).abs())
                .fold(0.0, f64::max);
            assert!(
                dxi < 1e-6 * o.xi.amax().max(1.0),
                "{id} xi at {x:?}: {dxi:e}"
            );
        }
    }
}

#[test]
fn cubic_norm_and_shape_spectrum_match_oracle() {
    for id in CATALOG_IDS {
        let s = default_surface(id).unwrap();
        let f = position_map(&s);
        for x in sample_points(&s) {
            let app = apparatus(&s, x).unwrap();
            let o = oracle(&f, &x);
            let lib_k2: f64 = app.cubic.0.iter().flatten().flatten().map(|c| c * c).sum();
            assert!(
                (lib_k2 - o.k_norm2()).abs() < 1e-6 * (1.0 + lib_k2),
                "{id} |K|^2 {lib_k2} vs {}",
                o.k_norm2()
            );
            let mut ev: Vec<f64> = app
                .shape
                .symmetric_eigen()
                .eigenvalues
                .iter()
                .copied()
                .collect();
            ev.sort_by(f64::total_cmp);
            for (a, b) in ev.iter().zip(o.shape_eigenvalues()) {
                assert!(
                    (a - b).abs() < 1e-5 * (1.0 + a.abs()),
                    "{id} shape eigenvalue {a} vs {b}"
                );
            }
        }
    }
}

#[test]
fn z2z2_invariants_from_oracle() {
    // tetrahedral cubic: |K|^2 = 6 λ^2; shape operator of rank one with a = -4 λ^2
    let s = default_surface("z2z2").unwrap();
    let f = position_map(&s);
    for x in sample_points(&s) {
        let o = oracle(&f, &x);
        let lambda = (o.k_norm2() / 6.0).sqrt();
        let ev = o.shape_eigenvalues();
        assert!(
            (ev[0] + 4.0 * lambda * lambda).abs() < 1e-5,
            "{ev:?} λ={lambda}"
        );
        assert!(ev[1].abs() < 1e-5 && ev[2].abs() < 1e-5);
        let app = apparatus(&s, x).unwrap();
        let rep = stabilizer_pair(&app.cubic, &app.shape, DEFAULT_TOL).unwrap();
        assert_eq!(rep.group, Group::Z2xZ2);
        assert!((rep.params.lambda - lambda).abs() < 1e-6);
    }
}

fn sphere_map(name: SphereName) -> impl Fn(&[f64]) -> Vec<f64> {
    let sp = sphere(name);
    move |x: &[f64]| {
        let (u, v) = (Series::constant(x[0], 0), Series::constant(x[1], 0));
        if sp.kind == SphereKind::ImproperGraph {
            vec![x[0], x[1], sp.graph(u, v).value()]
        } else {
            sp.phi(u, v).iter().map(|c| c.value()).collect()
        }
    }
}

#[test]
fn two_dimensional_spheres_match_oracle() {
    let pts = [[0.0, 0.0], [0.2, -0.3], [-0.35, 0.1]];
    for name in [SphereName::UnitSphere2, SphereName::HyperbolicXyz] {
        let f = sphere_map(name);
        for x in pts {
            let xi = affine_normal(&f, &x);
            let pos = Vector3::from_vec(f(&x));
            // proper spheres centred at the origin: ξ = -H x with |H| = 1
            let h =
                -xi.dot(&nalgebra::DVector::from_column_slice(pos.as_slice())) / pos.norm_squared();
            assert!((h.abs() - 1.0).abs() < 1e-6, "{name:?}: H = {h}");
            for c in 0..3 {
                assert!((xi[c] + h * pos[c]).abs() < 1e-6);
            }
            let sign = if name == SphereName::UnitSphere2 {
                1.0
            } else {
                -1.0
            };
            assert_eq!(h.signum(), sign, "{name:?}");
            let (lib_xi, _, lib_h) =
                affsym::catalog::sphere_blaschke(&sphere(name), x[0], x[1]).unwrap();
            assert!((lib_h - h).abs() < 1e-6);
            for c in 0..3 {
                assert!((lib_xi[c] - xi[c]).abs() < 1e-6);
            }
        }
    }
    let f = sphere_map(SphereName::EllipticParaboloid);
    for x in pts {
        let xi = affine_normal(&f, &x);
        assert!(
            xi[0].abs() < 1e-7 && xi[1].abs() < 1e-7 && (xi[2] - 1.0).abs() < 1e-7,
            "{xi:?}"
        );
    }
}
