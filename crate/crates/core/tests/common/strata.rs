//! Random members of each nontrivial stratum, drawn directly in canonical
//! order so that the expected classifier output is the draw itself.

use affsym::cubic::{conjugate, CubicTensor, Rotation, ShapeMatrix};
use affsym::symmetry::{canonical_pair, random_rotation, Group, Params};
use rand::Rng;

pub const STRATA: [Group; 8] = [
    Group::SO3,
    Group::Z2xSO2,
    Group::SO2,
    Group::A4,
    Group::S3,
    Group::Z2xZ2,
    Group::Z3,
    Group::Z2,
];

fn spread<R: Rng>(rng: &mut R, k: usize, gap: f64) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..k).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let ok = (0..k).all(|i| (i + 1..k).all(|j| (v[i] - v[j]).abs() >= gap));
        if ok {
            return v;
        }
    }
}

/// Parameters of a generic member of `group`, in the classifier's canonical
/// convention (positive λ, μ; Z2xZ2 diagonal rotated to put the largest entry
/// first).
pub fn draw<R: Rng>(group: Group, rng: &mut R) -> Params {
    let pos = |rng: &mut R| rng.gen_range(0.3..2.0);
    let mut p = Params::default();
    match group {
        Group::SO3 => {
            p.a = rng.gen_range(-2.0..2.0);
            (p.b, p.c) = (p.a, p.a);
        }
        Group::Z2xSO2 => {
            let v = spread(rng, 2, 0.2);
            (p.a, p.b, p.c) = (v[0], v[1], v[1]);
        }
        Group::SO2 | Group::S3 => {
            p.lambda = pos(rng);
            let v = spread(rng, 2, 0.0);
            (p.a, p.b, p.c) = (v[0], v[1], v[1]);
        }
        Group::A4 => {
            p.lambda = pos(rng);
            p.a = rng.gen_range(-2.0..2.0);
            (p.b, p.c) = (p.a, p.a);
        }
        Group::Z2xZ2 => {
            p.lambda = pos(rng);
            let mut v = spread(rng, 3, 0.2);
            while v[0] < v[1].max(v[2]) {
                v.rotate_left(1);
            }
            (p.a, p.b, p.c) = (v[0], v[1], v[2]);
        }
        Group::Z3 => {
            p.lambda = pos(rng);
            p.mu = loop {
                let m = pos(rng);
                if (m - 2f64.sqrt() * p.lambda).abs() >= 0.2 {
                    break m;
                }
            };
            let v = spread(rng, 2, 0.0);
            (p.a, p.b, p.c) = (v[0], v[1], v[1]);
        }
        Group::Z2 => {
            p.lambda = pos(rng);
            p.mu = loop {
                let m = pos(rng);
                if (m - p.lambda).abs() >= 0.2 {
                    break m;
                }
            };
            let v = spread(rng, 4, 0.0);
            (p.a, p.b, p.c, p.d) = (v[0], v[1], v[2], 0.5 * v[3]);
        }
        Group::Trivial => unreachable!("not a stratum"),
    }
    p
}

/// Canonical pair of `p` seen in a random orthonormal frame.
pub fn disguised<R: Rng>(
    group: Group,
    p: &Params,
    rng: &mut R,
) -> (CubicTensor, ShapeMatrix, Rotation) {
    let (c, s) = canonical_pair(group, p);
    let r = random_rotation(rng);
    let (c1, s1) = conjugate(&c, &s, &r).unwrap();
    (c1, s1, r)
}

pub fn param_error(a: &Params, b: &Params) -> f64 {
    [
        a.lambda - b.lambda,
        a.mu - b.mu,
        a.a - b.a,
        a.b - b.b,
        a.c - b.c,
        a.d - b.d,
    ]
    .iter()
    .fold(0.0, |m, x| m.max(x.abs()))
}
