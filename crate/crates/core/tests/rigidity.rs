use std::f64::consts::{E, PI};

use approx::assert_relative_eq;
use entrolab::evi::{c0_closed_form, geometric_grid, heat_trace, EviTrace};
use entrolab::model_spaces::{make_space, ModelSpace, SpaceDescriptor};
use entrolab::quadrature::QuadOptions;
use entrolab::rigidity::{monotonicity_check, rigidity_scan, Classification, RigidityOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn space(d: SpaceDescriptor) -> ModelSpace<f64> {
    make_space(&d).unwrap()
}

fn trace(s: &ModelSpace<f64>) -> EviTrace<f64> {
    let grid = geometric_grid(1e-3, 1.0, 16).unwrap();
    heat_trace(s, &grid, &QuadOptions::with_tol(1e-13, 1e-11)).unwrap()
}

fn scan(t: &EviTrace<f64>) -> entrolab::rigidity::RigidityVerdict<f64> {
    rigidity_scan(t, &RigidityOptions::default()).unwrap()
}

fn perturb(t: &EviTrace<f64>, eps: f64, seed: u64) -> EviTrace<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = t.clone();
    for p in &mut out.points {
        p.u_n *= 1.0 + eps * rng.gen_range(-1.0..1.0);
    }
    out
}

#[test]
fn euclidean_traces() {
    for n in 1..=3 {
        let v = scan(&trace(&space(SpaceDescriptor::euclidean(n))));
        assert_eq!(v.classification, Classification::Euclidean);
        assert_relative_eq!(v.d0_fit, (PI * E).sqrt(), max_relative = 1e-5);
        assert!(v.deviation < 1e-6);
    }
}

#[test]
fn cone_traces() {
    for (n, rho) in [(2.0, 0.25), (2.0, 0.5), (3.0, 0.5)] {
        let s = space(SpaceDescriptor::cone_circle(n, rho));
        let v = scan(&trace(&s));
        let Classification::Cone { d0 } = v.classification else {
            panic!("{v:?}");
        };
        assert_relative_eq!(d0, 1.0 / c0_closed_form(&s).unwrap(), max_relative = 1e-5);
        assert!(v.deviation < 1e-6, "{}", v.deviation);
    }
    let v = scan(&trace(&space(SpaceDescriptor::half_line(2.5))));
    assert!(matches!(v.classification, Classification::Cone { .. }));
}

#[test]
fn half_plane_boundary_origin_is_a_cone() {
    let s = space(SpaceDescriptor::half_space());
    let grid = geometric_grid(1e-2, 1.0, 10).unwrap();
    let tr = heat_trace(&s, &grid, &QuadOptions::with_tol(1e-13, 1e-11)).unwrap();
    let v = scan(&tr);
    let Classification::Cone { d0 } = v.classification else {
        panic!("{v:?}");
    };
    assert_relative_eq!(d0, (PI * E / 2.0).sqrt(), max_relative = 1e-5);
}

#[test]
fn corruption_breaks_classification() {
    let clean = trace(&space(SpaceDescriptor::euclidean(2)));
    let mut bad = clean.clone();
    for p in &mut bad.points {
        p.u_n *= 1.01;
    }
    let v = scan(&bad);
    assert_eq!(v.classification, Classification::None);
    assert!(v.deviation > 1e-3);

    let devs: Vec<f64> = [0.0, 1e-4, 1e-2].iter().map(|&eps| scan(&perturb(&clean, eps, 7)).deviation).collect();
    assert!(devs[0] < 1e-6 && devs[0] < devs[1] && devs[1] < devs[2], "{devs:?}");
}

#[test]
fn classification_survives_rescaling() {
    let s = space(SpaceDescriptor::euclidean(2));
    for r in [0.5, 3.0] {
        let scaled = s.rescaled(r, r * r).unwrap();
        let v = scan(&trace(&scaled));
        assert_eq!(v.classification, Classification::Euclidean);
    }
    let cone = space(SpaceDescriptor::cone_circle(2.0, 0.5));
    let base = scan(&trace(&cone));
    for (r, c) in [(0.5, 2.0), (2.0, 0.7)] {
        let scaled = cone.rescaled(r, c).unwrap();
        let v = scan(&trace(&scaled));
        let Classification::Cone { d0 } = v.classification else {
            panic!("{v:?}");
        };
        assert_relative_eq!(d0, 1.0 / c0_closed_form(&scaled).unwrap(), max_relative = 1e-5);
        assert!((v.deviation - base.deviation).abs() < 1e-8);
    }
}

#[test]
fn heat_traces_are_monotone() {
    for d in [
        SpaceDescriptor::euclidean(1),
        SpaceDescriptor::euclidean(3),
        SpaceDescriptor::cone_circle(2.0, 0.25),
        SpaceDescriptor::cone_circle(3.0, 0.5),
        SpaceDescriptor::half_line(2.0),
        SpaceDescriptor::half_space(),
        SpaceDescriptor::half_space().with_base(vec![0.0, 0.5]),
    ] {
        let r = monotonicity_check(&trace(&space(d.clone())));
        assert!(r.pass(), "{d:?}: {r:?}");
    }
}

#[test]
fn monotonicity_flags_a_dip() {
    let mut tr = trace(&space(SpaceDescriptor::euclidean(2)));
    tr.points[6].u_n *= 0.7;
    let r = monotonicity_check(&tr);
    assert!(r.u_n.contains(&6));
    assert!(r.concavity.contains(&7) || r.concavity.contains(&6));
    assert!(!r.pass());
}
