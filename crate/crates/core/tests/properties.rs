use std::f64::consts::PI;

use entrolab::functionals::{entropy, second_moment, u_n, variance_and_barycenter, DensityFamily, ProbMeasure};
use entrolab::model_spaces::{make_space, ModelSpace, Point, SpaceDescriptor};
use entrolab::quadrature::{integrate, integrate_2d, integrate_radial, PolarDomain, QuadOptions, RadialDomain};
use proptest::prelude::*;

fn space(d: SpaceDescriptor) -> ModelSpace<f64> {
    make_space(&d).unwrap()
}

fn kernel_spaces() -> Vec<ModelSpace<f64>> {
    vec![
        space(SpaceDescriptor::euclidean(1)),
        space(SpaceDescriptor::euclidean(2)),
        space(SpaceDescriptor::euclidean(3)),
        space(SpaceDescriptor::half_space()),
        space(SpaceDescriptor::half_space().with_base(vec![0.0, 0.7])),
        space(SpaceDescriptor::cone_circle(2.0, 0.5)),
        space(SpaceDescriptor::cone_circle(3.0, 0.25)),
        space(SpaceDescriptor::cone_point(2.5, 1.3)),
        space(SpaceDescriptor::half_line(1.5)),
        space(SpaceDescriptor::interval(3.0)),
        space(SpaceDescriptor::interval(2.5)),
    ]
}

#[test]
fn stochastic_completeness() {
    for s in kernel_spaces() {
        for t in [0.1, 1.0, 10.0] {
            let m = ProbMeasure::new(s.clone(), DensityFamily::heat_kernel(t)).unwrap();
            let mass = m.mass().unwrap().value;
            assert!((mass - 1.0).abs() < 1e-8, "{:?} t={t}: {mass}", s.descriptor());
        }
    }
    // Interval kernels from an off-centre source.
    let s = space(SpaceDescriptor::interval(3.0));
    for x in [0.0, 0.4, 2.9] {
        let fam = DensityFamily::HeatKernel { source: Some(Point::scalar(x)), t: 0.05 };
        let mass = ProbMeasure::new(s.clone(), fam).unwrap().mass().unwrap().value;
        assert!((mass - 1.0).abs() < 1e-8, "x={x}: {mass}");
    }
}

#[test]
fn flat_cone_kernel_is_the_plane_kernel() {
    let cone = space(SpaceDescriptor::cone_circle(2.0, 1.0));
    let plane = space(SpaceDescriptor::euclidean(2));
    for r in [0.0, 0.3, 1.0, 2.5] {
        for t in [0.01, 0.5, 4.0] {
            let a = cone.heat_kernel(cone.base_point(), &Point::from_slice(&[r, 1.1]), t).unwrap();
            let b = plane.heat_kernel(plane.base_point(), &Point::from_slice(&[r, 0.0]), t).unwrap();
            assert!((a - b).abs() <= 1e-12 * b.max(1e-300), "r={r} t={t}");
        }
    }
}

fn closed_form_spaces() -> Vec<(ModelSpace<f64>, Point<f64>)> {
    vec![
        (space(SpaceDescriptor::euclidean(2)), Point::from_slice(&[0.4, -1.0])),
        (space(SpaceDescriptor::half_space()), Point::from_slice(&[0.4, 1.0])),
        (space(SpaceDescriptor::cone_circle(3.0, 0.5)), Point::from_slice(&[1.2, 0.3])),
        (space(SpaceDescriptor::half_line(2.0)), Point::scalar(0.8)),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rescaled_kernel(r in 0.2f64..5.0, c in 0.1f64..10.0, t in 0.01f64..10.0) {
        for (s, y) in closed_form_spaces() {
            let x = s.base_point().clone();
            let scaled = s.rescaled(r, c).unwrap();
            let lhs = scaled.heat_kernel(&x, &y, t).unwrap();
            let rhs = s.heat_kernel(&x, &y, t / (r * r)).unwrap() / c;
            prop_assert!((lhs - rhs).abs() <= 1e-13 * rhs.abs().max(1e-300), "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn interval_heat_equation(n in 1.5f64..5.0, x in 0.0f64..PI, y in 0.05f64..3.09, t in 0.01f64..2.0) {
        let s = space(SpaceDescriptor::interval(n));
        let v = s.spectral(x, y, t);
        let laplacian = v.d2_theta + (n - 1.0) / y.tan() * v.d_theta;
        let residual = (v.d_t - laplacian).abs();
        // Term-by-term the series solves the equation; what remains is the
        // discarded tail plus rounding in the partial sums.
        let rounding = 64.0 * f64::EPSILON * v.terms as f64 * (v.d_t.abs() + v.d2_theta.abs() + v.d_theta.abs() / y.tan().abs().min(1.0) + 1.0);
        prop_assert!(residual <= v.truncation_bound + rounding, "{residual} > {} + {rounding}", v.truncation_bound);
    }

    #[test]
    fn bishop_gromov(r1 in 0.05f64..3.0, ratio in 1.01f64..4.0, which in 0usize..4) {
        let (s, x) = match which {
            0 => (space(SpaceDescriptor::half_space()), Point::from_slice(&[0.0, 0.6])),
            1 => (space(SpaceDescriptor::cone_circle(2.0, 0.5)), Point::from_slice(&[0.0, 0.0])),
            2 => (space(SpaceDescriptor::half_line(2.5)), Point::scalar(0.0)),
            _ => (space(SpaceDescriptor::interval(3.0)), Point::scalar(0.7)),
        };
        let n = s.dim();
        let r2 = (r1 * ratio).min(if which == 3 { PI } else { f64::INFINITY });
        prop_assume!(r2 > r1 * 1.001);
        if which == 3 {
            // Positive curvature: compare with the model volume ∫ sin^{N−1}.
            let model = |r: f64| integrate(|u: f64| u.sin().powf(n - 1.0), 0.0, r, &[], &QuadOptions::default()).unwrap().value;
            let v1 = s.ball_volume(&x, r1).unwrap() / model(r1);
            let v2 = s.ball_volume(&x, r2).unwrap() / model(r2);
            prop_assert!(v2 <= v1 * (1.0 + 1e-9), "{v1} {v2}");
        } else {
            let v1 = s.ball_volume(&x, r1).unwrap() / r1.powf(n);
            let v2 = s.ball_volume(&x, r2).unwrap() / r2.powf(n);
            prop_assert!(v2 <= v1 * (1.0 + 1e-9), "{v1} {v2}");
            prop_assert!(v2 >= s.avr() * s.omega() * (1.0 - 1e-9));
        }
    }

    #[test]
    fn quadrature_refines(a in 0.2f64..3.0, k in 0i32..5) {
        let f = |x: f64| x.powi(k) * (-a * x * x).exp();
        let oracle = 0.5 * statrs::function::gamma::gamma((k as f64 + 1.0) / 2.0) / a.powf((k as f64 + 1.0) / 2.0);
        let coarse = integrate(f, 0.0, 40.0, &[], &QuadOptions { max_evals: 60, ..QuadOptions::with_tol(1e-14, 1e-14) });
        let fine = integrate(f, 0.0, 40.0, &[], &QuadOptions { max_evals: 120, ..QuadOptions::with_tol(1e-14, 1e-14) });
        let value = |r: entrolab::Result<entrolab::quadrature::QuadResult<f64>>| match r {
            Ok(q) => q.value,
            Err(entrolab::LabError::NonConvergent { value, .. }) => value,
            Err(e) => panic!("{e}"),
        };
        let (ec, ef) = ((value(coarse) - oracle).abs(), (value(fine) - oracle).abs());
        prop_assert!(ef <= ec + 1e-15, "{ec} {ef}");
    }

    #[test]
    fn radial_and_polar_agree(width in 0.3f64..2.0, k in 0i32..3) {
        let s = space(SpaceDescriptor::half_space());
        let opts = QuadOptions::with_tol(1e-12, 1e-11);
        let radial = integrate_radial(|r: f64| r.powi(2 * k) * (-r * r / width).exp(), 1.0, RadialDomain::GaussianTail { center: 0.0, width: width.sqrt() }, &[], &opts).unwrap();
        let domain = PolarDomain::about_base(&s, RadialDomain::GaussianTail { center: 0.0, width: width.sqrt() });
        let plane = integrate_2d(|p: &Point<f64>| (p[0] * p[0] + p[1] * p[1]).powi(k) * (-(p[0] * p[0] + p[1] * p[1]) / width).exp(), &s, &domain, &opts).unwrap();
        // The half-plane sees half the circle.
        let lhs = PI * radial.value;
        prop_assert!((lhs - plane.value).abs() <= radial.error_estimate * PI + plane.error_estimate + 1e-12 * lhs);
    }

    #[test]
    fn variance_is_the_least_second_moment(zx in -2.0f64..2.0, zy in 0.0f64..2.0, zr in 0.0f64..2.0) {
        let plane = space(SpaceDescriptor::euclidean(2));
        let hp = space(SpaceDescriptor::half_space());
        let cone = space(SpaceDescriptor::cone_circle(2.0, 0.5));
        let line = space(SpaceDescriptor::half_line(2.0));
        let cases = [
            (ProbMeasure::new(plane, DensityFamily::gaussian(0.3)).unwrap(), Point::from_slice(&[zx, zy])),
            (ProbMeasure::new(hp, DensityFamily::heat_kernel(0.5)).unwrap(), Point::from_slice(&[zx, zy])),
            (ProbMeasure::new(cone, DensityFamily::heat_kernel(0.5)).unwrap(), Point::from_slice(&[zr, zy])),
            (ProbMeasure::new(line, DensityFamily::bump(Point::scalar(1.0), 0.6)).unwrap(), Point::scalar(zr)),
        ];
        for (m, z) in &cases {
            let var = variance_and_barycenter(m).unwrap();
            let sm = second_moment(m, z).unwrap();
            prop_assert!(var.var <= sm.value + var.error_estimate + sm.error_estimate + 1e-12);
        }
    }

    #[test]
    fn beta_scales_u_n(beta in 0.05f64..20.0, t in 0.05f64..5.0) {
        for s in [space(SpaceDescriptor::euclidean(3)), space(SpaceDescriptor::cone_circle(2.0, 0.5))] {
            let m = ProbMeasure::new(s.clone(), DensityFamily::heat_kernel(t)).unwrap();
            let n = s.dim();
            let base = u_n(entropy(&m).unwrap().value, n);
            let weighted = u_n(entropy(&m.clone().with_beta(beta).unwrap()).unwrap().value, n);
            prop_assert!((weighted / base - beta.powf(1.0 / n)).abs() < 1e-12 * beta.powf(1.0 / n));
        }
    }

    #[test]
    fn u_n_matches_direct_entropy(t in 0.05f64..5.0) {
        // ∫ p log p on the plane, written as a radial integral by hand.
        let s = space(SpaceDescriptor::euclidean(2));
        let m = ProbMeasure::new(s, DensityFamily::heat_kernel(t)).unwrap();
        let q = entropy(&m).unwrap();
        let log_p = |r: f64| -r * r / (4.0 * t) - (4.0 * PI * t).ln();
        let direct = integrate(|r: f64| 2.0 * PI * r * log_p(r).exp() * log_p(r), 0.0, 60.0 * t.sqrt(), &[2.0 * t.sqrt(), 8.0 * t.sqrt()], &QuadOptions::with_tol(1e-13, 1e-12)).unwrap();
        let (a, b) = (u_n(q.value, 2.0), u_n(direct.value, 2.0));
        prop_assert!((a - b).abs() <= a * (q.error_estimate + direct.error_estimate + 1e-11));
    }
}
