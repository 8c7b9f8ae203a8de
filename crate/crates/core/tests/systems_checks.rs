use std::f64::consts::PI;

use nonlocal_core::grid::{build_grid, Jet, MultiIndex, Point};
use nonlocal_core::systems::{
    check_assumption, check_ellipticity, make_preset, Coefficient, ExpressionProblem, FullyNonlinearSpec,
    InitialData, LinearSystemSpec, Partial, Problem, SamplePlan, PRESET_NAMES,
};
use nonlocal_core::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn grid(d: usize, r: usize, m: usize) -> nonlocal_core::grid::TriangleGrid {
    build_grid(1.0, 4, 2.0 * PI, 9, d, r, m).unwrap()
}

#[test]
fn heat_is_elliptic_with_unit_constant() {
    let p = make_preset("nonlocal_heat_linear").unwrap();
    let rep = check_ellipticity(&p, &SamplePlan::new(&grid(1, 1, 1)), 1.0).unwrap();
    assert!(rep.passed);
    assert_eq!(rep.lambda_est, 1.0);
}

#[test]
fn negative_diagonal_part_is_caught_with_a_witness() {
    let p = make_preset("nonlocal_negative").unwrap();
    let rep = check_ellipticity(&p, &SamplePlan::new(&grid(1, 1, 1)), 1.0).unwrap();
    assert!(!rep.passed);
    let w = rep.worst_case.unwrap();
    assert_eq!(w.condition, "combined");
    assert_eq!(w.ratio, -1.0);
}

#[test]
fn fourth_order_sign_convention() {
    let g = InitialData::scalar(|_, y| y[0].sin());
    let mut s = LinearSystemSpec::new("minus_bilaplacian", 1, 2, 1, g).unwrap();
    s.set_a(MultiIndex::pure(0, 4), Coefficient::scalar(-1.0)).unwrap();
    let rep = check_ellipticity(&Problem::Linear(s), &SamplePlan::new(&grid(1, 2, 1)), 1.0).unwrap();
    assert!(rep.passed, "{rep:?}");
    let wrong = {
        let mut s = LinearSystemSpec::new("plus_bilaplacian", 1, 2, 1, InitialData::zero(1)).unwrap();
        s.set_a(MultiIndex::pure(0, 4), Coefficient::scalar(1.0)).unwrap();
        s
    };
    assert!(!check_ellipticity(&Problem::Linear(wrong), &SamplePlan::new(&grid(1, 2, 1)), 1.0).unwrap().passed);
}

#[test]
fn mixed_term_in_two_dimensions() {
    // A = [[1, 0.5], [0.5, 1]] as a quadratic form in ξ has eigenvalues 0.5 and 1.5
    let mut s = LinearSystemSpec::new("aniso", 2, 1, 1, InitialData::zero(1)).unwrap();
    let q = MultiIndex::all_of_order(2, 2);
    s.set_a(q[0], Coefficient::scalar(1.0)).unwrap();
    s.set_a(q[1], Coefficient::scalar(1.0)).unwrap();
    s.set_a(q[2], Coefficient::scalar(1.0)).unwrap();
    let rep = check_ellipticity(&Problem::Linear(s), &SamplePlan::new(&grid(2, 1, 1)), 0.49).unwrap();
    assert!(rep.passed);
    assert!((rep.lambda_est - 0.5).abs() < 1e-3, "{}", rep.lambda_est);
}

#[test]
fn assumption_on_constant_coefficients() {
    let p = make_preset("nonlocal_heat_linear").unwrap();
    let rep = check_assumption(&p, None, 1.0, &grid(1, 1, 1)).unwrap();
    assert_eq!(rep.l_est, 0.0);
    assert_eq!(rep.k_est, 1.0);
}

#[test]
fn assumption_on_heat_in_fully_nonlinear_form() {
    let p = make_preset("fullnl_heat").unwrap();
    let rep = check_assumption(&p, None, 1.0, &grid(1, 1, 1)).unwrap();
    assert!((rep.l_est - 1.0).abs() < 1e-6, "{}", rep.l_est);
    assert!(rep.k_est.is_finite());
    assert!(rep.ellipticity.passed);
    assert_eq!(rep.ellipticity.lambda_est, 1.0);
}

#[test]
fn quadratic_nonlinearity_is_only_locally_lipschitz() {
    let grid = grid(1, 1, 1);
    let f = ExpressionProblem::new("square", "fully_nonlinear", 1, 1)
        .with("F", "q11^2")
        .with("g", "sin(y1)")
        .build()
        .unwrap();
    let mut last = 0.0;
    for r0 in [0.5, 1.0, 2.0] {
        let rep = check_assumption(&f, None, r0, &grid).unwrap();
        assert!(rep.l_est > last, "L_est must grow with the ball");
        // ball centred at the zero jet: max |q11| = r0, plus the forward step
        assert!((rep.l_est - 2.0 * r0).abs() <= 2e-4, "r0 {r0}: {}", rep.l_est);
        last = rep.l_est;
    }
}

#[test]
fn fully_nonlinear_callbacks_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for name in PRESET_NAMES {
        let Ok(spec) = make_preset(name).unwrap().into_fully_nonlinear() else { continue };
        let d = spec.d();
        for _ in 0..100 {
            let t: f64 = rng.gen_range(0.0..1.0);
            let p = Point::new(t, rng.gen_range(0.0..=t), &[rng.gen_range(0.0..6.3), rng.gen_range(0.0..6.3)][..d]);
            let mut jet = Jet::zeros(d, 1, 2);
            for idx in MultiIndex::all_up_to(d, 2) {
                jet.local_mut(idx)[0] = rng.gen_range(-2.0..2.0);
                jet.diagonal_mut(idx)[0] = rng.gen_range(-2.0..2.0);
            }
            for which in spec.analytic_partials() {
                let a = spec.partial(which, &p, &jet).unwrap();
                let b = spec.partial_fd(which, &p, &jet).unwrap();
                assert!((a - b).abs() <= 1e-6 * a.abs().max(1.0), "{name} {which:?}: {a} vs {b}");
            }
        }
    }
}

#[test]
fn missing_partial_without_fallback_is_reported() {
    let mut spec = FullyNonlinearSpec::new("bare", 1, |_, j| Ok(j.local(MultiIndex::pure(0, 2))[0]), InitialData::zero(1)).unwrap();
    spec.fd_fallback = false;
    assert!(matches!(
        spec.partial(Partial::Q(0), &Point::new(0.0, 0.0, &[0.0]), &Jet::zeros(1, 1, 2)),
        Err(Error::MissingDerivativeCallback(_))
    ));
}

#[test]
fn catalog_heat_entries() {
    let s = make_preset("local_family").unwrap().into_linear().unwrap();
    assert!(s.is_local());
    assert!(matches!(make_preset("no_such_problem"), Err(Error::UnknownPreset(_))));
}

#[test]
fn every_preset_meets_its_documented_constant() {
    for name in PRESET_NAMES {
        let info = nonlocal_core::systems::preset_info(name).unwrap();
        let p = make_preset(name).unwrap();
        let (d, r, m) = p.shape();
        let rep = check_ellipticity(&p, &SamplePlan::new(&grid(d, r, m)), info.lambda.unwrap_or(1.0)).unwrap();
        assert_eq!(rep.passed, info.lambda.is_some(), "{name}: {rep:?}");
    }
}
