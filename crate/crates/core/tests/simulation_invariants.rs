use fxguard_core::rational::{int, ratio, to_f64};
use fxguard_core::simulation::{
    case_study_config, controller_step, plant_step, run_closed_loop, ControllerArithmetic, DiscreteController,
    StateSpaceModel,
};
use fxguard_core::{FixedPointSpec, Rational, SignedFixedPoint};
use num_traits::Zero;
use proptest::prelude::*;

fn spec(p: u32, q: u32) -> FixedPointSpec {
    FixedPointSpec::new(p, q).unwrap()
}

#[test]
fn exact_controller_stabilizes_the_loop() {
    let mut cfg = case_study_config(spec(11, 15));
    cfg.arithmetic = ControllerArithmetic::Exact;
    let trace = run_closed_loop(&cfg).unwrap();
    assert_eq!(trace.summary.total_overflows, 0);
    assert!(to_f64(&trace.summary.final_y).abs() < 1e-2, "y(30) = {}", to_f64(&trace.summary.final_y));
}

#[test]
fn runs_are_deterministic() {
    let mut cfg = case_study_config(spec(12, 13));
    cfg.t_end = int(1);
    let a = run_closed_loop(&cfg).unwrap();
    let b = run_closed_loop(&cfg).unwrap();
    assert_eq!(a.to_csv(), b.to_csv());
    assert_eq!(a.records.len(), 10_001);
}

#[test]
fn wider_integer_part_avoids_overflow() {
    let run = |p, q| {
        let mut cfg = case_study_config(spec(p, q));
        cfg.t_end = int(5);
        run_closed_loop(&cfg).unwrap().summary.total_overflows
    };
    assert_eq!(run(11, 15), 0);
    assert!(run(12, 13) > 0);
}

#[test]
fn trace_overflow_counts_add_up() {
    let mut cfg = case_study_config(spec(12, 13));
    cfg.t_end = int(5);
    let trace = run_closed_loop(&cfg).unwrap();
    let total: u64 = trace.records.iter().map(|r| u64::from(r.overflow_events)).sum();
    assert_eq!(total, trace.summary.total_overflows);
    let first = trace.records.iter().find(|r| r.overflow_events > 0).map(|r| r.t.clone());
    assert_eq!(first, trace.summary.first_overflow_time);
}

#[test]
fn plant_is_linear_and_time_invariant() {
    let plant = fxguard_core::simulation::case_study_plant();
    let h = ratio(1, 10_000);
    let x1 = vec![ratio(3, 7), int(-2)];
    let x2 = vec![int(5), ratio(1, 3)];
    let (u1, u2) = (ratio(1, 2), int(-4));
    let (n1, y1) = plant_step(&x1, &u1, &plant, &h).unwrap();
    let (n2, y2) = plant_step(&x2, &u2, &plant, &h).unwrap();
    let xs: Vec<Rational> = x1.iter().zip(&x2).map(|(a, b)| int(2) * a + b).collect();
    let (ns, ys) = plant_step(&xs, &(int(2) * &u1 + &u2), &plant, &h).unwrap();
    assert_eq!(ys, int(2) * y1 + y2);
    for i in 0..2 {
        assert_eq!(ns[i], int(2) * &n1[i] + &n2[i]);
    }
}

fn small_controller() -> DiscreteController {
    let model = StateSpaceModel::new(
        vec![vec![int(-3), int(1)], vec![int(2), ratio(-1, 2)]],
        vec![int(1), int(-2)],
        vec![ratio(3, 2), int(-1)],
        Rational::zero(),
    )
    .unwrap();
    DiscreteController::new(model, ratio(1, 4)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    /// With clean inputs, a step reports overflow events exactly when some
    /// output carries the overflow terminal.
    #[test]
    fn overflow_events_are_never_silent(
        z in prop::collection::vec(-63i64..=63, 2),
        e in -63i64..=63,
    ) {
        let s = spec(2, 4);
        let q = small_controller().quantize(s).unwrap();
        let enc = |u: i64| SignedFixedPoint::from_units(&u.into(), s).unwrap();
        let zs: Vec<_> = z.iter().map(|&u| enc(u)).collect();
        let out = controller_step(&zs, &enc(e), &q).unwrap();
        let dirty = !out.u.is_clean() || out.z_next.iter().any(|v| !v.is_clean());
        prop_assert_eq!(out.overflow_events > 0, dirty);
    }
}
