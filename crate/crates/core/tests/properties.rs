use std::f64::consts::{FRAC_PI_4, PI};

use num_complex::Complex64;
use pmm_core::analysis::{
    cphase_alpha, cphase_target, gate_fidelity, process_fidelity, sorting_fidelity, PhaseSign,
};
use pmm_core::circuits::{bare_dp_sagnac, pbs_sagnac, pmm, pmm_closed_form, sandwich_with, PmmSettings};
use pmm_core::elements::{
    dove_prism, half_wave_plate, pbs_merge, pbs_split, quarter_wave_plate, DpParams, Direction,
};
use pmm_core::state::{compose, hybrid_dim, CHAIN_TOL};
use pmm_core::{HybridState, Polarization, TransferOperator};
use proptest::prelude::*;

const L_MAX: u32 = 3;

#[derive(Clone, Debug)]
enum El {
    Hwp(f64, bool),
    Qwp(f64),
    Dp(f64, f64, f64, f64, bool),
}

fn dir(b: bool) -> Direction {
    if b {
        Direction::B
    } else {
        Direction::A
    }
}

fn build(el: &El) -> TransferOperator {
    match *el {
        El::Hwp(t, b) => half_wave_plate(L_MAX, t, dir(b)).unwrap(),
        El::Qwp(t) => quarter_wave_plate(L_MAX, t).unwrap(),
        El::Dp(tp, tq, dphi, a, b) => dove_prism(L_MAX, &DpParams::new(tp, tq, dphi, a).unwrap(), dir(b)).unwrap(),
    }
}

fn angle() -> impl Strategy<Value = f64> {
    -PI..PI
}

fn lossless_element() -> impl Strategy<Value = El> {
    prop_oneof![
        (angle(), any::<bool>()).prop_map(|(t, b)| El::Hwp(t, b)),
        angle().prop_map(El::Qwp),
        (angle(), angle(), any::<bool>()).prop_map(|(d, a, b)| El::Dp(1.0, 1.0, d, a, b)),
    ]
}

fn any_element() -> impl Strategy<Value = El> {
    prop_oneof![
        lossless_element(),
        (0.01f64..=1.0, 0.01f64..=1.0, angle(), angle(), any::<bool>())
            .prop_map(|(tp, tq, d, a, b)| El::Dp(tp, tq, d, a, b)),
    ]
}

fn state() -> impl Strategy<Value = HybridState> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), hybrid_dim(L_MAX)).prop_map(|v| {
        let amps = nalgebra::DVector::from_iterator(v.len(), v.into_iter().map(|(r, i)| Complex64::new(r, i)));
        HybridState::from_vector(L_MAX, amps).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn lossless_chains_are_unitary(chain in prop::collection::vec(lossless_element(), 1..12)) {
        let ops: Vec<_> = chain.iter().map(build).collect();
        let total = compose(L_MAX, &ops).unwrap();
        prop_assert!(total.is_unitary(CHAIN_TOL));
    }

    #[test]
    fn chains_never_amplify(chain in prop::collection::vec(any_element(), 1..12)) {
        let ops: Vec<_> = chain.iter().map(build).collect();
        let total = compose(L_MAX, &ops).unwrap();
        prop_assert!(total.max_singular_value() <= 1.0 + 1e-12);
    }

    #[test]
    fn compose_agrees_with_sequential_apply(chain in prop::collection::vec(any_element(), 1..8), s in state()) {
        let ops: Vec<_> = chain.iter().map(build).collect();
        let total = compose(L_MAX, &ops).unwrap().apply(&s).unwrap();
        let mut step = s.clone();
        for op in &ops {
            step = op.apply(&step).unwrap();
        }
        prop_assert!(total.max_distance(&step).unwrap() < CHAIN_TOL);
    }

    #[test]
    fn pbs_round_trip(s in state()) {
        let (h, v) = pbs_split(&s);
        prop_assert!((h.norm_sqr() + v.norm_sqr() - s.norm_sqr()).abs() < 1e-12);
        let back = pbs_merge(&h, &v).unwrap();
        prop_assert!(back.max_distance(&s).unwrap() < 1e-15);
    }

    #[test]
    fn direction_mirrors_angles(t in angle(), tp in 0.01f64..=1.0, tq in 0.01f64..=1.0, d in angle()) {
        let hb = half_wave_plate(L_MAX, t, Direction::B).unwrap();
        let ha = half_wave_plate(L_MAX, -t, Direction::A).unwrap();
        prop_assert!(hb.max_distance(&ha).unwrap() < 1e-15);
        let db = dove_prism(L_MAX, &DpParams::new(tp, tq, d, t).unwrap(), Direction::B).unwrap();
        let da = dove_prism(L_MAX, &DpParams::new(tp, tq, d, -t).unwrap(), Direction::A).unwrap();
        prop_assert!(db.max_distance(&da).unwrap() < 1e-15);
    }

    #[test]
    fn sagnac_loops_never_amplify(chain in prop::collection::vec(any_element(), 1..6)) {
        // same physical elements seen from both directions
        let ops_a: Vec<_> = chain.iter().map(build).collect();
        let mirrored: Vec<El> = chain.iter().map(|e| match *e {
            El::Hwp(t, b) => El::Hwp(t, !b),
            El::Dp(tp, tq, d, a, b) => El::Dp(tp, tq, d, a, !b),
            ref q => q.clone(),
        }).rev().collect();
        let ops_b: Vec<_> = mirrored.iter().map(build).collect();
        let s = pbs_sagnac(&compose(L_MAX, &ops_a).unwrap(), &compose(L_MAX, &ops_b).unwrap()).unwrap();
        prop_assert!(s.max_singular_value() <= 1.0 + 1e-12);
    }

    #[test]
    fn pmm_matches_closed_form(alpha in angle(), tp in 0.01f64..=1.0, tq in 0.01f64..=1.0, d in angle(), l in -3i32..=3) {
        let dp = DpParams::new(tp, tq, d, alpha).unwrap();
        let op = pmm(L_MAX, alpha, &dp, &dp).unwrap();
        let block = op.mode_block(l).unwrap();
        let h = pmm_closed_form(&dp, alpha, Polarization::H, l);
        let v = pmm_closed_form(&dp, alpha, Polarization::V, l);
        prop_assert!((block[(0, 0)] - h).norm() < 1e-12);
        prop_assert!((block[(1, 1)] - v).norm() < 1e-12);
        prop_assert!(block[(0, 1)].norm() < 1e-12 && block[(1, 0)].norm() < 1e-12);
    }

    #[test]
    fn sorting_fidelity_in_range(a in 0.0f64..10.0, b in 0.0f64..10.0) {
        prop_assume!(a + b > 0.0);
        let f = sorting_fidelity(a.max(b), a.min(b)).unwrap();
        prop_assert!((0.5..=1.0).contains(&f));
    }

    #[test]
    fn process_fidelity_bounded_and_phase_blind(
        chain in prop::collection::vec(any_element(), 1..6),
        gamma in angle(),
    ) {
        let ops: Vec<_> = chain.iter().map(build).collect();
        let u = compose(L_MAX, &ops).unwrap();
        let t = cphase_target(L_MAX, 3, 3, PhaseSign::Conjugated).unwrap();
        let restricted = u.restrict(&t.modes).unwrap();
        let f = process_fidelity(&restricted, &t.matrix).unwrap();
        prop_assert!(f <= 1.0 + 1e-12);
        let phased = &restricted * Complex64::from_polar(1.0, gamma);
        prop_assert!((process_fidelity(&phased, &t.matrix).unwrap() - f).abs() < 1e-12);
    }
}

#[test]
fn wave_plate_powers() {
    for t in [0.0, 0.3, -1.1, 2.5] {
        let h = half_wave_plate(L_MAX, t, Direction::A).unwrap();
        let h2 = compose(L_MAX, &[h.clone(), h]).unwrap();
        assert!(h2.max_distance(&TransferOperator::identity(L_MAX)).unwrap() < 1e-12);
        let q = quarter_wave_plate(L_MAX, t).unwrap();
        let q4 = compose(L_MAX, &[q.clone(), q.clone(), q.clone(), q]).unwrap();
        // QWP^4 = I up to a global phase
        let phase = q4.matrix()[(0, 0)];
        assert!((phase.norm() - 1.0).abs() < 1e-12);
        let id = TransferOperator::identity(L_MAX).scale(phase);
        assert!(q4.max_distance(&id).unwrap() < 1e-12);
    }
}

#[test]
fn prism_singular_values_are_the_transmissions() {
    let dp = DpParams::new(0.81, 0.49, 0.7, 0.4).unwrap();
    let sv = dove_prism(L_MAX, &dp, Direction::A).unwrap().singular_values();
    let n = hybrid_dim(L_MAX) / 2;
    for (k, s) in sv.iter().enumerate() {
        let want = if k < n { 0.9 } else { 0.7 };
        assert!((s - want).abs() < 1e-12, "{k}: {s}");
    }
}

#[test]
fn cphase_law_up_to_eight_modes() {
    for n in [2, 3, 4] {
        let alpha = cphase_alpha(n);
        let op = pmm(7, alpha, &DpParams::ideal(alpha), &DpParams::ideal(alpha)).unwrap();
        for d in 2..=8 {
            let t = cphase_target(7, d, n, PhaseSign::Conjugated).unwrap();
            assert!((gate_fidelity(&op, &t).unwrap() - 1.0).abs() < 1e-10);
        }
    }
}

#[test]
fn untied_sandwich_leaks_out_of_the_loop() {
    // a mistuned wave plate rotates light into the cross polarization; the
    // Sagnac returns it to the input port, so the output loses intensity
    let dp = DpParams::ideal(FRAC_PI_4);
    let a = sandwich_with(L_MAX, 0.3, &dp, 0.5, Direction::A).unwrap();
    let b = sandwich_with(L_MAX, 0.3, &dp, 0.5, Direction::B).unwrap();
    let s = pbs_sagnac(&a, &b).unwrap();
    assert!(s.max_singular_value() < 1.0 - 1e-3);
    let perturbed = PmmSettings::ideal(FRAC_PI_4).with_hwp([0.1, 0.2, -0.2, -0.3]).build(L_MAX).unwrap();
    assert!(perturbed.max_singular_value() <= 1.0 + 1e-12);
}

#[test]
fn bare_sagnac_is_unitary_only_for_ideal_prisms() {
    let ideal = bare_dp_sagnac(L_MAX, 0.3, &DpParams::ideal(0.3)).unwrap();
    assert!(ideal.is_unitary(1e-12));
    let lossy = bare_dp_sagnac(L_MAX, 0.3, &DpParams::new(1.0, 0.9, FRAC_PI_4, 0.3).unwrap()).unwrap();
    assert!(!lossy.is_unitary(1e-6));
    assert!(lossy.max_singular_value() <= 1.0 + 1e-12);
}
