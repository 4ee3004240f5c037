use std::f64::consts::PI;

use proptest::prelude::*;
use softarm::dataset::{apply_action, encode_action, StateVector};
use softarm::kinematics::{backbone_points, config_from_tendons, forward_kinematics, tendon_lengths};
use softarm::{default_embuddy_spec, wrap_angle, Configuration};

fn config() -> impl Strategy<Value = Configuration> {
    let spec = default_embuddy_spec();
    let per_section: Vec<_> = spec.sections.iter().map(|s| (-PI..PI, 0.0..=s.max_bend)).collect();
    per_section.prop_map(|p| Configuration::from_pairs(&p))
}

fn state() -> impl Strategy<Value = StateVector> {
    (prop::array::uniform3(-2.0..2.0f64), prop::array::uniform3(-PI..PI), prop::bool::ANY).prop_map(|(p, r, g)| {
        StateVector([p[0], p[1], p[2], r[0], r[1], r[2], 0.0, if g { 1.0 } else { 0.0 }])
    })
}

proptest! {
    #[test]
    fn wrap_stays_in_half_open_range(a in -1e4..1e4f64) {
        let w = wrap_angle(a).unwrap();
        prop_assert!(w >= -PI && w < PI);
        let turns = (a - w) / (2.0 * PI);
        prop_assert!((turns - turns.round()).abs() < 1e-9);
    }

    #[test]
    fn action_replays_next_state(a in state(), b in state()) {
        let back = apply_action(&a, &encode_action(&a, &b));
        for i in 0..8 {
            let d = if (3..6).contains(&i) { wrap_angle(back.0[i] - b.0[i]).unwrap() } else { back.0[i] - b.0[i] };
            prop_assert!(d.abs() < 1e-12, "field {} off by {}", i, d);
        }
    }

    #[test]
    fn tip_never_farther_than_the_arm(q in config()) {
        let spec = default_embuddy_spec();
        let tip = forward_kinematics(&spec, &q).unwrap().position;
        prop_assert!(tip.norm() <= spec.total_length() + 1e-9);
        let pts = backbone_points(&spec, &q).unwrap();
        prop_assert!((pts.last().unwrap() - tip).norm() < 1e-9);
    }

    #[test]
    fn tendons_recover_bends(q in config()) {
        let spec = default_embuddy_spec();
        let t = tendon_lengths(&spec, &q).unwrap();
        let phis: Vec<f64> = q.sections.iter().map(|s| s.phi).collect();
        let back = config_from_tendons(&spec, &t, &phis).unwrap();
        for (a, b) in back.sections.iter().zip(&q.sections) {
            prop_assert!((a.theta - b.theta).abs() < 1e-12);
        }
    }
}
