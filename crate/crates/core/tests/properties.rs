use proptest::prelude::*;

use nndeflate::deflation::{shift_at, ShiftSchedule};
use nndeflate::model::Model;
use nndeflate::network::{load_params, save_params, ActivationKind, InitScheme};
use nndeflate::optimizer::LrSchedule;
use nndeflate::problems::{catalogue, Problem};
use nndeflate::registry::{initial_theta, separation};
use nndeflate::residual::condition_errors;
use nndeflate::rng::SplitMix64;
use nndeflate::sampler::{discrete_l2, sample_boundary, sample_interior, Domain};

fn scale_output(model: &Model, theta: &[f64], c: f64) -> Vec<f64> {
    let out = model.fields[0].spec.offsets().output.range();
    theta.iter().enumerate().map(|(i, v)| if out.contains(&i) { c * v } else { *v }).collect()
}

fn domains() -> Vec<Domain> {
    vec![
        Domain::Interval { a: 0.0, b: 1.0 },
        Domain::Annulus { dim: 2, r: 1.0, big_r: 100.0 },
        Domain::Annulus { dim: 3, r: 1.0, big_r: 100.0 },
        Domain::Annulus { dim: 6, r: 1.0, big_r: 100.0 },
        Domain::Star3d,
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn interior_samples_stay_inside(seed in any::<u64>(), which in 0usize..5) {
        let d = domains()[which];
        let b = sample_interior(&d, 200, seed).unwrap();
        prop_assert_eq!(b.points.rows(), 200);
        for r in 0..200 {
            prop_assert!(d.contains(b.points.row(r)));
        }
        prop_assert_eq!(sample_interior(&d, 200, seed).unwrap().points, b.points);
    }

    #[test]
    fn discrete_l2_is_homogeneous(v in prop::collection::vec(-1e3f64..1e3, 1..64), c in -50.0f64..50.0) {
        let scaled: Vec<f64> = v.iter().map(|x| c * x).collect();
        let (a, b) = (discrete_l2(&v).unwrap(), discrete_l2(&scaled).unwrap());
        prop_assert!((b - c.abs() * a).abs() <= 1e-12 * (1.0 + b));
    }

    #[test]
    fn schedules_are_monotone(q0 in -5.0f64..0.0, dq in 0.0f64..4.0, n_total in 1usize..5000) {
        let lr = LrSchedule::new(q0, q0 - dq);
        let shift = ShiftSchedule::Varying { p0: q0 - dq, p1: q0 };
        let mut prev = (f64::INFINITY, 0.0);
        for n in (0..=n_total).step_by(1 + n_total / 50) {
            let (l, a) = (lr.lr_at(n, n_total), shift_at(&shift, n, n_total));
            prop_assert!(l <= prev.0 * (1.0 + 1e-12) && a >= prev.1 * (1.0 - 1e-12));
            prev = (l, a);
        }
        prop_assert!((lr.lr_at(n_total, n_total) - 10f64.powf(q0 - dq)).abs() <= 1e-12 * 10f64.powf(q0 - dq));
        prop_assert!((shift_at(&shift, n_total, n_total) - 10f64.powf(q0)).abs() <= 1e-12 * 10f64.powf(q0));
    }

    #[test]
    fn uniform_draws_stay_in_range(seed in any::<u64>(), lo in -10.0f64..0.0, w in 1e-3f64..10.0) {
        let mut rng = SplitMix64::new(seed);
        for _ in 0..100 {
            let x = rng.uniform(lo, lo + w);
            prop_assert!(x >= lo && x < lo + w);
        }
    }

    #[test]
    fn separation_of_scaled_copies(seed in 0u64..1000, c in -3.0f64..3.0) {
        // A bare network has no output bias, so scaling the output layer scales u.
        let p = Problem::by_name("painleve").unwrap();
        let m = p.model(2, 6, ActivationKind::Tanh, true, None).unwrap();
        let t = initial_theta(&p, &m, seed, InitScheme::Xavier).unwrap();
        let tc = scale_output(&m, &t, c);
        let s = separation(&p, (&m, &t), (&m, &tc), 500, 3).unwrap();
        let back = separation(&p, (&m, &tc), (&m, &t), 500, 3).unwrap();
        prop_assert!((s.relative - back.relative).abs() < 1e-15);
        prop_assert!(s.relative >= 0.0 && s.relative <= 1.0 + 1e-12);
        let expect = (1.0 - c).abs() / (1.0 + c.abs());
        prop_assert!((s.relative - expect).abs() < 1e-9, "{} vs {}", s.relative, expect);
    }

    #[test]
    fn probing_keeps_boundary_conditions(seed in any::<u64>(), j in 1usize..4) {
        for name in ["bootstrap_a", "bootstrap_b"] {
            let p = Problem::by_name(name).unwrap();
            let basis = p.probing_basis(j, (-5.0, 5.0)).unwrap();
            let m = p.model(2, 6, ActivationKind::ReluCubed, false, Some(basis)).unwrap();
            let t = initial_theta(&p, &m, seed, InitScheme::UniformFanin).unwrap();
            let e = condition_errors(&p, &m, &t).unwrap();
            prop_assert!(e[0].abs() < 1e-4, "u'(0) error {}", e[0]);
            prop_assert!(e[1].abs() < 1e-12, "u(1) error {}", e[1]);
        }
        for name in ["yamabe2d", "reaction_diffusion"] {
            let p = Problem::by_name(name).unwrap();
            let basis = p.probing_basis(j, (-1.0, 1.0)).unwrap();
            let m = p.model(2, 6, ActivationKind::ReluCubed, false, Some(basis)).unwrap();
            let t = initial_theta(&p, &m, seed, InitScheme::UniformFanin).unwrap();
            let b = sample_boundary(&p.domain(), 32, seed).unwrap().points;
            let u = m.values(&t, &b, &p.steps()).unwrap();
            for (vals, g) in u.iter().zip(p.dirichlet_values()) {
                for v in vals {
                    prop_assert!((v - g).abs() < 1e-9 * (1.0 + g.abs()), "{name}: {v} vs {g}");
                }
            }
        }
    }

    #[test]
    fn parameter_files_round_trip(seed in any::<u64>()) {
        let dir = tempfile::tempdir().unwrap();
        for p in catalogue() {
            let m = p.default_model().unwrap();
            for (i, part) in m.init(seed, InitScheme::UniformFanin).unwrap().iter().enumerate() {
                let path = dir.path().join(format!("{}.{i}.nnp", p.name));
                save_params(&path, part).unwrap();
                let back = load_params(&path, Some(&part.spec)).unwrap();
                prop_assert_eq!(&back.values, &part.values);
            }
        }
    }
}

#[test]
fn corrupted_parameter_file_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let p = Problem::by_name("painleve").unwrap();
    let part = p.default_model().unwrap().init(1, InitScheme::UniformFanin).unwrap().remove(0);
    let path = dir.path().join("a.nnp");
    save_params(&path, &part).unwrap();
    let mut bytes = std::fs::read(&path).unwrap();
    let last = bytes.len() - 1;
    bytes[last] ^= 0x40;
    std::fs::write(&path, bytes).unwrap();
    assert!(load_params(&path, Some(&part.spec)).is_err());
}
