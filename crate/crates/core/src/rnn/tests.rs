use super::*;
use crate::gradcheck::gradcheck;
use crate::linalg::spectral_radius;

fn random_seq(rng: &mut Rng, t: usize, d: usize) -> Vec<Vector> {
    (0..t).map(|_| Vector::from_fn(d, |_| rng.uniform(-1.0, 1.0))).collect()
}

fn random_targets(rng: &mut Rng, t: usize, q: usize) -> Vec<Target> {
    (0..t)
        .map(|_| Target::Value(Vector::from_fn(q, |_| rng.uniform(-1.0, 1.0))))
        .collect()
}

fn random_params(variant: RnnVariant, delays: &[usize], rng: &mut Rng) -> RnnParams {
    let mut p = RnnParams::init(variant, delays, (4, 3, 2), &InitScheme::Uniform, rng).unwrap();
    p.cell.b_i = Vector::from_fn(4, |_| rng.uniform(-0.5, 0.5));
    p.readout.b_y = Vector::from_fn(2, |_| rng.uniform(-0.5, 0.5));
    p
}

#[test]
fn zero_params_give_zero_state_and_output() {
    let p = RnnParams::zeros(RnnVariant::Vanilla, &[1], (3, 2, 2)).unwrap();
    let xs = vec![Vector::from([1.0, -4.0]); 3];
    let tr = p.forward(&xs).unwrap();
    for (s, y) in tr.cell.steps.iter().zip(&tr.outputs) {
        assert_eq!(s.h, Vector::zeros(3));
        assert_eq!(*y, Vector::zeros(2));
    }
}

#[test]
fn unit_tau_matches_vanilla_bitwise() {
    let mut rng = Rng::seed_from_u64(3);
    let vanilla = random_params(RnnVariant::Vanilla, &[1], &mut rng);
    let mut leaky = vanilla.clone();
    leaky.cell.variant = RnnVariant::Leaky(LeakyConfig::uniform(4, 1.0).unwrap());
    let xs = random_seq(&mut rng, 12, 3);
    let a = vanilla.forward(&xs).unwrap();
    let b = leaky.forward(&xs).unwrap();
    for (sa, sb) in a.cell.steps.iter().zip(&b.cell.steps) {
        for (u, v) in sa.h.iter().zip(sb.h.iter()) {
            assert_eq!(u.to_bits(), v.to_bits());
        }
    }
}

#[test]
fn huge_tau_copies_state() {
    let mut rng = Rng::seed_from_u64(4);
    let mut p = random_params(RnnVariant::Vanilla, &[1], &mut rng);
    p.cell.variant = RnnVariant::Leaky(LeakyConfig::uniform(4, 1e9).unwrap());
    let history = vec![Vector::from([0.3, -0.2, 0.9, -0.7])];
    let step = p.cell.forward_step(&history, &Vector::from([1.0, 2.0, -1.0])).unwrap();
    for (h, prev) in step.h.iter().zip(history[0].iter()) {
        assert!((h - prev).abs() < 1e-8);
    }
}

#[test]
fn rejects_bad_tau_and_shapes() {
    assert!(LeakyConfig::uniform(3, 0.5).is_err());
    assert!(LeakyConfig::uniform(3, f64::NAN).is_err());
    assert!(RnnCell::single(RnnVariant::Vanilla, Matrix::zeros(2, 3), Matrix::zeros(2, 1), Vector::zeros(2)).is_err());
    assert!(RnnCell::new(RnnVariant::Vanilla, BTreeMap::new(), Matrix::zeros(2, 1), Vector::zeros(2)).is_err());
    let cell = RnnCell::zeros(RnnVariant::Vanilla, &[1], 2, 1).unwrap();
    assert!(cell.forward_step(&[], &Vector::zeros(2)).is_err());
    assert!(cell.forward_step(&[Vector::zeros(3)], &Vector::zeros(1)).is_err());
}

#[test]
fn identity_plus_adds_previous_state() {
    let cell = RnnCell::single(
        RnnVariant::IdentityPlus,
        Matrix::zeros(2, 2),
        Matrix::zeros(2, 1),
        Vector::zeros(2),
    )
    .unwrap();
    let h = Vector::from([0.4, -0.1]);
    let step = cell.forward_step(std::slice::from_ref(&h), &Vector::zeros(1)).unwrap();
    assert_eq!(step.h, h.map(crate::linalg::tanh));
}

#[test]
fn longer_delays_read_older_states() {
    let mut w3 = Matrix::zeros(1, 1);
    w3[(0, 0)] = 1.0;
    let cell = RnnCell::new(
        RnnVariant::Vanilla,
        BTreeMap::from([(1, Matrix::zeros(1, 1)), (3, w3)]),
        Matrix::identity(1),
        Vector::zeros(1),
    )
    .unwrap();
    let xs: Vec<Vector> = [0.5, 0.0, 0.0, 0.0, 0.0].iter().map(|&v| Vector::from([v])).collect();
    let tr = cell.run(&xs).unwrap();
    let hs: Vec<f64> = tr.steps.iter().map(|s| s.h[0]).collect();
    assert_eq!(hs[1], 0.0);
    assert_eq!(hs[2], 0.0);
    assert_eq!(hs[3], crate::linalg::tanh(hs[0]));
    assert_eq!(hs[4], 0.0);
}

#[test]
fn states_stay_bounded() {
    let mut rng = Rng::seed_from_u64(5);
    let mut p = random_params(RnnVariant::Leaky(LeakyConfig::new(Vector::from([1.0, 2.0, 7.0, 30.0])).unwrap()), &[1], &mut rng);
    let w = p.cell.recurrent.get_mut(&1).unwrap();
    *w = w.scale(50.0);
    let xs: Vec<Vector> = random_seq(&mut rng, 40, 3).into_iter().map(|x| x.scale(100.0)).collect();
    for s in p.forward(&xs).unwrap().cell.steps {
        assert!(s.h.iter().all(|v| (-1.0..=1.0).contains(v)));
    }
}

#[test]
fn zero_case_gradients() {
    let p = RnnParams::zeros(RnnVariant::Vanilla, &[1], (3, 2, 2)).unwrap();
    let xs = vec![Vector::from([0.3, 0.1]); 4];
    let targets = vec![Target::Value(Vector::zeros(2)); 4];
    let g = p.evaluate(&xs, &targets, LossKind::SquaredError).unwrap().grads;
    assert_eq!(g.norm(), 0.0);

    let mut rng = Rng::seed_from_u64(6);
    let p = random_params(RnnVariant::Vanilla, &[1], &mut rng);
    let g = p
        .evaluate(&random_seq(&mut rng, 1, 3), &random_targets(&mut rng, 1, 2), LossKind::SquaredError)
        .unwrap()
        .grads;
    assert_eq!(g.cell.w(1).unwrap().max_abs(), 0.0);
    assert!(g.cell.u().max_abs() > 0.0);
}

#[test]
fn gradients_match_finite_differences() {
    let variants = [
        (RnnVariant::Vanilla, vec![1]),
        (RnnVariant::IdentityPlus, vec![1]),
        (RnnVariant::Vanilla, vec![1, 3]),
        (RnnVariant::Leaky(LeakyConfig::new(Vector::from([1.0, 1.7, 4.0, 12.0])).unwrap()), vec![1]),
        (RnnVariant::Leaky(LeakyConfig::new(Vector::from([1.5, 3.0, 1.0, 9.0])).unwrap()), vec![1, 2]),
    ];
    for (seed, (variant, delays)) in variants.into_iter().enumerate() {
        let mut rng = Rng::seed_from_u64(100 + seed as u64);
        let p = random_params(variant, &delays, &mut rng);
        let xs = random_seq(&mut rng, 5, 3);
        let ts = random_targets(&mut rng, 5, 2);
        let report = gradcheck(&p, &xs, &ts, LossKind::SquaredError, 1e-5).unwrap();
        assert!(report.max_rel_error < 1e-6, "{:?}", report.worst_entry());
    }
}

#[test]
fn gradient_check_flags_corruption() {
    let mut rng = Rng::seed_from_u64(8);
    let p = random_params(RnnVariant::Vanilla, &[1], &mut rng);
    let xs = random_seq(&mut rng, 5, 3);
    let ts = random_targets(&mut rng, 5, 2);
    let mut g = p.evaluate(&xs, &ts, LossKind::SquaredError).unwrap().grads;
    g.cell.u_mut()[(2, 1)] *= 1.1;
    let r = crate::gradcheck::gradcheck_against(&p, &g, &xs, &ts, LossKind::SquaredError, 1e-5).unwrap();
    let worst = r.worst_entry().unwrap();
    assert_eq!((worst.block.as_str(), worst.index), ("U", 2 * 3 + 1));
}

#[test]
fn bundle_round_trip() {
    let mut rng = Rng::seed_from_u64(9);
    for variant in [
        RnnVariant::Vanilla,
        RnnVariant::IdentityPlus,
        RnnVariant::Leaky(LeakyConfig::uniform(4, 3.0).unwrap()),
    ] {
        for delays in [vec![1], vec![1, 3]] {
            let p = random_params(variant.clone(), &delays, &mut rng);
            let text = p.to_bundle().to_text();
            let back = RnnParams::from_bundle(&Bundle::parse(&text).unwrap()).unwrap();
            assert_eq!(back, p);
        }
    }
    let names = random_params(RnnVariant::Vanilla, &[1, 3], &mut rng).block_names();
    assert_eq!(names, ["W_k:1", "W_k:3", "U", "b_i", "V", "b_y"]);
}

#[test]
fn init_schemes() {
    let mut rng = Rng::seed_from_u64(10);
    let eye = init_weights((4, 4), &InitScheme::CloseToIdentity { eps: 0.0 }, &mut rng).unwrap();
    assert_eq!(eye, Matrix::identity(4));

    let q = init_weights((6, 6), &InitScheme::Orthogonal, &mut rng).unwrap();
    let qtq = q.transpose().matmul(&q).unwrap();
    assert!(qtq.sub(&Matrix::identity(6)).unwrap().max_abs() < 1e-12);

    let w = init_weights((8, 8), &InitScheme::SpectralScaled { target: 0.95 }, &mut rng).unwrap();
    let rho = spectral_radius(&w, 1e-12, 20_000).unwrap().radius;
    assert!((rho - 0.95).abs() < 1e-6, "{rho}");

    assert!(init_weights((3, 4), &InitScheme::Orthogonal, &mut rng).is_err());
    assert!(init_weights((3, 3), &InitScheme::SpectralScaled { target: 0.0 }, &mut rng).is_err());
    assert!(init_weights((3, 3), &InitScheme::CloseToIdentity { eps: -1.0 }, &mut rng).is_err());
}

#[test]
fn forward_is_deterministic() {
    let build = || {
        let mut rng = Rng::seed_from_u64(11);
        let p = random_params(RnnVariant::Vanilla, &[1], &mut rng);
        let xs = random_seq(&mut rng, 6, 3);
        let ts = random_targets(&mut rng, 6, 2);
        p.evaluate(&xs, &ts, LossKind::SquaredError).unwrap()
    };
    let (a, b) = (build(), build());
    assert_eq!(a.grads.flatten(), b.grads.flatten());
    assert_eq!(a.loss.to_bits(), b.loss.to_bits());
}

#[test]
fn init_scheme_names_round_trip() {
    for s in [
        InitScheme::Uniform,
        InitScheme::Orthogonal,
        InitScheme::CloseToIdentity { eps: 0.01 },
        InitScheme::SpectralScaled { target: 0.9 },
    ] {
        assert_eq!(s.to_string().parse::<InitScheme>().unwrap(), s);
    }
    assert!("close_to_identity".parse::<InitScheme>().is_err());
    assert!("xavier".parse::<InitScheme>().is_err());
}
