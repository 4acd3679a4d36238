use proptest::prelude::*;
use rnnlab::bidir::ElmoStack;
use rnnlab::harness::{AnyModel, Family, ModelSpec};
use rnnlab::linalg::Rng;
use rnnlab::lstm::LstmVariant;
use rnnlab::model::Model;
use rnnlab::params::{clip_norm, Parameters};
use rnnlab::{Bundle, Vector};

fn family() -> impl Strategy<Value = Family> {
    (0..Family::ALL.len()).prop_map(|i| Family::ALL[i])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn bundles_round_trip(f in family(), p in 1usize..6, d in 1usize..4, q in 1usize..4, seed in any::<u64>()) {
        let m = ModelSpec::new(f, p, d, q).build(&mut Rng::seed_from_u64(seed)).unwrap();
        let back = AnyModel::from_bundle(&Bundle::parse(&m.to_bundle().to_text()).unwrap()).unwrap();
        prop_assert_eq!(back, m);
    }

    #[test]
    fn one_output_per_input(f in family(), len in 1usize..12, seed in any::<u64>()) {
        let mut rng = Rng::seed_from_u64(seed);
        let m = ModelSpec::new(f, 3, 2, 2).build(&mut rng).unwrap();
        let xs: Vec<Vector> = (0..len).map(|_| Vector::from_fn(2, |_| rng.uniform(-3.0, 3.0))).collect();
        let ys = m.predict(&xs).unwrap();
        prop_assert_eq!(ys.len(), len);
        prop_assert!(ys.iter().all(|y| y.len() == 2 && y.is_finite()));
        prop_assert_eq!(m.predict(&xs).unwrap(), ys);
    }

    #[test]
    fn clipping_caps_the_norm(f in family(), scale in 1e-3f64..1e3, cap in 1e-2f64..10.0, seed in any::<u64>()) {
        let mut g = ModelSpec::new(f, 3, 2, 2).build(&mut Rng::seed_from_u64(seed)).unwrap();
        g.scale_in_place(scale);
        let before = g.norm();
        let reported = clip_norm(&mut g, cap);
        prop_assert_eq!(reported, before);
        prop_assert!(g.norm() <= cap * (1.0 + 1e-12) || before <= cap);
    }

    #[test]
    fn elmo_embedding_is_linear_in_its_weights(
        gamma in -3.0f64..3.0,
        s in proptest::collection::vec(-2.0f64..2.0, 3),
        seed in any::<u64>(),
    ) {
        let mut rng = Rng::seed_from_u64(seed);
        let mut stack = ElmoStack::init(LstmVariant::VANILLA, 3, 2, 2, &mut rng).unwrap();
        let xs: Vec<Vector> = (0..4).map(|_| Vector::from_fn(2, |_| rng.uniform(-1.0, 1.0))).collect();
        let states = stack.layer_states(&xs).unwrap();
        stack.gamma = gamma;
        stack.s = s.clone();
        let e = stack.embed(&xs).unwrap();
        for (t, v) in e.iter().enumerate() {
            for j in 0..v.len() {
                let want: f64 = gamma * (0..3).map(|l| s[l] * states[l][t][j]).sum::<f64>();
                prop_assert!((v[j] - want).abs() <= 1e-14 * want.abs().max(1.0));
            }
        }
    }
}
