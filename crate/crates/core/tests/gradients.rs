use rnnlab::gradcheck::{gradcheck, gradcheck_against};
use rnnlab::harness::{family_gradcheck, CheckInstance, Family};
use rnnlab::linalg::Rng;
use rnnlab::model::Model;
use rnnlab::params::Parameters;
use rnnlab::rnn::{InitScheme, RnnParams, RnnVariant, StateActivation};
use rnnlab::{LossKind, Target, Vector};

#[test]
fn every_family_over_twenty_seeds() {
    for family in Family::ALL {
        for seed in 0..20 {
            let r = family_gradcheck(family, seed, 1e-5).unwrap();
            assert!(
                r.max_rel_error < 1e-6,
                "{family} seed {seed}: {:?}",
                r.worst_entry()
            );
            assert!(r.reference_gap < 1e-12, "{family} seed {seed}: gap {}", r.reference_gap);
        }
    }
}

#[test]
fn linear_cell_gradients_are_exact_to_rounding() {
    for seed in 0..5 {
        let mut rng = Rng::seed_from_u64(seed);
        let mut m = RnnParams::init(RnnVariant::Vanilla, &[1], (3, 2, 2), &InitScheme::Uniform, &mut rng).unwrap();
        m.cell = m.cell.with_activation(StateActivation::Identity);
        let xs: Vec<Vector> = (0..2).map(|_| Vector::from_fn(2, |_| rng.uniform(-1.0, 1.0))).collect();
        let ts: Vec<Target> = (0..2)
            .map(|_| Target::Value(Vector::from_fn(2, |_| rng.uniform(-1.0, 1.0))))
            .collect();
        let r = gradcheck(&m, &xs, &ts, LossKind::SquaredError, 1e-7).unwrap();
        assert!(r.max_rel_error < 1e-12, "seed {seed}: {:?}", r.worst_entry());
    }
}

#[test]
fn corrupted_entry_is_named_in_every_family() {
    for family in Family::ALL {
        let inst = CheckInstance::draw(family, 4).unwrap();
        let mut grads = inst.model.evaluate(&inst.inputs, &inst.targets, inst.kind).unwrap().grads;
        let (block, index) = {
            let blocks = grads.blocks();
            let b = blocks.iter().find(|b| b.values.iter().any(|v| v.abs() > 1e-3)).unwrap();
            let i = b.values.iter().position(|v| v.abs() > 1e-3).unwrap();
            (b.name.clone(), i)
        };
        for b in grads.blocks_mut() {
            if b.name == block {
                b.values[index] *= 1.1;
            }
        }
        let r = gradcheck_against(&inst.model, &grads, &inst.inputs, &inst.targets, inst.kind, 1e-5).unwrap();
        let worst = r.worst_entry().unwrap();
        assert_eq!((worst.block.as_str(), worst.index), (block.as_str(), index), "{family}");
        assert!(worst.rel_error > 0.05);
    }
}

#[test]
fn epsilon_outside_range_is_rejected() {
    let inst = CheckInstance::draw(Family::RnnVanilla, 0).unwrap();
    assert!(inst.check(1e-9).is_err());
    assert!(inst.check(1e-2).is_err());
}
