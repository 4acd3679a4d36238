//! Limits in which a gated or leaky cell collapses to a copy or to a
//! simpler cell.

use rnnlab::gru::{GruCell, GruGates, GruVariant};
use rnnlab::linalg::{Matrix, Rng, Vector};
use rnnlab::lstm::{LstmCell, LstmState, LstmVariant};
use rnnlab::rnn::{LeakyConfig, RnnCell, RnnVariant};

const STEPS: usize = 100;

fn inputs(rng: &mut Rng, d: usize) -> Vec<Vector> {
    (0..STEPS).map(|_| Vector::from_fn(d, |_| rng.uniform(-1.0, 1.0))).collect()
}

#[test]
fn saturated_lstm_gates_carry_the_cell() {
    for variant in [
        LstmVariant::VANILLA,
        LstmVariant::NO_PEEPHOLES,
        LstmVariant::FULL_GATE_RECURRENCE,
    ] {
        let mut rng = Rng::seed_from_u64(5);
        let mut cell = LstmCell::init(variant, 4, 3, &mut rng);
        cell.forget.as_mut().unwrap().b = Vector::filled(4, 60.0);
        cell.input.b = Vector::filled(4, -60.0);
        let mut state = LstmState::zeros(4);
        state.c = Vector::from([0.7, -0.4, 0.05, -1.3]);
        let c0 = state.c.clone();
        for x in inputs(&mut rng, 3) {
            let s = cell.forward_step(&state, &x).unwrap();
            assert!(s.c.sub(&state.c).max_abs() < 1e-9, "{}", variant.name());
            state = LstmState {
                h: s.h.clone(),
                c: s.c.clone(),
                gates: [s.i.clone(), s.f.clone(), s.o.clone()],
            };
        }
        assert!(state.c.sub(&c0).max_abs() < 1e-9, "{}", variant.name());
    }
}

#[test]
fn closed_gru_update_gate_carries_the_state() {
    for variant in [GruVariant::FullyGated, GruVariant::Minimal] {
        let mut rng = Rng::seed_from_u64(6);
        let mut cell = GruCell::init(variant, 4, 2, &mut rng);
        match &mut cell.gates {
            GruGates::FullyGated { update, .. } => update.b = Vector::filled(4, -60.0),
            GruGates::Minimal { forget } => forget.b = Vector::filled(4, -60.0),
        }
        let h0 = Vector::from([0.3, -0.8, 0.6, 0.1]);
        let mut h = h0.clone();
        for x in inputs(&mut rng, 2) {
            let s = cell.forward_step(&h, &x).unwrap();
            assert!(s.h.sub(&h).max_abs() < 1e-9, "{}", variant.name());
            h = s.h;
        }
        assert!(h.sub(&h0).max_abs() < 1e-9);
    }
}

fn random_cell(variant: RnnVariant, rng: &mut Rng) -> RnnCell {
    let w = Matrix::from_fn(5, 5, |_, _| rng.uniform(-0.6, 0.6));
    let u = Matrix::from_fn(5, 2, |_, _| rng.uniform(-1.0, 1.0));
    let b = Vector::from_fn(5, |_| rng.uniform(-0.3, 0.3));
    RnnCell::single(variant, w, u, b).unwrap()
}

#[test]
fn unit_time_constant_is_the_vanilla_cell_bit_for_bit() {
    for seed in 0..5 {
        let mut rng = Rng::seed_from_u64(seed);
        let vanilla = random_cell(RnnVariant::Vanilla, &mut rng);
        let mut rng = Rng::seed_from_u64(seed);
        let leaky = random_cell(RnnVariant::Leaky(LeakyConfig::uniform(5, 1.0).unwrap()), &mut rng);
        let xs = inputs(&mut rng, 2);
        let a = vanilla.run(&xs).unwrap().states();
        let b = leaky.run(&xs).unwrap().states();
        for (x, y) in a.iter().zip(&b) {
            assert!(x.as_slice().iter().zip(y.as_slice()).all(|(p, q)| p.to_bits() == q.to_bits()));
        }
    }
}

#[test]
fn huge_time_constant_copies_the_state() {
    let mut rng = Rng::seed_from_u64(9);
    let cell = random_cell(RnnVariant::Leaky(LeakyConfig::uniform(5, 1e9).unwrap()), &mut rng);
    let xs = inputs(&mut rng, 2);
    let h0 = Vector::from([0.9, -0.5, 0.2, -0.7, 0.4]);
    let mut history = vec![h0.clone()];
    for x in &xs {
        let s = cell.forward_step(&history, x).unwrap();
        assert!(s.h.sub(history.last().unwrap()).max_abs() < 1e-8);
        history.push(s.h);
    }
    assert!(history.last().unwrap().sub(&h0).max_abs() < 1e-6);
}
