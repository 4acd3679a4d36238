use super::*;
use crate::gradcheck::gradcheck;
use crate::linalg::tanh;
use crate::lstm::LstmParams;
use crate::model::Readout;
use crate::rnn::{bptt, RnnParams};

fn seq(rng: &mut Rng, t: usize, d: usize) -> Vec<Vector> {
    (0..t).map(|_| Vector::from_fn(d, |_| rng.uniform(-1.0, 1.0))).collect()
}

fn targets(rng: &mut Rng, t: usize, q: usize) -> Vec<Target> {
    (0..t)
        .map(|_| Target::Value(Vector::from_fn(q, |_| rng.uniform(-1.0, 1.0))))
        .collect()
}

fn rnn_net(rng: &mut Rng) -> BidirParams {
    BidirParams::rnn(RnnVariant::Vanilla, &[1], (3, 2, 2), &InitScheme::Uniform, rng).unwrap()
}

fn rnn_cell(c: &DirCell) -> &RnnCell {
    match c {
        DirCell::Rnn(c) => c,
        DirCell::Lstm(_) => panic!("expected an rnn cell"),
    }
}

#[test]
fn single_step_uses_zero_boundaries() {
    let mut rng = Rng::seed_from_u64(1);
    let net = rnn_net(&mut rng);
    let x = Vector::from([0.4, -0.7]);
    let y = net.predict(std::slice::from_ref(&x)).unwrap();
    let hf = rnn_cell(&net.encoder.fwd).u().mul_vec(&x).add(rnn_cell(&net.encoder.fwd).b_i()).map(tanh);
    let hb = rnn_cell(&net.encoder.bwd).u().mul_vec(&x).add(rnn_cell(&net.encoder.bwd).b_i()).map(tanh);
    let expected = net.fusion.v_fwd.mul_vec(&hf).add(&net.fusion.v_bwd.mul_vec(&hb)).add(&net.fusion.b_y);
    assert!(y[0].sub(&expected).max_abs() < 1e-15);
}

#[test]
fn palindrome_with_shared_weights_mirrors_states() {
    let mut rng = Rng::seed_from_u64(2);
    for kind in ["rnn", "lstm"] {
        let mut net = match kind {
            "rnn" => rnn_net(&mut rng),
            _ => BidirParams::lstm(LstmVariant::VANILLA, (3, 2, 2), &mut rng).unwrap(),
        };
        net.encoder.bwd = net.encoder.fwd.clone();
        let half = seq(&mut rng, 4, 2);
        let xs: Vec<Vector> = half.iter().chain(half.iter().rev()).cloned().collect();
        let tr = net.forward(&xs).unwrap().encoder;
        let (f, b) = (tr.forward_states(), tr.backward_states());
        let n = xs.len();
        for t in 0..n {
            assert_eq!(b[t], f[n - 1 - t], "{kind} t={t}");
        }
    }
}

#[test]
fn silent_backward_readout_is_unidirectional() {
    let mut rng = Rng::seed_from_u64(3);
    let mut net = rnn_net(&mut rng);
    net.fusion.v_bwd = Matrix::zeros(2, 3);
    let uni = RnnParams::new(
        rnn_cell(&net.encoder.fwd).clone(),
        Readout::new(net.fusion.v_fwd.clone(), net.fusion.b_y.clone()).unwrap(),
    )
    .unwrap();
    let xs = seq(&mut rng, 6, 2);
    assert_eq!(net.predict(&xs).unwrap(), uni.predict(&xs).unwrap());

    let ts = targets(&mut rng, 6, 2);
    let (_, g) = bidir_bptt(&net, &net.forward(&xs).unwrap(), &ts, LossKind::SquaredError).unwrap();
    let (_, gu) = bptt(&uni, &uni.forward(&xs).unwrap(), &ts, LossKind::SquaredError).unwrap();
    assert_eq!(rnn_cell(&g.encoder.fwd), &gu.cell);
    assert_eq!(g.fusion.v_fwd, gu.readout.v);
    assert_eq!(g.fusion.b_y, gu.readout.b_y);
    assert_eq!(g.encoder.bwd.prefixed_blocks("").iter().map(|b| b.values.iter().map(|v| v.abs()).sum::<f64>()).sum::<f64>(), 0.0);
}

#[test]
fn time_reversal_swaps_directions() {
    let mut rng = Rng::seed_from_u64(4);
    let net = BidirParams::lstm(LstmVariant::ORIGINAL, (3, 2, 1), &mut rng).unwrap();
    let swapped = BidirEncoder::new(net.encoder.bwd.clone(), net.encoder.fwd.clone()).unwrap();
    let xs = seq(&mut rng, 7, 2);
    let rev: Vec<Vector> = xs.iter().rev().cloned().collect();
    let a = net.encoder.run(&xs).unwrap();
    let b = swapped.run(&rev).unwrap();
    let n = xs.len();
    let (af, ab) = (a.forward_states(), a.backward_states());
    let (bf, bb) = (b.forward_states(), b.backward_states());
    for t in 0..n {
        assert_eq!(af[t], bb[n - 1 - t]);
        assert_eq!(ab[t], bf[n - 1 - t]);
    }
}

#[test]
fn gradients_match_finite_differences() {
    for seed in 0..3 {
        let mut rng = Rng::seed_from_u64(50 + seed);
        let nets = [
            rnn_net(&mut rng),
            BidirParams::lstm(LstmVariant::VANILLA, (3, 2, 2), &mut rng).unwrap(),
        ];
        for net in nets {
            let xs = seq(&mut rng, 4, 2);
            let ts = targets(&mut rng, 4, 2);
            let r = gradcheck(&net, &xs, &ts, LossKind::SquaredError, 1e-5).unwrap();
            assert!(r.max_rel_error < 1e-6, "{}: {:?}", net.encoder.kind(), r.worst_entry());
            assert!(r.reference_gap < 1e-13);
        }
    }
}

#[test]
fn zero_loss_gives_zero_gradients() {
    let mut rng = Rng::seed_from_u64(5);
    let net = BidirParams::lstm(LstmVariant::FULL_GATE_RECURRENCE, (3, 2, 2), &mut rng).unwrap();
    let xs = seq(&mut rng, 5, 2);
    let ts: Vec<Target> = net.predict(&xs).unwrap().into_iter().map(Target::Value).collect();
    assert_eq!(net.evaluate(&xs, &ts, LossKind::SquaredError).unwrap().grads.norm(), 0.0);
}

#[test]
fn directions_must_agree() {
    let mut rng = Rng::seed_from_u64(6);
    let a = DirCell::Lstm(LstmCell::init(LstmVariant::VANILLA, 3, 2, &mut rng));
    let b = DirCell::Lstm(LstmCell::init(LstmVariant::ORIGINAL, 3, 2, &mut rng));
    let c = DirCell::Lstm(LstmCell::init(LstmVariant::VANILLA, 4, 2, &mut rng));
    assert!(BidirEncoder::new(a.clone(), b).is_err());
    assert!(BidirEncoder::new(a, c).is_err());
}

#[test]
fn block_names_are_prefixed() {
    let mut rng = Rng::seed_from_u64(7);
    let names = rnn_net(&mut rng).block_names();
    assert_eq!(names, ["fwd/W", "fwd/U", "fwd/b_i", "bwd/W", "bwd/U", "bwd/b_i", "V_fwd", "V_bwd", "b_y"]);
}

#[test]
fn bundle_round_trip() {
    let mut rng = Rng::seed_from_u64(8);
    let nets = [
        BidirParams::rnn(
            RnnVariant::Leaky(crate::rnn::LeakyConfig::uniform(3, 4.0).unwrap()),
            &[1, 2],
            (3, 2, 2),
            &InitScheme::Uniform,
            &mut rng,
        )
        .unwrap(),
        BidirParams::lstm(LstmVariant::VANILLA, (3, 2, 2), &mut rng).unwrap(),
    ];
    for net in nets {
        let text = net.to_bundle().to_text();
        assert!(text.starts_with(&format!("kind={}", net.encoder.kind())));
        assert_eq!(BidirParams::from_bundle(&Bundle::parse(&text).unwrap()).unwrap(), net);
    }
}

#[test]
fn single_layer_embedding_is_the_concatenated_state() {
    let mut rng = Rng::seed_from_u64(9);
    let mut stack = ElmoStack::init(LstmVariant::VANILLA, 1, 3, 2, &mut rng).unwrap();
    stack.gamma = 1.0;
    stack.s = vec![1.0];
    let xs = seq(&mut rng, 6, 2);
    let tr = stack.layers()[0].run(&xs).unwrap();
    let expected: Vec<Vector> = tr
        .forward_states()
        .iter()
        .zip(tr.backward_states())
        .map(|(f, b)| f.concat(&b))
        .collect();
    assert_eq!(stack.embed(&xs).unwrap(), expected);

    // Identity readout: the layer's states are exactly a unidirectional LSTM
    // with output equal to its hidden state.
    let DirCell::Lstm(cell) = &stack.layers()[0].fwd else { unreachable!() };
    let uni = LstmParams::new(cell.clone(), None).unwrap();
    assert_eq!(uni.predict(&xs).unwrap(), tr.forward_states());
}

#[test]
fn embedding_is_linear_in_weights() {
    let mut rng = Rng::seed_from_u64(10);
    let stack = ElmoStack::init(LstmVariant::VANILLA, 3, 2, 2, &mut rng).unwrap();
    let xs = seq(&mut rng, 5, 2);
    let states = stack.layer_states(&xs).unwrap();
    let (s1, s2) = (vec![0.3, -1.2, 0.7], vec![1.5, 0.25, -0.5]);
    let (alpha, beta, gamma) = (0.6, -1.7, 1.3);
    let mixed: Vec<f64> = s1.iter().zip(&s2).map(|(a, b)| alpha * a + beta * b).collect();
    let lhs = ElmoStack::combine(&states, gamma, &mixed).unwrap();
    let e1 = ElmoStack::combine(&states, gamma, &s1).unwrap();
    let e2 = ElmoStack::combine(&states, gamma, &s2).unwrap();
    for t in 0..xs.len() {
        let rhs = e1[t].scale(alpha).add(&e2[t].scale(beta));
        assert!(lhs[t].sub(&rhs).max_abs() < 1e-14);
    }
    let doubled = ElmoStack::combine(&states, 2.0 * gamma, &s1).unwrap();
    for t in 0..xs.len() {
        assert_eq!(doubled[t], e1[t].scale(2.0));
    }
    let first = ElmoStack::combine(&states, 1.0, &[1.0, 0.0, 0.0]).unwrap();
    assert_eq!(first, states[0]);
}

#[test]
fn stack_widths_must_chain() {
    let mut rng = Rng::seed_from_u64(11);
    let good = ElmoStack::init(LstmVariant::VANILLA, 2, 3, 2, &mut rng).unwrap();
    assert_eq!(good.layers()[1].input_width(), 6);
    assert_eq!(good.embed(&seq(&mut rng, 3, 2)).unwrap()[0].len(), 6);
    let lstm = |d: usize, rng: &mut Rng| DirCell::Lstm(LstmCell::init(LstmVariant::VANILLA, 3, d, rng));
    let l1 = BidirEncoder::new(lstm(2, &mut rng), lstm(2, &mut rng)).unwrap();
    let bad = BidirEncoder::new(lstm(3, &mut rng), lstm(3, &mut rng)).unwrap();
    assert!(ElmoStack::new(vec![l1.clone(), bad], 1.0, vec![0.5, 0.5]).is_err());
    assert!(ElmoStack::new(vec![l1.clone()], 1.0, vec![0.5, 0.5]).is_err());
    let rnn = BidirEncoder::new(
        DirCell::Rnn(RnnCell::zeros(RnnVariant::Vanilla, &[1], 3, 2).unwrap()),
        DirCell::Rnn(RnnCell::zeros(RnnVariant::Vanilla, &[1], 3, 2).unwrap()),
    )
    .unwrap();
    assert!(ElmoStack::new(vec![rnn], 1.0, vec![1.0]).is_err());
    assert!(ElmoStack::new(vec![], 1.0, vec![]).is_err());
}

#[test]
fn stack_bundle_round_trip() {
    let mut rng = Rng::seed_from_u64(12);
    let mut stack = ElmoStack::init(LstmVariant::ORIGINAL, 2, 2, 3, &mut rng).unwrap();
    stack.gamma = 0.75;
    stack.s = vec![0.2, 0.8];
    let text = stack.to_bundle().to_text();
    assert_eq!(ElmoStack::from_bundle(&Bundle::parse(&text).unwrap()).unwrap(), stack);
}
