use rnnlab::harness::{gradient_flow_probe, scaled_cell};
use rnnlab::linalg::{Matrix, Vector};
use rnnlab::rnn::{RnnCell, RnnVariant};

const SWEEP: [f64; 4] = [0.5, 0.9, 1.0, 1.1];

#[test]
fn fitted_rate_tracks_the_spectral_radius() {
    for seed in 0..10 {
        for lambda in SWEEP {
            let cell = scaled_cell(8, lambda, seed).unwrap();
            let r = gradient_flow_probe(&cell, 200).unwrap();
            assert!((r.spectral_radius - lambda).abs() < 1e-9 * lambda);
            let rel = (r.rate - r.spectral_radius).abs() / r.spectral_radius;
            assert!(rel < 0.05, "seed {seed} λ {lambda}: rate {} radius {}", r.rate, r.spectral_radius);
        }
    }
}

#[test]
fn diagonal_sweep_is_exact() {
    for lambda in SWEEP {
        let w = Matrix::diag(&[lambda, 0.5 * lambda, -0.3 * lambda]);
        let cell = RnnCell::single(RnnVariant::Vanilla, w, Matrix::zeros(3, 1), Vector::zeros(3)).unwrap();
        let r = gradient_flow_probe(&cell, 100).unwrap();
        assert!((r.rate - lambda).abs() < 1e-6, "λ {lambda}: {}", r.rate);
    }
}

#[test]
fn norms_are_nonnegative_and_end_at_the_seed() {
    let r = gradient_flow_probe(&scaled_cell(5, 0.9, 1).unwrap(), 50).unwrap();
    assert!(r.norms.iter().all(|&n| n >= 0.0));
    assert!((r.norms[49] - 5f64.sqrt()).abs() < 1e-15);
    assert!(r.residual.is_finite());
}
