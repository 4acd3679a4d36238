//! Acceptance suite: one PASS/FAIL line per criterion. Exits nonzero if any
//! criterion fails.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use sha2::{Digest, Sha256};
use tempfile::TempDir;

use rnnlab::bidir::{BidirEncoder, DirCell, ElmoStack};
use rnnlab::esn::{train_readout, Reservoir, ReservoirConfig};
use rnnlab::gru::{GruCell, GruGates, GruVariant};
use rnnlab::harness::{compare, echo, family_gradcheck, gradient_flow_probe, scaled_cell, Family};
use rnnlab::linalg::{Matrix, Rng, Vector};
use rnnlab::loss::loss_and_output_grads;
use rnnlab::lstm::{LstmCell, LstmState, LstmVariant};
use rnnlab::model::Model;
use rnnlab::rnn::{InitScheme, LeakyConfig, RnnCell, RnnParams, RnnVariant};
use rnnlab::{LossKind, Target};

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: String) -> Outcome {
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn random_matrix(rng: &mut Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.uniform(-scale, scale))
}

fn random_seq(rng: &mut Rng, len: usize, d: usize) -> Vec<Vector> {
    (0..len).map(|_| Vector::from_fn(d, |_| rng.uniform(-1.0, 1.0))).collect()
}

fn gradient_oracle() -> Outcome {
    const SEEDS: u64 = 20;
    let start = Instant::now();
    let mut worst = (0.0, String::new());
    let mut failures = Vec::new();
    for family in Family::ALL {
        for seed in 0..SEEDS {
            let r = family_gradcheck(family, seed, 1e-5).map_err(|e| format!("{family} seed {seed}: {e}"))?;
            if !(r.max_rel_error < 1e-6) {
                failures.push(format!("{family}/{seed}"));
            }
            if r.max_rel_error > worst.0 {
                let at = r.worst_entry().map_or_else(String::new, |e| e.name());
                worst = (r.max_rel_error, format!("{family} seed {seed} {at}"));
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(
        failures.is_empty() && secs < 60.0,
        format!(
            "{} families x {SEEDS} seeds, max rel error {:.2e} ({}), {} failing, {secs:.1} s (limit 60 s)",
            Family::ALL.len(),
            worst.0,
            worst.1,
            failures.len()
        ),
    )
}

fn vanishing_and_explosion() -> Outcome {
    let start = Instant::now();
    let mut rows = Vec::new();
    let mut ok = true;
    for lambda in [0.5, 0.9, 1.0, 1.1] {
        let mut worst: f64 = 0.0;
        for seed in 0..5 {
            let r = gradient_flow_probe(&scaled_cell(8, lambda, seed).map_err(|e| e.to_string())?, 200)
                .map_err(|e| e.to_string())?;
            worst = worst.max((r.rate - r.spectral_radius).abs() / r.spectral_radius);
        }
        ok &= worst < 0.05;
        rows.push(format!("λ={lambda}: {:.2}%", 100.0 * worst));
    }
    let diag = RnnCell::single(
        RnnVariant::Vanilla,
        Matrix::identity(4).scale(0.5),
        Matrix::zeros(4, 1),
        Vector::zeros(4),
    )
    .map_err(|e| e.to_string())?;
    let r = gradient_flow_probe(&diag, 40).map_err(|e| e.to_string())?;
    let diag_err = (r.rate - 0.5).abs();
    let secs = start.elapsed().as_secs_f64();
    ensure(
        ok && diag_err < 1e-6 && secs < 5.0,
        format!(
            "worst |r − ρ|/ρ {} (limit 5%), 0.5·I rate error {diag_err:.1e} (limit 1e-6), {secs:.2} s (limit 5 s)",
            rows.join(", ")
        ),
    )
}

fn degenerate_gates() -> Outcome {
    let mut rng = Rng::seed_from_u64(31);
    let steps = 100;

    let mut cell = LstmCell::init(LstmVariant::VANILLA, 4, 3, &mut rng);
    cell.forget.as_mut().expect("vanilla has a forget gate").b = Vector::filled(4, 60.0);
    cell.input.b = Vector::filled(4, -60.0);
    let mut state = LstmState::zeros(4);
    state.c = Vector::from([0.7, -0.4, 0.05, -1.3]);
    let mut lstm_gap: f64 = 0.0;
    for x in random_seq(&mut rng, steps, 3) {
        let s = cell.forward_step(&state, &x).map_err(|e| e.to_string())?;
        lstm_gap = lstm_gap.max(s.c.sub(&state.c).max_abs());
        state = LstmState {
            h: s.h,
            c: s.c,
            gates: [s.i, s.f, s.o],
        };
    }

    let mut gru = GruCell::init(GruVariant::FullyGated, 4, 2, &mut rng);
    if let GruGates::FullyGated { update, .. } = &mut gru.gates {
        update.b = Vector::filled(4, -60.0);
    }
    let mut h = Vector::from([0.3, -0.8, 0.6, 0.1]);
    let mut gru_gap: f64 = 0.0;
    for x in random_seq(&mut rng, steps, 2) {
        let s = gru.forward_step(&h, &x).map_err(|e| e.to_string())?;
        gru_gap = gru_gap.max(s.h.sub(&h).max_abs());
        h = s.h;
    }

    let w = random_matrix(&mut rng, 5, 5, 0.6);
    let u = random_matrix(&mut rng, 5, 2, 1.0);
    let b = Vector::from_fn(5, |_| rng.uniform(-0.3, 0.3));
    let build = |v: RnnVariant| RnnCell::single(v, w.clone(), u.clone(), b.clone()).map_err(|e| e.to_string());
    let xs = random_seq(&mut rng, steps, 2);
    let vanilla = build(RnnVariant::Vanilla)?.run(&xs).map_err(|e| e.to_string())?.states();
    let unit = build(RnnVariant::Leaky(LeakyConfig::uniform(5, 1.0).map_err(|e| e.to_string())?))?
        .run(&xs)
        .map_err(|e| e.to_string())?
        .states();
    let bitwise = vanilla
        .iter()
        .zip(&unit)
        .all(|(a, b)| a.as_slice().iter().zip(b.as_slice()).all(|(x, y)| x.to_bits() == y.to_bits()));
    let frozen = build(RnnVariant::Leaky(LeakyConfig::uniform(5, 1e9).map_err(|e| e.to_string())?))?;
    let mut history = vec![Vector::from([0.9, -0.5, 0.2, -0.7, 0.4])];
    let mut leaky_gap: f64 = 0.0;
    for x in &xs {
        let s = frozen.forward_step(&history, x).map_err(|e| e.to_string())?;
        leaky_gap = leaky_gap.max(s.h.sub(history.last().expect("non-empty")).max_abs());
        history.push(s.h);
    }

    ensure(
        lstm_gap < 1e-9 && gru_gap < 1e-9 && bitwise && leaky_gap < 1e-8,
        format!(
            "LSTM |c_t − c_(t−1)| {lstm_gap:.1e}, GRU |h_t − h_(t−1)| {gru_gap:.1e} (limits 1e-9), \
             τ=1 bitwise {bitwise}, τ=1e9 step change {leaky_gap:.1e} (limit 1e-8), {steps} steps"
        ),
    )
}

fn esn_correctness() -> Outcome {
    let mut worst: f64 = 0.0;
    for seed in 0..10 {
        for p in 1..=5usize {
            let mut rng = Rng::seed_from_u64(seed * 10 + p as u64);
            let (n, q) = (40, 2);
            let states = random_matrix(&mut rng, n, p, 1.0);
            let targets = random_matrix(&mut rng, n, q, 1.0);
            let ridge = 1e-6;
            let w = train_readout(&states, &targets, ridge).map_err(|e| e.to_string())?;
            let z = DMatrix::from_fn(n, p + 1, |i, j| if j < p { states[(i, j)] } else { 1.0 });
            let y = DMatrix::from_fn(n, q, |i, j| targets[(i, j)]);
            let lhs = z.transpose() * &z + DMatrix::identity(p + 1, p + 1) * ridge;
            let oracle = lhs.lu().solve(&(z.transpose() * y)).ok_or("oracle system is singular")?.transpose();
            for i in 0..q {
                for j in 0..=p {
                    worst = worst.max((w[(i, j)] - oracle[(i, j)]).abs() / oracle[(i, j)].abs().max(1.0));
                }
            }
        }
    }

    let mut res = Reservoir::build(ReservoirConfig::new(50, 1, 1).lambda(0.9), 3).map_err(|e| e.to_string())?;
    let fingerprint = res.fingerprint();
    let mut rng = Rng::seed_from_u64(4);
    let xs = random_seq(&mut rng, 200, 1);
    let ys: Vec<Vector> = xs.iter().map(|x| x.scale(0.5)).collect();
    res.fit(&xs, &ys, 20, 1e-8).map_err(|e| e.to_string())?;
    let untouched = res.fingerprint() == fingerprint;
    let h0 = Vector::from_fn(50, |_| rng.uniform(-1.0, 1.0));
    let a = res.run(&xs).map_err(|e| e.to_string())?;
    let b = res.run_from(&h0, &xs).map_err(|e| e.to_string())?;
    let gap = Vector::from(a.row(199)).sub(&Vector::from(b.row(199))).norm();

    ensure(
        worst < 1e-9 && untouched && gap < 1e-6,
        format!(
            "readout vs normal equations {worst:.1e} (limit 1e-9, p ≤ 5), reservoir hash unchanged {untouched}, \
             washout gap at t=200 {gap:.1e} (limit 1e-6, λ=0.9)"
        ),
    )
}

fn kronecker_form() -> Outcome {
    let mut worst: f64 = 0.0;
    for p in 1..=3 {
        for seed in 0..10 {
            let mut rng = Rng::seed_from_u64(500 + 10 * p as u64 + seed);
            let (d, q, len) = (2, 2, 6);
            let m = RnnParams::init(RnnVariant::Vanilla, &[1], (p, d, q), &InitScheme::Uniform, &mut rng)
                .map_err(|e| e.to_string())?;
            let xs = random_seq(&mut rng, len, d);
            let ts: Vec<Target> = random_seq(&mut rng, len, q).into_iter().map(Target::Value).collect();
            let tr = m.forward(&xs).map_err(|e| e.to_string())?;
            let h = tr.cell.states();
            let (_, dy) = loss_and_output_grads(&tr.outputs, &ts, LossKind::SquaredError).map_err(|e| e.to_string())?;
            let w = m.cell.w(1).ok_or("no delay-1 weight")?;
            let v = &m.readout.v;

            let mut e = vec![Vector::zeros(p); len];
            for t in (0..len).rev() {
                let mut delta = Vector::from_fn(p, |j| (0..q).map(|k| v[(k, j)] * dy[t][k]).sum());
                if t + 1 < len {
                    for j in 0..p {
                        delta[j] += (0..p).map(|i| w[(i, j)] * e[t + 1][i]).sum::<f64>();
                    }
                }
                e[t] = Vector::from_fn(p, |j| delta[j] * (1.0 - h[t][j] * h[t][j]));
            }
            // vec(dW) = Σ_t (h_(t−1)ᵀ ⊗ I)ᵀ e_t with the p × p² factor materialized.
            let mut vec_dw = vec![0.0; p * p];
            for t in 0..len {
                let prev = if t == 0 { Vector::zeros(p) } else { h[t - 1].clone() };
                let kron = Matrix::from_fn(p, p * p, |i, c| if c % p == i { prev[c / p] } else { 0.0 });
                let contrib = kron.tr_mul_vec(&e[t]);
                for (slot, c) in vec_dw.iter_mut().zip(contrib.as_slice()) {
                    *slot += c;
                }
            }
            let g = m.evaluate(&xs, &ts, LossKind::SquaredError).map_err(|e| e.to_string())?.grads;
            let dw = g.cell.w(1).ok_or("no delay-1 gradient")?;
            for i in 0..p {
                for j in 0..p {
                    worst = worst.max((dw[(i, j)] - vec_dw[j * p + i]).abs());
                }
            }
        }
    }
    ensure(
        worst < 1e-12,
        format!("max |dW_outer − dW_kron| {worst:.1e} over p ∈ {{1,2,3}} x 10 seeds (limit 1e-12)"),
    )
}

fn capability_ordering() -> Outcome {
    let start = Instant::now();
    let mut good = 0;
    let mut lines = Vec::new();
    for seed in 1..=5 {
        let contenders = echo::contenders(seed, echo::EPOCHS).map_err(|e| e.to_string())?;
        let rows = compare(&echo::task(), &contenders).map_err(|e| format!("seed {seed}: {e}"))?;
        let mse = |f: Family| rows.iter().find(|r| r.family == f).map(|r| r.report.test_metric).unwrap_or(f64::NAN);
        let (lstm, leaky, vanilla) = (mse(Family::LstmVanilla), mse(Family::RnnLeaky), mse(Family::RnnVanilla));
        let pass = lstm <= 0.5 * leaky && leaky <= 0.5 * vanilla;
        good += usize::from(pass);
        lines.push(format!(
            "seed {seed}: lstm {lstm:.3e} leaky {leaky:.3e} vanilla {vanilla:.3e} [{}]",
            if pass { "ok" } else { "x" }
        ));
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(
        good >= 4 && secs < 600.0,
        format!(
            "{good}/5 seeds with lstm ≤ 0.5·leaky ≤ 0.25·vanilla (need 4), {secs:.0} s (limit 600 s); {}",
            lines.join("; ")
        ),
    )
}

fn elmo_checks() -> Outcome {
    let mut rng = Rng::seed_from_u64(41);
    let mut single = ElmoStack::init(LstmVariant::VANILLA, 1, 3, 2, &mut rng).map_err(|e| e.to_string())?;
    single.gamma = 1.0;
    single.s = vec![1.0];
    let xs = random_seq(&mut rng, 7, 2);
    let layer = &single.layers()[0];
    let (DirCell::Lstm(fwd), DirCell::Lstm(bwd)) = (&layer.fwd, &layer.bwd) else {
        return Err("stack layer is not an LSTM pair".into());
    };
    let forward = fwd.run(&xs).map_err(|e| e.to_string())?.states();
    let reversed: Vec<Vector> = xs.iter().rev().cloned().collect();
    let mut backward = bwd.run(&reversed).map_err(|e| e.to_string())?.states();
    backward.reverse();
    let expected: Vec<Vector> = forward.iter().zip(&backward).map(|(f, b)| f.concat(b)).collect();
    let identity = single.embed(&xs).map_err(|e| e.to_string())? == expected;

    let stack = ElmoStack::init(LstmVariant::VANILLA, 3, 3, 2, &mut rng).map_err(|e| e.to_string())?;
    let states = stack.layer_states(&xs).map_err(|e| e.to_string())?;
    let (s1, s2) = (vec![0.4, -1.1, 0.9], vec![-0.3, 0.6, 1.7]);
    let (a, b, gamma) = (0.7, -1.9, 1.4);
    let mixed: Vec<f64> = s1.iter().zip(&s2).map(|(x, y)| a * x + b * y).collect();
    let combine = |g: f64, s: &[f64]| ElmoStack::combine(&states, g, s).map_err(|e| e.to_string());
    let (lhs, e1, e2) = (combine(gamma, &mixed)?, combine(gamma, &s1)?, combine(gamma, &s2)?);
    let mut lin: f64 = 0.0;
    for t in 0..xs.len() {
        lin = lin.max(lhs[t].sub(&e1[t].scale(a).add(&e2[t].scale(b))).max_abs());
    }
    let gamma_exact = combine(2.0 * gamma, &s1)? == e1.iter().map(|v| v.scale(2.0)).collect::<Vec<_>>();

    let lstm = |d: usize, rng: &mut Rng| DirCell::Lstm(LstmCell::init(LstmVariant::VANILLA, 3, d, rng));
    let first = BidirEncoder::new(lstm(2, &mut rng), lstm(2, &mut rng)).map_err(|e| e.to_string())?;
    let wrong = BidirEncoder::new(lstm(3, &mut rng), lstm(3, &mut rng)).map_err(|e| e.to_string())?;
    let right = BidirEncoder::new(lstm(6, &mut rng), lstm(6, &mut rng)).map_err(|e| e.to_string())?;
    let rejects = ElmoStack::new(vec![first.clone(), wrong], 1.0, vec![0.5, 0.5]).is_err();
    let accepts = ElmoStack::new(vec![first, right], 1.0, vec![0.5, 0.5]).is_ok();
    let width = stack.embed(&xs).map_err(|e| e.to_string())?[0].len() == 6;

    ensure(
        identity && lin < 1e-14 && gamma_exact && rejects && accepts && width,
        format!(
            "L=1 exact {identity}, linearity residual {lin:.1e} (limit 1e-14), γ scaling exact {gamma_exact}, \
             bad chain rejected {rejects}, 2p chain accepted {accepts}, embedding width 2p {width}"
        ),
    )
}

fn digest_csvs(dir: &Path) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(dir).expect("output directory exists") {
        let path = entry.expect("readable entry").path();
        if path.extension().is_some_and(|e| e == "csv") {
            let bytes = fs::read(&path).expect("readable file");
            let name = path.file_name().expect("file name").to_string_lossy().into_owned();
            out.insert(name, format!("{:x}", Sha256::digest(&bytes)));
        }
    }
    out
}

fn determinism() -> Outcome {
    let tmp = TempDir::new().map_err(|e| e.to_string())?;
    let configs = [
        ("train", "family = lstm-vanilla\nhidden = 4\nepochs = 5\nbatch = 8\nfresh = true\noptimizer = adam\n"),
        ("gradcheck", "seeds = 2\n"),
        ("gradflow", "hidden = 6\n"),
        ("esn", "hidden = 40\ntrain_size = 4\ntest_size = 2\n"),
        ("compare", "epochs = 3\nlen = 30\ntask = delayed-echo:5\nbudget = 300\n"),
    ];
    let mut checked = 0;
    let mut mismatched = Vec::new();
    for (command, text) in configs {
        let cfg = tmp.path().join(format!("{command}.cfg"));
        fs::write(&cfg, text).map_err(|e| e.to_string())?;
        let mut digests = Vec::new();
        for (run, jobs) in [("a", "1"), ("b", "3")] {
            let out = tmp.path().join(format!("{command}-{run}"));
            let status = Command::new(env!("CARGO_BIN_EXE_rnnlab"))
                .args([command, "--config"])
                .arg(&cfg)
                .arg("--out")
                .arg(&out)
                .args(["--seed", "2024", "--jobs", jobs])
                .status()
                .map_err(|e| e.to_string())?;
            if !status.success() {
                return Err(format!("{command} exited with {status}"));
            }
            digests.push(digest_csvs(&out));
        }
        if digests[0].is_empty() || digests[0] != digests[1] {
            mismatched.push(command);
        }
        checked += digests[0].len();
    }
    ensure(
        mismatched.is_empty(),
        format!(
            "{checked} CSVs across 5 commands hash identically (SHA-256) over two runs with 1 and 3 workers; \
             mismatched: {mismatched:?}"
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("gradient oracle", gradient_oracle),
        ("vanishing/explosion rate", vanishing_and_explosion),
        ("degenerate gates", degenerate_gates),
        ("echo state network", esn_correctness),
        ("kronecker equivalence", kronecker_form),
        ("capability ordering", capability_ordering),
        ("elmo combination", elmo_checks),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = check();
        let took = Duration::from_secs_f64(start.elapsed().as_secs_f64());
        let (tag, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("{tag} {} {name}: {detail} [{:.1?}]", i + 1, took);
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
