use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use rnnlab::esn::{default_washout, mean_squared_error, Reservoir, ReservoirConfig, DEFAULT_RIDGE};
use rnnlab::harness::report::{gradcheck_csv, gradflow_csv, learning_curve_csv, table_csv};
use rnnlab::harness::{
    compare, echo, gradient_flow_probe, scaled_cell, train, CheckInstance, Contender, Family, ModelSpec, Optimizer,
    Sample, TauSpec, Task, TrainConfig, TrainReport,
};
use rnnlab::linalg::{derive_seed, fmt_f64};
use rnnlab::rnn::InitScheme;
use rnnlab::{Rng, Target, Vector};

use crate::config::RunConfig;
use crate::CliError;

fn write(dir: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|source| CliError::Io { path, source })
}

/// Resolves `out`, rejects leftover keys, creates the directory and writes
/// the resolved configuration into it.
fn open_output(cfg: &mut RunConfig, command: &str) -> Result<PathBuf, CliError> {
    let out: String = cfg.get("out", "rnnlab-out".to_string())?;
    cfg.finish(command)?;
    let dir = PathBuf::from(out);
    fs::create_dir_all(&dir).map_err(|source| CliError::Io {
        path: dir.clone(),
        source,
    })?;
    write(&dir, "resolved_config.txt", &cfg.echo())?;
    Ok(dir)
}

fn families(cfg: &mut RunConfig, default: &[&str]) -> Result<Vec<Family>, CliError> {
    let names = cfg.get_list("family", default.iter().map(|s| s.to_string()).collect())?;
    let mut picked = Vec::new();
    for name in names {
        for f in Family::select(&name)? {
            if !picked.contains(&f) {
                picked.push(f);
            }
        }
    }
    Ok(picked)
}

fn train_settings(cfg: &mut RunConfig, defaults: &TrainConfig) -> Result<TrainConfig, CliError> {
    Ok(TrainConfig {
        eta: cfg.get("eta", defaults.eta)?,
        epochs: cfg.get("epochs", defaults.epochs)?,
        len: cfg.get("len", defaults.len)?,
        train_size: cfg.get("train_size", defaults.train_size)?,
        test_size: cfg.get("test_size", defaults.test_size)?,
        batch: cfg.get("batch", defaults.batch)?,
        fresh: cfg.get("fresh", defaults.fresh)?,
        clip: cfg.get_opt("clip", defaults.clip)?,
        optimizer: cfg.get("optimizer", defaults.optimizer)?,
        seed: cfg.get("seed", defaults.seed)?,
    })
}

fn summary_csv(report: &TrainReport) -> Result<String, CliError> {
    let rows = vec![
        vec!["train".into(), fmt_f64(report.train_loss), fmt_f64(report.train_metric)],
        vec!["test".into(), fmt_f64(report.test_loss), fmt_f64(report.test_metric)],
    ];
    Ok(table_csv(&["split", "loss", "metric"], &rows)?)
}

/// Trains one model. Writes `curve.csv`, `summary.csv` and `model.txt`.
pub fn cmd_train(cfg: &mut RunConfig) -> Result<(), CliError> {
    let family: Family = cfg.get("family", Family::RnnVanilla)?;
    let task: Task = cfg.get("task", Task::DelayedEcho { gap: 5 })?;
    let hidden = cfg.get("hidden", 16usize)?;
    let init: InitScheme = cfg.get("init", InitScheme::Uniform)?;
    let tau: TauSpec = cfg.get("tau", TauSpec::LogUniform { lo: 1.0, hi: 10.0 })?;
    let tc = train_settings(cfg, &TrainConfig::default())?;
    if tc.epochs == 0 {
        return Err(CliError::Config("epochs must be at least 1".into()));
    }
    let dir = open_output(cfg, "train")?;

    let mut spec = ModelSpec::new(family, hidden, task.input_width(), task.output_width());
    spec.init = init;
    spec.tau = tau;
    let mut model = spec.build(&mut Rng::child(tc.seed, "model"))?;
    let report = train(&mut model, &task, &tc)?;
    write(&dir, "curve.csv", &learning_curve_csv(&report.curve)?)?;
    write(&dir, "summary.csv", &summary_csv(&report)?)?;
    write(&dir, "model.txt", &model.to_bundle().to_text())?;
    Ok(())
}

/// Finite-difference check of every selected family over many random
/// instances. Fails when any relative error reaches `threshold`.
pub fn cmd_gradcheck(cfg: &mut RunConfig) -> Result<(), CliError> {
    let picked = families(cfg, &["all"])?;
    let seeds: u64 = cfg.get("seeds", 20)?;
    let eps: f64 = cfg.get("epsilon", 1e-5)?;
    let threshold: f64 = cfg.get("threshold", 1e-6)?;
    let root: u64 = cfg.get("seed", 0)?;
    let dir = open_output(cfg, "gradcheck")?;

    let jobs: Vec<(Family, u64)> = picked
        .iter()
        .flat_map(|&f| (0..seeds).map(move |i| (f, derive_seed(root, &format!("instance/{i}")))))
        .collect();
    let reports = jobs
        .par_iter()
        .map(|&(f, seed)| CheckInstance::draw(f, seed).and_then(|inst| inst.check(eps)))
        .collect::<Result<Vec<_>, _>>()?;

    let labelled = jobs.iter().zip(&reports).map(|(&(f, s), r)| (f.name(), s, r));
    write(&dir, "gradcheck.csv", &gradcheck_csv(labelled)?)?;
    let rows: Vec<Vec<String>> = jobs
        .iter()
        .zip(&reports)
        .map(|(&(f, s), r)| {
            vec![
                f.name().to_string(),
                s.to_string(),
                fmt_f64(r.max_rel_error),
                r.worst_entry().map_or_else(String::new, |e| e.name()),
                fmt_f64(r.reference_gap),
            ]
        })
        .collect();
    write(
        &dir,
        "gradcheck_summary.csv",
        &table_csv(&["family", "seed", "max_rel_error", "worst_param", "reference_gap"], &rows)?,
    )?;

    let worst = jobs
        .iter()
        .zip(&reports)
        .max_by(|a, b| a.1.max_rel_error.total_cmp(&b.1.max_rel_error));
    match worst {
        Some((&(f, s), r)) if !(r.max_rel_error < threshold) => Err(CliError::Numerical(format!(
            "gradient check failed: {f} seed {s} {} has relative error {:e} (threshold {threshold:e})",
            r.worst_entry().map_or_else(String::new, |e| e.name()),
            r.max_rel_error
        ))),
        _ => Ok(()),
    }
}

/// Gradient-flow probes of vanilla cells scaled to each target spectral
/// radius. One `gradflow_<lambda>.csv` per point plus a summary.
pub fn cmd_gradflow(cfg: &mut RunConfig) -> Result<(), CliError> {
    let lambdas: Vec<f64> = cfg.get_list("lambdas", vec![0.5, 0.9, 1.0, 1.1])?;
    let hidden = cfg.get("hidden", 8usize)?;
    let len = cfg.get("len", 200usize)?;
    let tolerance: f64 = cfg.get("tolerance", 0.05)?;
    let seed: u64 = cfg.get("seed", 0)?;
    let dir = open_output(cfg, "gradflow")?;

    let reports = lambdas
        .par_iter()
        .map(|&lambda| gradient_flow_probe(&scaled_cell(hidden, lambda, seed)?, len))
        .collect::<Result<Vec<_>, _>>()?;
    let mut rows = Vec::new();
    let mut off = Vec::new();
    for (&lambda, r) in lambdas.iter().zip(&reports) {
        write(&dir, &format!("gradflow_{lambda}.csv"), &gradflow_csv(r)?)?;
        let rel = (r.rate - r.spectral_radius).abs() / r.spectral_radius;
        if !(rel <= tolerance) {
            off.push(format!("lambda {lambda}: rate {} vs radius {}", r.rate, r.spectral_radius));
        }
        rows.push(vec![
            lambda.to_string(),
            fmt_f64(r.spectral_radius),
            fmt_f64(r.rate),
            fmt_f64(rel),
            fmt_f64(r.residual),
            r.fit_range.0.to_string(),
            r.fit_range.1.to_string(),
            r.capped_at.map_or_else(String::new, |c| c.to_string()),
        ]);
    }
    write(
        &dir,
        "gradflow_summary.csv",
        &table_csv(
            &["lambda", "spectral_radius", "rate", "rel_error", "residual", "fit_start", "fit_end", "capped_at"],
            &rows,
        )?,
    )?;
    if off.is_empty() {
        Ok(())
    } else {
        Err(CliError::Numerical(format!(
            "fitted rate off by more than {tolerance}: {}",
            off.join("; ")
        )))
    }
}

fn value_targets(samples: &[Sample]) -> Result<Vec<(Vec<Vector>, Vec<Vector>)>, CliError> {
    samples
        .iter()
        .map(|s| {
            let ys = s
                .targets
                .iter()
                .map(|t| match t {
                    Target::Value(v) => Ok(v.clone()),
                    _ => Err(CliError::Config(
                        "the esn command needs a task with a value target at every step".into(),
                    )),
                })
                .collect::<Result<Vec<_>, _>>()?;
            Ok((s.inputs.clone(), ys))
        })
        .collect()
}

/// Reservoir with a ridge readout, scored against the constant predictor
/// that outputs the mean training target.
pub fn cmd_esn(cfg: &mut RunConfig) -> Result<(), CliError> {
    let task: Task = cfg.get("task", Task::Sine)?;
    let hidden = cfg.get("hidden", 100usize)?;
    let lambda: f64 = cfg.get("lambda", 0.9)?;
    let sparsity: f64 = cfg.get("sparsity", 0.1)?;
    let input_scale: f64 = cfg.get("input_scale", 1.0)?;
    let ridge: f64 = cfg.get("ridge", DEFAULT_RIDGE)?;
    let len = cfg.get("len", 200usize)?;
    let washout = cfg.get("washout", default_washout(len))?;
    let train_size = cfg.get("train_size", 20usize)?;
    let test_size = cfg.get("test_size", 10usize)?;
    let seed: u64 = cfg.get("seed", 0)?;
    let dir = open_output(cfg, "esn")?;

    let config = ReservoirConfig::new(hidden, task.input_width(), task.output_width())
        .sparsity(sparsity)
        .lambda(lambda)
        .input_scale(input_scale);
    let mut res = Reservoir::build(config, derive_seed(seed, "reservoir"))?;
    let train_set = value_targets(&task.dataset(len, train_size, seed, "train")?)?;
    let test_set = value_targets(&task.dataset(len, test_size, seed, "test")?)?;
    if washout >= len {
        return Err(CliError::Config(format!("washout {washout} must be below len {len}")));
    }

    let views: Vec<(&[Vector], &[Vector])> = train_set.iter().map(|(x, y)| (&x[..], &y[..])).collect();
    let train_mse = res.fit_many(&views, washout, ridge)?;

    let kept = |set: &[(Vec<Vector>, Vec<Vector>)]| -> Vec<Vector> {
        set.iter().flat_map(|(_, y)| y[washout..].iter().cloned()).collect()
    };
    let train_targets = kept(&train_set);
    let q = task.output_width();
    let mut mean = Vector::zeros(q);
    for y in &train_targets {
        mean.axpy(1.0 / train_targets.len() as f64, y);
    }
    let baseline = |targets: &[Vector]| mean_squared_error(&vec![mean.clone(); targets.len()], targets);

    let mut test_out = Vec::new();
    for (x, _) in &test_set {
        test_out.extend(res.predict(x)?.into_iter().skip(washout));
    }
    let test_targets = kept(&test_set);
    let test_mse = mean_squared_error(&test_out, &test_targets);

    let rows = vec![
        vec!["train".into(), fmt_f64(train_mse), fmt_f64(baseline(&train_targets))],
        vec!["test".into(), fmt_f64(test_mse), fmt_f64(baseline(&test_targets))],
    ];
    write(&dir, "esn_summary.csv", &table_csv(&["split", "mse", "baseline_mse"], &rows)?)?;
    write(&dir, "reservoir.txt", &res.to_bundle().to_text())?;
    if !test_mse.is_finite() {
        return Err(CliError::Numerical(format!("test error is {test_mse}")));
    }
    Ok(())
}

/// Trains several families under one parameter budget. Unless `eta` is
/// given, each family uses the learning rate of the long-gap echo setup.
pub fn cmd_compare(cfg: &mut RunConfig) -> Result<(), CliError> {
    let default_names: Vec<&str> = echo::FAMILIES.iter().map(|f| f.name()).collect();
    let picked = families(cfg, &default_names)?;
    let task: Task = cfg.get("task", echo::task())?;
    let budget = cfg.get("budget", echo::BUDGET)?;
    let eta: Option<f64> = cfg.get_opt("eta", None)?;
    let base = echo::config(Family::RnnVanilla, 0, echo::EPOCHS);
    let mut shared = TrainConfig { eta: 0.0, ..base };
    shared.epochs = cfg.get("epochs", base.epochs)?;
    shared.len = cfg.get("len", base.len)?;
    shared.train_size = cfg.get("train_size", base.train_size)?;
    shared.test_size = cfg.get("test_size", base.test_size)?;
    shared.batch = cfg.get("batch", base.batch)?;
    shared.fresh = cfg.get("fresh", base.fresh)?;
    shared.clip = cfg.get_opt("clip", base.clip)?;
    shared.optimizer = cfg.get::<Optimizer>("optimizer", base.optimizer)?;
    shared.seed = cfg.get("seed", base.seed)?;
    let dir = open_output(cfg, "compare")?;

    let contenders = picked
        .iter()
        .map(|&f| {
            Ok(Contender {
                spec: ModelSpec::matched(f, budget, task.input_width(), task.output_width())?,
                train: TrainConfig {
                    eta: eta.unwrap_or_else(|| echo::config(f, 0, 0).eta),
                    ..shared.clone()
                },
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let rows = compare(&task, &contenders)?;
    let mut table = Vec::new();
    for (row, c) in rows.iter().zip(&contenders) {
        write(&dir, &format!("curve_{}.csv", row.family), &learning_curve_csv(&row.report.curve)?)?;
        table.push(vec![
            row.family.name().to_string(),
            row.hidden.to_string(),
            row.params.to_string(),
            c.train.eta.to_string(),
            fmt_f64(row.report.train_loss),
            fmt_f64(row.report.train_metric),
            fmt_f64(row.report.test_loss),
            fmt_f64(row.report.test_metric),
        ]);
    }
    write(
        &dir,
        "compare.csv",
        &table_csv(
            &["family", "hidden", "params", "eta", "train_loss", "train_metric", "test_loss", "test_metric"],
            &table,
        )?,
    )?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rnnlab::params::Parameters;

    #[test]
    fn family_lists_expand_groups_without_duplicates() {
        let mut c = RunConfig::parse("family = gru, gru-full, birnn").unwrap();
        assert_eq!(
            families(&mut c, &["all"]).unwrap(),
            [Family::GruFull, Family::GruMinimal, Family::BiRnn]
        );
        let mut c = RunConfig::parse("").unwrap();
        assert_eq!(families(&mut c, &["all"]).unwrap().len(), 12);
    }

    #[test]
    fn model_parameter_count_appears_in_compare_rows() {
        let spec = ModelSpec::matched(Family::RnnLeaky, 100, 1, 1).unwrap();
        let n = spec.build(&mut Rng::seed_from_u64(0)).unwrap().num_params();
        assert!(n <= 100);
    }
}
