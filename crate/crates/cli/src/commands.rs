use std::collections::HashMap;
use std::path::Path;

use space_split::baselines::{ensemble_sensitivity, fd_sensitivity, ulam_sensitivity};
use space_split::dynamics::{check_model as check_derivatives, evolve_from_seed};
use space_split::s3::run_s3;
use space_split::subspaces::{classify, forward_unstable_frames};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::output::{fmt_f, ReadTable, Table};

fn header(command: &str, config: &RunConfig) -> String {
    format!("command = \"{command}\"\n{}", config.to_toml())
}

pub fn s3(c: &RunConfig) -> CliResult<()> {
    let model = c.model()?;
    let params = c.resolved_params(model.as_ref());
    let set = c.objectives.build(model.dim());
    let cfg = c.s3_config();
    let report = run_s3(model.as_ref(), &params, &set, &cfg).map_err(|e| CliError::from_core("s3_core", e))?;
    let mut t = Table::new(&[
        "objective_id",
        "stable",
        "unstable",
        "total",
        "diag_tail",
        "K",
        "M",
        "L",
        "seed",
    ]);
    for r in &report.results {
        t.push(vec![
            r.objective_id.clone(),
            fmt_f(r.stable),
            fmt_f(r.unstable),
            fmt_f(r.total),
            fmt_f(r.tail_z),
            cfg.steps.to_string(),
            cfg.psi_warm_up.to_string(),
            cfg.lags.to_string(),
            cfg.seed.to_string(),
        ]);
    }
    t.write(&header("s3", c), c.out.as_deref())
}

pub fn fd(c: &RunConfig) -> CliResult<()> {
    let model = c.model()?;
    let params = c.resolved_params(model.as_ref());
    let set = c.objectives.build(model.dim());
    let est = fd_sensitivity(model.as_ref(), &params, &set, &c.fd_config())
        .map_err(|e| CliError::from_core("baselines", e))?;
    let mut t = Table::new(&["objective_id", "estimate", "stderr", "n_samples", "delta", "seed"]);
    for r in &est {
        t.push(vec![
            r.objective_id.clone(),
            fmt_f(r.estimate),
            fmt_f(r.stderr),
            r.n_samples.to_string(),
            fmt_f(r.delta),
            r.seed.to_string(),
        ]);
    }
    t.write(&header("fd", c), c.out.as_deref())
}

pub fn ensemble(c: &RunConfig) -> CliResult<()> {
    let model = c.model()?;
    let params = c.resolved_params(model.as_ref());
    let set = c.objectives.build(model.dim());
    let res = ensemble_sensitivity(model.as_ref(), &params, &set, &c.ensemble_config())
        .map_err(|e| CliError::from_core("baselines", e))?;
    let mut t = Table::new(&[
        "objective_id",
        "lag",
        "summand_mean",
        "summand_variance",
        "cumulative_estimate",
    ]);
    for r in &res {
        for i in 0..r.summand_mean.len() {
            t.push(vec![
                r.objective_id.clone(),
                i.to_string(),
                fmt_f(r.summand_mean[i]),
                fmt_f(r.summand_variance[i]),
                fmt_f(r.cumulative[i]),
            ]);
        }
    }
    t.write(&header("ensemble", c), c.out.as_deref())
}

pub fn ulam(c: &RunConfig) -> CliResult<()> {
    let model = c.model()?;
    let params = c.resolved_params(model.as_ref());
    let set = c.objectives.build(model.dim());
    let res = ulam_sensitivity(model.as_ref(), &params, &set, &c.ulam_config())
        .map_err(|e| CliError::from_core("baselines", e))?;
    let mut t = Table::new(&["objective_id", "estimate", "n_cells", "delta", "mean_value"]);
    for r in &res {
        t.push(vec![
            r.objective_id.clone(),
            fmt_f(r.estimate),
            r.n_cells.to_string(),
            fmt_f(r.delta),
            fmt_f(r.mean_value),
        ]);
    }
    t.write(&header("ulam", c), c.out.as_deref())
}

pub fn lyapunov(c: &RunConfig) -> CliResult<()> {
    let model = c.model()?;
    let params = c.resolved_params(model.as_ref());
    let n = model.dim();
    let err = |e| CliError::from_core("subspaces", e);
    let traj = evolve_from_seed(model.as_ref(), &params, c.seed, c.burn_in, c.steps).map_err(err)?;
    let (_, spectrum) = forward_unstable_frames(&traj, n, c.frame_warm_up, c.seed).map_err(err)?;
    let m = classify(&spectrum, n, c.exponent_tol).map_err(err)?;
    let mut t = Table::new(&["index", "exponent", "std_error", "detected_m"]);
    for (k, (l, se)) in spectrum.exponents.iter().zip(&spectrum.std_errors).enumerate() {
        t.push(vec![k.to_string(), fmt_f(*l), fmt_f(*se), m.to_string()]);
    }
    t.write(&header("lyapunov", c), c.out.as_deref())
}

pub fn check_model(c: &RunConfig) -> CliResult<()> {
    let model = c.model()?;
    let params = c.resolved_params(model.as_ref());
    let report =
        check_derivatives(model.as_ref(), &params, c.samples, c.seed).map_err(|e| CliError::from_core("dynamics", e))?;
    let mut t = Table::new(&["check", "max_rel_error", "tolerance", "pass"]);
    let mut failed = Vec::new();
    for (name, value) in report.rows() {
        let pass = value <= report.tolerance;
        if !pass {
            failed.push(name);
        }
        t.push(vec![name.to_string(), fmt_f(value), fmt_f(report.tolerance), pass.to_string()]);
    }
    t.write(&header("check-model", c), c.out.as_deref())?;
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::ChecksFailed(format!("{} derivatives of {}", failed.join(", "), model.id())))
    }
}

/// One row of a comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub objective_id: String,
    pub estimate: f64,
    pub fd_estimate: f64,
    pub fd_stderr: f64,
    pub abs_diff: f64,
    pub z: f64,
    pub pass: bool,
}

/// `|estimate − fd| / stderr` per objective, matched by id.
pub fn compare_files(estimate: &Path, fd: &Path, z_threshold: f64) -> CliResult<Vec<Comparison>> {
    if !(z_threshold > 0.0) {
        return Err(CliError::Config(format!("z threshold must be positive, got {z_threshold}")));
    }
    let a = ReadTable::read(estimate)?;
    let b = ReadTable::read(fd)?;
    let value_col = if a.has("total") { "total" } else { "estimate" };
    let index = |t: &ReadTable, p: &Path| -> CliResult<HashMap<String, usize>> {
        let mut map = HashMap::new();
        for (k, row) in t.rows.iter().enumerate() {
            let id = row
                .get("objective_id")
                .ok_or_else(|| CliError::Config(format!("{}: no objective_id column", p.display())))?;
            if map.insert(id.clone(), k).is_some() {
                return Err(CliError::Config(format!("{}: duplicate objective id {id}", p.display())));
            }
        }
        Ok(map)
    };
    let ia = index(&a, estimate)?;
    let ib = index(&b, fd)?;
    let mut ids: Vec<&String> = ia.keys().collect();
    ids.sort_by_key(|id| ia[*id]);
    let mut missing: Vec<&String> = ids.iter().copied().filter(|id| !ib.contains_key(*id)).collect();
    missing.extend(ib.keys().filter(|id| !ia.contains_key(*id)));
    if !missing.is_empty() {
        let names: Vec<&str> = missing.iter().map(|s| s.as_str()).collect();
        return Err(CliError::Config(format!("objective ids do not match: {}", names.join(", "))));
    }
    ids.into_iter()
        .map(|id| {
            let x = a.float(ia[id], value_col, estimate)?;
            let y = b.float(ib[id], "estimate", fd)?;
            let se = b.float(ib[id], "stderr", fd)?;
            let diff = (x - y).abs();
            let z = if diff == 0.0 {
                0.0
            } else if se > 0.0 {
                diff / se
            } else {
                f64::INFINITY
            };
            Ok(Comparison {
                objective_id: id.clone(),
                estimate: x,
                fd_estimate: y,
                fd_stderr: se,
                abs_diff: diff,
                z,
                pass: z <= z_threshold,
            })
        })
        .collect()
}

pub fn compare(args: &crate::CompareArgs) -> CliResult<()> {
    let rows = compare_files(&args.estimate, &args.fd, args.z_threshold)?;
    let mut t = Table::new(&[
        "objective_id",
        "s3_total",
        "fd_estimate",
        "fd_stderr",
        "abs_diff",
        "z",
        "pass",
    ]);
    for r in &rows {
        t.push(vec![
            r.objective_id.clone(),
            fmt_f(r.estimate),
            fmt_f(r.fd_estimate),
            fmt_f(r.fd_stderr),
            fmt_f(r.abs_diff),
            fmt_f(r.z),
            r.pass.to_string(),
        ]);
    }
    let header = format!(
        "command = \"compare\"\nestimate_file = {:?}\nfd_file = {:?}\nz_threshold = {}",
        args.estimate.display().to_string(),
        args.fd.display().to_string(),
        args.z_threshold
    );
    t.write(&header, args.out.as_deref())?;
    let passed = rows.iter().filter(|r| r.pass).count();
    eprintln!("{passed}/{} objectives within z <= {}", rows.len(), args.z_threshold);
    Ok(())
}
