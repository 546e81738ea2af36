//! End-to-end acceptance runs. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::f64::consts::{LN_2, TAU};
use std::process::Command;
use std::time::{Duration, Instant};

use space_split::baselines::{
    ensemble_sensitivity, fd_sensitivity, log_variance_slope, ulam_sensitivity, EnsembleConfig, FdConfig,
    UlamConfig,
};
use space_split::dynamics::objectives::{GridAxis, Objective, ObjectiveSet};
use space_split::dynamics::{evolve_from_seed, AreaPreserving, CircleDoubling, MapModel, Solenoid};
use space_split::linalg;
use space_split::s3::{koopman_step, run_s3, stable_tangent_norms, stable_tangent_step, S3Config};
use space_split::splitting::{compute_y, Geometry, SplitField, SplitOptions};
use space_split::subspaces::{backward_adjoint_frames, classify, forward_unstable_frames, SubspaceFrames};

struct Outcome {
    pass: bool,
    detail: String,
}

fn report(id: &str, title: &str, budget: Duration, f: impl FnOnce() -> Outcome) -> bool {
    let t = Instant::now();
    let out = f();
    let elapsed = t.elapsed();
    let in_time = elapsed <= budget;
    let pass = out.pass && in_time;
    println!(
        "criterion {id} [{}] {title}: {} ({:.1} s of {} s)",
        if pass { "PASS" } else { "FAIL" },
        out.detail,
        elapsed.as_secs_f64(),
        budget.as_secs()
    );
    pass
}

fn theta_axis(nodes: usize) -> GridAxis {
    GridAxis {
        coord: 1,
        lo: 0.0,
        hi: TAU,
        nodes,
        periodic: true,
    }
}

fn slope(ys: &[f64], xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

fn tangent_blowup() -> Outcome {
    let model = Solenoid::default();
    let params = [1.4, 0.0];
    let traj = evolve_from_seed(&model, &params, 1, 100, 41).unwrap();
    let mut v = vec![0.0; 3];
    let mut next = vec![0.0; 3];
    let mut logs = Vec::new();
    let mut idx = Vec::new();
    for i in 0..40 {
        stable_tangent_step(traj.jacobian(i), 3, &v, traj.perturbation(i + 1, 1), &mut next);
        v.copy_from_slice(&next);
        let k = i + 1;
        if (5..=40).contains(&k) {
            logs.push(linalg::norm(&v).ln());
            idx.push(k as f64);
        }
    }
    let growth = slope(&logs, &idx);
    let cfg = S3Config {
        steps: 1_000_000,
        param_index: 1,
        ..Default::default()
    };
    let norms = stable_tangent_norms(&model, &params, &cfg).unwrap();
    let max = norms.iter().cloned().fold(0.0, f64::max);
    Outcome {
        pass: (growth / LN_2 - 1.0).abs() <= 0.10 && max < 10.0,
        detail: format!(
            "full-source log-slope {growth:.4} (ln 2 = {LN_2:.4}, ±10%), split-source max |v| {max:.3} over {} steps (< 10)",
            norms.len()
        ),
    }
}

fn lyapunov_spectrum() -> Outcome {
    let model = Solenoid::default();
    let traj = evolve_from_seed(&model, &[1.4, 0.0], 0, 1_000, 1_000_000).unwrap();
    let (_, spectrum) = forward_unstable_frames(&traj, 3, 200, 0).unwrap();
    let exact = [LN_2, -2.0 * LN_2, -2.0 * LN_2];
    let err = spectrum
        .exponents
        .iter()
        .zip(exact)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let m = classify(&spectrum, 3, 0.05).unwrap();
    Outcome {
        pass: err < 1e-6 && m == 1,
        detail: format!(
            "exponents ({:.9}, {:.9}, {:.9}), max error {err:.2e} (< 1e-6), m = {m}",
            spectrum.exponents[0], spectrum.exponents[1], spectrum.exponents[2]
        ),
    }
}

fn stable_exactness() -> Outcome {
    let model = Solenoid::default();
    let params = [1.4, 0.0];
    let set = ObjectiveSet::single("r", Objective::Coordinate { coord: 0 });
    let cfg = S3Config {
        steps: 100_000,
        param_index: 0,
        ..Default::default()
    };
    let r = run_s3(&model, &params, &set, &cfg).unwrap().results.remove(0);
    let fd = fd_sensitivity(
        &model,
        &params,
        &set,
        &FdConfig {
            samples: 1_000_000,
            burn_in: 64,
            param_index: 0,
            ..Default::default()
        },
    )
    .unwrap()
    .remove(0);
    // the difference is exact up to rounding, so its stderr can vanish
    let fd_ok = (fd.estimate - r.total).abs() <= fd.stderr + 1e-10;
    Outcome {
        pass: (r.total - 1.0).abs() <= 0.01 && r.unstable.abs() < 1e-6 && fd_ok,
        detail: format!(
            "total {:.12} (1 ± 0.01), unstable {:.2e} (< 1e-6), FD {:.12} ± {:.1e}",
            r.total, r.unstable, fd.estimate, fd.stderr
        ),
    }
}

fn circle_objectives() -> ObjectiveSet {
    let mut set = ObjectiveSet::new();
    set.push(
        "cos",
        Objective::Cos {
            coord: 0,
            period: TAU,
            harmonic: 1,
        },
    );
    set.push(
        "sin",
        Objective::Sin {
            coord: 0,
            period: TAU,
            harmonic: 1,
        },
    );
    set.extend(ObjectiveSet::nodal(GridAxis {
        coord: 0,
        ..theta_axis(8)
    }));
    set
}

fn one_dimensional_unstable(s2: f64, set: &ObjectiveSet) -> Outcome {
    let model = CircleDoubling::default();
    let ulam = |cells| {
        ulam_sensitivity(
            &model,
            &[s2],
            set,
            &UlamConfig {
                n_cells: cells,
                ..Default::default()
            },
        )
        .unwrap()
    };
    let fine = ulam(4096);
    let coarse = ulam(2048);
    // three significant digits; the absolute floor is a tenth of the comparison floor below
    let converged = fine
        .iter()
        .zip(&coarse)
        .all(|(a, b)| (a.estimate - b.estimate).abs() <= 1e-3 * a.estimate.abs() + 1e-4);
    let cfg = S3Config {
        steps: 1_000_000,
        lags: 10,
        replicates: 32,
        ..Default::default()
    };
    let s3 = run_s3(&model, &[s2], set, &cfg).unwrap();
    let mut worst: f64 = 0.0;
    let mut fails = Vec::new();
    for (r, u) in s3.results.iter().zip(&fine) {
        let tol = (0.05 * u.estimate.abs()).max(1e-3);
        let d = (r.total - u.estimate).abs();
        worst = worst.max(d / tol);
        if d > tol {
            fails.push(format!("{} S3 {:.5} vs {:.5}", r.objective_id, r.total, u.estimate));
        }
    }
    let cos = &s3.results[0];
    Outcome {
        pass: converged && fails.is_empty(),
        detail: format!(
            "{} objectives, grid-converged {converged}, cos S3 {:.5} ± {:.1e} vs transfer operator {:.5}, worst |diff|/tol {worst:.2}{}",
            set.len(),
            cos.total,
            cos.replicate_stderr.unwrap_or(0.0),
            fine[0].estimate,
            if fails.is_empty() {
                String::new()
            } else {
                format!("; failed: {}", fails.join(", "))
            }
        ),
    }
}

fn solenoid_experiment() -> Outcome {
    let model = Solenoid::default();
    let params = [1.4, 0.0];
    let theta = ObjectiveSet::nodal(theta_axis(16));
    let mut set = theta.clone();
    set.extend(ObjectiveSet::nodal_2d(
        GridAxis {
            coord: 0,
            lo: 0.7,
            hi: 2.1,
            nodes: 5,
            periodic: false,
        },
        theta_axis(4),
    ));
    let s3 = run_s3(
        &model,
        &params,
        &set,
        &S3Config {
            param_index: 1,
            ..Default::default()
        },
    )
    .unwrap();
    let fd = fd_sensitivity(
        &model,
        &params,
        &set,
        &FdConfig {
            samples: 10_000_000,
            burn_in: 64,
            param_index: 1,
            ..Default::default()
        },
    )
    .unwrap();
    let z: Vec<f64> = s3
        .results
        .iter()
        .zip(&fd)
        .map(|(a, b)| {
            let d = (a.total - b.estimate).abs();
            if d == 0.0 {
                0.0
            } else {
                d / b.stderr
            }
        })
        .collect();
    let n_theta = theta.len();
    let pass_theta = z[..n_theta].iter().filter(|&&z| z <= 3.0).count();
    let pass_2d = z[n_theta..].iter().filter(|&&z| z <= 3.0).count();
    let n_2d = z.len() - n_theta;
    let max_z = z.iter().cloned().fold(0.0, f64::max);
    Outcome {
        pass: pass_theta as f64 >= 0.9 * n_theta as f64 && pass_2d as f64 >= 0.9 * n_2d as f64,
        detail: format!(
            "theta nodal {pass_theta}/{n_theta} and r-theta nodal {pass_2d}/{n_2d} within z <= 3 (need 90%), max z {max_z:.2}, FD stderr ~{:.3}",
            fd[0].stderr
        ),
    }
}

fn ensemble_failure() -> Outcome {
    let set = ObjectiveSet::single(
        "cos",
        Objective::Cos {
            coord: 1,
            period: TAU,
            harmonic: 1,
        },
    );
    let cfg = EnsembleConfig {
        truncation: 20,
        samples: 200_000,
        burn_in: 64,
        param_index: 1,
        seed: 0,
    };
    let r = ensemble_sensitivity(&Solenoid::default(), &[1.4, 0.0], &set, &cfg)
        .unwrap()
        .remove(0);
    let s = log_variance_slope(&r.summand_variance, 3..=19).unwrap();
    let target = 2.0 * LN_2;
    Outcome {
        pass: (s / target - 1.0).abs() <= 0.15,
        detail: format!(
            "log-variance slope {s:.4} (2 ln 2 = {target:.4}, ±15%), summand variance at i = 19: {:.2e}, truncated estimate {:.3} ± {:.3}",
            r.summand_variance[19], r.estimate, r.stderr
        ),
    }
}

fn max_orthonormality_error(f: &SubspaceFrames) -> f64 {
    let (n, m) = (f.dim(), f.rank());
    let mut worst: f64 = 0.0;
    for i in f.first()..=f.last() {
        let q = f.at(i);
        for a in 0..m {
            for b in 0..m {
                let g = linalg::dot(&q[a * n..(a + 1) * n], &q[b * n..(b + 1) * n]);
                worst = worst.max((g - f64::from(a == b)).abs());
            }
        }
    }
    worst
}

fn property_suites() -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;
    let mut check = |name: &str, pass: bool, value: String| {
        ok &= pass;
        notes.push(format!("{name} {value}{}", if pass { "" } else { " FAILED" }));
    };

    let sol = Solenoid::default();
    let traj = evolve_from_seed(&sol, &[1.4, 0.3], 2, 200, 20_000).unwrap();
    let mut ortho: f64 = 0.0;
    for m in 1..=3 {
        let (q, _) = forward_unstable_frames(&traj, m, 100, 1).unwrap();
        let p = backward_adjoint_frames(&traj, m, 100, 1).unwrap();
        ortho = ortho.max(max_orthonormality_error(&q)).max(max_orthonormality_error(&p));
    }
    let cat = evolve_from_seed(&AreaPreserving::default(), &[0.3], 2, 200, 20_000).unwrap();
    let (q, _) = forward_unstable_frames(&cat, 2, 100, 1).unwrap();
    ortho = ortho.max(max_orthonormality_error(&q));
    check("orthonormality", ortho < 1e-12, format!("{ortho:.1e}"));

    let (q, _) = forward_unstable_frames(&traj, 1, 100, 1).unwrap();
    let p = backward_adjoint_frames(&traj, 1, 100, 1).unwrap();
    let g = Geometry {
        model: &sol,
        traj: &traj,
        q: &q,
        p: &p,
        param: 1,
    };
    let field = SplitField::compute(
        &g,
        200,
        19_000,
        &SplitOptions {
            divergence: false,
            ..Default::default()
        },
    )
    .unwrap();
    let mut resid: f64 = 0.0;
    for i in field.start()..=field.end() {
        let (x, xu, xs) = (field.x(i), field.unstable(i), field.stable(i));
        let mut proj = [0.0; 3];
        linalg::project(q.at(i), 3, 1, xu, &mut proj);
        for k in 0..3 {
            resid = resid.max((xu[k] + xs[k] - x[k]).abs()).max((proj[k] - xu[k]).abs());
        }
        resid = resid.max(linalg::dot(xs, p.at(i)).abs());
    }
    check("splitting", resid < 1e-10, format!("{resid:.1e}"));

    let mut psi_gap: f64 = 0.0;
    for s2 in [0.0, 0.3] {
        let t = evolve_from_seed(&sol, &[1.4, s2], 4, 200, 1_000).unwrap();
        let (q, _) = forward_unstable_frames(&t, 1, 100, 1).unwrap();
        let mut a = vec![0.0; 3];
        let mut b: Vec<f64> = q.at(300).iter().map(|x| 5.0 * x).collect();
        let mut next = vec![0.0; 3];
        for i in 300..360 {
            let y = compute_y(&t, i, q.at(i + 1), 1).unwrap();
            koopman_step(&t, i, q.at(i + 1), 1, &a, &y, &mut next).unwrap();
            a.copy_from_slice(&next);
            koopman_step(&t, i, q.at(i + 1), 1, &b, &y, &mut next).unwrap();
            b.copy_from_slice(&next);
        }
        let d: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
        psi_gap = psi_gap.max(linalg::norm(&d));
    }
    check("psi-initialization", psi_gap < 1e-10, format!("{psi_gap:.1e}"));

    let mut y_max: f64 = 0.0;
    let runs: [(&dyn MapModel, f64, usize); 2] = [(&AreaPreserving::default(), 0.3, 1), (&CircleDoubling::default(), 0.0, 1)];
    for (model, s, m) in runs {
        let t = evolve_from_seed(model, &[s], 5, 100, 2_000).unwrap();
        let (q, _) = forward_unstable_frames(&t, m, 100, 1).unwrap();
        for i in 100..1_900 {
            for y in compute_y(&t, i, q.at(i + 1), m).unwrap() {
                y_max = y_max.max(y.abs());
            }
        }
    }
    check("zero-Y", y_max == 0.0, format!("{y_max:e}"));

    let mut lin = ObjectiveSet::new();
    let a = Objective::Hat {
        axis: theta_axis(8),
        node: 3,
    };
    let b = Objective::Coordinate { coord: 2 };
    lin.push("a", a.clone());
    lin.push("b", b.clone());
    lin.push("a+b", Objective::Sum { terms: vec![a, b] });
    let rep = run_s3(
        &sol,
        &[1.4, 0.2],
        &lin,
        &S3Config {
            steps: 6_000,
            param_index: 1,
            ..Default::default()
        },
    )
    .unwrap();
    let r = &rep.results;
    let lin_err = (r[2].total - r[0].total - r[1].total).abs();
    check("linearity", lin_err < 1e-12, format!("{lin_err:.1e}"));

    let dir = tempfile::tempdir().unwrap();
    let s3_out = dir.path().join("s3.csv");
    let fd_out = dir.path().join("fd.csv");
    let run = || {
        for (cmd, extra, out) in [
            ("s3", ["--steps", "5000"], &s3_out),
            ("fd", ["--samples", "20000"], &fd_out),
        ] {
            let status = Command::new(env!("CARGO_BIN_EXE_s3"))
                .args([cmd, "--model", "solenoid", "--params", "1.4,0.1", "--param-index", "1"])
                .args(extra)
                .args(["--sample-burn-in", "40", "--lags", "20", "--out", out.to_str().unwrap()])
                .status()
                .unwrap();
            assert!(status.success());
        }
        (std::fs::read(&s3_out).unwrap(), std::fs::read(&fd_out).unwrap())
    };
    let same = run() == run();
    check("seed-determinism", same, if same { "identical".into() } else { "differs".into() });

    Outcome {
        pass: ok,
        detail: notes.join(", "),
    }
}

fn main() {
    let secs = Duration::from_secs;
    let results = [
        report("1", "tangent blowup and bounded stable tangent", secs(10), tangent_blowup),
        report("2", "Lyapunov spectrum of the solenoid", secs(5), lyapunov_spectrum),
        report("3", "stable contribution exactness", secs(60), stable_exactness),
        report("4", "unstable contribution on the 1-D map at s2 = 0", secs(120), || {
            one_dimensional_unstable(0.0, &circle_objectives())
        }),
        report("4b", "unstable contribution on the 1-D map at s2 = 0.3", secs(120), || {
            one_dimensional_unstable(0.3, &circle_objectives())
        }),
        report("5", "solenoid s2 sensitivities against finite differences", secs(900), solenoid_experiment),
        report("6", "ensemble summand variance growth", secs(60), ensemble_failure),
        report("7", "property suites", secs(120), property_suites),
    ];
    let passed = results.iter().filter(|&&p| p).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if passed != results.len() {
        std::process::exit(1);
    }
}
