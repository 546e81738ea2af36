use std::f64::consts::TAU;

use space_split::baselines::{ensemble_sensitivity, fd_sensitivity, ulam_sensitivity, EnsembleConfig, FdConfig, UlamConfig};
use space_split::dynamics::objectives::{Objective, ObjectiveSet};
use space_split::dynamics::{CircleDoubling, Contracting, Solenoid};
use space_split::s3::{run_s3, S3Config};

fn cos_set() -> ObjectiveSet {
    ObjectiveSet::single(
        "cos",
        Objective::Cos {
            coord: 0,
            period: TAU,
            harmonic: 1,
        },
    )
}

#[test]
fn circle_unstable_part_matches_transfer_operator() {
    let model = CircleDoubling::default();
    let params = [0.3];
    let set = cos_set();
    let ulam = ulam_sensitivity(&model, &params, &set, &UlamConfig::default()).unwrap();
    let cfg = S3Config {
        steps: 400_000,
        lags: 10,
        replicates: 4,
        ..Default::default()
    };
    let r = &run_s3(&model, &params, &set, &cfg).unwrap().results[0];
    let u = ulam[0].estimate;
    assert!(u.abs() > 0.1, "{u}");
    assert!((r.total - u).abs() <= 0.05 * u.abs(), "s3 {} ulam {u}", r.total);
    // on a 1-D expanding map every tangent direction is unstable
    assert!(r.stable.abs() < 1e-12);
}

#[test]
fn circle_derivative_vanishes_at_zero_perturbation() {
    let model = CircleDoubling::default();
    let set = cos_set();
    let ulam = ulam_sensitivity(&model, &[0.0], &set, &UlamConfig::default()).unwrap();
    assert!(ulam[0].estimate.abs() < 1e-5);
    let cfg = S3Config {
        steps: 200_000,
        lags: 10,
        ..Default::default()
    };
    let r = &run_s3(&model, &[0.0], &set, &cfg).unwrap().results[0];
    assert!(r.total.abs() < 0.01, "{}", r.total);
}

#[test]
fn solenoid_angular_shift_agrees_with_coarse_differences() {
    let model = Solenoid::default();
    let params = [1.4, 0.0];
    let set = ObjectiveSet::single("r", Objective::Coordinate { coord: 0 });
    let cfg = S3Config {
        steps: 50_000,
        param_index: 1,
        ..Default::default()
    };
    let r = &run_s3(&model, &params, &set, &cfg).unwrap().results[0];
    let fd = &fd_sensitivity(
        &model,
        &params,
        &set,
        &FdConfig {
            samples: 200_000,
            burn_in: 64,
            param_index: 1,
            ..Default::default()
        },
    )
    .unwrap()[0];
    // the mean radius does not depend on the angular offset
    assert!(r.total.abs() < 0.01, "{}", r.total);
    assert!((fd.estimate - r.total).abs() <= 4.0 * fd.stderr + 1e-10);
}

#[test]
fn three_estimators_agree_on_the_contracting_map() {
    let model = Contracting;
    let params = [0.0];
    let set = ObjectiveSet::single("x", Objective::Coordinate { coord: 0 });
    let s3 = &run_s3(
        &model,
        &params,
        &set,
        &S3Config {
            steps: 5_000,
            psi_warm_up: 100,
            lags: 10,
            burn_in: 50,
            ..Default::default()
        },
    )
    .unwrap()
    .results[0];
    let fd = &fd_sensitivity(
        &model,
        &params,
        &set,
        &FdConfig {
            samples: 1_000,
            burn_in: 60,
            ..Default::default()
        },
    )
    .unwrap()[0];
    let ens = &ensemble_sensitivity(
        &model,
        &params,
        &set,
        &EnsembleConfig {
            truncation: 60,
            samples: 100,
            burn_in: 10,
            ..Default::default()
        },
    )
    .unwrap()[0];
    for v in [s3.total, fd.estimate, ens.estimate] {
        assert!((v - 2.0).abs() < 1e-8, "{v}");
    }
}
