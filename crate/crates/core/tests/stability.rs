mod common;

use common::random;
use scbf::stability::{
    coupled_jump_defect, coupling_decay_experiment, martingale_diagnostic, meansquare_decay_experiment,
    pathwise_decay_experiment, stability_constants, stabilization_experiment,
};
use scbf::stationary::deterministic_decay_experiment;
use scbf::{
    make_domain, CbfParameters, Coefficient, Error, JumpModel, MarkDistribution, MarkFn, SimulationConfig,
    SpectralField,
};

fn stabilizing(g: f64, rate: f64, anchor: &SpectralField) -> JumpModel {
    JumpModel::new(
        MarkDistribution::single(0.0, rate).unwrap(),
        Coefficient::Stabilizing { g: MarkFn::Constant(g), anchor: anchor.clone() },
    )
    .unwrap()
}

fn linear(sigma: f64, rate: f64) -> JumpModel {
    JumpModel::new(
        MarkDistribution::single(0.0, rate).unwrap(),
        Coefficient::LinearMultiplicative { sigma: MarkFn::Constant(sigma) },
    )
    .unwrap()
}

fn additive(d: &scbf::Domain) -> JumpModel {
    JumpModel::new(
        MarkDistribution::two_point(-1.0, 1.0, 0.5, 1.0).unwrap(),
        Coefficient::Additive { h: MarkFn::Identity, shape: SpectralField::shear(d, 0.3, 1).unwrap() },
    )
    .unwrap()
}

fn cfg_with(d: &scbf::Domain, p: CbfParameters, u0: SpectralField, horizon: f64, dt: f64, noise: Option<JumpModel>) -> SimulationConfig {
    let mut cfg = SimulationConfig::new(d, p, u0, horizon, dt);
    cfg.noise = noise;
    cfg.record_every = 10;
    cfg.seed = 5;
    cfg
}

#[test]
fn constants_by_substitution() {
    let d = make_domain(2, 8, 2).unwrap();
    let zero = SpectralField::zeros(&d);
    let p = CbfParameters::new(1.0, 1.0, 3.0).unwrap();
    let c = stability_constants(&p, Some(&stabilizing(0.2, 1.0, &zero))).unwrap();
    assert!((c.l - 0.04).abs() < 1e-15 && c.eta == 0.0 && (c.theta - 0.96).abs() < 1e-15);
    assert!((c.theta_strict - 0.76).abs() < 1e-15);
    assert!(c.admissible.meansquare && c.admissible.pathwise);

    let quiet = stability_constants(&p, None).unwrap();
    assert_eq!(quiet.kappa, quiet.theta);
    assert!(quiet.zeta.is_none() && !quiet.admissible.stabilization);
    let add = stability_constants(&p, Some(&additive(&d))).unwrap();
    assert_eq!(add.kappa, add.theta);

    let one = stability_constants(&p, Some(&stabilizing(1.0, 1.0, &zero))).unwrap();
    assert!((one.rho.unwrap() - 0.306853).abs() < 1e-6);

    let weak = CbfParameters::new(0.2, 1.0, 5.0).unwrap();
    let c = stability_constants(&weak, Some(&stabilizing(3.0, 2.0, &zero))).unwrap();
    assert!((c.eta - 3.125).abs() < 1e-12);
    assert!(c.kappa < 0.0 && !c.admissible.deterministic);
    assert!((c.rho.unwrap() - 2.0 * (3.0 - 4f64.ln())).abs() < 1e-12);
    assert!((c.rho.unwrap() - 3.2274).abs() < 1e-4);
    assert!((c.zeta.unwrap() - 0.3024).abs() < 1e-4);
    assert!(c.admissible.stabilization);

    let again = stability_constants(&weak, Some(&stabilizing(3.0, 2.0, &zero))).unwrap();
    assert_eq!((c.zeta, c.theta, c.kappa), (again.zeta, again.theta, again.kappa));
}

#[test]
fn meansquare_examples() {
    let d = make_domain(2, 8, 2).unwrap();
    let zero = SpectralField::zeros(&d);
    let p = CbfParameters::new(1.0, 1.0, 3.0).unwrap();

    let still = cfg_with(&d, p, zero.clone(), 1.0, 1e-2, Some(stabilizing(0.2, 1.0, &zero)));
    let rep = meansquare_decay_experiment(&still, 20, 0.1).unwrap();
    assert!(rep.ms_distance.iter().all(|&m| m == 0.0) && rep.pass);

    let cfg = cfg_with(&d, p, random(&d, 1.0, 1), 3.0, 1e-2, Some(stabilizing(0.2, 1.0, &zero)));
    let rep = meansquare_decay_experiment(&cfg, 100, 0.1).unwrap();
    assert!((rep.rate - 0.96).abs() < 1e-15);
    assert!(rep.pass, "violation at {:?}", rep.first_violation);
    assert_eq!(rep.paths, 100);
    let mut csv = Vec::new();
    rep.write_csv(&mut csv).unwrap();
    assert!(String::from_utf8(csv).unwrap().starts_with("t,ms_distance,envelope,stderr\n"));

    // noise off: the envelope is the deterministic one
    let quiet = cfg_with(&d, p, random(&d, 1.0, 2), 3.0, 1e-2, None);
    let ms = meansquare_decay_experiment(&quiet, 1, 0.01).unwrap();
    let det = deterministic_decay_experiment(&p, &zero, &quiet.initial, 3.0, 1e-2, 0.01).unwrap();
    assert_eq!(ms.rate, det.kappa);
    assert!(ms.pass && det.passed);
    let last = det.distance_sq.len() - 1;
    assert!((ms.ms_distance.last().unwrap() - det.distance_sq[last]).abs() < 1e-14);

    let add = cfg_with(&d, p, random(&d, 1.0, 2), 1.0, 1e-2, Some(additive(&d)));
    assert!(matches!(meansquare_decay_experiment(&add, 5, 0.1), Err(Error::Admissibility { .. })));
    let loud = cfg_with(&d, p, random(&d, 1.0, 2), 1.0, 1e-2, Some(stabilizing(1.5, 1.0, &zero)));
    match meansquare_decay_experiment(&loud, 5, 0.1) {
        Err(e @ Error::Admissibility { .. }) => assert!(e.to_string().contains("μλ₁ > 2η + L")),
        other => panic!("{other:?}"),
    }
}

#[test]
fn pathwise_examples() {
    let d = make_domain(2, 8, 2).unwrap();
    let zero = SpectralField::zeros(&d);
    let p = CbfParameters::new(2.0, 1.0, 3.0).unwrap();
    let model = stabilizing(0.1, 1.0, &zero);
    let theta = stability_constants(&p, Some(&model)).unwrap().theta;

    let still = cfg_with(&d, p, zero.clone(), 2.0, 1e-2, Some(model.clone()));
    let rep = pathwise_decay_experiment(&still, 10, 0.5, theta / 2.0, 0.95).unwrap();
    assert!(rep.n0.iter().all(|n| *n == Some(0)));

    let quiet = cfg_with(&d, p, random(&d, 0.5, 3), 4.0, 1e-2, None);
    let kappa = stability_constants(&p, None).unwrap().kappa;
    let rep = pathwise_decay_experiment(&quiet, 1, 0.5, kappa / 2.0, 1.0).unwrap();
    assert_eq!(rep.n0, vec![Some(0)]);

    let noisy = cfg_with(&d, p, random(&d, 2.0, 4), 8.0, 1e-2, Some(model.clone()));
    let rep = pathwise_decay_experiment(&noisy, 60, 0.5, theta / 2.0, 0.95).unwrap();
    assert_eq!(rep.windows, 16);
    assert!(rep.pass && rep.fraction_finite >= 0.95, "{}", rep.fraction_finite);

    assert!(pathwise_decay_experiment(&noisy, 1, 0.5, theta, 0.95).is_err());
    assert!(pathwise_decay_experiment(&noisy, 1, 20.0, theta / 2.0, 0.95).is_err());
    // passes the mean-square gate but not the stricter pathwise one
    let mid = cfg_with(&d, CbfParameters::new(1.0, 1.0, 3.0).unwrap(), zero.clone(), 1.0, 1e-2, Some(stabilizing(0.5, 1.0, &zero)));
    let c = stability_constants(&mid.params, mid.noise.as_ref()).unwrap();
    assert!(c.admissible.meansquare && !c.admissible.pathwise);
    match pathwise_decay_experiment(&mid, 1, 0.5, c.theta / 2.0, 0.95) {
        Err(e @ Error::Admissibility { .. }) => assert!(e.to_string().contains("2η + 6L")),
        other => panic!("{other:?}"),
    }
}

#[test]
fn stabilization_gates() {
    let d = make_domain(2, 8, 2).unwrap();
    let zero = SpectralField::zeros(&d);
    let weak = CbfParameters::new(0.2, 1.0, 5.0).unwrap();
    let quiet = cfg_with(&d, weak, random(&d, 1.0, 1), 1.0, 1e-2, None);
    assert!(matches!(stabilization_experiment(&quiet, 5, 0.1, 0.95), Err(Error::Admissibility { .. })));
    let lin = cfg_with(&d, weak, random(&d, 1.0, 1), 1.0, 1e-2, Some(linear(0.5, 1.0)));
    assert!(matches!(stabilization_experiment(&lin, 5, 0.1, 0.95), Err(Error::Admissibility { .. })));
    let feeble = cfg_with(&d, weak, random(&d, 1.0, 1), 1.0, 1e-2, Some(stabilizing(0.5, 1.0, &zero)));
    match stabilization_experiment(&feeble, 5, 0.1, 0.95) {
        Err(e @ Error::Admissibility { .. }) => assert!(e.to_string().contains("ζ")),
        other => panic!("{other:?}"),
    }
    let wrong_anchor = cfg_with(&d, weak, random(&d, 1.0, 1), 1.0, 1e-2, Some(stabilizing(3.0, 2.0, &random(&d, 1.0, 9))));
    match stabilization_experiment(&wrong_anchor, 5, 0.1, 0.95) {
        Err(e @ Error::Admissibility { .. }) => assert!(e.to_string().contains("stationary")),
        other => panic!("{other:?}"),
    }
}

#[test]
fn martingale_average_shrinks_with_horizon() {
    let d = make_domain(2, 8, 2).unwrap();
    let model = stabilizing(3.0, 2.0, &SpectralField::zeros(&d));
    let diag = martingale_diagnostic(&model, 10.0, 200, 1).unwrap();
    assert!(diag.ratio <= 0.5, "{diag:?}");
    let skewed = JumpModel::new(
        MarkDistribution::uniform(-0.5, 2.0, 1.0).unwrap(),
        Coefficient::Stabilizing { g: MarkFn::Identity, anchor: SpectralField::zeros(&d) },
    )
    .unwrap();
    assert!(martingale_diagnostic(&skewed, 10.0, 200, 2).unwrap().ratio <= 0.5);
}

#[test]
fn coupling_examples() {
    let d = make_domain(2, 8, 2).unwrap();
    let p = CbfParameters::new(1.0, 1.0, 3.0).unwrap();
    let u0 = random(&d, 1.5, 1);
    let v0 = random(&d, 0.5, 2);

    let cfg = cfg_with(&d, p, u0.clone(), 2.0, 1e-2, Some(linear(0.1, 1.0)));
    let same = coupling_decay_experiment(&cfg, &u0, &u0, 10, 0.1).unwrap();
    assert!(same.ms_distance.iter().all(|&m| m == 0.0));

    let rep = coupling_decay_experiment(&cfg, &u0, &v0, 100, 0.1).unwrap();
    assert!((rep.rate - 0.99).abs() < 1e-15);
    assert!(rep.pass, "violation at {:?}", rep.first_violation);

    let add = cfg_with(&d, p, u0.clone(), 2.0, 1e-2, Some(additive(&d)));
    let rep = coupling_decay_experiment(&add, &u0, &v0, 20, 0.1).unwrap();
    assert_eq!(rep.rate, stability_constants(&p, None).unwrap().kappa);
    assert!(rep.pass);
    let mut jumps = 0;
    for i in 0..5 {
        jumps += add.path_events(i).unwrap().len();
        assert!(coupled_jump_defect(&add, &u0, &v0, i).unwrap() < 1e-12);
    }
    assert!(jumps > 0);
    assert!(coupled_jump_defect(&cfg, &u0, &v0, 0).unwrap() > 0.0 || cfg.path_events(0).unwrap().is_empty());

    let other = make_domain(2, 16, 2).unwrap();
    assert!(coupling_decay_experiment(&cfg, &u0, &random(&other, 1.0, 1), 2, 0.1).is_err());
}
