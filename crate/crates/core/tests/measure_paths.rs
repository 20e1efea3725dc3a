use randap_core::diophantine::almost_periods;
use randap_core::measures::{
    check_ap_measure, lambda_t, mu_eval, push_forward_kernel, push_forward_paired, rho_uniform, ApMeasureConfig,
    BLConfig, EmpiricalMeasure,
};
use randap_core::noise::{NoiseEnsemble, TimeGrid};
use randap_core::systems::{reference_section, StatePoint, SystemDescriptor};
use randap_core::Error;
use std::f64::consts::SQRT_2;

#[test]
fn pitchfork_push_forward_matches_shifted_lambda() {
    let d = SystemDescriptor::pitchfork();
    let sec = reference_section(&d);
    let grid = TimeGrid::dyadic(1.0, 6, 40.0).unwrap();
    let e = NoiseEnsemble::new(1, 1000, grid).unwrap();
    let fresh = NoiseEnsemble::new(2, 1000, grid).unwrap();
    let lam0 = lambda_t(&sec, 0.0, &e).unwrap();
    let pushed = push_forward_paired(&d, 1.0, &lam0, &fresh).unwrap();
    let lam1 = lambda_t(&sec, 1.0, &e).unwrap();
    let rho = rho_uniform(pushed.support(), lam1.support(), &BLConfig::default()).unwrap();
    assert!(rho < 0.1, "rho={rho}");
    // a different measure is visibly far
    let scaled: Vec<StatePoint> = lam1.support().iter().map(|x| StatePoint::Real(2.0 * x.components()[0])).collect();
    assert!(rho_uniform(pushed.support(), &scaled, &BLConfig::default()).unwrap() > 3.0 * rho);
}

#[test]
fn kernel_and_paired_push_forwards_agree_in_law() {
    let d = SystemDescriptor::ou();
    let grid = TimeGrid::new(1.0 / 16.0, 4.0).unwrap();
    let fresh = NoiseEnsemble::new(9, 300, grid).unwrap();
    let mu = EmpiricalMeasure::uniform(vec![StatePoint::Real(1.0); 300]).unwrap();
    let a = push_forward_paired(&d, 1.0, &mu, &fresh).unwrap();
    let small = EmpiricalMeasure::dirac(StatePoint::Real(1.0));
    let b = push_forward_kernel(&d, 1.0, &small, &fresh).unwrap();
    assert!((a.mean(0) - b.mean(0)).abs() < 1e-12);
    assert!((a.mean(0) - (-1.0f64).exp()).abs() < 0.1);
}

#[test]
fn push_forward_refuses_matched_seeds() {
    let d = SystemDescriptor::ou();
    let grid = TimeGrid::new(1.0 / 16.0, 80.0).unwrap();
    let e = NoiseEnsemble::new(5, 10, grid).unwrap();
    let lam = lambda_t(&reference_section(&d), 0.0, &e).unwrap();
    assert!(matches!(push_forward_kernel(&d, 1.0, &lam, &e), Err(Error::Independence(5))));
    assert!(matches!(push_forward_paired(&d, 1.0, &lam, &e), Err(Error::Independence(5))));
}

#[test]
fn ou_section_has_stationary_moments() {
    let d = SystemDescriptor::ou();
    let grid = TimeGrid::new(1.0 / 16.0, 60.0).unwrap();
    let e = NoiseEnsemble::new(12, 4000, grid).unwrap();
    let sec = reference_section(&d);
    for t in [0.0, 1.0] {
        let m2 = mu_eval(|_, x| x.components()[0].powi(2), &sec, t, &e).unwrap();
        // stationary variance of dX = −X dt + dW is 1/2
        assert!((m2 - 0.5).abs() < 0.05, "t={t} m2={m2}");
    }
}

#[test]
fn torus_ap_measure_certificate() {
    let gamma = SQRT_2;
    let d = SystemDescriptor::torus(gamma, 1.0, 0.0, 0.0).unwrap();
    let sec = reference_section(&d);
    let set = almost_periods(gamma, 0.05, 60.0).unwrap();
    let grid = TimeGrid::dyadic(1.0, 4, 100.0).unwrap();
    let e = NoiseEnsemble::new(21, 200, grid).unwrap();
    let fresh = NoiseEnsemble::new(22, 200, grid).unwrap();
    let mut cfg = ApMeasureConfig::new(0.05, vec![1.0], vec![0.0, 1.0]);
    cfg.resamples = 50;
    let cert = check_ap_measure(&d, &sec, &set, &e, &fresh, &cfg).unwrap();
    assert!(cert.passed, "{}", cert.to_text());
    assert_eq!(cert.lambda_rows.len(), 2 * set.len());
    for r in &cert.omega_rows {
        assert!((r.rho - (r.tau * gamma - (r.tau * gamma).round()).abs()).abs() < 1e-9);
    }
}
