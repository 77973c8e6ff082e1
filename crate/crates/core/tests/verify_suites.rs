use obstacle_core::leray_lions::LerayLionsOperator;
use obstacle_core::mesh::{Grid, GridFunction};
use obstacle_core::noise::SpectralNoiseModel;
use obstacle_core::solver::{InitialPolicy, PenalizedProblem};
use obstacle_core::verify::{
    complementarity_test, epsilon_monotonicity_test, l1_contraction_test, lewy_stampacchia_test,
    oracle_heat_obstacle_test, penalty_decay_test, McSettings, PsorSettings,
};

const FAR_BELOW: f64 = -1e9;
const N_STEPS: usize = 32;

fn heat(psi: impl Fn(f64, f64) -> f64, f: f64, u0: impl Fn(f64) -> f64, eps: f64) -> PenalizedProblem {
    let grid = Grid::new(1.0, 24).unwrap();
    let dt = 0.25 / N_STEPS as f64;
    let obstacle = (0..=N_STEPS)
        .map(|n| GridFunction::from_fn(grid, |x| psi(x, n as f64 * dt)))
        .collect();
    PenalizedProblem::new(
        LerayLionsOperator::p_laplacian(grid, 2.0, 0.0).unwrap(),
        SpectralNoiseModel::silent(grid),
        eps,
        0.25,
        obstacle,
        vec![GridFunction::constant(grid, f); N_STEPS + 1],
        GridFunction::from_fn(grid, u0),
        InitialPolicy::Reject,
    )
    .unwrap()
}

fn inactive() -> PenalizedProblem {
    heat(|_, _| FAR_BELOW, 1.0, |x| (std::f64::consts::PI * x).sin(), 1e-3)
}

fn single() -> McSettings {
    McSettings::new(1, 0)
}

#[test]
fn l1_identical_data_is_trivially_contractive() {
    let pr = inactive();
    let u = pr.initial().clone();
    let r = l1_contraction_test(&pr, &u, &u, &single()).unwrap();
    assert!(r.pass());
    assert_eq!(r.value("max-l1-distance"), Some(0.0));
}

#[test]
fn l1_heat_flow_contracts() {
    let pr = inactive();
    let u1 = GridFunction::from_fn(*pr.grid(), |x| (3.0 * std::f64::consts::PI * x).sin());
    let u2 = GridFunction::from_fn(*pr.grid(), |x| x * (1.0 - x));
    let r = l1_contraction_test(&pr, &u1, &u2, &single()).unwrap();
    assert!(r.value("max-mean-l1-ratio").unwrap() <= 1.0 + 1e-10);
    assert!(r.pass());
}

#[test]
fn monotonicity_equal_and_inactive_cases() {
    let pr = inactive();
    let r = epsilon_monotonicity_test(&pr, &[1e-2, 1e-2], &single()).unwrap();
    assert_eq!(r.quantities[0].value, 0.0);
    let r = epsilon_monotonicity_test(&pr, &[1e-1, 1e-2, 1e-3], &single()).unwrap();
    for q in &r.quantities {
        assert!(q.value <= pr.newton().tol, "{}: {}", q.name, q.value);
    }
}

#[test]
fn decay_is_vacuous_when_inactive() {
    let d = penalty_decay_test(&inactive(), &[1e-1, 1e-2, 1e-3], &single()).unwrap();
    assert!(d.fit.vacuous);
    assert!(d.report.pass());
}

#[test]
fn decay_needs_two_decades() {
    assert!(penalty_decay_test(&inactive(), &[1e-1, 5e-2, 2e-2], &single()).is_err());
    assert!(penalty_decay_test(&inactive(), &[1e-1, 1e-3], &single()).is_err());
}

fn active() -> PenalizedProblem {
    heat(|_, _| 0.0, -5.0, |x| 0.2 * (std::f64::consts::PI * x).sin(), 1e-3)
}

#[test]
fn complementarity_inactive_is_zero() {
    let r = complementarity_test(&inactive(), 1e-3, &single()).unwrap();
    assert_eq!(r.value("rho-pairing"), Some(0.0));
    assert!(r.pass());
}

#[test]
fn complementarity_identity_when_active() {
    let r = complementarity_test(&active(), 1e-3, &single()).unwrap();
    assert!(r.value("rho-pairing").unwrap() > 0.0);
    assert!(r.value("identity-rel-error").unwrap() <= 1e-10);
    assert!(r.pass(), "{r:?}");
}

#[test]
fn lewy_stampacchia_inactive_is_vacuous() {
    let ls = lewy_stampacchia_test(&inactive(), &[1e-2, 1e-3, 1e-4], &single()).unwrap();
    assert!(ls.report.pass(), "{:?}", ls.report);
    assert!(ls.fit.vacuous);
}

#[test]
fn decay_rate_for_the_deterministic_heat_case() {
    let d = penalty_decay_test(&active(), &[1e-1, 1e-2, 1e-3, 1e-4], &single()).unwrap();
    assert!(!d.fit.vacuous);
    assert!(d.fit.slope >= 0.7, "slope {}", d.fit.slope);
    assert!(d.report.pass(), "{:?}", d.report);
}

#[test]
fn oracle_inactive_matches_implicit_euler() {
    let r = oracle_heat_obstacle_test(&inactive(), &[1e-3, 5e-4], &PsorSettings::default()).unwrap();
    assert_eq!(r.value("obstacle-active"), Some(0.0));
    assert!(r.value("inactive-distance").unwrap() <= 1e-9);
    assert!(r.pass());
}

#[test]
fn oracle_clamps_at_zero_and_halves_with_epsilon() {
    let eps = [1e-5, 5e-6, 2.5e-6];
    let r = oracle_heat_obstacle_test(&active(), &eps, &PsorSettings::default()).unwrap();
    assert_eq!(r.value("obstacle-active"), Some(1.0));
    assert!(r.pass(), "{r:?}");
    let ratio = r.value("distance-ratio[5e-6]").unwrap();
    assert!((0.3..=0.8).contains(&ratio), "{ratio}");
}

#[test]
fn oracle_rejects_nonlinear_or_noisy_problems() {
    let pr = active();
    let grid = *pr.grid();
    let nonlinear = PenalizedProblem::new(
        LerayLionsOperator::p_laplacian(grid, 2.5, 0.0).unwrap(),
        SpectralNoiseModel::silent(grid),
        1e-3,
        0.25,
        (0..=N_STEPS).map(|n| pr.obstacle(n).clone()).collect(),
        (0..=N_STEPS).map(|n| pr.source(n).clone()).collect(),
        pr.initial().clone(),
        InitialPolicy::Reject,
    )
    .unwrap();
    assert!(oracle_heat_obstacle_test(&nonlinear, &[1e-3, 5e-4], &PsorSettings::default()).is_err());
}

#[test]
fn parallel_matches_serial() {
    let pr = active();
    let serial = complementarity_test(&pr, 1e-3, &McSettings::new(6, 4)).unwrap();
    let parallel = complementarity_test(&pr, 1e-3, &McSettings::new(6, 4).with_workers(3)).unwrap();
    assert_eq!(serial, parallel);
}
