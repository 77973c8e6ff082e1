use std::sync::Arc;

use obstacle_core::leray_lions::LerayLionsOperator;
use obstacle_core::mesh::{gradient, inner_product, norm_l2_sq, Grid, GridFunction};
use obstacle_core::noise::{geometric_weights, power_law_spectrum, sample_path, sine_basis, LinearRule, SpectralNoiseModel};
use obstacle_core::solver::{compute_h, solve_path, InitialPolicy, NewtonSettings, PenalizedProblem};
use obstacle_core::Error;

const N_STEPS: usize = 40;

fn noise(grid: Grid, modes: usize) -> SpectralNoiseModel {
    if modes == 0 {
        return SpectralNoiseModel::silent(grid);
    }
    let additive = sine_basis(grid, modes)
        .into_iter()
        .zip(geometric_weights(modes, 0.05))
        .map(|(e, a)| e.scale(a))
        .collect();
    SpectralNoiseModel::new(
        grid,
        power_law_spectrum(modes, 2.0),
        additive,
        Arc::new(LinearRule::geometric(modes, 0.1)),
        0.05,
        0.1,
    )
    .unwrap()
}

/// Rising bump obstacle under a downward source.
fn problem(p: f64, beta: f64, modes: usize, eps: f64) -> PenalizedProblem {
    let grid = Grid::new(1.0, 32).unwrap();
    let dt = 0.5 / N_STEPS as f64;
    let obstacle = (0..=N_STEPS)
        .map(|n| {
            let t = n as f64 * dt;
            GridFunction::from_fn(grid, |x| -0.05 + (0.15 + 0.1 * t) * (std::f64::consts::PI * x).sin().powi(2))
        })
        .collect::<Vec<_>>();
    let source = vec![GridFunction::constant(grid, -2.0); N_STEPS + 1];
    let initial = obstacle[0].map(|v| v + 0.05);
    PenalizedProblem::new(
        LerayLionsOperator::p_laplacian(grid, p, beta).unwrap(),
        noise(grid, modes),
        eps,
        0.5,
        obstacle,
        source,
        initial,
        InitialPolicy::Reject,
    )
    .unwrap()
}

#[test]
fn discrete_energy_identity_for_the_heat_case() {
    // 2⟨u₁ − u₀, u₁⟩ = ‖u₁‖² − ‖u₀‖² + ‖u₁ − u₀‖² with the step equation
    // u₁ − u₀ = dt (Δu₁ + (1/ε)(u₁ − ψ)⁻ + f) and ⟨−Δu, u⟩ = ‖∇u‖².
    let pr = problem(2.0, 0.0, 0, 1e-3);
    let path = sample_path(0, N_STEPS, pr.dt(), 0).unwrap();
    let sol = solve_path(&pr, &path).unwrap();
    let dt = pr.dt();
    let eps = pr.epsilon();
    let mut contact = false;
    for n in 0..N_STEPS {
        let (u0, u1) = (&sol.u[n], &sol.u[n + 1]);
        let psi = pr.obstacle(n + 1);
        let pen = u1.sub(psi).unwrap().negative_part().scale(1.0 / eps);
        contact |= pen.max_value() > 0.0;
        let lhs = norm_l2_sq(u1) - norm_l2_sq(u0) + norm_l2_sq(&u1.sub(u0).unwrap())
            + 2.0 * dt * gradient(u1).dot(&gradient(u1)).unwrap();
        let rhs = 2.0 * dt * inner_product(&pr.source(n + 1).add(&pen).unwrap(), u1).unwrap();
        let budget = 2.0 * dt * pr.newton().tol * (1.0 + norm_l2_sq(u0).sqrt()) * norm_l2_sq(u1).sqrt() + 1e-12;
        assert!((lhs - rhs).abs() <= budget, "step {n}: {lhs} vs {rhs}");
    }
    assert!(contact, "the obstacle should be active");
}

#[test]
fn penalty_algebra_holds_on_every_step() {
    let pr = problem(2.5, 0.5, 4, 1e-3);
    let path = sample_path(9, N_STEPS, pr.dt(), 4).unwrap();
    let sol = solve_path(&pr, &path).unwrap();
    let mut touched = false;
    for n in 0..=N_STEPS {
        let gap = sol.u[n].sub(pr.obstacle(n)).unwrap();
        let rho = &sol.rho[n];
        let pairing = inner_product(rho, &gap).unwrap();
        let energy = pr.epsilon() * norm_l2_sq(rho);
        assert!((pairing - energy).abs() <= 1e-12 * energy.abs().max(1e-300), "step {n}");
        for (r, g) in rho.values().iter().zip(gap.values()) {
            assert!(*r <= 0.0);
            assert_eq!(r * g.max(0.0), 0.0);
            // Active set: ρ is non-zero exactly where u < ψ.
            assert_eq!(*r != 0.0, *g < 0.0);
            touched |= *g < 0.0;
        }
    }
    assert!(touched);
}

#[test]
fn obstacle_residual_parts_are_disjoint() {
    let pr = problem(2.5, 0.5, 4, 1e-2);
    let path = sample_path(2, N_STEPS, pr.dt(), 4).unwrap();
    let h = compute_h(&pr, &path).unwrap();
    for (hn, hm) in h.h.iter().zip(&h.h_minus) {
        for (v, m) in hn.values().iter().zip(hm.values()) {
            let plus = v.max(0.0);
            assert!(*m >= 0.0);
            assert_eq!(plus * m, 0.0);
            assert_eq!(plus - m, *v);
        }
    }
}

#[test]
fn solutions_are_deterministic_and_seed_dependent() {
    let pr = problem(2.5, 0.5, 4, 1e-2);
    let a = solve_path(&pr, &sample_path(1, N_STEPS, pr.dt(), 4).unwrap()).unwrap();
    let b = solve_path(&pr, &sample_path(1, N_STEPS, pr.dt(), 4).unwrap()).unwrap();
    let c = solve_path(&pr, &sample_path(2, N_STEPS, pr.dt(), 4).unwrap()).unwrap();
    assert_eq!(a.u, b.u);
    assert_eq!(a.rho, b.rho);
    assert_ne!(a.u[N_STEPS], c.u[N_STEPS]);
}

#[test]
fn comparison_principle_on_common_noise() {
    let base = problem(2.5, 0.5, 4, 1e-3);
    let lo = base.initial().clone();
    let hi = lo.map(|v| v + 0.2);
    let p_lo = base.with_initial(lo, InitialPolicy::Reject).unwrap();
    let p_hi = base.with_initial(hi, InitialPolicy::Reject).unwrap();
    let tol = 10.0 * (base.dt() + base.newton().tol);
    for seed in 0..8 {
        let path = sample_path(seed, N_STEPS, base.dt(), 4).unwrap();
        let a = solve_path(&p_lo, &path).unwrap();
        let b = solve_path(&p_hi, &path).unwrap();
        for (x, y) in a.u.iter().zip(&b.u) {
            assert!(x.sub(y).unwrap().max_value() <= tol);
        }
    }
}

#[test]
fn newton_failure_reports_the_step() {
    let pr = problem(2.5, 0.5, 0, 1e-4).with_newton(NewtonSettings {
        tol: 1e-15,
        max_iter: 1,
        ..NewtonSettings::default()
    });
    let path = sample_path(0, N_STEPS, pr.dt(), 0).unwrap();
    match solve_path(&pr, &path) {
        Err(Error::StepFailed { step, .. }) => assert_eq!(step, 0),
        other => panic!("expected a step failure, got {other:?}"),
    }
}
