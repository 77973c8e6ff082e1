//! Truncated Q-Wiener noise and the noise operator `G(u) = g + σ(u)`.
//!
//! The driving process is `W = Σ_k √λ_k e_k β_k` with independent scalar
//! Brownian motions `β_k`. One Euler–Maruyama increment of the stochastic
//! integral is `G(u) ΔW = Σ_k √λ_k (g_k + h_k(·, u(·))) Δβ_k`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::error::{Error, Result};
use crate::mesh::{norm_l2_sq, Grid, GridFunction};
use crate::report::{CheckOutcome, ValidationReport};

/// Coefficient functions `h_k(x, s)` of the multiplicative part `σ`.
///
/// Implementations must satisfy `h_k(x, 0) = 0`.
pub trait MultiplicativeRule: Send + Sync {
    /// `k` is zero-based.
    fn eval(&self, k: usize, x: f64, s: f64) -> f64;
}

/// `h_k(x, s) = c_k s`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearRule {
    pub coeffs: Vec<f64>,
}

impl LinearRule {
    /// Geometric weights `c_k ∝ 2^{-k/2}` normalized so that `Σ c_k² = c_sigma`.
    pub fn geometric(modes: usize, c_sigma: f64) -> Self {
        LinearRule {
            coeffs: geometric_weights(modes, c_sigma),
        }
    }

    pub fn sum_sq(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum()
    }
}

impl MultiplicativeRule for LinearRule {
    fn eval(&self, k: usize, _x: f64, s: f64) -> f64 {
        self.coeffs[k] * s
    }
}

/// Weights `w_k = sqrt(total) 2^{-k/2} / sqrt(1 - 2^{-K})`, `k = 1..K`, so
/// that `Σ w_k² = total` exactly in exact arithmetic.
pub fn geometric_weights(modes: usize, total: f64) -> Vec<f64> {
    if modes == 0 {
        return Vec::new();
    }
    let norm = (1.0 - 0.5f64.powi(modes as i32)).sqrt();
    (1..=modes)
        .map(|k| total.sqrt() * 0.5f64.powf(k as f64 / 2.0) / norm)
        .collect()
}

/// Normalized Dirichlet sine basis `e_k(x) = sqrt(2/L) sin(kπx/L)`, `k = 1..K`.
pub fn sine_basis(grid: Grid, modes: usize) -> Vec<GridFunction> {
    let l = grid.length();
    let scale = (2.0 / l).sqrt();
    (1..=modes)
        .map(|k| GridFunction::from_fn(grid, |x| scale * (k as f64 * PI * x / l).sin()))
        .collect()
}

/// Power-law spectrum `λ_k = k^{-γ}`.
pub fn power_law_spectrum(modes: usize, gamma: f64) -> Vec<f64> {
    (1..=modes).map(|k| (k as f64).powf(-gamma)).collect()
}

#[derive(Clone)]
pub struct SpectralNoiseModel {
    grid: Grid,
    eigenvalues: Vec<f64>,
    basis: Vec<GridFunction>,
    additive: Vec<GridFunction>,
    rule: Arc<dyn MultiplicativeRule>,
    c_g: f64,
    c_sigma: f64,
}

impl fmt::Debug for SpectralNoiseModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SpectralNoiseModel")
            .field("grid", &self.grid)
            .field("modes", &self.modes())
            .field("eigenvalues", &self.eigenvalues)
            .field("c_g", &self.c_g)
            .field("c_sigma", &self.c_sigma)
            .finish_non_exhaustive()
    }
}

impl SpectralNoiseModel {
    pub fn new(
        grid: Grid,
        eigenvalues: Vec<f64>,
        additive: Vec<GridFunction>,
        rule: Arc<dyn MultiplicativeRule>,
        c_g: f64,
        c_sigma: f64,
    ) -> Result<Self> {
        let modes = eigenvalues.len();
        if let Some(k) = eigenvalues.iter().position(|l| !(l.is_finite() && *l >= 0.0)) {
            return Err(Error::InvalidConfig(format!(
                "eigenvalue {} must be finite and non-negative",
                k + 1
            )));
        }
        if additive.len() != modes {
            return Err(Error::Shape {
                expected: modes,
                found: additive.len(),
            });
        }
        if additive.iter().any(|g| *g.grid() != grid) {
            return Err(Error::GridMismatch);
        }
        if !(c_g.is_finite() && c_g >= 0.0 && c_sigma.is_finite() && c_sigma >= 0.0) {
            return Err(Error::InvalidConfig(
                "noise constants C_g and C_sigma must be non-negative".into(),
            ));
        }
        let g_hs: f64 = additive.iter().map(norm_l2_sq).sum();
        if g_hs > c_g * (1.0 + 1e-12) + 1e-300 {
            return Err(Error::InvalidConfig(format!(
                "additive noise HS norm {g_hs} exceeds C_g = {c_g}"
            )));
        }
        for k in 0..modes {
            for x in grid.nodes() {
                if rule.eval(k, x, 0.0) != 0.0 {
                    return Err(Error::InvalidConfig(format!(
                        "multiplicative coefficient h_{} does not vanish at s = 0 (x = {x})",
                        k + 1
                    )));
                }
            }
        }
        Ok(SpectralNoiseModel {
            grid,
            basis: sine_basis(grid, modes),
            eigenvalues,
            additive,
            rule,
            c_g,
            c_sigma,
        })
    }

    /// Model with `K = 0`: every path reduces to the deterministic equation.
    pub fn silent(grid: Grid) -> Self {
        SpectralNoiseModel {
            grid,
            eigenvalues: Vec::new(),
            basis: Vec::new(),
            additive: Vec::new(),
            rule: Arc::new(LinearRule { coeffs: Vec::new() }),
            c_g: 0.0,
            c_sigma: 0.0,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn modes(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn basis(&self) -> &[GridFunction] {
        &self.basis
    }

    pub fn additive(&self) -> &[GridFunction] {
        &self.additive
    }

    pub fn rule(&self) -> &dyn MultiplicativeRule {
        self.rule.as_ref()
    }

    pub fn c_g(&self) -> f64 {
        self.c_g
    }

    pub fn c_sigma(&self) -> f64 {
        self.c_sigma
    }

    pub fn trace(&self) -> f64 {
        self.eigenvalues.iter().sum()
    }

    /// `h_k(x_i, u_i)` at every node.
    fn sigma_mode(&self, k: usize, u: &GridFunction) -> impl Iterator<Item = f64> + '_ {
        let grid = self.grid;
        let vals: Vec<f64> = u
            .values()
            .iter()
            .enumerate()
            .map(|(i, &s)| self.rule.eval(k, grid.node(i), s))
            .collect();
        vals.into_iter()
    }
}

/// Independent Brownian increments `Δβ[step][k] ~ N(0, dt)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisePath {
    pub steps: usize,
    pub dt: f64,
    pub seed: u64,
    pub increments: Vec<Vec<f64>>,
}

impl NoisePath {
    pub fn modes(&self) -> usize {
        self.increments.first().map_or(0, Vec::len)
    }

    pub fn step(&self, n: usize) -> &[f64] {
        &self.increments[n]
    }
}

pub fn sample_path(seed: u64, steps: usize, dt: f64, modes: usize) -> Result<NoisePath> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidConfig(format!("time step must be positive, got {dt}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, dt.sqrt()).expect("positive std dev");
    let increments = (0..steps)
        .map(|_| (0..modes).map(|_| normal.sample(&mut rng)).collect())
        .collect();
    Ok(NoisePath {
        steps,
        dt,
        seed,
        increments,
    })
}

/// One-step Itô increment `G(u) ΔW = Σ_k √λ_k (g_k + h_k(·, u)) Δβ_k`.
pub fn apply_noise(
    model: &SpectralNoiseModel,
    u: &GridFunction,
    dbeta: &[f64],
) -> Result<GridFunction> {
    if *u.grid() != model.grid {
        return Err(Error::GridMismatch);
    }
    if dbeta.len() != model.modes() {
        return Err(Error::Shape {
            expected: model.modes(),
            found: dbeta.len(),
        });
    }
    let mut out = vec![0.0; u.len()];
    for (k, (&lambda, &db)) in model.eigenvalues.iter().zip(dbeta).enumerate() {
        let w = lambda.sqrt() * db;
        if w == 0.0 {
            continue;
        }
        let g = model.additive[k].values();
        for ((o, gk), hk) in out.iter_mut().zip(g).zip(model.sigma_mode(k, u)) {
            *o += w * (gk + hk);
        }
    }
    Ok(GridFunction::from_raw(model.grid, out))
}

/// `Σ_k λ_k ‖g_k + h_k(·, u)‖²_{L²}`.
pub fn hs_norm_sq(model: &SpectralNoiseModel, u: &GridFunction) -> Result<f64> {
    if *u.grid() != model.grid {
        return Err(Error::GridMismatch);
    }
    let dx = model.grid.dx();
    let mut total = 0.0;
    for (k, &lambda) in model.eigenvalues.iter().enumerate() {
        let s: f64 = model.additive[k]
            .values()
            .iter()
            .zip(model.sigma_mode(k, u))
            .map(|(g, h)| (g + h) * (g + h))
            .sum();
        total += lambda * s * dx;
    }
    Ok(total)
}

/// Sample points `(x, λ, μ)` used by [`check_sigma_lipschitz`].
pub fn lipschitz_samples(grid: &Grid, n_samples: usize, seed: u64) -> Vec<(f64, f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let value = Uniform::new_inclusive(-10.0, 10.0).expect("valid range");
    let corners = [0.0, 1e-8, -1e-8, 1.0, -1.0, 1e3, -1e3];
    let mut out = Vec::with_capacity(n_samples + corners.len() * corners.len());
    for &a in &corners {
        for &b in &corners {
            if a != b {
                out.push((grid.node(0), a, b));
            }
        }
    }
    for _ in 0..n_samples {
        let i = rng.random_range(0..grid.n_nodes());
        out.push((grid.node(i), value.sample(&mut rng), value.sample(&mut rng)));
    }
    out
}

/// Worst ratio `Σ_k |h_k(x,λ) − h_k(x,μ)|² / |λ − μ|²` over a sample cloud,
/// compared against `C_σ`.
pub fn check_sigma_lipschitz(
    model: &SpectralNoiseModel,
    n_samples: usize,
    seed: u64,
) -> Result<ValidationReport> {
    if n_samples == 0 {
        return Err(Error::InvalidConfig("n_samples must be >= 1".into()));
    }
    let samples = lipschitz_samples(&model.grid, n_samples, seed);
    let threshold = model.c_sigma * (1.0 + 1e-12);
    let mut worst = 0.0f64;
    let mut violations = 0;
    for &(x, lam, mu) in &samples {
        let d = lam - mu;
        if d == 0.0 {
            continue;
        }
        let num: f64 = (0..model.modes())
            .map(|k| {
                let diff = model.rule.eval(k, x, lam) - model.rule.eval(k, x, mu);
                diff * diff
            })
            .sum();
        let ratio = num / (d * d);
        // Evaluating h at nearby states cancels digits in the difference.
        let cancel = 1.0 + 8.0 * f64::EPSILON * (lam.abs() + mu.abs()) / d.abs();
        if ratio > threshold * cancel * cancel {
            violations += 1;
        }
        worst = worst.max(ratio);
    }
    Ok(ValidationReport {
        name: "sigma-lipschitz".into(),
        n_samples: samples.len(),
        checks: vec![CheckOutcome {
            name: "sigma-lipschitz".into(),
            samples: samples.len(),
            worst,
            threshold,
            violations,
            pass: violations == 0,
        }],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_grid, norm_lp};

    fn grid() -> Grid {
        build_grid(1.0, 16).unwrap()
    }

    fn linear_model(modes: usize, c_sigma: f64, with_g: bool) -> SpectralNoiseModel {
        let g = grid();
        let additive = if with_g {
            let w = geometric_weights(modes, 0.2);
            sine_basis(g, modes)
                .into_iter()
                .zip(w)
                .map(|(e, a)| e.scale(a))
                .collect()
        } else {
            vec![GridFunction::zeros(g); modes]
        };
        SpectralNoiseModel::new(
            g,
            power_law_spectrum(modes, 2.0),
            additive,
            Arc::new(LinearRule::geometric(modes, c_sigma)),
            0.2,
            c_sigma,
        )
        .unwrap()
    }

    #[test]
    fn sine_basis_is_orthonormal() {
        let g = build_grid(1.0, 32).unwrap();
        let basis = sine_basis(g, 5);
        for (a, ea) in basis.iter().enumerate() {
            for (b, eb) in basis.iter().enumerate() {
                let ip = crate::mesh::inner_product(ea, eb).unwrap();
                let expected = if a == b { 1.0 } else { 0.0 };
                assert!((ip - expected).abs() < 1e-12, "({a},{b}) -> {ip}");
            }
        }
    }

    #[test]
    fn geometric_weights_sum_to_total() {
        let w = geometric_weights(8, 0.3);
        let s: f64 = w.iter().map(|c| c * c).sum();
        assert!((s - 0.3).abs() < 1e-15);
        assert!(geometric_weights(0, 1.0).is_empty());
    }

    #[test]
    fn sample_path_zero_modes_and_determinism() {
        let p = sample_path(7, 10, 0.1, 0).unwrap();
        assert!(p.increments.iter().all(Vec::is_empty));
        let a = sample_path(42, 50, 0.01, 3).unwrap();
        let b = sample_path(42, 50, 0.01, 3).unwrap();
        assert_eq!(a, b);
        let c = sample_path(43, 50, 0.01, 3).unwrap();
        assert_ne!(a.increments, c.increments);
        assert!(matches!(sample_path(1, 5, 0.0, 2), Err(Error::InvalidConfig(_))));
        assert!(matches!(sample_path(1, 5, -1.0, 2), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn sample_path_moments_single_mode() {
        let n = 100_000;
        let dt = 0.01;
        let p = sample_path(2024, n, dt, 1).unwrap();
        let xs: Vec<f64> = p.increments.iter().map(|r| r[0]).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!(mean.abs() <= 4.0 * (dt / n as f64).sqrt(), "mean {mean}");
        assert!((var - dt).abs() <= 0.05 * dt, "var {var}");
    }

    #[test]
    fn apply_noise_zero_state_and_zero_additive() {
        let m = linear_model(4, 0.5, false);
        let u = GridFunction::zeros(*m.grid());
        let out = apply_noise(&m, &u, &[0.3, -0.1, 2.0, 0.7]).unwrap();
        assert!(out.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn apply_noise_single_constant_mode() {
        let g = grid();
        let m = SpectralNoiseModel::new(
            g,
            vec![1.0],
            vec![GridFunction::constant(g, 1.0)],
            Arc::new(LinearRule { coeffs: vec![0.0] }),
            1.0,
            0.0,
        )
        .unwrap();
        let u = GridFunction::from_fn(g, |x| x * x);
        let out = apply_noise(&m, &u, &[0.3]).unwrap();
        assert!(out.values().iter().all(|&v| (v - 0.3).abs() < 1e-15));
    }

    #[test]
    fn apply_noise_shape_errors() {
        let m = linear_model(3, 0.5, true);
        let u = GridFunction::zeros(*m.grid());
        assert!(matches!(
            apply_noise(&m, &u, &[0.1, 0.2]),
            Err(Error::Shape { expected: 3, found: 2 })
        ));
        let other = GridFunction::zeros(build_grid(1.0, 8).unwrap());
        assert!(matches!(apply_noise(&m, &other, &[0.0; 3]), Err(Error::GridMismatch)));
    }

    #[test]
    fn apply_noise_lipschitz_bound_on_random_fields() {
        let m = linear_model(6, 0.4, true);
        let g = *m.grid();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let u = GridFunction::from_fn(g, |_| rng.random_range(-3.0..3.0));
            let v = GridFunction::from_fn(g, |_| rng.random_range(-3.0..3.0));
            let db: Vec<f64> = (0..6).map(|_| rng.random_range(-0.5..0.5)).collect();
            let lhs = norm_lp(
                &apply_noise(&m, &u, &db).unwrap().sub(&apply_noise(&m, &v, &db).unwrap()).unwrap(),
                2.0,
            )
            .unwrap();
            // Independent evaluation of the bound.
            let coeffs = geometric_weights(6, 0.4);
            let lam_c: f64 = power_law_spectrum(6, 2.0)
                .iter()
                .zip(&coeffs)
                .map(|(l, c)| l * c * c)
                .sum();
            let db_norm = db.iter().map(|x| x * x).sum::<f64>().sqrt();
            let rhs = lam_c.sqrt() * db_norm * norm_lp(&u.sub(&v).unwrap(), 2.0).unwrap();
            assert!(lhs <= rhs * (1.0 + 1e-12) + 1e-15, "{lhs} > {rhs}");
        }
    }

    #[test]
    fn apply_noise_is_linear_in_increments() {
        let m = linear_model(3, 0.3, true);
        let g = *m.grid();
        let u = GridFunction::from_fn(g, |x| (5.0 * x).cos());
        let a = [0.1, -0.2, 0.05];
        let b = [-0.3, 0.4, 0.2];
        let ab: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 2.0 * x + y).collect();
        let lhs = apply_noise(&m, &u, &ab).unwrap();
        let rhs = apply_noise(&m, &u, &a)
            .unwrap()
            .scale(2.0)
            .add(&apply_noise(&m, &u, &b).unwrap())
            .unwrap();
        for (l, r) in lhs.values().iter().zip(rhs.values()) {
            assert!((l - r).abs() < 1e-14);
        }
    }

    #[test]
    fn hs_norm_closed_form_for_linear_rule() {
        let m = linear_model(5, 0.7, false);
        let g = *m.grid();
        assert_eq!(hs_norm_sq(&m, &GridFunction::zeros(g)).unwrap(), 0.0);
        let u = GridFunction::from_fn(g, |x| x - 0.3);
        let expected: f64 = power_law_spectrum(5, 2.0)
            .iter()
            .zip(geometric_weights(5, 0.7))
            .map(|(l, c)| l * c * c)
            .sum::<f64>()
            * norm_l2_sq(&u);
        assert!((hs_norm_sq(&m, &u).unwrap() - expected).abs() < 1e-14);
    }

    #[test]
    fn hs_norm_matches_per_mode_sum() {
        let m = linear_model(4, 0.5, true);
        let g = *m.grid();
        let u = GridFunction::from_fn(g, |x| (7.0 * x).sin());
        let coeffs = geometric_weights(4, 0.5);
        let mut oracle = 0.0;
        for k in 0..4 {
            let lam = ((k + 1) as f64).powf(-2.0);
            for i in 0..g.n_nodes() {
                let v = m.additive()[k].values()[i] + coeffs[k] * u.values()[i];
                oracle += lam * v * v * g.dx();
            }
        }
        assert!((hs_norm_sq(&m, &u).unwrap() - oracle).abs() < 1e-13);
    }

    #[test]
    fn sigma_lipschitz_equality_case_passes() {
        let m = linear_model(8, 0.25, false);
        let r = check_sigma_lipschitz(&m, 500, 9).unwrap();
        assert!(r.pass());
        assert!((r.checks[0].worst - 0.25).abs() < 1e-12);
    }

    #[test]
    fn sigma_lipschitz_detects_scaled_rule() {
        let g = grid();
        let mut rule = LinearRule::geometric(4, 0.25);
        rule.coeffs.iter_mut().for_each(|c| *c *= 2.0);
        let m = SpectralNoiseModel::new(
            g,
            power_law_spectrum(4, 2.0),
            vec![GridFunction::zeros(g); 4],
            Arc::new(rule),
            0.0,
            0.25,
        )
        .unwrap();
        let r = check_sigma_lipschitz(&m, 200, 1).unwrap();
        assert!(!r.pass());
        assert!((r.checks[0].worst - 1.0).abs() < 1e-12);
    }

    struct Tabled {
        slopes: Vec<f64>,
    }

    impl MultiplicativeRule for Tabled {
        fn eval(&self, k: usize, x: f64, s: f64) -> f64 {
            // bounded slope in s, x-dependent: c_k (1 + x/2) tanh(s)
            self.slopes[k] * (1.0 + 0.5 * x) * s.tanh()
        }
    }

    #[test]
    fn sigma_lipschitz_matches_brute_force_scan() {
        let g = grid();
        let slopes = vec![0.3, -0.2, 0.1];
        let m = SpectralNoiseModel::new(
            g,
            power_law_spectrum(3, 2.0),
            vec![GridFunction::zeros(g); 3],
            Arc::new(Tabled { slopes: slopes.clone() }),
            0.0,
            0.1,
        )
        .unwrap();
        let r = check_sigma_lipschitz(&m, 300, 77).unwrap();
        let mut worst = 0.0f64;
        for (x, a, b) in lipschitz_samples(&g, 300, 77) {
            if a == b {
                continue;
            }
            let mut num = 0.0;
            for c in &slopes {
                let d = c * (1.0 + 0.5 * x) * (a.tanh() - b.tanh());
                num += d * d;
            }
            worst = worst.max(num / ((a - b) * (a - b)));
        }
        assert!((r.checks[0].worst - worst).abs() <= 1e-14 * worst.max(1.0));
        assert_eq!(r.pass(), worst <= 0.1 * (1.0 + 1e-12));
    }

    #[test]
    fn rejects_rule_not_vanishing_at_zero() {
        struct Shifted;
        impl MultiplicativeRule for Shifted {
            fn eval(&self, _k: usize, _x: f64, s: f64) -> f64 {
                s + 1.0
            }
        }
        let g = grid();
        let err = SpectralNoiseModel::new(
            g,
            vec![1.0],
            vec![GridFunction::zeros(g)],
            Arc::new(Shifted),
            0.0,
            1.0,
        );
        assert!(matches!(err, Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn rejects_additive_above_cg() {
        let g = grid();
        let err = SpectralNoiseModel::new(
            g,
            vec![1.0],
            vec![GridFunction::constant(g, 2.0)],
            Arc::new(LinearRule { coeffs: vec![0.0] }),
            1.0,
            0.0,
        );
        assert!(matches!(err, Err(Error::InvalidConfig(_))));
    }
}
