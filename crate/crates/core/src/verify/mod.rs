//! Monte Carlo property suites for the penalized scheme.
//!
//! Every suite fans out over paths with seeds `base_seed + path_index`,
//! collects per-path values in path order and reduces them sequentially, so
//! results do not depend on the worker count.

pub mod psor;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{inner_product, negative_part, norm_l1, norm_l2_sq, GridFunction};
use crate::noise::{sample_path, NoisePath};
use crate::report::{PropertyReport, Quantity};
use crate::solver::{compute_h, solve_path, InitialPolicy, PathSolution, PenalizedProblem};
use crate::stats::{estimate_expectation, linear_fit, Estimate};

pub use psor::{projected_implicit_euler, PsorSettings};

/// Additive slack of the weak-form reflection bound.
pub const WEAK_FORM_TOL: f64 = 1e-8;
/// Relative tolerance of the exact complementarity identity.
pub const IDENTITY_REL_TOL: f64 = 1e-10;
/// Minimal log–log slope of the constraint violation.
pub const MIN_DECAY_SLOPE: f64 = 0.7;
/// Inactive-obstacle agreement with the PSOR oracle.
pub const INACTIVE_ORACLE_TOL: f64 = 1e-9;
/// Additive slack of the active-obstacle oracle bound.
pub const ORACLE_SLACK: f64 = 5e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McSettings {
    pub n_paths: usize,
    pub base_seed: u64,
    /// Worker threads; `1` runs serially.
    pub workers: usize,
}

impl McSettings {
    pub fn new(n_paths: usize, base_seed: u64) -> Self {
        McSettings {
            n_paths,
            base_seed,
            workers: 1,
        }
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = workers.max(1);
        self
    }

    pub fn path_seed(&self, index: usize) -> u64 {
        self.base_seed.wrapping_add(index as u64)
    }
}

/// Runs `f(path_index, path)` for every path and returns results in path order.
pub fn map_paths<T, F>(problem: &PenalizedProblem, mc: &McSettings, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize, &NoisePath) -> Result<T> + Sync + Send,
{
    if mc.n_paths == 0 {
        return Err(Error::InvalidConfig("n_paths must be >= 1".into()));
    }
    let run = |i: usize| -> Result<T> {
        let path = sample_path(mc.path_seed(i), problem.n_steps(), problem.dt(), problem.noise().modes())?;
        f(i, &path)
    };
    if mc.workers <= 1 {
        return (0..mc.n_paths).map(run).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(mc.workers)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    pool.install(|| (0..mc.n_paths).into_par_iter().map(run).collect())
}

/// Log–log fit of a measured quantity against ε.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub name: String,
    pub eps: Vec<f64>,
    pub values: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    pub residual: f64,
    /// All measured values vanished; no slope can be fitted.
    pub vacuous: bool,
}

impl RateFit {
    /// Fits `log value = slope · log ε + intercept` over the positive values.
    pub fn fit(name: impl Into<String>, eps: &[f64], values: &[f64]) -> Result<Self> {
        check_eps_list(eps, 3, true)?;
        let pts: Vec<(f64, f64)> = eps
            .iter()
            .zip(values)
            .filter(|(_, v)| **v > 0.0)
            .map(|(e, v)| (e.ln(), v.ln()))
            .collect();
        let name = name.into();
        if pts.len() < 2 {
            return Ok(RateFit {
                name,
                eps: eps.to_vec(),
                values: values.to_vec(),
                slope: f64::NAN,
                intercept: f64::NAN,
                residual: f64::NAN,
                vacuous: true,
            });
        }
        let x: Vec<f64> = pts.iter().map(|p| p.0).collect();
        let y: Vec<f64> = pts.iter().map(|p| p.1).collect();
        let (slope, intercept, residual) = linear_fit(&x, &y);
        Ok(RateFit {
            name,
            eps: eps.to_vec(),
            values: values.to_vec(),
            slope,
            intercept,
            residual,
            vacuous: false,
        })
    }
}

fn check_eps_list(eps: &[f64], min_len: usize, strict: bool) -> Result<()> {
    if eps.len() < min_len {
        return Err(Error::InvalidConfig(format!(
            "need at least {min_len} epsilon values, got {}",
            eps.len()
        )));
    }
    if eps.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
        return Err(Error::InvalidConfig("epsilon values must be positive".into()));
    }
    let ordered = eps.windows(2).all(|w| if strict { w[0] > w[1] } else { w[0] >= w[1] });
    if !ordered {
        return Err(Error::InvalidConfig("epsilon values must be decreasing".into()));
    }
    Ok(())
}

fn eps_label(e: f64) -> String {
    format!("{e:e}")
}

fn estimate(values: &[f64]) -> Estimate {
    estimate_expectation(values).expect("at least one path")
}

/// Per-path `Σ_n dt ‖h⁻_n‖²`.
fn k1_of_path(problem: &PenalizedProblem, path: &NoisePath) -> Result<f64> {
    let dt = problem.dt();
    Ok(compute_h(problem, path)?
        .h_minus
        .iter()
        .map(|h| dt * norm_l2_sq(h))
        .sum())
}

/// `Σ_{n≥1} dt ‖ρ_n‖²`.
fn rho_energy(sol: &PathSolution, dt: f64) -> f64 {
    sol.rho.iter().skip(1).map(|r| dt * norm_l2_sq(r)).sum()
}

/// `E‖u₁(t) − u₂(t)‖_{L¹} ≤ ‖u₀₁ − u₀₂‖_{L¹}` on common noise.
///
/// Initial data below `ψ(0)` are clamped onto the obstacle.
pub fn l1_contraction_test(
    problem: &PenalizedProblem,
    u01: &GridFunction,
    u02: &GridFunction,
    mc: &McSettings,
) -> Result<PropertyReport> {
    let p1 = problem.with_initial(u01.clone(), InitialPolicy::Clamp)?;
    let p2 = problem.with_initial(u02.clone(), InitialPolicy::Clamp)?;
    let d0 = norm_l1(&p1.initial().sub(p2.initial())?);
    let ordered = p1
        .initial()
        .values()
        .iter()
        .zip(p2.initial().values())
        .all(|(a, b)| a <= b);
    let dt = problem.dt();

    // (L¹ distance per step, max_n max_x (u₁ − u₂))
    let per_path = map_paths(problem, mc, |_, path| {
        let s1 = solve_path(&p1, path)?;
        let s2 = solve_path(&p2, path)?;
        let mut dist = Vec::with_capacity(s1.u.len());
        let mut order_gap = f64::NEG_INFINITY;
        for (a, b) in s1.u.iter().zip(&s2.u) {
            let diff = a.sub(b)?;
            dist.push(norm_l1(&diff));
            order_gap = order_gap.max(diff.max_value());
        }
        Ok((dist, order_gap))
    })?;

    let mut report = PropertyReport::new("l1-contraction", mc.n_paths);
    report.push(Quantity::info("initial-l1-distance", d0, 0.0));
    let steps = problem.n_steps() + 1;
    if d0 == 0.0 {
        let worst = per_path
            .iter()
            .flat_map(|(d, _)| d.iter().copied())
            .fold(0.0f64, f64::max);
        report.push(Quantity::at_most("max-l1-distance", worst, 0.0, 0.0));
        report.raw = per_path.iter().map(|(d, _)| d.iter().copied().fold(0.0, f64::max)).collect();
        return Ok(report);
    }
    let mut best: Option<(usize, Estimate)> = None;
    for n in 0..steps {
        let col: Vec<f64> = per_path.iter().map(|(d, _)| d[n] / d0).collect();
        let est = estimate(&col);
        if best.is_none_or(|(_, b)| est.mean > b.mean) {
            best = Some((n, est));
        }
    }
    let (argmax, est) = best.expect("at least one time level");
    let threshold = 1.0 + 3.0 * est.threshold_stderr() + 10.0 * dt;
    report.push(Quantity::at_most("max-mean-l1-ratio", est.mean, est.ci95, threshold));
    report.push(Quantity::info("argmax-time", argmax as f64 * dt, 0.0));
    let last = estimate(&per_path.iter().map(|(d, _)| d[steps - 1] / d0).collect::<Vec<_>>());
    report.push(Quantity::info("final-mean-l1-ratio", last.mean, last.ci95));
    if ordered {
        let gap = per_path.iter().map(|(_, g)| *g).fold(f64::NEG_INFINITY, f64::max);
        let tol = 10.0 * (dt + problem.newton().tol);
        report.push(Quantity::at_most("order-violation", gap, 0.0, tol));
    }
    report.raw = per_path.iter().map(|(d, _)| d[steps - 1] / d0).collect();
    Ok(report)
}

/// `u_ε ≤ u_δ` for `δ < ε` on common noise.
pub fn epsilon_monotonicity_test(
    problem: &PenalizedProblem,
    eps_list: &[f64],
    mc: &McSettings,
) -> Result<PropertyReport> {
    check_eps_list(eps_list, 2, false)?;
    let problems: Vec<PenalizedProblem> = eps_list
        .iter()
        .map(|&e| problem.with_epsilon(e))
        .collect::<Result<_>>()?;
    let per_path = map_paths(problem, mc, |_, path| {
        let sols: Vec<PathSolution> = problems
            .iter()
            .map(|p| solve_path(p, path))
            .collect::<Result<_>>()?;
        let mut worst = Vec::with_capacity(sols.len() - 1);
        for pair in sols.windows(2) {
            let mut w = f64::NEG_INFINITY;
            for (a, b) in pair[0].u.iter().zip(&pair[1].u) {
                w = w.max(a.sub(b)?.max_value());
            }
            worst.push(w);
        }
        Ok(worst)
    })?;
    let tol = 10.0 * (problem.dt() + problem.newton().tol);
    let mut report = PropertyReport::new("epsilon-monotonicity", mc.n_paths);
    for (j, pair) in eps_list.windows(2).enumerate() {
        let w = per_path.iter().map(|v| v[j]).fold(f64::NEG_INFINITY, f64::max);
        report.push(Quantity::at_most(
            format!("max-violation[{}>{}]", eps_label(pair[0]), eps_label(pair[1])),
            w,
            0.0,
            tol,
        ));
    }
    report.raw = per_path
        .iter()
        .map(|v| v.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .collect();
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltyDecay {
    pub fit: RateFit,
    pub report: PropertyReport,
}

/// `sup_t E‖(u_ε − ψ)⁻‖² = O(ε)` and `E∫‖ρ_ε‖² ≤ K₁ = E∫‖h⁻‖²`.
pub fn penalty_decay_test(
    problem: &PenalizedProblem,
    eps_list: &[f64],
    mc: &McSettings,
) -> Result<PenaltyDecay> {
    check_eps_list(eps_list, 3, true)?;
    if eps_list[0] / eps_list[eps_list.len() - 1] < 100.0 * (1.0 - 1e-12) {
        return Err(Error::InvalidConfig("epsilon list must span at least two decades".into()));
    }
    let problems: Vec<PenalizedProblem> = eps_list
        .iter()
        .map(|&e| problem.with_epsilon(e))
        .collect::<Result<_>>()?;
    let dt = problem.dt();
    // per path: (k1, per-ε (violation² per step, ρ energy))
    let per_path = map_paths(problem, mc, |_, path| {
        let k1 = k1_of_path(problem, path)?;
        let runs = problems
            .iter()
            .map(|p| {
                let s = solve_path(p, path)?;
                let viol: Vec<f64> = s.violation.iter().map(|v| v * v).collect();
                Ok((viol, rho_energy(&s, dt)))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((k1, runs))
    })?;

    let k1 = estimate(&per_path.iter().map(|p| p.0).collect::<Vec<_>>());
    let rho_bound = k1.mean * (1.0 + 3.0 * rel_stderr(&k1));
    let mut report = PropertyReport::new("penalty-decay", mc.n_paths);
    report.push(Quantity::info("k1", k1.mean, k1.ci95));
    let mut sup_values = Vec::with_capacity(eps_list.len());
    for (j, &eps) in eps_list.iter().enumerate() {
        let steps = per_path[0].1[j].0.len();
        let mut sup: f64 = 0.0;
        let mut sup_ci = 0.0;
        for n in 0..steps {
            let col: Vec<f64> = per_path.iter().map(|p| p.1[j].0[n]).collect();
            let e = estimate(&col);
            if e.mean > sup {
                sup = e.mean;
                sup_ci = e.ci95;
            }
        }
        sup_values.push(sup);
        report.push(Quantity::info(format!("sup-violation-sq[{}]", eps_label(eps)), sup, sup_ci));
        let rho = estimate(&per_path.iter().map(|p| p.1[j].1).collect::<Vec<_>>());
        report.push(Quantity::at_most(
            format!("rho-energy[{}]", eps_label(eps)),
            rho.mean,
            rho.ci95,
            rho_bound,
        ));
    }
    let fit = RateFit::fit("sup-violation-sq", eps_list, &sup_values)?;
    if fit.vacuous {
        report.push(Quantity::info("slope", f64::NAN, 0.0));
    } else {
        report.push(Quantity::at_least("slope", fit.slope, 0.0, MIN_DECAY_SLOPE));
    }
    report.raw = per_path.iter().map(|p| p.0).collect();
    Ok(PenaltyDecay { fit, report })
}

/// Relative standard error of a positive mean; `0` when undefined.
fn rel_stderr(e: &Estimate) -> f64 {
    if e.mean > 0.0 {
        e.threshold_stderr() / e.mean
    } else {
        0.0
    }
}

/// `E∫∫ ρ_ε (u_ε − ψ) = ε E∫‖ρ_ε‖²` and its `O(ε)` bound by `ε K₁`.
pub fn complementarity_test(
    problem: &PenalizedProblem,
    epsilon: f64,
    mc: &McSettings,
) -> Result<PropertyReport> {
    let p = problem.with_epsilon(epsilon)?;
    let dt = p.dt();
    // per path: (pairing, ε·ρ energy, k1, sign violations, active-set violations)
    let per_path = map_paths(&p, mc, |_, path| {
        let k1 = k1_of_path(&p, path)?;
        let s = solve_path(&p, path)?;
        let mut pairing = 0.0;
        let mut sign_bad = 0usize;
        let mut active_bad = 0usize;
        for n in 1..s.u.len() {
            let gap = s.u[n].sub(p.obstacle(n))?;
            pairing += dt * inner_product(&s.rho[n], &gap)?;
            for (r, g) in s.rho[n].values().iter().zip(gap.values()) {
                if *r > 0.0 {
                    sign_bad += 1;
                }
                if r * g.max(0.0) != 0.0 {
                    active_bad += 1;
                }
            }
        }
        Ok((pairing, epsilon * rho_energy(&s, dt), k1, sign_bad, active_bad))
    })?;
    let pairing = estimate(&per_path.iter().map(|v| v.0).collect::<Vec<_>>());
    let energy = estimate(&per_path.iter().map(|v| v.1).collect::<Vec<_>>());
    let k1 = estimate(&per_path.iter().map(|v| v.2).collect::<Vec<_>>());
    let rel = if energy.mean == 0.0 && pairing.mean == 0.0 {
        0.0
    } else {
        (pairing.mean - energy.mean).abs() / energy.mean.abs().max(pairing.mean.abs())
    };
    let mut report = PropertyReport::new("complementarity", mc.n_paths);
    report.push(Quantity::info("epsilon", epsilon, 0.0));
    report.push(Quantity::info("rho-pairing", pairing.mean, pairing.ci95));
    report.push(Quantity::info("eps-rho-energy", energy.mean, energy.ci95));
    report.push(Quantity::at_most("identity-rel-error", rel, 0.0, IDENTITY_REL_TOL));
    let bound = epsilon * k1.mean * (1.0 + 3.0 * rel_stderr(&k1));
    report.push(Quantity::at_most("pairing-vs-eps-k1", pairing.mean, pairing.ci95, bound));
    report.push(Quantity::flag(
        "rho-nonpositive",
        per_path.iter().all(|v| v.3 == 0),
    ));
    report.push(Quantity::flag(
        "rho-inactive-off-contact",
        per_path.iter().all(|v| v.4 == 0),
    ));
    report.raw = per_path.iter().map(|v| v.0).collect();
    Ok(report)
}

/// A non-negative spatial test function for the weak reflection bound.
#[derive(Debug, Clone)]
pub struct TestFunction {
    pub name: String,
    pub values: GridFunction,
}

/// Constant `1` plus hats of half-width `L/8` centred at `kL/8`, `k = 1..7`.
pub fn test_dictionary(grid: &crate::mesh::Grid) -> Vec<TestFunction> {
    let l = grid.length();
    let w = l / 8.0;
    let mut out = vec![TestFunction {
        name: "const".into(),
        values: GridFunction::constant(*grid, 1.0),
    }];
    for k in 1..8 {
        let c = k as f64 * w;
        out.push(TestFunction {
            name: format!("hat@{c:.4}"),
            values: GridFunction::from_fn(*grid, |x| (1.0 - (x - c).abs() / w).max(0.0)),
        });
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LewyStampacchia {
    pub report: PropertyReport,
    pub fit: RateFit,
}

/// Sandwich `0 ≤ −ρ_ε ≲ h⁻`: sign of `ρ`, vanishing of
/// `q_ε = (1/ε)(u_ε − ψ + ε h⁻)⁻` in `L²(Ω × Q_T)`, and the weak bound
/// `E∫⟨h⁻ + ρ_ε, φ⟩ ≥ −tol` at the smallest ε.
pub fn lewy_stampacchia_test(
    problem: &PenalizedProblem,
    eps_list: &[f64],
    mc: &McSettings,
) -> Result<LewyStampacchia> {
    check_eps_list(eps_list, 3, true)?;
    let problems: Vec<PenalizedProblem> = eps_list
        .iter()
        .map(|&e| problem.with_epsilon(e))
        .collect::<Result<_>>()?;
    let dt = problem.dt();
    let dict = test_dictionary(problem.grid());
    let last = eps_list.len() - 1;
    // per path: (per-ε (q energy, rho sign violations), weak pairings at smallest ε)
    let per_path = map_paths(problem, mc, |_, path| {
        let h = compute_h(problem, path)?;
        let mut runs = Vec::with_capacity(problems.len());
        let mut weak = vec![0.0; dict.len()];
        for (j, p) in problems.iter().enumerate() {
            let eps = p.epsilon();
            let s = solve_path(p, path)?;
            let mut q_energy = 0.0;
            let mut sign_bad = 0usize;
            for n in 0..p.n_steps() {
                let u = &s.u[n + 1];
                let psi = p.obstacle(n + 1);
                let hm = &h.h_minus[n];
                let q: Vec<f64> = u
                    .values()
                    .iter()
                    .zip(psi.values())
                    .zip(hm.values())
                    .map(|((u, ps), hm)| negative_part(u - ps + eps * hm) / eps)
                    .collect();
                q_energy += dt * q.iter().map(|v| v * v).sum::<f64>() * p.grid().dx();
                sign_bad += s.rho[n + 1].values().iter().filter(|r| **r > 0.0).count();
                if j == last {
                    let sum = hm.add(&s.rho[n + 1])?;
                    for (w, phi) in weak.iter_mut().zip(&dict) {
                        *w += dt * inner_product(&sum, &phi.values)?;
                    }
                }
            }
            runs.push((q_energy, sign_bad));
        }
        Ok((runs, weak))
    })?;

    let mut report = PropertyReport::new("lewy-stampacchia", mc.n_paths);
    report.push(Quantity::flag(
        "minus-rho-nonnegative",
        per_path.iter().all(|(r, _)| r.iter().all(|x| x.1 == 0)),
    ));
    let mut q_means = Vec::with_capacity(eps_list.len());
    for (j, &eps) in eps_list.iter().enumerate() {
        let e = estimate(&per_path.iter().map(|(r, _)| r[j].0).collect::<Vec<_>>());
        report.push(Quantity::info(format!("q-energy[{}]", eps_label(eps)), e.mean, e.ci95));
        q_means.push(e.mean);
    }
    let all_zero = q_means.iter().all(|&q| q == 0.0);
    if all_zero {
        report.push(Quantity::flag("q-decreasing", true));
        report.push(Quantity::info("q-final-over-initial", 0.0, 0.0));
    } else {
        let decreasing = q_means.windows(2).all(|w| w[1] < w[0]);
        report.push(Quantity::flag("q-decreasing", decreasing));
        let ratio = q_means[last] / q_means[0];
        report.push(Quantity::at_most("q-final-over-initial", ratio, 0.0, 0.1));
    }
    for (k, phi) in dict.iter().enumerate() {
        let e = estimate(&per_path.iter().map(|(_, w)| w[k]).collect::<Vec<_>>());
        report.push(Quantity::at_least(
            format!("weak[{}]", phi.name),
            e.mean,
            e.ci95,
            -WEAK_FORM_TOL,
        ));
    }
    report.raw = per_path.iter().map(|(r, _)| r[last].0).collect();
    let fit = RateFit::fit("q-energy", eps_list, &q_means)?;
    Ok(LewyStampacchia { report, fit })
}

/// Requires the linear heat operator, no noise and no regularizer.
fn ensure_heat_case(problem: &PenalizedProblem) -> Result<()> {
    let op = problem.operator();
    let law = op.law();
    let linear = op.p() == 2.0
        && [(0.0, 1.0), (3.0, -2.5), (-1.0, 0.7)]
            .iter()
            .all(|&(lam, xi)| law.flux(0.5, lam, xi) == xi);
    if !linear {
        return Err(Error::Unsupported(
            "oracle comparison requires the linear flux a(x, λ, ξ) = ξ".into(),
        ));
    }
    if problem.noise().modes() != 0 {
        return Err(Error::Unsupported("oracle comparison requires zero noise modes".into()));
    }
    if problem.regularizer().is_active() {
        return Err(Error::Unsupported("oracle comparison requires delta = 0".into()));
    }
    Ok(())
}

/// Penalized solver against the projected implicit Euler oracle.
pub fn oracle_heat_obstacle_test(
    problem: &PenalizedProblem,
    eps_list: &[f64],
    psor: &PsorSettings,
) -> Result<PropertyReport> {
    ensure_heat_case(problem)?;
    check_eps_list(eps_list, 2, true)?;
    let n = problem.n_steps();
    let obstacle: Vec<Vec<f64>> = (0..=n).map(|k| problem.obstacle(k).values().to_vec()).collect();
    let source: Vec<Vec<f64>> = (0..=n).map(|k| problem.source(k).values().to_vec()).collect();
    let oracle = projected_implicit_euler(
        problem.grid().length(),
        &obstacle,
        &source,
        problem.initial().values(),
        problem.dt(),
        psor,
    )?;
    let active = oracle
        .iter()
        .zip(&obstacle)
        .skip(1)
        .any(|(u, psi)| u.iter().zip(psi).any(|(a, b)| a <= b));
    let path = sample_path(0, n, problem.dt(), 0)?;
    let mut dists = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        let sol = solve_path(&problem.with_epsilon(eps)?, &path)?;
        let d = sol
            .u
            .iter()
            .zip(&oracle)
            .map(|(a, b)| {
                a.values()
                    .iter()
                    .zip(b)
                    .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
            })
            .fold(0.0f64, f64::max);
        dists.push(d);
    }
    let mut report = PropertyReport::new("oracle-heat-obstacle", 1);
    report.push(Quantity::info("obstacle-active", if active { 1.0 } else { 0.0 }, 0.0));
    for (e, d) in eps_list.iter().zip(&dists) {
        report.push(Quantity::info(format!("linf-distance[{}]", eps_label(*e)), *d, 0.0));
    }
    for (j, w) in dists.windows(2).enumerate() {
        if w[0] > 0.0 {
            report.push(Quantity::info(
                format!("distance-ratio[{}]", eps_label(eps_list[j + 1])),
                w[1] / w[0],
                0.0,
            ));
        }
    }
    if active {
        let c0 = dists[0] / eps_list[0];
        let c1 = dists[1] / eps_list[1];
        let c = c0.max(c1);
        report.push(Quantity::info("rate-constant", c, 0.0));
        let stability = if c0 > 0.0 && c1 > 0.0 { c0.max(c1) / c0.min(c1) } else { f64::INFINITY };
        report.push(Quantity::at_most("rate-constant-spread", stability, 0.0, 2.0));
        for (e, d) in eps_list.iter().zip(&dists) {
            report.push(Quantity::at_most(
                format!("bound[{}]", eps_label(*e)),
                *d,
                0.0,
                c * e + ORACLE_SLACK,
            ));
        }
    } else {
        let worst = dists.iter().copied().fold(0.0, f64::max);
        report.push(Quantity::at_most("inactive-distance", worst, 0.0, INACTIVE_ORACLE_TOL));
    }
    report.raw = dists;
    Ok(report)
}

/// Relative tolerance of the discrete summation-by-parts identity.
pub const SBP_TOL: f64 = 1e-12;

/// Worst relative defect of `⟨div q, v⟩ = −⟨q, ∇v⟩` over random pairs with
/// entries uniform in `[−1, 1]`.
pub fn summation_by_parts_defect(grid: &crate::mesh::Grid, n_pairs: usize, seed: u64) -> Result<f64> {
    use crate::mesh::{divergence, gradient, FaceField};
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..n_pairs {
        let q = FaceField::from_fn(*grid, |_| rng.random_range(-1.0..=1.0));
        let v = GridFunction::from_fn(*grid, |_| rng.random_range(-1.0..=1.0));
        let lhs = inner_product(&divergence(&q), &v)?;
        let rhs = -q.dot(&gradient(&v))?;
        worst = worst.max((lhs - rhs).abs() / (1.0 + lhs.abs() + rhs.abs()));
    }
    Ok(worst)
}

/// Sampled structural assumptions of the operator and the noise rule plus the
/// summation-by-parts identity of the grid operators.
pub fn structural_test(
    problem: &PenalizedProblem,
    n_samples: usize,
    n_pairs: usize,
    seed: u64,
) -> Result<PropertyReport> {
    use crate::leray_lions::check_assumptions;
    use crate::noise::check_sigma_lipschitz;
    let ops = check_assumptions(problem.operator(), n_samples, seed)?;
    let sigma = check_sigma_lipschitz(problem.noise(), n_samples, seed)?;
    let mut report = PropertyReport::new("structural", n_samples);
    for c in ops.checks.iter().chain(&sigma.checks) {
        report.push(Quantity::info(format!("{}-worst-margin", c.name), c.worst, 0.0));
        report.push(Quantity::at_most(
            format!("{}-violations", c.name),
            c.violations as f64,
            0.0,
            0.0,
        ));
    }
    let sbp = summation_by_parts_defect(problem.grid(), n_pairs, seed)?;
    report.push(Quantity::at_most("sbp-relative-defect", sbp, 0.0, SBP_TOL));
    Ok(report)
}
