//! Divergence-form operators `A(u) = −div a(x, u, ∇u)`.
//!
//! The discrete action evaluates the flux on faces: the gradient slot uses
//! the one-sided difference of node values and the state slot uses the
//! arithmetic mean of `max(u, ψ)` over the two adjacent nodes (boundary nodes
//! contribute zero). Passing no obstacle gives the unmodified operator.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Tridiagonal;
use crate::mesh::{divergence, gradient, padded, FaceField, Grid, GridFunction};
use crate::report::{CheckOutcome, ValidationReport};

/// Lower clamp on `|ξ|` inside `|ξ|^{p-2}`.
pub const XI_FLOOR: f64 = 1e-12;

const FD_STEP: f64 = 1e-7;

/// A scalar (1D) flux `a(x, λ, ξ)`.
///
/// The derivative hooks default to forward differences; closed forms should
/// be supplied where available since Newton uses them.
pub trait FluxLaw: Send + Sync {
    fn flux(&self, x: f64, lambda: f64, xi: f64) -> f64;

    fn d_xi(&self, x: f64, lambda: f64, xi: f64) -> f64 {
        let h = FD_STEP * (1.0 + xi.abs());
        (self.flux(x, lambda, xi + h) - self.flux(x, lambda, xi)) / h
    }

    fn d_lambda(&self, x: f64, lambda: f64, xi: f64) -> f64 {
        let h = FD_STEP * (1.0 + lambda.abs());
        (self.flux(x, lambda + h, xi) - self.flux(x, lambda, xi)) / h
    }
}

/// `a(λ, ξ) = |ξ|^{p−2} ξ (1 + β / (1 + λ²))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PLaplacian {
    pub p: f64,
    pub beta: f64,
}

impl PLaplacian {
    fn weight(&self, lambda: f64) -> f64 {
        1.0 + self.beta / (1.0 + lambda * lambda)
    }

    fn power(&self, xi: f64) -> f64 {
        xi.abs().max(XI_FLOOR).powf(self.p - 2.0)
    }
}

impl FluxLaw for PLaplacian {
    fn flux(&self, _x: f64, lambda: f64, xi: f64) -> f64 {
        if self.p == 2.0 {
            return xi * self.weight(lambda);
        }
        self.power(xi) * xi * self.weight(lambda)
    }

    fn d_xi(&self, _x: f64, lambda: f64, xi: f64) -> f64 {
        if self.p == 2.0 {
            return self.weight(lambda);
        }
        let slope = if xi.abs() > XI_FLOOR {
            (self.p - 1.0) * self.power(xi)
        } else {
            self.power(xi)
        };
        slope * self.weight(lambda)
    }

    fn d_lambda(&self, _x: f64, lambda: f64, xi: f64) -> f64 {
        if self.beta == 0.0 {
            return 0.0;
        }
        let denom = 1.0 + lambda * lambda;
        let base = if self.p == 2.0 { xi } else { self.power(xi) * xi };
        base * self.beta * (-2.0 * lambda) / (denom * denom)
    }
}

/// Claimed structural constants: coercivity (`alpha`, `gamma`, `q`),
/// growth (`c1`, `c2`) and state-Lipschitz (`c3`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StructuralConstants {
    pub alpha: f64,
    pub gamma: f64,
    pub q: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
}

impl StructuralConstants {
    /// Sharp constants of the built-in family: the weight lies in
    /// `(1, 1 + β]` and `|d/dλ (1 + λ²)⁻¹| ≤ 9 / (8√3)`.
    pub fn for_p_laplacian(beta: f64) -> Self {
        StructuralConstants {
            alpha: 1.0,
            gamma: 0.0,
            q: 1.0,
            c1: 0.0,
            c2: 1.0 + beta,
            c3: beta * 9.0 / (8.0 * 3f64.sqrt()),
        }
    }
}

#[derive(Clone)]
pub struct LerayLionsOperator {
    p: f64,
    law: Arc<dyn FluxLaw>,
    constants: StructuralConstants,
    h_bar: GridFunction,
    k_bar: GridFunction,
    l: GridFunction,
}

impl fmt::Debug for LerayLionsOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LerayLionsOperator")
            .field("p", &self.p)
            .field("constants", &self.constants)
            .finish_non_exhaustive()
    }
}

impl LerayLionsOperator {
    pub fn new(
        grid: Grid,
        p: f64,
        law: Arc<dyn FluxLaw>,
        constants: StructuralConstants,
    ) -> Result<Self> {
        if !(p.is_finite() && p > 1.0) {
            return Err(Error::InvalidConfig(format!("exponent p must exceed 1, got {p}")));
        }
        if !(constants.alpha > 0.0) {
            return Err(Error::InvalidConfig("coercivity constant alpha must be positive".into()));
        }
        if constants.gamma < 0.0 || constants.c1 < 0.0 || constants.c2 < 0.0 || constants.c3 < 0.0 {
            return Err(Error::InvalidConfig("structural constants must be non-negative".into()));
        }
        if !(constants.q < p) {
            return Err(Error::InvalidConfig(format!(
                "exponent q = {} must be below p = {p}",
                constants.q
            )));
        }
        Ok(LerayLionsOperator {
            p,
            law,
            constants,
            h_bar: GridFunction::zeros(grid),
            k_bar: GridFunction::zeros(grid),
            l: GridFunction::zeros(grid),
        })
    }

    /// Built-in `|ξ|^{p−2}ξ (1 + β/(1+λ²))` with its sharp constants.
    pub fn p_laplacian(grid: Grid, p: f64, beta: f64) -> Result<Self> {
        if !(beta.is_finite() && beta >= 0.0) {
            return Err(Error::InvalidConfig(format!("beta must be non-negative, got {beta}")));
        }
        Self::new(
            grid,
            p,
            Arc::new(PLaplacian { p, beta }),
            StructuralConstants::for_p_laplacian(beta),
        )
    }

    pub fn with_profiles(
        mut self,
        h_bar: GridFunction,
        k_bar: GridFunction,
        l: GridFunction,
    ) -> Result<Self> {
        let grid = *self.h_bar.grid();
        if *h_bar.grid() != grid || *k_bar.grid() != grid || *l.grid() != grid {
            return Err(Error::GridMismatch);
        }
        if k_bar.min_value() < 0.0 || l.min_value() < 0.0 {
            return Err(Error::InvalidConfig("profiles k_bar and l must be non-negative".into()));
        }
        self.h_bar = h_bar;
        self.k_bar = k_bar;
        self.l = l;
        Ok(self)
    }

    pub fn with_constants(mut self, constants: StructuralConstants) -> Self {
        self.constants = constants;
        self
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn grid(&self) -> &Grid {
        self.h_bar.grid()
    }

    pub fn constants(&self) -> &StructuralConstants {
        &self.constants
    }

    pub fn law(&self) -> &dyn FluxLaw {
        self.law.as_ref()
    }

    pub fn h_bar(&self) -> &GridFunction {
        &self.h_bar
    }

    pub fn k_bar(&self) -> &GridFunction {
        &self.k_bar
    }

    pub fn l(&self) -> &GridFunction {
        &self.l
    }
}

pub fn eval_flux(op: &LerayLionsOperator, x: f64, lambda: f64, xi: f64) -> f64 {
    op.law.flux(x, lambda, xi)
}

/// Node values of `max(u, ψ)`, or `u` when no obstacle is given.
fn state_slot(u: &GridFunction, psi: Option<&GridFunction>) -> Result<Vec<f64>> {
    match psi {
        None => Ok(u.values().to_vec()),
        Some(psi) => Ok(u.max_with(psi)?.into_values()),
    }
}

fn ensure_grid(op: &LerayLionsOperator, u: &GridFunction) -> Result<()> {
    if u.grid() != op.grid() {
        Err(Error::GridMismatch)
    } else {
        Ok(())
    }
}

/// Face fluxes `a(x_{j+1/2}, λ_j, ξ_j)` of the modified operator.
pub fn face_flux(
    op: &LerayLionsOperator,
    u: &GridFunction,
    psi: Option<&GridFunction>,
) -> Result<FaceField> {
    ensure_grid(op, u)?;
    let grid = *u.grid();
    let lam = state_slot(u, psi)?;
    let xi = gradient(u);
    let values = (0..grid.n_faces())
        .map(|j| {
            let lambda = 0.5 * (padded(&lam, j) + padded(&lam, j + 1));
            op.law.flux(grid.face(j), lambda, xi.values()[j])
        })
        .collect();
    Ok(FaceField::from_raw(grid, values))
}

/// `−div_h a(x, max(u, ψ), ∇_h u)`; `psi = None` gives `−div_h a(x, u, ∇_h u)`.
pub fn assemble_action(
    op: &LerayLionsOperator,
    u: &GridFunction,
    psi: Option<&GridFunction>,
) -> Result<GridFunction> {
    Ok(divergence(&face_flux(op, u, psi)?).scale(-1.0))
}

/// Jacobian of [`assemble_action`] with respect to `u`.
///
/// The derivative of `max(u, ψ)` is taken as `1` where `u ≥ ψ`.
pub fn action_jacobian(
    op: &LerayLionsOperator,
    u: &GridFunction,
    psi: Option<&GridFunction>,
) -> Result<Tridiagonal> {
    ensure_grid(op, u)?;
    let grid = *u.grid();
    let n = grid.n_nodes();
    let dx = grid.dx();
    let lam = state_slot(u, psi)?;
    let chi: Vec<f64> = match psi {
        None => vec![1.0; n],
        Some(psi) => u
            .values()
            .iter()
            .zip(psi.values())
            .map(|(a, b)| if a >= b { 1.0 } else { 0.0 })
            .collect(),
    };
    let xi = gradient(u);
    // dq_left[j] = ∂q_j/∂U_j, dq_right[j] = ∂q_j/∂U_{j+1} (padded indices).
    let mut dq_left = vec![0.0; grid.n_faces()];
    let mut dq_right = vec![0.0; grid.n_faces()];
    for j in 0..grid.n_faces() {
        let lambda = 0.5 * (padded(&lam, j) + padded(&lam, j + 1));
        let x = grid.face(j);
        let a_xi = op.law.d_xi(x, lambda, xi.values()[j]);
        let a_lam = op.law.d_lambda(x, lambda, xi.values()[j]);
        dq_left[j] = -a_xi / dx + 0.5 * a_lam * padded(&chi, j);
        dq_right[j] = a_xi / dx + 0.5 * a_lam * padded(&chi, j + 1);
    }
    // A_i = (q_i − q_{i+1}) / dx for interior node i (padded index i + 1).
    let mut jac = Tridiagonal::zeros(n);
    for i in 0..n {
        jac.diag[i] = (dq_right[i] - dq_left[i + 1]) / dx;
        if i > 0 {
            jac.lower[i] = dq_left[i] / dx;
        }
        if i + 1 < n {
            jac.upper[i] = -dq_right[i + 1] / dx;
        }
    }
    Ok(jac)
}

/// Exponent data of the optional higher-order perturbation `δ b(u, v)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HigherOrderRegularizer {
    pub delta: f64,
    pub m: u32,
    pub nu: f64,
}

impl HigherOrderRegularizer {
    pub fn disabled() -> Self {
        HigherOrderRegularizer {
            delta: 0.0,
            m: 1,
            nu: 2.0,
        }
    }

    /// Validates `ν > max{p, 2, 2p(p−1)}` whenever `δ > 0`.
    pub fn new(delta: f64, m: u32, nu: f64, p: f64) -> Result<Self> {
        if !(delta.is_finite() && delta >= 0.0) {
            return Err(Error::InvalidConfig(format!("delta must be non-negative, got {delta}")));
        }
        if m == 0 {
            return Err(Error::InvalidConfig("order m must be >= 1".into()));
        }
        if delta > 0.0 {
            let bound = p.max(2.0).max(2.0 * p * (p - 1.0));
            if !(nu > bound) {
                return Err(Error::InvalidConfig(format!(
                    "exponent nu = {nu} must exceed {bound}"
                )));
            }
        }
        Ok(HigherOrderRegularizer { delta, m, nu })
    }

    pub fn is_active(&self) -> bool {
        self.delta > 0.0
    }
}

fn nu_flux(nu: f64, s: f64) -> f64 {
    (1.0 + s.abs().powf(nu - 2.0)) * s
}

fn nu_flux_derivative(nu: f64, s: f64) -> f64 {
    1.0 + (nu - 1.0) * s.abs().powf(nu - 2.0)
}

/// Riesz representative of `v ↦ Σ_{|α|≤1} ⟨(1+|Dᵅu|^{ν−2}) Dᵅu, Dᵅv⟩` on the
/// grid: `(1+|u|^{ν−2})u − div_h((1+|∇u|^{ν−2})∇u)`. Not scaled by `δ`.
pub fn higher_order_action(reg: &HigherOrderRegularizer, u: &GridFunction) -> Result<GridFunction> {
    if reg.m != 1 {
        return Err(Error::Unsupported(format!(
            "higher-order form with m = {} on a 1D grid",
            reg.m
        )));
    }
    let grid = *u.grid();
    let g = gradient(u);
    let q = FaceField::from_raw(grid, g.values().iter().map(|&s| nu_flux(reg.nu, s)).collect());
    let div = divergence(&q);
    let values = u
        .values()
        .iter()
        .zip(div.values())
        .map(|(&s, d)| nu_flux(reg.nu, s) - d)
        .collect();
    Ok(GridFunction::from_raw(grid, values))
}

pub fn higher_order_jacobian(reg: &HigherOrderRegularizer, u: &GridFunction) -> Result<Tridiagonal> {
    if reg.m != 1 {
        return Err(Error::Unsupported(format!(
            "higher-order form with m = {} on a 1D grid",
            reg.m
        )));
    }
    let grid = *u.grid();
    let n = grid.n_nodes();
    let dx2 = grid.dx() * grid.dx();
    let slope: Vec<f64> = gradient(u)
        .values()
        .iter()
        .map(|&s| nu_flux_derivative(reg.nu, s))
        .collect();
    let mut jac = Tridiagonal::zeros(n);
    for i in 0..n {
        jac.diag[i] = nu_flux_derivative(reg.nu, u.values()[i]) + (slope[i] + slope[i + 1]) / dx2;
        if i > 0 {
            jac.lower[i] = -slope[i] / dx2;
        }
        if i + 1 < n {
            jac.upper[i] = -slope[i + 1] / dx2;
        }
    }
    Ok(jac)
}

/// Sample tuple `(node index, λ, λ₁, λ₂, ξ, η)` for [`check_assumptions`].
pub type AssumptionSample = (usize, f64, f64, f64, f64, f64);

/// Random tuples plus adversarial corners (`ξ, η ∈ {0, ±1e-8, ±1, ±1e3}`).
pub fn assumption_samples(grid: &Grid, n_samples: usize, seed: u64) -> Vec<AssumptionSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let state = Uniform::new_inclusive(-10.0, 10.0).expect("valid range");
    let log_mag = Uniform::new_inclusive(-6.0, 3.0).expect("valid range");
    let xi_corners = [0.0, 1e-8, -1e-8, 1.0, -1.0, 1e3, -1e3];
    let lam_corners = [0.0, 1.0 / 3f64.sqrt(), -1.0 / 3f64.sqrt(), 5.0];
    let mut out = Vec::new();
    for &xi in &xi_corners {
        for &eta in &xi_corners {
            for &lam in &lam_corners {
                out.push((0, lam, lam, -lam + 0.5, xi, eta));
            }
        }
    }
    let n_nodes = grid.n_nodes();
    for _ in 0..n_samples {
        let i = rng.random_range(0..n_nodes);
        let gen_xi = |rng: &mut ChaCha8Rng| {
            let mag = 10f64.powf(log_mag.sample(rng));
            if rng.random_bool(0.5) {
                mag
            } else {
                -mag
            }
        };
        let xi = gen_xi(&mut rng);
        let eta = gen_xi(&mut rng);
        out.push((
            i,
            state.sample(&mut rng),
            state.sample(&mut rng),
            state.sample(&mut rng),
            xi,
            eta,
        ));
    }
    out
}

/// Relative slack allowed for floating-point rounding in the margins.
const MARGIN_TOL: f64 = 1e-12;

struct Tally {
    name: &'static str,
    worst: f64,
    violations: usize,
    samples: usize,
}

impl Tally {
    fn new(name: &'static str) -> Self {
        Tally {
            name,
            worst: f64::INFINITY,
            violations: 0,
            samples: 0,
        }
    }

    fn record(&mut self, margin: f64, scale: f64) {
        self.samples += 1;
        self.worst = self.worst.min(margin);
        if margin < -MARGIN_TOL * (1.0 + scale) {
            self.violations += 1;
        }
    }

    fn finish(self) -> CheckOutcome {
        CheckOutcome {
            name: self.name.into(),
            samples: self.samples,
            worst: self.worst,
            threshold: 0.0,
            violations: self.violations,
            pass: self.violations == 0,
        }
    }
}

/// Sampled margins for monotonicity, coercivity, growth and state-Lipschitz
/// conditions; each margin is `rhs-side slack`, non-negative when satisfied.
pub fn check_assumptions(
    op: &LerayLionsOperator,
    n_samples: usize,
    seed: u64,
) -> Result<ValidationReport> {
    if n_samples == 0 {
        return Err(Error::InvalidConfig("n_samples must be >= 1".into()));
    }
    let grid = *op.grid();
    let samples = assumption_samples(&grid, n_samples, seed);
    let c = op.constants;
    let p = op.p;
    let mut mono = Tally::new("monotone");
    let mut coer = Tally::new("coercive");
    let mut growth = Tally::new("growth");
    let mut lip = Tally::new("state-lipschitz");
    for &(i, lam, lam1, lam2, xi, eta) in &samples {
        let x = grid.node(i);
        let a_xi = op.law.flux(x, lam, xi);
        let a_eta = op.law.flux(x, lam, eta);
        let m = (a_xi - a_eta) * (xi - eta);
        mono.record(m, (a_xi.abs() + a_eta.abs()) * (xi.abs() + eta.abs()));

        let lhs = a_xi * xi;
        let rhs = c.alpha * xi.abs().powf(p) - c.gamma * lam.abs().powf(c.q) + op.h_bar.values()[i];
        coer.record(lhs - rhs, lhs.abs() + rhs.abs());

        let bound = op.k_bar.values()[i]
            + c.c1 * lam.abs().powf(p - 1.0)
            + c.c2 * xi.abs().powf(p - 1.0);
        growth.record(bound - a_xi.abs(), bound.abs());

        let diff = (op.law.flux(x, lam1, xi) - op.law.flux(x, lam2, xi)).abs();
        let bound = (c.c3 * xi.abs().powf(p - 1.0) + op.l.values()[i]) * (lam1 - lam2).abs();
        lip.record(bound - diff, bound.abs());
    }
    Ok(ValidationReport {
        name: "leray-lions".into(),
        n_samples: samples.len(),
        checks: vec![mono.finish(), coer.finish(), growth.finish(), lip.finish()],
    })
}
