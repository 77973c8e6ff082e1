//! Drift-implicit, noise-explicit Euler–Maruyama integration of the penalized
//! equation on a single noise path.
//!
//! One step solves, for `u = u_{n+1}`,
//!
//! ```text
//! (u − u_n)/dt + A_ψ(u) + δ B(u) − (1/ε)(u − ψ_{n+1})⁻ − f_{n+1}
//!     − G(max(u_n, ψ_n)) Δβ_n / dt = 0
//! ```
//!
//! where `A_ψ` is the operator with `max(u, ψ_{n+1})` in its state slot. The
//! kink of `(·)⁻` is linearized with slope `1/ε` on `{u < ψ}` and `0` on the
//! contact point itself.

use crate::error::{Error, Result};
use crate::leray_lions::{
    action_jacobian, assemble_action, higher_order_action, higher_order_jacobian,
    HigherOrderRegularizer, LerayLionsOperator,
};
use crate::linalg::Tridiagonal;
use crate::mesh::{negative_part, norm_lp, Grid, GridFunction};
use crate::noise::{apply_noise, NoisePath, SpectralNoiseModel};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NewtonSettings {
    /// Residual tolerance relative to `1 + ‖u_n‖₂`.
    pub tol: f64,
    pub max_iter: usize,
    /// Initial step length of the line search, in `(0, 1]`.
    pub damping: f64,
    pub max_halvings: usize,
}

impl Default for NewtonSettings {
    fn default() -> Self {
        NewtonSettings {
            tol: 1e-10,
            max_iter: 50,
            damping: 1.0,
            max_halvings: 20,
        }
    }
}

impl NewtonSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(Error::config("newton.tol", "must be positive"));
        }
        if self.max_iter == 0 {
            return Err(Error::config("newton.max_iter", "must be >= 1"));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::config("newton.damping", "must lie in (0, 1]"));
        }
        Ok(())
    }
}

/// A square nonlinear system with tridiagonal (generalized) Jacobian.
pub trait NonlinearSystem {
    fn residual(&self, u: &[f64]) -> Result<Vec<f64>>;
    fn jacobian(&self, u: &[f64]) -> Result<Tridiagonal>;

    fn norm(&self, r: &[f64]) -> f64 {
        r.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonOutcome {
    pub solution: Vec<f64>,
    pub iterations: usize,
    pub residual_norm: f64,
}

/// Damped (semismooth) Newton with step halving on the residual norm.
pub fn newton_solve(
    system: &dyn NonlinearSystem,
    guess: &[f64],
    tol: f64,
    settings: &NewtonSettings,
) -> Result<NewtonOutcome> {
    let mut u = guess.to_vec();
    let mut r = system.residual(&u)?;
    let mut norm = system.norm(&r);
    for iter in 0..settings.max_iter {
        if norm <= tol {
            return Ok(NewtonOutcome {
                solution: u,
                iterations: iter,
                residual_norm: norm,
            });
        }
        let jac = system.jacobian(&u)?;
        let neg: Vec<f64> = r.iter().map(|v| -v).collect();
        let dir = jac.solve(&neg)?;
        let mut step = settings.damping;
        let mut accepted = false;
        for _ in 0..=settings.max_halvings {
            let trial: Vec<f64> = u.iter().zip(&dir).map(|(a, d)| a + step * d).collect();
            let tr = system.residual(&trial)?;
            let tn = system.norm(&tr);
            if tn < norm {
                u = trial;
                r = tr;
                norm = tn;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            return Err(Error::NewtonDiverged {
                iterations: iter + 1,
                residual: norm,
            });
        }
    }
    if norm <= tol {
        Ok(NewtonOutcome {
            solution: u,
            iterations: settings.max_iter,
            residual_norm: norm,
        })
    } else {
        Err(Error::NewtonDiverged {
            iterations: settings.max_iter,
            residual: norm,
        })
    }
}

/// Full problem instance. Tables `obstacle` and `source` are indexed by time
/// step `0..=n_steps`; the scheme reads `f_{n+1}` and `ψ_{n+1}` in step `n`.
#[derive(Debug, Clone)]
pub struct PenalizedProblem {
    grid: Grid,
    operator: LerayLionsOperator,
    regularizer: HigherOrderRegularizer,
    noise: SpectralNoiseModel,
    epsilon: f64,
    horizon: f64,
    obstacle: Vec<GridFunction>,
    source: Vec<GridFunction>,
    initial: GridFunction,
    newton: NewtonSettings,
}

/// What to do when `u₀ < ψ(0)` somewhere.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum InitialPolicy {
    #[default]
    Reject,
    Clamp,
}

impl PenalizedProblem {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        operator: LerayLionsOperator,
        noise: SpectralNoiseModel,
        epsilon: f64,
        horizon: f64,
        obstacle: Vec<GridFunction>,
        source: Vec<GridFunction>,
        initial: GridFunction,
        policy: InitialPolicy,
    ) -> Result<Self> {
        let grid = *operator.grid();
        if *noise.grid() != grid || *initial.grid() != grid {
            return Err(Error::GridMismatch);
        }
        if obstacle.is_empty() {
            return Err(Error::InvalidConfig("obstacle table is empty".into()));
        }
        if source.len() != obstacle.len() {
            return Err(Error::Shape {
                expected: obstacle.len(),
                found: source.len(),
            });
        }
        if obstacle.iter().chain(&source).any(|g| *g.grid() != grid) {
            return Err(Error::GridMismatch);
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::config("time.horizon", "must be positive"));
        }
        check_epsilon(epsilon)?;
        let initial = resolve_initial(initial, &obstacle[0], policy)?;
        Ok(PenalizedProblem {
            grid,
            operator,
            regularizer: HigherOrderRegularizer::disabled(),
            noise,
            epsilon,
            horizon,
            obstacle,
            source,
            initial,
            newton: NewtonSettings::default(),
        })
    }

    pub fn with_regularizer(mut self, reg: HigherOrderRegularizer) -> Self {
        self.regularizer = reg;
        self
    }

    pub fn with_newton(mut self, newton: NewtonSettings) -> Self {
        self.newton = newton;
        self
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        check_epsilon(epsilon)?;
        Ok(PenalizedProblem {
            epsilon,
            ..self.clone()
        })
    }

    pub fn with_initial(&self, initial: GridFunction, policy: InitialPolicy) -> Result<Self> {
        if *initial.grid() != self.grid {
            return Err(Error::GridMismatch);
        }
        let initial = resolve_initial(initial, &self.obstacle[0], policy)?;
        Ok(PenalizedProblem {
            initial,
            ..self.clone()
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn operator(&self) -> &LerayLionsOperator {
        &self.operator
    }

    pub fn regularizer(&self) -> &HigherOrderRegularizer {
        &self.regularizer
    }

    pub fn noise(&self) -> &SpectralNoiseModel {
        &self.noise
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn n_steps(&self) -> usize {
        self.obstacle.len() - 1
    }

    /// `T / n_steps`; with zero steps this is `T`.
    pub fn dt(&self) -> f64 {
        self.horizon / self.n_steps().max(1) as f64
    }

    pub fn obstacle(&self, n: usize) -> &GridFunction {
        &self.obstacle[n]
    }

    pub fn source(&self, n: usize) -> &GridFunction {
        &self.source[n]
    }

    pub fn initial(&self) -> &GridFunction {
        &self.initial
    }

    pub fn newton(&self) -> &NewtonSettings {
        &self.newton
    }
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if epsilon.is_finite() && epsilon > 0.0 {
        Ok(())
    } else {
        Err(Error::config("penalty.epsilon", format!("must be positive, got {epsilon}")))
    }
}

fn resolve_initial(
    initial: GridFunction,
    psi0: &GridFunction,
    policy: InitialPolicy,
) -> Result<GridFunction> {
    if let Some(i) = initial
        .values()
        .iter()
        .zip(psi0.values())
        .position(|(u, p)| u < p)
    {
        match policy {
            InitialPolicy::Reject => {
                return Err(Error::config(
                    "initial",
                    format!(
                        "initial datum violates the constraint: u0 < psi(0) at node {}",
                        i + 1
                    ),
                ))
            }
            InitialPolicy::Clamp => return initial.max_with(psi0),
        }
    }
    Ok(initial)
}

/// Residual of one implicit step, as a [`NonlinearSystem`] over node values.
struct StepSystem<'a> {
    problem: &'a PenalizedProblem,
    u_prev: &'a GridFunction,
    psi: &'a GridFunction,
    /// `f_{n+1} + G(max(u_n, ψ_n)) Δβ_n / dt`
    forcing: GridFunction,
    dt: f64,
}

impl StepSystem<'_> {
    fn field(&self, u: &[f64]) -> GridFunction {
        GridFunction::from_raw(self.problem.grid, u.to_vec())
    }
}

impl NonlinearSystem for StepSystem<'_> {
    fn residual(&self, u: &[f64]) -> Result<Vec<f64>> {
        let field = self.field(u);
        let action = assemble_action(&self.problem.operator, &field, Some(self.psi))?;
        let reg = &self.problem.regularizer;
        let higher = if reg.is_active() {
            Some(higher_order_action(reg, &field)?)
        } else {
            None
        };
        let inv_eps = 1.0 / self.problem.epsilon;
        let mut r = Vec::with_capacity(u.len());
        for i in 0..u.len() {
            let mut v = (u[i] - self.u_prev.values()[i]) / self.dt + action.values()[i]
                - inv_eps * negative_part(u[i] - self.psi.values()[i])
                - self.forcing.values()[i];
            if let Some(h) = &higher {
                v += reg.delta * h.values()[i];
            }
            r.push(v);
        }
        Ok(r)
    }

    fn jacobian(&self, u: &[f64]) -> Result<Tridiagonal> {
        let field = self.field(u);
        let mut jac = action_jacobian(&self.problem.operator, &field, Some(self.psi))?;
        let reg = &self.problem.regularizer;
        if reg.is_active() {
            jac.add_scaled(&higher_order_jacobian(reg, &field)?, reg.delta);
        }
        let inv_eps = 1.0 / self.problem.epsilon;
        for (i, d) in jac.diag.iter_mut().enumerate() {
            *d += 1.0 / self.dt;
            if u[i] < self.psi.values()[i] {
                *d += inv_eps;
            }
        }
        Ok(jac)
    }

    fn norm(&self, r: &[f64]) -> f64 {
        (r.iter().map(|v| v * v).sum::<f64>() * self.problem.grid.dx()).sqrt()
    }
}

/// Result of a single step with its Newton iteration count.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub u: GridFunction,
    pub iterations: usize,
    pub residual_norm: f64,
}

pub fn step(
    problem: &PenalizedProblem,
    u_prev: &GridFunction,
    step_index: usize,
    dbeta: &[f64],
) -> Result<StepOutcome> {
    if step_index >= problem.n_steps() {
        return Err(Error::InvalidConfig(format!(
            "step index {step_index} out of range for {} steps",
            problem.n_steps()
        )));
    }
    if *u_prev.grid() != problem.grid {
        return Err(Error::GridMismatch);
    }
    let dt = problem.dt();
    let psi_now = &problem.obstacle[step_index];
    let psi = &problem.obstacle[step_index + 1];
    let noise = apply_noise(&problem.noise, &u_prev.max_with(psi_now)?, dbeta)?;
    let forcing = problem.source[step_index + 1].add(&noise.scale(1.0 / dt))?;
    let system = StepSystem {
        problem,
        u_prev,
        psi,
        forcing,
        dt,
    };
    let tol = problem.newton.tol * (1.0 + norm_lp(u_prev, 2.0)?);
    let out = newton_solve(&system, u_prev.values(), tol, &problem.newton)?;
    Ok(StepOutcome {
        u: GridFunction::new(problem.grid, out.solution)?,
        iterations: out.iterations,
        residual_norm: out.residual_norm,
    })
}

/// `ρ = −(1/ε)(u − ψ)⁻`.
pub fn extract_rho(u: &GridFunction, psi: &GridFunction, epsilon: f64) -> Result<GridFunction> {
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(Error::InvalidConfig(format!("epsilon must be positive, got {epsilon}")));
    }
    u.zip_with(psi, |a, b| -negative_part(a - b) / epsilon)
}

#[derive(Debug, Clone)]
pub struct PathSolution {
    pub times: Vec<f64>,
    pub u: Vec<GridFunction>,
    pub rho: Vec<GridFunction>,
    /// Newton iterations of step `n → n+1`, one entry per step.
    pub newton_iterations: Vec<usize>,
    /// `‖(u_n − ψ_n)⁻‖₂` for every stored time.
    pub violation: Vec<f64>,
}

fn check_path(problem: &PenalizedProblem, path: &NoisePath) -> Result<()> {
    if path.steps != problem.n_steps() || path.increments.len() != path.steps {
        return Err(Error::Shape {
            expected: problem.n_steps(),
            found: path.steps,
        });
    }
    if path.steps > 0 {
        let dt = problem.dt();
        if (path.dt - dt).abs() > 1e-12 * dt {
            return Err(Error::InvalidConfig(format!(
                "path time step {} does not match problem time step {dt}",
                path.dt
            )));
        }
        if path.modes() != problem.noise.modes() {
            return Err(Error::Shape {
                expected: problem.noise.modes(),
                found: path.modes(),
            });
        }
    }
    Ok(())
}

pub fn solve_path(problem: &PenalizedProblem, path: &NoisePath) -> Result<PathSolution> {
    check_path(problem, path)?;
    let n_steps = problem.n_steps();
    let dt = problem.dt();
    let mut u = Vec::with_capacity(n_steps + 1);
    let mut rho = Vec::with_capacity(n_steps + 1);
    let mut violation = Vec::with_capacity(n_steps + 1);
    let mut iterations = Vec::with_capacity(n_steps);

    let u0 = problem.initial.clone();
    let rho0 = extract_rho(&u0, &problem.obstacle[0], problem.epsilon)?;
    violation.push(norm_lp(&u0.sub(&problem.obstacle[0])?.negative_part(), 2.0)?);
    u.push(u0);
    rho.push(rho0);

    for n in 0..n_steps {
        let out = step(problem, &u[n], n, path.step(n)).map_err(|e| Error::StepFailed {
            step: n,
            source: Box::new(e),
        })?;
        let psi = &problem.obstacle[n + 1];
        rho.push(extract_rho(&out.u, psi, problem.epsilon)?);
        violation.push(norm_lp(&out.u.sub(psi)?.negative_part(), 2.0)?);
        iterations.push(out.iterations);
        u.push(out.u);
    }
    Ok(PathSolution {
        times: (0..=n_steps).map(|n| n as f64 * dt).collect(),
        u,
        rho,
        newton_iterations: iterations,
        violation,
    })
}

/// Discrete obstacle residual `h = h⁺ − h⁻` on each step interval.
#[derive(Debug, Clone)]
pub struct ObstacleResidual {
    /// `h_n` for `n = 0..n_steps`, paired with step `n → n+1`.
    pub h: Vec<GridFunction>,
    pub h_minus: Vec<GridFunction>,
}

/// `h_n = f_{n+1} − (ψ_{n+1} − ψ_n − G(ψ_n)Δβ_n)/dt − A(ψ_{n+1})`, with `A`
/// the unmodified operator, evaluated at the same time level as the implicit
/// drift so that the obstacle satisfies the scheme's own step equation with
/// forcing `f − h`.
pub fn compute_h(problem: &PenalizedProblem, path: &NoisePath) -> Result<ObstacleResidual> {
    check_path(problem, path)?;
    let dt = problem.dt();
    let mut h = Vec::with_capacity(problem.n_steps());
    let mut h_minus = Vec::with_capacity(problem.n_steps());
    for n in 0..problem.n_steps() {
        let psi0 = &problem.obstacle[n];
        let psi1 = &problem.obstacle[n + 1];
        let noise = apply_noise(&problem.noise, psi0, path.step(n))?;
        let time_part = psi1.sub(psi0)?.sub(&noise)?.scale(1.0 / dt);
        let action = assemble_action(&problem.operator, psi1, None)?;
        let hn = problem.source[n + 1].sub(&time_part)?.sub(&action)?;
        h_minus.push(hn.negative_part());
        h.push(hn);
    }
    Ok(ObstacleResidual { h, h_minus })
}
