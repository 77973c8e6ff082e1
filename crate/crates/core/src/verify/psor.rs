//! Projected implicit Euler for the deterministic heat obstacle problem.
//!
//! Each step solves the linear complementarity problem
//! `u ≥ ψ`, `M u − b ≥ 0`, `(u − ψ)·(M u − b) = 0` with
//! `M = I/dt − Δ_h` and `b = u_n/dt + f_{n+1}` by projected SOR. The matrix is
//! assembled here from the stencil directly and shares no code with the
//! penalized solver.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PsorSettings {
    /// Relaxation factor; `None` uses the optimal SOR factor of the
    /// unconstrained matrix.
    pub omega: Option<f64>,
    /// Stop when the largest update of a sweep is at most `tol`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PsorSettings {
    fn default() -> Self {
        PsorSettings {
            omega: None,
            tol: 1e-12,
            max_iter: 200_000,
        }
    }
}

/// Optimal SOR factor `2 / (1 + sqrt(1 − ρ_J²))` for `I/dt − Δ_h`.
pub fn optimal_omega(n_cells: usize, dx: f64, dt: f64) -> f64 {
    let diag = 1.0 / dt + 2.0 / (dx * dx);
    let rho_j = (2.0 / (dx * dx)) * (std::f64::consts::PI / n_cells as f64).cos() / diag;
    2.0 / (1.0 + (1.0 - rho_j * rho_j).sqrt())
}

/// One projected SOR solve of `min(u − ψ, M u − b) = 0` for tridiagonal
/// `M` with constant coefficients (`diag`, `off`). Returns the iterate and the
/// number of sweeps.
fn psor_step(
    diag: f64,
    off: f64,
    b: &[f64],
    psi: &[f64],
    start: &[f64],
    omega: f64,
    settings: &PsorSettings,
) -> Result<(Vec<f64>, usize)> {
    let n = b.len();
    let mut u: Vec<f64> = start.iter().zip(psi).map(|(a, p)| a.max(*p)).collect();
    for sweep in 1..=settings.max_iter {
        let mut max_update = 0.0f64;
        for i in 0..n {
            let left = if i > 0 { u[i - 1] } else { 0.0 };
            let right = if i + 1 < n { u[i + 1] } else { 0.0 };
            let gs = (b[i] - off * (left + right)) / diag;
            let next = (u[i] + omega * (gs - u[i])).max(psi[i]);
            max_update = max_update.max((next - u[i]).abs());
            u[i] = next;
        }
        if max_update <= settings.tol {
            return Ok((u, sweep));
        }
    }
    Err(Error::Oracle(format!(
        "projected SOR did not converge in {} sweeps",
        settings.max_iter
    )))
}

/// Time series `u_0..u_N` of the projected implicit Euler scheme.
///
/// `obstacle` and `source` are step tables of length `N + 1`; the grid is
/// `(0, length)` with `u0.len() + 1` cells.
pub fn projected_implicit_euler(
    length: f64,
    obstacle: &[Vec<f64>],
    source: &[Vec<f64>],
    u0: &[f64],
    dt: f64,
    settings: &PsorSettings,
) -> Result<Vec<Vec<f64>>> {
    let n = u0.len();
    let n_cells = n + 1;
    let dx = length / n_cells as f64;
    let diag = 1.0 / dt + 2.0 / (dx * dx);
    let off = -1.0 / (dx * dx);
    let omega = settings
        .omega
        .unwrap_or_else(|| optimal_omega(n_cells, dx, dt));
    if !(omega > 0.0 && omega < 2.0) {
        return Err(Error::Oracle(format!("relaxation factor {omega} outside (0, 2)")));
    }
    let steps = obstacle.len().saturating_sub(1);
    let mut out = Vec::with_capacity(steps + 1);
    out.push(u0.to_vec());
    for k in 0..steps {
        let prev = &out[k];
        let b: Vec<f64> = prev
            .iter()
            .zip(&source[k + 1])
            .map(|(u, f)| u / dt + f)
            .collect();
        let (u, _) = psor_step(diag, off, &b, &obstacle[k + 1], prev, omega, settings)?;
        out.push(u);
    }
    Ok(out)
}
