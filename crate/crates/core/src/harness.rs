//! Experiment configuration, Monte Carlo orchestration and run artifacts.
//!
//! Configs are TOML with a `schema_version` key; unknown keys are rejected.
//! Data artifacts (CSV, `index.json`, config snapshot) depend only on the
//! resolved config. Wall-clock data and the worker count go to
//! `metadata.json`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::leray_lions::{HigherOrderRegularizer, LerayLionsOperator, StructuralConstants};
use crate::mesh::{Grid, GridFunction};
use crate::noise::{geometric_weights, power_law_spectrum, sample_path, sine_basis, LinearRule, SpectralNoiseModel};
use crate::report::PropertyReport;
use crate::solver::{compute_h, solve_path, InitialPolicy, NewtonSettings, PenalizedProblem};
use crate::verify::{self, McSettings, PsorSettings, RateFit};

pub use crate::stats::{estimate_expectation, Estimate};

pub const SCHEMA_VERSION: u32 = 1;

/// Obstacle used for the inactive oracle comparison.
const FAR_BELOW: f64 = -1e9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSpec {
    pub length: f64,
    pub n_cells: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            length: 1.0,
            n_cells: 64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimeSpec {
    pub horizon: f64,
    pub n_steps: usize,
}

impl Default for TimeSpec {
    fn default() -> Self {
        TimeSpec {
            horizon: 1.0,
            n_steps: 128,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum OperatorFamily {
    /// `|ξ|^{p−2} ξ (1 + β/(1+λ²))`.
    #[default]
    PLaplacian,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OperatorSpec {
    pub family: OperatorFamily,
    pub p: f64,
    pub beta: f64,
    /// Overrides the sharp constants of the family.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub constants: Option<StructuralConstants>,
}

impl Default for OperatorSpec {
    fn default() -> Self {
        OperatorSpec {
            family: OperatorFamily::PLaplacian,
            p: 2.5,
            beta: 0.5,
            constants: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum AdditiveProfile {
    /// `g_k = a_k e_k` with geometric `a_k`, `Σ a_k² = C_g`.
    #[default]
    Geometric,
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum MultiplicativeProfile {
    /// `h_k(x, s) = c_k s` with geometric `c_k`, `Σ c_k² = C_σ`.
    #[default]
    LinearGeometric,
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSpec {
    pub modes: usize,
    pub gamma: f64,
    pub c_g: f64,
    pub c_sigma: f64,
    pub g_profile: AdditiveProfile,
    pub h_rule: MultiplicativeProfile,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec {
            modes: 8,
            gamma: 2.0,
            c_g: 0.05,
            c_sigma: 0.1,
            g_profile: AdditiveProfile::Geometric,
            h_rule: MultiplicativeProfile::LinearGeometric,
        }
    }
}

/// Named analytic profile `f(x, t)` sampled onto the step table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "profile", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Profile {
    Const {
        value: f64,
    },
    /// `offset + (amplitude + rate·t) sin²(πx/L)`.
    Bump {
        offset: f64,
        amplitude: f64,
        #[serde(default)]
        rate: f64,
    },
    /// `base + slope·x + rate·t`.
    RisingPlane {
        base: f64,
        slope: f64,
        #[serde(default)]
        rate: f64,
    },
    /// `offset + (amplitude + rate·t) sin(mode·πx/L)`.
    Sine {
        amplitude: f64,
        #[serde(default = "one")]
        mode: u32,
        #[serde(default)]
        offset: f64,
        #[serde(default)]
        rate: f64,
    },
    /// `ψ(x, 0) + shift`; only meaningful for initial data.
    ObstacleShift {
        shift: f64,
    },
}

fn one() -> u32 {
    1
}

impl Profile {
    fn eval(&self, x: f64, t: f64, length: f64) -> f64 {
        use std::f64::consts::PI;
        match *self {
            Profile::Const { value } => value,
            Profile::Bump {
                offset,
                amplitude,
                rate,
            } => {
                let s = (PI * x / length).sin();
                offset + (amplitude + rate * t) * s * s
            }
            Profile::RisingPlane { base, slope, rate } => base + slope * x + rate * t,
            Profile::Sine {
                amplitude,
                mode,
                offset,
                rate,
            } => offset + (amplitude + rate * t) * (mode as f64 * PI * x / length).sin(),
            Profile::ObstacleShift { .. } => unreachable!("resolved against the obstacle"),
        }
    }

    fn check(&self, field: &str, allow_shift: bool) -> Result<()> {
        let finite = match *self {
            Profile::Const { value } => value.is_finite(),
            Profile::Bump {
                offset,
                amplitude,
                rate,
            } => [offset, amplitude, rate].iter().all(|v| v.is_finite()),
            Profile::RisingPlane { base, slope, rate } => {
                [base, slope, rate].iter().all(|v| v.is_finite())
            }
            Profile::Sine {
                amplitude,
                offset,
                rate,
                ..
            } => [amplitude, offset, rate].iter().all(|v| v.is_finite()),
            Profile::ObstacleShift { shift } => {
                if !allow_shift {
                    return Err(Error::config(field, "profile 'obstacle-shift' is only valid for initial data"));
                }
                shift.is_finite()
            }
        };
        if finite {
            Ok(())
        } else {
            Err(Error::config(field, "profile parameters must be finite"))
        }
    }

    fn table(&self, grid: Grid, times: &[f64]) -> Vec<GridFunction> {
        times
            .iter()
            .map(|&t| GridFunction::from_fn(grid, |x| self.eval(x, t, grid.length())))
            .collect()
    }

    fn initial(&self, grid: Grid, obstacle: &Profile) -> GridFunction {
        match *self {
            Profile::ObstacleShift { shift } => {
                GridFunction::from_fn(grid, |x| obstacle.eval(x, 0.0, grid.length()) + shift)
            }
            _ => GridFunction::from_fn(grid, |x| self.eval(x, 0.0, grid.length())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PenaltySpec {
    /// Penalty used by single-ε suites and field dumps.
    pub epsilon: f64,
    /// Strictly decreasing ε sequence for decay and monotonicity.
    pub eps_list: Vec<f64>,
    /// Strictly decreasing ε sequence for the Lewy–Stampacchia suite. The
    /// defect `q_ε` only decays monotonically once `ε` is below the time step.
    pub ls_eps_list: Vec<f64>,
}

impl Default for PenaltySpec {
    fn default() -> Self {
        PenaltySpec {
            epsilon: 1e-3,
            eps_list: vec![1e-1, 1e-2, 1e-3, 1e-4],
            ls_eps_list: vec![2e-3, 1e-3, 5e-4, 2.5e-4, 1e-4],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegularizerSpec {
    pub delta: f64,
    pub m: u32,
    pub nu: f64,
}

impl Default for RegularizerSpec {
    fn default() -> Self {
        let d = HigherOrderRegularizer::disabled();
        RegularizerSpec {
            delta: d.delta,
            m: d.m,
            nu: d.nu,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MonteCarloSpec {
    pub n_paths: usize,
    pub base_seed: u64,
}

impl Default for MonteCarloSpec {
    fn default() -> Self {
        MonteCarloSpec {
            n_paths: 64,
            base_seed: 20_240_917,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialPair {
    pub first: Profile,
    pub second: Profile,
}

fn default_pairs() -> Vec<InitialPair> {
    vec![
        InitialPair {
            first: Profile::ObstacleShift { shift: 0.02 },
            second: Profile::ObstacleShift { shift: 0.1 },
        },
        InitialPair {
            first: Profile::ObstacleShift { shift: 0.0 },
            second: Profile::Sine {
                amplitude: 0.4,
                mode: 1,
                offset: 0.0,
                rate: 0.0,
            },
        },
        InitialPair {
            first: Profile::Const { value: 0.3 },
            second: Profile::Sine {
                amplitude: 0.3,
                mode: 3,
                offset: 0.1,
                rate: 0.0,
            },
        },
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleSpec {
    /// Strictly decreasing; the first two fix the rate constant.
    pub eps_list: Vec<f64>,
    pub psor: PsorSettings,
}

impl Default for OracleSpec {
    fn default() -> Self {
        OracleSpec {
            eps_list: vec![1e-5, 5e-6, 2.5e-6, 1.25e-6],
            psor: PsorSettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StructuralSpec {
    pub n_samples: usize,
    pub n_pairs: usize,
}

impl Default for StructuralSpec {
    fn default() -> Self {
        StructuralSpec {
            n_samples: 10_000,
            n_pairs: 1_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    Structural,
    PenaltyDecay,
    L1Contraction,
    EpsilonMonotonicity,
    Complementarity,
    LewyStampacchia,
    Oracle,
}

impl Suite {
    pub const ALL: [Suite; 7] = [
        Suite::Structural,
        Suite::PenaltyDecay,
        Suite::L1Contraction,
        Suite::EpsilonMonotonicity,
        Suite::Complementarity,
        Suite::LewyStampacchia,
        Suite::Oracle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Structural => "structural",
            Suite::PenaltyDecay => "penalty-decay",
            Suite::L1Contraction => "l1-contraction",
            Suite::EpsilonMonotonicity => "epsilon-monotonicity",
            Suite::Complementarity => "complementarity",
            Suite::LewyStampacchia => "lewy-stampacchia",
            Suite::Oracle => "oracle",
        }
    }
}

fn all_suites() -> Vec<Suite> {
    Suite::ALL.to_vec()
}

fn default_obstacle() -> Profile {
    Profile::Bump {
        offset: -0.05,
        amplitude: 0.15,
        rate: 0.05,
    }
}

fn default_source() -> Profile {
    Profile::Const { value: -2.0 }
}

fn default_initial() -> Profile {
    Profile::ObstacleShift { shift: 0.05 }
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

fn default_schema() -> u32 {
    SCHEMA_VERSION
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_schema")]
    pub schema_version: u32,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default = "all_suites")]
    pub tests: Vec<Suite>,
    #[serde(default)]
    pub initial_policy: InitialPolicy,
    /// Paths whose `u`, `ρ`, `h⁻` series are written by `run`.
    #[serde(default)]
    pub dump_paths: Vec<usize>,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default)]
    pub time: TimeSpec,
    #[serde(default)]
    pub operator: OperatorSpec,
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default = "default_obstacle")]
    pub obstacle: Profile,
    #[serde(default = "default_source")]
    pub source: Profile,
    #[serde(default = "default_initial")]
    pub initial: Profile,
    #[serde(default)]
    pub penalty: PenaltySpec,
    #[serde(default)]
    pub newton: NewtonSettings,
    #[serde(default)]
    pub regularizer: RegularizerSpec,
    #[serde(default)]
    pub monte_carlo: MonteCarloSpec,
    #[serde(default = "default_pairs")]
    pub l1_pairs: Vec<InitialPair>,
    #[serde(default)]
    pub oracle: OracleSpec,
    #[serde(default)]
    pub structural: StructuralSpec,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            schema_version: SCHEMA_VERSION,
            output_dir: default_output(),
            tests: all_suites(),
            initial_policy: InitialPolicy::default(),
            dump_paths: Vec::new(),
            grid: GridSpec::default(),
            time: TimeSpec::default(),
            operator: OperatorSpec::default(),
            noise: NoiseSpec::default(),
            obstacle: default_obstacle(),
            source: default_source(),
            initial: default_initial(),
            penalty: PenaltySpec::default(),
            newton: NewtonSettings::default(),
            regularizer: RegularizerSpec::default(),
            monte_carlo: MonteCarloSpec::default(),
            l1_pairs: default_pairs(),
            oracle: OracleSpec::default(),
            structural: StructuralSpec::default(),
        }
    }
}

fn positive(field: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::config(field, format!("must be positive and finite, got {v}")))
    }
}

fn decreasing_list(field: &str, list: &[f64]) -> Result<()> {
    for (i, &e) in list.iter().enumerate() {
        positive(&format!("{field}[{i}]"), e)?;
    }
    if list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::config(field, "must be strictly decreasing"));
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    /// Field-level checks followed by a full problem build, so that every
    /// downstream invariant (including the initial-data policy) is resolved.
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::config(
                "schema_version",
                format!("unsupported version {}, expected {SCHEMA_VERSION}", self.schema_version),
            ));
        }
        positive("grid.length", self.grid.length)?;
        if self.grid.n_cells < 2 {
            return Err(Error::config("grid.n_cells", "must be >= 2"));
        }
        positive("time.horizon", self.time.horizon)?;
        if !(self.operator.p.is_finite() && self.operator.p > 1.0) {
            return Err(Error::config("operator.p", "must exceed 1"));
        }
        if !(self.operator.beta.is_finite() && self.operator.beta >= 0.0) {
            return Err(Error::config("operator.beta", "must be non-negative"));
        }
        if !(self.noise.gamma.is_finite() && self.noise.gamma > 1.0) {
            return Err(Error::config("noise.gamma", "must exceed 1 for a trace-class covariance"));
        }
        if !(self.noise.c_g.is_finite() && self.noise.c_g >= 0.0) {
            return Err(Error::config("noise.c_g", "must be non-negative"));
        }
        if !(self.noise.c_sigma.is_finite() && self.noise.c_sigma >= 0.0) {
            return Err(Error::config("noise.c_sigma", "must be non-negative"));
        }
        if self.noise.modes >= self.grid.n_cells {
            return Err(Error::config("noise.modes", "must be below grid.n_cells"));
        }
        self.obstacle.check("obstacle", false)?;
        self.source.check("source", false)?;
        self.initial.check("initial", true)?;
        positive("penalty.epsilon", self.penalty.epsilon)?;
        decreasing_list("penalty.eps_list", &self.penalty.eps_list)?;
        decreasing_list("penalty.ls_eps_list", &self.penalty.ls_eps_list)?;
        decreasing_list("oracle.eps_list", &self.oracle.eps_list)?;
        self.newton.validate()?;
        if !(self.oracle.psor.tol > 0.0) {
            return Err(Error::config("oracle.psor.tol", "must be positive"));
        }
        if self.monte_carlo.n_paths == 0 {
            return Err(Error::config("monte_carlo.n_paths", "must be >= 1"));
        }
        for (i, p) in self.l1_pairs.iter().enumerate() {
            p.first.check(&format!("l1_pairs[{i}].first"), true)?;
            p.second.check(&format!("l1_pairs[{i}].second"), true)?;
        }
        if let Some(&k) = self.dump_paths.iter().find(|&&k| k >= self.monte_carlo.n_paths) {
            return Err(Error::config("dump_paths", format!("path {k} is not below n_paths")));
        }
        for suite in &self.tests {
            match suite {
                Suite::PenaltyDecay if self.penalty.eps_list.len() < 3 => {
                    return Err(Error::config("penalty.eps_list", "needs at least 3 values"));
                }
                Suite::LewyStampacchia if self.penalty.ls_eps_list.len() < 3 => {
                    return Err(Error::config("penalty.ls_eps_list", "needs at least 3 values"));
                }
                Suite::EpsilonMonotonicity if self.penalty.eps_list.len() < 2 => {
                    return Err(Error::config("penalty.eps_list", "needs at least 2 values"));
                }
                Suite::Oracle if self.oracle.eps_list.len() < 2 => {
                    return Err(Error::config("oracle.eps_list", "needs at least 2 values"));
                }
                _ => {}
            }
        }
        self.build_problem()?;
        Ok(())
    }

    /// SHA-256 of the resolved config with the output directory blanked.
    pub fn hash(&self) -> Result<String> {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        Ok(hex::encode(Sha256::digest(c.to_toml_string()?.as_bytes())))
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.grid.length, self.grid.n_cells)
    }

    fn times(&self) -> Vec<f64> {
        let n = self.time.n_steps;
        let dt = self.time.horizon / n.max(1) as f64;
        (0..=n).map(|k| k as f64 * dt).collect()
    }

    fn operator(&self, grid: Grid) -> Result<LerayLionsOperator> {
        let op = match self.operator.family {
            OperatorFamily::PLaplacian => {
                LerayLionsOperator::p_laplacian(grid, self.operator.p, self.operator.beta)?
            }
        };
        Ok(match self.operator.constants {
            Some(c) => op.with_constants(c),
            None => op,
        })
    }

    fn noise(&self, grid: Grid) -> Result<SpectralNoiseModel> {
        let k = self.noise.modes;
        if k == 0 {
            return Ok(SpectralNoiseModel::silent(grid));
        }
        let additive = match self.noise.g_profile {
            AdditiveProfile::Geometric => sine_basis(grid, k)
                .into_iter()
                .zip(geometric_weights(k, self.noise.c_g))
                .map(|(e, a)| e.scale(a))
                .collect(),
            AdditiveProfile::Zero => vec![GridFunction::zeros(grid); k],
        };
        let rule = match self.noise.h_rule {
            MultiplicativeProfile::LinearGeometric => LinearRule::geometric(k, self.noise.c_sigma),
            MultiplicativeProfile::Zero => LinearRule { coeffs: vec![0.0; k] },
        };
        SpectralNoiseModel::new(
            grid,
            power_law_spectrum(k, self.noise.gamma),
            additive,
            Arc::new(rule),
            self.noise.c_g,
            self.noise.c_sigma,
        )
    }

    fn assemble(
        &self,
        operator: LerayLionsOperator,
        noise: SpectralNoiseModel,
        obstacle: &Profile,
        initial: Option<GridFunction>,
    ) -> Result<PenalizedProblem> {
        let grid = *operator.grid();
        let times = self.times();
        let initial = initial.unwrap_or_else(|| self.initial.initial(grid, &self.obstacle));
        let problem = PenalizedProblem::new(
            operator,
            noise,
            self.penalty.epsilon,
            self.time.horizon,
            obstacle.table(grid, &times),
            self.source.table(grid, &times),
            initial,
            self.initial_policy,
        )?;
        let reg = if self.regularizer.delta > 0.0 {
            HigherOrderRegularizer::new(
                self.regularizer.delta,
                self.regularizer.m,
                self.regularizer.nu,
                self.operator.p,
            )
            .map_err(|e| Error::config("regularizer", e.to_string()))?
        } else {
            HigherOrderRegularizer::disabled()
        };
        Ok(problem.with_regularizer(reg).with_newton(self.newton))
    }

    /// The stochastic problem at `penalty.epsilon`.
    pub fn build_problem(&self) -> Result<PenalizedProblem> {
        let grid = self.grid()?;
        self.assemble(self.operator(grid)?, self.noise(grid)?, &self.obstacle, None)
    }

    /// Deterministic heat obstacle problem sharing grid, data and horizon:
    /// `p = 2`, `β = 0`, `K = 0`, no regularizer. With `inactive` the
    /// obstacle is moved far below the solution.
    pub fn build_oracle_problem(&self, inactive: bool) -> Result<PenalizedProblem> {
        let grid = self.grid()?;
        let active = self.assemble(
            LerayLionsOperator::p_laplacian(grid, 2.0, 0.0)?,
            SpectralNoiseModel::silent(grid),
            &self.obstacle,
            None,
        )?
        .with_regularizer(HigherOrderRegularizer::disabled());
        if !inactive {
            return Ok(active);
        }
        self.assemble(
            LerayLionsOperator::p_laplacian(grid, 2.0, 0.0)?,
            SpectralNoiseModel::silent(grid),
            &Profile::Const { value: FAR_BELOW },
            Some(active.initial().clone()),
        )
        .map(|p| p.with_regularizer(HigherOrderRegularizer::disabled()))
    }

    pub fn mc(&self, workers: usize) -> McSettings {
        McSettings::new(self.monte_carlo.n_paths, self.monte_carlo.base_seed).with_workers(workers)
    }
}

/// Reads, parses and validates a config file.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    let cfg: ExperimentConfig = toml::from_str(&text)
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    pub workers: usize,
    /// Write artifact files to `config.output_dir`.
    pub write: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            workers: 1,
            write: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunArtifact {
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub seed: u64,
    pub reports: Vec<PropertyReport>,
    pub fits: Vec<RateFit>,
}

impl RunArtifact {
    pub fn pass(&self) -> bool {
        self.reports.iter().all(PropertyReport::pass)
    }

    pub fn report(&self, name: &str) -> Option<&PropertyReport> {
        self.reports.iter().find(|r| r.name == name)
    }

    /// One line per report: `name  PASS|FAIL`.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        for r in &self.reports {
            let _ = writeln!(s, "{:<28}{}", r.name, if r.pass() { "PASS" } else { "FAIL" });
        }
        s
    }
}

fn run_suite(
    suite: Suite,
    cfg: &ExperimentConfig,
    problem: &PenalizedProblem,
    mc: &McSettings,
    reports: &mut Vec<PropertyReport>,
    fits: &mut Vec<RateFit>,
) {
    let n = mc.n_paths;
    let mut record = |name: &str, out: Result<PropertyReport>| {
        reports.push(out.unwrap_or_else(|e| PropertyReport::failed(name, n, e.to_string())));
    };
    match suite {
        Suite::Structural => record(
            "structural",
            verify::structural_test(
                problem,
                cfg.structural.n_samples,
                cfg.structural.n_pairs,
                mc.base_seed,
            ),
        ),
        Suite::PenaltyDecay => {
            match verify::penalty_decay_test(problem, &cfg.penalty.eps_list, mc) {
                Ok(d) => {
                    fits.push(d.fit);
                    reports.push(d.report);
                }
                Err(e) => record("penalty-decay", Err(e)),
            }
        }
        Suite::L1Contraction => {
            for (i, pair) in cfg.l1_pairs.iter().enumerate() {
                let grid = *problem.grid();
                let u1 = pair.first.initial(grid, &cfg.obstacle);
                let u2 = pair.second.initial(grid, &cfg.obstacle);
                let out = verify::l1_contraction_test(problem, &u1, &u2, mc).map(|mut r| {
                    r.name = format!("l1-contraction-{i}");
                    r
                });
                record(&format!("l1-contraction-{i}"), out);
            }
        }
        Suite::EpsilonMonotonicity => record(
            "epsilon-monotonicity",
            verify::epsilon_monotonicity_test(problem, &cfg.penalty.eps_list, mc),
        ),
        Suite::Complementarity => record(
            "complementarity",
            verify::complementarity_test(problem, cfg.penalty.epsilon, mc),
        ),
        Suite::LewyStampacchia => {
            match verify::lewy_stampacchia_test(problem, &cfg.penalty.ls_eps_list, mc) {
                Ok(d) => {
                    fits.push(d.fit);
                    reports.push(d.report);
                }
                Err(e) => record("lewy-stampacchia", Err(e)),
            }
        }
        Suite::Oracle => {
            for (name, inactive) in [("oracle-heat-obstacle", false), ("oracle-heat-inactive", true)] {
                let out = cfg
                    .build_oracle_problem(inactive)
                    .and_then(|p| verify::oracle_heat_obstacle_test(&p, &cfg.oracle.eps_list, &cfg.oracle.psor))
                    .map(|mut r| {
                        r.name = name.into();
                        r
                    });
                record(name, out);
            }
        }
    }
}

/// Runs the selected suites. Suite failures are recorded and the remaining
/// suites still run; only config and I/O problems abort.
pub fn run_experiment(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RunArtifact> {
    cfg.validate()?;
    let problem = cfg.build_problem()?;
    let mc = cfg.mc(opts.workers);
    let mut reports = Vec::new();
    let mut fits = Vec::new();
    for &suite in &cfg.tests {
        run_suite(suite, cfg, &problem, &mc, &mut reports, &mut fits);
    }
    let artifact = RunArtifact {
        config: cfg.clone(),
        config_hash: cfg.hash()?,
        seed: cfg.monte_carlo.base_seed,
        reports,
        fits,
    };
    if opts.write {
        write_artifact(&artifact, &cfg.output_dir, opts.workers)?;
        for &k in &cfg.dump_paths {
            dump_fields(cfg, k, &cfg.output_dir)?;
        }
    }
    Ok(artifact)
}

fn fmt_num(v: f64) -> String {
    format!("{v}")
}

fn header(artifact: &RunArtifact, kind: &str, name: &str) -> String {
    format!(
        "# {kind}={name},config_hash={},seed={}\n",
        artifact.config_hash, artifact.seed
    )
}

/// `quantity,value,ci95,threshold,pass` table of one report.
pub fn report_csv(artifact: &RunArtifact, report: &PropertyReport) -> String {
    let mut s = header(artifact, "report", &report.name);
    if let Some(e) = &report.error {
        let _ = writeln!(s, "# error={}", e.replace('\n', " "));
    }
    s.push_str("quantity,value,ci95,threshold,pass\n");
    for q in &report.quantities {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            q.name,
            fmt_num(q.value),
            fmt_num(q.ci95),
            q.threshold.map(fmt_num).unwrap_or_default(),
            q.pass.map(|p| p.to_string()).unwrap_or_default()
        );
    }
    s
}

#[derive(Serialize)]
struct IndexEntry<'a> {
    name: &'a str,
    file: String,
    raw_file: String,
    pass: bool,
    error: Option<&'a str>,
}

#[derive(Serialize)]
struct Index<'a> {
    schema_version: u32,
    config_hash: &'a str,
    seed: u64,
    pass: bool,
    reports: Vec<IndexEntry<'a>>,
    fits: &'a [RateFit],
}

#[derive(Serialize)]
struct Metadata {
    created_unix_seconds: u64,
    workers: usize,
    version: &'static str,
}

fn write(dir: &Path, file: &str, body: &str) -> Result<()> {
    fs::write(dir.join(file), body)?;
    Ok(())
}

pub fn write_artifact(artifact: &RunArtifact, dir: &Path, workers: usize) -> Result<()> {
    fs::create_dir_all(dir)?;
    write(dir, "config.toml", &artifact.config.to_toml_string()?)?;
    let mut entries = Vec::new();
    for r in &artifact.reports {
        let file = format!("{}.csv", r.name);
        let raw_file = format!("{}.raw.csv", r.name);
        write(dir, &file, &report_csv(artifact, r))?;
        let mut raw = header(artifact, "raw", &r.name);
        raw.push_str("path,value\n");
        for (i, v) in r.raw.iter().enumerate() {
            let _ = writeln!(raw, "{i},{}", fmt_num(*v));
        }
        write(dir, &raw_file, &raw)?;
        entries.push(IndexEntry {
            name: &r.name,
            file,
            raw_file,
            pass: r.pass(),
            error: r.error.as_deref(),
        });
    }
    for f in &artifact.fits {
        let mut s = header(artifact, "fit", &f.name);
        s.push_str("epsilon,value\n");
        for (e, v) in f.eps.iter().zip(&f.values) {
            let _ = writeln!(s, "{},{}", fmt_num(*e), fmt_num(*v));
        }
        write(dir, &format!("fit-{}.csv", f.name), &s)?;
    }
    let index = Index {
        schema_version: SCHEMA_VERSION,
        config_hash: &artifact.config_hash,
        seed: artifact.seed,
        pass: artifact.pass(),
        reports: entries,
        fits: &artifact.fits,
    };
    let json = serde_json::to_string_pretty(&index).map_err(|e| Error::Parse(e.to_string()))?;
    write(dir, "index.json", &(json + "\n"))?;
    let meta = Metadata {
        created_unix_seconds: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        workers,
        version: env!("CARGO_PKG_VERSION"),
    };
    let json = serde_json::to_string_pretty(&meta).map_err(|e| Error::Parse(e.to_string()))?;
    write(dir, "metadata.json", &(json + "\n"))?;
    Ok(())
}

/// Writes `fields-path<k>.csv` (`t,x,u,rho,psi,h_minus`) for path `k` at
/// `penalty.epsilon`. `h_minus` at `t_{n+1}` is the residual of step
/// `n → n+1` and is `NaN` at `t = 0`.
pub fn dump_fields(cfg: &ExperimentConfig, path_index: usize, dir: &Path) -> Result<PathBuf> {
    let problem = cfg.build_problem()?;
    let mc = cfg.mc(1);
    let path = sample_path(mc.path_seed(path_index), problem.n_steps(), problem.dt(), problem.noise().modes())?;
    let sol = solve_path(&problem, &path)?;
    let h = compute_h(&problem, &path)?;
    let mut s = format!(
        "# fields=path{path_index},config_hash={},seed={},path_seed={},epsilon={}\n",
        cfg.hash()?,
        cfg.monte_carlo.base_seed,
        mc.path_seed(path_index),
        fmt_num(problem.epsilon())
    );
    s.push_str("t,x,u,rho,psi,h_minus\n");
    let nodes = problem.grid().nodes();
    for (n, t) in sol.times.iter().enumerate() {
        let psi = problem.obstacle(n);
        for (i, x) in nodes.iter().enumerate() {
            let hm = if n == 0 { f64::NAN } else { h.h_minus[n - 1].values()[i] };
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                fmt_num(*t),
                fmt_num(*x),
                fmt_num(sol.u[n].values()[i]),
                fmt_num(sol.rho[n].values()[i]),
                fmt_num(psi.values()[i]),
                fmt_num(hm)
            );
        }
    }
    fs::create_dir_all(dir)?;
    let file = dir.join(format!("fields-path{path_index}.csv"));
    fs::write(&file, s)?;
    Ok(file)
}
