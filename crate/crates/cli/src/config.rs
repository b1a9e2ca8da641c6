//! Run configuration: TOML schema, validation and model construction.
//!
//! Parsing errors come from `toml` with line and column. Semantic checks
//! run afterwards, before anything is simulated, and point at the line of
//! the offending key when it can be found in the source.

use std::fmt;
use std::path::PathBuf;
use std::sync::Arc;

use levy_malliavin::drift::{DriftModel, FlatDrift, LinearDrift, LinearSineDrift, TanhDrift};
use levy_malliavin::levy_model::{
    check_assumption_h, AssumptionReport, GaussianCompoundPoisson, LevyDensity, LevyModel, PerturbationSpec,
    TemperedStable, DEFAULT_MIN_PERTURBED_MASS,
};
use levy_malliavin::variation::{default_step, Simulator};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub model: ModelConfig,
    pub task: TaskConfig,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub levy: LevyConfig,
    pub drift: DriftConfig,
    #[serde(default)]
    pub z_drift: f64,
    pub u0: f64,
    pub u1: f64,
    /// Truncation level; derived from `min_perturbed_mass` when absent.
    pub eps_trunc: Option<f64>,
    #[serde(default = "default_mass")]
    pub min_perturbed_mass: f64,
    /// ODE step bound; `min(Δ/200, 1e-3)` for the shortest horizon when absent.
    pub max_dt: Option<f64>,
    #[serde(default)]
    pub assumption_h: AssumptionPolicy,
}

fn default_mass() -> f64 {
    DEFAULT_MIN_PERTURBED_MASS
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssumptionPolicy {
    #[default]
    Warn,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LevyConfig {
    TemperedStable {
        alpha: f64,
        lambda_plus: f64,
        lambda_minus: f64,
        scale_plus: f64,
        scale_minus: f64,
        #[serde(default)]
        one_sided: bool,
    },
    GaussianCompoundPoisson {
        rate: f64,
        mean: f64,
        std_dev: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DriftConfig {
    Linear {
        theta_min: f64,
        theta_max: f64,
    },
    Tanh {
        theta_min: f64,
        theta_max: f64,
    },
    LinearSine {
        amplitude: f64,
        theta_min: f64,
        theta_max: f64,
    },
    Flat {
        rate: f64,
        theta_min: f64,
        theta_max: f64,
    },
}

impl DriftConfig {
    pub fn interval(&self) -> (f64, f64) {
        match *self {
            DriftConfig::Linear { theta_min, theta_max }
            | DriftConfig::Tanh { theta_min, theta_max }
            | DriftConfig::LinearSine {
                theta_min, theta_max, ..
            }
            | DriftConfig::Flat {
                theta_min, theta_max, ..
            } => (theta_min, theta_max),
        }
    }

    pub fn build(&self) -> Arc<dyn DriftModel> {
        match *self {
            DriftConfig::Linear { theta_min, theta_max } => Arc::new(LinearDrift { theta_min, theta_max }),
            DriftConfig::Tanh { theta_min, theta_max } => Arc::new(TanhDrift { theta_min, theta_max }),
            DriftConfig::LinearSine {
                amplitude,
                theta_min,
                theta_max,
            } => Arc::new(LinearSineDrift {
                amplitude,
                theta_min,
                theta_max,
            }),
            DriftConfig::Flat {
                rate,
                theta_min,
                theta_max,
            } => Arc::new(FlatDrift {
                rate,
                theta_min,
                theta_max,
            }),
        }
    }
}

/// Either explicit points or `points` equally spaced values from `start`
/// to `stop` inclusive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum Grid {
    Points(Vec<f64>),
    Range { start: f64, stop: f64, points: usize },
}

impl Grid {
    pub fn values(&self) -> Vec<f64> {
        match *self {
            Grid::Points(ref v) => v.clone(),
            Grid::Range { start, stop, points } => match points {
                0 => Vec::new(),
                1 => vec![start],
                n => (0..n)
                    .map(|i| start + (stop - start) * i as f64 / (n - 1) as f64)
                    .collect(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TaskConfig {
    Simulate(SimulateTask),
    Density(DensityTask),
    Score(ScoreTask),
    Fisher(FisherTask),
    Mle(MleTask),
    Crlb(CrlbTask),
    Validate(ValidateTask),
}

impl TaskConfig {
    pub fn name(&self) -> &'static str {
        match self {
            TaskConfig::Simulate(_) => "simulate",
            TaskConfig::Density(_) => "density",
            TaskConfig::Score(_) => "score",
            TaskConfig::Fisher(_) => "fisher",
            TaskConfig::Mle(_) => "mle",
            TaskConfig::Crlb(_) => "crlb",
            TaskConfig::Validate(_) => "validate",
        }
    }
}

fn one() -> usize {
    1
}

fn yes() -> bool {
    true
}

/// Dumps full variation paths on `[0, t]` and, optionally, an observed chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateTask {
    pub theta: f64,
    pub x0: f64,
    pub t: f64,
    #[serde(default = "one")]
    pub n_paths: usize,
    pub observation_times: Option<Grid>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensityTask {
    pub theta: f64,
    pub x0: f64,
    pub t: f64,
    pub n_paths: usize,
    pub y: Grid,
    /// also report the `δ(Ξ/DX)` representation
    #[serde(default = "yes")]
    pub dual_form: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreTask {
    pub theta: f64,
    pub x0: f64,
    pub t: f64,
    pub n_paths: usize,
    pub y: Grid,
    /// central bandwidth; Silverman's rule when absent
    pub bandwidth: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FisherTask {
    pub theta: Grid,
    pub x0: f64,
    pub times: Grid,
    pub n_outer: usize,
    pub n_inner: usize,
    pub bandwidth: Option<f64>,
    #[serde(default = "yes")]
    pub debias: bool,
}

fn default_bracket() -> [f64; 2] {
    [0.2, 2.9]
}

fn default_curve_points() -> usize {
    15
}

fn default_tol() -> f64 {
    1e-3
}

fn default_log_floor() -> f64 {
    -20.0
}

fn default_outer() -> usize {
    20
}

fn default_inner() -> usize {
    1000
}

/// Maximum likelihood from an observation file or from a simulated chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MleTask {
    pub observations: Option<PathBuf>,
    pub theta_true: Option<f64>,
    pub x0: Option<f64>,
    pub times: Option<Grid>,
    pub n_paths: usize,
    #[serde(default = "default_bracket")]
    pub bracket: [f64; 2],
    #[serde(default = "default_curve_points")]
    pub curve_points: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_log_floor")]
    pub log_floor: f64,
    /// Fisher information at θ̂ (and the bound `1/Î`)
    #[serde(default = "yes")]
    pub fisher: bool,
    #[serde(default = "default_outer")]
    pub n_outer: usize,
    #[serde(default = "default_inner")]
    pub n_inner: usize,
}

/// Replicated MLE study against the Cramér–Rao bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrlbTask {
    pub theta_true: f64,
    pub x0: f64,
    pub times: Grid,
    pub replicas: usize,
    pub n_paths: usize,
    #[serde(default = "default_bracket")]
    pub bracket: [f64; 2],
    #[serde(default = "default_curve_points")]
    pub curve_points: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_log_floor")]
    pub log_floor: f64,
    pub n_outer: usize,
    pub n_inner: usize,
    #[serde(default = "yes")]
    pub debias: bool,
    /// Step of the bias-slope difference; reruns the study at `θ ± step`
    /// on the same seeds. The slope is taken as 0 when absent.
    pub bias_slope_step: Option<f64>,
}

fn default_validate_paths() -> usize {
    20_000
}

fn default_fixed_paths() -> usize {
    20
}

/// Oracle suite on the configured model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidateTask {
    pub theta: f64,
    pub x0: f64,
    pub t: f64,
    #[serde(default = "default_validate_paths")]
    pub n_paths: usize,
    #[serde(default = "default_fixed_paths")]
    pub n_fixed_paths: usize,
}

/// A configuration problem, with the source line when known.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub key: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: `{}`: {}", self.key, self.message),
            None if self.key.is_empty() => write!(f, "{}", self.message),
            None => write!(f, "`{}`: {}", self.key, self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

/// 1-based line of `key` inside `[table]` (dotted; empty for the root).
fn unknown_field(message: &str) -> Option<&str> {
    let rest = message.strip_prefix("unknown field `")?;
    rest.split('`').next()
}

/// Name of the table whose header is at or above 1-based `line`.
fn enclosing_table(source: &str, line: usize) -> Option<String> {
    source
        .lines()
        .take(line)
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| l.starts_with('[') && l.ends_with(']'))
        .last()
        .map(|l| l.trim_matches(|c| c == '[' || c == ']').trim().to_string())
}

fn find_key_line(source: &str, table: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    for (i, raw) in source.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.starts_with('[') && line.ends_with(']') {
            current = line.trim_matches(|c| c == '[' || c == ']').trim().to_string();
            continue;
        }
        if current == table {
            if let Some((k, _)) = line.split_once('=') {
                if k.trim() == key {
                    return Some(i + 1);
                }
            }
        }
    }
    None
}

struct Checker<'a> {
    source: &'a str,
    errors: Vec<ConfigError>,
}

impl Checker<'_> {
    fn fail(&mut self, table: &str, key: &str, message: impl Into<String>) {
        let full = if table.is_empty() {
            key.to_string()
        } else {
            format!("{table}.{key}")
        };
        self.errors.push(ConfigError {
            line: find_key_line(self.source, table, key),
            key: full,
            message: message.into(),
        });
    }

    fn positive(&mut self, table: &str, key: &str, v: f64) {
        if !(v > 0.0 && v.is_finite()) {
            self.fail(table, key, format!("must be positive and finite, got {v}"));
        }
    }

    fn finite(&mut self, table: &str, key: &str, v: f64) {
        if !v.is_finite() {
            self.fail(table, key, format!("must be finite, got {v}"));
        }
    }

    fn count(&mut self, table: &str, key: &str, v: usize, min: usize) {
        if v < min {
            self.fail(table, key, format!("must be at least {min}, got {v}"));
        }
    }

    fn in_theta(&mut self, key: &str, v: f64, (lo, hi): (f64, f64)) {
        if !(v > lo && v < hi) {
            self.fail(
                "task",
                key,
                format!("{v} is outside the parameter interval ({lo}, {hi})"),
            );
        }
    }

    fn grid(&mut self, key: &str, g: &Grid) -> Vec<f64> {
        if let Grid::Range { start, stop, points } = *g {
            if points == 0 {
                self.fail("task", key, "range needs at least one point");
            } else if points > 1 && !(start < stop) {
                self.fail("task", key, format!("range needs start < stop, got {start} and {stop}"));
            }
        }
        let v = g.values();
        if v.is_empty() {
            self.fail("task", key, "grid is empty");
        }
        if v.iter().any(|x| !x.is_finite()) {
            self.fail("task", key, "grid values must be finite");
        }
        v
    }

    fn times(&mut self, key: &str, g: &Grid) -> Vec<f64> {
        let v = self.grid(key, g);
        if let Some(first) = v.first() {
            if !(*first > 0.0) {
                self.fail("task", key, format!("observation times must be positive, got {first}"));
            }
        }
        if let Some(w) = v.windows(2).find(|w| w[1] <= w[0]) {
            self.fail(
                "task",
                key,
                format!(
                    "observation times must be strictly increasing, got {} then {}",
                    w[0], w[1]
                ),
            );
        }
        v
    }

    fn bracket(&mut self, b: [f64; 2], theta: (f64, f64)) {
        if !(b[0] < b[1]) {
            self.fail("task", "bracket", format!("need lower < upper, got {:?}", b));
        }
        for v in b {
            if !(v > theta.0 && v < theta.1) {
                self.fail(
                    "task",
                    "bracket",
                    format!("{v} is outside the parameter interval ({}, {})", theta.0, theta.1),
                );
            }
        }
    }
}

impl RunConfig {
    /// Parses and validates; every problem found is reported.
    pub fn from_toml(source: &str) -> Result<Self, Vec<ConfigError>> {
        let cfg: RunConfig = toml::from_str(source).map_err(|e| {
            let mut line = e
                .span()
                .map(|s| source[..s.start.min(source.len())].matches('\n').count() + 1);
            let mut key = String::new();
            // Internally tagged tables lose field spans, so the reported span
            // is the table header. Look the offending key up by name instead.
            if let (Some(l), Some(field)) = (line, unknown_field(e.message())) {
                if let Some(table) = enclosing_table(source, l) {
                    if let Some(found) = find_key_line(source, &table, field) {
                        line = Some(found);
                        key = format!("{table}.{field}");
                    }
                }
            }
            vec![ConfigError {
                line,
                key,
                message: e.message().to_string(),
            }]
        })?;
        cfg.validate(source)?;
        Ok(cfg)
    }

    pub fn validate(&self, source: &str) -> Result<(), Vec<ConfigError>> {
        let mut c = Checker {
            source,
            errors: Vec::new(),
        };
        let m = &self.model;
        c.positive("model", "u0", m.u0);
        c.positive("model", "u1", m.u1);
        if m.u1 > 0.0 && !(m.u1 < m.u0) {
            c.fail("model", "u1", format!("must be below u0 = {}, got {}", m.u0, m.u1));
        }
        c.finite("model", "z_drift", m.z_drift);
        if let Some(e) = m.eps_trunc {
            if !(e > 0.0 && e < m.u1) {
                c.fail("model", "eps_trunc", format!("must lie in (0, u1 = {}), got {e}", m.u1));
            }
        }
        c.positive("model", "min_perturbed_mass", m.min_perturbed_mass);
        if let Some(dt) = m.max_dt {
            c.positive("model", "max_dt", dt);
        }
        if let Err(e) = self.levy_density() {
            c.fail("model.levy", "kind", e.to_string());
        }
        let theta = m.drift.interval();
        if !(theta.0 < theta.1) {
            c.fail(
                "model.drift",
                "theta_min",
                format!("need theta_min < theta_max, got {theta:?}"),
            );
        }
        match &self.task {
            TaskConfig::Simulate(t) => {
                c.in_theta("theta", t.theta, theta);
                c.finite("task", "x0", t.x0);
                c.positive("task", "t", t.t);
                if let Some(g) = &t.observation_times {
                    c.times("observation_times", g);
                }
            }
            TaskConfig::Density(t) => {
                c.in_theta("theta", t.theta, theta);
                c.finite("task", "x0", t.x0);
                c.positive("task", "t", t.t);
                c.count("task", "n_paths", t.n_paths, 2);
                c.grid("y", &t.y);
            }
            TaskConfig::Score(t) => {
                c.in_theta("theta", t.theta, theta);
                c.finite("task", "x0", t.x0);
                c.positive("task", "t", t.t);
                c.count("task", "n_paths", t.n_paths, 2);
                c.grid("y", &t.y);
                if let Some(h) = t.bandwidth {
                    c.positive("task", "bandwidth", h);
                }
            }
            TaskConfig::Fisher(t) => {
                for v in c.grid("theta", &t.theta) {
                    c.in_theta("theta", v, theta);
                }
                c.finite("task", "x0", t.x0);
                c.times("times", &t.times);
                c.count("task", "n_outer", t.n_outer, 2);
                c.count("task", "n_inner", t.n_inner, 2);
                if let Some(h) = t.bandwidth {
                    c.positive("task", "bandwidth", h);
                }
            }
            TaskConfig::Mle(t) => {
                match (&t.observations, t.theta_true, t.x0, &t.times) {
                    (Some(_), None, None, None) => {}
                    (None, Some(th), Some(x0), Some(times)) => {
                        c.in_theta("theta_true", th, theta);
                        c.finite("task", "x0", x0);
                        c.times("times", times);
                    }
                    _ => c.fail(
                        "task",
                        "observations",
                        "give either `observations` or all of `theta_true`, `x0` and `times`",
                    ),
                }
                c.count("task", "n_paths", t.n_paths, 2);
                c.bracket(t.bracket, theta);
                c.count("task", "curve_points", t.curve_points, 3);
                c.positive("task", "tol", t.tol);
                c.finite("task", "log_floor", t.log_floor);
                c.count("task", "n_outer", t.n_outer, 2);
                c.count("task", "n_inner", t.n_inner, 2);
            }
            TaskConfig::Crlb(t) => {
                c.in_theta("theta_true", t.theta_true, theta);
                c.finite("task", "x0", t.x0);
                c.times("times", &t.times);
                c.count("task", "replicas", t.replicas, 2);
                c.count("task", "n_paths", t.n_paths, 2);
                c.bracket(t.bracket, theta);
                c.count("task", "curve_points", t.curve_points, 3);
                c.positive("task", "tol", t.tol);
                c.finite("task", "log_floor", t.log_floor);
                c.count("task", "n_outer", t.n_outer, 2);
                c.count("task", "n_inner", t.n_inner, 2);
                if let Some(h) = t.bias_slope_step {
                    c.positive("task", "bias_slope_step", h);
                    c.in_theta("bias_slope_step", t.theta_true - h, theta);
                    c.in_theta("bias_slope_step", t.theta_true + h, theta);
                }
            }
            TaskConfig::Validate(t) => {
                c.in_theta("theta", t.theta, theta);
                c.finite("task", "x0", t.x0);
                c.positive("task", "t", t.t);
                c.count("task", "n_paths", t.n_paths, 100);
                c.count("task", "n_fixed_paths", t.n_fixed_paths, 1);
            }
        }
        if c.errors.is_empty() {
            Ok(())
        } else {
            Err(c.errors)
        }
    }

    pub fn levy_density(&self) -> levy_malliavin::Result<Arc<dyn LevyDensity>> {
        Ok(match self.model.levy {
            LevyConfig::TemperedStable {
                alpha,
                lambda_plus,
                lambda_minus,
                scale_plus,
                scale_minus,
                one_sided,
            } => Arc::new(
                TemperedStable {
                    alpha,
                    lambda_plus,
                    lambda_minus,
                    scale_plus,
                    scale_minus,
                    one_sided,
                }
                .validated()?,
            ),
            LevyConfig::GaussianCompoundPoisson { rate, mean, std_dev } => {
                if !(rate >= 0.0 && std_dev > 0.0 && mean.is_finite()) {
                    return Err(levy_malliavin::Error::InvalidInput(format!(
                        "need rate >= 0 and std_dev > 0, got {rate} and {std_dev}"
                    )));
                }
                Arc::new(GaussianCompoundPoisson { rate, mean, std_dev })
            }
        })
    }

    /// Shortest time span the task simulates over; truncation and step
    /// defaults are tuned to it.
    pub fn shortest_horizon(&self) -> f64 {
        let shortest = |times: Vec<f64>| {
            let mut prev = 0.0;
            let mut best = f64::INFINITY;
            for t in times {
                best = best.min(t - prev);
                prev = t;
            }
            best
        };
        match &self.task {
            TaskConfig::Simulate(t) => match &t.observation_times {
                Some(g) => shortest(g.values()).min(t.t),
                None => t.t,
            },
            TaskConfig::Density(t) => t.t,
            TaskConfig::Score(t) => t.t,
            TaskConfig::Fisher(t) => shortest(t.times.values()),
            TaskConfig::Mle(t) => t.times.as_ref().map_or(f64::INFINITY, |g| shortest(g.values())),
            TaskConfig::Crlb(t) => shortest(t.times.values()),
            TaskConfig::Validate(t) => t.t,
        }
    }

    /// SHA-256 of the canonical JSON form with the output directory
    /// removed, so moving the output does not change the hash.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output_dir = PathBuf::new();
        let json = serde_json::to_string(&canonical).expect("configuration serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

/// Everything built from the model section.
pub struct BuiltModel {
    pub simulator: Simulator,
    pub assumption: AssumptionReport,
    pub eps_trunc: f64,
    pub max_dt: f64,
}

impl RunConfig {
    /// `horizon` selects the default truncation and step; pass
    /// [`RunConfig::shortest_horizon`] unless the task knows better (an
    /// observation file read at run time).
    pub fn build_model(&self, horizon: f64) -> levy_malliavin::Result<BuiltModel> {
        let m = &self.model;
        let model = LevyModel::new(self.levy_density()?, m.u0, m.z_drift)?;
        let spec = PerturbationSpec::new(m.u0, m.u1)?;
        let assumption = check_assumption_h(&model);
        let eps_trunc = match m.eps_trunc {
            Some(e) => e,
            None => model.default_truncation(&spec, horizon, m.min_perturbed_mass)?,
        };
        let max_dt = m.max_dt.unwrap_or_else(|| default_step(horizon));
        let simulator = Simulator::new(model, spec, m.drift.build(), eps_trunc, max_dt)?;
        Ok(BuiltModel {
            simulator,
            assumption,
            eps_trunc,
            max_dt,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
seed = 7

[model]
u0 = 1.0
u1 = 0.5

[model.levy]
kind = "tempered_stable"
alpha = 0.5
lambda_plus = 1.0
lambda_minus = 1.0
scale_plus = 1.0
scale_minus = 1.0

[model.drift]
kind = "linear"
theta_min = 0.1
theta_max = 3.0
"#;

    fn with_task(task: &str) -> String {
        format!("{BASE}\n[task]\n{task}")
    }

    #[test]
    fn parses_density_task() {
        let src = with_task("kind = \"density\"\ntheta = 1.0\nx0 = 1.0\nt = 1.0\nn_paths = 100\ny = { start = -1.0, stop = 3.0, points = 41 }\n");
        let cfg = RunConfig::from_toml(&src).unwrap();
        let TaskConfig::Density(d) = &cfg.task else { panic!() };
        assert_eq!(d.y.values().len(), 41);
        assert!(d.dual_form);
        assert_eq!(cfg.model.min_perturbed_mass, DEFAULT_MIN_PERTURBED_MASS);
    }

    #[test]
    fn unknown_key_reports_line() {
        let src =
            with_task("kind = \"density\"\ntheta = 1.0\nx0 = 1.0\nt = 1.0\nn_paths = 100\ny = [0.5]\nbogus = 3\n");
        let errs = RunConfig::from_toml(&src).unwrap_err();
        assert_eq!(errs.len(), 1);
        let expected = src.lines().position(|l| l.starts_with("bogus")).unwrap() + 1;
        assert_eq!(errs[0].line, Some(expected), "{}", errs[0]);
    }

    #[test]
    fn non_increasing_times_rejected_with_line() {
        let src =
            with_task("kind = \"fisher\"\ntheta = [1.0]\nx0 = 1.0\ntimes = [0.5, 0.5]\nn_outer = 10\nn_inner = 10\n");
        let errs = RunConfig::from_toml(&src).unwrap_err();
        assert_eq!(errs.len(), 1);
        assert_eq!(errs[0].key, "task.times");
        let expected = src.lines().position(|l| l.starts_with("times")).unwrap() + 1;
        assert_eq!(errs[0].line, Some(expected));
        assert!(errs[0].to_string().contains("strictly increasing"));
    }

    #[test]
    fn theta_outside_interval_rejected() {
        let src = with_task("kind = \"score\"\ntheta = 3.5\nx0 = 1.0\nt = 1.0\nn_paths = 100\ny = [0.5]\n");
        let errs = RunConfig::from_toml(&src).unwrap_err();
        assert_eq!(errs[0].key, "task.theta");
    }

    #[test]
    fn mle_needs_one_data_source() {
        let src = with_task("kind = \"mle\"\nn_paths = 100\ntheta_true = 1.0\n");
        let errs = RunConfig::from_toml(&src).unwrap_err();
        assert_eq!(errs[0].key, "task.observations");
    }

    #[test]
    fn hash_ignores_output_dir_but_not_seed() {
        let src = with_task("kind = \"validate\"\ntheta = 1.0\nx0 = 1.0\nt = 1.0\n");
        let a = RunConfig::from_toml(&src).unwrap();
        let mut b = a.clone();
        b.output_dir = PathBuf::from("elsewhere");
        assert_eq!(a.hash(), b.hash());
        b.seed += 1;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn grid_range_endpoints() {
        let g = Grid::Range {
            start: -1.0,
            stop: 1.0,
            points: 5,
        };
        assert_eq!(g.values(), vec![-1.0, -0.5, 0.0, 0.5, 1.0]);
    }
}
