//! Experiment configuration: a flat `key = value` format with `[section]` headers.
//!
//! ```text
//! [target]
//! kind = gaussian          # or bridge
//! precision = 2,0;0,1      # rows separated by ';'
//!
//! [sweep]
//! gamma = 0.5, 2
//! mu = 0, 1, 10
//! nu = equal
//! ```
//!
//! Realization `i` of every grid point is seeded with `seed + i`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::design::optimal_j_general;
use crate::dynamics::{Integrator, SimulationSpec};
use crate::error::{Error, Result};
use crate::matkit::{AntiSymMatrix, Matrix, SymMatrix, Vector};
use crate::model::{NuRule, PerturbationConfig, QuadraticObservable};
use crate::targets::{bridge_build, bridge_precision, DoubleWell, GaussianTarget, PotentialTarget};

#[derive(Debug, Clone, PartialEq)]
pub enum TargetSpec {
    Gaussian { precision: SymMatrix },
    /// Discretised double-well bridge with `dim` interior points.
    Bridge { dim: usize, beta: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum ObservableSpec {
    /// `l = (1, …, 1)`.
    Sum,
    /// `K = I`.
    Norm2,
    Explicit { k: Option<SymMatrix>, l: Option<Vector>, c: f64 },
}

/// Source of `J₁`; `J₂ = S·J₁·S` always.
#[derive(Debug, Clone, PartialEq)]
pub enum JSpec {
    /// Optimal design for the observable.
    Design,
    Standard,
    Zero,
    Explicit(AntiSymMatrix),
}

#[derive(Debug, Clone, PartialEq)]
pub struct OverdampedSettings {
    pub eps: Vec<f64>,
    pub t_end: f64,
    pub dt: f64,
    pub seeds: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub target: TargetSpec,
    pub integrator: Integrator,
    pub dt: f64,
    pub t_end: f64,
    pub burn_in: f64,
    pub replications: usize,
    pub gammas: Vec<f64>,
    pub mus: Vec<f64>,
    pub nu_rule: NuRule,
    pub observable: ObservableSpec,
    pub seed: u64,
    pub j: JSpec,
    pub overdamped: OverdampedSettings,
    pub m_max: usize,
    pub output: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            target: TargetSpec::Gaussian {
                precision: SymMatrix::identity(2),
            },
            integrator: Integrator::PerturbedBaoab { substeps: 1 },
            dt: 1e-3,
            t_end: 10.0,
            burn_in: 1.0,
            replications: 1,
            gammas: vec![1.0],
            mus: vec![0.0],
            nu_rule: NuRule::Equal,
            observable: ObservableSpec::Norm2,
            seed: 0,
            j: JSpec::Design,
            overdamped: OverdampedSettings {
                eps: vec![0.2, 0.1, 0.05],
                t_end: 1.0,
                dt: 0.01,
                seeds: 20,
            },
            m_max: 2,
            output: None,
        }
    }
}

const KNOWN_KEYS: &[(&str, &[&str])] = &[
    ("target", &["kind", "dim", "precision", "beta"]),
    ("dynamics", &["integrator", "substeps", "dt", "t_end", "burn_in"]),
    ("sweep", &["gamma", "mu", "nu", "replications", "seed"]),
    ("observable", &["name", "k", "l", "c"]),
    ("perturbation", &["j", "j1"]),
    ("overdamped", &["eps", "t_end", "dt", "seeds"]),
    ("spectrum", &["m_max"]),
    ("output", &["dir"]),
];

fn cfg_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn parse_sections(text: &str) -> Result<BTreeMap<(String, String), String>> {
    let mut out = BTreeMap::new();
    let mut section: Option<String> = None;
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            let name = name.trim().to_ascii_lowercase();
            if !KNOWN_KEYS.iter().any(|(s, _)| *s == name) {
                return Err(cfg_err(format!("line {}: unknown section [{name}]", n + 1)));
            }
            section = Some(name);
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(cfg_err(format!("line {}: expected key = value", n + 1)));
        };
        let Some(sec) = section.clone() else {
            return Err(cfg_err(format!("line {}: key outside of a section", n + 1)));
        };
        let key = key.trim().to_ascii_lowercase();
        let allowed = KNOWN_KEYS.iter().find(|(s, _)| *s == sec).map(|p| p.1).unwrap_or(&[]);
        if !allowed.contains(&key.as_str()) {
            return Err(cfg_err(format!("line {}: unknown key '{key}' in [{sec}]", n + 1)));
        }
        if out.insert((sec.clone(), key.clone()), value.trim().to_string()).is_some() {
            return Err(cfg_err(format!("line {}: duplicate key '{key}' in [{sec}]", n + 1)));
        }
    }
    Ok(out)
}

fn parse_f64(what: &str, s: &str) -> Result<f64> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| cfg_err(format!("{what}: '{s}' is not a number")))?;
    if !v.is_finite() {
        return Err(cfg_err(format!("{what}: must be finite")));
    }
    Ok(v)
}

fn parse_usize(what: &str, s: &str) -> Result<usize> {
    s.trim()
        .parse()
        .map_err(|_| cfg_err(format!("{what}: '{s}' is not a non-negative integer")))
}

/// Comma-separated numbers.
pub fn parse_list(what: &str, s: &str) -> Result<Vec<f64>> {
    s.split(',').map(|x| parse_f64(what, x)).collect()
}

/// Rows separated by `;`, entries by `,`.
pub fn parse_matrix(what: &str, s: &str) -> Result<Matrix> {
    let rows: Vec<Vec<f64>> = s
        .split(';')
        .map(|r| parse_list(what, r))
        .collect::<Result<_>>()?;
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(cfg_err(format!("{what}: matrix must be square")));
    }
    Ok(Matrix::from_fn(n, n, |i, j| rows[i][j]))
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let map = parse_sections(text)?;
        let get = |sec: &str, key: &str| map.get(&(sec.to_string(), key.to_string())).map(String::as_str);
        let mut cfg = Self::default();

        let kind = get("target", "kind").unwrap_or("gaussian");
        let dim = get("target", "dim").map(|s| parse_usize("target.dim", s)).transpose()?;
        cfg.target = match kind {
            "gaussian" => {
                let precision = match get("target", "precision") {
                    Some(s) => {
                        let m = parse_matrix("target.precision", s)?;
                        SymMatrix::new(m).map_err(|e| cfg_err(format!("target.precision: {e}")))?
                    }
                    None => SymMatrix::identity(dim.unwrap_or(2)),
                };
                if dim.is_some_and(|d| d != precision.dim()) {
                    return Err(cfg_err("target.dim disagrees with target.precision"));
                }
                TargetSpec::Gaussian { precision }
            }
            "bridge" => {
                if get("target", "precision").is_some() {
                    return Err(cfg_err("target.precision is not used by the bridge target"));
                }
                TargetSpec::Bridge {
                    dim: dim.unwrap_or(15),
                    beta: get("target", "beta").map(|s| parse_f64("target.beta", s)).transpose()?.unwrap_or(1.0),
                }
            }
            other => return Err(cfg_err(format!("target.kind: unknown target '{other}'"))),
        };

        if let Some(s) = get("dynamics", "integrator") {
            cfg.integrator = s.parse().map_err(|e: Error| cfg_err(e.to_string()))?;
        }
        if let Some(s) = get("dynamics", "substeps") {
            let n = parse_usize("dynamics.substeps", s)?;
            match &mut cfg.integrator {
                Integrator::PerturbedBaoab { substeps } => *substeps = n,
                _ => return Err(cfg_err("dynamics.substeps only applies to perturbed-baoab")),
            }
        }
        if let Some(s) = get("dynamics", "dt") {
            cfg.dt = parse_f64("dynamics.dt", s)?;
        }
        if let Some(s) = get("dynamics", "t_end") {
            cfg.t_end = parse_f64("dynamics.t_end", s)?;
        }
        if let Some(s) = get("dynamics", "burn_in") {
            cfg.burn_in = parse_f64("dynamics.burn_in", s)?;
        }

        if let Some(s) = get("sweep", "gamma") {
            cfg.gammas = parse_list("sweep.gamma", s)?;
        }
        if let Some(s) = get("sweep", "mu") {
            cfg.mus = parse_list("sweep.mu", s)?;
        }
        if let Some(s) = get("sweep", "nu") {
            cfg.nu_rule = s.parse().map_err(|e: Error| cfg_err(e.to_string()))?;
        }
        if let Some(s) = get("sweep", "replications") {
            cfg.replications = parse_usize("sweep.replications", s)?;
        }
        if let Some(s) = get("sweep", "seed") {
            cfg.seed = s
                .trim()
                .parse()
                .map_err(|_| cfg_err(format!("sweep.seed: '{s}' is not a 64-bit integer")))?;
        }

        let name = get("observable", "name");
        let (k, l, c) = (get("observable", "k"), get("observable", "l"), get("observable", "c"));
        cfg.observable = match (name, k.is_some() || l.is_some() || c.is_some()) {
            (Some(_), true) => return Err(cfg_err("observable: give either a name or k/l/c")),
            (Some("sum"), false) => ObservableSpec::Sum,
            (Some("norm2"), false) => ObservableSpec::Norm2,
            (Some(other), false) => return Err(cfg_err(format!("observable.name: unknown observable '{other}'"))),
            (None, false) => ObservableSpec::Norm2,
            (None, true) => ObservableSpec::Explicit {
                k: k.map(|s| {
                    let m = parse_matrix("observable.k", s)?;
                    SymMatrix::new(m).map_err(|e| cfg_err(format!("observable.k: {e}")))
                })
                .transpose()?,
                l: l.map(|s| parse_list("observable.l", s).map(Vector::from_vec)).transpose()?,
                c: c.map(|s| parse_f64("observable.c", s)).transpose()?.unwrap_or(0.0),
            },
        };

        let j1 = get("perturbation", "j1");
        cfg.j = match (get("perturbation", "j"), j1) {
            (None | Some("explicit"), Some(s)) => {
                let m = parse_matrix("perturbation.j1", s)?;
                JSpec::Explicit(AntiSymMatrix::new(m).map_err(|e| cfg_err(format!("perturbation.j1: {e}")))?)
            }
            (Some("explicit"), None) => return Err(cfg_err("perturbation.j = explicit needs perturbation.j1")),
            (Some(_), Some(_)) => return Err(cfg_err("perturbation.j1 is only used with j = explicit")),
            (None | Some("design"), None) => JSpec::Design,
            (Some("standard"), None) => JSpec::Standard,
            (Some("zero"), None) => JSpec::Zero,
            (Some(other), None) => return Err(cfg_err(format!("perturbation.j: unknown choice '{other}'"))),
        };

        if let Some(s) = get("overdamped", "eps") {
            cfg.overdamped.eps = parse_list("overdamped.eps", s)?;
        }
        if let Some(s) = get("overdamped", "t_end") {
            cfg.overdamped.t_end = parse_f64("overdamped.t_end", s)?;
        }
        if let Some(s) = get("overdamped", "dt") {
            cfg.overdamped.dt = parse_f64("overdamped.dt", s)?;
        }
        if let Some(s) = get("overdamped", "seeds") {
            cfg.overdamped.seeds = parse_usize("overdamped.seeds", s)?;
        }
        if let Some(s) = get("spectrum", "m_max") {
            cfg.m_max = parse_usize("spectrum.m_max", s)?;
        }
        if let Some(s) = get("output", "dir") {
            cfg.output = Some(PathBuf::from(s));
        }

        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| cfg_err(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(cfg_err("sweep.replications must be at least 1"));
        }
        if self.gammas.is_empty() || self.mus.is_empty() {
            return Err(cfg_err("sweep.gamma and sweep.mu must be nonempty"));
        }
        if let Some(g) = self.gammas.iter().find(|g| **g <= 0.0) {
            return Err(cfg_err(format!("sweep.gamma: {g} is not positive")));
        }
        if !(self.dt > 0.0 && self.dt < self.t_end) {
            return Err(cfg_err("need 0 < dt < t_end"));
        }
        if !(self.burn_in >= 0.0 && self.burn_in < self.t_end) {
            return Err(cfg_err("need 0 <= burn_in < t_end"));
        }
        if let Integrator::PerturbedBaoab { substeps: 0 } = self.integrator {
            return Err(cfg_err("dynamics.substeps must be at least 1"));
        }
        let od = &self.overdamped;
        if od.eps.is_empty() || od.eps.iter().any(|e| *e <= 0.0) {
            return Err(cfg_err("overdamped.eps must be a nonempty list of positive numbers"));
        }
        if !(od.dt > 0.0 && od.dt < od.t_end) || od.seeds == 0 {
            return Err(cfg_err("overdamped: need 0 < dt < t_end and seeds >= 1"));
        }
        let d = self.dim();
        if d == 0 {
            return Err(cfg_err("target dimension must be positive"));
        }
        if let ObservableSpec::Explicit { k, l, .. } = &self.observable {
            if k.as_ref().is_some_and(|k| k.dim() != d) || l.as_ref().is_some_and(|l| l.len() != d) {
                return Err(cfg_err(format!("observable does not match the target dimension {d}")));
            }
        }
        if let JSpec::Explicit(j) = &self.j {
            if j.dim() != d {
                return Err(cfg_err(format!("perturbation.j1 does not match the target dimension {d}")));
            }
        }
        Ok(())
    }

    /// Desk-scale diffusion-bridge preset; `paper_scale` switches to `Δt = 1e−4`, `T = 100`,
    /// `N = 500`. The γ and μ grids are preset choices.
    pub fn bridge_preset(paper_scale: bool) -> Self {
        let (dt, t_end, replications) = if paper_scale { (1e-4, 100.0, 500) } else { (1e-3, 10.0, 50) };
        Self {
            target: TargetSpec::Bridge { dim: 15, beta: 1.0 },
            integrator: Integrator::PerturbedBaoab { substeps: 1 },
            dt,
            t_end,
            burn_in: 1.0,
            replications,
            gammas: vec![0.01, 0.1, 1.0],
            mus: vec![0.0, 1.0, 5.0],
            nu_rule: NuRule::Equal,
            observable: ObservableSpec::Norm2,
            seed: 2024,
            j: JSpec::Design,
            ..Self::default()
        }
    }

    pub fn dim(&self) -> usize {
        match &self.target {
            TargetSpec::Gaussian { precision } => precision.dim(),
            TargetSpec::Bridge { dim, .. } => *dim,
        }
    }

    pub fn is_gaussian(&self) -> bool {
        matches!(self.target, TargetSpec::Gaussian { .. })
    }

    pub fn build_target(&self) -> Result<Arc<dyn PotentialTarget>> {
        Ok(match &self.target {
            TargetSpec::Gaussian { precision } => Arc::new(GaussianTarget::new(precision.clone())?),
            TargetSpec::Bridge { dim, beta } => Arc::new(bridge_build(*dim, *beta, Arc::new(DoubleWell))?),
        })
    }

    /// The Gaussian precision, or the quadratic part of the bridge potential.
    pub fn precision(&self) -> Result<SymMatrix> {
        Ok(match &self.target {
            TargetSpec::Gaussian { precision } => precision.clone(),
            TargetSpec::Bridge { dim, beta } => bridge_precision(&bridge_build(*dim, *beta, Arc::new(DoubleWell))?),
        })
    }

    pub fn quadratic_observable(&self) -> QuadraticObservable {
        let d = self.dim();
        match &self.observable {
            ObservableSpec::Sum => QuadraticObservable::linear(Vector::from_element(d, 1.0)),
            ObservableSpec::Norm2 => QuadraticObservable::quadratic(SymMatrix::identity(d)),
            ObservableSpec::Explicit { k, l, c } => QuadraticObservable {
                k: k.clone().unwrap_or_else(|| SymMatrix::zeros(d)),
                l: l.clone().unwrap_or_else(|| Vector::zeros(d)),
                c: *c,
            },
        }
    }

    /// `J₁` for the sweep, in original coordinates.
    pub fn perturbation_j1(&self) -> Result<AntiSymMatrix> {
        let d = self.dim();
        Ok(match &self.j {
            JSpec::Design => optimal_j_general(&self.quadratic_observable().k, &self.precision()?)?.j1,
            JSpec::Standard => AntiSymMatrix::standard(d),
            JSpec::Zero => AntiSymMatrix::zeros(d),
            JSpec::Explicit(j) => j.clone(),
        })
    }

    pub fn simulation_spec(&self) -> SimulationSpec {
        SimulationSpec::new(self.dt, self.t_end, self.burn_in, self.integrator)
    }

    /// `M = S`, `Γ = γS`, `J₂ = S·J₁·S` at one grid point.
    pub fn config_at(&self, precision: &SymMatrix, j1: &AntiSymMatrix, gamma: f64, mu: f64) -> Result<PerturbationConfig> {
        PerturbationConfig::preconditioned(precision.clone(), gamma, mu, self.nu_rule.nu_for(mu), j1.clone())
    }
}
