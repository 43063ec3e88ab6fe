//! Sampler parameters and quadratic observables.

use crate::error::{Error, Result};
use crate::matkit::{max_abs, spd_inverse, spd_sqrt, AntiSymMatrix, Matrix, SymMatrix, Vector};

/// Relative tolerance used when checking the structural parameter relations.
pub const STRUCTURE_TOL: f64 = 1e-12;

/// All parameters of the perturbed underdamped Langevin dynamics
///
/// ```text
/// dq = M⁻¹p dt − μ J₁∇V(q) dt
/// dp = −∇V(q) dt − ν J₂M⁻¹p dt − ΓM⁻¹p dt + √(2Γ) dW
/// ```
///
/// `precision` is the Gaussian precision `S` the analysis refers to; for non-Gaussian
/// targets it is the preconditioner used to build `M` and `Γ`.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationConfig {
    pub mu: f64,
    pub nu: f64,
    pub gamma: f64,
    pub precision: SymMatrix,
    pub mass: SymMatrix,
    pub friction: SymMatrix,
    pub j1: AntiSymMatrix,
    pub j2: AntiSymMatrix,
}

impl PerturbationConfig {
    /// Unit covariance: `S = M = I`, `Γ = γI`, `J₁ = J₂ = J`.
    pub fn unit(gamma: f64, mu: f64, nu: f64, j: AntiSymMatrix) -> Result<Self> {
        let d = j.dim();
        Self::new(
            mu,
            nu,
            gamma,
            SymMatrix::identity(d),
            SymMatrix::identity(d),
            SymMatrix::identity(d).scale(gamma),
            j.clone(),
            j,
        )
    }

    /// Preconditioned choice `M = S`, `Γ = γS`, `J₂ = S·J₁·S`.
    pub fn preconditioned(
        precision: SymMatrix,
        gamma: f64,
        mu: f64,
        nu: f64,
        j1: AntiSymMatrix,
    ) -> Result<Self> {
        let s = precision.as_matrix();
        let j2 = AntiSymMatrix::from_computed(&(s * j1.as_matrix() * s));
        let friction = precision.scale(gamma);
        Self::new(mu, nu, gamma, precision.clone(), precision, friction, j1, j2)
    }

    #[allow(clippy::too_many_arguments)]
    pub fn new(
        mu: f64,
        nu: f64,
        gamma: f64,
        precision: SymMatrix,
        mass: SymMatrix,
        friction: SymMatrix,
        j1: AntiSymMatrix,
        j2: AntiSymMatrix,
    ) -> Result<Self> {
        let d = precision.dim();
        if d == 0 {
            return Err(Error::InvalidInput("dimension must be positive".into()));
        }
        for (name, n) in [
            ("mass", mass.dim()),
            ("friction", friction.dim()),
            ("J1", j1.dim()),
            ("J2", j2.dim()),
        ] {
            if n != d {
                return Err(Error::DimensionMismatch(format!(
                    "{name} is {n}x{n}, precision is {d}x{d}"
                )));
            }
        }
        for (name, v) in [("mu", mu), ("nu", nu), ("gamma", gamma)] {
            if !v.is_finite() {
                return Err(Error::InvalidInput(format!("{name} must be finite")));
            }
        }
        if gamma <= 0.0 {
            return Err(Error::InvalidInput(format!("gamma must be positive, got {gamma}")));
        }
        spd_sqrt(&precision)?;
        spd_sqrt(&mass)?;
        spd_sqrt(&friction)?;
        Ok(Self {
            mu,
            nu,
            gamma,
            precision,
            mass,
            friction,
            j1,
            j2,
        })
    }

    pub fn dim(&self) -> usize {
        self.precision.dim()
    }

    pub fn with_strengths(&self, mu: f64, nu: f64) -> Self {
        Self {
            mu,
            nu,
            ..self.clone()
        }
    }

    /// Largest relative violation of `M = S`, `Γ = γS`, `J₂ = S·J₁·S`.
    pub fn structure_defect(&self) -> f64 {
        let s = self.precision.as_matrix();
        let rel = |a: &Matrix, b: &Matrix| {
            let scale = max_abs(a).max(max_abs(b));
            if scale == 0.0 {
                0.0
            } else {
                max_abs(&(a - b)) / scale
            }
        };
        let j2 = s * self.j1.as_matrix() * s;
        rel(self.mass.as_matrix(), s)
            .max(rel(self.friction.as_matrix(), &(s * self.gamma)))
            .max(rel(self.j2.as_matrix(), &j2))
    }

    /// `M = S`, `Γ = γS` and `J₂ = S·J₁·S` hold to [`STRUCTURE_TOL`]; `μ` and `ν` are free.
    pub fn has_structure(&self) -> bool {
        self.structure_defect() <= STRUCTURE_TOL
    }

    /// The structural relations together with `μ = ν`.
    pub fn meets_paper_conditions(&self) -> bool {
        self.has_structure()
            && (self.mu - self.nu).abs() <= STRUCTURE_TOL * (1.0 + self.mu.abs().max(self.nu.abs()))
    }
}

/// How `ν` is derived from `μ` in a sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NuRule {
    Equal,
    Scaled(f64),
    Opposed,
    Fixed(f64),
}

impl NuRule {
    pub fn nu_for(&self, mu: f64) -> f64 {
        match *self {
            NuRule::Equal => mu,
            NuRule::Scaled(r) => r * mu,
            NuRule::Opposed => -mu,
            NuRule::Fixed(v) => v,
        }
    }
}

impl std::fmt::Display for NuRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            NuRule::Equal => write!(f, "equal"),
            NuRule::Opposed => write!(f, "opposed"),
            NuRule::Scaled(r) => write!(f, "scaled({r})"),
            NuRule::Fixed(v) => write!(f, "fixed({v})"),
        }
    }
}

impl std::str::FromStr for NuRule {
    type Err = Error;

    /// `equal`, `opposed`, `scaled(r)` or `fixed(v)`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let arg = |prefix: &str| -> Option<Result<f64>> {
            let inner = s.strip_prefix(prefix)?.strip_prefix('(')?.strip_suffix(')')?;
            Some(
                inner
                    .trim()
                    .parse::<f64>()
                    .map_err(|_| Error::InvalidInput(format!("bad number in nu rule '{s}'"))),
            )
        };
        match s {
            "equal" => Ok(NuRule::Equal),
            "opposed" => Ok(NuRule::Opposed),
            _ => {
                if let Some(r) = arg("scaled") {
                    Ok(NuRule::Scaled(r?))
                } else if let Some(v) = arg("fixed") {
                    Ok(NuRule::Fixed(v?))
                } else {
                    Err(Error::InvalidInput(format!("unknown nu rule '{s}'")))
                }
            }
        }
    }
}

/// `f(q) = q·Kq + l·q + c`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticObservable {
    pub k: SymMatrix,
    pub l: Vector,
    pub c: f64,
}

impl QuadraticObservable {
    pub fn new(k: SymMatrix, l: Vector, c: f64) -> Result<Self> {
        if k.dim() != l.len() {
            return Err(Error::DimensionMismatch(format!(
                "K is {0}x{0}, l has length {1}",
                k.dim(),
                l.len()
            )));
        }
        Ok(Self { k, l, c })
    }

    pub fn quadratic(k: SymMatrix) -> Self {
        let d = k.dim();
        Self {
            k,
            l: Vector::zeros(d),
            c: 0.0,
        }
    }

    pub fn linear(l: Vector) -> Self {
        let d = l.len();
        Self {
            k: SymMatrix::zeros(d),
            l,
            c: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.l.len()
    }

    /// Same `K` and `l`, with `c` chosen so that the mean under `N(0, S⁻¹)` is zero.
    pub fn centered(&self, precision: &SymMatrix) -> Result<Self> {
        let cov = spd_inverse(precision)?;
        let mean = (self.k.as_matrix() * cov.as_matrix()).trace();
        Ok(Self {
            c: -mean,
            ..self.clone()
        })
    }

    pub fn eval(&self, q: &Vector) -> f64 {
        let k = self.k.as_matrix();
        let d = q.len();
        let mut quad = 0.0;
        for j in 0..d {
            let mut col = 0.0;
            for i in 0..d {
                col += k[(i, j)] * q[i];
            }
            quad += col * q[j];
        }
        quad + self.l.dot(q) + self.c
    }
}
