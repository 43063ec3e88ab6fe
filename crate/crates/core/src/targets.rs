//! Potential-energy targets `π ∝ exp(−V)`.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::matkit::{spd_sqrt, Matrix, SymMatrix, Vector};

/// A smooth potential `V` on `ℝ^d`.
pub trait PotentialTarget: Send + Sync {
    fn dim(&self) -> usize;

    fn value(&self, q: &Vector) -> f64;

    /// Writes `∇V(q)` into `out` (length `dim()`).
    fn gradient_into(&self, q: &Vector, out: &mut Vector);

    fn gradient(&self, q: &Vector) -> Vector {
        let mut out = Vector::zeros(self.dim());
        self.gradient_into(q, &mut out);
        out
    }

    /// Precision matrix when the target is Gaussian.
    fn gaussian_precision(&self) -> Option<&SymMatrix> {
        None
    }
}

/// Centered Gaussian with precision `S`: `V(q) = ½ q·Sq`.
#[derive(Debug, Clone)]
pub struct GaussianTarget {
    precision: SymMatrix,
}

impl GaussianTarget {
    pub fn new(precision: SymMatrix) -> Result<Self> {
        // rejects non-SPD precisions
        spd_sqrt(&precision)?;
        Ok(Self { precision })
    }

    pub fn standard(d: usize) -> Self {
        Self {
            precision: SymMatrix::identity(d),
        }
    }

    pub fn precision(&self) -> &SymMatrix {
        &self.precision
    }
}

impl PotentialTarget for GaussianTarget {
    fn dim(&self) -> usize {
        self.precision.dim()
    }

    fn value(&self, q: &Vector) -> f64 {
        0.5 * q.dot(&(self.precision.as_matrix() * q))
    }

    fn gradient_into(&self, q: &Vector, out: &mut Vector) {
        out.gemv(1.0, self.precision.as_matrix(), q, 0.0);
    }

    fn gaussian_precision(&self) -> Option<&SymMatrix> {
        Some(&self.precision)
    }
}

/// One-dimensional well `U` with its first three derivatives, supplied analytically.
pub trait Well: Send + Sync {
    fn u(&self, x: f64) -> f64;
    fn du(&self, x: f64) -> f64;
    fn d2u(&self, x: f64) -> f64;
    fn d3u(&self, x: f64) -> f64;
}

/// `U(x) = ½(x² − 1)²`.
#[derive(Debug, Clone, Copy, Default)]
pub struct DoubleWell;

impl Well for DoubleWell {
    fn u(&self, x: f64) -> f64 {
        0.5 * (x * x - 1.0).powi(2)
    }
    fn du(&self, x: f64) -> f64 {
        2.0 * x * (x * x - 1.0)
    }
    fn d2u(&self, x: f64) -> f64 {
        2.0 * (3.0 * x * x - 1.0)
    }
    fn d3u(&self, x: f64) -> f64 {
        12.0 * x
    }
}

/// Discretised diffusion-bridge target on an interior grid of `d` points with
/// Dirichlet ends `x(0) = x(1) = 0`.
///
/// `V(x) = Ψ̃(x) − (βδ/4)·x·Ax` where `A = δ⁻²·tridiag(1, −2, 1)` and `δ = 1/(d+1)`.
#[derive(Clone)]
pub struct BridgeTarget {
    dim: usize,
    beta: f64,
    spacing: f64,
    laplacian: Matrix,
    well: Arc<dyn Well>,
}

impl fmt::Debug for BridgeTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BridgeTarget")
            .field("dim", &self.dim)
            .field("beta", &self.beta)
            .field("spacing", &self.spacing)
            .finish_non_exhaustive()
    }
}

/// Builds the bridge target for grid size `d` and inverse temperature `beta`.
pub fn bridge_build(d: usize, beta: f64, well: Arc<dyn Well>) -> Result<BridgeTarget> {
    if d == 0 {
        return Err(Error::InvalidInput("bridge grid needs at least one point".into()));
    }
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::InvalidInput(format!("beta must be positive, got {beta}")));
    }
    let spacing = 1.0 / (d as f64 + 1.0);
    let inv2 = (d as f64 + 1.0).powi(2);
    let laplacian = Matrix::from_fn(d, d, |i, j| match i.abs_diff(j) {
        0 => -2.0 * inv2,
        1 => inv2,
        _ => 0.0,
    });
    Ok(BridgeTarget {
        dim: d,
        beta,
        spacing,
        laplacian,
        well,
    })
}

impl BridgeTarget {
    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// The discrete Dirichlet Laplacian `A` (negative definite).
    pub fn laplacian(&self) -> &Matrix {
        &self.laplacian
    }

    pub fn well(&self) -> &dyn Well {
        self.well.as_ref()
    }

    // (A·x)_i without forming the product.
    fn laplacian_apply(&self, x: &Vector, i: usize) -> f64 {
        let inv2 = (self.dim as f64 + 1.0).powi(2);
        let left = if i > 0 { x[i - 1] } else { 0.0 };
        let right = if i + 1 < self.dim { x[i + 1] } else { 0.0 };
        (left - 2.0 * x[i] + right) * inv2
    }
}

/// Gaussian part of the bridge target as an SPD precision, `S = −(βδ/2)·A`.
pub fn bridge_precision(t: &BridgeTarget) -> SymMatrix {
    SymMatrix::from_computed(&(t.laplacian() * (-0.5 * t.beta * t.spacing)))
}

/// `Ψ̃(x) = (β/2)·δ·Σᵢ (U′(xᵢ)² − U″(xᵢ)/β)`.
pub fn psi_tilde(t: &BridgeTarget, x: &Vector) -> f64 {
    let w = t.well();
    let sum: f64 = x
        .iter()
        .map(|&xi| w.du(xi).powi(2) - w.d2u(xi) / t.beta)
        .sum();
    0.5 * t.beta * t.spacing * sum
}

/// `∇Ψ̃(x)ᵢ = (β/2)·δ·(2U′(xᵢ)U″(xᵢ) − U‴(xᵢ)/β)`.
pub fn psi_tilde_gradient(t: &BridgeTarget, x: &Vector) -> Vector {
    let w = t.well();
    let c = 0.5 * t.beta * t.spacing;
    x.map(|xi| c * (2.0 * w.du(xi) * w.d2u(xi) - w.d3u(xi) / t.beta))
}

impl PotentialTarget for BridgeTarget {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &Vector) -> f64 {
        let quad: f64 = (0..self.dim).map(|i| x[i] * self.laplacian_apply(x, i)).sum();
        psi_tilde(self, x) - 0.25 * self.beta * self.spacing * quad
    }

    fn gradient_into(&self, x: &Vector, out: &mut Vector) {
        let w = self.well();
        let c = 0.5 * self.beta * self.spacing;
        for i in 0..self.dim {
            let xi = x[i];
            let psi = c * (2.0 * w.du(xi) * w.d2u(xi) - w.d3u(xi) / self.beta);
            out[i] = psi - c * self.laplacian_apply(x, i);
        }
    }
}
