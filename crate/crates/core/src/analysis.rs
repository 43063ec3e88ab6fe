//! Exact asymptotic variance of quadratic observables under Gaussian targets.
//!
//! With the unit-covariance drift `A = [[−μJ, I], [−I, γI − νJ]]` the Poisson equation
//! reduces to `A·C + C·Aᵀ = K̄`, `A·D = l̄`, and `σ² = 2·Tr(C·K̄) + D·l̄`.

use crate::error::{Error, Result};
use crate::matkit::{
    block2x2, commutator, inverse, max_abs, schur_block_tl_inverse, solve_linear, solve_lyapunov,
    spd_inv_sqrt, spd_inverse, spd_sqrt, AntiSymMatrix, Matrix, SymMatrix, Vector,
};
use crate::model::{NuRule, PerturbationConfig, QuadraticObservable};

/// Relative tolerance of the trace identity checked on every Lyapunov solve.
pub const TRACE_TOL: f64 = 1e-8;

/// Finite-difference step for gradients.
pub const FD_GRADIENT_STEP: f64 = 1e-5;
/// Base finite-difference step for Hessians, scaled by `1 + |μ|`.
pub const FD_HESSIAN_STEP: f64 = 1e-3;

/// A configuration mapped to unit covariance by `q̃ = S^{1/2}q`, `p̃ = S^{−1/2}p`.
#[derive(Debug, Clone)]
pub struct UnitForm {
    pub gamma: f64,
    pub mu: f64,
    pub nu: f64,
    /// `J̃ = S^{1/2}·J₁·S^{1/2}`.
    pub j: AntiSymMatrix,
    pub sqrt_precision: SymMatrix,
    pub inv_sqrt_precision: SymMatrix,
}

impl UnitForm {
    /// `K̃ = S^{−1/2}KS^{−1/2}`, `l̃ = S^{−1/2}l`.
    pub fn transform_observable(&self, f: &QuadraticObservable) -> QuadraticObservable {
        let r = self.inv_sqrt_precision.as_matrix();
        QuadraticObservable {
            k: SymMatrix::from_computed(&(r * f.k.as_matrix() * r)),
            l: r * &f.l,
            c: f.c,
        }
    }
}

/// Reduces a configuration satisfying `M = S`, `Γ = γS`, `J₂ = S·J₁·S` to unit form.
pub fn unit_form(cfg: &PerturbationConfig) -> Result<UnitForm> {
    if !cfg.has_structure() {
        return Err(Error::ConditionsViolated(format!(
            "need M = S, Gamma = gamma*S, J2 = S*J1*S (relative defect {:.3e})",
            cfg.structure_defect()
        )));
    }
    let sqrt_precision = spd_sqrt(&cfg.precision)?;
    let inv_sqrt_precision = spd_inv_sqrt(&cfg.precision)?;
    let r = sqrt_precision.as_matrix();
    let j = AntiSymMatrix::from_computed(&(r * cfg.j1.as_matrix() * r));
    Ok(UnitForm {
        gamma: cfg.gamma,
        mu: cfg.mu,
        nu: cfg.nu,
        j,
        sqrt_precision,
        inv_sqrt_precision,
    })
}

/// `A = [[−μJ, I], [−I, γI − νJ]]`.
pub fn a_matrix_unit(gamma: f64, mu: f64, nu: f64, j: &Matrix) -> Matrix {
    let d = j.nrows();
    let id = Matrix::identity(d, d);
    block2x2(&(j * -mu), &id, &(-&id), &(&id * gamma - j * nu))
}

/// The unit-form `A` of a configuration.
pub fn a_matrix(cfg: &PerturbationConfig) -> Result<Matrix> {
    let u = unit_form(cfg)?;
    Ok(a_matrix_unit(u.gamma, u.mu, u.nu, u.j.as_matrix()))
}

/// Drift `B` of `dX = −B·X dt + √(2Q) dW` in original coordinates,
/// `B = [[μJ₁S, −M⁻¹], [S, (Γ + νJ₂)M⁻¹]]`.
pub fn general_drift(cfg: &PerturbationConfig) -> Result<Matrix> {
    let s = cfg.precision.as_matrix();
    let m_inv = spd_inverse(&cfg.mass)?.into_matrix();
    let tl = cfg.j1.as_matrix() * s * cfg.mu;
    let br = (cfg.friction.as_matrix() + cfg.j2.as_matrix() * cfg.nu) * &m_inv;
    Ok(block2x2(&tl, &(-&m_inv), s, &br))
}

/// Stationary covariance `Σ∞ = blockdiag(S⁻¹, M)` of the linear dynamics.
pub fn stationary_covariance(cfg: &PerturbationConfig) -> Result<Matrix> {
    let d = cfg.dim();
    let z = Matrix::zeros(d, d);
    let cov = spd_inverse(&cfg.precision)?;
    Ok(block2x2(cov.as_matrix(), &z, &z, cfg.mass.as_matrix()))
}

fn embed_observable(k: &Matrix, l: &Vector) -> (SymMatrix, Vector) {
    let d = l.len();
    let z = Matrix::zeros(d, d);
    let kb = SymMatrix::from_computed(&block2x2(k, &z, &z, &z));
    let mut lb = Vector::zeros(2 * d);
    lb.rows_mut(0, d).copy_from(l);
    (kb, lb)
}

/// σ² in unit form for `f(q) = q·Kq + l·q`.
///
/// Also checks `2γ·Tr_p C = Tr K` on the Lyapunov solution.
pub fn asym_variance_unit(gamma: f64, mu: f64, nu: f64, j: &Matrix, k: &SymMatrix, l: &Vector) -> Result<f64> {
    let d = j.nrows();
    if k.dim() != d || l.len() != d {
        return Err(Error::DimensionMismatch(format!(
            "J is {d}x{d}, K is {0}x{0}, l has length {1}",
            k.dim(),
            l.len()
        )));
    }
    let a = a_matrix_unit(gamma, mu, nu, j);
    let (kb, lb) = embed_observable(k.as_matrix(), l);

    let mut sigma2 = 0.0;
    if max_abs(k.as_matrix()) > 0.0 {
        let c = solve_lyapunov(&a, &kb)?;
        check_trace_condition(gamma, &c, k)?;
        sigma2 += 2.0 * (c.as_matrix() * kb.as_matrix()).trace();
    }
    if l.amax() > 0.0 {
        let dv = solve_linear(&a, &lb)?;
        sigma2 += dv.dot(&lb);
    }
    Ok(sigma2)
}

/// `(2γ·Tr_p C, Tr K)` for a Lyapunov solution `C` of size `2d`.
pub fn trace_identity(gamma: f64, c: &SymMatrix, k: &SymMatrix) -> (f64, f64) {
    let d = k.dim();
    let tr_p: f64 = (d..2 * d).map(|i| c[(i, i)]).sum();
    (2.0 * gamma * tr_p, k.trace())
}

fn check_trace_condition(gamma: f64, c: &SymMatrix, k: &SymMatrix) -> Result<()> {
    let (lhs, rhs) = trace_identity(gamma, c, k);
    let scale = max_abs(k.as_matrix()) * k.dim() as f64;
    if (lhs - rhs).abs() > TRACE_TOL * scale.max(1.0) {
        return Err(Error::TraceCondition { lhs, rhs });
    }
    Ok(())
}

/// Asymptotic variance `σ²_f` for a Gaussian target with precision `cfg.precision`.
///
/// The constant `f.c` plays no role. Requires the structural relations of [`unit_form`].
pub fn asym_variance(cfg: &PerturbationConfig, f: &QuadraticObservable) -> Result<f64> {
    check_observable(cfg, f)?;
    let u = unit_form(cfg)?;
    let g = u.transform_observable(f);
    asym_variance_unit(u.gamma, u.mu, u.nu, u.j.as_matrix(), &g.k, &g.l)
}

/// `σ²_f` computed directly in original coordinates from the general drift:
/// with `A = Bᵀ`, `A·C + C·Aᵀ = K̄`, `A·D = l̄` and `σ² = 2·Tr(C·Σ∞K̄Σ∞) + D·Σ∞l̄`.
///
/// Valid for any configuration with a Gaussian target, structured or not.
pub fn asym_variance_direct(cfg: &PerturbationConfig, f: &QuadraticObservable) -> Result<f64> {
    check_observable(cfg, f)?;
    let a = general_drift(cfg)?.transpose();
    let sigma = stationary_covariance(cfg)?;
    let (kb, lb) = embed_observable(f.k.as_matrix(), &f.l);
    let mut sigma2 = 0.0;
    if max_abs(f.k.as_matrix()) > 0.0 {
        let c = solve_lyapunov(&a, &kb)?;
        sigma2 += 2.0 * (c.as_matrix() * &sigma * kb.as_matrix() * &sigma).trace();
    }
    if f.l.amax() > 0.0 {
        let dv = solve_linear(&a, &lb)?;
        sigma2 += dv.dot(&(&sigma * &lb));
    }
    Ok(sigma2)
}

fn check_observable(cfg: &PerturbationConfig, f: &QuadraticObservable) -> Result<()> {
    if f.dim() != cfg.dim() {
        return Err(Error::DimensionMismatch(format!(
            "observable has dimension {}, configuration {}",
            f.dim(),
            cfg.dim()
        )));
    }
    Ok(())
}

/// One point of a `Θ(μ, ν)` sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaPoint {
    pub mu: f64,
    pub nu: f64,
    pub sigma2: f64,
}

/// `σ²` along `μ ↦ (μ, rule(μ))`, one evaluation per grid point.
pub fn theta_surface(
    template: &PerturbationConfig,
    f: &QuadraticObservable,
    mu_grid: &[f64],
    rule: NuRule,
) -> Result<Vec<ThetaPoint>> {
    check_observable(template, f)?;
    let u = unit_form(template)?;
    let g = u.transform_observable(f);
    mu_grid
        .iter()
        .map(|&mu| {
            if !mu.is_finite() {
                return Err(Error::InvalidInput(format!("non-finite grid value {mu}")));
            }
            let nu = rule.nu_for(mu);
            let sigma2 = asym_variance_unit(u.gamma, mu, nu, u.j.as_matrix(), &g.k, &g.l)?;
            Ok(ThetaPoint { mu, nu, sigma2 })
        })
        .collect()
}

/// Gradient and Hessian of `Θ(μ, ν)`, ordered `(μ, ν)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaDerivatives {
    pub gradient: [f64; 2],
    pub hessian: [[f64; 2]; 2],
}

impl ThetaDerivatives {
    /// Second derivative along `(a, b)`.
    pub fn directional(&self, a: f64, b: f64) -> f64 {
        let h = &self.hessian;
        a * a * h[0][0] + 2.0 * a * b * h[0][1] + b * b * h[1][1]
    }
}

/// Closed-form derivatives of `Θ` at `μ = ν = 0` for `f(q) = q·Kq`.
///
/// The gradient vanishes; the Hessian depends on `J` and `K` only through
/// `Tr(JKJK)` and `Tr(J²K²)`.
pub fn theta_hessian_quadratic(gamma: f64, k: &SymMatrix, j: &AntiSymMatrix) -> ThetaDerivatives {
    let (jm, km) = (j.as_matrix(), k.as_matrix());
    let jk = jm * km;
    let t1 = (&jk * &jk).trace();
    let t2 = (jm * jm * km * km).trace();
    let g = gamma;
    let (g3, gi, gi3) = (g.powi(3), 1.0 / g, 1.0 / g.powi(3));
    let h_mm = -(g + gi3 + g3) * (t1 - t2) - 2.0 * gi * t1;
    let h_mn = (gi3 + gi - g) * t2 + (-gi3 + gi + g) * t1;
    let h_nn = (gi3 - gi) * t2 - (gi3 + gi) * t1;
    ThetaDerivatives {
        gradient: [0.0, 0.0],
        hessian: [[h_mm, h_mn], [h_mn, h_nn]],
    }
}

/// Closed-form derivatives of `Θ` at `μ = ν = 0` for `f(q) = l·q`.
pub fn theta_hessian_linear(gamma: f64, l: &Vector, j: &AntiSymMatrix) -> ThetaDerivatives {
    let jl = j.as_matrix() * l;
    let n2 = jl.norm_squared();
    let off = 2.0 * gamma * n2;
    ThetaDerivatives {
        gradient: [0.0, 0.0],
        hessian: [[-2.0 * gamma.powi(3) * n2, off], [off, 0.0]],
    }
}

/// `Θ(μ, ν) = l̄·A⁻¹l̄ = l·(−μJ + (γI − νJ)⁻¹)⁻¹l` for a linear observable in unit form,
/// using the Schur-complement formula for the top-left block of `A⁻¹`.
pub fn theta_linear_closed(gamma: f64, mu: f64, nu: f64, l: &Vector, j: &AntiSymMatrix) -> Result<f64> {
    let d = j.dim();
    if l.len() != d {
        return Err(Error::DimensionMismatch(format!("J is {d}x{d}, l has length {}", l.len())));
    }
    let id = Matrix::identity(d, d);
    let tl = schur_block_tl_inverse(
        &(j.as_matrix() * -mu),
        &id,
        &(-&id),
        &(&id * gamma - j.as_matrix() * nu),
    )?;
    Ok(l.dot(&(tl * l)))
}

/// Smallest limiting variance over admissible perturbations as `μ = ν → ∞`:
/// `σ²` of `f₁(q) = q·K₁q` at zero perturbation with `K₁ = (Tr(S⁻¹K)/d)·S`.
pub fn limiting_variance_optimal(gamma: f64, precision: &SymMatrix, k: &SymMatrix) -> Result<f64> {
    let d = precision.dim();
    if k.dim() != d {
        return Err(Error::DimensionMismatch(format!("S is {d}x{d}, K is {0}x{0}", k.dim())));
    }
    let cov = spd_inverse(precision)?;
    let weight = (cov.as_matrix() * k.as_matrix()).trace() / d as f64;
    let k1 = precision.scale(weight);
    let cfg = PerturbationConfig::preconditioned(precision.clone(), gamma, 0.0, 0.0, AntiSymMatrix::zeros(d))?;
    asym_variance(&cfg, &QuadraticObservable::quadratic(k1))
}

/// Large-perturbation evaluations of `σ²` along `μ = ν`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LargeMuLimit {
    pub at_1e3: f64,
    pub at_1e4: f64,
}

impl LargeMuLimit {
    /// The two evaluations agree to 0.5% relative.
    pub fn converged(&self) -> bool {
        (self.at_1e3 - self.at_1e4).abs() <= 5e-3 * self.at_1e4.abs().max(f64::MIN_POSITIVE)
    }
}

pub fn large_mu_limit(cfg: &PerturbationConfig, f: &QuadraticObservable) -> Result<LargeMuLimit> {
    Ok(LargeMuLimit {
        at_1e3: asym_variance(&cfg.with_strengths(1e3, 1e3), f)?,
        at_1e4: asym_variance(&cfg.with_strengths(1e4, 1e4), f)?,
    })
}

/// Largest `|σ²(μ) − σ²(0)|` over `μ = ν ∈ mu_grid` in unit form, for observables
/// with `[J, K] = 0` and `J·l = 0`.
pub fn invariance_commuting_check(
    gamma: f64,
    k: &SymMatrix,
    l: &Vector,
    j: &AntiSymMatrix,
    mu_grid: &[f64],
) -> Result<f64> {
    let scale = max_abs(k.as_matrix()).max(l.amax()).max(max_abs(j.as_matrix())).max(1.0);
    let comm = max_abs(&commutator(j.as_matrix(), k.as_matrix()));
    let jl = (j.as_matrix() * l).amax();
    if comm > 1e-12 * scale * scale || jl > 1e-12 * scale * scale {
        return Err(Error::HypothesisViolated(format!(
            "need [J,K] = 0 and Jl = 0 (|[J,K]| = {comm:.3e}, |Jl| = {jl:.3e})"
        )));
    }
    let base = asym_variance_unit(gamma, 0.0, 0.0, j.as_matrix(), k, l)?;
    let mut worst = 0.0_f64;
    for &mu in mu_grid {
        let v = asym_variance_unit(gamma, mu, mu, j.as_matrix(), k, l)?;
        worst = worst.max((v - base).abs());
    }
    Ok(worst)
}

/// The two quantities whose signs drive the local-maximum result:
/// `γ − 4/γ³ − γ³ − 1/γ` (negative for every `γ > 0`) and
/// `Tr(JKJK) − Tr(J²K²)` (non-negative, zero iff `[J, K] = 0`).
pub fn basic_inequalities(gamma: f64, k: &SymMatrix, j: &AntiSymMatrix) -> (f64, f64) {
    let first = gamma - 4.0 / gamma.powi(3) - gamma.powi(3) - 1.0 / gamma;
    let (jm, km) = (j.as_matrix(), k.as_matrix());
    let jk = jm * km;
    let second = (&jk * &jk).trace() - (jm * jm * km * km).trace();
    (first, second)
}

/// Central finite-difference derivatives of `Θ` at `(cfg.mu, cfg.nu)`.
///
/// Gradient step [`FD_GRADIENT_STEP`]; Hessian step `FD_HESSIAN_STEP·(1 + |μ|)`.
pub fn theta_fd_derivatives(cfg: &PerturbationConfig, f: &QuadraticObservable) -> Result<ThetaDerivatives> {
    check_observable(cfg, f)?;
    let u = unit_form(cfg)?;
    let g = u.transform_observable(f);
    let theta = |mu: f64, nu: f64| asym_variance_unit(u.gamma, mu, nu, u.j.as_matrix(), &g.k, &g.l);
    let (mu, nu) = (cfg.mu, cfg.nu);

    let hg = FD_GRADIENT_STEP;
    let d_mu = (theta(mu + hg, nu)? - theta(mu - hg, nu)?) / (2.0 * hg);
    let d_nu = (theta(mu, nu + hg)? - theta(mu, nu - hg)?) / (2.0 * hg);

    let h = FD_HESSIAN_STEP * (1.0 + mu.abs());
    let centre = theta(mu, nu)?;
    let h_mm = (theta(mu + h, nu)? - 2.0 * centre + theta(mu - h, nu)?) / (h * h);
    let h_nn = (theta(mu, nu + h)? - 2.0 * centre + theta(mu, nu - h)?) / (h * h);
    let h_mn = (theta(mu + h, nu + h)? - theta(mu + h, nu - h)? - theta(mu - h, nu + h)?
        + theta(mu - h, nu - h)?)
        / (4.0 * h * h);
    Ok(ThetaDerivatives {
        gradient: [d_mu, d_nu],
        hessian: [[h_mm, h_mn], [h_mn, h_nn]],
    })
}

/// Second derivative of `μ ↦ Θ(μ, μ)` at `cfg.mu` by central differences.
pub fn theta_fd_diagonal_curvature(cfg: &PerturbationConfig, f: &QuadraticObservable) -> Result<f64> {
    check_observable(cfg, f)?;
    let u = unit_form(cfg)?;
    let g = u.transform_observable(f);
    let theta = |m: f64| asym_variance_unit(u.gamma, m, m, u.j.as_matrix(), &g.k, &g.l);
    let h = FD_HESSIAN_STEP * (1.0 + cfg.mu.abs());
    Ok((theta(cfg.mu + h)? - 2.0 * theta(cfg.mu)? + theta(cfg.mu - h)?) / (h * h))
}

/// `A⁻¹` of the unit form, exposed for diagnostics.
pub fn a_inverse(cfg: &PerturbationConfig) -> Result<Matrix> {
    inverse(&a_matrix(cfg)?)
}
