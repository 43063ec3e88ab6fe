//! Time integration of the perturbed underdamped Langevin dynamics.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::analysis::{general_drift, stationary_covariance};
use crate::error::{Error, Result};
use crate::matkit::{
    eig_general, expm, inverse, max_abs, psd_factor, solve_discrete_lyapunov, spd_inverse, spd_sqrt,
    Matrix, SymMatrix, Vector,
};
use crate::model::PerturbationConfig;
use crate::targets::PotentialTarget;

/// Position and momentum.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseState {
    pub q: Vector,
    pub p: Vector,
}

impl PhaseState {
    pub fn new(q: Vector, p: Vector) -> Result<Self> {
        if q.len() != p.len() {
            return Err(Error::DimensionMismatch(format!(
                "q has length {}, p has length {}",
                q.len(),
                p.len()
            )));
        }
        Ok(Self { q, p })
    }

    /// `q = (1, …, 1)`, `p = 0`.
    pub fn default_start(d: usize) -> Self {
        Self {
            q: Vector::from_element(d, 1.0),
            p: Vector::zeros(d),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.q.iter().chain(self.p.iter()).all(|x| x.is_finite())
    }
}

/// Source of independent standard normal variates.
pub trait NormalSource {
    fn fill_normal(&mut self, out: &mut [f64]);
}

/// ChaCha8 stream seeded with `seed_from_u64`, normals from `rand_distr::StandardNormal`
/// (ziggurat). Identical seeds give identical sequences.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }
}

impl NormalSource for RngStream {
    fn fill_normal(&mut self, out: &mut [f64]) {
        for x in out {
            *x = StandardNormal.sample(&mut self.rng);
        }
    }
}

/// Supplies zeros, or a fixed vector once; used to read off the linear maps of a scheme.
#[derive(Debug, Clone, Default)]
pub struct FixedNoise {
    values: Vec<f64>,
    pos: usize,
}

impl FixedNoise {
    pub fn zeros() -> Self {
        Self::default()
    }

    pub fn from_values(values: Vec<f64>) -> Self {
        Self { values, pos: 0 }
    }
}

impl NormalSource for FixedNoise {
    fn fill_normal(&mut self, out: &mut [f64]) {
        for x in out {
            *x = self.values.get(self.pos).copied().unwrap_or(0.0);
            self.pos += 1;
        }
    }
}

// Scratch space for the RK4 flow so the inner loop does not allocate.
#[derive(Debug, Clone)]
struct Rk4Work {
    k: [Vector; 4],
    stage: Vector,
    grad: Vector,
}

impl Rk4Work {
    fn new(d: usize) -> Self {
        Self {
            k: std::array::from_fn(|_| Vector::zeros(d)),
            stage: Vector::zeros(d),
            grad: Vector::zeros(d),
        }
    }
}

// k ← −J·∇V(q)
fn flow_field(target: &dyn PotentialTarget, j: &Matrix, q: &Vector, grad: &mut Vector, k: &mut Vector) {
    target.gradient_into(q, grad);
    k.gemv(-1.0, j, grad, 0.0);
}

fn rk4_in_place(q: &mut Vector, h: f64, target: &dyn PotentialTarget, j: &Matrix, w: &mut Rk4Work) {
    let Rk4Work { k, stage, grad } = w;
    let [k1, k2, k3, k4] = k;
    flow_field(target, j, q, grad, k1);
    stage.copy_from(q);
    stage.axpy(0.5 * h, k1, 1.0);
    flow_field(target, j, stage, grad, k2);
    stage.copy_from(q);
    stage.axpy(0.5 * h, k2, 1.0);
    flow_field(target, j, stage, grad, k3);
    stage.copy_from(q);
    stage.axpy(h, k3, 1.0);
    flow_field(target, j, stage, grad, k4);
    for i in 0..q.len() {
        q[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
}

/// One classical RK4 step of `q̇ = −J·∇V(q)`. Pass `μJ₁` to include the strength.
pub fn rk4_flow(q: &Vector, h: f64, target: &dyn PotentialTarget, j: &Matrix) -> Result<Vector> {
    if h.is_nan() || h <= 0.0 {
        return Err(Error::InvalidInput(format!("step must be positive, got {h}")));
    }
    let mut out = q.clone();
    let mut w = Rk4Work::new(q.len());
    rk4_in_place(&mut out, h, target, j, &mut w);
    if out.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite { step: 0 });
    }
    Ok(out)
}

/// Exact momentum update `p ← E·p + L·ξ` for `dp = −(Γ + νJ₂)M⁻¹p dt + √(2Γ) dW` over `Δt`,
/// with `E = exp(−Δt(Γ + νJ₂)M⁻¹)` and `L·Lᵀ = M − E·M·Eᵀ`.
#[derive(Debug, Clone)]
pub struct OuStepCache {
    pub propagator: Matrix,
    pub noise_factor: Matrix,
}

impl OuStepCache {
    pub fn new(cfg: &PerturbationConfig, nu: f64, dt: f64) -> Result<Self> {
        let m_inv = spd_inverse(&cfg.mass)?.into_matrix();
        let gen = (cfg.friction.as_matrix() + cfg.j2.as_matrix() * nu) * &m_inv;
        let propagator = expm(&(gen * -dt))?;
        let m = cfg.mass.as_matrix();
        let cov = m - &propagator * m * propagator.transpose();
        let noise_factor = psd_factor(&cov)?;
        Ok(Self {
            propagator,
            noise_factor,
        })
    }

    fn apply(&self, p: &mut Vector, tmp: &mut Vector, xi: &Vector) {
        tmp.gemv(1.0, &self.propagator, p, 0.0);
        tmp.gemv(1.0, &self.noise_factor, xi, 1.0);
        p.copy_from(tmp);
    }
}

/// One exact O-step.
pub fn ou_step(p: &Vector, cache: &OuStepCache, noise: &mut dyn NormalSource) -> Vector {
    let d = p.len();
    let mut xi = Vector::zeros(d);
    noise.fill_normal(xi.as_mut_slice());
    let mut out = p.clone();
    let mut tmp = Vector::zeros(d);
    cache.apply(&mut out, &mut tmp, &xi);
    out
}

/// A prepared splitting integrator: B, A, [flow], O, [flow], A, B.
///
/// The flow stages integrate `q̇ = −μJ₁∇V(q)` over `Δt/2` each with `substeps` RK4 steps;
/// they are skipped when `μ = 0`, which makes the scheme plain BAOAB.
#[derive(Debug, Clone)]
pub struct SplittingScheme {
    dt: f64,
    inv_mass: Matrix,
    flow: Option<Matrix>,
    substeps: usize,
    ou: OuStepCache,
}

impl SplittingScheme {
    /// Plain BAOAB; `μ`, `ν` of the configuration are ignored.
    pub fn baoab(cfg: &PerturbationConfig, dt: f64) -> Result<Self> {
        Self::build(cfg, dt, 0.0, 0.0, 1)
    }

    /// The perturbed seven-stage scheme.
    pub fn perturbed(cfg: &PerturbationConfig, dt: f64, substeps: usize) -> Result<Self> {
        Self::build(cfg, dt, cfg.mu, cfg.nu, substeps)
    }

    fn build(cfg: &PerturbationConfig, dt: f64, mu: f64, nu: f64, substeps: usize) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidInput(format!("step must be positive, got {dt}")));
        }
        if substeps == 0 {
            return Err(Error::InvalidInput("substeps must be at least 1".into()));
        }
        let flow = (mu != 0.0).then(|| cfg.j1.as_matrix() * mu);
        Ok(Self {
            dt,
            inv_mass: spd_inverse(&cfg.mass)?.into_matrix(),
            flow,
            substeps,
            ou: OuStepCache::new(cfg, nu, dt)?,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn dim(&self) -> usize {
        self.inv_mass.nrows()
    }

    fn flow_half(&self, q: &mut Vector, target: &dyn PotentialTarget, w: &mut Rk4Work) {
        if let Some(j) = &self.flow {
            let h = 0.5 * self.dt / self.substeps as f64;
            for _ in 0..self.substeps {
                rk4_in_place(q, h, target, j, w);
            }
        }
    }

    fn step(&self, s: &mut Integration, target: &dyn PotentialTarget, noise: &mut dyn NormalSource) {
        let half = 0.5 * self.dt;
        let Integration { state, force, tmp, xi, rk4 } = s;
        // B
        state.p.axpy(-half, force, 1.0);
        // A
        tmp.gemv(1.0, &self.inv_mass, &state.p, 0.0);
        state.q.axpy(half, tmp, 1.0);
        self.flow_half(&mut state.q, target, rk4);
        // O
        noise.fill_normal(xi.as_mut_slice());
        self.ou.apply(&mut state.p, tmp, xi);
        self.flow_half(&mut state.q, target, rk4);
        // A
        tmp.gemv(1.0, &self.inv_mass, &state.p, 0.0);
        state.q.axpy(half, tmp, 1.0);
        // B
        target.gradient_into(&state.q, force);
        state.p.axpy(-half, force, 1.0);
    }
}

// Running state of a splitting integration: the force at the current q is cached.
#[derive(Debug, Clone)]
struct Integration {
    state: PhaseState,
    force: Vector,
    tmp: Vector,
    xi: Vector,
    rk4: Rk4Work,
}

impl Integration {
    fn new(state: PhaseState, target: &dyn PotentialTarget) -> Self {
        let d = state.q.len();
        let force = target.gradient(&state.q);
        Self {
            state,
            force,
            tmp: Vector::zeros(d),
            xi: Vector::zeros(d),
            rk4: Rk4Work::new(d),
        }
    }
}

fn check_state_dim(state: &PhaseState, d: usize) -> Result<()> {
    if state.q.len() != d || state.p.len() != d {
        return Err(Error::DimensionMismatch(format!(
            "state has dimension {}, configuration {d}",
            state.q.len()
        )));
    }
    Ok(())
}

fn one_step(
    scheme: &SplittingScheme,
    state: &PhaseState,
    target: &dyn PotentialTarget,
    noise: &mut dyn NormalSource,
) -> Result<PhaseState> {
    check_state_dim(state, scheme.dim())?;
    let mut s = Integration::new(state.clone(), target);
    scheme.step(&mut s, target, noise);
    if !s.state.is_finite() {
        return Err(Error::NonFinite { step: 1 });
    }
    Ok(s.state)
}

/// One plain BAOAB step (`μ`, `ν` ignored).
pub fn baoab_step(
    state: &PhaseState,
    dt: f64,
    cfg: &PerturbationConfig,
    target: &dyn PotentialTarget,
    noise: &mut dyn NormalSource,
) -> Result<PhaseState> {
    one_step(&SplittingScheme::baoab(cfg, dt)?, state, target, noise)
}

/// One step of the perturbed scheme with a single RK4 step per flow stage.
pub fn perturbed_baoab_step(
    state: &PhaseState,
    dt: f64,
    cfg: &PerturbationConfig,
    target: &dyn PotentialTarget,
    noise: &mut dyn NormalSource,
) -> Result<PhaseState> {
    one_step(&SplittingScheme::perturbed(cfg, dt, 1)?, state, target, noise)
}

/// Exact transition of the linear dynamics for a Gaussian target:
/// `X' = e^{−BΔt}X + ξ` with `Cov ξ = Σ∞ − e^{−BΔt}Σ∞e^{−BᵀΔt}`.
#[derive(Debug, Clone)]
pub struct ExactOuStep {
    pub propagator: Matrix,
    pub noise_factor: Matrix,
}

impl ExactOuStep {
    pub fn new(cfg: &PerturbationConfig, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidInput(format!("step must be positive, got {dt}")));
        }
        let b = general_drift(cfg)?;
        let sigma = stationary_covariance(cfg)?;
        let d = cfg.dim();
        let mut two_q = Matrix::zeros(2 * d, 2 * d);
        two_q
            .view_mut((d, d), (d, d))
            .copy_from(&(cfg.friction.as_matrix() * 2.0));
        let defect = &b * &sigma + &sigma * b.transpose() - &two_q;
        if max_abs(&defect) > 1e-10 * max_abs(&two_q).max(1.0) {
            return Err(Error::ConditionsViolated(format!(
                "stationary covariance check failed ({:.3e})",
                max_abs(&defect)
            )));
        }
        let propagator = expm(&(b * -dt))?;
        let cov = &sigma - &propagator * &sigma * propagator.transpose();
        Ok(Self {
            noise_factor: psd_factor(&cov)?,
            propagator,
        })
    }

    fn apply(&self, x: &mut Vector, tmp: &mut Vector, xi: &Vector) {
        tmp.gemv(1.0, &self.propagator, x, 0.0);
        tmp.gemv(1.0, &self.noise_factor, xi, 1.0);
        x.copy_from(tmp);
    }
}

/// One exact OU step of the full state.
pub fn ou_exact_step(state: &PhaseState, step: &ExactOuStep, noise: &mut dyn NormalSource) -> Result<PhaseState> {
    let d = state.q.len();
    check_state_dim(state, step.propagator.nrows() / 2)?;
    let mut x = Vector::zeros(2 * d);
    x.rows_mut(0, d).copy_from(&state.q);
    x.rows_mut(d, d).copy_from(&state.p);
    let mut xi = Vector::zeros(2 * d);
    noise.fill_normal(xi.as_mut_slice());
    let mut tmp = Vector::zeros(2 * d);
    step.apply(&mut x, &mut tmp, &xi);
    Ok(PhaseState {
        q: x.rows(0, d).into_owned(),
        p: x.rows(d, d).into_owned(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Integrator {
    Baoab,
    PerturbedBaoab { substeps: usize },
    ExactOu,
}

impl std::str::FromStr for Integrator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "baoab" => Ok(Integrator::Baoab),
            "perturbed-baoab" | "perturbed_baoab" => Ok(Integrator::PerturbedBaoab { substeps: 1 }),
            "exact-ou" | "exact_ou" => Ok(Integrator::ExactOu),
            other => Err(Error::InvalidInput(format!("unknown integrator '{other}'"))),
        }
    }
}

/// Time grid and integrator of a single trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationSpec {
    pub dt: f64,
    pub t_end: f64,
    pub burn_in: f64,
    pub integrator: Integrator,
    /// Defaults to `(1, …, 1)`.
    pub q0: Option<Vector>,
    /// Defaults to zero.
    pub p0: Option<Vector>,
}

impl SimulationSpec {
    pub fn new(dt: f64, t_end: f64, burn_in: f64, integrator: Integrator) -> Self {
        Self {
            dt,
            t_end,
            burn_in,
            integrator,
            q0: None,
            p0: None,
        }
    }

    /// `(total steps, burn-in steps)`.
    pub fn step_counts(&self) -> Result<(usize, usize)> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidInput(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.burn_in >= 0.0 && self.t_end > self.burn_in && self.dt < self.t_end) {
            return Err(Error::InvalidInput(format!(
                "need 0 <= T0 < T and dt < T (T0 = {}, T = {}, dt = {})",
                self.burn_in, self.t_end, self.dt
            )));
        }
        let total = (self.t_end / self.dt).round() as usize;
        let burn = (self.burn_in / self.dt).round() as usize;
        if total <= burn {
            return Err(Error::InvalidInput("no steps left after burn-in".into()));
        }
        Ok((total, burn))
    }

    fn initial_state(&self, d: usize) -> Result<PhaseState> {
        let start = PhaseState::default_start(d);
        let state = PhaseState::new(
            self.q0.clone().unwrap_or(start.q),
            self.p0.clone().unwrap_or(start.p),
        )?;
        check_state_dim(&state, d)?;
        Ok(state)
    }
}

/// Time average `(1/(T − T₀))·Σ f(q_k)·Δt` over the steps after burn-in
/// (left-endpoint rule), for one trajectory seeded with `seed`.
pub fn simulate(
    cfg: &PerturbationConfig,
    target: &dyn PotentialTarget,
    spec: &SimulationSpec,
    seed: u64,
    observable: &dyn Fn(&Vector) -> f64,
) -> Result<f64> {
    let d = cfg.dim();
    if target.dim() != d {
        return Err(Error::DimensionMismatch(format!(
            "target has dimension {}, configuration {d}",
            target.dim()
        )));
    }
    let (total, burn) = spec.step_counts()?;
    let start = spec.initial_state(d)?;
    let mut rng = RngStream::new(seed);
    let mut sum = 0.0;

    match spec.integrator {
        Integrator::ExactOu => {
            match target.gaussian_precision() {
                Some(s) if max_abs(&(s.as_matrix() - cfg.precision.as_matrix())) == 0.0 => {}
                _ => {
                    return Err(Error::InvalidInput(
                        "exact OU stepping needs a Gaussian target with the configuration's precision".into(),
                    ))
                }
            }
            let step = ExactOuStep::new(cfg, spec.dt)?;
            let mut x = Vector::zeros(2 * d);
            x.rows_mut(0, d).copy_from(&start.q);
            x.rows_mut(d, d).copy_from(&start.p);
            let mut q = start.q.clone();
            let mut tmp = Vector::zeros(2 * d);
            let mut xi = Vector::zeros(2 * d);
            for k in 0..total {
                if k >= burn {
                    q.copy_from(&x.rows(0, d));
                    sum += observable(&q);
                }
                rng.fill_normal(xi.as_mut_slice());
                step.apply(&mut x, &mut tmp, &xi);
                if x.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite { step: k + 1 });
                }
            }
        }
        Integrator::Baoab | Integrator::PerturbedBaoab { .. } => {
            let scheme = match spec.integrator {
                Integrator::PerturbedBaoab { substeps } => SplittingScheme::perturbed(cfg, spec.dt, substeps)?,
                _ => SplittingScheme::baoab(cfg, spec.dt)?,
            };
            let mut s = Integration::new(start, target);
            for k in 0..total {
                if k >= burn {
                    sum += observable(&s.state.q);
                }
                scheme.step(&mut s, target, &mut rng);
                if !s.state.is_finite() || !s.force.iter().all(|v| v.is_finite()) {
                    return Err(Error::NonFinite { step: k + 1 });
                }
            }
        }
    }
    let estimate = sum / (total - burn) as f64;
    if !estimate.is_finite() {
        return Err(Error::NonFinite { step: total });
    }
    Ok(estimate)
}

/// Linear maps `(F, G)` of one splitting step on a Gaussian target, `X' = F·X + G·ξ`,
/// read off by probing the implemented step with unit vectors.
pub fn splitting_linear_maps(
    scheme: &SplittingScheme,
    target: &dyn PotentialTarget,
) -> Result<(Matrix, Matrix)> {
    if target.gaussian_precision().is_none() {
        return Err(Error::InvalidInput("linear maps need a Gaussian target".into()));
    }
    let d = scheme.dim();
    let run = |x: &Vector, xi: Vec<f64>| -> Vector {
        let state = PhaseState {
            q: x.rows(0, d).into_owned(),
            p: x.rows(d, d).into_owned(),
        };
        let mut s = Integration::new(state, target);
        scheme.step(&mut s, target, &mut FixedNoise::from_values(xi));
        let mut out = Vector::zeros(2 * d);
        out.rows_mut(0, d).copy_from(&s.state.q);
        out.rows_mut(d, d).copy_from(&s.state.p);
        out
    };
    let mut f = Matrix::zeros(2 * d, 2 * d);
    for c in 0..2 * d {
        let mut e = Vector::zeros(2 * d);
        e[c] = 1.0;
        f.set_column(c, &run(&e, Vec::new()));
    }
    let mut g = Matrix::zeros(2 * d, d);
    for c in 0..d {
        let mut xi = vec![0.0; d];
        xi[c] = 1.0;
        g.set_column(c, &run(&Vector::zeros(2 * d), xi));
    }
    Ok((f, g))
}

/// Exact stationary covariance of the discrete chain produced by a splitting scheme on a
/// Gaussian target (solves `Σ = F·Σ·Fᵀ + G·Gᵀ`).
pub fn splitting_stationary_covariance(
    scheme: &SplittingScheme,
    target: &dyn PotentialTarget,
) -> Result<SymMatrix> {
    let (f, g) = splitting_linear_maps(scheme, target)?;
    solve_discrete_lyapunov(&f, &SymMatrix::from_computed(&(&g * g.transpose())))
}

/// Drift matrix `D` of the overdamped limit `dq = −D·∇V dt + …`,
/// `D = (νJ₂ + Γ)⁻¹ + μJ₁`.
pub fn overdamped_drift_matrix(cfg: &PerturbationConfig) -> Result<Matrix> {
    let g = cfg.friction.as_matrix() + cfg.j2.as_matrix() * cfg.nu;
    Ok(inverse(&g)? + cfg.j1.as_matrix() * cfg.mu)
}

/// Coupled paths of the rescaled system and its overdamped limit.
#[derive(Debug, Clone)]
pub struct OverdampedPair {
    /// Sampled every `dt`, starting at `t = 0`.
    pub q_eps: Vec<Vector>,
    pub q_limit: Vec<Vector>,
    /// `sup_t |q^ε_t − q⁰_t|` over every fine step.
    pub sup_error: f64,
    pub fine_steps_per_dt: usize,
}

/// Integrates the ε-rescaled dynamics
///
/// ```text
/// dq = ε⁻¹M⁻¹p dt − μJ₁∇V dt
/// dp = −ε⁻¹∇V dt − ε⁻²(νJ₂ + Γ)M⁻¹p dt + ε⁻¹√(2Γ) dW
/// ```
///
/// and the limit `dq = −(νJ₂ + Γ)⁻¹∇V dt − μJ₁∇V dt + (νJ₂ + Γ)⁻¹√(2Γ) dW` by
/// Euler–Maruyama on a common fine grid with the same Wiener increments.
/// The fine step resolves the fast momentum relaxation: `h ≤ 0.2·ε²·min Re λ/|λ|²`
/// over `λ ∈ σ((νJ₂ + Γ)M⁻¹)`, and `dt` is an integer multiple of it.
pub fn overdamped_pair(
    cfg: &PerturbationConfig,
    target: &dyn PotentialTarget,
    eps: f64,
    t_end: f64,
    dt: f64,
    q0: Option<&Vector>,
    seed: u64,
) -> Result<OverdampedPair> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidInput(format!("epsilon must be positive, got {eps}")));
    }
    if !(dt > 0.0 && t_end > dt) {
        return Err(Error::InvalidInput(format!("need 0 < dt < T (dt = {dt}, T = {t_end})")));
    }
    let d = cfg.dim();
    if target.dim() != d {
        return Err(Error::DimensionMismatch(format!(
            "target has dimension {}, configuration {d}",
            target.dim()
        )));
    }
    let m_inv = spd_inverse(&cfg.mass)?.into_matrix();
    let g_mat = cfg.friction.as_matrix() + cfg.j2.as_matrix() * cfg.nu;
    let relax = &g_mat * &m_inv;
    let ratio = eig_general(&relax)?
        .iter()
        .map(|z| z.re / z.norm_sqr())
        .fold(f64::INFINITY, f64::min);
    if ratio.is_nan() || ratio <= 0.0 {
        return Err(Error::ConditionsViolated("momentum relaxation is not stable".into()));
    }
    let h_max = 0.2 * eps * eps * ratio;
    let sub = ((dt / h_max).ceil() as usize).max(1);
    let h = dt / sub as f64;
    let coarse = (t_end / dt).round() as usize;

    let sqrt_2g = spd_sqrt(&cfg.friction.scale(2.0))?.into_matrix();
    let g_inv = inverse(&g_mat)?;
    let limit_noise = &g_inv * &sqrt_2g;
    let flow = cfg.j1.as_matrix() * cfg.mu;
    let limit_drift = &g_inv + &flow;

    let start = q0.cloned().unwrap_or_else(|| Vector::from_element(d, 1.0));
    if start.len() != d {
        return Err(Error::DimensionMismatch("initial position has wrong length".into()));
    }
    let mut q_eps = start.clone();
    let mut p = Vector::zeros(d);
    let mut q_lim = start.clone();
    let mut rng = RngStream::new(seed);
    let sqrt_h = h.sqrt();
    let mut dw = Vector::zeros(d);
    let mut grad = Vector::zeros(d);
    let mut grad_lim = Vector::zeros(d);
    let mut vel = Vector::zeros(d);
    let mut tmp = Vector::zeros(d);

    let mut out_eps = vec![q_eps.clone()];
    let mut out_lim = vec![q_lim.clone()];
    let mut sup = 0.0_f64;
    for c in 0..coarse {
        for _ in 0..sub {
            rng.fill_normal(dw.as_mut_slice());
            dw *= sqrt_h;
            target.gradient_into(&q_eps, &mut grad);
            target.gradient_into(&q_lim, &mut grad_lim);
            // rescaled system
            vel.gemv(1.0 / eps, &m_inv, &p, 0.0);
            vel.gemv(-1.0, &flow, &grad, 1.0);
            tmp.gemv(-1.0 / (eps * eps), &relax, &p, 0.0);
            tmp.axpy(-1.0 / eps, &grad, 1.0);
            q_eps.axpy(h, &vel, 1.0);
            p.axpy(h, &tmp, 1.0);
            p.gemv(1.0 / eps, &sqrt_2g, &dw, 1.0);
            // limit
            q_lim.gemv(-h, &limit_drift, &grad_lim, 1.0);
            q_lim.gemv(1.0, &limit_noise, &dw, 1.0);
            sup = sup.max((&q_eps - &q_lim).norm());
        }
        if !(q_eps.iter().chain(p.iter()).chain(q_lim.iter()).all(|v| v.is_finite())) {
            return Err(Error::NonFinite { step: (c + 1) * sub });
        }
        out_eps.push(q_eps.clone());
        out_lim.push(q_lim.clone());
    }
    Ok(OverdampedPair {
        q_eps: out_eps,
        q_limit: out_lim,
        sup_error: sup,
        fine_steps_per_dt: sub,
    })
}
