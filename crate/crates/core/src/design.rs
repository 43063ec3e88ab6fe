//! Construction of optimal antisymmetric perturbations.
//!
//! For a traceless `K₀` we look for antisymmetric `J` and symmetric `A` with
//! `[A, J] = K₀`. Rotating `K₀` to zero diagonal makes this solvable entrywise.

use crate::error::{Error, Result};
use crate::matkit::{
    commutator, eig_general, max_abs, spd_inv_sqrt, spd_sqrt, sym_eig, AntiSymMatrix, Matrix,
    SymMatrix, Vector,
};

/// Output of a design run. `j_unit`, `u`, `a`, `certificate` and `k0` live in unit
/// coordinates; `j1`, `j2` are the perturbations to use in the original ones.
#[derive(Debug, Clone)]
pub struct DesignResult {
    pub j1: AntiSymMatrix,
    pub j2: AntiSymMatrix,
    pub j_unit: AntiSymMatrix,
    pub u: Matrix,
    pub a: Vector,
    /// Symmetric `A` with `[A, j_unit] = k0`.
    pub certificate: SymMatrix,
    pub k0: SymMatrix,
}

impl DesignResult {
    /// `‖[A, J] − K₀‖∞`.
    pub fn certificate_residual(&self) -> f64 {
        max_abs(&(commutator(self.certificate.as_matrix(), self.j_unit.as_matrix()) - self.k0.as_matrix()))
    }
}

/// `K − (Tr K/d)·I`.
pub fn traceless_part(k: &SymMatrix) -> SymMatrix {
    let d = k.dim();
    let shift = k.trace() / d as f64;
    SymMatrix::from_computed(&(k.as_matrix() - Matrix::identity(d, d) * shift))
}

// Flip each eigenvector so that its largest-magnitude entry is positive.
fn canonical_signs(v: &mut Matrix) {
    for mut col in v.column_iter_mut() {
        let mut best = 0.0_f64;
        for &x in col.iter() {
            if x.abs() > best.abs() {
                best = x;
            }
        }
        if best < 0.0 {
            col.neg_mut();
        }
    }
}

/// Orthogonal `U` such that `U·K₀·Uᵀ` has zero diagonal.
///
/// Starts from the eigenbasis (eigenvalues descending) and then zeroes diagonal entries
/// one at a time with plane rotations. Each rotation pairs an entry with the
/// largest-magnitude entry of opposite sign.
pub fn zero_diagonal_transform(k0: &SymMatrix) -> Result<Matrix> {
    let d = k0.dim();
    let norm = max_abs(k0.as_matrix());
    if k0.trace().abs() > 1e-10 * norm {
        return Err(Error::NotTraceless(k0.trace()));
    }
    if norm == 0.0 {
        return Ok(Matrix::identity(d, d));
    }

    let (_, mut vectors) = sym_eig(k0)?;
    canonical_signs(&mut vectors);
    let mut u = Matrix::zeros(d, d);
    for r in 0..d {
        // descending order
        u.set_row(r, &vectors.column(d - 1 - r).transpose());
    }

    let skip = 1e-12 * norm;
    let mut x = &u * k0.as_matrix() * u.transpose();
    for _ in 0..d * d {
        let Some(i) = (0..d).find(|&i| x[(i, i)].abs() > skip) else {
            break;
        };
        let xi = x[(i, i)];
        let mut partner: Option<usize> = None;
        for k in 0..d {
            if k == i || x[(k, k)].abs() <= skip || x[(k, k)].signum() == xi.signum() {
                continue;
            }
            if partner.is_none_or(|p| x[(k, k)].abs() > x[(p, p)].abs()) {
                partner = Some(k);
            }
        }
        let Some(k) = partner else {
            break;
        };
        // row i ← c·e_i − s·e_k, row k ← s·e_i + c·e_k, choose t = tan θ with
        // X_ii − 2X_ik·t + X_kk·t² = 0
        let (xik, xkk) = (x[(i, k)], x[(k, k)]);
        let disc = (xik * xik - xi * xkk).max(0.0).sqrt();
        let t = (xik + xkk.signum() * disc) / xkk;
        let theta = t.atan();
        let (s, c) = theta.sin_cos();
        let mut rot = Matrix::identity(d, d);
        rot[(i, i)] = c;
        rot[(i, k)] = -s;
        rot[(k, i)] = s;
        rot[(k, k)] = c;
        u = &rot * u;
        x = &u * k0.as_matrix() * u.transpose();
        x = (&x + x.transpose()) * 0.5;
    }
    Ok(u)
}

/// Optimal perturbation for unit covariance (`S = I`, `J₂ = J₁`).
///
/// With `X = U·K₀·Uᵀ` and `aᵢ = i`, `J̄ᵢⱼ = Xᵢⱼ/(aᵢ − aⱼ)` and `J = Uᵀ·J̄·U`.
/// The result is rescaled to `‖J‖_F = ‖K₀‖_F`.
pub fn optimal_j_unit(k: &SymMatrix) -> Result<DesignResult> {
    let d = k.dim();
    let k0 = traceless_part(k);
    let u = zero_diagonal_transform(&k0)?;
    let x = &u * k0.as_matrix() * u.transpose();
    let mut a = Vector::from_fn(d, |i, _| (i + 1) as f64);
    let mut jbar = Matrix::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            if i != j {
                jbar[(i, j)] = x[(i, j)] / (a[i] - a[j]);
            }
        }
    }
    let mut j = AntiSymMatrix::from_computed(&(u.transpose() * &jbar * &u)).into_matrix();
    let jn = j.norm();
    if jn > 0.0 {
        let scale = k0.as_matrix().norm() / jn;
        j *= scale;
        a /= scale;
    }
    let certificate = SymMatrix::from_computed(&(u.transpose() * Matrix::from_diagonal(&a) * &u));
    let j = AntiSymMatrix::from_computed(&j);
    Ok(DesignResult {
        j1: j.clone(),
        j2: j.clone(),
        j_unit: j,
        u,
        a,
        certificate,
        k0,
    })
}

/// Optimal perturbations for precision `S`: design `J̃` for `K̃ = S^{−1/2}KS^{−1/2}`,
/// then `J₁ = S^{−1/2}J̃S^{−1/2}` and `J₂ = S^{1/2}J̃S^{1/2}`.
pub fn optimal_j_general(k: &SymMatrix, precision: &SymMatrix) -> Result<DesignResult> {
    if k.dim() != precision.dim() {
        return Err(Error::DimensionMismatch(format!(
            "K is {0}x{0}, S is {1}x{1}",
            k.dim(),
            precision.dim()
        )));
    }
    let r = spd_sqrt(precision)?;
    let ri = spd_inv_sqrt(precision)?;
    let k_unit = SymMatrix::from_computed(&(ri.as_matrix() * k.as_matrix() * ri.as_matrix()));
    let unit = optimal_j_unit(&k_unit)?;
    let jt = unit.j_unit.as_matrix();
    Ok(DesignResult {
        j1: AntiSymMatrix::from_computed(&(ri.as_matrix() * jt * ri.as_matrix())),
        j2: AntiSymMatrix::from_computed(&(r.as_matrix() * jt * r.as_matrix())),
        ..unit
    })
}

/// `max |S·J₁·S − J₂|`.
pub fn perturbation_condition_residual(precision: &SymMatrix, j1: &AntiSymMatrix, j2: &AntiSymMatrix) -> f64 {
    let s = precision.as_matrix();
    max_abs(&(s * j1.as_matrix() * s - j2.as_matrix()))
}

/// An integer relation `Σ kᵢλᵢ ≈ 0` among the rotation frequencies of `J`.
#[derive(Debug, Clone, PartialEq)]
pub struct IntegerRelation {
    pub coefficients: Vec<i32>,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RationalReport {
    /// Positive imaginary parts of `σ(J)`, ascending.
    pub frequencies: Vec<f64>,
    pub relations: Vec<IntegerRelation>,
}

impl RationalReport {
    pub fn independent(&self) -> bool {
        self.relations.is_empty()
    }
}

/// Largest coefficient magnitude scanned.
pub const RELATION_BOUND: i32 = 5;
const MAX_FREQUENCIES: usize = 6;

fn gcd(a: i32, b: i32) -> i32 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

/// Scans integer combinations `Σ kᵢλᵢ`, `|kᵢ| ≤ 5`, of the positive frequencies of `J`
/// for near-cancellations `|Σ| ≤ 1e−8·max λ`. Only primitive relations (gcd 1, first
/// nonzero coefficient positive) are listed.
pub fn rational_independence_report(j: &AntiSymMatrix) -> Result<RationalReport> {
    let eig = eig_general(j.as_matrix())?;
    let top = eig.iter().map(|z| z.im.abs()).fold(0.0_f64, f64::max);
    let mut frequencies: Vec<f64> = eig
        .iter()
        .filter(|z| z.im > 1e-12 * top.max(f64::MIN_POSITIVE))
        .map(|z| z.im)
        .collect();
    frequencies.sort_by(f64::total_cmp);
    let m = frequencies.len();
    if m > MAX_FREQUENCIES {
        return Err(Error::TooLarge(format!(
            "{m} frequencies; relation scan is limited to {MAX_FREQUENCIES}"
        )));
    }
    let tol = 1e-8 * top;
    let span = (2 * RELATION_BOUND + 1) as usize;
    let mut relations = Vec::new();
    let mut coeffs = vec![0i32; m];
    for code in 0..span.pow(m as u32) {
        let mut c = code;
        for slot in coeffs.iter_mut() {
            *slot = (c % span) as i32 - RELATION_BOUND;
            c /= span;
        }
        let Some(&lead) = coeffs.iter().find(|&&k| k != 0) else {
            continue;
        };
        if lead < 0 || coeffs.iter().fold(0, |g, &k| gcd(g, k)) != 1 {
            continue;
        }
        let sum: f64 = coeffs.iter().zip(&frequencies).map(|(&k, &l)| k as f64 * l).sum();
        if sum.abs() <= tol {
            relations.push(IntegerRelation {
                coefficients: coeffs.clone(),
                residual: sum,
            });
        }
    }
    Ok(RationalReport { frequencies, relations })
}
