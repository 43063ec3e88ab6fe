//! Dense linear algebra for the small matrices (d ≤ 128) used throughout the crate.
//!
//! Storage, LU factorisation, the symmetric eigensolver, the real Schur form and the
//! matrix exponential come from `nalgebra`. The Lyapunov solver, the Schur-complement
//! block inverse and the PSD factorisation used by the samplers live here.

use nalgebra::{DMatrix, DVector, Schur, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Relative tolerance for the symmetry / antisymmetry checks on inputs.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Largest absolute entry, the `‖·‖∞` used by all relative tolerances here.
pub fn max_abs(m: &Matrix) -> f64 {
    m.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

fn relative_part(m: &Matrix, sign: f64) -> f64 {
    let scale = max_abs(m);
    if scale == 0.0 {
        return 0.0;
    }
    let defect = m - sign * m.transpose();
    max_abs(&defect) / scale
}

fn check_square(m: &Matrix, what: &str) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "{what} must be square, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

/// A symmetric matrix. Construction rejects inputs outside the symmetry tolerance.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(Matrix);

impl SymMatrix {
    pub fn new(m: Matrix) -> Result<Self> {
        check_square(&m, "symmetric matrix")?;
        if m.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("non-finite matrix entry".into()));
        }
        let defect = relative_part(&m, 1.0);
        if defect > SYMMETRY_TOL {
            return Err(Error::NotSymmetric(defect));
        }
        Ok(Self(m))
    }

    /// Wraps the symmetric part of a matrix produced by our own arithmetic
    /// (e.g. `X·K·X` with symmetric `X`), where asymmetry is pure rounding.
    pub fn from_computed(m: &Matrix) -> Self {
        Self((m + m.transpose()) * 0.5)
    }

    pub fn identity(d: usize) -> Self {
        Self(Matrix::identity(d, d))
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        Self(Matrix::from_diagonal(&Vector::from_column_slice(diag)))
    }

    pub fn zeros(d: usize) -> Self {
        Self(Matrix::zeros(d, d))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    pub fn scale(&self, s: f64) -> Self {
        Self(&self.0 * s)
    }
}

impl std::ops::Deref for SymMatrix {
    type Target = Matrix;
    fn deref(&self) -> &Matrix {
        &self.0
    }
}

/// An antisymmetric matrix (zero diagonal, `Xᵀ = −X`).
#[derive(Debug, Clone, PartialEq)]
pub struct AntiSymMatrix(Matrix);

impl AntiSymMatrix {
    pub fn new(m: Matrix) -> Result<Self> {
        check_square(&m, "antisymmetric matrix")?;
        if m.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("non-finite matrix entry".into()));
        }
        let defect = relative_part(&m, -1.0);
        if defect > SYMMETRY_TOL {
            return Err(Error::NotAntisymmetric(defect));
        }
        if m.diagonal().iter().any(|&x| x != 0.0) && defect > 0.0 {
            return Err(Error::NotAntisymmetric(defect));
        }
        Ok(Self(m))
    }

    pub fn from_computed(m: &Matrix) -> Self {
        let mut out = (m - m.transpose()) * 0.5;
        out.fill_diagonal(0.0);
        Self(out)
    }

    pub fn zeros(d: usize) -> Self {
        Self(Matrix::zeros(d, d))
    }

    /// Block-diagonal sum of `d/2` copies of `[[0, 1], [−1, 0]]` (last row/column zero for odd `d`).
    pub fn standard(d: usize) -> Self {
        let mut m = Matrix::zeros(d, d);
        for k in 0..d / 2 {
            m[(2 * k, 2 * k + 1)] = 1.0;
            m[(2 * k + 1, 2 * k)] = -1.0;
        }
        Self(m)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    pub fn scale(&self, s: f64) -> Self {
        Self(&self.0 * s)
    }
}

impl std::ops::Deref for AntiSymMatrix {
    type Target = Matrix;
    fn deref(&self) -> &Matrix {
        &self.0
    }
}

/// `[X, Y] = XY − YX`.
pub fn commutator(x: &Matrix, y: &Matrix) -> Matrix {
    x * y - y * x
}

/// Assembles `[[tl, tr], [bl, br]]`.
pub fn block2x2(tl: &Matrix, tr: &Matrix, bl: &Matrix, br: &Matrix) -> Matrix {
    let (r1, c1) = tl.shape();
    let (r2, c2) = br.shape();
    let mut out = Matrix::zeros(r1 + r2, c1 + c2);
    out.view_mut((0, 0), (r1, c1)).copy_from(tl);
    out.view_mut((0, c1), (r1, c2)).copy_from(tr);
    out.view_mut((r1, 0), (r2, c1)).copy_from(bl);
    out.view_mut((r1, c1), (r2, c2)).copy_from(br);
    out
}

/// Symmetric eigendecomposition `S = U·diag(λ)·Uᵀ` with eigenvalues ascending.
pub fn sym_eig(s: &SymMatrix) -> Result<(Vector, Matrix)> {
    let n = s.dim();
    if n == 0 {
        return Ok((Vector::zeros(0), Matrix::zeros(0, 0)));
    }
    let eig = SymmetricEigen::try_new(s.as_matrix().clone(), f64::EPSILON, 100 * n.max(1))
        .ok_or(Error::NoConvergence("symmetric eigensolver"))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = Vector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok((values, vectors))
}

fn spd_power(s: &SymMatrix, f: impl Fn(f64) -> f64) -> Result<SymMatrix> {
    let (values, u) = sym_eig(s)?;
    if let Some(&min) = values.iter().next() {
        if min <= 0.0 {
            return Err(Error::NotPositiveDefinite(min));
        }
    }
    let mapped = Matrix::from_diagonal(&values.map(f));
    Ok(SymMatrix::from_computed(&(&u * mapped * u.transpose())))
}

/// Principal square root of a symmetric positive definite matrix.
pub fn spd_sqrt(s: &SymMatrix) -> Result<SymMatrix> {
    spd_power(s, f64::sqrt)
}

/// `S^{-1/2}` for symmetric positive definite `S`.
pub fn spd_inv_sqrt(s: &SymMatrix) -> Result<SymMatrix> {
    spd_power(s, |x| 1.0 / x.sqrt())
}

/// Inverse of a symmetric positive definite matrix.
pub fn spd_inverse(s: &SymMatrix) -> Result<SymMatrix> {
    spd_power(s, |x| 1.0 / x)
}

/// Matrix exponential (Padé scaling-and-squaring).
pub fn expm(x: &Matrix) -> Result<Matrix> {
    check_square(x, "expm argument")?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite matrix entry".into()));
    }
    if x.nrows() == 0 {
        return Ok(x.clone());
    }
    Ok(x.exp())
}

/// Solves `A·x = b` by LU with partial pivoting.
pub fn solve_linear(a: &Matrix, b: &Vector) -> Result<Vector> {
    check_square(a, "linear system matrix")?;
    if a.nrows() != b.len() {
        return Err(Error::DimensionMismatch(format!(
            "matrix is {}x{}, right-hand side has length {}",
            a.nrows(),
            a.ncols(),
            b.len()
        )));
    }
    let x = a.clone().lu().solve(b).ok_or(Error::Singular("solve_linear"))?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular("solve_linear"));
    }
    Ok(x)
}

/// Dense inverse via LU.
pub fn inverse(a: &Matrix) -> Result<Matrix> {
    check_square(a, "inverse argument")?;
    let inv = a.clone().try_inverse().ok_or(Error::Singular("inverse"))?;
    if inv.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular("inverse"));
    }
    Ok(inv)
}

/// Solves the Lyapunov equation `A·C + C·Aᵀ = R` for symmetric `C`.
///
/// The equation is vectorised row-major, `vec(C)[i·n + j] = C[i, j]`, and the resulting
/// `n² × n²` system is solved densely. Intended for `n = 2d ≤ 64`.
pub fn solve_lyapunov(a: &Matrix, rhs: &SymMatrix) -> Result<SymMatrix> {
    check_square(a, "Lyapunov drift")?;
    let n = a.nrows();
    if rhs.dim() != n {
        return Err(Error::DimensionMismatch(format!(
            "drift is {n}x{n}, right-hand side is {0}x{0}",
            rhs.dim()
        )));
    }
    let nn = n * n;
    let mut op = Matrix::zeros(nn, nn);
    for i in 0..n {
        for j in 0..n {
            let row = i * n + j;
            for k in 0..n {
                // (A·C)[i, j] = Σ_k A[i, k]·C[k, j]
                op[(row, k * n + j)] += a[(i, k)];
                // (C·Aᵀ)[i, j] = Σ_k C[i, k]·A[j, k]
                op[(row, i * n + k)] += a[(j, k)];
            }
        }
    }
    let b = Vector::from_iterator(nn, (0..nn).map(|r| rhs[(r / n, r % n)]));
    let x = op.lu().solve(&b).ok_or(Error::DegenerateDrift)?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::DegenerateDrift);
    }
    let c = Matrix::from_fn(n, n, |i, j| x[i * n + j]);
    let c = SymMatrix::from_computed(&c);

    let residual = a * c.as_matrix() + c.as_matrix() * a.transpose() - rhs.as_matrix();
    let scale = max_abs(rhs.as_matrix()).max(f64::MIN_POSITIVE);
    if max_abs(&residual) > 1e-9 * scale && max_abs(rhs.as_matrix()) > 0.0 {
        return Err(Error::DegenerateDrift);
    }
    Ok(c)
}

/// Solves the discrete Lyapunov (Stein) equation `Σ − F·Σ·Fᵀ = Q` for symmetric `Σ`.
///
/// Dense Kronecker solve of the `n² × n²` system; singular when `F` has eigenvalues with
/// `λᵢλⱼ = 1`.
pub fn solve_discrete_lyapunov(f: &Matrix, q: &SymMatrix) -> Result<SymMatrix> {
    check_square(f, "Stein map")?;
    let n = f.nrows();
    if q.dim() != n {
        return Err(Error::DimensionMismatch(format!(
            "map is {n}x{n}, right-hand side is {0}x{0}",
            q.dim()
        )));
    }
    let nn = n * n;
    // (F·Σ·Fᵀ)[i, j] = Σ_{k,l} F[i, k]·Σ[k, l]·F[j, l]
    let op = Matrix::from_fn(nn, nn, |row, col| {
        let (i, j) = (row / n, row % n);
        let (k, l) = (col / n, col % n);
        let id = if row == col { 1.0 } else { 0.0 };
        id - f[(i, k)] * f[(j, l)]
    });
    let b = Vector::from_iterator(nn, (0..nn).map(|r| q[(r / n, r % n)]));
    let x = op.lu().solve(&b).ok_or(Error::Singular("discrete Lyapunov operator"))?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular("discrete Lyapunov operator"));
    }
    Ok(SymMatrix::from_computed(&Matrix::from_fn(n, n, |i, j| x[i * n + j])))
}

/// Top-left block of `[[U, V], [W, X]]⁻¹`, computed as `(U − V·X⁻¹·W)⁻¹`.
pub fn schur_block_tl_inverse(u: &Matrix, v: &Matrix, w: &Matrix, x: &Matrix) -> Result<Matrix> {
    check_square(u, "top-left block")?;
    check_square(x, "bottom-right block")?;
    if v.shape() != (u.nrows(), x.ncols()) || w.shape() != (x.nrows(), u.ncols()) {
        return Err(Error::DimensionMismatch("inconsistent block partition".into()));
    }
    let x_inv_w = x
        .clone()
        .lu()
        .solve(w)
        .ok_or(Error::Singular("bottom-right block"))?;
    let complement = u - v * x_inv_w;
    complement
        .try_inverse()
        .filter(|m| m.iter().all(|e| e.is_finite()))
        .ok_or(Error::Singular("Schur complement"))
}

/// Eigenvalues of a general real square matrix via the real Schur form.
///
/// The result is sorted by real part, then imaginary part.
pub fn eig_general(b: &Matrix) -> Result<Vec<Complex64>> {
    check_square(b, "eigenvalue argument")?;
    let n = b.nrows();
    if n == 0 {
        return Ok(Vec::new());
    }
    let schur = Schur::try_new(b.clone(), f64::EPSILON, 100 * n)
        .ok_or(Error::NoConvergence("real Schur decomposition"))?;
    let mut values: Vec<Complex64> = schur
        .complex_eigenvalues()
        .iter()
        .map(|z| Complex64::new(z.re, z.im))
        .collect();
    if values.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NoConvergence("real Schur decomposition"));
    }
    values.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    Ok(values)
}

/// Factor `L` with `L·Lᵀ = X` for a symmetric positive semidefinite `X`.
///
/// `X` is symmetrised first; eigenvalues in `[−1e−13·‖X‖, 0)` are clipped to zero and
/// anything more negative is an error. The factor is `U·diag(√λ)`, which also covers
/// singular `X` where a Cholesky factorisation would break down.
pub fn psd_factor(x: &Matrix) -> Result<Matrix> {
    check_square(x, "covariance")?;
    let sym = SymMatrix::from_computed(x);
    let (values, u) = sym_eig(&sym)?;
    let tol = 1e-13 * max_abs(sym.as_matrix());
    let mut roots = Vector::zeros(values.len());
    for (r, &v) in roots.iter_mut().zip(values.iter()) {
        if v < -tol {
            return Err(Error::NotPositiveSemidefinite(v));
        }
        *r = v.max(0.0).sqrt();
    }
    Ok(u * Matrix::from_diagonal(&roots))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut impl Rng, r: usize, c: usize) -> Matrix {
        Matrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
    }

    fn random_sym(rng: &mut impl Rng, d: usize) -> SymMatrix {
        let m = random_matrix(rng, d, d);
        SymMatrix::from_computed(&(&m + m.transpose()))
    }

    fn random_spd(rng: &mut impl Rng, d: usize) -> SymMatrix {
        let m = random_matrix(rng, d, d);
        SymMatrix::from_computed(&(&m * m.transpose() + Matrix::identity(d, d)))
    }

    #[test]
    fn rejects_asymmetric_input() {
        let m = Matrix::from_row_slice(2, 2, &[1.0, 2.0, 2.1, 1.0]);
        assert!(matches!(SymMatrix::new(m), Err(Error::NotSymmetric(_))));
        let j = Matrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        assert!(matches!(AntiSymMatrix::new(j), Err(Error::NotAntisymmetric(_))));
    }

    #[test]
    fn sym_eig_diagonal_and_swap() {
        let (l, u) = sym_eig(&SymMatrix::from_diagonal(&[2.0, 1.0])).unwrap();
        assert_eq!(l.as_slice(), &[1.0, 2.0]);
        assert!((u[(1, 0)].abs() - 1.0).abs() < 1e-15 && u[(0, 0)].abs() < 1e-15);

        let s = SymMatrix::new(Matrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])).unwrap();
        let (l, u) = sym_eig(&s).unwrap();
        assert!((l[0] + 1.0).abs() < 1e-14 && (l[1] - 1.0).abs() < 1e-14);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        // columns are ±(1,−1)/√2 and ±(1,1)/√2
        assert!((u[(0, 0)] * u[(1, 0)] + 0.5).abs() < 1e-14);
        assert!((u[(0, 1)].abs() - h).abs() < 1e-14 && (u[(0, 1)] * u[(1, 1)] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn sym_eig_random_reconstruction() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = random_sym(&mut rng, 5);
        let (l, u) = sym_eig(&s).unwrap();
        let rec = &u * Matrix::from_diagonal(&l) * u.transpose();
        assert!(max_abs(&(rec - s.as_matrix())) <= 1e-10);
        assert!(max_abs(&(u.transpose() * &u - Matrix::identity(5, 5))) <= 1e-12);
        assert!(l.as_slice().windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn spd_sqrt_cases() {
        let i3 = SymMatrix::identity(3);
        assert!(max_abs(&(spd_sqrt(&i3).unwrap().into_matrix() - Matrix::identity(3, 3))) < 1e-15);
        let r = spd_sqrt(&SymMatrix::from_diagonal(&[4.0, 9.0])).unwrap();
        assert!((r[(0, 0)] - 2.0).abs() < 1e-14 && (r[(1, 1)] - 3.0).abs() < 1e-14);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = random_spd(&mut rng, 6);
        let r = spd_sqrt(&s).unwrap();
        assert!(max_abs(&(r.as_matrix() * r.as_matrix() - s.as_matrix())) < 1e-10);
        let ri = spd_inv_sqrt(&s).unwrap();
        assert!(max_abs(&(r.as_matrix() * ri.as_matrix() - Matrix::identity(6, 6))) < 1e-10);
        assert!(matches!(
            spd_sqrt(&SymMatrix::from_diagonal(&[1.0, -1.0])),
            Err(Error::NotPositiveDefinite(_))
        ));
    }

    #[test]
    fn expm_closed_forms() {
        let z = expm(&Matrix::zeros(3, 3)).unwrap();
        assert_eq!(z, Matrix::identity(3, 3));
        let e = expm(&Matrix::from_diagonal(&Vector::from_vec(vec![0.5, -2.0, 3.0]))).unwrap();
        for (k, a) in [0.5_f64, -2.0, 3.0].iter().enumerate() {
            assert!((e[(k, k)] - a.exp()).abs() <= 1e-12 * a.exp());
        }
        let h = 0.37;
        let j = AntiSymMatrix::standard(2);
        let r = expm(&(j.as_matrix() * -h)).unwrap();
        let expected = Matrix::from_row_slice(2, 2, &[h.cos(), -h.sin(), h.sin(), h.cos()]);
        assert!(max_abs(&(r - expected)) < 1e-14);
    }

    #[test]
    fn expm_moderate_norm_relative_accuracy() {
        // exp(diag) through a similarity keeps the closed form available at ‖X‖ ≈ 50
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let q = sym_eig(&random_sym(&mut rng, 4)).unwrap().1;
        let lam = [-50.0, -10.0, 1.0, 3.0];
        let x = &q * Matrix::from_diagonal(&Vector::from_row_slice(&lam)) * q.transpose();
        let expected = &q * Matrix::from_diagonal(&Vector::from_iterator(4, lam.iter().map(|v: &f64| v.exp()))) * q.transpose();
        let got = expm(&x).unwrap();
        assert!(max_abs(&(got - &expected)) <= 1e-12 * max_abs(&expected));
    }

    #[test]
    fn lyapunov_identity_drift() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for d in [1, 2, 5] {
            let k = random_sym(&mut rng, d);
            let c = solve_lyapunov(&Matrix::identity(d, d), &k).unwrap();
            assert!(max_abs(&(c.as_matrix() - k.as_matrix() * 0.5)) < 1e-14);
        }
    }

    #[test]
    fn lyapunov_unperturbed_scalar_case() {
        // A = [[0, 1], [−1, γ]] with γ = 2, K̄ = diag(1, 0)
        let a = Matrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 2.0]);
        let c = solve_lyapunov(&a, &SymMatrix::from_diagonal(&[1.0, 0.0])).unwrap();
        let expected = Matrix::from_row_slice(2, 2, &[1.25, 0.5, 0.5, 0.25]);
        assert!(max_abs(&(c.into_matrix() - expected)) < 1e-14);
    }

    #[test]
    fn lyapunov_singular_operator() {
        // eigenvalues 1 and −1 sum to zero
        let a = Matrix::from_diagonal(&Vector::from_vec(vec![1.0, -1.0]));
        let r = SymMatrix::new(Matrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0])).unwrap();
        assert_eq!(solve_lyapunov(&a, &r), Err(Error::DegenerateDrift));
    }

    #[test]
    fn discrete_lyapunov_scalar_and_residual() {
        // σ = a²σ + q  ⇒  σ = q/(1 − a²)
        let s = solve_discrete_lyapunov(&Matrix::from_element(1, 1, 0.5), &SymMatrix::identity(1)).unwrap();
        assert!((s[(0, 0)] - 4.0 / 3.0).abs() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let f = random_matrix(&mut rng, 4, 4) * 0.3;
        let q = random_spd(&mut rng, 4);
        let s = solve_discrete_lyapunov(&f, &q).unwrap();
        let res = s.as_matrix() - &f * s.as_matrix() * f.transpose() - q.as_matrix();
        assert!(max_abs(&res) < 1e-12);
    }

    #[test]
    fn solve_linear_cases() {
        let b = Vector::from_vec(vec![1.0, -2.0, 3.0]);
        assert_eq!(solve_linear(&Matrix::identity(3, 3), &b).unwrap(), b);
        let (gamma, l) = (2.0, 0.7);
        let a = Matrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, gamma]);
        let d = solve_linear(&a, &Vector::from_vec(vec![l, 0.0])).unwrap();
        assert!((d[0] - gamma * l).abs() < 1e-15 && (d[1] - l).abs() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a = random_matrix(&mut rng, 6, 6) + Matrix::identity(6, 6) * 4.0;
        let b = Vector::from_fn(6, |_, _| rng.random_range(-1.0..1.0));
        let x = solve_linear(&a, &b).unwrap();
        assert!((a * x - &b).amax() <= 1e-10 * b.amax());
        assert!(matches!(
            solve_linear(&Matrix::zeros(2, 2), &Vector::zeros(2)),
            Err(Error::Singular(_))
        ));
    }

    #[test]
    fn schur_block_cases() {
        let u = Matrix::from_row_slice(2, 2, &[2.0, 1.0, 0.0, 3.0]);
        let z = Matrix::zeros(2, 2);
        let tl = schur_block_tl_inverse(&u, &z, &z, &Matrix::identity(2, 2)).unwrap();
        assert!(max_abs(&(tl - u.clone().try_inverse().unwrap())) < 1e-15);

        // unperturbed drift, d = 1, γ = 2: A⁻¹ = [[2, −1], [1, 0]]
        let one = Matrix::identity(1, 1);
        let tl = schur_block_tl_inverse(&Matrix::zeros(1, 1), &one, &(-&one), &(&one * 2.0)).unwrap();
        assert!((tl[(0, 0)] - 2.0).abs() < 1e-15);

        assert!(matches!(
            schur_block_tl_inverse(&z, &z, &z, &Matrix::identity(2, 2)),
            Err(Error::Singular(_))
        ));
    }

    #[test]
    fn eig_general_cases() {
        let e = eig_general(&Matrix::from_diagonal(&Vector::from_vec(vec![2.0, 1.0]))).unwrap();
        assert!((e[0] - Complex64::new(1.0, 0.0)).norm() < 1e-14);
        assert!((e[1] - Complex64::new(2.0, 0.0)).norm() < 1e-14);
        let e = eig_general(AntiSymMatrix::standard(2).as_matrix()).unwrap();
        assert!((e[0] - Complex64::new(0.0, -1.0)).norm() < 1e-14);
        assert!((e[1] - Complex64::new(0.0, 1.0)).norm() < 1e-14);
    }

    #[test]
    fn psd_factor_singular_and_rejection() {
        let x = Matrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let l = psd_factor(&x).unwrap();
        assert!(max_abs(&(&l * l.transpose() - &x)) < 1e-14);
        let bad = Matrix::from_diagonal(&Vector::from_vec(vec![1.0, -1e-3]));
        assert!(matches!(psd_factor(&bad), Err(Error::NotPositiveSemidefinite(_))));
    }

    fn seeded(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(25))]

        #[test]
        fn lyapunov_symmetric_with_small_residual(seed in any::<u64>(), di in 0usize..4) {
            let d = [1, 2, 4, 8][di];
            let mut rng = seeded(seed);
            // stable drift: random matrix shifted so all eigenvalues have positive real part
            let m = random_matrix(&mut rng, d, d);
            let shift = m.iter().map(|v| v.abs()).sum::<f64>() / d as f64 + 0.5;
            let a = m + Matrix::identity(d, d) * shift;
            let r = random_sym(&mut rng, d);
            let c = solve_lyapunov(&a, &r).unwrap();
            let cm = c.as_matrix();
            prop_assert!(max_abs(&(cm - cm.transpose())) <= 1e-12 * max_abs(cm).max(1e-300));
            let res = &a * cm + cm * a.transpose() - r.as_matrix();
            prop_assert!(max_abs(&res) <= 1e-9 * max_abs(r.as_matrix()));
        }

        #[test]
        fn expm_inverse_pair(seed in any::<u64>(), d in 1usize..6) {
            let mut rng = seeded(seed);
            let mut x = random_matrix(&mut rng, d, d);
            let norm = x.norm();
            if norm > 0.0 {
                x *= rng.random_range(0.0..5.0) / norm;
            }
            let p = expm(&x).unwrap() * expm(&(-&x)).unwrap();
            prop_assert!(max_abs(&(p - Matrix::identity(d, d))) <= 1e-10);
        }

        #[test]
        fn sym_eig_reconstructs(seed in any::<u64>(), d in 1usize..9) {
            let mut rng = seeded(seed);
            let s = random_sym(&mut rng, d);
            let (l, u) = sym_eig(&s).unwrap();
            let rec = &u * Matrix::from_diagonal(&l) * u.transpose();
            prop_assert!(max_abs(&(rec - s.as_matrix())) <= 1e-10);
            prop_assert!(max_abs(&(u.transpose() * &u - Matrix::identity(d, d))) <= 1e-12);
        }

        #[test]
        fn schur_matches_dense_inverse(seed in any::<u64>(), p in 1usize..4, q in 1usize..4) {
            let mut rng = seeded(seed);
            let n = p + q;
            let full = random_matrix(&mut rng, n, n) + Matrix::identity(n, n) * 3.0;
            let u = full.view((0, 0), (p, p)).into_owned();
            let v = full.view((0, p), (p, q)).into_owned();
            let w = full.view((p, 0), (q, p)).into_owned();
            let x = full.view((p, p), (q, q)).into_owned();
            let tl = schur_block_tl_inverse(&u, &v, &w, &x).unwrap();
            let dense = full.try_inverse().unwrap();
            prop_assert!(max_abs(&(tl - dense.view((0, 0), (p, p)))) <= 1e-10);
        }
    }
}
