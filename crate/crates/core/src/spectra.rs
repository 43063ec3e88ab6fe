//! Spectra of the drift matrix and of the (truncated) Ornstein–Uhlenbeck generator.

use num_complex::Complex64;

use crate::analysis::{general_drift, unit_form};
use crate::error::{Error, Result};
use crate::matkit::{eig_general, AntiSymMatrix};
use crate::model::PerturbationConfig;

/// Absolute tolerance for merging eigenvalues into one entry.
pub const DEDUP_TOL: f64 = 1e-10;
/// Largest Hermite level the generator enumeration accepts.
pub const MAX_LEVEL: usize = 6;
/// Cap on `C(2d + m_max, m_max)`.
pub const MAX_TERMS: u128 = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpectrumSource {
    Drift,
    DriftClosedForm,
    GeneratorTruncated { m_max: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumEntry {
    pub value: Complex64,
    pub multiplicity: usize,
    /// Hermite level `|α|`; 1 for drift spectra.
    pub level: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumSet {
    pub entries: Vec<SpectrumEntry>,
    pub source: SpectrumSource,
}

impl SpectrumSet {
    fn from_values(values: &[Complex64], level: usize, source: SpectrumSource) -> Self {
        let mut set = Self {
            entries: Vec::new(),
            source,
        };
        set.extend_level(values, level);
        set
    }

    fn extend_level(&mut self, values: &[Complex64], level: usize) {
        let start = self.entries.len();
        for &v in values {
            match self.entries[start..]
                .iter_mut()
                .find(|e| (e.value - v).norm() <= DEDUP_TOL)
            {
                Some(e) => e.multiplicity += 1,
                None => self.entries.push(SpectrumEntry {
                    value: v,
                    multiplicity: 1,
                    level,
                }),
            }
        }
        self.entries[start..].sort_by(|a, b| {
            a.value
                .re
                .total_cmp(&b.value.re)
                .then(a.value.im.total_cmp(&b.value.im))
        });
    }

    /// All eigenvalues with multiplicity, in entry order.
    pub fn values(&self) -> Vec<Complex64> {
        self.entries
            .iter()
            .flat_map(|e| std::iter::repeat_n(e.value, e.multiplicity))
            .collect()
    }

    pub fn level(&self, m: usize) -> impl Iterator<Item = &SpectrumEntry> {
        self.entries.iter().filter(move |e| e.level == m)
    }
}

/// Largest distance in a greedy nearest-neighbour matching of two eigenvalue multisets.
/// Returns infinity when the sizes differ.
pub fn multiset_distance(a: &[Complex64], b: &[Complex64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    let mut used = vec![false; b.len()];
    let mut worst = 0.0_f64;
    for x in a {
        let (idx, dist) = b
            .iter()
            .enumerate()
            .filter(|(i, _)| !used[*i])
            .map(|(i, y)| (i, (x - y).norm()))
            .min_by(|p, q| p.1.total_cmp(&q.1))
            .expect("sizes match");
        used[idx] = true;
        worst = worst.max(dist);
    }
    worst
}

/// Eigenvalues of the drift `B` of a configuration (original coordinates).
pub fn drift_spectrum(cfg: &PerturbationConfig) -> Result<SpectrumSet> {
    let values = eig_general(&general_drift(cfg)?)?;
    Ok(SpectrumSet::from_values(&values, 1, SpectrumSource::Drift))
}

/// `{μλ + γ/2 ± √((γ/2)² − 1) : λ ∈ σ(J)}` for equal perturbations, with `σ(J)` given
/// by the imaginary parts of its eigenvalues.
pub fn drift_spectrum_closed(mu: f64, gamma: f64, j_imag: &[f64]) -> SpectrumSet {
    let offset = Complex64::new((gamma / 2.0).powi(2) - 1.0, 0.0).sqrt();
    let mut values = Vec::with_capacity(2 * j_imag.len());
    for &w in j_imag {
        let base = Complex64::new(gamma / 2.0, mu * w);
        values.push(base + offset);
        values.push(base - offset);
    }
    SpectrumSet::from_values(&values, 1, SpectrumSource::DriftClosedForm)
}

/// Imaginary parts of `σ(J)`, with multiplicity.
pub fn antisymmetric_frequencies(j: &AntiSymMatrix) -> Result<Vec<f64>> {
    Ok(eig_general(j.as_matrix())?.iter().map(|z| z.im).collect())
}

/// Closed-form drift spectrum of a structured configuration with `μ = ν`.
pub fn drift_spectrum_closed_for(cfg: &PerturbationConfig) -> Result<SpectrumSet> {
    if !cfg.meets_paper_conditions() {
        return Err(Error::ConditionsViolated("closed form needs the structural relations and mu = nu".into()));
    }
    let u = unit_form(cfg)?;
    Ok(drift_spectrum_closed(cfg.mu, cfg.gamma, &antisymmetric_frequencies(&u.j)?))
}

fn binomial(n: u128, k: u128) -> u128 {
    let k = k.min(n - k.min(n));
    (0..k).fold(1u128, |acc, i| acc * (n - i) / (i + 1))
}

/// Eigenvalues of `−𝓛` on Hermite levels `1..=m_max`: all sums `Σ αⱼλⱼ` with
/// `|α| = m` over `λ ∈ σ(B)`.
pub fn generator_spectrum(cfg: &PerturbationConfig, m_max: usize) -> Result<SpectrumSet> {
    if m_max == 0 || m_max > MAX_LEVEL {
        return Err(Error::TooLarge(format!("m_max must be in 1..={MAX_LEVEL}, got {m_max}")));
    }
    let n = 2 * cfg.dim();
    let terms = binomial((n + m_max) as u128, m_max as u128);
    if terms > MAX_TERMS {
        return Err(Error::TooLarge(format!(
            "{terms} multi-indices exceed the cap of {MAX_TERMS}"
        )));
    }
    let drift = eig_general(&general_drift(cfg)?)?;
    let mut set = SpectrumSet {
        entries: Vec::new(),
        source: SpectrumSource::GeneratorTruncated { m_max },
    };
    // multisets of size m from the n eigenvalues, as non-decreasing index tuples
    let mut sums_prev: Vec<(usize, Complex64)> = drift.iter().enumerate().map(|(i, &v)| (i, v)).collect();
    set.extend_level(&drift, 1);
    for m in 2..=m_max {
        let mut next = Vec::new();
        for &(last, s) in &sums_prev {
            for (k, &v) in drift.iter().enumerate().skip(last) {
                next.push((k, s + v));
            }
        }
        let values: Vec<Complex64> = next.iter().map(|p| p.1).collect();
        set.extend_level(&values, m);
        sums_prev = next;
    }
    Ok(set)
}

/// `min Re λ` over eigenvalues with `|λ| > 1e−10`.
pub fn spectral_bound(spec: &SpectrumSet) -> Result<f64> {
    spec.entries
        .iter()
        .filter(|e| e.value.norm() > 1e-10)
        .map(|e| e.value.re)
        .min_by(f64::total_cmp)
        .ok_or_else(|| Error::InvalidInput("spectrum has no nonzero eigenvalue".into()))
}

/// Friction maximising the decay rate of a single mode with stiffness `s` and mass `m`:
/// `γ = 2√(sm)`, rate `√(s/m)`.
pub fn critical_damping(s: f64, m: f64) -> Result<(f64, f64)> {
    if !(s > 0.0 && m > 0.0 && s.is_finite() && m.is_finite()) {
        return Err(Error::InvalidInput(format!("need s, m > 0, got s = {s}, m = {m}")));
    }
    Ok((2.0 * (s * m).sqrt(), (s / m).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matkit::{Matrix, SymMatrix};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn unit(gamma: f64, mu: f64, nu: f64, j: AntiSymMatrix) -> PerturbationConfig {
        PerturbationConfig::unit(gamma, mu, nu, j).unwrap()
    }

    #[test]
    fn drift_spectrum_examples() {
        // Jordan block at γ = 2: computed eigenvalues are only accurate to ~√ε
        let s = drift_spectrum(&unit(2.0, 0.0, 0.0, AntiSymMatrix::zeros(1))).unwrap();
        assert!(multiset_distance(&s.values(), &[c(1.0, 0.0), c(1.0, 0.0)]) < 1e-7);

        let s = drift_spectrum(&unit(2.0, 1.0, 1.0, AntiSymMatrix::standard(2))).unwrap();
        let expected = [c(1.0, 1.0), c(1.0, 1.0), c(1.0, -1.0), c(1.0, -1.0)];
        assert!(multiset_distance(&s.values(), &expected) < 1e-7);

        let s = drift_spectrum(&unit(4.0, 0.0, 0.0, AntiSymMatrix::zeros(1))).unwrap();
        let r3 = 3f64.sqrt();
        assert!(multiset_distance(&s.values(), &[c(2.0 - r3, 0.0), c(2.0 + r3, 0.0)]) < 1e-12);
    }

    #[test]
    fn closed_form_examples() {
        let s = drift_spectrum_closed(0.7, 2.0, &[1.0, -1.0]);
        assert_eq!(s.entries.len(), 2);
        assert!(s.entries.iter().all(|e| e.multiplicity == 2 && e.value.re == 1.0));
        let s = drift_spectrum_closed(1.0, 2.0, &[1.0, -1.0]);
        assert!(multiset_distance(&s.values(), &[c(1.0, 1.0), c(1.0, 1.0), c(1.0, -1.0), c(1.0, -1.0)]) < 1e-15);

        let gamma = 1.2;
        let cfg = unit(gamma, 0.8, 0.8, AntiSymMatrix::standard(2));
        let closed = drift_spectrum_closed_for(&cfg).unwrap();
        let numeric = drift_spectrum(&cfg).unwrap();
        assert!(multiset_distance(&closed.values(), &numeric.values()) < 1e-8);
        // offsets are purely imaginary below critical damping
        let w = (1.0 - (gamma / 2.0).powi(2)).sqrt();
        assert!(closed.values().iter().any(|z| (z - c(0.6, 0.8 + w)).norm() < 1e-14));
    }

    #[test]
    fn generator_levels() {
        let cfg = unit(2.0, 0.0, 0.0, AntiSymMatrix::zeros(1));
        let g1 = generator_spectrum(&cfg, 1).unwrap();
        assert!(multiset_distance(&g1.values(), &drift_spectrum(&cfg).unwrap().values()) == 0.0);

        let cfg = unit(3.0, 0.0, 0.0, AntiSymMatrix::zeros(1));
        let g2 = generator_spectrum(&cfg, 2).unwrap();
        let drift = drift_spectrum(&cfg).unwrap().values();
        let level2: Vec<Complex64> = g2.level(2).flat_map(|e| std::iter::repeat_n(e.value, e.multiplicity)).collect();
        let expected = [drift[0] + drift[0], drift[0] + drift[1], drift[1] + drift[1]];
        assert!(multiset_distance(&level2, &expected) < 1e-12);
        // at γ = 2 the pairwise sums of {1, 1} collapse to 2 (up to the Jordan-block error)
        let g = generator_spectrum(&unit(2.0, 0.0, 0.0, AntiSymMatrix::zeros(1)), 2).unwrap();
        assert!(g.level(2).all(|e| (e.value - c(2.0, 0.0)).norm() < 1e-7));
    }

    #[test]
    fn generator_guards() {
        let cfg = unit(2.0, 0.0, 0.0, AntiSymMatrix::zeros(1));
        assert!(matches!(generator_spectrum(&cfg, 7), Err(Error::TooLarge(_))));
        assert!(matches!(generator_spectrum(&cfg, 0), Err(Error::TooLarge(_))));
        let big = unit(2.0, 0.0, 0.0, AntiSymMatrix::zeros(20));
        assert!(matches!(generator_spectrum(&big, 6), Err(Error::TooLarge(_))));
    }

    #[test]
    fn real_generator_eigenvalues_ignore_equal_perturbation() {
        let gamma = 3.0;
        let real_level2 = |mu: f64| -> Vec<f64> {
            let g = generator_spectrum(&unit(gamma, mu, mu, AntiSymMatrix::standard(2)), 2).unwrap();
            let mut v: Vec<f64> = g
                .level(2)
                .filter(|e| e.value.im.abs() < 1e-9)
                .flat_map(|e| std::iter::repeat_n(e.value.re, e.multiplicity))
                .collect();
            v.sort_by(f64::total_cmp);
            v
        };
        let base = real_level2(0.0);
        for mu in [1.0, 5.0] {
            let v = real_level2(mu);
            assert!(v.len() >= 4);
            // every real eigenvalue at μ > 0 is already present at μ = 0
            assert!(v.iter().all(|x| base.iter().any(|b| (b - x).abs() < 1e-8)));
        }
    }

    #[test]
    fn spectral_bound_cases() {
        let s = drift_spectrum_closed(1.0, 2.0, &[1.0, -1.0]);
        assert_eq!(spectral_bound(&s).unwrap(), 1.0);
        let b0 = spectral_bound(&drift_spectrum(&unit(2.0, 0.0, 0.0, AntiSymMatrix::standard(2))).unwrap()).unwrap();
        let b3 = spectral_bound(&drift_spectrum(&unit(2.0, 3.0, 3.0, AntiSymMatrix::standard(2))).unwrap()).unwrap();
        assert!((b0 - 1.0).abs() < 1e-7 && (b3 - 1.0).abs() < 1e-7);

        let j2 = AntiSymMatrix::new(Matrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0])).unwrap();
        let bound = |nu: f64| {
            let cfg = PerturbationConfig::new(
                0.0,
                nu,
                2.0,
                SymMatrix::identity(2),
                SymMatrix::identity(2),
                SymMatrix::identity(2).scale(2.0),
                AntiSymMatrix::zeros(2),
                j2.clone(),
            )
            .unwrap();
            spectral_bound(&drift_spectrum(&cfg).unwrap()).unwrap()
        };
        let (a, b, c2) = (bound(0.0), bound(1.0), bound(2.0));
        assert!(a > b && b > c2, "{a} {b} {c2}");

        let empty = SpectrumSet::from_values(&[c(0.0, 0.0)], 1, SpectrumSource::Drift);
        assert!(spectral_bound(&empty).is_err());
    }

    #[test]
    fn critical_damping_cases() {
        assert_eq!(critical_damping(1.0, 1.0).unwrap(), (2.0, 1.0));
        assert_eq!(critical_damping(4.0, 1.0).unwrap(), (4.0, 2.0));
        assert!(critical_damping(0.0, 1.0).is_err());

        // the slowest mode decays fastest at γ_opt on a one-mode system
        let (s, m) = (2.5, 0.4);
        let (g_opt, rate) = critical_damping(s, m).unwrap();
        let bound_at = |g: f64| {
            let cfg = PerturbationConfig::new(
                0.0,
                0.0,
                g,
                SymMatrix::from_diagonal(&[s]),
                SymMatrix::from_diagonal(&[m]),
                SymMatrix::from_diagonal(&[g]),
                AntiSymMatrix::zeros(1),
                AntiSymMatrix::zeros(1),
            )
            .unwrap();
            spectral_bound(&drift_spectrum(&cfg).unwrap()).unwrap()
        };
        assert!((bound_at(g_opt) - rate).abs() < 1e-6);
        let grid: Vec<f64> = (1..400).map(|i| i as f64 * 0.02).collect();
        let best = grid.iter().copied().max_by(|a, b| bound_at(*a).total_cmp(&bound_at(*b))).unwrap();
        assert!((best - g_opt).abs() <= 0.02);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(50))]

        #[test]
        fn closed_form_matches_numeric(seed in any::<u64>(), di in 0usize..3) {
            let d = [2, 4, 6][di];
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = Matrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
            let j = AntiSymMatrix::from_computed(&(&m - m.transpose()));
            let gamma: f64 = rng.random_range(0.3..4.0);
            if (gamma - 2.0).abs() < 0.05 {
                return Ok(());
            }
            let mu = rng.random_range(-3.0..3.0);
            let cfg = unit(gamma, mu, mu, j);
            let closed = drift_spectrum_closed_for(&cfg).unwrap().values();
            let numeric = drift_spectrum(&cfg).unwrap().values();
            prop_assert!(multiset_distance(&closed, &numeric) <= 1e-8);
            // conjugate symmetry
            for z in &numeric {
                prop_assert!(numeric.iter().any(|w| (w - z.conj()).norm() < 1e-8));
            }
        }
    }
}
