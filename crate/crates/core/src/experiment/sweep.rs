//! Sweep runners.

use rayon::prelude::*;

use super::config::ExperimentConfig;
use super::table::{matrix_blocks_to_csv, simple_csv, RowStatus, SweepRow, SweepTable};
use crate::analysis::asym_variance;
use crate::design::{optimal_j_general, DesignResult};
use crate::dynamics::{overdamped_pair, simulate};
use crate::error::{Error, Result};
use crate::matkit::SymMatrix;
use crate::model::PerturbationConfig;
use crate::spectra::generator_spectrum;

fn with_pool<T: Send>(workers: Option<usize>, job: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.unwrap_or(0))
        .build()
        .map_err(|e| Error::InvalidInput(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(job))
}

/// `(mean, sample std)`; the std of a single value is 0.
pub fn mean_and_std(xs: &[f64]) -> Option<(f64, f64)> {
    if xs.is_empty() {
        return None;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() == 1 {
        return Some((mean, 0.0));
    }
    let ss: f64 = xs.iter().map(|x| (x - mean) * (x - mean)).sum();
    Some((mean, (ss / (n - 1.0)).sqrt()))
}

fn grid(cfg: &ExperimentConfig) -> Vec<(f64, f64)> {
    cfg.gammas
        .iter()
        .flat_map(|&g| cfg.mus.iter().map(move |&m| (g, m)))
        .collect()
}

/// `N` independent trajectories per `(γ, μ)` grid point; realization `i` uses seed
/// `seed + i` at every grid point. Failed trajectories mark their row as failed.
pub fn run_mc_sweep(cfg: &ExperimentConfig, workers: Option<usize>) -> Result<SweepTable> {
    cfg.validate()?;
    let target = cfg.build_target()?;
    let precision = cfg.precision()?;
    let j1 = cfg.perturbation_j1()?;
    let f = cfg.quadratic_observable();
    let spec = cfg.simulation_spec();
    let points: Vec<(f64, f64, Result<PerturbationConfig>)> = grid(cfg)
        .into_iter()
        .map(|(g, m)| (g, m, cfg.config_at(&precision, &j1, g, m)))
        .collect();

    let tasks: Vec<(usize, u64)> = (0..points.len())
        .flat_map(|p| (0..cfg.replications as u64).map(move |i| (p, i)))
        .collect();
    let results: Vec<Result<f64>> = with_pool(workers, || {
        tasks
            .par_iter()
            .map(|&(p, i)| match &points[p].2 {
                Ok(pc) => simulate(pc, target.as_ref(), &spec, cfg.seed.wrapping_add(i), &|q| f.eval(q)),
                Err(e) => Err(e.clone()),
            })
            .collect()
    })?;

    let rows = points
        .iter()
        .enumerate()
        .map(|(p, (gamma, mu, pc))| {
            let chunk = &results[p * cfg.replications..(p + 1) * cfg.replications];
            let ok: Vec<f64> = chunk.iter().filter_map(|r| r.as_ref().ok().copied()).collect();
            let stats = mean_and_std(&ok);
            let analytic = match pc {
                Ok(pc) if cfg.is_gaussian() => asym_variance(pc, &f).ok(),
                _ => None,
            };
            SweepRow {
                gamma: *gamma,
                mu: *mu,
                nu: cfg.nu_rule.nu_for(*mu),
                replications: ok.len(),
                estimator_mean: stats.map(|s| s.0),
                estimator_std: stats.map(|s| s.1),
                analytic_sigma2: analytic,
                status: if ok.len() == chunk.len() { RowStatus::Ok } else { RowStatus::Failed },
            }
        })
        .collect();
    Ok(SweepTable { rows })
}

/// Exact `σ²` at every grid point of a Gaussian configuration.
pub fn run_analytic_sweep(cfg: &ExperimentConfig) -> Result<SweepTable> {
    cfg.validate()?;
    if !cfg.is_gaussian() {
        return Err(Error::Config("analytic sweeps need a Gaussian target".into()));
    }
    let precision = cfg.precision()?;
    let j1 = cfg.perturbation_j1()?;
    let f = cfg.quadratic_observable();
    let rows = grid(cfg)
        .into_iter()
        .map(|(gamma, mu)| {
            let pc = cfg.config_at(&precision, &j1, gamma, mu)?;
            Ok(SweepRow {
                gamma,
                mu,
                nu: pc.nu,
                replications: 0,
                estimator_mean: None,
                estimator_std: None,
                analytic_sigma2: Some(asym_variance(&pc, &f)?),
                status: RowStatus::Ok,
            })
        })
        .collect::<Result<_>>()?;
    Ok(SweepTable { rows })
}

#[derive(Debug, Clone)]
pub struct DesignOutput {
    pub precision: SymMatrix,
    pub result: DesignResult,
}

impl DesignOutput {
    /// Blocks `J1`, `J2` and `S`.
    pub fn to_csv(&self) -> String {
        matrix_blocks_to_csv(&[
            ("J1", self.result.j1.as_matrix()),
            ("J2", self.result.j2.as_matrix()),
            ("S", self.precision.as_matrix()),
        ])
    }
}

pub fn run_design(cfg: &ExperimentConfig) -> Result<DesignOutput> {
    cfg.validate()?;
    let precision = cfg.precision()?;
    let result = optimal_j_general(&cfg.quadratic_observable().k, &precision)?;
    Ok(DesignOutput { precision, result })
}

#[derive(Debug, Clone, PartialEq)]
pub struct OverdampedRow {
    pub seed: u64,
    pub eps: f64,
    pub sup_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OverdampedTable {
    pub eps: Vec<f64>,
    /// Seed-major, in the order of `eps`.
    pub rows: Vec<OverdampedRow>,
}

impl OverdampedTable {
    pub fn to_csv(&self) -> String {
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| vec![r.seed.to_string(), r.eps.to_string(), r.sup_error.to_string()])
            .collect();
        simple_csv(&["seed", "eps", "sup_error"], &rows)
    }

    /// Fraction of seeds whose errors do not increase along `eps`.
    pub fn monotone_fraction(&self) -> f64 {
        let n = self.eps.len();
        let chunks: Vec<&[OverdampedRow]> = self.rows.chunks(n).collect();
        let good = chunks
            .iter()
            .filter(|c| c.windows(2).all(|w| w[1].sup_error <= w[0].sup_error))
            .count();
        good as f64 / chunks.len().max(1) as f64
    }
}

/// Coupled overdamped-limit errors over the configured ε list at the first `(γ, μ)`.
/// All ε share the Wiener path of a seed; seeds are `seed + i`.
pub fn run_overdamped_check(cfg: &ExperimentConfig, workers: Option<usize>) -> Result<OverdampedTable> {
    cfg.validate()?;
    let target = cfg.build_target()?;
    let precision = cfg.precision()?;
    let j1 = cfg.perturbation_j1()?;
    let pc = cfg.config_at(&precision, &j1, cfg.gammas[0], cfg.mus[0])?;
    let od = &cfg.overdamped;
    let tasks: Vec<(u64, f64)> = (0..od.seeds as u64)
        .flat_map(|i| od.eps.iter().map(move |&e| (cfg.seed.wrapping_add(i), e)))
        .collect();
    let rows = with_pool(workers, || {
        tasks
            .par_iter()
            .map(|&(seed, eps)| {
                let pair = overdamped_pair(&pc, target.as_ref(), eps, od.t_end, od.dt, None, seed)?;
                Ok(OverdampedRow {
                    seed,
                    eps,
                    sup_error: pair.sup_error,
                })
            })
            .collect::<Result<Vec<_>>>()
    })??;
    Ok(OverdampedTable { eps: od.eps.clone(), rows })
}

/// Truncated generator spectrum at every grid point, as CSV with columns
/// `gamma,mu,nu,m,re,im,multiplicity`.
pub fn run_spectrum(cfg: &ExperimentConfig) -> Result<String> {
    cfg.validate()?;
    let precision = cfg.precision()?;
    let j1 = cfg.perturbation_j1()?;
    let mut rows = Vec::new();
    for (gamma, mu) in grid(cfg) {
        let pc = cfg.config_at(&precision, &j1, gamma, mu)?;
        for e in generator_spectrum(&pc, cfg.m_max)?.entries {
            rows.push(vec![
                gamma.to_string(),
                mu.to_string(),
                pc.nu.to_string(),
                e.level.to_string(),
                e.value.re.to_string(),
                e.value.im.to_string(),
                e.multiplicity.to_string(),
            ]);
        }
    }
    Ok(simple_csv(&["gamma", "mu", "nu", "m", "re", "im", "multiplicity"], &rows))
}

/// Description of a configuration's grids, written next to bridge results.
pub fn run_metadata(cfg: &ExperimentConfig, paper_scale: bool) -> String {
    let list = |v: &[f64]| v.iter().map(f64::to_string).collect::<Vec<_>>().join(",");
    format!(
        "scale = {}\ndim = {}\ndt = {}\nt_end = {}\nburn_in = {}\nreplications = {}\ngamma = {}\nmu = {}\nnu = {}\nseed = {}\ngrid_source = preset choice\n",
        if paper_scale { "paper" } else { "desk" },
        cfg.dim(),
        cfg.dt,
        cfg.t_end,
        cfg.burn_in,
        cfg.replications,
        list(&cfg.gammas),
        list(&cfg.mus),
        cfg.nu_rule,
        cfg.seed
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::table::matrix_blocks_from_csv;

    fn example_config(extra: &str) -> ExperimentConfig {
        ExperimentConfig::parse(&format!(
            "[sweep]\ngamma = 2\nmu = 0\n[observable]\nk = 2,0;0,1\n[perturbation]\nj = standard\n{extra}"
        ))
        .unwrap()
    }

    #[test]
    fn analytic_sweep_at_zero_perturbation() {
        // (1/γ + γ)·Tr K² = 2.5·5 at γ = 2
        let t = run_analytic_sweep(&example_config("")).unwrap();
        assert_eq!(t.rows.len(), 1);
        assert!((t.rows[0].analytic_sigma2.unwrap() - 12.5).abs() < 1e-10);
    }

    #[test]
    fn opposed_rule_can_increase_variance() {
        let cfg = ExperimentConfig::parse(
            "[sweep]\ngamma = 2\nmu = 0, 0.01\nnu = opposed\n[observable]\nk = 2,0;0,1\n[perturbation]\nj = standard\n",
        )
        .unwrap();
        let t = run_analytic_sweep(&cfg).unwrap();
        assert!(t.rows[1].analytic_sigma2.unwrap() > t.rows[0].analytic_sigma2.unwrap());
        let cfg = ExperimentConfig::parse(
            "[sweep]\ngamma = 2\nmu = 0, 0.01\nnu = equal\n[observable]\nk = 2,0;0,1\n[perturbation]\nj = standard\n",
        )
        .unwrap();
        let t = run_analytic_sweep(&cfg).unwrap();
        assert!(t.rows[1].analytic_sigma2.unwrap() < t.rows[0].analytic_sigma2.unwrap());
    }

    #[test]
    fn constant_observable_has_zero_std() {
        let cfg = ExperimentConfig::parse(
            "[dynamics]\ndt = 0.01\nt_end = 1\nburn_in = 0\n[observable]\nc = 3\n[sweep]\nreplications = 1\n",
        )
        .unwrap();
        let t = run_mc_sweep(&cfg, Some(1)).unwrap();
        let r = &t.rows[0];
        assert_eq!((r.estimator_mean, r.estimator_std, r.status), (Some(3.0), Some(0.0), RowStatus::Ok));
    }

    #[test]
    fn mc_sweep_is_independent_of_worker_count() {
        let cfg = ExperimentConfig::parse(
            "[dynamics]\ndt = 0.01\nt_end = 2\nburn_in = 0.5\n[sweep]\ngamma = 0.5, 1\nmu = 0, 1\nreplications = 5\nseed = 11\n[perturbation]\nj = standard\n",
        )
        .unwrap();
        let a = run_mc_sweep(&cfg, Some(1)).unwrap().to_csv();
        let b = run_mc_sweep(&cfg, Some(3)).unwrap().to_csv();
        assert_eq!(a, b);
        assert_eq!(SweepTable::from_csv(&a).unwrap().rows.len(), 4);
    }

    #[test]
    fn blow_up_marks_row_failed() {
        let cfg = ExperimentConfig::parse(
            "[dynamics]\nintegrator = baoab\ndt = 3\nt_end = 3000\nburn_in = 0\n[sweep]\nreplications = 2\n",
        )
        .unwrap();
        let t = run_mc_sweep(&cfg, Some(1)).unwrap();
        assert!(t.any_failed());
        assert_eq!(t.rows[0].replications, 0);
        assert_eq!(t.rows[0].estimator_std, None);
    }

    #[test]
    fn design_round_trip_keeps_structure() {
        let cfg = ExperimentConfig::parse("[target]\nkind = bridge\ndim = 6\n").unwrap();
        let out = run_design(&cfg).unwrap();
        let back = matrix_blocks_from_csv(&out.to_csv()).unwrap();
        let (s, j1, j2) = (&back["S"], &back["J1"], &back["J2"]);
        let defect = (s * j1 * s - j2).amax();
        assert!(defect <= 1e-10 * j2.amax().max(1.0), "{defect}");
    }

    #[test]
    fn design_of_multiple_identity_is_zero() {
        let cfg = ExperimentConfig::parse("[observable]\nk = 3,0;0,3\n").unwrap();
        let out = run_design(&cfg).unwrap();
        assert_eq!(out.result.j1.as_matrix().amax(), 0.0);
    }

    #[test]
    fn spectrum_csv_lists_levels() {
        let cfg = example_config("[spectrum]\nm_max = 2\n");
        let csv = run_spectrum(&cfg).unwrap();
        assert!(csv.starts_with("# langevin-perturb v1\ngamma,mu,nu,m,re,im,multiplicity\n"));
        assert!(csv.lines().any(|l| l.split(',').nth(3) == Some("2")));
    }

    #[test]
    fn overdamped_single_eps() {
        let cfg = ExperimentConfig::parse("[overdamped]\neps = 0.1\nseeds = 2\nt_end = 0.5\ndt = 0.05\n").unwrap();
        let t = run_overdamped_check(&cfg, Some(1)).unwrap();
        assert_eq!(t.rows.len(), 2);
        assert_eq!(t.monotone_fraction(), 1.0);
    }

    #[test]
    fn sample_std() {
        assert_eq!(mean_and_std(&[]), None);
        assert_eq!(mean_and_std(&[2.0]), Some((2.0, 0.0)));
        let (m, s) = mean_and_std(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!((m, s), (2.0, 1.0));
    }
}
