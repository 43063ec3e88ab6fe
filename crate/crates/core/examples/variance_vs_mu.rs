use langevin_core::analysis::asym_variance;
use langevin_core::design::optimal_j_general;
use langevin_core::{PerturbationConfig, QuadraticObservable, SymMatrix};

fn main() -> Result<(), langevin_core::Error> {
    let s = SymMatrix::identity(2);
    let k = SymMatrix::from_diagonal(&[2.0, 1.0]);
    let j1 = optimal_j_general(&k, &s)?.j1;
    let f = QuadraticObservable::quadratic(k);
    for mu in [0.0, 1.0, 100.0] {
        let cfg = PerturbationConfig::preconditioned(s.clone(), 1.0, mu, mu, j1.clone())?;
        println!("mu = {mu}: sigma2 = {}", asym_variance(&cfg, &f)?);
    }
    Ok(())
}
