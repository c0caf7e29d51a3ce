//! Releasing a private mean with the optimal correlated Gaussian noise.
use gammap::mechanism::{account, run_gaussian, Dataset, MechanismSpec};
use gammap::solver::{solve_gamma, SolverConfig};
use gammap::{Domain, PNorm};

fn main() -> gammap::Result<()> {
    let k = Domain::cube(3, 0.0, 1.0)?;
    let sol = solve_gamma(&k, PNorm::TWO, &SolverConfig::default())?;
    let rows: Vec<Vec<f64>> = (0..200).map(|i| vec![(i % 2) as f64, (i % 5) as f64 / 4.0, 0.3]).collect();
    let data = Dataset::from_rows(&rows)?;
    data.certify(&k)?;
    let spec = MechanismSpec::new(k, &sol, data.len(), 1.0, 42)?;
    println!("true mean:   {:?}", data.mean().as_slice());
    for index in 0..3 {
        println!("release {index}:   {:?}", run_gaussian(&spec, &data, index)?.as_slice());
    }
    println!("guarantee:   {:?}", spec.privacy());
    println!("as (eps, delta): {:?}", account(spec.privacy(), 1e-6)?);
    Ok(())
}
