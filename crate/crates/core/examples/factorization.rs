//! The factorization norm of a query workload through its column set.
use gammap::solver::{gamma_factorization, SolverConfig};
use gammap::PNorm;
use nalgebra::DMatrix;

fn main() -> gammap::Result<()> {
    // prefix sums over four items
    let w = DMatrix::from_fn(4, 4, |i, j| if j <= i { 1.0 } else { 0.0 });
    for p in [PNorm::TWO, PNorm::INFINITY] {
        let sol = gamma_factorization(&w, p, true, &SolverConfig::default())?;
        println!("prefix workload, p = {p}: {:.6}", sol.gamma_value);
    }
    let identity = DMatrix::identity(4, 4);
    let sol = gamma_factorization(&identity, PNorm::TWO, true, &SolverConfig::default())?;
    println!("identity workload, p = 2: {:.6}", sol.gamma_value);
    Ok(())
}
