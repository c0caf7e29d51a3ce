//! Optimal noise for the cube `[-1, 1]^3` under several error norms.
use gammap::solver::{solve_gamma, SolverConfig};
use gammap::{Domain, PNorm};

fn main() -> gammap::Result<()> {
    let cube = Domain::cube(3, -1.0, 1.0)?;
    for p in ["2", "4", "inf"] {
        let p = PNorm::parse(p)?;
        let sol = solve_gamma(&cube, p, &SolverConfig::default())?;
        println!(
            "p = {p:>3}: gamma = {:.6} (certified >= {:.6}), {} iterations, {:?}",
            sol.gamma_value,
            sol.gamma_lower(),
            sol.iterations,
            sol.status
        );
    }
    Ok(())
}
