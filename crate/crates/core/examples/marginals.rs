//! The one-way marginal workload: the solver against its closed form.
use gammap::closed_forms::{build_marginal_domain, gamma_marginals};
use gammap::solver::{solve_gamma, SolverConfig};
use gammap::PNorm;

fn main() -> gammap::Result<()> {
    for d in 2..=4 {
        let k = build_marginal_domain(d, 1)?;
        for p in [PNorm::TWO, PNorm::INFINITY] {
            let sol = solve_gamma(&k, p, &SolverConfig::default())?;
            let exact = gamma_marginals(d, 1, p)?;
            println!("d = {d}, p = {p:>3}: solver {:.6}, closed form {:.6}", sol.gamma_value, exact.lower());
        }
    }
    let two_way = gamma_marginals(6, 2, PNorm::INFINITY)?;
    println!("two-way marginals on 6 attributes, p = inf: [{:.4}, {:.4}]", two_way.lower(), two_way.upper());
    Ok(())
}
