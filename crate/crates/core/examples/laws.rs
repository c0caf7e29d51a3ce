//! Products add in the power mean and tensor products multiply.
use gammap::closed_forms::gamma_product;
use gammap::solver::{solve_gamma, SolverConfig};
use gammap::{Domain, PNorm};

fn main() -> gammap::Result<()> {
    let k = Domain::finite(&[vec![1.0, 0.0], vec![-1.0, 0.0], vec![0.3, 0.8], vec![-0.3, -0.8]])?;
    let l = Domain::finite(&[vec![0.5, 0.5], vec![-0.5, -0.5], vec![1.0, -0.2], vec![-1.0, 0.2]])?;
    let cfg = SolverConfig::default();
    for p in [PNorm::TWO, PNorm::new(3.0)?, PNorm::INFINITY] {
        let gk = solve_gamma(&k, p, &cfg)?.gamma_value;
        let gl = solve_gamma(&l, p, &cfg)?.gamma_value;
        let prod = solve_gamma(&Domain::product(k.clone(), l.clone())?, p, &cfg)?.gamma_value;
        let tensor = solve_gamma(&Domain::tensor(&k, &l)?, p, &cfg)?.gamma_value;
        println!(
            "p = {p:>3}: product {prod:.5} vs {:.5}, tensor {tensor:.5} vs {:.5}",
            gamma_product(gk, gl, p),
            gk * gl
        );
    }
    Ok(())
}
