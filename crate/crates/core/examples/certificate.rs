//! Bracketing the optimum between a dual certificate and the solver value.
use gammap::duality::search_certificate;
use gammap::solver::{solve_gamma, SolverConfig};
use gammap::{Domain, PNorm};

fn main() -> gammap::Result<()> {
    let k = Domain::finite(&[
        vec![1.0, 0.0, 0.2],
        vec![-0.5, 0.8, 0.0],
        vec![0.1, -0.9, 0.4],
        vec![0.3, 0.3, -1.0],
        vec![-0.7, -0.2, 0.6],
    ])?;
    for p in [PNorm::TWO, PNorm::new(3.0)?, PNorm::INFINITY] {
        let sol = solve_gamma(&k, p, &SolverConfig::default().with_beta(1e-8))?;
        let cert = search_certificate(&k, p, 10_000, Some(&sol))?;
        println!(
            "p = {p}: {:.6} <= gamma <= {:.6}  (weights {:?})",
            cert.lower_bound,
            sol.gamma_value,
            cert.weights.iter().map(|w| (w * 1e3).round() / 1e3).collect::<Vec<_>>()
        );
        // anyone holding the certificate can recompute its value
        assert!((cert.recheck(&k)? - cert.lower_bound).abs() < 1e-9);
    }
    Ok(())
}
