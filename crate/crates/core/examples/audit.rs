//! Empirical error of the mechanism against its analytic floor and ceiling,
//! plus the width-reduction check of the solved covariance.
use gammap::audit::{estimate_error, width_reduction_check};
use gammap::mechanism::{Dataset, MechanismSpec};
use gammap::solver::{solve_gamma, SolverConfig};
use gammap::{Domain, PNorm};

fn main() -> gammap::Result<()> {
    let k = Domain::finite(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![-1.0, -1.0], vec![0.5, 0.5]])?;
    let sol = solve_gamma(&k, PNorm::TWO, &SolverConfig::default())?;
    let data = Dataset::from_rows(&vec![vec![0.5, 0.5]; 50])?;
    let spec = MechanismSpec::new(k.clone(), &sol, data.len(), 1.0, 3)?;
    let report = estimate_error(&spec, &data, PNorm::TWO, 20_000, 3)?;
    println!(
        "rmse {:.5} +- {:.5}, floor {:.5}, ceiling {:.5}, floor holds {}, ceiling holds {}",
        report.empirical_rmse_p,
        report.rmse_std_error,
        report.analytic_floor,
        report.theorem_upper,
        report.floor_holds,
        report.ceiling_holds
    );
    let widths = width_reduction_check(&k, &sol.covariance_shape, 1.0)?;
    println!("width reduction holds {} over {} directions (worst slack {:.3e})", widths.holds, widths.directions, widths.worst_slack);
    Ok(())
}
