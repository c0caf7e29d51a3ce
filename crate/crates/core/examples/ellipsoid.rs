//! For an ellipsoid `A0 B + u` the optimal noise shape is `A0` itself.
use gammap::solver::{solve_gamma, SolverConfig};
use gammap::{Domain, PNorm};
use nalgebra::{DMatrix, DVector};

fn main() -> gammap::Result<()> {
    let a0 = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, 0.0, 0.0, 1.0, -0.4, 0.1, 0.0, 0.5]);
    let k = Domain::ellipsoid(a0.clone(), DVector::from_column_slice(&[1.0, -0.5, 0.25]))?;
    let q = &a0 * a0.transpose();
    for p in [PNorm::TWO, PNorm::INFINITY] {
        let sol = solve_gamma(&k, p, &SolverConfig::default())?;
        let diag: Vec<f64> = (0..3).map(|i| q[(i, i)]).collect();
        let expected = p.half().norm_of(&diag).sqrt();
        println!("p = {p}: solver {:.6}, shape {:.6}, shift {:?}", sol.gamma_value, expected, sol.shift.as_slice());
    }
    Ok(())
}
