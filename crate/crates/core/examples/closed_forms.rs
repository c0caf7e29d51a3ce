//! Closed-form values for boxes, products, ellipsoids and tensor powers.
use gammap::closed_forms::{gamma_box, gamma_ellipsoid, gamma_product, gamma_tensor_bounds, TensorBase};
use gammap::PNorm;
use nalgebra::DMatrix;

fn main() -> gammap::Result<()> {
    let p = PNorm::new(4.0)?;
    println!("box [0,1]x[0,2]x[0,4]: {:.6}", gamma_box(&[0.0; 3], &[1.0, 2.0, 4.0], p)?);
    println!("product of 3 and 4 at p = 2: {}", gamma_product(3.0, 4.0, PNorm::TWO));
    println!("product of 3 and 4 at p = inf: {}", gamma_product(3.0, 4.0, PNorm::INFINITY));
    let shape = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&[3.0, 1.0]));
    println!("ellipsoid diag(3, 1): {:.6}", gamma_ellipsoid(&shape, p)?);
    for base in [TensorBase::CubeVertices, TensorBase::Ball] {
        let (lo, hi) = gamma_tensor_bounds(4, 2, p, base)?;
        println!("{base:?} d = 4, l = 2: [{lo:.4}, {hi:.4}]");
    }
    Ok(())
}
