//! Exact values and bounds for boxes, products, ellipsoids, tensor powers
//! and marginal-query domains.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::domain::Domain;
use crate::error::{Error, Result};
use crate::linalg::{trp, Exponent, PNorm, SymMatrix};

/// Largest ambient dimension `(2d)^l` of a materialized marginal domain.
pub const MARGINAL_DIM_LIMIT: usize = 1_000_000;
/// Largest `d` for which `{0,1}^d` is enumerated.
pub const MARGINAL_ATTRIBUTE_LIMIT: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClosedFormKind {
    Box,
    Product,
    Ellipsoid,
    TensorPowerCube,
    TensorPowerBall,
    #[serde(rename = "marginal_1way")]
    Marginal1Way,
    #[serde(rename = "marginal_lway")]
    MarginalLWay,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ClosedValue {
    Exact(f64),
    Bounds { lower: f64, upper: f64 },
}

impl ClosedValue {
    pub fn lower(&self) -> f64 {
        match *self {
            ClosedValue::Exact(v) => v,
            ClosedValue::Bounds { lower, .. } => lower,
        }
    }

    pub fn upper(&self) -> f64 {
        match *self {
            ClosedValue::Exact(v) => v,
            ClosedValue::Bounds { upper, .. } => upper,
        }
    }
}

/// A closed-form value with the parameters it was computed from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosedForm {
    pub kind: ClosedFormKind,
    pub p: PNorm,
    pub params: serde_json::Value,
    pub value: ClosedValue,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TensorBase {
    /// `{-1, 1}^d`.
    CubeVertices,
    /// The unit Euclidean ball.
    Ball,
}

/// `1/p`, zero at infinity.
fn inv_p(p: PNorm) -> f64 {
    p.exponent().recip()
}

/// `Gamma_p` of an axis-aligned box: half the `2p/(p+2)`-norm of its side lengths.
pub fn gamma_box(lo: &[f64], hi: &[f64], p: PNorm) -> Result<f64> {
    if lo.len() != hi.len() {
        return Err(Error::DimensionMismatch { expected: lo.len(), got: hi.len() });
    }
    let mut sides = Vec::with_capacity(lo.len());
    for (i, (&a, &b)) in lo.iter().zip(hi).enumerate() {
        if !(a <= b) {
            return Err(Error::BadBox { index: i, lo: a, hi: b });
        }
        sides.push(b - a);
    }
    let r = match p.exponent() {
        Exponent::Infinity => 2.0,
        Exponent::Finite(p) => 2.0 * p / (p + 2.0),
    };
    Ok(Exponent::Finite(r).norm_of(&sides) / 2.0)
}

/// `Gamma_p(K_1 x K_2)` from the factor values.
pub fn gamma_product(g1: f64, g2: f64, p: PNorm) -> f64 {
    match p.exponent() {
        Exponent::Infinity => g1.hypot(g2),
        Exponent::Finite(p) if p == 2.0 => g1 + g2,
        Exponent::Finite(p) => Exponent::Finite(2.0 * p / (p + 2.0)).norm_of(&[g1, g2]),
    }
}

/// `Gamma_p` of the ellipsoid `shape B_2 + center`: `sqrt(tr_{p/2}(shape shape^T))`.
pub fn gamma_ellipsoid(shape: &DMatrix<f64>, p: PNorm) -> Result<f64> {
    Ok(trp(p.half(), &SymMatrix::gram(shape))?.sqrt())
}

/// Bounds on `Gamma_p` of the `l`-fold tensor power of the cube vertices or the ball.
pub fn gamma_tensor_bounds(d: usize, ell: usize, p: PNorm, base: TensorBase) -> Result<(f64, f64)> {
    if ell == 0 || ell > d {
        return Err(Error::BadParams(format!("tensor power requires 1 <= l <= d, got l = {ell}, d = {d}")));
    }
    let (d, l) = (d as f64, ell as f64);
    let exponent = match base {
        TensorBase::CubeVertices => l * inv_p(p) + l / 2.0,
        TensorBase::Ball => l * inv_p(p),
    };
    Ok(((d / l).powf(exponent), d.powf(exponent)))
}

/// `Gamma_p` of the `l`-way marginal domain on `d` binary attributes:
/// exact for `l = 1`, bounds otherwise.
pub fn gamma_marginals(d: usize, ell: usize, p: PNorm) -> Result<ClosedValue> {
    if ell == 0 || d == 0 {
        return Err(Error::BadParams(format!("marginals require d, l >= 1, got d = {d}, l = {ell}")));
    }
    let (df, l) = (d as f64, ell as f64);
    let ip = inv_p(p);
    if ell == 1 {
        return Ok(ClosedValue::Exact(2f64.powf(ip - 1.0) * df.powf(ip + 0.5)));
    }
    let upper = df.powf(l * ip + l / 2.0);
    let lower = df.powf(l / 2.0 + l * ip) / (2.0 * 2f64.sqrt() * l).powf(l);
    Ok(ClosedValue::Bounds { lower, upper })
}

/// The answers `(|x_i - beta|)_{i, beta}` of the one-way queries on `x`,
/// ordered by attribute and then `beta in {0, 1}`.
fn one_way_answers(x: usize, d: usize) -> Vec<f64> {
    let mut y = Vec::with_capacity(2 * d);
    for i in 0..d {
        let bit = (x >> i & 1) as f64;
        y.push(bit);
        y.push(1.0 - bit);
    }
    y
}

fn kron(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().flat_map(|&x| b.iter().map(move |&y| x * y)).collect()
}

/// The point set `{y(x)^{(x) l} : x in {0,1}^d}` in dimension `(2d)^l`.
pub fn build_marginal_domain(d: usize, ell: usize) -> Result<Domain> {
    if d == 0 || ell == 0 {
        return Err(Error::BadParams(format!("marginals require d, l >= 1, got d = {d}, l = {ell}")));
    }
    if d > MARGINAL_ATTRIBUTE_LIMIT {
        return Err(Error::TooLarge(format!("2^{d} data universes exceed the enumeration limit")));
    }
    let dim = u32::try_from(ell)
        .ok()
        .and_then(|l| (2 * d).checked_pow(l))
        .filter(|&n| n <= MARGINAL_DIM_LIMIT)
        .ok_or_else(|| Error::TooLarge(format!("dimension (2*{d})^{ell} exceeds {MARGINAL_DIM_LIMIT}")))?;
    let points = (0..1usize << d)
        .map(|x| {
            let y = one_way_answers(x, d);
            let mut z = y.clone();
            for _ in 1..ell {
                z = kron(&z, &y);
            }
            debug_assert_eq!(z.len(), dim);
            DVector::from_vec(z)
        })
        .collect();
    Domain::finite_from_vectors(points)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_examples() {
        for p in [PNorm::TWO, PNorm::new(3.0).unwrap(), PNorm::INFINITY] {
            for d in 1..5 {
                let (lo, hi) = (vec![-0.5; d], vec![1.5; d]);
                let expected = (d as f64).powf(0.5 + inv_p(p)) * 2.0 / 2.0;
                assert!((gamma_box(&lo, &hi, p).unwrap() - expected).abs() < 1e-12);
            }
            assert_eq!(gamma_box(&[0.0; 3], &[0.0; 3], p).unwrap(), 0.0);
            assert!((gamma_box(&[0.0], &[1.0], p).unwrap() - 0.5).abs() < 1e-15);
        }
        assert!(matches!(gamma_box(&[1.0], &[0.0], PNorm::TWO), Err(Error::BadBox { index: 0, .. })));
    }

    #[test]
    fn product_examples() {
        assert_eq!(gamma_product(3.0, 4.0, PNorm::TWO), 7.0);
        assert!((gamma_product(3.0, 4.0, PNorm::INFINITY) - 5.0).abs() < 1e-15);
        for p in [PNorm::TWO, PNorm::new(5.0).unwrap(), PNorm::INFINITY] {
            assert!((gamma_product(2.5, 0.0, p) - 2.5).abs() < 1e-15);
        }
    }

    #[test]
    fn tensor_examples() {
        for p in [PNorm::TWO, PNorm::new(6.0).unwrap(), PNorm::INFINITY] {
            let (lo, hi) = gamma_tensor_bounds(5, 1, p, TensorBase::CubeVertices).unwrap();
            assert_eq!(lo, hi);
            assert!((hi - 5f64.powf(inv_p(p) + 0.5)).abs() < 1e-12);
            let (lo, hi) = gamma_tensor_bounds(5, 1, p, TensorBase::Ball).unwrap();
            assert!((lo - 5f64.powf(inv_p(p))).abs() < 1e-12 && lo == hi);
            assert_eq!(gamma_tensor_bounds(4, 4, p, TensorBase::CubeVertices).unwrap().0, 1.0);
        }
        assert!(gamma_tensor_bounds(2, 3, PNorm::TWO, TensorBase::Ball).is_err());
    }

    #[test]
    fn marginal_examples() {
        let v = gamma_marginals(4, 1, PNorm::TWO).unwrap();
        assert!((v.lower() - 2.0 * 2f64.sqrt()).abs() < 1e-12);
        for d in 1..10 {
            let v = gamma_marginals(d, 1, PNorm::INFINITY).unwrap();
            assert!((v.upper() - 0.5 * (d as f64).sqrt()).abs() < 1e-12);
        }
        for d in 2..=10 {
            let v = gamma_marginals(d, 2, PNorm::new(3.0).unwrap()).unwrap();
            assert!(v.lower() <= v.upper());
        }
    }

    #[test]
    fn marginal_domains() {
        let k = build_marginal_domain(1, 1).unwrap();
        let mut pts: Vec<Vec<f64>> = k.points().unwrap().iter().map(|x| x.iter().copied().collect()).collect();
        pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(pts, vec![vec![0.0, 1.0], vec![1.0, 0.0]]);

        let k = build_marginal_domain(2, 1).unwrap();
        assert_eq!((k.dim(), k.points().unwrap().len()), (4, 4));
        for x in k.points().unwrap() {
            assert_eq!(x[0] + x[1], 1.0);
            assert_eq!(x[2] + x[3], 1.0);
        }

        let one = build_marginal_domain(2, 1).unwrap();
        let two = build_marginal_domain(2, 2).unwrap();
        assert_eq!((two.dim(), two.points().unwrap().len()), (16, 4));
        for (y, z) in one.points().unwrap().iter().zip(two.points().unwrap()) {
            for a in 0..4 {
                for b in 0..4 {
                    assert_eq!(z[4 * a + b], y[a] * y[b]);
                }
            }
        }
        assert!(matches!(build_marginal_domain(21, 1), Err(Error::TooLarge(_))));
        assert!(matches!(build_marginal_domain(10, 5), Err(Error::TooLarge(_))));
    }
}
