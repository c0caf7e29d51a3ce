//! Exact quadratic oracles.
//!
//! Every variant is reduced to maximizing `(G x + c)^T Q (G x + c)` over
//! `x` in a base set, where `G` accumulates the linear maps of nested
//! affine images. Point sets and boxes are enumerated (a convex function
//! peaks at a vertex), ellipsoids go through the ball trust-region solver,
//! and products are enumerated pairwise or split when `Q` does not couple
//! the factors.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::{Domain, DomainKind, VERTEX_ENUM_LIMIT};
use crate::error::{Error, Result};
use crate::linalg::SymMatrix;
use crate::trust_region::maximize_on_ball;

/// Largest pairwise enumeration attempted for product domains.
pub const PRODUCT_ENUM_LIMIT: usize = 1 << 20;
const PARALLEL_THRESHOLD: usize = 4096;

/// Result of a quadratic oracle call.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleAnswer {
    /// A point of `K` attaining the (approximate) maximum.
    pub witness: DVector<f64>,
    /// `(witness + v)^T Minv (witness + v)`.
    pub value: f64,
    /// Approximation factor; every oracle here is exact.
    pub alpha: f64,
}

pub fn quadratic_oracle(k: &Domain, minv: &SymMatrix, v: &DVector<f64>) -> Result<OracleAnswer> {
    if minv.dim() != k.dim() {
        return Err(Error::DimensionMismatch { expected: k.dim(), got: minv.dim() });
    }
    if v.len() != k.dim() {
        return Err(Error::DimensionMismatch { expected: k.dim(), got: v.len() });
    }
    let q = minv.to_dmatrix();
    let (witness, _) = maximize(k, None, v, &q)?;
    // report the value recomputed from the witness
    let w = &witness + v;
    let value = w.dot(&(&q * &w)).max(0.0);
    Ok(OracleAnswer { witness, value, alpha: 1.0 })
}

fn quad(q: &DMatrix<f64>, w: &DVector<f64>) -> f64 {
    w.dot(&(q * w))
}

fn apply(g: Option<&DMatrix<f64>>, x: &DVector<f64>) -> DVector<f64> {
    match g {
        Some(g) => g * x,
        None => x.clone(),
    }
}

/// Argmax over an indexed list, lowest index winning ties.
fn argmax_points(points: &[DVector<f64>], g: Option<&DMatrix<f64>>, c: &DVector<f64>, q: &DMatrix<f64>) -> (usize, f64) {
    let eval = |i: usize| {
        let w = apply(g, &points[i]) + c;
        (i, quad(q, &w))
    };
    let better = |a: (usize, f64), b: (usize, f64)| {
        if b.1 > a.1 || (b.1 == a.1 && b.0 < a.0) {
            b
        } else {
            a
        }
    };
    if points.len() >= PARALLEL_THRESHOLD {
        (0..points.len())
            .into_par_iter()
            .map(eval)
            .reduce(|| (usize::MAX, f64::NEG_INFINITY), better)
    } else {
        (0..points.len()).map(eval).fold((usize::MAX, f64::NEG_INFINITY), better)
    }
}

/// Returns `(argmax x in K, value)` for `(G x + c)^T Q (G x + c)`.
fn maximize(
    k: &Domain,
    g: Option<&DMatrix<f64>>,
    c: &DVector<f64>,
    q: &DMatrix<f64>,
) -> Result<(DVector<f64>, f64)> {
    match k.kind() {
        DomainKind::FiniteSet { points } | DomainKind::VertexPolytope { vertices: points } => {
            let (i, val) = argmax_points(points, g, c, q);
            Ok((points[i].clone(), val))
        }
        DomainKind::Box { lo, hi } => maximize_box(lo, hi, g, c, q),
        DomainKind::Ellipsoid { shape, center } => {
            let a_eff = match g {
                Some(g) => g * shape,
                None => shape.clone(),
            };
            let c_eff = apply(g, center) + c;
            let qa = q * &a_eff;
            let h = SymMatrix::from_dmatrix(&(a_eff.transpose() * &qa));
            let b = qa.transpose() * &c_eff;
            let sol = maximize_on_ball(&h, &b);
            let x = shape * &sol.y + center;
            let val = sol.value + quad(q, &c_eff);
            Ok((x, val))
        }
        DomainKind::AffineImage { map, inner } => {
            let composed = match g {
                Some(g) => g * map,
                None => map.clone(),
            };
            let (y, val) = maximize(inner, Some(&composed), c, q)?;
            Ok((map * y, val))
        }
        DomainKind::Product { left, right } => maximize_product(k, left, right, g, c, q),
    }
}

fn maximize_box(
    lo: &DVector<f64>,
    hi: &DVector<f64>,
    g: Option<&DMatrix<f64>>,
    c: &DVector<f64>,
    q: &DMatrix<f64>,
) -> Result<(DVector<f64>, f64)> {
    let d = lo.len();
    let active: Vec<usize> = (0..d).filter(|&i| hi[i] > lo[i]).collect();
    if active.len() > VERTEX_ENUM_LIMIT as usize {
        return Err(Error::OracleUnavailable(format!(
            "box has 2^{} vertices, above the enumeration limit 2^{}",
            active.len(),
            VERTEX_ENUM_LIMIT
        )));
    }
    let column = |i: usize| -> DVector<f64> {
        match g {
            Some(g) => g.column(i).into_owned(),
            None => {
                let mut e = DVector::zeros(d);
                e[i] = 1.0;
                e
            }
        }
    };
    let cols: Vec<DVector<f64>> = active.iter().map(|&i| column(i)).collect();
    let qcols: Vec<DVector<f64>> = cols.iter().map(|col| q * col).collect();
    let kappa: Vec<f64> = cols.iter().zip(&qcols).map(|(a, b)| a.dot(b)).collect();

    let vertex = |mask: usize| -> DVector<f64> {
        let mut x = lo.clone();
        for (b, &i) in active.iter().enumerate() {
            if mask >> b & 1 == 1 {
                x[i] = hi[i];
            }
        }
        x
    };

    // Gray-code walk: flipping coordinate i moves w by delta * G e_i
    let mut w = apply(g, lo) + c;
    let mut qw = q * &w;
    let mut f = w.dot(&qw);
    let mut mask = 0usize;
    let (mut best_mask, mut best) = (0usize, f);
    for step in 1..(1usize << active.len()) {
        let b = step.trailing_zeros() as usize;
        let i = active[b];
        let delta = if mask >> b & 1 == 1 { lo[i] - hi[i] } else { hi[i] - lo[i] };
        mask ^= 1 << b;
        f += 2.0 * delta * cols[b].dot(&qw) + delta * delta * kappa[b];
        w.axpy(delta, &cols[b], 1.0);
        qw.axpy(delta, &qcols[b], 1.0);
        if step % 1024 == 0 {
            f = w.dot(&qw);
        }
        if f > best || (f == best && mask < best_mask) {
            best = f;
            best_mask = mask;
        }
    }
    let x = vertex(best_mask);
    let val = quad(q, &(apply(g, &x) + c));
    Ok((x, val))
}

fn maximize_product(
    whole: &Domain,
    left: &Domain,
    right: &Domain,
    g: Option<&DMatrix<f64>>,
    c: &DVector<f64>,
    q: &DMatrix<f64>,
) -> Result<(DVector<f64>, f64)> {
    let d1 = left.dim();
    let d2 = right.dim();
    let g_full = match g {
        Some(g) => g.clone(),
        None => DMatrix::identity(whole.dim(), whole.dim()),
    };
    let g1 = g_full.columns(0, d1).into_owned();
    let g2 = g_full.columns(d1, d2).into_owned();
    let join = |x: &DVector<f64>, y: &DVector<f64>| DVector::from_iterator(d1 + d2, x.iter().chain(y.iter()).copied());

    if let (Some(a), Some(b)) = (left.vertices(PRODUCT_ENUM_LIMIT), right.vertices(PRODUCT_ENUM_LIMIT)) {
        if a.len().saturating_mul(b.len()) <= PRODUCT_ENUM_LIMIT {
            let wa: Vec<DVector<f64>> = a.iter().map(|x| &g1 * x).collect();
            let wb: Vec<DVector<f64>> = b.iter().map(|y| &g2 * y + c).collect();
            let nb = wb.len();
            let eval = |idx: usize| {
                let w = &wa[idx / nb] + &wb[idx % nb];
                (idx, quad(q, &w))
            };
            let better = |x: (usize, f64), y: (usize, f64)| if y.1 > x.1 || (y.1 == x.1 && y.0 < x.0) { y } else { x };
            let total = wa.len() * nb;
            let (idx, val) = if total >= PARALLEL_THRESHOLD {
                (0..total).into_par_iter().map(eval).reduce(|| (usize::MAX, f64::NEG_INFINITY), better)
            } else {
                (0..total).map(eval).fold((usize::MAX, f64::NEG_INFINITY), better)
            };
            return Ok((join(&a[idx / nb], &b[idx % nb]), val));
        }
    }

    // separable when Q does not couple the two images
    let cross = g1.transpose() * q * &g2;
    let scale = q.norm() * g1.norm().max(1.0) * g2.norm().max(1.0);
    if cross.norm() > 1e-12 * scale.max(1.0) {
        return Err(Error::OracleUnavailable(
            "product domain with a quadratic form coupling the factors".into(),
        ));
    }
    let (x, v1) = maximize(left, Some(&g1), c, q)?;
    let (y, v2) = maximize(right, Some(&g2), c, q)?;
    Ok((join(&x, &y), v1 + v2 - quad(q, c)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    fn brute(points: &[DVector<f64>], minv: &SymMatrix, shift: &DVector<f64>) -> f64 {
        points
            .iter()
            .map(|x| minv.quad_form(&(x + shift)))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    fn random_pd(rng: &mut ChaCha8Rng, d: usize) -> SymMatrix {
        let b = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
        SymMatrix::gram(&b).shifted(0.05)
    }

    #[test]
    fn cross_polytope_ties_take_first_vertex() {
        let k = Domain::finite(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![-1.0, 0.0], vec![0.0, -1.0]]).unwrap();
        let ans = k.quadratic_oracle(&SymMatrix::identity(2), &v(&[0.0, 0.0])).unwrap();
        assert_eq!(ans.value, 1.0);
        assert_eq!(ans.witness, v(&[1.0, 0.0]));
        assert_eq!(ans.alpha, 1.0);
    }

    #[test]
    fn unit_ball_in_unit_ball() {
        let ans = Domain::ball(3, 1.0)
            .unwrap()
            .quadratic_oracle(&SymMatrix::identity(3), &DVector::zeros(3))
            .unwrap();
        assert!((ans.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn box_matches_vertex_brute_force() {
        let k = Domain::cube(2, -1.0, 1.0).unwrap();
        let minv = SymMatrix::from_fn(2, |i, j| if i == j { 1.0 } else { 0.5 });
        let ans = k.quadratic_oracle(&minv, &v(&[0.0, 0.0])).unwrap();
        assert!((ans.value - 3.0).abs() < 1e-12);
        assert!(ans.witness == v(&[1.0, 1.0]) || ans.witness == v(&[-1.0, -1.0]));

        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let d = rng.random_range(1..9);
            let lo: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..0.5)).collect();
            let hi: Vec<f64> = lo.iter().map(|l| l + rng.random_range(0.0..2.0)).collect();
            let k = Domain::cuboid(&lo, &hi).unwrap();
            let minv = random_pd(&mut rng, d);
            let shift = DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0));
            let ans = k.quadratic_oracle(&minv, &shift).unwrap();
            let expected = brute(&k.vertices(1 << 12).unwrap(), &minv, &shift);
            assert!((ans.value - expected).abs() <= 1e-10 * expected.max(1.0));
        }
    }

    #[test]
    fn box_above_limit_is_unavailable() {
        let k = Domain::cube(23, -1.0, 1.0).unwrap();
        let err = k.quadratic_oracle(&SymMatrix::identity(23), &DVector::zeros(23));
        assert!(matches!(err, Err(Error::OracleUnavailable(_))));
    }

    #[test]
    fn finite_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..20 {
            let d = rng.random_range(1..6);
            let n = rng.random_range(1..5000);
            let pts: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
            let k = Domain::finite(&pts).unwrap();
            let minv = random_pd(&mut rng, d);
            let shift = DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0));
            let ans = k.quadratic_oracle(&minv, &shift).unwrap();
            assert_eq!(ans.value, brute(k.points().unwrap(), &minv, &shift));
        }
    }

    #[test]
    fn ellipsoid_and_its_affine_image_match_sphere_sampling() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        for _ in 0..10 {
            let d = rng.random_range(1..5);
            let a = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
            let u = DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0));
            let e = Domain::ellipsoid(a.clone(), u.clone()).unwrap();
            let minv = random_pd(&mut rng, d);
            let shift = DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0));
            let ans = e.quadratic_oracle(&minv, &shift).unwrap();
            assert_eq!(e.contains(&ans.witness, 1e-9), Some(true));
            let mut sampled = f64::NEG_INFINITY;
            for _ in 0..20_000 {
                let mut y = DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0));
                y /= y.norm();
                sampled = sampled.max(minv.quad_form(&(&a * y + &u + &shift)));
            }
            assert!(ans.value >= sampled - 1e-9);
            assert!(ans.value <= sampled * 1.05 + 1e-9);

            // same set written as F applied to the unit ball, with F = A
            let img = Domain::affine(a.clone(), Domain::ball(d, 1.0).unwrap()).unwrap();
            let ans2 = img.quadratic_oracle(&minv, &(&shift + &u)).unwrap();
            assert!((ans2.value - ans.value).abs() <= 1e-8 * ans.value.max(1.0));
        }
    }

    #[test]
    fn rank_deficient_affine_image() {
        // F collapses the square onto a segment of the diagonal
        let f = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let img = Domain::affine(f, Domain::cube(2, 0.0, 1.0).unwrap()).unwrap();
        let ans = img.quadratic_oracle(&SymMatrix::identity(2), &v(&[-1.0, -1.0])).unwrap();
        assert!((ans.value - 2.0).abs() < 1e-12);
    }

    #[test]
    fn product_enumerates_or_splits() {
        let k1 = Domain::finite(&[vec![1.0], vec![-0.5]]).unwrap();
        let k2 = Domain::ball(2, 1.0).unwrap();
        let prod = Domain::product(k1, k2).unwrap();
        let minv = SymMatrix::from_diagonal(&[1.0, 2.0, 3.0]);
        let ans = prod.quadratic_oracle(&minv, &v(&[0.0, 0.0, 0.0])).unwrap();
        assert!((ans.value - 4.0).abs() < 1e-10);

        let coupled = SymMatrix::from_fn(3, |i, j| if i == j { 2.0 } else { 0.3 });
        assert!(matches!(
            prod.quadratic_oracle(&coupled, &v(&[0.0, 0.0, 0.0])),
            Err(Error::OracleUnavailable(_))
        ));

        let fa = Domain::finite(&[vec![1.0, 0.0], vec![0.0, 2.0]]).unwrap();
        let fb = Domain::finite(&[vec![1.0], vec![-3.0]]).unwrap();
        let pf = Domain::product(fa, fb).unwrap();
        let ans = pf.quadratic_oracle(&coupled, &v(&[0.1, 0.0, 0.0])).unwrap();
        let expected = brute(&pf.vertices(16).unwrap(), &coupled, &v(&[0.1, 0.0, 0.0]));
        assert!((ans.value - expected).abs() < 1e-12);
    }
}
