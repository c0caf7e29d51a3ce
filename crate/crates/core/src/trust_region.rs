//! Maximization of a quadratic over the unit Euclidean ball.
//!
//! Solves `max_{||y|| <= 1} y^T H y + 2 b^T y` for symmetric `H` by
//! eigendecomposition and a safeguarded Newton iteration on the secular
//! equation `||(mu I - H)^{-1} b|| = 1`, including the hard case where `b`
//! has no component in the top eigenspace.

use nalgebra::{DMatrix, DVector};

use crate::linalg::SymMatrix;

/// Tolerance on `| ||y(mu)|| - 1 |` at termination.
pub const SECULAR_TOL: f64 = 1e-10;
const MAX_NEWTON_STEPS: usize = 200;

#[derive(Debug, Clone)]
pub struct BallMaximizer {
    pub y: DVector<f64>,
    /// `y^T H y + 2 b^T y` at `y`.
    pub value: f64,
    /// The multiplier `mu` with `(mu I - H) y = b`.
    pub multiplier: f64,
}

fn objective(h: &DMatrix<f64>, b: &DVector<f64>, y: &DVector<f64>) -> f64 {
    y.dot(&(h * y)) + 2.0 * b.dot(y)
}

/// Returns a global maximizer of `y^T H y + 2 b^T y` on the unit ball.
pub fn maximize_on_ball(h: &SymMatrix, b: &DVector<f64>) -> BallMaximizer {
    let k = h.dim();
    assert_eq!(b.len(), k);
    let hd = h.to_dmatrix();
    if k == 0 {
        return BallMaximizer { y: DVector::zeros(0), value: 0.0, multiplier: 0.0 };
    }
    let (lambdas, q) = h.eigen();
    // coordinates of b in the eigenbasis
    let beta = q.transpose() * b;
    let top = lambdas[k - 1];
    let scale = lambdas.iter().fold(0.0_f64, |m, l| m.max(l.abs())).max(b.norm()).max(1e-300);
    let gap_tol = 1e-12 * scale;
    let is_top = |i: usize| lambdas[i] >= top - gap_tol;

    let y_of = |mu: f64| -> DVector<f64> {
        let coeffs = DVector::from_fn(k, |i, _| if is_top(i) && mu <= top { 0.0 } else { beta[i] / (mu - lambdas[i]) });
        &q * coeffs
    };
    let norm_of = |mu: f64| -> f64 {
        (0..k)
            .map(|i| {
                let c = beta[i] / (mu - lambdas[i]);
                c * c
            })
            .sum::<f64>()
            .sqrt()
    };

    // interior solution: only possible when H is negative definite
    if top < 0.0 {
        let interior = norm_of(0.0);
        if interior <= 1.0 {
            let y = y_of(0.0);
            let value = objective(&hd, b, &y);
            return BallMaximizer { y, value, multiplier: 0.0 };
        }
    }

    let top_weight: f64 = (0..k).filter(|&i| is_top(i)).map(|i| beta[i] * beta[i]).sum::<f64>().sqrt();
    let lower = top.max(0.0);
    if top_weight <= 1e-14 * b.norm().max(scale) {
        // hard case: y(mu) stays bounded as mu -> top
        let rest_norm = (0..k)
            .filter(|&i| !is_top(i))
            .map(|i| {
                let c = beta[i] / (lower - lambdas[i]);
                c * c
            })
            .sum::<f64>()
            .sqrt();
        if rest_norm <= 1.0 && top >= 0.0 {
            let mut y = y_of(top);
            let first_top = (0..k).find(|&i| is_top(i)).unwrap();
            let tau = (1.0 - rest_norm * rest_norm).max(0.0).sqrt();
            y += q.column(first_top) * tau;
            let value = objective(&hd, b, &y);
            return BallMaximizer { y, value, multiplier: top };
        }
    }

    // ||y(mu)|| is decreasing on (lower, inf); bracket the unit crossing
    let mut lo = lower;
    let mut hi = lower + b.norm().max(1e-300);
    while norm_of(hi) > 1.0 {
        hi = lower + 2.0 * (hi - lower);
    }
    // Newton on phi(mu) = 1/||y(mu)|| - 1, which is increasing and nearly linear
    let mut mu = hi;
    for _ in 0..MAX_NEWTON_STEPS {
        let n = norm_of(mu);
        if (n - 1.0).abs() <= SECULAR_TOL {
            break;
        }
        if n > 1.0 {
            lo = mu;
        } else {
            hi = mu;
        }
        let dn: f64 = -(0..k)
            .map(|i| {
                let r = mu - lambdas[i];
                beta[i] * beta[i] / (r * r * r)
            })
            .sum::<f64>()
            / n;
        let phi = 1.0 / n - 1.0;
        let dphi = -dn / (n * n);
        let mut next = mu - phi / dphi;
        if !next.is_finite() || next <= lo || next >= hi {
            next = 0.5 * (lo + hi);
        }
        if (hi - lo) <= 1e-16 * hi.abs().max(1.0) {
            break;
        }
        mu = next;
    }
    let mut y = y_of(mu);
    let n = y.norm();
    if n > 1.0 {
        y /= n;
    }
    let value = objective(&hd, b, &y);
    BallMaximizer { y, value, multiplier: mu }
}
