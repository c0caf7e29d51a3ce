//! Deep-cut ellipsoid method state.

use nalgebra::{DMatrix, DVector};

use crate::linalg::SymMatrix;

/// Outcome of intersecting the ellipsoid with a halfspace.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CutOutcome {
    Updated,
    /// The halfspace misses the ellipsoid (up to a boundary point).
    Empty,
    /// The shape matrix lost positive definiteness numerically.
    Degenerate,
}

/// `{z : (z - c)^T P^{-1} (z - c) <= 1}`.
#[derive(Debug, Clone)]
pub struct Ellipsoid {
    center: DVector<f64>,
    shape: DMatrix<f64>,
    log_det: f64,
}

impl Ellipsoid {
    pub fn ball(center: DVector<f64>, radius: f64) -> Self {
        let n = center.len();
        Ellipsoid {
            shape: DMatrix::identity(n, n) * (radius * radius),
            log_det: 2.0 * n as f64 * radius.ln(),
            center,
        }
    }

    pub fn center(&self) -> &DVector<f64> {
        &self.center
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    /// `sqrt(g^T P g)`, the half-width of the ellipsoid along `g`.
    pub fn half_width(&self, g: &DVector<f64>) -> f64 {
        g.dot(&(&self.shape * g)).max(0.0).sqrt()
    }

    /// `log det P`; the volume is that of the unit ball times `exp(log_det / 2)`.
    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    /// True when the ellipsoid is smaller in volume than a ball of radius `eta`.
    pub fn below_ball(&self, eta: f64) -> bool {
        self.log_det < 2.0 * self.dim() as f64 * eta.ln()
    }

    /// Keeps `{z : g.z <= t}`.
    pub fn cut(&mut self, g: &DVector<f64>, t: f64) -> CutOutcome {
        let n = self.dim();
        let pg = &self.shape * g;
        let gpg = g.dot(&pg);
        if !(gpg > 0.0) || !gpg.is_finite() {
            return CutOutcome::Degenerate;
        }
        let width = gpg.sqrt();
        let depth = (g.dot(&self.center) - t) / width;
        if depth >= 1.0 {
            return CutOutcome::Empty;
        }
        let nf = n as f64;
        if depth <= -1.0 / nf {
            // the halfspace contains the whole ellipsoid
            return CutOutcome::Updated;
        }
        if n == 1 {
            // intersect intervals exactly
            let r = self.shape[(0, 0)].sqrt();
            let (mut lo, mut hi) = (self.center[0] - r, self.center[0] + r);
            let bound = t / g[0];
            if g[0] > 0.0 {
                hi = hi.min(bound);
            } else {
                lo = lo.max(bound);
            }
            let half = 0.5 * (hi - lo);
            self.center[0] = 0.5 * (hi + lo);
            self.shape[(0, 0)] = half * half;
            self.log_det = 2.0 * half.ln();
            return CutOutcome::Updated;
        }
        let b = pg / width;
        let tau = (1.0 + nf * depth) / (nf + 1.0);
        let delta = nf * nf * (1.0 - depth * depth) / (nf * nf - 1.0);
        let sigma = 2.0 * (1.0 + nf * depth) / ((nf + 1.0) * (1.0 + depth));
        self.center.axpy(-tau, &b, 1.0);
        self.shape.ger(-sigma, &b, &b, 1.0);
        self.shape *= delta;
        // restore exact symmetry lost to rounding
        for i in 0..n {
            for j in 0..i {
                let s = 0.5 * (self.shape[(i, j)] + self.shape[(j, i)]);
                self.shape[(i, j)] = s;
                self.shape[(j, i)] = s;
            }
        }
        self.log_det += nf * delta.ln() + (1.0 - sigma).ln();
        CutOutcome::Updated
    }
}

/// Scaled half-vectorization: off-diagonal entries carry a factor `sqrt(2)`
/// so that dot products match the trace inner product.
pub fn svec(m: &SymMatrix, out: &mut [f64]) {
    let d = m.dim();
    let mut k = 0;
    for i in 0..d {
        for j in 0..=i {
            out[k] = if i == j { m.get(i, j) } else { std::f64::consts::SQRT_2 * m.get(i, j) };
            k += 1;
        }
    }
}

/// Inverse of [`svec`].
pub fn smat(d: usize, z: &[f64]) -> SymMatrix {
    let mut k = 0;
    let mut m = SymMatrix::zeros(d);
    for i in 0..d {
        for j in 0..=i {
            m.set(i, j, if i == j { z[k] } else { z[k] / std::f64::consts::SQRT_2 });
            k += 1;
        }
    }
    m
}
