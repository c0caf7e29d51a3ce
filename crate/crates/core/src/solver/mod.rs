//! Computing `Gamma_p(K)` with the ellipsoid method.
//!
//! The variable is `(M, v)` with `M` symmetric, packed by [`ellipsoid::svec`].
//! The program is
//!
//! ```text
//! minimize tr_{p/2}(M)  s.t.  (x+v)^T M^{-1} (x+v) <= 1 for x in K,  M PD,  ||v|| <= R
//! ```
//!
//! and `Gamma_p(K)` is the square root of its value. The solver works with
//! `M + rho I` for a tiny margin `rho` so that `M` itself may approach the
//! PSD boundary.

pub mod ellipsoid;
pub mod separation;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::domain::Domain;
use crate::error::{Error, Result};
use crate::linalg::{trp, Exponent, PNorm, SymMatrix};
use ellipsoid::{smat, svec, CutOutcome, Ellipsoid};
pub use separation::{separate_sk, separate_trp_sublevel, Halfspace, Separation};
use separation::{cholesky_inverse, containment_halfspace, psd_cut, sublevel_halfspace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    /// The certified gap closed to within `beta`.
    Optimal,
    /// The iteration budget ran out; the best feasible point is returned.
    ApproximateOptimal,
    /// No feasible point was found.
    Infeasible,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchStrategy {
    /// One ellipsoid run whose objective cut tracks the best feasible value.
    #[default]
    SlidingLevel,
    /// Binary search on the level with a fresh ellipsoid per probe.
    Bisection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Additive accuracy on `tr_{p/2}(M)`; defaults to `1e-4 * d^{2/p} R^2`.
    pub beta: Option<f64>,
    pub max_ellipsoid_iters: Option<usize>,
    /// Radius of the ball whose volume certifies an empty probe (bisection only).
    pub eta: Option<f64>,
    /// Relative PD margin: `rho = pd_margin * R^2`.
    pub pd_margin: f64,
    pub strategy: SearchStrategy,
    /// Recorded for reproducibility; the solver itself draws no randomness.
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            beta: None,
            max_ellipsoid_iters: None,
            eta: None,
            pd_margin: 1e-8,
            strategy: SearchStrategy::SlidingLevel,
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = Some(beta);
        self
    }

    pub fn with_max_iters(mut self, iters: usize) -> Self {
        self.max_ellipsoid_iters = Some(iters);
        self
    }

    pub fn with_strategy(mut self, strategy: SearchStrategy) -> Self {
        self.strategy = strategy;
        self
    }

    fn validate(&self) -> Result<()> {
        if let Some(b) = self.beta {
            if !(b > 0.0) {
                return Err(Error::BadParams(format!("beta must be positive, got {b}")));
            }
        }
        if let Some(e) = self.eta {
            if !(e > 0.0) {
                return Err(Error::BadParams(format!("eta must be positive, got {e}")));
            }
        }
        if !(self.pd_margin >= 0.0) {
            return Err(Error::BadParams(format!("pd_margin must be non-negative, got {}", self.pd_margin)));
        }
        Ok(())
    }
}

/// A near-optimal ellipsoid `A B_2` containing the translate `K + v`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaSolution {
    pub p: PNorm,
    /// `sqrt(tr_{p/2}(M))` at the returned point.
    pub gamma_value: f64,
    /// `A = M^{1/2}`.
    #[serde(rename = "A")]
    pub noise_shape: SymMatrix,
    #[serde(rename = "M")]
    pub covariance_shape: SymMatrix,
    #[serde(rename = "v", with = "crate::linalg::vector_json")]
    pub shift: DVector<f64>,
    pub alpha: f64,
    /// `tr_{p/2}(M)` at the returned point.
    pub lambda_star: f64,
    /// Certified lower bound on `Gamma_p(K)^2`.
    pub lambda_lower: f64,
    pub iterations: usize,
    pub status: SolveStatus,
}

impl GammaSolution {
    /// `max_{x in K} (x+v)^T M^{-1} (x+v)`, which is at most 1 for a feasible solution.
    pub fn max_containment(&self, k: &Domain) -> Result<f64> {
        let minv = cholesky_inverse(&self.covariance_shape).ok_or(Error::NotPd {
            min_eigenvalue: self.covariance_shape.min_eigenvalue(),
        })?;
        Ok(k.quadratic_oracle(&minv, &self.shift)?.value)
    }

    /// Certified lower bound on `Gamma_p(K)`.
    pub fn gamma_lower(&self) -> f64 {
        self.lambda_lower.max(0.0).sqrt()
    }
}

/// Shared state of one solve.
struct Problem<'a> {
    k: &'a Domain,
    p: PNorm,
    d: usize,
    packed: usize,
    symmetric: bool,
    radius: f64,
    rho: f64,
    lambda0: f64,
}

struct Point {
    m: SymMatrix,
    v: DVector<f64>,
    lambda: f64,
}

enum Probe {
    /// A violated constraint; the halfspace is in terms of the unshifted `M`.
    Cut(Halfspace),
    Feasible { m: SymMatrix, lambda: f64 },
}

impl<'a> Problem<'a> {
    fn new(k: &'a Domain, p: PNorm, cfg: &SolverConfig) -> Self {
        let d = k.dim();
        let radius = k.radius_bound();
        let symmetric = k.is_symmetric();
        let packed = d * (d + 1) / 2;
        Problem {
            k,
            p,
            d,
            packed,
            symmetric,
            radius,
            rho: cfg.pd_margin * radius * radius,
            lambda0: level_of_identity(p, d) * radius * radius,
        }
    }

    fn n(&self) -> usize {
        self.packed + if self.symmetric { 0 } else { self.d }
    }

    fn unpack(&self, z: &DVector<f64>) -> (SymMatrix, DVector<f64>) {
        let m = smat(self.d, &z.as_slice()[..self.packed]);
        let v = if self.symmetric {
            DVector::zeros(self.d)
        } else {
            DVector::from_column_slice(&z.as_slice()[self.packed..])
        };
        (m, v)
    }

    fn pack(&self, h: &Halfspace) -> DVector<f64> {
        let mut g = DVector::zeros(self.n());
        svec(&h.x, &mut g.as_mut_slice()[..self.packed]);
        if !self.symmetric {
            g.as_mut_slice()[self.packed..].copy_from_slice(h.u.as_slice());
        }
        g
    }

    fn initial_ellipsoid(&self) -> Ellipsoid {
        let d = self.d as f64;
        let mut z = DVector::zeros(self.n());
        svec(&SymMatrix::identity(self.d).scaled(self.lambda0 / d), &mut z.as_mut_slice()[..self.packed]);
        // every PSD M with tr_{p/2}(M) <= lambda0 has trace at most d^{1-2/p} lambda0
        let trace_bound = self.lambda0 * d / level_of_identity(self.p, self.d);
        let r = trace_bound + self.lambda0 / d.sqrt() + if self.symmetric { 0.0 } else { self.radius };
        Ellipsoid::ball(z, r)
    }

    /// Checks the constraints at `(m, v)` in order: PSD, shift norm, containment.
    fn probe(&self, m: &SymMatrix, v: &DVector<f64>) -> Result<Probe> {
        if let Some((h, _)) = psd_cut(m, 0.0) {
            return Ok(Probe::Cut(h));
        }
        let norm = v.norm();
        if !self.symmetric && norm > self.radius {
            return Ok(Probe::Cut(Halfspace {
                x: SymMatrix::zeros(self.d),
                u: v / norm,
                t: self.radius,
            }));
        }
        let shifted = m.shifted(self.rho);
        let Some(minv) = cholesky_inverse(&shifted) else {
            let (_, vectors) = m.eigen();
            let w = vectors.column(0).into_owned();
            return Ok(Probe::Cut(Halfspace {
                x: SymMatrix::outer(&w).scaled(-1.0),
                u: DVector::zeros(self.d),
                t: 0.0,
            }));
        };
        let answer = self.k.quadratic_oracle(&minv, v)?;
        if answer.value > 1.0 {
            let h = containment_halfspace(&shifted, &minv, v, &answer.witness, answer.value);
            return Ok(Probe::Cut(self.unshift(h)));
        }
        let lambda = trp(self.p.half(), &shifted)?;
        Ok(Probe::Feasible { m: shifted, lambda })
    }

    /// Rewrites a cut on `M + rho I` as a cut on `M`.
    fn unshift(&self, mut h: Halfspace) -> Halfspace {
        let trace: f64 = h.x.diagonal().iter().sum();
        h.t -= self.rho * trace;
        h
    }

    /// Gradient of `M -> tr_{p/2}(M)` at a PSD point with value `lambda`.
    fn norm_gradient(&self, m: &SymMatrix, lambda: f64) -> SymMatrix {
        let diag = m.diagonal();
        match self.p.half() {
            Exponent::Infinity => {
                let mut best = 0;
                for (i, &x) in diag.iter().enumerate() {
                    if x > diag[best] {
                        best = i;
                    }
                }
                let mut g = SymMatrix::zeros(self.d);
                g.set(best, best, 1.0);
                g
            }
            Exponent::Finite(r) => {
                if lambda <= 0.0 {
                    return SymMatrix::zeros(self.d);
                }
                SymMatrix::from_diagonal(&diag.iter().map(|&x| (x.max(0.0) / lambda).powf(r - 1.0)).collect::<Vec<_>>())
            }
        }
    }

    fn initial_point(&self) -> Result<Option<Point>> {
        let m = SymMatrix::identity(self.d).scaled(self.radius * self.radius);
        let v = DVector::zeros(self.d);
        Ok(match self.probe(&m, &v)? {
            Probe::Feasible { m, lambda } => Some(Point { m, v, lambda }),
            Probe::Cut(_) => None,
        })
    }
}

/// `tr_{p/2}(I_d) = d^{2/p}`.
fn level_of_identity(p: PNorm, d: usize) -> f64 {
    match p.half() {
        Exponent::Infinity => 1.0,
        Exponent::Finite(r) => (d as f64).powf(1.0 / r),
    }
}

fn default_iters(n: usize) -> usize {
    (60 * (n + 1) * (n + 1)).max(20_000)
}

/// Computes `Gamma_p(K)` and an optimal `(A, v)` up to additive `beta` on
/// `Gamma_p(K)^2`.
pub fn solve_gamma(k: &Domain, p: PNorm, cfg: &SolverConfig) -> Result<GammaSolution> {
    cfg.validate()?;
    if k.dim() == 0 {
        return Err(Error::Empty("domain of dimension zero"));
    }
    let prob = Problem::new(k, p, cfg);
    if !prob.radius.is_finite() {
        return Err(Error::InvalidDomain("domain radius is not finite".into()));
    }
    if prob.radius == 0.0 {
        // K = {0}
        let zero = SymMatrix::zeros(prob.d);
        return Ok(GammaSolution {
            p,
            gamma_value: 0.0,
            noise_shape: zero.clone(),
            covariance_shape: zero,
            shift: DVector::zeros(prob.d),
            alpha: 1.0,
            lambda_star: 0.0,
            lambda_lower: 0.0,
            iterations: 0,
            status: SolveStatus::Optimal,
        });
    }
    let beta = cfg.beta.unwrap_or(1e-4 * prob.lambda0);
    let max_iters = cfg.max_ellipsoid_iters.unwrap_or_else(|| default_iters(prob.n()));
    let outcome = match cfg.strategy {
        SearchStrategy::SlidingLevel => sliding_level(&prob, beta, max_iters)?,
        SearchStrategy::Bisection => {
            let eta = cfg.eta.unwrap_or_else(|| {
                let d = prob.d as f64;
                beta.powi(3) / (d * d * prob.radius.max(1.0).powi(4))
            });
            bisection(&prob, beta, eta, max_iters)?
        }
    };
    let Some(best) = outcome.best else {
        return Ok(GammaSolution {
            p,
            gamma_value: f64::NAN,
            noise_shape: SymMatrix::zeros(prob.d),
            covariance_shape: SymMatrix::zeros(prob.d),
            shift: DVector::zeros(prob.d),
            alpha: 1.0,
            lambda_star: f64::NAN,
            lambda_lower: outcome.lower,
            iterations: outcome.iterations,
            status: SolveStatus::Infeasible,
        });
    };
    // the margin inflates the value by at most tr_{p/2}(rho I)
    let lambda_lower = (outcome.lower - prob.rho * level_of_identity(p, prob.d)).clamp(0.0, best.lambda);
    Ok(GammaSolution {
        p,
        gamma_value: best.lambda.sqrt(),
        noise_shape: best.m.principal_sqrt()?,
        covariance_shape: best.m,
        shift: best.v,
        alpha: 1.0,
        lambda_star: best.lambda,
        lambda_lower,
        iterations: outcome.iterations,
        status: outcome.status,
    })
}

struct Outcome {
    best: Option<Point>,
    lower: f64,
    iterations: usize,
    status: SolveStatus,
}

fn sliding_level(prob: &Problem, beta: f64, max_iters: usize) -> Result<Outcome> {
    let mut ell = prob.initial_ellipsoid();
    let mut best = prob.initial_point()?;
    let mut lower = 0.0_f64;
    let mut status = SolveStatus::ApproximateOptimal;
    let mut iterations = 0;
    while iterations < max_iters {
        iterations += 1;
        let (m, v) = prob.unpack(ell.center());
        let cut = match prob.probe(&m, &v)? {
            Probe::Cut(h) => h,
            Probe::Feasible { m: shifted, lambda } => {
                let g = prob.pack(&Halfspace {
                    x: prob.norm_gradient(&shifted, lambda),
                    u: DVector::zeros(prob.d),
                    t: 0.0,
                });
                lower = lower.max(lambda - ell.half_width(&g));
                if best.as_ref().is_none_or(|b| lambda < b.lambda) {
                    best = Some(Point { m: shifted.clone(), v: v.clone(), lambda });
                }
                let level = best.as_ref().map_or(lambda, |b| b.lambda);
                prob.unshift(sublevel_halfspace(&shifted, level, prob.p))
            }
        };
        if let Some(b) = &best {
            if b.lambda - lower <= beta {
                status = SolveStatus::Optimal;
                break;
            }
        }
        match ell.cut(&prob.pack(&cut), cut.t) {
            CutOutcome::Updated => {}
            CutOutcome::Empty => {
                // nothing at or below the best level remains
                if let Some(b) = &best {
                    lower = lower.max(b.lambda);
                    status = SolveStatus::Optimal;
                }
                break;
            }
            CutOutcome::Degenerate => break,
        }
    }
    Ok(Outcome { best, lower, iterations, status })
}

fn bisection(prob: &Problem, beta: f64, eta: f64, max_iters: usize) -> Result<Outcome> {
    let mut best = prob.initial_point()?;
    let mut lo = 0.0_f64;
    let mut hi = best.as_ref().map_or(prob.lambda0, |b| b.lambda);
    let mut iterations = 0;
    let mut status = SolveStatus::Optimal;
    while hi - lo > beta {
        let level = 0.5 * (lo + hi);
        let mut ell = prob.initial_ellipsoid();
        let mut found = None;
        let mut exhausted = true;
        while iterations < max_iters {
            iterations += 1;
            if ell.below_ball(eta) {
                exhausted = false;
                break;
            }
            let (m, v) = prob.unpack(ell.center());
            let cut = match prob.probe(&m, &v)? {
                Probe::Cut(h) => h,
                Probe::Feasible { m: shifted, lambda } => {
                    if lambda <= level {
                        found = Some(Point { m: shifted, v, lambda });
                        break;
                    }
                    prob.unshift(sublevel_halfspace(&shifted, level, prob.p))
                }
            };
            match ell.cut(&prob.pack(&cut), cut.t) {
                CutOutcome::Updated => {}
                CutOutcome::Empty | CutOutcome::Degenerate => {
                    exhausted = false;
                    break;
                }
            }
        }
        match found {
            Some(point) => {
                hi = point.lambda;
                best = Some(point);
            }
            None if !exhausted => lo = level,
            None => {
                status = SolveStatus::ApproximateOptimal;
                break;
            }
        }
    }
    if best.is_none() {
        status = SolveStatus::Infeasible;
    }
    Ok(Outcome { best, lower: lo, iterations, status })
}

/// `gamma_(p)(W)` through the point set of the columns of `W` (and their
/// negatives when `symmetric`).
pub fn gamma_factorization(w: &DMatrix<f64>, p: PNorm, symmetric: bool, cfg: &SolverConfig) -> Result<GammaSolution> {
    if w.ncols() == 0 {
        return Err(Error::Empty("factorization input has no columns"));
    }
    if w.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidDomain("non-finite entry in W".into()));
    }
    let mut points: Vec<DVector<f64>> = w.column_iter().map(|c| c.into_owned()).collect();
    if symmetric {
        let negated: Vec<DVector<f64>> = points.iter().map(|c| -c).collect();
        points.extend(negated);
    }
    solve_gamma(&Domain::finite_from_vectors(points)?, p, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn solve(k: &Domain, p: PNorm) -> GammaSolution {
        let lambda0 = level_of_identity(p, k.dim()) * k.radius_bound().powi(2);
        solve_gamma(k, p, &SolverConfig::default().with_beta(1e-6 * lambda0)).unwrap()
    }

    #[test]
    fn cube_matches_closed_form() {
        for d in [2, 3] {
            for p in [PNorm::TWO, PNorm::new(4.0).unwrap(), PNorm::INFINITY] {
                let k = Domain::cube(d, -1.0, 1.0).unwrap();
                let s = solve(&k, p);
                let expected = (d as f64).powf(0.5 + 1.0 / p.value());
                assert!((s.gamma_value / expected - 1.0).abs() < 1e-3, "d={d} p={p}: {} vs {expected}", s.gamma_value);
                assert!(s.max_containment(&k).unwrap() <= 1.0 + 1e-6);
                assert!(s.gamma_lower() <= s.gamma_value);
            }
        }
    }

    #[test]
    fn ellipsoid_value_is_its_own_trace_norm() {
        let shape = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.0, 1.0]);
        let center = DVector::from_column_slice(&[0.3, -0.2]);
        let k = Domain::ellipsoid(shape.clone(), center).unwrap();
        for p in [PNorm::TWO, PNorm::new(3.0).unwrap(), PNorm::INFINITY] {
            let expected = trp(p.half(), &SymMatrix::gram(&shape)).unwrap().sqrt();
            let s = solve(&k, p);
            assert!((s.gamma_value / expected - 1.0).abs() < 1e-3, "p={p}: {} vs {expected}", s.gamma_value);
        }
    }

    #[test]
    fn singleton_needs_no_noise() {
        let k = Domain::finite(&[vec![1.0, -2.0, 0.5]]).unwrap();
        let s = solve(&k, PNorm::TWO);
        assert!(s.gamma_value < 1e-2, "{}", s.gamma_value);
        assert!((s.shift - DVector::from_column_slice(&[-1.0, 2.0, -0.5])).norm() < 1e-2);
    }

    #[test]
    fn identity_factorization_at_infinity() {
        let s = gamma_factorization(&DMatrix::identity(3, 3), PNorm::INFINITY, true, &SolverConfig::default().with_beta(1e-7)).unwrap();
        assert!((s.gamma_value - 1.0).abs() < 1e-3, "{}", s.gamma_value);
    }

    #[test]
    fn single_column_shifts_to_zero() {
        let w = DMatrix::from_column_slice(2, 1, &[3.0, 4.0]);
        let s = gamma_factorization(&w, PNorm::TWO, false, &SolverConfig::default()).unwrap();
        assert!(s.gamma_value < 0.05 * 5.0);
    }

    #[test]
    fn bisection_agrees_with_sliding_level() {
        let k = Domain::cube(2, -1.0, 1.0).unwrap();
        let cfg = SolverConfig::default().with_beta(1e-3).with_strategy(SearchStrategy::Bisection);
        let s = solve_gamma(&k, PNorm::TWO, &cfg).unwrap();
        assert!(s.lambda_star - s.lambda_lower <= 1e-3 + 1e-12 || s.status == SolveStatus::ApproximateOptimal);
        assert!((s.gamma_value - 2.0).abs() < 1e-2, "{}", s.gamma_value);
    }

    #[test]
    fn rejects_bad_beta() {
        let k = Domain::cube(2, -1.0, 1.0).unwrap();
        assert!(matches!(
            solve_gamma(&k, PNorm::TWO, &SolverConfig::default().with_beta(0.0)),
            Err(Error::BadParams(_))
        ));
    }
}
