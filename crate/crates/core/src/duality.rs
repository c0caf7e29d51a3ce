//! Lower bounds on `Gamma_p(K)` from dual pairs `(P, D)`: a distribution
//! `P` on the points of `K` and a diagonal scaling `D` with
//! `tr_q(D^2) = 1`, `q = p/(p-2)`. Every such pair gives
//! `Gamma_p(K) >= tr((D cov(P) D)^{1/2})`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::Domain;
use crate::error::{Error, Result};
use crate::linalg::{Exponent, PNorm, SymMatrix};
use crate::solver::{solve_gamma, GammaSolution, SolverConfig};

const DISTRIBUTION_TOL: f64 = 1e-9;
const SCALING_TOL: f64 = 1e-9;
/// Largest point set accepted by [`search_certificate`].
pub const SEARCH_POINT_LIMIT: usize = 100_000;

/// Which second-order statistic of `P` enters the bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Moment {
    /// `cov(P)`; valid for every `K`.
    #[default]
    Centered,
    /// `E[X X^T]`; valid only for symmetric `K`.
    Second,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualCertificate {
    pub p: PNorm,
    pub weights: Vec<f64>,
    /// Diagonal of `D`; absent at `p = 2`, where `D = I`.
    pub diag_scale: Option<Vec<f64>>,
    #[serde(default)]
    pub moment: Moment,
    pub lower_bound: f64,
}

impl DualCertificate {
    /// Recomputes the bound from the stored fields.
    pub fn recheck(&self, k: &Domain) -> Result<f64> {
        Ok(certify_with(k, self.p, &self.weights, self.diag_scale.as_deref(), self.moment)?.lower_bound)
    }
}

fn points_of(k: &Domain) -> Result<&[DVector<f64>]> {
    k.points().ok_or(Error::UnsupportedVariant(k.variant_name()))
}

fn check_weights(weights: &[f64], n: usize) -> Result<()> {
    if weights.len() != n {
        return Err(Error::NotADistribution(format!("{} weights for {} points", weights.len(), n)));
    }
    if let Some((i, w)) = weights.iter().enumerate().find(|(_, w)| !(**w >= 0.0) || !w.is_finite()) {
        return Err(Error::NotADistribution(format!("weight {i} is {w}")));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > DISTRIBUTION_TOL {
        return Err(Error::NotADistribution(format!("weights sum to {total}")));
    }
    Ok(())
}

/// `tr_q(D^2)` for the dual exponent of `p` (the max entry of `D^2` at `p = 2`).
fn scaling_norm(p: PNorm, diag: &[f64]) -> f64 {
    let squares: Vec<f64> = diag.iter().map(|x| x * x).collect();
    p.dual_q().norm_of(&squares)
}

fn check_scaling(p: PNorm, d: usize, diag: Option<&[f64]>) -> Result<Vec<f64>> {
    match diag {
        None if p == PNorm::TWO => Ok(vec![1.0; d]),
        None => Err(Error::BadParams(format!("a diagonal scaling is required for p = {p}"))),
        Some(diag) => {
            if diag.len() != d {
                return Err(Error::DimensionMismatch { expected: d, got: diag.len() });
            }
            if diag.iter().any(|x| !(*x >= 0.0) || !x.is_finite()) {
                return Err(Error::BadParams("diagonal scaling entries must be finite and non-negative".into()));
            }
            let value = scaling_norm(p, diag);
            if (value - 1.0).abs() > SCALING_TOL {
                return Err(Error::ScalingNotNormalized { value });
            }
            Ok(diag.to_vec())
        }
    }
}

/// `sum w_i x_i x_i^T - mu mu^T` (or without the mean term).
fn moment_matrix(points: &[DVector<f64>], weights: &[f64], moment: Moment) -> (SymMatrix, DVector<f64>) {
    let d = points.first().map_or(0, |x| x.len());
    let mut second = DMatrix::zeros(d, d);
    let mut mean = DVector::zeros(d);
    for (x, &w) in points.iter().zip(weights) {
        if w == 0.0 {
            continue;
        }
        second.ger(w, x, x, 1.0);
        mean.axpy(w, x, 1.0);
    }
    if moment == Moment::Centered {
        second.ger(-1.0, &mean, &mean, 1.0);
    }
    (SymMatrix::from_dmatrix(&second), mean)
}

fn scaled_moment(c: &SymMatrix, diag: &[f64]) -> SymMatrix {
    SymMatrix::from_fn(c.dim(), |i, j| diag[i] * c.get(i, j) * diag[j])
}

/// The centered certificate `tr((D cov(P) D)^{1/2})`.
pub fn certify(k: &Domain, p: PNorm, weights: &[f64], diag_scale: Option<&[f64]>) -> Result<DualCertificate> {
    certify_with(k, p, weights, diag_scale, Moment::Centered)
}

pub fn certify_with(k: &Domain, p: PNorm, weights: &[f64], diag_scale: Option<&[f64]>, moment: Moment) -> Result<DualCertificate> {
    let points = points_of(k)?;
    check_weights(weights, points.len())?;
    let diag = check_scaling(p, k.dim(), diag_scale)?;
    if moment == Moment::Second && !k.is_symmetric() {
        return Err(Error::NotSymmetric);
    }
    let (c, _) = moment_matrix(points, weights, moment);
    let lower_bound = scaled_moment(&c, &diag).trace_sqrt();
    Ok(DualCertificate {
        p,
        weights: weights.to_vec(),
        diag_scale: diag_scale.map(|d| d.to_vec()),
        moment,
        lower_bound,
    })
}

/// Softmax with a max shift.
fn softmax(theta: &[f64]) -> Vec<f64> {
    let top = theta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = theta.iter().map(|t| (t - top).exp()).collect();
    let total: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / total).collect()
}

/// `D_ii = a_i^{1/(2q)}` for `a` on the simplex.
fn scaling_from_simplex(p: PNorm, a: &[f64]) -> Vec<f64> {
    match p.dual_q() {
        Exponent::Infinity => vec![1.0; a.len()],
        Exponent::Finite(q) => a.iter().map(|&x| x.powf(0.5 / q)).collect(),
    }
}

struct Ascent<'a> {
    points: &'a [DVector<f64>],
    p: PNorm,
    /// The scaling is fixed to `I` at `p = 2`.
    scales: bool,
}

struct Evaluation {
    value: f64,
    grad_w: Vec<f64>,
    grad_a: Vec<f64>,
}

impl Ascent<'_> {
    fn evaluate(&self, theta_w: &[f64], theta_a: &[f64]) -> Evaluation {
        let w = softmax(theta_w);
        let a = softmax(theta_a);
        let diag = if self.scales { scaling_from_simplex(self.p, &a) } else { vec![1.0; theta_a.len()] };
        let (c, mean) = moment_matrix(self.points, &w, Moment::Centered);
        let s = scaled_moment(&c, &diag);
        let (values, vectors) = s.eigen();
        let value: f64 = values.iter().map(|l| l.max(0.0).sqrt()).sum();
        let top = values.last().copied().unwrap_or(0.0).max(0.0);
        let floor = 1e-12 * top.max(1e-300);
        // pseudo-inverse of S^{1/2} on the numerical range
        let d = diag.len();
        let mut scaled = vectors.clone();
        for (col, &l) in values.iter().enumerate() {
            let f = if l > floor { 1.0 / l.sqrt() } else { 0.0 };
            for i in 0..d {
                scaled[(i, col)] *= f;
            }
        }
        let root_inv = &scaled * vectors.transpose();
        let dd = DMatrix::from_diagonal(&DVector::from_column_slice(&diag));
        let kernel = &dd * &root_inv * &dd * 0.5;
        let raw_w: Vec<f64> = self
            .points
            .iter()
            .map(|x| {
                let y = x - &mean;
                y.dot(&(&kernel * &y))
            })
            .collect();
        let grad_w = softmax_chain(&w, &raw_w);
        let grad_a = if self.scales {
            let Exponent::Finite(q) = self.p.dual_q() else { unreachable!() };
            let dc = &dd * c.to_dmatrix();
            let dfd = &root_inv * dc;
            // d f / d log a_j = D_jj (df/dD_jj) / (2q)
            let raw: Vec<f64> = (0..d).map(|j| diag[j] * dfd[(j, j)] / (2.0 * q)).collect();
            let mean_raw: f64 = raw.iter().sum::<f64>();
            raw.iter().zip(&a).map(|(r, ai)| r - ai * mean_raw).collect()
        } else {
            vec![0.0; d]
        };
        Evaluation { value, grad_w, grad_a }
    }
}

/// Gradient with respect to softmax logits given the gradient `h` with
/// respect to the probabilities `w`.
fn softmax_chain(w: &[f64], h: &[f64]) -> Vec<f64> {
    let avg: f64 = w.iter().zip(h).map(|(a, b)| a * b).sum();
    w.iter().zip(h).map(|(wi, hi)| wi * (hi - avg)).collect()
}

fn logits(weights: &[f64]) -> Vec<f64> {
    weights.iter().map(|w| w.max(1e-300).ln()).collect()
}

/// Starting points for the ascent: uniform, the farthest point mixed with
/// uniform, and (when available) the contact points and diagonal of a
/// solver solution.
fn restarts(points: &[DVector<f64>], p: PNorm, hint: Option<&GammaSolution>) -> Vec<(Vec<f64>, Vec<f64>)> {
    let n = points.len();
    let d = points[0].len();
    let uniform_w = vec![1.0 / n as f64; n];
    let uniform_a = vec![1.0 / d as f64; d];
    let mut starts = vec![(uniform_w.clone(), uniform_a.clone())];
    if n > 1 {
        let far = (0..n).fold(0, |b, i| if points[i].norm() > points[b].norm() { i } else { b });
        let mut w: Vec<f64> = uniform_w.iter().map(|u| 0.5 * u).collect();
        w[far] += 0.5;
        starts.push((w, uniform_a.clone()));
    }
    if let Some(sol) = hint {
        if let Some(minv) = sol.covariance_shape.inverse_pd().ok() {
            let slack: Vec<f64> = points.iter().map(|x| minv.quad_form(&(x + &sol.shift))).collect();
            let top = slack.iter().copied().fold(0.0, f64::max);
            let touching: Vec<f64> = slack.iter().map(|s| if *s >= 0.98 * top { 1.0 } else { 0.0 }).collect();
            let count: f64 = touching.iter().sum();
            let w: Vec<f64> = touching.iter().map(|t| 0.9 * t / count + 0.1 / n as f64).collect();
            let a = match p.half() {
                Exponent::Finite(r) => {
                    let raw: Vec<f64> = sol.covariance_shape.diagonal().iter().map(|m| m.max(0.0).powf(r)).collect();
                    let total: f64 = raw.iter().sum();
                    if total > 0.0 {
                        raw.iter().map(|x| x / total).collect()
                    } else {
                        uniform_a.clone()
                    }
                }
                Exponent::Infinity => uniform_a.clone(),
            };
            starts.push((w, a));
        }
    }
    starts
}

fn ascend(ascent: &Ascent, start: &(Vec<f64>, Vec<f64>), budget: usize) -> (Vec<f64>, Vec<f64>, f64) {
    let mut tw = logits(&start.0);
    let mut ta = logits(&start.1);
    let mut current = ascent.evaluate(&tw, &ta);
    let mut step = 1.0 / current.value.max(1e-12);
    let mut evals = 1;
    while evals < budget {
        let gnorm = current.grad_w.iter().chain(&current.grad_a).map(|g| g * g).sum::<f64>().sqrt();
        if gnorm <= 1e-14 * current.value.max(1e-300) {
            break;
        }
        let nw: Vec<f64> = tw.iter().zip(&current.grad_w).map(|(t, g)| t + step * g).collect();
        let na: Vec<f64> = ta.iter().zip(&current.grad_a).map(|(t, g)| t + step * g).collect();
        let trial = ascent.evaluate(&nw, &na);
        evals += 1;
        if trial.value > current.value {
            tw = nw;
            ta = na;
            current = trial;
            step *= 1.5;
        } else {
            step *= 0.3;
            if step * gnorm < 1e-15 {
                break;
            }
        }
    }
    (softmax(&tw), softmax(&ta), current.value)
}

/// Heuristic ascent over `(P, D)` from several starts; the best pair is
/// returned as a certificate revalidated through [`certify`].
pub fn search_certificate(k: &Domain, p: PNorm, budget: usize, hint: Option<&GammaSolution>) -> Result<DualCertificate> {
    let points = points_of(k)?;
    if points.len() > SEARCH_POINT_LIMIT {
        return Err(Error::TooLarge(format!("{} points exceed the search limit {SEARCH_POINT_LIMIT}", points.len())));
    }
    let ascent = Ascent { points, p, scales: p != PNorm::TWO };
    let starts = restarts(points, p, hint);
    let per_start = (budget / starts.len()).max(1);
    let results: Vec<_> = starts.par_iter().map(|s| ascend(&ascent, s, per_start)).collect();
    let mut best: Option<DualCertificate> = None;
    for (w, a, _) in results {
        // renormalize exactly before certifying
        let total: f64 = w.iter().sum();
        let w: Vec<f64> = w.iter().map(|x| x / total).collect();
        let diag = ascent.scales.then(|| {
            let diag = scaling_from_simplex(p, &a);
            let norm = scaling_norm(p, &diag);
            diag.iter().map(|x| x / norm.sqrt()).collect::<Vec<f64>>()
        });
        let cert = certify(k, p, &w, diag.as_deref())?;
        if best.as_ref().is_none_or(|b| cert.lower_bound > b.lower_bound) {
            best = Some(cert);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// `Gamma_2(D K)` computed by the solver; a lower bound on `Gamma_p(K)`
/// for any normalized `D`, attained by the best one.
pub fn gamma_via_gamma2(k: &Domain, p: PNorm, diag_scale: &[f64], cfg: &SolverConfig) -> Result<f64> {
    let diag = check_scaling(p, k.dim(), Some(diag_scale))?;
    let map = DMatrix::from_diagonal(&DVector::from_vec(diag));
    let image = match k.points() {
        Some(points) => Domain::finite_from_vectors(points.iter().map(|x| &map * x).collect())?,
        None => Domain::affine(map, k.clone())?,
    };
    Ok(solve_gamma(&image, PNorm::TWO, cfg)?.gamma_value)
}

/// `tr_q(D^2)` for a diagonal scaling, exposed for checking certificates.
pub fn scaling_normalization(p: PNorm, diag_scale: &[f64]) -> f64 {
    scaling_norm(p, diag_scale)
}
