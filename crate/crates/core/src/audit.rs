//! Empirical and analytic checks of the Gaussian mechanism: Monte Carlo
//! error in `l_p`, Hammersley-Chapman-Robins variance floors, and the
//! width-to-inclusion reduction.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::Domain;
use crate::error::{Error, Result};
use crate::linalg::{trp, Exponent, PNorm, SymMatrix};
use crate::mechanism::{gaussian_draw, Dataset, MechanismSpec};

/// Slack constant applied to the `sqrt(min(p, ln 2d))` error ceiling.
pub const C_AUDIT: f64 = 8.0;
/// The `(1 - beta)` factor of the far-point construction.
pub const FAR_POINT_MARGIN: f64 = 0.01;
pub const MIN_TRIALS: usize = 1000;
const RANDOM_DIRECTIONS: usize = 200;
const PAIR_DIRECTION_LIMIT: usize = 2000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub p: PNorm,
    pub trials: usize,
    pub seed: u64,
    /// `sqrt(mean ||M(X) - mu(X)||_p^2)` over the trials.
    pub empirical_rmse_p: f64,
    pub rmse_std_error: f64,
    /// `sqrt(tr_{p/2}(Sigma))`.
    pub analytic_floor: f64,
    /// `C_AUDIT sqrt(min(p, ln 2d)) sqrt(tr_{p/2}(Sigma))`.
    pub theorem_upper: f64,
    pub c_audit: f64,
    /// Min and max over sampled directions of the analytic standard deviation
    /// of `theta^T M(X)` divided by [`hcr_floor`]; `None` if every width is zero.
    pub worst_direction_ratio: Option<f64>,
    pub best_direction_ratio: Option<f64>,
    pub directions: usize,
    /// `analytic_floor (1 - 5/sqrt(trials)) <= empirical_rmse_p`.
    pub floor_holds: bool,
    pub ceiling_holds: bool,
}

fn lp_norm(p: PNorm, x: &DVector<f64>) -> f64 {
    p.exponent().norm_of(x.as_slice())
}

/// Monte Carlo estimate of the `l_p` error of the Gaussian mechanism on `X`,
/// using the draws `0..trials` of `seed`.
pub fn estimate_error(spec: &MechanismSpec, x: &Dataset, p: PNorm, trials: usize, seed: u64) -> Result<AuditReport> {
    if trials < MIN_TRIALS {
        return Err(Error::BadParams(format!("at least {MIN_TRIALS} trials are required, got {trials}")));
    }
    spec.validate()?;
    x.certify(&spec.domain)?;
    let d = x.dim();
    let a = spec.noise_shape.to_dmatrix() * spec.noise_scale();
    let squared: Vec<f64> = (0..trials as u64)
        .into_par_iter()
        .map(|i| {
            let noise = &a * gaussian_draw(seed, i, d);
            lp_norm(p, &noise).powi(2)
        })
        .collect();
    let t = trials as f64;
    let mean_sq = squared.iter().sum::<f64>() / t;
    let var_sq = squared.iter().map(|s| (s - mean_sq).powi(2)).sum::<f64>() / (t - 1.0);
    let rmse = mean_sq.sqrt();
    let rmse_std_error = if rmse > 0.0 { (var_sq / t).sqrt() / (2.0 * rmse) } else { 0.0 };

    let sigma = spec.covariance();
    let floor = trp(p.half(), &sigma)?.sqrt();
    let log_term = (2.0 * d as f64).ln();
    let growth = match p.exponent() {
        Exponent::Infinity => log_term,
        Exponent::Finite(pv) => pv.min(log_term),
    };
    let upper = C_AUDIT * growth.sqrt() * floor;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let directions = sample_directions(&spec.domain, &mut rng);
    let sd_scale = spec.noise_scale();
    let ratios: Vec<f64> = directions
        .iter()
        .filter_map(|theta| {
            let floor = hcr_floor(&spec.domain, theta, spec.n, spec.eps).ok()?;
            (floor > 0.0).then(|| sd_scale * spec.noise_shape.mul_vec(theta).norm() / floor)
        })
        .collect();
    let worst = ratios.iter().copied().reduce(f64::min);
    let best = ratios.iter().copied().reduce(f64::max);

    Ok(AuditReport {
        p,
        trials,
        seed,
        empirical_rmse_p: rmse,
        rmse_std_error,
        analytic_floor: floor,
        theorem_upper: upper,
        c_audit: C_AUDIT,
        worst_direction_ratio: worst,
        best_direction_ratio: best,
        directions: directions.len(),
        floor_holds: floor * (1.0 - 5.0 / t.sqrt()) <= rmse,
        ceiling_holds: rmse <= upper,
    })
}

/// Unit directions: uniform random ones, the coordinate axes, and the
/// normalized pairwise differences of a finite `K` (capped).
pub fn sample_directions<R: Rng + ?Sized>(k: &Domain, rng: &mut R) -> Vec<DVector<f64>> {
    let d = k.dim();
    let mut out = Vec::new();
    for _ in 0..RANDOM_DIRECTIONS {
        let g = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let norm = g.norm();
        if norm > 0.0 {
            out.push(g / norm);
        }
    }
    for i in 0..d {
        let mut e = DVector::zeros(d);
        e[i] = 1.0;
        out.push(e);
    }
    if let Some(points) = k.points() {
        'pairs: for i in 0..points.len() {
            for j in i + 1..points.len() {
                if out.len() >= RANDOM_DIRECTIONS + d + PAIR_DIRECTION_LIMIT {
                    break 'pairs;
                }
                let diff = &points[i] - &points[j];
                let norm = diff.norm();
                if norm > 0.0 {
                    out.push(diff / norm);
                }
            }
        }
    }
    out
}

/// Lower bound on the standard deviation of `theta^T M(X)` for any unbiased
/// `eps`-DP mechanism: mean gap `(1 - 0.01) w_K(theta) / (2n)` over the
/// square root of the chi-squared bound `e^{-eps}(e^eps - 1)^2`.
pub fn hcr_floor(k: &Domain, theta: &DVector<f64>, n: usize, eps: f64) -> Result<f64> {
    if theta.len() != k.dim() {
        return Err(Error::DimensionMismatch { expected: k.dim(), got: theta.len() });
    }
    if n == 0 || !(eps > 0.0) {
        return Err(Error::BadParams(format!("need n >= 1 and eps > 0, got n = {n}, eps = {eps}")));
    }
    let width = k.width(theta)?;
    let chi = ((-eps).exp() * eps.exp_m1().powi(2)).sqrt();
    Ok(width * (1.0 - FAR_POINT_MARGIN) / (2.0 * n as f64 * chi))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WidthReductionReport {
    /// `(x + v)^T (c^2 M_cov^{-1}) (x + v) <= 1` for every point.
    pub holds: bool,
    /// `sqrt(theta^T M_cov theta) >= c w_K(theta)` on every checked direction.
    pub hypothesis_holds: bool,
    /// `1 - max_x (x + v)^T Q (x + v)`; negative when the inclusion fails.
    pub worst_slack: f64,
    #[serde(with = "crate::linalg::vector_json")]
    pub center: DVector<f64>,
    /// The direction minimizing `sqrt(theta^T M_cov theta) / (c w_K(theta))`
    /// when the hypothesis fails.
    #[serde(with = "crate::linalg::vector_json::option")]
    pub violating_theta: Option<DVector<f64>>,
    pub directions: usize,
}

/// Center of the minimum enclosing ball of `ys`, by Frank-Wolfe on the dual.
fn enclosing_center(ys: &[DVector<f64>]) -> DVector<f64> {
    let n = ys.len();
    let sq: Vec<f64> = ys.iter().map(|y| y.norm_squared()).collect();
    let mut w = vec![1.0 / n as f64; n];
    let mut c = ys.iter().zip(&w).fold(DVector::zeros(ys[0].len()), |acc, (y, wi)| acc + y * *wi);
    for _ in 0..20_000 {
        let phi = w.iter().zip(&sq).map(|(a, b)| a * b).sum::<f64>() - c.norm_squared();
        let (j, far) = ys
            .iter()
            .enumerate()
            .map(|(i, y)| (i, (y - &c).norm_squared()))
            .fold((0, f64::NEG_INFINITY), |b, x| if x.1 > b.1 { x } else { b });
        if far <= phi * (1.0 + 1e-12) || far == 0.0 {
            break;
        }
        let tau = (far - phi) / (2.0 * far);
        for wi in w.iter_mut() {
            *wi *= 1.0 - tau;
        }
        w[j] += tau;
        c = &c * (1.0 - tau) + &ys[j] * tau;
    }
    c
}

/// Normals of hyperplanes through `d` points of `K`, when there are few enough subsets.
fn facet_normals(points: &[DVector<f64>], limit: usize) -> Vec<DVector<f64>> {
    let n = points.len();
    let d = points[0].len();
    if d < 2 || n < d {
        return Vec::new();
    }
    let mut count = 1.0_f64;
    for i in 0..d {
        count *= (n - i) as f64 / (i + 1) as f64;
    }
    if count > limit as f64 {
        return Vec::new();
    }
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..d).collect();
    loop {
        let diffs = DMatrix::from_fn(d - 1, d, |r, c| points[idx[r + 1]][c] - points[idx[0]][c]);
        let svd = diffs.transpose().svd(true, false);
        if let Some(u) = svd.u {
            // the left singular vector beyond the row space spans the normal
            let sv = &svd.singular_values;
            let rank = sv.iter().filter(|s| **s > 1e-10 * sv.max().max(1.0)).count();
            if rank == d - 1 && u.ncols() == d {
                out.push(u.column(d - 1).into_owned());
            }
        }
        // next combination
        let mut i = d;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if idx[i] != i + n - d {
                break;
            }
        }
        idx[i] += 1;
        for j in i + 1..d {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Checks that per-direction covariance dominance `sqrt(theta^T M theta) >=
/// c w_K(theta)` comes with the inclusion `K + v* inside (1/c) M^{1/2} B_2`.
pub fn width_reduction_check(k: &Domain, m_cov: &SymMatrix, c: f64) -> Result<WidthReductionReport> {
    if !(c > 0.0) {
        return Err(Error::BadParams(format!("c must be positive, got {c}")));
    }
    let points = k.points().ok_or(Error::UnsupportedVariant(k.variant_name()))?;
    if m_cov.dim() != k.dim() {
        return Err(Error::DimensionMismatch { expected: k.dim(), got: m_cov.dim() });
    }
    let q = m_cov.inverse_pd()?.scaled(c * c);
    let root = q.principal_sqrt()?;
    let ys: Vec<DVector<f64>> = points.iter().map(|x| root.mul_vec(x)).collect();
    let center_w = enclosing_center(&ys);
    let whitened_inv = root.inverse_pd()?;
    let worst = |v: &DVector<f64>| points.iter().map(|x| q.quad_form(&(x + v))).fold(0.0, f64::max);
    // candidates: the enclosing-ball center and -x_0
    let v_meb = -whitened_inv.mul_vec(&center_w);
    let v_anchor = -points[0].clone();
    let (center, max_q) = [v_meb, v_anchor]
        .into_iter()
        .map(|v| {
            let m = worst(&v);
            (v, m)
        })
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("two candidates");

    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut directions = sample_directions(k, &mut rng);
    directions.extend(facet_normals(points, 10_000));
    let mut worst_ratio = f64::INFINITY;
    let mut violating = None;
    for theta in &directions {
        let width = k.width(theta)?;
        if width <= 0.0 {
            continue;
        }
        let ratio = m_cov.quad_form(theta).max(0.0).sqrt() / (c * width);
        if ratio < worst_ratio {
            worst_ratio = ratio;
            violating = Some(theta.clone());
        }
    }
    let hypothesis_holds = worst_ratio >= 1.0;
    Ok(WidthReductionReport {
        holds: max_q <= 1.0 + 1e-9,
        hypothesis_holds,
        worst_slack: 1.0 - max_q,
        center,
        violating_theta: if hypothesis_holds { None } else { violating },
        directions: directions.len(),
    })
}
