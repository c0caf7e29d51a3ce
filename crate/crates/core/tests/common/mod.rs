//! Property checks shared by the proptest suite and the acceptance runner.
#![allow(dead_code)]

use gammap::domain::Domain;
use gammap::linalg::{trp, Exponent, PNorm, SymMatrix};
use gammap::solver::{separate_sk, separate_trp_sublevel, solve_gamma, GammaSolution, Separation, SolverConfig};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

pub type Check = Result<(), String>;

/// Relative accuracy used for the property solves.
pub const BETA_REL: f64 = 1e-6;

pub fn lambda0(k: &Domain, p: PNorm) -> f64 {
    let d = k.dim() as f64;
    let level = match p.half() {
        Exponent::Infinity => 1.0,
        Exponent::Finite(r) => d.powf(1.0 / r),
    };
    level * k.radius_bound().powi(2)
}

pub fn beta_for(k: &Domain, p: PNorm) -> f64 {
    (BETA_REL * lambda0(k, p)).max(1e-300)
}

/// Solves and checks the feasibility certificate on every point of `K`.
pub fn solve_checked(k: &Domain, p: PNorm) -> Result<GammaSolution, String> {
    let cfg = SolverConfig::default().with_beta(beta_for(k, p));
    let sol = solve_gamma(k, p, &cfg).map_err(|e| e.to_string())?;
    feasibility(k, &sol)?;
    Ok(sol)
}

/// `(x+v)^T M^{-1} (x+v) <= 1 + 1e-6` for every enumerable point.
pub fn feasibility(k: &Domain, sol: &GammaSolution) -> Check {
    if sol.lambda_star == 0.0 {
        return Ok(());
    }
    let worst = sol.max_containment(k).map_err(|e| e.to_string())?;
    if let Some(points) = k.points() {
        let minv = sol.covariance_shape.inverse_pd().map_err(|e| e.to_string())?;
        for (i, x) in points.iter().enumerate() {
            let q = minv.quad_form(&(x + &sol.shift));
            if q > 1.0 + 1e-6 {
                return Err(format!("point {i} has containment value {q}"));
            }
        }
    }
    if worst > 1.0 + 1e-6 {
        return Err(format!("oracle containment value {worst}"));
    }
    Ok(())
}

pub fn random_points<R: Rng>(rng: &mut R, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect()
}

pub fn random_psd<R: Rng>(rng: &mut R, d: usize) -> SymMatrix {
    let b = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
    SymMatrix::gram(&b)
}

pub fn random_p<R: Rng>(rng: &mut R) -> PNorm {
    match rng.random_range(0..4) {
        0 => PNorm::TWO,
        1 => PNorm::new(3.0).unwrap(),
        2 => PNorm::new(rng.random_range(2.0..12.0)).unwrap(),
        _ => PNorm::INFINITY,
    }
}

/// Non-negativity, absolute homogeneity and the triangle inequality of
/// `tr_r` on PSD matrices.
pub fn trp_axioms(a: &SymMatrix, b: &SymMatrix, t: f64, r: Exponent) -> Check {
    let va = trp(r, a).map_err(|e| e.to_string())?;
    let vb = trp(r, b).map_err(|e| e.to_string())?;
    let vab = trp(r, &a.add(b)).map_err(|e| e.to_string())?;
    let vt = trp(r, &a.scaled(t.abs())).map_err(|e| e.to_string())?;
    let scale = 1e-12 * (1.0 + va + vb);
    if va < 0.0 || vb < 0.0 {
        return Err("negative value".into());
    }
    if vab > va + vb + scale {
        return Err(format!("triangle: {vab} > {va} + {vb}"));
    }
    if (vt - t.abs() * va).abs() > 1e-12 * (1.0 + t.abs() * va) {
        return Err(format!("homogeneity: {vt} vs {}", t.abs() * va));
    }
    if va == 0.0 && a.frobenius_norm() > 1e-12 {
        return Err("zero value on a nonzero PSD matrix".into());
    }
    Ok(())
}

fn scaled_points(points: &[Vec<f64>], t: f64) -> Vec<Vec<f64>> {
    points.iter().map(|x| x.iter().map(|v| v * t).collect()).collect()
}

/// `lambda(tK) = t^2 lambda(K)` within the two solves' accuracies.
pub fn homogeneity(points: &[Vec<f64>], t: f64, p: PNorm) -> Check {
    let k = Domain::finite(points).map_err(|e| e.to_string())?;
    let tk = Domain::finite(&scaled_points(points, t)).map_err(|e| e.to_string())?;
    let a = solve_checked(&k, p)?;
    let b = solve_checked(&tk, p)?;
    let slack = beta_for(&tk, p) + t * t * beta_for(&k, p) + 1e-12;
    let diff = (b.lambda_star - t * t * a.lambda_star).abs();
    if diff > slack {
        return Err(format!("homogeneity t={t} p={p}: {} vs {} (slack {slack})", b.lambda_star, t * t * a.lambda_star));
    }
    Ok(())
}

/// `K subset L` implies `lambda(K) <= lambda(L) + 2 beta`.
pub fn monotonicity(points: &[Vec<f64>], extra: &[Vec<f64>], p: PNorm) -> Check {
    let k = Domain::finite(points).map_err(|e| e.to_string())?;
    let mut all = points.to_vec();
    all.extend_from_slice(extra);
    let l = Domain::finite(&all).map_err(|e| e.to_string())?;
    let a = solve_checked(&k, p)?;
    let b = solve_checked(&l, p)?;
    let slack = 2.0 * beta_for(&l, p).max(beta_for(&k, p));
    if a.lambda_star > b.lambda_star + slack {
        return Err(format!("monotonicity p={p}: {} > {}", a.lambda_star, b.lambda_star));
    }
    Ok(())
}

/// `Gamma(K + L) <= Gamma(K) + Gamma(L)` with `K + L` the pairwise sums.
pub fn triangle(kp: &[Vec<f64>], lp: &[Vec<f64>], p: PNorm) -> Check {
    let sums: Vec<Vec<f64>> = kp
        .iter()
        .flat_map(|x| lp.iter().map(move |y| x.iter().zip(y).map(|(a, b)| a + b).collect()))
        .collect();
    let k = Domain::finite(kp).map_err(|e| e.to_string())?;
    let l = Domain::finite(lp).map_err(|e| e.to_string())?;
    let s = Domain::finite(&sums).map_err(|e| e.to_string())?;
    let gk = solve_checked(&k, p)?;
    let gl = solve_checked(&l, p)?;
    let gs = solve_checked(&s, p)?;
    // beta bounds lambda = Gamma^2, so sqrt(beta) bounds each Gamma error
    let slack = beta_for(&k, p).sqrt() + beta_for(&l, p).sqrt() + beta_for(&s, p).sqrt();
    if gs.gamma_value > gk.gamma_value + gl.gamma_value + slack {
        return Err(format!("triangle p={p}: {} > {} + {}", gs.gamma_value, gk.gamma_value, gl.gamma_value));
    }
    Ok(())
}

/// A point set and its convex hull get the same value.
pub fn hull_invariance(points: &[Vec<f64>], p: PNorm) -> Check {
    let finite = Domain::finite(points).map_err(|e| e.to_string())?;
    let hull = Domain::polytope(points).map_err(|e| e.to_string())?;
    let a = solve_checked(&finite, p)?;
    let b = solve_checked(&hull, p)?;
    if a.gamma_value != b.gamma_value {
        return Err(format!("hull p={p}: {} vs {}", a.gamma_value, b.gamma_value));
    }
    Ok(())
}

/// One sublevel-set separation probe: an infeasible `M` and random points of
/// `lambda S_{p/2}` that must satisfy the emitted halfspace.
pub fn sublevel_soundness<R: Rng>(rng: &mut R, d: usize, p: PNorm, feasible_checks: usize) -> Check {
    let m = random_psd(rng, d).scaled(rng.random_range(0.5..4.0));
    let value = trp(p.half(), &m).map_err(|e| e.to_string())?;
    let lambda = value * rng.random_range(0.1..0.95);
    let Separation::Halfspace(h) = separate_trp_sublevel(&m, lambda, p) else {
        return Err("infeasible matrix reported inside".into());
    };
    let zero = DVector::zeros(d);
    if h.evaluate(&m, &zero) <= h.t {
        return Err("probe not separated".into());
    }
    for _ in 0..feasible_checks {
        let c = random_psd(rng, d);
        let cv = trp(p.half(), &c).map_err(|e| e.to_string())?;
        if cv == 0.0 {
            continue;
        }
        let f = c.scaled(lambda / cv * rng.random_range(0.0..=1.0));
        if h.evaluate(&f, &zero) > h.t + 1e-9 * lambda.max(1.0) {
            return Err(format!("feasible point cut: {} > {}", h.evaluate(&f, &zero), h.t));
        }
    }
    Ok(())
}

/// One containment separation probe on a random point set, checked against
/// random feasible `(M, v)`.
pub fn sk_soundness<R: Rng>(rng: &mut R, d: usize, n: usize, feasible_checks: usize) -> Check {
    let points = random_points(rng, n, d);
    let k = Domain::finite(&points).map_err(|e| e.to_string())?;
    let radius = k.radius_bound();
    let pts = k.points().unwrap().to_vec();
    let probe_m = random_psd(rng, d).scaled(0.05).shifted(1e-3);
    let probe_v = DVector::from_fn(d, |_, _| rng.random_range(-0.5..0.5));
    let h = match separate_sk(&probe_m, &probe_v, &k, radius).map_err(|e| e.to_string())? {
        Separation::Halfspace(h) => h,
        Separation::Inside => return Ok(()),
    };
    if h.evaluate(&probe_m, &probe_v) < h.t {
        return Err("probe not separated".into());
    }
    for _ in 0..feasible_checks {
        let v = DVector::from_fn(d, |_, _| rng.random_range(-0.5..0.5)) * (radius / (d as f64).sqrt());
        let base = random_psd(rng, d).shifted(0.05);
        let inv = base.inverse_pd().map_err(|e| e.to_string())?;
        let worst = pts.iter().map(|x| inv.quad_form(&(x + &v))).fold(0.0, f64::max);
        let m = base.scaled(worst * rng.random_range(1.0..3.0));
        if v.norm() > radius {
            continue;
        }
        if h.evaluate(&m, &v) > h.t + 1e-9 * (1.0 + h.t.abs()) {
            return Err("feasible pair cut off".into());
        }
    }
    Ok(())
}

/// The ±-closure of a point list.
pub fn symmetric_closure(points: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out = points.to_vec();
    out.extend(points.iter().map(|x| x.iter().map(|v| -v).collect::<Vec<_>>()));
    out
}

/// Points of `K` usable by the certifier: the set itself, vertices, or
/// boundary points.
pub fn certificate_set(k: &Domain) -> Domain {
    if let Some(points) = k.points() {
        return Domain::finite_from_vectors(points.to_vec()).unwrap();
    }
    let points = k.vertices(1 << 16).or_else(|| k.certificate_points(4096)).expect("certificate points");
    Domain::finite_from_vectors(points).unwrap()
}
