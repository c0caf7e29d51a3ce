//! Separation oracles for the trace-norm sublevel set and for the set of
//! `(M, v)` whose ellipsoid contains a translate of `K`.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::domain::Domain;
use crate::error::{Error, Result};
use crate::linalg::{trp, Exponent, PNorm, SymMatrix};

/// The halfspace `{(M', v') : <X, M'> + <u, v'> <= t}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Halfspace {
    pub x: SymMatrix,
    #[serde(with = "crate::linalg::vector_json")]
    pub u: DVector<f64>,
    pub t: f64,
}

impl Halfspace {
    pub fn evaluate(&self, m: &SymMatrix, v: &DVector<f64>) -> f64 {
        self.x.inner(m) + self.u.dot(v)
    }

    /// True iff `(m, v)` satisfies the inequality.
    pub fn contains(&self, m: &SymMatrix, v: &DVector<f64>) -> bool {
        self.evaluate(m, v) <= self.t
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Separation {
    Inside,
    Halfspace(Halfspace),
}

impl Separation {
    pub fn is_inside(&self) -> bool {
        matches!(self, Separation::Inside)
    }

    pub fn halfspace(&self) -> Option<&Halfspace> {
        match self {
            Separation::Inside => None,
            Separation::Halfspace(h) => Some(h),
        }
    }
}

/// `{w^T M' w >= 0}` for the eigenvector `w` of the most negative eigenvalue,
/// when that eigenvalue is below `-tol`.
pub(crate) fn psd_cut(m: &SymMatrix, tol: f64) -> Option<(Halfspace, f64)> {
    let (values, vectors) = m.eigen();
    let min = *values.first()?;
    if min >= -tol {
        return None;
    }
    let w = vectors.column(0).into_owned();
    let h = Halfspace {
        x: SymMatrix::outer(&w).scaled(-1.0),
        u: DVector::zeros(m.dim()),
        t: 0.0,
    };
    Some((h, min))
}

/// The gradient halfspace of the sublevel set `{tr_{p/2}(M') <= lambda}` at
/// a PSD point `m`, whether or not `m` lies in it.
///
/// For finite `p` this is the gradient inequality of
/// `M' -> tr_{p/2}(M')^{p/2}` divided through by `lambda^{(p-2)/2}`, so
/// large `p` does not overflow.
pub(crate) fn sublevel_halfspace(m: &SymMatrix, lambda: f64, p: PNorm) -> Halfspace {
    let d = m.dim();
    let diag: Vec<f64> = m.diagonal().into_iter().map(|x| x.max(0.0)).collect();
    let u = DVector::zeros(d);
    match p.half() {
        Exponent::Infinity => {
            let mut best = 0;
            for (i, &x) in diag.iter().enumerate() {
                if x > diag[best] {
                    best = i;
                }
            }
            let mut x = SymMatrix::zeros(d);
            x.set(best, best, 1.0);
            Halfspace { x, u, t: lambda }
        }
        Exponent::Finite(r) => {
            let weights: Vec<f64> = diag.iter().map(|&m_ii| r * (m_ii / lambda).powf(r - 1.0)).collect();
            // phi(M)/lambda^{r-1} with phi = sum m_ii^r
            let scaled_power: f64 = diag.iter().map(|&m_ii| lambda * (m_ii / lambda).powf(r)).sum();
            let x = SymMatrix::from_diagonal(&weights);
            let t = x.inner(m) + lambda - scaled_power;
            Halfspace { x, u, t }
        }
    }
}

/// Separation oracle for `{M PSD : tr_{p/2}(M) <= lambda}`.
pub fn separate_trp_sublevel(m: &SymMatrix, lambda: f64, p: PNorm) -> Separation {
    if let Some((h, _)) = psd_cut(m, m.psd_tol()) {
        return Separation::Halfspace(h);
    }
    let value = trp(p.half(), m).unwrap_or(f64::INFINITY);
    if value > lambda {
        Separation::Halfspace(sublevel_halfspace(m, lambda, p))
    } else {
        Separation::Inside
    }
}

/// The containment cut for `(M, v)` given `M^{-1}` and an oracle answer
/// `x` with `f = (x+v)^T M^{-1} (x+v) > 1`.
pub(crate) fn containment_halfspace(m: &SymMatrix, minv: &SymMatrix, v: &DVector<f64>, x: &DVector<f64>, f: f64) -> Halfspace {
    let y = minv.mul_vec(&(x + v));
    let hx = SymMatrix::outer(&y).scaled(-1.0);
    let u = y * 2.0;
    let t = hx.inner(m) + u.dot(v) + 1.0 - f;
    Halfspace { x: hx, u, t }
}

/// Separation oracle for the constraints `M` PD, `||v|| <= R` and
/// `(x+v)^T M^{-1} (x+v) <= 1` for all `x` in `K`.
pub fn separate_sk(m: &SymMatrix, v: &DVector<f64>, k: &Domain, radius: f64) -> Result<Separation> {
    let d = k.dim();
    if m.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, got: m.dim() });
    }
    if v.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: v.len() });
    }
    if let Some((h, _)) = psd_cut(m, 0.0) {
        return Ok(Separation::Halfspace(h));
    }
    let Some(minv) = cholesky_inverse(m) else {
        // PSD but numerically singular
        let (_, vectors) = m.eigen();
        let w = vectors.column(0).into_owned();
        return Ok(Separation::Halfspace(Halfspace {
            x: SymMatrix::outer(&w).scaled(-1.0),
            u: DVector::zeros(d),
            t: 0.0,
        }));
    };
    let norm = v.norm();
    if norm > radius {
        return Ok(Separation::Halfspace(Halfspace {
            x: SymMatrix::zeros(d),
            u: v / norm,
            t: radius,
        }));
    }
    let answer = k.quadratic_oracle(&minv, v)?;
    if answer.value > 1.0 {
        Ok(Separation::Halfspace(containment_halfspace(m, &minv, v, &answer.witness, answer.value)))
    } else {
        Ok(Separation::Inside)
    }
}

/// `M^{-1}` by Cholesky, without an eigenvalue threshold.
pub(crate) fn cholesky_inverse(m: &SymMatrix) -> Option<SymMatrix> {
    let inv = m.to_dmatrix().cholesky()?.inverse();
    inv.iter().all(|x| x.is_finite()).then(|| SymMatrix::from_dmatrix(&inv))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_inside_trace_ball() {
        let s = separate_trp_sublevel(&SymMatrix::identity(3), 4.0, PNorm::TWO);
        assert!(s.is_inside());
    }

    #[test]
    fn indefinite_input_is_cut_from_psd_cone() {
        let m = SymMatrix::from_diagonal(&[1.0, -1.0]);
        for lambda in [0.5, 10.0] {
            let h = separate_trp_sublevel(&m, lambda, PNorm::TWO).halfspace().cloned().unwrap();
            let zero = DVector::zeros(2);
            assert!(!h.contains(&m, &zero));
            assert!(h.contains(&SymMatrix::identity(2), &zero));
        }
    }

    fn random_psd(rng: &mut ChaCha8Rng, d: usize) -> SymMatrix {
        let b = nalgebra::DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
        SymMatrix::gram(&b)
    }

    fn sublevel_sweep(p: PNorm, m: SymMatrix, lambda: f64, seed: u64) {
        let h = separate_trp_sublevel(&m, lambda, p).halfspace().cloned().unwrap();
        let zero = DVector::zeros(m.dim());
        assert!(h.evaluate(&m, &zero) > h.t);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut checked = 0;
        while checked < 1000 {
            let cand = random_psd(&mut rng, m.dim());
            let value = trp(p.half(), &cand).unwrap();
            if value == 0.0 {
                continue;
            }
            // rescale into the sublevel set, sometimes onto its boundary
            let s = if checked % 4 == 0 { 1.0 } else { rng.random_range(0.0..1.0) };
            let feasible = cand.scaled(s * lambda / value);
            assert!(h.evaluate(&feasible, &zero) <= h.t + 1e-9 * lambda, "cut feasible point");
            checked += 1;
        }
    }

    #[test]
    fn sublevel_cut_is_sound() {
        sublevel_sweep(PNorm::TWO, SymMatrix::identity(2).scaled(2.0), 1.0, 1);
        sublevel_sweep(PNorm::new(3.0).unwrap(), random_psd(&mut ChaCha8Rng::seed_from_u64(5), 3).scaled(4.0), 1.0, 2);
        sublevel_sweep(PNorm::INFINITY, SymMatrix::from_diagonal(&[3.0, 3.0, 1.0]), 2.0, 3);
        sublevel_sweep(PNorm::new(40.0).unwrap(), SymMatrix::from_diagonal(&[30.0, 2.0]), 5.0, 4);
    }

    #[test]
    fn infinity_ties_pick_lowest_index() {
        let h = sublevel_halfspace(&SymMatrix::from_diagonal(&[1.0, 3.0, 3.0]), 2.0, PNorm::INFINITY);
        assert_eq!(h.x.get(1, 1), 1.0);
        assert_eq!(h.x.get(2, 2), 0.0);
    }

    #[test]
    fn sk_examples() {
        let ball = Domain::ball(2, 1.0).unwrap();
        let zero = DVector::zeros(2);
        assert!(separate_sk(&SymMatrix::identity(2), &zero, &ball, 1.0).unwrap().is_inside());
        let far = Domain::finite(&[vec![2.0, 0.0]]).unwrap();
        let s = separate_sk(&SymMatrix::identity(2), &zero, &far, 2.0).unwrap();
        let h = s.halfspace().unwrap();
        assert!(h.evaluate(&SymMatrix::identity(2), &zero) > h.t);
        let v = DVector::from_column_slice(&[3.0, 4.0]);
        let h = separate_sk(&SymMatrix::identity(2), &v, &far, 2.0).unwrap().halfspace().cloned().unwrap();
        assert_eq!(h.t, 2.0);
        assert!((h.u[0] - 0.6).abs() < 1e-15);
    }

    #[test]
    fn sk_cut_never_removes_feasible_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let points: Vec<Vec<f64>> = (0..5).map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let k = Domain::finite(&points).unwrap();
        let radius = k.radius_bound();
        let pts = k.points().unwrap().to_vec();
        let mut checked = 0;
        while checked < 500 {
            // an infeasible probe (small M, random shift)
            let probe_m = random_psd(&mut rng, 3).scaled(0.1).shifted(1e-3);
            let probe_v = DVector::from_fn(3, |_, _| rng.random_range(-0.5..0.5));
            let Separation::Halfspace(h) = separate_sk(&probe_m, &probe_v, &k, radius).unwrap() else {
                continue;
            };
            assert!(h.evaluate(&probe_m, &probe_v) > h.t - 1e-12);
            // a random feasible pair: enlarge a random PD matrix until it contains K + v
            let v = DVector::from_fn(3, |_, _| rng.random_range(-0.3..0.3));
            let base = random_psd(&mut rng, 3).shifted(0.05);
            let inv = base.inverse_pd().unwrap();
            let worst = pts.iter().map(|x| inv.quad_form(&(x + &v))).fold(0.0, f64::max);
            let m = base.scaled(worst * rng.random_range(1.0..2.0));
            assert!(h.evaluate(&m, &v) <= h.t + 1e-9 * (1.0 + h.t.abs()), "feasible pair cut off");
            checked += 1;
        }
    }
}
