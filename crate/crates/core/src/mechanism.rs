//! The Gaussian noise mechanism `mu(X) + (2/(eps n)) A g`, privacy
//! accounting, and a biased-looking but unbiased two-point mechanism that
//! is exact on one dataset.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{Domain, MEMBERSHIP_TOL};
use crate::error::{Error, Result};
use crate::linalg::SymMatrix;
use crate::solver::GammaSolution;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum PrivacyParams {
    Zcdp { rho: f64 },
    ApproxDp { eps: f64, delta: f64 },
}

impl PrivacyParams {
    pub fn zcdp(rho: f64) -> Result<Self> {
        if !(rho >= 0.0) || !rho.is_finite() {
            return Err(Error::BadParams(format!("rho must be finite and non-negative, got {rho}")));
        }
        Ok(PrivacyParams::Zcdp { rho })
    }

    pub fn approx_dp(eps: f64, delta: f64) -> Result<Self> {
        if !(eps >= 0.0) || !eps.is_finite() {
            return Err(Error::BadParams(format!("eps must be finite and non-negative, got {eps}")));
        }
        check_delta(delta)?;
        Ok(PrivacyParams::ApproxDp { eps, delta })
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta < 1.0 {
        Ok(())
    } else {
        Err(Error::BadDelta(delta))
    }
}

/// `rho`-zCDP implies `(rho + 2 sqrt(rho ln(1/delta)), delta)`-DP.
pub fn account(params: PrivacyParams, target_delta: f64) -> Result<PrivacyParams> {
    check_delta(target_delta)?;
    match params {
        PrivacyParams::Zcdp { rho } => Ok(PrivacyParams::ApproxDp {
            eps: rho + 2.0 * (rho * (1.0 / target_delta).ln()).sqrt(),
            delta: target_delta,
        }),
        PrivacyParams::ApproxDp { .. } => Err(Error::BadParams("accounting expects a zCDP guarantee".into())),
    }
}

/// zCDP guarantees add under composition.
pub fn compose(a: PrivacyParams, b: PrivacyParams) -> Result<PrivacyParams> {
    match (a, b) {
        (PrivacyParams::Zcdp { rho: r1 }, PrivacyParams::Zcdp { rho: r2 }) => Ok(PrivacyParams::Zcdp { rho: r1 + r2 }),
        _ => Err(Error::BadParams("composition is defined here for zCDP guarantees only".into())),
    }
}

/// `l_2` sensitivity of the mean of `n` points pulled back into the unit ball.
pub fn sensitivity_check(_k: &Domain, n: usize) -> f64 {
    2.0 / n as f64
}

/// A dataset `X = (x_1, ..., x_n)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    #[serde(with = "crate::linalg::vector_json::list")]
    pub points: Vec<DVector<f64>>,
}

impl Dataset {
    pub fn new(points: Vec<DVector<f64>>) -> Result<Self> {
        let d = points.first().ok_or(Error::Empty("dataset has no points"))?.len();
        if let Some(bad) = points.iter().find(|x| x.len() != d) {
            return Err(Error::DimensionMismatch { expected: d, got: bad.len() });
        }
        Ok(Dataset { points })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(rows.iter().map(|r| DVector::from_column_slice(r)).collect())
    }

    /// Checks every point against `K`: exact membership where decidable,
    /// otherwise the radius bound.
    pub fn certify(&self, k: &Domain) -> Result<()> {
        if self.dim() != k.dim() {
            return Err(Error::DimensionMismatch { expected: k.dim(), got: self.dim() });
        }
        let radius = k.radius_bound();
        for (index, x) in self.points.iter().enumerate() {
            let inside = match k.contains(x, MEMBERSHIP_TOL) {
                Some(inside) => inside,
                None => x.norm() <= radius * (1.0 + MEMBERSHIP_TOL) + MEMBERSHIP_TOL,
            };
            if !inside {
                return Err(Error::PointOutsideDomain { index });
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    /// `mu(X)`.
    pub fn mean(&self) -> DVector<f64> {
        let mut sum = DVector::zeros(self.dim());
        for x in &self.points {
            sum += x;
        }
        sum / self.len() as f64
    }
}

/// Everything needed to run the Gaussian mechanism.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MechanismSpec {
    pub domain: Domain,
    pub n: usize,
    /// The mechanism is `eps^2/2`-zCDP.
    pub eps: f64,
    #[serde(rename = "A")]
    pub noise_shape: SymMatrix,
    #[serde(rename = "v", with = "crate::linalg::vector_json")]
    pub shift: DVector<f64>,
    pub rng_seed: u64,
}

impl MechanismSpec {
    pub fn new(domain: Domain, solution: &GammaSolution, n: usize, eps: f64, rng_seed: u64) -> Result<Self> {
        let spec = MechanismSpec {
            domain,
            n,
            eps,
            noise_shape: solution.noise_shape.clone(),
            shift: solution.shift.clone(),
            rng_seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::BadParams("n must be at least 1".into()));
        }
        if !(self.eps > 0.0) || !self.eps.is_finite() {
            return Err(Error::BadParams(format!("eps must be positive, got {}", self.eps)));
        }
        let d = self.domain.dim();
        for got in [self.noise_shape.dim(), self.shift.len()] {
            if got != d {
                return Err(Error::DimensionMismatch { expected: d, got });
            }
        }
        Ok(())
    }

    /// `2 / (eps n)`.
    pub fn noise_scale(&self) -> f64 {
        2.0 / (self.eps * self.n as f64)
    }

    /// `Sigma = (4 / (eps^2 n^2)) A A^T`.
    pub fn covariance(&self) -> SymMatrix {
        let a = self.noise_shape.to_dmatrix();
        let s = self.noise_scale();
        SymMatrix::from_dmatrix(&(&a * a.transpose() * (s * s)))
    }

    pub fn privacy(&self) -> PrivacyParams {
        PrivacyParams::Zcdp { rho: self.eps * self.eps / 2.0 }
    }
}

/// `d` standard normals from the ChaCha20 stream `index` of `seed`.
pub fn gaussian_draw(seed: u64, index: u64, d: usize) -> DVector<f64> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(index);
    DVector::from_fn(d, |_, _| rng.sample(StandardNormal))
}

fn checked_mean(spec: &MechanismSpec, x: &Dataset) -> Result<DVector<f64>> {
    spec.validate()?;
    x.certify(&spec.domain)?;
    Ok(x.mean())
}

/// One output `mu(X) + (2/(eps n)) A g` for draw number `index`.
pub fn run_gaussian(spec: &MechanismSpec, x: &Dataset, index: u64) -> Result<DVector<f64>> {
    let mean = checked_mean(spec, x)?;
    let a = spec.noise_shape.to_dmatrix();
    Ok(mean + a * gaussian_draw(spec.rng_seed, index, x.dim()) * spec.noise_scale())
}

/// Draws `0..draws`, computed in parallel and returned in index order.
pub fn run_gaussian_batch(spec: &MechanismSpec, x: &Dataset, draws: usize) -> Result<Vec<DVector<f64>>> {
    let mean = checked_mean(spec, x)?;
    let a = spec.noise_shape.to_dmatrix() * spec.noise_scale();
    let d = x.dim();
    Ok((0..draws as u64)
        .into_par_iter()
        .map(|i| &mean + &a * gaussian_draw(spec.rng_seed, i, d))
        .collect())
}

/// A law on two atoms.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoPointLaw {
    pub atoms: [DVector<f64>; 2],
    pub probs: [f64; 2],
}

impl TwoPointLaw {
    pub fn mean(&self) -> DVector<f64> {
        &self.atoms[0] * self.probs[0] + &self.atoms[1] * self.probs[1]
    }
}

/// Total variation between two finitely supported laws, merging equal atoms.
pub fn total_variation(a: &TwoPointLaw, b: &TwoPointLaw) -> f64 {
    let mut atoms: Vec<(&DVector<f64>, f64)> = Vec::new();
    for (law, sign) in [(a, 1.0), (b, -1.0)] {
        for (atom, &p) in law.atoms.iter().zip(&law.probs) {
            match atoms.iter_mut().find(|(y, _)| *y == atom) {
                Some(entry) => entry.1 += sign * p,
                None => atoms.push((atom, sign * p)),
            }
        }
    }
    0.5 * atoms.iter().map(|(_, m)| m.abs()).sum::<f64>()
}

/// The mechanism that outputs `mu(X0)` with probability `1 - delta` and
/// otherwise the atom that makes the expectation equal `mu(X)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Counterexample {
    anchor: DVector<f64>,
    delta: f64,
}

impl Counterexample {
    pub fn new(x0: &Dataset, delta: f64) -> Result<Self> {
        check_delta(delta)?;
        Ok(Counterexample { anchor: x0.mean(), delta })
    }

    /// The output law on `X`; the second atom is
    /// `mu(X0) + (mu(X) - mu(X0)) / delta = (mu(X) - (1 - delta) mu(X0)) / delta`.
    pub fn law(&self, x: &Dataset) -> Result<TwoPointLaw> {
        let mean = x.mean();
        if mean.len() != self.anchor.len() {
            return Err(Error::DimensionMismatch { expected: self.anchor.len(), got: mean.len() });
        }
        let far = &self.anchor + (mean - &self.anchor) / self.delta;
        Ok(TwoPointLaw { atoms: [self.anchor.clone(), far], probs: [1.0 - self.delta, self.delta] })
    }

    pub fn sample<R: Rng + ?Sized>(&self, x: &Dataset, rng: &mut R) -> Result<DVector<f64>> {
        let law = self.law(x)?;
        let [near, far] = law.atoms;
        Ok(if rng.random::<f64>() < self.delta { far } else { near })
    }
}

/// One draw of the two-point mechanism anchored at `X0`.
pub fn run_counterexample<R: Rng + ?Sized>(x0: &Dataset, delta: f64, x: &Dataset, rng: &mut R) -> Result<DVector<f64>> {
    Counterexample::new(x0, delta)?.sample(x, rng)
}
