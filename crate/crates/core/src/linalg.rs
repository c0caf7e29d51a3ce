//! Dense symmetric matrices and the diagonal `tr_r` functional.
//!
//! [`SymMatrix`] stores only the lower triangle, so symmetry holds bit-exactly
//! by construction. Decompositions go through `nalgebra`.

use std::fmt;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Default relative tolerance used by [`SymMatrix::psd_tol`].
pub const PSD_REL_TOL: f64 = 1e-9;
/// Eigenvalue floor below which a matrix is not treated as positive definite.
pub const PD_TOL: f64 = 1e-10;

/// An exponent in `[1, inf]`, with infinity kept as a distinct tag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Exponent {
    Finite(f64),
    Infinity,
}

impl Exponent {
    pub fn new(r: f64) -> Result<Self> {
        if r.is_infinite() && r > 0.0 {
            Ok(Exponent::Infinity)
        } else if r.is_finite() && r >= 1.0 {
            Ok(Exponent::Finite(r))
        } else {
            Err(Error::BadParams(format!("exponent {r} outside [1, inf]")))
        }
    }

    pub fn value(self) -> f64 {
        match self {
            Exponent::Finite(r) => r,
            Exponent::Infinity => f64::INFINITY,
        }
    }

    /// `1/r`, zero for infinity.
    pub fn recip(self) -> f64 {
        match self {
            Exponent::Finite(r) => 1.0 / r,
            Exponent::Infinity => 0.0,
        }
    }

    /// The `l_r` norm of a non-negative vector.
    pub fn norm_of(self, xs: &[f64]) -> f64 {
        match self {
            Exponent::Infinity => xs.iter().fold(0.0_f64, |m, &x| m.max(x.abs())),
            Exponent::Finite(r) if r == 1.0 => xs.iter().map(|x| x.abs()).sum(),
            Exponent::Finite(r) if r == 2.0 => xs.iter().map(|x| x * x).sum::<f64>().sqrt(),
            Exponent::Finite(r) => {
                // scale by the max entry so large r does not overflow
                let m = xs.iter().fold(0.0_f64, |m, &x| m.max(x.abs()));
                if m == 0.0 {
                    return 0.0;
                }
                let s: f64 = xs.iter().map(|x| (x.abs() / m).powf(r)).sum();
                m * s.powf(1.0 / r)
            }
        }
    }
}

/// The error norm `l_p`, `p` in `[2, inf]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PNorm(Exponent);

impl PNorm {
    pub const TWO: PNorm = PNorm(Exponent::Finite(2.0));
    pub const INFINITY: PNorm = PNorm(Exponent::Infinity);

    pub fn new(p: f64) -> Result<Self> {
        if p.is_nan() || p < 2.0 {
            return Err(Error::InvalidP(p));
        }
        Ok(PNorm(Exponent::new(p).map_err(|_| Error::InvalidP(p))?))
    }

    pub fn exponent(self) -> Exponent {
        self.0
    }

    pub fn value(self) -> f64 {
        self.0.value()
    }

    pub fn is_infinite(self) -> bool {
        matches!(self.0, Exponent::Infinity)
    }

    /// `p/2`, the exponent applied to covariance diagonals.
    pub fn half(self) -> Exponent {
        match self.0 {
            Exponent::Finite(p) => Exponent::Finite(p / 2.0),
            Exponent::Infinity => Exponent::Infinity,
        }
    }

    /// `q = p/(p-2)`: infinity at `p = 2`, one at `p = inf`.
    pub fn dual_q(self) -> Exponent {
        match self.0 {
            Exponent::Finite(p) if p == 2.0 => Exponent::Infinity,
            Exponent::Finite(p) => Exponent::Finite(p / (p - 2.0)),
            Exponent::Infinity => Exponent::Finite(1.0),
        }
    }

    /// Parses `"2"`, `"3.5"`, `"inf"` or `"infinity"`.
    pub fn parse(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_lowercase();
        if t == "inf" || t == "infinity" {
            return Ok(PNorm::INFINITY);
        }
        let p: f64 = t
            .parse()
            .map_err(|_| Error::BadParams(format!("cannot parse p from `{s}`")))?;
        PNorm::new(p)
    }
}

impl fmt::Display for PNorm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            Exponent::Finite(p) => write!(f, "{p}"),
            Exponent::Infinity => write!(f, "inf"),
        }
    }
}

impl Serialize for PNorm {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self.0 {
            Exponent::Finite(p) => s.serialize_f64(p),
            Exponent::Infinity => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for PNorm {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        let parsed = match Raw::deserialize(d)? {
            Raw::Num(p) => PNorm::new(p),
            Raw::Str(s) => PNorm::parse(&s),
        };
        parsed.map_err(serde::de::Error::custom)
    }
}

/// Dense symmetric `dim x dim` matrix, lower triangle stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    dim: usize,
    lower: Vec<f64>,
}

#[inline]
fn tri_index(i: usize, j: usize) -> usize {
    let (r, c) = if i >= j { (i, j) } else { (j, i) };
    r * (r + 1) / 2 + c
}

impl SymMatrix {
    pub fn zeros(dim: usize) -> Self {
        SymMatrix {
            dim,
            lower: vec![0.0; dim * (dim + 1) / 2],
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_diagonal(&vec![1.0; dim])
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &x) in diag.iter().enumerate() {
            m.set(i, i, x);
        }
        m
    }

    /// Builds from a row-major lower triangle of length `dim(dim+1)/2`.
    pub fn from_lower(dim: usize, lower: Vec<f64>) -> Result<Self> {
        let expected = dim * (dim + 1) / 2;
        if lower.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                got: lower.len(),
            });
        }
        Ok(SymMatrix { dim, lower })
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut lower = Vec::with_capacity(dim * (dim + 1) / 2);
        for i in 0..dim {
            for j in 0..=i {
                lower.push(f(i, j));
            }
        }
        SymMatrix { dim, lower }
    }

    /// Symmetrizes a square matrix as `(M + M^T)/2`.
    pub fn from_dmatrix(m: &DMatrix<f64>) -> Self {
        assert_eq!(m.nrows(), m.ncols(), "matrix must be square");
        Self::from_fn(m.nrows(), |i, j| 0.5 * (m[(i, j)] + m[(j, i)]))
    }

    /// `B B^T` for any (possibly rectangular) `B`.
    pub fn gram(b: &DMatrix<f64>) -> Self {
        Self::from_dmatrix(&(b * b.transpose()))
    }

    /// Outer product `x x^T`.
    pub fn outer(x: &DVector<f64>) -> Self {
        Self::from_fn(x.len(), |i, j| x[i] * x[j])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.lower[tri_index(i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.lower[tri_index(i, j)] = value;
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self.get(i, i)).collect()
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.dim, self.dim, |i, j| self.get(i, j))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.inner(self).sqrt()
    }

    /// Frobenius inner product `<self, other>`.
    pub fn inner(&self, other: &SymMatrix) -> f64 {
        assert_eq!(self.dim, other.dim);
        let mut s = 0.0;
        for i in 0..self.dim {
            for j in 0..=i {
                let w = if i == j { 1.0 } else { 2.0 };
                s += w * self.get(i, j) * other.get(i, j);
            }
        }
        s
    }

    pub fn scaled(&self, t: f64) -> SymMatrix {
        SymMatrix {
            dim: self.dim,
            lower: self.lower.iter().map(|x| x * t).collect(),
        }
    }

    pub fn add(&self, other: &SymMatrix) -> SymMatrix {
        assert_eq!(self.dim, other.dim);
        SymMatrix {
            dim: self.dim,
            lower: self.lower.iter().zip(&other.lower).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn sub(&self, other: &SymMatrix) -> SymMatrix {
        self.add(&other.scaled(-1.0))
    }

    /// `self + t I`.
    pub fn shifted(&self, t: f64) -> SymMatrix {
        let mut m = self.clone();
        for i in 0..self.dim {
            let x = m.get(i, i);
            m.set(i, i, x + t);
        }
        m
    }

    pub fn mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        assert_eq!(x.len(), self.dim);
        DVector::from_fn(self.dim, |i, _| (0..self.dim).map(|j| self.get(i, j) * x[j]).sum())
    }

    /// `x^T M x`.
    pub fn quad_form(&self, x: &DVector<f64>) -> f64 {
        x.dot(&self.mul_vec(x))
    }

    /// Congruence `B^T M B` for a `dim x k` matrix `B`.
    pub fn congruence(&self, b: &DMatrix<f64>) -> SymMatrix {
        SymMatrix::from_dmatrix(&(b.transpose() * self.to_dmatrix() * b))
    }

    pub fn is_finite(&self) -> bool {
        self.lower.iter().all(|x| x.is_finite())
    }

    /// Default PSD tolerance `1e-9 * max(1, ||M||_F)`.
    pub fn psd_tol(&self) -> f64 {
        PSD_REL_TOL * self.frobenius_norm().max(1.0)
    }

    /// Eigenvalues in ascending order with matching eigenvector columns.
    pub fn eigen(&self) -> (Vec<f64>, DMatrix<f64>) {
        let d = self.dim;
        if d == 0 {
            return (Vec::new(), DMatrix::zeros(0, 0));
        }
        let eig = SymmetricEigen::new(self.to_dmatrix());
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
        let vectors = DMatrix::from_fn(d, d, |i, c| eig.eigenvectors[(i, order[c])]);
        (values, vectors)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigen().0.first().copied().unwrap_or(0.0)
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigen().0.last().copied().unwrap_or(0.0)
    }

    /// True iff the minimum eigenvalue is at least `-tol` (default [`Self::psd_tol`]).
    pub fn psd_check(&self, tol: Option<f64>) -> bool {
        let tol = tol.unwrap_or_else(|| self.psd_tol());
        self.min_eigenvalue() >= -tol
    }

    /// Rebuilds `V f(diag) V^T` from an eigendecomposition.
    fn spectral_map(vectors: &DMatrix<f64>, values: &[f64], f: impl Fn(f64) -> f64) -> SymMatrix {
        let d = values.len();
        let mut scaled = vectors.clone();
        for (c, &l) in values.iter().enumerate() {
            let s = f(l);
            for i in 0..d {
                scaled[(i, c)] *= s;
            }
        }
        SymMatrix::from_dmatrix(&(scaled * vectors.transpose()))
    }

    /// Principal square root; eigenvalues in `[-tol, 0]` are clamped to zero.
    pub fn principal_sqrt(&self) -> Result<SymMatrix> {
        let tol = self.psd_tol();
        let (values, vectors) = self.eigen();
        if let Some(&min) = values.first() {
            if min < -tol {
                return Err(Error::NotPsd { min_eigenvalue: min });
            }
        }
        Ok(Self::spectral_map(&vectors, &values, |l| l.max(0.0).sqrt()))
    }

    /// Pseudo-inverse square root on the range, with eigenvalues below
    /// `floor` dropped.
    pub fn pinv_sqrt(&self, floor: f64) -> SymMatrix {
        let (values, vectors) = self.eigen();
        Self::spectral_map(&vectors, &values, |l| if l > floor { 1.0 / l.sqrt() } else { 0.0 })
    }

    /// `tr(M^{1/2})`; eigenvalues at rounding level relative to the top one
    /// count as zero.
    pub fn trace_sqrt(&self) -> f64 {
        let values = self.eigen().0;
        let top = values.last().copied().unwrap_or(0.0);
        let noise = 64.0 * self.dim as f64 * f64::EPSILON * top.abs();
        values.iter().filter(|&&l| l > noise).map(|l| l.sqrt()).sum()
    }

    /// Inverse of a positive definite matrix via Cholesky.
    pub fn inverse_pd(&self) -> Result<SymMatrix> {
        let min = self.min_eigenvalue();
        if min <= PD_TOL {
            return Err(Error::NotPd { min_eigenvalue: min });
        }
        let chol = self
            .to_dmatrix()
            .cholesky()
            .ok_or(Error::NotPd { min_eigenvalue: min })?;
        Ok(SymMatrix::from_dmatrix(&chol.inverse()))
    }
}

/// `tr_r(M)`: the `l_r` norm of the diagonal of a PSD matrix.
///
/// Diagonal entries in `[-tol, 0)` are clamped to zero; anything more
/// negative is reported as [`Error::NegativeDiagonal`].
pub fn trp(r: Exponent, m: &SymMatrix) -> Result<f64> {
    let tol = m.psd_tol();
    let mut diag = m.diagonal();
    for (i, x) in diag.iter_mut().enumerate() {
        if *x < -tol {
            return Err(Error::NegativeDiagonal { index: i, value: *x });
        }
        *x = x.max(0.0);
    }
    Ok(r.norm_of(&diag))
}

#[derive(Serialize, Deserialize)]
struct SymMatrixJson {
    dim: usize,
    lower: Vec<f64>,
}

impl Serialize for SymMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        SymMatrixJson {
            dim: self.dim,
            lower: self.lower.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for SymMatrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = SymMatrixJson::deserialize(d)?;
        SymMatrix::from_lower(raw.dim, raw.lower).map_err(serde::de::Error::custom)
    }
}

/// Serde adapters writing vectors as plain JSON arrays.
pub mod vector_json {
    use nalgebra::DVector;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &DVector<f64>, s: S) -> Result<S::Ok, S::Error> {
        v.as_slice().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DVector<f64>, D::Error> {
        Ok(DVector::from_vec(Vec::<f64>::deserialize(d)?))
    }

    pub mod list {
        use super::*;

        pub fn serialize<S: Serializer>(v: &[DVector<f64>], s: S) -> Result<S::Ok, S::Error> {
            s.collect_seq(v.iter().map(|x| x.as_slice()))
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<DVector<f64>>, D::Error> {
            Ok(Vec::<Vec<f64>>::deserialize(d)?.into_iter().map(DVector::from_vec).collect())
        }
    }

    pub mod option {
        use super::*;

        pub fn serialize<S: Serializer>(v: &Option<DVector<f64>>, s: S) -> Result<S::Ok, S::Error> {
            v.as_ref().map(|x| x.as_slice()).serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<DVector<f64>>, D::Error> {
            Ok(Option::<Vec<f64>>::deserialize(d)?.map(DVector::from_vec))
        }
    }
}

/// Converts a list of rows into a dense matrix, checking the shape.
pub fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if let Some(bad) = rows.iter().find(|r| r.len() != ncols) {
        return Err(Error::DimensionMismatch {
            expected: ncols,
            got: bad.len(),
        });
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

pub fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

/// Spectral norm of a rectangular matrix.
pub fn operator_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    SymMatrix::gram(m).max_eigenvalue().max(0.0).sqrt()
}
