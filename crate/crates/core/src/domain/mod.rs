//! Bounded domains `K` in `R^d`.
//!
//! Every variant exposes its support function, width, a radius bound and an
//! exact quadratic-maximization oracle (see [`oracle`]).

pub mod oracle;

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::linalg::{matrix_from_rows, matrix_to_rows, operator_norm, SymMatrix};

pub use oracle::OracleAnswer;

/// Boxes with more than `2^VERTEX_ENUM_LIMIT` vertices have no exact oracle.
pub const VERTEX_ENUM_LIMIT: u32 = 22;

/// Coordinate tolerance used when detecting `K = -K` for point sets.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Tolerance for finite-set membership (nearest point).
pub const MEMBERSHIP_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum DomainKind {
    FiniteSet { points: Vec<DVector<f64>> },
    VertexPolytope { vertices: Vec<DVector<f64>> },
    Box { lo: DVector<f64>, hi: DVector<f64> },
    /// `{A y + u : ||y||_2 <= 1}`; `A` may be rectangular (`d x k`).
    Ellipsoid { shape: DMatrix<f64>, center: DVector<f64> },
    AffineImage { map: DMatrix<f64>, inner: Box<Domain> },
    Product { left: Box<Domain>, right: Box<Domain> },
}

/// A validated bounded domain.
#[derive(Debug, Clone, PartialEq)]
pub struct Domain {
    kind: DomainKind,
    dim: usize,
    symmetric: bool,
}

fn check_points(points: &[Vec<f64>], what: &'static str) -> Result<Vec<DVector<f64>>> {
    let first = points.first().ok_or(Error::Empty(what))?;
    let d = first.len();
    if d == 0 {
        return Err(Error::InvalidDomain(format!("{what} have dimension 0")));
    }
    points
        .iter()
        .map(|p| {
            if p.len() != d {
                return Err(Error::DimensionMismatch { expected: d, got: p.len() });
            }
            if p.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidDomain(format!("{what} contain non-finite values")));
            }
            Ok(DVector::from_column_slice(p))
        })
        .collect()
}

fn quantize(x: &DVector<f64>, sign: f64) -> Vec<i128> {
    x.iter().map(|&c| (sign * c / SYMMETRY_TOL).round() as i128).collect()
}

/// Detects `S = -S` up to [`SYMMETRY_TOL`] in every coordinate.
pub fn is_symmetric_set(points: &[DVector<f64>]) -> bool {
    let mut index: HashMap<Vec<i128>, usize> = HashMap::with_capacity(points.len());
    for (i, p) in points.iter().enumerate() {
        index.entry(quantize(p, 1.0)).or_insert(i);
    }
    points.iter().all(|p| {
        if index.contains_key(&quantize(p, -1.0)) {
            return true;
        }
        // rounding can split a true match across grid cells
        points
            .iter()
            .any(|q| q.iter().zip(p.iter()).all(|(a, b)| (a + b).abs() <= SYMMETRY_TOL))
    })
}

impl Domain {
    fn from_kind(kind: DomainKind) -> Result<Self> {
        let (dim, symmetric) = match &kind {
            DomainKind::FiniteSet { points } | DomainKind::VertexPolytope { vertices: points } => {
                let d = points.first().ok_or(Error::Empty("points"))?.len();
                (d, is_symmetric_set(points))
            }
            DomainKind::Box { lo, hi } => {
                if lo.len() != hi.len() {
                    return Err(Error::DimensionMismatch { expected: lo.len(), got: hi.len() });
                }
                for i in 0..lo.len() {
                    if !(lo[i] <= hi[i]) || !lo[i].is_finite() || !hi[i].is_finite() {
                        return Err(Error::BadBox { index: i, lo: lo[i], hi: hi[i] });
                    }
                }
                let sym = lo.iter().zip(hi.iter()).all(|(a, b)| (a + b).abs() <= SYMMETRY_TOL);
                (lo.len(), sym)
            }
            DomainKind::Ellipsoid { shape, center } => {
                if shape.nrows() != center.len() {
                    return Err(Error::DimensionMismatch {
                        expected: shape.nrows(),
                        got: center.len(),
                    });
                }
                if shape.iter().chain(center.iter()).any(|x| !x.is_finite()) {
                    return Err(Error::InvalidDomain("ellipsoid has non-finite entries".into()));
                }
                (center.len(), center.iter().all(|c| c.abs() <= SYMMETRY_TOL))
            }
            DomainKind::AffineImage { map, inner } => {
                if map.ncols() != inner.dim {
                    return Err(Error::DimensionMismatch { expected: inner.dim, got: map.ncols() });
                }
                if map.iter().any(|x| !x.is_finite()) {
                    return Err(Error::InvalidDomain("affine map has non-finite entries".into()));
                }
                (map.nrows(), inner.symmetric)
            }
            DomainKind::Product { left, right } => (left.dim + right.dim, left.symmetric && right.symmetric),
        };
        if dim == 0 {
            return Err(Error::InvalidDomain("dimension must be positive".into()));
        }
        Ok(Domain { kind, dim, symmetric })
    }

    pub fn finite(points: &[Vec<f64>]) -> Result<Self> {
        Self::from_kind(DomainKind::FiniteSet {
            points: check_points(points, "points")?,
        })
    }

    pub fn finite_from_vectors(points: Vec<DVector<f64>>) -> Result<Self> {
        let rows: Vec<Vec<f64>> = points.iter().map(|p| p.iter().copied().collect()).collect();
        Self::finite(&rows)
    }

    pub fn polytope(vertices: &[Vec<f64>]) -> Result<Self> {
        Self::from_kind(DomainKind::VertexPolytope {
            vertices: check_points(vertices, "vertices")?,
        })
    }

    pub fn cuboid(lo: &[f64], hi: &[f64]) -> Result<Self> {
        Self::from_kind(DomainKind::Box {
            lo: DVector::from_column_slice(lo),
            hi: DVector::from_column_slice(hi),
        })
    }

    /// The cube `[a, b]^d`.
    pub fn cube(d: usize, a: f64, b: f64) -> Result<Self> {
        Self::cuboid(&vec![a; d], &vec![b; d])
    }

    pub fn ellipsoid(shape: DMatrix<f64>, center: DVector<f64>) -> Result<Self> {
        Self::from_kind(DomainKind::Ellipsoid { shape, center })
    }

    /// The Euclidean ball `r B_2^d`.
    pub fn ball(d: usize, r: f64) -> Result<Self> {
        Self::ellipsoid(DMatrix::identity(d, d) * r, DVector::zeros(d))
    }

    pub fn affine(map: DMatrix<f64>, inner: Domain) -> Result<Self> {
        Self::from_kind(DomainKind::AffineImage { map, inner: Box::new(inner) })
    }

    pub fn product(left: Domain, right: Domain) -> Result<Self> {
        Self::from_kind(DomainKind::Product {
            left: Box::new(left),
            right: Box::new(right),
        })
    }

    /// `K (x) L = {x (x) y}` for point sets, materialized in Kronecker order.
    pub fn tensor(k: &Domain, l: &Domain) -> Result<Self> {
        let (a, b) = match (k.points(), l.points()) {
            (Some(a), Some(b)) => (a, b),
            _ => return Err(Error::UnsupportedVariant(if k.points().is_none() { k.variant_name() } else { l.variant_name() })),
        };
        let mut out = Vec::with_capacity(a.len() * b.len());
        for x in a {
            for y in b {
                out.push(x.kronecker(y));
            }
        }
        Self::finite_from_vectors(out)
    }

    pub fn kind(&self) -> &DomainKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// True iff `K = -K` (detected for point sets, structural otherwise).
    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn variant_name(&self) -> &'static str {
        match self.kind {
            DomainKind::FiniteSet { .. } => "finite",
            DomainKind::VertexPolytope { .. } => "polytope",
            DomainKind::Box { .. } => "box",
            DomainKind::Ellipsoid { .. } => "ellipsoid",
            DomainKind::AffineImage { .. } => "affine",
            DomainKind::Product { .. } => "product",
        }
    }

    /// The stored point list of a finite set or vertex polytope.
    pub fn points(&self) -> Option<&[DVector<f64>]> {
        match &self.kind {
            DomainKind::FiniteSet { points } | DomainKind::VertexPolytope { vertices: points } => Some(points),
            _ => None,
        }
    }

    fn check_dim(&self, len: usize) -> Result<()> {
        if len != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: len });
        }
        Ok(())
    }

    /// Support function `h_K(theta) = sup_{x in K} <x, theta>`.
    pub fn support(&self, theta: &DVector<f64>) -> Result<f64> {
        self.check_dim(theta.len())?;
        Ok(match &self.kind {
            DomainKind::FiniteSet { points } | DomainKind::VertexPolytope { vertices: points } => points
                .iter()
                .map(|x| x.dot(theta))
                .fold(f64::NEG_INFINITY, f64::max),
            DomainKind::Box { lo, hi } => (0..self.dim)
                .map(|i| if theta[i] > 0.0 { hi[i] * theta[i] } else { lo[i] * theta[i] })
                .sum(),
            DomainKind::Ellipsoid { shape, center } => (shape.transpose() * theta).norm() + center.dot(theta),
            DomainKind::AffineImage { map, inner } => inner.support(&(map.transpose() * theta))?,
            DomainKind::Product { left, right } => {
                let d1 = left.dim;
                left.support(&theta.rows(0, d1).into_owned())?
                    + right.support(&theta.rows(d1, right.dim).into_owned())?
            }
        })
    }

    /// Width `w_K(theta) = h_K(theta) + h_K(-theta)`.
    pub fn width(&self, theta: &DVector<f64>) -> Result<f64> {
        let w = self.support(theta)? + self.support(&(-theta))?;
        Ok(w.max(0.0))
    }

    /// A finite `R` with `K` inside the centered ball of radius `R`.
    pub fn radius_bound(&self) -> f64 {
        match &self.kind {
            DomainKind::FiniteSet { points } | DomainKind::VertexPolytope { vertices: points } => {
                points.iter().map(|p| p.norm()).fold(0.0, f64::max)
            }
            DomainKind::Box { lo, hi } => (0..self.dim)
                .map(|i| lo[i].abs().max(hi[i].abs()).powi(2))
                .sum::<f64>()
                .sqrt(),
            DomainKind::Ellipsoid { shape, center } => operator_norm(shape) + center.norm(),
            DomainKind::AffineImage { map, inner } => operator_norm(map) * inner.radius_bound(),
            DomainKind::Product { left, right } => left.radius_bound().hypot(right.radius_bound()),
        }
    }

    /// `{x + v} U {-x - v}` for a point set.
    pub fn symmetrize(&self, v: &DVector<f64>) -> Result<Domain> {
        self.check_dim(v.len())?;
        let points = self.points().ok_or(Error::UnsupportedVariant(self.variant_name()))?;
        let mut out: Vec<DVector<f64>> = points.iter().map(|x| x + v).collect();
        out.extend(points.iter().map(|x| -(x + v)));
        // drop exact duplicates (e.g. a centered singleton maps to {0, -0})
        let mut seen = HashMap::new();
        out.retain(|p| seen.insert(quantize(p, 1.0), ()).is_none());
        Self::finite_from_vectors(out)
    }

    /// The image `{t x : x in K}`.
    pub fn scaled(&self, t: f64) -> Result<Domain> {
        match &self.kind {
            DomainKind::FiniteSet { points } => Self::finite_from_vectors(points.iter().map(|p| p * t).collect()),
            DomainKind::VertexPolytope { vertices } => {
                let rows: Vec<Vec<f64>> = vertices.iter().map(|p| (p * t).iter().copied().collect()).collect();
                Self::polytope(&rows)
            }
            _ => Self::affine(DMatrix::identity(self.dim, self.dim) * t, self.clone()),
        }
    }

    /// Points whose convex hull equals `conv K`, when `K` is a polytope with
    /// at most `limit` of them.
    pub fn vertices(&self, limit: usize) -> Option<Vec<DVector<f64>>> {
        match &self.kind {
            DomainKind::FiniteSet { points } | DomainKind::VertexPolytope { vertices: points } => {
                (points.len() <= limit).then(|| points.clone())
            }
            DomainKind::Box { lo, hi } => {
                let active: Vec<usize> = (0..self.dim).filter(|&i| hi[i] > lo[i]).collect();
                if active.len() >= usize::BITS as usize - 1 || (1usize << active.len()) > limit {
                    return None;
                }
                Some(
                    (0..1usize << active.len())
                        .map(|mask| {
                            let mut x = lo.clone();
                            for (b, &i) in active.iter().enumerate() {
                                if mask >> b & 1 == 1 {
                                    x[i] = hi[i];
                                }
                            }
                            x
                        })
                        .collect(),
                )
            }
            DomainKind::Ellipsoid { .. } => None,
            DomainKind::AffineImage { map, inner } => {
                inner.vertices(limit).map(|vs| vs.iter().map(|x| map * x).collect())
            }
            DomainKind::Product { left, right } => {
                let a = left.vertices(limit)?;
                let b = right.vertices(limit)?;
                if a.len().saturating_mul(b.len()) > limit {
                    return None;
                }
                Some(
                    a.iter()
                        .flat_map(|x| {
                            b.iter().map(move |y| {
                                DVector::from_iterator(x.len() + y.len(), x.iter().chain(y.iter()).copied())
                            })
                        })
                        .collect(),
                )
            }
        }
    }

    /// A finite subset of `K` for building dual certificates: the vertices
    /// when there are few, otherwise boundary points along principal and
    /// coordinate directions of ellipsoids.
    pub fn certificate_points(&self, limit: usize) -> Option<Vec<DVector<f64>>> {
        if let Some(v) = self.vertices(limit) {
            return Some(v);
        }
        match &self.kind {
            DomainKind::Ellipsoid { shape, center } => {
                let gram = SymMatrix::gram(shape);
                let (values, vectors) = gram.eigen();
                let mut out = vec![center.clone()];
                for (j, &l) in values.iter().enumerate() {
                    if l > 0.0 {
                        let dir = vectors.column(j) * l.sqrt();
                        out.push(center + &dir);
                        out.push(center - &dir);
                    }
                }
                for i in 0..self.dim {
                    let row = shape.row(i).transpose();
                    let n = row.norm();
                    if n > 0.0 {
                        let dir = shape * (row / n);
                        out.push(center + &dir);
                        out.push(center - &dir);
                    }
                }
                Some(out)
            }
            DomainKind::AffineImage { map, inner } => inner
                .certificate_points(limit)
                .map(|vs| vs.iter().map(|x| map * x).collect()),
            DomainKind::Product { left, right } => {
                let a = left.certificate_points(limit)?;
                let b = right.certificate_points(limit)?;
                if a.len().saturating_mul(b.len()) > limit {
                    return None;
                }
                Some(
                    a.iter()
                        .flat_map(|x| {
                            b.iter().map(move |y| {
                                DVector::from_iterator(x.len() + y.len(), x.iter().chain(y.iter()).copied())
                            })
                        })
                        .collect(),
                )
            }
            _ => None,
        }
    }

    /// Membership test. `None` when it cannot be decided exactly for this
    /// representation.
    pub fn contains(&self, x: &DVector<f64>, tol: f64) -> Option<bool> {
        if x.len() != self.dim {
            return Some(false);
        }
        match &self.kind {
            DomainKind::FiniteSet { points } => Some(
                points
                    .iter()
                    .any(|p| (p - x).amax() <= tol),
            ),
            DomainKind::VertexPolytope { vertices } => Some(in_convex_hull(vertices, x, tol)),
            DomainKind::Box { lo, hi } => Some((0..self.dim).all(|i| x[i] >= lo[i] - tol && x[i] <= hi[i] + tol)),
            DomainKind::Ellipsoid { shape, center } => Some(in_ellipsoid(shape, center, x, tol)),
            DomainKind::AffineImage { map, inner } => match &inner.kind {
                DomainKind::Ellipsoid { shape, center } => Some(in_ellipsoid(&(map * shape), &(map * center), x, tol)),
                _ => {
                    if map.nrows() == map.ncols() {
                        if let Some(inv) = map.clone().try_inverse() {
                            return inner.contains(&(inv * x), tol);
                        }
                    }
                    let vs = inner.vertices(1 << 16)?;
                    let mapped: Vec<DVector<f64>> = vs.iter().map(|v| map * v).collect();
                    Some(in_convex_hull(&mapped, x, tol))
                }
            },
            DomainKind::Product { left, right } => {
                let a = left.contains(&x.rows(0, left.dim).into_owned(), tol)?;
                let b = right.contains(&x.rows(left.dim, right.dim).into_owned(), tol)?;
                Some(a && b)
            }
        }
    }

    /// Exact quadratic oracle: a maximizer of `(x+v)^T Minv (x+v)` over `K`.
    pub fn quadratic_oracle(&self, minv: &SymMatrix, v: &DVector<f64>) -> Result<OracleAnswer> {
        oracle::quadratic_oracle(self, minv, v)
    }
}

fn in_ellipsoid(shape: &DMatrix<f64>, center: &DVector<f64>, x: &DVector<f64>, tol: f64) -> bool {
    // minimum-norm y with A y = x - u
    let r = x - center;
    let svd = shape.clone().svd(true, true);
    let y = match svd.solve(&r, 1e-12 * svd.singular_values.max().max(1.0)) {
        Ok(y) => y,
        Err(_) => return false,
    };
    let resid = (shape * &y - &r).norm();
    resid <= tol * (1.0 + r.norm()) && y.norm() <= 1.0 + tol
}

/// Convex-hull membership via the LP `min ||V lambda - x||_1`.
fn in_convex_hull(vertices: &[DVector<f64>], x: &DVector<f64>, tol: f64) -> bool {
    use minilp::{ComparisonOp, OptimizationDirection, Problem};
    if vertices.iter().any(|v| (v - x).amax() <= tol) {
        return true;
    }
    let d = x.len();
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let lambdas: Vec<_> = vertices.iter().map(|_| lp.add_var(0.0, (0.0, f64::INFINITY))).collect();
    let slack_pos: Vec<_> = (0..d).map(|_| lp.add_var(1.0, (0.0, f64::INFINITY))).collect();
    let slack_neg: Vec<_> = (0..d).map(|_| lp.add_var(1.0, (0.0, f64::INFINITY))).collect();
    for j in 0..d {
        let mut row: Vec<_> = vertices.iter().zip(&lambdas).map(|(v, &l)| (l, v[j])).collect();
        row.push((slack_pos[j], 1.0));
        row.push((slack_neg[j], -1.0));
        lp.add_constraint(row.as_slice(), ComparisonOp::Eq, x[j]);
    }
    let ones: Vec<_> = lambdas.iter().map(|&l| (l, 1.0)).collect();
    lp.add_constraint(ones.as_slice(), ComparisonOp::Eq, 1.0);
    match lp.solve() {
        Ok(sol) => sol.objective() <= tol * (1.0 + x.amax()) * d as f64,
        Err(_) => false,
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum DomainJson {
    Finite {
        points: Vec<Vec<f64>>,
    },
    Polytope {
        vertices: Vec<Vec<f64>>,
    },
    Box {
        lo: Vec<f64>,
        hi: Vec<f64>,
    },
    Ellipsoid {
        shape: Vec<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        center: Option<Vec<f64>>,
    },
    Affine {
        map: Vec<Vec<f64>>,
        inner: Box<DomainJson>,
    },
    Product {
        left: Box<DomainJson>,
        right: Box<DomainJson>,
    },
}

fn rows_of(points: &[DVector<f64>]) -> Vec<Vec<f64>> {
    points.iter().map(|p| p.iter().copied().collect()).collect()
}

impl From<&Domain> for DomainJson {
    fn from(d: &Domain) -> Self {
        match &d.kind {
            DomainKind::FiniteSet { points } => DomainJson::Finite { points: rows_of(points) },
            DomainKind::VertexPolytope { vertices } => DomainJson::Polytope { vertices: rows_of(vertices) },
            DomainKind::Box { lo, hi } => DomainJson::Box {
                lo: lo.iter().copied().collect(),
                hi: hi.iter().copied().collect(),
            },
            DomainKind::Ellipsoid { shape, center } => DomainJson::Ellipsoid {
                shape: matrix_to_rows(shape),
                center: Some(center.iter().copied().collect()),
            },
            DomainKind::AffineImage { map, inner } => DomainJson::Affine {
                map: matrix_to_rows(map),
                inner: Box::new(inner.as_ref().into()),
            },
            DomainKind::Product { left, right } => DomainJson::Product {
                left: Box::new(left.as_ref().into()),
                right: Box::new(right.as_ref().into()),
            },
        }
    }
}

impl TryFrom<DomainJson> for Domain {
    type Error = Error;

    fn try_from(j: DomainJson) -> Result<Self> {
        match j {
            DomainJson::Finite { points } => Domain::finite(&points),
            DomainJson::Polytope { vertices } => Domain::polytope(&vertices),
            DomainJson::Box { lo, hi } => Domain::cuboid(&lo, &hi),
            DomainJson::Ellipsoid { shape, center } => {
                let a = matrix_from_rows(&shape)?;
                let u = center.unwrap_or_else(|| vec![0.0; a.nrows()]);
                Domain::ellipsoid(a, DVector::from_vec(u))
            }
            DomainJson::Affine { map, inner } => Domain::affine(matrix_from_rows(&map)?, (*inner).try_into()?),
            DomainJson::Product { left, right } => Domain::product((*left).try_into()?, (*right).try_into()?),
        }
    }
}

impl Serialize for Domain {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        DomainJson::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for Domain {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        DomainJson::deserialize(d)?.try_into().map_err(serde::de::Error::custom)
    }
}
