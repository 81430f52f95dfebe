//! Grassmannian geometry: points stored as orthonormal frames, tangent
//! vectors as Hermitian matrices off-diagonal with respect to `P`, the
//! Kähler triple `(g, J, ω)` and the linear group action.
//!
//! Conventions: `g(v, w) = Re tr(vw)`, `Jv = i[v, P]`, `ω(v, w) = g(Jv, w)`.
//! On a product the second factor carries `(−g, −ω)` and the same `J`, so the
//! diagonal action stays holomorphic and the moment map is `μ(x₁) − μ(x₂)`.

use serde::{Deserialize, Serialize};

use crate::error::{GradmapError, Result};
use crate::lie_core::{CompatibleGroupSpec, GroupElement, LieVector};
use crate::linalg::{self, commutator, fro, identity, inner, CMat, C64, I};

const PROJ_TOL: f64 = 1e-10;
const FRAME_TOL: f64 = 1e-12;
/// Frames whose smallest singular value falls below this are rejected.
pub const RANK_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct GrassPoint {
    frame: CMat,
    projection: CMat,
}

impl GrassPoint {
    fn from_orthonormal(frame: CMat) -> Self {
        let projection = &frame * frame.adjoint();
        GrassPoint { frame, projection }
    }

    /// Orthonormalizes a full-rank `n × k` frame.
    pub fn new(raw_frame: &CMat) -> Result<Self> {
        if raw_frame.ncols() == 0 || raw_frame.ncols() > raw_frame.nrows() {
            return Err(GradmapError::invalid(format!(
                "frame must be n x k with 1 <= k <= n, got {}x{}",
                raw_frame.nrows(),
                raw_frame.ncols()
            )));
        }
        let smallest = linalg::smallest_singular_value(raw_frame);
        if !(smallest > RANK_TOL) {
            return Err(GradmapError::InvalidFrame { smallest_singular: smallest });
        }
        Ok(Self::from_orthonormal(linalg::orthonormalize(raw_frame)))
    }

    /// Span of the first `k` standard basis vectors of `C^n`.
    pub fn coordinate(n: usize, k: usize) -> Self {
        Self::from_orthonormal(identity(n).columns(0, k).into_owned())
    }

    pub fn n(&self) -> usize {
        self.frame.nrows()
    }

    pub fn k(&self) -> usize {
        self.frame.ncols()
    }

    pub fn frame(&self) -> &CMat {
        &self.frame
    }

    pub fn projection(&self) -> &CMat {
        &self.projection
    }

    /// Largest violation of the projection and frame invariants.
    pub fn invariant_residual(&self) -> f64 {
        let p = &self.projection;
        let herm = fro(&(p - p.adjoint()));
        let idem = fro(&(p * p - p));
        let tr = (linalg::trace(p).re - self.k() as f64).abs();
        let orth = fro(&(self.frame.adjoint() * &self.frame - identity(self.k())));
        herm.max(idem).max(tr).max(orth)
    }

    pub fn check(&self) -> Result<()> {
        let r = self.invariant_residual();
        if r > PROJ_TOL.max(FRAME_TOL) {
            return Err(GradmapError::numerical(format!("Grassmannian invariants violated by {r:e}")));
        }
        Ok(())
    }

    /// Plane `g · span(F)`, re-orthonormalized.
    pub fn act(&self, g: &CMat) -> Result<GrassPoint> {
        if g.nrows() != self.n() || g.ncols() != self.n() {
            return Err(GradmapError::invalid(format!(
                "group element is {}x{}, point lives in C^{}",
                g.nrows(),
                g.ncols(),
                self.n()
            )));
        }
        GrassPoint::new(&(g * &self.frame))
    }

    /// Chordal distance `||P − Q||_F`.
    pub fn chordal(&self, other: &GrassPoint) -> f64 {
        fro(&(&self.projection - &other.projection))
    }

    pub fn is_real(&self, tol: f64) -> bool {
        linalg::is_real(&self.projection, tol)
    }

    /// Projects a Hermitian matrix onto the tangent space at this point.
    pub fn tangent_project(&self, m: &CMat) -> CMat {
        let h = linalg::hermitian_part(m);
        let p = &self.projection;
        let q = identity(self.n()) - p;
        &q * &h * p + p * &h * &q
    }

    /// Orthonormal basis (for `g`) of the real tangent space, `2k(n − k)` vectors
    /// of the form `F⊥ C F* + F C* F⊥*`.
    pub fn tangent_basis(&self) -> Vec<CMat> {
        let comp = linalg::complement(&self.frame);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let mut out = Vec::with_capacity(2 * self.k() * (self.n() - self.k()));
        for a in 0..comp.ncols() {
            for b in 0..self.k() {
                for z in [C64::new(h, 0.0), C64::new(0.0, h)] {
                    let mut cm = CMat::zeros(comp.ncols(), self.k());
                    cm[(a, b)] = z;
                    out.push(self.tangent_from_coords(&comp, &cm));
                }
            }
        }
        out
    }

    fn tangent_from_coords(&self, comp: &CMat, cm: &CMat) -> CMat {
        let a = comp * cm * self.frame.adjoint();
        &a + a.adjoint()
    }

    /// Gaussian tangent vector.
    pub fn random_tangent<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> CMat {
        let comp = linalg::complement(&self.frame);
        let cm = linalg::gaussian_cmat(comp.ncols(), self.k(), rng);
        self.tangent_from_coords(&comp, &cm)
    }

    /// Gaussian tangent vector with real coordinates (tangent to the real locus
    /// when the point is real).
    pub fn random_real_tangent<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> CMat {
        let comp = linalg::complement(&self.frame);
        let cm = linalg::gaussian_rmat(comp.ncols(), self.k(), rng);
        self.tangent_from_coords(&comp, &cm)
    }

    /// Point `span(F + s (I − P) v F)`, a curve with velocity `v` at `s = 0`.
    pub fn along(&self, v: &CMat, s: f64) -> Result<GrassPoint> {
        let w = self.tangent_project(v) * &self.frame;
        GrassPoint::new(&(&self.frame + w.scale(s)))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProductPoint {
    pub first: GrassPoint,
    pub second: GrassPoint,
}

impl ProductPoint {
    /// Sign of the symplectic form (and metric) on the second factor.
    pub const SIGN_SECOND: f64 = -1.0;

    pub fn new(first: GrassPoint, second: GrassPoint) -> Result<Self> {
        if first.n() != second.n() {
            return Err(GradmapError::invalid("product factors must share the ambient dimension"));
        }
        Ok(ProductPoint { first, second })
    }
}

/// A point of `Gr(k, C^N)` or of a signed product of two of them.
#[derive(Clone, Debug, PartialEq)]
pub enum Point {
    Single(GrassPoint),
    Product(ProductPoint),
}

impl From<GrassPoint> for Point {
    fn from(x: GrassPoint) -> Self {
        Point::Single(x)
    }
}

impl From<ProductPoint> for Point {
    fn from(x: ProductPoint) -> Self {
        Point::Product(x)
    }
}

impl Point {
    pub fn ambient_n(&self) -> usize {
        self.factors()[0].n()
    }

    pub fn factors(&self) -> Vec<&GrassPoint> {
        match self {
            Point::Single(x) => vec![x],
            Point::Product(p) => vec![&p.first, &p.second],
        }
    }

    /// Signs of the Kähler data on each factor.
    pub fn signs(&self) -> &'static [f64] {
        match self {
            Point::Single(_) => &[1.0],
            Point::Product(_) => &[1.0, ProductPoint::SIGN_SECOND],
        }
    }

    pub(crate) fn map_factors<F>(&self, mut f: F) -> Result<Point>
    where
        F: FnMut(&GrassPoint) -> Result<GrassPoint>,
    {
        Ok(match self {
            Point::Single(x) => Point::Single(f(x)?),
            Point::Product(p) => Point::Product(ProductPoint { first: f(&p.first)?, second: f(&p.second)? }),
        })
    }

    /// Diagonal action by an ambient matrix.
    pub fn act_matrix(&self, g: &CMat) -> Result<Point> {
        self.map_factors(|x| x.act(g))
    }

    pub fn act(&self, g: &GroupElement) -> Result<Point> {
        self.act_matrix(g.matrix())
    }

    /// Action of an element of the `n × n` model group through the block embedding.
    pub fn act_group(&self, spec: &CompatibleGroupSpec, g: &GroupElement) -> Result<Point> {
        if g.matrix().nrows() == self.ambient_n() {
            return self.act(g);
        }
        self.act_matrix(&spec.embed_group(g.matrix()))
    }

    /// Chordal distance on the product (root of the sum of squares).
    pub fn chordal(&self, other: &Point) -> f64 {
        self.factors()
            .iter()
            .zip(other.factors())
            .map(|(a, b)| a.chordal(b).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    pub fn frames(&self) -> Vec<&CMat> {
        self.factors().into_iter().map(|x| x.frame()).collect()
    }

    pub fn tangent_basis(&self) -> Vec<Tangent> {
        match self {
            Point::Single(x) => x.tangent_basis().into_iter().map(|v| Tangent::single(x, v)).collect(),
            Point::Product(p) => {
                let n = p.first.n();
                let zero = CMat::zeros(n, n);
                let mut out: Vec<Tangent> = p
                    .first
                    .tangent_basis()
                    .into_iter()
                    .map(|v| Tangent::product(p, v, zero.clone()))
                    .collect();
                out.extend(p.second.tangent_basis().into_iter().map(|v| Tangent::product(p, zero.clone(), v)));
                out
            }
        }
    }

    pub fn random_tangent<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> Tangent {
        match self {
            Point::Single(x) => Tangent::single(x, x.random_tangent(rng)),
            Point::Product(p) => {
                Tangent::product(p, p.first.random_tangent(rng), p.second.random_tangent(rng))
            }
        }
    }

    /// Curve `s ↦ x(s)` factorwise along the tangent `v`.
    pub fn along(&self, v: &Tangent, s: f64) -> Result<Point> {
        let values = v.values();
        let mut i = 0;
        self.map_factors(|x| {
            let out = x.along(&values[i], s);
            i += 1;
            out
        })
    }

    pub fn invariant_residual(&self) -> f64 {
        self.factors().iter().map(|x| x.invariant_residual()).fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TangentVector {
    pub base: GrassPoint,
    pub value: CMat,
}

impl TangentVector {
    /// Largest violation of `PvP = 0`, `(I−P)v(I−P) = 0` and Hermiticity.
    pub fn invariant_residual(&self) -> f64 {
        let p = self.base.projection();
        let q = identity(p.nrows()) - p;
        let v = &self.value;
        fro(&(p * v * p)).max(fro(&(&q * v * &q))).max(fro(&(v - v.adjoint())))
    }
}

/// Tangent vector on a single Grassmannian or a product.
#[derive(Clone, Debug, PartialEq)]
pub enum Tangent {
    Single(TangentVector),
    Product(TangentVector, TangentVector),
}

impl Tangent {
    fn single(x: &GrassPoint, v: CMat) -> Self {
        Tangent::Single(TangentVector { base: x.clone(), value: v })
    }

    fn product(p: &ProductPoint, v1: CMat, v2: CMat) -> Self {
        Tangent::Product(
            TangentVector { base: p.first.clone(), value: v1 },
            TangentVector { base: p.second.clone(), value: v2 },
        )
    }

    pub fn from_values(x: &Point, values: Vec<CMat>) -> Result<Self> {
        let factors = x.factors();
        if values.len() != factors.len() {
            return Err(GradmapError::invalid("tangent has the wrong number of components"));
        }
        let mut parts = factors
            .into_iter()
            .zip(values)
            .map(|(b, v)| TangentVector { base: b.clone(), value: v });
        Ok(match x {
            Point::Single(_) => Tangent::Single(parts.next().unwrap()),
            Point::Product(_) => {
                let a = parts.next().unwrap();
                Tangent::Product(a, parts.next().unwrap())
            }
        })
    }

    pub fn parts(&self) -> Vec<&TangentVector> {
        match self {
            Tangent::Single(v) => vec![v],
            Tangent::Product(a, b) => vec![a, b],
        }
    }

    pub fn values(&self) -> Vec<CMat> {
        self.parts().into_iter().map(|v| v.value.clone()).collect()
    }

    /// Positive Frobenius norm over all components (used for thresholds).
    pub fn fro_norm(&self) -> f64 {
        self.parts().iter().map(|v| fro(&v.value).powi(2)).sum::<f64>().sqrt()
    }

    pub fn invariant_residual(&self) -> f64 {
        self.parts().iter().map(|v| v.invariant_residual()).fold(0.0, f64::max)
    }

    pub fn map_values<F: Fn(&CMat) -> CMat>(&self, f: F) -> Tangent {
        match self {
            Tangent::Single(v) => Tangent::Single(TangentVector { base: v.base.clone(), value: f(&v.value) }),
            Tangent::Product(a, b) => Tangent::Product(
                TangentVector { base: a.base.clone(), value: f(&a.value) },
                TangentVector { base: b.base.clone(), value: f(&b.value) },
            ),
        }
    }

    fn signs(&self) -> &'static [f64] {
        match self {
            Tangent::Single(_) => &[1.0],
            Tangent::Product(..) => &[1.0, ProductPoint::SIGN_SECOND],
        }
    }
}

/// `[η_s, P] + (I−P) η_h P + P η_h (I−P)` for ambient `η_s` (skew) and `η_h` (Hermitian).
pub fn field_value(eta_skew: &CMat, eta_herm: &CMat, p: &CMat) -> CMat {
    let q = identity(p.nrows()) - p;
    commutator(eta_skew, p) + &q * eta_herm * p + p * eta_herm * &q
}

/// Fundamental vector field of `η_skew + η_herm ∈ u ⊕ iu` at `x`; both parts are
/// `n × n` model elements embedded through `spec`. Either may be `None`.
pub fn induced_field(
    spec: &CompatibleGroupSpec,
    eta_skew: Option<&LieVector>,
    eta_herm: Option<&LieVector>,
    x: &Point,
) -> Tangent {
    let n = x.ambient_n();
    let embed = |v: Option<&LieVector>| match v {
        Some(v) if v.dim() == n => v.entries().clone(),
        Some(v) => spec.embed_algebra(v.entries()),
        None => CMat::zeros(n, n),
    };
    let s = embed(eta_skew);
    let h = embed(eta_herm);
    induced_field_ambient(&s, &h, x)
}

pub fn induced_field_ambient(skew: &CMat, herm: &CMat, x: &Point) -> Tangent {
    let values = x.factors().iter().map(|f| field_value(skew, herm, f.projection())).collect();
    Tangent::from_values(x, values).expect("component count matches")
}

/// `β_X(x)` for `β ∈ p`.
pub fn beta_field(spec: &CompatibleGroupSpec, beta: &LieVector, x: &Point) -> Tangent {
    induced_field(spec, None, Some(beta), x)
}

#[derive(Clone, Debug, PartialEq)]
pub struct KahlerValues {
    pub metric: f64,
    pub omega: f64,
    pub jv: Tangent,
}

/// `J v = i[v, P]` factorwise.
pub fn complex_structure(v: &Tangent) -> Tangent {
    match v {
        Tangent::Single(t) => Tangent::Single(j_single(t)),
        Tangent::Product(a, b) => Tangent::Product(j_single(a), j_single(b)),
    }
}

fn j_single(t: &TangentVector) -> TangentVector {
    let value = commutator(&t.value, t.base.projection()).map(|z| z * I);
    TangentVector { base: t.base.clone(), value }
}

/// Signed metric `Σ ± Re tr(v_i w_i)`.
pub fn metric(v: &Tangent, w: &Tangent) -> f64 {
    v.parts()
        .iter()
        .zip(w.parts())
        .zip(v.signs())
        .map(|((a, b), s)| s * inner(&a.value, &b.value))
        .sum()
}

pub fn omega(v: &Tangent, w: &Tangent) -> f64 {
    metric(&complex_structure(v), w)
}

fn same_base(v: &Tangent, x: &Point) -> bool {
    let parts = v.parts();
    let factors = x.factors();
    parts.len() == factors.len()
        && parts.iter().zip(factors).all(|(t, f)| t.base.chordal(f) <= 1e-12)
}

/// Metric, symplectic form and `Jv` at `x`.
pub fn kahler_eval(x: &Point, v: &Tangent, w: &Tangent) -> Result<KahlerValues> {
    if !same_base(v, x) || !same_base(w, x) {
        return Err(GradmapError::invalid("tangent vectors are not based at the given point"));
    }
    let jv = complex_structure(v);
    Ok(KahlerValues { metric: metric(v, w), omega: metric(&jv, w), jv })
}

/// Serializable frame: nested `[re, im]` pairs, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixJson(pub Vec<Vec<[f64; 2]>>);

impl MatrixJson {
    pub fn from_matrix(m: &CMat) -> Self {
        MatrixJson(
            (0..m.nrows())
                .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
                .collect(),
        )
    }

    pub fn to_matrix(&self) -> Result<CMat> {
        let rows = self.0.len();
        let cols = self.0.first().map_or(0, |r| r.len());
        if rows == 0 || self.0.iter().any(|r| r.len() != cols) {
            return Err(GradmapError::invalid("matrix rows must be non-empty and of equal length"));
        }
        Ok(CMat::from_fn(rows, cols, |i, j| C64::new(self.0[i][j][0], self.0[i][j][1])))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{real, sample_rng};

    fn col(v: &[f64]) -> CMat {
        CMat::from_iterator(v.len(), 1, v.iter().map(|&x| real(x)))
    }

    #[test]
    fn make_point_examples() {
        let e1 = GrassPoint::new(&col(&[1.0, 0.0])).unwrap();
        assert!(fro(&(e1.projection() - CMat::from_diagonal(&nalgebra::DVector::from_vec(vec![real(1.0), real(0.0)])))) < 1e-15);
        let d = GrassPoint::new(&col(&[1.0, 1.0])).unwrap();
        let half = CMat::from_element(2, 2, real(0.5));
        assert!(fro(&(d.projection() - half)) < 1e-15);
        let dep = CMat::from_row_slice(2, 2, &[real(1.0), real(2.0), real(1.0), real(2.0)]);
        assert!(matches!(GrassPoint::new(&dep), Err(GradmapError::InvalidFrame { .. })));
    }

    #[test]
    fn act_examples() {
        let x = GrassPoint::new(&col(&[1.0, 1.0])).unwrap();
        assert!(x.act(&identity(2)).unwrap().chordal(&x) < 1e-15);
        let g = CMat::from_diagonal(&nalgebra::DVector::from_vec(vec![real(2.0), real(0.5)]));
        let y = x.act(&g).unwrap();
        let expect = CMat::from_row_slice(2, 2, &[real(4.0), real(1.0), real(1.0), real(0.25)]).scale(1.0 / 4.25);
        assert!(fro(&(y.projection() - expect)) < 1e-14);
        let mut rng = sample_rng(21, 0);
        let u = linalg::haar_unitary(4, &mut rng);
        let z = GrassPoint::new(&linalg::gaussian_cmat(4, 2, &mut rng)).unwrap();
        let w = z.act(&u).unwrap();
        assert!(fro(&(w.projection() - &u * z.projection() * u.adjoint())) < 1e-12);
    }

    #[test]
    fn action_law() {
        let mut rng = sample_rng(22, 0);
        for _ in 0..20 {
            let x = GrassPoint::new(&linalg::gaussian_cmat(5, 2, &mut rng)).unwrap();
            let g = linalg::gaussian_cmat(5, 5, &mut rng);
            let h = linalg::gaussian_cmat(5, 5, &mut rng);
            let lhs = x.act(&(&g * &h)).unwrap();
            let rhs = x.act(&h).unwrap().act(&g).unwrap();
            assert!(lhs.chordal(&rhs) < 1e-10);
            assert!(lhs.invariant_residual() < 1e-12);
        }
    }

    #[test]
    fn coordinate_planes_fixed_by_diagonal() {
        let spec = CompatibleGroupSpec::torus(4);
        let beta = LieVector::diagonal(&[2.0, 1.0, -1.0, -2.0]).unwrap();
        let x: Point = GrassPoint::coordinate(4, 2).into();
        assert!(induced_field(&spec, None, Some(&beta), &x).fro_norm() < 1e-15);
    }

    #[test]
    fn tangent_basis_is_orthonormal() {
        let mut rng = sample_rng(23, 0);
        let x = GrassPoint::new(&linalg::gaussian_cmat(4, 2, &mut rng)).unwrap();
        let basis = x.tangent_basis();
        assert_eq!(basis.len(), 8);
        for (i, a) in basis.iter().enumerate() {
            let t = TangentVector { base: x.clone(), value: a.clone() };
            assert!(t.invariant_residual() < 1e-12);
            for (j, b) in basis.iter().enumerate() {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((inner(a, b) - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn kahler_conventions() {
        let mut rng = sample_rng(24, 0);
        for _ in 0..100 {
            let x: Point = GrassPoint::new(&linalg::gaussian_cmat(4, 2, &mut rng)).unwrap().into();
            let v = x.random_tangent(&mut rng);
            let w = x.random_tangent(&mut rng);
            let k = kahler_eval(&x, &v, &w).unwrap();
            assert!(k.jv.invariant_residual() < 1e-10);
            let jj = complex_structure(&k.jv);
            assert!((jj.fro_norm() - v.fro_norm()).abs() < 1e-10);
            let sum = jj.values()[0].clone() + &v.values()[0];
            assert!(fro(&sum) < 1e-10);
            let nv = v.fro_norm().powi(2);
            assert!((omega(&v, &k.jv) - nv).abs() < 1e-10 * nv.max(1.0));
            assert!((omega(&k.jv, &v) + nv).abs() < 1e-10 * nv.max(1.0));
            assert!(omega(&v, &v).abs() < 1e-10 * nv.max(1.0));
            assert!((k.omega + omega(&w, &v)).abs() < 1e-10);
            let jw = complex_structure(&w);
            assert!((omega(&v, &jw) - k.metric).abs() < 1e-10);
        }
    }

    #[test]
    fn kahler_eval_rejects_foreign_tangent() {
        let x: Point = GrassPoint::coordinate(3, 1).into();
        let y: Point = GrassPoint::new(&col(&[1.0, 1.0, 0.0])).unwrap().into();
        let mut rng = sample_rng(25, 0);
        let v = y.random_tangent(&mut rng);
        assert!(kahler_eval(&x, &v, &v).is_err());
    }

    #[test]
    fn matrix_json_roundtrip() {
        let mut rng = sample_rng(26, 0);
        let m = linalg::gaussian_cmat(3, 2, &mut rng);
        let back = MatrixJson::from_matrix(&m).to_matrix().unwrap();
        assert_eq!(back, m);
    }
}
