//! Catalog of test manifolds: the projective line, real loci of Grassmannians,
//! full complex Grassmannians, and the graph `{(π, Aπ)}` of `A = diag(I₄, B)`
//! inside `Gr(4, C⁸) × Gr(4, C⁸)` with `B ∈ SU(4)` non-real.

use serde::{Deserialize, Serialize};

use crate::error::{GradmapError, Result};
use crate::kahler::{self, GrassPoint, MatrixJson, Point, ProductPoint, Tangent};
use crate::lie_core::{BlockField, CompatibleGroupSpec, GroupElement, ModelName};
use crate::linalg::{self, fro, identity, real, sample_rng, CMat};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioName {
    P1Toy,
    RealGrassmannian,
    ComplexGrassmannian,
    PaperGraphExample,
    /// Pairs of independent planes; not Lagrangian, used as a control.
    IndependentProduct,
}

/// JSON form of a scenario.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioDescriptor {
    pub name: ScenarioName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    /// Acting group for `complex_grassmannian`; defaults to `sl_n_real_form`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelName>,
    /// The `SU(4)` block of the graph example as nested `[re, im]` pairs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<MatrixJson>,
}

impl ScenarioDescriptor {
    pub fn named(name: ScenarioName) -> Self {
        ScenarioDescriptor { name, n: None, k: None, model: None, b: None }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub name: ScenarioName,
    pub spec: CompatibleGroupSpec,
    /// Plane dimension and ambient dimension of each factor.
    pub k: usize,
    pub ambient_n: usize,
    /// `A = diag(I, B)` for the graph scenarios.
    a: Option<CMat>,
}

/// Fixed real symmetric traceless generator of the default `B = exp(iH)`.
fn default_h() -> CMat {
    #[rustfmt::skip]
    let h = [
        0.3, 0.5, 0.0, 0.1,
        0.5, -0.2, 0.4, 0.0,
        0.0, 0.4, 0.1, 0.7,
        0.1, 0.0, 0.7, -0.2,
    ];
    CMat::from_row_slice(4, 4, &h.map(real))
}

pub fn default_b() -> CMat {
    // exp(iH) = V exp(iΛ) V*
    let (vals, vecs) = linalg::hermitian_eigen(&default_h()).expect("fixed symmetric matrix");
    let d = nalgebra::DVector::from_iterator(4, vals.iter().map(|&l| linalg::C64::from_polar(1.0, l)));
    &vecs * CMat::from_diagonal(&d) * vecs.adjoint()
}

/// Checks `B ∈ SU(4)` with `conj(B) ≠ B`.
pub fn check_b(b: &CMat) -> Result<()> {
    if b.nrows() != 4 || b.ncols() != 4 {
        return Err(GradmapError::invalid("B must be 4x4"));
    }
    let unit = fro(&(b.adjoint() * b - identity(4)));
    if unit > 1e-10 {
        return Err(GradmapError::invalid(format!("B is not unitary (defect {unit:e})")));
    }
    let det = b.determinant();
    if (det - real(1.0)).norm() > 1e-10 {
        return Err(GradmapError::invalid(format!("det B = {det} is not 1")));
    }
    if fro(&(b.conjugate() - b)) <= 1e-6 {
        return Err(GradmapError::invalid("B must not be real (conj(B) = B)"));
    }
    Ok(())
}

impl Scenario {
    pub fn new(desc: &ScenarioDescriptor) -> Result<Self> {
        let dims = |dn: usize, dk: usize| -> Result<(usize, usize)> {
            let n = desc.n.unwrap_or(dn);
            let k = desc.k.unwrap_or(dk);
            if n < 2 || k == 0 || k >= n {
                return Err(GradmapError::invalid(format!("need 0 < k < n and n >= 2, got n={n}, k={k}")));
            }
            Ok((n, k))
        };
        if desc.b.is_some() && desc.name != ScenarioName::PaperGraphExample {
            return Err(GradmapError::invalid("parameter b only applies to paper_graph_example"));
        }
        let sc = match desc.name {
            ScenarioName::P1Toy => {
                if desc.n.is_some() || desc.k.is_some() {
                    return Err(GradmapError::invalid("p1_toy takes no dimensions"));
                }
                Scenario { name: desc.name, spec: CompatibleGroupSpec::sl_n_real(2), k: 1, ambient_n: 2, a: None }
            }
            ScenarioName::RealGrassmannian => {
                let (n, k) = dims(4, 2)?;
                Scenario { name: desc.name, spec: CompatibleGroupSpec::sl_n_real(n), k, ambient_n: n, a: None }
            }
            ScenarioName::ComplexGrassmannian => {
                let (n, k) = dims(4, 2)?;
                let spec = match desc.model.unwrap_or(ModelName::SlNRealForm) {
                    ModelName::SlNRealForm => CompatibleGroupSpec::sl_n_real(n),
                    ModelName::SlNComplex => CompatibleGroupSpec::sl_n_complex(n),
                    ModelName::TorusA => CompatibleGroupSpec::torus(n),
                    ModelName::CustomBlock => {
                        return Err(GradmapError::invalid("complex_grassmannian acts by a full group"))
                    }
                };
                Scenario { name: desc.name, spec, k, ambient_n: n, a: None }
            }
            ScenarioName::PaperGraphExample | ScenarioName::IndependentProduct => {
                if desc.n.is_some() || desc.k.is_some() {
                    return Err(GradmapError::invalid("graph scenarios have fixed dimensions"));
                }
                let b = match &desc.b {
                    Some(m) => m.to_matrix()?,
                    None => default_b(),
                };
                check_b(&b)?;
                let mut a = identity(8);
                a.view_mut((4, 4), (4, 4)).copy_from(&b);
                Scenario {
                    name: desc.name,
                    spec: CompatibleGroupSpec::custom_block(4, 8, BlockField::Real),
                    k: 4,
                    ambient_n: 8,
                    a: Some(a),
                }
            }
        };
        if desc.model.is_some() && desc.name != ScenarioName::ComplexGrassmannian {
            return Err(GradmapError::invalid("parameter model only applies to complex_grassmannian"));
        }
        Ok(sc)
    }

    pub fn named(name: ScenarioName) -> Result<Self> {
        Scenario::new(&ScenarioDescriptor::named(name))
    }

    /// The matrix `A = diag(I₄, B)` of the graph scenarios.
    pub fn a_matrix(&self) -> Option<&CMat> {
        self.a.as_ref()
    }

    pub fn is_product(&self) -> bool {
        self.a.is_some()
    }

    /// Scenarios whose sample set is a compact Lagrangian inside `μ_k⁻¹(0)`.
    pub fn is_lagrangian(&self) -> bool {
        matches!(self.name, ScenarioName::RealGrassmannian | ScenarioName::PaperGraphExample)
    }

    /// The ambient manifold `Z` when the scenario samples a submanifold of it.
    pub fn ambient_scenario(&self) -> Scenario {
        match self.name {
            ScenarioName::RealGrassmannian => Scenario { name: ScenarioName::ComplexGrassmannian, ..self.clone() },
            ScenarioName::PaperGraphExample => Scenario { name: ScenarioName::IndependentProduct, ..self.clone() },
            _ => self.clone(),
        }
    }

    pub fn graph_point(&self, pi: &GrassPoint) -> Result<Point> {
        let a = self.a.as_ref().ok_or_else(|| GradmapError::invalid("scenario has no graph"))?;
        Ok(ProductPoint::new(pi.clone(), pi.act(a)?)?.into())
    }

    fn sample_one(&self, seed: u64, index: u64) -> Result<Point> {
        let mut rng = sample_rng(seed, index);
        let n = self.ambient_n;
        let frame = |rng: &mut rand_chacha::ChaCha8Rng| match self.name {
            ScenarioName::RealGrassmannian => linalg::gaussian_rmat(n, self.k, rng),
            _ => linalg::gaussian_cmat(n, self.k, rng),
        };
        let first = GrassPoint::new(&frame(&mut rng))?;
        match self.name {
            ScenarioName::PaperGraphExample => self.graph_point(&first),
            ScenarioName::IndependentProduct => {
                let second = GrassPoint::new(&frame(&mut rng))?;
                Ok(ProductPoint::new(first, second)?.into())
            }
            _ => Ok(first.into()),
        }
    }

    /// Sample `index` of the stream for `seed`; independent of the batch it is drawn in.
    pub fn sample_at(&self, seed: u64, index: u64) -> Result<Point> {
        self.sample_one(seed, index)
    }
}

/// `count` points, Haar-uniform in the free plane; point `i` uses the stream `seed ⊕ i`.
pub fn sample_scenario(s: &Scenario, count: usize, seed: u64) -> Result<Vec<Point>> {
    if count == 0 {
        return Err(GradmapError::invalid("count must be at least 1"));
    }
    (0..count as u64).map(|i| s.sample_one(seed, i)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LagrangianReport {
    pub max_abs_omega: f64,
    /// Real dimension of the sampled submanifold.
    pub dim_x: usize,
    pub dim_z: usize,
}

/// Tangent to the scenario's sample set at `x`; on a product it is `(v, A v A*)`
/// projected onto the tangent space of the second factor.
fn scenario_tangent<R: rand::Rng + ?Sized>(s: &Scenario, x: &Point, rng: &mut R) -> Result<Tangent> {
    match (x, s.name) {
        (Point::Single(p), ScenarioName::RealGrassmannian) => {
            Tangent::from_values(x, vec![p.random_real_tangent(rng)])
        }
        (Point::Product(pp), _) => {
            let a = s.a.as_ref().ok_or_else(|| GradmapError::invalid("product point needs a graph scenario"))?;
            let v = pp.first.random_tangent(rng);
            let w = pp.second.tangent_project(&(a * &v * a.adjoint()));
            Tangent::from_values(x, vec![v, w])
        }
        _ => Ok(x.random_tangent(rng)),
    }
}

/// Largest `|ω(v, w)|` over `trials` sampled pairs of unit tangents to `X` at `x`.
pub fn verify_lagrangian(s: &Scenario, x: &Point, trials: usize, seed: u64) -> Result<LagrangianReport> {
    let mut rng = sample_rng(seed, 0x1a6);
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let v = scenario_tangent(s, x, &mut rng)?;
        let w = scenario_tangent(s, x, &mut rng)?;
        let scale = v.fro_norm() * w.fro_norm();
        if scale == 0.0 {
            continue;
        }
        let k = kahler::kahler_eval(x, &v, &w)?;
        worst = worst.max(k.omega.abs() / scale);
    }
    let per_factor = 2 * s.k * (s.ambient_n - s.k);
    let (dim_x, dim_z) = match s.name {
        ScenarioName::RealGrassmannian => (per_factor / 2, per_factor),
        ScenarioName::PaperGraphExample => (per_factor, 2 * per_factor),
        ScenarioName::IndependentProduct => (2 * per_factor, 2 * per_factor),
        _ => (per_factor, per_factor),
    };
    Ok(LagrangianReport { max_abs_omega: worst, dim_x, dim_z })
}

/// Real dimension of the span of sampled tangents to `X` at `x` (singular values above `1e-8`).
pub fn sampled_tangent_rank(s: &Scenario, x: &Point, seed: u64) -> Result<usize> {
    let mut rng = sample_rng(seed, 0x7a9);
    let n = s.ambient_n;
    let rows = 2 * x.factors().len() * n * n;
    let samples = 4 * s.k * (n - s.k) * x.factors().len();
    let mut m = nalgebra::DMatrix::<f64>::zeros(rows, samples);
    for j in 0..samples {
        let v = scenario_tangent(s, x, &mut rng)?;
        let mut i = 0;
        for val in v.values() {
            for z in val.iter() {
                m[(i, j)] = z.re;
                m[(i + 1, j)] = z.im;
                i += 2;
            }
        }
    }
    let sv = m.svd(false, false).singular_values;
    let top = sv.iter().cloned().fold(0.0, f64::max);
    Ok(sv.iter().filter(|&&s| s > 1e-8 * top.max(1.0)).count())
}

/// Distance from `g·x` to the graph point over the first component of `g·x`.
pub fn invariance_residual_ambient(s: &Scenario, g: &CMat, x: &Point) -> Result<f64> {
    let moved = x.act_matrix(g)?;
    match &moved {
        Point::Product(pp) => {
            let expected = s.graph_point(&pp.first)?;
            Ok(moved.chordal(&expected))
        }
        Point::Single(_) => Err(GradmapError::invalid("invariance is defined for the graph scenario")),
    }
}

/// Invariance of the graph under the block-embedded `SL(4)`; `g` must be a
/// `4 × 4` matrix of determinant one, or an `8 × 8` block-diagonal `diag(g, I)`.
pub fn verify_invariance(s: &Scenario, g: &GroupElement, x: &Point) -> Result<f64> {
    if s.name != ScenarioName::PaperGraphExample {
        return Err(GradmapError::invalid("verify_invariance requires paper_graph_example"));
    }
    let m = g.matrix();
    let block = match m.nrows() {
        4 => m.clone(),
        8 => {
            let embedded = s.spec.embed_group(&linalg::top_left(m, 4));
            if fro(&(&embedded - m)) > 1e-12 {
                return Err(GradmapError::invalid("g is not in the block-embedded SL(4)"));
            }
            linalg::top_left(m, 4)
        }
        _ => return Err(GradmapError::invalid("g must be 4x4 or 8x8")),
    };
    let det = block.determinant();
    if (det - real(1.0)).norm() > 1e-10 {
        return Err(GradmapError::invalid(format!("g has determinant {det}, not 1")));
    }
    invariance_residual_ambient(s, &s.spec.embed_group(&block), x)
}
