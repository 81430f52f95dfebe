//! Momentum map `μ(P) = −i(P − (k/N)I)`, pulled back to the acting block,
//! the gradient maps `μ_p`, `μ_k`, `μ_a`, the norm square `f_p`, and the
//! finite-difference validators that pin the sign and scale conventions.

use serde::Serialize;

use crate::error::Result;
use crate::kahler::{self, beta_field, complex_structure, induced_field, Point, Tangent};
use crate::lie_core::{ad_conjugate, CompatibleGroupSpec, GroupElement, LieVector, Subspace};
use crate::linalg::{fro, inner, CMat, I};

#[derive(Clone, Debug, PartialEq)]
pub struct MomentValue {
    pub mu: LieVector,
    pub mu_p: LieVector,
    pub mu_k: LieVector,
    pub f_p: f64,
}

fn mu_single(spec: &CompatibleGroupSpec, p: &CMat) -> CMat {
    // the (k/N)·I part disappears under the traceless pullback
    spec.pullback(&p.map(|z| -z * I))
}

/// Pulled-back momentum map, skew-Hermitian traceless `n × n`.
pub fn mu(spec: &CompatibleGroupSpec, x: &Point) -> LieVector {
    let m = x
        .factors()
        .iter()
        .zip(x.signs())
        .map(|(f, s)| mu_single(spec, f.projection()).scale(*s))
        .fold(CMat::zeros(spec.n, spec.n), |a, b| a + b);
    LieVector::new_unchecked(m, Subspace::U)
}

/// `proj_p(i μ(x))`.
pub fn mu_p(spec: &CompatibleGroupSpec, x: &Point) -> LieVector {
    let imu = mu(spec, x).times_i();
    LieVector::new_unchecked(spec.proj_p_raw(imu.entries()), Subspace::P)
}

/// `k`-component of `μ(x)`.
pub fn mu_k(spec: &CompatibleGroupSpec, x: &Point) -> LieVector {
    LieVector::new_unchecked(spec.proj_k_raw(mu(spec, x).entries()), Subspace::K)
}

/// `π_a ∘ μ_p`.
pub fn mu_a(spec: &CompatibleGroupSpec, x: &Point) -> LieVector {
    spec.proj_a(&mu_p(spec, x))
}

pub fn f_p(spec: &CompatibleGroupSpec, x: &Point) -> f64 {
    0.5 * mu_p(spec, x).norm().powi(2)
}

/// `∇f_p(x) = β_X(x)` with `β = μ_p(x)`.
pub fn grad_f_p(spec: &CompatibleGroupSpec, x: &Point) -> Tangent {
    beta_field(spec, &mu_p(spec, x), x)
}

pub fn moment_value(spec: &CompatibleGroupSpec, x: &Point) -> MomentValue {
    let mu = mu(spec, x);
    let mu_p = LieVector::new_unchecked(spec.proj_p_raw(mu.times_i().entries()), Subspace::P);
    let mu_k = LieVector::new_unchecked(spec.proj_k_raw(mu.entries()), Subspace::K);
    let f_p = 0.5 * mu_p.norm().powi(2);
    MomentValue { mu, mu_p, mu_k, f_p }
}

/// Central difference with one Richardson step of `s ↦ f(x(s))` along the
/// unit tangent `v / |v|`, rescaled by `|v|`.
pub fn fd_derivative<F>(x: &Point, v: &Tangent, f: F) -> Result<f64>
where
    F: Fn(&Point) -> f64,
{
    let nv = v.fro_norm();
    if nv == 0.0 {
        return Ok(0.0);
    }
    let unit = v.map_values(|m| m.scale(1.0 / nv));
    let size = x.factors().iter().map(|p| fro(p.projection()).powi(2)).sum::<f64>().sqrt();
    let h = 1e-4 * (1.0 + size);
    let central = |h: f64| -> Result<f64> {
        let fp = f(&x.along(&unit, h)?);
        let fm = f(&x.along(&unit, -h)?);
        Ok((fp - fm) / (2.0 * h))
    };
    let coarse = central(h)?;
    let fine = central(h / 2.0)?;
    Ok(nv * (4.0 * fine - coarse) / 3.0)
}

/// Gradient of `f` for the signed metric, assembled from finite differences
/// on an orthonormal tangent basis.
pub fn fd_gradient<F>(x: &Point, f: F) -> Result<Tangent>
where
    F: Fn(&Point) -> f64,
{
    let basis = x.tangent_basis();
    let n = x.ambient_n();
    let mut acc = vec![CMat::zeros(n, n); x.factors().len()];
    for e in &basis {
        let d = fd_derivative(x, e, &f)?;
        for (slot, (val, sign)) in acc.iter_mut().zip(e.values().iter().zip(x.signs())) {
            *slot += val.scale(d * sign);
        }
    }
    Tangent::from_values(x, acc)
}

fn tangent_diff(a: &Tangent, b: &Tangent) -> f64 {
    a.values()
        .iter()
        .zip(b.values())
        .map(|(p, q)| fro(&(p - q)).powi(2))
        .sum::<f64>()
        .sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct IdentityResiduals {
    /// `|dμ^ξ[v] − ω(ξ_Z, v)|`
    pub d_mu: f64,
    /// `||grad μ^ξ − J ξ_Z||`
    pub grad_mu: f64,
}

/// Finite-difference check of `dμ^ξ = ι_{ξ_Z} ω` and `grad μ^ξ = J ξ_Z` for `ξ ∈ u(n)`.
pub fn identity_check(
    spec: &CompatibleGroupSpec,
    x: &Point,
    xi: &LieVector,
    v: &Tangent,
) -> Result<IdentityResiduals> {
    let mu_xi = |y: &Point| inner(mu(spec, y).entries(), xi.entries());
    let field = induced_field(spec, Some(xi), None, x);
    let d = fd_derivative(x, v, mu_xi)?;
    let om = kahler::omega(&field, v);
    let grad = fd_gradient(x, mu_xi)?;
    let expected = complex_structure(&field);
    Ok(IdentityResiduals { d_mu: (d - om).abs(), grad_mu: tangent_diff(&grad, &expected) })
}

/// `||grad μ_p^β − β_X||` by finite differences, `β ∈ p`.
pub fn gradient_identity_check(spec: &CompatibleGroupSpec, x: &Point, beta: &LieVector) -> Result<f64> {
    let f = |y: &Point| mu_p(spec, y).inner(beta);
    let grad = fd_gradient(x, f)?;
    Ok(tangent_diff(&grad, &beta_field(spec, beta, x)))
}

/// `||μ_p(kx) − Ad(k) μ_p(x)||`.
pub fn equivariance_residual(spec: &CompatibleGroupSpec, k: &GroupElement, x: &Point) -> Result<f64> {
    let kx = x.act_group(spec, k)?;
    let lhs = mu_p(spec, &kx);
    let rhs = ad_conjugate(k, &mu_p(spec, x))?;
    Ok(fro(&(lhs.entries() - rhs.entries())))
}

/// Orthogonal projection of `ξ ∈ p` onto `Ad(k) a`.
pub fn project_conjugated_torus(k: &GroupElement, xi: &LieVector) -> Result<LieVector> {
    let kinv = k.inverse()?;
    let back = ad_conjugate(&kinv, xi)?;
    let diag = CompatibleGroupSpec::torus(xi.dim()).proj_a(&back);
    ad_conjugate(k, &diag.retag(Subspace::P))
}

/// Max over samples of `||μ_{a'}(x) − Ad(k) μ_a(k⁻¹x)||` with `a' = Ad(k) a`.
pub fn abelian_equivariance_check(
    spec: &CompatibleGroupSpec,
    k: &GroupElement,
    samples: &[Point],
) -> Result<f64> {
    let kinv = k.inverse()?;
    let mut worst: f64 = 0.0;
    for x in samples {
        let lhs = project_conjugated_torus(k, &mu_p(spec, x))?;
        let moved = x.act_group(spec, &kinv)?;
        let rhs = ad_conjugate(k, &mu_a(spec, &moved).retag(Subspace::P))?;
        worst = worst.max(fro(&(lhs.entries() - rhs.entries())));
    }
    Ok(worst)
}
