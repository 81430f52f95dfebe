//! Matrix models of compatible subgroups `G = K exp(p)` of `SL(n, C)`.
//!
//! Every Lie-algebra element is an `n × n` complex matrix carrying the tag of
//! the subspace it lives in. Groups act on an ambient `C^N` through the block
//! embedding `D ↦ diag(D, I)`; Lie-algebra elements embed as `diag(ξ, 0)`.

use serde::{Deserialize, Serialize};

use crate::error::{GradmapError, Result};
use crate::linalg::{
    self, embed_block, fro, hermitian_eigen, hermitian_part, identity, inner, real, real_part,
    skew_part, top_left, traceless, CMat, C64, I,
};

/// Relative tolerance of the subspace invariants.
pub const SUBSPACE_TOL: f64 = 1e-12;
/// Largest `|t|·||ξ||_op` accepted by [`exp_lie`] before `e^x` overflows.
pub const EXP_SCALE_CAP: f64 = 700.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subspace {
    /// skew-Hermitian traceless
    U,
    /// Hermitian traceless
    Iu,
    K,
    P,
    /// real diagonal traceless
    A,
}

impl Subspace {
    pub fn is_hermitian(self) -> bool {
        matches!(self, Subspace::Iu | Subspace::P | Subspace::A)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LieVector {
    entries: CMat,
    tag: Subspace,
}

impl LieVector {
    /// Checks the invariants shared by every model (Hermitian or skew, traceless,
    /// and real diagonal for `a`). Membership in a particular `p` or `k` is checked
    /// by [`CompatibleGroupSpec::validate`].
    pub fn new(entries: CMat, tag: Subspace) -> Result<Self> {
        if !entries.is_square() {
            return Err(GradmapError::invalid("Lie algebra element must be square"));
        }
        let tol = linalg::scale_tol(&entries, SUBSPACE_TOL);
        let sym_defect = if tag.is_hermitian() {
            fro(&skew_part(&entries))
        } else {
            fro(&hermitian_part(&entries))
        };
        if sym_defect > tol {
            return Err(GradmapError::invalid(format!(
                "{tag:?}-vector fails its (skew-)Hermitian invariant by {sym_defect:e}"
            )));
        }
        let tr = linalg::trace(&entries).norm();
        if tr > tol {
            return Err(GradmapError::invalid(format!("{tag:?}-vector has trace {tr:e}")));
        }
        if tag == Subspace::A {
            let off: f64 = entries
                .iter()
                .enumerate()
                .filter(|(idx, _)| idx % (entries.nrows() + 1) != 0)
                .map(|(_, z)| z.norm_sqr())
                .sum::<f64>()
                .sqrt();
            if off > tol || !linalg::is_real(&entries, tol) {
                return Err(GradmapError::invalid("a-vector must be real diagonal"));
            }
        }
        Ok(LieVector { entries, tag })
    }

    pub(crate) fn new_unchecked(entries: CMat, tag: Subspace) -> Self {
        LieVector { entries, tag }
    }

    pub fn zero(n: usize, tag: Subspace) -> Self {
        LieVector { entries: CMat::zeros(n, n), tag }
    }

    /// Real diagonal element of `a`; the diagonal must sum to zero.
    pub fn diagonal(diag: &[f64]) -> Result<Self> {
        let m = CMat::from_diagonal(&nalgebra::DVector::from_iterator(
            diag.len(),
            diag.iter().map(|&d| real(d)),
        ));
        LieVector::new(m, Subspace::A)
    }

    pub fn entries(&self) -> &CMat {
        &self.entries
    }

    pub fn tag(&self) -> Subspace {
        self.tag
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn norm(&self) -> f64 {
        fro(&self.entries)
    }

    pub fn inner(&self, other: &LieVector) -> f64 {
        inner(&self.entries, &other.entries)
    }

    pub fn scale(&self, s: f64) -> LieVector {
        LieVector { entries: self.entries.scale(s), tag: self.tag }
    }

    pub fn normalized(&self) -> Option<LieVector> {
        let n = self.norm();
        (n > 0.0).then(|| self.scale(1.0 / n))
    }

    /// Multiplication by `i`, the isometry `u → iu` (and back).
    pub fn times_i(&self) -> LieVector {
        let tag = if self.tag.is_hermitian() { Subspace::U } else { Subspace::Iu };
        LieVector { entries: self.entries.map(|z| z * I), tag }
    }

    pub fn retag(self, tag: Subspace) -> LieVector {
        LieVector { entries: self.entries, tag }
    }

    /// Diagonal entries as reals (meaningful for `a`-vectors).
    pub fn diagonal_values(&self) -> Vec<f64> {
        self.entries.diagonal().iter().map(|z| z.re).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelName {
    /// `SL(n, R) ⊂ SL(n, C)`: `k = so(n)`, `p` real symmetric traceless.
    SlNRealForm,
    /// `SL(n, C)` itself: `k = su(n)`, `p` Hermitian traceless.
    SlNComplex,
    /// `A = exp(a)` with `a` the real diagonal traceless matrices; `K` trivial.
    TorusA,
    /// Real or complex `SL(n)` acting on the first `n` coordinates of `C^N`.
    CustomBlock,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockField {
    Real,
    Complex,
}

/// Which Cartan decomposition acts on the block.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Form {
    Real,
    Complex,
    Torus,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompatibleGroupSpec {
    pub model_name: ModelName,
    pub n: usize,
    pub ambient_n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub block_field: Option<BlockField>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupTag {
    G,
    K,
    A,
    Ambient,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroupElement {
    matrix: CMat,
    tag: GroupTag,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParabolicMembership {
    /// `g` commutes with `β` (`g ∈ G^β`).
    Levi,
    /// `lim_{t→−∞} exp(tβ) g exp(−tβ)` exists but `g ∉ G^β`.
    ParabolicOnly,
    Outside,
}

impl CompatibleGroupSpec {
    pub fn sl_n_real(n: usize) -> Self {
        CompatibleGroupSpec { model_name: ModelName::SlNRealForm, n, ambient_n: n, block_field: None }
    }

    pub fn sl_n_complex(n: usize) -> Self {
        CompatibleGroupSpec { model_name: ModelName::SlNComplex, n, ambient_n: n, block_field: None }
    }

    pub fn torus(n: usize) -> Self {
        CompatibleGroupSpec { model_name: ModelName::TorusA, n, ambient_n: n, block_field: None }
    }

    pub fn custom_block(n: usize, ambient_n: usize, field: BlockField) -> Self {
        CompatibleGroupSpec {
            model_name: ModelName::CustomBlock,
            n,
            ambient_n,
            block_field: Some(field),
        }
    }

    /// Same acting block, with the model replaced by its maximal Abelian subgroup `A`.
    pub fn torus_model(&self) -> Self {
        CompatibleGroupSpec { model_name: ModelName::TorusA, block_field: None, ..*self }
    }

    pub fn check(&self) -> Result<()> {
        if self.n < 2 {
            return Err(GradmapError::invalid("group model needs n >= 2"));
        }
        if self.ambient_n < self.n {
            return Err(GradmapError::invalid("ambient_n must be at least n"));
        }
        if self.model_name == ModelName::CustomBlock && self.block_field.is_none() {
            return Err(GradmapError::invalid("custom_block requires block_field"));
        }
        Ok(())
    }

    fn form(&self) -> Form {
        match self.model_name {
            ModelName::SlNRealForm => Form::Real,
            ModelName::SlNComplex => Form::Complex,
            ModelName::TorusA => Form::Torus,
            ModelName::CustomBlock => match self.block_field {
                Some(BlockField::Complex) => Form::Complex,
                _ => Form::Real,
            },
        }
    }

    pub fn is_real_form(&self) -> bool {
        self.form() == Form::Real
    }

    /// Real dimension of `p`.
    pub fn p_dim(&self) -> usize {
        let n = self.n;
        match self.form() {
            Form::Real => n * (n + 1) / 2 - 1,
            Form::Complex => n * n - 1,
            Form::Torus => n - 1,
        }
    }

    /// Orthonormal basis of `p` under the trace pairing.
    pub fn p_basis(&self) -> Vec<LieVector> {
        let n = self.n;
        let mut out = Vec::new();
        // traceless diagonal: Gram–Schmidt on e_i - e_{i+1}
        for j in 1..n {
            let mut d = vec![0.0; n];
            for slot in d.iter_mut().take(j) {
                *slot = 1.0;
            }
            d[j] = -(j as f64);
            let s = linalg::norm(&d);
            d.iter_mut().for_each(|x| *x /= s);
            out.push(LieVector::new_unchecked(
                CMat::from_diagonal(&nalgebra::DVector::from_iterator(n, d.iter().map(|&x| real(x)))),
                Subspace::P,
            ));
        }
        if self.form() == Form::Torus {
            return out;
        }
        let h = std::f64::consts::FRAC_1_SQRT_2;
        for a in 0..n {
            for b in a + 1..n {
                let mut m = CMat::zeros(n, n);
                m[(a, b)] = real(h);
                m[(b, a)] = real(h);
                out.push(LieVector::new_unchecked(m, Subspace::P));
                if self.form() == Form::Complex {
                    let mut m = CMat::zeros(n, n);
                    m[(a, b)] = C64::new(0.0, -h);
                    m[(b, a)] = C64::new(0.0, h);
                    out.push(LieVector::new_unchecked(m, Subspace::P));
                }
            }
        }
        out
    }

    fn require_herm(m: &CMat) -> Result<()> {
        let defect = fro(&skew_part(m));
        if defect > linalg::scale_tol(m, SUBSPACE_TOL) {
            return Err(GradmapError::invalid(format!(
                "expected a Hermitian matrix, skew defect {defect:e}"
            )));
        }
        Ok(())
    }

    fn require_square(&self, m: &CMat) -> Result<()> {
        if m.nrows() != self.n || m.ncols() != self.n {
            return Err(GradmapError::invalid(format!(
                "expected {n}x{n} matrix, got {}x{}",
                m.nrows(),
                m.ncols(),
                n = self.n
            )));
        }
        Ok(())
    }

    /// Orthogonal projection of a Hermitian matrix onto `p`.
    pub fn proj_p(&self, m: &CMat) -> Result<LieVector> {
        self.require_square(m)?;
        Self::require_herm(m)?;
        Ok(LieVector::new_unchecked(self.proj_p_raw(m), Subspace::P))
    }

    pub(crate) fn proj_p_raw(&self, m: &CMat) -> CMat {
        match self.form() {
            Form::Real => traceless(&hermitian_part(&real_part(m))),
            Form::Complex => traceless(&hermitian_part(m)),
            Form::Torus => diagonal_traceless(m),
        }
    }

    /// Orthogonal projection of a skew-Hermitian matrix onto `k`.
    pub fn proj_k(&self, m: &CMat) -> Result<LieVector> {
        self.require_square(m)?;
        let defect = fro(&hermitian_part(m));
        if defect > linalg::scale_tol(m, SUBSPACE_TOL) {
            return Err(GradmapError::invalid(format!(
                "expected a skew-Hermitian matrix, Hermitian defect {defect:e}"
            )));
        }
        Ok(LieVector::new_unchecked(self.proj_k_raw(m), Subspace::K))
    }

    pub(crate) fn proj_k_raw(&self, m: &CMat) -> CMat {
        match self.form() {
            Form::Real => skew_part(&real_part(m)),
            Form::Complex => traceless(&skew_part(m)),
            Form::Torus => CMat::zeros(m.nrows(), m.ncols()),
        }
    }

    /// Orthogonal projection of `p` onto the diagonal `a`.
    pub fn proj_a(&self, xi: &LieVector) -> LieVector {
        LieVector::new_unchecked(diagonal_traceless(xi.entries()), Subspace::A)
    }

    /// Splits `X ∈ g` into its `k` and `p` parts.
    pub fn decompose(&self, x: &CMat) -> (LieVector, LieVector) {
        (
            LieVector::new_unchecked(self.proj_k_raw(&skew_part(x)), Subspace::K),
            LieVector::new_unchecked(self.proj_p_raw(&hermitian_part(x)), Subspace::P),
        )
    }

    /// Checks that `xi` lies in `p` (or `k`) of this model.
    pub fn validate(&self, xi: &LieVector) -> Result<()> {
        self.require_square(xi.entries())?;
        let m = xi.entries();
        let resid = match xi.tag() {
            Subspace::P | Subspace::A => fro(&(m - self.proj_p_raw(m))),
            Subspace::K => fro(&(m - self.proj_k_raw(m))),
            _ => 0.0,
        };
        if resid > linalg::scale_tol(m, SUBSPACE_TOL) {
            return Err(GradmapError::invalid(format!(
                "{:?}-vector is not in the {:?} subspace of {:?} (residual {resid:e})",
                xi.tag(),
                xi.tag(),
                self.model_name
            )));
        }
        Ok(())
    }

    /// Embeds an `n × n` algebra element as `diag(ξ, 0)` in the ambient algebra.
    pub fn embed_algebra(&self, m: &CMat) -> CMat {
        embed_block(m, self.ambient_n, real(0.0))
    }

    /// Embeds an `n × n` group element as `diag(g, I)`.
    pub fn embed_group(&self, m: &CMat) -> CMat {
        embed_block(m, self.ambient_n, real(1.0))
    }

    /// Orthogonal projection of an ambient (skew-)Hermitian traceless matrix
    /// onto the embedded `u(n)`-block: extract the block and remove its trace.
    pub fn pullback(&self, ambient: &CMat) -> CMat {
        traceless(&top_left(ambient, self.n))
    }

    /// Haar-random element of `K`.
    pub fn random_k<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> GroupElement {
        let m = match self.form() {
            Form::Real => linalg::haar_special_orthogonal(self.n, rng),
            Form::Complex => linalg::haar_special_unitary(self.n, rng),
            Form::Torus => identity(self.n),
        };
        GroupElement { matrix: m, tag: GroupTag::K }
    }

    /// Random element of `p` with i.i.d. Gaussian coordinates (isotropic).
    pub fn random_p<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> LieVector {
        let g = linalg::gaussian_cmat(self.n, self.n, rng);
        LieVector::new_unchecked(self.proj_p_raw(&hermitian_part(&g)), Subspace::P)
    }

    /// Haar direction on the unit sphere of `p`.
    pub fn random_unit_p<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> LieVector {
        loop {
            if let Some(v) = self.random_p(rng).normalized() {
                return v;
            }
        }
    }

    /// Random skew-Hermitian traceless element of `u(n)`.
    pub fn random_u<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> LieVector {
        let g = linalg::gaussian_cmat(self.n, self.n, rng);
        LieVector::new_unchecked(traceless(&skew_part(&g)), Subspace::U)
    }

    /// `k · exp(β)` with `k` Haar in `K` and `β` Gaussian in `p` scaled by `spread`.
    pub fn random_g<R: rand::Rng + ?Sized>(&self, spread: f64, rng: &mut R) -> GroupElement {
        let k = self.random_k(rng);
        let beta = self.random_p(rng).scale(spread);
        let e = exp_lie(&beta, 1.0).expect("bounded random exponent");
        GroupElement { matrix: k.matrix * e.matrix, tag: GroupTag::G }
    }

    /// Validates and wraps a matrix as an element of `G` (or `K`).
    pub fn group_element(&self, m: CMat, tag: GroupTag) -> Result<GroupElement> {
        self.require_square(&m)?;
        let det = m.determinant();
        if (det - real(1.0)).norm() > 1e-10 {
            return Err(GradmapError::invalid(format!("determinant {det} is not 1")));
        }
        match tag {
            GroupTag::K => {
                let unit = fro(&(m.adjoint() * &m - identity(self.n)));
                if unit > 1e-10 {
                    return Err(GradmapError::invalid(format!("K element not unitary ({unit:e})")));
                }
                if self.form() == Form::Real && !linalg::is_real(&m, 1e-12) {
                    return Err(GradmapError::invalid("K element of a real form must be real"));
                }
                if self.form() == Form::Torus && fro(&(&m - identity(self.n))) > 1e-10 {
                    return Err(GradmapError::invalid("K of the torus model is trivial"));
                }
            }
            GroupTag::G | GroupTag::A => {
                if self.form() == Form::Real && !linalg::is_real(&m, 1e-12) {
                    return Err(GradmapError::invalid("element of SL(n,R) must be real"));
                }
            }
            GroupTag::Ambient => {}
        }
        Ok(GroupElement { matrix: m, tag })
    }
}

fn diagonal_traceless(m: &CMat) -> CMat {
    let n = m.nrows();
    let mean = (0..n).map(|i| m[(i, i)].re).sum::<f64>() / n as f64;
    CMat::from_diagonal(&nalgebra::DVector::from_iterator(
        n,
        (0..n).map(|i| real(m[(i, i)].re - mean)),
    ))
}

impl GroupElement {
    pub fn identity(n: usize, tag: GroupTag) -> Self {
        GroupElement { matrix: identity(n), tag }
    }

    /// Wraps an arbitrary invertible matrix acting on the ambient space.
    pub fn ambient(m: CMat) -> Self {
        GroupElement { matrix: m, tag: GroupTag::Ambient }
    }

    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    pub fn tag(&self) -> GroupTag {
        self.tag
    }

    pub fn inverse(&self) -> Result<GroupElement> {
        let inv = if self.tag == GroupTag::K {
            self.matrix.adjoint()
        } else {
            self.matrix
                .clone()
                .try_inverse()
                .ok_or_else(|| GradmapError::numerical("group element is singular"))?
        };
        Ok(GroupElement { matrix: inv, tag: self.tag })
    }

    pub fn compose(&self, other: &GroupElement) -> GroupElement {
        let tag = if self.tag == other.tag { self.tag } else { GroupTag::Ambient };
        GroupElement { matrix: &self.matrix * &other.matrix, tag }
    }
}

/// Sorted spectrum of `ξ ∈ p`: the unique point of `K·ξ ∩ a_+` with
/// `a_+` the non-increasing diagonals.
pub fn chamber_project(xi: &LieVector) -> Result<Vec<f64>> {
    if !xi.tag().is_hermitian() {
        return Err(GradmapError::invalid("chamber_project expects a p-vector"));
    }
    let (vals, _) = hermitian_eigen(xi.entries())?;
    Ok(vals)
}

/// `Ad(k) ξ = k ξ k⁻¹` for `k ∈ K`.
pub fn ad_conjugate(k: &GroupElement, xi: &LieVector) -> Result<LieVector> {
    if k.tag() != GroupTag::K {
        return Err(GradmapError::invalid("ad_conjugate requires an element of K"));
    }
    let m = k.matrix();
    if m.nrows() != xi.dim() {
        return Err(GradmapError::invalid("dimension mismatch in ad_conjugate"));
    }
    let unit = fro(&(m.adjoint() * m - identity(m.nrows())));
    if unit > 1e-10 {
        return Err(GradmapError::invalid(format!("k is not unitary ({unit:e})")));
    }
    let out = m * xi.entries() * m.adjoint();
    let tag = if xi.tag() == Subspace::A { Subspace::P } else { xi.tag() };
    Ok(LieVector::new_unchecked(out, tag))
}

/// Matrix exponential `exp(tξ)`; `ξ` is Hermitian or skew-Hermitian so the
/// spectral route is exact up to rounding.
pub fn exp_lie(xi: &LieVector, t: f64) -> Result<GroupElement> {
    let m = xi.entries();
    let n = m.nrows();
    let tag = match xi.tag() {
        Subspace::K => GroupTag::K,
        Subspace::P => GroupTag::G,
        Subspace::A => GroupTag::A,
        Subspace::U | Subspace::Iu => GroupTag::Ambient,
    };
    if xi.tag() == Subspace::A {
        let mut d = CMat::zeros(n, n);
        for i in 0..n {
            let x = t * m[(i, i)].re;
            if x.abs() > EXP_SCALE_CAP {
                return Err(GradmapError::ScaleCap { scale: x.abs(), cap: EXP_SCALE_CAP });
            }
            d[(i, i)] = real(x.exp());
        }
        return Ok(GroupElement { matrix: d, tag });
    }
    if xi.tag().is_hermitian() {
        let (vals, vecs) = hermitian_eigen(m)?;
        let op = vals.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        if (t * op).abs() > EXP_SCALE_CAP {
            return Err(GradmapError::ScaleCap { scale: (t * op).abs(), cap: EXP_SCALE_CAP });
        }
        let d = nalgebra::DVector::from_iterator(n, vals.iter().map(|&l| real((t * l).exp())));
        Ok(GroupElement { matrix: &vecs * CMat::from_diagonal(&d) * vecs.adjoint(), tag })
    } else {
        // ξ = -i H with H = iξ Hermitian
        let h = m.map(|z| z * I);
        let (vals, vecs) = hermitian_eigen(&h)?;
        let d = nalgebra::DVector::from_iterator(n, vals.iter().map(|&l| C64::from_polar(1.0, -t * l)));
        Ok(GroupElement { matrix: &vecs * CMat::from_diagonal(&d) * vecs.adjoint(), tag })
    }
}

/// Groups sorted eigenvalues into blocks of equal value (within `tol`).
pub(crate) fn eigen_blocks(vals: &[f64], tol: f64) -> Vec<usize> {
    let mut block = Vec::with_capacity(vals.len());
    let mut current = 0;
    for (i, v) in vals.iter().enumerate() {
        if i > 0 && (vals[i - 1] - v).abs() > tol {
            current += 1;
        }
        block.push(current);
    }
    block
}

/// Classifies `g` relative to the parabolic `G^{β+}` (limit as `t → −∞`)
/// and its Levi factor `G^β`.
pub fn parabolic_membership(g: &GroupElement, beta: &LieVector) -> Result<ParabolicMembership> {
    let gm = g.matrix();
    if gm.nrows() != beta.dim() {
        return Err(GradmapError::invalid("dimension mismatch in parabolic_membership"));
    }
    if fro(&linalg::commutator(gm, beta.entries())) <= 1e-9 * fro(gm).max(1.0) {
        return Ok(ParabolicMembership::Levi);
    }
    let (vals, vecs) = hermitian_eigen(beta.entries())?;
    let scale = vals.iter().fold(1.0_f64, |a, v| a.max(v.abs()));
    let blocks = eigen_blocks(&vals, 1e-9 * scale);
    let h = vecs.adjoint() * gm * &vecs;
    let tol = 1e-9 * fro(&h).max(1.0);
    // entry (i, j) scales like e^{t(λ_i − λ_j)}: diverges as t → −∞ when λ_i < λ_j
    for i in 0..h.nrows() {
        for j in 0..h.ncols() {
            if blocks[i] > blocks[j] && h[(i, j)].norm() > tol {
                return Ok(ParabolicMembership::Outside);
            }
        }
    }
    Ok(ParabolicMembership::ParabolicOnly)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c, sample_rng};

    fn m2(a: C64, b: C64, cc: C64, d: C64) -> CMat {
        CMat::from_row_slice(2, 2, &[a, b, cc, d])
    }

    #[test]
    fn proj_p_examples_sl2r() {
        let spec = CompatibleGroupSpec::sl_n_real(2);
        let z = real(0.0);
        let one = real(1.0);
        let m = m2(z, c(0.0, 1.0), c(0.0, -1.0), z);
        assert!(fro(spec.proj_p(&m).unwrap().entries()) < 1e-15);
        let d = m2(one, z, z, -one);
        assert!(fro(&(spec.proj_p(&d).unwrap().entries() - &d)) < 1e-15);
        let m = m2(z, c(1.0, 1.0), c(1.0, -1.0), z);
        let p = spec.proj_p(&m).unwrap();
        assert!(fro(&(p.entries() - m2(z, one, one, z))) < 1e-15);
        // residual orthogonal to every element of p
        let resid = &m - p.entries();
        for b in spec.p_basis() {
            assert!(inner(&resid, b.entries()).abs() < 1e-15);
        }
    }

    #[test]
    fn proj_p_rejects_non_hermitian() {
        let spec = CompatibleGroupSpec::sl_n_real(2);
        let m = m2(real(0.0), real(1.0), real(0.0), real(0.0));
        assert!(matches!(spec.proj_p(&m), Err(GradmapError::InvalidInput(_))));
    }

    #[test]
    fn chamber_project_examples() {
        let a = LieVector::diagonal(&[-1.0, 1.0]).unwrap();
        assert_eq!(chamber_project(&a).unwrap(), vec![1.0, -1.0]);
        let x = LieVector::new(m2(real(0.0), real(1.0), real(1.0), real(0.0)), Subspace::P).unwrap();
        let v = chamber_project(&x).unwrap();
        assert!((v[0] - 1.0).abs() < 1e-14 && (v[1] + 1.0).abs() < 1e-14);
        let z = LieVector::zero(3, Subspace::P);
        assert_eq!(chamber_project(&z).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn ad_conjugate_rotation() {
        let spec = CompatibleGroupSpec::sl_n_real(2);
        let rot = spec
            .group_element(m2(real(0.0), real(-1.0), real(1.0), real(0.0)), GroupTag::K)
            .unwrap();
        let xi = LieVector::diagonal(&[1.0, -1.0]).unwrap().retag(Subspace::P);
        let out = ad_conjugate(&rot, &xi).unwrap();
        assert!(fro(&(out.entries() - m2(real(-1.0), real(0.0), real(0.0), real(1.0)))) < 1e-15);
        let spec_out = chamber_project(&out).unwrap();
        assert!((spec_out[0] - 1.0).abs() < 1e-14 && (spec_out[1] + 1.0).abs() < 1e-14);
        let id = GroupElement::identity(2, GroupTag::K);
        assert_eq!(ad_conjugate(&id, &xi).unwrap(), xi);
        let not_k = GroupElement::ambient(identity(2));
        assert!(ad_conjugate(&not_k, &xi).is_err());
    }

    #[test]
    fn ad_conjugate_preserves_norm_and_p() {
        let mut rng = sample_rng(11, 0);
        for n in [2, 3, 4] {
            let spec = CompatibleGroupSpec::sl_n_real(n);
            for _ in 0..100 {
                let k = spec.random_k(&mut rng);
                let xi = spec.random_p(&mut rng);
                let out = ad_conjugate(&k, &xi).unwrap();
                assert!((out.norm() - xi.norm()).abs() < 1e-12 * xi.norm().max(1.0));
                spec.validate(&out).unwrap();
            }
        }
    }

    #[test]
    fn exp_lie_examples() {
        let z = LieVector::zero(3, Subspace::P);
        assert!(fro(&(exp_lie(&z, 1.0).unwrap().matrix() - identity(3))) < 1e-15);
        let a = LieVector::diagonal(&[1.0, -1.0]).unwrap();
        let e = exp_lie(&a, 2f64.ln()).unwrap();
        assert!((e.matrix()[(0, 0)].re - 2.0).abs() < 1e-14);
        assert!((e.matrix()[(1, 1)].re - 0.5).abs() < 1e-14);
        let huge = a.scale(1e3);
        assert!(matches!(exp_lie(&huge, 1.0), Err(GradmapError::ScaleCap { .. })));
    }

    #[test]
    fn exp_lie_inverse_and_flow_law() {
        let mut rng = sample_rng(12, 0);
        let spec = CompatibleGroupSpec::sl_n_complex(3);
        for _ in 0..50 {
            let xi = spec.random_unit_p(&mut rng);
            let t = rand::Rng::random_range(&mut rng, -5.0..5.0);
            let prod = exp_lie(&xi, t).unwrap().matrix() * exp_lie(&xi, -t).unwrap().matrix();
            assert!(fro(&(prod - identity(3))) < 1e-10);
            let s = rand::Rng::random_range(&mut rng, -2.0..2.0);
            let lhs = exp_lie(&xi, s).unwrap().matrix() * exp_lie(&xi, t).unwrap().matrix();
            let rhs = exp_lie(&xi, s + t).unwrap().matrix().clone();
            assert!(fro(&(&lhs - &rhs)) < 1e-10 * fro(&rhs).max(1.0));
            let u = spec.random_u(&mut rng);
            let e = exp_lie(&u, t).unwrap();
            assert!(fro(&(e.matrix().adjoint() * e.matrix() - identity(3))) < 1e-12);
        }
    }

    #[test]
    fn parabolic_examples() {
        let beta = LieVector::diagonal(&[1.0, -1.0]).unwrap().retag(Subspace::P);
        let diag = GroupElement::ambient(m2(real(2.0), real(0.0), real(0.0), real(0.5)));
        assert_eq!(parabolic_membership(&diag, &beta).unwrap(), ParabolicMembership::Levi);
        let upper = GroupElement::ambient(m2(real(1.0), real(1.0), real(0.0), real(1.0)));
        assert_eq!(
            parabolic_membership(&upper, &beta).unwrap(),
            ParabolicMembership::ParabolicOnly
        );
        let lower = GroupElement::ambient(m2(real(1.0), real(0.0), real(1.0), real(1.0)));
        assert_eq!(parabolic_membership(&lower, &beta).unwrap(), ParabolicMembership::Outside);
        let zero = LieVector::zero(2, Subspace::P);
        assert_eq!(parabolic_membership(&lower, &zero).unwrap(), ParabolicMembership::Levi);
    }

    #[test]
    fn projections_are_orthogonal_idempotents() {
        let mut rng = sample_rng(13, 0);
        for spec in [
            CompatibleGroupSpec::sl_n_real(3),
            CompatibleGroupSpec::sl_n_complex(3),
            CompatibleGroupSpec::torus(3),
        ] {
            for _ in 0..50 {
                let h = traceless(&hermitian_part(&linalg::gaussian_cmat(3, 3, &mut rng)));
                let p = spec.proj_p(&h).unwrap();
                let pp = spec.proj_p(p.entries()).unwrap();
                assert!(fro(&(pp.entries() - p.entries())) < 1e-12);
                let y = spec.random_p(&mut rng);
                assert!(inner(&(&h - p.entries()), y.entries()).abs() < 1e-12);
                let s = traceless(&skew_part(&linalg::gaussian_cmat(3, 3, &mut rng)));
                let k = spec.proj_k(&s).unwrap();
                let kk = spec.proj_k(k.entries()).unwrap();
                assert!(fro(&(kk.entries() - k.entries())) < 1e-12);
                if spec.is_real_form() {
                    // u = k ⊕ ip orthogonally
                    let ip = y.times_i();
                    assert!(inner(k.entries(), ip.entries()).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn k_plus_p_is_identity_on_g() {
        let mut rng = sample_rng(14, 0);
        let spec = CompatibleGroupSpec::sl_n_real(4);
        for _ in 0..20 {
            let x = traceless(&linalg::gaussian_rmat(4, 4, &mut rng));
            let (k, p) = spec.decompose(&x);
            assert!(fro(&(k.entries() + p.entries() - &x)) < 1e-12);
        }
        let spec = CompatibleGroupSpec::sl_n_complex(3);
        for _ in 0..20 {
            let x = traceless(&linalg::gaussian_cmat(3, 3, &mut rng));
            let (k, p) = spec.decompose(&x);
            assert!(fro(&(k.entries() + p.entries() - &x)) < 1e-12);
        }
    }

    #[test]
    fn p_basis_is_orthonormal() {
        for spec in [
            CompatibleGroupSpec::sl_n_real(4),
            CompatibleGroupSpec::sl_n_complex(3),
            CompatibleGroupSpec::torus(4),
        ] {
            let basis = spec.p_basis();
            assert_eq!(basis.len(), spec.p_dim());
            for (i, a) in basis.iter().enumerate() {
                spec.validate(a).unwrap();
                for (j, b) in basis.iter().enumerate() {
                    let expect = if i == j { 1.0 } else { 0.0 };
                    assert!((a.inner(b) - expect).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn lie_vector_invariants() {
        let herm = m2(real(1.0), real(0.0), real(0.0), real(-1.0));
        assert!(LieVector::new(herm.clone(), Subspace::U).is_err());
        assert!(LieVector::new(herm.clone(), Subspace::Iu).is_ok());
        let traced = m2(real(1.0), real(0.0), real(0.0), real(1.0));
        assert!(LieVector::new(traced, Subspace::P).is_err());
        let offdiag = m2(real(0.0), real(1.0), real(1.0), real(0.0));
        assert!(LieVector::new(offdiag, Subspace::A).is_err());
        let spec = CompatibleGroupSpec::sl_n_real(2);
        let complex_p = LieVector::new(m2(real(0.0), c(0.0, 1.0), c(0.0, -1.0), real(0.0)), Subspace::P)
            .unwrap();
        assert!(spec.validate(&complex_p).is_err());
    }

    #[test]
    fn group_element_checks() {
        let spec = CompatibleGroupSpec::sl_n_real(2);
        assert!(spec.group_element(identity(2).scale(2.0), GroupTag::G).is_err());
        let m = m2(real(2.0), real(0.0), real(0.0), real(0.5));
        assert!(spec.group_element(m.clone(), GroupTag::G).is_ok());
        assert!(spec.group_element(m, GroupTag::K).is_err());
        let mut rng = sample_rng(15, 0);
        let g = spec.random_g(0.5, &mut rng);
        assert!((g.matrix().determinant() - real(1.0)).norm() < 1e-10);
    }
}
