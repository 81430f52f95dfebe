//! Dense complex matrix helpers shared by every module.
//!
//! All inner products are the real trace pairing `<A, B> = Re tr(A* B)`.

use nalgebra::{Complex, DMatrix};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{GradmapError, Result};

pub type C64 = Complex<f64>;
pub type CMat = DMatrix<C64>;
pub type RMat = DMatrix<f64>;

pub const I: C64 = C64::new(0.0, 1.0);

/// Per-sample generator: `seed ⊕ counter`, so results never depend on scheduling.
pub fn sample_rng(seed: u64, counter: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ counter)
}

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn real(x: f64) -> C64 {
    C64::new(x, 0.0)
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

pub fn inner(a: &CMat, b: &CMat) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x.conj() * y).re).sum()
}

pub fn fro(a: &CMat) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

pub fn trace(a: &CMat) -> C64 {
    a.diagonal().iter().sum()
}

pub fn commutator(a: &CMat, b: &CMat) -> CMat {
    a * b - b * a
}

pub fn hermitian_part(a: &CMat) -> CMat {
    (a + a.adjoint()).scale(0.5)
}

pub fn skew_part(a: &CMat) -> CMat {
    (a - a.adjoint()).scale(0.5)
}

/// Removes the `tr(A)/n · I` component.
pub fn traceless(a: &CMat) -> CMat {
    let n = a.nrows();
    let t = trace(a) / real(n as f64);
    let mut out = a.clone();
    for i in 0..n {
        out[(i, i)] -= t;
    }
    out
}

pub fn real_part(a: &CMat) -> CMat {
    a.map(|z| real(z.re))
}

pub fn is_real(a: &CMat, tol: f64) -> bool {
    a.iter().all(|z| z.im.abs() <= tol)
}

pub fn scale_tol(a: &CMat, tol: f64) -> f64 {
    tol * fro(a).max(1.0)
}

/// Hermitian eigen-decomposition with eigenvalues in non-increasing order.
///
/// The underlying solver is deterministic; ties keep the solver's column order.
pub fn hermitian_eigen(h: &CMat) -> Result<(Vec<f64>, CMat)> {
    let n = h.nrows();
    let sym = hermitian_part(h);
    let eig = sym
        .try_symmetric_eigen(1e-15, 10_000)
        .ok_or_else(|| {
            GradmapError::numerical(format!(
                "Hermitian eigen-solver did not converge (n = {n}, ||H|| = {:e})",
                fro(h)
            ))
        })?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = CMat::zeros(n, n);
    for (j, &i) in order.iter().enumerate() {
        vectors.set_column(j, &eig.eigenvectors.column(i));
    }
    Ok((values, vectors))
}

/// `exp(t·H)` for Hermitian `H` via its spectral decomposition.
pub fn exp_hermitian(h: &CMat, t: f64) -> Result<CMat> {
    let (vals, vecs) = hermitian_eigen(h)?;
    let d = CMat::from_diagonal(&nalgebra::DVector::from_iterator(
        vals.len(),
        vals.iter().map(|&l| real((t * l).exp())),
    ));
    Ok(&vecs * d * vecs.adjoint())
}

/// Thin QR `Q` factor; the span of the columns is preserved.
pub fn orthonormalize(frame: &CMat) -> CMat {
    frame.clone().qr().q()
}

pub fn smallest_singular_value(m: &CMat) -> f64 {
    let sv = m.clone().svd(false, false).singular_values;
    sv.iter().cloned().fold(f64::INFINITY, f64::min)
}

/// Orthonormal basis of the orthogonal complement of the column span of an
/// orthonormal frame.
pub fn complement(frame: &CMat) -> CMat {
    let n = frame.nrows();
    let k = frame.ncols();
    let proj = frame * frame.adjoint();
    let resid = identity(n) - proj;
    let (vals, vecs) = hermitian_eigen(&resid).expect("projection eigen-decomposition");
    debug_assert!(vals[..n - k].iter().all(|&v| v > 0.5));
    vecs.columns(0, n - k).into_owned()
}

pub fn gaussian_cmat<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMat {
    CMat::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        c(re, im)
    })
}

pub fn gaussian_rmat<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMat {
    CMat::from_fn(rows, cols, |_, _| real(rng.sample(StandardNormal)))
}

/// QR of a Gaussian matrix with the phases of `diag(R)` moved into `Q`;
/// this makes the distribution of `Q` Haar on the Stiefel manifold.
pub fn haar_frame_from(g: &CMat) -> CMat {
    let qr = g.clone().qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..q.ncols() {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { real(1.0) };
        for i in 0..q.nrows() {
            q[(i, j)] *= phase;
        }
    }
    q
}

pub fn haar_unitary<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CMat {
    haar_frame_from(&gaussian_cmat(n, n, rng))
}

pub fn haar_special_unitary<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CMat {
    let u = haar_unitary(n, rng);
    let det = u.determinant();
    let root = C64::from_polar(1.0, -det.arg() / n as f64);
    u * root
}

pub fn haar_special_orthogonal<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CMat {
    let mut q = haar_frame_from(&gaussian_rmat(n, n, rng));
    // real input keeps the phases real (±1)
    q.iter_mut().for_each(|z| z.im = 0.0);
    if q.determinant().re < 0.0 {
        for i in 0..n {
            q[(i, 0)] = -q[(i, 0)];
        }
    }
    q
}

/// Block embedding `M ↦ diag(M, fill·I)` into an `ambient × ambient` matrix.
pub fn embed_block(m: &CMat, ambient: usize, fill: C64) -> CMat {
    let n = m.nrows();
    let mut out = CMat::zeros(ambient, ambient);
    out.view_mut((0, 0), (n, n)).copy_from(m);
    for i in n..ambient {
        out[(i, i)] = fill;
    }
    out
}

pub fn top_left(m: &CMat, n: usize) -> CMat {
    m.view((0, 0), (n, n)).into_owned()
}

/// Euclidean distance between two real vectors.
pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub fn norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigen_sorted_descending() {
        let h = CMat::from_row_slice(2, 2, &[real(-1.0), real(0.0), real(0.0), real(3.0)]);
        let (vals, vecs) = hermitian_eigen(&h).unwrap();
        assert_eq!(vals, vec![3.0, -1.0]);
        let rebuilt = &vecs
            * CMat::from_diagonal(&nalgebra::DVector::from_vec(vec![real(3.0), real(-1.0)]))
            * vecs.adjoint();
        assert!(fro(&(rebuilt - h)) < 1e-14);
    }

    #[test]
    fn haar_groups_have_unit_determinant() {
        let mut rng = sample_rng(3, 0);
        for n in 2..6 {
            let k = haar_special_orthogonal(n, &mut rng);
            assert!((k.determinant() - real(1.0)).norm() < 1e-12);
            assert!(fro(&(k.adjoint() * &k - identity(n))) < 1e-12);
            let u = haar_special_unitary(n, &mut rng);
            assert!((u.determinant() - real(1.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn complement_is_orthogonal() {
        let mut rng = sample_rng(5, 1);
        let f = orthonormalize(&gaussian_cmat(5, 2, &mut rng));
        let g = complement(&f);
        assert_eq!(g.ncols(), 3);
        assert!(fro(&(g.adjoint() * &f)) < 1e-12);
        assert!(fro(&(g.adjoint() * &g - identity(3))) < 1e-12);
    }
}
