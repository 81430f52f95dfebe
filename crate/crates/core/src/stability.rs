//! Stability tests: the flow criterion (`inf |μ_p|` along the orbit), the
//! maximal-weight criterion, the exact Abelian test on Plücker weights, and
//! the torus-intersection check.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{GradmapError, Result};
use crate::flows::{negative_flow, weight_filtration_limit, FlowOptions, FlowStatus};
use crate::kahler::{beta_field, Point};
use crate::lie_core::{CompatibleGroupSpec, GroupElement, LieVector, ModelName, Subspace};
use crate::linalg::{self, sample_rng, CMat, RMat};
use crate::minnorm::min_norm_point;
use crate::moment::mu_p;

pub const STABILIZER_TOL: f64 = 1e-7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Stable,
    SemistableOnly,
    Unstable,
    Undetermined,
}

impl Verdict {
    pub fn is_semistable(self) -> bool {
        matches!(self, Verdict::Stable | Verdict::SemistableOnly)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Stable => "stable",
            Verdict::SemistableOnly => "semistable_only",
            Verdict::Unstable => "unstable",
            Verdict::Undetermined => "undetermined",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StabilityVerdict {
    pub point_id: u64,
    pub verdict: Verdict,
    pub f_p_limit: f64,
    pub min_lambda_sampled: f64,
    pub n_directions: usize,
    pub stabilizer_p_dim: usize,
    /// Stabilizer dimension at the flow limit; positive for semistable points
    /// whose orbit is not closed.
    pub limit_stabilizer_p_dim: usize,
    pub flow_semistable: bool,
    pub analytic_semistable: bool,
    /// Heuristic only: flow converged in the zero set with a bounded group path.
    pub polystable_hint: bool,
    pub flow_status: FlowStatus,
    pub diagnostics: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifyOptions {
    pub f_tol: f64,
    pub lambda_tol: f64,
    /// Number of antithetic Haar pairs `±β`.
    pub n_directions: usize,
    pub seed: u64,
    pub point_id: u64,
    pub flow: FlowOptions,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        ClassifyOptions {
            f_tol: 1e-8,
            lambda_tol: 1e-6,
            n_directions: 16,
            seed: 0,
            point_id: 0,
            flow: FlowOptions { tol: 1e-9, ..FlowOptions::default() },
        }
    }
}

/// `dim {β ∈ p : β_X(x) = 0}` by singular-value thresholding.
pub fn stabilizer_p_dim(spec: &CompatibleGroupSpec, x: &Point) -> usize {
    let basis = spec.p_basis();
    let cols: Vec<Vec<f64>> = basis
        .iter()
        .map(|b| {
            beta_field(spec, b, x)
                .values()
                .iter()
                .flat_map(|m| m.iter().flat_map(|z| [z.re, z.im]).collect::<Vec<_>>())
                .collect()
        })
        .collect();
    let rows = cols[0].len();
    let m = RMat::from_fn(rows, cols.len(), |i, j| cols[j][i]);
    let rank = m.singular_values().iter().filter(|s| **s > STABILIZER_TOL).count();
    basis.len() - rank
}

/// Unitary `k` with `g = k·l`, `l` block lower triangular in the eigenbasis
/// `vecs` (descending eigenvalues); `l` then lies in the parabolic that leaves
/// `λ(·, ξ)` unchanged.
fn parabolic_k_factor(g: &CMat, vecs: &CMat) -> CMat {
    let n = g.nrows();
    let h = vecs.adjoint() * g * vecs;
    let rev = |m: &CMat| CMat::from_fn(n, n, |i, j| m[(n - 1 - i, n - 1 - j)]);
    // Q L from Q R of the reversed matrix
    let qr = rev(&h).qr();
    let q = rev(&qr.q());
    vecs * q * vecs.adjoint()
}

fn unit_p(spec: &CompatibleGroupSpec, m: &CMat) -> Option<LieVector> {
    LieVector::new(spec.proj_p_raw(&linalg::hermitian_part(m)), Subspace::P).ok()?.normalized()
}

/// Directions where `λ` is most likely to be negative: the descent
/// directions at `x` and at its flow limit, and the limit direction moved back
/// to `x` along the tracked group path.
fn informed_directions(
    spec: &CompatibleGroupSpec,
    x: &Point,
    limit: &Point,
    group: Option<&CMat>,
) -> Result<Vec<LieVector>> {
    let mut out = Vec::new();
    for y in [x, limit] {
        if let Some(b) = mu_p(spec, y).normalized() {
            out.push(b.scale(-1.0));
        }
    }
    let beta_inf = mu_p(spec, limit);
    if let (Some(g), Some(unit)) = (group, beta_inf.normalized()) {
        let (_, vecs) = linalg::hermitian_eigen(beta_inf.entries())?;
        // ξ = −β∞ reverses the eigenvalue order
        let rev = CMat::from_fn(vecs.nrows(), vecs.ncols(), |i, j| vecs[(i, vecs.ncols() - 1 - j)]);
        let k = parabolic_k_factor(g, &rev);
        let moved = &k * unit.scale(-1.0).entries() * k.adjoint();
        if let Some(d) = unit_p(spec, &moved) {
            out.push(d);
        }
        // Abelian witnesses in the frame adapted to the transported direction
        if spec.model_name != ModelName::TorusA {
            let frame = &k * &rev;
            if let Some(d) = abelian_witness_in_frame(spec, x, &frame)? {
                out.push(d);
            }
        }
    }
    if spec.model_name != ModelName::TorusA {
        if let Some(d) = abelian_witness_in_frame(spec, x, &linalg::identity(spec.n))? {
            out.push(d);
        }
    }
    Ok(out)
}

/// Runs the exact Abelian test on `u⁻¹x` and maps a witness back by `Ad(u)`.
fn abelian_witness_in_frame(spec: &CompatibleGroupSpec, x: &Point, u: &CMat) -> Result<Option<LieVector>> {
    let y = x.act_matrix(&spec.embed_group(&u.adjoint()))?;
    let report = abelian_semistable_exact(&y, &spec.torus_model())?;
    Ok(report.witness.and_then(|w| {
        let d = CMat::from_diagonal(&DVector::from_iterator(w.len(), w.iter().map(|&v| linalg::real(v))));
        unit_p(spec, &(u * d * u.adjoint()))
    }))
}

/// Flow criterion and maximal-weight criterion side by side; disagreement is
/// reported as `undetermined`.
pub fn classify(spec: &CompatibleGroupSpec, x: &Point, opts: &ClassifyOptions) -> Result<StabilityVerdict> {
    if !(opts.f_tol > 0.0 && opts.lambda_tol > 0.0) {
        return Err(GradmapError::invalid("classification tolerances must be positive"));
    }
    let mut diagnostics = Vec::new();
    let flow_opts = FlowOptions { track_group: true, ..opts.flow };
    let flow = match negative_flow(spec, x, &flow_opts) {
        Ok(f) => Some(f),
        Err(e) => {
            diagnostics.push(format!("flow failed: {e}"));
            None
        }
    };
    let stabilizer = stabilizer_p_dim(spec, x);
    let (limit, group, f_lim, status) = match &flow {
        Some(f) => (f.limit.clone(), f.group.as_ref(), f.f_p_limit, f.status),
        None => (x.clone(), None, f64::NAN, FlowStatus::DivergedError),
    };
    if let Some(d) = flow.as_ref().and_then(|f| f.diagnostics.clone()) {
        diagnostics.push(d);
    }

    let mut directions = informed_directions(spec, x, &limit, group)?;
    let mut rng = sample_rng(opts.seed, opts.point_id);
    for _ in 0..opts.n_directions {
        let b = spec.random_unit_p(&mut rng);
        directions.push(b.scale(-1.0));
        directions.push(b);
    }
    let mut min_lambda = f64::INFINITY;
    for d in &directions {
        match weight_filtration_limit(spec, x, d) {
            Ok((_, lam)) => min_lambda = min_lambda.min(lam),
            Err(e) => diagnostics.push(format!("weight evaluation failed: {e}")),
        }
    }
    if directions.is_empty() {
        min_lambda = 0.0;
    }

    let limit_stabilizer = stabilizer_p_dim(spec, &limit);
    let flow_semistable = f_lim <= opts.f_tol;
    let analytic_semistable = min_lambda >= -opts.lambda_tol;
    let verdict = if status != FlowStatus::Converged {
        diagnostics.push(format!("flow ended with status {status}"));
        Verdict::Undetermined
    } else if flow_semistable && analytic_semistable {
        if stabilizer == 0 && limit_stabilizer == 0 {
            Verdict::Stable
        } else {
            Verdict::SemistableOnly
        }
    } else if !flow_semistable && !analytic_semistable {
        Verdict::Unstable
    } else {
        diagnostics.push(format!(
            "criteria disagree: f_p_limit = {f_lim:e}, min lambda = {min_lambda:e}"
        ));
        Verdict::Undetermined
    };
    let polystable_hint = verdict.is_semistable()
        && flow
            .as_ref()
            .and_then(|f| f.certificate)
            .is_some_and(|c| c.max_distance <= 1e-5)
        && group.is_some_and(|g| linalg::fro(g) <= 1e3);
    Ok(StabilityVerdict {
        point_id: opts.point_id,
        verdict,
        f_p_limit: f_lim,
        min_lambda_sampled: min_lambda,
        n_directions: directions.len(),
        stabilizer_p_dim: stabilizer,
        limit_stabilizer_p_dim: limit_stabilizer,
        flow_semistable,
        analytic_semistable,
        polystable_hint,
        flow_status: status,
        diagnostics,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AbelianVerdict {
    Semistable,
    Unstable,
    Undetermined,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AbelianReport {
    pub verdict: AbelianVerdict,
    /// Support weights of each factor (one list per factor).
    pub weights: Vec<Vec<Vec<f64>>>,
    /// `-min_β λ(x, β)` over unit `β ∈ a` when positive, else 0.
    pub distance: f64,
    /// Unit direction of `a` (diagonal entries) with `λ(x, β) = -distance`.
    pub witness: Option<Vec<f64>>,
}

fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..=n - (k - cur.len()) {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::with_capacity(k), &mut out);
    out
}

/// Plücker weights of a frame whose minors exceed `rel · max|minor|`.
fn support_weights(frame: &CMat, n: usize, rel: f64) -> Vec<Vec<f64>> {
    let k = frame.ncols();
    let all = subsets(frame.nrows(), k);
    let minors: Vec<f64> = all
        .iter()
        .map(|idx| CMat::from_fn(k, k, |i, j| frame[(idx[i], j)]).determinant().norm())
        .collect();
    let top = minors.iter().cloned().fold(0.0, f64::max);
    let mut out: Vec<Vec<f64>> = Vec::new();
    for (idx, m) in all.iter().zip(&minors) {
        if *m <= rel * top {
            continue;
        }
        let inside = idx.iter().filter(|&&i| i < n).count() as f64;
        let mut w = vec![-inside / n as f64; n];
        for &i in idx.iter().filter(|&&i| i < n) {
            w[i] += 1.0;
        }
        if !out.iter().any(|v| linalg::dist(v, &w) < 1e-12) {
            out.push(w);
        }
    }
    out
}

/// `(distance, witness)` for given weight sets: on one factor `λ = max <w, β>`;
/// on a product `λ = max_{W1} <w, β> − max_{W2} <w, β>`, whose minimum is
/// negative exactly when `conv W2 ⊄ conv W1`.
fn abelian_deficit(weights: &[Vec<Vec<f64>>]) -> (f64, Option<Vec<f64>>) {
    match weights {
        [w] => {
            let r = min_norm_point(w);
            if r.distance > 1e-10 {
                (r.distance, Some(r.point.iter().map(|v| -v / r.distance).collect()))
            } else {
                (0.0, None)
            }
        }
        [w1, w2] => {
            let mut best = (0.0, None);
            for v in w2 {
                let shifted: Vec<Vec<f64>> = w1.iter().map(|p| p.iter().zip(v).map(|(a, b)| a - b).collect()).collect();
                let r = min_norm_point(&shifted);
                if r.distance > 1e-10 && r.distance > best.0 {
                    // r.point = q − v with q the nearest point of conv W1
                    best = (r.distance, Some(r.point.iter().map(|x| -x / r.distance).collect()));
                }
            }
            best
        }
        _ => (0.0, None),
    }
}

/// Exact semistability for the diagonal torus via the Plücker support of `x`.
pub fn abelian_semistable_exact(x: &Point, spec_torus: &CompatibleGroupSpec) -> Result<AbelianReport> {
    if spec_torus.model_name != ModelName::TorusA {
        return Err(GradmapError::invalid("abelian_semistable_exact needs a torus model"));
    }
    let n = spec_torus.n;
    let strict: Vec<Vec<Vec<f64>>> = x.frames().iter().map(|f| support_weights(f, n, 1e-12)).collect();
    let loose: Vec<Vec<Vec<f64>>> = x.frames().iter().map(|f| support_weights(f, n, 1e-9)).collect();
    let (d_strict, witness) = abelian_deficit(&strict);
    let (d_loose, _) = abelian_deficit(&loose);
    let verdict = match (d_strict > 0.0, d_loose > 0.0) {
        (false, false) => AbelianVerdict::Semistable,
        (true, true) => AbelianVerdict::Unstable,
        _ => AbelianVerdict::Undetermined,
    };
    Ok(AbelianReport { verdict, weights: strict, distance: d_strict, witness })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IntersectionReport {
    pub n_k: usize,
    pub torus_failures: usize,
    pub torus_undetermined: usize,
    pub verdict: Verdict,
    /// Semistable ⇒ no torus failure; any torus failure ⇒ unstable.
    pub consistent: bool,
}

/// Tests Abelian semistability of `k⁻¹x` for Haar-random `k ∈ K` against a
/// given verdict for `x` (the identity `k` is always included).
pub fn intersection_check_semi(
    spec: &CompatibleGroupSpec,
    x: &Point,
    n_k: usize,
    seed: u64,
    verdict: Verdict,
) -> Result<IntersectionReport> {
    let torus = spec.torus_model();
    let mut rng = sample_rng(seed, 0);
    let mut failures = 0;
    let mut undetermined = 0;
    for i in 0..n_k {
        let k = if i == 0 { GroupElement::identity(spec.n, crate::lie_core::GroupTag::K) } else { spec.random_k(&mut rng) };
        let y = x.act_matrix(&spec.embed_group(&k.matrix().adjoint()))?;
        match abelian_semistable_exact(&y, &torus)?.verdict {
            AbelianVerdict::Unstable => failures += 1,
            AbelianVerdict::Undetermined => undetermined += 1,
            AbelianVerdict::Semistable => {}
        }
    }
    let consistent = failures == 0 || verdict == Verdict::Unstable;
    Ok(IntersectionReport { n_k, torus_failures: failures, torus_undetermined: undetermined, verdict, consistent })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flows::WeightOptions;
    use crate::kahler::GrassPoint;
    use crate::linalg::{c, real};

    fn p1(a: crate::linalg::C64, b: crate::linalg::C64) -> Point {
        GrassPoint::new(&CMat::from_column_slice(2, 1, &[a, b])).unwrap().into()
    }

    #[test]
    fn p1_examples() {
        let spec = CompatibleGroupSpec::sl_n_real(2);
        let opts = ClassifyOptions::default();
        let s = classify(&spec, &p1(real(1.0), c(0.0, 1.0)), &opts).unwrap();
        assert_eq!(s.verdict, Verdict::Stable, "{s:?}");
        assert_eq!(s.stabilizer_p_dim, 0);
        let u = classify(&spec, &p1(real(1.0), real(0.0)), &opts).unwrap();
        assert_eq!(u.verdict, Verdict::Unstable, "{u:?}");
        assert!((u.f_p_limit - 0.25).abs() < 1e-12);
        let beta = LieVector::diagonal(&[-1.0, 1.0]).unwrap().retag(Subspace::P).normalized().unwrap();
        let w = crate::flows::maximal_weight(&spec, &p1(real(1.0), real(0.0)), &beta, &WeightOptions::default()).unwrap();
        assert!(w.lambda_limit < 0.0);
    }

    #[test]
    fn abelian_p1_examples() {
        let torus = CompatibleGroupSpec::torus(2);
        let both = abelian_semistable_exact(&p1(real(1.0), real(1.0)), &torus).unwrap();
        assert_eq!(both.verdict, AbelianVerdict::Semistable);
        assert_eq!(both.weights[0].len(), 2);
        let one = abelian_semistable_exact(&p1(real(1.0), real(0.0)), &torus).unwrap();
        assert_eq!(one.verdict, AbelianVerdict::Unstable);
        assert_eq!(one.weights[0], vec![vec![0.5, -0.5]]);
        let w = one.witness.unwrap();
        assert!((w[0] + std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        let tiny = abelian_semistable_exact(&p1(real(1.0), real(1e-11)), &torus).unwrap();
        assert_eq!(tiny.verdict, AbelianVerdict::Undetermined);
    }

    #[test]
    fn subsets_count() {
        assert_eq!(subsets(8, 4).len(), 70);
        assert_eq!(subsets(4, 2), vec![vec![0, 1], vec![0, 2], vec![0, 3], vec![1, 2], vec![1, 3], vec![2, 3]]);
    }
}
