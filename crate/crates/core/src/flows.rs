//! One-parameter orbits `exp(tβ)x`, maximal weights, the exact eigenvalue
//! filtration limit, and the negative gradient flow of `f_p` with group
//! tracking.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{GradmapError, Result};
use crate::kahler::{beta_field, metric, GrassPoint, Point};
use crate::lie_core::{eigen_blocks, CompatibleGroupSpec, LieVector, Subspace};
use crate::linalg::{self, hermitian_eigen, identity, CMat};
use crate::moment::{self, f_p, mu_p};
use crate::ode;

/// Largest `|t|·spread(β)` accepted by [`one_param`].
pub const MAX_STAGES: f64 = 1e5;
/// Relative size below which a filtration component counts as zero.
const ECHELON_TOL: f64 = 1e-13;
const LIMIT_TOL: f64 = 1e-10;

/// Spectral data of an embedded `β`, reused across evaluations.
#[derive(Clone, Debug)]
pub struct BetaFlow {
    vals: Vec<f64>,
    vecs: CMat,
}

impl BetaFlow {
    pub fn new(spec: &CompatibleGroupSpec, beta: &LieVector) -> Result<Self> {
        let amb = if beta.dim() == spec.ambient_n { beta.entries().clone() } else { spec.embed_algebra(beta.entries()) };
        let (vals, vecs) = hermitian_eigen(&amb)?;
        Ok(BetaFlow { vals, vecs })
    }

    fn spread(&self) -> f64 {
        self.vals[0] - self.vals[self.vals.len() - 1]
    }

    /// Basis of the plane (in the eigenbasis of `±β`) adapted to the weight
    /// filtration: each column vanishes on all levels above its leading level.
    /// Entries below `ECHELON_TOL` relative are treated as exact zeros, which
    /// keeps rounding noise from being amplified by `e^{t·gap}`.
    fn echelon(&self, frame: &CMat, sign: f64, tol: f64) -> Result<Vec<(CMat, f64)>> {
        let vals: Vec<f64> = self.vals.iter().map(|v| sign * v).collect();
        let mut order: Vec<usize> = (0..vals.len()).collect();
        order.sort_by(|&a, &b| vals[b].total_cmp(&vals[a]).then(a.cmp(&b)));
        let sorted: Vec<f64> = order.iter().map(|&i| vals[i]).collect();
        let scale = sorted.iter().fold(1.0_f64, |a, v| a.max(v.abs()));
        let blocks = eigen_blocks(&sorted, 1e-9 * scale);
        let n_blocks = blocks.last().map_or(0, |b| b + 1);
        let n = frame.nrows();
        let k = frame.ncols();
        let coords = self.vecs.adjoint() * frame;
        let mut m = CMat::zeros(n, k);
        for (r, &i) in order.iter().enumerate() {
            m.set_row(r, &coords.row(i));
        }
        let mut out = Vec::with_capacity(k);
        let mut first_row = 0;
        for b in 0..n_blocks {
            if m.ncols() == 0 {
                break;
            }
            let rows: Vec<usize> = (0..n).filter(|&i| blocks[i] == b).collect();
            let width = m.ncols();
            let mut r = CMat::zeros(rows.len().max(width), width);
            for (j, &i) in rows.iter().enumerate() {
                r.set_row(j, &m.row(i));
            }
            let svd = r.svd(false, true);
            let vt = svd.v_t.as_ref().expect("v_t requested");
            let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
            let level = sorted[rows[0]];
            let rotated = &m * vt.adjoint();
            for c in 0..rank {
                let mut col = CMat::zeros(n, 1);
                for (r, &i) in order.iter().enumerate() {
                    col[(i, 0)] = rotated[(r, c)];
                }
                out.push((col, level));
            }
            let mut rest = rotated.columns(rank, width - rank).into_owned();
            let last_row = rows[rows.len() - 1];
            for i in first_row..=last_row {
                rest.row_mut(i).fill(linalg::real(0.0));
            }
            first_row = last_row + 1;
            m = rest;
        }
        if out.len() != k {
            return Err(GradmapError::numerical(format!("filtration produced {} of {k} vectors", out.len())));
        }
        Ok(out)
    }

    fn apply_frame(&self, frame: &CMat, t: f64) -> Result<CMat> {
        let spread = self.spread();
        if t.abs() * spread > MAX_STAGES {
            return Err(GradmapError::ScaleCap { scale: t.abs() * spread, cap: MAX_STAGES });
        }
        let sign = if t >= 0.0 { 1.0 } else { -1.0 };
        let cols = self.echelon(frame, sign, ECHELON_TOL)?;
        let n = frame.nrows();
        let mut out = CMat::zeros(n, cols.len());
        for (j, (col, level)) in cols.iter().enumerate() {
            for i in 0..n {
                let rel = sign * self.vals[i] - level;
                // entries above the leading level vanish exactly; weights
                // below e^-300 are flushed because their squares underflow in the QR
                let e = t.abs() * rel;
                let w = if rel > 1e-9 * (1.0 + level.abs()) || e < -300.0 { 0.0 } else { e.exp() };
                out[(i, j)] = col[(i, 0)] * w;
            }
        }
        Ok(linalg::orthonormalize(&(&self.vecs * out)))
    }

    /// `exp(tβ)·x`.
    pub fn apply(&self, x: &Point, t: f64) -> Result<Point> {
        if t == 0.0 {
            return Ok(x.clone());
        }
        x.map_factors(|f| GrassPoint::new(&self.apply_frame(f.frame(), t)?))
    }

    /// Exact `lim_{t→∞} exp(tβ)x`: the leading parts of the filtration-adapted basis.
    pub fn limit(&self, x: &Point) -> Result<Point> {
        x.map_factors(|f| {
            let cols = self.echelon(f.frame(), 1.0, LIMIT_TOL)?;
            let n = f.n();
            let mut out = CMat::zeros(n, cols.len());
            for (j, (col, level)) in cols.iter().enumerate() {
                for i in 0..n {
                    if (self.vals[i] - level).abs() <= 1e-9 * (1.0 + level.abs()) {
                        out[(i, j)] = col[(i, 0)];
                    }
                }
            }
            GrassPoint::new(&(&self.vecs * out))
        })
    }
}

/// `exp(tβ)·x` computed on a filtration-adapted frame, without overflow.
pub fn one_param(spec: &CompatibleGroupSpec, x: &Point, beta: &LieVector, t: f64) -> Result<Point> {
    BetaFlow::new(spec, beta)?.apply(x, t)
}

/// `λ(x, β, t) = <μ_p(exp(tβ)x), β>`.
pub fn lambda_t(spec: &CompatibleGroupSpec, x: &Point, beta: &LieVector, t: f64) -> Result<f64> {
    let y = one_param(spec, x, beta, t)?;
    Ok(mu_p(spec, &y).inner(beta))
}

/// Signed `|β_X(y)|²`, the derivative of `λ` along the orbit curve.
pub fn weight_speed(spec: &CompatibleGroupSpec, y: &Point, beta: &LieVector) -> f64 {
    let v = beta_field(spec, beta, y);
    metric(&v, &v)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WeightSample {
    pub direction: Vec<Vec<[f64; 2]>>,
    pub lambda_0: f64,
    pub lambda_limit: f64,
    /// Defensive flag; never set on compact scenarios.
    pub infinite: bool,
    pub energy: f64,
    pub energy_quadrature: f64,
    pub t_reached: f64,
    pub converged: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightOptions {
    pub tol: f64,
    pub t_cap: f64,
    /// Skip the quadrature cross-check.
    pub skip_quadrature: bool,
}

impl Default for WeightOptions {
    fn default() -> Self {
        WeightOptions { tol: 1e-10, t_cap: 1e4, skip_quadrature: false }
    }
}

fn require_unit(beta: &LieVector) -> Result<()> {
    if (beta.norm() - 1.0).abs() > 1e-9 {
        return Err(GradmapError::invalid(format!("direction must have unit norm, got {}", beta.norm())));
    }
    Ok(())
}

/// Adaptive Simpson rule for `∫_0^T |β_X(exp(sβ)x)|² ds` to absolute
/// tolerance 1e-9. Each node is evaluated from `x` directly, so errors do not
/// accumulate along the curve and the exponential tail costs few nodes.
pub fn energy_quadrature(spec: &CompatibleGroupSpec, x: &Point, beta: &LieVector, t_end: f64) -> Result<f64> {
    let flow = BetaFlow::new(spec, beta)?;
    if t_end <= 0.0 || flow.spread() == 0.0 {
        return Ok(0.0);
    }
    let f = |s: f64| -> Result<f64> { Ok(weight_speed(spec, &flow.apply(x, s)?, beta)) };
    // panels no wider than a few e-folds of the fastest rate
    let panel = 4.0 / flow.spread();
    let n_panels = ((t_end / panel).ceil() as usize).clamp(1, 4096);
    let h = t_end / n_panels as f64;
    let tol = (1e-9 / n_panels as f64).max(1e-14);
    let mut total = 0.0;
    let mut fa = f(0.0)?;
    for p in 0..n_panels {
        let (a, b) = (p as f64 * h, (p + 1) as f64 * h);
        let fb = f(b)?;
        let fm = f(0.5 * (a + b))?;
        total += simpson(&f, a, b, fa, fm, fb, tol, 12)?;
        fa = fb;
    }
    Ok(total)
}

#[allow(clippy::too_many_arguments)]
fn simpson<F: Fn(f64) -> Result<f64>>(f: &F, a: f64, b: f64, fa: f64, fm: f64, fb: f64, tol: f64, depth: u32) -> Result<f64> {
    let m = 0.5 * (a + b);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let (flm, frm) = (f(0.5 * (a + m))?, f(0.5 * (m + b))?);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return Ok(left + right + delta / 15.0);
    }
    Ok(simpson(f, a, m, fa, flm, fm, (0.5 * tol).max(1e-14), depth - 1)?
        + simpson(f, m, b, fm, frm, fb, (0.5 * tol).max(1e-14), depth - 1)?)
}

/// `λ(x, β) = lim λ(x, β, t)` by doubling `t` until the Cauchy test passes.
pub fn maximal_weight(spec: &CompatibleGroupSpec, x: &Point, beta: &LieVector, opts: &WeightOptions) -> Result<WeightSample> {
    require_unit(beta)?;
    let flow = BetaFlow::new(spec, beta)?;
    let lam = |t: f64| -> Result<f64> { Ok(mu_p(spec, &flow.apply(x, t)?).inner(beta)) };
    let lambda_0 = lam(0.0)?;
    let mut t = 1.0;
    let mut prev = lam(t)?;
    let mut converged = false;
    let mut value = prev;
    while t <= opts.t_cap {
        let next = lam(2.0 * t)?;
        t *= 2.0;
        value = next;
        if (next - prev).abs() < opts.tol {
            converged = true;
            break;
        }
        prev = next;
    }
    let energy_quadrature = if opts.skip_quadrature { f64::NAN } else { energy_quadrature(spec, x, beta, t)? };
    Ok(WeightSample {
        direction: crate::kahler::MatrixJson::from_matrix(beta.entries()).0,
        lambda_0,
        lambda_limit: value,
        infinite: false,
        energy: value - lambda_0,
        energy_quadrature,
        t_reached: t,
        converged,
    })
}

/// Exact limit of `exp(tβ)x` and its weight `<μ_p(limit), β>`.
pub fn weight_filtration_limit(spec: &CompatibleGroupSpec, x: &Point, beta: &LieVector) -> Result<(Point, f64)> {
    let limit = BetaFlow::new(spec, beta)?.limit(x)?;
    let lam = mu_p(spec, &limit).inner(beta);
    Ok((limit, lam))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowStatus {
    Converged,
    MaxTime,
    DivergedError,
}

impl fmt::Display for FlowStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            FlowStatus::Converged => "converged",
            FlowStatus::MaxTime => "max_time",
            FlowStatus::DivergedError => "diverged_error",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowOptions {
    /// Stop once `|grad f_p| < tol`.
    pub tol: f64,
    pub t_max: f64,
    pub rtol: f64,
    pub track_group: bool,
}

impl Default for FlowOptions {
    fn default() -> Self {
        FlowOptions { tol: 1e-6, t_max: 1e4, rtol: 1e-9, track_group: true }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GroupCertificate {
    /// Max over accepted steps of the chordal distance between `g(t)⁻¹x₀` and `x(t)`.
    pub max_distance: f64,
    pub max_det_drift: f64,
    pub checkpoints: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FlowSample {
    pub t: f64,
    pub f_p: f64,
    pub residual: f64,
}

#[derive(Clone, Debug)]
pub struct FlowResult {
    pub start: Point,
    pub limit: Point,
    pub history: Vec<FlowSample>,
    pub residual: f64,
    pub f_p_limit: f64,
    pub t_final: f64,
    pub certificate: Option<GroupCertificate>,
    /// `r` in `f_p(x(t)) − f_p(x_∞) ≈ C e^{−rt}`, fitted on the recorded history.
    pub empirical_rate: Option<f64>,
    pub status: FlowStatus,
    pub diagnostics: Option<String>,
    /// `g(t)` at the end of the run when tracking was on.
    pub group: Option<CMat>,
}

impl FlowResult {
    /// Largest increase of `f_p` between consecutive accepted steps.
    pub fn max_f_increase(&self) -> f64 {
        self.history.windows(2).map(|w| w[1].f_p - w[0].f_p).fold(0.0, f64::max)
    }
}

/// Frame field `−(I − Π)β Π F` with `Π` the projection onto the span of `F`.
fn horizontal(frame: &CMat, beta_amb: &CMat) -> CMat {
    let gram = frame.adjoint() * frame;
    let inv = gram.try_inverse().unwrap_or_else(|| identity(frame.ncols()));
    let bf = beta_amb * frame;
    let proj_bf = frame * (&inv * (frame.adjoint() * &bf));
    -(bf - proj_bf)
}

fn projection_of(frame: &CMat) -> CMat {
    let gram = frame.adjoint() * frame;
    let inv = gram.try_inverse().unwrap_or_else(|| identity(frame.ncols()));
    frame * inv * frame.adjoint()
}

fn mu_p_of_frames(spec: &CompatibleGroupSpec, frames: &[CMat], signs: &[f64]) -> CMat {
    let mut acc = CMat::zeros(spec.n, spec.n);
    for (f, s) in frames.iter().zip(signs) {
        acc += spec.pullback(&projection_of(f)).scale(*s);
    }
    spec.proj_p_raw(&acc)
}

fn residual_of(spec: &CompatibleGroupSpec, x: &Point) -> (f64, f64) {
    let beta = mu_p(spec, x);
    (0.5 * beta.norm().powi(2), beta_field(spec, &beta, x).fro_norm())
}

fn empirical_rate(history: &[FlowSample], f_lim: f64) -> Option<f64> {
    let pts: Vec<(f64, f64)> = history
        .iter()
        .filter(|s| s.t > 0.0 && s.f_p - f_lim > 1e-13 * (1.0 + f_lim))
        .map(|s| (s.t, (s.f_p - f_lim).ln()))
        .collect();
    if pts.len() < 3 {
        return None;
    }
    // fit on the second half, where the asymptotic regime dominates
    let tail = &pts[pts.len() / 2..];
    if tail.len() < 2 {
        return None;
    }
    let n = tail.len() as f64;
    let mt = tail.iter().map(|p| p.0).sum::<f64>() / n;
    let ml = tail.iter().map(|p| p.1).sum::<f64>() / n;
    let cov: f64 = tail.iter().map(|p| (p.0 - mt) * (p.1 - ml)).sum();
    let var: f64 = tail.iter().map(|p| (p.0 - mt).powi(2)).sum();
    (var > 0.0).then(|| -cov / var).filter(|r| r.is_finite())
}

/// Negative gradient flow `ẋ = −β_X(x)`, `β = μ_p(x)`, integrated on frames with
/// Dormand–Prince 5(4) and QR retraction after every accepted step.
///
/// With `track_group`, the state also carries `g(t)` solving `ġ = g μ_p(x(t))`
/// and frames of `g(t)⁻¹x₀` evolved by the linear field `−μ_p(x(t))`; the
/// group certificate compares their span with `x(t)`.
pub fn negative_flow(spec: &CompatibleGroupSpec, x0: &Point, opts: &FlowOptions) -> Result<FlowResult> {
    if !(opts.tol > 0.0 && opts.t_max > 0.0 && opts.rtol > 0.0) {
        return Err(GradmapError::invalid("flow tolerances and t_max must be positive"));
    }
    let signs = x0.signs().to_vec();
    let nf = signs.len();
    let (f0, r0) = residual_of(spec, x0);
    let mut history = vec![FlowSample { t: 0.0, f_p: f0, residual: r0 }];
    let mut y: Vec<CMat> = x0.frames().into_iter().cloned().collect();
    if opts.track_group {
        y.extend(x0.frames().into_iter().cloned());
        y.push(identity(spec.n));
    }
    let rhs = |state: &[CMat]| -> Vec<CMat> {
        let beta = mu_p_of_frames(spec, &state[..nf], &signs);
        let amb = spec.embed_algebra(&beta);
        let mut out: Vec<CMat> = state[..nf].iter().map(|f| horizontal(f, &amb)).collect();
        if state.len() > nf {
            out.extend(state[nf..2 * nf].iter().map(|f| -(&amb * f)));
            out.push(&state[2 * nf] * &beta);
        }
        out
    };
    let rebuild = |frames: &[CMat]| -> Result<Point> {
        let mut i = 0;
        x0.map_factors(|_| {
            let p = GrassPoint::new(&frames[i]);
            i += 1;
            p
        })
    };

    let mut t = 0.0;
    let mut h: f64 = 0.05;
    let mut current = x0.clone();
    let mut residual = r0;
    let mut cert = opts.track_group.then_some(GroupCertificate { max_distance: 0.0, max_det_drift: 0.0, checkpoints: 0 });
    let mut status = FlowStatus::Converged;
    let mut diagnostics = None;
    while residual >= opts.tol {
        if t >= opts.t_max {
            status = FlowStatus::MaxTime;
            break;
        }
        let h_try = h.min(opts.t_max - t);
        if h_try < 1e-12 {
            status = FlowStatus::DivergedError;
            diagnostics = Some(format!("step size underflow at t = {t:e}, residual {residual:e}"));
            break;
        }
        let step = ode::dp_step(&y, h_try, &rhs, nf, opts.rtol, opts.rtol * 1e-3);
        if !step.err.is_finite() {
            h = h_try * 0.2;
            continue;
        }
        if step.err > 1.0 {
            h = ode::next_step(h_try, step.err);
            continue;
        }
        t += h_try;
        h = ode::next_step(h_try, step.err);
        y = step.y;
        for f in y.iter_mut().take(if opts.track_group { 2 * nf } else { nf }) {
            *f = linalg::orthonormalize(f);
        }
        current = rebuild(&y[..nf])?;
        let (fp, res) = residual_of(spec, &current);
        residual = res;
        history.push(FlowSample { t, f_p: fp, residual: res });
        if let Some(c) = cert.as_mut() {
            let tracked = rebuild(&y[nf..2 * nf])?;
            c.max_distance = c.max_distance.max(tracked.chordal(&current));
            c.max_det_drift = c.max_det_drift.max((y[2 * nf].determinant() - linalg::real(1.0)).norm());
            c.checkpoints += 1;
        }
    }
    let f_lim = f_p(spec, &current);
    Ok(FlowResult {
        start: x0.clone(),
        limit: current,
        empirical_rate: empirical_rate(&history, f_lim),
        history,
        residual,
        f_p_limit: f_lim,
        t_final: t,
        certificate: cert,
        status,
        diagnostics,
        group: opts.track_group.then(|| y[2 * nf].clone()),
    })
}

/// Group-tracking certificate for a flow started at `x0`, re-integrating with
/// tracking when the flow was run without it.
pub fn group_tracking(spec: &CompatibleGroupSpec, x0: &Point, flow: &FlowResult, opts: &FlowOptions) -> Result<GroupCertificate> {
    if flow.start.chordal(x0) > 1e-12 {
        return Err(GradmapError::invalid("flow was not started at x0"));
    }
    if let Some(c) = flow.certificate {
        return Ok(c);
    }
    let rerun = FlowOptions { track_group: true, t_max: flow.t_final.max(f64::MIN_POSITIVE), ..*opts };
    Ok(negative_flow(spec, x0, &rerun)?.certificate.expect("tracking requested"))
}

/// Composite trajectory used for semistable points: flow to the limit, then
/// follow `exp(−s μ_p(limit))` for `s ∈ [0, t]`; returns the smallest `|μ_p|`
/// met on a 64-step grid, which is at most `|μ_p(limit)|`.
pub fn flow_then_descend(spec: &CompatibleGroupSpec, flow: &FlowResult, t: f64) -> Result<f64> {
    let beta = mu_p(spec, &flow.limit);
    let start = beta.norm();
    if start == 0.0 || t <= 0.0 {
        return Ok(start);
    }
    let curve = BetaFlow::new(spec, &beta)?;
    let mut best = start;
    for j in 1..=64 {
        let y = curve.apply(&flow.limit, -t * j as f64 / 64.0)?;
        best = best.min(moment::mu_p(spec, &y).norm());
    }
    Ok(best)
}

/// `μ_p` as an element of `p`; convenience for directions built from points.
pub fn gradient_direction(spec: &CompatibleGroupSpec, x: &Point) -> Option<LieVector> {
    mu_p(spec, x).retag(Subspace::P).normalized()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c, gaussian_cmat, real, sample_rng};

    fn p1(a: crate::linalg::C64, b: crate::linalg::C64) -> Point {
        GrassPoint::new(&CMat::from_column_slice(2, 1, &[a, b])).unwrap().into()
    }

    fn diag(d: &[f64]) -> LieVector {
        LieVector::diagonal(d).unwrap().retag(Subspace::P)
    }

    #[test]
    fn one_param_closed_form() {
        let spec = CompatibleGroupSpec::sl_n_real(2);
        let x = p1(real(1.0), real(1.0));
        let beta = diag(&[1.0, -1.0]);
        assert_eq!(one_param(&spec, &x, &beta, 0.0).unwrap(), x);
        for t in [0.3, 2.0, 10.0] {
            let y = one_param(&spec, &x, &beta, t).unwrap();
            let e = p1(real(t.exp()), real((-t).exp()));
            assert!(y.chordal(&e) < 1e-12);
        }
    }

    #[test]
    fn one_param_flow_law() {
        let spec = CompatibleGroupSpec::sl_n_real(4);
        let mut rng = sample_rng(41, 0);
        for _ in 0..10 {
            let x: Point = GrassPoint::new(&gaussian_cmat(4, 2, &mut rng)).unwrap().into();
            let beta = spec.random_unit_p(&mut rng);
            let a = one_param(&spec, &one_param(&spec, &x, &beta, 0.7).unwrap(), &beta, 1.9).unwrap();
            let b = one_param(&spec, &x, &beta, 2.6).unwrap();
            assert!(a.chordal(&b) < 1e-9);
        }
    }

    #[test]
    fn one_param_scale_cap() {
        let spec = CompatibleGroupSpec::sl_n_real(2);
        let x = p1(real(1.0), real(1.0));
        let err = one_param(&spec, &x, &diag(&[1.0, -1.0]), 1e6).unwrap_err();
        assert!(matches!(err, GradmapError::ScaleCap { .. }));
        assert!(err.to_string().contains("weight_filtration_limit"));
    }

    #[test]
    fn lambda_monotone_on_p1() {
        let spec = CompatibleGroupSpec::sl_n_real(2);
        let x = p1(real(1.0), real(1.0));
        let beta = diag(&[1.0, -1.0]).scale(std::f64::consts::FRAC_1_SQRT_2);
        let mut prev = f64::NEG_INFINITY;
        for i in 0..20 {
            let l = lambda_t(&spec, &x, &beta, -3.0 + 0.3 * i as f64).unwrap();
            assert!(l > prev);
            prev = l;
        }
        let m = mu_p(&spec, &x).inner(&beta);
        assert!((lambda_t(&spec, &x, &beta, 0.0).unwrap() - m).abs() < 1e-15);
    }

    #[test]
    fn lambda_derivative_is_speed() {
        let spec = CompatibleGroupSpec::sl_n_real(4);
        let mut rng = sample_rng(42, 0);
        let x: Point = GrassPoint::new(&gaussian_cmat(4, 2, &mut rng)).unwrap().into();
        let beta = spec.random_unit_p(&mut rng);
        let h = 1e-4;
        for t in [0.0, 0.5, 2.0] {
            let d = (lambda_t(&spec, &x, &beta, t + h).unwrap() - lambda_t(&spec, &x, &beta, t - h).unwrap()) / (2.0 * h);
            let y = one_param(&spec, &x, &beta, t).unwrap();
            assert!((d - weight_speed(&spec, &y, &beta)).abs() < 1e-7);
        }
    }

    #[test]
    fn maximal_weight_examples() {
        let spec = CompatibleGroupSpec::sl_n_real(2);
        let beta = diag(&[1.0, -1.0]).scale(std::f64::consts::FRAC_1_SQRT_2);
        let x = p1(real(1.0), real(1.0));
        let w = maximal_weight(&spec, &x, &beta, &WeightOptions::default()).unwrap();
        assert!(w.converged);
        let s2 = std::f64::consts::FRAC_1_SQRT_2;
        assert!((w.lambda_limit - s2).abs() < 1e-9);
        assert!((w.energy - w.energy_quadrature).abs() < 1e-6);
        let fixed = p1(real(0.0), real(1.0));
        let w = maximal_weight(&spec, &fixed, &beta, &WeightOptions::default()).unwrap();
        assert!((w.lambda_limit + s2).abs() < 1e-12);
        assert!((w.lambda_limit - w.lambda_0).abs() < 1e-15);
        let unnormalized = diag(&[1.0, -1.0]);
        assert!(maximal_weight(&spec, &x, &unnormalized, &WeightOptions::default()).is_err());
    }

    #[test]
    fn filtration_limit_examples() {
        let spec = CompatibleGroupSpec::sl_n_real(2);
        let beta = diag(&[1.0, -1.0]);
        let x = p1(real(1.0), real(1.0));
        let (lim, lam) = weight_filtration_limit(&spec, &x, &beta).unwrap();
        assert!(lim.chordal(&p1(real(1.0), real(0.0))) < 1e-12);
        assert!((lam - 1.0).abs() < 1e-12);
        let (same, _) = weight_filtration_limit(&spec, &lim, &beta).unwrap();
        assert!(same.chordal(&lim) < 1e-12);
    }

    #[test]
    fn filtration_matches_long_orbit() {
        let spec = CompatibleGroupSpec::torus(4);
        let beta = diag(&[2.0, 1.0, -1.0, -2.0]);
        let mut rng = sample_rng(43, 0);
        for _ in 0..10 {
            let x: Point = GrassPoint::new(&gaussian_cmat(4, 2, &mut rng)).unwrap().into();
            let (lim, _) = weight_filtration_limit(&spec, &x, &beta).unwrap();
            let far = one_param(&spec, &x, &beta, 40.0).unwrap();
            assert!(lim.chordal(&far) < 1e-6);
        }
    }

    #[test]
    fn filtration_with_repeated_levels() {
        let spec = CompatibleGroupSpec::torus(4);
        let beta = diag(&[1.0, 1.0, -1.0, -1.0]);
        let frame = CMat::from_row_slice(4, 2, &[real(0.0), real(0.0), real(1.0), real(0.0), real(2.0), real(1.0), real(0.0), real(3.0)]);
        let x: Point = GrassPoint::new(&frame).unwrap().into();
        let (lim, _) = weight_filtration_limit(&spec, &x, &beta).unwrap();
        let far = one_param(&spec, &x, &beta, 30.0).unwrap();
        assert!(lim.chordal(&far) < 1e-9);
    }

    #[test]
    fn flow_examples_on_p1() {
        let spec = CompatibleGroupSpec::sl_n_real(2);
        let crit = p1(real(1.0), real(0.0));
        let r = negative_flow(&spec, &crit, &FlowOptions::default()).unwrap();
        assert_eq!(r.status, FlowStatus::Converged);
        assert_eq!(r.t_final, 0.0);
        assert!((r.f_p_limit - 0.25).abs() < 1e-15);
        let x0 = p1(real(1.0), c(0.5, 0.5));
        let r = negative_flow(&spec, &x0, &FlowOptions::default()).unwrap();
        assert_eq!(r.status, FlowStatus::Converged);
        assert!(mu_p(&spec, &r.limit).norm() <= 1e-6);
        assert!(r.max_f_increase() <= 1e-9);
        let c = r.certificate.unwrap();
        assert!(c.max_distance <= 1e-5 && c.max_det_drift <= 1e-8, "{c:?}");
        assert!(r.empirical_rate.unwrap() > 0.0);
    }

    #[test]
    fn flow_on_gr24_converges() {
        let spec = CompatibleGroupSpec::sl_n_real(4);
        let mut rng = sample_rng(44, 0);
        for _ in 0..5 {
            let x: Point = GrassPoint::new(&gaussian_cmat(4, 2, &mut rng)).unwrap().into();
            let r = negative_flow(&spec, &x, &FlowOptions::default()).unwrap();
            assert_eq!(r.status, FlowStatus::Converged);
            assert!(r.max_f_increase() <= 1e-9);
            assert!(r.certificate.unwrap().max_distance <= 1e-5);
        }
    }
}
