use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use super::config::{ExperimentConfig, Task};
use super::plotdata::{self, Csv};
use crate::convexity::{self, DensityOptions};
use crate::error::{GradmapError, Result};
use crate::flows::{self, FlowOptions, FlowStatus, WeightOptions};
use crate::kahler::{GrassPoint, Point};
use crate::lie_core::{LieVector, ModelName, Subspace};
use crate::linalg::{self, sample_rng, C64};
use crate::moment;
use crate::scenarios::{self, Scenario, ScenarioName};
use crate::stability::{self, AbelianVerdict, ClassifyOptions, Verdict};
use crate::strata::{self, StrataOptions};

pub const ARTIFACT: &str = "gradmap";

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Failure {
    pub scenario: String,
    pub sample: u64,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OutputFile {
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunManifest {
    pub artifact: String,
    pub version: String,
    pub config: ExperimentConfig,
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
    pub threads: usize,
    /// Per-scenario summary statistics keyed by scenario label.
    pub summary: Value,
    pub n_samples_total: usize,
    pub failures: Vec<Failure>,
    pub outputs: Vec<OutputFile>,
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub manifest: RunManifest,
    pub exit_code: i32,
    pub output_dir: PathBuf,
}

struct TaskOutput {
    summary: Value,
    files: Vec<(String, String)>,
    failures: Vec<(u64, String)>,
    samples: usize,
}

fn now_ms() -> u128 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0)
}

/// Worker count: the config value (default all cores), capped by `GRADMAP_THREADS`.
pub fn thread_count(cfg: &ExperimentConfig) -> usize {
    let available = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    let mut n = cfg.threads.unwrap_or(available);
    if let Some(cap) = std::env::var("GRADMAP_THREADS").ok().and_then(|v| v.trim().parse::<usize>().ok()) {
        if cap > 0 {
            n = n.min(cap);
        }
    }
    n.max(1)
}

fn aux_rng(seed: u64, i: u64) -> rand_chacha::ChaCha8Rng {
    sample_rng(seed ^ 0x9e37_79b9_7f4a_7c15, i)
}

fn n_real(cfg: &ExperimentConfig) -> u64 {
    (cfg.real_fraction * cfg.n_samples as f64).round() as u64
}

/// Sample `i`; the first `real_fraction · n_samples` come from real frames.
fn sample_point(s: &Scenario, cfg: &ExperimentConfig, seed: u64, i: u64) -> Result<Point> {
    if i >= n_real(cfg) {
        return s.sample_at(seed, i);
    }
    let mut rng = sample_rng(seed, i);
    let first = GrassPoint::new(&linalg::gaussian_rmat(s.ambient_n, s.k, &mut rng))?;
    if s.is_product() {
        s.graph_point(&first)
    } else {
        Ok(first.into())
    }
}

fn flow_opts(cfg: &ExperimentConfig, track: bool) -> FlowOptions {
    FlowOptions { tol: cfg.tolerances.flow, t_max: cfg.t_max, rtol: cfg.tolerances.rtol, track_group: track }
}

fn classify_opts(cfg: &ExperimentConfig, seed: u64, id: u64) -> ClassifyOptions {
    ClassifyOptions {
        f_tol: cfg.tolerances.f_p,
        lambda_tol: cfg.tolerances.lambda,
        n_directions: cfg.n_directions,
        seed,
        point_id: id,
        flow: flow_opts(cfg, true),
    }
}

fn max_of(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().filter(|x| !x.is_nan()).fold(0.0, f64::max)
}

fn opt_cell(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

/// Runs `f` on every sample index in parallel; results stay in index order.
fn per_sample<T, F>(n: usize, f: F) -> Vec<(u64, Result<T>)>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync,
{
    (0..n as u64).into_par_iter().map(|i| (i, f(i))).collect()
}

fn split<T>(results: Vec<(u64, Result<T>)>) -> (Vec<(u64, T)>, Vec<(u64, String)>) {
    let mut ok = Vec::new();
    let mut failures = Vec::new();
    for (i, r) in results {
        match r {
            Ok(v) => ok.push((i, v)),
            Err(e) => failures.push((i, e.to_string())),
        }
    }
    (ok, failures)
}

struct ValidateRow {
    d_mu: f64,
    grad_mu: f64,
    gradient: f64,
    equivariance: f64,
    abelian: f64,
    mu_k: Option<f64>,
    omega: Option<f64>,
    invariance: Option<f64>,
}

fn task_validate(cfg: &ExperimentConfig, s: &Scenario, label: &str) -> Result<TaskOutput> {
    let spec = s.spec;
    let graph = s.name == ScenarioName::PaperGraphExample;
    let results = per_sample(cfg.n_samples, |i| {
        let x = sample_point(s, cfg, cfg.seed, i)?;
        let mut rng = aux_rng(cfg.seed, i);
        let xi = spec.random_u(&mut rng);
        let v = x.random_tangent(&mut rng);
        let id = moment::identity_check(&spec, &x, &xi, &v)?;
        let beta = spec.random_unit_p(&mut rng);
        let gradient = moment::gradient_identity_check(&spec, &x, &beta)?;
        let k = spec.random_k(&mut rng);
        let equivariance = moment::equivariance_residual(&spec, &k, &x)?;
        let abelian = moment::abelian_equivariance_check(&spec, &k, std::slice::from_ref(&x))?;
        let (mu_k, omega, invariance) = if graph {
            let g = spec.random_g(1.0, &mut rng);
            (
                Some(moment::mu_k(&spec, &x).norm()),
                Some(scenarios::verify_lagrangian(s, &x, 10, cfg.seed ^ i)?.max_abs_omega),
                Some(scenarios::verify_invariance(s, &g, &x)?),
            )
        } else {
            (None, None, None)
        };
        Ok(ValidateRow { d_mu: id.d_mu, grad_mu: id.grad_mu, gradient, equivariance, abelian, mu_k, omega, invariance })
    });
    let (rows, failures) = split(results);
    let mut csv = Csv::new(&["sample", "d_mu", "grad_mu", "grad_mu_p", "equivariance", "abelian", "mu_k", "omega", "invariance"]);
    for (i, r) in &rows {
        csv.row([
            i.to_string(),
            r.d_mu.to_string(),
            r.grad_mu.to_string(),
            r.gradient.to_string(),
            r.equivariance.to_string(),
            r.abelian.to_string(),
            opt_cell(r.mu_k),
            opt_cell(r.omega),
            opt_cell(r.invariance),
        ]);
    }
    let m = |f: &dyn Fn(&ValidateRow) -> f64| max_of(rows.iter().map(|(_, r)| f(r)));
    let summary = json!({
        "n": rows.len(),
        "max_d_mu": m(&|r| r.d_mu),
        "max_grad_mu": m(&|r| r.grad_mu),
        "max_grad_mu_p": m(&|r| r.gradient),
        "max_equivariance": m(&|r| r.equivariance),
        "max_abelian": m(&|r| r.abelian),
        "max_mu_k": graph.then(|| m(&|r| r.mu_k.unwrap_or(0.0))),
        "max_omega": graph.then(|| m(&|r| r.omega.unwrap_or(0.0))),
        "max_invariance": graph.then(|| m(&|r| r.invariance.unwrap_or(0.0))),
    });
    Ok(TaskOutput { summary, files: vec![(format!("validate_{label}.csv"), csv.into_string())], failures, samples: cfg.n_samples })
}

fn task_flow(cfg: &ExperimentConfig, s: &Scenario, label: &str) -> Result<TaskOutput> {
    let opts = flow_opts(cfg, true);
    let results = per_sample(cfg.n_samples, |i| flows::negative_flow(&s.spec, &sample_point(s, cfg, cfg.seed, i)?, &opts));
    let (flows, mut failures) = split(results);
    let mut csv = Csv::new(&[
        "sample", "status", "t_final", "f_p_start", "f_p_limit", "residual", "max_f_increase", "certificate", "det_drift", "rate",
    ]);
    for (i, f) in &flows {
        if f.status == FlowStatus::DivergedError {
            failures.push((*i, f.diagnostics.clone().unwrap_or_else(|| "flow diverged".into())));
        }
        let cert = f.certificate.expect("tracking on");
        csv.row([
            i.to_string(),
            f.status.to_string(),
            f.t_final.to_string(),
            f.history[0].f_p.to_string(),
            f.f_p_limit.to_string(),
            f.residual.to_string(),
            f.max_f_increase().to_string(),
            cert.max_distance.to_string(),
            cert.max_det_drift.to_string(),
            opt_cell(f.empirical_rate),
        ]);
    }
    failures.sort();
    let traces = plotdata::flow_trace_csv(flows.iter().map(|(i, f)| (*i, f.history.as_slice())));
    let summary = json!({
        "n": flows.len(),
        "n_converged": flows.iter().filter(|(_, f)| f.status == FlowStatus::Converged).count(),
        "max_residual": max_of(flows.iter().map(|(_, f)| f.residual)),
        "max_t_final": max_of(flows.iter().map(|(_, f)| f.t_final)),
        "max_f_increase": max_of(flows.iter().map(|(_, f)| f.max_f_increase())),
        "max_certificate": max_of(flows.iter().map(|(_, f)| f.certificate.map_or(0.0, |c| c.max_distance))),
        "max_det_drift": max_of(flows.iter().map(|(_, f)| f.certificate.map_or(0.0, |c| c.max_det_drift))),
    });
    Ok(TaskOutput {
        summary,
        files: vec![(format!("flow_{label}.csv"), csv.into_string()), (format!("flow_traces_{label}.csv"), traces.into_string())],
        failures,
        samples: cfg.n_samples,
    })
}

struct WeightRow {
    direction: usize,
    sample: flows::WeightSample,
    lambda_filtration: f64,
    /// Largest decrease of `λ` between consecutive grid points.
    monotone_violation: f64,
    /// Grid steps with `|β_X| > 1e-6` on which `λ` did not increase.
    strict_failures: usize,
    /// `max |λ(y, β, t) − λ(y, β, 0)|` at the `β`-fixed limit `y`.
    fixed_drift: f64,
}

struct AbelianRow {
    verdict: AbelianVerdict,
    min_lambda: f64,
    witness_lambda: Option<f64>,
    agrees: bool,
}

/// Point with one or two coordinate rows removed by index parity, so that
/// half the batch is unstable for the diagonal torus.
fn degenerate_point(s: &Scenario, seed: u64, i: u64) -> Result<Point> {
    let x = s.sample_at(seed, i)?;
    if i % 2 == 0 || s.is_product() {
        return Ok(x);
    }
    let mut f = x.frames()[0].clone();
    let n = f.nrows();
    let row = (i / 2) as usize % n;
    for j in 0..f.ncols() {
        f[(row, j)] = C64::new(0.0, 0.0);
    }
    Ok(GrassPoint::new(&f)?.into())
}

fn torus_generators(n: usize) -> Vec<LieVector> {
    let mut out = Vec::new();
    for j in 1..n {
        let d: Vec<f64> = (0..n).map(|i| if i < j { (n - j) as f64 } else { -(j as f64) }).collect();
        let v = LieVector::diagonal(&d).expect("traceless").retag(Subspace::P).normalized().expect("nonzero");
        out.push(v.scale(-1.0));
        out.push(v);
    }
    out
}

fn task_weight(cfg: &ExperimentConfig, s: &Scenario, label: &str) -> Result<TaskOutput> {
    let spec = s.spec;
    let wopts = WeightOptions { tol: cfg.tolerances.weight, t_cap: cfg.t_max, skip_quadrature: false };
    let grid: Vec<f64> = (0..cfg.t_grid).map(|k| cfg.t_grid_end * k as f64 / (cfg.t_grid - 1) as f64).collect();
    let results = per_sample(cfg.n_samples, |i| {
        let x = sample_point(s, cfg, cfg.seed, i)?;
        let mut rng = aux_rng(cfg.seed, i);
        let mut rows = Vec::new();
        for j in 0..cfg.n_directions {
            let beta = spec.random_unit_p(&mut rng);
            let sample = flows::maximal_weight(&spec, &x, &beta, &wopts)?;
            let (limit, lambda_filtration) = flows::weight_filtration_limit(&spec, &x, &beta)?;
            let flow = flows::BetaFlow::new(&spec, &beta)?;
            let mut prev: Option<f64> = None;
            let mut monotone_violation: f64 = 0.0;
            let mut strict_failures = 0;
            for w in grid.windows(2) {
                let y0 = flow.apply(&x, w[0])?;
                let l0 = prev.unwrap_or(moment::mu_p(&spec, &y0).inner(&beta));
                let l1 = moment::mu_p(&spec, &flow.apply(&x, w[1])?).inner(&beta);
                monotone_violation = monotone_violation.max(l0 - l1);
                if flows::weight_speed(&spec, &y0, &beta).sqrt() > 1e-6 && l1 <= l0 {
                    strict_failures += 1;
                }
                prev = Some(l1);
            }
            let l_fixed = moment::mu_p(&spec, &limit).inner(&beta);
            let fixed_drift = grid
                .iter()
                .map(|&t| Ok((moment::mu_p(&spec, &flow.apply(&limit, t)?).inner(&beta) - l_fixed).abs()))
                .collect::<Result<Vec<f64>>>()?
                .into_iter()
                .fold(0.0, f64::max);
            rows.push(WeightRow { direction: j, sample, lambda_filtration, monotone_violation, strict_failures, fixed_drift });
        }
        let abelian = if spec.model_name == ModelName::TorusA {
            let y = degenerate_point(s, cfg.seed, i)?;
            let report = stability::abelian_semistable_exact(&y, &spec)?;
            let mut dirs = torus_generators(spec.n);
            for _ in 0..cfg.n_directions {
                dirs.push(spec.random_unit_p(&mut rng));
            }
            let witness = report.witness.as_ref().map(|w| LieVector::diagonal(w).map(|v| v.retag(Subspace::P)));
            let witness_lambda = match witness {
                Some(w) => Some(flows::weight_filtration_limit(&spec, &y, &w?)?.1),
                None => None,
            };
            let mut min_lambda = f64::INFINITY;
            for d in &dirs {
                min_lambda = min_lambda.min(flows::weight_filtration_limit(&spec, &y, d)?.1);
            }
            let tol = cfg.tolerances.lambda;
            let agrees = match report.verdict {
                AbelianVerdict::Semistable => min_lambda >= -tol,
                AbelianVerdict::Unstable => witness_lambda.is_some_and(|l| l < -tol),
                AbelianVerdict::Undetermined => true,
            };
            Some(AbelianRow { verdict: report.verdict, min_lambda: min_lambda.min(witness_lambda.unwrap_or(f64::INFINITY)), witness_lambda, agrees })
        } else {
            None
        };
        Ok((rows, abelian))
    });
    let (ok, failures) = split(results);
    let mut csv = Csv::new(&[
        "sample", "direction", "lambda_0", "lambda_limit", "lambda_filtration", "energy", "energy_quadrature", "converged",
        "t_reached", "monotone_violation", "strict_failures", "fixed_drift",
    ]);
    let mut abelian_csv = Csv::new(&["sample", "verdict", "min_lambda", "witness_lambda", "agrees"]);
    for (i, (rows, ab)) in &ok {
        for r in rows {
            let w = &r.sample;
            csv.row([
                i.to_string(),
                r.direction.to_string(),
                w.lambda_0.to_string(),
                w.lambda_limit.to_string(),
                r.lambda_filtration.to_string(),
                w.energy.to_string(),
                w.energy_quadrature.to_string(),
                w.converged.to_string(),
                w.t_reached.to_string(),
                r.monotone_violation.to_string(),
                r.strict_failures.to_string(),
                r.fixed_drift.to_string(),
            ]);
        }
        if let Some(a) = ab {
            abelian_csv.row([
                i.to_string(),
                serde_json::to_value(a.verdict)?.as_str().unwrap_or_default().to_string(),
                a.min_lambda.to_string(),
                opt_cell(a.witness_lambda),
                a.agrees.to_string(),
            ]);
        }
    }
    let all: Vec<&WeightRow> = ok.iter().flat_map(|(_, (rows, _))| rows.iter()).collect();
    let converged: Vec<&&WeightRow> = all.iter().filter(|r| r.sample.converged).collect();
    let abel: Vec<&AbelianRow> = ok.iter().filter_map(|(_, (_, a))| a.as_ref()).collect();
    let mut summary = json!({
        "n_pairs": all.len(),
        "n_converged": converged.len(),
        "max_monotone_violation": max_of(all.iter().map(|r| r.monotone_violation)),
        "strict_failures": all.iter().map(|r| r.strict_failures).sum::<usize>(),
        "max_fixed_drift": max_of(all.iter().map(|r| r.fixed_drift)),
        "max_energy_residual": max_of(converged.iter().map(|r| (r.sample.energy - r.sample.energy_quadrature).abs())),
        "max_filtration_gap": max_of(all.iter().map(|r| (r.sample.lambda_limit - r.lambda_filtration).abs())),
    });
    let mut files = vec![(format!("weight_{label}.csv"), csv.into_string())];
    if !abel.is_empty() {
        let count = |v: AbelianVerdict| abel.iter().filter(|a| a.verdict == v).count();
        summary["abelian"] = json!({
            "n": abel.len(),
            "semistable": count(AbelianVerdict::Semistable),
            "unstable": count(AbelianVerdict::Unstable),
            "undetermined": count(AbelianVerdict::Undetermined),
            "disagreements": abel.iter().filter(|a| !a.agrees).count(),
        });
        files.push((format!("abelian_{label}.csv"), abelian_csv.into_string()));
    }
    Ok(TaskOutput { summary, files, failures, samples: cfg.n_samples })
}

/// Closed form for `SL(2, R)` on the projective line: unstable exactly on the real circle.
fn p1_oracle_unstable(x: &Point) -> bool {
    let f = x.frames()[0];
    let (a, b) = (f[(0, 0)], f[(1, 0)]);
    (a * b.conj()).im.abs() <= 1e-6 * (a.norm_sqr() + b.norm_sqr())
}

struct ClassifyRow {
    v: stability::StabilityVerdict,
    torus: stability::IntersectionReport,
    oracle_unstable: Option<bool>,
}

fn task_classify(cfg: &ExperimentConfig, s: &Scenario, label: &str) -> Result<TaskOutput> {
    let spec = s.spec;
    let results = per_sample(cfg.n_samples, |i| {
        let x = sample_point(s, cfg, cfg.seed, i)?;
        let v = stability::classify(&spec, &x, &classify_opts(cfg, cfg.seed, i))?;
        let torus = stability::intersection_check_semi(&spec, &x, cfg.n_k, cfg.seed ^ (i << 20), v.verdict)?;
        let oracle_unstable = (s.name == ScenarioName::P1Toy).then(|| p1_oracle_unstable(&x));
        Ok(ClassifyRow { v, torus, oracle_unstable })
    });
    let (rows, mut failures) = split(results);
    let mut csv = Csv::new(&[
        "sample", "verdict", "f_p_limit", "min_lambda", "stabilizer_p_dim", "limit_stabilizer_p_dim", "polystable_hint",
        "torus_failures", "torus_consistent", "oracle",
    ]);
    let mut misclassified = 0;
    for (i, r) in &rows {
        if r.v.flow_status == FlowStatus::DivergedError {
            failures.push((*i, r.v.diagnostics.join("; ")));
        }
        let oracle = r.oracle_unstable.map(|u| if u { "unstable" } else { "semistable" });
        if let Some(u) = r.oracle_unstable {
            if (u && r.v.verdict != Verdict::Unstable) || (!u && !r.v.verdict.is_semistable()) {
                misclassified += 1;
            }
        }
        csv.row([
            i.to_string(),
            r.v.verdict.as_str().to_string(),
            r.v.f_p_limit.to_string(),
            r.v.min_lambda_sampled.to_string(),
            r.v.stabilizer_p_dim.to_string(),
            r.v.limit_stabilizer_p_dim.to_string(),
            r.v.polystable_hint.to_string(),
            r.torus.torus_failures.to_string(),
            r.torus.consistent.to_string(),
            oracle.unwrap_or("").to_string(),
        ]);
    }
    failures.sort();
    let count = |v: Verdict| rows.iter().filter(|(_, r)| r.v.verdict == v).count();
    let summary = json!({
        "n": rows.len(),
        "stable": count(Verdict::Stable),
        "semistable_only": count(Verdict::SemistableOnly),
        "unstable": count(Verdict::Unstable),
        "undetermined": count(Verdict::Undetermined),
        "criteria_disagreements": rows.iter().filter(|(_, r)| r.v.flow_status == FlowStatus::Converged && r.v.flow_semistable != r.v.analytic_semistable).count(),
        "oracle_checked": rows.iter().filter(|(_, r)| r.oracle_unstable.is_some()).count(),
        "oracle_misclassified": misclassified,
        "n_k": cfg.n_k,
        "torus_violations": rows.iter().filter(|(_, r)| !r.torus.consistent).count(),
        "semistable_torus_failures": rows.iter().filter(|(_, r)| r.v.verdict.is_semistable()).map(|(_, r)| r.torus.torus_failures).sum::<usize>(),
        "torus_undetermined": rows.iter().map(|(_, r)| r.torus.torus_undetermined).sum::<usize>(),
    });
    Ok(TaskOutput { summary, files: vec![(format!("classify_{label}.csv"), csv.into_string())], failures, samples: cfg.n_samples })
}

fn strata_opts(cfg: &ExperimentConfig) -> StrataOptions {
    StrataOptions { merge_radius: cfg.tolerances.merge, tol: cfg.tolerances.f_p, flow: flow_opts(cfg, false) }
}

fn points_and_ids(s: &Scenario, cfg: &ExperimentConfig, n: usize) -> Result<(Vec<Point>, Vec<u64>)> {
    let ids: Vec<u64> = (0..n as u64).collect();
    let pts = ids.iter().map(|&i| sample_point(s, cfg, cfg.seed, i)).collect::<Result<_>>()?;
    Ok((pts, ids))
}

fn task_strata(cfg: &ExperimentConfig, s: &Scenario, label: &str) -> Result<TaskOutput> {
    let opts = strata_opts(cfg);
    let (pts, ids) = points_and_ids(s, cfg, 2 * cfg.n_samples)?;
    let small = strata::strata_of_points(&s.spec, &pts[..cfg.n_samples], &ids[..cfg.n_samples], cfg.seed, &opts)?;
    let large = strata::strata_of_points(&s.spec, &pts, &ids, cfg.seed, &opts)?;
    let stability = strata::census_stability(&small, &large, opts.merge_radius);
    let mut csv = Csv::new(&["sample", "stratum", "norm", "shifted_residual"]);
    for r in &small.samples {
        csv.row([r.id.to_string(), r.label.map_or_else(String::new, |l| l.to_string()), r.norm.to_string(), r.shifted_residual.to_string()]);
    }
    let failures: Vec<(u64, String)> =
        small.samples.iter().filter(|r| r.label.is_none()).map(|r| (r.id, "flow did not converge".to_string())).collect();
    let summary = json!({
        "n": small.n_samples,
        "n_labels": small.labels.len(),
        "labels": small.labels.iter().map(|l| json!({"beta_plus": l.beta_plus, "norm": l.norm, "members": l.members})).collect::<Vec<_>>(),
        "has_zero_label": small.has_zero_label,
        "minimal_fraction": small.minimal_fraction,
        "unlabeled": small.unlabeled,
        "closure_consistent": small.closure_consistent,
        "max_shifted_residual": small.max_shifted_residual,
        "doubled_n_labels": large.labels.len(),
        "census_stable": stability.stable,
        "census_nested": stability.nested,
    });
    let json_out = json!({ "census": small, "doubled": { "labels": large.labels, "minimal_fraction": large.minimal_fraction }, "stability": stability });
    Ok(TaskOutput {
        summary,
        files: vec![
            (format!("strata_{label}.json"), serde_json::to_string_pretty(&json_out)? + "\n"),
            (format!("strata_{label}.csv"), csv.into_string()),
        ],
        failures,
        samples: 2 * cfg.n_samples,
    })
}

fn task_polytope(cfg: &ExperimentConfig, s: &Scenario, label: &str) -> Result<TaskOutput> {
    let report = convexity::convexity_audit(s, cfg.n_samples, cfg.n_pairs, cfg.seed)?;
    let (pts, ids) = points_and_ids(s, cfg, cfg.n_samples)?;
    let census = strata::strata_of_points(&s.spec, &pts, &ids, cfg.seed, &strata_opts(cfg))?;
    let verdicts = per_sample(cfg.n_samples, |i| Ok(stability::classify(&s.spec, &pts[i as usize], &classify_opts(cfg, cfg.seed, i))?.verdict));
    let (verdicts, failures) = split(verdicts);
    let mut lookup = vec![None; cfg.n_samples];
    for (i, v) in verdicts {
        lookup[i as usize] = Some(v);
    }
    let rows: Vec<(u64, Vec<f64>, Option<usize>, &str)> = report
        .points
        .iter()
        .enumerate()
        .map(|(i, p)| (i as u64, p.clone(), census.samples[i].label, lookup[i].map_or("error", |v| v.as_str())))
        .collect();
    let chamber = plotdata::chamber_csv(s.spec.n, &rows);
    let deficit = plotdata::deficit_csv(&report.deficits);
    let summary = json!({
        "n": report.n_samples,
        "hull_dim": report.hull_dim,
        "n_vertices": report.hull_vertices.len(),
        "hull_diameter": report.hull_diameter,
        "max_midpoint_deficit": report.max_midpoint_deficit,
        "deficit_doubled": report.deficits[1].max_midpoint_deficit,
        "hausdorff_points_to_hull": report.hausdorff_points_to_hull,
        "max_chamber_violation": report.max_chamber_violation,
        "n_strata": census.labels.len(),
    });
    Ok(TaskOutput {
        summary,
        files: vec![
            (format!("polytope_{label}.json"), serde_json::to_string_pretty(&report)? + "\n"),
            (format!("chamber_{label}.csv"), chamber.into_string()),
            (format!("deficit_{label}.csv"), deficit.into_string()),
        ],
        failures,
        samples: cfg.n_samples,
    })
}

fn task_density(cfg: &ExperimentConfig, s: &Scenario, label: &str) -> Result<TaskOutput> {
    let opts = DensityOptions { k_neighbors: cfg.k_neighbors, n_pilot: cfg.n_pilot, classify: classify_opts(cfg, cfg.seed, 0) };
    let report = convexity::density_connectivity_scan(s, cfg.n_samples, cfg.seed, &opts)?;
    let mut csv = Csv::new(&["sample", "verdict"]);
    for (i, v) in report.verdicts.iter().enumerate() {
        csv.row([i.to_string(), v.as_str().to_string()]);
    }
    let summary = json!({
        "n": report.n_samples,
        "semistable_fraction": report.semistable_fraction,
        "n_undetermined": report.n_undetermined,
        "knn_graph_connected": report.knn_graph_connected,
        "k_neighbors": report.k_neighbors,
        "largest_component_fraction": report.largest_component_fraction,
        "n_components": report.n_components,
        "pilot_complex_semistable_fraction": report.pilot.complex_semistable_fraction,
        "pilot_hypothesis_holds": report.pilot.hypothesis_holds,
    });
    Ok(TaskOutput {
        summary,
        files: vec![
            (format!("density_{label}.json"), serde_json::to_string_pretty(&report)? + "\n"),
            (format!("density_{label}.csv"), csv.into_string()),
        ],
        failures: Vec::new(),
        samples: cfg.n_samples,
    })
}

fn scenario_label(name: ScenarioName, taken: &[String]) -> String {
    let base = serde_json::to_value(name).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default();
    let mut label = base.clone();
    let mut k = 2;
    while taken.contains(&label) {
        label = format!("{base}_{k}");
        k += 1;
    }
    label
}

/// 0 while fewer than 1% of samples failed, 3 otherwise.
pub fn exit_code(failures: usize, total: usize) -> i32 {
    if failures > 0 && failures * 100 >= total {
        3
    } else {
        0
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Executes the configured task on every scenario, writes outputs and the
/// manifest into `out`, and returns the manifest with the exit code
/// (3 when at least 1% of samples failed).
pub fn run(cfg: &ExperimentConfig, out: &Path) -> Result<RunOutcome> {
    let started = now_ms();
    let threads = thread_count(cfg);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| GradmapError::Numerical(format!("thread pool: {e}")))?;
    let descriptors: Vec<_> = std::iter::once(&cfg.scenario).chain(&cfg.extra_scenarios).collect();
    let mut labels: Vec<String> = Vec::new();
    let mut summary = serde_json::Map::new();
    let mut failures = Vec::new();
    let mut files: Vec<(String, String)> = Vec::new();
    let mut total = 0;
    for d in descriptors {
        let s = Scenario::new(d)?;
        let label = scenario_label(s.name, &labels);
        labels.push(label.clone());
        let output = pool.install(|| match cfg.task {
            Task::Validate => task_validate(cfg, &s, &label),
            Task::Flow => task_flow(cfg, &s, &label),
            Task::Weight => task_weight(cfg, &s, &label),
            Task::Classify => task_classify(cfg, &s, &label),
            Task::Strata => task_strata(cfg, &s, &label),
            Task::Polytope => task_polytope(cfg, &s, &label),
            Task::Density => task_density(cfg, &s, &label),
        })?;
        total += output.samples;
        failures.extend(output.failures.into_iter().map(|(sample, message)| Failure { scenario: label.clone(), sample, message }));
        summary.insert(label, output.summary);
        files.extend(output.files);
    }
    files.push((format!("{}_summary.json", cfg.task.as_str()), serde_json::to_string_pretty(&Value::Object(summary.clone()))? + "\n"));
    std::fs::create_dir_all(out)?;
    let mut outputs = Vec::new();
    for (name, body) in &files {
        std::fs::write(out.join(name), body)?;
        outputs.push(OutputFile { path: name.clone(), sha256: sha256_hex(body.as_bytes()), bytes: body.len() });
    }
    let manifest = RunManifest {
        artifact: ARTIFACT.into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config: cfg.clone(),
        started_unix_ms: started,
        finished_unix_ms: now_ms(),
        threads,
        summary: Value::Object(summary),
        n_samples_total: total,
        failures,
        outputs,
    };
    std::fs::write(out.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
    let exit_code = exit_code(manifest.failures.len(), total);
    Ok(RunOutcome { manifest, exit_code, output_dir: out.to_path_buf() })
}
