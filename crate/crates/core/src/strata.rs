//! Empirical stratification of `X` by negative-flow limits.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::flows::{negative_flow, FlowOptions, FlowStatus};
use crate::kahler::{beta_field, Point};
use crate::lie_core::{chamber_project, CompatibleGroupSpec};
use crate::linalg::{self, dist, CMat};
use crate::moment::mu_p;
use crate::scenarios::Scenario;

pub const MERGE_RADIUS: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrataOptions {
    /// Labels closer than this merge; labels with smaller norm are the zero label.
    pub merge_radius: f64,
    /// Bound on the shifted residual at the limit.
    pub tol: f64,
    pub flow: FlowOptions,
}

impl Default for StrataOptions {
    fn default() -> Self {
        StrataOptions {
            merge_radius: MERGE_RADIUS,
            tol: 1e-8,
            flow: FlowOptions { tol: 1e-9, track_group: false, ..FlowOptions::default() },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StratumOf {
    /// `chamber_project(μ_p(limit))`; `None` when the flow did not converge.
    pub beta_plus: Option<Vec<f64>>,
    pub norm: f64,
    /// `|proj_{p^β}(Ad(k⁻¹)μ_p(limit)) − β|` with `k` diagonalizing `μ_p(limit)`.
    pub shifted_residual: f64,
    /// `|β_X(limit)|` for `β = μ_p(limit)`.
    pub critical_residual: f64,
    pub flow_status: FlowStatus,
    pub diagnostics: Option<String>,
}

/// Projection onto the centralizer of `diag(β)`: keep the blocks of equal entries.
fn centralizer_part(m: &CMat, beta: &[f64], tol: f64) -> CMat {
    let blocks = crate::lie_core::eigen_blocks(beta, tol);
    CMat::from_fn(m.nrows(), m.ncols(), |i, j| if blocks[i] == blocks[j] { m[(i, j)] } else { linalg::real(0.0) })
}

/// Stratum of the limit `μ_p(x_∞)`, measured in the Weyl chamber.
pub fn stratum_of(spec: &CompatibleGroupSpec, x: &Point, opts: &StrataOptions) -> Result<StratumOf> {
    let flow = negative_flow(spec, x, &opts.flow)?;
    let beta = mu_p(spec, &flow.limit);
    let (vals, vecs) = linalg::hermitian_eigen(beta.entries())?;
    let rotated = vecs.adjoint() * beta.entries() * &vecs;
    let scale = vals.iter().fold(1.0_f64, |a, v| a.max(v.abs()));
    let diag = CMat::from_diagonal(&nalgebra::DVector::from_iterator(vals.len(), vals.iter().map(|&v| linalg::real(v))));
    let shifted = linalg::fro(&(centralizer_part(&rotated, &vals, 1e-9 * scale) - diag));
    let critical = beta_field(spec, &beta, &flow.limit).fro_norm();
    let converged = flow.status == FlowStatus::Converged;
    let mut diagnostics = flow.diagnostics.clone();
    if converged && shifted > opts.tol {
        diagnostics = Some(format!("shifted residual {shifted:e} above {:e}", opts.tol));
    }
    let beta_plus = (converged && shifted <= opts.tol).then(|| chamber_project(&beta)).transpose()?;
    Ok(StratumOf {
        norm: beta.norm(),
        beta_plus,
        shifted_residual: shifted,
        critical_residual: critical,
        flow_status: flow.status,
        diagnostics,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StratumLabel {
    pub beta_plus: Vec<f64>,
    pub norm: f64,
    pub members: usize,
    /// Up to five sample ids of the stratum.
    pub representatives: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClosurePair {
    /// Index of the label with the larger norm.
    pub higher: usize,
    pub lower: usize,
    pub count: usize,
    /// The higher-norm stratum has fewer members.
    pub consistent: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SampleStratum {
    pub id: u64,
    pub label: Option<usize>,
    pub norm: f64,
    pub shifted_residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StrataCensus {
    pub n_samples: usize,
    pub seed: u64,
    /// Labels sorted by norm, then lexicographically.
    pub labels: Vec<StratumLabel>,
    pub unlabeled: usize,
    pub has_zero_label: bool,
    /// Fraction of labeled samples in the stratum of smallest norm.
    pub minimal_fraction: f64,
    pub closure: Vec<ClosurePair>,
    pub closure_consistent: bool,
    pub max_shifted_residual: f64,
    pub samples: Vec<SampleStratum>,
}

/// Greedy merge of chamber points within `radius`; near-zero points share the zero label.
fn merge_labels(points: &[Option<Vec<f64>>], radius: f64) -> (Vec<Vec<f64>>, Vec<Option<usize>>) {
    let mut centers: Vec<Vec<f64>> = Vec::new();
    let mut assign = Vec::with_capacity(points.len());
    for p in points {
        let Some(p) = p else {
            assign.push(None);
            continue;
        };
        let q = if linalg::norm(p) <= radius { vec![0.0; p.len()] } else { p.clone() };
        let found = centers.iter().position(|c| dist(c, &q) <= radius);
        assign.push(Some(found.unwrap_or_else(|| {
            centers.push(q);
            centers.len() - 1
        })));
    }
    (centers, assign)
}

/// Closure order from nearest neighbours in a different stratum.
fn closure_pairs(points: &[Point], assign: &[Option<usize>], labels: &[StratumLabel]) -> Vec<ClosurePair> {
    let mut counts: std::collections::BTreeMap<(usize, usize), usize> = Default::default();
    for (i, li) in assign.iter().enumerate() {
        let Some(li) = *li else { continue };
        let nearest = assign
            .iter()
            .enumerate()
            .filter(|(j, lj)| *j != i && lj.is_some())
            .min_by(|a, b| points[i].chordal(&points[a.0]).total_cmp(&points[i].chordal(&points[b.0])));
        if let Some((_, Some(lj))) = nearest {
            if *lj != li {
                let (hi, lo) = if labels[li].norm >= labels[*lj].norm { (li, *lj) } else { (*lj, li) };
                *counts.entry((hi, lo)).or_insert(0) += 1;
            }
        }
    }
    counts
        .into_iter()
        .map(|((higher, lower), count)| ClosurePair {
            higher,
            lower,
            count,
            consistent: labels[higher].members <= labels[lower].members,
        })
        .collect()
}

/// Census of flow-limit strata over explicit points with the given ids.
pub fn strata_of_points(
    spec: &CompatibleGroupSpec,
    points: &[Point],
    ids: &[u64],
    seed: u64,
    opts: &StrataOptions,
) -> Result<StrataCensus> {
    let results: Vec<Result<StratumOf>> = points.par_iter().map(|x| stratum_of(spec, x, opts)).collect();
    let results: Vec<StratumOf> = results.into_iter().collect::<Result<_>>()?;
    let raw: Vec<Option<Vec<f64>>> = results.iter().map(|r| r.beta_plus.clone()).collect();
    let (centers, assign) = merge_labels(&raw, opts.merge_radius);
    // canonical order: by norm, then lexicographic
    let mut order: Vec<usize> = (0..centers.len()).collect();
    order.sort_by(|&a, &b| {
        linalg::norm(&centers[a])
            .total_cmp(&linalg::norm(&centers[b]))
            .then_with(|| centers[a].iter().zip(&centers[b]).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal))
    });
    let mut rank = vec![0; centers.len()];
    for (r, &c) in order.iter().enumerate() {
        rank[c] = r;
    }
    let assign: Vec<Option<usize>> = assign.iter().map(|a| a.map(|c| rank[c])).collect();
    let mut labels: Vec<StratumLabel> = order
        .iter()
        .map(|&c| StratumLabel { norm: linalg::norm(&centers[c]), beta_plus: centers[c].clone(), members: 0, representatives: Vec::new() })
        .collect();
    for (a, id) in assign.iter().zip(ids) {
        if let Some(l) = a {
            labels[*l].members += 1;
            if labels[*l].representatives.len() < 5 {
                labels[*l].representatives.push(*id);
            }
        }
    }
    let labeled: usize = labels.iter().map(|l| l.members).sum();
    let closure = closure_pairs(points, &assign, &labels);
    Ok(StrataCensus {
        n_samples: points.len(),
        seed,
        unlabeled: points.len() - labeled,
        has_zero_label: labels.first().is_some_and(|l| l.norm == 0.0),
        minimal_fraction: if labeled == 0 { 0.0 } else { labels[0].members as f64 / labeled as f64 },
        closure_consistent: closure.iter().all(|p| p.consistent),
        closure,
        max_shifted_residual: results.iter().map(|r| r.shifted_residual).fold(0.0, f64::max),
        samples: results
            .iter()
            .zip(&assign)
            .zip(ids)
            .map(|((r, a), id)| SampleStratum { id: *id, label: *a, norm: r.norm, shifted_residual: r.shifted_residual })
            .collect(),
        labels,
    })
}

/// Strata census of `n_samples` scenario samples.
pub fn strata_survey(s: &Scenario, n_samples: usize, seed: u64, opts: &StrataOptions) -> Result<StrataCensus> {
    let ids: Vec<u64> = (0..n_samples as u64).collect();
    let points: Vec<Point> = ids.iter().map(|&i| s.sample_at(seed, i)).collect::<Result<_>>()?;
    strata_of_points(&s.spec, &points, &ids, seed, opts)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CensusStability {
    pub n_small: usize,
    pub labels_small: usize,
    pub labels_large: usize,
    /// Every label of the smaller census reappears in the larger one.
    pub nested: bool,
    pub stable: bool,
}

/// Compares the census at `n` samples with the census at `2n`.
pub fn census_stability(small: &StrataCensus, large: &StrataCensus, radius: f64) -> CensusStability {
    let nested = small
        .labels
        .iter()
        .all(|l| large.labels.iter().any(|m| dist(&l.beta_plus, &m.beta_plus) <= radius));
    CensusStability {
        n_small: small.n_samples,
        labels_small: small.labels.len(),
        labels_large: large.labels.len(),
        nested,
        stable: nested && small.labels.len() == large.labels.len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kahler::GrassPoint;
    use crate::linalg::{c, real, sample_rng};

    fn p1(a: crate::linalg::C64, b: crate::linalg::C64) -> Point {
        GrassPoint::new(&CMat::from_column_slice(2, 1, &[a, b])).unwrap().into()
    }

    #[test]
    fn p1_labels() {
        let spec = CompatibleGroupSpec::sl_n_real(2);
        let opts = StrataOptions::default();
        let zero = stratum_of(&spec, &p1(real(1.0), c(0.0, 1.0)), &opts).unwrap();
        assert!(zero.norm < 1e-12);
        let top = stratum_of(&spec, &p1(real(1.0), real(0.0)), &opts).unwrap();
        let b = top.beta_plus.unwrap();
        assert!((b[0] - 0.5).abs() < 1e-12 && (b[1] + 0.5).abs() < 1e-12);
        assert!(top.shifted_residual < 1e-12);
    }

    #[test]
    fn labels_are_k_invariant() {
        let spec = CompatibleGroupSpec::sl_n_real(4);
        let opts = StrataOptions::default();
        let s = Scenario::named(crate::scenarios::ScenarioName::ComplexGrassmannian).unwrap();
        let mut rng = sample_rng(3, 0);
        for i in 0..5 {
            let mut x = s.sample_at(9, i).unwrap();
            if i % 2 == 0 {
                // a real line inside the plane makes the point unstable
                let mut f = x.frames()[0].clone();
                f.set_column(0, &crate::linalg::gaussian_rmat(4, 1, &mut rng).column(0));
                x = GrassPoint::new(&f).unwrap().into();
            }
            let k = spec.random_k(&mut rng);
            let a = stratum_of(&spec, &x, &opts).unwrap().beta_plus.unwrap();
            let b = stratum_of(&spec, &x.act(&k).unwrap(), &opts).unwrap().beta_plus.unwrap();
            assert!(dist(&a, &b) < 1e-6, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn label_constant_along_trajectory() {
        let spec = CompatibleGroupSpec::sl_n_real(4);
        let opts = StrataOptions::default();
        let mut rng = sample_rng(4, 0);
        let mut f = crate::linalg::gaussian_cmat(4, 2, &mut rng);
        f.set_column(0, &crate::linalg::gaussian_rmat(4, 1, &mut rng).column(0));
        let x: Point = GrassPoint::new(&f).unwrap().into();
        let full = negative_flow(&spec, &x, &opts.flow).unwrap();
        let half = FlowOptions { t_max: full.t_final / 2.0, ..opts.flow };
        let mid = negative_flow(&spec, &x, &half).unwrap().limit;
        let a = stratum_of(&spec, &x, &opts).unwrap().beta_plus.unwrap();
        let b = stratum_of(&spec, &mid, &opts).unwrap().beta_plus.unwrap();
        assert!(dist(&a, &b) < 1e-6);
    }

    #[test]
    fn mixed_census_on_p1() {
        let spec = CompatibleGroupSpec::sl_n_real(2);
        let mut points = Vec::new();
        let mut rng = sample_rng(5, 0);
        for i in 0..30 {
            if i % 5 == 0 {
                let th: f64 = rand::Rng::random_range(&mut rng, 0.0..std::f64::consts::PI);
                points.push(p1(real(th.cos()), real(th.sin())));
            } else {
                let f = crate::linalg::gaussian_cmat(2, 1, &mut rng);
                points.push(GrassPoint::new(&f).unwrap().into());
            }
        }
        let ids: Vec<u64> = (0..30).collect();
        let c = strata_of_points(&spec, &points, &ids, 5, &StrataOptions::default()).unwrap();
        assert_eq!(c.labels.len(), 2);
        assert!(c.has_zero_label);
        assert_eq!(c.labels[0].members, 24);
        assert!((c.minimal_fraction - 0.8).abs() < 1e-12);
        assert!(c.closure_consistent);
    }

    #[test]
    fn merge_is_greedy_and_zeroes_small_labels() {
        let pts = vec![Some(vec![1e-5, -1e-5]), Some(vec![0.5, -0.5]), None, Some(vec![0.5 + 1e-6, -0.5 - 1e-6])];
        let (centers, assign) = merge_labels(&pts, 1e-4);
        assert_eq!(centers, vec![vec![0.0, 0.0], vec![0.5, -0.5]]);
        assert_eq!(assign, vec![Some(0), Some(1), None, Some(1)]);
    }
}
