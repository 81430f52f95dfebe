//! Weyl-chamber images of `μ_p`, hull and midpoint-deficit audits, shifted
//! distances, and density/connectivity scans of the semistable set.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GradmapError, Result};
use crate::hull::build_hull;
use crate::kahler::Point;
use crate::lie_core::{chamber_project, BlockField, CompatibleGroupSpec, ModelName};
use crate::linalg::{dist, sample_rng};
use crate::moment::mu_p;
use crate::scenarios::Scenario;
use crate::stability::{classify, ClassifyOptions, Verdict};

/// Sorted spectrum of `μ_p(x)`.
pub fn chamber_image(spec: &CompatibleGroupSpec, x: &Point) -> Result<Vec<f64>> {
    chamber_project(&mu_p(spec, x))
}

/// First `n − 1` gaps `x_i − x_{i+1}`; a linear chart of the trace-zero chamber.
pub fn gap_coordinates(p: &[f64]) -> Vec<f64> {
    p.windows(2).map(|w| w[0] - w[1]).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DeficitLevel {
    pub n_samples: usize,
    pub max_midpoint_deficit: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChamberReport {
    pub n_samples: usize,
    pub seed: u64,
    pub points: Vec<Vec<f64>>,
    pub hull_vertices: Vec<Vec<f64>>,
    pub hull_dim: usize,
    pub hull_diameter: f64,
    /// Deficit at `n_samples`.
    pub max_midpoint_deficit: f64,
    /// Deficit at `n_samples`, then at `2·n_samples`.
    pub deficits: Vec<DeficitLevel>,
    pub hausdorff_points_to_hull: f64,
    /// Largest violation of `x_1 ≥ … ≥ x_n` and of `Σx = 0`.
    pub max_chamber_violation: f64,
}

fn chamber_violation(p: &[f64]) -> f64 {
    let order = p.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    order.max(p.iter().sum::<f64>().abs())
}

/// Largest distance from the midpoint of a random pair to the sampled set.
pub fn midpoint_deficit(points: &[Vec<f64>], n_pairs: usize, seed: u64) -> f64 {
    if points.len() < 2 {
        return 0.0;
    }
    let mut rng = sample_rng(seed, u64::MAX);
    let pairs: Vec<(usize, usize)> =
        (0..n_pairs).map(|_| (rng.random_range(0..points.len()), rng.random_range(0..points.len()))).collect();
    pairs
        .par_iter()
        .map(|&(a, b)| {
            let m: Vec<f64> = points[a].iter().zip(&points[b]).map(|(x, y)| 0.5 * (x + y)).collect();
            points.iter().map(|p| dist(p, &m)).fold(f64::INFINITY, f64::min)
        })
        .collect::<Vec<f64>>()
        .into_iter()
        .fold(0.0, f64::max)
}

fn images(s: &Scenario, seed: u64, range: std::ops::Range<u64>) -> Result<Vec<Vec<f64>>> {
    let out: Vec<Result<Vec<f64>>> = range
        .into_par_iter()
        .map(|i| chamber_image(&s.spec, &s.sample_at(seed, i)?))
        .collect();
    out.into_iter().collect()
}

/// Chamber images of `n_samples` points, their hull, and the midpoint deficit
/// at `n_samples` and `2·n_samples` (the larger set extends the smaller one).
pub fn convexity_audit(s: &Scenario, n_samples: usize, n_pairs: usize, seed: u64) -> Result<ChamberReport> {
    if n_samples == 0 {
        return Err(GradmapError::invalid("convexity_audit needs at least one sample"));
    }
    let mut all = images(s, seed, 0..n_samples as u64)?;
    let points = all.clone();
    let deficit_n = midpoint_deficit(&points, n_pairs, seed);
    all.extend(images(s, seed, n_samples as u64..2 * n_samples as u64)?);
    let deficit_2n = midpoint_deficit(&all, n_pairs, seed);

    let gaps: Vec<Vec<f64>> = points.iter().map(|p| gap_coordinates(p)).collect();
    let hull = build_hull(&gaps);
    let hull_vertices: Vec<Vec<f64>> = hull
        .vertices
        .iter()
        .map(|v| points[gaps.iter().position(|g| g == v).expect("hull vertex is an input point")].clone())
        .collect();
    let mut diameter: f64 = 0.0;
    for (i, a) in hull_vertices.iter().enumerate() {
        for b in &hull_vertices[i + 1..] {
            diameter = diameter.max(dist(a, b));
        }
    }
    Ok(ChamberReport {
        n_samples,
        seed,
        max_chamber_violation: points.iter().map(|p| chamber_violation(p)).fold(0.0, f64::max),
        hull_dim: hull.dim,
        hull_diameter: diameter,
        hausdorff_points_to_hull: hull.max_violation,
        hull_vertices,
        max_midpoint_deficit: deficit_n,
        deficits: vec![
            DeficitLevel { n_samples, max_midpoint_deficit: deficit_n },
            DeficitLevel { n_samples: 2 * n_samples, max_midpoint_deficit: deficit_2n },
        ],
        points,
    })
}

/// `min_{ξ ∈ K·β} |μ_p(x) − ξ|`, which by rearrangement is the distance of sorted spectra.
pub fn shifted_distance(spec: &CompatibleGroupSpec, x: &Point, beta: &[f64]) -> Result<f64> {
    if beta.len() != spec.n {
        return Err(GradmapError::invalid(format!("beta has length {}, expected {}", beta.len(), spec.n)));
    }
    if beta.windows(2).any(|w| w[1] > w[0] + 1e-12) {
        return Err(GradmapError::invalid("beta must be sorted non-increasingly"));
    }
    Ok(dist(&chamber_image(spec, x)?, beta))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PilotReport {
    pub n_pilot: usize,
    pub complex_semistable_fraction: f64,
    /// `Z^{ss}_μ ≠ ∅` on the pilot batch.
    pub hypothesis_holds: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DensityReport {
    pub n_samples: usize,
    pub seed: u64,
    pub semistable_fraction: f64,
    pub n_semistable: usize,
    pub n_undetermined: usize,
    pub knn_graph_connected: bool,
    pub k_neighbors: usize,
    pub largest_component_fraction: f64,
    pub n_components: usize,
    pub pilot: PilotReport,
    pub verdicts: Vec<Verdict>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityOptions {
    pub k_neighbors: usize,
    pub n_pilot: usize,
    pub classify: ClassifyOptions,
}

impl Default for DensityOptions {
    fn default() -> Self {
        DensityOptions { k_neighbors: 10, n_pilot: 20, classify: ClassifyOptions::default() }
    }
}

/// The full complex group on the same block.
pub fn complexified(spec: &CompatibleGroupSpec) -> CompatibleGroupSpec {
    match spec.model_name {
        ModelName::CustomBlock => CompatibleGroupSpec::custom_block(spec.n, spec.ambient_n, BlockField::Complex),
        _ => CompatibleGroupSpec { model_name: ModelName::SlNComplex, block_field: None, ..*spec },
    }
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn find(&mut self, i: usize) -> usize {
        let mut r = i;
        while self.0[r] != r {
            r = self.0[r];
        }
        let mut i = i;
        while self.0[i] != r {
            let next = self.0[i];
            self.0[i] = r;
            i = next;
        }
        r
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Component sizes of the symmetrized `k`-nearest-neighbour graph (chordal metric).
pub fn knn_components(points: &[Point], k: usize) -> Vec<usize> {
    let n = points.len();
    let neighbours: Vec<Vec<usize>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut d: Vec<(f64, usize)> = (0..n).filter(|&j| j != i).map(|j| (points[i].chordal(&points[j]), j)).collect();
            d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            d.into_iter().take(k).map(|(_, j)| j).collect()
        })
        .collect();
    let mut uf = UnionFind((0..n).collect());
    for (i, ns) in neighbours.iter().enumerate() {
        for &j in ns {
            uf.union(i, j);
        }
    }
    let mut sizes = std::collections::BTreeMap::new();
    for i in 0..n {
        *sizes.entry(uf.find(i)).or_insert(0usize) += 1;
    }
    let mut out: Vec<usize> = sizes.into_values().collect();
    out.sort_unstable_by(|a, b| b.cmp(a));
    out
}

/// Semistable fraction and k-NN connectivity of the semistable samples of `Z`.
pub fn density_connectivity_scan(s: &Scenario, n_samples: usize, seed: u64, opts: &DensityOptions) -> Result<DensityReport> {
    let z = s.ambient_scenario();
    let points: Vec<Point> = (0..n_samples as u64).map(|i| z.sample_at(seed, i)).collect::<Result<_>>()?;
    let run = |spec: &CompatibleGroupSpec, pts: &[Point]| -> Result<Vec<Verdict>> {
        let v: Vec<Result<Verdict>> = pts
            .par_iter()
            .enumerate()
            .map(|(i, x)| {
                let o = ClassifyOptions { seed, point_id: i as u64, ..opts.classify };
                Ok(classify(spec, x, &o)?.verdict)
            })
            .collect();
        v.into_iter().collect()
    };
    let n_pilot = opts.n_pilot.min(n_samples);
    let pilot_verdicts = run(&complexified(&z.spec), &points[..n_pilot])?;
    let pilot_ss = pilot_verdicts.iter().filter(|v| v.is_semistable()).count();
    let verdicts = run(&z.spec, &points)?;
    let semistable: Vec<Point> =
        points.iter().zip(&verdicts).filter(|(_, v)| v.is_semistable()).map(|(p, _)| p.clone()).collect();
    let components = if semistable.is_empty() { Vec::new() } else { knn_components(&semistable, opts.k_neighbors) };
    let largest = components.first().copied().unwrap_or(0);
    Ok(DensityReport {
        n_samples,
        seed,
        semistable_fraction: semistable.len() as f64 / n_samples.max(1) as f64,
        n_semistable: semistable.len(),
        n_undetermined: verdicts.iter().filter(|v| **v == Verdict::Undetermined).count(),
        knn_graph_connected: components.len() == 1,
        k_neighbors: opts.k_neighbors,
        largest_component_fraction: if semistable.is_empty() { 0.0 } else { largest as f64 / semistable.len() as f64 },
        n_components: components.len(),
        pilot: PilotReport {
            n_pilot,
            complex_semistable_fraction: if n_pilot == 0 { 0.0 } else { pilot_ss as f64 / n_pilot as f64 },
            hypothesis_holds: pilot_ss > 0,
        },
        verdicts,
    })
}
