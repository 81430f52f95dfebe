//! Incremental (beneath–beyond) convex hull in low dimension.
//!
//! Inputs are first reduced to coordinates on their affine hull, so
//! lower-dimensional point sets are handled by reporting a smaller `dim`.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::linalg::{dist, dot};
use crate::minnorm;

const AFFINE_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Facet {
    /// Outward unit normal in reduced coordinates.
    pub normal: Vec<f64>,
    pub offset: f64,
    pub vertices: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Hull {
    /// Affine dimension of the input.
    pub dim: usize,
    /// Hull vertices in input coordinates, in canonical (lexicographic) order.
    pub vertices: Vec<Vec<f64>>,
    /// Origin and orthonormal axes of the reduced coordinate system.
    pub origin: Vec<f64>,
    pub axes: Vec<Vec<f64>>,
    /// Facets `<normal, y> <= offset` in reduced coordinates (empty when `dim < 2`,
    /// where the hull is a point or a segment).
    pub facets: Vec<Facet>,
    /// Largest violation of the facet inequalities over the input points.
    pub max_violation: f64,
}

impl Hull {
    pub fn reduce(&self, p: &[f64]) -> Vec<f64> {
        let c: Vec<f64> = p.iter().zip(&self.origin).map(|(a, b)| a - b).collect();
        self.axes.iter().map(|a| dot(a, &c)).collect()
    }

    pub fn diameter(&self) -> f64 {
        let mut d: f64 = 0.0;
        for (i, a) in self.vertices.iter().enumerate() {
            for b in &self.vertices[i + 1..] {
                d = d.max(dist(a, b));
            }
        }
        d
    }

    /// Signed violation of the facet inequalities (≤ 0 inside).
    pub fn violation(&self, p: &[f64]) -> f64 {
        let y = self.reduce(p);
        let back: Vec<f64> = {
            let mut v = self.origin.clone();
            for (a, yi) in self.axes.iter().zip(&y) {
                for (vk, ak) in v.iter_mut().zip(a) {
                    *vk += yi * ak;
                }
            }
            v
        };
        let off_plane = dist(&back, p);
        let inside = match self.dim {
            0 => 0.0,
            1 => {
                let ends: Vec<f64> = self.vertices.iter().map(|v| self.reduce(v)[0]).collect();
                let lo = ends.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = ends.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                (lo - y[0]).max(y[0] - hi)
            }
            _ => self.facets.iter().map(|f| dot(&f.normal, &y) - f.offset).fold(f64::NEG_INFINITY, f64::max),
        };
        inside.max(off_plane)
    }
}

fn canonical(points: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut pts: Vec<Vec<f64>> = points.to_vec();
    pts.sort_by(|a, b| {
        a.iter().zip(b).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal)
    });
    pts.dedup_by(|a, b| dist(a, b) <= 1e-12);
    pts
}

fn affine_frame(pts: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let d = pts[0].len();
    let n = pts.len() as f64;
    let mut origin = vec![0.0; d];
    for p in pts {
        for (o, x) in origin.iter_mut().zip(p) {
            *o += x / n;
        }
    }
    let m = DMatrix::from_fn(pts.len(), d, |i, j| pts[i][j] - origin[j]);
    let scale = m.iter().fold(0.0_f64, |a, x| a.max(x.abs())).max(1e-300);
    let svd = m.svd(false, true);
    let vt = svd.v_t.expect("v_t requested");
    let mut axes = Vec::new();
    for (i, s) in svd.singular_values.iter().enumerate() {
        if *s > AFFINE_TOL * scale * (pts.len() as f64).sqrt() {
            axes.push(vt.row(i).iter().cloned().collect());
        }
    }
    (origin, axes)
}

fn facet_plane(pts: &[Vec<f64>], idx: &[usize], interior: &[f64]) -> Option<(Vec<f64>, f64)> {
    let r = pts[0].len();
    let base = &pts[idx[0]];
    let m = DMatrix::from_fn(idx.len() - 1, r, |i, j| pts[idx[i + 1]][j] - base[j]);
    // normal = right singular vector of the smallest singular value
    let mut full = DMatrix::<f64>::zeros(r, r);
    full.view_mut((0, 0), (idx.len() - 1, r)).copy_from(&m);
    let svd = full.svd(false, true);
    let vt = svd.v_t?;
    let (k, smin) = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(k, s)| (k, *s))?;
    let second = svd.singular_values.iter().enumerate().filter(|(i, _)| *i != k).map(|(_, s)| *s).fold(f64::INFINITY, f64::min);
    if r > 1 && !(second > 1e-12 * (1.0 + smin)) {
        return None;
    }
    let mut normal: Vec<f64> = vt.row(k).iter().cloned().collect();
    let mut offset = dot(&normal, base);
    if dot(&normal, interior) > offset {
        normal.iter_mut().for_each(|x| *x = -*x);
        offset = -offset;
    }
    Some((normal, offset))
}

struct Working {
    vertices: Vec<usize>,
    normal: Vec<f64>,
    offset: f64,
}

fn incremental(pts: &[Vec<f64>]) -> Vec<Working> {
    let r = pts[0].len();
    // initial simplex: greedily pick points farthest from the current affine span
    let mut simplex = vec![0usize];
    let far = (0..pts.len()).max_by(|&a, &b| dist(&pts[a], &pts[0]).total_cmp(&dist(&pts[b], &pts[0])).then(b.cmp(&a))).unwrap();
    simplex.push(far);
    while simplex.len() < r + 1 {
        let base = &pts[simplex[0]];
        let m = DMatrix::from_fn(r, simplex.len() - 1, |i, j| pts[simplex[j + 1]][i] - base[i]);
        let q = m.qr().q();
        let residual = |p: &Vec<f64>| {
            let c = DVector::from_iterator(r, p.iter().zip(base).map(|(a, b)| a - b));
            let proj = &q * (q.transpose() * &c);
            (c - proj).norm()
        };
        let next = (0..pts.len())
            .filter(|i| !simplex.contains(i))
            .max_by(|&a, &b| residual(&pts[a]).total_cmp(&residual(&pts[b])).then(b.cmp(&a)))
            .unwrap();
        simplex.push(next);
    }
    let interior: Vec<f64> = (0..r).map(|j| simplex.iter().map(|&i| pts[i][j]).sum::<f64>() / (r + 1) as f64).collect();
    let scale = pts.iter().flat_map(|p| p.iter()).fold(0.0_f64, |a, x| a.max(x.abs())).max(1e-300);
    let eps = 1e-11 * scale;
    let mut facets: Vec<Working> = Vec::new();
    for skip in 0..=r {
        let verts: Vec<usize> = simplex.iter().enumerate().filter(|(i, _)| *i != skip).map(|(_, v)| *v).collect();
        if let Some((normal, offset)) = facet_plane(pts, &verts, &interior) {
            facets.push(Working { vertices: verts, normal, offset });
        }
    }
    for (pi, p) in pts.iter().enumerate() {
        if simplex.contains(&pi) {
            continue;
        }
        let visible: Vec<bool> = facets.iter().map(|f| dot(&f.normal, p) - f.offset > eps).collect();
        if !visible.iter().any(|&v| v) {
            continue;
        }
        let mut ridges: HashMap<Vec<usize>, usize> = HashMap::new();
        for (f, _) in facets.iter().zip(&visible).filter(|(_, v)| **v) {
            for skip in 0..f.vertices.len() {
                let mut ridge: Vec<usize> = f.vertices.iter().enumerate().filter(|(i, _)| *i != skip).map(|(_, v)| *v).collect();
                ridge.sort_unstable();
                *ridges.entry(ridge).or_insert(0) += 1;
            }
        }
        let mut horizon: Vec<Vec<usize>> = ridges.into_iter().filter(|(_, c)| *c == 1).map(|(r, _)| r).collect();
        horizon.sort();
        let mut kept: Vec<Working> = facets.into_iter().zip(visible).filter(|(_, v)| !v).map(|(f, _)| f).collect();
        for ridge in horizon {
            let mut verts = ridge.clone();
            verts.push(pi);
            if let Some((normal, offset)) = facet_plane(pts, &verts, &interior) {
                kept.push(Working { vertices: verts, normal, offset });
            }
        }
        facets = kept;
    }
    facets
}

/// Convex hull of a non-empty point set. Results do not depend on input order.
pub fn build_hull(points: &[Vec<f64>]) -> Hull {
    assert!(!points.is_empty(), "build_hull needs at least one point");
    let pts = canonical(points);
    let (origin, axes) = affine_frame(&pts);
    let dim = axes.len();
    let reduced: Vec<Vec<f64>> = pts
        .iter()
        .map(|p| {
            let c: Vec<f64> = p.iter().zip(&origin).map(|(a, b)| a - b).collect();
            axes.iter().map(|a| dot(a, &c)).collect()
        })
        .collect();
    let (mut vertex_ids, facets): (Vec<usize>, Vec<Facet>) = match dim {
        0 => (vec![0], Vec::new()),
        1 => {
            let lo = (0..pts.len()).min_by(|&a, &b| reduced[a][0].total_cmp(&reduced[b][0])).unwrap();
            let hi = (0..pts.len()).max_by(|&a, &b| reduced[a][0].total_cmp(&reduced[b][0])).unwrap();
            (vec![lo, hi], Vec::new())
        }
        _ => {
            let work = incremental(&reduced);
            let mut ids: Vec<usize> = work.iter().flat_map(|f| f.vertices.iter().cloned()).collect();
            ids.sort_unstable();
            ids.dedup();
            let facets = work.into_iter().map(|f| Facet { normal: f.normal, offset: f.offset, vertices: f.vertices }).collect();
            (ids, facets)
        }
    };
    vertex_ids.sort_unstable();
    vertex_ids.dedup();
    // drop vertices that lie in the hull of the others (coplanar insertions)
    if dim >= 2 && vertex_ids.len() > dim + 1 {
        let candidates = vertex_ids.clone();
        vertex_ids = candidates
            .iter()
            .filter(|&&v| {
                let others: Vec<Vec<f64>> = candidates.iter().filter(|&&o| o != v).map(|&o| reduced[o].clone()).collect();
                minnorm::distance_to_hull(&others, &reduced[v]) > 1e-9
            })
            .cloned()
            .collect();
    }
    let mut hull = Hull {
        dim,
        vertices: vertex_ids.iter().map(|&i| pts[i].clone()).collect(),
        origin,
        axes,
        facets: facets
            .into_iter()
            .map(|mut f| {
                f.vertices = f.vertices.iter().map(|v| vertex_ids.iter().position(|x| x == v).unwrap_or(usize::MAX)).collect();
                f
            })
            .collect(),
        max_violation: 0.0,
    };
    hull.max_violation = points.iter().map(|p| hull.violation(p)).fold(f64::NEG_INFINITY, f64::max).max(0.0);
    hull
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::sample_rng;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn single_point() {
        let h = build_hull(&[vec![1.0, -1.0]]);
        assert_eq!(h.dim, 0);
        assert_eq!(h.vertices, vec![vec![1.0, -1.0]]);
        assert_eq!(h.diameter(), 0.0);
    }

    #[test]
    fn square_with_center() {
        let pts = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0], vec![0.5, 0.5]];
        let h = build_hull(&pts);
        assert_eq!(h.dim, 2);
        assert_eq!(h.vertices.len(), 4);
        assert!(h.max_violation <= 1e-9);
    }

    #[test]
    fn collinear_points() {
        let pts: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64, 2.0 * i as f64, 0.0]).collect();
        let h = build_hull(&pts);
        assert_eq!(h.dim, 1);
        assert_eq!(h.vertices.len(), 2);
        assert!(h.max_violation <= 1e-9);
    }

    #[test]
    fn cube_corners_and_interior() {
        let mut pts = Vec::new();
        for i in 0..8 {
            pts.push(vec![(i & 1) as f64, ((i >> 1) & 1) as f64, ((i >> 2) & 1) as f64]);
        }
        let mut rng = sample_rng(7, 0);
        for _ in 0..50 {
            pts.push((0..3).map(|_| rng.random_range(0.0..1.0)).collect());
        }
        let h = build_hull(&pts);
        assert_eq!(h.dim, 3);
        assert_eq!(h.vertices.len(), 8);
        assert!(h.max_violation <= 1e-9);
    }

    #[test]
    fn simplex_samples_stay_inside() {
        let corners = [vec![0.0, 0.0, 0.0], vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]];
        let mut rng = sample_rng(8, 0);
        let mut pts = Vec::new();
        while pts.len() < 1000 {
            let p: Vec<f64> = (0..3).map(|_| rng.random_range(0.0..1.0)).collect();
            if p.iter().sum::<f64>() <= 1.0 {
                pts.push(p);
            }
        }
        let h = build_hull(&pts);
        assert!(h.max_violation <= 1e-9);
        let mut with_corners = pts.clone();
        with_corners.extend(corners.iter().cloned());
        let hc = build_hull(&with_corners);
        assert_eq!(hc.vertices.len(), 4);
        for v in &hc.vertices {
            assert!(corners.iter().any(|c| dist(c, v) < 1e-12));
        }
    }

    #[test]
    fn permutation_invariant() {
        let mut rng = sample_rng(9, 0);
        let pts: Vec<Vec<f64>> = (0..200).map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let mut rev = pts.clone();
        rev.reverse();
        assert_eq!(build_hull(&pts), build_hull(&rev));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn all_points_inside(pts in prop::collection::vec(prop::collection::vec(-2.0f64..2.0, 3), 1..40)) {
            let h = build_hull(&pts);
            prop_assert!(h.max_violation <= 1e-9);
            prop_assert!(h.vertices.len() <= pts.len());
        }
    }
}
