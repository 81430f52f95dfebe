//! Wolfe's algorithm for the point of minimal norm in the convex hull of a
//! finite point set.

use nalgebra::{DMatrix, DVector};

use crate::linalg::{dot, norm};

#[derive(Clone, Debug, PartialEq)]
pub struct MinNormPoint {
    pub point: Vec<f64>,
    pub distance: f64,
    /// Convex weights over the input points (zero for points outside the support).
    pub weights: Vec<f64>,
}

/// Weights `α` with `Σα = 1` minimizing `|Σ α_i p_i|` over the affine hull of `pts[s]`.
fn affine_minimizer(pts: &[Vec<f64>], s: &[usize]) -> Vec<f64> {
    let m = s.len();
    let mut a = DMatrix::<f64>::zeros(m + 1, m + 1);
    for (i, &pi) in s.iter().enumerate() {
        for (j, &pj) in s.iter().enumerate() {
            a[(i, j)] = dot(&pts[pi], &pts[pj]);
        }
        a[(i, m)] = 1.0;
        a[(m, i)] = 1.0;
    }
    let mut rhs = DVector::<f64>::zeros(m + 1);
    rhs[m] = 1.0;
    let sol = a
        .clone()
        .lu()
        .solve(&rhs)
        .filter(|v| v.iter().all(|x| x.is_finite()))
        .unwrap_or_else(|| a.svd(true, true).solve(&rhs, 1e-14).expect("svd solve"));
    sol.iter().take(m).cloned().collect()
}

fn combine(pts: &[Vec<f64>], s: &[usize], w: &[f64]) -> Vec<f64> {
    let d = pts[0].len();
    let mut x = vec![0.0; d];
    for (&i, &wi) in s.iter().zip(w) {
        for (xk, pk) in x.iter_mut().zip(&pts[i]) {
            *xk += wi * pk;
        }
    }
    x
}

/// Minimal-norm point of `conv(pts)`; `pts` must be non-empty with equal lengths.
pub fn min_norm_point(pts: &[Vec<f64>]) -> MinNormPoint {
    assert!(!pts.is_empty(), "min_norm_point needs at least one point");
    let scale = pts.iter().map(|p| dot(p, p)).fold(0.0, f64::max).max(1e-300);
    let eps = 1e-12 * scale;
    let start = (0..pts.len())
        .min_by(|&a, &b| dot(&pts[a], &pts[a]).total_cmp(&dot(&pts[b], &pts[b])).then(a.cmp(&b)))
        .unwrap();
    let mut s = vec![start];
    let mut lam = vec![1.0];
    let mut x = pts[start].clone();
    for _major in 0..10 * pts.len() + 100 {
        let xx = dot(&x, &x);
        if xx <= eps {
            break;
        }
        let j = (0..pts.len())
            .min_by(|&a, &b| dot(&x, &pts[a]).total_cmp(&dot(&x, &pts[b])).then(a.cmp(&b)))
            .unwrap();
        if dot(&x, &pts[j]) >= xx - eps || s.contains(&j) {
            break;
        }
        s.push(j);
        lam.push(0.0);
        loop {
            let alpha = affine_minimizer(pts, &s);
            if alpha.iter().all(|&a| a > 1e-14) {
                lam = alpha;
                x = combine(pts, &s, &lam);
                break;
            }
            let mut theta: f64 = 1.0;
            for (&l, &a) in lam.iter().zip(&alpha) {
                if a <= 1e-14 && l - a > 0.0 {
                    theta = theta.min(l / (l - a));
                }
            }
            let mixed: Vec<f64> = lam.iter().zip(&alpha).map(|(l, a)| theta * a + (1.0 - theta) * l).collect();
            let keep: Vec<usize> = (0..s.len()).filter(|&i| mixed[i] > 1e-14).collect();
            if keep.is_empty() {
                break;
            }
            s = keep.iter().map(|&i| s[i]).collect();
            let total: f64 = keep.iter().map(|&i| mixed[i]).sum();
            lam = keep.iter().map(|&i| mixed[i] / total).collect();
            x = combine(pts, &s, &lam);
            if s.len() == 1 {
                break;
            }
        }
    }
    let mut weights = vec![0.0; pts.len()];
    for (&i, &l) in s.iter().zip(&lam) {
        weights[i] = l;
    }
    MinNormPoint { distance: norm(&x), point: x, weights }
}

/// Distance from `q` to `conv(pts)`.
pub fn distance_to_hull(pts: &[Vec<f64>], q: &[f64]) -> f64 {
    let shifted: Vec<Vec<f64>> = pts.iter().map(|p| p.iter().zip(q).map(|(a, b)| a - b).collect()).collect();
    min_norm_point(&shifted).distance
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn segment_and_triangle() {
        let seg = vec![vec![1.0, 1.0], vec![1.0, -1.0]];
        let r = min_norm_point(&seg);
        assert!((r.distance - 1.0).abs() < 1e-12);
        let tri = vec![vec![1.0, 0.0], vec![-1.0, 1.0], vec![-1.0, -1.0]];
        assert!(min_norm_point(&tri).distance < 1e-12);
        let single = vec![vec![3.0, 4.0]];
        assert!((min_norm_point(&single).distance - 5.0).abs() < 1e-12);
    }

    #[test]
    fn p1_weights() {
        let both = vec![vec![0.5, -0.5], vec![-0.5, 0.5]];
        assert!(min_norm_point(&both).distance < 1e-12);
        let one = vec![vec![0.5, -0.5]];
        assert!(min_norm_point(&one).distance > 0.5);
    }

    proptest! {
        #[test]
        fn optimality_conditions(pts in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 3), 1..12)) {
            let r = min_norm_point(&pts);
            let xx = dot(&r.point, &r.point);
            // x is a convex combination with weights summing to one
            let total: f64 = r.weights.iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-9);
            prop_assert!(r.weights.iter().all(|&w| w >= -1e-12));
            // and every point lies in the half-space <x, p> >= |x|²
            for p in &pts {
                prop_assert!(dot(&r.point, p) >= xx - 1e-8);
            }
        }
    }
}
