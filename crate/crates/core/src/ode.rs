//! Dormand–Prince 5(4) step on a tuple of matrices.

use crate::linalg::{fro, CMat};

const A: [&[f64]; 6] = [
    &[1.0 / 5.0],
    &[3.0 / 40.0, 9.0 / 40.0],
    &[44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0],
    &[19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0],
    &[9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0],
    &[35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

fn combine(y: &[CMat], h: f64, ks: &[Vec<CMat>], coeffs: &[f64]) -> Vec<CMat> {
    y.iter()
        .enumerate()
        .map(|(i, yi)| {
            let mut out = yi.clone();
            for (k, &a) in ks.iter().zip(coeffs) {
                if a != 0.0 {
                    out += k[i].scale(h * a);
                }
            }
            out
        })
        .collect()
}

pub(crate) struct StepOutcome {
    pub y: Vec<CMat>,
    /// Scaled error of the first `n_err` components; accept when `<= 1`.
    pub err: f64,
}

pub(crate) fn dp_step<F>(y: &[CMat], h: f64, f: &F, n_err: usize, rtol: f64, atol: f64) -> StepOutcome
where
    F: Fn(&[CMat]) -> Vec<CMat>,
{
    let mut ks: Vec<Vec<CMat>> = Vec::with_capacity(7);
    ks.push(f(y));
    for row in A.iter().take(5) {
        let stage = combine(y, h, &ks, row);
        ks.push(f(&stage));
    }
    let y5 = combine(y, h, &ks, &B5[..6]);
    ks.push(f(&y5));
    let y4 = combine(y, h, &ks, &B4);
    let mut err: f64 = 0.0;
    for i in 0..n_err.min(y.len()) {
        let scale = atol + rtol * fro(&y[i]).max(fro(&y5[i]));
        err = err.max(fro(&(&y5[i] - &y4[i])) / scale);
    }
    StepOutcome { y: y5, err }
}

/// Standard step-size controller for a fifth-order pair.
pub(crate) fn next_step(h: f64, err: f64) -> f64 {
    let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
    h * factor
}
