use super::{Form, GainOperator};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Iteration cap of the Gelfand iteration.
pub const GELFAND_MAX_ITER: usize = 200;
/// Stopping tolerance on successive estimates.
pub const GELFAND_TOL: f64 = 1e-9;
/// Extra doublings after the stopping rule fires; each halves the
/// remaining O(1/n) bias.
const GELFAND_TAIL: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralEstimate {
    pub radius: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// r = lim ‖Γⁿ(𝟙)‖∞^{1/n} for a linear max- or sum-form operator.
///
/// The Gelfand sequence is evaluated along n = 2ᵏ by repeated squaring of
/// the weight matrix in the operator's own algebra (max-times or
/// plus-times), keeping a running log scale.
pub fn spectral_radius(op: &GainOperator) -> Result<SpectralEstimate> {
    let w = op
        .linear_weights()
        .ok_or_else(|| Error::Unsupported("spectral radius needs linear gains; use cycle_report".into()))?;
    let max = match op.form() {
        Form::Max => true,
        Form::Sum => false,
        Form::Mixed => return Err(Error::Unsupported("spectral radius needs a uniform max or sum form".into())),
    };
    Ok(gelfand(w, op.n(), max))
}

fn ones_norm(m: &[f64], n: usize, max: bool) -> f64 {
    (0..n)
        .map(|i| {
            let row = &m[i * n..(i + 1) * n];
            if max {
                row.iter().copied().fold(0.0, f64::max)
            } else {
                row.iter().sum()
            }
        })
        .fold(0.0, f64::max)
}

fn square(m: &[f64], n: usize, max: bool) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for k in 0..n {
            let a = m[i * n + k];
            if a == 0.0 {
                continue;
            }
            for j in 0..n {
                let v = a * m[k * n + j];
                let o = &mut out[i * n + j];
                if max {
                    if v > *o {
                        *o = v;
                    }
                } else {
                    *o += v;
                }
            }
        }
    }
    out
}

pub(crate) fn gelfand(w: &[f64], n: usize, max: bool) -> SpectralEstimate {
    let mut m = w.to_vec();
    let mut log_scale = 0.0f64;
    let mut log_len = 0.0f64; // log2 of the current power
    let est = |m: &[f64], log_scale: f64, log_len: f64| -> Option<f64> {
        let nm = ones_norm(m, n, max);
        if nm == 0.0 {
            return None;
        }
        Some(((log_scale + nm.ln()) / log_len.exp2()).exp())
    };
    let mut prev = match est(&m, log_scale, log_len) {
        Some(r) => r,
        None => return SpectralEstimate { radius: 0.0, iterations: 0, converged: true },
    };
    let mut tail: Option<usize> = None;
    for k in 1..=GELFAND_MAX_ITER {
        m = square(&m, n, max);
        log_scale *= 2.0;
        log_len += 1.0;
        let top = m.iter().copied().fold(0.0, f64::max);
        if top == 0.0 {
            return SpectralEstimate { radius: 0.0, iterations: k, converged: true };
        }
        for v in m.iter_mut() {
            *v /= top;
        }
        log_scale += top.ln();
        let r = est(&m, log_scale, log_len).unwrap_or(0.0);
        match tail {
            Some(left) if left == 0 => return SpectralEstimate { radius: r, iterations: k, converged: true },
            Some(left) => tail = Some(left - 1),
            None if (r - prev).abs() < GELFAND_TOL => tail = Some(GELFAND_TAIL - 1),
            None => {}
        }
        prev = r;
    }
    SpectralEstimate { radius: prev, iterations: GELFAND_MAX_ITER, converged: false }
}

/// Maximum over cycles of the geometric mean of the cycle gains (Karp's
/// maximum mean cycle on log weights). `None` when the graph is acyclic.
pub fn max_cycle_geometric_mean(w: &[f64], n: usize) -> Option<f64> {
    let neg = f64::NEG_INFINITY;
    let lw: Vec<f64> = w.iter().map(|&x| if x > 0.0 { x.ln() } else { neg }).collect();
    // d[k][v]: best weight of a k-edge walk ending at v, from any start
    let mut d = vec![vec![neg; n]; n + 1];
    d[0] = vec![0.0; n];
    for k in 1..=n {
        for u in 0..n {
            let du = d[k - 1][u];
            if du == neg {
                continue;
            }
            for v in 0..n {
                let e = lw[u * n + v];
                if e != neg && du + e > d[k][v] {
                    d[k][v] = du + e;
                }
            }
        }
    }
    let mut best = neg;
    for v in 0..n {
        if d[n][v] == neg {
            continue;
        }
        let mut worst = f64::INFINITY;
        for k in 0..n {
            if d[k][v] != neg {
                worst = worst.min((d[n][v] - d[k][v]) / (n - k) as f64);
            }
        }
        best = best.max(worst);
    }
    (best > neg).then(|| best.exp())
}
