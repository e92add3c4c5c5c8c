use super::model::s1_field;
use crate::error::{Error, Result};
use crate::ode::dopri5;
use crate::trajectory::{Trajectory, BLOWUP};
use serde::{Deserialize, Serialize};

/// Tolerance of the adaptive integration of the ensemble.
pub const S1_TOL: f64 = 1e-8;

/// c with escape time 1 for ẋ = −2x + x², x(0) = c, i.e. 2e²/(e²−1).
pub fn s1_constant() -> f64 {
    let e2 = 2f64.exp();
    2.0 * e2 / (e2 - 1.0)
}

/// Escape time ½·ln(c/(c−2)) of ẋ = −2x + x² from c > 2.
pub fn escape_time(c: f64) -> Result<f64> {
    if !(c > 2.0) {
        return Err(Error::Domain(format!("escape needs c > 2, got {c}")));
    }
    Ok(0.5 * (c / (c - 2.0)).ln())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModePeak {
    pub k: usize,
    pub peak: f64,
    pub time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleReport {
    pub c: f64,
    pub tol: f64,
    pub trajectory: Trajectory,
    pub peaks: Vec<ModePeak>,
    /// peak of mode k ≥ k for every k.
    pub linear_growth: bool,
}

/// Run all K modes from (c, e) with adaptive Dormand–Prince and record the
/// peak of each |x_k|. A failed run is retried once with a tighter tolerance.
pub fn ensemble_s1(k: usize, t_end: f64) -> Result<EnsembleReport> {
    if k == 0 {
        return Err(Error::Config("ensemble needs at least one mode".into()));
    }
    if !(t_end.is_finite() && t_end > 0.0) {
        return Err(Error::Config(format!("t_end must be finite and > 0, got {t_end}")));
    }
    let c = s1_constant();
    let e = 1f64.exp();
    let y0: Vec<f64> = (0..k).flat_map(|_| [c, e]).collect();
    let field = |_: f64, y: &[f64], d: &mut [f64]| s1_field(k, y, d);
    let mut tol = S1_TOL;
    let mut run = dopri5(field, &y0, t_end, tol, BLOWUP)?;
    if run.blew_up {
        tol *= 0.1;
        run = dopri5(field, &y0, t_end, tol, BLOWUP)?;
        if run.blew_up {
            return Err(Error::Numerical(format!(
                "step size collapsed near t = {}",
                run.times.last().copied().unwrap_or(0.0)
            )));
        }
    }
    let mut peaks: Vec<ModePeak> = (1..=k).map(|k| ModePeak { k, peak: 0.0, time: 0.0 }).collect();
    for (t, y) in run.times.iter().zip(&run.states) {
        for p in peaks.iter_mut() {
            let v = y[2 * (p.k - 1)].abs();
            if v > p.peak {
                p.peak = v;
                p.time = *t;
            }
        }
    }
    let linear_growth = peaks.iter().all(|p| p.peak >= p.k as f64);
    let trajectory = Trajectory::new(run.times, run.states, vec![], None)?;
    Ok(EnsembleReport { c, tol, trajectory, peaks, linear_growth })
}
