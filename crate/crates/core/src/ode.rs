//! Small ODE integrators shared by the comparison, network and ensemble code.

use crate::error::{Error, Result};

/// Adaptive scalar RK4 with step doubling. Returns the solution at each of
/// `nodes` (sorted, ≥ 0); the integration starts at t = 0. Each step is
/// accepted once the full step and two half steps agree to `rel_tol` per
/// unit time, and the Richardson-extrapolated value is kept.
pub fn scalar_rk4<F>(f: F, y0: f64, nodes: &[f64], rel_tol: f64) -> Result<Vec<f64>>
where
    F: Fn(f64, f64) -> f64,
{
    let step = |t: f64, y: f64, h: f64| {
        let k1 = f(t, y);
        let k2 = f(t + 0.5 * h, y + 0.5 * h * k1);
        let k3 = f(t + 0.5 * h, y + 0.5 * h * k2);
        let k4 = f(t + h, y + h * k3);
        y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    };
    let t_end = nodes.last().copied().unwrap_or(0.0);
    let mut h = (t_end / 64.0).max(1e-6);
    let mut out = Vec::with_capacity(nodes.len());
    let (mut t, mut y) = (0.0f64, y0);
    let mut steps = 0usize;
    for &tn in nodes {
        while t < tn {
            let hh = h.min(tn - t);
            let full = step(t, y, hh);
            let half = step(t + 0.5 * hh, step(t, y, 0.5 * hh), 0.5 * hh);
            let err = (half - full).abs();
            let scale = half.abs().max(1e-300);
            if !half.is_finite() {
                return Err(Error::Numerical(format!("non-finite state at t = {t}")));
            }
            // error per unit step, floored at the rounding level of one step
            if err <= rel_tol * scale * hh + 8.0 * f64::EPSILON * scale || hh < 1e-14 {
                t = if hh == tn - t { tn } else { t + hh };
                y = half + (half - full) / 15.0;
                if err < 0.03 * rel_tol * scale * hh {
                    h = (2.0 * hh).max(h);
                }
            } else {
                h = 0.5 * hh;
            }
            steps += 1;
            if steps > 50_000_000 {
                return Err(Error::Numerical("step budget exhausted".into()));
            }
        }
        out.push(y);
    }
    Ok(out)
}

/// One classical RK4 step for a vector field.
pub fn rk4_step<F>(f: &F, t: f64, y: &[f64], h: f64, out: &mut [f64])
where
    F: Fn(f64, &[f64], &mut [f64]),
{
    let n = y.len();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    f(t, y, &mut k1);
    for i in 0..n {
        tmp[i] = y[i] + 0.5 * h * k1[i];
    }
    f(t + 0.5 * h, &tmp, &mut k2);
    for i in 0..n {
        tmp[i] = y[i] + 0.5 * h * k2[i];
    }
    f(t + 0.5 * h, &tmp, &mut k3);
    for i in 0..n {
        tmp[i] = y[i] + h * k3[i];
    }
    f(t + h, &tmp, &mut k4);
    for i in 0..n {
        out[i] = y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
}

/// Result of an adaptive Dormand–Prince run.
#[derive(Debug, Clone)]
pub struct DopriRun {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    /// Set when the state left the `blowup` ball or became non-finite.
    pub blew_up: bool,
}

/// Dormand–Prince 5(4) with standard step control. Every accepted step is
/// recorded.
pub fn dopri5<F>(f: F, y0: &[f64], t_end: f64, tol: f64, blowup: f64) -> Result<DopriRun>
where
    F: Fn(f64, &[f64], &mut [f64]),
{
    const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
    const A: [[f64; 6]; 7] = [
        [0.0; 6],
        [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
        [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
        [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
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
    let n = y0.len();
    let mut y = y0.to_vec();
    let mut t = 0.0;
    let mut h = (t_end * 1e-3).max(1e-8);
    let mut k = vec![vec![0.0; n]; 7];
    let mut tmp = vec![0.0; n];
    let mut run = DopriRun { times: vec![0.0], states: vec![y.clone()], blew_up: false };
    let mut iters = 0usize;
    while t < t_end {
        iters += 1;
        if iters > 10_000_000 {
            return Err(Error::Numerical("dopri5 step budget exhausted".into()));
        }
        h = h.min(t_end - t);
        f(t, &y, &mut k[0]);
        for s in 1..7 {
            for i in 0..n {
                let mut acc = y[i];
                for j in 0..s {
                    acc += h * A[s][j] * k[j][i];
                }
                tmp[i] = acc;
            }
            f(t + C[s] * h, &tmp, &mut k[s]);
        }
        let mut err = 0.0f64;
        let mut y5 = vec![0.0; n];
        for i in 0..n {
            let mut s5 = 0.0;
            let mut s4 = 0.0;
            for s in 0..7 {
                s5 += B5[s] * k[s][i];
                s4 += B4[s] * k[s][i];
            }
            y5[i] = y[i] + h * s5;
            let sc = tol + tol * y[i].abs().max(y5[i].abs());
            err = err.max((h * (s5 - s4)).abs() / sc);
        }
        if !err.is_finite() {
            h *= 0.25;
            if h < 1e-14 {
                run.blew_up = true;
                return Ok(run);
            }
            continue;
        }
        if err <= 1.0 {
            t += h;
            y = y5;
            run.times.push(t);
            run.states.push(y.clone());
            if y.iter().any(|v| !v.is_finite() || v.abs() > blowup) {
                run.blew_up = true;
                return Ok(run);
            }
        }
        let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        h *= fac;
        if h < 1e-14 * t.max(1.0) {
            run.blew_up = true;
            return Ok(run);
        }
    }
    Ok(run)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_decay() {
        let nodes: Vec<f64> = (0..=10).map(|i| i as f64 * 0.5).collect();
        let y = scalar_rk4(|_, y| -y, 2.0, &nodes, 1e-10).unwrap();
        for (t, v) in nodes.iter().zip(&y) {
            assert!((v - 2.0 * (-t).exp()).abs() < 1e-10);
        }
    }

    #[test]
    fn tight_tolerance_near_equilibrium_terminates() {
        // sits at the equilibrium of ẏ = −2.76·y²/(1+y²) + v with tiny steps
        let v = |t: f64| 1.4 + 0.3 * (7.0 * t).sin();
        let nodes: Vec<f64> = (0..=200).map(|i| i as f64 * 0.025).collect();
        let y = scalar_rk4(|t, y| -2.76 * y * y / (1.0 + y * y) + v(t), 0.3, &nodes, 1e-11).unwrap();
        assert!(y.iter().all(|v| v.is_finite() && *v > 0.0));
    }

    #[test]
    fn dopri_logistic_blowup() {
        // ẋ = x², x(0)=1 blows up at t=1
        let run = dopri5(|_, y, d| d[0] = y[0] * y[0], &[1.0], 2.0, 1e-10, 1e10).unwrap();
        assert!(run.blew_up);
        assert!((run.times.last().unwrap() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn dopri_accuracy() {
        let run = dopri5(|_, y, d| {
            d[0] = y[1];
            d[1] = -y[0];
        }, &[1.0, 0.0], 6.0, 1e-10, 1e10)
        .unwrap();
        let y = run.states.last().unwrap();
        assert!((y[0] - 6f64.cos()).abs() < 1e-8);
    }
}
