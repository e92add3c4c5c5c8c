use super::model::{ks_operator, PdeKind};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::PI;

const SIGMA_TOL: f64 = 1e-10;
const SIGMA_MAX_ITER: usize = 20_000;

/// Smallest eigenvalue of x_zzzz + λx_zz = σx on (0,1) with x = x_z = 0 at
/// both ends, discretized on an n-node grid.
pub fn ks_sigma(lambda: f64, n: usize) -> Result<f64> {
    ks_sigma_on(n, lambda, 1.0)
}

/// Same on (0,L), via σ_L(λ) = σ₁(λL²)/L⁴.
///
/// Shifted inverse iteration: the Rayleigh quotient of the discrete operator
/// is bounded below by −λ²/4 (summation by parts and Cauchy–Schwarz), so the
/// shift −λ²/4 − 1 lies strictly below the spectrum and the iteration picks
/// the smallest eigenvalue.
pub fn ks_sigma_on(n: usize, lambda: f64, length: f64) -> Result<f64> {
    if n < 8 {
        return Err(Error::Config(format!("eigensolve needs n ≥ 8, got {n}")));
    }
    if !(lambda.is_finite() && length > 0.0 && length.is_finite()) {
        return Err(Error::Config("lambda and length must be finite, length > 0".into()));
    }
    let lam = lambda * length * length;
    let op = ks_operator(n, lam);
    let m = n - 2;
    let shift = -(lam.max(0.0).powi(2)) / 4.0 - 1.0;
    let lu = op.affine(1.0, -shift).factor()?;
    let h = 1.0 / (n - 1) as f64;
    // mixed parity start so either symmetry class can win
    let mut x: Vec<f64> = (1..=m)
        .map(|i| {
            let z = i as f64 * h;
            (z * (1.0 - z)).powi(2) * (1.0 + z)
        })
        .collect();
    let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
    let mut ax = vec![0.0; m];
    // rounding level of a Rayleigh quotient with this operator norm
    let floor = 1e-13 * (16.0 / h.powi(4) + 4.0 * lam.abs() / (h * h));
    let mut prev = f64::INFINITY;
    let mut prev_delta = f64::INFINITY;
    for _ in 0..SIGMA_MAX_ITER {
        let s = norm(&x);
        x.iter_mut().for_each(|v| *v /= s);
        op.matvec(&x, &mut ax);
        let rq: f64 = x.iter().zip(&ax).map(|(a, b)| a * b).sum();
        // geometric tail estimate; close eigenvalues make single steps tiny
        let delta = (rq - prev).abs();
        let rho = delta / prev_delta;
        let tail = if rho < 1.0 { delta * rho / (1.0 - rho) } else { f64::INFINITY };
        if delta.max(tail) <= SIGMA_TOL * rq.abs().max(shift.abs()) + floor {
            return Ok(rq / length.powi(4));
        }
        prev_delta = delta;
        prev = rq;
        lu.solve(&mut x);
    }
    Err(Error::Numerical(format!("inverse iteration did not converge for lambda = {lambda}")))
}

/// Closed-form critical parameter of a model family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    pub kind: String,
    /// Name of the quantity compared against `critical`.
    pub parameter: String,
    pub critical: f64,
    /// True when values below `critical` are the stable side.
    pub stable_below: bool,
}

impl Threshold {
    pub fn is_stable(&self, value: f64) -> bool {
        if self.stable_below {
            value < self.critical
        } else {
            value > self.critical
        }
    }
}

fn param(p: &BTreeMap<String, f64>, key: &str, default: Option<f64>) -> Result<f64> {
    match p.get(key).copied().or(default) {
        Some(v) if v.is_finite() => Ok(v),
        Some(v) => Err(Error::Config(format!("parameter {key} must be finite, got {v}"))),
        None => Err(Error::Config(format!("missing parameter {key}"))),
    }
}

/// Critical value for `kind` given the non-critical parameters in `params`.
///
/// | kind | parameter | stable side |
/// |---|---|---|
/// | burgers, heat-reaction (length) | b | b < (π/L)² |
/// | kuramoto-sivashinsky (length) | lambda | λ < 4π²/L² |
/// | ginzburg-landau (mu, length) | a | a < μπ²/(4L²) |
/// | coupled-linear-rd (c1, c2, d) | abs(a12·a21) | below c₁c₂(π/d)⁴ |
/// | coupled-nonlinear-rd | q1^2·(3q2/4)^4 | above 1 |
/// | infinite-linear | a+b | below 1 |
/// | infinite-cubic | max(a,b) | below 1 |
/// | iiss-small-gain (b) | a | a < 1 − 3π²/b |
/// | iiss-rd | l | L < 1 (ISS for distributed inputs) |
pub fn stability_threshold(kind: &str, params: &BTreeMap<String, f64>) -> Result<Threshold> {
    let t = |parameter: &str, critical: f64, stable_below: bool| Threshold {
        kind: kind.into(),
        parameter: parameter.into(),
        critical,
        stable_below,
    };
    let len = |p: &BTreeMap<String, f64>| {
        let l = param(p, "length", Some(1.0))?;
        if l > 0.0 {
            Ok(l)
        } else {
            Err(Error::Config("length must be > 0".into()))
        }
    };
    Ok(match kind {
        "burgers" | "heat-reaction" => t("b", (PI / len(params)?).powi(2), true),
        "kuramoto-sivashinsky" => t("lambda", 4.0 * PI * PI / len(params)?.powi(2), true),
        "ginzburg-landau" => {
            let mu = param(params, "mu", None)?;
            t("a", mu * PI * PI / (4.0 * len(params)?.powi(2)), true)
        }
        "coupled-linear-rd" => {
            let c1 = param(params, "c1", None)?;
            let c2 = param(params, "c2", None)?;
            let d = param(params, "d", None)?;
            t("abs(a12*a21)", c1 * c2 * (PI / d).powi(4), true)
        }
        "coupled-nonlinear-rd" => t("q1^2*(3q2/4)^4", 1.0, false),
        "infinite-linear" => t("a+b", 1.0, true),
        "infinite-cubic" => t("max(a,b)", 1.0, true),
        "iiss-small-gain" => {
            let b = param(params, "b", None)?;
            if !(b > 0.0) {
                return Err(Error::Config("b must be > 0".into()));
            }
            t("a", 1.0 - 3.0 * PI * PI / b, true)
        }
        "iiss-rd" => t("l", 1.0, true),
        other => return Err(Error::Config(format!("no threshold known for kind {other}"))),
    })
}

/// Where a concrete model sits relative to its threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Regime {
    pub threshold: Threshold,
    pub value: f64,
    pub predicted_stable: bool,
}

pub fn regime(kind: &PdeKind, length: f64) -> Result<Regime> {
    let mut p = BTreeMap::new();
    p.insert("length".to_string(), length);
    let value = match *kind {
        PdeKind::Burgers { b, .. } | PdeKind::HeatReaction { b, .. } => b,
        PdeKind::KuramotoSivashinsky { lambda, .. } => lambda,
        PdeKind::GinzburgLandau { mu, a } => {
            p.insert("mu".into(), mu);
            a
        }
        PdeKind::CoupledLinearRd { c1, c2, a12, a21, d } => {
            p.insert("c1".into(), c1);
            p.insert("c2".into(), c2);
            p.insert("d".into(), d);
            (a12 * a21).abs()
        }
        PdeKind::CoupledNonlinearRd { q1, q2 } => q1 * q1 * (0.75 * q2).powi(4),
        PdeKind::InfiniteLinear { a, b, .. } => a + b,
        PdeKind::InfiniteCubic { a, b, .. } => a.max(b),
        PdeKind::IissRd { l, .. } => l,
        _ => return Err(Error::Config(format!("no threshold known for kind {}", kind.name()))),
    };
    let threshold = stability_threshold(kind.name(), &p)?;
    Ok(Regime { predicted_stable: threshold.is_stable(value), threshold, value })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn dense_sigma(n: usize, lambda: f64) -> f64 {
        let op = ks_operator(n, lambda);
        let m = n - 2;
        let d = DMatrix::from_fn(m, m, |i, j| op.get(i, j));
        d.symmetric_eigen().eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn matches_dense_eigensolver() {
        for &l in &[-10.0, 0.0, 2.0 * PI * PI, 4.0 * PI * PI, 6.0 * PI * PI, 100.0] {
            let s = ks_sigma(l, 120).unwrap();
            let d = dense_sigma(120, l);
            assert!((s - d).abs() <= 1e-6 * d.abs().max(1.0), "{l}: {s} vs {d}");
        }
    }

    #[test]
    fn clamped_plate_and_critical_value() {
        let s0 = ks_sigma(0.0, 512).unwrap();
        let beta = 4.730_040_744_862_704f64;
        assert!((s0 / beta.powi(4) - 1.0).abs() < 5e-3, "{s0}");
        let sc = ks_sigma(4.0 * PI * PI, 512).unwrap();
        assert!(sc.abs() < 5e-3 * s0, "{sc}");
        let grid = [0.0, 2.0 * PI * PI, 4.0 * PI * PI, 6.0 * PI * PI];
        let vals: Vec<f64> = grid.iter().map(|&l| ks_sigma(l, 256).unwrap()).collect();
        assert!(vals.windows(2).all(|w| w[1] < w[0]), "{vals:?}");
    }

    #[test]
    fn length_scaling() {
        let a = ks_sigma_on(200, 10.0, 2.0).unwrap();
        let b = ks_sigma(40.0, 200).unwrap() / 16.0;
        assert!((a - b).abs() < 1e-9 * b.abs());
    }

    #[test]
    fn thresholds() {
        let none = BTreeMap::new();
        assert!((stability_threshold("burgers", &none).unwrap().critical - PI * PI).abs() < 1e-12);
        assert!((stability_threshold("kuramoto-sivashinsky", &none).unwrap().critical - 39.478_417_604_357_43).abs() < 1e-9);
        let il = stability_threshold("infinite-linear", &none).unwrap();
        assert!(il.critical == 1.0 && il.is_stable(0.8) && !il.is_stable(1.1));
        assert!(stability_threshold("ginzburg-landau", &none).is_err());
        assert!(stability_threshold("nonsense", &none).is_err());
        let r = regime(&PdeKind::GinzburgLandau { mu: 1.0, a: 3.0 }, 1.0).unwrap();
        assert!(!r.predicted_stable);
        let r = regime(&PdeKind::CoupledNonlinearRd { q1: 1.0, q2: 4.0 / 3.0 * 2f64.powf(0.25) }, PI).unwrap();
        assert!(r.predicted_stable && (r.value - 2.0).abs() < 1e-12);
    }
}
