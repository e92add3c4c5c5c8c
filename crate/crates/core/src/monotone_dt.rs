//! Discrete-time monotone systems x(k+1) ≤ A(x(k)) + u(k) on ℝⁿ₊.

use crate::compfun::KFun;
use crate::error::{Error, Result};
use crate::gainops::{spectral_radius, Form, GainOperator};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;

/// Hard cap on the truncation depth of [`DtLyapunov`].
pub const MAX_DEPTH: usize = 64;

/// Sup norm on ℝⁿ₊.
pub fn sup_norm(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn check_cone(x: &[f64], n: usize, what: &str) -> Result<()> {
    if x.len() != n {
        return Err(Error::Shape { expected: n, got: x.len() });
    }
    match x.iter().position(|v| !(*v >= 0.0 && v.is_finite())) {
        Some(i) => Err(Error::Domain(format!("{what} component {i} is {}", x[i]))),
        None => Ok(()),
    }
}

/// States x(0..=K) and inputs u(0..K).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DtTrajectory {
    pub x: Vec<Vec<f64>>,
    pub u: Vec<Vec<f64>>,
    /// True when produced by exact iteration of the equality system.
    pub equality: bool,
}

impl DtTrajectory {
    /// Wrap externally produced samples (an inequality solution, typically).
    pub fn from_samples(x: Vec<Vec<f64>>, u: Vec<Vec<f64>>) -> Result<DtTrajectory> {
        let n = x.first().map_or(0, |v| v.len());
        if x.len() != u.len() + 1 {
            return Err(Error::Shape { expected: u.len() + 1, got: x.len() });
        }
        for v in &x {
            check_cone(v, n, "state")?;
        }
        for v in &u {
            check_cone(v, n, "input")?;
        }
        Ok(DtTrajectory { x, u, equality: false })
    }

    pub fn steps(&self) -> usize {
        self.u.len()
    }

    /// Largest violation of x(k+1) ≤ A(x(k)) + u(k); ≤ 0 means the samples
    /// solve the inequality system.
    pub fn inequality_defect(&self, op: &GainOperator) -> Result<f64> {
        let mut worst = f64::NEG_INFINITY;
        for k in 0..self.steps() {
            let ax = op.apply(&self.x[k])?;
            for i in 0..ax.len() {
                worst = worst.max(self.x[k + 1][i] - ax[i] - self.u[k][i]);
            }
        }
        Ok(worst)
    }

    /// CSV with columns k, x_1..x_n, u_1..u_n; the last row has empty inputs.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let n = self.x.first().map_or(0, |v| v.len());
        let mut wr = csv::Writer::from_writer(w);
        let mut head = vec!["k".to_string()];
        head.extend((1..=n).map(|i| format!("x_{i}")));
        head.extend((1..=n).map(|i| format!("u_{i}")));
        wr.write_record(&head)?;
        for (k, x) in self.x.iter().enumerate() {
            let mut rec = vec![k.to_string()];
            rec.extend(x.iter().map(|v| v.to_string()));
            match self.u.get(k) {
                Some(u) => rec.extend(u.iter().map(|v| v.to_string())),
                None => rec.extend(std::iter::repeat_n(String::new(), n)),
            }
            wr.write_record(&rec)?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Iterate x(k+1) = A(x(k)) + u(k) for k < K. `u` holds K inputs, or a
/// single input that is held constant.
pub fn simulate(op: &GainOperator, x0: &[f64], u: &[Vec<f64>], k: usize) -> Result<DtTrajectory> {
    let n = op.n();
    check_cone(x0, n, "x0")?;
    if !(u.len() == k || u.len() == 1) {
        return Err(Error::Shape { expected: k, got: u.len() });
    }
    for v in u {
        check_cone(v, n, "input")?;
    }
    let inputs: Vec<Vec<f64>> = (0..k).map(|i| u[if u.len() == 1 { 0 } else { i }].clone()).collect();
    let mut x = Vec::with_capacity(k + 1);
    x.push(x0.to_vec());
    for uk in &inputs {
        let next: Vec<f64> = op.apply_unchecked(x.last().unwrap()).iter().zip(uk).map(|(a, b)| a + b).collect();
        x.push(next);
    }
    Ok(DtTrajectory { x, u: inputs, equality: true })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EissAudit {
    pub pass: bool,
    /// min over k of bound − ‖x(k)‖.
    pub worst_margin: f64,
    pub worst_k: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub first_violation: Option<usize>,
}

/// Check ‖x(k)‖ ≤ M‖x(0)‖aᵏ + γ(‖u‖∞) at every k. `gamma = None` is the
/// zero gain.
pub fn eiss_fit(traj: &DtTrajectory, m: f64, a: f64, gamma: Option<&KFun>) -> Result<EissAudit> {
    if !(m >= 1.0 && m.is_finite()) {
        return Err(Error::Domain(format!("M = {m} must be ≥ 1")));
    }
    if !(a > 0.0 && a < 1.0) {
        return Err(Error::Domain(format!("a = {a} must lie in (0, 1)")));
    }
    let unorm = traj.u.iter().map(|v| sup_norm(v)).fold(0.0, f64::max);
    let g = match gamma {
        Some(g) => g.eval(unorm)?,
        None => 0.0,
    };
    let x0 = sup_norm(&traj.x[0]);
    let mut audit = EissAudit { pass: true, worst_margin: f64::INFINITY, worst_k: 0, first_violation: None };
    for (k, x) in traj.x.iter().enumerate() {
        let margin = m * x0 * a.powi(k as i32) + g - sup_norm(x);
        if margin < audit.worst_margin {
            audit.worst_margin = margin;
            audit.worst_k = k;
        }
        if margin < 0.0 && audit.first_violation.is_none() {
            audit.first_violation = Some(k);
            audit.pass = false;
        }
    }
    Ok(audit)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MbiVerdict {
    PassSampled,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MbiReport {
    pub verdict: MbiVerdict,
    pub trials: usize,
    pub seed: u64,
    /// (v, w) with (id−A)(v) ≤ w and ‖v‖ > ξ(‖w‖).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<(Vec<f64>, Vec<f64>)>,
    pub caveat: String,
}

fn mbi_trial(op: &GainOperator, xi: &KFun, n: usize, seed: u64, trial: usize) -> Option<(Vec<f64>, Vec<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    let scale = 10f64.powf(rng.random_range(-3.0..3.0));
    let v: Vec<f64> = if trial % 4 == 0 {
        vec![scale; n]
    } else {
        (0..n).map(|_| scale * rng.random::<f64>()).collect()
    };
    let rho_scale = scale * 10f64.powf(rng.random_range(-9.0..0.0));
    let av = op.apply_unchecked(&v);
    let w: Vec<f64> = (0..n).map(|i| (v[i] - av[i] + rho_scale * rng.random::<f64>()).max(0.0)).collect();
    let lhs = sup_norm(&v);
    let rhs = xi.eval(sup_norm(&w)).unwrap_or(f64::INFINITY);
    (lhs > rhs * (1.0 + 1e-12)).then_some((v, w))
}

/// Falsification probe of monotone bounded invertibility: random v ≥ 0 and
/// ρ ≥ 0 give w = max((id−A)(v) + ρ, 0), and ‖v‖ ≤ ξ(‖w‖) is checked.
pub fn mbi_probe(op: &GainOperator, trials: usize, xi: &KFun, seed: u64) -> Result<MbiReport> {
    if !xi.class().is_k() {
        return Err(Error::Class("ξ must be class K∞".into()));
    }
    let n = op.n();
    let hits: Vec<Option<(Vec<f64>, Vec<f64>)>> =
        (0..trials).into_par_iter().map(|t| mbi_trial(op, xi, n, seed, t)).collect();
    let witness = hits.into_iter().flatten().next();
    Ok(MbiReport {
        verdict: if witness.is_some() { MbiVerdict::Fail } else { MbiVerdict::PassSampled },
        trials,
        seed,
        witness,
        caveat: format!("falsification test over {trials} random trials; a pass is not a proof"),
    })
}

/// Outcome of the sampled dissipation check V(A(x)+u) ≤ η⁻¹V(x) + ψ‖u‖.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DtCertificate {
    pub samples: usize,
    pub seed: u64,
    pub worst_margin: f64,
    pub pass: bool,
}

/// V(x) = max_{n<N} ηⁿ‖Aⁿ(x)‖∞ for a homogeneous subadditive A.
#[derive(Debug, Clone)]
pub struct DtLyapunov {
    op: GainOperator,
    pub eta: f64,
    pub depth: usize,
    pub psi: f64,
    pub certificate: DtCertificate,
}

/// Build V for linear gains with η·r(A) < 1 and certify it on 1000 random
/// (x, u) pairs.
pub fn build_lyapunov(op: &GainOperator, eta: f64) -> Result<DtLyapunov> {
    if op.linear_weights().is_none() || op.form() == Form::Mixed {
        return Err(Error::Unsupported("the Lyapunov construction needs linear max- or sum-form gains".into()));
    }
    if !(eta > 1.0 && eta.is_finite()) {
        return Err(Error::Domain(format!("η = {eta} must exceed 1")));
    }
    let r = spectral_radius(op)?.radius;
    if eta * r >= 1.0 {
        return Err(Error::Infeasible(format!("η·r = {} ≥ 1", eta * r)));
    }
    let n = op.n();
    let mut x = vec![1.0; n];
    let mut depth = None;
    for k in 1..=MAX_DEPTH {
        x = op.apply_unchecked(&x);
        if eta.powi(k as i32) * sup_norm(&x) <= 1.0 {
            depth = Some(k);
            break;
        }
    }
    let depth = depth.ok_or_else(|| {
        Error::Numerical(format!("ηⁿ‖Aⁿ𝟙‖ has not dropped to 1 within {MAX_DEPTH} steps"))
    })?;
    let c = sup_norm(&op.apply_unchecked(&vec![1.0; n]));
    let psi = (0..depth).map(|k| (eta * c).powi(k as i32)).fold(0.0, f64::max);
    let mut v = DtLyapunov {
        op: op.clone(),
        eta,
        depth,
        psi,
        certificate: DtCertificate { samples: 0, seed: 0, worst_margin: 0.0, pass: true },
    };
    v.certificate = v.certify(1000, 0);
    if !v.certificate.pass {
        return Err(Error::Numerical(format!(
            "dissipation failed on samples, worst margin {}",
            v.certificate.worst_margin
        )));
    }
    Ok(v)
}

impl DtLyapunov {
    pub fn operator(&self) -> &GainOperator {
        &self.op
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        check_cone(x, self.op.n(), "state")?;
        Ok(self.value(x))
    }

    fn value(&self, x: &[f64]) -> f64 {
        let mut y = x.to_vec();
        let mut best = sup_norm(&y);
        let mut w = 1.0;
        for _ in 1..self.depth {
            y = self.op.apply_unchecked(&y);
            w *= self.eta;
            best = best.max(w * sup_norm(&y));
        }
        best
    }

    /// Sampled check of V(A(x)+u) ≤ η⁻¹V(x) + ψ‖u‖∞ with a relative slack
    /// of 1e-12 for rounding.
    pub fn certify(&self, samples: usize, seed: u64) -> DtCertificate {
        let n = self.op.n();
        let worst = (0..samples)
            .into_par_iter()
            .map(|t| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(t as u64);
                let sx = 10f64.powf(rng.random_range(-3.0..3.0));
                let su = 10f64.powf(rng.random_range(-3.0..3.0));
                let x: Vec<f64> = (0..n).map(|_| sx * rng.random::<f64>()).collect();
                let u: Vec<f64> = (0..n).map(|_| su * rng.random::<f64>()).collect();
                let next: Vec<f64> = self.op.apply_unchecked(&x).iter().zip(&u).map(|(a, b)| a + b).collect();
                let rhs = self.value(&x) / self.eta + self.psi * sup_norm(&u);
                rhs * (1.0 + 1e-12) - self.value(&next)
            })
            .reduce(|| f64::INFINITY, f64::min);
        DtCertificate { samples, seed, worst_margin: worst, pass: worst >= 0.0 }
    }

    /// eISS constants implied by the dissipation inequality:
    /// M = ψ, a = η⁻¹, γ(r) = ψ·η/(η−1)·r.
    pub fn eiss_constants(&self) -> Result<(f64, f64, KFun)> {
        let g = KFun::linear(self.psi * self.eta / (self.eta - 1.0))?;
        Ok((self.psi, 1.0 / self.eta, g))
    }
}
