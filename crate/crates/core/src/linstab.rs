//! Linear systems ẋ = Ax + Bu with dense or diagonal generators: decay
//! constants, quadratic and sup-type Lyapunov functions, eISS gains.

use crate::error::{Error, Result};
use crate::trajectory::Trajectory;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Subtracted from the spectral gap to get a usable decay rate.
pub const RATE_GUARD: f64 = 1e-6;
/// Log-spaced sample count for M.
const M_GRID: usize = 400;
/// Uniform samples of s ↦ e^{γs}‖T(s)x‖ before local refinement.
const SUP_GRID: usize = 512;

#[derive(Debug, Clone, PartialEq)]
pub enum LinModel {
    Dense { a: DMatrix<f64>, b: DMatrix<f64> },
    /// Generator diag(λ₁, …, λ_K) with a scalar input entering through `b`.
    Diagonal { lambdas: Vec<f64>, b: Vec<f64> },
}

/// Model description as read from a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LinSpec {
    Dense { a: Vec<Vec<f64>>, b: Vec<Vec<f64>> },
    Diagonal { lambda: Vec<f64>, b: Vec<f64> },
}

impl LinSpec {
    pub fn build(&self) -> Result<LinModel> {
        match self {
            LinSpec::Dense { a, b } => LinModel::dense(rows(a)?, rows(b)?),
            LinSpec::Diagonal { lambda, b } => LinModel::diagonal(lambda.clone(), b.clone()),
        }
    }
}

fn rows(r: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let m = r.first().map_or(0, |x| x.len());
    if let Some(bad) = r.iter().find(|x| x.len() != m) {
        return Err(Error::Shape { expected: m, got: bad.len() });
    }
    Ok(DMatrix::from_row_iterator(r.len(), m, r.iter().flatten().copied()))
}

fn op_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().max()
}

/// e^{At} by scaling and squaring on top of nalgebra's Padé exponential,
/// which loses accuracy (and can return NaN) for very large ‖At‖.
fn expm(a: &DMatrix<f64>, t: f64) -> DMatrix<f64> {
    let size = a.abs().row_sum().max() * t.abs();
    let s = if size > 1.0 { size.log2().ceil() as i32 } else { 0 };
    let mut e = (a * (t / 2f64.powi(s))).exp();
    for _ in 0..s {
        e = &e * &e;
    }
    e
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

impl LinModel {
    pub fn dense(a: DMatrix<f64>, b: DMatrix<f64>) -> Result<LinModel> {
        if !a.is_square() {
            return Err(Error::Shape { expected: a.nrows(), got: a.ncols() });
        }
        if b.nrows() != a.nrows() {
            return Err(Error::Shape { expected: a.nrows(), got: b.nrows() });
        }
        if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Model("matrix entries must be finite".into()));
        }
        Ok(LinModel::Dense { a, b })
    }

    pub fn diagonal(lambdas: Vec<f64>, b: Vec<f64>) -> Result<LinModel> {
        if b.len() != lambdas.len() {
            return Err(Error::Shape { expected: lambdas.len(), got: b.len() });
        }
        if let Some(l) = lambdas.iter().find(|l| !(**l < 0.0 && l.is_finite())) {
            return Err(Error::Model(format!("diagonal spectrum must be strictly negative, got {l}")));
        }
        if b.iter().any(|v| !v.is_finite()) {
            return Err(Error::Model("input entries must be finite".into()));
        }
        Ok(LinModel::Diagonal { lambdas, b })
    }

    pub fn dim(&self) -> usize {
        match self {
            LinModel::Dense { a, .. } => a.nrows(),
            LinModel::Diagonal { lambdas, .. } => lambdas.len(),
        }
    }

    pub fn inputs(&self) -> usize {
        match self {
            LinModel::Dense { b, .. } => b.ncols(),
            LinModel::Diagonal { .. } => 1,
        }
    }

    /// ‖B‖ (Euclidean operator norm).
    pub fn b_norm(&self) -> f64 {
        match self {
            LinModel::Dense { b, .. } => op_norm(b),
            LinModel::Diagonal { b, .. } => norm(b),
        }
    }

    pub fn apply_b(&self, u: &[f64]) -> Result<Vec<f64>> {
        if u.len() != self.inputs() {
            return Err(Error::Shape { expected: self.inputs(), got: u.len() });
        }
        Ok(match self {
            LinModel::Dense { b, .. } => (b * DVector::from_column_slice(u)).as_slice().to_vec(),
            LinModel::Diagonal { b, .. } => b.iter().map(|v| v * u[0]).collect(),
        })
    }

    /// T(t)x.
    pub fn propagate(&self, x: &[f64], t: f64) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::Shape { expected: self.dim(), got: x.len() });
        }
        Ok(match self {
            LinModel::Dense { a, .. } => (expm(a, t) * DVector::from_column_slice(x)).as_slice().to_vec(),
            LinModel::Diagonal { lambdas, .. } => x.iter().zip(lambdas).map(|(v, l)| v * (l * t).exp()).collect(),
        })
    }

    /// ‖T(t)‖.
    pub fn semigroup_norm(&self, t: f64) -> f64 {
        match self {
            LinModel::Dense { a, .. } => op_norm(&expm(a, t)),
            LinModel::Diagonal { lambdas, .. } => lambdas.iter().map(|l| (l * t).exp()).fold(0.0, f64::max),
        }
    }

    /// Largest real part of the spectrum.
    pub fn abscissa(&self) -> f64 {
        match self {
            LinModel::Dense { a, .. } => a.complex_eigenvalues().iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max),
            LinModel::Diagonal { lambdas, .. } => lambdas.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }

    /// Exact sampling of ẋ = Ax + Bu for constant u on [0, t_end].
    pub fn simulate(&self, x0: &[f64], u: &[f64], t_end: f64, dt: f64) -> Result<Trajectory> {
        let n = self.dim();
        if x0.len() != n {
            return Err(Error::Shape { expected: n, got: x0.len() });
        }
        if !(dt > 0.0 && t_end > 0.0) {
            return Err(Error::Domain("t_end and dt must be positive".into()));
        }
        let bu = self.apply_b(u)?;
        let steps = (t_end / dt).round() as usize;
        let (step, forced): (Box<dyn Fn(&[f64]) -> Vec<f64>>, Vec<f64>) = match self {
            LinModel::Dense { a, .. } => {
                // exp([[A, Bu], [0, 0]]·dt) carries both e^{A dt} and ∫e^{As}ds·Bu
                let mut aug = DMatrix::zeros(n + 1, n + 1);
                aug.view_mut((0, 0), (n, n)).copy_from(a);
                for i in 0..n {
                    aug[(i, n)] = bu[i];
                }
                let e = expm(&aug, dt);
                let phi = e.view((0, 0), (n, n)).into_owned();
                let forced = (0..n).map(|i| e[(i, n)]).collect();
                (Box::new(move |x: &[f64]| (&phi * DVector::from_column_slice(x)).as_slice().to_vec()), forced)
            }
            LinModel::Diagonal { lambdas, .. } => {
                let decay: Vec<f64> = lambdas.iter().map(|l| (l * dt).exp()).collect();
                let forced = lambdas.iter().zip(&bu).map(|(l, b)| b * ((l * dt).exp() - 1.0) / l).collect();
                (Box::new(move |x: &[f64]| x.iter().zip(&decay).map(|(v, d)| v * d).collect()), forced)
            }
        };
        let mut states = Vec::with_capacity(steps + 1);
        states.push(x0.to_vec());
        for _ in 0..steps {
            let mut next = step(states.last().unwrap());
            next.iter_mut().zip(&forced).for_each(|(v, f)| *v += f);
            states.push(next);
        }
        let times = (0..=steps).map(|k| k as f64 * dt).collect();
        Trajectory::new(times, states, vec![u.to_vec(); steps + 1], None)
    }
}

/// ‖T(t)‖ ≤ M·e^{−λt}.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayPair {
    pub m: f64,
    pub lambda: f64,
    pub abscissa: f64,
    /// True when M comes from time sampling rather than a closed form.
    pub sampled: bool,
}

fn golden_max<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, iters: usize) -> (f64, f64) {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..iters {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    if fc > fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// λ = |abscissa| − 1e-6 and M from log-spaced sampling of ‖T(t)‖e^{λt},
/// refined once around the largest sample. Diagonal generators give M = 1.
pub fn decay_pair(model: &LinModel) -> Result<DecayPair> {
    let abscissa = model.abscissa();
    if !(abscissa < 0.0) {
        return Err(Error::Infeasible(format!("not exponentially stable: spectral abscissa {abscissa}")));
    }
    let lambda = -abscissa - RATE_GUARD;
    if !(lambda > 0.0) {
        return Err(Error::Infeasible(format!("spectral gap {} is below the guard", -abscissa)));
    }
    if let LinModel::Diagonal { .. } = model {
        return Ok(DecayPair { m: 1.0, lambda, abscissa, sampled: false });
    }
    let gap = -abscissa - lambda;
    let t_max = 40.0 * model.dim() as f64 / gap.min(-abscissa);
    let shifted = match model {
        LinModel::Dense { a, .. } => a + DMatrix::identity(a.nrows(), a.nrows()) * lambda,
        LinModel::Diagonal { .. } => unreachable!(),
    };
    // ‖T(t)‖e^{λt} = ‖e^{(A+λI)t}‖ avoids underflow of e^{At}
    let f = |lt: f64| op_norm(&expm(&shifted, lt.exp()));
    let grid = crate::compfun::geom_grid(1e-6, t_max, M_GRID);
    let lg: Vec<f64> = grid.iter().map(|t| t.ln()).collect();
    let vals: Vec<f64> = lg.iter().map(|&l| f(l)).collect();
    if vals.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite semigroup norm while sampling M".into()));
    }
    let (k, &best) = vals.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap();
    let lo = lg[k.saturating_sub(1)];
    let hi = lg[(k + 1).min(M_GRID - 1)];
    let (_, refined) = golden_max(f, lo, hi, 80);
    Ok(DecayPair { m: best.max(refined).max(1.0), lambda, abscissa, sampled: true })
}

/// V(x) = xᵀPx with AᵀP + PA = −I, the integral ∫‖T(t)x‖²dt.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadLyap {
    pub p: DMatrix<f64>,
    /// ‖AᵀP + PA + I‖ (Frobenius).
    pub residual: f64,
}

impl QuadLyap {
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.p.nrows() {
            return Err(Error::Shape { expected: self.p.nrows(), got: x.len() });
        }
        let v = DVector::from_column_slice(x);
        Ok(v.dot(&(&self.p * &v)))
    }
}

fn lyap_residual(a: &DMatrix<f64>, p: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    a.transpose() * p + p * a + DMatrix::identity(n, n)
}

pub fn quad_lyap(model: &LinModel) -> Result<QuadLyap> {
    let a = match model {
        LinModel::Diagonal { lambdas, .. } => {
            let p = DMatrix::from_diagonal(&DVector::from_iterator(lambdas.len(), lambdas.iter().map(|l| 0.5 / -l)));
            return Ok(QuadLyap { p, residual: 0.0 });
        }
        LinModel::Dense { a, .. } => a,
    };
    if !(model.abscissa() < 0.0) {
        return Err(Error::Infeasible("not exponentially stable".into()));
    }
    let n = a.nrows();
    let id = DMatrix::<f64>::identity(n, n);
    let at = a.transpose();
    // column-major vec: vec(AᵀP) = (I⊗Aᵀ)vec(P), vec(PA) = (Aᵀ⊗I)vec(P)
    let k = id.kronecker(&at) + at.kronecker(&id);
    let lu = k.lu();
    let rhs = DVector::from_element(n * n, 0.0) - DVector::from_column_slice(id.as_slice());
    let sol = lu.solve(&rhs).ok_or_else(|| Error::Infeasible("Lyapunov equation is singular".into()))?;
    let mut p = DMatrix::from_column_slice(n, n, sol.as_slice());
    for _ in 0..2 {
        let r = lyap_residual(a, &p);
        if let Some(d) = lu.solve(&DVector::from_column_slice(r.as_slice())) {
            p -= DMatrix::from_column_slice(n, n, d.as_slice());
        }
    }
    p = (&p + p.transpose()) * 0.5;
    let residual = lyap_residual(a, &p).norm();
    if !residual.is_finite() {
        return Err(Error::Infeasible("Lyapunov solve failed".into()));
    }
    Ok(QuadLyap { p, residual })
}

/// V^γ(x) = max_{s≥0} e^{γs}‖T(s)x‖, a norm with ‖x‖ ≤ V^γ(x) ≤ M‖x‖.
#[derive(Debug, Clone)]
pub struct SupLyap {
    model: LinModel,
    pub gamma: f64,
    pub decay: DecayPair,
    /// Beyond this horizon e^{γs}‖T(s)x‖ ≤ ‖x‖/2.
    pub s_max: f64,
    step: Option<DMatrix<f64>>,
}

pub fn sup_lyap(model: &LinModel, gamma: f64) -> Result<SupLyap> {
    let decay = decay_pair(model)?;
    if !(gamma > 0.0) {
        return Err(Error::Domain(format!("γ = {gamma} must be positive")));
    }
    if gamma >= decay.lambda {
        return Err(Error::Infeasible(format!("γ = {gamma} is not below the decay rate {}", decay.lambda)));
    }
    let s_max = (2.0 * decay.m).ln() / (decay.lambda - gamma);
    let ds = s_max / (SUP_GRID - 1) as f64;
    let step = match model {
        LinModel::Dense { a, .. } => Some(expm(a, ds)),
        LinModel::Diagonal { .. } => None,
    };
    Ok(SupLyap { model: model.clone(), gamma, decay, s_max, step })
}

impl SupLyap {
    fn profile(&self, x: &[f64], s: f64) -> f64 {
        (self.gamma * s).exp() * norm(&self.model.propagate(x, s).expect("shape checked"))
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        let n = self.model.dim();
        if x.len() != n {
            return Err(Error::Shape { expected: n, got: x.len() });
        }
        let ds = self.s_max / (SUP_GRID - 1) as f64;
        let mut vals = Vec::with_capacity(SUP_GRID);
        match (&self.model, &self.step) {
            (LinModel::Dense { .. }, Some(e)) => {
                let mut y = DVector::from_column_slice(x);
                for k in 0..SUP_GRID {
                    vals.push((self.gamma * k as f64 * ds).exp() * y.norm());
                    y = e * y;
                }
            }
            _ => {
                for k in 0..SUP_GRID {
                    vals.push(self.profile(x, k as f64 * ds));
                }
            }
        }
        let mut best = vals[0];
        // refine every interior local maximum of the samples
        for k in 1..SUP_GRID - 1 {
            if vals[k] >= vals[k - 1] && vals[k] >= vals[k + 1] && vals[k] > 0.0 {
                let (_, v) = golden_max(|s| self.profile(x, s), (k - 1) as f64 * ds, (k + 1) as f64 * ds, 60);
                best = best.max(v).max(vals[k]);
            }
        }
        Ok(best.max(vals[SUP_GRID - 1]))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupDissipation {
    pub samples: usize,
    /// max over samples of (rate − bound)/(γV + V^γ(Bu)).
    pub worst_rel_excess: f64,
    pub pass: bool,
}

/// Forward-difference check of D⁺V^γ ≤ −γV^γ(x) + V^γ(Bu) along a sampled
/// trajectory with constant input `u`, to relative tolerance `rel_tol`.
pub fn sup_lyap_dissipation(v: &SupLyap, traj: &Trajectory, u: &[f64], rel_tol: f64) -> Result<SupDissipation> {
    let dt = traj.uniform_dt().ok_or_else(|| Error::Domain("needs uniformly sampled times".into()))?;
    let vbu = v.eval(&v.model.apply_b(u)?)?;
    let vals = traj.states.iter().map(|x| v.eval(x)).collect::<Result<Vec<_>>>()?;
    let mut worst = f64::NEG_INFINITY;
    for k in 0..vals.len().saturating_sub(1) {
        let rate = (vals[k + 1] - vals[k]) / dt;
        let bound = -v.gamma * vals[k] + vbu;
        let scale = v.gamma * vals[k] + vbu;
        if scale > 0.0 {
            worst = worst.max((rate - bound) / scale);
        }
    }
    Ok(SupDissipation { samples: vals.len(), worst_rel_excess: worst, pass: worst <= rel_tol })
}

/// ‖x(t)‖ ≤ M e^{−λt}‖x₀‖ + G‖u‖∞ with G = M‖B‖/λ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EissGain {
    pub m: f64,
    pub lambda: f64,
    pub g: f64,
}

pub fn eiss_gain(model: &LinModel) -> Result<EissGain> {
    let d = decay_pair(model)?;
    Ok(EissGain { m: d.m, lambda: d.lambda, g: d.m * model.b_norm() / d.lambda })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EissCheck {
    pub samples: usize,
    pub worst_margin: f64,
    pub pass: bool,
}

/// Simulate with u ≡ 𝟙 from `x0` and check the eISS bound at every sample
/// (Euclidean norms, so ‖u‖ = √m).
pub fn eiss_validate(model: &LinModel, gain: &EissGain, x0: &[f64], t_end: f64, dt: f64) -> Result<EissCheck> {
    let u = vec![1.0; model.inputs()];
    let traj = model.simulate(x0, &u, t_end, dt)?;
    let (nx0, nu) = (norm(x0), norm(&u));
    let mut worst = f64::INFINITY;
    for (t, x) in traj.times.iter().zip(&traj.states) {
        let bound = gain.m * (-gain.lambda * t).exp() * nx0 + gain.g * nu;
        worst = worst.min(bound - norm(x));
    }
    Ok(EissCheck { samples: traj.len(), worst_margin: worst, pass: worst >= -1e-12 })
}
