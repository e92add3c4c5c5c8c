use super::{geom_grid, KFun};
use crate::error::{check_nonneg, Error, Result};
use crate::ode::scalar_rk4;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Relative accuracy of the scalar flow solves behind envelopes.
const FLOW_TOL: f64 = 1e-11;

/// Tabulated KL envelope; `values[i][j] = β(r_grid[i], t_grid[j])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KlTable {
    pub r_grid: Vec<f64>,
    pub t_grid: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

/// A class KL function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KLFun {
    /// β(r,t) = q(r)·e^{−c t}
    Closed { q: KFun, c: f64 },
    Tabulated(KlTable),
}

impl KLFun {
    pub fn closed(q: KFun, c: f64) -> Result<KLFun> {
        if !q.class().is_k() {
            return Err(Error::Class("q must be class K".into()));
        }
        if !(c.is_finite() && c > 0.0) {
            return Err(Error::Config(format!("decay rate must be > 0, got {c}")));
        }
        Ok(KLFun::Closed { q, c })
    }

    pub fn eval(&self, r: f64, t: f64) -> Result<f64> {
        check_nonneg(r, "level")?;
        check_nonneg(t, "time")?;
        match self {
            KLFun::Closed { q, c } => Ok(q.eval(r)? * (-c * t).exp()),
            KLFun::Tabulated(tab) => tab.eval(r, t),
        }
    }
}

fn bracket(grid: &[f64], x: f64) -> (usize, f64) {
    // index i with grid[i] ≤ x ≤ grid[i+1] and the weight of grid[i+1]
    let i = grid.partition_point(|&g| g <= x).saturating_sub(1).min(grid.len() - 2);
    let w = ((x - grid[i]) / (grid[i + 1] - grid[i])).clamp(0.0, 1.0);
    (i, w)
}

impl KlTable {
    fn check(&self) -> Result<()> {
        let nr = self.r_grid.len();
        if nr == 0 || self.t_grid.is_empty() || self.values.len() != nr {
            return Err(Error::Config("empty or ragged KL table".into()));
        }
        for (i, row) in self.values.iter().enumerate() {
            if row.len() != self.t_grid.len() {
                return Err(Error::Config("ragged KL table".into()));
            }
            if row.windows(2).any(|w| !(w[1] < w[0]) && w[0] > 0.0) {
                return Err(Error::Class(format!("β({}, ·) not decreasing", self.r_grid[i])));
            }
        }
        for j in 0..self.t_grid.len() {
            if self.values.windows(2).any(|w| !(w[0][j] < w[1][j]) && w[1][j] > 0.0) {
                return Err(Error::Class(format!("β(·, {}) not increasing", self.t_grid[j])));
            }
        }
        Ok(())
    }

    /// Bilinear interpolation, padded with β(0,t)=0 and β(r,0)=r; times
    /// beyond the grid reuse the last column, which over-approximates.
    pub fn eval(&self, r: f64, t: f64) -> Result<f64> {
        let rmax = *self.r_grid.last().unwrap();
        if r > rmax {
            return Err(Error::Range(format!("level {r} above table maximum {rmax}")));
        }
        let mut rg = Vec::with_capacity(self.r_grid.len() + 1);
        let pad_r = self.r_grid[0] > 0.0;
        if pad_r {
            rg.push(0.0);
        }
        rg.extend_from_slice(&self.r_grid);
        let pad_t = self.t_grid[0] > 0.0;
        let mut tg = Vec::with_capacity(self.t_grid.len() + 1);
        if pad_t {
            tg.push(0.0);
        }
        tg.extend_from_slice(&self.t_grid);
        let t = t.min(*tg.last().unwrap());
        let at = |i: usize, j: usize| -> f64 {
            if pad_r && i == 0 {
                return 0.0;
            }
            let ii = i - pad_r as usize;
            if pad_t && j == 0 {
                return self.r_grid[ii];
            }
            self.values[ii][j - pad_t as usize]
        };
        if rg.len() == 1 || tg.len() == 1 {
            // degenerate grid: only exact nodes are meaningful
            let i = rg.iter().position(|&g| g == r).ok_or_else(|| Error::Range("off-grid level".into()))?;
            let j = if tg.len() == 1 { 0 } else { bracket(&tg, t).0 };
            return Ok(at(i, j));
        }
        let (i, wr) = bracket(&rg, r);
        let (j, wt) = bracket(&tg, t);
        let (a, b, c, d) = (at(i, j), at(i, j + 1), at(i + 1, j), at(i + 1, j + 1));
        let v = (1.0 - wr) * ((1.0 - wt) * a + wt * b) + wr * ((1.0 - wt) * c + wt * d);
        let lo = a.min(b).min(c).min(d);
        let hi = a.max(b).max(c).max(d);
        Ok(v.clamp(lo, hi))
    }
}

fn check_grid(g: &[f64], what: &str) -> Result<()> {
    if g.is_empty() {
        return Err(Error::Config(format!("{what} grid is empty")));
    }
    for &x in g {
        check_nonneg(x, what)?;
    }
    if g.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::Config(format!("{what} grid must be strictly increasing")));
    }
    Ok(())
}

fn check_pd(alpha: &KFun, extra: &[f64]) -> Result<()> {
    if alpha.eval(0.0)? != 0.0 {
        return Err(Error::Model("decay rate must vanish at zero".into()));
    }
    for r in geom_grid(1e-9, 1e9, 64).into_iter().chain(extra.iter().copied()) {
        if r > 0.0 && !(alpha.eval(r)? > 0.0) {
            return Err(Error::Model(format!("decay rate not positive at {r}")));
        }
    }
    Ok(())
}

/// Flow of ẏ = −α(y) tabulated on `r_grid × t_grid`.
pub fn kl_envelope(alpha: &KFun, r_grid: &[f64], t_grid: &[f64]) -> Result<KLFun> {
    check_grid(r_grid, "level")?;
    check_grid(t_grid, "time")?;
    check_pd(alpha, r_grid)?;
    let values = r_grid
        .par_iter()
        .map(|&r| flow(alpha, r, t_grid, |_| 0.0))
        .collect::<Result<Vec<_>>>()?;
    let tab = KlTable { r_grid: r_grid.to_vec(), t_grid: t_grid.to_vec(), values };
    tab.check()?;
    Ok(KLFun::Tabulated(tab))
}

fn flow(alpha: &KFun, y0: f64, t_grid: &[f64], v: impl Fn(f64) -> f64) -> Result<Vec<f64>> {
    let out = scalar_rk4(
        |t, y| {
            // α is only defined on [0,∞); clamp overshoot from trial stages
            -alpha.eval(y.max(0.0)).unwrap_or(f64::NAN) + v(t)
        },
        y0,
        t_grid,
        FLOW_TOL,
    )?;
    if out.iter().any(|x| x.is_nan()) {
        return Err(Error::Numerical("flow produced NaN".into()));
    }
    Ok(out)
}

/// Per-sample record of the comparison bound with inputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComparisonAudit {
    pub times: Vec<f64>,
    pub y: Vec<f64>,
    pub bound: Vec<f64>,
    /// bound − y
    pub margins: Vec<f64>,
    pub pass: bool,
}

/// Integrate ẏ = −α(y) + v(t) with `v` sampled uniformly on [0, T]
/// (piecewise linear between samples) and check y(t) ≤ β(y0,t) + 2∫₀ᵗ v.
pub fn comparison_with_inputs(alpha: &KFun, y0: f64, v: &[f64], horizon: f64) -> Result<ComparisonAudit> {
    check_nonneg(y0, "initial value")?;
    if v.len() < 2 {
        return Err(Error::Config("need at least two input samples".into()));
    }
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::Config("horizon must be > 0".into()));
    }
    for (k, &s) in v.iter().enumerate() {
        if !(s.is_finite() && s >= 0.0) {
            return Err(Error::Domain(format!("input sample {k} is {s}")));
        }
    }
    check_pd(alpha, &[y0])?;
    let dt = horizon / (v.len() - 1) as f64;
    let times: Vec<f64> = (0..v.len()).map(|k| k as f64 * dt).collect();
    let input = |t: f64| {
        let x = (t / dt).max(0.0);
        let k = (x.floor() as usize).min(v.len() - 2);
        let w = (x - k as f64).clamp(0.0, 1.0);
        (1.0 - w) * v[k] + w * v[k + 1]
    };
    let y = flow(alpha, y0, &times, input)?;
    let beta = flow(alpha, y0, &times, |_| 0.0)?;
    let mut acc = 0.0;
    let mut bound = Vec::with_capacity(v.len());
    for k in 0..v.len() {
        if k > 0 {
            acc += 0.5 * dt * (v[k - 1] + v[k]);
        }
        bound.push(beta[k] + 2.0 * acc);
    }
    let margins: Vec<f64> = bound.iter().zip(&y).map(|(b, y)| b - y).collect();
    let pass = margins.iter().all(|&m| m >= 0.0);
    Ok(ComparisonAudit { times, y, bound, margins, pass })
}

/// For β(r,t) = q(r)e^{−ct} and 0 < λ ≤ c, returns (id, q) with
/// id(β(r,t)) ≤ q(r)e^{−λt}.
pub fn sontag_factor(beta: &KLFun, lambda: f64) -> Result<(KFun, KFun)> {
    let (q, c) = match beta {
        KLFun::Closed { q, c } => (q, *c),
        KLFun::Tabulated(_) => {
            return Err(Error::Unsupported("factorization is only available for closed-form envelopes".into()))
        }
    };
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::Domain(format!("rate must be > 0, got {lambda}")));
    }
    if lambda > c {
        return Err(Error::Infeasible(format!("rate {lambda} exceeds decay rate {c}")));
    }
    let a1 = KFun::identity();
    let a2 = q.clone();
    for r in geom_grid(1e-6, 1e6, 32) {
        for t in (0..32).map(|j| j as f64 * 0.5) {
            let lhs = a1.eval(beta.eval(r, t)?)?;
            let rhs = a2.eval(r)? * (-lambda * t).exp();
            if lhs > rhs * (1.0 + 1e-14) {
                return Err(Error::Numerical(format!("factorization check failed at ({r}, {t})")));
            }
        }
    }
    Ok((a1, a2))
}
