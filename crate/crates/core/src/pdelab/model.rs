use super::banded::{Banded, BandedLu};
use crate::error::{Error, Result};
use crate::trajectory::{Trajectory, BLOWUP};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::ops::Range;

/// Model family and its physical parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PdeKind {
    /// x_t + x_z = 0, inflow x(0,t) = u(t).
    Transport,
    /// x_t = x_zz + b·x − κ·x³ + u, Dirichlet.
    HeatReaction {
        b: f64,
        #[serde(default)]
        kappa: f64,
    },
    /// x_t = x_zz − a·x·x_z + b·x + u, Dirichlet.
    Burgers { a: f64, b: f64 },
    /// x_t = −x_zzzz − λ·x_zz − b·x·x_z + u, clamped.
    KuramotoSivashinsky { lambda: f64, b: f64 },
    /// x_t = μ·x_zz + a·x − x³, x_z(0,t) = u(t), x(L,t) = 0.
    GinzburgLandau { mu: f64, a: f64 },
    /// Two diffusions on (0,d) coupled through a₁₂x₂ and a₂₁x₁.
    CoupledLinearRd { c1: f64, c2: f64, a12: f64, a21: f64, d: f64 },
    /// x₁ driven by x₂², x₂ driven by √|x₁|, on (0,π).
    CoupledNonlinearRd { q1: f64, q2: f64 },
    /// x_t = c·x_zz + x·u/(1 + |z−1|·x²) on (0,L), Dirichlet.
    IissRd { c: f64, l: f64 },
    /// ẋᵢ = a·xᵢ₋₁ − xᵢ + b·xᵢ₊₁ + u on a ring of K nodes.
    InfiniteLinear { a: f64, b: f64, k: usize },
    /// ẋᵢ = −xᵢ³ + max(a·xᵢ₋₁³, b·xᵢ₊₁³, u) on a ring of K nodes.
    InfiniteCubic { a: f64, b: f64, k: usize },
    /// K decoupled modes ẋ = −x + x²y − x³/k², ẏ = −y.
    EnsembleS1 { k: usize },
}

impl PdeKind {
    pub fn name(&self) -> &'static str {
        match self {
            PdeKind::Transport => "transport",
            PdeKind::HeatReaction { .. } => "heat-reaction",
            PdeKind::Burgers { .. } => "burgers",
            PdeKind::KuramotoSivashinsky { .. } => "kuramoto-sivashinsky",
            PdeKind::GinzburgLandau { .. } => "ginzburg-landau",
            PdeKind::CoupledLinearRd { .. } => "coupled-linear-rd",
            PdeKind::CoupledNonlinearRd { .. } => "coupled-nonlinear-rd",
            PdeKind::IissRd { .. } => "iiss-rd",
            PdeKind::InfiniteLinear { .. } => "infinite-linear",
            PdeKind::InfiniteCubic { .. } => "infinite-cubic",
            PdeKind::EnsembleS1 { .. } => "ensemble-s1",
        }
    }

    fn params(&self) -> Vec<f64> {
        match *self {
            PdeKind::Transport => vec![],
            PdeKind::HeatReaction { b, kappa } => vec![b, kappa],
            PdeKind::Burgers { a, b } => vec![a, b],
            PdeKind::KuramotoSivashinsky { lambda, b } => vec![lambda, b],
            PdeKind::GinzburgLandau { mu, a } => vec![mu, a],
            PdeKind::CoupledLinearRd { c1, c2, a12, a21, d } => vec![c1, c2, a12, a21, d],
            PdeKind::CoupledNonlinearRd { q1, q2 } => vec![q1, q2],
            PdeKind::IissRd { c, l } => vec![c, l],
            PdeKind::InfiniteLinear { a, b, .. } | PdeKind::InfiniteCubic { a, b, .. } => vec![a, b],
            PdeKind::EnsembleS1 { .. } => vec![],
        }
    }

    /// Spatial grid models, as opposed to lattices and ensembles.
    pub fn is_grid(&self) -> bool {
        !matches!(self, PdeKind::InfiniteLinear { .. } | PdeKind::InfiniteCubic { .. } | PdeKind::EnsembleS1 { .. })
    }

    pub fn boundary(&self) -> Boundary {
        match self {
            PdeKind::Transport => Boundary::Inflow,
            PdeKind::KuramotoSivashinsky { .. } => Boundary::Clamped,
            PdeKind::GinzburgLandau { .. } => Boundary::NeumannDirichlet,
            PdeKind::InfiniteLinear { .. } | PdeKind::InfiniteCubic { .. } => Boundary::Periodic,
            PdeKind::EnsembleS1 { .. } => Boundary::None,
            _ => Boundary::Dirichlet,
        }
    }

    pub fn channel(&self) -> InputChannel {
        match self {
            PdeKind::Transport => InputChannel::BoundaryLeft,
            PdeKind::GinzburgLandau { .. } => InputChannel::BoundaryNeumannLeft,
            _ => InputChannel::Distributed,
        }
    }

    /// Length fixed by the model parameters, if any.
    fn intrinsic_length(&self) -> Option<f64> {
        match *self {
            PdeKind::CoupledLinearRd { d, .. } => Some(d),
            PdeKind::CoupledNonlinearRd { .. } => Some(PI),
            PdeKind::IissRd { l, .. } => Some(l),
            _ => None,
        }
    }

    fn blocks(&self) -> usize {
        match self {
            PdeKind::CoupledLinearRd { .. } | PdeKind::CoupledNonlinearRd { .. } => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Boundary {
    Dirichlet,
    /// x = x_z = 0 at both ends.
    Clamped,
    /// Neumann input at the left end, Dirichlet at the right.
    NeumannDirichlet,
    Inflow,
    Periodic,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InputChannel {
    Distributed,
    BoundaryLeft,
    BoundaryNeumannLeft,
}

/// Scalar input signal u(t); distributed inputs are uniform in space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Signal {
    Zero,
    Const { value: f64 },
    /// offset + amp·sin(2π·freq·t)
    Sine {
        amp: f64,
        freq: f64,
        #[serde(default)]
        offset: f64,
    },
    /// Piecewise linear through (t, u), held constant outside.
    Table { t: Vec<f64>, u: Vec<f64> },
}

impl Signal {
    pub fn validate(&self) -> Result<()> {
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        match self {
            Signal::Zero => Ok(()),
            Signal::Const { value } if value.is_finite() => Ok(()),
            Signal::Sine { amp, freq, offset } if finite(&[*amp, *freq, *offset]) => Ok(()),
            Signal::Table { t, u } => {
                if t.is_empty() || t.len() != u.len() || !finite(t) || !finite(u) {
                    return Err(Error::Config("input table needs equal, non-empty, finite t and u".into()));
                }
                if t.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(Error::Config("input table times must increase".into()));
                }
                Ok(())
            }
            _ => Err(Error::Config("input parameters must be finite".into())),
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self {
            Signal::Zero => 0.0,
            Signal::Const { value } => *value,
            Signal::Sine { amp, freq, offset } => offset + amp * (2.0 * PI * freq * t).sin(),
            Signal::Table { t: ts, u } => {
                if t <= ts[0] {
                    return u[0];
                }
                if t >= ts[ts.len() - 1] {
                    return u[u.len() - 1];
                }
                let i = ts.partition_point(|&s| s <= t) - 1;
                let w = (t - ts[i]) / (ts[i + 1] - ts[i]);
                u[i] + w * (u[i + 1] - u[i])
            }
        }
    }

    /// Upper bound of |u| over all times.
    pub fn sup_norm(&self) -> f64 {
        match self {
            Signal::Zero => 0.0,
            Signal::Const { value } => value.abs(),
            Signal::Sine { amp, offset, .. } => offset.abs() + amp.abs(),
            Signal::Table { u, .. } => u.iter().fold(0.0, |m, v| m.max(v.abs())),
        }
    }
}

fn default_n() -> usize {
    256
}

/// Everything needed to assemble a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub model: PdeKind,
    /// Grid nodes including both ends (grid kinds only).
    #[serde(default = "default_n")]
    pub n: usize,
    /// Domain length; defaults to 1 unless the kind fixes it.
    #[serde(default)]
    pub length: Option<f64>,
    /// Time step; defaults per kind.
    #[serde(default)]
    pub dt: Option<f64>,
}

impl ModelSpec {
    pub fn new(model: PdeKind, n: usize) -> ModelSpec {
        ModelSpec { model, n, length: None, dt: None }
    }
}

#[derive(Debug, Clone)]
struct Block {
    offset: usize,
    /// Linear operator on the interior nodes 1..n−1.
    op: Banded,
}

/// An assembled model. Immutable after [`build_model`].
#[derive(Debug, Clone)]
pub struct PdeModel {
    spec: ModelSpec,
    length: f64,
    h: f64,
    dim: usize,
    dt: f64,
    blocks: Vec<Block>,
    factors: Vec<BandedLu>,
}

fn d2(m: usize, h: f64) -> Banded {
    let mut op = Banded::zeros(m, 1, 1);
    let c = 1.0 / (h * h);
    for i in 0..m {
        op.set(i, i, -2.0 * c);
        if i > 0 {
            op.set(i, i - 1, c);
        }
        if i + 1 < m {
            op.set(i, i + 1, c);
        }
    }
    op
}

/// Fourth difference on interior nodes with x = x_z = 0 at both ends; the
/// ghost values x₋₁ = x₁ and x_N = x_{N−2} turn the first and last rows into
/// (7, −4, 1)/h⁴.
pub(crate) fn d4_clamped(m: usize, h: f64) -> Banded {
    let mut op = Banded::zeros(m, 2, 2);
    let c = 1.0 / h.powi(4);
    for i in 0..m {
        let diag = if i == 0 || i + 1 == m { 7.0 } else { 6.0 };
        op.set(i, i, diag * c);
        if i >= 1 {
            op.set(i, i - 1, -4.0 * c);
        }
        if i >= 2 {
            op.set(i, i - 2, c);
        }
        if i + 1 < m {
            op.set(i, i + 1, -4.0 * c);
        }
        if i + 2 < m {
            op.set(i, i + 2, c);
        }
    }
    op
}

/// Operator of the clamped fourth-order problem x_zzzz + λ·x_zz on the
/// interior of an n-node grid over (0,1).
pub(crate) fn ks_operator(n: usize, lambda: f64) -> Banded {
    let h = 1.0 / (n - 1) as f64;
    let m = n - 2;
    let mut op = d4_clamped(m, h);
    let lap = d2(m, h);
    for i in 0..m {
        for j in i.saturating_sub(1)..=(i + 1).min(m - 1) {
            op.add(i, j, lambda * lap.get(i, j));
        }
    }
    op
}

impl PdeModel {
    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn kind(&self) -> PdeKind {
        self.spec.model
    }

    /// Nodes per block (grid kinds) or lattice size.
    pub fn n(&self) -> usize {
        match self.spec.model {
            PdeKind::InfiniteLinear { k, .. } | PdeKind::InfiniteCubic { k, .. } => k,
            PdeKind::EnsembleS1 { k } => k,
            _ => self.spec.n,
        }
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// Length of the flat state vector.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Default step.
    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn boundary(&self) -> Boundary {
        self.spec.model.boundary()
    }

    pub fn channel(&self) -> InputChannel {
        self.spec.model.channel()
    }

    pub fn is_grid(&self) -> bool {
        self.spec.model.is_grid()
    }

    /// Node coordinates of one block.
    pub fn nodes(&self) -> Vec<f64> {
        (0..self.spec.n).map(|i| i as f64 * self.h).collect()
    }

    pub fn block_count(&self) -> usize {
        if self.is_grid() {
            self.spec.model.blocks()
        } else {
            1
        }
    }

    pub fn block_range(&self, i: usize) -> Range<usize> {
        if self.is_grid() {
            i * self.spec.n..(i + 1) * self.spec.n
        } else {
            0..self.dim
        }
    }

    /// Largest growth rate of the implicit linear part (0 if none).
    fn implicit_growth(&self) -> f64 {
        match self.spec.model {
            PdeKind::HeatReaction { b, .. } | PdeKind::Burgers { b, .. } => b.max(0.0),
            PdeKind::KuramotoSivashinsky { lambda, .. } => (lambda * lambda / 4.0 / self.length.powi(4)).max(0.0),
            PdeKind::GinzburgLandau { a, .. } => a.max(0.0),
            _ => 0.0,
        }
    }

    /// Reject steps outside the stability region of the scheme.
    pub fn check_dt(&self, dt: f64) -> Result<()> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::Config(format!("dt must be finite and > 0, got {dt}")));
        }
        let limit = match self.spec.model {
            PdeKind::Transport => self.h * (1.0 + 1e-12),
            PdeKind::InfiniteLinear { .. } | PdeKind::InfiniteCubic { .. } | PdeKind::EnsembleS1 { .. } => 0.5,
            _ => {
                let g = self.implicit_growth();
                if g > 0.0 {
                    0.5 / g
                } else {
                    f64::INFINITY
                }
            }
        };
        if dt > limit {
            return Err(Error::Config(format!(
                "dt = {dt} exceeds the stability bound {limit:.3e} for {}; try dt = {:.3e}",
                self.spec.model.name(),
                0.5 * limit
            )));
        }
        Ok(())
    }

    fn factorize(&self, dt: f64) -> Result<Vec<BandedLu>> {
        self.blocks.iter().map(|b| b.op.affine(-dt, 1.0).factor()).collect()
    }

    /// Impose boundary values at time t (input `u`).
    pub fn project(&self, x: &mut [f64], u: f64) {
        let n = self.spec.n;
        match self.spec.model {
            PdeKind::Transport => x[0] = u,
            PdeKind::GinzburgLandau { .. } => {
                x[0] = (4.0 * x[1] - x[2] - 2.0 * self.h * u) / 3.0;
                x[n - 1] = 0.0;
            }
            k if k.is_grid() => {
                for b in 0..k.blocks() {
                    x[b * n] = 0.0;
                    x[b * n + n - 1] = 0.0;
                }
            }
            _ => {}
        }
    }

    /// Explicit part of the grid kinds at interior nodes.
    fn explicit(&self, x: &[f64], u: f64, out: &mut [f64]) {
        let n = self.spec.n;
        let h = self.h;
        let adv = |x: &[f64], i: usize| {
            (x[i] * (x[i + 1] - x[i - 1]) + (x[i + 1] * x[i + 1] - x[i - 1] * x[i - 1])) / (6.0 * h)
        };
        match self.spec.model {
            PdeKind::HeatReaction { kappa, .. } => {
                for i in 1..n - 1 {
                    out[i] = -kappa * x[i].powi(3) + u;
                }
            }
            PdeKind::Burgers { a, .. } => {
                for i in 1..n - 1 {
                    out[i] = -a * adv(x, i) + u;
                }
            }
            PdeKind::KuramotoSivashinsky { b, .. } => {
                for i in 1..n - 1 {
                    out[i] = -b * adv(x, i) + u;
                }
            }
            PdeKind::GinzburgLandau { mu, .. } => {
                for i in 1..n - 1 {
                    out[i] = -x[i].powi(3);
                }
                out[1] -= 2.0 * mu * u / (3.0 * h);
            }
            PdeKind::CoupledLinearRd { a12, a21, .. } => {
                for i in 1..n - 1 {
                    out[i] = a12 * x[n + i] + u;
                    out[n + i] = a21 * x[i] + u;
                }
            }
            PdeKind::CoupledNonlinearRd { .. } => {
                for i in 1..n - 1 {
                    out[i] = x[n + i] * x[n + i] + u;
                    out[n + i] = x[i].abs().sqrt() + u;
                }
            }
            PdeKind::IissRd { .. } => {
                for i in 1..n - 1 {
                    let z = i as f64 * h;
                    out[i] = x[i] / (1.0 + (z - 1.0).abs() * x[i] * x[i]) * u;
                }
            }
            _ => {}
        }
    }

    /// Vector field of the lattice and ensemble kinds.
    fn lattice_field(&self, x: &[f64], u: f64, out: &mut [f64]) {
        match self.spec.model {
            PdeKind::InfiniteLinear { a, b, k } => {
                for i in 0..k {
                    out[i] = a * x[(i + k - 1) % k] - x[i] + b * x[(i + 1) % k] + u;
                }
            }
            PdeKind::InfiniteCubic { a, b, k } => {
                for i in 0..k {
                    let l = x[(i + k - 1) % k].powi(3);
                    let r = x[(i + 1) % k].powi(3);
                    out[i] = -x[i].powi(3) + (a * l).max(b * r).max(u);
                }
            }
            PdeKind::EnsembleS1 { k } => s1_field(k, x, out),
            _ => unreachable!("lattice field on a grid kind"),
        }
    }
}

pub(crate) fn s1_field(k: usize, x: &[f64], out: &mut [f64]) {
    for j in 0..k {
        let kk = (j + 1) as f64;
        let (xk, yk) = (x[2 * j], x[2 * j + 1]);
        out[2 * j] = -xk + xk * xk * yk - xk.powi(3) / (kk * kk);
        out[2 * j + 1] = -yk;
    }
}

/// Assemble stencils and pre-factor the implicit solves for the default step.
pub fn build_model(spec: &ModelSpec) -> Result<PdeModel> {
    let kind = spec.model;
    if kind.params().iter().any(|v| !v.is_finite()) {
        return Err(Error::Config(format!("{} parameters must be finite", kind.name())));
    }
    let positive = |v: f64, what: &str| {
        if v > 0.0 {
            Ok(())
        } else {
            Err(Error::Config(format!("{what} must be > 0, got {v}")))
        }
    };
    match kind {
        PdeKind::GinzburgLandau { mu, .. } => positive(mu, "mu")?,
        PdeKind::CoupledLinearRd { c1, c2, d, .. } => {
            positive(c1, "c1")?;
            positive(c2, "c2")?;
            positive(d, "d")?;
        }
        PdeKind::CoupledNonlinearRd { q1, q2 } => {
            positive(q1, "q1")?;
            positive(q2, "q2")?;
        }
        PdeKind::IissRd { c, l } => {
            positive(c, "c")?;
            positive(l, "l")?;
        }
        PdeKind::InfiniteLinear { k, .. } | PdeKind::InfiniteCubic { k, .. } if k < 3 => {
            return Err(Error::Config(format!("ring needs at least 3 nodes, got {k}")));
        }
        PdeKind::EnsembleS1 { k } if k < 1 => return Err(Error::Config("ensemble needs at least one mode".into())),
        _ => {}
    }
    let length = match (kind.intrinsic_length(), spec.length) {
        (Some(l), Some(g)) if (l - g).abs() > 1e-12 * l => {
            return Err(Error::Config(format!("{} fixes the domain length to {l}, got {g}", kind.name())))
        }
        (Some(l), _) => l,
        (None, Some(g)) => g,
        (None, None) => 1.0,
    };
    positive(length, "length")?;
    let mut model = PdeModel { spec: spec.clone(), length, h: 0.0, dim: 0, dt: 0.0, blocks: vec![], factors: vec![] };
    if kind.is_grid() {
        if spec.n < 16 {
            return Err(Error::Config(format!("grid needs N ≥ 16 nodes, got {}", spec.n)));
        }
        let n = spec.n;
        let m = n - 2;
        let h = length / (n - 1) as f64;
        model.h = h;
        model.dim = n * kind.blocks();
        let ops = match kind {
            PdeKind::Transport => vec![],
            PdeKind::HeatReaction { b, .. } | PdeKind::Burgers { b, .. } => vec![d2(m, h).affine(1.0, b)],
            PdeKind::KuramotoSivashinsky { lambda, .. } => {
                let mut op = d4_clamped(m, h);
                let lap = d2(m, h);
                for i in 0..m {
                    for j in i.saturating_sub(1)..=(i + 1).min(m - 1) {
                        op.add(i, j, lambda * lap.get(i, j));
                    }
                }
                vec![op.affine(-1.0, 0.0)]
            }
            PdeKind::GinzburgLandau { mu, a } => {
                let mut op = d2(m, h);
                op.set(0, 0, -2.0 / (3.0 * h * h));
                op.set(0, 1, 2.0 / (3.0 * h * h));
                vec![op.affine(mu, a)]
            }
            PdeKind::CoupledLinearRd { c1, c2, .. } => vec![d2(m, h).affine(c1, 0.0), d2(m, h).affine(c2, 0.0)],
            PdeKind::CoupledNonlinearRd { q1, q2 } => vec![d2(m, h).affine(q1, 0.0), d2(m, h).affine(q2, 0.0)],
            PdeKind::IissRd { c, .. } => vec![d2(m, h).affine(c, 0.0)],
            _ => unreachable!(),
        };
        model.blocks = ops.into_iter().enumerate().map(|(i, op)| Block { offset: i * n, op }).collect();
    } else {
        model.dim = match kind {
            PdeKind::EnsembleS1 { k } => 2 * k,
            _ => model.n(),
        };
    }
    model.dt = match spec.dt {
        Some(dt) => dt,
        None => match kind {
            PdeKind::Transport => model.h,
            PdeKind::KuramotoSivashinsky { .. } => {
                let g = model.implicit_growth();
                if g > 0.0 {
                    (0.25 / g).min(1e-4)
                } else {
                    1e-4
                }
            }
            PdeKind::InfiniteLinear { .. } | PdeKind::InfiniteCubic { .. } => 1e-2,
            _ => {
                let g = model.implicit_growth();
                if g > 0.0 {
                    (0.25 / g).min(1e-3)
                } else {
                    1e-3
                }
            }
        },
    };
    model.check_dt(model.dt)?;
    model.factors = model.factorize(model.dt)?;
    Ok(model)
}

/// [`simulate_strided`] keeping every step.
pub fn simulate(model: &PdeModel, x0: &[f64], u: &Signal, t_end: f64, dt: f64) -> Result<Trajectory> {
    simulate_strided(model, x0, u, t_end, dt, 1)
}

/// Integrate to `t_end` and keep every `stride`-th step. The step is shrunk
/// so that it divides `t_end`. Boundary values are imposed on `x0` first.
pub fn simulate_strided(
    model: &PdeModel,
    x0: &[f64],
    u: &Signal,
    t_end: f64,
    dt: f64,
    stride: usize,
) -> Result<Trajectory> {
    if x0.len() != model.dim {
        return Err(Error::Shape { expected: model.dim, got: x0.len() });
    }
    if !(t_end.is_finite() && t_end > 0.0) {
        return Err(Error::Config(format!("t_end must be finite and > 0, got {t_end}")));
    }
    if stride == 0 {
        return Err(Error::Config("stride must be ≥ 1".into()));
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::Config("x0 must be finite".into()));
    }
    u.validate()?;
    model.check_dt(dt)?;
    let ratio = t_end / dt;
    let steps = if (ratio - ratio.round()).abs() <= 1e-9 * ratio { ratio.round() } else { ratio.ceil() } as usize;
    let dt = t_end / steps as f64;
    model.check_dt(dt * (1.0 - 1e-12))?;
    let fresh;
    let factors = if (dt - model.dt).abs() <= 1e-14 * dt {
        &model.factors
    } else {
        fresh = model.factorize(dt)?;
        &fresh
    };

    let mut x = x0.to_vec();
    model.project(&mut x, u.eval(0.0));
    let mut times = vec![0.0];
    let mut states = vec![x.clone()];
    let mut inputs = vec![vec![u.eval(0.0)]];
    let mut blow_up = None;
    let n = model.spec.n;
    let mut f = vec![0.0; model.dim];
    let mut rhs = vec![0.0; n.saturating_sub(2)];
    let mut next = vec![0.0; model.dim];
    let field = |t: f64, y: &[f64], d: &mut [f64]| model.lattice_field(y, u.eval(t), d);
    for s in 0..steps {
        let t = s as f64 * dt;
        let t1 = (s + 1) as f64 * dt;
        let un = u.eval(t);
        let prev_sup = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        match model.spec.model {
            PdeKind::Transport => {
                let c = dt / model.h;
                for i in (1..n).rev() {
                    x[i] -= c * (x[i] - x[i - 1]);
                }
            }
            k if k.is_grid() => {
                model.explicit(&x, un, &mut f);
                for (b, lu) in model.blocks.iter().zip(factors) {
                    let o = b.offset;
                    for j in 0..n - 2 {
                        rhs[j] = x[o + 1 + j] + dt * f[o + 1 + j];
                    }
                    lu.solve(&mut rhs);
                    x[o + 1..o + n - 1].copy_from_slice(&rhs);
                }
            }
            _ => {
                crate::ode::rk4_step(&field, t, &x, dt, &mut next);
                x.copy_from_slice(&next);
            }
        }
        model.project(&mut x, u.eval(t1));
        if let Some(bad) = x.iter().position(|v| v.is_nan()) {
            // overflow inside one step from a state the step cannot resolve
            if prev_sup * dt >= 1.0 {
                blow_up = Some(t1);
                break;
            }
            return Err(Error::Numerical(format!(
                "NaN in state component {bad} at t = {t1}; last valid time {t}"
            )));
        }
        if x.iter().any(|v| !(v.abs() <= BLOWUP)) {
            blow_up = Some(t1);
            break;
        }
        if (s + 1) % stride == 0 {
            times.push(t1);
            states.push(x.clone());
            inputs.push(vec![u.eval(t1)]);
        }
    }
    Trajectory::new(times, states, inputs, blow_up)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(kind: PdeKind, n: usize) -> PdeModel {
        build_model(&ModelSpec::new(kind, n)).unwrap()
    }

    fn l2(m: &PdeModel, x: &[f64]) -> f64 {
        let h = m.h();
        let n = x.len();
        (h * (x.iter().map(|v| v * v).sum::<f64>() - 0.5 * (x[0] * x[0] + x[n - 1] * x[n - 1]))).sqrt()
    }

    #[test]
    fn heat_matches_fourier_mode() {
        let m = model(PdeKind::Burgers { a: 0.0, b: 0.0 }, 256);
        let x0: Vec<f64> = m.nodes().iter().map(|z| (PI * z).sin()).collect();
        let tr = simulate(&m, &x0, &Signal::Zero, 0.1, 1e-3).unwrap();
        let want = (-PI * PI * 0.1).exp() * l2(&m, &x0);
        let got = l2(&m, tr.last().unwrap());
        assert!((got / want - 1.0).abs() < 0.01, "{got} vs {want}");
    }

    #[test]
    fn transport_fills_with_inflow() {
        let m = model(PdeKind::Transport, 101);
        let x0 = vec![0.0; 101];
        let tr = simulate(&m, &x0, &Signal::Const { value: 0.7 }, 1.5, m.h()).unwrap();
        for (t, x) in tr.times.iter().zip(&tr.states) {
            if *t >= 1.0 + 1e-12 {
                assert!(x.iter().all(|v| (v - 0.7).abs() < 1e-12));
            }
        }
        let err = simulate(&m, &x0, &Signal::Zero, 1.0, 2.0 * m.h()).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn zero_state_is_an_equilibrium() {
        let kinds = [
            PdeKind::Transport,
            PdeKind::HeatReaction { b: 2.0, kappa: 1.0 },
            PdeKind::Burgers { a: 1.0, b: 5.0 },
            PdeKind::KuramotoSivashinsky { lambda: 20.0, b: 1.0 },
            PdeKind::GinzburgLandau { mu: 1.0, a: 3.0 },
            PdeKind::CoupledLinearRd { c1: 1.0, c2: 2.0, a12: 0.5, a21: 0.3, d: PI },
            PdeKind::CoupledNonlinearRd { q1: 1.0, q2: 1.5 },
            PdeKind::IissRd { c: 1.0, l: 2.0 },
            PdeKind::InfiniteLinear { a: 0.5, b: 0.6, k: 16 },
            PdeKind::InfiniteCubic { a: 1.2, b: 0.5, k: 16 },
            PdeKind::EnsembleS1 { k: 4 },
        ];
        for k in kinds {
            let m = model(k, 64);
            let tr = simulate(&m, &vec![0.0; m.dim()], &Signal::Zero, 0.05, m.dt()).unwrap();
            assert!(tr.states.iter().all(|x| x.iter().all(|&v| v == 0.0)), "{}", k.name());
        }
    }

    #[test]
    fn spec_examples_build() {
        assert!(build_model(&ModelSpec::new(PdeKind::Burgers { a: 1.0, b: 5.0 }, 256)).is_ok());
        assert!(build_model(&ModelSpec::new(PdeKind::KuramotoSivashinsky { lambda: 20.0, b: 1.0 }, 256)).is_ok());
        let gl = build_model(&ModelSpec::new(PdeKind::GinzburgLandau { mu: 1.0, a: 3.0 }, 256)).unwrap();
        assert_eq!(gl.channel(), InputChannel::BoundaryNeumannLeft);
        assert!(build_model(&ModelSpec::new(PdeKind::Burgers { a: 1.0, b: 5.0 }, 8)).is_err());
        let mut bad = ModelSpec::new(PdeKind::KuramotoSivashinsky { lambda: 60.0, b: 1.0 }, 128);
        bad.dt = Some(1e-2);
        let msg = build_model(&bad).unwrap_err().to_string();
        assert!(msg.contains("try dt"), "{msg}");
        let mut fixed = ModelSpec::new(PdeKind::IissRd { c: 1.0, l: 2.0 }, 64);
        fixed.length = Some(1.0);
        assert!(build_model(&fixed).is_err());
    }

    #[test]
    fn neumann_row_sees_the_input() {
        // steady state of μx_zz = 0 with x_z(0) = u, x(1) = 0 is u(z − 1)
        let m = model(PdeKind::GinzburgLandau { mu: 1.0, a: 0.0 }, 65);
        let x0 = vec![0.0; 65];
        // the cubic term is negligible at this amplitude over the run
        let tr = simulate(&m, &x0, &Signal::Const { value: 1e-3 }, 6.0, 1e-2).unwrap();
        let x = tr.last().unwrap();
        for (z, v) in m.nodes().iter().zip(x) {
            assert!((v - 1e-3 * (z - 1.0)).abs() < 1e-7, "{z}: {v}");
        }
    }

    #[test]
    fn blow_up_truncates() {
        let m = model(PdeKind::InfiniteCubic { a: 2.0, b: 2.0, k: 8 }, 16);
        let tr = simulate(&m, &vec![1.0; 8], &Signal::Zero, 5.0, 1e-3).unwrap();
        // ż = z³ from 1 escapes at t = 1/2
        let tb = tr.blow_up.unwrap();
        assert!((tb - 0.5).abs() < 1e-2, "{tb}");
        assert!(tr.times.last().unwrap() < &tb);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(24))]

            #[test]
            fn dirichlet_rows_stay_pinned(b in 0.0..15.0f64, amp in 0.0..2.0f64, u in -1.0..1.0f64) {
                let m = model(PdeKind::Burgers { a: 1.0, b }, 64);
                let x0: Vec<f64> = m.nodes().iter().map(|z| amp * (PI * z).sin()).collect();
                let tr = simulate(&m, &x0, &Signal::Const { value: u }, 0.2, 1e-3).unwrap();
                prop_assert_eq!(tr.times.len(), tr.states.len());
                for x in &tr.states {
                    prop_assert_eq!(x.len(), 64);
                    prop_assert!(x[0] == 0.0 && x[63] == 0.0);
                }
            }

            #[test]
            fn nothing_recorded_past_blow_up(a in 0.5..3.0f64, x0 in 0.5..3.0f64) {
                let m = model(PdeKind::InfiniteCubic { a, b: 0.5, k: 8 }, 0);
                let tr = simulate(&m, &vec![x0; 8], &Signal::Zero, 10.0, 1e-2).unwrap();
                prop_assert!(tr.times.windows(2).all(|w| w[1] > w[0]));
                prop_assert!(tr.states.iter().flatten().all(|v| v.is_finite() && v.abs() < BLOWUP));
                if let Some(tb) = tr.blow_up {
                    prop_assert!(*tr.times.last().unwrap() <= tb);
                }
            }
        }
    }
}
