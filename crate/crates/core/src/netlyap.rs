//! Ω-paths (paths of decay) for gain operators, composite Lyapunov functions
//! V(x) = maxᵢ σᵢ⁻¹(Vᵢ(xᵢ)) built on them, and trajectory-level audits.

use crate::compfun::{geom_grid, inverse, Class, KFun};
use crate::error::{Error, Result};
use crate::gainops::{kleene_star, GainMatrix, GainOperator};
use crate::trajectory::Trajectory;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::ops::Range;
use std::sync::Arc;

/// Grid used to probe feasibility and to validate constructed paths.
pub fn construction_grid() -> Vec<f64> {
    geom_grid(1e-9, 1e9, 181)
}

/// Relative slack for rounding in the non-strict decay test.
const ROUND: f64 = 1e-12;
/// Failures kept verbatim in a [`PathCheck`].
const MAX_LISTED: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecayMode {
    NonStrict,
    Strict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathFailure {
    pub r: f64,
    pub component: usize,
    /// Γ(σ(r))ᵢ − σᵢ(r)
    pub excess: f64,
}

/// Divided-difference bounds c ≤ slope(σᵢ⁻¹) ≤ C on [lo, hi].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LipschitzEstimate {
    pub component: usize,
    pub lo: f64,
    pub hi: f64,
    pub c: f64,
    pub big_c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathCheck {
    pub pass: bool,
    pub mode: DecayMode,
    pub grid_points: usize,
    /// min over r, i of σᵢ(r) − Γ(σ(r))ᵢ, relative to σᵢ(r).
    pub worst_margin: f64,
    pub worst_r: f64,
    pub failure_count: usize,
    pub failures: Vec<PathFailure>,
    pub lipschitz: Vec<LipschitzEstimate>,
    pub notes: Vec<String>,
}

/// Candidate or validated path σ = (σ₁, …, σₙ).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OmegaPath {
    pub sigma: Vec<KFun>,
    pub mode: DecayMode,
    /// Linear strict-decay margin: Γ(σ(t)) ≤ σ(t) − m·t·𝟙 (ray paths only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub strict_margin: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub check: Option<PathCheck>,
}

impl OmegaPath {
    pub fn candidate(sigma: Vec<KFun>, mode: DecayMode) -> OmegaPath {
        OmegaPath { sigma, mode, strict_margin: None, check: None }
    }

    pub fn n(&self) -> usize {
        self.sigma.len()
    }

    pub fn eval(&self, r: f64) -> Result<Vec<f64>> {
        self.sigma.iter().map(|s| s.eval(r)).collect()
    }

    pub fn is_validated(&self) -> bool {
        self.check.as_ref().is_some_and(|c| c.pass)
    }

    /// Validate against `op` on `grid` and keep the result.
    pub fn validate(mut self, op: &GainOperator, grid: &[f64]) -> Result<OmegaPath> {
        self.check = Some(validate_path(op, &self, grid)?);
        Ok(self)
    }
}

/// σ⁻¹, in closed form for linear σ.
fn invert(s: &KFun) -> Result<KFun> {
    match s.as_linear() {
        Some(a) => KFun::linear(1.0 / a),
        None => inverse(s),
    }
}

/// Check Γ(σ(r)) ≤ σ(r) (or ≪ in strict mode) at every grid point and
/// estimate local Lipschitz bounds of each σᵢ⁻¹ on dyadic subintervals.
pub fn validate_path(op: &GainOperator, path: &OmegaPath, grid: &[f64]) -> Result<PathCheck> {
    let n = op.n();
    if path.n() != n {
        return Err(Error::Shape { expected: n, got: path.n() });
    }
    let mut check = PathCheck {
        pass: true,
        mode: path.mode,
        grid_points: grid.len(),
        worst_margin: f64::INFINITY,
        worst_r: f64::NAN,
        failure_count: 0,
        failures: vec![],
        lipschitz: vec![],
        notes: vec![],
    };
    for (i, s) in path.sigma.iter().enumerate() {
        if s.class() != Class::KInf {
            check.pass = false;
            check.notes.push(format!("σ{} is not class K∞", i + 1));
        }
    }
    for &r in grid {
        let s = path.eval(r)?;
        let g = op.apply(&s)?;
        for i in 0..n {
            let rel = if s[i] > 0.0 { (s[i] - g[i]) / s[i] } else { f64::NEG_INFINITY };
            if rel < check.worst_margin {
                check.worst_margin = rel;
                check.worst_r = r;
            }
            let bad = match path.mode {
                DecayMode::NonStrict => g[i] > s[i] * (1.0 + ROUND),
                DecayMode::Strict => !(g[i] < s[i]),
            };
            if bad {
                check.pass = false;
                check.failure_count += 1;
                if check.failures.len() < MAX_LISTED {
                    check.failures.push(PathFailure { r, component: i, excess: g[i] - s[i] });
                }
            }
        }
    }
    if let (Some(lo), Some(hi)) = (grid.iter().copied().reduce(f64::min), grid.iter().copied().reduce(f64::max)) {
        for (i, s) in path.sigma.iter().enumerate() {
            if s.class() != Class::KInf {
                continue;
            }
            let inv = invert(s)?;
            check.lipschitz.extend(lipschitz_bounds(&inv, i, lo, hi)?);
        }
    }
    Ok(check)
}

fn lipschitz_bounds(inv: &KFun, component: usize, lo: f64, hi: f64) -> Result<Vec<LipschitzEstimate>> {
    let mut out = vec![];
    let mut a = lo;
    while a < hi {
        let b = (2.0 * a).min(hi);
        let pts: Vec<f64> = (0..=8).map(|k| a + (b - a) * k as f64 / 8.0).collect();
        let vals = pts.iter().map(|&p| inv.eval(p)).collect::<Result<Vec<_>>>()?;
        let slopes: Vec<f64> = (0..8).map(|k| (vals[k + 1] - vals[k]) / (pts[k + 1] - pts[k])).collect();
        out.push(LipschitzEstimate {
            component,
            lo: a,
            hi: b,
            c: slopes.iter().copied().fold(f64::INFINITY, f64::min),
            big_c: slopes.iter().copied().fold(0.0, f64::max),
        });
        a = b;
    }
    Ok(out)
}

/// Path for two systems with gains χ₁₂ (from x₂ into x₁) and χ₂₁: σ₁ = id
/// and σ₂ the geometric midpoint √(χ₂₁·χ₁₂⁻¹) of the feasibility band.
pub fn two_system_path(chi12: &KFun, chi21: &KFun) -> Result<OmegaPath> {
    for r in construction_grid() {
        let c = chi12.eval(chi21.eval(r)?)?;
        if !(c < r) {
            return Err(Error::Infeasible(format!("χ12∘χ21(r) = {c} ≥ r at r = {r}")));
        }
    }
    let sigma2 = match (chi12.as_linear(), chi21.as_linear()) {
        (Some(p), Some(q)) => KFun::linear((q / p).sqrt())?,
        _ => crate::compfun::compose(
            &KFun::power(1.0, 0.5)?,
            &KFun::product(vec![chi21.clone(), inverse(chi12)?])?,
        )?,
    };
    let op = two_system_operator(chi12, chi21)?;
    let path = OmegaPath::candidate(vec![KFun::identity(), sigma2], DecayMode::NonStrict)
        .validate(&op, &construction_grid())?;
    if !path.is_validated() {
        return Err(Error::Numerical(format!("constructed path failed validation: {:?}", path.check)));
    }
    Ok(path)
}

/// 2×2 max-form operator Γ(s) = (χ₁₂(s₂), χ₂₁(s₁)).
pub fn two_system_operator(chi12: &KFun, chi21: &KFun) -> Result<GainOperator> {
    let mut m = GainMatrix::new(2);
    m.set(0, 1, chi12.clone())?;
    m.set(1, 0, chi21.clone())?;
    Ok(GainOperator::max_form(m))
}

/// Smallest λ with Γ(s₀) ≤ λ·s₀.
pub fn decay_factor(op: &GainOperator, s0: &[f64]) -> Result<f64> {
    let g = op.apply(s0)?;
    Ok(g.iter().zip(s0).map(|(a, b)| a / b).fold(0.0, f64::max))
}

/// s₀ = Q(𝟙) for the max-form operator Γ/λ, so that Γ(s₀) ≤ λ·s₀ follows
/// from Γ/λ(Q) ≤ Q. Needs linear gains and λ above the spectral radius.
pub fn strict_decay_point(op: &GainOperator, lambda: f64) -> Result<Vec<f64>> {
    let w = op
        .linear_weights()
        .ok_or_else(|| Error::Unsupported("strict decay points need linear gains".into()))?;
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::Domain(format!("λ = {lambda} must lie in (0, 1)")));
    }
    let n = op.n();
    let rows: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| w[i * n + j] / lambda).collect()).collect();
    let scaled = GainOperator::max_form(GainMatrix::from_linear_with_loops(&rows)?);
    Ok(kleene_star(&scaled, &vec![1.0; n])?.q)
}

/// Ray path σ(t) = t·s₀ from a point of strict decay Γ(s₀) ≤ λs₀.
pub fn path_from_point(op: &GainOperator, s0: &[f64], lambda: f64) -> Result<OmegaPath> {
    if op.linear_weights().is_none() {
        return Err(Error::Unsupported("ray paths need linear (homogeneous) gains".into()));
    }
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::Domain(format!("λ = {lambda} must lie in (0, 1)")));
    }
    if let Some(i) = s0.iter().position(|&x| !(x > 0.0 && x.is_finite())) {
        return Err(Error::Domain(format!("s0 component {i} must be positive")));
    }
    let g = op.apply(s0)?;
    if let Some(i) = (0..s0.len()).find(|&i| g[i] > lambda * s0[i] * (1.0 + ROUND)) {
        return Err(Error::Infeasible(format!(
            "component {i}: Γ(s0) = {} > λ·s0 = {}",
            g[i],
            lambda * s0[i]
        )));
    }
    let sigma = s0.iter().map(|&a| KFun::linear(a)).collect::<Result<Vec<_>>>()?;
    let min_s = s0.iter().copied().fold(f64::INFINITY, f64::min);
    let mut path = OmegaPath::candidate(sigma, DecayMode::Strict).validate(op, &construction_grid())?;
    path.strict_margin = Some((1.0 - lambda) * min_s);
    Ok(path)
}

/// Subsystem Lyapunov function evaluated on a slice of the full state.
pub type SubLyapunov = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
pub struct Subsystem {
    pub slice: Range<usize>,
    pub v: SubLyapunov,
}

impl Subsystem {
    pub fn new<F: Fn(&[f64]) -> f64 + Send + Sync + 'static>(slice: Range<usize>, v: F) -> Subsystem {
        Subsystem { slice, v: Arc::new(v) }
    }
}

/// V(x) = maxᵢ σᵢ⁻¹(Vᵢ(xᵢ)) and χ(r) = maxᵢ σᵢ⁻¹(χᵢ(r)).
#[derive(Clone)]
pub struct CompositeLf {
    subs: Vec<Subsystem>,
    sigma_inv: Vec<KFun>,
    chi: Vec<Option<KFun>>,
    certified: bool,
}

impl fmt::Debug for CompositeLf {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CompositeLf")
            .field("slices", &self.subs.iter().map(|s| s.slice.clone()).collect::<Vec<_>>())
            .field("sigma_inv", &self.sigma_inv)
            .field("chi", &self.chi)
            .field("certified", &self.certified)
            .finish()
    }
}

/// Assemble the composite function on a validated path. `chi[i] = None`
/// means subsystem i has no external input.
pub fn compose_lyapunov(subs: Vec<Subsystem>, path: &OmegaPath, chi: Vec<Option<KFun>>) -> Result<CompositeLf> {
    match &path.check {
        None => return Err(Error::Refused("path is not validated; run validate_path first".into())),
        Some(c) if !c.pass => {
            return Err(Error::Refused(format!(
                "path failed validation ({} failures); run validate_path on a corrected path",
                c.failure_count
            )))
        }
        Some(_) => {}
    }
    let mut clf = CompositeLf::candidate(subs, &path.sigma, chi)?;
    clf.certified = true;
    Ok(clf)
}

impl CompositeLf {
    /// Uncertified composite for diagnostics, e.g. when no valid path exists.
    pub fn candidate(subs: Vec<Subsystem>, sigma: &[KFun], chi: Vec<Option<KFun>>) -> Result<CompositeLf> {
        if subs.len() != sigma.len() {
            return Err(Error::Shape { expected: sigma.len(), got: subs.len() });
        }
        if chi.len() != sigma.len() {
            return Err(Error::Shape { expected: sigma.len(), got: chi.len() });
        }
        let sigma_inv = sigma.iter().map(invert).collect::<Result<Vec<_>>>()?;
        Ok(CompositeLf { subs, sigma_inv, chi, certified: false })
    }

    pub fn is_certified(&self) -> bool {
        self.certified
    }

    /// σᵢ⁻¹(Vᵢ(xᵢ)) per subsystem.
    pub fn levels(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.subs
            .iter()
            .zip(&self.sigma_inv)
            .map(|(s, inv)| {
                let part = x.get(s.slice.clone()).ok_or(Error::Shape { expected: s.slice.end, got: x.len() })?;
                inv.eval((s.v)(part))
            })
            .collect()
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        Ok(self.levels(x)?.into_iter().fold(0.0, f64::max))
    }

    pub fn chi(&self, r: f64) -> Result<f64> {
        let mut m = 0.0f64;
        for (c, inv) in self.chi.iter().zip(&self.sigma_inv) {
            if let Some(c) = c {
                m = m.max(inv.eval(c.eval(r)?)?);
            }
        }
        Ok(m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub t: f64,
    pub v: f64,
    /// Forward-difference estimate of the Dini derivative.
    pub rate: f64,
    /// Largest admissible rate: −margin + tolerance.
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DissipationReport {
    pub samples: usize,
    /// Samples where V(x) ≥ χ(‖u‖) so the decrease condition applies.
    pub checked: usize,
    pub violations: Vec<Violation>,
    pub pass: bool,
    /// min of −rate over checked samples (the empirical decrease margin).
    pub min_decrease: f64,
    pub certified: bool,
    pub warnings: Vec<String>,
}

/// Forward-difference step tolerance: max(1e-8, 1e-2·|V|).
pub fn dini_tolerance(v: f64) -> f64 {
    (1e-2 * v.abs()).max(1e-8)
}

/// Level-set dissipation audit: wherever V(x(t)) ≥ χ(‖u(t)‖) the forward
/// difference (V(t+dt) − V(t))/dt must not exceed −margin (up to
/// [`dini_tolerance`]). `u_norm` holds one value per sample or one constant.
pub fn dissipation_audit(clf: &CompositeLf, traj: &Trajectory, u_norm: &[f64], margin: f64) -> Result<DissipationReport> {
    if !(margin >= 0.0) {
        return Err(Error::Domain(format!("margin {margin} must be ≥ 0")));
    }
    if !(u_norm.len() == 1 || u_norm.len() == traj.len()) {
        return Err(Error::Shape { expected: traj.len(), got: u_norm.len() });
    }
    let mut rep = DissipationReport {
        samples: traj.len(),
        checked: 0,
        violations: vec![],
        pass: true,
        min_decrease: f64::INFINITY,
        certified: clf.is_certified(),
        warnings: vec![],
    };
    if !clf.is_certified() {
        rep.warnings.push("composite built on an unvalidated path".into());
    }
    if let Some(t) = traj.blow_up {
        rep.warnings.push(format!("trajectory blew up at t = {t}; audit truncated there"));
    }
    if traj.len() < 2 {
        return Ok(rep);
    }
    let dt = traj
        .uniform_dt()
        .ok_or_else(|| Error::Domain("dissipation audit needs uniformly sampled times".into()))?;
    let vs = traj.states.iter().map(|x| clf.eval(x)).collect::<Result<Vec<_>>>()?;
    for k in 0..traj.len() - 1 {
        let u = u_norm[if u_norm.len() == 1 { 0 } else { k }];
        if vs[k] < clf.chi(u)? {
            continue;
        }
        rep.checked += 1;
        let rate = (vs[k + 1] - vs[k]) / dt;
        rep.min_decrease = rep.min_decrease.min(-rate);
        let bound = -margin + dini_tolerance(vs[k]);
        if rate > bound {
            rep.pass = false;
            rep.violations.push(Violation { t: traj.times[k], v: vs[k], rate, bound });
        }
    }
    Ok(rep)
}

/// Independent audits of several trajectories.
pub fn dissipation_audit_batch(
    clf: &CompositeLf,
    runs: &[(Trajectory, Vec<f64>)],
    margin: f64,
) -> Result<Vec<DissipationReport>> {
    runs.par_iter().map(|(t, u)| dissipation_audit(clf, t, u, margin)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ode::rk4_step;
    use proptest::prelude::*;

    fn lin(a: f64) -> KFun {
        KFun::linear(a).unwrap()
    }

    #[test]
    fn two_system_examples() {
        let p = two_system_path(&lin(0.5), &KFun::identity()).unwrap();
        assert!((p.sigma[1].as_linear().unwrap() - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(p.sigma[0].as_linear(), Some(1.0));
        let a = 2f64.sqrt();
        let p = two_system_path(&lin(1.0 / a), &lin(1.0 / a)).unwrap();
        assert!((p.sigma[1].as_linear().unwrap() - 1.0).abs() < 1e-15);
        assert!(matches!(two_system_path(&lin(2.0), &lin(0.5)), Err(Error::Infeasible(_))));
    }

    #[test]
    fn nonlinear_two_system_path() {
        // χ12∘χ21(r) = 0.5·sat-ish < r
        let chi12 = KFun::power(0.5, 2.0).unwrap();
        let chi21 = KFun::power(1.0, 0.5).unwrap();
        let p = two_system_path(&chi12, &chi21).unwrap();
        let chk = p.check.as_ref().unwrap();
        assert!(chk.pass);
        assert!(!chk.lipschitz.is_empty());
        for l in &chk.lipschitz {
            assert!(l.c > 0.0 && l.c <= l.big_c);
        }
    }

    #[test]
    fn validate_examples() {
        let op = two_system_operator(&lin(0.5), &KFun::identity()).unwrap();
        let grid = construction_grid();
        let good = OmegaPath::candidate(vec![KFun::identity(), lin(2f64.sqrt())], DecayMode::NonStrict);
        let c = validate_path(&op, &good, &grid).unwrap();
        assert!(c.pass);
        // identity row gives zero relative margin on the second component
        assert!((c.worst_margin - (1.0 - 1.0 / 2f64.sqrt())).abs() < 1e-12);
        // linear σ⁻¹ has constant slope
        assert!(c.lipschitz.iter().filter(|l| l.component == 1).all(|l| (l.c - 1.0 / 2f64.sqrt()).abs() < 1e-9));
        let bad = OmegaPath::candidate(vec![KFun::identity(), lin(0.5)], DecayMode::NonStrict);
        let c = validate_path(&op, &bad, &grid).unwrap();
        assert!(!c.pass);
        assert_eq!(c.failure_count, grid.len());
        assert!(c.failures.iter().all(|f| f.component == 1));
        let contraction = GainOperator::max_form(GainMatrix::from_linear(&[vec![0.0, 0.9], vec![0.7, 0.0]]).unwrap());
        let id = OmegaPath::candidate(vec![KFun::identity(), KFun::identity()], DecayMode::NonStrict);
        assert!(validate_path(&contraction, &id, &grid).unwrap().pass);
    }

    #[test]
    fn ray_path_examples() {
        let op = GainOperator::max_form(GainMatrix::from_linear(&[vec![0.0, 0.5], vec![0.5, 0.0]]).unwrap());
        let p = path_from_point(&op, &[1.0, 1.0], 0.5).unwrap();
        assert!(p.is_validated());
        assert_eq!(p.eval(3.0).unwrap(), vec![3.0, 3.0]);
        assert_eq!(p.strict_margin, Some(0.5));
        assert!(matches!(path_from_point(&op, &[1.0, 1.0], 0.4), Err(Error::Infeasible(_))));

        let op = GainOperator::max_form(
            GainMatrix::from_linear(&[vec![0.0, 2.0, 0.0], vec![0.0, 0.0, 0.3], vec![0.6, 0.0, 0.0]]).unwrap(),
        );
        // Q(𝟙) itself only gives Γ(Q) ≤ Q; here one component is tight
        let q = kleene_star(&op, &[1.0, 1.0, 1.0]).unwrap().q;
        assert_eq!(decay_factor(&op, &q).unwrap(), 1.0);
        let s0 = strict_decay_point(&op, 0.9).unwrap();
        assert!(decay_factor(&op, &s0).unwrap() <= 0.9);
        let p = path_from_point(&op, &s0, 0.9).unwrap();
        assert!(p.is_validated());
        assert!(matches!(strict_decay_point(&op, 0.5), Err(Error::Divergence(_))));
    }

    #[test]
    fn compose_examples() {
        let path = two_system_path(&lin(0.5), &KFun::identity()).unwrap();
        let subs = vec![Subsystem::new(0..1, |x| x[0] * x[0]), Subsystem::new(1..2, |x| x[0] * x[0])];
        let clf = compose_lyapunov(subs.clone(), &path, vec![None, None]).unwrap();
        for x in [[1.0f64, 2.0], [0.3, -0.1], [0.0, 5.0]] {
            let want = (x[0] * x[0]).max(x[1] * x[1] / 2f64.sqrt());
            assert!((clf.eval(&x).unwrap() - want).abs() < 1e-12 * want.max(1.0));
        }
        assert_eq!(clf.chi(3.0).unwrap(), 0.0);
        let unchecked = OmegaPath::candidate(path.sigma.clone(), DecayMode::NonStrict);
        assert!(matches!(compose_lyapunov(subs, &unchecked, vec![None, None]), Err(Error::Refused(_))));
    }

    /// ẋ₁ = −x₁ + c·x₂, ẋ₂ = −x₂ + c·x₁ sampled at dt.
    fn coupled(c: f64, x0: [f64; 2], t_end: f64, dt: f64) -> Trajectory {
        let f = |_t: f64, x: &[f64], out: &mut [f64]| {
            out[0] = -x[0] + c * x[1];
            out[1] = -x[1] + c * x[0];
        };
        let steps = (t_end / dt).round() as usize;
        let mut x = x0.to_vec();
        let mut states = vec![x.clone()];
        let mut next = vec![0.0; 2];
        for k in 0..steps {
            rk4_step(&f, k as f64 * dt, &x, dt, &mut next);
            x.copy_from_slice(&next);
            states.push(x.clone());
        }
        let times = (0..=steps).map(|k| k as f64 * dt).collect();
        Trajectory::new(times, states, vec![], None).unwrap()
    }

    fn abs_clf(chi: Option<KFun>) -> CompositeLf {
        let path = two_system_path(&lin(0.5), &lin(0.5)).unwrap();
        let subs = vec![Subsystem::new(0..1, |x| x[0].abs()), Subsystem::new(1..2, |x| x[0].abs())];
        compose_lyapunov(subs, &path, vec![chi.clone(), chi]).unwrap()
    }

    #[test]
    fn audit_examples() {
        let clf = abs_clf(None);
        for x0 in [[1.0, -0.5], [1.0, 1.0], [-2.0, 2.0], [0.0, 1.0]] {
            let rep = dissipation_audit(&clf, &coupled(0.3, x0, 10.0, 1e-3), &[0.0], 0.0).unwrap();
            assert!(rep.pass, "{x0:?}: {:?}", rep.violations.first());
            assert_eq!(rep.checked, 10_000);
            assert!(rep.min_decrease > 0.0);
        }
        let rep = dissipation_audit(&clf, &coupled(1.5, [1.0, 1.0], 2.0, 1e-3), &[0.0], 0.0).unwrap();
        assert!(!rep.pass);
        assert!(!rep.violations.is_empty());
        // χ(‖u‖) above every level: nothing to check
        let clf = abs_clf(Some(KFun::identity()));
        let rep = dissipation_audit(&clf, &coupled(1.5, [1.0, 1.0], 2.0, 1e-3), &[1e9], 0.0).unwrap();
        assert!(rep.pass);
        assert_eq!(rep.checked, 0);
    }

    #[test]
    fn audit_flags_blow_up() {
        let clf = abs_clf(None);
        let mut t = coupled(0.3, [1.0, 0.0], 1.0, 1e-2);
        t.blow_up = Some(1.0);
        let rep = dissipation_audit(&clf, &t, &[0.0], 0.0).unwrap();
        assert_eq!(rep.warnings.len(), 1);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn two_system_paths_validate(p in 0.01..3.0f64, q in 0.01..3.0f64, e1 in 0.3..2.0f64, e2 in 0.3..2.0f64) {
            prop_assume!(p * q < 0.95);
            let chi12 = KFun::power(p, e1).unwrap();
            let chi21 = KFun::power(q, e2).unwrap();
            // feasibility on the grid requires the composed power to stay below id
            match two_system_path(&chi12, &chi21) {
                Ok(path) => {
                    let op = two_system_operator(&chi12, &chi21).unwrap();
                    prop_assert!(validate_path(&op, &path, &construction_grid()).unwrap().pass);
                }
                Err(Error::Infeasible(_)) => {}
                Err(e) => prop_assert!(false, "{e}"),
            }
        }

        #[test]
        fn ray_path_decays(w in proptest::collection::vec(0.0..0.4f64, 9), s in proptest::collection::vec(0.5..2.0f64, 3)) {
            let rows: Vec<Vec<f64>> = (0..3).map(|i| (0..3).map(|j| if i == j { 0.0 } else { w[3 * i + j] }).collect()).collect();
            let op = GainOperator::sum_form(GainMatrix::from_linear(&rows).unwrap());
            let lambda = decay_factor(&op, &s).unwrap();
            prop_assume!(lambda < 0.99 && lambda > 0.0);
            let path = path_from_point(&op, &s, lambda).unwrap();
            for t in geom_grid(1e-4, 1e4, 32) {
                let sig = path.eval(t).unwrap();
                let g = op.apply(&sig).unwrap();
                for i in 0..3 {
                    prop_assert!(g[i] <= lambda * sig[i] * (1.0 + 1e-12));
                }
            }
        }

        #[test]
        fn composite_sandwich(x in proptest::collection::vec(-5.0..5.0f64, 2), a in 0.1..0.9f64) {
            let path = two_system_path(&lin(a), &KFun::identity()).unwrap();
            // V₁ = x², V₂ = 2x² with ψ₁ = ψ₂ = (·)² and 2(·)²
            let subs = vec![Subsystem::new(0..1, |x| x[0] * x[0]), Subsystem::new(1..2, |x| 2.0 * x[0] * x[0])];
            let clf = compose_lyapunov(subs, &path, vec![None, None]).unwrap();
            let s2 = path.sigma[1].as_linear().unwrap();
            let lower = [x[0] * x[0], 2.0 * x[1] * x[1] / s2];
            let v = clf.eval(&x).unwrap();
            prop_assert!(lower[0].min(lower[1]) <= v + 1e-12);
            prop_assert!(v <= lower[0].max(lower[1]) + 1e-12);
        }

        #[test]
        fn rescaling_keeps_violation_set(c in 0.2..5.0f64, coupling in 0.1..1.6f64) {
            let t = coupled(coupling, [1.0, 0.4], 2.0, 1e-2);
            let subs = vec![Subsystem::new(0..1, |x| x[0].abs()), Subsystem::new(1..2, |x| x[0].abs())];
            let base = [KFun::identity(), lin(1.3)];
            let scaled = [lin(c), lin(1.3 * c)];
            let a = CompositeLf::candidate(subs.clone(), &base, vec![None, None]).unwrap();
            let b = CompositeLf::candidate(subs, &scaled, vec![None, None]).unwrap();
            let ra = dissipation_audit(&a, &t, &[0.0], 0.0).unwrap();
            let rb = dissipation_audit(&b, &t, &[0.0], 0.0).unwrap();
            let ta: Vec<f64> = ra.violations.iter().map(|v| v.t).collect();
            let tb: Vec<f64> = rb.violations.iter().map(|v| v.t).collect();
            prop_assert_eq!(ta, tb);
        }
    }
}
