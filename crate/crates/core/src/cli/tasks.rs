use super::{Artifact, TaskKind, TaskResult};
use crate::compfun::{KFun, KLFun};
use crate::error::{Error, Result};
use crate::gainops::{
    check_small_gain, kleene_star, max_cycle_geometric_mean, spectral_radius, Form, NetworkSpec, SampleOpts, SgcMode,
    Verdict,
};
use crate::netlyap::{
    compose_lyapunov, dissipation_audit, two_system_path, CompositeLf, DissipationReport, Subsystem,
};
use crate::ode::rk4_step;
use crate::pdelab::{
    coupled_linear_composite, dissipation_check, ensemble_s1, iss_envelope_check, regime, state_norm, Law,
    LyapFunctional, PdeModel, Scenario,
};
use crate::trajectory::Trajectory;
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::collections::BTreeMap;

const CAVEAT_SAMPLED: &str =
    "sampled falsification: verdicts for nonlinear gains come from a finite ray and level search, not a proof";
const CAVEAT_MBI: &str =
    "MBI versus MLIM: whether MBI is strictly weaker is open; sampled probes can falsify either but never separate them";
const CAVEAT_FINITE: &str =
    "finite-evidence: a truncated network cannot confirm gain uniformity over an infinite index set";
const CAVEAT_EMPIRICAL: &str =
    "decrease margin is measured per trajectory; no symbolic decay rate is certified";

fn parse<T: DeserializeOwned>(params: &Value) -> Result<T> {
    T::deserialize(params).map_err(|e| Error::Config(format!("params: {e}")))
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).unwrap_or(Value::Null)
}

fn csv_bytes(t: &Trajectory) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    t.write_csv(&mut buf)?;
    Ok(buf)
}

struct Out {
    pass: bool,
    verdicts: BTreeMap<String, String>,
    margins: BTreeMap<String, f64>,
    caveats: Vec<String>,
    details: Value,
    artifacts: Vec<Artifact>,
}

impl Out {
    fn new(pass: bool, details: Value) -> Out {
        Out { pass, verdicts: BTreeMap::new(), margins: BTreeMap::new(), caveats: vec![], details, artifacts: vec![] }
    }

    fn verdict(mut self, k: &str, v: impl ToString) -> Out {
        self.verdicts.insert(k.into(), v.to_string());
        self
    }

    fn margin(mut self, k: &str, v: f64) -> Out {
        self.margins.insert(k.into(), v);
        self
    }

    fn caveat(mut self, c: &str) -> Out {
        self.caveats.push(c.into());
        self
    }
}

pub(super) fn dispatch(kind: TaskKind, params: &Value, seed: u64, tol: Option<f64>) -> Result<TaskResult> {
    let o = match kind {
        TaskKind::SmallGain => small_gain(parse(params)?, seed)?,
        TaskKind::SpectralRadius => spectral(parse(params)?)?,
        TaskKind::KleeneStar => kleene(parse(params)?)?,
        TaskKind::OmegaPath => omega_path(parse(params)?)?,
        TaskKind::ComposeLf => compose_lf(parse(params)?)?,
        TaskKind::Simulate => simulate(parse(params)?)?,
        TaskKind::Dissipation => dissipation(parse(params)?, tol)?,
        TaskKind::Envelope => envelope(parse(params)?, tol)?,
        TaskKind::ThresholdSweep => sweep(parse(params)?, tol)?,
        TaskKind::Ensemble => ensemble(parse(params)?)?,
    };
    Ok(TaskResult {
        pass: o.pass,
        verdicts: o.verdicts,
        margins: o.margins,
        caveats: o.caveats,
        details: o.details,
        artifacts: o.artifacts,
    })
}

// ---- gain operators

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SmallGainParams {
    network: NetworkSpec,
    #[serde(default)]
    mode: Option<SgcMode>,
    #[serde(default)]
    samples: Option<SampleOpts>,
}

fn network_caveats(mut o: Out, net: &NetworkSpec, exact: bool) -> Out {
    if !exact {
        o = o.caveat(CAVEAT_SAMPLED);
    }
    if net.is_truncation() {
        o = o.caveat(CAVEAT_FINITE);
    }
    o.caveat(CAVEAT_MBI)
}

fn small_gain(p: SmallGainParams, seed: u64) -> Result<Out> {
    let op = p.network.build()?;
    let mode = p.mode.unwrap_or(SgcMode::NoJointIncrease);
    let opts = SampleOpts { seed, ..p.samples.unwrap_or_default() };
    let rep = check_small_gain(&op, &mode, &opts)?;
    let verdict = match rep.verdict {
        Verdict::Pass => "pass",
        Verdict::PassSampled => "pass-sampled",
        Verdict::Fail => "fail",
    };
    let mut o = Out::new(rep.passed(), to_value(&rep)).verdict("small_gain", verdict).verdict("mode", &rep.mode);
    if let Some(r) = rep.radius {
        o = o.margin("radius", r).margin("one_minus_radius", 1.0 - r);
    }
    Ok(network_caveats(o, &p.network, rep.exact))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkParams {
    network: NetworkSpec,
}

fn spectral(p: NetworkParams) -> Result<Out> {
    let op = p.network.build()?;
    let est = spectral_radius(&op)?;
    let mut details = json!({ "estimate": to_value(&est) });
    if op.form() == Form::Max {
        if let Some(w) = op.linear_weights() {
            details["max_cycle_geometric_mean"] = to_value(&max_cycle_geometric_mean(w, op.n()));
        }
    }
    let pass = est.converged && est.radius < 1.0;
    let o = Out::new(pass, details)
        .verdict("radius_below_one", est.radius < 1.0)
        .verdict("converged", est.converged)
        .margin("radius", est.radius)
        .margin("one_minus_radius", 1.0 - est.radius);
    Ok(network_caveats(o, &p.network, true))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct KleeneParams {
    network: NetworkSpec,
    s: Vec<f64>,
}

fn kleene(p: KleeneParams) -> Result<Out> {
    let op = p.network.build()?;
    match kleene_star(&op, &p.s) {
        Ok(k) => {
            let gq = op.apply(&k.q)?;
            let upper = p.s.iter().zip(&k.q).all(|(s, q)| s <= q);
            let fixed = gq.iter().zip(&k.q).all(|(g, q)| g <= q);
            let slack = gq.iter().zip(&k.q).map(|(g, q)| q - g).fold(f64::INFINITY, f64::min);
            let o = Out::new(upper && fixed, json!({ "q": k.q, "gamma_q": gq, "iterations": k.iterations }))
                .verdict("converged", true)
                .verdict("s_le_q", upper)
                .verdict("gamma_q_le_q", fixed)
                .margin("min_q_minus_gamma_q", slack);
            Ok(network_caveats(o, &p.network, true))
        }
        Err(Error::Divergence(msg)) => {
            let o = Out::new(false, json!({ "divergence": msg })).verdict("converged", false);
            Ok(network_caveats(o, &p.network, true))
        }
        Err(e) => Err(e),
    }
}

// ---- paths and composite functions

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct OmegaPathParams {
    chi12: KFun,
    chi21: KFun,
}

fn omega_path(p: OmegaPathParams) -> Result<Out> {
    match two_system_path(&p.chi12, &p.chi21) {
        Ok(path) => {
            let check = path.check.clone();
            let pass = path.is_validated();
            let mut o = Out::new(pass, to_value(&path)).verdict("path", if pass { "valid" } else { "invalid" });
            if let Some(c) = check {
                o = o.margin("worst_margin", c.worst_margin).margin("worst_r", c.worst_r);
            }
            Ok(o.caveat("Lipschitz bounds of the inverse path are estimated, not thresholded"))
        }
        Err(Error::Infeasible(msg)) => Ok(Out::new(false, json!({ "infeasible": msg })).verdict("path", "infeasible")),
        Err(e) => Err(e),
    }
}

fn default_pair_gain() -> KFun {
    KFun::linear(0.5).expect("0.5 is a valid slope")
}

fn default_x0() -> Vec<[f64; 2]> {
    vec![[1.0, -0.5], [1.0, 1.0], [-2.0, 2.0], [0.0, 1.0]]
}

fn default_pair_t() -> f64 {
    10.0
}

fn default_pair_dt() -> f64 {
    1e-3
}

/// Systems whose composite function the compose-lf task audits.
#[derive(Deserialize)]
#[serde(tag = "system", rename_all = "kebab-case", deny_unknown_fields)]
enum ComposeSystem {
    /// ẋ₁ = −x₁ + c·x₂, ẋ₂ = −x₂ + c·x₁ with Vᵢ = |xᵢ|.
    OdePair {
        coupling: f64,
        #[serde(default = "default_pair_gain")]
        chi12: KFun,
        #[serde(default = "default_pair_gain")]
        chi21: KFun,
        #[serde(default = "default_x0")]
        x0: Vec<[f64; 2]>,
        #[serde(default = "default_pair_t")]
        t_end: f64,
        #[serde(default = "default_pair_dt")]
        dt: f64,
        #[serde(default)]
        margin: f64,
    },
    CoupledLinearRd {
        scenario: Scenario,
        eps: f64,
        #[serde(default)]
        margin: f64,
    },
}

fn pair_trajectory(c: f64, x0: [f64; 2], t_end: f64, dt: f64) -> Result<Trajectory> {
    if !(t_end > 0.0 && dt > 0.0 && dt <= t_end && c.is_finite()) {
        return Err(Error::Config("need finite coupling and 0 < dt <= t_end".into()));
    }
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
    Trajectory::new((0..=steps).map(|k| k as f64 * dt).collect(), states, vec![], None)
}

fn summarize_audits(reps: &[DissipationReport], clf: &CompositeLf) -> Out {
    let pass = reps.iter().all(|r| r.pass);
    let violations: usize = reps.iter().map(|r| r.violations.len()).sum();
    let min_dec = reps.iter().map(|r| r.min_decrease).fold(f64::INFINITY, f64::min);
    Out::new(pass, json!({ "audits": to_value(&reps) }))
        .verdict("decreasing", pass)
        .verdict("certified", clf.is_certified())
        .margin("violations", violations as f64)
        .margin("min_decrease", min_dec)
        .caveat(CAVEAT_EMPIRICAL)
}

fn compose_lf(p: ComposeSystem) -> Result<Out> {
    match p {
        ComposeSystem::OdePair { coupling, chi12, chi21, x0, t_end, dt, margin } => {
            let path = match two_system_path(&chi12, &chi21) {
                Ok(path) => path,
                Err(Error::Infeasible(msg)) => {
                    return Ok(Out::new(false, json!({ "infeasible": msg })).verdict("path", "infeasible"))
                }
                Err(e) => return Err(e),
            };
            let subs = vec![Subsystem::new(0..1, |x| x[0].abs()), Subsystem::new(1..2, |x| x[0].abs())];
            let clf = compose_lyapunov(subs, &path, vec![None, None])?;
            let reps: Vec<DissipationReport> = x0
                .par_iter()
                .map(|x| dissipation_audit(&clf, &pair_trajectory(coupling, *x, t_end, dt)?, &[0.0], margin))
                .collect::<Result<_>>()?;
            Ok(summarize_audits(&reps, &clf).verdict("path", "valid"))
        }
        ComposeSystem::CoupledLinearRd { scenario, eps, margin } => {
            let (model, traj) = scenario.run()?;
            let cc = coupled_linear_composite(&model, eps)?;
            let rep = dissipation_audit(&cc.clf, &traj, &[0.0], margin)?;
            let mut o = summarize_audits(std::slice::from_ref(&rep), &cc.clf)
                .verdict("path", if cc.path_valid { "valid" } else { "infeasible" })
                .margin("loop_gain", cc.loop_gain)
                .margin("gamma12", cc.gamma12)
                .margin("gamma21", cc.gamma21);
            o.artifacts.push(Artifact { name: "compose-lf.trajectory.csv".into(), bytes: csv_bytes(&traj)? });
            Ok(o)
        }
    }
}

// ---- simulations

fn norms(model: &PdeModel, traj: &Trajectory) -> Vec<f64> {
    traj.states.iter().map(|x| state_norm(model, x)).collect()
}

fn simulate(s: Scenario) -> Result<Out> {
    let (model, traj) = s.run()?;
    let n = norms(&model, &traj);
    let (n0, n1) = (n[0], *n.last().unwrap_or(&0.0));
    let sup = n.iter().copied().fold(0.0, f64::max);
    let mut o = Out::new(
        traj.blow_up.is_none(),
        json!({ "samples": traj.len(), "t_final": traj.times.last(), "blow_up": traj.blow_up }),
    )
    .verdict("bounded", traj.blow_up.is_none())
    .margin("norm_initial", n0)
    .margin("norm_final", n1)
    .margin("norm_sup", sup);
    if n0 > 0.0 {
        o = o.margin("growth", n1 / n0);
    }
    if let Ok(r) = regime(&model.kind(), model.length()) {
        o = o.verdict("predicted", if r.predicted_stable { "stable" } else { "unstable" });
    }
    o.artifacts.push(Artifact { name: "simulate.trajectory.csv".into(), bytes: csv_bytes(&traj)? });
    Ok(o)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DissipationParams {
    scenario: Scenario,
    law: Law,
    #[serde(default)]
    functional: Option<LyapFunctional>,
}

fn dissipation(p: DissipationParams, tol: Option<f64>) -> Result<Out> {
    let (model, traj) = p.scenario.run()?;
    let f = match p.functional {
        Some(f) => f,
        None => p.law.functional(&model)?,
    };
    let rep = dissipation_check(&model, &f, &traj, &p.law, tol.unwrap_or(0.02))?;
    let mut o = Out::new(rep.pass, to_value(&rep))
        .verdict("law_holds", rep.pass)
        .verdict("certifies_decay", rep.certifies_decay)
        .margin("worst_excess", rep.worst_excess)
        .margin("decay_coefficient", rep.decay_coefficient)
        .margin("violations", rep.violation_count as f64);
    if traj.blow_up.is_some() {
        o = o.caveat("trajectory truncated at blow-up");
    }
    if p.scenario.stride > 1 {
        o = o.caveat("rates are difference quotients over the recorded spacing; stride > 1 coarsens them");
    }
    Ok(o)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EnvelopeParams {
    scenario: Scenario,
    beta: KLFun,
    #[serde(default)]
    gamma: Option<KFun>,
    /// Defaults to the sup norm of the scenario input.
    #[serde(default)]
    u_norm: Option<f64>,
}

fn envelope(p: EnvelopeParams, tol: Option<f64>) -> Result<Out> {
    let (model, traj) = p.scenario.run()?;
    let u_norm = p.u_norm.unwrap_or_else(|| p.scenario.u.sup_norm());
    let default_tol = if p.scenario.model.name() == "transport" { 0.05 } else { 0.01 };
    let norm = |x: &[f64]| state_norm(&model, x);
    let rep = iss_envelope_check(&traj, &p.beta, p.gamma.as_ref(), u_norm, &norm, tol.unwrap_or(default_tol))?;
    Ok(Out::new(rep.pass, to_value(&rep))
        .verdict("inside_envelope", rep.pass)
        .margin("worst_ratio", rep.worst_ratio)
        .margin("worst_t", rep.worst_t))
}

fn default_t_ensemble() -> f64 {
    3.0
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EnsembleParams {
    k: usize,
    #[serde(default = "default_t_ensemble")]
    t_end: f64,
}

fn ensemble(p: EnsembleParams) -> Result<Out> {
    if p.k > 64 {
        return Err(Error::Config(format!("at most 64 modes, got {}", p.k)));
    }
    let r = ensemble_s1(p.k, p.t_end)?;
    let worst = r.peaks.iter().map(|m| m.peak / m.k as f64).fold(f64::INFINITY, f64::min);
    let mut o = Out::new(r.linear_growth, json!({ "c": r.c, "tol": r.tol, "peaks": to_value(&r.peaks) }))
        .verdict("linear_growth", r.linear_growth)
        .margin("min_peak_over_k", worst)
        .margin("c", r.c);
    o.artifacts.push(Artifact { name: "ensemble.trajectory.csv".into(), bytes: csv_bytes(&r.trajectory)? });
    Ok(o)
}

// ---- threshold sweeps

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RateClass {
    Decay,
    Marginal,
    Growth,
}

impl RateClass {
    pub fn name(self) -> &'static str {
        match self {
            RateClass::Decay => "decay",
            RateClass::Marginal => "marginal",
            RateClass::Growth => "growth",
        }
    }
}

/// Mean exponential rate ln(‖x(T)‖/‖x(0)‖)/T; blow-up counts as +∞.
/// Saturating growth (a nonzero steady state) still shows up as positive.
pub fn mean_rate(traj: &Trajectory, norm: &[f64]) -> f64 {
    if traj.blow_up.is_some() {
        return f64::INFINITY;
    }
    let last = traj.len() - 1;
    let span = traj.times[last] - traj.times[0];
    if last == 0 || span <= 0.0 {
        return 0.0;
    }
    let (a, b) = (norm[0], norm[last]);
    match (a > 0.0, b > 0.0) {
        (true, true) => (b / a).ln() / span,
        (true, false) => f64::NEG_INFINITY,
        (false, true) => f64::INFINITY,
        (false, false) => 0.0,
    }
}

pub fn classify_rate(rate: f64, band: f64) -> RateClass {
    if rate < -band {
        RateClass::Decay
    } else if rate > band {
        RateClass::Growth
    } else {
        RateClass::Marginal
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepParams {
    scenario: Scenario,
    /// Field of the model to vary.
    parameter: String,
    values: Vec<f64>,
    /// Values are multiples of the critical value.
    #[serde(default)]
    relative: bool,
}

#[derive(Serialize)]
struct SweepRow {
    value: f64,
    regime_value: f64,
    critical: f64,
    predicted: RateClass,
    observed: RateClass,
    rate: f64,
    agrees: bool,
}

fn with_param(s: &Scenario, name: &str, v: f64) -> Result<Scenario> {
    let mut m = serde_json::to_value(s.model).map_err(|e| Error::Config(e.to_string()))?;
    match m.get_mut(name) {
        Some(slot) if name != "kind" => *slot = json!(v),
        _ => return Err(Error::Config(format!("model {} has no parameter {name}", s.model.name()))),
    }
    let model = serde_json::from_value(m).map_err(|e| Error::Config(format!("{name} = {v}: {e}")))?;
    Ok(Scenario { model, ..s.clone() })
}

fn sweep(p: SweepParams, tol: Option<f64>) -> Result<Out> {
    if p.values.is_empty() {
        return Err(Error::Config("sweep grid is empty".into()));
    }
    if let Some(v) = p.values.iter().find(|v| !v.is_finite()) {
        return Err(Error::Config(format!("sweep value {v} is not finite")));
    }
    let band = tol.unwrap_or(1e-2);
    let base = regime(&p.scenario.model, p.scenario.length.unwrap_or(1.0))?;
    let scale = if p.relative {
        if base.threshold.parameter != p.parameter {
            return Err(Error::Config(format!(
                "relative values need parameter {} (the thresholded quantity)",
                base.threshold.parameter
            )));
        }
        base.threshold.critical
    } else {
        1.0
    };
    let rows: Vec<SweepRow> = p
        .values
        .par_iter()
        .map(|&v| {
            let s = with_param(&p.scenario, &p.parameter, v * scale)?;
            let (model, traj) = s.run()?;
            let r = regime(&model.kind(), model.length())?;
            let crit = r.threshold.critical;
            let predicted = if (r.value - crit).abs() <= 1e-9 * crit.abs().max(1.0) {
                RateClass::Marginal
            } else if r.predicted_stable {
                RateClass::Decay
            } else {
                RateClass::Growth
            };
            let rate = mean_rate(&traj, &norms(&model, &traj));
            let observed = classify_rate(rate, band);
            Ok(SweepRow {
                value: v * scale,
                regime_value: r.value,
                critical: crit,
                predicted,
                observed,
                rate,
                agrees: predicted == observed,
            })
        })
        .collect::<Result<_>>()?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["parameter", "verdict", "margin", "predicted", "regime_value", "critical"])?;
    for r in &rows {
        w.write_record([
            r.value.to_string(),
            r.observed.name().to_string(),
            r.rate.to_string(),
            r.predicted.name().to_string(),
            r.regime_value.to_string(),
            r.critical.to_string(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    let pass = rows.iter().all(|r| r.agrees);
    let agree = rows.iter().filter(|r| r.agrees).count();
    let mut o = Out::new(pass, json!({ "parameter": p.parameter, "threshold": to_value(&base.threshold), "rows": to_value(&rows) }))
        .verdict("matches_threshold", pass)
        .margin("agreeing_points", agree as f64)
        .margin("critical", base.threshold.critical);
    for (i, r) in rows.iter().enumerate() {
        o = o.verdict(&format!("point_{i:03}"), format!("{} ({})", r.observed.name(), r.value));
    }
    o.artifacts.push(Artifact { name: "threshold-sweep.csv".into(), bytes });
    Ok(o.caveat("observed class uses the mean exponential rate of the state norm; run sweeps with zero input"))
}
