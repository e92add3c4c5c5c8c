use super::functional::{grad_sq, l2_sq, lyap_eval, LyapFunctional};
use super::model::{PdeKind, PdeModel};
use super::spectra::ks_sigma_on;
use crate::compfun::{KFun, KLFun};
use crate::error::{Error, Result};
use crate::netlyap::{compose_lyapunov, two_system_path, CompositeLf, Subsystem};
use crate::trajectory::Trajectory;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

const MAX_LISTED: usize = 32;

/// Dissipation law of a model kind; physical parameters come from the model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Law {
    /// V̇ ≤ −μV + u(0)² for V = ∫e^{−μz}x².
    Transport { mu: f64 },
    /// V̇ ≤ (2b + ε − 2(π/L)²)V + (1/ε)∫v².
    Burgers { eps: f64 },
    /// V̇ ≤ (ε − 2σ(λ))V + (1/ε)∫v². σ is computed on the model grid if absent.
    KuramotoSivashinsky {
        eps: f64,
        #[serde(default)]
        sigma: Option<f64>,
    },
    /// V̇ ≤ ((ε − 2μ)(π/2L)² + ε + 2a)V − (2/L)V² + (μ²/ε)u(0)².
    GinzburgLandau { eps: f64 },
    /// V̇ ≤ −2c(π/L)²·W/(1+W) + 2‖v‖_∞ for V = ln(1+W), W = ∫x².
    IissRd,
    /// V̇ ≤ (1/a − 1)‖x‖²_{H¹₀} wherever a‖v‖_{L²} ≤ ‖x‖_{H¹₀}.
    ReactionDiffusionH10 { a: f64 },
}

impl Law {
    pub fn name(&self) -> &'static str {
        match self {
            Law::Transport { .. } => "transport",
            Law::Burgers { .. } => "burgers",
            Law::KuramotoSivashinsky { .. } => "kuramoto-sivashinsky",
            Law::GinzburgLandau { .. } => "ginzburg-landau",
            Law::IissRd => "iiss-rd",
            Law::ReactionDiffusionH10 { .. } => "reaction-diffusion-h10",
        }
    }

    /// The functional the law is stated for, on `model`.
    pub fn functional(&self, model: &PdeModel) -> Result<LyapFunctional> {
        let kind = model.kind();
        let ok = match (self, kind) {
            (Law::Transport { .. }, PdeKind::Transport) => true,
            (Law::Burgers { .. }, PdeKind::Burgers { .. }) => true,
            (Law::Burgers { .. }, PdeKind::HeatReaction { kappa, .. }) => kappa == 0.0,
            (Law::KuramotoSivashinsky { .. }, PdeKind::KuramotoSivashinsky { .. }) => true,
            (Law::GinzburgLandau { .. }, PdeKind::GinzburgLandau { .. }) => true,
            (Law::IissRd, PdeKind::IissRd { .. }) => true,
            (Law::ReactionDiffusionH10 { .. }, PdeKind::HeatReaction { b, kappa }) => b == 0.0 && kappa >= 0.0,
            _ => false,
        };
        if !ok {
            return Err(Error::Config(format!("law {} does not apply to {}", self.name(), kind.name())));
        }
        let eps_ok = |e: f64| {
            if e > 0.0 && e.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("eps must be finite and > 0, got {e}")))
            }
        };
        Ok(match *self {
            Law::Transport { mu } => {
                eps_ok(mu)?;
                LyapFunctional::WeightedL2 { mu }
            }
            Law::Burgers { eps } | Law::KuramotoSivashinsky { eps, .. } | Law::GinzburgLandau { eps } => {
                eps_ok(eps)?;
                LyapFunctional::L2
            }
            Law::IissRd => LyapFunctional::Log1pL2,
            Law::ReactionDiffusionH10 { a } => {
                if !(a > 1.0) {
                    return Err(Error::Config(format!("gain factor a must be > 1, got {a}")));
                }
                match kind {
                    PdeKind::HeatReaction { kappa, .. } => LyapFunctional::Potential { kappa },
                    _ => unreachable!(),
                }
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LawViolation {
    pub t: f64,
    pub v: f64,
    pub rate: f64,
    /// Law right-hand side plus tolerance.
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LawReport {
    pub law: String,
    pub functional: String,
    pub samples: usize,
    pub checked: usize,
    pub violation_count: usize,
    /// The first few violations.
    pub violations: Vec<LawViolation>,
    /// Largest (rate − rhs)/scale; ≤ rel_tol means the sample passed.
    pub worst_excess: f64,
    pub worst_t: f64,
    pub pass: bool,
    /// Coefficient of V (or of the decay rate) in the law.
    pub decay_coefficient: f64,
    /// The law forces decay of V without input.
    pub certifies_decay: bool,
    pub v_start: f64,
    pub v_end: f64,
    pub growth: bool,
    pub warnings: Vec<String>,
}

/// (decay part, input part, law coefficient) of the right-hand side.
fn law_terms(law: &Law, model: &PdeModel, x: &[f64], v: f64, u: f64, sigma: f64) -> (f64, f64, f64) {
    let l = model.length();
    let h = model.h();
    match (*law, model.kind()) {
        (Law::Transport { mu }, _) => (-mu * v, u * u, -mu),
        (Law::Burgers { eps }, PdeKind::Burgers { b, .. } | PdeKind::HeatReaction { b, .. }) => {
            let c = 2.0 * b + eps - 2.0 * (PI / l).powi(2);
            (c * v, l * u * u / eps, c)
        }
        (Law::KuramotoSivashinsky { eps, .. }, _) => {
            let c = eps - 2.0 * sigma;
            (c * v, l * u * u / eps, c)
        }
        (Law::GinzburgLandau { eps }, PdeKind::GinzburgLandau { mu, a }) => {
            let c = gl_coefficient(mu, a, eps, l);
            (c * v - 2.0 * v * v / l, mu * mu * u * u / eps, c)
        }
        (Law::IissRd, PdeKind::IissRd { c, .. }) => {
            let w = l2_sq(h, x);
            let rate = 2.0 * c * (PI / l).powi(2);
            (-rate * w / (1.0 + w), 2.0 * u.abs(), -rate)
        }
        (Law::ReactionDiffusionH10 { a }, _) => {
            let c = 1.0 / a - 1.0;
            (c * grad_sq(h, x), 0.0, c)
        }
        _ => unreachable!("law checked against model"),
    }
}

/// (ε − 2μ)(π/2L)² + ε + 2a.
pub fn gl_coefficient(mu: f64, a: f64, eps: f64, length: f64) -> f64 {
    (eps - 2.0 * mu) * (PI / (2.0 * length)).powi(2) + eps + 2.0 * a
}

/// Bound on ‖x(t)‖_{L²} for the Ginzburg–Landau model from its law: V stays
/// below max(V(0), V*) with V* the positive root of kV − (2/L)V² + μ²u²/ε,
/// minimized over ε on a log grid.
pub fn gl_state_bound(model: &PdeModel, v0: f64, u_sup: f64) -> Result<f64> {
    let PdeKind::GinzburgLandau { mu, a } = model.kind() else {
        return Err(Error::Config("state bound applies to ginzburg-landau only".into()));
    };
    let l = model.length();
    let mut best = f64::INFINITY;
    for i in 0..=400 {
        let eps = 10f64.powf(-6.0 + 9.0 * i as f64 / 400.0);
        let k = gl_coefficient(mu, a, eps, l);
        let c = mu * mu * u_sup * u_sup / eps;
        let vstar = (k + (k * k + 8.0 * c / l).sqrt()) * l / 4.0;
        best = best.min(vstar);
    }
    Ok(v0.max(best).sqrt())
}

/// Compare forward differences of the law's functional along `traj` with
/// the law evaluated at the left snapshot. A sample passes when
/// rate ≤ rhs + rel_tol·(|decay part| + |input part|), plus a rounding floor.
pub fn dissipation_check(
    model: &PdeModel,
    f: &LyapFunctional,
    traj: &Trajectory,
    law: &Law,
    rel_tol: f64,
) -> Result<LawReport> {
    let want = law.functional(model)?;
    if &want != f {
        return Err(Error::Config(format!(
            "law {} is stated for {}, got {}",
            law.name(),
            want.name(),
            f.name()
        )));
    }
    if !(rel_tol >= 0.0) {
        return Err(Error::Domain(format!("rel_tol must be ≥ 0, got {rel_tol}")));
    }
    let sigma = match (*law, model.kind()) {
        (Law::KuramotoSivashinsky { sigma: Some(s), .. }, _) => s,
        (Law::KuramotoSivashinsky { sigma: None, .. }, PdeKind::KuramotoSivashinsky { lambda, .. }) => {
            ks_sigma_on(model.n(), lambda, model.length())?
        }
        _ => 0.0,
    };
    let vs = traj.states.iter().map(|x| lyap_eval(f, model, x)).collect::<Result<Vec<_>>>()?;
    let mut rep = LawReport {
        law: law.name().into(),
        functional: f.name().into(),
        samples: traj.len(),
        checked: 0,
        violation_count: 0,
        violations: vec![],
        worst_excess: f64::NEG_INFINITY,
        worst_t: 0.0,
        pass: true,
        decay_coefficient: 0.0,
        certifies_decay: false,
        v_start: vs.first().copied().unwrap_or(0.0),
        v_end: vs.last().copied().unwrap_or(0.0),
        growth: false,
        warnings: vec![],
    };
    rep.growth = rep.v_end > rep.v_start * (1.0 + 1e-9) && rep.v_end > 0.0;
    if let Some(t) = traj.blow_up {
        rep.warnings.push(format!("trajectory blew up at t = {t}; check truncated there"));
    }
    let zero = [0.0];
    let x0 = traj.states.first().map(|v| v.as_slice()).unwrap_or(&zero);
    rep.decay_coefficient = law_terms(law, model, x0, 0.0, 0.0, sigma).2;
    rep.certifies_decay = rep.decay_coefficient < 0.0;
    if !rep.certifies_decay {
        rep.warnings.push(format!(
            "law coefficient {:.4e} ≥ 0: no decay guarantee for these parameters",
            rep.decay_coefficient
        ));
    }
    if rep.growth {
        rep.warnings.push(format!("V grew from {:.4e} to {:.4e}", rep.v_start, rep.v_end));
    }
    if traj.len() < 2 {
        return Ok(rep);
    }
    let dt = traj
        .uniform_dt()
        .ok_or_else(|| Error::Domain("dissipation check needs uniformly sampled times".into()))?;
    for k in 0..traj.len() - 1 {
        let u = traj.inputs.get(k).and_then(|v| v.first()).copied().unwrap_or(0.0);
        let x = &traj.states[k];
        if let Law::ReactionDiffusionH10 { a } = law {
            let u_l2 = u.abs() * model.length().sqrt();
            if a * u_l2 > grad_sq(model.h(), x).sqrt() {
                continue;
            }
        }
        rep.checked += 1;
        let rate = (vs[k + 1] - vs[k]) / dt;
        let (decay, input, _) = law_terms(law, model, x, vs[k], u, sigma);
        let rhs = decay + input;
        let mag = decay.abs() + input.abs();
        // rounding floor of the difference quotient
        let floor = 1e-12 * (vs[k].abs() + vs[k + 1].abs()) / dt;
        let over = rate - rhs - floor;
        let excess = if mag > 0.0 {
            over / mag
        } else if over > 0.0 {
            f64::INFINITY
        } else {
            0.0
        };
        if excess > rep.worst_excess {
            rep.worst_excess = excess;
            rep.worst_t = traj.times[k];
        }
        let bound = rhs + rel_tol * mag + floor;
        if rate > bound {
            rep.pass = false;
            rep.violation_count += 1;
            if rep.violations.len() < MAX_LISTED {
                rep.violations.push(LawViolation { t: traj.times[k], v: vs[k], rate, bound });
            }
        }
    }
    Ok(rep)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeReport {
    pub samples: usize,
    pub pass: bool,
    /// max ‖x(t)‖ / (β(‖x₀‖,t) + γ(‖u‖)), 0 for the zero trajectory.
    pub worst_ratio: f64,
    pub worst_t: f64,
    pub rel_tol: f64,
}

/// Check ‖x(t)‖ ≤ β(‖x(0)‖, t) + γ(u_norm) at every sample, up to `rel_tol`.
/// `gamma = None` is the zero gain.
pub fn iss_envelope_check(
    traj: &Trajectory,
    beta: &KLFun,
    gamma: Option<&KFun>,
    u_norm: f64,
    norm: &dyn Fn(&[f64]) -> f64,
    rel_tol: f64,
) -> Result<EnvelopeReport> {
    let g = match gamma {
        Some(g) => g.eval(u_norm)?,
        None => 0.0,
    };
    let r0 = traj.states.first().map_or(0.0, |x| norm(x));
    let mut rep = EnvelopeReport { samples: traj.len(), pass: true, worst_ratio: 0.0, worst_t: 0.0, rel_tol };
    for (t, x) in traj.times.iter().zip(&traj.states) {
        let nx = norm(x);
        let bound = beta.eval(r0, *t)? + g;
        let ratio = if bound > 0.0 {
            nx / bound
        } else if nx > 0.0 {
            f64::INFINITY
        } else {
            0.0
        };
        if ratio > rep.worst_ratio {
            rep.worst_ratio = ratio;
            rep.worst_t = *t;
        }
    }
    rep.pass = rep.worst_ratio <= 1.0 + rel_tol;
    Ok(rep)
}

/// Composite Lyapunov function of the coupled linear diffusions built from
/// Vᵢ = (d/π)²‖xᵢ‖²/(2cᵢ) and the linear gains γ₁₂, γ₂₁ with margin ε.
#[derive(Debug, Clone)]
pub struct CoupledComposite {
    pub clf: CompositeLf,
    pub gamma12: f64,
    pub gamma21: f64,
    /// γ₁₂·γ₂₁; below 1 exactly when the small-gain condition holds.
    pub loop_gain: f64,
    pub path_valid: bool,
}

pub fn coupled_linear_composite(model: &PdeModel, eps: f64) -> Result<CoupledComposite> {
    let PdeKind::CoupledLinearRd { c1, c2, a12, a21, d } = model.kind() else {
        return Err(Error::Config("composite applies to coupled-linear-rd only".into()));
    };
    if a12 == 0.0 || a21 == 0.0 {
        return Err(Error::Config("both couplings must be nonzero".into()));
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Config(format!("eps must lie in (0,1), got {eps}")));
    }
    let r2 = (d / PI).powi(2);
    let g12 = c2 / c1.powi(3) * r2 * r2 * (a12 / (1.0 - eps)).powi(2);
    let g21 = c1 / c2.powi(3) * r2 * r2 * (a21 / (1.0 - eps)).powi(2);
    let n = model.n();
    let h = model.h();
    let p1 = r2 / (2.0 * c1);
    let p2 = r2 / (2.0 * c2);
    let subs = || {
        vec![
            Subsystem::new(0..n, move |x| p1 * l2_sq(h, x)),
            Subsystem::new(n..2 * n, move |x| p2 * l2_sq(h, x)),
        ]
    };
    let chi = vec![None, None];
    let (k12, k21) = (KFun::linear(g12)?, KFun::linear(g21)?);
    let (clf, path_valid) = match two_system_path(&k12, &k21) {
        Ok(path) => (compose_lyapunov(subs(), &path, chi)?, true),
        Err(Error::Infeasible(_)) => {
            let sigma = vec![KFun::identity(), KFun::linear((g21 / g12).sqrt())?];
            (CompositeLf::candidate(subs(), &sigma, chi)?, false)
        }
        Err(e) => return Err(e),
    };
    Ok(CoupledComposite { clf, gamma12: g12, gamma21: g21, loop_gain: g12 * g21, path_valid })
}

/// Sampled feasibility region of the gain constants (a, b) for the coupled
/// nonlinear diffusions: a < q₁², b < (3q₂/4)⁴ and ab > 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainRegion {
    /// q₁²(3q₂/4)⁴, the supremum of ab over the box.
    pub sup_product: f64,
    pub sampled: usize,
    pub feasible_pairs: usize,
    pub feasible: bool,
    /// Pair with the largest smallest log-margin.
    pub best: Option<(f64, f64)>,
}

pub fn nonlinear_rd_gain_region(q1: f64, q2: f64, grid: usize) -> Result<GainRegion> {
    if !(q1 > 0.0 && q2 > 0.0) || grid < 2 {
        return Err(Error::Config("need q1, q2 > 0 and a grid of at least 2 points".into()));
    }
    let amax = q1 * q1;
    let bmax = (0.75 * q2).powi(4);
    let frac = |i: usize| 10f64.powf(-4.0 * (1.0 - i as f64 / grid as f64)) * (1.0 - 1e-9);
    let mut rep = GainRegion { sup_product: amax * bmax, sampled: 0, feasible_pairs: 0, feasible: false, best: None };
    let mut best_margin = f64::NEG_INFINITY;
    for i in 0..=grid {
        for j in 0..=grid {
            let (a, b) = (amax * frac(i), bmax * frac(j));
            rep.sampled += 1;
            if a * b > 1.0 {
                rep.feasible_pairs += 1;
                let m = (amax / a).ln().min((bmax / b).ln()).min((a * b).ln());
                if m > best_margin {
                    best_margin = m;
                    rep.best = Some((a, b));
                }
            }
        }
    }
    rep.feasible = rep.feasible_pairs > 0;
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netlyap::dissipation_audit;
    use crate::pdelab::functional::l2_norm;
    use crate::pdelab::model::{build_model, simulate, simulate_strided, ModelSpec, Signal};

    fn model(kind: PdeKind, n: usize) -> PdeModel {
        build_model(&ModelSpec::new(kind, n)).unwrap()
    }

    fn sine(m: &PdeModel, amp: f64) -> Vec<f64> {
        m.nodes().iter().map(|z| amp * (PI * z / m.length()).sin()).collect()
    }

    #[test]
    fn burgers_law_holds() {
        let m = model(PdeKind::Burgers { a: 1.0, b: 0.5 * PI * PI }, 256);
        let tr = simulate(&m, &sine(&m, 1.0), &Signal::Zero, 0.5, 1e-3).unwrap();
        let law = Law::Burgers { eps: 0.1 * PI * PI };
        let rep = dissipation_check(&m, &LyapFunctional::L2, &tr, &law, 0.02).unwrap();
        assert!(rep.pass && rep.certifies_decay && !rep.growth, "{rep:?}");
        assert_eq!(rep.checked, 500);
        // the wrong functional is refused
        assert!(dissipation_check(&m, &LyapFunctional::H10Seminorm, &tr, &law, 0.02).is_err());
    }

    #[test]
    fn burgers_law_with_input() {
        let m = model(PdeKind::Burgers { a: 1.0, b: 2.0 }, 128);
        let tr = simulate(&m, &sine(&m, 0.5), &Signal::Sine { amp: 1.0, freq: 2.0, offset: 0.3 }, 1.0, 1e-3).unwrap();
        let rep = dissipation_check(&m, &LyapFunctional::L2, &tr, &Law::Burgers { eps: 1.0 }, 0.02).unwrap();
        assert!(rep.pass, "{rep:?}");
    }

    #[test]
    fn ks_law_holds() {
        let m = model(PdeKind::KuramotoSivashinsky { lambda: 2.0 * PI * PI, b: 1.0 }, 256);
        let x0: Vec<f64> = m
            .nodes()
            .iter()
            .map(|z| {
                let s = (PI * z).sin();
                0.1 * s * s * (1.0 + 0.5 * (3.0 * PI * z).cos() - 0.3 * (5.0 * PI * z).sin())
            })
            .collect();
        let tr = simulate(&m, &x0, &Signal::Zero, 0.05, 1e-5).unwrap();
        let sigma = ks_sigma_on(256, 2.0 * PI * PI, 1.0).unwrap();
        assert!(sigma > 0.0);
        let law = Law::KuramotoSivashinsky { eps: 0.1 * sigma, sigma: None };
        let rep = dissipation_check(&m, &LyapFunctional::L2, &tr, &law, 0.02).unwrap();
        assert!(rep.pass && rep.certifies_decay, "{rep:?}");
    }

    #[test]
    fn gl_law_and_growth_flag() {
        let m = model(PdeKind::GinzburgLandau { mu: 1.0, a: 1.0 }, 256);
        let x0: Vec<f64> = m.nodes().iter().map(|z| (0.5 * PI * z).cos()).collect();
        let tr = simulate(&m, &x0, &Signal::Zero, 1.0, 1e-3).unwrap();
        let law = Law::GinzburgLandau { eps: 0.5 };
        let rep = dissipation_check(&m, &LyapFunctional::L2, &tr, &law, 0.02).unwrap();
        assert!(rep.pass && rep.certifies_decay && !rep.growth, "{rep:?}");

        let m = model(PdeKind::GinzburgLandau { mu: 1.0, a: 3.0 }, 256);
        let x0: Vec<f64> = m.nodes().iter().map(|z| 1e-3 * (0.5 * PI * z).cos()).collect();
        let tr = simulate(&m, &x0, &Signal::Zero, 3.0, 1e-3).unwrap();
        let rep = dissipation_check(&m, &LyapFunctional::L2, &tr, &law, 0.02).unwrap();
        assert!(rep.growth && !rep.certifies_decay && !rep.warnings.is_empty(), "{rep:?}");
    }

    #[test]
    fn gl_bound_with_boundary_input() {
        let mu = 1.0;
        let m = model(PdeKind::GinzburgLandau { mu, a: 0.5 * mu * PI * PI / 4.0 }, 256);
        let tr = simulate_strided(&m, &vec![0.0; 256], &Signal::Const { value: 0.1 }, 5.0, 1e-3, 10).unwrap();
        let bound = gl_state_bound(&m, 0.0, 0.1).unwrap();
        let sup = tr.states.iter().map(|x| l2_norm(m.h(), x)).fold(0.0, f64::max);
        assert!(sup > 0.0 && sup <= bound, "{sup} vs {bound}");
        let rep = dissipation_check(&m, &LyapFunctional::L2, &tr, &Law::GinzburgLandau { eps: 0.3 }, 0.02).unwrap();
        assert!(rep.pass, "{rep:?}");
    }

    #[test]
    fn transport_law_and_envelope() {
        let m = model(PdeKind::Transport, 201);
        let mu = 1.0;
        let x0 = sine(&m, 1.0);
        let tr = simulate(&m, &x0, &Signal::Const { value: 0.4 }, 2.0, m.h()).unwrap();
        let f = LyapFunctional::WeightedL2 { mu };
        let rep = dissipation_check(&m, &f, &tr, &Law::Transport { mu }, 0.05).unwrap();
        assert!(rep.pass, "{rep:?}");
        let e = (mu / 2.0).exp();
        let beta = KLFun::closed(KFun::linear(e).unwrap(), mu / 2.0).unwrap();
        let gamma = KFun::linear(e / mu.sqrt()).unwrap();
        let h = m.h();
        let env = iss_envelope_check(&tr, &beta, Some(&gamma), 0.4, &|x| l2_norm(h, x), 0.05).unwrap();
        assert!(env.pass, "{env:?}");
    }

    #[test]
    fn heat_envelope_and_zero_trajectory() {
        let m = model(PdeKind::Burgers { a: 0.0, b: 0.0 }, 256);
        // backward Euler lags e^{−π²t} by about e^{π⁴·dt·t/2}
        let tr = simulate(&m, &sine(&m, 2.0), &Signal::Zero, 0.3, 1e-4).unwrap();
        let beta = KLFun::closed(KFun::identity(), PI * PI).unwrap();
        let h = m.h();
        let env = iss_envelope_check(&tr, &beta, None, 0.0, &|x| l2_norm(h, x), 0.01).unwrap();
        assert!(env.pass, "{env:?}");
        // a faster envelope is violated
        let fast = KLFun::closed(KFun::identity(), 1.2 * PI * PI).unwrap();
        assert!(!iss_envelope_check(&tr, &fast, None, 0.0, &|x| l2_norm(h, x), 0.01).unwrap().pass);
        let zero = simulate(&m, &vec![0.0; 256], &Signal::Zero, 0.1, 1e-3).unwrap();
        let env = iss_envelope_check(&zero, &beta, None, 0.0, &|x| l2_norm(h, x), 0.0).unwrap();
        assert!(env.pass && env.worst_ratio == 0.0);
    }

    #[test]
    fn iiss_law_holds() {
        let m = model(PdeKind::IissRd { c: 1.0, l: 2.0 }, 128);
        let tr = simulate(&m, &sine(&m, 2.0), &Signal::Sine { amp: 0.5, freq: 1.0, offset: 0.2 }, 1.0, 1e-3).unwrap();
        let rep = dissipation_check(&m, &LyapFunctional::Log1pL2, &tr, &Law::IissRd, 0.02).unwrap();
        assert!(rep.pass, "{rep:?}");
    }

    #[test]
    fn h10_law_holds_where_it_applies() {
        let spec = ModelSpec { length: Some(PI), ..ModelSpec::new(PdeKind::HeatReaction { b: 0.0, kappa: 1.0 }, 256) };
        let m = build_model(&spec).unwrap();
        let tr = simulate(&m, &sine(&m, 2.0), &Signal::Const { value: 0.05 }, 1.0, 1e-3).unwrap();
        let law = Law::ReactionDiffusionH10 { a: 2.0 };
        let f = law.functional(&m).unwrap();
        let rep = dissipation_check(&m, &f, &tr, &law, 0.02).unwrap();
        assert!(rep.pass && rep.checked > 100, "{rep:?}");
        assert!(Law::ReactionDiffusionH10 { a: 0.5 }.functional(&m).is_err());
    }

    fn coupled(ratio: f64) -> (PdeModel, Trajectory) {
        let (c1, c2, d) = (1.0, 1.0, PI);
        let prod = ratio * c1 * c2 * (PI / d).powi(4);
        let m = model(PdeKind::CoupledLinearRd { c1, c2, a12: prod.sqrt(), a21: prod.sqrt(), d }, 64);
        let mut x0 = sine(&m, 1.0);
        x0.extend(sine(&m, 0.5));
        let tr = simulate_strided(&m, &x0, &Signal::Zero, 10.0, 1e-3, 10).unwrap();
        (m, tr)
    }

    #[test]
    fn coupled_linear_composite_audit() {
        let (m, tr) = coupled(0.8);
        let cc = coupled_linear_composite(&m, 0.01).unwrap();
        assert!(cc.path_valid && cc.loop_gain < 1.0);
        let rep = dissipation_audit(&cc.clf, &tr, &[0.0], 0.0).unwrap();
        assert!(rep.pass && rep.certified, "{rep:?}");

        let (m, tr) = coupled(1.2);
        let cc = coupled_linear_composite(&m, 0.01).unwrap();
        assert!(!cc.path_valid && cc.loop_gain > 1.0);
        let rep = dissipation_audit(&cc.clf, &tr, &[0.0], 0.0).unwrap();
        assert!(!rep.pass && !rep.certified && !rep.violations.is_empty());
    }

    #[test]
    fn nonlinear_region() {
        let r = nonlinear_rd_gain_region(1.0, 4.0 / 3.0 * 2f64.powf(0.25), 60).unwrap();
        assert!((r.sup_product - 2.0).abs() < 1e-12);
        let (a, b) = r.best.unwrap();
        assert!(r.feasible && a < 1.0 && b < 2.0 && a * b > 1.0);
        let r = nonlinear_rd_gain_region(1.0, 1.0, 60).unwrap();
        assert!(!r.feasible && r.sup_product < 1.0);
    }
}
