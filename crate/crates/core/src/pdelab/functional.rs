use super::model::PdeModel;
use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Lyapunov functional on grid functions. Nodal integrands use the
/// trapezoid rule; derivative integrands use forward differences, which are
/// midpoint values, summed with weight h.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum LyapFunctional {
    /// ∫x²
    L2,
    /// ∫e^{−μz}x²
    WeightedL2 { mu: f64 },
    /// ∫x_z²
    H10Seminorm,
    /// ∫x⁴
    L4Power,
    /// ln(1 + ∫x²)
    Log1pL2,
    /// ∫(½x_z² + κx⁴/4), the energy of x_t = x_zz − κx³.
    Potential { kappa: f64 },
    /// max over parts of V_part(block)/scale, a composite on a linear path.
    CompositeWrap { parts: Vec<WrapPart> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WrapPart {
    pub block: usize,
    pub functional: LyapFunctional,
    pub scale: f64,
}

impl LyapFunctional {
    pub fn name(&self) -> &'static str {
        match self {
            LyapFunctional::L2 => "l2",
            LyapFunctional::WeightedL2 { .. } => "weighted-l2",
            LyapFunctional::H10Seminorm => "h10-seminorm",
            LyapFunctional::L4Power => "l4-power",
            LyapFunctional::Log1pL2 => "log1p-l2",
            LyapFunctional::Potential { .. } => "potential",
            LyapFunctional::CompositeWrap { .. } => "composite-wrap",
        }
    }
}

/// h·Σ' f(xᵢ) with half weights at both ends.
pub fn trapz(h: f64, x: &[f64], f: impl Fn(f64) -> f64) -> f64 {
    let n = x.len();
    if n < 2 {
        return 0.0;
    }
    let inner: f64 = x.iter().map(|&v| f(v)).sum();
    h * (inner - 0.5 * (f(x[0]) + f(x[n - 1])))
}

/// ∫x² by the trapezoid rule.
pub fn l2_sq(h: f64, x: &[f64]) -> f64 {
    trapz(h, x, |v| v * v)
}

pub fn l2_norm(h: f64, x: &[f64]) -> f64 {
    l2_sq(h, x).sqrt()
}

/// ∫x_z² from forward differences.
pub fn grad_sq(h: f64, x: &[f64]) -> f64 {
    x.windows(2).map(|w| (w[1] - w[0]) * (w[1] - w[0])).sum::<f64>() / h
}

/// Evaluate on one grid function with spacing h.
pub fn eval_on_grid(f: &LyapFunctional, h: f64, x: &[f64]) -> Result<f64> {
    if !(h > 0.0) {
        return Err(Error::Domain(format!("grid spacing must be > 0, got {h}")));
    }
    Ok(match f {
        LyapFunctional::L2 => l2_sq(h, x),
        LyapFunctional::WeightedL2 { mu } => {
            let n = x.len();
            if n < 2 {
                return Ok(0.0);
            }
            let w = |i: usize| (-mu * i as f64 * h).exp() * x[i] * x[i];
            h * ((0..n).map(w).sum::<f64>() - 0.5 * (w(0) + w(n - 1)))
        }
        LyapFunctional::H10Seminorm => grad_sq(h, x),
        LyapFunctional::L4Power => trapz(h, x, |v| v.powi(4)),
        LyapFunctional::Log1pL2 => l2_sq(h, x).ln_1p(),
        LyapFunctional::Potential { kappa } => {
            if *kappa < 0.0 {
                return Err(Error::Domain("potential needs kappa ≥ 0".into()));
            }
            0.5 * grad_sq(h, x) + trapz(h, x, |v| kappa * v.powi(4) / 4.0)
        }
        LyapFunctional::CompositeWrap { .. } => {
            return Err(Error::Domain("composite functional needs the model block layout".into()))
        }
    })
}

/// Value of `f` at a state of `model`. Plain functionals accept either one
/// block or a single-block state; composites take the full state.
pub fn lyap_eval(f: &LyapFunctional, model: &PdeModel, state: &[f64]) -> Result<f64> {
    if !model.is_grid() {
        return Err(Error::Unsupported(format!("{} has no spatial grid", model.kind().name())));
    }
    match f {
        LyapFunctional::CompositeWrap { parts } => {
            if state.len() != model.dim() {
                return Err(Error::Shape { expected: model.dim(), got: state.len() });
            }
            let mut v = 0.0f64;
            for p in parts {
                if p.block >= model.block_count() {
                    return Err(Error::Domain(format!("block {} out of range", p.block)));
                }
                if !(p.scale > 0.0) {
                    return Err(Error::Domain("composite scales must be > 0".into()));
                }
                v = v.max(eval_on_grid(&p.functional, model.h(), &state[model.block_range(p.block)])? / p.scale);
            }
            Ok(v)
        }
        _ => {
            if state.len() != model.n() {
                return Err(Error::Shape { expected: model.n(), got: state.len() });
            }
            eval_on_grid(f, model.h(), state)
        }
    }
}

/// One side-by-side comparison of an integral inequality.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InequalityCheck {
    pub lhs: f64,
    pub rhs: f64,
}

impl InequalityCheck {
    pub fn holds(&self, slack: f64) -> bool {
        self.lhs <= self.rhs * (1.0 + slack) + 1e-300
    }
}

/// ∫x² ≤ (L/π)²∫x_z² for x vanishing at both ends.
pub fn friedrichs(h: f64, x: &[f64]) -> InequalityCheck {
    let l = h * (x.len() - 1) as f64;
    InequalityCheck { lhs: l2_sq(h, x), rhs: (l / PI).powi(2) * grad_sq(h, x) }
}

/// ∫x² ≤ (2L/π)²∫x_z² for x vanishing at one end.
pub fn poincare(h: f64, x: &[f64]) -> InequalityCheck {
    let l = h * (x.len() - 1) as f64;
    InequalityCheck { lhs: l2_sq(h, x), rhs: (2.0 * l / PI).powi(2) * grad_sq(h, x) }
}

/// max x² ≤ x(0)² + 2‖x‖‖x_z‖.
pub fn agmon(h: f64, x: &[f64]) -> InequalityCheck {
    let sup = x.iter().fold(0.0f64, |m, v| m.max(v * v));
    InequalityCheck { lhs: sup, rhs: x[0] * x[0] + 2.0 * l2_norm(h, x) * grad_sq(h, x).sqrt() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InequalityResult {
    pub name: String,
    pub samples: usize,
    /// Largest lhs/rhs seen.
    pub worst_ratio: f64,
    pub pass: bool,
}

/// Run the three inequalities on `samples` random band-limited functions on
/// an n-node grid over (0,1), allowing `slack` relative excess.
pub fn inequality_suite(n: usize, samples: usize, seed: u64, slack: f64) -> Result<Vec<InequalityResult>> {
    if n < 3 || samples == 0 {
        return Err(Error::Config("inequality suite needs n ≥ 3 and at least one sample".into()));
    }
    let h = 1.0 / (n - 1) as f64;
    let z: Vec<f64> = (0..n).map(|i| i as f64 * h).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![];
    let kinds: [(&str, fn(f64, &[f64]) -> InequalityCheck); 3] =
        [("friedrichs", friedrichs), ("poincare", poincare), ("agmon", agmon)];
    for (idx, (name, check)) in kinds.iter().enumerate() {
        let mut worst = 0.0f64;
        let mut pass = true;
        for _ in 0..samples {
            let modes = rng.random_range(1..=8usize);
            let coef: Vec<(f64, f64)> =
                (0..=modes).map(|_| (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
            let x: Vec<f64> = z
                .iter()
                .map(|&s| {
                    coef.iter()
                        .enumerate()
                        .map(|(k, &(a, b))| {
                            let k = k as f64;
                            match idx {
                                0 => a * ((k + 1.0) * PI * s).sin(),
                                1 => a * ((k + 0.5) * PI * s).sin(),
                                _ => a * (k * PI * s).cos() + b * (k * PI * s).sin(),
                            }
                        })
                        .sum()
                })
                .collect();
            let c = check(h, &x);
            if c.rhs > 0.0 {
                worst = worst.max(c.lhs / c.rhs);
            }
            pass &= c.holds(slack);
        }
        out.push(InequalityResult { name: name.to_string(), samples, worst_ratio: worst, pass });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pdelab::model::{build_model, ModelSpec, PdeKind};

    fn grid(n: usize) -> (f64, Vec<f64>) {
        let h = 1.0 / (n - 1) as f64;
        (h, (0..n).map(|i| i as f64 * h).collect())
    }

    #[test]
    fn closed_form_values() {
        let (h, z) = grid(256);
        let ones = vec![1.0; 256];
        assert!((eval_on_grid(&LyapFunctional::L2, h, &ones).unwrap() - 1.0).abs() < 1e-14);
        // trapezoid error h²μ²/12·(1 − e^{−1}) ≈ 8e-7
        let w = eval_on_grid(&LyapFunctional::WeightedL2 { mu: 1.0 }, h, &ones).unwrap();
        assert!((w - (1.0 - (-1.0f64).exp())).abs() < 1e-6, "{w}");
        let s: Vec<f64> = z.iter().map(|v| (PI * v).sin()).collect();
        let g = eval_on_grid(&LyapFunctional::H10Seminorm, h, &s).unwrap();
        assert!((g / (PI * PI / 2.0) - 1.0).abs() < 1e-3, "{g}");
        let l4 = eval_on_grid(&LyapFunctional::L4Power, h, &s).unwrap();
        assert!((l4 - 3.0 / 8.0).abs() < 1e-6);
        let lg = eval_on_grid(&LyapFunctional::Log1pL2, h, &s).unwrap();
        assert!((lg - 1.5f64.ln()).abs() < 1e-6);
        let zero = vec![0.0; 256];
        for f in [
            LyapFunctional::L2,
            LyapFunctional::WeightedL2 { mu: 2.0 },
            LyapFunctional::H10Seminorm,
            LyapFunctional::L4Power,
            LyapFunctional::Log1pL2,
            LyapFunctional::Potential { kappa: 1.0 },
        ] {
            assert_eq!(eval_on_grid(&f, h, &zero).unwrap(), 0.0);
        }
    }

    #[test]
    fn second_order_refinement() {
        // N = 2^k + 1 halves h exactly
        let fs = [
            LyapFunctional::L2,
            LyapFunctional::WeightedL2 { mu: 1.5 },
            LyapFunctional::H10Seminorm,
            LyapFunctional::L4Power,
            LyapFunctional::Potential { kappa: 2.0 },
        ];
        for f in &fs {
            let vals: Vec<f64> = [33usize, 65, 129, 257]
                .iter()
                .map(|&n| {
                    let (h, z) = grid(n);
                    let x: Vec<f64> = z.iter().map(|v| (PI * v).sin() * (1.0 + v * v)).collect();
                    eval_on_grid(f, h, &x).unwrap()
                })
                .collect();
            for w in vals.windows(3) {
                let (prev, next) = ((w[1] - w[0]).abs(), (w[2] - w[1]).abs());
                assert!(next * 3.0 <= prev, "{}: {prev} then {next}", f.name());
            }
        }
    }

    #[test]
    fn composite_uses_blocks() {
        let m = build_model(&ModelSpec::new(
            PdeKind::CoupledLinearRd { c1: 1.0, c2: 1.0, a12: 0.1, a21: 0.1, d: 1.0 },
            32,
        ))
        .unwrap();
        let mut x = vec![0.0; 64];
        x[32..].iter_mut().for_each(|v| *v = 1.0);
        let f = LyapFunctional::CompositeWrap {
            parts: vec![
                WrapPart { block: 0, functional: LyapFunctional::L2, scale: 1.0 },
                WrapPart { block: 1, functional: LyapFunctional::L2, scale: 4.0 },
            ],
        };
        assert!((lyap_eval(&f, &m, &x).unwrap() - 0.25).abs() < 1e-12);
        assert!(lyap_eval(&LyapFunctional::L2, &m, &x).is_err());
        assert!(lyap_eval(&LyapFunctional::L2, &m, &x[..32]).is_ok());
    }

    #[test]
    fn inequalities_hold_on_random_samples() {
        for r in inequality_suite(256, 50, 11, 0.01).unwrap() {
            assert!(r.pass, "{r:?}");
        }
    }

    #[test]
    fn extremals_are_nearly_tight() {
        let (h, z) = grid(256);
        let s: Vec<f64> = z.iter().map(|v| (PI * v).sin()).collect();
        let c = friedrichs(h, &s);
        assert!(c.lhs / c.rhs > 0.999 && c.holds(0.01));
        let q: Vec<f64> = z.iter().map(|v| (0.5 * PI * v).sin()).collect();
        let c = poincare(h, &q);
        assert!(c.lhs / c.rhs > 0.999 && c.holds(0.01));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn functional() -> impl Strategy<Value = LyapFunctional> {
            prop_oneof![
                Just(LyapFunctional::L2),
                (0.0..5.0f64).prop_map(|mu| LyapFunctional::WeightedL2 { mu }),
                Just(LyapFunctional::H10Seminorm),
                Just(LyapFunctional::L4Power),
                Just(LyapFunctional::Log1pL2),
                (0.0..3.0f64).prop_map(|kappa| LyapFunctional::Potential { kappa }),
            ]
        }

        proptest! {
            #[test]
            fn nonnegative_and_zero_at_zero(f in functional(), x in prop::collection::vec(-10.0..10.0f64, 8..64)) {
                let h = 1.0 / (x.len() - 1) as f64;
                prop_assert!(eval_on_grid(&f, h, &x).unwrap() >= 0.0);
                prop_assert_eq!(eval_on_grid(&f, h, &vec![0.0; x.len()]).unwrap(), 0.0);
            }
        }
    }
}
