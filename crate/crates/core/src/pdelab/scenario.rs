use super::functional::l2_norm;
use super::model::{build_model, simulate_strided, ModelSpec, PdeKind, PdeModel, Signal};
use crate::error::{Error, Result};
use crate::trajectory::Trajectory;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Initial state, expanded onto the model grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "profile", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Profile {
    Zero,
    /// amp·sin(mode·πz/L)
    Sine { amp: f64, mode: u32 },
    /// amp·cos(freq·πz/L)
    Cosine { amp: f64, freq: f64 },
    Constant { value: f64 },
    /// Sum of `modes` terms with seeded uniform coefficients in [−amp, amp].
    /// Grid terms are sin(πz/L)·sin(kπz/L), so the clamped condition holds too.
    Random { amp: f64, modes: usize, seed: u64 },
    /// Explicit flat state of length `dim`.
    Samples { values: Vec<f64> },
}

impl Profile {
    pub fn expand(&self, model: &PdeModel) -> Result<Vec<f64>> {
        let dim = model.dim();
        if let Profile::Samples { values } = self {
            if values.len() != dim {
                return Err(Error::Shape { expected: dim, got: values.len() });
            }
            return Ok(values.clone());
        }
        if let PdeKind::EnsembleS1 { .. } = model.kind() {
            return Err(Error::Config("ensemble-s1 takes samples or the dedicated ensemble runner".into()));
        }
        let l = model.length();
        let z: Vec<f64> = if model.is_grid() { model.nodes() } else { (0..dim).map(|i| i as f64).collect() };
        let block: Vec<f64> = match *self {
            Profile::Zero => vec![0.0; z.len()],
            Profile::Constant { value } => vec![value; z.len()],
            Profile::Sine { amp, mode } => z.iter().map(|z| amp * (mode as f64 * PI * z / l).sin()).collect(),
            Profile::Cosine { amp, freq } => z.iter().map(|z| amp * (freq * PI * z / l).cos()).collect(),
            Profile::Random { amp, modes, seed } => {
                if modes == 0 {
                    return Err(Error::Config("random profile needs modes ≥ 1".into()));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                if model.is_grid() {
                    let c: Vec<f64> = (0..modes).map(|_| rng.random_range(-amp..=amp)).collect();
                    z.iter()
                        .map(|z| {
                            let s = (PI * z / l).sin();
                            c.iter().enumerate().map(|(k, c)| c * s * ((k + 1) as f64 * PI * z / l).sin()).sum()
                        })
                        .collect()
                } else {
                    (0..z.len()).map(|_| rng.random_range(-amp..=amp)).collect()
                }
            }
            Profile::Samples { .. } => unreachable!(),
        };
        if block.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("initial profile is not finite".into()));
        }
        Ok((0..model.block_count()).flat_map(|_| block.iter().copied()).collect())
    }
}

fn default_n() -> usize {
    256
}

fn default_stride() -> usize {
    1
}

/// One simulation run described in data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub model: PdeKind,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default)]
    pub length: Option<f64>,
    #[serde(default)]
    pub dt: Option<f64>,
    pub t_end: f64,
    #[serde(default = "zero_profile")]
    pub x0: Profile,
    #[serde(default = "zero_signal")]
    pub u: Signal,
    #[serde(default = "default_stride")]
    pub stride: usize,
}

fn zero_profile() -> Profile {
    Profile::Zero
}

fn zero_signal() -> Signal {
    Signal::Zero
}

impl Scenario {
    pub fn spec(&self) -> ModelSpec {
        ModelSpec { model: self.model, n: self.n, length: self.length, dt: self.dt }
    }

    pub fn run(&self) -> Result<(PdeModel, Trajectory)> {
        let model = build_model(&self.spec())?;
        let x0 = self.x0.expand(&model)?;
        let dt = self.dt.unwrap_or(model.dt());
        let traj = simulate_strided(&model, &x0, &self.u, self.t_end, dt, self.stride)?;
        Ok((model, traj))
    }
}

/// L² norm summed over blocks on grids, sup norm on lattices, euclidean otherwise.
pub fn state_norm(model: &PdeModel, x: &[f64]) -> f64 {
    match model.kind() {
        PdeKind::InfiniteLinear { .. } | PdeKind::InfiniteCubic { .. } => x.iter().fold(0.0, |m, v| m.max(v.abs())),
        PdeKind::EnsembleS1 { .. } => x.iter().map(|v| v * v).sum::<f64>().sqrt(),
        _ => (0..model.block_count())
            .map(|b| l2_norm(model.h(), &x[model.block_range(b)]).powi(2))
            .sum::<f64>()
            .sqrt(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenario_from_json() {
        let s: Scenario = serde_json::from_str(
            r#"{"model":{"kind":"burgers","a":1.0,"b":1.0},"n":64,"t_end":0.1,
                "x0":{"profile":"sine","amp":0.5,"mode":1},"u":{"kind":"zero"}}"#,
        )
        .unwrap_or_else(|e| panic!("{e}"));
        let (m, tr) = s.run().unwrap();
        let n0 = state_norm(&m, &tr.states[0]);
        let n1 = state_norm(&m, tr.last().unwrap());
        assert!(n1 < n0 && n0 > 0.3);
        assert!(serde_json::from_str::<Scenario>(r#"{"model":{"kind":"transport"},"t_end":1,"bogus":1}"#).is_err());
    }

    #[test]
    fn random_profile_is_seeded_and_clamped() {
        let m = build_model(&ModelSpec::new(PdeKind::KuramotoSivashinsky { lambda: 1.0, b: 1.0 }, 64)).unwrap();
        let p = Profile::Random { amp: 0.1, modes: 4, seed: 7 };
        let a = p.expand(&m).unwrap();
        assert_eq!(a, p.expand(&m).unwrap());
        assert!(a[0].abs() < 1e-15 && a[63].abs() < 1e-15);
        assert!((a[1] - a[0]).abs() < 1e-2);
        let bad = Profile::Samples { values: vec![0.0; 3] };
        assert!(matches!(bad.expand(&m), Err(Error::Shape { .. })));
    }

    #[test]
    fn lattice_norm_is_sup() {
        let m = build_model(&ModelSpec::new(PdeKind::InfiniteLinear { a: 0.4, b: 0.4, k: 8 }, 0)).unwrap();
        let x = vec![0.0, -3.0, 1.0, 0.0, 0.0, 0.0, 0.0, 2.0];
        assert_eq!(state_norm(&m, &x), 3.0);
    }
}
