use super::cycles::{cycle_report, cycle_witness, DEFAULT_CYCLE_CAP};
use super::spectral::{gelfand, max_cycle_geometric_mean};
use super::{Form, GainMatrix, GainOperator};
use crate::compfun::{compose, geom_grid, Class, KFun};
use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Which small-gain condition to test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SgcMode {
    /// Γ(s) ≱ s for all s ≠ 0.
    NoJointIncrease,
    /// (id+ρ)∘Γ(s) ≱ s.
    Strong { rho: KFun },
    /// dist(Γ(x)−x, ℝⁿ₊) ≥ η(‖x‖∞).
    Uniform { eta: KFun },
    /// Γ + ω(xⱼ)eᵢ satisfies no-joint-increase for every (i, j).
    Robust { omega: KFun },
}

impl SgcMode {
    pub fn name(&self) -> &'static str {
        match self {
            SgcMode::NoJointIncrease => "no-joint-increase",
            SgcMode::Strong { .. } => "strong",
            SgcMode::Uniform { .. } => "uniform",
            SgcMode::Robust { .. } => "robust",
        }
    }
}

/// Sampling budget for falsification searches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SampleOpts {
    pub rays: usize,
    pub levels: usize,
    pub level_min: f64,
    pub level_max: f64,
    pub seed: u64,
}

impl Default for SampleOpts {
    fn default() -> Self {
        SampleOpts { rays: 256, levels: 64, level_min: 1e-6, level_max: 1e6, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Pass,
    PassSampled,
    Fail,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SgcReport {
    pub mode: String,
    pub verdict: Verdict,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    pub iterations: usize,
    pub exact: bool,
    pub samples: usize,
    pub seed: u64,
    pub caveats: Vec<String>,
}

impl SgcReport {
    pub fn passed(&self) -> bool {
        self.verdict != Verdict::Fail
    }
}

type Map<'a> = dyn Fn(&[f64]) -> Vec<f64> + Sync + 'a;

fn dominates(a: &[f64], s: &[f64]) -> bool {
    s.iter().any(|&x| x > 0.0) && a.iter().zip(s).all(|(a, s)| a >= s)
}

/// Search rays × levels for s ≠ 0 with map(s) ≥ s. Rays are independent
/// and seeded by index, so the first witness found is the same for any
/// worker count.
fn falsify(n: usize, map: &Map, opts: &SampleOpts, candidates: &[Vec<f64>]) -> (Option<Vec<f64>>, usize) {
    for c in candidates {
        if dominates(&map(c), c) {
            return (Some(c.clone()), 0);
        }
    }
    let levels = geom_grid(opts.level_min, opts.level_max, opts.levels.max(1));
    let hits: Vec<Option<Vec<f64>>> = (0..opts.rays)
        .into_par_iter()
        .map(|ray| {
            let d = ray_direction(n, ray, opts.seed);
            levels.iter().find_map(|&r| {
                let s: Vec<f64> = d.iter().map(|x| x * r).collect();
                dominates(&map(&s), &s).then_some(s)
            })
        })
        .collect();
    let samples = opts.rays * levels.len();
    (hits.into_iter().flatten().next(), samples)
}

fn ray_direction(n: usize, ray: usize, seed: u64) -> Vec<f64> {
    if ray == 0 {
        return vec![1.0; n];
    }
    if ray <= n {
        let mut d = vec![0.0; n];
        d[ray - 1] = 1.0;
        return d;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(ray as u64);
    let mut d: Vec<f64> = (0..n).map(|_| if rng.random::<f64>() < 0.8 { rng.random::<f64>() } else { 0.0 }).collect();
    let m = d.iter().copied().fold(0.0, f64::max);
    if m == 0.0 {
        d[rng.random_range(0..n)] = 1.0;
        return d;
    }
    d.iter_mut().for_each(|x| *x /= m);
    d
}

fn require_kinf(f: &KFun, what: &str) -> Result<()> {
    if f.class() != Class::KInf {
        return Err(Error::Config(format!("{what} must be class K∞")));
    }
    f.verify_class().map_err(|e| Error::Config(format!("{what}: {e}")))
}

/// Witnesses built along non-contracting cycles of the max-form part.
fn cycle_candidates(g: &GainMatrix) -> Result<Vec<Vec<f64>>> {
    if g.n() > DEFAULT_CYCLE_CAP {
        return Ok(vec![]);
    }
    let cycles = match cycle_report(g) {
        Ok(c) => c,
        Err(Error::Size(_)) => return Ok(vec![]),
        Err(e) => return Err(e),
    };
    cycles
        .iter()
        .filter_map(|c| c.witness.map(|r| cycle_witness(g, &c.cycle, r)))
        .collect()
}

/// Check a small-gain condition. Linear max/sum operators get an exact
/// verdict for the no-joint-increase mode; everything else is sampled.
pub fn check_small_gain(op: &GainOperator, mode: &SgcMode, opts: &SampleOpts) -> Result<SgcReport> {
    let n = op.n();
    let mut rep = SgcReport {
        mode: mode.name().into(),
        verdict: Verdict::PassSampled,
        witness: None,
        radius: None,
        iterations: 0,
        exact: false,
        samples: 0,
        seed: opts.seed,
        caveats: vec![],
    };
    let uniform_form = matches!(op.form(), Form::Max | Form::Sum);
    match mode {
        SgcMode::NoJointIncrease => {
            if let (Some(w), true) = (op.linear_weights(), uniform_form) {
                let est = gelfand(w, n, op.form() == Form::Max);
                rep.radius = Some(est.radius);
                rep.iterations = est.iterations;
                rep.exact = true;
                let below = if op.form() == Form::Max {
                    max_cycle_geometric_mean(w, n).is_none_or(|m| m < 1.0)
                } else {
                    est.radius < 1.0
                };
                if below {
                    rep.verdict = Verdict::Pass;
                    return Ok(rep);
                }
                rep.verdict = Verdict::Fail;
                let mut cands = cycle_candidates(op.matrix())?;
                cands.extend(perron_candidate(w, n));
                let (wit, samples) = falsify(n, &|s: &[f64]| op.apply_unchecked(s), opts, &cands);
                rep.samples = samples;
                rep.witness = wit;
                return Ok(rep);
            }
            let cands = if uniform_form { cycle_candidates(op.matrix())? } else { vec![] };
            let (wit, samples) = falsify(n, &|s: &[f64]| op.apply_unchecked(s), opts, &cands);
            finish(&mut rep, wit, samples, opts);
        }
        SgcMode::Strong { rho } => {
            require_kinf(rho, "ρ")?;
            let d = KFun::sum(vec![KFun::identity(), rho.clone()])?;
            if op.form() == Form::Max {
                // (id+ρ) commutes with max: wrap every gain
                let mut m = GainMatrix::new(n);
                for (i, j, g) in op.matrix().nonzero() {
                    m.set(i, j, compose(&d, g)?)?;
                }
                let wrapped = GainOperator::max_form(m);
                let mut inner = check_small_gain(&wrapped, &SgcMode::NoJointIncrease, opts)?;
                inner.mode = rep.mode;
                return Ok(inner);
            }
            let mut cands = vec![];
            if uniform_form {
                let mut m = GainMatrix::new(n);
                for (i, j, g) in op.matrix().nonzero() {
                    m.set(i, j, compose(&d, g)?)?;
                }
                cands = cycle_candidates(&m)?;
            }
            let map = |s: &[f64]| -> Vec<f64> {
                op.apply_unchecked(s).into_iter().map(|v| d.eval(v).unwrap_or(f64::INFINITY)).collect()
            };
            let (wit, samples) = falsify(n, &map, opts, &cands);
            finish(&mut rep, wit, samples, opts);
        }
        SgcMode::Uniform { eta } => {
            require_kinf(eta, "η")?;
            // dist(Γ(x)−x, ℝⁿ₊) < η(‖x‖) ⟺ Γ(x) + η(‖x‖)𝟙 > x
            let map = |s: &[f64]| -> Vec<f64> {
                let e = eta.eval(s.iter().copied().fold(0.0, f64::max)).unwrap_or(f64::INFINITY);
                op.apply_unchecked(s).into_iter().map(|v| v + e).collect()
            };
            let cands = if uniform_form { cycle_candidates(op.matrix())? } else { vec![] };
            let (wit, samples) = falsify(n, &map, opts, &cands);
            finish(&mut rep, wit, samples, opts);
        }
        SgcMode::Robust { omega } => {
            require_kinf(omega, "ω")?;
            for r in geom_grid(1e-9, 1e9, 64) {
                if omega.eval(r)? >= r {
                    return Err(Error::Config(format!("ω must lie below the identity; ω({r}) ≥ {r}")));
                }
            }
            let sub = SampleOpts { rays: (opts.rays / 4).max(n + 2), ..*opts };
            let mut total = 0;
            for i in 0..n {
                for j in 0..n {
                    let mut cands = vec![];
                    if op.form() != Form::Mixed && n <= 6 {
                        // Γ + ω(xⱼ)eᵢ dominates the max-form with γᵢⱼ replaced by γᵢⱼ + ω
                        let mut m = GainMatrix::with_self_loops(n);
                        for (a, b, g) in op.matrix().nonzero() {
                            m.set(a, b, g.clone())?;
                        }
                        let bumped = match op.matrix().get(i, j) {
                            Some(g) => KFun::sum(vec![g.clone(), omega.clone()])?,
                            None => omega.clone(),
                        };
                        m.set(i, j, bumped)?;
                        cands = cycle_candidates(&m)?;
                    }
                    let map = |s: &[f64]| -> Vec<f64> {
                        let mut v = op.apply_unchecked(s);
                        v[i] += omega.eval(s[j]).unwrap_or(f64::INFINITY);
                        v
                    };
                    let (wit, samples) = falsify(n, &map, &sub, &cands);
                    total += samples;
                    if let Some(w) = wit {
                        rep.caveats.push(format!("perturbation at ({i}, {j}) admits joint increase"));
                        rep.verdict = Verdict::Fail;
                        rep.witness = Some(w);
                        rep.samples = total;
                        return Ok(rep);
                    }
                }
            }
            finish(&mut rep, None, total, &sub);
        }
    }
    Ok(rep)
}

fn finish(rep: &mut SgcReport, wit: Option<Vec<f64>>, samples: usize, opts: &SampleOpts) {
    rep.samples = samples;
    match wit {
        Some(w) => {
            rep.verdict = Verdict::Fail;
            rep.witness = Some(w);
        }
        None => {
            rep.verdict = Verdict::PassSampled;
            rep.caveats.push(format!(
                "sampled falsification over {} rays × {} levels in [{:e}, {:e}]; not a proof",
                opts.rays, opts.levels, opts.level_min, opts.level_max
            ));
        }
    }
}

/// Normalized Perron vector of a nonnegative matrix via power iteration on
/// A + I; offered as a witness candidate when r(A) ≥ 1.
fn perron_candidate(w: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut x = vec![1.0; n];
    for _ in 0..2000 {
        let mut y: Vec<f64> = (0..n).map(|i| x[i] + (0..n).map(|j| w[i * n + j] * x[j]).sum::<f64>()).collect();
        let m = y.iter().copied().fold(0.0, f64::max);
        if m == 0.0 {
            return None;
        }
        y.iter_mut().for_each(|v| *v /= m);
        x = y;
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lin(rows: &[Vec<f64>], max: bool) -> GainOperator {
        let m = GainMatrix::from_linear(rows).unwrap();
        if max {
            GainOperator::max_form(m)
        } else {
            GainOperator::sum_form(m)
        }
    }

    #[test]
    fn exact_pass() {
        let r = check_small_gain(&lin(&[vec![0.0, 0.5], vec![0.5, 0.0]], true), &SgcMode::NoJointIncrease, &SampleOpts::default())
            .unwrap();
        assert_eq!(r.verdict, Verdict::Pass);
        assert!(r.exact);
        assert!((r.radius.unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn exact_fail_has_witness() {
        for max in [true, false] {
            let op = lin(&[vec![0.0, 2.0], vec![0.6, 0.0]], max);
            let r = check_small_gain(&op, &SgcMode::NoJointIncrease, &SampleOpts::default()).unwrap();
            assert_eq!(r.verdict, Verdict::Fail);
            let w = r.witness.unwrap();
            assert!(dominates(&op.apply(&w).unwrap(), &w));
        }
    }

    #[test]
    fn sum_form_fail_without_failing_cycle() {
        // every cycle contracts but the sum accumulates: rows sum to 1.2
        let op = lin(&[vec![0.0, 0.6, 0.6], vec![0.6, 0.0, 0.6], vec![0.6, 0.6, 0.0]], false);
        let r = check_small_gain(&op, &SgcMode::NoJointIncrease, &SampleOpts::default()).unwrap();
        assert_eq!(r.verdict, Verdict::Fail);
        assert!(r.witness.is_some());
    }

    #[test]
    fn saturating_pass_sampled() {
        let mut m = GainMatrix::new(2);
        m.set(0, 1, KFun::saturation(1.0).unwrap()).unwrap();
        m.set(1, 0, KFun::identity()).unwrap();
        let r = check_small_gain(&GainOperator::max_form(m), &SgcMode::NoJointIncrease, &SampleOpts::default()).unwrap();
        assert_eq!(r.verdict, Verdict::PassSampled);
        assert!(!r.caveats.is_empty());
    }

    #[test]
    fn strong_mode_fails_on_identity_cycle() {
        let op = lin(&[vec![0.0, 2.0], vec![0.5, 0.0]], true);
        for rho in [KFun::power(0.1, 2.0).unwrap(), KFun::log1p(0.01).unwrap()] {
            let r = check_small_gain(&op, &SgcMode::Strong { rho: rho.clone() }, &SampleOpts::default()).unwrap();
            assert_eq!(r.verdict, Verdict::Fail);
            let w = r.witness.unwrap();
            let d = KFun::sum(vec![KFun::identity(), rho]).unwrap();
            let img: Vec<f64> = op.apply(&w).unwrap().iter().map(|&v| d.eval(v).unwrap()).collect();
            assert!(dominates(&img, &w));
        }
        // with cycle product exactly 1 the plain condition already fails
        let r = check_small_gain(&op, &SgcMode::NoJointIncrease, &SampleOpts::default()).unwrap();
        assert_eq!(r.verdict, Verdict::Fail);
    }

    #[test]
    fn strong_mode_passes_with_room() {
        let op = lin(&[vec![0.0, 0.5], vec![0.5, 0.0]], true);
        let r = check_small_gain(&op, &SgcMode::Strong { rho: KFun::linear(0.5).unwrap() }, &SampleOpts::default())
            .unwrap();
        assert!(r.passed());
    }

    #[test]
    fn uniform_and_robust() {
        let op = lin(&[vec![0.0, 0.5], vec![0.5, 0.0]], false);
        let opts = SampleOpts::default();
        let r = check_small_gain(&op, &SgcMode::Uniform { eta: KFun::linear(0.4).unwrap() }, &opts).unwrap();
        assert!(r.passed());
        // dist(Γx − x) on the diagonal ray is 0.5‖x‖: η = 0.6·id is too demanding
        let r = check_small_gain(&op, &SgcMode::Uniform { eta: KFun::linear(0.6).unwrap() }, &opts).unwrap();
        assert_eq!(r.verdict, Verdict::Fail);
        let r = check_small_gain(&op, &SgcMode::Robust { omega: KFun::linear(0.3).unwrap() }, &opts).unwrap();
        assert!(r.passed());
        // a self-perturbation of 0.9 leaves room for x = (1, 0.3)
        let r = check_small_gain(&op, &SgcMode::Robust { omega: KFun::linear(0.9).unwrap() }, &opts).unwrap();
        assert_eq!(r.verdict, Verdict::Fail);
        assert!(check_small_gain(&op, &SgcMode::Robust { omega: KFun::linear(1.5).unwrap() }, &opts).is_err());
        assert!(matches!(
            check_small_gain(&op, &SgcMode::Strong { rho: KFun::saturation(1.0).unwrap() }, &opts),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn sampling_is_deterministic() {
        let mut m = GainMatrix::new(3);
        m.set(0, 1, KFun::power(1.0, 2.0).unwrap()).unwrap();
        m.set(1, 2, KFun::identity()).unwrap();
        m.set(2, 0, KFun::identity()).unwrap();
        let op = GainOperator::sum_form(m);
        let opts = SampleOpts { seed: 42, ..Default::default() };
        let a = check_small_gain(&op, &SgcMode::NoJointIncrease, &opts).unwrap();
        let b = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| check_small_gain(&op, &SgcMode::NoJointIncrease, &opts).unwrap());
        assert_eq!(a.witness, b.witness);
        assert_eq!(a.verdict, Verdict::Fail);
    }
}
