//! Gain matrices and the monotone operators they induce on the nonnegative
//! orthant, with small-gain checks, spectral radii and the Kleene star.

mod cycles;
mod kleene;
mod sgc;
mod spectral;

pub use cycles::{cycle_report, cycle_report_capped, CycleEntry, DEFAULT_CYCLE_CAP};
pub use kleene::{kleene_star, KleeneResult};
pub use sgc::{check_small_gain, SampleOpts, SgcMode, SgcReport, Verdict};
pub use spectral::{max_cycle_geometric_mean, spectral_radius, SpectralEstimate};

use crate::compfun::KFun;
use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::sync::OnceLock;

/// n×n matrix of gains; `None` is the zero gain.
#[derive(Debug, Clone, PartialEq)]
pub struct GainMatrix {
    n: usize,
    entries: Vec<Option<KFun>>,
    self_loops: bool,
}

impl GainMatrix {
    /// Zero matrix with the diagonal locked at zero.
    pub fn new(n: usize) -> GainMatrix {
        GainMatrix { n, entries: vec![None; n * n], self_loops: false }
    }

    /// Zero matrix that also accepts diagonal entries. Used for
    /// discrete-time operators, not for interconnection gains.
    pub fn with_self_loops(n: usize) -> GainMatrix {
        GainMatrix { n, entries: vec![None; n * n], self_loops: true }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn allows_self_loops(&self) -> bool {
        self.self_loops
    }

    pub fn set(&mut self, i: usize, j: usize, g: KFun) -> Result<()> {
        if i >= self.n || j >= self.n {
            return Err(Error::Shape { expected: self.n, got: i.max(j) + 1 });
        }
        if i == j && !self.self_loops {
            return Err(Error::Config(format!("diagonal gain ({i},{i}) must be zero")));
        }
        if !g.class().is_k() {
            return Err(Error::Class(format!("gain ({i},{j}) must be class K")));
        }
        self.entries[i * self.n + j] = Some(g);
        Ok(())
    }

    pub fn get(&self, i: usize, j: usize) -> Option<&KFun> {
        self.entries[i * self.n + j].as_ref()
    }

    /// Build from a dense matrix of slopes; zeros are absent gains.
    pub fn from_linear(rows: &[Vec<f64>]) -> Result<GainMatrix> {
        GainMatrix::from_linear_impl(rows, false)
    }

    /// As [`GainMatrix::from_linear`] but keeps the diagonal.
    pub fn from_linear_with_loops(rows: &[Vec<f64>]) -> Result<GainMatrix> {
        GainMatrix::from_linear_impl(rows, true)
    }

    fn from_linear_impl(rows: &[Vec<f64>], loops: bool) -> Result<GainMatrix> {
        let n = rows.len();
        let mut g = if loops { GainMatrix::with_self_loops(n) } else { GainMatrix::new(n) };
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::Shape { expected: n, got: row.len() });
            }
            for (j, &a) in row.iter().enumerate() {
                if a < 0.0 || !a.is_finite() {
                    return Err(Error::Config(format!("slope ({i},{j}) = {a}")));
                }
                if a > 0.0 {
                    g.set(i, j, KFun::linear(a)?)?;
                }
            }
        }
        Ok(g)
    }

    /// Spatially invariant truncation: row i has gain `g` at column
    /// `(i + offset) mod n` for each `(offset, g)` in `row`.
    pub fn circulant(n: usize, row: &[(isize, KFun)]) -> Result<GainMatrix> {
        let loops = row.iter().any(|(o, _)| o.rem_euclid(n as isize) == 0);
        let mut g = if loops { GainMatrix::with_self_loops(n) } else { GainMatrix::new(n) };
        for i in 0..n {
            for (off, k) in row {
                let j = (i as isize + off).rem_euclid(n as isize) as usize;
                g.set(i, j, k.clone())?;
            }
        }
        Ok(g)
    }

    /// Dense slopes if every nonzero gain is linear.
    pub fn linear_weights(&self) -> Option<Vec<f64>> {
        self.entries.iter().map(|e| e.as_ref().map_or(Some(0.0), |g| g.as_linear())).collect()
    }

    pub fn nonzero(&self) -> impl Iterator<Item = (usize, usize, &KFun)> {
        self.entries
            .iter()
            .enumerate()
            .filter_map(move |(k, e)| e.as_ref().map(|g| (k / self.n, k % self.n, g)))
    }
}

/// Monotone aggregation expression over the row arguments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MafExpr {
    Arg { i: usize },
    Sum { args: Vec<MafExpr> },
    Max { args: Vec<MafExpr> },
    Scale { c: f64, of: Box<MafExpr> },
    /// (Σ argᵖ)^{1/p}, p ≥ 1
    PNorm { p: f64, args: Vec<MafExpr> },
}

impl MafExpr {
    fn eval(&self, v: &[f64]) -> f64 {
        match self {
            MafExpr::Arg { i } => v[*i],
            MafExpr::Sum { args } => args.iter().map(|a| a.eval(v)).sum(),
            MafExpr::Max { args } => args.iter().map(|a| a.eval(v)).fold(0.0, f64::max),
            MafExpr::Scale { c, of } => c * of.eval(v),
            MafExpr::PNorm { p, args } => args.iter().map(|a| a.eval(v).powf(*p)).sum::<f64>().powf(1.0 / p),
        }
    }

    fn check_shape(&self, n: usize) -> Result<()> {
        match self {
            MafExpr::Arg { i } if *i >= n => Err(Error::Shape { expected: n, got: i + 1 }),
            MafExpr::Arg { .. } => Ok(()),
            MafExpr::Sum { args } | MafExpr::Max { args } if args.is_empty() => {
                Err(Error::Config("empty aggregation".into()))
            }
            MafExpr::Sum { args } | MafExpr::Max { args } => args.iter().try_for_each(|a| a.check_shape(n)),
            MafExpr::Scale { c, of } if *c > 0.0 && c.is_finite() => of.check_shape(n),
            MafExpr::Scale { c, .. } => Err(Error::Config(format!("scale {c} must be > 0"))),
            MafExpr::PNorm { p, args } if *p >= 1.0 && p.is_finite() && !args.is_empty() => {
                args.iter().try_for_each(|a| a.check_shape(n))
            }
            MafExpr::PNorm { p, .. } => Err(Error::Config(format!("p-norm needs p ≥ 1, got {p}"))),
        }
    }
}

/// Row aggregation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Maf {
    Max,
    Sum,
    Custom(MafExpr),
}

impl Maf {
    pub fn eval(&self, v: &[f64]) -> f64 {
        match self {
            Maf::Max => v.iter().copied().fold(0.0, f64::max),
            Maf::Sum => v.iter().sum(),
            Maf::Custom(e) => e.eval(v),
        }
    }

    /// Probe the aggregation axioms on random points of ℝⁿ₊.
    pub fn validate(&self, n: usize, seed: u64) -> Result<()> {
        let e = match self {
            Maf::Custom(e) => e,
            _ => return Ok(()),
        };
        e.check_shape(n)?;
        let fail = |what: &str| Err(Error::Config(format!("custom aggregation violates {what}")));
        if e.eval(&vec![0.0; n]) != 0.0 {
            return fail("μ(0) = 0");
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..256 {
            let v: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 10.0).collect();
            let w: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 10.0).collect();
            let d: Vec<f64> = v.iter().map(|x| x + 1e-3 + rng.random::<f64>()).collect();
            let (mv, mw) = (e.eval(&v), e.eval(&w));
            if !(mv >= 0.0) {
                return fail("positivity");
            }
            if !(e.eval(&d) > mv) {
                return fail("strict increase");
            }
            let vw: Vec<f64> = v.iter().zip(&w).map(|(a, b)| a + b).collect();
            if e.eval(&vw) > (mv + mw) * (1.0 + 1e-12) {
                return fail("subadditivity");
            }
        }
        for i in 0..n {
            let mut v = vec![0.0; n];
            v[i] = 1e3;
            let a = e.eval(&v);
            v[i] = 1e9;
            if !(e.eval(&v) > 1e3 * a.max(1e-300)) {
                return fail("unboundedness");
            }
        }
        Ok(())
    }
}

/// Shape of the aggregation across rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Form {
    Max,
    Sum,
    Mixed,
}

/// Γμ(s)ᵢ = μᵢ(γᵢ₁(s₁), …, γᵢₙ(sₙ)).
#[derive(Debug)]
pub struct GainOperator {
    matrix: GainMatrix,
    maf: Vec<Maf>,
    linear: Option<Vec<f64>>,
    ones_orbit: OnceLock<Vec<Vec<f64>>>,
}

impl Clone for GainOperator {
    fn clone(&self) -> Self {
        GainOperator {
            matrix: self.matrix.clone(),
            maf: self.maf.clone(),
            linear: self.linear.clone(),
            ones_orbit: OnceLock::new(),
        }
    }
}

/// Iterates of Γ on 𝟙 kept by [`GainOperator::ones_orbit`].
const ORBIT_LEN: usize = 16;

impl GainOperator {
    pub fn new(matrix: GainMatrix, maf: Vec<Maf>) -> Result<GainOperator> {
        if maf.len() != matrix.n {
            return Err(Error::Shape { expected: matrix.n, got: maf.len() });
        }
        for (i, m) in maf.iter().enumerate() {
            m.validate(matrix.n, i as u64)?;
        }
        let linear = matrix.linear_weights();
        Ok(GainOperator { matrix, maf, linear, ones_orbit: OnceLock::new() })
    }

    pub fn max_form(matrix: GainMatrix) -> GainOperator {
        let n = matrix.n;
        GainOperator::new(matrix, vec![Maf::Max; n]).expect("max aggregation is always valid")
    }

    pub fn sum_form(matrix: GainMatrix) -> GainOperator {
        let n = matrix.n;
        GainOperator::new(matrix, vec![Maf::Sum; n]).expect("sum aggregation is always valid")
    }

    pub fn n(&self) -> usize {
        self.matrix.n
    }

    pub fn matrix(&self) -> &GainMatrix {
        &self.matrix
    }

    pub fn mafs(&self) -> &[Maf] {
        &self.maf
    }

    pub fn form(&self) -> Form {
        if self.maf.iter().all(|m| *m == Maf::Max) {
            Form::Max
        } else if self.maf.iter().all(|m| *m == Maf::Sum) {
            Form::Sum
        } else {
            Form::Mixed
        }
    }

    /// Row-major slopes when every gain is linear.
    pub fn linear_weights(&self) -> Option<&[f64]> {
        self.linear.as_deref()
    }

    pub fn apply(&self, s: &[f64]) -> Result<Vec<f64>> {
        let n = self.n();
        if s.len() != n {
            return Err(Error::Shape { expected: n, got: s.len() });
        }
        if let Some(k) = s.iter().position(|x| !(*x >= 0.0)) {
            return Err(Error::Domain(format!("component {k} is {}", s[k])));
        }
        Ok(self.apply_unchecked(s))
    }

    pub(crate) fn apply_unchecked(&self, s: &[f64]) -> Vec<f64> {
        let n = self.n();
        let mut row = vec![0.0; n];
        (0..n)
            .map(|i| {
                match &self.linear {
                    Some(w) => {
                        for j in 0..n {
                            row[j] = w[i * n + j] * s[j];
                        }
                    }
                    None => {
                        for j in 0..n {
                            row[j] = match self.matrix.get(i, j) {
                                Some(g) => g.eval(s[j]).unwrap_or(f64::INFINITY),
                                None => 0.0,
                            };
                        }
                    }
                }
                self.maf[i].eval(&row)
            })
            .collect()
    }

    /// Γᵏ(s).
    pub fn power_apply(&self, k: usize, s: &[f64]) -> Result<Vec<f64>> {
        if self.form() == Form::Mixed {
            return Err(Error::Unsupported("powers need a uniform max or sum form".into()));
        }
        if k == 0 {
            return Err(Error::Config("power must be ≥ 1".into()));
        }
        let mut x = self.apply(s)?;
        if s.iter().all(|&v| v == 1.0) && k <= ORBIT_LEN {
            return Ok(self.ones_orbit()[k - 1].clone());
        }
        for _ in 1..k {
            x = self.apply_unchecked(&x);
        }
        Ok(x)
    }

    /// Γ(𝟙), Γ²(𝟙), … (first 16 iterates), computed once.
    pub fn ones_orbit(&self) -> &[Vec<f64>] {
        self.ones_orbit.get_or_init(|| {
            let mut out = Vec::with_capacity(ORBIT_LEN);
            let mut x = vec![1.0; self.n()];
            for _ in 0..ORBIT_LEN {
                x = self.apply_unchecked(&x);
                out.push(x.clone());
            }
            out
        })
    }
}

/// Whole-network description as read from a network file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub n: usize,
    #[serde(default)]
    pub entries: Vec<EntrySpec>,
    /// Spatially invariant row applied to every index with periodic wrap.
    #[serde(default)]
    pub circulant: Option<Vec<OffsetSpec>>,
    pub maf: MafSpec,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntrySpec {
    pub i: usize,
    pub j: usize,
    pub gain: KFun,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OffsetSpec {
    pub offset: isize,
    pub gain: KFun,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MafSpec {
    Uniform(Maf),
    PerRow(Vec<Maf>),
}

impl NetworkSpec {
    pub fn build(&self) -> Result<GainOperator> {
        let mut m = match &self.circulant {
            Some(row) => {
                let row: Vec<(isize, KFun)> = row.iter().map(|o| (o.offset, o.gain.clone())).collect();
                GainMatrix::circulant(self.n, &row)?
            }
            None => GainMatrix::new(self.n),
        };
        for e in &self.entries {
            m.set(e.i, e.j, e.gain.clone())?;
        }
        let maf = match &self.maf {
            MafSpec::Uniform(m) => vec![m.clone(); self.n],
            MafSpec::PerRow(v) => v.clone(),
        };
        GainOperator::new(m, maf)
    }

    pub fn is_truncation(&self) -> bool {
        self.circulant.is_some()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    pub(crate) fn lin_op(rows: &[Vec<f64>], max: bool) -> GainOperator {
        let m = GainMatrix::from_linear(rows).unwrap();
        if max {
            GainOperator::max_form(m)
        } else {
            GainOperator::sum_form(m)
        }
    }

    #[test]
    fn apply_examples() {
        let op = lin_op(&[vec![0.0, 0.5], vec![0.5, 0.0]], true);
        assert_eq!(op.apply(&[1.0, 1.0]).unwrap(), vec![0.5, 0.5]);
        let op = lin_op(&[vec![0.0, 0.3], vec![0.4, 0.0]], false);
        let v = op.apply(&[1.0, 2.0]).unwrap();
        assert!((v[0] - 0.6).abs() < 1e-15 && (v[1] - 0.4).abs() < 1e-15);
        assert_eq!(op.apply(&[0.0, 0.0]).unwrap(), vec![0.0, 0.0]);
        assert!(matches!(op.apply(&[-1.0, 0.0]), Err(Error::Domain(_))));
        assert!(matches!(op.apply(&[1.0]), Err(Error::Shape { .. })));
    }

    #[test]
    fn diagonal_forced_zero() {
        let mut g = GainMatrix::new(2);
        assert!(g.set(0, 0, KFun::identity()).is_err());
        assert!(GainMatrix::from_linear(&[vec![0.1, 0.0], vec![0.0, 0.0]]).is_err());
        let mut g2 = GainMatrix::with_self_loops(1);
        g2.set(0, 0, KFun::identity()).unwrap();
        g.set(0, 1, KFun::identity()).unwrap();
    }

    #[test]
    fn powers() {
        let op = lin_op(&[vec![0.0, 0.5], vec![0.5, 0.0]], true);
        assert_eq!(op.power_apply(2, &[1.0, 1.0]).unwrap(), vec![0.25, 0.25]);
        assert_eq!(op.power_apply(1, &[1.0, 2.0]).unwrap(), op.apply(&[1.0, 2.0]).unwrap());
        let op = lin_op(&[vec![0.0, 0.2, 0.0], vec![0.0, 0.0, 0.3], vec![0.4, 0.0, 0.0]], true);
        let v = op.power_apply(3, &[1.0, 1.0, 1.0]).unwrap();
        for x in v {
            assert!((x - 0.024).abs() < 1e-15);
        }
    }

    /// sup over walks i=i0→i1→…→ik of γ_{i0 i1}∘…∘γ_{i(k−1) ik}(s_ik)
    fn walk_sup(op: &GainOperator, k: usize, s: &[f64]) -> Vec<f64> {
        let n = op.n();
        fn rec(op: &GainOperator, i: usize, left: usize, s: &[f64]) -> f64 {
            if left == 0 {
                return s[i];
            }
            let mut best = 0.0f64;
            for j in 0..op.n() {
                if let Some(g) = op.matrix().get(i, j) {
                    best = best.max(g.eval(rec(op, j, left - 1, s)).unwrap());
                }
            }
            best
        }
        (0..n).map(|i| rec(op, i, k, s)).collect()
    }

    fn arb_max_op() -> impl Strategy<Value = (GainOperator, Vec<f64>)> {
        (2usize..=5).prop_flat_map(|n| {
            let gain = prop_oneof![
                Just(None),
                (0.1f64..2.0).prop_map(|a| Some(KFun::linear(a).unwrap())),
                (0.1f64..2.0).prop_map(|a| Some(KFun::saturation(a).unwrap())),
                (0.1f64..2.0, 0.5f64..2.0).prop_map(|(a, p)| Some(KFun::power(a, p).unwrap())),
            ];
            (
                proptest::collection::vec(gain, n * n),
                proptest::collection::vec(0.0f64..5.0, n),
            )
                .prop_map(move |(gs, s)| {
                    let mut m = GainMatrix::new(n);
                    for (k, g) in gs.into_iter().enumerate() {
                        if let Some(g) = g {
                            if k / n != k % n {
                                m.set(k / n, k % n, g).unwrap();
                            }
                        }
                    }
                    (GainOperator::max_form(m), s)
                })
        })
    }

    fn arb_linear_rows() -> impl Strategy<Value = Vec<Vec<f64>>> {
        (2usize..=6).prop_flat_map(|n| {
            proptest::collection::vec(proptest::collection::vec(prop_oneof![Just(0.0), 0.0f64..2.0], n), n)
                .prop_map(|mut rows| {
                    for (i, r) in rows.iter_mut().enumerate() {
                        r[i] = 0.0;
                    }
                    rows
                })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn power_formula((op, s) in arb_max_op(), k in 1usize..=6) {
            let a = op.power_apply(k, &s).unwrap();
            let b = walk_sup(&op, k, &s);
            prop_assert_eq!(a, b);
        }

        #[test]
        fn monotone((op, s) in arb_max_op(), bump in proptest::collection::vec(0.0f64..3.0, 5)) {
            let t: Vec<f64> = s.iter().zip(&bump).map(|(a, b)| a + b).collect();
            let (fs, ft) = (op.apply(&s).unwrap(), op.apply(&t).unwrap());
            prop_assert!(fs.iter().zip(&ft).all(|(a, b)| a <= b));
        }

        #[test]
        fn homogeneous_and_subadditive(rows in arb_linear_rows(), a in 0.01f64..10.0, seed in 0u64..1000) {
            let n = rows.len();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s1: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 4.0).collect();
            let s2: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 4.0).collect();
            for max in [true, false] {
                let op = lin_op(&rows, max);
                let lhs = op.apply(&s1.iter().map(|x| a * x).collect::<Vec<_>>()).unwrap();
                let rhs = op.apply(&s1).unwrap();
                for (l, r) in lhs.iter().zip(&rhs) {
                    prop_assert!((l - a * r).abs() <= 1e-12 * (1.0 + l.abs()));
                }
                let sum: Vec<f64> = s1.iter().zip(&s2).map(|(x, y)| x + y).collect();
                let l = op.apply(&sum).unwrap();
                let r2 = op.apply(&s2).unwrap();
                for i in 0..n {
                    prop_assert!(l[i] <= (rhs[i] + r2[i]) * (1.0 + 1e-12));
                }
            }
        }
    }

    #[test]
    fn custom_maf_axioms() {
        let ok = Maf::Custom(MafExpr::PNorm {
            p: 2.0,
            args: vec![MafExpr::Arg { i: 0 }, MafExpr::Scale { c: 2.0, of: Box::new(MafExpr::Arg { i: 1 }) }],
        });
        ok.validate(2, 7).unwrap();
        // ignores argument 1: not unbounded along it
        let bad = Maf::Custom(MafExpr::Arg { i: 0 });
        assert!(bad.validate(2, 7).is_err());
        let m = GainMatrix::from_linear(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert!(GainOperator::new(m.clone(), vec![bad.clone(), Maf::Max]).is_err());
        let op = GainOperator::new(m, vec![ok, Maf::Sum]).unwrap();
        assert_eq!(op.form(), Form::Mixed);
        assert_eq!(op.apply(&[0.0, 0.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn network_spec_json() {
        let txt = r#"{"n":3,"entries":[{"i":0,"j":1,"gain":{"kind":"linear","a":0.5}}],
            "circulant":[{"offset":1,"gain":{"kind":"saturation","a":0.3}}],"maf":"max"}"#;
        let spec: NetworkSpec = serde_json::from_str(txt).unwrap();
        let op = spec.build().unwrap();
        assert_eq!(op.n(), 3);
        assert!(op.matrix().get(2, 0).is_some());
        assert_eq!(op.matrix().get(0, 1).unwrap().as_linear(), Some(0.5));
        let bad = r#"{"n":2,"maf":"max","extra":1}"#;
        assert!(serde_json::from_str::<NetworkSpec>(bad).is_err());
        let per_row: NetworkSpec = serde_json::from_str(r#"{"n":2,"maf":["max","sum"]}"#).unwrap();
        assert_eq!(per_row.build().unwrap().form(), Form::Mixed);
    }

    #[test]
    fn ones_orbit_cached() {
        let op = lin_op(&[vec![0.0, 0.5], vec![2.0, 0.0]], false);
        let a = op.power_apply(5, &[1.0, 1.0]).unwrap();
        let mut x = vec![1.0, 1.0];
        for _ in 0..5 {
            x = op.apply(&x).unwrap();
        }
        assert_eq!(a, x);
    }
}
