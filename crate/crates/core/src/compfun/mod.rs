//! Comparison functions: class K, K∞ and positive definite scalar maps built
//! from a small expression algebra, plus KL envelopes and comparison bounds.

mod kl;

pub use kl::{comparison_with_inputs, kl_envelope, sontag_factor, ComparisonAudit, KLFun, KlTable};

use crate::error::{check_nonneg, Error, Result};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::Arc;

/// Class tag of a comparison function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Class {
    /// Continuous, zero at zero, strictly increasing.
    K,
    /// Class K and unbounded.
    KInf,
    /// Continuous, zero at zero, positive elsewhere.
    PD,
}

impl Class {
    pub fn is_k(self) -> bool {
        matches!(self, Class::K | Class::KInf)
    }
}

/// Serialized node of a [`KFun`] tree.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Node {
    /// `a·r`
    Linear { a: f64 },
    /// `a·r^p`
    Power { a: f64, p: f64 },
    /// `a·r/(1+r)`
    Saturation { a: f64 },
    /// `a·ln(1+r)`
    Log1p { a: f64 },
    /// `min(slope·r, cap)`
    AffineCap { slope: f64, cap: f64 },
    Compose { outer: KFun, inner: KFun },
    Max { args: Vec<KFun> },
    Min { args: Vec<KFun> },
    Sum { args: Vec<KFun> },
    Product { args: Vec<KFun> },
    Scale { c: f64, of: KFun },
    Inverse { of: KFun },
}

/// A comparison function. Cheap to clone; immutable.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Node", into = "Node")]
pub struct KFun {
    node: Arc<Node>,
    class: Class,
}

impl fmt::Debug for KFun {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", serde_json::to_string(&*self.node).unwrap_or_default())
    }
}

impl From<KFun> for Node {
    fn from(k: KFun) -> Node {
        (*k.node).clone()
    }
}

impl TryFrom<Node> for KFun {
    type Error = Error;
    fn try_from(n: Node) -> Result<KFun> {
        KFun::from_node(n)
    }
}

fn positive(x: f64, what: &str) -> Result<()> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("{what} must be finite and > 0, got {x}")))
    }
}

fn fold_class(args: &[KFun], op: &str) -> Result<Class> {
    if args.is_empty() {
        return Err(Error::Config(format!("{op} needs at least one argument")));
    }
    let any_pd = args.iter().any(|f| f.class == Class::PD);
    let any_inf = args.iter().any(|f| f.class == Class::KInf);
    let all_inf = args.iter().all(|f| f.class == Class::KInf);
    Ok(if any_pd {
        Class::PD
    } else {
        match op {
            "min" if all_inf => Class::KInf,
            "min" => Class::K,
            _ if any_inf => Class::KInf,
            _ => Class::K,
        }
    })
}

impl KFun {
    /// Build from a node, validating parameters and computing the class tag.
    pub fn from_node(node: Node) -> Result<KFun> {
        let class = match &node {
            Node::Linear { a } | Node::Saturation { a } | Node::Log1p { a } => {
                positive(*a, "coefficient")?;
                if matches!(node, Node::Saturation { .. }) {
                    Class::K
                } else {
                    Class::KInf
                }
            }
            Node::Power { a, p } => {
                positive(*a, "coefficient")?;
                positive(*p, "exponent")?;
                Class::KInf
            }
            Node::AffineCap { slope, cap } => {
                positive(*slope, "slope")?;
                positive(*cap, "cap")?;
                Class::PD
            }
            Node::Compose { outer, inner } => {
                if !outer.class.is_k() || !inner.class.is_k() {
                    return Err(Error::Class("compose needs class K arguments".into()));
                }
                if outer.class == Class::KInf && inner.class == Class::KInf {
                    Class::KInf
                } else {
                    Class::K
                }
            }
            Node::Max { args } => fold_class(args, "max")?,
            Node::Min { args } => fold_class(args, "min")?,
            Node::Sum { args } => fold_class(args, "sum")?,
            Node::Product { args } => fold_class(args, "product")?,
            Node::Scale { c, of } => {
                positive(*c, "scale")?;
                of.class
            }
            Node::Inverse { of } => {
                if of.class != Class::KInf {
                    return Err(Error::Class("inverse needs a K∞ function".into()));
                }
                Class::KInf
            }
        };
        Ok(KFun { node: Arc::new(node), class })
    }

    pub fn identity() -> KFun {
        KFun { node: Arc::new(Node::Linear { a: 1.0 }), class: Class::KInf }
    }

    pub fn linear(a: f64) -> Result<KFun> {
        KFun::from_node(Node::Linear { a })
    }

    pub fn power(a: f64, p: f64) -> Result<KFun> {
        KFun::from_node(Node::Power { a, p })
    }

    pub fn saturation(a: f64) -> Result<KFun> {
        KFun::from_node(Node::Saturation { a })
    }

    pub fn log1p(a: f64) -> Result<KFun> {
        KFun::from_node(Node::Log1p { a })
    }

    pub fn affine_cap(slope: f64, cap: f64) -> Result<KFun> {
        KFun::from_node(Node::AffineCap { slope, cap })
    }

    pub fn max(args: Vec<KFun>) -> Result<KFun> {
        KFun::from_node(Node::Max { args })
    }

    pub fn min(args: Vec<KFun>) -> Result<KFun> {
        KFun::from_node(Node::Min { args })
    }

    pub fn sum(args: Vec<KFun>) -> Result<KFun> {
        KFun::from_node(Node::Sum { args })
    }

    pub fn product(args: Vec<KFun>) -> Result<KFun> {
        KFun::from_node(Node::Product { args })
    }

    pub fn scale(&self, c: f64) -> Result<KFun> {
        KFun::from_node(Node::Scale { c, of: self.clone() })
    }

    pub fn class(&self) -> Class {
        self.class
    }

    pub fn node(&self) -> &Node {
        &self.node
    }

    /// Slope if the function is exactly `r ↦ a·r`.
    pub fn as_linear(&self) -> Option<f64> {
        match &*self.node {
            Node::Linear { a } => Some(*a),
            Node::Scale { c, of } => of.as_linear().map(|a| c * a),
            Node::Compose { outer, inner } => Some(outer.as_linear()? * inner.as_linear()?),
            Node::Max { args } => args.iter().map(|f| f.as_linear()).try_fold(0.0f64, |m, a| Some(m.max(a?))),
            Node::Min { args } => args
                .iter()
                .map(|f| f.as_linear())
                .try_fold(f64::INFINITY, |m, a| Some(m.min(a?))),
            Node::Sum { args } => args.iter().map(|f| f.as_linear()).try_fold(0.0, |s, a| Some(s + a?)),
            Node::Power { a, p } if *p == 1.0 => Some(*a),
            Node::Inverse { of } => of.as_linear().map(|a| 1.0 / a),
            _ => None,
        }
    }

    /// Evaluate at `r ≥ 0`.
    pub fn eval(&self, r: f64) -> Result<f64> {
        check_nonneg(r, "argument")?;
        self.value(r)
    }

    /// Evaluation that also accepts `+∞` (used internally by compositions).
    fn value(&self, r: f64) -> Result<f64> {
        Ok(match &*self.node {
            Node::Linear { a } => a * r,
            Node::Power { a, p } => a * r.powf(*p),
            Node::Saturation { a } => {
                if r < 1.0 {
                    a * r / (1.0 + r)
                } else {
                    // monotone in floating point for large r
                    a * (1.0 - 1.0 / (1.0 + r))
                }
            }
            Node::Log1p { a } => a * r.ln_1p(),
            Node::AffineCap { slope, cap } => (slope * r).min(*cap),
            Node::Compose { outer, inner } => outer.value(inner.value(r)?)?,
            Node::Max { args } => {
                let mut m = 0.0f64;
                for f in args {
                    m = m.max(f.value(r)?);
                }
                m
            }
            Node::Min { args } => {
                let mut m = f64::INFINITY;
                for f in args {
                    m = m.min(f.value(r)?);
                }
                m
            }
            Node::Sum { args } => {
                let mut s = 0.0;
                for f in args {
                    s += f.value(r)?;
                }
                s
            }
            Node::Product { args } => {
                let mut s = 1.0;
                for f in args {
                    s *= f.value(r)?;
                }
                s
            }
            Node::Scale { c, of } => c * of.value(r)?,
            Node::Inverse { of } => of.solve(r)?,
        })
    }

    /// Smallest `x` with `self(x) = y`, by bisection. Works for any K-tagged
    /// function; fails with a range error when `y` lies at or above the
    /// supremum of a bounded function.
    pub fn preimage(&self, y: f64) -> Result<f64> {
        check_nonneg(y, "argument")?;
        if !self.class.is_k() {
            return Err(Error::Class("preimage needs a class K function".into()));
        }
        self.solve(y)
    }

    fn solve(&self, y: f64) -> Result<f64> {
        if y == 0.0 {
            return Ok(0.0);
        }
        if y.is_infinite() {
            return Ok(f64::INFINITY);
        }
        let mut lo = 0.0;
        let mut hi = y.max(1.0);
        while self.value(hi)? < y {
            lo = hi;
            hi *= 2.0;
            if hi > 1e300 {
                return Err(Error::Range(format!("{y} is outside the range of {self:?}")));
            }
        }
        for _ in 0..4096 {
            let mid = 0.5 * (lo + hi);
            if hi - lo <= 1e-14 * hi || mid <= lo || mid >= hi {
                break;
            }
            if self.value(mid)? < y {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// Probe the class tag on a geometric grid up to 1e12.
    pub fn verify_class(&self) -> Result<()> {
        if self.value(0.0)? != 0.0 {
            return Err(Error::Class(format!("{self:?} is not zero at zero")));
        }
        let grid = geom_grid(1e-6, 1e12, 128);
        let vals = grid.iter().map(|&r| self.value(r)).collect::<Result<Vec<_>>>()?;
        for (r, v) in grid.iter().zip(&vals) {
            if !(*v > 0.0) {
                return Err(Error::Class(format!("{self:?} is not positive at {r}")));
            }
        }
        if self.class.is_k() {
            // above 1e6 a saturated value may sit on a floating-point plateau
            let bad = |k: usize| vals[k + 1] < vals[k] || (vals[k + 1] == vals[k] && grid[k] <= 1e6);
            if let Some(w) = (0..vals.len() - 1).find(|&k| bad(k)) {
                return Err(Error::Class(format!("{self:?} is not increasing near {}", grid[w])));
            }
        }
        if self.class == Class::KInf {
            let (a, b, c) = (self.value(1e6)?, self.value(1e9)?, self.value(1e12)?);
            if c - b < 1e-2 * (b - a) {
                return Err(Error::Class(format!("{self:?} looks bounded")));
            }
        }
        Ok(())
    }
}

/// f∘g
pub fn compose(f: &KFun, g: &KFun) -> Result<KFun> {
    KFun::from_node(Node::Compose { outer: f.clone(), inner: g.clone() })
}

/// Inverse node; `f` must be K∞.
pub fn inverse(f: &KFun) -> Result<KFun> {
    KFun::from_node(Node::Inverse { of: f.clone() })
}

/// `n` geometrically spaced points in `[lo, hi]`.
pub fn geom_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn lin(a: f64) -> KFun {
        KFun::linear(a).unwrap()
    }

    #[test]
    fn primitive_values() {
        assert_eq!(lin(2.0).eval(3.0).unwrap(), 6.0);
        assert_eq!(KFun::log1p(1.0).unwrap().eval(0.0).unwrap(), 0.0);
        assert!(lin(1.0).eval(-1.0).is_err());
        assert!(lin(1.0).eval(f64::NAN).is_err());
    }

    #[test]
    fn saturating_decay_rate_limit() {
        // 2π²·s²/(1+s²) as saturation∘power
        let pi2 = std::f64::consts::PI.powi(2);
        let alpha = compose(&KFun::saturation(2.0 * pi2).unwrap(), &KFun::power(1.0, 2.0).unwrap()).unwrap();
        let v = alpha.eval(1e6).unwrap();
        assert!((v - 2.0 * pi2).abs() / (2.0 * pi2) < 1e-4);
        assert_eq!(alpha.class(), Class::K);
    }

    #[test]
    fn composition() {
        let f = compose(&lin(2.0), &KFun::power(1.0, 2.0).unwrap()).unwrap();
        assert_eq!(f.eval(3.0).unwrap(), 18.0);
        let g = KFun::saturation(3.0).unwrap();
        let gi = compose(&g, &KFun::identity()).unwrap();
        for r in geom_grid(1e-3, 1e3, 64) {
            assert_eq!(g.eval(r).unwrap(), gi.eval(r).unwrap());
        }
        // r/a ∘ r/b with ab = 2
        let (a, b) = (4.0, 0.5);
        let c = compose(&lin(1.0 / a), &lin(1.0 / b)).unwrap();
        for r in geom_grid(1e-9, 1e9, 64) {
            assert!(c.eval(r).unwrap() < r);
        }
    }

    #[test]
    fn compose_rejects_pd() {
        let pd = KFun::affine_cap(1.0, 2.0).unwrap();
        assert!(matches!(compose(&pd, &lin(1.0)), Err(Error::Class(_))));
    }

    #[test]
    fn inverses() {
        let sq = inverse(&KFun::power(1.0, 2.0).unwrap()).unwrap();
        assert!((sq.eval(4.0).unwrap() - 2.0).abs() <= 1e-12);
        let li = inverse(&lin(4.0)).unwrap();
        assert!((li.eval(3.0).unwrap() - 0.75).abs() <= 1e-12);
        assert!(matches!(inverse(&KFun::saturation(1.0).unwrap()), Err(Error::Class(_))));
    }

    #[test]
    fn inverse_of_sum_matches_oracle() {
        // independent bisection on x + ln(1+x) = 1 to 1e-14
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        while hi - lo > 1e-14 {
            let m = 0.5 * (lo + hi);
            if m + m.ln_1p() < 1.0 {
                lo = m
            } else {
                hi = m
            }
        }
        let f = KFun::sum(vec![KFun::identity(), KFun::log1p(1.0).unwrap()]).unwrap();
        let x = inverse(&f).unwrap().eval(1.0).unwrap();
        assert!((x - 0.5 * (lo + hi)).abs() < 1e-12, "{x}");
    }

    #[test]
    fn bounded_preimage_is_range_error() {
        let s = KFun::saturation(1.0).unwrap();
        assert!((s.preimage(0.5).unwrap() - 1.0).abs() < 1e-9);
        assert!(matches!(s.preimage(1.5), Err(Error::Range(_))));
    }

    #[test]
    fn class_tags_probe() {
        for f in sample_funs() {
            f.verify_class().unwrap();
        }
        assert_eq!(KFun::min(vec![lin(1.0), KFun::saturation(1.0).unwrap()]).unwrap().class(), Class::K);
        assert_eq!(KFun::product(vec![lin(1.0), KFun::saturation(1.0).unwrap()]).unwrap().class(), Class::KInf);
    }

    #[test]
    fn json_round_trip() {
        let f = compose(&lin(2.0), &KFun::log1p(0.5).unwrap()).unwrap();
        let s = serde_json::to_string(&f).unwrap();
        assert!(s.starts_with(r#"{"kind":"compose","outer":{"kind":"linear""#));
        let g: KFun = serde_json::from_str(&s).unwrap();
        assert_eq!(f, g);
        let bad = r#"{"kind":"inverse","of":{"kind":"saturation","a":1.0}}"#;
        assert!(serde_json::from_str::<KFun>(bad).is_err());
        let bad = r#"{"kind":"linear","a":-1.0}"#;
        assert!(serde_json::from_str::<KFun>(bad).is_err());
    }

    #[test]
    fn linear_detection() {
        let f = compose(&lin(2.0), &KFun::max(vec![lin(0.5), lin(0.25)]).unwrap()).unwrap();
        assert_eq!(f.as_linear(), Some(1.0));
        assert_eq!(KFun::saturation(1.0).unwrap().as_linear(), None);
    }

    fn sample_funs() -> Vec<KFun> {
        let sat = KFun::saturation(2.0).unwrap();
        let pw = KFun::power(0.5, 1.5).unwrap();
        let lg = KFun::log1p(3.0).unwrap();
        vec![
            lin(0.7),
            pw.clone(),
            sat.clone(),
            lg.clone(),
            compose(&sat, &pw).unwrap(),
            compose(&lg, &lg).unwrap(),
            KFun::max(vec![sat.clone(), lin(0.01)]).unwrap(),
            KFun::min(vec![pw.clone(), lg.clone()]).unwrap(),
            KFun::sum(vec![sat.clone(), lg.clone()]).unwrap(),
            inverse(&KFun::sum(vec![pw.clone(), lg.clone()]).unwrap()).unwrap(),
        ]
    }

    fn arb_kfun() -> impl Strategy<Value = KFun> {
        let leaf = prop_oneof![
            (0.1f64..5.0).prop_map(|a| KFun::linear(a).unwrap()),
            (0.1f64..5.0, 0.3f64..3.0).prop_map(|(a, p)| KFun::power(a, p).unwrap()),
            (0.1f64..5.0).prop_map(|a| KFun::saturation(a).unwrap()),
            (0.1f64..5.0).prop_map(|a| KFun::log1p(a).unwrap()),
        ];
        leaf.prop_recursive(3, 12, 2, |inner| {
            prop_oneof![
                (inner.clone(), inner.clone()).prop_map(|(f, g)| compose(&f, &g).unwrap()),
                (inner.clone(), inner.clone()).prop_map(|(f, g)| KFun::max(vec![f, g]).unwrap()),
                (inner.clone(), inner.clone()).prop_map(|(f, g)| KFun::min(vec![f, g]).unwrap()),
                (inner.clone(), inner.clone()).prop_map(|(f, g)| KFun::sum(vec![f, g]).unwrap()),
            ]
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn k_trees_increase(f in arb_kfun()) {
            prop_assert_eq!(f.eval(0.0).unwrap(), 0.0);
            let grid = geom_grid(1e-4, 1e4, 128);
            let v: Vec<f64> = grid.iter().map(|&r| f.eval(r).unwrap()).collect();
            for w in v.windows(2) {
                prop_assert!(w[0] < w[1]);
            }
        }

        #[test]
        fn inverse_round_trip(f in arb_kfun()) {
            prop_assume!(f.class() == Class::KInf);
            let fi = inverse(&f).unwrap();
            for r in geom_grid(1e-3, 1e3, 32) {
                let y = f.eval(r).unwrap();
                prop_assume!(y < 1e12);
                let back = fi.eval(y).unwrap();
                prop_assert!((back - r).abs() <= 1e-10 * r.max(1.0), "{} vs {}", back, r);
            }
        }

        #[test]
        fn weak_triangle(f in arb_kfun()) {
            let g = geom_grid(1e-3, 1e3, 32);
            for &a in &g {
                for &b in &g {
                    let lhs = f.eval(a + b).unwrap();
                    let rhs = f.eval(2.0 * a).unwrap().max(f.eval(2.0 * b).unwrap());
                    prop_assert!(lhs <= rhs * (1.0 + 1e-14));
                }
            }
        }
    }
}
