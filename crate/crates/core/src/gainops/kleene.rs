use super::{max_cycle_geometric_mean, Form, GainOperator};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

const MAX_ITER: usize = 10_000;
const STEP_TOL: f64 = 1e-12;
const BLOWUP: f64 = 1e12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KleeneResult {
    pub q: Vec<f64>,
    pub iterations: usize,
}

/// Q(s) = sup_k Γᵏ(s) for a max-form operator, via qₖ₊₁ = s ∨ Γ(qₖ).
///
/// With linear gains a cycle of geometric mean ≥ 1 is reported as
/// divergence up front (even at exactly 1, where the iterates stay bounded
/// but the robust small-gain condition already fails).
pub fn kleene_star(op: &GainOperator, s: &[f64]) -> Result<KleeneResult> {
    if op.form() != Form::Max {
        return Err(Error::Unsupported("Kleene star needs a max-form operator".into()));
    }
    op.apply(s)?;
    if s.iter().all(|&x| x == 0.0) {
        return Ok(KleeneResult { q: s.to_vec(), iterations: 0 });
    }
    if let Some(w) = op.linear_weights() {
        if let Some(m) = max_cycle_geometric_mean(w, op.n()) {
            if m >= 1.0 {
                return Err(Error::Divergence(format!("a cycle has gain product ≥ 1 (geometric mean {m})")));
            }
        }
    }
    let mut q = s.to_vec();
    for k in 1..=MAX_ITER {
        let g = op.apply_unchecked(&q);
        let next: Vec<f64> = s.iter().zip(&g).map(|(a, b)| a.max(*b)).collect();
        let step = next.iter().zip(&q).map(|(a, b)| a - b).fold(0.0, f64::max);
        q = next;
        if let Some(i) = q.iter().position(|&x| !(x <= BLOWUP)) {
            return Err(Error::Divergence(format!("component {i} exceeded 1e12 after {k} steps")));
        }
        if step < STEP_TOL {
            return Ok(KleeneResult { q, iterations: k });
        }
    }
    Err(Error::Divergence(format!("no convergence within {MAX_ITER} steps")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compfun::KFun;
    use crate::gainops::GainMatrix;

    fn op(rows: &[Vec<f64>]) -> GainOperator {
        GainOperator::max_form(GainMatrix::from_linear(rows).unwrap())
    }

    #[test]
    fn examples() {
        let o = op(&[vec![0.0, 0.5], vec![0.5, 0.0]]);
        assert_eq!(kleene_star(&o, &[0.0, 0.0]).unwrap().q, vec![0.0, 0.0]);
        assert_eq!(kleene_star(&o, &[1.0, 1.0]).unwrap().q, vec![1.0, 1.0]);
        let o = op(&[vec![0.0, 2.0], vec![1.0, 0.0]]);
        assert!(matches!(kleene_star(&o, &[1.0, 1.0]), Err(Error::Divergence(_))));
    }

    #[test]
    fn unit_cycle_is_divergent() {
        let o = op(&[vec![0.0, 1.0], vec![1.0, 0.0]]);
        assert!(matches!(kleene_star(&o, &[1.0, 0.5]), Err(Error::Divergence(_))));
    }

    #[test]
    fn nonlinear_star_properties() {
        let mut m = GainMatrix::new(3);
        m.set(0, 1, KFun::saturation(3.0).unwrap()).unwrap();
        m.set(1, 2, KFun::power(0.5, 1.0).unwrap()).unwrap();
        m.set(2, 0, KFun::log1p(1.0).unwrap()).unwrap();
        let o = GainOperator::max_form(m);
        let s = [0.1, 2.0, 5.0];
        let q = kleene_star(&o, &s).unwrap().q;
        assert!(s.iter().zip(&q).all(|(a, b)| a <= b));
        let gq = o.apply(&q).unwrap();
        assert!(gq.iter().zip(&q).all(|(a, b)| *a <= b + 1e-12));
    }

    #[test]
    fn sum_form_rejected() {
        let o = GainOperator::sum_form(GainMatrix::from_linear(&[vec![0.0, 0.5], vec![0.5, 0.0]]).unwrap());
        assert!(kleene_star(&o, &[1.0, 1.0]).is_err());
    }
}
