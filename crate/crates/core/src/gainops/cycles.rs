use super::GainMatrix;
use crate::compfun::{compose, geom_grid, KFun};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Largest n for exhaustive simple-cycle enumeration.
pub const DEFAULT_CYCLE_CAP: usize = 12;
const MAX_CYCLES: usize = 200_000;

/// One simple cycle i₁→…→iₖ→i₁ and its composed gain
/// γ_{i₁i₂}∘γ_{i₂i₃}∘…∘γ_{iₖi₁}.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CycleEntry {
    pub cycle: Vec<usize>,
    pub gain: KFun,
    pub contraction: bool,
    /// Level r with composed(r) ≥ r, when not a contraction.
    pub witness: Option<f64>,
}

pub fn cycle_report(g: &GainMatrix) -> Result<Vec<CycleEntry>> {
    cycle_report_capped(g, DEFAULT_CYCLE_CAP)
}

pub fn cycle_report_capped(g: &GainMatrix, cap: usize) -> Result<Vec<CycleEntry>> {
    let n = g.n();
    if n > cap {
        return Err(Error::Size(format!(
            "{n} nodes exceed the cycle enumeration cap {cap}; use the sampled small-gain check"
        )));
    }
    let mut cycles = Vec::new();
    let mut path = Vec::new();
    let mut on_path = vec![false; n];
    for start in 0..n {
        dfs(g, start, start, &mut path, &mut on_path, &mut cycles)?;
    }
    let probe = geom_grid(1e-9, 1e9, 64);
    cycles
        .into_iter()
        .map(|cycle| {
            let k = cycle.len();
            let mut composed = g.get(cycle[k - 1], cycle[0]).unwrap().clone();
            for idx in (0..k - 1).rev() {
                composed = compose(g.get(cycle[idx], cycle[idx + 1]).unwrap(), &composed)?;
            }
            let (gain, witness) = match composed.as_linear() {
                Some(a) => (KFun::linear(a)?, (a >= 1.0).then_some(1.0)),
                None => {
                    let mut w = None;
                    for &r in &probe {
                        if composed.eval(r)? >= r {
                            w = Some(r);
                            break;
                        }
                    }
                    (composed, w)
                }
            };
            Ok(CycleEntry { cycle, gain, contraction: witness.is_none(), witness })
        })
        .collect()
}

fn dfs(
    g: &GainMatrix,
    start: usize,
    v: usize,
    path: &mut Vec<usize>,
    on_path: &mut [bool],
    out: &mut Vec<Vec<usize>>,
) -> Result<()> {
    path.push(v);
    on_path[v] = true;
    for w in start..g.n() {
        if g.get(v, w).is_none() {
            continue;
        }
        if w == start {
            out.push(path.clone());
            if out.len() > MAX_CYCLES {
                return Err(Error::Size("too many simple cycles; use the sampled small-gain check".into()));
            }
        } else if !on_path[w] {
            dfs(g, start, w, path, on_path, out)?;
        }
    }
    path.pop();
    on_path[v] = false;
    Ok(())
}

/// Vector s with Γ(s) ≥ s built along a non-contracting cycle: sᵢ₁ = r and
/// backwards sᵢₖ = γᵢₖᵢ₁(r), sᵢⱼ = γᵢⱼᵢⱼ₊₁(sᵢⱼ₊₁).
pub(crate) fn cycle_witness(g: &GainMatrix, cycle: &[usize], r: f64) -> Result<Vec<f64>> {
    let k = cycle.len();
    let mut s = vec![0.0; g.n()];
    s[cycle[0]] = r;
    let mut next = r;
    for idx in (1..k).rev() {
        let to = if idx + 1 == k { cycle[0] } else { cycle[idx + 1] };
        next = g.get(cycle[idx], to).unwrap().eval(next)?;
        s[cycle[idx]] = next;
    }
    Ok(s)
}
