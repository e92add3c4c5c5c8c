//! Viscous Burgers equation on both sides of b = π²: simulate, print the L²
//! norm decay and check the dissipation law of ∫x².

use isskit::pdelab::{
    build_model, dissipation_check, simulate_strided, state_norm, Law, LyapFunctional, ModelSpec, PdeKind, Signal,
};
use std::f64::consts::PI;

fn main() -> isskit::Result<()> {
    for ratio in [0.8, 1.2] {
        let m = build_model(&ModelSpec::new(PdeKind::Burgers { a: 1.0, b: ratio * PI * PI }, 256))?;
        let x0: Vec<f64> = m.nodes().iter().map(|z| 0.5 * (PI * z).sin()).collect();
        let u = Signal::Sine { amp: 0.1, freq: 1.0, offset: 0.0 };
        let tr = simulate_strided(&m, &x0, &u, 1.0, m.dt(), 1)?;
        let norms: Vec<String> = tr.states.iter().step_by(tr.len() / 5).map(|x| format!("{:.4}", state_norm(&m, x))).collect();
        println!("b = {ratio}·π²: ‖x‖ = {}", norms.join(" "));

        let law = Law::Burgers { eps: 0.5 };
        let rep = dissipation_check(&m, &LyapFunctional::L2, &tr, &law, 0.02)?;
        println!("  dissipation law: {} of {} samples violate", rep.violation_count, rep.checked);
    }
    Ok(())
}
