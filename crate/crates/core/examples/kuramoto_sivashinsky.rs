//! Smallest eigenvalue σ(λ) of the clamped fourth-order operator, the
//! critical value λ = 4π² and a simulation on each side.

use isskit::pdelab::{
    build_model, ks_sigma, regime, simulate_strided, state_norm, ModelSpec, PdeKind, Profile, Signal,
};
use std::f64::consts::PI;

fn main() -> isskit::Result<()> {
    for r in [0.0, 0.5, 0.9, 1.0, 1.1] {
        println!("σ({r}·4π²) = {:10.4}", ks_sigma(r * 4.0 * PI * PI, 512)?);
    }
    for r in [0.9, 1.1] {
        let kind = PdeKind::KuramotoSivashinsky { lambda: r * 4.0 * PI * PI, b: 1.0 };
        let m = build_model(&ModelSpec::new(kind, 256))?;
        let x0 = Profile::Random { amp: 1e-3, modes: 6, seed: 1 }.expand(&m)?;
        let tr = simulate_strided(&m, &x0, &Signal::Zero, 1.0, m.dt(), 1000)?;
        let reg = regime(&kind, 1.0)?;
        println!(
            "λ = {r}·4π²: predicted stable {}, ‖x(1)‖/‖x(0)‖ = {:.3e}",
            reg.predicted_stable,
            state_norm(&m, tr.last().unwrap()) / state_norm(&m, &x0)
        );
    }
    Ok(())
}
