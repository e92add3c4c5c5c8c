//! Truncations of the spatially invariant linear and cubic networks.

use isskit::pdelab::{build_model, regime, simulate, state_norm, ModelSpec, PdeKind, Signal};

fn main() -> isskit::Result<()> {
    let k = 64;
    let cases = [
        PdeKind::InfiniteLinear { a: 0.5, b: 0.3, k },
        PdeKind::InfiniteLinear { a: 0.6, b: 0.5, k },
        PdeKind::InfiniteCubic { a: 0.8, b: 0.5, k },
        PdeKind::InfiniteCubic { a: 1.2, b: 0.5, k },
    ];
    for kind in cases {
        let m = build_model(&ModelSpec::new(kind, 0))?;
        let tr = simulate(&m, &vec![1.0; k], &Signal::Zero, 10.0, 1e-2)?;
        let reg = regime(&kind, 1.0)?;
        let end = match tr.blow_up {
            Some(t) => format!("blow-up at t = {t:.2}"),
            None => format!("‖x(10)‖∞ = {:.4}", state_norm(&m, tr.last().unwrap())),
        };
        println!("{} {} = {:.1}: {end}", kind.name(), reg.threshold.parameter, reg.value);
    }
    Ok(())
}
