//! Two coupled diffusions: the composite Lyapunov function from the linear
//! small-gain condition, and the gain region of the nonlinear pair.

use isskit::netlyap::dissipation_audit;
use isskit::pdelab::{
    build_model, coupled_linear_composite, nonlinear_rd_gain_region, simulate_strided, ModelSpec, PdeKind, Profile,
    Signal,
};
use std::f64::consts::PI;

fn main() -> isskit::Result<()> {
    for ratio in [0.8f64, 1.2] {
        let a = f64::sqrt(ratio);
        let kind = PdeKind::CoupledLinearRd { c1: 1.0, c2: 1.0, a12: a, a21: a, d: PI };
        let m = build_model(&ModelSpec::new(kind, 64))?;
        let x0 = Profile::Sine { amp: 1.0, mode: 1 }.expand(&m)?;
        let tr = simulate_strided(&m, &x0, &Signal::Zero, 10.0, 1e-3, 10)?;
        let cc = coupled_linear_composite(&m, 0.01)?;
        let rep = dissipation_audit(&cc.clf, &tr, &[0.0], 0.0)?;
        println!("|a12·a21| = {ratio}: loop gain {:.3}, {} violations", cc.loop_gain, rep.violations.len());
    }
    for q2 in [1.0, 4.0 / 3.0 * 2f64.powf(0.25)] {
        let g = nonlinear_rd_gain_region(1.0, q2, 60)?;
        println!("q1 = 1, q2 = {q2:.4}: sup ab = {:.3}, feasible {}", g.sup_product, g.feasible);
    }
    Ok(())
}
