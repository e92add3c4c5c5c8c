//! Ω-path for two interconnected systems and the composite Lyapunov
//! function V = max σᵢ⁻¹(Vᵢ), audited along a simulated trajectory.

use isskit::compfun::KFun;
use isskit::netlyap::{
    compose_lyapunov, construction_grid, dissipation_audit, two_system_operator, two_system_path, validate_path,
    Subsystem,
};
use isskit::ode::rk4_step;
use isskit::trajectory::Trajectory;

fn main() -> isskit::Result<()> {
    let (chi12, chi21) = (KFun::power(0.8, 2.0)?, KFun::power(0.9, 0.5)?);
    let path = two_system_path(&chi12, &chi21)?;
    let op = two_system_operator(&chi12, &chi21)?;
    let check = validate_path(&op, &path, &construction_grid())?;
    println!("path valid on {} points, worst margin {:.3e}", check.grid_points, check.worst_margin);

    // ẋ₁ = −x₁ + 0.3x₂, ẋ₂ = −x₂ + 0.3x₁ with Vᵢ = |xᵢ| and linear gains 0.5
    let lin = KFun::linear(0.5)?;
    let path = two_system_path(&lin, &lin)?;
    let subs = vec![Subsystem::new(0..1, |x| x[0].abs()), Subsystem::new(1..2, |x| x[0].abs())];
    let clf = compose_lyapunov(subs, &path, vec![None, None])?;

    let f = |_: f64, x: &[f64], d: &mut [f64]| {
        d[0] = -x[0] + 0.3 * x[1];
        d[1] = -x[1] + 0.3 * x[0];
    };
    let dt = 1e-3;
    let mut x = vec![-2.0, 2.0];
    let mut next = vec![0.0; 2];
    let (mut times, mut states) = (vec![0.0], vec![x.clone()]);
    for k in 0..10_000 {
        rk4_step(&f, k as f64 * dt, &x, dt, &mut next);
        x.copy_from_slice(&next);
        times.push((k + 1) as f64 * dt);
        states.push(x.clone());
    }
    let traj = Trajectory::new(times, states, vec![], None)?;
    let rep = dissipation_audit(&clf, &traj, &[0.0], 0.0)?;
    println!("V(x0) = {:.4}, V(x(10)) = {:.3e}", clf.eval(&[-2.0, 2.0])?, clf.eval(traj.last().unwrap())?);
    println!("audit: {} samples, {} violations", rep.samples, rep.violations.len());
    Ok(())
}
