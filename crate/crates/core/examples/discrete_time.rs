//! Monotone discrete-time system x(k+1) = A(x(k)) + u(k): simulation,
//! eISS fit and a max-type Lyapunov function.

use isskit::gainops::{GainMatrix, GainOperator};
use isskit::monotone_dt::{build_lyapunov, eiss_fit, simulate};

fn main() -> isskit::Result<()> {
    let rows = vec![vec![0.2, 0.5, 0.0], vec![0.0, 0.3, 0.4], vec![0.3, 0.0, 0.1]];
    let op = GainOperator::sum_form(GainMatrix::from_linear_with_loops(&rows)?);
    let u = vec![vec![0.1, 0.0, 0.05]; 40];
    let traj = simulate(&op, &[4.0, 1.0, 2.0], &u, 40)?;
    println!("A-inequality defect along the run: {:.2e}", traj.inequality_defect(&op)?);

    let v = build_lyapunov(&op, 1.1)?;
    let cert = v.certify(2000, 5);
    println!("V certified on {} samples: {} (worst margin {:.3e})", cert.samples, cert.pass, cert.worst_margin);
    let (m, a, gamma) = v.eiss_constants()?;
    println!("eISS constants M = {m:.3}, a = {a:.3}, γ(1) = {:.3}", gamma.eval(1.0)?);
    let fit = eiss_fit(&traj, m, a, Some(&gamma))?;
    println!("eISS bound holds along the run: {} (worst margin {:.3e})", fit.pass, fit.worst_margin);
    Ok(())
}
