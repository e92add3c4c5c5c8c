//! Lyapunov functions of ẋ = Ax + Bu: the quadratic one and the
//! sup-type V^γ, with a dissipation check along a simulated run.

use isskit::linstab::{decay_pair, quad_lyap, sup_lyap, sup_lyap_dissipation, LinModel};
use nalgebra::DMatrix;

fn main() -> isskit::Result<()> {
    let a = DMatrix::from_row_slice(3, 3, &[-1.0, 4.0, 0.0, 0.0, -2.0, 4.0, 0.0, 0.0, -3.0]);
    let b = DMatrix::from_row_slice(3, 1, &[0.0, 0.0, 1.0]);
    let m = LinModel::dense(a, b)?;

    let q = quad_lyap(&m)?;
    println!("quadratic V: residual {:.2e}, V(1,1,1) = {:.4}", q.residual, q.eval(&[1.0, 1.0, 1.0])?);

    let d = decay_pair(&m)?;
    println!("‖T(t)‖ ≤ {:.3}·e^(−{:.3}t)", d.m, d.lambda);
    let v = sup_lyap(&m, 0.5 * d.lambda)?;
    let u = [0.5];
    let tr = m.simulate(&[1.0, -1.0, 2.0], &u, 3.0, 1e-3)?;
    let rep = sup_lyap_dissipation(&v, &tr, &u, 0.02)?;
    println!("V^γ dissipation over {} samples: {} (worst relative excess {:.2e})", rep.samples, rep.pass, rep.worst_rel_excess);
    Ok(())
}
