//! Spectral radius of linear gain operators and the Kleene star.

use isskit::gainops::{kleene_star, max_cycle_geometric_mean, spectral_radius, GainMatrix, GainOperator};

fn main() -> isskit::Result<()> {
    let rows = vec![vec![0.0, 2.0, 0.0], vec![0.0, 0.0, 0.3], vec![0.6, 0.0, 0.0]];
    let max = GainOperator::max_form(GainMatrix::from_linear(&rows)?);
    let est = spectral_radius(&max)?;
    let w: Vec<f64> = rows.concat();
    println!(
        "max form: radius {:.6} in {} iterations, cycle mean {:?}",
        est.radius,
        est.iterations,
        max_cycle_geometric_mean(&w, 3)
    );

    let sum = GainOperator::sum_form(GainMatrix::from_linear(&rows)?);
    println!("sum form: radius {:.6}", spectral_radius(&sum)?.radius);

    let s = [1.0, 0.0, 0.5];
    let q = kleene_star(&max, &s)?;
    println!("Q(s) = {:?} after {} iterations", q.q, q.iterations);
    println!("Γ(Q) = {:?}", max.apply(&q.q)?);

    let loud = GainOperator::max_form(GainMatrix::from_linear(&[vec![0.0, 2.0], vec![0.6, 0.0]])?);
    match kleene_star(&loud, &[1.0, 1.0]) {
        Err(e) => println!("cycle product 1.2: {e}"),
        Ok(q) => println!("unexpected convergence {:?}", q.q),
    }
    Ok(())
}
