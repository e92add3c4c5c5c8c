//! The ensemble whose k-th mode peaks at height k although every mode
//! returns to rest: global attractivity without global stability.

use isskit::pdelab::{ensemble_s1, escape_time, s1_constant};

fn main() -> isskit::Result<()> {
    let c = s1_constant();
    println!("c = {c:.6}, escape time of ẋ = −2x + x² from c: {}", escape_time(c)?);
    let r = ensemble_s1(8, 8.0)?;
    for p in &r.peaks {
        println!("mode {:2}: peak {:8.3} at t = {:.4}", p.k, p.peak, p.time);
    }
    println!("every peak ≥ k: {}", r.linear_growth);
    Ok(())
}
