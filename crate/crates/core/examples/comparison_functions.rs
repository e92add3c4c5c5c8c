//! Build comparison functions, invert them, tabulate a KL envelope and audit
//! the comparison bound for ẏ = −α(y) + v(t).

use isskit::compfun::{comparison_with_inputs, compose, geom_grid, inverse, kl_envelope, KFun};

fn main() -> isskit::Result<()> {
    let alpha = compose(&KFun::saturation(2.0)?, &KFun::power(1.0, 2.0)?)?;
    println!("alpha = {}", serde_json::to_string(&alpha).unwrap());
    println!("class {:?}, alpha(1) = {}", alpha.class(), alpha.eval(1.0)?);

    let g = KFun::power(0.5, 3.0)?;
    let gi = inverse(&g)?;
    println!("g⁻¹(g(2)) = {}", gi.eval(g.eval(2.0)?)?);

    // ẏ = −y² has the flow r/(1+rt)
    let r = geom_grid(0.1, 10.0, 5);
    let t = [0.0, 0.5, 1.0, 2.0];
    let beta = kl_envelope(&KFun::power(1.0, 2.0)?, &r, &t)?;
    for &ri in &r {
        let row: Vec<String> = t.iter().map(|&ti| format!("{:.4}", beta.eval(ri, ti).unwrap())).collect();
        println!("β({ri:7.3}, ·) = {}", row.join("  "));
    }

    let v: Vec<f64> = (0..101).map(|k| 0.3 * (1.0 + (k as f64 * 0.2).sin())).collect();
    let audit = comparison_with_inputs(&alpha, 3.0, &v, 5.0)?;
    let worst = audit.margins.iter().copied().fold(f64::INFINITY, f64::min);
    println!("comparison bound holds: {} (smallest margin {worst:.3e})", audit.pass);
    Ok(())
}
