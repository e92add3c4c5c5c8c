//! Small-gain checks on a three-node network with nonlinear gains.

use isskit::compfun::KFun;
use isskit::gainops::{check_small_gain, cycle_report, GainMatrix, GainOperator, SampleOpts, SgcMode};

fn main() -> isskit::Result<()> {
    let mut g = GainMatrix::new(3);
    g.set(0, 1, KFun::saturation(0.8)?)?;
    g.set(1, 2, KFun::power(0.7, 1.5)?)?;
    g.set(2, 0, KFun::linear(0.9)?)?;
    g.set(1, 0, KFun::log1p(0.4)?)?;

    for c in cycle_report(&g)? {
        println!("cycle {:?}: contraction {}", c.cycle, c.contraction);
    }

    let opts = SampleOpts { seed: 3, ..SampleOpts::default() };
    for op in [GainOperator::max_form(g.clone()), GainOperator::sum_form(g)] {
        let strong = SgcMode::Strong { rho: KFun::linear(0.05)? };
        for mode in [SgcMode::NoJointIncrease, strong] {
            let r = check_small_gain(&op, &mode, &opts)?;
            println!("{:?} {}: {:?} after {} samples", op.form(), r.mode, r.verdict, r.samples);
        }
    }
    Ok(())
}
