//! Run a threshold sweep task in-process, the way the `sweep` subcommand
//! does, and print its CSV table.

use isskit::cli::{execute, TaskKind};
use serde_json::json;

fn main() -> isskit::Result<()> {
    let params = json!({
        "scenario": {
            "model": { "kind": "burgers", "a": 1.0, "b": 1.0 },
            "n": 128,
            "t_end": 1.0,
            "x0": { "profile": "sine", "amp": 0.01, "mode": 1 }
        },
        "parameter": "b",
        "values": [0.5, 0.8, 1.2, 1.5],
        "relative": true
    });
    let (report, artifacts) = execute(TaskKind::ThresholdSweep, &params, 0, None, "inline".into())?;
    println!("outcome {:?}", report.outcome);
    for a in artifacts {
        print!("{}:\n{}", a.name, String::from_utf8_lossy(&a.bytes));
    }
    Ok(())
}
