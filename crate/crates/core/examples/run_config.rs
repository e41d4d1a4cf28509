//! Drive the JSON experiment runner from code, as `subharnack run` does.

use subharnack::runner::{execute, parse_config, write_outputs};
use subharnack::Workers;

fn main() -> subharnack::Result<()> {
    let cfg = parse_config(
        r#"{
            "schema": 1,
            "experiment": "certify-log",
            "model": {"dim": 1, "drift": {"name": "ou", "a": 1.0}},
            "clock": {"bernstein": {"type": "gamma", "a": 3.0, "b": 1.0}},
            "grid": {"T": 1.0, "M": 50},
            "mc": {"N": 10000, "seed": 7},
            "observable": {"name": "sin1", "offset": 2.0},
            "points": {"x": [0.0], "y": [1.0]}
        }"#,
    )?;
    let outcome = execute(&cfg, Workers::from_env())?;
    print!("{}", outcome.summary);
    let dir = std::env::temp_dir().join("subharnack_run_config");
    write_outputs(&outcome, &dir)?;
    println!("exit status {} ; report in {}", outcome.status.exit_code(), dir.display());

    // validation names the offending field
    let bad = r#"{"schema": 1, "experiment": "moments", "clock": {"bernstein": {"type": "stable", "theta": 1.5}}, "params": {"k": 1, "t": 1}}"#;
    if let Err(e) = parse_config(bad) {
        println!("rejected: {e}");
    }
    Ok(())
}
