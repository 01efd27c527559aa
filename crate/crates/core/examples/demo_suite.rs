//! Writes a synthetic suite (manifest plus placeholder inputs) for trying the
//! command line without energy counters.
//!
//! cargo run -p joulemark --example demo_suite -- <dir> [seed]

use joulemark::scenario::{uniform_slopes, ScenarioSpec};

fn main() {
    let mut args = std::env::args().skip(1);
    let Some(dir) = args.next() else {
        eprintln!("usage: demo_suite <dir> [seed]");
        std::process::exit(2);
    };
    let seed = args.next().and_then(|s| s.parse().ok()).unwrap_or(7);
    let spec = ScenarioSpec {
        idle_power_w: 2.0,
        seed,
        ..ScenarioSpec::new("synth", uniform_slopes(6, 0.00909, 0.01253))
    };
    match spec.write(std::path::Path::new(&dir)) {
        Ok(path) => println!("{}", path.display()),
        Err(e) => {
            eprintln!("{e}");
            std::process::exit(1);
        }
    }
}
