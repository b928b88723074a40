//! Sweeps the discovery device count on the default floor plan and writes
//! the combined metrics CSV to stdout.
//!
//! cargo run --release --example device_sweep -- [seeds]

use cogcell::metrics::write_csv;
use cogcell::scenario::{default_floorplan, run_sweep, Sweep};

fn main() {
    let seeds: u32 = std::env::args()
        .nth(1)
        .and_then(|a| a.parse().ok())
        .unwrap_or(5);
    let mut base = default_floorplan();
    base.duration_s = 0.1;
    let sweep = Sweep {
        base,
        axis: "devices".into(),
        values: ["5", "10", "15", "20", "25", "30"]
            .map(String::from)
            .to_vec(),
        seeds_per_point: seeds,
    };
    let rows = run_sweep(&sweep).unwrap_or_else(|e| panic!("{e}"));
    write_csv(std::io::stdout().lock(), &rows).expect("stdout");
}
