//! Access delay and transmission probability of REQ60 vs WIFI24 under
//! saturation, for growing station counts.
//!
//! cargo run --release --example control_priority -- [seeds]

use cogcell::mac_control::MacParams;
use cogcell::scenario::fig4bc;
use cogcell::sim::SimTime;

fn main() {
    let seeds: u32 = std::env::args()
        .nth(1)
        .and_then(|a| a.parse().ok())
        .unwrap_or(20);
    let rows = fig4bc(
        &MacParams::default(),
        &[4, 10, 20],
        seeds,
        0,
        SimTime::from_secs_f64(5.0),
    );
    println!(
        "{:>8} {:>16} {:>16} {:>10} {:>10} {:>8}",
        "stations", "req60_delay_us", "wifi24_delay_us", "req60_tau", "wifi24_tau", "ordered"
    );
    for r in rows {
        println!(
            "{:>8} {:>16.1} {:>16.1} {:>10.4} {:>10.4} {:>5}/{}",
            r.stations,
            r.req60_delay_us,
            r.wifi24_delay_us,
            r.req60_tau,
            r.wifi24_tau,
            r.ordered_runs,
            r.runs
        );
    }
}
