//! Re-beamforming on a rectangular walk with and without orientation
//! sensing, for several beamwidths.
//!
//! cargo run --release --example beam_tracking -- [noise_sigma_deg]

use cogcell::beamtrack::TrackingParams;
use cogcell::scenario::{fig5b, fig5b_route};

fn main() {
    let sigma: f64 = std::env::args()
        .nth(1)
        .and_then(|a| a.parse().ok())
        .unwrap_or(2.0);
    let params = TrackingParams {
        noise_sigma_deg: sigma,
        ..TrackingParams::default()
    };
    let rows = fig5b(
        &[60.0, 30.0, 20.0, 10.0],
        &fig5b_route(1),
        1.0,
        &params,
        10,
        0,
    )
    .expect("route");
    println!(
        "{:>8} {:>11} {:>8} {:>9}",
        "beam_deg", "mode", "rebeams", "cost_ms"
    );
    for r in rows {
        println!(
            "{:>8} {:>11} {:>8.1} {:>9.2}",
            r.beamwidth_deg, r.mode, r.rebeams, r.cost_ms
        );
    }
}
