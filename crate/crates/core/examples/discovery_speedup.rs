//! Mean discovery time, standalone vs WiFi-assisted, against device count.
//!
//! cargo run --release --example discovery_speedup -- [beamwidth_deg] [seeds]

use cogcell::discovery::{
    discover_assisted, discover_standalone, mean_elapsed_us, random_bearings, DiscoveryParams,
};
use cogcell::mac_control::MacParams;
use cogcell::mac_mmwave::SectorConfig;
use cogcell::metrics::Collector;
use cogcell::sim::{RngStream, SimTime};

fn main() {
    let mut args = std::env::args().skip(1);
    let bw: f64 = args.next().and_then(|a| a.parse().ok()).unwrap_or(60.0);
    let seeds: u64 = args.next().and_then(|a| a.parse().ok()).unwrap_or(20);
    let sectors = SectorConfig::new(bw, SimTime::from_millis(1)).expect("beamwidth");
    let params = DiscoveryParams::default();
    let quiet = DiscoveryParams {
        signaling_overhead: false,
        ..params.clone()
    };
    let mac = MacParams::default();

    println!(
        "{:>7} {:>14} {:>14} {:>14} {:>8}",
        "devices", "standalone_ms", "assisted_ms", "no_overhead_ms", "speedup"
    );
    for n in [1usize, 5, 10, 15, 20, 25, 30] {
        let (mut s, mut a, mut q) = (0.0, 0.0, 0.0);
        for seed in 0..seeds {
            let devs = random_bearings(n, &mut RngStream::new(seed, 1));
            s += mean_elapsed_us(
                &discover_standalone(&devs, &sectors, &params, &mut RngStream::new(seed, 2))
                    .unwrap(),
            );
            let mut m = Collector::new("discovery", seed);
            a += mean_elapsed_us(
                &discover_assisted(&devs, &sectors, &params, &mac, seed, &mut m).unwrap(),
            );
            q += mean_elapsed_us(
                &discover_assisted(&devs, &sectors, &quiet, &mac, seed, &mut m).unwrap(),
            );
        }
        let k = seeds as f64 * 1e3;
        println!(
            "{n:>7} {:>14.2} {:>14.2} {:>14.2} {:>8.2}",
            s / k,
            a / k,
            q / k,
            s / a
        );
    }
}
