//! Waiting time for a sector's CBAP window under the round-robin rotation.
//!
//! cargo run --release --example cbap_wait -- [beamwidth_deg] [cbap_us]

use cogcell::mac_mmwave::SectorConfig;
use cogcell::sim::{RngStream, SimTime};

fn main() {
    let mut args = std::env::args().skip(1);
    let bw: f64 = args.next().and_then(|a| a.parse().ok()).unwrap_or(90.0);
    let d_us: u64 = args.next().and_then(|a| a.parse().ok()).unwrap_or(1000);
    let sectors = SectorConfig::new(bw, SimTime::from_micros(d_us)).expect("beamwidth");
    let sched = sectors.schedule(SimTime::ZERO);
    let n = sectors.sector_count();
    println!("{n} sectors, cycle {}", sched.cycle_length());

    let just_missed = sched
        .wait(0, SimTime::from_micros(d_us) + SimTime::from_nanos(1))
        .unwrap();
    println!("request 1 ns after its window closes waits {just_missed}");

    let mut rng = RngStream::new(7, 0);
    let cycle = sched.cycle_length().as_nanos();
    let (mut all, mut outside, mut k) = (0.0, 0.0, 0u32);
    for _ in 0..100_000 {
        let t = SimTime::from_nanos(rng.below(cycle * 1000));
        let w = sched.wait(0, t).unwrap().as_micros_f64();
        all += w;
        if sched.next_window(0, t).unwrap().start > t {
            outside += w;
            k += 1;
        }
    }
    println!(
        "mean wait, all arrivals:            {:>9.1} us",
        all / 100_000.0
    );
    println!(
        "mean wait, arrivals outside window: {:>9.1} us",
        outside / k as f64
    );
}
