//! Runs the roaming scenario and prints per-session milestones, handover
//! gaps and the trace-replay check.
//!
//! cargo run --release --example roaming_session -- [scenario.toml]

use cogcell::metrics::Collector;
use cogcell::scenario::{load_scenario, run_scenario};

fn main() {
    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios/roaming.toml").into());
    let s = load_scenario(path.as_ref(), &[]).unwrap_or_else(|e| panic!("{e}"));
    let out = run_scenario(&s, true).unwrap_or_else(|e| panic!("{e}"));
    println!(
        "{:>4} {:>9} {:>10} {:>10} {:>10} {:>9}",
        "dev", "arrive_s", "grant_ms", "beam_ms", "done_ms", "bytes_24g"
    );
    for l in &out.report.sessions {
        let ms = |t: Option<cogcell::sim::SimTime>| {
            t.map_or("-".into(), |t| {
                format!("{:.2}", (t - l.arrival).as_secs_f64() * 1e3)
            })
        };
        println!(
            "{:>4} {:>9.2} {:>10} {:>10} {:>10} {:>9}",
            l.device,
            l.arrival.as_secs_f64(),
            ms(l.granted),
            ms(l.beamformed),
            ms(l.completed),
            l.bytes_24g
        );
    }
    for (k, d) in out.report.handover_durations.iter().enumerate() {
        println!("handover {k}: {d}");
    }
    print!("{}", out.record.summary());
    let lines = out.trace.expect("trace requested");
    let replayed = Collector::replay(&s.run_id, s.seed, lines.iter().map(String::as_str))
        .expect("trace parses");
    println!(
        "trace replay matches live record: {}",
        replayed == out.record
    );
}
