//! Saturated single-category DCF against the two-equation fixed point.
//!
//! cargo run --release --example bianchi_check

use cogcell::mac_control::{category_params, AccessCategory, MacParams};
use cogcell::scenario::saturation_run;
use cogcell::sim::SimTime;

/// tau for n stations with window `w_i = min(w0 * 2^i, w_max)` and
/// `retries` retransmissions, by bisection on `p`.
fn fixed_point(n: usize, w0: f64, w_max: f64, retries: u32) -> f64 {
    let tau_of = |p: f64| {
        let (mut num, mut den, mut pk) = (0.0, 0.0, 1.0);
        for i in 0..=retries {
            let w = (w0 * 2f64.powi(i as i32)).min(w_max);
            num += pk;
            den += pk * (w + 1.0) / 2.0;
            pk *= p;
        }
        num / den
    };
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..200 {
        let p = 0.5 * (lo + hi);
        let g = 1.0 - (1.0 - tau_of(p)).powi(n as i32 - 1) - p;
        if g > 0.0 {
            lo = p
        } else {
            hi = p
        }
    }
    tau_of(0.5 * (lo + hi))
}

fn main() {
    let p = category_params(AccessCategory::Wifi24);
    let mac = MacParams::uniform(p.clone());
    println!(
        "{:>3} {:>10} {:>10} {:>8}",
        "n", "oracle", "simulated", "rel_err"
    );
    for n in [2, 5, 10, 20] {
        let r = saturation_run(&mac, 0, n, 1, SimTime::from_secs_f64(20.0));
        let sim = r
            .category(AccessCategory::Wifi24)
            .transmission_probability();
        let oracle = fixed_point(n, p.cw_min as f64, p.cw_max as f64, p.retry_limit);
        println!(
            "{n:>3} {oracle:>10.5} {sim:>10.5} {:>7.2}%",
            100.0 * (sim - oracle).abs() / oracle
        );
    }
}
