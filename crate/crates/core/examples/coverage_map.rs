//! Achievable rate from the WiFi AP and from the best picocell over the
//! default floor plan, on a 1 m grid.
//!
//! cargo run --release --example coverage_map

use cogcell::propagation::{cone_gain_dbi, Band, LinkModel};
use cogcell::scenario::default_floorplan;

fn main() {
    let s = default_floorplan();
    let floor = s.floor();
    let model = LinkModel::default();
    let ap = s.wifi_ap.position;
    let picos: Vec<_> = s
        .picocell_list()
        .iter()
        .map(|p| floor.rooms[floor.room_index(&p.room).unwrap()].center())
        .collect();
    let gain = cone_gain_dbi(s.mmwave.beamwidth_deg);
    println!("2.4 GHz rate (Mb/s) / best 60 GHz rate (Gb/s), rows from y = 9.5 down");
    for yi in (0..10).rev() {
        let mut line = String::new();
        for xi in 0..12 {
            let p = cogcell::floorplan::Point::new(xi as f64 + 0.5, yi as f64 + 0.5);
            let wifi = model
                .evaluate(
                    Band::Wifi24,
                    ap.distance(p).max(0.1),
                    floor.walls_crossed(ap, p),
                    0.0,
                    0.0,
                )
                .unwrap();
            let mm = picos
                .iter()
                .map(|&c| {
                    model
                        .evaluate(
                            Band::Mmwave60,
                            c.distance(p).max(0.1),
                            floor.walls_crossed(c, p),
                            gain,
                            0.0,
                        )
                        .unwrap()
                        .rate_bps
                })
                .fold(0.0, f64::max);
            line.push_str(&format!(" {:>2.0}/{:<3.1}", wifi.rate_bps / 1e6, mm / 1e9));
        }
        println!("{line}");
    }
}
