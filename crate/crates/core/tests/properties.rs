use proptest::prelude::*;

use cogcell::beamtrack::{maintain_link, TrackingMode, TrackingParams};
use cogcell::controller::{
    run_network, Blockage, ControllerConfig, DeviceSpec, Network, Picocell, SessionRequest,
};
use cogcell::floorplan::{FloorPlan, Point};
use cogcell::mac_control::{category_params, AccessCategory};
use cogcell::mac_mmwave::SectorConfig;
use cogcell::metrics::{read_csv, to_csv_string, Collector, MetricsRecord};
use cogcell::mobility::{MobilityTrace, RouteSpec, Waypoint};
use cogcell::propagation::angle_off;
use cogcell::sim::{RngStream, Scheduler, SimTime};

fn beamwidths() -> impl Strategy<Value = f64> {
    prop::sample::select(vec![10.0, 15.0, 20.0, 30.0, 45.0, 60.0, 90.0, 120.0])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn scheduler_dispatches_in_time_then_insertion_order(times in prop::collection::vec(0u64..1_000, 1..60)) {
        let mut sched: Scheduler<usize> = Scheduler::new();
        for (i, &t) in times.iter().enumerate() {
            sched.schedule(SimTime::from_nanos(t), 0, i).unwrap();
        }
        let mut seen = Vec::new();
        while let Some(ev) = sched.pop_until(SimTime::MAX) {
            seen.push((ev.fire_at.as_nanos(), ev.kind));
        }
        let mut expected: Vec<(u64, usize)> = times.iter().copied().zip(0..).collect();
        expected.sort();
        prop_assert_eq!(seen, expected);
    }

    #[test]
    fn bearing_lies_in_its_sector(bw in beamwidths(), bearing in 0.0f64..360.0) {
        let s = SectorConfig::new(bw, SimTime::from_millis(1)).unwrap();
        let k = s.sector_of(bearing);
        prop_assert!(k < s.sector_count());
        prop_assert!(angle_off(s.sector_center(k), bearing) <= bw / 2.0 + 1e-9);
    }

    #[test]
    fn cbap_wait_is_bounded(bw in beamwidths(), sector_seed in 0usize..1000, now in 0u64..50_000_000) {
        let d = SimTime::from_micros(500);
        let s = SectorConfig::new(bw, d).unwrap();
        let sched = s.schedule(SimTime::ZERO);
        let sector = sector_seed % s.sector_count();
        let now = SimTime::from_nanos(now);
        let w = sched.next_window(sector, now).unwrap();
        prop_assert_eq!(w.end - w.start, d);
        prop_assert!(w.end > now);
        prop_assert!(sched.wait(sector, now).unwrap() <= sched.cycle_length() - d);
        // the window belongs to the sector's slot of the cycle
        prop_assert_eq!((w.start.as_nanos() / d.as_nanos()) % s.sector_count() as u64, sector as u64);
    }

    #[test]
    fn contention_window_ladder(retry in 0u32..40) {
        for cat in AccessCategory::ALL {
            let p = category_params(cat);
            let cw = p.cw_for_retry(retry);
            prop_assert!(cw >= p.cw_min && cw <= p.cw_max);
            prop_assert!(p.cw_for_retry(retry + 1) >= cw);
        }
    }

    #[test]
    fn csv_round_trip(
        vals in prop::collection::vec(any::<u32>(), 16),
        seed in any::<u64>(),
        run_id in "[a-z0-9=._-]{1,12}",
        diagnostic in "[ -~]{0,20}",
        valid in any::<bool>(),
    ) {
        let v = |i: usize| vals[i] as u64;
        let r = MetricsRecord {
            run_id,
            seed,
            req60_generated: v(0),
            req60_delivered: v(1),
            req60_attempts: v(2),
            req60_slots: v(3),
            req60_delay_sum_ns: v(4),
            req60_delay_count: v(5),
            wifi24_generated: v(6),
            wifi24_attempts: v(7),
            wifi24_slots: v(8),
            standalone_discovered: v(9),
            standalone_time_sum_ns: v(10),
            assisted_discovered: v(11),
            assisted_time_sum_ns: v(12),
            bytes_offered: v(13),
            sessions: v(14),
            session_latency_sum_ns: v(15),
            valid,
            diagnostic,
            ..MetricsRecord::default()
        };
        let text = to_csv_string(std::slice::from_ref(&r));
        let back = read_csv(text.as_bytes()).unwrap();
        prop_assert_eq!(back, vec![r]);
    }

    #[test]
    fn trace_positions_stay_on_route(
        pts in prop::collection::vec((0.0f64..10.0, 0.0f64..10.0), 2..6),
        speed in 0.2f64..3.0,
        frac in 0.0f64..1.0,
    ) {
        let wps: Vec<Waypoint> = pts.iter().map(|&(x, y)| Waypoint::at(x, y)).collect();
        let tr = MobilityTrace::from_waypoints(&wps, speed).unwrap();
        let t = SimTime::from_nanos((tr.end().as_nanos() as f64 * frac) as u64);
        let (p, _) = tr.position_at(t);
        let (lo_x, hi_x) = pts.iter().fold((f64::MAX, f64::MIN), |a, q| (a.0.min(q.0), a.1.max(q.0)));
        let (lo_y, hi_y) = pts.iter().fold((f64::MAX, f64::MIN), |a, q| (a.0.min(q.1), a.1.max(q.1)));
        prop_assert!(p.x >= lo_x - 1e-9 && p.x <= hi_x + 1e-9 && p.y >= lo_y - 1e-9 && p.y <= hi_y + 1e-9);
        prop_assert!(tr.speed_at(t) <= speed * (1.0 + 1e-6));
    }

    #[test]
    fn full_loop_rebeams_once_per_sector(
        bw in prop::sample::select(vec![20.0, 30.0, 45.0, 60.0]),
        w in 1.0f64..2.0, e in 1.0f64..2.0, s in 1.0f64..2.0, n in 1.0f64..2.0,
    ) {
        // rectangle enclosing the PCP/AP, nudged off any sector edge through a corner
        let ap = Point::new(5.0, 5.0);
        let route = RouteSpec::RectangleLoop {
            min: Point::new(ap.x - w, ap.y - s + 0.013),
            max: Point::new(ap.x + e, ap.y + n + 0.007),
            loops: 1,
        };
        // dwell at the end so the closing edge is checked before the trace stops
        let mut wps = route.waypoints(&mut RngStream::new(0, 0));
        wps.last_mut().unwrap().dwell_s = 0.5;
        let tr = MobilityTrace::from_waypoints(&wps, 1.0).unwrap();
        let sectors = SectorConfig::new(bw, SimTime::from_millis(1)).unwrap();
        let params = TrackingParams { noise_sigma_deg: 0.0, ..TrackingParams::default() };
        let off = maintain_link(&tr, ap, &sectors, TrackingMode::SensorOff, &params, &mut RngStream::new(1, 1));
        let expected = (360.0 / bw) as usize;
        prop_assert_eq!(off.count(), expected);
    }

    #[test]
    fn controller_conserves_bytes(
        sizes in prop::collection::vec(0u64..400_000, 1..5),
        block_at in prop::option::of(0.2f64..1.2),
        x in 0.5f64..5.5,
    ) {
        let floor = FloorPlan::four_rooms();
        let picocells = floor
            .rooms
            .iter()
            .enumerate()
            .map(|(i, r)| Picocell { name: r.name.clone(), room: i, position: r.center() })
            .collect();
        let sessions = sizes
            .iter()
            .enumerate()
            .map(|(k, &bytes)| SessionRequest { at: SimTime::from_millis(50 + 200 * k as u64), bytes })
            .collect();
        let trace = MobilityTrace::from_waypoints(&[Waypoint::at(x, 1.0), Waypoint::at(x + 6.0, 1.0)], 4.0).unwrap();
        let net = Network {
            floor,
            wifi_ap: Point::new(5.5, 4.5),
            picocells,
            devices: vec![DeviceSpec { name: "d".into(), trace, sessions }],
            blockages: block_at
                .map(|b| Blockage { device: Some(0), start: SimTime::from_secs_f64(b), end: None })
                .into_iter()
                .collect(),
            background: Vec::new(),
        };
        let mut m = Collector::new("prop", 1);
        let report = run_network(&net, &ControllerConfig::default(), 1, SimTime::from_secs_f64(6.0), &mut m).unwrap();
        let r = m.finalize();
        prop_assert!(r.valid, "{}", r.diagnostic);
        prop_assert_eq!(r.bytes_offered, sizes.iter().sum::<u64>());
        prop_assert_eq!(r.bytes_offered, r.bytes_60g + r.bytes_24g + r.bytes_pending);
        prop_assert_eq!(r.bytes_pending, 0);
        prop_assert_eq!(r.control_frames_60g, 0);
        prop_assert_eq!(r.payload_24g_while_60g, 0);
        prop_assert!(report.states_consistent);
    }
}
