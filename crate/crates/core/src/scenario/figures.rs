//! Named experiment presets behind `cogcell figure`.

use rayon::prelude::*;

use super::sweep::sweep_seed;
use crate::beamtrack::{maintain_link, TrackingMode, TrackingParams};
use crate::controller::WIFI_AP_NODE;
use crate::discovery::{
    discover_assisted, discover_standalone, mean_elapsed_us, random_bearings, DiscoveryParams,
};
use crate::floorplan::Point;
use crate::mac_control::{
    AccessCategory, ControlChannel, DcfEvent, FrameKind, FrameSpec, MacParams, TrafficModel,
};
use crate::mac_mmwave::{MmwaveError, SectorConfig};
use crate::metrics::{Collector, MetricEvent, MetricsRecord};
use crate::mobility::{MobilityError, RouteSpec};
use crate::sim::{NodeId, RngStream, Scheduler, SimTime, StreamPurpose};

/// Runs saturated stations on the 2.4 GHz channel. REQ60 stations send
/// channel requests, WIFI24 stations send 1024-byte data frames.
pub fn saturation_run(
    mac: &MacParams,
    req60: usize,
    wifi24: usize,
    seed: u64,
    duration: SimTime,
) -> MetricsRecord {
    let ap: NodeId = 0;
    let mut chan = ControlChannel::new(ap, mac.clone(), seed);
    let mut node = 1;
    for (cat, n, frame) in [
        (
            AccessCategory::Req60,
            req60,
            FrameSpec::of(FrameKind::ChanReq60),
        ),
        (AccessCategory::Wifi24, wifi24, FrameSpec::data(1024)),
    ] {
        for _ in 0..n {
            chan.add_station(node, cat, TrafficModel::Saturated(frame));
            node += 1;
        }
    }
    let mut metrics = Collector::new(format!("saturation-{req60}-{wifi24}"), seed);
    let mut sched: Scheduler<DcfEvent> = Scheduler::new();
    chan.start(&mut sched, &mut metrics);
    sched.run_until(duration, |s, ev| {
        chan.handle(ev.kind, s, &mut metrics);
    });
    metrics.record(
        duration,
        ap,
        MetricEvent::RunEnd {
            req60_in_flight: chan.in_flight(AccessCategory::Req60),
            wifi24_in_flight: chan.in_flight(AccessCategory::Wifi24),
            bytes_pending: 0,
        },
    );
    metrics.finalize()
}

/// One point of the prioritization curves.
#[derive(Clone, Debug, PartialEq)]
pub struct Fig4bcRow {
    pub stations: usize,
    pub runs: usize,
    /// Runs in which REQ60 had both the lower delay and the higher
    /// transmission probability.
    pub ordered_runs: usize,
    pub req60_delay_us: f64,
    pub wifi24_delay_us: f64,
    pub req60_tau: f64,
    pub wifi24_tau: f64,
}

/// Saturated half-REQ60, half-WIFI24 mixes for each station count.
pub fn fig4bc(
    mac: &MacParams,
    station_counts: &[usize],
    seeds: u32,
    base_seed: u64,
    duration: SimTime,
) -> Vec<Fig4bcRow> {
    station_counts
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            let runs: Vec<MetricsRecord> = (0..seeds.max(1))
                .into_par_iter()
                .map(|r| {
                    saturation_run(mac, n / 2, n - n / 2, sweep_seed(base_seed, i, r), duration)
                })
                .collect();
            let k = runs.len() as f64;
            let mean = |f: &dyn Fn(&MetricsRecord) -> f64| runs.iter().map(f).sum::<f64>() / k;
            let req = |r: &MetricsRecord| r.category(AccessCategory::Req60);
            let wifi = |r: &MetricsRecord| r.category(AccessCategory::Wifi24);
            Fig4bcRow {
                stations: n,
                runs: runs.len(),
                ordered_runs: runs
                    .iter()
                    .filter(|r| {
                        req(r).mean_access_delay_us() < wifi(r).mean_access_delay_us()
                            && req(r).transmission_probability()
                                > wifi(r).transmission_probability()
                    })
                    .count(),
                req60_delay_us: mean(&|r| req(r).mean_access_delay_us()),
                wifi24_delay_us: mean(&|r| wifi(r).mean_access_delay_us()),
                req60_tau: mean(&|r| req(r).transmission_probability()),
                wifi24_tau: mean(&|r| wifi(r).transmission_probability()),
            }
        })
        .collect()
}

/// One point of the discovery comparison.
#[derive(Clone, Debug, PartialEq)]
pub struct Fig4aRow {
    pub devices: usize,
    pub standalone_ms: f64,
    pub assisted_ms: f64,
    pub speedup: f64,
}

/// Mean discovery time of both procedures against device count.
pub fn fig4a(
    beamwidth_deg: f64,
    device_counts: &[usize],
    seeds: u32,
    base_seed: u64,
    params: &DiscoveryParams,
    mac: &MacParams,
) -> Result<Vec<Fig4aRow>, MmwaveError> {
    let sectors = SectorConfig::new(beamwidth_deg, SimTime::from_millis(1))?;
    Ok(device_counts
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            let per_seed: Vec<(f64, f64)> = (0..seeds.max(1))
                .into_par_iter()
                .map(|r| {
                    let seed = sweep_seed(base_seed, i, r);
                    let devs = random_bearings(
                        n,
                        &mut RngStream::for_node(seed, WIFI_AP_NODE, StreamPurpose::Experiment),
                    );
                    let mut rng = RngStream::for_node(seed, WIFI_AP_NODE, StreamPurpose::Discovery);
                    let s = discover_standalone(&devs, &sectors, params, &mut rng)
                        .expect("devices present");
                    let mut m = Collector::new("fig4a", seed);
                    let a = discover_assisted(&devs, &sectors, params, mac, seed, &mut m)
                        .expect("devices present");
                    (mean_elapsed_us(&s), mean_elapsed_us(&a))
                })
                .collect();
            let k = per_seed.len() as f64 * 1e3;
            let s = per_seed.iter().map(|p| p.0).sum::<f64>() / k;
            let a = per_seed.iter().map(|p| p.1).sum::<f64>() / k;
            Fig4aRow {
                devices: n,
                standalone_ms: s,
                assisted_ms: a,
                speedup: s / a,
            }
        })
        .collect())
}

/// PCP/AP position for the tracking comparison.
pub const FIG5B_AP: Point = Point::new(2.5, 2.5);

/// Rectangular walk around [`FIG5B_AP`].
pub fn fig5b_route(loops: u32) -> RouteSpec {
    RouteSpec::RectangleLoop {
        min: Point::new(1.0, 1.2),
        max: Point::new(4.3, 3.9),
        loops,
    }
}

/// One cell of the re-beamforming table.
#[derive(Clone, Debug, PartialEq)]
pub struct Fig5bRow {
    pub beamwidth_deg: f64,
    pub mode: TrackingMode,
    /// Mean over seeds.
    pub rebeams: f64,
    pub cost_ms: f64,
}

/// Re-beamforming counts for every (beamwidth, mode) pair on `route`.
pub fn fig5b(
    beamwidths: &[f64],
    route: &RouteSpec,
    speed_mps: f64,
    params: &TrackingParams,
    seeds: u32,
    base_seed: u64,
) -> Result<Vec<Fig5bRow>, Fig5bError> {
    let trace = route.build(speed_mps, &mut RngStream::new(base_seed, 0))?;
    let mut rows = Vec::new();
    for &bw in beamwidths {
        let sectors = SectorConfig::new(bw, SimTime::from_millis(1))?;
        for mode in TrackingMode::ALL {
            let (mut n, mut cost) = (0usize, 0.0);
            for r in 0..seeds.max(1) {
                let mut rng = RngStream::for_node(
                    sweep_seed(base_seed, 0, r),
                    100,
                    StreamPurpose::SensorNoise,
                );
                let log = maintain_link(&trace, FIG5B_AP, &sectors, mode, params, &mut rng);
                n += log.count();
                cost += log.total_cost().as_secs_f64() * 1e3;
            }
            let k = seeds.max(1) as f64;
            rows.push(Fig5bRow {
                beamwidth_deg: bw,
                mode,
                rebeams: n as f64 / k,
                cost_ms: cost / k,
            });
        }
    }
    Ok(rows)
}

#[derive(Debug, thiserror::Error)]
pub enum Fig5bError {
    #[error(transparent)]
    Route(#[from] MobilityError),
    #[error(transparent)]
    Sectors(#[from] MmwaveError),
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn saturation_counts_conserve() {
        let r = saturation_run(&MacParams::default(), 2, 2, 3, SimTime::from_millis(200));
        assert!(r.valid, "{}", r.diagnostic);
        assert!(r.req60_delivered > 0 && r.wifi24_delivered > 0);
    }

    #[test]
    fn fig5b_has_four_cells() {
        let rows = fig5b(
            &[30.0, 20.0],
            &fig5b_route(1),
            1.0,
            &TrackingParams::default(),
            1,
            0,
        )
        .unwrap();
        assert_eq!(rows.len(), 4);
        let off = |bw: f64| {
            rows.iter()
                .find(|r| r.beamwidth_deg == bw && r.mode == TrackingMode::SensorOff)
                .unwrap()
        };
        assert_eq!(off(30.0).rebeams, 12.0);
        assert_eq!(off(20.0).rebeams, 18.0);
    }

    #[test]
    fn fig4a_single_point() {
        let rows = fig4a(
            60.0,
            &[5],
            2,
            0,
            &DiscoveryParams::default(),
            &MacParams::default(),
        )
        .unwrap();
        assert_eq!(rows.len(), 1);
        assert!(rows[0].assisted_ms < rows[0].standalone_ms);
    }
}
