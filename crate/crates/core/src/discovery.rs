//! Finding a device and training a beam pair with it.
//!
//! Standalone: the PCP/AP sweeps its sectors one per scan slot while every
//! undiscovered device listens in a random sector. A slot where exactly one
//! device is aligned is a rendezvous, followed by an exhaustive sweep.
//! Two or more aligned responders collide and the slot is lost.
//!
//! Assisted: the device associates over 2.4 GHz. The WiFi AP directs the
//! picocell and answers the device; both learn a coarse direction and the
//! sweep is restricted to a window around it.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mac_control::{
    AccessCategory, ControlChannel, DcfEvent, DcfNotice, FrameKind, FrameSpec, MacParams,
    TrafficModel,
};
use crate::mac_mmwave::{
    sector_sweep, BeamPair, SectorConfig, SectorWindow, SweepOutcome, SweepTiming,
};
use crate::metrics::{Collector, MetricEvent};
use crate::propagation::{cone_gain_dbi, wrap_deg, DEFAULT_SIDELOBE_DBI};
use crate::sim::{NodeId, RngStream, Scheduler, SimTime, StreamPurpose};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscoveryMode {
    Standalone,
    Assisted,
}

impl DiscoveryMode {
    pub const ALL: [DiscoveryMode; 2] = [DiscoveryMode::Standalone, DiscoveryMode::Assisted];

    pub fn as_str(self) -> &'static str {
        match self {
            DiscoveryMode::Standalone => "standalone",
            DiscoveryMode::Assisted => "assisted",
        }
    }
}

impl fmt::Display for DiscoveryMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DiscoveryMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "standalone" => Ok(DiscoveryMode::Standalone),
            "assisted" => Ok(DiscoveryMode::Assisted),
            other => Err(format!("unknown discovery mode `{other}`")),
        }
    }
}

/// Which procedures a scenario runs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscoverySelection {
    Standalone,
    Assisted,
    #[default]
    Both,
}

impl DiscoverySelection {
    pub fn modes(self) -> &'static [DiscoveryMode] {
        match self {
            DiscoverySelection::Standalone => &[DiscoveryMode::Standalone],
            DiscoverySelection::Assisted => &[DiscoveryMode::Assisted],
            DiscoverySelection::Both => &DiscoveryMode::ALL,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum DiscoveryError {
    #[error("azimuth must lie in [0, 360), got {0}")]
    BadAzimuth(f64),
    #[error("no devices to discover")]
    NoDevices,
}

/// Coarse direction of the peer: a sector-centre azimuth and a window of
/// `± uncertainty` sectors around it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DirectionEstimate {
    pub azimuth_deg: f64,
    pub uncertainty: usize,
}

impl DirectionEstimate {
    pub fn new(azimuth_deg: f64, uncertainty: usize) -> Result<Self, DiscoveryError> {
        if !(0.0..360.0).contains(&azimuth_deg) {
            return Err(DiscoveryError::BadAzimuth(azimuth_deg));
        }
        Ok(DirectionEstimate {
            azimuth_deg,
            uncertainty,
        })
    }

    /// True bearing plus Gaussian error, quantized to a sector centre.
    pub fn from_bearing(
        true_bearing_deg: f64,
        sigma_deg: f64,
        uncertainty: usize,
        sectors: &SectorConfig,
        rng: &mut RngStream,
    ) -> Self {
        let noisy = wrap_deg(true_bearing_deg + rng.gaussian(sigma_deg));
        DirectionEstimate {
            azimuth_deg: sectors.sector_center(sectors.sector_of(noisy)),
            uncertainty,
        }
    }

    pub fn window(&self, sectors: &SectorConfig) -> SectorWindow {
        SectorWindow {
            center: sectors.sector_of(self.azimuth_deg),
            half_width: self.uncertainty,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiscoveryResult {
    pub device: usize,
    pub discovered: bool,
    /// From the start of the procedure to a trained beam pair.
    pub elapsed: SimTime,
    /// Frames transmitted on behalf of this device (both bands).
    pub frames_sent: u64,
    /// Part of `elapsed` spent on 2.4 GHz signaling.
    pub overhead_24ghz: SimTime,
    pub beam_pair: Option<BeamPair>,
    /// The restricted sweep missed and an exhaustive one followed.
    pub estimate_failed: bool,
}

impl DiscoveryResult {
    fn pending(device: usize) -> Self {
        DiscoveryResult {
            device,
            discovered: false,
            elapsed: SimTime::ZERO,
            frames_sent: 0,
            overhead_24ghz: SimTime::ZERO,
            beam_pair: None,
            estimate_failed: false,
        }
    }
}

pub fn mean_elapsed_us(results: &[DiscoveryResult]) -> f64 {
    let found: Vec<_> = results.iter().filter(|r| r.discovered).collect();
    if found.is_empty() {
        return 0.0;
    }
    found.iter().map(|r| r.elapsed.as_micros_f64()).sum::<f64>() / found.len() as f64
}

pub fn record_results(
    results: &[DiscoveryResult],
    mode: DiscoveryMode,
    first_node: NodeId,
    metrics: &mut Collector,
) {
    for r in results.iter().filter(|r| r.discovered) {
        metrics.record(
            r.elapsed,
            first_node + r.device as NodeId,
            MetricEvent::Discovery {
                mode,
                elapsed: r.elapsed,
                overhead: r.overhead_24ghz,
            },
        );
    }
}

/// Where a device sits relative to its picocell.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DeviceBearing {
    /// Bearing of the device as seen from the PCP/AP.
    pub from_ap_deg: f64,
    /// Bearing of the PCP/AP as seen from the device.
    pub to_ap_deg: f64,
}

impl DeviceBearing {
    pub fn new(from_ap_deg: f64) -> Self {
        let from_ap_deg = wrap_deg(from_ap_deg);
        DeviceBearing {
            from_ap_deg,
            to_ap_deg: wrap_deg(from_ap_deg + 180.0),
        }
    }
}

/// Devices placed at uniformly random bearings around the PCP/AP.
pub fn random_bearings(n: usize, rng: &mut RngStream) -> Vec<DeviceBearing> {
    (0..n)
        .map(|_| DeviceBearing::new(rng.uniform(0.0, 360.0)))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiscoveryParams {
    pub sweep: SweepTiming,
    /// Direction-estimate error; `None` means half a sector.
    pub estimate_sigma_deg: Option<f64>,
    /// Half-width of the restricted window, in sectors.
    pub uncertainty_sectors: usize,
    /// Charge the 2.4 GHz association exchange to the assisted procedure.
    pub signaling_overhead: bool,
    /// Procedures still running at this point are reported undiscovered.
    pub time_limit_ms: f64,
}

impl Default for DiscoveryParams {
    fn default() -> Self {
        DiscoveryParams {
            sweep: SweepTiming::default(),
            estimate_sigma_deg: None,
            uncertainty_sectors: 1,
            signaling_overhead: true,
            time_limit_ms: 10_000.0,
        }
    }
}

impl DiscoveryParams {
    pub fn sigma_deg(&self, sectors: &SectorConfig) -> f64 {
        self.estimate_sigma_deg
            .unwrap_or(sectors.beamwidth_deg() / 2.0)
    }

    /// One scan slot: a sweep frame from the PCP/AP and a response.
    pub fn scan_slot(&self) -> SimTime {
        self.sweep.per_pair().times(2)
    }

    pub fn time_limit(&self) -> SimTime {
        SimTime::from_secs_f64(self.time_limit_ms / 1e3)
    }
}

/// Combined antenna gain of a (PCP/AP sector, device sector) pair.
pub fn pair_gain_db(sectors: &SectorConfig, dev: &DeviceBearing, tx: usize, rx: usize) -> f64 {
    let bw = sectors.beamwidth_deg();
    let main = cone_gain_dbi(bw);
    let side = if sectors.sector_count() == 1 {
        main
    } else {
        DEFAULT_SIDELOBE_DBI
    };
    let g = |sector: usize, bearing: f64| {
        if sectors.sector_of(bearing) == sector {
            main
        } else {
            side
        }
    };
    g(tx, dev.from_ap_deg) + g(rx, dev.to_ap_deg)
}

/// A pair counts as found only when both main lobes cover the link.
pub fn min_pair_gain_db(sectors: &SectorConfig) -> f64 {
    2.0 * cone_gain_dbi(sectors.beamwidth_deg()) - 1e-9
}

pub fn exhaustive_sweep(
    timing: &SweepTiming,
    sectors: &SectorConfig,
    dev: &DeviceBearing,
) -> SweepOutcome {
    let n = sectors.sector_count();
    sector_sweep(timing, n, n, None, min_pair_gain_db(sectors), |tx, rx| {
        pair_gain_db(sectors, dev, tx, rx)
    })
}

pub fn restricted_sweep(
    timing: &SweepTiming,
    sectors: &SectorConfig,
    dev: &DeviceBearing,
    ap_side: &DirectionEstimate,
    device_side: &DirectionEstimate,
) -> SweepOutcome {
    let n = sectors.sector_count();
    sector_sweep(
        timing,
        n,
        n,
        Some((ap_side.window(sectors), device_side.window(sectors))),
        min_pair_gain_db(sectors),
        |tx, rx| pair_gain_db(sectors, dev, tx, rx),
    )
}

/// Directional rendezvous followed by exhaustive beam training, with all
/// devices starting at time zero.
pub fn discover_standalone(
    devices: &[DeviceBearing],
    sectors: &SectorConfig,
    params: &DiscoveryParams,
    rng: &mut RngStream,
) -> Result<Vec<DiscoveryResult>, DiscoveryError> {
    if devices.is_empty() {
        return Err(DiscoveryError::NoDevices);
    }
    let n = sectors.sector_count();
    let slot = params.scan_slot();
    let limit = params.time_limit();
    let mut results: Vec<_> = (0..devices.len()).map(DiscoveryResult::pending).collect();
    let mut waiting: Vec<usize> = (0..devices.len()).collect();
    let mut t = SimTime::ZERO;
    let mut k = 0usize;
    while !waiting.is_empty() && t < limit {
        let ap_sector = k % n;
        k += 1;
        t += slot;
        let mut aligned = Vec::new();
        for &d in &waiting {
            let listen = rng.below(n as u64) as usize;
            let dev = &devices[d];
            if sectors.sector_of(dev.from_ap_deg) == ap_sector
                && sectors.sector_of(dev.to_ap_deg) == listen
            {
                aligned.push(d);
                results[d].frames_sent += 1;
            }
        }
        if aligned.len() != 1 {
            continue;
        }
        let d = aligned[0];
        let outcome = exhaustive_sweep(&params.sweep, sectors, &devices[d]);
        t += outcome.duration;
        let r = &mut results[d];
        r.frames_sent += outcome.sweep_frames + outcome.feedback_frames;
        r.elapsed = t;
        r.beam_pair = outcome.pair;
        r.discovered = outcome.pair.is_some();
        waiting.retain(|&w| w != d);
    }
    for &d in &waiting {
        results[d].elapsed = limit;
    }
    Ok(results)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Stage {
    Request,
    Directive,
    Response,
}

const TAG_STAGE_BITS: u64 = 2;

fn tag(device: usize, stage: Stage) -> u64 {
    ((device as u64) << TAG_STAGE_BITS) | stage as u64
}

fn untag(tag: u64) -> (usize, Stage) {
    let stage = match tag & 0b11 {
        0 => Stage::Request,
        1 => Stage::Directive,
        _ => Stage::Response,
    };
    ((tag >> TAG_STAGE_BITS) as usize, stage)
}

/// Node numbering used by the assisted procedure's 2.4 GHz channel.
pub const WIFI_AP_NODE: NodeId = 0;
pub const DEVICE_NODE_BASE: NodeId = 100;

/// WiFi-assisted discovery: association request, picocell directive and
/// association response over 2.4 GHz, then a restricted sweep at the
/// picocell (one at a time, in response order).
pub fn discover_assisted(
    devices: &[DeviceBearing],
    sectors: &SectorConfig,
    params: &DiscoveryParams,
    mac: &MacParams,
    seed: u64,
    metrics: &mut Collector,
) -> Result<Vec<DiscoveryResult>, DiscoveryError> {
    if devices.is_empty() {
        return Err(DiscoveryError::NoDevices);
    }
    let mut results: Vec<_> = (0..devices.len()).map(DiscoveryResult::pending).collect();
    let mut est_rng = RngStream::for_node(seed, WIFI_AP_NODE, StreamPurpose::Direction);
    let sigma = params.sigma_deg(sectors);
    let estimates: Vec<(DirectionEstimate, DirectionEstimate)> = devices
        .iter()
        .map(|d| {
            let ap_side = DirectionEstimate::from_bearing(
                d.from_ap_deg,
                sigma,
                params.uncertainty_sectors,
                sectors,
                &mut est_rng,
            );
            let dev_side = DirectionEstimate::from_bearing(
                d.to_ap_deg,
                sigma,
                params.uncertainty_sectors,
                sectors,
                &mut est_rng,
            );
            (ap_side, dev_side)
        })
        .collect();

    let mut picocell_free = SimTime::ZERO;
    let mut train = |d: usize, ready: SimTime, results: &mut Vec<DiscoveryResult>| {
        let dev = &devices[d];
        let (ap_side, dev_side) = estimates[d];
        let start = ready.max(picocell_free);
        let first = restricted_sweep(&params.sweep, sectors, dev, &ap_side, &dev_side);
        let mut end = start + first.duration;
        let r = &mut results[d];
        r.frames_sent += first.sweep_frames + first.feedback_frames;
        r.beam_pair = first.pair;
        if first.pair.is_none() {
            let full = exhaustive_sweep(&params.sweep, sectors, dev);
            end += full.duration;
            r.frames_sent += full.sweep_frames + full.feedback_frames;
            r.beam_pair = full.pair;
            r.estimate_failed = true;
        }
        picocell_free = end;
        r.discovered = r.beam_pair.is_some();
        r.elapsed = end;
        r.overhead_24ghz = ready;
    };

    if !params.signaling_overhead {
        for d in 0..devices.len() {
            train(d, SimTime::ZERO, &mut results);
        }
        return Ok(results);
    }

    let mut chan = ControlChannel::new(WIFI_AP_NODE, mac.clone(), seed);
    let ap_station = chan.add_station(WIFI_AP_NODE, AccessCategory::Wifi24, TrafficModel::External);
    let stations: Vec<_> = (0..devices.len())
        .map(|d| {
            chan.add_station(
                DEVICE_NODE_BASE + d as NodeId,
                AccessCategory::Wifi24,
                TrafficModel::External,
            )
        })
        .collect();
    let mut sched: Scheduler<DcfEvent> = Scheduler::new();
    let req = FrameSpec::of(FrameKind::AssocReq);
    let resp = FrameSpec::of(FrameKind::AssocResp);
    for (d, &st) in stations.iter().enumerate() {
        chan.enqueue(st, req, tag(d, Stage::Request), &mut sched, metrics);
    }
    let limit = params.time_limit();
    while let Some(ev) = sched.pop_until(limit) {
        for notice in chan.handle(ev.kind, &mut sched, metrics) {
            match notice {
                DcfNotice::Delivered { tag: t, at, .. } => {
                    let (d, stage) = untag(t);
                    results[d].frames_sent += 1;
                    match stage {
                        Stage::Request => chan.enqueue(
                            ap_station,
                            resp,
                            tag(d, Stage::Directive),
                            &mut sched,
                            metrics,
                        ),
                        Stage::Directive => chan.enqueue(
                            ap_station,
                            resp,
                            tag(d, Stage::Response),
                            &mut sched,
                            metrics,
                        ),
                        Stage::Response => train(d, at, &mut results),
                    }
                }
                DcfNotice::Dropped {
                    station, tag: t, ..
                } => {
                    // higher layers retry until the time limit
                    let (d, _) = untag(t);
                    results[d].frames_sent += 1;
                    let frame = if station == ap_station { resp } else { req };
                    chan.enqueue(station, frame, t, &mut sched, metrics);
                }
            }
        }
    }
    for r in results.iter_mut().filter(|r| !r.discovered) {
        r.elapsed = limit;
    }
    Ok(results)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(bw: f64) -> SectorConfig {
        SectorConfig::new(bw, SimTime::from_millis(1)).unwrap()
    }

    #[test]
    fn single_sector_found_in_first_slot() {
        let s = cfg(360.0);
        let p = DiscoveryParams::default();
        let res = discover_standalone(
            &[DeviceBearing::new(10.0)],
            &s,
            &p,
            &mut RngStream::new(1, 1),
        )
        .unwrap();
        assert!(res[0].discovered);
        assert_eq!(res[0].elapsed, p.scan_slot() + p.sweep.sweep_duration(1));
    }

    #[test]
    fn perfect_estimate_degenerate_window() {
        let s = cfg(60.0);
        let dev = DeviceBearing::new(100.0);
        let ap = DirectionEstimate::new(s.sector_center(s.sector_of(dev.from_ap_deg)), 0).unwrap();
        let me = DirectionEstimate::new(s.sector_center(s.sector_of(dev.to_ap_deg)), 0).unwrap();
        let out = restricted_sweep(&SweepTiming::default(), &s, &dev, &ap, &me);
        assert_eq!(out.sweep_frames, 1);
        assert!(out.pair.is_some());
    }

    #[test]
    fn window_of_one_gives_nine_pairs() {
        let s = cfg(60.0);
        let dev = DeviceBearing::new(100.0);
        let ap = DirectionEstimate::new(120.0, 1).unwrap();
        let me = DirectionEstimate::new(300.0, 1).unwrap();
        let out = restricted_sweep(&SweepTiming::default(), &s, &dev, &ap, &me);
        assert_eq!(out.sweep_frames, 9);
        assert_eq!(out.duration, SweepTiming::default().sweep_duration(9));
    }

    #[test]
    fn correct_window_matches_exhaustive() {
        let s = cfg(30.0);
        let mut rng = RngStream::new(3, 3);
        for dev in random_bearings(50, &mut rng) {
            let ap =
                DirectionEstimate::new(s.sector_center(s.sector_of(dev.from_ap_deg)), 1).unwrap();
            let me =
                DirectionEstimate::new(s.sector_center(s.sector_of(dev.to_ap_deg)), 1).unwrap();
            let full = exhaustive_sweep(&SweepTiming::default(), &s, &dev);
            let part = restricted_sweep(&SweepTiming::default(), &s, &dev, &ap, &me);
            assert_eq!(full.pair, part.pair);
            assert!(full.pair.is_some());
        }
    }

    #[test]
    fn wrong_window_falls_back() {
        let s = cfg(60.0);
        let devs = [DeviceBearing::new(0.0)];
        // an estimate error of 180 degrees puts the true sector outside every window
        let p = DiscoveryParams {
            estimate_sigma_deg: Some(0.0),
            ..DiscoveryParams::default()
        };
        let dev = devs[0];
        let wrong = DirectionEstimate::new(180.0, 1).unwrap();
        let me = DirectionEstimate::new(0.0, 1).unwrap();
        assert!(restricted_sweep(&p.sweep, &s, &dev, &wrong, &me)
            .pair
            .is_none());
    }

    #[test]
    fn infinite_rates_approach_zero_overhead() {
        let s = cfg(60.0);
        let devs = random_bearings(5, &mut RngStream::new(8, 8));
        let mut fast = MacParams::default();
        for p in [&mut fast.req60, &mut fast.wifi24] {
            p.ctrl_rate_bps = f64::INFINITY;
            p.data_rate_bps = f64::INFINITY;
        }
        let mut m = Collector::new("t", 0);
        let with =
            discover_assisted(&devs, &s, &DiscoveryParams::default(), &fast, 4, &mut m).unwrap();
        let without_p = DiscoveryParams {
            signaling_overhead: false,
            ..DiscoveryParams::default()
        };
        let without = discover_assisted(&devs, &s, &without_p, &fast, 4, &mut m).unwrap();
        let (a, b) = (mean_elapsed_us(&with), mean_elapsed_us(&without));
        assert!(a >= b);
        // only inter-frame spaces and backoff remain
        assert!(a - b < 5_000.0, "{a} vs {b}");
        for r in &with {
            assert!(r.elapsed >= r.overhead_24ghz);
        }
    }

    #[test]
    fn assisted_beats_standalone_at_ten() {
        let s = cfg(60.0);
        let p = DiscoveryParams::default();
        let mut sa = 0.0;
        let mut aa = 0.0;
        for seed in 0..5 {
            let devs = random_bearings(10, &mut RngStream::new(seed, 77));
            sa += mean_elapsed_us(
                &discover_standalone(&devs, &s, &p, &mut RngStream::new(seed, 5)).unwrap(),
            );
            let mut m = Collector::new("t", seed);
            aa += mean_elapsed_us(
                &discover_assisted(&devs, &s, &p, &MacParams::default(), seed, &mut m).unwrap(),
            );
        }
        assert!(aa < sa, "assisted {aa} standalone {sa}");
    }

    #[test]
    fn tags_round_trip() {
        for d in [0usize, 1, 17, 999] {
            for st in [Stage::Request, Stage::Directive, Stage::Response] {
                assert_eq!(untag(tag(d, st)), (d, st));
            }
        }
    }

    #[test]
    fn mode_strings() {
        for m in DiscoveryMode::ALL {
            assert_eq!(m.as_str().parse::<DiscoveryMode>().unwrap(), m);
        }
        assert!(DirectionEstimate::new(360.0, 0).is_err());
    }
}
