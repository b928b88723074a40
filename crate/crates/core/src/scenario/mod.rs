//! Scenario files, single runs, parameter sweeps and the figure presets.

mod config;
mod figures;
mod sweep;

pub use config::{
    default_floorplan, load_scenario, parse_scenario, resolve_alias, validate, BeamtrackConfig,
    BlockageConfig, CategoryOverrides, DeviceConfig, DiscoveryConfig, KeyLocation, MacConfig,
    MmwaveConfig, MobilityConfig, PicocellConfig, Scenario, TrafficConfig, WifiApConfig,
};
pub use figures::{
    fig4a, fig4bc, fig5b, fig5b_route, saturation_run, Fig4aRow, Fig4bcRow, Fig5bError, Fig5bRow,
    FIG5B_AP,
};
pub use sweep::{apply_override, run_sweep, sweep_seed, Sweep, SEED_STRIDE};

use thiserror::Error;

use crate::beamtrack::{maintain_link, TrackingMode};
use crate::controller::{
    run_network, Blockage, ControllerConfig, ControllerError, ControllerReport, DeviceSpec,
    Network, Picocell, SessionRequest, DEVICE_NODE_BASE, WIFI_AP_NODE,
};
use crate::discovery::{
    self, discover_assisted, discover_standalone, random_bearings, DiscoveryMode,
};
use crate::mac_control::{AccessCategory, FrameKind, FrameSpec, TrafficModel};
use crate::metrics::{Collector, MetricsRecord};
use crate::sim::{NodeId, RngStream, SimTime, StreamPurpose};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{}{message}", line.map(|l| format!("line {l}: ")).unwrap_or_default())]
    Parse {
        line: Option<usize>,
        message: String,
    },
    #[error("invalid {at}: {reason}")]
    Invalid { at: KeyLocation, reason: String },
    #[error("cannot set `{key}`: {reason}")]
    Override { key: String, reason: String },
    #[error("run setup failed: {0}")]
    Setup(String),
}

impl From<ControllerError> for ScenarioError {
    fn from(e: ControllerError) -> Self {
        ScenarioError::Setup(e.to_string())
    }
}

/// Result of one scenario run.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub record: MetricsRecord,
    /// Trace lines when tracing was requested.
    pub trace: Option<Vec<String>>,
    pub report: ControllerReport,
}

/// Session arrival times for one device.
pub fn session_schedule(s: &Scenario) -> Vec<SessionRequest> {
    let t = &s.traffic;
    if t.session_bytes == 0 {
        return Vec::new();
    }
    let stop = t.stop_s.unwrap_or(s.duration_s).min(s.duration_s);
    let mut out = Vec::new();
    let mut k = 0u32;
    loop {
        let at = t.first_session_s + k as f64 * t.session_interval_s;
        if at >= stop || (t.session_count > 0 && k >= t.session_count) {
            break;
        }
        out.push(SessionRequest {
            at: SimTime::from_secs_f64(at),
            bytes: t.session_bytes,
        });
        k += 1;
    }
    out
}

/// Builds the controller inputs from a validated scenario.
pub fn build_network(s: &Scenario) -> Result<(Network, ControllerConfig), ScenarioError> {
    let floor = s.floor();
    let picocells = s
        .picocell_list()
        .iter()
        .map(|p| {
            let room = floor
                .room_index(&p.room)
                .ok_or_else(|| ScenarioError::Setup(format!("room {}", p.room)))?;
            Ok(Picocell {
                name: p.name.clone(),
                room,
                position: p.position.unwrap_or(floor.rooms[room].center()),
            })
        })
        .collect::<Result<Vec<_>, ScenarioError>>()?;
    let sessions = session_schedule(s);
    let devices = s
        .devices
        .iter()
        .enumerate()
        .map(|(i, d)| {
            let mut rng = RngStream::for_node(
                s.seed,
                DEVICE_NODE_BASE + i as NodeId,
                StreamPurpose::Mobility,
            );
            let trace = d
                .route
                .build(d.speed_mps.unwrap_or(s.mobility.speed_mps), &mut rng)
                .map_err(|e| ScenarioError::Setup(format!("device {}: {e}", d.name)))?;
            Ok(DeviceSpec {
                name: d.name.clone(),
                trace,
                sessions: sessions.clone(),
            })
        })
        .collect::<Result<Vec<_>, ScenarioError>>()?;
    let blockages = s
        .blockages
        .iter()
        .map(|b| Blockage {
            device: b
                .device
                .as_ref()
                .and_then(|n| s.devices.iter().position(|d| &d.name == n)),
            start: SimTime::from_secs_f64(b.start_s),
            end: b.end_s.map(SimTime::from_secs_f64),
        })
        .collect();
    let t = &s.traffic;
    let model = |frame: FrameSpec| {
        if t.background_interarrival_ms > 0.0 {
            TrafficModel::Poisson {
                frame,
                mean_interarrival: SimTime::from_secs_f64(t.background_interarrival_ms / 1e3),
            }
        } else {
            TrafficModel::Saturated(frame)
        }
    };
    let mut background = Vec::new();
    for _ in 0..t.background_req60 {
        background.push((
            AccessCategory::Req60,
            model(FrameSpec::of(FrameKind::ChanReq60)),
        ));
    }
    for _ in 0..t.background_wifi24 {
        background.push((
            AccessCategory::Wifi24,
            model(FrameSpec::data(t.background_frame_bytes)),
        ));
    }
    let net = Network {
        floor,
        wifi_ap: s.wifi_ap.position,
        picocells,
        devices,
        blockages,
        background,
    };
    let cfg = ControllerConfig {
        mac: s.mac.params(),
        link: s.link.clone(),
        beamwidth_deg: s.mmwave.beamwidth_deg,
        cbap_duration: SimTime::from_micros(s.mmwave.cbap_duration_us),
        sweep: s.mmwave.sweep.clone(),
        fallback: s.fallback.clone(),
        link_check: SimTime::from_secs_f64(s.mmwave.link_check_ms / 1e3),
        estimate_sigma_deg: s.discovery.estimate_sigma_deg,
        uncertainty_sectors: s.discovery.uncertainty_sectors,
        control_plane: s.mmwave.control_plane,
        fallback_frame_bytes: s.mmwave.fallback_frame_bytes,
    };
    Ok((net, cfg))
}

/// Runs the discovery comparison on synthetic devices around one picocell
/// and records one `Discovery` event per discovered device. The assisted
/// procedure's 2.4 GHz frames go to a private collector.
pub fn run_discovery(s: &Scenario, metrics: &mut Collector) -> Result<(), ScenarioError> {
    let n = s.discovery.devices as usize;
    if n == 0 {
        return Ok(());
    }
    let sectors = s
        .mmwave
        .sectors()
        .map_err(|e| ScenarioError::Setup(e.to_string()))?;
    let params = s.discovery.params(&s.mmwave.sweep);
    let bearings = random_bearings(
        n,
        &mut RngStream::for_node(s.seed, WIFI_AP_NODE, StreamPurpose::Experiment),
    );
    let setup = |e: discovery::DiscoveryError| ScenarioError::Setup(e.to_string());
    for &mode in s.discovery.mode.modes() {
        let results = match mode {
            DiscoveryMode::Standalone => {
                let mut rng = RngStream::for_node(s.seed, WIFI_AP_NODE, StreamPurpose::Discovery);
                discover_standalone(&bearings, &sectors, &params, &mut rng).map_err(setup)?
            }
            DiscoveryMode::Assisted => {
                let mut mac_metrics = Collector::new("discovery-mac", s.seed);
                discover_assisted(
                    &bearings,
                    &sectors,
                    &params,
                    &s.mac.params(),
                    s.seed,
                    &mut mac_metrics,
                )
                .map_err(setup)?
            }
        };
        discovery::record_results(&results, mode, discovery::DEVICE_NODE_BASE, metrics);
    }
    Ok(())
}

/// Compares both tracking modes for every moving device against the
/// picocell of the room it starts in.
pub fn run_beamtrack(
    s: &Scenario,
    net: &Network,
    metrics: &mut Collector,
) -> Result<(), ScenarioError> {
    if !s.beamtrack.enabled {
        return Ok(());
    }
    let sectors = s
        .mmwave
        .sectors()
        .map_err(|e| ScenarioError::Setup(e.to_string()))?;
    let params = s.beamtrack.params(&s.mmwave.sweep);
    for (i, dev) in net.devices.iter().enumerate() {
        if dev.trace.max_speed() <= 0.0 {
            continue;
        }
        let (start, _) = dev.trace.position_at(dev.trace.start());
        let Some(p) = net
            .floor
            .room_of(start)
            .and_then(|r| net.picocell_for_room(r))
        else {
            continue;
        };
        let node = DEVICE_NODE_BASE + i as NodeId;
        for mode in TrackingMode::ALL {
            let mut rng = RngStream::for_node(s.seed, node, StreamPurpose::SensorNoise);
            maintain_link(
                &dev.trace,
                net.picocells[p].position,
                &sectors,
                mode,
                &params,
                &mut rng,
            )
            .record_into(metrics, node);
        }
    }
    Ok(())
}

/// One complete run: controller, discovery comparison and tracking
/// comparison, all feeding one collector.
pub fn run_scenario(s: &Scenario, trace: bool) -> Result<RunOutput, ScenarioError> {
    validate(s, None)?;
    let (net, cfg) = build_network(s)?;
    let mut metrics = Collector::new(s.run_id.clone(), s.seed);
    if trace {
        metrics = metrics.with_trace();
    }
    run_discovery(s, &mut metrics)?;
    run_beamtrack(s, &net, &mut metrics)?;
    let report = run_network(&net, &cfg, s.seed, s.duration(), &mut metrics)?;
    let trace = metrics.trace().map(|t| {
        let mut lines = t.to_vec();
        lines.sort_by_key(|l| {
            l.split(' ')
                .next()
                .and_then(|w| w.parse::<u64>().ok())
                .unwrap_or(0)
        });
        lines
    });
    Ok(RunOutput {
        record: metrics.finalize(),
        trace,
        report,
    })
}
