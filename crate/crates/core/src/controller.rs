//! The dual-band controller: association and channel requests over
//! 2.4 GHz, picocell direction and beamforming, 60 GHz transfer in CBAP
//! windows, picocell handover and fall-back to 2.4 GHz payload.
//!
//! Session sequence: REQ60 request, grant, WiFi AP directs the room's
//! picocell (a WIFI24 frame), restricted sweep, transfer.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::floorplan::{FloorPlan, Point};
use crate::mac_control::{
    frame_airtime, AccessCategory, ControlChannel, DcfEvent, DcfNotice, FrameKind, FrameSpec,
    MacError, MacParams, StationId, TrafficModel,
};
use crate::mac_mmwave::{
    sector_sweep, transfer, MmwaveError, SectorConfig, SectorWindow, SweepTiming,
};
use crate::metrics::{Collector, MetricEvent};
use crate::mobility::{bearing_from, MobilityTrace};
use crate::propagation::{cone_gain_dbi, Band, LinkBudget, LinkModel, DEFAULT_SIDELOBE_DBI};
use crate::sim::{NodeId, RngStream, Scheduler, SimTime, StreamPurpose};

pub const WIFI_AP_NODE: NodeId = 0;
pub const PICOCELL_NODE_BASE: NodeId = 1;
pub const DEVICE_NODE_BASE: NodeId = 100;
pub const BACKGROUND_NODE_BASE: NodeId = 1000;

#[derive(Debug, Error)]
pub enum ControllerError {
    #[error("outage threshold and hysteresis must be positive")]
    BadFallbackPolicy,
    #[error("link check period must be positive")]
    BadLinkCheck,
    #[error("picocell `{0}` refers to a room that does not exist")]
    UnknownRoom(String),
    #[error("device `{0}` starts outside every room")]
    DeviceOutside(String),
    #[error(transparent)]
    Mac(#[from] MacError),
    #[error(transparent)]
    Mmwave(#[from] MmwaveError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Idle,
    WifiAssociated,
    Requesting60g,
    Beamformed,
    Transferring,
    Fallback,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AssociationState {
    pub device: usize,
    pub wifi_ap: NodeId,
    pub picocell: Option<usize>,
    pub phase: Phase,
}

impl AssociationState {
    pub fn consistent(&self) -> bool {
        self.picocell.is_none() || matches!(self.phase, Phase::Beamformed | Phase::Transferring)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FallbackPolicy {
    /// 60 GHz outage that must persist before payload moves to 2.4 GHz.
    pub outage_threshold_ms: f64,
    /// Restoration that must persist before payload moves back.
    pub hysteresis_ms: f64,
}

impl Default for FallbackPolicy {
    fn default() -> Self {
        FallbackPolicy {
            outage_threshold_ms: 20.0,
            hysteresis_ms: 100.0,
        }
    }
}

impl FallbackPolicy {
    pub fn validate(&self) -> Result<(), ControllerError> {
        if self.outage_threshold_ms > 0.0 && self.hysteresis_ms > 0.0 {
            Ok(())
        } else {
            Err(ControllerError::BadFallbackPolicy)
        }
    }

    pub fn outage_threshold(&self) -> SimTime {
        SimTime::from_secs_f64(self.outage_threshold_ms / 1e3)
    }

    pub fn hysteresis(&self) -> SimTime {
        SimTime::from_secs_f64(self.hysteresis_ms / 1e3)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Route {
    Use60g,
    Use24g,
}

/// Per-device outage/restoration timer behind the routing decision.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FallbackState {
    pub route: Route,
    outage_since: Option<SimTime>,
    restored_since: Option<SimTime>,
}

impl Default for FallbackState {
    fn default() -> Self {
        FallbackState {
            route: Route::Use60g,
            outage_since: None,
            restored_since: None,
        }
    }
}

impl FallbackState {
    /// Feeds one observation of the 60 GHz link; returns the route and
    /// whether it changed.
    pub fn evaluate(
        &mut self,
        policy: &FallbackPolicy,
        link: &LinkBudget,
        now: SimTime,
    ) -> (Route, bool) {
        let ok = link.usable();
        let before = self.route;
        match self.route {
            Route::Use60g => {
                if ok {
                    self.outage_since = None;
                } else {
                    let since = *self.outage_since.get_or_insert(now);
                    if now - since >= policy.outage_threshold() {
                        self.route = Route::Use24g;
                        self.restored_since = None;
                    }
                }
            }
            Route::Use24g => {
                if !ok {
                    self.restored_since = None;
                } else {
                    let since = *self.restored_since.get_or_insert(now);
                    if now - since >= policy.hysteresis() {
                        self.route = Route::Use60g;
                        self.outage_since = None;
                    }
                }
            }
        }
        (self.route, self.route != before)
    }

    /// Switches immediately, e.g. when no picocell serves the room.
    pub fn force(&mut self, route: Route) -> bool {
        let changed = self.route != route;
        *self = FallbackState {
            route,
            outage_since: None,
            restored_since: None,
        };
        changed
    }
}

/// Where control frames travel.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlPlane {
    /// Association and requests over 2.4 GHz.
    #[default]
    Wifi,
    /// Plain sectorized 60 GHz: requests wait for the device's CBAP window.
    InBand60,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Picocell {
    pub name: String,
    pub room: usize,
    pub position: Point,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SessionRequest {
    pub at: SimTime,
    pub bytes: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DeviceSpec {
    pub name: String,
    pub trace: MobilityTrace,
    pub sessions: Vec<SessionRequest>,
}

/// 60 GHz blockage of one device (or all of them), open-ended if `end` is `None`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Blockage {
    pub device: Option<usize>,
    pub start: SimTime,
    pub end: Option<SimTime>,
}

impl Blockage {
    pub fn covers(&self, device: usize, t: SimTime) -> bool {
        self.device.is_none_or(|d| d == device) && t >= self.start && self.end.is_none_or(|e| t < e)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    pub floor: FloorPlan,
    pub wifi_ap: Point,
    pub picocells: Vec<Picocell>,
    pub devices: Vec<DeviceSpec>,
    pub blockages: Vec<Blockage>,
    /// Extra contenders on the 2.4 GHz channel.
    pub background: Vec<(AccessCategory, TrafficModel)>,
}

impl Network {
    pub fn validate(&self) -> Result<(), ControllerError> {
        for p in &self.picocells {
            if p.room >= self.floor.rooms.len() {
                return Err(ControllerError::UnknownRoom(p.name.clone()));
            }
        }
        for d in &self.devices {
            let (p, _) = d.trace.position_at(d.trace.start());
            if self.floor.room_of(p).is_none() {
                return Err(ControllerError::DeviceOutside(d.name.clone()));
            }
        }
        Ok(())
    }

    pub fn picocell_for_room(&self, room: usize) -> Option<usize> {
        self.picocells.iter().position(|p| p.room == room)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ControllerConfig {
    pub mac: MacParams,
    pub link: LinkModel,
    pub beamwidth_deg: f64,
    pub cbap_duration: SimTime,
    pub sweep: SweepTiming,
    pub fallback: FallbackPolicy,
    pub link_check: SimTime,
    /// `None` means half a sector.
    pub estimate_sigma_deg: Option<f64>,
    pub uncertainty_sectors: usize,
    pub control_plane: ControlPlane,
    pub fallback_frame_bytes: u32,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        ControllerConfig {
            mac: MacParams::default(),
            link: LinkModel::default(),
            beamwidth_deg: 60.0,
            cbap_duration: SimTime::from_millis(1),
            sweep: SweepTiming::default(),
            fallback: FallbackPolicy::default(),
            link_check: SimTime::from_millis(1),
            estimate_sigma_deg: None,
            uncertainty_sectors: 1,
            control_plane: ControlPlane::Wifi,
            fallback_frame_bytes: 1024,
        }
    }
}

/// Milestones of one data session.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SessionLog {
    pub device: usize,
    pub arrival: SimTime,
    pub bytes: u64,
    pub granted: Option<SimTime>,
    pub beamformed: Option<SimTime>,
    pub completed: Option<SimTime>,
    pub bytes_24g: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ControllerReport {
    pub sessions: Vec<SessionLog>,
    pub states: Vec<AssociationState>,
    /// Duration of each handover, from room change to new beam pair.
    pub handover_durations: Vec<SimTime>,
    /// Every `AssociationState` seen was consistent.
    pub states_consistent: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CtrlEvent {
    Dcf(DcfEvent),
    Tick,
    SessionArrival { device: usize, index: usize },
    BeamformDone { device: usize, picocell: usize },
    InBandRequest { device: usize },
}

impl From<DcfEvent> for CtrlEvent {
    fn from(e: DcfEvent) -> Self {
        CtrlEvent::Dcf(e)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Purpose {
    AssocReq,
    AssocResp,
    ChanReq,
    Directive,
    Payload,
}

const PURPOSES: [Purpose; 5] = [
    Purpose::AssocReq,
    Purpose::AssocResp,
    Purpose::ChanReq,
    Purpose::Directive,
    Purpose::Payload,
];

fn tag(device: usize, purpose: Purpose, extra: u64) -> u64 {
    (extra << 24) | ((device as u64) << 3) | purpose as u64
}

fn untag(t: u64) -> (usize, Purpose, u64) {
    (
        ((t >> 3) & 0x1f_ffff) as usize,
        PURPOSES[(t & 0b111) as usize],
        t >> 24,
    )
}

struct Active {
    log: usize,
    remaining: u64,
}

struct Dev {
    state: AssociationState,
    req_station: StationId,
    wifi_station: StationId,
    fallback: FallbackState,
    queue: VecDeque<usize>,
    active: Option<Active>,
    room: Option<usize>,
    in_flight_24: u64,
    last_pump: SimTime,
    handover_started: Option<SimTime>,
    /// Beamforming failed on a blocked link; retry once it clears.
    retry_setup: bool,
    rng: RngStream,
}

pub struct Controller<'a> {
    net: &'a Network,
    cfg: &'a ControllerConfig,
    sectors: SectorConfig,
    chan: ControlChannel,
    ap_station: StationId,
    /// Stations from here on carry background traffic only.
    background_first: StationId,
    devs: Vec<Dev>,
    picocell_free: Vec<SimTime>,
    sessions: Vec<SessionLog>,
    handovers: Vec<SimTime>,
    consistent: bool,
}

impl<'a> Controller<'a> {
    pub fn new(
        net: &'a Network,
        cfg: &'a ControllerConfig,
        seed: u64,
    ) -> Result<Self, ControllerError> {
        net.validate()?;
        cfg.mac.validate()?;
        cfg.fallback.validate()?;
        if cfg.link_check == SimTime::ZERO {
            return Err(ControllerError::BadLinkCheck);
        }
        let sectors = SectorConfig::new(cfg.beamwidth_deg, cfg.cbap_duration)?;
        let mut chan = ControlChannel::new(WIFI_AP_NODE, cfg.mac.clone(), seed);
        let ap_station =
            chan.add_station(WIFI_AP_NODE, AccessCategory::Wifi24, TrafficModel::External);
        let mut devs = Vec::new();
        for (i, d) in net.devices.iter().enumerate() {
            let node = DEVICE_NODE_BASE + i as NodeId;
            let req_station = chan.add_station(node, AccessCategory::Req60, TrafficModel::External);
            let wifi_station =
                chan.add_station(node, AccessCategory::Wifi24, TrafficModel::External);
            let (p, _) = d.trace.position_at(SimTime::ZERO);
            devs.push(Dev {
                state: AssociationState {
                    device: i,
                    wifi_ap: WIFI_AP_NODE,
                    picocell: None,
                    phase: Phase::Idle,
                },
                req_station,
                wifi_station,
                fallback: FallbackState::default(),
                queue: VecDeque::new(),
                active: None,
                room: net.floor.room_of(p),
                in_flight_24: 0,
                last_pump: SimTime::ZERO,
                handover_started: None,
                retry_setup: false,
                rng: RngStream::for_node(seed, node, StreamPurpose::Direction),
            });
        }
        let background_first = chan.station_count();
        for (k, &(cat, traffic)) in net.background.iter().enumerate() {
            chan.add_station(BACKGROUND_NODE_BASE + k as NodeId, cat, traffic);
        }
        Ok(Controller {
            net,
            cfg,
            sectors,
            chan,
            ap_station,
            background_first,
            devs,
            picocell_free: vec![SimTime::ZERO; net.picocells.len()],
            sessions: Vec::new(),
            handovers: Vec::new(),
            consistent: true,
        })
    }

    pub fn states(&self) -> Vec<AssociationState> {
        self.devs.iter().map(|d| d.state).collect()
    }

    /// Runs until `end` and closes the books.
    pub fn run(mut self, end: SimTime, metrics: &mut Collector) -> ControllerReport {
        let mut sched: Scheduler<CtrlEvent> = Scheduler::new();
        self.chan.start(&mut sched, metrics);
        for (i, d) in self.net.devices.iter().enumerate() {
            for (k, s) in d.sessions.iter().enumerate() {
                sched
                    .schedule(
                        s.at,
                        DEVICE_NODE_BASE + i as NodeId,
                        CtrlEvent::SessionArrival {
                            device: i,
                            index: k,
                        },
                    )
                    .expect("scheduler starts at zero");
            }
            self.associate(i, &mut sched, metrics);
        }
        sched.schedule_in(self.cfg.link_check, WIFI_AP_NODE, CtrlEvent::Tick);
        while let Some(ev) = sched.pop_until(end) {
            match ev.kind {
                CtrlEvent::Dcf(e) => {
                    for n in self.chan.handle(e, &mut sched, metrics) {
                        self.on_notice(n, &mut sched, metrics);
                    }
                }
                CtrlEvent::Tick => {
                    self.tick(&mut sched, metrics);
                    sched.schedule_in(self.cfg.link_check, WIFI_AP_NODE, CtrlEvent::Tick);
                }
                CtrlEvent::SessionArrival { device, index } => {
                    self.on_session(device, index, &mut sched, metrics)
                }
                CtrlEvent::BeamformDone { device, picocell } => {
                    self.on_beamformed(device, picocell, &mut sched)
                }
                CtrlEvent::InBandRequest { device } => {
                    self.on_inband_request(device, &mut sched, metrics)
                }
            }
            self.consistent &= self.devs.iter().all(|d| d.state.consistent());
        }
        let pending: u64 = self
            .devs
            .iter()
            .map(|d| {
                d.active.as_ref().map_or(0, |a| a.remaining)
                    + d.in_flight_24
                    + d.queue.iter().map(|&k| self.sessions[k].bytes).sum::<u64>()
            })
            .sum();
        metrics.record(
            end,
            WIFI_AP_NODE,
            MetricEvent::RunEnd {
                req60_in_flight: self.chan.in_flight(AccessCategory::Req60),
                wifi24_in_flight: self.chan.in_flight(AccessCategory::Wifi24),
                bytes_pending: pending,
            },
        );
        ControllerReport {
            states: self.states(),
            sessions: self.sessions,
            handover_durations: self.handovers,
            states_consistent: self.consistent,
        }
    }

    fn node(i: usize) -> NodeId {
        DEVICE_NODE_BASE + i as NodeId
    }

    fn position(&self, i: usize, t: SimTime) -> Point {
        self.net.devices[i].trace.position_at(t).0
    }

    fn blocked(&self, i: usize, t: SimTime) -> bool {
        self.net.blockages.iter().any(|b| b.covers(i, t))
    }

    /// 60 GHz budget from picocell `p` to device `i`, AP beam on the device.
    pub fn link_budget(&self, i: usize, p: usize, t: SimTime) -> LinkBudget {
        if self.blocked(i, t) {
            return LinkBudget::blocked();
        }
        let pos = self.position(i, t);
        let cell = &self.net.picocells[p];
        let walls = self.net.floor.walls_crossed(pos, cell.position);
        let d = pos.distance(cell.position).max(0.1);
        self.cfg
            .link
            .evaluate(
                Band::Mmwave60,
                d,
                walls,
                cone_gain_dbi(self.cfg.beamwidth_deg),
                0.0,
            )
            .unwrap_or_else(|_| LinkBudget::blocked())
    }

    fn room_link(&self, i: usize, t: SimTime) -> LinkBudget {
        match self.devs[i]
            .room
            .and_then(|r| self.net.picocell_for_room(r))
        {
            Some(p) => self.link_budget(i, p, t),
            None => LinkBudget::blocked(),
        }
    }

    fn sector_of(&self, i: usize, p: usize, t: SimTime) -> usize {
        bearing_from(self.net.picocells[p].position, self.position(i, t))
            .map(|b| self.sectors.sector_of(b))
            .unwrap_or(0)
    }

    fn set_phase(&mut self, i: usize, phase: Phase, picocell: Option<usize>) {
        self.devs[i].state.phase = phase;
        self.devs[i].state.picocell = picocell;
    }

    fn associate(&mut self, i: usize, sched: &mut Scheduler<CtrlEvent>, metrics: &mut Collector) {
        match self.cfg.control_plane {
            ControlPlane::Wifi => {
                let st = self.devs[i].wifi_station;
                self.chan.enqueue(
                    st,
                    FrameSpec::of(FrameKind::AssocReq),
                    tag(i, Purpose::AssocReq, 0),
                    sched,
                    metrics,
                );
            }
            ControlPlane::InBand60 => {
                // association happens in the device's first CBAP window
                let at = self.inband_control_time(i, sched.now());
                metrics.record(at, Self::node(i), MetricEvent::ControlFrame60);
                self.set_phase(i, Phase::WifiAssociated, None);
            }
        }
    }

    fn inband_control_time(&self, i: usize, now: SimTime) -> SimTime {
        let Some(p) = self.devs[i]
            .room
            .and_then(|r| self.net.picocell_for_room(r))
        else {
            return now;
        };
        let sector = self.sector_of(i, p, now);
        let wait = self
            .sectors
            .schedule(SimTime::ZERO)
            .wait(sector, now)
            .unwrap_or(SimTime::ZERO);
        now + wait
            + frame_airtime(
                FrameSpec::of(FrameKind::ChanReq60),
                self.cfg.sweep.sweep_rate_bps,
            )
    }

    fn on_session(
        &mut self,
        i: usize,
        index: usize,
        sched: &mut Scheduler<CtrlEvent>,
        metrics: &mut Collector,
    ) {
        let now = sched.now();
        let bytes = self.net.devices[i].sessions[index].bytes;
        metrics.record(now, Self::node(i), MetricEvent::BytesOffered { bytes });
        let log = self.sessions.len();
        self.sessions.push(SessionLog {
            device: i,
            arrival: now,
            bytes,
            granted: None,
            beamformed: None,
            completed: None,
            bytes_24g: 0,
        });
        if bytes == 0 {
            self.sessions[log].completed = Some(now);
            metrics.record(
                now,
                Self::node(i),
                MetricEvent::SessionComplete {
                    latency: SimTime::ZERO,
                },
            );
            return;
        }
        self.devs[i].queue.push_back(log);
        self.start_next(i, sched, metrics);
    }

    fn start_next(&mut self, i: usize, sched: &mut Scheduler<CtrlEvent>, metrics: &mut Collector) {
        let d = &self.devs[i];
        if d.active.is_some() || d.state.phase == Phase::Idle {
            return;
        }
        let Some(log) = self.devs[i].queue.pop_front() else {
            return;
        };
        let bytes = self.sessions[log].bytes;
        self.devs[i].active = Some(Active {
            log,
            remaining: bytes,
        });
        if self.devs[i].fallback.route == Route::Use24g {
            self.set_phase(i, Phase::Fallback, None);
            self.pump_24(i, sched, metrics);
        } else {
            self.request_60g(i, sched, metrics);
        }
    }

    fn request_60g(&mut self, i: usize, sched: &mut Scheduler<CtrlEvent>, metrics: &mut Collector) {
        let keep = self.devs[i].state.picocell;
        let phase = if keep.is_some() {
            self.devs[i].state.phase
        } else {
            Phase::Requesting60g
        };
        self.set_phase(i, phase, keep);
        match self.cfg.control_plane {
            ControlPlane::Wifi => {
                let st = self.devs[i].req_station;
                self.chan.enqueue(
                    st,
                    FrameSpec::of(FrameKind::ChanReq60),
                    tag(i, Purpose::ChanReq, 0),
                    sched,
                    metrics,
                );
            }
            ControlPlane::InBand60 => {
                let at = self.inband_control_time(i, sched.now());
                sched
                    .schedule(at, Self::node(i), CtrlEvent::InBandRequest { device: i })
                    .expect("not in the past");
            }
        }
    }

    fn on_inband_request(
        &mut self,
        i: usize,
        sched: &mut Scheduler<CtrlEvent>,
        metrics: &mut Collector,
    ) {
        let now = sched.now();
        metrics.record(now, Self::node(i), MetricEvent::ControlFrame60);
        if let Some(a) = &self.devs[i].active {
            self.sessions[a.log].granted.get_or_insert(now);
        }
        match self.devs[i]
            .room
            .and_then(|r| self.net.picocell_for_room(r))
        {
            Some(p) => self.start_sweep(i, p, false, sched),
            None => self.set_phase(i, Phase::Requesting60g, None),
        }
    }

    /// Grant received: direct the room's picocell, or fall back at once.
    fn on_granted(&mut self, i: usize, sched: &mut Scheduler<CtrlEvent>, metrics: &mut Collector) {
        let now = sched.now();
        if let Some(a) = &self.devs[i].active {
            self.sessions[a.log].granted.get_or_insert(now);
        }
        match self.devs[i]
            .room
            .and_then(|r| self.net.picocell_for_room(r))
        {
            Some(p) => self.direct(i, p, sched, metrics),
            None => self.fall_back_now(i, sched, metrics),
        }
    }

    fn direct(
        &mut self,
        i: usize,
        p: usize,
        sched: &mut Scheduler<CtrlEvent>,
        metrics: &mut Collector,
    ) {
        let resp = FrameSpec::of(FrameKind::AssocResp);
        self.chan.enqueue(
            self.ap_station,
            resp,
            tag(i, Purpose::Directive, p as u64),
            sched,
            metrics,
        );
    }

    fn fall_back_now(
        &mut self,
        i: usize,
        sched: &mut Scheduler<CtrlEvent>,
        metrics: &mut Collector,
    ) {
        if self.devs[i].fallback.force(Route::Use24g) {
            metrics.record(
                sched.now(),
                Self::node(i),
                MetricEvent::FallbackSwitch { to_24: true },
            );
        }
        let phase = if self.devs[i].active.is_some() {
            Phase::Fallback
        } else {
            Phase::WifiAssociated
        };
        self.set_phase(i, phase, None);
        self.pump_24(i, sched, metrics);
    }

    fn on_directed(&mut self, i: usize, p: usize, sched: &mut Scheduler<CtrlEvent>) {
        let now = sched.now();
        let d = &self.devs[i];
        if d.state.picocell == Some(p) && d.handover_started.is_none() {
            // beam pair still in place from the previous session
            if self.link_budget(i, p, now).usable() {
                if let Some(a) = &self.devs[i].active {
                    self.sessions[a.log].beamformed.get_or_insert(now);
                }
                self.set_phase(i, Phase::Transferring, Some(p));
                self.devs[i].last_pump = now;
                return;
            }
        }
        if d.fallback.route == Route::Use24g && d.handover_started.is_none() {
            return;
        }
        self.start_sweep(i, p, true, sched);
    }

    /// Queues beam training at the picocell; the result is decided when it ends.
    fn start_sweep(
        &mut self,
        i: usize,
        p: usize,
        restricted: bool,
        sched: &mut Scheduler<CtrlEvent>,
    ) {
        let now = sched.now();
        self.set_phase(i, Phase::Requesting60g, None);
        let n = self.sectors.sector_count();
        let ap = self.net.picocells[p].position;
        let pos = self.position(i, now);
        let true_sector = bearing_from(ap, pos)
            .map(|b| self.sectors.sector_of(b))
            .unwrap_or(0);
        let blocked = !self.link_budget(i, p, now).usable();
        let main = cone_gain_dbi(self.cfg.beamwidth_deg);
        let quality = |tx: usize, _rx: usize| {
            if blocked {
                f64::NEG_INFINITY
            } else if tx == true_sector {
                main
            } else {
                DEFAULT_SIDELOBE_DBI
            }
        };
        let min_q = if n == 1 {
            f64::NEG_INFINITY
        } else {
            main - 1e-9
        };
        let mut duration = SimTime::ZERO;
        let mut found = false;
        if restricted {
            let sigma = self
                .cfg
                .estimate_sigma_deg
                .unwrap_or(self.cfg.beamwidth_deg / 2.0);
            let noisy = bearing_from(ap, pos).unwrap_or(0.0) + self.devs[i].rng.gaussian(sigma);
            let window = SectorWindow {
                center: self.sectors.sector_of(noisy),
                half_width: self.cfg.uncertainty_sectors,
            };
            let out = sector_sweep(
                &self.cfg.sweep,
                n,
                1,
                Some((
                    window,
                    SectorWindow {
                        center: 0,
                        half_width: 0,
                    },
                )),
                min_q,
                quality,
            );
            duration += out.duration;
            found = out.pair.is_some();
        }
        if !found {
            let out = sector_sweep(&self.cfg.sweep, n, 1, None, min_q, quality);
            duration += out.duration;
        }
        let start = now.max(self.picocell_free[p]);
        let done = start + duration;
        self.picocell_free[p] = done;
        sched
            .schedule(
                done,
                PICOCELL_NODE_BASE + p as NodeId,
                CtrlEvent::BeamformDone {
                    device: i,
                    picocell: p,
                },
            )
            .expect("not in the past");
    }

    fn on_beamformed(&mut self, i: usize, p: usize, sched: &mut Scheduler<CtrlEvent>) {
        let now = sched.now();
        let here = self.room_now(i, now);
        if here != Some(self.net.picocells[p].room) {
            // moved on while training; the next tick starts a handover
            self.devs[i].room = self.net.picocells.get(p).map(|c| c.room);
            self.devs[i].handover_started.get_or_insert(now);
            return;
        }
        if !self.link_budget(i, p, now).usable() {
            self.set_phase(i, Phase::Requesting60g, None);
            self.devs[i].retry_setup = true;
            return;
        }
        if let Some(started) = self.devs[i].handover_started.take() {
            self.handovers.push(now - started);
        }
        if self.devs[i].fallback.route == Route::Use24g {
            self.set_phase(
                i,
                if self.devs[i].active.is_some() {
                    Phase::Fallback
                } else {
                    Phase::WifiAssociated
                },
                None,
            );
            return;
        }
        let phase = if self.devs[i].active.is_some() {
            Phase::Transferring
        } else {
            Phase::Beamformed
        };
        if let Some(a) = &self.devs[i].active {
            self.sessions[a.log].beamformed.get_or_insert(now);
        }
        self.set_phase(i, phase, Some(p));
        self.devs[i].last_pump = now;
    }

    fn room_now(&self, i: usize, t: SimTime) -> Option<usize> {
        self.net.floor.room_of(self.position(i, t))
    }

    fn tick(&mut self, sched: &mut Scheduler<CtrlEvent>, metrics: &mut Collector) {
        let now = sched.now();
        for i in 0..self.devs.len() {
            if self.devs[i].state.phase == Phase::Idle {
                continue;
            }
            self.pump_60(i, now, metrics);
            self.check_room(i, sched, metrics);
            if self.cfg.control_plane == ControlPlane::InBand60 {
                continue;
            }
            let link = self.room_link(i, now);
            let policy = self.cfg.fallback.clone();
            let (route, changed) = self.devs[i].fallback.evaluate(&policy, &link, now);
            if !changed {
                if self.devs[i].retry_setup && route == Route::Use60g && link.usable() {
                    self.devs[i].retry_setup = false;
                    self.request_60g(i, sched, metrics);
                }
                continue;
            }
            self.devs[i].retry_setup = false;
            metrics.record(
                now,
                Self::node(i),
                MetricEvent::FallbackSwitch {
                    to_24: route == Route::Use24g,
                },
            );
            match route {
                Route::Use24g => {
                    let phase = if self.devs[i].active.is_some() {
                        Phase::Fallback
                    } else {
                        Phase::WifiAssociated
                    };
                    self.set_phase(i, phase, None);
                    self.pump_24(i, sched, metrics);
                }
                Route::Use60g => {
                    if self.devs[i].active.is_some() {
                        self.request_60g(i, sched, metrics);
                    } else {
                        self.set_phase(i, Phase::WifiAssociated, None);
                    }
                }
            }
        }
    }

    fn check_room(&mut self, i: usize, sched: &mut Scheduler<CtrlEvent>, metrics: &mut Collector) {
        let now = sched.now();
        let room = self.room_now(i, now);
        if room == self.devs[i].room || room.is_none() {
            return;
        }
        self.devs[i].room = room;
        let had_link = matches!(
            self.devs[i].state.phase,
            Phase::Beamformed | Phase::Transferring
        ) || self.devs[i].handover_started.is_some();
        if !had_link {
            return;
        }
        metrics.record(now, Self::node(i), MetricEvent::Handover);
        self.devs[i].handover_started = Some(now);
        self.set_phase(i, Phase::Requesting60g, None);
        match room.and_then(|r| self.net.picocell_for_room(r)) {
            Some(p) => match self.cfg.control_plane {
                ControlPlane::Wifi => self.direct(i, p, sched, metrics),
                ControlPlane::InBand60 => {
                    let at = self.inband_control_time(i, now);
                    sched
                        .schedule(at, Self::node(i), CtrlEvent::InBandRequest { device: i })
                        .expect("not in the past");
                }
            },
            None => {
                self.devs[i].handover_started = None;
                if self.cfg.control_plane == ControlPlane::Wifi {
                    self.fall_back_now(i, sched, metrics);
                }
            }
        }
    }

    fn pump_60(&mut self, i: usize, now: SimTime, metrics: &mut Collector) {
        if self.devs[i].state.phase != Phase::Transferring
            || self.devs[i].fallback.route != Route::Use60g
        {
            return;
        }
        let Some(p) = self.devs[i].state.picocell else {
            return;
        };
        let from = self.devs[i].last_pump;
        self.devs[i].last_pump = now;
        let Some(remaining) = self.devs[i].active.as_ref().map(|a| a.remaining) else {
            return;
        };
        let link = self.link_budget(i, p, now);
        if !link.usable() || remaining == 0 || from >= now {
            return;
        }
        let sector = self.sector_of(i, p, now);
        let schedule = self.sectors.schedule(SimTime::ZERO);
        let Ok(rep) = transfer(remaining, link.rate_bps, &schedule, sector, from, Some(now)) else {
            return;
        };
        if rep.delivered_bytes > 0 {
            metrics.record(
                now,
                Self::node(i),
                MetricEvent::BytesDelivered {
                    band: Band::Mmwave60,
                    bytes: rep.delivered_bytes,
                },
            );
        }
        let a = self.devs[i].active.as_mut().expect("active session");
        a.remaining -= rep.delivered_bytes;
        if a.remaining == 0 {
            self.finish_session(i, rep.finished_at, now, metrics);
        }
    }

    fn finish_session(&mut self, i: usize, done: SimTime, now: SimTime, metrics: &mut Collector) {
        let a = self.devs[i].active.take().expect("active session");
        let log = &mut self.sessions[a.log];
        log.completed = Some(done);
        metrics.record(
            now,
            Self::node(i),
            MetricEvent::SessionComplete {
                latency: done - log.arrival,
            },
        );
        let phase = match (self.devs[i].state.phase, self.devs[i].state.picocell) {
            (Phase::Transferring, Some(_)) => Phase::Beamformed,
            (Phase::Requesting60g, None) => Phase::Requesting60g,
            (_, Some(_)) => Phase::Beamformed,
            _ => Phase::WifiAssociated,
        };
        let pc = self.devs[i].state.picocell;
        self.set_phase(i, phase, pc);
    }

    fn pump_24(&mut self, i: usize, sched: &mut Scheduler<CtrlEvent>, metrics: &mut Collector) {
        if self.devs[i].fallback.route != Route::Use24g || self.devs[i].in_flight_24 > 0 {
            return;
        }
        let Some(a) = self.devs[i].active.as_mut() else {
            return;
        };
        if a.remaining == 0 {
            return;
        }
        let n = a.remaining.min(self.cfg.fallback_frame_bytes as u64);
        a.remaining -= n;
        self.devs[i].in_flight_24 = n;
        let st = self.devs[i].wifi_station;
        self.chan.enqueue(
            st,
            FrameSpec::data(n as u32),
            tag(i, Purpose::Payload, n),
            sched,
            metrics,
        );
    }

    fn on_notice(
        &mut self,
        notice: DcfNotice,
        sched: &mut Scheduler<CtrlEvent>,
        metrics: &mut Collector,
    ) {
        let now = sched.now();
        let station = match notice {
            DcfNotice::Delivered { station, .. } | DcfNotice::Dropped { station, .. } => station,
        };
        if station >= self.background_first {
            return;
        }
        match notice {
            DcfNotice::Delivered { tag: t, .. } => {
                let (i, purpose, extra) = untag(t);
                match purpose {
                    Purpose::AssocReq => {
                        let resp = FrameSpec::of(FrameKind::AssocResp);
                        self.chan.enqueue(
                            self.ap_station,
                            resp,
                            tag(i, Purpose::AssocResp, 0),
                            sched,
                            metrics,
                        );
                    }
                    Purpose::AssocResp => {
                        metrics.record(now, Self::node(i), MetricEvent::WifiAssociation);
                        self.set_phase(i, Phase::WifiAssociated, None);
                        self.start_next(i, sched, metrics);
                    }
                    Purpose::ChanReq => self.on_granted(i, sched, metrics),
                    Purpose::Directive => self.on_directed(i, extra as usize, sched),
                    Purpose::Payload => {
                        self.devs[i].in_flight_24 = 0;
                        metrics.record(
                            now,
                            Self::node(i),
                            MetricEvent::BytesDelivered {
                                band: Band::Wifi24,
                                bytes: extra,
                            },
                        );
                        if self.devs[i].fallback.route == Route::Use60g
                            && self.room_link(i, now).usable()
                        {
                            metrics.record(
                                now,
                                Self::node(i),
                                MetricEvent::Payload24While60 { bytes: extra },
                            );
                        }
                        if let Some(a) = &self.devs[i].active {
                            self.sessions[a.log].bytes_24g += extra;
                            if a.remaining == 0 {
                                self.finish_session(i, now, now, metrics);
                                self.start_next(i, sched, metrics);
                                return;
                            }
                        }
                        self.pump_24(i, sched, metrics);
                    }
                }
            }
            DcfNotice::Dropped {
                station, tag: t, ..
            } => {
                let (i, purpose, extra) = untag(t);
                match purpose {
                    Purpose::Payload => {
                        self.devs[i].in_flight_24 = 0;
                        if let Some(a) = self.devs[i].active.as_mut() {
                            a.remaining += extra;
                        }
                        self.pump_24(i, sched, metrics);
                    }
                    _ => {
                        // control frames are retried until they get through
                        let frame = match purpose {
                            Purpose::AssocReq => FrameSpec::of(FrameKind::AssocReq),
                            Purpose::ChanReq => FrameSpec::of(FrameKind::ChanReq60),
                            _ => FrameSpec::of(FrameKind::AssocResp),
                        };
                        self.chan.enqueue(station, frame, t, sched, metrics);
                    }
                }
            }
        }
    }
}

/// Builds, runs and reports in one call.
pub fn run_network(
    net: &Network,
    cfg: &ControllerConfig,
    seed: u64,
    end: SimTime,
    metrics: &mut Collector,
) -> Result<ControllerReport, ControllerError> {
    Ok(Controller::new(net, cfg, seed)?.run(end, metrics))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mobility::{MobilityTrace, Waypoint};

    fn ms(v: u64) -> SimTime {
        SimTime::from_millis(v)
    }

    fn ok_link() -> LinkBudget {
        LinkBudget {
            rx_power_dbm: -50.0,
            snr_db: 20.0,
            blocked: false,
            rate_bps: 4e9,
        }
    }

    #[test]
    fn continuous_link_never_switches() {
        let mut st = FallbackState::default();
        let p = FallbackPolicy::default();
        for t in 0..1000 {
            let (r, changed) = st.evaluate(&p, &ok_link(), ms(t));
            assert_eq!(r, Route::Use60g);
            assert!(!changed);
        }
    }

    #[test]
    fn permanent_blockage_switches_at_threshold() {
        let mut st = FallbackState::default();
        let p = FallbackPolicy::default();
        let t0 = 500u64;
        for t in 0..t0 {
            st.evaluate(&p, &ok_link(), ms(t));
        }
        let mut switched_at = None;
        for t in t0..t0 + 100 {
            let (r, changed) = st.evaluate(&p, &LinkBudget::blocked(), ms(t));
            if changed {
                switched_at = Some(t);
            }
            if t < t0 + 20 {
                assert_eq!(r, Route::Use60g);
            } else {
                assert_eq!(r, Route::Use24g);
            }
        }
        assert_eq!(switched_at, Some(t0 + 20));
    }

    #[test]
    fn short_blockage_is_suppressed() {
        let mut st = FallbackState::default();
        let p = FallbackPolicy::default();
        for t in 0..200u64 {
            let link = if (50..69).contains(&t) {
                LinkBudget::blocked()
            } else {
                ok_link()
            };
            let (r, changed) = st.evaluate(&p, &link, ms(t));
            assert_eq!(r, Route::Use60g);
            assert!(!changed);
        }
    }

    #[test]
    fn restoration_needs_hysteresis() {
        let mut st = FallbackState::default();
        let p = FallbackPolicy::default();
        st.force(Route::Use24g);
        for t in 0..100u64 {
            assert_eq!(st.evaluate(&p, &ok_link(), ms(t)).0, Route::Use24g);
        }
        assert_eq!(st.evaluate(&p, &ok_link(), ms(100)), (Route::Use60g, true));
    }

    #[test]
    fn tags_round_trip() {
        for (i, p, x) in [
            (0usize, Purpose::Payload, 1024u64),
            (77, Purpose::Directive, 3),
            (5, Purpose::AssocReq, 0),
        ] {
            assert_eq!(untag(tag(i, p, x)), (i, p, x));
        }
    }

    fn one_room_net(sessions: Vec<SessionRequest>) -> Network {
        let floor = FloorPlan::four_rooms();
        let picocells = floor
            .rooms
            .iter()
            .enumerate()
            .map(|(k, r)| Picocell {
                name: r.name.clone(),
                room: k,
                position: r.center(),
            })
            .collect();
        Network {
            wifi_ap: Point::new(5.5, 4.5),
            picocells,
            devices: vec![DeviceSpec {
                name: "dev0".into(),
                trace: MobilityTrace::stationary(
                    Point::new(4.5, 2.0),
                    SimTime::from_secs_f64(10.0),
                ),
                sessions,
            }],
            blockages: Vec::new(),
            background: Vec::new(),
            floor,
        }
    }

    #[test]
    fn idle_network_session_composes() {
        let net = one_room_net(vec![SessionRequest {
            at: ms(100),
            bytes: 1_000_000,
        }]);
        let cfg = ControllerConfig::default();
        let mut m = Collector::new("t", 1);
        let rep = run_network(&net, &cfg, 1, ms(1000), &mut m).unwrap();
        let r = m.finalize();
        assert!(r.valid, "{}", r.diagnostic);
        let s = rep.sessions[0];
        let (g, b, c) = (
            s.granted.unwrap(),
            s.beamformed.unwrap(),
            s.completed.unwrap(),
        );
        assert!(s.arrival < g && g < b && b < c);
        assert_eq!(r.bytes_60g, 1_000_000);
        assert_eq!(r.bytes_24g, 0);
        assert_eq!(r.control_frames_60g, 0);
        assert_eq!(r.wifi_associations, 1);
        assert!(rep.states_consistent);
    }

    #[test]
    fn zero_byte_session_is_instant() {
        let net = one_room_net(vec![SessionRequest {
            at: ms(100),
            bytes: 0,
        }]);
        let mut m = Collector::new("t", 1);
        let rep = run_network(&net, &ControllerConfig::default(), 1, ms(300), &mut m).unwrap();
        assert_eq!(rep.sessions[0].completed, Some(ms(100)));
        assert_eq!(m.finalize().sessions, 1);
    }

    #[test]
    fn room_without_picocell_falls_back() {
        let mut net = one_room_net(vec![SessionRequest {
            at: ms(100),
            bytes: 20_000,
        }]);
        net.picocells.retain(|p| p.room != 0);
        let mut m = Collector::new("t", 2);
        let rep = run_network(&net, &ControllerConfig::default(), 2, ms(1000), &mut m).unwrap();
        let r = m.finalize();
        assert_eq!(r.bytes_24g, 20_000);
        assert_eq!(r.bytes_60g, 0);
        assert_eq!(r.fallback_switches, 1);
        assert!(rep.sessions[0].completed.is_some());
        assert!(r.valid, "{}", r.diagnostic);
    }

    #[test]
    fn crossing_one_wall_is_one_handover() {
        let mut net = one_room_net(vec![SessionRequest {
            at: ms(50),
            bytes: 10_000,
        }]);
        net.devices[0].trace =
            MobilityTrace::from_waypoints(&[Waypoint::at(3.0, 2.5), Waypoint::at(9.0, 2.5)], 1.0)
                .unwrap();
        let mut m = Collector::new("t", 3);
        let rep = run_network(
            &net,
            &ControllerConfig::default(),
            3,
            SimTime::from_secs_f64(7.0),
            &mut m,
        )
        .unwrap();
        let r = m.finalize();
        assert_eq!(r.handovers, 1);
        assert_eq!(r.wifi_associations, 1);
        assert_eq!(rep.handover_durations.len(), 1);
        assert_eq!(rep.states[0].picocell, Some(1));
    }
}
