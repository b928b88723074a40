//! Scenario file schema, defaults, `--set` overrides and validation.

use std::ops::Range;

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use super::ScenarioError;
use crate::beamtrack::TrackingParams;
use crate::controller::{ControlPlane, FallbackPolicy};
use crate::discovery::{DiscoveryParams, DiscoverySelection};
use crate::floorplan::{FloorPlan, Point};
use crate::mac_control::{AccessCategoryParams, MacParams};
use crate::mac_mmwave::{SectorConfig, SweepTiming};
use crate::mobility::RouteSpec;
use crate::propagation::LinkModel;
use crate::sim::SimTime;

/// Top-level scenario file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Scenario {
    pub run_id: String,
    pub seed: u64,
    pub duration_s: f64,
    /// Four 6 m x 5 m rooms when absent.
    pub floor_plan: Option<FloorPlan>,
    pub wifi_ap: WifiApConfig,
    /// One ceiling picocell at the centre of every room when absent.
    pub picocells: Option<Vec<PicocellConfig>>,
    pub devices: Vec<DeviceConfig>,
    pub mac: MacConfig,
    pub link: LinkModel,
    pub mmwave: MmwaveConfig,
    pub discovery: DiscoveryConfig,
    pub mobility: MobilityConfig,
    pub beamtrack: BeamtrackConfig,
    pub fallback: FallbackPolicy,
    pub traffic: TrafficConfig,
    pub blockages: Vec<BlockageConfig>,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            run_id: "default".into(),
            seed: 1,
            duration_s: 10.0,
            floor_plan: None,
            wifi_ap: WifiApConfig::default(),
            picocells: None,
            devices: Vec::new(),
            mac: MacConfig::default(),
            link: LinkModel::default(),
            mmwave: MmwaveConfig::default(),
            discovery: DiscoveryConfig::default(),
            mobility: MobilityConfig::default(),
            beamtrack: BeamtrackConfig::default(),
            fallback: FallbackPolicy::default(),
            traffic: TrafficConfig::default(),
            blockages: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WifiApConfig {
    pub position: Point,
}

impl Default for WifiApConfig {
    fn default() -> Self {
        WifiApConfig {
            position: Point::new(5.5, 4.5),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PicocellConfig {
    pub name: String,
    pub room: String,
    /// Room centre when absent.
    pub position: Option<Point>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceConfig {
    pub name: String,
    pub route: RouteSpec,
    /// Falls back to `mobility.speed_mps`.
    pub speed_mps: Option<f64>,
}

/// Per-category overrides on top of the built-in access categories.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MacConfig {
    pub aifs_differentiation: bool,
    pub req60: CategoryOverrides,
    pub wifi24: CategoryOverrides,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CategoryOverrides {
    pub cw_min: Option<u32>,
    pub cw_max: Option<u32>,
    pub retry_limit: Option<u32>,
    pub sifs_us: Option<u64>,
    pub difs_us: Option<u64>,
    pub slot_time_us: Option<u64>,
    pub ctrl_rate_bps: Option<f64>,
    pub data_rate_bps: Option<f64>,
}

impl CategoryOverrides {
    pub fn apply(&self, mut p: AccessCategoryParams) -> AccessCategoryParams {
        macro_rules! take {
            ($($f:ident),*) => { $(if let Some(v) = self.$f { p.$f = v; })* };
        }
        take!(
            cw_min,
            cw_max,
            retry_limit,
            sifs_us,
            difs_us,
            slot_time_us,
            ctrl_rate_bps,
            data_rate_bps
        );
        p
    }
}

impl MacConfig {
    pub fn params(&self) -> MacParams {
        let base = MacParams::default();
        MacParams {
            req60: self.req60.apply(base.req60),
            wifi24: self.wifi24.apply(base.wifi24),
            aifs_differentiation: self.aifs_differentiation,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MmwaveConfig {
    pub beamwidth_deg: f64,
    pub cbap_duration_us: u64,
    pub control_plane: ControlPlane,
    pub link_check_ms: f64,
    /// Payload frame size used on 2.4 GHz during fallback.
    pub fallback_frame_bytes: u32,
    pub sweep: SweepTiming,
}

impl Default for MmwaveConfig {
    fn default() -> Self {
        MmwaveConfig {
            beamwidth_deg: 60.0,
            cbap_duration_us: 1000,
            control_plane: ControlPlane::Wifi,
            link_check_ms: 1.0,
            fallback_frame_bytes: 1024,
            sweep: SweepTiming::default(),
        }
    }
}

impl MmwaveConfig {
    pub fn sectors(&self) -> Result<SectorConfig, crate::mac_mmwave::MmwaveError> {
        SectorConfig::new(
            self.beamwidth_deg,
            SimTime::from_micros(self.cbap_duration_us),
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiscoveryConfig {
    pub mode: DiscoverySelection,
    /// Devices placed at random bearings around one picocell. Zero skips
    /// the discovery experiment.
    pub devices: u32,
    /// Half a sector when absent.
    pub estimate_sigma_deg: Option<f64>,
    pub uncertainty_sectors: usize,
    pub signaling_overhead: bool,
    pub time_limit_ms: f64,
}

impl Default for DiscoveryConfig {
    fn default() -> Self {
        let d = DiscoveryParams::default();
        DiscoveryConfig {
            mode: DiscoverySelection::Both,
            devices: 10,
            estimate_sigma_deg: d.estimate_sigma_deg,
            uncertainty_sectors: d.uncertainty_sectors,
            signaling_overhead: d.signaling_overhead,
            time_limit_ms: d.time_limit_ms,
        }
    }
}

impl DiscoveryConfig {
    pub fn params(&self, sweep: &SweepTiming) -> DiscoveryParams {
        DiscoveryParams {
            sweep: sweep.clone(),
            estimate_sigma_deg: self.estimate_sigma_deg,
            uncertainty_sectors: self.uncertainty_sectors,
            signaling_overhead: self.signaling_overhead,
            time_limit_ms: self.time_limit_ms,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MobilityConfig {
    pub speed_mps: f64,
}

impl Default for MobilityConfig {
    fn default() -> Self {
        MobilityConfig { speed_mps: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BeamtrackConfig {
    /// Run the tracking comparison for every moving device.
    pub enabled: bool,
    pub sample_period_ms: f64,
    pub noise_sigma_deg: f64,
    pub horizon_periods: f64,
    pub speed_error: f64,
    pub sensor_update_bytes: u64,
}

impl Default for BeamtrackConfig {
    fn default() -> Self {
        let t = TrackingParams::default();
        BeamtrackConfig {
            enabled: true,
            sample_period_ms: t.sample_period_ms,
            noise_sigma_deg: t.noise_sigma_deg,
            horizon_periods: t.horizon_periods,
            speed_error: t.speed_error,
            sensor_update_bytes: t.sensor_update_bytes,
        }
    }
}

impl BeamtrackConfig {
    pub fn params(&self, sweep: &SweepTiming) -> TrackingParams {
        TrackingParams {
            sample_period_ms: self.sample_period_ms,
            noise_sigma_deg: self.noise_sigma_deg,
            horizon_periods: self.horizon_periods,
            speed_error: self.speed_error,
            sensor_update_bytes: self.sensor_update_bytes,
            sweep: sweep.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrafficConfig {
    /// Payload of every data session; zero disables sessions.
    pub session_bytes: u64,
    pub first_session_s: f64,
    pub session_interval_s: f64,
    /// Zero means unbounded.
    pub session_count: u32,
    /// No sessions start at or after this time; the run end when absent.
    pub stop_s: Option<f64>,
    /// Background stations contending on 2.4 GHz, per category.
    pub background_req60: u32,
    pub background_wifi24: u32,
    /// Zero makes background stations saturated.
    pub background_interarrival_ms: f64,
    pub background_frame_bytes: u32,
}

impl Default for TrafficConfig {
    fn default() -> Self {
        TrafficConfig {
            session_bytes: 200_000,
            first_session_s: 0.1,
            session_interval_s: 1.0,
            session_count: 0,
            stop_s: None,
            background_req60: 0,
            background_wifi24: 0,
            background_interarrival_ms: 10.0,
            background_frame_bytes: 1024,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockageConfig {
    /// Every device when absent.
    pub device: Option<String>,
    pub start_s: f64,
    /// Permanent when absent.
    pub end_s: Option<f64>,
}

impl Scenario {
    pub fn floor(&self) -> FloorPlan {
        self.floor_plan
            .clone()
            .unwrap_or_else(FloorPlan::four_rooms)
    }

    /// Configured picocells, or one per room at its centre.
    pub fn picocell_list(&self) -> Vec<PicocellConfig> {
        match &self.picocells {
            Some(p) => p.clone(),
            None => self
                .floor()
                .rooms
                .iter()
                .map(|r| PicocellConfig {
                    name: format!("pico-{}", r.name),
                    room: r.name.clone(),
                    position: None,
                })
                .collect(),
        }
    }

    pub fn duration(&self) -> SimTime {
        SimTime::from_secs_f64(self.duration_s)
    }
}

/// Default 4-room floor plan with its WiFi AP and picocells spelled out.
pub fn default_floorplan() -> Scenario {
    let mut s = Scenario::default();
    s.picocells = Some(s.picocell_list());
    s.floor_plan = Some(FloorPlan::four_rooms());
    s
}

/// Where a configuration error points: a dotted key and, when the key
/// appears in the source text, its 1-based line.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KeyLocation {
    pub key: String,
    pub line: Option<usize>,
}

impl std::fmt::Display for KeyLocation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.line {
            Some(l) => write!(f, "`{}` (line {l})", self.key),
            None => write!(f, "`{}`", self.key),
        }
    }
}

fn line_of(src: &str, offset: usize) -> usize {
    src[..offset.min(src.len())]
        .bytes()
        .filter(|&b| b == b'\n')
        .count()
        + 1
}

/// Span of the value at a dotted path such as `picocells.1.room`.
fn find_span(src: &str, key: &str) -> Option<Range<usize>> {
    use toml::de::{DeTable, DeValue};
    let root = DeTable::parse(src).ok()?;
    let mut span = root.span();
    let mut cur: Option<&DeValue> = None;
    let mut table: Option<&DeTable> = Some(root.get_ref());
    for part in key.split('.') {
        let next = match (table, cur) {
            (Some(t), _) => t.get(part),
            (None, Some(DeValue::Array(a))) => part.parse::<usize>().ok().and_then(|i| a.get(i)),
            _ => None,
        }?;
        span = next.span();
        cur = Some(next.get_ref());
        table = match next.get_ref() {
            DeValue::Table(t) => Some(t),
            _ => None,
        };
    }
    Some(span)
}

pub(crate) fn locate(src: Option<&str>, key: &str) -> KeyLocation {
    let line = src.and_then(|s| find_span(s, key).map(|r| line_of(s, r.start)));
    KeyLocation {
        key: key.to_string(),
        line,
    }
}

/// Turns `--set` text into a TOML value; bare words become strings.
pub(crate) fn parse_value(raw: &str) -> Value {
    let doc = format!("v = {raw}");
    match doc.parse::<Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| Value::String(raw.into())),
        Err(_) => Value::String(raw.to_string()),
    }
}

/// Short names accepted by `--set` and sweep axes.
pub fn resolve_alias(key: &str) -> &str {
    match key {
        "devices" => "discovery.devices",
        "beamwidth" | "beamwidth_deg" => "mmwave.beamwidth_deg",
        "duration" => "duration_s",
        other => other,
    }
}

pub(crate) fn set_path(root: &mut Table, key: &str, value: Value) -> Result<(), String> {
    let parts: Vec<&str> = key.split('.').collect();
    let mut doc = Value::Table(root.clone());
    let mut cur = &mut doc;
    for (k, p) in parts.iter().enumerate() {
        let last = k + 1 == parts.len();
        cur = match cur {
            Value::Table(t) if last => {
                t.insert(p.to_string(), value);
                break;
            }
            Value::Table(t) => t
                .entry(p.to_string())
                .or_insert_with(|| Value::Table(Table::new())),
            Value::Array(a) => {
                let i: usize = p
                    .parse()
                    .map_err(|_| format!("`{p}` is not an array index"))?;
                let slot = a
                    .get_mut(i)
                    .ok_or_else(|| format!("index {i} out of range"))?;
                if last {
                    *slot = value;
                    break;
                }
                slot
            }
            _ => return Err(format!("`{p}` is inside a scalar")),
        };
    }
    if let Value::Table(t) = doc {
        *root = t;
    }
    Ok(())
}

pub(crate) fn get_path<'a>(root: &'a Table, key: &str) -> Option<&'a Value> {
    let mut parts = key.split('.');
    let mut cur = root.get(parts.next()?)?;
    for p in parts {
        cur = match cur {
            Value::Table(t) => t.get(p)?,
            Value::Array(a) => a.get(p.parse::<usize>().ok()?)?,
            _ => return None,
        };
    }
    Some(cur)
}

pub(crate) fn is_scalar(v: &Value) -> bool {
    !matches!(v, Value::Table(_) | Value::Array(_))
}

fn toml_error(src: &str, e: toml::de::Error) -> ScenarioError {
    let line = e.span().map(|r| line_of(src, r.start));
    ScenarioError::Parse {
        line,
        message: e.message().to_string(),
    }
}

/// Parses scenario text, applies `key=value` overrides and validates.
pub fn parse_scenario(
    src: &str,
    overrides: &[(String, String)],
) -> Result<Scenario, ScenarioError> {
    let mut scenario: Scenario = toml::from_str(src).map_err(|e| toml_error(src, e))?;
    for (key, raw) in overrides {
        scenario = super::apply_override(&scenario, key, raw)?;
    }
    validate(&scenario, Some(src))?;
    Ok(scenario)
}

/// Reads and validates a scenario file.
pub fn load_scenario(
    path: &std::path::Path,
    overrides: &[(String, String)],
) -> Result<Scenario, ScenarioError> {
    let src = std::fs::read_to_string(path).map_err(|e| ScenarioError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    parse_scenario(&src, overrides)
}

/// Checks the scenario invariants. `src` only improves error locations.
pub fn validate(s: &Scenario, src: Option<&str>) -> Result<(), ScenarioError> {
    let invalid = |key: &str, reason: String| ScenarioError::Invalid {
        at: locate(src, key),
        reason,
    };
    if !(s.duration_s > 0.0 && s.duration_s.is_finite()) {
        return Err(invalid(
            "duration_s",
            format!("must be positive, got {}", s.duration_s),
        ));
    }
    let floor = s.floor();
    if floor.rooms.is_empty() {
        return Err(invalid(
            "floor_plan.rooms",
            "at least one room is required".into(),
        ));
    }
    for (i, r) in floor.rooms.iter().enumerate() {
        if !(r.max[0] > r.min[0] && r.max[1] > r.min[1]) {
            return Err(invalid(
                &format!("floor_plan.rooms.{i}"),
                format!("room `{}` has no area", r.name),
            ));
        }
        if floor.rooms[..i].iter().any(|o| o.name == r.name) {
            return Err(invalid(
                &format!("floor_plan.rooms.{i}.name"),
                format!("duplicate room `{}`", r.name),
            ));
        }
    }
    if floor.room_of(s.wifi_ap.position).is_none() {
        return Err(invalid(
            "wifi_ap.position",
            "WiFi AP is outside every room".into(),
        ));
    }
    for (i, p) in s.picocell_list().iter().enumerate() {
        let Some(room) = floor.room_index(&p.room) else {
            return Err(invalid(
                &format!("picocells.{i}.room"),
                format!("unknown room `{}`", p.room),
            ));
        };
        if let Some(pos) = p.position {
            if !floor.rooms[room].contains_closed(pos) {
                return Err(invalid(
                    &format!("picocells.{i}.position"),
                    format!("outside room `{}`", p.room),
                ));
            }
        }
    }
    let speed_ok = |v: f64| v > 0.0 && v.is_finite();
    if !speed_ok(s.mobility.speed_mps) {
        return Err(invalid("mobility.speed_mps", "must be positive".into()));
    }
    for (i, d) in s.devices.iter().enumerate() {
        if s.devices[..i].iter().any(|o| o.name == d.name) {
            return Err(invalid(
                &format!("devices.{i}.name"),
                format!("duplicate device `{}`", d.name),
            ));
        }
        if let Some(v) = d.speed_mps {
            if !speed_ok(v) {
                return Err(invalid(
                    &format!("devices.{i}.speed_mps"),
                    "must be positive".into(),
                ));
            }
        }
        let fixed: Vec<Point> = match &d.route {
            RouteSpec::Stationary { at, duration_s } => {
                if !(*duration_s > 0.0) {
                    return Err(invalid(
                        &format!("devices.{i}.route.duration_s"),
                        "must be positive".into(),
                    ));
                }
                vec![*at]
            }
            RouteSpec::Straight { from, to } => vec![*from, *to],
            RouteSpec::LShape { from, corner, to } => vec![*from, *corner, *to],
            RouteSpec::RectangleLoop { min, max, .. }
            | RouteSpec::RandomWaypoint { min, max, .. } => {
                vec![
                    *min,
                    *max,
                    Point::new(min.x, max.y),
                    Point::new(max.x, min.y),
                ]
            }
            RouteSpec::Waypoints { points } => {
                if points.is_empty() {
                    return Err(invalid(
                        &format!("devices.{i}.route.points"),
                        "route needs a waypoint".into(),
                    ));
                }
                if points.iter().any(|w| w.dwell_s < 0.0) {
                    return Err(invalid(
                        &format!("devices.{i}.route.points"),
                        "dwell must be non-negative".into(),
                    ));
                }
                points.iter().map(|w| w.position).collect()
            }
        };
        // Straight segments between in-room corners of convex rooms can still
        // leave the floor, so check sampled points along every leg as well.
        let mut pts = fixed.clone();
        for w in fixed.windows(2) {
            pts.extend((1..20).map(|k| {
                let f = k as f64 / 20.0;
                Point::new(
                    w[0].x + f * (w[1].x - w[0].x),
                    w[0].y + f * (w[1].y - w[0].y),
                )
            }));
        }
        if let Some(p) = pts.iter().find(|p| floor.room_of(**p).is_none()) {
            return Err(invalid(
                &format!("devices.{i}.route"),
                format!("device `{}` leaves the floor at ({}, {})", d.name, p.x, p.y),
            ));
        }
    }
    s.mac
        .params()
        .validate()
        .map_err(|e| invalid("mac", e.to_string()))?;
    s.mmwave
        .sectors()
        .map_err(|e| invalid("mmwave.beamwidth_deg", e.to_string()))?;
    if s.mmwave.cbap_duration_us == 0 {
        return Err(invalid(
            "mmwave.cbap_duration_us",
            "must be positive".into(),
        ));
    }
    if !(s.mmwave.link_check_ms > 0.0) {
        return Err(invalid("mmwave.link_check_ms", "must be positive".into()));
    }
    if s.mmwave.fallback_frame_bytes == 0 {
        return Err(invalid(
            "mmwave.fallback_frame_bytes",
            "must be positive".into(),
        ));
    }
    if !(s.mmwave.sweep.sweep_rate_bps > 0.0) {
        return Err(invalid(
            "mmwave.sweep.sweep_rate_bps",
            "must be positive".into(),
        ));
    }
    s.fallback
        .validate()
        .map_err(|e| invalid("fallback", e.to_string()))?;
    if !(s.beamtrack.sample_period_ms > 0.0) {
        return Err(invalid(
            "beamtrack.sample_period_ms",
            "must be positive".into(),
        ));
    }
    if s.beamtrack.noise_sigma_deg < 0.0 || s.beamtrack.horizon_periods < 0.0 {
        return Err(invalid(
            "beamtrack",
            "noise and horizon must be non-negative".into(),
        ));
    }
    if !(s.discovery.time_limit_ms > 0.0) {
        return Err(invalid(
            "discovery.time_limit_ms",
            "must be positive".into(),
        ));
    }
    let t = &s.traffic;
    if t.session_bytes > 0 && !(t.session_interval_s > 0.0) {
        return Err(invalid(
            "traffic.session_interval_s",
            "must be positive".into(),
        ));
    }
    if t.first_session_s < 0.0 {
        return Err(invalid(
            "traffic.first_session_s",
            "must be non-negative".into(),
        ));
    }
    if t.background_interarrival_ms < 0.0 {
        return Err(invalid(
            "traffic.background_interarrival_ms",
            "must be non-negative".into(),
        ));
    }
    if (t.background_req60 > 0 || t.background_wifi24 > 0) && t.background_frame_bytes == 0 {
        return Err(invalid(
            "traffic.background_frame_bytes",
            "must be positive".into(),
        ));
    }
    for (i, b) in s.blockages.iter().enumerate() {
        if let Some(name) = &b.device {
            if !s.devices.iter().any(|d| &d.name == name) {
                return Err(invalid(
                    &format!("blockages.{i}.device"),
                    format!("unknown device `{name}`"),
                ));
            }
        }
        if b.start_s < 0.0 || b.end_s.is_some_and(|e| e <= b.start_s) {
            return Err(invalid(
                &format!("blockages.{i}"),
                "needs 0 <= start_s < end_s".into(),
            ));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[floor_plan]
rooms = [{ name = "den", min = [0.0, 0.0], max = [5.0, 4.0] }]
walls = []

[wifi_ap]
position = [1.0, 1.0]

[[picocells]]
name = "p"
room = "den"

[[devices]]
name = "phone"
route = { kind = "stationary", at = [3.0, 2.0], duration_s = 5.0 }
"#;

    #[test]
    fn minimal_file_gets_defaults() {
        let s = parse_scenario(MINIMAL, &[]).unwrap();
        assert_eq!(s.devices.len(), 1);
        assert_eq!(s.mmwave, MmwaveConfig::default());
        assert_eq!(s.fallback, FallbackPolicy::default());
        assert_eq!(s.mac.params(), MacParams::default());
        assert_eq!(s.duration_s, 10.0);
    }

    #[test]
    fn missing_room_is_reported_with_line() {
        let src = MINIMAL.replace("room = \"den\"", "room = \"attic\"");
        let err = parse_scenario(&src, &[]).unwrap_err();
        let ScenarioError::Invalid { at, .. } = &err else {
            panic!("{err}")
        };
        assert_eq!(at.key, "picocells.0.room");
        let expected = src.lines().position(|l| l.contains("attic")).unwrap() + 1;
        assert_eq!(at.line, Some(expected));
    }

    #[test]
    fn unknown_key_names_key_and_line() {
        let src = format!("{MINIMAL}\n[mmwave]\nbeam_width = 30\n");
        let err = parse_scenario(&src, &[]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("beam_width"), "{msg}");
        let ScenarioError::Parse { line, .. } = err else {
            panic!()
        };
        assert_eq!(line, Some(src.lines().count()));
    }

    #[test]
    fn type_mismatch_is_a_parse_error() {
        let err = parse_scenario("seed = \"seven\"", &[]).unwrap_err();
        assert!(
            matches!(err, ScenarioError::Parse { line: Some(1), .. }),
            "{err}"
        );
    }

    #[test]
    fn category_override_block_round_trips() {
        let src = format!(
            "{MINIMAL}
[mac.req60]
cw_min = 8
cw_max = 16
retry_limit = 5
[mac.wifi24]
cw_min = 32
cw_max = 256
retry_limit = 5
slot_time_us = 20
sifs_us = 10
"
        );
        let s = parse_scenario(&src, &[]).unwrap();
        let p = s.mac.params();
        assert_eq!(
            (p.req60.cw_min, p.req60.cw_max, p.req60.retry_limit),
            (8, 16, 5)
        );
        assert_eq!(
            (p.wifi24.cw_min, p.wifi24.cw_max, p.wifi24.retry_limit),
            (32, 256, 5)
        );
        assert_eq!((p.wifi24.slot_time_us, p.wifi24.sifs_us), (20, 10));

        let s = parse_scenario(&src, &[("mac.req60.cw_min".into(), "4".into())]).unwrap();
        assert_eq!(s.mac.params().req60.cw_min, 4);
    }

    #[test]
    fn overrides_apply_and_reject_unknown_paths() {
        let o = |k: &str, v: &str| vec![(k.to_string(), v.to_string())];
        let s = parse_scenario(MINIMAL, &o("mmwave.beamwidth_deg", "30")).unwrap();
        assert_eq!(s.mmwave.beamwidth_deg, 30.0);
        let s = parse_scenario(MINIMAL, &o("devices", "25")).unwrap();
        assert_eq!(s.discovery.devices, 25);
        let s = parse_scenario(MINIMAL, &o("run_id", "abc")).unwrap();
        assert_eq!(s.run_id, "abc");
        let s = parse_scenario(MINIMAL, &o("devices.0.speed_mps", "2")).unwrap();
        assert_eq!(s.devices[0].speed_mps, Some(2.0));
        assert!(parse_scenario(MINIMAL, &o("mmwave.nope", "1")).is_err());
        assert!(parse_scenario(MINIMAL, &o("mmwave", "1")).is_err());
        assert!(parse_scenario(MINIMAL, &o("mmwave.beamwidth_deg", "wide")).is_err());
        // override results are validated too
        assert!(matches!(
            parse_scenario(MINIMAL, &o("duration_s", "-1")),
            Err(ScenarioError::Invalid { .. })
        ));
    }

    #[test]
    fn device_outside_floor_rejected() {
        let src = MINIMAL.replace("at = [3.0, 2.0]", "at = [30.0, 2.0]");
        let err = parse_scenario(&src, &[]).unwrap_err();
        assert!(err.to_string().contains("devices.0.route"), "{err}");
    }

    #[test]
    fn default_floorplan_layout() {
        let s = default_floorplan();
        assert_eq!(s.floor().rooms.len(), 4);
        assert_eq!(s.picocell_list().len(), 4);
        validate(&s, None).unwrap();
    }
}
