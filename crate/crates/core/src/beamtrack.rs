//! Beam maintenance for a moving device: a heading sensor model, sector
//! prediction by dead reckoning, and re-beamforming accounting.
//!
//! Only the PCP/AP is sectorized here; the device antenna is isotropic.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::floorplan::Point;
use crate::mac_mmwave::{SectorConfig, SweepTiming};
use crate::metrics::{Collector, MetricEvent};
use crate::mobility::{bearing_from, MobilityTrace};
use crate::propagation::{angle_off, wrap_deg};
use crate::sim::{NodeId, RngStream, SimTime};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrackingMode {
    SensorOff,
    SensorOn,
}

impl TrackingMode {
    pub const ALL: [TrackingMode; 2] = [TrackingMode::SensorOff, TrackingMode::SensorOn];

    pub fn as_str(self) -> &'static str {
        match self {
            TrackingMode::SensorOff => "sensor_off",
            TrackingMode::SensorOn => "sensor_on",
        }
    }
}

impl fmt::Display for TrackingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TrackingMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sensor_off" => Ok(TrackingMode::SensorOff),
            "sensor_on" => Ok(TrackingMode::SensorOn),
            other => Err(format!("unknown tracking mode `{other}`")),
        }
    }
}

/// One reading of the fused rotation-vector sensor.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SensorSample {
    pub t: SimTime,
    /// Device orientation in the world frame, `[0, 360)`.
    pub azimuth_deg: f64,
    pub noise_sigma_deg: f64,
}

pub fn sample_sensor(
    t: SimTime,
    true_heading_deg: f64,
    noise_sigma_deg: f64,
    rng: &mut RngStream,
) -> SensorSample {
    SensorSample {
        t,
        azimuth_deg: wrap_deg(true_heading_deg + rng.gaussian(noise_sigma_deg)),
        noise_sigma_deg,
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BeamAlignment {
    pub ap_sector: usize,
    /// Always 0 for the isotropic device.
    pub device_sector: usize,
    pub angular_error_deg: f64,
    pub aligned: bool,
}

impl BeamAlignment {
    /// Alignment of `ap_sector` against a device at `device` as seen from `ap`.
    pub fn check(sectors: &SectorConfig, ap_sector: usize, ap: Point, device: Point) -> Self {
        let err = match bearing_from(ap, device) {
            Ok(b) => angle_off(b, sectors.sector_center(ap_sector)),
            Err(_) => 0.0,
        };
        BeamAlignment {
            ap_sector,
            device_sector: 0,
            angular_error_deg: err,
            aligned: err <= sectors.beamwidth_deg() / 2.0,
        }
    }
}

/// Sector the device will occupy one `horizon` from now, dead-reckoned from
/// `estimate` along the sensed heading at `speed_mps`.
pub fn predict_sector(
    sample: &SensorSample,
    current: &BeamAlignment,
    estimate: Point,
    speed_mps: f64,
    horizon: SimTime,
    ap: Point,
    sectors: &SectorConfig,
) -> usize {
    let step = speed_mps * horizon.as_secs_f64();
    if step <= 0.0 {
        return current.ap_sector;
    }
    let ahead = advance(estimate, sample.azimuth_deg, step);
    match bearing_from(ap, ahead) {
        Ok(b) => sectors.sector_of(b),
        Err(_) => current.ap_sector,
    }
}

fn advance(p: Point, heading_deg: f64, dist: f64) -> Point {
    let h = heading_deg.to_radians();
    Point::new(p.x + dist * h.cos(), p.y + dist * h.sin())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RebeamCause {
    Misalignment,
    PredictionMiss,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RebeamEvent {
    pub t: SimTime,
    pub cause: RebeamCause,
    pub cost: SimTime,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RebeamLog {
    pub mode: TrackingMode,
    pub events: Vec<RebeamEvent>,
    /// Beam changes made from a prediction, without a sweep.
    pub predicted_switches: u64,
    pub sensor_updates: u64,
    pub sensor_bytes: u64,
}

impl RebeamLog {
    pub fn count(&self) -> usize {
        self.events.len()
    }

    pub fn total_cost(&self) -> SimTime {
        self.events
            .iter()
            .fold(SimTime::ZERO, |acc, e| acc + e.cost)
    }

    pub fn record_into(&self, metrics: &mut Collector, node: NodeId) {
        for e in &self.events {
            metrics.record(
                e.t,
                node,
                MetricEvent::Rebeam {
                    mode: self.mode,
                    cost: e.cost,
                },
            );
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrackingParams {
    pub sample_period_ms: f64,
    pub noise_sigma_deg: f64,
    /// Prediction horizon in sample periods.
    pub horizon_periods: f64,
    /// Relative error of the predictor's speed estimate.
    pub speed_error: f64,
    /// Bytes of sensor data piggybacked per update.
    pub sensor_update_bytes: u64,
    pub sweep: SweepTiming,
}

impl Default for TrackingParams {
    fn default() -> Self {
        TrackingParams {
            sample_period_ms: 100.0,
            noise_sigma_deg: 2.0,
            horizon_periods: 1.0,
            speed_error: 0.0,
            sensor_update_bytes: 0,
            sweep: SweepTiming::default(),
        }
    }
}

impl TrackingParams {
    pub fn sample_period(&self) -> SimTime {
        SimTime::from_secs_f64(self.sample_period_ms / 1e3).max(SimTime::from_nanos(1))
    }

    pub fn horizon(&self) -> SimTime {
        SimTime::from_secs_f64(self.sample_period_ms * self.horizon_periods / 1e3)
    }
}

/// Follows `trace` from an initial beamformed state and logs every
/// re-beamforming the chosen mode needs. Each sweep is exhaustive over the
/// AP sectors against the isotropic device.
pub fn maintain_link(
    trace: &MobilityTrace,
    ap: Point,
    sectors: &SectorConfig,
    mode: TrackingMode,
    params: &TrackingParams,
    rng: &mut RngStream,
) -> RebeamLog {
    let period = params.sample_period();
    let sweep_cost = params.sweep.sweep_duration(sectors.sector_count() as u64);
    let mut log = RebeamLog {
        mode,
        events: Vec::new(),
        predicted_switches: 0,
        sensor_updates: 0,
        sensor_bytes: 0,
    };

    let (p0, _) = trace.position_at(trace.start());
    let sector_at = |p: Point, fallback: usize| {
        bearing_from(ap, p)
            .map(|b| sectors.sector_of(b))
            .unwrap_or(fallback)
    };
    let mut beam = sector_at(p0, 0);
    let mut estimate = p0;

    let mut t = trace.start();
    while t + period <= trace.end() {
        if mode == TrackingMode::SensorOn {
            let (_, heading) = trace.position_at(t);
            let sample = sample_sensor(t, heading, params.noise_sigma_deg, rng);
            log.sensor_updates += 1;
            log.sensor_bytes += params.sensor_update_bytes;
            let speed = trace.speed_at(t) * (1.0 + params.speed_error);
            let current = BeamAlignment::check(sectors, beam, ap, estimate);
            let next = predict_sector(
                &sample,
                &current,
                estimate,
                speed,
                params.horizon(),
                ap,
                sectors,
            );
            if next != beam {
                log.predicted_switches += 1;
                beam = next;
            }
            estimate = advance(estimate, sample.azimuth_deg, speed * period.as_secs_f64());
        }
        t += period;
        let (pos, _) = trace.position_at(t);
        if !BeamAlignment::check(sectors, beam, ap, pos).aligned {
            let cause = match mode {
                TrackingMode::SensorOff => RebeamCause::Misalignment,
                TrackingMode::SensorOn => RebeamCause::PredictionMiss,
            };
            log.events.push(RebeamEvent {
                t,
                cause,
                cost: sweep_cost,
            });
            beam = sector_at(pos, beam);
            estimate = pos;
        }
    }
    log
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mobility::RouteSpec;

    fn sectors(bw: f64) -> SectorConfig {
        SectorConfig::new(bw, SimTime::from_millis(1)).unwrap()
    }

    fn loop_trace(loops: u32) -> MobilityTrace {
        RouteSpec::RectangleLoop {
            min: Point::new(1.0, 1.2),
            max: Point::new(4.3, 3.9),
            loops,
        }
        .build(1.0, &mut RngStream::new(0, 0))
        .unwrap()
    }

    #[test]
    fn noiseless_sensor_is_exact() {
        let mut rng = RngStream::new(1, 1);
        assert_eq!(
            sample_sensor(SimTime::ZERO, 123.4, 0.0, &mut rng).azimuth_deg,
            123.4
        );
    }

    #[test]
    fn sensor_wraps() {
        let mut rng = RngStream::new(1, 1);
        let s = sample_sensor(SimTime::ZERO, 359.0, 0.0, &mut rng);
        assert_eq!(s.azimuth_deg, 359.0);
        assert!((wrap_deg(359.0 + 2.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sensor_noise_spread() {
        let mut rng = RngStream::new(9, 3);
        let n = 10_000;
        let xs: Vec<f64> = (0..n)
            .map(|_| sample_sensor(SimTime::ZERO, 180.0, 2.0, &mut rng).azimuth_deg - 180.0)
            .collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((var.sqrt() - 2.0).abs() < 0.2, "std {}", var.sqrt());
    }

    #[test]
    fn quantization_edges() {
        let s = sectors(30.0);
        assert_eq!(s.sector_of(44.0), 1);
        assert_eq!(s.sector_of(46.0), 2);
        assert_eq!(s.sector_of(45.0), 2);
    }

    #[test]
    fn stationary_prediction_keeps_sector() {
        let s = sectors(30.0);
        let ap = Point::new(0.0, 0.0);
        let dev = Point::new(2.0, 1.0);
        let cur = BeamAlignment::check(&s, s.sector_of(bearing_from(ap, dev).unwrap()), ap, dev);
        let sample = SensorSample {
            t: SimTime::ZERO,
            azimuth_deg: 90.0,
            noise_sigma_deg: 0.0,
        };
        assert_eq!(
            predict_sector(&sample, &cur, dev, 0.0, SimTime::from_millis(100), ap, &s),
            cur.ap_sector
        );
    }

    #[test]
    fn prediction_crosses_boundary() {
        let s = sectors(30.0);
        let ap = Point::new(0.0, 0.0);
        // bearing 10 deg, heading north; 1 m ahead the bearing is past 15 deg
        let dev = Point::new(3.0, 3.0 * 10f64.to_radians().tan());
        let cur = BeamAlignment::check(&s, 0, ap, dev);
        assert!(cur.aligned);
        let sample = SensorSample {
            t: SimTime::ZERO,
            azimuth_deg: 90.0,
            noise_sigma_deg: 0.0,
        };
        assert_eq!(
            predict_sector(&sample, &cur, dev, 1.0, SimTime::from_secs_f64(1.0), ap, &s),
            1
        );
    }

    #[test]
    fn stationary_route_never_rebeams() {
        let tr = MobilityTrace::stationary(Point::new(3.0, 1.0), SimTime::from_secs_f64(30.0));
        for mode in TrackingMode::ALL {
            let log = maintain_link(
                &tr,
                Point::new(0.0, 0.0),
                &sectors(30.0),
                mode,
                &TrackingParams::default(),
                &mut RngStream::new(1, 2),
            );
            assert_eq!(log.count(), 0);
        }
    }

    #[test]
    fn loop_counts_full_turns() {
        let ap = Point::new(2.5, 2.5);
        let quiet = TrackingParams {
            noise_sigma_deg: 0.0,
            ..TrackingParams::default()
        };
        for (bw, expected) in [(30.0, 12), (20.0, 18)] {
            let log = maintain_link(
                &loop_trace(1),
                ap,
                &sectors(bw),
                TrackingMode::SensorOff,
                &quiet,
                &mut RngStream::new(1, 2),
            );
            assert_eq!(log.count(), expected, "bw {bw}");
            assert!(log
                .events
                .iter()
                .all(|e| e.cause == RebeamCause::Misalignment));
        }
    }

    #[test]
    fn sensor_on_reduces_events() {
        let ap = Point::new(2.5, 2.5);
        let p = TrackingParams::default();
        let s = sectors(30.0);
        let off = maintain_link(
            &loop_trace(1),
            ap,
            &s,
            TrackingMode::SensorOff,
            &p,
            &mut RngStream::new(4, 2),
        );
        let on = maintain_link(
            &loop_trace(1),
            ap,
            &s,
            TrackingMode::SensorOn,
            &p,
            &mut RngStream::new(4, 2),
        );
        assert!(
            on.count() * 2 <= off.count(),
            "on {} off {}",
            on.count(),
            off.count()
        );
        assert!(on.total_cost() <= off.total_cost());
        assert!(on.predicted_switches > 0);
    }

    #[test]
    fn cost_is_sum_of_sweeps() {
        let ap = Point::new(2.5, 2.5);
        let s = sectors(30.0);
        let log = maintain_link(
            &loop_trace(1),
            ap,
            &s,
            TrackingMode::SensorOff,
            &TrackingParams::default(),
            &mut RngStream::new(4, 2),
        );
        let one = TrackingParams::default().sweep.sweep_duration(12);
        assert_eq!(log.total_cost(), one.times(log.count() as u64));
    }

    #[test]
    fn mode_round_trip() {
        for m in TrackingMode::ALL {
            assert_eq!(m.as_str().parse::<TrackingMode>().unwrap(), m);
        }
        assert!("sensor".parse::<TrackingMode>().is_err());
    }
}
