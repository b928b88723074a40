//! Piecewise-linear device motion built from waypoint routes.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::floorplan::Point;
use crate::propagation::wrap_deg;
use crate::sim::{RngStream, SimTime};

#[derive(Debug, Error, PartialEq)]
pub enum MobilityError {
    #[error("positions coincide; bearing undefined")]
    Coincident,
    #[error("speed must be positive, got {0}")]
    BadSpeed(f64),
    #[error("route needs at least one waypoint")]
    EmptyRoute,
    #[error("dwell must be non-negative")]
    NegativeDwell,
}

/// Azimuth of `device` seen from `ap`: 0 along +x, 90 along +y, in `[0, 360)`.
pub fn bearing_from(ap: Point, device: Point) -> Result<f64, MobilityError> {
    let dx = device.x - ap.x;
    let dy = device.y - ap.y;
    if dx == 0.0 && dy == 0.0 {
        return Err(MobilityError::Coincident);
    }
    Ok(wrap_deg(dy.atan2(dx).to_degrees()))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub position: Point,
    #[serde(default)]
    pub dwell_s: f64,
}

impl Waypoint {
    pub fn at(x: f64, y: f64) -> Self {
        Waypoint {
            position: Point::new(x, y),
            dwell_s: 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceSample {
    pub t: SimTime,
    pub position: Point,
    /// Bearing of the segment that starts at this sample.
    pub heading_deg: f64,
}

/// Keyframes of a piecewise-linear trajectory. Between two keyframes the
/// device moves in a straight line at constant speed.
#[derive(Clone, Debug, PartialEq)]
pub struct MobilityTrace {
    samples: Vec<TraceSample>,
    max_speed: f64,
}

impl MobilityTrace {
    pub fn from_waypoints(waypoints: &[Waypoint], speed_mps: f64) -> Result<Self, MobilityError> {
        if !(speed_mps > 0.0 && speed_mps.is_finite()) {
            return Err(MobilityError::BadSpeed(speed_mps));
        }
        let first = waypoints.first().ok_or(MobilityError::EmptyRoute)?;
        if waypoints.iter().any(|w| w.dwell_s < 0.0) {
            return Err(MobilityError::NegativeDwell);
        }
        let initial_heading = waypoints
            .iter()
            .skip(1)
            .find_map(|w| bearing_from(first.position, w.position).ok())
            .unwrap_or(0.0);
        let mut samples = Vec::new();
        let mut t_ns: u64 = 0;
        let mut heading = initial_heading;
        let mut pos = first.position;
        for (i, wp) in waypoints.iter().enumerate() {
            if i > 0 {
                let d = pos.distance(wp.position);
                if d > 0.0 {
                    heading = bearing_from(pos, wp.position).expect("distinct points");
                    samples.push(TraceSample {
                        t: SimTime::from_nanos(t_ns),
                        position: pos,
                        heading_deg: heading,
                    });
                    t_ns += (d / speed_mps * 1e9).round().max(1.0) as u64;
                    pos = wp.position;
                }
            }
            if wp.dwell_s > 0.0 {
                samples.push(TraceSample {
                    t: SimTime::from_nanos(t_ns),
                    position: pos,
                    heading_deg: heading,
                });
                t_ns += (wp.dwell_s * 1e9).round().max(1.0) as u64;
            }
        }
        samples.push(TraceSample {
            t: SimTime::from_nanos(t_ns),
            position: pos,
            heading_deg: heading,
        });
        Ok(MobilityTrace {
            samples,
            max_speed: speed_mps,
        })
    }

    pub fn stationary(p: Point, duration: SimTime) -> Self {
        let duration = duration.max(SimTime::from_nanos(1));
        MobilityTrace {
            samples: vec![
                TraceSample {
                    t: SimTime::ZERO,
                    position: p,
                    heading_deg: 0.0,
                },
                TraceSample {
                    t: duration,
                    position: p,
                    heading_deg: 0.0,
                },
            ],
            max_speed: 0.0,
        }
    }

    pub fn samples(&self) -> &[TraceSample] {
        &self.samples
    }

    pub fn max_speed(&self) -> f64 {
        self.max_speed
    }

    pub fn start(&self) -> SimTime {
        self.samples[0].t
    }

    pub fn end(&self) -> SimTime {
        self.samples[self.samples.len() - 1].t
    }

    fn segment_index(&self, t: SimTime) -> usize {
        match self.samples.binary_search_by(|s| s.t.cmp(&t)) {
            Ok(i) => i.min(self.samples.len() - 1),
            Err(0) => 0,
            Err(i) => i - 1,
        }
    }

    /// Position and heading at `t`; times outside the span clamp to the ends.
    pub fn position_at(&self, t: SimTime) -> (Point, f64) {
        let t = t.clamp(self.start(), self.end());
        let i = self.segment_index(t);
        let a = self.samples[i];
        if i + 1 >= self.samples.len() {
            return (a.position, a.heading_deg);
        }
        let b = self.samples[i + 1];
        let span = (b.t - a.t).as_nanos() as f64;
        let f = (t - a.t).as_nanos() as f64 / span;
        let p = Point::new(
            a.position.x + f * (b.position.x - a.position.x),
            a.position.y + f * (b.position.y - a.position.y),
        );
        (p, a.heading_deg)
    }

    /// Speed of the segment active at `t` (zero while dwelling).
    pub fn speed_at(&self, t: SimTime) -> f64 {
        let t = t.clamp(self.start(), self.end());
        let i = self.segment_index(t);
        if i + 1 >= self.samples.len() {
            return 0.0;
        }
        let a = self.samples[i];
        let b = self.samples[i + 1];
        a.position.distance(b.position) / (b.t - a.t).as_secs_f64()
    }

    /// Straight segments `(from, to)` in travel order, dwells omitted.
    pub fn segments(&self) -> Vec<(Point, Point)> {
        self.samples
            .windows(2)
            .filter(|w| w[0].position != w[1].position)
            .map(|w| (w[0].position, w[1].position))
            .collect()
    }
}

/// Named route shapes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RouteSpec {
    Stationary {
        at: Point,
        duration_s: f64,
    },
    Straight {
        from: Point,
        to: Point,
    },
    LShape {
        from: Point,
        corner: Point,
        to: Point,
    },
    RectangleLoop {
        min: Point,
        max: Point,
        loops: u32,
    },
    RandomWaypoint {
        min: Point,
        max: Point,
        waypoints: u32,
    },
    Waypoints {
        points: Vec<Waypoint>,
    },
}

impl RouteSpec {
    pub fn waypoints(&self, rng: &mut RngStream) -> Vec<Waypoint> {
        match self {
            RouteSpec::Stationary { at, duration_s } => vec![Waypoint {
                position: *at,
                dwell_s: *duration_s,
            }],
            RouteSpec::Straight { from, to } => {
                vec![Waypoint::at(from.x, from.y), Waypoint::at(to.x, to.y)]
            }
            RouteSpec::LShape { from, corner, to } => vec![
                Waypoint::at(from.x, from.y),
                Waypoint::at(corner.x, corner.y),
                Waypoint::at(to.x, to.y),
            ],
            RouteSpec::RectangleLoop { min, max, loops } => {
                let corners = [
                    Waypoint::at(min.x, min.y),
                    Waypoint::at(max.x, min.y),
                    Waypoint::at(max.x, max.y),
                    Waypoint::at(min.x, max.y),
                ];
                let mut out = vec![corners[0]];
                for _ in 0..(*loops).max(1) {
                    out.extend_from_slice(&corners[1..]);
                    out.push(corners[0]);
                }
                out
            }
            RouteSpec::RandomWaypoint {
                min,
                max,
                waypoints,
            } => (0..(*waypoints).max(1))
                .map(|_| Waypoint::at(rng.uniform(min.x, max.x), rng.uniform(min.y, max.y)))
                .collect(),
            RouteSpec::Waypoints { points } => points.clone(),
        }
    }

    pub fn build(
        &self,
        speed_mps: f64,
        rng: &mut RngStream,
    ) -> Result<MobilityTrace, MobilityError> {
        if let RouteSpec::Stationary { at, duration_s } = self {
            return Ok(MobilityTrace::stationary(
                *at,
                SimTime::from_secs_f64(*duration_s),
            ));
        }
        MobilityTrace::from_waypoints(&self.waypoints(rng), speed_mps)
    }
}
