//! Rectangular rooms and straight wall segments.

use serde::{Deserialize, Serialize};

/// Serialized as `[x, y]` in metres.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

impl From<[f64; 2]> for Point {
    fn from(p: [f64; 2]) -> Self {
        Point::new(p[0], p[1])
    }
}

impl From<Point> for [f64; 2] {
    fn from(p: Point) -> Self {
        [p.x, p.y]
    }
}

/// Axis-aligned room `[x0, x1) x [y0, y1)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Room {
    pub name: String,
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl Room {
    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.min[0] && p.x < self.max[0] && p.y >= self.min[1] && p.y < self.max[1]
    }

    /// Inclusive on all edges; used for validation of placements.
    pub fn contains_closed(&self, p: Point) -> bool {
        p.x >= self.min[0] && p.x <= self.max[0] && p.y >= self.min[1] && p.y <= self.max[1]
    }

    pub fn center(&self) -> Point {
        Point::new(
            (self.min[0] + self.max[0]) / 2.0,
            (self.min[1] + self.max[1]) / 2.0,
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Wall {
    pub from: [f64; 2],
    pub to: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FloorPlan {
    pub rooms: Vec<Room>,
    pub walls: Vec<Wall>,
}

impl FloorPlan {
    /// Four 6 m x 5 m rooms in a 2x2 grid separated by two interior walls.
    pub fn four_rooms() -> Self {
        let rooms = vec![
            Room {
                name: "A".into(),
                min: [0.0, 0.0],
                max: [6.0, 5.0],
            },
            Room {
                name: "B".into(),
                min: [6.0, 0.0],
                max: [12.0, 5.0],
            },
            Room {
                name: "C".into(),
                min: [6.0, 5.0],
                max: [12.0, 10.0],
            },
            Room {
                name: "D".into(),
                min: [0.0, 5.0],
                max: [6.0, 10.0],
            },
        ];
        let walls = vec![
            Wall {
                from: [6.0, 0.0],
                to: [6.0, 10.0],
            },
            Wall {
                from: [0.0, 5.0],
                to: [12.0, 5.0],
            },
        ];
        FloorPlan { rooms, walls }
    }

    pub fn room_index(&self, name: &str) -> Option<usize> {
        self.rooms.iter().position(|r| r.name == name)
    }

    pub fn room_of(&self, p: Point) -> Option<usize> {
        self.rooms.iter().position(|r| r.contains(p)).or_else(|| {
            // points on the outer max edges
            self.rooms.iter().position(|r| r.contains_closed(p))
        })
    }

    pub fn bounds(&self) -> (Point, Point) {
        let mut lo = Point::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for r in &self.rooms {
            lo.x = lo.x.min(r.min[0]);
            lo.y = lo.y.min(r.min[1]);
            hi.x = hi.x.max(r.max[0]);
            hi.y = hi.y.max(r.max[1]);
        }
        (lo, hi)
    }

    /// Number of wall segments properly crossed by the segment `a`-`b`.
    /// Touching a wall at an endpoint does not count.
    pub fn walls_crossed(&self, a: Point, b: Point) -> u32 {
        self.walls
            .iter()
            .filter(|w| segments_cross(a, b, w.from.into(), w.to.into()))
            .count() as u32
    }
}

fn orient(a: Point, b: Point, c: Point) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

fn segments_cross(p1: Point, p2: Point, q1: Point, q2: Point) -> bool {
    const EPS: f64 = 1e-12;
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    ((d1 > EPS && d2 < -EPS) || (d1 < -EPS && d2 > EPS))
        && ((d3 > EPS && d4 < -EPS) || (d3 < -EPS && d4 > EPS))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wall_counting() {
        let plan = FloorPlan::four_rooms();
        let a = Point::new(3.0, 2.5);
        assert_eq!(plan.walls_crossed(a, Point::new(5.0, 4.0)), 0);
        assert_eq!(plan.walls_crossed(a, Point::new(9.0, 2.5)), 1);
        assert_eq!(plan.walls_crossed(a, Point::new(9.0, 7.5)), 2);
        assert_eq!(plan.walls_crossed(Point::new(9.0, 7.5), a), 2);
    }

    #[test]
    fn room_lookup() {
        let plan = FloorPlan::four_rooms();
        assert_eq!(plan.room_of(Point::new(1.0, 1.0)), Some(0));
        assert_eq!(plan.room_of(Point::new(7.0, 1.0)), Some(1));
        assert_eq!(plan.room_of(Point::new(7.0, 6.0)), Some(2));
        assert_eq!(plan.room_of(Point::new(1.0, 6.0)), Some(3));
        assert_eq!(plan.room_of(Point::new(12.0, 10.0)), Some(2));
        assert_eq!(plan.room_of(Point::new(20.0, 1.0)), None);
    }
}
