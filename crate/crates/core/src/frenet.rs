//! Straight lane-aligned reference frame.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn sub(self, other: Self) -> Self {
        Self::new(self.x - other.x, self.y - other.y)
    }

    pub fn add(self, other: Self) -> Self {
        Self::new(self.x + other.x, self.y + other.y)
    }

    pub fn scale(self, k: f64) -> Self {
        Self::new(self.x * k, self.y * k)
    }

    pub fn dot(self, other: Self) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn cross(self, other: Self) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, other: Self) -> f64 {
        self.sub(other).norm()
    }
}

/// Centre line of the destination lane. `s` runs along `heading` from
/// `origin`, `d` is positive to the left.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceLine {
    origin: Point2,
    heading: f64,
    lane_width: f64,
}

impl ReferenceLine {
    pub fn new(origin: Point2, heading: f64, lane_width: f64) -> Result<Self> {
        if !(lane_width.is_finite() && lane_width > 0.0) {
            return Err(Error::LaneWidth(lane_width));
        }
        Ok(Self { origin, heading, lane_width })
    }

    pub fn origin(&self) -> Point2 {
        self.origin
    }

    pub fn heading(&self) -> f64 {
        self.heading
    }

    pub fn lane_width(&self) -> f64 {
        self.lane_width
    }

    pub fn to_cartesian(&self, s: f64, d: f64) -> Point2 {
        frenet_to_cartesian(self, s, d)
    }

    pub fn to_frenet(&self, p: Point2) -> (f64, f64) {
        let (sin, cos) = self.heading.sin_cos();
        let rel = p.sub(self.origin);
        (rel.x * cos + rel.y * sin, -rel.x * sin + rel.y * cos)
    }
}

pub fn frenet_to_cartesian(reference: &ReferenceLine, s: f64, d: f64) -> Point2 {
    let (sin, cos) = reference.heading.sin_cos();
    Point2::new(
        reference.origin.x + s * cos - d * sin,
        reference.origin.y + s * sin + d * cos,
    )
}
