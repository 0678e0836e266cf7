use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn from_angle(theta: f64) -> Self {
        Self::new(theta.cos(), theta.sin())
    }

    pub fn dot(self, o: Self) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn add(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y)
    }

    pub fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y)
    }

    pub fn scale(self, s: f64) -> Self {
        Self::new(self.x * s, self.y * s)
    }

    /// Left-hand normal of a direction.
    pub fn perp(self) -> Self {
        Self::new(-self.y, self.x)
    }
}

pub fn wrap_angle(a: f64) -> f64 {
    let t = std::f64::consts::TAU;
    let r = (a + std::f64::consts::PI).rem_euclid(t) - std::f64::consts::PI;
    if r <= -std::f64::consts::PI {
        r + t
    } else {
        r
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose {
    pub position: Vec2,
    pub heading: f64,
}

impl Pose {
    pub const fn new(x: f64, y: f64, heading: f64) -> Self {
        Self {
            position: Vec2::new(x, y),
            heading,
        }
    }
}

/// Rotation by `rotation` followed by translation by `translation`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RigidTransform {
    pub rotation: f64,
    pub translation: Vec2,
}

impl RigidTransform {
    pub fn apply(&self, p: Vec2) -> Vec2 {
        let (s, c) = self.rotation.sin_cos();
        Vec2::new(c * p.x - s * p.y, s * p.x + c * p.y).add(self.translation)
    }

    pub fn apply_pose(&self, p: Pose) -> Pose {
        Pose {
            position: self.apply(p.position),
            heading: wrap_angle(p.heading + self.rotation),
        }
    }

    pub fn apply_box(&self, b: OrientedBox) -> OrientedBox {
        OrientedBox {
            center: self.apply(b.center),
            heading: wrap_angle(b.heading + self.rotation),
            ..b
        }
    }
}

/// Rectangle with `length` along its heading and `width` across it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrientedBox {
    pub center: Vec2,
    pub heading: f64,
    pub length: f64,
    pub width: f64,
}

impl OrientedBox {
    pub fn new(center: Vec2, heading: f64, length: f64, width: f64) -> Self {
        Self {
            center,
            heading,
            length,
            width,
        }
    }

    pub fn at_pose(pose: Pose, length: f64, width: f64) -> Self {
        Self::new(pose.position, pose.heading, length, width)
    }

    /// Coordinates of `p` along (`.x`) and across (`.y`) the box axes.
    pub fn local(&self, p: Vec2) -> Vec2 {
        let d = p.sub(self.center);
        let ax = Vec2::from_angle(self.heading);
        Vec2::new(d.dot(ax), d.dot(ax.perp()))
    }

    pub fn contains(&self, p: Vec2) -> bool {
        let l = self.local(p);
        l.x.abs() <= self.length / 2.0 && l.y.abs() <= self.width / 2.0
    }

    /// Euclidean distance from `p` to the box (zero inside).
    pub fn distance(&self, p: Vec2) -> f64 {
        let l = self.local(p);
        let dx = (l.x.abs() - self.length / 2.0).max(0.0);
        let dy = (l.y.abs() - self.width / 2.0).max(0.0);
        dx.hypot(dy)
    }

    pub fn corners(&self) -> [Vec2; 4] {
        let ax = Vec2::from_angle(self.heading).scale(self.length / 2.0);
        let ay = Vec2::from_angle(self.heading).perp().scale(self.width / 2.0);
        [
            self.center.add(ax).add(ay),
            self.center.add(ax).sub(ay),
            self.center.sub(ax).sub(ay),
            self.center.sub(ax).add(ay),
        ]
    }

    /// Separating-axis overlap test.
    pub fn overlaps(&self, other: &OrientedBox) -> bool {
        let axes = [
            Vec2::from_angle(self.heading),
            Vec2::from_angle(self.heading).perp(),
            Vec2::from_angle(other.heading),
            Vec2::from_angle(other.heading).perp(),
        ];
        let (ca, cb) = (self.corners(), other.corners());
        axes.iter().all(|ax| {
            let proj = |cs: &[Vec2; 4]| {
                cs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), c| {
                    let v = c.dot(*ax);
                    (lo.min(v), hi.max(v))
                })
            };
            let (a0, a1) = proj(&ca);
            let (b0, b1) = proj(&cb);
            a1 >= b0 && b1 >= a0
        })
    }
}

/// Piecewise-linear curve parameterized by arclength from its first point.
#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct Polyline {
    pub points: Vec<Vec2>,
}

impl Polyline {
    pub fn new(points: Vec<Vec2>) -> Self {
        Self { points }
    }

    pub fn length(&self) -> f64 {
        self.points.windows(2).map(|w| w[1].sub(w[0]).norm()).sum()
    }

    /// Point and tangent heading at arclength `s`, clamped to the ends.
    pub fn sample(&self, s: f64) -> Pose {
        match self.points.len() {
            0 => return Pose::default(),
            1 => return Pose { position: self.points[0], heading: 0.0 },
            _ => {}
        }
        let mut remaining = s.max(0.0);
        let n = self.points.len();
        for (i, w) in self.points.windows(2).enumerate() {
            let d = w[1].sub(w[0]);
            let len = d.norm();
            if remaining <= len || i == n - 2 {
                let t = if len > 0.0 { (remaining / len).min(1.0) } else { 0.0 };
                return Pose {
                    position: w[0].add(d.scale(t)),
                    heading: d.y.atan2(d.x),
                };
            }
            remaining -= len;
        }
        unreachable!()
    }

    /// Minimum distance from `p` to the curve.
    pub fn distance(&self, p: Vec2) -> f64 {
        match self.points.len() {
            0 => f64::INFINITY,
            1 => p.sub(self.points[0]).norm(),
            _ => self
                .points
                .windows(2)
                .map(|w| segment_distance(p, w[0], w[1]))
                .fold(f64::INFINITY, f64::min),
        }
    }

    /// Arclength of the closest point and signed lateral offset (positive to
    /// the left of the direction of travel).
    pub fn project(&self, p: Vec2) -> (f64, f64) {
        let mut best = (f64::INFINITY, 0.0, 0.0);
        let mut acc = 0.0;
        for w in self.points.windows(2) {
            let ab = w[1].sub(w[0]);
            let len = ab.norm();
            if len == 0.0 {
                continue;
            }
            let t = (p.sub(w[0]).dot(ab) / (len * len)).clamp(0.0, 1.0);
            let foot = w[0].add(ab.scale(t));
            let d = p.sub(foot).norm();
            if d < best.0 {
                let side = ab.scale(1.0 / len).perp().dot(p.sub(foot));
                best = (d, acc + t * len, if side < 0.0 { -d } else { d });
            }
            acc += len;
        }
        (best.1, best.2)
    }

    /// Sub-curve between arclengths `s0 < s1`.
    pub fn slice(&self, s0: f64, s1: f64, step: f64) -> Polyline {
        let mut pts = Vec::new();
        let mut s = s0;
        while s < s1 {
            pts.push(self.sample(s).position);
            s += step;
        }
        pts.push(self.sample(s1).position);
        Polyline::new(pts)
    }

    pub fn map(&self, f: impl Fn(Vec2) -> Vec2) -> Polyline {
        Polyline::new(self.points.iter().map(|&p| f(p)).collect())
    }
}

pub fn segment_distance(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let ab = b.sub(a);
    let len2 = ab.dot(ab);
    let t = if len2 > 0.0 { (p.sub(a).dot(ab) / len2).clamp(0.0, 1.0) } else { 0.0 };
    p.sub(a.add(ab.scale(t))).norm()
}
