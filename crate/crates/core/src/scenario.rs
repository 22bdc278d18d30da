//! Synthetic two-viewpoint scene: one pedestrian crossing a mmWave link.
//!
//! The link runs from the BS at the origin to the UE on the +x axis. The
//! pedestrian walks back and forth along y, keeping to the right, so the
//! lane (x) reveals the walking direction. Camera A sits behind the UE
//! looking along -x and covers the y < 0 approach; camera B looks along -y
//! from the +y side and its depth range covers the y > 0 approach.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::channel::BlockageInterval;
use crate::error::{CoreError, Result};

/// A planar point in metres.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

/// Orthographic depth camera.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CameraPose {
    pub position: Point,
    /// Unit viewing direction.
    pub axis: Point,
    /// Unit direction of increasing image column.
    pub lateral: Point,
    /// Lateral window, metres from the optical axis.
    pub lateral_range: (f64, f64),
    /// Visible depth band; beyond it the sensor returns background.
    pub near_m: f64,
    pub far_m: f64,
    /// Depth mapped to pixel value 1.0.
    pub depth_scale_m: f64,
    pub height_m: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Waypoint {
    t: f64,
    p: Point,
}

/// Piecewise-linear blocker trajectory plus link and blocker geometry.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenePath {
    waypoints: Vec<Waypoint>,
    pub bs: Point,
    pub ue: Point,
    /// Effective beam width across the link.
    pub beam_width_m: f64,
    /// Blocker footprint (x extent, y extent) and height.
    pub blocker_size: (f64, f64),
    pub blocker_height_m: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneConfig {
    pub link_length_m: f64,
    pub beam_width_m: f64,
    pub blocker_width_m: (f64, f64),
    pub speed_mps: (f64, f64),
    /// Distance of each turning point from the link.
    pub turn_m: (f64, f64),
    pub pause_s: (f64, f64),
    /// Lane x for +y and -y walking, before jitter.
    pub lanes_m: (f64, f64),
    pub lane_jitter_m: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            link_length_m: 4.0,
            beam_width_m: 0.25,
            blocker_width_m: (0.5, 0.6),
            speed_mps: (0.9, 1.3),
            turn_m: (1.5, 3.0),
            pause_s: (0.3, 1.5),
            lanes_m: (1.6, 2.4),
            lane_jitter_m: 0.1,
        }
    }
}

fn check_range(field: &'static str, r: (f64, f64)) -> Result<()> {
    if !(r.0 <= r.1 && r.0.is_finite() && r.1.is_finite()) {
        return Err(CoreError::config(field, format!("range {r:?} is not ordered")));
    }
    Ok(())
}

fn draw(rng: &mut ChaCha8Rng, r: (f64, f64)) -> f64 {
    if r.0 == r.1 {
        r.0
    } else {
        rng.random_range(r.0..r.1)
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        for (f, r) in [
            ("blocker_width_m", self.blocker_width_m),
            ("speed_mps", self.speed_mps),
            ("turn_m", self.turn_m),
            ("pause_s", self.pause_s),
        ] {
            check_range(f, r)?;
        }
        if !(self.speed_mps.0 > 0.0) {
            return Err(CoreError::config("speed_mps", "must be positive"));
        }
        if !(self.link_length_m > 0.0 && self.beam_width_m > 0.0 && self.blocker_width_m.0 > 0.0) {
            return Err(CoreError::config("scene", "lengths must be positive"));
        }
        if self.turn_m.0 <= 0.5 * (self.blocker_width_m.1 + self.beam_width_m) {
            return Err(CoreError::config("turn_m", "turning points must clear the beam"));
        }
        Ok(())
    }

    /// Random walk covering `[0, duration_s]`.
    pub fn sample_path(&self, duration_s: f64, seed: u64) -> Result<ScenePath> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let width = draw(&mut rng, self.blocker_width_m);
        let mut heading = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let lane = |h: f64, rng: &mut ChaCha8Rng| {
            let base = if h > 0.0 { self.lanes_m.0 } else { self.lanes_m.1 };
            base + draw(rng, (-self.lane_jitter_m, self.lane_jitter_m))
        };
        let mut t = 0.0;
        let mut p = Point { x: lane(heading, &mut rng), y: -heading * draw(&mut rng, self.turn_m) };
        let mut waypoints = vec![Waypoint { t, p }];
        while t <= duration_s {
            let target_y = heading * draw(&mut rng, self.turn_m);
            let speed = draw(&mut rng, self.speed_mps);
            t += (target_y - p.y).abs() / speed;
            p = Point { x: p.x, y: target_y };
            waypoints.push(Waypoint { t, p });
            // Pause at the turning point while stepping into the other lane.
            heading = -heading;
            t += draw(&mut rng, self.pause_s).max(1e-3);
            p = Point { x: lane(heading, &mut rng), y: p.y };
            waypoints.push(Waypoint { t, p });
        }
        Ok(ScenePath {
            waypoints,
            bs: Point { x: 0.0, y: 0.0 },
            ue: Point { x: self.link_length_m, y: 0.0 },
            beam_width_m: self.beam_width_m,
            blocker_size: (width, width),
            blocker_height_m: 1.7,
        })
    }
}

impl ScenePath {
    /// Straight path at constant velocity starting at `start` when `t = 0`.
    pub fn straight(start: Point, velocity: Point, duration_s: f64, blocker_width_m: f64) -> Self {
        let end = Point { x: start.x + velocity.x * duration_s, y: start.y + velocity.y * duration_s };
        Self {
            waypoints: vec![Waypoint { t: 0.0, p: start }, Waypoint { t: duration_s, p: end }],
            bs: Point { x: 0.0, y: 0.0 },
            ue: Point { x: 4.0, y: 0.0 },
            beam_width_m: 0.25,
            blocker_size: (blocker_width_m, blocker_width_m),
            blocker_height_m: 1.7,
        }
    }

    pub fn duration_s(&self) -> f64 {
        self.waypoints.last().map_or(0.0, |w| w.t)
    }

    /// Blocker centre at `t`, held at the end points outside the path.
    pub fn position(&self, t: f64) -> Point {
        let w = &self.waypoints;
        if t <= w[0].t {
            return w[0].p;
        }
        let i = w.partition_point(|wp| wp.t <= t);
        if i >= w.len() {
            return w[w.len() - 1].p;
        }
        let (a, b) = (w[i - 1], w[i]);
        let s = if b.t > a.t { (t - a.t) / (b.t - a.t) } else { 1.0 };
        Point { x: a.p.x + s * (b.p.x - a.p.x), y: a.p.y + s * (b.p.y - a.p.y) }
    }

    /// Fraction of the beam width covered by the blocker, in `[0, 1]`.
    ///
    /// The link is taken along the x axis; the blocker only occludes while
    /// its footprint lies between BS and UE.
    pub fn occlusion(&self, t: f64) -> f64 {
        let c = self.position(t);
        let (wx, wy) = self.blocker_size;
        let (x0, x1) = (self.bs.x.min(self.ue.x), self.bs.x.max(self.ue.x));
        if c.x + wx / 2.0 <= x0 || c.x - wx / 2.0 >= x1 {
            return 0.0;
        }
        let half = self.beam_width_m / 2.0;
        let lo = (c.y - wy / 2.0).max(self.bs.y - half);
        let hi = (c.y + wy / 2.0).min(self.bs.y + half);
        ((hi - lo).max(0.0) / self.beam_width_m).clamp(0.0, 1.0)
    }

    /// Time spans with nonzero occlusion, solved per linear segment.
    pub fn blockage_schedule(&self) -> Vec<BlockageInterval> {
        let reach = (self.blocker_size.1 + self.beam_width_m) / 2.0;
        let mut out: Vec<BlockageInterval> = Vec::new();
        for seg in self.waypoints.windows(2) {
            let (a, b) = (seg[0], seg[1]);
            if b.t <= a.t {
                continue;
            }
            let vy = (b.p.y - a.p.y) / (b.t - a.t);
            let (s, e) = if vy == 0.0 {
                if a.p.y.abs() < reach {
                    (a.t, b.t)
                } else {
                    continue;
                }
            } else {
                let t1 = a.t + (-reach - a.p.y) / vy;
                let t2 = a.t + (reach - a.p.y) / vy;
                (t1.min(t2).max(a.t), t1.max(t2).min(b.t))
            };
            if e <= s || self.occlusion(0.5 * (s + e)) == 0.0 {
                continue;
            }
            match out.last_mut() {
                Some(last) if (last.end_s - s).abs() < 1e-12 => last.end_s = e,
                _ => out.push(BlockageInterval { start_s: s, end_s: e }),
            }
        }
        out
    }
}

/// Default poses: camera A behind the UE, camera B on the +y side.
pub fn default_cameras(link_length_m: f64) -> [CameraPose; 2] {
    let mid = link_length_m / 2.0;
    [
        CameraPose {
            position: Point { x: link_length_m + 1.0, y: 0.0 },
            axis: Point { x: -1.0, y: 0.0 },
            lateral: Point { x: 0.0, y: 1.0 },
            lateral_range: (-3.2, -0.2),
            near_m: 0.3,
            far_m: link_length_m + 1.0,
            depth_scale_m: link_length_m + 1.0,
            height_m: 2.0,
        },
        CameraPose {
            position: Point { x: mid, y: 4.0 },
            axis: Point { x: 0.0, y: -1.0 },
            lateral: Point { x: 1.0, y: 0.0 },
            lateral_range: (-mid, mid),
            near_m: 0.3,
            far_m: 4.2,
            depth_scale_m: 5.0,
            height_m: 2.0,
        },
    ]
}

fn dot(a: Point, b: Point) -> f64 {
    a.x * b.x + a.y * b.y
}

/// Noise-free `size x size` depth render, row-major, top row first.
pub fn render_depth(scene: &ScenePath, pose: &CameraPose, t: f64, size: usize) -> Vec<f64> {
    let mut img = vec![1.0; size * size];
    let c = scene.position(t);
    let (wx, wy) = scene.blocker_size;
    let corners = [(-1.0, -1.0), (-1.0, 1.0), (1.0, -1.0), (1.0, 1.0)].map(|(sx, sy)| Point {
        x: c.x + sx * wx / 2.0 - pose.position.x,
        y: c.y + sy * wy / 2.0 - pose.position.y,
    });
    let depth = corners.iter().map(|&q| dot(q, pose.axis)).fold(f64::INFINITY, f64::min);
    if !(depth >= pose.near_m && depth <= pose.far_m) {
        return img;
    }
    let u0 = corners.iter().map(|&q| dot(q, pose.lateral)).fold(f64::INFINITY, f64::min);
    let u1 = corners.iter().map(|&q| dot(q, pose.lateral)).fold(f64::NEG_INFINITY, f64::max);
    let (lmin, lmax) = pose.lateral_range;
    let value = (depth / pose.depth_scale_m).clamp(0.0, 1.0);
    let px = (lmax - lmin) / size as f64;
    let pz = pose.height_m / size as f64;
    for row in 0..size {
        let z = pose.height_m - (row as f64 + 0.5) * pz;
        if z > scene.blocker_height_m {
            continue;
        }
        for col in 0..size {
            let u = lmin + (col as f64 + 0.5) * px;
            if u >= u0 && u <= u1 {
                img[row * size + col] = value;
            }
        }
    }
    img
}

/// Adds seeded Gaussian pixel noise and clamps to `[0, 1]`.
pub fn add_pixel_noise(img: &mut [f64], sigma: f64, rng: &mut ChaCha8Rng) -> Result<()> {
    if sigma == 0.0 {
        return Ok(());
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| CoreError::config("pixel_noise", e.to_string()))?;
    for v in img {
        *v = (*v + normal.sample(rng)).clamp(0.0, 1.0);
    }
    Ok(())
}

/// `P(k tau) = los - depth * occlusion(k tau) + noise`, for `k = 0..count`.
pub fn synth_power_trace(
    scene: &ScenePath,
    los_dbm: f64,
    depth_db: f64,
    noise_db: f64,
    count: usize,
    tau_s: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>> {
    let normal = Normal::new(0.0, noise_db).map_err(|e| CoreError::config("power_noise_db", e.to_string()))?;
    Ok((0..count)
        .map(|k| {
            let n = if noise_db > 0.0 { normal.sample(rng) } else { 0.0 };
            los_dbm - depth_db * scene.occlusion(k as f64 * tau_s) + n
        })
        .collect())
}
