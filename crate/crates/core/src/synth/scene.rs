use std::f64::consts::{PI, TAU};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::ingest::PathId;

/// Floor added before taking logs so black pixels stay finite.
pub(crate) const LOG_EPS: f64 = 1e-6;

const TARGET_WIDTH_M: f64 = 0.45;
const TARGET_HEIGHT_M: f64 = 1.7;
const CAMERA_HEIGHT_M: f64 = 0.4;
const TARGET_STRIPES: usize = 5;
const TARGET_TONES: [f64; 2] = [0.12, 0.3];
const PANORAMA_STRIPES: usize = 16;
const WALL_TONE: f64 = 0.6;
const FLOOR_TONE: f64 = 0.35;
/// Anti-aliasing samples per pixel column.
const SUBSAMPLES: usize = 4;
/// Targets closer than this along the optical axis are not drawn.
const MIN_DEPTH_M: f64 = 0.2;

pub fn preset_waypoints(path: PathId) -> Vec<[f64; 2]> {
    match path {
        PathId::P1 => vec![[2.0, 0.0], [6.0, 0.5], [9.0, 2.5], [12.0, 3.0], [16.0, 2.0]],
        PathId::P2 => vec![
            [2.0, 0.0],
            [5.0, 1.0],
            [6.0, 4.0],
            [4.0, 6.0],
            [1.0, 5.0],
            [0.0, 3.0],
        ],
        PathId::P3 => vec![
            [2.0, 0.0],
            [4.0, -1.5],
            [7.0, -1.5],
            [9.0, 1.5],
            [12.0, 1.5],
            [14.0, -1.0],
        ],
    }
}

/// Constant-speed motion along a polyline, parked at the last waypoint.
#[derive(Debug, Clone)]
pub struct Polyline {
    points: Vec<[f64; 2]>,
    cumulative: Vec<f64>,
}

impl Polyline {
    pub fn new(points: Vec<[f64; 2]>) -> Self {
        let mut cumulative = vec![0.0];
        for p in points.windows(2) {
            let seg = (p[1][0] - p[0][0]).hypot(p[1][1] - p[0][1]);
            cumulative.push(cumulative.last().unwrap() + seg);
        }
        Polyline { points, cumulative }
    }

    pub fn at(&self, s: f64) -> [f64; 2] {
        let total = *self.cumulative.last().unwrap();
        if self.points.len() == 1 || s <= 0.0 {
            return self.points[0];
        }
        if s >= total {
            return *self.points.last().unwrap();
        }
        let i = self.cumulative.partition_point(|&c| c <= s) - 1;
        let seg = self.cumulative[i + 1] - self.cumulative[i];
        let f = if seg > 0.0 {
            (s - self.cumulative[i]) / seg
        } else {
            0.0
        };
        let (a, b) = (self.points[i], self.points[i + 1]);
        [a[0] + f * (b[0] - a[0]), a[1] + f * (b[1] - a[1])]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

/// Target position in the robot frame as (range, bearing), bearing
/// counter-clockwise positive (target on the left is positive).
pub fn relative_polar(robot: &Pose, target: [f64; 2]) -> (f64, f64) {
    let dx = target[0] - robot.x;
    let dy = target[1] - robot.y;
    let (s, c) = robot.theta.sin_cos();
    let fwd = c * dx + s * dy;
    let left = -s * dx + c * dy;
    (fwd.hypot(left), left.atan2(fwd))
}

/// Pinhole view of a cylindrical wall panorama with a striped target sprite.
///
/// The image is column-separable: every row belongs to one of three
/// background bands (wall, textured panorama, floor) and is either crossed by
/// the target or not, so a frame is fully described by six column profiles.
pub struct SceneRenderer {
    width: usize,
    height: usize,
    focal: f64,
    gain: f64,
    band: (usize, usize),
    panorama: Vec<f64>,
    /// Bearing of every column subsample, counter-clockwise positive.
    sub_bearings: Vec<f64>,
    profiles: [Vec<f64>; 6],
    row_profile: Vec<u8>,
}

impl SceneRenderer {
    pub fn new(width: usize, height: usize, fov_rad: f64, gain: f64, rng: &mut ChaCha8Rng) -> Self {
        let focal = (width as f64 / 2.0) / (fov_rad / 2.0).tan();
        let panorama = (0..PANORAMA_STRIPES)
            .map(|_| rng.random_range(0.35..0.8))
            .collect();
        let sub_bearings = (0..width * SUBSAMPLES)
            .map(|i| {
                let u = (i as f64 + 0.5) / SUBSAMPLES as f64;
                -((u - width as f64 / 2.0) / focal).atan()
            })
            .collect();
        SceneRenderer {
            width,
            height,
            focal,
            gain,
            band: (height * 3 / 10, height / 2),
            panorama,
            sub_bearings,
            profiles: std::array::from_fn(|_| vec![0.0; width]),
            row_profile: vec![0; height],
        }
    }

    pub fn focal(&self) -> f64 {
        self.focal
    }

    fn panorama_at(&self, azimuth: f64) -> f64 {
        let a = azimuth.rem_euclid(TAU);
        let i = ((a / TAU) * PANORAMA_STRIPES as f64) as usize;
        self.panorama[i.min(PANORAMA_STRIPES - 1)]
    }

    /// Recomputes the frame for the given robot pose and target position.
    pub fn render(&mut self, robot: &Pose, target: [f64; 2]) {
        let (w, h) = (self.width, self.height);
        let (range, bearing) = relative_polar(robot, target);
        let depth = range * bearing.cos();
        let visible = depth > MIN_DEPTH_M;
        let (u_left, u_right, y_top, y_bottom) = if visible {
            let uc = w as f64 / 2.0 - self.focal * bearing.tan();
            let half = 0.5 * self.focal * TARGET_WIDTH_M / depth;
            let yt = h as f64 / 2.0 - self.focal * (TARGET_HEIGHT_M - CAMERA_HEIGHT_M) / depth;
            let yb = h as f64 / 2.0 + self.focal * CAMERA_HEIGHT_M / depth;
            (uc - half, uc + half, yt, yb)
        } else {
            (0.0, 0.0, 0.0, 0.0)
        };

        let inv = 1.0 / SUBSAMPLES as f64;
        for x in 0..w {
            let mut band = 0.0;
            let mut cover = 0.0;
            let mut tex = 0.0;
            for s in 0..SUBSAMPLES {
                let i = x * SUBSAMPLES + s;
                band += self.panorama_at(robot.theta + self.sub_bearings[i]);
                let u = (i as f64 + 0.5) * inv;
                if visible && u >= u_left && u < u_right {
                    let local = (u - u_left) / (u_right - u_left);
                    let stripe = ((local * TARGET_STRIPES as f64) as usize).min(TARGET_STRIPES - 1);
                    cover += 1.0;
                    tex += TARGET_TONES[stripe % 2];
                }
            }
            band *= inv;
            let bgs = [WALL_TONE, band, FLOOR_TONE];
            for (k, bg) in bgs.into_iter().enumerate() {
                let with_target = if cover > 0.0 {
                    bg * (1.0 - cover * inv) + tex * inv
                } else {
                    bg
                };
                self.profiles[k][x] = (self.gain * bg + LOG_EPS).ln();
                self.profiles[k + 3][x] = (self.gain * with_target + LOG_EPS).ln();
            }
        }
        for y in 0..h {
            let bg = if y < self.band.0 {
                0
            } else if y < self.band.1 {
                1
            } else {
                2
            };
            let yc = y as f64 + 0.5;
            let on_target = visible && yc >= y_top && yc < y_bottom;
            self.row_profile[y] = bg + if on_target { 3 } else { 0 };
        }
    }

    /// Log intensity of row `y` of the last rendered frame.
    pub fn row(&self, y: usize) -> &[f64] {
        &self.profiles[self.row_profile[y] as usize]
    }

    /// Linear intensity in `[0, 1]` at pixel `(x, y)` of the last frame.
    pub fn intensity(&self, x: usize, y: usize) -> f64 {
        (self.row(y)[x].exp() - LOG_EPS).max(0.0)
    }

    pub fn full_frame(&self) -> Vec<f64> {
        (0..self.height)
            .flat_map(|y| self.row(y).iter().copied())
            .collect()
    }
}

/// Pursuit gains and limits of the scripted expert.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExpertGains {
    pub k_p: f64,
    pub k_v: f64,
    pub v_max: f64,
    pub w_max: f64,
    pub follow_distance: f64,
}

impl Default for ExpertGains {
    fn default() -> Self {
        ExpertGains {
            k_p: 1.5,
            k_v: 0.8,
            v_max: 0.8,
            w_max: 1.5,
            follow_distance: 1.5,
        }
    }
}

/// Bearing error is positive when the target sits right of the heading.
pub fn bearing_error(robot: &Pose, target: [f64; 2]) -> f64 {
    -relative_polar(robot, target).1
}

/// `w = -k_p * bearing_error`, `v = k_v * (range - follow_distance)`, both
/// clamped to the platform limits.
pub fn expert_command(g: &ExpertGains, robot: &Pose, target: [f64; 2]) -> (f64, f64) {
    let (range, bearing) = relative_polar(robot, target);
    let e = -bearing;
    let w = (-g.k_p * e).clamp(-g.w_max, g.w_max);
    let v = (g.k_v * (range - g.follow_distance)).clamp(0.0, g.v_max);
    (v, w)
}

/// Differential-drive base whose twist follows the command through a
/// first-order lag with time constant `tau`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LagPlant {
    pub pose: Pose,
    pub v: f64,
    pub w: f64,
    pub tau: f64,
}

impl LagPlant {
    pub fn step(&mut self, cmd: (f64, f64), dt: f64) {
        let k = if self.tau > 0.0 {
            1.0 - (-dt / self.tau).exp()
        } else {
            1.0
        };
        self.v += k * (cmd.0 - self.v);
        self.w += k * (cmd.1 - self.w);
        let mid = self.pose.theta + 0.5 * self.w * dt;
        self.pose.x += self.v * mid.cos() * dt;
        self.pose.y += self.v * mid.sin() * dt;
        self.pose.theta = wrap_angle(self.pose.theta + self.w * dt);
    }
}

pub fn wrap_angle(a: f64) -> f64 {
    (a + PI).rem_euclid(TAU) - PI
}
