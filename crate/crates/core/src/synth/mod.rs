//! Deterministic synthetic person-following episodes.
//!
//! A differential-drive robot pursues a target walking along a waypoint path.
//! The robot's camera view is rendered at a sub-frame step and fed to a
//! contrast-threshold event model; trigger markers, RGB frame stamps on a
//! drifting clock, teleop commands and noisy odometry are emitted alongside,
//! in exactly the on-disk formats the ingest layer reads.

mod emulator;
mod scene;

use std::fs::{self, File};
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

pub use self::emulator::ContrastEmulator;
pub use self::scene::{
    bearing_error, expert_command, preset_waypoints, relative_polar, ExpertGains, LagPlant,
    Polyline, Pose, SceneRenderer,
};

use crate::event::{Event, EventStream, FrameRecord, Micros, Polarity, TriggerEdge};
use crate::geometry::{write_homography, Homography, ImageBuffer, ImageError, Point2};
use crate::ingest::{
    write_events, write_frames, write_twists, EpisodeMeta, Lighting, PathId, TableError,
    TwistSample, TwistSource, EVENTS_FILE, FRAMES_FILE, META_FILE, TWISTS_CMD_FILE,
    TWISTS_ODOM_FILE,
};

pub const GROUND_TRUTH_FILE: &str = "ground_truth.csv";
pub const GROUND_TRUTH_HEADER: [&str; 4] = ["frame", "bearing_rad", "expert_v", "expert_w"];
pub const SCENE_FILE: &str = "scene.json";
pub const HOMOGRAPHY_FILE: &str = "homography.json";
pub const RGB_DIR: &str = "rgb";

const DYNAMICS_STEP_US: Micros = 1_000;

// Independent random streams, so enabling one feature never perturbs another.
const STREAM_SCENE: u64 = 0;
const STREAM_SHOT_NOISE: u64 = 1;
const STREAM_ODOMETRY: u64 = 2;
const STREAM_CLOCK: u64 = 3;
const STREAM_RGB: u64 = 4;

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("invalid scene config: {0}")]
    ConfigInvalid(String),
    #[error("scene config: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Table(#[from] TableError),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error("ground truth line {line}: {reason}")]
    GroundTruth { line: u64, reason: String },
}

/// Relation between the event clock and the RGB camera clock:
/// `t_rgb = alpha * t_evt + beta + N(0, jitter^2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClockConfig {
    pub alpha: f64,
    pub beta_us: f64,
    pub jitter_us: f64,
}

impl Default for ClockConfig {
    fn default() -> Self {
        ClockConfig {
            alpha: 1.0,
            beta_us: 0.0,
            jitter_us: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RgbConfig {
    pub enabled: bool,
    pub width: usize,
    pub height: usize,
}

impl Default for RgbConfig {
    fn default() -> Self {
        RgbConfig {
            enabled: false,
            width: 640,
            height: 360,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneConfig {
    pub seed: u64,
    pub duration_s: f64,
    pub frame_rate_hz: f64,
    pub sensor_width: u16,
    pub sensor_height: u16,
    pub fov_deg: f64,
    /// Simulation steps per frame interval.
    pub substeps: u32,
    pub path: PathId,
    /// Overrides the preset curve for `path` when present.
    pub waypoints: Option<Vec<[f64; 2]>>,
    pub target_speed: f64,
    pub contrast_threshold: f64,
    pub lighting: Lighting,
    /// Scene intensity multiplier under low lighting.
    pub low_light_gain: f64,
    /// Background-activity events per second under low lighting.
    pub low_light_noise_rate_hz: f64,
    pub cmd_rate_hz: f64,
    pub odom_rate_hz: f64,
    /// Odometry noise standard deviations `(sigma_v, sigma_w)`.
    pub odom_noise_sigma: [f64; 2],
    /// First-order lag time constant of the base, seconds.
    pub plant_tau_s: f64,
    pub expert: ExpertGains,
    pub clock: ClockConfig,
    pub rgb: RgbConfig,
    pub map_id: String,
    pub subject_id: String,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            seed: 0,
            duration_s: 10.0,
            frame_rate_hz: 30.0,
            sensor_width: 1280,
            sensor_height: 720,
            fov_deg: 90.0,
            substeps: 4,
            path: PathId::P1,
            waypoints: None,
            target_speed: 0.5,
            contrast_threshold: 0.2,
            lighting: Lighting::Normal,
            low_light_gain: 0.1,
            low_light_noise_rate_hz: 20_000.0,
            cmd_rate_hz: 20.0,
            odom_rate_hz: 50.0,
            odom_noise_sigma: [0.01, 0.02],
            plant_tau_s: 0.15,
            expert: ExpertGains::default(),
            clock: ClockConfig::default(),
            rgb: RgbConfig::default(),
            map_id: "synthetic".into(),
            subject_id: "s00".into(),
        }
    }
}

fn require(ok: bool, what: &str) -> Result<(), SynthError> {
    if ok {
        Ok(())
    } else {
        Err(SynthError::ConfigInvalid(what.to_string()))
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let finite_pos = |v: f64| v.is_finite() && v > 0.0;
        let finite_nonneg = |v: f64| v.is_finite() && v >= 0.0;
        require(finite_pos(self.duration_s), "duration_s must be positive")?;
        require(
            finite_pos(self.frame_rate_hz),
            "frame_rate_hz must be positive",
        )?;
        require(
            self.frame_count() >= 1,
            "episode must span at least one frame",
        )?;
        require(
            self.duration_s <= 24.0 * 3600.0,
            "duration_s is unreasonably long",
        )?;
        require(
            1e6 / self.frame_rate_hz >= 2.0 * self.substeps.max(1) as f64,
            "frame interval too short for the simulation step",
        )?;
        require(
            self.sensor_width > 0 && self.sensor_height > 0,
            "sensor must be non-empty",
        )?;
        require(
            self.fov_deg > 1.0 && self.fov_deg < 170.0,
            "fov_deg must lie in (1, 170)",
        )?;
        require(self.substeps >= 1, "substeps must be at least 1")?;
        require(
            finite_pos(self.contrast_threshold),
            "contrast_threshold must be positive",
        )?;
        require(
            finite_nonneg(self.target_speed),
            "target_speed must be non-negative",
        )?;
        require(
            self.low_light_gain.is_finite()
                && self.low_light_gain > 0.0
                && self.low_light_gain <= 1.0,
            "low_light_gain must lie in (0, 1]",
        )?;
        require(
            finite_nonneg(self.low_light_noise_rate_hz),
            "noise rate must be non-negative",
        )?;
        require(
            finite_pos(self.cmd_rate_hz) && self.cmd_rate_hz <= 1000.0,
            "cmd_rate_hz must lie in (0, 1000]",
        )?;
        require(
            finite_pos(self.odom_rate_hz) && self.odom_rate_hz <= 1000.0,
            "odom_rate_hz must lie in (0, 1000]",
        )?;
        require(
            self.odom_noise_sigma.iter().all(|&s| finite_nonneg(s)),
            "odometry noise must be non-negative",
        )?;
        require(
            finite_nonneg(self.plant_tau_s),
            "plant_tau_s must be non-negative",
        )?;
        let g = &self.expert;
        require(
            [g.k_p, g.k_v, g.v_max, g.w_max, g.follow_distance]
                .iter()
                .all(|&v| finite_nonneg(v)),
            "expert gains must be non-negative",
        )?;
        require(
            g.v_max <= 2.0 && g.w_max <= 6.0,
            "expert limits exceed platform bounds",
        )?;
        let c = &self.clock;
        require(
            c.alpha > 0.999 && c.alpha < 1.001,
            "clock.alpha must lie in (0.999, 1.001)",
        )?;
        require(
            c.beta_us.is_finite() && c.beta_us.abs() <= 1e9,
            "clock.beta_us out of range",
        )?;
        require(
            finite_nonneg(c.jitter_us),
            "clock.jitter_us must be non-negative",
        )?;
        if self.rgb.enabled {
            require(
                (1..=8192).contains(&self.rgb.width) && (1..=8192).contains(&self.rgb.height),
                "rgb dimensions must lie in [1, 8192]",
            )?;
        }
        if let Some(w) = &self.waypoints {
            require(!w.is_empty(), "waypoints must not be empty")?;
            require(
                w.iter().flatten().all(|v| v.is_finite()),
                "waypoints must be finite",
            )?;
        }
        Ok(())
    }

    pub fn frame_count(&self) -> u32 {
        let n = (self.duration_s * self.frame_rate_hz + 1e-9).floor();
        if n.is_finite() && n >= 0.0 {
            n.min(u32::MAX as f64) as u32
        } else {
            0
        }
    }

    pub fn frame_period_us(&self) -> f64 {
        1e6 / self.frame_rate_hz
    }

    pub fn waypoints(&self) -> Vec<[f64; 2]> {
        self.waypoints
            .clone()
            .unwrap_or_else(|| preset_waypoints(self.path))
    }

    pub fn meta(&self) -> EpisodeMeta {
        EpisodeMeta {
            map_id: self.map_id.clone(),
            path: self.path,
            lighting: self.lighting,
            subject_id: self.subject_id.clone(),
        }
    }

    /// RGB-to-event-plane homography of the simulated beam-splitter rig: a
    /// pure scale with pixel centers aligned.
    pub fn rgb_homography(&self) -> Homography {
        let sx = self.sensor_width as f64 / self.rgb.width as f64;
        let sy = self.sensor_height as f64 / self.rgb.height as f64;
        Homography {
            h: [
                [sx, 0.0, (sx - 1.0) / 2.0],
                [0.0, sy, (sy - 1.0) / 2.0],
                [0.0, 0.0, 1.0],
            ],
        }
    }
}

/// Parses and validates a scene config.
pub fn parse_scene_config(src: impl Read) -> Result<SceneConfig, SynthError> {
    let cfg: SceneConfig = serde_json::from_reader(src)?;
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub frame: u32,
    /// Target bearing relative to the heading, positive to the right.
    pub bearing_rad: f64,
    /// Command the expert has in effect at the frame time.
    pub expert_v: f64,
    pub expert_w: f64,
}

#[derive(Debug, Clone)]
pub struct SyntheticEpisode {
    pub events: EventStream,
    /// RGB-clock frame stamps.
    pub frames: Vec<FrameRecord>,
    /// Frame times on the event clock, before clock distortion.
    pub frame_times_evt: Vec<Micros>,
    pub twists_cmd: Vec<TwistSample>,
    pub twists_odom: Vec<TwistSample>,
    pub ground_truth: Vec<GroundTruth>,
    pub meta: EpisodeMeta,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthSummary {
    pub cd_events: usize,
    pub triggers: usize,
    pub frames: usize,
    pub cmd_samples: usize,
    pub odom_samples: usize,
}

impl SyntheticEpisode {
    pub fn summary(&self) -> SynthSummary {
        SynthSummary {
            cd_events: self.events.cd_count(),
            triggers: self.events.trigger_count(),
            frames: self.frames.len(),
            cmd_samples: self.twists_cmd.len(),
            odom_samples: self.twists_odom.len(),
        }
    }
}

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// Regular schedule `k * period`, rounded to whole microseconds.
struct Schedule {
    period: f64,
    k: u64,
}

impl Schedule {
    fn new(rate_hz: f64) -> Self {
        Schedule {
            period: 1e6 / rate_hz,
            k: 0,
        }
    }

    fn due(&mut self, t: Micros) -> bool {
        if (self.k as f64 * self.period).round() as Micros <= t {
            while (self.k as f64 * self.period).round() as Micros <= t {
                self.k += 1;
            }
            true
        } else {
            false
        }
    }
}

fn render_rgb(
    renderer: &SceneRenderer,
    cfg: &SceneConfig,
    h: &Homography,
    noise: Option<(&mut ChaCha8Rng, Normal<f64>)>,
) -> ImageBuffer {
    let (rw, rh) = (cfg.rgb.width, cfg.rgb.height);
    let (w, hgt) = (cfg.sensor_width as usize, cfg.sensor_height as usize);
    let mut px = Vec::with_capacity(rw * rh * 3);
    let mut noise = noise;
    for v in 0..rh {
        for u in 0..rw {
            let p = h.apply(Point2::new(u as f64, v as f64));
            let x = (p.x.round().max(0.0) as usize).min(w - 1);
            let y = (p.y.round().max(0.0) as usize).min(hgt - 1);
            let mut val = 255.0 * renderer.intensity(x, y);
            if let Some((r, n)) = noise.as_mut() {
                val += n.sample(*r);
            }
            let g = val.round().clamp(0.0, 255.0) as u8;
            px.extend_from_slice(&[g, g, g]);
        }
    }
    ImageBuffer::new(rw, rh, 3, px).expect("buffer sized for rgb frame")
}

/// Runs the simulation. When RGB output is enabled, each rendered frame is
/// handed to `rgb_sink` together with its 1-based index.
pub fn generate_episode_with(
    cfg: &SceneConfig,
    rgb_sink: &mut dyn FnMut(u32, &ImageBuffer) -> Result<(), SynthError>,
) -> Result<SyntheticEpisode, SynthError> {
    cfg.validate()?;
    let (w, h) = (cfg.sensor_width as usize, cfg.sensor_height as usize);
    let n_frames = cfg.frame_count();
    let substeps = cfg.substeps as u64;
    let period = cfg.frame_period_us();
    let gain = match cfg.lighting {
        Lighting::Normal => 1.0,
        Lighting::Low => cfg.low_light_gain,
    };

    let mut scene_rng = rng(cfg.seed, STREAM_SCENE);
    let mut noise_rng = rng(cfg.seed, STREAM_SHOT_NOISE);
    let mut odom_rng = rng(cfg.seed, STREAM_ODOMETRY);
    let mut clock_rng = rng(cfg.seed, STREAM_CLOCK);
    let mut rgb_rng = rng(cfg.seed, STREAM_RGB);
    let odom_v = Normal::new(0.0, cfg.odom_noise_sigma[0]).expect("validated sigma");
    let odom_w = Normal::new(0.0, cfg.odom_noise_sigma[1]).expect("validated sigma");
    let jitter = Normal::new(0.0, cfg.clock.jitter_us).expect("validated jitter");
    let rgb_noise = Normal::new(0.0, 3.0).expect("constant sigma");

    let path = Polyline::new(cfg.waypoints());
    let target_at = |t: Micros| path.at(cfg.target_speed * t as f64 * 1e-6);
    let mut plant = LagPlant {
        pose: Pose {
            x: 0.0,
            y: 0.0,
            theta: 0.0,
        },
        v: 0.0,
        w: 0.0,
        tau: cfg.plant_tau_s,
    };

    let mut renderer = SceneRenderer::new(w, h, cfg.fov_deg.to_radians(), gain, &mut scene_rng);
    renderer.render(&plant.pose, target_at(0));
    let mut emulator =
        ContrastEmulator::new(w, h, cfg.contrast_threshold, &renderer.full_frame(), 0);
    let homography = cfg.rgb_homography();

    let mut twists_cmd = Vec::new();
    let mut twists_odom = Vec::new();
    let mut cmd_sched = Schedule::new(cfg.cmd_rate_hz);
    let mut odom_sched = Schedule::new(cfg.odom_rate_hz);
    let mut cmd = (0.0, 0.0);
    let mut control = |t: Micros, plant: &LagPlant, cmd: &mut (f64, f64)| {
        if cmd_sched.due(t) {
            *cmd = expert_command(&cfg.expert, &plant.pose, target_at(t));
            twists_cmd.push(TwistSample {
                t,
                v: cmd.0,
                w: cmd.1,
                source: TwistSource::Command,
            });
        }
        if odom_sched.due(t) {
            twists_odom.push(TwistSample {
                t,
                v: plant.v + odom_v.sample(&mut odom_rng),
                w: plant.w + odom_w.sample(&mut odom_rng),
                source: TwistSource::Odometry,
            });
        }
    };
    control(0, &plant, &mut cmd);

    let triggers: Vec<Event> = (1..=n_frames as u64)
        .flat_map(|k| {
            let rise = (k as f64 * period).round() as Micros;
            let fall = (k as f64 * period + period / 2.0).round() as Micros;
            [
                Event::trigger(rise, TriggerEdge::Rising),
                Event::trigger(fall, TriggerEdge::Falling),
            ]
        })
        .collect();
    let mut next_trigger = 0;

    let shot_rate = match cfg.lighting {
        Lighting::Low => cfg.low_light_noise_rate_hz,
        Lighting::Normal => 0.0,
    };
    let mut events: Vec<Event> = Vec::new();
    let mut step_events: Vec<Event> = Vec::new();
    let mut ground_truth = Vec::with_capacity(n_frames as usize);
    let mut frame_times_evt = Vec::with_capacity(n_frames as usize);
    let mut next_tick = DYNAMICS_STEP_US;
    let mut t_prev = 0;

    for j in 1..=n_frames as u64 * substeps {
        let t = (j as f64 * period / substeps as f64).round() as Micros;
        while next_tick <= t {
            plant.step(cmd, DYNAMICS_STEP_US as f64 * 1e-6);
            control(next_tick, &plant, &mut cmd);
            next_tick += DYNAMICS_STEP_US;
        }
        let target = target_at(t);
        renderer.render(&plant.pose, target);

        step_events.clear();
        emulator.step_rows(t, |y| renderer.row(y), &mut step_events);
        if shot_rate > 0.0 {
            let mean = shot_rate * (t - t_prev) as f64 * 1e-6;
            let count = Poisson::new(mean)
                .map(|p| p.sample(&mut noise_rng) as u64)
                .unwrap_or(0);
            for _ in 0..count {
                let te = noise_rng.random_range(t_prev + 1..=t);
                let x = noise_rng.random_range(0..w as u16);
                let y = noise_rng.random_range(0..h as u16);
                let p = Polarity::from_bit(noise_rng.random_bool(0.5));
                step_events.push(Event::cd(te, x, y, p));
            }
        }
        while next_trigger < triggers.len() && triggers[next_trigger].t <= t {
            step_events.push(triggers[next_trigger]);
            next_trigger += 1;
        }
        step_events.sort_by_key(|e| (e.t, e.is_cd()));
        events.extend_from_slice(&step_events);

        if j % substeps == 0 {
            let frame = (j / substeps) as u32;
            frame_times_evt.push(t);
            ground_truth.push(GroundTruth {
                frame,
                bearing_rad: bearing_error(&plant.pose, target),
                expert_v: cmd.0,
                expert_w: cmd.1,
            });
            if cfg.rgb.enabled {
                let noise = (cfg.lighting == Lighting::Low).then_some((&mut rgb_rng, rgb_noise));
                let img = render_rgb(&renderer, cfg, &homography, noise);
                rgb_sink(frame, &img)?;
            }
        }
        t_prev = t;
    }
    events.extend_from_slice(&triggers[next_trigger..]);

    let mut frames = Vec::with_capacity(frame_times_evt.len());
    let mut prev_rgb: Option<Micros> = None;
    for (i, &te) in frame_times_evt.iter().enumerate() {
        let raw = cfg.clock.alpha * te as f64 + cfg.clock.beta_us + jitter.sample(&mut clock_rng);
        let mut t_rgb = raw.round().max(0.0) as Micros;
        if let Some(p) = prev_rgb {
            t_rgb = t_rgb.max(p + 1);
        }
        prev_rgb = Some(t_rgb);
        let index = i as u32 + 1;
        frames.push(FrameRecord {
            index,
            t: t_rgb,
            image_ref: if cfg.rgb.enabled {
                format!("{RGB_DIR}/{index:06}.png")
            } else {
                String::new()
            },
        });
    }

    let events = EventStream::new(cfg.sensor_width, cfg.sensor_height, events)
        .expect("simulator emits ordered, in-bounds events");
    Ok(SyntheticEpisode {
        events,
        frames,
        frame_times_evt,
        twists_cmd,
        twists_odom,
        ground_truth,
        meta: cfg.meta(),
    })
}

/// Runs the simulation without keeping RGB frames.
pub fn generate_episode(cfg: &SceneConfig) -> Result<SyntheticEpisode, SynthError> {
    generate_episode_with(cfg, &mut |_, _| Ok(()))
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, SynthError> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

/// Generates an episode into `dir` (created if missing): the ingest files,
/// `ground_truth.csv`, the config as `scene.json` and, with RGB enabled,
/// `rgb/NNNNNN.png` plus `homography.json`.
pub fn write_episode(cfg: &SceneConfig, dir: &Path) -> Result<SynthSummary, SynthError> {
    cfg.validate()?;
    fs::create_dir_all(dir)?;
    if cfg.rgb.enabled {
        fs::create_dir_all(dir.join(RGB_DIR))?;
    }
    let rgb_dir = dir.join(RGB_DIR);
    let ep = generate_episode_with(cfg, &mut |k, img| {
        img.save_png(&rgb_dir.join(format!("{k:06}.png")))?;
        Ok(())
    })?;

    let mut f = create(dir, EVENTS_FILE)?;
    write_events(&ep.events, &mut f)?;
    f.flush()?;
    write_frames(&ep.frames, create(dir, FRAMES_FILE)?)?;
    write_twists(&ep.twists_cmd, create(dir, TWISTS_CMD_FILE)?)?;
    write_twists(&ep.twists_odom, create(dir, TWISTS_ODOM_FILE)?)?;
    let mut f = create(dir, META_FILE)?;
    serde_json::to_writer_pretty(&mut f, &ep.meta)?;
    f.flush()?;
    write_ground_truth(&ep.ground_truth, create(dir, GROUND_TRUTH_FILE)?)?;
    let mut f = create(dir, SCENE_FILE)?;
    serde_json::to_writer_pretty(&mut f, cfg)?;
    f.flush()?;
    if cfg.rgb.enabled {
        let mut f = create(dir, HOMOGRAPHY_FILE)?;
        write_homography(&cfg.rgb_homography(), &mut f)?;
        f.flush()?;
    }
    Ok(ep.summary())
}

pub fn write_ground_truth(rows: &[GroundTruth], sink: impl Write) -> Result<(), SynthError> {
    let mut wtr = csv::Writer::from_writer(sink);
    let err = |e: csv::Error| SynthError::Io(e.into());
    wtr.write_record(GROUND_TRUTH_HEADER).map_err(err)?;
    for r in rows {
        wtr.write_record([
            r.frame.to_string(),
            r.bearing_rad.to_string(),
            r.expert_v.to_string(),
            r.expert_w.to_string(),
        ])
        .map_err(err)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn parse_ground_truth(src: impl Read) -> Result<Vec<GroundTruth>, SynthError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(src);
    let bad = |line: u64, reason: String| SynthError::GroundTruth { line, reason };
    let headers = rdr.headers().map_err(|e| bad(1, e.to_string()))?.clone();
    if headers.iter().ne(GROUND_TRUTH_HEADER.iter().copied()) {
        return Err(bad(
            1,
            format!("expected header `{}`", GROUND_TRUTH_HEADER.join(",")),
        ));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            bad(line, e.to_string())
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let num = |i: usize| -> Result<f64, SynthError> {
            rec[i]
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| bad(line, format!("bad `{}`", GROUND_TRUTH_HEADER[i])))
        };
        out.push(GroundTruth {
            frame: rec[0]
                .parse()
                .map_err(|_| bad(line, "bad `frame`".into()))?,
            bearing_rad: num(1)?,
            expert_v: num(2)?,
            expert_w: num(3)?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64) -> SceneConfig {
        SceneConfig {
            seed,
            duration_s: 1.0,
            sensor_width: 160,
            sensor_height: 90,
            ..SceneConfig::default()
        }
    }

    #[test]
    fn defaults_validate() {
        SceneConfig::default().validate().unwrap();
        let cfg = parse_scene_config(r#"{"seed": 3, "duration_s": 2.5}"#.as_bytes()).unwrap();
        assert_eq!(cfg.frame_count(), 75);
        assert!(parse_scene_config(r#"{"duration_s": 0}"#.as_bytes()).is_err());
        assert!(parse_scene_config(r#"{"contrast_threshold": -1}"#.as_bytes()).is_err());
        assert!(parse_scene_config(r#"{"bogus": 1}"#.as_bytes()).is_err());
    }

    #[test]
    fn static_scene_is_silent() {
        let cfg = SceneConfig {
            waypoints: Some(vec![[1.5, 0.0]]),
            target_speed: 0.0,
            ..small(1)
        };
        let ep = generate_episode(&cfg).unwrap();
        assert_eq!(ep.events.cd_count(), 0);
        assert!(ep.twists_cmd.iter().all(|s| s.v == 0.0 && s.w == 0.0));
        assert!(ep
            .ground_truth
            .iter()
            .all(|g| g.expert_v == 0.0 && g.expert_w == 0.0));
    }

    #[test]
    fn moving_scene_produces_events_and_streams() {
        let ep = generate_episode(&small(2)).unwrap();
        let s = ep.summary();
        assert!(s.cd_events > 1000, "{s:?}");
        assert_eq!(s.frames, 30);
        assert_eq!(s.triggers, 60);
        assert_eq!(ep.ground_truth.len(), 30);
        assert_eq!(s.cmd_samples, 21);
        assert_eq!(s.odom_samples, 51);
    }

    #[test]
    fn trigger_cadence() {
        let cfg = small(3);
        let ep = generate_episode(&cfg).unwrap();
        let rising = crate::sync::extract_trigger_times(&ep.events, TriggerEdge::Rising);
        let step = cfg.frame_period_us() / cfg.substeps as f64;
        for p in rising.windows(2) {
            assert!(((p[1] - p[0]) as f64 - cfg.frame_period_us()).abs() <= step);
        }
        assert_eq!(rising, ep.frame_times_evt);
    }

    #[test]
    fn deterministic() {
        let a = generate_episode(&small(4)).unwrap();
        let b = generate_episode(&small(4)).unwrap();
        assert_eq!(a.events, b.events);
        assert_eq!(a.twists_odom, b.twists_odom);
        assert_eq!(a.frames, b.frames);
        let c = generate_episode(&small(5)).unwrap();
        assert_ne!(a.twists_odom, c.twists_odom);
    }

    #[test]
    fn low_light_adds_noise_events() {
        let cfg = SceneConfig {
            waypoints: Some(vec![[1.5, 0.0]]),
            target_speed: 0.0,
            lighting: Lighting::Low,
            low_light_noise_rate_hz: 5_000.0,
            ..small(6)
        };
        let n = generate_episode(&cfg).unwrap().events.cd_count();
        assert!((4_000..6_000).contains(&n), "{n}");
    }

    #[test]
    fn clock_distortion_applies_to_frames() {
        let cfg = SceneConfig {
            clock: ClockConfig {
                alpha: 1.0 + 1e-5,
                beta_us: 12_345.0,
                jitter_us: 0.0,
            },
            ..small(7)
        };
        let ep = generate_episode(&cfg).unwrap();
        for (f, &te) in ep.frames.iter().zip(&ep.frame_times_evt) {
            let want = (cfg.clock.alpha * te as f64 + 12_345.0).round() as Micros;
            assert_eq!(f.t, want);
        }
    }

    #[test]
    fn ground_truth_csv_round_trip() {
        let rows = vec![
            GroundTruth {
                frame: 1,
                bearing_rad: -0.1,
                expert_v: 0.3,
                expert_w: 0.15,
            },
            GroundTruth {
                frame: 2,
                bearing_rad: 0.0,
                expert_v: 0.0,
                expert_w: 0.0,
            },
        ];
        let mut buf = Vec::new();
        write_ground_truth(&rows, &mut buf).unwrap();
        assert_eq!(parse_ground_truth(&buf[..]).unwrap(), rows);
    }
}
