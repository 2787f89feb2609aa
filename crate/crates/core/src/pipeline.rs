//! Episode-level orchestration: clock alignment and dataset building.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::actions::{aggregate_actions, compare_sources, ActionError, DiscrepancyReport};
use crate::container::{
    manifest_json, ContainerError, DatasetInfo, DatasetWriter, SampleTuple, Split, SplitRatios,
    StoredAction, BLOB_FILE, MANIFEST_FILE,
};
use crate::event::TriggerEdge;
use crate::geometry::{
    parse_homography, resize_image, warp_image, GeometryError, Homography, HomographyFileError,
    ImageBuffer, ImageError,
};
use crate::histogram::{downsample_histogram, rasterize_histogram, HistogramError};
use crate::ingest::{
    load_episode, load_events, load_frames, IngestError, TwistBounds, TwistSource,
};
use crate::sync::{
    apply_phase_offset, extract_trigger_times, fit_clock_model, map_frames_to_event_clock,
    ClockFitReport, FitOptions, SyncError,
};
use crate::window::{partition_windows, resolve_t0, DropReport, T0Policy, WindowError};

pub const CLOCK_MODEL_FILE: &str = "clock_model.json";
pub const DEFAULT_HOMOGRAPHY_FILE: &str = "homography.json";

#[derive(Debug, thiserror::Error)]
pub enum AlignError {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Sync(#[from] SyncError),
    #[error("writing {CLOCK_MODEL_FILE}: {0}")]
    Io(#[from] std::io::Error),
    #[error("writing {CLOCK_MODEL_FILE}: {0}")]
    Json(#[from] serde_json::Error),
}

/// Fits the event-to-RGB clock model of an episode from its rising trigger
/// edges and frame stamps, and stores it as `clock_model.json`.
pub fn align_episode(dir: &Path, opts: FitOptions) -> Result<ClockFitReport, AlignError> {
    let (events, _) = load_events(dir)?;
    let frames = load_frames(dir)?;
    let triggers = extract_trigger_times(&events, TriggerEdge::Rising);
    let frame_times: Vec<_> = frames.iter().map(|f| f.t).collect();
    let report = fit_clock_model(&triggers, &frame_times, opts)?;
    let mut f = BufWriter::new(File::create(dir.join(CLOCK_MODEL_FILE))?);
    serde_json::to_writer_pretty(&mut f, &report)?;
    std::io::Write::flush(&mut f)?;
    Ok(report)
}

pub fn read_clock_model(path: &Path) -> Result<ClockFitReport, BuildError> {
    let file = File::open(path).map_err(|source| BuildError::MissingClockModel {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_reader(BufReader::new(file)).map_err(|source| BuildError::BadClockModel {
        path: path.to_path_buf(),
        source,
    })
}

/// Settings for turning one aligned episode into a container.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BuildOptions {
    /// Defaults to `<episode>/clock_model.json`.
    pub clock_model: Option<PathBuf>,
    /// Defaults to `<episode>/homography.json`; read only with RGB included.
    pub homography: Option<PathBuf>,
    pub t0: T0Policy,
    pub downsample: usize,
    pub rgb_included: bool,
    pub label_source: TwistSource,
    /// Clamp histogram cells at `u16::MAX` instead of failing.
    pub saturate: bool,
    /// Constant shift applied to RGB stamps before clock mapping.
    pub exposure_phase_offset_us: i64,
    pub split: Split,
    pub twist_bounds: TwistBounds,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions {
            clock_model: None,
            homography: None,
            t0: T0Policy::MedianInterval,
            downsample: 4,
            rgb_included: false,
            label_source: TwistSource::Odometry,
            saturate: true,
            exposure_phase_offset_us: 0,
            split: Split::Train,
            twist_bounds: TwistBounds::default(),
        }
    }
}

/// A batch or single-episode build described in one file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// One episode directory, or a root whose subdirectories are episodes
    /// when `batch` is set.
    pub input: PathBuf,
    pub output: PathBuf,
    #[serde(default)]
    pub batch: bool,
    #[serde(default)]
    pub split_seed: u64,
    #[serde(default)]
    pub split_ratios: SplitRatios,
    #[serde(default)]
    pub options: BuildOptions,
}

#[derive(Debug, thiserror::Error)]
pub enum BuildError {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error("clock model {}: {source}", path.display())]
    MissingClockModel {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("clock model {}: {source}", path.display())]
    BadClockModel {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("windowing: {0}")]
    Windowing(#[from] WindowError),
    #[error("rasterize: {0}")]
    Rasterize(#[from] HistogramError),
    #[error("homography {}: {source}", path.display())]
    Homography {
        path: PathBuf,
        #[source]
        source: HomographyFileError,
    },
    #[error("rgb frame {}: {source}", path.display())]
    RgbFrame {
        path: PathBuf,
        #[source]
        source: ImageError,
    },
    #[error("geometry: {0}")]
    Geometry(#[from] GeometryError),
    #[error("actions: {0}")]
    Actions(#[from] ActionError),
    #[error("container: {0}")]
    Container(#[from] ContainerError),
}

impl BuildError {
    pub fn stage(&self) -> &'static str {
        match self {
            BuildError::Ingest(_) => "ingest",
            BuildError::MissingClockModel { .. } | BuildError::BadClockModel { .. } => "sync",
            BuildError::Windowing(_) => "windowing",
            BuildError::Rasterize(_) => "rasterize",
            BuildError::Homography { .. }
            | BuildError::RgbFrame { .. }
            | BuildError::Geometry(_) => "geometry",
            BuildError::Actions(_) => "actions",
            BuildError::Container(_) => "container",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildReport {
    pub samples: u64,
    pub held_labels: usize,
    pub t0: u64,
    pub dropped_events: DropReport,
    pub dropped_twists: usize,
    pub saturated_samples: usize,
    /// Command-vs-odometry label discrepancy, when both logs exist.
    pub label_discrepancy: Option<DiscrepancyReport>,
    pub blob_bytes: u64,
    pub blob_crc32: u32,
}

/// Runs windowing, rasterization, downsampling, optional RGB registration and
/// action labeling for one episode, streaming records into `out_dir`.
pub fn build_episode(
    episode_dir: &Path,
    out_dir: &Path,
    opts: &BuildOptions,
) -> Result<BuildReport, BuildError> {
    let bundle = load_episode(episode_dir, opts.twist_bounds)?;
    let clock_path = opts
        .clock_model
        .clone()
        .unwrap_or_else(|| episode_dir.join(CLOCK_MODEL_FILE));
    let clock = read_clock_model(&clock_path)?.model();

    let frames = map_frames_to_event_clock(
        &apply_phase_offset(&bundle.frames, opts.exposure_phase_offset_us),
        &clock,
    );
    let t0 = resolve_t0(&frames, opts.t0)?;
    let partition = partition_windows(&bundle.events, &frames, t0)?;

    let (sw, sh) = (
        bundle.events.sensor_width() as usize,
        bundle.events.sensor_height() as usize,
    );
    let f = opts.downsample;
    if f == 0 || !sw.is_multiple_of(f) || !sh.is_multiple_of(f) {
        return Err(HistogramError::NonDivisibleFactor {
            factor: f,
            width: sw,
            height: sh,
        }
        .into());
    }
    let (ow, oh) = (sw / f, sh / f);

    let homography = if opts.rgb_included {
        let path = opts
            .homography
            .clone()
            .unwrap_or_else(|| episode_dir.join(DEFAULT_HOMOGRAPHY_FILE));
        let file = File::open(&path).map_err(|e| BuildError::Homography {
            path: path.clone(),
            source: e.into(),
        })?;
        Some(
            parse_homography(BufReader::new(file))
                .map_err(|source| BuildError::Homography { path, source })?,
        )
    } else {
        None
    };

    let twists = match opts.label_source {
        TwistSource::Odometry => &bundle.twists_odom,
        TwistSource::Command => &bundle.twists_cmd,
    };
    let (labels, agg) = aggregate_actions(twists, &frames, t0, opts.label_source)?;
    let label_discrepancy = if bundle.twists_cmd.is_empty() {
        None
    } else {
        let (cmd, _) = aggregate_actions(&bundle.twists_cmd, &frames, t0, TwistSource::Command)?;
        let (odom, _) = aggregate_actions(&bundle.twists_odom, &frames, t0, TwistSource::Odometry)?;
        Some(compare_sources(&cmd, &odom)?)
    };

    fs::create_dir_all(out_dir).map_err(ContainerError::from)?;
    let blob = BufWriter::new(File::create(out_dir.join(BLOB_FILE)).map_err(ContainerError::from)?);
    let mut writer = DatasetWriter::new(blob, ow, oh, opts.rgb_included);
    let mut saturated_samples = 0;
    for ((window, frame), label) in partition.windows.iter().zip(&frames).zip(&labels) {
        let full = rasterize_histogram(window, sw, sh, opts.saturate)?;
        let histogram = downsample_histogram(&full, f)?;
        if histogram.saturated() {
            saturated_samples += 1;
        }
        let rgb = match &homography {
            Some(h) => Some(register_rgb(
                episode_dir,
                &frame.image_ref,
                h,
                (sw, sh),
                (ow, oh),
            )?),
            None => None,
        };
        writer.push(&SampleTuple {
            frame_index: frame.index,
            t_evt: frame.t,
            histogram,
            rgb,
            action: StoredAction::from(label),
        })?;
    }
    let (count, bytes, crc) = writer.finish()?;
    let info = DatasetInfo {
        episode: Some(bundle.meta.clone()),
        width: ow,
        height: oh,
        rgb_included: opts.rgb_included,
        split: opts.split,
        label_source: opts.label_source,
    };
    let manifest = crate::container::manifest_for(&info, count, bytes, crc);
    fs::write(out_dir.join(MANIFEST_FILE), manifest_json(&manifest)?)
        .map_err(ContainerError::from)?;

    Ok(BuildReport {
        samples: count,
        held_labels: agg.held_labels,
        t0,
        dropped_events: partition.dropped,
        dropped_twists: agg.dropped(),
        saturated_samples,
        label_discrepancy,
        blob_bytes: bytes,
        blob_crc32: crc,
    })
}

/// Loads an RGB frame, warps it onto the event sensor plane and shrinks it
/// to the histogram resolution.
fn register_rgb(
    episode_dir: &Path,
    image_ref: &str,
    h: &Homography,
    sensor: (usize, usize),
    out: (usize, usize),
) -> Result<ImageBuffer, BuildError> {
    let path = episode_dir.join(image_ref);
    if image_ref.is_empty() {
        return Err(BuildError::RgbFrame {
            path,
            source: ImageError::Codec("frame has no image reference".into()),
        });
    }
    let img = ImageBuffer::load(&path)
        .map_err(|source| BuildError::RgbFrame {
            path: path.clone(),
            source,
        })?
        .to_rgb();
    let warped = warp_image(&img, h, sensor.0, sensor.1)?;
    Ok(resize_image(&warped, out.0, out.1))
}

/// Episode directories directly under `root`, sorted by name.
pub fn discover_episodes(root: &Path) -> std::io::Result<Vec<PathBuf>> {
    let mut dirs = Vec::new();
    for entry in fs::read_dir(root)? {
        let path = entry?.path();
        if path.is_dir() && path.join(crate::ingest::EVENTS_FILE).is_file() {
            dirs.push(path);
        }
    }
    dirs.sort();
    Ok(dirs)
}
