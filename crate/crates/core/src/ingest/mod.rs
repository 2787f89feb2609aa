//! Parsers and writers for the on-disk episode formats.
//!
//! An episode directory holds:
//!
//! | file               | format                         |
//! |--------------------|--------------------------------|
//! | `events.envt`      | ENVT binary event log          |
//! | `frames.csv`       | `index,t_us,image_ref`         |
//! | `twists_cmd.csv`   | `t_us,v_mps,w_radps` (teleop)  |
//! | `twists_odom.csv`  | `t_us,v_mps,w_radps` (odometry)|
//! | `episode.json`     | episode metadata               |

pub mod envt;
pub mod tables;

use std::fs::File;
use std::io::{BufReader, Read};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::event::{EventStream, FrameRecord};

pub use envt::{parse_events, parse_events_with, write_events, EnvtError, EventParseReport};
pub use tables::{
    parse_frames, parse_twists, write_frames, write_twists, TableError, TwistBounds, TwistSample,
    TwistSource,
};

pub const EVENTS_FILE: &str = "events.envt";
pub const FRAMES_FILE: &str = "frames.csv";
pub const TWISTS_CMD_FILE: &str = "twists_cmd.csv";
pub const TWISTS_ODOM_FILE: &str = "twists_odom.csv";
pub const META_FILE: &str = "episode.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PathId {
    P1,
    P2,
    P3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Lighting {
    Normal,
    Low,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpisodeMeta {
    pub map_id: String,
    pub path: PathId,
    pub lighting: Lighting,
    pub subject_id: String,
}

pub fn parse_episode_meta(src: impl Read) -> Result<EpisodeMeta, serde_json::Error> {
    serde_json::from_reader(src)
}

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("{file}: {source}")]
    Events {
        file: String,
        #[source]
        source: EnvtError,
    },
    #[error("{file}: {source}")]
    Table {
        file: String,
        #[source]
        source: TableError,
    },
    #[error("{file}: {source}")]
    Meta {
        file: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("{file}: {source}")]
    Io {
        file: String,
        #[source]
        source: std::io::Error,
    },
}

/// Everything recorded for one episode, parsed and validated.
#[derive(Debug, Clone)]
pub struct EpisodeBundle {
    pub events: EventStream,
    pub event_report: EventParseReport,
    pub frames: Vec<FrameRecord>,
    /// May be empty when no teleop log was recorded.
    pub twists_cmd: Vec<TwistSample>,
    pub twists_odom: Vec<TwistSample>,
    pub meta: EpisodeMeta,
}

fn open(dir: &Path, name: &str) -> Result<BufReader<File>, IngestError> {
    File::open(dir.join(name))
        .map(BufReader::new)
        .map_err(|source| IngestError::Io {
            file: name.to_string(),
            source,
        })
}

pub fn load_events(dir: &Path) -> Result<(EventStream, EventParseReport), IngestError> {
    parse_events(open(dir, EVENTS_FILE)?).map_err(|source| IngestError::Events {
        file: EVENTS_FILE.into(),
        source,
    })
}

pub fn load_frames(dir: &Path) -> Result<Vec<FrameRecord>, IngestError> {
    parse_frames(open(dir, FRAMES_FILE)?).map_err(|source| IngestError::Table {
        file: FRAMES_FILE.into(),
        source,
    })
}

pub fn load_meta(dir: &Path) -> Result<EpisodeMeta, IngestError> {
    parse_episode_meta(open(dir, META_FILE)?).map_err(|source| IngestError::Meta {
        file: META_FILE.into(),
        source,
    })
}

fn load_twists(
    dir: &Path,
    name: &str,
    source: TwistSource,
    bounds: TwistBounds,
    optional: bool,
) -> Result<Vec<TwistSample>, IngestError> {
    if optional && !dir.join(name).exists() {
        return Ok(Vec::new());
    }
    parse_twists(open(dir, name)?, source, bounds).map_err(|e| IngestError::Table {
        file: name.into(),
        source: e,
    })
}

/// Loads a whole episode directory. The teleop command log is optional.
pub fn load_episode(dir: &Path, bounds: TwistBounds) -> Result<EpisodeBundle, IngestError> {
    let (events, event_report) = load_events(dir)?;
    Ok(EpisodeBundle {
        events,
        event_report,
        frames: load_frames(dir)?,
        twists_cmd: load_twists(dir, TWISTS_CMD_FILE, TwistSource::Command, bounds, true)?,
        twists_odom: load_twists(dir, TWISTS_ODOM_FILE, TwistSource::Odometry, bounds, false)?,
        meta: load_meta(dir)?,
    })
}
