//! Building synchronized event/RGB/action training tuples from event-camera
//! recordings.
//!
//! The pipeline runs ingest, then clock alignment, windowing and
//! rasterization, optional RGB registration, action labeling, and finally
//! container serialization. [`synth`] produces deterministic synthetic
//! episodes in the on-disk recording layout, and [`eval`] scores predicted
//! actions against stored labels.

pub mod actions;
pub mod container;
pub mod eval;
pub mod event;
pub mod geometry;
pub mod histogram;
pub mod ingest;
pub mod pipeline;
pub mod sync;
pub mod synth;
pub mod window;

pub use event::{Event, EventKind, EventStream, FrameRecord, Micros, Polarity, TriggerEdge};
