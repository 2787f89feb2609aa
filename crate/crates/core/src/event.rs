//! Event-camera records and the time-ordered stream that holds them.

use serde::{Deserialize, Serialize};

/// Microseconds on whichever clock the owning record declares.
pub type Micros = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum Polarity {
    Off = 0,
    On = 1,
}

impl Polarity {
    pub fn from_bit(bit: bool) -> Self {
        if bit {
            Polarity::On
        } else {
            Polarity::Off
        }
    }

    pub fn is_on(self) -> bool {
        self == Polarity::On
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TriggerEdge {
    Rising,
    Falling,
}

/// What a record in the event stream represents.
///
/// The trigger edge only exists for trigger markers, so a contrast-detection
/// event cannot carry a stale edge value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventKind {
    /// Contrast-detection event from a pixel.
    Cd,
    /// External trigger marker injected by the synchronization pulse.
    Trigger(TriggerEdge),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Event {
    pub t: Micros,
    pub x: u16,
    pub y: u16,
    pub polarity: Polarity,
    pub kind: EventKind,
}

impl Event {
    pub fn cd(t: Micros, x: u16, y: u16, polarity: Polarity) -> Self {
        Event {
            t,
            x,
            y,
            polarity,
            kind: EventKind::Cd,
        }
    }

    pub fn trigger(t: Micros, edge: TriggerEdge) -> Self {
        Event {
            t,
            x: 0,
            y: 0,
            polarity: Polarity::from_bit(edge == TriggerEdge::Rising),
            kind: EventKind::Trigger(edge),
        }
    }

    pub fn is_cd(&self) -> bool {
        self.kind == EventKind::Cd
    }

    pub fn trigger_edge(&self) -> Option<TriggerEdge> {
        match self.kind {
            EventKind::Trigger(edge) => Some(edge),
            EventKind::Cd => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum StreamError {
    #[error("event {index} at t={t} precedes the previous event at t={prev}")]
    Unordered {
        index: usize,
        t: Micros,
        prev: Micros,
    },
    #[error("event {index} at ({x}, {y}) lies outside the {width}x{height} sensor")]
    CoordinateOutOfBounds {
        index: usize,
        x: u16,
        y: u16,
        width: u16,
        height: u16,
    },
}

/// A validated, time-ordered event sequence for one sensor.
///
/// Construction checks that timestamps are non-decreasing and that every
/// contrast-detection event lies on the sensor. Trigger markers carry no
/// meaningful coordinates and are not bounds-checked.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventStream {
    sensor_width: u16,
    sensor_height: u16,
    events: Vec<Event>,
}

impl EventStream {
    pub fn new(
        sensor_width: u16,
        sensor_height: u16,
        events: Vec<Event>,
    ) -> Result<Self, StreamError> {
        let mut prev = 0;
        for (index, e) in events.iter().enumerate() {
            if e.t < prev {
                return Err(StreamError::Unordered {
                    index,
                    t: e.t,
                    prev,
                });
            }
            prev = e.t;
            if e.is_cd() && (e.x >= sensor_width || e.y >= sensor_height) {
                return Err(StreamError::CoordinateOutOfBounds {
                    index,
                    x: e.x,
                    y: e.y,
                    width: sensor_width,
                    height: sensor_height,
                });
            }
        }
        Ok(EventStream {
            sensor_width,
            sensor_height,
            events,
        })
    }

    pub fn empty(sensor_width: u16, sensor_height: u16) -> Self {
        EventStream {
            sensor_width,
            sensor_height,
            events: Vec::new(),
        }
    }

    pub fn sensor_width(&self) -> u16 {
        self.sensor_width
    }

    pub fn sensor_height(&self) -> u16 {
        self.sensor_height
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn cd_count(&self) -> usize {
        self.events.iter().filter(|e| e.is_cd()).count()
    }

    pub fn trigger_count(&self) -> usize {
        self.events.len() - self.cd_count()
    }

    pub fn into_events(self) -> Vec<Event> {
        self.events
    }
}

/// One RGB frame on the RGB clock (or on the event clock once mapped).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameRecord {
    /// 1-based sample counter.
    pub index: u32,
    pub t: Micros,
    /// Locator for the image payload, relative to the episode directory.
    pub image_ref: String,
}
