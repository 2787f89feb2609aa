//! RGB-to-event-plane registration: homography estimation, warping and
//! resizing.

mod homography;
mod raster;

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

pub use self::homography::{
    estimate_homography, reprojection_error, GeometryError, Homography, Point2,
};
pub use self::raster::{resize_image, warp_image, ImageBuffer, ImageError};

/// On-disk shape of `homography.json`: `{"h": [[..],[..],[..]]}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HomographyFile {
    h: [[f64; 3]; 3],
}

#[derive(Debug, thiserror::Error)]
pub enum HomographyFileError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Parses and renormalizes a stored homography, rejecting singular ones.
pub fn parse_homography(src: impl Read) -> Result<Homography, HomographyFileError> {
    let file: HomographyFile = serde_json::from_reader(src)?;
    let h = Homography::from_matrix(&Homography { h: file.h }.matrix())?;
    h.inverse()?;
    Ok(h)
}

pub fn write_homography(h: &Homography, sink: impl Write) -> Result<(), serde_json::Error> {
    serde_json::to_writer_pretty(sink, &HomographyFile { h: h.h })
}
