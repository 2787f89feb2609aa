//! Synchronized sample container: `manifest.json` plus one `samples.bin` blob.
//!
//! Every record in the blob is laid out little-endian as
//!
//! ```text
//! frame_index u32 | t_evt u64 | v f32 | w f32 | held u8
//! | hist u16 x (2*H*W)            channel-major [ON, OFF], then row, then column
//! | rgb u8 x (3*H*W)              only when the manifest sets rgb_included
//! | crc32 u32                     CRC-32 (IEEE) of the preceding record bytes
//! ```
//!
//! The manifest carries the blob length and a CRC-32 over the whole blob.
//! Reading streams one record at a time through a single reusable buffer.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::actions::ActionLabel;
use crate::geometry::ImageBuffer;
use crate::histogram::EventHistogram;
use crate::ingest::{EpisodeMeta, TwistSource};

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const BLOB_FILE: &str = "samples.bin";

/// Fixed prefix of every record: frame index, timestamp, v, w, held flag.
pub const RECORD_PREFIX_BYTES: usize = 4 + 8 + 4 + 4 + 1;
pub const RECORD_CRC_BYTES: usize = 4;

#[derive(Debug, thiserror::Error)]
pub enum ContainerError {
    #[error("sample {index}: {what} is {got}, manifest declares {expected}")]
    DimMismatch {
        index: usize,
        what: &'static str,
        got: String,
        expected: String,
    },
    #[error("record {record} failed its checksum")]
    ChecksumMismatch { record: u64 },
    #[error("blob ends inside record {record}")]
    TruncatedBlob { record: u64 },
    #[error("manifest and blob disagree: {0}")]
    ManifestBlobDisagreement(String),
    #[error("unsupported container version {0}")]
    UnsupportedVersion(u32),
    #[error("manifest: {0}")]
    Manifest(#[from] serde_json::Error),
    #[error("split ratios {0:?} must be non-negative and sum to 1")]
    InvalidRatios([f64; 3]),
    #[error("{0} episode(s) cannot populate train, validation and test")]
    TooFewEpisodes(usize),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

/// Action as stored: single precision, with the hold flag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StoredAction {
    pub v: f32,
    pub w: f32,
    pub held: bool,
}

impl From<&ActionLabel> for StoredAction {
    fn from(a: &ActionLabel) -> Self {
        StoredAction {
            v: a.v as f32,
            w: a.w as f32,
            held: a.held,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleTuple {
    pub frame_index: u32,
    pub t_evt: u64,
    /// Histograms read back report `saturated` when any cell sits at
    /// `u16::MAX`, since the flag itself is not stored.
    pub histogram: EventHistogram,
    pub rgb: Option<ImageBuffer>,
    pub action: StoredAction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlobEntry {
    pub file: String,
    pub bytes: u64,
    pub crc32: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub episode: Option<EpisodeMeta>,
    /// Histogram dimensions; channels is always 2.
    pub dims: Dims,
    pub rgb_included: bool,
    pub sample_count: u64,
    pub split: Split,
    pub label_source: TwistSource,
    pub record_bytes: u64,
    pub blobs: Vec<BlobEntry>,
}

/// Caller-chosen parts of the manifest; counts and checksums are filled in
/// by the writer.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetInfo {
    pub episode: Option<EpisodeMeta>,
    pub width: usize,
    pub height: usize,
    pub rgb_included: bool,
    pub split: Split,
    pub label_source: TwistSource,
}

pub fn record_bytes(width: usize, height: usize, rgb_included: bool) -> usize {
    let plane = width * height;
    RECORD_PREFIX_BYTES + 4 * plane + if rgb_included { 3 * plane } else { 0 } + RECORD_CRC_BYTES
}

/// Streams records into a blob, checksumming as it goes.
pub struct DatasetWriter<W: Write> {
    sink: W,
    width: usize,
    height: usize,
    rgb_included: bool,
    buf: Vec<u8>,
    count: u64,
    bytes: u64,
    blob_crc: crc32fast::Hasher,
}

impl<W: Write> DatasetWriter<W> {
    pub fn new(sink: W, width: usize, height: usize, rgb_included: bool) -> Self {
        DatasetWriter {
            sink,
            width,
            height,
            rgb_included,
            buf: Vec::with_capacity(record_bytes(width, height, rgb_included)),
            count: 0,
            bytes: 0,
            blob_crc: crc32fast::Hasher::new(),
        }
    }

    fn mismatch(&self, what: &'static str, got: String, expected: String) -> ContainerError {
        ContainerError::DimMismatch {
            index: self.count as usize,
            what,
            got,
            expected,
        }
    }

    pub fn push(&mut self, s: &SampleTuple) -> Result<(), ContainerError> {
        let (w, h) = (self.width, self.height);
        if (s.histogram.width(), s.histogram.height()) != (w, h) {
            return Err(self.mismatch(
                "histogram",
                format!("{}x{}", s.histogram.width(), s.histogram.height()),
                format!("{w}x{h}"),
            ));
        }
        match (&s.rgb, self.rgb_included) {
            (Some(img), true) if (img.width(), img.height(), img.channels()) != (w, h, 3) => {
                return Err(self.mismatch(
                    "rgb",
                    format!("{}x{}x{}", img.width(), img.height(), img.channels()),
                    format!("{w}x{h}x3"),
                ))
            }
            (None, true) => {
                return Err(self.mismatch("rgb", "absent".into(), format!("{w}x{h}x3")))
            }
            (Some(_), false) => {
                return Err(self.mismatch("rgb", "present".into(), "absent".into()))
            }
            _ => {}
        }

        let buf = &mut self.buf;
        buf.clear();
        buf.extend_from_slice(&s.frame_index.to_le_bytes());
        buf.extend_from_slice(&s.t_evt.to_le_bytes());
        buf.extend_from_slice(&s.action.v.to_le_bytes());
        buf.extend_from_slice(&s.action.w.to_le_bytes());
        buf.push(s.action.held as u8);
        for c in s.histogram.counts() {
            buf.extend_from_slice(&c.to_le_bytes());
        }
        if let Some(img) = &s.rgb {
            buf.extend_from_slice(img.pixels());
        }
        let crc = crc32fast::hash(buf);
        buf.extend_from_slice(&crc.to_le_bytes());

        self.sink.write_all(buf)?;
        self.blob_crc.update(buf);
        self.count += 1;
        self.bytes += buf.len() as u64;
        Ok(())
    }

    /// Flushes and returns `(sample_count, blob_bytes, blob_crc32)`.
    pub fn finish(mut self) -> Result<(u64, u64, u32), ContainerError> {
        self.sink.flush()?;
        Ok((self.count, self.bytes, self.blob_crc.finalize()))
    }
}

pub fn manifest_for(info: &DatasetInfo, count: u64, bytes: u64, crc32: u32) -> DatasetManifest {
    DatasetManifest {
        format_version: FORMAT_VERSION,
        episode: info.episode.clone(),
        dims: Dims {
            height: info.height,
            width: info.width,
            channels: 2,
        },
        rgb_included: info.rgb_included,
        sample_count: count,
        split: info.split,
        label_source: info.label_source,
        record_bytes: record_bytes(info.width, info.height, info.rgb_included) as u64,
        blobs: vec![BlobEntry {
            file: BLOB_FILE.into(),
            bytes,
            crc32,
        }],
    }
}

/// Writes the blob to `blob_sink` and returns the completed manifest.
pub fn write_samples<'a>(
    samples: impl IntoIterator<Item = &'a SampleTuple>,
    info: &DatasetInfo,
    blob_sink: impl Write,
) -> Result<DatasetManifest, ContainerError> {
    let mut writer = DatasetWriter::new(blob_sink, info.width, info.height, info.rgb_included);
    for s in samples {
        writer.push(s)?;
    }
    let (count, bytes, crc) = writer.finish()?;
    Ok(manifest_for(info, count, bytes, crc))
}

/// Writes `manifest.json` and `samples.bin` into `dir`; returns the total
/// number of bytes written.
pub fn write_dataset<'a>(
    samples: impl IntoIterator<Item = &'a SampleTuple>,
    info: &DatasetInfo,
    dir: &Path,
) -> Result<u64, ContainerError> {
    std::fs::create_dir_all(dir)?;
    let blob = BufWriter::new(File::create(dir.join(BLOB_FILE))?);
    let manifest = write_samples(samples, info, blob)?;
    let json = manifest_json(&manifest)?;
    std::fs::write(dir.join(MANIFEST_FILE), &json)?;
    Ok(manifest.blobs[0].bytes + json.len() as u64)
}

pub fn manifest_json(m: &DatasetManifest) -> Result<Vec<u8>, ContainerError> {
    let mut json = serde_json::to_vec_pretty(m)?;
    json.push(b'\n');
    Ok(json)
}

pub fn parse_manifest(src: impl Read) -> Result<DatasetManifest, ContainerError> {
    let m: DatasetManifest = serde_json::from_reader(src)?;
    if m.format_version != FORMAT_VERSION {
        return Err(ContainerError::UnsupportedVersion(m.format_version));
    }
    if m.dims.channels != 2 {
        return Err(ContainerError::ManifestBlobDisagreement(format!(
            "histogram channel count {} is not 2",
            m.dims.channels
        )));
    }
    let plane = m
        .dims
        .width
        .checked_mul(m.dims.height)
        .filter(|&p| p <= 1 << 28);
    let Some(_) = plane else {
        return Err(ContainerError::ManifestBlobDisagreement(format!(
            "implausible dims {}x{}",
            m.dims.width, m.dims.height
        )));
    };
    let expected = record_bytes(m.dims.width, m.dims.height, m.rgb_included) as u64;
    if m.record_bytes != expected {
        return Err(ContainerError::ManifestBlobDisagreement(format!(
            "record_bytes {} but dims imply {expected}",
            m.record_bytes
        )));
    }
    if m.blobs.len() != 1 {
        return Err(ContainerError::ManifestBlobDisagreement(format!(
            "expected one blob entry, found {}",
            m.blobs.len()
        )));
    }
    if m.sample_count.checked_mul(expected) != Some(m.blobs[0].bytes) {
        return Err(ContainerError::ManifestBlobDisagreement(format!(
            "{} samples of {expected} bytes do not fill {} blob bytes",
            m.sample_count, m.blobs[0].bytes
        )));
    }
    Ok(m)
}

/// Streaming record iterator. Each record's CRC is checked as it is read; the
/// blob-level length and CRC are checked once the declared count is consumed.
/// Iteration stops after the first error.
pub struct SampleReader<R: Read> {
    src: R,
    manifest: DatasetManifest,
    buf: Vec<u8>,
    next: u64,
    blob_crc: crc32fast::Hasher,
    done: bool,
}

impl<R: Read> SampleReader<R> {
    pub fn new(manifest: DatasetManifest, src: R) -> Self {
        let len = manifest.record_bytes as usize;
        SampleReader {
            src,
            manifest,
            buf: vec![0; len],
            next: 0,
            blob_crc: crc32fast::Hasher::new(),
            done: false,
        }
    }

    pub fn manifest(&self) -> &DatasetManifest {
        &self.manifest
    }

    fn fill(&mut self) -> io::Result<usize> {
        let mut filled = 0;
        while filled < self.buf.len() {
            match self.src.read(&mut self.buf[filled..]) {
                Ok(0) => break,
                Ok(n) => filled += n,
                Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
                Err(e) => return Err(e),
            }
        }
        Ok(filled)
    }

    fn finish(&mut self) -> Result<(), ContainerError> {
        let mut probe = [0u8; 1];
        loop {
            match self.src.read(&mut probe) {
                Ok(0) => break,
                Ok(_) => {
                    return Err(ContainerError::ManifestBlobDisagreement(
                        "blob has bytes past the declared samples".into(),
                    ))
                }
                Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
                Err(e) => return Err(e.into()),
            }
        }
        let crc = std::mem::take(&mut self.blob_crc).finalize();
        if crc != self.manifest.blobs[0].crc32 {
            return Err(ContainerError::ManifestBlobDisagreement(format!(
                "blob CRC {crc:#010x} differs from manifest {:#010x}",
                self.manifest.blobs[0].crc32
            )));
        }
        Ok(())
    }

    fn read_record(&mut self) -> Result<SampleTuple, ContainerError> {
        let record = self.next;
        let got = self.fill()?;
        if got == 0 {
            return Err(ContainerError::ManifestBlobDisagreement(format!(
                "manifest declares {} samples, blob holds {record}",
                self.manifest.sample_count
            )));
        }
        if got < self.buf.len() {
            return Err(ContainerError::TruncatedBlob { record });
        }
        self.blob_crc.update(&self.buf);
        let body = self.buf.len() - RECORD_CRC_BYTES;
        let stored = u32::from_le_bytes(self.buf[body..].try_into().unwrap());
        if crc32fast::hash(&self.buf[..body]) != stored {
            return Err(ContainerError::ChecksumMismatch { record });
        }
        self.next += 1;
        Ok(decode_record(&self.buf[..body], &self.manifest))
    }
}

fn decode_record(b: &[u8], m: &DatasetManifest) -> SampleTuple {
    let (w, h) = (m.dims.width, m.dims.height);
    let plane = w * h;
    let frame_index = u32::from_le_bytes(b[0..4].try_into().unwrap());
    let t_evt = u64::from_le_bytes(b[4..12].try_into().unwrap());
    let v = f32::from_le_bytes(b[12..16].try_into().unwrap());
    let wv = f32::from_le_bytes(b[16..20].try_into().unwrap());
    let held = b[20] != 0;
    let hist_end = RECORD_PREFIX_BYTES + 4 * plane;
    let counts: Vec<u16> = b[RECORD_PREFIX_BYTES..hist_end]
        .chunks_exact(2)
        .map(|c| u16::from_le_bytes([c[0], c[1]]))
        .collect();
    let saturated = counts.contains(&u16::MAX);
    let histogram = EventHistogram::from_counts(w, h, counts, saturated)
        .expect("record length validated against dims");
    let rgb = m.rgb_included.then(|| {
        ImageBuffer::new(w, h, 3, b[hist_end..hist_end + 3 * plane].to_vec())
            .expect("record length validated against dims")
    });
    SampleTuple {
        frame_index,
        t_evt,
        histogram,
        rgb,
        action: StoredAction { v, w: wv, held },
    }
}

impl<R: Read> Iterator for SampleReader<R> {
    type Item = Result<SampleTuple, ContainerError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        if self.next == self.manifest.sample_count {
            self.done = true;
            return self.finish().err().map(Err);
        }
        let r = self.read_record();
        if r.is_err() {
            self.done = true;
        }
        Some(r)
    }
}

pub fn read_dataset(
    dir: &Path,
) -> Result<(DatasetManifest, SampleReader<BufReader<File>>), ContainerError> {
    let manifest = parse_manifest(BufReader::new(File::open(dir.join(MANIFEST_FILE))?))?;
    let blob_name = &manifest.blobs[0].file;
    if blob_name.contains(['/', '\\']) || blob_name == ".." {
        return Err(ContainerError::ManifestBlobDisagreement(format!(
            "blob name `{blob_name}` escapes the container"
        )));
    }
    let blob = BufReader::new(File::open(dir.join(blob_name))?);
    Ok((manifest.clone(), SampleReader::new(manifest, blob)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios {
            train: 0.8,
            val: 0.1,
            test: 0.1,
        }
    }
}

/// Assigns whole episodes to splits.
///
/// Validation and test each get `round(ratio * n)` episodes (at least one);
/// training gets the rest. Episodes are shuffled with the seed and then cut
/// into three contiguous runs, so every frame of an episode shares its split.
pub fn assign_splits(
    episode_count: usize,
    ratios: SplitRatios,
    seed: u64,
) -> Result<Vec<Split>, ContainerError> {
    let r = [ratios.train, ratios.val, ratios.test];
    if r.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || (r.iter().sum::<f64>() - 1.0).abs() > 1e-9
    {
        return Err(ContainerError::InvalidRatios(r));
    }
    if episode_count < 3 {
        return Err(ContainerError::TooFewEpisodes(episode_count));
    }
    let n = episode_count as f64;
    let mut n_val = ((ratios.val * n).round() as usize).max(1);
    let mut n_test = ((ratios.test * n).round() as usize).max(1);
    while n_val + n_test > episode_count - 1 {
        if n_val >= n_test {
            n_val -= 1;
        } else {
            n_test -= 1;
        }
    }
    let n_train = episode_count - n_val - n_test;

    let mut order: Vec<usize> = (0..episode_count).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut out = vec![Split::Train; episode_count];
    for (pos, &ep) in order.iter().enumerate() {
        out[ep] = if pos < n_train {
            Split::Train
        } else if pos < n_train + n_val {
            Split::Val
        } else {
            Split::Test
        };
    }
    Ok(out)
}
