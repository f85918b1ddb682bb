//! Binary dataset container, little-endian throughout:
//!
//! ```text
//! "HGNDS" | u32 version | u32 echo length | echo bytes (UTF-8) | u64 count
//! per sample: u16 H | u16 W | H*W u8 image | 20 f32 landmarks | f32 radius
//!             | f32 theta | f32 phi | u8 domain
//!             | f32 sigma_inj | f32 noise_theta | f32 noise_phi | u8 occluded | u8 blurred
//! ```
//!
//! Labels are held as `f64` in memory and stored as `f32`; a dataset that
//! has been read once survives further write/read cycles unchanged.

use std::fs;
use std::path::Path;

use super::{Dataset, DegradationRecord, Domain, Sample};
use crate::error::{HgnError, Result};
use crate::geometry::{GazeAngles, LandmarkSet, NUM_LANDMARKS};

pub const DATASET_MAGIC: &[u8; 5] = b"HGNDS";
pub const DATASET_VERSION: u32 = 1;

fn put_f32(buf: &mut Vec<u8>, v: f64) {
    buf.extend_from_slice(&(v as f32).to_le_bytes());
}

pub fn encode_dataset(d: &Dataset) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    buf.extend_from_slice(DATASET_MAGIC);
    buf.extend_from_slice(&d.version.to_le_bytes());
    let echo = d.config_echo.as_bytes();
    buf.extend_from_slice(&(echo.len() as u32).to_le_bytes());
    buf.extend_from_slice(echo);
    buf.extend_from_slice(&(d.samples.len() as u64).to_le_bytes());
    for s in &d.samples {
        if s.height > u16::MAX as usize || s.width > u16::MAX as usize || s.image.len() != s.height * s.width {
            return Err(HgnError::Contract(format!("sample image {}x{} cannot be stored", s.height, s.width)));
        }
        buf.extend_from_slice(&(s.height as u16).to_le_bytes());
        buf.extend_from_slice(&(s.width as u16).to_le_bytes());
        buf.extend_from_slice(&s.image);
        for p in &s.landmarks.points {
            put_f32(&mut buf, p[0]);
            put_f32(&mut buf, p[1]);
        }
        put_f32(&mut buf, s.radius);
        put_f32(&mut buf, s.gaze.theta);
        put_f32(&mut buf, s.gaze.phi);
        buf.push(s.domain.tag());
        let r = &s.degradation;
        put_f32(&mut buf, r.sigma_inj);
        put_f32(&mut buf, r.noise_theta);
        put_f32(&mut buf, r.noise_phi);
        buf.push(r.occluded as u8);
        buf.push(r.blurred as u8);
    }
    Ok(buf)
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.data.len() - self.pos < n {
            return Err(HgnError::TruncatedDataset(format!("file ends inside {what} at byte {}", self.pos)));
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn array<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        Ok(self.take(N, what)?.try_into().expect("length checked"))
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.array(what)?))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array(what)?))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array(what)?))
    }

    fn f32(&mut self, what: &str) -> Result<f64> {
        Ok(f32::from_le_bytes(self.array(what)?) as f64)
    }

    fn flag(&mut self, what: &str) -> Result<bool> {
        match self.u8(what)? {
            0 => Ok(false),
            1 => Ok(true),
            v => Err(HgnError::CorruptDataset(format!("{what} flag has value {v}"))),
        }
    }

    fn at_end(&self) -> bool {
        self.pos == self.data.len()
    }
}

pub fn decode_dataset(bytes: &[u8]) -> Result<Dataset> {
    if bytes.len() < DATASET_MAGIC.len() {
        return Err(if DATASET_MAGIC.starts_with(bytes) {
            HgnError::TruncatedDataset("file shorter than the magic bytes".into())
        } else {
            HgnError::CorruptDataset("bad magic bytes".into())
        });
    }
    if &bytes[..5] != DATASET_MAGIC {
        return Err(HgnError::CorruptDataset("bad magic bytes".into()));
    }
    let mut c = Cursor { data: bytes, pos: 5 };
    let version = c.u32("header")?;
    if version != DATASET_VERSION {
        return Err(HgnError::VersionMismatch { found: version, expected: DATASET_VERSION });
    }
    let echo_len = c.u32("header")? as usize;
    let echo = c.take(echo_len, "config echo")?;
    let config_echo = String::from_utf8(echo.to_vec())
        .map_err(|_| HgnError::CorruptDataset("config echo is not UTF-8".into()))?;
    let count = c.u64("header")?;

    let mut samples = Vec::new();
    for i in 0..count {
        if c.at_end() {
            return Err(HgnError::CorruptDataset(format!("header declares {count} samples, payload has {i}")));
        }
        let what = format!("sample {i}");
        let height = c.u16(&what)? as usize;
        let width = c.u16(&what)? as usize;
        let image = c.take(height * width, &what)?.to_vec();
        let mut points = [[0.0; 2]; NUM_LANDMARKS];
        for p in points.iter_mut() {
            *p = [c.f32(&what)?, c.f32(&what)?];
        }
        let radius = c.f32(&what)?;
        let gaze = GazeAngles { theta: c.f32(&what)?, phi: c.f32(&what)? };
        let tag = c.u8(&what)?;
        let domain = Domain::from_tag(tag)
            .ok_or_else(|| HgnError::CorruptDataset(format!("sample {i} has domain tag {tag}")))?;
        let degradation = DegradationRecord {
            sigma_inj: c.f32(&what)?,
            noise_theta: c.f32(&what)?,
            noise_phi: c.f32(&what)?,
            occluded: c.flag(&what)?,
            blurred: c.flag(&what)?,
        };
        samples.push(Sample {
            height,
            width,
            image,
            landmarks: LandmarkSet { points },
            radius,
            gaze,
            domain,
            degradation,
        });
    }
    if !c.at_end() {
        return Err(HgnError::CorruptDataset(format!(
            "{} trailing bytes after the {count} declared samples",
            bytes.len() - c.pos
        )));
    }
    Ok(Dataset { version, config_echo, samples })
}

pub fn write_dataset(d: &Dataset, path: &Path) -> Result<()> {
    fs::write(path, encode_dataset(d)?)?;
    Ok(())
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    decode_dataset(&fs::read(path)?)
}
