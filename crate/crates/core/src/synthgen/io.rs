//! Flat binary dataset container with a JSON manifest sidecar.
//!
//! Layout, little-endian:
//!
//! ```text
//! header  : "SPLB" | version u16 | side u16 | count u64        (16 bytes)
//! record  : label u8 | n_tags u8 | n_tags x (kind u8, value f64) | side² x f64
//! ```

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{DatasetSpec, ImageSample, Label, Tag};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"SPLB";
pub const VERSION: u16 = 1;

/// A named contiguous run of records inside one dataset file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub name: String,
    pub start: usize,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u16,
    pub count: usize,
    pub spec: DatasetSpec,
    pub segments: Vec<Segment>,
}

impl Manifest {
    pub fn segment<'a>(&self, samples: &'a [ImageSample], name: &str) -> Option<&'a [ImageSample]> {
        self.segments
            .iter()
            .find(|s| s.name == name)
            .and_then(|s| samples.get(s.start..s.start + s.len))
    }
}

pub fn manifest_path(path: &Path) -> PathBuf {
    let mut os = path.as_os_str().to_owned();
    os.push(".json");
    PathBuf::from(os)
}

pub fn encode(samples: &[ImageSample], side: usize) -> Result<Vec<u8>> {
    let side16 = u16::try_from(side).map_err(|_| Error::Format(format!("side {side} too large")))?;
    let mut buf = Vec::with_capacity(16 + samples.len() * (2 + side * side * 8));
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&side16.to_le_bytes());
    buf.extend_from_slice(&(samples.len() as u64).to_le_bytes());
    for s in samples {
        if s.side != side || s.pixels.len() != side * side {
            return Err(Error::Format(format!("sample side {} differs from {side}", s.side)));
        }
        buf.push(s.label as u8);
        buf.push(s.tags.len() as u8);
        for t in &s.tags {
            buf.push(t.kind());
            buf.extend_from_slice(&t.value().to_le_bytes());
        }
        for p in &s.pixels {
            buf.extend_from_slice(&p.to_le_bytes());
        }
    }
    Ok(buf)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        let out = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| Error::Format(format!("truncated at byte {}", self.pos)))?;
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn decode(bytes: &[u8]) -> Result<(usize, Vec<ImageSample>)> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(4)? != MAGIC {
        return Err(Error::Format("bad dataset magic".into()));
    }
    let version = u16::from_le_bytes(cur.take(2)?.try_into().expect("2 bytes"));
    if version != VERSION {
        return Err(Error::Format(format!("unsupported dataset version {version}")));
    }
    let side = u16::from_le_bytes(cur.take(2)?.try_into().expect("2 bytes")) as usize;
    let count = u64::from_le_bytes(cur.take(8)?.try_into().expect("8 bytes")) as usize;
    let mut samples = Vec::with_capacity(count.min(1 << 20));
    for i in 0..count {
        let label = Label::from_u8(cur.u8()?)
            .ok_or_else(|| Error::Format(format!("record {i}: bad label")))?;
        let n_tags = cur.u8()?;
        let mut tags = Vec::with_capacity(n_tags as usize);
        for _ in 0..n_tags {
            let kind = cur.u8()?;
            let value = cur.f64()?;
            tags.push(
                Tag::from_parts(kind, value)
                    .ok_or_else(|| Error::Format(format!("record {i}: bad tag kind {kind}")))?,
            );
        }
        let pixels = (0..side * side).map(|_| cur.f64()).collect::<Result<Vec<_>>>()?;
        samples.push(ImageSample {
            side,
            pixels,
            label,
            tags,
        });
    }
    if cur.pos != bytes.len() {
        return Err(Error::Format("trailing bytes after last record".into()));
    }
    Ok((side, samples))
}

/// Writes `<path>` and `<path>.json` through temporary files and renames.
pub fn write_dataset(path: &Path, samples: &[ImageSample], manifest: &Manifest) -> Result<()> {
    let bytes = encode(samples, manifest.spec.side)?;
    write_atomic(path, &bytes)?;
    write_atomic(&manifest_path(path), serde_json::to_string_pretty(manifest)?.as_bytes())
}

pub fn read_dataset(path: &Path) -> Result<(Manifest, Vec<ImageSample>)> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    let (side, samples) = decode(&bytes)?;
    let manifest: Manifest = serde_json::from_slice(&fs::read(manifest_path(path))?)?;
    if manifest.count != samples.len() || manifest.spec.side != side {
        return Err(Error::Format("manifest disagrees with dataset header".into()));
    }
    Ok((manifest, samples))
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthgen::{gen_fake, gen_real, rng_from_seed, simulate_compression, Family};

    #[test]
    fn header_layout() {
        let bytes = encode(&[], 16).unwrap();
        assert_eq!(bytes.len(), 16);
        assert_eq!(&bytes[..4], b"SPLB");
        assert_eq!(u16::from_le_bytes([bytes[4], bytes[5]]), 1);
        assert_eq!(u16::from_le_bytes([bytes[6], bytes[7]]), 16);
        assert_eq!(u64::from_le_bytes(bytes[8..16].try_into().unwrap()), 0);
    }

    #[test]
    fn file_round_trip_is_bit_exact() {
        let spec = DatasetSpec::default();
        let mut rng = rng_from_seed(1);
        let samples = vec![
            simulate_compression(&gen_real(&spec, &mut rng), 40).unwrap(),
            gen_fake(&spec, Family::Improved, &mut rng),
        ];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.splb");
        let manifest = Manifest {
            version: VERSION,
            count: 2,
            spec: spec.clone(),
            segments: vec![Segment {
                name: "all".into(),
                start: 0,
                len: 2,
            }],
        };
        write_dataset(&path, &samples, &manifest).unwrap();
        let (m, back) = read_dataset(&path).unwrap();
        assert_eq!(m, manifest);
        assert_eq!(back, samples);
        assert_eq!(m.segment(&back, "all").unwrap().len(), 2);
    }

    #[test]
    fn truncated_and_corrupt_inputs_fail() {
        let spec = DatasetSpec::default();
        let s = gen_real(&spec, &mut rng_from_seed(2));
        let bytes = encode(&[s], 16).unwrap();
        assert!(decode(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode(&bad).is_err());
        let mut extra = bytes;
        extra.push(0);
        assert!(decode(&extra).is_err());
    }
}
