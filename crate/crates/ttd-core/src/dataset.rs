//! Dataset file format.
//!
//! Layout: an 8-byte magic, a little-endian u64 header length, a JSON header
//! (schema version, receiver arclengths per curve, record ids, provenance
//! hash), then `records * m` little-endian f64 difference values, then an
//! optional sealed section holding the hidden ground truth behind its own
//! marker and checksum. Public readers stop at the payload end and return a
//! view without any source coordinates; the sealed section has a separate
//! reader used by harnesses only.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::domain::{BoundaryAtlas, ParamDomain};
use crate::error::{Result, TtdError};
use crate::synthesis::{Dataset, SealedTruth, TtdRecord};

const MAGIC: &[u8; 8] = b"TTDF0001";
const SEALED_MARKER: &[u8; 8] = b"SEALEDv1";
pub const SCHEMA_VERSION: u32 = 1;

/// Boundary knowledge available to the reconstruction side: per-curve total
/// length and receiver arclength coordinates. No planar positions.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct AtlasMeta {
    pub curves: Vec<CurveMeta>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CurveMeta {
    pub length: f64,
    pub receivers: Vec<f64>,
}

impl AtlasMeta {
    pub fn receiver_count(&self) -> usize {
        self.curves.iter().map(|c| c.receivers.len()).sum()
    }

    /// Curve index and local index for a global receiver index.
    pub fn locate(&self, i: usize) -> (usize, usize) {
        let mut base = 0;
        for (ci, c) in self.curves.iter().enumerate() {
            if i < base + c.receivers.len() {
                return (ci, i - base);
            }
            base += c.receivers.len();
        }
        panic!("receiver index {i} out of range");
    }

    pub fn arclength(&self, i: usize) -> f64 {
        let (ci, li) = self.locate(i);
        self.curves[ci].receivers[li]
    }

    /// Wrapped arclength separation on a shared curve, `None` across curves.
    pub fn arc_separation(&self, i: usize, j: usize) -> Option<f64> {
        let (ci, li) = self.locate(i);
        let (cj, lj) = self.locate(j);
        if ci != cj {
            return None;
        }
        let len = self.curves[ci].length;
        let d = (self.curves[ci].receivers[li] - self.curves[cj].receivers[lj]).abs();
        Some(d.min(len - d))
    }

    /// Previous and next receiver (global indices) along the same curve, in
    /// arclength order. Index storage order does not matter.
    pub fn curve_neighbors(&self, i: usize) -> (usize, usize) {
        let (ci, li) = self.locate(i);
        let mut base = 0;
        for c in &self.curves[..ci] {
            base += c.receivers.len();
        }
        let curve = &self.curves[ci];
        let s0 = curve.receivers[li];
        let mut fwd = (li, f64::INFINITY);
        let mut back = (li, f64::INFINITY);
        for (lj, &s) in curve.receivers.iter().enumerate() {
            if lj == li {
                continue;
            }
            let gf = (s - s0).rem_euclid(curve.length);
            let gb = (s0 - s).rem_euclid(curve.length);
            if gf < fwd.1 {
                fwd = (lj, gf);
            }
            if gb < back.1 {
                back = (lj, gb);
            }
        }
        (base + back.0, base + fwd.0)
    }

    /// Median gap between arclength-consecutive receivers over all curves.
    pub fn typical_spacing(&self) -> f64 {
        let mut seps: Vec<f64> = Vec::new();
        for c in &self.curves {
            let mut sorted = c.receivers.clone();
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let n = sorted.len();
            for li in 0..n {
                let a = sorted[li];
                let b = sorted[(li + 1) % n];
                let d = (b - a).rem_euclid(c.length);
                seps.push(d);
            }
        }
        seps.sort_by(|a, b| a.partial_cmp(b).unwrap());
        seps[seps.len() / 2]
    }
}

pub fn atlas_meta(domain: &ParamDomain, atlas: &BoundaryAtlas) -> AtlasMeta {
    let mut curves = Vec::with_capacity(domain.curves.len());
    for (ci, c) in domain.curves.iter().enumerate() {
        let receivers = atlas.curve_ranges[ci]
            .clone()
            .map(|i| atlas.receivers[i].s)
            .collect();
        curves.push(CurveMeta {
            length: c.length(),
            receivers,
        });
    }
    AtlasMeta { curves }
}

/// The reconstruction-side view of a dataset: boundary discretization plus
/// difference records. Nothing else.
#[derive(Debug, Clone)]
pub struct ReconDataset {
    pub atlas: AtlasMeta,
    pub records: Vec<TtdRecord>,
    pub provenance: String,
}

impl ReconDataset {
    pub fn m(&self) -> usize {
        self.atlas.receiver_count()
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    schema_version: u32,
    m: usize,
    curves: Vec<CurveMeta>,
    provenance: String,
    records: Vec<String>,
    noise_sigma: f64,
}

pub fn provenance_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    let out = h.finalize();
    out.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn write_dataset(
    path: &Path,
    meta: &AtlasMeta,
    ds: &Dataset,
    provenance: &str,
    noise_sigma: f64,
    include_sealed: bool,
) -> Result<()> {
    let m = meta.receiver_count();
    for r in &ds.records {
        if r.v.len() != m {
            return Err(TtdError::Data(format!(
                "record {} has {} entries, atlas has {m} receivers",
                r.id,
                r.v.len()
            )));
        }
    }
    let header = Header {
        schema_version: SCHEMA_VERSION,
        m,
        curves: meta.curves.clone(),
        provenance: provenance.to_string(),
        records: ds.records.iter().map(|r| r.id.clone()).collect(),
        noise_sigma,
    };
    let header_json = serde_json::to_vec(&header)?;

    let mut f = fs::File::create(path)?;
    f.write_all(MAGIC)?;
    f.write_all(&(header_json.len() as u64).to_le_bytes())?;
    f.write_all(&header_json)?;
    let mut payload = Vec::with_capacity(ds.records.len() * m * 8);
    for r in &ds.records {
        for v in &r.v {
            payload.extend_from_slice(&v.to_le_bytes());
        }
    }
    f.write_all(&payload)?;

    if include_sealed {
        let sealed_json = serde_json::to_vec(&ds.sealed)?;
        let mut h = Sha256::new();
        h.update(&sealed_json);
        let digest = h.finalize();
        f.write_all(SEALED_MARKER)?;
        f.write_all(&(sealed_json.len() as u64).to_le_bytes())?;
        f.write_all(&digest)?;
        f.write_all(&sealed_json)?;
    }
    Ok(())
}

fn parse_header(bytes: &[u8]) -> Result<(Header, usize)> {
    if bytes.len() < 16 || &bytes[0..8] != MAGIC {
        return Err(TtdError::Format("not a ttd dataset file".into()));
    }
    let hlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    if bytes.len() < 16 + hlen {
        return Err(TtdError::Format("truncated header".into()));
    }
    let header: Header = serde_json::from_slice(&bytes[16..16 + hlen])?;
    if header.schema_version != SCHEMA_VERSION {
        return Err(TtdError::Format(format!(
            "unsupported schema version {}",
            header.schema_version
        )));
    }
    Ok((header, 16 + hlen))
}

/// Read the public section only. The sealed section, if present, is never
/// parsed here.
pub fn read_public(path: &Path) -> Result<ReconDataset> {
    let bytes = fs::read(path)?;
    let (header, offset) = parse_header(&bytes)?;
    let m = header.m;
    let need = header.records.len() * m * 8;
    if bytes.len() < offset + need {
        return Err(TtdError::Format("truncated payload".into()));
    }
    let mut records = Vec::with_capacity(header.records.len());
    for (k, id) in header.records.iter().enumerate() {
        let base = offset + k * m * 8;
        let mut v = Vec::with_capacity(m);
        for i in 0..m {
            let b = &bytes[base + i * 8..base + i * 8 + 8];
            v.push(f64::from_le_bytes(b.try_into().unwrap()));
        }
        records.push(TtdRecord { id: id.clone(), v });
    }
    Ok(ReconDataset {
        atlas: AtlasMeta { curves: header.curves },
        records,
        provenance: header.provenance,
    })
}

/// Read and verify the sealed ground truth. Harness use only.
pub fn read_sealed(path: &Path) -> Result<SealedTruth> {
    let bytes = fs::read(path)?;
    let (header, offset) = parse_header(&bytes)?;
    let payload_end = offset + header.records.len() * header.m * 8;
    if bytes.len() < payload_end + 48 || &bytes[payload_end..payload_end + 8] != SEALED_MARKER {
        return Err(TtdError::Format("no sealed section".into()));
    }
    let slen =
        u64::from_le_bytes(bytes[payload_end + 8..payload_end + 16].try_into().unwrap()) as usize;
    let digest = &bytes[payload_end + 16..payload_end + 48];
    let body = &bytes[payload_end + 48..payload_end + 48 + slen];
    let mut h = Sha256::new();
    h.update(body);
    if h.finalize().as_slice() != digest {
        return Err(TtdError::Format("sealed section checksum mismatch".into()));
    }
    Ok(serde_json::from_slice(body)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthesis::SealedTruth;

    fn toy_meta() -> AtlasMeta {
        AtlasMeta {
            curves: vec![
                CurveMeta {
                    length: 10.0,
                    receivers: vec![0.0, 2.5, 5.0, 7.5],
                },
                CurveMeta {
                    length: 4.0,
                    receivers: vec![0.5, 1.5, 2.5, 3.5],
                },
            ],
        }
    }

    fn toy_dataset() -> Dataset {
        Dataset {
            records: vec![
                TtdRecord {
                    id: "a".into(),
                    v: vec![0.0, 0.125, -0.25, 1.0, 0.3, 0.7, -0.1, 0.0],
                },
                TtdRecord {
                    id: "b".into(),
                    v: vec![0.0, -1.0, 2.0, 0.5, 0.25, -0.125, 0.0, 3.0],
                },
            ],
            sealed: SealedTruth {
                positions: vec![[0.1, 0.2], [0.3, -0.4]],
                emissions: vec![1.0, 2.0],
            },
            rejected: vec![],
        }
    }

    #[test]
    fn public_roundtrip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("toy.ttd");
        let ds = toy_dataset();
        write_dataset(&path, &toy_meta(), &ds, "prov123", 0.0, true).unwrap();
        let back = read_public(&path).unwrap();
        assert_eq!(back.provenance, "prov123");
        assert_eq!(back.atlas, toy_meta());
        assert_eq!(back.records.len(), 2);
        for (orig, got) in ds.records.iter().zip(back.records.iter()) {
            assert_eq!(orig.id, got.id);
            for (a, b) in orig.v.iter().zip(got.v.iter()) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn sealed_section_roundtrip_and_isolation() {
        let dir = tempfile::tempdir().unwrap();
        let with = dir.path().join("with.ttd");
        let without = dir.path().join("without.ttd");
        let ds = toy_dataset();
        write_dataset(&with, &toy_meta(), &ds, "p", 0.0, true).unwrap();
        write_dataset(&without, &toy_meta(), &ds, "p", 0.0, false).unwrap();

        let truth = read_sealed(&with).unwrap();
        assert_eq!(truth, ds.sealed);
        assert!(read_sealed(&without).is_err());

        // the public view is identical whether or not truth is attached
        let a = fs::read(&with).unwrap();
        let b = fs::read(&without).unwrap();
        assert_eq!(&a[..b.len()], &b[..]);
        let pa = read_public(&with).unwrap();
        let pb = read_public(&without).unwrap();
        assert_eq!(pa.records, pb.records);
    }

    #[test]
    fn sealed_corruption_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.ttd");
        write_dataset(&path, &toy_meta(), &toy_dataset(), "p", 0.0, true).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        let n = bytes.len();
        bytes[n - 3] ^= 0x40;
        fs::write(&path, &bytes).unwrap();
        assert!(read_sealed(&path).is_err());
        // public section untouched
        assert!(read_public(&path).is_ok());
    }

    #[test]
    fn atlas_meta_indexing() {
        let m = toy_meta();
        assert_eq!(m.receiver_count(), 8);
        assert_eq!(m.locate(0), (0, 0));
        assert_eq!(m.locate(5), (1, 1));
        assert_eq!(m.arc_separation(0, 3), Some(2.5));
        assert_eq!(m.arc_separation(0, 4), None);
        assert_eq!(m.curve_neighbors(0), (3, 1));
        assert_eq!(m.curve_neighbors(7), (6, 4));
        assert!((m.typical_spacing() - 1.0).abs() < 1.6);
    }

    #[test]
    fn bad_magic_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.ttd");
        fs::write(&path, b"not a dataset").unwrap();
        assert!(matches!(read_public(&path), Err(TtdError::Format(_))));
    }
}
