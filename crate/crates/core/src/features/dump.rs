//! Feature dump files.
//!
//! Binary file, little-endian:
//!
//! ```text
//! "FDMP" u32 version
//! repeated: u16 id length, id (UTF-8), u32 class id, u32 dim, dim x f32
//! ```
//!
//! The text index has one line per record: `offset id class_id dim`, where
//! `offset` is the byte position of the record in the binary file.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::svm::io::Reader;

const MAGIC: &[u8; 4] = b"FDMP";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRecord {
    pub id: String,
    pub class_id: u32,
    pub values: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexEntry {
    pub offset: u64,
    pub id: String,
    pub class_id: u32,
    pub dim: u32,
}

/// Serializes records, returning the binary body and the index text.
pub fn encode(records: &[FeatureRecord]) -> Result<(Vec<u8>, String)> {
    let mut bin = Vec::new();
    bin.extend_from_slice(MAGIC);
    bin.extend_from_slice(&VERSION.to_le_bytes());
    let mut index = String::new();
    for r in records {
        let id_len = u16::try_from(r.id.len()).map_err(|_| Error::Format(format!("id too long: {}", r.id)))?;
        if r.id.contains(char::is_whitespace) {
            return Err(Error::Format(format!("id '{}' contains whitespace", r.id)));
        }
        let dim = u32::try_from(r.values.len()).map_err(|_| Error::Format("record too large".into()))?;
        index.push_str(&format!("{} {} {} {}\n", bin.len(), r.id, r.class_id, dim));
        bin.extend_from_slice(&id_len.to_le_bytes());
        bin.extend_from_slice(r.id.as_bytes());
        bin.extend_from_slice(&r.class_id.to_le_bytes());
        bin.extend_from_slice(&dim.to_le_bytes());
        for v in &r.values {
            bin.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok((bin, index))
}

pub fn decode(bin: &[u8]) -> Result<Vec<FeatureRecord>> {
    let mut r = Reader::new(bin);
    r.expect_magic(MAGIC)?;
    let mut out = Vec::new();
    while !r.is_empty() {
        let id_len = u16::from_le_bytes(r.take(2)?.try_into().unwrap()) as usize;
        let id = String::from_utf8(r.take(id_len)?.to_vec()).map_err(|e| Error::Format(e.to_string()))?;
        let class_id = r.u32()?;
        let dim = r.u32()? as usize;
        let values = r
            .take(4 * dim)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        out.push(FeatureRecord { id, class_id, values });
    }
    Ok(out)
}

pub fn parse_index(text: &str) -> Result<Vec<IndexEntry>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            let f: Vec<&str> = line.split_whitespace().collect();
            let bad = || Error::Format(format!("index line {}: '{line}'", i + 1));
            if f.len() != 4 {
                return Err(bad());
            }
            Ok(IndexEntry {
                offset: f[0].parse().map_err(|_| bad())?,
                id: f[1].to_string(),
                class_id: f[2].parse().map_err(|_| bad())?,
                dim: f[3].parse().map_err(|_| bad())?,
            })
        })
        .collect()
}

/// Writes `<stem>.bin` and `<stem>.idx` into `dir`.
pub fn write_dump(dir: &Path, stem: &str, records: &[FeatureRecord]) -> Result<()> {
    let (bin, index) = encode(records)?;
    let bin_path = dir.join(format!("{stem}.bin"));
    let idx_path = dir.join(format!("{stem}.idx"));
    fs::write(&bin_path, bin).map_err(|e| Error::io(&bin_path, e))?;
    fs::write(&idx_path, index).map_err(|e| Error::io(&idx_path, e))?;
    Ok(())
}

pub fn read_dump(dir: &Path, stem: &str) -> Result<Vec<FeatureRecord>> {
    let bin_path = dir.join(format!("{stem}.bin"));
    let bin = fs::read(&bin_path).map_err(|e| Error::io(&bin_path, e))?;
    decode(&bin)
}
