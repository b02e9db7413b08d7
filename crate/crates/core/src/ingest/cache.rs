//! FSRE embedding cache.
//!
//! Little-endian layout:
//!
//! ```text
//! header : "FSRE" | u32 version (=1) | u32 dim
//! record : u64 instance_id | u32 relation_id | u32 m | m*dim f32 (row-major) | u32 crc32
//! ```
//!
//! The CRC-32 (IEEE) covers the record bytes that precede it, from
//! `instance_id` through the last float. Records follow each other with no
//! padding until end of file. Opening a cache scans it once to build an
//! in-memory index; reads are positional so a cache can be shared across
//! threads.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use crate::error::{CacheError, Result};

pub const MAGIC: [u8; 4] = *b"FSRE";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: u64 = 12;
const RECORD_HEAD_LEN: u64 = 16;

pub struct CacheWriter<W: Write> {
    out: W,
    dim: usize,
    records: usize,
}

impl CacheWriter<BufWriter<File>> {
    pub fn create(path: impl AsRef<Path>, dim: usize) -> Result<Self> {
        CacheWriter::new(BufWriter::new(File::create(path)?), dim)
    }
}

impl<W: Write> CacheWriter<W> {
    pub fn new(mut out: W, dim: usize) -> Result<Self> {
        out.write_all(&MAGIC)?;
        out.write_all(&VERSION.to_le_bytes())?;
        out.write_all(&(dim as u32).to_le_bytes())?;
        Ok(CacheWriter { out, dim, records: 0 })
    }

    /// Appends one `m × dim` record given as row-major floats.
    pub fn append(&mut self, instance_id: u64, relation_id: u32, rows: &[f32]) -> Result<()> {
        if self.dim == 0 || !rows.len().is_multiple_of(self.dim) {
            return Err(CacheError::DimMismatch { expected: self.dim, found: rows.len() }.into());
        }
        let m = (rows.len() / self.dim) as u32;
        let mut payload = Vec::with_capacity(RECORD_HEAD_LEN as usize + rows.len() * 4);
        payload.extend_from_slice(&instance_id.to_le_bytes());
        payload.extend_from_slice(&relation_id.to_le_bytes());
        payload.extend_from_slice(&m.to_le_bytes());
        for v in rows {
            payload.extend_from_slice(&v.to_le_bytes());
        }
        let crc = crc32fast::hash(&payload);
        self.out.write_all(&payload)?;
        self.out.write_all(&crc.to_le_bytes())?;
        self.records += 1;
        Ok(())
    }

    pub fn records(&self) -> usize {
        self.records
    }

    pub fn finish(mut self) -> Result<W> {
        self.out.flush()?;
        Ok(self.out)
    }
}

/// Writes every record in one go.
pub fn write_cache<'a, I>(path: impl AsRef<Path>, dim: usize, records: I) -> Result<usize>
where
    I: IntoIterator<Item = (u64, u32, &'a [f32])>,
{
    let mut w = CacheWriter::create(path, dim)?;
    for (id, rel, rows) in records {
        w.append(id, rel, rows)?;
    }
    let n = w.records();
    w.finish()?;
    Ok(n)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RecordInfo {
    pub instance_id: u64,
    pub relation_id: u32,
    pub m: usize,
    /// Byte offset of the record start.
    pub offset: u64,
}

pub struct EmbeddingCache {
    path: PathBuf,
    file: File,
    dim: usize,
    version: u32,
    records: Vec<RecordInfo>,
    index: HashMap<(u64, u32), usize>,
}

impl std::fmt::Debug for EmbeddingCache {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EmbeddingCache")
            .field("path", &self.path)
            .field("dim", &self.dim)
            .field("records", &self.records.len())
            .finish()
    }
}

impl EmbeddingCache {
    /// Opens a cache and rebuilds its index. A record running past the end
    /// of the file is reported as corrupt. Later duplicates of a key shadow
    /// earlier ones.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let mut file = File::open(&path)?;
        let len = file.metadata()?.len();

        let mut header = [0u8; HEADER_LEN as usize];
        file.read_exact(&mut header).map_err(|_| CacheError::Corrupt {
            offset: 0,
            reason: "file shorter than header".into(),
        })?;
        let magic: [u8; 4] = header[0..4].try_into().expect("4 bytes");
        if magic != MAGIC {
            return Err(CacheError::BadMagic(magic).into());
        }
        let version = u32::from_le_bytes(header[4..8].try_into().expect("4 bytes"));
        if version != VERSION {
            return Err(CacheError::BadVersion(version).into());
        }
        let dim = u32::from_le_bytes(header[8..12].try_into().expect("4 bytes")) as usize;

        let mut records = Vec::new();
        let mut index = HashMap::new();
        let mut offset = HEADER_LEN;
        while offset < len {
            if offset + RECORD_HEAD_LEN > len {
                return Err(CacheError::Corrupt { offset, reason: "truncated record header".into() }.into());
            }
            let mut head = [0u8; RECORD_HEAD_LEN as usize];
            file.seek(SeekFrom::Start(offset))?;
            file.read_exact(&mut head)?;
            let instance_id = u64::from_le_bytes(head[0..8].try_into().expect("8 bytes"));
            let relation_id = u32::from_le_bytes(head[8..12].try_into().expect("4 bytes"));
            let m = u32::from_le_bytes(head[12..16].try_into().expect("4 bytes")) as usize;
            let total = RECORD_HEAD_LEN + (m * dim * 4) as u64 + 4;
            if offset + total > len {
                return Err(CacheError::Corrupt {
                    offset,
                    reason: format!("record needs {total} bytes, {} remain", len - offset),
                }
                .into());
            }
            index.insert((instance_id, relation_id), records.len());
            records.push(RecordInfo { instance_id, relation_id, m, offset });
            offset += total;
        }
        Ok(EmbeddingCache { path, file, dim, version, records, index })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn version(&self) -> u32 {
        self.version
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[RecordInfo] {
        &self.records
    }

    pub fn info(&self, instance_id: u64, relation_id: u32) -> Option<&RecordInfo> {
        self.index.get(&(instance_id, relation_id)).map(|&k| &self.records[k])
    }

    /// Reads and checksums one record, returning its `m * dim` floats.
    pub fn read(&self, instance_id: u64, relation_id: u32) -> Result<Vec<f32>> {
        let info = *self.info(instance_id, relation_id).ok_or(CacheError::MissingKey { instance_id, relation_id })?;
        self.read_record(&info)
    }

    pub fn read_record(&self, info: &RecordInfo) -> Result<Vec<f32>> {
        let floats = info.m * self.dim;
        let mut buf = vec![0u8; RECORD_HEAD_LEN as usize + floats * 4 + 4];
        read_at(&self.file, &mut buf, info.offset)?;
        let (payload, crc) = buf.split_at(buf.len() - 4);
        let stored = u32::from_le_bytes(crc.try_into().expect("4 bytes"));
        if crc32fast::hash(payload) != stored {
            return Err(CacheError::Checksum { instance_id: info.instance_id, relation_id: info.relation_id }.into());
        }
        Ok(payload[RECORD_HEAD_LEN as usize..]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
            .collect())
    }

    /// Checksums every record; returns the number of failures.
    pub fn verify(&self) -> usize {
        self.records.iter().filter(|r| self.read_record(r).is_err()).count()
    }
}

#[cfg(unix)]
fn read_at(file: &File, buf: &mut [u8], offset: u64) -> std::io::Result<()> {
    use std::os::unix::fs::FileExt;
    file.read_exact_at(buf, offset)
}

#[cfg(not(unix))]
fn read_at(file: &File, buf: &mut [u8], offset: u64) -> std::io::Result<()> {
    let mut f = file.try_clone()?;
    f.seek(SeekFrom::Start(offset))?;
    f.read_exact(buf)
}
