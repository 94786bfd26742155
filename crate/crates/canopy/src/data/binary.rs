//! Binary dataset layout (little-endian).
//!
//! Header: magic `CNPY`, version `u16`, task tag `u8` (0 = classification,
//! 1 = regression), `n_rows u64`, `n_features u32`, `k u32` (class count,
//! 0 for regression). Payload is row-major: `n_features` `f32` values
//! followed by the label (`u32` class or `f64` target). Bucket files reuse
//! this layout with a trailing block of bootstrap weights (`n_b × u32` per
//! row); the weight block length is implied by the file size.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::data::{Labels, RowBlock, Task};
use crate::error::{Error, Result};

pub const DATASET_MAGIC: [u8; 4] = *b"CNPY";
pub const DATASET_VERSION: u16 = 1;
pub const HEADER_LEN: u64 = 23;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DatasetHeader {
    pub task: Task,
    pub n_rows: u64,
    pub n_features: u32,
}

impl DatasetHeader {
    pub fn row_stride(&self) -> u64 {
        row_stride(self.task, self.n_features)
    }

    pub fn payload_len(&self) -> u64 {
        self.n_rows * self.row_stride()
    }
}

pub fn row_stride(task: Task, n_features: u32) -> u64 {
    let label = match task {
        Task::Classification { .. } => 4,
        Task::Regression => 8,
    };
    4 * n_features as u64 + label
}

pub fn write_header(w: &mut impl Write, header: &DatasetHeader) -> Result<()> {
    w.write_all(&DATASET_MAGIC)?;
    w.write_u16::<LittleEndian>(DATASET_VERSION)?;
    let (tag, k) = match header.task {
        Task::Classification { n_classes } => (0u8, n_classes),
        Task::Regression => (1u8, 0),
    };
    w.write_u8(tag)?;
    w.write_u64::<LittleEndian>(header.n_rows)?;
    w.write_u32::<LittleEndian>(header.n_features)?;
    w.write_u32::<LittleEndian>(k)?;
    Ok(())
}

pub fn read_header(r: &mut impl Read) -> Result<DatasetHeader> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| Error::format("file too short for dataset header"))?;
    if magic != DATASET_MAGIC {
        return Err(Error::format("bad dataset magic"));
    }
    let version = r.read_u16::<LittleEndian>()?;
    if version != DATASET_VERSION {
        return Err(Error::format(format!(
            "unsupported dataset version {version}"
        )));
    }
    let tag = r.read_u8()?;
    let n_rows = r.read_u64::<LittleEndian>()?;
    let n_features = r.read_u32::<LittleEndian>()?;
    let k = r.read_u32::<LittleEndian>()?;
    let task = match tag {
        0 => {
            if k == 0 {
                return Err(Error::format("classification dataset with k = 0"));
            }
            Task::Classification { n_classes: k }
        }
        1 => Task::Regression,
        other => return Err(Error::format(format!("unknown task tag {other}"))),
    };
    if n_features == 0 {
        return Err(Error::format("dataset declares zero features"));
    }
    Ok(DatasetHeader {
        task,
        n_rows,
        n_features,
    })
}

/// Validate header and payload length of a dataset file.
pub fn validate_file(path: &Path) -> Result<DatasetHeader> {
    let mut file = File::open(path)?;
    let header = read_header(&mut file)?;
    if header.n_rows == 0 {
        return Err(Error::format("dataset declares zero rows"));
    }
    let expected = HEADER_LEN + header.payload_len();
    let actual = file.metadata()?.len();
    if actual != expected {
        return Err(Error::Truncated { expected, actual });
    }
    Ok(header)
}

/// Write a whole in-memory block as a dataset file.
pub fn write_dataset(path: &Path, task: Task, block: &RowBlock) -> Result<()> {
    let header = DatasetHeader {
        task,
        n_rows: block.n_rows() as u64,
        n_features: block.n_features() as u32,
    };
    let mut w = BufWriter::new(File::create(path)?);
    write_header(&mut w, &header)?;
    write_rows(&mut w, block)?;
    w.flush()?;
    Ok(())
}

pub fn write_rows(w: &mut impl Write, block: &RowBlock) -> Result<()> {
    let d = block.n_features();
    for i in 0..block.n_rows() {
        for &v in block.row(i) {
            w.write_f32::<LittleEndian>(v)?;
        }
        match block.labels() {
            Labels::Class(labels) => w.write_u32::<LittleEndian>(labels[i])?,
            Labels::Value(labels) => w.write_f64::<LittleEndian>(labels[i])?,
        }
        debug_assert_eq!(block.row(i).len(), d);
    }
    Ok(())
}

pub fn decode_rows(bytes: &[u8], task: Task, n_features: u32, n_rows: usize) -> Result<RowBlock> {
    let stride = row_stride(task, n_features) as usize;
    if bytes.len() != stride * n_rows {
        return Err(Error::Truncated {
            expected: (stride * n_rows) as u64,
            actual: bytes.len() as u64,
        });
    }
    let d = n_features as usize;
    let mut features = Vec::with_capacity(n_rows * d);
    let mut labels = match task {
        Task::Classification { .. } => Labels::Class(Vec::with_capacity(n_rows)),
        Task::Regression => Labels::Value(Vec::with_capacity(n_rows)),
    };
    for row in 0..n_rows {
        let base = row * stride;
        for f in 0..d {
            let off = base + 4 * f;
            features.push(f32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()));
        }
        let off = base + 4 * d;
        match &mut labels {
            Labels::Class(v) => {
                let label = u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap());
                if let Task::Classification { n_classes } = task {
                    if label >= n_classes {
                        return Err(Error::format(format!(
                            "class label {label} outside [0, {n_classes})"
                        )));
                    }
                }
                v.push(label);
            }
            Labels::Value(v) => {
                v.push(f64::from_le_bytes(bytes[off..off + 8].try_into().unwrap()));
            }
        }
    }
    Ok(RowBlock::from_parts(d, features, labels))
}

/// Sequential reader yielding blocks of rows from a dataset file.
pub struct ChunkReader {
    reader: BufReader<File>,
    header: DatasetHeader,
    offset: u64,
}

impl ChunkReader {
    pub fn open(path: &Path) -> Result<Self> {
        let file = File::open(path)?;
        let mut reader = BufReader::new(file);
        let header = read_header(&mut reader)?;
        Ok(ChunkReader {
            reader,
            header,
            offset: HEADER_LEN,
        })
    }

    pub fn header(&self) -> &DatasetHeader {
        &self.header
    }

    pub fn read_rows(&mut self, n: usize) -> Result<RowBlock> {
        let stride = self.header.row_stride() as usize;
        let mut buf = vec![0u8; stride * n];
        self.reader
            .read_exact(&mut buf)
            .map_err(|e| Error::Stream {
                offset: self.offset,
                source: e,
            })?;
        self.offset += buf.len() as u64;
        decode_rows(&buf, self.header.task, self.header.n_features, n)
    }

    /// Read the raw trailing bytes after the row payload (bucket weights).
    pub fn read_trailing(&mut self, len: usize) -> Result<Vec<u8>> {
        let mut buf = vec![0u8; len];
        self.reader
            .read_exact(&mut buf)
            .map_err(|e| Error::Stream {
                offset: self.offset,
                source: e,
            })?;
        self.offset += len as u64;
        Ok(buf)
    }
}

/// Streaming dataset writer: header first (row count patched at the end),
/// then rows appended in order.
pub struct StreamWriter {
    writer: BufWriter<File>,
    task: Task,
    n_features: u32,
    rows_written: u64,
}

impl StreamWriter {
    pub fn create(path: &Path, task: Task, n_features: u32) -> Result<Self> {
        let mut writer = BufWriter::new(File::create(path)?);
        write_header(
            &mut writer,
            &DatasetHeader {
                task,
                n_rows: 0,
                n_features,
            },
        )?;
        Ok(StreamWriter {
            writer,
            task,
            n_features,
            rows_written: 0,
        })
    }

    pub fn append_block(&mut self, block: &RowBlock) -> Result<()> {
        debug_assert_eq!(block.n_features() as u32, self.n_features);
        write_rows(&mut self.writer, block)?;
        self.rows_written += block.n_rows() as u64;
        Ok(())
    }

    /// Flush, patch the header row count (and class count for
    /// classification), and close.
    pub fn finish(mut self, n_classes: Option<u32>) -> Result<u64> {
        self.writer.flush()?;
        let mut file = self.writer.into_inner().map_err(|e| e.into_error())?;
        file.seek(SeekFrom::Start(7))?;
        file.write_u64::<LittleEndian>(self.rows_written)?;
        if let Some(k) = n_classes {
            debug_assert!(matches!(self.task, Task::Classification { .. }));
            file.seek(SeekFrom::Start(19))?;
            file.write_u32::<LittleEndian>(k)?;
        }
        file.sync_data()?;
        Ok(self.rows_written)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_round_trip() {
        let header = DatasetHeader {
            task: Task::Classification { n_classes: 7 },
            n_rows: 123,
            n_features: 54,
        };
        let mut buf = Vec::new();
        write_header(&mut buf, &header).unwrap();
        assert_eq!(buf.len() as u64, HEADER_LEN);
        let back = read_header(&mut buf.as_slice()).unwrap();
        assert_eq!(back, header);
    }

    #[test]
    fn truncated_payload_detected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.cnpy");
        let header = DatasetHeader {
            task: Task::Classification { n_classes: 2 },
            n_rows: 10,
            n_features: 3,
        };
        let mut w = BufWriter::new(File::create(&path).unwrap());
        write_header(&mut w, &header).unwrap();
        // 9 rows of payload instead of the declared 10.
        let row = vec![0u8; header.row_stride() as usize];
        for _ in 0..9 {
            w.write_all(&row).unwrap();
        }
        w.flush().unwrap();
        drop(w);
        match validate_file(&path) {
            Err(Error::Truncated { expected, actual }) => {
                assert_eq!(expected, HEADER_LEN + 10 * header.row_stride());
                assert_eq!(actual, HEADER_LEN + 9 * header.row_stride());
            }
            other => panic!("expected truncation error, got {other:?}"),
        }
    }

    #[test]
    fn rows_round_trip_with_extreme_values() {
        let block = RowBlock::from_parts(
            2,
            vec![1e30, -1e30, 0.0, f32::MIN_POSITIVE],
            Labels::Value(vec![1e300, -0.0]),
        );
        let mut buf = Vec::new();
        write_rows(&mut buf, &block).unwrap();
        let back = decode_rows(&buf, Task::Regression, 2, 2).unwrap();
        assert_eq!(back.features(), block.features());
        assert_eq!(back.labels(), block.labels());
    }
}
