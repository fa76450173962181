//! Readers and writers for embeddings, partitions, and mixture documents.
//!
//! EMBF layout: `b"EMBF"`, version byte `0x01`, `N: u32 LE`, `d: u32 LE`,
//! then `N * d` little-endian `f32` values, row-major. Embeddings are held as
//! `f64` in memory and narrowed to `f32` on write.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bridge_planner::{BridgeError, BridgeSpec};
use crate::embedding_metrics::{EmbeddingSet, MetricError, Partition};
use crate::factor_model::{FactorError, MixtureModel, SubDatasetFactors};

pub const EMBF_MAGIC: &[u8; 4] = b"EMBF";
pub const EMBF_VERSION: u8 = 1;
const EMBF_HEADER_LEN: usize = 13;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File { path: String, source: io::Error },
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("malformed input: {0}")]
    Parse(String),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Factor(#[from] FactorError),
    #[error(transparent)]
    Bridge(#[from] BridgeError),
}

pub type Result<T> = std::result::Result<T, IoError>;

fn parse_err(msg: impl Into<String>) -> IoError {
    IoError::Parse(msg.into())
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|source| IoError::File {
            path: path.display().to_string(),
            source,
        })
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|source| IoError::File {
            path: path.display().to_string(),
            source,
        })
}

pub fn read_embf<R: Read>(mut reader: R) -> Result<EmbeddingSet> {
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes)?;
    decode_embf(&bytes)
}

pub fn decode_embf(bytes: &[u8]) -> Result<EmbeddingSet> {
    if bytes.len() < EMBF_HEADER_LEN {
        return Err(parse_err(format!(
            "EMBF header needs {EMBF_HEADER_LEN} bytes, got {}",
            bytes.len()
        )));
    }
    if &bytes[..4] != EMBF_MAGIC {
        return Err(parse_err("missing EMBF magic bytes"));
    }
    if bytes[4] != EMBF_VERSION {
        return Err(parse_err(format!("unsupported EMBF version {}", bytes[4])));
    }
    let word =
        |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes")) as usize;
    let (rows, dim) = (word(5), word(9));
    let body = &bytes[EMBF_HEADER_LEN..];
    let expected = rows
        .checked_mul(dim)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| parse_err("EMBF shape overflows"))?;
    if body.len() != expected {
        return Err(parse_err(format!(
            "EMBF declares {rows}x{dim} values ({expected} bytes) but carries {} bytes",
            body.len()
        )));
    }
    let data = body
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("4 bytes"))))
        .collect();
    Ok(EmbeddingSet::new(rows, dim, data)?)
}

pub fn write_embf<W: Write>(mut writer: W, e: &EmbeddingSet) -> Result<()> {
    let narrow = |n: usize| u32::try_from(n).map_err(|_| parse_err("dimension exceeds u32"));
    writer.write_all(EMBF_MAGIC)?;
    writer.write_all(&[EMBF_VERSION])?;
    writer.write_all(&narrow(e.rows())?.to_le_bytes())?;
    writer.write_all(&narrow(e.dim())?.to_le_bytes())?;
    for &x in e.as_slice() {
        writer.write_all(&(x as f32).to_le_bytes())?;
    }
    writer.flush()?;
    Ok(())
}

fn csv_reader<R: Read>(reader: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader)
}

fn csv_err(e: csv::Error) -> IoError {
    parse_err(e.to_string())
}

pub fn read_embeddings_csv<R: Read>(reader: R) -> Result<EmbeddingSet> {
    let mut rdr = csv_reader(reader);
    let headers = rdr.headers().map_err(csv_err)?.clone();
    if headers.is_empty() {
        return Err(parse_err("embedding CSV has no columns"));
    }
    for (i, h) in headers.iter().enumerate() {
        if h != format!("f{i}") {
            return Err(parse_err(format!(
                "embedding CSV column {i} is {h:?}, expected \"f{i}\""
            )));
        }
    }
    let dim = headers.len();
    let mut data = Vec::new();
    let mut rows = 0;
    for record in rdr.records() {
        let record = record.map_err(csv_err)?;
        rows += 1;
        for (col, field) in record.iter().enumerate() {
            let x: f64 = field.parse().map_err(|_| {
                parse_err(format!(
                    "row {rows}, column {col}: {field:?} is not a number"
                ))
            })?;
            data.push(x);
        }
    }
    Ok(EmbeddingSet::new(rows, dim, data)?)
}

/// Values are written with Rust's shortest round-trip formatting.
pub fn write_embeddings_csv<W: Write>(writer: W, e: &EmbeddingSet) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record((0..e.dim()).map(|i| format!("f{i}")))
        .map_err(csv_err)?;
    for row in e.iter_rows() {
        w.write_record(row.iter().map(|x| x.to_string()))
            .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads EMBF when the file starts with the magic bytes, CSV otherwise.
pub fn load_embeddings(path: &Path) -> Result<EmbeddingSet> {
    let mut bytes = Vec::new();
    open(path)?.read_to_end(&mut bytes)?;
    if bytes.starts_with(EMBF_MAGIC) {
        decode_embf(&bytes)
    } else {
        read_embeddings_csv(bytes.as_slice())
    }
}

pub fn save_embf(path: &Path, e: &EmbeddingSet) -> Result<()> {
    write_embf(create(path)?, e)
}

/// Partition CSV with header `index,subdataset`; every row of the
/// embedding set must be assigned exactly once.
pub fn read_partition_csv<R: Read>(reader: R, rows: usize) -> Result<Partition> {
    let mut rdr = csv_reader(reader);
    let headers = rdr.headers().map_err(csv_err)?.clone();
    if headers.iter().collect::<Vec<_>>() != ["index", "subdataset"] {
        return Err(parse_err(format!(
            "partition header must be \"index,subdataset\", got {:?}",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut pairs = Vec::new();
    for (line, record) in rdr.records().enumerate() {
        let record = record.map_err(csv_err)?;
        let index = record[0].parse::<usize>().map_err(|_| {
            parse_err(format!(
                "partition row {}: bad index {:?}",
                line + 1,
                &record[0]
            ))
        })?;
        pairs.push((index, record[1].to_string()));
    }
    Ok(Partition::from_assignments(rows, &pairs)?)
}

pub fn load_partition(path: &Path, rows: usize) -> Result<Partition> {
    read_partition_csv(open(path)?, rows)
}

pub fn write_partition_csv<W: Write>(writer: W, p: &Partition) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["index", "subdataset"]).map_err(csv_err)?;
    for (i, label) in p.labels().iter().enumerate() {
        w.write_record([i.to_string().as_str(), label.as_str()])
            .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Mixture document with an optional bridge intervention.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureDocument {
    pub mixture: MixtureModel,
    pub bridge: Option<BridgeSpec>,
}

#[derive(Serialize, Deserialize)]
struct MixtureJson {
    components: Vec<SubDatasetFactors>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    bridge: Option<BridgeSpec>,
}

pub fn parse_mixture_json(text: &str) -> Result<MixtureDocument> {
    // Distribution invariants are checked during deserialization and
    // surface here as parse errors.
    let doc: MixtureJson = serde_json::from_str(text).map_err(|e| parse_err(e.to_string()))?;
    if let Some(b) = &doc.bridge {
        b.validate()?;
    }
    Ok(MixtureDocument {
        mixture: MixtureModel::new(doc.components)?,
        bridge: doc.bridge,
    })
}

pub fn mixture_to_json(doc: &MixtureDocument) -> String {
    let json = MixtureJson {
        components: doc.mixture.components().to_vec(),
        bridge: doc.bridge.clone(),
    };
    serde_json::to_string_pretty(&json).expect("mixture serializes")
}

pub fn load_mixture(path: &Path) -> Result<MixtureDocument> {
    let mut text = String::new();
    open(path)?.read_to_string(&mut text)?;
    parse_mixture_json(&text)
}
