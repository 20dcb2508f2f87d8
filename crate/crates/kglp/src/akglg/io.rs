//! Binary model file.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic               8 bytes  b"AKGLG1\0\0"
//! group kind          u8       0 = sign, 1 = circle, 2 = line
//! dim                 u32      coordinates per embedding (n)
//! num_entities        u32
//! num_relations_raw   u32      directed slots are twice this
//! seed                u64
//! dataset_hash        32 bytes SHA-256 of the interned dataset
//! entity names        num_entities × (u32 len + UTF-8 bytes)
//! relation names      num_relations_raw × (u32 len + UTF-8 bytes)
//! entity attention    num_entities · n            f64 rows
//! relation attention  2 · num_relations_raw · n   f64 rows (2r, 2r+1 order)
//! entity points       num_entities · n · w        f64 rows
//! relation points     2 · num_relations_raw · n · w f64 rows
//! ```
//!
//! where `w` is 1 for sign/line and 2 for circle (re, im interleaved).

use super::{AkglgModel, GroupKind};
use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use thiserror::Error;

const MAGIC: &[u8; 8] = b"AKGLG1\0\0";

#[derive(Error, Debug)]
pub enum ModelIoError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("bad model file {path}: {reason}")]
    Format { path: String, reason: String },
}

impl AkglgModel {
    pub fn save(&self, path: &Path) -> Result<(), ModelIoError> {
        let io_err = |e: std::io::Error| ModelIoError::Io {
            path: path.display().to_string(),
            source: e,
        };
        let file = fs::File::create(path).map_err(io_err)?;
        let mut w = BufWriter::new(file);
        let mut write = |bytes: &[u8]| w.write_all(bytes).map_err(io_err);
        write(MAGIC)?;
        write(&[match self.kind() {
            GroupKind::Sign => 0u8,
            GroupKind::Circle => 1,
            GroupKind::Line => 2,
        }])?;
        write(&(self.dim() as u32).to_le_bytes())?;
        write(&(self.num_entities() as u32).to_le_bytes())?;
        write(&(self.relation_names().len() as u32).to_le_bytes())?;
        write(&self.seed().to_le_bytes())?;
        write(&self.dataset_hash())?;
        for name in self.entity_names().iter().chain(self.relation_names()) {
            write(&(name.len() as u32).to_le_bytes())?;
            write(name.as_bytes())?;
        }
        for values in [
            &self.entity_attention,
            &self.relation_attention,
            &self.entity_points,
            &self.relation_points,
        ] {
            for v in values.iter() {
                write(&v.to_le_bytes())?;
            }
        }
        w.flush().map_err(io_err)
    }

    pub fn load(path: &Path) -> Result<AkglgModel, ModelIoError> {
        let io_err = |e: std::io::Error| ModelIoError::Io {
            path: path.display().to_string(),
            source: e,
        };
        let bad = |reason: &str| ModelIoError::Format {
            path: path.display().to_string(),
            reason: reason.to_string(),
        };
        let file = fs::File::open(path).map_err(io_err)?;
        let mut r = BufReader::new(file);

        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(io_err)?;
        if &magic != MAGIC {
            return Err(bad("wrong magic"));
        }
        let mut byte = [0u8; 1];
        r.read_exact(&mut byte).map_err(io_err)?;
        let kind = match byte[0] {
            0 => GroupKind::Sign,
            1 => GroupKind::Circle,
            2 => GroupKind::Line,
            k => return Err(bad(&format!("unknown group kind {k}"))),
        };
        let mut u32buf = [0u8; 4];
        let mut read_u32 = |r: &mut BufReader<fs::File>| -> Result<u32, ModelIoError> {
            r.read_exact(&mut u32buf).map_err(io_err)?;
            Ok(u32::from_le_bytes(u32buf))
        };
        let dim = read_u32(&mut r)? as usize;
        let num_entities = read_u32(&mut r)? as usize;
        let num_relations_raw = read_u32(&mut r)? as usize;
        let mut u64buf = [0u8; 8];
        r.read_exact(&mut u64buf).map_err(io_err)?;
        let seed = u64::from_le_bytes(u64buf);
        let mut dataset_hash = [0u8; 32];
        r.read_exact(&mut dataset_hash).map_err(io_err)?;

        let mut read_names = |count: usize| -> Result<Vec<String>, ModelIoError> {
            let mut names = Vec::with_capacity(count);
            for _ in 0..count {
                let mut lenbuf = [0u8; 4];
                r.read_exact(&mut lenbuf).map_err(io_err)?;
                let len = u32::from_le_bytes(lenbuf) as usize;
                let mut bytes = vec![0u8; len];
                r.read_exact(&mut bytes).map_err(io_err)?;
                names.push(String::from_utf8(bytes).map_err(|_| bad("name is not UTF-8"))?);
            }
            Ok(names)
        };
        let entity_names = read_names(num_entities)?;
        let relation_names = read_names(num_relations_raw)?;

        let width = kind.width();
        let nr = num_relations_raw * 2;
        let mut read_f64s = |count: usize| -> Result<Vec<f64>, ModelIoError> {
            let mut bytes = vec![0u8; count * 8];
            r.read_exact(&mut bytes).map_err(io_err)?;
            Ok(bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect())
        };
        let entity_attention = read_f64s(num_entities * dim)?;
        let relation_attention = read_f64s(nr * dim)?;
        let entity_points = read_f64s(num_entities * dim * width)?;
        let relation_points = read_f64s(nr * dim * width)?;
        let mut rest = Vec::new();
        r.read_to_end(&mut rest).map_err(io_err)?;
        if !rest.is_empty() {
            return Err(bad("trailing bytes"));
        }

        Ok(AkglgModel::new(
            kind,
            dim,
            entity_attention,
            relation_attention,
            entity_points,
            relation_points,
            entity_names,
            relation_names,
            dataset_hash,
            seed,
        ))
    }
}
