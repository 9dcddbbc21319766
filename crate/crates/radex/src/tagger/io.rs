//! Binary model serialization.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic            7 bytes  "RADEXM1"
//! version          u32
//! hidden_size      u32
//! embedding_dim    u32
//! vocab_len        u64
//! seed             u64
//! vocab entries    vocab_len x (u32 byte length + UTF-8 bytes), row order
//! embedding matrix vocab_len * dim f64
//! forward block    w_in (h*d), w_rec (h*h), bias (h) f64
//! backward block   same
//! w_out            2 * 2h f64
//! b_out            2 f64
//! ```
//!
//! Floats are written bit-exactly, so save → load → save reproduces
//! identical bytes.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::tagger::model::MODEL_VERSION;
use crate::tagger::{EmbeddingTable, TaggerError, TaggerModel};

pub const MODEL_MAGIC: &[u8; 7] = b"RADEXM1";

impl TaggerModel {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), TaggerError> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<(), TaggerError> {
        w.write_all(MODEL_MAGIC)?;
        w.write_all(&self.version.to_le_bytes())?;
        w.write_all(&(self.hidden_size as u32).to_le_bytes())?;
        w.write_all(&(self.embedding.dim() as u32).to_le_bytes())?;
        w.write_all(&(self.embedding.vocab_size() as u64).to_le_bytes())?;
        w.write_all(&self.seed.to_le_bytes())?;
        for word in self.embedding.words() {
            w.write_all(&(word.len() as u32).to_le_bytes())?;
            w.write_all(word.as_bytes())?;
        }
        write_f64s(w, self.embedding.matrix())?;
        for block in self.param_blocks() {
            write_f64s(w, block)?;
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TaggerError> {
        Self::read_from(&mut BufReader::new(File::open(path)?))
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self, TaggerError> {
        let mut magic = [0u8; 7];
        r.read_exact(&mut magic)?;
        if &magic != MODEL_MAGIC {
            return Err(TaggerError::BadModel(format!(
                "unknown magic {:?}",
                String::from_utf8_lossy(&magic)
            )));
        }
        let version = read_u32(r)?;
        if version != MODEL_VERSION {
            return Err(TaggerError::BadModel(format!(
                "unsupported version {version}"
            )));
        }
        let hidden = read_u32(r)? as usize;
        let dim = read_u32(r)? as usize;
        let vocab_len = read_u64(r)? as usize;
        let seed = read_u64(r)?;
        if hidden == 0 || dim == 0 {
            return Err(TaggerError::BadModel("zero-sized layer".into()));
        }

        let mut words = Vec::with_capacity(vocab_len);
        for _ in 0..vocab_len {
            let len = read_u32(r)? as usize;
            let mut buf = vec![0u8; len];
            r.read_exact(&mut buf)?;
            let word = String::from_utf8(buf)
                .map_err(|e| TaggerError::BadModel(format!("invalid vocab UTF-8: {e}")))?;
            words.push(word);
        }
        let matrix = read_f64s(r, vocab_len * dim)?;
        let embedding = EmbeddingTable::from_rows(words, dim, matrix)?;

        let mut model = TaggerModel::zeroed(embedding, hidden)?;
        for block in model.param_blocks_mut() {
            let len = block.len();
            *block = read_f64s(r, len)?;
        }
        model.seed = seed;
        model.version = version;

        if !model.all_finite() {
            return Err(TaggerError::BadModel("non-finite parameter".into()));
        }
        Ok(model)
    }
}

fn write_f64s(w: &mut impl Write, values: &[f64]) -> std::io::Result<()> {
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_f64s(r: &mut impl Read, count: usize) -> Result<Vec<f64>, TaggerError> {
    let mut buf = vec![0u8; count * 8];
    r.read_exact(&mut buf)?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}

fn read_u32(r: &mut impl Read) -> Result<u32, TaggerError> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u64(r: &mut impl Read) -> Result<u64, TaggerError> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}
