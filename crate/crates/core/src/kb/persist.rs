//! Binary store file.
//!
//! Layout (little endian):
//!
//! ```text
//! "CCKB"            4 bytes magic
//! version           u8 (currently 1)
//! concept_count     u32, then per concept: u32 byte length + UTF-8 label
//! edge_count        u64, then per edge: u32 c1 id, u8 relation index, u32 c2 id
//! pool_count        u32, then per pool entry: u32 byte length + UTF-8 label
//! checksum          32 bytes, SHA-256 of everything before it
//! ```
//!
//! Concepts are written in id (label) order; indexes are rebuilt on load.

use std::io::{Cursor, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::{Concept, ConceptId, DictionaryPool, FactStore, KbError, RelationKind};
use crate::hashing::sha256;

pub const MAGIC: &[u8; 4] = b"CCKB";
pub const FORMAT_VERSION: u8 = 1;

/// Contents of a store file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StoreFile {
    pub store: FactStore,
    pub pool: DictionaryPool,
}

pub fn encode_store(store: &FactStore, pool: &DictionaryPool) -> Vec<u8> {
    let mut buf = Vec::with_capacity(16 + store.edge_count() * 9);
    buf.extend_from_slice(MAGIC);
    buf.push(FORMAT_VERSION);
    let put_str = |buf: &mut Vec<u8>, s: &str| {
        buf.write_u32::<LittleEndian>(s.len() as u32).unwrap();
        buf.extend_from_slice(s.as_bytes());
    };
    buf.write_u32::<LittleEndian>(store.vocabulary().len() as u32).unwrap();
    for concept in store.vocabulary() {
        put_str(&mut buf, concept.label());
    }
    buf.write_u64::<LittleEndian>(store.edge_count() as u64).unwrap();
    for &(a, r, b) in store.edge_ids() {
        buf.write_u32::<LittleEndian>(a.0).unwrap();
        buf.write_u8(r.index() as u8).unwrap();
        buf.write_u32::<LittleEndian>(b.0).unwrap();
    }
    buf.write_u32::<LittleEndian>(pool.len() as u32).unwrap();
    for concept in pool.entries() {
        put_str(&mut buf, concept.label());
    }
    let digest = sha256(&buf);
    buf.extend_from_slice(&digest);
    buf
}

pub fn decode_store(bytes: &[u8]) -> Result<StoreFile, KbError> {
    let corrupt = |m: &str| KbError::Corrupt(m.to_owned());
    if bytes.len() < MAGIC.len() + 1 + 32 || &bytes[..4] != MAGIC {
        return Err(corrupt("missing CCKB header"));
    }
    if bytes[4] != FORMAT_VERSION {
        return Err(KbError::IncompatibleVersion {
            found: bytes[4],
            expected: FORMAT_VERSION,
        });
    }
    let (body, checksum) = bytes.split_at(bytes.len() - 32);
    if sha256(body) != checksum {
        return Err(corrupt("checksum mismatch"));
    }
    let mut cur = Cursor::new(&body[5..]);
    let truncated = |_| corrupt("truncated body");

    let read_label = |cur: &mut Cursor<&[u8]>| -> Result<Concept, KbError> {
        let len = cur.read_u32::<LittleEndian>().map_err(truncated)? as usize;
        let mut raw = vec![0u8; len];
        cur.read_exact(&mut raw).map_err(truncated)?;
        let label = String::from_utf8(raw).map_err(|_| corrupt("label is not UTF-8"))?;
        Concept::new(&label)
            .filter(|c| c.label() == label)
            .ok_or_else(|| corrupt("label is not normalized"))
    };

    let n_concepts = cur.read_u32::<LittleEndian>().map_err(truncated)? as usize;
    let mut concepts = Vec::with_capacity(n_concepts.min(1 << 24));
    for _ in 0..n_concepts {
        let concept = read_label(&mut cur)?;
        if concepts.last().is_some_and(|prev| prev >= &concept) {
            return Err(corrupt("vocabulary is not strictly sorted"));
        }
        concepts.push(concept);
    }

    let n_edges = cur.read_u64::<LittleEndian>().map_err(truncated)? as usize;
    let mut edges = Vec::with_capacity(n_edges.min(1 << 26));
    for _ in 0..n_edges {
        let a = cur.read_u32::<LittleEndian>().map_err(truncated)?;
        let r = cur.read_u8().map_err(truncated)?;
        let b = cur.read_u32::<LittleEndian>().map_err(truncated)?;
        let relation = RelationKind::from_index(r as usize).ok_or_else(|| corrupt("bad relation index"))?;
        if a as usize >= n_concepts || b as usize >= n_concepts {
            return Err(corrupt("edge endpoint out of range"));
        }
        edges.push((ConceptId(a), relation, ConceptId(b)));
    }

    let n_pool = cur.read_u32::<LittleEndian>().map_err(truncated)? as usize;
    let mut pool = Vec::with_capacity(n_pool.min(1 << 24));
    for _ in 0..n_pool {
        pool.push(read_label(&mut cur)?);
    }
    if cur.position() as usize != body.len() - 5 {
        return Err(corrupt("trailing bytes after pool"));
    }

    Ok(StoreFile {
        store: FactStore::from_parts(concepts, edges),
        pool: DictionaryPool::from_ranked(pool),
    })
}

/// Writes the store atomically (temp file, then rename).
pub fn save_store(store: &FactStore, pool: &DictionaryPool, path: &Path) -> Result<(), KbError> {
    let bytes = encode_store(store, pool);
    let tmp = path.with_extension("tmp");
    let ctx = || path.display().to_string();
    let mut file = std::fs::File::create(&tmp).map_err(|e| KbError::io(ctx(), e))?;
    file.write_all(&bytes).map_err(|e| KbError::io(ctx(), e))?;
    file.sync_all().map_err(|e| KbError::io(ctx(), e))?;
    std::fs::rename(&tmp, path).map_err(|e| KbError::io(ctx(), e))
}

pub fn load_store(path: &Path) -> Result<StoreFile, KbError> {
    let bytes = std::fs::read(path).map_err(|e| KbError::io(path.display().to_string(), e))?;
    decode_store(&bytes)
}
