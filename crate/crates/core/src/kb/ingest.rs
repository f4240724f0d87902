use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use flate2::read::MultiGzDecoder;
use serde::{Deserialize, Serialize};

use super::{Concept, FactStore, KbError, RelationKind, StoreBuilder};

/// Row tallies from one ingestion pass.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestDiagnostics {
    pub rows: u64,
    pub malformed: u64,
    pub filtered_relation: u64,
    pub filtered_language: u64,
    pub duplicates: u64,
    pub kept: u64,
}

/// Opens a dump for reading, transparently decompressing gzip input
/// (detected by magic bytes, not by extension).
pub fn open_dump(path: &Path) -> Result<Box<dyn BufRead>, KbError> {
    let ctx = || path.display().to_string();
    let mut file = File::open(path).map_err(|e| KbError::io(ctx(), e))?;
    let mut magic = [0u8; 2];
    let n = file.read(&mut magic).map_err(|e| KbError::io(ctx(), e))?;
    let file = File::open(path).map_err(|e| KbError::io(ctx(), e))?;
    if n == 2 && magic == [0x1f, 0x8b] {
        Ok(Box::new(BufReader::new(MultiGzDecoder::new(file))))
    } else {
        Ok(Box::new(BufReader::new(file)))
    }
}

pub fn parse_dump_file(path: &Path, relations: &[RelationKind]) -> Result<(FactStore, IngestDiagnostics), KbError> {
    let reader = open_dump(path)?;
    parse_dump(reader, relations, &path.display().to_string())
}

/// Ingests tab-separated assertion rows
/// (`assertion-uri, relation-uri, start-uri, end-uri, metadata`).
///
/// Malformed rows are counted and skipped; only a failing reader aborts.
pub fn parse_dump<R: BufRead>(
    mut reader: R,
    relations: &[RelationKind],
    source_name: &str,
) -> Result<(FactStore, IngestDiagnostics), KbError> {
    let mut builder = StoreBuilder::new();
    let mut diag = IngestDiagnostics::default();
    let mut buf = Vec::with_capacity(512);
    loop {
        buf.clear();
        let n = reader
            .read_until(b'\n', &mut buf)
            .map_err(|e| KbError::io(source_name, e))?;
        if n == 0 {
            break;
        }
        let Ok(line) = std::str::from_utf8(&buf) else {
            diag.rows += 1;
            diag.malformed += 1;
            continue;
        };
        let line = line.trim_end_matches(['\n', '\r']);
        if line.is_empty() {
            continue;
        }
        diag.rows += 1;
        match classify_row(line, relations) {
            Row::Malformed => diag.malformed += 1,
            Row::OtherRelation => diag.filtered_relation += 1,
            Row::NonEnglish => diag.filtered_language += 1,
            Row::Edge(c1, r, c2) => {
                if builder.insert(c1, r, c2) {
                    diag.kept += 1;
                } else {
                    diag.duplicates += 1;
                }
            }
        }
    }
    Ok((builder.build(), diag))
}

enum Row {
    Malformed,
    OtherRelation,
    NonEnglish,
    Edge(Concept, RelationKind, Concept),
}

fn classify_row(line: &str, relations: &[RelationKind]) -> Row {
    let mut cols = line.split('\t');
    let (Some(_assertion), Some(rel), Some(start), Some(end)) = (cols.next(), cols.next(), cols.next(), cols.next())
    else {
        return Row::Malformed;
    };
    if !rel.starts_with("/r/") {
        return Row::Malformed;
    }
    let Some(relation) = RelationKind::from_uri(rel).filter(|r| relations.contains(r)) else {
        return Row::OtherRelation;
    };
    let (Some(a), Some(b)) = (parse_concept_uri(start), parse_concept_uri(end)) else {
        return Row::Malformed;
    };
    match (a, b) {
        (ConceptUri::English(c1), ConceptUri::English(c2)) => Row::Edge(c1, relation, c2),
        _ => Row::NonEnglish,
    }
}

enum ConceptUri {
    English(Concept),
    Other,
}

/// `/c/<lang>/<label>[/<pos>[/...]]`
fn parse_concept_uri(uri: &str) -> Option<ConceptUri> {
    let rest = uri.strip_prefix("/c/")?;
    let mut parts = rest.split('/');
    let lang = parts.next().filter(|l| !l.is_empty())?;
    let label = parts.next().filter(|l| !l.is_empty())?;
    if lang != "en" {
        return Some(ConceptUri::Other);
    }
    Concept::new(label).map(ConceptUri::English)
}
