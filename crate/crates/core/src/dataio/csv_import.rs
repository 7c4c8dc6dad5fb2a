//! CSV import. Header: `subject,true_label,disguised_label,frame_type,e0,...,e{d-1}`.
//! Row numbers in errors count the header as row 1.

use std::io::Read;
use std::path::Path;

use super::{DataError, Dataset, EmbeddingRecord, FrameType};

const FIXED: [&str; 4] = ["subject", "true_label", "disguised_label", "frame_type"];

pub fn import_csv(path: impl AsRef<Path>) -> Result<Dataset, DataError> {
    let file = std::fs::File::open(path)?;
    parse_csv(file)
}

pub fn parse_csv(input: impl Read) -> Result<Dataset, DataError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let mut rows = reader.records();
    let header = match rows.next() {
        Some(h) => h.map_err(|e| DataError::Csv { row: 1, reason: e.to_string() })?,
        None => return Err(DataError::Csv { row: 1, reason: "missing header".into() }),
    };
    let d_emb = header.len().saturating_sub(FIXED.len());
    for (i, name) in header.iter().enumerate() {
        let expected = match FIXED.get(i) {
            Some(f) => f.to_string(),
            None => format!("e{}", i - FIXED.len()),
        };
        if name != expected {
            return Err(DataError::Csv {
                row: 1,
                reason: format!("column {} is {name:?}, expected {expected:?}", i + 1),
            });
        }
    }
    if d_emb == 0 {
        return Err(DataError::Csv { row: 1, reason: "no embedding columns".into() });
    }

    let mut records = Vec::new();
    for (i, row) in rows.enumerate() {
        let row_no = i + 2;
        let err = |reason: String| DataError::Csv { row: row_no, reason };
        let row = row.map_err(|e| err(e.to_string()))?;
        if row.len() != header.len() {
            return Err(err(format!("{} cells, header has {}", row.len(), header.len())));
        }
        let int = |k: usize, max: u32| -> Result<u32, DataError> {
            let cell = &row[k];
            let v: u32 = cell
                .parse()
                .map_err(|_| err(format!("{} {cell:?} is not a non-negative integer", FIXED[k])))?;
            if v > max {
                return Err(err(format!("{} {v} out of range (max {max})", FIXED[k])));
            }
            Ok(v)
        };
        let subject_id = int(0, u16::MAX as u32)? as u16;
        let true_label = int(1, 5)? as u8;
        let disguised_label = int(2, 5)? as u8;
        let frame_type: FrameType = row[3].parse().map_err(err)?;
        let embedding = (FIXED.len()..row.len())
            .map(|k| {
                row[k]
                    .parse::<f32>()
                    .map_err(|_| err(format!("e{} {:?} is not numeric", k - FIXED.len(), &row[k])))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let rec = EmbeddingRecord {
            subject_id,
            true_label,
            disguised_label,
            frame_type,
            embedding,
        };
        rec.validate().map_err(err)?;
        records.push(rec);
    }
    if records.is_empty() {
        return Err(DataError::EmptyDataset);
    }
    Ok(Dataset { d_emb, records })
}
