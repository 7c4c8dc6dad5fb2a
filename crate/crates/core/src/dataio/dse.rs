//! `DSE1` embedding files.
//!
//! ```text
//! header (16 bytes, little-endian)
//!   0   4  magic "DSE1"
//!   4   4  u32 version = 1
//!   8   4  u32 record count n (≥ 1)
//!   12  4  u32 embedding width d_emb (≥ 1)
//! record i at byte 16 + i·(8 + 4·d_emb)
//!   +0  2  u16 subject id
//!   +2  1  u8 true label (0..5)
//!   +3  1  u8 disguised label (0..5, ≠ true label)
//!   +4  1  u8 frame type (0 = onset, 1 = apex)
//!   +5  3  zero padding
//!   +8  4·d_emb  f32 embedding
//! ```

use std::path::Path;

use super::{DataError, Dataset, EmbeddingRecord, FrameType};
use crate::netcore::NUM_CLASSES;

pub const EMBED_MAGIC: &[u8; 4] = b"DSE1";
pub const EMBED_VERSION: u32 = 1;
const HEADER_LEN: usize = 16;

fn stride(d_emb: usize) -> usize {
    8 + 4 * d_emb
}

pub fn encode_embeddings(ds: &Dataset) -> Result<Vec<u8>, DataError> {
    if ds.is_empty() {
        return Err(DataError::EmptyDataset);
    }
    ds.validate()?;
    let to_u32 = |v: usize, what: &str| {
        u32::try_from(v).map_err(|_| DataError::Header {
            offset: 0,
            reason: format!("{what} {v} exceeds u32"),
        })
    };
    let mut out = Vec::with_capacity(HEADER_LEN + ds.len() * stride(ds.d_emb));
    out.extend_from_slice(EMBED_MAGIC);
    out.extend_from_slice(&EMBED_VERSION.to_le_bytes());
    out.extend_from_slice(&to_u32(ds.len(), "record count")?.to_le_bytes());
    out.extend_from_slice(&to_u32(ds.d_emb, "embedding width")?.to_le_bytes());
    for r in &ds.records {
        out.extend_from_slice(&r.subject_id.to_le_bytes());
        out.extend_from_slice(&[r.true_label, r.disguised_label, r.frame_type.code(), 0, 0, 0]);
        for v in &r.embedding {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

fn need(bytes: &[u8], offset: usize, n: usize) -> Result<&[u8], DataError> {
    bytes
        .get(offset..offset + n)
        .ok_or(DataError::Truncated { offset, needed: n })
}

fn read_u32(bytes: &[u8], offset: usize) -> Result<u32, DataError> {
    Ok(u32::from_le_bytes(need(bytes, offset, 4)?.try_into().unwrap()))
}

pub fn decode_embeddings(bytes: &[u8]) -> Result<Dataset, DataError> {
    if bytes.len() < 4 || &bytes[..4] != EMBED_MAGIC {
        return Err(DataError::BadMagic);
    }
    let version = read_u32(bytes, 4)?;
    if version != EMBED_VERSION {
        return Err(DataError::Version { found: version, offset: 4 });
    }
    let n = read_u32(bytes, 8)? as usize;
    let d_emb = read_u32(bytes, 12)? as usize;
    if n == 0 {
        return Err(DataError::Header {
            offset: 8,
            reason: "record count must be ≥ 1".into(),
        });
    }
    if d_emb == 0 {
        return Err(DataError::Header {
            offset: 12,
            reason: "embedding width must be ≥ 1".into(),
        });
    }
    let stride = stride(d_emb);
    let mut records = Vec::with_capacity(n.min(bytes.len() / stride + 1));
    for i in 0..n {
        let base = HEADER_LEN + i * stride;
        let rec = need(bytes, base, stride)?;
        let subject_id = u16::from_le_bytes([rec[0], rec[1]]);
        for (field, k) in [("true_label", 2), ("disguised_label", 3)] {
            if rec[k] as usize >= NUM_CLASSES {
                return Err(DataError::LabelOutOfRange {
                    field,
                    value: rec[k],
                    offset: base + k,
                });
            }
        }
        if rec[2] == rec[3] {
            return Err(DataError::LabelsCoincide {
                label: rec[2],
                offset: base + 2,
            });
        }
        let frame_type = FrameType::from_code(rec[4]).ok_or(DataError::FrameType {
            value: rec[4],
            offset: base + 4,
        })?;
        if let Some(k) = (5..8).find(|&k| rec[k] != 0) {
            return Err(DataError::Padding { offset: base + k });
        }
        let embedding = rec[8..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        records.push(EmbeddingRecord {
            subject_id,
            true_label: rec[2],
            disguised_label: rec[3],
            frame_type,
            embedding,
        });
    }
    let end = HEADER_LEN + n * stride;
    if bytes.len() > end {
        return Err(DataError::Trailing(bytes.len() - end));
    }
    Ok(Dataset { d_emb, records })
}

pub fn write_embeddings(ds: &Dataset, path: impl AsRef<Path>) -> Result<(), DataError> {
    let bytes = encode_embeddings(ds)?;
    std::fs::write(path, bytes)?;
    Ok(())
}

pub fn read_embeddings(path: impl AsRef<Path>) -> Result<Dataset, DataError> {
    decode_embeddings(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn record(subject: u16, t: u8, g: u8, emb: Vec<f32>) -> EmbeddingRecord {
        EmbeddingRecord {
            subject_id: subject,
            true_label: t,
            disguised_label: g,
            frame_type: FrameType::Apex,
            embedding: emb,
        }
    }

    fn three() -> Dataset {
        Dataset::new(
            3,
            vec![
                record(1, 0, 1, vec![0.5, -1.25, 3.0]),
                record(2, 5, 4, vec![f32::MIN_POSITIVE, 0.0, -0.0]),
                record(65535, 3, 0, vec![1e-30, 7.0, f32::MAX]),
            ],
        )
        .unwrap()
    }

    #[test]
    fn three_record_round_trip() {
        let ds = three();
        let bytes = encode_embeddings(&ds).unwrap();
        assert_eq!(bytes.len(), 16 + 3 * 20);
        let back = decode_embeddings(&bytes).unwrap();
        assert_eq!(back.d_emb, 3);
        for (a, b) in back.records.iter().zip(&ds.records) {
            assert_eq!(a.subject_id, b.subject_id);
            let bits = |r: &EmbeddingRecord| r.embedding.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(a), bits(b));
        }
        assert_eq!(back, ds);
    }

    #[test]
    fn parse_errors_name_offsets() {
        assert_eq!(decode_embeddings(b"").unwrap_err(), DataError::BadMagic);
        assert_eq!(decode_embeddings(b"").unwrap_err().to_string(), "bad magic at byte 0");
        assert_eq!(decode_embeddings(b"DSM1xxxx").unwrap_err(), DataError::BadMagic);

        let good = encode_embeddings(&three()).unwrap();
        let mut v = good.clone();
        v[4] = 2;
        assert_eq!(decode_embeddings(&v).unwrap_err(), DataError::Version { found: 2, offset: 4 });

        let mut v = good.clone();
        v[16 + 20 + 3] = 5; // second record: disguised := true label
        let err = decode_embeddings(&v).unwrap_err();
        assert_eq!(err, DataError::LabelsCoincide { label: 5, offset: 38 });
        assert!(err.to_string().contains("labels coincide"));

        let mut v = good.clone();
        v[16 + 2] = 6;
        assert!(matches!(
            decode_embeddings(&v).unwrap_err(),
            DataError::LabelOutOfRange { offset: 18, .. }
        ));

        let mut v = good.clone();
        v[16 + 4] = 2;
        assert_eq!(decode_embeddings(&v).unwrap_err(), DataError::FrameType { value: 2, offset: 20 });

        let mut v = good.clone();
        v[16 + 6] = 1;
        assert_eq!(decode_embeddings(&v).unwrap_err(), DataError::Padding { offset: 22 });

        assert_eq!(
            decode_embeddings(&good[..good.len() - 1]).unwrap_err(),
            DataError::Truncated { offset: 56, needed: 20 }
        );
        assert!(matches!(decode_embeddings(&good[..10]), Err(DataError::Truncated { offset: 8, .. })));

        let mut v = good;
        v.extend_from_slice(&[0, 0]);
        assert_eq!(decode_embeddings(&v).unwrap_err(), DataError::Trailing(2));
    }

    #[test]
    fn writer_rejects_invalid_datasets() {
        let empty = Dataset { d_emb: 3, records: vec![] };
        assert_eq!(encode_embeddings(&empty).unwrap_err(), DataError::EmptyDataset);
        let bad = Dataset {
            d_emb: 2,
            records: vec![record(1, 2, 2, vec![0.0, 0.0])],
        };
        assert!(encode_embeddings(&bad).is_err());
    }

    fn dataset_strategy() -> impl Strategy<Value = Dataset> {
        (1usize..6).prop_flat_map(|d| {
            prop::collection::vec(
                (
                    any::<u16>(),
                    (0u8..6, 1u8..6),
                    any::<bool>(),
                    prop::collection::vec(any::<u32>(), d),
                ),
                1..20,
            )
            .prop_map(move |rows| Dataset {
                d_emb: d,
                records: rows
                    .into_iter()
                    .map(|(s, (t, off), apex, bits)| EmbeddingRecord {
                        subject_id: s,
                        true_label: t,
                        disguised_label: (t + off) % 6,
                        frame_type: if apex { FrameType::Apex } else { FrameType::Onset },
                        embedding: bits.into_iter().map(f32::from_bits).collect(),
                    })
                    .collect(),
            })
        })
    }

    proptest! {
        #[test]
        fn binary_round_trip_is_bitwise(ds in dataset_strategy()) {
            let bytes = encode_embeddings(&ds).unwrap();
            let back = decode_embeddings(&bytes).unwrap();
            prop_assert_eq!(back.records.len(), ds.records.len());
            for (a, b) in back.records.iter().zip(&ds.records) {
                prop_assert_eq!(
                    (a.subject_id, a.true_label, a.disguised_label, a.frame_type),
                    (b.subject_id, b.true_label, b.disguised_label, b.frame_type)
                );
                let ab: Vec<u32> = a.embedding.iter().map(|v| v.to_bits()).collect();
                let bb: Vec<u32> = b.embedding.iter().map(|v| v.to_bits()).collect();
                prop_assert_eq!(ab, bb);
            }
            prop_assert_eq!(encode_embeddings(&back).unwrap(), bytes);
        }
    }
}
