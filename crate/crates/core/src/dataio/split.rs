use super::Dataset;
use crate::error::{DsidError, Result};

/// Returns `(train, test)` where `test` holds exactly the records of `held_out`.
/// Record order is preserved within both parts.
pub fn split_by_subject(ds: &Dataset, held_out: u16) -> Result<(Dataset, Dataset)> {
    let (test, train): (Vec<_>, Vec<_>) = ds
        .records
        .iter()
        .cloned()
        .partition(|r| r.subject_id == held_out);
    if test.is_empty() {
        return Err(DsidError::UnknownSubject(held_out));
    }
    Ok((
        Dataset {
            d_emb: ds.d_emb,
            records: train,
        },
        Dataset {
            d_emb: ds.d_emb,
            records: test,
        },
    ))
}
