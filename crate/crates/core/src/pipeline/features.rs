//! Snippet feature files: a binary `FEAT` matrix plus a sidecar index CSV
//! `row,video_id,frame_index` stored next to it as `<stem>.index.csv`.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use crate::binio::{self, Reader};
use crate::error::{Error, Result};
use crate::hash::FeatureVector;

const MAGIC: &[u8; 4] = b"FEAT";
const VERSION: u16 = 1;

/// Location of the index CSV that belongs to a feature file.
pub fn index_path(features: &Path) -> PathBuf {
    features.with_extension("index.csv")
}

pub fn encode_features(features: &[FeatureVector]) -> Result<Vec<u8>> {
    let dim = features.first().map_or(0, |f| f.values.len());
    if features.iter().any(|f| f.values.len() != dim) {
        return Err(Error::invalid("feature rows have different dimensions"));
    }
    let mut out = Vec::with_capacity(14 + features.len() * dim * 4);
    out.extend_from_slice(MAGIC);
    binio::put_u16(&mut out, VERSION);
    binio::put_u32(&mut out, features.len() as u32);
    binio::put_u32(&mut out, dim as u32);
    for f in features {
        binio::put_f32s(&mut out, f.values.iter().map(|&v| v as f32));
    }
    Ok(out)
}

/// Decodes the matrix part; rows come back as plain value vectors.
pub fn decode_matrix(bytes: &[u8]) -> Result<Vec<Vec<f64>>> {
    let mut r = Reader::new(bytes);
    r.expect_magic(MAGIC, "feat header")?;
    r.version(VERSION, "feat header")?;
    let count = r.u32("feat header")? as usize;
    let dim = r.u32("feat header")? as usize;
    let rows = (0..count)
        .map(|i| {
            let row = r.f32_vec(dim, &format!("feat row {i}"))?;
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::format(
                    format!("feat row {i}"),
                    r.offset(),
                    "non-finite value",
                ));
            }
            Ok(row.into_iter().map(f64::from).collect())
        })
        .collect::<Result<Vec<_>>>()?;
    r.finish("feat trailer")?;
    Ok(rows)
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    let offset = e.position().map_or(0, |p| p.byte());
    Error::format(path.display().to_string(), offset, e.to_string())
}

pub fn write_features(path: &Path, features: &[FeatureVector]) -> Result<()> {
    binio::write_file(path, &encode_features(features)?)?;
    let idx = index_path(path);
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["row", "video_id", "frame_index"])
        .map_err(|e| csv_err(&idx, e))?;
    for (i, f) in features.iter().enumerate() {
        w.write_record([i.to_string(), f.video_id.clone(), f.frame_index.to_string()])
            .map_err(|e| csv_err(&idx, e))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
    binio::write_file(&idx, &bytes)
}

#[derive(serde::Deserialize)]
struct IndexRow {
    row: usize,
    video_id: String,
    frame_index: u64,
}

/// Reads a feature file and its index. A missing or malformed file is a format error.
pub fn read_features(path: &Path) -> Result<Vec<FeatureVector>> {
    let bytes = std::fs::read(path).map_err(|e| {
        Error::format(
            path.display().to_string(),
            0,
            format!("cannot read feature file: {e}"),
        )
    })?;
    let rows = decode_matrix(&bytes)?;
    let idx = index_path(path);
    let mut rd = csv::Reader::from_path(&idx).map_err(|e| {
        Error::format(
            idx.display().to_string(),
            0,
            format!("cannot read index: {e}"),
        )
    })?;
    let mut slots: Vec<Option<(String, u64)>> = vec![None; rows.len()];
    let mut seen = HashSet::new();
    for rec in rd.deserialize::<IndexRow>() {
        let rec = rec.map_err(|e| csv_err(&idx, e))?;
        let at = |msg: String| Error::format(idx.display().to_string(), 0, msg);
        if rec.row >= rows.len() {
            return Err(at(format!(
                "row {} out of range for {} features",
                rec.row,
                rows.len()
            )));
        }
        if slots[rec.row].is_some() {
            return Err(at(format!("row {} listed twice", rec.row)));
        }
        if !seen.insert((rec.video_id.clone(), rec.frame_index)) {
            return Err(at(format!(
                "duplicate snippet {}:{}",
                rec.video_id, rec.frame_index
            )));
        }
        slots[rec.row] = Some((rec.video_id, rec.frame_index));
    }
    if let Some(missing) = slots.iter().position(Option::is_none) {
        return Err(Error::format(
            idx.display().to_string(),
            0,
            format!("index has no entry for row {missing}"),
        ));
    }
    Ok(rows
        .into_iter()
        .zip(slots)
        .map(|(values, slot)| {
            let (video, frame) = slot.unwrap();
            FeatureVector::new(video, frame, values)
        })
        .collect())
}
