//! Score CSV files: `video_id,frame_index,score[,label]`, frame indices
//! 1-based and contiguous per video.

use std::collections::BTreeMap;
use std::path::Path;

use super::ScoreSeries;
use crate::error::{Error, Result};

fn csv_err(path: &Path, e: csv::Error) -> Error {
    let offset = e.position().map_or(0, |p| p.byte());
    Error::format(path.display().to_string(), offset, e.to_string())
}

/// Writes series sorted by video id. Labels are written when every series has them.
pub fn write_score_csv(path: &Path, series: &[ScoreSeries]) -> Result<()> {
    let with_labels = !series.is_empty() && series.iter().all(|s| s.labels.is_some());
    let mut sorted: Vec<&ScoreSeries> = series.iter().collect();
    sorted.sort_by(|a, b| a.video_id.cmp(&b.video_id));
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["video_id", "frame_index", "score"];
    if with_labels {
        header.push("label");
    }
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for s in sorted {
        for (i, score) in s.scores.iter().enumerate() {
            let mut rec = vec![s.video_id.clone(), (i + 1).to_string(), score.to_string()];
            if with_labels {
                rec.push(s.labels.as_ref().unwrap()[i].to_string());
            }
            w.write_record(&rec).map_err(|e| csv_err(path, e))?;
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
    crate::binio::write_file(path, &bytes)
}

struct Row {
    video: String,
    frame: u64,
    value: f64,
    label: Option<u8>,
}

fn read_rows(path: &Path, value_column: Option<&str>) -> Result<Vec<Row>> {
    let mut rd = csv::Reader::from_path(path).map_err(|e| match e.kind() {
        csv::ErrorKind::Io(_) => Error::io(path, std::io::Error::other(e.to_string())),
        _ => csv_err(path, e),
    })?;
    let headers = rd.headers().map_err(|e| csv_err(path, e))?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let missing = |name: &str| {
        Error::format(
            path.display().to_string(),
            0,
            format!("missing column `{name}`"),
        )
    };
    let vid = col("video_id").ok_or_else(|| missing("video_id"))?;
    let frame = col("frame_index").ok_or_else(|| missing("frame_index"))?;
    let value = match value_column {
        Some(name) => Some(col(name).ok_or_else(|| missing(name))?),
        None => None,
    };
    let label = col("label");
    let mut rows = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let at = rec.position().map_or(0, |p| p.byte());
        let bad = |what: &str| Error::format(path.display().to_string(), at, format!("bad {what}"));
        let field = |i: usize| rec.get(i).map(str::trim).unwrap_or("");
        rows.push(Row {
            video: field(vid).to_string(),
            frame: field(frame).parse().map_err(|_| bad("frame_index"))?,
            value: match value {
                Some(i) => field(i).parse().map_err(|_| bad("score"))?,
                None => 0.0,
            },
            label: match label {
                Some(i) if !field(i).is_empty() => {
                    Some(field(i).parse().map_err(|_| bad("label"))?)
                }
                _ => None,
            },
        });
    }
    Ok(rows)
}

fn group(path: &Path, rows: Vec<Row>) -> Result<BTreeMap<String, Vec<Row>>> {
    let mut by_video: BTreeMap<String, Vec<Row>> = BTreeMap::new();
    for r in rows {
        by_video.entry(r.video.clone()).or_default().push(r);
    }
    for (video, rows) in by_video.iter_mut() {
        rows.sort_by_key(|r| r.frame);
        for (i, r) in rows.iter().enumerate() {
            if r.frame != i as u64 + 1 {
                return Err(Error::format(
                    path.display().to_string(),
                    0,
                    format!("video {video}: frame indices must be 1-based and contiguous"),
                ));
            }
        }
    }
    Ok(by_video)
}

/// Reads a score CSV; the `label` column is optional.
pub fn read_score_csv(path: &Path) -> Result<Vec<ScoreSeries>> {
    group(path, read_rows(path, Some("score"))?)?
        .into_iter()
        .map(|(video, rows)| {
            let labels: Option<Vec<u8>> = rows.iter().map(|r| r.label).collect();
            ScoreSeries::new(video, rows.iter().map(|r| r.value).collect(), labels)
        })
        .collect()
}

/// Reads per-frame labels (`video_id,frame_index,label`); any extra columns are ignored.
pub fn read_label_csv(path: &Path) -> Result<BTreeMap<String, Vec<u8>>> {
    group(path, read_rows(path, None)?)?
        .into_iter()
        .map(|(video, rows)| {
            let labels: Option<Vec<u8>> = rows.iter().map(|r| r.label).collect();
            labels
                .map(|l| (video.clone(), l))
                .ok_or_else(|| Error::UndefinedMetric(format!("video {video} has missing labels")))
        })
        .collect()
}

/// Writes `video_id,frame_index,label`.
pub fn write_label_csv(path: &Path, labels: &BTreeMap<String, Vec<u8>>) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["video_id", "frame_index", "label"])
        .map_err(|e| csv_err(path, e))?;
    for (video, l) in labels {
        for (i, v) in l.iter().enumerate() {
            w.write_record([video.clone(), (i + 1).to_string(), v.to_string()])
                .map_err(|e| csv_err(path, e))?;
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
    crate::binio::write_file(path, &bytes)
}

/// One line of the evaluation report.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub stream: String,
    pub scope: String,
    pub video_id: String,
    pub auc: Option<f64>,
    pub score_gap: Option<f64>,
}

/// Writes `stream,scope,video_id,auc,score_gap`; undefined values are left empty.
pub fn write_report_csv(path: &Path, rows: &[ReportRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["stream", "scope", "video_id", "auc", "score_gap"])
        .map_err(|e| csv_err(path, e))?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in rows {
        w.write_record([
            r.stream.clone(),
            r.scope.clone(),
            r.video_id.clone(),
            opt(r.auc),
            opt(r.score_gap),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
    crate::binio::write_file(path, &bytes)
}
