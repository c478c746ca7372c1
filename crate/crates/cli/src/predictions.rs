//! `segment_index,time_ms,value` prediction files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context, Result};
use emocont_core::PredictionTrack;

pub const PREDICTION_HEADER: &str = "segment_index,time_ms,value";

pub fn prediction_csv(track: &PredictionTrack, segment_ms: u64) -> String {
    let mut out = format!("{PREDICTION_HEADER}\n");
    for (i, v) in track.values.iter().enumerate() {
        writeln!(out, "{i},{},{v}", i as u64 * segment_ms).expect("string write");
    }
    out
}

pub fn write_prediction_csv(path: &Path, track: &PredictionTrack, segment_ms: u64) -> Result<()> {
    std::fs::write(path, prediction_csv(track, segment_ms)).with_context(|| format!("writing {}", path.display()))
}

pub fn read_prediction_csv(path: &Path, conversation_id: &str, source: &str) -> Result<PredictionTrack> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(PREDICTION_HEADER) {
        bail!("{}: expected header '{PREDICTION_HEADER}'", path.display());
    }
    let mut values = Vec::new();
    for (k, line) in lines.enumerate() {
        let line_no = k + 2;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            bail!("{} line {line_no}: expected 3 fields, found {}", path.display(), fields.len());
        }
        let idx: usize = fields[0]
            .trim()
            .parse()
            .with_context(|| format!("{} line {line_no}: bad segment index", path.display()))?;
        if idx != values.len() {
            bail!("{} line {line_no}: segment index {idx} out of sequence", path.display());
        }
        let v: f64 = fields[2]
            .trim()
            .parse()
            .with_context(|| format!("{} line {line_no}: bad value", path.display()))?;
        if !v.is_finite() {
            bail!("{} line {line_no}: non-finite value", path.display());
        }
        values.push(v);
    }
    Ok(PredictionTrack {
        conversation_id: conversation_id.to_string(),
        values,
        source: source.to_string(),
    })
}

/// Every `<id>.csv` in `dir`, keyed by id.
pub fn read_prediction_dir(dir: &Path, source: &str) -> Result<BTreeMap<String, PredictionTrack>> {
    let mut out = BTreeMap::new();
    let entries = std::fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))?;
    for entry in entries {
        let path = entry?.path();
        if path.extension().is_some_and(|e| e == "csv") {
            let id = path
                .file_stem()
                .and_then(|s| s.to_str())
                .context("prediction file name is not UTF-8")?
                .to_string();
            let track = read_prediction_csv(&path, &id, source)?;
            out.insert(id, track);
        }
    }
    Ok(out)
}
