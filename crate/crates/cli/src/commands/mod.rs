//! One function per subcommand. Each takes fully resolved settings and
//! returns a summary; printing and exit codes are left to the binary.

mod eval;
mod fuse;
mod train;

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use emocont_core::data::{read_annotation_csv, DatasetManifest};

pub use eval::{run_eval, EvalSummary};
pub use fuse::{run_fuse, FuseSummary};
pub use train::{run_train, TrainSummary};

use crate::config::RunConfig;
use crate::features::{extract_all, ExtractSummary};
use crate::plot::{render_svg, PlotTrack};
use crate::predictions::{read_prediction_csv, PREDICTION_HEADER};

/// Builds (or confirms) the feature cache of every manifest conversation.
pub fn run_extract(cfg: &RunConfig) -> Result<ExtractSummary> {
    let manifest = DatasetManifest::load_unchecked(cfg.manifest_path()?)?;
    extract_all(&manifest, &cfg.feature_set, cfg.resample_hz, &cfg.features_dir())
}

/// Reads either an annotation CSV or a prediction CSV.
pub fn read_trace(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    if text.lines().next().map(str::trim) == Some(PREDICTION_HEADER) {
        Ok(read_prediction_csv(path, "", "")?.values)
    } else {
        Ok(read_annotation_csv(path, "gold", "")?.values)
    }
}

/// A `LABEL=PATH` argument; a bare path is labelled by its file stem.
pub fn parse_track_arg(arg: &str) -> (String, PathBuf) {
    match arg.split_once('=') {
        Some((label, path)) if !label.is_empty() => (label.to_string(), PathBuf::from(path)),
        _ => {
            let p = PathBuf::from(arg);
            let label = p
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| arg.to_string());
            (label, p)
        }
    }
}

pub fn run_plot(gold: &Path, tracks: &[(String, PathBuf)], out: &Path, title: &str, segment_ms: u64) -> Result<()> {
    let gold = read_trace(gold)?;
    let tracks = tracks
        .iter()
        .map(|(label, p)| {
            Ok(PlotTrack {
                label: label.clone(),
                values: read_trace(p)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let svg = render_svg(title, &gold, &tracks, segment_ms)?;
    if let Some(parent) = out.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(out, svg).with_context(|| format!("writing {}", out.display()))
}
