use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use emocont_core::data::{apply_norm, write_annotation_csv, DatasetManifest, NormStats};
use emocont_core::metrics::ScoreReport;
use emocont_core::model::{forward, load_checkpoint};
use emocont_core::Subset;

use super::train::load_labelled;
use crate::config::RunConfig;
use crate::predictions::write_prediction_csv;

#[derive(Debug, Clone)]
pub struct EvalSummary {
    pub dir: PathBuf,
    pub report: ScoreReport,
}

/// Scores a checkpoint on one subset. Writes `report.csv`, one prediction
/// CSV per conversation under `predictions/` and the merged gold traces
/// under `gold/`.
pub fn run_eval(cfg: &RunConfig, subset: Subset, checkpoint: Option<&Path>) -> Result<EvalSummary> {
    let manifest = DatasetManifest::load_unchecked(cfg.manifest_path()?)?;
    let ckpt = checkpoint.map_or_else(|| cfg.model_dir().join("best.serm"), Path::to_path_buf);
    let params = load_checkpoint(&ckpt).with_context(|| format!("loading {}", ckpt.display()))?;
    let norm_path = ckpt.with_file_name("norm.json");
    let stats = NormStats::load(&norm_path).with_context(|| format!("loading {}", norm_path.display()))?;
    if stats.feature_set != cfg.feature_set {
        bail!(
            "{} was fitted on '{}', not '{}'",
            norm_path.display(),
            stats.feature_set,
            cfg.feature_set
        );
    }
    if params.config().input_dim != stats.dim() {
        bail!(
            "checkpoint expects D={} but normalization has D={}",
            params.config().input_dim,
            stats.dim()
        );
    }

    let dir = cfg.eval_dir().join(subset.as_str());
    let pred_dir = dir.join("predictions");
    let gold_dir = dir.join("gold");
    for d in [&pred_dir, &gold_dir] {
        std::fs::create_dir_all(d).with_context(|| format!("creating {}", d.display()))?;
    }
    let mut scored = Vec::new();
    for (rec, fm, gold) in load_labelled(cfg, &manifest, subset)? {
        let fm = apply_norm(&fm, &stats).with_context(|| format!("conversation {}", rec.id))?;
        let track = forward(&params, &fm).with_context(|| format!("conversation {}", rec.id))?;
        write_prediction_csv(&pred_dir.join(format!("{}.csv", rec.id)), &track, rec.segment_ms)?;
        write_annotation_csv(&gold_dir.join(format!("{}.csv", rec.id)), &gold)?;
        scored.push((rec.id, track.values, gold));
    }
    let report = ScoreReport::compute(
        &cfg.dimension,
        scored.iter().map(|(id, p, g)| (id.as_str(), p.as_slice(), g.as_slice())),
    )?;
    report.write_csv(&dir.join("report.csv"))?;
    Ok(EvalSummary { dir, report })
}
