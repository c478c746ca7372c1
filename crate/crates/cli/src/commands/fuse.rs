use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use emocont_core::data::{write_annotation_csv, DatasetManifest, GoldTrack};
use emocont_core::fusion::{fuse, FusionReport};
use emocont_core::metrics::ScoreReport;
use emocont_core::{PredictionTrack, Subset};

use crate::config::RunConfig;
use crate::predictions::{read_prediction_dir, write_prediction_csv};

#[derive(Debug, Clone)]
pub struct FuseSummary {
    pub dir: PathBuf,
    pub report: FusionReport,
    /// Score of the fused test predictions, when both test sets were present.
    pub test_report: Option<ScoreReport>,
}

fn label_of(dir: &Path) -> String {
    dir.file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "preds".into())
}

/// Tracks of `subset` from an eval directory, restricted to the manifest's
/// conversations of that subset. Fails listing every missing conversation.
fn subset_tracks(eval_dir: &Path, subset: Subset, ids: &[String]) -> Result<Vec<PredictionTrack>> {
    let dir = eval_dir.join(subset.as_str()).join("predictions");
    let mut all = read_prediction_dir(&dir, &label_of(eval_dir))?;
    let missing: Vec<&str> = ids.iter().filter(|id| !all.contains_key(*id)).map(String::as_str).collect();
    if !missing.is_empty() {
        bail!("{} lacks predictions for {}", dir.display(), missing.join(", "));
    }
    Ok(ids.iter().map(|id| all.remove(id).expect("checked")).collect())
}

fn gold_map(cfg: &RunConfig, manifest: &DatasetManifest, subset: Subset) -> Result<BTreeMap<String, GoldTrack>> {
    manifest
        .require_subset(subset)?
        .into_iter()
        .map(|rec| {
            let g = manifest
                .load_gold(rec, &cfg.dimension)
                .with_context(|| format!("conversation {}", rec.id))?;
            Ok((rec.id.clone(), g))
        })
        .collect()
}

/// Searches fusion weights on dev predictions from two eval directories
/// (`<dir>/dev/predictions`) and, when both have test predictions, writes
/// the fused test tracks.
pub fn run_fuse(cfg: &RunConfig, preds_a: &Path, preds_b: &Path) -> Result<FuseSummary> {
    let manifest = DatasetManifest::load_unchecked(cfg.manifest_path()?)?;
    let dev_gold = gold_map(cfg, &manifest, Subset::Dev)?;
    let dev_ids: Vec<String> = dev_gold.keys().cloned().collect();
    let a = subset_tracks(preds_a, Subset::Dev, &dev_ids)?;
    let b = subset_tracks(preds_b, Subset::Dev, &dev_ids)?;
    let report = FusionReport::search(&a, &b, &dev_gold)?;
    let w_a = report.selected.w_a;

    let dir = cfg
        .out
        .join("fusion")
        .join(format!("{}+{}", label_of(preds_a), label_of(preds_b)));
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    std::fs::write(dir.join("report.csv"), report.to_csv())?;

    let segment_ms = |id: &str| manifest.get(id).map_or(0, |r| r.segment_ms);
    let write_fused = |subset: Subset, a: &[PredictionTrack], b: &[PredictionTrack]| -> Result<Vec<PredictionTrack>> {
        let pred_dir = dir.join(subset.as_str()).join("predictions");
        std::fs::create_dir_all(&pred_dir)?;
        a.iter()
            .zip(b)
            .map(|(x, y)| {
                let f = fuse(x, y, w_a)?;
                write_prediction_csv(&pred_dir.join(format!("{}.csv", f.conversation_id)), &f, segment_ms(&f.conversation_id))?;
                Ok(f)
            })
            .collect()
    };
    write_fused(Subset::Dev, &a, &b)?;

    let has_test = |d: &Path| d.join(Subset::Test.as_str()).join("predictions").is_dir();
    let mut test_report = None;
    if has_test(preds_a) && has_test(preds_b) && manifest.subset(Subset::Test).next().is_some() {
        let test_gold = gold_map(cfg, &manifest, Subset::Test)?;
        let ids: Vec<String> = test_gold.keys().cloned().collect();
        let ta = subset_tracks(preds_a, Subset::Test, &ids)?;
        let tb = subset_tracks(preds_b, Subset::Test, &ids)?;
        let fused = write_fused(Subset::Test, &ta, &tb)?;
        let gold_dir = dir.join(Subset::Test.as_str()).join("gold");
        std::fs::create_dir_all(&gold_dir)?;
        for (id, g) in &test_gold {
            write_annotation_csv(&gold_dir.join(format!("{id}.csv")), &g.values)?;
        }
        let r = ScoreReport::compute(
            &cfg.dimension,
            fused
                .iter()
                .map(|f| (f.conversation_id.as_str(), f.values.as_slice(), test_gold[&f.conversation_id].values.as_slice())),
        )?;
        r.write_csv(&dir.join(Subset::Test.as_str()).join("report.csv"))?;
        test_report = Some(r);
    }
    Ok(FuseSummary {
        dir,
        report,
        test_report,
    })
}
