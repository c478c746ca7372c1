use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use emocont_core::data::{apply_norm, fit_norm_stats, ConversationRecord, DatasetManifest, FeatureMatrix, NormStats};
use emocont_core::model::{save_checkpoint, train, EpochRecord, Sequence};
use emocont_core::Subset;

use crate::config::RunConfig;
use crate::features::load_cached;

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub model_dir: PathBuf,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_dev_ccc: f64,
}

/// Cached features plus merged gold for every conversation of `subset`.
pub(crate) fn load_labelled(
    cfg: &RunConfig,
    manifest: &DatasetManifest,
    subset: Subset,
) -> Result<Vec<(ConversationRecord, FeatureMatrix, Vec<f64>)>> {
    let dir = cfg.features_dir();
    manifest
        .require_subset(subset)?
        .into_iter()
        .map(|rec| {
            let fm = load_cached(&dir, rec)?;
            let gold = manifest
                .load_gold(rec, &cfg.dimension)
                .with_context(|| format!("conversation {}", rec.id))?;
            if gold.values.len() != fm.len() {
                bail!(
                    "conversation {}: gold has {} segments but features have {}",
                    rec.id,
                    gold.values.len(),
                    fm.len()
                );
            }
            Ok((rec.clone(), fm, gold.values))
        })
        .collect()
}

fn normalized(items: Vec<(ConversationRecord, FeatureMatrix, Vec<f64>)>, stats: &NormStats) -> Result<Vec<Sequence>> {
    items
        .into_iter()
        .map(|(rec, fm, gold)| {
            let fm = apply_norm(&fm, stats).with_context(|| format!("conversation {}", rec.id))?;
            Ok(Sequence::new(fm, gold)?)
        })
        .collect()
}

/// Fits normalization on train, trains, and writes `best.serm`,
/// `last.serm`, `history.csv`, `norm.json` and `run.json` to the model
/// directory.
pub fn run_train(cfg: &RunConfig, on_epoch: impl FnMut(&EpochRecord)) -> Result<TrainSummary> {
    let manifest = DatasetManifest::load_unchecked(cfg.manifest_path()?)?;
    let train_items = load_labelled(cfg, &manifest, Subset::Train)?;
    let dev_items = load_labelled(cfg, &manifest, Subset::Dev)?;
    let train_fm: Vec<FeatureMatrix> = train_items.iter().map(|(_, fm, _)| fm.clone()).collect();
    let stats = fit_norm_stats(&train_fm)?;
    let input_dim = stats.dim();
    let train_set = normalized(train_items, &stats)?;
    let dev_set = normalized(dev_items, &stats)?;

    let model = cfg.model_config(input_dim);
    let outcome = train(&model, &cfg.train_config(), &train_set, &dev_set, on_epoch)?;

    let dir = cfg.model_dir();
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    save_checkpoint(&outcome.best, &dir.join("best.serm"))?;
    save_checkpoint(&outcome.last, &dir.join("last.serm"))?;
    stats.save(&dir.join("norm.json"))?;
    std::fs::write(dir.join("history.csv"), outcome.record.history_csv())?;
    std::fs::write(dir.join("run.json"), cfg.to_json())?;
    let best = outcome.record.best().expect("at least one epoch");
    Ok(TrainSummary {
        model_dir: dir,
        epochs_run: outcome.record.epochs.len(),
        best_epoch: outcome.record.best_epoch,
        best_dev_ccc: best.dev_ccc,
    })
}
