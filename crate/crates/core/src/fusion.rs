//! Decision-level fusion of two prediction tracks.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;

use crate::data::{GoldTrack, PredictionTrack};
use crate::error::{Error, Result};
use crate::metrics::ccc;

/// Smallest and largest searched `w_a`, in hundredths.
pub const GRID_MIN_HUNDREDTHS: usize = 10;
pub const GRID_MAX_HUNDREDTHS: usize = 90;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionWeights {
    pub w_a: f64,
    pub w_b: f64,
    pub dev_ccc: f64,
}

/// Equal inputs are returned unchanged, which the weighted sum does not
/// guarantee in floating point.
fn mix(x: f64, y: f64, w_a: f64) -> f64 {
    if x == y {
        x
    } else {
        w_a * x + (1.0 - w_a) * y
    }
}

/// `w_a·a + (1 − w_a)·b`, element-wise.
pub fn fuse(a: &PredictionTrack, b: &PredictionTrack, w_a: f64) -> Result<PredictionTrack> {
    if a.conversation_id != b.conversation_id {
        return Err(Error::invalid(format!(
            "cannot fuse tracks of {} and {}",
            a.conversation_id, b.conversation_id
        )));
    }
    if a.values.len() != b.values.len() {
        return Err(Error::invalid(format!(
            "{}: track lengths differ ({} vs {})",
            a.conversation_id,
            a.values.len(),
            b.values.len()
        )));
    }
    if !(0.0..=1.0).contains(&w_a) {
        return Err(Error::invalid(format!("w_a = {w_a} outside [0, 1]")));
    }
    Ok(PredictionTrack {
        conversation_id: a.conversation_id.clone(),
        values: a.values.iter().zip(&b.values).map(|(&x, &y)| mix(x, y, w_a)).collect(),
        source: format!("{}+{}", a.source, b.source),
    })
}

/// `w_a` values from 0.10 to 0.90 inclusive, `step` hundredths apart.
pub fn weight_grid(step_hundredths: usize) -> Vec<f64> {
    assert!(step_hundredths > 0);
    (GRID_MIN_HUNDREDTHS..=GRID_MAX_HUNDREDTHS)
        .step_by(step_hundredths)
        .map(|k| k as f64 / 100.0)
        .collect()
}

/// Dev tracks of both modalities matched up by conversation id.
struct Matched {
    a: Vec<f64>,
    b: Vec<f64>,
    gold: Vec<f64>,
}

fn by_id<'a>(name: &str, tracks: &'a [PredictionTrack]) -> Result<BTreeMap<&'a str, &'a PredictionTrack>> {
    let mut map = BTreeMap::new();
    for t in tracks {
        if map.insert(t.conversation_id.as_str(), t).is_some() {
            return Err(Error::invalid(format!("{name}: duplicate track for {}", t.conversation_id)));
        }
    }
    Ok(map)
}

fn match_tracks(
    preds_a: &[PredictionTrack],
    preds_b: &[PredictionTrack],
    gold: &BTreeMap<String, GoldTrack>,
) -> Result<Matched> {
    if gold.is_empty() {
        return Err(Error::invalid("empty dev set"));
    }
    let a = by_id("a", preds_a)?;
    let b = by_id("b", preds_b)?;
    let ids: BTreeSet<&str> = gold.keys().map(String::as_str).collect();
    for (name, map) in [("a", &a), ("b", &b)] {
        let have: BTreeSet<&str> = map.keys().copied().collect();
        if have != ids {
            let missing: Vec<_> = ids.difference(&have).collect();
            let extra: Vec<_> = have.difference(&ids).collect();
            return Err(Error::invalid(format!(
                "{name} tracks do not match the dev set (missing {missing:?}, unexpected {extra:?})"
            )));
        }
    }
    let mut out = Matched {
        a: Vec::new(),
        b: Vec::new(),
        gold: Vec::new(),
    };
    for (id, g) in gold {
        let (ta, tb) = (a[id.as_str()], b[id.as_str()]);
        if ta.values.len() != g.values.len() || tb.values.len() != g.values.len() {
            return Err(Error::invalid(format!(
                "{id}: track lengths {} and {} do not match gold length {}",
                ta.values.len(),
                tb.values.len(),
                g.values.len()
            )));
        }
        out.a.extend_from_slice(&ta.values);
        out.b.extend_from_slice(&tb.values);
        out.gold.extend_from_slice(&g.values);
    }
    Ok(out)
}

/// Concatenated dev CCC of the fused tracks at every weight in `grid`.
pub fn scan_weights(
    preds_a: &[PredictionTrack],
    preds_b: &[PredictionTrack],
    gold: &BTreeMap<String, GoldTrack>,
    grid: &[f64],
) -> Result<Vec<FusionWeights>> {
    let m = match_tracks(preds_a, preds_b, gold)?;
    grid.par_iter()
        .map(|&w_a| {
            if !(0.0..=1.0).contains(&w_a) {
                return Err(Error::invalid(format!("w_a = {w_a} outside [0, 1]")));
            }
            let fused: Vec<f64> = m.a.iter().zip(&m.b).map(|(&x, &y)| mix(x, y, w_a)).collect();
            Ok(FusionWeights {
                w_a,
                w_b: 1.0 - w_a,
                dev_ccc: ccc(&fused, &m.gold)?,
            })
        })
        .collect()
}

/// Highest dev CCC; among equal scores the smallest `w_a` wins.
pub fn select_weights(points: &[FusionWeights]) -> Option<FusionWeights> {
    points.iter().copied().reduce(|best, p| {
        if p.dev_ccc > best.dev_ccc || (p.dev_ccc == best.dev_ccc && p.w_a < best.w_a) {
            p
        } else {
            best
        }
    })
}

/// Exhaustive search over the 81-point grid.
pub fn grid_search_weights(
    preds_a: &[PredictionTrack],
    preds_b: &[PredictionTrack],
    gold: &BTreeMap<String, GoldTrack>,
) -> Result<FusionWeights> {
    Ok(FusionReport::search(preds_a, preds_b, gold)?.selected)
}

/// Every grid point plus the selected weights.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionReport {
    pub points: Vec<FusionWeights>,
    pub selected: FusionWeights,
}

impl FusionReport {
    pub fn search(
        preds_a: &[PredictionTrack],
        preds_b: &[PredictionTrack],
        gold: &BTreeMap<String, GoldTrack>,
    ) -> Result<Self> {
        let points = scan_weights(preds_a, preds_b, gold, &weight_grid(1))?;
        let selected = select_weights(&points).expect("grid is not empty");
        Ok(Self { points, selected })
    }

    /// `w_a,w_b,dev_ccc` for each grid point, then a `selected:` row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("w_a,w_b,dev_ccc\n");
        for p in &self.points {
            out.push_str(&format!("{:.2},{:.2},{}\n", p.w_a, p.w_b, p.dev_ccc));
        }
        let s = &self.selected;
        out.push_str(&format!("selected:{:.2},{:.2},{}\n", s.w_a, s.w_b, s.dev_ccc));
        out
    }
}
