//! Concordance correlation coefficient and the CCC training loss.
//!
//! All moments are population (1/N) moments. CCC is evaluated in covariance
//! form, `2·cov(x,y) / (σx² + σy² + (μx − μy)²)`. When both sequences are
//! constant with equal means the denominator vanishes and CCC is defined as 1.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

struct Moments {
    mean_x: f64,
    mean_y: f64,
    var_x: f64,
    var_y: f64,
    cov: f64,
}

fn is_constant(v: &[f64]) -> bool {
    v.iter().all(|&a| a == v[0])
}

fn moments(x: &[f64], y: &[f64]) -> Result<Moments> {
    if x.len() != y.len() {
        return Err(Error::invalid(format!(
            "ccc needs equal lengths, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::invalid("ccc needs at least two samples"));
    }
    let n = x.len() as f64;
    // Constant inputs get exact zero moments so the degenerate cases are
    // decided by value, not by rounding noise.
    let (const_x, const_y) = (is_constant(x), is_constant(y));
    let mean_x = if const_x { x[0] } else { x.iter().sum::<f64>() / n };
    let mean_y = if const_y { y[0] } else { y.iter().sum::<f64>() / n };
    let (mut var_x, mut var_y, mut cov) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        let (da, db) = (a - mean_x, b - mean_y);
        var_x += da * da;
        var_y += db * db;
        cov += da * db;
    }
    if const_x {
        var_x = 0.0;
        cov = 0.0;
    }
    if const_y {
        var_y = 0.0;
        cov = 0.0;
    }
    Ok(Moments {
        mean_x,
        mean_y,
        var_x: var_x / n,
        var_y: var_y / n,
        cov: cov / n,
    })
}

impl Moments {
    fn denominator(&self) -> f64 {
        let d = self.mean_x - self.mean_y;
        self.var_x + self.var_y + d * d
    }
}

/// Concordance correlation coefficient of two equal-length sequences.
pub fn ccc(x: &[f64], y: &[f64]) -> Result<f64> {
    let m = moments(x, y)?;
    let den = m.denominator();
    if den == 0.0 {
        return Ok(1.0);
    }
    Ok((2.0 * m.cov / den).clamp(-1.0, 1.0))
}

/// `1 − ccc(pred, gold)`, in [0, 2].
pub fn ccc_loss(pred: &[f64], gold: &[f64]) -> Result<f64> {
    Ok(1.0 - ccc(pred, gold)?)
}

/// Mean of per-conversation losses.
pub fn batch_ccc_loss<'a>(pairs: impl IntoIterator<Item = (&'a [f64], &'a [f64])>) -> Result<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for (p, g) in pairs {
        sum += ccc_loss(p, g)?;
        n += 1;
    }
    if n == 0 {
        return Err(Error::invalid("empty batch"));
    }
    Ok(sum / n as f64)
}

/// Gradient of [`ccc_loss`] with respect to every prediction, gold held fixed.
///
/// With `a = cov`, `b` the denominator and `c = 2a/b`:
/// `∂c/∂x_i = 2/(N·b) · ((y_i − μy) − c·(x_i − μy))`.
pub fn ccc_loss_grad(pred: &[f64], gold: &[f64]) -> Result<Vec<f64>> {
    let m = moments(pred, gold)?;
    let den = m.denominator();
    if den == 0.0 {
        return Ok(vec![0.0; pred.len()]);
    }
    let n = pred.len() as f64;
    let c = 2.0 * m.cov / den;
    let scale = 2.0 / (n * den);
    Ok(pred
        .iter()
        .zip(gold)
        .map(|(&x, &y)| -scale * ((y - m.mean_y) - c * (x - m.mean_y)))
        .collect())
}

/// CCC results of one model on one subset.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreReport {
    pub dimension: String,
    /// CCC over the concatenation of every conversation, in listing order.
    pub ccc_concat: f64,
    pub ccc_per_conv: Vec<(String, f64)>,
}

impl ScoreReport {
    /// Scores `(conversation id, predictions, gold)` triples.
    pub fn compute<'a, I>(dimension: &str, items: I) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a str, &'a [f64], &'a [f64])>,
    {
        let mut all_pred = Vec::new();
        let mut all_gold = Vec::new();
        let mut per_conv = Vec::new();
        for (id, pred, gold) in items {
            per_conv.push((id.to_string(), ccc(pred, gold)?));
            all_pred.extend_from_slice(pred);
            all_gold.extend_from_slice(gold);
        }
        if per_conv.is_empty() {
            return Err(Error::invalid("nothing to score"));
        }
        Ok(Self {
            dimension: dimension.to_string(),
            ccc_concat: ccc(&all_pred, &all_gold)?,
            ccc_per_conv: per_conv,
        })
    }

    /// `scope,id,ccc` rows; the concatenated score is listed first under the
    /// dimension name.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("scope,id,ccc\n");
        out.push_str(&format!("concat,{},{}\n", self.dimension, self.ccc_concat));
        for (id, c) in &self.ccc_per_conv {
            out.push_str(&format!("conv,{id},{c}\n"));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_csv().as_bytes()).map_err(|e| Error::io(path, e))
    }
}
