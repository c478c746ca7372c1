//! Grouping of time-stamped rows onto the segment grid.

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Pooling {
    /// Per-dimension mean; output width D.
    Mean,
    /// Per-dimension mean followed by population std; output width 2D.
    MeanStd,
}

/// Pools the rows of `data` into `n_segments` rows. `segment_of` maps a row
/// index to its segment, or `None` to drop the row.
///
/// A segment that receives no row copies the previous segment's output.
/// Leading empty segments take the first non-empty segment's output.
pub(crate) fn pool_segments(
    data: ArrayView2<'_, f64>,
    n_segments: usize,
    pooling: Pooling,
    segment_of: impl Fn(usize) -> Option<usize>,
) -> Result<Array2<f64>> {
    let dim = data.ncols();
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); n_segments];
    for i in 0..data.nrows() {
        if let Some(t) = segment_of(i) {
            if t < n_segments {
                groups[t].push(i);
            }
        }
    }
    let Some(first_filled) = groups.iter().position(|g| !g.is_empty()) else {
        return Err(Error::invalid("no rows fall inside the segment grid"));
    };

    let width = match pooling {
        Pooling::Mean => dim,
        Pooling::MeanStd => 2 * dim,
    };
    let mut out = Array2::<f64>::zeros((n_segments, width));
    for (t, group) in groups.iter().enumerate() {
        if group.is_empty() {
            if t > first_filled {
                let prev = out.row(t - 1).to_owned();
                out.row_mut(t).assign(&prev);
            }
            continue;
        }
        let n = group.len() as f64;
        let mut row = out.row_mut(t);
        for d in 0..dim {
            // Shifted by the first value so a constant group averages exactly.
            let x0 = data[[group[0], d]];
            let mean = x0 + group.iter().map(|&i| data[[i, d]] - x0).sum::<f64>() / n;
            row[d] = mean;
            if pooling == Pooling::MeanStd {
                let var = group.iter().map(|&i| (data[[i, d]] - mean).powi(2)).sum::<f64>() / n;
                row[dim + d] = var.sqrt();
            }
        }
    }
    let lead = out.row(first_filled).to_owned();
    for t in 0..first_filled {
        out.row_mut(t).assign(&lead);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn fills_gaps_forward_and_backward() {
        let data = array![[1.0], [3.0], [10.0]];
        let seg = [Some(1), Some(1), Some(3)];
        let out = pool_segments(data.view(), 5, Pooling::MeanStd, |i| seg[i]).unwrap();
        assert_eq!(out, array![[2.0, 1.0], [2.0, 1.0], [2.0, 1.0], [10.0, 0.0], [10.0, 0.0]]);
    }

    #[test]
    fn drops_out_of_range_rows() {
        let data = array![[1.0], [5.0]];
        let out = pool_segments(data.view(), 1, Pooling::Mean, |i| Some(i)).unwrap();
        assert_eq!(out, array![[1.0]]);
        assert!(pool_segments(data.view(), 1, Pooling::Mean, |_| None).is_err());
    }
}
