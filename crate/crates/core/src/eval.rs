//! Error and shape metrics for mapped trajectories.

use std::collections::HashMap;

use nalgebra::DVector;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PositionMetrics {
    pub count: usize,
    pub rmse: f64,
    /// Mean of `estimate - truth`.
    pub bias: DVector<f64>,
}

/// RMSE of the Euclidean error and the mean error vector.
pub fn position_metrics(est: &[DVector<f64>], truth: &[DVector<f64>]) -> Result<PositionMetrics> {
    if est.len() != truth.len() || est.is_empty() {
        return Err(Error::DimensionMismatch(format!(
            "{} estimates vs {} truths",
            est.len(),
            truth.len()
        )));
    }
    let dim = est[0].len();
    let mut sq = 0.0;
    let mut bias = DVector::zeros(dim);
    for (e, t) in est.iter().zip(truth) {
        if e.len() != dim || t.len() != dim {
            return Err(Error::DimensionMismatch("mixed coordinate dimensions".into()));
        }
        let d = e - t;
        sq += d.norm_squared();
        bias += d;
    }
    let n = est.len() as f64;
    Ok(PositionMetrics {
        count: est.len(),
        rmse: (sq / n).sqrt(),
        bias: bias / n,
    })
}

/// Pairs each estimate with the truth sample carrying the same timestamp.
/// Any estimate without a matching truth is an error.
pub fn align_by_timestamp(
    est: &[(i64, DVector<f64>)],
    truth: &[(i64, DVector<f64>)],
) -> Result<(Vec<DVector<f64>>, Vec<DVector<f64>>)> {
    let lookup: HashMap<i64, &DVector<f64>> = truth.iter().map(|(t, r)| (*t, r)).collect();
    let mut e_out = Vec::with_capacity(est.len());
    let mut t_out = Vec::with_capacity(est.len());
    for (ts, e) in est {
        let t = lookup
            .get(ts)
            .ok_or_else(|| Error::invalid(format!("estimate at {ts} ms has no ground truth")))?;
        e_out.push(e.clone());
        t_out.push((*t).clone());
    }
    Ok((e_out, t_out))
}

/// Estimated position of each corner: the mean of the estimates whose true
/// position lies within `radius` of that corner.
pub fn corner_estimates(
    est: &[DVector<f64>],
    truth: &[DVector<f64>],
    corners: &[DVector<f64>],
    radius: f64,
) -> Result<Vec<DVector<f64>>> {
    corners
        .iter()
        .enumerate()
        .map(|(k, c)| {
            let near: Vec<&DVector<f64>> = est
                .iter()
                .zip(truth)
                .filter(|(_, t)| (*t - c).norm() <= radius)
                .map(|(e, _)| e)
                .collect();
            if near.is_empty() {
                return Err(Error::invalid(format!("no samples near corner {}", k + 1)));
            }
            let mut sum = DVector::zeros(near[0].len());
            for e in &near {
                sum += *e;
            }
            Ok(sum / near.len() as f64)
        })
        .collect()
}

/// For corners in order 1-2-3-4: `(|12| + |34|) / (|23| + |41|)`.
pub fn side_length_ratio(corners: &[DVector<f64>]) -> Result<f64> {
    let s = sides(corners)?;
    Ok((s[0] + s[2]) / (s[1] + s[3]))
}

pub fn perimeter(corners: &[DVector<f64>]) -> Result<f64> {
    Ok(sides(corners)?.iter().sum())
}

fn sides(c: &[DVector<f64>]) -> Result<[f64; 4]> {
    if c.len() != 4 {
        return Err(Error::invalid("a quadrilateral needs 4 corners"));
    }
    Ok([0, 1, 2, 3].map(|i| (&c[(i + 1) % 4] - &c[i]).norm()))
}

/// Meters per PCA unit: true perimeter over the PCA-space perimeter.
pub fn pca_scale(pca_corners: &[DVector<f64>], true_corners: &[DVector<f64>]) -> Result<f64> {
    let p = perimeter(pca_corners)?;
    if p == 0.0 {
        return Err(Error::invalid("PCA corners coincide"));
    }
    Ok(perimeter(true_corners)? / p)
}

/// True when the 2-D points visit their centroid in the same cyclic order
/// as `truth`, in either rotational sense (PCA axes may be reflected).
pub fn cyclic_order_matches(points: &[DVector<f64>], truth: &[DVector<f64>]) -> bool {
    fn order(p: &[DVector<f64>]) -> Vec<usize> {
        let n = p.len() as f64;
        let cx = p.iter().map(|v| v[0]).sum::<f64>() / n;
        let cy = p.iter().map(|v| v[1]).sum::<f64>() / n;
        let mut idx: Vec<usize> = (0..p.len()).collect();
        idx.sort_by(|&a, &b| {
            let ta = (p[a][1] - cy).atan2(p[a][0] - cx);
            let tb = (p[b][1] - cy).atan2(p[b][0] - cx);
            ta.total_cmp(&tb)
        });
        idx
    }
    if points.len() != truth.len() || points.len() < 3 || points.iter().chain(truth).any(|v| v.len() < 2) {
        return false;
    }
    let a = order(points);
    let b = order(truth);
    let n = a.len();
    let rotations_of = |seq: &[usize]| (0..n).any(|r| (0..n).all(|i| seq[(i + r) % n] == b[i]));
    let rev: Vec<usize> = a.iter().rev().copied().collect();
    rotations_of(&a) || rotations_of(&rev)
}
