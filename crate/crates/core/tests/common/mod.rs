//! Independent reference computations shared by the integration tests.
//! None of these call into the library's numerical kernels.
#![allow(dead_code)]

use std::collections::HashMap;

use doafuse_core::center::{JoinConfig, WireRecord};
use doafuse_core::fusion::{concat_doas, CalibrationSet, ConcatenatedDoa};
use doafuse_core::sim::ArrayPose;
use doafuse_core::DoaVector;
use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform direction on the `z >= 0` half-sphere.
pub fn random_doa<R: Rng>(rng: &mut R) -> DoaVector {
    loop {
        let v: Vector3<f64> = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(0.0..1.0),
        );
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            let u = v / n;
            return DoaVector::new(u.x, u.y, u.z).unwrap();
        }
    }
}

pub fn random_concat<R: Rng>(rng: &mut R, m: usize, ts: i64) -> ConcatenatedDoa {
    let doas: Vec<Option<DoaVector>> = (0..m).map(|_| Some(random_doa(rng))).collect();
    concat_doas(&doas, ts).unwrap()
}

/// One-sided Jacobi SVD of `a`. Returns singular values (descending) and
/// the matching left singular vectors as columns.
///
/// Rotations act on the columns of `a^T`, so the accumulated right
/// rotations of `a^T` are the left singular vectors of `a`.
pub fn jacobi_svd(a: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let (m, n) = a.shape();
    // work = a^T stored column-major as m columns of length n
    let mut cols: Vec<Vec<f64>> = (0..m).map(|i| (0..n).map(|j| a[(i, j)]).collect()).collect();
    let mut v: Vec<Vec<f64>> = (0..m).map(|i| (0..m).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    for _sweep in 0..100 {
        let mut rotated = false;
        for p in 0..m {
            for q in p + 1..m {
                let alpha: f64 = cols[p].iter().map(|x| x * x).sum();
                let beta: f64 = cols[q].iter().map(|x| x * x).sum();
                let gamma: f64 = cols[p].iter().zip(&cols[q]).map(|(x, y)| x * y).sum();
                if gamma.abs() <= 1e-15 * (alpha * beta).sqrt() || gamma == 0.0 {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for k in 0..n {
                    let (x, y) = (cols[p][k], cols[q][k]);
                    cols[p][k] = c * x - s * y;
                    cols[q][k] = s * x + c * y;
                }
                for k in 0..m {
                    let (x, y) = (v[p][k], v[q][k]);
                    v[p][k] = c * x - s * y;
                    v[q][k] = s * x + c * y;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut sv: Vec<(f64, usize)> = cols
        .iter()
        .enumerate()
        .map(|(i, c)| (c.iter().map(|x| x * x).sum::<f64>().sqrt(), i))
        .collect();
    sv.sort_by(|a, b| b.0.total_cmp(&a.0));
    let u = DMatrix::from_fn(m, m, |r, c| v[sv[c].1][r]);
    (sv.iter().map(|s| s.0).collect(), u)
}

/// Least-squares fitted values `X (X^+ y)` for each column of `y^T`,
/// computed from a modified Gram-Schmidt basis of the column space of `x`.
/// Columns that are numerically dependent are skipped.
pub fn qr_fitted_values(x: &DMatrix<f64>, y: &DMatrix<f64>) -> DMatrix<f64> {
    let (rows, cols) = x.shape();
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let scale = (0..cols)
        .map(|j| (0..rows).map(|i| x[(i, j)].powi(2)).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    for j in 0..cols {
        let mut v: Vec<f64> = (0..rows).map(|i| x[(i, j)]).collect();
        for _pass in 0..2 {
            for q in &basis {
                let d: f64 = q.iter().zip(&v).map(|(a, b)| a * b).sum();
                for (vi, qi) in v.iter_mut().zip(q) {
                    *vi -= d * qi;
                }
            }
        }
        let n: f64 = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if n > 1e-9 * scale {
            basis.push(v.iter().map(|a| a / n).collect());
        }
    }
    let mut out = DMatrix::zeros(y.nrows(), y.ncols());
    for k in 0..y.nrows() {
        let target: Vec<f64> = (0..y.ncols()).map(|l| y[(k, l)]).collect();
        for q in &basis {
            let d: f64 = q.iter().zip(&target).map(|(a, b)| a * b).sum();
            for l in 0..y.ncols() {
                out[(k, l)] += d * q[l];
            }
        }
    }
    out
}

/// Least-squares intersection of the rays `p_m + t g_m` for the active
/// arrays, where `g_m` is the global direction of array `m`'s DOA.
pub fn triangulate(poses: &[ArrayPose], d: &ConcatenatedDoa) -> Option<Vector3<f64>> {
    let mut a = Matrix3::zeros();
    let mut b = Vector3::zeros();
    let mut used = 0;
    for (m, pose) in poses.iter().enumerate() {
        if let Some(local) = d.subvector(m) {
            let g = pose.orientation * local.as_vector();
            let proj = Matrix3::identity() - g * g.transpose();
            a += proj;
            b += proj * pose.position;
            used += 1;
        }
    }
    if used < 2 {
        return None;
    }
    a.lu().solve(&b)
}

/// Bin assignment by explicit origin and integer division on a
/// non-negative offset, grouping with a hash map.
pub fn brute_force_join(
    records: &[WireRecord],
    cfg: &JoinConfig,
) -> Vec<(i64, Vec<Option<[f64; 3]>>)> {
    let corrected: Vec<(i64, &WireRecord)> = records
        .iter()
        .filter(|r| (r.array_id as usize) < cfg.array_count)
        .map(|r| {
            let off = cfg.offsets_ms.get(r.array_id as usize).copied().unwrap_or(0);
            (r.timestamp_ms - off, r)
        })
        .collect();
    let Some(min_t) = corrected.iter().map(|(t, _)| *t).min() else {
        return Vec::new();
    };
    let mut origin = min_t - min_t.rem_euclid(cfg.bin_ms);
    while origin > min_t {
        origin -= cfg.bin_ms;
    }
    let mut groups: HashMap<i64, Vec<[f64; 3]>> = HashMap::new();
    for (t, r) in &corrected {
        let idx = (t - origin) / cfg.bin_ms;
        let g = groups.entry(idx).or_insert_with(|| vec![[0.0; 3]; cfg.array_count]);
        let s = &mut g[r.array_id as usize];
        s[0] += r.dx;
        s[1] += r.dy;
        s[2] += r.dz;
    }
    let mut out: Vec<(i64, Vec<Option<[f64; 3]>>)> = groups
        .into_iter()
        .map(|(idx, sums)| {
            let per: Vec<Option<[f64; 3]>> = sums
                .into_iter()
                .map(|s| {
                    let n = (s[0] * s[0] + s[1] * s[1] + s[2] * s[2]).sqrt();
                    (n > 0.0).then(|| [s[0] / n, s[1] / n, s[2] / n])
                })
                .collect();
            (origin + idx * cfg.bin_ms, per)
        })
        .filter(|(_, per)| per.iter().any(Option::is_some))
        .collect();
    out.sort_by_key(|(b, _)| *b);
    out
}

/// Lag `k` maximizing `sum_n x[n] y[n + k]`, refined by band-limited
/// interpolation of the cross-correlation sequence.
pub fn cross_correlation_lag(x: &[f64], y: &[f64], max_lag: i64) -> f64 {
    let n = x.len() as i64;
    let corr = |k: i64| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            let j = i + k;
            if j >= 0 && j < n {
                s += x[i as usize] * y[j as usize];
            }
        }
        s
    };
    let lags: Vec<i64> = (-max_lag - 40..=max_lag + 40).collect();
    let r: Vec<f64> = lags.iter().map(|&k| corr(k)).collect();
    let interp = |tau: f64| -> f64 {
        lags.iter()
            .zip(&r)
            .map(|(&k, &rk)| {
                let x = tau - k as f64;
                let s = if x.abs() < 1e-12 { 1.0 } else { (std::f64::consts::PI * x).sin() / (std::f64::consts::PI * x) };
                rk * s
            })
            .sum()
    };
    let mut best = -max_lag as f64;
    let mut best_v = f64::MIN;
    let mut t = -max_lag as f64;
    while t <= max_lag as f64 {
        let v = interp(t);
        if v > best_v {
            best_v = v;
            best = t;
        }
        t += 0.01;
    }
    let (mut lo, mut hi) = (best - 0.01, best + 0.01);
    for _ in 0..60 {
        let m1 = lo + (hi - lo) / 3.0;
        let m2 = hi - (hi - lo) / 3.0;
        if interp(m1) < interp(m2) {
            lo = m1;
        } else {
            hi = m2;
        }
    }
    0.5 * (lo + hi)
}

/// Direct DFT of a real sequence, all `N` bins.
pub fn dft(x: &[f64]) -> Vec<(f64, f64)> {
    let n = x.len();
    (0..n)
        .map(|k| {
            let mut re = 0.0;
            let mut im = 0.0;
            for (t, &v) in x.iter().enumerate() {
                let a = -std::f64::consts::TAU * ((k * t) % n) as f64 / n as f64;
                re += v * a.cos();
                im += v * a.sin();
            }
            (re, im)
        })
        .collect()
}

/// Steered power for one direction from the textbook formula: PHAT
/// cross-spectra over the symmetric bin set `-N/2..=N/2` (the Nyquist bin
/// split evenly between `+N/2` and `-N/2`), steered with
/// `exp(j 2 pi tau k / N)` where `tau = t_p - t_q` is the arrival-time
/// difference in samples. Returns the complex sum.
pub fn literal_srp(
    frames: &[Vec<f64>],
    mic_positions: &[Vector3<f64>],
    doa: &Vector3<f64>,
    fs: f64,
    c: f64,
) -> (f64, f64) {
    let n = frames[0].len();
    let win: Vec<f64> = (0..n)
        .map(|i| 0.5 - 0.5 * (std::f64::consts::TAU * i as f64 / n as f64).cos())
        .collect();
    let spectra: Vec<Vec<(f64, f64)>> = frames
        .iter()
        .map(|f| dft(&f.iter().zip(&win).map(|(a, b)| a * b).collect::<Vec<_>>()))
        .collect();
    // arrival time of mic p relative to the array origin: -m_p.d / c
    let arrival: Vec<f64> = mic_positions.iter().map(|m| -fs * m.dot(doa) / c).collect();
    let (mut re, mut im) = (0.0, 0.0);
    let half = n as i64 / 2;
    for p in 0..frames.len() {
        for q in p + 1..frames.len() {
            let tau = arrival[p] - arrival[q];
            for k in -half..=half {
                let w = if k.abs() == half { 0.5 } else { 1.0 };
                let idx = k.rem_euclid(n as i64) as usize;
                let (a, b) = (spectra[p][idx], spectra[q][idx]);
                // X_p conj(X_q)
                let gr = a.0 * b.0 + a.1 * b.1;
                let gi = a.1 * b.0 - a.0 * b.1;
                let mag = (a.0.hypot(a.1)) * (b.0.hypot(b.1));
                if mag < 1e-12 {
                    continue;
                }
                let ph = std::f64::consts::TAU * tau * k as f64 / n as f64;
                let (s, cph) = ph.sin_cos();
                re += w * (gr * cph - gi * s) / mag;
                im += w * (gr * s + gi * cph) / mag;
            }
        }
    }
    (re / n as f64, im / n as f64)
}

/// Exact-affine data: random `r0*`, `B*` and per-array unit DOAs.
pub struct ExactAffine {
    pub r0: DVector<f64>,
    pub b: DMatrix<f64>,
}

impl ExactAffine {
    pub fn random<R: Rng>(rng: &mut R, n: usize, m: usize) -> Self {
        ExactAffine {
            r0: DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0)),
            b: DMatrix::from_fn(n, 3 * m, |_, _| rng.random_range(-1.0..1.0)),
        }
    }

    pub fn map(&self, d: &DVector<f64>) -> DVector<f64> {
        &self.r0 + &self.b * d
    }

    /// One column per observation, each its own calibration point.
    pub fn calibration(&self, obs: &[ConcatenatedDoa]) -> CalibrationSet {
        let locs: Vec<DVector<f64>> = obs.iter().map(|o| self.map(&o.as_dvector())).collect();
        CalibrationSet::from_columns(self.r0.len(), obs, &locs).unwrap()
    }
}
