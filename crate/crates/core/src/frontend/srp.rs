//! Steered response power with phase transform over a half-sphere grid.

use std::sync::Arc;

use rustfft::num_complex::Complex64;

use super::stft::Spectra;
use crate::error::{Error, Result};
use crate::sphere_grid::{tdoa_unchecked, ArrayGeometry, HalfSphereGrid};

/// PHAT denominators below this contribute nothing.
pub const PHAT_FLOOR: f64 = 1e-12;

/// SRP-PHAT power `E_i` for every grid point.
#[derive(Debug, Clone)]
pub struct SteeredPowerMap {
    pub powers: Vec<f64>,
    pub grid: Arc<HalfSphereGrid>,
}

impl SteeredPowerMap {
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, p) in self.powers.iter().enumerate() {
            if *p > self.powers[best] {
                best = i;
            }
        }
        best
    }
}

/// Precomputed per-grid-point TDOAs for one array geometry.
#[derive(Debug, Clone)]
pub struct SrpPhat {
    grid: Arc<HalfSphereGrid>,
    geom: ArrayGeometry,
    pairs: Vec<(usize, usize)>,
    /// `taus[i * pairs.len() + pair]`
    taus: Vec<f64>,
}

impl SrpPhat {
    pub fn new(grid: Arc<HalfSphereGrid>, geom: ArrayGeometry) -> Self {
        let pairs = geom.pairs();
        let mut taus = Vec::with_capacity(grid.len() * pairs.len());
        for p in grid.points() {
            taus.extend_from_slice(tdoa_unchecked(&geom, p.as_vector()).values());
        }
        SrpPhat {
            grid,
            geom,
            pairs,
            taus,
        }
    }

    pub fn grid(&self) -> &Arc<HalfSphereGrid> {
        &self.grid
    }

    pub fn geometry(&self) -> &ArrayGeometry {
        &self.geom
    }

    pub fn pair_count(&self) -> usize {
        self.pairs.len()
    }

    /// Scans the grid.
    ///
    /// For each pair the PHAT-weighted cross-spectrum is steered by the
    /// arrival-time difference `t_p - t_q = -tau(p, q)` and summed over the
    /// signed frequency bins `-N/2 < k < N/2`, plus the real part of the
    /// Nyquist bin. That index set is conjugate-symmetric, so the sum is
    /// real and only the non-negative bins need to be visited.
    pub fn power(&self, spectra: &Spectra) -> Result<SteeredPowerMap> {
        let mics = self.geom.mic_count();
        if spectra.channels.len() != mics {
            return Err(Error::invalid(format!(
                "expected {mics} channels, got {}",
                spectra.channels.len()
            )));
        }
        let n = spectra.frame_len;
        let bins = n / 2 + 1;
        if spectra.channels.iter().any(|c| c.len() != bins) {
            return Err(Error::invalid("channels have inconsistent spectrum lengths"));
        }

        let phat: Vec<Vec<Complex64>> = self
            .pairs
            .iter()
            .map(|&(p, q)| phat_cross_spectrum(&spectra.channels[p], &spectra.channels[q]))
            .collect();
        let powers = steer_all(&phat, &self.taus, n);
        Ok(SteeredPowerMap {
            powers,
            grid: Arc::clone(&self.grid),
        })
    }
}

/// `X_p X_q* / (|X_p||X_q|)` over the half spectrum; silent bins give zero.
pub(crate) fn phat_cross_spectrum(xp: &[Complex64], xq: &[Complex64]) -> Vec<Complex64> {
    xp.iter()
        .zip(xq)
        .map(|(a, b)| {
            let denom = a.norm() * b.norm();
            if denom < PHAT_FLOOR {
                Complex64::new(0.0, 0.0)
            } else {
                a * b.conj() / denom
            }
        })
        .collect()
}

/// `sum_k w_k Re(G_k exp(-j 2 pi tau k / N))` with `w = 1` at DC and
/// Nyquist and `2` elsewhere. One pair at a time; the scan uses
/// [`steer_all`].
#[cfg(test)]
fn steer(g: &[Complex64], tau: f64, n: usize) -> f64 {
    let last = g.len() - 1;
    let rot = Complex64::from_polar(1.0, -std::f64::consts::TAU * tau / n as f64);
    let mut phase = rot;
    let mut acc = g[0].re;
    for gk in &g[1..last] {
        acc += 2.0 * (gk * phase).re;
        phase *= rot;
    }
    acc + (g[last] * phase).re
}

/// [`steer`] summed over pairs for every grid point. Pairs advance in
/// lockstep so their phase recurrences are independent and pipeline well.
/// Returns `E_i / N`.
fn steer_all(phat: &[Vec<Complex64>], taus: &[f64], n: usize) -> Vec<f64> {
    let npairs = phat.len();
    let bins = phat.first().map_or(0, Vec::len);
    if npairs == 0 || bins < 2 {
        return taus.chunks_exact(npairs.max(1)).map(|_| 0.0).collect();
    }
    // bin-major, split re/im
    let mut g_re = vec![0.0; bins * npairs];
    let mut g_im = vec![0.0; bins * npairs];
    for (p, g) in phat.iter().enumerate() {
        for (k, v) in g.iter().enumerate() {
            g_re[k * npairs + p] = v.re;
            g_im[k * npairs + p] = v.im;
        }
    }
    let last = bins - 1;
    let inv_n = 1.0 / n as f64;
    let w = -std::f64::consts::TAU * inv_n;
    let mut rot_re = vec![0.0; npairs];
    let mut rot_im = vec![0.0; npairs];
    let mut ph_re = vec![0.0; npairs];
    let mut ph_im = vec![0.0; npairs];
    let mut acc = vec![0.0; npairs];
    taus.chunks_exact(npairs)
        .map(|taus| {
            for p in 0..npairs {
                let (sin, cos) = (w * taus[p]).sin_cos();
                rot_re[p] = cos;
                rot_im[p] = sin;
                ph_re[p] = cos;
                ph_im[p] = sin;
                acc[p] = 0.5 * g_re[p];
            }
            let inner = g_re[npairs..last * npairs]
                .chunks_exact(npairs)
                .zip(g_im[npairs..last * npairs].chunks_exact(npairs));
            for (gr, gi) in inner {
                let lanes = acc
                    .iter_mut()
                    .zip(ph_re.iter_mut().zip(ph_im.iter_mut()))
                    .zip(rot_re.iter().zip(&rot_im))
                    .zip(gr.iter().zip(gi));
                for (((a, (pr, pi)), (rr, ri)), (gr, gi)) in lanes {
                    *a += gr * *pr - gi * *pi;
                    let re = *pr * rr - *pi * ri;
                    *pi = *pr * ri + *pi * rr;
                    *pr = re;
                }
            }
            let gr = &g_re[last * npairs..];
            let gi = &g_im[last * npairs..];
            let mut e = 0.0;
            for p in 0..npairs {
                e += 2.0 * acc[p] + gr[p] * ph_re[p] - gi[p] * ph_im[p];
            }
            e * inv_n
        })
        .collect()
}

/// Convenience wrapper building the TDOA table on every call.
pub fn srp_phat_power(
    spectra: &Spectra,
    grid: &Arc<HalfSphereGrid>,
    geom: &ArrayGeometry,
) -> Result<SteeredPowerMap> {
    SrpPhat::new(Arc::clone(grid), geom.clone()).power(spectra)
}
