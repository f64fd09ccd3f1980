//! Time grids, waveforms, per-round random streams, the temporally randomized
//! source and the band-limited reference measurement.

mod fpd;
mod linear;
mod rng;
mod trs;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use fpd::{fpd_measure, FpdFilter, RISE_SIGMA_NS_GHZ};
pub use linear::SparseColumns;
pub use rng::{derive_seed, stream_for_round, RandomStream, StreamFactory};
pub use trs::{trs_waveform, LatentLaw, TrsConfig, TrsMode, TrsModel};

/// Lensless imaging: the reconstructed time axis maps one-to-one onto the
/// object's time axis.
pub const MAGNIFICATION: f64 = 1.0;

pub const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949;

/// Uniform sampling of one detection window. Sample `k` sits at `k * dt_ns`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    window_ns: f64,
    dt_ns: f64,
    n_samples: usize,
}

pub fn make_grid(window_ns: f64, dt_ns: f64) -> Result<TimeGrid> {
    TimeGrid::new(window_ns, dt_ns)
}

impl TimeGrid {
    pub fn new(window_ns: f64, dt_ns: f64) -> Result<Self> {
        if !(window_ns > 0.0 && window_ns.is_finite()) || !(dt_ns > 0.0 && dt_ns.is_finite()) {
            return Err(Error::GridMismatch(format!(
                "window {window_ns} ns and dt {dt_ns} ns must be positive and finite"
            )));
        }
        let ratio = window_ns / dt_ns;
        let n = ratio.round();
        if (ratio - n).abs() > 1e-9 * ratio || n < 2.0 {
            return Err(Error::GridMismatch(format!(
                "window {window_ns} ns is not an integral multiple (>= 2) of dt {dt_ns} ns"
            )));
        }
        Ok(Self {
            window_ns,
            dt_ns,
            n_samples: n as usize,
        })
    }

    pub fn window_ns(&self) -> f64 {
        self.window_ns
    }

    pub fn dt_ns(&self) -> f64 {
        self.dt_ns
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt_ns
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_samples).map(|k| self.time(k))
    }

    /// Nearest sample index for time `t_ns` (may fall outside the window).
    pub fn nearest(&self, t_ns: f64) -> isize {
        (t_ns / self.dt_ns).round() as isize
    }

    pub fn ensure_same(&self, other: &TimeGrid) -> Result<()> {
        if self.n_samples == other.n_samples
            && (self.dt_ns - other.dt_ns).abs() <= 1e-12 * self.dt_ns
        {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "{} samples @ {} ns vs {} samples @ {} ns",
                self.n_samples, self.dt_ns, other.n_samples, other.dt_ns
            )))
        }
    }
}

/// Mean photon number per sample on a [`TimeGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    grid: TimeGrid,
    samples: Vec<f64>,
}

impl Waveform {
    pub fn zeros(grid: TimeGrid) -> Self {
        Self {
            grid,
            samples: vec![0.0; grid.n_samples()],
        }
    }

    pub fn from_samples(grid: TimeGrid, samples: Vec<f64>) -> Result<Self> {
        if samples.len() != grid.n_samples() {
            return Err(Error::GridMismatch(format!(
                "{} samples for a grid of {}",
                samples.len(),
                grid.n_samples()
            )));
        }
        if let Some(bad) = samples.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
            return Err(Error::InvariantViolation(format!(
                "waveform sample {bad} is negative or not finite"
            )));
        }
        Ok(Self { grid, samples })
    }

    pub fn impulse(grid: TimeGrid, index: usize, photons: f64) -> Self {
        let mut w = Self::zeros(grid);
        w.samples[index] = photons;
        w
    }

    // Skips validation; for internal producers that maintain the invariants.
    pub(crate) fn from_raw(grid: TimeGrid, samples: Vec<f64>) -> Self {
        debug_assert_eq!(samples.len(), grid.n_samples());
        Self { grid, samples }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sum(&self) -> f64 {
        self.samples.iter().sum()
    }

    pub fn scaled(&self, factor: f64) -> Waveform {
        Waveform::from_raw(self.grid, self.samples.iter().map(|x| x * factor).collect())
    }

    pub fn add(&self, other: &Waveform) -> Result<Waveform> {
        self.grid.ensure_same(&other.grid)?;
        Ok(Waveform::from_raw(
            self.grid,
            self.samples
                .iter()
                .zip(&other.samples)
                .map(|(a, b)| a + b)
                .collect(),
        ))
    }

    pub fn argmax(&self) -> usize {
        self.samples
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(k, _)| k)
            .unwrap_or(0)
    }
}

/// Gaussian QKD signal pulse carrying `mu_a` photons inside the window.
pub fn qkd_pulse(grid: TimeGrid, mu_a: f64, center_ns: f64, fwhm_ns: f64) -> Result<Waveform> {
    if !(mu_a >= 0.0 && mu_a.is_finite()) {
        return Err(Error::config("qkd.mu_a", format!("mean photon number {mu_a} must be >= 0")));
    }
    if !(fwhm_ns > 0.0) {
        return Err(Error::config("qkd.pulse_fwhm_ns", "pulse width must be positive"));
    }
    if !(0.0..=grid.window_ns()).contains(&center_ns) {
        return Err(Error::config(
            "qkd.center_ns",
            format!("pulse center {center_ns} ns lies outside the window"),
        ));
    }
    let sigma = fwhm_ns / FWHM_PER_SIGMA;
    let mut samples: Vec<f64> = grid
        .times()
        .map(|t| (-(t - center_ns).powi(2) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = samples.iter().sum();
    if total < 1e-300 {
        // narrower than the grid can resolve
        samples.iter_mut().for_each(|x| *x = 0.0);
        let k = grid.nearest(center_ns).clamp(0, grid.n_samples() as isize - 1) as usize;
        samples[k] = mu_a;
    } else {
        samples.iter_mut().for_each(|x| *x *= mu_a / total);
    }
    Ok(Waveform::from_raw(grid, samples))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_sizes() {
        assert_eq!(make_grid(4.0, 0.01).unwrap().n_samples(), 400);
        assert_eq!(make_grid(4.0, 0.08).unwrap().n_samples(), 50);
        assert!(matches!(make_grid(1.0, 0.3), Err(Error::GridMismatch(_))));
        assert!(make_grid(0.01, 0.01).is_err());
        assert!(make_grid(-1.0, 0.01).is_err());
    }

    #[test]
    fn waveform_rejects_negative_samples() {
        let g = make_grid(0.04, 0.01).unwrap();
        assert!(Waveform::from_samples(g, vec![0.0, 1.0, -1.0, 0.0]).is_err());
        assert!(Waveform::from_samples(g, vec![0.0; 3]).is_err());
    }

    #[test]
    fn qkd_pulse_normalization_and_peak() {
        let g = make_grid(4.0, 0.01).unwrap();
        let p = qkd_pulse(g, 0.5, 2.0, 0.1).unwrap();
        assert!((p.sum() - 0.5).abs() <= 5e-7);
        assert_eq!(p.argmax(), 200);
        let zero = qkd_pulse(g, 0.0, 2.0, 0.1).unwrap();
        assert!(zero.samples().iter().all(|&x| x == 0.0));
        assert!(qkd_pulse(g, -0.1, 2.0, 0.1).is_err());
    }

    #[test]
    fn sub_sample_pulse_lands_on_nearest_sample() {
        let g = make_grid(4.0, 0.08).unwrap();
        let p = qkd_pulse(g, 0.5, 2.0, 0.001).unwrap();
        assert_eq!(p.argmax(), 25);
        assert!((p.samples()[25] - 0.5).abs() < 1e-12);
    }
}
