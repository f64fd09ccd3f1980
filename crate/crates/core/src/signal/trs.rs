use serde::{Deserialize, Serialize};

use super::{RandomStream, SparseColumns, TimeGrid, Waveform, FWHM_PER_SIGMA};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrsMode {
    /// One Uniform[0,1] level per coherence-time bin, held constant within the bin.
    UniformBins,
    /// i.i.d. exponential (thermal-like) samples smoothed by a Gaussian kernel.
    FilteredGaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrsConfig {
    pub mode: TrsMode,
    pub coherence_time_ps: f64,
    /// Expected photon number per window.
    pub mean_intensity: f64,
}

impl Default for TrsConfig {
    fn default() -> Self {
        Self {
            mode: TrsMode::UniformBins,
            coherence_time_ps: 80.0,
            mean_intensity: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LatentLaw {
    Uniform,
    Exponential,
}

/// A temporally randomized source on a fixed grid: `waveform = basis * z`
/// with `z` i.i.d. from `law`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrsModel {
    grid: TimeGrid,
    law: LatentLaw,
    basis: SparseColumns,
    scale: f64,
}

impl TrsModel {
    pub fn new(grid: TimeGrid, cfg: &TrsConfig) -> Result<Self> {
        let tau_ns = cfg.coherence_time_ps / 1000.0;
        if !(tau_ns.is_finite() && tau_ns >= grid.dt_ns() * (1.0 - 1e-9)) {
            return Err(Error::config(
                "source.coherence_time_ps",
                format!(
                    "coherence time {} ps is shorter than the grid spacing {} ns",
                    cfg.coherence_time_ps,
                    grid.dt_ns()
                ),
            ));
        }
        if !(cfg.mean_intensity >= 0.0 && cfg.mean_intensity.is_finite()) {
            return Err(Error::config(
                "source.mean_intensity",
                "mean intensity must be finite and >= 0",
            ));
        }
        let n = grid.n_samples();
        let (law, basis, expected_raw_sum) = match cfg.mode {
            TrsMode::UniformBins => {
                let mut cols: Vec<(usize, Vec<f64>)> = Vec::new();
                for k in 0..n {
                    let bin = (k as f64 * grid.dt_ns() / tau_ns + 1e-9).floor() as usize;
                    if bin == cols.len() {
                        cols.push((k, Vec::new()));
                    }
                    cols[bin].1.push(1.0);
                }
                (LatentLaw::Uniform, cols, 0.5 * n as f64)
            }
            TrsMode::FilteredGaussian => {
                // autocorrelation of a Gaussian kernel is Gaussian with sqrt(2) larger width
                let sigma = tau_ns / (FWHM_PER_SIGMA * std::f64::consts::SQRT_2) / grid.dt_ns();
                let half = (4.0 * sigma).ceil() as usize;
                let mut kernel: Vec<f64> = (0..=2 * half)
                    .map(|i| {
                        let m = i as f64 - half as f64;
                        (-(m * m) / (2.0 * sigma * sigma)).exp()
                    })
                    .collect();
                let total: f64 = kernel.iter().sum();
                kernel.iter_mut().for_each(|w| *w /= total);
                // sample k = sum_m kernel[m] * z[k + m], latents padded by `half` on each side
                let cols = (0..n + 2 * half)
                    .map(|j| {
                        let lo = j.saturating_sub(2 * half);
                        let hi = j.min(n - 1);
                        if lo > hi {
                            return (0, Vec::new());
                        }
                        let w = (lo..=hi).map(|k| kernel[j - k]).collect();
                        (lo, w)
                    })
                    .collect();
                (LatentLaw::Exponential, cols, n as f64)
            }
        };
        let scale = cfg.mean_intensity / expected_raw_sum;
        let basis = SparseColumns::from_columns(n, basis).scaled(scale);
        Ok(Self {
            grid,
            law,
            basis,
            scale,
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn law(&self) -> LatentLaw {
        self.law
    }

    pub fn basis(&self) -> &SparseColumns {
        &self.basis
    }

    pub fn n_latent(&self) -> usize {
        self.basis.n_cols()
    }

    /// Largest value a single sample can take (uniform mode), i.e. the rescale factor.
    pub fn rescale(&self) -> f64 {
        self.scale
    }

    #[inline]
    pub fn draw_latents(&self, stream: &mut RandomStream, out: &mut [f64]) {
        match self.law {
            LatentLaw::Uniform => out.iter_mut().for_each(|z| *z = stream.uniform()),
            LatentLaw::Exponential => out.iter_mut().for_each(|z| *z = stream.exp1()),
        }
    }

    pub fn waveform_from(&self, latents: &[f64]) -> Waveform {
        let mut samples = vec![0.0; self.grid.n_samples()];
        self.basis.apply(latents, &mut samples);
        Waveform::from_raw(self.grid, samples)
    }

    pub fn sample(&self, stream: &mut RandomStream) -> Waveform {
        let mut z = vec![0.0; self.n_latent()];
        self.draw_latents(stream, &mut z);
        self.waveform_from(&z)
    }

    /// `E[exp(-sum_j a_j z_j)]` over the latent law, for nonnegative weights.
    pub fn escape_expectation(&self, latent_weights: &[f64]) -> f64 {
        latent_weights
            .iter()
            .map(|&a| match self.law {
                LatentLaw::Uniform if a < 1e-8 => 1.0 - a / 2.0 + a * a / 6.0,
                LatentLaw::Uniform => -(-a).exp_m1() / a,
                LatentLaw::Exponential => 1.0 / (1.0 + a),
            })
            .product()
    }
}

pub fn trs_waveform(grid: TimeGrid, cfg: &TrsConfig, stream: &mut RandomStream) -> Result<Waveform> {
    Ok(TrsModel::new(grid, cfg)?.sample(stream))
}
