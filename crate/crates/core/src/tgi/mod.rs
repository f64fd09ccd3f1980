//! Temporal ghost imaging: streaming reconstruction of the correlation image,
//! predicted and differential images, the permutation noise floor and the
//! attack verdicts built on them.

mod accumulator;
mod detect;
mod io;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{RandomStream, TimeGrid, Waveform};

pub use accumulator::CorrelationAccumulator;
pub use detect::{
    detect_blinding, detect_blinding_gated, detect_time_shift, AttackKind, Verdict, VerdictRecord,
    DEFAULT_SHAPE_GATE, DEFAULT_THRESHOLD,
};
pub use io::{read_image_csv, write_image_csv, ImageFile, ImageKind};

/// Reconstructed image `M(t)` with a per-sample standard error.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    grid: TimeGrid,
    m: Vec<f64>,
    sigma: Vec<f64>,
    n: u64,
}

impl Image {
    pub fn new(grid: TimeGrid, m: Vec<f64>, sigma: Vec<f64>, n: u64) -> Result<Self> {
        let len = grid.n_samples();
        if m.len() != len || sigma.len() != len {
            return Err(Error::GridMismatch(format!(
                "image has {}/{} values for a grid of {len}",
                m.len(),
                sigma.len()
            )));
        }
        if let Some(bad) = sigma.iter().find(|s| !(**s >= 0.0)) {
            return Err(Error::InvariantViolation(format!("negative sigma {bad}")));
        }
        Ok(Self { grid, m, sigma, n })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn m(&self) -> &[f64] {
        &self.m
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn peak_index(&self) -> usize {
        self.m
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(k, _)| k)
            .unwrap_or(0)
    }

    pub fn scaled(&self, factor: f64) -> Image {
        Image {
            grid: self.grid,
            m: self.m.iter().map(|x| x * factor).collect(),
            sigma: self.sigma.iter().map(|s| s * factor.abs()).collect(),
            n: self.n,
        }
    }

    pub fn with_sigma(mut self, sigma: Vec<f64>) -> Result<Image> {
        if sigma.len() != self.m.len() {
            return Err(Error::GridMismatch("sigma length differs from image".into()));
        }
        self.sigma = sigma;
        Ok(self)
    }
}

/// Anything that carries one reference trace and one bucket click.
pub trait Observation {
    fn reference(&self) -> Option<&Waveform>;
    fn click(&self) -> bool;
}

impl Observation for (Waveform, bool) {
    fn reference(&self) -> Option<&Waveform> {
        Some(&self.0)
    }

    fn click(&self) -> bool {
        self.1
    }
}

/// `sigma(t) = sqrt(var_ref(t) var_click / (n - 1))`: the standard deviation
/// of the covariance under random relabelling of the clicks.
fn permutation_sigma(var_ref: &[f64], var_click: f64, n: u64) -> Vec<f64> {
    let denom = (n - 1) as f64;
    var_ref.iter().map(|v| (v * var_click / denom).sqrt()).collect()
}

pub fn reconstruct(acc: &CorrelationAccumulator) -> Result<Image> {
    image_from_sums(acc.grid(), &acc.sums())
}

/// Image of the counterfactual channel of a paired accumulator.
pub fn reconstruct_shadow(acc: &CorrelationAccumulator) -> Result<Image> {
    let (sums, _) = acc
        .shadow_sums()
        .ok_or_else(|| Error::InvariantViolation("accumulator is not paired".into()))?;
    image_from_sums(acc.grid(), &sums)
}

fn image_from_sums(grid: &TimeGrid, sums: &accumulator::Sums) -> Result<Image> {
    if sums.n < 2 {
        return Err(Error::InsufficientData(format!(
            "{} rounds; at least 2 are needed",
            sums.n
        )));
    }
    let p = sums.click_rate();
    let sigma = permutation_sigma(&sums.var_ref(), p * (1.0 - p), sums.n);
    Image::new(*grid, sums.covariance(), sigma, sums.n)
}

/// Two-pass reference implementation: means first, then the explicit average
/// of `dI_ref(t) dI_test`. Records without a reference trace are skipped.
pub fn brute_force_reconstruct<R: Observation>(records: &[R]) -> Result<Image> {
    let obs: Vec<(&Waveform, f64)> = records
        .iter()
        .filter_map(|r| r.reference().map(|w| (w, r.click() as u8 as f64)))
        .collect();
    if obs.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "{} records with a reference; at least 2 are needed",
            obs.len()
        )));
    }
    let grid = *obs[0].0.grid();
    for (w, _) in &obs {
        grid.ensure_same(w.grid())?;
    }
    let n = obs.len() as f64;
    let len = grid.n_samples();
    let mut mean_ref = vec![0.0; len];
    for (w, _) in &obs {
        for (m, x) in mean_ref.iter_mut().zip(w.samples()) {
            *m += x;
        }
    }
    mean_ref.iter_mut().for_each(|m| *m /= n);
    let mean_click = obs.iter().map(|o| o.1).sum::<f64>() / n;

    let mut m = vec![0.0; len];
    let mut var_ref = vec![0.0; len];
    let mut var_click = 0.0;
    for (w, c) in &obs {
        let dc = c - mean_click;
        var_click += dc * dc;
        for k in 0..len {
            let dr = w.samples()[k] - mean_ref[k];
            m[k] += dr * dc;
            var_ref[k] += dr * dr;
        }
    }
    m.iter_mut().for_each(|x| *x /= n);
    var_ref.iter_mut().for_each(|x| *x /= n);
    var_click /= n;
    let sigma = permutation_sigma(&var_ref, var_click, obs.len() as u64);
    Image::new(grid, m, sigma, obs.len() as u64)
}

/// `(1 - <I_td>)(1 - <I_ta>)`, the no-attack attenuation of the image.
pub fn predicted_factor(mean_ia: f64, mean_id: f64) -> Result<f64> {
    for (key, v) in [("mean_ia", mean_ia), ("mean_id", mean_id)] {
        if !(0.0..1.0).contains(&v) {
            return Err(Error::config(
                format!("analysis.{key}"),
                format!("rate {v} outside [0, 1)"),
            ));
        }
    }
    Ok((1.0 - mean_id) * (1.0 - mean_ia))
}

/// Image expected without an attack, from the TGI-only base image.
pub fn predicted_image(base: &Image, mean_ia: f64, mean_id: f64) -> Result<Image> {
    Ok(base.scaled(predicted_factor(mean_ia, mean_id)?))
}

/// `predicted - measured` with independent errors added in quadrature.
pub fn differential_image(predicted: &Image, measured: &Image) -> Result<Image> {
    predicted.grid.ensure_same(&measured.grid)?;
    let m = predicted
        .m
        .iter()
        .zip(&measured.m)
        .map(|(p, q)| p - q)
        .collect();
    let sigma = predicted
        .sigma
        .iter()
        .zip(&measured.sigma)
        .map(|(a, b)| a.hypot(*b))
        .collect();
    Image::new(predicted.grid, m, sigma, predicted.n.min(measured.n))
}

/// Differential image from a paired accumulator: the covariance of the
/// reference with `factor * I_tb - I_test`, computed over the same rounds so
/// the error accounts for the shared fluctuations exactly.
pub fn paired_differential(acc: &CorrelationAccumulator, factor: f64) -> Result<Image> {
    let (base, both) = acc
        .shadow_sums()
        .ok_or_else(|| Error::InvariantViolation("accumulator is not paired".into()))?;
    let measured = acc.sums();
    if measured.n < 2 {
        return Err(Error::InsufficientData(format!(
            "{} rounds; at least 2 are needed",
            measured.n
        )));
    }
    let n = measured.n as f64;
    let m: Vec<f64> = base
        .covariance()
        .iter()
        .zip(measured.covariance())
        .map(|(b, x)| factor * b - x)
        .collect();
    let (pb, pt) = (base.click_rate(), measured.click_rate());
    let cov_bt = both as f64 / n - pb * pt;
    let var_d = (factor * factor * pb * (1.0 - pb) + pt * (1.0 - pt) - 2.0 * factor * cov_bt).max(0.0);
    let sigma = permutation_sigma(&measured.var_ref(), var_d, measured.n);
    Image::new(*acc.grid(), m, sigma, measured.n)
}

/// Permutation-bootstrap standard error of the image.
///
/// Clicks of the retained rounds are shuffled against their references and
/// the covariance recomputed `resamples` times. When only a prefix of the
/// rounds was retained, the spread is rescaled to the full round count.
pub fn noise_floor(acc: &CorrelationAccumulator, resamples: usize, stream: &mut RandomStream) -> Result<Vec<f64>> {
    if resamples < 20 {
        return Err(Error::config(
            "analysis.resamples",
            format!("{resamples} resamples; at least 20 are needed"),
        ));
    }
    let (refs, clicks) = acc.retained();
    let r = clicks.len();
    if r < 2 {
        return Err(Error::InsufficientData(format!(
            "{r} retained rounds; at least 2 are needed"
        )));
    }
    let len = acc.grid().n_samples();
    let rf = r as f64;
    let mut mean_ref = vec![0.0; len];
    for row in refs.chunks_exact(len) {
        for (m, x) in mean_ref.iter_mut().zip(row) {
            *m += x;
        }
    }
    mean_ref.iter_mut().for_each(|m| *m /= rf);
    let ones = clicks.iter().filter(|&&c| c).count();
    let p = ones as f64 / rf;

    let mut perm: Vec<usize> = (0..r).collect();
    let mut cov = vec![0.0; len];
    let mut sum = vec![0.0; len];
    let mut sum_sq = vec![0.0; len];
    for _ in 0..resamples {
        shuffle(&mut perm, stream);
        cov.iter_mut().for_each(|c| *c = 0.0);
        for (i, &j) in perm.iter().enumerate() {
            if clicks[j] {
                for (c, x) in cov.iter_mut().zip(&refs[i * len..(i + 1) * len]) {
                    *c += x;
                }
            }
        }
        for k in 0..len {
            let v = cov[k] / rf - mean_ref[k] * p;
            sum[k] += v;
            sum_sq[k] += v * v;
        }
    }
    let b = resamples as f64;
    let scale = if acc.n() as usize > r {
        ((rf - 1.0) / (acc.n() as f64 - 1.0)).sqrt()
    } else {
        1.0
    };
    Ok(sum
        .iter()
        .zip(&sum_sq)
        .map(|(s, q)| {
            let mean = s / b;
            ((q - b * mean * mean) / (b - 1.0)).max(0.0).sqrt() * scale
        })
        .collect())
}

fn shuffle(v: &mut [usize], stream: &mut RandomStream) {
    for i in (1..v.len()).rev() {
        // multiply-shift bounded draw
        let j = ((stream.next_u64() as u128 * (i as u128 + 1)) >> 64) as usize;
        v.swap(i, j);
    }
}

/// Normalized cross-correlation (Pearson) of two images' values.
pub fn shape_correlation(a: &[f64], b: &[f64]) -> Option<f64> {
    crate::stats::pearson(a, b)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseMode {
    /// Counterfactual TGI-only clicks recorded in the same rounds.
    Paired,
    /// A separate calibration session without QKD light or dark counts.
    Independent,
}
