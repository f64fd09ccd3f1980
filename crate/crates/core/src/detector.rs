//! Gated single-photon avalanche detector: temporal efficiency profile, dark
//! counts and the Boolean composition of per-source click bits.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{RandomStream, TimeGrid, Waveform, FWHM_PER_SIGMA};

pub const DEFAULT_PEAK_EFFICIENCY: f64 = 0.214;
pub const DEFAULT_FWHM_NS: f64 = 0.27;
pub const DEFAULT_DARK_PROB: f64 = 5e-5;
/// 10 MHz gating.
pub const DEFAULT_GATE_PERIOD_NS: f64 = 100.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SpadModel {
    grid: TimeGrid,
    eta: Vec<f64>,
    dark_prob: f64,
    gate_period_ns: f64,
}

impl SpadModel {
    pub fn new(grid: TimeGrid, eta: Vec<f64>, dark_prob: f64, gate_period_ns: f64) -> Result<Self> {
        if eta.len() != grid.n_samples() {
            return Err(Error::GridMismatch(format!(
                "efficiency profile has {} samples, grid has {}",
                eta.len(),
                grid.n_samples()
            )));
        }
        if let Some(bad) = eta.iter().find(|e| !(0.0..=1.0).contains(*e)) {
            return Err(Error::config("detector.peak_eta", format!("efficiency {bad} outside [0, 1]")));
        }
        if !(0.0..1.0).contains(&dark_prob) {
            return Err(Error::config(
                "detector.dark_prob",
                format!("dark-count probability {dark_prob} outside [0, 1)"),
            ));
        }
        Ok(Self {
            grid,
            eta,
            dark_prob,
            gate_period_ns,
        })
    }

    /// Gaussian efficiency profile.
    pub fn gaussian(grid: TimeGrid, peak: f64, center_ns: f64, fwhm_ns: f64, dark_prob: f64) -> Result<Self> {
        if !(fwhm_ns > 0.0) {
            return Err(Error::config("detector.fwhm_ns", "width must be positive"));
        }
        let sigma = fwhm_ns / FWHM_PER_SIGMA;
        let eta = grid
            .times()
            .map(|t| peak * (-(t - center_ns).powi(2) / (2.0 * sigma * sigma)).exp())
            .collect();
        Self::new(grid, eta, dark_prob, DEFAULT_GATE_PERIOD_NS)
    }

    /// Loads a two-column `time_ns, eta` table (whitespace or comma separated,
    /// `#` comments) and resamples it linearly onto `grid`. Outside the table
    /// the efficiency is zero.
    pub fn from_profile_file(grid: TimeGrid, path: &Path, dark_prob: f64) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut table: Vec<(f64, f64)> = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|s| !s.is_empty())
                .collect();
            let parse = |s: &str| s.parse::<f64>().ok();
            match fields.as_slice() {
                [t, e] => match (parse(t), parse(e)) {
                    (Some(t), Some(e)) => table.push((t, e)),
                    // tolerate a header line
                    _ if table.is_empty() => continue,
                    _ => return Err(profile_error(path, lineno, "expected two numbers")),
                },
                _ => return Err(profile_error(path, lineno, "expected two columns")),
            }
        }
        if table.len() < 2 {
            return Err(profile_error(path, 0, "need at least two rows"));
        }
        if table.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(profile_error(path, 0, "times must be strictly increasing"));
        }
        let eta = grid.times().map(|t| interpolate(&table, t)).collect();
        Self::new(grid, eta, dark_prob, DEFAULT_GATE_PERIOD_NS)
    }

    pub fn with_dark_prob(&self, dark_prob: f64) -> Result<Self> {
        Self::new(self.grid, self.eta.clone(), dark_prob, self.gate_period_ns)
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn eta(&self) -> &[f64] {
        &self.eta
    }

    pub fn dark_prob(&self) -> f64 {
        self.dark_prob
    }

    pub fn gate_period_ns(&self) -> f64 {
        self.gate_period_ns
    }

    pub fn peak_eta(&self) -> f64 {
        self.eta.iter().copied().fold(0.0, f64::max)
    }

    /// Efficiency at an arbitrary time, linearly interpolated between samples.
    pub fn eta_at(&self, t_ns: f64) -> f64 {
        let x = t_ns / self.grid.dt_ns();
        if x < 0.0 || x > (self.eta.len() - 1) as f64 {
            return 0.0;
        }
        let k = x.floor() as usize;
        if k + 1 >= self.eta.len() {
            return self.eta[k];
        }
        let f = x - k as f64;
        self.eta[k] * (1.0 - f) + self.eta[k + 1] * f
    }

    /// Expected number of photoelectrons, `sum_k eta[k] mu[k]`.
    pub fn detected_photons(&self, incident: &Waveform) -> Result<f64> {
        self.grid.ensure_same(incident.grid())?;
        Ok(crate::stats::dot(&self.eta, incident.samples()))
    }

    /// Probability that the light alone fires the detector.
    pub fn light_click_probability(&self, incident: &Waveform) -> Result<f64> {
        Ok(-(-self.detected_photons(incident)?).exp_m1())
    }
}

fn profile_error(path: &Path, lineno: usize, message: &str) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        message: format!("line {}: {message}", lineno + 1),
    }
}

fn interpolate(table: &[(f64, f64)], t: f64) -> f64 {
    let (first, last) = (table[0], table[table.len() - 1]);
    if t < first.0 || t > last.0 {
        return 0.0;
    }
    let i = table.partition_point(|&(x, _)| x <= t).clamp(1, table.len() - 1);
    let ((t0, e0), (t1, e1)) = (table[i - 1], table[i]);
    e0 + (e1 - e0) * (t - t0) / (t1 - t0)
}

/// Gaussian profile with the reference SPAD parameters, centered in the window.
pub fn default_spad(grid: TimeGrid) -> SpadModel {
    SpadModel::gaussian(
        grid,
        DEFAULT_PEAK_EFFICIENCY,
        grid.window_ns() / 2.0,
        DEFAULT_FWHM_NS,
        DEFAULT_DARK_PROB,
    )
    .expect("default detector parameters are valid")
}

/// `p = 1 - (1 - dark) exp(-sum eta mu)`
pub fn click_probability(spad: &SpadModel, incident: &Waveform) -> Result<f64> {
    let escape = (-spad.detected_photons(incident)?).exp();
    Ok((1.0 - (1.0 - spad.dark_prob) * escape).clamp(0.0, 1.0))
}

pub fn sample_click(spad: &SpadModel, incident: &Waveform, stream: &mut RandomStream) -> Result<bool> {
    Ok(stream.bernoulli(click_probability(spad, incident)?))
}

/// Per-source click bits for one detection window.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClickSources {
    /// TGI light (joint or local).
    pub i_tb: bool,
    /// Alice's QKD signal.
    pub i_ta: bool,
    /// Dark count.
    pub i_td: bool,
    /// Blinded, no response.
    pub i_te0: bool,
    /// Blinded, forced click.
    pub i_te1: bool,
}

/// Combines source bits into the detector output.
///
/// Unblinded: `1 - (1-tb)(1-ta)(1-td)`.
/// Blinded: `[1 - (1-tb)(1-te1)(1-td)] (1-te0)`; Alice's signal never reaches
/// the detector because it was intercepted.
pub fn compose_click(sources: ClickSources, blinded: bool) -> Result<bool> {
    if sources.i_te0 && sources.i_te1 {
        return Err(Error::InvariantViolation(
            "forced-silence and forced-click bits both set".into(),
        ));
    }
    Ok(if blinded {
        (sources.i_tb || sources.i_te1 || sources.i_td) && !sources.i_te0
    } else {
        sources.i_tb || sources.i_ta || sources.i_td
    })
}

/// Probability that a detection at `t_ns` came from detector 1 of a pair.
pub fn mismatch_ratio(spad1: &SpadModel, spad2: &SpadModel, t_ns: f64) -> Result<f64> {
    spad1.grid.ensure_same(&spad2.grid)?;
    let (e1, e2) = (spad1.eta_at(t_ns), spad2.eta_at(t_ns));
    if e1 + e2 <= 0.0 {
        return Err(Error::Undefined(format!(
            "both detectors have zero efficiency at {t_ns} ns"
        )));
    }
    Ok(e1 / (e1 + e2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{make_grid, stream_for_round};
    use crate::stats::fwhm_samples;

    fn grid() -> TimeGrid {
        make_grid(4.0, 0.01).unwrap()
    }

    #[test]
    fn default_profile_shape() {
        let s = default_spad(grid());
        assert!((s.peak_eta() - 0.214).abs() < 1e-15);
        let fwhm = fwhm_samples(s.eta()).unwrap() * 0.01;
        assert!((fwhm - 0.27).abs() <= 0.01, "fwhm {fwhm}");
        assert!(s.eta()[0] < 1e-12 && s.eta()[399] < 1e-12);
        assert_eq!(s.dark_prob(), 5e-5);
        assert_eq!(s.gate_period_ns(), 100.0);
    }

    #[test]
    fn click_probability_cases() {
        let g = grid();
        let s = default_spad(g);
        let dark_only = click_probability(&s, &Waveform::zeros(g)).unwrap();
        assert!((dark_only - 5e-5).abs() < 1e-15);

        let blind = SpadModel::new(g, vec![0.0; 400], 0.0, 100.0).unwrap();
        let w = Waveform::from_samples(g, vec![0.01; 400]).unwrap();
        assert_eq!(click_probability(&blind, &w).unwrap(), 0.0);

        let flat = SpadModel::new(g, vec![0.214; 400], 5e-5, 100.0).unwrap();
        let w = Waveform::from_samples(g, vec![0.6 / 400.0; 400]).unwrap();
        let p = click_probability(&flat, &w).unwrap();
        let expected = 1.0 - 0.99995 * (-0.1284f64).exp();
        assert!((p - expected).abs() < 1e-12);
        assert!((p - 0.12054).abs() < 1e-5);
    }

    #[test]
    fn grid_mismatch_is_reported() {
        let s = default_spad(grid());
        let other = Waveform::zeros(make_grid(4.0, 0.08).unwrap());
        assert!(matches!(click_probability(&s, &other), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn light_terms_factorize_without_dark_counts() {
        let g = grid();
        let s = default_spad(g).with_dark_prob(0.0).unwrap();
        let a = crate::signal::qkd_pulse(g, 0.4, 1.9, 0.1).unwrap();
        let b = crate::signal::qkd_pulse(g, 0.7, 2.1, 0.3).unwrap();
        let pa = click_probability(&s, &a).unwrap();
        let pb = click_probability(&s, &b).unwrap();
        let pab = click_probability(&s, &a.add(&b).unwrap()).unwrap();
        assert!(((1.0 - pab) - (1.0 - pa) * (1.0 - pb)).abs() < 1e-12);
    }

    #[test]
    fn sample_click_extremes_and_rate() {
        let g = grid();
        let never = SpadModel::new(g, vec![0.0; 400], 0.0, 100.0).unwrap();
        let always = SpadModel::new(g, vec![1.0; 400], 0.0, 100.0).unwrap();
        let bright = Waveform::from_samples(g, vec![10.0; 400]).unwrap();
        let mut s = stream_for_round(1, 0);
        assert!((0..1000).all(|_| !sample_click(&never, &bright, &mut s).unwrap()));
        assert!((0..1000).all(|_| sample_click(&always, &bright, &mut s).unwrap()));

        let flat = SpadModel::new(g, vec![0.214; 400], 5e-5, 100.0).unwrap();
        let w = Waveform::from_samples(g, vec![0.6 / 400.0; 400]).unwrap();
        let p = click_probability(&flat, &w).unwrap();
        let n = 1_000_000;
        let hits = (0..n).filter(|_| sample_click(&flat, &w, &mut s).unwrap()).count();
        let rate = hits as f64 / n as f64;
        assert!((rate - p).abs() <= 3.0 * (p * (1.0 - p) / n as f64).sqrt(), "{rate} vs {p}");
    }

    #[test]
    fn compose_truth_table() {
        for bits in 0u8..32 {
            let s = ClickSources {
                i_tb: bits & 1 != 0,
                i_ta: bits & 2 != 0,
                i_td: bits & 4 != 0,
                i_te0: bits & 8 != 0,
                i_te1: bits & 16 != 0,
            };
            let f = |b: bool| b as u8 as f64;
            if s.i_te0 && s.i_te1 {
                assert!(compose_click(s, true).is_err());
                continue;
            }
            let blind = (1.0 - (1.0 - f(s.i_tb)) * (1.0 - f(s.i_te1)) * (1.0 - f(s.i_td))) * (1.0 - f(s.i_te0));
            let open = 1.0 - (1.0 - f(s.i_tb)) * (1.0 - f(s.i_ta)) * (1.0 - f(s.i_td));
            assert_eq!(f(compose_click(s, true).unwrap()), blind);
            assert_eq!(f(compose_click(s, false).unwrap()), open);
        }
    }

    #[test]
    fn mismatch_ratio_cases() {
        let g = grid();
        let s = default_spad(g);
        for t in [1.5, 2.0, 2.3] {
            assert!((mismatch_ratio(&s, &s, t).unwrap() - 0.5).abs() < 1e-15);
        }
        let zero = SpadModel::new(g, vec![0.0; 400], 0.0, 100.0).unwrap();
        assert_eq!(mismatch_ratio(&s, &zero, 2.0).unwrap(), 1.0);
        assert!(matches!(mismatch_ratio(&zero, &zero, 2.0), Err(Error::Undefined(_))));

        let early = SpadModel::gaussian(g, 0.214, 1.7, 0.27, 0.0).unwrap();
        let late = SpadModel::gaussian(g, 0.214, 2.3, 0.27, 0.0).unwrap();
        let sigma = 0.27 / FWHM_PER_SIGMA;
        let e2 = (-(0.6f64).powi(2) / (2.0 * sigma * sigma)).exp();
        let expected = 1.0 / (1.0 + e2);
        assert!((mismatch_ratio(&early, &late, 1.7).unwrap() - expected).abs() < 1e-9);
    }

    #[test]
    fn profile_file_is_resampled() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("eta.txt");
        std::fs::write(&path, "time_ns eta\n1.0 0.0\n2.0 0.2\n3.0 0.0\n").unwrap();
        let s = SpadModel::from_profile_file(grid(), &path, 5e-5).unwrap();
        assert!((s.eta()[200] - 0.2).abs() < 1e-12);
        assert!((s.eta()[150] - 0.1).abs() < 1e-12);
        assert_eq!(s.eta()[50], 0.0);

        std::fs::write(&path, "1.0 0.0\n2.0 2.0\n").unwrap();
        assert!(SpadModel::from_profile_file(grid(), &path, 5e-5).is_err());
        std::fs::write(&path, "1.0 0.0\n2.0\n").unwrap();
        assert!(SpadModel::from_profile_file(grid(), &path, 5e-5).is_err());
    }

    #[test]
    fn click_probability_monotone_in_each_sample() {
        let g = make_grid(0.4, 0.01).unwrap();
        let s = SpadModel::gaussian(g, 0.214, 0.2, 0.27, 5e-5).unwrap();
        let base = Waveform::from_samples(g, vec![0.05; 40]).unwrap();
        let p0 = click_probability(&s, &base).unwrap();
        for k in 0..40 {
            let mut v = base.samples().to_vec();
            v[k] += 0.1;
            let p = click_probability(&s, &Waveform::from_samples(g, v).unwrap()).unwrap();
            assert!(p >= p0);
        }
    }
}
