//! Eve's strategies: random time-shift delays and intercept-and-resend
//! blinding calibrated to the channel loss.

use serde::{Deserialize, Serialize};

use crate::detector::SpadModel;
use crate::error::{Error, Result};
use crate::optics::transmission;
use crate::signal::{RandomStream, Waveform};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeShiftPlan {
    delays_ns: Vec<f64>,
    probabilities: Vec<f64>,
}

impl TimeShiftPlan {
    pub fn new(delays_ns: Vec<f64>, probabilities: Vec<f64>) -> Result<Self> {
        if delays_ns.is_empty() || delays_ns.len() > 2 {
            return Err(Error::config(
                "attack.delays_ns",
                format!("expected one or two delays, got {}", delays_ns.len()),
            ));
        }
        if probabilities.len() != delays_ns.len() {
            return Err(Error::config(
                "attack.probabilities",
                "one probability per delay is required",
            ));
        }
        let total: f64 = probabilities.iter().sum();
        if probabilities.iter().any(|p| !(*p >= 0.0)) || (total - 1.0).abs() > 1e-12 {
            return Err(Error::config(
                "attack.probabilities",
                format!("probabilities must be >= 0 and sum to 1 (sum {total})"),
            ));
        }
        Ok(Self {
            delays_ns,
            probabilities,
        })
    }

    pub fn single(delay_ns: f64) -> Self {
        Self {
            delays_ns: vec![delay_ns],
            probabilities: vec![1.0],
        }
    }

    pub fn delays_ns(&self) -> &[f64] {
        &self.delays_ns
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    /// Index into `delays_ns` for one round; always consumes one draw.
    #[inline]
    pub fn sample_index(&self, stream: &mut RandomStream) -> usize {
        let u = stream.uniform();
        if self.delays_ns.len() == 1 || u < self.probabilities[0] {
            0
        } else {
            1
        }
    }
}

pub fn sample_delay(plan: &TimeShiftPlan, stream: &mut RandomStream) -> f64 {
    plan.delays_ns[plan.sample_index(stream)]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlindingConfig {
    pub attack_prob: f64,
    pub basis_match_prob: f64,
}

impl BlindingConfig {
    pub fn new(attack_prob: f64, basis_match_prob: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&attack_prob) {
            return Err(Error::config(
                "attack.attack_prob",
                format!("{attack_prob} outside [0, 1]"),
            ));
        }
        if !(0.0..=1.0).contains(&basis_match_prob) {
            return Err(Error::config(
                "attack.basis_match_prob",
                format!("{basis_match_prob} outside [0, 1]"),
            ));
        }
        Ok(Self {
            attack_prob,
            basis_match_prob,
        })
    }

    /// Expected forced-click rate.
    pub fn mean_te1(&self) -> f64 {
        self.attack_prob * self.basis_match_prob
    }

    /// Expected forced-silence rate.
    pub fn mean_te0(&self) -> f64 {
        self.attack_prob * (1.0 - self.basis_match_prob)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlindingOutcome {
    pub i_te0: bool,
    pub i_te1: bool,
}

/// One round of intercept-and-resend; always consumes two draws.
#[inline]
pub fn blinding_round(cfg: &BlindingConfig, stream: &mut RandomStream) -> BlindingOutcome {
    let attack = stream.uniform() < cfg.attack_prob;
    let same_basis = stream.uniform() < cfg.basis_match_prob;
    BlindingOutcome {
        i_te0: attack && !same_basis,
        i_te1: attack && same_basis,
    }
}

/// Which detection efficiency enters the calibration formula.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationEfficiency {
    /// Peak of the temporal efficiency profile.
    Peak,
    /// Pulse-weighted overlap `sum eta * pulse / mu_a`.
    Effective,
}

pub const BB84_BASIS_MATCH: f64 = 0.5;

/// Chooses the attack probability so Eve's forced clicks replace Bob's
/// legitimate clicks one for one: `<te1> = <te0> = 1 - exp(-T mu_a eta)`.
pub fn calibrate_blinding(loss_db: f64, mu_a: f64, eta: f64) -> Result<BlindingConfig> {
    if !(loss_db >= 0.0) || !(mu_a >= 0.0) || !(eta >= 0.0) {
        return Err(Error::Calibration(format!(
            "inputs must be nonnegative (loss {loss_db} dB, mu_a {mu_a}, eta {eta})"
        )));
    }
    let target = -(-transmission(loss_db) * mu_a * eta).exp_m1();
    let attack_prob = target / BB84_BASIS_MATCH;
    if attack_prob > 1.0 {
        return Err(Error::Calibration(format!(
            "forced-click target {target} needs attack probability {attack_prob} > 1"
        )));
    }
    BlindingConfig::new(attack_prob, BB84_BASIS_MATCH)
}

pub fn calibration_efficiency(spad: &SpadModel, pulse: &Waveform, mode: CalibrationEfficiency) -> Result<f64> {
    match mode {
        CalibrationEfficiency::Peak => Ok(spad.peak_eta()),
        CalibrationEfficiency::Effective => {
            let mu = pulse.sum();
            if mu <= 0.0 {
                return Ok(spad.peak_eta());
            }
            Ok(spad.detected_photons(pulse)? / mu)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::stream_for_round;

    #[test]
    fn plan_validation() {
        assert!(TimeShiftPlan::new(vec![], vec![]).is_err());
        assert!(TimeShiftPlan::new(vec![1.0, 2.0, 3.0], vec![0.3; 3]).is_err());
        assert!(TimeShiftPlan::new(vec![0.3, -0.3], vec![0.5, 0.6]).is_err());
        assert!(TimeShiftPlan::new(vec![0.3, -0.3], vec![0.5, 0.5]).is_ok());
    }

    #[test]
    fn single_delay_is_constant() {
        let plan = TimeShiftPlan::single(1.0);
        let mut s = stream_for_round(3, 3);
        assert!((0..1000).all(|_| sample_delay(&plan, &mut s) == 1.0));
    }

    #[test]
    fn two_delay_frequencies() {
        let plan = TimeShiftPlan::new(vec![0.3, -0.3], vec![0.5, 0.5]).unwrap();
        let mut s = stream_for_round(8, 0);
        let n = 1_000_000;
        let plus = (0..n).filter(|_| sample_delay(&plan, &mut s) == 0.3).count();
        let f = plus as f64 / n as f64;
        assert!((f - 0.5).abs() <= 0.0015, "{f}");

        let wide = TimeShiftPlan::new(vec![1.0, -1.0], vec![0.5, 0.5]).unwrap();
        assert!((0..10_000).all(|_| {
            let d = sample_delay(&wide, &mut s);
            d == 1.0 || d == -1.0
        }));
    }

    #[test]
    fn no_attack_never_blinds() {
        let cfg = BlindingConfig::new(0.0, 0.5).unwrap();
        let mut s = stream_for_round(2, 2);
        assert!((0..10_000).all(|_| blinding_round(&cfg, &mut s) == BlindingOutcome::default()));
    }

    #[test]
    fn full_attack_splits_by_basis() {
        let cfg = BlindingConfig::new(1.0, 0.5).unwrap();
        let mut s = stream_for_round(2, 3);
        let n = 1_000_000;
        let (mut te0, mut te1) = (0usize, 0usize);
        for _ in 0..n {
            let o = blinding_round(&cfg, &mut s);
            assert!(!(o.i_te0 && o.i_te1));
            te0 += o.i_te0 as usize;
            te1 += o.i_te1 as usize;
        }
        assert!((te0 as f64 / n as f64 - 0.5).abs() <= 0.0015);
        assert!((te1 as f64 / n as f64 - 0.5).abs() <= 0.0015);
    }

    #[test]
    fn calibration_closed_forms() {
        let c = calibrate_blinding(7.0, 0.5, 0.214).unwrap();
        let target = 1.0 - (-(10f64.powf(-0.7)) * 0.5 * 0.214).exp();
        assert!((c.mean_te1() - target).abs() < 1e-15);
        assert!((target - 0.021124).abs() < 1e-6);
        assert!((c.attack_prob - 0.042248).abs() < 2e-6);

        let off = calibrate_blinding(f64::INFINITY, 0.5, 0.214).unwrap();
        assert_eq!(off.attack_prob, 0.0);

        let c20 = calibrate_blinding(20.0, 0.5, 0.214).unwrap();
        let t20 = 1.0 - (-0.01f64 * 0.5 * 0.214).exp();
        assert!((c20.mean_te0() - t20).abs() < 1e-15);
        assert!((t20 - 0.0010694).abs() < 1e-7);

        assert!(matches!(calibrate_blinding(0.0, 5.0, 1.0), Err(Error::Calibration(_))));
    }

    #[test]
    fn forced_click_rate_tracks_configuration() {
        let cfg = calibrate_blinding(3.0, 0.5, 0.214).unwrap();
        let n = 400_000u64;
        let te1 = (0..n)
            .filter(|&i| blinding_round(&cfg, &mut stream_for_round(77, i)).i_te1)
            .count();
        let p = cfg.mean_te1();
        let rate = te1 as f64 / n as f64;
        assert!((rate - p).abs() <= 3.0 * (p * (1.0 - p) / n as f64).sqrt());
    }
}
