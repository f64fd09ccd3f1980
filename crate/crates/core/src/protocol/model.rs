use std::path::Path;

use super::config::{AttackChoice, ExperimentConfig};
use super::schedule::{classify, draw_labels, AliceLabel, BobLabel, RoundClass};
use crate::attacks::{
    blinding_round, calibrate_blinding, calibration_efficiency, BlindingConfig, BlindingOutcome, TimeShiftPlan,
};
use crate::detector::{compose_click, ClickSources, SpadModel};
use crate::error::{Error, Result};
use crate::optics::{self, transmission};
use crate::signal::{fpd_measure, qkd_pulse, SparseColumns, StreamFactory, TimeGrid, TrsConfig, TrsModel, Waveform};
use crate::stats::dot;
use crate::tgi::Observation;

pub fn build_grid(cfg: &ExperimentConfig) -> Result<TimeGrid> {
    TimeGrid::new(cfg.grid.window_ns, cfg.grid.dt_ns).map_err(|e| Error::config("grid.dt_ns", e.to_string()))
}

pub fn build_spad(cfg: &ExperimentConfig, grid: TimeGrid) -> Result<SpadModel> {
    let d = &cfg.detector;
    let shape = match &d.profile_file {
        Some(path) => SpadModel::from_profile_file(grid, Path::new(path), d.dark_prob)?,
        None => SpadModel::gaussian(
            grid,
            d.peak_eta,
            d.center_ns.unwrap_or(grid.window_ns() / 2.0),
            d.fwhm_ns,
            d.dark_prob,
        )?,
    };
    SpadModel::new(grid, shape.eta().to_vec(), d.dark_prob, d.gate_period_ns)
}

/// Ground truth of one round. Only validation code looks at it.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RoundTruth {
    /// Eve's extra delay on Alice's light, zero without a time-shift attack.
    pub attack_delay_ns: f64,
    pub blinding: BlindingOutcome,
    pub sources: ClickSources,
}

/// Everything one round produced.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    pub index: u64,
    pub alice: AliceLabel,
    pub bob: BobLabel,
    /// Alice's reference trace, when she ran joint TGI.
    pub alice_ref: Option<Waveform>,
    /// Bob's reference trace, when he ran local TGI.
    pub bob_ref: Option<Waveform>,
    pub click: bool,
    /// Click the TGI light alone would have produced.
    pub tgi_click: bool,
    truth: RoundTruth,
}

impl RoundRecord {
    pub fn class(&self) -> RoundClass {
        classify(self.alice, self.bob)
    }

    /// Reference of the TGI the round is retained for after sifting.
    pub fn ref_waveform(&self) -> Option<&Waveform> {
        match self.class() {
            RoundClass::Joint => self.alice_ref.as_ref(),
            RoundClass::Local => self.bob_ref.as_ref(),
            RoundClass::Qkd | RoundClass::Abandoned => None,
        }
    }

    pub fn truth(&self) -> &RoundTruth {
        &self.truth
    }
}

impl Observation for RoundRecord {
    fn reference(&self) -> Option<&Waveform> {
        self.ref_waveform()
    }

    fn click(&self) -> bool {
        self.click
    }
}

/// Per-worker buffers for the latent vectors and one reference trace.
#[derive(Debug, Clone)]
pub struct Scratch {
    pub(crate) za: Vec<f64>,
    pub(crate) zb: Vec<f64>,
    pub(crate) reference: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct RoundCore {
    pub alice: AliceLabel,
    pub bob: BobLabel,
    pub click: bool,
    pub truth: RoundTruth,
}

/// Precomputed per-session optics.
///
/// Both TRS arms are linear in the latent vector `z`, so the detected photon
/// number of a TGI arm is a fixed weight vector dotted with `z`.
#[derive(Debug, Clone)]
pub struct SessionModel {
    grid: TimeGrid,
    spad: SpadModel,
    trs: TrsModel,
    joint_ref: SparseColumns,
    local_ref: SparseColumns,
    /// Detected-photon weights of the joint test arm, one per attack delay.
    w_joint: Vec<Vec<f64>>,
    w_local: Vec<f64>,
    attack_delays: Vec<f64>,
    /// Light-only click probability of Alice's pulse, one per attack delay.
    qkd_click: Vec<f64>,
    legit_qkd_click: f64,
    time_shift: Option<TimeShiftPlan>,
    blinding: Option<BlindingConfig>,
    duty_joint: f64,
    duty_local: f64,
    local_intensity: f64,
    factory: StreamFactory,
}

impl SessionModel {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let grid = build_grid(cfg)?;
        let spad = build_spad(cfg, grid)?;
        let trs = TrsModel::new(
            grid,
            &TrsConfig {
                mode: cfg.source.mode,
                coherence_time_ps: cfg.source.coherence_time_ps,
                mean_intensity: 1.0,
            },
        )?;
        let t = transmission(cfg.channel.loss_db);
        let bandwidth = cfg.source.ref_bandwidth_ghz;

        let time_shift = match cfg.attack.kind {
            AttackChoice::TimeShift => Some(TimeShiftPlan::new(
                cfg.attack.delays_ns.clone(),
                cfg.attack.probabilities.clone(),
            )?),
            _ => None,
        };
        let attack_delays = time_shift.as_ref().map_or(vec![0.0], |p| p.delays_ns().to_vec());

        let pulse = optics::attenuate(
            &qkd_pulse(grid, cfg.qkd.mu_a, cfg.qkd.pulse_center_ns, cfg.qkd.pulse_fwhm_ns)?,
            cfg.channel.loss_db,
        )?;
        let at_bob = |extra: f64| optics::delay(&pulse, cfg.channel.delay_ns + extra);
        let qkd_click = attack_delays
            .iter()
            .map(|&d| spad.light_click_probability(&at_bob(d)))
            .collect::<Result<Vec<_>>>()?;
        let legit_qkd_click = spad.light_click_probability(&at_bob(0.0))?;

        let blinding = match cfg.attack.kind {
            AttackChoice::Blinding => Some(match cfg.attack.attack_prob {
                Some(p) => BlindingConfig::new(p, cfg.attack.basis_match_prob)?,
                None => {
                    let raw = qkd_pulse(grid, cfg.qkd.mu_a, cfg.qkd.pulse_center_ns, cfg.qkd.pulse_fwhm_ns)?;
                    let eta = calibration_efficiency(&spad, &raw, cfg.attack.calibration_efficiency)?;
                    calibrate_blinding(cfg.channel.loss_db, cfg.qkd.mu_a, eta)?
                }
            }),
            _ => None,
        };

        let test_arm = trs.basis().scaled(cfg.source.mu_t * t);
        let w_joint = attack_delays
            .iter()
            .map(|&d| {
                if blinding.is_some() {
                    // Eve intercepts everything Alice sends
                    return vec![0.0; trs.n_latent()];
                }
                let total = cfg.channel.delay_ns + d;
                test_arm
                    .then(grid, |w| optics::delay(w, total))
                    .transpose_apply(spad.eta())
            })
            .collect();

        let unit = trs.basis().transpose_apply(spad.eta());
        let local_intensity = local_scale(&trs, &unit, cfg.source.local_tb_rate)?;
        let w_local = unit.iter().map(|a| a * local_intensity).collect();

        let joint_ref = trs
            .basis()
            .scaled(cfg.source.split_ratio)
            .then(grid, |w| fpd_measure(w, bandwidth));
        let local_ref = trs
            .basis()
            .scaled(local_intensity)
            .then(grid, |w| fpd_measure(w, bandwidth));

        Ok(Self {
            grid,
            spad,
            trs,
            joint_ref,
            local_ref,
            w_joint,
            w_local,
            attack_delays,
            qkd_click,
            legit_qkd_click,
            time_shift,
            blinding,
            duty_joint: cfg.protocol.duty_joint,
            duty_local: cfg.protocol.duty_local,
            local_intensity,
            factory: StreamFactory::new(cfg.seed),
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn spad(&self) -> &SpadModel {
        &self.spad
    }

    pub fn trs(&self) -> &TrsModel {
        &self.trs
    }

    pub fn blinding(&self) -> Option<&BlindingConfig> {
        self.blinding.as_ref()
    }

    pub fn time_shift(&self) -> Option<&TimeShiftPlan> {
        self.time_shift.as_ref()
    }

    /// Light-only click probability of Alice's attenuated pulse without any
    /// attack delay.
    pub fn legit_qkd_click(&self) -> f64 {
        self.legit_qkd_click
    }

    /// Mean photon number per window of Bob's local TGI light.
    pub fn local_intensity(&self) -> f64 {
        self.local_intensity
    }

    pub fn dark_prob(&self) -> f64 {
        self.spad.dark_prob()
    }

    pub fn scratch(&self) -> Scratch {
        Scratch {
            za: vec![0.0; self.trs.n_latent()],
            zb: vec![0.0; self.trs.n_latent()],
            reference: vec![0.0; self.grid.n_samples()],
        }
    }

    /// Simulates round `index`, leaving the latents in `scratch`.
    ///
    /// Draw order: labels, attack, Alice's latents, Bob's latents, then the
    /// TGI, QKD and dark-count uniforms.
    #[inline]
    pub(crate) fn simulate(&self, index: u64, scratch: &mut Scratch) -> Result<RoundCore> {
        let mut stream = self.factory.stream(index);
        let (alice, bob) = draw_labels(&mut stream, self.duty_joint, self.duty_local);
        let delay_idx = match &self.time_shift {
            Some(plan) => plan.sample_index(&mut stream),
            None => 0,
        };
        let blinding = match &self.blinding {
            Some(b) => blinding_round(b, &mut stream),
            None => BlindingOutcome::default(),
        };
        let joint = alice == AliceLabel::JointTgi;
        let local = bob == BobLabel::LocalTgi;
        let mut photons = 0.0;
        if joint {
            self.trs.draw_latents(&mut stream, &mut scratch.za);
            photons += dot(&self.w_joint[delay_idx], &scratch.za);
        }
        if local {
            self.trs.draw_latents(&mut stream, &mut scratch.zb);
            photons += dot(&self.w_local, &scratch.zb);
        }
        let (u_tb, u_ta, u_td) = (stream.uniform(), stream.uniform(), stream.uniform());
        let p_ta = if joint || self.blinding.is_some() {
            0.0
        } else {
            self.qkd_click[delay_idx]
        };
        let sources = ClickSources {
            i_tb: u_tb < -(-photons).exp_m1(),
            i_ta: u_ta < p_ta,
            i_td: u_td < self.spad.dark_prob(),
            i_te0: blinding.i_te0,
            i_te1: blinding.i_te1,
        };
        let click = compose_click(sources, self.blinding.is_some())?;
        Ok(RoundCore {
            alice,
            bob,
            click,
            truth: RoundTruth {
                attack_delay_ns: self.attack_delays[delay_idx],
                blinding,
                sources,
            },
        })
    }

    #[inline]
    pub(crate) fn joint_reference(&self, scratch: &mut Scratch) {
        self.joint_ref.apply(&scratch.za, &mut scratch.reference);
    }

    #[inline]
    pub(crate) fn local_reference(&self, scratch: &mut Scratch) {
        self.local_ref.apply(&scratch.zb, &mut scratch.reference);
    }

    pub fn run_round(&self, index: u64) -> Result<RoundRecord> {
        let mut scratch = self.scratch();
        let core = self.simulate(index, &mut scratch)?;
        let trace = |map: &SparseColumns, z: &[f64]| {
            let mut out = vec![0.0; self.grid.n_samples()];
            map.apply(z, &mut out);
            Waveform::from_samples(self.grid, out)
        };
        Ok(RoundRecord {
            index,
            alice: core.alice,
            bob: core.bob,
            alice_ref: match core.alice {
                AliceLabel::JointTgi => Some(trace(&self.joint_ref, &scratch.za)?),
                AliceLabel::Qkd => None,
            },
            bob_ref: match core.bob {
                BobLabel::LocalTgi => Some(trace(&self.local_ref, &scratch.zb)?),
                BobLabel::Qkd => None,
            },
            click: core.click,
            tgi_click: core.truth.sources.i_tb,
            truth: core.truth,
        })
    }
}

/// Mean photon number of Bob's local light that makes the light alone fire
/// the detector with probability `rate`.
fn local_scale(trs: &TrsModel, unit_weights: &[f64], rate: f64) -> Result<f64> {
    if rate <= 0.0 {
        return Ok(0.0);
    }
    let fire = |s: f64| {
        let w: Vec<f64> = unit_weights.iter().map(|a| a * s).collect();
        1.0 - trs.escape_expectation(&w)
    };
    let mut hi = 1.0;
    while fire(hi) < rate {
        hi *= 2.0;
        if hi > 1e12 {
            return Err(Error::Calibration(format!(
                "local TGI light cannot reach a click rate of {rate}"
            )));
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if fire(mid) < rate {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::click_probability;

    fn joint_config() -> ExperimentConfig {
        let mut c = ExperimentConfig::default();
        c.protocol.duty_joint = 1.0;
        c.protocol.duty_local = 0.0;
        c
    }

    #[test]
    fn joint_click_rate_matches_mean_waveform() {
        let cfg = joint_config();
        let model = SessionModel::new(&cfg).unwrap();
        let n = 1_000_000u64;
        let clicks = (0..n).filter(|&i| model.run_round(i).unwrap().click).count() as f64;
        let rate = clicks / n as f64;

        // mean test-arm waveform: uniform mu_t over the window, attenuated
        let g = model.grid;
        let mean = Waveform::from_samples(g, vec![cfg.source.mu_t / g.n_samples() as f64; g.n_samples()]).unwrap();
        let expected = click_probability(&model.spad, &optics::attenuate(&mean, 3.0).unwrap()).unwrap();
        let se = (expected * (1.0 - expected) / n as f64).sqrt();
        assert!((rate - expected).abs() < 3.0 * se, "rate {rate} expected {expected} se {se}");
    }

    #[test]
    fn local_qkd_rate_near_reference_value() {
        let mut cfg = ExperimentConfig::default();
        cfg.protocol.duty_joint = 0.0;
        cfg.protocol.duty_local = 1.0;
        let model = SessionModel::new(&cfg).unwrap();
        let ia = model.legit_qkd_click();
        assert!((ia - 0.052).abs() < 0.001, "{ia}");
        assert!((ia - 0.050).abs() / 0.050 < 0.10);

        let n = 200_000u64;
        let ta = (0..n).filter(|&i| model.run_round(i).unwrap().truth().sources.i_ta).count() as f64 / n as f64;
        let se = (ia * (1.0 - ia) / n as f64).sqrt();
        assert!((ta - ia).abs() < 4.0 * se, "{ta} vs {ia}");
    }

    #[test]
    fn local_light_hits_its_target_rate() {
        let mut cfg = ExperimentConfig::default();
        cfg.protocol.duty_joint = 0.0;
        cfg.protocol.duty_local = 1.0;
        cfg.source.local_tb_rate = 0.05;
        let model = SessionModel::new(&cfg).unwrap();
        let n = 200_000u64;
        let tb = (0..n).filter(|&i| model.run_round(i).unwrap().tgi_click).count() as f64 / n as f64;
        let se = (0.05f64 * 0.95 / n as f64).sqrt();
        assert!((tb - 0.05).abs() < 4.0 * se, "{tb}");
    }

    #[test]
    fn full_blinding_clicks_are_forced_clicks() {
        let mut cfg = ExperimentConfig::default();
        cfg.protocol.duty_joint = 0.0;
        cfg.protocol.duty_local = 1.0;
        cfg.attack.kind = AttackChoice::Blinding;
        cfg.attack.attack_prob = Some(1.0);
        let model = SessionModel::new(&cfg).unwrap();
        for i in 0..50_000 {
            let r = model.run_round(i).unwrap();
            assert_eq!(r.click, r.truth().blinding.i_te1);
        }
    }

    #[test]
    fn records_carry_references_per_label() {
        let model = SessionModel::new(&ExperimentConfig::default()).unwrap();
        for i in 0..5000 {
            let r = model.run_round(i).unwrap();
            assert_eq!(r.alice_ref.is_some(), r.alice == AliceLabel::JointTgi);
            assert_eq!(r.bob_ref.is_some(), r.bob == BobLabel::LocalTgi);
            assert_eq!(r.ref_waveform().is_some(), matches!(r.class(), RoundClass::Joint | RoundClass::Local));
        }
    }

    #[test]
    fn labels_agree_with_schedule() {
        let cfg = ExperimentConfig::default();
        let model = SessionModel::new(&cfg).unwrap();
        let s = super::super::schedule::schedule(2000, cfg.protocol.duty_joint, cfg.protocol.duty_local, cfg.seed);
        for i in 0..2000 {
            let r = model.run_round(i as u64).unwrap();
            assert_eq!((r.alice, r.bob), (s.alice_labels[i], s.bob_labels[i]));
        }
    }

    #[test]
    fn rerun_is_identical() {
        let model = SessionModel::new(&ExperimentConfig::default()).unwrap();
        for i in [0, 7, 123_456] {
            assert_eq!(model.run_round(i).unwrap(), model.run_round(i).unwrap());
        }
    }
}
