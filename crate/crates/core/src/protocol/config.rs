use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::attacks::CalibrationEfficiency;
use crate::detector::{DEFAULT_DARK_PROB, DEFAULT_FWHM_NS, DEFAULT_GATE_PERIOD_NS, DEFAULT_PEAK_EFFICIENCY};
use crate::error::{Error, Result};
use crate::signal::TrsMode;
use crate::tgi::{BaseMode, DEFAULT_SHAPE_GATE, DEFAULT_THRESHOLD};

/// Fully resolved experiment description. Every field has a default, so an
/// empty file is a valid configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    pub seed: u64,
    pub grid: GridSection,
    pub source: SourceSection,
    pub qkd: QkdSection,
    pub channel: ChannelSection,
    pub detector: DetectorSection,
    pub attack: AttackSection,
    pub protocol: ProtocolSection,
    pub analysis: AnalysisSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub window_ns: f64,
    pub dt_ns: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SourceSection {
    pub mode: TrsMode,
    pub coherence_time_ps: f64,
    /// Joint TGI photons per window launched into the channel.
    pub mu_t: f64,
    /// Fraction of the source sent to the reference arm.
    pub split_ratio: f64,
    /// Reference photodiode plus oscilloscope bandwidth; `"inf"` for none.
    #[serde(with = "float_or_inf")]
    pub ref_bandwidth_ghz: f64,
    /// Target click probability of Bob's local TGI light alone.
    pub local_tb_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QkdSection {
    pub mu_a: f64,
    pub pulse_center_ns: f64,
    pub pulse_fwhm_ns: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelSection {
    pub loss_db: f64,
    /// Fixed propagation offset common to all of Alice's light.
    pub delay_ns: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorSection {
    pub peak_eta: f64,
    pub fwhm_ns: f64,
    /// Defaults to the window midpoint.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub center_ns: Option<f64>,
    pub dark_prob: f64,
    pub gate_period_ns: f64,
    /// Two-column `time_ns eta` table replacing the Gaussian profile.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub profile_file: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackChoice {
    None,
    TimeShift,
    Blinding,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttackSection {
    pub kind: AttackChoice,
    pub delays_ns: Vec<f64>,
    pub probabilities: Vec<f64>,
    /// Blinding probability per round; calibrated to the channel when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub attack_prob: Option<f64>,
    pub basis_match_prob: f64,
    pub calibration_efficiency: CalibrationEfficiency,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProtocolSection {
    pub rounds: u64,
    pub duty_joint: f64,
    pub duty_local: f64,
    pub chunk_rounds: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IaSource {
    /// Legitimate click probability of the attenuated QKD pulse.
    Calibrated,
    /// Dark-corrected click rate of the session's QKD rounds.
    Measured,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisSection {
    pub threshold_k: f64,
    pub shape_gate: f64,
    pub resamples: u64,
    pub retained_rounds: u64,
    pub base: BaseMode,
    pub ia_source: IaSource,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            preset: None,
            seed: 1,
            grid: GridSection::default(),
            source: SourceSection::default(),
            qkd: QkdSection::default(),
            channel: ChannelSection::default(),
            detector: DetectorSection::default(),
            attack: AttackSection::default(),
            protocol: ProtocolSection::default(),
            analysis: AnalysisSection::default(),
        }
    }
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            window_ns: 4.0,
            dt_ns: 0.01,
        }
    }
}

impl Default for SourceSection {
    fn default() -> Self {
        Self {
            mode: TrsMode::UniformBins,
            coherence_time_ps: 80.0,
            mu_t: 0.6,
            split_ratio: 0.5,
            ref_bandwidth_ghz: 12.5,
            local_tb_rate: 0.01,
        }
    }
}

impl Default for QkdSection {
    fn default() -> Self {
        Self {
            mu_a: 0.5,
            pulse_center_ns: 2.0,
            pulse_fwhm_ns: 0.01,
        }
    }
}

impl Default for ChannelSection {
    fn default() -> Self {
        Self {
            loss_db: 3.0,
            delay_ns: 0.0,
        }
    }
}

impl Default for DetectorSection {
    fn default() -> Self {
        Self {
            peak_eta: DEFAULT_PEAK_EFFICIENCY,
            fwhm_ns: DEFAULT_FWHM_NS,
            center_ns: None,
            dark_prob: DEFAULT_DARK_PROB,
            gate_period_ns: DEFAULT_GATE_PERIOD_NS,
            profile_file: None,
        }
    }
}

impl Default for AttackSection {
    fn default() -> Self {
        Self {
            kind: AttackChoice::None,
            delays_ns: Vec::new(),
            probabilities: Vec::new(),
            attack_prob: None,
            basis_match_prob: crate::attacks::BB84_BASIS_MATCH,
            calibration_efficiency: CalibrationEfficiency::Peak,
        }
    }
}

impl Default for ProtocolSection {
    fn default() -> Self {
        Self {
            rounds: 1_000_000,
            duty_joint: 0.1,
            duty_local: 0.1,
            chunk_rounds: 1 << 16,
        }
    }
}

impl Default for AnalysisSection {
    fn default() -> Self {
        Self {
            threshold_k: DEFAULT_THRESHOLD,
            shape_gate: DEFAULT_SHAPE_GATE,
            resamples: 100,
            retained_rounds: 4096,
            base: BaseMode::Paired,
            ia_source: IaSource::Calibrated,
        }
    }
}

mod float_or_inf {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() && *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Int(i64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(v),
            Raw::Int(v) => Ok(v as f64),
            Raw::Text(s) if s == "inf" => Ok(f64::INFINITY),
            Raw::Text(s) => Err(de::Error::custom(format!("expected a number or \"inf\", got {s:?}"))),
        }
    }
}

fn check(ok: bool, key: &str, message: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::config(key, message()))
    }
}

fn unit_interval(v: f64, key: &str) -> Result<()> {
    check((0.0..=1.0).contains(&v), key, || format!("{v} outside [0, 1]"))
}

fn positive(v: f64, key: &str) -> Result<()> {
    check(v > 0.0 && v.is_finite(), key, || format!("{v} must be positive and finite"))
}

fn nonnegative(v: f64, key: &str) -> Result<()> {
    check(v >= 0.0 && v.is_finite(), key, || format!("{v} must be >= 0 and finite"))
}

impl ExperimentConfig {
    /// Checks every parameter against the preconditions of the components it
    /// feeds, reporting the offending key path.
    pub fn validate(&self) -> Result<()> {
        let g = &self.grid;
        positive(g.window_ns, "grid.window_ns")?;
        positive(g.dt_ns, "grid.dt_ns")?;
        crate::signal::TimeGrid::new(g.window_ns, g.dt_ns)
            .map_err(|e| Error::config("grid.dt_ns", e.to_string()))?;

        let s = &self.source;
        positive(s.coherence_time_ps, "source.coherence_time_ps")?;
        check(s.coherence_time_ps / 1000.0 >= g.dt_ns * (1.0 - 1e-9), "source.coherence_time_ps", || {
            format!("{} ps is shorter than grid.dt_ns = {} ns", s.coherence_time_ps, g.dt_ns)
        })?;
        nonnegative(s.mu_t, "source.mu_t")?;
        unit_interval(s.split_ratio, "source.split_ratio")?;
        check(s.split_ratio > 0.0, "source.split_ratio", || "reference arm receives no light".into())?;
        check(s.ref_bandwidth_ghz > 0.0, "source.ref_bandwidth_ghz", || {
            format!("{} must be positive or \"inf\"", s.ref_bandwidth_ghz)
        })?;
        check((0.0..1.0).contains(&s.local_tb_rate), "source.local_tb_rate", || {
            format!("{} outside [0, 1)", s.local_tb_rate)
        })?;

        let q = &self.qkd;
        nonnegative(q.mu_a, "qkd.mu_a")?;
        positive(q.pulse_fwhm_ns, "qkd.pulse_fwhm_ns")?;
        check((0.0..=g.window_ns).contains(&q.pulse_center_ns), "qkd.pulse_center_ns", || {
            format!("{} ns lies outside the {} ns window", q.pulse_center_ns, g.window_ns)
        })?;

        let c = &self.channel;
        check(c.loss_db >= 0.0, "channel.loss_db", || format!("attenuation {} dB must be >= 0", c.loss_db))?;
        check(c.delay_ns.abs() < g.window_ns, "channel.delay_ns", || {
            format!("|{}| ns must be below the window", c.delay_ns)
        })?;

        let d = &self.detector;
        unit_interval(d.peak_eta, "detector.peak_eta")?;
        positive(d.fwhm_ns, "detector.fwhm_ns")?;
        if let Some(c) = d.center_ns {
            check((0.0..=g.window_ns).contains(&c), "detector.center_ns", || {
                format!("{c} ns lies outside the window")
            })?;
        }
        check((0.0..1.0).contains(&d.dark_prob), "detector.dark_prob", || {
            format!("{} outside [0, 1)", d.dark_prob)
        })?;
        positive(d.gate_period_ns, "detector.gate_period_ns")?;

        let a = &self.attack;
        unit_interval(a.basis_match_prob, "attack.basis_match_prob")?;
        if let Some(p) = a.attack_prob {
            unit_interval(p, "attack.attack_prob")?;
        }
        if a.kind == AttackChoice::TimeShift {
            crate::attacks::TimeShiftPlan::new(a.delays_ns.clone(), a.probabilities.clone())?;
            for d in &a.delays_ns {
                check(d.abs() < g.window_ns, "attack.delays_ns", || format!("|{d}| ns must be below the window"))?;
            }
        }

        let p = &self.protocol;
        unit_interval(p.duty_joint, "protocol.duty_joint")?;
        unit_interval(p.duty_local, "protocol.duty_local")?;
        check(p.chunk_rounds > 0, "protocol.chunk_rounds", || "must be positive".into())?;

        let an = &self.analysis;
        positive(an.threshold_k, "analysis.threshold_k")?;
        check((-1.0..=1.0).contains(&an.shape_gate), "analysis.shape_gate", || {
            format!("{} outside [-1, 1]", an.shape_gate)
        })?;
        check(an.resamples >= 20, "analysis.resamples", || format!("{} resamples; at least 20 are needed", an.resamples))?;
        Ok(())
    }

    /// First 16 hex digits of SHA-256 over the canonical JSON encoding.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        let hash = Sha256::digest(&bytes);
        hex::encode(&hash[..8])
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    pub fn to_table(&self) -> toml::Table {
        toml::Table::try_from(self).expect("config serializes to a table")
    }

    pub fn from_table(table: toml::Table) -> Result<Self> {
        toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::config("config", e.message().to_string()))
    }

    /// Defaults overlaid with a named preset.
    pub fn preset(name: &str) -> Result<Self> {
        let mut table = Self::default().to_table();
        merge_tables(&mut table, &super::presets::preset_table(name)?);
        table.insert("preset".into(), toml::Value::String(name.into()));
        Self::from_table(table)
    }
}

/// Recursively overlays `overlay` onto `base`; integers landing on float
/// fields are widened.
pub fn merge_tables(base: &mut toml::Table, overlay: &toml::Table) {
    for (key, value) in overlay {
        match (base.get_mut(key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge_tables(b, o),
            (Some(toml::Value::Float(_)), toml::Value::Integer(i)) => {
                base.insert(key.clone(), toml::Value::Float(*i as f64));
            }
            _ => {
                base.insert(key.clone(), value.clone());
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let c = ExperimentConfig::default();
        c.validate().unwrap();
        let back: ExperimentConfig = toml::from_str(&c.to_toml()).unwrap();
        assert_eq!(back, c);
        assert_eq!(c.digest().len(), 16);
    }

    #[test]
    fn infinite_bandwidth_survives_toml_and_json() {
        let mut c = ExperimentConfig::default();
        c.source.ref_bandwidth_ghz = f64::INFINITY;
        let back: ExperimentConfig = toml::from_str(&c.to_toml()).unwrap();
        assert!(back.source.ref_bandwidth_ghz.is_infinite());
        let json = serde_json::to_string(&c).unwrap();
        assert!(json.contains("\"ref_bandwidth_ghz\":\"inf\""));
        let back: ExperimentConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn negative_loss_names_its_key() {
        let mut c = ExperimentConfig::default();
        c.channel.loss_db = -1.0;
        match c.validate() {
            Err(Error::Config { key, .. }) => assert_eq!(key, "channel.loss_db"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn digest_tracks_content() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        b.seed = 2;
        assert_ne!(a.digest(), b.digest());
        assert_eq!(a.digest(), a.clone().digest());
    }

    #[test]
    fn merge_widens_integers() {
        let mut base = ExperimentConfig::default().to_table();
        let overlay: toml::Table = toml::from_str("[channel]\nloss_db = 7\n").unwrap();
        merge_tables(&mut base, &overlay);
        let c = ExperimentConfig::from_table(base).unwrap();
        assert_eq!(c.channel.loss_db, 7.0);
    }
}
