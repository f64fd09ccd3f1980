use std::collections::BTreeMap;
use std::path::Path;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::config::{AttackChoice, ExperimentConfig, IaSource};
use super::engine::{run_session, Execution, SessionPlan, SessionStats};
use super::model::SessionModel;
use crate::error::{Error, Result};
use crate::signal::{derive_seed, stream_for_round};
use crate::tgi::{
    detect_blinding_gated, detect_time_shift, differential_image, noise_floor, paired_differential,
    predicted_factor, reconstruct, reconstruct_shadow, write_image_csv, BaseMode, CorrelationAccumulator, Image,
    ImageKind, VerdictRecord,
};

#[derive(Debug, Clone, PartialEq)]
pub struct NamedImage {
    pub name: String,
    pub kind: ImageKind,
    pub image: Image,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundCounts {
    pub total: u64,
    pub joint: u64,
    pub local: u64,
    pub qkd: u64,
    pub abandoned: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rates {
    pub joint_click: Option<f64>,
    pub local_click: Option<f64>,
    /// Click rate of the local TGI light alone.
    pub local_tb: Option<f64>,
    pub qkd_click: Option<f64>,
    /// QKD click rate with dark counts removed, `(q - d) / (1 - d)`.
    pub qkd_attributable: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisSummary {
    pub ia_used: Option<f64>,
    pub id_used: f64,
    pub predicted_factor: Option<f64>,
    /// Mean photon number per window of Bob's local TGI light.
    pub local_intensity: f64,
    pub attack_prob: Option<f64>,
    pub base: BaseMode,
}

/// Median over samples of bootstrap sigma / closed-form sigma.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseFloorSummary {
    pub joint: Option<f64>,
    pub local: Option<f64>,
}

/// Ground truth rates over all rounds; never used by the analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthSummary {
    pub forced_click_rate: f64,
    pub forced_silence_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub preset: Option<String>,
    pub seed: u64,
    pub config_digest: String,
    pub rounds: RoundCounts,
    pub rates: Rates,
    pub analysis: AnalysisSummary,
    pub noise_floor: NoiseFloorSummary,
    pub truth: TruthSummary,
    pub config: ExperimentConfig,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub images: Vec<NamedImage>,
    pub verdicts: BTreeMap<String, VerdictRecord>,
    pub summary: Summary,
    pub runtime: Duration,
}

fn rate(count: u64, n: u64) -> Option<f64> {
    (n > 0).then(|| count as f64 / n as f64)
}

fn session(cfg: &ExperimentConfig, exec: Execution) -> Result<(SessionModel, SessionStats)> {
    let model = SessionModel::new(cfg)?;
    let plan = SessionPlan {
        rounds: cfg.protocol.rounds,
        chunk_rounds: cfg.protocol.chunk_rounds,
        retained_rounds: cfg.analysis.retained_rounds as usize,
    };
    let stats = run_session(&model, plan, exec)?;
    Ok((model, stats))
}

/// Joint-TGI-only session without any attack, used as the trusted image.
fn baseline_config(cfg: &ExperimentConfig, rounds: u64) -> ExperimentConfig {
    let mut b = cfg.clone();
    b.seed = derive_seed(cfg.seed, "baseline");
    b.attack.kind = AttackChoice::None;
    b.protocol.duty_joint = 1.0;
    b.protocol.duty_local = 0.0;
    b.protocol.rounds = rounds;
    b
}

/// Local-TGI-only session with neither QKD light, dark counts nor attack.
fn base_config(cfg: &ExperimentConfig, rounds: u64) -> ExperimentConfig {
    let mut b = cfg.clone();
    b.seed = derive_seed(cfg.seed, "base");
    b.attack.kind = AttackChoice::None;
    b.qkd.mu_a = 0.0;
    b.detector.dark_prob = 0.0;
    b.protocol.duty_joint = 0.0;
    b.protocol.duty_local = 1.0;
    b.protocol.rounds = rounds;
    b
}

fn noise_ratio(acc: &CorrelationAccumulator, image: &Image, resamples: u64, seed: u64) -> Result<Option<f64>> {
    if acc.retained_len() < 2 {
        return Ok(None);
    }
    let mut stream = stream_for_round(seed, 0);
    let boot = noise_floor(acc, resamples as usize, &mut stream)?;
    let mut ratios: Vec<f64> = boot
        .iter()
        .zip(image.sigma())
        .filter(|(_, s)| **s > 0.0)
        .map(|(b, s)| b / s)
        .collect();
    if ratios.is_empty() {
        return Ok(None);
    }
    ratios.sort_by(f64::total_cmp);
    let mid = ratios.len() / 2;
    Ok(Some(if ratios.len() % 2 == 1 {
        ratios[mid]
    } else {
        0.5 * (ratios[mid - 1] + ratios[mid])
    }))
}

/// Runs the session described by `cfg`, sifts it, reconstructs the joint and
/// local images and issues the verdicts.
pub fn run_experiment(cfg: &ExperimentConfig, exec: Execution) -> Result<ExperimentResult> {
    let started = Instant::now();
    cfg.validate()?;
    let digest = cfg.digest();
    let an = &cfg.analysis;
    let (model, stats) = session(cfg, exec)?;

    let mut images = Vec::new();
    let mut verdicts = BTreeMap::new();
    let mut push = |name: &str, kind: ImageKind, image: &Image| {
        images.push(NamedImage {
            name: name.to_string(),
            kind,
            image: image.clone(),
        })
    };

    let mut joint_noise = None;
    if stats.joint.n() >= 2 {
        let joint = reconstruct(&stats.joint)?;
        let (_, base_stats) = session(&baseline_config(cfg, stats.joint.n()), exec)?;
        let baseline = reconstruct(&base_stats.joint)?;
        let v = detect_time_shift(&joint, &baseline, an.threshold_k)?;
        verdicts.insert("time_shift".to_string(), VerdictRecord::new(v, joint.n(), &digest));
        joint_noise = noise_ratio(&stats.joint, &joint, an.resamples, derive_seed(cfg.seed, "noise_floor_joint"))?;
        push("joint", ImageKind::Measured, &joint);
        push("joint_baseline", ImageKind::Baseline, &baseline);
    }

    let dark = model.dark_prob();
    let qkd_rate = stats.qkd_click_rate();
    let qkd_attributable = qkd_rate.map(|q| ((q - dark) / (1.0 - dark)).max(0.0));
    let (mut ia_used, mut factor, mut local_noise) = (None, None, None);
    if stats.local.n() >= 2 {
        let measured = reconstruct(&stats.local)?;
        let ia = match an.ia_source {
            IaSource::Calibrated => model.legit_qkd_click(),
            IaSource::Measured => qkd_attributable.ok_or_else(|| {
                Error::config("analysis.ia_source", "measured <I_ta> needs QKD rounds; raise 1 - duty_local")
            })?,
        };
        let c = predicted_factor(ia, dark)?;
        let (base, diff) = match an.base {
            BaseMode::Paired => (reconstruct_shadow(&stats.local)?, paired_differential(&stats.local, c)?),
            BaseMode::Independent => {
                let (_, b) = session(&base_config(cfg, stats.local.n()), exec)?;
                let base = reconstruct(&b.local)?;
                let diff = differential_image(&base.scaled(c), &measured)?;
                (base, diff)
            }
        };
        let v = detect_blinding_gated(&diff, &base, an.threshold_k, an.shape_gate)?;
        verdicts.insert("blinding".to_string(), VerdictRecord::new(v, diff.n(), &digest));
        local_noise = noise_ratio(&stats.local, &measured, an.resamples, derive_seed(cfg.seed, "noise_floor_local"))?;
        push("local", ImageKind::Measured, &measured);
        push("local_base", ImageKind::Base, &base);
        push("local_predicted", ImageKind::Predicted, &base.scaled(c));
        push("local_differential", ImageKind::Differential, &diff);
        ia_used = Some(ia);
        factor = Some(c);
    }

    let summary = Summary {
        preset: cfg.preset.clone(),
        seed: cfg.seed,
        config_digest: digest.clone(),
        rounds: RoundCounts {
            total: stats.rounds,
            joint: stats.joint_rounds,
            local: stats.local_rounds,
            qkd: stats.qkd_rounds,
            abandoned: stats.abandoned,
        },
        rates: Rates {
            joint_click: rate(stats.joint.clicks(), stats.joint.n()),
            local_click: rate(stats.local.clicks(), stats.local.n()),
            local_tb: stats.local.shadow_clicks().and_then(|c| rate(c, stats.local.n())),
            qkd_click: qkd_rate,
            qkd_attributable,
        },
        analysis: AnalysisSummary {
            ia_used,
            id_used: dark,
            predicted_factor: factor,
            local_intensity: model.local_intensity(),
            attack_prob: model.blinding().map(|b| b.attack_prob),
            base: an.base,
        },
        noise_floor: NoiseFloorSummary {
            joint: joint_noise,
            local: local_noise,
        },
        truth: TruthSummary {
            forced_click_rate: rate(stats.forced_clicks, stats.rounds).unwrap_or(0.0),
            forced_silence_rate: rate(stats.forced_silences, stats.rounds).unwrap_or(0.0),
        },
        config: cfg.clone(),
    };

    Ok(ExperimentResult {
        config: cfg.clone(),
        images,
        verdicts,
        summary,
        runtime: started.elapsed(),
    })
}

impl ExperimentResult {
    pub fn attacked(&self) -> bool {
        self.verdicts.values().any(|v| v.attacked)
    }

    pub fn image(&self, name: &str) -> Option<&Image> {
        self.images.iter().find(|i| i.name == name).map(|i| &i.image)
    }

    /// Writes `images/*.csv`, `verdicts.json`, `summary.json` and the
    /// resolved `config.toml` into `dir`, which must exist.
    pub fn write(&self, dir: &Path) -> Result<()> {
        if !dir.is_dir() {
            return Err(Error::Io {
                path: dir.to_path_buf(),
                source: std::io::Error::new(std::io::ErrorKind::NotFound, "output directory does not exist"),
            });
        }
        let images = dir.join("images");
        std::fs::create_dir_all(&images).map_err(|e| Error::io(&images, e))?;
        let digest = &self.summary.config_digest;
        for img in &self.images {
            write_image_csv(&images.join(format!("{}.csv", img.name)), &img.image, img.kind, digest)?;
        }
        write_json(&dir.join("verdicts.json"), &self.verdicts)?;
        write_json(&dir.join("summary.json"), &self.summary)?;
        let path = dir.join("config.toml");
        std::fs::write(&path, self.config.to_toml()).map_err(|e| Error::io(&path, e))
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("results serialize to JSON");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
