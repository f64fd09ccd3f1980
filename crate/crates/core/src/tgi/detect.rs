use serde::{Deserialize, Serialize};

use super::Image;
use crate::error::{Error, Result};
use crate::stats::{pearson, shift_zero_fill};

pub const DEFAULT_THRESHOLD: f64 = 5.0;
pub const DEFAULT_SHAPE_GATE: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    None,
    TimeShift,
    Blinding,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub attacked: bool,
    pub kind: AttackKind,
    /// Peak significance in units of sigma.
    pub statistic: f64,
    /// Delay (ns) or attack-probability estimate.
    pub estimate: Option<f64>,
    /// Correlation of the differential image with the base image.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub shape: Option<f64>,
}

/// Verdict as written to disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictRecord {
    pub attacked: bool,
    pub kind: AttackKind,
    pub statistic: f64,
    pub estimate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub shape: Option<f64>,
    pub n: u64,
    pub config_digest: String,
}

impl VerdictRecord {
    pub fn new(v: Verdict, n: u64, config_digest: impl Into<String>) -> Self {
        Self {
            attacked: v.attacked,
            kind: v.kind,
            statistic: v.statistic,
            estimate: v.estimate,
            shape: v.shape,
            n,
            config_digest: config_digest.into(),
        }
    }
}

/// Largest `|m| / sigma` over samples with a positive sigma.
fn peak_significance(img: &Image) -> Result<f64> {
    let mut best: Option<f64> = None;
    for (m, s) in img.m().iter().zip(img.sigma()) {
        if *s > 0.0 {
            let z = m.abs() / s;
            best = Some(best.map_or(z, |b: f64| b.max(z)));
        }
    }
    match best {
        Some(z) => Ok(z),
        None if img.m().iter().all(|&m| m == 0.0) => Ok(0.0),
        None => Err(Error::Undefined("image has no positive sigma".into())),
    }
}

/// Weighted least-squares amplitude of `y` onto `x`, weights `1/sigma^2`.
fn fitted_amplitude(y: &[f64], sigma: &[f64], x: &[f64]) -> f64 {
    let use_weights = sigma.iter().any(|&s| s > 0.0);
    let (mut num, mut den) = (0.0, 0.0);
    for ((yv, s), xv) in y.iter().zip(sigma).zip(x) {
        let w = match (use_weights, *s > 0.0) {
            (false, _) => 1.0,
            (true, true) => 1.0 / (s * s),
            (true, false) => continue,
        };
        num += w * yv * xv;
        den += w * xv * xv;
    }
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

pub fn detect_blinding(diff: &Image, base: &Image, k: f64) -> Result<Verdict> {
    detect_blinding_gated(diff, base, k, DEFAULT_SHAPE_GATE)
}

/// Blinding alarm: the differential image must be both significant and shaped
/// like the base image.
pub fn detect_blinding_gated(diff: &Image, base: &Image, k: f64, shape_gate: f64) -> Result<Verdict> {
    diff.grid().ensure_same(base.grid())?;
    if base.m().iter().all(|&x| x == 0.0) {
        return Err(Error::Undefined("base image is identically zero".into()));
    }
    let statistic = peak_significance(diff)?;
    let shape = pearson(diff.m(), base.m()).unwrap_or(0.0);
    let attacked = statistic >= k && shape >= shape_gate;
    let estimate = fitted_amplitude(diff.m(), diff.sigma(), base.m());
    Ok(Verdict {
        attacked,
        kind: if attacked { AttackKind::Blinding } else { AttackKind::None },
        statistic,
        estimate: Some(estimate),
        shape: Some(shape),
    })
}

/// Lag order 0, +1, -1, +2, -2, ... so ties resolve to the smallest |lag|.
fn lag_order(max_lag: isize) -> impl Iterator<Item = isize> {
    std::iter::once(0).chain((1..=max_lag).flat_map(|l| [l, -l]))
}

/// Time-shift alarm against a trusted baseline image.
///
/// A delay `d` on the test arm moves the image to `baseline(t + d)`; the
/// estimate is the lag maximizing the correlation with the correspondingly
/// shifted baseline. The statistic is the largest residual, in combined
/// sigma, of the image against the amplitude-fitted unshifted baseline: any
/// delay or mixture of delays that changes the image shape shows up there.
pub fn detect_time_shift(image: &Image, baseline: &Image, k: f64) -> Result<Verdict> {
    image.grid().ensure_same(baseline.grid())?;
    let b = baseline.m();
    if pearson(b, b).is_none() {
        return Err(Error::Undefined("baseline image is flat".into()));
    }
    let n = b.len();
    let dt = image.grid().dt_ns();
    let mut shifted = vec![0.0; n];
    let mut best = (0isize, f64::NEG_INFINITY);
    for lag in lag_order(n as isize / 2) {
        shift_zero_fill(b, -lag, &mut shifted);
        if let Some(r) = pearson(image.m(), &shifted) {
            if r > best.1 {
                best = (lag, r);
            }
        }
    }
    let estimate = best.0 as f64 * dt;
    let statistic = residual_significance(image, baseline);
    let attacked = statistic >= k;
    Ok(Verdict {
        attacked,
        kind: if attacked { AttackKind::TimeShift } else { AttackKind::None },
        statistic,
        estimate: Some(estimate),
        shape: None,
    })
}

/// Largest `|image - a baseline| / sigma` with `a` the weighted fit.
fn residual_significance(image: &Image, baseline: &Image) -> f64 {
    let a = fitted_amplitude(image.m(), image.sigma(), baseline.m());
    let mut z: f64 = 0.0;
    for i in 0..image.m().len() {
        let s = image.sigma()[i].hypot(a * baseline.sigma()[i]);
        if s > 0.0 {
            z = z.max((image.m()[i] - a * baseline.m()[i]).abs() / s);
        }
    }
    z
}
