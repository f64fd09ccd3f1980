//! Small numerical helpers shared by the analysis code: compensated sums and
//! shape comparisons between sampled profiles.

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.compensation += (self.sum - t) + value;
        } else {
            self.compensation += (value - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn merge(&mut self, other: &CompensatedSum) {
        self.add(other.sum);
        self.add(other.compensation);
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

/// Per-sample sums with a two-level scheme: cheap plain additions into a
/// pending buffer, folded periodically into compensated totals.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct SampleSums {
    totals: Vec<CompensatedSum>,
    pending: Vec<f64>,
}

impl SampleSums {
    pub fn zeros(len: usize) -> Self {
        Self {
            totals: vec![CompensatedSum::new(); len],
            pending: vec![0.0; len],
        }
    }

    #[inline]
    pub fn pending_mut(&mut self) -> &mut [f64] {
        &mut self.pending
    }

    pub fn flush(&mut self) {
        for (total, p) in self.totals.iter_mut().zip(self.pending.iter_mut()) {
            if *p != 0.0 {
                total.add(*p);
                *p = 0.0;
            }
        }
    }

    pub fn merge(&mut self, other: &SampleSums) {
        self.flush();
        for (total, (o, p)) in self
            .totals
            .iter_mut()
            .zip(other.totals.iter().zip(&other.pending))
        {
            total.merge(o);
            total.add(*p);
        }
    }

    pub fn values(&self) -> Vec<f64> {
        self.totals
            .iter()
            .zip(&self.pending)
            .map(|(t, p)| t.value() + p)
            .collect()
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Pearson correlation of two equally long profiles. Returns `None` when either
/// side has zero variance.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    if a.is_empty() {
        return None;
    }
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return None;
    }
    Some(sab / (saa * sbb).sqrt())
}

/// `out[k] = src[k - shift]`, zero-filled.
pub fn shift_zero_fill(src: &[f64], shift: isize, out: &mut [f64]) {
    let n = src.len() as isize;
    for (k, o) in out.iter_mut().enumerate() {
        let j = k as isize - shift;
        *o = if (0..n).contains(&j) { src[j as usize] } else { 0.0 };
    }
}

/// Full width at half maximum of a sampled profile, with linear interpolation
/// at the two half-maximum crossings around the global peak.
pub fn fwhm_samples(profile: &[f64]) -> Option<f64> {
    let (peak_idx, &peak) = profile
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))?;
    if peak <= 0.0 {
        return None;
    }
    let half = peak / 2.0;
    let mut left = None;
    for k in (0..peak_idx).rev() {
        if profile[k] <= half {
            let frac = (profile[k + 1] - half) / (profile[k + 1] - profile[k]);
            left = Some(k as f64 + 1.0 - frac);
            break;
        }
    }
    let mut right = None;
    for k in peak_idx + 1..profile.len() {
        if profile[k] <= half {
            let frac = (profile[k - 1] - half) / (profile[k - 1] - profile[k]);
            right = Some(k as f64 - 1.0 + frac);
            break;
        }
    }
    Some(right? - left?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let mut s = CompensatedSum::new();
        s.add(1e16);
        for _ in 0..1000 {
            s.add(1.0);
        }
        s.add(-1e16);
        assert_eq!(s.value(), 1000.0);
    }

    #[test]
    fn sample_sums_merge_matches_single_pass() {
        let mut a = SampleSums::zeros(2);
        let mut b = SampleSums::zeros(2);
        let mut all = SampleSums::zeros(2);
        for i in 0..100 {
            let x = [i as f64 * 0.1, 1.0 / (i as f64 + 1.0)];
            let target = if i < 37 { &mut a } else { &mut b };
            for (p, v) in target.pending_mut().iter_mut().zip(x) {
                *p += v;
            }
            for (p, v) in all.pending_mut().iter_mut().zip(x) {
                *p += v;
            }
        }
        a.merge(&b);
        let (va, vall) = (a.values(), all.values());
        for (x, y) in va.iter().zip(&vall) {
            assert!((x - y).abs() <= 1e-12 * y.abs());
        }
    }

    #[test]
    fn pearson_basics() {
        let a = [0.0, 1.0, 2.0, 1.0, 0.0];
        assert!((pearson(&a, &a).unwrap() - 1.0).abs() < 1e-15);
        let neg: Vec<f64> = a.iter().map(|x| -x).collect();
        assert!((pearson(&a, &neg).unwrap() + 1.0).abs() < 1e-15);
        assert!(pearson(&a, &[1.0; 5]).is_none());
    }

    #[test]
    fn fwhm_of_triangle() {
        let tri = [0.0, 1.0, 2.0, 3.0, 4.0, 3.0, 2.0, 1.0, 0.0];
        assert!((fwhm_samples(&tri).unwrap() - 4.0).abs() < 1e-12);
    }
}
