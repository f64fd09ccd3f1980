use crate::error::{Error, Result};
use crate::signal::{TimeGrid, Waveform};
use crate::stats::SampleSums;

/// Rounds between folds of the plain pending sums into the compensated totals.
const FLUSH_EVERY: u32 = 4096;

/// Counterfactual click channel recorded next to the measured one: the click
/// the TGI light alone would have produced in the same round.
#[derive(Debug, Clone, PartialEq)]
struct Shadow {
    clicks: u64,
    both: u64,
    sum_cross: SampleSums,
}

/// Raw rounds kept for resampling. Holds the lowest-indexed rounds seen, up
/// to `cap`.
#[derive(Debug, Clone, Default, PartialEq)]
struct Retained {
    cap: usize,
    refs: Vec<f64>,
    clicks: Vec<bool>,
}

/// Streaming sufficient statistics of `<dI_ref(t) dI_test>`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationAccumulator {
    grid: TimeGrid,
    n: u64,
    clicks: u64,
    sum_ref: SampleSums,
    sum_ref_sq: SampleSums,
    sum_cross: SampleSums,
    shadow: Option<Shadow>,
    retained: Retained,
    unflushed: u32,
}

impl CorrelationAccumulator {
    pub fn new(grid: TimeGrid) -> Self {
        let len = grid.n_samples();
        Self {
            grid,
            n: 0,
            clicks: 0,
            sum_ref: SampleSums::zeros(len),
            sum_ref_sq: SampleSums::zeros(len),
            sum_cross: SampleSums::zeros(len),
            shadow: None,
            retained: Retained::default(),
            unflushed: 0,
        }
    }

    /// Accumulator that also tracks a paired counterfactual click per round.
    pub fn paired(grid: TimeGrid) -> Self {
        let mut acc = Self::new(grid);
        acc.shadow = Some(Shadow {
            clicks: 0,
            both: 0,
            sum_cross: SampleSums::zeros(grid.n_samples()),
        });
        acc
    }

    /// Keep up to `cap` raw rounds for the permutation noise floor.
    pub fn with_retention(mut self, cap: usize) -> Self {
        self.retained.cap = cap;
        self
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn clicks(&self) -> u64 {
        self.clicks
    }

    pub fn is_paired(&self) -> bool {
        self.shadow.is_some()
    }

    pub fn shadow_clicks(&self) -> Option<u64> {
        self.shadow.as_ref().map(|s| s.clicks)
    }

    /// Rounds where both the measured and the counterfactual click fired.
    pub fn joint_clicks(&self) -> Option<u64> {
        self.shadow.as_ref().map(|s| s.both)
    }

    pub fn retained_len(&self) -> usize {
        self.retained.clicks.len()
    }

    pub fn accumulate(&mut self, reference: &Waveform, click: bool) -> Result<()> {
        self.grid.ensure_same(reference.grid())?;
        if self.shadow.is_some() {
            return Err(Error::InvariantViolation(
                "paired accumulator needs the counterfactual click".into(),
            ));
        }
        self.push(reference.samples(), click, false);
        Ok(())
    }

    pub fn accumulate_paired(&mut self, reference: &Waveform, click: bool, shadow_click: bool) -> Result<()> {
        self.grid.ensure_same(reference.grid())?;
        if self.shadow.is_none() {
            return Err(Error::InvariantViolation("accumulator is not paired".into()));
        }
        self.push(reference.samples(), click, shadow_click);
        Ok(())
    }

    /// Unchecked hot-path update; `reference` must have `n_samples` entries.
    #[inline]
    pub(crate) fn push(&mut self, reference: &[f64], click: bool, shadow_click: bool) {
        debug_assert_eq!(reference.len(), self.grid.n_samples());
        self.n += 1;
        for ((s, q), &r) in self
            .sum_ref
            .pending_mut()
            .iter_mut()
            .zip(self.sum_ref_sq.pending_mut().iter_mut())
            .zip(reference)
        {
            *s += r;
            *q += r * r;
        }
        if click {
            self.clicks += 1;
            add_into(self.sum_cross.pending_mut(), reference);
        }
        if let Some(sh) = self.shadow.as_mut() {
            if shadow_click {
                sh.clicks += 1;
                sh.both += click as u64;
                add_into(sh.sum_cross.pending_mut(), reference);
            }
        }
        if self.retained.clicks.len() < self.retained.cap {
            self.retained.refs.extend_from_slice(reference);
            self.retained.clicks.push(click);
        }
        self.unflushed += 1;
        if self.unflushed >= FLUSH_EVERY {
            self.flush();
        }
    }

    fn flush(&mut self) {
        self.sum_ref.flush();
        self.sum_ref_sq.flush();
        self.sum_cross.flush();
        if let Some(sh) = self.shadow.as_mut() {
            sh.sum_cross.flush();
        }
        self.unflushed = 0;
    }

    /// Folds `other` into `self`. Rounds of `other` are taken to come after
    /// the rounds of `self`.
    pub fn merge(&mut self, other: &CorrelationAccumulator) -> Result<()> {
        self.grid.ensure_same(&other.grid)?;
        if self.shadow.is_some() != other.shadow.is_some() {
            return Err(Error::InvariantViolation(
                "cannot merge paired and unpaired accumulators".into(),
            ));
        }
        self.n += other.n;
        self.clicks += other.clicks;
        self.sum_ref.merge(&other.sum_ref);
        self.sum_ref_sq.merge(&other.sum_ref_sq);
        self.sum_cross.merge(&other.sum_cross);
        if let (Some(a), Some(b)) = (self.shadow.as_mut(), other.shadow.as_ref()) {
            a.clicks += b.clicks;
            a.both += b.both;
            a.sum_cross.merge(&b.sum_cross);
        }
        let room = self.retained.cap.saturating_sub(self.retained.clicks.len());
        let take = room.min(other.retained.clicks.len());
        if take > 0 {
            let len = self.grid.n_samples();
            self.retained
                .refs
                .extend_from_slice(&other.retained.refs[..take * len]);
            self.retained
                .clicks
                .extend_from_slice(&other.retained.clicks[..take]);
        }
        self.unflushed = 0;
        Ok(())
    }

    pub(crate) fn sums(&self) -> Sums {
        Sums {
            n: self.n,
            clicks: self.clicks,
            sum_ref: self.sum_ref.values(),
            sum_ref_sq: self.sum_ref_sq.values(),
            sum_cross: self.sum_cross.values(),
        }
    }

    /// Sums of the counterfactual channel, in the same layout.
    pub(crate) fn shadow_sums(&self) -> Option<(Sums, u64)> {
        let sh = self.shadow.as_ref()?;
        Some((
            Sums {
                n: self.n,
                clicks: sh.clicks,
                sum_ref: self.sum_ref.values(),
                sum_ref_sq: self.sum_ref_sq.values(),
                sum_cross: sh.sum_cross.values(),
            },
            sh.both,
        ))
    }

    pub(crate) fn retained(&self) -> (&[f64], &[bool]) {
        (&self.retained.refs, &self.retained.clicks)
    }
}

#[inline]
fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

/// Plain totals read out of an accumulator.
#[derive(Debug, Clone)]
pub(crate) struct Sums {
    pub n: u64,
    pub clicks: u64,
    pub sum_ref: Vec<f64>,
    pub sum_ref_sq: Vec<f64>,
    pub sum_cross: Vec<f64>,
}

impl Sums {
    /// Population variance of the reference at each sample.
    pub fn var_ref(&self) -> Vec<f64> {
        let n = self.n as f64;
        self.sum_ref
            .iter()
            .zip(&self.sum_ref_sq)
            .map(|(s, q)| {
                let mean = s / n;
                (q / n - mean * mean).max(0.0)
            })
            .collect()
    }

    pub fn click_rate(&self) -> f64 {
        self.clicks as f64 / self.n as f64
    }

    /// `<r(t) c> - <r(t)><c>`
    pub fn covariance(&self) -> Vec<f64> {
        let n = self.n as f64;
        let p = self.click_rate();
        self.sum_cross
            .iter()
            .zip(&self.sum_ref)
            .map(|(x, s)| x / n - (s / n) * p)
            .collect()
    }
}
