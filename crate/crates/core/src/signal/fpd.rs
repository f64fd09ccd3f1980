use super::{TimeGrid, Waveform};

/// Gaussian impulse-response width (ns) times bandwidth (GHz); gives a 10-90 %
/// rise time of about 0.35 / bandwidth.
pub const RISE_SIGMA_NS_GHZ: f64 = 0.1325;

/// Fast photodiode plus oscilloscope, modelled as one Gaussian low-pass.
#[derive(Debug, Clone, PartialEq)]
pub struct FpdFilter {
    kernel: Vec<f64>,
    half: usize,
}

impl FpdFilter {
    /// `None` for an infinite bandwidth (identity measurement).
    pub fn new(grid: &TimeGrid, bandwidth_ghz: f64) -> Option<Self> {
        if bandwidth_ghz.is_infinite() {
            return None;
        }
        assert!(bandwidth_ghz > 0.0, "bandwidth must be positive");
        let sigma = RISE_SIGMA_NS_GHZ / bandwidth_ghz / grid.dt_ns();
        let half = ((5.0 * sigma).ceil() as usize).max(1);
        let mut kernel: Vec<f64> = (0..=2 * half)
            .map(|i| {
                let m = i as f64 - half as f64;
                (-(m * m) / (2.0 * sigma * sigma)).exp()
            })
            .collect();
        let total: f64 = kernel.iter().sum();
        kernel.iter_mut().for_each(|k| *k /= total);
        Some(Self { kernel, half })
    }

    pub fn kernel(&self) -> &[f64] {
        &self.kernel
    }

    pub fn apply(&self, input: &Waveform) -> Waveform {
        let x = input.samples();
        let n = x.len() as isize;
        // half-sample symmetric reflection: x[-1] = x[0], x[n] = x[n-1]
        let reflect = |mut j: isize| -> usize {
            loop {
                if j < 0 {
                    j = -j - 1;
                } else if j >= n {
                    j = 2 * n - j - 1;
                } else {
                    return j as usize;
                }
            }
        };
        let h = self.half as isize;
        let out = (0..n)
            .map(|k| {
                self.kernel
                    .iter()
                    .enumerate()
                    .map(|(i, w)| w * x[reflect(k + i as isize - h)])
                    .sum()
            })
            .collect();
        Waveform::from_raw(*input.grid(), out)
    }
}

pub fn fpd_measure(input: &Waveform, bandwidth_ghz: f64) -> Waveform {
    match FpdFilter::new(input.grid(), bandwidth_ghz) {
        None => input.clone(),
        Some(f) => f.apply(input),
    }
}
