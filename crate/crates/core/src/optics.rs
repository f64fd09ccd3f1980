//! Passive linear elements acting on intensity waveforms: channel loss,
//! variable delay and an incoherent beam splitter.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::Waveform;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelConfig {
    pub loss_db: f64,
    pub delay_ns: f64,
}

impl ChannelConfig {
    pub fn transmission(&self) -> f64 {
        transmission(self.loss_db)
    }
}

pub fn transmission(loss_db: f64) -> f64 {
    10f64.powf(-loss_db / 10.0)
}

pub fn attenuate(wf: &Waveform, loss_db: f64) -> Result<Waveform> {
    if !(loss_db >= 0.0) {
        return Err(Error::config(
            "channel.loss_db",
            format!("attenuation {loss_db} dB must be >= 0"),
        ));
    }
    Ok(wf.scaled(transmission(loss_db)))
}

/// Shifts the waveform later by `delta_ns`, rounded to whole samples. Light
/// pushed past either edge of the window is dropped.
pub fn delay(wf: &Waveform, delta_ns: f64) -> Waveform {
    let shift = (delta_ns / wf.grid().dt_ns()).round() as isize;
    let mut out = vec![0.0; wf.samples().len()];
    crate::stats::shift_zero_fill(wf.samples(), shift, &mut out);
    Waveform::from_raw(*wf.grid(), out)
}

pub fn beamsplit(wf: &Waveform, ratio: f64) -> Result<(Waveform, Waveform)> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(Error::config(
            "source.split_ratio",
            format!("split ratio {ratio} outside [0, 1]"),
        ));
    }
    let a = wf.scaled(ratio);
    // second port as the remainder so the outputs add back to the input
    let b: Vec<f64> = wf
        .samples()
        .iter()
        .zip(a.samples())
        .map(|(x, y)| (x - y).max(0.0))
        .collect();
    Ok((a, Waveform::from_raw(*wf.grid(), b)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{make_grid, stream_for_round, trs_waveform, TrsConfig};

    fn sample_wave() -> Waveform {
        let g = make_grid(4.0, 0.01).unwrap();
        trs_waveform(g, &TrsConfig::default(), &mut stream_for_round(9, 9)).unwrap()
    }

    #[test]
    fn attenuation_factors() {
        let w = sample_wave();
        assert_eq!(attenuate(&w, 0.0).unwrap(), w);
        for (db, f) in [(3.0, 0.501187), (7.0, 0.199526)] {
            let a = attenuate(&w, db).unwrap();
            for (x, y) in w.samples().iter().zip(a.samples()) {
                assert!((y - x * f).abs() <= 1e-6 * x);
            }
        }
        assert!(attenuate(&w, -1.0).is_err());
    }

    #[test]
    fn attenuation_composes() {
        let w = sample_wave();
        let two = attenuate(&attenuate(&w, 2.5).unwrap(), 4.0).unwrap();
        let one = attenuate(&w, 6.5).unwrap();
        for (x, y) in two.samples().iter().zip(one.samples()) {
            assert!((x - y).abs() <= 1e-9 * y.abs());
        }
    }

    #[test]
    fn delay_moves_impulse() {
        let g = make_grid(4.0, 0.01).unwrap();
        let w = Waveform::impulse(g, 100, 1.0);
        assert_eq!(delay(&w, 0.0), w);
        assert_eq!(delay(&w, 1.0).argmax(), 200);
        let back = delay(&Waveform::impulse(g, 200, 1.0), -0.3);
        assert_eq!(back.argmax(), 170);
        assert_eq!(delay(&delay(&w, 0.3), -0.3), w);
    }

    #[test]
    fn delay_drops_light_leaving_window() {
        let g = make_grid(4.0, 0.01).unwrap();
        let w = Waveform::impulse(g, 390, 1.0);
        assert_eq!(delay(&w, 0.2).sum(), 0.0);
    }

    #[test]
    fn beamsplit_conserves() {
        let w = sample_wave();
        let (a, b) = beamsplit(&w, 0.5).unwrap();
        assert_eq!(a, b);
        let (a, b) = beamsplit(&w, 1.0).unwrap();
        assert_eq!(a, w);
        assert!(b.samples().iter().all(|&x| x == 0.0));
        let (a, b) = beamsplit(&w, 0.3).unwrap();
        for ((x, y), z) in a.samples().iter().zip(b.samples()).zip(w.samples()) {
            assert!((x + y - z).abs() <= 1e-12 * z);
        }
        assert!(beamsplit(&w, 1.5).is_err());
    }
}
