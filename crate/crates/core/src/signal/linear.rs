use super::{TimeGrid, Waveform};

#[derive(Debug, Clone, PartialEq)]
struct Column {
    start: usize,
    weights: Vec<f64>,
}

/// Linear map from a latent random vector to waveform samples, stored as
/// contiguous non-zero runs per latent column.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseColumns {
    n_rows: usize,
    cols: Vec<Column>,
}

impl SparseColumns {
    pub(crate) fn from_columns(n_rows: usize, cols: Vec<(usize, Vec<f64>)>) -> Self {
        let cols = cols
            .into_iter()
            .map(|(start, weights)| {
                assert!(start + weights.len() <= n_rows);
                Column { start, weights }
            })
            .collect();
        Self { n_rows, cols }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.cols.len()
    }

    /// `out = M * latents`
    #[inline]
    pub fn apply(&self, latents: &[f64], out: &mut [f64]) {
        debug_assert_eq!(latents.len(), self.cols.len());
        debug_assert_eq!(out.len(), self.n_rows);
        out.iter_mut().for_each(|x| *x = 0.0);
        for (col, &z) in self.cols.iter().zip(latents) {
            let dst = &mut out[col.start..col.start + col.weights.len()];
            for (o, w) in dst.iter_mut().zip(&col.weights) {
                *o += w * z;
            }
        }
    }

    /// `M^T v`: the weight each latent carries in the linear functional `v . x`.
    pub fn transpose_apply(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.n_rows);
        self.cols
            .iter()
            .map(|c| {
                c.weights
                    .iter()
                    .zip(&v[c.start..c.start + c.weights.len()])
                    .map(|(w, x)| w * x)
                    .sum()
            })
            .collect()
    }

    /// Composes a linear waveform operator after this map, column by column.
    pub fn then(&self, grid: TimeGrid, op: impl Fn(&Waveform) -> Waveform) -> SparseColumns {
        let cols = self
            .cols
            .iter()
            .map(|c| {
                let mut dense = vec![0.0; self.n_rows];
                dense[c.start..c.start + c.weights.len()].copy_from_slice(&c.weights);
                let mapped = op(&Waveform::from_raw(grid, dense)).into_samples();
                trim(mapped)
            })
            .collect();
        SparseColumns::from_columns(self.n_rows, cols)
    }

    pub fn scaled(&self, factor: f64) -> SparseColumns {
        SparseColumns {
            n_rows: self.n_rows,
            cols: self
                .cols
                .iter()
                .map(|c| Column {
                    start: c.start,
                    weights: c.weights.iter().map(|w| w * factor).collect(),
                })
                .collect(),
        }
    }

    pub fn max_weight(&self) -> f64 {
        self.cols
            .iter()
            .flat_map(|c| c.weights.iter().copied())
            .fold(0.0, f64::max)
    }
}

fn trim(dense: Vec<f64>) -> (usize, Vec<f64>) {
    let first = dense.iter().position(|&x| x != 0.0);
    match first {
        None => (0, Vec::new()),
        Some(lo) => {
            let hi = dense.iter().rposition(|&x| x != 0.0).unwrap();
            (lo, dense[lo..=hi].to_vec())
        }
    }
}
