//! Multi-dimensional complex FFT on a cube of side `m`, built from 1-D rustfft plans.

use std::sync::Arc;

use num_complex::Complex64 as C64;
use rustfft::{Fft, FftPlanner};

/// Columns gathered per strided pass.
const TILE: usize = 64;

pub(crate) struct CubeFft {
    m: usize,
    dims: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl CubeFft {
    pub(crate) fn new(m: usize, dims: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            m,
            dims,
            forward: planner.plan_fft_forward(m),
            inverse: planner.plan_fft_inverse(m),
        }
    }

    /// Unnormalized transform in place; `inverse = true` does not rescale.
    pub(crate) fn process(&self, data: &mut [C64], inverse: bool) {
        let fft = if inverse { &self.inverse } else { &self.forward };
        let m = self.m;
        let len = data.len();
        debug_assert_eq!(len, m.pow(self.dims as u32));
        let mut scratch = vec![C64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
        let mut tile = vec![C64::new(0.0, 0.0); m * TILE];

        for axis in 0..self.dims {
            let stride = m.pow((self.dims - 1 - axis) as u32);
            if stride == 1 {
                fft.process_with_scratch(data, &mut scratch);
                continue;
            }
            let block = m * stride;
            let width = stride.min(TILE);
            for outer in (0..len).step_by(block) {
                for col0 in (0..stride).step_by(width) {
                    let base = outer + col0;
                    for j in 0..m {
                        let row = &data[base + j * stride..][..width];
                        for (t, &v) in tile[j..].iter_mut().step_by(m).zip(row) {
                            *t = v;
                        }
                    }
                    fft.process_with_scratch(&mut tile[..width * m], &mut scratch);
                    for j in 0..m {
                        let row = &mut data[base + j * stride..][..width];
                        for (v, &t) in row.iter_mut().zip(tile[j..].iter().step_by(m)) {
                            *v = t;
                        }
                    }
                }
            }
        }
    }
}
