//! Minimal 3D complex-to-complex FFT layer over `rustfft`.
//!
//! Fields are stored as dense boxes `[i0][i1][i2]` with the last axis
//! contiguous.  Transforms are applied axis by axis; axes of length one are
//! skipped, so flat 2D grids share the same code path.
//!
//! Conventions: the inverse direction is unnormalised synthesis
//! `f(x) = sum_k c_k e^(i k.x)`; the forward direction divides by the grid size,
//! so forward(inverse(c)) == c.

use std::sync::Arc;

use num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::C64;

/// Reusable FFT planner plus scratch buffers.
pub struct FftEngine {
    planner: FftPlanner<f64>,
    scratch: Vec<C64>,
    col: Vec<C64>,
}

impl Default for FftEngine {
    fn default() -> Self {
        Self::new()
    }
}

impl FftEngine {
    pub fn new() -> Self {
        FftEngine { planner: FftPlanner::new(), scratch: Vec::new(), col: Vec::new() }
    }

    fn plan(&mut self, len: usize, forward: bool) -> Arc<dyn Fft<f64>> {
        if forward {
            self.planner.plan_fft_forward(len)
        } else {
            self.planner.plan_fft_inverse(len)
        }
    }

    /// In-place 3D transform of a dense box with the last axis contiguous.
    ///
    /// `forward = false` is plain synthesis; `forward = true` includes the
    /// `1/(d0*d1*d2)` normalisation so the pair round-trips exactly.
    pub fn fft3(&mut self, data: &mut [C64], dims: (usize, usize, usize), forward: bool) {
        let (d0, d1, d2) = dims;
        assert_eq!(data.len(), d0 * d1 * d2, "buffer does not match grid dims");

        // Axis 2: contiguous rows, batched in one call.
        if d2 > 1 {
            let fft = self.plan(d2, forward);
            let need = fft.get_inplace_scratch_len();
            if self.scratch.len() < need {
                self.scratch.resize(need, Complex::new(0.0, 0.0));
            }
            fft.process_with_scratch(data, &mut self.scratch[..need]);
        }

        // Axis 1: stride d2.
        if d1 > 1 {
            let fft = self.plan(d1, forward);
            let need = fft.get_inplace_scratch_len();
            if self.scratch.len() < need {
                self.scratch.resize(need, Complex::new(0.0, 0.0));
            }
            if self.col.len() < d1 {
                self.col.resize(d1, Complex::new(0.0, 0.0));
            }
            for i0 in 0..d0 {
                let base = i0 * d1 * d2;
                for i2 in 0..d2 {
                    for j in 0..d1 {
                        self.col[j] = data[base + j * d2 + i2];
                    }
                    fft.process_with_scratch(&mut self.col[..d1], &mut self.scratch[..need]);
                    for j in 0..d1 {
                        data[base + j * d2 + i2] = self.col[j];
                    }
                }
            }
        }

        // Axis 0: stride d1*d2.
        if d0 > 1 {
            let fft = self.plan(d0, forward);
            let need = fft.get_inplace_scratch_len();
            if self.scratch.len() < need {
                self.scratch.resize(need, Complex::new(0.0, 0.0));
            }
            if self.col.len() < d0 {
                self.col.resize(d0, Complex::new(0.0, 0.0));
            }
            let plane = d1 * d2;
            for i12 in 0..plane {
                for j in 0..d0 {
                    self.col[j] = data[j * plane + i12];
                }
                fft.process_with_scratch(&mut self.col[..d0], &mut self.scratch[..need]);
                for j in 0..d0 {
                    data[j * plane + i12] = self.col[j];
                }
            }
        }

        if forward {
            let scale = 1.0 / (d0 * d1 * d2) as f64;
            for v in data.iter_mut() {
                *v *= scale;
            }
        }
    }
}

/// Smallest 5-smooth integer (factors 2, 3, 5 only) that is `>= min`.
pub fn good_size(min: usize) -> usize {
    let mut g = min.max(1);
    loop {
        let mut r = g;
        for p in [2usize, 3, 5] {
            while r.is_multiple_of(p) {
                r /= p;
            }
        }
        if r == 1 {
            return g;
        }
        g += 1;
    }
}

/// Wrap a signed mode index onto a periodic grid of size `g`.
pub fn wrap(i: i64, g: usize) -> usize {
    (i.rem_euclid(g as i64)) as usize
}
