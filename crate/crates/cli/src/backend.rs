//! Threaded FFT backend and wall clock.

use std::sync::{Arc, Mutex};
use std::time::Instant;

use fehomog_core::{Clock, Direction, FftBackend};
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Batched transforms from `rustfft`, lines spread over the rayon pool.
pub struct RustFft {
    planner: Mutex<FftPlanner<f64>>,
}

impl Default for RustFft {
    fn default() -> Self {
        Self::new()
    }
}

impl RustFft {
    pub fn new() -> Self {
        Self {
            planner: Mutex::new(FftPlanner::new()),
        }
    }

    fn plan(&self, len: usize, direction: Direction) -> Arc<dyn Fft<f64>> {
        let mut planner = self.planner.lock().expect("FFT planner poisoned");
        match direction {
            Direction::Forward => planner.plan_fft_forward(len),
            Direction::Inverse => planner.plan_fft_inverse(len),
        }
    }
}

impl FftBackend for RustFft {
    fn transform_lines(&self, data: &mut [Complex64], len: usize, direction: Direction) {
        if len <= 1 || data.is_empty() {
            return;
        }
        let plan = self.plan(len, direction);
        let lines = data.len() / len;
        let tasks = rayon::current_num_threads() * 4;
        let per_task = lines.div_ceil(tasks).max(1) * len;
        data.par_chunks_mut(per_task).for_each(|chunk| {
            let mut scratch = vec![Complex64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
            plan.process_with_scratch(chunk, &mut scratch);
        });
    }
}

/// Seconds since construction.
pub struct StdClock {
    start: Instant,
}

impl Default for StdClock {
    fn default() -> Self {
        Self { start: Instant::now() }
    }
}

impl Clock for StdClock {
    fn now(&self) -> f64 {
        self.start.elapsed().as_secs_f64()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use fehomog_core::{NativeFft, RealFftNd};

    #[test]
    fn agrees_with_native_transform() {
        for shape in [vec![6usize, 5], vec![4, 3, 7], vec![17]] {
            let fft = RealFftNd::new(&shape);
            let x: Vec<f64> = (0..fft.real_len()).map(|i| ((i * 7919) % 13) as f64 - 6.0).collect();
            let mut a = vec![Complex64::new(0.0, 0.0); fft.spectrum_len()];
            let mut b = a.clone();
            fft.forward(&RustFft::new(), &x, &mut a);
            fft.forward(&NativeFft, &x, &mut b);
            for (p, q) in a.iter().zip(&b) {
                assert!((p - q).norm() < 1e-10);
            }
            let mut back = vec![0.0; x.len()];
            fft.inverse(&RustFft::new(), &mut a, &mut back);
            for (p, q) in back.iter().zip(&x) {
                assert!((p - q).abs() < 1e-12);
            }
        }
    }
}
