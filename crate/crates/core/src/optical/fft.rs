//! Row-column 2D FFT on row-major complex buffers.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

pub(crate) struct Fft2 {
    width: usize,
    height: usize,
    rows: Arc<dyn Fft<f64>>,
    cols: Arc<dyn Fft<f64>>,
    rows_inv: Arc<dyn Fft<f64>>,
    cols_inv: Arc<dyn Fft<f64>>,
}

impl Fft2 {
    pub(crate) fn new(planner: &mut FftPlanner<f64>, width: usize, height: usize) -> Self {
        Fft2 {
            width,
            height,
            rows: planner.plan_fft_forward(width),
            cols: planner.plan_fft_forward(height),
            rows_inv: planner.plan_fft_inverse(width),
            cols_inv: planner.plan_fft_inverse(height),
        }
    }

    pub(crate) fn forward(&self, buf: &mut [Complex<f64>]) {
        self.run(buf, &self.rows, &self.cols);
    }

    /// Unnormalized inverse transform.
    pub(crate) fn inverse(&self, buf: &mut [Complex<f64>]) {
        self.run(buf, &self.rows_inv, &self.cols_inv);
    }

    fn run(&self, buf: &mut [Complex<f64>], rows: &Arc<dyn Fft<f64>>, cols: &Arc<dyn Fft<f64>>) {
        assert_eq!(buf.len(), self.width * self.height, "buffer does not match FFT size");
        rows.process(buf);
        let mut t = vec![Complex::new(0.0, 0.0); buf.len()];
        transpose(buf, &mut t, self.width, self.height);
        cols.process(&mut t);
        transpose(&t, buf, self.height, self.width);
    }
}

fn transpose(src: &[Complex<f64>], out: &mut [Complex<f64>], width: usize, height: usize) {
    const B: usize = 32;
    for y0 in (0..height).step_by(B) {
        for x0 in (0..width).step_by(B) {
            for y in y0..(y0 + B).min(height) {
                for x in x0..(x0 + B).min(width) {
                    out[x * height + y] = src[y * width + x];
                }
            }
        }
    }
}

/// Smallest `n >= min` whose only prime factors are 2, 3, 5 and 7.
pub(crate) fn fast_len(min: usize) -> usize {
    (min.max(1)..)
        .find(|&n| {
            let mut m = n;
            for p in [2, 3, 5, 7] {
                while m % p == 0 {
                    m /= p;
                }
            }
            m == 1
        })
        .expect("smooth numbers are unbounded")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip() {
        let mut planner = FftPlanner::new();
        let f = Fft2::new(&mut planner, 6, 5);
        let orig: Vec<Complex<f64>> = (0..30).map(|i| Complex::new(i as f64, (i * 7 % 5) as f64)).collect();
        let mut buf = orig.clone();
        f.forward(&mut buf);
        f.inverse(&mut buf);
        for (a, b) in buf.iter().zip(&orig) {
            assert!((a / 30.0 - b).norm() < 1e-9);
        }
    }

    #[test]
    fn fast_lengths() {
        assert_eq!(fast_len(11), 12);
        assert_eq!(fast_len(97), 98);
        assert_eq!(fast_len(1), 1);
    }
}
