use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::Grid;
use crate::par;

/// Minimum elements handed to one FFT task.
const TASK_ELEMENTS: usize = 4096;

/// FFT plans and wavenumber tables for a periodic grid.
///
/// Wavenumbers use the standard FFT ordering
/// `[0, 1, .., n/2-1, -n/2, .., -1] * 2 pi / L`. Odd-derivative tables zero
/// the Nyquist entry.
pub struct Spectral {
    shape: Vec<usize>,
    strides: Vec<usize>,
    forward: Vec<Arc<dyn Fft<f64>>>,
    inverse: Vec<Arc<dyn Fft<f64>>>,
    k: Vec<Vec<f64>>,
    k_odd: Vec<Vec<f64>>,
    len: usize,
}

impl std::fmt::Debug for Spectral {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Spectral").field("shape", &self.shape).finish()
    }
}

pub(crate) fn wavenumbers(n: usize, length: f64) -> Vec<f64> {
    let dk = 2.0 * PI / length;
    (0..n)
        .map(|j| {
            let m = if j < n.div_ceil(2) { j as isize } else { j as isize - n as isize };
            m as f64 * dk
        })
        .collect()
}

impl Spectral {
    pub(super) fn new(grid: &Grid) -> Spectral {
        let mut planner = FftPlanner::new();
        let shape = grid.shape();
        let forward = shape.iter().map(|&n| planner.plan_fft_forward(n)).collect();
        let inverse = shape.iter().map(|&n| planner.plan_fft_inverse(n)).collect();
        let k: Vec<Vec<f64>> = grid
            .axes()
            .iter()
            .map(|ax| wavenumbers(ax.n, ax.length()))
            .collect();
        let k_odd = k
            .iter()
            .map(|ks| {
                let mut v = ks.clone();
                if v.len() % 2 == 0 {
                    v[ks.len() / 2] = 0.0;
                }
                v
            })
            .collect();
        Spectral {
            strides: grid.strides().to_vec(),
            len: grid.len(),
            shape,
            forward,
            inverse,
            k,
            k_odd,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    /// Wavenumbers of `axis` (Nyquist kept, for even operators).
    pub fn k(&self, axis: usize) -> &[f64] {
        &self.k[axis]
    }

    /// Wavenumbers of `axis` with the Nyquist entry zeroed.
    pub fn k_odd(&self, axis: usize) -> &[f64] {
        &self.k_odd[axis]
    }

    /// Wavenumber of flat spectral index `flat` along `axis`.
    #[inline]
    pub fn k_at(&self, flat: usize, axis: usize) -> f64 {
        self.k[axis][(flat / self.strides[axis]) % self.shape[axis]]
    }

    #[inline]
    pub fn k_odd_at(&self, flat: usize, axis: usize) -> f64 {
        self.k_odd[axis][(flat / self.strides[axis]) % self.shape[axis]]
    }

    /// Unnormalized forward transform in place.
    pub fn forward(&self, data: &mut [Complex64]) {
        for a in 0..self.shape.len() {
            self.transform_axis(data, a, &self.forward[a]);
        }
    }

    /// Inverse transform in place, including the `1/N` factor.
    pub fn inverse(&self, data: &mut [Complex64]) {
        for a in 0..self.shape.len() {
            self.transform_axis(data, a, &self.inverse[a]);
        }
        let scale = 1.0 / self.len as f64;
        par::for_each_indexed_mut(data, |_, v| *v *= scale);
    }

    fn transform_axis(&self, data: &mut [Complex64], axis: usize, fft: &Arc<dyn Fft<f64>>) {
        let n = self.shape[axis];
        let lines_per_task = (TASK_ELEMENTS / n).max(1);
        if self.strides[axis] == 1 {
            par::for_each_chunk_mut(data, n * lines_per_task, |_, chunk| fft.process(chunk));
            return;
        }
        // Gather strided lines into a contiguous buffer, transform, scatter.
        let stride = self.strides[axis];
        let block = n * stride;
        let n_lines = self.len / n;
        let line_start = |line: usize| (line / stride) * block + line % stride;
        let mut buf: Vec<Complex64> = par::map_indexed(self.len, |i| {
            let (line, j) = (i / n, i % n);
            data[line_start(line) + j * stride]
        });
        par::for_each_chunk_mut(&mut buf, n * lines_per_task, |_, chunk| fft.process(chunk));
        for line in 0..n_lines {
            let s = line_start(line);
            for j in 0..n {
                data[s + j * stride] = buf[line * n + j];
            }
        }
    }

    /// Spectrum of `data` (forward transform of a copy).
    pub fn spectrum(&self, data: &[Complex64]) -> Vec<Complex64> {
        let mut s = data.to_vec();
        self.forward(&mut s);
        s
    }

    /// Multiply the spectrum of `data` by `symbol(flat_k)` and transform back.
    pub fn apply_symbol<F>(&self, data: &[Complex64], symbol: F) -> Vec<Complex64>
    where
        F: Fn(usize) -> Complex64 + Sync + Send,
    {
        let mut s = self.spectrum(data);
        par::for_each_indexed_mut(&mut s, |i, v| *v *= symbol(i));
        self.inverse(&mut s);
        s
    }

    /// `d/dx_axis` of `data` (Nyquist derivative zeroed).
    pub fn derivative(&self, data: &[Complex64], axis: usize) -> Vec<Complex64> {
        self.apply_symbol(data, |i| Complex64::new(0.0, self.k_odd_at(i, axis)))
    }
}
