//! Row-major 2D FFT helpers on flat buffers.
//!
//! Buffers are `ny` rows of `nx` samples. Transforms are unnormalized, as in
//! `rustfft`; callers apply their own scaling.

use num_complex::Complex64;
use rustfft::{FftDirection, FftPlanner};

pub(crate) fn fft2_inplace(data: &mut [Complex64], nx: usize, ny: usize, direction: FftDirection) {
    assert_eq!(data.len(), nx * ny);
    let mut planner = FftPlanner::<f64>::new();

    let row_fft = planner.plan_fft(nx, direction);
    for row in data.chunks_exact_mut(nx) {
        row_fft.process(row);
    }

    let col_fft = planner.plan_fft(ny, direction);
    let mut column = vec![Complex64::new(0.0, 0.0); ny];
    for ix in 0..nx {
        for iy in 0..ny {
            column[iy] = data[iy * nx + ix];
        }
        col_fft.process(&mut column);
        for iy in 0..ny {
            data[iy * nx + ix] = column[iy];
        }
    }
}

/// Unitary DFT with the zero index of both input and output at `n / 2`.
pub(crate) fn centered_unitary(data: &[Complex64], nx: usize, ny: usize, direction: FftDirection) -> Vec<Complex64> {
    let (cx, cy) = (nx / 2, ny / 2);
    let mut work = vec![Complex64::new(0.0, 0.0); nx * ny];
    // centered index c holds signed coordinate c - n/2; move coordinate 0 to slot 0
    for iy in 0..ny {
        for ix in 0..nx {
            let sx = (ix + nx - cx) % nx;
            let sy = (iy + ny - cy) % ny;
            work[sy * nx + sx] = data[iy * nx + ix];
        }
    }
    fft2_inplace(&mut work, nx, ny, direction);
    let scale = 1.0 / ((nx * ny) as f64).sqrt();
    let mut out = vec![Complex64::new(0.0, 0.0); nx * ny];
    for iy in 0..ny {
        for ix in 0..nx {
            let sx = (ix + nx - cx) % nx;
            let sy = (iy + ny - cy) % ny;
            out[iy * nx + ix] = work[sy * nx + sx] * scale;
        }
    }
    out
}

/// Padded transform size: at least `factor * n` and at least `2n - 1`.
pub(crate) fn padded_len(n: usize, factor: usize) -> usize {
    (factor.max(1) * n).max(2 * n - 1)
}

/// Linear (non-circular) convolution evaluated on the input grid:
/// `out[j] = sum_m kernel(j - m) * input[m]`, with offsets given in pixels.
pub(crate) fn convolve_same<K>(
    input: &[Complex64],
    nx: usize,
    ny: usize,
    pad_factor: usize,
    kernel: K,
) -> Vec<Complex64>
where
    K: Fn(i64, i64) -> Complex64,
{
    let mx = padded_len(nx, pad_factor);
    let my = padded_len(ny, pad_factor);
    let zero = Complex64::new(0.0, 0.0);

    let mut signal = vec![zero; mx * my];
    for iy in 0..ny {
        signal[iy * mx..iy * mx + nx].copy_from_slice(&input[iy * nx..(iy + 1) * nx]);
    }

    let offset = |u: usize, n: usize, m: usize| -> Option<i64> {
        if u < n {
            Some(u as i64)
        } else if u + n > m {
            Some(u as i64 - m as i64)
        } else {
            None
        }
    };
    let mut response = vec![zero; mx * my];
    for v in 0..my {
        let Some(oy) = offset(v, ny, my) else { continue };
        for u in 0..mx {
            if let Some(ox) = offset(u, nx, mx) {
                response[v * mx + u] = kernel(ox, oy);
            }
        }
    }

    fft2_inplace(&mut signal, mx, my, FftDirection::Forward);
    fft2_inplace(&mut response, mx, my, FftDirection::Forward);
    for (s, r) in signal.iter_mut().zip(&response) {
        *s *= r;
    }
    fft2_inplace(&mut signal, mx, my, FftDirection::Inverse);

    let norm = 1.0 / (mx * my) as f64;
    let mut out = Vec::with_capacity(nx * ny);
    for iy in 0..ny {
        out.extend(signal[iy * mx..iy * mx + nx].iter().map(|v| v * norm));
    }
    out
}
