//! Oversampled FFT filtering shared by impulse responses and signal propagation.
//!
//! The discrete input is read as a piecewise-linear continuous waveform,
//! placed on a grid `oversample` times finer, multiplied by the block response
//! at the fine FFT bins and sampled back at the original instants. Band
//! limiting at the fine Nyquist frequency leaves only tiny precursors at the
//! coarse sample times, so causal blocks stay causal to ~1e-8 in energy.

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::lti::TransferBlock;

pub(crate) const DEFAULT_OVERSAMPLE: usize = 8;

/// Circular filtering of `x` (already padded as needed) sampled every `dt`.
/// Returns a buffer of the same length.
pub(crate) fn filter_circular(block: &TransferBlock, x: &[f64], dt: f64, oversample: usize) -> Result<Vec<f64>> {
    let n = x.len();
    let m = oversample.max(1);
    let nf = n * m;
    if nf < 2 || !nf.is_multiple_of(2) {
        return Err(Error::invalid("length", format!("filter buffer length {nf} must be even")));
    }

    let mut buf: Vec<Complex64> = Vec::with_capacity(nf);
    for k in 0..n {
        let a = x[k];
        let b = x[(k + 1) % n];
        for j in 0..m {
            let frac = j as f64 / m as f64;
            buf.push(Complex64::new(a + (b - a) * frac, 0.0));
        }
    }

    let mut planner = FftPlanner::<f64>::new();
    planner.plan_fft_forward(nf).process(&mut buf);

    // bin k sits at ω = 2πk / (n·dt) for the fine grid as well
    let span = n as f64 * dt;
    let half = nf / 2;
    for k in 0..=half {
        let omega = 2.0 * PI * k as f64 / span;
        let mut h = block.evaluate(omega).map_err(|e| match e {
            Error::PoleAtFrequency { omega, .. } => Error::PoleAtFrequency { omega, index: Some(k) },
            other => other,
        })?;
        if k == 0 || k == half {
            h = Complex64::new(h.re, 0.0);
        }
        buf[k] *= h;
        if k != 0 && k != half {
            buf[nf - k] *= h.conj();
        }
    }

    planner.plan_fft_inverse(nf).process(&mut buf);
    let scale = 1.0 / nf as f64;
    Ok((0..n).map(|k| buf[k * m].re * scale).collect())
}

/// Magnitude of the analytic signal (FFT Hilbert transform, zero-padded to
/// twice the next power of two to limit circular edge effects).
pub(crate) fn analytic_envelope(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let p = (2 * n).next_power_of_two();
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    buf.resize(p, Complex64::new(0.0, 0.0));
    let mut planner = FftPlanner::<f64>::new();
    planner.plan_fft_forward(p).process(&mut buf);
    for (k, z) in buf.iter_mut().enumerate() {
        if k == 0 || k == p / 2 {
            continue;
        }
        if k < p / 2 {
            *z *= 2.0;
        } else {
            *z = Complex64::new(0.0, 0.0);
        }
    }
    planner.plan_fft_inverse(p).process(&mut buf);
    let scale = 1.0 / p as f64;
    buf[..n].iter().map(|z| z.norm() * scale).collect()
}

/// Circular cross-correlation `c[lag] = Σ_k a[k] b[k + lag]` for lags in
/// `-(n-1) ..= n-1`, returned with lag 0 at index `n - 1`.
pub(crate) fn cross_correlation(a: &[f64], b: &[f64]) -> Vec<f64> {
    let n = a.len();
    let p = (2 * n).next_power_of_two();
    let mut fa: Vec<Complex64> = a.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let mut fb: Vec<Complex64> = b.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fa.resize(p, Complex64::new(0.0, 0.0));
    fb.resize(p, Complex64::new(0.0, 0.0));
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(p);
    fwd.process(&mut fa);
    fwd.process(&mut fb);
    let mut prod: Vec<Complex64> = fa.iter().zip(&fb).map(|(x, y)| x.conj() * y).collect();
    planner.plan_fft_inverse(p).process(&mut prod);
    let scale = 1.0 / p as f64;
    let mut out = Vec::with_capacity(2 * n - 1);
    for lag in -(n as isize - 1)..=(n as isize - 1) {
        let idx = lag.rem_euclid(p as isize) as usize;
        out.push(prod[idx].re * scale);
    }
    out
}
