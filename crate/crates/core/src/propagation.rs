//! Time-domain propagation through transfer blocks and the measurements made
//! on the results.

use crate::error::{Error, Result};
use crate::lti::TransferBlock;
use crate::signal::{SampledSignal, SignalNote};
use crate::spectral;

/// Frequency-domain filter settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FftFilter {
    /// Fine-grid factor used to evaluate the block between samples.
    pub oversample: usize,
    /// Zero padding: the FFT length is the next power of two ≥ `pad_factor · n`.
    pub pad_factor: usize,
    /// Largest tolerated fraction of output energy in the far half of the padding.
    pub wrap_tolerance: f64,
}

impl Default for FftFilter {
    fn default() -> Self {
        Self { oversample: spectral::DEFAULT_OVERSAMPLE, pad_factor: 4, wrap_tolerance: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterOutput {
    pub signal: SampledSignal,
    pub wrap_fraction: f64,
}

pub const MIN_FILTER_SAMPLES: usize = 16;

impl FftFilter {
    pub fn apply(&self, block: &TransferBlock, input: &SampledSignal) -> Result<FilterOutput> {
        let n = input.len();
        if n < MIN_FILTER_SAMPLES {
            return Err(Error::invalid("input", format!("need at least {MIN_FILTER_SAMPLES} samples, got {n}")));
        }
        let p = (self.pad_factor.max(2) * n).next_power_of_two();
        let mut buf = input.samples.clone();
        buf.resize(p, 0.0);
        let out = spectral::filter_circular(block, &buf, input.dt, self.oversample)?;

        let total: f64 = out.iter().map(|v| v * v).sum();
        let far = (p - n) / 2;
        let tail: f64 = out[p - far..].iter().map(|v| v * v).sum();
        let wrap_fraction = if total > 0.0 { tail / total } else { 0.0 };
        if wrap_fraction > self.wrap_tolerance {
            return Err(Error::WraparoundContamination { fraction: wrap_fraction, limit: self.wrap_tolerance });
        }

        let mut signal = input.with_samples(out[..n].to_vec());
        signal.notes.push(SignalNote::WrapAround { fraction: wrap_fraction });
        Ok(FilterOutput { signal, wrap_fraction })
    }
}

/// Filters `input` with the default [`FftFilter`].
pub fn apply_filter(block: &TransferBlock, input: &SampledSignal) -> Result<SampledSignal> {
    FftFilter::default().apply(block, input).map(|o| o.signal)
}

/// Magnitude of the analytic signal.
pub fn envelope(signal: &SampledSignal) -> SampledSignal {
    signal.with_samples(spectral::analytic_envelope(&signal.samples))
}

/// Fraction of an impulse response's energy in the upper half of its buffer,
/// which holds negative times.
pub fn negative_time_fraction(impulse: &SampledSignal) -> f64 {
    let half = impulse.len() / 2;
    let total: f64 = impulse.samples.iter().map(|v| v * v).sum();
    let neg: f64 = impulse.samples[half..].iter().map(|v| v * v).sum();
    if total > 0.0 {
        neg / total
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeakEstimate {
    pub index: usize,
    /// Sub-sample offset from `index`, in samples.
    pub offset: f64,
    pub time: f64,
}

/// Three-point parabolic refinement of the vertex near `k`.
fn parabolic_offset(y: &[f64], k: usize) -> f64 {
    let (a, b, c) = (y[k - 1], y[k], y[k + 1]);
    let den = a - 2.0 * b + c;
    if den == 0.0 {
        0.0
    } else {
        (0.5 * (a - c) / den).clamp(-0.5, 0.5)
    }
}

pub fn locate_peak(signal: &SampledSignal) -> Result<PeakEstimate> {
    let (k, _) = signal.argmax();
    if k == 0 || k + 1 == signal.len() {
        return Err(Error::PeakOnBoundary { index: k });
    }
    let offset = parabolic_offset(&signal.samples, k);
    Ok(PeakEstimate { index: k, offset, time: signal.time(k) + offset * signal.dt })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DelayReport {
    pub peak_in: f64,
    pub peak_out: f64,
    /// `peak_in − peak_out`; positive when the output peaks first.
    pub peak_advance: f64,
    pub correlation_advance: f64,
    pub distortion_rms: f64,
    pub input_peak: PeakEstimate,
    pub output_peak: PeakEstimate,
}

fn same_time_base(a: &SampledSignal, b: &SampledSignal) -> Result<()> {
    if a.t0 != b.t0 || a.dt != b.dt || a.len() != b.len() {
        return Err(Error::invalid("output", "signals must share t0, dt and length"));
    }
    Ok(())
}

/// Linear interpolation of `y` at fractional index `x`; zero outside the window.
fn sample_at(y: &[f64], x: f64) -> Option<f64> {
    if x < 0.0 || x > (y.len() - 1) as f64 {
        return None;
    }
    let i = x.floor() as usize;
    if i + 1 >= y.len() {
        return Some(y[y.len() - 1]);
    }
    let f = x - i as f64;
    Some(y[i] + (y[i + 1] - y[i]) * f)
}

pub fn measure_peak_advance(input: &SampledSignal, output: &SampledSignal) -> Result<DelayReport> {
    same_time_base(input, output)?;
    let pin = locate_peak(input)?;
    let pout = locate_peak(output)?;
    let dt = input.dt;

    let c = spectral::cross_correlation(&input.samples, &output.samples);
    let n = input.len();
    let kc = c
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc })
        .0;
    let off = if kc > 0 && kc + 1 < c.len() { parabolic_offset(&c, kc) } else { 0.0 };
    let lag = kc as f64 - (n - 1) as f64 + off;
    let correlation_advance = -lag * dt;

    let in_peak = input.samples[pin.index];
    let out_peak = output.samples[pout.index];
    let mut num = 0.0;
    let mut den = 0.0;
    for k in 0..n {
        // output shifted later by the advance so it lines up with the input
        if let Some(v) = sample_at(&output.samples, k as f64 + lag) {
            let x = input.samples[k] / in_peak;
            let r = v / out_peak - x;
            num += r * r;
            den += x * x;
        }
    }
    let distortion_rms = if den > 0.0 { (num / den).sqrt() } else { 0.0 };

    Ok(DelayReport {
        peak_in: pin.time,
        peak_out: pout.time,
        peak_advance: pin.time - pout.time,
        correlation_advance,
        distortion_rms,
        input_peak: pin,
        output_peak: pout,
    })
}

/// First crossing of `level` at or after index `from`, linearly interpolated.
fn crossing(y: &[f64], level: f64, from: usize, to: usize) -> Option<f64> {
    (from..to).find_map(|k| {
        let (a, b) = (y[k] - level, y[k + 1] - level);
        if a == 0.0 {
            Some(k as f64)
        } else if a * b < 0.0 || b == 0.0 {
            Some(k as f64 + a / (a - b))
        } else {
            None
        }
    })
}

/// 10 % to 90 % transition time of the first edge inside `edge_window`.
/// Works for either edge direction: `low_level` is the level the edge leaves.
pub fn rise_time_10_90(signal: &SampledSignal, low_level: f64, high_level: f64, edge_window: (f64, f64)) -> Result<f64> {
    let swing = high_level - low_level;
    if swing == 0.0 || !swing.is_finite() {
        return Err(Error::invalid("levels", "low and high levels must differ"));
    }
    let (ta, tb) = edge_window;
    if !(ta < tb) {
        return Err(Error::invalid("edge_window", "window must be increasing"));
    }
    let start = signal.index_near(ta);
    let end = signal.index_near(tb);
    if end <= start {
        return Err(Error::invalid("edge_window", "window holds fewer than two samples"));
    }
    let y = &signal.samples;
    let l10 = low_level + 0.1 * swing;
    let l90 = low_level + 0.9 * swing;
    let x10 = crossing(y, l10, start, end).ok_or(Error::ThresholdNotCrossed { level: l10 })?;
    let x90 = crossing(y, l90, x10.floor() as usize, end).ok_or(Error::ThresholdNotCrossed { level: l90 })?;
    Ok((x90 - x10) * signal.dt)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyReport {
    /// Watts.
    pub power: SampledSignal,
    pub peak_power_index: usize,
    pub peak_power_time: f64,
    /// Joules, running sum of `power · dt`.
    pub cumulative_energy: Vec<f64>,
}

/// Index of the largest `|v|`, earliest on ties.
pub fn argmax_abs(signal: &SampledSignal) -> usize {
    let mut best = 0;
    for (k, v) in signal.samples.iter().enumerate() {
        if v.abs() > signal.samples[best].abs() {
            best = k;
        }
    }
    best
}

pub fn load_power(signal: &SampledSignal, r_load: f64) -> Result<EnergyReport> {
    if !(r_load > 0.0 && r_load.is_finite()) {
        return Err(Error::invalid("r_load", format!("must be positive, got {r_load}")));
    }
    let watts: Vec<f64> = signal.samples.iter().map(|v| v * v / r_load).collect();
    // rank by (power, |v|) so rounding ties in v² resolve like |v|
    let mut best = 0;
    for k in 1..watts.len() {
        let key = (watts[k], signal.samples[k].abs());
        let cur = (watts[best], signal.samples[best].abs());
        if key.0 > cur.0 || (key.0 == cur.0 && key.1 > cur.1) {
            best = k;
        }
    }
    let cumulative_energy = watts
        .iter()
        .scan(0.0, |acc, p| {
            *acc += p * signal.dt;
            Some(*acc)
        })
        .collect();
    Ok(EnergyReport {
        power: signal.with_samples(watts),
        peak_power_index: best,
        peak_power_time: signal.time(best),
        cumulative_energy,
    })
}

/// Time of the sample just before the first adjacent-sample jump larger
/// than `threshold`.
pub fn detect_discontinuity(signal: &SampledSignal, threshold: f64) -> Result<Option<f64>> {
    if !(threshold > 0.0) {
        return Err(Error::invalid("threshold", format!("must be positive, got {threshold}")));
    }
    Ok(signal
        .samples
        .windows(2)
        .position(|w| (w[1] - w[0]).abs() > threshold)
        .map(|k| signal.time(k)))
}

/// A quarter of the largest adjacent-sample difference.
pub fn default_discontinuity_threshold(signal: &SampledSignal) -> f64 {
    0.25 * signal.samples.windows(2).map(|w| (w[1] - w[0]).abs()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::rc_lowpass_block;
    use crate::signal::{gaussian_pulse, truncate_at_max, GaussianPulseSpec};

    fn pulse() -> SampledSignal {
        gaussian_pulse(&GaussianPulseSpec::new(0.5, 0.05, 1.0), 0.0, 1e-3, 1024).unwrap()
    }

    fn rms_diff(a: &[f64], b: &[f64]) -> f64 {
        (a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64).sqrt()
    }

    #[test]
    fn identity_filter() {
        let x = pulse();
        let y = apply_filter(&TransferBlock::Identity, &x).unwrap();
        assert!(rms_diff(&x.samples, &y.samples) < 1e-12);
    }

    #[test]
    fn delay_filter_shifts() {
        let x = pulse();
        let y = apply_filter(&TransferBlock::pure_delay(7e-3).unwrap(), &x).unwrap();
        let shifted: Vec<f64> = (0..x.len()).map(|k| if k >= 7 { x.samples[k - 7] } else { 0.0 }).collect();
        assert!(rms_diff(&shifted, &y.samples) < 1e-9);
    }

    #[test]
    fn negative_delay_wraps() {
        let x = gaussian_pulse(&GaussianPulseSpec::new(0.05, 0.02, 1.0), 0.0, 1e-3, 256).unwrap();
        let r = apply_filter(&TransferBlock::pure_delay(-0.2).unwrap(), &x);
        assert!(matches!(r, Err(Error::WraparoundContamination { .. })));
    }

    #[test]
    fn rc_step_reaches_63_percent() {
        let rc = 1e-3;
        let dt = rc / 100.0;
        let n = 2048;
        let step: Vec<f64> = (0..n).map(|k| if k >= 100 { 1.0 } else { 0.0 }).collect();
        let x = SampledSignal::new(0.0, dt, step).unwrap();
        let y = apply_filter(&rc_lowpass_block(1e3, 1e-6).unwrap(), &x).unwrap();
        let t_edge = 99.5 * dt;
        let k = x.index_near(t_edge + rc + 0.5 * dt);
        let v = y.samples[k];
        assert!((v - (1.0 - (-1.0f64).exp())).abs() / 0.632 < 0.01, "v = {v}");
        let tr = rise_time_10_90(&y, 0.0, 1.0, (0.0, 15.0 * rc)).unwrap();
        assert!((tr - 9f64.ln() * rc).abs() / (9f64.ln() * rc) < 0.02, "tr = {tr}");
    }

    #[test]
    fn peak_advance_examples() {
        let x = pulse();
        let r = measure_peak_advance(&x, &x).unwrap();
        assert_eq!(r.peak_advance, 0.0);
        assert!(r.distortion_rms < 1e-12);
        assert!(r.correlation_advance.abs() < 1e-9);

        let delayed = x.with_samples((0..x.len()).map(|k| if k >= 3 { x.samples[k - 3] } else { 0.0 }).collect());
        let r = measure_peak_advance(&x, &delayed).unwrap();
        assert!((r.peak_advance + 3e-3).abs() < 1e-4);
        assert!((r.correlation_advance + 3e-3).abs() < 1e-4);
        assert!(r.distortion_rms < 1e-9);
    }

    #[test]
    fn peak_on_boundary() {
        let s = SampledSignal::new(0.0, 1.0, (0..20).map(|k| k as f64).collect()).unwrap();
        assert_eq!(locate_peak(&s), Err(Error::PeakOnBoundary { index: 19 }));
        assert!(measure_peak_advance(&s, &s).is_err());
    }

    #[test]
    fn rise_time_examples() {
        let step = SampledSignal::new(0.0, 1.0, (0..20).map(|k| if k >= 10 { 1.0 } else { 0.0 }).collect()).unwrap();
        assert!(rise_time_10_90(&step, 0.0, 1.0, (0.0, 19.0)).unwrap() <= 1.0);
        let fall = step.with_samples(step.samples.iter().map(|v| 1.0 - v).collect());
        assert!(rise_time_10_90(&fall, 1.0, 0.0, (0.0, 19.0)).unwrap() <= 1.0);
        let flat = step.with_samples(vec![0.0; 20]);
        assert!(matches!(rise_time_10_90(&flat, 0.0, 1.0, (0.0, 19.0)), Err(Error::ThresholdNotCrossed { .. })));
    }

    #[test]
    fn power_examples() {
        let ones = SampledSignal::new(2.0, 0.5, vec![1.0; 8]).unwrap();
        let r = load_power(&ones, 1.0).unwrap();
        assert!(r.power.samples.iter().all(|&p| p == 1.0));
        for (k, e) in r.cumulative_energy.iter().enumerate() {
            assert!((e - 0.5 * (k + 1) as f64).abs() < 1e-15);
        }
        assert!(load_power(&ones, 0.0).is_err());

        let s = SampledSignal::new(0.0, 1.0, vec![0.1, -3.0, 2.0, 3.0, -1.0]).unwrap();
        let r = load_power(&s, 50.0).unwrap();
        assert_eq!(r.peak_power_index, argmax_abs(&s));
        assert_eq!(r.peak_power_index, 1);
    }

    #[test]
    fn discontinuity_examples() {
        let x = pulse();
        let (t, cut) = truncate_at_max(&x);
        let th = default_discontinuity_threshold(&t);
        assert_eq!(detect_discontinuity(&t, th).unwrap(), Some(cut));

        let max_diff = x.samples.windows(2).map(|w| (w[1] - w[0]).abs()).fold(0.0, f64::max);
        assert_eq!(detect_discontinuity(&x, 10.0 * max_diff).unwrap(), None);
        assert!(detect_discontinuity(&x, 0.0).is_err());
    }

    #[test]
    fn envelope_recovers_gaussian() {
        let spec = GaussianPulseSpec::new(0.5, 0.1, 1.0).with_carrier(2.0 * std::f64::consts::PI * 200.0);
        let x = gaussian_pulse(&spec, 0.0, 1e-4, 10_000).unwrap();
        let e = envelope(&x);
        for k in (2000..8000).step_by(50) {
            assert!((e.samples[k] - spec.envelope_at(x.time(k))).abs() < 1e-3);
        }
    }
}
