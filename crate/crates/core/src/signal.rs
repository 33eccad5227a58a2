//! Uniformly sampled real signals and the test waveforms.

use crate::error::{Error, Result};

/// Non-fatal remarks attached to a signal by the operation that built it.
#[derive(Debug, Clone, PartialEq)]
pub enum SignalNote {
    /// The pulse extends past the sampled window.
    PulseClipped { uncovered_start: f64, uncovered_end: f64 },
    /// Several samples share the maximum; the earliest was used.
    TiedMaximum { count: usize },
    /// Fraction of output energy found in the far half of the FFT padding.
    WrapAround { fraction: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampledSignal {
    pub t0: f64,
    pub dt: f64,
    pub samples: Vec<f64>,
    pub notes: Vec<SignalNote>,
}

impl SampledSignal {
    pub fn new(t0: f64, dt: f64, samples: Vec<f64>) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::invalid("dt", format!("must be positive and finite, got {dt}")));
        }
        if !t0.is_finite() {
            return Err(Error::invalid("t0", "must be finite"));
        }
        if samples.is_empty() {
            return Err(Error::invalid("samples", "signal must not be empty"));
        }
        Ok(Self { t0, dt, samples, notes: Vec::new() })
    }

    /// A signal on the same time base with different samples.
    pub fn with_samples(&self, samples: Vec<f64>) -> Self {
        Self { t0: self.t0, dt: self.dt, samples, notes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn time(&self, index: usize) -> f64 {
        self.t0 + index as f64 * self.dt
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(move |k| self.time(k))
    }

    /// `Σ x² · dt`.
    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|v| v * v).sum::<f64>() * self.dt
    }

    /// Index of the largest sample (earliest on ties) and how many samples share it.
    pub fn argmax(&self) -> (usize, usize) {
        let max = self.samples.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let first = self.samples.iter().position(|&v| v == max).unwrap_or(0);
        let ties = self.samples.iter().filter(|&&v| v == max).count();
        (first, ties)
    }

    /// Index of the sample nearest to `t`, clamped to the window.
    pub fn index_near(&self, t: f64) -> usize {
        let k = ((t - self.t0) / self.dt).round();
        k.clamp(0.0, (self.len() - 1) as f64) as usize
    }
}

/// Gaussian pulse, optionally modulating a cosine carrier at its peak.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianPulseSpec {
    pub center: f64,
    /// Full width at half maximum of the (envelope) pulse.
    pub fwhm: f64,
    pub amplitude: f64,
    /// Carrier angular frequency, rad/s.
    pub carrier: Option<f64>,
}

impl GaussianPulseSpec {
    pub fn new(center: f64, fwhm: f64, amplitude: f64) -> Self {
        Self { center, fwhm, amplitude, carrier: None }
    }

    pub fn with_carrier(mut self, omega: f64) -> Self {
        self.carrier = Some(omega);
        self
    }

    pub fn sigma(&self) -> f64 {
        self.fwhm / (8.0 * std::f64::consts::LN_2).sqrt()
    }

    pub fn envelope_at(&self, t: f64) -> f64 {
        let u = (t - self.center) / self.sigma();
        self.amplitude * (-0.5 * u * u).exp()
    }

    pub fn value_at(&self, t: f64) -> f64 {
        let e = self.envelope_at(t);
        match self.carrier {
            Some(w) => e * (w * (t - self.center)).cos(),
            None => e,
        }
    }
}

pub const MIN_PULSE_SAMPLES: usize = 16;

pub fn gaussian_pulse(spec: &GaussianPulseSpec, t0: f64, dt: f64, count: usize) -> Result<SampledSignal> {
    if !(spec.fwhm > 0.0 && spec.fwhm.is_finite()) {
        return Err(Error::invalid("fwhm", format!("must be positive, got {}", spec.fwhm)));
    }
    if !spec.amplitude.is_finite() || !spec.center.is_finite() {
        return Err(Error::invalid("amplitude", "amplitude and center must be finite"));
    }
    if let Some(w) = spec.carrier {
        if !(w >= 0.0 && w.is_finite()) {
            return Err(Error::invalid("carrier", format!("must be finite and >= 0, got {w}")));
        }
    }
    if count < MIN_PULSE_SAMPLES {
        return Err(Error::invalid("count", format!("need at least {MIN_PULSE_SAMPLES} samples, got {count}")));
    }
    let mut sig = SampledSignal::new(t0, dt, vec![0.0; count])?;
    for k in 0..count {
        sig.samples[k] = spec.value_at(sig.time(k));
    }
    let (lo, hi) = (spec.center - 5.0 * spec.fwhm, spec.center + 5.0 * spec.fwhm);
    let (start, end) = (sig.time(0), sig.time(count - 1));
    if lo < start || hi > end {
        sig.notes.push(SignalNote::PulseClipped {
            uncovered_start: (start - lo).max(0.0),
            uncovered_end: (hi - end).max(0.0),
        });
    }
    Ok(sig)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SquareWaveSpec {
    pub period: f64,
    /// Fraction of each period spent at `high`, in (0, 1).
    pub duty: f64,
    pub low: f64,
    pub high: f64,
}

impl SquareWaveSpec {
    pub fn value_at(&self, t: f64) -> f64 {
        let phase = (t / self.period).rem_euclid(1.0);
        if phase < self.duty {
            self.high
        } else {
            self.low
        }
    }
}

pub fn square_wave(spec: &SquareWaveSpec, t0: f64, dt: f64, count: usize) -> Result<SampledSignal> {
    if !(spec.duty > 0.0 && spec.duty < 1.0) {
        return Err(Error::invalid("duty", format!("must lie in (0, 1), got {}", spec.duty)));
    }
    if !(spec.period.is_finite() && spec.period >= 10.0 * dt) {
        return Err(Error::invalid(
            "period",
            format!("must be at least 10 samples ({}), got {}", 10.0 * dt, spec.period),
        ));
    }
    if !spec.low.is_finite() || !spec.high.is_finite() {
        return Err(Error::invalid("level", "levels must be finite"));
    }
    if count == 0 {
        return Err(Error::invalid("count", "must be positive"));
    }
    let mut sig = SampledSignal::new(t0, dt, vec![0.0; count])?;
    for k in 0..count {
        sig.samples[k] = spec.value_at(sig.time(k));
    }
    Ok(sig)
}

/// Zeroes every sample after the first maximum. Returns the truncated signal
/// and the time of the cut.
pub fn truncate_at_max(signal: &SampledSignal) -> (SampledSignal, f64) {
    let (k, ties) = signal.argmax();
    let mut out = signal.clone();
    out.samples[k + 1..].iter_mut().for_each(|v| *v = 0.0);
    if ties > 1 {
        out.notes.push(SignalNote::TiedMaximum { count: ties });
    }
    (out, signal.time(k))
}
