//! Complex frequency responses: block algebra, grids, phase unwrapping and
//! group delay.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::circuit::Element;
use crate::error::{Error, Result};
use crate::signal::SampledSignal;
use crate::spectral;

/// A linear time-invariant block that can be evaluated at any angular frequency.
///
/// Every variant has a real impulse response, so `evaluate(-ω)` is the complex
/// conjugate of `evaluate(ω)`.
#[derive(Debug, Clone, PartialEq)]
pub enum TransferBlock {
    Identity,
    /// `e^{-iωτ}`; a negative `seconds` is an (acausal) advance.
    PureDelay { seconds: f64 },
    Primitive(Element),
    /// Cascade; the response is the product of the member responses.
    Series(Vec<TransferBlock>),
    /// Negative feedback loop `forward / (1 + feedback · forward)`.
    FeedbackLoop {
        forward: Box<TransferBlock>,
        feedback: Box<TransferBlock>,
    },
}

impl TransferBlock {
    pub fn pure_delay(seconds: f64) -> Result<Self> {
        if !seconds.is_finite() {
            return Err(Error::invalid("seconds", format!("delay must be finite, got {seconds}")));
        }
        Ok(TransferBlock::PureDelay { seconds })
    }

    pub fn gain(value: f64) -> Result<Self> {
        if !value.is_finite() {
            return Err(Error::invalid("gain", format!("gain must be finite, got {value}")));
        }
        Ok(TransferBlock::Primitive(Element::Gain(value)))
    }

    pub fn series<I: IntoIterator<Item = TransferBlock>>(members: I) -> Self {
        TransferBlock::Series(members.into_iter().collect())
    }

    /// Complex response at `omega` (rad/s).
    pub fn evaluate(&self, omega: f64) -> Result<Complex64> {
        if !omega.is_finite() {
            return Err(Error::invalid("omega", format!("angular frequency must be finite, got {omega}")));
        }
        self.response(omega)
    }

    pub(crate) fn response(&self, omega: f64) -> Result<Complex64> {
        match self {
            TransferBlock::Identity => Ok(Complex64::new(1.0, 0.0)),
            TransferBlock::PureDelay { seconds } => Ok(Complex64::from_polar(1.0, -omega * seconds)),
            TransferBlock::Primitive(element) => {
                let (num, den) = element.num_den(omega);
                if den == Complex64::new(0.0, 0.0) {
                    return Err(Error::PoleAtFrequency { omega, index: None });
                }
                Ok(num / den)
            }
            TransferBlock::Series(members) => members
                .iter()
                .try_fold(Complex64::new(1.0, 0.0), |acc, m| Ok(acc * m.response(omega)?)),
            TransferBlock::FeedbackLoop { forward, feedback } => {
                let g = forward.response(omega)?;
                let f = feedback.response(omega)?;
                closed_loop(g, f).ok_or(Error::PoleAtFrequency { omega, index: None })
            }
        }
    }
}

/// `g / (1 + f g)`, or `None` when the return difference vanishes exactly.
pub(crate) fn closed_loop(g: Complex64, f: Complex64) -> Option<Complex64> {
    let den = Complex64::new(1.0, 0.0) + f * g;
    if den == Complex64::new(0.0, 0.0) {
        None
    } else {
        Some(g / den)
    }
}

pub fn evaluate(block: &TransferBlock, omega: f64) -> Result<Complex64> {
    block.evaluate(omega)
}

/// Closes `forward` with `feedback` in a negative feedback loop.
pub fn compose_feedback(forward: TransferBlock, feedback: TransferBlock) -> TransferBlock {
    TransferBlock::FeedbackLoop {
        forward: Box::new(forward),
        feedback: Box::new(feedback),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Spacing {
    Linear,
    Logarithmic,
}

/// Ordered sample points `omega_min ..= omega_max`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrequencyGrid {
    pub omega_min: f64,
    pub omega_max: f64,
    pub count: usize,
    pub spacing: Spacing,
}

impl FrequencyGrid {
    pub fn new(omega_min: f64, omega_max: f64, count: usize, spacing: Spacing) -> Result<Self> {
        if !(omega_min.is_finite() && omega_max.is_finite()) {
            return Err(Error::invalid("grid", "bounds must be finite"));
        }
        if !(0.0 <= omega_min && omega_min < omega_max) {
            return Err(Error::invalid(
                "grid",
                format!("need 0 <= omega_min < omega_max, got [{omega_min}, {omega_max}]"),
            ));
        }
        if count < 2 {
            return Err(Error::invalid("grid", format!("count must be >= 2, got {count}")));
        }
        if spacing == Spacing::Logarithmic && omega_min == 0.0 {
            return Err(Error::invalid("grid", "logarithmic grid needs omega_min > 0"));
        }
        Ok(Self { omega_min, omega_max, count, spacing })
    }

    pub fn linear(omega_min: f64, omega_max: f64, count: usize) -> Result<Self> {
        Self::new(omega_min, omega_max, count, Spacing::Linear)
    }

    pub fn logarithmic(omega_min: f64, omega_max: f64, count: usize) -> Result<Self> {
        Self::new(omega_min, omega_max, count, Spacing::Logarithmic)
    }

    /// Linear grid of `count` cell midpoints covering `[0, span]`: the first
    /// point sits half a step above DC.
    pub fn half_offset(span: f64, count: usize) -> Result<Self> {
        if !(span > 0.0 && span.is_finite()) || count < 2 {
            return Err(Error::invalid("grid", "half-offset grid needs span > 0 and count >= 2"));
        }
        let step = span / count as f64;
        Self::linear(0.5 * step, span - 0.5 * step, count)
    }

    /// Spacing of a linear grid.
    pub fn linear_step(&self) -> Option<f64> {
        match self.spacing {
            Spacing::Linear => Some((self.omega_max - self.omega_min) / (self.count - 1) as f64),
            Spacing::Logarithmic => None,
        }
    }

    pub fn omega(&self, index: usize) -> f64 {
        if index == 0 {
            return self.omega_min;
        }
        if index + 1 == self.count {
            return self.omega_max;
        }
        let frac = index as f64 / (self.count - 1) as f64;
        match self.spacing {
            Spacing::Linear => self.omega_min + (self.omega_max - self.omega_min) * frac,
            Spacing::Logarithmic => {
                let (a, b) = (self.omega_min.ln(), self.omega_max.ln());
                (a + (b - a) * frac).exp()
            }
        }
    }

    pub fn omegas(&self) -> Vec<f64> {
        (0..self.count).map(|i| self.omega(i)).collect()
    }
}

/// Magnitude, continuous phase and group delay of a block over a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumAnalysis {
    pub grid: FrequencyGrid,
    pub response: Vec<Complex64>,
    pub magnitude: Vec<f64>,
    pub phase_unwrapped: Vec<f64>,
    /// Seconds; positive means later arrival.
    pub group_delay: Vec<f64>,
}

/// Evaluates `block` at every grid point, attaching the grid index to pole errors.
pub fn evaluate_response(block: &TransferBlock, grid: &FrequencyGrid) -> Result<Vec<Complex64>> {
    grid.omegas()
        .into_iter()
        .enumerate()
        .map(|(i, w)| {
            block.evaluate(w).map_err(|e| match e {
                Error::PoleAtFrequency { omega, .. } => Error::PoleAtFrequency { omega, index: Some(i) },
                other => other,
            })
        })
        .collect()
}

pub fn evaluate_grid(block: &TransferBlock, grid: &FrequencyGrid) -> Result<SpectrumAnalysis> {
    let response = evaluate_response(block, grid)?;
    let magnitude = response.iter().map(|z| z.norm()).collect();
    let principal: Vec<f64> = response.iter().map(|z| z.arg()).collect();
    let phase_unwrapped = unwrap_phase(&principal);
    let group_delay = group_delay_curve(&phase_unwrapped, grid)?;
    Ok(SpectrumAnalysis {
        grid: *grid,
        response,
        magnitude,
        phase_unwrapped,
        group_delay,
    })
}

/// Removes 2π jumps: whenever adjacent values differ by more than π, a
/// multiple of 2π is added so the step becomes the principal difference.
/// The first sample keeps its value.
pub fn unwrap_phase(principal: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(principal.len());
    let mut offset = 0.0;
    let mut prev: Option<f64> = None;
    for &p in principal {
        if let Some(q) = prev {
            let mut d = p - q;
            while d > PI {
                d -= 2.0 * PI;
                offset -= 2.0 * PI;
            }
            while d < -PI {
                d += 2.0 * PI;
                offset += 2.0 * PI;
            }
        }
        prev = Some(p);
        out.push(p + offset);
    }
    out
}

/// Group delay `-dφ/dω` of an unwrapped phase curve.
///
/// Interior points use the three-point second-order formula (the plain
/// central difference on uniform grids); the endpoints use one-sided first
/// differences.
pub fn group_delay_curve(phase_unwrapped: &[f64], grid: &FrequencyGrid) -> Result<Vec<f64>> {
    let n = grid.count;
    if phase_unwrapped.len() != n {
        return Err(Error::invalid(
            "phase_unwrapped",
            format!("length {} does not match grid count {n}", phase_unwrapped.len()),
        ));
    }
    if n < 3 {
        return Err(Error::GridTooCoarse(format!("group delay needs at least 3 points, got {n}")));
    }
    for (i, pair) in phase_unwrapped.windows(2).enumerate() {
        let d = (pair[1] - pair[0]).abs();
        if !(d <= PI / 2.0) {
            return Err(Error::GridTooCoarse(format!(
                "phase step {d:.3} rad between grid points {i} and {} exceeds π/2",
                i + 1
            )));
        }
    }
    let w = grid.omegas();
    let phi = phase_unwrapped;
    let mut tau = vec![0.0; n];
    tau[0] = -(phi[1] - phi[0]) / (w[1] - w[0]);
    tau[n - 1] = -(phi[n - 1] - phi[n - 2]) / (w[n - 1] - w[n - 2]);
    for i in 1..n - 1 {
        let hm = w[i] - w[i - 1];
        let hp = w[i + 1] - w[i];
        let slope = if grid.spacing == Spacing::Linear {
            (phi[i + 1] - phi[i - 1]) / (hm + hp)
        } else {
            (hm * hm * phi[i + 1] - hp * hp * phi[i - 1] + (hp * hp - hm * hm) * phi[i])
                / (hm * hp * (hm + hp))
        };
        tau[i] = -slope;
    }
    Ok(tau)
}

/// Sampled impulse response of `block` (units 1/s: the response to a
/// unit-area impulse at t = 0).
///
/// Index 0 is t = 0; the upper half of the buffer holds negative times. The
/// response is computed on an oversampled FFT grid with Hermitian symmetry,
/// so a causal block puts (numerically) no energy at negative times.
pub fn impulse_response(block: &TransferBlock, sample_count: usize, dt: f64) -> Result<SampledSignal> {
    if sample_count < 64 || !sample_count.is_power_of_two() {
        return Err(Error::invalid(
            "sample_count",
            format!("must be a power of two >= 64, got {sample_count}"),
        ));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::invalid("dt", format!("must be positive, got {dt}")));
    }
    let mut delta = vec![0.0; sample_count];
    delta[0] = 1.0 / dt;
    let out = spectral::filter_circular(block, &delta, dt, spectral::DEFAULT_OVERSAMPLE)?;
    SampledSignal::new(0.0, dt, out)
}
