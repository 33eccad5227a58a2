//! Circuit elements and the two compensator topologies: an op-amp with a
//! passive network in its negative feedback loop, and a passive link
//! followed by such a compensator.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::lti::{compose_feedback, FrequencyGrid, TransferBlock};

fn positive(name: &'static str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::invalid(name, format!("must be positive and finite, got {v}")))
    }
}

/// First-order low-pass `1 / (1 + iωRC)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RcLowPass {
    pub resistance: f64,
    pub capacitance: f64,
}

impl RcLowPass {
    pub fn new(resistance: f64, capacitance: f64) -> Result<Self> {
        Ok(Self {
            resistance: positive("resistance", resistance)?,
            capacitance: positive("capacitance", capacitance)?,
        })
    }

    pub fn time_constant(&self) -> f64 {
        self.resistance * self.capacitance
    }
}

/// Series-RLC voltage divider taken across the resistor:
/// `iωRC / (1 − ω²LC + iωRC)`, unit gain and zero phase at resonance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RlcBandpass {
    pub resistance: f64,
    pub inductance: f64,
    pub capacitance: f64,
}

impl RlcBandpass {
    pub fn new(resistance: f64, inductance: f64, capacitance: f64) -> Result<Self> {
        Ok(Self {
            resistance: positive("resistance", resistance)?,
            inductance: positive("inductance", inductance)?,
            capacitance: positive("capacitance", capacitance)?,
        })
    }

    /// Resonance `1/√(LC)` in rad/s.
    pub fn center_frequency(&self) -> f64 {
        1.0 / (self.inductance * self.capacitance).sqrt()
    }

    pub fn quality_factor(&self) -> f64 {
        self.center_frequency() * self.inductance / self.resistance
    }

    /// Group delay at resonance, `2L/R`.
    pub fn resonant_group_delay(&self) -> f64 {
        2.0 * self.inductance / self.resistance
    }
}

/// Single-dominant-pole amplifier `A₀ / (1 + iω/ω_p)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OpAmpModel {
    pub dc_gain: f64,
    /// Dominant pole, rad/s.
    pub pole_frequency: f64,
}

impl OpAmpModel {
    pub fn new(dc_gain: f64, pole_frequency: f64) -> Result<Self> {
        if !(dc_gain >= 0.0 && dc_gain.is_finite()) {
            return Err(Error::invalid("dc_gain", format!("must be finite and >= 0, got {dc_gain}")));
        }
        Ok(Self {
            dc_gain,
            pole_frequency: positive("pole_frequency", pole_frequency)?,
        })
    }

    /// Amplifier whose pole is placed to give the requested gain-bandwidth product.
    pub fn with_gain_bandwidth(dc_gain: f64, gain_bandwidth: f64) -> Result<Self> {
        positive("dc_gain", dc_gain)?;
        Self::new(dc_gain, positive("gain_bandwidth", gain_bandwidth)? / dc_gain)
    }

    pub fn gain_bandwidth(&self) -> f64 {
        self.dc_gain * self.pole_frequency
    }
}

/// Primitive elements with closed-form responses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Element {
    Gain(f64),
    RcLowPass(RcLowPass),
    RlcBandpass(RlcBandpass),
    OpAmp(OpAmpModel),
}

impl Element {
    /// Numerator and denominator of the response at `omega`.
    pub fn num_den(&self, omega: f64) -> (Complex64, Complex64) {
        let one = Complex64::new(1.0, 0.0);
        match *self {
            Element::Gain(k) => (Complex64::new(k, 0.0), one),
            Element::RcLowPass(rc) => (one, Complex64::new(1.0, omega * rc.time_constant())),
            Element::RlcBandpass(rlc) => {
                // x/(x + iQ(x² − 1)) with x = ω/ω₀ is exactly 1 at ω = ω₀
                let x = omega / rlc.center_frequency();
                let q = rlc.quality_factor();
                (Complex64::new(x, 0.0), Complex64::new(x, q * (x * x - 1.0)))
            }
            Element::OpAmp(a) => (Complex64::new(a.dc_gain, 0.0), Complex64::new(1.0, omega / a.pole_frequency)),
        }
    }

    /// Frequencies (rad/s) where the response changes character.
    pub fn corner_frequencies(&self) -> Vec<f64> {
        match *self {
            Element::Gain(_) => vec![],
            Element::RcLowPass(rc) => vec![1.0 / rc.time_constant()],
            Element::RlcBandpass(rlc) => vec![rlc.center_frequency()],
            Element::OpAmp(a) if a.dc_gain > 0.0 => vec![a.pole_frequency, a.gain_bandwidth()],
            Element::OpAmp(a) => vec![a.pole_frequency],
        }
    }
}

impl TransferBlock {
    /// Corner frequencies of every primitive (and `1/τ` of every delay) in the block.
    pub fn corner_frequencies(&self) -> Vec<f64> {
        match self {
            TransferBlock::Identity => vec![],
            TransferBlock::PureDelay { seconds } if *seconds != 0.0 => vec![1.0 / seconds.abs()],
            TransferBlock::PureDelay { .. } => vec![],
            TransferBlock::Primitive(e) => e.corner_frequencies(),
            TransferBlock::Series(members) => members.iter().flat_map(|m| m.corner_frequencies()).collect(),
            TransferBlock::FeedbackLoop { forward, feedback } => {
                let mut v = forward.corner_frequencies();
                v.extend(feedback.corner_frequencies());
                v
            }
        }
    }
}

pub fn rc_lowpass_block(resistance: f64, capacitance: f64) -> Result<TransferBlock> {
    Ok(TransferBlock::Primitive(Element::RcLowPass(RcLowPass::new(resistance, capacitance)?)))
}

pub fn rlc_bandpass_block(resistance: f64, inductance: f64, capacitance: f64) -> Result<TransferBlock> {
    Ok(TransferBlock::Primitive(Element::RlcBandpass(RlcBandpass::new(
        resistance,
        inductance,
        capacitance,
    )?)))
}

pub fn opamp_block(model: OpAmpModel) -> Result<TransferBlock> {
    let checked = OpAmpModel::new(model.dc_gain, model.pole_frequency)?;
    Ok(TransferBlock::Primitive(Element::OpAmp(checked)))
}

/// An amplifier with the passive network `feedback_element` in its negative feedback loop.
#[derive(Debug, Clone, PartialEq)]
pub struct CompensatorSpec {
    pub feedback_element: TransferBlock,
    pub amplifier: OpAmpModel,
}

impl CompensatorSpec {
    pub fn new(feedback_element: TransferBlock, amplifier: OpAmpModel) -> Self {
        Self { feedback_element, amplifier }
    }

    /// Loop gain `F·G`.
    pub fn loop_gain(&self) -> Result<TransferBlock> {
        Ok(TransferBlock::series([self.feedback_element.clone(), opamp_block(self.amplifier)?]))
    }

    /// Log grid from 1/100 of the lowest corner to 100× the highest corner
    /// (which includes the gain-bandwidth product), 200 points per decade.
    pub fn default_probe_grid(&self) -> Result<FrequencyGrid> {
        let mut corners = self.feedback_element.corner_frequencies();
        corners.extend(Element::OpAmp(self.amplifier).corner_frequencies());
        corners.retain(|w| w.is_finite() && *w > 0.0);
        let lo = corners.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = corners.iter().cloned().fold(0.0, f64::max);
        let (lo, hi) = (lo / 100.0, hi * 100.0);
        let decades = (hi / lo).log10().max(1.0);
        FrequencyGrid::logarithmic(lo, hi, (decades * 200.0).ceil() as usize + 1)
    }
}

/// Closed loop `G / (1 + F G)`; checks the loop on its default probe grid first.
pub fn make_ngd_compensator(spec: &CompensatorSpec) -> Result<TransferBlock> {
    let amp = opamp_block(spec.amplifier)?;
    if spec.amplifier.dc_gain > 0.0 {
        let report = stability_probe(spec, &spec.default_probe_grid()?)?;
        if !report.stable {
            return Err(Error::UnstableLoop {
                min_return_difference: report.min_return_difference,
                winding: report.winding,
            });
        }
    }
    Ok(compose_feedback(amp, spec.feedback_element.clone()))
}

/// Passive element followed by its compensator.
pub fn make_compensated_link(passive: TransferBlock, compensator: TransferBlock) -> TransferBlock {
    TransferBlock::Series(vec![passive, compensator])
}

#[derive(Debug, Clone, PartialEq)]
pub struct GainFeedbackReport {
    pub min_loop_gain: f64,
    pub worst_omega: f64,
    pub threshold: f64,
    pub pass: bool,
}

pub const DEFAULT_LOOP_GAIN_THRESHOLD: f64 = 100.0;

/// Smallest `|F G|` over `band`; passes when it reaches `threshold`.
pub fn gain_feedback_check(spec: &CompensatorSpec, band: &FrequencyGrid, threshold: f64) -> Result<GainFeedbackReport> {
    let amp = opamp_block(spec.amplifier)?;
    let mut min_loop_gain = f64::INFINITY;
    let mut worst_omega = band.omega_min;
    for w in band.omegas() {
        let fg = (spec.feedback_element.evaluate(w)? * amp.evaluate(w)?).norm();
        if fg < min_loop_gain {
            min_loop_gain = fg;
            worst_omega = w;
        }
    }
    Ok(GainFeedbackReport {
        min_loop_gain,
        worst_omega,
        threshold,
        pass: min_loop_gain >= threshold,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub stable: bool,
    /// Net encirclements of −1 by the closed Nyquist locus.
    pub winding: i64,
    pub min_return_difference: f64,
    pub worst_omega: f64,
    /// `180° + arg(FG)` at the first unity-gain crossing, if any.
    pub phase_margin_deg: Option<f64>,
}

pub const MARGINAL_RETURN_DIFFERENCE: f64 = 1e-6;

pub fn stability_probe(spec: &CompensatorSpec, grid: &FrequencyGrid) -> Result<StabilityReport> {
    loop_stability(&spec.loop_gain()?, grid)
}

/// Sampled Nyquist test on an open-loop-stable loop gain.
///
/// The locus is traced over `-ω_max … -ω_min, 0, ω_min … ω_max` (negative
/// frequencies by conjugate symmetry) and closed back to its start. The loop
/// is stable iff the winding number of `1 + L` about the origin is zero and
/// `min |1 + L|` exceeds [`MARGINAL_RETURN_DIFFERENCE`].
pub fn loop_stability(loop_gain: &TransferBlock, grid: &FrequencyGrid) -> Result<StabilityReport> {
    let omegas = grid.omegas();
    let values: Vec<Complex64> = omegas.iter().map(|&w| loop_gain.evaluate(w)).collect::<Result<_>>()?;

    let one = Complex64::new(1.0, 0.0);
    let mut contour: Vec<Complex64> = values.iter().rev().map(|v| one + v.conj()).collect();
    if grid.omega_min > 0.0 {
        if let Ok(dc) = loop_gain.evaluate(0.0) {
            contour.push(one + dc);
        }
    }
    contour.extend(values.iter().map(|v| one + v));

    let mut min_return_difference = f64::INFINITY;
    let mut worst_omega = grid.omega_min;
    for (v, &w) in values.iter().zip(&omegas) {
        let d = (one + v).norm();
        if d < min_return_difference {
            min_return_difference = d;
            worst_omega = w;
        }
    }

    let mut total = 0.0;
    let n = contour.len();
    for i in 0..n {
        let a = contour[i];
        let b = contour[(i + 1) % n];
        if a.norm() == 0.0 || b.norm() == 0.0 {
            continue;
        }
        let step = (b / a).arg();
        if step.abs() > std::f64::consts::FRAC_PI_2 {
            return Err(Error::GridTooCoarse(format!(
                "Nyquist locus turns {:.3} rad about -1 between adjacent samples",
                step
            )));
        }
        total += step;
    }
    let winding = (total / (2.0 * std::f64::consts::PI)).round() as i64;

    let mut phase_margin_deg = None;
    for i in 1..values.len() {
        let (m0, m1) = (values[i - 1].norm(), values[i].norm());
        if m0 >= 1.0 && m1 < 1.0 {
            let pick = if (m0 - 1.0).abs() < (1.0 - m1).abs() { values[i - 1] } else { values[i] };
            phase_margin_deg = Some(180.0 + pick.arg().to_degrees());
            break;
        }
    }

    Ok(StabilityReport {
        stable: winding == 0 && min_return_difference > MARGINAL_RETURN_DIFFERENCE,
        winding,
        min_return_difference,
        worst_omega,
        phase_margin_deg,
    })
}
