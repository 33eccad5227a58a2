//! Frequency-domain checks of the feedback identities, delay cancellation,
//! minimum-phase consistency and front causality.

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::lti::{closed_loop, evaluate_grid, evaluate_response, unwrap_phase, FrequencyGrid, Spacing, TransferBlock};
use crate::propagation::{
    apply_filter, default_discontinuity_threshold, detect_discontinuity, envelope, measure_peak_advance, DelayReport,
};
use crate::signal::{gaussian_pulse, truncate_at_max, GaussianPulseSpec, SampledSignal};

#[derive(Debug, Clone, PartialEq)]
pub struct GoldenRuleReport {
    pub grid: FrequencyGrid,
    /// `|(A − B)/A| = |1/(1 + FG)|` per grid point.
    pub residual: Vec<f64>,
    pub max_residual: f64,
    /// `1/(|FG| − 1)` where `|FG| > 1`.
    pub bound: Vec<Option<f64>>,
}

/// Relative mismatch between the amplifier input `A` and the fed-back signal `B = F·T·A`.
pub fn golden_rule_residual(g: &TransferBlock, f: &TransferBlock, grid: &FrequencyGrid) -> Result<GoldenRuleReport> {
    let gs = evaluate_response(g, grid)?;
    let fs = evaluate_response(f, grid)?;
    let mut residual = Vec::with_capacity(grid.count);
    let mut bound = Vec::with_capacity(grid.count);
    for (k, (gv, fv)) in gs.iter().zip(&fs).enumerate() {
        let fg = fv * gv;
        let den = Complex64::new(1.0, 0.0) + fg;
        if den.norm() == 0.0 {
            return Err(Error::PoleAtFrequency { omega: grid.omega(k), index: Some(k) });
        }
        residual.push(1.0 / den.norm());
        let m = fg.norm();
        bound.push((m > 1.0).then(|| 1.0 / (m - 1.0)));
    }
    let max_residual = residual.iter().cloned().fold(0.0, f64::max);
    Ok(GoldenRuleReport { grid: *grid, residual, max_residual, bound })
}

/// `max |T·F − 1|` over the grid, with `T` the closed loop of `g` and `f`.
pub fn inversion_error(g: &TransferBlock, f: &TransferBlock, grid: &FrequencyGrid) -> Result<f64> {
    let gs = evaluate_response(g, grid)?;
    let fs = evaluate_response(f, grid)?;
    let mut worst: f64 = 0.0;
    for (k, (gv, fv)) in gs.iter().zip(&fs).enumerate() {
        let t = closed_loop(*gv, *fv).ok_or(Error::PoleAtFrequency { omega: grid.omega(k), index: Some(k) })?;
        worst = worst.max((t * fv - 1.0).norm());
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DelayCancellation {
    pub grid: FrequencyGrid,
    pub tau_passive: Vec<f64>,
    pub tau_compensator: Vec<f64>,
    /// Group delay of the series connection, computed on the composed block.
    pub tau_total: Vec<f64>,
}

pub fn delay_cancellation_report(
    passive: &TransferBlock,
    compensator: &TransferBlock,
    grid: &FrequencyGrid,
) -> Result<DelayCancellation> {
    let link = TransferBlock::series([passive.clone(), compensator.clone()]);
    Ok(DelayCancellation {
        grid: *grid,
        tau_passive: evaluate_grid(passive, grid)?.group_delay,
        tau_compensator: evaluate_grid(compensator, grid)?.group_delay,
        tau_total: evaluate_grid(&link, grid)?.group_delay,
    })
}

/// Beyond the grid, `ln|T|` is continued along its log-log slope up to this
/// multiple of the grid length before the Hilbert transform.
const TAIL_EXTENSION: usize = 8;

/// Phase of the minimum-phase system with the given magnitude,
/// `φ = −H[ln|T|]`, by FFT Hilbert transform of the even extension of
/// `ln|T|` to negative frequencies.
///
/// The grid must be linear and start at DC or half a step above it.
pub fn minimum_phase_reconstruction(magnitude: &[f64], grid: &FrequencyGrid) -> Result<Vec<f64>> {
    let n = grid.count;
    if magnitude.len() != n {
        return Err(Error::invalid("magnitude", format!("length {} does not match grid count {n}", magnitude.len())));
    }
    let h = match (grid.spacing, grid.linear_step()) {
        (Spacing::Linear, Some(h)) => h,
        _ => return Err(Error::invalid("grid", "minimum-phase reconstruction needs a linear grid")),
    };
    let whole = grid.omega_min == 0.0;
    if !whole && (grid.omega_min - 0.5 * h).abs() > 1e-9 * h {
        return Err(Error::invalid("grid", "grid must start at 0 or half a step above 0"));
    }
    if let Some((index, &value)) = magnitude.iter().enumerate().find(|(_, &m)| !(m > 0.0 && m.is_finite())) {
        return Err(Error::NonpositiveMagnitude { index, value });
    }

    let mut log_mag: Vec<f64> = magnitude.iter().map(|m| m.ln()).collect();
    let omega = |k: usize| grid.omega_min + k as f64 * h;

    // log-log slope over the top decade
    let top = grid.omega_max;
    let pts: Vec<(f64, f64)> = (0..n)
        .filter(|&k| omega(k) >= top / 10.0 && omega(k) > 0.0)
        .map(|k| (omega(k).ln(), log_mag[k]))
        .collect();
    let slope = if pts.len() >= 2 {
        let m = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        if sxx > 0.0 {
            sxy / sxx
        } else {
            0.0
        }
    } else {
        0.0
    };
    let last = log_mag[n - 1];
    let ext = TAIL_EXTENSION * n + usize::from(whole);
    log_mag.extend((n..ext).map(|k| last + slope * (omega(k) / top).ln()));

    // even extension: whole-sample symmetric about DC, or half-sample when
    // the first point sits at h/2
    let len = 2 * TAIL_EXTENSION * n;
    let mut buf = vec![Complex64::new(0.0, 0.0); len];
    if whole {
        for k in 0..ext {
            buf[k] = Complex64::new(log_mag[k], 0.0);
        }
        for k in 1..ext - 1 {
            buf[len - k] = Complex64::new(log_mag[k], 0.0);
        }
    } else {
        for k in 0..ext {
            buf[k] = Complex64::new(log_mag[k], 0.0);
            buf[len - 1 - k] = Complex64::new(log_mag[k], 0.0);
        }
    }

    let mut planner = FftPlanner::<f64>::new();
    planner.plan_fft_forward(len).process(&mut buf);
    for (k, z) in buf.iter_mut().enumerate() {
        if k == 0 || k == len / 2 {
            continue;
        }
        if k < len / 2 {
            *z *= 2.0;
        } else {
            *z = Complex64::new(0.0, 0.0);
        }
    }
    planner.plan_fft_inverse(len).process(&mut buf);
    let scale = 1.0 / len as f64;
    Ok(buf[..n].iter().map(|z| -z.im * scale).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct BodeReport {
    pub grid: FrequencyGrid,
    pub phase_measured: Vec<f64>,
    pub phase_reconstructed: Vec<f64>,
    /// Largest `|measured − reconstructed|` (mod 2π) inside `band`.
    pub max_band_error: f64,
    pub band: (f64, f64),
}

/// The high end of the grid must lie at least this many times above the band.
pub const BODE_HEADROOM: f64 = 10.0;

pub fn bode_check(block: &TransferBlock, grid: &FrequencyGrid, band: (f64, f64)) -> Result<BodeReport> {
    let (lo, hi) = band;
    if !(lo < hi) || lo < grid.omega_min {
        return Err(Error::invalid("band", format!("band [{lo}, {hi}] must be increasing and on the grid")));
    }
    if grid.omega_max < BODE_HEADROOM * hi {
        return Err(Error::GridTooNarrow(format!(
            "grid ends at {} rad/s, needs at least {} for a band ending at {hi}",
            grid.omega_max,
            BODE_HEADROOM * hi
        )));
    }
    let response = evaluate_response(block, grid)?;
    let magnitude: Vec<f64> = response.iter().map(|z| z.norm()).collect();
    let phase_measured = unwrap_phase(&response.iter().map(|z| z.arg()).collect::<Vec<_>>());
    let phase_reconstructed = minimum_phase_reconstruction(&magnitude, grid)?;
    let mut max_band_error: f64 = 0.0;
    for (k, w) in grid.omegas().into_iter().enumerate() {
        if w >= lo && w <= hi {
            let d = phase_measured[k] - phase_reconstructed[k];
            let wrapped = d - 2.0 * PI * (d / (2.0 * PI)).round();
            max_band_error = max_band_error.max(wrapped.abs());
        }
    }
    Ok(BodeReport { grid: *grid, phase_measured, phase_reconstructed, max_band_error, band })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrontReport {
    /// Time of the last sample before the input's cut.
    pub input_cut: f64,
    /// Front of the cut's effect on the output: the first jump in
    /// `y_truncated − y_full`, which is zero before the cut for a causal block.
    pub output_cut: Option<f64>,
    /// First jump in the truncated-pulse output itself, where it has one.
    pub output_jump: Option<f64>,
    /// `input_cut − output_cut`; positive would mean the front arrived early.
    pub front_advance: Option<f64>,
    /// First time the truncated-input output visibly departs from the full-pulse output.
    pub departure_time: Option<f64>,
    /// RMS mismatch of the two outputs before `input_cut`, relative to the full-pulse output.
    pub pre_cut_match_rms: f64,
    /// Peak advance of the untruncated pulse (measured on envelopes for carrier pulses).
    pub full_pulse: DelayReport,
}

/// Size of the output difference, relative to its maximum, that counts as a departure.
pub const DEPARTURE_TOLERANCE: f64 = 1e-4;

/// Drives `block` with a Gaussian pulse and with the same pulse shorted to
/// zero at its maximum, and compares where the two outputs part.
pub fn causality_front_test(
    block: &TransferBlock,
    pulse: &GaussianPulseSpec,
    t0: f64,
    dt: f64,
    count: usize,
) -> Result<FrontReport> {
    let full = gaussian_pulse(pulse, t0, dt, count)?;
    let (cut, _) = truncate_at_max(&full);
    let y_full = apply_filter(block, &full)?;
    let y_cut = apply_filter(block, &cut)?;

    let input_cut = detect_discontinuity(&cut, default_discontinuity_threshold(&cut))?
        .ok_or(Error::ThresholdNotCrossed { level: default_discontinuity_threshold(&cut) })?;
    let caused = y_cut.with_samples(y_cut.samples.iter().zip(&y_full.samples).map(|(a, b)| a - b).collect());
    let first_jump = |s: &SampledSignal| -> Result<Option<f64>> {
        let th = default_discontinuity_threshold(s);
        if th > 0.0 {
            detect_discontinuity(s, th)
        } else {
            Ok(None)
        }
    };
    let output_cut = first_jump(&caused)?;
    let output_jump = first_jump(&y_cut)?;
    let front_advance = output_cut.map(|t| input_cut - t);

    let scale = caused.samples.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let departure_time = caused
        .samples
        .iter()
        .position(|v| v.abs() > DEPARTURE_TOLERANCE * scale)
        .map(|k| caused.time(k));

    let mut diff2 = 0.0;
    let mut ref2 = 0.0;
    for k in 0..y_cut.len() {
        if y_cut.time(k) < input_cut {
            diff2 += (y_cut.samples[k] - y_full.samples[k]).powi(2);
            ref2 += y_full.samples[k].powi(2);
        }
    }
    let pre_cut_match_rms = if ref2 > 0.0 { (diff2 / ref2).sqrt() } else { diff2.sqrt() };

    let full_pulse = if pulse.carrier.is_some() {
        measure_peak_advance(&envelope(&full), &envelope(&y_full))?
    } else {
        measure_peak_advance(&full, &y_full)?
    };

    Ok(FrontReport { input_cut, output_cut, output_jump, front_advance, departure_time, pre_cut_match_rms, full_pulse })
}
