//! Pipeline execution and expectation checking.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Instant;

use ngd_core::analysis::{bode_check, causality_front_test, delay_cancellation_report, golden_rule_residual, inversion_error};
use ngd_core::circuit::{gain_feedback_check, stability_probe};
use ngd_core::lti::evaluate_response;
use ngd_core::propagation::{
    argmax_abs, envelope, load_power, measure_peak_advance, rise_time_10_90, FftFilter,
};
use ngd_core::signal::{truncate_at_max, SampledSignal};
use ngd_core::SpectrumAnalysis;
use serde::Serialize;

use crate::config::{step_id, Action, Expectation, ScenarioConfig, Step};
use crate::error::{CliError, Result};
use crate::output;

#[derive(Debug, Clone)]
pub struct RunOptions {
    /// Where declared outputs are written; `None` skips writing them.
    pub out_dir: Option<PathBuf>,
    /// Multiplies every `rel_tol` and `abs_tol`.
    pub tolerance_scale: f64,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { out_dir: None, tolerance_scale: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExpectationOutcome {
    pub metric: String,
    pub value: Option<f64>,
    pub expectation: Expectation,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepSummary {
    pub id: String,
    pub kind: String,
    pub metrics: BTreeMap<String, f64>,
    pub expectations: Vec<ExpectationOutcome>,
}

impl StepSummary {
    pub fn metric(&self, name: &str) -> Option<f64> {
        self.metrics.get(name).copied()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub scenario: String,
    pub description: String,
    pub steps: Vec<StepSummary>,
    pub passed: bool,
    pub duration_s: f64,
}

impl RunSummary {
    pub fn step(&self, id: &str) -> Option<&StepSummary> {
        self.steps.iter().find(|s| s.id == id)
    }

    /// Metric addressed as `<step id>.<metric>`.
    pub fn metric(&self, key: &str) -> Option<f64> {
        let (id, name) = key.rsplit_once('.')?;
        self.step(id)?.metric(name)
    }

    /// All metrics keyed `<step id>.<metric>`, in pipeline order.
    pub fn flat_metrics(&self) -> Vec<(String, f64)> {
        self.steps
            .iter()
            .flat_map(|s| s.metrics.iter().map(move |(k, v)| (format!("{}.{k}", s.id), *v)))
            .collect()
    }

    pub fn failures(&self) -> Vec<(&str, &ExpectationOutcome)> {
        self.steps
            .iter()
            .flat_map(|s| s.expectations.iter().filter(|e| !e.pass).map(move |e| (s.id.as_str(), e)))
            .collect()
    }
}

/// Summary plus every signal and spectrum the pipeline produced.
#[derive(Debug, Clone)]
pub struct Execution {
    pub summary: RunSummary,
    pub signals: BTreeMap<String, SampledSignal>,
    pub spectra: BTreeMap<String, SpectrumAnalysis>,
}

pub fn check_expectation(value: Option<f64>, e: &Expectation, tolerance_scale: f64) -> bool {
    let Some(v) = value else { return false };
    if !v.is_finite() {
        return false;
    }
    if e.min.is_some_and(|m| v < m) || e.max.is_some_and(|m| v > m) {
        return false;
    }
    if let Some(t) = e.target {
        let tol = (e.rel_tol.unwrap_or(0.0) * t.abs()).max(e.abs_tol.unwrap_or(0.0)) * tolerance_scale;
        if (v - t).abs() > tol {
            return false;
        }
    }
    true
}

pub fn run_scenario(config: &ScenarioConfig, options: &RunOptions) -> Result<RunSummary> {
    execute(config, options).map(|e| e.summary)
}

pub fn execute(config: &ScenarioConfig, options: &RunOptions) -> Result<Execution> {
    config.validate()?;
    let start = Instant::now();
    let mut signals = BTreeMap::new();
    for name in config.signals.keys() {
        signals.insert(name.clone(), config.generate_signal(name, &format!("signals.{name}"))?);
    }
    let mut spectra = BTreeMap::new();
    let mut steps: Vec<StepSummary> = Vec::new();

    for (i, step) in config.pipeline.iter().enumerate() {
        let id = step_id(i, step);
        let metrics = run_step(config, step, &id, &mut signals, &mut spectra, &steps)?;
        let expectations = step
            .expect
            .iter()
            .map(|(metric, e)| {
                let value = metrics.get(metric).copied();
                ExpectationOutcome {
                    metric: metric.clone(),
                    value,
                    expectation: e.clone(),
                    pass: check_expectation(value, e, options.tolerance_scale),
                }
            })
            .collect();
        steps.push(StepSummary { id, kind: step.action.kind().to_string(), metrics, expectations });
    }

    let passed = steps.iter().all(|s| s.expectations.iter().all(|e| e.pass));
    let summary = RunSummary {
        scenario: config.name.clone(),
        description: config.description.clone(),
        steps,
        passed,
        duration_s: start.elapsed().as_secs_f64(),
    };
    if let Some(dir) = &options.out_dir {
        output::write_outputs(config, dir, &summary, &signals, &spectra)?;
    }
    Ok(Execution { summary, signals, spectra })
}

fn get<'a>(signals: &'a BTreeMap<String, SampledSignal>, name: &str, path: &str) -> Result<&'a SampledSignal> {
    signals.get(name).ok_or_else(|| CliError::config(path, format!("unknown signal `{name}`")))
}

fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

fn run_step(
    cfg: &ScenarioConfig,
    step: &Step,
    id: &str,
    signals: &mut BTreeMap<String, SampledSignal>,
    spectra: &mut BTreeMap<String, SpectrumAnalysis>,
    done: &[StepSummary],
) -> Result<BTreeMap<String, f64>> {
    let sim = |source: ngd_core::Error| CliError::Step { step: id.to_string(), source };
    let mut m = BTreeMap::new();
    match &step.action {
        Action::Filter { block, input, output } => {
            let b = cfg.block(block, id)?;
            let out = FftFilter::default().apply(&b, get(signals, input, id)?).map_err(sim)?;
            m.insert("wrap_fraction".into(), out.wrap_fraction);
            signals.insert(output.clone(), out.signal);
        }
        Action::Truncate { input, output } => {
            let (t, cut) = truncate_at_max(get(signals, input, id)?);
            m.insert("cut_time".into(), cut);
            signals.insert(output.clone(), t);
        }
        Action::Envelope { input, output } => {
            let e = envelope(get(signals, input, id)?);
            signals.insert(output.clone(), e);
        }
        Action::PeakAdvance { input, output, envelope: env } => {
            let (x, y) = (get(signals, input, id)?, get(signals, output, id)?);
            let r = if *env {
                measure_peak_advance(&envelope(x), &envelope(y))
            } else {
                measure_peak_advance(x, y)
            }
            .map_err(sim)?;
            m.insert("peak_in".into(), r.peak_in);
            m.insert("peak_out".into(), r.peak_out);
            m.insert("peak_advance".into(), r.peak_advance);
            m.insert("correlation_advance".into(), r.correlation_advance);
            m.insert("distortion_rms".into(), r.distortion_rms);
        }
        Action::RiseTime { signal, low, high, window } => {
            let r = rise_time_10_90(get(signals, signal, id)?, *low, *high, (window[0], window[1])).map_err(sim)?;
            m.insert("rise_time".into(), r);
        }
        Action::SettlingBands { signal, reference, tail_fraction } => {
            let y = get(signals, signal, id)?;
            let sq = cfg.square_spec(reference, id)?;
            let (worst, segments) = settling_error(y, sq.period, sq.duty, sq.low, sq.high, *tail_fraction);
            m.insert("settling_error".into(), worst);
            m.insert("segments".into(), segments as f64);
        }
        Action::LoadPower { signal, r_load } => {
            let v = get(signals, signal, id)?;
            let e = load_power(v, *r_load).map_err(sim)?;
            let k = argmax_abs(v);
            m.insert("peak_power_time".into(), e.peak_power_time);
            m.insert("peak_power_index".into(), e.peak_power_index as f64);
            m.insert("argmax_abs_index".into(), k as f64);
            m.insert("peak_coincides".into(), flag(k == e.peak_power_index));
            m.insert("total_energy".into(), e.cumulative_energy.last().copied().unwrap_or(0.0));
        }
        Action::FrontTest { block, pulse, reference } => {
            let b = cfg.block(block, id)?;
            let spec = cfg.gaussian_spec(pulse, id)?;
            let s = &cfg.settings;
            let r = causality_front_test(&b, &spec, s.t0, s.dt, s.count).map_err(sim)?;
            m.insert("input_cut".into(), r.input_cut);
            if let Some(t) = r.output_cut {
                m.insert("output_cut".into(), t);
            }
            if let Some(a) = r.front_advance {
                m.insert("front_advance".into(), a);
                m.insert("front_advance_samples".into(), a / s.dt);
            }
            if let Some(t) = r.output_jump {
                m.insert("output_jump".into(), t);
                m.insert("jump_offset_samples".into(), (t - r.input_cut) / s.dt);
            }
            if let Some(t) = r.departure_time {
                m.insert("departure_time".into(), t);
            }
            m.insert("pre_cut_match_rms".into(), r.pre_cut_match_rms);
            m.insert("peak_advance".into(), r.full_pulse.peak_advance);
            m.insert("correlation_advance".into(), r.full_pulse.correlation_advance);
            m.insert("distortion_rms".into(), r.full_pulse.distortion_rms);
            if let Some(rid) = reference {
                let base = done
                    .iter()
                    .find(|d| &d.id == rid)
                    .and_then(|d| d.metric("peak_advance"))
                    .ok_or_else(|| CliError::config(id, format!("reference step `{rid}` has no peak_advance")))?;
                m.insert("advance_ratio".into(), r.full_pulse.peak_advance / base);
            }
        }
        Action::GoldenRule { forward, feedback, grid } => {
            let (g, f) = (cfg.block(forward, id)?, cfg.block(feedback, id)?);
            let grid = grid.build(id)?;
            let r = golden_rule_residual(&g, &f, &grid).map_err(sim)?;
            let gs = evaluate_response(&g, &grid).map_err(sim)?;
            let fs = evaluate_response(&f, &grid).map_err(sim)?;
            let min_fg = gs.iter().zip(&fs).map(|(a, b)| (a * b).norm()).fold(f64::INFINITY, f64::min);
            m.insert("max_residual".into(), r.max_residual);
            m.insert("min_loop_gain".into(), min_fg);
        }
        Action::Inversion { forward, feedback, grid } => {
            let (g, f) = (cfg.block(forward, id)?, cfg.block(feedback, id)?);
            let e = inversion_error(&g, &f, &grid.build(id)?).map_err(sim)?;
            m.insert("inversion_error".into(), e);
        }
        Action::DelayCancellation { passive, compensator, grid, band_max } => {
            let (p, c) = (cfg.block(passive, id)?, cfg.block(compensator, id)?);
            let grid = grid.build(id)?;
            let r = delay_cancellation_report(&p, &c, &grid).map_err(sim)?;
            let limit = band_max.unwrap_or(f64::INFINITY);
            let in_band = |v: &[f64]| {
                grid.omegas()
                    .iter()
                    .zip(v)
                    .filter(|(w, _)| **w <= limit)
                    .map(|(_, t)| t.abs())
                    .fold(0.0, f64::max)
            };
            m.insert("max_abs_tau_total".into(), in_band(&r.tau_total));
            m.insert("max_abs_tau_passive".into(), in_band(&r.tau_passive));
            m.insert("tau_passive_first".into(), r.tau_passive[0]);
            m.insert("tau_compensator_first".into(), r.tau_compensator[0]);
        }
        Action::Bode { block, grid, band } => {
            let b = cfg.block(block, id)?;
            let grid = grid.build(id)?;
            let r = bode_check(&b, &grid, (band[0], band[1])).map_err(sim)?;
            let recon = grid
                .omegas()
                .iter()
                .zip(&r.phase_reconstructed)
                .filter(|(w, _)| **w >= band[0] && **w <= band[1])
                .map(|(_, p)| p.abs())
                .fold(0.0, f64::max);
            m.insert("max_band_error".into(), r.max_band_error);
            m.insert("max_abs_reconstructed".into(), recon);
        }
        Action::Spectrum { block, grid, name, probe } => {
            let b = cfg.block(block, id)?;
            let grid = grid.build(id)?;
            let s = ngd_core::lti::evaluate_grid(&b, &grid).map_err(sim)?;
            if let Some(w) = probe {
                let omegas = grid.omegas();
                let k = (0..omegas.len())
                    .min_by(|&a, &b| (omegas[a] - w).abs().total_cmp(&(omegas[b] - w).abs()))
                    .unwrap_or(0);
                m.insert("probe_omega".into(), omegas[k]);
                m.insert("group_delay_at_probe".into(), s.group_delay[k]);
                m.insert("magnitude_at_probe".into(), s.magnitude[k]);
            }
            m.insert("min_group_delay".into(), s.group_delay.iter().cloned().fold(f64::INFINITY, f64::min));
            m.insert("max_group_delay".into(), s.group_delay.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
            spectra.insert(name.clone(), s);
        }
        Action::GainFeedback { compensator, grid, threshold } => {
            let spec = cfg.compensator_spec(compensator, id)?;
            let r = gain_feedback_check(&spec, &grid.build(id)?, *threshold).map_err(sim)?;
            m.insert("min_loop_gain".into(), r.min_loop_gain);
            m.insert("worst_omega".into(), r.worst_omega);
            m.insert("pass".into(), flag(r.pass));
        }
        Action::Stability { compensator, grid } => {
            let spec = cfg.compensator_spec(compensator, id)?;
            let grid = match grid {
                Some(g) => g.build(id)?,
                None => spec.default_probe_grid().map_err(sim)?,
            };
            let r = stability_probe(&spec, &grid).map_err(sim)?;
            m.insert("stable".into(), flag(r.stable));
            m.insert("winding".into(), r.winding as f64);
            m.insert("min_return_difference".into(), r.min_return_difference);
            if let Some(pm) = r.phase_margin_deg {
                m.insert("phase_margin_deg".into(), pm);
            }
        }
    }
    Ok(m)
}

/// Largest deviation from the expected level over the last `tail_fraction`
/// of every complete half period, as a fraction of the swing.
pub fn settling_error(y: &SampledSignal, period: f64, duty: f64, low: f64, high: f64, tail_fraction: f64) -> (f64, usize) {
    let swing = (high - low).abs();
    let t_end = y.time(y.len() - 1);
    let first = (y.t0 / period).floor() as i64;
    let last = (t_end / period).ceil() as i64;
    let mut worst: f64 = 0.0;
    let mut segments = 0;
    for n in first..=last {
        let base = n as f64 * period;
        for (a, b, level) in [(base, base + duty * period, high), (base + duty * period, base + period, low)] {
            if a < y.t0 || b > t_end {
                continue;
            }
            segments += 1;
            let from = b - tail_fraction * (b - a);
            for (k, v) in y.samples.iter().enumerate() {
                let t = y.time(k);
                if t >= from && t < b {
                    worst = worst.max((v - level).abs() / swing);
                }
            }
        }
    }
    (worst, segments)
}
