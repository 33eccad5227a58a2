//! Scenario documents (TOML) and their translation into core objects.

use std::collections::BTreeMap;
use std::path::Path;

use ngd_core::circuit::{
    make_compensated_link, make_ngd_compensator, opamp_block, rc_lowpass_block, rlc_bandpass_block, CompensatorSpec,
    OpAmpModel,
};
use ngd_core::signal::{gaussian_pulse, square_wave, GaussianPulseSpec, SampledSignal, SquareWaveSpec};
use ngd_core::{FrequencyGrid, TransferBlock};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema_version: u32,
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub settings: Settings,
    #[serde(default)]
    pub blocks: BTreeMap<String, BlockDef>,
    #[serde(default)]
    pub signals: BTreeMap<String, SignalDef>,
    #[serde(default)]
    pub pipeline: Vec<Step>,
    #[serde(default)]
    pub outputs: Vec<OutputDef>,
}

/// Common time base of every generated signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    #[serde(default)]
    pub t0: f64,
    pub dt: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BlockDef {
    Identity,
    Gain { value: f64 },
    Delay { seconds: f64 },
    RcLowpass { resistance: f64, capacitance: f64 },
    RlcBandpass { resistance: f64, inductance: f64, capacitance: f64 },
    Opamp { dc_gain: f64, pole_frequency: f64 },
    Series { members: Vec<String> },
    Feedback { forward: String, feedback: String },
    /// Amplifier (an `opamp` block) with `feedback` in its negative feedback loop.
    Compensator { feedback: String, amplifier: String },
    CompensatedLink { passive: String, compensator: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SignalDef {
    Gaussian {
        center: f64,
        fwhm: f64,
        #[serde(default = "one")]
        amplitude: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        carrier: Option<f64>,
    },
    Square { period: f64, duty: f64, low: f64, high: f64 },
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridSpacing {
    Linear,
    Log,
    /// `count` cell midpoints of `[0, max]`.
    HalfOffset,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridDef {
    #[serde(default)]
    pub min: f64,
    pub max: f64,
    pub count: usize,
    #[serde(default = "linear")]
    pub spacing: GridSpacing,
}

fn linear() -> GridSpacing {
    GridSpacing::Linear
}

impl GridDef {
    pub fn build(&self, path: &str) -> Result<FrequencyGrid> {
        let grid = match self.spacing {
            GridSpacing::Linear => FrequencyGrid::linear(self.min, self.max, self.count),
            GridSpacing::Log => FrequencyGrid::logarithmic(self.min, self.max, self.count),
            GridSpacing::HalfOffset => FrequencyGrid::half_offset(self.max, self.count),
        };
        grid.map_err(|e| CliError::config(path, e.to_string()))
    }
}

/// Bounds on a reported metric. All given conditions must hold.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expectation {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rel_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub abs_tol: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    /// Metric prefix; defaults to `<index>_<kind>`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    #[serde(flatten)]
    pub action: Action,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub expect: BTreeMap<String, Expectation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "step", rename_all = "snake_case")]
pub enum Action {
    Filter {
        block: String,
        input: String,
        output: String,
    },
    Truncate {
        input: String,
        output: String,
    },
    Envelope {
        input: String,
        output: String,
    },
    PeakAdvance {
        input: String,
        output: String,
        #[serde(default)]
        envelope: bool,
    },
    RiseTime {
        signal: String,
        low: f64,
        high: f64,
        window: [f64; 2],
    },
    /// Deviation from the square-wave levels over the end of every half period.
    SettlingBands {
        signal: String,
        reference: String,
        #[serde(default = "tenth")]
        tail_fraction: f64,
    },
    LoadPower {
        signal: String,
        r_load: f64,
    },
    FrontTest {
        block: String,
        pulse: String,
        /// Id of an earlier `peak_advance` step to compare the full-pulse advance with.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        reference: Option<String>,
    },
    GoldenRule {
        forward: String,
        feedback: String,
        grid: GridDef,
    },
    Inversion {
        forward: String,
        feedback: String,
        grid: GridDef,
    },
    DelayCancellation {
        passive: String,
        compensator: String,
        grid: GridDef,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        band_max: Option<f64>,
    },
    Bode {
        block: String,
        grid: GridDef,
        band: [f64; 2],
    },
    Spectrum {
        block: String,
        grid: GridDef,
        name: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        probe: Option<f64>,
    },
    GainFeedback {
        compensator: String,
        grid: GridDef,
        #[serde(default = "hundred")]
        threshold: f64,
    },
    Stability {
        compensator: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        grid: Option<GridDef>,
    },
}

fn tenth() -> f64 {
    0.1
}

fn hundred() -> f64 {
    100.0
}

impl Action {
    pub fn kind(&self) -> &'static str {
        match self {
            Action::Filter { .. } => "filter",
            Action::Truncate { .. } => "truncate",
            Action::Envelope { .. } => "envelope",
            Action::PeakAdvance { .. } => "peak_advance",
            Action::RiseTime { .. } => "rise_time",
            Action::SettlingBands { .. } => "settling_bands",
            Action::LoadPower { .. } => "load_power",
            Action::FrontTest { .. } => "front_test",
            Action::GoldenRule { .. } => "golden_rule",
            Action::Inversion { .. } => "inversion",
            Action::DelayCancellation { .. } => "delay_cancellation",
            Action::Bode { .. } => "bode",
            Action::Spectrum { .. } => "spectrum",
            Action::GainFeedback { .. } => "gain_feedback",
            Action::Stability { .. } => "stability",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OutputDef {
    /// Time series: `time_s` then one column per signal.
    Csv { path: String, signals: Vec<String> },
    /// `omega_rad_s, magnitude, phase_rad, group_delay_s`.
    SpectrumCsv { path: String, spectrum: String },
    TraceSvg {
        path: String,
        signals: Vec<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        title: Option<String>,
    },
    BodeSvg { path: String, spectrum: String },
    SummaryJson { path: String },
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| {
            let path = e.span().map(|s| format!("bytes {}..{}", s.start, s.end)).unwrap_or_default();
            CliError::config(path, e.message().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            context: format!("reading {}", path.display()),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| CliError::config("", e.to_string()))
    }

    /// Checks the schema version, every name reference and every block and signal definition.
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(CliError::config(
                "schema_version",
                format!("unsupported schema version {}, expected {SCHEMA_VERSION}", self.schema_version),
            ));
        }
        let mut resolver = BlockResolver::new(self);
        for name in self.blocks.keys() {
            resolver.resolve(name, &format!("blocks.{name}"))?;
        }
        for name in self.signals.keys() {
            self.generate_signal(name, &format!("signals.{name}"))?;
        }

        let mut known: Vec<&str> = self.signals.keys().map(String::as_str).collect();
        let mut spectra: Vec<&str> = Vec::new();
        let mut ids: Vec<String> = Vec::new();
        for (i, step) in self.pipeline.iter().enumerate() {
            let at = |field: &str| format!("pipeline[{i}].{field}");
            let need_signal = |known: &[&str], name: &str, field: &str| -> Result<()> {
                if known.contains(&name) {
                    Ok(())
                } else {
                    Err(CliError::config(at(field), format!("unknown signal `{name}`")))
                }
            };
            let need_block = |name: &str, field: &str| -> Result<()> {
                if self.blocks.contains_key(name) {
                    Ok(())
                } else {
                    Err(CliError::config(at(field), format!("unknown block `{name}`")))
                }
            };
            let id = step_id(i, step);
            if ids.contains(&id) {
                return Err(CliError::config(at("id"), format!("duplicate step id `{id}`")));
            }
            match &step.action {
                Action::Filter { block, input, output } => {
                    need_block(block, "block")?;
                    need_signal(&known, input, "input")?;
                    known.push(output);
                }
                Action::Truncate { input, output } | Action::Envelope { input, output } => {
                    need_signal(&known, input, "input")?;
                    known.push(output);
                }
                Action::PeakAdvance { input, output, .. } => {
                    need_signal(&known, input, "input")?;
                    need_signal(&known, output, "output")?;
                }
                Action::RiseTime { signal, .. } | Action::LoadPower { signal, .. } => {
                    need_signal(&known, signal, "signal")?;
                }
                Action::SettlingBands { signal, reference, .. } => {
                    need_signal(&known, signal, "signal")?;
                    match self.signals.get(reference) {
                        Some(SignalDef::Square { .. }) => {}
                        _ => return Err(CliError::config(at("reference"), format!("`{reference}` is not a square-wave signal"))),
                    }
                }
                Action::FrontTest { block, pulse, reference } => {
                    need_block(block, "block")?;
                    match self.signals.get(pulse) {
                        Some(SignalDef::Gaussian { .. }) => {}
                        _ => return Err(CliError::config(at("pulse"), format!("`{pulse}` is not a gaussian signal"))),
                    }
                    if let Some(r) = reference {
                        let ok = self.pipeline[..i]
                            .iter()
                            .enumerate()
                            .any(|(j, s)| matches!(s.action, Action::PeakAdvance { .. }) && &step_id(j, s) == r);
                        if !ok {
                            return Err(CliError::config(at("reference"), format!("no earlier peak_advance step `{r}`")));
                        }
                    }
                }
                Action::GoldenRule { forward, feedback, grid } | Action::Inversion { forward, feedback, grid } => {
                    need_block(forward, "forward")?;
                    need_block(feedback, "feedback")?;
                    grid.build(&at("grid"))?;
                }
                Action::DelayCancellation { passive, compensator, grid, .. } => {
                    need_block(passive, "passive")?;
                    need_block(compensator, "compensator")?;
                    grid.build(&at("grid"))?;
                }
                Action::Bode { block, grid, .. } => {
                    need_block(block, "block")?;
                    grid.build(&at("grid"))?;
                }
                Action::Spectrum { block, grid, name, .. } => {
                    need_block(block, "block")?;
                    grid.build(&at("grid"))?;
                    spectra.push(name);
                }
                Action::GainFeedback { compensator, grid, .. } => {
                    self.compensator_spec(compensator, &at("compensator"))?;
                    grid.build(&at("grid"))?;
                }
                Action::Stability { compensator, grid } => {
                    self.compensator_spec(compensator, &at("compensator"))?;
                    if let Some(g) = grid {
                        g.build(&at("grid"))?;
                    }
                }
            }
            ids.push(id);
        }

        for (i, out) in self.outputs.iter().enumerate() {
            let at = |field: &str| format!("outputs[{i}].{field}");
            match out {
                OutputDef::Csv { signals, .. } | OutputDef::TraceSvg { signals, .. } => {
                    for s in signals {
                        if !known.contains(&s.as_str()) {
                            return Err(CliError::config(at("signals"), format!("unknown signal `{s}`")));
                        }
                    }
                }
                OutputDef::SpectrumCsv { spectrum, .. } | OutputDef::BodeSvg { spectrum, .. } => {
                    if !spectra.contains(&spectrum.as_str()) {
                        return Err(CliError::config(at("spectrum"), format!("unknown spectrum `{spectrum}`")));
                    }
                }
                OutputDef::SummaryJson { .. } => {}
            }
        }
        Ok(())
    }

    pub fn block(&self, name: &str, path: &str) -> Result<TransferBlock> {
        BlockResolver::new(self).resolve(name, path)
    }

    /// Feedback network and amplifier of a `compensator` block.
    pub fn compensator_spec(&self, name: &str, path: &str) -> Result<CompensatorSpec> {
        match self.blocks.get(name) {
            Some(BlockDef::Compensator { feedback, amplifier }) => Ok(CompensatorSpec::new(
                self.block(feedback, &format!("blocks.{name}.feedback"))?,
                self.amplifier(amplifier, &format!("blocks.{name}.amplifier"))?,
            )),
            Some(_) => Err(CliError::config(path, format!("block `{name}` is not a compensator"))),
            None => Err(CliError::config(path, format!("unknown block `{name}`"))),
        }
    }

    fn amplifier(&self, name: &str, path: &str) -> Result<OpAmpModel> {
        match self.blocks.get(name) {
            Some(BlockDef::Opamp { dc_gain, pole_frequency }) => {
                OpAmpModel::new(*dc_gain, *pole_frequency).map_err(|e| CliError::config(format!("blocks.{name}"), e.to_string()))
            }
            Some(_) => Err(CliError::config(path, format!("block `{name}` is not an opamp"))),
            None => Err(CliError::config(path, format!("unknown block `{name}`"))),
        }
    }

    pub fn generate_signal(&self, name: &str, path: &str) -> Result<SampledSignal> {
        let s = &self.settings;
        let def = self.signals.get(name).ok_or_else(|| CliError::config(path, format!("unknown signal `{name}`")))?;
        let built = match def {
            SignalDef::Gaussian { center, fwhm, amplitude, carrier } => {
                gaussian_pulse(&self.pulse_spec(*center, *fwhm, *amplitude, *carrier), s.t0, s.dt, s.count)
            }
            SignalDef::Square { period, duty, low, high } => square_wave(
                &SquareWaveSpec { period: *period, duty: *duty, low: *low, high: *high },
                s.t0,
                s.dt,
                s.count,
            ),
        };
        built.map_err(|e| CliError::config(format!("signals.{name}"), e.to_string()))
    }

    fn pulse_spec(&self, center: f64, fwhm: f64, amplitude: f64, carrier: Option<f64>) -> GaussianPulseSpec {
        GaussianPulseSpec { center, fwhm, amplitude, carrier }
    }

    pub fn gaussian_spec(&self, name: &str, path: &str) -> Result<GaussianPulseSpec> {
        match self.signals.get(name) {
            Some(SignalDef::Gaussian { center, fwhm, amplitude, carrier }) => {
                Ok(self.pulse_spec(*center, *fwhm, *amplitude, *carrier))
            }
            _ => Err(CliError::config(path, format!("`{name}` is not a gaussian signal"))),
        }
    }

    pub fn square_spec(&self, name: &str, path: &str) -> Result<SquareWaveSpec> {
        match self.signals.get(name) {
            Some(SignalDef::Square { period, duty, low, high }) => {
                Ok(SquareWaveSpec { period: *period, duty: *duty, low: *low, high: *high })
            }
            _ => Err(CliError::config(path, format!("`{name}` is not a square-wave signal"))),
        }
    }
}

pub(crate) fn step_id(index: usize, step: &Step) -> String {
    step.id.clone().unwrap_or_else(|| format!("{index}_{}", step.action.kind()))
}

/// Builds blocks by name, rejecting unknown references and cycles.
struct BlockResolver<'a> {
    cfg: &'a ScenarioConfig,
    stack: Vec<String>,
}

impl<'a> BlockResolver<'a> {
    fn new(cfg: &'a ScenarioConfig) -> Self {
        Self { cfg, stack: Vec::new() }
    }

    fn resolve(&mut self, name: &str, path: &str) -> Result<TransferBlock> {
        let def = self
            .cfg
            .blocks
            .get(name)
            .ok_or_else(|| CliError::config(path, format!("unknown block `{name}`")))?;
        if self.stack.iter().any(|n| n == name) {
            return Err(CliError::config(path, format!("block `{name}` refers to itself")));
        }
        self.stack.push(name.to_string());
        let here = format!("blocks.{name}");
        let wrap = |e: ngd_core::Error| CliError::config(here.clone(), e.to_string());
        let block = match def {
            BlockDef::Identity => Ok(TransferBlock::Identity),
            BlockDef::Gain { value } => TransferBlock::gain(*value).map_err(wrap),
            BlockDef::Delay { seconds } => TransferBlock::pure_delay(*seconds).map_err(wrap),
            BlockDef::RcLowpass { resistance, capacitance } => rc_lowpass_block(*resistance, *capacitance).map_err(wrap),
            BlockDef::RlcBandpass { resistance, inductance, capacitance } => {
                rlc_bandpass_block(*resistance, *inductance, *capacitance).map_err(wrap)
            }
            BlockDef::Opamp { dc_gain, pole_frequency } => OpAmpModel::new(*dc_gain, *pole_frequency)
                .and_then(opamp_block)
                .map_err(wrap),
            BlockDef::Series { members } => members
                .iter()
                .enumerate()
                .map(|(i, m)| self.resolve(m, &format!("{here}.members[{i}]")))
                .collect::<Result<Vec<_>>>()
                .map(TransferBlock::Series),
            BlockDef::Feedback { forward, feedback } => {
                let f = self.resolve(forward, &format!("{here}.forward"))?;
                let b = self.resolve(feedback, &format!("{here}.feedback"))?;
                Ok(ngd_core::lti::compose_feedback(f, b))
            }
            BlockDef::Compensator { feedback, .. } => {
                self.resolve(feedback, &format!("{here}.feedback"))?;
                let spec = self.cfg.compensator_spec(name, path)?;
                make_ngd_compensator(&spec).map_err(wrap)
            }
            BlockDef::CompensatedLink { passive, compensator } => {
                let p = self.resolve(passive, &format!("{here}.passive"))?;
                let c = self.resolve(compensator, &format!("{here}.compensator"))?;
                Ok(make_compensated_link(p, c))
            }
        };
        self.stack.pop();
        block
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
schema_version = 1
name = "t"
[settings]
dt = 1e-3
count = 256
[blocks.a]
kind = "identity"
[signals.x]
kind = "gaussian"
center = 0.128
fwhm = 0.01
[[pipeline]]
step = "filter"
block = "a"
input = "x"
output = "y"
"#;

    #[test]
    fn parses_minimal() {
        let c = ScenarioConfig::from_toml_str(MINIMAL).unwrap();
        assert_eq!(c.pipeline.len(), 1);
        let again = ScenarioConfig::from_toml_str(&c.to_toml_string().unwrap()).unwrap();
        assert_eq!(c, again);
    }

    #[test]
    fn unknown_block_has_path() {
        let bad = MINIMAL.replace("block = \"a\"", "block = \"zz\"");
        match ScenarioConfig::from_toml_str(&bad) {
            Err(CliError::Config { path, .. }) => assert_eq!(path, "pipeline[0].block"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn wrong_schema_version() {
        let bad = MINIMAL.replace("schema_version = 1", "schema_version = 7");
        assert!(matches!(ScenarioConfig::from_toml_str(&bad), Err(CliError::Config { .. })));
    }

    #[test]
    fn cycles_rejected() {
        let bad = format!("{MINIMAL}\n[blocks.s]\nkind = \"series\"\nmembers = [\"s\"]\n");
        match ScenarioConfig::from_toml_str(&bad) {
            Err(CliError::Config { message, .. }) => assert!(message.contains("itself")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn invalid_component_reported_on_block() {
        let bad = format!("{MINIMAL}\n[blocks.r]\nkind = \"rc_lowpass\"\nresistance = -1.0\ncapacitance = 1e-6\n");
        match ScenarioConfig::from_toml_str(&bad) {
            Err(CliError::Config { path, .. }) => assert_eq!(path, "blocks.r"),
            other => panic!("{other:?}"),
        }
    }
}
