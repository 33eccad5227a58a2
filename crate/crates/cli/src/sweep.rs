//! One-parameter sweeps over a scenario.

use crate::config::ScenarioConfig;
use crate::error::{CliError, Result};
use crate::runner::{run_scenario, RunOptions, RunSummary};

#[derive(Debug, Clone)]
pub struct SweepTable {
    pub param: String,
    pub rows: Vec<(f64, RunSummary)>,
}

impl SweepTable {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|(_, s)| s.passed)
    }

    /// One row per value; columns are the union of every `step.metric` key.
    pub fn to_csv(&self) -> Result<String> {
        let mut keys: Vec<String> = self.rows.iter().flat_map(|(_, s)| s.flat_metrics().into_iter().map(|(k, _)| k)).collect();
        keys.sort();
        keys.dedup();
        let err = |e: csv::Error| CliError::Output { path: "sweep".into(), message: e.to_string() };
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec![self.param.clone(), "passed".to_string()];
        header.extend(keys.iter().cloned());
        w.write_record(&header).map_err(err)?;
        for (value, summary) in &self.rows {
            let mut row = vec![value.to_string(), summary.passed.to_string()];
            row.extend(keys.iter().map(|k| summary.metric(k).map(|v| v.to_string()).unwrap_or_default()));
            w.write_record(&row).map_err(err)?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Output { path: "sweep".into(), message: e.to_string() })?;
        String::from_utf8(bytes).map_err(|e| CliError::Output { path: "sweep".into(), message: e.to_string() })
    }
}

/// Copy of `config` with the number at dotted `param` (e.g. `blocks.amp.dc_gain`, `pipeline.2.grid.max`) replaced.
pub fn with_param(config: &ScenarioConfig, param: &str, value: f64) -> Result<ScenarioConfig> {
    let mut root = toml::Value::try_from(config).map_err(|e| CliError::config(param, e.to_string()))?;
    let mut node = &mut root;
    for part in param.split('.') {
        node = match node {
            toml::Value::Table(t) => t.get_mut(part),
            toml::Value::Array(a) => part.parse::<usize>().ok().and_then(|i| a.get_mut(i)),
            _ => None,
        }
        .ok_or_else(|| CliError::config(param, format!("no field `{part}`")))?;
    }
    *node = match node {
        toml::Value::Integer(_) if value.fract() == 0.0 && value.abs() < 9.0e15 => toml::Value::Integer(value as i64),
        toml::Value::Integer(_) | toml::Value::Float(_) => toml::Value::Float(value),
        other => return Err(CliError::config(param, format!("not a number: {other}"))),
    };
    let cfg: ScenarioConfig = root.try_into().map_err(|e: toml::de::Error| CliError::config(param, e.message().to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn sweep(config: &ScenarioConfig, param: &str, values: &[f64], options: &RunOptions) -> Result<SweepTable> {
    if values.is_empty() {
        return Err(CliError::config(param, "sweep needs at least one value"));
    }
    let rows = values
        .iter()
        .map(|&v| {
            let cfg = with_param(config, param, v)?;
            Ok((v, run_scenario(&cfg, &RunOptions { out_dir: None, ..options.clone() })?))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepTable { param: param.to_string(), rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtins::builtin;

    #[test]
    fn sets_nested_values() {
        let cfg = builtin("golden_rule_sweep").unwrap();
        let swept = with_param(&cfg, "blocks.amp.dc_gain", 1234.0).unwrap();
        assert_eq!(swept.blocks["amp"], crate::config::BlockDef::Opamp { dc_gain: 1234.0, pole_frequency: 1.0e6 });
        let swept = with_param(&cfg, "settings.count", 2048.0).unwrap();
        assert_eq!(swept.settings.count, 2048);
    }

    #[test]
    fn rejects_bad_paths() {
        let cfg = builtin("golden_rule_sweep").unwrap();
        assert!(with_param(&cfg, "blocks.nope.dc_gain", 1.0).is_err());
        assert!(with_param(&cfg, "name", 1.0).is_err());
        assert!(with_param(&cfg, "blocks.amp.dc_gain", -1.0).is_err());
    }
}
