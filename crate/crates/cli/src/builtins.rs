//! Scenarios shipped with the binary.

use std::path::Path;

use crate::config::ScenarioConfig;
use crate::error::{CliError, Result};

const BUILTINS: &[(&str, &str)] = &[
    ("fig2_rlc_advance", include_str!("../scenarios/fig2_rlc_advance.toml")),
    ("fig3_causality", include_str!("../scenarios/fig3_causality.toml")),
    ("fig5_rc_cancellation", include_str!("../scenarios/fig5_rc_cancellation.toml")),
    ("golden_rule_sweep", include_str!("../scenarios/golden_rule_sweep.toml")),
    ("bode_check", include_str!("../scenarios/bode_check.toml")),
    ("energy_report", include_str!("../scenarios/energy_report.toml")),
    ("identity_smoke", include_str!("../scenarios/identity_smoke.toml")),
];

pub fn names() -> impl Iterator<Item = &'static str> {
    BUILTINS.iter().map(|(n, _)| *n)
}

pub fn source(name: &str) -> Option<&'static str> {
    BUILTINS.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

pub fn builtin(name: &str) -> Result<ScenarioConfig> {
    let text = source(name).ok_or_else(|| CliError::config("scenario", format!("no built-in scenario named `{name}`")))?;
    ScenarioConfig::from_toml_str(text)
}

/// `(name, description)` for every built-in, in a fixed order.
pub fn list_scenarios() -> Result<Vec<(String, String)>> {
    names().map(|n| builtin(n).map(|c| (c.name, c.description))).collect()
}

/// A built-in name, or else a path to a TOML file.
pub fn load(name_or_path: &str) -> Result<ScenarioConfig> {
    if source(name_or_path).is_some() {
        return builtin(name_or_path);
    }
    let path = Path::new(name_or_path);
    if path.exists() {
        ScenarioConfig::from_path(path)
    } else {
        Err(CliError::config(
            "scenario",
            format!("`{name_or_path}` is neither a built-in scenario nor an existing file"),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_builtins_parse_and_match_their_names() {
        for name in names() {
            let cfg = builtin(name).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert_eq!(cfg.name, name);
            assert!(!cfg.description.is_empty());
        }
    }

    #[test]
    fn unknown_name_is_a_config_error() {
        assert!(matches!(load("no_such_scenario"), Err(CliError::Config { .. })));
    }
}
