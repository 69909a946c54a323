//! Experiment config files.
//!
//! A config is a TOML table. Rates and times are in units of `1/γ`, or in
//! units of `1/Γ` through the `kappa_over_Gamma` and `horizon_Gamma` keys:
//!
//! ```toml
//! code = "five_qubit"
//! gamma = 1.0
//! kappa_over_Gamma = [10, 30, 100]
//! horizon_Gamma = 1.0
//! trajectories = 30
//! seed = 7
//! ```
//!
//! A run manifest is also accepted in place of a config; its resolved
//! parameters are replayed verbatim.

use std::path::Path;

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::codes::CodeId;
use crate::error::{Error, Result};
use crate::metrics::InfoMode;
use crate::montecarlo::{default_dt, ExperimentConfig};

const KEYS: [&str; 12] = [
    "code",
    "gamma",
    "kappa",
    "kappa_over_Gamma",
    "horizon",
    "horizon_Gamma",
    "dt",
    "trajectories",
    "seed",
    "emit_stride",
    "metric_mode",
    "trajectory_index",
];

/// Every parameter of a run after defaults are applied: one experiment per
/// measurement strength.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedConfig {
    pub points: Vec<ExperimentConfig>,
    /// Trajectory emitted by the `trajectory` command.
    pub trajectory_index: usize,
}

impl ResolvedConfig {
    pub fn override_seed(&mut self, seed: u64) {
        self.points.iter_mut().for_each(|p| p.seed = seed);
    }

    pub fn override_emit_stride(&mut self, stride: usize) {
        self.points.iter_mut().for_each(|p| p.emit_stride = stride);
    }

    pub fn validate(&self) -> Result<()> {
        self.points.iter().try_for_each(ExperimentConfig::validate)
    }
}

fn bad(field: &str, reason: impl Into<String>) -> Error {
    Error::Config {
        field: field.into(),
        reason: reason.into(),
    }
}

fn number(field: &str, v: &Value) -> Result<f64> {
    match v {
        Value::Float(x) => Ok(*x),
        Value::Integer(i) => Ok(*i as f64),
        other => Err(bad(
            field,
            format!("expected a number, found {}", other.type_str()),
        )),
    }
}

fn count(field: &str, v: &Value) -> Result<u64> {
    match v {
        Value::Integer(i) if *i >= 0 => Ok(*i as u64),
        Value::Integer(i) => Err(bad(field, format!("must be non-negative, got {i}"))),
        other => Err(bad(
            field,
            format!("expected an integer, found {}", other.type_str()),
        )),
    }
}

fn numbers(field: &str, v: &Value) -> Result<Vec<f64>> {
    match v {
        Value::Array(items) if items.is_empty() => Err(bad(field, "list is empty")),
        Value::Array(items) => items.iter().map(|x| number(field, x)).collect(),
        scalar => Ok(vec![number(field, scalar)?]),
    }
}

fn text<'a>(field: &str, v: &'a Value) -> Result<&'a str> {
    v.as_str()
        .ok_or_else(|| bad(field, format!("expected a string, found {}", v.type_str())))
}

pub fn parse_toml(source: &str) -> Result<ResolvedConfig> {
    let table: Table = source
        .parse()
        .map_err(|e: toml::de::Error| bad("<syntax>", e.message().to_string()))?;
    if let Some(key) = table.keys().find(|k| !KEYS.contains(&k.as_str())) {
        return Err(bad(
            key,
            format!("unknown key; expected one of: {}", KEYS.join(", ")),
        ));
    }
    let get = |k: &str| table.get(k);

    let code: CodeId = match get("code") {
        Some(v) => text("code", v)?
            .parse()
            .map_err(|e: Error| bad("code", e.to_string()))?,
        None => return Err(bad("code", "missing")),
    };
    let gamma = get("gamma")
        .map(|v| number("gamma", v))
        .transpose()?
        .unwrap_or(1.0);
    let channels = code.build().error_channels().len() as f64;
    let big_gamma = gamma * channels;

    let kappas = match (get("kappa"), get("kappa_over_Gamma")) {
        (Some(_), Some(_)) => {
            return Err(bad(
                "kappa",
                "give either kappa or kappa_over_Gamma, not both",
            ))
        }
        (Some(v), None) => numbers("kappa", v)?,
        (None, Some(v)) => numbers("kappa_over_Gamma", v)?
            .into_iter()
            .map(|r| r * big_gamma)
            .collect(),
        (None, None) => return Err(bad("kappa", "missing (or give kappa_over_Gamma)")),
    };
    let horizon = match (get("horizon"), get("horizon_Gamma")) {
        (Some(_), Some(_)) => {
            return Err(bad(
                "horizon",
                "give either horizon or horizon_Gamma, not both",
            ))
        }
        (Some(v), None) => number("horizon", v)?,
        (None, Some(v)) => {
            if big_gamma <= 0.0 {
                return Err(bad("horizon_Gamma", "needs a positive total error rate"));
            }
            number("horizon_Gamma", v)? / big_gamma
        }
        (None, None) => 1.0,
    };
    let dt = get("dt").map(|v| number("dt", v)).transpose()?;
    let trajectories = get("trajectories")
        .map(|v| count("trajectories", v))
        .transpose()?
        .unwrap_or(50) as usize;
    let seed = get("seed")
        .map(|v| count("seed", v))
        .transpose()?
        .unwrap_or(0);
    let emit_stride = get("emit_stride")
        .map(|v| count("emit_stride", v))
        .transpose()?;
    let metric_mode = match get("metric_mode") {
        None => InfoMode::default(),
        Some(v) => match text("metric_mode", v)? {
            "per-class" => InfoMode::PerClass,
            "per-string" => InfoMode::PerString,
            other => {
                return Err(bad(
                    "metric_mode",
                    format!("{other:?}; expected per-class or per-string"),
                ))
            }
        },
    };
    let trajectory_index = get("trajectory_index")
        .map(|v| count("trajectory_index", v))
        .transpose()?
        .unwrap_or(0);

    let points = kappas
        .into_iter()
        .map(|kappa| {
            let mut p = ExperimentConfig::new(code, gamma, kappa, horizon);
            if let Some(dt) = dt {
                p.dt = dt;
                p.emit_stride = (p.steps() / 1000).max(1);
            } else {
                p.dt = default_dt(kappa, big_gamma, horizon);
            }
            if let Some(s) = emit_stride {
                p.emit_stride = s as usize;
            }
            p.trajectories = trajectories;
            p.seed = seed;
            p.metric_mode = metric_mode;
            p
        })
        .collect();
    let resolved = ResolvedConfig {
        points,
        trajectory_index: trajectory_index as usize,
    };
    resolved.validate()?;
    Ok(resolved)
}

/// Reads a TOML config, or the resolved config recorded in a manifest when
/// the file is JSON.
pub fn load(path: &Path) -> Result<ResolvedConfig> {
    let source = std::fs::read_to_string(path)
        .map_err(|e| Error::Argument(format!("cannot read config {}: {e}", path.display())))?;
    if path.extension().is_some_and(|e| e == "json") {
        let manifest: super::manifest::RunManifest = serde_json::from_str(&source)
            .map_err(|e| bad("<manifest>", format!("{}: {e}", path.display())))?;
        manifest.config.validate()?;
        Ok(manifest.config)
    } else {
        parse_toml(&source)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn field_of(src: &str) -> String {
        match parse_toml(src) {
            Err(Error::Config { field, .. }) => field,
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn ratio_shorthand_resolves_in_total_rate_units() {
        let c = parse_toml(
            "code = \"five_qubit\"\nkappa_over_Gamma = [10, 30, 100]\nhorizon_Gamma = 1.0\ntrajectories = 30\nseed = 7\n",
        )
        .unwrap();
        assert_eq!(c.points.len(), 3);
        let kappas: Vec<f64> = c.points.iter().map(|p| p.kappa).collect();
        assert_eq!(kappas, vec![150.0, 450.0, 1500.0]);
        for p in &c.points {
            assert!((p.horizon - 1.0 / 15.0).abs() < 1e-15);
            assert!(p.kappa * p.dt <= 1e-3 * (1.0 + 1e-12));
            assert_eq!(
                (p.trajectories, p.seed, p.metric_mode),
                (30, 7, InfoMode::PerClass)
            );
        }
    }

    #[test]
    fn defaults_fill_everything_else() {
        let c = parse_toml("code = \"bitflip3\"\nkappa = 40\n").unwrap();
        let p = &c.points[0];
        assert_eq!(
            (p.gamma, p.horizon, p.trajectories, p.seed),
            (1.0, 1.0, 50, 0)
        );
        assert_eq!(p.dt, 2.5e-5);
        assert_eq!(p.emit_stride, 40);
    }

    #[test]
    fn errors_name_the_offending_field() {
        assert_eq!(field_of("code = \"bitflip3\"\nkapa = 4\n"), "kapa");
        assert_eq!(field_of("kappa = 4\n"), "code");
        assert_eq!(field_of("code = \"steane\"\nkappa = 4\n"), "code");
        assert_eq!(field_of("code = \"bitflip3\"\nkappa = \"big\"\n"), "kappa");
        assert_eq!(
            field_of("code = \"bitflip3\"\nkappa = 4\ntrajectories = 0\n"),
            "trajectories"
        );
        assert_eq!(
            field_of("code = \"bitflip3\"\nkappa = 4000\ndt = 1e-3\n"),
            "dt"
        );
        assert_eq!(
            field_of("code = \"bitflip3\"\nkappa = 4\nmetric_mode = \"both\"\n"),
            "metric_mode"
        );
        assert_eq!(field_of("code = \"bitflip3\"\nkappa = -1\n"), "kappa");
        assert_eq!(field_of("code = = 3"), "<syntax>");
    }
}
