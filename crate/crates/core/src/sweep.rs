//! Parameter sweeps with common random numbers.
//!
//! Every grid point is priced with the same seed, so differences between
//! neighbouring points are not masked by sampling noise. Threshold sweeps
//! reuse one set of loss paths for all values.

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::{parse_json, Config, ConversionRule, ResolvedConfig, Threshold};
use crate::error::{Error, Result};
use crate::pricing::{price, price_thresholds, PriceBreakdown, PricingOptions};

pub const SWEEP_HEADER: [&str; 9] = ["parameter", "value", "V0", "I1", "I2", "I3", "se", "rule", "sigma_S"];

/// Contract or model input varied by a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepParameter {
    D,
    T,
    K,
    #[serde(rename = "nu")]
    Nu,
    #[serde(rename = "zeta")]
    Zeta,
    #[serde(rename = "sigma_r")]
    SigmaR,
    #[serde(rename = "theta_r")]
    ThetaR,
}

impl SweepParameter {
    pub fn name(self) -> &'static str {
        match self {
            SweepParameter::D => "D",
            SweepParameter::T => "T",
            SweepParameter::K => "K",
            SweepParameter::Nu => "nu",
            SweepParameter::Zeta => "zeta",
            SweepParameter::SigmaR => "sigma_r",
            SweepParameter::ThetaR => "theta_r",
        }
    }

    /// Whether the parameter replaces the conversion rule itself.
    fn sets_rule(self) -> bool {
        matches!(self, SweepParameter::K | SweepParameter::Nu)
    }

    pub fn apply(self, cfg: &mut Config, value: f64) {
        match self {
            SweepParameter::D => cfg.contract.threshold = Threshold(value),
            SweepParameter::T => cfg.contract.term = value,
            SweepParameter::K => cfg.contract.conversion = ConversionRule::ConstantPrice { k: value },
            SweepParameter::Nu => cfg.contract.conversion = ConversionRule::PowerOfShare { nu: value },
            SweepParameter::Zeta => cfg.contract.zeta = value,
            SweepParameter::SigmaR => cfg.rates.sigma_r = value,
            SweepParameter::ThetaR => cfg.rates.theta_r = value,
        }
    }
}

impl fmt::Display for SweepParameter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Sweep definition, read from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
    /// Conversion rules to repeat the sweep under; empty means the base
    /// configuration's rule.
    #[serde(default)]
    pub rules: Vec<ConversionRule>,
    /// Used when no configuration is given on the command line.
    #[serde(default)]
    pub base_config: Option<PathBuf>,
    /// Seed for every point; defaults to the base configuration's seed.
    #[serde(default)]
    pub shared_seed: Option<u64>,
    #[serde(default)]
    pub paths: Option<usize>,
}

impl SweepSpec {
    pub fn from_json(text: &str) -> Result<SweepSpec> {
        let spec: SweepSpec = parse_json(text, "sweep")?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::config("sweep.values", "must list at least one value"));
        }
        if let Some(i) = self.values.iter().position(|v| !v.is_finite()) {
            return Err(Error::config(format!("sweep.values[{i}]"), "must be finite"));
        }
        if self.parameter.sets_rule() && !self.rules.is_empty() {
            return Err(Error::config(
                "sweep.rules",
                format!("cannot be combined with a sweep over {}", self.parameter),
            ));
        }
        if self.paths == Some(0) {
            return Err(Error::config("sweep.paths", "must be >= 1"));
        }
        Ok(())
    }
}

pub fn load_sweep_spec(path: impl AsRef<Path>) -> Result<SweepSpec> {
    SweepSpec::from_json(&std::fs::read_to_string(path)?)
}

/// One priced grid point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub parameter: SweepParameter,
    pub value: f64,
    pub price: PriceBreakdown,
}

impl SweepRow {
    pub fn csv_record(&self) -> Vec<String> {
        let p = &self.price;
        vec![
            self.parameter.to_string(),
            self.value.to_string(),
            p.v0.to_string(),
            p.i1.to_string(),
            p.i2.to_string(),
            p.i3.to_string(),
            p.se_total.to_string(),
            p.rule.to_string(),
            p.sigma_s.to_string(),
        ]
    }
}

/// Prices every (rule, value) pair, rule by rule in the listed order.
pub fn run_sweep(base: &ResolvedConfig, spec: &SweepSpec, options: PricingOptions) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    let mut plan = base.plan();
    if let Some(seed) = spec.shared_seed {
        plan = plan.with_seed(seed);
    }
    if let Some(paths) = spec.paths {
        plan = plan.with_paths(paths);
    }
    let rules = if spec.rules.is_empty() {
        vec![base.contract().conversion]
    } else {
        spec.rules.clone()
    };
    let mut rows = Vec::new();
    for rule in rules {
        let cfg = base.modified(|c| c.contract.conversion = rule)?;
        if spec.parameter == SweepParameter::D {
            let prices = price_thresholds(&cfg, &spec.values, &plan, options)?;
            rows.extend(spec.values.iter().zip(prices).map(|(&value, price)| SweepRow {
                parameter: spec.parameter,
                value,
                price,
            }));
            continue;
        }
        for &value in &spec.values {
            let point = cfg.modified(|c| spec.parameter.apply(c, value))?;
            rows.push(SweepRow {
                parameter: spec.parameter,
                value,
                price: price(&point, &plan, options)?,
            });
        }
    }
    Ok(rows)
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SWEEP_HEADER)?;
    for row in rows {
        w.write_record(row.csv_record())?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick() -> ResolvedConfig {
        ResolvedConfig::canonical()
            .modified(|c| {
                c.mc.paths = 2000;
                c.contract.term = 2.0;
            })
            .unwrap()
    }

    #[test]
    fn parses_and_validates() {
        let spec = SweepSpec::from_json(r#"{"parameter": "nu", "values": [0.5, 1.0]}"#).unwrap();
        assert_eq!(spec.parameter, SweepParameter::Nu);
        let err = SweepSpec::from_json(r#"{"parameter": "D", "values": []}"#).unwrap_err();
        assert!(matches!(err, Error::Config { ref field, .. } if field == "sweep.values"));
        let err = SweepSpec::from_json(r#"{"parameter": "rho", "values": [1]}"#).unwrap_err();
        assert!(
            matches!(err, Error::Config { ref field, .. } if field == "sweep.parameter"),
            "{err}"
        );
        let err = SweepSpec::from_json(r#"{"values": [1]}"#).unwrap_err();
        assert!(
            matches!(err, Error::Config { ref field, .. } if field == "sweep.parameter"),
            "{err}"
        );
        let err = SweepSpec::from_json(
            r#"{"parameter": "K", "values": [8], "rules": [{"rule": "power_of_share", "nu": 1}]}"#,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Config { ref field, .. } if field == "sweep.rules"));
    }

    #[test]
    fn single_point_matches_price() {
        let cfg = quick();
        for parameter in [SweepParameter::D, SweepParameter::Zeta] {
            let value = if parameter == SweepParameter::D { 1.8e10 } else { 0.3 };
            let spec = SweepSpec {
                parameter,
                values: vec![value],
                rules: vec![],
                base_config: None,
                shared_seed: None,
                paths: None,
            };
            let rows = run_sweep(&cfg, &spec, PricingOptions::default()).unwrap();
            let direct = price(
                &cfg.modified(|c| parameter.apply(c, value)).unwrap(),
                &cfg.plan(),
                PricingOptions::default(),
            )
            .unwrap();
            assert_eq!(rows[0].price, direct);
        }
    }

    #[test]
    fn rules_times_values_rows() {
        let spec = SweepSpec {
            parameter: SweepParameter::D,
            values: vec![1.3e10, 4.0e10],
            rules: vec![
                ConversionRule::ConstantPrice { k: 8.0 },
                ConversionRule::PowerOfShare { nu: 1.0 },
                ConversionRule::PowerOfShare { nu: 0.5 },
            ],
            base_config: None,
            shared_seed: Some(3),
            paths: Some(500),
        };
        let rows = run_sweep(&quick(), &spec, PricingOptions::default()).unwrap();
        assert_eq!(rows.len(), 6);
        assert!(rows.iter().all(|r| r.price.seed == 3 && r.price.n_paths == 500));
        let mut buf = Vec::new();
        write_sweep_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("parameter,value,V0,I1,I2,I3,se,rule,sigma_S\n"));
        assert_eq!(text.lines().count(), 7);
    }
}
