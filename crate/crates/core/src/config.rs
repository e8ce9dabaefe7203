//! JSON configuration: parsing, validation and derived quantities.
//!
//! ```json
//! {
//!   "rates":    { "theta_r": 0.2, "sigma_r": 0.03, "r0": 0.02, "R0": "IMPLIED" },
//!   "market":   { "S0": 10, "sigma_S": 0.2, "rho": -0.5, "alpha": 5.81e-11 },
//!   "loss":     { "intensity": { "a": 24.93, "b": 0.03, "p": 5.61, "phase": 7.07,
//!                                "q": 0.30, "period": 4.76 },
//!                 "severity":  { "kind": "burr", "c_b": 1.57, "k_b": 0.7, "zeta_b": 9.53e7 } },
//!   "contract": { "Z": 1, "T": 5, "Delta": 0.25, "c": 0.1, "zeta": 0.2, "D": 1.3e10,
//!                 "conversion": { "rule": "constant_price", "K": 8 } },
//!   "mc":       { "paths": 100000, "seed": 20240601, "substreams": 64 }
//! }
//! ```
//!
//! `market` takes either `alpha` or `delta` (then `alpha = delta / E[X]`).
//! `R0` may be a number or `"IMPLIED"` (the default). `D` may be `"inf"`.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::loss::{IntensityParams, LossModel, Severity};
use crate::rates::{implied_initial_libor, RateParams};
use crate::rng::McPlan;

const CANONICAL: &str = include_str!("../configs/reference.json");

/// Initial `Δ`-period LIBOR: a number, or implied by the bond curve.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum LiborInput {
    #[default]
    Implied,
    Value(f64),
}

impl Serialize for LiborInput {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            LiborInput::Implied => s.serialize_str("IMPLIED"),
            LiborInput::Value(v) => s.serialize_f64(*v),
        }
    }
}

impl<'de> Deserialize<'de> for LiborInput {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match NumberOrText::deserialize(d)? {
            NumberOrText::Number(v) => Ok(LiborInput::Value(v)),
            NumberOrText::Text(t) if t == "IMPLIED" => Ok(LiborInput::Implied),
            NumberOrText::Text(t) => Err(serde::de::Error::custom(format!(
                "expected a number or \"IMPLIED\", got \"{t}\""
            ))),
        }
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum NumberOrText {
    Number(f64),
    Text(String),
}

/// Trigger level; may be infinite (written as `"inf"`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Threshold(pub f64);

impl Serialize for Threshold {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for Threshold {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match NumberOrText::deserialize(d)? {
            NumberOrText::Number(v) => Ok(Threshold(v)),
            NumberOrText::Text(t) if matches!(t.as_str(), "inf" | "Infinity" | "infinity") => {
                Ok(Threshold(f64::INFINITY))
            }
            NumberOrText::Text(t) => Err(serde::de::Error::custom(format!(
                "expected a number or \"inf\", got \"{t}\""
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatesInput {
    pub theta_r: f64,
    pub sigma_r: f64,
    pub r0: f64,
    #[serde(rename = "R0", default)]
    pub libor0: LiborInput,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketInput {
    #[serde(rename = "S0")]
    pub s0: f64,
    #[serde(rename = "sigma_S")]
    pub sigma_s: f64,
    pub rho: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossInput {
    pub intensity: IntensityParams,
    pub severity: Severity,
}

/// How many shares the converted fraction buys: `ζZ / K_P`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum ConversionRule {
    /// `K_P = K`.
    ConstantPrice {
        #[serde(rename = "K")]
        k: f64,
    },
    /// `K_P = S_τ^ν`.
    PowerOfShare { nu: f64 },
}

impl ConversionRule {
    pub fn name(&self) -> &'static str {
        match self {
            ConversionRule::ConstantPrice { .. } => "constant_price",
            ConversionRule::PowerOfShare { .. } => "power_of_share",
        }
    }

    /// `K` or `ν`, whichever the rule carries.
    pub fn parameter(&self) -> f64 {
        match *self {
            ConversionRule::ConstantPrice { k } => k,
            ConversionRule::PowerOfShare { nu } => nu,
        }
    }
}

impl fmt::Display for ConversionRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConversionRule::ConstantPrice { k } => write!(f, "K={k}"),
            ConversionRule::PowerOfShare { nu } => write!(f, "nu={nu}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContractInput {
    #[serde(rename = "Z")]
    pub nominal: f64,
    #[serde(rename = "T")]
    pub term: f64,
    #[serde(rename = "Delta")]
    pub tenor: f64,
    pub c: f64,
    pub zeta: f64,
    #[serde(rename = "D")]
    pub threshold: Threshold,
    pub conversion: ConversionRule,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McInput {
    pub paths: usize,
    pub seed: u64,
    #[serde(default = "default_substreams")]
    pub substreams: usize,
}

fn default_substreams() -> usize {
    64
}

/// The configuration exactly as written in the file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub rates: RatesInput,
    pub market: MarketInput,
    pub loss: LossInput,
    pub contract: ContractInput,
    pub mc: McInput,
}

/// Deserializes `text`, reporting data errors against the dotted field path
/// (prefixed with `root` when non-empty).
pub(crate) fn parse_json<T: serde::de::DeserializeOwned>(text: &str, root: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        if inner.is_syntax() || inner.is_eof() {
            return Error::Json(inner);
        }
        let msg = inner.to_string();
        let join = |a: &str, b: &str| match (a.is_empty(), b.is_empty()) {
            (true, _) => b.to_string(),
            (_, true) => a.to_string(),
            _ => format!("{a}.{b}"),
        };
        let path = if path == "." { String::new() } else { path };
        // "missing field `x`" is reported at the parent object
        let field = msg
            .strip_prefix("missing field `")
            .and_then(|rest| rest.split('`').next())
            .map(|name| join(&join(root, &path), name))
            .unwrap_or_else(|| join(root, &path));
        let message = match msg.find(" at line ") {
            Some(i) => msg[..i].to_string(),
            None => msg,
        };
        Error::config(field, message)
    })
}

impl Config {
    /// Parses JSON; data errors name the offending field path.
    pub fn from_json(text: &str) -> Result<Config> {
        parse_json(text, "")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Validates the configuration and computes the derived quantities.
    pub fn resolve(self) -> Result<ResolvedConfig> {
        ResolvedConfig::new(self)
    }
}

/// A validated configuration with its derived quantities. Immutable.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedConfig {
    pub input: Config,
    pub rates: RateParams,
    pub r0: f64,
    /// Initial LIBOR actually used (given or implied).
    pub libor0: f64,
    pub alpha: f64,
    /// Loss compensator: `(1 − Lf(α))/α`, or `E[X]` when `α = 0`.
    pub kappa: f64,
    pub loss: LossModel,
    /// One line per resolved choice, for the record.
    pub provenance: Vec<String>,
}

fn require(ok: bool, field: &str, message: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::config(field, message()))
    }
}

impl ResolvedConfig {
    fn new(input: Config) -> Result<Self> {
        let mut log = Vec::new();
        let Config {
            rates,
            market,
            loss,
            contract,
            mc,
        } = input;

        let params = RateParams::new(rates.theta_r, rates.sigma_r)?;
        log.push(format!(
            "rates: theta_r={}, sigma_r={}, m_r={:e} (derived as sigma_r^2/(4 theta_r))",
            params.theta_r(),
            params.sigma_r(),
            params.m_r()
        ));
        require(rates.r0 >= 0.0 && rates.r0.is_finite(), "rates.r0", || {
            format!("must be >= 0, got {}", rates.r0)
        })?;

        require(
            contract.tenor > 0.0 && contract.tenor.is_finite(),
            "contract.Delta",
            || format!("must be > 0, got {}", contract.tenor),
        )?;
        require(contract.term > 0.0 && contract.term.is_finite(), "contract.T", || {
            format!("must be > 0, got {}", contract.term)
        })?;
        let periods = (contract.term / contract.tenor).round();
        require(
            periods >= 1.0 && (periods * contract.tenor - contract.term).abs() <= 1e-9 * contract.term,
            "contract.T",
            || {
                format!(
                    "must be an integer multiple of Delta={}, got {}",
                    contract.tenor, contract.term
                )
            },
        )?;
        require(
            contract.nominal > 0.0 && contract.nominal.is_finite(),
            "contract.Z",
            || format!("must be > 0, got {}", contract.nominal),
        )?;
        require(contract.c >= 0.0 && contract.c.is_finite(), "contract.c", || {
            format!("must be >= 0, got {}", contract.c)
        })?;
        require(contract.zeta > 0.0 && contract.zeta < 1.0, "contract.zeta", || {
            format!("must satisfy 0 < zeta < 1, got {}", contract.zeta)
        })?;
        require(contract.threshold.0 > 0.0, "contract.D", || {
            format!("must be > 0, got {}", contract.threshold.0)
        })?;
        match contract.conversion {
            ConversionRule::ConstantPrice { k } => require(k > 0.0 && k.is_finite(), "contract.conversion.K", || {
                format!("must be > 0, got {k}")
            })?,
            ConversionRule::PowerOfShare { nu } => require(nu > 0.0 && nu <= 1.0, "contract.conversion.nu", || {
                format!("must satisfy 0 < nu <= 1, got {nu}")
            })?,
        }

        let libor0 = match rates.libor0 {
            LiborInput::Value(v) => {
                require(v.is_finite(), "rates.R0", || format!("must be finite, got {v}"))?;
                log.push(format!("R0={v} taken from the configuration"));
                v
            }
            LiborInput::Implied => {
                let v = implied_initial_libor(&params, rates.r0, contract.tenor)?;
                log.push(format!(
                    "R0={v:.10} implied by the bond curve as (1/P(r0,Delta) - 1)/Delta"
                ));
                v
            }
        };

        require(market.s0 > 0.0 && market.s0.is_finite(), "market.S0", || {
            format!("must be > 0, got {}", market.s0)
        })?;
        require(
            market.sigma_s >= 0.0 && market.sigma_s.is_finite(),
            "market.sigma_S",
            || format!("must be >= 0, got {}", market.sigma_s),
        )?;
        require(market.rho.abs() <= 1.0, "market.rho", || {
            format!("must satisfy |rho| <= 1, got {}", market.rho)
        })?;
        log.push(format!("sigma_S={} (configuration)", market.sigma_s));

        loss.severity.validate()?;
        loss.intensity.validate(contract.term)?;
        let mean = loss.severity.mean();
        let alpha = match (market.alpha, market.delta) {
            (Some(_), Some(_)) => return Err(Error::config("market.alpha", "give either alpha or delta, not both")),
            (None, None) => return Err(Error::config("market.alpha", "missing (or give market.delta)")),
            (Some(a), None) => {
                require(a >= 0.0 && a.is_finite(), "market.alpha", || {
                    format!("must be >= 0, got {a}")
                })?;
                log.push(format!("alpha={a:e} taken from the configuration"));
                a
            }
            (None, Some(d)) => {
                require(d >= 0.0 && d.is_finite(), "market.delta", || {
                    format!("must be >= 0, got {d}")
                })?;
                let m =
                    mean.ok_or_else(|| Error::config("market.delta", "severity mean is infinite; give alpha instead"))?;
                let a = d / m;
                log.push(format!("alpha={a:e} derived as delta/E[X] with delta={d}, E[X]={m:e}"));
                a
            }
        };
        let kappa = if alpha > 0.0 {
            loss.severity.laplace_complement(alpha)? / alpha
        } else {
            mean.ok_or_else(|| Error::config("market.alpha", "alpha = 0 needs a finite severity mean"))?
        };
        log.push(format!("kappa={kappa:e}"));

        require(mc.paths >= 1, "mc.paths", || "must be >= 1".into())?;
        require(mc.substreams >= 1, "mc.substreams", || "must be >= 1".into())?;

        Ok(ResolvedConfig {
            input,
            rates: params,
            r0: rates.r0,
            libor0,
            alpha,
            kappa,
            loss: LossModel::new(loss.intensity, loss.severity),
            provenance: log,
        })
    }

    /// The bundled configuration with the resolved parameter set.
    pub fn canonical() -> ResolvedConfig {
        Config::from_json(CANONICAL)
            .and_then(Config::resolve)
            .expect("bundled configuration is valid")
    }

    pub fn canonical_json() -> &'static str {
        CANONICAL
    }

    pub fn contract(&self) -> &ContractInput {
        &self.input.contract
    }

    pub fn market(&self) -> &MarketInput {
        &self.input.market
    }

    pub fn threshold(&self) -> f64 {
        self.input.contract.threshold.0
    }

    /// Coupon dates `Δ, 2Δ, …, T`.
    pub fn coupon_dates(&self) -> Vec<f64> {
        let c = &self.input.contract;
        let n = (c.term / c.tenor).round() as usize;
        (1..=n)
            .map(|i| if i == n { c.term } else { i as f64 * c.tenor })
            .collect()
    }

    pub fn plan(&self) -> McPlan {
        McPlan::new(self.input.mc.paths, self.input.mc.seed).with_substreams(self.input.mc.substreams)
    }

    /// Applies `edit` to the input and resolves again.
    pub fn modified(&self, edit: impl FnOnce(&mut Config)) -> Result<ResolvedConfig> {
        let mut input = self.input;
        edit(&mut input);
        input.resolve()
    }

    pub fn to_json(&self) -> String {
        self.input.to_json()
    }

    /// First 16 hex digits of the SHA-256 of the compact JSON form.
    pub fn hash(&self) -> String {
        config_hash(&self.input)
    }

    /// Hash of the configuration with the threshold replaced by `d`.
    pub fn hash_at_threshold(&self, d: f64) -> String {
        let mut input = self.input;
        input.contract.threshold = Threshold(d);
        config_hash(&input)
    }
}

fn config_hash(input: &Config) -> String {
    let text = serde_json::to_string(input).expect("config serializes");
    let digest = Sha256::digest(text.as_bytes());
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

pub fn load_config(path: impl AsRef<Path>) -> Result<ResolvedConfig> {
    let text = std::fs::read_to_string(path.as_ref())?;
    Config::from_json(&text)?.resolve()
}
