//! Experiment configuration: JSON schema, `--set` overrides and grids.

use std::path::PathBuf;

use anyhow::{anyhow, bail, ensure, Context, Result};
use gabormc::channel::Tap;
use gabormc::montecarlo::{SyncMode, Tracking};
use gabormc::{DistortionSpec, Lattice, OfdmPulses, PowerDelayProfile};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Deserializer, Serialize};
use serde_json::{Map, Value};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Bessel,
    Ambiguity,
    OffsetBounds,
    PnBounds,
    Simulate,
    Ser,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    schema_version: u32,
    experiment: Experiment,
    #[serde(default)]
    output_dir: Option<PathBuf>,
    #[serde(default = "default_seed")]
    seed: u64,
    #[serde(default)]
    pulses: PulseConfig,
    #[serde(default)]
    params: Value,
}

fn default_seed() -> u64 {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PulseConfig {
    #[serde(default = "one")]
    pub tu_s: f64,
    #[serde(default)]
    pub tcp_s: Option<f64>,
    #[serde(default)]
    pub eps: Option<f64>,
    #[serde(default = "default_ns")]
    pub samples_per_tu: usize,
}

fn one() -> f64 {
    1.0
}
fn default_ns() -> usize {
    64
}

impl Default for PulseConfig {
    fn default() -> Self {
        Self { tu_s: 1.0, tcp_s: None, eps: None, samples_per_tu: 64 }
    }
}

impl PulseConfig {
    pub fn build(&self) -> Result<OfdmPulses> {
        let tcp = match (self.tcp_s, self.eps) {
            (Some(_), Some(_)) => bail!("pulses: give either tcp_s or eps, not both"),
            (Some(t), None) => t,
            (None, e) => return pulses_for_eps(self.tu_s, e.unwrap_or(0.8), self.samples_per_tu),
        };
        Ok(OfdmPulses::new(self.tu_s, tcp, self.samples_per_tu)?)
    }
}

/// cp-OFDM pulses with the prefix rounded to the nearest sample.
pub fn pulses_for_eps(tu: f64, eps: f64, ns: usize) -> Result<OfdmPulses> {
    ensure!(eps > 0.0 && eps <= 1.0, "eps must lie in (0, 1], got {eps}");
    let ncp = (ns as f64 * (1.0 / eps - 1.0)).round();
    Ok(OfdmPulses::new(tu, ncp * tu / ns as f64, ns)?)
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LatticeConfig {
    pub subcarriers: usize,
    pub symbols: usize,
}

impl LatticeConfig {
    pub fn build(&self) -> Result<Lattice> {
        Ok(Lattice::centered(self.subcarriers, self.symbols)?)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ChannelConfig {
    /// Two Rayleigh taps at 0 and `T_cp/2` with powers 0.8 and 0.2.
    #[default]
    Default,
    Identity,
    Profile(Vec<Tap>),
}

impl ChannelConfig {
    pub fn profile(&self, p: &OfdmPulses) -> Result<Option<PowerDelayProfile>> {
        Ok(match self {
            Self::Default => Some(PowerDelayProfile::default_for(p)),
            Self::Identity => None,
            Self::Profile(t) => Some(PowerDelayProfile::new(t.clone())?),
        })
    }
}

/// A finite, non-empty list of values: a JSON array, a single number, or
/// `{"start", "stop", "step"}` / `{"start", "stop", "num", "scale"}` / `{"values"}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Grid(pub Vec<f64>);

impl Grid {
    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

const GRID_KEYS: [&str; 6] = ["values", "start", "stop", "step", "num", "scale"];

impl<'de> Deserialize<'de> for Grid {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = Value::deserialize(d)?;
        parse_grid(&v).map(Grid).map_err(|e| serde::de::Error::custom(format!("{e:#}")))
    }
}

fn number(v: &Value, key: &str) -> Result<Option<f64>> {
    match v.get(key) {
        None => Ok(None),
        Some(x) => x.as_f64().map(Some).ok_or_else(|| anyhow!("grid key {key} must be a number, got {x}")),
    }
}

fn parse_grid(v: &Value) -> Result<Vec<f64>> {
    let values = match v {
        Value::Number(n) => vec![n.as_f64().unwrap()],
        Value::Array(a) => a
            .iter()
            .map(|x| x.as_f64().ok_or_else(|| anyhow!("grid entries must be numbers, got {x}")))
            .collect::<Result<_>>()?,
        Value::Object(o) => {
            let unknown: Vec<&str> = o.keys().map(String::as_str).filter(|k| !GRID_KEYS.contains(k)).collect();
            ensure!(unknown.is_empty(), "unknown grid keys: {}", unknown.join(", "));
            if let Some(vals) = o.get("values") {
                ensure!(o.len() == 1, "grid with values takes no other keys");
                return parse_grid(vals);
            }
            let start = number(v, "start")?.ok_or_else(|| anyhow!("partial grid: missing start"))?;
            let stop = number(v, "stop")?.ok_or_else(|| anyhow!("partial grid: missing stop"))?;
            match (number(v, "step")?, o.get("num")) {
                (Some(_), Some(_)) => bail!("grid takes step or num, not both"),
                (None, None) => bail!("partial grid: missing step or num"),
                (Some(step), None) => {
                    ensure!(!o.contains_key("scale"), "scale applies only to grids given by num");
                    ensure!(step > 0.0 && stop >= start, "grid step must be positive with stop ≥ start");
                    let n = (stop - start) / step;
                    ensure!((n - n.round()).abs() < 1e-9 * n.max(1.0), "grid step does not divide stop − start");
                    (0..=n.round() as usize).map(|i| start + i as f64 * step).collect()
                }
                (None, Some(num)) => {
                    let num = num.as_u64().ok_or_else(|| anyhow!("grid num must be a positive integer"))? as usize;
                    ensure!(num >= 1, "grid num must be at least 1");
                    let log = match o.get("scale").map(|s| s.as_str()) {
                        None | Some(Some("linear")) => false,
                        Some(Some("log")) => true,
                        Some(other) => bail!("grid scale must be \"linear\" or \"log\", got {other:?}"),
                    };
                    if log {
                        ensure!(start > 0.0 && stop > 0.0, "log grid needs positive start and stop");
                    }
                    let (a, b) = if log { (start.ln(), stop.ln()) } else { (start, stop) };
                    (0..num)
                        .map(|i| match i {
                            0 => start,
                            i if i + 1 == num => stop,
                            i => {
                                let x = a + (b - a) * i as f64 / (num - 1) as f64;
                                if log { x.exp() } else { x }
                            }
                        })
                        .collect()
                }
            }
        }
        other => bail!("grid must be a number, an array or an object, got {other}"),
    };
    ensure!(!values.is_empty(), "grid is empty");
    ensure!(values.iter().all(|x| x.is_finite()), "grid values must be finite");
    Ok(values)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BesselParams {
    pub eps: Grid,
    #[serde(default = "bessel_lattice")]
    pub lattice: LatticeConfig,
    #[serde(default)]
    pub check_doubled: bool,
}

fn bessel_lattice() -> LatticeConfig {
    LatticeConfig { subcarriers: 64, symbols: 64 }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AmbiguityParams {
    pub tau_s: Grid,
    pub nu_hz: Grid,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OffsetBoundsParams {
    pub nu_hat: Grid,
    pub snr_db: Grid,
    #[serde(default)]
    pub d_s: f64,
    #[serde(default)]
    pub channel: ChannelConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PnBoundsParams {
    pub rho: Grid,
    pub sigma2_over_eps: Grid,
    #[serde(default = "default_lags")]
    pub lags: Vec<u32>,
}

fn default_lags() -> Vec<u32> {
    vec![0, 1, 2]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulateParams {
    pub distortions: Vec<DistortionSpec>,
    pub snr_db: Grid,
    pub trials: usize,
    #[serde(default = "default_batches")]
    pub batches: usize,
    #[serde(default)]
    pub tracking: Tracking,
    #[serde(default)]
    pub channel: ChannelConfig,
    #[serde(default = "sim_lattice")]
    pub lattice: LatticeConfig,
    /// Family-wise level of the verify checks, Bonferroni over the cells.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SerParams {
    pub distortions: Vec<DistortionSpec>,
    pub rx_snr_db: Grid,
    pub trials: usize,
    #[serde(default)]
    pub tracking: Tracking,
    #[serde(default = "per_symbol")]
    pub sync: SyncMode,
    #[serde(default = "identity")]
    pub channel: ChannelConfig,
    #[serde(default = "sim_lattice")]
    pub lattice: LatticeConfig,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
}

fn default_batches() -> usize {
    20
}
fn default_alpha() -> f64 {
    0.05
}
fn per_symbol() -> SyncMode {
    SyncMode::PerSymbol
}
fn identity() -> ChannelConfig {
    ChannelConfig::Identity
}
fn sim_lattice() -> LatticeConfig {
    LatticeConfig { subcarriers: 33, symbols: 17 }
}

#[derive(Debug, Clone, Serialize)]
#[serde(untagged)]
pub enum Params {
    Bessel(BesselParams),
    Ambiguity(AmbiguityParams),
    OffsetBounds(OffsetBoundsParams),
    PnBounds(PnBoundsParams),
    Simulate(SimulateParams),
    Ser(SerParams),
}

/// A parsed and validated configuration.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub experiment: Experiment,
    pub output_dir: Option<PathBuf>,
    pub seed: u64,
    pub pulses: PulseConfig,
    pub params: Params,
}

fn strict<T: DeserializeOwned>(v: Value, prefix: &str) -> Result<T> {
    let mut unknown = Vec::new();
    let out: T = serde_ignored::deserialize(v, |path| unknown.push(format!("{prefix}{path}")))
        .map_err(|e| anyhow!("{prefix}{e}"))?;
    ensure!(unknown.is_empty(), "unknown keys: {}", unknown.join(", "));
    Ok(out)
}

impl ExperimentConfig {
    pub fn from_value(v: Value) -> Result<Self> {
        ensure!(v.is_object(), "config must be a JSON object");
        let h: Header = strict(v, "")?;
        ensure!(
            h.schema_version == SCHEMA_VERSION,
            "unsupported schema_version {} (expected {SCHEMA_VERSION})",
            h.schema_version
        );
        let p = h.params;
        let params = match h.experiment {
            Experiment::Bessel => Params::Bessel(strict(p, "params.")?),
            Experiment::Ambiguity => Params::Ambiguity(strict(p, "params.")?),
            Experiment::OffsetBounds => Params::OffsetBounds(strict(p, "params.")?),
            Experiment::PnBounds => Params::PnBounds(strict(p, "params.")?),
            Experiment::Simulate => Params::Simulate(strict(p, "params.")?),
            Experiment::Ser => Params::Ser(strict(p, "params.")?),
        };
        let cfg = Self {
            schema_version: h.schema_version,
            experiment: h.experiment,
            output_dir: h.output_dir,
            seed: h.seed,
            pulses: h.pulses,
            params,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path, overrides: &[String]) -> Result<(Self, Value)> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut v: Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        for o in overrides {
            apply_override(&mut v, o)?;
        }
        Ok((Self::from_value(v.clone())?, v))
    }

    fn validate(&self) -> Result<()> {
        self.pulses.build()?;
        match &self.params {
            Params::Simulate(s) => {
                ensure!(s.trials >= 1, "params.trials must be at least 1");
                ensure!(!s.distortions.is_empty(), "params.distortions is empty");
                ensure!(s.alpha > 0.0 && s.alpha < 1.0, "params.alpha must lie in (0, 1)");
                s.distortions.iter().try_for_each(|d| d.validate())?;
            }
            Params::Ser(s) => {
                ensure!(s.trials >= 1, "params.trials must be at least 1");
                ensure!(!s.distortions.is_empty(), "params.distortions is empty");
                ensure!(s.alpha > 0.0 && s.alpha < 1.0, "params.alpha must lie in (0, 1)");
                s.distortions.iter().try_for_each(|d| d.validate())?;
            }
            Params::PnBounds(p) => {
                ensure!(!p.lags.is_empty(), "params.lags is empty");
                ensure!(p.rho.values().iter().all(|r| *r > 0.0), "params.rho must be positive");
            }
            _ => {}
        }
        Ok(())
    }
}

/// Applies `a.b.c=value`; `value` is parsed as JSON, else taken as a string.
pub fn apply_override(root: &mut Value, spec: &str) -> Result<()> {
    let (path, raw) = spec.split_once('=').ok_or_else(|| anyhow!("override {spec:?} is not key=value"))?;
    ensure!(!path.is_empty(), "override {spec:?} has an empty key");
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut cur = root;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj: &mut Map<String, Value> = cur
            .as_object_mut()
            .ok_or_else(|| anyhow!("override {path}: {} is not an object", parts[..i].join(".")))?;
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        cur = obj.entry(part.to_string()).or_insert_with(|| Value::Object(Map::new()));
    }
    unreachable!()
}
