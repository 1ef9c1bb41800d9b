//! JSON run configuration.
//!
//! Only the layout shape and the two polarization targets are required; every
//! other key has a default. Overrides use dotted keys (`pso.seed=7`) and are
//! applied to the fully defaulted document, so any key that appears in the
//! config echo can be overridden and nothing else can.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::atoms::{AtomBounds, CellSpec, SubstrateInfo, SyntheticAtomParams};
use crate::objective::{DesignTargets, PolTarget};
use crate::pso::SwarmConfig;
use crate::surrogate::{KrigingOptions, DEFAULT_RESOLUTION};
use crate::wavegeom::{wavelength, Direction, PlaneWaveSpec, Polarization};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Read { path: String, message: String },
    #[error("config field `{field}`: {message}")]
    Schema { field: String, message: String },
    #[error("config field `{field}`: {message}")]
    Invalid { field: String, message: String },
    #[error("unknown config key `{key}`; valid keys are: {}", valid.join(", "))]
    UnknownKey { key: String, valid: Vec<String> },
    #[error("malformed override `{0}`, expected key=value")]
    Override(String),
}

fn invalid(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { field: field.into(), message: message.into() }
}

fn one() -> f64 {
    1.0
}

fn unit_amplitude() -> Complex64 {
    Complex64::new(1.0, 0.0)
}

/// Illumination and reflection target of one polarization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolConfig {
    pub incidence: Direction,
    pub target: Direction,
    #[serde(default = "one")]
    pub weight: f64,
    /// Complex incident amplitude as `[re, im]`.
    #[serde(default = "unit_amplitude")]
    pub amplitude: Complex64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TwinSource {
    /// The closed-form stand-in atom model.
    Synthetic,
    /// A reflection table in CSV form.
    Table(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TwinConfig {
    pub source: TwinSource,
    /// Training samples per incidence angle (synthetic source only).
    pub samples: usize,
    pub seed: u64,
    /// Synthetic model parameters; `null` picks the defaults for the cell pitch.
    pub synthetic: Option<SyntheticAtomParams>,
    pub kriging: KrigingOptions,
    /// Nodes per descriptor axis of the lookup tables.
    pub lut_resolution: usize,
}

impl Default for TwinConfig {
    fn default() -> Self {
        Self {
            source: TwinSource::Synthetic,
            samples: 400,
            seed: 1,
            synthetic: None,
            kriging: KrigingOptions::default(),
            lut_resolution: DEFAULT_RESOLUTION,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluationConfig {
    /// Samples of the φ = 0 cut over `u ∈ [-1, 1]`.
    pub cut_samples: usize,
    /// Nodes per axis of the visible-range grid.
    pub grid_samples: usize,
    /// Layout evaluated by the `evaluate` command.
    pub layout: Option<PathBuf>,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self { cut_samples: 721, grid_samples: 181, layout: None }
    }
}

fn default_frequency() -> f64 {
    28e9
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignConfig {
    #[serde(alias = "P")]
    pub p: usize,
    #[serde(alias = "Q")]
    pub q: usize,
    pub te: PolConfig,
    pub tm: PolConfig,
    #[serde(default = "default_frequency")]
    pub frequency: f64,
    /// Cell pitch in m; `null` means `0.4 λ0`.
    #[serde(default)]
    pub pitch: Option<f64>,
    /// Descriptor box in m; `null` means `[0.05, 0.95]` of the pitch.
    #[serde(default)]
    pub atom_bounds: Option<AtomBounds>,
    #[serde(default)]
    pub substrate: SubstrateInfo,
    #[serde(default)]
    pub twin: TwinConfig,
    #[serde(default)]
    pub pso: SwarmConfig,
    /// Seeds one particle with the phase-conjugation compromise layout.
    #[serde(default)]
    pub warm_start: bool,
    #[serde(default)]
    pub evaluation: EvaluationConfig,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
}

impl DesignConfig {
    /// Configuration with every optional key at its default.
    pub fn new(p: usize, q: usize, te: PolConfig, tm: PolConfig) -> Self {
        let v = serde_json::json!({ "p": p, "q": q, "te": te, "tm": tm });
        serde_json::from_value(v).expect("minimal config is complete")
    }

    pub fn pitch(&self) -> f64 {
        self.pitch.unwrap_or_else(|| 0.4 * wavelength(self.frequency))
    }

    pub fn cell(&self) -> CellSpec {
        let pitch = self.pitch();
        CellSpec { pitch_x: pitch, pitch_y: pitch, frequency: self.frequency, substrate: self.substrate }
    }

    pub fn bounds(&self) -> AtomBounds {
        self.atom_bounds.unwrap_or_else(|| AtomBounds::for_pitch(self.pitch()))
    }

    pub fn pol(&self, pol: Polarization) -> &PolConfig {
        match pol {
            Polarization::Te => &self.te,
            Polarization::Tm => &self.tm,
        }
    }

    pub fn targets(&self) -> DesignTargets {
        let mk = |pol: Polarization| {
            let c = self.pol(pol);
            PolTarget {
                direction: c.target,
                weight: c.weight,
                illumination: PlaneWaveSpec::new(pol, c.incidence, c.amplitude, self.frequency),
            }
        };
        DesignTargets { te: mk(Polarization::Te), tm: mk(Polarization::Tm) }
    }

    /// Distinct incidence angles, in TE, TM order.
    pub fn incidence_angles(&self) -> Vec<f64> {
        let mut out = vec![self.te.incidence.theta_deg];
        if self.tm.incidence.theta_deg != self.te.incidence.theta_deg {
            out.push(self.tm.incidence.theta_deg);
        }
        out
    }

    pub fn synthetic_params(&self) -> SyntheticAtomParams {
        self.twin.synthetic.unwrap_or_else(|| SyntheticAtomParams::for_pitch(self.pitch()))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.p == 0 {
            return Err(invalid("p", "must be at least 1"));
        }
        if self.q == 0 {
            return Err(invalid("q", "must be at least 1"));
        }
        if !(self.frequency > 0.0 && self.frequency.is_finite()) {
            return Err(invalid("frequency", format!("must be positive, got {}", self.frequency)));
        }
        if let Some(p) = self.pitch {
            if !(p > 0.0 && p.is_finite()) {
                return Err(invalid("pitch", format!("must be positive, got {p}")));
            }
        }
        let b = self.bounds();
        if AtomBounds::new(b.lo, b.hi).is_err() || b.hi > self.pitch() {
            return Err(invalid("atom_bounds", format!("need 0 < lo < hi <= pitch, got [{}, {}]", b.lo, b.hi)));
        }
        for pol in Polarization::BOTH {
            let c = self.pol(pol);
            let key = pol.label().to_lowercase();
            if !(c.weight >= 0.0 && c.weight.is_finite()) {
                return Err(invalid(&format!("{key}.weight"), format!("must be non-negative, got {}", c.weight)));
            }
            if !(c.amplitude.re.is_finite() && c.amplitude.im.is_finite()) {
                return Err(invalid(&format!("{key}.amplitude"), "must be finite"));
            }
            for (name, d) in [("incidence", c.incidence), ("target", c.target)] {
                if !(d.theta_deg.abs() < 90.0 && d.phi_deg.is_finite()) {
                    return Err(invalid(
                        &format!("{key}.{name}.theta_deg"),
                        format!("must lie in (-90, 90), got {}", d.theta_deg),
                    ));
                }
            }
        }
        if self.te.weight == 0.0 && self.tm.weight == 0.0 {
            return Err(invalid("te.weight", "at least one polarization weight must be positive"));
        }
        if let Some(s) = self.twin.synthetic {
            s.validate().map_err(|m| invalid("twin.synthetic", m))?;
        }
        if matches!(self.twin.source, TwinSource::Synthetic) && self.twin.samples < 8 {
            return Err(invalid("twin.samples", format!("need at least 8, got {}", self.twin.samples)));
        }
        if self.twin.lut_resolution < 16 {
            return Err(invalid("twin.lut_resolution", format!("need at least 16, got {}", self.twin.lut_resolution)));
        }
        let k = &self.twin.kriging;
        if !(k.nugget >= 0.0 && k.log10_theta_min < k.log10_theta_max && k.grid_points >= 2) {
            return Err(invalid("twin.kriging", "need nugget >= 0, log10_theta_min < log10_theta_max, grid_points >= 2"));
        }
        self.pso.validate().map_err(|m| invalid("pso", m))?;
        if self.evaluation.cut_samples < 3 {
            return Err(invalid("evaluation.cut_samples", "need at least 3"));
        }
        if self.evaluation.grid_samples < 3 {
            return Err(invalid("evaluation.grid_samples", "need at least 3"));
        }
        Ok(())
    }

    /// Applies a master seed to every randomized stage.
    pub fn set_master_seed(&mut self, seed: u64) {
        self.twin.seed = seed;
        self.pso.seed = seed;
    }
}

/// Parses a config document, reporting the path of the offending field.
pub fn from_value(value: Value) -> Result<DesignConfig, ConfigError> {
    let cfg: DesignConfig = serde_path_to_error::deserialize(value).map_err(|e| ConfigError::Schema {
        field: e.path().to_string(),
        message: e.inner().to_string(),
    })?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse_config(path: &Path) -> Result<DesignConfig, ConfigError> {
    load_with_overrides(path, &[])
}

pub fn load_with_overrides(path: &Path, overrides: &[String]) -> Result<DesignConfig, ConfigError> {
    let read_err = |message: String| ConfigError::Read { path: path.display().to_string(), message };
    let text = std::fs::read_to_string(path).map_err(|e| read_err(e.to_string()))?;
    let value: Value = serde_json::from_str(&text).map_err(|e| read_err(e.to_string()))?;
    let cfg = from_value(value)?;
    apply_overrides(&cfg, overrides)
}

/// Dotted paths of every leaf in a document.
pub fn leaf_keys(value: &Value) -> Vec<String> {
    fn walk(v: &Value, prefix: &str, out: &mut BTreeSet<String>) {
        match v {
            Value::Object(map) if !map.is_empty() => {
                for (k, child) in map {
                    let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                    walk(child, &key, out);
                }
            }
            _ => {
                out.insert(prefix.to_string());
            }
        }
    }
    let mut out = BTreeSet::new();
    walk(value, "", &mut out);
    out.into_iter().collect()
}

/// Applies `key=value` overrides. Values are read as JSON when they parse and as
/// plain strings otherwise.
pub fn apply_overrides(cfg: &DesignConfig, overrides: &[String]) -> Result<DesignConfig, ConfigError> {
    if overrides.is_empty() {
        return Ok(cfg.clone());
    }
    let mut doc = serde_json::to_value(cfg).expect("config serializes");
    let valid = leaf_keys(&doc);
    for o in overrides {
        let (key, raw) = o.split_once('=').ok_or_else(|| ConfigError::Override(o.clone()))?;
        let key = key.trim();
        if !valid.iter().any(|k| k == key) {
            return Err(ConfigError::UnknownKey { key: key.to_string(), valid });
        }
        let new: Value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        let mut slot = &mut doc;
        for part in key.split('.') {
            slot = slot.get_mut(part).expect("key was listed as valid");
        }
        *slot = new;
    }
    from_value(doc)
}
