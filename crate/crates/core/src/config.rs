//! Run configuration: a flat JSON object whose keys carry their units.
//!
//! ```json
//! {
//!   "mode": "coarse",
//!   "capacity_bits": 16,
//!   "u0_v": 1.0,
//!   "damping_exponent": 1,
//!   "k1_per_s": 1.0,
//!   "seed": 7
//! }
//! ```
//!
//! Missing keys take their defaults, unknown keys are rejected. The damping
//! constant is `k1_per_s` for linear damping and `k2_per_m` for quadratic
//! damping; only the one matching `damping_exponent` may be given, and it
//! defaults to 1 when absent.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::machine::{MachineConfig, Mode, DEFAULT_CAPACITY_BITS, MEMORY_WORDS};
use crate::physics::{
    Damping, PhysicsError, PhysicsParams, BEC_RADIUS_M, DEFAULT_SEPARATION_THRESHOLD, DEFAULT_TUBE_DIAMETER_M,
    RESONANT_WAVELENGTH_M, TEMPERATURE_K,
};

/// Environment variable that overrides the configured seed.
pub const SEED_ENV: &str = "REDUCTION_MACHINE_SEED";

pub const DEFAULT_MAX_CYCLES: u64 = 1_000_000;
pub const DEFAULT_MEMBERS: u64 = 1000;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Physics(#[from] PhysicsError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    pub capacity_bits: u32,
    pub memory_words: usize,
    pub e_star_c: f64,
    pub m_star_kg: f64,
    pub u0_v: f64,
    pub l_r_m: f64,
    pub damping_exponent: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k1_per_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k2_per_m: Option<f64>,
    pub tube_diameter_m: f64,
    pub resonant_wavelength_m: f64,
    pub bec_radius_m: f64,
    pub temperature_k: f64,
    pub sigma_q_m: f64,
    pub eta: f64,
    pub t_cycle_s: f64,
    pub seed: u64,
    pub n_members: u64,
    pub max_cycles: u64,
    /// Half-width of the uniform per-member spread of the terminal velocity,
    /// as a fraction of it. `0` gives every member the same pointer.
    pub lambda_jitter: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace_path: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report_path: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub csv_path: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let p = PhysicsParams::default();
        Self {
            mode: Mode::Fine,
            capacity_bits: DEFAULT_CAPACITY_BITS,
            memory_words: MEMORY_WORDS,
            e_star_c: p.e_star,
            m_star_kg: p.m_star,
            u0_v: p.u0,
            l_r_m: p.l_r,
            damping_exponent: 1,
            k1_per_s: None,
            k2_per_m: None,
            tube_diameter_m: DEFAULT_TUBE_DIAMETER_M,
            resonant_wavelength_m: RESONANT_WAVELENGTH_M,
            bec_radius_m: BEC_RADIUS_M,
            temperature_k: TEMPERATURE_K,
            sigma_q_m: 1.0,
            eta: DEFAULT_SEPARATION_THRESHOLD,
            t_cycle_s: 1.0,
            seed: 0,
            n_members: DEFAULT_MEMBERS,
            max_cycles: DEFAULT_MAX_CYCLES,
            lambda_jitter: 0.0,
            trace_path: None,
            report_path: None,
            csv_path: None,
        }
    }
}

fn read(path: &Path) -> Result<String, ConfigError> {
    fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })
}

impl RunConfig {
    /// Parses and validates.
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let config = Self::parse(text)?;
        config.validate()?;
        Ok(config)
    }

    /// Parses without validating.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::from_json(&read(path)?)
    }

    /// Loads without validating.
    pub fn load_unvalidated(path: &Path) -> Result<Self, ConfigError> {
        Self::parse(&read(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    fn damping(&self) -> Result<(Damping, f64), ConfigError> {
        let damping = Damping::try_from(self.damping_exponent)?;
        let (wanted, other, wanted_key, other_key) = match damping {
            Damping::Linear => (self.k1_per_s, self.k2_per_m, "k1_per_s", "k2_per_m"),
            Damping::Quadratic => (self.k2_per_m, self.k1_per_s, "k2_per_m", "k1_per_s"),
        };
        if other.is_some() {
            return Err(ConfigError::Invalid(format!(
                "{other_key} given with damping_exponent {}; use {wanted_key}",
                self.damping_exponent
            )));
        }
        Ok((damping, wanted.unwrap_or(PhysicsParams::default().k_d)))
    }

    /// Physics parameters without validation.
    pub fn physics(&self) -> Result<PhysicsParams, ConfigError> {
        let (damping, k_d) = self.damping()?;
        Ok(PhysicsParams {
            e_star: self.e_star_c,
            m_star: self.m_star_kg,
            u0: self.u0_v,
            l_r: self.l_r_m,
            damping,
            k_d,
            tube_diameter: self.tube_diameter_m,
            resonant_wavelength: self.resonant_wavelength_m,
            bec_radius: self.bec_radius_m,
            temperature: self.temperature_k,
        })
    }

    pub fn machine_config(&self) -> Result<MachineConfig, ConfigError> {
        Ok(MachineConfig {
            mode: self.mode,
            capacity_bits: self.capacity_bits,
            physics: self.physics()?,
            sigma_q: self.sigma_q_m,
            eta: self.eta,
            t_cycle: self.t_cycle_s,
            lambda_scale: 1.0,
            memory_words: self.memory_words,
        })
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let machine = self.machine_config()?;
        machine.physics.validate()?;
        machine.timing()?;
        if !(self.lambda_jitter.is_finite() && (0.0..1.0).contains(&self.lambda_jitter)) {
            return Err(ConfigError::Invalid(format!(
                "lambda_jitter = {} must lie in [0, 1)",
                self.lambda_jitter
            )));
        }
        if self.capacity_bits > 63 {
            return Err(ConfigError::Invalid(format!(
                "capacity_bits = {} exceeds 63",
                self.capacity_bits
            )));
        }
        if self.memory_words == 0 || self.memory_words > MEMORY_WORDS {
            return Err(ConfigError::Invalid(format!(
                "memory_words = {} must lie in 1..={MEMORY_WORDS}",
                self.memory_words
            )));
        }
        if self.n_members == 0 {
            return Err(ConfigError::Invalid("n_members must be at least 1".into()));
        }
        Ok(())
    }

    /// Seed in effect: `flag`, else the environment value, else the config.
    pub fn resolve_seed(&self, flag: Option<u64>, env: Option<&str>) -> Result<u64, ConfigError> {
        if let Some(seed) = flag {
            return Ok(seed);
        }
        match env {
            Some(text) => text
                .trim()
                .parse()
                .map_err(|_| ConfigError::Invalid(format!("{SEED_ENV} = {text:?} is not an unsigned integer"))),
            None => Ok(self.seed),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_is_default() {
        assert_eq!(RunConfig::from_json("{}").unwrap(), RunConfig::default());
    }

    #[test]
    fn round_trip() {
        let c = RunConfig {
            mode: Mode::Coarse,
            capacity_bits: 3,
            u0_v: 0.1 + 0.2,
            damping_exponent: 2,
            k1_per_s: None,
            k2_per_m: Some(1.0 / 3.0),
            seed: u64::MAX,
            lambda_jitter: 0.05,
            report_path: Some("out/report.json".into()),
            ..RunConfig::default()
        };
        let again = RunConfig::from_json(&c.to_json()).unwrap();
        assert_eq!(again, c);
        assert_eq!(again.to_json(), c.to_json());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(
            RunConfig::from_json(r#"{"l_r": 1.0}"#),
            Err(ConfigError::Parse(_))
        ));
    }

    #[test]
    fn damping_key_must_match_exponent() {
        assert!(matches!(
            RunConfig::from_json(r#"{"damping_exponent": 2, "k1_per_s": 1.0}"#),
            Err(ConfigError::Invalid(_))
        ));
        let c = RunConfig::from_json(r#"{"damping_exponent": 1}"#).unwrap();
        assert_eq!(c.physics().unwrap().k_d, 1.0);
        let c = RunConfig::from_json(r#"{"damping_exponent": 2, "k2_per_m": 4.0}"#).unwrap();
        let p = c.physics().unwrap();
        assert_eq!((p.damping, p.k_d), (Damping::Quadratic, 4.0));
        assert!(matches!(
            RunConfig::from_json(r#"{"damping_exponent": 3}"#),
            Err(ConfigError::Physics(PhysicsError::InvalidDampingExponent(3)))
        ));
    }

    #[test]
    fn physics_is_validated() {
        assert!(matches!(
            RunConfig::from_json(r#"{"m_star_kg": 0.0}"#),
            Err(ConfigError::Physics(PhysicsError::InvalidParameter {
                name: "m_star",
                ..
            }))
        ));
        assert!(matches!(
            RunConfig::from_json(r#"{"tube_diameter_m": 5e-4}"#),
            Err(ConfigError::Physics(PhysicsError::TubeTooWide { .. }))
        ));
        assert!(matches!(
            RunConfig::from_json(r#"{"lambda_jitter": 1.0}"#),
            Err(ConfigError::Invalid(_))
        ));
        assert!(matches!(
            RunConfig::from_json(r#"{"n_members": 0}"#),
            Err(ConfigError::Invalid(_))
        ));
    }

    #[test]
    fn seed_precedence() {
        let c = RunConfig {
            seed: 1,
            ..RunConfig::default()
        };
        assert_eq!(c.resolve_seed(Some(3), Some("2")).unwrap(), 3);
        assert_eq!(c.resolve_seed(None, Some("2")).unwrap(), 2);
        assert_eq!(c.resolve_seed(None, None).unwrap(), 1);
        assert!(c.resolve_seed(None, Some("x")).is_err());
    }
}
