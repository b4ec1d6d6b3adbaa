use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::noise::{pz_per_cycle, BitFlipPhenomModel, RepCodeNoiseModel, DEFAULT_MID_CYCLE_FRACTION};
use crate::sampler::Basis;

/// Full run description, read from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    pub code: CodeConfig,
    pub noise: NoiseConfig,
    #[serde(default)]
    pub bitflip: Option<BitFlipConfig>,
    #[serde(default)]
    pub decoder: DecoderConfig,
    #[serde(default)]
    pub fit: FitConfig,
    #[serde(default)]
    pub budget: Option<BudgetConfig>,
    #[serde(default)]
    pub lindblad: Option<LindbladConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CodeConfig {
    pub distances: Vec<usize>,
    pub alpha_sq: Vec<f64>,
    pub cycles: Vec<usize>,
    pub shots: u64,
    #[serde(default = "default_bases")]
    pub bases: Vec<Basis>,
}

fn default_bases() -> Vec<Basis> {
    vec![Basis::X]
}

/// A probability given once for all ancillas or as a per-ancilla table.
/// Tables cover the largest distance; smaller codes use the leading entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProbSpec {
    Scalar(f64),
    Table(Vec<f64>),
}

impl Default for ProbSpec {
    fn default() -> Self {
        ProbSpec::Scalar(0.0)
    }
}

impl ProbSpec {
    pub fn values(&self, n: usize) -> Result<Vec<f64>> {
        match self {
            ProbSpec::Scalar(p) => Ok(vec![*p; n]),
            ProbSpec::Table(t) if t.len() >= n => Ok(t[..n].to_vec()),
            ProbSpec::Table(t) => Err(Error::Config(format!("table of {} entries, need {n}", t.len()))),
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            ProbSpec::Scalar(p) => *p,
            ProbSpec::Table(t) => t.iter().sum::<f64>() / t.len().max(1) as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    /// Effective single-photon lifetime (s); p_Z = |α|² t_cycle / t1_eff.
    pub t1_eff: f64,
    pub t_cycle: f64,
    #[serde(default)]
    pub p_meas: ProbSpec,
    #[serde(default)]
    pub p_erase: ProbSpec,
    #[serde(default)]
    pub p_final: f64,
    #[serde(default = "default_mid")]
    pub mid_cycle_fraction: f64,
}

fn default_mid() -> f64 {
    DEFAULT_MID_CYCLE_FRACTION
}

/// Phenomenological bit-flip parameters, identical for every cat and gate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BitFlipConfig {
    pub idle_a: f64,
    pub idle_b: f64,
    pub cx_g: f64,
    pub cx_f: f64,
}

impl BitFlipConfig {
    pub fn model(&self, d: usize) -> BitFlipPhenomModel {
        BitFlipPhenomModel::uniform(d, self.idle_a, self.idle_b, self.cx_g, self.cx_f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecoderVariant {
    /// Erasure flags ignored; erased outcomes read as 1.
    #[serde(rename = "none")]
    NoErasure,
    /// Time edges at erased rounds set to p = 0.5.
    Naive,
    /// Detectors bypass erased rounds and the edges into them merge.
    Merged,
}

impl DecoderVariant {
    pub fn name(self) -> &'static str {
        match self {
            DecoderVariant::NoErasure => "none",
            DecoderVariant::Naive => "naive",
            DecoderVariant::Merged => "merged",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(DecoderVariant::NoErasure),
            "naive" => Ok(DecoderVariant::Naive),
            "merged" => Ok(DecoderVariant::Merged),
            _ => Err(Error::Config(format!("unknown decoder '{s}' (none, naive, merged)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightSource {
    /// Probabilities implied by the configured noise model.
    Model,
    /// Estimated from a separate calibration batch.
    Correlation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecoderConfig {
    #[serde(default = "default_variants")]
    pub variants: Vec<DecoderVariant>,
    #[serde(default = "default_weights")]
    pub weights: WeightSource,
    /// Calibration shots as a fraction of `code.shots`.
    #[serde(default = "default_calibration")]
    pub calibration_fraction: f64,
    #[serde(default)]
    pub merge_cap: Option<usize>,
}

fn default_variants() -> Vec<DecoderVariant> {
    vec![DecoderVariant::Merged]
}
fn default_weights() -> WeightSource {
    WeightSource::Correlation
}
fn default_calibration() -> f64 {
    0.2
}

impl Default for DecoderConfig {
    fn default() -> Self {
        DecoderConfig {
            variants: default_variants(),
            weights: default_weights(),
            calibration_fraction: default_calibration(),
            merge_cap: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    #[serde(default)]
    pub x_offset: bool,
    #[serde(default = "default_min_alpha")]
    pub min_alpha_sq: f64,
}

fn default_min_alpha() -> f64 {
    1.5
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig { x_offset: false, min_alpha_sq: default_min_alpha() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetConfig {
    pub distance: usize,
    pub alpha_sq: f64,
    pub cycles: Vec<usize>,
    pub shots: u64,
    #[serde(default = "default_step")]
    pub step_fraction: f64,
    #[serde(default = "default_noise_factor")]
    pub noise_factor: f64,
}

fn default_step() -> f64 {
    0.25
}
fn default_noise_factor() -> f64 {
    5.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    /// χ_ge/χ_gf values for the CX² model.
    ChiRatio,
    /// Buffer detuning Δ_b (rad/s) for the dissipative map.
    BufferDetuning,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CxSweepConfig {
    pub chi_gf: f64,
    pub gate_time: f64,
    pub ancilla_decay_fe: f64,
    pub ancilla_decay_eg: f64,
    pub prep_error_e: f64,
    pub alpha_sq: f64,
    pub kappa2: f64,
    pub dissipation_time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BufferSweepConfig {
    pub g2: f64,
    pub kappa_b: f64,
    pub alpha_sq: f64,
    pub beta_re: f64,
    pub beta_im: f64,
    pub t_relax: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LindbladConfig {
    pub kind: SweepKind,
    pub values: Vec<f64>,
    pub dim: usize,
    #[serde(default)]
    pub cx: Option<CxSweepConfig>,
    #[serde(default)]
    pub buffer: Option<BufferSweepConfig>,
}

fn cfg_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(cfg_err(format!("{name} must be a positive number, got {v}")))
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let c: ExperimentConfig = toml::from_str(text).map_err(|e| cfg_err(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| cfg_err(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let c = &self.code;
        if c.distances.is_empty() || c.alpha_sq.is_empty() || c.cycles.is_empty() || c.bases.is_empty() {
            return Err(cfg_err("code.distances, alpha_sq, cycles and bases must be non-empty"));
        }
        if c.distances.iter().any(|&d| !(2..=63).contains(&d)) {
            return Err(cfg_err("distances must lie in [2, 63]"));
        }
        for &a in &c.alpha_sq {
            positive("alpha_sq", a)?;
        }
        if c.cycles.iter().any(|&t| t == 0) {
            return Err(cfg_err("cycle counts must be >= 1"));
        }
        if c.shots == 0 {
            return Err(cfg_err("shots must be >= 1"));
        }
        positive("noise.t1_eff", self.noise.t1_eff)?;
        positive("noise.t_cycle", self.noise.t_cycle)?;
        if !(0.0..=1.0).contains(&self.noise.mid_cycle_fraction) {
            return Err(cfg_err("mid_cycle_fraction must lie in [0, 1]"));
        }
        if c.bases.contains(&Basis::Z) && self.bitflip.is_none() {
            return Err(cfg_err("Z-basis runs need a [bitflip] section"));
        }
        let dec = &self.decoder;
        if dec.variants.is_empty() {
            return Err(cfg_err("decoder.variants must be non-empty"));
        }
        if !(dec.calibration_fraction > 0.0 && dec.calibration_fraction.is_finite()) && dec.weights == WeightSource::Correlation {
            return Err(cfg_err("correlation weights need calibration_fraction > 0"));
        }
        for &d in &c.distances {
            for &a in &c.alpha_sq {
                self.noise_model(d, a)?;
            }
        }
        if let Some(b) = &self.budget {
            if !(2..=63).contains(&b.distance) || b.cycles.len() < 3 || b.shots == 0 {
                return Err(cfg_err("budget needs a distance in [2, 63], >= 3 cycle counts and shots > 0"));
            }
            positive("budget.alpha_sq", b.alpha_sq)?;
            if self.bitflip.is_none() {
                return Err(cfg_err("budget needs a [bitflip] section"));
            }
            self.noise_model(b.distance, b.alpha_sq)?;
        }
        if let Some(l) = &self.lindblad {
            if l.values.is_empty() || l.dim < 2 {
                return Err(cfg_err("lindblad sweep needs values and dim >= 2"));
            }
            match l.kind {
                SweepKind::ChiRatio if l.cx.is_none() => return Err(cfg_err("chi_ratio sweep needs [lindblad.cx]")),
                SweepKind::BufferDetuning if l.buffer.is_none() => {
                    return Err(cfg_err("buffer_detuning sweep needs [lindblad.buffer]"))
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Phase-flip noise for distance `d` at mean photon number `alpha_sq`,
    /// with the bit-flip probabilities filled in when configured.
    pub fn noise_model(&self, d: usize, alpha_sq: f64) -> Result<RepCodeNoiseModel> {
        let n = &self.noise;
        let p_z = pz_per_cycle(1.0 / n.t1_eff, alpha_sq, n.t_cycle).map_err(|e| cfg_err(e.to_string()))?;
        let p_x = match &self.bitflip {
            Some(b) => b.model(d).per_qubit(alpha_sq),
            None => vec![0.0; d],
        };
        let m = RepCodeNoiseModel {
            d,
            p_z: vec![p_z; d],
            mid_cycle_fraction: n.mid_cycle_fraction,
            p_meas: n.p_meas.values(d - 1)?,
            p_erase: n.p_erase.values(d - 1)?,
            t_cycle: n.t_cycle,
            p_final: vec![n.p_final; d],
            p_x,
        };
        m.validate().map_err(|e| cfg_err(e.to_string()))?;
        Ok(m)
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        let digest = Sha256::digest(&json);
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = r#"
seed = 7
[code]
distances = [3]
alpha_sq = [1.0, 2.0]
cycles = [1, 2]
shots = 100
[noise]
t1_eff = 60e-6
t_cycle = 2.8e-6
p_meas = [0.01, 0.02, 0.03, 0.04]
p_erase = 0.05
"#;

    #[test]
    fn parses_and_derives_models() {
        let c = ExperimentConfig::from_toml(SMALL).unwrap();
        assert_eq!(c.decoder.variants, vec![DecoderVariant::Merged]);
        let m = c.noise_model(3, 2.0).unwrap();
        assert_eq!(m.p_meas, vec![0.01, 0.02]);
        assert!((m.p_z[0] - 2.0 * 2.8 / 60.0).abs() < 1e-12);
        assert_eq!(c.hash().len(), 16);
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(ExperimentConfig::from_toml("seed = 1").unwrap_err().is_config());
        let bad = SMALL.replace("shots = 100", "shots = 100\nbogus = 1");
        assert!(ExperimentConfig::from_toml(&bad).is_err());
        let bad = SMALL.replace("p_erase = 0.05", "p_erase = 0.05\n[decoder]\nvariants = [\"fancy\"]");
        assert!(ExperimentConfig::from_toml(&bad).is_err());
        let bad = SMALL.replace("distances = [3]", "distances = [9]");
        assert!(ExperimentConfig::from_toml(&bad).is_err());
        let bad = SMALL.replace("[1, 2]\nshots", "[1, 2]\nbases = [\"z\"]\nshots");
        assert!(ExperimentConfig::from_toml(&bad).is_err());
    }
}
