//! Experiment files: one TOML document with `[model]`, `[run]` and `[output]` tables.

use std::path::{Path, PathBuf};

use fmm_lab::fmm_mc::EstimatorKind;
use fmm_lab::localization::TwoBoxConstants;
use fmm_lab::{DensityKind, DisorderDensity, SingleSitePotential};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub run: RunConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub u: Vec<f64>,
    pub density: DensityConfig,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig { u: vec![1.0], density: DensityConfig::default(), seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensityConfig {
    pub kind: DensityKind,
    #[serde(alias = "R")]
    pub radius: f64,
}

impl Default for DensityConfig {
    fn default() -> Self {
        DensityConfig { kind: DensityKind::Uniform, radius: 10.0 }
    }
}

/// Per-subcommand knobs. Fields a subcommand does not read are ignored by it.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub energy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    /// `[re, im]` pairs.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub energies: Option<Vec<[f64; 2]>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub box_halfwidth: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub half_widths: Option<Vec<i64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub distances: Option<Vec<i64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sites: Option<Vec<i64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_samples: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_instances: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub estimator: Option<EstimatorKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub widths: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub centers: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub calibration_energies: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub calibration_epsilons: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub calibration_samples: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_prime: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub interval: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mass: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid_step: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub separation: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub constants: Option<TwoBoxConstants>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub j: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c_w: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m_max: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub check_bound: Option<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub formats: Vec<Format>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: PathBuf::from("fmm-lab-out"), formats: vec![Format::Csv, Format::Json] }
    }
}

impl OutputConfig {
    pub fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let de = toml::Deserializer::new(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            CliError::invalid(if path == "." { "<document>".into() } else { path }, e.inner().message())
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| CliError::encode("config", e))
    }

    pub fn potential(&self) -> Result<SingleSitePotential> {
        SingleSitePotential::new(&self.model.u).map_err(|e| CliError::invalid("model.u", e))
    }

    pub fn density(&self) -> Result<DisorderDensity> {
        DisorderDensity::new(self.model.density.kind, self.model.density.radius)
            .map_err(|e| CliError::invalid("model.density.radius", e))
    }

    /// SHA-256 over the command, model and run tables. Output location and
    /// thread count do not change results and are left out.
    pub fn hash(&self, command: &str) -> Result<String> {
        #[derive(Serialize)]
        struct Keyed<'a> {
            command: &'a str,
            model: &'a ModelConfig,
            run: &'a RunConfig,
        }
        let bytes = serde_json::to_vec(&Keyed { command, model: &self.model, run: &self.run })
            .map_err(|e| CliError::encode("config hash input", e))?;
        Ok(format!("{:x}", Sha256::digest(&bytes)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let c = ExperimentConfig::parse("").unwrap();
        assert_eq!(c, ExperimentConfig::default());
        assert_eq!(c.model.u, vec![1.0]);
    }

    #[test]
    fn unknown_field_reports_path() {
        let err = ExperimentConfig::parse("[run]\nsamples = 3\n").unwrap_err();
        match err {
            CliError::ConfigInvalid { path, message } => {
                assert_eq!(path, "run.samples");
                assert!(message.contains("samples"), "{message}");
            }
            other => panic!("{other:?}"),
        }
        let err = ExperimentConfig::parse("[model.density]\nkind = \"gaussian\"\nradius = 1.0\n").unwrap_err();
        assert!(matches!(err, CliError::ConfigInvalid { ref path, .. } if path == "model.density.kind"), "{err:?}");
    }

    #[test]
    fn radius_alias_and_roundtrip() {
        let c = ExperimentConfig::parse(
            "[model]\nu = [1.0, -2.0]\nseed = 4\ndensity = { kind = \"bump\", R = 3.0 }\n[run]\ns = 0.25\nenergies = [[0.0, 0.1]]\n",
        )
        .unwrap();
        assert_eq!(c.model.density.radius, 3.0);
        let again = ExperimentConfig::parse(&c.to_toml().unwrap()).unwrap();
        assert_eq!(c, again);
    }

    #[test]
    fn hash_ignores_output_but_not_run() {
        let mut a = ExperimentConfig::default();
        let h = a.hash("fm-decay").unwrap();
        assert_eq!(h.len(), 64);
        a.output.dir = "elsewhere".into();
        assert_eq!(a.hash("fm-decay").unwrap(), h);
        assert_ne!(a.hash("apriori").unwrap(), h);
        a.run.s = Some(0.3);
        assert_ne!(a.hash("fm-decay").unwrap(), h);
    }

    #[test]
    fn bad_model_values_are_config_errors() {
        let mut c = ExperimentConfig::default();
        c.model.u = vec![0.0, 1.0];
        assert!(matches!(c.potential(), Err(CliError::ConfigInvalid { ref path, .. }) if path == "model.u"));
        c.model.density.radius = -1.0;
        assert!(matches!(c.density(), Err(CliError::ConfigInvalid { .. })));
    }
}
