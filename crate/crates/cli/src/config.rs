//! Run configuration: a flat TOML key/value file plus `key=value` overrides.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use dagnet::convergence::VerifyOptions;
use dagnet::optimizer::UpdateRule;
use dagnet::{Activation, DagTopology};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    /// Every forward edge `(i, j)`, `i < j`.
    Dense,
    /// Only `(j, j+1)`.
    Sequential,
    /// All pairs within the encoder and within the decoder block.
    CrossEncoder,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    /// Regression targets from a random teacher network of the same topology.
    Teacher,
    /// Generated smooth images; inputs are also the targets.
    SyntheticFaces,
    /// A directory of PGM images; inputs are also the targets.
    Pgm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Adaptive,
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Topology file; when absent the network is built from `widths`.
    pub topology: Option<PathBuf>,
    pub widths: Option<Vec<usize>>,
    pub architecture: Architecture,
    pub code_layer: Option<usize>,
    /// Row label in comparison tables.
    pub label: Option<String>,

    pub activation: String,
    pub allow_unchecked: bool,
    pub eta: f64,
    pub s: f64,
    pub iterations: usize,
    pub seed: u64,
    pub init_scale: f64,
    pub optimizer: OptimizerKind,
    /// Constant coefficient for the fixed-momentum baseline.
    pub momentum: f64,

    pub early_stop: bool,
    pub tail_threshold: f64,
    pub tail_window: usize,
    pub monotone_slack: f64,
    /// Constant for the step-size precondition; estimated when absent.
    #[serde(rename = "C")]
    pub c: Option<f64>,

    pub dataset: DatasetKind,
    pub data_path: Option<PathBuf>,
    pub image_rows: usize,
    pub image_cols: usize,
    pub samples: usize,
    pub train_count: Option<usize>,
    pub data_seed: u64,
    pub teacher_scale: f64,

    pub output_dir: PathBuf,
    pub codes: Vec<usize>,
    pub seeds: Vec<u64>,
    pub fd_step: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let verify = VerifyOptions::default();
        Self {
            topology: None,
            widths: None,
            architecture: Architecture::Dense,
            code_layer: None,
            label: None,
            activation: "tanh".into(),
            allow_unchecked: false,
            eta: 0.01,
            s: 0.5,
            iterations: 2000,
            seed: 0,
            init_scale: 1.0,
            optimizer: OptimizerKind::Adaptive,
            momentum: 0.9,
            early_stop: false,
            tail_threshold: verify.tail_threshold,
            tail_window: verify.tail_window,
            monotone_slack: verify.monotone_slack,
            c: None,
            dataset: DatasetKind::Teacher,
            data_path: None,
            image_rows: 16,
            image_cols: 16,
            samples: 20,
            train_count: None,
            data_seed: 0,
            teacher_scale: 0.5,
            output_dir: PathBuf::from("runs/latest"),
            codes: Vec::new(),
            seeds: Vec::new(),
            fd_step: dagnet::gradients::DEFAULT_FD_STEP,
        }
    }
}

/// Parses `value` as a TOML value, falling back to a bare string.
fn override_value(value: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {value}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(value.to_string()))
}

impl RunConfig {
    /// Parses configuration text and applies `key=value` overrides in order.
    pub fn from_toml_with(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = toml::from_str(text).context("invalid configuration file")?;
        for item in overrides {
            let (key, value) = item
                .split_once('=')
                .with_context(|| format!("override {item:?} is not of the form key=value"))?;
            table.insert(key.trim().to_string(), override_value(value.trim()));
        }
        let config: RunConfig = table.try_into().context("invalid configuration")?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let text = match path {
            Some(p) => fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
            None => String::new(),
        };
        Self::from_toml_with(&text, overrides)
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.eta > 0.0 && self.eta.is_finite(), "eta must be positive, got {}", self.eta);
        ensure!(self.s > 0.0 && self.s < 1.0, "s must lie in (0, 1), got {}", self.s);
        ensure!(self.iterations >= 1, "iteration budget must be at least 1");
        ensure!(self.init_scale >= 0.0 && self.init_scale.is_finite(), "init_scale must be non-negative");
        ensure!(self.tail_window >= 1, "tail_window must be at least 1");
        ensure!(self.fd_step > 0.0, "fd_step must be positive");
        if let Some(c) = self.c {
            ensure!(c > 0.0 && c.is_finite(), "C must be positive, got {c}");
        }
        ensure!(
            self.topology.is_some() || self.widths.is_some(),
            "either `topology` or `widths` must be given"
        );
        self.activation()?;
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serialises")
    }

    /// SHA-256 of the canonical serialization.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    pub fn activation(&self) -> Result<Activation> {
        if self.allow_unchecked {
            Ok(Activation::parse_unchecked(&self.activation)?)
        } else {
            Ok(self.activation.parse::<Activation>()?)
        }
    }

    pub fn update_rule(&self) -> UpdateRule {
        match self.optimizer {
            OptimizerKind::Adaptive => UpdateRule::Adaptive,
            OptimizerKind::Fixed => UpdateRule::Fixed { momentum: self.momentum },
        }
    }

    pub fn verify_options(&self) -> VerifyOptions {
        VerifyOptions {
            monotone_slack: self.monotone_slack,
            tail_threshold: self.tail_threshold,
            tail_window: self.tail_window,
        }
    }

    pub fn build_topology(&self) -> Result<DagTopology> {
        if let Some(path) = &self.topology {
            return DagTopology::load(path).with_context(|| format!("loading topology {}", path.display()));
        }
        let widths = self.widths.as_deref().expect("checked by validate");
        let t = match self.architecture {
            Architecture::Dense => DagTopology::dense(widths)?,
            Architecture::Sequential => match self.code_layer {
                Some(c) => DagTopology::cross_encoder(widths, c)?.sequential_counterpart(),
                None => DagTopology::sequential(widths)?,
            },
            Architecture::CrossEncoder => {
                let Some(c) = self.code_layer else {
                    bail!("architecture cross_encoder needs code_layer");
                };
                DagTopology::cross_encoder(widths, c)?
            }
        };
        Ok(t)
    }

    /// Name used in comparison tables.
    pub fn model_label(&self, topology: &DagTopology) -> String {
        match &self.label {
            Some(l) => l.clone(),
            None if topology.is_sequential() => "Autoencoder".into(),
            None => "CrossEncoder".into(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_and_defaults() {
        let c = RunConfig::from_toml_with(
            "widths = [2, 3, 1]\neta = 0.5\n",
            &["eta=0.02".into(), "activation=logistic".into(), "C=4".into()],
        )
        .unwrap();
        assert_eq!(c.eta, 0.02);
        assert_eq!(c.activation, "logistic");
        assert_eq!(c.c, Some(4.0));
        assert_eq!(c.s, 0.5);
        assert_eq!(c.build_topology().unwrap().edges().len(), 3);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(RunConfig::from_toml_with("widths = [1, 1]\ns = 1.0\n", &[]).is_err());
        assert!(RunConfig::from_toml_with("widths = [1, 1]\neta = -1.0\n", &[]).is_err());
        assert!(RunConfig::from_toml_with("widths = [1, 1]\niterations = 0\n", &[]).is_err());
        assert!(RunConfig::from_toml_with("widths = [1, 1]\nbogus = 1\n", &[]).is_err());
        assert!(RunConfig::from_toml_with("eta = 0.1\n", &[]).is_err());
        assert!(RunConfig::from_toml_with("widths = [1, 1]\nactivation = \"identity\"\n", &[]).is_err());
        assert!(RunConfig::from_toml_with(
            "widths = [1, 1]\nactivation = \"identity\"\nallow_unchecked = true\n",
            &[]
        )
        .is_ok());
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::from_toml_with("widths = [2, 1]\n", &[]).unwrap();
        let b = RunConfig::from_toml_with("widths = [2, 1]\n", &["seed=1".into()]).unwrap();
        assert_eq!(a.hash(), a.clone().hash());
        assert_ne!(a.hash(), b.hash());
        assert_eq!(RunConfig::from_toml_with(&a.to_toml(), &[]).unwrap(), a);
    }

    #[test]
    fn architectures() {
        let base = "widths = [6, 4, 2, 4, 6]\ncode_layer = 2\n";
        let cross = RunConfig::from_toml_with(base, &["architecture=cross_encoder".into()]).unwrap();
        let t = cross.build_topology().unwrap();
        assert_eq!(t.edges().len(), 6);
        assert_eq!(cross.model_label(&t), "CrossEncoder");
        let seq = RunConfig::from_toml_with(base, &["architecture=sequential".into()]).unwrap();
        let t = seq.build_topology().unwrap();
        assert!(t.is_sequential());
        assert_eq!(t.code_layer(), Some(2));
        assert_eq!(seq.model_label(&t), "Autoencoder");
    }
}
