//! Run configuration, read from a single TOML document.
//!
//! Every table is optional; omitted keys take their defaults, which are the
//! published training settings (temperature 0.03, learning rates 5e-5 and
//! 0.01, 50 epochs, patience 5, 32 samples per contrastive batch, baseline
//! lr 1e-5 with batch 64) on a desk-scale synthetic dataset.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use supcon_core::augment::AugmentPolicy;
use supcon_core::data::{SplitSpec, SyntheticConfig};
use supcon_core::loss::{LossConfig, LossVariant};
use supcon_core::model::EncoderConfig;
use supcon_core::train::TrainConfig;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// Directory of patch images named `<patient>_x<X>_y<Y>_class<C>.png`.
    /// When unset, the synthetic generator's output under `<outdir>/data` is
    /// used.
    pub root: Option<PathBuf>,
    pub synthetic: SyntheticConfig,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self { root: None, synthetic: SyntheticConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub pca_components: usize,
    pub pca_png: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { pca_components: 2, pca_png: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepAxis {
    Temperature,
    Augmentation,
    Variant,
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepAxis::Temperature => "temperature",
            SweepAxis::Augmentation => "augmentation",
            SweepAxis::Variant => "variant",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SweepValue {
    Number(f64),
    Name(String),
}

impl fmt::Display for SweepValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SweepValue::Number(v) => write!(f, "{v}"),
            SweepValue::Name(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub values: Vec<SweepValue>,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::config("sweep.values", "at least one value required"));
        }
        for v in &self.values {
            match (self.axis, v) {
                (SweepAxis::Temperature, SweepValue::Number(t)) if *t > 0.0 && t.is_finite() => {}
                (SweepAxis::Temperature, _) => {
                    return Err(Error::config("sweep.values", format!("temperature {v} must be a number > 0")))
                }
                (SweepAxis::Augmentation, SweepValue::Name(n)) => {
                    AugmentPolicy::by_name(n).map_err(|_| Error::config("sweep.values", format!("unknown policy `{n}`")))?;
                }
                (SweepAxis::Variant, SweepValue::Name(n)) => {
                    LossVariant::from_name(n).map_err(|_| Error::config("sweep.values", format!("unknown variant `{n}`")))?;
                }
                _ => return Err(Error::config("sweep.values", format!("`{v}` must be a name"))),
            }
        }
        Ok(())
    }

    /// The base config with this axis set to `value`.
    pub fn apply(&self, base: &RunConfig, value: &SweepValue) -> Result<RunConfig> {
        let mut cfg = base.clone();
        match (self.axis, value) {
            (SweepAxis::Temperature, SweepValue::Number(t)) => cfg.loss.temperature = *t,
            (SweepAxis::Augmentation, SweepValue::Name(n)) => cfg.augment = AugmentPolicy::by_name(n)?,
            (SweepAxis::Variant, SweepValue::Name(n)) => cfg.loss.variant = LossVariant::from_name(n)?,
            _ => return Err(Error::config("sweep.values", format!("`{value}` does not fit axis {}", self.axis))),
        }
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Master seed for weight init, shuffling and augmentation.
    pub seed: u64,
    pub outdir: PathBuf,
    /// Weight manifest of a pretrained encoder; a fresh one is initialised
    /// from `seed` when unset.
    pub pretrained: Option<PathBuf>,
    pub data: DataConfig,
    pub split: SplitSpec,
    pub augment: AugmentPolicy,
    pub encoder: EncoderConfig,
    pub loss: LossConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub sweep: Option<SweepSpec>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            outdir: PathBuf::from("runs/default"),
            pretrained: None,
            data: DataConfig::default(),
            split: SplitSpec::default(),
            augment: AugmentPolicy::default(),
            encoder: EncoderConfig::default(),
            loss: LossConfig::default(),
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
            sweep: None,
        }
    }
}

fn core_config(e: supcon_core::Error) -> Error {
    match e {
        supcon_core::Error::InvalidConfig { field, reason } => Error::Config { field, reason },
        supcon_core::Error::UnknownPolicy(name) => Error::config("augment.name", format!("unknown policy `{name}`")),
        other => Error::Core(other),
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| {
            let field = e.span().map(|s| locate_key(text, s.start)).unwrap_or_else(|| "<document>".into());
            Error::config(field, e.message().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config("<document>", e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.seed > i64::MAX as u64 {
            return Err(Error::config("seed", "must fit in a signed 64-bit integer"));
        }
        if self.data.root.is_none() {
            self.data.synthetic.validate().map_err(core_config)?;
        }
        self.split.validate().map_err(core_config)?;
        self.augment.validate().map_err(core_config)?;
        self.encoder.validate().map_err(core_config)?;
        self.loss.validate().map_err(core_config)?;
        self.train.validate().map_err(core_config)?;
        if self.eval.pca_components == 0 {
            return Err(Error::config("eval.pca_components", "must be >= 1"));
        }
        if let Some(sweep) = &self.sweep {
            sweep.validate()?;
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, recorded in artifact manifests.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(json))
    }
}

/// Dotted path of the innermost key whose value starts before `offset`;
/// used to name the field in TOML errors.
fn locate_key(text: &str, offset: usize) -> String {
    let mut table = String::new();
    let mut last_key = None;
    let mut pos = 0;
    for line in text.split_inclusive('\n') {
        if pos > offset {
            break;
        }
        let t = line.trim();
        if let Some(name) = t.strip_prefix('[').and_then(|r| r.split(']').next()) {
            table = name.trim_matches(|c| c == '[' || c == ' ').to_string();
            last_key = None;
        } else if let Some((k, _)) = t.split_once('=') {
            last_key = Some(k.trim().to_string());
        }
        pos += line.len();
    }
    match (table.is_empty(), last_key) {
        (true, Some(k)) => k,
        (false, Some(k)) => format!("{table}.{k}"),
        (_, None) => if table.is_empty() { "<document>".into() } else { table },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let cfg = RunConfig::from_toml_str("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.loss.temperature, 0.03);
        assert_eq!(cfg.train.stage1.lr, 5e-5);
        assert_eq!(cfg.train.stage2.lr, 0.01);
        assert_eq!(cfg.train.baseline.lr, 1e-5);
    }

    #[test]
    fn round_trip() {
        let mut cfg = RunConfig::default();
        cfg.seed = 17;
        cfg.train.stage1.epochs = 3;
        cfg.sweep = Some(SweepSpec {
            axis: SweepAxis::Temperature,
            values: vec![SweepValue::Number(0.03), SweepValue::Number(1.0)],
        });
        let text = cfg.to_toml_string().unwrap();
        assert_eq!(RunConfig::from_toml_str(&text).unwrap(), cfg);
    }

    #[test]
    fn negative_lr_names_the_field() {
        let err = RunConfig::from_toml_str("[train.stage1]\nlr = -0.1\n").unwrap_err();
        match err {
            Error::Config { field, .. } => assert_eq!(field, "train.stage1.lr"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn schema_errors_name_the_field() {
        let err = RunConfig::from_toml_str("[train.stage2]\npatience = \"five\"\n").unwrap_err();
        match err {
            Error::Config { field, .. } => assert_eq!(field, "train.stage2.patience"),
            other => panic!("{other:?}"),
        }
        assert!(matches!(RunConfig::from_toml_str("[loss]\ntemprature = 0.1\n"), Err(Error::Config { .. })));
        assert!(matches!(RunConfig::from_toml_str("[augment]\nname = \"autoaugment\"\n"), Err(Error::Config { .. })));
    }

    #[test]
    fn sweep_validation() {
        let ok = "[sweep]\naxis = \"augmentation\"\nvalues = [\"flips\", \"flips+color\"]\n";
        assert!(RunConfig::from_toml_str(ok).is_ok());
        for bad in [
            "[sweep]\naxis = \"temperature\"\nvalues = []\n",
            "[sweep]\naxis = \"temperature\"\nvalues = [-1.0]\n",
            "[sweep]\naxis = \"variant\"\nvalues = [\"nt-xent\"]\n",
        ] {
            assert!(matches!(RunConfig::from_toml_str(bad), Err(Error::Config { .. })), "{bad}");
        }
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.loss.temperature = 0.1;
        assert_ne!(a.hash(), b.hash());
    }
}
