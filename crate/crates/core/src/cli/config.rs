use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::imagecore::Dims;
use crate::inversion::{InversionConfig, UpdateRule, DEFAULT_SEED, SHAPE_CLASSES};
use crate::perturb::{ExtractMode, StripeSpec, DEFAULT_ETA};
use crate::replace::{DEFAULT_EPSILON, DEFAULT_STEP};

pub const SCHEMA_VERSION: u32 = 1;

/// Where target masks come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnnotationSource {
    /// COCO instances file; images are matched by file name.
    Coco(PathBuf),
    /// One painted VOC-palette mask per input, in input order.
    Masks(Vec<PathBuf>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackConfig {
    pub schema_version: u32,
    pub inputs: Vec<PathBuf>,
    pub annotations: Option<AnnotationSource>,
    /// Class id of the object to make disappear.
    pub target_label: Option<u32>,
    /// Classifier class whose reconstruction is striped onto the object.
    pub reconstruction_class: usize,
    pub step: usize,
    pub epsilon: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub alpha: f64,
    pub beta: f64,
    pub max_iters: usize,
    pub target_prob: f64,
    pub update_rule: UpdateRule,
    /// Horizontal band thickness.
    pub n: usize,
    /// Vertical band width.
    pub m: usize,
    /// Shared stripe stride; `None` alternates bands and gaps (`2m`, `2n`).
    pub stride: Option<usize>,
    pub offset_i: i64,
    pub offset_j: i64,
    pub eta: f64,
    pub extract_mode: ExtractMode,
    pub output_dir: Option<PathBuf>,
    pub seed: u64,
}

impl Default for AttackConfig {
    fn default() -> Self {
        let inv = InversionConfig::default();
        let stripes = StripeSpec::default();
        Self {
            schema_version: SCHEMA_VERSION,
            inputs: Vec::new(),
            annotations: None,
            target_label: None,
            reconstruction_class: 0,
            step: DEFAULT_STEP,
            epsilon: DEFAULT_EPSILON,
            lambda1: inv.lambda1,
            lambda2: inv.lambda2,
            alpha: inv.alpha,
            beta: inv.beta,
            max_iters: inv.max_iters,
            target_prob: inv.target_prob,
            update_rule: inv.update_rule,
            n: stripes.n,
            m: stripes.m,
            stride: None,
            offset_i: 0,
            offset_j: 0,
            eta: DEFAULT_ETA,
            extract_mode: ExtractMode::Delta,
            output_dir: None,
            seed: DEFAULT_SEED,
        }
    }
}

/// Config passed validation; required fields are unwrapped.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedAttack {
    pub config: AttackConfig,
    pub target_label: u32,
    pub output_dir: PathBuf,
    pub annotations: AnnotationSource,
    pub inversion: InversionConfig,
    pub stripes: StripeSpec,
}

impl AttackConfig {
    pub fn from_json(bytes: &[u8]) -> Result<Self, String> {
        serde_json::from_slice(bytes).map_err(|e| format!("invalid attack config: {e}"))
    }

    pub fn inversion(&self) -> InversionConfig {
        InversionConfig {
            lambda1: self.lambda1,
            lambda2: self.lambda2,
            alpha: self.alpha,
            beta: self.beta,
            max_iters: self.max_iters,
            target_prob: self.target_prob,
            update_rule: self.update_rule,
        }
    }

    pub fn stripes(&self) -> StripeSpec {
        match self.stride {
            Some(s) => StripeSpec {
                n: self.n,
                m: self.m,
                vertical_stride: s,
                horizontal_stride: s,
            },
            None => StripeSpec::alternating(self.n, self.m),
        }
    }

    /// Range checks only; files are not touched.
    pub fn validate(&self) -> Result<ValidatedAttack, String> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        if self.inputs.is_empty() {
            return Err("at least one input image is required".into());
        }
        let stems: BTreeSet<String> = self.inputs.iter().map(|p| output_stem(p)).collect();
        if stems.len() != self.inputs.len() {
            return Err("input file names must be distinct: outputs are keyed by file stem".into());
        }
        let annotations = self
            .annotations
            .clone()
            .ok_or("an annotation source (COCO file or painted masks) is required")?;
        if let AnnotationSource::Masks(m) = &annotations {
            if m.len() != self.inputs.len() {
                return Err(format!("{} masks given for {} inputs", m.len(), self.inputs.len()));
            }
        }
        let target_label = self.target_label.ok_or("target_label is required")?;
        if target_label == 0 {
            return Err("target_label 0 is the background".into());
        }
        if self.reconstruction_class >= SHAPE_CLASSES.len() {
            return Err(format!(
                "reconstruction_class {} out of range (0..{})",
                self.reconstruction_class,
                SHAPE_CLASSES.len()
            ));
        }
        if self.step == 0 {
            return Err("step must be at least 1".into());
        }
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return Err(format!("epsilon must lie in (0, 1], got {}", self.epsilon));
        }
        let inversion = self.inversion();
        inversion.validate().map_err(|e| e.to_string())?;
        let stripes = self.stripes();
        stripes.build(Dims::new(1, 1, 1)).map_err(|e| e.to_string())?;
        if !(self.eta.is_finite() && self.eta >= 0.0) {
            return Err(format!("eta must be a non-negative number, got {}", self.eta));
        }
        let output_dir = self.output_dir.clone().ok_or("output_dir is required")?;
        Ok(ValidatedAttack {
            config: self.clone(),
            target_label,
            output_dir,
            annotations,
            inversion,
            stripes,
        })
    }
}

/// Per-image output directory name.
pub fn output_stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "image".into())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> AttackConfig {
        AttackConfig {
            inputs: vec!["a.png".into()],
            annotations: Some(AnnotationSource::Coco("ann.json".into())),
            target_label: Some(18),
            output_dir: Some("out".into()),
            ..Default::default()
        }
    }

    #[test]
    fn defaults_validate() {
        let v = minimal().validate().unwrap();
        assert_eq!(v.inversion, InversionConfig::default());
        assert_eq!(v.stripes, StripeSpec::alternating(1, 10));
    }

    #[test]
    fn json_uses_defaults_and_rejects_unknown_fields() {
        let cfg = AttackConfig::from_json(
            br#"{"schema_version": 1, "inputs": ["a.png"], "annotations": {"coco": "ann.json"},
                 "target_label": 18, "output_dir": "out", "eta": 2.5}"#,
        )
        .unwrap();
        assert_eq!(cfg.eta, 2.5);
        assert_eq!(cfg.step, DEFAULT_STEP);
        assert!(AttackConfig::from_json(br#"{"etaa": 1}"#).is_err());
    }

    #[test]
    fn range_errors() {
        let bad = [
            AttackConfig { epsilon: 0.0, ..minimal() },
            AttackConfig { step: 0, ..minimal() },
            AttackConfig { lambda1: 0.7, ..minimal() },
            AttackConfig { stride: Some(3), ..minimal() },
            AttackConfig { reconstruction_class: 3, ..minimal() },
            AttackConfig { target_label: Some(0), ..minimal() },
            AttackConfig { schema_version: 2, ..minimal() },
            AttackConfig { inputs: vec!["x/a.png".into(), "y/a.png".into()], ..minimal() },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
    }
}
