//! Command-line front end.
//!
//! Exit codes: 0 success, 1 a pipeline stage failed, 2 invalid arguments or
//! configuration. Stage failures are reported on stderr as one JSON object.

mod attack;
mod commands;
pub mod config;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Error;
use crate::inversion::UpdateRule;
use crate::perturb::ExtractMode;

pub use attack::{run_attack, AttackOutcome, ImageRecord, RunManifest, MANIFEST_FILE};
pub use config::{AnnotationSource, AttackConfig, ValidatedAttack};

/// Machine-readable description of a failed stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageError {
    pub stage: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record: Option<usize>,
}

impl StageError {
    pub fn new(stage: &str, err: &Error, file: Option<&Path>) -> Self {
        Self {
            stage: stage.to_string(),
            message: err.to_string(),
            file: file.map(|p| p.display().to_string()),
            record: err.record(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).unwrap_or_else(|_| self.message.clone())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    /// Rejected before any work started.
    Config(String),
    Stage(StageError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Stage(_) => 1,
        }
    }

    pub(crate) fn stage(stage: &str, err: Error, file: Option<&Path>) -> Self {
        CliError::Stage(StageError::new(stage, &err, file))
    }
}

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Parser)]
#[command(name = "vanish", version, about = "Stripe-pattern object-disappearance attacks on detectors")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build adversarial images for one target label.
    Attack(Box<AttackArgs>),
    /// Compare detector outputs on original and adversarial images.
    Eval(EvalArgs),
    /// Reconstruct a label-fixed sample from the bundled toy classifier.
    Reconstruct(ReconstructArgs),
    /// Rasterize COCO annotations for one image into a painted mask.
    Segmask(SegmaskArgs),
    /// Check the toy classifier's input gradient against finite differences.
    Gradcheck(GradcheckArgs),
}

/// Every flag overrides the matching field of `--config`.
#[derive(Debug, Default, Args)]
pub struct AttackArgs {
    /// JSON attack configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Input image (repeatable).
    #[arg(long = "input", short = 'i')]
    pub inputs: Vec<PathBuf>,
    /// COCO instances file providing the masks.
    #[arg(long, conflicts_with = "masks")]
    pub coco: Option<PathBuf>,
    /// Painted mask per input, in input order (repeatable).
    #[arg(long = "mask")]
    pub masks: Vec<PathBuf>,
    #[arg(long)]
    pub target_label: Option<u32>,
    #[arg(long)]
    pub reconstruction_class: Option<usize>,
    #[arg(long)]
    pub step: Option<usize>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub lambda1: Option<f64>,
    #[arg(long)]
    pub lambda2: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub target_prob: Option<f64>,
    /// momentum | literal
    #[arg(long)]
    pub update_rule: Option<UpdateRule>,
    /// Horizontal band thickness.
    #[arg(long)]
    pub n: Option<usize>,
    /// Vertical band width.
    #[arg(long)]
    pub m: Option<usize>,
    /// Shared stripe stride; defaults to alternating bands and gaps.
    #[arg(long)]
    pub stride: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    pub offset_i: Option<i64>,
    #[arg(long, allow_hyphen_values = true)]
    pub offset_j: Option<i64>,
    #[arg(long)]
    pub eta: Option<f64>,
    /// delta | copy
    #[arg(long)]
    pub extract_mode: Option<ExtractMode>,
    #[arg(long, short = 'o')]
    pub output_dir: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

impl AttackArgs {
    /// Overlays the flags that were given onto `cfg`.
    pub fn apply(&self, cfg: &mut AttackConfig) {
        if !self.inputs.is_empty() {
            cfg.inputs = self.inputs.clone();
        }
        if let Some(c) = &self.coco {
            cfg.annotations = Some(AnnotationSource::Coco(c.clone()));
        }
        if !self.masks.is_empty() {
            cfg.annotations = Some(AnnotationSource::Masks(self.masks.clone()));
        }
        macro_rules! set {
            ($($field:ident),*) => {$(
                if let Some(v) = self.$field.clone() {
                    cfg.$field = v;
                }
            )*};
        }
        set!(
            reconstruction_class, step, epsilon, lambda1, lambda2, alpha, beta, max_iters,
            target_prob, update_rule, n, m, offset_i, offset_j, eta, extract_mode, seed
        );
        if self.target_label.is_some() {
            cfg.target_label = self.target_label;
        }
        if self.stride.is_some() {
            cfg.stride = self.stride;
        }
        if self.output_dir.is_some() {
            cfg.output_dir = self.output_dir.clone();
        }
    }

    /// File values, then flags, then validation.
    pub fn resolve(&self) -> Result<ValidatedAttack, CliError> {
        let mut cfg = match &self.config {
            Some(path) => {
                let bytes = std::fs::read(path)
                    .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
                AttackConfig::from_json(&bytes).map_err(CliError::Config)?
            }
            None => AttackConfig::default(),
        };
        self.apply(&mut cfg);
        cfg.validate().map_err(CliError::Config)
    }
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// COCO ground-truth instances file.
    #[arg(long)]
    pub gt: PathBuf,
    /// Detections on the original images (COCO results JSON).
    #[arg(long)]
    pub origin: PathBuf,
    /// Detections on the adversarial images.
    #[arg(long)]
    pub adv: PathBuf,
    /// Score threshold for box counts and label diffs.
    #[arg(long, default_value_t = crate::evalharness::DEFAULT_SCORE_THRESHOLD)]
    pub threshold: f64,
    #[arg(long, short = 'o')]
    pub output_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReconstructArgs {
    /// Class index to reconstruct.
    #[arg(long = "class")]
    pub class: usize,
    #[arg(long, default_value_t = crate::inversion::DEFAULT_SEED)]
    pub seed: u64,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub update_rule: Option<UpdateRule>,
    #[arg(long, short = 'o')]
    pub output_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct SegmaskArgs {
    #[arg(long)]
    pub coco: PathBuf,
    /// Image file name as listed in the annotations.
    #[arg(long, conflicts_with = "image_id", required_unless_present = "image_id")]
    pub image: Option<String>,
    #[arg(long)]
    pub image_id: Option<u64>,
    /// Also print the bounding region of this label.
    #[arg(long)]
    pub target_label: Option<u32>,
    /// Output PNG.
    #[arg(long, short = 'o')]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = crate::inversion::DEFAULT_SEED)]
    pub seed: u64,
    #[arg(long, default_value_t = 50)]
    pub probes: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub tolerance: f64,
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Attack(args) => {
            let v = args.resolve()?;
            run_attack(&v).map(|_| ())
        }
        Command::Eval(args) => commands::eval(&args),
        Command::Reconstruct(args) => commands::reconstruct_cmd(&args),
        Command::Segmask(args) => commands::segmask(&args),
        Command::Gradcheck(args) => commands::gradcheck(&args),
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(err) => {
            match &err {
                CliError::Config(msg) => eprintln!("error: {msg}"),
                CliError::Stage(s) => eprintln!("{}", s.to_json()),
            }
            err.exit_code()
        }
    }
}
