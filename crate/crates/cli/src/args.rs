//! Command-line flags. Every configuration field has a flag with the same
//! (snake_case) name that overrides the value read from `--config`.

use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use resgcn_core::harness::{RunConfig, SyntheticSpec};
use resgcn_core::mesh::HierarchyOptions;
use resgcn_core::nn::LambdaMax;
use resgcn_core::Precision;

#[derive(Parser, Debug)]
#[command(rename_all = "snake_case", name = "resgcn", version, about = "Residual Chebyshev GCNs on brain-like surface meshes")]
pub struct Cli {
    /// Log level (error, warn, info, debug, trace); RUST_LOG takes precedence.
    #[arg(long, global = true, default_value = "info")]
    pub log_level: String,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write a synthetic cohort: meshes, templates, hierarchy and manifest.
    Generate(GenerateArgs),
    /// Build the partition hierarchy of a mesh and save it as JSON.
    Hierarchy(HierarchyArgs),
    /// Train one split of a dataset and save the selected model.
    Train(TrainArgs),
    /// Score a saved model on a dataset split.
    Evaluate(EvaluateArgs),
    /// Monte Carlo cross-validation over independent subject-level splits.
    Cv(CvArgs),
    /// Export the averaged true-positive class activation map of a model.
    Explain(ExplainArgs),
    /// Finite-difference checks of every layer and of the full network.
    Gradcheck(GradcheckArgs),
    /// Check every split of a dataset for subject leakage and proportions.
    Audit(AuditArgs),
    /// Print the effective run configuration as JSON.
    Config(ConfigArgs),
}

#[derive(Args, Debug)]
#[command(rename_all = "snake_case")]
pub struct GenerateArgs {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Generator parameters as JSON; flags override them.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[command(flatten)]
    pub synthetic: SyntheticOverrides,
}

#[derive(Args, Debug, Default)]
#[command(rename_all = "snake_case")]
pub struct SyntheticOverrides {
    #[arg(long)]
    pub n_subjects: Option<usize>,
    #[arg(long)]
    pub scans_per_subject: Option<usize>,
    #[arg(long)]
    pub subdivisions: Option<u32>,
    #[arg(long)]
    pub radius: Option<f64>,
    #[arg(long)]
    pub patch_radius: Option<f64>,
    #[arg(long)]
    pub patch_depth: Option<f64>,
    #[arg(long)]
    pub center_jitter: Option<f64>,
    #[arg(long)]
    pub subject_variation: Option<f64>,
    #[arg(long)]
    pub size_variation: Option<f64>,
    #[arg(long)]
    pub scan_noise: Option<f64>,
    #[arg(long)]
    pub two_surface: Option<bool>,
    #[arg(long)]
    pub thickness: Option<f64>,
    #[arg(long)]
    pub subcortical: Option<bool>,
    #[command(flatten)]
    pub hierarchy: HierarchyOverrides,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug, Default)]
#[command(rename_all = "snake_case")]
pub struct HierarchyOverrides {
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub stop_distance: Option<f64>,
    #[arg(long)]
    pub max_depth: Option<usize>,
}

#[derive(Args, Debug)]
#[command(rename_all = "snake_case")]
pub struct HierarchyArgs {
    /// OFF or OBJ mesh; each connected component becomes one block.
    #[arg(long)]
    pub mesh: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub options: HierarchyOverrides,
}

#[derive(Args, Debug, Default)]
#[command(rename_all = "snake_case")]
pub struct RunOverrides {
    /// Run configuration as JSON; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    // Model.
    #[arg(long)]
    pub kernels_per_conv: Option<usize>,
    #[arg(long)]
    pub cheb_order: Option<usize>,
    #[arg(long)]
    pub pool_size: Option<usize>,
    #[arg(long)]
    pub n_blocks: Option<usize>,
    #[arg(long)]
    pub fc_units: Option<usize>,
    #[arg(long)]
    pub post_resblock_units: Option<usize>,
    #[arg(long)]
    pub bias_enabled: Option<bool>,
    #[arg(long)]
    pub precision: Option<Precision>,
    #[arg(long)]
    pub lambda_max: Option<LambdaMaxArg>,
    // Training.
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub lr_decay: Option<f64>,
    #[arg(long)]
    pub beta1: Option<f64>,
    #[arg(long)]
    pub beta2: Option<f64>,
    #[arg(long)]
    pub eps: Option<f64>,
    /// Training seed.
    #[arg(long)]
    pub seed: Option<u64>,
    // Splitting.
    #[arg(long)]
    pub test_fraction: Option<f64>,
    #[arg(long)]
    pub val_fraction: Option<f64>,
    #[arg(long)]
    pub n_trials: Option<usize>,
    #[arg(long)]
    pub split_seed: Option<u64>,
    #[arg(long)]
    pub label_tolerance: Option<f64>,
    #[arg(long)]
    pub max_retries: Option<usize>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum LambdaMaxArg {
    Computed,
    Two,
}

impl From<LambdaMaxArg> for LambdaMax {
    fn from(v: LambdaMaxArg) -> Self {
        match v {
            LambdaMaxArg::Computed => LambdaMax::Computed,
            LambdaMaxArg::Two => LambdaMax::Two,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Subset {
    Train,
    Val,
    Test,
    All,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum CamFormat {
    Csv,
    Ply,
}

#[derive(Args, Debug)]
#[command(rename_all = "snake_case")]
pub struct TrainArgs {
    /// Dataset directory with a manifest.
    #[arg(long)]
    pub data: PathBuf,
    /// Output directory for the checkpoint, history and metrics.
    #[arg(long)]
    pub out: PathBuf,
    /// Split to train on; seeds are offset by the trial index.
    #[arg(long, default_value_t = 0)]
    pub trial: usize,
    #[command(flatten)]
    pub run: RunOverrides,
}

#[derive(Args, Debug)]
#[command(rename_all = "snake_case")]
pub struct EvaluateArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub trial: usize,
    #[arg(long, value_enum, default_value_t = Subset::Test)]
    pub subset: Subset,
    /// Per-scan predictions as CSV.
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    #[command(flatten)]
    pub run: RunOverrides,
}

#[derive(Args, Debug)]
#[command(rename_all = "snake_case")]
pub struct CvArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Output directory for trials.csv and report.json.
    #[arg(long)]
    pub out: PathBuf,
    /// Also train the parameter-matched fully connected baseline.
    #[arg(long)]
    pub baseline: bool,
    /// Test whether each trial's averaged CAM concentrates on the patch.
    #[arg(long)]
    pub cam: bool,
    #[arg(long, default_value_t = 100)]
    pub control_sets: usize,
    #[command(flatten)]
    pub run: RunOverrides,
}

#[derive(Args, Debug)]
#[command(rename_all = "snake_case")]
pub struct ExplainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub trial: usize,
    #[arg(long, value_enum, default_value_t = Subset::Test)]
    pub subset: Subset,
    #[arg(long, default_value_t = 1)]
    pub class: usize,
    #[arg(long, value_enum, default_value_t = CamFormat::Csv)]
    pub format: CamFormat,
    /// Rescale the exported map to [0, 1].
    #[arg(long)]
    pub normalize: bool,
    #[command(flatten)]
    pub run: RunOverrides,
}

#[derive(Args, Debug)]
#[command(rename_all = "snake_case")]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug)]
#[command(rename_all = "snake_case")]
pub struct AuditArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Write the per-trial audit as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub run: RunOverrides,
}

#[derive(Args, Debug)]
#[command(rename_all = "snake_case")]
pub struct ConfigArgs {
    #[command(flatten)]
    pub run: RunOverrides,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

impl HierarchyOverrides {
    pub fn apply(&self, o: &mut HierarchyOptions) {
        set(&mut o.sigma, self.sigma);
        set(&mut o.stop_distance, self.stop_distance);
        set(&mut o.max_depth, self.max_depth);
    }
}

impl SyntheticOverrides {
    pub fn resolve(&self, file: Option<&Path>) -> anyhow::Result<SyntheticSpec> {
        let mut s: SyntheticSpec = file.map(read_json).transpose()?.unwrap_or_default();
        set(&mut s.n_subjects, self.n_subjects);
        set(&mut s.scans_per_subject, self.scans_per_subject);
        set(&mut s.subdivisions, self.subdivisions);
        set(&mut s.radius, self.radius);
        set(&mut s.patch_radius, self.patch_radius);
        set(&mut s.patch_depth, self.patch_depth);
        set(&mut s.center_jitter, self.center_jitter);
        set(&mut s.subject_variation, self.subject_variation);
        set(&mut s.size_variation, self.size_variation);
        set(&mut s.scan_noise, self.scan_noise);
        set(&mut s.two_surface, self.two_surface);
        set(&mut s.thickness, self.thickness);
        set(&mut s.subcortical, self.subcortical);
        self.hierarchy.apply(&mut s.hierarchy);
        set(&mut s.seed, self.seed);
        Ok(s)
    }
}

impl RunOverrides {
    /// The `--config` file (or defaults) with every given flag applied.
    pub fn resolve(&self) -> anyhow::Result<RunConfig> {
        let mut c: RunConfig = self.config.as_deref().map(read_json).transpose()?.unwrap_or_default();
        let m = &mut c.model;
        set(&mut m.kernels_per_conv, self.kernels_per_conv);
        set(&mut m.cheb_order, self.cheb_order);
        set(&mut m.pool_size, self.pool_size);
        set(&mut m.n_blocks, self.n_blocks);
        set(&mut m.fc_units, self.fc_units);
        set(&mut m.post_resblock_units, self.post_resblock_units);
        set(&mut m.bias_enabled, self.bias_enabled);
        set(&mut m.precision, self.precision);
        set(&mut m.lambda_max, self.lambda_max.map(Into::into));
        let t = &mut c.train;
        set(&mut t.batch_size, self.batch_size);
        set(&mut t.epochs, self.epochs);
        set(&mut t.lr, self.lr);
        set(&mut t.lr_decay, self.lr_decay);
        set(&mut t.beta1, self.beta1);
        set(&mut t.beta2, self.beta2);
        set(&mut t.eps, self.eps);
        set(&mut t.seed, self.seed);
        let s = &mut c.split;
        set(&mut s.test_fraction, self.test_fraction);
        set(&mut s.val_fraction, self.val_fraction);
        set(&mut s.n_trials, self.n_trials);
        set(&mut s.seed, self.split_seed);
        set(&mut s.label_tolerance, self.label_tolerance);
        set(&mut s.max_retries, self.max_retries);
        Ok(c)
    }
}
