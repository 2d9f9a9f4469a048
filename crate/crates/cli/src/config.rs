//! Experiment configuration.
//!
//! Configs are JSON. Every optional field has a default, and the resolved
//! config (defaults filled in, kernel scales expressed as `sigma` and `c`) is
//! echoed into every run artifact so a run can be repeated from its outputs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use hmnn::data::TextureSpec;
use hmnn::math::inverse_softplus;
use hmnn::metrics::RmseNormalization;
use hmnn::trainer::GradCheckOptions;
use hmnn::{Head, KernelParams, MeanInit, MuMode, NetworkShape, StepConfig, VariationalParams};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Static,
    Evolving,
    Series,
    Gradcheck,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Static => "static",
            Experiment::Evolving => "evolving",
            Experiment::Series => "series",
            Experiment::Gradcheck => "gradcheck",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    #[serde(default)]
    pub network: NetworkConfig,
    pub kernel: KernelConfig,
    #[serde(default)]
    pub posterior: PosteriorConfig,
    #[serde(default)]
    pub step: StepConfig,
    /// Epochs for the first step, which starts from scratch. `None` uses
    /// `step.epochs`.
    #[serde(default)]
    pub warmup_epochs: Option<usize>,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub series: SeriesConfig,
    #[serde(default)]
    pub gradcheck: GradcheckConfig,
    #[serde(default)]
    pub seed: u64,
    /// Stop after this many filtering steps (the run can be resumed later).
    #[serde(default)]
    pub max_steps: Option<usize>,
    /// Checkpoint after every `checkpoint_every`-th step; the last step of a
    /// run is always checkpointed. Each checkpoint holds the whole history.
    #[serde(default = "default_checkpoint_every")]
    pub checkpoint_every: usize,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    /// Hidden layer widths; input and output widths come from the data.
    pub hidden: Vec<usize>,
    /// Observation variance of the Gaussian head (regression only).
    pub obs_var: f64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            hidden: vec![100, 100],
            obs_var: 1.0,
        }
    }
}

impl NetworkConfig {
    pub fn classifier(&self, input: usize, classes: usize) -> CliResult<NetworkShape> {
        self.shape(input, classes, Head::SoftmaxCategorical)
    }

    pub fn regressor(&self, input: usize, output: usize) -> CliResult<NetworkShape> {
        self.shape(input, output, Head::GaussianRegression { obs_var: self.obs_var })
    }

    fn shape(&self, input: usize, output: usize, head: Head) -> CliResult<NetworkShape> {
        let mut sizes = vec![input];
        sizes.extend(&self.hidden);
        sizes.push(output);
        NetworkShape::new(sizes, head).map_err(|e| CliError::Config(e.to_string()))
    }
}

/// Transition kernel. Scales must be named explicitly: exactly one of
/// `sigma` / `neg_log_sigma` and one of `c` / `neg_log_c`, where
/// `neg_log_x = -ln(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawKernel", into = "RawKernel")]
pub struct KernelConfig(pub KernelParams);

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawKernel {
    pi: f64,
    alpha: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sigma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    neg_log_sigma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    neg_log_c: Option<f64>,
    mu: MuMode,
}

fn pick_scale(name: &str, direct: Option<f64>, neg_log: Option<f64>) -> Result<f64, String> {
    match (direct, neg_log) {
        (Some(v), None) => Ok(v),
        (None, Some(l)) => Ok((-l).exp()),
        (Some(_), Some(_)) => Err(format!("kernel: give either {name} or neg_log_{name}, not both")),
        (None, None) => Err(format!("kernel: {name} (or neg_log_{name}) is required")),
    }
}

impl TryFrom<RawKernel> for KernelConfig {
    type Error = String;
    fn try_from(raw: RawKernel) -> Result<Self, String> {
        let sigma = pick_scale("sigma", raw.sigma, raw.neg_log_sigma)?;
        let c = pick_scale("c", raw.c, raw.neg_log_c)?;
        KernelParams::new(raw.pi, raw.alpha, sigma, c, raw.mu)
            .map(KernelConfig)
            .map_err(|e| e.to_string())
    }
}

impl From<KernelConfig> for RawKernel {
    fn from(k: KernelConfig) -> Self {
        let k = k.0;
        RawKernel {
            pi: k.pi,
            alpha: k.alpha,
            sigma: Some(k.sigma),
            neg_log_sigma: None,
            c: Some(k.c),
            neg_log_c: None,
            mu: k.mu,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerGroup {
    /// Every affine layer except the first and the last.
    Internal,
    All,
}

/// Affine layers that carry DropConnect.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LayerSelection {
    Group(LayerGroup),
    Indices(Vec<usize>),
}

impl LayerSelection {
    pub fn layers(&self, num_layers: usize) -> Vec<usize> {
        match self {
            LayerSelection::Group(LayerGroup::All) => (0..num_layers).collect(),
            LayerSelection::Group(LayerGroup::Internal) => (1..num_layers.saturating_sub(1)).collect(),
            LayerSelection::Indices(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PosteriorConfig {
    /// DropConnect rate `p` (probability of the mean component).
    pub p: f64,
    /// Static runs only: train one network per listed `p`.
    pub p_grid: Option<Vec<f64>>,
    pub dropconnect_layers: LayerSelection,
    /// Scale of `θ_0`, whose means are zero.
    pub initial_scale: f64,
    /// Starting means of the first step's optimization.
    pub init_mean: MeanInit,
    /// Starting scale of the first step's optimization.
    pub init_scale: f64,
}

impl Default for PosteriorConfig {
    fn default() -> Self {
        Self {
            p: 1.0,
            p_grid: None,
            dropconnect_layers: LayerSelection::Group(LayerGroup::Internal),
            initial_scale: 1.0,
            init_mean: MeanInit::He,
            init_scale: 0.01,
        }
    }
}

impl PosteriorConfig {
    pub fn drop_rates(&self, shape: &NetworkShape, p: f64) -> BTreeMap<usize, f64> {
        if p == 1.0 {
            return BTreeMap::new();
        }
        self.dropconnect_layers.layers(shape.num_layers()).into_iter().map(|l| (l, p)).collect()
    }

    /// `θ_0`: zero means and a common scale.
    pub fn initial(&self, shape: &NetworkShape, p: f64) -> CliResult<VariationalParams> {
        let n = shape.num_weights();
        let rho = inverse_softplus(self.initial_scale)?;
        Ok(VariationalParams::new(shape, vec![0.0; n], vec![rho; n], self.drop_rates(shape, p))?)
    }

    pub fn grid(&self) -> Vec<f64> {
        self.p_grid.clone().unwrap_or_else(|| vec![self.p])
    }
}

fn default_checkpoint_every() -> usize {
    1
}

fn default_mnist_split() -> usize {
    10_000
}

fn default_steps() -> usize {
    hmnn::data::evolving::SCHEDULE_STEPS
}

fn default_drift_n() -> usize {
    500
}

fn default_drift_test_n() -> usize {
    2000
}

/// Where the data comes from. Relative paths are resolved against the
/// directory of the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataConfig {
    #[default]
    None,
    /// MNIST IDX files. Training uses the first `train_size` training images,
    /// validation the last `validation_size`, testing the first `test_size`
    /// test images.
    Mnist {
        dir: PathBuf,
        #[serde(default = "default_mnist_split")]
        train_size: usize,
        #[serde(default = "default_mnist_split")]
        validation_size: usize,
        #[serde(default = "default_mnist_split")]
        test_size: usize,
    },
    /// Evolving-label stream resampled from the MNIST training set; the test
    /// stream is drawn from the MNIST test set.
    MnistStream {
        dir: PathBuf,
        #[serde(default = "default_steps")]
        steps: usize,
        #[serde(default = "default_mnist_split")]
        per_step_n: usize,
        #[serde(default = "default_mnist_split")]
        test_per_step_n: usize,
    },
    /// Two separable 2-D clusters under the evolving labelling.
    SyntheticDrift {
        #[serde(default = "default_steps")]
        steps: usize,
        #[serde(default = "default_drift_n")]
        per_step_n: usize,
        #[serde(default = "default_drift_test_n")]
        test_per_step_n: usize,
    },
    /// Synthetic travelling-wave texture, one frame per row.
    Texture(TextureSpec),
    /// Numeric CSV, one frame per row.
    Csv { path: PathBuf },
    /// Little-endian `f64` matrix with a JSON sidecar giving `rows` and `cols`.
    Raw { path: PathBuf, sidecar: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeriesConfig {
    pub window: usize,
    /// `None` trains on raw frames.
    pub pca_components: Option<usize>,
    /// First scored frame, 1-based.
    pub eval_start: usize,
    pub eval_stride: usize,
    pub normalization: RmseNormalization,
}

impl Default for SeriesConfig {
    fn default() -> Self {
        Self {
            window: hmnn::data::series::DEFAULT_WINDOW,
            pca_components: Some(130),
            eval_start: 150,
            eval_stride: 2,
            normalization: RmseNormalization::RatioOfSums,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradcheckConfig {
    pub layer_sizes: Vec<usize>,
    pub regression: bool,
    pub instances: usize,
    pub batch: usize,
    pub mc_samples: usize,
    pub step: f64,
    pub tolerance: f64,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        let o = GradCheckOptions::default();
        Self {
            layer_sizes: vec![4, 8, 3],
            regression: false,
            instances: o.instances,
            batch: o.batch,
            mc_samples: o.mc_samples,
            step: o.step,
            tolerance: o.tolerance,
        }
    }
}

impl GradcheckConfig {
    pub fn options(&self) -> GradCheckOptions {
        GradCheckOptions {
            instances: self.instances,
            batch: self.batch,
            mc_samples: self.mc_samples,
            step: self.step,
            tolerance: self.tolerance,
        }
    }
}

fn config_err<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(CliError::Config(msg.into()))
}

impl ExperimentConfig {
    /// Reads, resolves and validates a config file.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json(text: &str) -> CliResult<Self> {
        serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        match &mut self.data {
            DataConfig::Mnist { dir, .. } | DataConfig::MnistStream { dir, .. } => fix(dir),
            DataConfig::Csv { path } => fix(path),
            DataConfig::Raw { path, sidecar } => {
                fix(path);
                fix(sidecar);
            }
            DataConfig::None | DataConfig::SyntheticDrift { .. } | DataConfig::Texture(_) => {}
        }
        if let Some(out) = &mut self.output_dir {
            fix(out);
        }
    }

    /// Range and existence checks, run before any computation.
    pub fn validate(&self) -> CliResult<()> {
        self.kernel.0.validate()?;
        self.step.validate()?;
        if self.step.epochs == 0 || self.warmup_epochs == Some(0) {
            return config_err("epochs must be positive");
        }
        if self.max_steps == Some(0) || self.checkpoint_every == 0 {
            return config_err("max_steps and checkpoint_every must be positive");
        }
        if self.network.hidden.is_empty() || self.network.hidden.contains(&0) {
            return config_err("network.hidden needs at least one positive width");
        }
        if !(self.network.obs_var > 0.0 && self.network.obs_var.is_finite()) {
            return config_err("network.obs_var must be positive");
        }
        let post = &self.posterior;
        if post.p_grid.as_ref().is_some_and(|g| g.is_empty()) {
            return config_err("posterior.p_grid must not be empty");
        }
        if post.p_grid.is_some() && self.experiment != Experiment::Static {
            return config_err("posterior.p_grid is only supported for static runs");
        }
        for p in post.grid() {
            if !(p > 0.0 && p <= 1.0) {
                return config_err(format!("DropConnect rate p must lie in (0, 1], got {p}"));
            }
        }
        for (name, v) in [("initial_scale", post.initial_scale), ("init_scale", post.init_scale)] {
            if !(v > 0.0 && v.is_finite()) {
                return config_err(format!("posterior.{name} must be positive"));
            }
        }
        if let MeanInit::Normal { std } = post.init_mean {
            if !(std >= 0.0 && std.is_finite()) {
                return config_err("posterior.init_mean.normal.std must be non-negative");
            }
        }
        self.validate_data()?;
        self.validate_series()?;
        let g = &self.gradcheck;
        if g.layer_sizes.len() < 3 || g.layer_sizes.contains(&0) {
            return config_err("gradcheck.layer_sizes needs input, hidden and output widths");
        }
        if g.instances == 0 || g.batch == 0 || g.mc_samples == 0 || !(g.step > 0.0) || !(g.tolerance > 0.0) {
            return config_err("gradcheck counts, step and tolerance must be positive");
        }
        Ok(())
    }

    fn validate_data(&self) -> CliResult<()> {
        let must_exist = |p: &Path| {
            if p.exists() {
                Ok(())
            } else {
                config_err(format!("referenced path {} does not exist", p.display()))
            }
        };
        match &self.data {
            DataConfig::None => {
                if self.experiment != Experiment::Gradcheck {
                    return config_err(format!("{} runs need a data source", self.experiment.name()));
                }
            }
            DataConfig::Mnist {
                dir,
                train_size,
                test_size,
                ..
            } => {
                must_exist(dir)?;
                if *train_size == 0 || *test_size == 0 {
                    return config_err("MNIST train_size and test_size must be positive");
                }
            }
            DataConfig::MnistStream {
                dir,
                steps,
                per_step_n,
                test_per_step_n,
            } => {
                must_exist(dir)?;
                check_stream(*steps, *per_step_n, *test_per_step_n)?;
            }
            DataConfig::SyntheticDrift {
                steps,
                per_step_n,
                test_per_step_n,
            } => check_stream(*steps, *per_step_n, *test_per_step_n)?,
            DataConfig::Texture(spec) => {
                if spec.frames == 0 || spec.height == 0 || spec.width == 0 || spec.waves == 0 {
                    return config_err("texture dimensions and wave count must be positive");
                }
                if !(spec.noise >= 0.0) {
                    return config_err("texture noise must be non-negative");
                }
            }
            DataConfig::Csv { path } => must_exist(path)?,
            DataConfig::Raw { path, sidecar } => {
                must_exist(path)?;
                must_exist(sidecar)?;
            }
        }
        let kind_ok = match self.experiment {
            Experiment::Static => matches!(self.data, DataConfig::Mnist { .. }),
            Experiment::Evolving => {
                matches!(self.data, DataConfig::MnistStream { .. } | DataConfig::SyntheticDrift { .. })
            }
            Experiment::Series => {
                matches!(self.data, DataConfig::Texture(_) | DataConfig::Csv { .. } | DataConfig::Raw { .. })
            }
            Experiment::Gradcheck => true,
        };
        if !kind_ok {
            return config_err(format!(
                "data source does not fit a {} experiment",
                self.experiment.name()
            ));
        }
        Ok(())
    }

    fn validate_series(&self) -> CliResult<()> {
        let s = &self.series;
        if s.window == 0 || s.eval_stride == 0 || s.pca_components == Some(0) {
            return config_err("series window, stride and component count must be positive");
        }
        // Frame `f` (1-based) is predicted by the posterior trained on frames
        // up to `f - 1`, whose window must already be complete.
        if s.eval_start < s.window + 2 {
            return config_err(format!(
                "series.eval_start must be at least window + 2 = {}",
                s.window + 2
            ));
        }
        if let DataConfig::Texture(spec) = &self.data {
            if s.eval_start > spec.frames {
                return config_err("series.eval_start lies beyond the last frame");
            }
        }
        Ok(())
    }

    /// The config as echoed into run artifacts.
    pub fn echo(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }
}

fn check_stream(steps: usize, n: usize, test_n: usize) -> CliResult<()> {
    if steps == 0 || steps > hmnn::data::evolving::SCHEDULE_STEPS {
        return config_err(format!(
            "stream steps must lie in 1..={}",
            hmnn::data::evolving::SCHEDULE_STEPS
        ));
    }
    if n == 0 || test_n == 0 {
        return config_err("per-step sample sizes must be positive");
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"{
        "experiment": "evolving",
        "kernel": {"pi": 0.5, "alpha": 0.5, "neg_log_sigma": 2, "c": 50, "mu": "previous_mean"},
        "data": {"source": "synthetic_drift", "steps": 3}
    }"#;

    #[test]
    fn defaults_fill_in() {
        let cfg = ExperimentConfig::from_json(BASE).unwrap();
        assert_eq!(cfg.network.hidden, vec![100, 100]);
        assert_eq!(cfg.step, StepConfig::default());
        assert!((cfg.kernel.0.sigma - (-2.0f64).exp()).abs() < 1e-15);
        assert_eq!(cfg.kernel.0.c, 50.0);
        cfg.validate().unwrap();
        let echo = cfg.echo();
        assert_eq!(echo["data"]["per_step_n"], 500);
        assert!(echo["kernel"].get("neg_log_sigma").is_none());
        assert_eq!(ExperimentConfig::from_json(&echo.to_string()).unwrap(), cfg);
    }

    #[test]
    fn kernel_scale_naming_is_strict() {
        let both = BASE.replace(r#""neg_log_sigma": 2"#, r#""neg_log_sigma": 2, "sigma": 0.1"#);
        assert!(ExperimentConfig::from_json(&both).is_err());
        let neither = BASE.replace(r#""neg_log_sigma": 2, "#, "");
        assert!(ExperimentConfig::from_json(&neither).is_err());
        let small_c = BASE.replace(r#""c": 50"#, r#""neg_log_c": 4"#);
        assert!(ExperimentConfig::from_json(&small_c).is_err());
    }

    #[test]
    fn unknown_fields_and_bad_ranges_are_rejected() {
        let typo = BASE.replace(r#""seed""#, "").replace(r#""experiment""#, r#""seeed": 1, "experiment""#);
        assert!(ExperimentConfig::from_json(&typo).is_err());
        let mut cfg = ExperimentConfig::from_json(BASE).unwrap();
        cfg.posterior.p = 1.5;
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::from_json(BASE).unwrap();
        cfg.step.learning_rate = -1.0;
        assert!(cfg.validate().is_err());
        let mismatched = BASE.replace(r#""experiment": "evolving""#, r#""experiment": "series""#);
        assert!(ExperimentConfig::from_json(&mismatched).unwrap().validate().is_err());
    }

    #[test]
    fn internal_layers_skip_first_and_last() {
        let sel = LayerSelection::Group(LayerGroup::Internal);
        assert_eq!(sel.layers(3), vec![1]);
        assert_eq!(sel.layers(2), Vec::<usize>::new());
        assert_eq!(LayerSelection::Group(LayerGroup::All).layers(2), vec![0, 1]);
    }

    #[test]
    fn texture_fields_default_individually() {
        let text = r#"{"experiment": "series",
            "kernel": {"pi": 0.5, "alpha": 0.5, "sigma": 0.1, "c": 10, "mu": "zero_vector"},
            "data": {"source": "texture", "frames": 200}}"#;
        let cfg = ExperimentConfig::from_json(text).unwrap();
        let DataConfig::Texture(spec) = &cfg.data else { panic!() };
        assert_eq!(spec.frames, 200);
        assert_eq!(spec.height, TextureSpec::default().height);
        cfg.validate().unwrap();
    }
}
