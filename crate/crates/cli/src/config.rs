use std::fmt;
use std::path::{Path, PathBuf};

use replikit::pipelines::PipelineConfig;
use replikit::{DistributionSource, SourceSpec};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Run,
    Paired,
    Bench,
    Gen,
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Command::Run => "run",
            Command::Paired => "paired",
            Command::Bench => "bench",
            Command::Gen => "gen",
        };
        f.write_str(s)
    }
}

fn d_trials() -> usize {
    50
}
fn d_out() -> PathBuf {
    PathBuf::from("out")
}
fn d_plot_samples() -> usize {
    1000
}
fn d_gen_samples() -> usize {
    2000
}
fn d_repetitions() -> usize {
    3
}

/// Everything needed to regenerate one invocation.
///
/// `budget_scale`, when set, replaces `pipeline.budget_scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub command: Option<Command>,
    pub source: SourceSpec,
    pub pipeline: PipelineConfig,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "d_trials")]
    pub trials: usize,
    #[serde(default)]
    pub budget_scale: Option<f64>,
    #[serde(default = "d_out")]
    pub out: PathBuf,
    /// Points drawn for the scatter plot.
    #[serde(default = "d_plot_samples")]
    pub plot_samples: usize,
    /// Rows written by `gen`.
    #[serde(default = "d_gen_samples")]
    pub gen_samples: usize,
    /// Repetitions per stage in `bench`.
    #[serde(default = "d_repetitions")]
    pub bench_repetitions: usize,
}

impl RunConfig {
    pub fn new(source: SourceSpec, pipeline: PipelineConfig) -> Self {
        Self {
            command: None,
            source,
            pipeline,
            master_seed: 0,
            trials: d_trials(),
            budget_scale: None,
            out: d_out(),
            plot_samples: d_plot_samples(),
            gen_samples: d_gen_samples(),
            bench_repetitions: d_repetitions(),
        }
    }

    /// Read a config; a relative data-file path is taken relative to the
    /// config file and stored absolute.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("cannot read config {}: {e}", path.display())))?;
        let mut config: RunConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
        if let SourceSpec::FileCsv { path: data, .. } = &mut config.source {
            if data.is_relative() {
                let base = path.parent().unwrap_or(Path::new("."));
                *data = base.join(&*data);
            }
            *data = data
                .canonicalize()
                .map_err(|e| CliError::Io(format!("cannot open data file {}: {e}", data.display())))?;
        }
        Ok(config)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_value(self).expect("serializable").to_string()
    }

    pub fn effective_pipeline(&self) -> PipelineConfig {
        let mut p = self.pipeline.clone();
        if let Some(s) = self.budget_scale {
            p.budget_scale = s;
        }
        p
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if let Some(s) = self.budget_scale {
            if !(s > 0.0 && s.is_finite()) {
                return Err(CliError::Usage(format!("budget_scale must be positive, got {s}")));
            }
        }
        if self.command == Some(Command::Paired) && self.trials < 2 {
            return Err(CliError::Usage(format!("paired needs at least 2 trials, got {}", self.trials)));
        }
        if self.command == Some(Command::Bench) && self.bench_repetitions == 0 {
            return Err(CliError::Usage("bench_repetitions must be at least 1".into()));
        }
        self.effective_pipeline().validate().map_err(CliError::from)
    }

    pub fn resolve_source(&self) -> Result<DistributionSource, CliError> {
        DistributionSource::from_spec(&self.source, self.pipeline.family).map_err(CliError::from)
    }
}
