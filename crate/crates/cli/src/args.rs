use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use dustmns::design::DesignConfig;
use dustmns::design::{Measurement, RankingMode};
use dustmns::efficiency::TableKind;
use dustmns::montecarlo::{DesignLabel, SynthSpec, ThresholdRule};
use dustmns::sampler::SizeField;

use crate::error::{CliError, CliResult};
use crate::output::Format;

#[derive(Debug, Parser)]
#[command(
    name = "dustmns",
    version,
    about = "Spatially repulsive maxima-nominated sampling toolkit"
)]
pub struct Cli {
    /// Seed for every random step of the run.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory (default `dustmns-out`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// JSON run configuration; flags override its keys.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load a frame and report its diagnostics.
    Validate(ValidateArgs),
    /// Regenerate the efficiency and bias tables.
    Tables(TablesArgs),
    /// Estimate the exceedance proportion from counts or one executed survey.
    Estimate(EstimateArgs),
    /// Run a Monte Carlo design comparison.
    Simulate(SimulateArgs),
    /// Rank candidate set sizes for a prior exceedance level.
    Advise(AdviseArgs),
    /// Critical exceedance levels for a list of set sizes.
    Thetastar(ThetaStarArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Validate(_) => "validate",
            Command::Tables(_) => "tables",
            Command::Estimate(_) => "estimate",
            Command::Simulate(_) => "simulate",
            Command::Advise(_) => "advise",
            Command::Thetastar(_) => "thetastar",
        }
    }
}

/// Fills every unset field of `self` from `base`.
pub trait Overlay {
    fn overlay(self, base: Self) -> Self;
}

macro_rules! overlay_fields {
    ($ty:ty { $($field:ident),* $(,)? }) => {
        impl Overlay for $ty {
            fn overlay(self, base: Self) -> Self {
                Self { $($field: self.$field.or(base.$field)),* }
            }
        }
    };
}

fn parse_json_enum<T: for<'de> Deserialize<'de>>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

fn parse_design(s: &str) -> Result<DesignLabel, String> {
    parse_json_enum(s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TableChoice {
    Lambda,
    Re,
    ThetaStar,
    #[serde(alias = "bias")]
    ExactBias,
    All,
}

impl TableChoice {
    pub fn kinds(self) -> Vec<TableKind> {
        match self {
            TableChoice::Lambda => vec![TableKind::Lambda],
            TableChoice::Re => vec![TableKind::Re],
            TableChoice::ThetaStar => vec![TableKind::ThetaStar],
            TableChoice::ExactBias => vec![TableKind::ExactBias],
            TableChoice::All => TableKind::ALL.to_vec(),
        }
    }
}

fn parse_table(s: &str) -> Result<TableChoice, String> {
    parse_json_enum(&s.replace('-', "_"))
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidateArgs {
    #[arg(long)]
    pub population: Option<PathBuf>,
    #[arg(long)]
    pub adjacency: Option<PathBuf>,
    /// Quantile of p defining the threshold (default 0.9).
    #[arg(long)]
    pub quantile: Option<f64>,
    /// Fixed threshold; overrides the quantile.
    #[arg(long)]
    pub threshold: Option<f64>,
}
overlay_fields!(ValidateArgs {
    population,
    adjacency,
    quantile,
    threshold
});

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TablesArgs {
    /// lambda, re, theta_star, exact_bias (alias bias) or all.
    #[arg(long, value_parser = parse_table)]
    pub which: Option<TableChoice>,
    #[arg(long, value_delimiter = ',')]
    pub thetas: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub ks: Option<Vec<u32>>,
    #[arg(long, value_delimiter = ',')]
    pub ns: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub eta0s: Option<Vec<f64>>,
    /// Mean lags for the lambda table, paired element-wise with `--ns`.
    #[arg(long, value_delimiter = ',')]
    pub mean_lags: Option<Vec<f64>>,
}
overlay_fields!(TablesArgs {
    which,
    thetas,
    ks,
    ns,
    eta0s,
    mean_lags
});

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CiChoice {
    Delta,
    DeltaBc,
    Bootstrap,
}

/// Survey executed once on a frame before estimation.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurveySpec {
    pub design: DesignConfig,
    /// When set, replaces the design's threshold by this quantile of p.
    #[serde(default)]
    pub quantile: Option<f64>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimateArgs {
    /// Number of exceeding nominees.
    #[arg(long)]
    pub rn: Option<usize>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub k: Option<usize>,
    /// Misranking strength for the interpolation model.
    #[arg(long)]
    pub tau: Option<f64>,
    /// JSON file holding a k x k doubly stochastic misranking matrix.
    #[arg(long)]
    pub matrix: Option<PathBuf>,
    #[arg(long)]
    pub level: Option<f64>,
    /// Interval reported in the estimate record (default delta_bc).
    #[arg(long, value_enum)]
    pub ci: Option<CiChoice>,
    #[arg(long)]
    pub bootstrap_replicates: Option<usize>,
    #[arg(long)]
    pub population: Option<PathBuf>,
    #[arg(long)]
    pub adjacency: Option<PathBuf>,
    /// Survey to execute on the frame; config file only.
    #[arg(skip)]
    pub survey: Option<SurveySpec>,
}
overlay_fields!(EstimateArgs {
    rn,
    n,
    k,
    tau,
    matrix,
    level,
    ci,
    bootstrap_replicates,
    population,
    adjacency,
    survey,
});

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum FrameSource {
    Files {
        population: PathBuf,
        adjacency: PathBuf,
    },
    Synth(SynthSpec),
}

/// Grid of study cells; each combination of the list fields is one cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudySpec {
    pub n: Vec<usize>,
    pub k: Vec<usize>,
    #[serde(default = "default_measurements")]
    pub measurement: Vec<Measurement>,
    pub eta0: Vec<f64>,
    #[serde(default)]
    pub size_field: SizeField,
    #[serde(default = "default_max_lag")]
    pub max_lag: Option<u32>,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default = "default_threshold")]
    pub threshold: ThresholdRule,
    #[serde(default = "default_designs")]
    pub designs: Vec<DesignLabel>,
    #[serde(default = "default_imperfect_ranking")]
    pub imperfect_ranking: RankingMode,
    #[serde(default)]
    pub imperfect_tau: Option<f64>,
}

fn default_measurements() -> Vec<Measurement> {
    vec![Measurement::Exact]
}

fn default_max_lag() -> Option<u32> {
    Some(dustmns::sampler::DEFAULT_MAX_LAG)
}

fn default_replicates() -> usize {
    5000
}

fn default_threshold() -> ThresholdRule {
    ThresholdRule::Quantile { q: 0.9 }
}

fn default_designs() -> Vec<DesignLabel> {
    DesignLabel::ALL.to_vec()
}

fn default_imperfect_ranking() -> RankingMode {
    RankingMode::Auxiliary
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateArgs {
    /// Overrides the study's replicate count.
    #[arg(long)]
    pub replicates: Option<usize>,
    /// Overrides the study's design list (comma separated).
    #[arg(long, value_delimiter = ',', value_parser = parse_design)]
    pub designs: Option<Vec<DesignLabel>>,
    #[arg(skip)]
    pub frame: Option<FrameSource>,
    #[arg(skip)]
    pub study: Option<StudySpec>,
}
overlay_fields!(SimulateArgs {
    replicates,
    designs,
    frame,
    study
});

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdviseArgs {
    /// Prior guess of the exceedance proportion.
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    pub ks: Option<Vec<u32>>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub eta0: Option<f64>,
    #[arg(long)]
    pub mean_lag: Option<f64>,
    #[arg(long)]
    pub max_k: Option<u32>,
    #[arg(long)]
    pub max_bias: Option<f64>,
}
overlay_fields!(AdviseArgs {
    theta,
    ks,
    n,
    eta0,
    mean_lag,
    max_k,
    max_bias
});

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThetaStarArgs {
    #[arg(long, value_delimiter = ',')]
    pub ks: Option<Vec<u32>>,
}
overlay_fields!(ThetaStarArgs { ks });

/// Contents of a `--config` file.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
    pub validate: Option<ValidateArgs>,
    pub tables: Option<TablesArgs>,
    pub estimate: Option<EstimateArgs>,
    pub simulate: Option<SimulateArgs>,
    pub advise: Option<AdviseArgs>,
    pub thetastar: Option<ThetaStarArgs>,
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut config: RunConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        config.resolve_paths(path.parent().unwrap_or(Path::new("")));
        Ok(config)
    }

    /// Makes relative input paths relative to the config file's directory.
    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(path) = p {
                if path.is_relative() {
                    *path = base.join(&*path);
                }
            }
        };
        if let Some(v) = &mut self.validate {
            fix(&mut v.population);
            fix(&mut v.adjacency);
        }
        if let Some(e) = &mut self.estimate {
            fix(&mut e.population);
            fix(&mut e.adjacency);
            fix(&mut e.matrix);
        }
        if let Some(FrameSource::Files {
            population,
            adjacency,
        }) = self.simulate.as_mut().and_then(|s| s.frame.as_mut())
        {
            for p in [population, adjacency] {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
    }
}
