use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Parser, Debug)]
#[command(name = "dissolve-gp", version, about = "Model and compare dissolution profiles with logistic spline GPs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct Common {
    /// Master seed. Falls back to DISSOLVE_GP_SEED, then to a random seed that is echoed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output file; stdout when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Worker threads for Monte Carlo runs and leave-one-out folds (default: all cores).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Grid points for f2, δ and plotted curves.
    #[arg(long, global = true, default_value_t = 500)]
    pub grid_r: usize,
    /// Posterior paths per group.
    #[arg(long, global = true, default_value_t = 1000)]
    pub samples_m: usize,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    Lsgp,
    Ctgp,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestArg {
    F2,
    Delta,
    MsdTsong,
    MsdLsgp,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct Inputs {
    /// Long CSV (group,unit,time,value) or `bundled:dataset1` / `bundled:dataset2`.
    #[arg(long)]
    pub input: Option<String>,
    /// Reference group file (single group).
    #[arg(long)]
    pub reference: Option<String>,
    /// Test group file (single group).
    #[arg(long)]
    pub test: Option<String>,
    /// Group label to use when --input holds several groups.
    #[arg(long)]
    pub group: Option<String>,
    /// Files are wide (`unit,t1,...,tp`) instead of long.
    #[arg(long)]
    pub wide: bool,
}

#[derive(Subcommand, Debug, Clone, Serialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Command {
    /// Draw one Monte Carlo replicate of a preset scenario.
    Simulate {
        /// Preset name, e.g. logistic-f2=52.81-var=1.
        #[arg(long)]
        scenario: String,
        /// Replicate index.
        #[arg(long, default_value_t = 0)]
        run: usize,
    },
    /// Fit one group and emit a posterior curve series.
    Fit {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long, value_enum, default_value_t = Model::Lsgp)]
        model: Model,
        /// Sample the CTGP length-scales with Metropolis steps.
        #[arg(long)]
        sample_lengthscales: bool,
    },
    /// Compare a reference and a test group.
    Compare {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long, value_enum, default_value_t = Model::Lsgp)]
        model: Model,
        /// Comma-separated tests; defaults to all applicable.
        #[arg(long, value_enum, value_delimiter = ',')]
        tests: Vec<TestArg>,
        #[arg(long)]
        sample_lengthscales: bool,
    },
    /// Check the regulatory preconditions for the f2 statistic.
    Validity {
        #[command(flatten)]
        inputs: Inputs,
    },
    /// Leave-one-time-point-out CRPS for one group.
    CrpsLoo {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long, value_enum, default_value_t = Model::Lsgp)]
        model: Model,
    },
    /// Monte Carlo study over preset scenarios.
    McStudy {
        /// Preset names, or `all`.
        #[arg(long, value_delimiter = ',', required = true)]
        scenario: Vec<String>,
        #[arg(long)]
        mc_runs: Option<usize>,
        #[arg(long, value_enum, value_delimiter = ',', default_value = "lsgp")]
        model: Vec<Model>,
        /// Also run the LSGP MSD test.
        #[arg(long)]
        msd: bool,
        /// Also score leave-one-out CRPS on the test group.
        #[arg(long)]
        crps: bool,
    },
    /// Discrete f2 against the number of sampling points for two logistic curves.
    BiasSweep {
        /// Built-in curve pair.
        #[arg(long, value_enum, default_value_t = Figure::Left)]
        figure: Figure,
        /// Reference logistic as `alpha1,alpha2,beta`; overrides --figure.
        #[arg(long, value_delimiter = ',', num_args = 3, requires = "test_curve")]
        reference_curve: Option<Vec<f64>>,
        /// Test logistic as `alpha1,alpha2,beta`.
        #[arg(long, value_delimiter = ',', num_args = 3, requires = "reference_curve")]
        test_curve: Option<Vec<f64>>,
        #[arg(long, default_value_t = 5)]
        p_min: usize,
        #[arg(long, default_value_t = 100)]
        p_max: usize,
        #[arg(long, default_value_t = 10.0)]
        t1: f64,
        #[arg(long, default_value_t = 60.0)]
        tp: f64,
    },
    /// Joint fit of the covariate model across experiments.
    CovariateFit {
        /// Design CSV (experiment,substance,apparatus,medium,rpm,viscosity,vea); the built-in 12-experiment design when absent.
        #[arg(long)]
        design: Option<String>,
        /// Long CSV whose group labels are experiment ids.
        #[arg(long, conflicts_with = "synthetic")]
        input: Option<String>,
        /// Simulate a study from built-in coefficients instead of reading data.
        #[arg(long)]
        synthetic: bool,
        /// Units per experiment for --synthetic.
        #[arg(long, default_value_t = 3)]
        units: usize,
        #[arg(long, default_value_t = 4)]
        restarts: usize,
    },
    /// Predict an unseen experiment from a covariate fit.
    CovariatePredict {
        /// JSON written by covariate-fit.
        #[arg(long)]
        fit: String,
        #[arg(long)]
        medium: String,
        #[arg(long)]
        rpm: f64,
        #[arg(long)]
        viscosity: f64,
        #[arg(long)]
        vea: String,
        #[arg(long, default_value_t = 60.0)]
        t_max: f64,
    },
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Figure {
    Left,
    Right,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate { .. } => "simulate",
            Command::Fit { .. } => "fit",
            Command::Compare { .. } => "compare",
            Command::Validity { .. } => "validity",
            Command::CrpsLoo { .. } => "crps-loo",
            Command::McStudy { .. } => "mc-study",
            Command::BiasSweep { .. } => "bias-sweep",
            Command::CovariateFit { .. } => "covariate-fit",
            Command::CovariatePredict { .. } => "covariate-predict",
        }
    }
}
