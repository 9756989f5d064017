use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use crossblock::pca::PcaScale;
use crossblock::report::PlotKind;
use crossblock::Method;

#[derive(Debug, Parser)]
#[command(name = "crossblock", version, about = "PLS and CCA with resampling inference and reproducibility checks")]
pub struct Cli {
    #[command(flatten)]
    pub shared: Shared,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Pls,
    Cca,
    Both,
}

impl MethodArg {
    pub fn methods(self) -> Vec<Method> {
        match self {
            MethodArg::Pls => vec![Method::Pls],
            MethodArg::Cca => vec![Method::Cca],
            MethodArg::Both => vec![Method::Pls, Method::Cca],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScaleArg {
    Correlation,
    Covariance,
}

impl From<ScaleArg> for PcaScale {
    fn from(s: ScaleArg) -> Self {
        match s {
            ScaleArg::Correlation => PcaScale::Correlation,
            ScaleArg::Covariance => PcaScale::Covariance,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PlotArg {
    DetectabilityBars,
    WeightIntervals,
    Eigenspectrum,
    ZDistributions,
}

impl From<PlotArg> for PlotKind {
    fn from(p: PlotArg) -> Self {
        match p {
            PlotArg::DetectabilityBars => PlotKind::DetectabilityBars,
            PlotArg::WeightIntervals => PlotKind::WeightIntervals,
            PlotArg::Eigenspectrum => PlotKind::Eigenspectrum,
            PlotArg::ZDistributions => PlotKind::ZDistributions,
        }
    }
}

/// Flags accepted by every subcommand. Unset flags fall back to the config
/// file, then to built-in defaults.
#[derive(Debug, Args)]
pub struct Shared {
    /// TOML file with experiment settings
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub method: Option<MethodArg>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub permutations: Option<usize>,
    #[arg(long, global = true)]
    pub bootstraps: Option<usize>,
    #[arg(long, global = true)]
    pub splits: Option<usize>,
    /// Subsamples per sample size
    #[arg(long, global = true)]
    pub iterations: Option<usize>,
    /// Comma-separated subsample sizes
    #[arg(long, global = true, value_delimiter = ',')]
    pub sample_sizes: Option<Vec<usize>>,
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    /// Replace X by this many principal-component scores
    #[arg(long, global = true)]
    pub pca_components: Option<usize>,
    #[arg(long, global = true, value_enum)]
    pub pca_scale: Option<ScaleArg>,
    #[arg(long, global = true, default_value = "crossblock-out")]
    pub out_dir: PathBuf,
    #[arg(long, global = true, value_enum, default_value = "json")]
    pub format: FormatArg,
    /// Worker threads (results do not depend on this)
    #[arg(long, global = true, env = "CROSSBLOCK_THREADS")]
    pub threads: Option<usize>,
    /// Also write long-format plot data of this kind (repeatable)
    #[arg(long, global = true, value_enum)]
    pub plot: Vec<PlotArg>,
    /// Record the creation time in the report (breaks byte-identical reruns)
    #[arg(long, global = true)]
    pub stamp: bool,
}

#[derive(Debug, Args)]
pub struct Inputs {
    /// CSV file for the X block (rows = observations)
    #[arg(long)]
    pub x: PathBuf,
    /// CSV file for the Y block
    #[arg(long)]
    pub y: PathBuf,
    /// Input files have no header row
    #[arg(long)]
    pub no_header: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a simulated dataset
    Simulate {
        #[command(subcommand)]
        kind: SimulateKind,
    },
    /// Full-sample analysis: fit, permutation, Bartlett, bootstrap, reproducibility
    Fit {
        #[command(flatten)]
        inputs: Inputs,
        /// Also compute the permuted-Y reproducibility null
        #[arg(long)]
        null_calibrate: bool,
    },
    /// Permutation test of every latent variable
    Permute {
        #[command(flatten)]
        inputs: Inputs,
    },
    /// Bootstrap confidence intervals for the scaled weights
    Bootstrap {
        #[command(flatten)]
        inputs: Inputs,
    },
    /// Train/test and split-half reproducibility
    Reproduce {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long)]
        null_calibrate: bool,
    },
    /// Subsampling sweeps
    Sweep {
        #[command(subcommand)]
        kind: SweepArg,
    },
    /// Principal components of the X block
    Pca {
        #[command(subcommand)]
        action: PcaAction,
    },
    /// Write plot data from an existing JSON report
    Plot {
        #[arg(long)]
        report: PathBuf,
        #[arg(long, value_enum, required = true)]
        kind: Vec<PlotArg>,
    },
}

#[derive(Debug, Subcommand)]
pub enum SimulateKind {
    /// Independent standard-normal blocks
    Null {
        #[arg(long, default_value_t = 10_000)]
        n: usize,
        #[arg(long, default_value_t = 10)]
        p: usize,
        #[arg(long, default_value_t = 5)]
        q: usize,
    },
    /// Relevant-subspace model (defaults: 50 X, 4 Y, two components)
    Subspace {
        #[arg(long, default_value_t = 10_000)]
        n: usize,
        /// TOML file with a full simulation spec (overrides --n)
        #[arg(long)]
        spec: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum SweepArg {
    /// Detectability per LV over subsamples of the given data
    Detectability {
        #[command(flatten)]
        inputs: Inputs,
        /// Also run the permuted-Y self-check
        #[arg(long)]
        null_check: bool,
    },
    /// Detectability on a generated null population
    FalsePositive {
        #[arg(long, default_value_t = 10_000)]
        n: usize,
        #[arg(long, default_value_t = 10)]
        p: usize,
        #[arg(long, default_value_t = 5)]
        q: usize,
    },
    /// Reproducibility z per LV over subsamples
    Reproducibility {
        #[command(flatten)]
        inputs: Inputs,
    },
}

#[derive(Debug, Args)]
pub struct PcaInput {
    /// CSV file for the block
    #[arg(long)]
    pub x: PathBuf,
    #[arg(long)]
    pub no_header: bool,
    /// Variance fraction that selects the retained count
    #[arg(long, default_value_t = 0.98)]
    pub variance_target: f64,
}

#[derive(Debug, Subcommand)]
pub enum PcaAction {
    /// Eigenspectrum and retained-component count
    Fit {
        #[command(flatten)]
        input: PcaInput,
    },
    /// Write standardized component scores to scores.csv
    Scores {
        #[command(flatten)]
        input: PcaInput,
    },
    /// Subsample stability of the leading components, aligned and unaligned
    Stability {
        #[command(flatten)]
        input: PcaInput,
    },
}
