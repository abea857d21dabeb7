use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use circadia::simulate::Study;
use circadia::Method;

#[derive(Parser, Debug)]
#[command(
    name = "circadia",
    version,
    about = "Two-stage trigonometric regression for circadian data"
)]
pub struct Cli {
    /// Worker threads: a positive count or `auto`. Falls back to
    /// CIRCADIA_THREADS, then to one thread per core.
    #[arg(long, global = true, value_name = "N|auto")]
    pub threads: Option<String>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Estimate population-level parameters for every cohort.
    Fit(AnalysisArgs),
    /// Estimate and run bootstrap hypothesis tests.
    Test(TestArgs),
    /// Forward selection of the harmonic order.
    Select(SelectArgs),
    /// Run a simulation study and export power / type-I curves.
    Simulate(SimulateArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Sts,
    Rts,
    Both,
}

impl MethodArg {
    pub fn methods(self) -> Vec<Method> {
        match self {
            MethodArg::Sts => vec![Method::Sts],
            MethodArg::Rts => vec![Method::Rts],
            MethodArg::Both => Method::BOTH.to_vec(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum TestArg {
    ZeroAmplitudes,
    EqualMidlines,
    EqualRhythms,
    All,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum StudyArg {
    Single,
    Two,
}

impl From<StudyArg> for Study {
    fn from(s: StudyArg) -> Study {
        match s {
            StudyArg::Single => Study::Single,
            StudyArg::Two => Study::TwoCohort,
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct AnalysisArgs {
    /// CSV file with columns cohort,subject,time,value.
    #[arg(long)]
    pub input: PathBuf,

    /// Harmonic order K.
    #[arg(long, conflicts_with = "select")]
    pub order: Option<usize>,

    /// Choose K by forward selection instead of fixing it.
    #[arg(long, requires = "max_order")]
    pub select: bool,

    #[arg(long)]
    pub max_order: Option<usize>,

    #[arg(long, value_enum, default_value = "both")]
    pub method: MethodArg,

    /// Bootstrap replicates per test.
    #[arg(long, default_value_t = 199)]
    pub replicates: usize,

    #[arg(long, default_value_t = 1)]
    pub seed: u64,

    /// Directory for report.json, report.txt and plot data.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct TestArgs {
    #[command(flatten)]
    pub analysis: AnalysisArgs,

    #[arg(long, value_enum, default_value = "all")]
    pub test: TestArg,
}

#[derive(Args, Debug, Clone)]
pub struct SelectArgs {
    #[arg(long)]
    pub input: PathBuf,

    #[arg(long, default_value_t = 6)]
    pub max_order: usize,

    #[arg(long, value_enum, default_value = "both")]
    pub method: MethodArg,

    #[arg(long, default_value_t = 199)]
    pub replicates: usize,

    #[arg(long, default_value_t = 1)]
    pub seed: u64,

    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct SimulateArgs {
    #[arg(long, value_enum, default_value = "single")]
    pub study: StudyArg,

    /// Design factors, e.g. `K1,snr=high,size=large,var=high[,amp=q4]`.
    #[arg(long, default_value = "K1,snr=high,size=large,var=high")]
    pub setting: String,

    #[arg(long, default_value_t = 200)]
    pub trials: usize,

    #[arg(long, default_value_t = 199)]
    pub replicates: usize,

    #[arg(long, default_value_t = 1)]
    pub seed: u64,

    /// Dataset variants to run (1-4).
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4")]
    pub datasets: Vec<u8>,

    /// Use 1000 trials and 1000 replicates.
    #[arg(long)]
    pub full_scale: bool,

    /// Confidence level of the DKW bands.
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,

    /// Also write the generated data of trial 0 as CSV.
    #[arg(long)]
    pub dump_data: bool,

    #[arg(long)]
    pub out: Option<PathBuf>,
}
