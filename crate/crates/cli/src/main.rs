//! `expca`: fit shared principal axes on designed training data, project and
//! classify new observations, and run the ANOVA, enrichment and clustering
//! side analyses.

mod commands;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use expca_core::PolicySpec;

#[derive(Parser, Debug)]
#[command(name = "expca", version, about = "Experiment-aware principal component analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit axes on group means (or raw observations) and write a model file.
    Fit(FitArgs),
    /// Project observations onto a model and write scaled (or raw) scores.
    Project(ProjectArgs),
    /// Assign observations to the nearest training unit in scaled-score space.
    Classify(ClassifyArgs),
    /// Probe + group ANOVA per variable.
    Anova(AnovaArgs),
    /// Binomial keyword enrichment of a variable selection.
    Enrich(EnrichArgs),
    /// Ward clustering of centered observations.
    Cluster(ClusterArgs),
    /// Observation and variable scaled scores on shared axes.
    Biplot(BiplotArgs),
    /// RMS over groups of the within-group spread in (sPC1, sPC2).
    Fluctuation(FluctuationArgs),
    /// Two-column coordinates for one pair of axes.
    Plot(PlotArgs),
}

#[derive(Args, Debug)]
struct DesignArgs {
    /// Tab-separated observation_id, group.
    #[arg(long)]
    design: PathBuf,
    /// The design file starts with a header row.
    #[arg(long)]
    design_header: bool,
    /// global-mean | control:<group> | external:<path>
    #[arg(long, default_value = "global-mean", value_parser = parse_policy)]
    reference: PolicySpec,
}

#[derive(Args, Debug)]
struct VariableFilterArgs {
    /// Restrict to the variable ids listed one per line.
    #[arg(long, conflicts_with = "anova")]
    variables: Option<PathBuf>,
    /// Restrict to ANOVA-positive variables of this probe table.
    #[arg(long)]
    anova: Option<PathBuf>,
    /// p-value cut for --anova.
    #[arg(long, default_value_t = expca_core::stats::DEFAULT_THRESHOLD, value_parser = parse_open_unit)]
    threshold: f64,
}

#[derive(Args, Debug)]
struct FitArgs {
    /// Expression matrix: variables in rows, observations in columns.
    #[arg(long)]
    matrix: PathBuf,
    #[command(flatten)]
    design: DesignArgs,
    /// Train only on these groups (repeatable; default all).
    #[arg(long = "include-group", conflicts_with = "exclude")]
    include: Vec<String>,
    /// Leave these groups out of training (repeatable).
    #[arg(long = "exclude-group")]
    exclude: Vec<String>,
    /// Use every observation of these groups as its own training row.
    #[arg(long = "raw-group")]
    raw: Vec<String>,
    #[command(flatten)]
    filter: VariableFilterArgs,
    /// Keep at most this many axes.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    max_rank: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ProjectionArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    matrix: PathBuf,
    /// Center on a reference from this study instead of the model's own.
    #[arg(long, value_parser = parse_policy, requires = "design")]
    reference: Option<PolicySpec>,
    /// Design for --reference.
    #[arg(long)]
    design: Option<PathBuf>,
    #[arg(long)]
    design_header: bool,
}

#[derive(Args, Debug)]
struct ProjectArgs {
    #[command(flatten)]
    input: ProjectionArgs,
    /// Write unscaled scores Y instead of Z.
    #[arg(long)]
    raw: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ClassifyArgs {
    #[command(flatten)]
    input: ProjectionArgs,
    /// Number of leading axes used for distances.
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u64).range(1..))]
    axes: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct AnovaArgs {
    /// Rows: variable_id, probe_id, then one value per observation.
    #[arg(long)]
    probes: PathBuf,
    #[arg(long)]
    design: PathBuf,
    #[arg(long)]
    design_header: bool,
    #[arg(long, default_value_t = expca_core::stats::DEFAULT_THRESHOLD, value_parser = parse_open_unit)]
    threshold: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum DirectionArg {
    Largest,
    Smallest,
}

#[derive(Args, Debug)]
struct EnrichArgs {
    /// Tab-separated variable_id, keyword pairs.
    #[arg(long)]
    annotations: PathBuf,
    /// Explicit selection, one variable id per line.
    #[arg(long, conflicts_with_all = ["model", "axis", "direction", "top"])]
    selection: Option<PathBuf>,
    /// Select the top variables of a model axis.
    #[arg(long, required_unless_present = "selection")]
    model: Option<PathBuf>,
    /// 1-based axis for the model selection.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    axis: u64,
    #[arg(long, value_enum, default_value = "largest")]
    direction: DirectionArg,
    /// Selection size (default 500 for largest, 100 for smallest).
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    top: Option<u64>,
    /// Universe of variable ids, one per line (default: the model's variables).
    #[arg(long)]
    universe: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ClusterArgs {
    #[arg(long)]
    matrix: PathBuf,
    #[command(flatten)]
    design: DesignArgs,
    #[command(flatten)]
    filter: VariableFilterArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BiplotArgs {
    #[command(flatten)]
    input: ProjectionArgs,
    /// Factor applied to observation rows (≥ 1).
    #[arg(long, default_value_t = 1.0, value_parser = parse_multiplier)]
    multiplier: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ModeArg {
    /// 2-D scatter SD about each group centroid.
    Scatter,
    /// SD of the distances to each group centroid.
    DistanceSd,
}

#[derive(Args, Debug)]
struct FluctuationArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    matrix: PathBuf,
    /// Groups of the projected observations.
    #[arg(long)]
    design: PathBuf,
    #[arg(long)]
    design_header: bool,
    #[arg(long, value_enum, default_value = "scatter")]
    mode: ModeArg,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PlotArgs {
    #[command(flatten)]
    input: ProjectionArgs,
    /// Pair of 1-based axes, e.g. 1,2.
    #[arg(long, default_value = "1,2", value_parser = parse_axes)]
    axes: (usize, usize),
    /// Also emit variable rows.
    #[arg(long)]
    with_variables: bool,
    /// Factor applied to observation rows (≥ 1).
    #[arg(long, default_value_t = 1.0, value_parser = parse_multiplier)]
    multiplier: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_policy(s: &str) -> Result<PolicySpec, String> {
    s.parse().map_err(|e: expca_core::ExpcaError| e.to_string())
}

fn parse_open_unit(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if v > 0.0 && v < 1.0 {
        Ok(v)
    } else {
        Err(format!("{v} is outside (0, 1)"))
    }
}

fn parse_multiplier(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if v.is_finite() && v >= 1.0 {
        Ok(v)
    } else {
        Err(format!("multiplier must be a finite number ≥ 1, got {s}"))
    }
}

fn parse_axes(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s.split_once(',').ok_or("expected two axes like 1,2")?;
    let a: usize = a.trim().parse().map_err(|_| format!("bad axis `{a}`"))?;
    let b: usize = b.trim().parse().map_err(|_| format!("bad axis `{b}`"))?;
    if a == 0 || b == 0 {
        return Err("axes are numbered from 1".into());
    }
    Ok((a, b))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Fit(a) => commands::fit(a),
        Command::Project(a) => commands::project(a),
        Command::Classify(a) => commands::classify(a),
        Command::Anova(a) => commands::anova(a),
        Command::Enrich(a) => commands::enrich(a),
        Command::Cluster(a) => commands::cluster(a),
        Command::Biplot(a) => commands::biplot(a),
        Command::Fluctuation(a) => commands::fluctuation(a),
        Command::Plot(a) => commands::plot(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("expca: {e}");
            ExitCode::from(1)
        }
    }
}
