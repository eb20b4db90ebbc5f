use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use koopman_prune::bench::{run_bench, BenchConfig};
use koopman_prune::data::{format_f64, simulate, DuffingParams, TrajectoryDataset};
use koopman_prune::dictionary::{build_dictionary, Dictionary, DictionarySpec};
use koopman_prune::edmd::{
    evaluate_eigenfunction_on_grid, koopman_eigenfunctions, lift, EigenfunctionSet, GridSpec,
    LiftedData,
};
use koopman_prune::pruning::{
    restrict_to_report, run_pruning, PruneConfig, PruneMethod, PruneReport,
};
use koopman_prune::Error;

const THREADS_ENV: &str = "KOOPMAN_PRUNE_THREADS";

/// Prune Koopman dictionaries to approximately invariant subspaces.
#[derive(Debug, Parser)]
#[command(
    name = "koopman-prune",
    version,
    args_conflicts_with_subcommands = true
)]
struct Cli {
    /// Re-run the command recorded in a `config.json` echo.
    #[arg(long)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Debug, Clone, Subcommand, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
enum Command {
    /// Simulate the damped Duffing map from random initial conditions.
    Simulate(SimulateArgs),
    /// Build a polynomial + thin-plate-spline dictionary from a dataset.
    Dict(DictArgs),
    /// Prune a dictionary on a dataset.
    Prune(PruneArgs),
    /// Time from-scratch against rank-one pruning over dictionary sizes.
    Bench(BenchArgs),
    /// Export the leading nontrivial eigenfunction before and after pruning.
    Eigfun(EigfunArgs),
}

impl Command {
    fn out(&self) -> &Path {
        match self {
            Command::Simulate(a) => &a.out,
            Command::Dict(a) => &a.out,
            Command::Prune(a) => &a.out,
            Command::Bench(a) => &a.out,
            Command::Eigfun(a) => &a.out,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
struct SimulateArgs {
    #[arg(long = "traj")]
    n_traj: usize,
    #[arg(long)]
    steps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.01)]
    dt: f64,
    #[arg(long, default_value_t = 0.5)]
    damping: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
struct DictSpecArgs {
    #[arg(long, default_value_t = 1)]
    poly_degree: u32,
    #[arg(long, default_value_t = 25)]
    centers: usize,
    #[arg(long, default_value_t = 0)]
    kmeans_seed: u64,
    #[arg(long, default_value_t = 50)]
    kmeans_iters: usize,
}

impl DictSpecArgs {
    fn spec(&self) -> DictionarySpec {
        DictionarySpec {
            poly_degree: self.poly_degree,
            n_centers: self.centers,
            kmeans_seed: self.kmeans_seed,
            kmeans_iters: self.kmeans_iters,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
struct DictArgs {
    /// Dataset directory written by `simulate`.
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    #[serde(flatten)]
    spec: DictSpecArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
struct DictSource {
    /// Dictionary JSON; built from the dataset when omitted.
    #[arg(long)]
    dict: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    spec: DictSpecArgs,
}

impl DictSource {
    fn resolve(&self, dataset: &TrajectoryDataset) -> Result<Dictionary> {
        match &self.dict {
            Some(p) => Dictionary::load(p, Some(dataset.state_dim()))
                .with_context(|| format!("reading dictionary {}", p.display())),
            None => Ok(build_dictionary(&self.spec.spec(), dataset)?),
        }
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
struct PruneArgs {
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    #[serde(flatten)]
    dict: DictSource,
    #[arg(long, default_value = "spv-rank1")]
    method: PruneMethod,
    #[arg(long, default_value_t = 0.01)]
    epsilon: f64,
    #[arg(long, default_value_t = 1)]
    min_dim: usize,
    #[arg(long, default_value_t = koopman_prune::pruning::DEFAULT_REORTH_THRESHOLD)]
    reorth_threshold: f64,
    #[arg(long, default_value_t = koopman_prune::pruning::DEFAULT_FULL_RECOMPUTE_PERIOD)]
    full_recompute_period: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
struct BenchArgs {
    #[arg(long)]
    data: PathBuf,
    /// Dictionary sizes (polynomial terms plus RBF centers).
    #[arg(long, value_delimiter = ',', default_values_t = koopman_prune::bench::DEFAULT_SIZES)]
    sizes: Vec<usize>,
    #[arg(long, default_value_t = 1)]
    poly_degree: u32,
    #[arg(long, default_value_t = 0)]
    kmeans_seed: u64,
    #[arg(long, default_value_t = 50)]
    kmeans_iters: usize,
    /// Pruning steps per timed run.
    #[arg(long, default_value_t = 10)]
    prune_steps: usize,
    #[arg(long, default_value_t = 3)]
    reps: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
struct EigfunArgs {
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    #[serde(flatten)]
    dict: DictSource,
    /// Existing prune report to use instead of pruning again.
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long, default_value = "spv-rank1")]
    method: PruneMethod,
    #[arg(long, default_value_t = 0.01)]
    epsilon: f64,
    /// Prune to this dimension (sets the dimension floor and epsilon = 0 unless given).
    #[arg(long)]
    target_dim: Option<usize>,
    #[arg(long, default_value = "100x100")]
    grid: String,
    #[arg(long = "box", default_value = "-2,2,-2,2", allow_hyphen_values = true)]
    bbox: String,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    configure_threads()?;
    let command = match (cli.config, cli.command) {
        (Some(path), None) => {
            let text =
                fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str::<Command>(&text)
                .with_context(|| format!("parsing {}", path.display()))?
        }
        (None, Some(c)) => c,
        _ => bail!("give a subcommand or --config FILE"),
    };
    let out = command.out().to_path_buf();
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    fs::write(
        out.join("config.json"),
        serde_json::to_string_pretty(&command)?,
    )?;

    match &command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Dict(a) => cmd_dict(a),
        Command::Prune(a) => cmd_prune(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Eigfun(a) => cmd_eigfun(a),
    }
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|n| *n > 0)
            .with_context(|| format!("{THREADS_ENV} must be a positive integer, got {v:?}"))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()?;
    }
    Ok(())
}

fn load_dataset(dir: &Path) -> Result<TrajectoryDataset> {
    TrajectoryDataset::load(dir).with_context(|| format!("loading dataset {}", dir.display()))
}

fn cmd_simulate(a: &SimulateArgs) -> Result<()> {
    let p = DuffingParams {
        dt: a.dt,
        damping: a.damping,
        ..DuffingParams::default()
    };
    let ds = simulate(&p, a.n_traj, a.steps, a.seed)?;
    ds.save(&a.out)?;
    println!("wrote {} snapshot pairs to {}", ds.len(), a.out.display());
    Ok(())
}

fn cmd_dict(a: &DictArgs) -> Result<()> {
    let ds = load_dataset(&a.data)?;
    let dict = build_dictionary(&a.spec.spec(), &ds)?;
    dict.save(&a.out.join("dictionary.json"))?;
    println!("dictionary with {} entries", dict.len());
    Ok(())
}

fn prune_config(method: PruneMethod, epsilon: f64, min_dim: usize) -> PruneConfig {
    PruneConfig::new(method, epsilon).with_min_dim(min_dim)
}

/// Runs pruning; an aborted run still leaves its partial report in `out`.
fn prune_and_save(lifted: &LiftedData, config: &PruneConfig, out: &Path) -> Result<PruneReport> {
    match run_pruning(lifted, config) {
        Ok(report) => {
            report.save(&out.join("report.json"))?;
            Ok(report)
        }
        Err(Error::Aborted { report, cause }) => {
            report.save(&out.join("report.json"))?;
            bail!("pruning aborted at dimension {}: {cause}", report.final_dim)
        }
        Err(e) => Err(e.into()),
    }
}

fn write_coeffs(path: &Path, report: &PruneReport) -> Result<()> {
    let mut text = String::new();
    for row in &report.final_coeffs {
        let cells: Vec<String> = row.iter().map(|v| format_f64(*v)).collect();
        text.push_str(&cells.join(","));
        text.push('\n');
    }
    fs::write(path, text)?;
    Ok(())
}

fn cmd_prune(a: &PruneArgs) -> Result<()> {
    let ds = load_dataset(&a.data)?;
    let dict = a.dict.resolve(&ds)?;
    dict.save(&a.out.join("dictionary.json"))?;
    let lifted = lift(&ds, &dict)?;
    let mut config = prune_config(a.method, a.epsilon, a.min_dim);
    config.reorth_threshold = a.reorth_threshold;
    config.full_recompute_period = a.full_recompute_period;
    let report = prune_and_save(&lifted, &config, &a.out)?;
    write_coeffs(&a.out.join("final_coeffs.csv"), &report)?;
    println!(
        "{}: {} -> {} (delta {:.3e}, {})",
        report.method,
        report.initial_dim,
        report.final_dim,
        report.final_delta,
        if report.succeeded {
            "success"
        } else {
            "failure"
        }
    );
    Ok(())
}

fn cmd_bench(a: &BenchArgs) -> Result<()> {
    let ds = load_dataset(&a.data)?;
    let config = BenchConfig {
        sizes: a.sizes.clone(),
        poly_degree: a.poly_degree,
        kmeans_seed: a.kmeans_seed,
        kmeans_iters: a.kmeans_iters,
        prune_steps: a.prune_steps,
        repetitions: a.reps,
    };
    let outcome = run_bench(&config, &ds);

    let mut timings = String::from("s,method,seconds,iterations\n");
    for r in &outcome.rows {
        timings.push_str(&format!(
            "{},{},{},{}\n",
            r.s,
            r.method,
            format_f64(r.seconds),
            r.iterations
        ));
    }
    fs::write(a.out.join("timings.csv"), timings)?;

    let mut speedup = String::from("s,naive_seconds,rank1_seconds,ratio\n");
    for r in &outcome.speedups {
        speedup.push_str(&format!(
            "{},{},{},{}\n",
            r.s,
            format_f64(r.naive_seconds),
            format_f64(r.rank1_seconds),
            format_f64(r.ratio)
        ));
        println!(
            "s = {:4}: naive {:9.3} s, rank-1 {:9.3} s, ratio {:6.1}",
            r.s, r.naive_seconds, r.rank1_seconds, r.ratio
        );
    }
    fs::write(a.out.join("speedup.csv"), speedup)?;

    if !outcome.errors.is_empty() {
        let mut errs = String::from("s,message\n");
        for e in &outcome.errors {
            eprintln!("s = {}: {}", e.s, e.message);
            errs.push_str(&format!("{},\"{}\"\n", e.s, e.message.replace('"', "'")));
        }
        fs::write(a.out.join("errors.csv"), errs)?;
    }
    if outcome.rows.is_empty() {
        bail!("no benchmark size could be run");
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct EigenSummary {
    dim: usize,
    leading_index: usize,
    leading_eigenvalue: [f64; 2],
    trivial_index: Option<usize>,
    eigenvalues: Vec<[f64; 2]>,
    warnings: Vec<String>,
}

fn export_leading(
    ef: &EigenfunctionSet,
    dict: &Dictionary,
    grid: &GridSpec,
    path: &Path,
) -> Result<EigenSummary> {
    let which = ef
        .leading_nontrivial()
        .context("no nontrivial eigenfunction on a one-dimensional subspace")?;
    evaluate_eigenfunction_on_grid(ef, which, dict, grid)?.write_csv(path)?;
    let lam = ef.eigenvalues[which];
    Ok(EigenSummary {
        dim: ef.len(),
        leading_index: which,
        leading_eigenvalue: [lam.re, lam.im],
        trivial_index: ef.trivial_index,
        eigenvalues: ef.eigenvalues.iter().map(|z| [z.re, z.im]).collect(),
        warnings: ef.warnings.clone(),
    })
}

fn cmd_eigfun(a: &EigfunArgs) -> Result<()> {
    let grid = GridSpec::parse(&a.grid, &a.bbox)?;
    let ds = load_dataset(&a.data)?;
    let dict = a.dict.resolve(&ds)?;
    dict.save(&a.out.join("dictionary.json"))?;
    let lifted = lift(&ds, &dict)?;

    let report = match &a.report {
        Some(p) => {
            PruneReport::load(p).with_context(|| format!("reading report {}", p.display()))?
        }
        None => {
            let config = match a.target_dim {
                Some(k) => prune_config(a.method, 0.0, k),
                None => prune_config(a.method, a.epsilon, 1),
            };
            prune_and_save(&lifted, &config, &a.out)?
        }
    };
    let pruned = restrict_to_report(&lifted, &report)?;

    let initial = export_leading(
        &koopman_eigenfunctions(&lifted)?,
        &dict,
        &grid,
        &a.out.join("grid_initial.csv"),
    )?;
    let after = export_leading(
        &koopman_eigenfunctions(&pruned)?,
        &dict,
        &grid,
        &a.out.join("grid_pruned.csv"),
    )?;
    for w in initial.warnings.iter().chain(&after.warnings) {
        eprintln!("warning: {w}");
    }
    println!(
        "leading eigenvalue: initial (s = {}) {:.6}{:+.6}i, pruned (s = {}) {:.6}{:+.6}i",
        initial.dim,
        initial.leading_eigenvalue[0],
        initial.leading_eigenvalue[1],
        after.dim,
        after.leading_eigenvalue[0],
        after.leading_eigenvalue[1]
    );
    fs::write(
        a.out.join("eigenvalues.json"),
        serde_json::to_string_pretty(&serde_json::json!({ "initial": initial, "pruned": after }))?,
    )?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn sizes_parse_as_list() {
        let cli = Cli::try_parse_from([
            "koopman-prune",
            "bench",
            "--data",
            "d",
            "--sizes",
            "28,103",
            "--out",
            "o",
        ])
        .unwrap();
        match cli.command {
            Some(Command::Bench(b)) => assert_eq!(b.sizes, vec![28, 103]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn negative_box_bounds_are_accepted() {
        let cli = Cli::try_parse_from([
            "koopman-prune",
            "eigfun",
            "--data",
            "d",
            "--box",
            "-3,3,-1,1",
            "--out",
            "o",
        ])
        .unwrap();
        match cli.command {
            Some(Command::Eigfun(e)) => assert_eq!(e.bbox, "-3,3,-1,1"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn config_echo_roundtrips() {
        let cli = Cli::try_parse_from([
            "koopman-prune",
            "prune",
            "--data",
            "d",
            "--centers",
            "7",
            "--method",
            "rfb-edmd",
            "--out",
            "o",
        ])
        .unwrap();
        let cmd = cli.command.unwrap();
        let text = serde_json::to_string(&cmd).unwrap();
        let back: Command = serde_json::from_str(&text).unwrap();
        assert_eq!(serde_json::to_string(&back).unwrap(), text);
        assert!(text.contains("\"command\":\"prune\""));
    }

    #[test]
    fn config_and_subcommand_conflict() {
        assert!(Cli::try_parse_from([
            "koopman-prune",
            "--config",
            "c.json",
            "simulate",
            "--traj",
            "1"
        ])
        .is_err());
    }
}
