use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand};

use dagcd::io;
use dagcd::run::{self, BenchSpec, FitOverrides, FitParams, SimMode, SimulateSpec};
use dagcd_core::simgen::GraphFamily;

#[derive(Parser)]
#[command(
    name = "dagcd",
    version,
    about = "Sparse discrete DAG structure estimation by penalized blockwise coordinate descent"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a benchmark graph and sample a dataset from it
    Simulate(SimulateArgs),
    /// Fit the pilot + adaptive solution paths and select a model
    Fit(FitArgs),
    /// Re-run model selection on a stored path summary
    Select(SelectArgs),
    /// Score an estimated edge list against a true one
    Evaluate(EvaluateArgs),
    /// Replicated simulate → fit → score benchmark for one setting
    Bench(BenchArgs),
}

/// Sampling-size choice shared by `simulate` and `bench`: exactly one of
/// the two modes.
#[derive(Args)]
struct ModeArgs {
    /// Interventional design: this many rows per single-node intervention
    /// block (n = p * n_per_block)
    #[arg(long, conflicts_with = "n_obs")]
    n_per_block: Option<usize>,
    /// Purely observational design with this many rows
    #[arg(long)]
    n_obs: Option<usize>,
}

impl ModeArgs {
    fn mode(&self) -> Result<SimMode> {
        match (self.n_per_block, self.n_obs) {
            (Some(b), None) => Ok(SimMode::Interventional { n_per_block: b }),
            (None, Some(n)) => Ok(SimMode::Observational { n_obs: n }),
            _ => bail!("give exactly one of --n-per-block or --n-obs"),
        }
    }
}

/// Fitting knobs shared by `fit` and `bench`. A JSON config file (same
/// field names) supplies defaults; explicit flags override it.
#[derive(Args)]
struct FitFlags {
    /// JSON config file with any of the fitting fields
    #[arg(long)]
    config: Option<PathBuf>,
    /// Number of λ values on the grid (J)
    #[arg(long)]
    grid_size: Option<usize>,
    /// λ_J / λ_1 grid span
    #[arg(long)]
    grid_ratio: Option<f64>,
    /// Adaptive-weight exponent γ
    #[arg(long)]
    gamma: Option<f64>,
    /// Difference-ratio selection threshold α
    #[arg(long)]
    alpha_select: Option<f64>,
    /// Inner-loop max-norm parameter tolerance
    #[arg(long)]
    inner_tol: Option<f64>,
    /// Inner-loop iteration cap
    #[arg(long)]
    max_inner: Option<usize>,
    /// Outer-sweep cap per λ
    #[arg(long)]
    max_outer: Option<usize>,
    /// Randomize the pair-sweep order with this seed (default: fixed order)
    #[arg(long)]
    shuffle_seed: Option<u64>,
    /// Run the solver's invariant + KKT audit every sweep
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    audit: Option<bool>,
    /// Write per-iteration convergence traces
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    trace: Option<bool>,
}

impl FitFlags {
    fn params(&self) -> Result<FitParams> {
        let o = FitOverrides {
            grid_size: self.grid_size,
            grid_ratio: self.grid_ratio,
            gamma: self.gamma,
            alpha_select: self.alpha_select,
            inner_tol: self.inner_tol,
            max_inner: self.max_inner,
            max_outer: self.max_outer,
            shuffle_seed: self.shuffle_seed,
            audit: self.audit,
            trace: self.trace,
        };
        FitParams::from_sources(self.config.as_deref(), &o)
    }
}

#[derive(Args)]
struct SimulateArgs {
    /// Graph family: bipartite | polytree | scalefree | smallworld
    #[arg(long)]
    family: String,
    /// Node count
    #[arg(long)]
    p: usize,
    #[command(flatten)]
    mode: ModeArgs,
    /// Root seed; graph and sample seeds are derived from it
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Conditional log-odds scale of the sampler
    #[arg(long, default_value_t = 2.0)]
    effect_size: f64,
    /// Small-world rewiring probability
    #[arg(long, default_value_t = 0.1)]
    rewire_prob: f64,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FitArgs {
    /// Dataset CSV (integer levels; optional `#levels:` first line)
    #[arg(long)]
    data: PathBuf,
    /// Intervention CSV (`row,node`, 1-based); omit for observational data
    #[arg(long)]
    interventions: Option<PathBuf>,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    flags: FitFlags,
}

#[derive(Args)]
struct SelectArgs {
    /// A path summary CSV written by `fit`
    #[arg(long)]
    path_summary: PathBuf,
    /// Difference-ratio selection threshold α
    #[arg(long, default_value_t = 0.1)]
    alpha_select: f64,
}

#[derive(Args)]
struct EvaluateArgs {
    /// True edge list (`i j` per line, 1-based)
    #[arg(long)]
    truth: PathBuf,
    /// Estimated edge list
    #[arg(long)]
    estimate: PathBuf,
    /// Node count; defaults to the largest index in either file
    #[arg(long)]
    p: Option<usize>,
    /// Compare skeletons (direction-blind) instead of DAGs
    #[arg(long)]
    skeleton: bool,
    /// Optional report CSV to write
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Graph family: bipartite | polytree | scalefree | smallworld
    #[arg(long)]
    family: String,
    /// Node count
    #[arg(long)]
    p: usize,
    #[command(flatten)]
    mode: ModeArgs,
    /// Number of replicate datasets
    #[arg(long)]
    replicates: usize,
    /// Root seed; replicate k's seeds derive from (seed, k) only
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads (default: DAGCD_THREADS env var, then all cores)
    #[arg(long)]
    threads: Option<usize>,
    /// Also score the path entry edge-matched to this count, skeleton mode
    #[arg(long)]
    skeleton_target: Option<usize>,
    /// Conditional log-odds scale of the sampler
    #[arg(long, default_value_t = 2.0)]
    effect_size: f64,
    /// Small-world rewiring probability
    #[arg(long, default_value_t = 0.1)]
    rewire_prob: f64,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    flags: FitFlags,
}

fn parse_family(s: &str) -> Result<GraphFamily> {
    GraphFamily::from_str(s).map_err(|e| anyhow::anyhow!("{}", e))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {:#}", e);
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Simulate(a) => {
            let spec = SimulateSpec {
                family: parse_family(&a.family)?,
                p: a.p,
                mode: a.mode.mode()?,
                seed: a.seed,
                rewire_prob: a.rewire_prob,
                effect_size: a.effect_size,
            };
            let graph = run::run_simulate(&spec, &a.out)?;
            println!(
                "simulated {} p={} edges={} -> {}",
                spec.family.name(),
                a.p,
                graph.edge_count(),
                a.out.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Fit(a) => {
            let params = a.flags.params()?;
            let outcome = run::run_fit(&a.data, a.interventions.as_deref(), &a.out, &params)?;
            let sel = outcome.selected_entry();
            println!(
                "selected m={} lambda={} edges={} -> {}",
                outcome.fit.report.selected + 1,
                sel.lambda,
                sel.edge_count,
                a.out.display()
            );
            if outcome.stalls.clean() {
                Ok(ExitCode::SUCCESS)
            } else {
                eprintln!(
                    "solver stalls recorded (see manifest.json); artifacts are complete"
                );
                Ok(ExitCode::FAILURE)
            }
        }
        Command::Select(a) => {
            let report = run::run_select(&a.path_summary, a.alpha_select)?;
            println!(
                "selected m={}{}",
                report.selected + 1,
                if report.degenerate {
                    " (degenerate path: no transition adds edges)"
                } else {
                    ""
                }
            );
            for (t, (dr, ok)) in report.dr.iter().zip(&report.dr_valid).enumerate() {
                if *ok {
                    println!("dr m={} -> m={}: {}", t + 1, t + 2, dr);
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Evaluate(a) => {
            let rep = run::run_evaluate(&a.truth, &a.estimate, a.p, a.skeleton)?;
            println!(
                "mode={} T={} P={} E={} R={} M={} FP={} TPR={:.4} FDR={:.4}",
                if a.skeleton { "skeleton" } else { "dag" },
                rep.true_edges,
                rep.predicted,
                rep.expected,
                rep.reversed,
                rep.missing,
                rep.false_pos,
                rep.tpr,
                rep.fdr
            );
            if let Some(out) = &a.out {
                io::write_report_csv(out, &[(String::from("evaluate"), rep)], &[])?;
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Bench(a) => {
            let spec = BenchSpec {
                family: parse_family(&a.family)?,
                p: a.p,
                mode: a.mode.mode()?,
                replicates: a.replicates,
                seed: a.seed,
                threads: a.threads,
                skeleton_target: a.skeleton_target,
                rewire_prob: a.rewire_prob,
                effect_size: a.effect_size,
            };
            let params = a.flags.params()?;
            let outcome = run::run_bench(&spec, &params, &a.out)?;
            if let Some(agg) = &outcome.dag_agg {
                println!(
                    "dag: n={} mean TPR={:.4} (sd {:.4}) mean FDR={:.4} (sd {:.4}) mean P={:.1}",
                    agg.count, agg.mean.tpr, agg.sd.tpr, agg.mean.fdr, agg.sd.fdr, agg.mean.predicted
                );
            }
            if let Some(agg) = &outcome.skel_agg {
                println!(
                    "skeleton: n={} mean TPR={:.4} (sd {:.4}) mean FDR={:.4} (sd {:.4})",
                    agg.count, agg.mean.tpr, agg.sd.tpr, agg.mean.fdr, agg.sd.fdr
                );
            }
            if let Some(agg) = &outcome.matched_agg {
                println!(
                    "skeleton (edge-matched): n={} mean TPR={:.4} (sd {:.4}) mean FDR={:.4} (sd {:.4})",
                    agg.count, agg.mean.tpr, agg.sd.tpr, agg.mean.fdr, agg.sd.fdr
                );
            }
            if !outcome.complete {
                eprintln!("incomplete cell: some replicates failed (see replicates.csv)");
            } else if !outcome.clean {
                eprintln!("solver stalls recorded in some replicates (see replicates.csv)");
            }
            if outcome.complete && outcome.clean {
                Ok(ExitCode::SUCCESS)
            } else {
                Ok(ExitCode::FAILURE)
            }
        }
    }
}
