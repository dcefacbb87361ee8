//! Drivers behind the CLI subcommands: simulate, fit, evaluate, bench.
//!
//! Every run writes a JSON manifest carrying the full configuration, the
//! derived seeds, and format/tool versions, so artifacts can be reproduced
//! exactly from the manifest alone.

use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use dagcd_core::cd_solver::SolverConfig;
use dagcd_core::evalmetrics::{self, AggregateStats, EvalReport};
use dagcd_core::graph::DagStructure;
use dagcd_core::path_select::{self, AdaptiveFit, PathConfig, SolutionPath};
use dagcd_core::simgen::{self, GraphFamily, GraphSpec, SampleSpec};

use crate::io;

pub const FORMAT_VERSION: u32 = 1;

pub fn tool_version() -> &'static str {
    env!("CARGO_PKG_VERSION")
}

/// SplitMix64-style mixer. Replicate k's seeds depend only on
/// (root, k, stream) — never on the replicate count or thread schedule — so
/// benchmark cells can be re-sliced or resumed without changing any
/// replicate's data.
pub fn split_seed(root: u64, k: u64, stream: u64) -> u64 {
    let mut z = root
        .wrapping_add(k.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(stream.wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Merged fitting configuration: λ-grid and selection knobs plus the solver
/// tolerances worth exposing. Algorithm constants (curvature floor, Armijo
/// factors) stay at the solver defaults.
#[derive(Clone, Debug, Serialize)]
pub struct FitParams {
    pub grid_size: usize,
    pub grid_ratio: f64,
    pub gamma: f64,
    pub alpha_select: f64,
    pub inner_tol: f64,
    pub max_inner: usize,
    pub max_outer: usize,
    pub shuffle_seed: Option<u64>,
    pub audit: bool,
    pub trace: bool,
}

impl Default for FitParams {
    fn default() -> Self {
        let pc = PathConfig::default();
        let sc = SolverConfig::default();
        FitParams {
            grid_size: pc.grid_size,
            grid_ratio: pc.ratio,
            gamma: pc.gamma,
            alpha_select: pc.alpha_select,
            inner_tol: sc.inner_tol,
            max_inner: sc.max_inner,
            max_outer: sc.max_outer,
            shuffle_seed: sc.shuffle_pairs,
            audit: sc.audit,
            trace: false,
        }
    }
}

/// Partial parameter set: a JSON config file and the CLI flags both
/// deserialize into this, and later sources override earlier ones.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitOverrides {
    pub grid_size: Option<usize>,
    pub grid_ratio: Option<f64>,
    pub gamma: Option<f64>,
    pub alpha_select: Option<f64>,
    pub inner_tol: Option<f64>,
    pub max_inner: Option<usize>,
    pub max_outer: Option<usize>,
    pub shuffle_seed: Option<u64>,
    pub audit: Option<bool>,
    pub trace: Option<bool>,
}

impl FitParams {
    pub fn apply(&mut self, o: &FitOverrides) {
        if let Some(v) = o.grid_size {
            self.grid_size = v;
        }
        if let Some(v) = o.grid_ratio {
            self.grid_ratio = v;
        }
        if let Some(v) = o.gamma {
            self.gamma = v;
        }
        if let Some(v) = o.alpha_select {
            self.alpha_select = v;
        }
        if let Some(v) = o.inner_tol {
            self.inner_tol = v;
        }
        if let Some(v) = o.max_inner {
            self.max_inner = v;
        }
        if let Some(v) = o.max_outer {
            self.max_outer = v;
        }
        if let Some(v) = o.shuffle_seed {
            self.shuffle_seed = Some(v);
        }
        if let Some(v) = o.audit {
            self.audit = v;
        }
        if let Some(v) = o.trace {
            self.trace = v;
        }
    }

    /// Defaults ← JSON config file (if given) ← flag overrides.
    pub fn from_sources(config: Option<&Path>, flags: &FitOverrides) -> Result<FitParams> {
        let mut p = FitParams::default();
        if let Some(path) = config {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            let o: FitOverrides = serde_json::from_str(&text)
                .with_context(|| format!("parsing config {}", path.display()))?;
            p.apply(&o);
        }
        p.apply(flags);
        Ok(p)
    }

    pub fn path_config(&self) -> PathConfig {
        PathConfig {
            grid_size: self.grid_size,
            ratio: self.grid_ratio,
            gamma: self.gamma,
            alpha_select: self.alpha_select,
        }
    }

    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig {
            inner_tol: self.inner_tol,
            max_inner: self.max_inner,
            max_outer: self.max_outer,
            shuffle_pairs: self.shuffle_seed,
            audit: self.audit,
            ..SolverConfig::default()
        }
    }
}

// ---------------------------------------------------------------------------
// simulate

#[derive(Clone, Copy, Debug)]
pub enum SimMode {
    Interventional { n_per_block: usize },
    Observational { n_obs: usize },
}

#[derive(Clone, Debug)]
pub struct SimulateSpec {
    pub family: GraphFamily,
    pub p: usize,
    pub mode: SimMode,
    pub seed: u64,
    pub rewire_prob: f64,
    pub effect_size: f64,
}

#[derive(Serialize)]
struct SimFiles {
    data: String,
    interventions: Option<String>,
    true_edges: String,
    true_dot: String,
}

#[derive(Serialize)]
struct SimManifest<'a> {
    format_version: u32,
    tool_version: &'a str,
    family: &'a str,
    p: usize,
    s0: usize,
    rewire_prob: f64,
    effect_size: f64,
    mode: &'a str,
    n: usize,
    n_per_block: Option<usize>,
    n_obs: Option<usize>,
    seed: u64,
    graph_seed: u64,
    sample_seed: u64,
    files: SimFiles,
}

/// Generates one graph + dataset pair and writes `data.csv`,
/// `interventions.csv` (interventional mode only), `true_edges.txt`,
/// `true.dot`, and `manifest.json` under `out_dir`.
pub fn run_simulate(spec: &SimulateSpec, out_dir: &Path) -> Result<DagStructure> {
    fs::create_dir_all(out_dir)
        .with_context(|| format!("creating {}", out_dir.display()))?;
    let graph_seed = split_seed(spec.seed, 0, 0);
    let sample_seed = split_seed(spec.seed, 0, 1);
    let mut gspec = GraphSpec::new(spec.family, spec.p, graph_seed);
    gspec.rewire_prob = spec.rewire_prob;
    let graph = simgen::generate_graph(&gspec)?;
    let mut sspec = match spec.mode {
        SimMode::Interventional { n_per_block } => {
            SampleSpec::interventional(n_per_block, sample_seed)
        }
        SimMode::Observational { n_obs } => SampleSpec::observational(n_obs, sample_seed),
    };
    sspec.effect_size = spec.effect_size;
    let ds = simgen::sample_data(&graph, &sspec);

    io::write_dataset_csv(&out_dir.join("data.csv"), &ds)?;
    let interventions = match spec.mode {
        SimMode::Interventional { .. } => {
            io::write_interventions_csv(&out_dir.join("interventions.csv"), &ds)?;
            Some(String::from("interventions.csv"))
        }
        SimMode::Observational { .. } => None,
    };
    io::write_edge_list(&out_dir.join("true_edges.txt"), &graph)?;
    io::write_dot(&out_dir.join("true.dot"), &graph)?;

    let manifest = SimManifest {
        format_version: FORMAT_VERSION,
        tool_version: tool_version(),
        family: spec.family.name(),
        p: spec.p,
        s0: graph.edge_count(),
        rewire_prob: spec.rewire_prob,
        effect_size: spec.effect_size,
        mode: match spec.mode {
            SimMode::Interventional { .. } => "interventional",
            SimMode::Observational { .. } => "observational",
        },
        n: ds.n(),
        n_per_block: match spec.mode {
            SimMode::Interventional { n_per_block } => Some(n_per_block),
            SimMode::Observational { .. } => None,
        },
        n_obs: match spec.mode {
            SimMode::Observational { n_obs } => Some(n_obs),
            SimMode::Interventional { .. } => None,
        },
        seed: spec.seed,
        graph_seed,
        sample_seed,
        files: SimFiles {
            data: String::from("data.csv"),
            interventions,
            true_edges: String::from("true_edges.txt"),
            true_dot: String::from("true.dot"),
        },
    };
    write_manifest(&out_dir.join("manifest.json"), &manifest)?;
    Ok(graph)
}

// ---------------------------------------------------------------------------
// fit

/// Convergence flags folded over both paths of an adaptive fit.
///
/// `clean` — the exit-code criterion — covers the solver's own stall flags
/// (outer-sweep stability, inner-loop convergence, exhausted line searches,
/// audit findings). The refit flag is reported but does not gate the exit
/// code: on densely overfit path entries a perfectly predictive parent
/// drives the per-node MLE toward infinity (quasi-separation), the refit
/// deliberately caps out and keeps its best iterate, and the capped
/// log-likelihood is stable to far below what model selection can resolve.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct StallSummary {
    pub stabilized_all: bool,
    pub inner_converged_all: bool,
    pub refit_converged_all: bool,
    pub line_search_stalls: usize,
    pub audit_failures: usize,
}

impl StallSummary {
    fn fold(paths: &[&SolutionPath]) -> StallSummary {
        let mut s = StallSummary {
            stabilized_all: true,
            inner_converged_all: true,
            refit_converged_all: true,
            line_search_stalls: 0,
            audit_failures: 0,
        };
        for path in paths {
            for en in &path.entries {
                s.stabilized_all &= en.stabilized;
                s.inner_converged_all &= en.inner_converged;
                s.refit_converged_all &= en.refit_converged;
                s.line_search_stalls += en.line_search_stalls;
            }
            s.audit_failures += path.audit_failures.len();
        }
        s
    }

    pub fn clean(&self) -> bool {
        self.stabilized_all
            && self.inner_converged_all
            && self.line_search_stalls == 0
            && self.audit_failures == 0
    }
}

#[derive(Serialize)]
struct PathMeta {
    lambda1: f64,
    entries: usize,
    selected_m: usize,
    degenerate: bool,
}

#[derive(Serialize)]
struct SelectedMeta {
    m: usize,
    lambda: f64,
    edges: usize,
}

#[derive(Serialize)]
struct FitFiles {
    path: String,
    pilot_path: String,
    selected_edges: String,
    selected_dot: String,
    trace: Option<String>,
    pilot_trace: Option<String>,
}

#[derive(Serialize)]
struct FitManifest<'a> {
    format_version: u32,
    tool_version: &'a str,
    data: String,
    interventions: Option<String>,
    n: usize,
    p: usize,
    levels: Vec<u16>,
    params: &'a FitParams,
    pilot: PathMeta,
    #[serde(rename = "final")]
    final_path: PathMeta,
    selected: SelectedMeta,
    convergence: StallSummary,
    clean: bool,
    files: FitFiles,
}

pub struct FitOutcome {
    pub fit: AdaptiveFit,
    pub stalls: StallSummary,
}

impl FitOutcome {
    pub fn selected_entry(&self) -> &dagcd_core::path_select::PathEntry {
        &self.fit.path.entries[self.fit.report.selected]
    }
}

/// Pilot path → adaptive weights → final path → selection, with all
/// artifacts under `out_dir`: `path.csv`, `pilot_path.csv`,
/// `selected_edges.txt`, `selected.dot`, optional `trace.csv` +
/// `pilot_trace.csv`, and `manifest.json`. Artifacts are written even when
/// the solver stalled — the caller turns `stalls.clean()` into the exit
/// code.
pub fn run_fit(
    data: &Path,
    interventions: Option<&Path>,
    out_dir: &Path,
    params: &FitParams,
) -> Result<FitOutcome> {
    fs::create_dir_all(out_dir)
        .with_context(|| format!("creating {}", out_dir.display()))?;
    let ds = io::load_dataset_csv(data, interventions)?;
    let fit = path_select::fit_adaptive(
        &ds,
        &params.path_config(),
        &params.solver_config(),
        params.trace,
    );
    let stalls = StallSummary::fold(&[&fit.pilot, &fit.path]);

    io::write_path_summary(&out_dir.join("path.csv"), &fit.path, &fit.report)?;
    io::write_path_summary(
        &out_dir.join("pilot_path.csv"),
        &fit.pilot,
        &fit.pilot_report,
    )?;
    let selected = &fit.path.entries[fit.report.selected];
    io::write_edge_list(&out_dir.join("selected_edges.txt"), &selected.graph)?;
    io::write_dot(&out_dir.join("selected.dot"), &selected.graph)?;
    let (trace, pilot_trace) = if params.trace {
        io::write_trace_csv(&out_dir.join("trace.csv"), &fit.path.trace)?;
        io::write_trace_csv(&out_dir.join("pilot_trace.csv"), &fit.pilot.trace)?;
        (
            Some(String::from("trace.csv")),
            Some(String::from("pilot_trace.csv")),
        )
    } else {
        (None, None)
    };

    let manifest = FitManifest {
        format_version: FORMAT_VERSION,
        tool_version: tool_version(),
        data: data.display().to_string(),
        interventions: interventions.map(|p| p.display().to_string()),
        n: ds.n(),
        p: ds.p(),
        levels: ds.levels().to_vec(),
        params,
        pilot: PathMeta {
            lambda1: fit.pilot.lambda1,
            entries: fit.pilot.entries.len(),
            selected_m: fit.pilot_report.selected + 1,
            degenerate: fit.pilot_report.degenerate,
        },
        final_path: PathMeta {
            lambda1: fit.path.lambda1,
            entries: fit.path.entries.len(),
            selected_m: fit.report.selected + 1,
            degenerate: fit.report.degenerate,
        },
        selected: SelectedMeta {
            m: fit.report.selected + 1,
            lambda: selected.lambda,
            edges: selected.edge_count,
        },
        convergence: stalls,
        clean: stalls.clean(),
        files: FitFiles {
            path: String::from("path.csv"),
            pilot_path: String::from("pilot_path.csv"),
            selected_edges: String::from("selected_edges.txt"),
            selected_dot: String::from("selected.dot"),
            trace,
            pilot_trace,
        },
    };
    write_manifest(&out_dir.join("manifest.json"), &manifest)?;
    Ok(FitOutcome { fit, stalls })
}

// ---------------------------------------------------------------------------
// evaluate

/// Scores an estimated edge list against a true one. `p` defaults to the
/// largest node index appearing in either file.
pub fn run_evaluate(
    truth: &Path,
    estimate: &Path,
    p: Option<usize>,
    skeleton: bool,
) -> Result<EvalReport> {
    let te = io::load_edge_list(truth)?;
    let ee = io::load_edge_list(estimate)?;
    let needed = te
        .iter()
        .chain(ee.iter())
        .map(|&(i, j)| i.max(j) + 1)
        .max()
        .unwrap_or(1);
    let p = match p {
        Some(v) => {
            if v < needed {
                bail!("--p {} is below the largest node index {}", v, needed);
            }
            v
        }
        None => needed,
    };
    let tg = io::graph_from_edges(p, &te)
        .with_context(|| format!("truth {}", truth.display()))?;
    let eg = io::graph_from_edges(p, &ee)
        .with_context(|| format!("estimate {}", estimate.display()))?;
    let report = if skeleton {
        evalmetrics::score_skeleton(&tg, &eg)
    } else {
        evalmetrics::score_dag(&tg, &eg)
    };
    report.map_err(|e| anyhow::anyhow!("{}", e))
}

// ---------------------------------------------------------------------------
// bench

#[derive(Clone, Debug)]
pub struct BenchSpec {
    pub family: GraphFamily,
    pub p: usize,
    pub mode: SimMode,
    pub replicates: usize,
    pub seed: u64,
    pub threads: Option<usize>,
    /// Also score the path entry edge-matched to this target (skeleton
    /// mode), alongside the selected model.
    pub skeleton_target: Option<usize>,
    pub rewire_prob: f64,
    pub effect_size: f64,
}

/// One benchmark replicate. `error` is set (and the score fields unset)
/// when the replicate panicked or failed; the cell is then incomplete but
/// the remaining replicates still count.
pub struct ReplicateRow {
    pub k: usize,
    pub graph_seed: u64,
    pub sample_seed: u64,
    pub error: Option<String>,
    pub selected_m: usize,
    pub lambda: f64,
    pub edges: usize,
    pub sweeps_max: usize,
    pub stalls: StallSummary,
    pub dag: Option<EvalReport>,
    pub skel: Option<EvalReport>,
    pub matched_edges: Option<usize>,
    pub matched_skel: Option<EvalReport>,
    pub seconds: f64,
}

pub struct BenchOutcome {
    pub rows: Vec<ReplicateRow>,
    pub dag_agg: Option<AggregateStats>,
    pub skel_agg: Option<AggregateStats>,
    pub matched_agg: Option<AggregateStats>,
    /// Every replicate produced a score.
    pub complete: bool,
    /// Every replicate converged without stall flags.
    pub clean: bool,
}

#[derive(Serialize)]
struct BenchManifest<'a> {
    format_version: u32,
    tool_version: &'a str,
    family: &'a str,
    p: usize,
    s0: usize,
    mode: &'a str,
    n: usize,
    n_per_block: Option<usize>,
    n_obs: Option<usize>,
    replicates: usize,
    seed: u64,
    rewire_prob: f64,
    effect_size: f64,
    skeleton_target: Option<usize>,
    params: &'a FitParams,
    complete: bool,
    clean: bool,
    failed_replicates: Vec<usize>,
    files: BenchFiles,
}

#[derive(Serialize)]
struct BenchFiles {
    replicates: String,
    report: String,
}

fn resolve_threads(requested: Option<usize>) -> usize {
    match requested {
        Some(t) if t > 0 => t,
        _ => match std::env::var("DAGCD_THREADS") {
            Ok(v) => v.parse().unwrap_or(0),
            Err(_) => 0,
        },
    }
}

fn bench_replicate(spec: &BenchSpec, params: &FitParams, k: usize) -> ReplicateRow {
    let graph_seed = split_seed(spec.seed, k as u64, 0);
    let sample_seed = split_seed(spec.seed, k as u64, 1);
    let started = Instant::now();
    let result = panic::catch_unwind(AssertUnwindSafe(|| -> Result<ReplicateRow> {
        let mut gspec = GraphSpec::new(spec.family, spec.p, graph_seed);
        gspec.rewire_prob = spec.rewire_prob;
        let truth = simgen::generate_graph(&gspec)?;
        let mut sspec = match spec.mode {
            SimMode::Interventional { n_per_block } => {
                SampleSpec::interventional(n_per_block, sample_seed)
            }
            SimMode::Observational { n_obs } => SampleSpec::observational(n_obs, sample_seed),
        };
        sspec.effect_size = spec.effect_size;
        let ds = simgen::sample_data(&truth, &sspec);
        let mut fp = params.clone();
        if let Some(s) = fp.shuffle_seed {
            // Per-replicate sweep order, still a pure function of (root, k).
            fp.shuffle_seed = Some(split_seed(s, k as u64, 2));
        }
        let fit = path_select::fit_adaptive(
            &ds,
            &fp.path_config(),
            &fp.solver_config(),
            false,
        );
        let stalls = StallSummary::fold(&[&fit.pilot, &fit.path]);
        let selected = &fit.path.entries[fit.report.selected];
        let dag = evalmetrics::score_dag(&truth, &selected.graph)
            .map_err(|e| anyhow::anyhow!("{}", e))?;
        let skel = evalmetrics::score_skeleton(&truth, &selected.graph)
            .map_err(|e| anyhow::anyhow!("{}", e))?;
        let (matched_edges, matched_skel) = match spec.skeleton_target {
            Some(target) => {
                let idx = path_select::match_edge_count(&fit.path, target);
                let en = &fit.path.entries[idx];
                let rep = evalmetrics::score_skeleton(&truth, &en.graph)
                    .map_err(|e| anyhow::anyhow!("{}", e))?;
                (Some(en.edge_count), Some(rep))
            }
            None => (None, None),
        };
        let sweeps_max = fit
            .pilot
            .entries
            .iter()
            .chain(fit.path.entries.iter())
            .map(|en| en.sweeps)
            .max()
            .unwrap_or(0);
        Ok(ReplicateRow {
            k,
            graph_seed,
            sample_seed,
            error: None,
            selected_m: fit.report.selected + 1,
            lambda: selected.lambda,
            edges: selected.edge_count,
            sweeps_max,
            stalls,
            dag: Some(dag),
            skel: Some(skel),
            matched_edges,
            matched_skel,
            seconds: 0.0,
        })
    }));
    let seconds = started.elapsed().as_secs_f64();
    let mut row = match result {
        Ok(Ok(row)) => row,
        Ok(Err(e)) => failed_row(k, graph_seed, sample_seed, format!("{:#}", e)),
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| String::from("panic"));
            failed_row(k, graph_seed, sample_seed, msg)
        }
    };
    row.seconds = seconds;
    row
}

fn failed_row(k: usize, graph_seed: u64, sample_seed: u64, msg: String) -> ReplicateRow {
    ReplicateRow {
        k,
        graph_seed,
        sample_seed,
        error: Some(msg),
        selected_m: 0,
        lambda: f64::NAN,
        edges: 0,
        sweeps_max: 0,
        stalls: StallSummary {
            stabilized_all: false,
            inner_converged_all: false,
            refit_converged_all: false,
            line_search_stalls: 0,
            audit_failures: 0,
        },
        dag: None,
        skel: None,
        matched_edges: None,
        matched_skel: None,
        seconds: 0.0,
    }
}

fn write_replicates_csv(path: &Path, rows: &[ReplicateRow]) -> Result<()> {
    let mut out = String::from(
        "k,graph_seed,sample_seed,ok,selected_m,lambda,edges,sweeps_max,\
         stabilized,inner_converged,refit_converged,line_search_stalls,\
         audit_failures,clean,dag_tpr,dag_fdr,skel_tpr,skel_fdr,\
         matched_edges,matched_tpr,matched_fdr,seconds,error\n",
    );
    let opt = |v: Option<String>| v.unwrap_or_default();
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{:.3},{}\n",
            r.k,
            r.graph_seed,
            r.sample_seed,
            (r.error.is_none()) as u8,
            r.selected_m,
            if r.lambda.is_nan() {
                String::new()
            } else {
                r.lambda.to_string()
            },
            r.edges,
            r.sweeps_max,
            r.stalls.stabilized_all as u8,
            r.stalls.inner_converged_all as u8,
            r.stalls.refit_converged_all as u8,
            r.stalls.line_search_stalls,
            r.stalls.audit_failures,
            r.stalls.clean() as u8,
            opt(r.dag.map(|d| d.tpr.to_string())),
            opt(r.dag.map(|d| d.fdr.to_string())),
            opt(r.skel.map(|s| s.tpr.to_string())),
            opt(r.skel.map(|s| s.fdr.to_string())),
            opt(r.matched_edges.map(|e| e.to_string())),
            opt(r.matched_skel.map(|s| s.tpr.to_string())),
            opt(r.matched_skel.map(|s| s.fdr.to_string())),
            r.seconds,
            r.error
                .as_deref()
                .map(|e| e.replace([',', '\n'], ";"))
                .unwrap_or_default()
        ));
    }
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

/// Generates `replicates` datasets for one (family, p, n) cell, fits and
/// selects each on a worker pool, scores DAG + skeleton (+ optional
/// edge-matched skeleton), and writes `replicates.csv`, `report.csv`, and
/// `manifest.json`. Failed replicates are recorded and skipped in the
/// aggregates; the cell is then marked incomplete rather than aborting.
pub fn run_bench(spec: &BenchSpec, params: &FitParams, out_dir: &Path) -> Result<BenchOutcome> {
    if spec.replicates == 0 {
        bail!("--replicates must be at least 1");
    }
    // Fail fast on an invalid (family, p) combination before spawning work.
    let mut probe = GraphSpec::new(spec.family, spec.p, 0);
    probe.rewire_prob = spec.rewire_prob;
    let s0 = simgen::generate_graph(&probe)?.edge_count();
    fs::create_dir_all(out_dir)
        .with_context(|| format!("creating {}", out_dir.display()))?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(resolve_threads(spec.threads))
        .build()
        .context("building worker pool")?;
    let rows: Vec<ReplicateRow> = pool.install(|| {
        (0..spec.replicates)
            .into_par_iter()
            .map(|k| bench_replicate(spec, params, k))
            .collect()
    });

    let dag_reports: Vec<EvalReport> = rows.iter().filter_map(|r| r.dag).collect();
    let skel_reports: Vec<EvalReport> = rows.iter().filter_map(|r| r.skel).collect();
    let matched_reports: Vec<EvalReport> =
        rows.iter().filter_map(|r| r.matched_skel).collect();
    let agg = |reports: &[EvalReport]| -> Option<AggregateStats> {
        if reports.is_empty() {
            None
        } else {
            Some(evalmetrics::aggregate(reports).expect("homogeneous non-empty reports"))
        }
    };
    let dag_agg = agg(&dag_reports);
    let skel_agg = agg(&skel_reports);
    let matched_agg = agg(&matched_reports);

    write_replicates_csv(&out_dir.join("replicates.csv"), &rows)?;
    let mut labeled: Vec<(String, EvalReport)> = Vec::new();
    for r in &rows {
        if let Some(d) = r.dag {
            labeled.push((format!("rep{}", r.k), d));
        }
        if let Some(s) = r.skel {
            labeled.push((format!("rep{}", r.k), s));
        }
        if let Some(m) = r.matched_skel {
            labeled.push((format!("rep{}_matched", r.k), m));
        }
    }
    let mut aggs: Vec<(String, AggregateStats)> = Vec::new();
    if let Some(a) = dag_agg {
        aggs.push((String::from("dag"), a));
    }
    if let Some(a) = skel_agg {
        aggs.push((String::from("skeleton"), a));
    }
    if let Some(a) = matched_agg {
        aggs.push((String::from("skeleton_matched"), a));
    }
    io::write_report_csv(&out_dir.join("report.csv"), &labeled, &aggs)?;

    let complete = rows.iter().all(|r| r.error.is_none());
    let clean = complete && rows.iter().all(|r| r.stalls.clean());
    let manifest = BenchManifest {
        format_version: FORMAT_VERSION,
        tool_version: tool_version(),
        family: spec.family.name(),
        p: spec.p,
        s0,
        mode: match spec.mode {
            SimMode::Interventional { .. } => "interventional",
            SimMode::Observational { .. } => "observational",
        },
        n: match spec.mode {
            SimMode::Interventional { n_per_block } => spec.p * n_per_block,
            SimMode::Observational { n_obs } => n_obs,
        },
        n_per_block: match spec.mode {
            SimMode::Interventional { n_per_block } => Some(n_per_block),
            SimMode::Observational { .. } => None,
        },
        n_obs: match spec.mode {
            SimMode::Observational { n_obs } => Some(n_obs),
            SimMode::Interventional { .. } => None,
        },
        replicates: spec.replicates,
        seed: spec.seed,
        rewire_prob: spec.rewire_prob,
        effect_size: spec.effect_size,
        skeleton_target: spec.skeleton_target,
        params,
        complete,
        clean,
        failed_replicates: rows
            .iter()
            .filter(|r| r.error.is_some())
            .map(|r| r.k)
            .collect(),
        files: BenchFiles {
            replicates: String::from("replicates.csv"),
            report: String::from("report.csv"),
        },
    };
    write_manifest(&out_dir.join("manifest.json"), &manifest)?;

    Ok(BenchOutcome {
        rows,
        dag_agg,
        skel_agg,
        matched_agg,
        complete,
        clean,
    })
}

fn write_manifest<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Re-runs model selection on a stored path summary under a new α.
pub fn run_select(
    path_summary: &Path,
    alpha_select: f64,
) -> Result<dagcd_core::path_select::SelectionReport> {
    let (edges, logliks) = io::load_path_summary(path_summary)?;
    Ok(path_select::select_from_series(&edges, &logliks, alpha_select))
}
