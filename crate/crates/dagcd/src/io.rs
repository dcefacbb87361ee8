//! Disk formats. All node/row indices are 1-based in files and 0-based in
//! memory; levels are 1-based in both.
//!
//! - dataset CSV: optional first line `#levels: r1,…,rp`, then one row of
//!   comma-separated integer levels per observation
//! - intervention CSV: `row,node` per line (at most one intervened node per
//!   row; `#` lines are comments)
//! - edge list: `i j` per line for the edge i → j
//! - DOT: one `digraph` with every node declared, for rendering
//! - path summary CSV: `m,lambda,edges,penalized_objective,refit_loglik,dr,
//!   selected_flag`, one row per λ-grid entry
//! - trace CSV: `sweep,iteration,objective,max_change,active_edges` (empty
//!   max_change marks the pair-sweep phase rows)
//! - report CSV: `label,stat,mode,T,P,E,R,M,FP,TPR,FDR`
//!
//! Floats are written with Rust's shortest round-trip formatting, so equal
//! runs produce byte-identical files and read-back is lossless.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};

use dagcd_core::cd_solver::TraceRow;
use dagcd_core::dataset::CategoricalDataset;
use dagcd_core::evalmetrics::{AggregateStats, EvalReport, EvalSummary, ScoreMode};
use dagcd_core::graph::DagStructure;
use dagcd_core::path_select::{SelectionReport, SolutionPath};

pub fn load_dataset_csv(
    data: &Path,
    interventions: Option<&Path>,
) -> Result<CategoricalDataset> {
    let text = fs::read_to_string(data)
        .with_context(|| format!("reading dataset {}", data.display()))?;
    let spec = match interventions {
        Some(p) => Some(
            fs::read_to_string(p)
                .with_context(|| format!("reading intervention spec {}", p.display()))?,
        ),
        None => None,
    };
    CategoricalDataset::from_csv_str(&text, spec.as_deref())
        .with_context(|| format!("parsing dataset {}", data.display()))
}

pub fn write_dataset_csv(path: &Path, ds: &CategoricalDataset) -> Result<()> {
    let mut out = String::new();
    out.push_str("#levels: ");
    for (j, r) in ds.levels().iter().enumerate() {
        if j > 0 {
            out.push(',');
        }
        out.push_str(&r.to_string());
    }
    out.push('\n');
    for h in 0..ds.n() {
        for j in 0..ds.p() {
            if j > 0 {
                out.push(',');
            }
            out.push_str(&ds.level(h, j).to_string());
        }
        out.push('\n');
    }
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

/// Writes the `row,node` pairs of every intervened row; an empty file means
/// purely observational data.
pub fn write_interventions_csv(path: &Path, ds: &CategoricalDataset) -> Result<()> {
    let mut out = String::new();
    for h in 0..ds.n() {
        if let Some(j) = ds.intervened_node(h) {
            out.push_str(&format!("{},{}\n", h + 1, j + 1));
        }
    }
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

/// Reads `i j` lines into 0-based edge pairs. Blank and `#` lines are
/// skipped; indices must be ≥ 1.
pub fn load_edge_list(path: &Path) -> Result<Vec<(usize, usize)>> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading edge list {}", path.display()))?;
    let mut edges = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut it = line.split_whitespace();
        let (a, b) = match (it.next(), it.next(), it.next()) {
            (Some(a), Some(b), None) => (a, b),
            _ => bail!("{}:{}: expected `i j`", path.display(), ln + 1),
        };
        let i: usize = a
            .parse()
            .with_context(|| format!("{}:{}: bad source index", path.display(), ln + 1))?;
        let j: usize = b
            .parse()
            .with_context(|| format!("{}:{}: bad target index", path.display(), ln + 1))?;
        if i == 0 || j == 0 {
            bail!("{}:{}: node indices are 1-based", path.display(), ln + 1);
        }
        edges.push((i - 1, j - 1));
    }
    Ok(edges)
}

/// Builds a graph on `p` nodes from 0-based edges, rejecting duplicates,
/// self-loops, out-of-range nodes, and cycles.
pub fn graph_from_edges(p: usize, edges: &[(usize, usize)]) -> Result<DagStructure> {
    let mut g = DagStructure::new(p);
    for &(i, j) in edges {
        if i >= p || j >= p {
            bail!("edge ({}, {}) outside a {}-node graph", i + 1, j + 1, p);
        }
        g.add_edge(i, j)
            .map_err(|e| anyhow::anyhow!("edge ({}, {}): {}", i + 1, j + 1, e))?;
    }
    g.topological_sort()
        .map_err(|e| anyhow::anyhow!("edge list is cyclic: {}", e))?;
    Ok(g)
}

pub fn write_edge_list(path: &Path, g: &DagStructure) -> Result<()> {
    let mut out = String::new();
    for (i, j) in g.edges() {
        out.push_str(&format!("{} {}\n", i + 1, j + 1));
    }
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

pub fn write_dot(path: &Path, g: &DagStructure) -> Result<()> {
    let mut out = String::from("digraph dag {\n");
    for v in 0..g.p() {
        out.push_str(&format!("  x{};\n", v + 1));
    }
    for (i, j) in g.edges() {
        out.push_str(&format!("  x{} -> x{};\n", i + 1, j + 1));
    }
    out.push_str("}\n");
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

/// One row per path entry, `m` 1-based in grid order. The `dr` column holds
/// the difference ratio of the transition into entry m (blank for m = 1 and
/// for transitions with no computable ratio); `selected_flag` is 1 on the
/// selected row.
pub fn write_path_summary(
    path: &Path,
    sp: &SolutionPath,
    report: &SelectionReport,
) -> Result<()> {
    let mut out =
        String::from("m,lambda,edges,penalized_objective,refit_loglik,dr,selected_flag\n");
    for (idx, en) in sp.entries.iter().enumerate() {
        let dr = if idx >= 1 && report.dr_valid[idx - 1] {
            report.dr[idx - 1].to_string()
        } else {
            String::new()
        };
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            idx + 1,
            en.lambda,
            en.edge_count,
            en.objective,
            en.refit_loglik,
            dr,
            (report.selected == idx) as u8
        ));
    }
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

/// Reads back the `(edges, refit_loglik)` series of a path summary, enough
/// to re-run model selection under a different α.
pub fn load_path_summary(path: &Path) -> Result<(Vec<usize>, Vec<f64>)> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut edges = Vec::new();
    let mut logliks = Vec::new();
    for (ln, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 7 {
            bail!("{}:{}: expected 7 columns", path.display(), ln + 1);
        }
        edges.push(
            cols[2]
                .parse()
                .with_context(|| format!("{}:{}: bad edge count", path.display(), ln + 1))?,
        );
        logliks.push(
            cols[4]
                .parse()
                .with_context(|| format!("{}:{}: bad refit_loglik", path.display(), ln + 1))?,
        );
    }
    if edges.is_empty() {
        bail!("{}: no path entries", path.display());
    }
    Ok((edges, logliks))
}

pub fn write_trace_csv(path: &Path, rows: &[TraceRow]) -> Result<()> {
    let mut out = String::from("sweep,iteration,objective,max_change,active_edges\n");
    for r in rows {
        let ch = if r.max_change.is_nan() {
            String::new()
        } else {
            r.max_change.to_string()
        };
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.sweep, r.iteration, r.objective, ch, r.active_edges
        ));
    }
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

fn mode_name(mode: ScoreMode) -> &'static str {
    match mode {
        ScoreMode::Dag => "dag",
        ScoreMode::Skeleton => "skeleton",
    }
}

fn report_row(label: &str, stat: &str, mode: ScoreMode, s: &EvalSummary) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{},{}\n",
        label,
        stat,
        mode_name(mode),
        s.true_edges,
        s.predicted,
        s.expected,
        s.reversed,
        s.missing,
        s.false_pos,
        s.tpr,
        s.fdr
    )
}

fn summary_of(r: &EvalReport) -> EvalSummary {
    EvalSummary {
        predicted: r.predicted as f64,
        expected: r.expected as f64,
        reversed: r.reversed as f64,
        missing: r.missing as f64,
        false_pos: r.false_pos as f64,
        true_edges: r.true_edges as f64,
        tpr: r.tpr,
        fdr: r.fdr,
    }
}

/// Scoring table: one row per labeled report, then mean and sample-SD
/// summary rows per aggregate.
pub fn write_report_csv(
    path: &Path,
    rows: &[(String, EvalReport)],
    aggregates: &[(String, AggregateStats)],
) -> Result<()> {
    let mut out = String::from("label,stat,mode,T,P,E,R,M,FP,TPR,FDR\n");
    for (label, r) in rows {
        out.push_str(&report_row(label, "value", r.mode, &summary_of(r)));
    }
    for (label, agg) in aggregates {
        out.push_str(&report_row(label, "mean", agg.mode, &agg.mean));
        out.push_str(&report_row(label, "sd", agg.mode, &agg.sd));
    }
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}
