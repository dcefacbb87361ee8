//! Structure-recovery scoring: expected/reversed/missing/false-positive
//! counts with TPR/FDR, in directed or skeleton mode, plus replicate
//! aggregation.

use alloc::collections::BTreeSet;

use crate::graph::DagStructure;
use crate::math;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScoreMode {
    Dag,
    Skeleton,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum EvalError {
    NodeCountMismatch { truth: usize, est: usize },
    EmptyAggregate,
    MixedModes,
}

impl core::fmt::Display for EvalError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            EvalError::NodeCountMismatch { truth, est } => {
                write!(f, "node counts differ: truth {} vs estimate {}", truth, est)
            }
            EvalError::EmptyAggregate => write!(f, "cannot aggregate zero reports"),
            EvalError::MixedModes => write!(f, "cannot aggregate mixed scoring modes"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for EvalError {}

/// Counts and rates for one estimated structure against one truth.
///
/// Directed mode: an estimated edge is expected (right pair, right
/// direction), reversed (right pair, wrong direction), or a false positive;
/// TPR = E/T, FDR = (R+FP)/P. Skeleton mode ignores direction: E counts
/// estimated pairs present in the true skeleton and FDR = FP/P. P = 0 and
/// T = 0 yield rates of 0 by convention.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalReport {
    pub mode: ScoreMode,
    /// P: number of estimated edges (pairs in skeleton mode).
    pub predicted: usize,
    /// E: correctly recovered edges.
    pub expected: usize,
    /// R: reversed edges (always 0 in skeleton mode).
    pub reversed: usize,
    /// M: true edges not recovered in either direction.
    pub missing: usize,
    /// FP: estimated edges absent from the true skeleton.
    pub false_pos: usize,
    /// T: number of true edges.
    pub true_edges: usize,
    pub tpr: f64,
    pub fdr: f64,
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

pub fn score_dag(truth: &DagStructure, est: &DagStructure) -> Result<EvalReport, EvalError> {
    if truth.p() != est.p() {
        return Err(EvalError::NodeCountMismatch {
            truth: truth.p(),
            est: est.p(),
        });
    }
    let t = truth.edge_count();
    let mut expected = 0;
    let mut reversed = 0;
    let mut false_pos = 0;
    for (i, j) in est.edges() {
        if truth.has_edge(i, j) {
            expected += 1;
        } else if truth.has_edge(j, i) {
            reversed += 1;
        } else {
            false_pos += 1;
        }
    }
    let predicted = est.edge_count();
    Ok(EvalReport {
        mode: ScoreMode::Dag,
        predicted,
        expected,
        reversed,
        missing: t - expected - reversed,
        false_pos,
        true_edges: t,
        tpr: ratio(expected as f64, t as f64),
        fdr: ratio((reversed + false_pos) as f64, predicted as f64),
    })
}

pub fn score_skeleton(truth: &DagStructure, est: &DagStructure) -> Result<EvalReport, EvalError> {
    if truth.p() != est.p() {
        return Err(EvalError::NodeCountMismatch {
            truth: truth.p(),
            est: est.p(),
        });
    }
    let truth_sk: BTreeSet<(usize, usize)> = truth.skeleton().into_iter().collect();
    let est_sk = est.skeleton();
    let t = truth_sk.len();
    let expected = est_sk.iter().filter(|pair| truth_sk.contains(pair)).count();
    let predicted = est_sk.len();
    let false_pos = predicted - expected;
    Ok(EvalReport {
        mode: ScoreMode::Skeleton,
        predicted,
        expected,
        reversed: 0,
        missing: t - expected,
        false_pos,
        true_edges: t,
        tpr: ratio(expected as f64, t as f64),
        fdr: ratio(false_pos as f64, predicted as f64),
    })
}

/// Per-field mean or sample standard deviation across replicates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalSummary {
    pub predicted: f64,
    pub expected: f64,
    pub reversed: f64,
    pub missing: f64,
    pub false_pos: f64,
    pub true_edges: f64,
    pub tpr: f64,
    pub fdr: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AggregateStats {
    pub mode: ScoreMode,
    pub count: usize,
    pub mean: EvalSummary,
    pub sd: EvalSummary,
}

/// Unweighted mean and sample SD (n−1 denominator; 0 for a single report)
/// of every numeric field.
pub fn aggregate(reports: &[EvalReport]) -> Result<AggregateStats, EvalError> {
    if reports.is_empty() {
        return Err(EvalError::EmptyAggregate);
    }
    let mode = reports[0].mode;
    if reports.iter().any(|r| r.mode != mode) {
        return Err(EvalError::MixedModes);
    }
    let fields = |r: &EvalReport| -> [f64; 8] {
        [
            r.predicted as f64,
            r.expected as f64,
            r.reversed as f64,
            r.missing as f64,
            r.false_pos as f64,
            r.true_edges as f64,
            r.tpr,
            r.fdr,
        ]
    };
    let n = reports.len() as f64;
    let mut mean = [0.0f64; 8];
    for r in reports {
        for (m, v) in mean.iter_mut().zip(fields(r)) {
            *m += v;
        }
    }
    for m in mean.iter_mut() {
        *m /= n;
    }
    let mut var = [0.0f64; 8];
    if reports.len() > 1 {
        for r in reports {
            for ((s, v), m) in var.iter_mut().zip(fields(r)).zip(mean) {
                *s += (v - m) * (v - m);
            }
        }
        for s in var.iter_mut() {
            *s /= n - 1.0;
        }
        // Identical columns get an exact 0 (the mean's rounding would
        // otherwise leak in as ~1e-16).
        let first = fields(&reports[0]);
        for (f, s) in var.iter_mut().enumerate() {
            if reports.iter().all(|r| fields(r)[f] == first[f]) {
                *s = 0.0;
            }
        }
    }
    let pack = |a: [f64; 8]| EvalSummary {
        predicted: a[0],
        expected: a[1],
        reversed: a[2],
        missing: a[3],
        false_pos: a[4],
        true_edges: a[5],
        tpr: a[6],
        fdr: a[7],
    };
    let sd = {
        let mut s = var;
        for v in s.iter_mut() {
            *v = math::sqrt(*v);
        }
        pack(s)
    };
    Ok(AggregateStats {
        mode,
        count: reports.len(),
        mean: pack(mean),
        sd,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn graph(p: usize, edges: &[(usize, usize)]) -> DagStructure {
        let mut g = DagStructure::new(p);
        for &(i, j) in edges {
            g.add_edge(i, j).unwrap();
        }
        g
    }

    #[test]
    fn dag_counts_follow_the_definitions() {
        // Truth 0→1, 1→2; estimate 0→1 (expected), 2→1 (reversed),
        // 0→3 (false positive).
        let truth = graph(4, &[(0, 1), (1, 2)]);
        let est = graph(4, &[(0, 1), (2, 1), (0, 3)]);
        let r = score_dag(&truth, &est).unwrap();
        assert_eq!(
            (r.predicted, r.expected, r.reversed, r.false_pos, r.missing),
            (3, 1, 1, 1, 0)
        );
        assert_eq!(r.tpr, 0.5);
        assert!((r.fdr - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(r.predicted, r.expected + r.reversed + r.false_pos);
        assert_eq!(r.missing, r.true_edges - r.expected - r.reversed);
    }

    #[test]
    fn perfect_and_empty_estimates() {
        let truth = graph(3, &[(0, 1), (1, 2)]);
        let same = score_dag(&truth, &truth.clone()).unwrap();
        assert_eq!((same.tpr, same.fdr), (1.0, 0.0));
        let empty = score_dag(&truth, &DagStructure::new(3)).unwrap();
        assert_eq!((empty.predicted, empty.tpr, empty.fdr), (0, 0.0, 0.0));
        assert_eq!(empty.missing, 2);
    }

    #[test]
    fn skeleton_mode_ignores_direction() {
        let truth = graph(2, &[(0, 1)]);
        let est = graph(2, &[(1, 0)]);
        let r = score_skeleton(&truth, &est).unwrap();
        assert_eq!((r.expected, r.tpr, r.fdr), (1, 1.0, 0.0));
        assert_eq!(r.reversed, 0);

        let disjoint = score_skeleton(&graph(4, &[(0, 1)]), &graph(4, &[(2, 3)])).unwrap();
        assert_eq!((disjoint.expected, disjoint.fdr), (0, 1.0));
    }

    #[test]
    fn node_count_mismatch_is_an_error() {
        let e = score_dag(&DagStructure::new(3), &DagStructure::new(4));
        assert!(matches!(e, Err(EvalError::NodeCountMismatch { .. })));
    }

    #[test]
    fn aggregate_mean_and_sample_sd() {
        let truth = graph(3, &[(0, 1), (1, 2)]);
        let r1 = score_dag(&truth, &graph(3, &[(0, 1), (1, 2)])).unwrap(); // TPR 1.0
        let mut r2 = score_dag(&truth, &graph(3, &[(0, 1)])).unwrap(); // TPR 0.5
        // Adjust to the spec's two-point example (0.4, 0.6).
        r2.tpr = 0.4;
        let mut r1 = r1;
        r1.tpr = 0.6;
        let agg = aggregate(&[r1, r2]).unwrap();
        assert!((agg.mean.tpr - 0.5).abs() < 1e-15);
        assert!((agg.sd.tpr - (0.02f64).sqrt()).abs() < 1e-12);

        let single = aggregate(&[r1]).unwrap();
        assert_eq!(single.mean.tpr, r1.tpr);
        assert_eq!(single.sd.tpr, 0.0);

        let twenty: Vec<EvalReport> = (0..20).map(|_| r1).collect();
        let agg20 = aggregate(&twenty).unwrap();
        assert_eq!(agg20.sd.tpr, 0.0);
        assert_eq!(agg20.sd.fdr, 0.0);

        assert!(matches!(aggregate(&[]), Err(EvalError::EmptyAggregate)));
        let mut sk = score_skeleton(&truth, &truth.clone()).unwrap();
        sk.mode = ScoreMode::Skeleton;
        assert!(matches!(
            aggregate(&[r1, sk]),
            Err(EvalError::MixedModes)
        ));
    }
}
