//! Benchmark graph generators (bipartite, polytree, scale-free, small-world)
//! and the binary ancestral sampler with uniform single-node interventions.

use alloc::collections::BTreeSet;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::dataset::CategoricalDataset;
use crate::graph::DagStructure;
use crate::math;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GraphFamily {
    Bipartite,
    Polytree,
    ScaleFree,
    SmallWorld,
}

impl GraphFamily {
    pub fn name(&self) -> &'static str {
        match self {
            GraphFamily::Bipartite => "bipartite",
            GraphFamily::Polytree => "polytree",
            GraphFamily::ScaleFree => "scalefree",
            GraphFamily::SmallWorld => "smallworld",
        }
    }

    /// Expected edge count s₀ for node count p.
    pub fn edge_budget(&self, p: usize) -> usize {
        match self {
            GraphFamily::Bipartite => p,
            GraphFamily::Polytree => p - 1,
            GraphFamily::ScaleFree => p - 1,
            GraphFamily::SmallWorld => 2 * p,
        }
    }
}

impl core::str::FromStr for GraphFamily {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, SimError> {
        match s {
            "bipartite" => Ok(GraphFamily::Bipartite),
            "polytree" => Ok(GraphFamily::Polytree),
            "scalefree" => Ok(GraphFamily::ScaleFree),
            "smallworld" => Ok(GraphFamily::SmallWorld),
            _ => Err(SimError::UnknownFamily),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SimError {
    /// p violates the family's structural requirements.
    InvalidNodeCount { p: usize, reason: &'static str },
    UnknownFamily,
}

impl core::fmt::Display for SimError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            SimError::InvalidNodeCount { p, reason } => {
                write!(f, "invalid node count {}: {}", p, reason)
            }
            SimError::UnknownFamily => write!(
                f,
                "unknown family (expected bipartite|polytree|scalefree|smallworld)"
            ),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for SimError {}

/// Recipe for one benchmark graph.
#[derive(Clone, Debug)]
pub struct GraphSpec {
    pub family: GraphFamily,
    /// Node count; bipartite/polytree need p ≥ 10 and 5 | p.
    pub p: usize,
    pub seed: u64,
    /// Small-world rewiring probability; ignored by other families.
    pub rewire_prob: f64,
}

impl GraphSpec {
    pub fn new(family: GraphFamily, p: usize, seed: u64) -> Self {
        GraphSpec {
            family,
            p,
            seed,
            rewire_prob: 0.1,
        }
    }
}

/// Sampling mode: either p interventional blocks of equal size or a purely
/// observational sample.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SampleMode {
    /// n = p·n_per_block rows; block j fixes node j uniformly at random.
    Interventional { n_per_block: usize },
    Observational { n_obs: usize },
}

/// Recipe for one dataset drawn from a graph.
#[derive(Clone, Debug)]
pub struct SampleSpec {
    pub mode: SampleMode,
    /// Coefficient scale of the conditional law (paper value 2).
    pub effect_size: f64,
    pub seed: u64,
}

impl SampleSpec {
    pub fn interventional(n_per_block: usize, seed: u64) -> Self {
        SampleSpec {
            mode: SampleMode::Interventional { n_per_block },
            effect_size: 2.0,
            seed,
        }
    }

    pub fn observational(n_obs: usize, seed: u64) -> Self {
        SampleSpec {
            mode: SampleMode::Observational { n_obs },
            effect_size: 2.0,
            seed,
        }
    }
}

/// P(X_j = 2 | parents) under the generator's law: level probabilities
/// ∝ exp(effect·#parents at that level); c1/c2 count parents at levels 1/2.
pub fn conditional_prob_level2(effect_size: f64, c1: usize, c2: usize) -> f64 {
    // Logistic in the count difference — numerically stable for any counts.
    let z = effect_size * (c2 as f64 - c1 as f64);
    1.0 / (1.0 + math::exp(-z))
}

pub fn generate_graph(spec: &GraphSpec) -> Result<DagStructure, SimError> {
    let p = spec.p;
    let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);
    match spec.family {
        GraphFamily::Bipartite => {
            if p < 10 || p % 5 != 0 {
                return Err(SimError::InvalidNodeCount {
                    p,
                    reason: "bipartite needs p >= 10 with p divisible by 5",
                });
            }
            Ok(bipartite(p, &mut rng))
        }
        GraphFamily::Polytree => {
            if p < 10 || p % 5 != 0 {
                return Err(SimError::InvalidNodeCount {
                    p,
                    reason: "polytree needs p >= 10 with p divisible by 5",
                });
            }
            Ok(polytree(p, &mut rng))
        }
        GraphFamily::ScaleFree => {
            if p < 2 {
                return Err(SimError::InvalidNodeCount {
                    p,
                    reason: "scale-free needs p >= 2",
                });
            }
            Ok(scale_free(p, &mut rng))
        }
        GraphFamily::SmallWorld => {
            if p < 5 {
                return Err(SimError::InvalidNodeCount {
                    p,
                    reason: "small-world lattice (2 neighbors per side) needs p >= 5",
                });
            }
            Ok(small_world(p, spec.rewire_prob, &mut rng))
        }
    }
}

/// 0.2p top nodes (labels 0..p/5), 0.8p bottom nodes; p edges drawn uniformly
/// without replacement from top×bottom, directed top→bottom.
fn bipartite(p: usize, rng: &mut ChaCha12Rng) -> DagStructure {
    let top = p / 5;
    let bottom = p - top;
    let picks = rand::seq::index::sample(rng, top * bottom, p);
    let mut g = DagStructure::new(p);
    for idx in picks.iter() {
        let t = idx / bottom;
        let b = top + idx % bottom;
        g.add_edge(t, b).unwrap();
    }
    g
}

/// Five heap-shaped complete binary trees of 0.2p nodes each, oriented
/// root→leaves, chained by 4 connecting edges with uniform endpoints and
/// direction. The skeleton stays a tree, so the result is acyclic.
fn polytree(p: usize, rng: &mut ChaCha12Rng) -> DagStructure {
    let q = p / 5;
    let mut g = DagStructure::new(p);
    for t in 0..5 {
        let base = t * q;
        for o in 0..q {
            for c in [2 * o + 1, 2 * o + 2] {
                if c < q {
                    g.add_edge(base + o, base + c).unwrap();
                }
            }
        }
    }
    for k in 0..4 {
        let a = k * q + rng.random_range(0..q);
        let b = (k + 1) * q + rng.random_range(0..q);
        if rng.random_bool(0.5) {
            g.add_edge(a, b).unwrap();
        } else {
            g.add_edge(b, a).unwrap();
        }
    }
    g
}

/// Barabási–Albert preferential attachment with zero-appeal +1: each
/// arriving node v attaches to one previous node drawn with probability
/// ∝ degree+1, and the edge is oriented earlier→later.
fn scale_free(p: usize, rng: &mut ChaCha12Rng) -> DagStructure {
    let mut g = DagStructure::new(p);
    let mut degree = vec![0usize; p];
    for v in 1..p {
        let total: usize = degree[..v].iter().map(|&d| d + 1).sum();
        let mut draw = rng.random_range(0..total);
        let mut u = 0;
        for (node, &d) in degree[..v].iter().enumerate() {
            let w = d + 1;
            if draw < w {
                u = node;
                break;
            }
            draw -= w;
        }
        g.add_edge(u, v).unwrap();
        degree[u] += 1;
        degree[v] += 1;
    }
    g
}

/// Watts–Strogatz: ring lattice with 2 neighbors per side, far endpoint of
/// each lattice edge rewired with probability `rewire_prob` (resampled to
/// avoid self-loops and duplicates), then every undirected edge oriented by
/// a uniformly random permutation taken as the topological order.
fn small_world(p: usize, rewire_prob: f64, rng: &mut ChaCha12Rng) -> DagStructure {
    let mut edges: BTreeSet<(usize, usize)> = BTreeSet::new();
    let norm = |a: usize, b: usize| if a < b { (a, b) } else { (b, a) };
    for offset in [1usize, 2] {
        for i in 0..p {
            edges.insert(norm(i, (i + offset) % p));
        }
    }
    debug_assert_eq!(edges.len(), 2 * p);
    for offset in [1usize, 2] {
        for i in 0..p {
            let old = norm(i, (i + offset) % p);
            if !edges.contains(&old) {
                // Already rewired away by an earlier step.
                continue;
            }
            if rng.random_bool(rewire_prob) {
                edges.remove(&old);
                loop {
                    let cand = rng.random_range(0..p);
                    if cand == i || edges.contains(&norm(i, cand)) {
                        continue;
                    }
                    edges.insert(norm(i, cand));
                    break;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..p).collect();
    order.shuffle(rng);
    let mut pos = vec![0usize; p];
    for (k, &v) in order.iter().enumerate() {
        pos[v] = k;
    }
    let mut g = DagStructure::new(p);
    for &(a, b) in &edges {
        if pos[a] < pos[b] {
            g.add_edge(a, b).unwrap();
        } else {
            g.add_edge(b, a).unwrap();
        }
    }
    g
}

/// Ancestral sampling of binary variables in topological order; in
/// interventional mode block j fixes X_j uniformly over its levels and the
/// rows record the intervened node.
pub fn sample_data(g: &DagStructure, spec: &SampleSpec) -> CategoricalDataset {
    let p = g.p();
    let order = g.topological_sort().expect("sampling needs an acyclic graph");
    let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);
    let (n, blocks) = match spec.mode {
        SampleMode::Interventional { n_per_block } => (p * n_per_block, Some(n_per_block)),
        SampleMode::Observational { n_obs } => (n_obs, None),
    };
    let mut values = vec![0u16; n * p];
    let mut interventions = Vec::new();
    for h in 0..n {
        let fixed = blocks.map(|nb| h / nb);
        if let Some(j) = fixed {
            interventions.push((h, j));
        }
        for &j in &order {
            let level = if fixed == Some(j) {
                if rng.random_bool(0.5) {
                    2
                } else {
                    1
                }
            } else {
                let mut c1 = 0usize;
                let mut c2 = 0usize;
                for &i in g.parents(j) {
                    if values[h * p + i] == 2 {
                        c2 += 1;
                    } else {
                        c1 += 1;
                    }
                }
                let p2 = conditional_prob_level2(spec.effect_size, c1, c2);
                if rng.random_bool(p2) {
                    2
                } else {
                    1
                }
            };
            values[h * p + j] = level;
        }
    }
    CategoricalDataset::new(values, p, Some(vec![2u16; p]), &interventions)
        .expect("generator emits a valid dataset")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bipartite_shape_and_count() {
        let g = generate_graph(&GraphSpec::new(GraphFamily::Bipartite, 50, 4)).unwrap();
        assert_eq!(g.edge_count(), 50);
        for (i, j) in g.edges() {
            assert!(i < 10, "source {} must be a top node", i);
            assert!((10..50).contains(&j), "target {} must be a bottom node", j);
        }
        assert!(g.topological_sort().is_ok());
    }

    #[test]
    fn polytree_skeleton_is_a_tree() {
        let g = generate_graph(&GraphSpec::new(GraphFamily::Polytree, 50, 4)).unwrap();
        assert_eq!(g.edge_count(), 49);
        assert!(g.topological_sort().is_ok());
        // Connected undirected graph with p−1 edges ⇔ tree.
        let sk = g.skeleton();
        assert_eq!(sk.len(), 49);
        let mut adj = vec![Vec::new(); 50];
        for &(a, b) in &sk {
            adj[a].push(b);
            adj[b].push(a);
        }
        let mut seen = vec![false; 50];
        let mut stack = vec![0usize];
        seen[0] = true;
        let mut count = 1;
        while let Some(v) = stack.pop() {
            for &w in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    count += 1;
                    stack.push(w);
                }
            }
        }
        assert_eq!(count, 50);
    }

    #[test]
    fn scale_free_orients_earlier_to_later() {
        let g = generate_graph(&GraphSpec::new(GraphFamily::ScaleFree, 100, 4)).unwrap();
        assert_eq!(g.edge_count(), 99);
        for (i, j) in g.edges() {
            assert!(i < j);
        }
    }

    #[test]
    fn small_world_count_and_acyclicity() {
        let g = generate_graph(&GraphSpec::new(GraphFamily::SmallWorld, 100, 4)).unwrap();
        assert_eq!(g.edge_count(), 200);
        assert!(g.topological_sort().is_ok());
    }

    #[test]
    fn edge_budgets_hold_across_p() {
        for p in [10usize, 25, 50, 100] {
            for fam in [
                GraphFamily::Bipartite,
                GraphFamily::Polytree,
                GraphFamily::ScaleFree,
                GraphFamily::SmallWorld,
            ] {
                let g = generate_graph(&GraphSpec::new(fam, p, 7)).unwrap();
                assert_eq!(g.edge_count(), fam.edge_budget(p), "{} p={}", fam.name(), p);
                assert!(g.topological_sort().is_ok());
            }
        }
    }

    #[test]
    fn invalid_node_counts_are_rejected() {
        assert!(generate_graph(&GraphSpec::new(GraphFamily::Bipartite, 12, 0)).is_err());
        assert!(generate_graph(&GraphSpec::new(GraphFamily::Polytree, 5, 0)).is_err());
        assert!(generate_graph(&GraphSpec::new(GraphFamily::SmallWorld, 4, 0)).is_err());
    }

    #[test]
    fn generation_and_sampling_are_deterministic() {
        let spec = GraphSpec::new(GraphFamily::SmallWorld, 30, 99);
        let g1 = generate_graph(&spec).unwrap();
        let g2 = generate_graph(&spec).unwrap();
        assert_eq!(g1.edges(), g2.edges());
        let s = SampleSpec::interventional(3, 123);
        let d1 = sample_data(&g1, &s);
        let d2 = sample_data(&g2, &s);
        assert_eq!(d1.n(), 90);
        for h in 0..d1.n() {
            assert_eq!(d1.intervened_node(h), d2.intervened_node(h));
            for j in 0..30 {
                assert_eq!(d1.level(h, j), d2.level(h, j));
            }
        }
        // A different seed moves at least one cell.
        let d3 = sample_data(&g1, &SampleSpec::interventional(3, 124));
        let any_diff = (0..d1.n()).any(|h| (0..30).any(|j| d1.level(h, j) != d3.level(h, j)));
        assert!(any_diff);
    }

    #[test]
    fn conditional_law_log_odds_is_the_effect_size() {
        // One agreeing parent: P(child = parent's level) = e²/(e²+1).
        let p2 = conditional_prob_level2(2.0, 0, 1);
        assert!((math::ln(p2 / (1.0 - p2)) - 2.0).abs() < 1e-12);
        assert!((p2 - 0.8808).abs() < 5e-5);
        // Balanced counts → exactly 1/2; zero parents ditto.
        assert_eq!(conditional_prob_level2(2.0, 1, 1), 0.5);
        assert_eq!(conditional_prob_level2(2.0, 0, 0), 0.5);
    }

    #[test]
    fn parentless_marginal_is_uniform() {
        let g = DagStructure::new(1);
        let ds = sample_data(&g, &SampleSpec::observational(5000, 5));
        let ones = (0..ds.n()).filter(|&h| ds.level(h, 0) == 1).count() as f64;
        let freq = ones / 5000.0;
        let sd = 0.5 / (5000.0f64).sqrt();
        assert!((freq - 0.5).abs() < 3.0 * sd, "freq {}", freq);
    }

    #[test]
    fn single_parent_conditional_matches_table() {
        let mut g = DagStructure::new(2);
        g.add_edge(0, 1).unwrap();
        let ds = sample_data(&g, &SampleSpec::observational(5000, 8));
        let agree = (2.0f64).exp() / ((2.0f64).exp() + 1.0);
        for parent_level in [1u16, 2] {
            let rows: Vec<usize> = (0..ds.n()).filter(|&h| ds.level(h, 0) == parent_level).collect();
            let hits = rows
                .iter()
                .filter(|&&h| ds.level(h, 1) == parent_level)
                .count() as f64;
            let freq = hits / rows.len() as f64;
            let sd = (agree * (1.0 - agree) / rows.len() as f64).sqrt();
            assert!(
                (freq - agree).abs() < 3.0 * sd,
                "parent level {}: freq {} vs {}",
                parent_level,
                freq,
                agree
            );
        }
    }

    #[test]
    fn intervened_column_is_uniform_and_parent_free() {
        // Strong edge 0 → 1; in node 1's block the intervention severs it.
        let mut g = DagStructure::new(2);
        g.add_edge(0, 1).unwrap();
        for seed in [21u64, 22] {
            let ds = sample_data(&g, &SampleSpec::interventional(2000, seed));
            let block1: Vec<usize> = (0..ds.n())
                .filter(|&h| ds.intervened_node(h) == Some(1))
                .collect();
            assert_eq!(block1.len(), 2000);
            // 2×2 contingency of (parent level, child level); independence
            // chi-square with 1 df, 1% critical value 6.635.
            let mut c = [[0.0f64; 2]; 2];
            for &h in &block1 {
                c[ds.level(h, 0) as usize - 1][ds.level(h, 1) as usize - 1] += 1.0;
            }
            let n = 2000.0;
            let mut chi2 = 0.0;
            for a in 0..2 {
                for b in 0..2 {
                    let exp = (c[a][0] + c[a][1]) * (c[0][b] + c[1][b]) / n;
                    chi2 += (c[a][b] - exp) * (c[a][b] - exp) / exp;
                }
            }
            assert!(chi2 < 6.635, "seed {}: chi2 {}", seed, chi2);
            // And the intervened column itself is near-uniform.
            let twos = block1.iter().filter(|&&h| ds.level(h, 1) == 2).count() as f64;
            let freq = twos / n;
            assert!((freq - 0.5).abs() < 3.0 * 0.5 / n.sqrt());
        }
    }
}
