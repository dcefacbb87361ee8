//! DAG representation, incremental cycle checks, topological sorting, and
//! skeleton extraction, plus the edge-list / DOT text formats.

use alloc::collections::BinaryHeap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Reverse;
use core::fmt::Write as _;

/// Directed acyclic graph over nodes 0..p with edge (i, j) meaning i → j.
///
/// Adjacency is stored both forward and reverse so cycle checks cost
/// O(reachable set); at most one of (i, j), (j, i) is ever present.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DagStructure {
    p: usize,
    children: Vec<Vec<usize>>, // sorted
    parents: Vec<Vec<usize>>,  // sorted
    edge_count: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum GraphError {
    SelfLoop { node: usize },
    CycleDetected,
    NodeOutOfRange { node: usize },
    DuplicateEdge { from: usize, to: usize },
}

impl core::fmt::Display for GraphError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            GraphError::SelfLoop { node } => write!(f, "self-loop at node {}", node + 1),
            GraphError::CycleDetected => write!(f, "graph contains a directed cycle"),
            GraphError::NodeOutOfRange { node } => write!(f, "node {} out of range", node + 1),
            GraphError::DuplicateEdge { from, to } => {
                write!(f, "edge {} -> {} already present", from + 1, to + 1)
            }
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for GraphError {}

impl DagStructure {
    pub fn new(p: usize) -> Self {
        DagStructure {
            p,
            children: vec![Vec::new(); p],
            parents: vec![Vec::new(); p],
            edge_count: 0,
        }
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.children[i].binary_search(&j).is_ok()
    }

    pub fn parents(&self, j: usize) -> &[usize] {
        &self.parents[j]
    }

    pub fn children(&self, i: usize) -> &[usize] {
        &self.children[i]
    }

    /// All edges (i, j) in lexicographic order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.edge_count);
        for i in 0..self.p {
            for &j in &self.children[i] {
                out.push((i, j));
            }
        }
        out
    }

    /// True iff adding i → j would close a directed cycle, i.e. j already
    /// reaches i. Breadth-first search on the forward adjacency.
    pub fn induces_cycle(&self, i: usize, j: usize) -> Result<bool, GraphError> {
        if i == j {
            return Err(GraphError::SelfLoop { node: i });
        }
        if i >= self.p || j >= self.p {
            return Err(GraphError::NodeOutOfRange { node: i.max(j) });
        }
        let mut seen = vec![false; self.p];
        let mut queue = Vec::with_capacity(16);
        seen[j] = true;
        queue.push(j);
        let mut head = 0;
        while head < queue.len() {
            let v = queue[head];
            head += 1;
            for &w in &self.children[v] {
                if w == i {
                    return Ok(true);
                }
                if !seen[w] {
                    seen[w] = true;
                    queue.push(w);
                }
            }
        }
        Ok(false)
    }

    /// Inserts i → j without re-running a cycle check; callers guard with
    /// `induces_cycle`. Rejects duplicates and self-loops.
    pub fn add_edge(&mut self, i: usize, j: usize) -> Result<(), GraphError> {
        if i == j {
            return Err(GraphError::SelfLoop { node: i });
        }
        if i >= self.p || j >= self.p {
            return Err(GraphError::NodeOutOfRange { node: i.max(j) });
        }
        match self.children[i].binary_search(&j) {
            Ok(_) => return Err(GraphError::DuplicateEdge { from: i, to: j }),
            Err(pos) => self.children[i].insert(pos, j),
        }
        let pos = self.parents[j].binary_search(&i).unwrap_err();
        self.parents[j].insert(pos, i);
        self.edge_count += 1;
        Ok(())
    }

    /// Removes i → j if present; returns whether an edge was removed.
    pub fn remove_edge(&mut self, i: usize, j: usize) -> bool {
        match self.children[i].binary_search(&j) {
            Ok(pos) => {
                self.children[i].remove(pos);
                let ppos = self.parents[j].binary_search(&i).unwrap();
                self.parents[j].remove(ppos);
                self.edge_count -= 1;
                true
            }
            Err(_) => false,
        }
    }

    /// Kahn's algorithm with lowest-index-first tie-break; errors on a cycle.
    pub fn topological_sort(&self) -> Result<Vec<usize>, GraphError> {
        let mut indegree: Vec<usize> = (0..self.p).map(|j| self.parents[j].len()).collect();
        let mut ready: BinaryHeap<Reverse<usize>> = (0..self.p)
            .filter(|&j| indegree[j] == 0)
            .map(Reverse)
            .collect();
        let mut order = Vec::with_capacity(self.p);
        while let Some(Reverse(v)) = ready.pop() {
            order.push(v);
            for &w in &self.children[v] {
                indegree[w] -= 1;
                if indegree[w] == 0 {
                    ready.push(Reverse(w));
                }
            }
        }
        if order.len() == self.p {
            Ok(order)
        } else {
            Err(GraphError::CycleDetected)
        }
    }

    /// Unordered adjacent pairs {i, j} with i < j, sorted.
    pub fn skeleton(&self) -> Vec<(usize, usize)> {
        let mut out: Vec<(usize, usize)> = self
            .edges()
            .into_iter()
            .map(|(i, j)| if i < j { (i, j) } else { (j, i) })
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Text form "i j" per line, 1-based, lexicographic order.
    pub fn to_edge_list(&self) -> String {
        let mut s = String::new();
        for (i, j) in self.edges() {
            let _ = writeln!(s, "{} {}", i + 1, j + 1);
        }
        s
    }

    /// Parses the edge-list format; `p` must cover every mentioned node.
    pub fn from_edge_list(text: &str, p: usize) -> Result<Self, GraphError> {
        let mut g = DagStructure::new(p);
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let mut it = line.split_whitespace();
            let i: usize = it
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or(GraphError::NodeOutOfRange { node: p })?;
            let j: usize = it
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or(GraphError::NodeOutOfRange { node: p })?;
            if i < 1 || j < 1 {
                return Err(GraphError::NodeOutOfRange { node: 0 });
            }
            g.add_edge(i - 1, j - 1)?;
        }
        // Defensive: files are untrusted.
        g.topological_sort()?;
        Ok(g)
    }

    /// DOT digraph with 1-based numeric node ids; isolated nodes declared.
    pub fn to_dot(&self) -> String {
        let mut s = String::from("digraph dag {\n");
        for v in 0..self.p {
            if self.children[v].is_empty() && self.parents[v].is_empty() {
                let _ = writeln!(s, "  {};", v + 1);
            }
        }
        for (i, j) in self.edges() {
            let _ = writeln!(s, "  {} -> {};", i + 1, j + 1);
        }
        s.push_str("}\n");
        s
    }
}
