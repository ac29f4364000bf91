//! Communication topologies, Laplacian spectra, and delay budgets.
//!
//! A [`Topology`] is a simple connected undirected graph over agent indices
//! `0..n`. Its Laplacian `L = D - A` drives the consensus dynamics; the
//! largest eigenvalue bounds the communication delay the swarm can tolerate
//! while still reaching agreement (see [`delay_budget`]).

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Off-diagonal norm at which the Jacobi sweep is considered converged.
pub const JACOBI_TOLERANCE: f64 = 1e-9;
/// Hard cap on Jacobi sweeps before giving up.
pub const JACOBI_MAX_SWEEPS: usize = 100;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("node index {node} out of range for {n} nodes")]
    NodeOutOfRange { node: usize, n: usize },
    #[error("self-loop at node {0}")]
    SelfLoop(usize),
    #[error("duplicate edge {0} {1}")]
    DuplicateEdge(usize, usize),
    #[error("graph not connected")]
    NotConnected,
    #[error("no connected graph on {n} nodes with max degree {d_max}")]
    Infeasible { n: usize, d_max: usize },
    #[error("eigensolver did not reach residual {tolerance} after {sweeps} sweeps (residual {residual})")]
    NonConvergence {
        residual: f64,
        tolerance: f64,
        sweeps: usize,
    },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// Simple connected undirected graph over nodes `0..n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    n: usize,
    edges: BTreeSet<(usize, usize)>,
    preset_name: Option<String>,
}

impl Topology {
    /// Builds a topology from an edge list, validating that the graph is
    /// simple, within range, and connected.
    pub fn new(n: usize, edges: &[(usize, usize)]) -> Result<Self, GraphError> {
        let mut set = BTreeSet::new();
        for &(a, b) in edges {
            if a >= n {
                return Err(GraphError::NodeOutOfRange { node: a, n });
            }
            if b >= n {
                return Err(GraphError::NodeOutOfRange { node: b, n });
            }
            if a == b {
                return Err(GraphError::SelfLoop(a));
            }
            let e = (a.min(b), a.max(b));
            if !set.insert(e) {
                return Err(GraphError::DuplicateEdge(e.0, e.1));
            }
        }
        let topo = Topology {
            n,
            edges: set,
            preset_name: None,
        };
        if !topo.is_connected() {
            return Err(GraphError::NotConnected);
        }
        Ok(topo)
    }

    /// Complete graph on `n` nodes.
    pub fn complete(n: usize) -> Result<Self, GraphError> {
        let mut edges = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                edges.push((i, j));
            }
        }
        Topology::new(n, &edges)
    }

    /// Cycle graph on `n >= 3` nodes.
    pub fn cycle(n: usize) -> Result<Self, GraphError> {
        let edges: Vec<_> = (0..n).map(|i| (i, (i + 1) % n)).collect();
        Topology::new(n, &edges)
    }

    /// Path graph on `n` nodes.
    pub fn path(n: usize) -> Result<Self, GraphError> {
        let edges: Vec<_> = (0..n.saturating_sub(1)).map(|i| (i, i + 1)).collect();
        Topology::new(n, &edges)
    }

    /// The bundled six-agent sharing topology: a ring 0-1-2-3-4-5 with one
    /// chord {2,5}. Node 5 has degree 3 and node 3 has degree 2; the maximum
    /// node degree is 3.
    pub fn six_node_preset() -> Self {
        let edges = [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 0), (2, 5)];
        let mut topo = Topology::new(6, &edges).expect("preset is valid");
        topo.preset_name = Some("six-node".to_string());
        topo
    }

    /// Looks up a named preset.
    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "six-node" => Some(Self::six_node_preset()),
            _ => None,
        }
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn preset_name(&self) -> Option<&str> {
        self.preset_name.as_deref()
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.edges.contains(&(a.min(b), a.max(b)))
    }

    /// Neighbor lists indexed by node.
    pub fn neighbors(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n];
        for &(a, b) in &self.edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        adj
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0usize; self.n];
        for &(a, b) in &self.edges {
            deg[a] += 1;
            deg[b] += 1;
        }
        deg
    }

    /// Maximum node degree.
    pub fn max_degree(&self) -> usize {
        self.degrees().into_iter().max().unwrap_or(0)
    }

    fn is_connected(&self) -> bool {
        if self.n == 0 {
            return false;
        }
        let adj = self.neighbors();
        let mut seen = vec![false; self.n];
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
        count == self.n
    }

    /// Dense Laplacian `L = D - A`: `-1` for each edge, node degree on the
    /// diagonal. Symmetric with zero row sums.
    pub fn laplacian(&self) -> Vec<Vec<f64>> {
        let mut l = vec![vec![0.0; self.n]; self.n];
        for &(a, b) in &self.edges {
            l[a][b] = -1.0;
            l[b][a] = -1.0;
            l[a][a] += 1.0;
            l[b][b] += 1.0;
        }
        l
    }

    /// Laplacian spectrum, ascending.
    pub fn spectrum(&self) -> Result<Spectrum, GraphError> {
        let mut eigenvalues = jacobi_eigenvalues(self.laplacian())?;
        eigenvalues.sort_by(|a, b| a.partial_cmp(b).expect("finite eigenvalues"));
        let d_max = self.max_degree();
        let spectrum = Spectrum {
            lambda_max: *eigenvalues.last().expect("nonempty"),
            eigenvalues,
            d_max,
        };
        spectrum.check()?;
        Ok(spectrum)
    }

    /// Delay budgets for consensus under communication lag: the exact
    /// threshold `pi / (2 lambda_max)` and the degree-based sufficient bound
    /// `pi / (4 d_max)`.
    pub fn delay_budget(&self) -> Result<DelayBudget, GraphError> {
        let spectrum = self.spectrum()?;
        Ok(DelayBudget {
            eps_exact: std::f64::consts::PI / (2.0 * spectrum.lambda_max),
            eps_sufficient: std::f64::consts::PI / (4.0 * spectrum.d_max as f64),
        })
    }

    /// Serializes as edge-list text: optional `# name=<preset>` header, then
    /// one `u v` pair per line, 0-indexed.
    pub fn to_edge_list(&self) -> String {
        let mut out = String::new();
        if let Some(name) = &self.preset_name {
            let _ = writeln!(out, "# name={name}");
        }
        let _ = writeln!(out, "# nodes={}", self.n);
        for &(a, b) in &self.edges {
            let _ = writeln!(out, "{a} {b}");
        }
        out
    }

    /// Parses the edge-list text format produced by [`Topology::to_edge_list`].
    ///
    /// Node count defaults to `1 + max index` unless a `# nodes=` header is
    /// present.
    pub fn from_edge_list(text: &str) -> Result<Self, GraphError> {
        let mut name = None;
        let mut n_header = None;
        let mut edges = Vec::new();
        let mut max_node = 0usize;
        for (idx, raw) in text.lines().enumerate() {
            let lineno = idx + 1;
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(comment) = line.strip_prefix('#') {
                let comment = comment.trim();
                if let Some(v) = comment.strip_prefix("name=") {
                    name = Some(v.trim().to_string());
                } else if let Some(v) = comment.strip_prefix("nodes=") {
                    n_header = Some(v.trim().parse::<usize>().map_err(|e| GraphError::Parse {
                        line: lineno,
                        msg: format!("bad node count: {e}"),
                    })?);
                }
                continue;
            }
            let mut parts = line.split_whitespace();
            let a = parts
                .next()
                .ok_or_else(|| GraphError::Parse {
                    line: lineno,
                    msg: "expected `u v`".to_string(),
                })?
                .parse::<usize>()
                .map_err(|e| GraphError::Parse {
                    line: lineno,
                    msg: format!("bad node index: {e}"),
                })?;
            let b = parts
                .next()
                .ok_or_else(|| GraphError::Parse {
                    line: lineno,
                    msg: "expected two node indices".to_string(),
                })?
                .parse::<usize>()
                .map_err(|e| GraphError::Parse {
                    line: lineno,
                    msg: format!("bad node index: {e}"),
                })?;
            if parts.next().is_some() {
                return Err(GraphError::Parse {
                    line: lineno,
                    msg: "trailing tokens after edge".to_string(),
                });
            }
            max_node = max_node.max(a).max(b);
            edges.push((a, b));
        }
        if edges.is_empty() {
            return Err(GraphError::Parse {
                line: 0,
                msg: "no edges in file".to_string(),
            });
        }
        let n = n_header.unwrap_or(max_node + 1);
        let mut topo = Topology::new(n, &edges)?;
        topo.preset_name = name;
        Ok(topo)
    }
}

/// Laplacian eigenvalues plus the topology facts needed for delay analysis.
#[derive(Debug, Clone)]
pub struct Spectrum {
    /// Ascending eigenvalues of `L`.
    pub eigenvalues: Vec<f64>,
    /// Largest eigenvalue.
    pub lambda_max: f64,
    /// Maximum node degree of the underlying topology.
    pub d_max: usize,
}

impl Spectrum {
    /// Second-smallest eigenvalue (algebraic connectivity).
    pub fn lambda_2(&self) -> f64 {
        self.eigenvalues[1]
    }

    fn check(&self) -> Result<(), GraphError> {
        let bad = self.eigenvalues[0].abs() > 1e-9
            || self.eigenvalues.iter().any(|&l| l < -1e-9)
            || self.lambda_max > 2.0 * self.d_max as f64 + 1e-9
            || self.eigenvalues.len() >= 2 && self.lambda_2() <= 1e-9;
        if bad {
            // A connected Laplacian violating these bounds means the solver
            // returned garbage, not that the graph is unusual.
            return Err(GraphError::NonConvergence {
                residual: self.eigenvalues[0].abs(),
                tolerance: JACOBI_TOLERANCE,
                sweeps: JACOBI_MAX_SWEEPS,
            });
        }
        Ok(())
    }
}

/// Delay thresholds for consensus convergence, in seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayBudget {
    /// `pi / (2 lambda_max)` — the tight threshold.
    pub eps_exact: f64,
    /// `pi / (4 d_max)` — degree-based sufficient bound, never above exact.
    pub eps_sufficient: f64,
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
///
/// Sweeps rotate away every off-diagonal pair in row order until the
/// off-diagonal Frobenius norm drops below [`JACOBI_TOLERANCE`]; gives up
/// after [`JACOBI_MAX_SWEEPS`].
pub fn jacobi_eigenvalues(mut a: Vec<Vec<f64>>) -> Result<Vec<f64>, GraphError> {
    let n = a.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    if n == 1 {
        return Ok(vec![a[0][0]]);
    }
    for sweep in 0..JACOBI_MAX_SWEEPS {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[p][q] * a[p][q];
            }
        }
        let off = (2.0 * off).sqrt();
        if off <= JACOBI_TOLERANCE {
            return Ok((0..n).map(|i| a[i][i]).collect());
        }
        let _ = sweep;
        for p in 0..(n - 1) {
            for q in (p + 1)..n {
                let apq = a[p][q];
                if apq == 0.0 {
                    continue;
                }
                // Rotation angle annihilating a[p][q].
                let theta = (a[q][q] - a[p][p]) / (2.0 * apq);
                let t = if theta.abs() > 1e300 {
                    0.5 / theta
                } else {
                    let sign = if theta >= 0.0 { 1.0 } else { -1.0 };
                    sign / (theta.abs() + (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                let tau = s / (1.0 + c);

                let h = t * apq;
                a[p][p] -= h;
                a[q][q] += h;
                a[p][q] = 0.0;
                a[q][p] = 0.0;
                for j in 0..n {
                    if j == p || j == q {
                        continue;
                    }
                    let ajp = a[j][p];
                    let ajq = a[j][q];
                    a[j][p] = ajp - s * (ajq + tau * ajp);
                    a[p][j] = a[j][p];
                    a[j][q] = ajq + s * (ajp - tau * ajq);
                    a[q][j] = a[j][q];
                }
            }
        }
    }
    let mut off = 0.0;
    for p in 0..n {
        for q in (p + 1)..n {
            off += a[p][q] * a[p][q];
        }
    }
    Err(GraphError::NonConvergence {
        residual: (2.0 * off).sqrt(),
        tolerance: JACOBI_TOLERANCE,
        sweeps: JACOBI_MAX_SWEEPS,
    })
}

/// Generates a connected topology with every node degree at most `d_max`,
/// deterministic for a seed.
///
/// Builds a random spanning tree (attaching each node to an earlier node
/// with spare degree), then adds extra edges in random order, skipping any
/// whose endpoint already sits at `d_max`.
pub fn generate_topology(n: usize, d_max: usize, seed: u64) -> Result<Topology, GraphError> {
    if n < 2 {
        return Err(GraphError::Infeasible { n, d_max });
    }
    // A spanning tree needs total degree 2(n-1).
    if d_max * n < 2 * (n - 1) {
        return Err(GraphError::Infeasible { n, d_max });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);

    let mut deg = vec![0usize; n];
    let mut edges: Vec<(usize, usize)> = Vec::new();
    for i in 1..n {
        let candidates: Vec<usize> = order[..i]
            .iter()
            .copied()
            .filter(|&v| deg[v] < d_max)
            .collect();
        // Total tree degree so far is 2(i-1) < i*d_max for d_max >= 2, so a
        // candidate always exists; d_max == 1 only admits n == 2.
        let &parent = candidates
            .get(rng.gen_range(0..candidates.len()))
            .expect("spanning tree attachment point");
        let child = order[i];
        edges.push((parent.min(child), parent.max(child)));
        deg[parent] += 1;
        deg[child] += 1;
    }

    let mut extra: Vec<(usize, usize)> = Vec::new();
    for a in 0..n {
        for b in (a + 1)..n {
            if !edges.contains(&(a, b)) {
                extra.push((a, b));
            }
        }
    }
    extra.shuffle(&mut rng);
    for (a, b) in extra {
        if deg[a] < d_max && deg[b] < d_max {
            edges.push((a, b));
            deg[a] += 1;
            deg[b] += 1;
        }
    }
    Topology::new(n, &edges)
}
