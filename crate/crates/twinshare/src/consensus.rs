//! Delayed averaging dynamics over a topology.
//!
//! Two steppers act on the same state: [`ConsensusState::step_continuous`]
//! integrates `dh/dt = -L h(t - eps)` with explicit Euler, and
//! [`ConsensusState::step_discrete`] applies the per-round integrator
//! `h_i(k+1) = h_i(k) + rho * sum_j (h_j(k-d) - h_i(k-d))` over neighbors.
//! Both read lagged values from a fixed-size history ring buffer primed with
//! the initial condition.

use std::collections::VecDeque;
use std::io::Write;

use thiserror::Error;

use crate::graph::Topology;

#[derive(Debug, Error)]
pub enum ConsensusError {
    #[error("requested lag of {requested} steps exceeds history capacity {capacity}")]
    HistoryUnderflow { requested: usize, capacity: usize },
    #[error("invalid step: {0}")]
    InvalidStep(String),
    #[error("parameter rows must match node count {expected}, got {got}")]
    BadDimensions { expected: usize, got: usize },
}

/// Per-node parameter vectors plus the delay history needed by the steppers.
#[derive(Debug, Clone)]
pub struct ConsensusState {
    topology: Topology,
    neighbors: Vec<Vec<usize>>,
    params: Vec<Vec<f64>>,
    /// Oldest snapshot at the front; the back entry equals `params`.
    history: VecDeque<Vec<Vec<f64>>>,
    max_lag: usize,
    t: f64,
    steps: u64,
}

impl ConsensusState {
    /// Creates a state holding `initial` (one vector per node) with history
    /// capacity for lags up to `max_lag` steps, primed with the initial
    /// condition held constant over the whole lag window.
    pub fn new(
        topology: Topology,
        initial: Vec<Vec<f64>>,
        max_lag: usize,
    ) -> Result<Self, ConsensusError> {
        let n = topology.node_count();
        if initial.len() != n {
            return Err(ConsensusError::BadDimensions {
                expected: n,
                got: initial.len(),
            });
        }
        let dim = initial.first().map_or(0, Vec::len);
        if initial.iter().any(|v| v.len() != dim) {
            return Err(ConsensusError::InvalidStep(
                "all parameter vectors must share one dimension".to_string(),
            ));
        }
        let neighbors = topology.neighbors();
        let mut history = VecDeque::with_capacity(max_lag + 1);
        for _ in 0..=max_lag {
            history.push_back(initial.clone());
        }
        Ok(ConsensusState {
            topology,
            neighbors,
            params: initial,
            history,
            max_lag,
            t: 0.0,
            steps: 0,
        })
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn params(&self) -> &[Vec<f64>] {
        &self.params
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn dim(&self) -> usize {
        self.params.first().map_or(0, Vec::len)
    }

    /// Mean parameter vector across nodes.
    pub fn mean(&self) -> Vec<f64> {
        let n = self.params.len() as f64;
        let dim = self.dim();
        let mut mean = vec![0.0; dim];
        for row in &self.params {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v / n;
            }
        }
        mean
    }

    /// Largest max-norm deviation of any node from the current mean.
    pub fn disagreement(&self) -> f64 {
        let mean = self.mean();
        self.params
            .iter()
            .map(|row| {
                row.iter()
                    .zip(&mean)
                    .map(|(v, m)| (v - m).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    }

    fn snapshot_at_lag(&self, lag: usize) -> Result<&Vec<Vec<f64>>, ConsensusError> {
        if lag > self.max_lag {
            return Err(ConsensusError::HistoryUnderflow {
                requested: lag,
                capacity: self.max_lag,
            });
        }
        Ok(&self.history[self.history.len() - 1 - lag])
    }

    fn push(&mut self, next: Vec<Vec<f64>>) {
        self.history.push_back(next.clone());
        self.history.pop_front();
        self.params = next;
        self.steps += 1;
    }

    /// Explicit-Euler step of `dh/dt = -L h(t - eps)`.
    ///
    /// The lag `eps` is mapped to whole history steps, rounding fractional
    /// lags up. Requires `dt > 0` and, when `eps > 0`, `dt <= eps / 10` so
    /// the delay is resolved.
    pub fn step_continuous(&mut self, dt: f64, eps: f64) -> Result<(), ConsensusError> {
        if dt.is_nan() || dt <= 0.0 {
            return Err(ConsensusError::InvalidStep(format!("dt = {dt}")));
        }
        if eps < 0.0 {
            return Err(ConsensusError::InvalidStep(format!("eps = {eps}")));
        }
        if eps > 0.0 && dt > eps / 10.0 {
            return Err(ConsensusError::InvalidStep(format!(
                "dt = {dt} does not resolve delay eps = {eps} (need dt <= eps/10)"
            )));
        }
        let lag = lag_steps(eps, dt);
        let lagged = self.snapshot_at_lag(lag)?;
        let dim = self.dim();
        let mut next = self.params.clone();
        for (i, nbrs) in self.neighbors.iter().enumerate() {
            for d in 0..dim {
                let mut flow = 0.0;
                for &j in nbrs {
                    flow += lagged[j][d] - lagged[i][d];
                }
                next[i][d] += dt * flow;
            }
        }
        self.push(next);
        self.t += dt;
        Ok(())
    }

    /// One sharing round `h_i += rho * sum_j (h_j(k-d) - h_i(k-d))`.
    pub fn step_discrete(&mut self, rho: f64, delay_rounds: usize) -> Result<(), ConsensusError> {
        self.step_discrete_filtered(rho, delay_rounds, |_, _| true)
    }

    /// Like [`Self::step_discrete`] but a neighbor term `j -> i` is included
    /// only when `received(i, j)` holds, modeling per-packet loss.
    pub fn step_discrete_filtered(
        &mut self,
        rho: f64,
        delay_rounds: usize,
        mut received: impl FnMut(usize, usize) -> bool,
    ) -> Result<(), ConsensusError> {
        if rho.is_nan() || rho <= 0.0 || rho >= 1.0 {
            return Err(ConsensusError::InvalidStep(format!(
                "rho = {rho} outside (0, 1)"
            )));
        }
        let lagged = self.snapshot_at_lag(delay_rounds)?.clone();
        let dim = self.dim();
        let mut next = self.params.clone();
        for (i, nbrs) in self.neighbors.iter().enumerate() {
            for &j in nbrs {
                if !received(i, j) {
                    continue;
                }
                for d in 0..dim {
                    next[i][d] += rho * (lagged[j][d] - lagged[i][d]);
                }
            }
        }
        self.push(next);
        Ok(())
    }

    /// Mixing weight `1 / (d_max + 1)`: keeps every per-round update a convex
    /// combination, so zero-delay rounds cannot increase disagreement.
    pub fn default_rho(&self) -> f64 {
        1.0 / (self.topology.max_degree() as f64 + 1.0)
    }
}

/// Whole history steps covering a lag of `eps` at step size `dt`, rounding
/// fractional lags up. Ratios within 1e-9 of an integer snap to it so that
/// `eps/dt = 200` does not spill into 201 steps through roundoff.
pub fn lag_steps(eps: f64, dt: f64) -> usize {
    if eps <= 0.0 {
        return 0;
    }
    let ratio = eps / dt;
    let nearest = ratio.round();
    if (ratio - nearest).abs() < 1e-9 {
        nearest as usize
    } else {
        ratio.ceil() as usize
    }
}

/// Outcome of [`run_until`].
#[derive(Debug, Clone)]
pub struct ConvergenceReport {
    pub converged: bool,
    pub steps: usize,
    pub final_disagreement: f64,
    /// Mean of the parameters at the start of the run; the agreement value
    /// both steppers preserve.
    pub consensus_value: Vec<f64>,
}

/// Steps `state` with `stepper` until disagreement falls to `tol` or
/// `max_steps` is exhausted.
pub fn run_until<F>(
    state: &mut ConsensusState,
    mut stepper: F,
    tol: f64,
    max_steps: usize,
) -> Result<ConvergenceReport, ConsensusError>
where
    F: FnMut(&mut ConsensusState) -> Result<(), ConsensusError>,
{
    let consensus_value = state.mean();
    let mut steps = 0;
    let mut disagreement = state.disagreement();
    while disagreement > tol && steps < max_steps {
        stepper(state)?;
        steps += 1;
        disagreement = state.disagreement();
    }
    Ok(ConvergenceReport {
        converged: disagreement <= tol,
        steps,
        final_disagreement: disagreement,
        consensus_value,
    })
}

/// Collects per-node deviation rows for CSV export.
#[derive(Debug, Default, Clone)]
pub struct TrajectoryLog {
    include_values: bool,
    rows: Vec<TrajectoryRow>,
}

#[derive(Debug, Clone)]
struct TrajectoryRow {
    step: u64,
    time: f64,
    node: usize,
    disagreement: f64,
    values: Vec<f64>,
}

impl TrajectoryLog {
    pub fn new(include_values: bool) -> Self {
        TrajectoryLog {
            include_values,
            rows: Vec::new(),
        }
    }

    /// Appends one row per node at the state's current step.
    pub fn record(&mut self, state: &ConsensusState) {
        let mean = state.mean();
        for (node, row) in state.params().iter().enumerate() {
            let dev = row
                .iter()
                .zip(&mean)
                .map(|(v, m)| (v - m).abs())
                .fold(0.0, f64::max);
            self.rows.push(TrajectoryRow {
                step: state.steps(),
                time: state.time(),
                node,
                disagreement: dev,
                values: if self.include_values {
                    row.clone()
                } else {
                    Vec::new()
                },
            });
        }
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let dim = self.rows.first().map_or(0, |r| r.values.len());
        write!(w, "step,time,node,disagreement")?;
        for d in 0..dim {
            write!(w, ",v{d}")?;
        }
        writeln!(w)?;
        for row in &self.rows {
            write!(
                w,
                "{},{},{},{}",
                row.step, row.time, row.node, row.disagreement
            )?;
            for v in &row.values {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("write to Vec cannot fail");
        String::from_utf8(buf).expect("csv is utf-8")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate_topology, Topology};
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn k2_state(max_lag: usize) -> ConsensusState {
        let topo = Topology::complete(2).unwrap();
        ConsensusState::new(topo, vec![vec![0.0], vec![1.0]], max_lag).unwrap()
    }

    fn sums(state: &ConsensusState) -> Vec<f64> {
        let dim = state.dim();
        let mut s = vec![0.0; dim];
        for row in state.params() {
            for (acc, v) in s.iter_mut().zip(row) {
                *acc += v;
            }
        }
        s
    }

    #[test]
    fn continuous_no_delay_converges_to_mean() {
        let mut state = k2_state(0);
        let report = run_until(&mut state, |s| s.step_continuous(0.01, 0.0), 1e-9, 10_000).unwrap();
        assert!(report.converged);
        assert_eq!(report.consensus_value, vec![0.5]);
        for row in state.params() {
            assert!((row[0] - 0.5).abs() < 1e-8);
        }
    }

    #[test]
    fn continuous_below_threshold_converges() {
        let eps = 0.9 * PI / 4.0;
        let dt = eps / 100.0;
        let mut state = k2_state(100);
        let report = run_until(&mut state, |s| s.step_continuous(dt, eps), 1e-6, 100_000).unwrap();
        assert!(report.converged, "stable delay should settle: {report:?}");
    }

    #[test]
    fn continuous_above_threshold_diverges() {
        let eps = 1.5 * PI / 4.0;
        let dt = eps / 100.0;
        let mut state = k2_state(100);
        let initial = state.disagreement();
        let report = run_until(&mut state, |s| s.step_continuous(dt, eps), 1e-6, 20_000).unwrap();
        assert!(!report.converged);
        assert!(
            state.disagreement() >= 0.5 * initial,
            "unstable delay should not decay: {}",
            state.disagreement()
        );
    }

    #[test]
    fn discrete_k2_half_rho_one_step() {
        let mut state = k2_state(0);
        state.step_discrete(0.5, 0).unwrap();
        assert_eq!(state.params(), &[vec![0.5], vec![0.5]]);
    }

    #[test]
    fn discrete_fixed_point_when_equal() {
        let topo = Topology::six_node_preset();
        let init = vec![vec![3.25, -1.5]; 6];
        let mut state = ConsensusState::new(topo, init.clone(), 2).unwrap();
        for _ in 0..5 {
            state.step_discrete(0.3, 0).unwrap();
        }
        assert_eq!(state.params(), &init[..]);
    }

    #[test]
    fn discrete_four_cycle_matches_perron_power_iteration() {
        let topo = Topology::cycle(4).unwrap();
        let rho = 0.2;
        let init = vec![vec![1.0], vec![0.0], vec![0.0], vec![0.0]];

        // Oracle: dense multiplication by the mixing matrix I - rho L.
        let l = topo.laplacian();
        let n = 4;
        let mut p = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                p[i][j] = if i == j { 1.0 } else { 0.0 } - rho * l[i][j];
            }
        }
        let mut oracle: Vec<f64> = init.iter().map(|v| v[0]).collect();
        for _ in 0..200 {
            let mut next = vec![0.0; n];
            for i in 0..n {
                for j in 0..n {
                    next[i] += p[i][j] * oracle[j];
                }
            }
            oracle = next;
        }

        let mut state = ConsensusState::new(topo, init, 0).unwrap();
        for _ in 0..200 {
            state.step_discrete(rho, 0).unwrap();
        }
        for (row, want) in state.params().iter().zip(&oracle) {
            assert!((row[0] - want).abs() < 1e-12);
        }
        for row in state.params() {
            assert!((row[0] - 0.25).abs() < 1e-6, "should reach mean 0.25");
        }
    }

    #[test]
    fn mean_preserved_by_both_steppers() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for seed in 0..5 {
            let topo = generate_topology(8, 3, seed).unwrap();
            let init: Vec<Vec<f64>> = (0..8)
                .map(|_| (0..3).map(|_| rng.gen_range(-5.0..5.0)).collect())
                .collect();

            let mut cont = ConsensusState::new(topo.clone(), init.clone(), 20).unwrap();
            let eps = 0.05;
            let dt = eps / 20.0;
            let scale: f64 = sums(&cont).iter().map(|s| s.abs()).fold(1.0, f64::max);
            let before = sums(&cont);
            for _ in 0..500 {
                cont.step_continuous(dt, eps).unwrap();
                for (a, b) in sums(&cont).iter().zip(&before) {
                    assert!((a - b).abs() <= 1e-9 * scale);
                }
            }

            let mut disc = ConsensusState::new(topo.clone(), init, 2).unwrap();
            // One-round delay halves the stable mixing range: need
            // rho * lambda_max < 1, and lambda_max <= 2 d_max.
            let rho = 1.0 / (2.0 * topo.max_degree() as f64 + 1.0);
            let before = sums(&disc);
            for _ in 0..500 {
                disc.step_discrete(rho, 1).unwrap();
                for (a, b) in sums(&disc).iter().zip(&before) {
                    assert!((a - b).abs() <= 1e-9 * scale);
                }
            }
        }
    }

    #[test]
    fn permutation_equivariance() {
        // Relabeling nodes and initial values permutes trajectories.
        let perm = [2usize, 0, 3, 1];
        let edges = [(0, 1), (1, 2), (2, 3), (0, 2)];
        let topo = Topology::new(4, &edges).unwrap();
        let mapped: Vec<(usize, usize)> = edges.iter().map(|&(a, b)| (perm[a], perm[b])).collect();
        let topo_p = Topology::new(4, &mapped).unwrap();

        let init = vec![vec![1.0], vec![-2.0], vec![0.5], vec![4.0]];
        let mut init_p = vec![vec![0.0]; 4];
        for (i, v) in init.iter().enumerate() {
            init_p[perm[i]] = v.clone();
        }

        let mut a = ConsensusState::new(topo, init, 3).unwrap();
        let mut b = ConsensusState::new(topo_p, init_p, 3).unwrap();
        for _ in 0..50 {
            a.step_discrete(0.25, 1).unwrap();
            b.step_discrete(0.25, 1).unwrap();
            for i in 0..4 {
                assert!((a.params()[i][0] - b.params()[perm[i]][0]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn discrete_zero_delay_disagreement_non_increasing() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for seed in 0..5 {
            let topo = generate_topology(7, 3, seed).unwrap();
            let rho = 0.9 / topo.max_degree() as f64;
            let init: Vec<Vec<f64>> = (0..7)
                .map(|_| vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)])
                .collect();
            let mut state = ConsensusState::new(topo, init, 0).unwrap();
            let mut last = state.disagreement();
            for _ in 0..200 {
                state.step_discrete(rho, 0).unwrap();
                let now = state.disagreement();
                assert!(now <= last + 1e-12);
                last = now;
            }
        }
    }

    #[test]
    fn history_underflow_is_reported() {
        let mut state = k2_state(3);
        match state.step_discrete(0.5, 5) {
            Err(ConsensusError::HistoryUnderflow {
                requested,
                capacity,
            }) => {
                assert_eq!(requested, 5);
                assert_eq!(capacity, 3);
            }
            other => panic!("expected underflow, got {other:?}"),
        }
    }

    #[test]
    fn lag_steps_rounding() {
        assert_eq!(lag_steps(0.0, 0.01), 0);
        assert_eq!(lag_steps(1.0, 0.005), 200);
        // Fractional lags round up.
        assert_eq!(lag_steps(0.0101, 0.001), 11);
        // Near-integer ratios snap instead of spilling over.
        let eps = 0.9 * PI / 4.0;
        assert_eq!(lag_steps(eps, eps / 200.0), 200);
    }

    #[test]
    fn trajectory_csv_shape() {
        let mut state = k2_state(0);
        let mut log = TrajectoryLog::new(true);
        log.record(&state);
        state.step_discrete(0.5, 0).unwrap();
        log.record(&state);
        let csv = log.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "step,time,node,disagreement,v0");
        assert_eq!(lines.len(), 5);
        assert!(lines[1].starts_with("0,0,0,"));
    }
}
