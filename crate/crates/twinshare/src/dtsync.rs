//! Device/edge twin records and their synchronization protocol.
//!
//! Each agent carries a device twin summarizing its status `g` (kinetics,
//! link quality, model performance) and capabilities `f`. An edge twin
//! mirrors the swarm: per-node status, capabilities, and a one-step status
//! prediction produced by a pluggable predictor. Under a healthy channel
//! the device uploads only the running deviation `delta_g = g - g_hat`;
//! when the channel is down or slower than the sync deadline the pair
//! desynchronizes (`delta_g = Null`, edge continues open loop), and on
//! restoration the device re-registers by uploading its full status before
//! the pair counts as synced again.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

/// 2-D kinetic summary.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct KineticState {
    pub position: [f64; 2],
    pub velocity: [f64; 2],
}

/// The status triple `g`: kinetics, per-neighbor link quality, and the
/// accuracy of the onboard model tier.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StatusTriple {
    pub kinetic: KineticState,
    pub link_quality: BTreeMap<usize, f64>,
    /// Recognition accuracy of the deployed model, in `[0, 1]`.
    pub model_accuracy: f64,
}

impl StatusTriple {
    /// Componentwise difference; link-quality keys are merged with missing
    /// entries treated as zero.
    pub fn minus(&self, other: &StatusTriple) -> StatusTriple {
        let mut link_quality = BTreeMap::new();
        let keys: BTreeSet<usize> = self
            .link_quality
            .keys()
            .chain(other.link_quality.keys())
            .copied()
            .collect();
        for k in keys {
            let a = self.link_quality.get(&k).copied().unwrap_or(0.0);
            let b = other.link_quality.get(&k).copied().unwrap_or(0.0);
            link_quality.insert(k, a - b);
        }
        StatusTriple {
            kinetic: KineticState {
                position: [
                    self.kinetic.position[0] - other.kinetic.position[0],
                    self.kinetic.position[1] - other.kinetic.position[1],
                ],
                velocity: [
                    self.kinetic.velocity[0] - other.kinetic.velocity[0],
                    self.kinetic.velocity[1] - other.kinetic.velocity[1],
                ],
            },
            link_quality,
            model_accuracy: self.model_accuracy - other.model_accuracy,
        }
    }

    /// Max-norm over all numeric components.
    pub fn norm(&self) -> f64 {
        let mut m = self.model_accuracy.abs();
        for v in self
            .kinetic
            .position
            .iter()
            .chain(self.kinetic.velocity.iter())
        {
            m = m.max(v.abs());
        }
        for v in self.link_quality.values() {
            m = m.max(v.abs());
        }
        m
    }
}

/// The capability triple `f`, stored as opaque labeled sets.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CapabilitySet {
    pub kinetic_actions: BTreeSet<String>,
    pub net_modifications: BTreeSet<String>,
    /// Model tiers (k values) the agent can run.
    pub viable_tiers: BTreeSet<usize>,
}

/// Running deviation upload: `Null` exactly while desynchronized.
#[derive(Debug, Clone, PartialEq)]
pub enum Deviation {
    Value(StatusTriple),
    Null,
}

impl Deviation {
    pub fn norm(&self) -> Option<f64> {
        match self {
            Deviation::Value(d) => Some(d.norm()),
            Deviation::Null => None,
        }
    }
}

/// Synchronization phase of a device/edge pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SyncPhase {
    Synced,
    Desynced,
    /// Link restored; full status uploaded, awaiting the acknowledging cycle.
    Resyncing,
}

impl SyncPhase {
    pub fn as_str(self) -> &'static str {
        match self {
            SyncPhase::Synced => "synced",
            SyncPhase::Desynced => "desynced",
            SyncPhase::Resyncing => "resyncing",
        }
    }
}

/// Phase plus the time of the last successful upload.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyncState {
    pub phase: SyncPhase,
    pub last_success: f64,
}

/// Onboard twin of one agent.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceTwin {
    pub node: usize,
    pub status: StatusTriple,
    pub capability: CapabilitySet,
    pub deviation: Deviation,
    pub sync: SyncState,
}

impl DeviceTwin {
    /// Starts unsynchronized; the first healthy cycle re-registers with a
    /// full-status upload.
    pub fn new(node: usize, status: StatusTriple, capability: CapabilitySet) -> Self {
        DeviceTwin {
            node,
            status,
            capability,
            deviation: Deviation::Null,
            sync: SyncState {
                phase: SyncPhase::Desynced,
                last_success: f64::NEG_INFINITY,
            },
        }
    }

    /// Records a fresh observation and its deviation from the edge's
    /// prediction. While desynchronized the deviation stays `Null` no matter
    /// what was observed.
    pub fn device_update(&mut self, observed: StatusTriple, predicted: &StatusTriple) {
        self.deviation = if self.sync.phase == SyncPhase::Desynced {
            Deviation::Null
        } else {
            Deviation::Value(observed.minus(predicted))
        };
        self.status = observed;
    }
}

/// Produces the next-slot status estimate `g_hat(t + horizon)`.
pub trait StatusPredictor {
    fn predict(&self, current: &StatusTriple, horizon: f64) -> StatusTriple;
}

/// Default predictor: hold the last known status.
#[derive(Debug, Clone, Copy, Default)]
pub struct LastValueHold;

impl StatusPredictor for LastValueHold {
    fn predict(&self, current: &StatusTriple, _horizon: f64) -> StatusTriple {
        current.clone()
    }
}

/// Advances position by `velocity * horizon`; everything else held.
#[derive(Debug, Clone, Copy, Default)]
pub struct LinearExtrapolation;

impl StatusPredictor for LinearExtrapolation {
    fn predict(&self, current: &StatusTriple, horizon: f64) -> StatusTriple {
        let mut next = current.clone();
        next.kinetic.position[0] += current.kinetic.velocity[0] * horizon;
        next.kinetic.position[1] += current.kinetic.velocity[1] * horizon;
        next
    }
}

/// Channel condition for one sync cycle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Channel {
    pub latency: f64,
    pub up: bool,
}

impl Channel {
    pub fn healthy(latency: f64) -> Self {
        Channel { latency, up: true }
    }

    pub fn down() -> Self {
        Channel {
            latency: f64::INFINITY,
            up: false,
        }
    }
}

/// Swarm replica maintained at the edge.
pub struct EdgeTwin {
    status: BTreeMap<usize, StatusTriple>,
    capability: BTreeMap<usize, CapabilitySet>,
    predicted: BTreeMap<usize, StatusTriple>,
    predictor: Box<dyn StatusPredictor + Send + Sync>,
    /// Maximum tolerated sync latency; slower cycles count as lost.
    pub deadline: f64,
    /// Nominal cycle period, also the prediction horizon.
    pub period: f64,
}

impl std::fmt::Debug for EdgeTwin {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EdgeTwin")
            .field("nodes", &self.status.len())
            .field("deadline", &self.deadline)
            .field("period", &self.period)
            .finish()
    }
}

impl EdgeTwin {
    pub fn new(deadline: f64, period: f64) -> Self {
        EdgeTwin {
            status: BTreeMap::new(),
            capability: BTreeMap::new(),
            predicted: BTreeMap::new(),
            predictor: Box::new(LastValueHold),
            deadline,
            period,
        }
    }

    pub fn with_predictor(
        deadline: f64,
        period: f64,
        predictor: Box<dyn StatusPredictor + Send + Sync>,
    ) -> Self {
        EdgeTwin {
            predictor,
            ..EdgeTwin::new(deadline, period)
        }
    }

    /// Initial registration: installs status, capabilities, and a first
    /// prediction so all three maps share key sets.
    pub fn register(&mut self, node: usize, status: StatusTriple, capability: CapabilitySet) {
        let prediction = self.predictor.predict(&status, self.period);
        self.status.insert(node, status);
        self.capability.insert(node, capability);
        self.predicted.insert(node, prediction);
    }

    pub fn nodes(&self) -> impl Iterator<Item = usize> + '_ {
        self.status.keys().copied()
    }

    pub fn status_of(&self, node: usize) -> Option<&StatusTriple> {
        self.status.get(&node)
    }

    pub fn capability_of(&self, node: usize) -> Option<&CapabilitySet> {
        self.capability.get(&node)
    }

    /// The standing prediction `g_hat(t+1)` for a node.
    pub fn predict(&self, node: usize) -> Option<&StatusTriple> {
        self.predicted.get(&node)
    }

    /// Runs the plugged predictor directly.
    pub fn predict_from(&self, status: &StatusTriple, horizon: f64) -> StatusTriple {
        self.predictor.predict(status, horizon)
    }

    fn refresh(&mut self, node: usize, status: StatusTriple) {
        let prediction = self.predictor.predict(&status, self.period);
        self.status.insert(node, status);
        self.predicted.insert(node, prediction);
    }

    /// Open-loop advance while a device is unreachable: the prediction rolls
    /// forward from itself without device input.
    fn advance_open_loop(&mut self, node: usize) {
        if let Some(last) = self.predicted.get(&node) {
            let next = self.predictor.predict(last, self.period);
            self.predicted.insert(node, next);
        }
    }
}

/// One synchronization cycle for a device/edge pair at time `now`.
///
/// A healthy channel (`up` and `latency <= deadline`) uploads the running
/// deviation and refreshes the edge replica. A late or down channel
/// desynchronizes the pair. The first healthy cycle after an outage uploads
/// the full status (`delta_g = g`) and reports `Resyncing`; the next healthy
/// cycle acknowledges it and the pair is `Synced` again, so the machine
/// never jumps straight from `Desynced` to `Synced`.
pub fn sync_cycle(
    device: &mut DeviceTwin,
    edge: &mut EdgeTwin,
    channel: Channel,
    now: f64,
) -> SyncPhase {
    let healthy = channel.up && channel.latency <= edge.deadline;
    let next_phase = if !healthy {
        device.deviation = Deviation::Null;
        edge.advance_open_loop(device.node);
        SyncPhase::Desynced
    } else {
        match device.sync.phase {
            SyncPhase::Desynced => {
                // Link restored: transfer the full current status as the
                // running deviation.
                device.deviation = Deviation::Value(device.status.clone());
                edge.refresh(device.node, device.status.clone());
                device.sync.last_success = now;
                SyncPhase::Resyncing
            }
            SyncPhase::Resyncing | SyncPhase::Synced => {
                // Normal deviation upload. The edge applies g_hat + delta_g,
                // which equals the device status by construction of the
                // deviation, so the replica refreshes to it directly.
                if device.deviation == Deviation::Null {
                    device.deviation = Deviation::Value(StatusTriple::default());
                }
                edge.refresh(device.node, device.status.clone());
                device.sync.last_success = now;
                SyncPhase::Synced
            }
        }
    };
    device.sync.phase = next_phase;
    next_phase
}

/// Per-cycle trace rows for CSV export.
#[derive(Debug, Default, Clone)]
pub struct SyncTrace {
    rows: Vec<TraceRow>,
}

#[derive(Debug, Clone)]
struct TraceRow {
    cycle: u64,
    node: usize,
    state: SyncPhase,
    delta_norm: Option<f64>,
    latency: f64,
}

impl SyncTrace {
    pub fn new() -> Self {
        SyncTrace::default()
    }

    pub fn record(&mut self, cycle: u64, device: &DeviceTwin, channel: Channel) {
        self.rows.push(TraceRow {
            cycle,
            node: device.node,
            state: device.sync.phase,
            delta_norm: device.deviation.norm(),
            latency: channel.latency,
        });
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "cycle,node,state,delta_norm,latency")?;
        for row in &self.rows {
            let norm = row
                .delta_norm
                .map(|v| v.to_string())
                .unwrap_or_else(|| "null".to_string());
            writeln!(
                w,
                "{},{},{},{},{}",
                row.cycle,
                row.node,
                row.state.as_str(),
                norm,
                row.latency
            )?;
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("write to Vec cannot fail");
        String::from_utf8(buf).expect("csv is utf-8")
    }
}
