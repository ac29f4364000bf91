//! Device/edge twin synchronization: steady state, an outage, and the
//! resync handshake, with the trace CSV.
//!
//! ```sh
//! cargo run --example twin_sync
//! ```

use std::collections::BTreeMap;

use twinshare::dtsync::{
    sync_cycle, CapabilitySet, Channel, DeviceTwin, EdgeTwin, KineticState, LinearExtrapolation,
    StatusTriple, SyncTrace,
};

fn status(t: f64) -> StatusTriple {
    StatusTriple {
        kinetic: KineticState {
            position: [t * 0.5, 0.0],
            velocity: [0.5, 0.0],
        },
        link_quality: BTreeMap::from([(1, 0.92)]),
        model_accuracy: 0.8,
    }
}

fn main() {
    let capability = CapabilitySet {
        kinetic_actions: ["hover", "cruise"].map(String::from).into(),
        net_modifications: ["raise_degree"].map(String::from).into(),
        viable_tiers: [1, 2].into(),
    };
    let mut device = DeviceTwin::new(0, status(0.0), capability.clone());
    let mut edge = EdgeTwin::new(0.05, 0.1);
    edge.register(0, device.status.clone(), capability);

    let mut trace = SyncTrace::new();
    // Channel per cycle: healthy, healthy, late, down, healthy, healthy.
    let channels = [
        Channel::healthy(0.01),
        Channel::healthy(0.01),
        Channel::healthy(0.2),
        Channel::down(),
        Channel::healthy(0.01),
        Channel::healthy(0.01),
    ];
    for (cycle, &channel) in channels.iter().enumerate() {
        let t = cycle as f64 * edge.period;
        let predicted = edge.predict(0).cloned().unwrap_or_default();
        device.device_update(status(t), &predicted);
        let phase = sync_cycle(&mut device, &mut edge, channel, t);
        trace.record(cycle as u64, &device, channel);
        println!(
            "cycle {cycle}: channel {} -> {}",
            if channel.up {
                format!("latency {:.2}s", channel.latency)
            } else {
                "down".to_string()
            },
            phase.as_str()
        );
    }

    println!("\nsync trace:");
    print!("{}", trace.to_csv());

    // Predictors are pluggable; linear extrapolation advances the position.
    let edge = EdgeTwin::with_predictor(0.05, 0.1, Box::new(LinearExtrapolation));
    let ahead = edge.predict_from(&status(1.0), 0.4);
    println!(
        "\nlinear extrapolation over 0.4 s: position {:.2} -> {:.2}",
        status(1.0).kinetic.position[0],
        ahead.kinetic.position[0]
    );
}
