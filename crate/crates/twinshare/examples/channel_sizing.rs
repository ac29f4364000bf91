//! Network-calculus channel sizing: sync reservation, delay bounds,
//! minimum bandwidth, and the largest supportable sharing frequency.
//!
//! ```sh
//! cargo run --example channel_sizing
//! ```

use std::f64::consts::PI;

use twinshare::netcalc::{ModelSpec, NetParams};

fn main() {
    let params = NetParams {
        bandwidth: 2.0e7,
        keep_alive: 1.0e4,
        contenders: 6,
        twin_deviation: 1.0e6,
        edge_rate: 1.0e9,
        complexity: 10.0,
        sync_deadline: 0.1,
    };
    let sync = params.dt_bandwidth().unwrap();
    println!(
        "channel {} bit/s, twin sync reservation {:.0} bit/s",
        params.bandwidth, sync
    );

    let d_max = 3;
    let q = 3;
    println!(
        "delay budget at d_max {d_max}: {:.4} s",
        PI / (4.0 * d_max as f64)
    );
    println!("tier  delta_bits  delay_bound(q={q})  min_bandwidth  max_q");
    for spec in ModelSpec::desk_family(20, 4) {
        let arrival = params.arrival_curve(&spec, q);
        let service = params.leftover_service(&spec, q).unwrap();
        let bound = params.delay_bound(&spec, q).unwrap();
        let min_c = params.min_bandwidth(&spec, q, d_max).unwrap();
        let max_q = params.max_frequency(&spec, d_max).unwrap();
        println!(
            "{:4}  {:>10}  {:>16.6}  {:>13.0}  {:>5}",
            spec.tier.k(),
            spec.delta_bits,
            bound,
            min_c,
            max_q
        );
        // The bound is the horizontal gap between the curves.
        assert!(arrival.eval(0.0) > 0.0 && service.eval(0.0) == 0.0);
    }

    // Round trip: sizing the channel for q supports exactly q.
    let spec = ModelSpec::desk(twinshare::kd::StudentTier::Medium, 20, 4);
    let mut sized = params;
    sized.bandwidth = params.min_bandwidth(&spec, 5, d_max).unwrap();
    println!(
        "sized for q = 5: C = {:.0} bit/s, supported q = {}",
        sized.bandwidth,
        sized.max_frequency(&spec, d_max).unwrap()
    );

    // Frequency ceiling versus swarm size at fixed bandwidth.
    print!("max q by contenders at fixed C:");
    for n in 2..=10 {
        let mut crowded = params;
        crowded.contenders = n;
        match crowded.max_frequency(&spec, d_max) {
            Ok(q) => print!(" {n}:{q}"),
            Err(_) => print!(" {n}:-"),
        }
    }
    println!();
}
