//! Close the loop: regenerate the accuracy table from simulation runs and
//! hand it to the planner.
//!
//! ```sh
//! cargo run --release --example regen_table
//! ```

use twinshare::netcalc::{ModelSpec, NetParams};
use twinshare::planner::{search_exhaustive, PlannerError};
use twinshare::sim::{regenerate_accuracy_table, ScenarioConfig};

fn main() {
    // Trimmed run so the 3 tiers x 5 frequencies x 3 seeds grid stays quick.
    let base = ScenarioConfig {
        episodes: 12,
        ..ScenarioConfig::default()
    };

    let table = regenerate_accuracy_table(&base, &[1, 2, 3, 4, 5], &[1, 2, 3]).unwrap();
    println!("simulator-derived accuracy grid (3 seeds each):");
    println!("{}", table.to_csv());

    let params = NetParams {
        bandwidth: 2.0e7,
        keep_alive: 1.0e4,
        contenders: 6,
        twin_deviation: 1.0e6,
        edge_rate: 1.0e9,
        complexity: 10.0,
        sync_deadline: 0.1,
    };
    let tiers = ModelSpec::desk_family(base.dataset.feature_dim, base.dataset.classes);
    for theta in [0.6, 0.75, 0.85] {
        match search_exhaustive(&table, theta, 1e18, &params, &tiers) {
            Ok(plan) => println!(
                "theta {theta:.2}: pick k={} q={} d_max={} (cost {:.0}, min bandwidth {:.0})",
                plan.config.k, plan.config.q, plan.config.d_max, plan.cost, plan.bandwidth
            ),
            Err(PlannerError::NoFeasibleConfig { .. }) => {
                println!("theta {theta:.2}: no feasible configuration in this grid")
            }
            Err(e) => panic!("{e}"),
        }
    }
}
