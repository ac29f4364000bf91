//! Configuration search: the structured scan versus exhaustive enumeration
//! across accuracy requirements.
//!
//! ```sh
//! cargo run --example plan_search
//! ```

use twinshare::netcalc::{ModelSpec, NetParams};
use twinshare::planner::{search_alg2, search_exhaustive, AccuracyTable};

fn main() {
    let table = AccuracyTable::reference();
    let params = NetParams {
        bandwidth: 2.0e7,
        keep_alive: 1.0e4,
        contenders: 6,
        twin_deviation: 1.0e6,
        edge_rate: 1.0e9,
        complexity: 10.0,
        sync_deadline: 0.1,
    };
    let tiers = ModelSpec::desk_family(20, 4);

    println!("bundled accuracy grid:");
    for k in 1..=3 {
        let row: Vec<String> = (1..=table.q_max())
            .map(|q| format!("{:.3}", table.omega(k, q).unwrap()))
            .collect();
        println!("  k={k}: {}", row.join("  "));
    }

    println!("theta   structured (k,q,d)  cost        exhaustive (k,q,d)  cost");
    for theta in [0.0, 0.7, 0.8, 0.9, 0.93, 0.95] {
        let alg = search_alg2(&table, theta, 1e18, &params, &tiers);
        let exh = search_exhaustive(&table, theta, 1e18, &params, &tiers);
        let fmt = |r: &Result<twinshare::planner::PlanResult, _>| match r {
            Ok(p) => format!(
                "({},{},{})  {:>10.0}",
                p.config.k, p.config.q, p.config.d_max, p.cost
            ),
            Err(_) => "infeasible".to_string(),
        };
        println!("{theta:5}   {:24}  {}", fmt(&alg), fmt(&exh));
        if let (Ok(a), Ok(e)) = (&alg, &exh) {
            assert!(e.cost <= a.cost);
        }
    }
    println!(
        "note: at loose requirements the exhaustive oracle may pick a cheaper\n\
         tier than the accuracy-maximizing structured scan; at theta 0.9 both\n\
         settle on tier 2 at frequency 3."
    );
}
