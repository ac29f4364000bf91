//! The delayed-consensus stability threshold, reproduced numerically.
//!
//! Averaging under a communication delay `eps` converges exactly when
//! `eps < pi / (2 lambda_max)`. This example integrates the delayed
//! dynamics on both sides of the threshold.
//!
//! ```sh
//! cargo run --release --example delay_threshold
//! ```

use twinshare::consensus::{run_until, ConsensusState};
use twinshare::graph::Topology;

fn trial(topo: &Topology, init: &[Vec<f64>], ratio: f64) {
    let budget = topo.delay_budget().unwrap();
    let eps = ratio * budget.eps_exact;
    let dt = eps / 200.0;
    let mut state = ConsensusState::new(topo.clone(), init.to_vec(), 200).unwrap();
    let initial = state.disagreement();
    let report = run_until(
        &mut state,
        |s| s.step_continuous(dt, eps),
        1e-6 * initial,
        100_000,
    )
    .unwrap();
    println!(
        "  eps = {:.4} s ({:.0}% of critical): {} after {} steps (disagreement {:.2e})",
        eps,
        100.0 * ratio,
        if report.converged {
            "converged"
        } else {
            "did not converge"
        },
        report.steps,
        report.final_disagreement
    );
}

fn main() {
    let k2 = Topology::complete(2).unwrap();
    println!(
        "two agents, critical delay pi/4 = {:.4} s",
        k2.delay_budget().unwrap().eps_exact
    );
    let init = vec![vec![0.0], vec![1.0]];
    trial(&k2, &init, 0.9);
    trial(&k2, &init, 1.3);

    let cycle = Topology::cycle(4).unwrap();
    println!(
        "4-cycle, critical delay pi/8 = {:.4} s",
        cycle.delay_budget().unwrap().eps_exact
    );
    let init = vec![vec![1.0], vec![0.0], vec![0.0], vec![0.0]];
    trial(&cycle, &init, 0.9);
    trial(&cycle, &init, 1.3);

    println!("degree-based sufficient budgets never exceed the exact ones:");
    for (label, topo) in [
        ("six-node preset", Topology::six_node_preset()),
        ("K5", Topology::complete(5).unwrap()),
    ] {
        let b = topo.delay_budget().unwrap();
        println!(
            "  {label}: sufficient {:.4} <= exact {:.4}",
            b.eps_sufficient, b.eps_exact
        );
    }
}
