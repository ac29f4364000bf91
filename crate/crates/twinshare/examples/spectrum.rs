//! Topologies, Laplacian spectra, and the delay budgets they imply.
//!
//! ```sh
//! cargo run --example spectrum
//! ```

use twinshare::graph::{generate_topology, Topology};

fn describe(label: &str, topo: &Topology) {
    let spectrum = topo.spectrum().unwrap();
    let budget = topo.delay_budget().unwrap();
    println!("{label}");
    println!("  nodes {} edges {}", topo.node_count(), topo.edge_count());
    println!(
        "  degrees {:?} (d_max {})",
        topo.degrees(),
        topo.max_degree()
    );
    let eigens: Vec<String> = spectrum
        .eigenvalues
        .iter()
        .map(|l| format!("{l:.4}"))
        .collect();
    println!("  eigenvalues [{}]", eigens.join(", "));
    println!(
        "  delay budget: exact {:.4} s, degree-sufficient {:.4} s",
        budget.eps_exact, budget.eps_sufficient
    );
}

fn main() {
    describe("complete graph K4", &Topology::complete(4).unwrap());
    describe("4-cycle", &Topology::cycle(4).unwrap());

    // The bundled six-agent preset used across the experiments: a ring with
    // one chord, node 5 at degree 3 and node 3 at degree 2.
    let preset = Topology::six_node_preset();
    describe("six-node preset", &preset);

    // Degree-capped random topologies, deterministic per seed.
    for d_max in [2, 3, 4] {
        let topo = generate_topology(9, d_max, 7).unwrap();
        describe(&format!("generated n=9 d_max<={d_max} (seed 7)"), &topo);
    }

    // Edge-list serialization round trip.
    let text = preset.to_edge_list();
    println!("edge-list form:\n{text}");
    let parsed = Topology::from_edge_list(&text).unwrap();
    assert_eq!(parsed, preset);
}
