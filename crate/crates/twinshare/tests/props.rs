//! Property tests over randomized inputs.

use proptest::prelude::*;

use twinshare::graph::{generate_topology, Topology};
use twinshare::kd::{softmax, MlpModel, StudentTier};
use twinshare::netcalc::{ModelSpec, NetParams};

fn union_find_connected(n: usize, edges: &[(usize, usize)]) -> bool {
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for &(a, b) in edges {
        let ra = find(&mut parent, a);
        let rb = find(&mut parent, b);
        parent[ra] = rb;
    }
    let root = find(&mut parent, 0);
    (1..n).all(|v| find(&mut parent, v) == root)
}

proptest! {
    #[test]
    fn generated_topologies_respect_contract(
        n in 2usize..16,
        d_max in 2usize..6,
        seed in 0u64..500,
    ) {
        let topo = generate_topology(n, d_max, seed).unwrap();
        prop_assert_eq!(topo.node_count(), n);
        prop_assert!(topo.degrees().into_iter().all(|d| d <= d_max));
        let edges: Vec<_> = topo.edges().collect();
        prop_assert!(union_find_connected(n, &edges));
        // Gershgorin bound on the spectrum.
        let spectrum = topo.spectrum().unwrap();
        prop_assert!(spectrum.lambda_max <= 2.0 * topo.max_degree() as f64 + 1e-9);
        prop_assert!(spectrum.eigenvalues[0].abs() <= 1e-9);
    }

    #[test]
    fn edge_list_round_trips(n in 2usize..12, seed in 0u64..200) {
        let topo = generate_topology(n, 3, seed).unwrap();
        let parsed = Topology::from_edge_list(&topo.to_edge_list()).unwrap();
        prop_assert_eq!(parsed, topo);
    }

    #[test]
    fn softmax_is_a_shift_invariant_distribution(
        z in proptest::collection::vec(-50.0f64..50.0, 2..8),
        shift in -100.0f64..100.0,
    ) {
        let p = softmax(&z);
        let sum: f64 = p.iter().sum();
        prop_assert!((sum - 1.0).abs() <= 1e-12);
        prop_assert!(p.iter().all(|&v| v > 0.0));
        let shifted: Vec<f64> = z.iter().map(|v| v + shift).collect();
        for (a, b) in softmax(&shifted).iter().zip(&p) {
            prop_assert!((a - b).abs() <= 1e-9);
        }
    }

    #[test]
    fn bandwidth_frequency_round_trip(
        keep_alive in 1.0e3f64..1.0e5,
        delta in 1.0e3f64..1.0e7,
        contenders in 2usize..12,
        d_max in 2usize..6,
        q in 1u32..10,
    ) {
        let params = NetParams {
            bandwidth: 1.0e9,
            keep_alive,
            contenders,
            twin_deviation: 1.0e6,
            edge_rate: 1.0e9,
            complexity: 5.0,
            sync_deadline: 0.1,
        };
        let spec = ModelSpec {
            tier: StudentTier::Medium,
            delta_bits: delta,
            phi_ops: 1.0,
        };
        let mut sized = params;
        sized.bandwidth = params.min_bandwidth(&spec, q, d_max).unwrap();
        prop_assert_eq!(sized.max_frequency(&spec, d_max).unwrap(), q);
        // Sizing for q leaves the delay bound exactly on the budget.
        let budget = std::f64::consts::PI / (4.0 * d_max as f64);
        let delay = sized.delay_bound(&spec, q).unwrap();
        prop_assert!((delay - budget).abs() <= 1e-9 * budget);
    }

    #[test]
    fn model_params_round_trip(
        input_dim in 1usize..12,
        classes in 2usize..6,
        seed in 0u64..100,
    ) {
        let model = MlpModel::student(StudentTier::Small, input_dim, classes, seed);
        let flat = model.flatten_params();
        let mut blank = MlpModel::student(StudentTier::Small, input_dim, classes, seed + 1);
        blank.load_params(&flat).unwrap();
        prop_assert_eq!(blank.flatten_params(), flat);
    }
}
