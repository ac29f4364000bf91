//! One full experiment: distillation, local training, and parameter
//! sharing on the six-node preset, against the no-sharing baseline.
//!
//! ```sh
//! cargo run --release --example share_and_learn
//! ```

use twinshare::sim::{run_alg1, ScenarioConfig};

fn main() {
    let scenario = ScenarioConfig {
        episodes: 30,
        ..ScenarioConfig::default()
    };

    let shared = run_alg1(&scenario).unwrap();
    let mut baseline_cfg = scenario.clone();
    baseline_cfg.q = 0;
    let baseline = run_alg1(&baseline_cfg).unwrap();

    println!(
        "teacher accuracy {:.3}; student tier {} with {} params ({} bits on the wire)",
        shared.summary.teacher_accuracy,
        shared.summary.tier_k,
        shared.summary.student_param_count,
        shared.summary.model_bits
    );
    println!(
        "episode  mean accuracy (q={})  mean accuracy (q=0)",
        scenario.q
    );
    let with = shared.mean_accuracy_curve();
    let without = baseline.mean_accuracy_curve();
    for ep in (0..scenario.episodes).step_by(5) {
        println!("{ep:7}  {:20.3}  {:19.3}", with[ep], without[ep]);
    }
    println!(
        "final: sharing {:.3} vs baseline {:.3}; disagreement {:.2e} vs {:.2e}",
        shared.final_mean_accuracy(),
        baseline.final_mean_accuracy(),
        shared.summary.final_disagreement,
        baseline.summary.final_disagreement
    );
    println!(
        "traffic: {} bits total over {} episodes ({} bits/node/round)",
        shared.summary.total_bits, shared.summary.episodes, shared.summary.model_bits
    );
    println!("summary JSON:\n{}", shared.summary_json());
}
