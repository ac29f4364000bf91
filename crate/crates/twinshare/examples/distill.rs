//! Teacher training and three-tier distillation on the synthetic dataset.
//!
//! ```sh
//! cargo run --release --example distill
//! ```

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rand::seq::SliceRandom;
use twinshare::kd::{
    kd_loss, one_hot, softmax_temp, teacher_logits, KdConfig, MlpModel, Sample, StudentTier,
    TrainConfig, Trainer,
};
use twinshare::sim::{make_dataset, train_test_split, DatasetSpec};

fn train(
    trainer: &mut Trainer,
    data: &[Sample],
    teacher: Option<&MlpModel>,
    cfg: &TrainConfig,
    epochs: usize,
    rng: &mut ChaCha8Rng,
) {
    let mut order: Vec<usize> = (0..data.len()).collect();
    for _ in 0..epochs {
        order.shuffle(rng);
        for chunk in order.chunks(32) {
            let batch: Vec<Sample> = chunk.iter().map(|&i| data[i].clone()).collect();
            let logits = teacher.map(|t| teacher_logits(t, &batch).unwrap());
            trainer.train_step(&batch, logits.as_deref(), cfg).unwrap();
        }
    }
}

fn main() {
    let spec = DatasetSpec::default();
    let data = make_dataset(&spec, 42);
    let (train_set, test_set) = train_test_split(&data, spec.test_fraction, 42);
    println!(
        "dataset: {} train / {} test samples, {} classes, {} features",
        train_set.len(),
        test_set.len(),
        spec.classes,
        spec.feature_dim
    );

    let cfg = TrainConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(42);

    let mut teacher_trainer = Trainer::new(MlpModel::teacher(spec.feature_dim, spec.classes, 42));
    train(&mut teacher_trainer, &train_set, None, &cfg, 150, &mut rng);
    let teacher = teacher_trainer.into_model();
    println!(
        "teacher: {} params, test accuracy {:.3}",
        teacher.param_count(),
        teacher.accuracy(&test_set).unwrap()
    );

    // A sample distillation loss, decomposed.
    let sample = &train_set[0];
    let t_logits = teacher.logits(&sample.features).unwrap();
    let kd = KdConfig::default();
    println!(
        "teacher soft targets at tau {}: {:?}",
        kd.tau,
        softmax_temp(&t_logits, kd.tau)
            .iter()
            .map(|p| (p * 1000.0).round() / 1000.0)
            .collect::<Vec<_>>()
    );

    for tier in StudentTier::ALL {
        let mut trainer = Trainer::new(MlpModel::student(tier, spec.feature_dim, spec.classes, 42));
        train(&mut trainer, &train_set, Some(&teacher), &cfg, 60, &mut rng);
        let student = trainer.into_model();
        let s_logits = student.logits(&sample.features).unwrap();
        let loss = kd_loss(
            &s_logits,
            &t_logits,
            &one_hot(sample.label, spec.classes),
            &kd,
        )
        .unwrap();
        println!(
            "student k={} ({} params): test accuracy {:.3}, sample distillation loss {:.3}",
            tier.k(),
            student.param_count(),
            student.accuracy(&test_set).unwrap(),
            loss
        );

        // Checkpoints round-trip exactly.
        let mut bytes = Vec::new();
        student.save_checkpoint(&mut bytes).unwrap();
        let mut restored = MlpModel::student(tier, spec.feature_dim, spec.classes, 0);
        restored.load_checkpoint(bytes.as_slice()).unwrap();
        assert_eq!(restored.flatten_params(), student.flatten_params());
    }
}
