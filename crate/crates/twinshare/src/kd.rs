//! Knowledge-distillation losses and a desk-scale learner family.
//!
//! The loss combines hard-label cross-entropy with a temperature-softened
//! match to a teacher's output distribution:
//!
//! ```text
//! L = (1 - alpha) * CE(softmax(s), y)
//!   + alpha * tau^2 * CE(softmax(s / tau), softmax(t / tau))
//! ```
//!
//! where `s` are student logits, `t` teacher logits, and the soft target is
//! the teacher distribution (gradients flow to the student only). Students
//! come in three tiers of two-layer MLPs whose parameter counts increase
//! with tier, mirroring the small/medium/large compressed-model family the
//! planner reasons about.

use std::io::{Read, Write};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum KdError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("logits must be finite")]
    NonFinite,
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("bad checkpoint: {0}")]
    BadCheckpoint(String),
    #[error("empty batch")]
    EmptyBatch,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Distillation weight and temperature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KdConfig {
    /// Weight on the soft (teacher) term, in `[0, 1]`.
    pub alpha: f64,
    /// Softening temperature, `> 0`.
    pub tau: f64,
}

impl Default for KdConfig {
    fn default() -> Self {
        KdConfig {
            alpha: 0.5,
            tau: 20.0,
        }
    }
}

impl KdConfig {
    pub fn new(alpha: f64, tau: f64) -> Result<Self, KdError> {
        if !(0.0..=1.0).contains(&alpha) || !alpha.is_finite() {
            return Err(KdError::InvalidConfig(format!("alpha = {alpha}")));
        }
        if !tau.is_finite() || tau <= 0.0 {
            return Err(KdError::InvalidConfig(format!("tau = {tau}")));
        }
        Ok(KdConfig { alpha, tau })
    }
}

/// Numerically stable softmax (max-subtracted).
pub fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Temperature-softened softmax: `softmax(z / tau)`.
pub fn softmax_temp(z: &[f64], tau: f64) -> Vec<f64> {
    let scaled: Vec<f64> = z.iter().map(|&v| v / tau).collect();
    softmax(&scaled)
}

/// Categorical cross-entropy `-sum_j target_j ln p_j`, with `p` clamped at
/// `1e-12` so degenerate confidence stays finite.
pub fn cross_entropy(p: &[f64], target: &[f64]) -> Result<f64, KdError> {
    if p.len() != target.len() {
        return Err(KdError::DimensionMismatch {
            expected: target.len(),
            got: p.len(),
        });
    }
    Ok(-target
        .iter()
        .zip(p)
        .map(|(&t, &pi)| t * pi.max(1e-12).ln())
        .sum::<f64>())
}

fn check_logits(z: &[f64]) -> Result<(), KdError> {
    if z.iter().any(|v| !v.is_finite()) {
        return Err(KdError::NonFinite);
    }
    Ok(())
}

fn check_same_len(student: &[f64], teacher: &[f64], y: &[f64]) -> Result<(), KdError> {
    for other in [teacher.len(), y.len()] {
        if other != student.len() {
            return Err(KdError::DimensionMismatch {
                expected: student.len(),
                got: other,
            });
        }
    }
    Ok(())
}

/// Distillation loss over one sample's logits.
pub fn kd_loss(
    student: &[f64],
    teacher: &[f64],
    y: &[f64],
    cfg: &KdConfig,
) -> Result<f64, KdError> {
    check_same_len(student, teacher, y)?;
    check_logits(student)?;
    check_logits(teacher)?;
    let hard = cross_entropy(&softmax(student), y)?;
    let soft = cross_entropy(
        &softmax_temp(student, cfg.tau),
        &softmax_temp(teacher, cfg.tau),
    )?;
    Ok((1.0 - cfg.alpha) * hard + cfg.alpha * cfg.tau * cfg.tau * soft)
}

/// Analytic gradient of [`kd_loss`] with respect to the student logits:
/// `(1 - alpha) (softmax(s) - y) + alpha tau (softmax(s/tau) - softmax(t/tau))`.
pub fn kd_loss_grad(
    student: &[f64],
    teacher: &[f64],
    y: &[f64],
    cfg: &KdConfig,
) -> Result<Vec<f64>, KdError> {
    check_same_len(student, teacher, y)?;
    check_logits(student)?;
    check_logits(teacher)?;
    let hard = softmax(student);
    let s_soft = softmax_temp(student, cfg.tau);
    let t_soft = softmax_temp(teacher, cfg.tau);
    Ok((0..student.len())
        .map(|j| {
            (1.0 - cfg.alpha) * (hard[j] - y[j]) + cfg.alpha * cfg.tau * (s_soft[j] - t_soft[j])
        })
        .collect())
}

/// One-hot vector of length `classes`.
pub fn one_hot(label: usize, classes: usize) -> Vec<f64> {
    let mut v = vec![0.0; classes];
    v[label] = 1.0;
    v
}

/// Student tiers, ordered by capacity. `k` indexes 1..=3.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum StudentTier {
    Small,
    Medium,
    Large,
}

impl StudentTier {
    pub const ALL: [StudentTier; 3] = [StudentTier::Small, StudentTier::Medium, StudentTier::Large];

    pub fn k(self) -> usize {
        match self {
            StudentTier::Small => 1,
            StudentTier::Medium => 2,
            StudentTier::Large => 3,
        }
    }

    pub fn from_k(k: usize) -> Option<StudentTier> {
        match k {
            1 => Some(StudentTier::Small),
            2 => Some(StudentTier::Medium),
            3 => Some(StudentTier::Large),
            _ => None,
        }
    }

    pub fn hidden_width(self) -> usize {
        match self {
            StudentTier::Small => 8,
            StudentTier::Medium => 16,
            StudentTier::Large => 32,
        }
    }
}

/// Hidden width of the teacher MLP; wider than every student tier.
pub const TEACHER_HIDDEN: usize = 64;

/// A labeled feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: Vec<f64>,
    pub label: usize,
}

/// Two-layer MLP: `input -> relu(hidden) -> classes` logits.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    input_dim: usize,
    hidden: usize,
    classes: usize,
    /// `hidden x input`, row-major.
    w1: Vec<f64>,
    b1: Vec<f64>,
    /// `classes x hidden`, row-major.
    w2: Vec<f64>,
    b2: Vec<f64>,
}

impl MlpModel {
    /// Fresh model with Xavier-uniform weights, deterministic per seed.
    pub fn new(input_dim: usize, hidden: usize, classes: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lim1 = (6.0 / (input_dim + hidden) as f64).sqrt();
        let lim2 = (6.0 / (hidden + classes) as f64).sqrt();
        let w1 = (0..hidden * input_dim)
            .map(|_| rng.gen_range(-lim1..lim1))
            .collect();
        let w2 = (0..classes * hidden)
            .map(|_| rng.gen_range(-lim2..lim2))
            .collect();
        MlpModel {
            input_dim,
            hidden,
            classes,
            w1,
            b1: vec![0.0; hidden],
            w2,
            b2: vec![0.0; classes],
        }
    }

    pub fn student(tier: StudentTier, input_dim: usize, classes: usize, seed: u64) -> Self {
        Self::new(input_dim, tier.hidden_width(), classes, seed)
    }

    pub fn teacher(input_dim: usize, classes: usize, seed: u64) -> Self {
        Self::new(input_dim, TEACHER_HIDDEN, classes, seed)
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden_width(&self) -> usize {
        self.hidden
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn param_count(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    /// Forward pass to logits.
    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>, KdError> {
        if x.len() != self.input_dim {
            return Err(KdError::DimensionMismatch {
                expected: self.input_dim,
                got: x.len(),
            });
        }
        let mut hidden = vec![0.0; self.hidden];
        for h in 0..self.hidden {
            let mut acc = self.b1[h];
            let row = &self.w1[h * self.input_dim..(h + 1) * self.input_dim];
            for (w, xi) in row.iter().zip(x) {
                acc += w * xi;
            }
            hidden[h] = acc.max(0.0);
        }
        let mut out = vec![0.0; self.classes];
        for c in 0..self.classes {
            let mut acc = self.b2[c];
            let row = &self.w2[c * self.hidden..(c + 1) * self.hidden];
            for (w, hv) in row.iter().zip(&hidden) {
                acc += w * hv;
            }
            out[c] = acc;
        }
        Ok(out)
    }

    pub fn predict(&self, x: &[f64]) -> Result<usize, KdError> {
        let logits = self.logits(x)?;
        Ok(logits
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).expect("finite logits"))
            .map(|(i, _)| i)
            .unwrap_or(0))
    }

    /// Fraction of samples whose argmax matches the label.
    pub fn accuracy(&self, samples: &[Sample]) -> Result<f64, KdError> {
        if samples.is_empty() {
            return Err(KdError::EmptyBatch);
        }
        let mut hits = 0usize;
        for s in samples {
            if self.predict(&s.features)? == s.label {
                hits += 1;
            }
        }
        Ok(hits as f64 / samples.len() as f64)
    }

    /// All parameters as one flat vector: `w1, b1, w2, b2` in order.
    pub fn flatten_params(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.param_count());
        v.extend_from_slice(&self.w1);
        v.extend_from_slice(&self.b1);
        v.extend_from_slice(&self.w2);
        v.extend_from_slice(&self.b2);
        v
    }

    /// Inverse of [`Self::flatten_params`]; exact round-trip.
    pub fn load_params(&mut self, flat: &[f64]) -> Result<(), KdError> {
        if flat.len() != self.param_count() {
            return Err(KdError::DimensionMismatch {
                expected: self.param_count(),
                got: flat.len(),
            });
        }
        let mut at = 0usize;
        for dst in [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2] {
            let len = dst.len();
            dst.copy_from_slice(&flat[at..at + len]);
            at += len;
        }
        Ok(())
    }

    /// Writes the checkpoint format: a little-endian `u64` parameter count,
    /// then that many little-endian `f64` values.
    pub fn save_checkpoint<W: Write>(&self, mut w: W) -> Result<(), KdError> {
        let flat = self.flatten_params();
        w.write_all(&(flat.len() as u64).to_le_bytes())?;
        for v in flat {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    /// Loads parameters saved by [`Self::save_checkpoint`] into this model.
    pub fn load_checkpoint<R: Read>(&mut self, mut r: R) -> Result<(), KdError> {
        let mut header = [0u8; 8];
        r.read_exact(&mut header)
            .map_err(|e| KdError::BadCheckpoint(format!("missing header: {e}")))?;
        let dim = u64::from_le_bytes(header) as usize;
        if dim != self.param_count() {
            return Err(KdError::BadCheckpoint(format!(
                "checkpoint holds {dim} parameters, model needs {}",
                self.param_count()
            )));
        }
        let mut flat = vec![0.0; dim];
        let mut buf = [0u8; 8];
        for v in flat.iter_mut() {
            r.read_exact(&mut buf)
                .map_err(|e| KdError::BadCheckpoint(format!("truncated payload: {e}")))?;
            *v = f64::from_le_bytes(buf);
        }
        self.load_params(&flat)
    }
}

/// Optimizer and loss settings for [`Trainer::train_step`].
#[derive(Debug, Clone, Copy)]
pub struct TrainConfig {
    pub kd: KdConfig,
    pub learning_rate: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            kd: KdConfig::default(),
            learning_rate: 0.001,
        }
    }
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Adam state paired with the model it optimizes.
#[derive(Debug, Clone)]
pub struct Trainer {
    model: MlpModel,
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl Trainer {
    pub fn new(model: MlpModel) -> Self {
        let n = model.param_count();
        Trainer {
            model,
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
        }
    }

    pub fn model(&self) -> &MlpModel {
        &self.model
    }

    pub fn model_mut(&mut self) -> &mut MlpModel {
        &mut self.model
    }

    pub fn into_model(self) -> MlpModel {
        self.model
    }

    /// One Adam step on the mean loss over the batch. With
    /// `teacher_logits = Some(rows)` the loss is the distillation objective;
    /// otherwise plain hard-label cross-entropy. Returns the pre-step mean
    /// loss.
    pub fn train_step(
        &mut self,
        batch: &[Sample],
        teacher_logits: Option<&[Vec<f64>]>,
        cfg: &TrainConfig,
    ) -> Result<f64, KdError> {
        if batch.is_empty() {
            return Err(KdError::EmptyBatch);
        }
        if let Some(rows) = teacher_logits {
            if rows.len() != batch.len() {
                return Err(KdError::DimensionMismatch {
                    expected: batch.len(),
                    got: rows.len(),
                });
            }
        }
        let model = &self.model;
        let (input_dim, hidden, classes) = (model.input_dim, model.hidden, model.classes);
        let mut g_w1 = vec![0.0; model.w1.len()];
        let mut g_b1 = vec![0.0; hidden];
        let mut g_w2 = vec![0.0; model.w2.len()];
        let mut g_b2 = vec![0.0; classes];
        let mut total_loss = 0.0;
        let scale = 1.0 / batch.len() as f64;

        for (idx, sample) in batch.iter().enumerate() {
            if sample.features.len() != input_dim {
                return Err(KdError::DimensionMismatch {
                    expected: input_dim,
                    got: sample.features.len(),
                });
            }
            if sample.label >= classes {
                return Err(KdError::DimensionMismatch {
                    expected: classes,
                    got: sample.label,
                });
            }
            // Forward, keeping pre-activations for the backward pass.
            let mut z1 = vec![0.0; hidden];
            let mut a1 = vec![0.0; hidden];
            for h in 0..hidden {
                let mut acc = model.b1[h];
                let row = &model.w1[h * input_dim..(h + 1) * input_dim];
                for (w, xi) in row.iter().zip(&sample.features) {
                    acc += w * xi;
                }
                z1[h] = acc;
                a1[h] = acc.max(0.0);
            }
            let mut logits = vec![0.0; classes];
            for c in 0..classes {
                let mut acc = model.b2[c];
                let row = &model.w2[c * hidden..(c + 1) * hidden];
                for (w, hv) in row.iter().zip(&a1) {
                    acc += w * hv;
                }
                logits[c] = acc;
            }

            let y = one_hot(sample.label, classes);
            let g_logits = match teacher_logits {
                Some(rows) => {
                    total_loss += kd_loss(&logits, &rows[idx], &y, &cfg.kd)?;
                    kd_loss_grad(&logits, &rows[idx], &y, &cfg.kd)?
                }
                None => {
                    let p = softmax(&logits);
                    total_loss += cross_entropy(&p, &y)?;
                    (0..classes).map(|j| p[j] - y[j]).collect()
                }
            };

            for c in 0..classes {
                let g = g_logits[c] * scale;
                g_b2[c] += g;
                for h in 0..hidden {
                    g_w2[c * hidden + h] += g * a1[h];
                }
            }
            for h in 0..hidden {
                if z1[h] <= 0.0 {
                    continue;
                }
                let mut ga = 0.0;
                for c in 0..classes {
                    ga += model.w2[c * hidden + h] * g_logits[c];
                }
                let ga = ga * scale;
                g_b1[h] += ga;
                for i in 0..input_dim {
                    g_w1[h * input_dim + i] += ga * sample.features[i];
                }
            }
        }

        let mut grad = Vec::with_capacity(self.model.param_count());
        grad.extend_from_slice(&g_w1);
        grad.extend_from_slice(&g_b1);
        grad.extend_from_slice(&g_w2);
        grad.extend_from_slice(&g_b2);
        self.adam_update(&grad, cfg.learning_rate);
        Ok(total_loss * scale)
    }

    fn adam_update(&mut self, grad: &[f64], lr: f64) {
        self.step += 1;
        let t = self.step as f64;
        let bias1 = 1.0 - ADAM_BETA1.powf(t);
        let bias2 = 1.0 - ADAM_BETA2.powf(t);
        let mut flat = self.model.flatten_params();
        for i in 0..flat.len() {
            self.m[i] = ADAM_BETA1 * self.m[i] + (1.0 - ADAM_BETA1) * grad[i];
            self.v[i] = ADAM_BETA2 * self.v[i] + (1.0 - ADAM_BETA2) * grad[i] * grad[i];
            let m_hat = self.m[i] / bias1;
            let v_hat = self.v[i] / bias2;
            flat[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
        }
        self.model
            .load_params(&flat)
            .expect("flat vector has matching length");
    }
}

/// Computes teacher logits for every sample in a batch.
pub fn teacher_logits(teacher: &MlpModel, batch: &[Sample]) -> Result<Vec<Vec<f64>>, KdError> {
    batch.iter().map(|s| teacher.logits(&s.features)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const LN2: f64 = std::f64::consts::LN_2;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    /// Independent reference path: plain exponentials, no max subtraction.
    fn ref_softmax(z: &[f64], tau: f64) -> Vec<f64> {
        let exps: Vec<f64> = z.iter().map(|&v| (v / tau).exp()).collect();
        let sum: f64 = exps.iter().sum();
        exps.into_iter().map(|e| e / sum).collect()
    }

    fn ref_cross_entropy(p: &[f64], t: &[f64]) -> f64 {
        -t.iter()
            .zip(p)
            .map(|(&ti, &pi)| ti * pi.max(1e-12).ln())
            .sum::<f64>()
    }

    fn ref_kd_loss(s: &[f64], t: &[f64], y: &[f64], cfg: &KdConfig) -> f64 {
        (1.0 - cfg.alpha) * ref_cross_entropy(&ref_softmax(s, 1.0), y)
            + cfg.alpha
                * cfg.tau
                * cfg.tau
                * ref_cross_entropy(&ref_softmax(s, cfg.tau), &ref_softmax(t, cfg.tau))
    }

    #[test]
    fn softmax_basics() {
        let p = softmax(&[0.0, 0.0]);
        assert_close(p[0], 0.5, 1e-15);
        assert_close(p[1], 0.5, 1e-15);

        let p = softmax(&[LN2, 0.0]);
        assert_close(p[0], 2.0 / 3.0, 1e-15);
        assert_close(p[1], 1.0 / 3.0, 1e-15);
    }

    #[test]
    fn softmax_shift_invariance() {
        let z = [1.5, -0.25, 3.0, 0.0];
        let shifted: Vec<f64> = z.iter().map(|v| v + 123.456).collect();
        let a = softmax(&z);
        let b = softmax(&shifted);
        for (x, y) in a.iter().zip(&b) {
            assert_close(*x, *y, 1e-12);
        }
    }

    #[test]
    fn softmax_sums_to_one_over_wide_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            let k = rng.gen_range(2..8);
            let z: Vec<f64> = (0..k).map(|_| rng.gen_range(-50.0..50.0)).collect();
            let p = softmax(&z);
            let sum: f64 = p.iter().sum();
            assert_close(sum, 1.0, 1e-12);
            assert!(p.iter().all(|&v| v > 0.0 && v < 1.0 + 1e-12));
        }
    }

    #[test]
    fn softmax_temp_cases() {
        let z = [1.0, 2.0, -0.5];
        let a = softmax_temp(&z, 1.0);
        let b = softmax(&z);
        for (x, y) in a.iter().zip(&b) {
            assert_close(*x, *y, 1e-15);
        }

        // Large temperature flattens toward uniform.
        let p = softmax_temp(&[3.0, 0.0, 0.0], 1e4);
        for v in &p {
            assert_close(*v, 1.0 / 3.0, 1e-3);
        }

        // Temperature is a logit rescaling.
        let a = softmax_temp(&[20.0, 0.0], 20.0);
        let b = softmax(&[1.0, 0.0]);
        for (x, y) in a.iter().zip(&b) {
            assert_close(*x, *y, 1e-15);
        }
    }

    #[test]
    fn cross_entropy_cases() {
        // Near-certain correct prediction: loss about zero.
        let p = [1.0 - 3e-12, 1.5e-12, 1.5e-12];
        let y = [1.0, 0.0, 0.0];
        assert!(cross_entropy(&p, &y).unwrap() < 1e-10);

        let uniform = [0.25; 4];
        assert_close(
            cross_entropy(&uniform, &uniform).unwrap(),
            (4.0f64).ln(),
            1e-12,
        );

        // Arbitrary pair against the independent reference path.
        let p = [0.2, 0.05, 0.3, 0.45];
        let t = [0.1, 0.4, 0.25, 0.25];
        assert_close(
            cross_entropy(&p, &t).unwrap(),
            ref_cross_entropy(&p, &t),
            1e-12,
        );

        assert!(matches!(
            cross_entropy(&[0.5, 0.5], &[1.0, 0.0, 0.0]),
            Err(KdError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn kd_loss_alpha_zero_is_hard_cross_entropy() {
        let cfg = KdConfig::new(0.0, 20.0).unwrap();
        let s = [0.5, -1.0, 2.0];
        let t = [9.0, 9.0, 9.0];
        let y = one_hot(2, 3);
        let loss = kd_loss(&s, &t, &y, &cfg).unwrap();
        assert_close(loss, cross_entropy(&softmax(&s), &y).unwrap(), 1e-15);
    }

    #[test]
    fn kd_loss_alpha_one_self_distillation_is_entropy() {
        let cfg = KdConfig::new(1.0, 20.0).unwrap();
        let s = [2.0, -0.5, 1.0, 0.0];
        let y = one_hot(0, 4);
        let loss = kd_loss(&s, &s, &y, &cfg).unwrap();
        let q = softmax_temp(&s, cfg.tau);
        let entropy: f64 = -q.iter().map(|&v| v * v.ln()).sum::<f64>();
        assert_close(loss, cfg.tau * cfg.tau * entropy, 1e-10);

        // Stationary point: gradient vanishes when student matches teacher
        // and the hard term is switched off.
        let grad = kd_loss_grad(&s, &s, &y, &cfg).unwrap();
        for g in grad {
            assert!(g.abs() < 1e-15);
        }
    }

    #[test]
    fn kd_loss_matches_reference_evaluation() {
        let cfg = KdConfig::default();
        let s = [1.2, -0.7, 0.3, 2.5, -1.1];
        let t = [0.9, -0.2, 0.8, 1.9, -0.6];
        let y = one_hot(3, 5);
        let got = kd_loss(&s, &t, &y, &cfg).unwrap();
        assert_close(got, ref_kd_loss(&s, &t, &y, &cfg), 1e-9);
    }

    #[test]
    fn kd_grad_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let h = 1e-5;
        for trial in 0..30 {
            let alpha = [0.0, 0.5, 1.0][trial % 3];
            let tau = [1.0, 20.0][trial % 2];
            let cfg = KdConfig::new(alpha, tau).unwrap();
            let s: Vec<f64> = (0..5).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let t: Vec<f64> = (0..5).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let y = one_hot(rng.gen_range(0..5), 5);
            let grad = kd_loss_grad(&s, &t, &y, &cfg).unwrap();
            for j in 0..5 {
                let mut plus = s.clone();
                plus[j] += h;
                let mut minus = s.clone();
                minus[j] -= h;
                let numeric = (kd_loss(&plus, &t, &y, &cfg).unwrap()
                    - kd_loss(&minus, &t, &y, &cfg).unwrap())
                    / (2.0 * h);
                let denom = numeric.abs().max(1e-3);
                assert!(
                    (grad[j] - numeric).abs() / denom <= 1e-5,
                    "grad {} vs numeric {} (alpha {alpha}, tau {tau})",
                    grad[j],
                    numeric
                );
            }
        }
    }

    #[test]
    fn kd_loss_continuous_in_alpha() {
        let s = [0.4, -1.2, 2.2];
        let t = [1.0, 0.0, 1.5];
        let y = one_hot(1, 3);
        for alpha in [0.0, 0.3, 0.7, 1.0 - 1e-9] {
            let a = kd_loss(&s, &t, &y, &KdConfig::new(alpha, 20.0).unwrap()).unwrap();
            let b = kd_loss(&s, &t, &y, &KdConfig::new(alpha + 1e-9, 20.0).unwrap()).unwrap();
            assert!((a - b).abs() <= 1e-6);
        }
    }

    #[test]
    fn param_counts_increase_with_tier() {
        let teacher = MlpModel::teacher(8, 4, 0);
        let counts: Vec<usize> = StudentTier::ALL
            .iter()
            .map(|&t| MlpModel::student(t, 8, 4, 0).param_count())
            .collect();
        assert!(counts[0] < counts[1]);
        assert!(counts[1] < counts[2]);
        assert!(counts[2] < teacher.param_count());
    }

    #[test]
    fn flatten_load_round_trip_is_bit_exact() {
        let model = MlpModel::student(StudentTier::Medium, 6, 3, 77);
        let flat = model.flatten_params();
        assert_eq!(flat.len(), model.param_count());
        let mut other = MlpModel::student(StudentTier::Medium, 6, 3, 78);
        other.load_params(&flat).unwrap();
        assert_eq!(other.flatten_params(), flat);
        assert_eq!(other, model);
    }

    #[test]
    fn checkpoint_round_trip() {
        let model = MlpModel::student(StudentTier::Small, 4, 3, 5);
        let mut bytes = Vec::new();
        model.save_checkpoint(&mut bytes).unwrap();
        assert_eq!(bytes.len(), 8 + 8 * model.param_count());
        let mut restored = MlpModel::student(StudentTier::Small, 4, 3, 99);
        restored.load_checkpoint(bytes.as_slice()).unwrap();
        assert_eq!(restored, model);

        let mut wrong = MlpModel::student(StudentTier::Large, 4, 3, 99);
        assert!(matches!(
            wrong.load_checkpoint(bytes.as_slice()),
            Err(KdError::BadCheckpoint(_))
        ));
    }

    fn blob_batch(seed: u64, per_class: usize) -> Vec<Sample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut batch = Vec::new();
        for label in 0..2usize {
            let cx = if label == 0 { -2.0 } else { 2.0 };
            for _ in 0..per_class {
                batch.push(Sample {
                    features: vec![cx + rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)],
                    label,
                });
            }
        }
        batch
    }

    #[test]
    fn training_separates_two_blobs() {
        let batch = blob_batch(3, 32);
        let mut trainer = Trainer::new(MlpModel::student(StudentTier::Small, 2, 2, 1));
        let cfg = TrainConfig {
            learning_rate: 0.01,
            ..TrainConfig::default()
        };
        for _ in 0..200 {
            trainer.train_step(&batch, None, &cfg).unwrap();
        }
        assert!(trainer.model().accuracy(&batch).unwrap() >= 0.99);
    }

    #[test]
    fn zero_learning_rate_keeps_params() {
        let batch = blob_batch(4, 8);
        let mut trainer = Trainer::new(MlpModel::student(StudentTier::Small, 2, 2, 2));
        let before = trainer.model().flatten_params();
        let cfg = TrainConfig {
            learning_rate: 0.0,
            ..TrainConfig::default()
        };
        trainer.train_step(&batch, None, &cfg).unwrap();
        assert_eq!(trainer.model().flatten_params(), before);
    }

    #[test]
    fn loss_decreases_after_one_step() {
        let batch = blob_batch(5, 16);
        let teacher = {
            let mut t = Trainer::new(MlpModel::teacher(2, 2, 3));
            let cfg = TrainConfig {
                learning_rate: 0.01,
                ..TrainConfig::default()
            };
            for _ in 0..100 {
                t.train_step(&batch, None, &cfg).unwrap();
            }
            t.into_model()
        };
        let t_logits = teacher_logits(&teacher, &batch).unwrap();
        let mut trainer = Trainer::new(MlpModel::student(StudentTier::Medium, 2, 2, 6));
        let cfg = TrainConfig::default();
        let first = trainer.train_step(&batch, Some(&t_logits), &cfg).unwrap();
        let second = trainer.train_step(&batch, Some(&t_logits), &cfg).unwrap();
        assert!(second < first, "loss {second} should drop below {first}");
    }

    #[test]
    fn train_step_is_deterministic() {
        let batch = blob_batch(6, 8);
        let cfg = TrainConfig::default();
        let mut a = Trainer::new(MlpModel::student(StudentTier::Small, 2, 2, 11));
        let mut b = Trainer::new(MlpModel::student(StudentTier::Small, 2, 2, 11));
        for _ in 0..10 {
            a.train_step(&batch, None, &cfg).unwrap();
            b.train_step(&batch, None, &cfg).unwrap();
        }
        assert_eq!(a.model().flatten_params(), b.model().flatten_params());
    }
}
