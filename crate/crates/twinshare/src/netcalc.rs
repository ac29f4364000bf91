//! Network-calculus model of the sharing channel.
//!
//! Each agent's model uploads form an affine arrival curve (steady
//! keep-alive rate plus a per-episode burst of `q` model copies). The
//! channel serves at the total bandwidth minus the slice reserved for twin
//! synchronization; subtracting the other contenders' arrivals leaves a
//! rate-latency service curve whose horizontal deviation from the arrival
//! curve is the delay bound. Inverting that bound against the consensus
//! delay budget `pi / (4 d_max)` yields minimum bandwidth and maximum
//! sharing frequency.

use thiserror::Error;

use crate::kd::{MlpModel, StudentTier};

#[derive(Debug, Error)]
pub enum NetcalcError {
    #[error("sync infeasible: edge needs {needed:.3} s of processing per cycle but the deadline is {deadline:.3} s")]
    InfeasibleSync { needed: f64, deadline: f64 },
    #[error("channel saturated: leftover rate {leftover:.3} bit/s after keep-alive and sync reservations")]
    Saturated { leftover: f64 },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// Channel and twin-synchronization parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetParams {
    /// Total channel bandwidth `C`, bits/s.
    pub bandwidth: f64,
    /// Keep-alive rate `E` per flow, bits/s.
    pub keep_alive: f64,
    /// Contention-set size: flows sharing the channel. Distinct from graph
    /// degree; every contender runs the same arrival curve.
    pub contenders: usize,
    /// Twin deviation volume uploaded per sync cycle, bits.
    pub twin_deviation: f64,
    /// Edge processing rate, ops/s.
    pub edge_rate: f64,
    /// Twin computing complexity, ops per bit of deviation.
    pub complexity: f64,
    /// Maximum allowed twin sync delay, seconds.
    pub sync_deadline: f64,
}

impl NetParams {
    pub fn validate(&self) -> Result<(), NetcalcError> {
        let positive = [
            ("bandwidth", self.bandwidth),
            ("keep_alive", self.keep_alive),
            ("twin_deviation", self.twin_deviation),
            ("edge_rate", self.edge_rate),
            ("sync_deadline", self.sync_deadline),
        ];
        for (name, v) in positive {
            if !v.is_finite() || v <= 0.0 {
                return Err(NetcalcError::InvalidParams(format!("{name} = {v}")));
            }
        }
        if self.complexity < 0.0 || !self.complexity.is_finite() {
            return Err(NetcalcError::InvalidParams(format!(
                "complexity = {}",
                self.complexity
            )));
        }
        if self.contenders == 0 {
            return Err(NetcalcError::InvalidParams("contenders = 0".to_string()));
        }
        Ok(())
    }

    /// Bandwidth reserved for twin synchronization:
    /// `delta_g * upsilon / (t_sync * upsilon - chi * delta_g)`.
    ///
    /// Fails when edge processing alone (`chi * delta_g / upsilon`) already
    /// exceeds the deadline, so no bandwidth suffices.
    pub fn dt_bandwidth(&self) -> Result<f64, NetcalcError> {
        let denom = self.sync_deadline * self.edge_rate - self.complexity * self.twin_deviation;
        if denom <= 0.0 {
            return Err(NetcalcError::InfeasibleSync {
                needed: self.complexity * self.twin_deviation / self.edge_rate,
                deadline: self.sync_deadline,
            });
        }
        Ok(self.twin_deviation * self.edge_rate / denom)
    }

    /// Arrival curve of one agent sharing `q` copies per episode:
    /// rate `E`, burst `q * delta(k)`.
    pub fn arrival_curve(&self, model: &ModelSpec, q: u32) -> ArrivalCurve {
        ArrivalCurve {
            rate: self.keep_alive,
            burst: q as f64 * model.delta_bits,
        }
    }

    /// Service left for one agent after the sync reservation and the other
    /// `contenders - 1` flows' arrivals.
    pub fn leftover_service(
        &self,
        model: &ModelSpec,
        q: u32,
    ) -> Result<ServiceCurve, NetcalcError> {
        let others = (self.contenders - 1) as f64;
        let rate = self.bandwidth - self.dt_bandwidth()? - others * self.keep_alive;
        if rate <= 0.0 {
            return Err(NetcalcError::Saturated { leftover: rate });
        }
        Ok(ServiceCurve {
            rate,
            deficit: others * q as f64 * model.delta_bits,
        })
    }

    /// Upper bound on the exchange delay:
    /// `|N| q delta(k) / (C - (|N|-1) E - C_sync)`.
    pub fn delay_bound(&self, model: &ModelSpec, q: u32) -> Result<f64, NetcalcError> {
        let service = self.leftover_service(model, q)?;
        let arrival = self.arrival_curve(model, q);
        // Horizontal deviation of affine arrival vs rate-latency service,
        // closed form: (burst + deficit) / rate.
        Ok((arrival.burst + service.deficit) / service.rate)
    }

    /// Minimum bandwidth keeping the delay bound within the consensus budget
    /// `pi / (4 d_max)`:
    /// `(4 d_max / pi) |N| q delta(k) + (|N|-1) E + C_sync`.
    pub fn min_bandwidth(
        &self,
        model: &ModelSpec,
        q: u32,
        d_max: usize,
    ) -> Result<f64, NetcalcError> {
        let others = (self.contenders - 1) as f64;
        Ok(4.0 * d_max as f64 / std::f64::consts::PI
            * self.contenders as f64
            * q as f64
            * model.delta_bits
            + others * self.keep_alive
            + self.dt_bandwidth()?)
    }

    /// Largest sharing frequency whose delay bound stays within the budget:
    /// `floor((C - (|N|-1) E - C_sync) pi / (4 d_max |N| delta(k)))`.
    ///
    /// `Saturated` means the channel cannot even cover keep-alive plus sync,
    /// so no sharing round fits (q = 0).
    pub fn max_frequency(&self, model: &ModelSpec, d_max: usize) -> Result<u32, NetcalcError> {
        let others = (self.contenders - 1) as f64;
        let leftover = self.bandwidth - others * self.keep_alive - self.dt_bandwidth()?;
        if leftover <= 0.0 {
            return Err(NetcalcError::Saturated { leftover });
        }
        let q = leftover * std::f64::consts::PI
            / (4.0 * d_max as f64 * self.contenders as f64 * model.delta_bits);
        // Guard the floor against representation error in the algebraic
        // inverse of min_bandwidth.
        Ok((q + q.abs() * 1e-12 + 1e-12).floor() as u32)
    }
}

/// Affine arrival envelope `A(t) = rate * t + burst`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArrivalCurve {
    pub rate: f64,
    pub burst: f64,
}

impl ArrivalCurve {
    pub fn eval(&self, t: f64) -> f64 {
        self.rate * t + self.burst
    }
}

/// Rate-latency service envelope `S(t) = max(0, rate * t - deficit)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ServiceCurve {
    pub rate: f64,
    /// Backlog volume the other flows may push ahead of this one.
    pub deficit: f64,
}

impl ServiceCurve {
    pub fn eval(&self, t: f64) -> f64 {
        (self.rate * t - self.deficit).max(0.0)
    }

    /// Latency before any service is guaranteed.
    pub fn latency(&self) -> f64 {
        self.deficit / self.rate
    }
}

/// Shared-model volume and training cost of one student tier.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelSpec {
    pub tier: StudentTier,
    /// Wire volume of one shared model, bits.
    pub delta_bits: f64,
    /// Training compute cost proxy, ops.
    pub phi_ops: f64,
}

/// Bits per shared weight: single-precision wire encoding.
pub const BITS_PER_WEIGHT: f64 = 32.0;

impl ModelSpec {
    /// Spec derived from an actual model: volume is `32 * param_count` bits
    /// (single-precision wire encoding), cost proxy is the parameter count.
    pub fn from_model(tier: StudentTier, model: &MlpModel) -> ModelSpec {
        ModelSpec {
            tier,
            delta_bits: BITS_PER_WEIGHT * model.param_count() as f64,
            phi_ops: model.param_count() as f64,
        }
    }

    /// Desk-scale spec for a tier at the given data dimensions.
    pub fn desk(tier: StudentTier, input_dim: usize, classes: usize) -> ModelSpec {
        let count = tier.hidden_width() * (input_dim + 1) + classes * (tier.hidden_width() + 1);
        ModelSpec {
            tier,
            delta_bits: BITS_PER_WEIGHT * count as f64,
            phi_ops: count as f64,
        }
    }

    /// The full desk-scale family, smallest tier first.
    pub fn desk_family(input_dim: usize, classes: usize) -> [ModelSpec; 3] {
        [
            ModelSpec::desk(StudentTier::Small, input_dim, classes),
            ModelSpec::desk(StudentTier::Medium, input_dim, classes),
            ModelSpec::desk(StudentTier::Large, input_dim, classes),
        ]
    }
}

/// Channel parameter file: [`NetParams`] plus the planning inputs that ride
/// along with it (degree bound, frequency, and the tier family).
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelConfig {
    pub params: NetParams,
    pub d_max: usize,
    pub q: u32,
    pub tiers: [ModelSpec; 3],
}

impl std::str::FromStr for ChannelConfig {
    type Err = NetcalcError;

    /// Parses the `key = value` parameter file format. Tier volumes/costs
    /// default to the desk-scale family for `feature_dim`/`classes` unless
    /// `delta_bits`/`phi_ops` triples are given.
    fn from_str(text: &str) -> Result<Self, NetcalcError> {
        let mut params = NetParams {
            bandwidth: 2.0e7,
            keep_alive: 1.0e4,
            contenders: 6,
            twin_deviation: 1.0e6,
            edge_rate: 1.0e9,
            complexity: 10.0,
            sync_deadline: 0.1,
        };
        let mut d_max = 3usize;
        let mut q = 3u32;
        let mut feature_dim = 20usize;
        let mut classes = 4usize;
        let mut delta_bits: Option<[f64; 3]> = None;
        let mut phi_ops: Option<[f64; 3]> = None;

        for (idx, raw) in text.lines().enumerate() {
            let lineno = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| NetcalcError::Parse {
                line: lineno,
                msg: "expected `key = value`".to_string(),
            })?;
            let key = key.trim();
            let value = value.trim();
            let num = |v: &str| -> Result<f64, NetcalcError> {
                v.trim().parse::<f64>().map_err(|e| NetcalcError::Parse {
                    line: lineno,
                    msg: format!("bad number `{}`: {e}", v.trim()),
                })
            };
            let triple = |v: &str| -> Result<[f64; 3], NetcalcError> {
                let parts: Vec<&str> = v.split(',').collect();
                if parts.len() != 3 {
                    return Err(NetcalcError::Parse {
                        line: lineno,
                        msg: format!("expected three comma-separated values, got {}", parts.len()),
                    });
                }
                Ok([num(parts[0])?, num(parts[1])?, num(parts[2])?])
            };
            match key {
                "bandwidth" => params.bandwidth = num(value)?,
                "keep_alive" => params.keep_alive = num(value)?,
                "contenders" => params.contenders = num(value)? as usize,
                "twin_deviation" => params.twin_deviation = num(value)?,
                "edge_rate" => params.edge_rate = num(value)?,
                "complexity" => params.complexity = num(value)?,
                "sync_deadline" => params.sync_deadline = num(value)?,
                "d_max" => d_max = num(value)? as usize,
                "q" => q = num(value)? as u32,
                "feature_dim" => feature_dim = num(value)? as usize,
                "classes" => classes = num(value)? as usize,
                "delta_bits" => delta_bits = Some(triple(value)?),
                "phi_ops" => phi_ops = Some(triple(value)?),
                other => {
                    return Err(NetcalcError::Parse {
                        line: lineno,
                        msg: format!("unknown key `{other}`"),
                    })
                }
            }
        }

        params.validate()?;
        let mut tiers = ModelSpec::desk_family(feature_dim, classes);
        if let Some(bits) = delta_bits {
            for (spec, b) in tiers.iter_mut().zip(bits) {
                spec.delta_bits = b;
            }
        }
        if let Some(ops) = phi_ops {
            for (spec, o) in tiers.iter_mut().zip(ops) {
                spec.phi_ops = o;
            }
        }
        validate_tier_family(&tiers)?;
        if d_max < 2 {
            return Err(NetcalcError::InvalidParams(format!("d_max = {d_max} < 2")));
        }
        if q == 0 {
            return Err(NetcalcError::InvalidParams("q = 0".to_string()));
        }
        Ok(ChannelConfig {
            params,
            d_max,
            q,
            tiers,
        })
    }
}

/// Checks that volume and cost grow strictly with tier.
pub fn validate_tier_family(tiers: &[ModelSpec; 3]) -> Result<(), NetcalcError> {
    for w in tiers.windows(2) {
        if !(w[0].delta_bits < w[1].delta_bits && w[0].phi_ops < w[1].phi_ops) {
            return Err(NetcalcError::InvalidParams(format!(
                "tier family must grow strictly: delta {} -> {}, phi {} -> {}",
                w[0].delta_bits, w[1].delta_bits, w[0].phi_ops, w[1].phi_ops
            )));
        }
        if w[0].tier.k() + 1 != w[1].tier.k() {
            return Err(NetcalcError::InvalidParams(
                "tier family must list k = 1, 2, 3 in order".to_string(),
            ));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn params() -> NetParams {
        NetParams {
            bandwidth: 2.0e7,
            keep_alive: 1.0e4,
            contenders: 6,
            twin_deviation: 1.0e6,
            edge_rate: 1.0e9,
            complexity: 10.0,
            sync_deadline: 0.1,
        }
    }

    fn medium() -> ModelSpec {
        ModelSpec::desk(StudentTier::Medium, 8, 4)
    }

    fn assert_rel(a: f64, b: f64, tol: f64) {
        let denom = b.abs().max(1e-300);
        assert!((a - b).abs() / denom <= tol, "{a} vs {b} (rel tol {tol})");
    }

    #[test]
    fn dt_bandwidth_no_processing() {
        let mut p = params();
        p.complexity = 0.0;
        assert_rel(
            p.dt_bandwidth().unwrap(),
            p.twin_deviation / p.sync_deadline,
            1e-12,
        );
    }

    #[test]
    fn dt_bandwidth_arithmetic() {
        let p = params();
        // Direct arithmetic: 1e6 * 1e9 / (0.1 * 1e9 - 10 * 1e6).
        let want = 1.0e6 * 1.0e9 / (1.0e8 - 1.0e7);
        assert_rel(p.dt_bandwidth().unwrap(), want, 1e-12);
        assert_rel(want, 1.111e7, 1e-3);
    }

    #[test]
    fn dt_bandwidth_boundary_is_infeasible() {
        let mut p = params();
        // chi * delta_g == t * upsilon exactly.
        p.complexity = p.sync_deadline * p.edge_rate / p.twin_deviation;
        assert!(matches!(
            p.dt_bandwidth(),
            Err(NetcalcError::InfeasibleSync { .. })
        ));
    }

    #[test]
    fn arrival_curve_shape() {
        let p = params();
        let m = medium();
        let a = p.arrival_curve(&m, 3);
        assert_eq!(a.rate, p.keep_alive);
        assert_eq!(a.burst, 3.0 * m.delta_bits);
        assert_eq!(a.eval(0.0), a.burst);
    }

    #[test]
    fn leftover_service_shape_and_saturation() {
        let p = params();
        let m = medium();
        let s = p.leftover_service(&m, 2).unwrap();
        let expected_rate = p.bandwidth - p.dt_bandwidth().unwrap() - 5.0 * p.keep_alive;
        assert_rel(s.rate, expected_rate, 1e-12);
        assert_rel(s.deficit, 5.0 * 2.0 * m.delta_bits, 1e-12);
        assert_eq!(s.eval(0.0), 0.0);

        let mut tight = p;
        tight.bandwidth = p.dt_bandwidth().unwrap() + 4.0 * p.keep_alive;
        assert!(matches!(
            tight.leftover_service(&m, 2),
            Err(NetcalcError::Saturated { .. })
        ));
    }

    #[test]
    fn delay_bound_linear_in_q() {
        let p = params();
        let m = medium();
        let d1 = p.delay_bound(&m, 2).unwrap();
        let d2 = p.delay_bound(&m, 4).unwrap();
        assert_rel(d2, 2.0 * d1, 1e-12);
    }

    #[test]
    fn delay_bound_single_contender() {
        let mut p = params();
        p.contenders = 1;
        let m = medium();
        let want = 3.0 * m.delta_bits / (p.bandwidth - p.dt_bandwidth().unwrap());
        assert_rel(p.delay_bound(&m, 3).unwrap(), want, 1e-12);
    }

    #[test]
    fn min_bandwidth_inverts_to_budget_delay() {
        let p = params();
        let m = medium();
        for d_max in [2usize, 3, 4] {
            for q in [1u32, 3, 7] {
                let c = p.min_bandwidth(&m, q, d_max).unwrap();
                let mut sized = p;
                sized.bandwidth = c;
                let delay = sized.delay_bound(&m, q).unwrap();
                assert_rel(delay, PI / (4.0 * d_max as f64), 1e-9);
            }
        }
    }

    #[test]
    fn min_bandwidth_burst_term_scales_with_degree() {
        let p = params();
        let m = medium();
        let fixed = 5.0 * p.keep_alive + p.dt_bandwidth().unwrap();
        let c3 = p.min_bandwidth(&m, 2, 3).unwrap() - fixed;
        let c6 = p.min_bandwidth(&m, 2, 6).unwrap() - fixed;
        assert_rel(c6, 2.0 * c3, 1e-12);
    }

    #[test]
    fn min_bandwidth_spot_value() {
        let p = params();
        let m = medium();
        // (4*3/pi) * 6 * 2 * delta + 5 * E + C_sync, written out directly.
        let want = 4.0 * 3.0 / PI * 6.0 * 2.0 * m.delta_bits
            + 5.0 * 1.0e4
            + 1.0e6 * 1.0e9 / (1.0e8 - 1.0e7);
        assert_rel(p.min_bandwidth(&m, 2, 3).unwrap(), want, 1e-12);
    }

    #[test]
    fn max_frequency_round_trip() {
        let p = params();
        for spec in ModelSpec::desk_family(8, 4) {
            for d_max in [2usize, 3, 5] {
                for q in 1..=10u32 {
                    let mut sized = p;
                    sized.bandwidth = p.min_bandwidth(&spec, q, d_max).unwrap();
                    assert_eq!(sized.max_frequency(&spec, d_max).unwrap(), q);
                }
            }
        }
    }

    #[test]
    fn max_frequency_saturated_channel() {
        let mut p = params();
        p.bandwidth = p.dt_bandwidth().unwrap() + 4.0 * p.keep_alive;
        assert!(matches!(
            p.max_frequency(&medium(), 3),
            Err(NetcalcError::Saturated { .. })
        ));
    }

    #[test]
    fn max_frequency_non_increasing_in_contenders() {
        let m = medium();
        let mut last = u32::MAX;
        for n in 2..=12usize {
            let mut p = params();
            p.contenders = n;
            let q = p.max_frequency(&m, 3).unwrap();
            assert!(q <= last, "q grew from {last} to {q} at n = {n}");
            last = q;
        }
    }

    #[test]
    fn budget_iff_min_bandwidth_randomized() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let m = medium();
        for _ in 0..200 {
            let mut p = params();
            p.bandwidth = rng.gen_range(5.0e6..5.0e7);
            p.keep_alive = rng.gen_range(1.0e3..1.0e5);
            p.contenders = rng.gen_range(2..10);
            let q = rng.gen_range(1..8u32);
            let d_max = rng.gen_range(2..6usize);
            let budget = PI / (4.0 * d_max as f64);
            let min_c = p.min_bandwidth(&m, q, d_max).unwrap();
            match p.delay_bound(&m, q) {
                Ok(delay) => {
                    assert_eq!(
                        delay <= budget + 1e-12,
                        p.bandwidth >= min_c - 1e-6,
                        "delay {delay}, budget {budget}, C {}, minC {min_c}",
                        p.bandwidth
                    );
                }
                Err(NetcalcError::Saturated { .. }) => {
                    assert!(p.bandwidth < min_c);
                }
                Err(e) => panic!("unexpected error {e}"),
            }
        }
    }

    #[test]
    fn monotonicity_sweeps() {
        let p = params();
        let m = medium();
        // Delay grows with q, delta, contenders; shrinks with C.
        let base = p.delay_bound(&m, 3).unwrap();
        assert!(p.delay_bound(&m, 4).unwrap() > base);
        let mut bigger = m;
        bigger.delta_bits *= 1.5;
        assert!(p.delay_bound(&bigger, 3).unwrap() > base);
        let mut crowded = p;
        crowded.contenders += 2;
        assert!(crowded.delay_bound(&m, 3).unwrap() > base);
        let mut wide = p;
        wide.bandwidth *= 2.0;
        assert!(wide.delay_bound(&m, 3).unwrap() < base);

        // Sync reservation grows with deviation and complexity, shrinks with
        // deadline and edge rate.
        let c = p.dt_bandwidth().unwrap();
        let mut q = p;
        q.twin_deviation *= 2.0;
        assert!(q.dt_bandwidth().unwrap() > c);
        q = p;
        q.complexity *= 2.0;
        assert!(q.dt_bandwidth().unwrap() > c);
        q = p;
        q.sync_deadline *= 2.0;
        assert!(q.dt_bandwidth().unwrap() < c);
        q = p;
        q.edge_rate *= 2.0;
        assert!(q.dt_bandwidth().unwrap() < c);
    }

    #[test]
    fn channel_config_parses_and_validates() {
        let text = "\
# channel
bandwidth = 3.0e7
keep_alive = 2.0e4
contenders = 8
twin_deviation = 5.0e5
edge_rate = 2.0e9
complexity = 4
sync_deadline = 0.05
d_max = 4
q = 2
delta_bits = 1000, 2000, 4000
phi_ops = 10, 20, 40
";
        let cfg: ChannelConfig = text.parse().unwrap();
        assert_eq!(cfg.params.contenders, 8);
        assert_eq!(cfg.d_max, 4);
        assert_eq!(cfg.tiers[2].delta_bits, 4000.0);

        match "bandwidth = oops\n".parse::<ChannelConfig>() {
            Err(NetcalcError::Parse { line: 1, .. }) => {}
            other => panic!("expected parse error, got {other:?}"),
        }
        // Non-increasing custom tiers are rejected.
        let bad = "delta_bits = 5, 4, 3\n";
        assert!(matches!(
            bad.parse::<ChannelConfig>(),
            Err(NetcalcError::InvalidParams(_))
        ));
    }

    #[test]
    fn desk_family_is_strictly_increasing() {
        let family = ModelSpec::desk_family(8, 4);
        validate_tier_family(&family).unwrap();
        let from_models: Vec<f64> = StudentTier::ALL
            .iter()
            .map(|&t| ModelSpec::from_model(t, &MlpModel::student(t, 8, 4, 0)).delta_bits)
            .collect();
        for (spec, bits) in family.iter().zip(from_models) {
            assert_eq!(spec.delta_bits, bits);
        }
    }
}
