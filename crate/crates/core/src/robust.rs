//! Robustness probes: L∞ PGD and seeded noise corruptions on `[0, 1]` inputs.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grad::{input_gradient, Labels, LossKind};
use crate::linalg::{Matrix, Real};
use crate::polynet::PolyNetwork;

pub const GAUSSIAN_SIGMAS: [f64; 5] = [0.04, 0.06, 0.08, 0.09, 0.10];
pub const IMPULSE_FRACTIONS: [f64; 5] = [0.01, 0.02, 0.03, 0.05, 0.07];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    /// L∞ budget in input units.
    pub epsilon: f64,
    pub steps: usize,
    pub step_size: f64,
    pub seed: u64,
    pub random_start: bool,
}

impl AttackConfig {
    /// Random start and step size `2.5·ε/steps`.
    pub fn new(epsilon: f64, steps: usize, seed: u64) -> Self {
        AttackConfig {
            epsilon,
            steps,
            step_size: 2.5 * epsilon / steps.max(1) as f64,
            seed,
            random_start: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0) || self.steps == 0 {
            return Err(Error::Config("attack needs epsilon >= 0 and steps >= 1".into()));
        }
        if !(self.step_size > 0.0) && self.epsilon > 0.0 {
            return Err(Error::Config("attack step_size must be > 0".into()));
        }
        Ok(())
    }
}

fn stream(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64 + 1);
    rng
}

fn project<T: Real>(v: T, x0: T, eps: T) -> T {
    v.max(x0 - eps).min(x0 + eps).max(T::zero()).min(T::one())
}

/// Sign-gradient ascent on the task loss, projected onto the ε-ball around
/// `x` intersected with `[0, 1]^D`. `index` selects the random-start
/// substream and the label row.
pub fn pgd_attack<T: Real>(
    net: &PolyNetwork<T>,
    x: &[T],
    labels: &Labels<T>,
    index: usize,
    cfg: &AttackConfig,
    loss: LossKind,
) -> Result<Vec<T>> {
    cfg.validate()?;
    if cfg.epsilon == 0.0 {
        return Ok(x.to_vec());
    }
    let eps = T::c(cfg.epsilon);
    let step = T::c(cfg.step_size);
    let mut adv: Vec<T> = if cfg.random_start {
        let mut rng = stream(cfg.seed, index);
        x.iter()
            .map(|&v| project(v + T::c(rng.random_range(-cfg.epsilon..=cfg.epsilon)), v, eps))
            .collect()
    } else {
        x.to_vec()
    };
    for _ in 0..cfg.steps {
        let (_, g) = input_gradient(net, &adv, labels, index, loss)?;
        for ((a, &x0), gi) in adv.iter_mut().zip(x).zip(g) {
            let s = if gi > T::zero() {
                T::one()
            } else if gi < T::zero() {
                -T::one()
            } else {
                T::zero()
            };
            *a = project(*a + step * s, x0, eps);
        }
    }
    Ok(adv)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorruptionKind {
    GaussianNoise,
    ImpulseNoise,
}

impl CorruptionKind {
    pub fn name(self) -> &'static str {
        match self {
            CorruptionKind::GaussianNoise => "gaussian_noise",
            CorruptionKind::ImpulseNoise => "impulse_noise",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "gaussian_noise" => Ok(CorruptionKind::GaussianNoise),
            "impulse_noise" => Ok(CorruptionKind::ImpulseNoise),
            _ => Err(Error::Config(format!("unknown corruption '{s}'"))),
        }
    }
}

/// Number of coordinates an impulse corruption touches: `⌈f·D⌉`.
pub fn impulse_count(severity: usize, d: usize) -> Result<usize> {
    let f = severity_entry(&IMPULSE_FRACTIONS, severity)?;
    // Guard against 0.07·100 = 7.000000000000001.
    Ok(((f * d as f64) - 1e-9).ceil().max(0.0) as usize)
}

fn severity_entry(table: &[f64; 5], severity: usize) -> Result<f64> {
    if !(1..=5).contains(&severity) {
        return Err(Error::Config(format!("severity {severity} outside 1..=5")));
    }
    Ok(table[severity - 1])
}

/// Seeded corruption of one input, clipped to `[0, 1]`. Gaussian noise
/// uses `σ(severity)·scale`; impulse noise sets a fraction of coordinates
/// to 0 or 1.
pub fn corrupt<T: Real>(x: &[T], kind: CorruptionKind, severity: usize, seed: u64, scale: f64) -> Result<Vec<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let clip = |v: T| v.max(T::zero()).min(T::one());
    match kind {
        CorruptionKind::GaussianNoise => {
            let sigma = severity_entry(&GAUSSIAN_SIGMAS, severity)? * scale;
            let normal = Normal::new(0.0, sigma).map_err(|e| Error::Config(e.to_string()))?;
            Ok(x.iter().map(|&v| clip(v + T::c(normal.sample(&mut rng)))).collect())
        }
        CorruptionKind::ImpulseNoise => {
            let k = impulse_count(severity, x.len())?.min(x.len());
            let mut out = x.to_vec();
            for j in sample(&mut rng, x.len(), k) {
                out[j] = if rng.random_bool(0.5) { T::one() } else { T::zero() };
            }
            Ok(out)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "probe")]
pub enum Probe {
    Identity,
    Pgd(AttackConfig),
    Corruption {
        kind: CorruptionKind,
        severity: usize,
        seed: u64,
        scale: f64,
    },
}

impl Probe {
    pub fn name(&self) -> &'static str {
        match self {
            Probe::Identity => "clean",
            Probe::Pgd(_) => "pgd",
            Probe::Corruption { kind, .. } => kind.name(),
        }
    }

    /// ε for PGD, severity for corruptions, 0 for identity.
    pub fn param(&self) -> f64 {
        match self {
            Probe::Identity => 0.0,
            Probe::Pgd(c) => c.epsilon,
            Probe::Corruption { severity, .. } => *severity as f64,
        }
    }
}

/// Index of the largest output; ties go to the smallest index.
pub fn argmax<T: Real>(v: &[T]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

pub fn accuracy<T: Real>(net: &PolyNetwork<T>, x: &Matrix<T>, labels: &[usize]) -> Result<f64> {
    robust_accuracy(net, x, labels, &Probe::Identity)
}

/// Classification accuracy on probed inputs. Corruption seeds are offset
/// per sample so each row gets its own draw.
pub fn robust_accuracy<T: Real>(net: &PolyNetwork<T>, x: &Matrix<T>, labels: &[usize], probe: &Probe) -> Result<f64> {
    if x.rows() != labels.len() || labels.is_empty() {
        return Err(Error::Domain("robust_accuracy needs one label per row".into()));
    }
    let as_labels = Labels::Classes(labels.to_vec());
    let mut correct = 0usize;
    for (i, &label) in labels.iter().enumerate() {
        let row = x.row(i);
        let probed = match probe {
            Probe::Identity => row.to_vec(),
            Probe::Pgd(cfg) => pgd_attack(net, row, &as_labels, i, cfg, LossKind::CrossEntropy)?,
            Probe::Corruption {
                kind,
                severity,
                seed,
                scale,
            } => corrupt(row, *kind, *severity, seed.wrapping_add(i as u64), *scale)?,
        };
        if argmax(&net.predict(&probed)?) == label {
            correct += 1;
        }
    }
    Ok(correct as f64 / labels.len() as f64)
}

/// One row of a robustness table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustRow {
    pub probe: String,
    pub param: f64,
    pub accuracy: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polynet::{ActivationKind, InitConfig, RegularizerKind};
    use proptest::{prop_assert, proptest};

    fn net(seed: u64, d: usize) -> PolyNetwork<f64> {
        PolyNetwork::init(
            d,
            &[8],
            3,
            ActivationKind::Poly { degree: 3 },
            RegularizerKind::None,
            InitConfig::default(),
            seed,
        )
        .unwrap()
    }

    fn unit_inputs(seed: u64, n: usize, d: usize) -> Matrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Matrix::from_fn(n, d, |_, _| rng.random_range(0.0..1.0))
    }

    #[test]
    fn zero_epsilon_is_identity() {
        let n = net(1, 5);
        let x = unit_inputs(2, 1, 5);
        let adv = pgd_attack(&n, x.row(0), &Labels::Classes(vec![1]), 0, &AttackConfig::new(0.0, 10, 3), LossKind::CrossEntropy).unwrap();
        assert_eq!(adv, x.row(0));
    }

    #[test]
    fn attack_increases_loss() {
        let n = net(4, 6);
        let x = unit_inputs(5, 10, 6);
        let y = Labels::Classes((0..10).map(|i| i % 3).collect());
        let cfg = AttackConfig::new(0.1, 10, 0);
        let mut up = 0;
        for i in 0..10 {
            let adv = pgd_attack(&n, x.row(i), &y, i, &cfg, LossKind::CrossEntropy).unwrap();
            let (l0, _) = input_gradient(&n, x.row(i), &y, i, LossKind::CrossEntropy).unwrap();
            let (l1, _) = input_gradient(&n, &adv, &y, i, LossKind::CrossEntropy).unwrap();
            if l1 > l0 {
                up += 1;
            }
        }
        assert!(up >= 9, "{up}/10");
    }

    #[test]
    fn single_step_equals_fgsm_from_noisy_start() {
        let n = net(6, 4);
        let x = unit_inputs(7, 1, 4);
        let y = Labels::Classes(vec![2]);
        let eps = 0.05;
        let cfg = AttackConfig {
            step_size: eps,
            ..AttackConfig::new(eps, 1, 11)
        };
        let adv = pgd_attack(&n, x.row(0), &y, 0, &cfg, LossKind::CrossEntropy).unwrap();
        let start = pgd_attack(
            &n,
            x.row(0),
            &y,
            0,
            &AttackConfig { steps: 1, step_size: 1e-300, ..cfg },
            LossKind::CrossEntropy,
        )
        .unwrap();
        // `start` is the noisy start moved by a negligible step.
        let (_, g) = input_gradient(&n, &start, &y, 0, LossKind::CrossEntropy).unwrap();
        for j in 0..4 {
            let x0 = x[(0, j)];
            let want = project(start[j] + eps * g[j].signum(), x0, eps);
            assert!((adv[j] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn impulse_counts_and_schedule() {
        assert_eq!(impulse_count(1, 784).unwrap(), 8);
        assert_eq!(impulse_count(5, 100).unwrap(), 7);
        assert!(impulse_count(0, 10).is_err());
        assert!(impulse_count(6, 10).is_err());
        let x = vec![0.5; 784];
        let c = corrupt(&x, CorruptionKind::ImpulseNoise, 1, 3, 1.0).unwrap();
        assert_eq!(c.iter().filter(|&&v| v != 0.5).count(), 8);
        assert!(CorruptionKind::parse("fog").is_err());
    }

    #[test]
    fn severity_monotone_in_expected_perturbation() {
        for kind in [CorruptionKind::GaussianNoise, CorruptionKind::ImpulseNoise] {
            let mut last = 0.0;
            for sev in 1..=5 {
                let mut total = 0.0;
                for s in 0..1000u64 {
                    let x = vec![0.5f64; 100];
                    let c = corrupt(&x, kind, sev, s, 1.0).unwrap();
                    total += c.iter().zip(&x).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                }
                let avg = total / 1000.0;
                assert!(avg > last, "{kind:?} severity {sev}: {avg} <= {last}");
                last = avg;
            }
        }
    }

    #[test]
    fn corruption_is_seeded_and_clipped() {
        let x: Vec<f64> = (0..50).map(|i| i as f64 / 49.0).collect();
        let a = corrupt(&x, CorruptionKind::GaussianNoise, 5, 9, 3.0).unwrap();
        assert_eq!(a, corrupt(&x, CorruptionKind::GaussianNoise, 5, 9, 3.0).unwrap());
        assert_ne!(a, corrupt(&x, CorruptionKind::GaussianNoise, 5, 10, 3.0).unwrap());
        assert!(a.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn identity_probe_is_clean_accuracy_and_zero_net_is_majority() {
        let n = net(8, 5);
        let x = unit_inputs(1, 30, 5);
        let labels: Vec<usize> = (0..30).map(|i| if i % 3 == 0 { 2 } else { 1 }).collect();
        let clean = robust_accuracy(&n, &x, &labels, &Probe::Identity).unwrap();
        assert_eq!(clean, accuracy(&n, &x, &labels).unwrap());

        let mut z = n.clone();
        for l in &mut z.layers {
            l.w = Matrix::zeros(l.w.rows(), l.w.cols());
            l.b.iter_mut().for_each(|b| *b = 0.0);
        }
        z.layers.last_mut().unwrap().b[1] = 1.0;
        let majority = 20.0 / 30.0;
        for probe in [
            Probe::Identity,
            Probe::Pgd(AttackConfig::new(0.3, 5, 0)),
            Probe::Corruption { kind: CorruptionKind::ImpulseNoise, severity: 5, seed: 1, scale: 1.0 },
        ] {
            assert_eq!(robust_accuracy(&z, &x, &labels, &probe).unwrap(), majority);
        }
    }

    proptest! {
        #[test]
        fn pgd_stays_in_ball_and_domain(seed in 0u64..1000, eps in 0.0f64..0.5, steps in 1usize..6) {
            let n = net(seed, 4);
            let x = unit_inputs(seed + 1, 1, 4);
            let y = Labels::Classes(vec![(seed % 3) as usize]);
            let adv = pgd_attack(&n, x.row(0), &y, 0, &AttackConfig::new(eps, steps, seed), LossKind::CrossEntropy).unwrap();
            for (a, b) in adv.iter().zip(x.row(0)) {
                prop_assert!((a - b).abs() <= eps + 1e-9);
                prop_assert!((0.0..=1.0).contains(a));
            }
        }
    }
}
