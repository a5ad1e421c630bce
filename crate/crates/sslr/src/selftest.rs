//! Numerical invariant checks run by `sslr selftest`.

use std::fmt;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sslr_core::frame::{istft, stft};
use sslr_core::mixing::operator_norm_estimate;
use sslr_core::prox::{project_l2_ball, project_lowrank_magnitude, singular_values, truncated_svd};
use sslr_core::solver::NORM_SAFETY;
use sslr_core::{
    Complex64, DMatrix, FilterBank, MixingOperator, MultichannelSignal, RankBudget, StftConfig,
    TfTensor, WindowKind,
};

use crate::config::RunConfig;
use crate::error::CliResult;

const SEED: u64 = 0x5e1f_7e57;

/// A measured residual and the largest value that still passes.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub tolerance: f64,
}

impl Check {
    fn new(name: impl Into<String>, measured: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            measured,
            tolerance,
        }
    }

    pub fn passed(&self) -> bool {
        self.measured <= self.tolerance
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {:<40} measured {:.3e}  tolerance {:.1e}",
            if self.passed() { "PASS" } else { "FAIL" },
            self.name,
            self.measured,
            self.tolerance
        )
    }
}

fn random_signal(rng: &mut ChaCha8Rng, channels: usize, len: usize) -> MultichannelSignal {
    let v = (0..channels * len).map(|_| rng.random_range(-1.0..1.0)).collect();
    MultichannelSignal::new(channels, len, 8000.0, v).expect("finite samples")
}

fn random_bank(rng: &mut ChaCha8Rng, m: usize, n: usize, len: usize) -> FilterBank {
    let taps = (0..m * n * len).map(|_| rng.random_range(-1.0..1.0)).collect();
    FilterBank::new(m, n, len, taps).expect("random taps")
}

fn tf_inner(a: &TfTensor, b: &TfTensor) -> f64 {
    a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| (x * y.conj()).re).sum()
}

pub fn mixing_adjoint(trials: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let m = rng.random_range(1..=3);
        let n = rng.random_range(1..=3);
        let t = rng.random_range(16..400);
        let len = rng.random_range(1..150);
        let op = MixingOperator::new(&random_bank(&mut rng, m, n, len), t);
        let s = random_signal(&mut rng, n, t);
        let x = random_signal(&mut rng, m, t);
        let lhs = op.forward(&s).expect("shapes").dot(&x);
        let rhs = s.dot(&op.adjoint(&x).expect("shapes"));
        worst = worst.max((lhs - rhs).abs() / (s.norm() * x.norm()));
    }
    Check::new(format!("mixing adjoint ({trials} trials)"), worst, 1e-10)
}

pub fn operator_norm_bound(probes: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 1);
    let t = 512;
    let bank = random_bank(&mut rng, 2, 3, 40);
    let est = operator_norm_estimate(&bank, t, 200) * NORM_SAFETY;
    let op = MixingOperator::new(&bank, t);
    let worst = (0..probes)
        .map(|_| {
            let s = random_signal(&mut rng, 3, t);
            op.forward(&s).expect("shapes").norm() / (est * s.norm())
        })
        .fold(0.0, f64::max);
    Check::new("operator norm bound", worst - 1.0, 1e-3)
}

pub fn tight_frame(cfg: &StftConfig) -> Check {
    let kind = match cfg.window_kind() {
        WindowKind::Cosine => "cosine",
        WindowKind::Rectangular => "rectangular",
        WindowKind::Custom(_) => "custom",
    };
    Check::new(
        format!("tight frame L={} R={} {kind}", cfg.window_len(), cfg.redundancy()),
        cfg.tightness_residual(),
        1e-10,
    )
}

pub fn frame_parseval(cfg: &StftConfig, probes: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 2);
    let nu = cfg.frame_constant();
    let worst = (0..probes)
        .map(|_| {
            let s = random_signal(&mut rng, 1, cfg.signal_len());
            let c = stft(&s, cfg).expect("shapes").frobenius_norm();
            let e = s.norm() * s.norm();
            (c * c - nu * e).abs() / (nu * e)
        })
        .fold(0.0, f64::max);
    Check::new("frame Parseval", worst, 1e-10)
}

pub fn frame_adjoint(cfg: &StftConfig, probes: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 3);
    let worst = (0..probes)
        .map(|_| {
            let s = random_signal(&mut rng, 1, cfg.signal_len());
            let coeffs = (0..cfg.num_coeffs())
                .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                .collect();
            let c = TfTensor::from_coeffs(1, cfg, s.sample_rate(), coeffs).expect("shapes");
            let lhs = tf_inner(&stft(&s, cfg).expect("shapes"), &c);
            let rhs = s.dot(&istft(&c, cfg).expect("shapes"));
            (lhs - rhs).abs() / (s.norm() * c.frobenius_norm())
        })
        .fold(0.0, f64::max);
    Check::new("frame adjoint", worst, 1e-10)
}

pub fn l2_ball(trials: usize) -> [Check; 2] {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 4);
    let mut norm_err: f64 = 0.0;
    let mut idem_err: f64 = 0.0;
    for _ in 0..trials {
        let z = random_signal(&mut rng, 2, 64);
        let center = random_signal(&mut rng, 2, 64);
        let eps = rng.random_range(0.01..1.0) * z.distance(&center);
        let p = project_l2_ball(&z, &center, eps).expect("shapes");
        norm_err = norm_err.max((p.distance(&center) - eps).abs() / eps);
        let pp = project_l2_ball(&p, &center, eps).expect("shapes");
        idem_err = idem_err.max(pp.distance(&p) / p.norm());
    }
    [
        Check::new("l2 ball radius", norm_err, 1e-12),
        Check::new("l2 ball idempotence", idem_err, 1e-12),
    ]
}

pub fn truncated_svd_tail(trials: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 5);
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let m = DMatrix::from_fn(8, 8, |_, _| rng.random_range(-1.0..1.0));
        let r = rng.random_range(1..8);
        let t = truncated_svd(&m, RankBudget::new(r).expect("r >= 1"));
        let residual = (&m - &t).norm_squared();
        let tail: f64 = singular_values(&m)[r..].iter().map(|s| s * s).sum();
        worst = worst.max((residual - tail).abs() / tail);
    }
    Check::new("truncated SVD tail energy", worst, 1e-8)
}

/// Fraction of random rank-feasible candidates closer to `z` than the
/// magnitude projection.
pub fn lowrank_projection(instances: usize, candidates: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 6);
    let (rows, cols, r) = (6, 9, 2);
    let budget = RankBudget::new(r).expect("r >= 1");
    let mut beaten = 0usize;
    for _ in 0..instances {
        let z = DMatrix::from_fn(rows, cols, |_, _| {
            Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        let best = (&z - project_lowrank_magnitude(&z, budget)).norm();
        let svd = z.map(|c| c.norm()).svd(true, true);
        let (u_r, v_r) = match (&svd.u, &svd.v_t) {
            (Some(u), Some(v_t)) => (u.columns(0, r).into_owned(), v_t.rows(0, r).into_owned()),
            _ => unreachable!("factors were requested"),
        };
        let sigma = DMatrix::from_diagonal(&svd.singular_values.rows(0, r).into_owned());
        for _ in 0..candidates {
            // Half the candidates perturb the optimal factors, half are
            // generic non-negative rank-r products.
            let perturbed = rng.random_bool(0.5).then(|| {
                let du = DMatrix::from_fn(rows, r, |_, _| rng.random_range(-0.05..0.05));
                (&u_r + du) * &sigma * &v_r
            });
            let mag = match perturbed {
                Some(m) if m.iter().all(|&x| x >= 0.0) => m,
                _ => {
                    let u = DMatrix::from_fn(rows, r, |_, _| rng.random_range(0.0..1.0));
                    let v = DMatrix::from_fn(r, cols, |_, _| rng.random_range(0.0..1.0));
                    u * v
                }
            };
            let y = DMatrix::from_fn(rows, cols, |i, j| {
                let jitter = rng.random_range(-0.05..0.05);
                Complex64::from_polar(mag[(i, j)], z[(i, j)].arg() + jitter)
            });
            if (&z - y).norm() < best {
                beaten += 1;
            }
        }
    }
    Check::new(
        "low-rank magnitude projection optimality",
        beaten as f64 / (instances * candidates) as f64,
        0.0,
    )
}

pub fn run(cfg: &RunConfig) -> CliResult<Vec<Check>> {
    let mut checks = vec![mixing_adjoint(100), operator_norm_bound(20)];
    let frame = cfg.stft_config(cfg.benchmark.samples)?;
    checks.push(tight_frame(&frame));
    let extra = [
        StftConfig::new(4096, 256, 2, WindowKind::Cosine)?,
        StftConfig::new(4096, 64, 1, WindowKind::Rectangular)?,
    ];
    checks.extend(extra.iter().map(tight_frame));
    checks.push(frame_parseval(&frame, 10));
    checks.push(frame_adjoint(&frame, 10));
    checks.extend(l2_ball(100));
    checks.push(truncated_svd_tail(100));
    checks.push(lowrank_projection(20, 1000));
    Ok(checks)
}
