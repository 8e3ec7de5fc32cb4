//! Equivalence checks: seeded Monte Carlo mismatch measures, exact
//! univariate comparison, structural audits and the width/depth estimator.
//!
//! Sampling splits the budget into [`SHARDS`] sub-streams. Shard `s` draws
//! from `ChaCha8Rng::seed_from_u64(seed)` with `set_stream(s)`, and every
//! coordinate is `lo + (hi - lo) * u` with `u` from `Rng::random::<f64>()`
//! (53 high bits of a `u64`, scaled by `2^-53`). Test vector, seed 0,
//! stream 0, first three `u`:
//!
//! ```text
//! 0.7090754154265618
//! 0.46592172228961015
//! 0.6991432426747317
//! ```
//!
//! Shard counts are summed in shard order, so a report depends only on
//! `(seed, samples)`. `NETMORPH_THREADS` caps the worker count.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Hypercube;
use crate::netcore::{step, Network, StructureMetrics};
use crate::pwl1d::extract_pwl;

pub const SHARDS: u64 = 64;
pub const DEFAULT_SAMPLES: usize = 1_000_000;
pub const DEFAULT_TOL: f64 = 1e-6;
pub const MIN_SAMPLES: usize = 1_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

/// How two outputs are compared at a sample point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Compare {
    /// `|a(x) - b(x)| > tol`.
    Value { tol: f64 },
    /// `z(a(x)) != z(b(x))`.
    Label,
}

impl Compare {
    fn tol(&self) -> f64 {
        match self {
            Compare::Value { tol } => *tol,
            Compare::Label => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MismatchReport {
    pub estimate: f64,
    pub stderr: f64,
    pub samples: usize,
    pub seed: u64,
    pub tol: f64,
    pub classification: bool,
    pub domain: Hypercube,
    pub absolute_measure: f64,
}

impl MismatchReport {
    fn from_count(count: usize, samples: usize, seed: u64, cmp: Compare, domain: &Hypercube) -> Self {
        let p = count as f64 / samples as f64;
        MismatchReport {
            estimate: p,
            stderr: (p * (1.0 - p) / samples as f64).sqrt(),
            samples,
            seed,
            tol: cmp.tol(),
            classification: matches!(cmp, Compare::Label),
            domain: domain.clone(),
            absolute_measure: p * domain.volume(),
        }
    }

    /// Standard error scaled to the domain volume.
    pub fn absolute_stderr(&self) -> f64 {
        self.stderr * self.domain.volume()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// RNG for one shard.
pub fn shard_rng(seed: u64, shard: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(shard);
    rng
}

fn shard_len(samples: usize, shard: u64) -> usize {
    let base = samples / SHARDS as usize;
    base + usize::from((shard as usize) < samples % SHARDS as usize)
}

fn thread_cap() -> Option<usize> {
    std::env::var("NETMORPH_THREADS").ok()?.parse().ok().filter(|&n: &usize| n > 0)
}

fn run_shards<F>(exec: Execution, f: F) -> Vec<usize>
where
    F: Fn(u64) -> usize + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec == Execution::Parallel {
        use rayon::prelude::*;
        let go = || (0..SHARDS).into_par_iter().map(&f).collect::<Vec<_>>();
        return match thread_cap() {
            Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
                Ok(pool) => pool.install(go),
                Err(e) => {
                    log::warn!("thread pool: {e}; using the global pool");
                    go()
                }
            },
            None => go(),
        };
    }
    #[cfg(not(feature = "parallel"))]
    let _ = (exec, thread_cap());
    (0..SHARDS).map(f).collect()
}

/// Fraction of `domain` where `pred` holds, by seeded uniform sampling.
/// `pred` gets a reusable scratch buffer along with the point.
pub fn sample_fraction<P>(domain: &Hypercube, samples: usize, seed: u64, exec: Execution, pred: P) -> Result<(usize, f64)>
where
    P: Fn(&[f64], &mut Vec<f64>) -> bool + Sync + Send,
{
    if samples < MIN_SAMPLES {
        return Err(Error::Input(format!("need at least {MIN_SAMPLES} samples, got {samples}")));
    }
    let d = domain.dim();
    let counts = run_shards(exec, |s| {
        let mut rng = shard_rng(seed, s);
        let mut x = vec![0.0; d];
        let mut buf = Vec::new();
        let mut hits = 0;
        for _ in 0..shard_len(samples, s) {
            for (k, xk) in x.iter_mut().enumerate() {
                let u: f64 = rng.random();
                *xk = domain.lo[k] + (domain.hi[k] - domain.lo[k]) * u;
            }
            if pred(&x, &mut buf) {
                hits += 1;
            }
        }
        hits
    });
    let count: usize = counts.iter().sum();
    Ok((count, count as f64 / samples as f64))
}

/// Mismatch measure of `a` against `b` on `domain`.
pub fn mismatch_measure_with(
    a: &Network,
    b: &Network,
    domain: &Hypercube,
    samples: usize,
    seed: u64,
    cmp: Compare,
    exec: Execution,
) -> Result<MismatchReport> {
    if a.input_dim() != b.input_dim() || a.input_dim() != domain.dim() {
        return Err(Error::Input(format!(
            "dimension mismatch: {} vs {} on a {}-dimensional box",
            a.input_dim(),
            b.input_dim(),
            domain.dim()
        )));
    }
    let (count, _) = sample_fraction(domain, samples, seed, exec, |x, buf| {
        let va = a.eval_with(x, buf);
        let vb = b.eval_with(x, buf);
        match cmp {
            Compare::Value { tol } => !((va - vb).abs() <= tol),
            Compare::Label => step(va) != step(vb),
        }
    })?;
    Ok(MismatchReport::from_count(count, samples, seed, cmp, domain))
}

/// [`mismatch_measure_with`] using value comparison at `tol` and the
/// parallel path.
pub fn mismatch_measure(
    a: &Network,
    b: &Network,
    domain: &Hypercube,
    samples: usize,
    seed: u64,
    tol: f64,
) -> Result<MismatchReport> {
    mismatch_measure_with(a, b, domain, samples, seed, Compare::Value { tol }, Execution::Parallel)
}

/// Max `|a - b|` over a uniform grid on `[-B, B]` plus the breakpoints of
/// both networks.
pub fn exact_compare_1d(a: &Network, b: &Network, bound: f64, grid_points: usize) -> Result<f64> {
    if a.input_dim() != 1 || b.input_dim() != 1 {
        return Err(Error::Input("exact comparison needs univariate networks".into()));
    }
    let mut xs: Vec<f64> = (0..=grid_points.max(1))
        .map(|i| -bound + 2.0 * bound * i as f64 / grid_points.max(1) as f64)
        .collect();
    for net in [a, b] {
        xs.extend_from_slice(extract_pwl(net, bound)?.interior());
    }
    let mut buf = Vec::new();
    let mut err: f64 = 0.0;
    for x in xs {
        let d = (a.eval_with(&[x], &mut buf) - b.eval_with(&[x], &mut buf)).abs();
        err = err.max(d);
    }
    Ok(err)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub pass: bool,
    pub actual: StructureMetrics,
    pub diffs: Vec<String>,
}

/// Compares width and depth against `expected`. Neuron and parameter
/// counts are compared only when `expected` gives them as nonzero.
pub fn structural_audit(net: &Network, expected: &StructureMetrics) -> AuditReport {
    let actual = net.structure_metrics();
    let mut diffs = Vec::new();
    let mut check = |name: &str, want: usize, got: usize, always: bool| {
        if (always || want != 0) && want != got {
            diffs.push(format!("{name}: expected {want}, got {got}"));
        }
    };
    check("width", expected.width, actual.width, true);
    check("depth", expected.depth, actual.depth, true);
    check("neuron_count", expected.neuron_count, actual.neuron_count, false);
    check("parameter_count", expected.parameter_count, actual.parameter_count, false);
    AuditReport {
        pass: diffs.is_empty(),
        actual,
        diffs,
    }
}

fn shape(width: usize, depth: usize) -> StructureMetrics {
    StructureMetrics {
        width,
        depth,
        neuron_count: 0,
        parameter_count: 0,
    }
}

pub fn expected_wide_piece(d: usize) -> StructureMetrics {
    shape(d * (d + 1) * ((1 << d) - 1) + 2, d + 1)
}

pub fn expected_deep_piece(d: usize) -> StructureMetrics {
    shape(d * d * (d + 1), d + 2)
}

pub fn expected_step_wide_block(d: usize) -> StructureMetrics {
    shape(d + 1, 2)
}

pub fn expected_step_deep_block(d: usize) -> StructureMetrics {
    shape(d + 1, d + 1)
}

/// `(max{N^Σ, L n}, α log₂ N^Σ + log₂ n)`.
pub fn width_depth_estimate(n_sigma: f64, l: f64, n: f64, alpha: f64) -> Result<(f64, f64)> {
    if [n_sigma, l, n, alpha].iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::Input(format!(
            "estimator inputs must be positive, got N={n_sigma} L={l} n={n} alpha={alpha}"
        )));
    }
    Ok((n_sigma.max(l * n), alpha * n_sigma.log2() + n.log2()))
}
