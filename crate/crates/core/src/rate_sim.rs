//! Simulation of the i.i.d.-input information rate of an ISI channel with a
//! forward (BCJR alpha) recursion over the channel trellis.

use crate::channel::ChannelResponse;
use crate::error::{Error, Result};
use crate::scalar::InputDistribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub const DEFAULT_STATE_BUDGET: usize = 1 << 16;
const BATCHES: usize = 32;

/// A rate in nats per symbol with its statistical uncertainty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateEstimate {
    pub value: f64,
    pub std_error: f64,
    pub n_symbols: u64,
    pub n_seeds: usize,
    pub seeds: Vec<u64>,
    /// One estimate per seed, in seed order; empty when not applicable.
    pub per_seed: Vec<f64>,
    /// Bound on the deterministic (non-statistical) error of the estimator.
    pub bias_bound: f64,
}

/// Which form of the per-block information density is averaged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    /// `(ln p(y|x) − ln p(y))/n`.
    OutputEntropy,
    /// `H(x₀) − (−ln p(x|y))/n`: the same quantity minus the zero-mean
    /// fluctuation of `−ln p(x)/n` around `H(x₀)`. Much lower variance when
    /// the input entropy is mostly recovered.
    Equivocation,
}

#[derive(Debug, Clone, Copy)]
pub struct SimOptions {
    /// Renormalize the forward metrics every this many symbols.
    pub renorm_period: usize,
    pub state_budget: usize,
    pub estimator: Estimator,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            renorm_period: 1,
            state_budget: DEFAULT_STATE_BUDGET,
            estimator: Estimator::Equivocation,
        }
    }
}

/// Channel trellis; a state is the last `L−1` input indices, most recent
/// in the lowest digit.
#[derive(Debug, Clone)]
pub struct Trellis {
    taps: Vec<f64>,
    atoms: Vec<f64>,
    probs: Vec<f64>,
    noise_var: f64,
    states: usize,
    /// Noiseless output for (state, new input).
    outputs: Vec<f64>,
    prior: Vec<f64>,
}

impl Trellis {
    pub fn new(channel: &ChannelResponse, x: &InputDistribution, rho: f64) -> Result<Self> {
        Self::with_budget(channel, x, rho, DEFAULT_STATE_BUDGET)
    }

    pub fn with_budget(channel: &ChannelResponse, x: &InputDistribution, rho: f64, budget: usize) -> Result<Self> {
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(Error::DomainError(format!("SNR must be positive, got {rho}")));
        }
        let k = x.len();
        let mem = channel.len() - 1;
        let states = (k as u128).checked_pow(mem as u32).filter(|&s| s <= budget as u128);
        let states = match states {
            Some(s) => s as usize,
            None => {
                return Err(Error::StateBudgetExceeded {
                    states: (k as f64).powi(mem as i32).min(usize::MAX as f64) as usize,
                    budget,
                })
            }
        };
        let taps = channel.taps().to_vec();
        let atoms = x.atoms().to_vec();
        let probs = x.probs().to_vec();
        let mut outputs = vec![0.0; states * k];
        let mut prior = vec![1.0; states];
        for s in 0..states {
            let mut past = 0.0;
            let mut rest = s;
            for tap in &taps[1..] {
                let j = rest % k;
                past += tap * atoms[j];
                prior[s] *= probs[j];
                rest /= k;
            }
            for j in 0..k {
                outputs[s * k + j] = taps[0] * atoms[j] + past;
            }
        }
        Ok(Self {
            taps,
            atoms,
            probs,
            noise_var: x.power() / rho,
            states,
            outputs,
            prior,
        })
    }

    pub fn states(&self) -> usize {
        self.states
    }

    fn next_state(&self, s: usize, j: usize) -> usize {
        (s * self.atoms.len() + j) % self.states.max(1)
    }

    /// `ln p(y|x) − ln p(y)` for one received block, given the noise that
    /// produced it. Branch metrics are taken relative to the transmitted
    /// path, so the true path keeps unit likelihood and the recursion stays
    /// in range between renormalizations.
    pub fn information_density(&self, y: &[f64], noise: &[f64], renorm_period: usize) -> f64 {
        self.density_at(y, noise, renorm_period, &[y.len()], None)[0]
    }

    /// As [`Self::information_density`], but with the symbols preceding the
    /// block known: `ln p(y|x) − ln p(y|x_{−L+1..−1})`.
    pub fn information_density_from(&self, y: &[f64], noise: &[f64], renorm_period: usize, state: usize) -> f64 {
        self.density_at(y, noise, renorm_period, &[y.len()], Some(state))[0]
    }

    /// State index of the `L−1` symbols preceding the first output.
    pub fn initial_state(&self, inputs: &[usize]) -> usize {
        let mem = self.taps.len() - 1;
        let k = self.atoms.len();
        (1..=mem).rev().fold(0, |s, i| s * k + inputs[mem - i])
    }

    /// Information density of each prefix `y[..c]` for increasing `c`.
    fn density_at(&self, y: &[f64], noise: &[f64], renorm_period: usize, checkpoints: &[usize], start: Option<usize>) -> Vec<f64> {
        let k = self.atoms.len();
        let period = renorm_period.max(1);
        let scale = 0.5 / self.noise_var;
        let mut alpha = match start {
            Some(s) => {
                let mut a = vec![0.0; self.states];
                a[s] = 1.0;
                a
            }
            None => self.prior.clone(),
        };
        let mut next = vec![0.0; self.states];
        let mut log_norm = 0.0;
        let mut out = Vec::with_capacity(checkpoints.len());
        let mut next_check = checkpoints.iter().peekable();
        while next_check.peek() == Some(&&0) {
            out.push(0.0);
            next_check.next();
        }
        for (t, (&yt, &nt)) in y.iter().zip(noise).enumerate() {
            next.iter_mut().for_each(|v| *v = 0.0);
            let base = nt * nt;
            for s in 0..self.states {
                let a = alpha[s];
                if a == 0.0 {
                    continue;
                }
                for j in 0..k {
                    let d = yt - self.outputs[s * k + j];
                    let m = (-(d * d - base) * scale).exp();
                    next[self.next_state(s, j)] += a * self.probs[j] * m;
                }
            }
            std::mem::swap(&mut alpha, &mut next);
            let total: f64 = alpha.iter().sum();
            if (t + 1) % period == 0 || !(1e-250..=1e250).contains(&total) {
                alpha.iter_mut().for_each(|v| *v /= total);
                log_norm += total.ln();
            }
            while next_check.peek() == Some(&&(t + 1)) {
                let total: f64 = alpha.iter().sum();
                out.push(-(log_norm + total.ln()));
                next_check.next();
            }
        }
        out
    }

    /// Draw `n` channel uses: returns (inputs, outputs, noise). The first
    /// `L−1` inputs precede the block and are not observed.
    pub fn sample(&self, n: usize, rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<f64>, Vec<f64>) {
        let mem = self.taps.len() - 1;
        let mut cum = Vec::with_capacity(self.probs.len());
        let mut acc = 0.0;
        for p in &self.probs {
            acc += p;
            cum.push(acc);
        }
        let draw = |rng: &mut ChaCha8Rng| {
            let u: f64 = rng.random();
            cum.iter().position(|&c| u < c).unwrap_or(cum.len() - 1)
        };
        let inputs: Vec<usize> = (0..n + mem).map(|_| draw(rng)).collect();
        let sd = self.noise_var.sqrt();
        let mut y = Vec::with_capacity(n);
        let mut noise = Vec::with_capacity(n);
        for t in 0..n {
            let clean: f64 = self
                .taps
                .iter()
                .enumerate()
                .map(|(i, h)| h * self.atoms[inputs[t + mem - i]])
                .sum();
            let z: f64 = rng.sample::<f64, _>(StandardNormal) * sd;
            noise.push(z);
            y.push(clean + z);
        }
        (inputs, y, noise)
    }
}

/// Per-seed estimate and batch means.
fn run_seed(trellis: &Trellis, n: u64, seed: u64, opts: &SimOptions) -> (f64, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (inputs, y, noise) = trellis.sample(n as usize, &mut rng);
    let mem = trellis.taps.len() - 1;
    let entropy: f64 = trellis.probs.iter().map(|p| -p * p.ln()).sum();
    // control variate: Σ (ln p(x_t) + H) over the inputs up to each output
    let mut control = vec![0.0; y.len() + 1];
    if opts.estimator == Estimator::Equivocation {
        for t in 0..y.len() {
            control[t + 1] = control[t] + trellis.probs[inputs[t + mem]].ln() + entropy;
        }
    }
    let batch = (n as usize).div_ceil(BATCHES);
    let ends: Vec<usize> = (1..=BATCHES).map(|b| (b * batch).min(y.len())).filter(|&e| e > 0).collect();
    let mut ends = ends;
    ends.dedup();
    let start = trellis.initial_state(&inputs);
    let mut cum = trellis.density_at(&y, &noise, opts.renorm_period, &ends, Some(start));
    for (c, &e) in cum.iter_mut().zip(&ends) {
        *c += control[e];
    }
    let mut batches = Vec::with_capacity(ends.len());
    let (mut prev_end, mut prev) = (0, 0.0);
    for (&e, &c) in ends.iter().zip(&cum) {
        batches.push((c - prev) / (e - prev_end) as f64);
        prev_end = e;
        prev = c;
    }
    (prev / n as f64, batches)
}

/// Simulated information rate in nats/symbol, averaged over `seeds`.
///
/// With several seeds the standard error is taken across seeds; with one it
/// comes from batch means within the block.
pub fn estimate_rate(
    channel: &ChannelResponse,
    x: &InputDistribution,
    rho: f64,
    n_symbols: u64,
    seeds: &[u64],
    opts: SimOptions,
) -> Result<RateEstimate> {
    if seeds.is_empty() || n_symbols < 2 {
        return Err(Error::InvalidParams("need at least one seed and two symbols".into()));
    }
    let trellis = Trellis::with_budget(channel, x, rho, opts.state_budget)?;
    let runs: Vec<(f64, Vec<f64>)> = seeds
        .par_iter()
        .map(|&s| run_seed(&trellis, n_symbols, s, &opts))
        .collect();
    let values: Vec<f64> = runs.iter().map(|r| r.0).collect();
    let value = values.iter().sum::<f64>() / values.len() as f64;
    let std_error = if values.len() > 1 {
        standard_error(&values)
    } else {
        standard_error(&runs[0].1)
    };
    let mem = (channel.len() - 1) as f64;
    Ok(RateEstimate {
        value,
        std_error,
        n_symbols,
        n_seeds: seeds.len(),
        seeds: seeds.to_vec(),
        per_seed: values,
        bias_bound: mem * x.entropy() / n_symbols as f64,
    })
}

fn standard_error(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (var / n).sqrt()
}
