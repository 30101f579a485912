//! Bounds and approximations of the rate `I_MMSE` of the unbiased MMSE-DFE
//! output `x_0 + Σ α_k x_k + m̂`, and their comparison with the
//! Shamai-Laroia expression `I_x(SNR_DFE − 1)`.
//!
//! `I_MMSE = I(μ₀; μ₀+m̂) − I(μ₁; μ₁+m̂)` with `μ₀ = x_0 + μ₁` and
//! `μ₁ = Σ_{k≥1} α_k x_k`.

use crate::channel::{spectral_summary, ChannelResponse};
use crate::equalizer::{closed_form_from_spectral, default_half_len, design_mmse_dfe, summarize, DfeDesign, DfeSummary};
use crate::error::{Error, Result};
use crate::mixture::GaussianMixture;
use crate::rate_sim::RateEstimate;
use crate::scalar::{mmse, mutual_info, InputDistribution};
use crate::special::binary_entropy;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Default limit on mixture components for exact evaluation.
pub const DEFAULT_BUDGET: u128 = 1 << 24;
/// Probability mass that may be dropped from an over-budget enumeration.
pub const PRUNE_MASS: f64 = 1e-12;
const MIX_REL_TOL: f64 = 1e-10;
const MC_CHUNK: u64 = 1 << 14;

/// `I_x(SNR_ZF-DFE)`.
pub fn i_sow(channel: &ChannelResponse, x: &InputDistribution, rho: f64) -> Result<f64> {
    let sp = spectral_summary(channel, rho)?;
    mutual_info(x, sp.snr_zf_dfe)
}

/// `I_x(SNR_DFE − 1)`.
pub fn i_sl(channel: &ChannelResponse, x: &InputDistribution, rho: f64) -> Result<f64> {
    let sp = spectral_summary(channel, rho)?;
    mutual_info(x, sp.snr_dfe_excess)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactImmse {
    pub value: f64,
    /// Quadrature error plus the effect of any dropped mixture components.
    pub error: f64,
    /// `I_MMSE − I_x(SNR_U)` with `SNR_U` the unbiased SNR of the same
    /// truncated residual, computed without cancelling the two large terms.
    pub gap_to_sl: f64,
    pub snr_unbiased: f64,
    pub components: usize,
    pub pruned_mass: f64,
}

/// Interference patterns `Σ α_k x_k / σ` with probabilities.
struct Patterns {
    comps: Vec<(f64, f64)>,
    pruned_mass: f64,
}

fn multinomial(n: usize, counts: &[usize]) -> Option<u128> {
    // product of binomials, exact in u128
    let mut total: u128 = 1;
    let mut left = n;
    for &c in counts {
        let mut b: u128 = 1;
        for i in 0..c {
            b = b.checked_mul((left - i) as u128)? / (i as u128 + 1);
        }
        total = total.checked_mul(b)?;
        left -= c;
    }
    Some(total)
}

fn compositions(n: usize, k: usize) -> Vec<Vec<usize>> {
    if k == 1 {
        return vec![vec![n]];
    }
    let mut out = Vec::new();
    for first in 0..=n {
        for mut rest in compositions(n - first, k - 1) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

fn enumerate_patterns(taps: &[f64], atoms: &[f64], probs: &[f64], budget: u128, prune_mass: f64) -> Result<Patterns> {
    let n = taps.len();
    let k = atoms.len();
    let full = (k as u128).checked_pow(n as u32);
    if matches!(full, Some(c) if c <= budget) {
        let mut comps = vec![(0.0, 1.0)];
        for &t in taps {
            let mut next = Vec::with_capacity(comps.len() * k);
            for &(m, w) in &comps {
                for (a, p) in atoms.iter().zip(probs) {
                    next.push((m + t * a, w * p));
                }
            }
            comps = next;
        }
        return Ok(Patterns { comps, pruned_mass: 0.0 });
    }
    // Drop the least likely count classes while their total mass stays
    // within `prune_mass`, then enumerate the rest depth-first.
    let ln_p: Vec<f64> = probs.iter().map(|p| p.ln()).collect();
    let mut classes: Vec<(f64, f64, u128)> = compositions(n, k)
        .into_iter()
        .map(|c| {
            let lp: f64 = c.iter().zip(&ln_p).map(|(&m, l)| m as f64 * l).sum();
            let size = multinomial(n, &c).unwrap_or(u128::MAX);
            (lp, lp.exp() * size as f64, size)
        })
        .collect();
    classes.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut dropped = 0.0;
    let mut first_kept = 0;
    while first_kept < classes.len() {
        // classes with equal per-pattern probability go together
        let lp = classes[first_kept].0;
        let mut end = first_kept;
        let mut mass = 0.0;
        while end < classes.len() && classes[end].0 - lp <= 1e-9 {
            mass += classes[end].1;
            end += 1;
        }
        if dropped + mass > prune_mass {
            break;
        }
        dropped += mass;
        first_kept = end;
    }
    let kept: u128 = classes[first_kept..].iter().fold(0u128, |s, c| s.saturating_add(c.2));
    if kept > budget {
        return Err(Error::BudgetExceeded { components: kept, budget });
    }
    let cutoff = classes[first_kept].0 - 1e-9;
    let max_lp = ln_p.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut comps = Vec::with_capacity(kept as usize);
    fn dfs(
        pos: usize,
        mean: f64,
        lp: f64,
        taps: &[f64],
        atoms: &[f64],
        ln_p: &[f64],
        max_lp: f64,
        cutoff: f64,
        out: &mut Vec<(f64, f64)>,
    ) {
        if pos == taps.len() {
            out.push((mean, lp.exp()));
            return;
        }
        let remaining = (taps.len() - pos - 1) as f64;
        for (a, l) in atoms.iter().zip(ln_p) {
            let next = lp + l;
            if next + remaining * max_lp >= cutoff {
                dfs(pos + 1, mean + taps[pos] * a, next, taps, atoms, ln_p, max_lp, cutoff, out);
            }
        }
    }
    dfs(0, 0.0, 0.0, taps, atoms, &ln_p, max_lp, cutoff, &mut comps);
    Ok(Patterns {
        comps,
        pruned_mass: dropped,
    })
}

/// `I_MMSE` from exactly enumerated Gaussian mixtures.
pub fn i_mmse_exact(design: &DfeDesign, x: &InputDistribution) -> Result<ExactImmse> {
    i_mmse_exact_with(design, x, DEFAULT_BUDGET, PRUNE_MASS)
}

pub fn i_mmse_exact_with(design: &DfeDesign, x: &InputDistribution, budget: u128, prune_mass: f64) -> Result<ExactImmse> {
    let sigma = design.noise_var.sqrt();
    let atoms: Vec<f64> = x.atoms().iter().map(|a| a / sigma).collect();
    let probs = x.probs();
    let pat = enumerate_patterns(&design.residual, &atoms, probs, budget, prune_mass)?;
    let n0 = pat.comps.len() as u128 * atoms.len() as u128;
    if n0 > budget {
        return Err(Error::BudgetExceeded { components: n0, budget });
    }
    let mut comps0 = Vec::with_capacity(n0 as usize);
    for (a, p) in atoms.iter().zip(probs) {
        for &(m, w) in &pat.comps {
            comps0.push((a + m, p * w));
        }
    }
    let mix1 = GaussianMixture::new(pat.comps)?;
    let mix0 = GaussianMixture::new(comps0)?;
    let d0 = mix0.negentropy(MIX_REL_TOL)?;
    let d1 = mix1.negentropy(MIX_REL_TOL)?;
    let (v0, v1) = (mix0.variance(), mix1.variance());
    let value = 0.5 * v0.ln_1p() - d0.value - (0.5 * v1.ln_1p() - d1.value);

    let snr_u = design.snr_unbiased_truncated();
    let dsl = x.output_mixture(snr_u).negentropy(MIX_REL_TOL)?;
    let gap = 0.5 * (v0.ln_1p() - v1.ln_1p() - snr_u.ln_1p()) + dsl.value + d1.value - d0.value;

    let mut error = d0.error + d1.error + dsl.error;
    if pat.pruned_mass > 0.0 {
        // |I − I_kept| ≤ h₂(η) + η·(largest possible information of either part)
        let eta = pat.pruned_mass.min(0.5);
        let span: f64 = design.residual.iter().map(|a| a.abs()).sum::<f64>() + 1.0;
        let amax = atoms.iter().fold(0.0f64, |m, a| m.max(a.abs()));
        let i_cap = 0.5 * (span * amax).powi(2).ln_1p();
        error += 2.0 * (binary_entropy(eta) + eta * i_cap);
    }
    Ok(ExactImmse {
        value,
        error,
        gap_to_sl: gap,
        snr_unbiased: snr_u,
        components: mix0.len(),
        pruned_mass: pat.pruned_mass,
    })
}

/// Density of `W = Σ α_k x_k / σ + N(0,1)` by Fourier inversion of its
/// characteristic function on a trapezoid grid in `t`.
struct InterferenceDensity {
    step: f64,
    psi: Vec<(f64, f64)>,
    error_bound: f64,
}

impl InterferenceDensity {
    fn new(taps: &[f64], atoms: &[f64], probs: &[f64], reach: f64) -> Self {
        // the grid period 2π/Δ must cover every evaluation point plus noise tails
        let period = 2.0 * reach + 40.0;
        let step = 2.0 * PI / period;
        let t_max = 10.0;
        let nodes = (t_max / step).ceil() as usize;
        let psi = (0..=nodes)
            .map(|j| {
                let t = j as f64 * step;
                let (mut re, mut im) = ((-0.5 * t * t).exp(), 0.0);
                for &a in taps {
                    let (mut cr, mut ci) = (0.0, 0.0);
                    for (x, p) in atoms.iter().zip(probs) {
                        let (s, c) = (a * t * x).sin_cos();
                        cr += p * c;
                        ci += p * s;
                    }
                    let r = re * cr - im * ci;
                    im = re * ci + im * cr;
                    re = r;
                }
                (re, im)
            })
            .collect();
        // Gaussian tail of ψ beyond t_max plus noise mass beyond half the period
        let error_bound = crate::special::q_tail(t_max) * (2.0 * PI).sqrt() / PI + 2.0 * crate::special::q_tail(20.0);
        Self { step, psi, error_bound }
    }

    fn eval(&self, u: f64) -> f64 {
        let (s, c) = (-self.step * u).sin_cos();
        let (mut zr, mut zi) = (1.0, 0.0);
        let mut acc = 0.5 * self.psi[0].0;
        for &(pr, pi) in &self.psi[1..] {
            let r = zr * c - zi * s;
            zi = zr * s + zi * c;
            zr = r;
            acc += pr * zr - pi * zi;
        }
        (acc * self.step / PI).max(0.0)
    }
}

/// Monte-Carlo `I_MMSE`: the mean over samples `y = x_0 + w` of the exact
/// posterior entropy `H(x_0 | y)`, subtracted from `H(x_0)`.
///
/// Samples are drawn in fixed chunks, each from its own ChaCha stream, so
/// the result depends only on `seed` and `n_samples`.
pub fn i_mmse_mc(design: &DfeDesign, x: &InputDistribution, n_samples: u64, seed: u64) -> Result<RateEstimate> {
    if n_samples < 10_000 {
        return Err(Error::InvalidParams(format!("need at least 1e4 samples, got {n_samples}")));
    }
    let sigma = design.noise_var.sqrt();
    let atoms: Vec<f64> = x.atoms().iter().map(|a| a / sigma).collect();
    let probs = x.probs().to_vec();
    let taps = design.residual.clone();
    let amax = atoms.iter().fold(0.0f64, |m, a| m.max(a.abs()));
    let range = atoms.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - atoms.iter().cloned().fold(f64::INFINITY, f64::min);
    let reach = taps.iter().map(|a| a.abs()).sum::<f64>() * amax + range;
    let density = InterferenceDensity::new(&taps, &atoms, &probs, reach);
    let cumulative: Vec<f64> = probs
        .iter()
        .scan(0.0, |s, p| {
            *s += p;
            Some(*s)
        })
        .collect();
    let draw = |rng: &mut ChaCha8Rng| -> usize {
        let u: f64 = rng.random();
        cumulative.iter().position(|&c| u < c).unwrap_or(probs.len() - 1)
    };
    let chunks = n_samples.div_ceil(MC_CHUNK);
    let stats: Vec<(f64, f64, u64)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c);
            let count = MC_CHUNK.min(n_samples - c * MC_CHUNK);
            let mut mean = 0.0;
            let mut m2 = 0.0;
            let mut post = vec![0.0; atoms.len()];
            for i in 0..count {
                let mut y = atoms[draw(&mut rng)];
                for &t in &taps {
                    y += t * atoms[draw(&mut rng)];
                }
                let n: f64 = rng.sample(StandardNormal);
                y += n;
                let mut total = 0.0;
                for (j, (a, p)) in atoms.iter().zip(&probs).enumerate() {
                    post[j] = p * density.eval(y - a);
                    total += post[j];
                }
                let h: f64 = post
                    .iter()
                    .filter(|&&v| v > 0.0)
                    .map(|&v| {
                        let q = v / total;
                        -q * q.ln()
                    })
                    .sum();
                let d = h - mean;
                mean += d / (i + 1) as f64;
                m2 += d * (h - mean);
            }
            (mean, m2, count)
        })
        .collect();
    let (mut mean, mut m2, mut n) = (0.0, 0.0, 0u64);
    for (cm, cm2, cn) in stats {
        let total = n + cn;
        let d = cm - mean;
        mean += d * cn as f64 / total as f64;
        m2 += cm2 + d * d * n as f64 * cn as f64 / total as f64;
        n = total;
    }
    let var = m2 / (n - 1) as f64;
    Ok(RateEstimate {
        value: x.entropy() - mean,
        std_error: (var / n as f64).sqrt(),
        n_symbols: n,
        n_seeds: 1,
        seeds: vec![seed],
        per_seed: Vec::new(),
        bias_bound: density.error_bound,
    })
}

/// Fourth-order small-`ε₀` expansion of `I_MMSE − I_SL`.
pub fn slc_gap_series(summary: &DfeSummary, x: &InputDistribution) -> Result<f64> {
    let (g, d) = match (summary.gamma1_cu, summary.delta1_4) {
        (Some(g), Some(d)) => (g, d),
        _ => return Err(Error::MissingMoments),
    };
    let (b0, e) = (summary.beta0_sq, summary.eps0);
    let s2 = x.skewness().powi(2);
    let k2 = x.excess_kurtosis().powi(2);
    Ok(-g * s2 / (6.0 * b0.powi(3)) * e.powi(3)
        - (d * k2 / (24.0 * b0.powi(4)) - (2.0 * b0 + g) * g * s2 / (4.0 * b0.powi(4))) * e.powi(4))
}

/// Coefficient of `(P_x/N₀)³` in `I_MMSE − I_SL` for the two-tap channel.
pub fn two_tap_gap_leading(q: f64, x: &InputDistribution) -> Result<f64> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::DomainError(format!("q must be in (0,1), got {q}")));
    }
    Ok(-q.powi(3) * (1.0 - q * q).powf(1.5) * x.skewness().powi(2) / 6.0)
}

/// Named choices of noise split for [`genie_mmse_lower`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GeniePreset {
    /// Unit noise variance on every block.
    EqualSigma,
    /// Every tap its own block, unit noise variance.
    Singleton,
    /// All noise on one block, `σ² = 1/b²`; the other blocks are observed
    /// noiselessly.
    OneCluster { block: usize },
}

/// Partition and per-block noise variances `σ_m²` for a preset.
pub fn genie_preset(coeffs: &[f64], partition: &[Vec<usize>], preset: GeniePreset) -> Result<(Vec<Vec<usize>>, Vec<f64>)> {
    match preset {
        GeniePreset::EqualSigma => Ok((partition.to_vec(), vec![1.0; partition.len()])),
        GeniePreset::Singleton => Ok(((0..coeffs.len()).map(|k| vec![k]).collect(), vec![1.0; coeffs.len()])),
        GeniePreset::OneCluster { block } => {
            let b = partition
                .get(block)
                .ok_or_else(|| Error::PartitionInvalid(format!("no block {block}")))?
                .iter()
                .map(|&k| coeffs.get(k).map(|a| a * a).unwrap_or(0.0))
                .sum::<f64>();
            if b == 0.0 {
                return Err(Error::PartitionInvalid("chosen block has zero energy".into()));
            }
            let mut s = vec![0.0; partition.len()];
            s[block] = 1.0 / b;
            Ok((partition.to_vec(), s))
        }
    }
}

/// `Σ_m b_m² mmse_{X_m}(γ/σ_m²)`, a lower bound on `mmse_X(γ)` for
/// `X = Σ a_k x_k` with i.i.d. unit-power `x_k`.
pub fn genie_mmse_lower(x: &InputDistribution, coeffs: &[f64], gamma: f64, partition: &[Vec<usize>], noise_vars: &[f64]) -> Result<f64> {
    let energy: f64 = coeffs.iter().map(|a| a * a).sum();
    if (energy - 1.0).abs() > 1e-9 {
        return Err(Error::NormalizationViolated(format!("Σa² = {energy}")));
    }
    if partition.len() != noise_vars.len() {
        return Err(Error::PartitionInvalid("one noise variance per block required".into()));
    }
    let mut seen = vec![false; coeffs.len()];
    for &k in partition.iter().flatten() {
        if k >= coeffs.len() || seen[k] {
            return Err(Error::PartitionInvalid(format!("index {k} out of range or repeated")));
        }
        seen[k] = true;
    }
    if seen.iter().any(|s| !s) {
        return Err(Error::PartitionInvalid("partition does not cover every tap".into()));
    }
    if noise_vars.iter().any(|&s| !(s >= 0.0) || !s.is_finite()) {
        return Err(Error::PartitionInvalid("noise variances must be finite and nonnegative".into()));
    }
    let b2: Vec<f64> = partition.iter().map(|p| p.iter().map(|&k| coeffs[k] * coeffs[k]).sum()).collect();
    let weighted: f64 = b2.iter().zip(noise_vars).map(|(b, s)| b * s).sum();
    if (weighted - 1.0).abs() > 1e-9 {
        return Err(Error::NormalizationViolated(format!("Σb²σ² = {weighted}")));
    }
    let xn = x.normalized();
    let mut total = 0.0;
    for ((block, &b), &s) in partition.iter().zip(&b2).zip(noise_vars) {
        if b == 0.0 || s == 0.0 {
            // noiseless block: estimated perfectly
            continue;
        }
        let g = gamma / s;
        // X_m = Σ a_k x_k / b over all patterns of the block
        let mut vals = vec![(0.0, 1.0)];
        for &k in block {
            let a = coeffs[k] / b.sqrt();
            vals = vals
                .iter()
                .flat_map(|&(v, w)| xn.atoms().iter().zip(xn.probs()).map(move |(x, p)| (v + a * x, w * p)))
                .collect();
        }
        let term = if g == 0.0 {
            1.0
        } else {
            let rg = g.sqrt();
            let values: Vec<f64> = vals.iter().map(|v| v.0).collect();
            let mix = GaussianMixture::new(vals.iter().map(|&(v, w)| (rg * v, w)).collect())?;
            // components are sorted by mean, so sort the values the same way
            let mut order: Vec<usize> = (0..values.len()).collect();
            order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
            let sorted: Vec<f64> = order.iter().map(|&i| values[i]).collect();
            mix.ln_mmse_of(&sorted, 1e-12)?.exp()
        };
        total += b * term;
    }
    Ok(total)
}

/// `I_x(β₀²γ₁) − I_x(γ₁) + I_x(γ₂) − ½ln(1+β₁²γ₂)` for `0 ≤ γ₁ ≤ γ₂ ≤ S`.
pub fn ie_bound_from(summary: &DfeSummary, x: &InputDistribution, g1: f64, g2: f64) -> Result<f64> {
    let s = summary.s;
    if !(0.0 <= g1 && g1 <= g2 && g2 <= s * (1.0 + 1e-12)) {
        return Err(Error::DomainError(format!("need 0 ≤ γ₁ ≤ γ₂ ≤ S, got {g1}, {g2}, S = {s}")));
    }
    Ok(mutual_info(x, summary.beta0_sq * g1)? - mutual_info(x, g1)? + mutual_info(x, g2)?
        - 0.5 * (summary.beta1_sq * g2).ln_1p())
}

pub fn ie_bound(channel: &ChannelResponse, x: &InputDistribution, rho: f64, g1: f64, g2: f64) -> Result<f64> {
    let cf = closed_form_from_spectral(&spectral_summary(channel, rho)?)?;
    ie_bound_from(&cf, x, g1, g2)
}

pub fn ie_simple_from(summary: &DfeSummary, x: &InputDistribution) -> Result<f64> {
    Ok(mutual_info(x, summary.beta0_sq * summary.s)? - 0.5 * (summary.beta1_sq * summary.s).ln_1p())
}

pub fn ie_simple(channel: &ChannelResponse, x: &InputDistribution, rho: f64) -> Result<f64> {
    let cf = closed_form_from_spectral(&spectral_summary(channel, rho)?)?;
    ie_simple_from(&cf, x)
}

/// `I_x(β₀²S) − I_x(β₁²S)`; conjectured, not proven, to bound `I_MMSE`.
pub fn ie_conj_from(summary: &DfeSummary, x: &InputDistribution) -> Result<f64> {
    Ok(mutual_info(x, summary.beta0_sq * summary.s)? - mutual_info(x, summary.beta1_sq * summary.s)?)
}

pub fn ie_conj(channel: &ChannelResponse, x: &InputDistribution, rho: f64) -> Result<f64> {
    let cf = closed_form_from_spectral(&spectral_summary(channel, rho)?)?;
    ie_conj_from(&cf, x)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IeOpt {
    pub value: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    /// Set when a root bracket failed and a grid search was used instead.
    pub grid_fallback: bool,
}

/// Root of a function positive near 0 and nonpositive at `hi`, by bisection
/// to 1e−10 relative.
fn bisect<F: Fn(f64) -> Result<f64>>(f: F, hi: f64) -> Result<f64> {
    let mut lo = hi * 1e-12;
    let mut hi = hi;
    if f(lo)? <= 0.0 {
        return Err(Error::RootBracketFailure(format!("no sign change on ({lo}, {hi}]")));
    }
    while hi - lo > 1e-10 * hi {
        let mid = 0.5 * (lo + hi);
        if f(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

fn log_grid(s: f64, n: usize) -> Vec<f64> {
    let lo = s * 1e-6;
    (0..n).map(|i| lo * (s / lo).powf(i as f64 / (n - 1) as f64)).collect()
}

/// Maximizer of `I_IE(γ₁, γ₂)` over `0 ≤ γ₁ ≤ γ₂ ≤ S`.
///
/// The objective separates as `F(γ₁) + G(γ₂)`. Each part is maximized at
/// its stationary point (or at `S`); if the unconstrained maximizers are out
/// of order, the maximum lies on the diagonal `γ₁ = γ₂`.
pub fn ie_opt_from(summary: &DfeSummary, x: &InputDistribution) -> Result<IeOpt> {
    let (b0, b1, s) = (summary.beta0_sq, summary.beta1_sq, summary.s);
    let f_part = |g: f64| -> Result<f64> { Ok(mutual_info(x, b0 * g)? - mutual_info(x, g)?) };
    let g_part = |g: f64| -> Result<f64> { Ok(mutual_info(x, g)? - 0.5 * (b1 * g).ln_1p()) };
    let mut fallback = false;

    let g1 = if b0 * mmse(x, b0 * s)? >= mmse(x, s)? {
        s
    } else {
        match bisect(|g| Ok(b0 * mmse(x, b0 * g)? - mmse(x, g)?), s) {
            Ok(g) => g,
            Err(Error::RootBracketFailure(_)) => {
                fallback = true;
                argmax_on_grid(&f_part, s)?
            }
            Err(e) => return Err(e),
        }
    };
    let g2 = if mmse(x, s)? >= b1 / (1.0 + b1 * s) {
        s
    } else {
        match bisect(|g| Ok(mmse(x, g)? - b1 / (1.0 + b1 * g)), s) {
            Ok(g) => g,
            Err(Error::RootBracketFailure(_)) => {
                fallback = true;
                argmax_on_grid(&g_part, s)?
            }
            Err(e) => return Err(e),
        }
    };
    let (g1, g2) = if g1 <= g2 {
        (g1, g2)
    } else {
        let t = argmax_on_grid(&|g| Ok(f_part(g)? + g_part(g)?), s)?;
        (t, t)
    };
    let value = f_part(g1)? + g_part(g2)?;
    let simple = f_part(s)? + g_part(s)?;
    if simple >= value {
        return Ok(IeOpt {
            value: simple,
            gamma1: s,
            gamma2: s,
            grid_fallback: fallback,
        });
    }
    Ok(IeOpt {
        value,
        gamma1: g1,
        gamma2: g2,
        grid_fallback: fallback,
    })
}

fn argmax_on_grid(f: &dyn Fn(f64) -> Result<f64>, s: f64) -> Result<f64> {
    let grid = log_grid(s, 512);
    let mut best = (s, f(s)?);
    for &g in &grid {
        let v = f(g)?;
        if v > best.1 {
            best = (g, v);
        }
    }
    Ok(best.0)
}

pub fn ie_opt(channel: &ChannelResponse, x: &InputDistribution, rho: f64) -> Result<IeOpt> {
    let cf = closed_form_from_spectral(&spectral_summary(channel, rho)?)?;
    ie_opt_from(&cf, x)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImmseMethod {
    Exact,
    Mc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImmseValue {
    pub value: f64,
    pub method: ImmseMethod,
    /// Error bound for `exact`, standard error for `mc`.
    pub error: f64,
    pub components: Option<usize>,
}

#[derive(Debug, Clone, Copy)]
pub struct BoundOptions {
    pub half_len: Option<usize>,
    pub budget: u128,
    pub mc_samples: u64,
    pub seed: u64,
}

impl Default for BoundOptions {
    fn default() -> Self {
        Self {
            half_len: None,
            budget: DEFAULT_BUDGET,
            mc_samples: 100_000,
            seed: 1,
        }
    }
}

/// Everything computed at one SNR, in nats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub rho: f64,
    pub i_sow: f64,
    pub i_sl: f64,
    pub ie_simple: f64,
    pub ie_opt: IeOpt,
    /// Conjectured bound; reported for comparison only.
    pub ie_conj: f64,
    pub i_mmse: ImmseValue,
    pub gap_series: f64,
    /// `½⟨ln(1+ρ|H|²)⟩`, the i.i.d. Gaussian-input rate of the real channel.
    pub gaussian_rate: f64,
    pub entropy: f64,
}

/// `I_MMSE` by exact mixtures when within budget, otherwise Monte-Carlo.
pub fn i_mmse_auto(design: &DfeDesign, x: &InputDistribution, opts: &BoundOptions) -> Result<ImmseValue> {
    match i_mmse_exact_with(design, x, opts.budget, PRUNE_MASS) {
        Ok(e) => Ok(ImmseValue {
            value: e.value,
            method: ImmseMethod::Exact,
            error: e.error,
            components: Some(e.components),
        }),
        Err(Error::BudgetExceeded { .. }) => {
            let r = i_mmse_mc(design, x, opts.mc_samples, opts.seed)?;
            Ok(ImmseValue {
                value: r.value,
                method: ImmseMethod::Mc,
                error: r.std_error,
                components: None,
            })
        }
        Err(e) => Err(e),
    }
}

pub fn bound_report(channel: &ChannelResponse, x: &InputDistribution, rho: f64, opts: &BoundOptions) -> Result<BoundReport> {
    let sp = spectral_summary(channel, rho)?;
    let cf = closed_form_from_spectral(&sp)?;
    let h = x.entropy();
    let clamp = |v: f64| v.clamp(0.0, h);
    let design = design_mmse_dfe(channel, x, rho, opts.half_len.unwrap_or_else(|| default_half_len(channel)))?;
    let summary = summarize(&design, x);
    let mut ie_opt = ie_opt_from(&cf, x)?;
    ie_opt.value = clamp(ie_opt.value);
    Ok(BoundReport {
        rho,
        i_sow: clamp(mutual_info(x, sp.snr_zf_dfe)?),
        i_sl: clamp(mutual_info(x, sp.snr_dfe_excess)?),
        ie_simple: clamp(ie_simple_from(&cf, x)?),
        ie_opt,
        ie_conj: clamp(ie_conj_from(&cf, x)?),
        i_mmse: i_mmse_auto(&design, x, opts)?,
        gap_series: slc_gap_series(&summary, x)?,
        gaussian_rate: 0.5 * sp.gaussian_rate,
        entropy: h,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equalizer::design_default;
    use crate::quad::{integrate, uniform_breakpoints, Tolerance};
    use proptest::prelude::*;

    fn bpsk() -> InputDistribution {
        InputDistribution::bpsk()
    }

    // Brute-force mmse of X = Σ a_k x_k by direct posterior-mean quadrature.
    fn brute_mmse(x: &InputDistribution, coeffs: &[f64], gamma: f64) -> f64 {
        let xn = x.normalized();
        let mut pts = vec![(0.0, 1.0)];
        for &a in coeffs {
            pts = pts
                .iter()
                .flat_map(|&(v, w)| xn.atoms().iter().zip(xn.probs()).map(move |(x, p)| (v + a * x, w * p)))
                .collect();
        }
        let r = gamma.sqrt();
        let f = |y: f64| {
            let (mut z, mut m1, mut m2) = (0.0, 0.0, 0.0);
            for &(v, w) in &pts {
                let e = w * (-0.5 * (y - r * v).powi(2)).exp();
                z += e;
                m1 += e * v;
                m2 += e * v * v;
            }
            if z == 0.0 {
                return 0.0;
            }
            (m2 - m1 * m1 / z) / (2.0 * PI).sqrt()
        };
        let span = pts.iter().fold(0.0f64, |m, p| m.max(p.0.abs())) * r + 12.0;
        integrate(f, &uniform_breakpoints(-span, span, 0.5), Tolerance::default()).unwrap().value
    }

    #[test]
    fn flat_channel_collapses() {
        let h = ChannelResponse::new(vec![1.0]).unwrap();
        let x = InputDistribution::trinary(0.1).unwrap();
        let rho = 0.8;
        let ix = mutual_info(&x, rho).unwrap();
        assert!((i_sow(&h, &x, rho).unwrap() - ix).abs() < 1e-10);
        assert!((i_sl(&h, &x, rho).unwrap() - ix).abs() < 1e-10);
        let d = design_default(&h, &x, rho).unwrap();
        let e = i_mmse_exact(&d, &x).unwrap();
        assert!((e.value - ix).abs() < 1e-10);
        assert!(e.gap_to_sl.abs() < 1e-12);
        let mc = i_mmse_mc(&d, &x, 20_000, 3).unwrap();
        assert!((mc.value - ix).abs() < 3.0 * mc.std_error + 1e-9);
    }

    #[test]
    fn sow_below_sl_on_channel_b() {
        let h = ChannelResponse::channel_b();
        assert!(i_sow(&h, &bpsk(), 10.0).unwrap() < i_sl(&h, &bpsk(), 10.0).unwrap());
        let null = ChannelResponse::new(vec![0.5f64.sqrt(), 0.5f64.sqrt()]).unwrap();
        assert!(i_sow(&null, &bpsk(), 10.0).unwrap().is_finite());
    }

    #[test]
    fn exact_matches_mc_on_two_tap() {
        let h = ChannelResponse::two_tap(0.6).unwrap();
        let d = design_default(&h, &bpsk(), 0.5).unwrap();
        let e = i_mmse_exact(&d, &bpsk()).unwrap();
        let mc = i_mmse_mc(&d, &bpsk(), 200_000, 11).unwrap();
        assert!((e.value - mc.value).abs() < 3.0 * mc.std_error, "{} vs {} ± {}", e.value, mc.value, mc.std_error);
        let direct = e.value - mutual_info(&bpsk(), e.snr_unbiased).unwrap();
        assert!((direct - e.gap_to_sl).abs() < 1e-10);
    }

    #[test]
    fn mc_is_reproducible_and_seed_dependent() {
        let h = ChannelResponse::channel_b();
        let d = design_default(&h, &bpsk(), 1.0).unwrap();
        let a = i_mmse_mc(&d, &bpsk(), 30_000, 5).unwrap();
        let b = i_mmse_mc(&d, &bpsk(), 30_000, 5).unwrap();
        let c = i_mmse_mc(&d, &bpsk(), 30_000, 6).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.value, c.value);
        assert!(i_mmse_mc(&d, &bpsk(), 100, 5).is_err());
    }

    #[test]
    fn mc_standard_error_scales_with_sample_count() {
        let h = ChannelResponse::channel_b();
        let d = design_default(&h, &bpsk(), 1.0).unwrap();
        let a = i_mmse_mc(&d, &bpsk(), 50_000, 9).unwrap();
        let b = i_mmse_mc(&d, &bpsk(), 200_000, 9).unwrap();
        let ratio = a.std_error / b.std_error;
        assert!((ratio / 2.0 - 1.0).abs() < 0.2, "ratio {ratio}");
    }

    #[test]
    fn interference_density_matches_direct_mixture() {
        let taps = [0.7, -0.3];
        let atoms = [-1.0, 1.0];
        let probs = [0.5, 0.5];
        let dens = InterferenceDensity::new(&taps, &atoms, &probs, 4.0);
        for &u in &[-3.0, -0.4, 0.0, 1.1, 5.0] {
            let mut direct = 0.0;
            for a in atoms {
                for b in atoms {
                    let m = 0.7 * a - 0.3 * b;
                    direct += 0.25 * (-0.5 * (u - m) * (u - m)).exp() / (2.0 * PI).sqrt();
                }
            }
            assert!((dens.eval(u) - direct).abs() < 1e-14);
        }
    }

    #[test]
    fn pruned_enumeration_accounts_for_mass() {
        let atoms = [-1.0, 0.0, 1.0];
        let probs = [0.01, 0.98, 0.01];
        let taps = [0.5; 8];
        let full = enumerate_patterns(&taps, &atoms, &probs, 1 << 20, 1e-12).unwrap();
        assert_eq!(full.comps.len(), 6561);
        let pruned = enumerate_patterns(&taps, &atoms, &probs, 6000, 1e-9).unwrap();
        let kept: f64 = pruned.comps.iter().map(|c| c.1).sum();
        assert!(pruned.comps.len() < 6000 && pruned.pruned_mass > 0.0 && pruned.pruned_mass <= 1e-9);
        assert!((kept + pruned.pruned_mass - 1.0).abs() < 1e-12);
        assert!(matches!(
            enumerate_patterns(&taps, &atoms, &probs, 10, 1e-12),
            Err(Error::BudgetExceeded { .. })
        ));
    }

    #[test]
    fn gap_series_special_cases() {
        let sum = DfeSummary {
            beta0_sq: 1.2,
            beta1_sq: 0.2,
            gamma1_cu: Some(0.05),
            delta1_4: Some(0.02),
            eps0: 0.01,
            eps1: 0.002,
            s: 0.01 / 1.2,
        };
        let t = InputDistribution::trinary(0.01).unwrap();
        let want = -0.02 * 47.0f64.powi(2) / (24.0 * 1.2f64.powi(4)) * 1e-8;
        assert!((slc_gap_series(&sum, &t).unwrap() - want).abs() < 1e-12 * want.abs());
        let g = InputDistribution::trinary(1.0 / 6.0).unwrap();
        assert!(slc_gap_series(&sum, &g).unwrap().abs() < 1e-20);
        let closed = DfeSummary {
            gamma1_cu: None,
            ..sum
        };
        assert_eq!(slc_gap_series(&closed, &t), Err(Error::MissingMoments));
    }

    #[test]
    fn two_tap_leading_coefficient() {
        let x = InputDistribution::skewed_binary(0.002).unwrap();
        let c = two_tap_gap_leading(0.6, &x).unwrap();
        let want = -(0.216 * 0.512) * x.skewness().powi(2) / 6.0;
        assert!((c - want).abs() < 1e-12 * want.abs());
        assert_eq!(two_tap_gap_leading(0.6, &bpsk()).unwrap(), 0.0);
        assert!(two_tap_gap_leading(1.0, &x).is_err());
    }

    #[test]
    fn genie_single_tap_and_singleton() {
        let x = InputDistribution::trinary(0.2).unwrap();
        let m = mmse(&x, 2.0).unwrap();
        let one = genie_mmse_lower(&x, &[1.0], 2.0, &[vec![0]], &[1.0]).unwrap();
        assert!((one - m).abs() < 1e-10);
        let a = [0.6, 0.48, 0.64];
        let (p, s) = genie_preset(&a, &[vec![0, 1, 2]], GeniePreset::Singleton).unwrap();
        let v = genie_mmse_lower(&x, &a, 2.0, &p, &s).unwrap();
        assert!((v - m).abs() < 1e-10);
    }

    #[test]
    fn genie_rejects_bad_inputs() {
        let x = bpsk();
        let a = [0.6, 0.8];
        assert!(matches!(
            genie_mmse_lower(&x, &[0.6, 0.6], 1.0, &[vec![0, 1]], &[1.0]),
            Err(Error::NormalizationViolated(_))
        ));
        assert!(matches!(genie_mmse_lower(&x, &a, 1.0, &[vec![0]], &[1.0]), Err(Error::PartitionInvalid(_))));
        assert!(matches!(
            genie_mmse_lower(&x, &a, 1.0, &[vec![0], vec![1]], &[2.0, 2.0]),
            Err(Error::NormalizationViolated(_))
        ));
    }

    #[test]
    fn genie_presets_bound_brute_force() {
        let x = InputDistribution::trinary(0.15).unwrap();
        let a = [0.5, -0.5, 0.7f64.sqrt() * 0.5f64.sqrt(), 0.3f64.sqrt() * 0.5f64.sqrt()];
        let e: f64 = a.iter().map(|v| v * v).sum();
        let a: Vec<f64> = a.iter().map(|v| v / e.sqrt()).collect();
        let part = vec![vec![0, 2], vec![1], vec![3]];
        for &g in &[0.3, 2.0, 8.0] {
            let brute = brute_mmse(&x, &a, g);
            for preset in [GeniePreset::EqualSigma, GeniePreset::Singleton, GeniePreset::OneCluster { block: 0 }] {
                let (p, s) = genie_preset(&a, &part, preset).unwrap();
                let v = genie_mmse_lower(&x, &a, g, &p, &s).unwrap();
                assert!(v <= brute + 1e-8, "{preset:?} γ={g}: {v} > {brute}");
            }
        }
    }

    #[test]
    fn ie_simple_is_the_diagonal_endpoint() {
        let h = ChannelResponse::channel_b();
        let cf = closed_form_from_spectral(&spectral_summary(&h, 1.0).unwrap()).unwrap();
        let a = ie_bound_from(&cf, &bpsk(), cf.s, cf.s).unwrap();
        assert!((a - ie_simple_from(&cf, &bpsk()).unwrap()).abs() < 1e-14);
        assert!(ie_bound_from(&cf, &bpsk(), 0.5 * cf.s, 0.1 * cf.s).is_err());
    }

    #[test]
    fn ie_gaussian_equality() {
        // with the Gaussian information function the simple bound is exact
        let h = ChannelResponse::jeong();
        for &rho in &[0.05, 1.0, 20.0] {
            let sp = spectral_summary(&h, rho).unwrap();
            let cf = closed_form_from_spectral(&sp).unwrap();
            let v = 0.5 * (cf.beta0_sq * cf.s).ln_1p() - 0.5 * (cf.beta1_sq * cf.s).ln_1p();
            assert!((v - 0.5 * sp.gaussian_rate).abs() < 1e-9);
        }
    }

    #[test]
    fn ie_opt_dominates_simple_and_feasible_pairs() {
        let h = ChannelResponse::jeong();
        for &rho in &[0.3, 3.0, 15.0] {
            let cf = closed_form_from_spectral(&spectral_summary(&h, rho).unwrap()).unwrap();
            let opt = ie_opt_from(&cf, &bpsk()).unwrap();
            let simple = ie_simple_from(&cf, &bpsk()).unwrap();
            assert!(opt.value >= simple - 1e-12);
            assert!(opt.gamma1 <= opt.gamma2 && opt.gamma2 <= cf.s * (1.0 + 1e-12));
            for i in 0..6 {
                for j in i..6 {
                    let (g1, g2) = (cf.s * i as f64 / 5.0, cf.s * j as f64 / 5.0);
                    assert!(opt.value >= ie_bound_from(&cf, &bpsk(), g1, g2).unwrap() - 1e-10);
                }
            }
        }
    }

    #[test]
    fn report_on_channel_b_is_ordered() {
        let h = ChannelResponse::channel_b();
        let r = bound_report(&h, &bpsk(), 2.0, &BoundOptions::default()).unwrap();
        assert_eq!(r.i_mmse.method, ImmseMethod::Exact);
        assert!(r.ie_simple <= r.ie_opt.value + 1e-12);
        assert!(r.ie_opt.value <= r.i_mmse.value + 1e-9);
        assert!(r.i_sow <= r.i_mmse.value + 1e-9);
        for v in [r.i_sow, r.i_sl, r.ie_simple, r.ie_conj, r.i_mmse.value] {
            assert!(v >= 0.0 && v <= r.entropy.min(r.gaussian_rate) + 1e-6);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]

        #[test]
        fn ie_opt_beats_random_pairs(u in 0.0f64..1.0, v in 0.0f64..1.0, rho in 0.05f64..20.0) {
            let h = ChannelResponse::channel_b();
            let cf = closed_form_from_spectral(&spectral_summary(&h, rho).unwrap()).unwrap();
            let x = InputDistribution::trinary(0.2).unwrap();
            let opt = ie_opt_from(&cf, &x).unwrap();
            let (g1, g2) = (cf.s * u.min(v), cf.s * u.max(v));
            prop_assert!(opt.value >= ie_bound_from(&cf, &x, g1, g2).unwrap() - 1e-10);
        }
    }
}
