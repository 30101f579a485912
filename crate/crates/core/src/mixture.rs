//! Finite Gaussian mixtures `Σ w_j N(μ_j, 1)` and the information measures of
//! `Y = M + N`, with `M` the discrete variable taking value `μ_j` w.p. `w_j`.
//!
//! Mutual information is split as `I(M;Y) = ½ln(1+Var M) − D`, where `D` is
//! the divergence of the output density from the moment-matched Gaussian.
//! `D` is integrated from a nonnegative integrand, so it keeps full relative
//! accuracy when it is many orders of magnitude below `I`.

use crate::error::{Error, Result};
use crate::quad::{integrate, integrate_log, uniform_breakpoints, QuadResult, Tolerance};
use crate::special::{rlogr_excess, LogSum, HALF_LN_2PI};
use rayon::prelude::*;

const PAR_CHUNK: usize = 4096;
const TAIL: f64 = 12.0;

#[derive(Debug, Clone)]
pub struct GaussianMixture {
    means: Vec<f64>,
    ln_weights: Vec<f64>,
    weights: Vec<f64>,
    weight_sum: f64,
    spread: f64,
    mean: f64,
    variance: f64,
}

impl GaussianMixture {
    /// Components `(mean, weight)`; weights are renormalized to sum to one.
    pub fn new(components: Vec<(f64, f64)>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidDistribution("empty mixture".into()));
        }
        let mut components = components;
        if components.iter().any(|&(m, w)| !m.is_finite() || !(w > 0.0) || !w.is_finite()) {
            return Err(Error::InvalidDistribution("mixture needs finite means and positive weights".into()));
        }
        components.sort_by(|a, b| a.0.total_cmp(&b.0));
        let total: f64 = components.iter().map(|c| c.1).sum();
        let mean = components.iter().map(|&(m, w)| m * w).sum::<f64>() / total;
        let variance = components
            .iter()
            .map(|&(m, w)| w * (m - mean) * (m - mean))
            .sum::<f64>()
            / total;
        let ln_total = total.ln();
        let weights: Vec<f64> = components.iter().map(|c| c.1 / total).collect();
        let spread = components.iter().fold(0.0f64, |m, c| m.max((c.0 - mean).abs()));
        Ok(Self {
            means: components.iter().map(|c| c.0).collect(),
            ln_weights: components.iter().map(|c| c.1.ln() - ln_total).collect(),
            weight_sum: weights.iter().sum(),
            weights,
            spread,
            mean,
            variance,
        })
    }

    pub fn len(&self) -> usize {
        self.means.len()
    }

    pub fn is_empty(&self) -> bool {
        self.means.is_empty()
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    /// `ln Σ_j w_j exp(z c_j − c_j²/2)` with `z = y − mean`, `c_j = μ_j − mean`.
    fn shifted_log_sum(&self, z: f64) -> f64 {
        let term = |(&mu, &lw): (&f64, &f64)| {
            let c = mu - self.mean;
            lw + z * c - 0.5 * c * c
        };
        if z.abs() * self.spread + 0.5 * self.spread * self.spread <= 0.5 {
            return self.small_log_sum(z);
        }
        if self.means.len() <= PAR_CHUNK {
            let mut acc = LogSum::new();
            for t in self.means.iter().zip(&self.ln_weights).map(term) {
                acc.add(t);
            }
            return acc.value();
        }
        // fixed chunking keeps the summation order independent of the pool size
        let partial: Vec<LogSum> = self
            .means
            .par_chunks(PAR_CHUNK)
            .zip(self.ln_weights.par_chunks(PAR_CHUNK))
            .map(|(m, w)| {
                let mut acc = LogSum::new();
                for t in m.iter().zip(w).map(term) {
                    acc.add(t);
                }
                acc
            })
            .collect();
        let mut acc = LogSum::new();
        for p in partial {
            acc.merge(p);
        }
        acc.value()
    }

    // Same sum as ln(1 + Σ w_j expm1(t_j) / Σ w_j) when every exponent is
    // small, which keeps relative accuracy in the result itself.
    fn small_log_sum(&self, z: f64) -> f64 {
        let term = |(&mu, &w): (&f64, &f64)| {
            let c = mu - self.mean;
            w * (z * c - 0.5 * c * c).exp_m1()
        };
        let s: f64 = if self.means.len() <= PAR_CHUNK {
            self.means.iter().zip(&self.weights).map(term).sum()
        } else {
            let partial: Vec<f64> = self
                .means
                .par_chunks(PAR_CHUNK)
                .zip(self.weights.par_chunks(PAR_CHUNK))
                .map(|(m, w)| m.iter().zip(w).map(term).sum())
                .collect();
            partial.iter().sum()
        };
        (s / self.weight_sum).ln_1p()
    }

    /// Log density of `Y`.
    pub fn ln_density(&self, y: f64) -> f64 {
        let z = y - self.mean;
        self.shifted_log_sum(z) - 0.5 * z * z - HALF_LN_2PI
    }

    pub(crate) fn breakpoints(&self, extra: &[f64]) -> Vec<f64> {
        let sd = (1.0 + self.variance).sqrt();
        let lo = (self.means[0] - TAIL).min(self.mean - TAIL * sd);
        let hi = (self.means[self.means.len() - 1] + TAIL).max(self.mean + TAIL * sd);
        let step = ((hi - lo) / 2000.0).max(1.0);
        let mut bp = uniform_breakpoints(lo, hi, step);
        bp.extend(extra.iter().copied().filter(|&y| y > lo && y < hi));
        bp.sort_by(f64::total_cmp);
        bp.dedup();
        bp
    }

    /// `D = ∫ g (r ln r − r + 1)`, `r = f/g`, with `g` the Gaussian of the
    /// same mean and variance as `Y`.
    pub fn negentropy(&self, rel_tol: f64) -> Result<QuadResult> {
        if self.variance == 0.0 {
            return Ok(QuadResult {
                value: 0.0,
                error: 0.0,
                evals: 0,
            });
        }
        let v = self.variance;
        let s2 = 1.0 + v;
        let half_ln_s2 = 0.5 * v.ln_1p();
        let integrand = |y: f64| {
            let z = y - self.mean;
            let u = self.shifted_log_sum(z) - 0.5 * z * z * v / s2 + half_ln_s2;
            let ln_g = -0.5 * z * z / s2 - half_ln_s2 - HALF_LN_2PI;
            if u < 1.0 {
                ln_g.exp() * rlogr_excess(u)
            } else {
                ln_g.exp() + (u - 1.0) * (ln_g + u).exp()
            }
        };
        let tol = Tolerance {
            abs: 1e-25,
            rel: rel_tol,
            max_intervals: 50_000,
        };
        integrate(integrand, &self.breakpoints(&[]), tol)
    }

    /// `I(M; M+N)` in nats with its quadrature error.
    pub fn mutual_info(&self, rel_tol: f64) -> Result<(f64, f64)> {
        let d = self.negentropy(rel_tol)?;
        Ok((0.5 * self.variance.ln_1p() - d.value, d.error))
    }

    /// Per-component log posteriors at `y`, written into `out`; returns the
    /// index of the largest one and `ln T`, `T = Σ_{k≠max} e^{ℓ_k − ℓ_max}`.
    fn log_posteriors(&self, y: f64, out: &mut [f64]) -> (usize, f64) {
        let mut best = 0;
        for (j, (mu, lw)) in self.means.iter().zip(&self.ln_weights).enumerate() {
            out[j] = lw - 0.5 * (y - mu) * (y - mu);
            if out[j] > out[best] {
                best = j;
            }
        }
        let top = out[best];
        let mut rest = LogSum::new();
        for (j, l) in out.iter().enumerate() {
            if j != best {
                rest.add(l - top);
            }
        }
        let ln_t = rest.value();
        let norm = if ln_t == f64::NEG_INFINITY { 0.0 } else { ln_t.exp().ln_1p() };
        for l in out.iter_mut() {
            *l -= top + norm;
        }
        (best, ln_t)
    }

    /// Breakpoints at every mean and every crossing of adjacent weighted
    /// component densities, where posterior quantities change fastest.
    fn posterior_breakpoints(&self) -> Vec<f64> {
        let mut extra = self.means.clone();
        for j in 1..self.means.len() {
            let (m1, m2) = (self.means[j - 1], self.means[j]);
            if m2 > m1 {
                let cross = 0.5 * (m1 + m2) + (self.ln_weights[j - 1] - self.ln_weights[j]) / (m2 - m1);
                extra.push(cross);
            }
        }
        let mut bp = self.breakpoints(&extra);
        // resolve posterior transitions, whose width is 1/(gap between means)
        let gap = self.means.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
        if gap > 8.0 {
            let fine = 8.0 / gap;
            let mut refined = Vec::with_capacity(bp.len());
            for w in bp.windows(2) {
                let n = ((w[1] - w[0]) / fine).ceil().max(1.0) as usize;
                for i in 0..n {
                    refined.push(w[0] + (w[1] - w[0]) * i as f64 / n as f64);
                }
            }
            refined.push(*bp.last().unwrap());
            bp = refined;
        }
        bp
    }

    /// `ln E[H(J | Y)]`, the log equivocation of the component label.
    pub fn ln_equivocation(&self, rel_tol: f64) -> Result<f64> {
        if self.len() == 1 {
            return Ok(f64::NEG_INFINITY);
        }
        let k = self.len();
        let integrand = |y: f64| {
            let mut lp = vec![0.0; k];
            let (best, ln_t) = self.log_posteriors(y, &mut lp);
            let mut acc = LogSum::new();
            for (j, &l) in lp.iter().enumerate() {
                if j == best {
                    // −π ln π = π ln(1+T)
                    let t = ln_t.exp();
                    let ln_ln1p = if t > 1e-5 { t.ln_1p().ln() } else { ln_t + (-0.5 * t + t * t / 3.0).ln_1p() };
                    acc.add(l + ln_ln1p);
                } else {
                    acc.add(l + (-l).ln());
                }
            }
            self.ln_density(y) + acc.value()
        };
        let (v, _) = integrate_log(integrand, &self.posterior_breakpoints(), rel_tol)?;
        Ok(v)
    }

    /// `ln E[Var(v_J | Y)]` for per-component values `v`.
    pub fn ln_mmse_of(&self, values: &[f64], rel_tol: f64) -> Result<f64> {
        assert_eq!(values.len(), self.len());
        let k = self.len();
        let integrand = |y: f64| {
            let mut lp = vec![0.0; k];
            self.log_posteriors(y, &mut lp);
            let mut acc = LogSum::new();
            for i in 0..k {
                for j in i + 1..k {
                    let d = (values[i] - values[j]).abs();
                    if d > 0.0 {
                        acc.add(lp[i] + lp[j] + 2.0 * d.ln());
                    }
                }
            }
            self.ln_density(y) + acc.value()
        };
        let (v, _) = integrate_log(integrand, &self.posterior_breakpoints(), rel_tol)?;
        Ok(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_component_carries_no_information() {
        let m = GaussianMixture::new(vec![(0.3, 1.0)]).unwrap();
        let (i, _) = m.mutual_info(1e-12).unwrap();
        assert_eq!(i, 0.0);
        assert_eq!(m.ln_equivocation(1e-12).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn density_integrates_to_one() {
        let m = GaussianMixture::new(vec![(-3.0, 0.2), (0.5, 0.5), (4.0, 0.3)]).unwrap();
        let bp = m.breakpoints(&[]);
        let r = integrate(|y| m.ln_density(y).exp(), &bp, Tolerance::default()).unwrap();
        assert!((r.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn entropy_and_equivocation_agree() {
        // I = H(J) − E[H(J|Y)] = ½ln(1+Var) − D
        let m = GaussianMixture::new(vec![(-1.5, 0.25), (0.0, 0.5), (1.5, 0.25)]).unwrap();
        let h = -(0.25f64.ln() * 0.5 + 0.5f64.ln() * 0.5);
        let via_e = h - m.ln_equivocation(1e-12).unwrap().exp();
        let (via_d, _) = m.mutual_info(1e-12).unwrap();
        assert!((via_e - via_d).abs() < 1e-11, "{via_e} vs {via_d}");
    }

    #[test]
    fn large_mixture_uses_chunked_sum_consistently() {
        let comps: Vec<(f64, f64)> = (0..10_000).map(|i| ((i as f64) * 1e-4 - 0.5, 1.0 + (i % 7) as f64)).collect();
        let m = GaussianMixture::new(comps.clone()).unwrap();
        let direct = {
            let mut acc = LogSum::new();
            for &(mu, w) in &comps {
                acc.add(w.ln() - 0.5 * (0.7 - mu) * (0.7 - mu));
            }
            let total: f64 = comps.iter().map(|c| c.1).sum();
            acc.value() - total.ln() - HALF_LN_2PI
        };
        assert!((m.ln_density(0.7) - direct).abs() < 1e-12);
    }
}
