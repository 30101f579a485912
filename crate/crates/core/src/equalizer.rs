//! Unbiased MMSE decision-feedback equalizer with perfect feedback.
//!
//! The feedforward filter sees `y_0 .. y_M` when detecting `x_0`; earlier
//! outputs carry only already-decided symbols and independent noise, so
//! their optimal weights are zero and the design solves for lags `0..=M`.
//! The unbiased output is `x_0 + Σ_{k≥1} α_k x_k + m̂`.

use crate::channel::{spectral_summary, ChannelResponse, SpectralSummary};
use crate::error::{Error, Result};
use crate::scalar::InputDistribution;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Relative tail energy below which residual taps are dropped.
pub const TRUNCATION_TAIL: f64 = 1e-10;
/// Required relative agreement of the unbiased SNR with `SNR_DFE − 1`.
pub const SNR_GAP_TOL: f64 = 1e-6;
/// Agreement at which doubling stops early. The tap sums converge more
/// slowly than the SNR, so stopping at [`SNR_GAP_TOL`] leaves them loose.
const SNR_GAP_TARGET: f64 = 1e-10;
pub const MAX_HALF_LEN: usize = 2048;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DfeDesign {
    /// Taps for lags `−M..=M`; negative lags are zero.
    pub feedforward: Vec<f64>,
    /// `α_1 .. α_N` after truncation.
    pub residual: Vec<f64>,
    /// `α_1 ..` over the whole feedforward span, before truncation.
    pub untruncated: Vec<f64>,
    /// `E m̂²`.
    pub noise_var: f64,
    /// `h⁽⁰⁾ᵀ R⁻¹ h⁽⁰⁾`, the lag-0 gain of the unnormalized Wiener solution.
    pub scale: f64,
    pub rho: f64,
    /// `P_x`.
    pub power: f64,
    pub half_len: usize,
    /// `P_x / (β₁² P_x + E m̂²)` of the untruncated design.
    pub snr_unbiased: f64,
}

impl DfeDesign {
    /// `P_x / E m̂²`.
    pub fn s(&self) -> f64 {
        self.power / self.noise_var
    }

    /// Unbiased SNR recomputed from the truncated residual.
    pub fn snr_unbiased_truncated(&self) -> f64 {
        let b1: f64 = self.residual.iter().map(|a| a * a).sum();
        let s = self.s();
        s / (1.0 + b1 * s)
    }
}

/// Tap sums of the residual and the resulting SNR scalars.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DfeSummary {
    pub beta0_sq: f64,
    pub beta1_sq: f64,
    /// `Σ α_k³`; absent for closed-form summaries.
    pub gamma1_cu: Option<f64>,
    /// `Σ α_k⁴`; absent for closed-form summaries.
    pub delta1_4: Option<f64>,
    pub eps0: f64,
    pub eps1: f64,
    pub s: f64,
}

fn solve(channel: &ChannelResponse, power: f64, n0: f64, m: usize) -> Result<(DVector<f64>, f64)> {
    let h = channel.taps();
    let l = h.len();
    let n = m + 1;
    let tap = |i: isize| if i >= 0 && (i as usize) < l { h[i as usize] } else { 0.0 };
    // R_ij = P_x Σ_{k≥1} h_{i−k} h_{j−k} + N₀ δ_ij over window lags 0..=M
    let r = channel.autocorrelation();
    let mut mat = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let d = j - i;
            let mut v = if d < l { r[d] } else { 0.0 };
            if i < l {
                // remove the k ≤ 0 part, Σ_{t≥0} h_{i+t} h_{j+t}
                v -= (0..l).map(|t| tap((i + t) as isize) * tap((j + t) as isize)).sum::<f64>();
            }
            v *= power;
            if i == j {
                v += n0;
            }
            mat[(i, j)] = v;
            mat[(j, i)] = v;
        }
    }
    let h0 = DVector::from_fn(n, |j, _| tap(j as isize));
    let chol = mat.cholesky().ok_or(Error::SingularSystem)?;
    let a = chol.solve(&h0);
    let c = h0.dot(&a);
    if !(c > 0.0) || !c.is_finite() {
        return Err(Error::SingularSystem);
    }
    Ok((a, c))
}

/// Index `N` such that the energy of `α_{N+1}, ...` is below the tolerance.
fn truncation_len(alpha: &[f64]) -> usize {
    let total: f64 = alpha.iter().map(|a| a * a).sum();
    if total == 0.0 {
        return 0;
    }
    let mut tail = 0.0;
    for n in (0..alpha.len()).rev() {
        tail += alpha[n] * alpha[n];
        if tail >= TRUNCATION_TAIL * total {
            return n + 1;
        }
    }
    0
}

fn design_at(channel: &ChannelResponse, power: f64, rho: f64, m: usize) -> Result<DfeDesign> {
    let n0 = power / rho;
    let (a, c) = solve(channel, power, n0, m)?;
    let h = channel.taps();
    let l = h.len();
    let n = m + 1;
    // α_k = Σ_j a_j h_{j−k} / c for k ≥ 1
    let alpha: Vec<f64> = (1..n + l - 1)
        .map(|k| {
            let s: f64 = (k..n.min(k + l)).map(|j| a[j] * h[j - k]).sum();
            s / c
        })
        .collect();
    let noise_var = n0 * a.norm_squared() / (c * c);
    let mut feedforward = vec![0.0; 2 * m + 1];
    for j in 0..n {
        feedforward[m + j] = a[j] / c;
    }
    let keep = truncation_len(&alpha);
    Ok(DfeDesign {
        feedforward,
        residual: alpha[..keep].to_vec(),
        untruncated: alpha,
        noise_var,
        scale: c,
        rho,
        power,
        half_len: m,
        snr_unbiased: power * c,
    })
}

pub fn default_half_len(channel: &ChannelResponse) -> usize {
    (8 * channel.len()).max(64)
}

/// Designs the unbiased MMSE-DFE starting from feedforward half-length `m`.
/// The length is doubled while the unbiased SNR is farther than 1e−10
/// (relative) from `SNR_DFE − 1`; at [`MAX_HALF_LEN`] a gap up to
/// [`SNR_GAP_TOL`] is accepted.
pub fn design_mmse_dfe(channel: &ChannelResponse, x: &InputDistribution, rho: f64, m: usize) -> Result<DfeDesign> {
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::DomainError(format!("rho must be positive, got {rho}")));
    }
    if m < channel.len() {
        return Err(Error::InvalidParams(format!(
            "feedforward half-length {m} below channel length {}",
            channel.len()
        )));
    }
    let target = spectral_summary(channel, rho)?.snr_dfe_excess;
    let mut m = m;
    loop {
        let d = design_at(channel, x.power(), rho, m)?;
        let gap = (d.snr_unbiased - target).abs() / target;
        if gap <= SNR_GAP_TARGET || (m >= MAX_HALF_LEN && gap <= SNR_GAP_TOL) {
            return Ok(d);
        }
        if m >= MAX_HALF_LEN {
            return Err(Error::NotConverged { gap, half_len: m });
        }
        m = (2 * m).min(MAX_HALF_LEN);
    }
}

/// Design at the default half-length.
pub fn design_default(channel: &ChannelResponse, x: &InputDistribution, rho: f64) -> Result<DfeDesign> {
    design_mmse_dfe(channel, x, rho, default_half_len(channel))
}

pub fn summarize(design: &DfeDesign, x: &InputDistribution) -> DfeSummary {
    let (mut b, mut g, mut d) = (0.0, 0.0, 0.0);
    for a in &design.residual {
        let a2 = a * a;
        b += a2;
        g += a2 * a;
        d += a2 * a2;
    }
    let s = x.power() / design.noise_var;
    DfeSummary {
        beta0_sq: 1.0 + b,
        beta1_sq: b,
        gamma1_cu: Some(g),
        delta1_4: Some(d),
        eps0: (1.0 + b) * s,
        eps1: b * s,
        s,
    }
}

/// The same scalars from the equalizer output SNRs alone.
pub fn closed_form_summary(channel: &ChannelResponse, rho: f64) -> Result<DfeSummary> {
    closed_form_from_spectral(&spectral_summary(channel, rho)?)
}

pub fn closed_form_from_spectral(sp: &SpectralSummary) -> Result<DfeSummary> {
    let (d1, l1, ratio) = (sp.snr_dfe_excess, sp.snr_le_excess, sp.ln_dfe_over_le);
    if !(l1 > 0.0) || !d1.is_finite() {
        return Err(Error::DegenerateSnr);
    }
    let (d, l) = (sp.snr_dfe, sp.snr_le);
    let beta1_sq = ratio.exp_m1() / (d1 * d1);
    let s = d1 * d1 * l / (d * l1);
    Ok(DfeSummary {
        beta0_sq: 1.0 + beta1_sq,
        beta1_sq,
        gamma1_cu: None,
        delta1_4: None,
        // L(D−1)/(L−1) − 1 rearranged as (D−1) + (D−L)/(L−1)
        eps0: d1 + l * ratio.exp_m1() / l1,
        eps1: -(-ratio).exp_m1() / l1,
        s,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bpsk() -> InputDistribution {
        InputDistribution::bpsk()
    }

    // Residual taps of the two-tap channel in closed form.
    fn two_tap_alpha(q: f64, rho: f64, i: i32) -> f64 {
        let a = (1.0 + 1.0 / rho) / (2.0 * q * (1.0 - q * q).sqrt());
        let r = a - (a * a - 1.0).sqrt();
        let den = 0.5 * (1.0 + (1.0 - 1.0 / (a * a)).sqrt()) * (1.0 + rho) - 1.0;
        let sign = if i % 2 == 1 { 1.0 } else { -1.0 };
        sign * r.powi(i) / den
    }

    #[test]
    fn identity_channel_has_no_residual() {
        let h = ChannelResponse::new(vec![1.0]).unwrap();
        let d = design_mmse_dfe(&h, &bpsk(), 2.5, 8).unwrap();
        assert!(d.residual.is_empty());
        assert!((d.noise_var - 1.0 / 2.5).abs() < 1e-14);
        assert!((d.snr_unbiased - 2.5).abs() < 1e-12);
        let s = summarize(&d, &bpsk());
        assert_eq!((s.beta1_sq, s.gamma1_cu, s.beta0_sq), (0.0, Some(0.0), 1.0));
    }

    #[test]
    fn closed_form_for_flat_channel() {
        let c = closed_form_summary(&ChannelResponse::new(vec![1.0]).unwrap(), 0.7).unwrap();
        assert!(c.beta1_sq.abs() < 1e-12);
        assert!((c.s - 0.7).abs() < 1e-12 && (c.eps0 - 0.7).abs() < 1e-12 && c.eps1.abs() < 1e-12);
    }

    #[test]
    fn two_tap_residual_matches_closed_form() {
        // hand check: q = 0.6, ρ = 1 gives α₁ ≈ 0.2914
        assert!((two_tap_alpha(0.6, 1.0, 1) - 0.2914).abs() < 1e-4);
        for &q in &[0.3, 0.6, 0.9] {
            for &rho in &[0.1, 1.0] {
                let h = ChannelResponse::two_tap(q).unwrap();
                let d = design_default(&h, &bpsk(), rho).unwrap();
                for i in 1..=10 {
                    let want = two_tap_alpha(q, rho, i);
                    let got = d.untruncated[i as usize - 1];
                    assert!((got - want).abs() < 1e-6, "q={q} ρ={rho} i={i}: {got} vs {want}");
                    if got.abs() > 1e-12 {
                        assert_eq!(got > 0.0, i % 2 == 1);
                    }
                }
            }
        }
    }

    #[test]
    fn two_tap_cubic_sum_at_low_snr() {
        let q: f64 = 0.6;
        let h = ChannelResponse::two_tap(q).unwrap();
        let d = design_default(&h, &bpsk(), 1e-5).unwrap();
        let g = summarize(&d, &bpsk()).gamma1_cu.unwrap();
        let want = q.powi(3) * (1.0 - q * q).powf(1.5);
        assert!((g - want).abs() < 1e-3 * want, "{g} vs {want}");
    }

    #[test]
    fn channel_b_matches_closed_form() {
        let h = ChannelResponse::channel_b();
        let d = design_default(&h, &bpsk(), 1.0).unwrap();
        let t = summarize(&d, &bpsk());
        let c = closed_form_summary(&h, 1.0).unwrap();
        for (a, b) in [(t.beta1_sq, c.beta1_sq), (t.eps0, c.eps0), (t.eps1, c.eps1), (t.s, c.s)] {
            assert!((a / b - 1.0).abs() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn low_snr_limits() {
        // S/ρ → ⟨|H|²⟩ while ε₀/ρ → β₀²(0)⟨|H|²⟩
        let h = ChannelResponse::channel_b();
        let rho = 1e-6;
        let c = closed_form_summary(&h, rho).unwrap();
        let e = h.energy();
        assert!((c.s / (rho * e) - 1.0).abs() < 1e-4);
        assert!((c.eps0 / (rho * e) - c.beta0_sq).abs() < 1e-4);
        assert!(c.beta1_sq > 0.1);
    }

    #[test]
    fn channel_b_truncation_lengths() {
        let h = ChannelResponse::channel_b();
        let n = |db: f64| design_default(&h, &bpsk(), 10f64.powf(db / 10.0)).unwrap().residual.len();
        assert_eq!((n(-26.0), n(10.0)), (4, 18));
    }

    #[test]
    fn truncation_rule() {
        assert_eq!(truncation_len(&[]), 0);
        assert_eq!(truncation_len(&[1.0, 1e-6, 0.0]), 1);
        assert_eq!(truncation_len(&[1.0, 1e-4, 0.0]), 2);
    }

    #[test]
    fn gaussian_equality_chain() {
        let h = ChannelResponse::channel_b();
        for &rho in &[0.1, 1.0, 10.0] {
            let c = closed_form_summary(&h, rho).unwrap();
            // real-valued channel: the Gaussian-input value is half the log of SNR_DFE
            let lhs = 0.5 * (c.beta0_sq * c.s).ln_1p() - 0.5 * (c.beta1_sq * c.s).ln_1p();
            let rate = 0.5 * spectral_summary(&h, rho).unwrap().gaussian_rate;
            assert!((lhs - rate).abs() < 1e-8, "{lhs} vs {rate}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn tap_domain_agrees_with_closed_form(
            taps in prop::collection::vec(-1.0f64..1.0, 2..=6),
            rho_idx in 0usize..3,
        ) {
            prop_assume!(taps.iter().map(|t| t * t).sum::<f64>() > 0.05);
            let h = ChannelResponse::new(taps).unwrap().normalized();
            let rho = [0.1, 1.0, 10.0][rho_idx];
            let d = match design_default(&h, &bpsk(), rho) {
                Ok(d) => d,
                Err(Error::NotConverged { .. }) => return Ok(()),
                Err(e) => panic!("{e:?}"),
            };
            let t = summarize(&d, &bpsk());
            let c = closed_form_summary(&h, rho).unwrap();
            for (a, b) in [(t.beta1_sq, c.beta1_sq), (t.eps0, c.eps0), (t.eps1, c.eps1), (t.s, c.s)] {
                prop_assert!((a - b).abs() <= 1e-6 * b.abs().max(1e-12), "{} vs {}", a, b);
            }
        }
    }
}
