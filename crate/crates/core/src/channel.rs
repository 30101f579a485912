//! The ISI channel `y_k = Σ h_i x_{k−i} + n_k` and its spectral summaries.
//!
//! All spectral averages ⟨·⟩ are means over θ ∈ [−π, π) of a function of
//! `|H(θ)|²`, `H(θ) = Σ h_k e^{−jkθ}`. They are computed with the periodic
//! trapezoidal rule on a power-of-two grid that is doubled until two
//! successive estimates agree to a relative tolerance.

use crate::error::{Error, Result};
use nalgebra::{Complex, DMatrix};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

type C64 = Complex<f64>;

/// Real FIR taps `h_0 .. h_{L−1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ChannelResponse {
    taps: Vec<f64>,
}

impl TryFrom<Vec<f64>> for ChannelResponse {
    type Error = Error;
    fn try_from(taps: Vec<f64>) -> Result<Self> {
        Self::new(taps)
    }
}

impl From<ChannelResponse> for Vec<f64> {
    fn from(c: ChannelResponse) -> Self {
        c.taps
    }
}

impl ChannelResponse {
    pub fn new(taps: Vec<f64>) -> Result<Self> {
        if taps.is_empty() {
            return Err(Error::InvalidChannel("no taps".into()));
        }
        if taps.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidChannel("non-finite tap".into()));
        }
        if taps.iter().all(|&t| t == 0.0) {
            return Err(Error::InvalidChannel("all taps are zero".into()));
        }
        Ok(Self { taps })
    }

    /// Parses a JSON array of real taps.
    pub fn from_json(text: &str) -> Result<Self> {
        let taps: Vec<f64> =
            serde_json::from_str(text).map_err(|e| Error::InvalidChannel(e.to_string()))?;
        Self::new(taps)
    }

    /// Three-tap "Channel B", `[0.408, 0.817, 0.408]`.
    pub fn channel_b() -> Self {
        Self::new(vec![0.408, 0.817, 0.408]).unwrap()
    }

    /// Seven-tap severe-ISI channel `[0.19, 0.35, 0.46, 0.5, 0.46, 0.35, 0.19]`.
    pub fn jeong() -> Self {
        Self::new(vec![0.19, 0.35, 0.46, 0.5, 0.46, 0.35, 0.19]).unwrap()
    }

    /// [`Self::jeong`] with 3 zero taps before and 5 after the main tap.
    pub fn jeong_spaced() -> Self {
        let mut taps = vec![0.19, 0.35, 0.46];
        taps.extend([0.0; 3]);
        taps.push(0.5);
        taps.extend([0.0; 5]);
        taps.extend([0.46, 0.35, 0.19]);
        Self::new(taps).unwrap()
    }

    /// Unit-energy two-tap channel `[√(1−q²), q]`.
    pub fn two_tap(q: f64) -> Result<Self> {
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::DomainError(format!("two-tap q must be in (0,1), got {q}")));
        }
        Self::new(vec![(1.0 - q * q).sqrt(), q])
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn energy(&self) -> f64 {
        self.taps.iter().map(|h| h * h).sum()
    }

    /// Copy rescaled to unit energy.
    pub fn normalized(&self) -> Self {
        let s = self.energy().sqrt();
        Self {
            taps: self.taps.iter().map(|h| h / s).collect(),
        }
    }

    pub fn is_normalized(&self) -> bool {
        (self.energy() - 1.0).abs() <= 1e-12
    }

    /// `r_k = Σ_i h_i h_{i+k}` for `k = 0 .. L−1`.
    pub fn autocorrelation(&self) -> Vec<f64> {
        let l = self.taps.len();
        (0..l)
            .map(|k| (0..l - k).map(|i| self.taps[i] * self.taps[i + k]).sum())
            .collect()
    }

    /// `|H(θ)|²`.
    pub fn transfer_power(&self, theta: f64) -> f64 {
        let (mut re, mut im) = (0.0, 0.0);
        for (k, h) in self.taps.iter().enumerate() {
            let (s, c) = (k as f64 * theta).sin_cos();
            re += h * c;
            im -= h * s;
        }
        re * re + im * im
    }

    /// Roots of `p(w) = Σ h_k w^k` after stripping leading and trailing zero
    /// taps, together with the stripped polynomial's leading coefficient.
    pub fn roots(&self) -> Result<(Vec<C64>, f64)> {
        let first = self.taps.iter().position(|&h| h != 0.0).unwrap();
        let last = self.taps.iter().rposition(|&h| h != 0.0).unwrap();
        let coeffs = &self.taps[first..=last];
        let degree = coeffs.len() - 1;
        let lead = coeffs[degree];
        if degree == 0 {
            return Ok((Vec::new(), lead));
        }
        let mut companion = DMatrix::<f64>::zeros(degree, degree);
        for i in 1..degree {
            companion[(i, i - 1)] = 1.0;
        }
        for i in 0..degree {
            companion[(i, degree - 1)] = -coeffs[i] / lead;
        }
        let schur = nalgebra::linalg::Schur::try_new(companion, f64::EPSILON, 10_000)
            .ok_or_else(|| Error::RootFindingFailure("Schur iteration did not converge".into()))?;
        let eig = schur.complex_eigenvalues();
        let mut roots = Vec::with_capacity(degree);
        for z0 in eig.iter() {
            roots.push(polish_root(coeffs, *z0)?);
        }
        Ok((roots, lead))
    }

    /// Equivalent minimum-phase channel: same `|H(θ)|²`, every root of
    /// `Σ h_k w^k` on or outside the unit circle (equivalently all zeros of
    /// `H(z)` on or inside it), so that `h_0² = g_zf_dfe`.
    pub fn to_minimum_phase(&self) -> Result<Self> {
        let (roots, lead) = self.roots()?;
        let mut gain = lead;
        let mut reflected = Vec::with_capacity(roots.len());
        for r in roots {
            let m = r.norm();
            if m < 1.0 - 1e-9 {
                gain *= m;
                reflected.push(C64::new(1.0, 0.0) / r.conj());
            } else {
                reflected.push(r);
            }
        }
        // Multiply out gain·Π (w − r), ascending powers.
        let mut poly = vec![C64::new(gain, 0.0)];
        for r in &reflected {
            let mut next = vec![C64::new(0.0, 0.0); poly.len() + 1];
            for (i, c) in poly.iter().enumerate() {
                next[i + 1] += c;
                next[i] -= c * r;
            }
            poly = next;
        }
        let mut taps: Vec<f64> = poly.iter().map(|c| c.re).collect();
        let scale = (self.energy() / taps.iter().map(|t| t * t).sum::<f64>()).sqrt();
        for t in &mut taps {
            *t *= scale;
        }
        if taps[0] < 0.0 {
            for t in &mut taps {
                *t = -*t;
            }
        }
        Self::new(taps)
    }

    /// `exp⟨log|H|²⟩` from the roots (Jensen's formula); roots on the unit
    /// circle contribute nothing.
    pub fn g_zf_dfe_from_roots(&self) -> Result<f64> {
        let (roots, lead) = self.roots()?;
        let log_g = 2.0 * lead.abs().ln()
            + roots
                .iter()
                .map(|r| 2.0 * r.norm().ln().max(0.0))
                .sum::<f64>();
        Ok(log_g.exp())
    }
}

fn eval_poly(coeffs: &[f64], z: C64) -> (C64, C64) {
    let mut p = C64::new(0.0, 0.0);
    let mut dp = C64::new(0.0, 0.0);
    for &c in coeffs.iter().rev() {
        dp = dp * z + p;
        p = p * z + c;
    }
    (p, dp)
}

fn polish_root(coeffs: &[f64], mut z: C64) -> Result<C64> {
    let scale: f64 = coeffs.iter().map(|c| c.abs()).sum::<f64>();
    for _ in 0..50 {
        let (p, dp) = eval_poly(coeffs, z);
        if dp.norm() == 0.0 {
            break;
        }
        let step = p / dp;
        z -= step;
        if step.norm() <= 1e-15 * z.norm().max(1.0) {
            break;
        }
    }
    let (p, _) = eval_poly(coeffs, z);
    let bound = scale * z.norm().max(1.0).powi(coeffs.len() as i32);
    if !z.re.is_finite() || !z.im.is_finite() || p.norm() > 1e-6 * bound {
        return Err(Error::RootFindingFailure(format!("root {z} has residual {}", p.norm())));
    }
    Ok(z)
}

/// Grid-doubling control for spectral means.
#[derive(Debug, Clone, Copy)]
pub struct SpectralGrid {
    pub rel_tol: f64,
    pub min_log2: u32,
    pub max_log2: u32,
}

impl Default for SpectralGrid {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            min_log2: 6,
            max_log2: 22,
        }
    }
}

/// `⟨f(|H(θ)|²)⟩` by trapezoidal grid doubling.
pub fn spectral_mean<F: Fn(f64) -> f64>(channel: &ChannelResponse, f: F, grid: SpectralGrid) -> Result<f64> {
    let r = channel.autocorrelation();
    let power = |theta: f64| {
        // r_0 + 2 Σ r_k cos kθ via the Chebyshev recurrence
        let c1 = theta.cos();
        let (mut prev, mut cur) = (1.0, c1);
        let mut acc = r[0];
        for (k, rk) in r.iter().enumerate().skip(1) {
            if k > 1 {
                let next = 2.0 * c1 * cur - prev;
                prev = cur;
                cur = next;
            }
            acc += 2.0 * rk * cur;
        }
        acc.max(0.0)
    };
    let mut n = 1usize << grid.min_log2;
    let mut sum: f64 = (0..n).map(|j| f(power(2.0 * PI * j as f64 / n as f64))).sum();
    let mut mean = sum / n as f64;
    if !mean.is_finite() {
        return Err(Error::NonConvergent {
            what: "spectral mean",
            estimate: mean,
            error: f64::INFINITY,
        });
    }
    for _ in grid.min_log2..grid.max_log2 {
        let step = 2.0 * PI / (2 * n) as f64;
        let mid: f64 = (0..n).map(|j| f(power(step * (2 * j + 1) as f64))).sum();
        sum += mid;
        n *= 2;
        let next = sum / n as f64;
        if !next.is_finite() {
            return Err(Error::NonConvergent {
                what: "spectral mean",
                estimate: next,
                error: f64::INFINITY,
            });
        }
        let diff = (next - mean).abs();
        mean = next;
        if diff <= grid.rel_tol * mean.abs() {
            return Ok(mean);
        }
    }
    Err(Error::NonConvergent {
        what: "spectral mean",
        estimate: mean,
        error: f64::NAN,
    })
}

/// Output SNRs and gain factors of the linear and decision-feedback
/// equalizers at input SNR `rho = P_x/N_0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralSummary {
    pub rho: f64,
    /// Biased MMSE linear equalizer, `[⟨1/(1+ρ|H|²)⟩]⁻¹`.
    pub snr_le: f64,
    /// Biased MMSE-DFE, `exp⟨log(1+ρ|H|²)⟩`.
    pub snr_dfe: f64,
    pub snr_zf_dfe: f64,
    pub g_zf_dfe: f64,
    /// Zero when the spectrum has a null.
    pub g_zf_le: f64,
    /// `⟨log(1+ρ|H|²)⟩` in nats; equal to `ln snr_dfe`.
    pub gaussian_rate: f64,
    /// `snr_le − 1`, without cancellation.
    pub snr_le_excess: f64,
    /// `snr_dfe − 1 = expm1(gaussian_rate)`.
    pub snr_dfe_excess: f64,
    /// `ln(snr_dfe / snr_le)`, without cancellation at low SNR.
    pub ln_dfe_over_le: f64,
    /// `⟨|H|²⟩`.
    pub mean_power: f64,
}

/// Divergence threshold for `⟨1/|H|²⟩`.
const ZF_LE_DIVERGENCE: f64 = 1e12;

pub fn spectral_summary(channel: &ChannelResponse, rho: f64) -> Result<SpectralSummary> {
    spectral_summary_with(channel, rho, SpectralGrid::default())
}

pub fn spectral_summary_with(channel: &ChannelResponse, rho: f64, grid: SpectralGrid) -> Result<SpectralSummary> {
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::DomainError(format!("rho must be positive, got {rho}")));
    }
    let gaussian_rate = spectral_mean(channel, |p| (rho * p).ln_1p(), grid)?;
    let le_mean = spectral_mean(channel, |p| 1.0 / (1.0 + rho * p), grid)?;
    let le_complement = spectral_mean(channel, |p| rho * p / (1.0 + rho * p), grid)?;
    let g_zf_dfe = match spectral_mean(channel, |p| p.ln(), grid) {
        Ok(m) => m.exp(),
        Err(_) => channel.g_zf_dfe_from_roots()?,
    };
    let g_zf_le = match spectral_mean(channel, |p| 1.0 / p, grid) {
        Ok(m) if m < ZF_LE_DIVERGENCE => 1.0 / m,
        _ => 0.0,
    };
    let snr_dfe = gaussian_rate.exp();
    Ok(SpectralSummary {
        rho,
        snr_le: 1.0 / le_mean,
        snr_dfe,
        snr_zf_dfe: rho * g_zf_dfe,
        g_zf_dfe,
        g_zf_le,
        gaussian_rate,
        snr_le_excess: le_complement / le_mean,
        snr_dfe_excess: gaussian_rate.exp_m1(),
        ln_dfe_over_le: gaussian_rate + (-le_complement).ln_1p(),
        mean_power: channel.energy(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_degenerate_channels() {
        assert!(ChannelResponse::new(vec![]).is_err());
        assert!(ChannelResponse::new(vec![0.0, 0.0]).is_err());
        assert!(ChannelResponse::new(vec![f64::NAN]).is_err());
        assert!(ChannelResponse::from_json("[0.5, 1.0]").is_ok());
        assert!(ChannelResponse::from_json("{}").is_err());
    }

    #[test]
    fn transfer_power_examples() {
        let id = ChannelResponse::new(vec![1.0]).unwrap();
        assert!((id.transfer_power(1.234) - 1.0).abs() < 1e-15);
        let b = ChannelResponse::channel_b();
        assert!((b.transfer_power(0.0) - 1.633f64.powi(2)).abs() < 1e-12);
        let h = ChannelResponse::new(vec![0.5f64.sqrt(), 0.5f64.sqrt()]).unwrap();
        assert!(h.transfer_power(PI) < 1e-15);
    }

    #[test]
    fn flat_channel_summary() {
        let s = spectral_summary(&ChannelResponse::new(vec![1.0]).unwrap(), 3.0).unwrap();
        assert!((s.snr_le - 4.0).abs() < 1e-12);
        assert!((s.snr_dfe - 4.0).abs() < 1e-12);
        assert!((s.gaussian_rate - 4f64.ln()).abs() < 1e-12);
        assert!((s.g_zf_le - 1.0).abs() < 1e-12);
    }

    #[test]
    fn null_channel_gains() {
        let h = ChannelResponse::new(vec![0.5f64.sqrt(), 0.5f64.sqrt()]).unwrap();
        for &rho in &[0.1, 1.0, 30.0] {
            let s = spectral_summary(&h, rho).unwrap();
            assert!((s.g_zf_dfe - 0.5).abs() < 1e-10, "g_zf_dfe = {}", s.g_zf_dfe);
            assert_eq!(s.g_zf_le, 0.0);
        }
    }

    #[test]
    fn g_zf_dfe_quadrature_agrees_with_roots() {
        for taps in [vec![0.6, 0.8], vec![0.408, 0.817, 0.408], vec![0.3, -0.2, 0.9, 0.1]] {
            let h = ChannelResponse::new(taps).unwrap();
            let quad = spectral_mean(&h, |p| p.ln(), SpectralGrid::default()).unwrap().exp();
            let roots = h.g_zf_dfe_from_roots().unwrap();
            assert!((quad / roots - 1.0).abs() < 1e-9, "{quad} vs {roots}");
        }
    }

    #[test]
    fn min_phase_flips_two_tap() {
        let h = ChannelResponse::new(vec![0.6, 0.8]).unwrap();
        let m = h.to_minimum_phase().unwrap();
        assert!((m.taps()[0] - 0.8).abs() < 1e-12 && (m.taps()[1] - 0.6).abs() < 1e-12);
        let id = ChannelResponse::new(vec![1.0]).unwrap().to_minimum_phase().unwrap();
        assert_eq!(id.taps(), &[1.0]);
    }

    #[test]
    fn min_phase_channel_b_first_tap_is_zf_gain() {
        let b = ChannelResponse::channel_b();
        let m = b.to_minimum_phase().unwrap();
        let g = spectral_mean(&b, |p| p.ln(), SpectralGrid::default()).unwrap().exp();
        assert!((m.taps()[0].powi(2) - g).abs() < 1e-8);
        for j in 0..4096 {
            let th = -PI + 2.0 * PI * j as f64 / 4096.0;
            let (a, c) = (b.transfer_power(th), m.transfer_power(th));
            assert!((a - c).abs() <= 1e-8 * a.max(1e-3));
        }
    }

    #[test]
    fn leading_zero_taps_are_a_pure_delay() {
        let h = ChannelResponse::new(vec![0.0, 0.6, 0.8]).unwrap();
        let m = h.to_minimum_phase().unwrap();
        assert_eq!(m.len(), 2);
        assert!((h.g_zf_dfe_from_roots().unwrap() - 0.64).abs() < 1e-12);
    }
}
