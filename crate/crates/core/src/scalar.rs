//! Finite-alphabet inputs and the scalar Gaussian channel `√γ x̄ + n`.
//!
//! `x̄` is the input scaled to unit power, so `γ` is the signal-to-noise
//! ratio regardless of the alphabet's own scale.

use crate::error::{Error, Result};
use crate::mixture::GaussianMixture;
use crate::quad::{integrate_log, uniform_breakpoints};
use crate::special::HALF_LN_2PI;
use serde::{Deserialize, Serialize};

pub use crate::special::{binary_entropy, q_integral, q_tail};

const REL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDistribution", into = "RawDistribution")]
pub struct InputDistribution {
    atoms: Vec<f64>,
    probs: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawDistribution {
    atoms: Vec<f64>,
    probs: Vec<f64>,
}

impl TryFrom<RawDistribution> for InputDistribution {
    type Error = Error;
    fn try_from(raw: RawDistribution) -> Result<Self> {
        Self::new(raw.atoms, raw.probs)
    }
}

impl From<InputDistribution> for RawDistribution {
    fn from(x: InputDistribution) -> Self {
        Self {
            atoms: x.atoms,
            probs: x.probs,
        }
    }
}

impl InputDistribution {
    pub fn new(atoms: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        let bad = |m: &str| Err(Error::InvalidDistribution(m.to_string()));
        if atoms.len() != probs.len() {
            return bad("atoms and probs differ in length");
        }
        if atoms.len() < 2 {
            return bad("need at least two atoms");
        }
        if atoms.iter().chain(&probs).any(|v| !v.is_finite()) {
            return bad("non-finite value");
        }
        if probs.iter().any(|&p| p <= 0.0) {
            return bad("probabilities must be positive");
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return bad("probabilities must sum to 1");
        }
        let mut sorted = atoms.clone();
        sorted.sort_by(f64::total_cmp);
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return bad("atoms must be distinct");
        }
        let scale = atoms.iter().fold(0.0f64, |m, a| m.max(a.abs()));
        let mean: f64 = atoms.iter().zip(&probs).map(|(a, p)| a * p).sum();
        if mean.abs() > 1e-12 * scale {
            return bad("input must have zero mean");
        }
        Ok(Self {
            atoms,
            probs: probs.iter().map(|p| p / total).collect(),
        })
    }

    pub fn bpsk() -> Self {
        Self::new(vec![-1.0, 1.0], vec![0.5, 0.5]).unwrap()
    }

    /// Zero-mean unit-power binary input with `P(x > 0) = p`.
    pub fn skewed_binary(p: f64) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::DomainError(format!("skewed_binary needs p in (0,1), got {p}")));
        }
        Self::new(
            vec![-(p / (1.0 - p)).sqrt(), ((1.0 - p) / p).sqrt()],
            vec![1.0 - p, p],
        )
    }

    /// Unit-power `{−a, 0, a}` with `P(±a) = p` each.
    pub fn trinary(p: f64) -> Result<Self> {
        if !(p > 0.0 && p < 0.5) {
            return Err(Error::DomainError(format!("trinary needs p in (0,0.5), got {p}")));
        }
        let a = (0.5 / p).sqrt();
        Self::new(vec![-a, 0.0, a], vec![p, 1.0 - 2.0 * p, p])
    }

    /// Parses `bpsk`, `skewed_binary(p)`, `trinary(p)` or a JSON object
    /// `{"atoms": [...], "probs": [...]}`.
    pub fn parse(spec: &str) -> Result<Self> {
        let spec = spec.trim();
        if spec.starts_with('{') {
            return serde_json::from_str(spec).map_err(|e| Error::InvalidDistribution(e.to_string()));
        }
        if spec == "bpsk" {
            return Ok(Self::bpsk());
        }
        let arg = |name: &str| -> Option<f64> {
            spec.strip_prefix(name)?
                .trim()
                .strip_prefix('(')?
                .strip_suffix(')')?
                .trim()
                .parse()
                .ok()
        };
        if let Some(p) = arg("skewed_binary") {
            return Self::skewed_binary(p);
        }
        if let Some(p) = arg("trinary") {
            return Self::trinary(p);
        }
        Err(Error::InvalidDistribution(format!("unknown input spec '{spec}'")))
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    fn moment(&self, k: i32) -> f64 {
        self.atoms.iter().zip(&self.probs).map(|(a, p)| p * a.powi(k)).sum()
    }

    /// `P_x = E x²`.
    pub fn power(&self) -> f64 {
        self.moment(2)
    }

    /// `E x³ / (E x²)^{3/2}`.
    pub fn skewness(&self) -> f64 {
        self.moment(3) / self.power().powf(1.5)
    }

    /// `E x⁴ / (E x²)² − 3`.
    pub fn excess_kurtosis(&self) -> f64 {
        self.moment(4) / self.power().powi(2) - 3.0
    }

    /// `H(x₀)` in nats.
    pub fn entropy(&self) -> f64 {
        self.probs.iter().map(|p| -p * p.ln()).sum()
    }

    /// Smallest distance between distinct atoms.
    pub fn d_min(&self) -> f64 {
        let mut sorted = self.atoms.clone();
        sorted.sort_by(f64::total_cmp);
        sorted.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min)
    }

    /// Copy scaled to unit power.
    pub fn normalized(&self) -> Self {
        let s = self.power().sqrt();
        Self {
            atoms: self.atoms.iter().map(|a| a / s).collect(),
            probs: self.probs.clone(),
        }
    }

    /// Over atom pairs at distance `d_min`, the largest value of the smaller
    /// probability in the pair.
    pub fn p_v1(&self) -> f64 {
        let d = self.d_min();
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.sort_by(|&i, &j| self.atoms[i].total_cmp(&self.atoms[j]));
        idx.windows(2)
            .filter(|w| self.atoms[w[1]] - self.atoms[w[0]] <= d * (1.0 + 1e-12))
            .map(|w| self.probs[w[0]].min(self.probs[w[1]]))
            .fold(0.0, f64::max)
    }

    pub(crate) fn output_mixture(&self, gamma: f64) -> GaussianMixture {
        let s = (gamma / self.power()).sqrt();
        GaussianMixture::new(self.atoms.iter().zip(&self.probs).map(|(a, p)| (a * s, *p)).collect())
            .expect("valid distribution")
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma >= 0.0 && gamma.is_finite() {
        Ok(())
    } else {
        Err(Error::DomainError(format!("SNR must be finite and nonnegative, got {gamma}")))
    }
}

/// `I_x(γ)` in nats.
pub fn mutual_info(x: &InputDistribution, gamma: f64) -> Result<f64> {
    check_gamma(gamma)?;
    if gamma == 0.0 {
        return Ok(0.0);
    }
    let h = x.entropy();
    let gauss = 0.5 * gamma.ln_1p();
    let mix = x.output_mixture(gamma);
    let value = if gauss <= h {
        mix.mutual_info(REL_TOL)?.0
    } else {
        h - mix.ln_equivocation(REL_TOL)?.exp()
    };
    Ok(value.clamp(0.0, h.min(gauss)))
}

/// `H(x₀) − I_x(γ)` as a natural log, usable where it underflows.
pub fn ln_equivocation(x: &InputDistribution, gamma: f64) -> Result<f64> {
    check_gamma(gamma)?;
    if gamma == 0.0 {
        return Ok(x.entropy().ln());
    }
    x.output_mixture(gamma).ln_equivocation(REL_TOL)
}

/// `ln mmse_x̄(γ)`.
pub fn ln_mmse(x: &InputDistribution, gamma: f64) -> Result<f64> {
    check_gamma(gamma)?;
    if gamma == 0.0 {
        return Ok(0.0);
    }
    let xn = x.normalized();
    xn.output_mixture(gamma).ln_mmse_of(xn.atoms(), REL_TOL)
}

/// `mmse_x̄(γ)` for the unit-power input.
pub fn mmse(x: &InputDistribution, gamma: f64) -> Result<f64> {
    Ok(ln_mmse(x, gamma)?.exp().min(1.0))
}

/// `ln mmse_b(γ)` for equiprobable ±1, from the tanh integral.
pub fn ln_mmse_binary(gamma: f64) -> Result<f64> {
    check_gamma(gamma)?;
    if gamma == 0.0 {
        return Ok(0.0);
    }
    let r = gamma.sqrt();
    // ln(1 − tanh t) = ln 2 − ln(1 + e^{2t})
    let softplus = |t: f64| if t > 0.0 { t + (-t).exp().ln_1p() } else { t.exp().ln_1p() };
    let log_f = |y: f64| std::f64::consts::LN_2 - softplus(2.0 * r * y) - 0.5 * (y - r) * (y - r) - HALF_LN_2PI;
    let step = 1.0 / r.max(1.0);
    let mut bp = uniform_breakpoints(-r - 12.0, r + 12.0, step);
    bp.push(0.0);
    bp.sort_by(f64::total_cmp);
    bp.dedup();
    Ok(integrate_log(log_f, &bp, REL_TOL)?.0)
}

pub fn mmse_binary(gamma: f64) -> Result<f64> {
    Ok(ln_mmse_binary(gamma)?.exp().min(1.0))
}

/// Fourth-order small-SNR expansion of `I_x(ρ)` in skewness and excess
/// kurtosis.
pub fn low_snr_series(skew: f64, kurt: f64, rho: f64) -> f64 {
    let s2 = skew * skew;
    rho / 2.0 - rho.powi(2) / 4.0 + rho.powi(3) / 6.0 * (1.0 - s2 / 2.0)
        - rho.powi(4) / 48.0 * (kurt * kurt - 12.0 * s2 + 6.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::{integrate, Tolerance};
    use proptest::prelude::*;

    fn presets() -> Vec<InputDistribution> {
        vec![
            InputDistribution::bpsk(),
            InputDistribution::skewed_binary(0.002).unwrap(),
            InputDistribution::trinary(0.01).unwrap(),
        ]
    }

    #[test]
    fn construction_rules() {
        assert!(InputDistribution::new(vec![1.0], vec![1.0]).is_err());
        assert!(InputDistribution::new(vec![1.0, 1.0], vec![0.5, 0.5]).is_err());
        assert!(InputDistribution::new(vec![0.0, 1.0], vec![0.5, 0.5]).is_err());
        assert!(InputDistribution::new(vec![-1.0, 1.0], vec![0.5, 0.6]).is_err());
        assert!(InputDistribution::new(vec![-1.0, 1.0], vec![0.0, 1.0]).is_err());
        assert!(InputDistribution::skewed_binary(1.0).is_err());
        assert!(InputDistribution::trinary(0.5).is_err());
    }

    #[test]
    fn parses_presets_and_json() {
        assert_eq!(InputDistribution::parse("bpsk").unwrap(), InputDistribution::bpsk());
        assert_eq!(
            InputDistribution::parse("skewed_binary(0.002)").unwrap(),
            InputDistribution::skewed_binary(0.002).unwrap()
        );
        assert_eq!(
            InputDistribution::parse(" trinary( 0.01 ) ").unwrap(),
            InputDistribution::trinary(0.01).unwrap()
        );
        let j = InputDistribution::parse(r#"{"atoms":[-2,0,2],"probs":[0.25,0.5,0.25]}"#).unwrap();
        assert_eq!(j.len(), 3);
        assert!(InputDistribution::parse("qam(4)").is_err());
    }

    #[test]
    fn skewed_binary_moments() {
        let b = InputDistribution::skewed_binary(0.5).unwrap();
        assert!(b.skewness().abs() < 1e-15 && (b.excess_kurtosis() + 2.0).abs() < 1e-14);
        let p: f64 = 0.002;
        let x = InputDistribution::skewed_binary(p).unwrap();
        let s = (1.0 - 2.0 * p) / (p * (1.0 - p)).sqrt();
        let k = 1.0 / (p * (1.0 - p)) - 6.0;
        assert!((x.power() - 1.0).abs() < 1e-12);
        assert!((x.skewness() - s).abs() < 1e-9 * s);
        assert!((x.excess_kurtosis() - k).abs() < 1e-9 * k);
        // the positive atom is the rare one, so the skewness is positive here
        assert!((x.skewness().abs() - 22.3).abs() < 0.05);
        assert!((x.excess_kurtosis() - 495.0).abs() < 1.0);
        assert!((x.p_v1() - 0.002).abs() < 1e-15);
        assert!((InputDistribution::bpsk().p_v1() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn trinary_moments() {
        let t = InputDistribution::trinary(0.01).unwrap();
        assert!((t.excess_kurtosis() - 47.0).abs() < 1e-9);
        assert!(t.skewness().abs() < 1e-15);
        let g = InputDistribution::trinary(1.0 / 6.0).unwrap();
        assert!(g.excess_kurtosis().abs() < 1e-12);
    }

    #[test]
    fn mutual_info_limits() {
        for x in presets() {
            assert_eq!(mutual_info(&x, 0.0).unwrap(), 0.0);
            assert!((mmse(&x, 0.0).unwrap() - 1.0).abs() < 1e-15);
        }
        let b = InputDistribution::bpsk();
        let i = mutual_info(&b, 400.0).unwrap();
        assert!((i - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn bpsk_mutual_info_matches_mmse_integral() {
        // I(γ) = ½∫₀^γ mmse_b
        let g = 0.25;
        let r = integrate(|t| mmse_binary(t).unwrap(), &[0.0, g], Tolerance::default()).unwrap();
        let i = mutual_info(&InputDistribution::bpsk(), g).unwrap();
        assert!((i - 0.5 * r.value).abs() < 1e-11, "{i} vs {}", 0.5 * r.value);
    }

    #[test]
    fn mmse_binary_agrees_with_mixture_mmse() {
        let b = InputDistribution::bpsk();
        for &g in &[0.0, 0.01, 0.5, 1.0, 4.0, 12.0, 25.0, 50.0] {
            let a = mmse_binary(g).unwrap();
            let m = mmse(&b, g).unwrap();
            assert!((a - m).abs() < 1e-8 && (a / m - 1.0).abs() < 1e-8, "γ={g}: {a} vs {m}");
            assert!(a >= 2.0 * q_tail(g.sqrt()));
        }
    }

    #[test]
    fn mmse_below_gaussian() {
        for x in presets() {
            for &g in &[0.1, 1.0, 10.0, 40.0] {
                assert!(mmse(&x, g).unwrap() <= 1.0 / (1.0 + g) + 1e-12);
            }
        }
    }

    #[test]
    fn low_snr_series_gaussian_case() {
        let rho: f64 = 0.01;
        let d = low_snr_series(0.0, 0.0, rho) - 0.5 * rho.ln_1p();
        assert!(d.abs() <= 5.0 * rho.powi(5));
    }

    #[test]
    fn low_snr_series_error_is_fifth_order() {
        let b = InputDistribution::bpsk();
        let mut prev: Option<f64> = None;
        for &rho in &[1e-2, 5e-3, 2.5e-3] {
            let err = low_snr_series(0.0, -2.0, rho) - mutual_info(&b, rho).unwrap();
            let c = err / rho.powi(5);
            assert!(c.abs() < 10.0, "ρ={rho}: coefficient {c}");
            if let Some(p) = prev {
                assert!((c - p).abs() < 0.1 * p.abs().max(0.1));
            }
            prev = Some(c);
        }
    }

    // dI/dγ by central difference; where I saturates, the difference is taken
    // on ln(H − I) so that it stays above double-precision resolution.
    // Returns ln(dI/dγ).
    fn ln_derivative(x: &InputDistribution, g: f64) -> f64 {
        let h = 1e-4 * (1.0 + g);
        if 0.5 * g.ln_1p() <= x.entropy() {
            ((mutual_info(x, g + h).unwrap() - mutual_info(x, g - h).unwrap()) / (2.0 * h)).ln()
        } else {
            let (lp, lm) = (ln_equivocation(x, g + h).unwrap(), ln_equivocation(x, g - h).unwrap());
            ln_equivocation(x, g).unwrap() + ((lm - lp) / (2.0 * h)).ln()
        }
    }

    #[test]
    fn i_mmse_derivative_on_presets() {
        for x in presets() {
            for &g in &[1e-3, 0.1, 1.0, 5.0, 20.0, 50.0] {
                let d = ln_derivative(&x, g);
                let m = ln_mmse(&x, g).unwrap() - std::f64::consts::LN_2;
                assert!((d - m).exp_m1().abs() < 1e-4, "γ={g}: ln {d} vs ln {m}");
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn mutual_info_is_bounded_monotone_concave(p in 0.05f64..0.45, g in 0.01f64..20.0) {
            let x = InputDistribution::trinary(p).unwrap();
            let h = 0.05 * g;
            let (a, b, c) = (
                mutual_info(&x, g - h).unwrap(),
                mutual_info(&x, g).unwrap(),
                mutual_info(&x, g + h).unwrap(),
            );
            prop_assert!(a <= b + 1e-12 && b <= c + 1e-12);
            prop_assert!(a + c - 2.0 * b <= 1e-8);
            prop_assert!(b <= x.entropy().min(0.5 * g.ln_1p()) + 1e-12);
        }
    }
}
