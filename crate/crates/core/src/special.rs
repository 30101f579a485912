//! Gaussian tail helpers.

use std::f64::consts::SQRT_2;

/// ln(2π)/2
pub(crate) const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Standard normal density.
pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x - HALF_LN_2PI).exp()
}

/// Gaussian tail probability Q(x) = P(N(0,1) > x).
pub fn q_tail(x: f64) -> f64 {
    0.5 * libm::erfc(x / SQRT_2)
}

/// Mills ratio Q(x)/φ(x), accurate for large positive x.
pub fn mills_ratio(x: f64) -> f64 {
    if x < 30.0 {
        return q_tail(x) / normal_pdf(x);
    }
    // Continued fraction 1/(x+1/(x+2/(x+3/(x+...)))), evaluated backwards.
    let mut t = 0.0;
    for k in (1..=60).rev() {
        t = k as f64 / (x + t);
    }
    1.0 / (x + t)
}

/// ln Q(x), finite far beyond the underflow point of Q itself.
pub fn ln_q_tail(x: f64) -> f64 {
    if x < 30.0 {
        q_tail(x).ln()
    } else {
        -0.5 * x * x - HALF_LN_2PI + mills_ratio(x).ln()
    }
}

/// ∫_s^∞ Q(√γ) dγ in closed form, √s e^{−s/2}/√(2π) + (1−s) Q(√s).
pub fn q_integral(s: f64) -> f64 {
    assert!(s >= 0.0, "q_integral needs s >= 0");
    if s < 4.0 {
        let x = s.sqrt();
        x * normal_pdf(x) + (1.0 - s) * q_tail(x)
    } else {
        ln_q_integral(s).exp()
    }
}

/// ln of [`q_integral`]. With the Mills ratio R = 1/(x+t), the bracket in
/// φ(x)[x + (1−x²)R] equals (xt+1)/(x+t).
pub fn ln_q_integral(s: f64) -> f64 {
    let x = s.sqrt();
    if s < 4.0 {
        return q_integral(s).ln();
    }
    let t = 1.0 / mills_ratio(x) - x;
    -0.5 * s - HALF_LN_2PI + ((x * t + 1.0) / (x + t)).ln()
}

/// Binary entropy in nats with 0·log 0 = 0.
pub fn binary_entropy(p: f64) -> f64 {
    assert!((0.0..=1.0).contains(&p), "binary_entropy needs p in [0,1]");
    if p == 0.0 || p == 1.0 {
        return 0.0;
    }
    -p * p.ln() - (1.0 - p) * (-p).ln_1p()
}

/// Streaming log-sum-exp accumulator.
#[derive(Debug, Clone, Copy)]
pub(crate) struct LogSum {
    max: f64,
    sum: f64,
}

impl LogSum {
    pub(crate) fn new() -> Self {
        Self {
            max: f64::NEG_INFINITY,
            sum: 0.0,
        }
    }

    pub(crate) fn add(&mut self, t: f64) {
        if t == f64::NEG_INFINITY {
            return;
        }
        if t <= self.max {
            self.sum += (t - self.max).exp();
        } else {
            self.sum = self.sum * (self.max - t).exp() + 1.0;
            self.max = t;
        }
    }

    pub(crate) fn merge(&mut self, other: LogSum) {
        if other.max == f64::NEG_INFINITY {
            return;
        }
        if other.max <= self.max {
            self.sum += other.sum * (other.max - self.max).exp();
        } else {
            self.sum = self.sum * (self.max - other.max).exp() + other.sum;
            self.max = other.max;
        }
    }

    pub(crate) fn value(&self) -> f64 {
        if self.max == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            self.max + self.sum.ln()
        }
    }
}

#[cfg(test)]
fn log_sum_exp(terms: impl IntoIterator<Item = f64>) -> f64 {
    let mut acc = LogSum::new();
    for t in terms {
        acc.add(t);
    }
    acc.value()
}

/// 1 + (u − 1)e^u = r ln r − r + 1 at r = e^u, accurate near u = 0.
pub(crate) fn rlogr_excess(u: f64) -> f64 {
    if u.abs() < 0.1 {
        // Σ_{n≥2} (n−1) uⁿ/n!
        let mut power = u * u / 2.0;
        let mut sum = power;
        for n in 3..=18 {
            power *= u / n as f64;
            sum += (n - 1) as f64 * power;
        }
        sum
    } else {
        1.0 + (u - 1.0) * u.exp()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn q_reference_values() {
        assert!((q_tail(0.0) - 0.5).abs() < 1e-16);
        assert!((q_tail(2.0) / 0.022_750_131_948_179_195 - 1.0).abs() < 1e-14);
        assert!((q_tail(10.0) / 7.619_853_024_160_527e-24 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ln_q_is_continuous_at_switch() {
        let below = ln_q_tail(30.0 - 1e-9);
        let above = ln_q_tail(30.0 + 1e-9);
        assert!((below - above).abs() < 1e-6);
    }

    #[test]
    fn q_integral_at_zero_is_half() {
        assert!((q_integral(0.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn q_integral_matches_its_derivative() {
        // d/ds ∫_s^∞ Q(√γ)dγ = −Q(√s)
        for &s in &[0.3, 2.0, 9.0, 40.0] {
            let h = 1e-4 * (1.0 + s);
            let d = (q_integral(s + h) - q_integral(s - h)) / (2.0 * h);
            let want = -q_tail(s.sqrt());
            assert!((d / want - 1.0).abs() < 1e-6, "s={s}: {d} vs {want}");
        }
    }

    #[test]
    fn ln_q_integral_has_no_cancellation_at_large_s() {
        // 30-digit reference
        assert!((ln_q_integral(2000.0) + 1004.027_240_837_974_5).abs() < 1e-10);
        assert!((ln_q_integral(16.0) - q_integral(16.0).ln()).abs() < 1e-12);
    }

    #[test]
    fn log_sum_exp_is_stable() {
        let v = log_sum_exp([-1000.0, -1000.0 + 2f64.ln()]);
        assert!((v - (-1000.0 + 3f64.ln())).abs() < 1e-12);
        assert_eq!(log_sum_exp([]), f64::NEG_INFINITY);
        let mut a = LogSum::new();
        a.add(1.0);
        let mut b = LogSum::new();
        b.add(5.0);
        a.merge(b);
        assert!((a.value() - (1f64.exp() + 5f64.exp()).ln()).abs() < 1e-14);
    }

    #[test]
    fn binary_entropy_values() {
        assert_eq!(binary_entropy(0.0), 0.0);
        assert!((binary_entropy(0.5) - std::f64::consts::LN_2).abs() < 1e-15);
        let p: f64 = 0.11;
        let direct = -p * p.ln() - (1.0 - p) * (1.0 - p).ln();
        assert!((binary_entropy(p) - direct).abs() < 1e-15);
    }

    #[test]
    fn rlogr_excess_series_matches_direct() {
        for &u in &[-0.099, -0.01, 0.05, 0.0999] {
            let direct = 1.0 + (u - 1.0) * f64::exp(u);
            assert!((rlogr_excess(u) - direct).abs() < 1e-15);
        }
        assert!(rlogr_excess(1e-6) > 0.0);
    }
}
