//! High-SNR comparison of the achievable rate with the Shamai-Laroia
//! expression: minimum error-event distance, the Fano/Forney upper bound on
//! `H(x₀) − 𝓘` and a lower bound on `H(x₀) − I_SL`.

use crate::channel::{spectral_summary, ChannelResponse};
use crate::error::{Error, Result};
use crate::quad::{integrate, uniform_breakpoints, Tolerance};
use crate::scalar::InputDistribution;
use crate::special::{ln_q_integral, ln_q_tail};
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::f64::consts::PI;

/// Nodes the error-event search may expand before giving up.
pub const NODE_BUDGET: u64 = 5_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorEventSearch {
    /// Nonzero normalized differences `(x − x′)/d_min`, ascending.
    pub error_alphabet: Vec<f64>,
    pub delta_min_sq: f64,
    /// Error sequence attaining `delta_min_sq`; first and last entries nonzero.
    pub witness: Vec<f64>,
    pub explored: u64,
    pub max_len: usize,
    /// Minimum over every event of length `≤ max_len`.
    pub exhaustive: bool,
    /// No event of any length can do better.
    pub certified: bool,
}

/// `Σ_k (Σ_l e_l h_{k−l})²`.
pub fn event_distance(taps: &[f64], event: &[f64]) -> f64 {
    let mut total = 0.0;
    for k in 0..event.len() + taps.len() - 1 {
        let mut out = 0.0;
        for (i, h) in taps.iter().enumerate() {
            if k >= i && k - i < event.len() {
                out += h * event[k - i];
            }
        }
        total += out * out;
    }
    total
}

/// Nonzero normalized differences of the input alphabet.
pub fn error_alphabet(x: &InputDistribution) -> Vec<f64> {
    let d = x.d_min();
    let mut out: Vec<f64> = Vec::new();
    for a in x.atoms() {
        for b in x.atoms() {
            if a != b {
                let e = (a - b) / d;
                if !out.iter().any(|v| (v - e).abs() < 1e-9) {
                    out.push(e);
                }
            }
        }
    }
    out.sort_by(f64::total_cmp);
    out
}

#[derive(Debug, Clone)]
struct Node {
    acc: f64,
    seq: Vec<u8>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    // reversed so the heap pops the smallest distance, then the
    // lexicographically smallest sequence
    fn cmp(&self, other: &Self) -> Ordering {
        other.acc.total_cmp(&self.acc).then_with(|| other.seq.cmp(&self.seq))
    }
}

/// Best-first search for the minimum-distance error event of length at
/// most `max_len`. The channel must have unit energy.
pub fn search_error_events(channel: &ChannelResponse, x: &InputDistribution, max_len: usize) -> Result<ErrorEventSearch> {
    if !channel.is_normalized() {
        return Err(Error::InvalidChannel("error-event search needs a unit-energy channel".into()));
    }
    let taps = channel.taps();
    let l = taps.len();
    if max_len < l {
        return Err(Error::InvalidParams(format!("max_len {max_len} is shorter than the channel ({l})")));
    }
    let nonzero = error_alphabet(x);
    // symbol values with zero in its sorted place, so index order is value order
    let mut symbols = nonzero.clone();
    symbols.push(0.0);
    symbols.sort_by(f64::total_cmp);
    let zero = symbols.iter().position(|&v| v == 0.0).unwrap() as u8;
    let value = |seq: &[u8]| -> Vec<f64> { seq.iter().map(|&i| symbols[i as usize]).collect() };
    let step_out = |seq: &[u8]| -> f64 {
        // output at the time of the newest symbol
        let n = seq.len();
        let mut out = 0.0;
        for (i, h) in taps.iter().enumerate().take(n) {
            out += h * symbols[seq[n - 1 - i] as usize];
        }
        out * out
    };
    let tail = |seq: &[u8]| -> f64 {
        let n = seq.len();
        let mut total = 0.0;
        for j in 1..l {
            let mut out = 0.0;
            for i in j..l {
                if n + j > i {
                    let idx = n + j - 1 - i;
                    if idx < n {
                        out += taps[i] * symbols[seq[idx] as usize];
                    }
                }
            }
            total += out * out;
        }
        total
    };
    let state_of = |seq: &[u8]| -> Vec<u8> {
        let n = seq.len();
        let from = n.saturating_sub(l - 1);
        let mut s = vec![zero; (l - 1).saturating_sub(n)];
        s.extend_from_slice(&seq[from..]);
        s
    };

    let mut best = f64::INFINITY;
    let mut witness: Vec<u8> = Vec::new();
    let tol = |b: f64| 1e-12 * b.max(1.0);
    let mut heap = BinaryHeap::new();
    let mut seen: HashMap<Vec<u8>, Vec<(usize, f64)>> = HashMap::new();
    let mut frontier_min = f64::INFINITY;
    let mut explored = 0u64;
    let mut exhausted = false;
    for (i, _) in symbols.iter().enumerate() {
        if i as u8 == zero {
            continue;
        }
        let seq = vec![i as u8];
        heap.push(Node { acc: step_out(&seq), seq });
    }
    while let Some(node) = heap.pop() {
        if node.acc > best + tol(best) {
            break;
        }
        explored += 1;
        if explored > NODE_BUDGET {
            exhausted = true;
            break;
        }
        let last = *node.seq.last().unwrap();
        if last != zero {
            let total = node.acc + tail(&node.seq);
            if !best.is_finite() || total < best - tol(best) {
                best = total;
                witness = node.seq.clone();
            } else if total <= best + tol(best) && node.seq < witness {
                best = best.min(total);
                witness = node.seq.clone();
            }
        }
        if node.seq.len() == max_len {
            frontier_min = frontier_min.min(node.acc);
            continue;
        }
        let state = state_of(&node.seq);
        if l > 1 && state.iter().all(|&s| s == zero) {
            // merged: anything further is a separate event
            continue;
        }
        for i in 0..symbols.len() as u8 {
            let mut seq = node.seq.clone();
            seq.push(i);
            let acc = node.acc + step_out(&seq);
            if acc > best + tol(best) {
                continue;
            }
            let depth = seq.len();
            let key = state_of(&seq);
            let entry = seen.entry(key).or_default();
            if entry.iter().any(|&(d, a)| d <= depth && a < acc - tol(acc)) {
                continue;
            }
            entry.retain(|&(d, a)| !(d >= depth && a > acc + tol(acc)));
            entry.push((depth, acc));
            if depth == max_len {
                frontier_min = frontier_min.min(acc);
            }
            heap.push(Node { acc, seq });
        }
    }
    if witness.is_empty() {
        return Err(Error::Inconclusive {
            max_len,
            upper_bound: f64::INFINITY,
        });
    }
    // Any longer event carries its last symbol through h_{L−1} after the
    // first max_len outputs, and every step costs at least the floor.
    let completion = (taps[l - 1] * taps[l - 1]).max(step_floor(taps, &symbols, zero));
    let w = value(&witness);
    let delta = event_distance(taps, &w);
    Ok(ErrorEventSearch {
        error_alphabet: nonzero,
        delta_min_sq: delta,
        witness: w,
        explored,
        max_len,
        exhaustive: !exhausted,
        certified: !exhausted && frontier_min + completion >= delta - tol(delta),
    })
}

/// Smallest output energy of one trellis step whose window holds a nonzero
/// error symbol.
fn step_floor(taps: &[f64], symbols: &[f64], zero: u8) -> f64 {
    let l = taps.len();
    let k = symbols.len();
    let windows = k.checked_pow(l as u32).filter(|&w| w <= 1 << 20);
    let Some(windows) = windows else { return 0.0 };
    let mut floor = f64::INFINITY;
    for code in 0..windows {
        let mut c = code;
        let mut out = 0.0;
        let mut any = false;
        for h in taps {
            let s = (c % k) as u8;
            c /= k;
            any |= s != zero;
            out += h * symbols[s as usize];
        }
        if any {
            floor = floor.min(out * out);
        }
    }
    floor
}

/// Certified `δ²_min`; `max_len` defaults to four channel lengths.
pub fn delta_min_sq(channel: &ChannelResponse, x: &InputDistribution, max_len: Option<usize>) -> Result<ErrorEventSearch> {
    let m = max_len.unwrap_or(4 * channel.len());
    let s = search_error_events(channel, x, m)?;
    if !s.certified {
        return Err(Error::Inconclusive {
            max_len: m,
            upper_bound: s.delta_min_sq,
        });
    }
    Ok(s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentGap {
    pub delta_min_sq: f64,
    pub g_zf_dfe: f64,
    pub strict: bool,
    pub search: ErrorEventSearch,
}

fn prepared(channel: &ChannelResponse) -> Result<ChannelResponse> {
    channel.normalized().to_minimum_phase()
}

/// Compares `δ²_min` of the minimum-phase channel with `g_ZF-DFE`.
pub fn exponent_gap(channel: &ChannelResponse, x: &InputDistribution) -> Result<ExponentGap> {
    exponent_gap_with(channel, x, None)
}

/// [`exponent_gap`] with an explicit search length.
pub fn exponent_gap_with(channel: &ChannelResponse, x: &InputDistribution, max_len: Option<usize>) -> Result<ExponentGap> {
    let h = prepared(channel)?;
    let search = delta_min_sq(&h, x, max_len)?;
    let g = spectral_summary(&h, 1.0)?.g_zf_dfe;
    Ok(ExponentGap {
        delta_min_sq: search.delta_min_sq,
        g_zf_dfe: g,
        strict: search.certified && search.delta_min_sq - g > 1e-9,
        search,
    })
}

/// `ln(h₂(p) + p ln K)` given `ln p`, valid far into underflow.
fn ln_fano(ln_p: f64, k: usize) -> f64 {
    let ln_k = (k as f64).ln();
    if ln_p > -700.0 {
        let p = ln_p.exp();
        (crate::special::binary_entropy(p) + p * ln_k).ln()
    } else {
        // h₂(p) = p(1 − ln p) + O(p²)
        ln_p + (1.0 - ln_p + ln_k).ln()
    }
}

fn ln_error_probability(delta: f64, x: &InputDistribution, rho: f64, k_prime: f64) -> f64 {
    let d = x.normalized().d_min();
    let arg = (rho * (d / 2.0).powi(2) * delta).sqrt();
    (k_prime.ln() + ln_q_tail(arg)).min(0.5f64.ln())
}

fn check_k_prime(k_prime: f64) -> Result<()> {
    if k_prime > 0.0 && k_prime.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParams(format!("K′ must be positive, got {k_prime}")))
    }
}

/// Natural log of [`fano_forney_upper`].
pub fn ln_fano_forney_upper(channel: &ChannelResponse, x: &InputDistribution, rho: f64, k_prime: f64) -> Result<f64> {
    check_k_prime(k_prime)?;
    let h = prepared(channel)?;
    let delta = delta_min_sq(&h, x, None)?.delta_min_sq;
    Ok(ln_fano(ln_error_probability(delta, x, rho, k_prime), x.len()))
}

/// `h₂(P̄) + P̄ ln|X|` with `P̄ = min(½, K′Q(√(ρ(d_min/2)²δ²_min)))`, an upper
/// bound on `H(x₀) − 𝓘` for a valid sequence-detector constant `K′`.
pub fn fano_forney_upper(channel: &ChannelResponse, x: &InputDistribution, rho: f64, k_prime: f64) -> Result<f64> {
    Ok(ln_fano_forney_upper(channel, x, rho, k_prime)?.exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnrUpper {
    pub value: f64,
    /// The spectrum has a null and the `Ω`-measure bound was used.
    pub null_branch: bool,
    pub omega: f64,
    pub c1: f64,
}

/// Measure of `{θ : |H(θ)|² < t}` on `[−π, π]`.
pub fn low_gain_measure(channel: &ChannelResponse, t: f64) -> f64 {
    let n = 1 << 14;
    let f = |th: f64| channel.transfer_power(th) - t;
    let step = PI / n as f64;
    // |H|² is even in θ for real taps, so measure [0, π] and double
    let mut total = 0.0;
    let mut prev = (0.0, f(0.0));
    for j in 1..=n {
        let th = j as f64 * step;
        let cur = (th, f(th));
        total += match (prev.1 < 0.0, cur.1 < 0.0) {
            (true, true) => step,
            (false, false) => 0.0,
            (inside_first, _) => {
                let (mut a, mut b) = (prev.0, cur.0);
                for _ in 0..60 {
                    let m = 0.5 * (a + b);
                    if (f(m) < 0.0) == (f(a) < 0.0) {
                        a = m;
                    } else {
                        b = m;
                    }
                }
                let r = 0.5 * (a + b);
                if inside_first {
                    r - prev.0
                } else {
                    cur.0 - r
                }
            }
        };
        prev = cur;
    }
    2.0 * total
}

/// `√⟨ln²|H|²⟩`, rounded up by the quadrature error.
pub fn log_spectrum_rms(channel: &ChannelResponse) -> Result<f64> {
    let tol = Tolerance {
        abs: 1e-12,
        rel: 1e-10,
        max_intervals: 20_000,
    };
    let r = integrate(
        |th| {
            let p = channel.transfer_power(th);
            let l = p.max(f64::MIN_POSITIVE).ln();
            l * l
        },
        &uniform_breakpoints(0.0, PI, PI / 64.0),
        tol,
    )?;
    Ok(((r.value + r.error) / PI).sqrt())
}

/// Upper bound on `SNR_DFE` at `ρ`.
pub fn snr_dfe_upper(channel: &ChannelResponse, rho: f64) -> Result<SnrUpper> {
    let h = channel.normalized();
    let sp = spectral_summary(&h, rho)?;
    let g = sp.g_zf_dfe;
    if sp.g_zf_le > 0.0 {
        return Ok(SnrUpper {
            value: rho * g + g / sp.g_zf_le,
            null_branch: false,
            omega: 0.0,
            c1: 0.0,
        });
    }
    let omega = low_gain_measure(&h, rho.powf(-0.5));
    let c1 = log_spectrum_rms(&h)?;
    Ok(SnrUpper {
        value: rho * g * (1.0 + rho.powf(-0.5)) * ((omega / (2.0 * PI)).sqrt() * c1).exp(),
        null_branch: true,
        omega,
        c1,
    })
}

/// Natural log of [`sl_gap_lower`].
pub fn ln_sl_gap_lower(channel: &ChannelResponse, x: &InputDistribution, rho: f64) -> Result<f64> {
    if !(rho > 4.0) {
        return Err(Error::SnrTooLow(format!("need ρ > 4 (2√(N₀/P_x) < 1), got {rho}")));
    }
    let snr = snr_dfe_upper(channel, rho)?.value;
    let d = x.normalized().d_min();
    Ok((2.0 * x.p_v1()).ln() + ln_q_integral((d / 2.0).powi(2) * snr))
}

/// `2p(v₁)·q_integral((d_min/2)²·SNR⁺)` with `SNR⁺ ≥ SNR_DFE`: a lower bound
/// on `H(x₀) − I_SL`.
pub fn sl_gap_lower(channel: &ChannelResponse, x: &InputDistribution, rho: f64) -> Result<f64> {
    Ok(ln_sl_gap_lower(channel, x, rho)?.exp())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossoverRow {
    pub rho: f64,
    pub ln_upper: f64,
    /// `None` where the lower bound is not available (`ρ ≤ 4`).
    pub ln_lower: Option<f64>,
    pub certified: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossoverTable {
    pub k_prime: f64,
    pub delta_min_sq: f64,
    pub g_zf_dfe: f64,
    pub rows: Vec<CrossoverRow>,
    pub first_crossing: Option<f64>,
}

impl CrossoverTable {
    pub fn crossing(&self) -> Result<f64> {
        self.first_crossing.ok_or(Error::NoCrossingInGrid)
    }
}

/// Evaluates both bounds on a grid; a row is certified when the upper bound
/// on `H − 𝓘` falls below the lower bound on `H − I_SL`.
pub fn crossover_probe(channel: &ChannelResponse, x: &InputDistribution, rho_grid: &[f64], k_prime: f64) -> Result<CrossoverTable> {
    check_k_prime(k_prime)?;
    let gap = exponent_gap(channel, x)?;
    let mut rows = Vec::with_capacity(rho_grid.len());
    for &rho in rho_grid {
        let ln_upper = ln_fano(ln_error_probability(gap.delta_min_sq, x, rho, k_prime), x.len());
        let ln_lower = match ln_sl_gap_lower(channel, x, rho) {
            Ok(v) => Some(v),
            Err(Error::SnrTooLow(_)) => None,
            Err(e) => return Err(e),
        };
        rows.push(CrossoverRow {
            rho,
            ln_upper,
            ln_lower,
            certified: ln_lower.is_some_and(|l| ln_upper < l),
        });
    }
    let first_crossing = rows.iter().find(|r| r.certified).map(|r| r.rho);
    Ok(CrossoverTable {
        k_prime,
        delta_min_sq: gap.delta_min_sq,
        g_zf_dfe: gap.g_zf_dfe,
        rows,
        first_crossing,
    })
}
