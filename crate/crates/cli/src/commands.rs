use crate::config::{db_to_linear, ExperimentConfig};
use crate::output::{bits, num, write_json, Table};
use crate::{CliError, EstimatorArg};
use isi_core::bounds::{bound_report, BoundOptions, ImmseMethod};
use isi_core::equalizer::{closed_form_from_spectral, default_half_len, design_mmse_dfe, summarize};
use isi_core::highsnr::{crossover_probe, exponent_gap_with, ExponentGap};
use isi_core::rate_sim::{estimate_rate, Estimator, SimOptions};
use isi_core::scalar::mutual_info;
use isi_core::{spectral_summary, ChannelResponse, InputDistribution};
use rayon::prelude::*;
use serde::Serialize;
use std::path::PathBuf;

/// Desk-scale simulation defaults.
pub const DEFAULT_N_SYMBOLS: u64 = 10_000_000;
pub const DEFAULT_N_SEEDS: u64 = 10;
pub const DEFAULT_K_PRIME: f64 = 1.0;
/// Half-width of reported Monte-Carlo intervals, in standard errors.
pub const CI_SIGMAS: f64 = 3.0;

fn input_or_bpsk(cfg: &ExperimentConfig) -> Result<InputDistribution, CliError> {
    if cfg.input.is_none() {
        log::info!("no input given, using bpsk");
        return Ok(InputDistribution::bpsk());
    }
    cfg.input()
}

pub fn bound_options(cfg: &ExperimentConfig) -> BoundOptions {
    let d = BoundOptions::default();
    BoundOptions {
        half_len: cfg.half_len,
        budget: cfg.budget.map_or(d.budget, u128::from),
        mc_samples: cfg.n_samples.unwrap_or(d.mc_samples),
        seed: cfg.seeds.as_ref().and_then(|s| s.first().copied()).unwrap_or(d.seed),
    }
}

/// Evaluates `f` at every grid point in parallel; results come back in grid order.
pub fn sweep<T: Send>(grid: &[f64], f: impl Fn(f64) -> Result<T, CliError> + Sync) -> Result<Vec<T>, CliError> {
    grid.par_iter().map(|&db| f(db).map_err(|e| e.at(db))).collect()
}

pub fn analyze(cfg: &ExperimentConfig, out: Option<PathBuf>) -> Result<(), CliError> {
    let h = cfg.channel()?;
    let x = input_or_bpsk(cfg)?;
    let grid = cfg.snr_grid()?;
    let rows = sweep(&grid, |db| {
        let rho = db_to_linear(db) / x.power();
        let sp = spectral_summary(&h, rho)?;
        let cf = closed_form_from_spectral(&sp)?;
        Ok(vec![
            num(db),
            num(sp.snr_le),
            num(sp.snr_dfe),
            num(sp.snr_zf_dfe),
            num(sp.g_zf_dfe),
            num(sp.g_zf_le),
            num(cf.eps0),
            num(cf.eps1),
            num(cf.beta1_sq),
            num(bits(0.5 * sp.gaussian_rate)),
            num(bits(mutual_info(&x, sp.snr_dfe_excess)?)),
            num(bits(mutual_info(&x, sp.snr_zf_dfe)?)),
        ])
    })?;
    let mut t = Table::new(vec![
        "snr_db",
        "snr_le",
        "snr_dfe",
        "snr_zf_dfe",
        "g_zf_dfe",
        "g_zf_le",
        "eps0",
        "eps1",
        "beta1_sq",
        "gaussian_rate",
        "i_sl",
        "i_sow",
    ]);
    t.rows = rows;
    t.write_to(out.or_else(|| cfg.output.clone()).as_deref())
}

#[derive(Serialize)]
struct DfeReport {
    snr_db: f64,
    rho: f64,
    half_len: usize,
    n_taps: usize,
    snr_unbiased: f64,
    snr_unbiased_truncated: f64,
    snr_dfe_excess: f64,
    summary: isi_core::equalizer::DfeSummary,
    closed_form: isi_core::equalizer::DfeSummary,
}

pub fn dfe(cfg: &ExperimentConfig, half_len: Option<usize>, taps: Option<PathBuf>) -> Result<(), CliError> {
    let h = cfg.channel()?;
    let x = input_or_bpsk(cfg)?;
    let db = cfg.single_snr()?;
    let rho = db_to_linear(db) / x.power();
    let run = || -> Result<_, CliError> {
        let m = half_len.or(cfg.half_len).unwrap_or_else(|| default_half_len(&h));
        let design = design_mmse_dfe(&h, &x, rho, m)?;
        let sp = spectral_summary(&h, rho)?;
        Ok((design, sp))
    };
    let (design, sp) = run().map_err(|e| e.at(db))?;
    let report = DfeReport {
        snr_db: db,
        rho,
        half_len: design.half_len,
        n_taps: design.residual.len(),
        snr_unbiased: design.snr_unbiased,
        snr_unbiased_truncated: design.snr_unbiased_truncated(),
        snr_dfe_excess: sp.snr_dfe_excess,
        summary: summarize(&design, &x),
        closed_form: closed_form_from_spectral(&sp).map_err(|e| CliError::from(e).at(db))?,
    };
    if let Some(p) = taps {
        let mut t = Table::new(vec!["k", "alpha"]);
        t.rows = design
            .residual
            .iter()
            .enumerate()
            .map(|(k, a)| vec![(k + 1).to_string(), num(*a)])
            .collect();
        t.write_to(Some(&p))?;
    }
    write_json(&report, None)
}

pub fn bounds(cfg: &ExperimentConfig, out: Option<PathBuf>) -> Result<(), CliError> {
    let h = cfg.channel()?;
    let x = cfg.input()?;
    let grid = cfg.snr_grid()?;
    let opts = bound_options(cfg);
    let rows = sweep(&grid, |db| {
        let r = bound_report(&h, &x, db_to_linear(db) / x.power(), &opts)?;
        let (method, half) = match r.i_mmse.method {
            ImmseMethod::Exact => ("exact", r.i_mmse.error),
            ImmseMethod::Mc => ("mc", CI_SIGMAS * r.i_mmse.error),
        };
        Ok(vec![
            num(db),
            num(r.rho),
            num(bits(r.i_sow)),
            num(bits(r.i_sl)),
            num(bits(r.ie_simple)),
            num(bits(r.ie_opt.value)),
            num(r.ie_opt.gamma1),
            num(r.ie_opt.gamma2),
            r.ie_opt.grid_fallback.to_string(),
            num(bits(r.ie_conj)),
            num(bits(r.i_mmse.value)),
            method.to_string(),
            num(bits(r.i_mmse.error)),
            num(bits(r.i_mmse.value - half)),
            num(bits(r.i_mmse.value + half)),
            r.i_mmse.components.map_or(String::new(), |c| c.to_string()),
            num(bits(r.gap_series)),
            num(bits(r.gaussian_rate)),
            num(bits(r.entropy)),
        ])
    })?;
    let mut t = Table::new(vec![
        "snr_db",
        "rho",
        "i_sow",
        "i_sl",
        "ie_simple",
        "ie_opt",
        "ie_opt_gamma1",
        "ie_opt_gamma2",
        "ie_opt_grid_fallback",
        "ie_conj_conjectured",
        "i_mmse",
        "i_mmse_method",
        "i_mmse_error",
        "i_mmse_ci_low",
        "i_mmse_ci_high",
        "i_mmse_components",
        "gap_series",
        "gaussian_rate",
        "entropy",
    ]);
    t.rows = rows;
    t.write_to(out.or_else(|| cfg.output.clone()).as_deref())
}

#[derive(Serialize)]
struct SimReport {
    snr_db: f64,
    value_bits: f64,
    stderr_bits: f64,
    bias_bound_bits: f64,
    estimator: Estimator,
    n: u64,
    seeds: Vec<u64>,
    per_seed_bits: Vec<f64>,
}

pub fn simulate(
    cfg: &ExperimentConfig,
    renorm_period: usize,
    estimator: EstimatorArg,
    per_seed_csv: Option<PathBuf>,
) -> Result<(), CliError> {
    let h = cfg.channel()?;
    let x = cfg.input()?;
    let db = cfg.single_snr()?;
    if renorm_period == 0 {
        return Err(CliError::Config("renorm period must be positive".into()));
    }
    let n = cfg.n_symbols.unwrap_or(DEFAULT_N_SYMBOLS);
    let seeds = cfg.seeds.clone().unwrap_or_else(|| (1..=DEFAULT_N_SEEDS).collect());
    let opts = SimOptions {
        renorm_period,
        estimator: match estimator {
            EstimatorArg::OutputEntropy => Estimator::OutputEntropy,
            EstimatorArg::Equivocation => Estimator::Equivocation,
        },
        ..SimOptions::default()
    };
    let r = estimate_rate(&h, &x, db_to_linear(db) / x.power(), n, &seeds, opts).map_err(|e| CliError::from(e).at(db))?;
    let per_seed_bits: Vec<f64> = r.per_seed.iter().map(|v| bits(*v)).collect();
    if let Some(p) = per_seed_csv {
        let mut t = Table::new(vec!["seed", "value_bits"]);
        t.rows = r
            .seeds
            .iter()
            .zip(&per_seed_bits)
            .map(|(s, v)| vec![s.to_string(), num(*v)])
            .collect();
        t.write_to(Some(&p))?;
    }
    write_json(
        &SimReport {
            snr_db: db,
            value_bits: bits(r.value),
            stderr_bits: bits(r.std_error),
            bias_bound_bits: bits(r.bias_bound),
            estimator: opts.estimator,
            n,
            seeds: r.seeds,
            per_seed_bits,
        },
        None,
    )
}

#[derive(Serialize)]
struct DminReport {
    /// Taps after unit-energy normalization and conversion to minimum phase.
    min_phase_taps: Vec<f64>,
    #[serde(flatten)]
    gap: ExponentGap,
}

pub fn dmin(cfg: &ExperimentConfig, max_len: Option<usize>) -> Result<(), CliError> {
    let h = cfg.channel()?;
    let x = input_or_bpsk(cfg)?;
    let mp = h.normalized().to_minimum_phase()?;
    let gap = exponent_gap_with(&h, &x, max_len)?;
    write_json(
        &DminReport {
            min_phase_taps: mp.taps().to_vec(),
            gap,
        },
        None,
    )
}

#[derive(Serialize)]
struct ProbeRow {
    snr_db: f64,
    rho: f64,
    /// Upper bound on `H − 𝓘`.
    upper_bits: f64,
    ln_upper_nats: f64,
    /// Lower bound on `H − I_SL`; absent where it is not available.
    lower_bits: Option<f64>,
    ln_lower_nats: Option<f64>,
    certified: bool,
}

#[derive(Serialize)]
struct ProbeReport {
    k_prime: f64,
    note: &'static str,
    delta_min_sq: f64,
    g_zf_dfe: f64,
    first_crossing_db: Option<f64>,
    rows: Vec<ProbeRow>,
}

const K_PRIME_NOTE: &str = "absolute values of the upper bound depend on K′; only the exponents are K′-free";

pub fn highsnr_probe(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let h: ChannelResponse = cfg.channel()?;
    let x = input_or_bpsk(cfg)?;
    let grid = cfg.snr_grid()?;
    let k_prime = cfg.k_prime.unwrap_or_else(|| {
        log::warn!("K′ not given, using {DEFAULT_K_PRIME}; {K_PRIME_NOTE}");
        DEFAULT_K_PRIME
    });
    let rhos: Vec<f64> = grid.iter().map(|db| db_to_linear(*db) / x.power()).collect();
    let table = crossover_probe(&h, &x, &rhos, k_prime)?;
    let to_db = |rho: f64| grid[rhos.iter().position(|r| *r == rho).unwrap_or(0)];
    let rows = table
        .rows
        .iter()
        .zip(&grid)
        .map(|(r, db)| ProbeRow {
            snr_db: *db,
            rho: r.rho,
            upper_bits: bits(r.ln_upper.exp()),
            ln_upper_nats: r.ln_upper,
            lower_bits: r.ln_lower.map(|v| bits(v.exp())),
            ln_lower_nats: r.ln_lower,
            certified: r.certified,
        })
        .collect();
    write_json(
        &ProbeReport {
            k_prime,
            note: K_PRIME_NOTE,
            delta_min_sq: table.delta_min_sq,
            g_zf_dfe: table.g_zf_dfe,
            first_crossing_db: table.first_crossing.map(to_db),
            rows,
        },
        None,
    )
}
