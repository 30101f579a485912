//! Data behind the figures: one CSV, a manifest and a timing file each.
//!
//! The manifest holds only inputs and tolerances so that it is byte-stable;
//! wall-clock times go to the separate timing file.

use crate::commands::{sweep, CI_SIGMAS};
use crate::config::{db_to_linear, parse_snr, ExperimentConfig};
use crate::output::{bits, num, write_json, Table};
use crate::CliError;
use isi_core::bounds::{
    i_mmse_auto, i_mmse_exact_with, i_mmse_mc, ie_conj_from, ie_opt_from, ie_simple_from, slc_gap_series, BoundOptions,
    ImmseMethod, DEFAULT_BUDGET, PRUNE_MASS,
};
use isi_core::equalizer::{closed_form_from_spectral, default_half_len, design_mmse_dfe, summarize, DfeDesign};
use isi_core::rate_sim::{estimate_rate, SimOptions};
use isi_core::scalar::mutual_info;
use isi_core::{spectral_summary, ChannelResponse, InputDistribution};
use serde::Serialize;
use std::path::Path;
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FigureName {
    Fig1a,
    Fig1b,
    Fig2a,
    Fig2b,
    Fig3,
    Fig4,
}

impl FigureName {
    fn stem(self) -> &'static str {
        match self {
            FigureName::Fig1a => "fig1a",
            FigureName::Fig1b => "fig1b",
            FigureName::Fig2a => "fig2a",
            FigureName::Fig2b => "fig2b",
            FigureName::Fig3 => "fig3",
            FigureName::Fig4 => "fig4",
        }
    }

    fn defaults(self) -> (&'static str, &'static str, &'static str) {
        match self {
            FigureName::Fig1a => ("channel_b", "trinary(0.01)", "-30:-14:2"),
            FigureName::Fig1b => ("channel_b", "skewed_binary(0.002)", "-30:-14:2"),
            FigureName::Fig2a => ("channel_b", "trinary(0.01)", "-20:-10:2"),
            FigureName::Fig2b => ("channel_b", "skewed_binary(0.002)", "-20:-10:2"),
            FigureName::Fig3 => ("jeong", "bpsk", "-15:12:3"),
            FigureName::Fig4 => ("jeong_spaced", "bpsk", "-15:12:3"),
        }
    }
}

/// Simulation profiles for the medium-SNR figures: (symbols per seed, seeds).
pub const DESK_PROFILE: (u64, u64) = (10_000_000, 10);
pub const FULL_PROFILE: (u64, u64) = (500_000_000, 20);
pub const DEFAULT_MC_SAMPLES: u64 = 100_000;

#[derive(Serialize)]
struct Manifest {
    figure: FigureName,
    csv: String,
    units: &'static str,
    channel: Vec<f64>,
    normalize: bool,
    input_atoms: Vec<f64>,
    input_probs: Vec<f64>,
    snr_db: Vec<f64>,
    columns: Vec<&'static str>,
    profile: Option<&'static str>,
    seeds: Vec<u64>,
    n_symbols: Option<u64>,
    mc_samples: Option<u64>,
    budget: Option<u64>,
    tolerances: Tolerances,
}

#[derive(Serialize)]
struct Tolerances {
    prune_mass: f64,
    ci_sigmas: f64,
    dfe_relative_snr_gap: f64,
    residual_tail_energy: f64,
}

#[derive(Serialize)]
struct Timing {
    figure: FigureName,
    total_seconds: f64,
}

struct Setup {
    h: ChannelResponse,
    x: InputDistribution,
    grid: Vec<f64>,
}

fn setup(name: FigureName, cfg: &ExperimentConfig) -> Result<Setup, CliError> {
    let (ch, input, grid) = name.defaults();
    let mut cfg = cfg.clone();
    cfg.channel.get_or_insert(crate::config::ChannelSpec::Named(ch.into()));
    cfg.input.get_or_insert(crate::config::InputSpec::Named(input.into()));
    let grid = match cfg.snr_db {
        Some(_) => cfg.snr_grid()?,
        None => parse_snr(grid)?,
    };
    Ok(Setup {
        h: cfg.channel()?,
        x: cfg.input()?,
        grid,
    })
}

fn design(cfg: &ExperimentConfig, s: &Setup, rho: f64) -> Result<DfeDesign, CliError> {
    let m = cfg.half_len.unwrap_or_else(|| default_half_len(&s.h));
    Ok(design_mmse_dfe(&s.h, &s.x, rho, m)?)
}

pub fn run_figure(name: FigureName, cfg: &ExperimentConfig, out_dir: &Path, full: bool) -> Result<(), CliError> {
    let start = Instant::now();
    let s = setup(name, cfg)?;
    std::fs::create_dir_all(out_dir)?;
    let mut manifest = Manifest {
        figure: name,
        csv: format!("{}.csv", name.stem()),
        units: "rates and gaps in bits per symbol; eps0 and snr are linear",
        channel: s.h.taps().to_vec(),
        normalize: cfg.normalize,
        input_atoms: s.x.atoms().to_vec(),
        input_probs: s.x.probs().to_vec(),
        snr_db: s.grid.clone(),
        columns: Vec::new(),
        profile: None,
        seeds: Vec::new(),
        n_symbols: None,
        mc_samples: None,
        budget: None,
        tolerances: Tolerances {
            prune_mass: PRUNE_MASS,
            ci_sigmas: CI_SIGMAS,
            dfe_relative_snr_gap: 1e-10,
            residual_tail_energy: isi_core::equalizer::TRUNCATION_TAIL,
        },
    };
    let budget = cfg.budget.map_or(DEFAULT_BUDGET, u128::from);
    let table = match name {
        FigureName::Fig1a | FigureName::Fig1b => {
            manifest.budget = Some(budget as u64);
            low_snr_gap(cfg, &s, budget)?
        }
        FigureName::Fig2a | FigureName::Fig2b => {
            let (n, k) = if full { FULL_PROFILE } else { DESK_PROFILE };
            let n = cfg.n_symbols.unwrap_or(n);
            let seeds = cfg.seeds.clone().unwrap_or_else(|| (1..=k).collect());
            let mc = cfg.n_samples.unwrap_or(DEFAULT_MC_SAMPLES);
            manifest.profile = Some(if full { "full" } else { "desk" });
            manifest.seeds = seeds.clone();
            manifest.n_symbols = Some(n);
            manifest.mc_samples = Some(mc);
            manifest.budget = Some(budget as u64);
            medium_snr(cfg, &s, n, &seeds, mc, budget)?
        }
        FigureName::Fig3 | FigureName::Fig4 => {
            let mc = cfg.n_samples.unwrap_or(DEFAULT_MC_SAMPLES);
            let seed = cfg.seeds.as_ref().and_then(|v| v.first().copied()).unwrap_or(1);
            manifest.seeds = vec![seed];
            manifest.mc_samples = Some(mc);
            bound_curves(cfg, &s, mc, seed)?
        }
    };
    manifest.columns = table.header.clone();
    table.write_to(Some(&out_dir.join(&manifest.csv)))?;
    write_json(&manifest, Some(&out_dir.join(format!("{}.manifest.json", name.stem()))))?;
    write_json(
        &Timing {
            figure: name,
            total_seconds: start.elapsed().as_secs_f64(),
        },
        Some(&out_dir.join(format!("{}.timing.json", name.stem()))),
    )
}

/// Exact `I_MMSE − I_SL` against its small-`ε₀` series.
fn low_snr_gap(cfg: &ExperimentConfig, s: &Setup, budget: u128) -> Result<Table, CliError> {
    let rows = sweep(&s.grid, |db| {
        let rho = db_to_linear(db) / s.x.power();
        let d = design(cfg, s, rho)?;
        let summary = summarize(&d, &s.x);
        let e = i_mmse_exact_with(&d, &s.x, budget, PRUNE_MASS)?;
        Ok(vec![
            num(db),
            num(summary.eps0),
            num(bits(e.gap_to_sl)),
            num(bits(e.error)),
            num(bits(slc_gap_series(&summary, &s.x)?)),
            num(bits(e.value)),
            d.residual.len().to_string(),
        ])
    })?;
    let mut t = Table::new(vec!["snr_db", "eps0", "gap_exact", "gap_error", "gap_series", "i_mmse", "n_taps"]);
    t.rows = rows;
    Ok(t)
}

/// `I_MMSE` and `I_SL` against the simulated i.i.d. rate.
fn medium_snr(
    cfg: &ExperimentConfig,
    s: &Setup,
    n: u64,
    seeds: &[u64],
    mc: u64,
    budget: u128,
) -> Result<Table, CliError> {
    let opts = BoundOptions {
        half_len: cfg.half_len,
        budget,
        mc_samples: mc,
        seed: seeds.first().copied().unwrap_or(1),
    };
    let rows = sweep(&s.grid, |db| {
        let rho = db_to_linear(db) / s.x.power();
        let d = design(cfg, s, rho)?;
        let im = i_mmse_auto(&d, &s.x, &opts)?;
        let sp = spectral_summary(&s.h, rho)?;
        let i_sl = mutual_info(&s.x, sp.snr_dfe_excess)?;
        let sim = estimate_rate(&s.h, &s.x, rho, n, seeds, SimOptions::default())?;
        let lo = sim.per_seed.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = sim.per_seed.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(vec![
            num(db),
            num(bits(im.value)),
            num(bits(im.error)),
            match im.method {
                ImmseMethod::Exact => "exact".to_string(),
                ImmseMethod::Mc => "mc".to_string(),
            },
            num(bits(i_sl)),
            num(bits(sim.value)),
            num(bits(sim.std_error)),
            num(bits(lo)),
            num(bits(hi)),
            num(bits(sim.value - i_sl)),
        ])
    })?;
    let mut t = Table::new(vec![
        "snr_db",
        "i_mmse",
        "i_mmse_err",
        "i_mmse_method",
        "i_sl",
        "i_sim",
        "i_sim_se",
        "i_sim_min",
        "i_sim_max",
        "i_sim_minus_i_sl",
    ]);
    t.rows = rows;
    Ok(t)
}

/// Monte-Carlo `I_MMSE` with the closed-form bounds.
fn bound_curves(cfg: &ExperimentConfig, s: &Setup, mc: u64, seed: u64) -> Result<Table, CliError> {
    let hx = s.x.entropy();
    let clamp = |v: f64| v.clamp(0.0, hx);
    let rows = sweep(&s.grid, |db| {
        let rho = db_to_linear(db) / s.x.power();
        let d = design(cfg, s, rho)?;
        let im = i_mmse_mc(&d, &s.x, mc, seed)?;
        let sp = spectral_summary(&s.h, rho)?;
        let cf = closed_form_from_spectral(&sp)?;
        Ok(vec![
            num(db),
            num(bits(im.value)),
            num(bits(im.std_error)),
            num(bits(clamp(mutual_info(&s.x, sp.snr_dfe_excess)?))),
            num(bits(clamp(mutual_info(&s.x, sp.snr_zf_dfe)?))),
            num(bits(clamp(ie_opt_from(&cf, &s.x)?.value))),
            num(bits(clamp(ie_simple_from(&cf, &s.x)?))),
            num(bits(clamp(ie_conj_from(&cf, &s.x)?))),
            num(bits(0.5 * sp.gaussian_rate)),
        ])
    })?;
    let mut t = Table::new(vec![
        "snr_db",
        "i_mmse_mc",
        "i_mmse_se",
        "i_sl",
        "i_sow",
        "ie_opt",
        "ie_simple",
        "ie_conj_conjectured",
        "gaussian_rate",
    ]);
    t.rows = rows;
    Ok(t)
}
