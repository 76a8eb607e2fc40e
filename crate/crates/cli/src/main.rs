//! Command-line front end for the downlink precoding simulator.
//!
//! Experiments are described by a TOML file (see `configs/`); the flags
//! `--seed`, `--threads`, and `--out` override the corresponding settings
//! without editing the file.

use anyhow::{bail, Context, Result};
use cepsim_core::channel::{draw_channel, snr_to_sigma_w2, stream_rng};
use cepsim_core::detectors::{compute_statistics, write_table_with_statistics};
use cepsim_core::harness::{
    emit, run_bound_census, run_coded, run_uncoded, EmitFormat, ExperimentConfig, PrecoderKind,
    ResultRow,
};
use cepsim_core::polytope::build_polyhedron;
use cepsim_core::precoders::{build_lookup_table, BbConfig, TablePrecoder};
use clap::{Args, Parser, Subcommand, ValueEnum};
use std::io::Write;
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "cepsim",
    about = "Monte Carlo simulator for constant-envelope phase-quantized MMSE precoding",
    version
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Uncoded BER with hard phase detection.
    Uncoded(RunArgs),
    /// Coded BER through the iterative detection-and-decoding receiver.
    Coded(RunArgs),
    /// Average branch-and-bound bound evaluations per solve.
    Bounds(BoundsArgs),
    /// Dump the per-channel lookup table for one channel realization.
    Table(TableArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Experiment description (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the worker thread count.
    #[arg(long)]
    threads: Option<usize>,
    /// Output file (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Output format.
    #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
    format: FormatArg,
}

#[derive(Args)]
struct BoundsArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Sweep the antenna count over an inclusive range `LO:HI` at the
    /// configured (single) SNR instead of sweeping SNR.
    #[arg(long, value_parser = parse_range)]
    sweep_m: Option<(usize, usize)>,
}

#[derive(Args)]
struct TableArgs {
    /// Experiment description (TOML); the channel comes from its seed.
    #[arg(long)]
    config: PathBuf,
    /// Override the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output file.
    #[arg(long)]
    out: PathBuf,
    /// Table file format.
    #[arg(long, value_enum, default_value_t = TableFormatArg::Csv)]
    format: TableFormatArg,
    /// Append the per-user receiver statistics section (CSV only).
    #[arg(long)]
    stats: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum TableFormatArg {
    Csv,
    Binary,
}

fn parse_range(s: &str) -> std::result::Result<(usize, usize), String> {
    let (lo, hi) = s
        .split_once(':')
        .ok_or_else(|| "expected LO:HI".to_string())?;
    let lo = lo.parse().map_err(|e| format!("bad LO: {e}"))?;
    let hi = hi.parse().map_err(|e| format!("bad HI: {e}"))?;
    if lo == 0 || hi < lo {
        return Err("need 0 < LO <= HI".into());
    }
    Ok((lo, hi))
}

fn load_config(path: &PathBuf, seed: Option<u64>, threads: Option<usize>) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    let mut cfg: ExperimentConfig =
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
    if let Some(seed) = seed {
        cfg.master_seed = seed;
    }
    if let Some(threads) = threads {
        cfg.threads = Some(threads);
    }
    Ok(cfg)
}

fn write_rows(rows: &[ResultRow], args: &RunArgs) -> Result<()> {
    let format = match args.format {
        FormatArg::Csv => EmitFormat::Csv,
        FormatArg::Json => EmitFormat::Json,
    };
    match &args.out {
        Some(path) => {
            let mut file = std::fs::File::create(path)
                .with_context(|| format!("creating {}", path.display()))?;
            emit(rows, format, &mut file)?;
            eprintln!("wrote {} rows to {}", rows.len(), path.display());
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            emit(rows, format, &mut stdout)?;
        }
    }
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.cmd {
        Cmd::Uncoded(args) => {
            let cfg = load_config(&args.config, args.seed, args.threads)?;
            let rows = run_uncoded(&cfg)?;
            write_rows(&rows, &args)
        }
        Cmd::Coded(args) => {
            let cfg = load_config(&args.config, args.seed, args.threads)?;
            let rows = run_coded(&cfg)?;
            write_rows(&rows, &args)
        }
        Cmd::Bounds(args) => {
            let cfg = load_config(&args.run.config, args.run.seed, args.run.threads)?;
            match args.sweep_m {
                None => {
                    let rows = run_bound_census(&cfg)?;
                    write_rows(&rows, &args.run)
                }
                Some((lo, hi)) => {
                    if cfg.snr_grid_db.len() != 1 {
                        bail!("--sweep-m needs a single-point snr_grid_db");
                    }
                    let mut lines = vec!["m,mean_bounds,exhaustive".to_string()];
                    for m in lo..=hi {
                        let point = ExperimentConfig { m, ..cfg.clone() };
                        let rows = run_bound_census(&point)?;
                        lines.push(format!(
                            "{m},{},{}",
                            rows[0].mean_bounds_evaluated,
                            rows[0].exhaustive_candidates.unwrap_or(f64::NAN)
                        ));
                    }
                    let text = lines.join("\n") + "\n";
                    match &args.run.out {
                        Some(path) => std::fs::write(path, text)
                            .with_context(|| format!("writing {}", path.display()))?,
                        None => print!("{text}"),
                    }
                    Ok(())
                }
            }
        }
        Cmd::Table(args) => {
            let cfg = load_config(&args.config, args.seed, None)?;
            let precoder = match cfg.precoder {
                PrecoderKind::Mapped => TablePrecoder::Mapped,
                PrecoderKind::BranchAndBound => TablePrecoder::BranchAndBound,
                other => bail!("lookup tables need the mapped or branch-and-bound precoder, got {other:?}"),
            };
            let snr = *cfg
                .snr_grid_db
                .first()
                .context("config needs at least one SNR point")?;
            let sigma_w2 = snr_to_sigma_w2(snr, cfg.e_tx);
            let mut rng = stream_rng(cfg.master_seed, 0);
            let ch = draw_channel(cfg.k, cfg.m, sigma_w2, &mut rng)?;
            let s_alpha = cepsim_core::alphabet::PskAlphabet::data(cfg.alpha_s)?;
            let x_alpha =
                cepsim_core::alphabet::PskAlphabet::transmit(cfg.alpha_x, cfg.m, cfg.e_tx)?;
            let poly = build_polyhedron(cfg.m, cfg.alpha_x)?;
            let table = build_lookup_table(
                &ch,
                &s_alpha,
                &x_alpha,
                &poly,
                precoder,
                cfg.table_budget,
                &BbConfig {
                    max_candidates: cfg.max_candidates,
                    ..BbConfig::default()
                },
            )?;
            let mut file = std::fs::File::create(&args.out)
                .with_context(|| format!("creating {}", args.out.display()))?;
            match args.format {
                TableFormatArg::Csv => {
                    if args.stats {
                        let stats = (0..cfg.k)
                            .map(|u| compute_statistics(&table, &ch, u))
                            .collect::<cepsim_core::Result<Vec<_>>>()?;
                        write_table_with_statistics(&mut file, &table, &stats)?;
                    } else {
                        table.write_csv(&mut file)?;
                    }
                }
                TableFormatArg::Binary => {
                    if args.stats {
                        bail!("statistics sections are only supported for CSV tables");
                    }
                    table.write_binary(&mut file)?;
                }
            }
            file.flush()?;
            eprintln!(
                "wrote {} entries (channel {}) to {}",
                table.entries.len(),
                table.channel_hash,
                args.out.display()
            );
            Ok(())
        }
    }
}
