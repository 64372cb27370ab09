//! `entrolab`: runs entropy, transport and heat-kernel checks described by a
//! TOML config and writes machine-readable reports.
//!
//! Exit codes: 0 when every row passes, 1 when some row fails or a numerical
//! step errors, 2 on a configuration or I/O error.

mod checks;
mod config;
mod family;
mod report;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use entrolab::evi::{c0_closed_form, c0_from_kernel_constant, c0_half_line_variant};

use crate::checks::{load_trace, run_checks, sort_rows, CheckRow};
use crate::config::{read_raw, Config, ConfigError};
use crate::report::{all_pass, C0Summary};

#[derive(Parser)]
#[command(name = "entrolab", version, about = "Checks entropy inequalities and heat-flow rigidity on model spaces")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured checks and write report.json and margins.csv.
    Verify { config: PathBuf },
    /// Compute the heat trace from the base point and write trace.csv.
    Trace { config: PathBuf },
    /// Rerun the checks for each value of one parameter and write sweep.csv.
    Sweep {
        config: PathBuf,
        #[arg(long, value_enum)]
        axis: Axis,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
        values: Vec<f64>,
    },
    /// Estimate C₀ from the trace and compare it with the closed forms.
    C0 { config: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum Axis {
    /// Time of every heat-kernel and Gaussian family.
    T,
    /// Measure weight.
    Beta,
    /// Cone radius.
    Rho,
    /// Dimension.
    #[value(name = "N")]
    N,
}

impl Axis {
    fn name(self) -> &'static str {
        match self {
            Axis::T => "t",
            Axis::Beta => "beta",
            Axis::Rho => "rho",
            Axis::N => "N",
        }
    }
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("writing {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

fn prepare_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|source| CliError::Io {
        path: dir.to_path_buf(),
        source,
    })
}

fn io_at(dir: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: dir.to_path_buf(),
        source,
    }
}

fn print_rows(rows: &[CheckRow]) {
    for r in rows {
        println!(
            "{:<4} {:<26} {:<40} param={:<12.6e} margin={:+.6e}",
            if r.pass { "ok" } else { "FAIL" },
            r.name,
            r.subject,
            r.parameter,
            r.margin
        );
    }
    let passed = rows.iter().filter(|r| r.pass).count();
    println!("{passed} of {} rows pass", rows.len());
}

fn verify(path: &Path) -> Result<bool, CliError> {
    let start = Instant::now();
    let cfg = Config::load(path)?;
    let out = run_checks(&cfg)?;
    let dir = cfg.output_dir();
    prepare_dir(&dir)?;
    report::write_report(&dir, &cfg.run_id, &cfg.descriptor, cfg.beta, &out.rows).map_err(io_at(&dir))?;
    report::write_margins(&dir, &out.rows).map_err(io_at(&dir))?;
    if let Some(tr) = &out.trace {
        report::write_trace(&dir, tr).map_err(io_at(&dir))?;
    }
    report::write_timing(&dir, "verify", start.elapsed()).map_err(io_at(&dir))?;
    print_rows(&out.rows);
    Ok(all_pass(&out.rows))
}

fn trace(path: &Path) -> Result<bool, CliError> {
    let start = Instant::now();
    let cfg = Config::load(path)?;
    let Some(tr) = load_trace(&cfg)? else {
        return Err(ConfigError::Invalid {
            key: "grid".into(),
            msg: "the trace verb needs a [grid] section".into(),
        }
        .into());
    };
    let dir = cfg.output_dir();
    prepare_dir(&dir)?;
    match tr {
        Ok(tr) => {
            report::write_trace(&dir, &tr).map_err(io_at(&dir))?;
            report::write_timing(&dir, "trace", start.elapsed()).map_err(io_at(&dir))?;
            println!("{} points written to {}", tr.len(), dir.join("trace.csv").display());
            Ok(true)
        }
        Err(e) => {
            eprintln!("trace failed: {e}");
            Ok(false)
        }
    }
}

fn c0(path: &Path) -> Result<bool, CliError> {
    let start = Instant::now();
    let cfg = Config::load(path)?;
    let tr = match load_trace(&cfg)? {
        Some(Ok(tr)) => tr,
        Some(Err(e)) => {
            eprintln!("trace failed: {e}");
            return Ok(false);
        }
        None => {
            return Err(ConfigError::Invalid {
                key: "grid".into(),
                msg: "the c0 verb needs a [grid] section".into(),
            }
            .into())
        }
    };
    let summary = C0Summary {
        run_id: cfg.run_id.clone(),
        estimate: tr.c0_estimate.value,
        exponent_used: tr.c0_estimate.exponent_used,
        residual: tr.c0_estimate.residual,
        inf_over_grid: tr.c0_inf,
        closed_form: c0_closed_form(&cfg.space),
        from_kernel_constant: c0_from_kernel_constant(&cfg.space),
        half_line_variant: c0_half_line_variant(&cfg.space),
    };
    let dir = cfg.output_dir();
    prepare_dir(&dir)?;
    report::write_c0(&dir, &summary).map_err(io_at(&dir))?;
    report::write_timing(&dir, "c0", start.elapsed()).map_err(io_at(&dir))?;
    println!("C0 estimate     {:.12e} (residual {:.3e})", summary.estimate, summary.residual);
    println!("inf over grid   {:.12e}", summary.inf_over_grid);
    let show = |label: &str, v: Option<f64>| {
        if let Some(v) = v {
            println!("{label:<15} {v:.12e}");
        }
    };
    show("closed form", summary.closed_form);
    show("kernel form", summary.from_kernel_constant);
    show("half-line alt", summary.half_line_variant);
    Ok(true)
}

fn sweep(path: &Path, axis: Axis, values: &[f64]) -> Result<bool, CliError> {
    let start = Instant::now();
    let (raw, run_id, base_dir) = read_raw(path)?;
    let mut results = Vec::with_capacity(values.len());
    let mut out_dir = None;
    for &v in values {
        let mut raw = raw.clone();
        match axis {
            Axis::Beta => raw.measures.beta = Some(v),
            Axis::Rho => raw.space.rho = Some(v),
            Axis::N => raw.space.n = v,
            Axis::T => {}
        }
        let mut cfg = Config::from_raw(raw, run_id.clone(), &base_dir)?;
        if let Axis::T = axis {
            for (label, fam) in &mut cfg.families {
                *fam = family::with_time(fam, v);
                *label = fam.to_string();
            }
        }
        let mut rows = run_checks(&cfg)?.rows;
        sort_rows(&mut rows);
        out_dir.get_or_insert_with(|| cfg.output_dir());
        results.push((v, rows));
    }
    let dir = out_dir.unwrap_or_else(|| PathBuf::from("."));
    prepare_dir(&dir)?;
    report::write_sweep(&dir, axis.name(), &results).map_err(io_at(&dir))?;
    report::write_timing(&dir, "sweep", start.elapsed()).map_err(io_at(&dir))?;
    for (v, rows) in &results {
        println!("{} = {v}", axis.name());
        print_rows(rows);
    }
    Ok(results.iter().all(|(_, rows)| all_pass(rows)))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.cmd {
        Command::Verify { config } => verify(config),
        Command::Trace { config } => trace(config),
        Command::Sweep { config, axis, values } => sweep(config, *axis, values),
        Command::C0 { config } => c0(config),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
