//! Command-line entry point. Exit codes: 0 success, 2 validation failure,
//! 3 numerical failure, 4 configuration or usage error.

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use climpanel::commands::report::Scope;
use climpanel::commands::{aggregate, fit, pipeline, project, report, select_spec, validate};
use climpanel::config::RcpChoice;
use climpanel::error::Result;
use climpanel::synth;
use climpanel_core::projection::GrowthKind;

#[derive(Parser)]
#[command(
    name = "climpanel",
    version,
    about = "Panel climate econometrics: weather aggregation, fixed-effects estimation, and growth projections"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Aggregate gridded weather into an annual province panel.
    Aggregate {
        /// Directory holding hourly_temperature.csv and daily_precipitation.csv.
        #[arg(long)]
        grid: PathBuf,
        /// Directory holding cell_weights.csv and population_weights.csv.
        #[arg(long)]
        weights: PathBuf,
        /// Outcome table supplying growth and region columns.
        #[arg(long)]
        outcomes: Option<PathBuf>,
        /// Candidate bin table; adds candidate day-count columns.
        #[arg(long)]
        candidates: Option<PathBuf>,
        /// Spec file carrying regressor-schema overrides.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Year span first:last when no outcomes file pins the rows.
        #[arg(long, value_parser = parse_years)]
        years: Option<(i32, i32)>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate the configured specification on a panel file.
    Fit {
        #[arg(long)]
        panel: PathBuf,
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score candidate bin specifications by cross-validation.
    SelectSpec {
        #[arg(long)]
        panel: PathBuf,
        #[arg(long)]
        candidates: PathBuf,
        /// Last year of the training window for the temporal split.
        #[arg(long)]
        split: Option<i32>,
        /// Temperature that the omitted bin must contain.
        #[arg(long)]
        pivot: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Project province growth under climate scenarios.
    Project {
        #[arg(long)]
        panel: PathBuf,
        /// Directory of <model>_<rcp>.csv projected-regressor files.
        #[arg(long)]
        climate_dir: PathBuf,
        #[arg(long)]
        growth: PathBuf,
        #[arg(long)]
        spec: PathBuf,
        /// rcp45, rcp85, or all.
        #[arg(long, default_value = "all", value_parser = parse_rcp)]
        rcp: RcpChoice,
        /// Comma-separated growth assumptions: baseline, ssp3, ssp5.
        #[arg(
            long,
            value_delimiter = ',',
            default_value = "baseline",
            value_parser = parse_growth_kind
        )]
        growth_kinds: Vec<GrowthKind>,
        /// Bootstrap draws per cell; 0 projects point estimates only.
        #[arg(long, default_value_t = 0)]
        draws: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = false)]
        bias_correct: bool,
        #[arg(long, default_value_t = false)]
        regime_switching: bool,
        /// Output directory for per-scenario run files.
        #[arg(long)]
        out: PathBuf,
    },
    /// Summarize stored runs into impact distributions.
    Report {
        /// Directory of run files written by project.
        #[arg(long)]
        runs: PathBuf,
        /// Population table for share weights.
        #[arg(long)]
        shares: PathBuf,
        /// gdp (national), grp (regional), or gpp (per province).
        #[arg(long, default_value = "gdp", value_parser = parse_scope)]
        scope: Scope,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a self-consistent synthetic input fixture.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 5)]
        provinces: usize,
        #[arg(long, default_value_t = 30)]
        years: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 0.0494, allow_hyphen_values = true)]
        beta1: f64,
        #[arg(long, default_value_t = -0.0009, allow_hyphen_values = true)]
        beta2: f64,
        #[arg(long, default_value_t = 0.0004, allow_hyphen_values = true)]
        rho: f64,
        /// Scale of the uniform province and year effects.
        #[arg(long, default_value_t = 0.5)]
        fe_scale: f64,
        /// Idiosyncratic noise standard deviation, growth points.
        #[arg(long, default_value_t = 0.3)]
        noise_sd: f64,
        #[arg(long, default_value_t = 2)]
        n_models: usize,
        /// Bootstrap draws written into the generated pipeline config.
        #[arg(long, default_value_t = 50)]
        draws: usize,
    },
    /// Check input files and report every violation found.
    Validate {
        #[arg(long)]
        grid: Option<PathBuf>,
        #[arg(long)]
        weights: Option<PathBuf>,
        #[arg(long)]
        panel: Option<PathBuf>,
        #[arg(long)]
        outcomes: Option<PathBuf>,
        #[arg(long)]
        climate_dir: Option<PathBuf>,
        #[arg(long)]
        growth: Option<PathBuf>,
        #[arg(long)]
        shares: Option<PathBuf>,
        #[arg(long)]
        candidates: Option<PathBuf>,
    },
    /// Run aggregate, fit, select-spec, project, and report end to end.
    Pipeline {
        #[arg(long)]
        config: PathBuf,
    },
}

fn parse_years(raw: &str) -> std::result::Result<(i32, i32), String> {
    let (first, last) = raw
        .split_once(':')
        .ok_or_else(|| format!("expected first:last, got {raw}"))?;
    let first: i32 = first.trim().parse().map_err(|_| format!("bad year {first}"))?;
    let last: i32 = last.trim().parse().map_err(|_| format!("bad year {last}"))?;
    if last < first {
        return Err(format!("year span {first}:{last} is reversed"));
    }
    Ok((first, last))
}

fn parse_rcp(raw: &str) -> std::result::Result<RcpChoice, String> {
    RcpChoice::parse(raw).map_err(|e| e.to_string())
}

fn parse_growth_kind(raw: &str) -> std::result::Result<GrowthKind, String> {
    GrowthKind::parse(raw).map_err(|e| e.to_string())
}

fn parse_scope(raw: &str) -> std::result::Result<Scope, String> {
    Scope::parse(raw).map_err(|e| e.to_string())
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            use clap::error::ErrorKind;
            if matches!(err.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{err}");
                std::process::exit(0);
            }
            eprint!("{err}");
            std::process::exit(4);
        }
    };
    match dispatch(cli.command) {
        Ok(code) => std::process::exit(code),
        Err(err) => {
            eprintln!("error: {err}");
            std::process::exit(err.exit_code());
        }
    }
}

fn dispatch(command: Command) -> Result<i32> {
    match command {
        Command::Aggregate { grid, weights, outcomes, candidates, config, years, out } => {
            let rows = aggregate::run(&aggregate::AggregateArgs {
                grid: &grid,
                weights: &weights,
                outcomes: outcomes.as_deref(),
                candidates: candidates.as_deref(),
                config: config.as_deref(),
                years,
                out: &out,
            })?;
            println!("wrote {}: {rows} rows", out.display());
            Ok(0)
        }
        Command::Fit { panel, spec, out } => {
            let doc = fit::run(&panel, &spec, &out)?;
            println!(
                "wrote {}: {} coefficients, n = {}, within R2 = {:.4}",
                out.display(),
                doc.columns.len(),
                doc.n_obs,
                doc.within_r2
            );
            Ok(0)
        }
        Command::SelectSpec { panel, candidates, split, pivot, out } => {
            let cv = select_spec::run(&select_spec::SelectArgs {
                panel: &panel,
                candidates: &candidates,
                split_year: split,
                pivot,
                out: &out,
            })?;
            println!("wrote {}: winner {}", out.display(), cv.winner_config().label());
            Ok(0)
        }
        Command::Project {
            panel,
            climate_dir,
            growth,
            spec,
            rcp,
            growth_kinds,
            draws,
            seed,
            bias_correct,
            regime_switching,
            out,
        } => {
            let summary = project::run(&project::ProjectArgs {
                panel: &panel,
                climate_dir: &climate_dir,
                growth: &growth,
                spec: &spec,
                rcp,
                growth_kinds: &growth_kinds,
                draws,
                seed,
                bias_correct,
                regime_switching,
                out: &out,
            })?;
            for failure in &summary.failures {
                eprintln!("warning: {failure}");
            }
            println!(
                "wrote {}: {} cells, {} rows, {} files",
                out.display(),
                summary.cells,
                summary.rows,
                summary.files.len()
            );
            Ok(0)
        }
        Command::Report { runs, shares, scope, out } => {
            let rows = report::run(&report::ReportArgs {
                runs: &runs,
                shares: &shares,
                scope,
                out: &out,
            })?;
            println!(
                "wrote {} and {}: {} summary rows",
                out.display(),
                report::plot_path(&out).display(),
                rows.len()
            );
            Ok(0)
        }
        Command::Synth {
            out,
            provinces,
            years,
            seed,
            beta1,
            beta2,
            rho,
            fe_scale,
            noise_sd,
            n_models,
            draws,
        } => {
            let spec = synth::SyntheticSpec {
                n_provinces: provinces,
                n_years: years,
                beta1,
                beta2,
                rho,
                fe_scale,
                noise_sd,
                seed,
                n_models,
                draws,
            };
            let fixture = synth::generate(&spec, &out)?;
            println!(
                "wrote fixture to {} (pipeline config {})",
                out.display(),
                fixture.pipeline_cfg.display()
            );
            Ok(0)
        }
        Command::Validate {
            grid,
            weights,
            panel,
            outcomes,
            climate_dir,
            growth,
            shares,
            candidates,
        } => {
            let args = validate::ValidateArgs {
                grid,
                weights,
                panel,
                outcomes,
                climate_dir,
                growth,
                shares,
                candidates,
            };
            if args.is_empty() {
                return Err(climpanel::error::CliError::config(
                    "validate: no inputs given, nothing to check",
                ));
            }
            let violations = validate::run(&args)?;
            if violations.is_empty() {
                println!("ok");
                Ok(0)
            } else {
                for v in &violations {
                    println!("{v}");
                }
                println!("{} violation(s)", violations.len());
                Ok(2)
            }
        }
        Command::Pipeline { config } => {
            let rep = pipeline::run(&config)?;
            for failure in &rep.projection.failures {
                eprintln!("warning: {failure}");
            }
            if let Some(rows) = rep.panel_rows {
                println!("aggregate: {rows} panel rows");
            }
            println!("fit: {} coefficients", rep.fit_columns);
            if let Some(winner) = &rep.cv_winner {
                println!("select-spec: winner {winner}");
            }
            println!(
                "project: {} cells, {} rows",
                rep.projection.cells, rep.projection.rows
            );
            println!("report: {} summary rows", rep.summary_rows);
            println!("done: {}", rep.out_dir.display());
            Ok(0)
        }
    }
}
