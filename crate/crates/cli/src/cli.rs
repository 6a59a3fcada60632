use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use ndtomo::states::{compare, DensityMatrix};

use crate::config::{self, LoadedConfig};
use crate::error::{CliError, CliResult, Context};
use crate::files::{
    ensure_dir, read_json, read_record, read_table, write_json, write_record, write_table,
};
use crate::plotdata::{
    count_lines, coverage_report, coverage_scatter_table, heatmap_table, tcap_table, wigner_table,
};
use crate::reconstruct::{common_fock, reconstruct};
use crate::report::EntryStatus;
use crate::simulate::simulate;
use crate::sweep::{log_log_slope, sweep_shots, sweep_tcap, TcapPoint};
use crate::table::Table;

#[derive(Debug, Parser)]
#[command(
    name = "ndtomo",
    version,
    about = "Simulate and reconstruct quantum states of oscillators, rings and boxes"
)]
pub struct Cli {
    /// Worker threads for parallel stages (default: one per core).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Record the configured true state at the configured times.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Record file; `.csv` selects CSV, anything else the binary format.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed_override: Option<u64>,
    },
    /// Reconstruct from a record and write the results and a run report.
    Reconstruct {
        #[arg(long)]
        record: PathBuf,
        #[arg(long)]
        config: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed_override: Option<u64>,
    },
    /// Fidelity, trace distance and largest element difference of two states.
    Compare {
        a: PathBuf,
        b: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Emit columnar plot data.
    Plotdata {
        #[command(subcommand)]
        artifact: Plot,
    },
    /// Parameter sweeps.
    Sweep {
        #[command(subcommand)]
        kind: Sweep,
    },
    /// Print the JSON schema of experiment configs.
    Schema,
}

#[derive(Debug, Subcommand)]
pub enum Plot {
    /// `Pr(x, t)` of every record block.
    Heatmap {
        #[arg(long)]
        record: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Wigner function of a saved state or of a config's true state.
    Wigner {
        #[arg(long, conflicts_with = "config", required_unless_present = "config")]
        state: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 5.0)]
        x_max: f64,
        #[arg(long, default_value_t = 64)]
        points: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Phase pairs visited by two oscillators.
    Coverage {
        #[arg(long, value_delimiter = ',', required = true)]
        omegas: Vec<f64>,
        #[arg(long, default_value_t = 500.0)]
        t_max: f64,
        #[arg(long, default_value_t = 20_000)]
        points: usize,
        /// Raster used for the gap estimate.
        #[arg(long, default_value_t = 256)]
        resolution: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Error against Tcap from the JSON written by `sweep tcap`.
    Tcap {
        #[arg(long)]
        sweep: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
pub enum Sweep {
    /// Finite-time ring or box reconstruction at several Tcap values.
    Tcap {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed_override: Option<u64>,
    },
    /// One-mode oscillator reconstruction at several shot counts.
    Shots {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<u64>,
        #[arg(long, default_value_t = 4)]
        repeats: usize,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed_override: Option<u64>,
    },
}

fn load_config(path: &Path, seed_override: Option<u64>) -> CliResult<LoadedConfig> {
    let mut loaded = config::load(path)?;
    if let Some(s) = seed_override {
        loaded.config.seed = s;
    }
    Ok(loaded)
}

pub fn run(cli: Cli) -> CliResult<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("--threads: {e}")))?;
    }
    match cli.command {
        Command::Simulate {
            config,
            out,
            seed_override,
        } => {
            let loaded = load_config(&config, seed_override)?;
            let record = simulate(&loaded)?;
            write_record(&out, &record)?;
            println!(
                "wrote {} ({} blocks, config {})",
                out.display(),
                record.blocks.len(),
                &loaded.hash[..12]
            );
        }
        Command::Reconstruct {
            record,
            config,
            out,
            seed_override,
        } => {
            let loaded = load_config(&config, seed_override)?;
            let rec = read_record(&record)?;
            let art = reconstruct(&rec, &loaded)?;
            ensure_dir(&out)?;
            if let Some(s) = &art.state {
                write_json(&out.join("state.json"), s)?;
            }
            if let Some(p) = &art.partial {
                write_json(&out.join("partial.json"), p)?;
            }
            if let Some(m) = &art.moments {
                write_json(&out.join("moments.json"), m)?;
            }
            for (name, t) in &art.tables {
                write_table(&out.join(name), t)?;
            }
            write_json(&out.join("report.json"), &art.report)?;
            let r = &art.report;
            let unrecoverable = r
                .entries
                .iter()
                .filter(|e| !matches!(e.status, EntryStatus::Known { .. }))
                .count();
            print!(
                "{} on {}: {} entries, max error {:.3e}",
                r.method,
                r.system,
                r.entries.len(),
                r.max_error()
            );
            if unrecoverable > 0 {
                print!(", {unrecoverable} unrecoverable or bounded");
            }
            if let Some(m) = &r.metrics {
                print!(", fidelity {:.6}", m.fidelity);
            }
            println!();
        }
        Command::Compare { a, b, out } => {
            let sa: DensityMatrix = read_json(&a)?;
            let sb: DensityMatrix = read_json(&b)?;
            let metrics = if sa.bases() == sb.bases() {
                compare(&sa, &sb).context("compare")?
            } else {
                let (pa, pb) = common_fock(&sa, &sb)?;
                compare(&pa, &pb).context("compare")?
            };
            let text = serde_json::to_string_pretty(&metrics).expect("metrics serialize");
            println!("{text}");
            if let Some(path) = out {
                write_json(&path, &metrics)?;
            }
        }
        Command::Plotdata { artifact } => plot(artifact)?,
        Command::Sweep { kind } => sweep(kind)?,
        Command::Schema => print!("{}", config::SCHEMA),
    }
    Ok(())
}

fn plot(artifact: Plot) -> CliResult<()> {
    match artifact {
        Plot::Heatmap { record, out } => {
            let t = heatmap_table(&read_record(&record)?)?;
            write_table(&out, &t)?;
            println!("wrote {} ({} rows)", out.display(), t.rows.len());
        }
        Plot::Wigner {
            state,
            config,
            x_max,
            points,
            out,
        } => {
            let rho = match (state, config) {
                (Some(s), _) => read_json::<DensityMatrix>(&s)?,
                (None, Some(c)) => config::load(&c)?.config.build_state()?,
                (None, None) => unreachable!("clap requires one"),
            };
            let t = wigner_table(&rho, x_max, points)?;
            write_table(&out, &t)?;
            println!("wrote {} ({points} x {points})", out.display());
        }
        Plot::Coverage {
            omegas,
            t_max,
            points,
            resolution,
            out,
        } => {
            if omegas.len() != 2 {
                return Err(CliError::Config(format!(
                    "--omegas takes two frequencies, got {}",
                    omegas.len()
                )));
            }
            let t = coverage_scatter_table(&omegas, t_max, points)?;
            write_table(&out, &t)?;
            let report = coverage_report(&omegas, t_max, resolution)?;
            let pair = &report.pairs[0];
            match count_lines(&t) {
                Some(n) => println!(
                    "wrote {}: {n} line segment(s), class {:?}",
                    out.display(),
                    pair.class
                ),
                None => println!(
                    "wrote {}: dense, gap estimate {:.4} at T = {t_max}",
                    out.display(),
                    pair.gap_estimate
                ),
            }
            if let Some(w) = &pair.warning {
                println!("warning: {w}");
            }
        }
        Plot::Tcap { sweep, out } => {
            let pts: Vec<TcapPoint> = read_json(&sweep)?;
            write_table(&out, &tcap_table(&pts))?;
            println!("wrote {} ({} points)", out.display(), pts.len());
        }
    }
    Ok(())
}

fn sweep(kind: Sweep) -> CliResult<()> {
    match kind {
        Sweep::Tcap {
            config,
            values,
            out,
            seed_override,
        } => {
            let loaded = load_config(&config, seed_override)?;
            let pts = sweep_tcap(&loaded, &values)?;
            ensure_dir(&out)?;
            write_json(&out.join("tcap.json"), &pts)?;
            write_table(&out.join("tcap.tsv"), &tcap_table(&pts))?;
            for w in pts.windows(2) {
                println!(
                    "Tcap {} -> {}: error ratio {:.4}",
                    w[0].tcap,
                    w[1].tcap,
                    w[1].error / w[0].error
                );
            }
        }
        Sweep::Shots {
            config,
            values,
            repeats,
            out,
            seed_override,
        } => {
            let loaded = load_config(&config, seed_override)?;
            let pts = sweep_shots(&loaded, &values, repeats)?;
            ensure_dir(&out)?;
            write_json(&out.join("shots.json"), &pts)?;
            let mut t = Table::new(&["shots", "rms_error", "mean_fidelity"]);
            for p in &pts {
                t.push(vec![p.shots as f64, p.rms_error, p.mean_fidelity]);
            }
            write_table(&out.join("shots.tsv"), &t)?;
            if let Some(s) = log_log_slope(&pts) {
                println!("log-log slope {s:.4}");
            }
        }
    }
    Ok(())
}

/// Reads a table written by `plotdata`.
pub fn load_table(path: &Path) -> CliResult<Table> {
    read_table(path)
}
