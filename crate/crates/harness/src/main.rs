use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use mre_bench::archive::{FieldArchive, FieldKind};
use mre_bench::config::parse_config;
use mre_bench::scenario::{run_scenario, SOFTWARE, VERSION};
use mre_bench::slice::{elastogram_slice, history_slice, spectral_slice, write_table, Plane};
use mre_bench::sweep::{run_resolution_sweep, SweepOptions};
use mre_bench::{HarnessError, Result};
use mre_core::inversion::{curl_filter, extract_harmonic, invert, laplacian, StencilKind};

#[derive(Parser)]
#[command(name = "mrebench", version, about = "Forward MRE simulation, direct inversion and resolution sweeps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Stencil {
    Standard,
    Nested,
}

impl From<Stencil> for StencilKind {
    fn from(s: Stencil) -> Self {
        match s {
            Stencil::Standard => StencilKind::Standard,
            Stencil::Nested => StencilKind::Nested,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Axis {
    X,
    Y,
    Z,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario: forward solve, inversion, report.
    Run {
        config: PathBuf,
        /// Output directory; overrides `output_dir` in the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a scenario over node and samples-per-period ladders.
    Sweep {
        config: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        nodes: Vec<usize>,
        #[arg(long, value_delimiter = ',', required = true)]
        tsamples: Vec<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Permit grids above the desk-scale cap.
        #[arg(long)]
        allow_large: bool,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Invert a displacement-history or spectral archive.
    Invert {
        archive: PathBuf,
        #[arg(long, value_enum, default_value = "nested")]
        stencil: Stencil,
        /// Uniform density, kg/m^3.
        #[arg(long, default_value_t = 1000.0)]
        rho: f64,
        #[arg(long)]
        curl: bool,
        /// Output stem; defaults to `<archive dir>/elastogram-<stencil>`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write one grid plane of an archive as CSV.
    ExportSlice {
        archive: PathBuf,
        #[arg(long, value_enum)]
        axis: Axis,
        #[arg(long)]
        index: usize,
        /// History sample; defaults to the last one.
        #[arg(long)]
        sample: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the software version.
    Version,
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { config, out } => {
            let cfg = parse_config(&config)?;
            let dir = out
                .or_else(|| cfg.output_dir.clone())
                .unwrap_or_else(|| PathBuf::from("runs").join(&cfg.name));
            let (output, _) = run_scenario(&cfg, &dir)?;
            print!("{}", output.report.table());
            if !output.report.steady {
                eprintln!("warning: drive harmonic not yet steady; consider more periods");
            }
            println!("artifacts: {}", dir.display());
        }
        Command::Sweep { config, nodes, tsamples, out, allow_large, workers } => {
            let cfg = parse_config(&config)?;
            let mut opts = SweepOptions::new(nodes, tsamples);
            opts.allow_large = allow_large;
            opts.workers = workers;
            opts.out_dir = out.or_else(|| Some(PathBuf::from("runs").join(format!("{}-sweep", cfg.name))));
            let result = run_resolution_sweep(&cfg, &opts)?;
            print!("{}", result.heatmap_csv());
            for c in result.cells.iter().filter(|c| c.skipped.is_some()) {
                eprintln!("skipped n={} t={}: {}", c.nodes, c.steps_per_period, c.skipped.as_deref().unwrap_or(""));
            }
            if let Some(dir) = &opts.out_dir {
                println!("tables: {}", dir.display());
            }
        }
        Command::Invert { archive, stencil, rho, curl, out } => {
            let a = FieldArchive::read(&archive)?;
            let spectral = match a.meta.kind {
                FieldKind::DisplacementHistory => {
                    let h = a.to_history()?;
                    extract_harmonic(&h, 2.0 * std::f64::consts::PI * h.drive_frequency)?
                }
                FieldKind::SpectralField => a.to_spectral()?,
                FieldKind::Elastogram => {
                    return Err(HarnessError::Archive("cannot invert an elastogram archive".into()))
                }
            };
            let field = if curl { curl_filter(&spectral)? } else { spectral };
            let kind = StencilKind::from(stencil);
            let lap = laplacian(&field, kind);
            let mut e = invert(&field, &lap, &vec![rho; field.grid.node_count()], None)?;
            e.stencil = Some(kind);
            let stem = out.unwrap_or_else(|| {
                let name = match kind {
                    StencilKind::Standard => "elastogram-standard",
                    StencilKind::Nested => "elastogram-nested",
                };
                archive.with_file_name(name)
            });
            let dir = stem.parent().map(PathBuf::from).unwrap_or_default();
            let name = stem.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "elastogram".into());
            let (bin, _) = FieldArchive::from_elastogram(&e)?.write(&dir, &name)?;
            println!("{} valid voxels of {}; wrote {}", e.valid_count(), e.values.len(), bin.display());
        }
        Command::ExportSlice { archive, axis, index, sample, out } => {
            let a = FieldArchive::read(&archive)?;
            let plane = Plane { axis: axis as usize, index };
            let text = match a.meta.kind {
                FieldKind::Elastogram => elastogram_slice(&a.to_elastogram()?, plane)?,
                FieldKind::SpectralField => spectral_slice(&a.to_spectral()?, plane)?,
                FieldKind::DisplacementHistory => {
                    let h = a.to_history()?;
                    let s = sample.unwrap_or(h.snapshots.len().saturating_sub(1));
                    history_slice(&h, s, plane)?
                }
            };
            write_table(&out, &text)?;
            println!("wrote {}", out.display());
        }
        Command::Version => println!("{SOFTWARE} {VERSION}"),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
