//! Resolution sweeps over a node ladder and a samples-per-period ladder.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use log::{info, warn};
use mre_core::grid::NodalVectorField;
use mre_core::inversion::SpectralField;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{NodeCount, ScenarioConfig};
use crate::error::{HarnessError, Result};
use crate::scenario::{execute, run_scenario, PhaseTiming, ScenarioReport};

/// Worker-pool size override.
pub const WORKERS_ENV: &str = "MREBENCH_WORKERS";

/// Largest node count per axis run without `allow_large`.
pub const DEFAULT_NODE_CAP: usize = 75;

#[derive(Clone, Debug, PartialEq)]
pub struct SweepOptions {
    pub nodes: Vec<usize>,
    pub tsamples: Vec<usize>,
    pub allow_large: bool,
    pub workers: Option<usize>,
    pub out_dir: Option<PathBuf>,
    /// Bytes available for one job; `None` reads the system.
    pub memory_budget: Option<u64>,
}

impl SweepOptions {
    pub fn new(nodes: Vec<usize>, tsamples: Vec<usize>) -> Self {
        Self { nodes, tsamples, allow_large: false, workers: None, out_dir: None, memory_budget: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub nodes: usize,
    pub steps_per_period: usize,
    pub report: Option<ScenarioReport>,
    pub skipped: Option<String>,
    pub forward: PhaseTiming,
    pub inversion: PhaseTiming,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForwardDifference {
    pub from: usize,
    pub to: usize,
    /// Ladder value held fixed (samples per period or nodes).
    pub at: usize,
    /// `||u_to - u_from|| / ||u_to||` on the coarser node set.
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub nodes: Vec<usize>,
    pub tsamples: Vec<usize>,
    pub cells: Vec<SweepCell>,
    pub spatial: Vec<ForwardDifference>,
    pub temporal: Vec<ForwardDifference>,
}

impl SweepResult {
    pub fn cell(&self, nodes: usize, spp: usize) -> Option<&SweepCell> {
        self.cells.iter().find(|c| c.nodes == nodes && c.steps_per_period == spp)
    }

    /// Mean signed storage error of the first region, per cell, percent.
    pub fn delta_storage(&self, nodes: usize, spp: usize) -> Option<f64> {
        self.cell(nodes, spp)?.report.as_ref().map(|r| r.regions[0].stats.delta_storage)
    }

    pub fn heatmap_csv(&self) -> String {
        let mut s = String::from("nodes,steps_per_period,region,delta_storage,delta_loss,signed_storage,signed_loss\n");
        for c in &self.cells {
            match &c.report {
                Some(r) => {
                    for reg in &r.regions {
                        let st = &reg.stats;
                        writeln!(
                            s,
                            "{},{},{},{:e},{:e},{:e},{:e}",
                            c.nodes, c.steps_per_period, reg.name, st.delta_storage, st.delta_loss, st.signed_storage, st.signed_loss
                        )
                        .expect("string write");
                    }
                }
                None => writeln!(s, "{},{},skipped,,,,", c.nodes, c.steps_per_period).expect("string write"),
            }
        }
        s
    }

    pub fn cpu_csv(&self) -> String {
        let mut s = String::from("nodes,steps_per_period,forward_cpu_s,inversion_cpu_s,forward_wall_s,inversion_wall_s\n");
        for c in &self.cells {
            writeln!(
                s,
                "{},{},{:e},{:e},{:e},{:e}",
                c.nodes,
                c.steps_per_period,
                c.forward.cpu_seconds,
                c.inversion.cpu_seconds,
                c.forward.wall_seconds,
                c.inversion.wall_seconds
            )
            .expect("string write");
        }
        s
    }

    pub fn differences_csv(diffs: &[ForwardDifference]) -> String {
        let mut s = String::from("from,to,at,normalized_difference\n");
        for d in diffs {
            writeln!(s, "{},{},{},{:e}", d.from, d.to, d.at, d.value).expect("string write");
        }
        s
    }
}

/// Rough peak memory of one forward run, bytes.
pub fn estimated_bytes(nodes: [usize; 3], steps_per_period: usize, record_periods: usize) -> u64 {
    let n: u64 = nodes.iter().map(|&v| v as u64).product();
    let nnz = 3 * 3 * 27 * n;
    // M, C, K, A values plus shared column indices, then recorded snapshots and work vectors
    nnz * (4 * 8 + 4) + 3 * n * 8 * (steps_per_period * record_periods) as u64 + 3 * n * 8 * 16
}

fn available_memory() -> Option<u64> {
    let text = std::fs::read_to_string("/proc/meminfo").ok()?;
    let line = text.lines().find(|l| l.starts_with("MemAvailable:"))?;
    let kb: u64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kb * 1024)
}

pub fn worker_count(opt: Option<usize>) -> usize {
    opt.or_else(|| std::env::var(WORKERS_ENV).ok().and_then(|v| v.parse().ok()))
        .filter(|&w| w > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn check_ladder(name: &str, ladder: &[usize]) -> Result<()> {
    if ladder.is_empty() {
        return Err(HarnessError::Config(format!("{name} ladder is empty")));
    }
    if ladder.windows(2).any(|w| w[0] >= w[1]) {
        return Err(HarnessError::Config(format!("{name} ladder must be strictly ascending, got {ladder:?}")));
    }
    Ok(())
}

fn spectral_difference(fine: &SpectralField, coarse: &SpectralField) -> Result<f64> {
    let split = |s: &SpectralField, part: fn(&num_complex::Complex64) -> f64| -> Result<NodalVectorField> {
        let values = s.values.iter().flat_map(|v| v.iter().map(part)).collect();
        Ok(NodalVectorField::from_values(s.grid, values)?)
    };
    let (fre, fim) = (split(fine, |c| c.re)?, split(fine, |c| c.im)?);
    let mut num = 0.0;
    let mut den = 0.0;
    for (node, cv) in coarse.values.iter().enumerate() {
        let x = coarse.grid.node_position(node);
        let (r, i) = (fre.sample(x)?, fim.sample(x)?);
        for c in 0..3 {
            num += (r[c] - cv[c].re).powi(2) + (i[c] - cv[c].im).powi(2);
            den += r[c] * r[c] + i[c] * i[c];
        }
    }
    Ok((num / den.max(f64::MIN_POSITIVE)).sqrt())
}

fn cell_config(base: &ScenarioConfig, nodes: usize, spp: usize) -> ScenarioConfig {
    let mut c = base.clone();
    c.grid.nodes = NodeCount::Cube(nodes);
    c.time.steps_per_period = spp;
    c.name = format!("{}-n{}-t{}", base.name, nodes, spp);
    c
}

struct CellRun {
    cell: SweepCell,
    spectral: Option<SpectralField>,
}

fn run_cell(base: &ScenarioConfig, nodes: usize, spp: usize, opts: &SweepOptions, budget: Option<u64>) -> Result<CellRun> {
    let cfg = cell_config(base, nodes, spp);
    let skip = |why: String| {
        warn!("skipping {}: {}", cfg.name, why);
        Ok(CellRun {
            cell: SweepCell {
                nodes,
                steps_per_period: spp,
                report: None,
                skipped: Some(why),
                forward: PhaseTiming::default(),
                inversion: PhaseTiming::default(),
            },
            spectral: None,
        })
    };
    if nodes > DEFAULT_NODE_CAP && !opts.allow_large {
        return skip(format!("{nodes} nodes per axis exceeds the desk-scale cap of {DEFAULT_NODE_CAP}"));
    }
    let need = estimated_bytes([nodes; 3], spp, cfg.time.record_periods);
    if let Some(b) = budget {
        if need > b {
            return skip(format!("needs about {} MiB, {} MiB available", need >> 20, b >> 20));
        }
    }
    let out = match &opts.out_dir {
        Some(dir) => run_scenario(&cfg, &dir.join(format!("n{nodes}_t{spp}")))?.0,
        None => execute(&cfg)?,
    };
    info!("{}: d(G') = {:+.2}%", cfg.name, out.report.regions[0].stats.signed_storage);
    Ok(CellRun {
        cell: SweepCell {
            nodes,
            steps_per_period: spp,
            forward: out.timings.forward,
            inversion: out.timings.inversion,
            report: Some(out.report),
            skipped: None,
        },
        spectral: Some(out.spectral),
    })
}

/// Runs every (nodes, samples-per-period) cell and derives the tables.
pub fn run_resolution_sweep(base: &ScenarioConfig, opts: &SweepOptions) -> Result<SweepResult> {
    check_ladder("node", &opts.nodes)?;
    check_ladder("samples-per-period", &opts.tsamples)?;
    base.resolve()?;
    let workers = worker_count(opts.workers);
    let budget = opts.memory_budget.or_else(available_memory).map(|b| b / workers as u64);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| HarnessError::Config(format!("worker pool: {e}")))?;
    let jobs: Vec<(usize, usize)> =
        opts.nodes.iter().flat_map(|&n| opts.tsamples.iter().map(move |&t| (n, t))).collect();
    let runs: Vec<CellRun> = pool.install(|| {
        jobs.par_iter().map(|&(n, t)| run_cell(base, n, t, opts, budget)).collect::<Result<Vec<_>>>()
    })?;

    let find = |n: usize, t: usize| runs.iter().find(|r| r.cell.nodes == n && r.cell.steps_per_period == t);
    let mut spatial = vec![];
    for &t in &opts.tsamples {
        for w in opts.nodes.windows(2) {
            if let (Some(a), Some(b)) = (find(w[0], t), find(w[1], t)) {
                if let (Some(sa), Some(sb)) = (&a.spectral, &b.spectral) {
                    spatial.push(ForwardDifference { from: w[0], to: w[1], at: t, value: spectral_difference(sb, sa)? });
                }
            }
        }
    }
    let mut temporal = vec![];
    for &n in &opts.nodes {
        for w in opts.tsamples.windows(2) {
            if let (Some(a), Some(b)) = (find(n, w[0]), find(n, w[1])) {
                if let (Some(sa), Some(sb)) = (&a.spectral, &b.spectral) {
                    temporal.push(ForwardDifference { from: w[0], to: w[1], at: n, value: spectral_difference(sb, sa)? });
                }
            }
        }
    }
    let result = SweepResult {
        nodes: opts.nodes.clone(),
        tsamples: opts.tsamples.clone(),
        cells: runs.into_iter().map(|r| r.cell).collect(),
        spatial,
        temporal,
    };
    if let Some(dir) = &opts.out_dir {
        write_sweep(&result, dir)?;
    }
    Ok(result)
}

pub fn write_sweep(result: &SweepResult, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let files = [
        ("heatmap.csv", result.heatmap_csv()),
        ("cpu_times.csv", result.cpu_csv()),
        ("forward_spatial.csv", SweepResult::differences_csv(&result.spatial)),
        ("forward_temporal.csv", SweepResult::differences_csv(&result.temporal)),
        ("sweep.json", serde_json::to_string_pretty(result).expect("sweep serializes") + "\n"),
    ];
    for (name, text) in files {
        let p = dir.join(name);
        std::fs::write(&p, text).map_err(|e| HarnessError::io(&p, e))?;
    }
    Ok(())
}
