//! Forward run, inversion and closed-loop report for one scenario.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use mre_core::assembly::node_in_layer;
use mre_core::inversion::{
    curl_filter, extract_harmonic, interface_exclusion, invert, laplacian, region_stats, vessel_exclusion, Elastogram,
    RegionStats, SpectralField, StencilKind, DENOMINATOR_THRESHOLD,
};
use mre_core::newmark::{simulate, DisplacementHistory, ForwardModel, SimulationDiagnostics};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::archive::FieldArchive;
use crate::config::{ResolvedScenario, ScenarioConfig};
use crate::error::{HarnessError, Result};

pub const SOFTWARE: &str = env!("CARGO_PKG_NAME");
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Relative harmonic change between the last two periods above which the
/// run is flagged as not yet steady.
pub const STEADY_STATE_TOLERANCE: f64 = 0.01;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTiming {
    pub wall_seconds: f64,
    pub cpu_seconds: f64,
}

/// User plus system CPU time of the whole process, s.
pub fn process_cpu_seconds() -> f64 {
    let mut usage = std::mem::MaybeUninit::<libc::rusage>::zeroed();
    // SAFETY: getrusage only writes into the provided struct.
    let usage = unsafe {
        if libc::getrusage(libc::RUSAGE_SELF, usage.as_mut_ptr()) != 0 {
            return 0.0;
        }
        usage.assume_init()
    };
    let secs = |t: libc::timeval| t.tv_sec as f64 + 1e-6 * t.tv_usec as f64;
    secs(usage.ru_utime) + secs(usage.ru_stime)
}

struct Stopwatch {
    wall: Instant,
    cpu: f64,
}

impl Stopwatch {
    fn start() -> Self {
        Self { wall: Instant::now(), cpu: process_cpu_seconds() }
    }

    fn stop(self) -> PhaseTiming {
        PhaseTiming { wall_seconds: self.wall.elapsed().as_secs_f64(), cpu_seconds: process_cpu_seconds() - self.cpu }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub forward: PhaseTiming,
    pub inversion: PhaseTiming,
    pub export: PhaseTiming,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionReport {
    pub name: String,
    pub input_storage: f64,
    pub input_loss: f64,
    pub stats: RegionStats,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub name: String,
    pub nodes_per_axis: [usize; 3],
    pub steps_per_period: usize,
    pub stencil: StencilKind,
    pub valid_voxels: usize,
    pub regions: Vec<RegionReport>,
    pub diagnostics: SimulationDiagnostics,
    pub steady: bool,
}

impl ScenarioReport {
    pub fn region(&self, name: &str) -> Option<&RegionReport> {
        self.regions.iter().find(|r| r.name == name)
    }

    pub fn table(&self) -> String {
        let mut s = format!(
            "{:<16} {:>8} {:>12} {:>12} {:>12} {:>12} {:>10} {:>10}\n",
            "region", "voxels", "G' input", "G' mean", "G'' input", "G'' mean", "d(G') %", "d(G'') %"
        );
        for r in &self.regions {
            s += &format!(
                "{:<16} {:>8} {:>12.3} {:>12.3} {:>12.3} {:>12.3} {:>+10.3} {:>+10.3}\n",
                r.name,
                r.stats.voxels,
                r.input_storage,
                r.stats.mean_storage,
                r.input_loss,
                r.stats.mean_loss,
                r.stats.signed_storage,
                r.stats.signed_loss
            );
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignDefaults {
    pub element: String,
    pub quadrature: String,
    pub matrix_storage: String,
    pub linear_solver: String,
    pub initial_state: String,
    pub harmonic_convention: String,
    pub inversion_formula: String,
    pub denominator_threshold: f64,
    pub region_rule: String,
    pub steady_state_tolerance: f64,
}

impl Default for DesignDefaults {
    fn default() -> Self {
        Self {
            element: "8-node trilinear hexahedron".into(),
            quadrature: "2x2x2 Gauss for volume and penalty-face integrals".into(),
            matrix_storage: "CSR, both triangles, one shared pattern for M, C, K".into(),
            linear_solver: "Jacobi-preconditioned CG, warm-started from the previous acceleration".into(),
            initial_state: "rest; initial acceleration solves M a0 = f(0)".into(),
            harmonic_convention: "c = (2/N) sum u(t_n) exp(-i w t_n); A sin(wt + phi) -> A exp(i(phi - pi/2))".into(),
            inversion_formula: "G* = -rho w^2 sum_j u_j conj(Lap u_j) / sum_j |Lap u_j|^2".into(),
            denominator_threshold: DENOMINATOR_THRESHOLD,
            region_rule: "valid voxels inside the region, beyond stencil reach + boundary_margin, outside the \
                          absorbing layer and the interface and vessel margins; vessel lumen masked in the image"
                .into(),
            steady_state_tolerance: STEADY_STATE_TOLERANCE,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub software: String,
    pub version: String,
    pub determinism: String,
    pub config: ScenarioConfig,
    pub defaults: DesignDefaults,
    pub timings: Timings,
    pub artifacts: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct ScenarioOutput {
    pub resolved: ResolvedScenario,
    pub history: DisplacementHistory,
    pub spectral: SpectralField,
    pub elastogram: Elastogram,
    pub report: ScenarioReport,
    pub timings: Timings,
}

fn reference_at(resolved: &ResolvedScenario, node: usize, omega: f64) -> Complex64 {
    let m = &resolved.material;
    let (sum, count) = m
        .node_elements(node)
        .fold((Complex64::new(0.0, 0.0), 0usize), |(s, c), e| (s + m.element(e).complex_modulus(omega), c + 1));
    sum / count as f64
}

/// Region means for every zone (or the whole domain) and configured boxes.
pub fn closed_loop_report(
    cfg: &ScenarioConfig,
    resolved: &ResolvedScenario,
    elastogram: &Elastogram,
    diagnostics: SimulationDiagnostics,
) -> Result<ScenarioReport> {
    let grid = &resolved.grid;
    let n = grid.node_count();
    let inv = &cfg.inversion;
    let omega = resolved.dirichlet.omega;
    let mut excluded = vec![false; n];
    if inv.exclude_absorbing {
        if let Some(abs) = &resolved.absorbing {
            for (i, e) in excluded.iter_mut().enumerate() {
                *e |= node_in_layer(grid, abs, i);
            }
        }
    }
    if inv.interface_margin > 0 {
        for (e, x) in excluded.iter_mut().zip(interface_exclusion(&resolved.material, inv.interface_margin)) {
            *e |= x;
        }
    }
    if !resolved.vessels.is_empty() {
        let h = grid.spacing().iter().cloned().fold(0.0, f64::max);
        let specs: Vec<_> = resolved.vessels.iter().map(|v| v.spec.clone()).collect();
        for (e, x) in excluded.iter_mut().zip(vessel_exclusion(grid, &specs, inv.vessel_margin * h)) {
            *e |= x;
        }
    }

    let mut regions = vec![];
    let zones = resolved.material.zones();
    if zones.len() == 1 {
        let mask = vec![true; n];
        let g = zones[0].material.complex_modulus(omega);
        let stats = region_stats(elastogram, &mask, inv.boundary_margin, Some(&excluded), g)?;
        regions.push(RegionReport { name: "domain".into(), input_storage: g.re, input_loss: g.im, stats });
    } else {
        for (z, zone) in zones.iter().enumerate() {
            let mask: Vec<bool> = (0..n).map(|i| resolved.material.node_zone(i) == Some(z)).collect();
            let g = zone.material.complex_modulus(omega);
            let stats = region_stats(elastogram, &mask, inv.boundary_margin, Some(&excluded), g)?;
            regions.push(RegionReport { name: zone.name.clone(), input_storage: g.re, input_loss: g.im, stats });
        }
    }
    for r in &inv.regions {
        let mask: Vec<bool> = (0..n)
            .map(|i| {
                let x = grid.node_position(i);
                (0..3).all(|k| x[k] >= r.min[k] && x[k] <= r.max[k])
            })
            .collect();
        let count = mask.iter().filter(|&&b| b).count();
        if count == 0 {
            return Err(HarnessError::Numerical(mre_core::Error::EmptyRegion));
        }
        let g = (0..n).filter(|&i| mask[i]).map(|i| reference_at(resolved, i, omega)).sum::<Complex64>() / count as f64;
        let stats = region_stats(elastogram, &mask, inv.boundary_margin, Some(&excluded), g)?;
        regions.push(RegionReport { name: r.name.clone(), input_storage: g.re, input_loss: g.im, stats });
    }
    let steady = diagnostics.steady_state_change.is_none_or(|c| c <= STEADY_STATE_TOLERANCE);
    Ok(ScenarioReport {
        name: cfg.name.clone(),
        nodes_per_axis: grid.nodes_per_axis(),
        steps_per_period: resolved.schedule.steps_per_period,
        stencil: inv.stencil,
        valid_voxels: elastogram.valid_count(),
        regions,
        diagnostics,
        steady,
    })
}

/// Inverts a history with the scenario's inversion settings.
pub fn invert_with(
    cfg: &ScenarioConfig,
    resolved: &ResolvedScenario,
    history: &DisplacementHistory,
) -> Result<(SpectralField, Elastogram)> {
    let spectral = extract_harmonic(history, resolved.dirichlet.omega)?;
    let field = if cfg.inversion.curl { curl_filter(&spectral)? } else { spectral.clone() };
    let lap = laplacian(&field, cfg.inversion.stencil);
    let rho: Vec<f64> = (0..resolved.grid.node_count()).map(|i| resolved.material.node_density(i)).collect();
    // the lumen is not tissue; it stays masked in the image
    let lumen: Option<Vec<bool>> = (!resolved.vessels.is_empty()).then(|| {
        let specs: Vec<_> = resolved.vessels.iter().map(|v| v.spec.clone()).collect();
        vessel_exclusion(&resolved.grid, &specs, 0.0).into_iter().map(|x| !x).collect()
    });
    let mut e = invert(&field, &lap, &rho, lumen.as_deref())?;
    e.stencil = Some(cfg.inversion.stencil);
    Ok((spectral, e))
}

/// Runs everything in memory.
pub fn execute(cfg: &ScenarioConfig) -> Result<ScenarioOutput> {
    let resolved = cfg.resolve()?;
    let watch = Stopwatch::start();
    let model = ForwardModel {
        grid: &resolved.grid,
        material: &resolved.material,
        dirichlet: &resolved.dirichlet,
        absorbing: resolved.absorbing.as_ref(),
        vessels: &resolved.vessels,
        schedule: resolved.schedule,
        cg: resolved.cg,
    };
    let sim = simulate(&model)?;
    let forward = watch.stop();
    if let Some(change) = sim.diagnostics.steady_state_change {
        if change > STEADY_STATE_TOLERANCE {
            warn!(
                "{}: drive harmonic still changes by {:.2}% between the last two periods",
                cfg.name,
                100.0 * change
            );
        }
    }
    let watch = Stopwatch::start();
    let (spectral, elastogram) = invert_with(cfg, &resolved, &sim.history)?;
    let inversion = watch.stop();
    let report = closed_loop_report(cfg, &resolved, &elastogram, sim.diagnostics)?;
    info!("{}: forward {:.1} s, inversion {:.2} s", cfg.name, forward.wall_seconds, inversion.wall_seconds);
    Ok(ScenarioOutput {
        resolved,
        history: sim.history,
        spectral,
        elastogram,
        report,
        timings: Timings { forward, inversion, export: PhaseTiming::default() },
    })
}

fn staging_dir(out: &Path) -> PathBuf {
    let name = out.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "run".into());
    out.with_file_name(format!(".{name}.partial-{}", std::process::id()))
}

fn write_artifacts(cfg: &ScenarioConfig, out: &mut ScenarioOutput, dir: &Path) -> Result<RunManifest> {
    let watch = Stopwatch::start();
    let mut artifacts = vec![];
    FieldArchive::from_history(&out.history)?.write(dir, "history")?;
    artifacts.extend(["history.bin".to_string(), "history.json".to_string()]);
    FieldArchive::from_spectral(&out.spectral)?.write(dir, "spectral")?;
    artifacts.extend(["spectral.bin".to_string(), "spectral.json".to_string()]);
    FieldArchive::from_elastogram(&out.elastogram)?.write(dir, "elastogram")?;
    artifacts.extend(["elastogram.bin".to_string(), "elastogram.json".to_string()]);
    let write = |name: &str, text: String| -> Result<()> {
        let p = dir.join(name);
        fs::write(&p, text).map_err(|e| HarnessError::io(&p, e))
    };
    write("config.toml", cfg.materialized().to_toml())?;
    write("report.json", serde_json::to_string_pretty(&out.report).expect("report serializes") + "\n")?;
    write("report.txt", out.report.table())?;
    artifacts.extend(["config.toml".to_string(), "report.json".to_string(), "report.txt".to_string()]);
    out.timings.export = watch.stop();
    let manifest = RunManifest {
        software: SOFTWARE.into(),
        version: VERSION.into(),
        determinism: "no random inputs; reductions use a fixed order, so the same config and build reproduce \
                      every archive bit for bit"
            .into(),
        config: cfg.materialized(),
        defaults: DesignDefaults::default(),
        timings: out.timings,
        artifacts,
    };
    write("manifest.json", serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n")?;
    Ok(manifest)
}

/// Runs the scenario and writes all artifacts to `out_dir`. Files are staged
/// in a sibling directory and moved into place only on success.
pub fn run_scenario(cfg: &ScenarioConfig, out_dir: &Path) -> Result<(ScenarioOutput, RunManifest)> {
    if out_dir.exists() && !out_dir.join("manifest.json").exists() && fs::read_dir(out_dir).is_ok_and(|mut d| d.next().is_some()) {
        return Err(HarnessError::io(
            out_dir,
            std::io::Error::new(std::io::ErrorKind::AlreadyExists, "output directory exists and is not a previous run"),
        ));
    }
    let mut out = execute(cfg)?;
    if let Some(parent) = out_dir.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| HarnessError::io(parent, e))?;
    }
    let stage = staging_dir(out_dir);
    if stage.exists() {
        fs::remove_dir_all(&stage).map_err(|e| HarnessError::io(&stage, e))?;
    }
    let manifest = match write_artifacts(cfg, &mut out, &stage) {
        Ok(m) => m,
        Err(e) => {
            let _ = fs::remove_dir_all(&stage);
            return Err(e);
        }
    };
    if out_dir.exists() {
        fs::remove_dir_all(out_dir).map_err(|e| HarnessError::io(out_dir, e))?;
    }
    fs::rename(&stage, out_dir).map_err(|e| HarnessError::io(out_dir, e))?;
    Ok((out, manifest))
}
