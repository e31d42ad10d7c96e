//! Scenario files (TOML, strict schema).

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use mre_core::assembly::{AbsorbingSpec, DirichletSpec, DEFAULT_ABSORBING_ALPHA, DEFAULT_PENALTY};
use mre_core::grid::{Face, Grid, Vec3};
use mre_core::inversion::StencilKind;
use mre_core::material::{uniform_material, zoned_material, KelvinVoigt, MaterialField, ZoneSpec};
use mre_core::newmark::DriveSchedule;
use mre_core::sparse::CgSettings;
use mre_core::vessel::{Vessel, VesselSpec};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub grid: GridConfig,
    /// Uniform material; mutually exclusive with `zones`.
    #[serde(default)]
    pub material: Option<MaterialConfig>,
    #[serde(default)]
    pub zones: Vec<ZoneConfig>,
    #[serde(default)]
    pub drive: DriveConfig,
    #[serde(default)]
    pub absorbing: AbsorbingConfig,
    #[serde(default)]
    pub vessels: Vec<VesselConfig>,
    #[serde(default)]
    pub time: TimeConfig,
    #[serde(default)]
    pub inversion: InversionConfig,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

fn default_name() -> String {
    "scenario".into()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NodeCount {
    Cube(usize),
    Axes([usize; 3]),
}

impl NodeCount {
    pub fn axes(self) -> [usize; 3] {
        match self {
            NodeCount::Cube(n) => [n; 3],
            NodeCount::Axes(a) => a,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    /// m
    #[serde(default = "default_extent")]
    pub extent: Vec3,
    pub nodes: NodeCount,
}

fn default_extent() -> Vec3 {
    [0.1; 3]
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialConfig {
    #[serde(default = "default_mu")]
    pub mu: f64,
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default = "default_rho")]
    pub rho: f64,
}

impl Default for MaterialConfig {
    fn default() -> Self {
        Self { mu: default_mu(), eta: default_eta(), rho: default_rho() }
    }
}

fn default_mu() -> f64 {
    KelvinVoigt::BASELINE.mu
}
fn default_eta() -> f64 {
    KelvinVoigt::BASELINE.eta
}
fn default_rho() -> f64 {
    KelvinVoigt::BASELINE.rho
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZoneConfig {
    pub name: String,
    pub min: Vec3,
    pub max: Vec3,
    pub mu: f64,
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default = "default_rho")]
    pub rho: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriveConfig {
    #[serde(default = "default_face")]
    pub face: Face,
    /// m
    #[serde(default = "default_amplitude")]
    pub amplitude: f64,
    #[serde(default = "default_direction")]
    pub direction: Vec3,
    /// Hz
    #[serde(default = "default_frequency")]
    pub frequency: f64,
    #[serde(default = "default_penalty")]
    pub penalty: f64,
}

impl Default for DriveConfig {
    fn default() -> Self {
        Self {
            face: default_face(),
            amplitude: default_amplitude(),
            direction: default_direction(),
            frequency: default_frequency(),
            penalty: default_penalty(),
        }
    }
}

fn default_face() -> Face {
    Face::XMin
}
fn default_amplitude() -> f64 {
    1e-4
}
fn default_direction() -> Vec3 {
    [0.0, 0.0, 1.0]
}
fn default_frequency() -> f64 {
    50.0
}
fn default_penalty() -> f64 {
    DEFAULT_PENALTY
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AbsorbingConfig {
    #[serde(default = "yes")]
    pub enabled: bool,
    /// m; defaults to 10% of the smallest extent.
    #[serde(default)]
    pub thickness: Option<f64>,
    #[serde(default = "default_abs_alpha")]
    pub alpha: f64,
    /// Defaults to every face except the driven one.
    #[serde(default)]
    pub faces: Option<Vec<Face>>,
}

impl Default for AbsorbingConfig {
    fn default() -> Self {
        Self { enabled: true, thickness: None, alpha: default_abs_alpha(), faces: None }
    }
}

fn yes() -> bool {
    true
}
fn default_abs_alpha() -> f64 {
    DEFAULT_ABSORBING_ALPHA
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VesselConfig {
    pub centerline: Vec<Vec3>,
    /// m; defaults to 5% of the smallest extent.
    #[serde(default)]
    pub radius: Option<f64>,
    pub p_mean: f64,
    pub p_amp: f64,
    #[serde(default = "default_pulse")]
    pub f_pulse: f64,
    #[serde(default)]
    pub phase: f64,
    #[serde(default)]
    pub frozen_phase: Option<f64>,
    /// Quadrature stations per crossed element.
    #[serde(default = "default_n_axial")]
    pub n_axial: usize,
    #[serde(default = "default_n_circ")]
    pub n_circumferential: usize,
}

fn default_pulse() -> f64 {
    1.0
}
fn default_n_axial() -> usize {
    2
}
fn default_n_circ() -> usize {
    16
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    #[serde(default = "default_spp")]
    pub steps_per_period: usize,
    #[serde(default = "default_periods")]
    pub periods: usize,
    #[serde(default = "default_record")]
    pub record_periods: usize,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_cg_tol")]
    pub cg_tolerance: f64,
    #[serde(default = "default_cg_iter")]
    pub cg_max_iterations: usize,
}

impl Default for TimeConfig {
    fn default() -> Self {
        Self {
            steps_per_period: default_spp(),
            periods: default_periods(),
            record_periods: default_record(),
            beta: default_beta(),
            gamma: default_gamma(),
            cg_tolerance: default_cg_tol(),
            cg_max_iterations: default_cg_iter(),
        }
    }
}

fn default_spp() -> usize {
    32
}
fn default_periods() -> usize {
    6
}
fn default_record() -> usize {
    1
}
fn default_beta() -> f64 {
    0.25
}
fn default_gamma() -> f64 {
    0.5
}
fn default_cg_tol() -> f64 {
    CgSettings::default().rel_tol
}
fn default_cg_iter() -> usize {
    CgSettings::default().max_iter
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InversionConfig {
    #[serde(default)]
    pub stencil: StencilKind,
    /// Extra node layers dropped beyond the stencil reach.
    #[serde(default = "default_boundary_margin")]
    pub boundary_margin: usize,
    /// Element layers around zone interfaces left out of region means.
    #[serde(default = "one")]
    pub interface_margin: usize,
    /// Element sizes beyond the vessel wall left out of region means.
    #[serde(default = "one_f")]
    pub vessel_margin: f64,
    /// Leave absorbing-layer nodes out of region means.
    #[serde(default = "yes")]
    pub exclude_absorbing: bool,
    #[serde(default)]
    pub curl: bool,
    /// Extra named boxes reported next to the zones.
    #[serde(default)]
    pub regions: Vec<RegionConfig>,
}

impl Default for InversionConfig {
    fn default() -> Self {
        Self {
            stencil: StencilKind::default(),
            boundary_margin: default_boundary_margin(),
            interface_margin: 1,
            vessel_margin: 1.0,
            exclude_absorbing: true,
            curl: false,
            regions: vec![],
        }
    }
}

fn default_boundary_margin() -> usize {
    2
}
fn one() -> usize {
    1
}
fn one_f() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionConfig {
    pub name: String,
    pub min: Vec3,
    pub max: Vec3,
}

/// Core objects built from a validated config.
#[derive(Clone, Debug)]
pub struct ResolvedScenario {
    pub grid: Grid,
    pub material: MaterialField,
    pub dirichlet: DirichletSpec,
    pub absorbing: Option<AbsorbingSpec>,
    pub vessels: Vec<Vessel>,
    pub schedule: DriveSchedule,
    pub cg: CgSettings,
}

fn cfg_err(context: &str, e: impl std::fmt::Display) -> HarnessError {
    HarnessError::Config(format!("{context}: {e}"))
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.resolve()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn min_extent(&self) -> f64 {
        self.grid.extent.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Same scenario with every default written out.
    pub fn materialized(&self) -> Self {
        let mut c = self.clone();
        if c.zones.is_empty() && c.material.is_none() {
            c.material = Some(MaterialConfig::default());
        }
        if c.absorbing.thickness.is_none() {
            c.absorbing.thickness = Some(0.1 * self.min_extent());
        }
        if c.absorbing.faces.is_none() {
            c.absorbing.faces = Some(Face::ALL.iter().copied().filter(|f| *f != c.drive.face).collect());
        }
        for v in &mut c.vessels {
            if v.radius.is_none() {
                v.radius = Some(0.05 * self.min_extent());
            }
        }
        c
    }

    pub fn schedule(&self) -> DriveSchedule {
        DriveSchedule {
            steps_per_period: self.time.steps_per_period,
            periods: self.time.periods,
            record_periods: self.time.record_periods,
            beta: self.time.beta,
            gamma: self.time.gamma,
        }
    }

    /// Builds and validates every core object.
    pub fn resolve(&self) -> Result<ResolvedScenario> {
        let c = self.materialized();
        let grid = Grid::new(c.grid.extent, c.grid.nodes.axes()).map_err(|e| cfg_err("grid", e))?;
        let material = if c.zones.is_empty() {
            let m = c.material.unwrap_or_default();
            let kv = KelvinVoigt::new(m.mu, m.eta, m.rho).map_err(|e| cfg_err("material", e))?;
            uniform_material(&grid, kv).map_err(|e| cfg_err("material", e))?
        } else {
            if c.material.is_some() {
                return Err(HarnessError::Config("material: give either [material] or [[zones]], not both".into()));
            }
            let mut zones = Vec::with_capacity(c.zones.len());
            for z in &c.zones {
                let kv = KelvinVoigt::new(z.mu, z.eta, z.rho).map_err(|e| cfg_err(&format!("zones.{}", z.name), e))?;
                zones.push(ZoneSpec { name: z.name.clone(), min: z.min, max: z.max, material: kv });
            }
            zoned_material(&grid, zones).map_err(|e| cfg_err("zones", e))?
        };

        let d = &c.drive;
        let norm = d.direction.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(HarnessError::Config("drive.direction must be a nonzero vector".into()));
        }
        if !(d.frequency.is_finite() && d.frequency > 0.0) {
            return Err(cfg_err("drive.frequency", format!("must be > 0, got {}", d.frequency)));
        }
        let dirichlet = DirichletSpec {
            face: d.face,
            amplitude: d.direction.map(|v| d.amplitude * v / norm),
            omega: 2.0 * PI * d.frequency,
            penalty: d.penalty,
        };
        dirichlet.validate().map_err(|e| cfg_err("drive", e))?;

        let absorbing = if c.absorbing.enabled {
            let spec = AbsorbingSpec {
                thickness: c.absorbing.thickness.expect("materialized"),
                alpha: c.absorbing.alpha,
                faces: c.absorbing.faces.clone().expect("materialized"),
            };
            spec.validate(&grid).map_err(|e| cfg_err("absorbing", e))?;
            Some(spec)
        } else {
            None
        };

        let mut vessels = Vec::with_capacity(c.vessels.len());
        for (i, v) in c.vessels.iter().enumerate() {
            let spec = VesselSpec {
                centerline: v.centerline.clone(),
                radius: v.radius.expect("materialized"),
                p_mean: v.p_mean,
                p_amp: v.p_amp,
                f_pulse: v.f_pulse,
                phase: v.phase,
                frozen_phase: v.frozen_phase,
            };
            let vessel =
                Vessel::new(&grid, spec, v.n_axial, v.n_circumferential).map_err(|e| cfg_err(&format!("vessels[{i}]"), e))?;
            vessels.push(vessel);
        }

        let schedule = c.schedule();
        schedule.validate().map_err(|e| cfg_err("time", e))?;
        schedule.params(d.frequency).validate().map_err(|e| cfg_err("time", e))?;
        if !(c.time.cg_tolerance > 0.0 && c.time.cg_tolerance < 1.0) {
            return Err(cfg_err("time.cg_tolerance", format!("must lie in (0, 1), got {}", c.time.cg_tolerance)));
        }
        let inv = &c.inversion;
        if !(inv.vessel_margin >= 0.0 && inv.vessel_margin.is_finite()) {
            return Err(cfg_err("inversion.vessel_margin", "must be >= 0"));
        }
        for r in &inv.regions {
            if (0..3).any(|k| r.min[k].partial_cmp(&r.max[k]) != Some(std::cmp::Ordering::Less)) {
                return Err(cfg_err(&format!("inversion.regions.{}", r.name), "min must be below max on every axis"));
            }
        }
        if inv.curl && grid.nodes_per_axis().iter().any(|&n| n < 3) {
            return Err(cfg_err("inversion.curl", "needs at least 3 nodes per axis"));
        }

        Ok(ResolvedScenario {
            grid,
            material,
            dirichlet,
            absorbing,
            vessels,
            schedule,
            cg: CgSettings { rel_tol: c.time.cg_tolerance, max_iter: c.time.cg_max_iterations },
        })
    }
}

pub fn parse_config(path: &Path) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    ScenarioConfig::from_toml(&text).map_err(|e| match e {
        HarnessError::Config(m) => HarnessError::Config(format!("{}: {m}", path.display())),
        other => other,
    })
}
