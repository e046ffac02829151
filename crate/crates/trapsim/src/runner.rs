//! Study configuration, named presets, case execution with baseline caching,
//! and CSV/JSON report emission.

use crate::analysis::{
    anharmonicity, find_rf_null, normalize_report, pseudopotential, secular_frequency, taylor_fit,
    AnalysisError, AnalysisOptions, AxisObservables, IonSpecies, TrapReport,
};
use crate::assembly::{
    add_mirror_pair, build_blade_trap, build_endcap_trap, build_stylus_trap, build_surface_trap,
    build_wafer_trap, scale_assembly, CavityAxis, CoatingSpec, GeometryError, MirrorPairSpec,
    TrapAssembly,
};
use crate::domain::{auto_domain, default_null_region, AutoDomainOptions, DomainResult, DomainStep};
use crate::dump::DumpError;
use crate::grid::Grid3D;
use crate::hashing::content_hash;
use crate::material::{rasterize, RasterizeError};
use crate::solver::{
    assemble, solve, solve_surface_charge, SolveMeta, SolveSpec, SolverError,
};
use crate::vec3::Vec3;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::sync::Mutex;
use thiserror::Error;

pub const VALID_TRAPS: [&str; 5] = ["blade", "wafer", "endcap", "stylus", "surface"];
pub const VALID_PRESETS: [&str; 7] = ["table1", "fig3", "fig4", "fig5", "fig6", "fig7", "fig8"];
pub const WORKERS_ENV: &str = "TRAPSIM_WORKERS";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Toml(String),
    #[error("unknown trap id '{given}'; valid ids: {valid}", valid = VALID_TRAPS.join(", "))]
    UnknownTrap { given: String },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("sweep requires at least one value")]
    EmptySweep,
    #[error("unknown sweep parameter '{0}'; valid: cavity_length, misalignment, epsilon, conductivity")]
    UnknownSweep(String),
    #[error("unknown cavity axis '{0}'; valid: x, y, z")]
    UnknownAxis(String),
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Rasterize(#[from] RasterizeError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Dump(#[from] DumpError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("auto-domain tolerance must be in (0, 0.1], got {0}")]
    InvalidDomainTolerance(f64),
    #[error("domain did not converge after {doublings} doublings")]
    DomainNotConverged { doublings: usize, log: Vec<DomainStep> },
    #[error("probe depth along axis {axis} is unbounded; cannot assess domain convergence")]
    UnboundedProbeDepth { axis: usize },
    #[error("unknown preset '{name}'; valid: {valid}", name = .0, valid = VALID_PRESETS.join(", "))]
    UnknownPreset(String),
}

// ---------------------------------------------------------------------------
// Configuration schema (TOML). All lengths in meters, frequencies in Hz.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case")]
pub enum StudyMode {
    /// Rf trapping study: pseudopotential observables.
    Trap,
    /// Static field at the trap center from a charged mirror facet.
    SurfaceCharge,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct DriveConfig {
    pub voltage: f64,
    pub frequency_hz: f64,
}

impl Default for DriveConfig {
    fn default() -> Self {
        DriveConfig { voltage: 200.0, frequency_hz: 10.0e6 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct IonConfig {
    pub mass_amu: f64,
    pub charge_e: f64,
}

impl Default for IonConfig {
    fn default() -> Self {
        IonConfig { mass_amu: 40.0, charge_e: 1.0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct GridConfig {
    /// Target spacing of the production grid at scale 1 (m).
    pub resolution: f64,
    /// Auto-domain convergence tolerance (relative).
    pub domain_tolerance: f64,
    /// Probe-resolution cells along the largest axis during domain doubling.
    pub probe_cells: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { resolution: 25e-6, domain_tolerance: 0.01, probe_cells: 72 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { tolerance: 1e-8, max_iterations: 50_000 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct MisalignConfig {
    pub longitudinal: f64,
    pub transverse: f64,
    pub skew: f64,
    /// "x" | "y" | "z"; defaults to the lowest axis perpendicular to the cavity.
    pub transverse_axis: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct CoatingConfig {
    pub thickness: f64,
    pub epsilon: f64,
    pub sigma: f64,
    pub grounded: bool,
}

impl Default for CoatingConfig {
    fn default() -> Self {
        CoatingConfig { thickness: 10e-6, epsilon: 15.0, sigma: 0.0, grounded: false }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct CavityConfig {
    pub axis: String,
    /// Facet-to-facet length at scale 1 (m).
    pub length: f64,
    pub diameter: f64,
    pub substrate_length: f64,
    pub epsilon: f64,
    pub misalignment: MisalignConfig,
    pub coating: Option<CoatingConfig>,
    /// Treat the whole substrate as a grounded metal body.
    pub metalized: bool,
    /// None = automatic (single mirror for the surface trap vertical cavity).
    pub single_mirror: Option<bool>,
}

impl Default for CavityConfig {
    fn default() -> Self {
        CavityConfig {
            axis: "x".into(),
            length: 1.0e-3,
            diameter: 0.7e-3,
            substrate_length: 3.0e-3,
            epsilon: 3.8,
            misalignment: MisalignConfig::default(),
            coating: None,
            metalized: false,
            single_mirror: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepConfig {
    /// cavity_length | misalignment | epsilon | conductivity
    pub parameter: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ChargeConfig {
    /// Facet label; empty = "mirror+<axis>".
    pub facet: String,
    /// Surface charge density (C/m^2).
    pub sigma: f64,
}

impl Default for ChargeConfig {
    fn default() -> Self {
        ChargeConfig { facet: String::new(), sigma: 1e-6 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct OutputConfig {
    pub directory: String,
    /// 0 = TRAPSIM_WORKERS env or 1.
    pub workers: usize,
    pub deterministic: bool,
    pub field_dumps: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { directory: "out".into(), workers: 0, deterministic: true, field_dumps: false }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalysisConfig {
    pub parabola_window: f64,
    pub taylor_start_range: f64,
    pub taylor_step: f64,
    pub taylor_resid_tol: f64,
    pub taylor_coeff_tol: f64,
    pub null_search_half: f64,
    pub temperature: f64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        let d = AnalysisOptions::default();
        AnalysisConfig {
            parabola_window: d.parabola_window,
            taylor_start_range: d.taylor_start_range,
            taylor_step: d.taylor_step,
            taylor_resid_tol: d.taylor_resid_tol,
            taylor_coeff_tol: d.taylor_coeff_tol,
            null_search_half: d.null_search_half,
            temperature: d.temperature,
        }
    }
}

impl AnalysisConfig {
    pub fn to_options(&self) -> AnalysisOptions {
        AnalysisOptions {
            parabola_window: self.parabola_window,
            taylor_start_range: self.taylor_start_range,
            taylor_step: self.taylor_step,
            taylor_resid_tol: self.taylor_resid_tol,
            taylor_coeff_tol: self.taylor_coeff_tol,
            null_search_half: self.null_search_half,
            temperature: self.temperature,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct StudyConfig {
    pub trap: String,
    pub scale: f64,
    pub study: StudyMode,
    pub drive: DriveConfig,
    pub ion: IonConfig,
    pub grid: GridConfig,
    pub solver: SolverConfig,
    pub cavity: Option<CavityConfig>,
    pub sweep: Option<SweepConfig>,
    pub charge: ChargeConfig,
    pub output: OutputConfig,
    pub analysis: AnalysisConfig,
    /// Parse-time remarks (axis remapping etc); not part of the document.
    #[serde(skip)]
    pub notes: Vec<String>,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            trap: "blade".into(),
            scale: 1.0,
            study: StudyMode::Trap,
            drive: DriveConfig::default(),
            ion: IonConfig::default(),
            grid: GridConfig::default(),
            solver: SolverConfig::default(),
            cavity: None,
            sweep: None,
            charge: ChargeConfig::default(),
            output: OutputConfig::default(),
            analysis: AnalysisConfig::default(),
            notes: Vec::new(),
        }
    }
}

fn parse_axis(s: &str) -> Result<CavityAxis, ConfigError> {
    match s {
        "x" => Ok(CavityAxis::X),
        "y" => Ok(CavityAxis::Y),
        "z" => Ok(CavityAxis::Z),
        other => Err(ConfigError::UnknownAxis(other.into())),
    }
}

/// Parse and validate a TOML study configuration.
pub fn parse_config(text: &str) -> Result<StudyConfig, ConfigError> {
    let mut cfg: StudyConfig = toml::from_str(text).map_err(|e| ConfigError::Toml(e.to_string()))?;
    validate_config(&mut cfg)?;
    Ok(cfg)
}

pub fn validate_config(cfg: &mut StudyConfig) -> Result<(), ConfigError> {
    if !VALID_TRAPS.contains(&cfg.trap.as_str()) {
        return Err(ConfigError::UnknownTrap { given: cfg.trap.clone() });
    }
    if cfg.scale <= 0.0 {
        return Err(ConfigError::Invalid("scale must be positive".into()));
    }
    if cfg.drive.voltage <= 0.0 || cfg.drive.frequency_hz <= 0.0 {
        return Err(ConfigError::Invalid("drive voltage and frequency must be positive".into()));
    }
    if cfg.grid.resolution <= 0.0 {
        return Err(ConfigError::Invalid("grid resolution must be positive".into()));
    }
    if !(cfg.grid.domain_tolerance > 0.0 && cfg.grid.domain_tolerance <= 0.1) {
        return Err(ConfigError::Invalid("domain_tolerance must lie in (0, 0.1]".into()));
    }
    if let Some(cv) = &mut cfg.cavity {
        let mut axis = parse_axis(&cv.axis)?;
        let cylindrical = cfg.trap == "endcap" || cfg.trap == "stylus";
        if cylindrical && axis == CavityAxis::Z {
            axis = CavityAxis::X;
            cv.axis = "x".into();
            cfg.notes.push(format!(
                "cavity axis z remapped to x for the {} trap (equivalent orientations)",
                cfg.trap
            ));
        }
        let _ = axis;
        if cv.length <= 0.0 || cv.diameter <= 0.0 || cv.substrate_length <= 0.0 {
            return Err(ConfigError::Invalid("cavity lengths must be positive".into()));
        }
        if cv.epsilon < 1.0 {
            return Err(ConfigError::Invalid("cavity substrate epsilon must be >= 1".into()));
        }
        if let Some(c) = &cv.coating {
            if c.thickness <= 0.0 || c.epsilon < 1.0 || c.sigma < 0.0 {
                return Err(ConfigError::Invalid("invalid coating parameters".into()));
            }
        }
        if let Some(t) = &cv.misalignment.transverse_axis {
            let t = parse_axis(t)?;
            if t == parse_axis(&cv.axis)? {
                return Err(ConfigError::Invalid(
                    "misalignment transverse axis must differ from the cavity axis".into(),
                ));
            }
        }
    }
    if let Some(sweep) = &cfg.sweep {
        if sweep.values.is_empty() {
            return Err(ConfigError::EmptySweep);
        }
        match sweep.parameter.as_str() {
            "cavity_length" | "misalignment" | "epsilon" | "conductivity" => {}
            other => return Err(ConfigError::UnknownSweep(other.into())),
        }
        if sweep.values.iter().any(|&v| v <= 0.0) {
            return Err(ConfigError::Invalid(
                "sweep values must be strictly positive".into(),
            ));
        }
        if cfg.cavity.is_none() {
            return Err(ConfigError::Invalid("sweep requires a cavity section".into()));
        }
        if sweep.parameter == "conductivity"
            && cfg.cavity.as_ref().is_some_and(|c| c.coating.is_none())
        {
            return Err(ConfigError::Invalid(
                "conductivity sweep requires a cavity coating".into(),
            ));
        }
    }
    if cfg.study == StudyMode::SurfaceCharge && cfg.cavity.is_none() {
        return Err(ConfigError::Invalid(
            "surface_charge study requires a cavity section".into(),
        ));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Case execution
// ---------------------------------------------------------------------------

/// Result of one executed case. Timing is kept out of the serialized form so
/// that deterministic re-runs emit byte-identical reports.
#[derive(Debug, Clone, Serialize)]
pub struct CaseResult {
    pub case_id: String,
    pub sweep_value: Option<f64>,
    pub trap: String,
    pub study: StudyMode,
    pub config_hash: String,
    pub grid_hash: String,
    pub report: Option<TrapReport>,
    /// Static field at the trap center for surface-charge cases (V/m).
    pub charge_field: Option<[f64; 3]>,
    pub solve: SolveMeta,
    #[serde(skip)]
    pub wall_time: std::time::Duration,
    #[serde(skip)]
    pub config: StudyConfig,
}

/// Execution context holding domain/baseline caches keyed by content hashes.
#[derive(Default)]
pub struct Session {
    domains: Mutex<HashMap<String, DomainResult>>,
    anchors: Mutex<HashMap<String, Vec3>>,
    baselines: Mutex<HashMap<String, TrapReport>>,
}

fn build_bare_assembly(cfg: &StudyConfig) -> TrapAssembly {
    let mut asm = match cfg.trap.as_str() {
        "blade" => build_blade_trap(),
        "wafer" => build_wafer_trap(),
        "endcap" => build_endcap_trap(),
        "stylus" => build_stylus_trap(),
        "surface" => build_surface_trap(),
        other => unreachable!("validated trap id {other}"),
    };
    asm.drive.voltage = cfg.drive.voltage;
    asm.drive.frequency = cfg.drive.frequency_hz;
    asm.ion.mass_amu = cfg.ion.mass_amu;
    asm.ion.charge_e = cfg.ion.charge_e;
    if cfg.scale != 1.0 {
        asm = scale_assembly(&asm, cfg.scale);
    }
    asm
}

fn mirror_spec_from(cfg: &StudyConfig, cv: &CavityConfig) -> Result<MirrorPairSpec, ConfigError> {
    let axis = parse_axis(&cv.axis)?;
    let a = cfg.scale;
    let mut spec = MirrorPairSpec::new(axis, cv.length * a);
    spec.mirror_diameter = cv.diameter * a;
    spec.substrate_length = cv.substrate_length * a;
    spec.substrate_eps_r = cv.epsilon;
    spec.misalignment.longitudinal = cv.misalignment.longitudinal * a;
    spec.misalignment.transverse = cv.misalignment.transverse * a;
    spec.misalignment.skew = cv.misalignment.skew * a;
    if let Some(t) = &cv.misalignment.transverse_axis {
        spec.misalignment.transverse_axis = Some(parse_axis(t)?);
    }
    if let Some(c) = &cv.coating {
        spec.coating = Some(CoatingSpec {
            thickness: c.thickness * a,
            eps_r: c.epsilon,
            sigma: c.sigma,
            grounded: c.grounded,
        });
    }
    spec.single_mirror = cv
        .single_mirror
        .unwrap_or(cfg.trap == "surface" && axis == CavityAxis::Y);
    Ok(spec)
}

impl Session {
    /// Converged solve domain for an assembly at the configured resolution.
    fn domain(&self, cfg: &StudyConfig, asm: &TrapAssembly) -> Result<DomainResult, PipelineError> {
        let key = content_hash(&(asm, &cfg.grid, cfg.solver.tolerance));
        if let Some(hit) = self.domains.lock().unwrap().get(&key) {
            return Ok(hit.clone());
        }
        let mut opts = AutoDomainOptions::new(cfg.grid.resolution * cfg.scale, cfg.scale);
        opts.probe_cells = cfg.grid.probe_cells;
        opts.solver_tolerance = cfg.solver.tolerance;
        opts.max_iterations = cfg.solver.max_iterations;
        let result = auto_domain(asm, cfg.grid.domain_tolerance, &opts)?;
        self.domains.lock().unwrap().insert(key, result.clone());
        Ok(result)
    }

    /// Unperturbed rf-null of the bare assembly: anchors mirror placement and
    /// the perturbed-case null search.
    fn anchor(&self, cfg: &StudyConfig, bare: &TrapAssembly) -> Result<Vec3, PipelineError> {
        let key = content_hash(&(bare, &cfg.grid, cfg.solver.tolerance));
        if let Some(hit) = self.anchors.lock().unwrap().get(&key) {
            return Ok(*hit);
        }
        let dom = self.domain(cfg, bare)?;
        let report = self.analyze(cfg, bare, &dom.grid, None)?.0;
        let null = Vec3::from_array(report.null_position);
        self.anchors.lock().unwrap().insert(key, null);
        // The baseline at this grid is a byproduct; keep it for normalization.
        let bkey = content_hash(&(bare, &dom.grid, cfg.solver.tolerance));
        self.baselines.lock().unwrap().insert(bkey, report);
        Ok(null)
    }

    fn baseline(
        &self,
        cfg: &StudyConfig,
        bare: &TrapAssembly,
        grid: &Grid3D,
    ) -> Result<TrapReport, PipelineError> {
        let key = content_hash(&(bare, grid, cfg.solver.tolerance));
        if let Some(hit) = self.baselines.lock().unwrap().get(&key) {
            return Ok(hit.clone());
        }
        let report = self.analyze(cfg, bare, grid, None)?.0;
        self.baselines.lock().unwrap().insert(key, report.clone());
        Ok(report)
    }

    /// Full observable extraction for one assembly on one grid.
    fn analyze(
        &self,
        cfg: &StudyConfig,
        asm: &TrapAssembly,
        grid: &Grid3D,
        taylor_axis: Option<CavityAxis>,
    ) -> Result<(TrapReport, SolveMeta), PipelineError> {
        let opts = cfg.analysis.to_options().scaled(cfg.scale);
        let (map, mask) = rasterize(asm, grid)?;
        let mut spec = SolveSpec::rf(asm);
        spec.tolerance = cfg.solver.tolerance;
        spec.max_iterations = cfg.solver.max_iterations;
        let system = assemble(&map, &mask, &spec, None)?;
        let sol = solve(&system, &spec)?;
        let species = IonSpecies::from_amu_e(asm.ion.mass_amu, asm.ion.charge_e);
        let geometry_hash = content_hash(&(asm, grid, cfg.solver.tolerance));
        let pseudo = pseudopotential(&sol, species, spec.omega, geometry_hash.clone())?;

        let (lo, hi) = default_null_region(asm, opts.null_search_half);
        let null = find_rf_null(&pseudo, lo, hi)?;
        let null_value = pseudo.sample(null).unwrap_or(f64::NAN);

        let mut axes: Vec<AxisObservables> = Vec::with_capacity(3);
        for axis in 0..3 {
            let depth = crate::analysis::trap_depth(&pseudo, null, Vec3::axis_unit(axis))?;
            let frequency =
                secular_frequency(&pseudo, null, Vec3::axis_unit(axis), opts.parabola_window).ok();
            axes.push(AxisObservables {
                depth_ev: depth.depth_ev,
                barrier_position: depth.barrier_position,
                depth_flag: if depth.depth_ev.is_some() { "ok".into() } else { "unbounded".into() },
                frequency_hz: frequency,
            });
        }

        let mut taylor = None;
        let mut anharm = None;
        if let Some(axis) = taylor_axis {
            let dir = axis.unit();
            if let Ok(fit) = taylor_fit(&pseudo, null, dir, &opts) {
                if let Some(f_axis) = axes[axis.index()].frequency_hz {
                    anharm = anharmonicity(&fit, species, opts.temperature, f_axis).ok();
                }
                taylor = Some(fit);
            }
        }

        let report = TrapReport {
            geometry_hash,
            scale: cfg.scale,
            null_position: null.to_array(),
            null_value_ev: null_value,
            axes: [axes[0].clone(), axes[1].clone(), axes[2].clone()],
            taylor,
            anharmonicity: anharm,
            normalized: None,
        };
        Ok((report, sol.meta.clone()))
    }

    /// Execute one fully-specified case (sweeps already expanded).
    pub fn run_case(&self, cfg: &StudyConfig) -> Result<CaseResult, PipelineError> {
        let start = std::time::Instant::now();
        let bare = build_bare_assembly(cfg);

        let (assembly, cavity_axis) = match &cfg.cavity {
            Some(cv) => {
                let anchor = self.anchor(cfg, &bare)?;
                let mut anchored = bare.clone();
                anchored.nominal_center = anchor;
                let spec = mirror_spec_from(cfg, cv)?;
                let mut with = add_mirror_pair(&anchored, &spec)?;
                if cv.metalized {
                    for d in &mut with.dielectrics {
                        if d.thin_layer.is_none() {
                            d.grounded_metal = true;
                        }
                    }
                }
                (with, Some(parse_axis(&cv.axis)?))
            }
            None => (bare.clone(), None),
        };

        let dom = self.domain(cfg, &assembly)?;
        let grid_hash = content_hash(&dom.grid);
        let config_hash = content_hash(&(
            &cfg.trap, cfg.scale, &cfg.study, &cfg.drive, &cfg.ion, &cfg.grid, &cfg.solver,
            &cfg.cavity, &cfg.charge,
        ));

        let case = match cfg.study {
            StudyMode::Trap => {
                let (mut report, meta) = self.analyze(cfg, &assembly, &dom.grid, cavity_axis)?;
                if cfg.cavity.is_some() {
                    let base = self.baseline(cfg, &bare, &dom.grid)?;
                    report = normalize_report(&report, &base)?;
                }
                CaseResult {
                    case_id: case_id(cfg),
                    sweep_value: None,
                    trap: cfg.trap.clone(),
                    study: cfg.study.clone(),
                    config_hash,
                    grid_hash,
                    report: Some(report),
                    charge_field: None,
                    solve: meta,
                    wall_time: start.elapsed(),
                    config: cfg.clone(),
                }
            }
            StudyMode::SurfaceCharge => {
                let cv = cfg.cavity.as_ref().expect("validated");
                let facet = if cfg.charge.facet.is_empty() {
                    format!("mirror+{}", cv.axis)
                } else {
                    cfg.charge.facet.clone()
                };
                let (e, sol) =
                    solve_surface_charge(&assembly, &dom.grid, &facet, cfg.charge.sigma)?;
                CaseResult {
                    case_id: case_id(cfg),
                    sweep_value: None,
                    trap: cfg.trap.clone(),
                    study: cfg.study.clone(),
                    config_hash,
                    grid_hash,
                    report: None,
                    charge_field: Some(e.to_array()),
                    solve: sol.meta.clone(),
                    wall_time: start.elapsed(),
                    config: cfg.clone(),
                }
            }
        };
        Ok(case)
    }
}

fn case_id(cfg: &StudyConfig) -> String {
    let mut parts = vec![cfg.trap.clone()];
    if let Some(cv) = &cfg.cavity {
        parts.push(format!("{}cav", cv.axis));
        parts.push(format!("L{:.3}mm", cv.length * 1e3));
        let m = &cv.misalignment;
        if m.longitudinal != 0.0 {
            parts.push(format!("long{:.3}mm", m.longitudinal * 1e3));
        }
        if m.transverse != 0.0 {
            parts.push(format!(
                "trans{}{:.3}mm",
                m.transverse_axis.clone().unwrap_or_default(),
                m.transverse * 1e3
            ));
        }
        if m.skew != 0.0 {
            parts.push(format!("skew{:.3}mm", m.skew * 1e3));
        }
        if cv.epsilon != 3.8 {
            parts.push(format!("eps{}", cv.epsilon));
        }
        if let Some(c) = &cv.coating {
            if c.sigma > 0.0 {
                parts.push(format!("sigma{}", c.sigma));
            } else {
                parts.push(format!("coat{}", c.epsilon));
            }
            if c.grounded {
                parts.push("gnd".into());
            }
        }
        if cv.metalized {
            parts.push("metal".into());
        }
    }
    if cfg.study == StudyMode::SurfaceCharge {
        parts.push("charge".into());
    }
    if cfg.scale != 1.0 {
        parts.push(format!("a{}", cfg.scale));
    }
    parts.join("_")
}

/// Expand a sweep config into per-case configs, ordered by sweep value.
pub fn expand_sweep(cfg: &StudyConfig) -> Result<Vec<(Option<f64>, StudyConfig)>, ConfigError> {
    let Some(sweep) = &cfg.sweep else {
        return Ok(vec![(None, cfg.clone())]);
    };
    let mut out = Vec::new();
    for &v in &sweep.values {
        let mut c = cfg.clone();
        c.sweep = None;
        let cv = c
            .cavity
            .as_mut()
            .ok_or_else(|| ConfigError::Invalid("sweep requires a cavity".into()))?;
        match sweep.parameter.as_str() {
            "cavity_length" => cv.length = v,
            "epsilon" => cv.epsilon = v,
            "conductivity" => {
                let coat = cv.coating.as_mut().expect("validated coating");
                coat.sigma = v;
            }
            "misalignment" => {
                let m = &mut cv.misalignment;
                // Scale the configured offset pattern to magnitude v.
                let mag = m.longitudinal.abs() + m.transverse.abs() + m.skew.abs();
                if mag == 0.0 {
                    m.longitudinal = v;
                } else {
                    let s = v / mag;
                    m.longitudinal *= s;
                    m.transverse *= s;
                    m.skew *= s;
                }
            }
            other => return Err(ConfigError::UnknownSweep(other.into())),
        }
        out.push((Some(v), c));
    }
    Ok(out)
}

pub fn effective_workers(cfg: &StudyConfig) -> usize {
    if cfg.output.workers > 0 {
        return cfg.output.workers;
    }
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&v| v > 0)
        .unwrap_or(1)
}

/// Run all cases of a (possibly swept) config. Case failures are reported
/// individually; completed cases still produce results, in sweep order.
pub fn run_sweep(
    session: &Session,
    cfg: &StudyConfig,
) -> Result<Vec<(Option<f64>, Result<CaseResult, PipelineError>)>, ConfigError> {
    let cases = expand_sweep(cfg)?;
    let workers = effective_workers(cfg);
    if workers <= 1 || cases.len() <= 1 {
        return Ok(cases
            .into_iter()
            .map(|(v, c)| {
                let mut r = session.run_case(&c);
                if let Ok(case) = &mut r {
                    case.sweep_value = v;
                }
                (v, r)
            })
            .collect());
    }
    // Simple indexed work queue; results ordered by case index.
    use std::sync::atomic::{AtomicUsize, Ordering};
    let next = AtomicUsize::new(0);
    let mut slots: Vec<Option<(Option<f64>, Result<CaseResult, PipelineError>)>> =
        (0..cases.len()).map(|_| None).collect();
    let slot_refs: Vec<Mutex<&mut Option<_>>> = slots.iter_mut().map(Mutex::new).collect();
    std::thread::scope(|scope| {
        for _ in 0..workers.min(cases.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= cases.len() {
                    break;
                }
                let (v, c) = &cases[i];
                let mut r = session.run_case(c);
                if let Ok(case) = &mut r {
                    case.sweep_value = *v;
                }
                **slot_refs[i].lock().unwrap() = Some((*v, r));
            });
        }
    });
    Ok(slots.into_iter().map(|s| s.expect("all cases executed")).collect())
}

// ---------------------------------------------------------------------------
// Presets
// ---------------------------------------------------------------------------

const SWEEP_LENGTHS: [f64; 8] = [0.5e-3, 0.75e-3, 1.0e-3, 1.5e-3, 2.0e-3, 3.0e-3, 4.0e-3, 5.0e-3];
const CHARGE_LENGTHS: [f64; 5] = [1.0e-3, 2.0e-3, 3.0e-3, 4.0e-3, 5.0e-3];

fn trap_axes(trap: &str) -> &'static [&'static str] {
    match trap {
        "endcap" | "stylus" => &["x", "y"],
        _ => &["x", "y", "z"],
    }
}

/// Named study presets reproducing the reference result sets.
pub fn preset(name: &str) -> Result<Vec<StudyConfig>, PipelineError> {
    let base = StudyConfig::default();
    let with_trap = |trap: &str| StudyConfig { trap: trap.into(), ..base.clone() };
    let with_cavity = |trap: &str, axis: &str, length: f64| {
        let mut c = with_trap(trap);
        c.cavity = Some(CavityConfig { axis: axis.into(), length, ..CavityConfig::default() });
        c
    };
    let mut out = Vec::new();
    match name {
        "table1" => {
            for trap in VALID_TRAPS {
                out.push(with_trap(trap));
            }
        }
        "fig3" | "fig4" => {
            for trap in VALID_TRAPS {
                for axis in trap_axes(trap) {
                    let mut c = with_cavity(trap, axis, 1.0e-3);
                    c.sweep = Some(SweepConfig {
                        parameter: "cavity_length".into(),
                        values: SWEEP_LENGTHS.to_vec(),
                    });
                    out.push(c);
                }
            }
        }
        "fig5" => {
            for axis in ["x", "y", "z"] {
                for mode in ["longitudinal", "transverse", "skew"] {
                    let mut c = with_cavity("blade", axis, 1.0e-3);
                    let cv = c.cavity.as_mut().unwrap();
                    match mode {
                        "longitudinal" => cv.misalignment.longitudinal = 0.1e-3,
                        "transverse" => cv.misalignment.transverse = 0.1e-3,
                        _ => cv.misalignment.skew = 0.1e-3,
                    }
                    out.push(c);
                }
            }
        }
        "fig6" => {
            let mut c = with_cavity("blade", "x", 1.0e-3);
            c.cavity.as_mut().unwrap().misalignment.longitudinal = 0.1e-3;
            c.sweep = Some(SweepConfig {
                parameter: "cavity_length".into(),
                values: vec![1.0e-3, 2.0e-3, 3.0e-3, 4.0e-3, 5.0e-3],
            });
            out.push(c);
        }
        "fig7" => {
            for trap in VALID_TRAPS {
                for axis in trap_axes(trap) {
                    let mut c = with_cavity(trap, axis, 1.0e-3);
                    c.study = StudyMode::SurfaceCharge;
                    c.sweep = Some(SweepConfig {
                        parameter: "cavity_length".into(),
                        values: CHARGE_LENGTHS.to_vec(),
                    });
                    out.push(c);
                }
            }
        }
        "fig8" => {
            for eps in [2.1, 3.8, 4.5] {
                let mut c = with_cavity("blade", "x", 1.0e-3);
                c.cavity.as_mut().unwrap().epsilon = eps;
                out.push(c);
            }
            // Dielectric facet coating.
            let mut coated = with_cavity("blade", "x", 1.0e-3);
            coated.cavity.as_mut().unwrap().coating = Some(CoatingConfig::default());
            out.push(coated);
            // Conductive facet coating sweep.
            let mut conductive = with_cavity("blade", "x", 1.0e-3);
            conductive.cavity.as_mut().unwrap().coating =
                Some(CoatingConfig { sigma: 0.01, epsilon: 15.0, ..CoatingConfig::default() });
            conductive.sweep = Some(SweepConfig {
                parameter: "conductivity".into(),
                values: vec![0.01, 0.1, 1.0, 10.0, 100.0],
            });
            out.push(conductive);
            // Fully metalized grounded substrate.
            let mut metal = with_cavity("blade", "x", 1.0e-3);
            metal.cavity.as_mut().unwrap().metalized = true;
            out.push(metal);
        }
        other => return Err(PipelineError::UnknownPreset(other.into())),
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// CSV emission
// ---------------------------------------------------------------------------

pub const REPORT_CSV_HEADER: &str = "case_id,trap,study,scale,cavity_axis,cavity_length_m,\
mis_longitudinal_m,mis_transverse_m,mis_skew_m,substrate_eps,coating_eps,coating_sigma_s_per_m,\
coating_grounded,metalized,sweep_value,config_hash,grid_hash,geometry_hash,null_x_m,null_y_m,\
null_z_m,depth_x_ev,depth_y_ev,depth_z_ev,freq_x_hz,freq_y_hz,freq_z_hz,norm_depth_x,\
norm_depth_y,norm_depth_z,norm_freq_x,norm_freq_y,norm_freq_z,c2_ev_m2,c3_ev_m3,c4_ev_m4,\
c5_ev_m5,c6_ev_m6,fit_range_m,a3,a4,a5,a6,l0_m,e_x_v_m,e_y_v_m,e_z_v_m,e_mag_v_m,iterations,\
residual";

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

/// One CSV row per completed case, in execution order.
pub fn cases_to_csv(results: &[(Option<f64>, Result<CaseResult, PipelineError>)]) -> String {
    let mut out = String::from(REPORT_CSV_HEADER);
    out.push('\n');
    for (sweep_value, r) in results {
        let Ok(case) = r else { continue };
        let cfg = &case.config;
        let cv = cfg.cavity.clone().unwrap_or_default();
        let has_cavity = cfg.cavity.is_some();
        let coat = cv.coating.clone();
        let rep = case.report.as_ref();
        let nrm = rep.and_then(|r| r.normalized.as_ref());
        let tay = rep.and_then(|r| r.taylor.as_ref());
        let anh = rep.and_then(|r| r.anharmonicity.as_ref());
        let e = case.charge_field;
        let row = [
            case.case_id.clone(),
            cfg.trap.clone(),
            match cfg.study {
                StudyMode::Trap => "trap".into(),
                StudyMode::SurfaceCharge => "surface_charge".into(),
            },
            format!("{}", cfg.scale),
            if has_cavity { cv.axis.clone() } else { String::new() },
            if has_cavity { format!("{}", cv.length) } else { String::new() },
            if has_cavity { format!("{}", cv.misalignment.longitudinal) } else { String::new() },
            if has_cavity { format!("{}", cv.misalignment.transverse) } else { String::new() },
            if has_cavity { format!("{}", cv.misalignment.skew) } else { String::new() },
            if has_cavity { format!("{}", cv.epsilon) } else { String::new() },
            opt(coat.as_ref().map(|c| c.epsilon)),
            opt(coat.as_ref().map(|c| c.sigma)),
            coat.as_ref().map(|c| format!("{}", c.grounded)).unwrap_or_default(),
            format!("{}", cv.metalized),
            opt(*sweep_value),
            case.config_hash.clone(),
            case.grid_hash.clone(),
            rep.map(|r| r.geometry_hash.clone()).unwrap_or_default(),
            opt(rep.map(|r| r.null_position[0])),
            opt(rep.map(|r| r.null_position[1])),
            opt(rep.map(|r| r.null_position[2])),
            opt(rep.and_then(|r| r.axes[0].depth_ev)),
            opt(rep.and_then(|r| r.axes[1].depth_ev)),
            opt(rep.and_then(|r| r.axes[2].depth_ev)),
            opt(rep.and_then(|r| r.axes[0].frequency_hz)),
            opt(rep.and_then(|r| r.axes[1].frequency_hz)),
            opt(rep.and_then(|r| r.axes[2].frequency_hz)),
            opt(nrm.and_then(|n| n.depth[0])),
            opt(nrm.and_then(|n| n.depth[1])),
            opt(nrm.and_then(|n| n.depth[2])),
            opt(nrm.and_then(|n| n.frequency[0])),
            opt(nrm.and_then(|n| n.frequency[1])),
            opt(nrm.and_then(|n| n.frequency[2])),
            opt(tay.map(|t| t.c[0])),
            opt(tay.map(|t| t.c[1])),
            opt(tay.map(|t| t.c[2])),
            opt(tay.map(|t| t.c[3])),
            opt(tay.map(|t| t.c[4])),
            opt(tay.map(|t| t.fit_range)),
            opt(anh.map(|a| a.a[0])),
            opt(anh.map(|a| a.a[1])),
            opt(anh.map(|a| a.a[2])),
            opt(anh.map(|a| a.a[3])),
            opt(anh.map(|a| a.l0)),
            opt(e.map(|e| e[0])),
            opt(e.map(|e| e[1])),
            opt(e.map(|e| e[2])),
            opt(e.map(|e| (e[0] * e[0] + e[1] * e[1] + e[2] * e[2]).sqrt())),
            format!("{}", case.solve.iterations),
            format!("{:e}", case.solve.final_residual),
        ];
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = parse_config("trap = \"blade\"").unwrap();
        assert_eq!(cfg.drive.voltage, 200.0);
        assert_eq!(cfg.drive.frequency_hz, 10.0e6);
        assert_eq!(cfg.ion.mass_amu, 40.0);
        assert_eq!(cfg.ion.charge_e, 1.0);
        assert_eq!(cfg.scale, 1.0);
    }

    #[test]
    fn unknown_trap_names_valid_ids() {
        let err = parse_config("trap = \"donut\"").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("donut"));
        for id in VALID_TRAPS {
            assert!(msg.contains(id), "error should list '{id}': {msg}");
        }
    }

    #[test]
    fn endcap_z_axis_maps_to_x_with_note() {
        let cfg = parse_config(
            "trap = \"endcap\"\n[cavity]\naxis = \"z\"\nlength = 1e-3\n",
        )
        .unwrap();
        assert_eq!(cfg.cavity.unwrap().axis, "x");
        assert!(!cfg.notes.is_empty());
        // y stays y.
        let cfg2 = parse_config(
            "trap = \"endcap\"\n[cavity]\naxis = \"y\"\nlength = 1e-3\n",
        )
        .unwrap();
        assert_eq!(cfg2.cavity.unwrap().axis, "y");
    }

    #[test]
    fn sweep_validation() {
        let err = parse_config(
            "trap = \"blade\"\n[cavity]\naxis = \"x\"\n[sweep]\nparameter = \"cavity_length\"\nvalues = []\n",
        )
        .unwrap_err();
        assert!(matches!(err, ConfigError::EmptySweep));
        let err = parse_config(
            "trap = \"blade\"\n[cavity]\naxis = \"x\"\n[sweep]\nparameter = \"banana\"\nvalues = [1e-3]\n",
        )
        .unwrap_err();
        assert!(matches!(err, ConfigError::UnknownSweep(_)));
        let err = parse_config(
            "trap = \"blade\"\n[cavity]\naxis = \"x\"\nlength = -1.0\n",
        )
        .unwrap_err();
        assert!(matches!(err, ConfigError::Invalid(_)));
    }

    #[test]
    fn presets_have_expected_shapes() {
        assert_eq!(preset("table1").unwrap().len(), 5);
        let fig3 = preset("fig3").unwrap();
        // blade/wafer/surface: 3 axes; endcap/stylus: 2 axes.
        assert_eq!(fig3.len(), 13);
        assert!(fig3.iter().all(|c| c.sweep.is_some()));
        let fig5 = preset("fig5").unwrap();
        assert_eq!(fig5.len(), 9);
        assert!(fig5.iter().all(|c| c.trap == "blade" && c.sweep.is_none()));
        let fig8 = preset("fig8").unwrap();
        assert_eq!(fig8.len(), 6);
        assert!(matches!(preset("fig99"), Err(PipelineError::UnknownPreset(_))));
    }

    #[test]
    fn sweep_expansion_orders_values() {
        let mut cfg = StudyConfig::default();
        cfg.cavity = Some(CavityConfig::default());
        cfg.sweep = Some(SweepConfig {
            parameter: "cavity_length".into(),
            values: vec![1e-3, 2e-3, 3e-3],
        });
        let cases = expand_sweep(&cfg).unwrap();
        assert_eq!(cases.len(), 3);
        assert_eq!(cases[1].1.cavity.as_ref().unwrap().length, 2e-3);
        assert!(cases.iter().all(|(_, c)| c.sweep.is_none()));
    }
}
