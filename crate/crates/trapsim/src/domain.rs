//! Automatic solve-domain sizing: double the grounded outer box until the
//! trap observables stop responding, then return the smaller converged box.

use crate::analysis::{find_rf_null, pseudopotential, secular_frequency, trap_depth, IonSpecies};
use crate::assembly::{TrapAssembly, TrapKind};
use crate::grid::Grid3D;
use crate::material::rasterize;
use crate::runner::PipelineError;
use crate::solver::{assemble, solve, SolveSpec};
use crate::vec3::Vec3;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone)]
pub struct AutoDomainOptions {
    /// Spacing of the returned production grid (m).
    pub final_h: f64,
    /// Approximate cells along the largest axis during probe solves.
    pub probe_cells: usize,
    pub max_doublings: usize,
    pub solver_tolerance: f64,
    pub max_iterations: usize,
    /// Lower bound on the initial per-axis half extent (m).
    pub min_half_extent: f64,
}

impl AutoDomainOptions {
    pub fn new(final_h: f64, scale: f64) -> Self {
        AutoDomainOptions {
            final_h,
            probe_cells: 72,
            max_doublings: 3,
            solver_tolerance: 1e-8,
            max_iterations: 50_000,
            min_half_extent: 2.0e-3 * scale,
        }
    }
}

/// One entry of the domain convergence log.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DomainStep {
    pub half_extents: [f64; 3],
    pub dims: [usize; 3],
    pub depth_ev: [f64; 2],
    pub frequency_hz: [f64; 2],
    /// Max relative change vs the previous step (None for the first).
    pub rel_change: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct DomainResult {
    pub grid: Grid3D,
    pub log: Vec<DomainStep>,
}

/// Default rf-null search region: a box around the nominal center, clamped
/// above the electrode plane for the open-geometry traps so that screened
/// low-field pockets between electrodes are not mistaken for the null.
pub fn default_null_region(assembly: &TrapAssembly, half: f64) -> (Vec3, Vec3) {
    let c = assembly.nominal_center;
    let mut lo = c - Vec3::new(half, half, half);
    let hi = c + Vec3::new(half, half, half);
    let floor = match assembly.kind {
        TrapKind::Surface => Some(0.15e-3 * assembly.scale),
        TrapKind::Stylus => Some(1.2e-3 * assembly.scale),
        _ => None,
    };
    if let Some(f) = floor {
        lo.y = lo.y.max(f);
    }
    (lo, hi)
}

/// Grid whose cells stay aligned to `center` when the half extents double.
fn snapped_grid(center: Vec3, half: [f64; 3], h: f64) -> Grid3D {
    let mut dims = [0usize; 3];
    for k in 0..3 {
        let cells = ((half[k] / h).ceil() as usize).max(8);
        dims[k] = 2 * cells;
    }
    Grid3D::from_center(center, h, dims)
}

struct ProbeObservables {
    depth: [f64; 2],
    freq: [f64; 2],
}

fn probe_observables(
    assembly: &TrapAssembly,
    grid: &Grid3D,
    opts: &AutoDomainOptions,
) -> Result<ProbeObservables, PipelineError> {
    let (map, mask) = rasterize(assembly, grid)?;
    let mut spec = SolveSpec::rf(assembly);
    spec.tolerance = opts.solver_tolerance;
    spec.max_iterations = opts.max_iterations;
    let system = assemble(&map, &mask, &spec, None)?;
    let sol = solve(&system, &spec)?;
    let species = IonSpecies::from_amu_e(assembly.ion.mass_amu, assembly.ion.charge_e);
    let pseudo = pseudopotential(&sol, species, spec.omega, "probe")?;
    let (lo, hi) = default_null_region(assembly, 0.45e-3 * assembly.scale);
    let null = find_rf_null(&pseudo, lo, hi)?;
    let window = (50e-6 * assembly.scale).max(3.0 * grid.h);
    let mut depth = [0.0; 2];
    let mut freq = [0.0; 2];
    for axis in 0..2 {
        let d = trap_depth(&pseudo, null, Vec3::axis_unit(axis))?;
        depth[axis] = d.depth_ev.ok_or(PipelineError::UnboundedProbeDepth { axis })?;
        freq[axis] = secular_frequency(&pseudo, null, Vec3::axis_unit(axis), window)?;
    }
    Ok(ProbeObservables { depth, freq })
}

/// Find a converged solve domain for the assembly.
///
/// Starts from a box derived from the shape extents (at least 4x the
/// electrode separation scale), doubles it until trap depth and secular
/// frequencies change by less than `tolerance`, and returns the smaller
/// converged grid at the production spacing.
pub fn auto_domain(
    assembly: &TrapAssembly,
    tolerance: f64,
    opts: &AutoDomainOptions,
) -> Result<DomainResult, PipelineError> {
    if !(tolerance > 0.0 && tolerance <= 0.1) {
        return Err(PipelineError::InvalidDomainTolerance(tolerance));
    }
    let center = assembly.nominal_center;
    let (lo, hi) = assembly.bbox();
    let mut half = [0f64; 3];
    for k in 0..3 {
        let ext = if lo[k].is_finite() {
            (center[k] - lo[k]).abs().max((hi[k] - center[k]).abs())
        } else {
            0.0
        };
        half[k] = (1.05 * ext).max(opts.min_half_extent);
    }

    let probe_h = (2.0 * half.iter().cloned().fold(0.0f64, f64::max) / opts.probe_cells as f64)
        .max(opts.final_h);
    // Keep a few probe cells of vacuum between any shape and the boundary
    // shell at the coarse probe resolution.
    for k in 0..3 {
        let ext = if lo[k].is_finite() {
            (center[k] - lo[k]).abs().max((hi[k] - center[k]).abs())
        } else {
            0.0
        };
        half[k] = half[k].max(ext + 3.0 * probe_h);
    }

    let mut log: Vec<DomainStep> = Vec::new();
    let mut prev: Option<ProbeObservables> = None;
    let mut current_half = half;
    for step in 0..=opts.max_doublings {
        let grid = snapped_grid(center, current_half, probe_h);
        let obs = probe_observables(assembly, &grid, opts)?;
        let rel_change = prev.as_ref().map(|p| {
            let mut worst: f64 = 0.0;
            for a in 0..2 {
                worst = worst.max((obs.depth[a] - p.depth[a]).abs() / p.depth[a].abs().max(1e-300));
                worst = worst.max((obs.freq[a] - p.freq[a]).abs() / p.freq[a].abs().max(1e-300));
            }
            worst
        });
        log.push(DomainStep {
            half_extents: current_half,
            dims: grid.dims,
            depth_ev: obs.depth,
            frequency_hz: obs.freq,
            rel_change,
        });
        if std::env::var_os("TRAPSIM_LOG").is_some() {
            eprintln!(
                "auto_domain step {step}: half ({:.2}, {:.2}, {:.2}) mm dims {:?} h {:.0} um depth ({:.4}, {:.4}) eV f ({:.4}, {:.4}) MHz change {:?}",
                current_half[0] * 1e3,
                current_half[1] * 1e3,
                current_half[2] * 1e3,
                grid.dims,
                probe_h * 1e6,
                obs.depth[0],
                obs.depth[1],
                obs.freq[0] / 1e6,
                obs.freq[1] / 1e6,
                rel_change,
            );
        }
        if let Some(change) = rel_change {
            if change < tolerance {
                // Converged: return the SMALLER of the two agreeing boxes.
                let smaller = log[log.len() - 2].half_extents;
                return Ok(DomainResult { grid: snapped_grid(center, smaller, opts.final_h), log });
            }
        }
        prev = Some(obs);
        if step < opts.max_doublings {
            for h in current_half.iter_mut() {
                *h *= 2.0;
            }
        }
    }
    Err(PipelineError::DomainNotConverged { doublings: opts.max_doublings, log })
}
