//! Trap observables derived from field solutions: pseudopotential maps,
//! rf-null location, trap depths, secular frequencies, Taylor expansion of
//! the potential and anharmonicity coefficients.

use crate::consts::{ATOMIC_MASS_UNIT, BOLTZMANN, ELEMENTARY_CHARGE};
use crate::grid::Grid3D;
use crate::polyfit::{poly_eval, polyfit_powers, sym3_eigen};
use crate::solver::{FieldSolution, SolveMode};
use crate::vec3::Vec3;
use serde::{Deserialize, Serialize};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("pseudopotential requires an rf-mode solution, got {0:?}")]
    NotRfSolution(SolveMode),
    #[error("no interior pseudopotential minimum in the search region")]
    NoInteriorNull,
    #[error("pseudopotential is not sampleable at {0:?} (outside domain or against a conductor)")]
    NotSampleable(Vec3),
    #[error("negative curvature along the requested direction: not a trapping direction")]
    NegativeCurvature,
    #[error("polynomial fit failed (degenerate sample set)")]
    FitFailed,
    #[error("taylor fit range grew to the domain edge without stabilizing")]
    RangeGrowthHitDomain,
    #[error("baseline report has zero depth along axis {0}")]
    BaselineZeroDepth(usize),
    #[error("report lacks an interior null position")]
    MissingNull,
}

/// Ion species in SI units.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct IonSpecies {
    /// Mass (kg).
    pub mass: f64,
    /// Charge (C).
    pub charge: f64,
}

impl IonSpecies {
    pub fn from_amu_e(mass_amu: f64, charge_e: f64) -> IonSpecies {
        assert!(mass_amu > 0.0, "ion mass must be positive");
        assert!(charge_e != 0.0, "ion charge must be nonzero");
        IonSpecies {
            mass: mass_amu * ATOMIC_MASS_UNIT,
            charge: charge_e * ELEMENTARY_CHARGE,
        }
    }

    pub fn calcium40() -> IonSpecies {
        IonSpecies::from_amu_e(40.0, 1.0)
    }
}

/// How a [`PseudoMap`] evaluates off-cell samples.
#[derive(Clone)]
enum Sampler {
    /// Trilinear interpolation of the per-cell values.
    Values,
    /// Trilinear interpolation of the E-field components, squared afterwards.
    /// Exact for locally linear fields, which a quadrupole null is.
    Field { e: std::sync::Arc<[crate::solver::FieldData; 3]>, scale: f64 },
}

/// Pseudopotential scalar field in eV on the solve grid. Conductor and
/// Dirichlet-boundary cells hold +inf and are excluded from sampling.
#[derive(Clone)]
pub struct PseudoMap {
    pub grid: Grid3D,
    /// Pseudopotential energy per cell (eV); +inf marks unsampleable cells.
    pub values: Vec<f64>,
    pub omega: f64,
    pub species: IonSpecies,
    pub geometry_hash: String,
    sampler: Sampler,
}

impl PseudoMap {
    /// Build a map from explicit values (analysis oracles and bindings).
    pub fn from_values(
        grid: Grid3D,
        values: Vec<f64>,
        omega: f64,
        species: IonSpecies,
        geometry_hash: impl Into<String>,
    ) -> PseudoMap {
        assert_eq!(values.len(), grid.ncells());
        PseudoMap {
            grid,
            values,
            omega,
            species,
            geometry_hash: geometry_hash.into(),
            sampler: Sampler::Values,
        }
    }

    /// Trilinear sample; None outside the domain or where any interpolation
    /// corner touches a conductor/boundary cell.
    pub fn sample(&self, p: Vec3) -> Option<f64> {
        if !self.grid.contains(p) {
            return None;
        }
        let (w, base) = self.grid.interp_weights(p);
        let mut acc = 0.0;
        for dz in 0..2usize {
            for dy in 0..2usize {
                for dx in 0..2usize {
                    let v = self.values[self.grid.idx(base.0 + dx, base.1 + dy, base.2 + dz)];
                    if !v.is_finite() {
                        return None;
                    }
                    let wx = if dx == 0 { 1.0 - w[0] } else { w[0] };
                    let wy = if dy == 0 { 1.0 - w[1] } else { w[1] };
                    let wz = if dz == 0 { 1.0 - w[2] } else { w[2] };
                    acc += v * wx * wy * wz;
                }
            }
        }
        match &self.sampler {
            Sampler::Values => Some(acc),
            Sampler::Field { e, scale } => {
                let mut mag_sq = 0.0;
                for comp in e.iter() {
                    let mut re = 0.0;
                    let mut im = 0.0;
                    for dz in 0..2usize {
                        for dy in 0..2usize {
                            for dx in 0..2usize {
                                let c = self
                                    .grid
                                    .idx(base.0 + dx, base.1 + dy, base.2 + dz);
                                let wx = if dx == 0 { 1.0 - w[0] } else { w[0] };
                                let wy = if dy == 0 { 1.0 - w[1] } else { w[1] };
                                let wz = if dz == 0 { 1.0 - w[2] } else { w[2] };
                                let v = comp.as_complex(c);
                                re += v.re * wx * wy * wz;
                                im += v.im * wx * wy * wz;
                            }
                        }
                    }
                    mag_sq += re * re + im * im;
                }
                Some(scale * mag_sq)
            }
        }
    }
}

/// Pseudopotential (eV) from an rf field solution:
/// Phi = Q^2 |E|^2 / (4 M Omega^2) / e, using complex component magnitudes
/// as the oscillation amplitudes.
pub fn pseudopotential(
    sol: &FieldSolution,
    species: IonSpecies,
    omega: f64,
    geometry_hash: impl Into<String>,
) -> Result<PseudoMap, AnalysisError> {
    match sol.meta.mode {
        SolveMode::RfQuasistaticReal | SolveMode::RfQuasistaticComplex => {}
        other => return Err(AnalysisError::NotRfSolution(other)),
    }
    let scale = species.charge * species.charge
        / (4.0 * species.mass * omega * omega * ELEMENTARY_CHARGE);
    let grid = sol.grid.clone();
    let values: Vec<f64> = (0..grid.ncells())
        .map(|c| {
            if sol.is_conductor(c) {
                f64::INFINITY
            } else {
                scale * sol.e_mag_sq(c)
            }
        })
        .collect();
    let mut map = PseudoMap::from_values(grid, values, omega, species, geometry_hash);
    map.sampler = Sampler::Field { e: Arc::clone(&sol.e), scale };
    Ok(map)
}

/// Locate the rf null: coarse argmin over the region followed by a quadric
/// fit on the 3x3x3 neighborhood. Degenerate directions (nodal lines) are
/// held at the argmin plane.
pub fn find_rf_null(pseudo: &PseudoMap, lo: Vec3, hi: Vec3) -> Result<Vec3, AnalysisError> {
    let g = &pseudo.grid;
    let mut best: Option<(f64, (usize, usize, usize))> = None;
    for k in 1..g.dims[2] - 1 {
        for j in 1..g.dims[1] - 1 {
            for i in 1..g.dims[0] - 1 {
                let p = g.cell_center(i, j, k);
                if p.x < lo.x || p.x > hi.x || p.y < lo.y || p.y > hi.y || p.z < lo.z || p.z > hi.z
                {
                    continue;
                }
                let v = pseudo.values[g.idx(i, j, k)];
                if v.is_finite() && best.map_or(true, |(b, _)| v < b) {
                    best = Some((v, (i, j, k)));
                }
            }
        }
    }
    let Some((_, (ci, cj, ck))) = best else {
        return Err(AnalysisError::NoInteriorNull);
    };

    // Quadric refinement on the 27-point neighborhood.
    let center = g.cell_center(ci, cj, ck);
    let h = g.h;
    let mut rows = Vec::with_capacity(27);
    let mut ys = Vec::with_capacity(27);
    for dk in -1i64..=1 {
        for dj in -1i64..=1 {
            for di in -1i64..=1 {
                let (i, j, k) = (
                    (ci as i64 + di) as usize,
                    (cj as i64 + dj) as usize,
                    (ck as i64 + dk) as usize,
                );
                let v = pseudo.values[g.idx(i, j, k)];
                if !v.is_finite() {
                    return Err(AnalysisError::NoInteriorNull);
                }
                let (x, y, z) = (di as f64, dj as f64, dk as f64);
                rows.push(vec![1.0, x, y, z, x * x, y * y, z * z, x * y, x * z, y * z]);
                ys.push(v);
            }
        }
    }
    let c = crate::polyfit::lsq_fit(&rows, &ys).ok_or(AnalysisError::FitFailed)?;
    let grad = [c[1], c[2], c[3]];
    let hess = [
        [2.0 * c[4], c[7], c[8]],
        [c[7], 2.0 * c[5], c[9]],
        [c[8], c[9], 2.0 * c[6]],
    ];
    let (evals, evecs) = sym3_eigen(hess);
    let emax = evals.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    if emax == 0.0 {
        return Ok(center);
    }
    // Solve H s = -g in the eigenbasis, dropping near-degenerate directions.
    let mut shift = [0.0f64; 3];
    let mut degenerate = [false; 3];
    for m in 0..3 {
        let lam = evals[m];
        let gm: f64 = (0..3).map(|r| evecs[r][m] * grad[r]).sum();
        if lam.abs() < 1e-6 * emax || lam < 0.0 {
            degenerate[m] = true;
            continue;
        }
        let sm = -gm / lam;
        for r in 0..3 {
            shift[r] += sm * evecs[r][m];
        }
    }
    // Interior check: reject argmin cells pressed against the region edge
    // along any direction that actually curves.
    for axis in 0..3 {
        let axis_degenerate = (0..3).all(|m| degenerate[m] || evecs[axis][m].abs() < 0.99)
            && !(0..3).any(|m| !degenerate[m] && evecs[axis][m].abs() >= 0.99);
        let p = center[axis];
        let near_edge = p - lo[axis] < 0.75 * h || hi[axis] - p < 0.75 * h;
        let region_wide = hi[axis] - lo[axis] > 2.5 * h;
        if near_edge && region_wide && !axis_degenerate {
            return Err(AnalysisError::NoInteriorNull);
        }
    }
    let clamp = 1.5;
    let refined = Vec3::new(
        center.x + h * shift[0].clamp(-clamp, clamp),
        center.y + h * shift[1].clamp(-clamp, clamp),
        center.z + h * shift[2].clamp(-clamp, clamp),
    );
    Ok(refined)
}

/// Outcome of one depth ray.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub enum RayOutcome {
    Barrier { value_ev: f64, position: [f64; 3] },
    /// Ray left the domain (or ran into a conductor) before any local maximum.
    Unbounded,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DepthResult {
    /// min(barrier+, barrier-) - Phi(null), when at least one ray has a barrier.
    pub depth_ev: Option<f64>,
    pub barrier_position: Option<[f64; 3]>,
    pub positive_ray: RayOutcome,
    pub negative_ray: RayOutcome,
}

/// Trap depth along +-direction rays from the null: each ray's barrier is its
/// first local maximum of the pseudopotential, located by sampling at half
/// grid steps and refined by a 3-point parabola.
pub fn trap_depth(
    pseudo: &PseudoMap,
    null: Vec3,
    direction: Vec3,
) -> Result<DepthResult, AnalysisError> {
    let dir = direction.normalized();
    let phi0 = pseudo.sample(null).ok_or(AnalysisError::NotSampleable(null))?;
    let step = pseudo.grid.h / 2.0;

    let walk = |sign: f64| -> RayOutcome {
        let mut prev2: Option<f64> = None;
        let mut prev = phi0;
        let mut t = 0.0;
        let mut rising = false;
        loop {
            t += step;
            let p = null + dir * (sign * t);
            let Some(v) = pseudo.sample(p) else {
                return RayOutcome::Unbounded;
            };
            if v < prev && rising {
                // prev at t-step is the first local maximum; refine with the
                // parabola through the last three samples.
                let (v0, v1, v2) = (prev2.unwrap_or(phi0), prev, v);
                let denom = v0 - 2.0 * v1 + v2;
                let (dt, vmax) = if denom.abs() > 0.0 {
                    let d = 0.5 * (v0 - v2) / denom;
                    (d.clamp(-1.0, 1.0), v1 - 0.25 * (v0 - v2) * d.clamp(-1.0, 1.0))
                } else {
                    (0.0, v1)
                };
                let tm = t - step + dt * step;
                let pos = null + dir * (sign * tm);
                return RayOutcome::Barrier { value_ev: vmax.max(v1), position: pos.to_array() };
            }
            rising = v > prev || (rising && v == prev);
            prev2 = Some(prev);
            prev = v;
        }
    };

    let pos_ray = walk(1.0);
    let neg_ray = walk(-1.0);
    let barrier = |r: &RayOutcome| match r {
        RayOutcome::Barrier { value_ev, position } => Some((*value_ev, *position)),
        RayOutcome::Unbounded => None,
    };
    let (depth_ev, barrier_position) = match (barrier(&pos_ray), barrier(&neg_ray)) {
        (Some((vp, pp)), Some((vn, pn))) => {
            if vp <= vn {
                (Some(vp - phi0), Some(pp))
            } else {
                (Some(vn - phi0), Some(pn))
            }
        }
        (Some((vp, pp)), None) => (Some(vp - phi0), Some(pp)),
        (None, Some((vn, pn))) => (Some(vn - phi0), Some(pn)),
        (None, None) => (None, None),
    };
    Ok(DepthResult { depth_ev, barrier_position, positive_ray: pos_ray, negative_ray: neg_ray })
}

/// Parabola curvature C2 (eV/m^2) of a 1D sampled profile over +-window.
pub fn fit_parabola_curvature(
    sample: impl Fn(f64) -> Option<f64>,
    window: f64,
) -> Result<f64, AnalysisError> {
    let n = 21;
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for i in 0..n {
        let t = -window + 2.0 * window * (i as f64) / ((n - 1) as f64);
        let v = sample(t).ok_or(AnalysisError::FitFailed)?;
        xs.push(t);
        ys.push(v);
    }
    let coeffs = polyfit_powers(&xs, &ys, &[0, 1, 2]).ok_or(AnalysisError::FitFailed)?;
    Ok(coeffs[2])
}

/// Curvature-to-frequency conversion: omega = sqrt(2 e C2 / M), C2 in eV/m^2.
pub fn frequency_from_c2(c2: f64, species: IonSpecies) -> Result<f64, AnalysisError> {
    if c2 <= 0.0 {
        return Err(AnalysisError::NegativeCurvature);
    }
    let omega = (2.0 * ELEMENTARY_CHARGE * c2 / species.mass).sqrt();
    Ok(omega / (2.0 * std::f64::consts::PI))
}

/// Secular frequency from a least-squares parabola over +-window around the
/// null: omega = sqrt(2 e C2 / M), f = omega / 2pi, with C2 in eV/m^2.
pub fn secular_frequency(
    pseudo: &PseudoMap,
    null: Vec3,
    direction: Vec3,
    window: f64,
) -> Result<f64, AnalysisError> {
    let dir = direction.normalized();
    let c2 = fit_parabola_curvature(|t| pseudo.sample(null + dir * t), window)?;
    frequency_from_c2(c2, pseudo.species)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaylorFit {
    /// Expansion coefficients C2..C6 (eV/m^n), linear term forced to zero.
    pub c: [f64; 5],
    /// Final half-range of the stabilized fit (m).
    pub fit_range: f64,
    /// Relative RMS residual of the final fit.
    pub residual: f64,
}

impl TaylorFit {
    pub fn c2(&self) -> f64 {
        self.c[0]
    }
}

/// Taylor expansion of a 1D sampled profile, excluding the linear term. The
/// fit range grows from `taylor_start_range` in `taylor_step` increments
/// until the coefficients stabilize (change < taylor_coeff_tol in
/// dominant-term units) while the relative RMS residual stays below
/// `taylor_resid_tol`. Returns an error when the samples run out (domain
/// edge) before both conditions hold.
pub fn fit_taylor_series(
    sample: impl Fn(f64) -> Option<f64>,
    sample_step: f64,
    opts: &AnalysisOptions,
) -> Result<TaylorFit, AnalysisError> {
    let phi0 = sample(0.0).ok_or(AnalysisError::FitFailed)?;
    let powers = [0usize, 2, 3, 4, 5, 6];

    let fit_at = |range: f64| -> Option<(Vec<f64>, f64)> {
        let n = ((2.0 * range / sample_step).ceil() as usize).max(24) | 1;
        let mut xs = Vec::with_capacity(n);
        let mut ys = Vec::with_capacity(n);
        for i in 0..n {
            let t = -range + 2.0 * range * (i as f64) / ((n - 1) as f64);
            let v = sample(t)?;
            xs.push(t);
            ys.push(v);
        }
        let coeffs = polyfit_powers(&xs, &ys, &powers)?;
        let mut resid_sq = 0.0;
        let mut data_sq = 0.0;
        for (&x, &y) in xs.iter().zip(&ys) {
            let fitv = poly_eval(&powers, &coeffs, x);
            resid_sq += (y - fitv) * (y - fitv);
            data_sq += (y - phi0) * (y - phi0);
        }
        let rel = if data_sq > 0.0 { (resid_sq / data_sq).sqrt() } else { 0.0 };
        Some((coeffs, rel))
    };

    let mut range = opts.taylor_start_range;
    let mut previous: Option<Vec<f64>> = None;
    loop {
        let Some((coeffs, resid)) = fit_at(range) else {
            return Err(AnalysisError::RangeGrowthHitDomain);
        };
        if resid < opts.taylor_resid_tol {
            if let Some(prev) = &previous {
                // Compare coefficient contributions at the current range edge
                // against the dominant term.
                let scale = (1..6)
                    .map(|m| coeffs[m].abs() * range.powi(powers[m] as i32))
                    .fold(0.0f64, f64::max);
                let stable = scale > 0.0
                    && (1..6).all(|m| {
                        (coeffs[m] - prev[m]).abs() * range.powi(powers[m] as i32)
                            <= opts.taylor_coeff_tol * scale
                    });
                if stable {
                    return Ok(TaylorFit {
                        c: [coeffs[1], coeffs[2], coeffs[3], coeffs[4], coeffs[5]],
                        fit_range: range,
                        residual: resid,
                    });
                }
            }
            previous = Some(coeffs);
        } else {
            // Fit quality broke down before the coefficients settled.
            previous = None;
        }
        range += opts.taylor_step;
    }
}

/// Taylor expansion of the pseudopotential along an axis through the null.
pub fn taylor_fit(
    pseudo: &PseudoMap,
    null: Vec3,
    axis: Vec3,
    opts: &AnalysisOptions,
) -> Result<TaylorFit, AnalysisError> {
    let dir = axis.normalized();
    fit_taylor_series(|t| pseudo.sample(null + dir * t), pseudo.grid.h / 2.0, opts)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Anharmonicity {
    /// A3..A6, dimensionless.
    pub a: [f64; 4],
    /// Thermal wavepacket length scale l0 (m).
    pub l0: f64,
}

/// Anharmonicity coefficients A_n = C_n l0^{n-2} / C2 with
/// l0 = sqrt(kB T / (M omega_x^2)), omega_x = 2 pi f_x.
pub fn anharmonicity(
    fit: &TaylorFit,
    species: IonSpecies,
    temperature: f64,
    f_x: f64,
) -> Result<Anharmonicity, AnalysisError> {
    let c2 = fit.c2();
    if c2 <= 0.0 {
        return Err(AnalysisError::NegativeCurvature);
    }
    let omega = 2.0 * std::f64::consts::PI * f_x;
    let l0 = (BOLTZMANN * temperature / (species.mass * omega * omega)).sqrt();
    let mut a = [0.0; 4];
    for (m, slot) in a.iter_mut().enumerate() {
        let n = m + 3;
        *slot = fit.c[m + 1] * l0.powi(n as i32 - 2) / c2;
    }
    Ok(Anharmonicity { a, l0 })
}

/// Knobs of the analysis pipeline; defaults follow the study conventions and
/// scale with the assembly scale factor via [`AnalysisOptions::scaled`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnalysisOptions {
    /// Half-width of the parabola window for secular frequencies (m).
    pub parabola_window: f64,
    /// Initial Taylor fit half-range (m).
    pub taylor_start_range: f64,
    /// Taylor range growth step (m).
    pub taylor_step: f64,
    pub taylor_resid_tol: f64,
    pub taylor_coeff_tol: f64,
    /// Half-extent of the null search region around the nominal center (m).
    pub null_search_half: f64,
    /// Doppler temperature used for l0 (K).
    pub temperature: f64,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        AnalysisOptions {
            parabola_window: 50e-6,
            taylor_start_range: 10e-6,
            taylor_step: 10e-6,
            taylor_resid_tol: 1e-6,
            taylor_coeff_tol: 0.01,
            null_search_half: 0.45e-3,
            temperature: 590e-6,
        }
    }
}

impl AnalysisOptions {
    /// Scale all lengths by the assembly scale factor.
    pub fn scaled(&self, a: f64) -> AnalysisOptions {
        AnalysisOptions {
            parabola_window: self.parabola_window * a,
            taylor_start_range: self.taylor_start_range * a,
            taylor_step: self.taylor_step * a,
            null_search_half: self.null_search_half * a,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AxisObservables {
    pub depth_ev: Option<f64>,
    pub barrier_position: Option<[f64; 3]>,
    /// "ok" when a barrier bounds the axis, "unbounded" otherwise.
    pub depth_flag: String,
    pub frequency_hz: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NormalizedRatios {
    pub baseline_hash: String,
    pub depth: [Option<f64>; 3],
    pub frequency: [Option<f64>; 3],
}

/// Full set of observables for one simulated case.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrapReport {
    pub geometry_hash: String,
    pub scale: f64,
    pub null_position: [f64; 3],
    pub null_value_ev: f64,
    pub axes: [AxisObservables; 3],
    pub taylor: Option<TaylorFit>,
    pub anharmonicity: Option<Anharmonicity>,
    pub normalized: Option<NormalizedRatios>,
}

/// Fill normalized depth/frequency ratios against a same-scale baseline.
pub fn normalize_report(
    report: &TrapReport,
    baseline: &TrapReport,
) -> Result<TrapReport, AnalysisError> {
    let mut out = report.clone();
    let mut depth = [None; 3];
    let mut frequency = [None; 3];
    for axis in 0..3 {
        if let (Some(d), Some(b)) = (report.axes[axis].depth_ev, baseline.axes[axis].depth_ev) {
            if b == 0.0 {
                return Err(AnalysisError::BaselineZeroDepth(axis));
            }
            depth[axis] = Some(d / b);
        }
        if let (Some(f), Some(b)) =
            (report.axes[axis].frequency_hz, baseline.axes[axis].frequency_hz)
        {
            if b > 0.0 {
                frequency[axis] = Some(f / b);
            }
        }
    }
    out.normalized = Some(NormalizedRatios {
        baseline_hash: baseline.geometry_hash.clone(),
        depth,
        frequency,
    });
    Ok(out)
}

/// Displacement of the rf null between two reports (perturbed - baseline).
pub fn null_shift(perturbed: &TrapReport, baseline: &TrapReport) -> Vec3 {
    Vec3::from_array(perturbed.null_position) - Vec3::from_array(baseline.null_position)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn make_map(grid: &Grid3D, f: impl Fn(Vec3) -> f64) -> PseudoMap {
        let values: Vec<f64> = (0..grid.ncells())
            .map(|c| {
                let (i, j, k) = grid.unpack(c);
                if grid.is_boundary(i, j, k) {
                    f64::INFINITY
                } else {
                    f(grid.cell_center(i, j, k))
                }
            })
            .collect();
        PseudoMap::from_values(grid.clone(), values, 2.0 * std::f64::consts::PI * 1e7,
            IonSpecies::calcium40(), "test")
    }

    fn grid_1mm(h: f64) -> Grid3D {
        Grid3D::covering(Vec3::new(-1e-3, -1e-3, -1e-3), Vec3::new(1e-3, 1e-3, 1e-3), h)
    }

    #[test]
    fn null_refinement_recovers_quadratic_minimum() {
        let g = grid_1mm(50e-6);
        let x0 = Vec3::new(17.3e-6, -24.9e-6, 8.1e-6);
        let map = make_map(&g, |p| {
            let d = p - x0;
            3e9 * d.x * d.x + 5e9 * d.y * d.y + 2e9 * d.z * d.z
        });
        let lo = Vec3::new(-0.5e-3, -0.5e-3, -0.5e-3);
        let hi = Vec3::new(0.5e-3, 0.5e-3, 0.5e-3);
        let found = find_rf_null(&map, lo, hi).unwrap();
        let err = (found - x0).norm();
        assert!(err < 1e-3 * g.h, "null error {err:.3e} m exceeds 1e-3 h");
    }

    #[test]
    fn null_with_degenerate_axis_stays_centered() {
        // Nodal line along z: no z-curvature at all.
        let g = grid_1mm(50e-6);
        let map = make_map(&g, |p| 3e9 * p.x * p.x + 5e9 * p.y * p.y);
        let found = find_rf_null(
            &map,
            Vec3::new(-0.4e-3, -0.4e-3, -0.2e-3),
            Vec3::new(0.4e-3, 0.4e-3, 0.2e-3),
        )
        .unwrap();
        assert!(found.x.abs() < 1e-9 && found.y.abs() < 1e-9);
    }

    #[test]
    fn minimum_on_region_boundary_is_rejected() {
        let g = grid_1mm(50e-6);
        // Minimum at x = -0.8 mm, outside the search region.
        let map = make_map(&g, |p| {
            let d = p - Vec3::new(-0.8e-3, 0.0, 0.0);
            1e9 * d.dot(d)
        });
        let r = find_rf_null(
            &map,
            Vec3::new(-0.4e-3, -0.4e-3, -0.4e-3),
            Vec3::new(0.4e-3, 0.4e-3, 0.4e-3),
        );
        assert!(matches!(r, Err(AnalysisError::NoInteriorNull)));
    }

    #[test]
    fn depth_finds_first_barrier() {
        let g = grid_1mm(25e-6);
        // Phi(x) = (x/w)^2 - 0.5 (x/w)^4: maxima of 0.5 at |x| = w.
        let w = 0.4e-3;
        let map = make_map(&g, |p| {
            let u = p.x / w;
            u * u - 0.5 * u * u * u * u
        });
        let d = trap_depth(&map, Vec3::ZERO, Vec3::axis_unit(0)).unwrap();
        let depth = d.depth_ev.unwrap();
        // Cell-value sampling is piecewise linear; barrier height error ~h^2.
        assert!((depth - 0.5).abs() < 5e-3, "depth {depth}");
        let bp = Vec3::from_array(d.barrier_position.unwrap());
        assert!((bp.x.abs() - w).abs() < g.h, "barrier at {bp:?}");
    }

    #[test]
    fn unbounded_quadratic_has_no_barrier() {
        let g = grid_1mm(50e-6);
        let map = make_map(&g, |p| 1e9 * (p.x * p.x + p.y * p.y));
        let d = trap_depth(&map, Vec3::ZERO, Vec3::axis_unit(0)).unwrap();
        assert!(d.depth_ev.is_none());
        assert_eq!(d.positive_ray, RayOutcome::Unbounded);
    }

    #[test]
    fn depth_is_direction_sign_invariant() {
        let g = grid_1mm(25e-6);
        let w = 0.35e-3;
        let map = make_map(&g, |p| {
            let u = p.x / w;
            // Asymmetric barriers: lower on the -x side.
            let quart = if p.x < 0.0 { 0.6 } else { 0.5 };
            u * u - quart * u.powi(4)
        });
        let dp = trap_depth(&map, Vec3::ZERO, Vec3::axis_unit(0)).unwrap();
        let dm = trap_depth(&map, Vec3::ZERO, -Vec3::axis_unit(0)).unwrap();
        assert!((dp.depth_ev.unwrap() - dm.depth_ev.unwrap()).abs() < 1e-12);
    }

    #[test]
    fn secular_frequency_matches_curvature() {
        let c2 = 4.0e9; // eV/m^2
        let species = IonSpecies::calcium40();
        let expect =
            (2.0 * ELEMENTARY_CHARGE * c2 / species.mass).sqrt() / (2.0 * std::f64::consts::PI);
        // Exact 1D profile through the fit core.
        let fit_c2 = fit_parabola_curvature(|t| Some(c2 * t * t), 50e-6).unwrap();
        let f = frequency_from_c2(fit_c2, species).unwrap();
        assert!((f - expect).abs() < 1e-9 * expect);
        // Through a sampled map the curvature picks up interpolation error of
        // the piecewise-linear cell-value sampler; stays at the percent level.
        let g = grid_1mm(25e-6);
        let map = make_map(&g, |p| c2 * p.x * p.x);
        let f_map = secular_frequency(&map, Vec3::ZERO, Vec3::axis_unit(0), 50e-6).unwrap();
        assert!((f_map - expect).abs() < 0.02 * expect, "f_map {f_map} vs {expect}");
        // Negative curvature errors out.
        let anti = make_map(&g, |p| -c2 * p.x * p.x + 1.0);
        assert!(matches!(
            secular_frequency(&anti, Vec3::ZERO, Vec3::axis_unit(0), 50e-6),
            Err(AnalysisError::NegativeCurvature)
        ));
    }

    #[test]
    fn taylor_fit_recovers_exact_quartic() {
        // Phi = 3 x^2 + 5 x^4 in units comparable to trap data.
        let (c2, c4) = (3.0e9, 5.0e17);
        let fit = fit_taylor_series(
            |t| Some(c2 * t * t + c4 * t.powi(4)),
            5e-6,
            &AnalysisOptions::default(),
        )
        .unwrap();
        assert!((fit.c[0] - c2).abs() < 1e-9 * c2, "C2 {}", fit.c[0]);
        assert!((fit.c[2] - c4).abs() < 1e-9 * c4, "C4 {}", fit.c[2]);
        // Absent terms recover as zero relative to the quadratic scale.
        for &m in &[1usize, 3, 4] {
            let contribution = fit.c[m].abs() * fit.fit_range.powi((m + 2) as i32);
            let quad = c2 * fit.fit_range.powi(2);
            assert!(contribution < 1e-9 * quad, "C{} should vanish, got {}", m + 2, fit.c[m]);
        }
        assert!(fit.residual < 1e-9);
    }

    #[test]
    fn taylor_range_growth_errors_at_domain_edge() {
        // Samples run out at |t| = 0.2 mm with never-stabilizing data.
        let noisy = |t: f64| {
            if t.abs() > 0.2e-3 {
                None
            } else {
                Some(1e9 * t * t + 1e3 * (t * 3.0e5).sin().powi(7))
            }
        };
        let r = fit_taylor_series(noisy, 5e-6, &AnalysisOptions::default());
        assert!(matches!(r, Err(AnalysisError::RangeGrowthHitDomain)));
    }

    #[test]
    fn anharmonicity_arithmetic() {
        let species = IonSpecies::calcium40();
        let fit = TaylorFit { c: [2.0e9, 0.0, 4.0e17, 0.0, 0.0], fit_range: 1e-4, residual: 0.0 };
        let anh = anharmonicity(&fit, species, 590e-6, 1.23e6).unwrap();
        // l0 = sqrt(kB T / (M omega^2)) with the stated numbers: ~45 nm.
        let omega = 2.0 * std::f64::consts::PI * 1.23e6;
        let expect_l0 =
            (BOLTZMANN * 590e-6 / (species.mass * omega * omega)).sqrt();
        assert!((anh.l0 - expect_l0).abs() < 1e-15);
        assert!(expect_l0 > 40e-9 && expect_l0 < 50e-9, "l0 = {expect_l0}");
        // A4 = C4 l0^2 / C2.
        let a4 = 4.0e17 * expect_l0 * expect_l0 / 2.0e9;
        assert!((anh.a[1] - a4).abs() < 1e-12 * a4.abs());
        // Pure parabola: all zero.
        let flat = TaylorFit { c: [2.0e9, 0.0, 0.0, 0.0, 0.0], fit_range: 1e-4, residual: 0.0 };
        let anh0 = anharmonicity(&flat, species, 590e-6, 1.23e6).unwrap();
        assert_eq!(anh0.a, [0.0; 4]);
        // Scaling all C_n by 2 leaves A_n unchanged.
        let doubled = TaylorFit { c: [4.0e9, 0.0, 8.0e17, 0.0, 0.0], fit_range: 1e-4, residual: 0.0 };
        let anh2 = anharmonicity(&doubled, species, 590e-6, 1.23e6).unwrap();
        assert!((anh2.a[1] - anh.a[1]).abs() < 1e-15);
    }

    fn dummy_report(null: [f64; 3], depth_x: Option<f64>, fx: Option<f64>) -> TrapReport {
        let ax = AxisObservables {
            depth_ev: depth_x,
            barrier_position: None,
            depth_flag: "ok".into(),
            frequency_hz: fx,
        };
        TrapReport {
            geometry_hash: "h".into(),
            scale: 1.0,
            null_position: null,
            null_value_ev: 0.0,
            axes: [ax.clone(), ax.clone(), ax],
            taylor: None,
            anharmonicity: None,
            normalized: None,
        }
    }

    #[test]
    fn normalization_and_shift() {
        let base = dummy_report([0.0; 3], Some(2.0), Some(1e6));
        let with = dummy_report([14e-6, 0.0, 0.0], Some(1.0), Some(0.9e6));
        let n = normalize_report(&with, &base).unwrap();
        let ratios = n.normalized.unwrap();
        assert!((ratios.depth[0].unwrap() - 0.5).abs() < 1e-12);
        assert!((ratios.frequency[0].unwrap() - 0.9).abs() < 1e-12);
        // Self-normalization gives 1.
        let selfn = normalize_report(&base, &base).unwrap();
        assert!((selfn.normalized.unwrap().depth[0].unwrap() - 1.0).abs() < 1e-12);
        // Zero-depth baseline errors.
        let zero = dummy_report([0.0; 3], Some(0.0), None);
        assert!(matches!(
            normalize_report(&with, &zero),
            Err(AnalysisError::BaselineZeroDepth(0))
        ));
        // Null shift is the vector difference.
        let shift = null_shift(&with, &base);
        assert!((shift.x - 14e-6).abs() < 1e-18 && shift.y == 0.0);
    }
}
