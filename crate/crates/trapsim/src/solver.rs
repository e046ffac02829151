//! Finite-volume solver for the generalized Laplace/Poisson equation
//! div(eps grad phi) = -rho/eps0 on the rasterized grid.
//!
//! The discrete operator is the 7-point flux stencil with per-face effective
//! permittivities; Dirichlet cells (conductors and the outer boundary) are
//! eliminated. Real systems are symmetric positive definite and solved by
//! conjugate gradients; lossy-material systems are complex symmetric and
//! solved by COCG. Both use a symmetric red-black Gauss-Seidel
//! preconditioner. Every reduction is chunked deterministically, so repeated
//! solves are bit-identical regardless of thread count.

use crate::consts::EPSILON_0;
use crate::grid::Grid3D;
use crate::material::{face_eps_value, CellClass, DirichletMask, MaterialMap, RasterData};
use crate::scalar::Scalar;
use crate::vec3::Vec3;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("real rf mode requested but the scene contains lossy material (sigma > 0); use the complex mode")]
    RealModeWithLoss,
    #[error("system is singular: no Dirichlet cell fixes the potential")]
    NoDirichletCells,
    #[error("solver did not converge: residual {residual:.3e} after {iterations} iterations (tolerance {tolerance:.3e})")]
    NotConverged { iterations: usize, residual: f64, tolerance: f64, history: Vec<f64> },
    #[error("iteration breakdown: vanishing inner product at iteration {iteration}")]
    Breakdown { iteration: usize },
    #[error("probe point {point:?} is outside the solve domain")]
    ProbeOutsideDomain { point: Vec3 },
    #[error("probe point {point:?} is inside a conductor")]
    ProbeInConductor { point: Vec3 },
    #[error("facet '{label}' not found in the assembly")]
    FacetNotFound { label: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveMode {
    RfQuasistaticReal,
    RfQuasistaticComplex,
    DcSurfaceCharge,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveSpec {
    pub mode: SolveMode,
    /// Rf drive amplitude (V); zero grounds every electrode.
    pub amplitude: f64,
    /// Angular drive frequency (rad/s); enters the complex permittivity.
    pub omega: f64,
    /// Relative residual tolerance.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl SolveSpec {
    /// Rf solve for an assembly, picking the complex mode automatically when
    /// any non-grounded dielectric is lossy.
    pub fn rf(assembly: &crate::assembly::TrapAssembly) -> SolveSpec {
        let lossy = assembly
            .dielectrics
            .iter()
            .any(|d| d.sigma > 0.0 && !d.grounded_metal);
        SolveSpec {
            mode: if lossy { SolveMode::RfQuasistaticComplex } else { SolveMode::RfQuasistaticReal },
            amplitude: assembly.drive.voltage,
            omega: assembly.drive.omega(),
            tolerance: 1e-8,
            max_iterations: 50_000,
        }
    }

    /// Static solve with all electrodes grounded (surface-charge studies).
    pub fn dc(assembly: &crate::assembly::TrapAssembly) -> SolveSpec {
        SolveSpec {
            mode: SolveMode::DcSurfaceCharge,
            amplitude: 0.0,
            omega: assembly.drive.omega(),
            tolerance: 1e-8,
            max_iterations: 50_000,
        }
    }
}

/// Sparse volumetric charge density (cell index, rho in C/m^3).
#[derive(Debug, Clone, Default)]
pub struct ChargeDensity {
    pub cells: Vec<(usize, f64)>,
}

/// Assembled 7-point system. The operator is matrix-free: per-cell palette
/// indices plus a palette-pair face coefficient table.
pub struct LinearSystem<T: Scalar> {
    pub grid: Grid3D,
    raster: Arc<RasterData>,
    /// face_table[pa * npal + pb][axis] = face coefficient between palettes.
    face_table: Vec<[T; 3]>,
    npal: usize,
    fixed: Vec<bool>,
    diag: Vec<T>,
    rhs: Vec<T>,
    /// Dirichlet potential per cell (amplitude applied), zero elsewhere.
    fixed_values: Vec<f64>,
}

/// Either flavor of assembled system.
pub enum AssembledSystem {
    Real(LinearSystem<f64>),
    Complex(LinearSystem<Complex64>),
}

/// Scalar field of either flavor.
#[derive(Debug, Clone)]
pub enum FieldData {
    Real(Vec<f64>),
    Complex(Vec<Complex64>),
}

impl FieldData {
    pub fn len(&self) -> usize {
        match self {
            FieldData::Real(v) => v.len(),
            FieldData::Complex(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn as_complex(&self, i: usize) -> Complex64 {
        match self {
            FieldData::Real(v) => Complex64::new(v[i], 0.0),
            FieldData::Complex(v) => v[i],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveMeta {
    pub mode: SolveMode,
    pub iterations: usize,
    pub final_residual: f64,
    pub tolerance: f64,
}

/// Converged potential and derived electric field on the grid.
pub struct FieldSolution {
    pub grid: Grid3D,
    pub potential: FieldData,
    /// Electric field components (V/m), one cell-centered field per axis.
    /// Shared so pseudopotential maps can sample the field directly.
    pub e: Arc<[FieldData; 3]>,
    pub meta: SolveMeta,
    raster: Arc<RasterData>,
}

impl FieldSolution {
    /// |E|^2 at a cell (complex components contribute their squared moduli).
    #[inline]
    pub fn e_mag_sq(&self, cell: usize) -> f64 {
        self.e[0].as_complex(cell).norm_sqr()
            + self.e[1].as_complex(cell).norm_sqr()
            + self.e[2].as_complex(cell).norm_sqr()
    }

    pub fn is_conductor(&self, cell: usize) -> bool {
        self.raster.palette[self.raster.cells[cell] as usize].class == CellClass::Conductor
    }

    pub fn raster(&self) -> &Arc<RasterData> {
        &self.raster
    }

    /// Potential at a cell as a complex number (real solves have zero imag).
    pub fn potential_at(&self, cell: usize) -> Complex64 {
        self.potential.as_complex(cell)
    }
}

/// Assemble the finite-volume system for the given mode.
pub fn assemble(
    material: &MaterialMap,
    mask: &DirichletMask,
    spec: &SolveSpec,
    charge: Option<&ChargeDensity>,
) -> Result<AssembledSystem, SolverError> {
    let has_loss = material.palette().iter().any(|m| m.has_loss() && m.class != CellClass::Conductor);
    match spec.mode {
        SolveMode::RfQuasistaticComplex => {
            Ok(AssembledSystem::Complex(assemble_typed(material, mask, spec, charge)?))
        }
        SolveMode::RfQuasistaticReal | SolveMode::DcSurfaceCharge => {
            if has_loss {
                return Err(SolverError::RealModeWithLoss);
            }
            Ok(AssembledSystem::Real(assemble_typed(material, mask, spec, charge)?))
        }
    }
}

fn assemble_typed<T: Scalar>(
    material: &MaterialMap,
    mask: &DirichletMask,
    spec: &SolveSpec,
    charge: Option<&ChargeDensity>,
) -> Result<LinearSystem<T>, SolverError> {
    let grid = material.grid().clone();
    let raster = material.shared_data();
    let palette = material.palette();
    let npal = palette.len();

    // Stencil coefficients per palette pair. Conductor surfaces sit on the
    // cell face, half a cell from the adjacent free center, so those faces
    // carry twice the one-sided permittivity (flux over distance h/2).
    let mut face_table = vec![[T::ZERO; 3]; npal * npal];
    for a in 0..npal {
        for b in 0..npal {
            let conductor_face = (palette[a].class == CellClass::Conductor)
                != (palette[b].class == CellClass::Conductor);
            for axis in 0..3 {
                let eps = face_eps_value(&palette[a], &palette[b], axis, spec.omega);
                let coef = if conductor_face { 2.0 * eps } else { eps };
                face_table[a * npal + b][axis] = T::from_complex(coef);
            }
        }
    }

    let n = grid.ncells();
    let fixed: Vec<bool> = (0..n).map(|c| mask.is_fixed(c)).collect();
    if !fixed.iter().any(|&f| f) {
        return Err(SolverError::NoDirichletCells);
    }
    let fixed_values: Vec<f64> = (0..n)
        .map(|c| if fixed[c] { mask.potential(c, spec.amplitude) } else { 0.0 })
        .collect();

    let cells = &raster.cells;
    let dims = grid.dims;
    let (nx, nxy) = (dims[0], dims[0] * dims[1]);

    // Diagonal and the Dirichlet/charge contributions to the RHS.
    // The stencil is scaled by h^2: A phi = sum_f eps_f (phi_c - phi_n).
    let mut diag = vec![T::ZERO; n];
    let mut rhs = vec![T::ZERO; n];
    let h = grid.h;
    diag.par_chunks_mut(nxy)
        .zip(rhs.par_chunks_mut(nxy))
        .enumerate()
        .for_each(|(k, (dchunk, bchunk))| {
            if k == 0 || k == dims[2] - 1 {
                return;
            }
            for j in 1..dims[1] - 1 {
                for i in 1..nx - 1 {
                    let local = i + nx * j;
                    let c = local + nxy * k;
                    if fixed[c] {
                        continue;
                    }
                    let pc = cells[c] as usize;
                    let mut d = T::ZERO;
                    let mut b = T::ZERO;
                    for (nbr, axis) in [
                        (c - 1, 0),
                        (c + 1, 0),
                        (c - nx, 1),
                        (c + nx, 1),
                        (c - nxy, 2),
                        (c + nxy, 2),
                    ] {
                        let coef = face_table[pc * npal + cells[nbr] as usize][axis];
                        d += coef;
                        if fixed[nbr] && fixed_values[nbr] != 0.0 {
                            b += coef.scale(fixed_values[nbr]);
                        }
                    }
                    dchunk[local] = d;
                    bchunk[local] = b;
                }
            }
        });

    if let Some(charge) = charge {
        let scale = h * h / EPSILON_0;
        for &(c, rho) in &charge.cells {
            if !fixed[c] {
                rhs[c] += T::from_f64(rho * scale);
            }
        }
    }

    Ok(LinearSystem { grid, raster, face_table, npal, fixed, diag, rhs, fixed_values })
}

impl<T: Scalar> LinearSystem<T> {
    /// Off-diagonal stencil coefficient between two adjacent free cells
    /// (negative of the face permittivity). Zero for non-adjacent pairs.
    pub fn coeff(&self, a: usize, b: usize) -> T {
        if a == b {
            return self.diag[a];
        }
        let (ia, ja, ka) = self.grid.unpack(a);
        let (ib, jb, kb) = self.grid.unpack(b);
        let d = [
            ib as isize - ia as isize,
            jb as isize - ja as isize,
            kb as isize - ka as isize,
        ];
        if d.iter().map(|x| x.abs()).sum::<isize>() != 1 || self.fixed[a] || self.fixed[b] {
            return T::ZERO;
        }
        let axis = d.iter().position(|&x| x.abs() == 1).unwrap();
        let pa = self.raster.cells[a] as usize;
        let pb = self.raster.cells[b] as usize;
        -self.face_table[pa * self.npal + pb][axis]
    }

    pub fn rhs(&self) -> &[T] {
        &self.rhs
    }

    pub fn is_fixed(&self, cell: usize) -> bool {
        self.fixed[cell]
    }

    /// y = A x over free cells (masked entries of x are treated as zero).
    pub fn apply(&self, x: &[T], y: &mut [T]) {
        let dims = self.grid.dims;
        let (nx, nxy) = (dims[0], dims[0] * dims[1]);
        let cells = &self.raster.cells;
        let npal = self.npal;
        let face = &self.face_table;
        let fixed = &self.fixed;
        let diag = &self.diag;
        y.par_chunks_mut(nxy).enumerate().for_each(|(k, ychunk)| {
            if k == 0 || k == dims[2] - 1 {
                for v in ychunk.iter_mut() {
                    *v = T::ZERO;
                }
                return;
            }
            let base = nxy * k;
            for j in 0..dims[1] {
                let edge_j = j == 0 || j == dims[1] - 1;
                for i in 0..nx {
                    let local = i + nx * j;
                    let c = base + local;
                    if edge_j || i == 0 || i == nx - 1 || fixed[c] {
                        ychunk[local] = T::ZERO;
                        continue;
                    }
                    let pc = cells[c] as usize * npal;
                    let mut acc = diag[c] * x[c];
                    for (nbr, axis) in [
                        (c - 1, 0usize),
                        (c + 1, 0),
                        (c - nx, 1),
                        (c + nx, 1),
                        (c - nxy, 2),
                        (c + nxy, 2),
                    ] {
                        if !fixed[nbr] {
                            acc -= face[pc + cells[nbr] as usize][axis] * x[nbr];
                        }
                    }
                    ychunk[local] = acc;
                }
            }
        });
    }

    /// One symmetric red-black Gauss-Seidel application: z ~= A^{-1} r.
    fn precondition(&self, r: &[T], z: &mut [T]) {
        for v in z.iter_mut() {
            *v = T::ZERO;
        }
        // Forward sweep red then black, backward sweep black then red.
        self.gs_color_sweep(r, z, 0);
        self.gs_color_sweep(r, z, 1);
        self.gs_color_sweep(r, z, 1);
        self.gs_color_sweep(r, z, 0);
    }

    /// In-place Gauss-Seidel update of all free cells of one RB color.
    fn gs_color_sweep(&self, r: &[T], z: &mut [T], color: usize) {
        let dims = self.grid.dims;
        let (nx, nxy) = (dims[0], dims[0] * dims[1]);
        let cells = &self.raster.cells;
        let npal = self.npal;
        let face = &self.face_table;
        let fixed = &self.fixed;
        let diag = &self.diag;
        // Cells of one color only read the other color: safe to update a
        // whole z-slab in parallel given neighbor slabs are read-only. Slabs
        // alternate colors per cell, not per slab, so split by even/odd rows
        // inside each slab is unnecessary: the (i+j+k) coloring guarantees
        // every neighbor differs in color.
        let z_ptr = SendPtr(z.as_mut_ptr());
        (1..dims[2] - 1).into_par_iter().for_each(|k| {
            let z = z_ptr;
            for j in 1..dims[1] - 1 {
                // i runs over cells with (i+j+k) % 2 == color.
                let mut i = if (1 + j + k) % 2 == color { 1 } else { 2 };
                while i < nx - 1 {
                    let c = i + nx * j + nxy * k;
                    if !fixed[c] {
                        let pc = cells[c] as usize * npal;
                        let mut acc = r[c];
                        unsafe {
                            for (nbr, axis) in [
                                (c - 1, 0usize),
                                (c + 1, 0),
                                (c - nx, 1),
                                (c + nx, 1),
                                (c - nxy, 2),
                                (c + nxy, 2),
                            ] {
                                if !fixed[nbr] {
                                    acc += face[pc + cells[nbr] as usize][axis] * *z.0.add(nbr);
                                }
                            }
                            *z.0.add(c) = acc / diag[c];
                        }
                    }
                    i += 2;
                }
            }
        });
    }
}

#[derive(Clone, Copy)]
struct SendPtr<T>(*mut T);
unsafe impl<T> Send for SendPtr<T> {}
unsafe impl<T> Sync for SendPtr<T> {}

/// Deterministic chunked reduction: per-slab partial sums combined in slab
/// order, independent of thread scheduling.
fn det_bilinear<T: Scalar>(a: &[T], b: &[T], slab: usize) -> T {
    let partials: Vec<T> = a
        .par_chunks(slab)
        .zip(b.par_chunks(slab))
        .map(|(ca, cb)| {
            let mut s = T::ZERO;
            for (x, y) in ca.iter().zip(cb) {
                s += *x * *y;
            }
            s
        })
        .collect();
    let mut total = T::ZERO;
    for p in partials {
        total += p;
    }
    total
}

fn det_norm_sq<T: Scalar>(a: &[T], slab: usize) -> f64 {
    let partials: Vec<f64> = a
        .par_chunks(slab)
        .map(|ca| {
            let mut s = 0.0;
            for x in ca {
                s += x.abs_sq();
            }
            s
        })
        .collect();
    partials.iter().sum()
}

fn axpy<T: Scalar>(y: &mut [T], alpha: T, x: &[T]) {
    y.par_iter_mut().zip(x.par_iter()).for_each(|(y, x)| *y += alpha * *x);
}

fn xpay<T: Scalar>(p: &mut [T], beta: T, z: &[T]) {
    p.par_iter_mut().zip(z.par_iter()).for_each(|(p, z)| *p = *z + beta * *p);
}

/// Preconditioned conjugate gradients (real) / COCG (complex symmetric).
fn iterate<T: Scalar>(
    system: &LinearSystem<T>,
    spec: &SolveSpec,
) -> Result<(Vec<T>, usize, f64), SolverError> {
    let n = system.grid.ncells();
    let slab = system.grid.dims[0] * system.grid.dims[1];
    let b = &system.rhs;
    let norm_b = det_norm_sq(b, slab).sqrt();
    let mut x = vec![T::ZERO; n];
    if norm_b == 0.0 {
        return Ok((x, 0, 0.0));
    }

    let mut r = b.clone();
    let mut z = vec![T::ZERO; n];
    let mut p = vec![T::ZERO; n];
    let mut q = vec![T::ZERO; n];

    let mut rho_prev = T::ZERO;
    let mut history = Vec::new();
    for it in 0..spec.max_iterations {
        let res = det_norm_sq(&r, slab).sqrt() / norm_b;
        history.push(res);
        if res <= spec.tolerance {
            return Ok((x, it, res));
        }
        system.precondition(&r, &mut z);
        let rho = det_bilinear(&r, &z, slab);
        if rho.abs_sq() == 0.0 || !rho.is_finite() {
            return Err(SolverError::Breakdown { iteration: it });
        }
        if it == 0 {
            p.copy_from_slice(&z);
        } else {
            let beta = rho / rho_prev;
            xpay(&mut p, beta, &z);
        }
        system.apply(&p, &mut q);
        let denom = det_bilinear(&p, &q, slab);
        if denom.abs_sq() == 0.0 || !denom.is_finite() {
            return Err(SolverError::Breakdown { iteration: it });
        }
        let alpha = rho / denom;
        axpy(&mut x, alpha, &p);
        axpy(&mut r, -alpha, &q);
        rho_prev = rho;
    }
    let res = det_norm_sq(&r, slab).sqrt() / norm_b;
    // Keep the tail of the residual history for diagnosis.
    let tail = history.len().saturating_sub(50);
    Err(SolverError::NotConverged {
        iterations: spec.max_iterations,
        residual: res,
        tolerance: spec.tolerance,
        history: history[tail..].to_vec(),
    })
}

fn finish_solution<T: Scalar>(
    system: &LinearSystem<T>,
    spec: &SolveSpec,
    x: Vec<T>,
    iterations: usize,
    residual: f64,
    to_field: impl Fn(Vec<T>) -> FieldData,
) -> FieldSolution {
    // Write Dirichlet values into the potential.
    let mut phi = x;
    phi.par_iter_mut().enumerate().for_each(|(c, v)| {
        if system.fixed[c] {
            *v = T::from_f64(system.fixed_values[c]);
        }
    });

    let e = derive_e_field(&system.grid, &phi, &system.fixed);
    FieldSolution {
        grid: system.grid.clone(),
        potential: to_field(phi),
        e: Arc::new([to_field(e.0), to_field(e.1), to_field(e.2)]),
        meta: SolveMeta {
            mode: spec.mode,
            iterations,
            final_residual: residual,
            tolerance: spec.tolerance,
        },
        raster: Arc::clone(&system.raster),
    }
}

/// E = -grad phi: central differences at interior cells, one-sided where a
/// neighbor is Dirichlet-masked, zero inside conductors.
fn derive_e_field<T: Scalar>(
    grid: &Grid3D,
    phi: &[T],
    fixed: &[bool],
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let dims = grid.dims;
    let (nx, nxy) = (dims[0], dims[0] * dims[1]);
    let h = grid.h;
    let mut ex = vec![T::ZERO; phi.len()];
    let mut ey = vec![T::ZERO; phi.len()];
    let mut ez = vec![T::ZERO; phi.len()];

    let strides = [1usize, nx, nxy];
    let fields: [&mut Vec<T>; 3] = [&mut ex, &mut ey, &mut ez];
    for (axis, field) in fields.into_iter().enumerate() {
        let stride = strides[axis];
        field.par_chunks_mut(nxy).enumerate().for_each(|(k, chunk)| {
            for j in 0..dims[1] {
                for i in 0..nx {
                    let local = i + nx * j;
                    let c = local + nxy * k;
                    if fixed[c] {
                        continue;
                    }
                    let pos = [i, j, k][axis];
                    let npos = dims[axis];
                    // Interior free cells always have both neighbors in range
                    // (the boundary layer is masked), but guard anyway.
                    if pos == 0 || pos == npos - 1 {
                        continue;
                    }
                    let lo = c - stride;
                    let hi = c + stride;
                    let grad = match (fixed[lo], fixed[hi]) {
                        (false, false) => (phi[hi] - phi[lo]).scale(1.0 / (2.0 * h)),
                        (true, false) => (phi[hi] - phi[c]).scale(1.0 / h),
                        (false, true) => (phi[c] - phi[lo]).scale(1.0 / h),
                        (true, true) => (phi[hi] - phi[lo]).scale(1.0 / (2.0 * h)),
                    };
                    chunk[local] = -grad;
                }
            }
        });
    }
    (ex, ey, ez)
}

/// Solve an assembled system.
pub fn solve(system: &AssembledSystem, spec: &SolveSpec) -> Result<FieldSolution, SolverError> {
    match system {
        AssembledSystem::Real(s) => {
            let (x, it, res) = iterate(s, spec)?;
            Ok(finish_solution(s, spec, x, it, res, FieldData::Real))
        }
        AssembledSystem::Complex(s) => {
            let (x, it, res) = iterate(s, spec)?;
            Ok(finish_solution(s, spec, x, it, res, FieldData::Complex))
        }
    }
}

/// Rasterize, assemble and solve in one call.
pub fn solve_assembly(
    assembly: &crate::assembly::TrapAssembly,
    grid: &Grid3D,
    spec: &SolveSpec,
) -> Result<FieldSolution, crate::runner::PipelineError> {
    let (map, mask) = crate::material::rasterize(assembly, grid)?;
    let system = assemble(&map, &mask, spec, None)?;
    Ok(solve(&system, spec)?)
}

/// Volumetric charge cells representing a constant surface charge density on
/// a mirror facet, smeared over the one-cell layer in front of the facet.
pub fn surface_charge_density(
    assembly: &crate::assembly::TrapAssembly,
    grid: &Grid3D,
    facet_label: &str,
    sigma_q: f64,
) -> Result<ChargeDensity, SolverError> {
    let body = assembly
        .dielectrics
        .iter()
        .find(|d| d.label == facet_label && d.facet.is_some())
        .ok_or_else(|| SolverError::FacetNotFound { label: facet_label.to_string() })?;
    let facet = body.facet.as_ref().unwrap();
    let h = grid.h;
    let rho = sigma_q / h;
    let mut cells = Vec::new();
    for k in 1..grid.dims[2] - 1 {
        for j in 1..grid.dims[1] - 1 {
            for i in 1..grid.dims[0] - 1 {
                let p = grid.cell_center(i, j, k);
                // One cell layer on the vacuum side of the facet plane.
                let s = (p - facet.point).dot(facet.normal);
                if !(0.0..h).contains(&s) {
                    continue;
                }
                let radial = (p - facet.point) - facet.normal * (p - facet.point).dot(facet.normal);
                if radial.norm() < facet.radius {
                    cells.push((grid.idx(i, j, k), rho));
                }
            }
        }
    }
    Ok(ChargeDensity { cells })
}

/// Static field at the unperturbed trap center from a charged mirror facet,
/// with every electrode grounded.
pub fn solve_surface_charge(
    assembly: &crate::assembly::TrapAssembly,
    grid: &Grid3D,
    facet_label: &str,
    sigma_q: f64,
) -> Result<(Vec3, FieldSolution), crate::runner::PipelineError> {
    let (map, mask) = crate::material::rasterize(assembly, grid)?;
    let spec = SolveSpec::dc(assembly);
    let charge = surface_charge_density(assembly, grid, facet_label, sigma_q)?;
    let system = assemble(&map, &mask, &spec, Some(&charge))?;
    let sol = solve(&system, &spec)?;
    let e = field_probe(&sol, assembly.nominal_center)?;
    Ok((Vec3::new(e[0].re, e[1].re, e[2].re), sol))
}

/// Trilinear interpolation of the E field components at a point.
pub fn field_probe(sol: &FieldSolution, point: Vec3) -> Result<[Complex64; 3], SolverError> {
    let grid = &sol.grid;
    let Some((i, j, k)) = grid.cell_containing(point) else {
        return Err(SolverError::ProbeOutsideDomain { point });
    };
    if sol.is_conductor(grid.idx(i, j, k)) {
        return Err(SolverError::ProbeInConductor { point });
    }
    let (w, base) = grid.interp_weights(point);
    let mut out = [Complex64::new(0.0, 0.0); 3];
    for axis in 0..3 {
        let mut acc = Complex64::new(0.0, 0.0);
        let (tx, ty, tz) = (w[0], w[1], w[2]);
        for (dz, wz) in [(0usize, 1.0 - tz), (1, tz)] {
            for (dy, wy) in [(0usize, 1.0 - ty), (1, ty)] {
                for (dx, wx) in [(0usize, 1.0 - tx), (1, tx)] {
                    let c = grid.idx(base.0 + dx, base.1 + dy, base.2 + dz);
                    acc += sol.e[axis].as_complex(c) * (wx * wy * wz);
                }
            }
        }
        out[axis] = acc;
    }
    Ok(out)
}

/// Two views of discrete flux conservation over interior source-free cells,
/// with the net face flux sum_f eps_f (phi_n - phi_c) recomputed from the
/// face tables and the final potential, independent of the solver's internal
/// residual bookkeeping.
#[derive(Debug, Clone, Copy)]
pub struct FluxConservation {
    /// Worst net flux normalized like the solver residual (by the RHS norm);
    /// a converged solve scores at or below its tolerance here.
    pub solver_normalized: f64,
    /// Worst net flux relative to the local flux magnitude, over cells whose
    /// local magnitude is at least 1e-3 of the global peak (below that the
    /// ratio measures f64 noise, not conservation).
    pub local_relative: f64,
}

pub fn max_flux_imbalance(system: &AssembledSystem, sol: &FieldSolution) -> FluxConservation {
    match system {
        AssembledSystem::Real(s) => flux_imbalance_typed(s, sol),
        AssembledSystem::Complex(s) => flux_imbalance_typed(s, sol),
    }
}

fn flux_imbalance_typed<T: Scalar>(system: &LinearSystem<T>, sol: &FieldSolution) -> FluxConservation {
    let grid = &system.grid;
    let dims = grid.dims;
    let (nx, nxy) = (dims[0], dims[0] * dims[1]);
    let cells = &system.raster.cells;
    let npal = system.npal;
    let mut entries: Vec<(f64, f64)> = Vec::new();
    let mut global_mag: f64 = 0.0;
    let mut rhs_sq: f64 = 0.0;
    for &b in system.rhs.iter() {
        rhs_sq += b.abs_sq();
    }
    let rhs_norm = rhs_sq.sqrt().max(1e-300);
    for k in 1..dims[2] - 1 {
        for j in 1..dims[1] - 1 {
            for i in 1..nx - 1 {
                let c = i + nx * j + nxy * k;
                if system.fixed[c] || system.rhs[c] != T::ZERO {
                    continue;
                }
                let pc = cells[c] as usize * npal;
                let phi_c = sol.potential.as_complex(c);
                let mut net = Complex64::new(0.0, 0.0);
                let mut mag = 0.0;
                for (nbr, axis) in [
                    (c - 1, 0usize),
                    (c + 1, 0),
                    (c - nx, 1),
                    (c + nx, 1),
                    (c - nxy, 2),
                    (c + nxy, 2),
                ] {
                    let coef = system.face_table[pc + cells[nbr] as usize][axis].to_complex();
                    let flux = coef * (sol.potential.as_complex(nbr) - phi_c);
                    net += flux;
                    mag += flux.norm();
                }
                entries.push((net.norm(), mag));
                global_mag = global_mag.max(mag);
            }
        }
    }
    let mut out = FluxConservation { solver_normalized: 0.0, local_relative: 0.0 };
    for &(net, mag) in &entries {
        out.solver_normalized = out.solver_normalized.max(net / rhs_norm);
        if mag >= 1e-3 * global_mag {
            out.local_relative = out.local_relative.max(net / mag);
        }
    }
    out
}

/// Verify the discrete maximum principle for a charge-free real solution:
/// interior potentials must lie inside [min, max] of the fixed values.
pub fn max_principle_violation(sol: &FieldSolution) -> f64 {
    let FieldData::Real(phi) = &sol.potential else {
        return 0.0;
    };
    let grid = &sol.grid;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for c in 0..grid.ncells() {
        if sol.is_conductor(c) {
            lo = lo.min(phi[c]);
            hi = hi.max(phi[c]);
        }
    }
    let mut worst: f64 = 0.0;
    for c in 0..grid.ncells() {
        if !sol.is_conductor(c) {
            worst = worst.max((lo - phi[c]).max(phi[c] - hi));
        }
    }
    worst
}
