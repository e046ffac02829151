//! Rasterization of a trap assembly onto the grid: per-cell material
//! classification, Dirichlet mask, and face permittivities for the
//! finite-volume solver.
//!
//! Cells are classified by center-point membership with precedence
//! conductor > dielectric > vacuum. Materials are stored as a small palette
//! referenced by per-cell u16 indices, which keeps 10^7-cell scenes cheap.

use crate::assembly::{ElectrodeRole, TrapAssembly};
use crate::consts::EPSILON_0;
use crate::grid::Grid3D;
use crate::vec3::Vec3;
use num_complex::Complex64;
use rayon::prelude::*;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RasterizeError {
    #[error("rf/ground short circuit: {count} adjacent conductor cell pairs with different drive, first at cell {first:?}")]
    ShortCircuit { count: usize, first: (usize, usize, usize) },
    #[error("grid does not contain the assembly: shape bounds {shape:?} exceed domain {domain:?}")]
    DomainTooSmall { shape: (Vec3, Vec3), domain: (Vec3, Vec3) },
}

/// Broad material category of a cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellClass {
    Vacuum,
    Dielectric,
    Conductor,
}

/// One palette entry. `eps_r`/`sigma` are per-axis to represent widened
/// sub-cell coating layers (series along the layer normal, parallel in-plane);
/// ordinary materials are isotropic.
#[derive(Debug, Clone, PartialEq)]
pub struct Material {
    pub class: CellClass,
    pub eps_r: [f64; 3],
    pub sigma: [f64; 3],
    /// Dirichlet potential per unit rf amplitude (1 for rf electrodes, 0 for
    /// grounds and the outer boundary). Meaningful only for conductors.
    pub drive_weight: f64,
}

impl Material {
    pub const VACUUM: Material = Material {
        class: CellClass::Vacuum,
        eps_r: [1.0, 1.0, 1.0],
        sigma: [0.0, 0.0, 0.0],
        drive_weight: 0.0,
    };

    fn conductor(drive_weight: f64) -> Material {
        Material {
            class: CellClass::Conductor,
            eps_r: [1.0, 1.0, 1.0],
            sigma: [0.0, 0.0, 0.0],
            drive_weight,
        }
    }

    fn dielectric(eps_r: f64, sigma: f64) -> Material {
        Material {
            class: CellClass::Dielectric,
            eps_r: [eps_r; 3],
            sigma: [sigma; 3],
            drive_weight: 0.0,
        }
    }

    /// Complex relative permittivity along `axis` at angular frequency `omega`.
    pub fn complex_eps(&self, axis: usize, omega: f64) -> Complex64 {
        let sigma = self.sigma[axis];
        if sigma == 0.0 {
            Complex64::new(self.eps_r[axis], 0.0)
        } else {
            Complex64::new(self.eps_r[axis], -sigma / (omega * EPSILON_0))
        }
    }

    pub fn has_loss(&self) -> bool {
        self.sigma.iter().any(|&s| s != 0.0)
    }
}

struct PaletteBuilder {
    entries: Vec<Material>,
}

impl PaletteBuilder {
    fn new() -> Self {
        // Slot 0 is always vacuum.
        PaletteBuilder { entries: vec![Material::VACUUM] }
    }

    fn intern(&mut self, m: Material) -> u16 {
        if let Some(i) = self.entries.iter().position(|e| *e == m) {
            return i as u16;
        }
        let i = self.entries.len();
        assert!(i < u16::MAX as usize, "material palette overflow");
        self.entries.push(m);
        i as u16
    }
}

/// Shared rasterization data: cell palette indices plus the palette.
#[derive(Debug)]
pub struct RasterData {
    pub grid: Grid3D,
    pub cells: Vec<u16>,
    pub palette: Vec<Material>,
}

/// Per-cell material view of the rasterized scene.
#[derive(Debug, Clone)]
pub struct MaterialMap {
    data: Arc<RasterData>,
}

/// Per-cell Dirichlet view of the rasterized scene: conductors at their drive
/// level and the outer domain boundary at 0 V.
#[derive(Debug, Clone)]
pub struct DirichletMask {
    data: Arc<RasterData>,
    /// Optional per-cell boundary potential override (validation harness).
    overrides: Option<Arc<Vec<(usize, f64)>>>,
}

impl MaterialMap {
    pub fn grid(&self) -> &Grid3D {
        &self.data.grid
    }

    #[inline]
    pub fn material(&self, cell: usize) -> &Material {
        &self.data.palette[self.data.cells[cell] as usize]
    }

    #[inline]
    pub fn palette_index(&self, cell: usize) -> u16 {
        self.data.cells[cell]
    }

    pub fn palette(&self) -> &[Material] {
        &self.data.palette
    }

    pub fn cells(&self) -> &[u16] {
        &self.data.cells
    }

    pub fn class(&self, cell: usize) -> CellClass {
        self.material(cell).class
    }

    /// Effective face permittivity between two adjacent cells at `omega`:
    /// harmonic mean of the cell permittivities along the face normal, or the
    /// non-conductor side's value when one cell is a conductor.
    pub fn face_eps(&self, a: usize, b: usize, omega: f64) -> Complex64 {
        let (ia, ja, ka) = self.data.grid.unpack(a);
        let (ib, jb, kb) = self.data.grid.unpack(b);
        let diff = [
            (ia as isize - ib as isize).abs(),
            (ja as isize - jb as isize).abs(),
            (ka as isize - kb as isize).abs(),
        ];
        assert_eq!(diff.iter().sum::<isize>(), 1, "cells must be face-adjacent");
        let axis = diff.iter().position(|&d| d == 1).unwrap();
        face_eps_value(self.material(a), self.material(b), axis, omega)
    }

    pub fn shared_data(&self) -> Arc<RasterData> {
        Arc::clone(&self.data)
    }
}

/// Face permittivity rule shared by the map accessor and system assembly.
pub fn face_eps_value(a: &Material, b: &Material, axis: usize, omega: f64) -> Complex64 {
    match (a.class, b.class) {
        (CellClass::Conductor, CellClass::Conductor) => Complex64::new(0.0, 0.0),
        (CellClass::Conductor, _) => b.complex_eps(axis, omega),
        (_, CellClass::Conductor) => a.complex_eps(axis, omega),
        _ => {
            let ea = a.complex_eps(axis, omega);
            let eb = b.complex_eps(axis, omega);
            2.0 * ea * eb / (ea + eb)
        }
    }
}

impl DirichletMask {
    pub fn grid(&self) -> &Grid3D {
        &self.data.grid
    }

    /// True for conductor cells and outer-boundary cells.
    #[inline]
    pub fn is_fixed(&self, cell: usize) -> bool {
        self.data.palette[self.data.cells[cell] as usize].class == CellClass::Conductor
    }

    /// Fixed potential of a masked cell for a given rf amplitude (V).
    #[inline]
    pub fn potential(&self, cell: usize, amplitude: f64) -> f64 {
        let base =
            self.data.palette[self.data.cells[cell] as usize].drive_weight * amplitude;
        if let Some(ovr) = &self.overrides {
            if let Ok(pos) = ovr.binary_search_by(|(c, _)| c.cmp(&cell)) {
                return ovr[pos].1;
            }
        }
        base
    }

    pub fn fixed_cell_count(&self) -> usize {
        (0..self.data.cells.len()).filter(|&c| self.is_fixed(c)).count()
    }

    /// Replace outer-boundary potentials with `f(center)`. Used by analytic
    /// verification setups that need non-grounded domain boundaries.
    pub fn with_boundary_potential(&self, f: impl Fn(Vec3) -> f64) -> DirichletMask {
        let g = &self.data.grid;
        let mut ovr = Vec::new();
        for c in 0..g.ncells() {
            let (i, j, k) = g.unpack(c);
            if g.is_boundary(i, j, k) {
                ovr.push((c, f(g.cell_center(i, j, k))));
            }
        }
        DirichletMask { data: Arc::clone(&self.data), overrides: Some(Arc::new(ovr)) }
    }
}

/// Rasterize an assembly onto `grid`.
///
/// Fails if the grid does not contain all shapes or if rf and ground
/// conductor cells end up face-adjacent (short circuit).
pub fn rasterize(
    assembly: &TrapAssembly,
    grid: &Grid3D,
) -> Result<(MaterialMap, DirichletMask), RasterizeError> {
    let (shape_lo, shape_hi) = assembly.bbox();
    let (dom_lo, dom_hi) = grid.domain_box();
    if shape_lo.x.is_finite() {
        for k in 0..3 {
            if shape_lo[k] < dom_lo[k] || shape_hi[k] > dom_hi[k] {
                return Err(RasterizeError::DomainTooSmall {
                    shape: (shape_lo, shape_hi),
                    domain: (dom_lo, dom_hi),
                });
            }
        }
    }

    let mut palette = PaletteBuilder::new();
    let boundary_idx = palette.intern(Material::conductor(0.0));

    // Pre-intern one palette slot per electrode role / dielectric body.
    let electrode_slots: Vec<u16> = assembly
        .electrodes
        .iter()
        .map(|e| {
            palette.intern(Material::conductor(match e.role {
                ElectrodeRole::Rf => 1.0,
                ElectrodeRole::Ground => 0.0,
            }))
        })
        .collect();

    let h = grid.h;
    #[derive(Clone, Copy)]
    enum BodyKind {
        Volumetric(u16),
        ThinLayer { slot_or_ground: u16, thickness: f64 },
    }
    let mut body_kinds = Vec::new();
    for d in &assembly.dielectrics {
        let thin = d.thin_layer.as_ref().map(|t| t.thickness).filter(|&t| t < h);
        if d.grounded_metal {
            let slot = palette.intern(Material::conductor(0.0));
            match thin {
                Some(t) => body_kinds.push(BodyKind::ThinLayer { slot_or_ground: slot, thickness: t }),
                None => body_kinds.push(BodyKind::Volumetric(slot)),
            }
        } else {
            match thin {
                // Effective permittivity depends on the host medium behind the
                // layer; the palette slot is resolved per-body below.
                Some(t) => body_kinds.push(BodyKind::ThinLayer { slot_or_ground: u16::MAX, thickness: t }),
                None => {
                    let slot = palette.intern(Material::dielectric(d.eps_r, d.sigma));
                    body_kinds.push(BodyKind::Volumetric(slot));
                }
            }
        }
    }

    // Bounding boxes once per shape for cheap rejection.
    let electrode_bboxes: Vec<_> = assembly.electrodes.iter().map(|e| e.shape.bbox()).collect();
    let dielectric_bboxes: Vec<_> = assembly.dielectrics.iter().map(|d| d.shape.bbox()).collect();

    let dims = grid.dims;
    let slab = dims[0] * dims[1];
    let mut cells = vec![0u16; grid.ncells()];

    let in_bbox = |p: Vec3, bb: &(Vec3, Vec3)| {
        p.x > bb.0.x && p.x < bb.1.x && p.y > bb.0.y && p.y < bb.1.y && p.z > bb.0.z && p.z < bb.1.z
    };

    cells
        .par_chunks_mut(slab)
        .enumerate()
        .for_each(|(k, chunk)| {
            for j in 0..dims[1] {
                for i in 0..dims[0] {
                    let c = i + dims[0] * j;
                    if grid.is_boundary(i, j, k) {
                        chunk[c] = boundary_idx;
                        continue;
                    }
                    let p = grid.cell_center(i, j, k);
                    let mut slot = 0u16;
                    for (ei, e) in assembly.electrodes.iter().enumerate() {
                        if in_bbox(p, &electrode_bboxes[ei]) && e.shape.inside(p) {
                            slot = electrode_slots[ei];
                            break;
                        }
                    }
                    if slot == 0 {
                        for (di, d) in assembly.dielectrics.iter().enumerate() {
                            if let BodyKind::Volumetric(s) = body_kinds[di] {
                                if in_bbox(p, &dielectric_bboxes[di]) && d.shape.inside(p) {
                                    slot = s;
                                    break;
                                }
                            }
                        }
                    }
                    chunk[c] = slot;
                }
            }
        });

    // Widen sub-cell coating layers onto the adjacent cell layer behind the
    // facet plane, with capacitance-preserving anisotropic permittivity.
    for (di, d) in assembly.dielectrics.iter().enumerate() {
        let BodyKind::ThinLayer { slot_or_ground, thickness: t } = body_kinds[di] else {
            continue;
        };
        let facet = d
            .facet
            .as_ref()
            .expect("thin-layer bodies must carry facet information");
        let axis = (0..3)
            .max_by(|&a, &b| {
                facet.normal[a].abs().partial_cmp(&facet.normal[b].abs()).unwrap()
            })
            .unwrap();
        assert!(
            facet.normal[axis].abs() > 0.999,
            "thin facet layers must be axis-aligned"
        );
        // Host medium just behind the layer.
        let host_probe = facet.point - facet.normal * (t + 0.5 * h);
        let mut host = Material::VACUUM;
        for (hi, hd) in assembly.dielectrics.iter().enumerate() {
            if hi != di && matches!(body_kinds[hi], BodyKind::Volumetric(_)) && hd.shape.inside(host_probe)
            {
                host = Material::dielectric(hd.eps_r, hd.sigma);
                break;
            }
        }
        let slot = if d.grounded_metal {
            slot_or_ground
        } else {
            palette.intern(widened_layer_material(d.eps_r, d.sigma, t, h, &host, axis))
        };

        let (blo, bhi) = d.shape.bbox();
        let margin = Vec3::new(h, h, h);
        let lo = grid.cell_containing((blo - margin).max_components(grid.domain_box().0 + margin * 0.51));
        let hi_c = grid.cell_containing((bhi + margin).min_components(grid.domain_box().1 - margin * 0.51));
        let (Some(lo), Some(hi_c)) = (lo, hi_c) else { continue };
        for k in lo.2..=hi_c.2 {
            for j in lo.1..=hi_c.1 {
                for i in lo.0..=hi_c.0 {
                    if grid.is_boundary(i, j, k) {
                        continue;
                    }
                    let p = grid.cell_center(i, j, k);
                    // Distance behind the facet plane (into the mirror).
                    let s = (facet.point - p).dot(facet.normal);
                    if !(0.0..h).contains(&s) {
                        continue;
                    }
                    let radial = (p - facet.point) - facet.normal * (p - facet.point).dot(facet.normal);
                    if radial.norm() >= facet.radius {
                        continue;
                    }
                    let c = grid.idx(i, j, k);
                    let current = &palette.entries[cells[c] as usize];
                    if current.class != CellClass::Conductor {
                        cells[c] = slot;
                    }
                }
            }
        }
    }

    let data = Arc::new(RasterData { grid: grid.clone(), cells, palette: palette.entries });

    check_short_circuit(&data)?;

    Ok((
        MaterialMap { data: Arc::clone(&data) },
        DirichletMask { data, overrides: None },
    ))
}

/// Effective anisotropic permittivity of a one-cell layer standing in for a
/// thinner physical coating: series capacitance along the normal, parallel
/// in-plane, composed with the host medium filling the rest of the cell.
fn widened_layer_material(
    eps_r: f64,
    sigma: f64,
    t: f64,
    h: f64,
    host: &Material,
    normal_axis: usize,
) -> Material {
    let mut m = Material::dielectric(1.0, 0.0);
    for axis in 0..3 {
        // Compose complex permittivities at a reference frequency only to
        // split back into (eps_r, sigma); both compositions are linear in the
        // loss term along each branch, so the split is frequency-independent.
        let omega_ref = 1.0;
        let layer = Complex64::new(eps_r, -sigma / (omega_ref * EPSILON_0));
        let host_eps = Complex64::new(
            host.eps_r[axis],
            -host.sigma[axis] / (omega_ref * EPSILON_0),
        );
        let eff = if axis == normal_axis {
            h / (t / layer + (h - t) / host_eps)
        } else {
            (t * layer + (h - t) * host_eps) / h
        };
        m.eps_r[axis] = eff.re;
        m.sigma[axis] = -eff.im * omega_ref * EPSILON_0;
    }
    m
}

fn check_short_circuit(data: &RasterData) -> Result<(), RasterizeError> {
    let g = &data.grid;
    let dims = g.dims;
    let mut count = 0usize;
    let mut first = None;
    // Electrode-to-electrode adjacency only; the grounded outer boundary
    // shell is a domain truncation, not an electrode.
    for k in 1..dims[2] - 1 {
        for j in 1..dims[1] - 1 {
            for i in 1..dims[0] - 1 {
                let c = g.idx(i, j, k);
                let m = &data.palette[data.cells[c] as usize];
                if m.class != CellClass::Conductor || m.drive_weight == 0.0 {
                    continue;
                }
                for (ni, nj, nk) in [(i + 1, j, k), (i, j + 1, k), (i, j, k + 1)] {
                    if g.is_boundary(ni, nj, nk) {
                        continue;
                    }
                    let n = &data.palette[data.cells[g.idx(ni, nj, nk)] as usize];
                    if n.class == CellClass::Conductor && n.drive_weight != m.drive_weight {
                        count += 1;
                        first.get_or_insert((i, j, k));
                    }
                }
            }
        }
    }
    match first {
        Some(first) => Err(RasterizeError::ShortCircuit { count, first }),
        None => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{
        build_blade_trap, mm, um, CavityAxis, CoatingSpec, DielectricBody, Electrode,
        ElectrodeRole, MirrorPairSpec, TrapAssembly, TrapKind,
    };
    use crate::csg::CsgShape;

    fn empty_assembly() -> TrapAssembly {
        TrapAssembly {
            kind: TrapKind::Custom,
            electrodes: Vec::new(),
            dielectrics: Vec::new(),
            drive: crate::assembly::DriveParams { voltage: 200.0, frequency: 1.0e7 },
            ion: crate::assembly::IonParams { mass_amu: 40.0, charge_e: 1.0 },
            scale: 1.0,
            symmetry_axis: 2,
            nominal_center: Vec3::ZERO,
        }
    }

    #[test]
    fn empty_assembly_is_vacuum_with_boundary_mask() {
        let asm = empty_assembly();
        let g = Grid3D::new(Vec3::ZERO, 1e-4, [16, 16, 16]);
        let (map, mask) = rasterize(&asm, &g).unwrap();
        let mut interior = 0;
        for c in 0..g.ncells() {
            let (i, j, k) = g.unpack(c);
            if g.is_boundary(i, j, k) {
                assert!(mask.is_fixed(c));
                assert_eq!(mask.potential(c, 200.0), 0.0);
            } else {
                assert_eq!(map.class(c), CellClass::Vacuum);
                assert_eq!(map.material(c).eps_r, [1.0, 1.0, 1.0]);
                assert!(!mask.is_fixed(c));
                interior += 1;
            }
        }
        assert_eq!(interior, 14 * 14 * 14);
    }

    #[test]
    fn face_eps_is_harmonic_mean_and_symmetric() {
        let mut asm = empty_assembly();
        asm.dielectrics.push(DielectricBody::new(
            CsgShape::cuboid(Vec3::new(0.5e-3, 0.0, 0.0), Vec3::new(0.4e-3, 2e-3, 2e-3)),
            3.8,
            "slab",
        ));
        let g = Grid3D::covering(Vec3::new(-2e-3, -3e-3, -3e-3), Vec3::new(2e-3, 3e-3, 3e-3), 1e-4);
        let (map, _) = rasterize(&asm, &g).unwrap();
        // Find a vacuum/dielectric face along x.
        let (i, j, k) = g.cell_containing(Vec3::new(0.05e-3, 0.0, 0.0)).unwrap();
        let mut a = g.idx(i, j, k);
        let mut b = 0;
        for ii in i.. {
            b = g.idx(ii + 1, j, k);
            if map.class(b) == CellClass::Dielectric {
                a = g.idx(ii, j, k);
                break;
            }
        }
        let omega = 2.0 * std::f64::consts::PI * 1e7;
        let f_ab = map.face_eps(a, b, omega);
        let f_ba = map.face_eps(b, a, omega);
        assert_eq!(f_ab, f_ba);
        let expect = 2.0 * 1.0 * 3.8 / (1.0 + 3.8);
        assert!((f_ab.re - expect).abs() < 1e-12 && f_ab.im == 0.0);
    }

    #[test]
    fn blade_trap_rasterizes_with_vacuum_center() {
        let asm = build_blade_trap();
        let g = Grid3D::covering(
            Vec3::new(-5e-3, -5e-3, -5e-3),
            Vec3::new(5e-3, 5e-3, 5e-3),
            50e-6,
        );
        let (map, mask) = rasterize(&asm, &g).unwrap();
        let (i, j, k) = g.cell_containing(Vec3::ZERO).unwrap();
        assert_eq!(map.class(g.idx(i, j, k)), CellClass::Vacuum);
        // An rf cell inside the +x+y blade body.
        let (i, j, k) = g.cell_containing(Vec3::new(0.6e-3, 1.0e-3, 0.0)).unwrap();
        let c = g.idx(i, j, k);
        assert_eq!(map.class(c), CellClass::Conductor);
        assert!(mask.is_fixed(c));
        assert_eq!(mask.potential(c, 200.0), 200.0);
    }

    #[test]
    fn adjacent_rf_and_ground_reports_short() {
        let mut asm = empty_assembly();
        asm.electrodes.push(Electrode {
            shape: CsgShape::cuboid(Vec3::new(-0.5e-3, 0.0, 0.0), Vec3::new(0.5e-3, 1e-3, 1e-3)),
            role: ElectrodeRole::Rf,
            label: "a".into(),
        });
        asm.electrodes.push(Electrode {
            shape: CsgShape::cuboid(Vec3::new(0.5e-3, 0.0, 0.0), Vec3::new(0.5e-3, 1e-3, 1e-3)),
            role: ElectrodeRole::Ground,
            label: "b".into(),
        });
        let g = Grid3D::covering(Vec3::new(-2e-3, -2e-3, -2e-3), Vec3::new(2e-3, 2e-3, 2e-3), 1e-4);
        match rasterize(&asm, &g) {
            Err(RasterizeError::ShortCircuit { .. }) => {}
            other => panic!("expected short-circuit error, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn thin_coating_becomes_one_anisotropic_cell_layer() {
        // 10 um eps=15 coating on a 50 um grid, mirror pair on the blade trap.
        let asm = build_blade_trap();
        let mut spec = MirrorPairSpec::new(CavityAxis::X, mm(1.0));
        spec.coating = Some(CoatingSpec { thickness: um(10.0), eps_r: 15.0, sigma: 0.0, grounded: false });
        let with = crate::assembly::add_mirror_pair(&asm, &spec).unwrap();
        let g = Grid3D::covering(
            Vec3::new(-5e-3, -5e-3, -5e-3),
            Vec3::new(5e-3, 5e-3, 5e-3),
            50e-6,
        );
        let (map, _) = rasterize(&with, &g).unwrap();
        // Walk along +x from the center: vacuum, then exactly one widened
        // layer cell, then substrate.
        let (i0, j, k) = g.cell_containing(Vec3::ZERO).unwrap();
        let mut seen_layer = 0;
        let mut prev_was_layer = false;
        for i in i0..g.dims[0] {
            let c = g.idx(i, j, k);
            let m = map.material(c);
            let is_layer = m.class == CellClass::Dielectric && m.eps_r[0] != m.eps_r[1];
            if is_layer {
                seen_layer += 1;
                // Series along x (the facet normal): h/(t/eps + (h-t)/eps_host).
                let h = 50e-6;
                let t = 10e-6;
                let expect_series = h / (t / 15.0 + (h - t) / 3.8);
                let expect_parallel = (t * 15.0 + (h - t) * 3.8) / h;
                assert!((m.eps_r[0] - expect_series).abs() < 1e-9);
                assert!((m.eps_r[1] - expect_parallel).abs() < 1e-9);
            }
            if prev_was_layer && !is_layer {
                assert_eq!(m.class, CellClass::Dielectric, "substrate behind the layer");
                assert_eq!(m.eps_r[0], 3.8);
                break;
            }
            prev_was_layer = is_layer;
        }
        assert_eq!(seen_layer, 1, "expected exactly one widened layer cell per column");
    }

    #[test]
    fn refining_grid_converges_conductor_volume() {
        let asm = build_blade_trap();
        let vol = |h: f64| {
            let g = Grid3D::covering(
                Vec3::new(-3.2e-3, -4e-3, -3.2e-3),
                Vec3::new(3.2e-3, 4e-3, 3.2e-3),
                h,
            );
            let (map, _) = rasterize(&asm, &g).unwrap();
            let n = (0..g.ncells()).filter(|&c| map.class(c) == CellClass::Conductor).count();
            // Exclude the boundary shell, which is masked but not electrode metal.
            let boundary = g.ncells()
                - (g.dims[0] - 2) * (g.dims[1] - 2) * (g.dims[2] - 2);
            ((n - boundary) as f64) * h * h * h
        };
        // Four wedge prisms: cross-section r^2 tan(angle/2), length 6 mm.
        let depth = 3.0e-3;
        let exact = 4.0 * depth * depth * 22.5f64.to_radians().tan() * 6.0e-3;
        // Wetted surface area bounds the O(h) staircase error.
        let area = 2.8e-4;
        for h in [240e-6, 120e-6, 60e-6] {
            let v = vol(h);
            let err = (v - exact).abs();
            assert!(
                err <= 0.25 * area * h,
                "rasterized volume at h={h}: {v} vs exact {exact} (err {err:.3e})"
            );
        }
    }
}
