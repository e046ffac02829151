//! Parametric trap geometries: the five electrode configurations, cavity
//! mirror pairs, and uniform scaling. Builders return a [`TrapAssembly`]
//! holding electrodes with voltage roles plus dielectric bodies.

use crate::csg::CsgShape;
use crate::vec3::Vec3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

const MM: f64 = 1e-3;
const UM: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("mirror body '{mirror}' intersects electrode '{electrode}'")]
    MirrorOverlap { mirror: String, electrode: String },
    #[error("cavity axis {axis:?} is not available for the {trap:?} trap")]
    InvalidCavityAxis { axis: CavityAxis, trap: TrapKind },
    #[error("misalignment transverse axis must differ from the cavity axis")]
    BadTransverseAxis,
}

/// Voltage role of an electrode. Only the rf drive and ground exist; dc
/// compensation electrodes are outside the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ElectrodeRole {
    Rf,
    Ground,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Electrode {
    pub shape: CsgShape,
    pub role: ElectrodeRole,
    pub label: String,
}

/// Trap-facing end face of a mirror substrate or coating disk.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FacetInfo {
    /// A point on the facet plane (on the cavity axis).
    pub point: Vec3,
    /// Unit normal pointing from the facet into the vacuum (toward the trap).
    pub normal: Vec3,
    pub radius: f64,
}

/// Marks a body as a sub-cell coating layer; the rasterizer widens it to one
/// cell with a capacitance-preserving effective permittivity when the grid
/// spacing exceeds the physical thickness.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ThinLayer {
    pub thickness: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DielectricBody {
    pub shape: CsgShape,
    /// Relative permittivity (>= 1).
    pub eps_r: f64,
    /// Conductivity in S/m (>= 0).
    pub sigma: f64,
    /// Treat as a grounded conductor instead of a dielectric.
    pub grounded_metal: bool,
    pub label: String,
    pub facet: Option<FacetInfo>,
    pub thin_layer: Option<ThinLayer>,
}

impl DielectricBody {
    pub fn new(shape: CsgShape, eps_r: f64, label: impl Into<String>) -> Self {
        assert!(eps_r >= 1.0, "relative permittivity must be >= 1");
        DielectricBody {
            shape,
            eps_r,
            sigma: 0.0,
            grounded_metal: false,
            label: label.into(),
            facet: None,
            thin_layer: None,
        }
    }
}

/// Rf drive parameters.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DriveParams {
    /// Rf voltage amplitude (V).
    pub voltage: f64,
    /// Drive frequency Omega/2pi (Hz).
    pub frequency: f64,
}

impl DriveParams {
    /// Angular frequency Omega (rad/s).
    pub fn omega(&self) -> f64 {
        2.0 * std::f64::consts::PI * self.frequency
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct IonParams {
    pub mass_amu: f64,
    pub charge_e: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrapKind {
    Blade,
    Wafer,
    Endcap,
    Stylus,
    Surface,
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CavityAxis {
    X,
    Y,
    Z,
}

impl CavityAxis {
    pub fn index(self) -> usize {
        match self {
            CavityAxis::X => 0,
            CavityAxis::Y => 1,
            CavityAxis::Z => 2,
        }
    }

    pub fn unit(self) -> Vec3 {
        Vec3::axis_unit(self.index())
    }

    pub fn name(self) -> &'static str {
        match self {
            CavityAxis::X => "x",
            CavityAxis::Y => "y",
            CavityAxis::Z => "z",
        }
    }
}

/// Facet coating description for mirror substrates.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CoatingSpec {
    pub thickness: f64,
    pub eps_r: f64,
    pub sigma: f64,
    /// Model the coating as a grounded conductor sheet.
    pub grounded: bool,
}

/// Rigid mirror displacements, all in meters.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct Misalignment {
    /// Both mirrors shifted along the cavity axis.
    pub longitudinal: f64,
    /// Both mirrors shifted the same way perpendicular to the cavity axis.
    pub transverse: f64,
    /// Mirrors shifted in opposite perpendicular directions.
    pub skew: f64,
    /// Axis of the transverse/skew shift; defaults to the lowest coordinate
    /// axis perpendicular to the cavity.
    pub transverse_axis: Option<CavityAxis>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MirrorPairSpec {
    pub axis: CavityAxis,
    /// Facet-to-facet cavity length (m).
    pub length: f64,
    pub mirror_diameter: f64,
    pub substrate_length: f64,
    pub substrate_eps_r: f64,
    pub coating: Option<CoatingSpec>,
    pub misalignment: Misalignment,
    /// Emit only the mirror on the positive-axis side (surface-trap vertical cavity).
    pub single_mirror: bool,
}

impl MirrorPairSpec {
    pub fn new(axis: CavityAxis, length: f64) -> Self {
        assert!(length > 0.0, "cavity length must be positive");
        MirrorPairSpec {
            axis,
            length,
            mirror_diameter: 0.7 * MM,
            substrate_length: 3.0 * MM,
            substrate_eps_r: 3.8,
            coating: None,
            misalignment: Misalignment::default(),
            single_mirror: false,
        }
    }
}

/// Complete scene: electrodes with roles, dielectric bodies, drive and ion
/// parameters, and the nominal trap center used for mirror placement.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrapAssembly {
    pub kind: TrapKind,
    pub electrodes: Vec<Electrode>,
    pub dielectrics: Vec<DielectricBody>,
    pub drive: DriveParams,
    pub ion: IonParams,
    /// Cumulative geometric scale factor applied via [`scale_assembly`].
    pub scale: f64,
    /// Symmetry axis of the electrode configuration (0=x, 1=y, 2=z).
    pub symmetry_axis: usize,
    /// Expected rf-null location; refined by analysis and used as the cavity
    /// axis anchor when mirrors are added.
    pub nominal_center: Vec3,
}

impl TrapAssembly {
    /// Default drive and ion: 200 V at 10 MHz, calcium-40 with one elementary charge.
    fn with_defaults(kind: TrapKind, symmetry_axis: usize, nominal_center: Vec3) -> Self {
        TrapAssembly {
            kind,
            electrodes: Vec::new(),
            dielectrics: Vec::new(),
            drive: DriveParams { voltage: 200.0, frequency: 10.0e6 },
            ion: IonParams { mass_amu: 40.0, charge_e: 1.0 },
            scale: 1.0,
            symmetry_axis,
            nominal_center,
        }
    }

    /// Cavity orientations that make sense for this electrode geometry.
    pub fn allowed_cavity_axes(&self) -> &'static [CavityAxis] {
        match self.kind {
            TrapKind::Endcap | TrapKind::Stylus => &[CavityAxis::X, CavityAxis::Y],
            _ => &[CavityAxis::X, CavityAxis::Y, CavityAxis::Z],
        }
    }

    /// Bounding box over all solids (electrodes and dielectrics).
    pub fn bbox(&self) -> (Vec3, Vec3) {
        let mut lo = Vec3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY);
        let mut hi = -lo;
        for e in &self.electrodes {
            let (l, h) = e.shape.bbox();
            lo = lo.min_components(l);
            hi = hi.max_components(h);
        }
        for d in &self.dielectrics {
            let (l, h) = d.shape.bbox();
            lo = lo.min_components(l);
            hi = hi.max_components(h);
        }
        (lo, hi)
    }

    /// Bounding box of the electrodes only.
    pub fn electrode_bbox(&self) -> (Vec3, Vec3) {
        let mut lo = Vec3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY);
        let mut hi = -lo;
        for e in &self.electrodes {
            let (l, h) = e.shape.bbox();
            lo = lo.min_components(l);
            hi = hi.max_components(h);
        }
        (lo, hi)
    }

    pub fn inside_any_electrode(&self, p: Vec3) -> bool {
        self.electrodes.iter().any(|e| e.shape.inside(p))
    }
}

/// Linear trap with four blade electrodes of 45-degree edge angle.
///
/// The blade edges run along z at the corners (+-0.5 mm, +-0.5 mm) so the
/// horizontal and vertical tip-to-tip separations are 1 mm. Each blade opens
/// outward with one face in the vertical plane through its edge (bounding the
/// 1 mm wide vertical slots) and the other at 45 degrees. The rf pair sits on
/// one diagonal, the grounded pair on the other.
pub fn build_blade_trap() -> TrapAssembly {
    let mut asm = TrapAssembly::with_defaults(TrapKind::Blade, 2, Vec3::ZERO);
    let angle = 45f64.to_radians();
    let depth = 3.0 * MM;
    let length = 6.0 * MM;
    // Bisector tilted 22.5 degrees off the vertical: faces at 45 and 90 degrees.
    let tilt = angle / 2.0;
    for (sx, sy) in [(1.0, 1.0), (-1.0, 1.0), (-1.0, -1.0), (1.0, -1.0)] {
        let edge = Vec3::new(sx * 0.5 * MM, sy * 0.5 * MM, 0.0);
        let bisector = Vec3::new(sx * tilt.sin(), sy * tilt.cos(), 0.0);
        let shape =
            CsgShape::wedge_prism(edge, Vec3::axis_unit(2), bisector, angle, depth, length);
        let role = if sx * sy > 0.0 { ElectrodeRole::Rf } else { ElectrodeRole::Ground };
        let name = format!(
            "blade{}{}",
            if sx > 0.0 { "+x" } else { "-x" },
            if sy > 0.0 { "+y" } else { "-y" }
        );
        asm.electrodes.push(Electrode { shape, role, label: name });
    }
    asm
}

/// Linear trap with four planar wafer electrodes, 0.25 mm thick.
///
/// Wafers stand in vertical planes at x = +-(0.5..0.75) mm above and below
/// the midplane, leaving the same 1 mm wide gaps as the blade trap.
pub fn build_wafer_trap() -> TrapAssembly {
    let mut asm = TrapAssembly::with_defaults(TrapKind::Wafer, 2, Vec3::ZERO);
    let thickness = 0.25 * MM;
    let width = 3.0 * MM;
    let length = 6.0 * MM;
    for (sx, sy) in [(1.0, 1.0), (-1.0, 1.0), (-1.0, -1.0), (1.0, -1.0)] {
        let center = Vec3::new(
            sx * (0.5 * MM + thickness / 2.0),
            sy * (0.5 * MM + width / 2.0),
            0.0,
        );
        let half = Vec3::new(thickness / 2.0, width / 2.0, length / 2.0);
        let role = if sx * sy > 0.0 { ElectrodeRole::Rf } else { ElectrodeRole::Ground };
        let name = format!(
            "wafer{}{}",
            if sx > 0.0 { "+x" } else { "-x" },
            if sy > 0.0 { "+y" } else { "-y" }
        );
        asm.electrodes.push(Electrode { shape: CsgShape::cuboid(center, half), role, label: name });
    }
    asm
}

/// Endcap trap: two pairs of concentric hollow cylinders along y.
///
/// Inner electrodes (rf): bore diameter 1 mm, wall 0.1 mm, facing rims 1 mm
/// apart. Outer electrodes (ground): bore diameter 2 mm, wall 0.1 mm, rims
/// 2 mm apart, so the inner electrodes protrude by 0.5 mm.
pub fn build_endcap_trap() -> TrapAssembly {
    let mut asm = TrapAssembly::with_defaults(TrapKind::Endcap, 1, Vec3::ZERO);
    let len = 3.0 * MM;
    for sy in [1.0f64, -1.0] {
        let inner = CsgShape::annular_cylinder(
            Vec3::axis_unit(1),
            Vec3::new(0.0, sy * (0.5 * MM + len / 2.0), 0.0),
            0.5 * MM,
            0.6 * MM,
            len / 2.0,
        );
        let outer = CsgShape::annular_cylinder(
            Vec3::axis_unit(1),
            Vec3::new(0.0, sy * (1.0 * MM + len / 2.0), 0.0),
            1.0 * MM,
            1.1 * MM,
            len / 2.0,
        );
        let side = if sy > 0.0 { "+y" } else { "-y" };
        asm.electrodes.push(Electrode {
            shape: inner,
            role: ElectrodeRole::Rf,
            label: format!("inner{side}"),
        });
        asm.electrodes.push(Electrode {
            shape: outer,
            role: ElectrodeRole::Ground,
            label: format!("outer{side}"),
        });
    }
    asm
}

/// Stylus trap: one concentric cylinder set above a grounded plate.
///
/// Same cross-section dimensions as an endcap half. The outer cylinder (rf)
/// protrudes 0.5 mm from the plate plane and the inner grounded cylinder a
/// further 0.5 mm, preserving the endcap protrusion. The plate has a
/// clearance hole around the cylinders.
pub fn build_stylus_trap() -> TrapAssembly {
    let mut asm = TrapAssembly::with_defaults(TrapKind::Stylus, 1, Vec3::new(0.0, 1.87 * MM, 0.0));
    let below = 0.5 * MM;
    let inner = CsgShape::annular_cylinder(
        Vec3::axis_unit(1),
        Vec3::new(0.0, (1.0 * MM - below) / 2.0, 0.0),
        0.5 * MM,
        0.6 * MM,
        (1.0 * MM + below) / 2.0,
    );
    let outer = CsgShape::annular_cylinder(
        Vec3::axis_unit(1),
        Vec3::new(0.0, (0.5 * MM - below) / 2.0, 0.0),
        1.0 * MM,
        1.1 * MM,
        (0.5 * MM + below) / 2.0,
    );
    let plate_solid = CsgShape::cuboid(
        Vec3::new(0.0, -0.05 * MM, 0.0),
        Vec3::new(2.0 * MM, 0.05 * MM, 2.0 * MM),
    );
    let hole = CsgShape::cylinder(Vec3::axis_unit(1), Vec3::new(0.0, -0.05 * MM, 0.0), 1.3 * MM, 0.2 * MM);
    let plate = CsgShape::difference(plate_solid, hole);
    asm.electrodes.push(Electrode {
        shape: outer,
        role: ElectrodeRole::Rf,
        label: "outer".into(),
    });
    asm.electrodes.push(Electrode {
        shape: inner,
        role: ElectrodeRole::Ground,
        label: "inner".into(),
    });
    asm.electrodes.push(Electrode {
        shape: plate,
        role: ElectrodeRole::Ground,
        label: "plate".into(),
    });
    asm
}

/// Planar surface trap: four parallel rails on a plane.
///
/// Rails are 0.2125 mm wide and 0.1 mm tall with 0.05 mm gaps, 1 mm total
/// width. The outer pair carries rf, the inner pair is grounded, which puts
/// the rf-nodal line above the center gap of the configuration.
pub fn build_surface_trap() -> TrapAssembly {
    let mut asm =
        TrapAssembly::with_defaults(TrapKind::Surface, 2, Vec3::new(0.0, 0.30 * MM, 0.0));
    let width = 0.2125 * MM;
    let gap = 0.05 * MM;
    let height = 0.1 * MM;
    let length = 6.0 * MM;
    let rail_centers = [
        -1.5 * (width + gap),
        -0.5 * (width + gap),
        0.5 * (width + gap),
        1.5 * (width + gap),
    ];
    for (i, &xc) in rail_centers.iter().enumerate() {
        let center = Vec3::new(xc, height / 2.0, 0.0);
        let half = Vec3::new(width / 2.0, height / 2.0, length / 2.0);
        let role = if i == 0 || i == 3 { ElectrodeRole::Rf } else { ElectrodeRole::Ground };
        asm.electrodes.push(Electrode {
            shape: CsgShape::cuboid(center, half),
            role,
            label: format!("rail{i}"),
        });
    }
    asm
}

/// Append a cavity mirror pair (or a single mirror) to the assembly.
///
/// Facets face each other `spec.length` apart along the cavity axis through
/// the nominal trap center; misalignment offsets displace the rigid mirrors
/// afterwards. Fails if a mirror body intersects an electrode.
pub fn add_mirror_pair(
    assembly: &TrapAssembly,
    spec: &MirrorPairSpec,
) -> Result<TrapAssembly, GeometryError> {
    if !assembly.allowed_cavity_axes().contains(&spec.axis) {
        return Err(GeometryError::InvalidCavityAxis { axis: spec.axis, trap: assembly.kind });
    }
    let axis = spec.axis.unit();
    let trans_axis = match spec.misalignment.transverse_axis {
        Some(a) => {
            if a == spec.axis {
                return Err(GeometryError::BadTransverseAxis);
            }
            a.unit()
        }
        None => {
            let k = if spec.axis.index() == 0 { 1 } else { 0 };
            Vec3::axis_unit(k)
        }
    };

    let mut out = assembly.clone();
    let radius = spec.mirror_diameter / 2.0;
    let coat_t = spec.coating.map(|c| c.thickness).unwrap_or(0.0);
    let sides: &[f64] = if spec.single_mirror { &[1.0] } else { &[1.0, -1.0] };

    let mut new_bodies = Vec::new();
    for &side in sides {
        let sign_axis = axis * side;
        let facet_center = assembly.nominal_center
            + sign_axis * (spec.length / 2.0)
            + axis * spec.misalignment.longitudinal
            + trans_axis * (spec.misalignment.transverse + side * spec.misalignment.skew);
        let label_side = if side > 0.0 { "+" } else { "-" };
        let label = format!("mirror{}{}", label_side, spec.axis.name());

        if let Some(coat) = spec.coating {
            let coat_center = facet_center + sign_axis * (coat.thickness / 2.0);
            let disk = CsgShape::cylinder(axis, coat_center, radius, coat.thickness / 2.0);
            let mut body = DielectricBody::new(disk, coat.eps_r.max(1.0), format!("{label}-coating"));
            body.sigma = coat.sigma;
            body.grounded_metal = coat.grounded;
            body.facet = Some(FacetInfo { point: facet_center, normal: -sign_axis, radius });
            body.thin_layer = Some(ThinLayer { thickness: coat.thickness });
            new_bodies.push(body);
        }

        let sub_front = facet_center + sign_axis * coat_t;
        let sub_center = sub_front + sign_axis * (spec.substrate_length / 2.0);
        let substrate = CsgShape::cylinder(axis, sub_center, radius, spec.substrate_length / 2.0);
        let mut body = DielectricBody::new(substrate, spec.substrate_eps_r, label);
        body.facet = Some(FacetInfo { point: sub_front, normal: -sign_axis, radius });
        new_bodies.push(body);
    }

    for body in &new_bodies {
        if let Some(hit) = body_overlaps_electrode(body, assembly) {
            return Err(GeometryError::MirrorOverlap { mirror: body.label.clone(), electrode: hit });
        }
    }
    out.dielectrics.extend(new_bodies);
    Ok(out)
}

/// Sampled overlap test between a dielectric body and the electrodes.
fn body_overlaps_electrode(body: &DielectricBody, assembly: &TrapAssembly) -> Option<String> {
    let (lo, hi) = body.shape.bbox();
    let n = 33;
    for k in 0..n {
        for j in 0..n {
            for i in 0..n {
                let f = |idx: usize, a: f64, b: f64| a + (b - a) * (idx as f64 + 0.5) / n as f64;
                let p = Vec3::new(f(i, lo.x, hi.x), f(j, lo.y, hi.y), f(k, lo.z, hi.z));
                if body.shape.inside(p) {
                    for e in &assembly.electrodes {
                        if e.shape.inside(p) {
                            return Some(e.label.clone());
                        }
                    }
                }
            }
        }
    }
    None
}

/// Uniformly rescale every geometric length by `factor`; drive and ion
/// parameters are unchanged.
pub fn scale_assembly(assembly: &TrapAssembly, factor: f64) -> TrapAssembly {
    assert!(factor > 0.0, "scale factor must be positive");
    let mut out = assembly.clone();
    out.scale = assembly.scale * factor;
    out.nominal_center = assembly.nominal_center * factor;
    for e in &mut out.electrodes {
        e.shape = e.shape.scaled(factor);
    }
    for d in &mut out.dielectrics {
        d.shape = d.shape.scaled(factor);
        if let Some(f) = &mut d.facet {
            f.point = f.point * factor;
            f.radius *= factor;
        }
        if let Some(t) = &mut d.thin_layer {
            t.thickness *= factor;
        }
    }
    out
}

/// Convenience: micrometers to meters.
pub fn um(v: f64) -> f64 {
    v * UM
}

/// Convenience: millimeters to meters.
pub fn mm(v: f64) -> f64 {
    v * MM
}
