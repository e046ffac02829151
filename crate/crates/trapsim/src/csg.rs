//! Constructive solid geometry: primitives with exact point-membership queries,
//! composed by boolean set operations. All lengths are in meters.

use crate::vec3::Vec3;
use serde::{Deserialize, Serialize};

const UNIT_TOL: f64 = 1e-12;

/// A solid shape: either a primitive or a boolean combination of shapes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum CsgShape {
    /// Finite solid cylinder.
    Cylinder {
        /// Unit vector along the cylinder axis.
        axis: Vec3,
        /// Center of the cylinder (midpoint of the axis segment).
        center: Vec3,
        radius: f64,
        half_length: f64,
    },
    /// Axis-aligned box.
    Box { center: Vec3, half_extents: Vec3 },
    /// Solid ball (analytic verification bodies).
    Sphere { center: Vec3, radius: f64 },
    /// Prism with a wedge cross-section: an apex edge line from which two
    /// planar faces open symmetrically about `bisector` by `included_angle`,
    /// truncated at `depth` along the bisector and `length` along the edge.
    WedgePrism {
        /// A point on the apex edge (the prism is centered on it along the edge).
        edge_point: Vec3,
        /// Unit vector along the apex edge.
        edge_dir: Vec3,
        /// Unit vector from the edge into the solid, perpendicular to `edge_dir`.
        bisector: Vec3,
        /// Full angle between the two wedge faces (rad).
        included_angle: f64,
        /// Extent of the solid along `bisector`.
        depth: f64,
        /// Extent along `edge_dir`.
        length: f64,
    },
    /// Hollow tube: cylinder with a coaxial cylindrical bore.
    AnnularCylinder {
        axis: Vec3,
        center: Vec3,
        inner_radius: f64,
        outer_radius: f64,
        half_length: f64,
    },
    Union(Box<CsgShape>, Box<CsgShape>),
    Difference(Box<CsgShape>, Box<CsgShape>),
    Intersection(Box<CsgShape>, Box<CsgShape>),
}

impl CsgShape {
    pub fn cylinder(axis: Vec3, center: Vec3, radius: f64, half_length: f64) -> Self {
        assert!(axis.is_unit(UNIT_TOL), "cylinder axis must be a unit vector");
        assert!(radius > 0.0 && half_length > 0.0, "cylinder dimensions must be positive");
        CsgShape::Cylinder { axis, center, radius, half_length }
    }

    pub fn sphere(center: Vec3, radius: f64) -> Self {
        assert!(radius > 0.0, "sphere radius must be positive");
        CsgShape::Sphere { center, radius }
    }

    pub fn cuboid(center: Vec3, half_extents: Vec3) -> Self {
        assert!(
            half_extents.x > 0.0 && half_extents.y > 0.0 && half_extents.z > 0.0,
            "box half-extents must be positive"
        );
        CsgShape::Box { center, half_extents }
    }

    pub fn wedge_prism(
        edge_point: Vec3,
        edge_dir: Vec3,
        bisector: Vec3,
        included_angle: f64,
        depth: f64,
        length: f64,
    ) -> Self {
        assert!(edge_dir.is_unit(UNIT_TOL), "wedge edge direction must be a unit vector");
        assert!(bisector.is_unit(UNIT_TOL), "wedge bisector must be a unit vector");
        assert!(
            edge_dir.dot(bisector).abs() < 1e-9,
            "wedge bisector must be perpendicular to the edge"
        );
        assert!(
            included_angle > 0.0 && included_angle < std::f64::consts::PI,
            "wedge angle must be in (0, pi)"
        );
        assert!(depth > 0.0 && length > 0.0, "wedge dimensions must be positive");
        CsgShape::WedgePrism { edge_point, edge_dir, bisector, included_angle, depth, length }
    }

    pub fn annular_cylinder(
        axis: Vec3,
        center: Vec3,
        inner_radius: f64,
        outer_radius: f64,
        half_length: f64,
    ) -> Self {
        assert!(axis.is_unit(UNIT_TOL), "annulus axis must be a unit vector");
        assert!(
            inner_radius > 0.0 && outer_radius > inner_radius && half_length > 0.0,
            "annulus radii must satisfy 0 < inner < outer"
        );
        CsgShape::AnnularCylinder { axis, center, inner_radius, outer_radius, half_length }
    }

    pub fn union(a: CsgShape, b: CsgShape) -> Self {
        CsgShape::Union(Box::new(a), Box::new(b))
    }

    pub fn difference(a: CsgShape, b: CsgShape) -> Self {
        CsgShape::Difference(Box::new(a), Box::new(b))
    }

    pub fn intersection(a: CsgShape, b: CsgShape) -> Self {
        CsgShape::Intersection(Box::new(a), Box::new(b))
    }

    /// Point-membership query. Primitive boundaries are treated as exterior
    /// so that shapes sharing a boundary plane do not report overlap.
    pub fn inside(&self, p: Vec3) -> bool {
        match self {
            CsgShape::Cylinder { axis, center, radius, half_length } => {
                let d = p - *center;
                let a = d.dot(*axis);
                if a.abs() >= *half_length {
                    return false;
                }
                let radial = d - *axis * a;
                radial.dot(radial) < radius * radius
            }
            CsgShape::Box { center, half_extents } => {
                let d = (p - *center).abs();
                d.x < half_extents.x && d.y < half_extents.y && d.z < half_extents.z
            }
            CsgShape::Sphere { center, radius } => {
                let d = p - *center;
                d.dot(d) < radius * radius
            }
            CsgShape::WedgePrism {
                edge_point,
                edge_dir,
                bisector,
                included_angle,
                depth,
                length,
            } => {
                let d = p - *edge_point;
                let along = d.dot(*edge_dir);
                if along.abs() >= length / 2.0 {
                    return false;
                }
                let r = d.dot(*bisector);
                if r <= 0.0 || r >= *depth {
                    return false;
                }
                let t = d.dot(edge_dir.cross(*bisector));
                t.abs() < r * (included_angle / 2.0).tan()
            }
            CsgShape::AnnularCylinder { axis, center, inner_radius, outer_radius, half_length } => {
                let d = p - *center;
                let a = d.dot(*axis);
                if a.abs() >= *half_length {
                    return false;
                }
                let r2 = (d - *axis * a).dot(d - *axis * a);
                r2 > inner_radius * inner_radius && r2 < outer_radius * outer_radius
            }
            CsgShape::Union(a, b) => a.inside(p) || b.inside(p),
            CsgShape::Difference(a, b) => a.inside(p) && !b.inside(p),
            CsgShape::Intersection(a, b) => a.inside(p) && b.inside(p),
        }
    }

    /// Conservative axis-aligned bounding box as (min, max) corners.
    pub fn bbox(&self) -> (Vec3, Vec3) {
        match self {
            CsgShape::Cylinder { axis, center, radius, half_length } => {
                cylinder_bbox(*axis, *center, *radius, *half_length)
            }
            CsgShape::Box { center, half_extents } => {
                (*center - *half_extents, *center + *half_extents)
            }
            CsgShape::Sphere { center, radius } => {
                let r = Vec3::new(*radius, *radius, *radius);
                (*center - r, *center + r)
            }
            CsgShape::WedgePrism {
                edge_point,
                edge_dir,
                bisector,
                included_angle,
                depth,
                length,
            } => {
                // Hull of the six prism corners.
                let half_width = depth * (included_angle / 2.0).tan();
                let t = edge_dir.cross(*bisector);
                let mut lo = Vec3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY);
                let mut hi = -lo;
                for &s in &[-0.5 * *length, 0.5 * *length] {
                    for corner in [
                        *edge_point + *edge_dir * s,
                        *edge_point + *edge_dir * s + *bisector * *depth + t * half_width,
                        *edge_point + *edge_dir * s + *bisector * *depth - t * half_width,
                    ] {
                        lo = lo.min_components(corner);
                        hi = hi.max_components(corner);
                    }
                }
                (lo, hi)
            }
            CsgShape::AnnularCylinder { axis, center, outer_radius, half_length, .. } => {
                cylinder_bbox(*axis, *center, *outer_radius, *half_length)
            }
            CsgShape::Union(a, b) => {
                let (la, ha) = a.bbox();
                let (lb, hb) = b.bbox();
                (la.min_components(lb), ha.max_components(hb))
            }
            // The hole can only shrink the solid; keep the outer bbox.
            CsgShape::Difference(a, _) => a.bbox(),
            CsgShape::Intersection(a, b) => {
                let (la, ha) = a.bbox();
                let (lb, hb) = b.bbox();
                (la.max_components(lb), ha.min_components(hb))
            }
        }
    }

    /// Uniformly scale every length (positions and dimensions) by `factor`.
    pub fn scaled(&self, factor: f64) -> CsgShape {
        assert!(factor > 0.0, "scale factor must be positive");
        match self {
            CsgShape::Cylinder { axis, center, radius, half_length } => CsgShape::Cylinder {
                axis: *axis,
                center: *center * factor,
                radius: radius * factor,
                half_length: half_length * factor,
            },
            CsgShape::Box { center, half_extents } => CsgShape::Box {
                center: *center * factor,
                half_extents: *half_extents * factor,
            },
            CsgShape::Sphere { center, radius } => CsgShape::Sphere {
                center: *center * factor,
                radius: radius * factor,
            },
            CsgShape::WedgePrism {
                edge_point,
                edge_dir,
                bisector,
                included_angle,
                depth,
                length,
            } => CsgShape::WedgePrism {
                edge_point: *edge_point * factor,
                edge_dir: *edge_dir,
                bisector: *bisector,
                included_angle: *included_angle,
                depth: depth * factor,
                length: length * factor,
            },
            CsgShape::AnnularCylinder { axis, center, inner_radius, outer_radius, half_length } => {
                CsgShape::AnnularCylinder {
                    axis: *axis,
                    center: *center * factor,
                    inner_radius: inner_radius * factor,
                    outer_radius: outer_radius * factor,
                    half_length: half_length * factor,
                }
            }
            CsgShape::Union(a, b) => CsgShape::Union(
                Box::new(a.scaled(factor)),
                Box::new(b.scaled(factor)),
            ),
            CsgShape::Difference(a, b) => CsgShape::Difference(
                Box::new(a.scaled(factor)),
                Box::new(b.scaled(factor)),
            ),
            CsgShape::Intersection(a, b) => CsgShape::Intersection(
                Box::new(a.scaled(factor)),
                Box::new(b.scaled(factor)),
            ),
        }
    }
}

fn cylinder_bbox(axis: Vec3, center: Vec3, radius: f64, half_length: f64) -> (Vec3, Vec3) {
    // Per-component extent of a capped cylinder: |axis_k|*L/2 + r*sqrt(1-axis_k^2).
    let ext = Vec3::new(
        half_length * axis.x.abs() + radius * (1.0 - axis.x * axis.x).max(0.0).sqrt(),
        half_length * axis.y.abs() + radius * (1.0 - axis.y * axis.y).max(0.0).sqrt(),
        half_length * axis.z.abs() + radius * (1.0 - axis.z * axis.z).max(0.0).sqrt(),
    );
    (center - ext, center + ext)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn mm(v: f64) -> f64 {
        v * 1e-3
    }

    #[test]
    fn cylinder_membership() {
        let c = CsgShape::cylinder(Vec3::axis_unit(2), Vec3::ZERO, mm(0.35), mm(1.5));
        assert!(c.inside(Vec3::ZERO));
        assert!(c.inside(Vec3::new(mm(0.3), 0.0, mm(1.0))));
        assert!(!c.inside(Vec3::new(mm(0.36), 0.0, 0.0)));
        assert!(!c.inside(Vec3::new(0.0, 0.0, mm(1.6))));
    }

    #[test]
    fn annulus_excludes_bore() {
        let a = CsgShape::annular_cylinder(Vec3::axis_unit(1), Vec3::ZERO, mm(0.5), mm(0.6), mm(1.5));
        assert!(!a.inside(Vec3::ZERO));
        assert!(a.inside(Vec3::new(mm(0.55), 0.0, 0.0)));
        assert!(!a.inside(Vec3::new(mm(0.65), 0.0, 0.0)));
    }

    #[test]
    fn wedge_membership_and_bbox() {
        // 45-degree wedge opening along +x, apex edge through origin along z.
        let w = CsgShape::wedge_prism(
            Vec3::ZERO,
            Vec3::axis_unit(2),
            Vec3::axis_unit(0),
            45f64.to_radians(),
            mm(3.0),
            mm(6.0),
        );
        assert!(w.inside(Vec3::new(mm(1.0), 0.0, 0.0)));
        // Outside the half-angle.
        assert!(!w.inside(Vec3::new(mm(1.0), mm(0.5), 0.0)));
        // Inside the half-angle at larger radius.
        assert!(w.inside(Vec3::new(mm(2.0), mm(0.7), 0.0)));
        assert!(!w.inside(Vec3::new(-mm(0.1), 0.0, 0.0)));
        let (lo, hi) = w.bbox();
        assert!(lo.x >= -1e-12 && hi.x <= mm(3.0) + 1e-12);
        assert!(hi.z > mm(2.9) && lo.z < -mm(2.9));
    }

    #[test]
    fn boolean_membership_matches_composition() {
        let a = CsgShape::cuboid(Vec3::ZERO, Vec3::new(mm(1.0), mm(1.0), mm(1.0)));
        let b = CsgShape::cylinder(Vec3::axis_unit(2), Vec3::ZERO, mm(0.8), mm(2.0));
        let shapes = [
            (CsgShape::union(a.clone(), b.clone()), "union"),
            (CsgShape::difference(a.clone(), b.clone()), "difference"),
            (CsgShape::intersection(a.clone(), b.clone()), "intersection"),
        ];
        let mut rng = StdRng::seed_from_u64(7);
        for _ in 0..1000 {
            let p = Vec3::new(
                rng.gen_range(-mm(1.5)..mm(1.5)),
                rng.gen_range(-mm(1.5)..mm(1.5)),
                rng.gen_range(-mm(2.5)..mm(2.5)),
            );
            let (ia, ib) = (a.inside(p), b.inside(p));
            for (shape, kind) in &shapes {
                let got = shape.inside(p);
                let want = match *kind {
                    "union" => ia || ib,
                    "difference" => ia && !ib,
                    _ => ia && ib,
                };
                assert_eq!(got, want, "{kind} mismatch at {p:?}");
            }
        }
    }

    #[test]
    fn scaling_round_trip() {
        let w = CsgShape::wedge_prism(
            Vec3::new(mm(0.5), mm(0.5), 0.0),
            Vec3::axis_unit(2),
            Vec3::new(0.5f64.sqrt(), 0.5f64.sqrt(), 0.0),
            45f64.to_radians(),
            mm(3.0),
            mm(6.0),
        );
        let back = w.scaled(2.0).scaled(0.5);
        if let (
            CsgShape::WedgePrism { edge_point: p1, depth: d1, .. },
            CsgShape::WedgePrism { edge_point: p2, depth: d2, .. },
        ) = (&w, &back)
        {
            assert!((p1.x - p2.x).abs() < 1e-12 * p1.x.abs());
            assert!((d1 - d2).abs() < 1e-12 * d1);
        } else {
            panic!("scaling changed the shape kind");
        }
    }
}
