//! Uniform structured grid with cell-centered samples.

use crate::vec3::Vec3;
use serde::{Deserialize, Serialize};

/// Uniform isotropic grid. Cell (i,j,k) is centered at
/// `center + (i - (nx-1)/2, j - (ny-1)/2, k - (nz-1)/2) * h`; storing the
/// geometric center keeps mirrored cell coordinates bitwise symmetric, which
/// point-membership rasterization of symmetric scenes relies on. Linear cell
/// indices are x-fastest: `i + nx*(j + ny*k)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid3D {
    /// Geometric center of the gridded volume.
    pub center: Vec3,
    /// Cell spacing (m), identical along all axes.
    pub h: f64,
    pub dims: [usize; 3],
}

impl Grid3D {
    /// Grid from the center of cell (0,0,0).
    pub fn new(origin: Vec3, h: f64, dims: [usize; 3]) -> Self {
        assert!(h > 0.0, "grid spacing must be positive");
        assert!(dims.iter().all(|&n| n >= 16), "grid needs at least 16 cells per axis");
        let center = origin
            + Vec3::new(
                0.5 * (dims[0] - 1) as f64,
                0.5 * (dims[1] - 1) as f64,
                0.5 * (dims[2] - 1) as f64,
            ) * h;
        Grid3D { center, h, dims }
    }

    /// Grid from its geometric center.
    pub fn from_center(center: Vec3, h: f64, dims: [usize; 3]) -> Self {
        assert!(h > 0.0, "grid spacing must be positive");
        assert!(dims.iter().all(|&n| n >= 16), "grid needs at least 16 cells per axis");
        Grid3D { center, h, dims }
    }

    /// Smallest grid covering the box `[lo, hi]` with spacing `h`.
    pub fn covering(lo: Vec3, hi: Vec3, h: f64) -> Self {
        assert!(h > 0.0);
        let mut dims = [0usize; 3];
        for k in 0..3 {
            let span = hi[k] - lo[k];
            assert!(span > 0.0, "degenerate domain box");
            dims[k] = ((span / h).ceil() as usize).max(16);
        }
        Grid3D::from_center((lo + hi) * 0.5, h, dims)
    }

    /// Center of cell (0,0,0).
    pub fn origin(&self) -> Vec3 {
        self.cell_center(0, 0, 0)
    }

    pub fn ncells(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        debug_assert!(i < self.dims[0] && j < self.dims[1] && k < self.dims[2]);
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    #[inline]
    pub fn unpack(&self, idx: usize) -> (usize, usize, usize) {
        let i = idx % self.dims[0];
        let rest = idx / self.dims[0];
        (i, rest % self.dims[1], rest / self.dims[1])
    }

    #[inline]
    pub fn cell_center(&self, i: usize, j: usize, k: usize) -> Vec3 {
        // (i - (n-1)/2) is a half-integer, exact in f64; mirrored indices give
        // exactly negated offsets.
        self.center
            + Vec3::new(
                (i as f64 - 0.5 * (self.dims[0] - 1) as f64) * self.h,
                (j as f64 - 0.5 * (self.dims[1] - 1) as f64) * self.h,
                (k as f64 - 0.5 * (self.dims[2] - 1) as f64) * self.h,
            )
    }

    /// Fractional cell coordinate of `p` along one axis (0 at cell 0's center).
    #[inline]
    fn frac_coord(&self, p: Vec3, axis: usize) -> f64 {
        (p[axis] - self.center[axis]) / self.h + 0.5 * (self.dims[axis] - 1) as f64
    }

    /// Cell whose volume contains `p`, if any.
    pub fn cell_containing(&self, p: Vec3) -> Option<(usize, usize, usize)> {
        let mut out = [0usize; 3];
        for k in 0..3 {
            let f = self.frac_coord(p, k) + 0.5;
            if f < 0.0 {
                return None;
            }
            let i = f.floor() as usize;
            if i >= self.dims[k] {
                return None;
            }
            out[k] = i;
        }
        Some((out[0], out[1], out[2]))
    }

    /// True if `p` lies inside the gridded volume (cell faces included).
    pub fn contains(&self, p: Vec3) -> bool {
        self.cell_containing(p).is_some()
    }

    /// Domain box corners (outer faces of the boundary cells).
    pub fn domain_box(&self) -> (Vec3, Vec3) {
        let half = Vec3::new(self.h / 2.0, self.h / 2.0, self.h / 2.0);
        let lo = self.cell_center(0, 0, 0) - half;
        let hi = self.cell_center(self.dims[0] - 1, self.dims[1] - 1, self.dims[2] - 1) + half;
        (lo, hi)
    }

    pub fn is_boundary(&self, i: usize, j: usize, k: usize) -> bool {
        i == 0
            || j == 0
            || k == 0
            || i == self.dims[0] - 1
            || j == self.dims[1] - 1
            || k == self.dims[2] - 1
    }

    /// Trilinear interpolation of a cell-centered scalar field at `p`.
    /// Clamps to the sample hull; returns None outside the domain.
    pub fn trilinear(&self, field: &[f64], p: Vec3) -> Option<f64> {
        debug_assert_eq!(field.len(), self.ncells());
        if !self.contains(p) {
            return None;
        }
        let (w, base) = self.interp_weights(p);
        let mut acc = 0.0;
        for (didx, weight) in Self::corner_weights(w) {
            let (di, dj, dk) = didx;
            acc += weight * field[self.idx(base.0 + di, base.1 + dj, base.2 + dk)];
        }
        Some(acc)
    }

    /// Base cell and fractional offsets for trilinear interpolation.
    pub fn interp_weights(&self, p: Vec3) -> ([f64; 3], (usize, usize, usize)) {
        let mut base = [0usize; 3];
        let mut frac = [0f64; 3];
        for k in 0..3 {
            let f = self.frac_coord(p, k);
            let fl = f.floor();
            let mut i = fl as isize;
            let mut t = f - fl;
            if i < 0 {
                i = 0;
                t = 0.0;
            }
            if i as usize >= self.dims[k] - 1 {
                i = self.dims[k] as isize - 2;
                t = 1.0;
            }
            base[k] = i as usize;
            frac[k] = t;
        }
        (frac, (base[0], base[1], base[2]))
    }

    fn corner_weights(w: [f64; 3]) -> [((usize, usize, usize), f64); 8] {
        let (tx, ty, tz) = (w[0], w[1], w[2]);
        [
            ((0, 0, 0), (1.0 - tx) * (1.0 - ty) * (1.0 - tz)),
            ((1, 0, 0), tx * (1.0 - ty) * (1.0 - tz)),
            ((0, 1, 0), (1.0 - tx) * ty * (1.0 - tz)),
            ((1, 1, 0), tx * ty * (1.0 - tz)),
            ((0, 0, 1), (1.0 - tx) * (1.0 - ty) * tz),
            ((1, 0, 1), tx * (1.0 - ty) * tz),
            ((0, 1, 1), (1.0 - tx) * ty * tz),
            ((1, 1, 1), tx * ty * tz),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indexing_round_trip() {
        let g = Grid3D::new(Vec3::ZERO, 1e-4, [17, 19, 23]);
        for &(i, j, k) in &[(0, 0, 0), (16, 18, 22), (5, 7, 11)] {
            assert_eq!(g.unpack(g.idx(i, j, k)), (i, j, k));
        }
    }

    #[test]
    fn mirrored_cell_centers_are_bitwise_negated() {
        let g = Grid3D::covering(
            Vec3::new(-3.2e-3, -4.1e-3, -3.3e-3),
            Vec3::new(3.2e-3, 4.1e-3, 3.3e-3),
            1e-4,
        );
        for (i, j, k) in [(0usize, 0usize, 0usize), (5, 7, 9), (13, 2, 30)] {
            let a = g.cell_center(i, j, k);
            let b = g.cell_center(g.dims[0] - 1 - i, g.dims[1] - 1 - j, g.dims[2] - 1 - k);
            assert_eq!(a.x.to_bits(), (-b.x).to_bits());
            assert_eq!(a.y.to_bits(), (-b.y).to_bits());
            assert_eq!(a.z.to_bits(), (-b.z).to_bits());
        }
    }

    #[test]
    fn trilinear_reproduces_linear_fields() {
        let g = Grid3D::new(Vec3::ZERO, 0.5e-3, [16, 16, 16]);
        let lin = |p: Vec3| 2.0 * p.x - 3.0 * p.y + 0.5 * p.z + 1.0;
        let field: Vec<f64> = (0..g.ncells())
            .map(|c| {
                let (i, j, k) = g.unpack(c);
                lin(g.cell_center(i, j, k))
            })
            .collect();
        // Exact at a sample point.
        let node = g.cell_center(3, 4, 5);
        assert!((g.trilinear(&field, node).unwrap() - lin(node)).abs() < 1e-12);
        // Exact midway between samples.
        let mid = node + Vec3::new(0.25e-3, 0.25e-3, 0.25e-3);
        assert!((g.trilinear(&field, mid).unwrap() - lin(mid)).abs() < 1e-12);
        // Outside the domain.
        assert!(g.trilinear(&field, Vec3::new(-1.0, 0.0, 0.0)).is_none());
    }

    #[test]
    fn covering_box_contains_it() {
        let lo = Vec3::new(-1e-3, -2e-3, -1.5e-3);
        let hi = Vec3::new(1e-3, 2e-3, 1.5e-3);
        let g = Grid3D::covering(lo, hi, 0.1e-3);
        let (dlo, dhi) = g.domain_box();
        for k in 0..3 {
            assert!(dlo[k] <= lo[k] + 1e-12);
            assert!(dhi[k] >= hi[k] - 1e-12);
        }
    }
}
