//! Uniform axisymmetric (r, z) node grid.
//!
//! Nodes sit at r_i = i·dr, z_j = j·dz with z = 0 on the bottom electrode
//! and z = height on the top electrode. Material properties live on the
//! elements between four nodes; every node owns the control volume
//! [r_i − dr/2, r_i + dr/2] × [z_j − dz/2, z_j + dz/2] clipped to the domain.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::GeometryParams;

/// Smallest node count per axis.
pub const MIN_NODES: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxiGrid {
    pub n_r: usize,
    pub n_z: usize,
    pub dr: f64,
    pub dz: f64,
    /// Domain radius (m).
    pub radius: f64,
    /// Domain height (m), the oxide thickness.
    pub height: f64,
}

impl AxiGrid {
    pub fn new(n_r: usize, n_z: usize, radius: f64, height: f64) -> Result<Self> {
        if n_r < MIN_NODES || n_z < MIN_NODES {
            return Err(Error::Validation(format!("grid needs at least {MIN_NODES} nodes per axis, got {n_r}×{n_z}")));
        }
        if !(radius > 0.0 && height > 0.0) {
            return Err(Error::Validation("grid extents must be positive".into()));
        }
        Ok(Self {
            n_r,
            n_z,
            dr: radius / (n_r - 1) as f64,
            dz: height / (n_z - 1) as f64,
            radius,
            height,
        })
    }

    /// Grid whose radius is five times the largest filament radius.
    pub fn for_geometry(n_r: usize, n_z: usize, geom: &GeometryParams) -> Result<Self> {
        Self::new(n_r, n_z, 5.0 * 0.5 * geom.phi_max, geom.t_ox)
    }

    pub fn len(&self) -> usize {
        self.n_r * self.n_z
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn node(&self, i: usize, j: usize) -> usize {
        j * self.n_r + i
    }

    pub fn r(&self, i: usize) -> f64 {
        i as f64 * self.dr
    }

    pub fn z(&self, j: usize) -> f64 {
        j as f64 * self.dz
    }

    pub fn n_elements(&self) -> usize {
        (self.n_r - 1) * (self.n_z - 1)
    }

    #[inline]
    pub fn element(&self, i: usize, j: usize) -> usize {
        j * (self.n_r - 1) + i
    }

    /// Area of the annulus [r_i, r_{i+1}].
    pub fn element_ring_area(&self, i: usize) -> f64 {
        let (a, b) = (self.r(i), self.r(i + 1));
        PI * (b * b - a * a)
    }

    /// Inner (towards the axis) and outer parts of node i's control ring:
    /// [r_i − dr/2, r_i] and [r_i, r_i + dr/2], clipped to the domain.
    pub fn node_ring_parts(&self, i: usize) -> (f64, f64) {
        let r = self.r(i);
        let inner = if i == 0 { 0.0 } else { PI * (r * r - (r - 0.5 * self.dr).powi(2)) };
        let outer = if i + 1 == self.n_r { 0.0 } else { PI * ((r + 0.5 * self.dr).powi(2) - r * r) };
        (inner, outer)
    }

    /// Control-volume height of row j.
    pub fn node_height(&self, j: usize) -> f64 {
        if j == 0 || j + 1 == self.n_z {
            0.5 * self.dz
        } else {
            self.dz
        }
    }

    pub fn node_volume(&self, i: usize, j: usize) -> f64 {
        let (a, b) = self.node_ring_parts(i);
        (a + b) * self.node_height(j)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn control_volumes_tile_the_cylinder() {
        let g = AxiGrid::new(20, 17, 100e-9, 40e-9).unwrap();
        let mut total = 0.0;
        for j in 0..g.n_z {
            for i in 0..g.n_r {
                total += g.node_volume(i, j);
            }
        }
        let exact = PI * g.radius * g.radius * g.height;
        assert!((total - exact).abs() < 1e-12 * exact);
    }

    #[test]
    fn rejects_coarse_grid() {
        assert!(AxiGrid::new(8, 64, 1e-7, 4e-8).is_err());
    }
}
