//! Domain value types: transient images, albedo volumes, normal fields, and
//! per-path visibility.
//!
//! All types own their geometry (it is small) and validate shape and range
//! invariants at construction. They are immutable-by-convention: solvers build
//! new values rather than mutating shared ones.

use crate::error::Error;
use crate::geometry::{normal_from_angles, ScanGeometry};
use crate::Result;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

/// Time-resolved photon flux recorded on the wall grid.
///
/// Layout: `data[(ix * N + iy) * T + t]` for wall sample `(ix, iy)` and time
/// bin `t`. All entries are nonnegative.
#[derive(Debug, Clone, PartialEq)]
pub struct TransientImage {
    geometry: ScanGeometry,
    data: Vec<f64>,
}

impl TransientImage {
    /// All-zero transient image for the given geometry.
    pub fn zeros(geometry: ScanGeometry) -> Self {
        let len = geometry.num_samples() * geometry.time_bins();
        TransientImage { geometry, data: vec![0.0; len] }
    }

    /// Wraps raw data, validating length and nonnegativity.
    pub fn from_data(geometry: ScanGeometry, data: Vec<f64>) -> Result<Self> {
        let expect = geometry.num_samples() * geometry.time_bins();
        if data.len() != expect {
            return Err(Error::ShapeMismatch(format!(
                "transient image needs {expect} entries, got {}",
                data.len()
            )));
        }
        if data.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
            return Err(Error::InvalidParameter(
                "transient image entries must be finite and >= 0".into(),
            ));
        }
        Ok(TransientImage { geometry, data })
    }

    pub fn geometry(&self) -> &ScanGeometry {
        &self.geometry
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Flux at flat sample `i`, time bin `t`.
    pub fn at(&self, i: usize, t: usize) -> f64 {
        self.data[i * self.geometry.time_bins() + t]
    }

    /// Time histogram slice for flat sample `i`.
    pub fn sample_histogram(&self, i: usize) -> &[f64] {
        let t = self.geometry.time_bins();
        &self.data[i * t..(i + 1) * t]
    }

    /// Largest entry (0 for an empty/zero image).
    pub fn max_value(&self) -> f64 {
        self.data.iter().cloned().fold(0.0, f64::max)
    }

    pub(crate) fn from_data_unchecked(geometry: ScanGeometry, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), geometry.num_samples() * geometry.time_bins());
        TransientImage { geometry, data }
    }
}

/// Nonnegative hidden-scene albedos on the voxel grid.
///
/// Layout: `data[(ix * ny + iy) * nz + iz]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AlbedoVolume {
    geometry: ScanGeometry,
    data: Vec<f64>,
}

impl AlbedoVolume {
    pub fn zeros(geometry: ScanGeometry) -> Self {
        let len = geometry.num_voxels();
        AlbedoVolume { geometry, data: vec![0.0; len] }
    }

    /// Wraps raw data, validating length and nonnegativity.
    pub fn from_data(geometry: ScanGeometry, data: Vec<f64>) -> Result<Self> {
        let expect = geometry.num_voxels();
        if data.len() != expect {
            return Err(Error::ShapeMismatch(format!(
                "albedo volume needs {expect} entries, got {}",
                data.len()
            )));
        }
        if data.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
            return Err(Error::InvalidParameter(
                "albedo entries must be finite and >= 0".into(),
            ));
        }
        Ok(AlbedoVolume { geometry, data })
    }

    pub fn geometry(&self) -> &ScanGeometry {
        &self.geometry
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn at(&self, ix: usize, iy: usize, iz: usize) -> f64 {
        self.data[self.geometry.voxel_index(ix, iy, iz)]
    }

    pub fn max_value(&self) -> f64 {
        self.data.iter().cloned().fold(0.0, f64::max)
    }

    /// Indices of voxels with nonzero albedo.
    pub fn occupied(&self) -> Vec<usize> {
        self.data
            .iter()
            .enumerate()
            .filter(|(_, &a)| a > 0.0)
            .map(|(j, _)| j)
            .collect()
    }
}

/// Per-voxel surface normals parameterized by spherical angles.
///
/// Unit vectors are derived once at construction; `vector(j)` has unit norm
/// within 1e-12 by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalField {
    angles_u: Vec<f64>,
    angles_v: Vec<f64>,
    vectors: Vec<[f64; 3]>,
}

impl NormalField {
    /// Builds a field from per-voxel azimuth/polar angles (radians).
    pub fn from_angles(angles_u: Vec<f64>, angles_v: Vec<f64>) -> Result<Self> {
        if angles_u.len() != angles_v.len() {
            return Err(Error::ShapeMismatch(format!(
                "normal angle arrays differ in length: {} vs {}",
                angles_u.len(),
                angles_v.len()
            )));
        }
        if angles_u.iter().chain(angles_v.iter()).any(|a| !a.is_finite()) {
            return Err(Error::InvalidParameter("normal angles must be finite".into()));
        }
        let vectors = angles_u
            .iter()
            .zip(angles_v.iter())
            .map(|(&u, &v)| normal_from_angles(u, v))
            .collect();
        Ok(NormalField { angles_u, angles_v, vectors })
    }

    /// Constant field of `count` copies of the same normal.
    pub fn uniform(count: usize, u: f64, v: f64) -> Self {
        NormalField::from_angles(vec![u; count], vec![v; count]).expect("finite angles")
    }

    pub fn len(&self) -> usize {
        self.angles_u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles_u.is_empty()
    }

    pub fn angles_u(&self) -> &[f64] {
        &self.angles_u
    }

    pub fn angles_v(&self) -> &[f64] {
        &self.angles_v
    }

    pub fn angles(&self, j: usize) -> (f64, f64) {
        (self.angles_u[j], self.angles_v[j])
    }

    /// Unit normal vector of voxel `j`.
    pub fn vector(&self, j: usize) -> [f64; 3] {
        self.vectors[j]
    }

    pub fn vectors(&self) -> &[[f64; 3]] {
        &self.vectors
    }
}

/// Fraction of light from voxel `j` that reaches wall sample `i`, in `[0, 1]`.
///
/// This is the dense per-(sample, voxel) occlusion table — the memory-heavy
/// object of the factored model. Layout: `data[i * num_voxels + j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct VisibilityField {
    num_samples: usize,
    num_voxels: usize,
    data: Vec<f64>,
}

impl VisibilityField {
    /// Fully unoccluded field (all ones) for the given geometry.
    pub fn ones(geometry: &ScanGeometry) -> Self {
        let (s, v) = (geometry.num_samples(), geometry.num_voxels());
        VisibilityField { num_samples: s, num_voxels: v, data: vec![1.0; s * v] }
    }

    /// Wraps raw data, validating shape and the `[0, 1]` range.
    pub fn from_data(num_samples: usize, num_voxels: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != num_samples * num_voxels {
            return Err(Error::ShapeMismatch(format!(
                "visibility field needs {} entries, got {}",
                num_samples * num_voxels,
                data.len()
            )));
        }
        if data.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
            return Err(Error::InvalidParameter(
                "visibility entries must lie in [0, 1]".into(),
            ));
        }
        Ok(VisibilityField { num_samples, num_voxels, data })
    }

    pub fn num_samples(&self) -> usize {
        self.num_samples
    }

    pub fn num_voxels(&self) -> usize {
        self.num_voxels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.num_voxels + j]
    }

    /// Visibility row for wall sample `i` over all voxels.
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.num_voxels..(i + 1) * self.num_voxels]
    }

    /// Checks shape consistency against a geometry.
    pub fn matches(&self, geometry: &ScanGeometry) -> bool {
        self.num_samples == geometry.num_samples() && self.num_voxels == geometry.num_voxels()
    }
}
