//! Scan geometry: wall sampling grid, hidden voxel grid, and time binning.
//!
//! Coordinate convention: the visible wall is the plane `z = 0`, scanned on an
//! `N x N` grid whose sample points coincide with the voxel-center `(x, y)`
//! coordinates of the hidden volume. The hidden volume occupies
//! `z in [volume_origin_z, volume_origin_z + nz * voxel_pitch]` with
//! `volume_origin_z > 0`. A confocal path from wall sample `i` to voxel `j`
//! and back has round-trip time `t = 2 r / c`.

use crate::error::Error;
use crate::Result;
use alloc::format;

/// Speed of light in vacuum (m/s), the default for [`ScanGeometry`] builders.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Scanning and discretization parameters shared by every operator.
///
/// Immutable after construction; cheap to clone.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanGeometry {
    wall_samples: usize,
    voxels: [usize; 3],
    voxel_pitch: f64,
    volume_origin_z: f64,
    time_bins: usize,
    bin_width: f64,
    light_speed: f64,
    falloff_exponent: u32,
}

impl ScanGeometry {
    /// Validates and builds a geometry.
    ///
    /// `falloff_exponent` is 4 for diffuse hidden surfaces and 2 for
    /// retroreflective ones. The wall grid must match the voxel grid's x/y
    /// resolution so sample points land on projected voxel centers.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        wall_samples: usize,
        voxels: [usize; 3],
        voxel_pitch: f64,
        volume_origin_z: f64,
        time_bins: usize,
        bin_width: f64,
        light_speed: f64,
        falloff_exponent: u32,
    ) -> Result<Self> {
        if wall_samples == 0 || voxels.iter().any(|&n| n == 0) || time_bins == 0 {
            return Err(Error::InvalidParameter(format!(
                "all counts must be >= 1 (wall {wall_samples}, voxels {voxels:?}, bins {time_bins})"
            )));
        }
        if wall_samples != voxels[0] || wall_samples != voxels[1] {
            return Err(Error::InvalidParameter(format!(
                "wall samples ({wall_samples}) must equal voxel grid x/y counts ({}, {}) so \
                 sample points coincide with projected voxel centers",
                voxels[0], voxels[1]
            )));
        }
        if !(voxel_pitch > 0.0 && voxel_pitch.is_finite()) {
            return Err(Error::InvalidParameter(format!("voxel_pitch must be > 0, got {voxel_pitch}")));
        }
        if !(volume_origin_z > 0.0 && volume_origin_z.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "volume_origin_z must be > 0 (hidden volume sits strictly behind the wall), got {volume_origin_z}"
            )));
        }
        if !(bin_width > 0.0 && bin_width.is_finite()) {
            return Err(Error::InvalidParameter(format!("bin_width must be > 0, got {bin_width}")));
        }
        if !(light_speed > 0.0 && light_speed.is_finite()) {
            return Err(Error::InvalidParameter(format!("light_speed must be > 0, got {light_speed}")));
        }
        if falloff_exponent != 2 && falloff_exponent != 4 {
            return Err(Error::InvalidParameter(format!(
                "falloff_exponent must be 2 (retroreflective) or 4 (diffuse), got {falloff_exponent}"
            )));
        }
        Ok(ScanGeometry {
            wall_samples,
            voxels,
            voxel_pitch,
            volume_origin_z,
            time_bins,
            bin_width,
            light_speed,
            falloff_exponent,
        })
    }

    /// Wall samples per axis (`N`).
    pub fn wall_samples(&self) -> usize {
        self.wall_samples
    }

    /// Voxel counts `[nx, ny, nz]`.
    pub fn voxels(&self) -> [usize; 3] {
        self.voxels
    }

    /// Edge length of a (cubic) voxel in meters.
    pub fn voxel_pitch(&self) -> f64 {
        self.voxel_pitch
    }

    /// Standoff of the near volume face from the wall plane, meters.
    pub fn volume_origin_z(&self) -> f64 {
        self.volume_origin_z
    }

    /// Number of time bins per wall sample (`T`).
    pub fn time_bins(&self) -> usize {
        self.time_bins
    }

    /// Width of one time bin in seconds.
    pub fn bin_width(&self) -> f64 {
        self.bin_width
    }

    /// Propagation speed in meters per second.
    pub fn light_speed(&self) -> f64 {
        self.light_speed
    }

    /// Radiometric falloff exponent: 4 diffuse, 2 retroreflective.
    pub fn falloff_exponent(&self) -> u32 {
        self.falloff_exponent
    }

    /// Side length of the scanned wall patch, meters per axis.
    pub fn wall_extent(&self) -> f64 {
        self.wall_samples as f64 * self.voxel_pitch
    }

    /// Total number of wall samples (`N^2`).
    pub fn num_samples(&self) -> usize {
        self.wall_samples * self.wall_samples
    }

    /// Total number of voxels (`nx * ny * nz`).
    pub fn num_voxels(&self) -> usize {
        self.voxels[0] * self.voxels[1] * self.voxels[2]
    }

    /// Flat sample index for grid coordinates `(ix, iy)`.
    pub fn sample_index(&self, ix: usize, iy: usize) -> usize {
        debug_assert!(ix < self.wall_samples && iy < self.wall_samples);
        ix * self.wall_samples + iy
    }

    /// Grid coordinates of flat sample index `i`.
    pub fn sample_coords(&self, i: usize) -> (usize, usize) {
        (i / self.wall_samples, i % self.wall_samples)
    }

    /// Flat voxel index for grid coordinates `(ix, iy, iz)`.
    pub fn voxel_index(&self, ix: usize, iy: usize, iz: usize) -> usize {
        debug_assert!(ix < self.voxels[0] && iy < self.voxels[1] && iz < self.voxels[2]);
        (ix * self.voxels[1] + iy) * self.voxels[2] + iz
    }

    /// Grid coordinates of flat voxel index `j`.
    pub fn voxel_coords(&self, j: usize) -> (usize, usize, usize) {
        let nz = self.voxels[2];
        let ny = self.voxels[1];
        let iz = j % nz;
        let rest = j / nz;
        (rest / ny, rest % ny, iz)
    }

    /// Position of wall sample `(ix, iy)` on the plane `z = 0`.
    pub fn sample_position(&self, ix: usize, iy: usize) -> [f64; 3] {
        [
            (ix as f64 + 0.5) * self.voxel_pitch,
            (iy as f64 + 0.5) * self.voxel_pitch,
            0.0,
        ]
    }

    /// Center of voxel `(ix, iy, iz)`.
    pub fn voxel_center(&self, ix: usize, iy: usize, iz: usize) -> [f64; 3] {
        [
            (ix as f64 + 0.5) * self.voxel_pitch,
            (iy as f64 + 0.5) * self.voxel_pitch,
            self.volume_origin_z + (iz as f64 + 0.5) * self.voxel_pitch,
        ]
    }

    /// Axis-aligned bounds of the hidden volume: `([x0,y0,z0], [x1,y1,z1])`.
    pub fn volume_bounds(&self) -> ([f64; 3], [f64; 3]) {
        let p = self.voxel_pitch;
        (
            [0.0, 0.0, self.volume_origin_z],
            [
                self.voxels[0] as f64 * p,
                self.voxels[1] as f64 * p,
                self.volume_origin_z + self.voxels[2] as f64 * p,
            ],
        )
    }
}

/// Interpolation weights spreading one path's return over two adjacent bins.
///
/// `w_lo + w_hi == 1`; the contribution lands on bins `bin_lo` and
/// `bin_lo + 1`. Produced by [`time_bin_weights`], which returns `None` when
/// the path falls outside the recorded window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinWeights {
    pub bin_lo: usize,
    pub w_lo: f64,
    pub w_hi: f64,
}

/// Unit normal from spherical angles: `[cos u sin v, sin u sin v, cos v]`.
///
/// `u` is azimuth, `v` polar angle from the `+z` axis. Total over all finite
/// inputs; the result has unit Euclidean norm.
pub fn normal_from_angles(u: f64, v: f64) -> [f64; 3] {
    let (su, cu) = (libm::sin(u), libm::cos(u));
    let (sv, cv) = (libm::sin(v), libm::cos(v));
    [cu * sv, su * sv, cv]
}

/// Unit direction from voxel `j` toward wall sample `i`, and the distance.
///
/// The direction points out of the volume toward the wall, so its z component
/// is negative for any voxel strictly behind the wall plane.
pub fn direction_voxel_to_sample(
    geometry: &ScanGeometry,
    voxel: usize,
    sample: usize,
) -> Result<([f64; 3], f64)> {
    let (sx, sy) = geometry.sample_coords(sample);
    let (vx, vy, vz) = geometry.voxel_coords(voxel);
    let p_i = geometry.sample_position(sx, sy);
    let p_j = geometry.voxel_center(vx, vy, vz);
    let d = [p_i[0] - p_j[0], p_i[1] - p_j[1], p_i[2] - p_j[2]];
    let r = libm::sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2]);
    if r == 0.0 {
        return Err(Error::DegenerateGeometry { sample, voxel });
    }
    let inv_r = 1.0 / r;
    Ok(([d[0] * inv_r, d[1] * inv_r, d[2] * inv_r], r))
}

/// Maps a round-trip distance to interpolated time-bin weights.
///
/// The continuous bin coordinate is `b = 2 r / (c * bin_width)`; the return
/// splits linearly between `floor(b)` and `floor(b) + 1`. `None` marks paths
/// whose support would leave the recorded window (`b < 0` or `b >= T - 1`);
/// such contributions are dropped.
pub fn time_bin_weights(geometry: &ScanGeometry, r: f64) -> Option<BinWeights> {
    let b = 2.0 * r / (geometry.light_speed * geometry.bin_width);
    if !(b >= 0.0) || b >= (geometry.time_bins - 1) as f64 {
        return None;
    }
    let lo = libm::floor(b);
    let frac = b - lo;
    Some(BinWeights {
        bin_lo: lo as usize,
        w_lo: 1.0 - frac,
        w_hi: frac,
    })
}

/// Radiometric distance falloff `r^(-falloff_exponent)`.
pub fn falloff(geometry: &ScanGeometry, r: f64) -> f64 {
    debug_assert!(r > 0.0);
    let r2 = r * r;
    match geometry.falloff_exponent {
        2 => 1.0 / r2,
        _ => 1.0 / (r2 * r2),
    }
}
