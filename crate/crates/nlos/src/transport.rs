//! The factored transient light-transport operator and its adjoint.
//!
//! A confocal path from wall sample `i` to voxel `j` contributes
//!
//! ```text
//! falloff(r_ij) * V_ij * max(0, omega_ij . n_j) * rho_j
//! ```
//!
//! split over the two time bins adjacent to the round-trip time `2 r_ij / c`.
//! The operator is linear in the albedo vector once visibility and normals
//! are fixed, which is what the linear solvers exploit. The matrix-free form
//! never materializes the system matrix; [`forward_dense_oracle`] builds it
//! explicitly as brute-force ground truth for small instances.

use crate::error::Error;
use crate::fields::{AlbedoVolume, NormalField, TransientImage, VisibilityField};
use crate::geometry::ScanGeometry;
use crate::Result;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

/// Entry budget for the dense oracle (rows x columns).
pub const DENSE_ORACLE_MAX_ENTRIES: u128 = 100_000_000;

/// Transport operator configuration: geometry plus optional visibility and
/// normal factors.
///
/// `visibility: None` means fully unoccluded (`V = 1`) without storing the
/// dense table; `normals: None` means isotropic scatterers (normal factor 1),
/// the assumption the baseline linear methods make.
#[derive(Debug, Clone)]
pub struct FactoredModel {
    geometry: ScanGeometry,
    visibility: Option<VisibilityField>,
    normals: Option<NormalField>,
}

impl FactoredModel {
    /// Unoccluded isotropic model (`V = 1`, normal factor 1).
    pub fn isotropic(geometry: ScanGeometry) -> Self {
        FactoredModel { geometry, visibility: None, normals: None }
    }

    /// Full model; factors must match the geometry's shape.
    pub fn new(
        geometry: ScanGeometry,
        visibility: Option<VisibilityField>,
        normals: Option<NormalField>,
    ) -> Result<Self> {
        if let Some(v) = &visibility {
            if !v.matches(&geometry) {
                return Err(Error::ShapeMismatch(format!(
                    "visibility is {}x{}, geometry wants {}x{}",
                    v.num_samples(),
                    v.num_voxels(),
                    geometry.num_samples(),
                    geometry.num_voxels()
                )));
            }
        }
        if let Some(n) = &normals {
            if n.len() != geometry.num_voxels() {
                return Err(Error::ShapeMismatch(format!(
                    "normal field has {} voxels, geometry wants {}",
                    n.len(),
                    geometry.num_voxels()
                )));
            }
        }
        Ok(FactoredModel { geometry, visibility, normals })
    }

    pub fn geometry(&self) -> &ScanGeometry {
        &self.geometry
    }

    pub fn visibility(&self) -> Option<&VisibilityField> {
        self.visibility.as_ref()
    }

    pub fn normals(&self) -> Option<&NormalField> {
        self.normals.as_ref()
    }
}

/// Voxel-center coordinates in flat index order.
pub(crate) fn voxel_centers(geometry: &ScanGeometry) -> Vec<[f64; 3]> {
    let [nx, ny, nz] = geometry.voxels();
    let mut centers = Vec::with_capacity(geometry.num_voxels());
    for ix in 0..nx {
        for iy in 0..ny {
            for iz in 0..nz {
                centers.push(geometry.voxel_center(ix, iy, iz));
            }
        }
    }
    centers
}

/// Wall sample positions in flat index order.
pub(crate) fn sample_positions(geometry: &ScanGeometry) -> Vec<[f64; 3]> {
    let n = geometry.wall_samples();
    let mut positions = Vec::with_capacity(geometry.num_samples());
    for ix in 0..n {
        for iy in 0..n {
            positions.push(geometry.sample_position(ix, iy));
        }
    }
    positions
}

/// Per-path quantities shared by the forward, adjoint, and oracle loops.
///
/// `weight` is `falloff(r) * normal_factor`; visibility and albedo factors
/// are excluded so each loop can fold in its own.
pub(crate) struct PathTerm {
    pub bin_lo: usize,
    pub w_lo: f64,
    pub w_hi: f64,
    pub weight: f64,
}

/// Computes the path term for sample position `p_i` and voxel center `p_j`.
/// Returns `None` when the round trip falls outside the recorded window.
#[inline]
pub(crate) fn path_term(
    geometry: &ScanGeometry,
    p_i: [f64; 3],
    p_j: [f64; 3],
    normal: Option<[f64; 3]>,
) -> Option<PathTerm> {
    let dx = p_i[0] - p_j[0];
    let dy = p_i[1] - p_j[1];
    let dz = p_i[2] - p_j[2];
    let r2 = dx * dx + dy * dy + dz * dz;
    let r = libm::sqrt(r2);
    let b = 2.0 * r / (geometry.light_speed() * geometry.bin_width());
    if !(b >= 0.0) || b >= (geometry.time_bins() - 1) as f64 {
        return None;
    }
    let lo = libm::floor(b);
    let w_hi = b - lo;
    let fall = match geometry.falloff_exponent() {
        2 => 1.0 / r2,
        _ => 1.0 / (r2 * r2),
    };
    let nfac = match normal {
        None => 1.0,
        Some(n) => ((dx * n[0] + dy * n[1] + dz * n[2]) / r).max(0.0),
    };
    Some(PathTerm { bin_lo: lo as usize, w_lo: 1.0 - w_hi, w_hi, weight: fall * nfac })
}

/// Matrix-free forward transport on raw factor buffers.
///
/// `visibility` is the dense row-major table (`None` = all ones); `normals`
/// are precomputed unit vectors (`None` = isotropic).
pub(crate) fn forward_into(
    geometry: &ScanGeometry,
    visibility: Option<&[f64]>,
    normals: Option<&[[f64; 3]]>,
    albedo: &[f64],
    out: &mut [f64],
) {
    let t_bins = geometry.time_bins();
    let nv = geometry.num_voxels();
    let centers = voxel_centers(geometry);
    let samples = sample_positions(geometry);
    out.fill(0.0);
    for (i, &p_i) in samples.iter().enumerate() {
        let row = &mut out[i * t_bins..(i + 1) * t_bins];
        let vis_row = visibility.map(|v| &v[i * nv..(i + 1) * nv]);
        for (j, &p_j) in centers.iter().enumerate() {
            let rho = albedo[j];
            if rho == 0.0 {
                continue;
            }
            let v = match vis_row {
                Some(r) => r[j],
                None => 1.0,
            };
            if v == 0.0 {
                continue;
            }
            let n = normals.map(|vecs| vecs[j]);
            if let Some(term) = path_term(geometry, p_i, p_j, n) {
                let c = term.weight * v * rho;
                row[term.bin_lo] += c * term.w_lo;
                row[term.bin_lo + 1] += c * term.w_hi;
            }
        }
    }
}

/// Adjoint transport on raw factor buffers; accumulates into a volume-shaped
/// buffer (entries may be negative when the input is).
pub(crate) fn adjoint_into(
    geometry: &ScanGeometry,
    visibility: Option<&[f64]>,
    normals: Option<&[[f64; 3]]>,
    residual: &[f64],
    out: &mut [f64],
) {
    let t_bins = geometry.time_bins();
    let nv = geometry.num_voxels();
    let centers = voxel_centers(geometry);
    let samples = sample_positions(geometry);
    out.fill(0.0);
    for (i, &p_i) in samples.iter().enumerate() {
        let row = &residual[i * t_bins..(i + 1) * t_bins];
        let vis_row = visibility.map(|v| &v[i * nv..(i + 1) * nv]);
        for (j, &p_j) in centers.iter().enumerate() {
            let v = match vis_row {
                Some(r) => r[j],
                None => 1.0,
            };
            if v == 0.0 {
                continue;
            }
            let n = normals.map(|vecs| vecs[j]);
            if let Some(term) = path_term(geometry, p_i, p_j, n) {
                out[j] += term.weight * v * (term.w_lo * row[term.bin_lo] + term.w_hi * row[term.bin_lo + 1]);
            }
        }
    }
}

fn check_volume_shape(model: &FactoredModel, albedo: &AlbedoVolume) -> Result<()> {
    if albedo.geometry() != model.geometry() {
        return Err(Error::ShapeMismatch(
            "albedo geometry differs from model geometry".into(),
        ));
    }
    Ok(())
}

/// Simulates the transient image `A * rho` for the given model.
pub fn forward_transient(model: &FactoredModel, albedo: &AlbedoVolume) -> Result<TransientImage> {
    check_volume_shape(model, albedo)?;
    let geometry = model.geometry().clone();
    let mut out = vec![0.0; geometry.num_samples() * geometry.time_bins()];
    forward_into(
        model.geometry(),
        model.visibility().map(|v| v.data()),
        model.normals().map(|n| n.vectors()),
        albedo.data(),
        &mut out,
    );
    Ok(TransientImage::from_data_unchecked(geometry, out))
}

/// Dense system matrix in row-major order, rows = `N^2 * T`, cols = voxels.
#[derive(Debug, Clone)]
pub struct DenseOperator {
    pub rows: usize,
    pub cols: usize,
    pub entries: Vec<f64>,
}

/// Materializes the system matrix entry by entry from the per-path formula.
///
/// Guarded to [`DENSE_ORACLE_MAX_ENTRIES`]; intended for tiny instances where
/// brute force is feasible.
pub fn dense_system_matrix(model: &FactoredModel) -> Result<DenseOperator> {
    let geometry = model.geometry();
    let rows = geometry.num_samples() * geometry.time_bins();
    let cols = geometry.num_voxels();
    let entries = rows as u128 * cols as u128;
    if entries > DENSE_ORACLE_MAX_ENTRIES {
        return Err(Error::SizeGuard { entries, limit: DENSE_ORACLE_MAX_ENTRIES });
    }
    let t_bins = geometry.time_bins();
    let centers = voxel_centers(geometry);
    let samples = sample_positions(geometry);
    let mut matrix = vec![0.0; rows * cols];
    for (i, &p_i) in samples.iter().enumerate() {
        for (j, &p_j) in centers.iter().enumerate() {
            let v = match model.visibility() {
                Some(field) => field.at(i, j),
                None => 1.0,
            };
            let n = model.normals().map(|f| f.vector(j));
            if let Some(term) = path_term(geometry, p_i, p_j, n) {
                let c = term.weight * v;
                matrix[(i * t_bins + term.bin_lo) * cols + j] += c * term.w_lo;
                matrix[(i * t_bins + term.bin_lo + 1) * cols + j] += c * term.w_hi;
            }
        }
    }
    Ok(DenseOperator { rows, cols, entries: matrix })
}

/// Brute-force forward transport through the dense matrix.
pub fn forward_dense_oracle(model: &FactoredModel, albedo: &AlbedoVolume) -> Result<TransientImage> {
    check_volume_shape(model, albedo)?;
    let op = dense_system_matrix(model)?;
    let rho = albedo.data();
    let mut out = vec![0.0; op.rows];
    for (row, out_val) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        let base = row * op.cols;
        for (j, &r) in rho.iter().enumerate() {
            acc += op.entries[base + j] * r;
        }
        *out_val = acc;
    }
    Ok(TransientImage::from_data_unchecked(model.geometry().clone(), out))
}

/// Applies the exact adjoint `A^T` to a transient-shaped input.
///
/// Takes a raw slice because the usual input is a signed residual, which the
/// nonnegative [`TransientImage`] type cannot carry; the result is
/// volume-shaped raw data for the same reason.
pub fn adjoint_transient(model: &FactoredModel, residual: &[f64]) -> Result<Vec<f64>> {
    let geometry = model.geometry();
    let expect = geometry.num_samples() * geometry.time_bins();
    if residual.len() != expect {
        return Err(Error::ShapeMismatch(format!(
            "adjoint input needs {expect} entries, got {}",
            residual.len()
        )));
    }
    let mut out = vec![0.0; geometry.num_voxels()];
    adjoint_into(
        geometry,
        model.visibility().map(|v| v.data()),
        model.normals().map(|n| n.vectors()),
        residual,
        &mut out,
    );
    Ok(out)
}

/// Simulates shot noise: scales the image so its peak equals
/// `photons_at_peak`, draws independent Poisson counts per bin, and rescales.
/// Deterministic for a fixed seed; a zero image passes through unchanged.
pub fn add_poisson_noise(
    tau: &TransientImage,
    photons_at_peak: u64,
    seed: u64,
) -> Result<TransientImage> {
    if photons_at_peak == 0 {
        return Err(Error::InvalidParameter("photons_at_peak must be >= 1".into()));
    }
    let peak = tau.max_value();
    if peak == 0.0 {
        return Ok(tau.clone());
    }
    let scale = photons_at_peak as f64 / peak;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(tau.data().len());
    for &x in tau.data() {
        let lambda = x * scale;
        if lambda > 0.0 {
            let dist = Poisson::new(lambda)
                .map_err(|_| Error::NonFinite(format!("poisson rate {lambda}")))?;
            let count: f64 = dist.sample(&mut rng);
            out.push(count / scale);
        } else {
            out.push(0.0);
        }
    }
    Ok(TransientImage::from_data_unchecked(tau.geometry().clone(), out))
}
