//! Baseline linear inverse methods: backprojection, filtered backprojection,
//! and an ADMM solver for sparsity- and TV-regularized nonnegative least
//! squares.
//!
//! All three treat the transport operator as fixed. Backprojection applies
//! the adjoint under the unoccluded isotropic assumption; the ADMM solver
//! approximately minimizes
//!
//! ```text
//! || tau - A rho ||^2 + l1 * ||rho||_1 + tv * ||D rho||_1   s.t. rho >= 0
//! ```
//!
//! with `D` the forward-difference operator along the three volume axes.
//! The splitting keeps one copy of `rho` for the l1/nonnegativity prox and
//! one copy of `D rho` for the TV prox; the x-update runs warm-started
//! conjugate gradient on the normal equations.

use crate::error::Error;
use crate::fields::{AlbedoVolume, TransientImage};
use crate::geometry::ScanGeometry;
use crate::transport::{adjoint_into, forward_into, FactoredModel};
use crate::Result;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

/// Parameters for [`admm_linear_solve`] (also reused as the albedo step of
/// the factored solver).
///
/// Defaults mirror the reference reconstruction settings: 150 iterations,
/// sparsity weight 0.1, TV weight 0.001.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSolverConfig {
    /// Number of ADMM iterations.
    pub iterations: usize,
    /// Weight of the l1 sparsity prior on the albedos.
    pub sparsity_weight: f64,
    /// Weight of the anisotropic total-variation prior.
    pub tv_weight: f64,
    /// ADMM penalty parameter.
    pub admm_penalty: f64,
    /// Conjugate-gradient iterations per x-update.
    pub cg_iterations: usize,
    /// Enforce `rho >= 0` through the prox step.
    pub nonnegativity: bool,
}

impl Default for LinearSolverConfig {
    fn default() -> Self {
        LinearSolverConfig {
            iterations: 150,
            sparsity_weight: 0.1,
            tv_weight: 0.001,
            admm_penalty: 1.0,
            cg_iterations: 10,
            nonnegativity: true,
        }
    }
}

impl LinearSolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 || self.cg_iterations == 0 {
            return Err(Error::InvalidParameter("iteration counts must be >= 1".into()));
        }
        for (name, w) in [
            ("sparsity_weight", self.sparsity_weight),
            ("tv_weight", self.tv_weight),
        ] {
            if !(w >= 0.0) || !w.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} must be finite and >= 0, got {w}")));
            }
        }
        if !(self.admm_penalty > 0.0) || !self.admm_penalty.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "admm_penalty must be finite and > 0, got {}",
                self.admm_penalty
            )));
        }
        Ok(())
    }
}

/// Soft-threshold proximal operator of the scaled l1 norm:
/// `sign(x) * max(0, |x| - t)`. Identity for `t = 0`.
pub fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

/// Forward differences along x, y, z with a zero row at each far boundary.
/// Output layout: `[axis * num_voxels + j]`.
pub(crate) fn forward_differences(geometry: &ScanGeometry, x: &[f64], out: &mut [f64]) {
    let [nx, ny, nz] = geometry.voxels();
    let nv = geometry.num_voxels();
    let strides = [ny * nz, nz, 1];
    let counts = [nx, ny, nz];
    out.fill(0.0);
    for axis in 0..3 {
        let stride = strides[axis];
        let block = &mut out[axis * nv..(axis + 1) * nv];
        for j in 0..nv {
            let coord = match axis {
                0 => j / (ny * nz),
                1 => (j / nz) % ny,
                _ => j % nz,
            };
            if coord + 1 < counts[axis] {
                block[j] = x[j + stride] - x[j];
            }
        }
    }
}

/// Adjoint of [`forward_differences`] (negative divergence).
pub(crate) fn forward_differences_adjoint(geometry: &ScanGeometry, d: &[f64], out: &mut [f64]) {
    let [nx, ny, nz] = geometry.voxels();
    let nv = geometry.num_voxels();
    let strides = [ny * nz, nz, 1];
    let counts = [nx, ny, nz];
    out.fill(0.0);
    for axis in 0..3 {
        let stride = strides[axis];
        let block = &d[axis * nv..(axis + 1) * nv];
        for j in 0..nv {
            let coord = match axis {
                0 => j / (ny * nz),
                1 => (j / nz) % ny,
                _ => j % nz,
            };
            let mut acc = 0.0;
            if coord + 1 < counts[axis] {
                acc -= block[j];
            }
            if coord > 0 {
                acc += block[j - stride];
            }
            out[j] += acc;
        }
    }
}

/// Anisotropic total variation: sum of absolute forward differences.
pub fn total_variation(geometry: &ScanGeometry, x: &[f64]) -> f64 {
    let mut d = vec![0.0; 3 * geometry.num_voxels()];
    forward_differences(geometry, x, &mut d);
    d.iter().map(|v| v.abs()).sum()
}

/// Six-neighbor discrete Laplacian with zero-flux boundaries.
pub(crate) fn laplacian6(geometry: &ScanGeometry, x: &[f64], out: &mut [f64]) {
    let [nx, ny, nz] = geometry.voxels();
    for ix in 0..nx {
        for iy in 0..ny {
            for iz in 0..nz {
                let j = geometry.voxel_index(ix, iy, iz);
                let c = x[j];
                let mut acc = 0.0;
                if ix > 0 {
                    acc += x[geometry.voxel_index(ix - 1, iy, iz)] - c;
                }
                if ix + 1 < nx {
                    acc += x[geometry.voxel_index(ix + 1, iy, iz)] - c;
                }
                if iy > 0 {
                    acc += x[geometry.voxel_index(ix, iy - 1, iz)] - c;
                }
                if iy + 1 < ny {
                    acc += x[geometry.voxel_index(ix, iy + 1, iz)] - c;
                }
                if iz > 0 {
                    acc += x[geometry.voxel_index(ix, iy, iz - 1)] - c;
                }
                if iz + 1 < nz {
                    acc += x[geometry.voxel_index(ix, iy, iz + 1)] - c;
                }
                out[j] = acc;
            }
        }
    }
}

/// Conjugate-gradient result: the iterate plus the residual norm after the
/// initial guess and after each iteration.
#[derive(Debug, Clone)]
pub struct CgResult {
    pub x: Vec<f64>,
    pub residual_norms: Vec<f64>,
}

/// Solves `M x = b` for symmetric positive definite `M` given as a closure.
pub fn conjugate_gradient(
    mut apply: impl FnMut(&[f64], &mut [f64]),
    b: &[f64],
    x0: &[f64],
    max_iterations: usize,
) -> CgResult {
    let n = b.len();
    let mut x = x0.to_vec();
    let mut mx = vec![0.0; n];
    apply(&x, &mut mx);
    let mut r: Vec<f64> = b.iter().zip(&mx).map(|(bi, mi)| bi - mi).collect();
    let mut p = r.clone();
    let mut rs_old: f64 = r.iter().map(|v| v * v).sum();
    let mut norms = vec![libm::sqrt(rs_old)];
    let mut mp = vec![0.0; n];
    for _ in 0..max_iterations {
        if rs_old == 0.0 {
            break;
        }
        apply(&p, &mut mp);
        let p_mp: f64 = p.iter().zip(&mp).map(|(a, c)| a * c).sum();
        if p_mp.abs() < 1e-300 {
            break;
        }
        let alpha = rs_old / p_mp;
        for k in 0..n {
            x[k] += alpha * p[k];
            r[k] -= alpha * mp[k];
        }
        let rs_new: f64 = r.iter().map(|v| v * v).sum();
        norms.push(libm::sqrt(rs_new));
        let beta = rs_new / rs_old;
        for k in 0..n {
            p[k] = r[k] + beta * p[k];
        }
        rs_old = rs_new;
    }
    CgResult { x, residual_norms: norms }
}

/// Adjoint estimate under the unoccluded isotropic assumption, clamped at 0.
pub fn backproject(tau: &TransientImage) -> Result<AlbedoVolume> {
    let geometry = tau.geometry().clone();
    let mut vol = vec![0.0; geometry.num_voxels()];
    adjoint_into(&geometry, None, None, tau.data(), &mut vol);
    for v in vol.iter_mut() {
        *v = v.max(0.0);
    }
    AlbedoVolume::from_data(geometry, vol)
}

/// Backprojection sharpened by the negated 6-neighbor Laplacian, clamped at
/// 0, then thresholded at the given quantile of the positive entries.
pub fn filtered_backproject(tau: &TransientImage, threshold_quantile: f64) -> Result<AlbedoVolume> {
    if !(0.0..1.0).contains(&threshold_quantile) {
        return Err(Error::InvalidParameter(format!(
            "threshold_quantile must be in [0, 1), got {threshold_quantile}"
        )));
    }
    let geometry = tau.geometry().clone();
    let mut bp = vec![0.0; geometry.num_voxels()];
    adjoint_into(&geometry, None, None, tau.data(), &mut bp);
    let mut lap = vec![0.0; geometry.num_voxels()];
    laplacian6(&geometry, &bp, &mut lap);
    let mut out: Vec<f64> = lap.iter().map(|&l| (-l).max(0.0)).collect();
    let mut positives: Vec<f64> = out.iter().cloned().filter(|&v| v > 0.0).collect();
    if !positives.is_empty() {
        positives.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
        let idx = ((threshold_quantile * positives.len() as f64) as usize).min(positives.len() - 1);
        let cut = positives[idx];
        for v in out.iter_mut() {
            if *v < cut {
                *v = 0.0;
            }
        }
    }
    AlbedoVolume::from_data(geometry, out)
}

/// Data fidelity `|| A rho - tau ||^2` for a raw volume iterate.
fn fidelity(model: &FactoredModel, rho: &[f64], tau: &[f64], scratch: &mut [f64]) -> f64 {
    forward_into(
        model.geometry(),
        model.visibility().map(|v| v.data()),
        model.normals().map(|n| n.vectors()),
        rho,
        scratch,
    );
    scratch
        .iter()
        .zip(tau)
        .map(|(ax, t)| {
            let d = ax - t;
            d * d
        })
        .sum()
}

/// Full regularized objective for a raw volume iterate.
fn regularized_objective(
    model: &FactoredModel,
    rho: &[f64],
    tau: &[f64],
    config: &LinearSolverConfig,
    scratch: &mut [f64],
) -> f64 {
    let data = fidelity(model, rho, tau, scratch);
    let l1: f64 = rho.iter().map(|v| v.abs()).sum();
    data + config.sparsity_weight * l1 + config.tv_weight * total_variation(model.geometry(), rho)
}

/// ADMM solve of the regularized nonnegative linear inverse problem.
///
/// Equivalent to [`admm_linear_solve_warm`] started from the zero volume.
pub fn admm_linear_solve(
    model: &FactoredModel,
    tau: &TransientImage,
    config: &LinearSolverConfig,
) -> Result<AlbedoVolume> {
    admm_linear_solve_warm(model, tau, config, None)
}

/// ADMM solve with an optional warm-start iterate (used by the alternating
/// factored solver to keep the outer objective monotone).
///
/// Returns the candidate with the lowest regularized objective among the
/// ADMM result, the warm start, and the zero volume, which enforces the
/// contract that the returned objective never exceeds the objective at zero.
pub fn admm_linear_solve_warm(
    model: &FactoredModel,
    tau: &TransientImage,
    config: &LinearSolverConfig,
    warm_start: Option<&AlbedoVolume>,
) -> Result<AlbedoVolume> {
    let raw = admm_solve_raw(model, tau, config, warm_start.map(|w| w.data()))?;
    // the raw result is already nonnegative when the constraint is on; the
    // clamp only matters for unconstrained solves crossing the type boundary
    AlbedoVolume::from_data(
        model.geometry().clone(),
        raw.iter().map(|&v| v.max(0.0)).collect(),
    )
}

/// The ADMM iteration on raw buffers; may return signed entries when
/// `nonnegativity` is off.
pub(crate) fn admm_solve_raw(
    model: &FactoredModel,
    tau: &TransientImage,
    config: &LinearSolverConfig,
    warm_start: Option<&[f64]>,
) -> Result<Vec<f64>> {
    config.validate()?;
    if tau.geometry() != model.geometry() {
        return Err(Error::ShapeMismatch("transient geometry differs from model".into()));
    }
    if let Some(w) = warm_start {
        if w.len() != model.geometry().num_voxels() {
            return Err(Error::ShapeMismatch("warm start length differs from voxel count".into()));
        }
    }
    let geometry = model.geometry().clone();
    let nv = geometry.num_voxels();
    let nt = geometry.num_samples() * geometry.time_bins();
    let rho_pen = config.admm_penalty;
    let tau_data = tau.data();
    let tau_norm2: f64 = tau_data.iter().map(|v| v * v).sum();

    // b_base = 2 A^T tau
    let mut b_base = vec![0.0; nv];
    adjoint_into(
        &geometry,
        model.visibility().map(|v| v.data()),
        model.normals().map(|n| n.vectors()),
        tau_data,
        &mut b_base,
    );
    for v in b_base.iter_mut() {
        *v *= 2.0;
    }

    let mut x = match warm_start {
        Some(w) => w.to_vec(),
        None => vec![0.0; nv],
    };
    let mut z1 = x.clone();
    let mut u1 = vec![0.0; nv];
    let mut dx = vec![0.0; 3 * nv];
    forward_differences(&geometry, &x, &mut dx);
    let mut z2 = dx.clone();
    let mut u2 = vec![0.0; 3 * nv];

    let mut transient_scratch = vec![0.0; nt];
    let mut volume_scratch = vec![0.0; nv];
    let mut diff_scratch = vec![0.0; 3 * nv];
    let mut b = vec![0.0; nv];

    let prox_l1 = config.sparsity_weight / rho_pen;
    let prox_tv = config.tv_weight / rho_pen;

    for iteration in 0..config.iterations {
        // b = b_base + pen * (z1 - u1) + pen * D^T (z2 - u2)
        for k in 0..3 * nv {
            diff_scratch[k] = z2[k] - u2[k];
        }
        forward_differences_adjoint(&geometry, &diff_scratch, &mut volume_scratch);
        for k in 0..nv {
            b[k] = b_base[k] + rho_pen * (z1[k] - u1[k]) + rho_pen * volume_scratch[k];
        }
        // x-update: (2 A^T A + pen I + pen D^T D) x = b, warm-started CG
        let result = {
            let geom = &geometry;
            let vis = model.visibility().map(|v| v.data());
            let normals = model.normals().map(|n| n.vectors());
            let mut fwd = vec![0.0; nt];
            let mut adj = vec![0.0; nv];
            let mut d = vec![0.0; 3 * nv];
            let mut dtd = vec![0.0; nv];
            conjugate_gradient(
                move |p, out| {
                    forward_into(geom, vis, normals, p, &mut fwd);
                    adjoint_into(geom, vis, normals, &fwd, &mut adj);
                    forward_differences(geom, p, &mut d);
                    forward_differences_adjoint(geom, &d, &mut dtd);
                    for k in 0..out.len() {
                        out[k] = 2.0 * adj[k] + rho_pen * (p[k] + dtd[k]);
                    }
                },
                &b,
                &x,
                config.cg_iterations,
            )
        };
        x = result.x;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("ADMM x-update at iteration {iteration}")));
        }
        forward_differences(&geometry, &x, &mut dx);
        // z1: l1 prox then nonnegativity clamp
        for k in 0..nv {
            let v = soft_threshold(x[k] + u1[k], prox_l1);
            z1[k] = if config.nonnegativity { v.max(0.0) } else { v };
        }
        // z2: TV prox
        for k in 0..3 * nv {
            z2[k] = soft_threshold(dx[k] + u2[k], prox_tv);
        }
        for k in 0..nv {
            u1[k] += x[k] - z1[k];
        }
        for k in 0..3 * nv {
            u2[k] += dx[k] - z2[k];
        }
        // divergence guard against the fidelity at the zero volume
        let fid = fidelity(model, &x, tau_data, &mut transient_scratch);
        if fid > 10.0 * tau_norm2 && tau_norm2 > 0.0 {
            return Err(Error::Divergence { iteration, fidelity: fid, initial: tau_norm2 });
        }
    }

    // pick the best candidate so the returned objective never exceeds J(0).
    // the constrained path reports the prox'd copy z1 (exactly feasible);
    // the unconstrained path reports the CG iterate x itself
    let mut best = if config.nonnegativity { z1 } else { x };
    let mut best_obj = regularized_objective(model, &best, tau_data, config, &mut transient_scratch);
    if let Some(w) = warm_start {
        let obj = regularized_objective(model, w, tau_data, config, &mut transient_scratch);
        if obj < best_obj {
            best = w.to_vec();
            best_obj = obj;
        }
    }
    if best_obj > tau_norm2 {
        best = vec![0.0; nv];
    }
    if best.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("ADMM produced a non-finite result".into()));
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{NormalField, VisibilityField};
    use crate::geometry::SPEED_OF_LIGHT;
    use crate::scene::{ground_truth_visibility, rasterize_scene, Primitive, Scene, VoxelImport};
    use crate::transport::{dense_system_matrix, forward_transient};
    use core::f64::consts::PI;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn geom(n: usize, t_bins: usize) -> ScanGeometry {
        let pitch = 1.0 / n as f64;
        let max_r = 4.0;
        let bin_width = 2.0 * max_r / (SPEED_OF_LIGHT * (t_bins as f64 - 2.0));
        ScanGeometry::new(n, [n, n, n], pitch, 0.6, t_bins, bin_width, SPEED_OF_LIGHT, 4).unwrap()
    }

    fn random_full_model(n: usize, t_bins: usize, rng: &mut ChaCha8Rng) -> FactoredModel {
        let g = geom(n, t_bins);
        let (ns, nv) = (g.num_samples(), g.num_voxels());
        let vis = VisibilityField::from_data(
            ns,
            nv,
            (0..ns * nv).map(|_| rng.gen_range(0.2..=1.0)).collect(),
        )
        .unwrap();
        let u: Vec<f64> = (0..nv).map(|_| rng.gen_range(0.0..core::f64::consts::TAU)).collect();
        let v: Vec<f64> = (0..nv).map(|_| rng.gen_range(PI / 2.0..PI)).collect();
        let normals = NormalField::from_angles(u, v).unwrap();
        FactoredModel::new(g, Some(vis), Some(normals)).unwrap()
    }

    #[test]
    fn soft_threshold_reference_values() {
        assert_eq!(soft_threshold(3.0, 1.0), 2.0);
        assert_eq!(soft_threshold(-3.0, 1.0), -2.0);
        assert_eq!(soft_threshold(0.5, 1.0), 0.0);
        assert_eq!(soft_threshold(-0.5, 1.0), 0.0);
        // identity for zero threshold
        for x in [-2.5, -0.1, 0.0, 0.7, 9.0] {
            assert_eq!(soft_threshold(x, 0.0), x);
        }
    }

    #[test]
    fn forward_differences_adjoint_identity() {
        let g = geom(4, 16);
        let nv = g.num_voxels();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..10 {
            let x: Vec<f64> = (0..nv).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let y: Vec<f64> = (0..3 * nv).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut dx = vec![0.0; 3 * nv];
            forward_differences(&g, &x, &mut dx);
            let mut dty = vec![0.0; nv];
            forward_differences_adjoint(&g, &y, &mut dty);
            let lhs: f64 = dx.iter().zip(&y).map(|(a, b)| a * b).sum();
            let rhs: f64 = x.iter().zip(&dty).map(|(a, b)| a * b).sum();
            assert!((lhs - rhs).abs() < 1e-10 * lhs.abs().max(1.0));
        }
    }

    #[test]
    fn laplacian_of_constant_is_zero_with_zero_flux_boundary() {
        let g = geom(4, 16);
        let x = vec![3.7; g.num_voxels()];
        let mut out = vec![1.0; g.num_voxels()];
        laplacian6(&g, &x, &mut out);
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn cg_solves_small_spd_system_with_monotone_residuals() {
        // M = diag(2,3,4,5) plus a rank-one bump, SPD
        let m = |p: &[f64], out: &mut [f64]| {
            let diag = [2.0, 3.0, 4.0, 5.0];
            let s: f64 = p.iter().sum();
            for k in 0..4 {
                out[k] = diag[k] * p[k] + 0.1 * s;
            }
        };
        let b = vec![1.0, -2.0, 0.5, 3.0];
        let result = conjugate_gradient(m, &b, &[0.0; 4], 8);
        let mut check = vec![0.0; 4];
        m(&result.x, &mut check);
        for k in 0..4 {
            assert!((check[k] - b[k]).abs() < 1e-9, "component {k}");
        }
        for w in result.residual_norms.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "residual norms not monotone: {:?}", result.residual_norms);
        }
    }

    #[test]
    fn cg_residuals_monotone_on_normal_equations_operator() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let model = random_full_model(4, 16, &mut rng);
        let g = model.geometry().clone();
        let nv = g.num_voxels();
        let nt = g.num_samples() * g.time_bins();
        let pen = 1.0;
        let b: Vec<f64> = (0..nv).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut fwd = vec![0.0; nt];
        let mut adj = vec![0.0; nv];
        let mut d = vec![0.0; 3 * nv];
        let mut dtd = vec![0.0; nv];
        let result = conjugate_gradient(
            |p, out| {
                crate::transport::forward_into(&g, model.visibility().map(|v| v.data()), model.normals().map(|n| n.vectors()), p, &mut fwd);
                crate::transport::adjoint_into(&g, model.visibility().map(|v| v.data()), model.normals().map(|n| n.vectors()), &fwd, &mut adj);
                forward_differences(&g, p, &mut d);
                forward_differences_adjoint(&g, &d, &mut dtd);
                for k in 0..out.len() {
                    out[k] = 2.0 * adj[k] + pen * (p[k] + dtd[k]);
                }
            },
            &b,
            &vec![0.0; nv],
            12,
        );
        for w in result.residual_norms.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-9), "residuals {:?}", result.residual_norms);
        }
    }

    #[test]
    fn backproject_zero_is_zero() {
        let g = geom(4, 16);
        let out = backproject(&TransientImage::zeros(g)).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn backproject_localizes_single_bright_voxel() {
        let g = geom(8, 48);
        let mut data = vec![0.0; g.num_voxels()];
        let true_voxel = g.voxel_index(3, 5, 2);
        data[true_voxel] = 1.0;
        let albedo = AlbedoVolume::from_data(g.clone(), data).unwrap();
        let model = FactoredModel::isotropic(g.clone());
        let tau = forward_transient(&model, &albedo).unwrap();
        let bp = backproject(&tau).unwrap();
        let argmax = bp
            .data()
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        let (tx, ty, tz) = g.voxel_coords(true_voxel);
        let (ax, ay, az) = g.voxel_coords(argmax);
        let dist = (tx as i64 - ax as i64)
            .abs()
            .max((ty as i64 - ay as i64).abs())
            .max((tz as i64 - az as i64).abs());
        assert!(dist <= 1, "argmax {argmax} too far from true voxel {true_voxel}");
    }

    #[test]
    fn filtered_backproject_zero_is_zero_and_argmax_preserved() {
        let g = geom(8, 48);
        let zero = filtered_backproject(&TransientImage::zeros(g.clone()), 0.0).unwrap();
        assert!(zero.data().iter().all(|&v| v == 0.0));

        let mut data = vec![0.0; g.num_voxels()];
        let true_voxel = g.voxel_index(4, 2, 3);
        data[true_voxel] = 1.0;
        let albedo = AlbedoVolume::from_data(g.clone(), data).unwrap();
        let tau = forward_transient(&FactoredModel::isotropic(g.clone()), &albedo).unwrap();
        let bp = backproject(&tau).unwrap();
        let fbp = filtered_backproject(&tau, 0.0).unwrap();
        let argmax = |v: &[f64]| {
            v.iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0
        };
        assert_eq!(argmax(bp.data()), argmax(fbp.data()));
        assert!(filtered_backproject(&tau, 1.0).is_err());
    }

    #[test]
    fn admm_zero_input_zero_weights_returns_zero() {
        let g = geom(4, 16);
        let model = FactoredModel::isotropic(g.clone());
        let config = LinearSolverConfig {
            iterations: 5,
            sparsity_weight: 0.0,
            tv_weight: 0.0,
            ..LinearSolverConfig::default()
        };
        let out = admm_linear_solve(&model, &TransientImage::zeros(g), &config).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    /// Dense least-squares oracle: solves (A^T A) x = A^T b by Gaussian
    /// elimination with partial pivoting, fully independent of the CG path.
    fn dense_least_squares(a: &[f64], rows: usize, cols: usize, b: &[f64]) -> Vec<f64> {
        let mut ata = vec![0.0; cols * cols];
        let mut atb = vec![0.0; cols];
        for r in 0..rows {
            let row = &a[r * cols..(r + 1) * cols];
            for i in 0..cols {
                if row[i] == 0.0 {
                    continue;
                }
                atb[i] += row[i] * b[r];
                for j in 0..cols {
                    ata[i * cols + j] += row[i] * row[j];
                }
            }
        }
        // gaussian elimination with partial pivoting
        let n = cols;
        let mut aug = ata;
        let mut x = atb;
        for col in 0..n {
            let mut pivot = col;
            for r in col + 1..n {
                if aug[r * n + col].abs() > aug[pivot * n + col].abs() {
                    pivot = r;
                }
            }
            assert!(aug[pivot * n + col].abs() > 1e-12, "oracle matrix is singular");
            if pivot != col {
                for c in 0..n {
                    aug.swap(col * n + c, pivot * n + c);
                }
                x.swap(col, pivot);
            }
            let d = aug[col * n + col];
            for r in 0..n {
                if r == col {
                    continue;
                }
                let f = aug[r * n + col] / d;
                if f == 0.0 {
                    continue;
                }
                for c in col..n {
                    aug[r * n + c] -= f * aug[col * n + c];
                }
                x[r] -= f * x[col];
            }
        }
        for col in 0..n {
            x[col] /= aug[col * n + col];
        }
        x
    }

    #[test]
    fn unconstrained_admm_approaches_least_squares_optimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let model = random_full_model(4, 16, &mut rng);
        let g = model.geometry().clone();
        let nv = g.num_voxels();
        // inconsistent measurement: simulate plus a perturbation
        let truth = AlbedoVolume::from_data(
            g.clone(),
            (0..nv).map(|_| rng.gen_range(0.0..1.0)).collect(),
        )
        .unwrap();
        let clean = forward_transient(&model, &truth).unwrap();
        let tau_data: Vec<f64> = clean
            .data()
            .iter()
            .map(|&v| (v + rng.gen_range(0.0..0.05)).max(0.0))
            .collect();
        let tau = TransientImage::from_data(g.clone(), tau_data.clone()).unwrap();

        let config = LinearSolverConfig {
            iterations: 60,
            sparsity_weight: 0.0,
            tv_weight: 0.0,
            admm_penalty: 0.5,
            cg_iterations: 25,
            nonnegativity: false,
        };
        let solved = admm_solve_raw(&model, &tau, &config, None).unwrap();

        let op = dense_system_matrix(&model).unwrap();
        let ls = dense_least_squares(&op.entries, op.rows, op.cols, &tau_data);
        let residual_norm = |x: &[f64]| {
            let mut acc = 0.0;
            for r in 0..op.rows {
                let mut ax = 0.0;
                for j in 0..op.cols {
                    ax += op.entries[r * op.cols + j] * x[j];
                }
                let d = ax - tau_data[r];
                acc += d * d;
            }
            acc.sqrt()
        };
        let r_admm = residual_norm(&solved);
        let r_ls = residual_norm(&ls);
        assert!(r_ls > 0.0, "expected an inconsistent system");
        assert!(
            r_admm <= r_ls * 1.01,
            "ADMM residual {r_admm} not within 1% of LS optimum {r_ls}"
        );
    }

    #[test]
    fn admm_recovers_sparse_two_voxel_scene_with_ground_truth_factors() {
        let n = 8;
        let g = geom(n, 48);
        let mask = vec![true];
        let mk = |origin: [usize; 3]| {
            Primitive::Voxels(VoxelImport {
                albedo: 1.0,
                normal_u: 0.0,
                normal_v: PI,
                origin,
                dims: [1, 1, 1],
                mask: mask.clone(),
            })
        };
        let scene = Scene::new(vec![mk([2, 3, 1]), mk([5, 4, 5])], 0.5);
        let (truth, normals) = rasterize_scene(&scene, &g).unwrap();
        let vis = ground_truth_visibility(&truth, 0.5, 1, 0).unwrap();
        let model = FactoredModel::new(g.clone(), Some(vis), Some(normals)).unwrap();
        let tau = forward_transient(&model, &truth).unwrap();
        let config = LinearSolverConfig {
            iterations: 80,
            sparsity_weight: 1e-4,
            tv_weight: 0.0,
            admm_penalty: 1.0,
            cg_iterations: 15,
            nonnegativity: true,
        };
        let recon = admm_linear_solve(&model, &tau, &config).unwrap();
        let err: f64 = recon
            .data()
            .iter()
            .zip(truth.data())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let scale: f64 = truth.data().iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(err / scale < 0.1, "relative error {}", err / scale);
    }

    #[test]
    fn admm_divergence_guard_trips_on_pathological_warm_start() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let model = random_full_model(3, 16, &mut rng);
        let g = model.geometry().clone();
        let truth = AlbedoVolume::from_data(
            g.clone(),
            (0..g.num_voxels()).map(|_| rng.gen_range(0.0..0.2)).collect(),
        )
        .unwrap();
        let tau = forward_transient(&model, &truth).unwrap();
        let config = LinearSolverConfig {
            iterations: 1,
            cg_iterations: 1,
            ..LinearSolverConfig::default()
        };
        let huge = vec![1e9; g.num_voxels()];
        match admm_solve_raw(&model, &tau, &config, Some(&huge)) {
            Err(Error::Divergence { .. }) => {}
            other => panic!("expected divergence guard, got {other:?}"),
        }
    }

    #[test]
    fn admm_rejects_invalid_config() {
        let g = geom(3, 16);
        let model = FactoredModel::isotropic(g.clone());
        let tau = TransientImage::zeros(g);
        let mut config = LinearSolverConfig::default();
        config.iterations = 0;
        assert!(admm_linear_solve(&model, &tau, &config).is_err());
        config = LinearSolverConfig { admm_penalty: 0.0, ..LinearSolverConfig::default() };
        assert!(admm_linear_solve(&model, &tau, &config).is_err());
        config = LinearSolverConfig { sparsity_weight: -1.0, ..LinearSolverConfig::default() };
        assert!(admm_linear_solve(&model, &tau, &config).is_err());
    }
}
