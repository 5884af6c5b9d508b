//! Alternating least squares over the factored transport model.
//!
//! The objective is tri-convex: with any two of (albedo, visibility, normal
//! matrix) fixed, the data term is a convex quadratic in the third. The
//! solver cycles
//!
//! 1. albedo step — regularized nonnegative least squares (ADMM) with the
//!    current visibility and normals frozen into the operator,
//! 2. visibility step — projected gradient descent on the `[0, 1]` box with
//!    Barzilai-Borwein or backtracking step lengths,
//! 3. normal step — limited-memory quasi-Newton over the per-voxel spherical
//!    angles.
//!
//! The forward model clamps the Lambertian factor at zero; both gradients
//! treat the clamp's subgradient as zero on the clamped side, so they match
//! finite differences of the clamped objective away from the kink.

use crate::error::Error;
use crate::fields::{AlbedoVolume, NormalField, TransientImage, VisibilityField};
use crate::geometry::ScanGeometry;
use crate::linear::{admm_solve_raw, total_variation, LinearSolverConfig};
use crate::optim::{armijo_backtrack, dot, LbfgsHistory, ARMIJO_C, BACKTRACK_SHRINK, MIN_STEP};
use crate::transport::{forward_into, sample_positions, voxel_centers};
use crate::Result;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Step-length policy for the projected-gradient visibility update.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepLengthRule {
    /// Always take `initial_step`; no monotonicity guarantee. Kept for tests.
    Fixed,
    /// Armijo backtracking from `initial_step` every iteration.
    Backtracking,
    /// Barzilai-Borwein proposal with Armijo backtracking as a safeguard.
    BarzilaiBorwein,
}

/// Configuration of [`als_factorize`].
#[derive(Debug, Clone, PartialEq)]
pub struct FactoredSolverConfig {
    /// Outer alternation count `K`.
    pub outer_iterations: usize,
    /// ADMM iterations inside each albedo step.
    pub albedo_inner_iterations: usize,
    /// Projected-gradient iterations per visibility step.
    pub visibility_gradient_steps: usize,
    /// Quasi-Newton iterations per normal step.
    pub normal_solver_iterations: usize,
    pub step_rule: StepLengthRule,
    /// Initial projected-gradient step length.
    pub initial_step: f64,
    pub rng_seed: u64,
    /// Estimate surface normals; disable for isotropic scenes, which fixes
    /// the normal factor at 1 and skips the normal step.
    pub estimate_normals: bool,
    /// Upper bound on dense visibility storage; configurations above it are
    /// refused instead of silently paging.
    pub max_visibility_bytes: u64,
    /// Priors and inner-solver settings shared with the albedo step.
    pub linear: LinearSolverConfig,
}

impl Default for FactoredSolverConfig {
    fn default() -> Self {
        FactoredSolverConfig {
            outer_iterations: 5,
            albedo_inner_iterations: 20,
            visibility_gradient_steps: 10,
            normal_solver_iterations: 10,
            step_rule: StepLengthRule::BarzilaiBorwein,
            initial_step: 1.0,
            rng_seed: 0,
            estimate_normals: true,
            max_visibility_bytes: 4 << 30,
            linear: LinearSolverConfig::default(),
        }
    }
}

impl FactoredSolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.outer_iterations == 0 || self.albedo_inner_iterations == 0 {
            return Err(Error::InvalidParameter("iteration counts must be >= 1".into()));
        }
        if !(self.initial_step > 0.0) || !self.initial_step.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "initial_step must be finite and > 0, got {}",
                self.initial_step
            )));
        }
        self.linear.validate()
    }
}

/// Counters reported alongside a factored solve.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SolveDiagnostics {
    /// Objective evaluations spent in line searches.
    pub objective_evaluations: usize,
    /// Projected-gradient steps abandoned because the step underflowed.
    pub step_underflows: usize,
    /// Normal-step line searches that found no decrease.
    pub line_search_failures: usize,
}

impl SolveDiagnostics {
    fn absorb(&mut self, other: &SolveDiagnostics) {
        self.objective_evaluations += other.objective_evaluations;
        self.step_underflows += other.step_underflows;
        self.line_search_failures += other.line_search_failures;
    }
}

/// Result of [`als_factorize`].
#[derive(Debug, Clone)]
pub struct FactoredEstimate {
    pub albedo: AlbedoVolume,
    /// Present when normals were estimated (Lambertian mode).
    pub normals: Option<NormalField>,
    pub visibility: VisibilityField,
    /// Full objective after each outer iteration.
    pub objective_trace: Vec<f64>,
    pub diagnostics: SolveDiagnostics,
}

/// Per-path geometry used by the gradient loops: interpolation bins, falloff,
/// and the unit direction from voxel to sample.
struct PathGeom {
    bin_lo: usize,
    w_lo: f64,
    w_hi: f64,
    fall: f64,
    omega: [f64; 3],
}

#[inline]
fn path_geom(geometry: &ScanGeometry, p_i: [f64; 3], p_j: [f64; 3]) -> Option<PathGeom> {
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
    let fall = match geometry.falloff_exponent() {
        2 => 1.0 / r2,
        _ => 1.0 / (r2 * r2),
    };
    let inv_r = 1.0 / r;
    Some(PathGeom {
        bin_lo: lo as usize,
        w_lo: 1.0 - (b - lo),
        w_hi: b - lo,
        fall,
        omega: [dx * inv_r, dy * inv_r, dz * inv_r],
    })
}

/// Data term `|| tau - A(V, n) rho ||^2` on raw buffers.
pub(crate) fn data_term_raw(
    geometry: &ScanGeometry,
    visibility: Option<&[f64]>,
    normal_vectors: Option<&[[f64; 3]]>,
    rho: &[f64],
    tau: &[f64],
    scratch: &mut [f64],
) -> f64 {
    forward_into(geometry, visibility, normal_vectors, rho, scratch);
    scratch
        .iter()
        .zip(tau)
        .map(|(ax, t)| {
            let d = ax - t;
            d * d
        })
        .sum()
}

fn check_shapes(
    tau: &TransientImage,
    albedo: &AlbedoVolume,
    normals: Option<&NormalField>,
    visibility: &VisibilityField,
) -> Result<()> {
    if tau.geometry() != albedo.geometry() {
        return Err(Error::ShapeMismatch("transient and albedo geometries differ".into()));
    }
    if !visibility.matches(tau.geometry()) {
        return Err(Error::ShapeMismatch("visibility shape differs from geometry".into()));
    }
    if let Some(n) = normals {
        if n.len() != tau.geometry().num_voxels() {
            return Err(Error::ShapeMismatch("normal field length differs from voxel count".into()));
        }
    }
    Ok(())
}

/// Full factored objective: data term plus the albedo priors.
///
/// `normals: None` evaluates the isotropic model (normal factor 1).
pub fn objective(
    tau: &TransientImage,
    albedo: &AlbedoVolume,
    normals: Option<&NormalField>,
    visibility: &VisibilityField,
    config: &LinearSolverConfig,
) -> Result<f64> {
    check_shapes(tau, albedo, normals, visibility)?;
    let geometry = tau.geometry();
    let mut scratch = vec![0.0; geometry.num_samples() * geometry.time_bins()];
    let data = data_term_raw(
        geometry,
        Some(visibility.data()),
        normals.map(|n| n.vectors()),
        albedo.data(),
        tau.data(),
        &mut scratch,
    );
    let l1: f64 = albedo.data().iter().sum(); // entries are nonnegative
    Ok(data
        + config.sparsity_weight * l1
        + config.tv_weight * total_variation(geometry, albedo.data()))
}

fn residual_raw(
    geometry: &ScanGeometry,
    visibility: Option<&[f64]>,
    normal_vectors: Option<&[[f64; 3]]>,
    rho: &[f64],
    tau: &[f64],
) -> Vec<f64> {
    let mut res = vec![0.0; tau.len()];
    forward_into(geometry, visibility, normal_vectors, rho, &mut res);
    for (r, t) in res.iter_mut().zip(tau) {
        *r = t - *r;
    }
    res
}

fn grad_visibility_raw(
    geometry: &ScanGeometry,
    visibility: &[f64],
    normal_vectors: Option<&[[f64; 3]]>,
    rho: &[f64],
    tau: &[f64],
) -> Vec<f64> {
    let res = residual_raw(geometry, Some(visibility), normal_vectors, rho, tau);
    let t_bins = geometry.time_bins();
    let nv = geometry.num_voxels();
    let centers = voxel_centers(geometry);
    let samples = sample_positions(geometry);
    let mut grad = vec![0.0; visibility.len()];
    for (i, &p_i) in samples.iter().enumerate() {
        let res_row = &res[i * t_bins..(i + 1) * t_bins];
        let grad_row = &mut grad[i * nv..(i + 1) * nv];
        for (j, &p_j) in centers.iter().enumerate() {
            let rho_j = rho[j];
            if rho_j == 0.0 {
                continue;
            }
            if let Some(path) = path_geom(geometry, p_i, p_j) {
                let nfac = match normal_vectors {
                    None => 1.0,
                    Some(vecs) => {
                        let n = vecs[j];
                        (path.omega[0] * n[0] + path.omega[1] * n[1] + path.omega[2] * n[2])
                            .max(0.0)
                    }
                };
                if nfac == 0.0 {
                    continue;
                }
                let picked = path.w_lo * res_row[path.bin_lo] + path.w_hi * res_row[path.bin_lo + 1];
                grad_row[j] = -2.0 * path.fall * nfac * rho_j * picked;
            }
        }
    }
    grad
}

/// Gradient of the data term with respect to the visibility entries.
///
/// Entry `(i, j)` is `-2 rho_j falloff(r) max(0, omega.n) <res_i, bins_ij>`;
/// columns of zero-albedo voxels vanish, as does the whole gradient at a
/// perfect fit.
pub fn grad_visibility(
    tau: &TransientImage,
    albedo: &AlbedoVolume,
    normals: Option<&NormalField>,
    visibility: &VisibilityField,
) -> Result<Vec<f64>> {
    check_shapes(tau, albedo, normals, visibility)?;
    Ok(grad_visibility_raw(
        tau.geometry(),
        visibility.data(),
        normals.map(|n| n.vectors()),
        albedo.data(),
        tau.data(),
    ))
}

/// Jacobian rows of the spherical parameterization at one voxel.
#[inline]
fn normal_jacobian(u: f64, v: f64) -> ([f64; 3], [f64; 3]) {
    let (su, cu) = (libm::sin(u), libm::cos(u));
    let (sv, cv) = (libm::sin(v), libm::cos(v));
    ([-su * sv, cu * sv, 0.0], [cu * cv, su * cv, -sv])
}

fn grad_normals_raw(
    geometry: &ScanGeometry,
    visibility: &[f64],
    angles_u: &[f64],
    angles_v: &[f64],
    rho: &[f64],
    tau: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let nv = geometry.num_voxels();
    let mut vectors = Vec::with_capacity(nv);
    let mut jac_u = Vec::with_capacity(nv);
    let mut jac_v = Vec::with_capacity(nv);
    for j in 0..nv {
        let (u, v) = (angles_u[j], angles_v[j]);
        vectors.push(crate::geometry::normal_from_angles(u, v));
        let (du, dv) = normal_jacobian(u, v);
        jac_u.push(du);
        jac_v.push(dv);
    }
    let res = residual_raw(geometry, Some(visibility), Some(&vectors), rho, tau);
    let t_bins = geometry.time_bins();
    let centers = voxel_centers(geometry);
    let samples = sample_positions(geometry);
    let mut grad_u = vec![0.0; nv];
    let mut grad_v = vec![0.0; nv];
    for (i, &p_i) in samples.iter().enumerate() {
        let res_row = &res[i * t_bins..(i + 1) * t_bins];
        let vis_row = &visibility[i * nv..(i + 1) * nv];
        for (j, &p_j) in centers.iter().enumerate() {
            let rho_j = rho[j];
            if rho_j == 0.0 {
                continue;
            }
            let v_ij = vis_row[j];
            if v_ij == 0.0 {
                continue;
            }
            if let Some(path) = path_geom(geometry, p_i, p_j) {
                let n = vectors[j];
                let ndot = path.omega[0] * n[0] + path.omega[1] * n[1] + path.omega[2] * n[2];
                // clamped side contributes a zero subgradient
                if ndot <= 0.0 {
                    continue;
                }
                let picked = path.w_lo * res_row[path.bin_lo] + path.w_hi * res_row[path.bin_lo + 1];
                let coeff = -2.0 * v_ij * rho_j * path.fall * picked;
                let ju = jac_u[j];
                let jv = jac_v[j];
                grad_u[j] += coeff
                    * (path.omega[0] * ju[0] + path.omega[1] * ju[1] + path.omega[2] * ju[2]);
                grad_v[j] += coeff
                    * (path.omega[0] * jv[0] + path.omega[1] * jv[1] + path.omega[2] * jv[2]);
            }
        }
    }
    (grad_u, grad_v)
}

/// Gradient of the data term with respect to the per-voxel normal angles,
/// chained through the spherical parameterization.
pub fn grad_normals(
    tau: &TransientImage,
    albedo: &AlbedoVolume,
    normals: &NormalField,
    visibility: &VisibilityField,
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_shapes(tau, albedo, Some(normals), visibility)?;
    Ok(grad_normals_raw(
        tau.geometry(),
        visibility.data(),
        normals.angles_u(),
        normals.angles_v(),
        albedo.data(),
        tau.data(),
    ))
}

fn project_unit_interval(values: &mut [f64]) {
    for v in values.iter_mut() {
        *v = v.clamp(0.0, 1.0);
    }
}

/// Projected gradient descent on the visibility block.
///
/// Every accepted step satisfies the Armijo condition on the projected
/// candidate (except in `Fixed` mode), so the data term never increases
/// across accepted steps. The result stays inside `[0, 1]`.
pub fn update_visibility(
    tau: &TransientImage,
    albedo: &AlbedoVolume,
    normals: Option<&NormalField>,
    visibility: &VisibilityField,
    config: &FactoredSolverConfig,
) -> Result<(VisibilityField, SolveDiagnostics)> {
    check_shapes(tau, albedo, normals, visibility)?;
    config.validate()?;
    let geometry = tau.geometry();
    let normal_vectors = normals.map(|n| n.vectors());
    let rho = albedo.data();
    let tau_data = tau.data();
    let mut scratch = vec![0.0; tau_data.len()];
    let mut diag = SolveDiagnostics::default();

    let mut v = visibility.data().to_vec();
    let mut value = data_term_raw(geometry, Some(&v), normal_vectors, rho, tau_data, &mut scratch);
    diag.objective_evaluations += 1;
    let mut prev: Option<(Vec<f64>, Vec<f64>)> = None; // (v, grad) from last accepted step

    for _ in 0..config.visibility_gradient_steps {
        let grad = grad_visibility_raw(geometry, &v, normal_vectors, rho, tau_data);
        if grad.iter().all(|&g| g == 0.0) {
            break;
        }
        if let StepLengthRule::Fixed = config.step_rule {
            let mut candidate = v.clone();
            for (c, g) in candidate.iter_mut().zip(&grad) {
                *c -= config.initial_step * g;
            }
            project_unit_interval(&mut candidate);
            v = candidate;
            continue;
        }
        let mut step = match (config.step_rule, &prev) {
            (StepLengthRule::BarzilaiBorwein, Some((pv, pg))) => {
                let s: Vec<f64> = v.iter().zip(pv).map(|(a, b)| a - b).collect();
                let y: Vec<f64> = grad.iter().zip(pg).map(|(a, b)| a - b).collect();
                let sy = dot(&s, &y);
                let ss = dot(&s, &s);
                if sy > 0.0 && ss > 0.0 && (ss / sy).is_finite() {
                    ss / sy
                } else {
                    config.initial_step
                }
            }
            _ => config.initial_step,
        };
        // backtracking on the projected candidate
        let mut accepted = false;
        while step >= MIN_STEP {
            let mut candidate = v.clone();
            for (c, g) in candidate.iter_mut().zip(&grad) {
                *c -= step * g;
            }
            project_unit_interval(&mut candidate);
            let cand_value =
                data_term_raw(geometry, Some(&candidate), normal_vectors, rho, tau_data, &mut scratch);
            diag.objective_evaluations += 1;
            let direction_dot: f64 = candidate
                .iter()
                .zip(&v)
                .zip(&grad)
                .map(|((c, x), g)| (c - x) * g)
                .sum();
            if cand_value.is_finite() && cand_value <= value + ARMIJO_C * direction_dot {
                prev = Some((v, grad));
                v = candidate;
                value = cand_value;
                accepted = true;
                break;
            }
            step *= BACKTRACK_SHRINK;
        }
        if !accepted {
            diag.step_underflows += 1;
            break;
        }
    }
    let field = VisibilityField::from_data(visibility.num_samples(), visibility.num_voxels(), v)?;
    Ok((field, diag))
}

/// Limited-memory quasi-Newton minimization over the normal angles.
///
/// History 5, Armijo line search; on a failed search the current iterate is
/// returned with the failure counted in the diagnostics.
pub fn update_normals(
    tau: &TransientImage,
    albedo: &AlbedoVolume,
    normals: &NormalField,
    visibility: &VisibilityField,
    config: &FactoredSolverConfig,
) -> Result<(NormalField, SolveDiagnostics)> {
    check_shapes(tau, albedo, Some(normals), visibility)?;
    config.validate()?;
    let geometry = tau.geometry();
    let nv = geometry.num_voxels();
    let rho = albedo.data();
    let tau_data = tau.data();
    let vis = visibility.data();
    let mut diag = SolveDiagnostics::default();
    let mut scratch = vec![0.0; tau_data.len()];

    // theta = [angles_u ; angles_v]
    let mut theta = Vec::with_capacity(2 * nv);
    theta.extend_from_slice(normals.angles_u());
    theta.extend_from_slice(normals.angles_v());

    let mut value = {
        let vectors: Vec<[f64; 3]> = (0..nv)
            .map(|j| crate::geometry::normal_from_angles(theta[j], theta[nv + j]))
            .collect();
        data_term_raw(geometry, Some(vis), Some(&vectors), rho, tau_data, &mut scratch)
    };
    diag.objective_evaluations += 1;

    let grad_at = |t: &[f64]| -> Vec<f64> {
        let (gu, gv) = grad_normals_raw(geometry, vis, &t[..nv], &t[nv..], rho, tau_data);
        let mut g = gu;
        g.extend(gv);
        g
    };

    let mut history = LbfgsHistory::new(5);
    let mut grad = grad_at(&theta);
    for _ in 0..config.normal_solver_iterations {
        if grad.iter().all(|&g| g == 0.0) {
            break;
        }
        let mut direction = history.direction(&grad);
        let mut initial_step = 1.0;
        if !(dot(&grad, &direction) < 0.0) {
            history.clear();
            direction = grad.iter().map(|g| -g).collect();
            initial_step = config.initial_step;
        }
        let mut objective_fn = |t: &[f64]| -> f64 {
            let vectors: Vec<[f64; 3]> = (0..nv)
                .map(|j| crate::geometry::normal_from_angles(t[j], t[nv + j]))
                .collect();
            let mut local = vec![0.0; tau_data.len()];
            data_term_raw(geometry, Some(vis), Some(&vectors), rho, tau_data, &mut local)
        };
        match armijo_backtrack(&mut objective_fn, &theta, value, &grad, &direction, initial_step) {
            Some(step) => {
                diag.objective_evaluations += step.evaluations;
                let new_grad = grad_at(&step.point);
                history.push(
                    step.point.iter().zip(&theta).map(|(a, b)| a - b).collect(),
                    new_grad.iter().zip(&grad).map(|(a, b)| a - b).collect(),
                );
                theta = step.point;
                value = step.value;
                grad = new_grad;
            }
            None => {
                diag.line_search_failures += 1;
                break;
            }
        }
    }
    let field = NormalField::from_angles(theta[..nv].to_vec(), theta[nv..].to_vec())?;
    Ok((field, diag))
}

/// Joint factorization of a transient image into albedo, visibility, and
/// (optionally) surface normals by alternating least squares.
///
/// Initialization: visibility all ones, albedo uniform random in `[0, 1)`,
/// normal azimuths uniform in `[0, 2pi)` and polar angles uniform in
/// `[pi/2, pi]` — the hemisphere facing the wall, which keeps the clamped
/// Lambertian factor live at the start. Deterministic for a fixed seed.
pub fn als_factorize(tau: &TransientImage, config: &FactoredSolverConfig) -> Result<FactoredEstimate> {
    config.validate()?;
    let geometry = tau.geometry().clone();
    let ns = geometry.num_samples();
    let nv = geometry.num_voxels();
    let vis_bytes = ns as u128 * nv as u128 * core::mem::size_of::<f64>() as u128;
    if vis_bytes > config.max_visibility_bytes as u128 {
        return Err(Error::MemoryBudget {
            required: vis_bytes,
            budget: config.max_visibility_bytes as u128,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let mut albedo = AlbedoVolume::from_data(
        geometry.clone(),
        (0..nv).map(|_| rng.gen_range(0.0..1.0)).collect(),
    )?;
    let mut normals = if config.estimate_normals {
        let u: Vec<f64> = (0..nv).map(|_| rng.gen_range(0.0..core::f64::consts::TAU)).collect();
        let v: Vec<f64> = (0..nv)
            .map(|_| rng.gen_range(core::f64::consts::FRAC_PI_2..=core::f64::consts::PI))
            .collect();
        Some(NormalField::from_angles(u, v)?)
    } else {
        None
    };
    let mut visibility = VisibilityField::ones(&geometry);

    let mut albedo_config = config.linear.clone();
    albedo_config.iterations = config.albedo_inner_iterations;

    let mut trace = Vec::with_capacity(config.outer_iterations);
    let mut diagnostics = SolveDiagnostics::default();

    for outer in 0..config.outer_iterations {
        // albedo step with the current factors frozen into the operator
        let model = crate::transport::FactoredModel::new(
            geometry.clone(),
            Some(visibility.clone()),
            normals.clone(),
        )?;
        let raw = admm_solve_raw(&model, tau, &albedo_config, Some(albedo.data()))?;
        albedo = AlbedoVolume::from_data(geometry.clone(), raw)?;

        // visibility step
        let (new_vis, vis_diag) =
            update_visibility(tau, &albedo, normals.as_ref(), &visibility, config)?;
        visibility = new_vis;
        diagnostics.absorb(&vis_diag);

        // normal step (Lambertian mode only)
        if let Some(current) = normals.take() {
            let (new_normals, n_diag) =
                update_normals(tau, &albedo, &current, &visibility, config)?;
            normals = Some(new_normals);
            diagnostics.absorb(&n_diag);
        }

        let j = objective(tau, &albedo, normals.as_ref(), &visibility, &config.linear)?;
        if !j.is_finite() {
            return Err(Error::NonFinite(format!("objective at outer iteration {outer}")));
        }
        trace.push(j);
    }

    Ok(FactoredEstimate {
        albedo,
        normals,
        visibility,
        objective_trace: trace,
        diagnostics,
    })
}
