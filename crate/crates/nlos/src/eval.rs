//! Quantitative evaluation: PSNR scoring, reference solutions with
//! ground-truth factors fixed, and a benchmark over the bundled desk-scale
//! scene suite.
//!
//! The suite mirrors the structure of the paper-scale comparisons at sizes a
//! workstation handles: a single plane (unoccluded control), two partially
//! occluding planes, a plane in front of a blocky emblem, two convex blobs,
//! and two interlocking brackets, each in isotropic and Lambertian variants.

use crate::error::Error;
use crate::factored::{als_factorize, FactoredSolverConfig};
use crate::fields::{AlbedoVolume, NormalField, TransientImage, VisibilityField};
use crate::geometry::{ScanGeometry, SPEED_OF_LIGHT};
use crate::linear::{admm_linear_solve, backproject, filtered_backproject, LinearSolverConfig};
use crate::scene::{
    ground_truth_visibility, rasterize_scene, AxisAlignedBox, Primitive, RectPatch, Scene,
    VoxelImport,
};
use crate::transport::{add_poisson_noise, forward_transient, FactoredModel};
use crate::Result;
use alloc::format;
use alloc::string::String;
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

/// Reconstruction methods the benchmark can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Backprojection,
    FilteredBackprojection,
    Linear,
    Factored,
    /// Linear solve with the ground-truth visibility fixed.
    ReferenceVisibility,
    /// Linear solve with ground-truth visibility and normals fixed.
    ReferenceVisibilityNormals,
}

impl Method {
    /// Fixed label set used in reports.
    pub fn label(&self) -> &'static str {
        match self {
            Method::Backprojection => "BP",
            Method::FilteredBackprojection => "FBP",
            Method::Linear => "Lin",
            Method::Factored => "Factored",
            Method::ReferenceVisibility => "Lin w/ V",
            Method::ReferenceVisibilityNormals => "Lin w/ N+V",
        }
    }

    pub fn all() -> [Method; 6] {
        [
            Method::Backprojection,
            Method::FilteredBackprojection,
            Method::Linear,
            Method::Factored,
            Method::ReferenceVisibility,
            Method::ReferenceVisibilityNormals,
        ]
    }
}

/// One method's outcome on one scene.
#[derive(Debug, Clone)]
pub struct MethodResult {
    pub method: Method,
    /// Peak signal-to-noise ratio in dB; `f64::INFINITY` flags an exact match.
    pub psnr_db: f64,
    pub mse: f64,
    pub runtime_seconds: f64,
    /// Set when the method failed; the other fields are then NaN/0.
    pub error: Option<String>,
}

/// Per-scene evaluation report.
#[derive(Debug, Clone)]
pub struct EvalReport {
    pub scene: String,
    pub lambertian: bool,
    pub noise_photons: Option<u64>,
    pub results: Vec<MethodResult>,
}

/// Mean squared error between two equally shaped volumes.
pub fn mse(estimate: &AlbedoVolume, truth: &AlbedoVolume) -> Result<f64> {
    if estimate.geometry() != truth.geometry() {
        return Err(Error::ShapeMismatch("estimate and truth geometries differ".into()));
    }
    let n = truth.data().len() as f64;
    Ok(estimate
        .data()
        .iter()
        .zip(truth.data())
        .map(|(e, t)| {
            let d = e - t;
            d * d
        })
        .sum::<f64>()
        / n)
}

/// Peak signal-to-noise ratio in dB with peak taken from the ground truth:
/// `10 log10(max(truth)^2 / mse)`. Returns `f64::INFINITY` on an exact match
/// and errors on an identically zero truth.
pub fn psnr(estimate: &AlbedoVolume, truth: &AlbedoVolume) -> Result<f64> {
    let peak = truth.max_value();
    if peak == 0.0 {
        return Err(Error::InvalidParameter("PSNR truth volume is identically zero".into()));
    }
    let err = mse(estimate, truth)?;
    if err == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * libm::log10(peak * peak / err))
}

/// Linear reconstruction with ground-truth factors fixed: the convex
/// reference that upper-bounds what the factored solver can reach.
pub fn reference_solution(
    tau: &TransientImage,
    gt_visibility: &VisibilityField,
    gt_normals: Option<&NormalField>,
    config: &LinearSolverConfig,
) -> Result<AlbedoVolume> {
    let model = FactoredModel::new(
        tau.geometry().clone(),
        Some(gt_visibility.clone()),
        gt_normals.cloned(),
    )?;
    admm_linear_solve(&model, tau, config)
}

/// A named benchmark scene bound to its geometry.
#[derive(Debug, Clone)]
pub struct BenchScene {
    pub name: String,
    pub scene: Scene,
    pub geometry: ScanGeometry,
    /// Simulate with surface normals (Lambertian) or isotropically.
    pub lambertian: bool,
}

/// Benchmark settings. Per the evaluation protocol, the plain linear method
/// runs with the same regularization weights as the factored solver's albedo
/// step (only the iteration count differs).
#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub factored: FactoredSolverConfig,
    /// ADMM iterations for the standalone linear method and the references.
    pub linear_iterations: usize,
    pub noise_photons: Option<u64>,
    /// Rays per (sample, voxel) pair for ground-truth visibility.
    pub rays_per_pair: usize,
    pub fbp_quantile: f64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        let mut factored = FactoredSolverConfig::default();
        factored.linear = LinearSolverConfig {
            iterations: 40,
            sparsity_weight: 0.01,
            tv_weight: 0.001,
            admm_penalty: 1.0,
            cg_iterations: 8,
            nonnegativity: true,
        };
        factored.albedo_inner_iterations = 20;
        factored.visibility_gradient_steps = 8;
        factored.normal_solver_iterations = 8;
        BenchConfig {
            factored,
            linear_iterations: 40,
            noise_photons: None,
            rays_per_pair: 1,
            fbp_quantile: 0.0,
        }
    }
}

/// Standard desk-scale geometry: unit wall patch, unit-depth volume at a
/// 0.6 m standoff, 48 time bins covering every path.
pub fn bench_geometry(n: usize) -> Result<ScanGeometry> {
    let pitch = 1.0 / n as f64;
    let time_bins = 48;
    // longest path: lateral sqrt(2), depth 1.6 => r ~ 2.14 m
    let bin_width = 2.0 * 2.3 / (SPEED_OF_LIGHT * (time_bins as f64 - 4.0));
    ScanGeometry::new(n, [n, n, n], pitch, 0.6, time_bins, bin_width, SPEED_OF_LIGHT, 4)
}

fn ball_mask(dims: [usize; 3], center: [f64; 3], radius: f64) -> Vec<bool> {
    let mut mask = Vec::with_capacity(dims[0] * dims[1] * dims[2]);
    for x in 0..dims[0] {
        for y in 0..dims[1] {
            for z in 0..dims[2] {
                let d = [
                    x as f64 + 0.5 - center[0],
                    y as f64 + 0.5 - center[1],
                    z as f64 + 0.5 - center[2],
                ];
                mask.push(d[0] * d[0] + d[1] * d[1] + d[2] * d[2] <= radius * radius);
            }
        }
    }
    mask
}

/// The bundled desk-scale scene roster at grid size `n` (use 8 or 16).
///
/// Lambertian variants carry wall-facing (or mildly tilted) normals; the
/// isotropic variants are simulated with the normal factor fixed at 1, in
/// which case the stored angles are ignored.
pub fn desk_scene_suite(n: usize, lambertian: bool) -> Result<Vec<BenchScene>> {
    if n < 8 {
        return Err(Error::InvalidParameter(format!("suite needs n >= 8, got {n}")));
    }
    let geometry = bench_geometry(n)?;
    let z0 = 0.6;
    let facing = (0.0, PI); // normal [0, 0, -1], toward the wall
    let rect = |albedo, (u, v): (f64, f64), center: [f64; 3], size: [f64; 2]| {
        Primitive::Rect(RectPatch { albedo, normal_u: u, normal_v: v, center, size })
    };
    let boxp = |albedo, (u, v): (f64, f64), min: [f64; 3], max: [f64; 3]| {
        Primitive::Box(AxisAlignedBox { albedo, normal_u: u, normal_v: v, min, max })
    };

    let single_plane = Scene::new(
        vec![rect(1.0, facing, [0.5, 0.5, z0 + 0.32], [0.56, 0.56])],
        0.5,
    );

    let two_planes = Scene::new(
        vec![
            rect(1.0, facing, [0.56, 0.56, z0 + 0.66], [0.6, 0.6]),
            rect(0.9, (0.3, PI - 0.25), [0.36, 0.36, z0 + 0.16], [0.4, 0.4]),
        ],
        0.5,
    );

    // blocky "T" emblem behind a small plane
    let emblem_z = z0 + 0.72;
    let plane_and_emblem = Scene::new(
        vec![
            boxp(1.0, facing, [0.2, 0.62, emblem_z - 0.04], [0.8, 0.8, emblem_z + 0.04]),
            boxp(1.0, facing, [0.41, 0.2, emblem_z - 0.04], [0.59, 0.62, emblem_z + 0.04]),
            rect(0.85, (5.7, PI - 0.3), [0.4, 0.42, z0 + 0.2], [0.42, 0.42]),
        ],
        0.5,
    );

    let nf = n as f64;
    let blobs = Scene::new(
        vec![
            Primitive::Voxels(VoxelImport {
                albedo: 1.0,
                normal_u: 0.0,
                normal_v: PI,
                origin: [0, 0, 0],
                dims: [n, n, n],
                mask: ball_mask([n, n, n], [0.62 * nf, 0.6 * nf, 0.7 * nf], 0.21 * nf),
            }),
            Primitive::Voxels(VoxelImport {
                albedo: 0.9,
                normal_u: 2.1,
                normal_v: PI - 0.2,
                origin: [0, 0, 0],
                dims: [n, n, n],
                mask: ball_mask([n, n, n], [0.42 * nf, 0.42 * nf, 0.25 * nf], 0.16 * nf),
            }),
        ],
        0.5,
    );

    // two brackets interlocking across depth
    let interlocking = Scene::new(
        vec![
            boxp(1.0, facing, [0.15, 0.3, z0 + 0.55], [0.6, 0.44, z0 + 0.7]),
            boxp(1.0, facing, [0.15, 0.3, z0 + 0.7], [0.3, 0.72, z0 + 0.85]),
            boxp(0.9, (1.2, PI - 0.2), [0.42, 0.52, z0 + 0.14], [0.85, 0.66, z0 + 0.3]),
            boxp(0.9, (1.2, PI - 0.2), [0.7, 0.24, z0 + 0.14], [0.85, 0.52, z0 + 0.3]),
        ],
        0.5,
    );

    let named = [
        ("single_plane", single_plane),
        ("two_planes", two_planes),
        ("plane_and_emblem", plane_and_emblem),
        ("blobs", blobs),
        ("interlocking", interlocking),
    ];
    Ok(named
        .into_iter()
        .map(|(name, scene)| BenchScene {
            name: name.to_string(),
            scene,
            geometry: geometry.clone(),
            lambertian,
        })
        .collect())
}

/// Names of the suite scenes that contain partial occlusion.
pub fn occluded_scene_names() -> [&'static str; 4] {
    ["two_planes", "plane_and_emblem", "blobs", "interlocking"]
}

fn scene_seed(seed: u64, index: usize) -> u64 {
    seed ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Simulated inputs for one benchmark scene.
pub struct ScenePipeline {
    pub truth: AlbedoVolume,
    pub normals: NormalField,
    pub visibility: VisibilityField,
    pub tau: TransientImage,
}

/// Rasterizes, derives ground-truth visibility, and simulates the (optionally
/// noisy) measurement for one scene.
pub fn prepare_scene(bench: &BenchScene, config: &BenchConfig, seed: u64) -> Result<ScenePipeline> {
    let (truth, normals) = rasterize_scene(&bench.scene, &bench.geometry)?;
    let visibility =
        ground_truth_visibility(&truth, bench.scene.occluder_threshold, config.rays_per_pair, seed)?;
    let model = FactoredModel::new(
        bench.geometry.clone(),
        Some(visibility.clone()),
        if bench.lambertian { Some(normals.clone()) } else { None },
    )?;
    let clean = forward_transient(&model, &truth)?;
    let tau = match config.noise_photons {
        Some(photons) => add_poisson_noise(&clean, photons, seed)?,
        None => clean,
    };
    Ok(ScenePipeline { truth, normals, visibility, tau })
}

/// Runs the listed methods on each scene and reports PSNR, MSE, and runtime.
///
/// `now` supplies timestamps in seconds (injected so the core stays clock
/// free). Per-method failures are recorded in the report rather than
/// aborting the benchmark. Deterministic for a fixed seed.
pub fn run_benchmark(
    scenes: &[BenchScene],
    methods: &[Method],
    config: &BenchConfig,
    seed: u64,
    now: &mut dyn FnMut() -> f64,
) -> Result<Vec<EvalReport>> {
    let mut reports = Vec::with_capacity(scenes.len());
    for (index, bench) in scenes.iter().enumerate() {
        let seed_k = scene_seed(seed, index);
        let pipeline = prepare_scene(bench, config, seed_k)?;
        let mut results = Vec::with_capacity(methods.len());
        for &method in methods {
            let start = now();
            let outcome = run_method(method, bench, &pipeline, config, seed_k);
            let elapsed = now() - start;
            let result = match outcome {
                Ok(volume) => {
                    let err = mse(&volume, &pipeline.truth)?;
                    let quality = psnr(&volume, &pipeline.truth)?;
                    MethodResult {
                        method,
                        psnr_db: quality,
                        mse: err,
                        runtime_seconds: elapsed,
                        error: None,
                    }
                }
                Err(e) => MethodResult {
                    method,
                    psnr_db: f64::NAN,
                    mse: f64::NAN,
                    runtime_seconds: elapsed,
                    error: Some(e.to_string()),
                },
            };
            results.push(result);
        }
        reports.push(EvalReport {
            scene: bench.name.clone(),
            lambertian: bench.lambertian,
            noise_photons: config.noise_photons,
            results,
        });
    }
    Ok(reports)
}

fn run_method(
    method: Method,
    bench: &BenchScene,
    pipeline: &ScenePipeline,
    config: &BenchConfig,
    seed: u64,
) -> Result<AlbedoVolume> {
    let mut linear_config = config.factored.linear.clone();
    linear_config.iterations = config.linear_iterations;
    match method {
        Method::Backprojection => backproject(&pipeline.tau),
        Method::FilteredBackprojection => filtered_backproject(&pipeline.tau, config.fbp_quantile),
        Method::Linear => {
            let model = FactoredModel::isotropic(bench.geometry.clone());
            admm_linear_solve(&model, &pipeline.tau, &linear_config)
        }
        Method::Factored => {
            let mut factored = config.factored.clone();
            factored.rng_seed = seed;
            factored.estimate_normals = bench.lambertian;
            let estimate = als_factorize(&pipeline.tau, &factored)?;
            Ok(estimate.albedo)
        }
        Method::ReferenceVisibility => {
            reference_solution(&pipeline.tau, &pipeline.visibility, None, &linear_config)
        }
        Method::ReferenceVisibilityNormals => reference_solution(
            &pipeline.tau,
            &pipeline.visibility,
            Some(&pipeline.normals),
            &linear_config,
        ),
    }
}
