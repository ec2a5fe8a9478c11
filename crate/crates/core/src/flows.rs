//! Gradient flows of a source point cloud towards a target, datasets, and the exact W2
//! evaluation used to score them.

use std::time::Instant;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::distances::{DistanceConfig, StswMode, TswMode};
use crate::error::{Error, Result};
use crate::geometry::{norm, sample_unit_sphere, sample_vmf, DiscreteMeasure};
use crate::gradients::{grad_estimate, grad_estimate_spherical, grad_sw, GradientField};
use crate::transport::assignment;

/// Flows whose W2 exceeds this are aborted.
pub const DIVERGENCE_W2: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Optimizer {
    PlainSgd,
    AdaptiveMoment { beta1: f64, beta2: f64, eps: f64 },
}

impl Optimizer {
    pub const ADAM: Optimizer = Optimizer::AdaptiveMoment {
        beta1: 0.9,
        beta2: 0.999,
        eps: 1e-8,
    };

    fn validate(&self) -> Result<()> {
        if let Optimizer::AdaptiveMoment { beta1, beta2, eps } = *self {
            if !(0.0..1.0).contains(&beta1) {
                return Err(Error::config(
                    "optimizer.beta1",
                    format!("must be in [0, 1), got {beta1}"),
                ));
            }
            if !(0.0..1.0).contains(&beta2) {
                return Err(Error::config(
                    "optimizer.beta2",
                    format!("must be in [0, 1), got {beta2}"),
                ));
            }
            if !(eps > 0.0) {
                return Err(Error::config(
                    "optimizer.eps",
                    format!("must be positive, got {eps}"),
                ));
            }
        }
        Ok(())
    }
}

/// Optimizer state over a flat parameter vector.
struct OptimizerState {
    kind: Optimizer,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl OptimizerState {
    fn new(kind: Optimizer, len: usize) -> Self {
        Self {
            kind,
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    fn step(&mut self, x: &mut [f64], grad: &[f64], lr: f64) {
        match self.kind {
            Optimizer::PlainSgd => x.iter_mut().zip(grad).for_each(|(p, g)| *p -= lr * g),
            Optimizer::AdaptiveMoment { beta1, beta2, eps } => {
                self.t += 1;
                let c1 = 1.0 - beta1.powi(self.t);
                let c2 = 1.0 - beta2.powi(self.t);
                for i in 0..x.len() {
                    let g = grad[i];
                    self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g;
                    self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * g * g;
                    x[i] -= lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + eps);
                }
            }
        }
    }
}

/// Distance driving a flow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowMethod {
    Sw,
    DbLinear,
    Spatial,
    Circular,
    CircularR0,
    Stsw,
    SpatialStsw,
}

impl FlowMethod {
    pub fn name(self) -> &'static str {
        match self {
            FlowMethod::Sw => "sw",
            FlowMethod::DbLinear => "db_linear",
            FlowMethod::Spatial => "spatial",
            FlowMethod::Circular => "circular",
            FlowMethod::CircularR0 => "circular_r0",
            FlowMethod::Stsw => "stsw",
            FlowMethod::SpatialStsw => "spatial_stsw",
        }
    }

    pub fn is_spherical(self) -> bool {
        matches!(self, FlowMethod::Stsw | FlowMethod::SpatialStsw)
    }

    fn tsw_mode(self) -> Option<TswMode> {
        match self {
            FlowMethod::DbLinear => Some(TswMode::DbLinear),
            FlowMethod::Spatial => Some(TswMode::Spatial),
            FlowMethod::Circular => Some(TswMode::Circular),
            FlowMethod::CircularR0 => Some(TswMode::CircularR0),
            _ => None,
        }
    }

    fn stsw_mode(self) -> Option<StswMode> {
        match self {
            FlowMethod::Stsw => Some(StswMode::Plain),
            FlowMethod::SpatialStsw => Some(StswMode::Spatial),
            _ => None,
        }
    }
}

/// Ground cost of the W2 evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroundCost {
    #[default]
    Euclidean,
    /// `arccos <x, y>`, for points on the sphere.
    Geodesic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowConfig {
    pub method: FlowMethod,
    pub learning_rate: f64,
    pub iterations: usize,
    pub optimizer: Optimizer,
    /// Iterations at which W2 is evaluated; iteration 0 is always recorded as well.
    pub checkpoints: Vec<usize>,
    pub distance: DistanceConfig,
    /// Directions for the `sw` method.
    pub sw_projections: usize,
    pub ground: GroundCost,
    /// Floor applied before taking `ln` of W2.
    pub log_floor: f64,
    /// Seed of the source initialisation (and of dataset sampling in the CLI).
    pub eval_seed: u64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            method: FlowMethod::Spatial,
            learning_rate: 1e-3,
            iterations: 2500,
            optimizer: Optimizer::ADAM,
            checkpoints: vec![500, 1000, 1500, 2000, 2500],
            distance: DistanceConfig {
                num_trees: 25,
                lines_per_tree: 4,
                spatial_map: crate::projection::SpatialMapConfig::CUBIC,
                ..DistanceConfig::default()
            },
            sw_projections: 100,
            ground: GroundCost::Euclidean,
            log_floor: 1e-12,
            eval_seed: 0,
        }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config(
                "learning_rate",
                format!("must be positive, got {}", self.learning_rate),
            ));
        }
        if self.iterations == 0 {
            return Err(Error::config("iterations", "must be at least 1"));
        }
        if let Some(c) = self
            .checkpoints
            .iter()
            .find(|c| **c == 0 || **c > self.iterations)
        {
            return Err(Error::config(
                "checkpoints",
                format!("{c} is outside [1, {}]", self.iterations),
            ));
        }
        if self.method == FlowMethod::Sw && self.sw_projections == 0 {
            return Err(Error::config("sw_projections", "must be at least 1"));
        }
        if !(self.log_floor > 0.0) {
            return Err(Error::config("log_floor", "must be positive"));
        }
        self.optimizer.validate()?;
        self.distance.validate(None)
    }
}

/// One evaluated checkpoint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FlowCheckpoint {
    pub iteration: usize,
    pub w2: f64,
    /// `ln(max(w2, floor))`.
    pub log_w2: f64,
    /// Mean wall-clock seconds per step since the previous checkpoint (0 at iteration 0).
    pub seconds_per_iter: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowTrace {
    pub method: FlowMethod,
    pub checkpoints: Vec<FlowCheckpoint>,
    pub final_points: Vec<f64>,
}

impl FlowTrace {
    pub fn final_w2(&self) -> f64 {
        self.checkpoints.last().map(|c| c.w2).unwrap_or(f64::NAN)
    }
}

/// Tree seed of one flow iteration: trees are resampled at every step.
pub fn iteration_seed(base: u64, iteration: usize) -> u64 {
    // splitmix64 finaliser over (base, iteration)
    let mut z = base
        ^ (iteration as u64)
            .wrapping_add(1)
            .wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn gradient_at(
    cfg: &FlowConfig,
    points: &[f64],
    dim: usize,
    target: &DiscreteMeasure,
    iteration: usize,
) -> Result<GradientField> {
    let seed = iteration_seed(cfg.distance.seed, iteration);
    let dcfg = DistanceConfig {
        seed,
        ..cfg.distance.clone()
    };
    if let Some(mode) = cfg.method.stsw_mode() {
        // ambient coordinates drift off the sphere by round-off only; re-flag after renormalising
        let mu = DiscreteMeasure::uniform(points.to_vec(), dim)?.into_spherical()?;
        return grad_estimate_spherical(&mu, target, &dcfg, mode).map(|r| r.1);
    }
    let mu = DiscreteMeasure::uniform(points.to_vec(), dim)?;
    match cfg.method.tsw_mode() {
        Some(mode) => grad_estimate(&mu, target, &dcfg, mode).map(|r| r.1),
        None => grad_sw(&mu, target, cfg.sw_projections, seed).map(|r| r.1),
    }
}

fn run_flow(
    source: &DiscreteMeasure,
    target: &DiscreteMeasure,
    cfg: &FlowConfig,
    spherical: bool,
) -> Result<FlowTrace> {
    cfg.validate()?;
    if source.dim() != target.dim() {
        return Err(Error::DimensionMismatch {
            expected: target.dim(),
            found: source.dim(),
        });
    }
    if spherical != cfg.method.is_spherical() {
        return Err(Error::config(
            "method",
            format!("`{}` does not match the flow geometry", cfg.method.name()),
        ));
    }
    let dim = source.dim();
    let mut x = source.points().to_vec();
    let mut opt = OptimizerState::new(cfg.optimizer, x.len());
    let mut marks: Vec<usize> = cfg.checkpoints.clone();
    marks.sort_unstable();
    marks.dedup();

    let evaluate = |x: &[f64], iteration: usize, seconds: f64| -> Result<FlowCheckpoint> {
        let w2 = exact_w2(x, target.points(), dim, cfg.ground)?;
        if !w2.is_finite() || w2 > DIVERGENCE_W2 {
            return Err(Error::Diverged { iteration, w2 });
        }
        Ok(FlowCheckpoint {
            iteration,
            w2,
            log_w2: w2.max(cfg.log_floor).ln(),
            seconds_per_iter: seconds,
        })
    };

    let mut checkpoints = vec![evaluate(&x, 0, 0.0)?];
    let mut next = marks.iter().peekable();
    let mut elapsed = 0.0;
    let mut steps = 0usize;
    for it in 1..=cfg.iterations {
        let start = Instant::now();
        let grad = gradient_at(cfg, &x, dim, target, it)?;
        opt.step(&mut x, &grad.values, cfg.learning_rate);
        if spherical {
            for p in x.chunks_exact_mut(dim) {
                let n = norm(p);
                if !(n > 0.0) || !n.is_finite() {
                    return Err(Error::Diverged {
                        iteration: it,
                        w2: f64::NAN,
                    });
                }
                p.iter_mut().for_each(|v| *v /= n);
            }
        } else if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged {
                iteration: it,
                w2: f64::NAN,
            });
        }
        elapsed += start.elapsed().as_secs_f64();
        steps += 1;
        if next.peek() == Some(&&it) {
            next.next();
            checkpoints.push(evaluate(&x, it, elapsed / steps as f64)?);
            elapsed = 0.0;
            steps = 0;
        }
    }
    Ok(FlowTrace {
        method: cfg.method,
        checkpoints,
        final_points: x,
    })
}

/// Euclidean flow `x ← x - lr · step(∇ D(μ_x, ν))` with trees resampled every step.
pub fn run_flow_euclidean(
    source: &DiscreteMeasure,
    target: &DiscreteMeasure,
    cfg: &FlowConfig,
) -> Result<FlowTrace> {
    run_flow(source, target, cfg, false)
}

/// Spherical flow: ambient optimizer step followed by `x ← x / |x|`.
pub fn run_flow_spherical(
    source: &DiscreteMeasure,
    target: &DiscreteMeasure,
    cfg: &FlowConfig,
) -> Result<FlowTrace> {
    if !source.is_spherical() {
        source.clone().into_spherical()?;
    }
    if !target.is_spherical() {
        return run_flow_spherical(source, &target.clone().into_spherical()?, cfg);
    }
    run_flow(source, target, cfg, true)
}

/// Great-circle distance `arccos <a, b>` in the form `2 asin(|a - b| / 2)`, which stays
/// accurate (and exactly 0) for nearby points.
pub fn geodesic(a: &[f64], b: &[f64]) -> f64 {
    let chord = a
        .iter()
        .zip(b)
        .map(|(p, q)| (p - q) * (p - q))
        .sum::<f64>()
        .sqrt();
    2.0 * (0.5 * chord).min(1.0).asin()
}

/// Exact W2 between two uniform point clouds of equal size, by optimal assignment.
pub fn exact_w2(x: &[f64], y: &[f64], dim: usize, ground: GroundCost) -> Result<f64> {
    if dim == 0 || x.len() % dim != 0 || y.len() % dim != 0 {
        return Err(Error::ShapeMismatch(format!(
            "point arrays do not have dimension {dim}"
        )));
    }
    let n = x.len() / dim;
    if y.len() / dim != n {
        return Err(Error::ShapeMismatch(format!(
            "exact W2 needs equal sizes, got {n} and {}",
            y.len() / dim
        )));
    }
    if n == 0 {
        return Ok(0.0);
    }
    let mut cost = Vec::with_capacity(n * n);
    for a in x.chunks_exact(dim) {
        for b in y.chunks_exact(dim) {
            cost.push(match ground {
                GroundCost::Euclidean => {
                    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>()
                }
                GroundCost::Geodesic => geodesic(a, b).powi(2),
            });
        }
    }
    let (_, total) = assignment(&cost, n)?;
    Ok((total.max(0.0) / n as f64).sqrt())
}

/// Synthetic datasets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dataset {
    Gaussians25,
    Gaussians8,
    SwissRoll,
    HalfMoons,
    Circle,
    Vmf12,
}

impl Dataset {
    pub fn parse(name: &str) -> Result<Self> {
        Ok(match name {
            "gaussians25" => Dataset::Gaussians25,
            "gaussians8" => Dataset::Gaussians8,
            "swiss_roll" => Dataset::SwissRoll,
            "half_moons" => Dataset::HalfMoons,
            "circle" => Dataset::Circle,
            "vmf12" => Dataset::Vmf12,
            other => return Err(Error::UnknownDataset(other.to_string())),
        })
    }

    pub fn dim(self) -> usize {
        match self {
            Dataset::Vmf12 => 3,
            _ => 2,
        }
    }

    pub fn is_spherical(self) -> bool {
        self == Dataset::Vmf12
    }
}

/// Component std of `gaussians25`.
pub const GAUSSIANS25_STD: f64 = 0.05;
/// Concentration of every `vmf12` component.
pub const VMF12_KAPPA: f64 = 50.0;

/// Unnormalised icosahedral mean directions of `vmf12`.
pub fn vmf12_means() -> [[f64; 3]; 12] {
    let p = (1.0 + 5f64.sqrt()) / 2.0;
    [
        [-1.0, p, 0.0],
        [1.0, p, 0.0],
        [-1.0, -p, 0.0],
        [1.0, -p, 0.0],
        [0.0, -1.0, p],
        [0.0, 1.0, p],
        [0.0, -1.0, -p],
        [0.0, 1.0, -p],
        [p, 0.0, -1.0],
        [p, 0.0, 1.0],
        [-p, 0.0, -1.0],
        [-p, 0.0, 1.0],
    ]
}

/// `n` points of a named dataset; mixture components are assigned round-robin.
pub fn make_dataset<R: Rng + ?Sized>(
    name: Dataset,
    n: usize,
    rng: &mut R,
) -> Result<DiscreteMeasure> {
    make_dataset_with(name, n, None, rng)
}

/// As [`make_dataset`], optionally overriding the `vmf12` concentration.
pub fn make_dataset_with<R: Rng + ?Sized>(
    name: Dataset,
    n: usize,
    kappa: Option<f64>,
    rng: &mut R,
) -> Result<DiscreteMeasure> {
    if n == 0 {
        return Err(Error::config("n", "a dataset needs at least one point"));
    }
    let normal = |rng: &mut R| -> f64 { rng.sample(StandardNormal) };
    let mut pts = Vec::with_capacity(n * name.dim());
    match name {
        Dataset::Gaussians25 => {
            // grid coordinates uniform on {-2..2}: variance 2, plus the component variance
            let scale = (2.0 + GAUSSIANS25_STD * GAUSSIANS25_STD).sqrt();
            for i in 0..n {
                let c = i % 25;
                let (cx, cy) = ((c % 5) as f64 - 2.0, (c / 5) as f64 - 2.0);
                pts.push((cx + GAUSSIANS25_STD * normal(rng)) / scale);
                pts.push((cy + GAUSSIANS25_STD * normal(rng)) / scale);
            }
        }
        Dataset::Gaussians8 => {
            let (radius, std): (f64, f64) = (2.0, 0.02);
            let scale = (radius * radius / 2.0 + std * std).sqrt();
            for i in 0..n {
                let a = std::f64::consts::TAU * (i % 8) as f64 / 8.0;
                pts.push((radius * a.cos() + std * normal(rng)) / scale);
                pts.push((radius * a.sin() + std * normal(rng)) / scale);
            }
        }
        Dataset::SwissRoll => {
            for _ in 0..n {
                let t = 1.5 * std::f64::consts::PI * (1.0 + 2.0 * rng.random::<f64>());
                pts.push((t * t.cos() + 0.25 * normal(rng)) / 7.5);
                pts.push((t * t.sin() + 0.25 * normal(rng)) / 7.5);
            }
        }
        Dataset::HalfMoons => {
            for i in 0..n {
                let a = std::f64::consts::PI * rng.random::<f64>();
                let (x, y) = if i % 2 == 0 {
                    (a.cos(), a.sin())
                } else {
                    (1.0 - a.cos(), 0.5 - a.sin())
                };
                pts.push(x - 0.5 + 0.05 * normal(rng));
                pts.push(y - 0.25 + 0.05 * normal(rng));
            }
        }
        Dataset::Circle => {
            for _ in 0..n {
                let a = std::f64::consts::TAU * rng.random::<f64>();
                pts.push(a.cos() + 0.02 * normal(rng));
                pts.push(a.sin() + 0.02 * normal(rng));
            }
        }
        Dataset::Vmf12 => {
            let kappa = kappa.unwrap_or(VMF12_KAPPA);
            let means: Vec<Vec<f64>> = vmf12_means()
                .iter()
                .map(|m| {
                    let s = norm(m);
                    m.iter().map(|v| v / s).collect()
                })
                .collect();
            for i in 0..n {
                pts.extend(sample_vmf(&means[i % 12], kappa, 1, rng)?);
            }
            return DiscreteMeasure::uniform_spherical(pts, 3);
        }
    }
    DiscreteMeasure::uniform(pts, 2)
}

/// `n` i.i.d. standard Gaussian points in R^d (the Euclidean flow initialisation).
pub fn gaussian_source<R: Rng + ?Sized>(
    n: usize,
    d: usize,
    rng: &mut R,
) -> Result<DiscreteMeasure> {
    DiscreteMeasure::uniform((0..n * d).map(|_| rng.sample(StandardNormal)).collect(), d)
}

/// `n` i.i.d. uniform points on the unit sphere of R^m (the spherical flow initialisation).
pub fn uniform_sphere_source<R: Rng + ?Sized>(
    n: usize,
    m: usize,
    rng: &mut R,
) -> Result<DiscreteMeasure> {
    let mut pts = Vec::with_capacity(n * m);
    for _ in 0..n {
        pts.extend(sample_unit_sphere(m, rng)?);
    }
    DiscreteMeasure::uniform_spherical(pts, m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::stream_rng;

    fn permutations(n: usize) -> Vec<Vec<usize>> {
        if n == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in permutations(n - 1) {
            for pos in 0..=p.len() {
                let mut q = p.clone();
                q.insert(pos, n - 1);
                out.push(q);
            }
        }
        out
    }

    #[test]
    fn exact_w2_examples_and_brute_force() {
        assert_eq!(
            exact_w2(&[1.0, 2.0], &[1.0, 2.0], 2, GroundCost::Euclidean).unwrap(),
            0.0
        );
        let v = exact_w2(&[0.0, 0.0], &[3.0, 4.0], 2, GroundCost::Euclidean).unwrap();
        assert!((v - 5.0).abs() < 1e-15);
        assert!(exact_w2(&[0.0, 0.0], &[3.0, 4.0, 1.0, 1.0], 2, GroundCost::Euclidean).is_err());
        let mut rng = stream_rng(1, 0);
        for _ in 0..50 {
            let n = rng.random_range(1..=6);
            let x: Vec<f64> = (0..2 * n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let y: Vec<f64> = (0..2 * n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let best = permutations(n)
                .iter()
                .map(|p| {
                    (0..n)
                        .map(|i| {
                            (0..2)
                                .map(|l| (x[2 * i + l] - y[2 * p[i] + l]).powi(2))
                                .sum::<f64>()
                        })
                        .sum::<f64>()
                })
                .fold(f64::INFINITY, f64::min);
            let w2 = exact_w2(&x, &y, 2, GroundCost::Euclidean).unwrap();
            assert!((w2 - (best / n as f64).sqrt()).abs() < 1e-10);
        }
    }

    #[test]
    fn geodesic_matches_arccos() {
        let mut rng = stream_rng(6, 0);
        for _ in 0..100 {
            let a = sample_unit_sphere(3, &mut rng).unwrap();
            let b = sample_unit_sphere(3, &mut rng).unwrap();
            let d = crate::geometry::dot(&a, &b).clamp(-1.0, 1.0).acos();
            assert!((geodesic(&a, &b) - d).abs() < 1e-7);
        }
        let a = [0.0, 0.6, 0.8];
        assert_eq!(geodesic(&a, &a), 0.0);
        assert!((geodesic(&a, &[0.0, -0.6, -0.8]) - std::f64::consts::PI).abs() < 1e-15);
    }

    #[test]
    fn dataset_properties() {
        let mut rng = stream_rng(2, 0);
        let v = make_dataset(Dataset::Vmf12, 240, &mut rng).unwrap();
        assert!(v.rows().all(|p| (norm(p) - 1.0).abs() < 1e-9));
        let sharp = make_dataset_with(Dataset::Vmf12, 24, Some(1e12), &mut rng).unwrap();
        for (i, p) in sharp.rows().enumerate() {
            let m = vmf12_means()[i % 12];
            let s = norm(&m);
            for l in 0..3 {
                assert!((p[l] - m[l] / s).abs() < 1e-5);
            }
        }
        let g = make_dataset(Dataset::Gaussians25, 10_000, &mut rng).unwrap();
        for l in 0..2 {
            let mean = g.rows().map(|p| p[l]).sum::<f64>() / 1e4;
            assert!(mean.abs() < 4.0 / 100.0, "{mean}");
        }
        for name in ["gaussians8", "swiss_roll", "half_moons", "circle"] {
            let d = make_dataset(Dataset::parse(name).unwrap(), 100, &mut rng).unwrap();
            assert_eq!(d.len(), 100);
        }
        assert!(matches!(
            Dataset::parse("spiral"),
            Err(Error::UnknownDataset(_))
        ));
    }

    #[test]
    fn zero_distance_at_start_when_target_is_source() {
        let mut rng = stream_rng(3, 0);
        let src = gaussian_source(20, 2, &mut rng).unwrap();
        let cfg = FlowConfig {
            iterations: 5,
            checkpoints: vec![5],
            learning_rate: 0.3,
            ..FlowConfig::default()
        };
        let trace = run_flow_euclidean(&src, &src, &cfg).unwrap();
        assert_eq!(trace.checkpoints[0].iteration, 0);
        assert_eq!(trace.checkpoints[0].w2, 0.0);
    }

    #[test]
    fn one_dim_two_point_toy_converges() {
        let src = DiscreteMeasure::uniform(vec![0.0], 1).unwrap();
        let tgt = DiscreteMeasure::uniform(vec![1.0], 1).unwrap();
        let cfg = FlowConfig {
            method: FlowMethod::DbLinear,
            learning_rate: 1e-3,
            iterations: 10_000,
            optimizer: Optimizer::PlainSgd,
            checkpoints: vec![10_000],
            distance: DistanceConfig {
                num_trees: 1,
                lines_per_tree: 1,
                ..DistanceConfig::default()
            },
            ..FlowConfig::default()
        };
        let trace = run_flow_euclidean(&src, &tgt, &cfg).unwrap();
        assert!(
            (trace.final_points[0] - 1.0).abs() < 1e-6,
            "{}",
            trace.final_points[0]
        );
    }

    #[test]
    fn spherical_flow_stays_on_sphere_and_target_floor() {
        let mut rng = stream_rng(4, 0);
        let src = uniform_sphere_source(30, 3, &mut rng).unwrap();
        let cfg = FlowConfig {
            method: FlowMethod::SpatialStsw,
            learning_rate: 0.01,
            iterations: 10,
            checkpoints: vec![10],
            ground: GroundCost::Geodesic,
            distance: DistanceConfig {
                num_trees: 10,
                lines_per_tree: 5,
                ..DistanceConfig::default()
            },
            ..FlowConfig::default()
        };
        let tgt = make_dataset(Dataset::Vmf12, 30, &mut rng).unwrap();
        let trace = run_flow_spherical(&src, &tgt, &cfg).unwrap();
        assert!(trace
            .final_points
            .chunks(3)
            .all(|p| (norm(p) - 1.0).abs() < 1e-9));
        let same = run_flow_spherical(
            &src,
            &src,
            &FlowConfig {
                iterations: 1,
                checkpoints: vec![1],
                ..cfg
            },
        )
        .unwrap();
        assert_eq!(same.checkpoints[0].log_w2, 1e-12f64.ln());
    }

    #[test]
    fn flows_are_deterministic_and_validate() {
        let mut rng = stream_rng(5, 0);
        let src = gaussian_source(25, 2, &mut rng).unwrap();
        let tgt = make_dataset(Dataset::Gaussians25, 25, &mut rng).unwrap();
        let cfg = FlowConfig {
            method: FlowMethod::Circular,
            iterations: 20,
            checkpoints: vec![10, 20],
            ..FlowConfig::default()
        };
        let a = run_flow_euclidean(&src, &tgt, &cfg).unwrap();
        let b = run_flow_euclidean(&src, &tgt, &cfg).unwrap();
        assert_eq!(a.final_points, b.final_points);
        assert_eq!(
            a.checkpoints.iter().map(|c| c.w2).collect::<Vec<_>>(),
            b.checkpoints.iter().map(|c| c.w2).collect::<Vec<_>>()
        );
        let bad = FlowConfig {
            checkpoints: vec![21],
            ..cfg.clone()
        };
        assert!(run_flow_euclidean(&src, &tgt, &bad).is_err());
        let sph = FlowConfig {
            method: FlowMethod::Stsw,
            ..cfg
        };
        assert!(run_flow_euclidean(&src, &tgt, &sph).is_err());
    }

    #[test]
    fn divergence_aborts() {
        let src = DiscreteMeasure::uniform(vec![0.0, 0.0], 2).unwrap();
        let tgt = DiscreteMeasure::uniform(vec![1.0, 1.0], 2).unwrap();
        let cfg = FlowConfig {
            method: FlowMethod::Sw,
            optimizer: Optimizer::PlainSgd,
            learning_rate: 1e9,
            iterations: 3,
            checkpoints: vec![1, 2, 3],
            ..FlowConfig::default()
        };
        assert!(matches!(
            run_flow_euclidean(&src, &tgt, &cfg),
            Err(Error::Diverged { .. })
        ));
    }
}
