//! Analytic gradients of the tree-sliced estimators with respect to the support points of
//! the first measure, plus a finite-difference checker.
//!
//! Trees are held fixed. Each tree contributes through two paths: the coordinates of the
//! points on every line, and the split weights (masses), whose softmax depends on the
//! point's distance to every line. Spider W1 is piecewise linear in both; its derivative
//! is taken per segment, with the tie conventions described in `tree_ot`.

use std::collections::hash_map::DefaultHasher;
use std::hash::Hasher;

use rand::seq::index::sample;
use rayon::prelude::*;

use crate::distances::{
    line_masses, sample_directions, sample_spherical_trees, sample_trees, spherical_mode_points,
    spherical_tree_dim, tree_dim, wrap_coords, DistanceConfig, DistanceEstimate, EuclidMethod,
    StswMode, TswMode,
};
use crate::error::{Error, Result};
use crate::geometry::{dot, stream_rng, DiscreteMeasure, SphericalTree, TreeSystem};
use crate::projection::{lift_angle, spherical_coords, SpatialMapConfig, SPHERICAL_LIFT_EPS};
use crate::splitting::{beta_scores, softmax_rows, SplitDistance, POLE_TOL};
use crate::tree_ot::{spider_cost_grad, spider_signature, LineCoords, SpiderInput};

/// Trees per reduction chunk. Fixed so the summation order never depends on threads.
const CHUNK: usize = 8;

/// `∂ estimate / ∂ points of μ`, `n × dim` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientField {
    pub values: Vec<f64>,
    pub points: usize,
    pub dim: usize,
}

impl GradientField {
    pub fn row(&self, j: usize) -> &[f64] {
        &self.values[j * self.dim..(j + 1) * self.dim]
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

fn check_pair(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<()> {
    if mu.dim() != nu.dim() {
        return Err(Error::DimensionMismatch {
            expected: mu.dim(),
            found: nu.dim(),
        });
    }
    Ok(())
}

/// Per-tree values and the chunk-ordered mean gradient.
fn reduce_trees<T: Sync>(
    trees: &[T],
    len: usize,
    per_tree: impl Fn(&T, &mut [f64]) -> f64 + Sync,
) -> (Vec<f64>, Vec<f64>) {
    let chunks: Vec<(Vec<f64>, Vec<f64>)> = trees
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut acc = vec![0.0; len];
            let mut g = vec![0.0; len];
            let values = chunk
                .iter()
                .map(|tree| {
                    let v = per_tree(tree, &mut g);
                    acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
                    v
                })
                .collect();
            (values, acc)
        })
        .collect();
    let mut values = Vec::with_capacity(trees.len());
    let mut grad = vec![0.0; len];
    for (v, g) in chunks {
        values.extend(v);
        grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
    }
    let scale = 1.0 / trees.len() as f64;
    grad.iter_mut().for_each(|v| *v *= scale);
    (values, grad)
}

/// Coordinates, split weights and line masses of one side on one tree.
struct Side {
    coords: Vec<f64>,
    alpha: Vec<f64>,
    masses: Vec<f64>,
}

fn euclid_side(method: &EuclidMethod, tree: &TreeSystem, pts: &[f64], w: &[f64]) -> Side {
    let k = tree.num_lines();
    let (coords, mut alpha) = method.coords_and_scores(pts, tree);
    softmax_rows(&mut alpha, k, method.scale);
    let masses = line_masses(w, &alpha, k);
    Side {
        coords,
        alpha,
        masses,
    }
}

/// Gradient of `d(line distance)/dv` added as `coef ·` into `out`, `v = y - x`.
#[inline]
fn add_split_distance_grad(mode: SplitDistance, v: &[f64], th: &[f64], coef: f64, out: &mut [f64]) {
    let d = v.len();
    match mode {
        SplitDistance::Line => {
            let t = dot(v, th);
            let mut n2 = 0.0;
            for l in 0..d {
                let u = v[l] - t * th[l];
                n2 += u * u;
            }
            if n2 > 0.0 {
                let s = coef / n2.sqrt();
                for l in 0..d {
                    out[l] += s * (v[l] - t * th[l]);
                }
            }
        }
        SplitDistance::Circular { radius } => {
            let mut c2 = 0.0;
            for l in 0..d {
                let e = v[l] - radius * th[l];
                c2 += e * e;
            }
            let c = c2.sqrt();
            let mut n2 = 0.0;
            let mut th_u = 0.0;
            for l in 0..d {
                let u = v[l] - c * th[l];
                n2 += u * u;
                th_u += th[l] * u;
            }
            if n2 > 0.0 {
                let s = coef / n2.sqrt();
                // ∂c/∂v = (v - rθ)/c, taken as zero at c = 0
                let q = if c > 0.0 { th_u / c } else { 0.0 };
                for l in 0..d {
                    let u = v[l] - c * th[l];
                    out[l] += s * (u - q * (v[l] - radius * th[l]));
                }
            }
        }
    }
}

/// Value and gradient (w.r.t. mapped `μ` points) of one Euclidean tree; `grad` is overwritten.
fn euclid_tree_grad(
    method: &EuclidMethod,
    tree: &TreeSystem,
    mu_raw: &[f64],
    mu_w: &[f64],
    nu: &[f64],
    nu_w: &[f64],
    grad: &mut [f64],
) -> f64 {
    let k = tree.num_lines();
    let d = tree.dim();
    let n = mu_w.len();
    let mu_pts = method.map_points(mu_raw);
    let a = euclid_side(method, tree, &mu_pts, mu_w);
    let b = euclid_side(method, tree, nu, nu_w);
    let shared = method.shared();
    let input = SpiderInput {
        lines: k,
        mu_coords: wrap_coords(&a.coords, shared),
        mu_mass: &a.masses,
        nu_coords: wrap_coords(&b.coords, shared),
        nu_mass: &b.masses,
    };
    let mut dc = vec![0.0; k * n];
    let mut dm = vec![0.0; k * n];
    let value = spider_cost_grad(&input, &mut dc, &mut dm);

    let root = tree.root();
    let split = method.split_mode();
    let mut v = vec![0.0; d];
    let mut gs = vec![0.0; k];
    for j in 0..n {
        let y = &mu_pts[j * d..(j + 1) * d];
        let g = &mut grad[j * d..(j + 1) * d];
        g.iter_mut().for_each(|x| *x = 0.0);
        v.iter_mut()
            .zip(y.iter().zip(root))
            .for_each(|(o, (p, q))| *o = p - q);

        // coordinate path
        match method.mode {
            TswMode::DbLinear | TswMode::Spatial => {
                for i in 0..k {
                    let c = dc[i * n + j];
                    if c != 0.0 {
                        g.iter_mut()
                            .zip(tree.direction(i))
                            .for_each(|(o, t)| *o += c * t);
                    }
                }
            }
            TswMode::Circular => {
                for i in 0..k {
                    let c = dc[i * n + j];
                    let t = a.coords[i * n + j];
                    if c != 0.0 && t > 0.0 {
                        let th = tree.direction(i);
                        for l in 0..d {
                            g[l] += c * (v[l] - method.radius * th[l]) / t;
                        }
                    }
                }
            }
            TswMode::CircularR0 => {
                let c: f64 = (0..k).map(|i| dc[i * n + j]).sum();
                let t = a.coords[j];
                if c != 0.0 && t > 0.0 {
                    g.iter_mut().zip(&v).for_each(|(o, x)| *o += c * x / t);
                }
            }
        }

        // mass path: Σ_i G_i ∂α_i = scale · Σ_i α_i (G_i - Ḡ) ∂D_i
        if k > 1 {
            let alpha = &a.alpha[j * k..(j + 1) * k];
            for i in 0..k {
                gs[i] = mu_w[j] * dm[i * n + j];
            }
            let mean: f64 = (0..k).map(|i| alpha[i] * gs[i]).sum();
            for i in 0..k {
                let coef = method.scale * alpha[i] * (gs[i] - mean);
                if coef != 0.0 {
                    add_split_distance_grad(split, &v, tree.direction(i), coef, g);
                }
            }
        }

        if let SpatialMapConfig::OddPoly { .. } = method.map {
            let raw = &mu_raw[j * d..(j + 1) * d];
            g.iter_mut()
                .zip(raw)
                .for_each(|(o, x)| *o *= method.map.derivative_scalar(*x));
        }
    }
    value
}

fn euclid_checks(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    cfg: &DistanceConfig,
    mode: TswMode,
    trees: &[TreeSystem],
) -> Result<()> {
    check_pair(mu, nu)?;
    cfg.validate(None)?;
    if trees.is_empty() {
        return Err(Error::config("num_trees", "must be at least 1"));
    }
    let d = tree_dim(mu.dim(), mode);
    if let Some(t) = trees.iter().find(|t| t.dim() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: t.dim(),
        });
    }
    Ok(())
}

/// Estimate and gradient with trees sampled from `cfg`.
pub fn grad_estimate(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    cfg: &DistanceConfig,
    mode: TswMode,
) -> Result<(DistanceEstimate, GradientField)> {
    check_pair(mu, nu)?;
    let trees = sample_trees(cfg, tree_dim(mu.dim(), mode))?;
    grad_estimate_with_trees(mu, nu, cfg, mode, &trees)
}

/// Estimate and gradient on a fixed tree set.
pub fn grad_estimate_with_trees(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    cfg: &DistanceConfig,
    mode: TswMode,
    trees: &[TreeSystem],
) -> Result<(DistanceEstimate, GradientField)> {
    euclid_checks(mu, nu, cfg, mode, trees)?;
    let method = EuclidMethod::new(cfg, mode);
    let nu_pts = method.map_points(nu.points());
    let (values, grad) = reduce_trees(trees, mu.points().len(), |tree, g| {
        euclid_tree_grad(
            &method,
            tree,
            mu.points(),
            mu.weights(),
            &nu_pts,
            nu.weights(),
            g,
        )
    });
    if grad.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("gradient"));
    }
    Ok((
        DistanceEstimate::from_values(values, cfg),
        GradientField {
            values: grad,
            points: mu.len(),
            dim: mu.dim(),
        },
    ))
}

/// Single-line trees through the origin: the sliced baseline as a degenerate tree method.
pub fn sw_trees(d: usize, num_projections: usize, seed: u64) -> Result<Vec<TreeSystem>> {
    sample_directions(d, num_projections, seed)?
        .into_iter()
        .map(|th| TreeSystem::new(vec![0.0; d], th))
        .collect()
}

/// Sliced Wasserstein-1 and its gradient (directions as in `estimate_sw`).
pub fn grad_sw(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    num_projections: usize,
    seed: u64,
) -> Result<(DistanceEstimate, GradientField)> {
    if num_projections == 0 {
        return Err(Error::config("num_projections", "must be at least 1"));
    }
    let cfg = DistanceConfig {
        num_trees: num_projections,
        lines_per_tree: 1,
        root_std: 0.0,
        seed,
        ..DistanceConfig::default()
    };
    let trees = sw_trees(mu.dim(), num_projections, seed)?;
    grad_estimate_with_trees(mu, nu, &cfg, TswMode::DbLinear, &trees)
}

/// `∂β_i/∂z` added as `coef ·` into `out`.
#[inline]
fn add_beta_grad(z: &[f64], root: &[f64], edge: &[f64], coef: f64, out: &mut [f64]) {
    let u = dot(root, z);
    let s2 = 1.0 - u * u;
    if s2 < POLE_TOL {
        return;
    }
    let s = s2.sqrt();
    let q = dot(z, edge);
    let a = q / s;
    let acos = a.clamp(-1.0, 1.0).acos();
    // ∂s/∂z = -u x / s,  ∂a/∂z = y_i / s + q u x / s³
    let one_minus = 1.0 - a * a;
    let f = if one_minus > POLE_TOL {
        -s / one_minus.sqrt()
    } else {
        0.0
    };
    for l in 0..z.len() {
        let ds = -u * root[l] / s;
        let da = edge[l] / s + q * u * root[l] / (s * s2);
        out[l] += coef * (f * da + acos * ds);
    }
}

/// Value and gradient (w.r.t. points in the tree's ambient space) of one spherical tree.
fn spherical_tree_grad(
    tree: &SphericalTree,
    mu: &[f64],
    mu_w: &[f64],
    nu: &[f64],
    nu_w: &[f64],
    grad: &mut [f64],
) -> f64 {
    let k = tree.num_edges();
    let m = tree.ambient_dim();
    let n = mu_w.len();
    let side = |pts: &[f64], w: &[f64]| {
        let coords = spherical_coords(pts, tree.root());
        let mut alpha = beta_scores(pts, tree);
        softmax_rows(&mut alpha, k, 1.0);
        let masses = line_masses(w, &alpha, k);
        Side {
            coords,
            alpha,
            masses,
        }
    };
    let a = side(mu, mu_w);
    let b = side(nu, nu_w);
    let input = SpiderInput {
        lines: k,
        mu_coords: LineCoords::Shared(&a.coords),
        mu_mass: &a.masses,
        nu_coords: LineCoords::Shared(&b.coords),
        nu_mass: &b.masses,
    };
    let mut dc = vec![0.0; k * n];
    let mut dm = vec![0.0; k * n];
    let value = spider_cost_grad(&input, &mut dc, &mut dm);
    let root = tree.root();
    let mut gs = vec![0.0; k];
    for j in 0..n {
        let z = &mu[j * m..(j + 1) * m];
        let g = &mut grad[j * m..(j + 1) * m];
        g.iter_mut().for_each(|x| *x = 0.0);
        let c: f64 = (0..k).map(|i| dc[i * n + j]).sum();
        let u = dot(root, z).clamp(-1.0, 1.0);
        let s2 = 1.0 - u * u;
        if c != 0.0 && s2 > POLE_TOL {
            let f = -c / s2.sqrt();
            g.iter_mut().zip(root).for_each(|(o, x)| *o += f * x);
        }
        if k > 1 {
            let alpha = &a.alpha[j * k..(j + 1) * k];
            for i in 0..k {
                gs[i] = mu_w[j] * dm[i * n + j];
            }
            let mean: f64 = (0..k).map(|i| alpha[i] * gs[i]).sum();
            for i in 0..k {
                let coef = alpha[i] * (gs[i] - mean);
                if coef != 0.0 {
                    add_beta_grad(z, root, tree.edge(i), coef, g);
                }
            }
        }
    }
    value
}

/// Removes the normal component at each point: the gradient of `y ↦ f(y / |y|)`, the
/// extension that is constant along rays and so stays smooth off the sphere.
fn tangent_projection(points: &[f64], mut grad: Vec<f64>, m: usize) -> Vec<f64> {
    for (y, g) in points.chunks_exact(m).zip(grad.chunks_exact_mut(m)) {
        let c = dot(g, y) / dot(y, y);
        g.iter_mut().zip(y).for_each(|(o, v)| *o -= c * v);
    }
    grad
}

/// Pulls gradients on lifted points `h(y) ∈ R^{m+1}` back to `y ∈ R^m`.
fn lift_pullback(raw: &[f64], lifted_grad: &[f64], m: usize) -> Vec<f64> {
    let c = std::f64::consts::PI / (2.0 * (1.0 + SPHERICAL_LIFT_EPS)) / m as f64;
    let mut out = vec![0.0; raw.len()];
    for (j, y) in raw.chunks_exact(m).enumerate() {
        let g = &lifted_grad[j * (m + 1)..(j + 1) * (m + 1)];
        let (s, co) = lift_angle(y).sin_cos();
        // dk/dy_l = c for every l
        let gk = -s * g[0] + co * dot(&g[1..], y);
        for l in 0..m {
            out[j * m + l] = s * g[1 + l] + c * gk;
        }
    }
    out
}

fn spherical_value_grad(
    mu_raw: &[f64],
    mu_w: &[f64],
    nu_pts: &[f64],
    nu_w: &[f64],
    m: usize,
    mode: StswMode,
    trees: &[SphericalTree],
) -> (Vec<f64>, Vec<f64>) {
    let mu_pts = spherical_mode_points(mu_raw, m, mode);
    let (values, grad) = reduce_trees(trees, mu_pts.len(), |tree, g| {
        spherical_tree_grad(tree, &mu_pts, mu_w, nu_pts, nu_w, g)
    });
    let grad = match mode {
        StswMode::Plain => tangent_projection(mu_raw, grad, m),
        StswMode::Spatial => lift_pullback(mu_raw, &grad, m),
    };
    (values, grad)
}

fn spherical_checks(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    mode: StswMode,
    trees: &[SphericalTree],
) -> Result<()> {
    check_pair(mu, nu)?;
    for m in [mu, nu] {
        if !m.is_spherical() {
            m.clone().into_spherical()?;
        }
    }
    if trees.is_empty() {
        return Err(Error::config("num_trees", "must be at least 1"));
    }
    let m = spherical_tree_dim(mu.dim(), mode) + 1;
    if let Some(t) = trees.iter().find(|t| t.ambient_dim() != m) {
        return Err(Error::DimensionMismatch {
            expected: m,
            found: t.ambient_dim(),
        });
    }
    Ok(())
}

/// Spherical estimate and gradient with trees sampled from `cfg`. In `Plain` mode the
/// gradient is tangent to the sphere at each point; `Spatial` differentiates the lift of
/// the raw coordinates.
pub fn grad_estimate_spherical(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    cfg: &DistanceConfig,
    mode: StswMode,
) -> Result<(DistanceEstimate, GradientField)> {
    check_pair(mu, nu)?;
    let trees = sample_spherical_trees(cfg, spherical_tree_dim(mu.dim(), mode))?;
    grad_estimate_spherical_with_trees(mu, nu, cfg, mode, &trees)
}

/// As [`grad_estimate_spherical`], on a fixed tree set.
pub fn grad_estimate_spherical_with_trees(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    cfg: &DistanceConfig,
    mode: StswMode,
    trees: &[SphericalTree],
) -> Result<(DistanceEstimate, GradientField)> {
    spherical_checks(mu, nu, mode, trees)?;
    let nu_pts = spherical_mode_points(nu.points(), nu.dim(), mode);
    let (values, grad) = spherical_value_grad(
        mu.points(),
        mu.weights(),
        &nu_pts,
        nu.weights(),
        mu.dim(),
        mode,
        trees,
    );
    if grad.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("gradient"));
    }
    Ok((
        DistanceEstimate::from_values(values, cfg),
        GradientField {
            values: grad,
            points: mu.len(),
            dim: mu.dim(),
        },
    ))
}

/// Outcome of a finite-difference comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdReport {
    /// `max |analytic - fd| / max(max |analytic|, max |fd|)` over the compared entries.
    pub max_rel_error: f64,
    /// Entries compared.
    pub checked: usize,
    /// Entries excluded because the sort order or a prefix-sum sign changed within `±step`.
    pub flagged: usize,
}

/// Central differences of `f` at `x` on `entries`, compared with `grad`.
///
/// `signature` identifies the smooth piece containing a point; entries whose `±step`
/// neighbours fall on a different piece are excluded and counted as flagged.
pub fn finite_diff_compare(
    x: &[f64],
    grad: &[f64],
    entries: &[usize],
    step: f64,
    f: impl Fn(&[f64]) -> f64,
    signature: impl Fn(&[f64]) -> u64,
) -> Result<FdReport> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::config(
            "step",
            format!("must be positive, got {step}"),
        ));
    }
    let base = signature(x);
    let mut pairs = Vec::new();
    let mut flagged = 0;
    let mut xp = x.to_vec();
    for &e in entries {
        xp[e] = x[e] + step;
        let (fp, sp) = (f(&xp), signature(&xp));
        xp[e] = x[e] - step;
        let (fm, sm) = (f(&xp), signature(&xp));
        xp[e] = x[e];
        if sp != base || sm != base {
            flagged += 1;
            continue;
        }
        pairs.push((grad[e], (fp - fm) / (2.0 * step)));
    }
    let scale = pairs
        .iter()
        .fold(0.0f64, |m, (a, b)| m.max(a.abs()).max(b.abs()));
    let err = pairs.iter().fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    Ok(FdReport {
        max_rel_error: if scale > 0.0 { err / scale } else { 0.0 },
        checked: pairs.len(),
        flagged,
    })
}

/// Up to `max_entries` distinct entry indices out of `len`, drawn from `seed`.
pub fn sample_entries(len: usize, max_entries: usize, seed: u64) -> Vec<usize> {
    let mut idx = sample(&mut stream_rng(seed, 0), len, max_entries.min(len)).into_vec();
    idx.sort_unstable();
    idx
}

fn euclid_value_and_signature(
    method: &EuclidMethod,
    trees: &[TreeSystem],
    mu_raw: &[f64],
    mu_w: &[f64],
    nu: &[f64],
    nu_w: &[f64],
    with_signature: bool,
) -> (f64, u64) {
    let mut hasher = DefaultHasher::new();
    let mut total = 0.0;
    let mu_pts = method.map_points(mu_raw);
    for tree in trees {
        let a = euclid_side(method, tree, &mu_pts, mu_w);
        let b = euclid_side(method, tree, nu, nu_w);
        let input = SpiderInput {
            lines: tree.num_lines(),
            mu_coords: wrap_coords(&a.coords, method.shared()),
            mu_mass: &a.masses,
            nu_coords: wrap_coords(&b.coords, method.shared()),
            nu_mass: &b.masses,
        };
        total += crate::tree_ot::spider_cost(&input);
        if with_signature {
            spider_signature(&input, &mut hasher);
        }
    }
    (total / trees.len() as f64, hasher.finish())
}

/// Hash of the combinatorial state (sort orders and prefix-sum signs) of the estimator at
/// `μ` on fixed trees. Two inputs with the same signature lie on the same smooth piece.
pub fn piece_signature_with_trees(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    cfg: &DistanceConfig,
    mode: TswMode,
    trees: &[TreeSystem],
) -> Result<u64> {
    cfg.validate(None)?;
    if mu.dim() != nu.dim() {
        return Err(Error::DimensionMismatch {
            expected: nu.dim(),
            found: mu.dim(),
        });
    }
    let method = EuclidMethod::new(cfg, mode);
    let nu_pts = method.map_points(nu.points());
    Ok(euclid_value_and_signature(
        &method,
        trees,
        mu.points(),
        mu.weights(),
        &nu_pts,
        nu.weights(),
        true,
    )
    .1)
}

/// Checks `grad_estimate` against central differences on up to 40 random entries of
/// `μ`'s points, with the trees of `cfg` held fixed.
pub fn finite_diff_check(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    cfg: &DistanceConfig,
    mode: TswMode,
    step: f64,
) -> Result<FdReport> {
    let trees = sample_trees(cfg, tree_dim(mu.dim(), mode))?;
    finite_diff_check_with_trees(mu, nu, cfg, mode, &trees, step)
}

pub fn finite_diff_check_with_trees(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    cfg: &DistanceConfig,
    mode: TswMode,
    trees: &[TreeSystem],
    step: f64,
) -> Result<FdReport> {
    let (_, grad) = grad_estimate_with_trees(mu, nu, cfg, mode, trees)?;
    let method = EuclidMethod::new(cfg, mode);
    let nu_pts = method.map_points(nu.points());
    let eval = |x: &[f64], sig| {
        euclid_value_and_signature(&method, trees, x, mu.weights(), &nu_pts, nu.weights(), sig)
    };
    let entries = sample_entries(mu.points().len(), 40, cfg.seed ^ 0x5eed);
    finite_diff_compare(
        mu.points(),
        &grad.values,
        &entries,
        step,
        |x| eval(x, false).0,
        |x| eval(x, true).1,
    )
}

/// Spherical analogue of [`finite_diff_check`]; perturbations leave the sphere and the
/// ambient formula is differentiated as written.
pub fn finite_diff_check_spherical(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    cfg: &DistanceConfig,
    mode: StswMode,
    step: f64,
) -> Result<FdReport> {
    let trees = sample_spherical_trees(cfg, spherical_tree_dim(mu.dim(), mode))?;
    finite_diff_check_spherical_with_trees(mu, nu, cfg, mode, &trees, step)
}

pub fn finite_diff_check_spherical_with_trees(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    cfg: &DistanceConfig,
    mode: StswMode,
    trees: &[SphericalTree],
    step: f64,
) -> Result<FdReport> {
    let (_, grad) = grad_estimate_spherical_with_trees(mu, nu, cfg, mode, trees)?;
    let m = mu.dim();
    let nu_pts = spherical_mode_points(nu.points(), m, mode);
    let eval = |x: &[f64], sig: bool| {
        let pts = match mode {
            StswMode::Plain => x
                .chunks_exact(m)
                .flat_map(|y| {
                    let r = dot(y, y).sqrt();
                    y.iter().map(move |v| v / r)
                })
                .collect(),
            StswMode::Spatial => spherical_mode_points(x, m, mode),
        };
        let mut hasher = DefaultHasher::new();
        let mut total = 0.0;
        for tree in trees {
            let k = tree.num_edges();
            let side = |p: &[f64], w: &[f64]| {
                let coords = spherical_coords(p, tree.root());
                let mut alpha = beta_scores(p, tree);
                softmax_rows(&mut alpha, k, 1.0);
                (coords, line_masses(w, &alpha, k))
            };
            let (ac, am) = side(&pts, mu.weights());
            let (bc, bm) = side(&nu_pts, nu.weights());
            let input = SpiderInput {
                lines: k,
                mu_coords: LineCoords::Shared(&ac),
                mu_mass: &am,
                nu_coords: LineCoords::Shared(&bc),
                nu_mass: &bm,
            };
            total += crate::tree_ot::spider_cost(&input);
            if sig {
                spider_signature(&input, &mut hasher);
            }
        }
        (total / trees.len() as f64, hasher.finish())
    };
    let entries = sample_entries(mu.points().len(), 40, cfg.seed ^ 0x5eed);
    finite_diff_compare(
        mu.points(),
        &grad.values,
        &entries,
        step,
        |x| eval(x, false).0,
        |x| eval(x, true).1,
    )
}
