//! Measures, tree systems, spherical trees and their samplers.
//!
//! All samplers draw from an explicit RNG handle. Estimators derive one
//! [`ChaCha8Rng`] stream per tree from `(seed, tree index)` through
//! [`stream_rng`], so sampling is a pure function of the seed and does not
//! depend on how trees are scheduled across threads.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `sum(weights) == 1`.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;
/// Tolerance on `|x| == 1` for points of spherical measures.
pub const SPHERE_TOL: f64 = 1e-9;
/// Tolerance on `|theta| == 1` for tree directions.
pub const DIRECTION_TOL: f64 = 1e-12;
/// Tolerance on `QᵀQ == I` for isometries.
pub const ORTHOGONALITY_TOL: f64 = 1e-10;

/// Deterministic per-stream generator: ChaCha8 keyed by `seed`, stream `stream`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Neumaier-compensated sum; used where a tolerance is tighter than naive summation error.
pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

fn gaussian_vec<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vec<f64> {
    (0..dim).map(|_| rng.sample(StandardNormal)).collect()
}

/// Weighted point cloud in R^d (or on the sphere S^{d-1} when flagged spherical).
///
/// Points are stored row-major, `n × dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    points: Vec<f64>,
    dim: usize,
    weights: Vec<f64>,
    spherical: bool,
}

impl DiscreteMeasure {
    pub fn new(points: Vec<f64>, dim: usize, weights: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidDimension {
                dim,
                reason: "measure dimension must be positive",
            });
        }
        if weights.is_empty() {
            return Err(Error::InvalidWeights(
                "a measure needs at least one point".into(),
            ));
        }
        if points.len() != weights.len() * dim {
            return Err(Error::ShapeMismatch(format!(
                "{} coordinates for {} points of dimension {dim}",
                points.len(),
                weights.len()
            )));
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("measure points"));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::NonFinite("measure weights"));
        }
        if let Some(w) = weights.iter().find(|w| **w < 0.0) {
            return Err(Error::InvalidWeights(format!("negative weight {w}")));
        }
        let total = compensated_sum(weights.iter().copied());
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::InvalidWeights(format!(
                "weights sum to {total}, expected 1"
            )));
        }
        Ok(Self {
            points,
            dim,
            weights,
            spherical: false,
        })
    }

    /// Uniform weights `1/n`.
    pub fn uniform(points: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidDimension {
                dim,
                reason: "measure dimension must be positive",
            });
        }
        let n = points.len() / dim;
        Self::new(points, dim, vec![1.0 / n.max(1) as f64; n])
    }

    pub fn from_rows<P: AsRef<[f64]>>(rows: &[P], weights: Option<Vec<f64>>) -> Result<Self> {
        let dim = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut points = Vec::with_capacity(rows.len() * dim);
        for row in rows {
            let row = row.as_ref();
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: row.len(),
                });
            }
            points.extend_from_slice(row);
        }
        match weights {
            Some(w) => Self::new(points, dim, w),
            None => Self::uniform(points, dim),
        }
    }

    /// A measure on the unit sphere of `R^dim`; every point must have unit norm.
    pub fn spherical(points: Vec<f64>, dim: usize, weights: Vec<f64>) -> Result<Self> {
        Self::new(points, dim, weights)?.into_spherical()
    }

    pub fn uniform_spherical(points: Vec<f64>, dim: usize) -> Result<Self> {
        Self::uniform(points, dim)?.into_spherical()
    }

    pub fn into_spherical(mut self) -> Result<Self> {
        check_unit_rows(&self.points, self.dim)?;
        self.spherical = true;
        Ok(self)
    }

    /// Same weights and flag, new support. Revalidates.
    pub fn with_points(&self, points: Vec<f64>) -> Result<Self> {
        let m = Self::new(points, self.dim, self.weights.clone())?;
        if self.spherical {
            m.into_spherical()
        } else {
            Ok(m)
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_spherical(&self) -> bool {
        self.spherical
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn point(&self, j: usize) -> &[f64] {
        &self.points[j * self.dim..(j + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.points.chunks_exact(self.dim)
    }
}

fn check_unit_rows(points: &[f64], dim: usize) -> Result<()> {
    for (index, row) in points.chunks_exact(dim).enumerate() {
        let n = norm(row);
        if (n - 1.0).abs() > SPHERE_TOL {
            return Err(Error::NotOnSphere { index, norm: n });
        }
    }
    Ok(())
}

/// How the `k` directions of a tree system are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DirectionScheme {
    /// i.i.d. uniform on S^{d-1}.
    #[default]
    IidUniform,
    /// Orthonormal k-frame from Gram-Schmidt on k Gaussian vectors (requires k <= d).
    Orthogonal,
}

/// Concurrent system of `k` lines sharing one root.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeSystem {
    root: Vec<f64>,
    directions: Vec<f64>,
}

impl TreeSystem {
    pub fn new(root: Vec<f64>, directions: Vec<f64>) -> Result<Self> {
        let dim = root.len();
        if dim == 0 {
            return Err(Error::InvalidDimension {
                dim,
                reason: "tree root must be non-empty",
            });
        }
        if directions.is_empty() || directions.len() % dim != 0 {
            return Err(Error::ShapeMismatch(format!(
                "{} direction coordinates for dimension {dim}",
                directions.len()
            )));
        }
        if root.iter().chain(&directions).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("tree system"));
        }
        for (index, row) in directions.chunks_exact(dim).enumerate() {
            let n = norm(row);
            if (n - 1.0).abs() > DIRECTION_TOL {
                return Err(Error::NonUnitDirection { index, norm: n });
            }
        }
        Ok(Self { root, directions })
    }

    pub fn dim(&self) -> usize {
        self.root.len()
    }

    pub fn num_lines(&self) -> usize {
        self.directions.len() / self.root.len()
    }

    pub fn root(&self) -> &[f64] {
        &self.root
    }

    pub fn directions(&self) -> &[f64] {
        &self.directions
    }

    pub fn direction(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.directions[i * d..(i + 1) * d]
    }
}

/// Spherical tree on S^{m-1} ⊂ R^m: a root and `k` unit tangent edge directions.
#[derive(Debug, Clone, PartialEq)]
pub struct SphericalTree {
    root: Vec<f64>,
    edges: Vec<f64>,
}

impl SphericalTree {
    pub fn new(root: Vec<f64>, edges: Vec<f64>) -> Result<Self> {
        let m = root.len();
        if m < 2 {
            return Err(Error::InvalidDimension {
                dim: m,
                reason: "spherical trees need an ambient dimension of at least 2",
            });
        }
        if edges.is_empty() || edges.len() % m != 0 {
            return Err(Error::ShapeMismatch(format!(
                "{} edge coordinates for ambient dimension {m}",
                edges.len()
            )));
        }
        let rn = norm(&root);
        if (rn - 1.0).abs() > DIRECTION_TOL {
            return Err(Error::NotOnSphere { index: 0, norm: rn });
        }
        for (index, e) in edges.chunks_exact(m).enumerate() {
            let n = norm(e);
            if (n - 1.0).abs() > DIRECTION_TOL {
                return Err(Error::NonUnitDirection { index, norm: n });
            }
            if dot(e, &root).abs() > SPHERE_TOL {
                return Err(Error::ShapeMismatch(format!(
                    "edge {index} is not tangent to the root"
                )));
            }
        }
        Ok(Self { root, edges })
    }

    /// Ambient dimension `m` (the tree lives on S^{m-1}).
    pub fn ambient_dim(&self) -> usize {
        self.root.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len() / self.root.len()
    }

    pub fn root(&self) -> &[f64] {
        &self.root
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn edge(&self, i: usize) -> &[f64] {
        let m = self.ambient_dim();
        &self.edges[i * m..(i + 1) * m]
    }
}

/// Uniform direction on S^{d-1} by normalizing a standard Gaussian.
pub fn sample_unit_sphere<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Result<Vec<f64>> {
    if d == 0 {
        return Err(Error::InvalidDimension {
            dim: 0,
            reason: "cannot sample a direction in R^0",
        });
    }
    loop {
        let mut v = gaussian_vec(d, rng);
        let n = norm(&v);
        if n > 1e-150 {
            v.iter_mut().for_each(|x| *x /= n);
            return Ok(v);
        }
    }
}

/// Gram-Schmidt with one re-orthogonalization pass. Returns `None` on rank deficiency.
fn orthonormalize(rows: &mut [f64], dim: usize) -> Option<()> {
    let k = rows.len() / dim;
    for i in 0..k {
        for _pass in 0..2 {
            for j in 0..i {
                let (done, rest) = rows.split_at_mut(i * dim);
                let prev = &done[j * dim..(j + 1) * dim];
                let cur = &mut rest[..dim];
                let c = dot(cur, prev);
                cur.iter_mut().zip(prev).for_each(|(a, b)| *a -= c * b);
            }
        }
        let cur = &mut rows[i * dim..(i + 1) * dim];
        let n = norm(cur);
        if n < 1e-10 {
            return None;
        }
        cur.iter_mut().for_each(|x| *x /= n);
    }
    Some(())
}

pub fn sample_tree_system<R: Rng + ?Sized>(
    d: usize,
    k: usize,
    root_std: f64,
    scheme: DirectionScheme,
    rng: &mut R,
) -> Result<TreeSystem> {
    if d == 0 {
        return Err(Error::InvalidDimension {
            dim: 0,
            reason: "tree systems need a positive dimension",
        });
    }
    if k == 0 {
        return Err(Error::config("lines_per_tree", "must be at least 1"));
    }
    if !(root_std >= 0.0 && root_std.is_finite()) {
        return Err(Error::config(
            "root_std",
            format!("must be finite and >= 0, got {root_std}"),
        ));
    }
    let root: Vec<f64> = gaussian_vec(d, rng)
        .into_iter()
        .map(|z| root_std * z)
        .collect();
    let directions = match scheme {
        DirectionScheme::IidUniform => {
            let mut dirs = Vec::with_capacity(k * d);
            for _ in 0..k {
                dirs.extend(sample_unit_sphere(d, rng)?);
            }
            dirs
        }
        DirectionScheme::Orthogonal => {
            if k > d {
                return Err(Error::config(
                    "lines_per_tree",
                    format!("orthogonal directions need k <= d, got k={k}, d={d}"),
                ));
            }
            loop {
                let mut dirs = gaussian_vec(k * d, rng);
                if orthonormalize(&mut dirs, d).is_some() {
                    break dirs;
                }
            }
        }
    };
    TreeSystem::new(root, directions)
}

/// Builds a spherical tree from raw Gaussian draws: root = normalized `raw_root`,
/// edge i = `raw_edges[i]` with its root component removed, normalized.
///
/// Returns `None` when a projection degenerates (probability zero for Gaussian input).
pub fn spherical_tree_from_gaussians(raw_root: &[f64], raw_edges: &[f64]) -> Option<SphericalTree> {
    let m = raw_root.len();
    let rn = norm(raw_root);
    if rn < 1e-150 {
        return None;
    }
    let root: Vec<f64> = raw_root.iter().map(|v| v / rn).collect();
    let mut edges = raw_edges.to_vec();
    for e in edges.chunks_exact_mut(m) {
        for _pass in 0..2 {
            let c = dot(e, &root);
            e.iter_mut().zip(&root).for_each(|(a, b)| *a -= c * b);
        }
        let n = norm(e);
        if n < 1e-10 {
            return None;
        }
        e.iter_mut().for_each(|v| *v /= n);
    }
    SphericalTree::new(root, edges).ok()
}

/// Samples a spherical tree on S^d (ambient dimension d+1): uniform root, edges uniform
/// on the tangent sphere at the root.
pub fn sample_spherical_tree<R: Rng + ?Sized>(
    d: usize,
    k: usize,
    rng: &mut R,
) -> Result<SphericalTree> {
    if d < 2 {
        return Err(Error::InvalidDimension {
            dim: d,
            reason: "spherical trees are sampled on S^d with d >= 2",
        });
    }
    if k == 0 {
        return Err(Error::config("lines_per_tree", "must be at least 1"));
    }
    let m = d + 1;
    loop {
        let raw_root = gaussian_vec(m, rng);
        let raw_edges = gaussian_vec(k * m, rng);
        if let Some(tree) = spherical_tree_from_gaussians(&raw_root, &raw_edges) {
            return Ok(tree);
        }
    }
}

/// Samples `n` i.i.d. von Mises-Fisher points on the unit sphere of `R^m`, `m = mean.len()`.
///
/// Wood's rejection scheme for the component along the mean, uniform tangent direction
/// for the rest. `1 - w` is carried explicitly so large concentrations stay accurate.
pub fn sample_vmf<R: Rng + ?Sized>(
    mean: &[f64],
    kappa: f64,
    n: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let m = mean.len();
    if m < 2 {
        return Err(Error::InvalidDimension {
            dim: m,
            reason: "vMF sampling needs an ambient dimension of at least 2",
        });
    }
    if !(kappa >= 0.0) || !kappa.is_finite() {
        return Err(Error::NegativeConcentration(kappa));
    }
    let mn = norm(mean);
    if (mn - 1.0).abs() > SPHERE_TOL {
        return Err(Error::NotOnSphere { index: 0, norm: mn });
    }
    let mean: Vec<f64> = mean.iter().map(|v| v / mn).collect();
    let dm1 = (m - 1) as f64;
    // b = (m-1) / (2κ + sqrt(4κ² + (m-1)²)), the stable form of Wood's constant.
    let b = dm1 / (2.0 * kappa + (4.0 * kappa * kappa + dm1 * dm1).sqrt());
    let x0 = (1.0 - b) / (1.0 + b);
    let one_minus_x0 = 2.0 * b / (1.0 + b);
    let c = kappa * x0 + dm1 * (one_minus_x0 * (1.0 + x0)).ln();
    let beta = Beta::new(dm1 / 2.0, dm1 / 2.0).expect("positive shape parameters");

    let mut out = Vec::with_capacity(n * m);
    for _ in 0..n {
        let (w, one_minus_w) = loop {
            let z: f64 = beta.sample(rng);
            let denom = 1.0 - (1.0 - b) * z;
            let w = (1.0 - (1.0 + b) * z) / denom;
            let one_minus_w = 2.0 * b * z / denom;
            // 1 - x0*w = (1 - w) + w (1 - x0)
            let t = one_minus_w + w * one_minus_x0;
            let u: f64 = rng.random();
            if kappa * w + dm1 * t.ln() - c >= u.ln() {
                break (w, one_minus_w);
            }
        };
        let tangent = loop {
            let mut v = gaussian_vec(m, rng);
            let c = dot(&v, &mean);
            v.iter_mut().zip(&mean).for_each(|(a, b)| *a -= c * b);
            let vn = norm(&v);
            if vn > 1e-10 {
                v.iter_mut().for_each(|a| *a /= vn);
                break v;
            }
        };
        let s = (one_minus_w * (1.0 + w)).max(0.0).sqrt();
        let start = out.len();
        out.extend(mean.iter().zip(&tangent).map(|(mu, v)| w * mu + s * v));
        let row = &mut out[start..];
        let rn = norm(row);
        row.iter_mut().for_each(|a| *a /= rn);
    }
    Ok(out)
}

/// Rigid motion `y ↦ Q y + a` of R^d (`Q` orthogonal, row-major).
#[derive(Debug, Clone, PartialEq)]
pub struct IsometryEd {
    q: Vec<f64>,
    shift: Vec<f64>,
}

impl IsometryEd {
    pub fn new(q: Vec<f64>, shift: Vec<f64>) -> Result<Self> {
        let d = shift.len();
        if d == 0 || q.len() != d * d {
            return Err(Error::ShapeMismatch(format!(
                "isometry matrix has {} entries for dimension {d}",
                q.len()
            )));
        }
        for i in 0..d {
            for j in 0..d {
                let qtq: f64 = (0..d).map(|l| q[l * d + i] * q[l * d + j]).sum();
                let target = if i == j { 1.0 } else { 0.0 };
                if (qtq - target).abs() > ORTHOGONALITY_TOL {
                    return Err(Error::ShapeMismatch(format!(
                        "matrix is not orthogonal: (QᵀQ)[{i}][{j}] = {qtq}"
                    )));
                }
            }
        }
        Ok(Self { q, shift })
    }

    pub fn identity(d: usize) -> Self {
        let mut q = vec![0.0; d * d];
        (0..d).for_each(|i| q[i * d + i] = 1.0);
        Self {
            q,
            shift: vec![0.0; d],
        }
    }

    pub fn translation(shift: Vec<f64>) -> Self {
        let mut g = Self::identity(shift.len());
        g.shift = shift;
        g
    }

    /// Haar-distributed orthogonal part (Gram-Schmidt on a Gaussian matrix) and a
    /// Gaussian shift with standard deviation `shift_std`.
    pub fn random<R: Rng + ?Sized>(d: usize, shift_std: f64, rng: &mut R) -> Self {
        let q = random_orthogonal(d, rng);
        let shift = gaussian_vec(d, rng)
            .into_iter()
            .map(|z| shift_std * z)
            .collect();
        Self { q, shift }
    }

    pub fn dim(&self) -> usize {
        self.shift.len()
    }

    pub fn matrix(&self) -> &[f64] {
        &self.q
    }

    pub fn shift(&self) -> &[f64] {
        &self.shift
    }

    /// `Q v` (no shift), for directions.
    pub fn rotate(&self, v: &[f64]) -> Vec<f64> {
        self.q
            .chunks_exact(self.dim())
            .map(|row| dot(row, v))
            .collect()
    }

    pub fn apply_point(&self, y: &[f64]) -> Vec<f64> {
        let mut out = self.rotate(y);
        out.iter_mut().zip(&self.shift).for_each(|(o, a)| *o += a);
        out
    }

    fn check_dim(&self, found: usize) -> Result<()> {
        if found != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found,
            });
        }
        Ok(())
    }

    pub fn apply_measure(&self, m: &DiscreteMeasure) -> Result<DiscreteMeasure> {
        self.check_dim(m.dim())?;
        let points = m.rows().flat_map(|y| self.apply_point(y)).collect();
        m.with_points(points)
    }

    pub fn apply_tree(&self, t: &TreeSystem) -> Result<TreeSystem> {
        self.check_dim(t.dim())?;
        let root = self.apply_point(t.root());
        let directions = t
            .directions()
            .chunks_exact(t.dim())
            .flat_map(|th| self.rotate(th))
            .collect();
        TreeSystem::new(root, directions)
    }

    /// Rotates root and edges; the shift is ignored (O(d+1) acts linearly on the sphere).
    pub fn apply_spherical_tree(&self, t: &SphericalTree) -> Result<SphericalTree> {
        self.check_dim(t.ambient_dim())?;
        let root = self.rotate(t.root());
        let edges = t
            .edges()
            .chunks_exact(t.ambient_dim())
            .flat_map(|e| self.rotate(e))
            .collect();
        SphericalTree::new(root, edges)
    }
}

/// Haar-random orthogonal matrix, row-major.
pub fn random_orthogonal<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let mut rows = gaussian_vec(d * d, rng);
        if orthonormalize(&mut rows, d).is_some() {
            return rows;
        }
    }
}
