//! Monte Carlo tree-sliced estimators: sample `L` trees, project and split both measures
//! on each, take the spider W1, average.
//!
//! Trees are drawn from `(seed, tree index)` streams and evaluated in parallel; per-tree
//! values are reduced in index order, so estimates do not depend on the thread count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    dot, sample_spherical_tree, sample_tree_system, sample_unit_sphere, stream_rng,
    DirectionScheme, DiscreteMeasure, SphericalTree, TreeSystem,
};
use crate::projection::{
    circular_coords, circular_coords_r0, linear_coords, spatial_map, spherical_coords,
    spherical_lift_points, SpatialMapConfig,
};
use crate::splitting::{
    beta_scores, check_temperature, circular_coords_and_split, circular_split_from_coords,
    softmax_rows, split_distances, SplitDistance, SplitSign,
};
use crate::tree_ot::{one_dim_w1, spider_cost, LineCoords, SpiderInput};

/// Euclidean tree-sliced variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TswMode {
    /// Linear projection, line-distance splitting (spatial with the identity map).
    DbLinear,
    /// Linear projection of `h(y)`, with `h` from [`DistanceConfig::spatial_map`].
    Spatial,
    /// `|y - x - rθ|` with `r` from [`DistanceConfig::radius`].
    Circular,
    /// `|y - x|`: one shared coordinate row per tree, sorted once.
    CircularR0,
}

impl TswMode {
    pub const ALL: [TswMode; 4] = [
        TswMode::DbLinear,
        TswMode::Spatial,
        TswMode::Circular,
        TswMode::CircularR0,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TswMode::DbLinear => "db_linear",
            TswMode::Spatial => "spatial",
            TswMode::Circular => "circular",
            TswMode::CircularR0 => "circular_r0",
        }
    }
}

/// Spherical tree-sliced variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StswMode {
    Plain,
    /// Lift S^d → S^{d+1} first, then sample trees on S^{d+1}.
    Spatial,
}

impl StswMode {
    pub fn name(self) -> &'static str {
        match self {
            StswMode::Plain => "stsw",
            StswMode::Spatial => "spatial_stsw",
        }
    }
}

/// Tree distribution and splitting parameters shared by all estimators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DistanceConfig {
    /// `L`.
    pub num_trees: usize,
    /// `k`.
    pub lines_per_tree: usize,
    pub radius: f64,
    pub root_std: f64,
    pub direction_scheme: DirectionScheme,
    pub splitting_sign: SplitSign,
    pub splitting_temperature: f64,
    pub seed: u64,
    pub spatial_map: SpatialMapConfig,
}

impl Default for DistanceConfig {
    fn default() -> Self {
        Self {
            num_trees: 100,
            lines_per_tree: 4,
            radius: 0.01,
            root_std: 0.1,
            direction_scheme: DirectionScheme::IidUniform,
            splitting_sign: SplitSign::Positive,
            splitting_temperature: 1.0,
            seed: 0,
            spatial_map: SpatialMapConfig::Identity,
        }
    }
}

impl DistanceConfig {
    /// Checks field ranges; `dim`, when known, is the dimension trees live in.
    pub fn validate(&self, dim: Option<usize>) -> Result<()> {
        if self.num_trees == 0 {
            return Err(Error::config("num_trees", "must be at least 1"));
        }
        if self.lines_per_tree == 0 {
            return Err(Error::config("lines_per_tree", "must be at least 1"));
        }
        if !(self.radius >= 0.0 && self.radius.is_finite()) {
            return Err(Error::config(
                "radius",
                format!("must be finite and >= 0, got {}", self.radius),
            ));
        }
        if !(self.root_std >= 0.0 && self.root_std.is_finite()) {
            return Err(Error::config(
                "root_std",
                format!("must be finite and >= 0, got {}", self.root_std),
            ));
        }
        check_temperature(self.splitting_temperature)?;
        self.spatial_map.validate()?;
        if let (DirectionScheme::Orthogonal, Some(d)) = (self.direction_scheme, dim) {
            if self.lines_per_tree > d {
                return Err(Error::config(
                    "lines_per_tree",
                    format!(
                        "orthogonal directions need k <= d, got k={}, d={d}",
                        self.lines_per_tree
                    ),
                ));
            }
        }
        Ok(())
    }

    pub(crate) fn split_scale(&self) -> f64 {
        self.splitting_sign.value() / self.splitting_temperature
    }
}

/// Monte Carlo estimate with its per-tree terms.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistanceEstimate {
    pub value: f64,
    pub per_tree_values: Vec<f64>,
    pub config_echo: DistanceConfig,
}

impl DistanceEstimate {
    pub(crate) fn from_values(per_tree_values: Vec<f64>, cfg: &DistanceConfig) -> Self {
        let value = per_tree_values.iter().sum::<f64>() / per_tree_values.len() as f64;
        Self {
            value,
            per_tree_values,
            config_echo: cfg.clone(),
        }
    }
}

/// `L` tree systems in R^d; tree `l` comes from stream `l` of `cfg.seed`.
pub fn sample_trees(cfg: &DistanceConfig, d: usize) -> Result<Vec<TreeSystem>> {
    cfg.validate(Some(d))?;
    (0..cfg.num_trees as u64)
        .into_par_iter()
        .map(|l| {
            let mut rng = stream_rng(cfg.seed, l);
            sample_tree_system(
                d,
                cfg.lines_per_tree,
                cfg.root_std,
                cfg.direction_scheme,
                &mut rng,
            )
        })
        .collect()
}

/// `L` spherical trees on S^d (ambient dimension `d + 1`).
pub fn sample_spherical_trees(cfg: &DistanceConfig, d: usize) -> Result<Vec<SphericalTree>> {
    cfg.validate(None)?;
    (0..cfg.num_trees as u64)
        .into_par_iter()
        .map(|l| {
            let mut rng = stream_rng(cfg.seed, l);
            sample_spherical_tree(d, cfg.lines_per_tree, &mut rng)
        })
        .collect()
}

/// Dimension of the space trees are sampled in for a Euclidean mode.
pub fn tree_dim(d: usize, _mode: TswMode) -> usize {
    // the coordinate-wise spatial maps keep the dimension
    d
}

/// Sphere dimension trees are sampled on for a spherical mode, given ambient dimension `m`.
pub fn spherical_tree_dim(m: usize, mode: StswMode) -> usize {
    match mode {
        StswMode::Plain => m - 1,
        StswMode::Spatial => m,
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

/// How one Euclidean mode turns a point set into coordinates and split scores.
#[derive(Debug, Clone, Copy)]
pub(crate) struct EuclidMethod {
    pub mode: TswMode,
    pub radius: f64,
    pub scale: f64,
    pub map: SpatialMapConfig,
}

impl EuclidMethod {
    pub(crate) fn new(cfg: &DistanceConfig, mode: TswMode) -> Self {
        Self {
            mode,
            radius: match mode {
                TswMode::Circular => cfg.radius,
                _ => 0.0,
            },
            scale: cfg.split_scale(),
            map: match mode {
                TswMode::Spatial => cfg.spatial_map,
                _ => SpatialMapConfig::Identity,
            },
        }
    }

    pub(crate) fn split_mode(&self) -> SplitDistance {
        match self.mode {
            TswMode::DbLinear | TswMode::Spatial => SplitDistance::Line,
            TswMode::Circular | TswMode::CircularR0 => SplitDistance::Circular {
                radius: self.radius,
            },
        }
    }

    /// Raw split distances `n × k`; circular modes reuse their coordinates.
    pub(crate) fn split_scores(
        &self,
        points: &[f64],
        tree: &TreeSystem,
        coords: &[f64],
    ) -> Vec<f64> {
        match self.split_mode() {
            SplitDistance::Circular { .. } => {
                circular_split_from_coords(points, tree, coords, self.shared())
            }
            mode => split_distances(points, tree, mode),
        }
    }

    /// Coordinates and raw split distances; circular modes get both from one pass.
    pub(crate) fn coords_and_scores(
        &self,
        points: &[f64],
        tree: &TreeSystem,
    ) -> (Vec<f64>, Vec<f64>) {
        match self.mode {
            TswMode::Circular | TswMode::CircularR0 => {
                circular_coords_and_split(points, tree, self.radius, self.shared())
            }
            _ => {
                let coords = self.coords(points, tree);
                let scores = self.split_scores(points, tree, &coords);
                (coords, scores)
            }
        }
    }

    /// Points in the space the trees live in.
    pub(crate) fn map_points(&self, points: &[f64]) -> Vec<f64> {
        match self.map {
            SpatialMapConfig::Identity => points.to_vec(),
            cfg => points.iter().map(|&x| cfg.apply_scalar(x)).collect(),
        }
    }

    /// Coordinates: `n` shared values for `circular_r0`, `k × n` line-major otherwise.
    pub(crate) fn coords(&self, points: &[f64], tree: &TreeSystem) -> Vec<f64> {
        match self.mode {
            TswMode::DbLinear | TswMode::Spatial => linear_coords(points, tree),
            TswMode::Circular => circular_coords(points, tree, self.radius),
            TswMode::CircularR0 => circular_coords_r0(points, tree.root()),
        }
    }

    pub(crate) fn shared(&self) -> bool {
        self.mode == TswMode::CircularR0
    }
}

/// Line-major `k × n` masses `w_j α[j][i]` from row-major `n × k` split weights.
pub(crate) fn line_masses(weights: &[f64], alpha: &[f64], k: usize) -> Vec<f64> {
    let n = weights.len();
    let mut out = vec![0.0; k * n];
    for j in 0..n {
        for i in 0..k {
            out[i * n + j] = weights[j] * alpha[j * k + i];
        }
    }
    out
}

pub(crate) fn wrap_coords(c: &[f64], shared: bool) -> LineCoords<'_> {
    if shared {
        LineCoords::Shared(c)
    } else {
        LineCoords::PerLine(c)
    }
}

/// Spider W1 for one tree on already-mapped point sets; no validation.
pub(crate) fn euclid_tree_value(
    method: &EuclidMethod,
    tree: &TreeSystem,
    mu_pts: &[f64],
    mu_w: &[f64],
    nu_pts: &[f64],
    nu_w: &[f64],
) -> f64 {
    let k = tree.num_lines();
    let side = |pts: &[f64], w: &[f64]| {
        let (coords, mut alpha) = method.coords_and_scores(pts, tree);
        softmax_rows(&mut alpha, k, method.scale);
        (coords, line_masses(w, &alpha, k))
    };
    let (mc, mm) = side(mu_pts, mu_w);
    let (nc, nm) = side(nu_pts, nu_w);
    spider_cost(&SpiderInput {
        lines: k,
        mu_coords: wrap_coords(&mc, method.shared()),
        mu_mass: &mm,
        nu_coords: wrap_coords(&nc, method.shared()),
        nu_mass: &nm,
    })
}

/// Spider W1 for one spherical tree on points already on the tree's sphere; no validation.
pub(crate) fn spherical_tree_value(
    tree: &SphericalTree,
    mu_pts: &[f64],
    mu_w: &[f64],
    nu_pts: &[f64],
    nu_w: &[f64],
) -> f64 {
    let k = tree.num_edges();
    let side = |pts: &[f64], w: &[f64]| {
        let coords = spherical_coords(pts, tree.root());
        let mut alpha = beta_scores(pts, tree);
        softmax_rows(&mut alpha, k, 1.0);
        (coords, line_masses(w, &alpha, k))
    };
    let (mc, mm) = side(mu_pts, mu_w);
    let (nc, nm) = side(nu_pts, nu_w);
    spider_cost(&SpiderInput {
        lines: k,
        mu_coords: LineCoords::Shared(&mc),
        mu_mass: &mm,
        nu_coords: LineCoords::Shared(&nc),
        nu_mass: &nm,
    })
}

/// Euclidean tree-sliced distance with trees sampled from `cfg`.
pub fn estimate_tsw(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    cfg: &DistanceConfig,
    mode: TswMode,
) -> Result<DistanceEstimate> {
    check_pair(mu, nu)?;
    cfg.validate(Some(tree_dim(mu.dim(), mode)))?;
    let trees = sample_trees(cfg, tree_dim(mu.dim(), mode))?;
    estimate_tsw_with_trees(mu, nu, cfg, mode, &trees)
}

/// Euclidean tree-sliced distance on a fixed tree set (paired-tree experiments).
pub fn estimate_tsw_with_trees(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    cfg: &DistanceConfig,
    mode: TswMode,
    trees: &[TreeSystem],
) -> Result<DistanceEstimate> {
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
    let method = EuclidMethod::new(cfg, mode);
    let mu_pts = method.map_points(mu.points());
    let nu_pts = method.map_points(nu.points());
    if mu_pts.iter().chain(&nu_pts).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("spatially mapped points"));
    }
    let values: Vec<f64> = trees
        .par_iter()
        .map(|tree| euclid_tree_value(&method, tree, &mu_pts, mu.weights(), &nu_pts, nu.weights()))
        .collect();
    Ok(DistanceEstimate::from_values(values, cfg))
}

/// `num_projections` directions, direction `l` from stream `l` of `seed`.
pub fn sample_directions(d: usize, num_projections: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    (0..num_projections as u64)
        .into_par_iter()
        .map(|l| sample_unit_sphere(d, &mut stream_rng(seed, l)))
        .collect()
}

/// Sliced Wasserstein-1 baseline.
pub fn estimate_sw(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    num_projections: usize,
    seed: u64,
) -> Result<DistanceEstimate> {
    if num_projections == 0 {
        return Err(Error::config("num_projections", "must be at least 1"));
    }
    check_pair(mu, nu)?;
    let dirs = sample_directions(mu.dim(), num_projections, seed)?;
    let mut echo = DistanceConfig {
        num_trees: num_projections,
        lines_per_tree: 1,
        seed,
        ..DistanceConfig::default()
    };
    echo.root_std = 0.0;
    estimate_sw_with_directions(mu, nu, &dirs, &echo)
}

/// Sliced Wasserstein-1 on given unit directions.
pub fn estimate_sw_with_directions(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    directions: &[Vec<f64>],
    echo: &DistanceConfig,
) -> Result<DistanceEstimate> {
    check_pair(mu, nu)?;
    if directions.is_empty() {
        return Err(Error::config("num_projections", "must be at least 1"));
    }
    if let Some(th) = directions.iter().find(|th| th.len() != mu.dim()) {
        return Err(Error::DimensionMismatch {
            expected: mu.dim(),
            found: th.len(),
        });
    }
    let project = |m: &DiscreteMeasure, th: &[f64]| -> Vec<(f64, f64)> {
        m.rows()
            .zip(m.weights())
            .map(|(y, &w)| (dot(y, th), w))
            .collect()
    };
    let values = directions
        .par_iter()
        .map(|th| one_dim_w1(&project(mu, th), &project(nu, th)))
        .collect::<Result<Vec<f64>>>()?;
    Ok(DistanceEstimate::from_values(values, echo))
}

fn check_spherical(m: &DiscreteMeasure) -> Result<()> {
    if m.is_spherical() {
        Ok(())
    } else {
        m.clone().into_spherical().map(|_| ())
    }
}

/// Points in the ambient space of the spherical trees for `mode`.
pub(crate) fn spherical_mode_points(points: &[f64], dim: usize, mode: StswMode) -> Vec<f64> {
    match mode {
        StswMode::Plain => points.to_vec(),
        StswMode::Spatial => spherical_lift_points(points, dim),
    }
}

/// Spherical tree-sliced distance with trees sampled from `cfg`.
pub fn estimate_stsw(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    cfg: &DistanceConfig,
    mode: StswMode,
) -> Result<DistanceEstimate> {
    check_pair(mu, nu)?;
    let trees = sample_spherical_trees(cfg, spherical_tree_dim(mu.dim(), mode))?;
    estimate_stsw_with_trees(mu, nu, cfg, mode, &trees)
}

/// Spherical tree-sliced distance on a fixed tree set.
pub fn estimate_stsw_with_trees(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    cfg: &DistanceConfig,
    mode: StswMode,
    trees: &[SphericalTree],
) -> Result<DistanceEstimate> {
    check_pair(mu, nu)?;
    check_spherical(mu)?;
    check_spherical(nu)?;
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
    let mu_pts = spherical_mode_points(mu.points(), mu.dim(), mode);
    let nu_pts = spherical_mode_points(nu.points(), nu.dim(), mode);
    let values: Vec<f64> = trees
        .par_iter()
        .map(|tree| spherical_tree_value(tree, &mu_pts, mu.weights(), &nu_pts, nu.weights()))
        .collect();
    Ok(DistanceEstimate::from_values(values, cfg))
}

/// Applies the spatial map of `cfg` (helper for callers comparing mapped measures).
pub fn spatial_mapped(m: &DiscreteMeasure, cfg: &DistanceConfig) -> Result<DiscreteMeasure> {
    m.with_points(spatial_map(m.points(), &cfg.spatial_map)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{IsometryEd, SphericalTree};
    use crate::projection::{project_spherical, CoordinateRange};
    use crate::tree_ot::spider_w1;
    use crate::tree_ot::ProjectedTreeMeasure;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn gaussian_measure(n: usize, d: usize, shift: f64, seed: u64) -> DiscreteMeasure {
        let mut rng = stream_rng(seed, 99);
        let pts: Vec<f64> = (0..n * d)
            .map(|_| shift + rng.sample::<f64, _>(StandardNormal))
            .collect();
        let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
        let s: f64 = w.iter().sum();
        DiscreteMeasure::new(pts, d, w.iter().map(|v| v / s).collect()).unwrap()
    }

    fn sphere_measure(n: usize, m: usize, seed: u64) -> DiscreteMeasure {
        let mut rng = stream_rng(seed, 98);
        let mut pts = Vec::new();
        for _ in 0..n {
            pts.extend(sample_unit_sphere(m, &mut rng).unwrap());
        }
        DiscreteMeasure::uniform_spherical(pts, m).unwrap()
    }

    fn all_cfg() -> DistanceConfig {
        DistanceConfig {
            num_trees: 20,
            lines_per_tree: 3,
            radius: 0.5,
            spatial_map: SpatialMapConfig::CUBIC,
            seed: 5,
            ..DistanceConfig::default()
        }
    }

    #[test]
    fn identical_measures_give_exact_zero() {
        let mu = gaussian_measure(30, 3, 0.0, 1);
        let cfg = all_cfg();
        for mode in TswMode::ALL {
            let e = estimate_tsw(&mu, &mu.clone(), &cfg, mode).unwrap();
            assert_eq!(e.value, 0.0, "{mode:?}");
        }
        let s = sphere_measure(25, 3, 2);
        for mode in [StswMode::Plain, StswMode::Spatial] {
            assert_eq!(estimate_stsw(&s, &s, &cfg, mode).unwrap().value, 0.0);
        }
        assert_eq!(estimate_sw(&mu, &mu, 10, 1).unwrap().value, 0.0);
    }

    #[test]
    fn value_is_mean_of_trees() {
        let mu = gaussian_measure(20, 2, 0.0, 3);
        let nu = gaussian_measure(15, 2, 1.0, 4);
        let e = estimate_tsw(&mu, &nu, &all_cfg(), TswMode::Circular).unwrap();
        let mean = e.per_tree_values.iter().sum::<f64>() / e.per_tree_values.len() as f64;
        assert!((e.value - mean).abs() < 1e-12);
        assert!(e.per_tree_values.iter().all(|v| *v > 0.0));
    }

    #[test]
    fn single_line_db_linear_equals_sw() {
        let mu = gaussian_measure(25, 4, 0.0, 5);
        let nu = gaussian_measure(30, 4, 0.5, 6);
        let cfg = DistanceConfig {
            num_trees: 15,
            lines_per_tree: 1,
            ..all_cfg()
        };
        let trees = sample_trees(&cfg, 4).unwrap();
        let tsw = estimate_tsw_with_trees(&mu, &nu, &cfg, TswMode::DbLinear, &trees).unwrap();
        let dirs: Vec<Vec<f64>> = trees.iter().map(|t| t.direction(0).to_vec()).collect();
        let sw = estimate_sw_with_directions(&mu, &nu, &dirs, &cfg).unwrap();
        for (a, b) in tsw.per_tree_values.iter().zip(&sw.per_tree_values) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn r0_fast_path_matches_general_circular() {
        let mu = gaussian_measure(40, 3, 0.0, 7);
        let nu = gaussian_measure(35, 3, 0.3, 8);
        let cfg = DistanceConfig {
            radius: 0.0,
            ..all_cfg()
        };
        let a = estimate_tsw(&mu, &nu, &cfg, TswMode::CircularR0).unwrap();
        let b = estimate_tsw(&mu, &nu, &cfg, TswMode::Circular).unwrap();
        for (x, y) in a.per_tree_values.iter().zip(&b.per_tree_values) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn paired_isometry_invariance() {
        let mut rng = stream_rng(9, 0);
        let mu = gaussian_measure(20, 3, 0.0, 10);
        let nu = gaussian_measure(20, 3, 1.0, 11);
        let cfg = all_cfg();
        let trees = sample_trees(&cfg, 3).unwrap();
        let g = IsometryEd::random(3, 1.0, &mut rng);
        let gt: Vec<_> = trees.iter().map(|t| g.apply_tree(t).unwrap()).collect();
        let (gmu, gnu) = (g.apply_measure(&mu).unwrap(), g.apply_measure(&nu).unwrap());
        for mode in [TswMode::DbLinear, TswMode::Circular, TswMode::CircularR0] {
            let a = estimate_tsw_with_trees(&mu, &nu, &cfg, mode, &trees).unwrap();
            let b = estimate_tsw_with_trees(&gmu, &gnu, &cfg, mode, &gt).unwrap();
            for (x, y) in a.per_tree_values.iter().zip(&b.per_tree_values) {
                assert!((x - y).abs() < 1e-9, "{mode:?}");
            }
        }
        // spatial: invariance holds in the mapped space
        let (hmu, hnu) = (
            spatial_mapped(&mu, &cfg).unwrap(),
            spatial_mapped(&nu, &cfg).unwrap(),
        );
        let a = estimate_tsw_with_trees(&mu, &nu, &cfg, TswMode::Spatial, &trees).unwrap();
        let b = estimate_tsw_with_trees(
            &g.apply_measure(&hmu).unwrap(),
            &g.apply_measure(&hnu).unwrap(),
            &cfg,
            TswMode::DbLinear,
            &gt,
        )
        .unwrap();
        for (x, y) in a.per_tree_values.iter().zip(&b.per_tree_values) {
            assert!((x - y).abs() < 1e-9 * (1.0 + x.abs()));
        }
    }

    #[test]
    fn sw_examples() {
        let d1 = |x: f64| DiscreteMeasure::uniform(vec![x], 1).unwrap();
        let e = estimate_sw(&d1(0.0), &d1(2.5), 7, 3).unwrap();
        assert!((e.value - 2.5).abs() < 1e-15);
        let a = DiscreteMeasure::uniform(vec![0.0, 0.0, 0.0], 3).unwrap();
        let b = DiscreteMeasure::uniform(vec![1.0, 2.0, 2.0], 3).unwrap();
        assert!(estimate_sw(&a, &b, 200, 1).unwrap().value <= 3.0);
        assert!(estimate_sw(&a, &b, 0, 1).is_err());
    }

    #[test]
    fn stsw_single_edge_is_one_dim() {
        let mu = sphere_measure(15, 3, 12);
        let nu = sphere_measure(12, 3, 13);
        let cfg = DistanceConfig {
            num_trees: 5,
            lines_per_tree: 1,
            ..all_cfg()
        };
        let trees = sample_spherical_trees(&cfg, 2).unwrap();
        let e = estimate_stsw_with_trees(&mu, &nu, &cfg, StswMode::Plain, &trees).unwrap();
        for (tree, v) in trees.iter().zip(&e.per_tree_values) {
            let a: Vec<(f64, f64)> = project_spherical(&mu, tree)
                .unwrap()
                .into_iter()
                .zip(mu.weights().iter().copied())
                .collect();
            let b: Vec<(f64, f64)> = project_spherical(&nu, tree)
                .unwrap()
                .into_iter()
                .zip(nu.weights().iter().copied())
                .collect();
            assert!((one_dim_w1(&a, &b).unwrap() - v).abs() < 1e-12);
            let pa = ProjectedTreeMeasure::new(vec![a], CoordinateRange::SphericalZeroPi).unwrap();
            let pb = ProjectedTreeMeasure::new(vec![b], CoordinateRange::SphericalZeroPi).unwrap();
            assert!((spider_w1(&pa, &pb).unwrap() - v).abs() < 1e-12);
        }
    }

    #[test]
    fn stsw_rotation_invariance() {
        let mut rng = stream_rng(14, 0);
        let mu = sphere_measure(20, 3, 15);
        let nu = sphere_measure(20, 3, 16);
        let cfg = all_cfg();
        let trees = sample_spherical_trees(&cfg, 2).unwrap();
        let q = IsometryEd::random(3, 0.0, &mut rng);
        let qt: Vec<SphericalTree> = trees
            .iter()
            .map(|t| q.apply_spherical_tree(t).unwrap())
            .collect();
        let a = estimate_stsw_with_trees(&mu, &nu, &cfg, StswMode::Plain, &trees).unwrap();
        let b = estimate_stsw_with_trees(
            &q.apply_measure(&mu).unwrap().into_spherical().unwrap(),
            &q.apply_measure(&nu).unwrap().into_spherical().unwrap(),
            &cfg,
            StswMode::Plain,
            &qt,
        )
        .unwrap();
        for (x, y) in a.per_tree_values.iter().zip(&b.per_tree_values) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn thread_count_does_not_change_values() {
        let mu = gaussian_measure(50, 3, 0.0, 17);
        let nu = gaussian_measure(50, 3, 0.7, 18);
        let cfg = all_cfg();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| estimate_tsw(&mu, &nu, &cfg, TswMode::Spatial).unwrap())
        };
        assert_eq!(run(1).per_tree_values, run(4).per_tree_values);
    }

    #[test]
    fn config_validation() {
        let mut cfg = DistanceConfig::default();
        assert!(cfg.validate(Some(2)).is_ok());
        cfg.direction_scheme = DirectionScheme::Orthogonal;
        assert!(cfg.validate(Some(2)).is_err());
        let bad = DistanceConfig {
            splitting_temperature: 0.0,
            ..DistanceConfig::default()
        };
        assert!(bad.validate(None).is_err());
        let a = DiscreteMeasure::uniform(vec![0.0, 1.0], 2).unwrap();
        let b = DiscreteMeasure::uniform(vec![0.0, 1.0, 2.0], 3).unwrap();
        assert!(estimate_tsw(&a, &b, &DistanceConfig::default(), TswMode::Circular).is_err());
    }
}
