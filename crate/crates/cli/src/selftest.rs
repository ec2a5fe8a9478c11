//! Property suites run by the `selftest` command: closed form vs LP oracle, metric
//! axioms, paired-isometry invariance, reductions and gradient checks.
//!
//! The spider solver is injected so a deliberately broken variant can be shown to fail.

use std::io::Write;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use treeslice::geometry::{sample_unit_sphere, stream_rng, IsometryEd};
use treeslice::gradients::{finite_diff_check, finite_diff_check_spherical};
use treeslice::projection::{
    project_circular, project_linear, project_spherical, spherical_spatial_map, spatial_map_measure, CoordinateMatrix,
    CoordinateRange, SpatialMapConfig,
};
use treeslice::splitting::{splitting_euclidean, splitting_spherical, SplitDistance};
use treeslice::tree_ot::build_projected_measure;
use treeslice::{
    estimate_stsw_with_trees, estimate_sw_with_directions, estimate_tsw, estimate_tsw_with_trees, lp_tree_w1_oracle,
    sample_spherical_trees, sample_trees, spider_w1, DiscreteMeasure, DistanceConfig, ProjectedTreeMeasure,
    SphericalTree, StswMode, TreeSystem, TswMode,
};

use crate::config::{LoadedConfig, SelftestSection};
use crate::output::{num, CsvOutput};
use crate::run::RunError;

pub const ORACLE_TOL: f64 = 1e-9;
pub const METRIC_TOL: f64 = 1e-10;
pub const INVARIANCE_TOL: f64 = 1e-9;
pub const SW_REDUCTION_TOL: f64 = 1e-12;
pub const R0_REDUCTION_TOL: f64 = 1e-10;
pub const EUCLID_FD_TOL: f64 = 1e-4;
pub const SPHERICAL_FD_TOL: f64 = 1e-3;
pub const EUCLID_FD_STEP: f64 = 1e-5;
/// Below 1e-6 round-off dominates; above it the second-order truncation of the
/// arccos terms exceeds the tolerance.
pub const SPHERICAL_FD_STEP: f64 = 1e-6;

pub type SpiderFn = fn(&ProjectedTreeMeasure, &ProjectedTreeMeasure) -> treeslice::Result<f64>;

/// A spider solver whose prefix sums add `ν` mass instead of subtracting it.
pub fn sign_flipped_spider(mu: &ProjectedTreeMeasure, nu: &ProjectedTreeMeasure) -> treeslice::Result<f64> {
    let mut total = 0.0;
    for i in 0..mu.num_lines() {
        let root = -(mu.line_mass(i) - nu.line_mass(i));
        let mut entries: Vec<(f64, f64)> = mu.line(i).to_vec();
        entries.extend(nu.line(i).iter().map(|&(t, m)| (t, m)));
        entries.push((0.0, root));
        entries.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut prefix = 0.0;
        for w in entries.windows(2) {
            prefix += w[0].1;
            total += prefix.abs() * (w[1].0 - w[0].0);
        }
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub name: &'static str,
    pub cases: usize,
    pub failures: usize,
    pub max_error: f64,
    pub tolerance: f64,
    /// First failure, for diagnostics.
    pub note: Option<String>,
}

impl SuiteReport {
    fn new(name: &'static str, tolerance: f64) -> Self {
        Self {
            name,
            cases: 0,
            failures: 0,
            max_error: 0.0,
            tolerance,
            note: None,
        }
    }

    pub fn passed(&self) -> bool {
        self.failures == 0 && self.cases > 0
    }

    fn record(&mut self, error: f64, tol: f64, what: impl FnOnce() -> String) {
        self.cases += 1;
        let error = if error.is_nan() { f64::INFINITY } else { error };
        self.max_error = self.max_error.max(error);
        if !(error <= tol) {
            self.failures += 1;
            if self.note.is_none() {
                self.note = Some(what());
            }
        }
    }

    fn fail(&mut self, what: String) {
        self.cases += 1;
        self.failures += 1;
        self.max_error = f64::INFINITY;
        self.note.get_or_insert(what);
    }
}

fn random_weights(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
    let s: f64 = w.iter().sum();
    w.iter().map(|v| v / s).collect()
}

fn gaussian_measure(n: usize, d: usize, shift: f64, rng: &mut ChaCha8Rng) -> DiscreteMeasure {
    let pts = (0..n * d).map(|_| shift + rng.sample::<f64, _>(StandardNormal)).collect();
    DiscreteMeasure::new(pts, d, random_weights(n, rng)).expect("valid measure")
}

fn sphere_measure(n: usize, m: usize, rng: &mut ChaCha8Rng) -> DiscreteMeasure {
    let mut pts = Vec::with_capacity(n * m);
    for _ in 0..n {
        pts.extend(sample_unit_sphere(m, rng).expect("m >= 1"));
    }
    DiscreteMeasure::spherical(pts, m, random_weights(n, rng)).expect("unit rows")
}

/// Random spider pair: up to 4 lines, up to 8 points per line and side, mixed-sign or
/// ray-only coordinates, with some coordinates on a coarse grid to force ties.
pub fn random_spider_pair(rng: &mut ChaCha8Rng) -> (ProjectedTreeMeasure, ProjectedTreeMeasure) {
    let k = rng.random_range(1..=4);
    let ray = rng.random_bool(0.5);
    let grid = rng.random_bool(0.3);
    let range = if ray { CoordinateRange::NonnegRay } else { CoordinateRange::RealLine };
    let side = |rng: &mut ChaCha8Rng| {
        let mut lines: Vec<Vec<(f64, f64)>> = (0..k)
            .map(|_| {
                (0..rng.random_range(0..=8))
                    .map(|_| {
                        let t = if grid {
                            rng.random_range(-8i32..=8) as f64 / 4.0
                        } else {
                            rng.random_range(-3.0..3.0)
                        };
                        (if ray { t.abs() } else { t }, rng.random_range(0.05..1.0))
                    })
                    .collect()
            })
            .collect();
        if lines.iter().all(|l| l.is_empty()) {
            lines[0].push((rng.random_range(0.0..3.0), 1.0));
        }
        let total: f64 = lines.iter().flatten().map(|p| p.1).sum();
        lines.iter_mut().flatten().for_each(|p| p.1 /= total);
        ProjectedTreeMeasure::new(lines, range).expect("normalised")
    };
    let a = side(rng);
    let b = side(rng);
    (a, b)
}

/// Closed-form spider W1 against the LP oracle.
pub fn oracle_suite(spider: SpiderFn, instances: usize, seed: u64) -> SuiteReport {
    let mut rep = SuiteReport::new("oracle", ORACLE_TOL);
    let mut rng = stream_rng(seed, 1);
    for i in 0..instances {
        let (a, b) = random_spider_pair(&mut rng);
        match (spider(&a, &b), lp_tree_w1_oracle(&a, &b)) {
            (Ok(x), Ok(y)) => rep.record((x - y).abs(), ORACLE_TOL, || format!("instance {i}: {x} vs LP {y}")),
            (x, y) => rep.fail(format!("instance {i}: {x:?} / {y:?}")),
        }
    }
    rep
}

/// Every mode the metric and invariance suites cover.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnyMode {
    Euclid(TswMode),
    Sphere(StswMode),
}

impl AnyMode {
    pub const ALL: [AnyMode; 6] = [
        AnyMode::Euclid(TswMode::DbLinear),
        AnyMode::Euclid(TswMode::Spatial),
        AnyMode::Euclid(TswMode::Circular),
        AnyMode::Euclid(TswMode::CircularR0),
        AnyMode::Sphere(StswMode::Plain),
        AnyMode::Sphere(StswMode::Spatial),
    ];

    pub fn name(self) -> &'static str {
        match self {
            AnyMode::Euclid(m) => m.name(),
            AnyMode::Sphere(m) => m.name(),
        }
    }
}

fn suite_cfg(seed: u64) -> DistanceConfig {
    DistanceConfig {
        num_trees: 4,
        lines_per_tree: 3,
        radius: 0.5,
        root_std: 0.5,
        seed,
        spatial_map: SpatialMapConfig::CUBIC,
        ..DistanceConfig::default()
    }
}

/// Per-tree distance assembled from the public projection and splitting steps and `spider`.
fn euclid_tree_value(
    spider: SpiderFn,
    mode: TswMode,
    cfg: &DistanceConfig,
    tree: &TreeSystem,
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
) -> treeslice::Result<f64> {
    let side = |m: &DiscreteMeasure| -> treeslice::Result<ProjectedTreeMeasure> {
        let m = match mode {
            TswMode::Spatial => spatial_map_measure(m, &cfg.spatial_map)?,
            _ => m.clone(),
        };
        let (coords, split) = match mode {
            TswMode::DbLinear | TswMode::Spatial => (project_linear(&m, tree)?, SplitDistance::Line),
            TswMode::Circular => (
                project_circular(&m, tree, cfg.radius)?,
                SplitDistance::Circular { radius: cfg.radius },
            ),
            TswMode::CircularR0 => (project_circular(&m, tree, 0.0)?, SplitDistance::Circular { radius: 0.0 }),
        };
        let alpha = splitting_euclidean(&m, tree, split, cfg.splitting_sign, cfg.splitting_temperature)?;
        build_projected_measure(&m, &coords, &alpha)
    };
    spider(&side(mu)?, &side(nu)?)
}

fn sphere_tree_value(
    spider: SpiderFn,
    mode: StswMode,
    tree: &SphericalTree,
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
) -> treeslice::Result<f64> {
    let side = |m: &DiscreteMeasure| -> treeslice::Result<ProjectedTreeMeasure> {
        let m = match mode {
            StswMode::Spatial => spherical_spatial_map(m)?,
            StswMode::Plain => m.clone(),
        };
        let coords = CoordinateMatrix::shared(
            project_spherical(&m, tree)?,
            tree.num_edges(),
            CoordinateRange::SphericalZeroPi,
        )?;
        build_projected_measure(&m, &coords, &splitting_spherical(&m, tree)?)
    };
    spider(&side(mu)?, &side(nu)?)
}

/// Pinned trees of one mode, and a distance over them built with `spider`.
struct PinnedDistance {
    mode: AnyMode,
    cfg: DistanceConfig,
    euclid: Vec<TreeSystem>,
    sphere: Vec<SphericalTree>,
}

impl PinnedDistance {
    fn new(mode: AnyMode, seed: u64) -> treeslice::Result<Self> {
        let cfg = suite_cfg(seed);
        let (euclid, sphere) = match mode {
            AnyMode::Euclid(_) => (sample_trees(&cfg, 3)?, Vec::new()),
            AnyMode::Sphere(m) => (Vec::new(), sample_spherical_trees(&cfg, treeslice::distances::spherical_tree_dim(3, m))?),
        };
        Ok(Self { mode, cfg, euclid, sphere })
    }

    fn measure(&self, rng: &mut ChaCha8Rng) -> DiscreteMeasure {
        let n = rng.random_range(1..=6);
        match self.mode {
            AnyMode::Euclid(_) => {
                let shift = rng.random_range(-1.0..1.0);
                gaussian_measure(n, 3, shift, rng)
            }
            AnyMode::Sphere(_) => sphere_measure(n, 3, rng),
        }
    }

    fn value(&self, spider: SpiderFn, mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> treeslice::Result<f64> {
        let per: treeslice::Result<Vec<f64>> = match self.mode {
            AnyMode::Euclid(m) => self.euclid.iter().map(|t| euclid_tree_value(spider, m, &self.cfg, t, mu, nu)).collect(),
            AnyMode::Sphere(m) => self.sphere.iter().map(|t| sphere_tree_value(spider, m, t, mu, nu)).collect(),
        };
        let per = per?;
        Ok(per.iter().sum::<f64>() / per.len() as f64)
    }

    fn library_value(&self, mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> treeslice::Result<f64> {
        Ok(match self.mode {
            AnyMode::Euclid(m) => estimate_tsw_with_trees(mu, nu, &self.cfg, m, &self.euclid)?.value,
            AnyMode::Sphere(m) => estimate_stsw_with_trees(mu, nu, &self.cfg, m, &self.sphere)?.value,
        })
    }
}

/// Symmetry, triangle inequality and `d(μ, μ) = 0` on pinned trees for every mode; the
/// assembled distance must also agree with the library estimator.
pub fn metric_suite(spider: SpiderFn, triples: usize, seed: u64) -> SuiteReport {
    let mut rep = SuiteReport::new("metric", METRIC_TOL);
    for (mi, mode) in AnyMode::ALL.into_iter().enumerate() {
        let pinned = match PinnedDistance::new(mode, seed ^ (mi as u64 + 1)) {
            Ok(p) => p,
            Err(e) => {
                rep.fail(format!("{}: {e}", mode.name()));
                continue;
            }
        };
        let mut rng = stream_rng(seed, 20 + mi as u64);
        for t in 0..triples {
            let (a, b, c) = (pinned.measure(&mut rng), pinned.measure(&mut rng), pinned.measure(&mut rng));
            let vals = (|| -> treeslice::Result<[f64; 6]> {
                Ok([
                    pinned.value(spider, &a, &b)?,
                    pinned.value(spider, &b, &a)?,
                    pinned.value(spider, &a, &c)?,
                    pinned.value(spider, &c, &b)?,
                    pinned.value(spider, &a, &a)?,
                    pinned.library_value(&a, &b)?,
                ])
            })();
            let [ab, ba, ac, cb, aa, lib] = match vals {
                Ok(v) => v,
                Err(e) => {
                    rep.fail(format!("{} triple {t}: {e}", mode.name()));
                    continue;
                }
            };
            let what = || format!("{} triple {t}: d(a,b)={ab} d(b,a)={ba} d(a,c)+d(c,b)={} d(a,a)={aa} lib={lib}", mode.name(), ac + cb);
            rep.record((ab - ba).abs(), METRIC_TOL, what);
            rep.record((ab - ac - cb).max(0.0), METRIC_TOL, what);
            rep.record(if aa == 0.0 { 0.0 } else { f64::INFINITY }, METRIC_TOL, what);
            rep.record((ab - lib).abs(), ORACLE_TOL * (1.0 + lib.abs()), what);
        }
    }
    rep
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// Paired transforms: E(d) for the Euclidean modes (the spatial mode in its mapped
/// space), O(d+1) for the spherical ones (the spatial mode in its lifted space).
pub fn invariance_suite(draws: usize, seed: u64) -> SuiteReport {
    let mut rep = SuiteReport::new("invariance", INVARIANCE_TOL);
    let mut rng = stream_rng(seed, 40);
    for i in 0..draws {
        let out = (|| -> treeslice::Result<Vec<(&'static str, f64)>> {
            let cfg = DistanceConfig {
                seed: seed.wrapping_add(1000 + i as u64),
                ..suite_cfg(0)
            };
            let mut errs = Vec::new();
            let (n1, n2) = (rng.random_range(1..=8), rng.random_range(1..=8));
            let mu = gaussian_measure(n1, 3, 0.0, &mut rng);
            let nu = gaussian_measure(n2, 3, 0.5, &mut rng);
            let trees = sample_trees(&cfg, 3)?;
            let g = IsometryEd::random(3, 1.0, &mut rng);
            let gt = trees.iter().map(|t| g.apply_tree(t)).collect::<treeslice::Result<Vec<_>>>()?;
            let (gmu, gnu) = (g.apply_measure(&mu)?, g.apply_measure(&nu)?);
            for mode in [TswMode::DbLinear, TswMode::Circular, TswMode::CircularR0] {
                let a = estimate_tsw_with_trees(&mu, &nu, &cfg, mode, &trees)?;
                let b = estimate_tsw_with_trees(&gmu, &gnu, &cfg, mode, &gt)?;
                errs.push((mode.name(), max_abs_diff(&a.per_tree_values, &b.per_tree_values)));
            }
            let (hmu, hnu) = (spatial_map_measure(&mu, &cfg.spatial_map)?, spatial_map_measure(&nu, &cfg.spatial_map)?);
            let a = estimate_tsw_with_trees(&mu, &nu, &cfg, TswMode::Spatial, &trees)?;
            let b = estimate_tsw_with_trees(&g.apply_measure(&hmu)?, &g.apply_measure(&hnu)?, &cfg, TswMode::DbLinear, &gt)?;
            errs.push(("spatial", max_abs_diff(&a.per_tree_values, &b.per_tree_values)));

            let smu = sphere_measure(n1, 3, &mut rng);
            let snu = sphere_measure(n2, 3, &mut rng);
            let strees = sample_spherical_trees(&cfg, 2)?;
            let q = IsometryEd::random(3, 0.0, &mut rng);
            let qt = strees.iter().map(|t| q.apply_spherical_tree(t)).collect::<treeslice::Result<Vec<_>>>()?;
            let a = estimate_stsw_with_trees(&smu, &snu, &cfg, StswMode::Plain, &strees)?;
            let b = estimate_stsw_with_trees(
                &q.apply_measure(&smu)?.into_spherical()?,
                &q.apply_measure(&snu)?.into_spherical()?,
                &cfg,
                StswMode::Plain,
                &qt,
            )?;
            errs.push(("stsw", max_abs_diff(&a.per_tree_values, &b.per_tree_values)));

            let ltrees = sample_spherical_trees(&cfg, 3)?;
            let q4 = IsometryEd::random(4, 0.0, &mut rng);
            let qt4 = ltrees.iter().map(|t| q4.apply_spherical_tree(t)).collect::<treeslice::Result<Vec<_>>>()?;
            let (lmu, lnu) = (spherical_spatial_map(&smu)?, spherical_spatial_map(&snu)?);
            let a = estimate_stsw_with_trees(&smu, &snu, &cfg, StswMode::Spatial, &ltrees)?;
            let b = estimate_stsw_with_trees(
                &q4.apply_measure(&lmu)?.into_spherical()?,
                &q4.apply_measure(&lnu)?.into_spherical()?,
                &cfg,
                StswMode::Plain,
                &qt4,
            )?;
            errs.push(("spatial_stsw", max_abs_diff(&a.per_tree_values, &b.per_tree_values)));
            Ok(errs)
        })();
        match out {
            Ok(errs) => {
                for (name, e) in errs {
                    rep.record(e, INVARIANCE_TOL, || format!("draw {i} {name}: per-tree difference {e}"));
                }
            }
            Err(e) => rep.fail(format!("draw {i}: {e}")),
        }
    }
    rep
}

/// `k = 1` linear trees reproduce sliced W1 per line; `circular_r0` reproduces
/// `circular` at `r = 0` on the same trees.
pub fn reduction_suite(draws: usize, seed: u64) -> SuiteReport {
    let mut rep = SuiteReport::new("reduction", SW_REDUCTION_TOL);
    let mut rng = stream_rng(seed, 60);
    for i in 0..draws {
        let out = (|| -> treeslice::Result<(f64, f64)> {
            let d = rng.random_range(1..=5);
            let mu = gaussian_measure(rng.random_range(1..=10), d, 0.0, &mut rng);
            let nu = gaussian_measure(rng.random_range(1..=10), d, 0.3, &mut rng);
            let cfg = DistanceConfig {
                num_trees: 8,
                lines_per_tree: 1,
                root_std: 1.0,
                seed: seed.wrapping_add(i as u64),
                ..DistanceConfig::default()
            };
            let trees = sample_trees(&cfg, d)?;
            let dirs: Vec<Vec<f64>> = trees.iter().map(|t| t.direction(0).to_vec()).collect();
            let tsw = estimate_tsw_with_trees(&mu, &nu, &cfg, TswMode::DbLinear, &trees)?;
            let sw = estimate_sw_with_directions(&mu, &nu, &dirs, &cfg)?;
            let e_sw = max_abs_diff(&tsw.per_tree_values, &sw.per_tree_values);
            let cfg0 = DistanceConfig {
                lines_per_tree: 4,
                radius: 0.0,
                ..cfg
            };
            let circ = estimate_tsw(&mu, &nu, &cfg0, TswMode::Circular)?;
            let r0 = estimate_tsw(&mu, &nu, &cfg0, TswMode::CircularR0)?;
            Ok((e_sw, max_abs_diff(&circ.per_tree_values, &r0.per_tree_values)))
        })();
        match out {
            Ok((e_sw, e_r0)) => {
                rep.record(e_sw, SW_REDUCTION_TOL, || format!("draw {i}: k=1 vs SW differ by {e_sw}"));
                rep.record(e_r0, R0_REDUCTION_TOL, || format!("draw {i}: r0 vs circular(0) differ by {e_r0}"));
            }
            Err(e) => rep.fail(format!("draw {i}: {e}")),
        }
    }
    rep
}

/// Analytic gradients against central differences, cycling through every mode.
pub fn gradient_suite(instances: usize, seed: u64) -> SuiteReport {
    let mut rep = SuiteReport::new("gradients", EUCLID_FD_TOL);
    let mut rng = stream_rng(seed, 80);
    for i in 0..instances {
        let mode = AnyMode::ALL[i % AnyMode::ALL.len()];
        let cfg = DistanceConfig {
            num_trees: 3,
            seed: seed.wrapping_add(5000 + i as u64),
            ..suite_cfg(0)
        };
        let (n1, n2) = (rng.random_range(2..=8), rng.random_range(2..=8));
        let (report, tol) = match mode {
            AnyMode::Euclid(m) => {
                let mu = gaussian_measure(n1, 3, 0.0, &mut rng);
                let nu = gaussian_measure(n2, 3, 0.5, &mut rng);
                (finite_diff_check(&mu, &nu, &cfg, m, EUCLID_FD_STEP), EUCLID_FD_TOL)
            }
            AnyMode::Sphere(m) => {
                let mu = sphere_measure(n1, 3, &mut rng);
                let nu = sphere_measure(n2, 3, &mut rng);
                (finite_diff_check_spherical(&mu, &nu, &cfg, m, SPHERICAL_FD_STEP), SPHERICAL_FD_TOL)
            }
        };
        match report {
            Ok(r) if r.checked > 0 => rep.record(r.max_rel_error, tol, || {
                format!("instance {i} ({}): relative error {}", mode.name(), r.max_rel_error)
            }),
            Ok(_) => rep.fail(format!("instance {i} ({}): every entry was flagged", mode.name())),
            Err(e) => rep.fail(format!("instance {i} ({}): {e}", mode.name())),
        }
    }
    rep
}

/// All suites, in order.
pub fn run_suites(spider: SpiderFn, sizes: &SelftestSection, seed: u64) -> Vec<SuiteReport> {
    vec![
        oracle_suite(spider, sizes.oracle_instances, seed),
        metric_suite(spider, sizes.metric_triples, seed),
        invariance_suite(sizes.invariance_draws, seed),
        reduction_suite(sizes.invariance_draws, seed),
        gradient_suite(sizes.gradient_instances, seed),
    ]
}

pub const SELFTEST_HEADER: [&str; 6] = ["suite", "cases", "failures", "max_error", "tolerance", "status"];

pub fn summary_table(reports: &[SuiteReport]) -> String {
    let mut s = format!("{:<12} {:>7} {:>9} {:>12} {:>10}  status\n", "suite", "cases", "failures", "max_error", "tolerance");
    for r in reports {
        s += &format!(
            "{:<12} {:>7} {:>9} {:>12.3e} {:>10.0e}  {}\n",
            r.name,
            r.cases,
            r.failures,
            r.max_error,
            r.tolerance,
            if r.passed() { "pass" } else { "FAIL" }
        );
        if let Some(n) = &r.note {
            s += &format!("  first failure: {n}\n");
        }
    }
    s
}

pub(crate) fn run(loaded: &LoadedConfig) -> Result<bool, RunError> {
    let c = &loaded.config;
    let sizes = c.selftest.clone().unwrap_or_default();
    let reports = run_suites(spider_w1, &sizes, c.seed);
    let mut out = CsvOutput::create(c.output.as_deref(), c, &SELFTEST_HEADER).map_err(|e| RunError::Runtime(e.to_string()))?;
    for r in &reports {
        out.row([
            r.name.to_string(),
            r.cases.to_string(),
            r.failures.to_string(),
            num(r.max_error),
            num(r.tolerance),
            (if r.passed() { "pass" } else { "fail" }).to_string(),
        ])
        .map_err(|e| RunError::Runtime(e.to_string()))?;
    }
    out.finish().map_err(|e| RunError::Runtime(e.to_string()))?;
    let _ = std::io::stderr().write_all(summary_table(&reports).as_bytes());
    Ok(reports.iter().all(SuiteReport::passed))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suites_pass_on_the_real_solver() {
        let sizes = SelftestSection {
            oracle_instances: 200,
            metric_triples: 10,
            invariance_draws: 10,
            gradient_instances: 12,
        };
        for r in run_suites(spider_w1, &sizes, 7) {
            assert!(r.passed(), "{}", summary_table(&[r.clone()]));
        }
    }

    #[test]
    fn sign_flip_mutant_is_caught() {
        let oracle = oracle_suite(sign_flipped_spider, 100, 3);
        assert!(!oracle.passed());
        assert!(oracle.failures > 50);
        assert!(!metric_suite(sign_flipped_spider, 5, 3).passed());
    }

    #[test]
    fn pass_set_is_seed_independent() {
        let sizes = SelftestSection {
            oracle_instances: 100,
            metric_triples: 5,
            invariance_draws: 5,
            gradient_instances: 6,
        };
        let pass = |seed| run_suites(spider_w1, &sizes, seed).iter().map(SuiteReport::passed).collect::<Vec<_>>();
        let p = pass(1);
        assert_eq!(p, pass(2));
        assert_eq!(p, pass(3));
        assert!(p.iter().all(|x| *x));
    }

    #[test]
    fn random_pairs_cover_both_ranges() {
        let mut rng = stream_rng(0, 0);
        let mut seen = (false, false);
        for _ in 0..50 {
            let (a, _) = random_spider_pair(&mut rng);
            match a.range() {
                CoordinateRange::NonnegRay => seen.0 = true,
                _ => seen.1 = true,
            }
            assert!(a.num_lines() <= 4);
            assert!((0..a.num_lines()).all(|i| a.line(i).len() <= 9));
        }
        assert!(seen.0 && seen.1);
    }
}
