//! Runtime harness: median wall-clock of the estimators over a method × n × d grid.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use rand_distr::{Distribution, StandardNormal};
use treeslice::geometry::stream_rng;
use treeslice::projection::SpatialMapConfig;
use treeslice::{estimate_tsw, DiscreteMeasure, DistanceConfig, TswMode};

use crate::config::{BenchSection, LoadedConfig};
use crate::output::{num, CsvOutput};
use crate::run::{classify, RunError};

pub const BENCH_HEADER: [&str; 11] = [
    "method",
    "n",
    "d",
    "num_trees",
    "lines_per_tree",
    "radius",
    "gamma",
    "median_seconds",
    "peak_rss_bytes",
    "repeats",
    "status",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellStatus {
    Ok,
    /// Estimated working set above the memory limit; not run.
    Skipped,
    /// The estimator failed or panicked.
    Failed,
}

impl CellStatus {
    pub fn name(self) -> &'static str {
        match self {
            CellStatus::Ok => "ok",
            CellStatus::Skipped => "skipped",
            CellStatus::Failed => "failed",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRecord {
    pub method: TswMode,
    pub n: usize,
    pub d: usize,
    pub num_trees: usize,
    pub lines_per_tree: usize,
    pub radius: Option<f64>,
    pub gamma: Option<f64>,
    pub median_seconds: f64,
    pub peak_rss_bytes: Option<u64>,
    pub repeats: usize,
    pub status: CellStatus,
}

/// Process-wide resident high-water mark (`VmHWM`), where the OS reports it.
pub fn peak_rss_bytes() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    let kb: u64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kb * 1024)
}

fn available_memory_bytes() -> Option<u64> {
    let info = std::fs::read_to_string("/proc/meminfo").ok()?;
    let line = info.lines().find(|l| l.starts_with("MemAvailable:"))?;
    let kb: u64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kb * 1024)
}

/// Rough peak bytes of one estimate: both clouds plus per-thread tree scratch.
pub fn estimated_bytes(n: usize, d: usize, k: usize, threads: usize) -> u64 {
    let per_tree = 2 * (3 * n * k + n) + 2 * (2 * n + 1) * 2;
    (8 * (2 * n * d + threads * (per_tree + 2 * n * d))) as u64
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let m = values.len() / 2;
    if values.len() % 2 == 1 {
        values[m]
    } else {
        0.5 * (values[m - 1] + values[m])
    }
}

fn gaussian_cloud(n: usize, d: usize, seed: u64, stream: u64) -> treeslice::Result<DiscreteMeasure> {
    let mut rng = stream_rng(seed, stream);
    DiscreteMeasure::uniform((0..n * d).map(|_| StandardNormal.sample(&mut rng)).collect(), d)
}

fn skeleton(method: TswMode, n: usize, d: usize, cfg: &DistanceConfig, repeats: usize) -> BenchRecord {
    BenchRecord {
        method,
        n,
        d,
        num_trees: cfg.num_trees,
        lines_per_tree: cfg.lines_per_tree,
        radius: matches!(method, TswMode::Circular).then_some(cfg.radius),
        gamma: match (method, cfg.spatial_map) {
            (TswMode::Spatial, SpatialMapConfig::OddPoly { gamma, .. }) => Some(gamma),
            _ => None,
        },
        median_seconds: f64::NAN,
        peak_rss_bytes: None,
        repeats,
        status: CellStatus::Skipped,
    }
}

/// Times every method on one pair of fresh Gaussian clouds. Methods take turns within
/// each repeat so that clock drift or background load hits them alike.
fn bench_size(
    methods: &[TswMode],
    n: usize,
    d: usize,
    cfg: &DistanceConfig,
    repeats: usize,
    warmup: usize,
    memory_limit: Option<u64>,
    seed: u64,
) -> Vec<BenchRecord> {
    let mut recs: Vec<BenchRecord> = methods.iter().map(|&m| skeleton(m, n, d, cfg, repeats)).collect();
    let threads = rayon::current_num_threads();
    if memory_limit.is_some_and(|lim| estimated_bytes(n, d, cfg.lines_per_tree, threads) > lim) {
        return recs;
    }
    let cell_stream = (n as u64) << 20 | (d as u64) << 4;
    let outcome = catch_unwind(AssertUnwindSafe(|| -> treeslice::Result<Vec<Vec<f64>>> {
        let mu = gaussian_cloud(n, d, seed, cell_stream)?;
        let nu = gaussian_cloud(n, d, seed, cell_stream + 1)?;
        for &m in methods {
            for _ in 0..warmup {
                estimate_tsw(&mu, &nu, cfg, m)?;
            }
        }
        let mut times = vec![Vec::with_capacity(repeats); methods.len()];
        for _ in 0..repeats {
            for (i, &m) in methods.iter().enumerate() {
                let t = Instant::now();
                let e = estimate_tsw(&mu, &nu, cfg, m)?;
                times[i].push(t.elapsed().as_secs_f64());
                std::hint::black_box(e.value);
            }
        }
        Ok(times)
    }));
    let rss = peak_rss_bytes();
    match outcome {
        Ok(Ok(times)) => {
            for (r, mut t) in recs.iter_mut().zip(times) {
                r.median_seconds = median(&mut t);
                r.status = CellStatus::Ok;
                r.peak_rss_bytes = rss;
            }
        }
        _ => recs.iter_mut().for_each(|r| {
            r.status = CellStatus::Failed;
            r.peak_rss_bytes = rss;
        }),
    }
    recs
}

/// Times one grid cell on fresh Gaussian clouds; the tree seed is fixed per cell.
pub fn bench_cell(
    method: TswMode,
    n: usize,
    d: usize,
    cfg: &DistanceConfig,
    repeats: usize,
    warmup: usize,
    memory_limit: Option<u64>,
    seed: u64,
) -> BenchRecord {
    bench_size(&[method], n, d, cfg, repeats, warmup, memory_limit, seed).remove(0)
}

/// Runs the grid; rows come out method-major.
pub fn bench_grid(section: &BenchSection, cfg: &DistanceConfig, seed: u64) -> Vec<BenchRecord> {
    let limit = section.memory_limit_bytes.or_else(|| available_memory_bytes().map(|b| b / 2));
    let mut out = Vec::new();
    for &d in &section.dims {
        for &n in &section.sizes {
            out.extend(bench_size(&section.methods, n, d, cfg, section.repeats, section.warmup, limit, seed));
        }
    }
    let key = |r: &BenchRecord| section.methods.iter().position(|m| *m == r.method);
    // stable: keeps the dims × sizes order within each method
    out.sort_by_key(key);
    out
}

/// Least-squares slope of `ln t` against `ln n` over the finished cells.
pub fn loglog_slope(points: &[(usize, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(n, t)| *n > 0 && t.is_finite() && *t > 0.0)
        .map(|(n, t)| ((*n as f64).ln(), t.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / pts.len() as f64;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / pts.len() as f64;
    let sxy: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = pts.iter().map(|(x, _)| (x - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

pub(crate) fn run(loaded: &LoadedConfig) -> Result<bool, RunError> {
    let c = &loaded.config;
    let section = c.bench.clone().unwrap_or_default();
    if section.repeats < 3 {
        return Err(loaded.error("bench.repeats", "must be at least 3").into());
    }
    if section.methods.is_empty() || section.sizes.is_empty() || section.dims.is_empty() {
        return Err(loaded.error("bench", "methods, sizes and dims must be non-empty").into());
    }
    if let Some(bad) = section.sizes.iter().chain(&section.dims).find(|v| **v == 0) {
        return Err(loaded.error("bench.sizes", format!("grid values must be positive, got {bad}")).into());
    }
    let mut cfg = c.distance.resolve(&DistanceConfig::default(), c.seed);
    if c.distance.spatial_map.is_none() {
        // spatial cells use the cubic map, the others ignore it
        cfg.spatial_map = SpatialMapConfig::CUBIC;
    }
    cfg.validate(None).map_err(|e| classify(loaded, e, "distance"))?;
    let records = bench_grid(&section, &cfg, c.seed);
    let mut out = CsvOutput::create(c.output.as_deref(), c, &BENCH_HEADER).map_err(|e| RunError::Runtime(e.to_string()))?;
    let opt = |v: Option<f64>| v.map(num).unwrap_or_default();
    for r in &records {
        out.row([
            r.method.name().to_string(),
            r.n.to_string(),
            r.d.to_string(),
            r.num_trees.to_string(),
            r.lines_per_tree.to_string(),
            opt(r.radius),
            opt(r.gamma),
            if r.status == CellStatus::Ok { num(r.median_seconds) } else { String::new() },
            r.peak_rss_bytes.map(|b| b.to_string()).unwrap_or_default(),
            r.repeats.to_string(),
            r.status.name().to_string(),
        ])
        .map_err(|e| RunError::Runtime(e.to_string()))?;
    }
    out.finish().map_err(|e| RunError::Runtime(e.to_string()))?;
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_odd_even() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 3.0, 2.0]), 2.5);
    }

    #[test]
    fn slope_of_power_law() {
        let pts: Vec<(usize, f64)> = [100usize, 200, 400, 800].iter().map(|&n| (n, 3e-6 * (n as f64).powf(1.2))).collect();
        assert!((loglog_slope(&pts).unwrap() - 1.2).abs() < 1e-12);
        assert_eq!(loglog_slope(&pts[..1]), None);
    }

    #[test]
    fn small_cell_runs_and_oversized_cell_is_skipped() {
        let cfg = DistanceConfig {
            num_trees: 3,
            ..Default::default()
        };
        let r = bench_cell(TswMode::Circular, 50, 3, &cfg, 3, 1, None, 0);
        assert_eq!(r.status, CellStatus::Ok);
        assert!(r.median_seconds > 0.0);
        assert_eq!(r.radius, Some(cfg.radius));
        let r = bench_cell(TswMode::DbLinear, 1 << 30, 1000, &cfg, 3, 1, Some(1 << 30), 0);
        assert_eq!(r.status, CellStatus::Skipped);
        assert!(r.median_seconds.is_nan());
    }

    #[test]
    fn peak_memory_is_reported_on_linux() {
        if cfg!(target_os = "linux") {
            assert!(peak_rss_bytes().unwrap() > 0);
        }
    }
}
