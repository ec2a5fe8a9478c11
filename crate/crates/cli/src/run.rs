//! Command execution: resolve a loaded config, build measures, run, write artifacts.

use std::path::PathBuf;

use treeslice::flows::{
    gaussian_source, make_dataset, make_dataset_with, run_flow_euclidean, run_flow_spherical, uniform_sphere_source,
    Dataset, FlowConfig, FlowMethod, GroundCost,
};
use treeslice::geometry::stream_rng;
use treeslice::{estimate_stsw, estimate_sw, estimate_tsw, DiscreteMeasure, DistanceConfig, Error, StswMode, TswMode};

use crate::bench;
use crate::config::{Command, ConfigError, DataSpec, ExperimentConfig, FlowSection, LoadedConfig};
use crate::output::{num, write_config_echo, CsvOutput};
use crate::selftest;

/// Environment variable giving the default worker-thread count.
pub const THREADS_ENV: &str = "TREESLICE_THREADS";

/// Stream ids of the source and target measures under the run seed.
const SOURCE_STREAM: u64 = 101;
const TARGET_STREAM: u64 = 102;

#[derive(Debug)]
pub enum RunError {
    /// Exit code 2.
    Config(ConfigError),
    /// Exit code 1.
    Runtime(String),
}

impl RunError {
    pub fn exit_code(&self) -> u8 {
        match self {
            RunError::Config(_) => 2,
            RunError::Runtime(_) => 1,
        }
    }
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunError::Config(e) => write!(f, "{e}"),
            RunError::Runtime(m) => write!(f, "error: {m}"),
        }
    }
}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        RunError::Config(e)
    }
}

fn runtime(e: impl std::fmt::Display) -> RunError {
    RunError::Runtime(e.to_string())
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub output: Option<PathBuf>,
    pub threads: Option<usize>,
}

/// What a finished run reports back.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub command: Command,
    pub output: Option<PathBuf>,
    /// `false` when a selftest suite failed.
    pub passed: bool,
}

pub fn apply_overrides(config: &mut ExperimentConfig, o: &Overrides) {
    if let Some(s) = o.seed {
        config.seed = s;
    }
    if let Some(p) = &o.output {
        config.output = Some(p.clone());
    }
    if let Some(t) = o.threads {
        config.threads = Some(t);
    }
}

/// Thread count: explicit value, else the environment variable, else rayon's default.
pub fn resolve_threads(explicit: Option<usize>) -> Option<usize> {
    explicit
        .or_else(|| std::env::var(THREADS_ENV).ok().and_then(|v| v.trim().parse().ok()))
        .filter(|t| *t > 0)
}

pub fn execute(loaded: &LoadedConfig, overrides: &Overrides) -> Result<RunSummary, RunError> {
    let mut loaded = loaded.clone();
    apply_overrides(&mut loaded.config, overrides);
    if loaded.config.threads == Some(0) {
        return Err(loaded.error("threads", "must be at least 1").into());
    }
    let pool = match resolve_threads(loaded.config.threads) {
        Some(t) => rayon::ThreadPoolBuilder::new().num_threads(t).build().map_err(runtime)?,
        None => rayon::ThreadPoolBuilder::new().build().map_err(runtime)?,
    };
    pool.install(|| dispatch(&loaded))
}

fn dispatch(loaded: &LoadedConfig) -> Result<RunSummary, RunError> {
    let c = &loaded.config;
    let passed = match c.command {
        Command::Distance => run_distance(loaded)?,
        Command::Flow => run_flow(loaded)?,
        Command::Bench => bench::run(loaded)?,
        Command::Selftest => selftest::run(loaded)?,
    };
    if let Some(out) = &c.output {
        write_config_echo(out, c).map_err(runtime)?;
    }
    Ok(RunSummary {
        command: c.command,
        output: c.output.clone(),
        passed,
    })
}

const DISTANCE_FIELDS: [&str; 9] = [
    "num_trees",
    "lines_per_tree",
    "radius",
    "root_std",
    "direction_scheme",
    "splitting_sign",
    "splitting_temperature",
    "spatial_map",
    "sw_projections",
];

/// Maps a library error onto the config file when it names a field, else a runtime error.
pub fn classify(loaded: &LoadedConfig, e: Error, section: &str) -> RunError {
    match e {
        Error::InvalidConfig { field, reason } => {
            let root = field.split('.').next().unwrap_or(field);
            let table = if DISTANCE_FIELDS.contains(&root) || root == "method" { "distance" } else { section };
            loaded.error(&format!("{table}.{field}"), reason).into()
        }
        Error::UnknownDataset(name) => loaded.error("name", format!("unknown dataset `{name}`")).into(),
        other => runtime(other),
    }
}

fn data_error(loaded: &LoadedConfig, which: &str, e: Error) -> RunError {
    match e {
        Error::InvalidConfig { .. } | Error::UnknownDataset(_) => classify(loaded, e, which),
        other => loaded.error(which, other.to_string()).into(),
    }
}

/// Builds a measure from its spec; `spherical` flags (and checks) unit-norm support.
pub fn build_measure(
    loaded: &LoadedConfig,
    spec: &DataSpec,
    which: &str,
    stream: u64,
    spherical: bool,
) -> Result<DiscreteMeasure, RunError> {
    let mut rng = stream_rng(loaded.config.seed, stream);
    let m = match spec {
        DataSpec::Inline { points, weights } => {
            if points.is_empty() {
                return Err(loaded.error(&format!("{which}.points"), "needs at least one point").into());
            }
            DiscreteMeasure::from_rows(points, weights.clone())
        }
        DataSpec::Dataset { name, n, kappa } => make_dataset_with(*name, *n, *kappa, &mut rng),
        DataSpec::Gaussian { n, dim } => gaussian_source(*n, *dim, &mut rng),
        DataSpec::UniformSphere { n, dim } => uniform_sphere_source(*n, *dim, &mut rng),
    }
    .map_err(|e| data_error(loaded, which, e))?;
    if spherical && !m.is_spherical() {
        return m.into_spherical().map_err(|e| data_error(loaded, which, e));
    }
    Ok(m)
}

fn required<'a>(loaded: &LoadedConfig, spec: &'a Option<DataSpec>, which: &str) -> Result<&'a DataSpec, RunError> {
    spec.as_ref().ok_or_else(|| {
        let mut e = loaded.error(which, format!("the `{}` command needs a [{which}] table", loaded.config.command.name()));
        e.line = 1;
        e.column = 1;
        RunError::Config(e)
    })
}

fn stsw_mode(method: FlowMethod) -> Option<StswMode> {
    match method {
        FlowMethod::Stsw => Some(StswMode::Plain),
        FlowMethod::SpatialStsw => Some(StswMode::Spatial),
        _ => None,
    }
}

fn tsw_mode(method: FlowMethod) -> Option<TswMode> {
    match method {
        FlowMethod::DbLinear => Some(TswMode::DbLinear),
        FlowMethod::Spatial => Some(TswMode::Spatial),
        FlowMethod::Circular => Some(TswMode::Circular),
        FlowMethod::CircularR0 => Some(TswMode::CircularR0),
        _ => None,
    }
}

pub const DISTANCE_HEADER: [&str; 8] =
    ["method", "n_source", "n_target", "dim", "num_trees", "lines_per_tree", "value", "std_error"];

fn run_distance(loaded: &LoadedConfig) -> Result<bool, RunError> {
    let c = &loaded.config;
    let method = c.distance.method();
    let spherical = method.is_spherical();
    let mu = build_measure(loaded, required(loaded, &c.source, "source")?, "source", SOURCE_STREAM, spherical)?;
    let nu = build_measure(loaded, required(loaded, &c.target, "target")?, "target", TARGET_STREAM, spherical)?;
    if mu.dim() != nu.dim() {
        return Err(loaded
            .error("target", format!("dimension {} differs from the source's {}", nu.dim(), mu.dim()))
            .into());
    }
    let cfg = c.distance.resolve(&DistanceConfig::default(), c.seed);
    cfg.validate(None).map_err(|e| classify(loaded, e, "distance"))?;
    let (estimate, trees, lines) = if let Some(mode) = tsw_mode(method) {
        let e = estimate_tsw(&mu, &nu, &cfg, mode).map_err(|e| classify(loaded, e, "distance"))?;
        (e, cfg.num_trees, cfg.lines_per_tree)
    } else if let Some(mode) = stsw_mode(method) {
        let e = estimate_stsw(&mu, &nu, &cfg, mode).map_err(|e| classify(loaded, e, "distance"))?;
        (e, cfg.num_trees, cfg.lines_per_tree)
    } else {
        let l = c.distance.sw_projections();
        if l == 0 {
            return Err(loaded.error("distance.sw_projections", "must be at least 1").into());
        }
        (estimate_sw(&mu, &nu, l, c.seed).map_err(runtime)?, l, 1)
    };
    let per = &estimate.per_tree_values;
    let std_error = if per.len() > 1 {
        let var = per.iter().map(|v| (v - estimate.value).powi(2)).sum::<f64>() / (per.len() - 1) as f64;
        (var / per.len() as f64).sqrt()
    } else {
        0.0
    };
    let mut out = CsvOutput::create(c.output.as_deref(), c, &DISTANCE_HEADER).map_err(runtime)?;
    out.row([
        method.name().to_string(),
        mu.len().to_string(),
        nu.len().to_string(),
        mu.dim().to_string(),
        trees.to_string(),
        lines.to_string(),
        num(estimate.value),
        num(std_error),
    ])
    .map_err(runtime)?;
    out.finish().map_err(runtime)?;
    Ok(true)
}

/// Resolved flow settings of a config.
pub fn flow_config(c: &ExperimentConfig) -> FlowConfig {
    let f = c.flow.clone().unwrap_or_default();
    let base = FlowConfig::default();
    let method = c.distance.method();
    FlowConfig {
        method,
        learning_rate: f.learning_rate,
        iterations: f.iterations,
        optimizer: f.optimizer,
        checkpoints: f.checkpoints,
        distance: c.distance.resolve(&base.distance, c.seed),
        sw_projections: c.distance.sw_projections(),
        ground: f.ground.unwrap_or(if method.is_spherical() {
            GroundCost::Geodesic
        } else {
            GroundCost::Euclidean
        }),
        log_floor: f.log_floor,
        eval_seed: c.seed,
    }
}

fn run_flow(loaded: &LoadedConfig) -> Result<bool, RunError> {
    let c = &loaded.config;
    let cfg = flow_config(c);
    let section: FlowSection = c.flow.clone().unwrap_or_default();
    cfg.validate().map_err(|e| classify(loaded, e, "flow"))?;
    let spherical = cfg.method.is_spherical();
    let default_target = if spherical {
        DataSpec::Dataset { name: Dataset::Vmf12, n: 2400, kappa: None }
    } else {
        DataSpec::Dataset { name: Dataset::Gaussians25, n: 500, kappa: None }
    };
    let nu = build_measure(loaded, c.target.as_ref().unwrap_or(&default_target), "target", TARGET_STREAM, spherical)?;
    let default_source = if spherical {
        DataSpec::UniformSphere { n: nu.len(), dim: nu.dim() }
    } else {
        DataSpec::Gaussian { n: nu.len(), dim: nu.dim() }
    };
    let mu = build_measure(loaded, c.source.as_ref().unwrap_or(&default_source), "source", SOURCE_STREAM, spherical)?;
    if mu.len() != nu.len() || mu.dim() != nu.dim() {
        return Err(loaded
            .error(
                "source",
                format!(
                    "flows need equal-size clouds of equal dimension, got {}×{} and {}×{}",
                    mu.len(),
                    mu.dim(),
                    nu.len(),
                    nu.dim()
                ),
            )
            .into());
    }
    let trace = if spherical {
        run_flow_spherical(&mu, &nu, &cfg)
    } else {
        run_flow_euclidean(&mu, &nu, &cfg)
    }
    .map_err(|e| classify(loaded, e, "flow"))?;

    let mut header = vec!["method", "iteration", "w2", "log_w2"];
    if section.timing {
        header.push("seconds_per_iter");
    }
    let mut out = CsvOutput::create(c.output.as_deref(), c, &header).map_err(runtime)?;
    for cp in &trace.checkpoints {
        let mut row = vec![
            cfg.method.name().to_string(),
            cp.iteration.to_string(),
            num(cp.w2),
            num(cp.log_w2),
        ];
        if section.timing {
            row.push(num(cp.seconds_per_iter));
        }
        out.row(row).map_err(runtime)?;
    }
    out.finish().map_err(runtime)?;
    Ok(true)
}

/// Dataset sample with the run's target stream, as the `flow` command draws it.
pub fn target_sample(seed: u64, name: Dataset, n: usize) -> treeslice::Result<DiscreteMeasure> {
    make_dataset(name, n, &mut stream_rng(seed, TARGET_STREAM))
}
