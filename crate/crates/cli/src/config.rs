//! Experiment manifests: one TOML file per run, validated before anything executes.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use treeslice::flows::{Dataset, FlowConfig, FlowMethod, GroundCost, Optimizer};
use treeslice::geometry::DirectionScheme;
use treeslice::projection::SpatialMapConfig;
use treeslice::splitting::SplitSign;
use treeslice::{DistanceConfig, TswMode};

/// Version tag written into every CSV comment line.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Distance,
    Flow,
    Bench,
    Selftest,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Distance => "distance",
            Command::Flow => "flow",
            Command::Bench => "bench",
            Command::Selftest => "selftest",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub command: Command,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    /// Worker threads for tree-parallel evaluation; results do not depend on it.
    #[serde(default, skip_serializing)]
    pub threads: Option<usize>,
    #[serde(default)]
    pub distance: DistanceSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flow: Option<FlowSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bench: Option<BenchSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selftest: Option<SelftestSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<DataSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<DataSpec>,
}

/// `[distance]`: the estimator and its parameters. Unset fields take command-specific
/// defaults (flows use L = 25 and the cubic map for `spatial`).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DistanceSection {
    pub method: Option<FlowMethod>,
    pub num_trees: Option<usize>,
    pub lines_per_tree: Option<usize>,
    pub radius: Option<f64>,
    pub root_std: Option<f64>,
    pub direction_scheme: Option<DirectionScheme>,
    pub splitting_sign: Option<SplitSign>,
    pub splitting_temperature: Option<f64>,
    pub spatial_map: Option<SpatialMapConfig>,
    pub sw_projections: Option<usize>,
}

impl DistanceSection {
    pub fn method(&self) -> FlowMethod {
        self.method.unwrap_or(FlowMethod::Spatial)
    }

    /// Merges the set fields over `base`.
    pub fn resolve(&self, base: &DistanceConfig, seed: u64) -> DistanceConfig {
        let method = self.method();
        let default_map = match method {
            FlowMethod::Spatial => SpatialMapConfig::CUBIC,
            _ => base.spatial_map,
        };
        DistanceConfig {
            num_trees: self.num_trees.unwrap_or(base.num_trees),
            lines_per_tree: self.lines_per_tree.unwrap_or(base.lines_per_tree),
            radius: self.radius.unwrap_or(base.radius),
            root_std: self.root_std.unwrap_or(base.root_std),
            direction_scheme: self.direction_scheme.unwrap_or(base.direction_scheme),
            splitting_sign: self.splitting_sign.unwrap_or(base.splitting_sign),
            splitting_temperature: self.splitting_temperature.unwrap_or(base.splitting_temperature),
            seed,
            spatial_map: self.spatial_map.unwrap_or(default_map),
        }
    }

    pub fn sw_projections(&self) -> usize {
        self.sw_projections.unwrap_or(100)
    }
}

/// `[flow]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowSection {
    pub learning_rate: f64,
    pub iterations: usize,
    pub optimizer: Optimizer,
    pub checkpoints: Vec<usize>,
    /// Evaluation cost; geodesic for spherical methods unless set.
    pub ground: Option<GroundCost>,
    pub log_floor: f64,
    /// Emit the `seconds_per_iter` column. Off makes the CSV reproducible byte for byte.
    pub timing: bool,
}

impl Default for FlowSection {
    fn default() -> Self {
        let f = FlowConfig::default();
        Self {
            learning_rate: f.learning_rate,
            iterations: f.iterations,
            optimizer: f.optimizer,
            checkpoints: f.checkpoints,
            ground: None,
            log_floor: f.log_floor,
            timing: true,
        }
    }
}

/// `[bench]`: a grid over method × n × d.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSection {
    pub methods: Vec<TswMode>,
    pub sizes: Vec<usize>,
    pub dims: Vec<usize>,
    /// Timed runs per cell; the median is reported.
    pub repeats: usize,
    /// Untimed runs before timing starts.
    pub warmup: usize,
    /// Cells whose estimated working set exceeds this are skipped.
    pub memory_limit_bytes: Option<u64>,
}

impl Default for BenchSection {
    fn default() -> Self {
        Self {
            methods: TswMode::ALL.to_vec(),
            sizes: vec![500, 1000, 5000, 10000],
            dims: vec![10],
            repeats: 10,
            warmup: 1,
            memory_limit_bytes: None,
        }
    }
}

/// `[selftest]`: instance counts per suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelftestSection {
    pub oracle_instances: usize,
    pub metric_triples: usize,
    pub invariance_draws: usize,
    pub gradient_instances: usize,
}

impl Default for SelftestSection {
    fn default() -> Self {
        Self {
            oracle_instances: 1000,
            metric_triples: 100,
            invariance_draws: 100,
            gradient_instances: 20,
        }
    }
}

/// Where a measure comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSpec {
    /// Explicit support points (rows), uniform weights unless given.
    Inline {
        points: Vec<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        weights: Option<Vec<f64>>,
    },
    Dataset {
        name: Dataset,
        n: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        kappa: Option<f64>,
    },
    /// `n` draws from N(0, I_dim).
    Gaussian { n: usize, dim: usize },
    /// `n` uniform points on the unit sphere of R^dim.
    UniformSphere { n: usize, dim: usize },
}

/// Config problem, reported as `path:line:col: message`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub path: PathBuf,
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}:{}: {}", self.path.display(), self.line, self.column, self.message)
    }
}

impl std::error::Error for ConfigError {}

/// Parsed config together with its source text, for anchoring later validation errors.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub path: PathBuf,
    pub source: String,
}

impl LoadedConfig {
    pub fn error(&self, field: &str, message: impl Into<String>) -> ConfigError {
        let (line, column) = locate_field(&self.source, field);
        ConfigError {
            path: self.path.clone(),
            line,
            column,
            message: format!("`{field}`: {}", message.into()),
        }
    }
}

pub fn load(path: &Path) -> Result<LoadedConfig, ConfigError> {
    let source = std::fs::read_to_string(path).map_err(|e| ConfigError {
        path: path.to_path_buf(),
        line: 0,
        column: 0,
        message: format!("cannot read config: {e}"),
    })?;
    parse(&source, path)
}

pub fn parse(source: &str, path: &Path) -> Result<LoadedConfig, ConfigError> {
    let config: ExperimentConfig = toml::from_str(source).map_err(|e| {
        let (line, column) = e
            .span()
            .map(|s| line_col(source, s.start))
            .unwrap_or((1, 1));
        ConfigError {
            path: path.to_path_buf(),
            line,
            column,
            message: e.message().trim().to_string(),
        }
    })?;
    Ok(LoadedConfig {
        config,
        path: path.to_path_buf(),
        source: source.to_string(),
    })
}

fn line_col(source: &str, offset: usize) -> (usize, usize) {
    let before = &source[..offset.min(source.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

/// Best-effort position of a dotted field (`distance.spatial_map.degree`) in TOML text:
/// the last `key =` whose enclosing table matches the prefix, else the table header,
/// else line 1.
pub fn locate_field(source: &str, field: &str) -> (usize, usize) {
    let parts: Vec<&str> = field.split('.').collect();
    let (key, scope) = parts.split_last().expect("split yields at least one part");
    let mut table = String::new();
    let mut fallback = None;
    let mut header = None;
    for (i, raw) in source.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("");
        let trimmed = line.trim();
        if trimmed.starts_with('[') {
            table = trimmed.trim_matches(|c| c == '[' || c == ']').trim().to_string();
            if header.is_none() && parts[0] == table {
                header = Some((i + 1, 1));
            }
            continue;
        }
        if let Some(col) = find_key(line, key) {
            let pos = (i + 1, col + 1);
            if scope.is_empty() || scope.iter().any(|p| table.split('.').any(|t| t == *p) || line.contains(p)) {
                return pos;
            }
            fallback.get_or_insert(pos);
        }
    }
    fallback.or(header).unwrap_or((1, 1))
}

/// Column of `key` used as a key (`key =` or `key=`) in `line`.
fn find_key(line: &str, key: &str) -> Option<usize> {
    let bytes = line.as_bytes();
    let mut from = 0;
    while let Some(pos) = line[from..].find(key) {
        let start = from + pos;
        let end = start + key.len();
        let boundary = start == 0 || !(bytes[start - 1].is_ascii_alphanumeric() || bytes[start - 1] == b'_');
        let rest = line[end..].trim_start();
        if boundary && rest.starts_with('=') && !rest.starts_with("==") {
            return Some(start);
        }
        from = end;
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_distance_config_parses() {
        let src = r#"
command = "distance"
seed = 3

[distance]
method = "circular"
num_trees = 10

[source]
kind = "inline"
points = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]

[target]
kind = "inline"
points = [[0.5, 0.5], [1.0, 1.0], [2.0, 0.0]]
"#;
        let c = parse(src, Path::new("x.toml")).unwrap().config;
        assert_eq!(c.command, Command::Distance);
        assert_eq!(c.distance.method(), FlowMethod::Circular);
        let d = c.distance.resolve(&DistanceConfig::default(), c.seed);
        assert_eq!((d.num_trees, d.lines_per_tree, d.seed), (10, 4, 3));
        assert!(matches!(c.source, Some(DataSpec::Inline { .. })));
    }

    #[test]
    fn unknown_keys_are_rejected_with_position() {
        let src = "command = \"flow\"\n\n[flow]\nlearning_rate = 0.1\nlearnin_rate = 0.2\n";
        let e = parse(src, Path::new("c.toml")).unwrap_err();
        assert_eq!(e.line, 5, "{e}");
        assert!(e.message.contains("learnin_rate"), "{e}");
        assert!(e.to_string().starts_with("c.toml:5:"));
    }

    #[test]
    fn spatial_defaults_to_the_cubic_map() {
        let s = DistanceSection {
            method: Some(FlowMethod::Spatial),
            ..Default::default()
        };
        assert_eq!(s.resolve(&DistanceConfig::default(), 0).spatial_map, SpatialMapConfig::CUBIC);
        let s = DistanceSection {
            method: Some(FlowMethod::DbLinear),
            ..Default::default()
        };
        assert_eq!(s.resolve(&DistanceConfig::default(), 0).spatial_map, SpatialMapConfig::Identity);
    }

    #[test]
    fn field_location() {
        let src = "command = \"distance\"\n[distance]\nmethod = \"spatial\"\nspatial_map = { kind = \"odd_poly\", degree = 4, gamma = 1.0 }\n";
        assert_eq!(locate_field(src, "distance.spatial_map.degree"), (4, 36));
        assert_eq!(locate_field(src, "distance.method").0, 3);
        assert_eq!(locate_field(src, "flow.iterations"), (1, 1));
        assert_eq!(find_key("a_degree = 1", "degree"), None);
    }

    #[test]
    fn round_trips_through_toml() {
        let c = ExperimentConfig {
            command: Command::Flow,
            seed: 9,
            output: Some("out.csv".into()),
            threads: Some(4),
            distance: DistanceSection {
                method: Some(FlowMethod::CircularR0),
                ..Default::default()
            },
            flow: Some(FlowSection::default()),
            bench: None,
            selftest: None,
            source: Some(DataSpec::Gaussian { n: 5, dim: 2 }),
            target: Some(DataSpec::Dataset {
                name: Dataset::Gaussians25,
                n: 5,
                kappa: None,
            }),
        };
        let text = toml::to_string(&c).unwrap();
        let back = parse(&text, Path::new("echo.toml")).unwrap().config;
        // threads never appear in echoes
        assert_eq!(back, ExperimentConfig { threads: None, ..c });
    }
}
